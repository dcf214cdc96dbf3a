//! Minimal differentiable networks: dense layers and one LSTM cell.
//!
//! A forward pass records a [`Tape`] that borrows the parameters it ran
//! with; [`Tape::backward`] turns an output gradient into exact parameter,
//! input and recurrent-state gradients. Everything is `f64`.

mod adam;
mod checkpoint;
mod gradcheck;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
pub use gradcheck::{central_difference_error, finite_diff_check, relative_error};

use std::ops::{Deref, DerefMut};

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid network spec: {0}")]
    Spec(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense { input: usize, output: usize, activation: Activation },
    LstmCell { input: usize, hidden: usize },
}

impl LayerSpec {
    pub fn input_dim(&self) -> usize {
        match *self {
            LayerSpec::Dense { input, .. } | LayerSpec::LstmCell { input, .. } => input,
        }
    }

    pub fn output_dim(&self) -> usize {
        match *self {
            LayerSpec::Dense { output, .. } => output,
            LayerSpec::LstmCell { hidden, .. } => hidden,
        }
    }

    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Dense { input, output, .. } => output * input + output,
            LayerSpec::LstmCell { input, hidden } => 4 * hidden * (input + hidden) + 4 * hidden,
        }
    }
}

/// An ordered stack of layers with compatible dimensions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<LayerSpec>", into = "Vec<LayerSpec>")]
pub struct NetSpec {
    layers: Vec<LayerSpec>,
    offsets: Vec<usize>,
}

impl TryFrom<Vec<LayerSpec>> for NetSpec {
    type Error = NetError;

    fn try_from(layers: Vec<LayerSpec>) -> Result<Self, NetError> {
        NetSpec::new(layers)
    }
}

impl From<NetSpec> for Vec<LayerSpec> {
    fn from(spec: NetSpec) -> Self {
        spec.layers
    }
}

impl NetSpec {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self, NetError> {
        if layers.is_empty() {
            return Err(NetError::Spec("no layers".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(NetError::Spec(format!(
                    "layer output {} feeds layer input {}",
                    pair[0].output_dim(),
                    pair[1].input_dim()
                )));
            }
        }
        let lstm_count = layers.iter().filter(|l| matches!(l, LayerSpec::LstmCell { .. })).count();
        if lstm_count > 1 {
            return Err(NetError::Spec("at most one lstm_cell per network".into()));
        }
        if layers.iter().any(|l| l.input_dim() == 0 || l.output_dim() == 0) {
            return Err(NetError::Spec("zero-width layer".into()));
        }
        let mut offsets = Vec::with_capacity(layers.len() + 1);
        let mut acc = 0;
        for l in &layers {
            offsets.push(acc);
            acc += l.param_count();
        }
        offsets.push(acc);
        Ok(Self { layers, offsets })
    }

    /// Dense stack with `activation` on hidden layers and `output_activation` last.
    pub fn mlp(dims: &[usize], activation: Activation, output_activation: Activation) -> Result<Self, NetError> {
        if dims.len() < 2 {
            return Err(NetError::Spec("mlp needs at least input and output dims".into()));
        }
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|i| LayerSpec::Dense {
                input: dims[i],
                output: dims[i + 1],
                activation: if i + 1 == n { output_activation } else { activation },
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.offsets[self.layers.len()]
    }

    /// Hidden size of the LSTM cell, or 0 when the network is feed-forward.
    pub fn recurrent_size(&self) -> usize {
        self.layers
            .iter()
            .find_map(|l| match *l {
                LayerSpec::LstmCell { hidden, .. } => Some(hidden),
                _ => None,
            })
            .unwrap_or(0)
    }

    fn layer_params<'p>(&self, params: &'p [f64], i: usize) -> &'p [f64] {
        &params[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn zero_state(&self) -> RecurrentState {
        RecurrentState::zeros(self.recurrent_size())
    }
}

/// Flat parameter storage for one [`NetSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn zeros(spec: &NetSpec) -> Self {
        Self(vec![0.0; spec.param_count()])
    }

    pub fn from_vec(spec: &NetSpec, values: Vec<f64>) -> Result<Self, NetError> {
        if values.len() != spec.param_count() {
            return Err(NetError::Dimension(format!(
                "{} parameters for a spec that needs {}",
                values.len(),
                spec.param_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(NetError::NonFinite("parameters"));
        }
        Ok(Self(values))
    }

    /// Glorot-uniform weights, zero biases; LSTM forget-gate bias starts at 1.
    pub fn init(spec: &NetSpec, rng: &mut seed::Rng) -> Self {
        let mut values = Vec::with_capacity(spec.param_count());
        for layer in spec.layers() {
            match *layer {
                LayerSpec::Dense { input, output, .. } => {
                    let limit = (6.0 / (input + output) as f64).sqrt();
                    values.extend((0..input * output).map(|_| rng.gen_range(-limit..limit)));
                    values.extend(std::iter::repeat(0.0).take(output));
                }
                LayerSpec::LstmCell { input, hidden } => {
                    let limit = 1.0 / (hidden as f64).sqrt();
                    values.extend((0..4 * hidden * (input + hidden)).map(|_| rng.gen_range(-limit..limit)));
                    for gate in 0..4 {
                        let b = if gate == 1 { 1.0 } else { 0.0 };
                        values.extend(std::iter::repeat(b).take(hidden));
                    }
                }
            }
        }
        Self(values)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState {
    pub hidden: Vec<f64>,
    pub cell: Vec<f64>,
}

impl RecurrentState {
    pub fn zeros(size: usize) -> Self {
        Self { hidden: vec![0.0; size], cell: vec![0.0; size] }
    }

    pub fn size(&self) -> usize {
        self.hidden.len()
    }

    pub fn is_zero(&self) -> bool {
        self.hidden.iter().chain(&self.cell).all(|&v| v == 0.0)
    }
}

/// Dot product with four independent accumulators.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out = bias + W x` with `W` row-major `rows x x.len()`.
fn affine(weights: &[f64], bias: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        *o = bias[r] + dot(&weights[r * cols..(r + 1) * cols], x);
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone)]
enum LayerTape {
    Dense {
        input: Vec<f64>,
        output: Vec<f64>,
    },
    Lstm {
        input: Vec<f64>,
        h_prev: Vec<f64>,
        c_prev: Vec<f64>,
        /// Gate activations laid out `[i | f | g | o]`.
        gates: Vec<f64>,
        tanh_c: Vec<f64>,
        output: Vec<f64>,
    },
}

/// Record of one forward pass; borrows the spec and parameters it ran with.
#[derive(Debug, Clone)]
pub struct Tape<'a> {
    spec: &'a NetSpec,
    params: &'a [f64],
    layers: Vec<LayerTape>,
}

/// Result of [`Tape::backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
    pub state: RecurrentState,
}

/// Runs the network on one input.
///
/// Networks without an LSTM cell take and return a zero-size state.
pub fn forward<'a>(
    spec: &'a NetSpec,
    params: &'a [f64],
    input: &[f64],
    state: &RecurrentState,
) -> Result<(Vec<f64>, RecurrentState, Tape<'a>), NetError> {
    if params.len() != spec.param_count() {
        return Err(NetError::Dimension(format!(
            "{} parameters for a spec that needs {}",
            params.len(),
            spec.param_count()
        )));
    }
    if input.len() != spec.input_dim() {
        return Err(NetError::Dimension(format!("input has {} values, network expects {}", input.len(), spec.input_dim())));
    }
    if input.iter().any(|v| !v.is_finite()) {
        return Err(NetError::NonFinite("network input"));
    }
    if state.size() != spec.recurrent_size() || state.cell.len() != state.hidden.len() {
        return Err(NetError::Dimension(format!(
            "recurrent state of size {}, network has {}",
            state.size(),
            spec.recurrent_size()
        )));
    }
    let mut x = input.to_vec();
    let mut new_state = state.clone();
    let mut tapes = Vec::with_capacity(spec.layers.len());
    for (li, layer) in spec.layers.iter().enumerate() {
        let p = spec.layer_params(params, li);
        match *layer {
            LayerSpec::Dense { input, output, activation } => {
                let (w, b) = p.split_at(output * input);
                let mut y = vec![0.0; output];
                affine(w, b, &x, &mut y);
                for v in &mut y {
                    *v = activation.apply(*v);
                }
                tapes.push(LayerTape::Dense { input: std::mem::take(&mut x), output: y.clone() });
                x = y;
            }
            LayerSpec::LstmCell { input, hidden } => {
                let h4 = 4 * hidden;
                let (wx, rest) = p.split_at(h4 * input);
                let (wh, b) = rest.split_at(h4 * hidden);
                let mut z = vec![0.0; h4];
                affine(wx, b, &x, &mut z);
                for (r, zr) in z.iter_mut().enumerate() {
                    *zr += dot(&wh[r * hidden..(r + 1) * hidden], &state.hidden);
                }
                let mut gates = z;
                for (k, g) in gates.iter_mut().enumerate() {
                    *g = if (2 * hidden..3 * hidden).contains(&k) { g.tanh() } else { sigmoid(*g) };
                }
                let mut c = vec![0.0; hidden];
                let mut tanh_c = vec![0.0; hidden];
                let mut h = vec![0.0; hidden];
                for j in 0..hidden {
                    let (gi, gf, gg, go) = (gates[j], gates[hidden + j], gates[2 * hidden + j], gates[3 * hidden + j]);
                    c[j] = gf * state.cell[j] + gi * gg;
                    tanh_c[j] = c[j].tanh();
                    h[j] = go * tanh_c[j];
                }
                tapes.push(LayerTape::Lstm {
                    input: std::mem::take(&mut x),
                    h_prev: state.hidden.clone(),
                    c_prev: state.cell.clone(),
                    gates,
                    tanh_c,
                    output: h.clone(),
                });
                new_state = RecurrentState { hidden: h.clone(), cell: c };
                x = h;
            }
        }
    }
    Ok((x, new_state, Tape { spec, params, layers: tapes }))
}

impl<'a> Tape<'a> {
    pub fn spec(&self) -> &NetSpec {
        self.spec
    }

    /// Post-activation output of layer `i`.
    pub fn layer_output(&self, i: usize) -> &[f64] {
        match &self.layers[i] {
            LayerTape::Dense { output, .. } | LayerTape::Lstm { output, .. } => output,
        }
    }

    pub fn backward(&self, output_grad: &[f64]) -> Gradients {
        let mut params = vec![0.0; self.spec.param_count()];
        let (input, state) = self.backward_accumulate(output_grad, None, &mut params);
        Gradients { params, input, state }
    }

    /// Accumulates parameter gradients into `param_grads` and returns the
    /// gradients for the input and the incoming recurrent state.
    ///
    /// `next_state_grad` is the gradient flowing back from later time steps
    /// into this step's outgoing state.
    pub fn backward_accumulate(
        &self,
        output_grad: &[f64],
        next_state_grad: Option<&RecurrentState>,
        param_grads: &mut [f64],
    ) -> (Vec<f64>, RecurrentState) {
        assert_eq!(output_grad.len(), self.spec.output_dim(), "output gradient size");
        assert_eq!(param_grads.len(), self.spec.param_count(), "parameter gradient size");
        let mut delta = output_grad.to_vec();
        let mut state_grad = self.spec.zero_state();
        for (li, layer) in self.spec.layers.iter().enumerate().rev() {
            let p = self.spec.layer_params(self.params, li);
            let g = &mut param_grads[self.spec.offsets[li]..self.spec.offsets[li + 1]];
            match (*layer, &self.layers[li]) {
                (LayerSpec::Dense { input: n_in, output: n_out, activation }, LayerTape::Dense { input, output }) => {
                    for (d, y) in delta.iter_mut().zip(output) {
                        *d *= activation.derivative_from_output(*y);
                    }
                    let (w, _) = p.split_at(n_out * n_in);
                    let (gw, gb) = g.split_at_mut(n_out * n_in);
                    let mut dx = vec![0.0; n_in];
                    for r in 0..n_out {
                        let d = delta[r];
                        if d == 0.0 {
                            continue;
                        }
                        gb[r] += d;
                        axpy(d, input, &mut gw[r * n_in..(r + 1) * n_in]);
                        axpy(d, &w[r * n_in..(r + 1) * n_in], &mut dx);
                    }
                    delta = dx;
                }
                (LayerSpec::LstmCell { input: n_in, hidden }, LayerTape::Lstm { input, h_prev, c_prev, gates, tanh_c, .. }) => {
                    let h4 = 4 * hidden;
                    let mut dh = delta;
                    let mut dc = vec![0.0; hidden];
                    if let Some(next) = next_state_grad {
                        axpy(1.0, &next.hidden, &mut dh);
                        dc.copy_from_slice(&next.cell);
                    }
                    let mut dz = vec![0.0; h4];
                    let mut dc_prev = vec![0.0; hidden];
                    for j in 0..hidden {
                        let (gi, gf, gg, go) = (gates[j], gates[hidden + j], gates[2 * hidden + j], gates[3 * hidden + j]);
                        let d_o = dh[j] * tanh_c[j];
                        let dcj = dc[j] + dh[j] * go * (1.0 - tanh_c[j] * tanh_c[j]);
                        let d_i = dcj * gg;
                        let d_f = dcj * c_prev[j];
                        let d_g = dcj * gi;
                        dc_prev[j] = dcj * gf;
                        dz[j] = d_i * gi * (1.0 - gi);
                        dz[hidden + j] = d_f * gf * (1.0 - gf);
                        dz[2 * hidden + j] = d_g * (1.0 - gg * gg);
                        dz[3 * hidden + j] = d_o * go * (1.0 - go);
                    }
                    let (wx, rest) = p.split_at(h4 * n_in);
                    let (wh, _) = rest.split_at(h4 * hidden);
                    let (gwx, grest) = g.split_at_mut(h4 * n_in);
                    let (gwh, gb) = grest.split_at_mut(h4 * hidden);
                    let mut dx = vec![0.0; n_in];
                    let mut dh_prev = vec![0.0; hidden];
                    for r in 0..h4 {
                        let d = dz[r];
                        if d == 0.0 {
                            continue;
                        }
                        gb[r] += d;
                        axpy(d, input, &mut gwx[r * n_in..(r + 1) * n_in]);
                        axpy(d, h_prev, &mut gwh[r * hidden..(r + 1) * hidden]);
                        axpy(d, &wx[r * n_in..(r + 1) * n_in], &mut dx);
                        axpy(d, &wh[r * hidden..(r + 1) * hidden], &mut dh_prev);
                    }
                    state_grad = RecurrentState { hidden: dh_prev, cell: dc_prev };
                    delta = dx;
                }
                _ => unreachable!("tape layout matches spec"),
            }
        }
        (delta, state_grad)
    }
}
