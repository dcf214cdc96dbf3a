use super::NetError;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moment estimates for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update, in place.
///
/// Rejects non-finite gradients without touching `params` or `state`.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<(), NetError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(NetError::Dimension(format!(
            "adam: {} params, {} grads, state for {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(NetError::NonFinite("gradients"));
    }
    state.t += 1;
    let bc1 = 1.0 - ADAM_BETA1.powf(state.t as f64);
    let bc2 = 1.0 - ADAM_BETA2.powf(state.t as f64);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_leave_params_unchanged() {
        let mut p = vec![0.3, -1.2, 4.0];
        let mut st = AdamState::new(3);
        adam_step(&mut p, &[0.0; 3], &mut st, 0.1).unwrap();
        assert_eq!(p, vec![0.3, -1.2, 4.0]);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut p = vec![1.0, 1.0, 1.0];
        let mut st = AdamState::new(3);
        adam_step(&mut p, &[2.5, -0.01, 100.0], &mut st, 0.01).unwrap();
        assert!((p[0] - 0.99).abs() < 1e-6);
        assert!((p[1] - 1.01).abs() < 1e-5);
        assert!((p[2] - 0.99).abs() < 1e-6);
    }

    #[test]
    fn minimises_square() {
        let mut w = vec![1.0];
        let mut st = AdamState::new(1);
        for _ in 0..100 {
            let g = [2.0 * w[0]];
            adam_step(&mut w, &g, &mut st, 0.1).unwrap();
        }
        assert!(w[0].abs() < 0.1, "w = {}", w[0]);
    }

    #[test]
    fn rejects_non_finite_gradients() {
        let mut p = vec![1.0];
        let mut st = AdamState::new(1);
        assert!(adam_step(&mut p, &[f64::INFINITY], &mut st, 0.1).is_err());
        assert_eq!(p, vec![1.0]);
        assert_eq!(st.steps(), 0);
        assert!(adam_step(&mut p, &[1.0, 2.0], &mut st, 0.1).is_err());
    }
}
