//! Central finite-difference checks for analytic gradients.

use rand::seq::index::sample;

use super::{forward, NetSpec, RecurrentState};
use crate::seed;

/// Relative error with a small absolute floor so that two near-zero
/// gradients compare as equal.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5)
}

/// Max relative error between `analytic` and central differences of `f`
/// at `x`.
///
/// `coords` limits the check to a seeded sample of that many coordinates.
pub fn central_difference_error(
    x: &[f64],
    analytic: &[f64],
    mut f: impl FnMut(&[f64]) -> f64,
    h: f64,
    coords: Option<(usize, u64)>,
) -> f64 {
    assert!(h > 0.0, "finite-difference step must be positive");
    assert_eq!(x.len(), analytic.len());
    let indices: Vec<usize> = match coords {
        Some((n, s)) if n < x.len() => {
            let mut idx = sample(&mut seed::rng(s), x.len(), n).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..x.len()).collect(),
    };
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in indices {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = f(&probe);
        probe[i] = orig - h;
        let down = f(&probe);
        probe[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}

/// Checks the parameter gradient of `loss(forward(params, input, state))`.
///
/// `loss` maps the network output to a scalar and its gradient with respect
/// to the output.
pub fn finite_diff_check(
    spec: &NetSpec,
    params: &[f64],
    input: &[f64],
    state: &RecurrentState,
    loss: impl Fn(&[f64]) -> (f64, Vec<f64>),
    h: f64,
    coords: Option<(usize, u64)>,
) -> f64 {
    let (out, _, tape) = forward(spec, params, input, state).expect("forward for gradient check");
    let (_, dout) = loss(&out);
    let analytic = tape.backward(&dout).params;
    central_difference_error(
        params,
        &analytic,
        |p| {
            let (o, _, _) = forward(spec, p, input, state).expect("forward for gradient check");
            loss(&o).0
        },
        h,
        coords,
    )
}

#[cfg(test)]
mod tests {
    use rand::Rng as _;

    use super::*;
    use crate::netcore::{Activation, LayerSpec, ParamVector};

    fn sq_loss(out: &[f64]) -> (f64, Vec<f64>) {
        let targets = [0.3, -0.2, 0.7];
        let l = out.iter().zip(&targets).map(|(o, t)| 0.5 * (o - t).powi(2)).sum();
        (l, out.iter().zip(&targets).map(|(o, t)| o - t).collect())
    }

    fn net() -> NetSpec {
        NetSpec::new(vec![
            LayerSpec::Dense { input: 4, output: 5, activation: Activation::Tanh },
            LayerSpec::Dense { input: 5, output: 5, activation: Activation::Tanh },
            LayerSpec::Dense { input: 5, output: 4, activation: Activation::Identity },
            LayerSpec::LstmCell { input: 4, hidden: 3 },
        ])
        .unwrap()
    }

    #[test]
    fn correct_gradients_pass() {
        let spec = net();
        let mut rng = seed::rng(11);
        for _ in 0..5 {
            let p = ParamVector::init(&spec, &mut rng);
            let input: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let st = RecurrentState {
                hidden: (0..3).map(|_| rng.gen_range(-0.5..0.5)).collect(),
                cell: (0..3).map(|_| rng.gen_range(-0.5..0.5)).collect(),
            };
            let err = finite_diff_check(&spec, &p, &input, &st, sq_loss, 1e-5, None);
            assert!(err <= 1e-4, "max relative error {err}");
        }
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let spec = net();
        let p = ParamVector::init(&spec, &mut seed::rng(2));
        let input = [0.4, -0.3, 0.9, 0.1];
        let st = spec.zero_state();
        let (out, _, tape) = forward(&spec, &p, &input, &st).unwrap();
        let mut analytic = tape.backward(&sq_loss(&out).1).params;
        let i = analytic.iter().position(|g| g.abs() > 1e-3).unwrap();
        analytic[i] *= 1.5;
        let err = central_difference_error(
            &p,
            &analytic,
            |q| sq_loss(&forward(&spec, q, &input, &st).unwrap().0).0,
            1e-5,
            None,
        );
        assert!(err > 1e-2, "{err}");
    }

    #[test]
    fn empty_parameter_vector_has_zero_error() {
        assert_eq!(central_difference_error(&[], &[], |_| 1.0, 1e-5, None), 0.0);
    }

    #[test]
    fn sampled_coordinates_subset() {
        let x = vec![1.0; 50];
        let analytic = vec![2.0; 50];
        let err = central_difference_error(&x, &analytic, |v| v.iter().map(|a| 2.0 * a).sum(), 1e-5, Some((10, 1)));
        assert!(err < 1e-8);
    }
}
