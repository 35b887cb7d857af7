use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::predictor::input::ModelInput;
use crate::predictor::lstm::LstmParams;
use crate::rng::rng_for;

/// Gradients smaller than this are compared in absolute terms.
const GRADIENT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    /// Parameter index where the worst disagreement occurred.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Compares the analytic gradient with central finite differences on a
/// random subsample of `n_samples` parameters (all of them if `None`).
pub fn gradient_check(
    params: &LstmParams,
    input: &ModelInput,
    label: bool,
    epsilon: f64,
    n_samples: Option<usize>,
    seed: u64,
) -> Result<GradientCheck> {
    if !(1e-6..=1e-3).contains(&epsilon) {
        return Err(Error::InvalidConfig(format!(
            "epsilon must lie in [1e-6, 1e-3], got {epsilon}"
        )));
    }
    params.check_input(input)?;
    let n = params.n_params();
    let mut grad = vec![0.0; n];
    params.accumulate_gradient(input, label, &mut grad);

    let indices: Vec<usize> = match n_samples {
        Some(k) if k < n => {
            let mut idx = sample(&mut rng_for(seed, &[0x6c]), n, k).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..n).collect(),
    };

    let mut probe = params.clone();
    let mut worst = GradientCheck {
        max_relative_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: indices.len(),
    };
    for &i in &indices {
        let orig = probe.theta()[i];
        probe.theta_mut()[i] = orig + epsilon;
        let plus = probe.loss(input, label);
        probe.theta_mut()[i] = orig - epsilon;
        let minus = probe.loss(input, label);
        probe.theta_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let rel = relative_error(grad[i], numeric);
        if rel > worst.max_relative_error {
            worst.max_relative_error = rel;
            worst.worst_index = i;
            worst.analytic = grad[i];
            worst.numeric = numeric;
        }
    }
    Ok(worst)
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRADIENT_FLOOR)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::input::{Step, StepEntry};
    use crate::predictor::lstm::LstmShape;

    fn two_step_input() -> ModelInput {
        ModelInput {
            statics: vec![0.4, 1.0, 0.0],
            steps: vec![
                Step {
                    time: 0.0,
                    entries: vec![
                        StepEntry { variable: 0, value: 0.8, age: 2.0 },
                        StepEntry { variable: 2, value: -1.1, age: 2.0 },
                    ],
                },
                Step {
                    time: 1.5,
                    entries: vec![StepEntry { variable: 1, value: 0.3, age: 0.5 }],
                },
            ],
        }
    }

    fn tiny(layers: usize) -> LstmParams {
        let shape = LstmShape {
            n_variables: 3,
            static_dim: 3,
            embed_dim: 4,
            hidden_dim: 4,
            layers,
            attention_dim: 4,
        };
        LstmParams::init(shape, vec![8.0, 8.0, 24.0], 99).unwrap()
    }

    #[test]
    fn full_gradient_matches_finite_differences() {
        for layers in [1, 2] {
            let p = tiny(layers);
            for label in [false, true] {
                let r = gradient_check(&p, &two_step_input(), label, 1e-5, None, 0).unwrap();
                assert!(r.max_relative_error < 1e-4, "layers={layers}: {r:?}");
            }
        }
    }

    #[test]
    fn head_bias_gradient_is_p_minus_y() {
        let mut p = tiny(1);
        p.zero_head();
        let input = two_step_input();
        let mut grad = vec![0.0; p.n_params()];
        p.accumulate_gradient(&input, true, &mut grad);
        assert_eq!(grad[p.head_bias_index()], 0.5 - 1.0);
        let mut grad = vec![0.0; p.n_params()];
        p.accumulate_gradient(&input, false, &mut grad);
        assert_eq!(grad[p.head_bias_index()], 0.5);
    }

    #[test]
    fn epsilon_out_of_range_rejected() {
        let p = tiny(1);
        assert!(gradient_check(&p, &two_step_input(), true, 1e-2, None, 0).is_err());
        assert!(gradient_check(&p, &two_step_input(), true, 1e-8, None, 0).is_err());
    }

    #[test]
    fn empty_sequence_gradient() {
        let p = tiny(2);
        let input = ModelInput { statics: vec![1.0, 0.0, 1.0], steps: vec![] };
        let r = gradient_check(&p, &input, true, 1e-5, None, 0).unwrap();
        assert!(r.max_relative_error < 1e-4, "{r:?}");
    }
}
