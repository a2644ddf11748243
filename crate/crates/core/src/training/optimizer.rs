//! Parameter update rules.

use serde::{Deserialize, Serialize};

use super::backend::{ParamGroup, ParamTensor};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWParams {
    fn default() -> Self {
        AdamWParams {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Clone, Debug)]
enum State {
    AdamW {
        params: AdamWParams,
        m: Vec<Vec<f64>>,
        v: Vec<Vec<f64>>,
        steps: Vec<u64>,
    },
    Sgd {
        weight_decay: f64,
    },
}

/// Optimizer selected by name: `"adamw"` or `"sgd"`.
#[derive(Clone, Debug)]
pub struct Optimizer {
    learning_rate: f64,
    state: State,
}

impl Optimizer {
    pub fn new(name: &str, learning_rate: f64, weight_decay: f64, params: &[ParamTensor]) -> Result<Self> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be finite and non-negative, got {learning_rate}")));
        }
        let state = match name.to_ascii_lowercase().as_str() {
            "adamw" => State::AdamW {
                params: AdamWParams {
                    weight_decay,
                    ..AdamWParams::default()
                },
                m: params.iter().map(|p| vec![0.0; p.values.len()]).collect(),
                v: params.iter().map(|p| vec![0.0; p.values.len()]).collect(),
                steps: vec![0; params.len()],
            },
            "sgd" => State::Sgd { weight_decay },
            other => return Err(Error::Config(format!("unknown optimizer {other:?} (expected adamw or sgd)"))),
        };
        Ok(Optimizer { learning_rate, state })
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    /// Applies one update; tensors in `frozen` groups and their moments are left untouched.
    pub fn step(&mut self, params: &mut [ParamTensor], grads: &[Vec<f64>], frozen: &[ParamGroup]) {
        let lr = self.learning_rate;
        for (i, (param, grad)) in params.iter_mut().zip(grads).enumerate() {
            if frozen.contains(&param.group) {
                continue;
            }
            match &mut self.state {
                State::AdamW { params: hp, m, v, steps } => {
                    steps[i] += 1;
                    let t = steps[i] as i32;
                    let bc1 = 1.0 - hp.beta1.powi(t);
                    let bc2 = 1.0 - hp.beta2.powi(t);
                    for (j, (p, g)) in param.values.iter_mut().zip(grad).enumerate() {
                        m[i][j] = hp.beta1 * m[i][j] + (1.0 - hp.beta1) * g;
                        v[i][j] = hp.beta2 * v[i][j] + (1.0 - hp.beta2) * g * g;
                        let m_hat = m[i][j] / bc1;
                        let v_hat = v[i][j] / bc2;
                        *p -= lr * (m_hat / (v_hat.sqrt() + hp.eps) + hp.weight_decay * *p);
                    }
                }
                State::Sgd { weight_decay } => {
                    for (p, g) in param.values.iter_mut().zip(grad) {
                        *p -= lr * (g + *weight_decay * *p);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(group: ParamGroup, values: Vec<f64>) -> ParamTensor {
        ParamTensor {
            name: "t".into(),
            group,
            values,
        }
    }

    #[test]
    fn first_adamw_step_moves_by_lr() {
        // With zero decay the bias-corrected first step is lr * sign(g).
        let mut params = vec![tensor(ParamGroup::Head, vec![1.0, -2.0])];
        let mut opt = Optimizer::new("adamw", 0.1, 0.0, &params).unwrap();
        opt.step(&mut params, &[vec![3.0, -0.5]], &[]);
        assert!((params[0].values[0] - 0.9).abs() < 1e-6);
        assert!((params[0].values[1] + 1.9).abs() < 1e-6);
    }

    #[test]
    fn decoupled_weight_decay() {
        let mut params = vec![tensor(ParamGroup::Head, vec![2.0])];
        let mut opt = Optimizer::new("adamw", 0.5, 0.1, &params).unwrap();
        opt.step(&mut params, &[vec![0.0]], &[]);
        assert!((params[0].values[0] - (2.0 - 0.5 * 0.1 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn frozen_and_zero_lr_leave_values() {
        let mut params = vec![
            tensor(ParamGroup::Backbone, vec![1.0, 2.0]),
            tensor(ParamGroup::Head, vec![3.0]),
        ];
        let mut opt = Optimizer::new("adamw", 0.01, 0.01, &params).unwrap();
        opt.step(&mut params, &[vec![1.0, 1.0], vec![1.0]], &[ParamGroup::Backbone]);
        assert_eq!(params[0].values, vec![1.0, 2.0]);
        assert_ne!(params[1].values, vec![3.0]);

        let before = params.clone();
        let mut still = Optimizer::new("sgd", 0.0, 0.01, &params).unwrap();
        still.step(&mut params, &[vec![5.0, 5.0], vec![5.0]], &[]);
        assert_eq!(params, before);
    }

    #[test]
    fn rejects_unknown_name() {
        assert!(Optimizer::new("lion", 0.1, 0.0, &[]).is_err());
        assert!(Optimizer::new("adamw", -1.0, 0.0, &[]).is_err());
    }
}
