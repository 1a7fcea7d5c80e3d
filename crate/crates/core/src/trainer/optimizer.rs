use serde::{Deserialize, Serialize};

use crate::config::{OptimizerKind, TrainConfig};

/// Per-parameter optimizer accumulators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub steps_taken: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, num_params: usize) -> Self {
        let n = match kind {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Adam => num_params,
        };
        Self {
            kind,
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
            steps_taken: 0,
        }
    }

    /// Applies one descent step to `params` in place.
    pub fn apply(&mut self, params: &mut [f64], grad: &[f64], config: &TrainConfig) {
        let lr = config.effective_learning_rate();
        self.steps_taken += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2) = (config.adam_beta1, config.adam_beta2);
                let t = self.steps_taken as i32;
                let c1 = 1.0 - b1.powi(t);
                let c2 = 1.0 - b2.powi(t);
                for i in 0..params.len() {
                    let g = grad[i];
                    self.first_moment[i] = b1 * self.first_moment[i] + (1.0 - b1) * g;
                    self.second_moment[i] = b2 * self.second_moment[i] + (1.0 - b2) * g * g;
                    let m = self.first_moment[i] / c1;
                    let v = self.second_moment[i] / c2;
                    params[i] -= lr * m / (v.sqrt() + config.adam_eps);
                }
            }
        }
    }
}
