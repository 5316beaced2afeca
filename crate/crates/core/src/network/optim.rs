use serde::{Deserialize, Serialize};

use super::{Gradients, TrainedModel};
use crate::error::{Error, Result};

/// Gradient-based update rule. The learning rate comes from the schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Optimizer {
    Sgd { momentum: f64 },
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn sgd(momentum: f64) -> Self {
        Optimizer::Sgd { momentum }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Optimizer::Sgd { momentum } if !(0.0..1.0).contains(&momentum) => Err(Error::InvalidConfig(format!(
                "momentum must lie in [0, 1), got {momentum}"
            ))),
            Optimizer::Adam { beta1, beta2, epsilon }
                if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && epsilon > 0.0) =>
            {
                Err(Error::InvalidConfig("Adam needs beta1, beta2 in [0, 1) and epsilon > 0".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Mutable optimizer state, one buffer per parameter tensor.
pub(crate) struct OptimizerState {
    rule: Optimizer,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    steps: i32,
}

impl OptimizerState {
    pub(crate) fn new(rule: Optimizer, model: &TrainedModel) -> Self {
        let shapes: Vec<usize> = model
            .weights
            .iter()
            .map(|w| w.data().len())
            .chain(model.biases.iter().map(|b| b.len()))
            .collect();
        let zeros = || shapes.iter().map(|&n| vec![0.0; n]).collect::<Vec<_>>();
        let second = match rule {
            Optimizer::Adam { .. } => zeros(),
            Optimizer::Sgd { .. } => Vec::new(),
        };
        Self {
            rule,
            first: zeros(),
            second,
            steps: 0,
        }
    }

    pub(crate) fn step(&mut self, model: &mut TrainedModel, grads: &Gradients, lr: f64) {
        self.steps += 1;
        let params = model
            .weights
            .iter_mut()
            .map(|w| w.data_mut())
            .chain(model.biases.iter_mut().map(|b| &mut b[..]));
        let gs = grads
            .weights
            .iter()
            .map(|w| w.data())
            .chain(grads.biases.iter().map(|b| &b[..]));
        match self.rule {
            Optimizer::Sgd { momentum } => {
                for ((p, g), v) in params.zip(gs).zip(self.first.iter_mut()) {
                    for ((pi, gi), vi) in p.iter_mut().zip(g).zip(v.iter_mut()) {
                        *vi = momentum * *vi - lr * gi;
                        *pi += *vi;
                    }
                }
            }
            Optimizer::Adam { beta1, beta2, epsilon } => {
                let c1 = 1.0 - beta1.powi(self.steps);
                let c2 = 1.0 - beta2.powi(self.steps);
                for (((p, g), m), v) in params.zip(gs).zip(self.first.iter_mut()).zip(self.second.iter_mut()) {
                    for (((pi, gi), mi), vi) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *mi = beta1 * *mi + (1.0 - beta1) * gi;
                        *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                        let mhat = *mi / c1;
                        let vhat = *vi / c2;
                        *pi -= lr * mhat / (vhat.sqrt() + epsilon);
                    }
                }
            }
        }
    }
}
