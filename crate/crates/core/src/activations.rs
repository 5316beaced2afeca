//! Activation functions and their derivatives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Vector;

pub const DEFAULT_ELU_ALPHA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
    /// `z` for `z > 0`, `alpha * (e^z - 1)` otherwise.
    Elu { alpha: f64 },
    /// Normalizes the whole vector to a probability vector.
    Softmax,
    Identity,
}

impl Activation {
    pub fn elu(alpha: f64) -> Result<Self> {
        let a = Activation::Elu { alpha };
        a.validate()?;
        Ok(a)
    }

    pub fn default_elu() -> Self {
        Activation::Elu {
            alpha: DEFAULT_ELU_ALPHA,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Activation::Elu { alpha } if !(alpha > 0.0 && alpha.is_finite()) => Err(
                Error::InvalidConfig(format!("ELU alpha must be positive, got {alpha}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Elu { .. } => "elu",
            Activation::Softmax => "softmax",
            Activation::Identity => "identity",
        }
    }

    pub fn apply(&self, z: &[f64]) -> Vector {
        let mut out = z.to_vec();
        self.apply_in_place(&mut out);
        Vector::new(out).unwrap_or_else(|_| unreachable!("activations map finite input to finite output"))
    }

    pub(crate) fn apply_in_place(&self, z: &mut [f64]) {
        match *self {
            Activation::Sigmoid => z.iter_mut().for_each(|v| *v = sigmoid(*v)),
            Activation::Tanh => z.iter_mut().for_each(|v| *v = v.tanh()),
            Activation::Relu => z.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Elu { alpha } => z.iter_mut().for_each(|v| {
                if *v <= 0.0 {
                    *v = alpha * v.exp_m1();
                }
            }),
            Activation::Softmax => softmax_in_place(z),
            Activation::Identity => {}
        }
    }

    /// Elementwise derivative evaluated at the pre-activation `z`.
    pub fn derivative(&self, z: &[f64]) -> Result<Vector> {
        if matches!(self, Activation::Softmax) {
            return Err(Error::Unsupported(
                "softmax derivative is only available jointly with cross-entropy".into(),
            ));
        }
        Ok(Vector::new(z.iter().map(|&v| self.derivative_scalar(v, None)).collect())
            .unwrap_or_else(|_| unreachable!()))
    }

    /// Derivative at pre-activation `z`; `a` is the activation value when already known.
    #[inline]
    pub(crate) fn derivative_scalar(&self, z: f64, a: Option<f64>) -> f64 {
        match *self {
            Activation::Sigmoid => {
                let s = a.unwrap_or_else(|| sigmoid(z));
                s * (1.0 - s)
            }
            Activation::Tanh => {
                let t = a.unwrap_or_else(|| z.tanh());
                1.0 - t * t
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Elu { alpha } => {
                if z > 0.0 {
                    1.0
                } else {
                    match a {
                        Some(a) => a + alpha,
                        None => alpha * z.exp(),
                    }
                }
            }
            Activation::Identity => 1.0,
            Activation::Softmax => unreachable!("softmax has no elementwise derivative"),
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softmax_in_place(z: &mut [f64]) {
    if z.is_empty() {
        return;
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}
