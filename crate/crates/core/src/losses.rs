//! Regression losses (and cross-entropy for classification heads).
//!
//! All losses take the target `y` and the prediction `y_pred` for one sample.
//! MSE, MAE and Huber average over the output elements; LogCosh sums them.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Vector;

pub const DEFAULT_HUBER_DELTA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Loss {
    Mse,
    Mae,
    Huber { delta: f64 },
    LogCosh,
    CrossEntropy,
}

/// `log(cosh(x))` without overflow for large `|x|`.
#[inline]
pub fn logcosh(x: f64) -> f64 {
    let a = x.abs();
    if a < 1.0 {
        // cosh(x) - 1 = 2 sinh^2(x/2), no cancellation near zero
        let s = (0.5 * a).sinh();
        (2.0 * s * s).ln_1p()
    } else {
        a + (-2.0 * a).exp().ln_1p() - LN_2
    }
}

impl Loss {
    pub fn huber(delta: f64) -> Result<Self> {
        let l = Loss::Huber { delta };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Loss::Huber { delta } if !(delta > 0.0 && delta.is_finite()) => Err(
                Error::InvalidConfig(format!("Huber delta must be positive, got {delta}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Loss::Mse => "mse",
            Loss::Mae => "mae",
            Loss::Huber { .. } => "huber",
            Loss::LogCosh => "logcosh",
            Loss::CrossEntropy => "cross_entropy",
        }
    }

    fn check(&self, y: &[f64], y_pred: &[f64]) -> Result<()> {
        if y.len() != y_pred.len() {
            return Err(Error::LengthMismatch {
                op: "loss",
                left: y.len(),
                right: y_pred.len(),
            });
        }
        if y.is_empty() {
            return Err(Error::InvalidArgument("loss of an empty vector".into()));
        }
        if let Loss::CrossEntropy = self {
            for (t, p) in y.iter().zip(y_pred) {
                if *t > 0.0 && *p <= 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "cross-entropy needs a positive probability at the true class, got {p}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn value(&self, y: &[f64], y_pred: &[f64]) -> Result<f64> {
        self.check(y, y_pred)?;
        Ok(self.value_unchecked(y, y_pred))
    }

    pub(crate) fn value_unchecked(&self, y: &[f64], y_pred: &[f64]) -> f64 {
        let n = y.len() as f64;
        let residuals = y.iter().zip(y_pred).map(|(t, p)| t - p);
        match *self {
            Loss::Mse => residuals.map(|e| e * e).sum::<f64>() / n,
            Loss::Mae => residuals.map(f64::abs).sum::<f64>() / n,
            Loss::Huber { delta } => {
                residuals
                    .map(|e| {
                        let a = e.abs();
                        if a <= delta {
                            0.5 * e * e
                        } else {
                            delta * a - 0.5 * delta * delta
                        }
                    })
                    .sum::<f64>()
                    / n
            }
            Loss::LogCosh => residuals.map(logcosh).sum(),
            Loss::CrossEntropy => -y
                .iter()
                .zip(y_pred)
                .filter(|(t, _)| **t != 0.0)
                .map(|(t, p)| t * p.ln())
                .sum::<f64>(),
        }
    }

    /// Gradient of [`Loss::value`] with respect to `y_pred`.
    pub fn gradient(&self, y: &[f64], y_pred: &[f64]) -> Result<Vector> {
        self.check(y, y_pred)?;
        let mut out = vec![0.0; y.len()];
        self.gradient_into(y, y_pred, &mut out);
        Vector::new(out)
    }

    pub(crate) fn gradient_into(&self, y: &[f64], y_pred: &[f64], out: &mut [f64]) {
        let n = y.len() as f64;
        for ((o, t), p) in out.iter_mut().zip(y).zip(y_pred) {
            let e = p - t;
            *o = match *self {
                Loss::Mse => 2.0 * e / n,
                Loss::Mae => {
                    if e > 0.0 {
                        1.0 / n
                    } else if e < 0.0 {
                        -1.0 / n
                    } else {
                        0.0
                    }
                }
                Loss::Huber { delta } => {
                    if e.abs() <= delta {
                        e / n
                    } else {
                        delta * e.signum() / n
                    }
                }
                Loss::LogCosh => e.tanh(),
                Loss::CrossEntropy => {
                    if *t != 0.0 {
                        -t / p
                    } else {
                        0.0
                    }
                }
            };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::numerics::Rng;

    const REGRESSION: [Loss; 4] = [Loss::Mse, Loss::Mae, Loss::Huber { delta: 1.0 }, Loss::LogCosh];

    #[test]
    fn zero_residual_is_zero() {
        let y = [1.5, -2.0, 7.0];
        for l in REGRESSION {
            assert_eq!(l.value(&y, &y).unwrap(), 0.0, "{l:?}");
        }
    }

    #[test]
    fn huber_piecewise() {
        let h = Loss::huber(1.0).unwrap();
        assert_eq!(h.value(&[0.0], &[0.5]).unwrap(), 0.125);
        assert_eq!(h.value(&[0.0], &[2.0]).unwrap(), 1.5);
        assert!(Loss::huber(0.0).is_err());
    }

    #[test]
    fn logcosh_large_residual() {
        let v = Loss::LogCosh.value(&[0.0], &[30.0]).unwrap();
        assert!((v - (30.0 - LN_2)).abs() < 1e-6);
        // naive ln(cosh) overflows here
        assert!((logcosh(800.0) - (800.0 - LN_2)).abs() < 1e-9);
    }

    #[test]
    fn logcosh_gradient_limits() {
        assert_eq!(&*Loss::LogCosh.gradient(&[3.0], &[3.0]).unwrap(), &[0.0]);
        let g = Loss::LogCosh.gradient(&[0.0], &[1000.0]).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn length_mismatch_is_error() {
        for l in REGRESSION {
            assert!(l.value(&[1.0], &[1.0, 2.0]).is_err());
            assert!(l.gradient(&[1.0], &[1.0, 2.0]).is_err());
        }
    }

    #[test]
    fn cross_entropy_values() {
        let v = Loss::CrossEntropy.value(&[0.0, 1.0], &[0.5, 0.5]).unwrap();
        assert!((v - LN_2).abs() < 1e-15);
        assert!(Loss::CrossEntropy.value(&[0.0, 1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn mae_gradient_zero_at_zero_residual() {
        assert_eq!(&*Loss::Mae.gradient(&[1.0, 2.0], &[1.0, 3.0]).unwrap(), &[0.0, 0.5]);
    }

    #[test]
    fn gradients_match_central_difference() {
        let mut rng = Rng::new(77);
        let h = 1e-6;
        let mut losses = REGRESSION.to_vec();
        losses.push(Loss::huber(0.3).unwrap());
        for l in losses {
            for _ in 0..50 {
                let n = 1 + rng.below(5) as usize;
                let y: Vec<f64> = (0..n).map(|_| rng.uniform_range(-3.0, 3.0)).collect();
                let mut p: Vec<f64> = (0..n).map(|_| rng.uniform_range(-3.0, 3.0)).collect();
                // stay away from kinks of MAE and Huber
                for (pi, yi) in p.iter_mut().zip(&y) {
                    let e = *pi - yi;
                    if e.abs() < 1e-3 || (e.abs() - 0.3).abs() < 1e-3 || (e.abs() - 1.0).abs() < 1e-3 {
                        *pi += 0.01;
                    }
                }
                let g = l.gradient(&y, &p).unwrap();
                for i in 0..n {
                    let mut up = p.clone();
                    let mut dn = p.clone();
                    up[i] += h;
                    dn[i] -= h;
                    let fd = (l.value(&y, &up).unwrap() - l.value(&y, &dn).unwrap()) / (2.0 * h);
                    assert!((fd - g[i]).abs() < 1e-5, "{l:?}: {} vs {fd}", g[i]);
                }
            }
        }
    }

    #[test]
    fn cross_entropy_gradient_matches_difference() {
        let y = [0.0, 1.0, 0.0];
        let p = [0.2, 0.5, 0.3];
        let g = Loss::CrossEntropy.gradient(&y, &p).unwrap();
        let h = 1e-7;
        let mut up = p;
        up[1] += h;
        let fd = (Loss::CrossEntropy.value(&y, &up).unwrap() - Loss::CrossEntropy.value(&y, &p).unwrap()) / h;
        assert!((fd - g[1]).abs() < 1e-5);
    }

    proptest! {
        #[test]
        fn logcosh_small_residual_is_quadratic(x in -0.01f64..=0.01) {
            prop_assert!((logcosh(x) - x * x / 2.0).abs() <= x.powi(4));
        }

        #[test]
        fn logcosh_large_residual_is_linear(a in 20.0f64..1e6, neg in any::<bool>()) {
            let x = if neg { -a } else { a };
            prop_assert!((logcosh(x) - (x.abs() - LN_2)).abs() <= 1e-9);
        }

        #[test]
        fn logcosh_gradient_is_bounded(y in -1e4f64..1e4, p in -1e4f64..1e4) {
            let g = Loss::LogCosh.gradient(&[y], &[p]).unwrap();
            prop_assert!(g[0].abs() <= 1.0);
            if (p - y).abs() < 10.0 {
                prop_assert!(g[0].abs() < 1.0);
            }
        }

        #[test]
        fn huber_quadratic_inside_delta(e in -0.999f64..0.999) {
            let h = Loss::Huber { delta: 1.0 };
            prop_assert_eq!(h.value(&[0.0], &[e]).unwrap(), 0.5 * e * e);
        }

        #[test]
        fn regression_losses_nonnegative(y in proptest::collection::vec(-50.0f64..50.0, 1..6), shift in -20.0f64..20.0) {
            let p: Vec<f64> = y.iter().map(|v| v + shift).collect();
            for l in REGRESSION {
                let v = l.value(&y, &p).unwrap();
                prop_assert!(v >= 0.0);
                if shift != 0.0 {
                    prop_assert!(v > 0.0);
                }
            }
        }
    }
}
