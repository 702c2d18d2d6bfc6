use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Quadratic-to-linear transition of the Huber branch (meters).
    pub delta: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { delta: 0.05 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Config(format!("delta must be > 0, got {}", self.delta)));
        }
        Ok(())
    }
}

/// `0.5 d^2` for `|d| <= delta`, `delta (|d| - delta/2)` beyond.
#[inline]
pub fn huber(d: f64, delta: f64) -> f64 {
    let a = d.abs();
    if a <= delta {
        0.5 * d * d
    } else {
        delta * (a - 0.5 * delta)
    }
}

/// Loss of a single vertical residual: quadratic below the surface, Huber above.
#[inline]
pub fn asymmetric_loss(dd: f64, cfg: &LossConfig) -> f64 {
    if dd < 0.0 {
        dd * dd
    } else {
        huber(dd, cfg.delta)
    }
}

/// Derivative of [`asymmetric_loss`] with respect to the residual.
#[inline]
pub fn asymmetric_loss_derivative(dd: f64, cfg: &LossConfig) -> f64 {
    if dd < 0.0 {
        2.0 * dd
    } else if dd <= cfg.delta {
        dd
    } else {
        cfg.delta
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const CFG: LossConfig = LossConfig { delta: 0.05 };

    #[test]
    fn tagged_values() {
        assert_eq!(asymmetric_loss(-2.0, &CFG), 4.0);
        assert_eq!(asymmetric_loss(0.0, &CFG), 0.0);
        assert!((asymmetric_loss(0.05, &CFG) - 0.00125).abs() < 1e-15);
        assert!((asymmetric_loss(1.0, &CFG) - 0.04875).abs() < 1e-15);
    }

    #[test]
    fn smooth_at_delta() {
        let d = CFG.delta;
        let left = 0.5 * d * d;
        let right = d * (d - 0.5 * d);
        assert!((left - right).abs() < 1e-15);
        // one-sided difference quotients of the loss itself
        let h = 1e-7;
        let dl = (asymmetric_loss(d, &CFG) - asymmetric_loss(d - h, &CFG)) / h;
        let dr = (asymmetric_loss(d + h, &CFG) - asymmetric_loss(d, &CFG)) / h;
        assert!((dl - d).abs() < 1e-6 && (dr - d).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_delta() {
        assert!(LossConfig { delta: 0.0 }.validate().is_err());
        assert!(LossConfig { delta: f64::NAN }.validate().is_err());
    }

    proptest! {
        #[test]
        fn below_dominates_above(d in 0.0501f64..100.0) {
            prop_assert!(asymmetric_loss(-d, &CFG) >= asymmetric_loss(d, &CFG));
        }

        #[test]
        fn derivative_matches_difference(d in -5.0f64..5.0) {
            prop_assume!((d - CFG.delta).abs() > 1e-4 && d.abs() > 1e-4);
            let h = 1e-6;
            let fd = (asymmetric_loss(d + h, &CFG) - asymmetric_loss(d - h, &CFG)) / (2.0 * h);
            prop_assert!((fd - asymmetric_loss_derivative(d, &CFG)).abs() < 1e-6);
        }
    }
}
