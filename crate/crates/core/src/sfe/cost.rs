//! True production costs of price-making participants.

use serde::{Deserialize, Serialize};

use super::SfeError;
use crate::scalar::Scalar;

/// Convex cost with `C(0) = 0`.
///
/// * `Quadratic`: `C(P) = linear·P + quad·P²/2`.
/// * `Power`: `C(P) = coef·|P|^exponent` with `exponent > 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostFn<T> {
    Quadratic { linear: T, quad: T },
    Power { coef: T, exponent: T },
}

impl<T: Scalar> CostFn<T> {
    /// `C(P) = quad·P²/2`.
    pub fn quadratic(quad: T) -> Self {
        CostFn::Quadratic { linear: T::zero(), quad }
    }

    pub fn validated(self) -> Result<Self, SfeError> {
        let ok = |v: T| v.is_finite() && v >= T::zero();
        match self {
            CostFn::Quadratic { linear, quad } => {
                if !(ok(linear) && ok(quad)) || linear + quad == T::zero() {
                    return Err(SfeError::InvalidCost(format!(
                        "quadratic cost needs linear, quad >= 0, not both zero; got {linear}, {quad}"
                    )));
                }
            }
            CostFn::Power { coef, exponent } => {
                if !(ok(coef) && coef > T::zero() && exponent.is_finite() && exponent > T::one()) {
                    return Err(SfeError::InvalidCost(format!(
                        "power cost needs coef > 0 and exponent > 1; got {coef}, {exponent}"
                    )));
                }
            }
        }
        Ok(self)
    }

    pub fn value(&self, p: T) -> T {
        match *self {
            CostFn::Quadratic { linear, quad } => linear * p + quad * p * p * T::lit(0.5),
            CostFn::Power { coef, exponent } => coef * p.abs().powf(exponent),
        }
    }

    pub fn marginal(&self, p: T) -> T {
        match *self {
            CostFn::Quadratic { linear, quad } => linear + quad * p,
            CostFn::Power { coef, exponent } => {
                if p == T::zero() {
                    T::zero()
                } else {
                    coef * exponent * p.abs().powf(exponent - T::one()) * p.signum()
                }
            }
        }
    }
}
