//! Supply function families `s(π) = R − w/B(π)`.
//!
//! Each family is described by `B`, its inverse `E = B⁻¹`, and the constant
//! `ℳ` with `x·E′(x) = ℳ·E(x)`.

use serde::{Deserialize, Serialize};

use super::SfeError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SupplyFamily<T> {
    /// `B(π) = −1/π`, so `s(π) = R + wπ`.
    Affine,
    /// `B(π) = π`.
    Reciprocal,
    /// `B(π) = π^{1/η}`.
    Power { eta: T },
}

const SELF_TEST_TOL: f64 = 1e-8;

impl<T: Scalar> SupplyFamily<T> {
    /// Validates the parameters and checks `x·E′(x) = ℳ·E(x)` numerically.
    pub fn validated(self) -> Result<Self, SfeError> {
        if let SupplyFamily::Power { eta } = self {
            if !(eta.is_finite() && eta > T::zero()) {
                return Err(SfeError::InvalidFamily(format!("power family needs eta > 0, got {eta}")));
            }
        }
        let residual = self.self_test_residual();
        if !(residual <= T::tolerance(SELF_TEST_TOL)) {
            return Err(SfeError::InvalidFamily(format!(
                "x·E'(x) - M·E(x) residual {residual} exceeds tolerance"
            )));
        }
        Ok(self)
    }

    pub fn b(&self, price: T) -> T {
        match *self {
            SupplyFamily::Affine => -T::one() / price,
            SupplyFamily::Reciprocal => price,
            SupplyFamily::Power { eta } => price.powf(T::one() / eta),
        }
    }

    /// `E = B⁻¹`.
    pub fn e(&self, x: T) -> T {
        match *self {
            SupplyFamily::Affine => -T::one() / x,
            SupplyFamily::Reciprocal => x,
            SupplyFamily::Power { eta } => x.powf(eta),
        }
    }

    /// `ℳ`.
    pub fn m(&self) -> T {
        match *self {
            SupplyFamily::Affine => -T::one(),
            SupplyFamily::Reciprocal => T::one(),
            SupplyFamily::Power { eta } => eta,
        }
    }

    /// Sign of `B` on positive prices, which is also the sign `1ᵀR − 𝒟`
    /// must have for a positive clearing price.
    pub fn sign(&self) -> T {
        match self {
            SupplyFamily::Affine => -T::one(),
            _ => T::one(),
        }
    }

    /// Whether `x` is in the range of `B` over positive prices.
    pub fn in_range(&self, x: T) -> bool {
        x.is_finite() && x * self.sign() > T::zero()
    }

    /// Largest relative residual of `x·E′(x) − ℳ·E(x)` on a sample grid,
    /// with `E′` from a Richardson-extrapolated central difference.
    pub fn self_test_residual(&self) -> T {
        let mut worst = T::zero();
        for k in 0..9 {
            let x = self.sign() * T::lit(0.25) * T::lit(2.0).powi(k / 2) * (T::one() + T::lit(0.1) * T::from_count(k as usize));
            let h = x.abs() * T::lit(1e-3);
            let d = |h: T| (self.e(x + h) - self.e(x - h)) / (h + h);
            let two = T::lit(2.0);
            let deriv = (T::lit(4.0) * d(h / two) - d(h)) / T::lit(3.0);
            let r = (x * deriv - self.m() * self.e(x)).abs() / (T::one() + self.e(x).abs());
            worst = worst.max(r);
        }
        worst
    }
}
