//! Device utility functions, inverse demand curves and prosumer bundles.
//!
//! A device's consumption `x` (kWh) is bounded by `[d_lo, d_hi]`. Its utility
//! is concave and nondecreasing, so the optimal consumption at a price `p`
//! is the clamped inverse of the marginal utility:
//! `f(p) = max(d_lo, min(V⁻¹(p), d_hi))`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{ordered_sum, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProsumerError {
    #[error("consumption {x} kWh outside device domain [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },
    #[error("invalid utility parameters: {0}")]
    InvalidParameters(String),
    #[error("invalid prosumer: {0}")]
    InvalidProsumer(String),
    #[error("schedule has {got} entries but the prosumer has {expected} devices")]
    ScheduleLength { expected: usize, got: usize },
}

/// Parametric utility families.
///
/// * `Quadratic`: `U(x) = αx − (β/2)x²` up to the satiation point `α/β`, flat beyond.
/// * `Log`: `U(x) = a·ln(1 + x/scale)`.
/// * `Isoelastic`: `U(x) = a·(x^{1−η} − d_lo^{1−η})/(1−η)`, shifted so `U(d_lo) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum UtilityFamily<T> {
    Quadratic { alpha: T, beta: T },
    Log { a: T, scale: T },
    Isoelastic { a: T, eta: T },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityFn<T> {
    family: UtilityFamily<T>,
    d_lo: T,
    d_hi: T,
}

fn invalid(msg: impl Into<String>) -> ProsumerError {
    ProsumerError::InvalidParameters(msg.into())
}

impl<T: Scalar> UtilityFn<T> {
    pub fn new(family: UtilityFamily<T>, d_lo: T, d_hi: T) -> Result<Self, ProsumerError> {
        if !(d_lo.is_finite() && d_hi.is_finite()) {
            return Err(invalid("consumption bounds must be finite"));
        }
        if d_lo < T::zero() || d_lo > d_hi {
            return Err(invalid(format!("need 0 <= d_lo <= d_hi, got [{d_lo}, {d_hi}]")));
        }
        let positive = |v: T| v.is_finite() && v > T::zero();
        match family {
            UtilityFamily::Quadratic { alpha, beta } => {
                if !(positive(alpha) && positive(beta)) {
                    return Err(invalid("quadratic utility needs alpha > 0 and beta > 0"));
                }
            }
            UtilityFamily::Log { a, scale } => {
                if !(positive(a) && positive(scale)) {
                    return Err(invalid("log utility needs a > 0 and scale > 0"));
                }
            }
            UtilityFamily::Isoelastic { a, eta } => {
                if !positive(a) || !eta.is_finite() || eta < T::zero() || eta == T::one() {
                    return Err(invalid("isoelastic utility needs a > 0, eta >= 0, eta != 1"));
                }
                if eta > T::one() && d_lo <= T::zero() {
                    return Err(invalid("isoelastic utility with eta > 1 needs d_lo > 0"));
                }
            }
        }
        Ok(Self { family, d_lo, d_hi })
    }

    /// Quadratic utility on `[0, d_hi]`.
    pub fn quadratic(alpha: T, beta: T, d_hi: T) -> Result<Self, ProsumerError> {
        Self::new(UtilityFamily::Quadratic { alpha, beta }, T::zero(), d_hi)
    }

    pub fn family(&self) -> UtilityFamily<T> {
        self.family
    }

    pub fn d_lo(&self) -> T {
        self.d_lo
    }

    pub fn d_hi(&self) -> T {
        self.d_hi
    }

    fn check_domain(&self, x: T, upper: bool) -> Result<(), ProsumerError> {
        let above = upper && x > self.d_hi;
        if x.is_nan() || x < self.d_lo || above {
            return Err(ProsumerError::OutOfDomain {
                x: x.as_f64(),
                lo: self.d_lo.as_f64(),
                hi: self.d_hi.as_f64(),
            });
        }
        Ok(())
    }

    /// `V(x) = dU/dx` for `x` in `[d_lo, d_hi]`.
    pub fn marginal_utility(&self, x: T) -> Result<T, ProsumerError> {
        self.check_domain(x, true)?;
        Ok(self.marginal_unchecked(x))
    }

    pub(crate) fn marginal_unchecked(&self, x: T) -> T {
        match self.family {
            UtilityFamily::Quadratic { alpha, beta } => (alpha - beta * x).max(T::zero()),
            UtilityFamily::Log { a, scale } => a / (scale + x),
            UtilityFamily::Isoelastic { a, eta } => {
                if eta == T::zero() {
                    a
                } else {
                    a * x.powf(-eta)
                }
            }
        }
    }

    /// `U(x)` for `x >= d_lo`.
    pub fn utility_value(&self, x: T) -> Result<T, ProsumerError> {
        self.check_domain(x, false)?;
        Ok(self.value_unchecked(x))
    }

    pub(crate) fn value_unchecked(&self, x: T) -> T {
        match self.family {
            UtilityFamily::Quadratic { alpha, beta } => {
                let sat = alpha / beta;
                if x <= sat {
                    alpha * x - beta * x * x * T::lit(0.5)
                } else {
                    alpha * alpha / (T::lit(2.0) * beta)
                }
            }
            UtilityFamily::Log { a, scale } => a * (x / scale).ln_1p(),
            UtilityFamily::Isoelastic { a, eta } => {
                let k = T::one() - eta;
                a * (x.powf(k) - self.d_lo.powf(k)) / k
            }
        }
    }

    /// Marginal utility at the two ends of the domain, `(V(d_hi), V(d_lo))`.
    /// The upper value is infinite for isoelastic utilities with `d_lo = 0`.
    pub fn price_range(&self) -> (T, T) {
        (self.marginal_unchecked(self.d_hi), self.marginal_unchecked(self.d_lo))
    }

    /// Optimal consumption at `price`: `max(d_lo, min(V⁻¹(price), d_hi))`.
    /// Where the maximizer is not unique the smallest one is returned.
    pub fn inverse_demand(&self, price: T) -> T {
        let (v_hi, v_lo) = self.price_range();
        if price >= v_lo {
            return self.d_lo;
        }
        if price < v_hi {
            return self.d_hi;
        }
        let raw = match self.family {
            UtilityFamily::Quadratic { alpha, beta } => (alpha - price) / beta,
            UtilityFamily::Log { a, scale } => a / price - scale,
            // eta == 0 has v_hi == v_lo, so one of the branches above returned
            UtilityFamily::Isoelastic { a, eta } => (a / price).powf(T::one() / eta),
        };
        raw.max(self.d_lo).min(self.d_hi)
    }
}

/// A customer with consumption devices and behind-the-meter generation `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prosumer<T> {
    id: String,
    devices: Vec<UtilityFn<T>>,
    g: T,
}

impl<T: Scalar> Prosumer<T> {
    pub fn new(id: impl Into<String>, devices: Vec<UtilityFn<T>>, g: T) -> Result<Self, ProsumerError> {
        if devices.is_empty() {
            return Err(ProsumerError::InvalidProsumer("at least one device required".into()));
        }
        if !g.is_finite() || g < T::zero() {
            return Err(ProsumerError::InvalidProsumer(format!("generation must be >= 0, got {g}")));
        }
        Ok(Self { id: id.into(), devices, g })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn devices(&self) -> &[UtilityFn<T>] {
        &self.devices
    }

    pub fn generation(&self) -> T {
        self.g
    }

    /// Same devices with a different generation level.
    pub fn with_generation(&self, g: T) -> Result<Self, ProsumerError> {
        Self::new(self.id.clone(), self.devices.clone(), g)
    }

    /// Per-device optimal consumption at `price`.
    pub fn consumption_at(&self, price: T) -> Vec<T> {
        self.devices.iter().map(|u| u.inverse_demand(price)).collect()
    }

    /// `Σ_k f_k(price)`.
    pub fn total_demand(&self, price: T) -> T {
        ordered_sum(self.devices.iter().map(|u| u.inverse_demand(price)))
    }

    /// Additive utility of a per-device schedule.
    pub fn utility(&self, schedule: &[T]) -> Result<T, ProsumerError> {
        if schedule.len() != self.devices.len() {
            return Err(ProsumerError::ScheduleLength {
                expected: self.devices.len(),
                got: schedule.len(),
            });
        }
        let mut total = T::zero();
        for (u, &x) in self.devices.iter().zip(schedule) {
            total = total + u.utility_value(x)?;
        }
        Ok(total)
    }

    /// Utility of a schedule produced by `inverse_demand`, which is in-domain by construction.
    pub(crate) fn utility_unchecked(&self, schedule: &[T]) -> T {
        ordered_sum(self.devices.iter().zip(schedule).map(|(u, &x)| u.value_unchecked(x)))
    }
}
