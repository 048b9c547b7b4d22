//! NEM-X tariff billing and closed-form optimal consumption for passive and
//! active prosumers.
//!
//! With `d⁺ = Σ_k f_k(π⁺)` and `d⁻ = Σ_k f_k(π⁻)`:
//! * a passive prosumer always consumes `d⁺` and settles its net position at
//!   `π⁻` (exporting) or `π⁺` (importing);
//! * an active prosumer consumes `max(d⁺, min(g, d⁻))`, and in the interior
//!   "island" regime matches consumption to generation at the shadow price
//!   `μ*(g) ∈ [π⁻, π⁺]` solving `Σ_k f_k(μ) = g`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::bisect_bracket;
use crate::prosumer::Prosumer;
use crate::scalar::{ordered_sum, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NemError {
    #[error("invalid tariff: {0}")]
    InvalidTariff(String),
    #[error("island price not bracketed: demand at sell rate {at_sell}, at buy rate {at_buy}, generation {g}")]
    RootNotBracketed { at_sell: f64, at_buy: f64, g: f64 },
}

/// Retail rate `π⁺`, export rate `π⁻` ($/kWh) and fixed connection charge `π⁰` ($).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NemTariff<T> {
    pi_plus: T,
    pi_minus: T,
    pi_zero: T,
}

impl<T: Scalar> NemTariff<T> {
    pub fn new(pi_plus: T, pi_minus: T, pi_zero: T) -> Result<Self, NemError> {
        if !(pi_plus.is_finite() && pi_minus.is_finite() && pi_zero.is_finite()) {
            return Err(NemError::InvalidTariff("rates must be finite".into()));
        }
        if pi_plus < pi_minus {
            return Err(NemError::InvalidTariff(format!(
                "retail rate {pi_plus} below export rate {pi_minus}"
            )));
        }
        Ok(Self { pi_plus, pi_minus, pi_zero })
    }

    pub fn pi_plus(&self) -> T {
        self.pi_plus
    }

    pub fn pi_minus(&self) -> T {
        self.pi_minus
    }

    pub fn pi_zero(&self) -> T {
        self.pi_zero
    }

    /// Energy rate applied to a net position `z` (import at `π⁺`, export at `π⁻`).
    pub fn rate_for(&self, z: T) -> T {
        if z > T::zero() {
            self.pi_plus
        } else {
            self.pi_minus
        }
    }
}

/// `π⁺·[z]⁺ − π⁻·[z]⁻ + π⁰` for net consumption `z`.
pub fn bill<T: Scalar>(t: &NemTariff<T>, z: T) -> T {
    let pos = z.max(T::zero());
    let neg = (-z).max(T::zero());
    t.pi_plus * pos - t.pi_minus * neg + t.pi_zero
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Sell,
    Buy,
    Island,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NemOutcome<T> {
    pub d_total: T,
    pub per_device: Vec<T>,
    pub surplus: T,
    pub regime: Regime,
    /// Shadow price `μ*(g)`; only set in the island regime.
    pub island_price: Option<T>,
}

const ISLAND_PRICE_TOL: f64 = 1e-10;
const ISLAND_MAX_ITER: usize = 200;

/// Optimal consumption and surplus of a passive prosumer. Consumption does
/// not depend on `g`.
pub fn passive_optimum<T: Scalar>(p: &Prosumer<T>, t: &NemTariff<T>) -> NemOutcome<T> {
    let per_device = p.consumption_at(t.pi_plus);
    let d_total = ordered_sum(per_device.iter().copied());
    let utility = p.utility_unchecked(&per_device);
    let g = p.generation();
    let (rate, regime) = if g > d_total {
        (t.pi_minus, Regime::Sell)
    } else {
        (t.pi_plus, Regime::Buy)
    };
    NemOutcome {
        d_total,
        surplus: utility - rate * (d_total - g) - t.pi_zero,
        per_device,
        regime,
        island_price: None,
    }
}

/// Optimal consumption and surplus of an active prosumer.
pub fn active_optimum<T: Scalar>(p: &Prosumer<T>, t: &NemTariff<T>) -> Result<NemOutcome<T>, NemError> {
    let g = p.generation();
    let buy = p.consumption_at(t.pi_plus);
    let d_buy = ordered_sum(buy.iter().copied());

    let settle = |per_device: Vec<T>, rate: T, regime: Regime| {
        let d_total = ordered_sum(per_device.iter().copied());
        let surplus = p.utility_unchecked(&per_device) - rate * (d_total - g) - t.pi_zero;
        NemOutcome { d_total, per_device, surplus, regime, island_price: None }
    };

    if t.pi_plus == t.pi_minus {
        let regime = if g > d_buy { Regime::Sell } else { Regime::Buy };
        return Ok(settle(buy, t.pi_plus, regime));
    }
    let sell = p.consumption_at(t.pi_minus);
    let d_sell = ordered_sum(sell.iter().copied());
    if g >= d_sell {
        return Ok(settle(sell, t.pi_minus, Regime::Sell));
    }
    if g <= d_buy {
        return Ok(settle(buy, t.pi_plus, Regime::Buy));
    }

    let (mu, per_device) = island_schedule(p, t, g)?;
    let d_total = ordered_sum(per_device.iter().copied());
    Ok(NemOutcome {
        d_total,
        surplus: p.utility_unchecked(&per_device) - t.pi_zero,
        per_device,
        regime: Regime::Island,
        island_price: Some(mu),
    })
}

/// Solves `Σ_k f_k(μ) = g` on `[π⁻, π⁺]`. Demand is nonincreasing in `μ`, so
/// the bracket keeps `demand(lo) > g >= demand(hi)`. Devices are placed
/// between their consumption at the two bracket ends so that the schedule
/// sums to `g` even where the demand curve jumps.
fn island_schedule<T: Scalar>(p: &Prosumer<T>, t: &NemTariff<T>, g: T) -> Result<(T, Vec<T>), NemError> {
    let at_sell = p.total_demand(t.pi_minus);
    let at_buy = p.total_demand(t.pi_plus);
    if !(at_sell >= g && g >= at_buy) {
        return Err(NemError::RootNotBracketed {
            at_sell: at_sell.as_f64(),
            at_buy: at_buy.as_f64(),
            g: g.as_f64(),
        });
    }
    // bisect to machine precision; ISLAND_PRICE_TOL is the contract, not the stop rule
    let (lo, hi) = bisect_bracket(t.pi_minus, t.pi_plus, T::zero(), ISLAND_MAX_ITER, |mu| {
        p.total_demand(mu) <= g
    });
    debug_assert!(hi - lo <= T::tolerance(ISLAND_PRICE_TOL));
    let more = p.consumption_at(lo);
    let less = p.consumption_at(hi);
    let d_more = ordered_sum(more.iter().copied());
    let d_less = ordered_sum(less.iter().copied());
    let span = d_more - d_less;
    let theta = if span > T::zero() {
        ((g - d_less) / span).max(T::zero()).min(T::one())
    } else {
        T::zero()
    };
    let schedule = less
        .iter()
        .zip(&more)
        .map(|(&a, &b)| a + theta * (b - a))
        .collect();
    Ok((hi, schedule))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prosumer::UtilityFn;
    use approx::assert_abs_diff_eq;

    fn tariff() -> NemTariff<f64> {
        NemTariff::new(0.06, 0.03, 0.0).unwrap()
    }

    fn one_device(g: f64) -> Prosumer<f64> {
        Prosumer::new("p", vec![UtilityFn::quadratic(0.24, 0.24, 10.0).unwrap()], g).unwrap()
    }

    #[test]
    fn bill_examples() {
        assert_abs_diff_eq!(bill(&tariff(), 2.0), 0.12, epsilon = 1e-15);
        let t = NemTariff::new(0.06, 0.03, 0.5).unwrap();
        assert_eq!(bill(&t, 0.0), 0.5);
        assert_abs_diff_eq!(bill(&tariff(), -2.0), -0.06, epsilon = 1e-15);
    }

    #[test]
    fn tariff_ordering_enforced() {
        assert!(NemTariff::new(0.02, 0.03, 0.0).is_err());
        assert!(NemTariff::new(0.03, 0.03, 0.0).is_ok());
    }

    #[test]
    fn passive_examples() {
        let sell = passive_optimum(&one_device(5.0), &tariff());
        assert_abs_diff_eq!(sell.d_total, 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(sell.surplus, 0.24, epsilon = 1e-12);
        assert_eq!(sell.regime, Regime::Sell);

        let buy = passive_optimum(&one_device(0.0), &tariff());
        assert_abs_diff_eq!(buy.surplus, 0.0675, epsilon = 1e-12);
        assert_eq!(buy.regime, Regime::Buy);

        let edge = passive_optimum(&one_device(0.75), &tariff());
        assert_abs_diff_eq!(edge.surplus, 0.1125, epsilon = 1e-12);
    }

    #[test]
    fn active_examples() {
        let island = active_optimum(&one_device(0.8), &tariff()).unwrap();
        assert_eq!(island.regime, Regime::Island);
        assert_abs_diff_eq!(island.island_price.unwrap(), 0.048, epsilon = 1e-10);
        assert_abs_diff_eq!(island.d_total, 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(island.surplus, 0.1152, epsilon = 1e-12);

        let sell = active_optimum(&one_device(5.0), &tariff()).unwrap();
        assert_eq!(sell.regime, Regime::Sell);
        assert_abs_diff_eq!(sell.d_total, 0.875, epsilon = 1e-15);
        assert_abs_diff_eq!(sell.surplus, 0.241875, epsilon = 1e-12);

        let a = active_optimum(&one_device(0.0), &tariff()).unwrap();
        let p = passive_optimum(&one_device(0.0), &tariff());
        assert_eq!(a, p);
    }

    #[test]
    fn flat_tariff_uses_buy_formula() {
        let t = NemTariff::new(0.05, 0.05, 0.0).unwrap();
        let out = active_optimum(&one_device(0.8), &t).unwrap();
        let expected = passive_optimum(&one_device(0.8), &t);
        assert_abs_diff_eq!(out.surplus, expected.surplus, epsilon = 1e-15);
        assert_eq!(out.d_total, expected.d_total);
    }

    #[test]
    fn island_splits_step_demand_exactly() {
        use crate::prosumer::UtilityFamily;
        let step = UtilityFn::new(UtilityFamily::Isoelastic { a: 0.04, eta: 0.0 }, 0.0, 2.0).unwrap();
        let p = Prosumer::new("s", vec![step], 1.3).unwrap();
        let out = active_optimum(&p, &tariff()).unwrap();
        assert_eq!(out.regime, Regime::Island);
        assert_abs_diff_eq!(out.d_total, 1.3, epsilon = 1e-12);
        assert_abs_diff_eq!(out.island_price.unwrap(), 0.04, epsilon = 1e-10);
    }

    #[test]
    fn surplus_continuous_at_branch_edges() {
        let p = one_device(0.0);
        let t = tariff();
        let d_buy = p.total_demand(t.pi_plus());
        let d_sell = p.total_demand(t.pi_minus());
        for edge in [d_buy, d_sell] {
            let below = active_optimum(&p.with_generation(edge - 1e-12).unwrap(), &t).unwrap();
            let at = active_optimum(&p.with_generation(edge).unwrap(), &t).unwrap();
            let above = active_optimum(&p.with_generation(edge + 1e-12).unwrap(), &t).unwrap();
            assert_abs_diff_eq!(below.surplus, at.surplus, epsilon = 1e-9);
            assert_abs_diff_eq!(above.surplus, at.surplus, epsilon = 1e-9);
        }
    }
}
