//! Competitive wholesale clearing of supply curves against an inelastic
//! demand, and the direct-versus-aggregated efficiency comparison.

use thiserror::Error;

use crate::bidding::{aggregate_supply, prosumer_supply, BiddingError, SupplyCurve};
use crate::numeric::bisect_bracket;
use crate::prosumer::Prosumer;
use crate::scalar::{ordered_sum, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClearingError {
    #[error("no supply curves to clear")]
    NoCurves,
    #[error("demand must be finite, got {0}")]
    InvalidDemand(f64),
    #[error("demand {demand} kWh outside the feasible range [{q_min}, {q_max}]")]
    InfeasibleDemand { demand: f64, q_min: f64, q_max: f64 },
    #[error("no curve responds to price")]
    NoElasticSupply,
    #[error(transparent)]
    Bidding(#[from] BiddingError),
}

const PRICE_TOL: f64 = 1e-12;
const MAX_ITER: usize = 200;
const MAX_EXPANSIONS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct ClearingResult<T> {
    pub price: T,
    pub ids: Vec<String>,
    /// Net injection per curve (kWh).
    pub injections: Vec<T>,
    /// Per-device consumption of each curve, one entry per device group.
    pub consumption: Vec<Vec<T>>,
    pub demand: T,
    /// `Σ count·U(d)` over every device.
    pub social_welfare: T,
    /// `U(d) + π·injection` per curve.
    pub participant_surpluses: Vec<T>,
}

impl<T: Scalar> ClearingResult<T> {
    pub fn total_injection(&self) -> T {
        ordered_sum(self.injections.iter().copied())
    }

    pub fn total_surplus(&self) -> T {
        ordered_sum(self.participant_surpluses.iter().copied())
    }
}

fn total<T: Scalar>(curves: &[SupplyCurve<T>], price: T) -> T {
    ordered_sum(curves.iter().map(|c| c.eval(price)))
}

/// Clears `curves` against `demand` by bisection on the aggregate supply.
///
/// The bracket keeps `S(lo) < demand <= S(hi)`. Where the aggregate jumps
/// across `demand` inside the final bracket, every device is placed the same
/// fraction of the way between its consumption at `hi` and at `lo`, so the
/// injections add up to `demand` exactly and each curve is rationed in
/// proportion to its own jump.
pub fn clear<T: Scalar>(curves: &[SupplyCurve<T>], demand: T) -> Result<ClearingResult<T>, ClearingError> {
    if curves.is_empty() {
        return Err(ClearingError::NoCurves);
    }
    if !demand.is_finite() {
        return Err(ClearingError::InvalidDemand(demand.as_f64()));
    }
    let q_min = ordered_sum(curves.iter().map(|c| c.q_min()));
    let q_max = ordered_sum(curves.iter().map(|c| c.q_max()));
    let infeasible = || ClearingError::InfeasibleDemand {
        demand: demand.as_f64(),
        q_min: q_min.as_f64(),
        q_max: q_max.as_f64(),
    };
    if demand < q_min || demand > q_max {
        return Err(infeasible());
    }
    let mut breakpoints: Vec<T> = curves.iter().flat_map(|c| c.breakpoints().iter().copied()).collect();
    breakpoints.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
    let (first, last) = match (breakpoints.first(), breakpoints.last()) {
        (Some(&f), Some(&l)) if q_max > q_min => (f, l),
        _ => return Err(ClearingError::NoElasticSupply),
    };

    let lo = first - T::one();
    if total(curves, lo) >= demand {
        // only possible when demand sits at the bottom of the range
        return Ok(settle(curves, demand, first, first, first));
    }
    let mut hi = last + T::one();
    let mut step = T::one().max(last.abs());
    let mut expansions = 0;
    while total(curves, hi) < demand {
        if expansions == MAX_EXPANSIONS || !hi.is_finite() {
            return Err(infeasible());
        }
        hi = hi + step;
        step = step + step;
        expansions += 1;
    }
    let (lo, hi) = bisect_bracket(lo, hi, T::tolerance(PRICE_TOL), MAX_ITER, |p| total(curves, p) >= demand);
    Ok(settle(curves, demand, lo, hi, hi))
}

fn settle<T: Scalar>(curves: &[SupplyCurve<T>], demand: T, lo: T, hi: T, price: T) -> ClearingResult<T> {
    let s_lo = total(curves, lo);
    let s_hi = total(curves, hi);
    let theta = if s_hi > s_lo {
        ((demand - s_lo) / (s_hi - s_lo)).max(T::zero()).min(T::one())
    } else {
        T::one()
    };
    let mut ids = Vec::with_capacity(curves.len());
    let mut injections = Vec::with_capacity(curves.len());
    let mut consumption = Vec::with_capacity(curves.len());
    let mut utilities = Vec::with_capacity(curves.len());
    for c in curves {
        let mut used = Vec::with_capacity(c.groups().len());
        let mut value = T::zero();
        let mut load = T::zero();
        for (u, n) in c.groups() {
            // consumption falls with price, so the `lo` end is the larger one
            let at_lo = u.inverse_demand(lo);
            let at_hi = u.inverse_demand(hi);
            let d = at_lo + theta * (at_hi - at_lo);
            let count = T::from_count(*n);
            value = value + count * u.value_unchecked(d);
            load = load + count * d;
            used.push(d);
        }
        ids.push(c.id().to_string());
        injections.push(c.generation() - load);
        consumption.push(used);
        utilities.push(value);
    }
    let participant_surpluses = utilities
        .iter()
        .zip(&injections)
        .map(|(&u, &q)| u + price * q)
        .collect();
    ClearingResult {
        price,
        ids,
        injections,
        consumption,
        demand,
        social_welfare: ordered_sum(utilities.iter().copied()),
        participant_surpluses,
    }
}

/// Clears the population once with one curve per prosumer and once through a
/// single aggregator curve with `G = Σ g_n`. Returns `(direct, aggregated)`.
pub fn efficiency_check<T: Scalar>(
    pop: &[Prosumer<T>],
    demand: T,
) -> Result<(ClearingResult<T>, ClearingResult<T>), ClearingError> {
    let direct: Vec<SupplyCurve<T>> = pop.iter().map(prosumer_supply).collect();
    let aggregated = aggregate_supply("dera", pop, None)?;
    Ok((clear(&direct, demand)?, clear(std::slice::from_ref(&aggregated), demand)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prosumer::{UtilityFamily, UtilityFn};
    use approx::assert_abs_diff_eq;

    fn quad() -> UtilityFn<f64> {
        UtilityFn::quadratic(0.24, 0.24, 10.0).unwrap()
    }

    #[test]
    fn homogeneous_zero_demand_example() {
        let c = SupplyCurve::homogeneous("dera", 875.0, quad(), 1000).unwrap();
        let r = clear(&[c], 0.0).unwrap();
        assert_abs_diff_eq!(r.price, 0.03, epsilon = 1e-10);
        assert_abs_diff_eq!(r.total_injection(), 0.0, epsilon = 1e-8);
    }

    #[test]
    fn identical_curves_split_equally() {
        let c = SupplyCurve::homogeneous("a", 3.0, quad(), 2).unwrap();
        let r = clear(&[c.clone(), c], 2.5).unwrap();
        assert_abs_diff_eq!(r.injections[0], r.injections[1], epsilon = 1e-12);
        assert_abs_diff_eq!(r.total_injection(), 2.5, epsilon = 1e-12);
    }

    #[test]
    fn full_injection_at_top_breakpoint() {
        let c = SupplyCurve::homogeneous("a", 3.0, quad(), 2).unwrap();
        let r = clear(std::slice::from_ref(&c), c.q_max()).unwrap();
        assert_abs_diff_eq!(r.price, 0.24, epsilon = 1e-11);
        assert_abs_diff_eq!(r.injections[0], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn infeasible_demand_is_rejected() {
        let c = SupplyCurve::homogeneous("a", 3.0, quad(), 2).unwrap();
        assert!(matches!(clear(&[c], 4.0), Err(ClearingError::InfeasibleDemand { .. })));
        assert_eq!(clear::<f64>(&[], 0.0), Err(ClearingError::NoCurves));
    }

    #[test]
    fn step_supply_is_rationed_by_jump() {
        let step = UtilityFn::new(UtilityFamily::Isoelastic { a: 0.05, eta: 0.0 }, 0.0, 2.0).unwrap();
        let a = SupplyCurve::homogeneous("a", 2.0, step, 1).unwrap();
        let b = SupplyCurve::homogeneous("b", 2.0, step, 3).unwrap();
        let r = clear(&[a, b], -2.0).unwrap();
        assert_abs_diff_eq!(r.price, 0.05, epsilon = 1e-11);
        assert_abs_diff_eq!(r.total_injection(), -2.0, epsilon = 1e-12);
        // jumps of 2 and 6 kWh are each taken a quarter of the way
        assert_abs_diff_eq!(r.injections[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.injections[1], -2.5, epsilon = 1e-12);
    }

    #[test]
    fn single_prosumer_clears_identically() {
        let p = Prosumer::new("p", vec![quad(), quad()], 1.5).unwrap();
        let (d, a) = efficiency_check(&[p], 0.2).unwrap();
        assert_eq!(d.price, a.price);
        assert_eq!(d.social_welfare, a.social_welfare);
        assert_eq!(d.total_surplus(), a.total_surplus());
    }

    #[test]
    fn pure_buyers_clear_through_aggregator() {
        let pop: Vec<_> = (0..4)
            .map(|i| Prosumer::new(format!("p{i}"), vec![quad()], 0.0).unwrap())
            .collect();
        let (d, a) = efficiency_check(&pop, -2.0).unwrap();
        assert_abs_diff_eq!(d.price, 0.12, epsilon = 1e-10);
        assert_abs_diff_eq!(d.price, a.price, epsilon = 1e-12);
        assert_abs_diff_eq!(d.social_welfare, a.social_welfare, epsilon = 1e-10);
    }
}
