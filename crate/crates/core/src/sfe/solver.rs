//! Dual bisection for the equilibrium program and for the competitive
//! (price-taking) benchmark.

use serde::{Deserialize, Serialize};

use super::transform::{tightened_box, transformed_marginal};
use super::{SfeError, SfeProblem, SfeSolution, SupplyFamily};
use crate::numeric::bisect_bracket;
use crate::scalar::{ordered_sum, Scalar};

const INNER_TOL: f64 = 1e-11;
const INNER_MAX_ITER: usize = 300;
const OUTER_MAX_ITER: usize = 2000;
const CONVEXITY_GRID: usize = 1000;

/// Price-taking outcome: every participant offers at marginal cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CeSolution<T> {
    #[serde(rename = "price_usd_per_kwh")]
    pub price: T,
    #[serde(rename = "allocations_kwh")]
    pub allocations: Vec<T>,
    #[serde(rename = "profits_usd")]
    pub profits: Vec<T>,
}

/// Minimizes `Σ F_m(P_m)` subject to `ΣP = 𝒟` and boxes, where `g` is the
/// increasing derivative `F′_m`. Returns the multiplier and the allocation.
fn dual_solve<T, G>(boxes: &[(T, T)], g: G, demand: T) -> Result<(T, Vec<T>), SfeError>
where
    T: Scalar,
    G: Fn(usize, T) -> T,
{
    let respond = |lambda: T| -> Vec<T> {
        boxes
            .iter()
            .enumerate()
            .map(|(m, &(lo, hi))| {
                if lambda <= g(m, lo) {
                    return lo;
                }
                if lambda >= g(m, hi) {
                    return hi;
                }
                let (a, b) = bisect_bracket(lo, hi, T::tolerance(INNER_TOL), INNER_MAX_ITER, |p| g(m, p) >= lambda);
                a + (b - a) * T::lit(0.5)
            })
            .collect()
    };
    let lo_sum = ordered_sum(boxes.iter().map(|b| b.0));
    let hi_sum = ordered_sum(boxes.iter().map(|b| b.1));
    if demand < lo_sum || demand > hi_sum {
        return Err(SfeError::Infeasible {
            demand: demand.as_f64(),
            lo: lo_sum.as_f64(),
            hi: hi_sum.as_f64(),
        });
    }
    let lam_lo = boxes
        .iter()
        .enumerate()
        .map(|(m, b)| g(m, b.0))
        .fold(T::infinity(), |a, b| a.min(b));
    let lam_hi = boxes
        .iter()
        .enumerate()
        .map(|(m, b)| g(m, b.1))
        .fold(T::neg_infinity(), |a, b| a.max(b));
    if demand == lo_sum {
        return Ok((lam_lo, boxes.iter().map(|b| b.0).collect()));
    }
    let total = |lambda: T| ordered_sum(respond(lambda));
    let (l, h) = bisect_bracket(lam_lo, lam_hi, T::zero(), OUTER_MAX_ITER, |lambda| total(lambda) >= demand);
    let at_l = respond(l);
    let at_h = respond(h);
    let (s_l, s_h) = (ordered_sum(at_l.iter().copied()), ordered_sum(at_h.iter().copied()));
    let theta = if s_h > s_l {
        ((demand - s_l) / (s_h - s_l)).max(T::zero()).min(T::one())
    } else {
        T::one()
    };
    let alloc = at_l.iter().zip(&at_h).map(|(&a, &b)| a + theta * (b - a)).collect();
    Ok((l + theta * (h - l), alloc))
}

fn check_monotone<T, G>(m: usize, lo: T, hi: T, g: G) -> Result<(), SfeError>
where
    T: Scalar,
    G: Fn(T) -> Result<T, SfeError>,
{
    if lo == hi {
        return Ok(());
    }
    let steps = T::from_count(CONVEXITY_GRID - 1);
    let mut prev = g(lo)?;
    for i in 1..CONVEXITY_GRID {
        let x = lo + (hi - lo) * T::from_count(i) / steps;
        let v = g(x)?;
        if v < prev - T::epsilon() * T::lit(16.0) * (T::one() + prev.abs()) {
            return Err(SfeError::Nonconvex { index: m, at: x.as_f64() });
        }
        prev = v;
    }
    Ok(())
}

/// Checks the problem-level preconditions shared by the solver.
pub(crate) fn check_offsets<T: Scalar>(prob: &SfeProblem<T>) -> Result<(), SfeError> {
    let delta = prob.delta();
    if delta == T::zero() {
        return Err(SfeError::DegenerateDenominator);
    }
    if delta * prob.family().sign() < T::zero() {
        return Err(SfeError::OffsetSign(delta.as_f64()));
    }
    // B unbounded above: every participant's rivals must cover demand alone
    if !matches!(prob.family(), SupplyFamily::Affine) {
        for m in 0..prob.len() {
            let c0 = prob.c0(m);
            if c0 < T::zero() {
                return Err(SfeError::OffsetAssumption {
                    index: m,
                    r_others: (c0 + prob.demand()).as_f64(),
                    demand: prob.demand().as_f64(),
                });
            }
        }
    }
    Ok(())
}

/// Supply function equilibrium of `prob`.
pub fn solve_sfe<T: Scalar>(prob: &SfeProblem<T>) -> Result<SfeSolution<T>, SfeError> {
    if prob.len() < 3 {
        return Err(SfeError::TooFewParticipants(prob.len()));
    }
    check_offsets(prob)?;
    let boxes = (0..prob.len())
        .map(|m| tightened_box(prob, m))
        .collect::<Result<Vec<_>, _>>()?;
    for (m, &(lo, hi)) in boxes.iter().enumerate() {
        check_monotone(m, lo, hi, |p| transformed_marginal(prob, m, p))?;
    }
    let (price, allocations) = dual_solve(
        &boxes,
        |m, p| transformed_marginal(prob, m, p).expect("tightened box avoids the singularity"),
        prob.demand(),
    )?;
    let family = prob.family();
    let b = family.b(price);
    if !(price > T::zero() && family.in_range(b)) {
        return Err(SfeError::OutOfDomain(b.as_f64()));
    }
    let parts = prob.participants();
    let w = parts
        .iter()
        .zip(&allocations)
        .map(|(p, &q)| (b * (p.r() - q)).max(T::zero()))
        .collect();
    let profits = parts
        .iter()
        .zip(&allocations)
        .map(|(p, &q)| price * q - p.cost().value(q))
        .collect();
    Ok(SfeSolution { price, allocations, w, profits })
}

/// Competitive benchmark: `C′_m(P_m) = π` on the original boxes.
pub fn competitive_equilibrium<T: Scalar>(prob: &SfeProblem<T>) -> Result<CeSolution<T>, SfeError> {
    let parts = prob.participants();
    let boxes: Vec<(T, T)> = parts.iter().map(|p| (p.p_lo(), p.p_hi())).collect();
    for (m, &(lo, hi)) in boxes.iter().enumerate() {
        check_monotone(m, lo, hi, |p| Ok(parts[m].cost().marginal(p)))?;
    }
    let (price, allocations) = dual_solve(&boxes, |m, p| parts[m].cost().marginal(p), prob.demand())?;
    let profits = parts
        .iter()
        .zip(&allocations)
        .map(|(p, &q)| price * q - p.cost().value(q))
        .collect();
    Ok(CeSolution { price, allocations, profits })
}
