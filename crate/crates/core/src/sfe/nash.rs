//! Nash oracles for the bid game: exhaustive unilateral-deviation scans and
//! round-robin best-response dynamics.

use serde::Serialize;

use super::lemma::profit_at;
use super::transform::tightened_box;
use super::{SfeError, SfeProblem};
use crate::numeric::golden_max;
use crate::scalar::{ordered_sum, Scalar};

const GAIN_TOL_REL: f64 = 1e-6;
const GOLDEN_ITER: usize = 200;
/// Span of the scan when a bid bound is missing, relative to the current bids.
const OPEN_SPAN: f64 = 1e8;

fn bounds_for_box<T: Scalar>(prob: &SfeProblem<T>, m: usize, w_others: T, p_lo: T, p_hi: T) -> Result<(T, T), SfeError> {
    if !(w_others > T::zero()) {
        return Err(SfeError::NonPositiveWeights);
    }
    let part = prob.participant(m)?;
    let c0 = prob.c0(m);
    // P(w) <= P̄  <=>  a·w >= b·W'
    let (a, b) = (c0 + p_hi, part.r() - p_hi);
    // P(w) >= P̲  <=>  a2·w <= b2·W'
    let (a2, b2) = (c0 + p_lo, part.r() - p_lo);
    if prob.delta() == T::zero() {
        return Err(SfeError::DegenerateDenominator);
    }
    let (mut lo, mut hi) = (T::zero(), T::infinity());
    if a > T::zero() {
        lo = lo.max(b * w_others / a);
    } else if a < T::zero() {
        hi = hi.min(b * w_others / a);
    } else if b > T::zero() {
        return Err(SfeError::EmptyBox { index: m });
    }
    if a2 > T::zero() {
        hi = hi.min(b2 * w_others / a2);
    } else if a2 < T::zero() {
        lo = lo.max(b2 * w_others / a2);
    } else if b2 < T::zero() {
        return Err(SfeError::EmptyBox { index: m });
    }
    if !(lo <= hi) {
        return Err(SfeError::EmptyBox { index: m });
    }
    Ok((lo, hi))
}

/// Bids `w_m` that keep participant `m`'s cleared quantity inside its box
/// when the others bid `w_others` in total. The upper end may be infinite.
pub fn w_bounds<T: Scalar>(prob: &SfeProblem<T>, m: usize, w_others: T) -> Result<(T, T), SfeError> {
    let part = prob.participant(m)?;
    bounds_for_box(prob, m, w_others, part.p_lo(), part.p_hi())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NashEntry<T> {
    /// Profit at the checked profile.
    pub q_star: T,
    pub best_q: T,
    pub best_w: T,
    pub gain: T,
    /// The best deviation sits at the top of an unbounded bid range.
    pub unbounded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NashReport<T> {
    pub entries: Vec<NashEntry<T>>,
    pub max_gain: T,
    /// Number of strictly positive bids; an equilibrium needs at least two.
    pub positive_coordinates: usize,
    pub passed: bool,
}

fn with_coordinate<T: Scalar>(w: &[T], m: usize, x: T) -> Vec<T> {
    let mut v = w.to_vec();
    v[m] = x;
    v
}

/// Scans every participant's unilateral deviations over `grid` log-spaced
/// bids (plus the current bid and the range ends), refines the best one by
/// golden section, and reports the largest profit gain.
pub fn nash_check<T: Scalar>(prob: &SfeProblem<T>, w: &[T], grid: usize) -> Result<NashReport<T>, SfeError> {
    let (_, _, profits) = profit_at(prob, w)?;
    let grid = grid.max(2);
    let mut entries = Vec::with_capacity(w.len());
    for m in 0..w.len() {
        let q_star = profits[m];
        let w_others = ordered_sum(w.iter().enumerate().filter(|(j, _)| *j != m).map(|(_, &x)| x));
        let profit = |x: T| -> Option<T> {
            if !(x >= T::zero()) {
                return None;
            }
            profit_at(prob, &with_coordinate(w, m, x)).ok().map(|(_, _, q)| q[m]).filter(|q| q.is_finite())
        };
        if !(w_others > T::zero()) {
            // alone in the market: scaling the bid scales the price
            entries.push(NashEntry { q_star, best_q: T::infinity(), best_w: T::infinity(), gain: T::infinity(), unbounded: true });
            continue;
        }
        let (wl, wh) = w_bounds(prob, m, w_others)?;
        let base = if w[m] > T::zero() { w[m] } else { w_others };
        let span = T::lit(OPEN_SPAN);
        let top = if wh.is_finite() { wh } else { base.max(w_others) * span };
        let mut bottom = if wl > T::zero() { wl } else { base / span };
        if bottom >= top {
            bottom = top / span;
        }
        let mut points: Vec<T> = (0..grid)
            .map(|i| {
                let t = T::from_count(i) / T::from_count(grid - 1);
                (bottom.ln() + t * (top.ln() - bottom.ln())).exp()
            })
            .collect();
        points.push(wl);
        points.push(w[m].max(wl).min(top));
        points.push(top);
        points.sort_by(|a, b| a.partial_cmp(b).expect("finite bids"));
        points.dedup();

        let values: Vec<Option<T>> = points.iter().map(|&x| profit(x)).collect();
        let mut best: Option<(usize, T)> = None;
        for (i, v) in values.iter().enumerate() {
            if let Some(v) = *v {
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((i, v));
                }
            }
        }
        let (idx, mut best_q) = best.ok_or(SfeError::NonPositiveWeights)?;
        let mut best_w = points[idx];
        let left = points[idx.saturating_sub(1)];
        let right = points[(idx + 1).min(points.len() - 1)];
        if left < right {
            let (x, v) = golden_max(|x| profit(x).unwrap_or(T::neg_infinity()), left, right, GOLDEN_ITER);
            if v > best_q {
                best_q = v;
                best_w = x;
            }
        }
        let gain = (best_q - q_star).max(T::zero());
        let tol = T::lit(GAIN_TOL_REL) * (T::one() + q_star.abs());
        let unbounded = !wh.is_finite() && idx == points.len() - 1 && gain > tol;
        entries.push(NashEntry { q_star, best_q, best_w, gain, unbounded });
    }
    let positive_coordinates = w.iter().filter(|&&x| x > T::zero()).count();
    let max_gain = entries.iter().map(|e| e.gain).fold(T::zero(), |a, b| a.max(b));
    let passed = positive_coordinates >= 2
        && entries
            .iter()
            .all(|e| !e.unbounded && e.gain <= T::lit(GAIN_TOL_REL) * (T::one() + e.q_star.abs()));
    Ok(NashReport { entries, max_gain, positive_coordinates, passed })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrOptions {
    pub rounds: usize,
    /// Stop once no bid moves by more than this relative amount in a round.
    pub rel_tol: f64,
}

impl Default for BrOptions {
    fn default() -> Self {
        Self { rounds: 200, rel_tol: 1e-7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BrTrajectory<T> {
    /// Bid profile after each round, starting with the initial one.
    pub rounds: Vec<Vec<T>>,
    pub converged: bool,
}

impl<T: Scalar> BrTrajectory<T> {
    pub fn last(&self) -> &[T] {
        self.rounds.last().expect("trajectory holds the initial profile")
    }
}

/// Round-robin exact best responses. Given the others' total bid `W'`, the
/// cleared quantity is a bijection of the own bid, so each response is
/// searched by golden section over quantities in the participant's
/// tightened box and mapped back to a bid.
pub fn best_response_dynamics<T: Scalar>(prob: &SfeProblem<T>, w0: &[T], opts: BrOptions) -> Result<BrTrajectory<T>, SfeError> {
    if w0.len() != prob.len() {
        return Err(SfeError::WeightCount { expected: prob.len(), got: w0.len() });
    }
    let boxes = (0..prob.len())
        .map(|m| tightened_box(prob, m))
        .collect::<Result<Vec<_>, _>>()?;
    let family = *prob.family();
    let mut w = w0.to_vec();
    let mut rounds = vec![w.clone()];
    let mut converged = false;
    for _ in 0..opts.rounds.max(1) {
        let before = w.clone();
        for m in 0..w.len() {
            let w_others = ordered_sum(w.iter().enumerate().filter(|(j, _)| *j != m).map(|(_, &x)| x));
            if !(w_others > T::zero()) {
                continue;
            }
            let part = prob.participant(m)?;
            let c0 = prob.c0(m);
            let (lo, hi) = boxes[m];
            let q = |p: T| {
                let price = family.e(w_others / (p + c0));
                price * p - part.cost().value(p)
            };
            let (p, _) = golden_max(q, lo, hi, GOLDEN_ITER);
            w[m] = (w_others * (part.r() - p) / (p + c0)).max(T::zero());
        }
        let change = w
            .iter()
            .zip(&before)
            .map(|(&a, &b)| (a - b).abs() / b.abs().max(T::min_positive_value()))
            .fold(T::zero(), |acc, x| acc.max(x));
        rounds.push(w.clone());
        if change <= T::lit(opts.rel_tol) {
            converged = true;
            break;
        }
    }
    Ok(BrTrajectory { rounds, converged })
}

#[cfg(test)]
mod tests {
    use super::super::{solve_sfe, CostFn, SfeParticipant, SupplyFamily};
    use super::*;

    fn symmetric(family: SupplyFamily<f64>, r: f64, n: usize) -> SfeProblem<f64> {
        let parts = (0..n)
            .map(|i| SfeParticipant::new(format!("m{i}"), r, CostFn::quadratic(2.0), 0.0, 5.0).unwrap())
            .collect();
        SfeProblem::new(family, parts, 2.5).unwrap()
    }

    #[test]
    fn equilibrium_passes_and_perturbation_fails() {
        for (family, r) in [(SupplyFamily::Affine, 0.0), (SupplyFamily::Reciprocal, 2.0)] {
            let prob = symmetric(family, r, 3);
            let sol = solve_sfe(&prob).unwrap();
            let report = nash_check(&prob, &sol.w, 400).unwrap();
            assert!(report.passed, "{family:?} {report:?}");
            let mut bent = sol.w.clone();
            bent[0] *= 2.0;
            let report = nash_check(&prob, &bent, 400).unwrap();
            assert!(report.max_gain > 0.0 && !report.passed);
        }
    }

    #[test]
    fn w_bound_branches() {
        let prob = symmetric(SupplyFamily::Reciprocal, 2.0, 3);
        // P̄ = 5 > R: lower bound clamps to zero; R_{-m} − D + P̲ = 1.5 > 0
        let (lo, hi) = w_bounds(&prob, 0, 2.0).unwrap();
        assert_eq!(lo, 0.0);
        assert!((hi - 2.0 * 2.0 / 1.5).abs() < 1e-12);
        let parts = (0..3)
            .map(|i| SfeParticipant::new(format!("m{i}"), 2.0, CostFn::quadratic(1.0), -4.0, 2.0).unwrap())
            .collect();
        let wide = SfeProblem::new(SupplyFamily::Reciprocal, parts, 1.0).unwrap();
        // R_{-m} − D + P̲ = 3 − 4 = −1
        assert_eq!(w_bounds(&wide, 0, 1.0).unwrap(), (0.0, f64::INFINITY));
    }

    #[test]
    fn bounds_agree_with_allocation() {
        let prob = symmetric(SupplyFamily::Reciprocal, 2.0, 3);
        let (_, hi) = w_bounds(&prob, 1, 2.0).unwrap();
        let alloc = super::super::lemma_allocation(&prob.offsets(), &[1.0, hi, 1.0], 2.5).unwrap();
        assert!(alloc[1].abs() < 1e-12);
    }

    #[test]
    fn dynamics_fixed_point_and_convergence() {
        let prob = symmetric(SupplyFamily::Affine, 0.0, 3);
        let sol = solve_sfe(&prob).unwrap();
        let traj = best_response_dynamics(&prob, &sol.w, BrOptions::default()).unwrap();
        for (a, b) in traj.last().iter().zip(&sol.w) {
            assert!((a - b).abs() < 1e-6 * b);
        }
        let start = [0.3, 0.9, 0.5];
        let traj = best_response_dynamics(&prob, &start, BrOptions::default()).unwrap();
        assert!(traj.converged);
        for (a, b) in traj.last().iter().zip(&sol.w) {
            assert!((a - b).abs() < 1e-6 * b, "{:?} vs {:?}", traj.last(), sol.w);
        }
    }

    #[test]
    fn two_participants_have_unbounded_deviation() {
        let parts = (0..2)
            .map(|i| SfeParticipant::new(format!("m{i}"), 2.0, CostFn::quadratic(1.0), -10.0, 10.0).unwrap())
            .collect();
        let prob = SfeProblem::new(SupplyFamily::Reciprocal, parts, 2.0).unwrap();
        let report = nash_check(&prob, &[1.0, 1.0], 400).unwrap();
        assert!(!report.passed);
        assert!(report.entries.iter().all(|e| e.unbounded));
    }
}
