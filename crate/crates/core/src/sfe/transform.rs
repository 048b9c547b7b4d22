//! Transformed costs `Ĉ_m` of the equilibrium program.
//!
//! With `c0 = R_{−m} − 𝒟`, participant `m`'s first-order condition reads
//! `C′_m(P)·𝒥_m(P) = π` where `𝒥_m(P) = (P + c0)/((1−ℳ)P + c0)`, and
//! `Ĉ_m(P) = ∫₀^P C′_m 𝒥_m = C_m(P)𝒥_m(P) − ∫₀^P 𝒥′_m C_m`.

use super::{CostFn, SfeError, SfeProblem};
use crate::numeric::adaptive_simpson;
use crate::scalar::Scalar;

const QUAD_TOL: f64 = 1e-10;
const SINGULAR_MARGIN: f64 = 1e-9;
/// Below this `|1 − ℳ|` the logarithmic closed form loses precision.
const CLOSED_FORM_MIN_A: f64 = 1e-3;

fn denominator<T: Scalar>(m_const: T, c0: T, p: T) -> T {
    (T::one() - m_const) * p + c0
}

pub(crate) fn jacobian<T: Scalar>(m_const: T, c0: T, p: T) -> T {
    (p + c0) / denominator(m_const, c0, p)
}

fn jacobian_prime<T: Scalar>(m_const: T, c0: T, p: T) -> T {
    let den = denominator(m_const, c0, p);
    m_const * c0 / (den * den)
}

/// `Ĉ′_m(P) = C′_m(P)·𝒥_m(P)`.
pub fn transformed_marginal<T: Scalar>(prob: &SfeProblem<T>, m: usize, p: T) -> Result<T, SfeError> {
    let part = prob.participant(m)?;
    let (mc, c0) = (prob.family().m(), prob.c0(m));
    if denominator(mc, c0, p) == T::zero() {
        return Err(SfeError::Singular { index: m, p: p.as_f64() });
    }
    Ok(part.cost().marginal(p) * jacobian(mc, c0, p))
}

/// `Ĉ_m(P)`. The `𝒥` denominator must keep one sign on the segment `[0, P]`.
pub fn transformed_cost<T: Scalar>(prob: &SfeProblem<T>, m: usize, p: T) -> Result<T, SfeError> {
    let part = prob.participant(m)?;
    let (mc, c0) = (prob.family().m(), prob.c0(m));
    let d0 = denominator(mc, c0, T::zero());
    let dp = denominator(mc, c0, p);
    if d0 == T::zero() || dp == T::zero() || (d0 > T::zero()) != (dp > T::zero()) {
        return Err(SfeError::Singular { index: m, p: p.as_f64() });
    }
    if p == T::zero() {
        return Ok(T::zero());
    }
    let cost = *part.cost();
    if let CostFn::Quadratic { linear, quad } = cost {
        let a = T::one() - mc;
        if a == T::zero() {
            let lin = linear * (p + p * p / (T::lit(2.0) * c0));
            let sq = quad * (p * p * T::lit(0.5) + p * p * p / (T::lit(3.0) * c0));
            return Ok(lin + sq);
        }
        if a.abs() >= T::lit(CLOSED_FORM_MIN_A) {
            let k = c0 * (a - T::one()) / a;
            let log = ((a * p + c0) / c0).abs().ln();
            let lin = linear * (p / a + k / a * log);
            let sq = quad * (p * p / (T::lit(2.0) * a) + k * (p / a - c0 / (a * a) * log));
            return Ok(lin + sq);
        }
    }
    let tail = adaptive_simpson(
        &|y: T| jacobian_prime(mc, c0, y) * cost.value(y),
        T::zero(),
        p,
        T::tolerance(QUAD_TOL),
    );
    Ok(cost.value(p) * jacobian(mc, c0, p) - tail)
}

/// Participant `m`'s box intersected with the range reachable by a
/// nonnegative bid and with the side of the `𝒥` singularity where `𝒥 > 0`.
/// Open ends are pulled in by a small relative margin.
pub fn tightened_box<T: Scalar>(prob: &SfeProblem<T>, m: usize) -> Result<(T, T), SfeError> {
    let part = prob.participant(m)?;
    let family = prob.family();
    let (sigma, mc) = (family.sign(), family.m());
    let delta = prob.delta();
    let c0 = prob.c0(m);
    let margin = T::tolerance(SINGULAR_MARGIN) * (T::one() + c0.abs() + delta.abs());
    let (mut lo, mut hi) = (part.p_lo(), part.p_hi());

    // reachable range: σ(R_m − P) ≥ 0 and σ(P + c0) > 0
    if sigma > T::zero() {
        hi = hi.min(part.r());
        lo = lo.max(-c0 + margin);
    } else {
        lo = lo.max(part.r());
        hi = hi.min(-c0 - margin);
    }

    let a = T::one() - mc;
    if a == T::zero() {
        if sigma * c0 <= T::zero() {
            return Err(SfeError::Singular { index: m, p: T::zero().as_f64() });
        }
    } else {
        let root = -c0 / a;
        if sigma * a > T::zero() {
            lo = lo.max(root + margin);
        } else {
            hi = hi.min(root - margin);
        }
    }

    if !(lo <= hi) {
        return Err(SfeError::EmptyBox { index: m });
    }
    Ok((lo, hi))
}
