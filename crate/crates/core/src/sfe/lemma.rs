//! Market clearing for a given bid profile: `π = E(1ᵀw / (1ᵀR − 𝒟))` and
//! `s_m = R_m − (1ᵀR − 𝒟)·w_m/1ᵀw`.

use super::{SfeError, SfeProblem, SupplyFamily};
use crate::scalar::{ordered_sum, Scalar};

fn check_weights<T: Scalar>(r: &[T], w: &[T]) -> Result<T, SfeError> {
    if r.len() != w.len() {
        return Err(SfeError::WeightCount { expected: r.len(), got: w.len() });
    }
    if w.iter().any(|&x| !(x >= T::zero() && x.is_finite())) {
        return Err(SfeError::NonPositiveWeights);
    }
    let total = ordered_sum(w.iter().copied());
    if total <= T::zero() {
        return Err(SfeError::NonPositiveWeights);
    }
    Ok(total)
}

fn delta<T: Scalar>(r: &[T], demand: T) -> Result<T, SfeError> {
    let d = ordered_sum(r.iter().copied()) - demand;
    if d == T::zero() {
        return Err(SfeError::DegenerateDenominator);
    }
    Ok(d)
}

/// Clearing price of the bid profile `w`.
pub fn lemma_price<T: Scalar>(family: &SupplyFamily<T>, r: &[T], w: &[T], demand: T) -> Result<T, SfeError> {
    let total = check_weights(r, w)?;
    let ratio = total / delta(r, demand)?;
    if !family.in_range(ratio) {
        return Err(SfeError::OutOfDomain(ratio.as_f64()));
    }
    Ok(family.e(ratio))
}

/// Cleared quantities; the same for every family.
pub fn lemma_allocation<T: Scalar>(r: &[T], w: &[T], demand: T) -> Result<Vec<T>, SfeError> {
    let total = check_weights(r, w)?;
    let d = delta(r, demand)?;
    Ok(r.iter().zip(w).map(|(&rm, &wm)| rm - d * (wm / total)).collect())
}

/// Price, allocations and profits `Q_m = πP_m − C_m(P_m)` of a bid profile.
pub fn profit_at<T: Scalar>(prob: &SfeProblem<T>, w: &[T]) -> Result<(T, Vec<T>, Vec<T>), SfeError> {
    let r = prob.offsets();
    let price = lemma_price(prob.family(), &r, w, prob.demand())?;
    let alloc = lemma_allocation(&r, w, prob.demand())?;
    let profits = prob
        .participants()
        .iter()
        .zip(&alloc)
        .map(|(p, &q)| price * q - p.cost().value(q))
        .collect();
    Ok((price, alloc, profits))
}
