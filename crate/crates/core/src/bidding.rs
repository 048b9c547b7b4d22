//! Truthful price-taker supply functions and their inverse offer curves.
//!
//! A supply curve maps a price to net injection (positive = production):
//! `𝓕(π) = G − Σ count·f(π)`. It is nondecreasing in price, equals
//! `q_min = G − Σ count·d_hi` below every device's saturation range and
//! `q_max = G − Σ count·d_lo` above it.

use thiserror::Error;

use crate::numeric::bisect_bracket;
use crate::prosumer::{Prosumer, UtilityFn};
use crate::scalar::{ordered_sum, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BiddingError {
    #[error("generation must be finite and >= 0, got {0}")]
    InvalidGeneration(f64),
    #[error("generation estimate needs at least one sample")]
    EmptySamples,
    #[error("target population size must be at least 1")]
    EmptyTarget,
    #[error("quantity {q} kWh outside curve range [{q_min}, {q_max}]")]
    OutOfRange { q: f64, q_min: f64, q_max: f64 },
    #[error("quantity {q} kWh is only approached asymptotically")]
    NotAttained { q: f64 },
}

const INVERSE_MAX_ITER: usize = 400;
const MAX_EXPANSIONS: usize = 200;

/// Aggregated net-injection curve of a group of devices behind a common meter
/// (or a common aggregator) with total generation `G`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupplyCurve<T> {
    id: String,
    generation: T,
    groups: Vec<(UtilityFn<T>, usize)>,
    breakpoints: Vec<T>,
}

impl<T: Scalar> SupplyCurve<T> {
    /// Curve of `groups` (device, multiplicity) with generation `generation`.
    pub fn new(id: impl Into<String>, generation: T, groups: Vec<(UtilityFn<T>, usize)>) -> Result<Self, BiddingError> {
        if !generation.is_finite() || generation < T::zero() {
            return Err(BiddingError::InvalidGeneration(generation.as_f64()));
        }
        let mut breakpoints: Vec<T> = groups
            .iter()
            .filter(|(_, n)| *n > 0)
            .flat_map(|(u, _)| {
                let (lo, hi) = u.price_range();
                [lo, hi]
            })
            .filter(|p| p.is_finite())
            .collect();
        breakpoints.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
        breakpoints.dedup();
        Ok(Self { id: id.into(), generation, groups, breakpoints })
    }

    /// `n` identical devices, as in a homogeneous population.
    pub fn homogeneous(id: impl Into<String>, generation: T, device: UtilityFn<T>, n: usize) -> Result<Self, BiddingError> {
        Self::new(id, generation, vec![(device, n)])
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn generation(&self) -> T {
        self.generation
    }

    pub fn groups(&self) -> &[(UtilityFn<T>, usize)] {
        &self.groups
    }

    /// Sorted finite prices where the curve changes form.
    pub fn breakpoints(&self) -> &[T] {
        &self.breakpoints
    }

    /// Total consumption `Σ count·f(π)`.
    pub fn consumption(&self, price: T) -> T {
        ordered_sum(
            self.groups
                .iter()
                .map(|(u, n)| T::from_count(*n) * u.inverse_demand(price)),
        )
    }

    /// Net injection at `price`.
    pub fn eval(&self, price: T) -> T {
        self.generation - self.consumption(price)
    }

    pub fn q_min(&self) -> T {
        self.generation - ordered_sum(self.groups.iter().map(|(u, n)| T::from_count(*n) * u.d_hi()))
    }

    pub fn q_max(&self) -> T {
        self.generation - ordered_sum(self.groups.iter().map(|(u, n)| T::from_count(*n) * u.d_lo()))
    }

    /// Smallest price at which the curve injects at least `q`.
    ///
    /// At `q = q_min` every price qualifies; the lowest breakpoint is returned.
    pub fn inverse(&self, q: T) -> Result<T, BiddingError> {
        let (q_min, q_max) = (self.q_min(), self.q_max());
        if !(q >= q_min && q <= q_max) {
            return Err(BiddingError::OutOfRange {
                q: q.as_f64(),
                q_min: q_min.as_f64(),
                q_max: q_max.as_f64(),
            });
        }
        let unbounded = self
            .groups
            .iter()
            .any(|(u, n)| *n > 0 && u.d_lo() < u.d_hi() && !u.price_range().1.is_finite());
        if unbounded && q >= q_max {
            return Err(BiddingError::NotAttained { q: q.as_f64() });
        }
        let (first, last) = match (self.breakpoints.first(), self.breakpoints.last()) {
            (Some(&f), Some(&l)) => (f, l),
            _ => return Ok(T::zero()),
        };
        if self.eval(first) >= q {
            return Ok(first);
        }
        let mut hi = last;
        let mut step = T::one().max(last.abs());
        let mut expansions = 0;
        while self.eval(hi) < q {
            if expansions == MAX_EXPANSIONS || !hi.is_finite() {
                return Err(BiddingError::NotAttained { q: q.as_f64() });
            }
            hi = hi + step;
            step = step + step;
            expansions += 1;
        }
        let (_, p) = bisect_bracket(first, hi, T::zero(), INVERSE_MAX_ITER, |p| self.eval(p) >= q);
        Ok(p)
    }

    /// `(q, inverse(q))` for every quantity in `q_grid`.
    pub fn sample_inverse(&self, q_grid: &[T]) -> Result<Vec<(T, T)>, BiddingError> {
        q_grid.iter().map(|&q| Ok((q, self.inverse(q)?))).collect()
    }

    /// Piecewise-linear export: `(eval(p), p)` at every grid price and every
    /// breakpoint, sorted by price.
    pub fn export_points(&self, price_grid: &[T]) -> Vec<(T, T)> {
        let mut prices: Vec<T> = price_grid
            .iter()
            .copied()
            .chain(self.breakpoints.iter().copied())
            .filter(|p| p.is_finite())
            .collect();
        prices.sort_by(|a, b| a.partial_cmp(b).expect("finite prices"));
        prices.dedup();
        prices.into_iter().map(|p| (self.eval(p), p)).collect()
    }
}

/// Bid/offer curve of one prosumer: `𝓢(π) = g − Σ_k f_k(π)`.
pub fn prosumer_supply<T: Scalar>(p: &Prosumer<T>) -> SupplyCurve<T> {
    let groups = p.devices().iter().map(|u| (*u, 1)).collect();
    SupplyCurve::new(p.id(), p.generation(), groups).expect("prosumer generation validated")
}

/// Aggregate curve of a population. Without an estimate `G = Σ g_n`.
pub fn aggregate_supply<T: Scalar>(
    id: impl Into<String>,
    pop: &[Prosumer<T>],
    g_estimate: Option<T>,
) -> Result<SupplyCurve<T>, BiddingError> {
    let g = g_estimate.unwrap_or_else(|| ordered_sum(pop.iter().map(|p| p.generation())));
    let groups = pop
        .iter()
        .flat_map(|p| p.devices().iter().map(|u| (*u, 1)))
        .collect();
    SupplyCurve::new(id, g, groups)
}

/// `n_target × mean(samples)`.
pub fn estimate_generation<T: Scalar>(samples: &[T], n_target: usize) -> Result<T, BiddingError> {
    if samples.is_empty() {
        return Err(BiddingError::EmptySamples);
    }
    if n_target == 0 {
        return Err(BiddingError::EmptyTarget);
    }
    let mean = ordered_sum(samples.iter().copied()) / T::from_count(samples.len());
    Ok(T::from_count(n_target) * mean)
}
