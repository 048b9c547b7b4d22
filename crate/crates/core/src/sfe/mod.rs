//! Price-maker supply function equilibrium.
//!
//! Each participant `m` bids `s_m(π) = R_m − w_m/B(π)` against an inelastic
//! demand `𝒟`. The equilibrium allocation solves a separable convex program
//! in transformed costs `Ĉ_m`, whose multiplier is the clearing price; the
//! bids are then recovered as `w*_m = B(π*)(R_m − P*_m)`.

mod cost;
mod family;
mod lemma;
mod nash;
mod solver;
mod transform;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cost::CostFn;
pub use family::SupplyFamily;
pub use lemma::{lemma_allocation, lemma_price, profit_at};
pub use nash::{best_response_dynamics, nash_check, w_bounds, BrOptions, BrTrajectory, NashEntry, NashReport};
pub use solver::{competitive_equilibrium, solve_sfe, CeSolution};
pub use transform::{tightened_box, transformed_cost, transformed_marginal};

use crate::scalar::{ordered_sum, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SfeError {
    #[error("invalid supply family: {0}")]
    InvalidFamily(String),
    #[error("invalid cost: {0}")]
    InvalidCost(String),
    #[error("participant {index}: {reason}")]
    InvalidParticipant { index: usize, reason: String },
    #[error("demand must be finite, got {0}")]
    InvalidDemand(f64),
    #[error("an equilibrium needs at least 3 participants, got {0}")]
    TooFewParticipants(usize),
    #[error("bid weights must be >= 0 with a positive sum")]
    NonPositiveWeights,
    #[error("offsets sum to demand; clearing price undefined")]
    DegenerateDenominator,
    #[error("offsets minus demand is {0}, the wrong sign for this family")]
    OffsetSign(f64),
    #[error("ratio {0} outside the range of B")]
    OutOfDomain(f64),
    #[error("participant {index}: offsets of the others ({r_others}) below demand ({demand})")]
    OffsetAssumption { index: usize, r_others: f64, demand: f64 },
    #[error("participant {index}: transformed cost singular on [0, {p}]")]
    Singular { index: usize, p: f64 },
    #[error("participant {index}: feasible range is empty")]
    EmptyBox { index: usize },
    #[error("boxes admit total supply [{lo}, {hi}] which excludes demand {demand}")]
    Infeasible { demand: f64, lo: f64, hi: f64 },
    #[error("participant {index}: transformed marginal cost decreases near {at}")]
    Nonconvex { index: usize, at: f64 },
    #[error("participant {0} out of range")]
    NoSuchParticipant(usize),
    #[error("expected {expected} weights, got {got}")]
    WeightCount { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SfeParticipant<T> {
    id: String,
    r: T,
    cost: CostFn<T>,
    p_lo: T,
    p_hi: T,
}

impl<T: Scalar> SfeParticipant<T> {
    pub fn new(id: impl Into<String>, r: T, cost: CostFn<T>, p_lo: T, p_hi: T) -> Result<Self, SfeError> {
        let invalid = |reason: String| SfeError::InvalidParticipant { index: 0, reason };
        if !r.is_finite() {
            return Err(invalid(format!("offset {r} not finite")));
        }
        if !(p_lo.is_finite() && p_hi.is_finite() && p_lo <= p_hi) {
            return Err(invalid(format!("box [{p_lo}, {p_hi}] must be finite and ordered")));
        }
        Ok(Self { id: id.into(), r, cost: cost.validated()?, p_lo, p_hi })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn r(&self) -> T {
        self.r
    }

    pub fn cost(&self) -> &CostFn<T> {
        &self.cost
    }

    pub fn p_lo(&self) -> T {
        self.p_lo
    }

    pub fn p_hi(&self) -> T {
        self.p_hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SfeProblem<T> {
    family: SupplyFamily<T>,
    participants: Vec<SfeParticipant<T>>,
    demand: T,
}

impl<T: Scalar> SfeProblem<T> {
    pub fn new(family: SupplyFamily<T>, participants: Vec<SfeParticipant<T>>, demand: T) -> Result<Self, SfeError> {
        if !demand.is_finite() {
            return Err(SfeError::InvalidDemand(demand.as_f64()));
        }
        if participants.is_empty() {
            return Err(SfeError::TooFewParticipants(0));
        }
        Ok(Self { family: family.validated()?, participants, demand })
    }

    pub fn family(&self) -> &SupplyFamily<T> {
        &self.family
    }

    pub fn participants(&self) -> &[SfeParticipant<T>] {
        &self.participants
    }

    pub fn demand(&self) -> T {
        self.demand
    }

    pub fn len(&self) -> usize {
        self.participants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.participants.is_empty()
    }

    pub fn offsets(&self) -> Vec<T> {
        self.participants.iter().map(|p| p.r).collect()
    }

    pub(crate) fn participant(&self, m: usize) -> Result<&SfeParticipant<T>, SfeError> {
        self.participants.get(m).ok_or(SfeError::NoSuchParticipant(m))
    }

    /// `1ᵀR − 𝒟`.
    pub fn delta(&self) -> T {
        ordered_sum(self.participants.iter().map(|p| p.r)) - self.demand
    }

    /// `R_{−m} − 𝒟`.
    pub(crate) fn c0(&self, m: usize) -> T {
        self.delta() - self.participants[m].r
    }

    pub fn spec(&self) -> SfeProblemSpec<T> {
        SfeProblemSpec {
            family: self.family,
            participants: self
                .participants
                .iter()
                .map(|p| ParticipantSpec {
                    id: p.id.clone(),
                    r_kwh: p.r,
                    cost: p.cost,
                    p_lo_kwh: p.p_lo,
                    p_hi_kwh: p.p_hi,
                })
                .collect(),
            demand_kwh: self.demand,
        }
    }
}

/// Serialized participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticipantSpec<T> {
    pub id: String,
    pub r_kwh: T,
    pub cost: CostFn<T>,
    pub p_lo_kwh: T,
    pub p_hi_kwh: T,
}

/// Serialized problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SfeProblemSpec<T> {
    pub family: SupplyFamily<T>,
    pub participants: Vec<ParticipantSpec<T>>,
    pub demand_kwh: T,
}

impl<T: Scalar> TryFrom<SfeProblemSpec<T>> for SfeProblem<T> {
    type Error = SfeError;

    fn try_from(spec: SfeProblemSpec<T>) -> Result<Self, SfeError> {
        let participants = spec
            .participants
            .into_iter()
            .enumerate()
            .map(|(index, p)| {
                SfeParticipant::new(p.id, p.r_kwh, p.cost, p.p_lo_kwh, p.p_hi_kwh).map_err(|e| match e {
                    SfeError::InvalidParticipant { reason, .. } => SfeError::InvalidParticipant { index, reason },
                    SfeError::InvalidCost(reason) => SfeError::InvalidParticipant { index, reason },
                    other => other,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        SfeProblem::new(spec.family, participants, spec.demand_kwh)
    }
}

/// Equilibrium bids and outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfeSolution<T> {
    #[serde(rename = "price_usd_per_kwh")]
    pub price: T,
    #[serde(rename = "allocations_kwh")]
    pub allocations: Vec<T>,
    pub w: Vec<T>,
    #[serde(rename = "profits_usd")]
    pub profits: Vec<T>,
}
