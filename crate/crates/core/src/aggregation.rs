//! Profit-maximizing competitive aggregation.
//!
//! The aggregator schedules every device of every customer and charges a
//! payment `ω_n`, subject to each customer keeping at least a floor surplus
//! `𝒦_n(g_n)` taken from a competing retail option. At a wholesale price
//! `π`, the optimum consumes `d*_nk = f_nk(π)` regardless of `g_n` and sets
//! `ω*_n = U_n(d*_n) − 𝒦_n(g_n)`, so the floor binds for every customer.

use thiserror::Error;

use crate::benchmarks::{cca_surplus, CommunitySign};
use crate::nem::{active_optimum, passive_optimum, NemError, NemTariff};
use crate::prosumer::Prosumer;
use crate::scalar::{ordered_sum, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AggregationError {
    #[error("markup must be a finite percentage >= 0, got {0}")]
    InvalidMarkup(f64),
    #[error("competitive floor for prosumer {0} is not finite")]
    NonFiniteFloor(String),
    #[error(transparent)]
    Nem(#[from] NemError),
}

/// The retail option a customer would otherwise choose.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FloorBase {
    NemPassive,
    NemActive,
    /// Passive member of a community choice aggregator with the given net position.
    CcaPassive(CommunitySign),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompetitiveTarget<T> {
    base: FloorBase,
    zeta_pct: T,
    tariff: NemTariff<T>,
}

impl<T: Scalar> CompetitiveTarget<T> {
    pub fn new(base: FloorBase, zeta_pct: T, tariff: NemTariff<T>) -> Result<Self, AggregationError> {
        if !zeta_pct.is_finite() || zeta_pct < T::zero() {
            return Err(AggregationError::InvalidMarkup(zeta_pct.as_f64()));
        }
        Ok(Self { base, zeta_pct, tariff })
    }

    pub fn base(&self) -> FloorBase {
        self.base
    }

    pub fn zeta_pct(&self) -> T {
        self.zeta_pct
    }

    pub fn tariff(&self) -> &NemTariff<T> {
        &self.tariff
    }
}

/// `𝒦(g) = (1 + ζ/100)·S_base(g)`.
pub fn competitive_floor<T: Scalar>(target: &CompetitiveTarget<T>, p: &Prosumer<T>) -> Result<T, AggregationError> {
    let base = match target.base {
        FloorBase::NemPassive => passive_optimum(p, &target.tariff).surplus,
        FloorBase::NemActive => active_optimum(p, &target.tariff)?.surplus,
        FloorBase::CcaPassive(sign) => cca_surplus(p, &target.tariff, sign),
    };
    let floor = (T::one() + target.zeta_pct / T::lit(100.0)) * base;
    if !floor.is_finite() {
        return Err(AggregationError::NonFiniteFloor(p.id().to_string()));
    }
    Ok(floor)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleEntry<T> {
    pub prosumer_id: String,
    /// Scheduled consumption per device (kWh).
    pub consumption: Vec<T>,
    /// Payment `ω_n` from the customer to the aggregator; negative means the aggregator pays.
    pub payment: T,
    pub prosumer_surplus: T,
    pub floor: T,
    /// `ω_n − π·(1ᵀd_n − g_n)`.
    pub profit: T,
    /// False when serving this customer at the floor loses money.
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeraSchedule<T> {
    pub entries: Vec<ScheduleEntry<T>>,
    pub lmp: T,
    pub dera_profit: T,
}

impl<T: Scalar> DeraSchedule<T> {
    /// Customers whose floor cannot be met profitably.
    pub fn infeasible(&self) -> impl Iterator<Item = &ScheduleEntry<T>> {
        self.entries.iter().filter(|e| !e.feasible)
    }
}

/// Optimal schedule and payments for a population at wholesale price `lmp`.
///
/// Unprofitable contracts are kept in the schedule with their negative
/// contribution and flagged `feasible = false`.
pub fn schedule<T: Scalar>(
    pop: &[Prosumer<T>],
    target: &CompetitiveTarget<T>,
    lmp: T,
) -> Result<DeraSchedule<T>, AggregationError> {
    let mut entries = Vec::with_capacity(pop.len());
    for p in pop {
        let floor = competitive_floor(target, p)?;
        let consumption = p.consumption_at(lmp);
        let utility = p.utility_unchecked(&consumption);
        let payment = utility - floor;
        let net = ordered_sum(consumption.iter().copied()) - p.generation();
        let profit = payment - lmp * net;
        entries.push(ScheduleEntry {
            prosumer_id: p.id().to_string(),
            consumption,
            payment,
            prosumer_surplus: utility - payment,
            floor,
            profit,
            feasible: profit >= T::zero(),
        });
    }
    let dera_profit = ordered_sum(entries.iter().map(|e| e.profit));
    Ok(DeraSchedule { entries, lmp, dera_profit })
}
