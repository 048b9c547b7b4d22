//! Models for aggregating behind-the-meter prosumers into a wholesale
//! electricity market.
//!
//! * [`prosumer`]: device utilities and inverse demand.
//! * [`nem`]: net energy metering bills and passive/active optima.
//! * [`aggregation`]: the competitive aggregator's schedule and payments.
//! * [`bidding`] and [`clearing`]: price-taker supply curves and market clearing.
//! * [`sfe`]: price-maker supply function equilibrium and its Nash oracles.
//! * [`benchmarks`]: retail participation models compared in the case studies.
//!
//! Every model is generic over a [`Scalar`] (`f32` or `f64`). The aliases at
//! the crate root fix it to `f64`; [`single_precision`] has the `f32` ones.

// `!(x <= y)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregation;
pub mod benchmarks;
pub mod bidding;
pub mod clearing;
pub mod nem;
mod numeric;
pub mod prosumer;
mod scalar;
pub mod sfe;

pub use scalar::Scalar;

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type UtilityFn = prosumer::UtilityFn<f64>;
pub type UtilityFamily = prosumer::UtilityFamily<f64>;
pub type Prosumer = prosumer::Prosumer<f64>;
pub type NemTariff = nem::NemTariff<f64>;
pub type NemOutcome = nem::NemOutcome<f64>;
pub type CompetitiveTarget = aggregation::CompetitiveTarget<f64>;
pub type DeraSchedule = aggregation::DeraSchedule<f64>;
pub type SupplyCurve = bidding::SupplyCurve<f64>;
pub type ClearingResult = clearing::ClearingResult<f64>;
pub type Population = benchmarks::Population<f64>;
pub type WelfareLedger = benchmarks::WelfareLedger<f64>;
pub type SfeProblem = sfe::SfeProblem<f64>;
pub type SfeSolution = sfe::SfeSolution<f64>;
pub type SfeParticipant = sfe::SfeParticipant<f64>;
pub type SupplyFamily = sfe::SupplyFamily<f64>;
pub type CostFn = sfe::CostFn<f64>;

/// The same aliases in single precision. Tolerances are floored at a small
/// multiple of `f32::EPSILON`, so results are correspondingly coarser.
pub mod single_precision {
    pub type UtilityFn = crate::prosumer::UtilityFn<f32>;
    pub type UtilityFamily = crate::prosumer::UtilityFamily<f32>;
    pub type Prosumer = crate::prosumer::Prosumer<f32>;
    pub type NemTariff = crate::nem::NemTariff<f32>;
    pub type SupplyCurve = crate::bidding::SupplyCurve<f32>;
    pub type ClearingResult = crate::clearing::ClearingResult<f32>;
    pub type SfeProblem = crate::sfe::SfeProblem<f32>;
    pub type SfeSolution = crate::sfe::SfeSolution<f32>;
}
