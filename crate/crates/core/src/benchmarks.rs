//! Retail participation models used as comparison points for the
//! aggregator: a profit-neutral NEM utility with Ramsey prices, a
//! community choice aggregator, producer-only aggregators with one- and
//! two-part prices, and the competitive aggregator itself.
//!
//! Every prosumer is passive here; net consumption is `z = d⁺ − g` with
//! `d⁺` the consumption at the retail rate. Producers are the prosumers with
//! `z < 0`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::{schedule, AggregationError, CompetitiveTarget, FloorBase};
use crate::nem::{passive_optimum, NemError, NemOutcome, NemTariff};
use crate::numeric::bisect_bracket;
use crate::prosumer::{Prosumer, UtilityFn};
use crate::scalar::{ordered_sum, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchmarkError {
    #[error("invalid population: {0}")]
    InvalidPopulation(String),
    #[error("invalid price grid: {0}")]
    InvalidGrid(String),
    #[error("no profit-neutral export rate in [0, {cap}] for spread {spread}")]
    NoRoot { spread: f64, cap: f64 },
    #[error(transparent)]
    Nem(#[from] NemError),
    #[error(transparent)]
    Aggregation(#[from] AggregationError),
}

/// Net position of a community: sellers have `Σ z_n <= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommunitySign {
    NetSeller,
    NetBuyer,
}

impl CommunitySign {
    pub fn from_net(z: f64) -> Self {
        if z <= 0.0 {
            Self::NetSeller
        } else {
            Self::NetBuyer
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CaseId {
    NemRamsey,
    Cca,
    TwoPart,
    OnePart,
    DeraVsNem,
    DeraVsCca,
}

impl CaseId {
    pub const ALL: [CaseId; 6] = [
        CaseId::NemRamsey,
        CaseId::Cca,
        CaseId::TwoPart,
        CaseId::OnePart,
        CaseId::DeraVsNem,
        CaseId::DeraVsCca,
    ];

    /// Case number 1..=6.
    pub fn number(self) -> u8 {
        match self {
            CaseId::NemRamsey => 1,
            CaseId::Cca => 2,
            CaseId::TwoPart => 3,
            CaseId::OnePart => 4,
            CaseId::DeraVsNem => 5,
            CaseId::DeraVsCca => 6,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.number() == n)
    }
}

/// A population of passive prosumers facing a wholesale price `lmp`, served
/// by a utility with network cost `𝒞`.
#[derive(Debug, Clone, PartialEq)]
pub struct Population<T> {
    prosumers: Vec<Prosumer<T>>,
    gamma: T,
    network_cost: Option<T>,
    lmp: T,
}

impl<T: Scalar> Population<T> {
    /// `network_cost = None` means `𝒞 = N·π⁰` for whatever tariff is applied.
    pub fn new(prosumers: Vec<Prosumer<T>>, gamma: T, network_cost: Option<T>, lmp: T) -> Result<Self, BenchmarkError> {
        if !(gamma >= T::zero() && gamma <= T::one()) {
            return Err(BenchmarkError::InvalidPopulation(format!("gamma {gamma} outside [0, 1]")));
        }
        if let Some(c) = network_cost {
            if !c.is_finite() || c < T::zero() {
                return Err(BenchmarkError::InvalidPopulation(format!("network cost {c} must be >= 0")));
            }
        }
        if !lmp.is_finite() {
            return Err(BenchmarkError::InvalidPopulation("lmp must be finite".into()));
        }
        Ok(Self { prosumers, gamma, network_cost, lmp })
    }

    /// `n` copies of one device; the first `round(γn)` own generation `g`,
    /// the rest none.
    pub fn homogeneous(
        n: usize,
        gamma: T,
        device: UtilityFn<T>,
        g: T,
        lmp: T,
        network_cost: Option<T>,
    ) -> Result<Self, BenchmarkError> {
        if !(gamma >= T::zero() && gamma <= T::one()) {
            return Err(BenchmarkError::InvalidPopulation(format!("gamma {gamma} outside [0, 1]")));
        }
        let producers = (gamma * T::from_count(n)).round().to_usize().unwrap_or(0).min(n);
        let prosumers = (0..n)
            .map(|i| {
                let gi = if i < producers { g } else { T::zero() };
                Prosumer::new(format!("p{i}"), vec![device], gi)
                    .map_err(|e| BenchmarkError::InvalidPopulation(e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(prosumers, gamma, network_cost, lmp)
    }

    pub fn prosumers(&self) -> &[Prosumer<T>] {
        &self.prosumers
    }

    pub fn len(&self) -> usize {
        self.prosumers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prosumers.is_empty()
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn lmp(&self) -> T {
        self.lmp
    }

    pub fn network_cost(&self, t: &NemTariff<T>) -> T {
        self.network_cost
            .unwrap_or_else(|| T::from_count(self.prosumers.len()) * t.pi_zero())
    }

    /// `Nπ⁰ − 𝒞`: fixed-charge revenue net of network cost.
    fn fixed_margin(&self, t: &NemTariff<T>) -> T {
        T::from_count(self.prosumers.len()) * t.pi_zero() - self.network_cost(t)
    }
}

/// Passive outcome and net consumption of every member.
fn passive_all<T: Scalar>(pop: &Population<T>, t: &NemTariff<T>) -> Vec<(NemOutcome<T>, T)> {
    pop.prosumers
        .iter()
        .map(|p| {
            let o = passive_optimum(p, t);
            let z = o.d_total - p.generation();
            (o, z)
        })
        .collect()
}

/// Sign of `Σ_n z_n` under passive consumption at tariff `t`.
pub fn community_sign<T: Scalar>(pop: &Population<T>, t: &NemTariff<T>) -> CommunitySign {
    let z = ordered_sum(passive_all(pop, t).into_iter().map(|(_, z)| z));
    CommunitySign::from_net(z.as_f64())
}

/// Profit of the NEM utility: `Σ_n (rate(z_n) − π_LMP)·z_n + Nπ⁰ − 𝒞`.
pub fn utility_surplus<T: Scalar>(pop: &Population<T>, t: &NemTariff<T>) -> T {
    let energy = ordered_sum(
        passive_all(pop, t)
            .into_iter()
            .map(|(_, z)| (t.rate_for(z) - pop.lmp) * z),
    );
    energy + pop.fixed_margin(t)
}

/// Surplus of a passive member of a profit-neutral community aggregator that
/// settles every member at `π⁻` when the community is a net seller and at
/// `π⁺` otherwise.
pub fn cca_surplus<T: Scalar>(p: &Prosumer<T>, t: &NemTariff<T>, sign: CommunitySign) -> T {
    let o = passive_optimum(p, t);
    let rate = match sign {
        CommunitySign::NetSeller => t.pi_minus(),
        CommunitySign::NetBuyer => t.pi_plus(),
    };
    p.utility_unchecked(&o.per_device) - rate * (o.d_total - p.generation()) - t.pi_zero()
}

/// Search settings for the profit-neutral tariff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RamseyConfig<T> {
    pub spread: T,
    pub pi_zero: T,
    pub cap: T,
    pub step: T,
    pub tol: T,
}

impl<T: Scalar> RamseyConfig<T> {
    pub fn new(spread: T, pi_zero: T) -> Self {
        Self {
            spread,
            pi_zero,
            cap: T::lit(0.5),
            step: T::lit(1e-3),
            tol: T::tolerance(1e-9),
        }
    }
}

/// Welfare-maximizing profit-neutral NEM tariff with `π⁺ = π⁻ + spread`.
///
/// The export rate is scanned over `[0, cap]`; grid points where the utility
/// surplus is exactly zero are roots, and every sign change between
/// neighbours is bisected. Among the roots the one with the largest total
/// prosumer surplus wins, ties going to the lowest export rate.
pub fn ramsey_prices<T: Scalar>(pop: &Population<T>, cfg: &RamseyConfig<T>) -> Result<NemTariff<T>, BenchmarkError> {
    if !(cfg.spread >= T::zero() && cfg.spread.is_finite()) {
        return Err(BenchmarkError::InvalidGrid(format!("spread {} must be >= 0", cfg.spread)));
    }
    if !(cfg.step > T::zero() && cfg.cap >= T::zero() && cfg.cap.is_finite()) {
        return Err(BenchmarkError::InvalidGrid("need step > 0 and a finite cap >= 0".into()));
    }
    let tariff = |pi_minus: T| NemTariff::new(pi_minus + cfg.spread, pi_minus, cfg.pi_zero);
    let constraint = |pi_minus: T| -> Result<T, BenchmarkError> { Ok(utility_surplus(pop, &tariff(pi_minus)?)) };
    let objective = |t: &NemTariff<T>| ordered_sum(passive_all(pop, t).into_iter().map(|(o, _)| o.surplus));

    let steps = (cfg.cap / cfg.step).round().to_usize().unwrap_or(0);
    let grid: Vec<T> = (0..=steps)
        .map(|i| (T::from_count(i) * cfg.step).min(cfg.cap))
        .collect();
    let values = grid.iter().map(|&x| constraint(x)).collect::<Result<Vec<_>, _>>()?;

    let mut roots = Vec::new();
    for (i, (&x, &v)) in grid.iter().zip(&values).enumerate() {
        if v == T::zero() {
            roots.push(x);
            continue;
        }
        if let (Some(&xn), Some(&vn)) = (grid.get(i + 1), values.get(i + 1)) {
            if vn != T::zero() && (v < T::zero()) != (vn < T::zero()) {
                let positive_at_hi = vn > T::zero();
                let (lo, hi) = bisect_bracket(x, xn, cfg.tol, 200, |p| {
                    let s = utility_surplus(pop, &tariff(p).expect("spread validated"));
                    (s > T::zero()) == positive_at_hi
                });
                roots.push(lo + (hi - lo) * T::lit(0.5));
            }
        }
    }

    let mut best: Option<(NemTariff<T>, T)> = None;
    for x in roots {
        let t = tariff(x)?;
        let value = objective(&t);
        if best.as_ref().is_none_or(|(_, b)| value > *b) {
            best = Some((t, value));
        }
    }
    best.map(|(t, _)| t).ok_or(BenchmarkError::NoRoot {
        spread: cfg.spread.as_f64(),
        cap: cfg.cap.as_f64(),
    })
}

/// Surplus totals of one participation model. Prosumer surpluses are split by
/// the passive classification at the applied tariff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WelfareLedger<T> {
    pub case_id: CaseId,
    pub dera_surplus: T,
    pub consumer_surplus: T,
    pub producer_surplus: T,
    pub utility_surplus: T,
}

/// Producer-only aggregator with a single purchase price.
#[derive(Debug, Clone, PartialEq)]
pub struct OnePartOutcome<T> {
    pub ledger: WelfareLedger<T>,
    /// Binding purchase price `ω¹`.
    pub omega1: T,
}

/// Producer-only aggregator with an energy price and per-producer fees.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPartOutcome<T> {
    pub ledger: WelfareLedger<T>,
    pub omega1: T,
    /// `(prosumer id, ω²_i)` for every producer.
    pub omega2: Vec<(String, T)>,
}

struct Split<T> {
    consumers: T,
    producers: T,
}

fn split<T: Scalar>(rows: impl IntoIterator<Item = (T, T)>) -> Split<T> {
    let mut s = Split { consumers: T::zero(), producers: T::zero() };
    for (z, surplus) in rows {
        if z < T::zero() {
            s.producers = s.producers + surplus;
        } else {
            s.consumers = s.consumers + surplus;
        }
    }
    s
}

/// NEM with the given tariff; no aggregator.
pub fn nem_case<T: Scalar>(pop: &Population<T>, t: &NemTariff<T>) -> WelfareLedger<T> {
    let s = split(passive_all(pop, t).into_iter().map(|(o, z)| (z, o.surplus)));
    WelfareLedger {
        case_id: CaseId::NemRamsey,
        dera_surplus: T::zero(),
        consumer_surplus: s.consumers,
        producer_surplus: s.producers,
        utility_surplus: utility_surplus(pop, t),
    }
}

/// Every prosumer joins a profit-neutral community aggregator.
pub fn cca_case<T: Scalar>(pop: &Population<T>, t: &NemTariff<T>) -> WelfareLedger<T> {
    let sign = community_sign(pop, t);
    let rate = match sign {
        CommunitySign::NetSeller => t.pi_minus(),
        CommunitySign::NetBuyer => t.pi_plus(),
    };
    let rows = passive_all(pop, t);
    let s = split(
        pop.prosumers
            .iter()
            .zip(&rows)
            .map(|(p, (_, z))| (*z, cca_surplus(p, t, sign))),
    );
    let energy = ordered_sum(rows.iter().map(|(_, z)| (rate - pop.lmp) * *z));
    WelfareLedger {
        case_id: CaseId::Cca,
        dera_surplus: T::zero(),
        consumer_surplus: s.consumers,
        producer_surplus: s.producers,
        utility_surplus: energy + pop.fixed_margin(t),
    }
}

/// `(id, utility, export, floor)` of one aggregated producer.
type ProducerRow<T> = (String, T, T, T);

/// Common part of the producer-only aggregators: producers keep
/// `𝒦_i = U_i + π⁻(g_i − d_i)`, the aggregator earns `(π_LMP − π⁻)` on every
/// exported kWh, and consumers stay on NEM.
fn producer_aggregator<T: Scalar>(pop: &Population<T>, t: &NemTariff<T>, case_id: CaseId) -> (WelfareLedger<T>, Vec<ProducerRow<T>>) {
    let mut producers = Vec::new();
    let mut consumer_surplus = T::zero();
    let mut utility = T::zero();
    let mut dera = T::zero();
    let mut producer_surplus = T::zero();
    for (p, (o, z)) in pop.prosumers.iter().zip(passive_all(pop, t)) {
        if z < T::zero() {
            let export = -z;
            let u = p.utility_unchecked(&o.per_device);
            let floor = u + t.pi_minus() * export;
            dera = dera + (pop.lmp - t.pi_minus()) * export;
            producer_surplus = producer_surplus + floor;
            producers.push((p.id().to_string(), u, export, floor));
        } else {
            consumer_surplus = consumer_surplus + o.surplus;
            utility = utility + (t.pi_plus() - pop.lmp) * z;
        }
    }
    let ledger = WelfareLedger {
        case_id,
        dera_surplus: dera,
        consumer_surplus,
        producer_surplus,
        utility_surplus: utility,
    };
    (ledger, producers)
}

pub fn one_part<T: Scalar>(pop: &Population<T>, t: &NemTariff<T>) -> OnePartOutcome<T> {
    let (ledger, _) = producer_aggregator(pop, t, CaseId::OnePart);
    OnePartOutcome { ledger, omega1: t.pi_minus() }
}

/// The aggregator's profit does not depend on `ω¹`; it is reported at `π⁻`
/// and each fee is set so the producer's floor binds.
pub fn two_part<T: Scalar>(pop: &Population<T>, t: &NemTariff<T>) -> TwoPartOutcome<T> {
    let (ledger, producers) = producer_aggregator(pop, t, CaseId::TwoPart);
    let omega1 = t.pi_minus();
    let omega2 = producers
        .into_iter()
        .map(|(id, u, export, floor)| (id, u + omega1 * export - floor))
        .collect();
    TwoPartOutcome { ledger, omega1, omega2 }
}

/// The competitive aggregator serving every prosumer with floor `base`.
pub fn dera_case<T: Scalar>(
    pop: &Population<T>,
    t: &NemTariff<T>,
    base: FloorBase,
    zeta_pct: T,
    case_id: CaseId,
) -> Result<WelfareLedger<T>, BenchmarkError> {
    let target = CompetitiveTarget::new(base, zeta_pct, *t)?;
    let plan = schedule(&pop.prosumers, &target, pop.lmp)?;
    let s = split(
        passive_all(pop, t)
            .into_iter()
            .zip(&plan.entries)
            .map(|((_, z), e)| (z, e.prosumer_surplus)),
    );
    Ok(WelfareLedger {
        case_id,
        dera_surplus: plan.dera_profit,
        consumer_surplus: s.consumers,
        producer_surplus: s.producers,
        utility_surplus: pop.fixed_margin(t),
    })
}

/// Ledger of one case at tariff `t` (the Ramsey tariff in the case studies).
pub fn run_case<T: Scalar>(case_id: CaseId, pop: &Population<T>, t: &NemTariff<T>, zeta_pct: T) -> Result<WelfareLedger<T>, BenchmarkError> {
    Ok(match case_id {
        CaseId::NemRamsey => nem_case(pop, t),
        CaseId::Cca => cca_case(pop, t),
        CaseId::TwoPart => two_part(pop, t).ledger,
        CaseId::OnePart => one_part(pop, t).ledger,
        CaseId::DeraVsNem => dera_case(pop, t, FloorBase::NemPassive, zeta_pct, case_id)?,
        CaseId::DeraVsCca => {
            let sign = community_sign(pop, t);
            dera_case(pop, t, FloorBase::CcaPassive(sign), zeta_pct, case_id)?
        }
    })
}
