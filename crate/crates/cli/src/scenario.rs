//! Scenario files: a single JSON document with unit-suffixed keys.
//!
//! Every section except `name` is optional; each subcommand requires the
//! sections it reads. Unknown keys are rejected everywhere.

use std::fs;
use std::path::{Path, PathBuf};

use dera_core::benchmarks::{CaseId, Population, RamseyConfig};
use dera_core::nem::NemTariff;
use dera_core::prosumer::{Prosumer, UtilityFamily, UtilityFn};
use dera_core::sfe::{SfeProblem, SfeProblemSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("scenario has no `{0}` section")]
    Missing(&'static str),
}

fn invalid(field: impl Into<String>, message: impl ToString) -> ScenarioError {
    ScenarioError::Invalid { field: field.into(), message: message.to_string() }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub lmp_usd_per_kwh: Option<f64>,
    #[serde(default)]
    pub tariff: Option<TariffSpec>,
    #[serde(default)]
    pub population: Option<PopulationSpec>,
    #[serde(default)]
    pub cases: Option<CasesSpec>,
    #[serde(default)]
    pub bid_curve: Option<BidCurveSpec>,
    #[serde(default)]
    pub market: Option<MarketSpec>,
    #[serde(default)]
    pub sfe: Option<SfeSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TariffSpec {
    Fixed {
        pi_plus_usd_per_kwh: f64,
        pi_minus_usd_per_kwh: f64,
        #[serde(default)]
        pi_zero_usd: f64,
    },
    /// Profit-neutral tariff with `π⁺ = π⁻ + spread`, solved per population.
    Ramsey {
        spread_usd_per_kwh: f64,
        #[serde(default)]
        pi_zero_usd: f64,
        #[serde(default = "default_cap")]
        cap_usd_per_kwh: f64,
        #[serde(default = "default_step")]
        step_usd_per_kwh: f64,
    },
}

fn default_cap() -> f64 {
    0.5
}

fn default_step() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DeviceSpec {
    Quadratic {
        alpha_usd_per_kwh: f64,
        beta_usd_per_kwh2: f64,
        d_hi_kwh: f64,
    },
    Log {
        a_usd: f64,
        scale_kwh: f64,
        #[serde(default)]
        d_lo_kwh: f64,
        d_hi_kwh: f64,
    },
    /// `a` carries units of $/kWh^(1−η).
    Isoelastic {
        a: f64,
        eta: f64,
        d_lo_kwh: f64,
        d_hi_kwh: f64,
    },
}

impl DeviceSpec {
    pub fn build(&self) -> Result<UtilityFn<f64>, dera_core::prosumer::ProsumerError> {
        match *self {
            DeviceSpec::Quadratic { alpha_usd_per_kwh, beta_usd_per_kwh2, d_hi_kwh } => {
                UtilityFn::quadratic(alpha_usd_per_kwh, beta_usd_per_kwh2, d_hi_kwh)
            }
            DeviceSpec::Log { a_usd, scale_kwh, d_lo_kwh, d_hi_kwh } => {
                UtilityFn::new(UtilityFamily::Log { a: a_usd, scale: scale_kwh }, d_lo_kwh, d_hi_kwh)
            }
            DeviceSpec::Isoelastic { a, eta, d_lo_kwh, d_hi_kwh } => {
                UtilityFn::new(UtilityFamily::Isoelastic { a, eta }, d_lo_kwh, d_hi_kwh)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Quadratic,
    Log,
    Isoelastic,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProsumerSpec {
    pub id: String,
    pub devices: Vec<DeviceSpec>,
    pub g_kwh: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PopulationSpec {
    /// `n` copies of one device; the first `round(γn)` generate `g_kwh`.
    Homogeneous {
        n: usize,
        gamma: f64,
        device: DeviceSpec,
        g_kwh: f64,
    },
    Explicit {
        prosumers: Vec<ProsumerSpec>,
    },
    /// Seeded draw of devices from the listed families; needs `seed`.
    Random {
        n: usize,
        families: Vec<FamilyName>,
        devices_min: usize,
        devices_max: usize,
        g_max_kwh: f64,
    },
}

/// Either an explicit list or `count` evenly spaced points from `start` to `stop`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    List(Vec<f64>),
    Range(RangeSpec),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSpec {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl GridSpec {
    pub fn points(&self) -> Vec<f64> {
        match self {
            GridSpec::List(v) => v.clone(),
            GridSpec::Range(r) if r.count <= 1 => vec![r.start; r.count],
            GridSpec::Range(r) => {
                let last = (r.count - 1) as f64;
                (0..r.count)
                    .map(|i| r.start + (r.stop - r.start) * i as f64 / last)
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CasesSpec {
    /// Case numbers 1..=6.
    #[serde(default = "all_cases")]
    pub ids: Vec<u8>,
    pub gamma_grid: GridSpec,
    pub g_grid_kwh: GridSpec,
    #[serde(default)]
    pub zeta_pct: f64,
    #[serde(default)]
    pub network_cost_usd: Option<f64>,
}

fn all_cases() -> Vec<u8> {
    (1..=6).collect()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BidCurveSpec {
    pub price_grid_usd_per_kwh: GridSpec,
    /// Overrides the aggregate generation `Σ g_n`.
    #[serde(default)]
    pub generation_kwh: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSpec {
    /// Inelastic net demand the curves must inject; negative for net buying.
    pub demand_kwh: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SfeSpec {
    pub problem: SfeProblemSpec<f64>,
    #[serde(default = "default_grid")]
    pub nash_grid: usize,
    #[serde(default = "default_rounds")]
    pub br_rounds: usize,
    #[serde(default = "default_rel_tol")]
    pub br_rel_tol: f64,
    /// Best-response dynamics start from this multiple of the equilibrium bids.
    #[serde(default = "default_start_scale")]
    pub br_start_scale: f64,
}

fn default_grid() -> usize {
    2000
}

fn default_rounds() -> usize {
    200
}

fn default_rel_tol() -> f64 {
    1e-7
}

fn default_start_scale() -> f64 {
    1.3
}

impl Scenario {
    pub fn from_path(path: &Path) -> Result<Self, ScenarioError> {
        let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    /// Parses and validates a scenario document.
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| ScenarioError::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        if self.name.trim().is_empty() {
            return Err(invalid("name", "must not be empty"));
        }
        if let Some(lmp) = self.lmp_usd_per_kwh {
            if !lmp.is_finite() {
                return Err(invalid("lmp_usd_per_kwh", "must be finite"));
            }
        }
        if let Some(t) = &self.tariff {
            self.tariff_for(t)?;
        }
        if let Some(pop) = &self.population {
            if matches!(pop, PopulationSpec::Random { .. }) && self.seed.is_none() {
                return Err(invalid("seed", "required by a random population"));
            }
            self.prosumers()?;
        }
        if let Some(c) = &self.cases {
            for id in &c.ids {
                CaseId::from_number(*id).ok_or_else(|| invalid("cases.ids", format!("unknown case id {id}")))?;
            }
            if c.gamma_grid.points().is_empty() || c.g_grid_kwh.points().is_empty() {
                return Err(invalid("cases", "grids must not be empty"));
            }
            if !(c.zeta_pct.is_finite() && c.zeta_pct >= 0.0) {
                return Err(invalid("cases.zeta_pct", "must be >= 0"));
            }
            if !matches!(self.population, Some(PopulationSpec::Homogeneous { .. })) {
                return Err(invalid("population", "the case sweep needs a homogeneous population"));
            }
            if self.tariff.is_none() {
                return Err(ScenarioError::Missing("tariff"));
            }
            if self.lmp_usd_per_kwh.is_none() {
                return Err(ScenarioError::Missing("lmp_usd_per_kwh"));
            }
        }
        if let Some(b) = &self.bid_curve {
            if b.price_grid_usd_per_kwh.points().iter().any(|p| !p.is_finite()) {
                return Err(invalid("bid_curve.price_grid_usd_per_kwh", "prices must be finite"));
            }
            if self.population.is_none() {
                return Err(ScenarioError::Missing("population"));
            }
        }
        if let Some(m) = &self.market {
            if !m.demand_kwh.is_finite() {
                return Err(invalid("market.demand_kwh", "must be finite"));
            }
            if self.population.is_none() {
                return Err(ScenarioError::Missing("population"));
            }
        }
        if let Some(s) = &self.sfe {
            self.sfe_problem_of(s)?;
            if s.nash_grid < 2 {
                return Err(invalid("sfe.nash_grid", "must be at least 2"));
            }
            if !(s.br_start_scale.is_finite() && s.br_start_scale > 0.0) {
                return Err(invalid("sfe.br_start_scale", "must be > 0"));
            }
        }
        Ok(())
    }

    pub fn lmp(&self) -> Result<f64, ScenarioError> {
        self.lmp_usd_per_kwh.ok_or(ScenarioError::Missing("lmp_usd_per_kwh"))
    }

    fn tariff_for(&self, t: &TariffSpec) -> Result<(), ScenarioError> {
        match *t {
            TariffSpec::Fixed { pi_plus_usd_per_kwh, pi_minus_usd_per_kwh, pi_zero_usd } => {
                NemTariff::new(pi_plus_usd_per_kwh, pi_minus_usd_per_kwh, pi_zero_usd).map_err(|e| invalid("tariff", e))?;
            }
            TariffSpec::Ramsey { spread_usd_per_kwh, cap_usd_per_kwh, step_usd_per_kwh, .. } => {
                if !(spread_usd_per_kwh >= 0.0 && cap_usd_per_kwh >= 0.0 && step_usd_per_kwh > 0.0) {
                    return Err(invalid("tariff", "need spread >= 0, cap >= 0 and step > 0"));
                }
            }
        }
        Ok(())
    }

    /// The scenario's prosumers, drawn from `seed` for a random population.
    pub fn prosumers(&self) -> Result<Vec<Prosumer<f64>>, ScenarioError> {
        let spec = self.population.as_ref().ok_or(ScenarioError::Missing("population"))?;
        match spec {
            PopulationSpec::Homogeneous { n, gamma, device, g_kwh } => {
                let pop = Population::homogeneous(*n, *gamma, build_device(device, "population.device")?, *g_kwh, 0.0, None)
                    .map_err(|e| invalid("population", e))?;
                Ok(pop.prosumers().to_vec())
            }
            PopulationSpec::Explicit { prosumers } => prosumers
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let devices = p
                        .devices
                        .iter()
                        .enumerate()
                        .map(|(k, d)| build_device(d, &format!("population.prosumers[{i}].devices[{k}]")))
                        .collect::<Result<Vec<_>, _>>()?;
                    Prosumer::new(p.id.clone(), devices, p.g_kwh).map_err(|e| invalid(format!("population.prosumers[{i}]"), e))
                })
                .collect(),
            PopulationSpec::Random { n, families, devices_min, devices_max, g_max_kwh } => {
                if families.is_empty() {
                    return Err(invalid("population.families", "must not be empty"));
                }
                if *devices_min == 0 || devices_min > devices_max {
                    return Err(invalid("population", "need 1 <= devices_min <= devices_max"));
                }
                if !(g_max_kwh.is_finite() && *g_max_kwh >= 0.0) {
                    return Err(invalid("population.g_max_kwh", "must be >= 0"));
                }
                let seed = self.seed.ok_or_else(|| invalid("seed", "required by a random population"))?;
                Ok(random_population(seed, *n, families, *devices_min, *devices_max, *g_max_kwh))
            }
        }
    }

    /// Template device and size of a homogeneous population.
    pub fn homogeneous_template(&self) -> Result<(usize, UtilityFn<f64>), ScenarioError> {
        match &self.population {
            Some(PopulationSpec::Homogeneous { n, device, .. }) => Ok((*n, build_device(device, "population.device")?)),
            _ => Err(invalid("population", "the case sweep needs a homogeneous population")),
        }
    }

    pub fn sfe_problem(&self) -> Result<SfeProblem<f64>, ScenarioError> {
        let s = self.sfe.as_ref().ok_or(ScenarioError::Missing("sfe"))?;
        self.sfe_problem_of(s)
    }

    fn sfe_problem_of(&self, s: &SfeSpec) -> Result<SfeProblem<f64>, ScenarioError> {
        SfeProblem::try_from(s.problem.clone()).map_err(|e| invalid("sfe.problem", e))
    }
}

/// Tariff used at one population: fixed, or the Ramsey solution for it.
pub fn resolve_tariff(spec: &TariffSpec, pop: &Population<f64>) -> Result<NemTariff<f64>, dera_core::benchmarks::BenchmarkError> {
    match *spec {
        TariffSpec::Fixed { pi_plus_usd_per_kwh, pi_minus_usd_per_kwh, pi_zero_usd } => {
            Ok(NemTariff::new(pi_plus_usd_per_kwh, pi_minus_usd_per_kwh, pi_zero_usd)?)
        }
        TariffSpec::Ramsey { spread_usd_per_kwh, pi_zero_usd, cap_usd_per_kwh, step_usd_per_kwh } => {
            let mut cfg = RamseyConfig::new(spread_usd_per_kwh, pi_zero_usd);
            cfg.cap = cap_usd_per_kwh;
            cfg.step = step_usd_per_kwh;
            dera_core::benchmarks::ramsey_prices(pop, &cfg)
        }
    }
}

fn build_device(d: &DeviceSpec, field: &str) -> Result<UtilityFn<f64>, ScenarioError> {
    d.build().map_err(|e| invalid(field, e))
}

/// Seeded population with devices drawn from `families`. Generation is
/// uniform on `[0, g_max]`.
pub fn random_population(
    seed: u64,
    n: usize,
    families: &[FamilyName],
    devices_min: usize,
    devices_max: usize,
    g_max: f64,
) -> Vec<Prosumer<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let k = rng.gen_range(devices_min..=devices_max);
            let devices = (0..k)
                .map(|_| {
                    let family = families[rng.gen_range(0..families.len())];
                    random_device(&mut rng, family)
                })
                .collect();
            let g = if g_max > 0.0 { rng.gen_range(0.0..=g_max) } else { 0.0 };
            Prosumer::new(format!("p{i}"), devices, g).expect("drawn parameters are valid")
        })
        .collect()
}

fn random_device(rng: &mut ChaCha8Rng, family: FamilyName) -> UtilityFn<f64> {
    match family {
        FamilyName::Quadratic => {
            let alpha = rng.gen_range(0.05..0.5);
            let beta = rng.gen_range(0.05..1.0);
            UtilityFn::quadratic(alpha, beta, rng.gen_range(0.5..10.0))
        }
        FamilyName::Log => {
            let lo = rng.gen_range(0.0..0.5);
            let fam = UtilityFamily::Log { a: rng.gen_range(0.05..1.0), scale: rng.gen_range(0.2..3.0) };
            UtilityFn::new(fam, lo, lo + rng.gen_range(0.5..5.0))
        }
        FamilyName::Isoelastic => {
            let lo = rng.gen_range(0.05..0.5);
            let eta = if rng.gen_bool(0.5) { rng.gen_range(0.2..0.9) } else { rng.gen_range(1.2..3.0) };
            let fam = UtilityFamily::Isoelastic { a: rng.gen_range(0.02..0.3), eta };
            UtilityFn::new(fam, lo, lo + rng.gen_range(0.5..5.0))
        }
    }
    .expect("drawn parameters are valid")
}
