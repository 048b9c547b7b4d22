//! Stage orchestration. Each stage turns a validated scenario into named
//! artifacts in memory; files are written only after every stage succeeds.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dera_core::benchmarks::{run_case, BenchmarkError, CaseId, Population, WelfareLedger};
use dera_core::bidding::aggregate_supply;
use dera_core::clearing::{efficiency_check, ClearingResult};
use dera_core::nem::NemTariff;
use dera_core::prosumer::UtilityFn;
use dera_core::sfe::{best_response_dynamics, competitive_equilibrium, nash_check, solve_sfe, BrOptions};
use rayon::prelude::*;
use serde::Serialize;

use crate::manifest::Manifest;
use crate::report::{fmt_g, json_bytes, write_file, Table};
use crate::scenario::{resolve_tariff, Scenario, ScenarioError, TariffSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Cases,
    Bidcurve,
    Clear,
    Sfe,
    Nashcheck,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Cases, Stage::Bidcurve, Stage::Clear, Stage::Sfe, Stage::Nashcheck];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Cases => "cases",
            Stage::Bidcurve => "bidcurve",
            Stage::Clear => "clear",
            Stage::Sfe => "sfe",
            Stage::Nashcheck => "nashcheck",
        }
    }

    fn applies(self, s: &Scenario) -> bool {
        match self {
            Stage::Cases => s.cases.is_some(),
            Stage::Bidcurve => s.bid_curve.is_some(),
            Stage::Clear => s.market.is_some(),
            Stage::Sfe | Stage::Nashcheck => s.sfe.is_some(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub scenario: PathBuf,
    pub out: Option<PathBuf>,
    pub force: bool,
    pub threads: Option<usize>,
    /// `None` runs every stage the scenario configures.
    pub stage: Option<Stage>,
}

pub struct Artifact {
    pub name: &'static str,
    pub bytes: Vec<u8>,
}

/// Runs the requested stages and writes their artifacts plus `manifest.json`.
pub fn execute(opts: &RunOptions) -> Result<Manifest> {
    let raw = fs::read(&opts.scenario).with_context(|| format!("reading {}", opts.scenario.display()))?;
    let text = String::from_utf8(raw.clone()).context("scenario is not UTF-8")?;
    let scenario = Scenario::parse(&text).with_context(|| format!("parsing {}", opts.scenario.display()))?;

    let out = match (&opts.out, &scenario.output_dir) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => o.clone(),
        (None, None) => bail!("no output directory: pass --out or set `output_dir`"),
    };
    prepare_out(&out, opts.force)?;

    let stages: Vec<Stage> = match opts.stage {
        Some(s) => vec![s],
        None => Stage::ALL.into_iter().filter(|s| s.applies(&scenario)).collect(),
    };
    if stages.is_empty() {
        bail!("scenario `{}` configures no stage", scenario.name);
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.unwrap_or(0))
        .build()
        .context("building worker pool")?;
    let mut artifacts = Vec::new();
    for stage in stages {
        let produced = pool
            .install(|| run_stage(stage, &scenario))
            .with_context(|| format!("stage `{}` failed", stage.name()))?;
        artifacts.extend(produced);
    }

    let command = opts.stage.map_or("run", Stage::name);
    let mut manifest = Manifest::new(&scenario.name, command, &raw, scenario.seed);
    for a in &artifacts {
        write_file(&out, a.name, &a.bytes)?;
        manifest.record(a.name, &a.bytes);
    }
    write_file(&out, "manifest.json", &json_bytes(&manifest)?)?;
    Ok(manifest)
}

fn prepare_out(out: &Path, force: bool) -> Result<()> {
    if out.exists() {
        let occupied = fs::read_dir(out)
            .with_context(|| format!("reading {}", out.display()))?
            .next()
            .is_some();
        if occupied && !force {
            bail!("output directory {} is not empty; pass --force to overwrite", out.display());
        }
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

pub fn run_stage(stage: Stage, s: &Scenario) -> Result<Vec<Artifact>> {
    match stage {
        Stage::Cases => cases(s),
        Stage::Bidcurve => bid_curve(s),
        Stage::Clear => clear(s),
        Stage::Sfe => sfe(s),
        Stage::Nashcheck => nash(s),
    }
}

/// Outcome of one `(γ, g)` point of the case sweep.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepPoint {
    Solved {
        gamma: f64,
        g: f64,
        tariff: NemTariff<f64>,
        /// Totals over the population, in the requested case order.
        ledgers: Vec<WelfareLedger<f64>>,
    },
    /// The Ramsey search found no profit-neutral export rate.
    NoRoot { gamma: f64, g: f64 },
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub n: usize,
    pub device: UtilityFn<f64>,
    pub tariff: TariffSpec,
    pub lmp: f64,
    pub network_cost: Option<f64>,
    pub zeta_pct: f64,
    pub cases: Vec<CaseId>,
}

/// Evaluates every case at every `(γ, g)`, γ outermost. Points are solved in
/// parallel; the result keeps grid order.
pub fn sweep(cfg: &SweepConfig, gammas: &[f64], gs: &[f64]) -> Result<Vec<SweepPoint>> {
    let points: Vec<(f64, f64)> = gammas.iter().flat_map(|&gm| gs.iter().map(move |&g| (gm, g))).collect();
    points
        .par_iter()
        .map(|&(gamma, g)| {
            sweep_point(cfg, gamma, g).with_context(|| format!("gamma {gamma}, g {g} kWh"))
        })
        .collect()
}

fn sweep_point(cfg: &SweepConfig, gamma: f64, g: f64) -> Result<SweepPoint> {
    let pop = Population::homogeneous(cfg.n, gamma, cfg.device, g, cfg.lmp, cfg.network_cost)?;
    let tariff = match resolve_tariff(&cfg.tariff, &pop) {
        Ok(t) => t,
        Err(BenchmarkError::NoRoot { .. }) => return Ok(SweepPoint::NoRoot { gamma, g }),
        Err(e) => return Err(e.into()),
    };
    let ledgers = cfg
        .cases
        .iter()
        .map(|&c| run_case(c, &pop, &tariff, cfg.zeta_pct))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SweepPoint::Solved { gamma, g, tariff, ledgers })
}

fn cases(s: &Scenario) -> Result<Vec<Artifact>> {
    let spec = s.cases.as_ref().ok_or(ScenarioError::Missing("cases"))?;
    let (n, device) = s.homogeneous_template()?;
    if n == 0 {
        bail!("the case sweep needs at least one prosumer");
    }
    let cfg = SweepConfig {
        n,
        device,
        tariff: s.tariff.clone().ok_or(ScenarioError::Missing("tariff"))?,
        lmp: s.lmp()?,
        network_cost: spec.network_cost_usd,
        zeta_pct: spec.zeta_pct,
        cases: spec.ids.iter().filter_map(|&i| CaseId::from_number(i)).collect(),
    };
    let points = sweep(&cfg, &spec.gamma_grid.points(), &spec.g_grid_kwh.points())?;

    // surpluses are reported per prosumer
    let scale = n as f64;
    let mut ledger = Table::new(&[
        "case_id",
        "gamma",
        "g_kwh",
        "dera_surplus_usd",
        "consumer_surplus_usd",
        "producer_surplus_usd",
        "utility_surplus_usd",
    ])?;
    let mut tariffs = Table::new(&[
        "gamma",
        "g_kwh",
        "status",
        "pi_plus_usd_per_kwh",
        "pi_minus_usd_per_kwh",
        "pi_zero_usd",
    ])?;
    for p in &points {
        match p {
            SweepPoint::Solved { gamma, g, tariff, ledgers } => {
                tariffs.row([
                    fmt_g(*gamma),
                    fmt_g(*g),
                    "ok".into(),
                    fmt_g(tariff.pi_plus()),
                    fmt_g(tariff.pi_minus()),
                    fmt_g(tariff.pi_zero()),
                ])?;
                for l in ledgers {
                    ledger.row([
                        l.case_id.number().to_string(),
                        fmt_g(*gamma),
                        fmt_g(*g),
                        fmt_g(l.dera_surplus / scale),
                        fmt_g(l.consumer_surplus / scale),
                        fmt_g(l.producer_surplus / scale),
                        fmt_g(l.utility_surplus / scale),
                    ])?;
                }
            }
            SweepPoint::NoRoot { gamma, g } => {
                tariffs.row([fmt_g(*gamma), fmt_g(*g), "no_root".into(), String::new(), String::new(), String::new()])?;
            }
        }
    }
    Ok(vec![
        Artifact { name: "ledger.csv", bytes: ledger.into_bytes()? },
        Artifact { name: "tariffs.csv", bytes: tariffs.into_bytes()? },
    ])
}

fn bid_curve(s: &Scenario) -> Result<Vec<Artifact>> {
    let spec = s.bid_curve.as_ref().ok_or(ScenarioError::Missing("bid_curve"))?;
    let pop = s.prosumers()?;
    let curve = aggregate_supply("dera", &pop, spec.generation_kwh)?;
    let mut table = Table::new(&["price_usd_per_kwh", "injection_kwh"])?;
    for (q, p) in curve.export_points(&spec.price_grid_usd_per_kwh.points()) {
        table.row([fmt_g(p), fmt_g(q)])?;
    }
    Ok(vec![Artifact { name: "bid_curve.csv", bytes: table.into_bytes()? }])
}

fn clearing_table(r: &ClearingResult<f64>) -> Result<Vec<u8>> {
    let mut table = Table::new(&["id", "price_usd_per_kwh", "injection_kwh", "surplus_usd"])?;
    for ((id, q), sur) in r.ids.iter().zip(&r.injections).zip(&r.participant_surpluses) {
        table.row([id.clone(), fmt_g(r.price), fmt_g(*q), fmt_g(*sur)])?;
    }
    table.into_bytes()
}

fn clear(s: &Scenario) -> Result<Vec<Artifact>> {
    let spec = s.market.as_ref().ok_or(ScenarioError::Missing("market"))?;
    let pop = s.prosumers()?;
    let (direct, dera) = efficiency_check(&pop, spec.demand_kwh)?;
    let mut eff = Table::new(&["metric", "direct", "dera", "abs_diff"])?;
    let rows = [
        ("price_usd_per_kwh", direct.price, dera.price),
        ("social_welfare_usd", direct.social_welfare, dera.social_welfare),
        ("total_surplus_usd", direct.total_surplus(), dera.total_surplus()),
        ("total_injection_kwh", direct.total_injection(), dera.total_injection()),
    ];
    for (name, a, b) in rows {
        eff.row([name.to_string(), fmt_g(a), fmt_g(b), fmt_g((a - b).abs())])?;
    }
    Ok(vec![
        Artifact { name: "clearing_direct.csv", bytes: clearing_table(&direct)? },
        Artifact { name: "clearing_dera.csv", bytes: clearing_table(&dera)? },
        Artifact { name: "efficiency.csv", bytes: eff.into_bytes()? },
    ])
}

#[derive(Serialize)]
struct SolutionFile<'a> {
    ids: Vec<&'a str>,
    sfe: dera_core::SfeSolution,
    ce: dera_core::sfe::CeSolution<f64>,
}

fn sfe(s: &Scenario) -> Result<Vec<Artifact>> {
    let prob = s.sfe_problem()?;
    let sol = solve_sfe(&prob)?;
    let ce = competitive_equilibrium(&prob)?;
    let file = SolutionFile {
        ids: prob.participants().iter().map(|p| p.id()).collect(),
        sfe: sol,
        ce,
    };
    Ok(vec![
        Artifact { name: "sfe_problem.json", bytes: json_bytes(&prob.spec())? },
        Artifact { name: "sfe_solution.json", bytes: json_bytes(&file)? },
    ])
}

#[derive(Serialize)]
struct BestResponseSummary {
    start_scale: f64,
    rounds: usize,
    converged: bool,
    final_w: Vec<f64>,
    /// Largest componentwise relative gap to the equilibrium bids.
    max_rel_diff: f64,
}

#[derive(Serialize)]
struct NashFile {
    w: Vec<f64>,
    report: dera_core::sfe::NashReport<f64>,
    best_response: BestResponseSummary,
}

fn nash(s: &Scenario) -> Result<Vec<Artifact>> {
    let spec = s.sfe.as_ref().ok_or(ScenarioError::Missing("sfe"))?;
    let prob = s.sfe_problem()?;
    let sol = solve_sfe(&prob)?;
    let report = nash_check(&prob, &sol.w, spec.nash_grid)?;
    let start: Vec<f64> = sol.w.iter().map(|w| w * spec.br_start_scale).collect();
    let opts = BrOptions { rounds: spec.br_rounds, rel_tol: spec.br_rel_tol };
    let traj = best_response_dynamics(&prob, &start, opts)?;
    let scale = sol.w.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    let max_rel_diff = traj
        .last()
        .iter()
        .zip(&sol.w)
        .map(|(a, b)| (a - b).abs() / b.abs().max(1e-9 * scale).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    let file = NashFile {
        w: sol.w.clone(),
        report,
        best_response: BestResponseSummary {
            start_scale: spec.br_start_scale,
            rounds: traj.rounds.len() - 1,
            converged: traj.converged,
            final_w: traj.last().to_vec(),
            max_rel_diff,
        },
    };
    Ok(vec![Artifact { name: "nash_check.json", bytes: json_bytes(&file)? }])
}
