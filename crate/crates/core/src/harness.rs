//! Monte Carlo orchestration: seeded multi-path runs, parameter sweeps with
//! common random numbers, and the closed-form calibration of the initial
//! buffer-utility weight.
//!
//! Every path draws its shocks from a stream addressed by
//! `(master_seed, path_index)`, and aggregation folds path results in index
//! order, so outputs are bit-identical for a given config regardless of the
//! worker count.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::market::{simulate_market_path, MarketPath};
use crate::metrics::{
    self, conditional_stats, eair, freedman_diaconis_edges, histogram_counts, EairRow, Histogram,
    PathReport, SummaryStats, N_SERIES,
};
use crate::pension::{contributions, DependencyRatio};
use crate::policy::{optimal_policy_path, PolicyPath};
use crate::preferences::{preference_path, OmegaKind, PreferencePath};
use crate::rng::ShockStream;
use crate::scenario::{Scenario, ScenarioConfig};

/// Horizons (years) at which EAIR table rows are produced.
pub const EAIR_TIMES: [u32; 4] = [10, 20, 30, 40];

/// Reporting time (years) of the pension histograms.
pub const HISTOGRAM_TIME: u32 = 20;

/// How per-path failures are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorPolicy {
    /// Abort the run on the first failing path.
    #[default]
    FailFast,
    /// Drop failing paths and report them alongside the summary.
    SkipAndReport,
}

/// Identifies a run: hashing the config document plus the seed pins the
/// outputs byte-for-byte.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub master_seed: u64,
    pub n_paths: usize,
    pub horizon_years: u32,
    pub steps_per_year: u32,
    pub engine_version: String,
    /// sha256 per emitted file, filled in by the output writer.
    pub output_checksums: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

impl RunManifest {
    pub fn new(config: &ScenarioConfig) -> Self {
        let canonical = serde_json::to_string(config).expect("config serializes");
        RunManifest {
            config_hash: sha256_hex(canonical.as_bytes()),
            master_seed: config.run.master_seed,
            n_paths: config.run.n_paths,
            horizon_years: config.grid.horizon_years,
            steps_per_year: config.grid.steps_per_year,
            engine_version: env!("CARGO_PKG_VERSION").to_string(),
            output_checksums: BTreeMap::new(),
        }
    }
}

/// Result of one Monte Carlo run.
#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub summary: SummaryStats,
    pub manifest: RunManifest,
    pub reports: Vec<PathReport>,
    /// Paths dropped under `SkipAndReport`, with reasons.
    pub skipped: Vec<(usize, String)>,
}

/// Full-resolution output of a single path, for dumps and plots.
#[derive(Debug, Clone)]
pub struct SinglePath {
    pub path_index: u64,
    pub market: MarketPath,
    pub preferences: PreferencePath,
    pub policy: PolicyPath,
}

/// Runs the market -> preferences -> policy pipeline for one path index.
pub fn simulate_single_path(scenario: &Scenario, path_index: u64) -> SinglePath {
    let config = &scenario.config;
    let mut shocks = ShockStream::new(config.run.master_seed, path_index);
    let market = simulate_market_path(
        &config.market,
        &config.grid,
        &scenario.correlation,
        &mut shocks,
    );
    let preferences = preference_path(&market, &config.demographics, &scenario.prefs, &config.grid);
    let policy = optimal_policy_path(
        &market,
        &preferences,
        &config.demographics,
        &config.pension,
        &scenario.prefs,
        config.run.f0,
        &config.grid,
    );
    SinglePath {
        path_index,
        market,
        preferences,
        policy,
    }
}

/// Solvency threshold on the fund surplus used by conditional statistics and
/// the risky-fraction conditioning: 1e-9 of the initial contribution income.
pub fn solvency_threshold(config: &ScenarioConfig) -> f64 {
    1e-9
        * contributions(
            0.0,
            config.market.e0,
            &config.demographics,
            config.pension.alpha,
        )
}

/// Annual reporting times 0..=horizon.
pub fn reporting_times(config: &ScenarioConfig) -> Vec<f64> {
    (0..=config.grid.horizon_years).map(f64::from).collect()
}

fn report_from_path(
    scenario: &Scenario,
    path_index: usize,
    market: &MarketPath,
    preferences: &PreferencePath,
    policy: &PolicyPath,
) -> Result<PathReport> {
    let config = &scenario.config;
    let grid = &config.grid;
    let threshold = solvency_threshold(config);
    let years = config.grid.horizon_years;

    let n_times = years as usize + 1;
    let mut series: [Vec<f64>; N_SERIES] = std::array::from_fn(|_| Vec::with_capacity(n_times));
    let mut solvent = Vec::with_capacity(n_times);

    for year in 0..=years {
        let k = grid.year_index(year);
        let fund = policy.fund[k];
        let p_star = policy.p_star[k];
        let p_min = policy.p_min[k];
        if !fund.is_finite() || !p_star.is_finite() || !p_min.is_finite() {
            return Err(Error::PathFailure {
                path_index,
                reason: format!("non-finite state at year {year}"),
            });
        }
        series[0].push(fund);
        series[1].push(preferences.zu[k]);
        series[2].push(p_star);
        series[3].push(p_min);
        series[4].push(p_star - p_min);
        series[5].push(metrics::relative_surplus(p_star, p_min));
        series[6].push(metrics::benefit_ratio(p_star, market.wage[k]));
        series[7].push(policy.risky_fraction[k]);
        solvent.push(fund - policy.k_bound[k] > threshold);
    }

    Ok(PathReport {
        path_index,
        tau: preferences.tau,
        solvent,
        series,
    })
}

fn simulate_report(scenario: &Scenario, path_index: usize) -> Result<PathReport> {
    let single = simulate_single_path(scenario, path_index as u64);
    report_from_path(
        scenario,
        path_index,
        &single.market,
        &single.preferences,
        &single.policy,
    )
}

fn collect_reports<F>(n_paths: usize, policy: ErrorPolicy, f: F) -> Result<(Vec<PathReport>, Vec<(usize, String)>)>
where
    F: Fn(usize) -> Result<PathReport> + Sync,
{
    let outcomes: Vec<Result<PathReport>> = {
        #[cfg(feature = "parallel")]
        {
            (0..n_paths).into_par_iter().map(&f).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            (0..n_paths).map(&f).collect()
        }
    };

    let mut reports = Vec::with_capacity(n_paths);
    let mut skipped = Vec::new();
    for (index, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(report) => reports.push(report),
            Err(error) => match policy {
                ErrorPolicy::FailFast => return Err(error),
                ErrorPolicy::SkipAndReport => skipped.push((index, error.to_string())),
            },
        }
    }
    if reports.is_empty() {
        return Err(Error::invalid("n_paths", "all paths failed"));
    }
    Ok((reports, skipped))
}

/// Builds EAIR table rows from the annual pension series of each path. The
/// buffer-fund stream is the unconditional optimal pension, which coincides
/// with the PAYG pension after depletion.
pub fn eair_rows(reports: &[PathReport], horizon_years: u32) -> Result<Vec<EairRow>> {
    let mut rows = Vec::new();
    for &t in EAIR_TIMES.iter().filter(|&&t| t <= horizon_years) {
        let end = t as usize;
        let mut sum_bf = 0.0;
        let mut sum_min = 0.0;
        for report in reports {
            sum_bf += eair(&report.series[2][..=end])?;
            sum_min += eair(&report.series[3][..=end])?;
        }
        let n = reports.len() as f64;
        let y_bf = sum_bf / n;
        let y_min = sum_min / n;
        rows.push(EairRow {
            t: f64::from(t),
            y_bf,
            y_min,
            delta: y_bf - y_min,
        });
    }
    Ok(rows)
}

fn pension_histograms(reports: &[PathReport], horizon_years: u32) -> Vec<Histogram> {
    if HISTOGRAM_TIME > horizon_years {
        return Vec::new();
    }
    let idx = HISTOGRAM_TIME as usize;
    let mut out = Vec::new();
    for (series_index, name) in [(3usize, "p_min"), (2usize, "p_star")] {
        let unconditional: Vec<f64> = reports.iter().map(|r| r.series[series_index][idx]).collect();
        let edges = freedman_diaconis_edges(&unconditional);
        for (conditioning, keep) in [
            ("unconditional", None),
            ("solvent", Some(true)),
            ("depleted", Some(false)),
        ] {
            let values: Vec<f64> = reports
                .iter()
                .filter(|r| keep.is_none_or(|flag| r.solvent[idx] == flag))
                .map(|r| r.series[series_index][idx])
                .collect();
            out.push(Histogram {
                series: name.to_string(),
                t: f64::from(HISTOGRAM_TIME),
                conditioning: conditioning.to_string(),
                edges: edges.clone(),
                counts: histogram_counts(&values, &edges),
            });
        }
    }
    out
}

fn summarize_reports(
    config: &ScenarioConfig,
    reports: Vec<PathReport>,
    skipped: Vec<(usize, String)>,
) -> Result<ScenarioResult> {
    let times = reporting_times(config);
    let mut summary = conditional_stats(&reports, &times, f64::from(config.grid.horizon_years));
    summary.eair = eair_rows(&reports, config.grid.horizon_years)?;
    summary.histograms = pension_histograms(&reports, config.grid.horizon_years);
    Ok(ScenarioResult {
        summary,
        manifest: RunManifest::new(config),
        reports,
        skipped,
    })
}

/// Runs a full Monte Carlo scenario with the default fail-fast error policy.
pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioResult> {
    run_scenario_with_policy(scenario, ErrorPolicy::FailFast)
}

pub fn run_scenario_with_policy(
    scenario: &Scenario,
    policy: ErrorPolicy,
) -> Result<ScenarioResult> {
    let n_paths = scenario.config.run.n_paths;
    let (reports, skipped) = collect_reports(n_paths, policy, |k| simulate_report(scenario, k))?;
    summarize_reports(&scenario.config, reports, skipped)
}

/// Parameter axis of a sweep; each variant modifies exactly one field of the
/// base config.
#[derive(Debug, Clone)]
pub enum SweepParameter {
    Zu0(Vec<f64>),
    Theta(Vec<f64>),
    F0(Vec<f64>),
    Lambda(Vec<f64>),
    DeltaVector(Vec<[f64; 4]>),
    OmegaKind(Vec<OmegaKind>),
    DemographicKind(Vec<DependencyRatio>),
}

impl SweepParameter {
    pub fn len(&self) -> usize {
        match self {
            SweepParameter::Zu0(v) => v.len(),
            SweepParameter::Theta(v) => v.len(),
            SweepParameter::F0(v) => v.len(),
            SweepParameter::Lambda(v) => v.len(),
            SweepParameter::DeltaVector(v) => v.len(),
            SweepParameter::OmegaKind(v) => v.len(),
            SweepParameter::DemographicKind(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn label(&self, index: usize) -> String {
        match self {
            SweepParameter::Zu0(v) => format!("zu0={}", v[index]),
            SweepParameter::Theta(v) => format!("theta={}", v[index]),
            SweepParameter::F0(v) => format!("f0={}", v[index]),
            SweepParameter::Lambda(v) => format!("lambda={}", v[index]),
            SweepParameter::DeltaVector(v) => format!("delta={:?}", v[index]),
            SweepParameter::OmegaKind(v) => format!("omega={:?}", v[index]),
            SweepParameter::DemographicKind(v) => format!("demographics={:?}", v[index]),
        }
    }

    fn apply(&self, base: &ScenarioConfig, index: usize) -> ScenarioConfig {
        let mut config = base.clone();
        match self {
            SweepParameter::Zu0(v) => config.preferences.zu0 = v[index],
            SweepParameter::Theta(v) => config.preferences.theta = v[index],
            SweepParameter::F0(v) => config.run.f0 = v[index],
            SweepParameter::Lambda(v) => config.market.lambda = v[index],
            SweepParameter::DeltaVector(v) => config.preferences.delta = v[index],
            SweepParameter::OmegaKind(v) => config.preferences.omega = v[index],
            SweepParameter::DemographicKind(v) => {
                config.demographics.dependency_ratio = v[index].clone()
            }
        }
        config
    }

    /// Whether the parameter provably never enters the market simulation, so
    /// market paths can be shared bitwise across sweep points.
    fn market_invariant(&self) -> bool {
        !matches!(self, SweepParameter::Lambda(_))
    }
}

/// A sweep over one parameter. With `shared_seed` every point consumes the
/// same shock streams (common random numbers); otherwise point `i` shifts the
/// master seed by `i`.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub base: ScenarioConfig,
    pub shared_seed: bool,
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub label: String,
    pub config: ScenarioConfig,
    pub summary: SummaryStats,
    pub skipped: Vec<(usize, String)>,
}

pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepPoint>> {
    if spec.parameter.is_empty() {
        return Err(Error::invalid("sweep", "values must be nonempty"));
    }

    let mut configs = Vec::with_capacity(spec.parameter.len());
    for i in 0..spec.parameter.len() {
        let mut config = spec.parameter.apply(&spec.base, i);
        if !spec.shared_seed {
            config.run.master_seed = spec.base.run.master_seed.wrapping_add(i as u64);
        }
        configs.push(config);
    }
    let scenarios: Vec<Scenario> = configs
        .iter()
        .map(ScenarioConfig::build)
        .collect::<Result<_>>()?;

    let reports_per_point: Vec<Vec<PathReport>> =
        if spec.shared_seed && spec.parameter.market_invariant() {
            // One market realization per path index, shared bitwise by every
            // sweep point.
            let n_paths = spec.base.run.n_paths;
            let per_path = |k: usize| -> Result<Vec<PathReport>> {
                let base_scenario = &scenarios[0];
                let config = &base_scenario.config;
                let mut shocks = ShockStream::new(config.run.master_seed, k as u64);
                let market = simulate_market_path(
                    &config.market,
                    &config.grid,
                    &base_scenario.correlation,
                    &mut shocks,
                );
                scenarios
                    .iter()
                    .map(|scenario| {
                        let config = &scenario.config;
                        let preferences = preference_path(
                            &market,
                            &config.demographics,
                            &scenario.prefs,
                            &config.grid,
                        );
                        let policy = optimal_policy_path(
                            &market,
                            &preferences,
                            &config.demographics,
                            &config.pension,
                            &scenario.prefs,
                            config.run.f0,
                            &config.grid,
                        );
                        report_from_path(scenario, k, &market, &preferences, &policy)
                    })
                    .collect()
            };
            let nested: Vec<Vec<PathReport>> = {
                #[cfg(feature = "parallel")]
                {
                    (0..n_paths)
                        .into_par_iter()
                        .map(per_path)
                        .collect::<Result<_>>()?
                }
                #[cfg(not(feature = "parallel"))]
                {
                    (0..n_paths).map(per_path).collect::<Result<_>>()?
                }
            };
            // Transpose path-major results into point-major collections.
            let mut per_point: Vec<Vec<PathReport>> = (0..scenarios.len())
                .map(|_| Vec::with_capacity(n_paths))
                .collect();
            for path_reports in nested {
                for (point, report) in path_reports.into_iter().enumerate() {
                    per_point[point].push(report);
                }
            }
            per_point
        } else {
            let mut per_point = Vec::with_capacity(scenarios.len());
            for scenario in &scenarios {
                let (reports, _) =
                    collect_reports(scenario.config.run.n_paths, ErrorPolicy::FailFast, |k| {
                        simulate_report(scenario, k)
                    })?;
                per_point.push(reports);
            }
            per_point
        };

    let mut points = Vec::with_capacity(scenarios.len());
    for (i, reports) in reports_per_point.into_iter().enumerate() {
        let result = summarize_reports(&configs[i], reports, Vec::new())?;
        points.push(SweepPoint {
            label: spec.parameter.label(i),
            config: configs[i].clone(),
            summary: result.summary,
            skipped: result.skipped,
        });
    }
    Ok(points)
}

/// Grid of Z^u_0 values implied by a list of initial relative-surplus targets.
pub fn zu0_grid_from_surplus_targets(config: &ScenarioConfig, targets: &[f64]) -> Result<Vec<f64>> {
    targets.iter().map(|&t| calibrate_zu0(config, t)).collect()
}

/// Closed-form calibration of the initial buffer-utility weight so that the
/// initial pension exceeds the PAYG floor by `target` (relative):
/// zu0 = z0 * ((f0 - k0) / (target * p_min,0))^theta.
pub fn calibrate_zu0(config: &ScenarioConfig, target: f64) -> Result<f64> {
    if !(target > 0.0) {
        return Err(Error::invalid(
            "target",
            "initial surplus target must be > 0 (zero implies an unbounded weight)",
        ));
    }
    if !(config.run.f0 > config.pension.k0) {
        return Err(Error::invalid("f0", "must exceed the sustainability bound"));
    }
    let p_min0 = config.initial_min_pension();
    let ratio = (config.run.f0 - config.pension.k0) / (target * p_min0);
    let theta = config.preferences.theta;
    // Integer exponents go through powi, which keeps the Table 1 calibration
    // exact in floating point.
    let powered = if theta.fract() == 0.0 && theta.abs() <= 512.0 {
        ratio.powi(theta as i32)
    } else {
        ratio.powf(theta)
    };
    Ok(config.preferences.z0 * powered)
}
