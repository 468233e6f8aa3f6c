//! Monte-Carlo orchestration: configuration ingestion, the trade-off study
//! over many channel draws, single-realization inspection and the built-in
//! self-test.
//!
//! Realizations use seeds `master_seed + index` and run in parallel;
//! aggregation is pairwise summation in realization order, so output tables
//! are byte-reproducible for a fixed configuration and seed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::allocator::{
    self, ParetoPoint, Scheme, SchemeFailure, SolveReport, UtopiaValues, Weights,
};
use crate::channel::{self, SystemConfig};
use crate::metrics::{self, QosTargets};
use crate::oracle::{self, NoiseSearch};
use crate::sdp::{self, SolverOptions};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Channel(#[from] channel::ChannelError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
    #[error(transparent)]
    Allocator(#[from] allocator::AllocatorError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// dBm value of a power in Watts: `10 log10(P_W * 1000)`.
pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * (watts * 1000.0).log10()
}

/// Watts value of a power in dBm.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

/// Pairwise (tree) summation in slice order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        pairwise_sum(values) / values.len() as f64
    }
}

/// Weight-grid specification: either a uniform count or explicit pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum LambdaGrid {
    Count { count: usize },
    Points { points: Vec<(f64, f64)> },
}

impl LambdaGrid {
    pub fn weights(&self) -> Result<Vec<Weights>, HarnessError> {
        match self {
            LambdaGrid::Count { count } => {
                if *count == 0 {
                    return Err(HarnessError::Config("lambda grid count must be positive".into()));
                }
                Ok(Weights::grid(*count))
            }
            LambdaGrid::Points { points } => {
                if points.is_empty() {
                    return Err(HarnessError::Config("lambda grid points must be non-empty".into()));
                }
                points
                    .iter()
                    .map(|&(l1, l2)| {
                        Weights::new(l1, l2)
                            .map_err(|e| HarnessError::Config(e.to_string()))
                    })
                    .collect()
            }
        }
    }
}

/// Full experiment description; the JSON configuration file mirrors these
/// field names and rejects unknown keys.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    // deployment
    pub num_antennas: usize,
    pub num_receivers: usize,
    pub carrier_freq_hz: f64,
    pub reference_distance_m: f64,
    pub max_distance_m: f64,
    pub rician_factor: f64,
    pub antenna_gain: f64,
    pub noise_power_w: f64,
    pub conversion_efficiency: Vec<f64>,
    #[serde(default = "default_breakpoint_distance")]
    pub breakpoint_distance_m: f64,
    #[serde(default = "default_breakpoint_exponent")]
    pub breakpoint_exponent: f64,
    // QoS targets
    pub gamma_req: f64,
    pub gamma_tol: Vec<f64>,
    pub p_max_w: f64,
    // study shape
    pub lambda_grid: LambdaGrid,
    pub realizations: usize,
    pub master_seed: u64,
    pub schemes: Vec<Scheme>,
    pub output_path: String,
    /// Carried in metadata only; no per-Hz quantity in this study depends
    /// on it.
    #[serde(default = "default_bandwidth")]
    pub bandwidth_hz: f64,
}

fn default_breakpoint_distance() -> f64 {
    5.0
}

fn default_breakpoint_exponent() -> f64 {
    3.5
}

fn default_bandwidth() -> f64 {
    200e3
}

impl ExperimentConfig {
    /// Study defaults: 6 antennas, 3 receivers, 470 MHz carrier, 2-10 m
    /// drops, 3 dB Rician factor, 10 dB link gain, -23 dBm noise,
    /// eps = 0.5, gamma_req = 10 dB, gamma_tol = -10 dB, P_max = 20 dBm,
    /// 11 uniform weights, 1000 realizations.
    pub fn study_default() -> Self {
        let sys = SystemConfig::study_default();
        ExperimentConfig {
            num_antennas: sys.num_antennas,
            num_receivers: sys.num_receivers,
            carrier_freq_hz: sys.carrier_freq,
            reference_distance_m: sys.reference_distance,
            max_distance_m: sys.max_distance,
            rician_factor: sys.rician_factor,
            antenna_gain: sys.antenna_gain,
            noise_power_w: sys.noise_power,
            conversion_efficiency: sys.conversion_efficiency,
            breakpoint_distance_m: sys.breakpoint_distance,
            breakpoint_exponent: sys.breakpoint_exponent,
            gamma_req: 10.0,
            gamma_tol: vec![0.1, 0.1],
            p_max_w: dbm_to_watts(20.0),
            lambda_grid: LambdaGrid::Count { count: 11 },
            realizations: 1000,
            master_seed: 1,
            schemes: Scheme::ALL.to_vec(),
            output_path: "tradeoff.csv".to_string(),
            bandwidth_hz: 200e3,
        }
    }

    /// Adjusts the receiver count, replicating the first conversion
    /// efficiency and SINR tolerance for the new idle receivers.
    pub fn with_receivers(mut self, receivers: usize) -> Self {
        let eps = self.conversion_efficiency.first().copied().unwrap_or(0.5);
        let tol = self.gamma_tol.first().copied().unwrap_or(0.1);
        self.num_receivers = receivers;
        self.conversion_efficiency = vec![eps; receivers.saturating_sub(1)];
        self.gamma_tol = vec![tol; receivers.saturating_sub(1)];
        self
    }

    pub fn system_config(&self) -> SystemConfig {
        SystemConfig {
            num_antennas: self.num_antennas,
            num_receivers: self.num_receivers,
            carrier_freq: self.carrier_freq_hz,
            reference_distance: self.reference_distance_m,
            max_distance: self.max_distance_m,
            rician_factor: self.rician_factor,
            antenna_gain: self.antenna_gain,
            noise_power: self.noise_power_w,
            conversion_efficiency: self.conversion_efficiency.clone(),
            breakpoint_distance: self.breakpoint_distance_m,
            breakpoint_exponent: self.breakpoint_exponent,
        }
    }

    pub fn qos_targets(&self) -> Result<QosTargets, HarnessError> {
        QosTargets::new(self.gamma_req, self.gamma_tol.clone(), self.p_max_w, self.noise_power_w)
            .map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.system_config()
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.qos_targets()?;
        if self.realizations == 0 {
            return Err(HarnessError::Config("realizations must be at least 1".into()));
        }
        if self.schemes.is_empty() {
            return Err(HarnessError::Config("scheme set must be non-empty".into()));
        }
        self.lambda_grid.weights()?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config is serializable");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().fold(String::new(), |mut acc, b| {
            let _ = write!(acc, "{b:02x}");
            acc
        })
    }
}

/// One averaged row of the trade-off study.
#[derive(Debug, Clone, Serialize)]
pub struct TradeoffRow {
    pub lambda1: f64,
    pub lambda2: f64,
    pub scheme: Scheme,
    pub avg_tp_dbm: f64,
    pub avg_tp_w: f64,
    pub avg_eff_pct: f64,
    pub avg_csec_bps_hz: f64,
    pub rank1_rate: f64,
    pub prop2_rate: f64,
    pub n_feasible: usize,
    pub n_infeasible: usize,
}

/// Full study output plus run metadata.
#[derive(Debug, Clone)]
pub struct TradeoffTable {
    pub rows: Vec<TradeoffRow>,
    pub config_hash: String,
    pub master_seed: u64,
    /// Realizations whose utopia solves already failed.
    pub discarded_draws: usize,
}

pub const CSV_HEADER: &str = "lambda1,lambda2,scheme,avg_tp_dbm,avg_tp_w,avg_eff_pct,avg_csec_bps_hz,rank1_rate,prop2_rate,n_feasible,n_infeasible";

impl TradeoffTable {
    /// CSV with the fixed column set; floats use the shortest
    /// round-trippable encoding so identical runs are byte-identical.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.lambda1,
                r.lambda2,
                r.scheme,
                r.avg_tp_dbm,
                r.avg_tp_w,
                r.avg_eff_pct,
                r.avg_csec_bps_hz,
                r.rank1_rate,
                r.prop2_rate,
                r.n_feasible,
                r.n_infeasible
            );
        }
        out
    }

    /// Metadata sidecar: config hash, seed and the bound caveat for
    /// non-tight relaxations.
    pub fn metadata_json(&self, config: &ExperimentConfig) -> String {
        let meta = serde_json::json!({
            "config_hash": self.config_hash,
            "master_seed": self.master_seed,
            "discarded_draws": self.discarded_draws,
            "bandwidth_hz": config.bandwidth_hz,
            "note": "utopia anchors are relaxed optima (bounds); when a relaxed solve is not rank-one its row averages bound-valued points, so swept curves approximate the exact trade-off",
        });
        serde_json::to_string_pretty(&meta).expect("metadata is serializable")
    }

    pub fn write_files(&self, config: &ExperimentConfig, csv_path: &Path) -> Result<(), HarnessError> {
        std::fs::write(csv_path, self.to_csv())?;
        let sidecar = csv_path.with_extension("meta.json");
        std::fs::write(sidecar, self.metadata_json(config))?;
        Ok(())
    }
}

/// Outcome of one scheme on one realization at one weight.
#[derive(Debug, Clone)]
enum SchemePoint {
    Solved {
        tp: f64,
        eff: f64,
        csec: f64,
        rank_one: bool,
        prop2: bool,
    },
    Failed,
}

struct RealizationResult {
    /// `points[lambda_index][scheme_index]`.
    points: Vec<Vec<SchemePoint>>,
    usable: bool,
}

fn run_realization(
    config: &ExperimentConfig,
    sys: &SystemConfig,
    qos: &QosTargets,
    weights: &[Weights],
    seed: u64,
    options: &SolverOptions,
) -> RealizationResult {
    let failed_all = || RealizationResult {
        points: weights
            .iter()
            .map(|_| config.schemes.iter().map(|_| SchemePoint::Failed).collect())
            .collect(),
        usable: false,
    };

    let grams = channel::gram_matrices(&channel::sample_channels(seed, sys));
    let eps = &config.conversion_efficiency;
    let points = match allocator::pareto_sweep(&grams, qos, eps, weights, &config.schemes, options)
    {
        Ok(p) => p,
        Err(_) => return failed_all(),
    };

    let mut by_lambda: Vec<Vec<SchemePoint>> = Vec::with_capacity(weights.len());
    let mut iter = points.into_iter();
    for _ in 0..weights.len() {
        let mut row = Vec::with_capacity(config.schemes.len());
        for _ in 0..config.schemes.len() {
            let point: ParetoPoint = iter.next().expect("sweep yields |grid| x |schemes| points");
            row.push(match point.outcome {
                Ok(report) => SchemePoint::Solved {
                    tp: report.metrics.transmit_power,
                    eff: report.metrics.efficiency,
                    csec: report.metrics.secrecy_capacity,
                    rank_one: report.rank_one,
                    prop2: report.prop2_holds,
                },
                Err(_) => SchemePoint::Failed,
            });
        }
        by_lambda.push(row);
    }
    RealizationResult {
        points: by_lambda,
        usable: true,
    }
}

/// Runs the Monte-Carlo study. Averages at each weight are taken over the
/// realizations on which every selected scheme solved, so scheme curves are
/// comparable on identical instance sets; per-scheme feasible counts are
/// still reported. Weights where no realization qualifies keep their rows
/// with NaN averages.
pub fn run_montecarlo(config: &ExperimentConfig) -> Result<TradeoffTable, HarnessError> {
    config.validate()?;
    let sys = config.system_config();
    let qos = config.qos_targets()?;
    let weights = config.lambda_grid.weights()?;
    let options = SolverOptions::default();

    let results: Vec<RealizationResult> = (0..config.realizations as u64)
        .into_par_iter()
        .map(|i| {
            run_realization(config, &sys, &qos, &weights, config.master_seed.wrapping_add(i), &options)
        })
        .collect();
    let discarded_draws = results.iter().filter(|r| !r.usable).count();

    let mut rows = Vec::with_capacity(weights.len() * config.schemes.len());
    for (li, lambda) in weights.iter().enumerate() {
        // realizations where every scheme solved at this weight
        let common: Vec<&RealizationResult> = results
            .iter()
            .filter(|r| {
                r.usable
                    && r.points[li]
                        .iter()
                        .all(|p| matches!(p, SchemePoint::Solved { .. }))
            })
            .collect();

        for (si, &scheme) in config.schemes.iter().enumerate() {
            let n_feasible = results
                .iter()
                .filter(|r| matches!(r.points[li][si], SchemePoint::Solved { .. }))
                .count();
            let n_infeasible = config.realizations - n_feasible;

            let mut tps = Vec::with_capacity(common.len());
            let mut effs = Vec::with_capacity(common.len());
            let mut csecs = Vec::with_capacity(common.len());
            let mut rank1 = 0usize;
            let mut prop2 = 0usize;
            for r in &common {
                if let SchemePoint::Solved {
                    tp,
                    eff,
                    csec,
                    rank_one,
                    prop2: p2,
                } = r.points[li][si]
                {
                    tps.push(tp);
                    effs.push(eff);
                    csecs.push(csec);
                    rank1 += rank_one as usize;
                    prop2 += p2 as usize;
                }
            }
            let avg_tp_w = mean(&tps);
            rows.push(TradeoffRow {
                lambda1: lambda.l1,
                lambda2: lambda.l2,
                scheme,
                avg_tp_dbm: watts_to_dbm(avg_tp_w),
                avg_tp_w,
                avg_eff_pct: mean(&effs) * 100.0,
                avg_csec_bps_hz: mean(&csecs),
                rank1_rate: if common.is_empty() {
                    f64::NAN
                } else {
                    rank1 as f64 / common.len() as f64
                },
                prop2_rate: if common.is_empty() {
                    f64::NAN
                } else {
                    prop2 as f64 / common.len() as f64
                },
                n_feasible,
                n_infeasible,
            });
        }
    }

    Ok(TradeoffTable {
        rows,
        config_hash: config.hash(),
        master_seed: config.master_seed,
        discarded_draws,
    })
}

/// Detailed single-realization report, machine-readable and printable.
#[derive(Debug, Clone, Serialize)]
pub struct SingleReport {
    pub seed: u64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub distances_m: Vec<f64>,
    pub f1_star: f64,
    pub f2_star: f64,
    pub schemes: BTreeMap<String, SingleSchemeReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SingleSchemeReport {
    pub solved: bool,
    pub failure: Option<String>,
    pub tp_w: Option<f64>,
    pub tp_dbm: Option<f64>,
    pub eff_pct: Option<f64>,
    pub csec_bps_hz: Option<f64>,
    pub rank_one: Option<bool>,
    pub eigen_ratio: Option<f64>,
    pub prop2_holds: Option<bool>,
    pub xi: Option<f64>,
    pub tau: Option<f64>,
    pub trace_sum: Option<f64>,
    pub tp_matches_inverse_xi: Option<bool>,
    pub w_bar_eigenvalues: Option<Vec<f64>>,
    pub duals_theta: Option<Vec<f64>>,
    pub dual_kappa1: Option<f64>,
    pub feasible_c1_to_c4: Option<bool>,
}

fn scheme_report(report: &Result<SolveReport, SchemeFailure>, instance: &InstanceData) -> SingleSchemeReport {
    match report {
        Err(e) => SingleSchemeReport {
            solved: false,
            failure: Some(e.to_string()),
            tp_w: None,
            tp_dbm: None,
            eff_pct: None,
            csec_bps_hz: None,
            rank_one: None,
            eigen_ratio: None,
            prop2_holds: None,
            xi: None,
            tau: None,
            trace_sum: None,
            tp_matches_inverse_xi: None,
            w_bar_eigenvalues: None,
            duals_theta: None,
            dual_kappa1: None,
            feasible_c1_to_c4: None,
        },
        Ok(r) => {
            let ts = &r.transformed;
            let (evals, _) = crate::hermitian::eigh_descending(&ts.w_bar);
            let tp = r.metrics.transmit_power;
            let feasible = r.recovered.as_ref().map(|alloc| {
                oracle::feasibility_residuals(alloc, &instance.grams, &instance.qos).feasible
            });
            SingleSchemeReport {
                solved: true,
                failure: None,
                tp_w: Some(tp),
                tp_dbm: Some(watts_to_dbm(tp)),
                eff_pct: Some(r.metrics.efficiency * 100.0),
                csec_bps_hz: Some(r.metrics.secrecy_capacity),
                rank_one: Some(r.rank_one),
                eigen_ratio: Some(r.eigen_ratio),
                prop2_holds: Some(r.prop2_holds),
                xi: Some(ts.xi),
                tau: ts.tau,
                trace_sum: Some(ts.trace_sum()),
                tp_matches_inverse_xi: Some((tp - 1.0 / ts.xi).abs() <= 1e-6 * tp.max(1e-30)),
                w_bar_eigenvalues: Some(evals),
                duals_theta: Some(ts.duals.theta.clone()),
                dual_kappa1: Some(ts.duals.kappa[0]),
                feasible_c1_to_c4: feasible,
            }
        }
    }
}

struct InstanceData {
    grams: channel::GramSet,
    qos: QosTargets,
}

/// Full inspection of one realization at one weight.
pub fn run_single(
    config: &ExperimentConfig,
    seed: u64,
    lambda: Weights,
) -> Result<SingleReport, HarnessError> {
    config.validate()?;
    let sys = config.system_config();
    let qos = config.qos_targets()?;
    let options = SolverOptions::default();
    let realization = channel::sample_channels(seed, &sys);
    let grams = channel::gram_matrices(&realization);
    let eps = &config.conversion_efficiency;

    let utopia = allocator::compute_utopia(&grams, &qos, eps, &options)?;
    let instance = InstanceData { grams, qos };
    let mut schemes = BTreeMap::new();
    for &scheme in &config.schemes {
        let outcome = allocator::solve_with_scheme(
            &instance.grams,
            &instance.qos,
            eps,
            lambda,
            &utopia,
            scheme,
            &options,
        )
        .map_err(|e| match e {
            allocator::AllocatorError::Infeasible { .. } => SchemeFailure::Infeasible(e.to_string()),
            other => SchemeFailure::Numerical(other.to_string()),
        });
        schemes.insert(scheme.tag().to_string(), scheme_report(&outcome, &instance));
    }

    Ok(SingleReport {
        seed,
        lambda1: lambda.l1,
        lambda2: lambda.l2,
        distances_m: realization.distances,
        f1_star: utopia.f1_star,
        f2_star: utopia.f2_star,
        schemes,
    })
}

impl SingleReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serializable")
    }

    pub fn pretty(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "seed {}  lambda = ({}, {})  F1* = {:.6e}  F2* = {:.6e} W",
            self.seed, self.lambda1, self.lambda2, self.f1_star, self.f2_star
        );
        let _ = writeln!(out, "distances (m): {:?}", self.distances_m);
        for (name, s) in &self.schemes {
            if !s.solved {
                let _ = writeln!(out, "  {name:<12} FAILED: {}", s.failure.as_deref().unwrap_or("?"));
                continue;
            }
            let _ = writeln!(
                out,
                "  {name:<12} TP {:>8.3} dBm  eff {:>7.3}%  Csec {:>6.3} bit/s/Hz  rank1 {}  ratio {:.2e}  prop2 {}",
                s.tp_dbm.unwrap(),
                s.eff_pct.unwrap(),
                s.csec_bps_hz.unwrap(),
                s.rank_one.unwrap(),
                s.eigen_ratio.unwrap(),
                s.prop2_holds.unwrap()
            );
        }
        out
    }
}

/// One named check of the self-test.
#[derive(Debug, Clone)]
pub struct SelftestCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Self-test knobs; tests inject corrupted solver options through this.
#[derive(Debug, Clone)]
pub struct SelftestOptions {
    pub solver: SolverOptions,
}

impl Default for SelftestOptions {
    fn default() -> Self {
        SelftestOptions {
            solver: SolverOptions::default(),
        }
    }
}

/// Runs the solver conformance suite, the recovery/rank-one property
/// suites and one tiny-instance oracle comparison. Returns one line per
/// check; `selftest_passed` folds them.
pub fn selftest(options: &SelftestOptions) -> Vec<SelftestCheck> {
    let mut checks = Vec::new();

    for report in sdp::conformance::run_suite(&options.solver) {
        checks.push(SelftestCheck {
            name: format!("solver-conformance/{}", report.name),
            passed: report.passed,
            detail: report.detail,
        });
    }

    // recovery and trace-normalization properties on study-sized draws
    let sys = SystemConfig::study_default();
    let qos = QosTargets::new(10.0, vec![0.1; sys.num_idle()], dbm_to_watts(20.0), sys.noise_power)
        .expect("study targets are valid");
    let eps = sys.conversion_efficiency.clone();
    let mut trace_ok = true;
    let mut recover_ok = true;
    let mut prop2_ok = true;
    let mut endpoint_rank1_ok = true;
    let mut detail = String::new();
    for seed in 0..20u64 {
        let grams = channel::gram_matrices(&channel::sample_channels(seed, &sys));
        let Ok(utopia) = allocator::compute_utopia(&grams, &qos, &eps, &options.solver) else {
            continue;
        };
        for lambda in [Weights::grid(3)[1], Weights { l1: 0.0, l2: 1.0 }] {
            let Ok(report) =
                allocator::solve_relaxed_p3(&grams, &qos, &eps, lambda, &utopia, &options.solver)
            else {
                continue;
            };
            if (report.transformed.trace_sum() - 1.0).abs() > 1e-6 {
                trace_ok = false;
                let _ = write!(detail, "trace {} at seed {seed}; ", report.transformed.trace_sum());
            }
            if report.prop2_holds && report.eigen_ratio > allocator::RANK_ONE_TOL {
                prop2_ok = false;
            }
            if lambda.l1 == 0.0 && report.eigen_ratio > allocator::RANK_ONE_TOL {
                endpoint_rank1_ok = false;
            }
            if let Some(alloc) = &report.recovered {
                let tp = metrics::transmit_power(alloc);
                if (tp - 1.0 / report.transformed.xi).abs() > 1e-6 * tp {
                    recover_ok = false;
                }
                if !oracle::feasibility_residuals(alloc, &grams, &qos).feasible {
                    recover_ok = false;
                }
            }
        }
    }
    checks.push(SelftestCheck {
        name: "trace-normalization-tight".into(),
        passed: trace_ok,
        detail: if trace_ok { "ok".into() } else { detail.clone() },
    });
    checks.push(SelftestCheck {
        name: "recovery-inverts-transform".into(),
        passed: recover_ok,
        detail: if recover_ok { "ok".into() } else { "recovered point mismatch".into() },
    });
    checks.push(SelftestCheck {
        name: "dual-condition-implies-rank-one".into(),
        passed: prop2_ok,
        detail: if prop2_ok { "ok".into() } else { "counterexample found".into() },
    });
    checks.push(SelftestCheck {
        name: "power-endpoint-rank-one".into(),
        passed: endpoint_rank1_ok,
        detail: if endpoint_rank1_ok { "ok".into() } else { "rank > 1 at the endpoint".into() },
    });

    // tiny-instance oracle comparison
    let oracle_check = (|| -> Result<String, String> {
        let tiny = SystemConfig {
            num_antennas: 2,
            num_receivers: 2,
            conversion_efficiency: vec![0.5],
            ..SystemConfig::study_default()
        };
        let tiny_qos = QosTargets::new(10.0, vec![0.1], dbm_to_watts(20.0), tiny.noise_power)
            .map_err(|e| e.to_string())?;
        let tight = SolverOptions::tight();
        let lambda = Weights { l1: 0.5, l2: 0.5 };
        for seed in 0..50u64 {
            let grams = channel::gram_matrices(&channel::sample_channels(seed, &tiny));
            let Ok(utopia) = allocator::compute_utopia(&grams, &tiny_qos, &[0.5], &tight) else {
                continue;
            };
            let Ok(report) =
                allocator::solve_relaxed_p3(&grams, &tiny_qos, &[0.5], lambda, &utopia, &tight)
            else {
                continue;
            };
            if !report.rank_one {
                continue;
            }
            let sol = oracle::grid_oracle_with(
                &grams,
                &tiny_qos,
                &[0.5],
                lambda,
                &utopia,
                64,
                NoiseSearch::Free,
            )
            .map_err(|e| e.to_string())?;
            let achieved = report.metrics.scalarized(lambda, &utopia);
            let denom = sol.objective.abs().max(achieved.abs()).max(1e-12);
            if (achieved - sol.objective).abs() / denom > 1e-3 {
                return Err(format!(
                    "oracle {} vs scheme {} at seed {seed}",
                    sol.objective, achieved
                ));
            }
            if report.transformed.objective_value > sol.objective + 1e-9 {
                return Err(format!("relaxed value above the oracle at seed {seed}"));
            }
            return Ok(format!("agreed at seed {seed}"));
        }
        Err("no tight tiny instance found".into())
    })();
    checks.push(SelftestCheck {
        name: "tiny-instance-oracle-agreement".into(),
        passed: oracle_check.is_ok(),
        detail: oracle_check.unwrap_or_else(|e| e),
    });

    checks
}

pub fn selftest_passed(checks: &[SelftestCheck]) -> bool {
    checks.iter().all(|c| c.passed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fast_config() -> ExperimentConfig {
        ExperimentConfig {
            realizations: 3,
            lambda_grid: LambdaGrid::Count { count: 3 },
            schemes: vec![Scheme::RelaxedP3, Scheme::Suboptimal2],
            ..ExperimentConfig::study_default()
        }
    }

    #[test]
    fn dbm_conversions_roundtrip() {
        assert_relative_eq!(dbm_to_watts(20.0), 0.1, epsilon = 1e-15);
        assert_relative_eq!(watts_to_dbm(0.1), 20.0, epsilon = 1e-12);
        assert_relative_eq!(dbm_to_watts(-23.0), 5.011872336272722e-6, max_relative = 1e-12);
        for dbm in [-20.0, 0.0, 13.5] {
            assert_relative_eq!(watts_to_dbm(dbm_to_watts(dbm)), dbm, epsilon = 1e-10);
        }
    }

    #[test]
    fn pairwise_sum_matches_sequential() {
        let values: Vec<f64> = (0..101).map(|i| (i as f64).sin()).collect();
        let seq: f64 = values.iter().sum();
        assert_relative_eq!(pairwise_sum(&values), seq, max_relative = 1e-12);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn config_json_rejects_unknown_keys() {
        let mut value = serde_json::to_value(ExperimentConfig::study_default()).unwrap();
        value["no_such_key"] = serde_json::json!(1);
        let text = serde_json::to_string(&value).unwrap();
        assert!(ExperimentConfig::from_json(&text).is_err());

        let good = serde_json::to_string(&ExperimentConfig::study_default()).unwrap();
        assert!(ExperimentConfig::from_json(&good).is_ok());
    }

    #[test]
    fn config_hash_tracks_content() {
        let a = ExperimentConfig::study_default();
        let mut b = ExperimentConfig::study_default();
        assert_eq!(a.hash(), b.hash());
        b.master_seed = 2;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn receiver_override_regenerates_lists() {
        let cfg = ExperimentConfig::study_default().with_receivers(5);
        assert_eq!(cfg.conversion_efficiency.len(), 4);
        assert_eq!(cfg.gamma_tol.len(), 4);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn montecarlo_row_shape_and_determinism() {
        let cfg = fast_config();
        let a = run_montecarlo(&cfg).unwrap();
        let b = run_montecarlo(&cfg).unwrap();
        assert_eq!(a.rows.len(), 3 * 2);
        assert_eq!(a.to_csv(), b.to_csv());
        assert!(a.to_csv().starts_with(CSV_HEADER));
        // percentages are the fraction times one hundred exactly
        for row in &a.rows {
            if row.n_feasible > 0 && row.avg_eff_pct.is_finite() {
                assert!(row.avg_eff_pct >= 0.0);
            }
        }
    }

    #[test]
    fn montecarlo_single_realization_power_endpoint() {
        let cfg = ExperimentConfig {
            realizations: 1,
            lambda_grid: LambdaGrid::Points { points: vec![(0.0, 1.0)] },
            schemes: vec![Scheme::RelaxedP3],
            master_seed: 9,
            ..ExperimentConfig::study_default()
        };
        let table = run_montecarlo(&cfg).unwrap();
        assert_eq!(table.rows.len(), 1);
        let row = &table.rows[0];

        // the single row's TP equals that instance's minimum power
        let sys = cfg.system_config();
        let qos = cfg.qos_targets().unwrap();
        let grams = channel::gram_matrices(&channel::sample_channels(9, &sys));
        let utopia = allocator::compute_utopia(
            &grams,
            &qos,
            &cfg.conversion_efficiency,
            &SolverOptions::default(),
        )
        .unwrap();
        assert_relative_eq!(row.avg_tp_w, utopia.f2_star, max_relative = 1e-6);
    }

    #[test]
    fn single_report_is_reproducible_and_complete() {
        let cfg = ExperimentConfig {
            schemes: vec![Scheme::RelaxedP3, Scheme::Baseline2],
            ..ExperimentConfig::study_default()
        };
        let lambda = Weights::new(0.5, 0.5).unwrap();
        let a = run_single(&cfg, 5, lambda).unwrap();
        let b = run_single(&cfg, 5, lambda).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let relaxed = &a.schemes["relaxed_p3"];
        assert!(relaxed.solved);
        assert!(relaxed.eigen_ratio.is_some());
        assert_eq!(relaxed.tp_matches_inverse_xi, Some(true));
        assert!(a.pretty().contains("relaxed_p3"));
    }

    #[test]
    fn selftest_passes_and_detects_corruption() {
        let checks = selftest(&SelftestOptions::default());
        for c in &checks {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
        let corrupted = SelftestOptions {
            solver: SolverOptions {
                gap_tol: 0.5,
                feas_tol: 0.5,
                max_iterations: 3,
                ..SolverOptions::default()
            },
        };
        let checks = selftest(&corrupted);
        assert!(!selftest_passed(&checks));
        assert!(checks.iter().any(|c| !c.passed && c.name.starts_with("solver-conformance")));
    }

    #[test]
    fn csv_files_and_sidecar_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let cfg = fast_config();
        let table = run_montecarlo(&cfg).unwrap();
        table.write_files(&cfg, &path).unwrap();
        let csv = std::fs::read_to_string(&path).unwrap();
        assert!(csv.starts_with(CSV_HEADER));
        let meta = std::fs::read_to_string(dir.path().join("out.meta.json")).unwrap();
        assert!(meta.contains("config_hash"));
        assert!(meta.contains(&table.config_hash));
    }
}
