//! Monte Carlo harness: seeded trial sweeps with CSV/JSON emission,
//! summary statistics, and exact-recovery threshold scans.
//!
//! Trials derive independent seeds from a counter split of the base seed,
//! so outputs are identical for any parallelism degree.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    exploratory_threshold, spectral_deviation, t0_threshold, trimming_stats, truncated_l2_mass,
    DiagnosticsReport,
};
use crate::eigen::EigOpts;
use crate::error::{Error, Result};
use crate::exponents::compute_j_min;
use crate::kmeans::kmeans;
use crate::pipeline::{embed_op, spectral_cluster, ClusterOpts, TAU_CONST_DEFAULT};
use crate::rng::{derive_seed, Domain};
use crate::sbm::{misclustering_loss, population_model, sample_sbm, PopulationModel, SbmInstance};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Cluster,
    Oracle,
    Diagnose,
    ExponentTable,
    ThresholdScan,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

fn default_trials() -> usize {
    1
}

fn default_jobs() -> usize {
    1
}

fn default_restarts() -> usize {
    20
}

fn default_tau() -> f64 {
    TAU_CONST_DEFAULT
}

fn default_format() -> OutputFormat {
    OutputFormat::Csv
}

/// Full description of an experiment run; deserializable from a JSON
/// config file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub k: usize,
    pub p: f64,
    pub q: f64,
    /// Explicit community sizes; balanced split when absent.
    #[serde(default)]
    pub sizes: Option<Vec<usize>>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    pub mode: Mode,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_tau")]
    pub tau_const: f64,
    /// Row-norm threshold for the truncated-mass diagnostic; defaults to
    /// the theoretical t0.
    #[serde(default)]
    pub t_threshold: Option<f64>,
    /// Leave-one-out checks per trial in diagnose mode.
    #[serde(default)]
    pub loo_nodes: usize,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default = "default_format")]
    pub format: OutputFormat,
    /// Feed the expectation matrix E A (P with zero diagonal) through the
    /// pipeline instead of sampling.
    #[serde(default)]
    pub noiseless: bool,
    /// Record wall time per trial. Off by default so repeated runs emit
    /// byte-identical bodies.
    #[serde(default)]
    pub emit_timing: bool,
    /// Grid of node counts for threshold scans.
    #[serde(default)]
    pub grid_n: Option<Vec<usize>>,
    /// Grid of (p, q) pairs for threshold scans.
    #[serde(default)]
    pub grid_pq: Option<Vec<(f64, f64)>>,
}

impl ExperimentConfig {
    pub fn instance(&self) -> Result<SbmInstance> {
        if self.trials < 1 {
            return Err(Error::parameter("trials must be >= 1"));
        }
        match &self.sizes {
            Some(sizes) => {
                if sizes.iter().sum::<usize>() != self.n {
                    return Err(Error::parameter(format!(
                        "sizes sum to {} but n = {}",
                        sizes.iter().sum::<usize>(),
                        self.n
                    )));
                }
                if sizes.len() != self.k {
                    return Err(Error::parameter(format!(
                        "{} sizes given but k = {}",
                        sizes.len(),
                        self.k
                    )));
                }
                SbmInstance::with_sizes(sizes, self.p, self.q)
            }
            None => SbmInstance::balanced(self.n, self.k, self.p, self.q),
        }
    }

    fn cluster_opts(&self, seed: u64) -> ClusterOpts {
        ClusterOpts {
            tau_const: self.tau_const,
            restarts: self.restarts,
            seed,
            eig: EigOpts::default(),
            estimate_p: false,
        }
    }
}

/// One emitted row. Fields that a mode does not produce stay `None` and
/// serialize as empty CSV cells / JSON nulls.
#[derive(Clone, Debug, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub n: usize,
    pub k: usize,
    pub p: f64,
    pub q: f64,
    pub loss: f64,
    pub exact: bool,
    pub jmin: f64,
    pub pred_err: f64,
    pub lambda_k: Option<f64>,
    pub spectral_dev: Option<f64>,
    pub trunc_mass: Option<f64>,
    pub exceed_count: Option<usize>,
    pub trimmed: Option<usize>,
    pub ms: u64,
}

pub const CSV_HEADER: &str =
    "trial,seed,n,k,p,q,loss,exact,jmin,pred_err,lambda_k,spectral_dev,trunc_mass,exceed_count,trimmed,ms";

impl TrialRecord {
    pub fn to_csv_row(&self) -> String {
        fn opt_f(v: Option<f64>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        fn opt_u(v: Option<usize>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.trial,
            self.seed,
            self.n,
            self.k,
            self.p,
            self.q,
            self.loss,
            self.exact as u8,
            self.jmin,
            self.pred_err,
            opt_f(self.lambda_k),
            opt_f(self.spectral_dev),
            opt_f(self.trunc_mass),
            opt_u(self.exceed_count),
            opt_u(self.trimmed),
            self.ms
        )
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub trials: usize,
    pub mean_loss: f64,
    pub exact_recovery_fraction: f64,
    pub jmin: f64,
    pub pred_err: f64,
    /// -log(mean loss) / J_min; None when every trial recovered exactly.
    pub neg_log_mean_loss_over_jmin: Option<f64>,
    /// The paper's slack choice (log(n (p-q)^2 / p))^{-1/2}, emitted as
    /// context only.
    pub rho_slack: Option<f64>,
    pub wall_ms: u64,
}

pub struct ExperimentOutput {
    pub records: Vec<TrialRecord>,
    pub summary: Summary,
    /// Full diagnostics per trial in diagnose mode.
    pub reports: Vec<Option<DiagnosticsReport>>,
}

struct TrialOutcome {
    record: TrialRecord,
    report: Option<DiagnosticsReport>,
}

/// Run `config.trials` seeded trials on a worker pool of width
/// `config.jobs`. Records come back sorted by trial index and identical
/// for any pool width.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let start = std::time::Instant::now();
    let instance = config.instance()?;
    match config.mode {
        Mode::Cluster | Mode::Oracle | Mode::Diagnose => {}
        other => {
            return Err(Error::parameter(format!(
                "run_experiment handles trial modes only (got {other:?})"
            )))
        }
    }
    let jmin = compute_j_min(&instance)?.value;
    let pred_err = (-jmin).exp();
    let pop = match config.mode {
        Mode::Oracle | Mode::Diagnose => Some(population_model(&instance)),
        _ => None,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs.max(1))
        .build()
        .map_err(|e| Error::parameter(format!("worker pool: {e}")))?;
    let outcomes: Result<Vec<TrialOutcome>> = pool.install(|| {
        (0..config.trials)
            .into_par_iter()
            .map(|t| run_trial(config, &instance, pop.as_ref(), jmin, pred_err, t))
            .collect()
    });
    let outcomes = outcomes?;

    let mut records = Vec::with_capacity(outcomes.len());
    let mut reports = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        records.push(o.record);
        reports.push(o.report);
    }

    let mean_loss = records.iter().map(|r| r.loss).sum::<f64>() / records.len() as f64;
    let exact_count = records.iter().filter(|r| r.exact).count();
    let snr = instance.n() as f64 * (instance.p() - instance.q()).powi(2) / instance.p();
    let summary = Summary {
        trials: records.len(),
        mean_loss,
        exact_recovery_fraction: exact_count as f64 / records.len() as f64,
        jmin,
        pred_err,
        neg_log_mean_loss_over_jmin: if mean_loss > 0.0 {
            Some(-mean_loss.ln() / jmin)
        } else {
            None
        },
        rho_slack: if snr > 1.0 {
            Some(snr.ln().powf(-0.5))
        } else {
            None
        },
        wall_ms: start.elapsed().as_millis() as u64,
    };
    Ok(ExperimentOutput {
        records,
        summary,
        reports,
    })
}

fn run_trial(
    config: &ExperimentConfig,
    instance: &SbmInstance,
    pop: Option<&PopulationModel>,
    jmin: f64,
    pred_err: f64,
    trial: usize,
) -> Result<TrialOutcome> {
    let t_start = std::time::Instant::now();
    let seed = derive_seed(config.base_seed, Domain::Trial, trial as u64);
    let mut record = TrialRecord {
        trial,
        seed,
        n: instance.n(),
        k: instance.k(),
        p: instance.p(),
        q: instance.q(),
        loss: 0.0,
        exact: false,
        jmin,
        pred_err,
        lambda_k: None,
        spectral_dev: None,
        trunc_mass: None,
        exceed_count: None,
        trimmed: None,
        ms: 0,
    };
    let mut report = None;

    if config.noiseless {
        let pop_local;
        let pop = match pop {
            Some(p) => p,
            None => {
                pop_local = population_model(instance);
                &pop_local
            }
        };
        let mut ea = pop.p_matrix()?;
        for i in 0..instance.n() {
            ea[(i, i)] = 0.0;
        }
        let emb = embed_op(&ea, instance.k(), &EigOpts::default())?;
        let km = kmeans(&emb.weighted, instance.k(), config.restarts, seed)?;
        record.loss = misclustering_loss(&km.labels, instance.z_star(), instance.k())?;
        record.exact = record.loss == 0.0;
        record.lambda_k = Some(emb.lambda_k());
        record.spectral_dev = Some(0.0);
        record.trimmed = Some(0);
        if config.emit_timing {
            record.ms = t_start.elapsed().as_millis() as u64;
        }
        return Ok(TrialOutcome { record, report });
    }

    let graph = sample_sbm(instance, seed);
    match config.mode {
        Mode::Cluster => {
            let res = spectral_cluster(&graph, instance.k(), instance.p(), &config.cluster_opts(seed))?;
            record.loss = misclustering_loss(&res.assignment, instance.z_star(), instance.k())?;
            record.exact = record.loss == 0.0;
            record.lambda_k = Some(res.embedding.lambda_k());
            record.trimmed = Some(res.trimmed.removed_count());
        }
        Mode::Oracle => {
            let pop = pop.expect("population model precomputed for oracle mode");
            let res = crate::oracle::oracle_classify(&graph, pop)?;
            let miscount = res
                .labels
                .labels
                .iter()
                .zip(&instance.z_star().labels)
                .filter(|(a, b)| a != b)
                .count();
            record.loss = miscount as f64 / instance.n() as f64;
            record.exact = miscount == 0;
        }
        Mode::Diagnose => {
            let pop = pop.expect("population model precomputed for diagnose mode");
            let res = spectral_cluster(&graph, instance.k(), instance.p(), &config.cluster_opts(seed))?;
            record.loss = misclustering_loss(&res.assignment, instance.z_star(), instance.k())?;
            record.exact = record.loss == 0.0;
            record.lambda_k = Some(res.embedding.lambda_k());
            record.trimmed = Some(res.trimmed.removed_count());

            let dev = spectral_deviation(&res.trimmed, pop, seed);
            let t0 = t0_threshold(instance.k(), instance.beta(), instance.n());
            let t_used = config.t_threshold.unwrap_or(t0);
            let tl2 = truncated_l2_mass(&res.embedding.eig.vectors, t_used)?;
            let gap = crate::diagnostics::eigenvalue_gap_check(&res.embedding, instance);
            let stats = trimming_stats(&res.trimmed, instance);
            let mut loo_ratios = Vec::new();
            for j in 0..config.loo_nodes {
                let node = (derive_seed(seed, Domain::Start, 1000 + j as u64)
                    % instance.n() as u64) as usize;
                let chk = crate::diagnostics::leave_one_out_check_with_base(
                    &res.trimmed,
                    &res.embedding,
                    node,
                    &EigOpts::default(),
                )?;
                loo_ratios.push(chk.ratio);
            }
            let np = instance.n() as f64 * instance.p();
            let snr = instance.n() as f64 * (instance.p() - instance.q()).powi(2);
            let poly_scale =
                (instance.k() * instance.k()) as f64 / instance.beta() * instance.p();
            record.spectral_dev = Some(dev);
            record.trunc_mass = Some(tl2.mass);
            record.exceed_count = Some(tl2.count);
            report = Some(DiagnosticsReport {
                spectral_dev: dev,
                spectral_dev_ratio: dev / np.sqrt(),
                trunc_mass: tl2.mass,
                exceed_count: tl2.count,
                t_used,
                t0,
                lambda_k: gap.lambda_k,
                lambda_floor: gap.floor,
                lambda_half_floor_ok: gap.half_floor_ok,
                loo_ratios,
                poly_bound_ratio: record.loss * snr / poly_scale,
                trimmed_count: stats.removed,
            });
        }
        _ => unreachable!("trial modes checked by run_experiment"),
    }
    if config.emit_timing {
        record.ms = t_start.elapsed().as_millis() as u64;
    }
    Ok(TrialOutcome { record, report })
}

pub fn records_to_csv(records: &[TrialRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}

pub fn records_to_json(records: &[TrialRecord], summary: &Summary) -> String {
    let v = serde_json::json!({
        "records": records,
        "summary": summary,
    });
    serde_json::to_string_pretty(&v).expect("records serialize")
}

/// One row of a threshold scan.
#[derive(Clone, Debug, Serialize)]
pub struct ScanRow {
    pub n: usize,
    pub k: usize,
    pub p: f64,
    pub q: f64,
    pub jmin: f64,
    pub log_n: f64,
    pub jmin_over_log_n: f64,
    pub trials: usize,
    pub exact_count: usize,
    pub recovery_fraction: f64,
    pub mean_loss: f64,
}

pub const SCAN_CSV_HEADER: &str =
    "n,k,p,q,jmin,log_n,jmin_over_log_n,trials,exact_count,recovery_fraction,mean_loss";

impl ScanRow {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.n,
            self.k,
            self.p,
            self.q,
            self.jmin,
            self.log_n,
            self.jmin_over_log_n,
            self.trials,
            self.exact_count,
            self.recovery_fraction,
            self.mean_loss
        )
    }
}

/// Per grid point: J_min / log n against the empirical exact-recovery
/// fraction over `trials` clustering runs.
pub fn threshold_scan(config: &ExperimentConfig) -> Result<Vec<ScanRow>> {
    let mut points: Vec<ExperimentConfig> = Vec::new();
    if let Some(ns) = &config.grid_n {
        for &n in ns {
            let mut c = config.clone();
            c.n = n;
            c.sizes = None;
            points.push(c);
        }
    }
    if let Some(pqs) = &config.grid_pq {
        for &(p, q) in pqs {
            let mut c = config.clone();
            c.p = p;
            c.q = q;
            points.push(c);
        }
    }
    if points.is_empty() {
        return Err(Error::parameter(
            "threshold scan needs a nonempty grid (grid_n or grid_pq)",
        ));
    }
    let mut rows = Vec::with_capacity(points.len());
    for mut point in points {
        point.mode = Mode::Cluster;
        let out = run_experiment(&point)?;
        let inst = point.instance()?;
        let log_n = (inst.n() as f64).ln();
        rows.push(ScanRow {
            n: inst.n(),
            k: inst.k(),
            p: inst.p(),
            q: inst.q(),
            jmin: out.summary.jmin,
            log_n,
            jmin_over_log_n: out.summary.jmin / log_n,
            trials: out.summary.trials,
            exact_count: (out.summary.exact_recovery_fraction * out.summary.trials as f64)
                .round() as usize,
            recovery_fraction: out.summary.exact_recovery_fraction,
            mean_loss: out.summary.mean_loss,
        });
    }
    Ok(rows)
}
