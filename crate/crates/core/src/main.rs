//! Command-line front end: sampling, clustering, exponent tables, oracle
//! trials, diagnostics, Monte Carlo experiments, and threshold scans.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use sbm_spectral::diagnostics::{exploratory_threshold, t0_threshold};
use sbm_spectral::error::{Error, Result};
use sbm_spectral::experiment::{
    records_to_csv, records_to_json, run_experiment, threshold_scan, ExperimentConfig, Mode,
    OutputFormat, ScanRow, CSV_HEADER, SCAN_CSV_HEADER,
};
use sbm_spectral::pipeline::TAU_CONST_DEFAULT;
use sbm_spectral::rng::{derive_seed, Domain};
use sbm_spectral::sbm::CommunityAssignment;
use sbm_spectral::{
    closed_form_i, compute_j, compute_j_min, misclustering_loss, oracle_classify,
    population_model, sample_sbm, spectral_cluster, ClusterOpts, Graph, SbmInstance,
};

#[derive(Parser)]
#[command(name = "sbm-spectral", version, about = "Spectral clustering for stochastic block models with error-exponent prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct InstanceArgs {
    /// Node count.
    #[arg(long)]
    n: usize,
    /// Community count.
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Within-community edge probability.
    #[arg(long)]
    p: f64,
    /// Cross-community edge probability.
    #[arg(long)]
    q: f64,
    /// Comma-separated community sizes (balanced split when omitted).
    #[arg(long, value_parser = parse_sizes)]
    sizes: Option<Vec<usize>>,
}

impl InstanceArgs {
    fn build(&self) -> Result<SbmInstance> {
        match &self.sizes {
            Some(sizes) => {
                if sizes.iter().sum::<usize>() != self.n {
                    return Err(Error::parameter("sizes must sum to n"));
                }
                SbmInstance::with_sizes(sizes, self.p, self.q)
            }
            None => SbmInstance::balanced(self.n, self.k, self.p, self.q),
        }
    }
}

fn parse_sizes(s: &str) -> std::result::Result<Vec<usize>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|e| e.to_string()))
        .collect()
}

fn parse_pq_grid(s: &str) -> std::result::Result<Vec<(f64, f64)>, String> {
    s.split(';')
        .map(|pair| {
            let mut it = pair.split(',');
            let p = it
                .next()
                .ok_or("missing p")?
                .trim()
                .parse::<f64>()
                .map_err(|e| e.to_string())?;
            let q = it
                .next()
                .ok_or("missing q")?
                .trim()
                .parse::<f64>()
                .map_err(|e| e.to_string())?;
            Ok((p, q))
        })
        .collect()
}

#[derive(Subcommand)]
enum Command {
    /// Sample one SBM graph and write its edge list.
    Sample {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output path for the edge list (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Prefix the edge list with an "n k" header line.
        #[arg(long)]
        header: bool,
        /// Also write the ground-truth labels, one per line.
        #[arg(long)]
        labels_out: Option<PathBuf>,
    },
    /// Run the spectral clustering pipeline on an edge-list file.
    Cluster {
        /// Edge-list input path.
        #[arg(long)]
        input: PathBuf,
        /// Input starts with an "n k" header line.
        #[arg(long)]
        header: bool,
        /// Node count (required when the file has no header).
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        /// Within-community probability used for the trimming threshold.
        #[arg(long)]
        p: Option<f64>,
        /// Estimate p from the edge density instead of supplying it.
        #[arg(long)]
        estimate_p: bool,
        #[arg(long, default_value_t = TAU_CONST_DEFAULT)]
        tau_const: f64,
        #[arg(long, default_value_t = 20)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Where to write the inferred labels (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Ground-truth labels; when given, the misclustering loss is
        /// reported on stderr.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Exponent table: J for every ordered community pair, J_min, I_{p,q}.
    Exponent {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
    },
    /// Oracle-classifier trials; emits per-trial misclassification counts.
    Oracle {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
    },
    /// Per-trial perturbation diagnostics.
    Diagnose {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Row-norm threshold t (defaults to the theoretical t0; pass the
        /// exploratory 3 sqrt(k/(beta n)) to see nontrivial mass).
        #[arg(long)]
        t: Option<f64>,
        /// Use the exploratory threshold instead of t0.
        #[arg(long)]
        exploratory_t: bool,
        /// Leave-one-out checks per trial.
        #[arg(long, default_value_t = 0)]
        loo_nodes: usize,
        #[arg(long, default_value_t = 20)]
        restarts: usize,
        #[arg(long, default_value_t = TAU_CONST_DEFAULT)]
        tau_const: f64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
    },
    /// Monte Carlo experiment with the frozen record schema.
    Experiment {
        /// JSON config file; when given, all other flags are ignored.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 600)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 0.05)]
        p: f64,
        #[arg(long, default_value_t = 0.01)]
        q: f64,
        #[arg(long, value_parser = parse_sizes)]
        sizes: Option<Vec<usize>>,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "cluster")]
        mode: ModeArg,
        #[arg(long, default_value_t = 20)]
        restarts: usize,
        #[arg(long, default_value_t = TAU_CONST_DEFAULT)]
        tau_const: f64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Feed E A through the pipeline instead of sampling.
        #[arg(long)]
        noiseless: bool,
        /// Record wall time per trial (breaks byte-identical reruns).
        #[arg(long)]
        timing: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
    },
    /// Exact-recovery threshold scan over a grid of n or (p, q).
    Scan {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 0.15)]
        p: f64,
        #[arg(long, default_value_t = 0.03)]
        q: f64,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated node counts to sweep.
        #[arg(long, value_parser = parse_sizes)]
        grid_n: Option<Vec<usize>>,
        /// Semicolon-separated p,q pairs, e.g. "0.15,0.03;0.05,0.02".
        #[arg(long, value_parser = parse_pq_grid)]
        grid_pq: Option<Vec<(f64, f64)>>,
        #[arg(long, default_value_t = 20)]
        restarts: usize,
        #[arg(long, default_value_t = TAU_CONST_DEFAULT)]
        tau_const: f64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
    },
}

#[derive(clap::ValueEnum, Clone, Copy)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        }
    }
}

#[derive(clap::ValueEnum, Clone, Copy)]
enum ModeArg {
    Cluster,
    Oracle,
    Diagnose,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Cluster => Mode::Cluster,
            ModeArg::Oracle => Mode::Oracle,
            ModeArg::Diagnose => Mode::Diagnose,
        }
    }
}

fn open_sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    match path {
        Some(p) => Ok(Box::new(BufWriter::new(File::create(p)?))),
        None => Ok(Box::new(std::io::stdout().lock())),
    }
}

fn load_config(path: &PathBuf) -> Result<ExperimentConfig> {
    let mut s = String::new();
    File::open(path)?.read_to_string(&mut s)?;
    serde_json::from_str(&s).map_err(|e| Error::parameter(format!("config file: {e}")))
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sample {
            instance,
            seed,
            out,
            header,
            labels_out,
        } => {
            let inst = instance.build()?;
            let g = sample_sbm(&inst, seed);
            let mut sink = open_sink(&out)?;
            g.write_edge_list(&mut sink, header.then_some(inst.k()))?;
            sink.flush()?;
            if let Some(path) = labels_out {
                let mut f = BufWriter::new(File::create(path)?);
                inst.z_star().write(&mut f)?;
                f.flush()?;
            }
            eprintln!("sampled n={} edges={} seed={}", g.n(), g.num_edges(), seed);
            Ok(())
        }
        Command::Cluster {
            input,
            header,
            n,
            k,
            p,
            estimate_p,
            tau_const,
            restarts,
            seed,
            out,
            truth,
        } => {
            let file = BufReader::new(File::open(&input)?);
            let (g, k_header) = Graph::read_edge_list(file, header, n)?;
            let k = k
                .or(k_header)
                .ok_or_else(|| Error::parameter("k required (flag or header)"))?;
            let p = match (p, estimate_p) {
                (Some(p), false) => p,
                (None, true) => sbm_spectral::pipeline::estimate_edge_probability(&g),
                (Some(_), true) => {
                    return Err(Error::parameter("--p and --estimate-p are exclusive"))
                }
                (None, false) => {
                    return Err(Error::parameter("supply --p or --estimate-p"))
                }
            };
            let opts = ClusterOpts {
                tau_const,
                restarts,
                seed,
                ..ClusterOpts::default()
            };
            let res = spectral_cluster(&g, k, p, &opts)?;
            let mut sink = open_sink(&out)?;
            res.assignment.write(&mut sink)?;
            sink.flush()?;
            eprintln!(
                "clustered n={} k={} trimmed={} lambda_k={:.6}",
                g.n(),
                k,
                res.trimmed.removed_count(),
                res.embedding.lambda_k()
            );
            if let Some(path) = truth {
                let truth = CommunityAssignment::read(BufReader::new(File::open(path)?))?;
                let loss = misclustering_loss(&res.assignment, &truth, k)?;
                eprintln!("loss={loss}");
            }
            Ok(())
        }
        Command::Exponent {
            instance,
            out,
            format,
        } => {
            let inst = instance.build()?;
            let jmin = compute_j_min(&inst)?;
            let i_pq = closed_form_i(inst.p(), inst.q())?;
            let pred = (-jmin.value).exp();
            let mut rows = Vec::new();
            for a in 0..inst.k() {
                for b in 0..inst.k() {
                    if a == b {
                        continue;
                    }
                    let (m1, m2) = (inst.sizes()[a] as u64, inst.sizes()[b] as u64);
                    let r = compute_j(m1, m2, inst.p(), inst.q())?;
                    let lo = m2 as f64 * (inst.p() - inst.q()).powi(2) / (8.0 * inst.p());
                    let hi = (m1 + m2) as f64 * (inst.p() - inst.q()).powi(2) / (4.0 * inst.q());
                    rows.push(serde_json::json!({
                        "a": a,
                        "b": b,
                        "m1": m1,
                        "m2": m2,
                        "j": r.value,
                        "t_star": r.t_star,
                        "lower_bound": lo,
                        "upper_bound": hi,
                        "is_min": jmin.pair == Some((a, b)),
                        "jmin": jmin.value,
                        "i_pq": i_pq,
                        "pred_err": pred,
                    }));
                }
            }
            let mut sink = open_sink(&out)?;
            match OutputFormat::from(format) {
                OutputFormat::Csv => {
                    writeln!(
                        sink,
                        "a,b,m1,m2,j,t_star,lower_bound,upper_bound,is_min,jmin,i_pq,pred_err"
                    )?;
                    for r in &rows {
                        writeln!(
                            sink,
                            "{},{},{},{},{},{},{},{},{},{},{},{}",
                            r["a"], r["b"], r["m1"], r["m2"], r["j"], r["t_star"],
                            r["lower_bound"], r["upper_bound"],
                            r["is_min"].as_bool().unwrap() as u8,
                            r["jmin"], r["i_pq"], r["pred_err"]
                        )?;
                    }
                }
                OutputFormat::Json => {
                    writeln!(sink, "{}", serde_json::to_string_pretty(&rows).unwrap())?;
                }
            }
            sink.flush()?;
            eprintln!(
                "J_min={:.6} attained by pair {:?}; predicted error e^-J_min={:.6e}",
                jmin.value,
                jmin.pair.unwrap(),
                pred
            );
            Ok(())
        }
        Command::Oracle {
            instance,
            trials,
            seed,
            out,
            format,
        } => {
            let inst = instance.build()?;
            let pop = population_model(&inst);
            let mut rows = Vec::new();
            for t in 0..trials {
                let trial_seed = derive_seed(seed, Domain::Trial, t as u64);
                let g = sample_sbm(&inst, trial_seed);
                let r = oracle_classify(&g, &pop)?;
                let miscount = r
                    .labels
                    .labels
                    .iter()
                    .zip(&inst.z_star().labels)
                    .filter(|(a, b)| a != b)
                    .count();
                rows.push((t, trial_seed, miscount, miscount as f64 / inst.n() as f64));
            }
            let mut sink = open_sink(&out)?;
            match OutputFormat::from(format) {
                OutputFormat::Csv => {
                    writeln!(sink, "trial,seed,miscount,rate")?;
                    for (t, s, m, rate) in &rows {
                        writeln!(sink, "{t},{s},{m},{rate}")?;
                    }
                }
                OutputFormat::Json => {
                    let v: Vec<_> = rows
                        .iter()
                        .map(|(t, s, m, rate)| {
                            serde_json::json!({"trial": t, "seed": s, "miscount": m, "rate": rate})
                        })
                        .collect();
                    writeln!(sink, "{}", serde_json::to_string_pretty(&v).unwrap())?;
                }
            }
            sink.flush()?;
            let total: usize = rows.iter().map(|r| r.2).sum();
            let rate = total as f64 / (trials as f64 * inst.n() as f64);
            let jmin = compute_j_min(&inst)?.value;
            eprintln!(
                "oracle rate={rate:.6e} over {trials} trials; -log(rate)/J_min={:.4}",
                -rate.ln() / jmin
            );
            Ok(())
        }
        Command::Diagnose {
            instance,
            trials,
            seed,
            t,
            exploratory_t,
            loo_nodes,
            restarts,
            tau_const,
            jobs,
            out,
            format,
        } => {
            let inst = instance.build()?;
            let t_threshold = match (t, exploratory_t) {
                (Some(t), false) => Some(t),
                (None, true) => Some(exploratory_threshold(inst.k(), inst.beta(), inst.n())),
                (None, false) => None, // defaults to t0 inside the harness
                (Some(_), true) => {
                    return Err(Error::parameter("--t and --exploratory-t are exclusive"))
                }
            };
            let config = ExperimentConfig {
                n: inst.n(),
                k: inst.k(),
                p: inst.p(),
                q: inst.q(),
                sizes: Some(inst.sizes().to_vec()),
                trials,
                base_seed: seed,
                mode: Mode::Diagnose,
                restarts,
                tau_const,
                t_threshold,
                loo_nodes,
                jobs,
                format: format.into(),
                noiseless: false,
                emit_timing: false,
                grid_n: None,
                grid_pq: None,
            };
            let outcome = run_experiment(&config)?;
            let mut sink = open_sink(&out)?;
            let reports: Vec<_> = outcome
                .reports
                .iter()
                .enumerate()
                .filter_map(|(i, r)| r.as_ref().map(|r| (i, r)))
                .collect();
            match OutputFormat::from(format) {
                OutputFormat::Csv => {
                    writeln!(
                        sink,
                        "trial,spectral_dev,spectral_dev_ratio,trunc_mass,exceed_count,t_used,t0,lambda_k,lambda_floor,lambda_half_floor_ok,loo_ratios,poly_bound_ratio,trimmed_count"
                    )?;
                    for (i, r) in &reports {
                        let loo = r
                            .loo_ratios
                            .iter()
                            .map(|x| x.to_string())
                            .collect::<Vec<_>>()
                            .join(";");
                        writeln!(
                            sink,
                            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                            i,
                            r.spectral_dev,
                            r.spectral_dev_ratio,
                            r.trunc_mass,
                            r.exceed_count,
                            r.t_used,
                            r.t0,
                            r.lambda_k,
                            r.lambda_floor,
                            r.lambda_half_floor_ok as u8,
                            loo,
                            r.poly_bound_ratio,
                            r.trimmed_count
                        )?;
                    }
                }
                OutputFormat::Json => {
                    let v: Vec<_> = reports
                        .iter()
                        .map(|(i, r)| serde_json::json!({"trial": i, "report": r}))
                        .collect();
                    writeln!(sink, "{}", serde_json::to_string_pretty(&v).unwrap())?;
                }
            }
            sink.flush()?;
            eprintln!(
                "diagnose: trials={} t0={:.4} (set --exploratory-t for nontrivial mass)",
                trials,
                t0_threshold(inst.k(), inst.beta(), inst.n())
            );
            Ok(())
        }
        Command::Experiment {
            config,
            n,
            k,
            p,
            q,
            sizes,
            trials,
            seed,
            mode,
            restarts,
            tau_const,
            jobs,
            noiseless,
            timing,
            out,
            format,
        } => {
            let cfg = match config {
                Some(path) => load_config(&path)?,
                None => ExperimentConfig {
                    n,
                    k,
                    p,
                    q,
                    sizes,
                    trials,
                    base_seed: seed,
                    mode: mode.into(),
                    restarts,
                    tau_const,
                    t_threshold: None,
                    loo_nodes: 0,
                    jobs,
                    format: format.into(),
                    noiseless,
                    emit_timing: timing,
                    grid_n: None,
                    grid_pq: None,
                },
            };
            let outcome = run_experiment(&cfg)?;
            let mut sink = open_sink(&out)?;
            match cfg.format {
                OutputFormat::Csv => {
                    sink.write_all(records_to_csv(&outcome.records).as_bytes())?;
                }
                OutputFormat::Json => {
                    writeln!(
                        sink,
                        "{}",
                        records_to_json(&outcome.records, &outcome.summary)
                    )?;
                }
            }
            sink.flush()?;
            let s = &outcome.summary;
            eprintln!(
                "trials={} mean_loss={:.6e} exact_fraction={:.3} jmin={:.6} pred_err={:.6e} ratio={} rho={} wall_ms={}",
                s.trials,
                s.mean_loss,
                s.exact_recovery_fraction,
                s.jmin,
                s.pred_err,
                s.neg_log_mean_loss_over_jmin
                    .map(|r| format!("{r:.4}"))
                    .unwrap_or_else(|| "-".into()),
                s.rho_slack
                    .map(|r| format!("{r:.4}"))
                    .unwrap_or_else(|| "-".into()),
                s.wall_ms
            );
            Ok(())
        }
        Command::Scan {
            config,
            n,
            k,
            p,
            q,
            trials,
            seed,
            grid_n,
            grid_pq,
            restarts,
            tau_const,
            jobs,
            out,
            format,
        } => {
            let cfg = match config {
                Some(path) => load_config(&path)?,
                None => ExperimentConfig {
                    n,
                    k,
                    p,
                    q,
                    sizes: None,
                    trials,
                    base_seed: seed,
                    mode: Mode::ThresholdScan,
                    restarts,
                    tau_const,
                    t_threshold: None,
                    loo_nodes: 0,
                    jobs,
                    format: format.into(),
                    noiseless: false,
                    emit_timing: false,
                    grid_n,
                    grid_pq,
                },
            };
            let rows = threshold_scan(&cfg)?;
            let mut sink = open_sink(&out)?;
            match cfg.format {
                OutputFormat::Csv => {
                    writeln!(sink, "{SCAN_CSV_HEADER}")?;
                    for r in &rows {
                        writeln!(sink, "{}", r.to_csv_row())?;
                    }
                }
                OutputFormat::Json => {
                    writeln!(sink, "{}", serde_json::to_string_pretty(&rows).unwrap())?;
                }
            }
            sink.flush()?;
            for r in &rows {
                eprintln!(
                    "n={} p={} q={}: J_min/log n = {:.3}, recovery {}/{}",
                    r.n, r.p, r.q, r.jmin_over_log_n, r.exact_count, r.trials
                );
            }
            Ok(())
        }
    }
}
