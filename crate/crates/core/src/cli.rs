//! Command-line front end: `refine`, `simulate`, `evaluate` and `sweep`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::cala::cala;
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport, VideoEval, DEFAULT_THRESHOLDS};
use crate::instance::{Instance, OnlineLabelState};
use crate::io::{group_instances, read_records, states_to_jsonl, write_atomic};
use crate::online::{run_round, TeacherPrediction};
use crate::params::CorrectionParams;
use crate::sim::{run_simulation, SimulationConfig, SimulationTrace};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "NOCO_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "noco",
    version,
    about = "Noisy pseudo-label correction for temporal action localization"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Augment raw predictions, then run online correction rounds against teacher files.
    Refine(RefineArgs),
    /// Run the synthetic-noise simulation and write a per-round CSV trace.
    Simulate(SimulateArgs),
    /// Score predictions against ground truth.
    Evaluate(EvaluateArgs),
    /// Re-run the simulation for each value of one hyperparameter.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    /// Raw predictions (JSONL).
    pub predictions: PathBuf,
    /// Teacher prediction file for each round, in order; the last one is reused.
    #[arg(long = "teacher")]
    pub teachers: Vec<PathBuf>,
    /// Parameter file; defaults apply to missing keys.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Number of correction rounds (defaults to the number of teacher files).
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Refined labels (JSONL).
    #[arg(long)]
    pub out: PathBuf,
    /// Per-round statistics CSV (defaults to `<out>.stats.csv`).
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub config: PathBuf,
    /// Overrides the `[params]` table of the config.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// CSV trace destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    pub predictions: PathBuf,
    pub groundtruth: PathBuf,
    /// Comma-separated IoU thresholds.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_THRESHOLDS.to_vec())]
    pub thresholds: Vec<f64>,
    /// CSV report destination.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub config: PathBuf,
    /// One of rho, psi, eta0, eta1, eta2, alpha, beta.
    #[arg(long)]
    pub param: String,
    /// Comma-separated values, written in the given order.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<String>,
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Label count and correction activity after one round, summed over videos.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundStats {
    pub round: usize,
    pub labels: usize,
    pub corrected: usize,
    pub compensated: usize,
}

pub const REFINE_STATS_HEADER: &str = "round,labels,corrected,compensated";

pub fn stats_to_csv(stats: &[RoundStats]) -> String {
    let mut out = format!("{REFINE_STATS_HEADER}\n");
    for s in stats {
        out.push_str(&format!(
            "{},{},{},{}\n",
            s.round, s.labels, s.corrected, s.compensated
        ));
    }
    out
}

/// Augments every video's predictions and runs `rounds` correction rounds,
/// using `teachers[r]` in round `r + 1` (the last teacher is reused).
///
/// Videos are the union of ids seen in predictions and teachers, in id order.
pub fn refine(
    predictions: &BTreeMap<String, Vec<Instance>>,
    teachers: &[BTreeMap<String, Vec<Instance>>],
    params: &CorrectionParams,
    rounds: usize,
) -> Result<(Vec<OnlineLabelState>, Vec<RoundStats>)> {
    params.validate()?;
    if rounds > 0 && teachers.is_empty() {
        return Err(Error::invalid_param(
            "teacher",
            format!("{rounds} rounds requested but no teacher file given"),
        ));
    }
    let ids: BTreeSet<&String> = predictions
        .keys()
        .chain(teachers.iter().flat_map(|t| t.keys()))
        .collect();
    let ids: Vec<&String> = ids.into_iter().collect();

    let empty: Vec<Instance> = Vec::new();
    type Counts = Vec<(usize, usize)>;
    let per_video: Vec<(Vec<OnlineLabelState>, Counts)> = ids
        .par_iter()
        .map(|id| {
            let preds = predictions.get(*id).unwrap_or(&empty);
            let mut state = cala(id.as_str(), preds, params);
            let mut states = vec![state.clone()];
            let mut counts = vec![(0, 0)];
            for r in 0..rounds {
                let source = &teachers[r.min(teachers.len() - 1)];
                let teacher = TeacherPrediction::new(source.get(*id).cloned().unwrap_or_default());
                let trace = run_round(&state, &teacher, params, r + 1);
                counts.push((trace.corrected_count, trace.compensated_count));
                state = trace.state_after;
                states.push(state.clone());
            }
            (states, counts)
        })
        .collect();

    let stats = (0..=rounds)
        .map(|r| RoundStats {
            round: r,
            labels: per_video.iter().map(|(s, _)| s[r].len()).sum(),
            corrected: per_video.iter().map(|(_, c)| c[r].0).sum(),
            compensated: per_video.iter().map(|(_, c)| c[r].1).sum(),
        })
        .collect();
    let finals = per_video
        .into_iter()
        .map(|(mut s, _)| s.pop().expect("round 0 state"))
        .collect();
    Ok((finals, stats))
}

fn load_params(path: Option<&Path>) -> Result<CorrectionParams> {
    match path {
        Some(p) => CorrectionParams::from_file(p),
        None => Ok(CorrectionParams::default()),
    }
}

pub fn cmd_refine(args: &RefineArgs) -> Result<Vec<RoundStats>> {
    let params = load_params(args.params.as_deref())?;
    let predictions = group_instances(&read_records(&args.predictions)?);
    let teachers = args
        .teachers
        .iter()
        .map(|p| read_records(p).map(|r| group_instances(&r)))
        .collect::<Result<Vec<_>>>()?;
    let rounds = args.rounds.unwrap_or(teachers.len());
    let (states, stats) = refine(&predictions, &teachers, &params, rounds)?;

    let stats_path = args.stats.clone().unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".stats.csv");
        PathBuf::from(p)
    });
    write_atomic(&args.out, &states_to_jsonl(&states))?;
    write_atomic(&stats_path, &stats_to_csv(&stats))?;
    Ok(stats)
}

fn load_sim_config(
    config: &Path,
    params: Option<&Path>,
    rounds: Option<usize>,
    seed: Option<u64>,
) -> Result<SimulationConfig> {
    let mut cfg = SimulationConfig::from_file(config)?;
    if let Some(p) = params {
        cfg.params = CorrectionParams::from_file(p)?;
    }
    if let Some(r) = rounds {
        cfg.rounds = r;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<SimulationTrace> {
    let cfg = load_sim_config(&args.config, args.params.as_deref(), args.rounds, args.seed)?;
    let trace = run_simulation(&cfg)?;
    emit(args.out.as_deref(), &trace.to_csv())?;
    Ok(trace)
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<EvalReport> {
    if args.thresholds.is_empty() {
        return Err(Error::invalid_param(
            "thresholds",
            "at least one threshold required",
        ));
    }
    if let Some(t) = args.thresholds.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(Error::invalid_param(
            "thresholds",
            format!("{t} not in (0, 1]"),
        ));
    }
    let preds = group_instances(&read_records(&args.predictions)?);
    let gts = group_instances(&read_records(&args.groundtruth)?);
    let report = evaluate_grouped(&preds, &gts, &args.thresholds);
    println!("{report}");
    if let Some(out) = &args.out {
        write_atomic(
            out,
            &format!("{}\n{}\n", report.csv_header(), report.csv_row()),
        )?;
    }
    Ok(report)
}

/// Evaluates per-video groups; videos are the union of both maps.
pub fn evaluate_grouped(
    preds: &BTreeMap<String, Vec<Instance>>,
    gts: &BTreeMap<String, Vec<Instance>>,
    thresholds: &[f64],
) -> EvalReport {
    let ids: BTreeSet<&String> = preds.keys().chain(gts.keys()).collect();
    let videos: Vec<VideoEval> = ids
        .into_iter()
        .map(|id| VideoEval {
            preds: preds.get(id).map(Vec::as_slice).unwrap_or(&[]),
            gts: gts.get(id).map(Vec::as_slice).unwrap_or(&[]),
        })
        .collect();
    evaluate(&videos, thresholds)
}

pub const SWEEP_HEADER: &str = "param,value,final_miou,final_recall,final_boundary_error";

/// Runs one simulation per value with a shared seed; rows follow `values`.
pub fn sweep(cfg: &SimulationConfig, param: &str, values: &[String]) -> Result<String> {
    if values.is_empty() {
        return Err(Error::invalid_param(
            "values",
            "at least one value required",
        ));
    }
    let mut out = format!("{SWEEP_HEADER}\n");
    for value in values {
        let mut run = cfg.clone();
        run.params.set_by_name(param, value)?;
        let trace = run_simulation(&run)?;
        let last = trace.last();
        out.push_str(&format!(
            "{param},{},{},{},{}\n",
            value.trim(),
            last.miou,
            last.recall_05,
            last.boundary_error
        ));
    }
    Ok(out)
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<String> {
    let cfg = load_sim_config(&args.config, args.params.as_deref(), args.rounds, args.seed)?;
    let csv = sweep(&cfg, &args.param, &args.values)?;
    emit(args.out.as_deref(), &csv)?;
    Ok(csv)
}

/// Worker count from `NOCO_THREADS`, or `None` for the rayon default.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::invalid_param(
                THREADS_ENV,
                format!("`{v}` is not a positive integer"),
            )),
        },
        _ => Ok(None),
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads_from_env()? {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::invalid_param(THREADS_ENV, e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::Refine(a) => cmd_refine(a).map(|_| ()),
        Command::Simulate(a) => cmd_simulate(a).map(|_| ()),
        Command::Evaluate(a) => cmd_evaluate(a).map(|_| ()),
        Command::Sweep(a) => cmd_sweep(a).map(|_| ()),
    })
}
