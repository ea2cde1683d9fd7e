//! Command-line front end: dataset simulation, training, evaluation,
//! attribution, overlap checking, gradient verification, and grid sweeps.
//!
//! Every artifact-producing run writes a `resolved_config.json` next to its
//! outputs with everything needed to reproduce it. Input dataset directories
//! are never written to. Exit codes: 0 success, 1 validation/usage error,
//! 2 runtime failure.

use crate::attribution::{
    aggregate_attributions, integrated_gradients, min_max_normalized, overlap_consistency_check,
    write_aggregate_csv, zero_baselines, AttributionError, AttributionResult,
};
use crate::gradcheck::{run_end_to_end_suite, run_op_suite, worst_of};
use crate::graphdata::{read_dataset, write_dataset, GraphDataError, Split};
use crate::model::{Model, ModelConfig, ModelError};
use crate::simulator::{build_simulation_dataset, generate_session, ClassDef, SimId, SimulationSpec};
use crate::tape::Tape;
use crate::trainer::{
    evaluate, load_checkpoint, save_checkpoint, train_with, write_history_csv, EvalReport,
    TrainConfig, TrainError,
};
use clap::{Args, Parser, Subcommand};
use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or configuration; exit code 1.
    Validation(String),
    /// The run itself failed; exit code 2.
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "error: {}", m),
            CliError::Runtime(m) => write!(f, "runtime error: {}", m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<GraphDataError> for CliError {
    fn from(e: GraphDataError) -> Self {
        match e {
            GraphDataError::Validation(_) => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(_) => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Validation(_) => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<AttributionError> for CliError {
    fn from(e: AttributionError) -> Self {
        match e {
            AttributionError::Validation(_) => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("i/o: {}", e))
    }
}

#[derive(Parser)]
#[command(
    name = "stgl",
    about = "Spatio-temporal graph signal learning toolkit",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Master seed; all randomness in the run derives from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker thread cap for batch gradients.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Flat config override, repeatable: --set key=value.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Build a synthetic diffusion dataset (simulation I or II).
    Simulate {
        /// Which simulation: I (noise-source classes) or II (sender classes).
        #[arg(long, default_value = "I")]
        sim: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train a classifier on a dataset directory.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Evaluate a checkpoint on one split of a dataset.
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// train | val | test
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Integrated-gradients attribution maps, aggregated per class.
    Attribute {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Attribution agreement between two overlapping windows of one session.
    OverlapCheck {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Finite-difference verification of every op and the end-to-end loss.
    Gradcheck {
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Grid search over learning rate, weight decay, and dropout.
    Sweep {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
}

/// Flat key=value overrides; every key must be consumed.
struct Overrides(BTreeMap<String, String>);

impl Overrides {
    fn parse(pairs: &[String]) -> Result<Self, CliError> {
        let mut map = BTreeMap::new();
        for p in pairs {
            let (k, v) = p.split_once('=').ok_or_else(|| {
                CliError::Validation(format!("override '{}' is not of the form key=value", p))
            })?;
            if map.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(CliError::Validation(format!("override key '{}' given twice", k)));
            }
        }
        Ok(Overrides(map))
    }

    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: fmt::Display,
    {
        match self.0.remove(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| CliError::Validation(format!("override {}={}: {}", key, v, e))),
        }
    }

    /// Comma-separated list override.
    fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>, CliError>
    where
        T::Err: fmt::Display,
    {
        match self.0.remove(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim().parse::<T>().map_err(|e| {
                        CliError::Validation(format!("override {}={}: {}", key, v, e))
                    })
                })
                .collect::<Result<Vec<T>, CliError>>()
                .map(Some),
        }
    }

    fn finish(self) -> Result<(), CliError> {
        if self.0.is_empty() {
            Ok(())
        } else {
            let keys: Vec<&str> = self.0.keys().map(String::as_str).collect();
            Err(CliError::Validation(format!("unknown override key(s): {}", keys.join(", "))))
        }
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            // help/version are successful exits; everything else is usage
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(CliError::Validation(m)) => {
            eprintln!("error: {}", m);
            1
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("runtime error: {}", m);
            2
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Simulate { sim, out, common } => cmd_simulate(&sim, &out, &common),
        Command::Train { dataset, out, common } => cmd_train(&dataset, &out, &common),
        Command::Evaluate { dataset, checkpoint, split, out, common } => {
            cmd_evaluate(&dataset, &checkpoint, &split, out.as_deref(), &common)
        }
        Command::Attribute { dataset, checkpoint, out, common } => {
            cmd_attribute(&dataset, &checkpoint, &out, &common)
        }
        Command::OverlapCheck { checkpoint, out, common } => {
            cmd_overlap_check(&checkpoint, out.as_deref(), &common)
        }
        Command::Gradcheck { out, common } => cmd_gradcheck(out.as_deref(), &common),
        Command::Sweep { dataset, out, common } => cmd_sweep(&dataset, &out, &common),
    }
}

fn write_resolved_config(dir: &Path, value: serde_json::Value) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let body = serde_json::to_string_pretty(&value)
        .map_err(|e| CliError::Runtime(format!("serialize resolved config: {}", e)))?;
    std::fs::write(dir.join("resolved_config.json"), body)?;
    Ok(())
}

fn parse_split(s: &str) -> Result<Split, CliError> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(CliError::Validation(format!(
            "unknown split '{}', expected train | val | test",
            other
        ))),
    }
}

/// Class definitions for a simulation at any node count, scaled from the
/// standard layout (first/last 30% noise sources; 30-50%/50-70% senders).
fn class_defs_for(sim: SimId, n_nodes: usize, weight: f64) -> Vec<ClassDef> {
    let frac = |p: f64| (p * n_nodes as f64).round() as usize;
    match sim {
        SimId::I => vec![
            ClassDef::NoiseSources { nodes: (0..frac(0.3)).collect() },
            ClassDef::NoiseSources { nodes: (frac(0.7)..n_nodes).collect() },
        ],
        SimId::II => vec![
            ClassDef::StrengthenedSenders { nodes: (frac(0.3)..frac(0.5)).collect(), weight },
            ClassDef::StrengthenedSenders { nodes: (frac(0.5)..frac(0.7)).collect(), weight },
        ],
    }
}

fn cmd_simulate(sim: &str, out: &Path, common: &CommonArgs) -> Result<(), CliError> {
    let sim_id: SimId = sim.parse().map_err(CliError::Validation)?;
    let mut ov = Overrides::parse(&common.set)?;

    let mut spec = SimulationSpec { seed: common.seed, ..Default::default() };
    if let Some(v) = ov.take("n_nodes")? {
        spec.n_nodes = v;
    }
    if let Some(v) = ov.take("n_communities")? {
        spec.n_communities = v;
    }
    if let Some(v) = ov.take("p_in")? {
        spec.p_in = v;
    }
    if let Some(v) = ov.take("p_out")? {
        spec.p_out = v;
    }
    if let Some(v) = ov.take("t_len")? {
        spec.t_len = v;
    }
    if let Some(v) = ov.take("temporal_noise_std")? {
        spec.temporal_noise_std = v;
    }
    if let Some(v) = ov.take("spatial_noise_std")? {
        spec.spatial_noise_std = v;
    }
    if let Some(v) = ov.take("samples_per_class")? {
        spec.samples_per_class = v;
    }
    let weight: f64 = ov.take("strengthen_weight")?.unwrap_or(5.0);
    ov.finish()?;
    spec.class_defs = class_defs_for(sim_id, spec.n_nodes, weight);
    spec.validate()?;

    let dataset = build_simulation_dataset(&spec)?;
    std::fs::create_dir_all(out)?;
    write_dataset(&dataset, out)?;
    write_resolved_config(
        out,
        serde_json::json!({
            "command": "simulate",
            "sim": format!("{:?}", sim_id),
            "seed": common.seed,
            "spec": spec,
        }),
    )?;
    println!(
        "wrote {} samples ({} nodes, {} steps, {} classes) to {}",
        dataset.manifest.n_samples,
        dataset.manifest.n_nodes,
        dataset.manifest.t_len,
        dataset.n_classes(),
        out.display()
    );
    Ok(())
}

/// Dataset-shaped model config plus training config from overrides.
fn resolve_train_configs(
    n_nodes: usize,
    t_len: usize,
    n_classes: usize,
    common: &CommonArgs,
    ov: &mut Overrides,
) -> Result<(ModelConfig, TrainConfig), CliError> {
    let mut mc = ModelConfig::with_defaults(n_nodes, t_len, n_classes);
    if let Some(v) = ov.take("d_h1")? {
        mc.d_h1 = v;
    }
    if let Some(v) = ov.take("d_latent")? {
        mc.d_latent = v;
    }
    if let Some(v) = ov.take("k_hops")? {
        mc.k_hops = v;
    }
    if let Some(v) = ov.take("h_adp")? {
        mc.h_adp = v;
    }
    if let Some(v) = ov.take("tcn_per_gnn")? {
        mc.tcn_per_gnn = v;
        mc.cluster_schedule =
            (0..mc.n_blocks()).map(|b| (n_nodes >> (b + 1)).max(1)).collect();
    }
    if let Some(v) = ov.take("dropout")? {
        mc.dropout = v;
    }
    if let Some(v) = ov.take::<String>("adjacency_mode")? {
        mc.adjacency_mode = v.parse().map_err(CliError::Validation)?;
    }
    if let Some(v) = ov.take("smoothing")? {
        mc.smoothing_enabled = v;
    }
    if let Some(v) = ov.take("coarsen")? {
        mc.coarsen = v;
    }
    if let Some(v) = ov.take_list("cluster_schedule")? {
        mc.cluster_schedule = v;
    } else if mc.coarsen {
        // coarsening needs a schedule that ends on a single super-node
        let blocks = mc.n_blocks();
        mc.cluster_schedule =
            (0..blocks).map(|b| if b + 1 == blocks { 1 } else { (n_nodes >> (b + 1)).max(2) }).collect();
    }
    if let Some(v) = ov.take_list::<f64>("alphas")? {
        if v.len() != 4 {
            return Err(CliError::Validation(format!("alphas needs 4 values, got {}", v.len())));
        }
        mc.alphas = [v[0], v[1], v[2], v[3]];
    }
    if let Some(v) = ov.take("tau")? {
        mc.tau = v;
    }

    let mut tc = TrainConfig { seed: common.seed, threads: common.threads, ..Default::default() };
    if let Some(v) = ov.take("epochs")? {
        tc.epochs = v;
    }
    if let Some(v) = ov.take("learning_rate")? {
        tc.learning_rate = v;
    }
    if let Some(v) = ov.take("weight_decay")? {
        tc.weight_decay = v;
    }
    if let Some(v) = ov.take("batch_size")? {
        tc.batch_size = v;
    }
    Ok((mc, tc))
}

fn cmd_train(dataset_dir: &Path, out: &Path, common: &CommonArgs) -> Result<(), CliError> {
    let dataset = read_dataset(dataset_dir)?;
    let mut ov = Overrides::parse(&common.set)?;
    let (model_config, train_config) = resolve_train_configs(
        dataset.manifest.n_nodes,
        dataset.manifest.t_len,
        dataset.n_classes(),
        common,
        &mut ov,
    )?;
    ov.finish()?;
    model_config.validate()?;
    train_config.validate()?;

    std::fs::create_dir_all(out)?;
    write_resolved_config(
        out,
        serde_json::json!({
            "command": "train",
            "dataset": dataset_dir.display().to_string(),
            "seed": common.seed,
            "threads": common.threads,
            "model_config": model_config,
            "train_config": train_config,
        }),
    )?;

    let outcome = train_with(&model_config, &train_config, &dataset, &mut |s| {
        println!(
            "epoch {:>3}: train_loss {:.4} val_loss {:.4} val_weighted_f1 {:.4}",
            s.epoch, s.train_loss, s.val_loss, s.val_weighted_f1
        );
    })?;
    save_checkpoint(&out.join("checkpoint"), &outcome.model, &outcome.history, outcome.best_epoch)?;
    write_history_csv(&out.join("history.csv"), &outcome.history)?;
    println!("best epoch {}; checkpoint written to {}", outcome.best_epoch, out.join("checkpoint").display());
    Ok(())
}

fn report_json(report: &EvalReport) -> serde_json::Value {
    serde_json::json!({
        "accuracy": report.accuracy(),
        "weighted_f1": report.weighted_f1,
        "precision": report.precision,
        "recall": report.recall,
        "f1": report.f1,
        "loss": report.loss,
        "confusion": report.confusion,
    })
}

fn cmd_evaluate(
    dataset_dir: &Path,
    checkpoint: &Path,
    split: &str,
    out: Option<&Path>,
    common: &CommonArgs,
) -> Result<(), CliError> {
    let split = parse_split(split)?;
    Overrides::parse(&common.set)?.finish()?;
    let dataset = read_dataset(dataset_dir)?;
    let (model, _, best_epoch) = load_checkpoint(checkpoint)?;
    let report = evaluate(&model, &dataset, split)?;
    println!(
        "split {:?}: accuracy {:.4} weighted_f1 {:.4} loss {:.4} (checkpoint best epoch {})",
        split,
        report.accuracy(),
        report.weighted_f1,
        report.loss,
        best_epoch
    );
    for (k, row) in report.confusion.iter().enumerate() {
        println!(
            "class {}: precision {:.4} recall {:.4} f1 {:.4} confusion {:?}",
            k, report.precision[k], report.recall[k], report.f1[k], row
        );
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let body = serde_json::to_string_pretty(&report_json(&report))
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        std::fs::write(dir.join("eval_report.json"), body)?;
        write_resolved_config(
            dir,
            serde_json::json!({
                "command": "evaluate",
                "dataset": dataset_dir.display().to_string(),
                "checkpoint": checkpoint.display().to_string(),
                "split": format!("{:?}", split),
            }),
        )?;
    }
    Ok(())
}

/// Mean A_adp over a set of samples; None when the mode has no adaptive arm.
fn mean_adaptive_adjacency(
    model: &Model,
    dataset: &crate::graphdata::Dataset,
    indices: &[usize],
) -> Result<Option<crate::tensor::Tensor>, CliError> {
    if !model.config.adjacency_mode.uses_adaptive() {
        return Ok(None);
    }
    let n = model.config.n_nodes;
    let mut acc = vec![0.0; n * n];
    for &i in indices {
        let s = &dataset.samples[i];
        let mut tape = Tape::new();
        let cache = model.forward_on_tape(&mut tape, &s.adjacency, &s.signals, false, None)?;
        let a_adp = cache
            .a_adp
            .ok_or_else(|| CliError::Runtime("adaptive adjacency missing from forward".into()))?;
        for (a, v) in acc.iter_mut().zip(tape.value(a_adp).data()) {
            *a += v / indices.len() as f64;
        }
    }
    Ok(Some(crate::tensor::Tensor::new(vec![n, n], acc).unwrap()))
}

fn cmd_attribute(
    dataset_dir: &Path,
    checkpoint: &Path,
    out: &Path,
    common: &CommonArgs,
) -> Result<(), CliError> {
    let mut ov = Overrides::parse(&common.set)?;
    let m_steps: usize = ov.take("m_steps")?.unwrap_or(50);
    let split = parse_split(&ov.take::<String>("split")?.unwrap_or_else(|| "test".into()))?;
    let samples_cap: Option<usize> = ov.take("samples")?;
    ov.finish()?;

    let dataset = read_dataset(dataset_dir)?;
    let (model, _, _) = load_checkpoint(checkpoint)?;
    let indices = dataset.split_indices(split);
    if indices.is_empty() {
        return Err(CliError::Validation(format!("split {:?} is empty", split)));
    }
    let (base_a, base_x) = zero_baselines(model.config.n_nodes, model.config.t_len);

    std::fs::create_dir_all(out)?;
    let mut metadata = Vec::new();
    for class in 0..dataset.n_classes() {
        let class_idx: Vec<usize> = indices
            .iter()
            .copied()
            .filter(|&i| dataset.samples[i].label == class)
            .collect();
        // default budget follows the attribution protocol: up to 900 samples
        let cap = samples_cap.unwrap_or(900).min(class_idx.len());
        let used = &class_idx[..cap];
        if used.is_empty() {
            return Err(CliError::Validation(format!(
                "no {:?} samples of class {} to attribute",
                split, class
            )));
        }

        let mut results: Vec<AttributionResult> = Vec::with_capacity(used.len());
        for &i in used {
            let s = &dataset.samples[i];
            results.push(integrated_gradients(
                &model, &s.adjacency, &s.signals, class, m_steps, &base_a, &base_x,
            )?);
        }
        let gaps: Vec<f64> = results.iter().map(|r| r.completeness_gap).collect();
        let agg = aggregate_attributions(&results, None)?;

        agg.mean_a.write_tns(&out.join(format!("attr_a_mean_class{}.tns", class)))
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        agg.mean_x.write_tns(&out.join(format!("attr_x_mean_class{}.tns", class)))
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        min_max_normalized(&agg.mean_x)
            .write_tns(&out.join(format!("attr_x_mean_norm_class{}.tns", class)))
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        write_aggregate_csv(&out.join(format!("summary_class{}.csv", class)), &agg, None)?;
        if let Some(a_adp) = mean_adaptive_adjacency(&model, &dataset, used)? {
            a_adp
                .write_tns(&out.join(format!("a_adp_mean_class{}.tns", class)))
                .map_err(|e| CliError::Runtime(e.to_string()))?;
        }

        let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
        let max_gap = gaps.iter().cloned().fold(0.0, f64::max);
        println!(
            "class {}: {} samples, m_steps {}, completeness gap mean {:.3e} max {:.3e}",
            class, used.len(), m_steps, mean_gap, max_gap
        );
        metadata.push(serde_json::json!({
            "class": class,
            "samples": used.len(),
            "baseline": results[0].baseline,
            "completeness_gap_mean": mean_gap,
            "completeness_gap_max": max_gap,
        }));
    }

    let meta = serde_json::json!({
        "command": "attribute",
        "dataset": dataset_dir.display().to_string(),
        "checkpoint": checkpoint.display().to_string(),
        "split": format!("{:?}", split),
        "m_steps": m_steps,
        "classes": metadata,
    });
    std::fs::write(
        out.join("attribution_metadata.json"),
        serde_json::to_string_pretty(&meta).map_err(|e| CliError::Runtime(e.to_string()))?,
    )?;
    write_resolved_config(out, meta)?;
    Ok(())
}

fn cmd_overlap_check(
    checkpoint: &Path,
    out: Option<&Path>,
    common: &CommonArgs,
) -> Result<(), CliError> {
    let mut ov = Overrides::parse(&common.set)?;
    let sim_id: SimId = ov
        .take::<String>("sim")?
        .unwrap_or_else(|| "I".into())
        .parse()
        .map_err(CliError::Validation)?;
    let class: usize = ov.take("class")?.unwrap_or(0);
    let t0: usize = ov.take("t0")?.unwrap_or(0);
    let tau: usize = ov.take("tau")?.unwrap_or(8);
    let m_steps: usize = ov.take("m_steps")?.unwrap_or(25);

    let (model, _, _) = load_checkpoint(checkpoint)?;
    let window: usize = ov.take("window")?.unwrap_or(model.config.t_len);
    let session_len: usize = ov.take("session_len")?.unwrap_or(2 * window);
    ov.finish()?;

    let mut spec = SimulationSpec {
        n_nodes: model.config.n_nodes,
        seed: common.seed,
        ..Default::default()
    };
    spec.class_defs = class_defs_for(sim_id, spec.n_nodes, 5.0);
    let (raw_adj, raw_signals) = generate_session(&spec, class, session_len, common.seed)?;
    let adjacency = crate::graphdata::normalize_adjacency(&raw_adj)?;

    let score =
        overlap_consistency_check(&model, &adjacency, &raw_signals, t0, tau, window, m_steps)?;
    println!(
        "overlap consistency (t0 {}, tau {}, window {}): {:.4}",
        t0, tau, window, score
    );
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let body = serde_json::json!({
            "command": "overlap-check",
            "checkpoint": checkpoint.display().to_string(),
            "sim": format!("{:?}", sim_id),
            "class": class,
            "seed": common.seed,
            "t0": t0,
            "tau": tau,
            "window": window,
            "session_len": session_len,
            "m_steps": m_steps,
            "score": score,
        });
        std::fs::write(
            dir.join("overlap_check.json"),
            serde_json::to_string_pretty(&body).map_err(|e| CliError::Runtime(e.to_string()))?,
        )?;
        write_resolved_config(dir, body)?;
    }
    Ok(())
}

fn cmd_gradcheck(out: Option<&Path>, common: &CommonArgs) -> Result<(), CliError> {
    let mut ov = Overrides::parse(&common.set)?;
    let trials: usize = ov.take("trials")?.unwrap_or(crate::gradcheck::DEFAULT_TRIALS);
    let eps: f64 = ov.take("eps")?.unwrap_or(crate::gradcheck::DEFAULT_EPS);
    let tolerance: f64 = ov.take("tolerance")?.unwrap_or(crate::gradcheck::DEFAULT_TOLERANCE);
    ov.finish()?;

    let mut checks =
        run_op_suite(trials, eps, common.seed).map_err(|e| CliError::Runtime(e.to_string()))?;
    checks.extend(
        run_end_to_end_suite(trials.min(5), eps, common.seed)
            .map_err(|e| CliError::Runtime(e.to_string()))?,
    );
    for c in &checks {
        println!("{:<32} max relative error {:.3e}", c.name, c.max_rel_error);
    }
    let worst = worst_of(&checks);
    println!("worst: {:.3e} (tolerance {:.1e})", worst, tolerance);

    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let mut body = String::from("op,max_rel_error\n");
        for c in &checks {
            body.push_str(&format!("{},{}\n", c.name, c.max_rel_error));
        }
        std::fs::write(dir.join("gradcheck.csv"), body)?;
        write_resolved_config(
            dir,
            serde_json::json!({
                "command": "gradcheck",
                "seed": common.seed,
                "trials": trials,
                "eps": eps,
                "tolerance": tolerance,
                "worst": worst,
            }),
        )?;
    }
    if worst <= tolerance {
        Ok(())
    } else {
        Err(CliError::Runtime(format!(
            "gradient check failed: worst relative error {:.3e} > tolerance {:.1e}",
            worst, tolerance
        )))
    }
}

fn cmd_sweep(dataset_dir: &Path, out: &Path, common: &CommonArgs) -> Result<(), CliError> {
    let mut ov = Overrides::parse(&common.set)?;
    let lrs: Vec<f64> = ov.take_list("lr")?.unwrap_or_else(|| vec![1e-3, 3e-3]);
    let wds: Vec<f64> = ov.take_list("weight_decay")?.unwrap_or_else(|| vec![1e-4]);
    let dropouts: Vec<f64> = ov.take_list("dropout")?.unwrap_or_else(|| vec![0.0, 0.1]);
    let epochs: usize = ov.take("epochs")?.unwrap_or(5);
    let batch_size: usize = ov.take("batch_size")?.unwrap_or(16);
    ov.finish()?;

    let dataset = read_dataset(dataset_dir)?;
    std::fs::create_dir_all(out)?;
    write_resolved_config(
        out,
        serde_json::json!({
            "command": "sweep",
            "dataset": dataset_dir.display().to_string(),
            "seed": common.seed,
            "threads": common.threads,
            "lr": lrs,
            "weight_decay": wds,
            "dropout": dropouts,
            "epochs": epochs,
            "batch_size": batch_size,
        }),
    )?;

    let mut rows = String::from("lr,weight_decay,dropout,best_epoch,val_loss,val_weighted_f1\n");
    let mut best: Option<(f64, f64, f64, f64)> = None; // (val_loss, lr, wd, dropout)
    for &lr in &lrs {
        for &wd in &wds {
            for &dropout in &dropouts {
                let mut mc = ModelConfig::with_defaults(
                    dataset.manifest.n_nodes,
                    dataset.manifest.t_len,
                    dataset.n_classes(),
                );
                mc.dropout = dropout;
                let tc = TrainConfig {
                    epochs,
                    learning_rate: lr,
                    weight_decay: wd,
                    batch_size,
                    seed: common.seed,
                    threads: common.threads,
                };
                let outcome = train_with(&mc, &tc, &dataset, &mut |_| {})?;
                let stats = &outcome.history[outcome.best_epoch];
                println!(
                    "lr {:.1e} wd {:.1e} dropout {:.2}: val_loss {:.4} val_weighted_f1 {:.4} (epoch {})",
                    lr, wd, dropout, stats.val_loss, stats.val_weighted_f1, outcome.best_epoch
                );
                rows.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    lr, wd, dropout, outcome.best_epoch, stats.val_loss, stats.val_weighted_f1
                ));
                let better = best.map_or(true, |(b, _, _, _)| stats.val_loss < b);
                if better {
                    best = Some((stats.val_loss, lr, wd, dropout));
                }
            }
        }
    }
    std::fs::write(out.join("sweep.csv"), rows)?;
    let (loss, lr, wd, dropout) = best.expect("at least one grid point");
    println!(
        "best: lr {:.1e} weight_decay {:.1e} dropout {:.2} (val_loss {:.4})",
        lr, wd, dropout, loss
    );
    Ok(())
}
