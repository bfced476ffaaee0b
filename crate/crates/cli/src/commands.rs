//! Command implementations. Each writes its artifacts plus the resolved
//! configuration into an output directory and returns what it wrote.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, ensure, Context, Result};
use ncla_core::diff::{gradcheck, DenseMatrix, GradcheckReport};
use ncla_core::embeddings::{read_embeddings, sha256_hex, write_embeddings};
use ncla_core::eval::{evaluate, EvalResult};
use ncla_core::graph::Graph;
use ncla_core::loss::{LossConfig, LossVariant};
use ncla_core::model::{checkpoint_to_string, init_params, load_checkpoint, ModelParams};
use ncla_core::pack::{load_graph_with_stats, write_graph};
use ncla_core::sbm::{generate_sbm, SbmSpec};
use ncla_core::seed::rng_for;
use ncla_core::train::{load_optimizer_state, objective, save_optimizer_state, train_from, TrainReport, TrainState};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{write_text, Dataset, EvalSettings, ExperimentConfig, SplitSetting, RESOLVED_CONFIG_FILE};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const OPTIMIZER_FILE: &str = "optimizer_state.json";
pub const EMBEDDINGS_FILE: &str = "embeddings.bin";
pub const TRAIN_REPORT_FILE: &str = "train_report.json";
pub const EVAL_SPLITS_FILE: &str = "eval_splits.csv";
pub const EVAL_SUMMARY_FILE: &str = "eval_summary.json";
pub const ABLATION_FILE: &str = "ablation.csv";
pub const ABLATION_SUMMARY_FILE: &str = "ablation_summary.json";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const GRADCHECK_FILE: &str = "gradcheck.json";
pub const PACK_INFO_FILE: &str = "pack_info.json";

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        ensure!(j >= 1, "--jobs must be >= 1");
        builder = builder.num_threads(j);
    }
    Ok(builder.build()?)
}

/// Checkpoint and optimizer-state files to continue from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resume {
    pub checkpoint: PathBuf,
    pub optimizer_state: PathBuf,
}

#[derive(Serialize)]
struct TrainReportFile<'a> {
    first_epoch: usize,
    epochs_done: usize,
    loss_trace: &'a [f64],
    pivots: &'a [usize],
    final_loss: Option<f64>,
    view_norms: Vec<f64>,
    wall_time_secs: f64,
    checkpoint_sha256: &'a str,
}

#[derive(Serialize)]
struct TrainEcho<'a> {
    #[serde(flatten)]
    experiment: &'a ExperimentConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    resume: Option<&'a Resume>,
}

/// Trains on `g` and writes checkpoint, optimizer state, embeddings and report into `cfg.output`.
pub fn cmd_train(cfg: &ExperimentConfig, g: &Graph, resume: Option<&Resume>) -> Result<TrainReport> {
    cfg.validate()?;
    let out = &cfg.output;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_text(&out.join(RESOLVED_CONFIG_FILE), &toml::to_string_pretty(&TrainEcho { experiment: cfg, resume })?)?;
    let state = match resume {
        Some(r) => {
            let (epochs_done, optimizer) = load_optimizer_state(&r.optimizer_state)?;
            TrainState {
                params: load_checkpoint(&r.checkpoint)?,
                optimizer,
                epochs_done,
            }
        }
        None => TrainState::fresh(g, &cfg.train)?,
    };
    let report = train_from(g, &cfg.train, state)?;
    let checkpoint = checkpoint_to_string(&report.state.params)?;
    let digest = sha256_hex(checkpoint.as_bytes());
    write_text(&out.join(CHECKPOINT_FILE), &checkpoint)?;
    save_optimizer_state(&report.state, out.join(OPTIMIZER_FILE))?;
    write_embeddings(out.join(EMBEDDINGS_FILE), &report.embeddings.concatenated, cfg.train.precision, Some(digest.clone()))?;
    write_json(
        &out.join(TRAIN_REPORT_FILE),
        &TrainReportFile {
            first_epoch: report.first_epoch,
            epochs_done: report.state.epochs_done,
            loss_trace: &report.loss_trace,
            pivots: &report.pivots,
            final_loss: report.loss_trace.last().copied(),
            view_norms: report.state.params.view_norms(),
            wall_time_secs: report.wall_time_secs,
            checkpoint_sha256: &digest,
        },
    )?;
    log::info!("trained {} epochs in {:.2}s -> {}", report.loss_trace.len(), report.wall_time_secs, out.display());
    Ok(report)
}

/// One labels-per-class setting evaluated over all splits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingResult {
    pub setting: SplitSetting,
    pub result: EvalResult,
}

#[derive(Serialize)]
struct SplitRow {
    labels_per_class: usize,
    validation: String,
    split_seed: u64,
    accuracy: f64,
    lambda: f64,
    train_size: usize,
    validation_size: usize,
    test_size: usize,
    converged: bool,
    grad_norm: f64,
}

#[derive(Serialize)]
struct SettingSummary {
    labels_per_class: usize,
    validation: String,
    n_splits: usize,
    mean: f64,
    std: f64,
    lambdas: Vec<f64>,
    all_converged: bool,
    max_grad_norm: f64,
    accuracies: Vec<f64>,
}

#[derive(Serialize)]
struct SolverInfo<'a> {
    method: &'static str,
    objective: &'static str,
    standardization: &'static str,
    reg_grid: &'a [f64],
    default_lambda: f64,
    tolerance: f64,
    max_iter: usize,
}

#[derive(Serialize)]
struct EvalSummaryFile<'a> {
    embeddings_rows: usize,
    embeddings_cols: usize,
    settings: Vec<SettingSummary>,
    solver: SolverInfo<'a>,
    config: &'a EvalSettings,
}

/// Runs every split setting without touching the filesystem.
pub fn evaluate_settings(h: &DenseMatrix, g: &Graph, eval: &EvalSettings) -> Result<Vec<SettingResult>> {
    eval.validate()?;
    ensure!(
        h.rows() == g.num_nodes(),
        "embeddings have {} rows but the graph has {} nodes",
        h.rows(),
        g.num_nodes()
    );
    let logreg = eval.logreg();
    eval.splits
        .iter()
        .map(|s| {
            let result = evaluate(h, g, &s.spec(eval.seed), eval.n_splits, &logreg)
                .with_context(|| format!("evaluating c={} validation={}", s.labels_per_class, s.validation))?;
            Ok(SettingResult { setting: s.clone(), result })
        })
        .collect()
}

/// Evaluates `h` and writes the per-split CSV and the JSON summary into `out`.
pub fn write_eval_outputs(h: &DenseMatrix, eval: &EvalSettings, results: &[SettingResult], out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let rows: Vec<SplitRow> = results
        .iter()
        .flat_map(|r| {
            r.result.splits.iter().map(move |s| SplitRow {
                labels_per_class: r.setting.labels_per_class,
                validation: r.setting.validation.to_string(),
                split_seed: s.seed,
                accuracy: s.accuracy,
                lambda: s.lambda,
                train_size: s.train_size,
                validation_size: s.validation_size,
                test_size: s.test_size,
                converged: s.converged,
                grad_norm: s.grad_norm,
            })
        })
        .collect();
    write_csv(&out.join(EVAL_SPLITS_FILE), &rows)?;
    let settings = results
        .iter()
        .map(|r| SettingSummary {
            labels_per_class: r.setting.labels_per_class,
            validation: r.setting.validation.to_string(),
            n_splits: r.result.splits.len(),
            mean: r.result.mean,
            std: r.result.std,
            lambdas: r.result.splits.iter().map(|s| s.lambda).collect(),
            all_converged: r.result.splits.iter().all(|s| s.converged),
            max_grad_norm: r.result.splits.iter().map(|s| s.grad_norm).fold(0.0, f64::max),
            accuracies: r.result.accuracies(),
        })
        .collect();
    write_json(
        &out.join(EVAL_SUMMARY_FILE),
        &EvalSummaryFile {
            embeddings_rows: h.rows(),
            embeddings_cols: h.cols(),
            settings,
            solver: SolverInfo {
                method: "L-BFGS (memory 10) with Armijo backtracking",
                objective: "mean cross-entropy + lambda/2 * ||weights and bias||^2",
                standardization: "columns scaled by training-split mean and population std (std 0 -> 1)",
                reg_grid: &eval.reg_grid,
                default_lambda: eval.default_lambda,
                tolerance: eval.tolerance,
                max_iter: eval.max_iter,
            },
            config: eval,
        },
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluateConfig {
    pub output: PathBuf,
    pub embeddings: PathBuf,
    pub dataset: Dataset,
    pub eval: EvalSettings,
}

pub fn cmd_evaluate(cfg: &EvaluateConfig, g: &Graph) -> Result<Vec<SettingResult>> {
    cfg.eval.validate()?;
    write_text(&cfg.output.join(RESOLVED_CONFIG_FILE), &toml::to_string_pretty(cfg)?)?;
    let (h, _) = read_embeddings(&cfg.embeddings).with_context(|| format!("reading embeddings {}", cfg.embeddings.display()))?;
    let results = evaluate_settings(&h, g, &cfg.eval)?;
    write_eval_outputs(&h, &cfg.eval, &results, &cfg.output)?;
    for r in &results {
        log::info!(
            "c={} validation={}: {:.2} ± {:.2}",
            r.setting.labels_per_class,
            r.setting.validation,
            100.0 * r.result.mean,
            100.0 * r.result.std
        );
    }
    Ok(results)
}

/// One (seed, run) outcome shared by ablation and sweep tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub label: String,
    pub seed: u64,
    pub labels_per_class: usize,
    pub validation: String,
    pub mean: f64,
    pub std: f64,
    pub final_loss: f64,
}

/// Trains with `cfg.train` (no files) and evaluates the final concatenated embeddings.
pub fn train_and_evaluate(cfg: &ExperimentConfig, g: &Graph, label: &str) -> Result<Vec<RunRow>> {
    let report = ncla_core::train::train(g, &cfg.train)?;
    let results = evaluate_settings(&report.embeddings.concatenated, g, &cfg.eval)?;
    let final_loss = report.loss_trace.last().copied().unwrap_or(f64::NAN);
    Ok(results
        .into_iter()
        .map(|r| RunRow {
            label: label.to_string(),
            seed: cfg.train.seed,
            labels_per_class: r.setting.labels_per_class,
            validation: r.setting.validation.to_string(),
            mean: r.result.mean,
            std: r.result.std,
            final_loss,
        })
        .collect())
}

#[derive(Serialize)]
struct AblationRow<'a> {
    seed: u64,
    variant: &'a str,
    labels_per_class: usize,
    validation: &'a str,
    mean: f64,
    std: f64,
    final_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NclComparison {
    pub seed: u64,
    pub labels_per_class: usize,
    /// Variants whose mean accuracy NCL matched or exceeded.
    pub ncl_at_least: Vec<String>,
    /// Variants that beat NCL.
    pub ncl_below: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    #[serde(flatten)]
    pub experiment: ExperimentConfig,
    pub variants: Vec<LossVariant>,
    pub seeds: Vec<u64>,
}

/// Trains once per (seed, variant) and evaluates each run on the configured splits.
pub fn cmd_ablate(cfg: &AblationConfig, g: &Graph, jobs: Option<usize>) -> Result<(Vec<RunRow>, Vec<NclComparison>)> {
    cfg.experiment.validate()?;
    ensure!(!cfg.variants.is_empty(), "no loss variants requested");
    ensure!(!cfg.seeds.is_empty(), "no seeds requested");
    let out = &cfg.experiment.output;
    write_text(&out.join(RESOLVED_CONFIG_FILE), &toml::to_string_pretty(cfg)?)?;
    let runs: Vec<(u64, LossVariant)> = cfg
        .seeds
        .iter()
        .flat_map(|&s| cfg.variants.iter().map(move |&v| (s, v)))
        .collect();
    let pool = thread_pool(jobs)?;
    let rows: Vec<Vec<RunRow>> = pool.install(|| {
        runs.par_iter()
            .map(|&(seed, variant)| {
                let mut run = cfg.experiment.clone();
                run.train.seed = seed;
                run.train.variant = variant;
                train_and_evaluate(&run, g, variant.as_str())
            })
            .collect::<Result<_>>()
    })?;
    let rows: Vec<RunRow> = rows.into_iter().flatten().collect();
    let table: Vec<AblationRow> = rows
        .iter()
        .map(|r| AblationRow {
            seed: r.seed,
            variant: &r.label,
            labels_per_class: r.labels_per_class,
            validation: &r.validation,
            mean: r.mean,
            std: r.std,
            final_loss: r.final_loss,
        })
        .collect();
    write_csv(&out.join(ABLATION_FILE), &table)?;
    let comparisons = compare_with_ncl(&rows);
    for c in &comparisons {
        log::info!("seed {} c={}: NCL >= {:?}, NCL < {:?}", c.seed, c.labels_per_class, c.ncl_at_least, c.ncl_below);
    }
    write_json(&out.join(ABLATION_SUMMARY_FILE), &comparisons)?;
    Ok((rows, comparisons))
}

fn compare_with_ncl(rows: &[RunRow]) -> Vec<NclComparison> {
    let ncl = LossVariant::Ncl.as_str();
    rows.iter()
        .filter(|r| r.label == ncl)
        .map(|base| {
            let peers = rows
                .iter()
                .filter(|r| r.label != ncl && r.seed == base.seed && r.labels_per_class == base.labels_per_class && r.validation == base.validation);
            let (at_least, below): (Vec<&RunRow>, Vec<&RunRow>) = peers.partition(|r| base.mean >= r.mean);
            NclComparison {
                seed: base.seed,
                labels_per_class: base.labels_per_class,
                ncl_at_least: at_least.into_iter().map(|r| r.label.clone()).collect(),
                ncl_below: below.into_iter().map(|r| r.label.clone()).collect(),
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Views,
    HiddenDim,
    Tau,
}

impl FromStr for SweepAxis {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "K" | "k" | "views" => Ok(SweepAxis::Views),
            "F'" | "hidden" | "hidden_dim" | "hidden-dim" => Ok(SweepAxis::HiddenDim),
            "tau" => Ok(SweepAxis::Tau),
            _ => bail!("unknown sweep axis {s:?} (want views | hidden_dim | tau)"),
        }
    }
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::Views => "views",
            SweepAxis::HiddenDim => "hidden_dim",
            SweepAxis::Tau => "tau",
        }
    }

    /// Returns `base` with the axis set to `value`.
    pub fn apply(self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut cfg = base.clone();
        let as_count = |v: f64| -> Result<usize> {
            ensure!(v >= 1.0 && v.fract() == 0.0, "{} values must be positive integers, got {v}", self.as_str());
            Ok(v as usize)
        };
        match self {
            SweepAxis::Views => cfg.train.views = as_count(value)?,
            SweepAxis::HiddenDim => cfg.train.hidden_dim = as_count(value)?,
            SweepAxis::Tau => cfg.train.tau = value,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(flatten)]
    pub experiment: ExperimentConfig,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
}

#[derive(Serialize)]
struct SweepRow<'a> {
    axis: &'a str,
    value: f64,
    seed: u64,
    labels_per_class: usize,
    validation: &'a str,
    mean: f64,
    std: f64,
    final_loss: f64,
}

/// Grid over one hyperparameter; every run uses the same split seeds.
pub fn cmd_sweep(cfg: &SweepConfig, g: &Graph, jobs: Option<usize>) -> Result<Vec<RunRow>> {
    ensure!(!cfg.values.is_empty(), "sweep needs at least one value");
    ensure!(!cfg.seeds.is_empty(), "no seeds requested");
    let configs: Vec<(f64, u64, ExperimentConfig)> = cfg
        .seeds
        .iter()
        .flat_map(|&seed| cfg.values.iter().map(move |&v| (v, seed)))
        .map(|(v, seed)| {
            let mut c = cfg.axis.apply(&cfg.experiment, v)?;
            c.train.seed = seed;
            Ok((v, seed, c))
        })
        .collect::<Result<_>>()?;
    let out = &cfg.experiment.output;
    write_text(&out.join(RESOLVED_CONFIG_FILE), &toml::to_string_pretty(cfg)?)?;
    let pool = thread_pool(jobs)?;
    let rows: Vec<Vec<RunRow>> = pool.install(|| {
        configs
            .par_iter()
            .map(|(v, _, c)| train_and_evaluate(c, g, &v.to_string()))
            .collect::<Result<_>>()
    })?;
    let rows: Vec<RunRow> = rows.into_iter().flatten().collect();
    let table: Vec<SweepRow> = rows
        .iter()
        .map(|r| SweepRow {
            axis: cfg.axis.as_str(),
            value: r.label.parse().unwrap_or(f64::NAN),
            seed: r.seed,
            labels_per_class: r.labels_per_class,
            validation: &r.validation,
            mean: r.mean,
            std: r.std,
            final_loss: r.final_loss,
        })
        .collect();
    write_csv(&out.join(SWEEP_FILE), &table)?;
    Ok(rows)
}

/// Synthetic topologies for quick gradient checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum GraphShape {
    Path(usize),
    Isolated(usize),
    Complete(usize),
    Random { nodes: usize, p: f64 },
}

impl FromStr for GraphShape {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let count = |t: &str| -> Result<usize> {
            let n: usize = t.parse().with_context(|| format!("bad node count in {s:?}"))?;
            ensure!(n >= 1, "graph needs at least one node");
            Ok(n)
        };
        match parts.as_slice() {
            ["path", n] => Ok(GraphShape::Path(count(n)?)),
            ["isolated", n] => Ok(GraphShape::Isolated(count(n)?)),
            ["complete", n] => Ok(GraphShape::Complete(count(n)?)),
            ["random", n, p] => Ok(GraphShape::Random {
                nodes: count(n)?,
                p: p.parse().with_context(|| format!("bad probability in {s:?}"))?,
            }),
            _ => bail!("unknown graph {s:?} (want path:N | isolated:N | complete:N | random:N:P)"),
        }
    }
}

impl GraphShape {
    pub fn build(&self, features: usize, seed: u64) -> Result<Graph> {
        let n = match *self {
            GraphShape::Path(n) | GraphShape::Isolated(n) | GraphShape::Complete(n) | GraphShape::Random { nodes: n, .. } => n,
        };
        let mut rng = rng_for(seed, "gradcheck:features");
        let x = DenseMatrix::from_fn(n, features, |_, _| rng.sample(StandardNormal));
        let mut edge_rng = rng_for(seed, "gradcheck:edges");
        let edges: Vec<(usize, usize)> = match *self {
            GraphShape::Path(n) => (1..n).map(|i| (i - 1, i)).collect(),
            GraphShape::Isolated(_) => Vec::new(),
            GraphShape::Complete(n) => (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect(),
            GraphShape::Random { nodes, p } => {
                ensure!((0.0..=1.0).contains(&p), "edge probability must be in [0, 1]");
                (0..nodes)
                    .flat_map(|i| (i + 1..nodes).map(move |j| (i, j)))
                    .filter(|_| edge_rng.random::<f64>() < p)
                    .collect()
            }
        };
        Ok(Graph::from_edges(format!("{self:?}"), x, edges, None)?.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckConfig {
    pub graph: GraphSource,
    pub views: usize,
    pub hidden_dim: usize,
    pub tau: f64,
    pub variant: LossVariant,
    pub pivot: usize,
    pub seed: u64,
    pub step: f64,
    pub tolerance: f64,
    /// Added to the first analytic gradient entry; a negative control.
    pub perturb: f64,
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphSource {
    Pack(PathBuf),
    Synthetic { shape: GraphShape, features: usize },
}

/// Finite-difference check of the full pipeline gradient at freshly initialized parameters.
pub fn cmd_gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let g = match &cfg.graph {
        GraphSource::Pack(dir) => load_graph_with_stats(dir)?.0,
        GraphSource::Synthetic { shape, features } => shape.build(*features, cfg.seed)?,
    };
    let params = init_params(g.num_features(), cfg.hidden_dim, cfg.views, cfg.seed)?;
    let loss = LossConfig {
        tau: cfg.tau,
        variant: cfg.variant,
        ..LossConfig::default()
    };
    loss.validate()?;
    objective(&g, &params, &loss, cfg.pivot)?;
    let n = params.num_params();
    let f = |flat: &[f64]| {
        let (value, mut grad) = ModelParams::from_flat(&params, flat)
            .and_then(|p| objective(&g, &p, &loss, cfg.pivot))
            .unwrap_or_else(|_| (f64::NAN, vec![f64::NAN; n]));
        grad[0] += cfg.perturb;
        (value, grad)
    };
    let report = gradcheck(f, &params.flatten(), &params.param_groups(), cfg.step, cfg.tolerance);
    if let Some(out) = &cfg.output {
        write_text(&out.join(RESOLVED_CONFIG_FILE), &toml::to_string_pretty(cfg)?)?;
        write_json(&out.join(GRADCHECK_FILE), &report)?;
    }
    Ok(report)
}

/// Generates an SBM and writes it as a graph pack.
pub fn cmd_gen_sbm(spec: &SbmSpec, out: &Path) -> Result<Graph> {
    let g = generate_sbm(spec)?;
    write_graph(&g, out)?;
    write_text(&out.join(RESOLVED_CONFIG_FILE), &toml::to_string_pretty(spec)?)?;
    Ok(g)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PackInfo {
    pub name: String,
    pub num_nodes: usize,
    pub num_undirected_edges: usize,
    pub num_features: usize,
    pub num_classes: Option<usize>,
    pub class_counts: Option<Vec<usize>>,
    pub isolated_nodes: usize,
    pub max_degree: usize,
    pub self_loops_dropped: usize,
    pub duplicates_dropped: usize,
    pub features_sha256: String,
}

pub fn cmd_pack_info(dir: &Path, out: Option<&Path>) -> Result<PackInfo> {
    let (g, stats) = load_graph_with_stats(dir)?;
    let n = g.num_nodes();
    let class_counts = g.labels().zip(g.num_classes()).map(|(labels, c)| {
        let mut counts = vec![0; c];
        labels.iter().for_each(|&l| counts[l] += 1);
        counts
    });
    let features: Vec<u8> = g.features().data().iter().flat_map(|v| v.to_le_bytes()).collect();
    let info = PackInfo {
        name: g.name().to_string(),
        num_nodes: n,
        num_undirected_edges: g.num_undirected_edges(),
        num_features: g.num_features(),
        num_classes: g.num_classes(),
        class_counts,
        isolated_nodes: (0..n).filter(|&i| g.degree(i) == 0).count(),
        max_degree: (0..n).map(|i| g.degree(i)).max().unwrap_or(0),
        self_loops_dropped: stats.self_loops_dropped,
        duplicates_dropped: stats.duplicates_dropped,
        features_sha256: sha256_hex(&features),
    };
    if let Some(out) = out {
        #[derive(Serialize)]
        struct Echo<'a> {
            pack: &'a Path,
        }
        write_text(&out.join(RESOLVED_CONFIG_FILE), &toml::to_string_pretty(&Echo { pack: dir })?)?;
        write_json(&out.join(PACK_INFO_FILE), &info)?;
    }
    Ok(info)
}
