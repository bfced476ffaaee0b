//! Argument parsing and dispatch.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ncla_core::eval::ValidationRule;
use ncla_core::loss::{LossVariant, PivotPolicy};
use ncla_core::pack::load_graph;
use ncla_core::sbm::SbmSpec;
use ncla_core::train::Precision;

use crate::commands::*;
use crate::config::{Dataset, ExperimentConfig, SplitSetting};

#[derive(Debug, Parser)]
#[command(name = "ncla", version, about = "Learnable graph augmentation with neighbor contrastive training")]
pub struct Cli {
    /// Log level (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "info")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an encoder and write checkpoint, optimizer state, embeddings and loss trace.
    Train(TrainArgs),
    /// Evaluate an embeddings file with logistic regression over repeated splits.
    Evaluate(EvaluateArgs),
    /// Train and evaluate every loss variant with shared seeds.
    Ablate(AblateArgs),
    /// Train and evaluate over a grid of one hyperparameter.
    Sweep(SweepArgs),
    /// Compare analytic gradients with central finite differences.
    Gradcheck(GradcheckArgs),
    /// Generate a stochastic block model graph pack.
    GenSbm(GenSbmArgs),
    /// Print statistics of a graph pack.
    PackInfo(PackInfoArgs),
}

/// Where the base configuration comes from, plus overrides (flags win).
#[derive(Debug, Clone, Default, Args)]
pub struct ExperimentArgs {
    /// TOML experiment file.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Shipped preset: cora, citeseer, pubmed, coauthor-cs, amazon-photo, sbm.
    #[arg(long)]
    pub preset: Option<String>,
    /// Graph pack directory (replaces the configured dataset).
    #[arg(long)]
    pub pack: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub views: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// 32 or 64.
    #[arg(long)]
    pub precision: Option<u32>,
    /// `reseeded` or `fixed:<view>`.
    #[arg(long)]
    pub pivot: Option<PivotPolicy>,
    #[arg(long)]
    pub chunk_size: Option<usize>,
    /// NCL, INFONCE, NT_XENT, NCL_NO_POS2 or NCL_NO_POS3.
    #[arg(long)]
    pub variant: Option<LossVariant>,
    #[arg(long)]
    pub log_every: Option<usize>,
    #[command(flatten)]
    pub eval: EvalOverrides,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvalOverrides {
    /// Training labels per class; comma-separated list replaces the configured settings.
    #[arg(long = "c", value_delimiter = ',')]
    pub labels_per_class: Vec<usize>,
    /// Validation rule for the `--c` settings: none, total:<n> or per-class:<m>.
    #[arg(long, default_value = "none")]
    pub validation: ValidationRule,
    #[arg(long)]
    pub n_splits: Option<usize>,
    /// Seed of the first split.
    #[arg(long)]
    pub split_seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub reg_grid: Vec<f64>,
    #[arg(long)]
    pub default_lambda: Option<f64>,
}

impl EvalOverrides {
    pub fn apply(&self, eval: &mut crate::config::EvalSettings) {
        if !self.labels_per_class.is_empty() {
            eval.splits = self
                .labels_per_class
                .iter()
                .map(|&c| SplitSetting {
                    labels_per_class: c,
                    validation: self.validation,
                })
                .collect();
        }
        if let Some(n) = self.n_splits {
            eval.n_splits = n;
        }
        if let Some(s) = self.split_seed {
            eval.seed = s;
        }
        if !self.reg_grid.is_empty() {
            eval.reg_grid = self.reg_grid.clone();
        }
        if let Some(l) = self.default_lambda {
            eval.default_lambda = l;
        }
    }
}

impl ExperimentArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.preset, &self.pack) {
            (Some(path), _, _) => ExperimentConfig::from_file(path)?,
            (None, Some(name), _) => ExperimentConfig::preset(name)?,
            (None, None, Some(pack)) => ExperimentConfig {
                output: PathBuf::from("runs/default"),
                dataset: Dataset::Pack(pack.clone()),
                train: Default::default(),
                eval: Default::default(),
            },
            (None, None, None) => bail!("need one of --config, --preset or --pack"),
        };
        if let Some(p) = &self.pack {
            cfg.dataset = Dataset::Pack(p.clone());
        }
        if let Some(o) = &self.out {
            cfg.output = o.clone();
        }
        let t = &mut cfg.train;
        macro_rules! set {
            ($field:ident, $value:expr) => {
                if let Some(v) = $value {
                    t.$field = v;
                }
            };
        }
        set!(views, self.views);
        set!(hidden_dim, self.hidden_dim);
        set!(tau, self.tau);
        set!(learning_rate, self.lr);
        set!(weight_decay, self.weight_decay);
        set!(epochs, self.epochs);
        set!(seed, self.seed);
        set!(pivot_policy, self.pivot);
        set!(chunk_size, self.chunk_size);
        set!(variant, self.variant);
        set!(log_every, self.log_every);
        if let Some(bits) = self.precision {
            t.precision = Precision::try_from(bits)?;
        }
        self.eval.apply(&mut cfg.eval);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Checkpoint to resume from (requires --optimizer-state).
    #[arg(long, requires = "optimizer_state")]
    pub resume: Option<PathBuf>,
    #[arg(long, requires = "resume")]
    pub optimizer_state: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Embeddings `.bin` file (its `.json` sidecar must sit next to it).
    #[arg(long)]
    pub embeddings: PathBuf,
    #[command(flatten)]
    pub experiment: ExperimentArgs,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Variants to run (default: all five).
    #[arg(long, value_delimiter = ',')]
    pub variants: Vec<LossVariant>,
    /// Training seeds (default: the configured seed).
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// Parallel runs (default: one per CPU).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// views, hidden_dim or tau.
    #[arg(long)]
    pub axis: SweepAxis,
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// path:N, isolated:N, complete:N or random:N:P.
    #[arg(long, default_value = "path:6", conflicts_with = "pack")]
    pub graph: GraphShape,
    #[arg(long)]
    pub pack: Option<PathBuf>,
    /// Feature width of synthetic graphs.
    #[arg(long, default_value_t = 3)]
    pub features: usize,
    #[arg(long, default_value_t = 2)]
    pub views: usize,
    #[arg(long, default_value_t = 4)]
    pub hidden_dim: usize,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long, default_value = "NCL")]
    pub variant: LossVariant,
    #[arg(long, default_value_t = 0)]
    pub pivot: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    pub step: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub tolerance: f64,
    /// Offset added to one analytic gradient entry (negative control).
    #[arg(long, default_value_t = 0.0)]
    pub perturb: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenSbmArgs {
    #[arg(long, default_value_t = 2)]
    pub blocks: usize,
    #[arg(long, default_value_t = 100)]
    pub nodes_per_block: usize,
    #[arg(long, default_value_t = 0.1)]
    pub p_in: f64,
    #[arg(long, default_value_t = 0.01)]
    pub p_out: f64,
    #[arg(long, default_value_t = 32)]
    pub feature_dim: usize,
    #[arg(long, default_value_t = 0.5)]
    pub feature_signal: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PackInfoArgs {
    #[arg(long)]
    pub pack: PathBuf,
    /// Also write the statistics into this directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            let cfg = args.experiment.resolve()?;
            let g = cfg.dataset.load()?;
            let resume = args.resume.map(|checkpoint| Resume {
                checkpoint,
                optimizer_state: args.optimizer_state.expect("clap enforces --optimizer-state"),
            });
            let report = cmd_train(&cfg, &g, resume.as_ref())?;
            println!(
                "trained {} epochs, final loss {:.6}, output {}",
                report.loss_trace.len(),
                report.loss_trace.last().copied().unwrap_or(f64::NAN),
                cfg.output.display()
            );
        }
        Command::Evaluate(args) => {
            let exp = args.experiment.resolve()?;
            let g = exp.dataset.load()?;
            let cfg = EvaluateConfig {
                output: exp.output,
                embeddings: args.embeddings,
                dataset: exp.dataset,
                eval: exp.eval,
            };
            for r in cmd_evaluate(&cfg, &g)? {
                println!(
                    "c={:<3} validation={:<14} accuracy {:.2} ± {:.2}",
                    r.setting.labels_per_class,
                    r.setting.validation.to_string(),
                    100.0 * r.result.mean,
                    100.0 * r.result.std
                );
            }
        }
        Command::Ablate(args) => {
            let mut experiment = args.experiment.resolve()?;
            if args.experiment.eval.labels_per_class.is_empty() {
                experiment.eval.splits = vec![SplitSetting {
                    labels_per_class: 1,
                    validation: ValidationRule::None,
                }];
            }
            let g = experiment.dataset.load()?;
            let seeds = if args.seeds.is_empty() { vec![experiment.train.seed] } else { args.seeds };
            let variants = if args.variants.is_empty() { LossVariant::ALL.to_vec() } else { args.variants };
            let cfg = AblationConfig { experiment, variants, seeds };
            let (rows, _) = cmd_ablate(&cfg, &g, args.jobs)?;
            for r in rows {
                println!("seed {:<4} {:<12} c={:<3} {:.2} ± {:.2}", r.seed, r.label, r.labels_per_class, 100.0 * r.mean, 100.0 * r.std);
            }
        }
        Command::Sweep(args) => {
            let experiment = args.experiment.resolve()?;
            let g = experiment.dataset.load()?;
            let seeds = if args.seeds.is_empty() { vec![experiment.train.seed] } else { args.seeds };
            let cfg = SweepConfig {
                experiment,
                axis: args.axis,
                values: args.values,
                seeds,
            };
            for r in cmd_sweep(&cfg, &g, args.jobs)? {
                println!("{}={:<6} seed {:<4} c={:<3} {:.2} ± {:.2}", cfg.axis.as_str(), r.label, r.seed, r.labels_per_class, 100.0 * r.mean, 100.0 * r.std);
            }
        }
        Command::Gradcheck(args) => {
            let graph = match args.pack {
                Some(p) => GraphSource::Pack(p),
                None => GraphSource::Synthetic {
                    shape: args.graph,
                    features: args.features,
                },
            };
            let cfg = GradcheckConfig {
                graph,
                views: args.views,
                hidden_dim: args.hidden_dim,
                tau: args.tau,
                variant: args.variant,
                pivot: args.pivot,
                seed: args.seed,
                step: args.step,
                tolerance: args.tolerance,
                perturb: args.perturb,
                output: args.out,
            };
            let report = cmd_gradcheck(&cfg)?;
            print_json(&report)?;
            if !report.passed {
                bail!(
                    "gradient check failed: max relative error {:.3e} >= tolerance {:.1e}",
                    report.max_relative_error,
                    report.tolerance
                );
            }
        }
        Command::GenSbm(args) => {
            let spec = SbmSpec {
                num_blocks: args.blocks,
                nodes_per_block: args.nodes_per_block,
                p_in: args.p_in,
                p_out: args.p_out,
                feature_dim: args.feature_dim,
                feature_signal: args.feature_signal,
                seed: args.seed,
            };
            let g = cmd_gen_sbm(&spec, &args.out)?;
            println!("wrote {} nodes, {} edges to {}", g.num_nodes(), g.num_undirected_edges(), args.out.display());
        }
        Command::PackInfo(args) => {
            load_graph(&args.pack).with_context(|| format!("loading graph pack {}", args.pack.display()))?;
            print_json(&cmd_pack_info(&args.pack, args.out.as_deref())?)?;
        }
    }
    Ok(())
}
