//! Full-batch training of all view parameters with Adam.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{gradcheck, DenseMatrix, GradcheckReport};
use crate::error::{NclaError, Result};
use crate::graph::Graph;
use crate::loss::{total_loss_with_grad, LossConfig, LossVariant, PivotPolicy, DEFAULT_CHUNK_SIZE};
use crate::model::{forward, forward_traced, init_params, view_backward, EmbeddingSet, ModelParams};
use crate::seed::rng_for;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn bits(self) -> u32 {
        match self {
            Precision::F32 => 32,
            Precision::F64 => 64,
        }
    }

    /// Rounds through f32 in 32-bit mode; identity otherwise.
    #[inline]
    pub fn round(self, v: f64) -> f64 {
        match self {
            Precision::F32 => v as f32 as f64,
            Precision::F64 => v,
        }
    }
}

impl TryFrom<u32> for Precision {
    type Error = NclaError;
    fn try_from(bits: u32) -> Result<Self> {
        match bits {
            32 => Ok(Precision::F32),
            64 => Ok(Precision::F64),
            other => Err(NclaError::InvalidConfig(format!("precision must be 32 or 64, got {other}"))),
        }
    }
}

impl From<Precision> for u32 {
    fn from(p: Precision) -> u32 {
        p.bits()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub views: usize,
    pub hidden_dim: usize,
    pub tau: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
    pub precision: Precision,
    pub pivot_policy: PivotPolicy,
    pub chunk_size: usize,
    /// Log the loss every this many epochs; 0 disables.
    pub log_every: usize,
    pub variant: LossVariant,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            views: 2,
            hidden_dim: 32,
            tau: 1.0,
            learning_rate: 1e-2,
            weight_decay: 1e-4,
            epochs: 200,
            seed: 0,
            precision: Precision::F64,
            pivot_policy: PivotPolicy::Reseeded,
            chunk_size: DEFAULT_CHUNK_SIZE,
            log_every: 0,
            variant: LossVariant::Ncl,
        }
    }
}

impl TrainConfig {
    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            tau: self.tau,
            variant: self.variant,
            pivot_policy: self.pivot_policy,
            chunk_size: self.chunk_size,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NclaError::InvalidConfig(m));
        if self.views < 2 {
            return bad(format!("views must be >= 2, got {}", self.views));
        }
        if self.hidden_dim == 0 {
            return bad("hidden_dim must be >= 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be >= 0, got {}", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if let PivotPolicy::Fixed(l) = self.pivot_policy {
            if l >= self.views {
                return Err(NclaError::PivotOutOfRange { pivot: l, views: self.views });
            }
        }
        self.loss_config().validate()
    }

    /// Pivot view for global epoch index `epoch` (0-based).
    pub fn pivot_for_epoch(&self, epoch: usize) -> usize {
        match self.pivot_policy {
            PivotPolicy::Fixed(l) => l,
            PivotPolicy::Reseeded => rng_for(self.seed, &format!("pivot:epoch:{epoch}")).random_range(0..self.views),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            weight_decay: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(num_params: usize) -> Self {
        Self {
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }
}

/// One Adam update with bias correction. Weight decay is coupled: `wd · θ`
/// is added to the gradient before the moment updates.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(NclaError::shape(
            "adam_step",
            params.len(),
            format!("grads {}, m {}, v {}", grads.len(), state.m.len(), state.v.len()),
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - cfg.beta1.powi(t);
    let bias2 = 1.0 - cfg.beta2.powi(t);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        let g = g + cfg.weight_decay * *p;
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / bias1;
        let v_hat = *v / bias2;
        *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

/// Loss of the full pipeline (attention views → encoders → multi-view
/// loss) and its gradient w.r.t. the flattened parameters.
pub fn objective(g: &Graph, params: &ModelParams, cfg: &LossConfig, pivot: usize) -> Result<(f64, Vec<f64>)> {
    let (traces, es) = forward_traced(g, params)?;
    let (loss, grad_h) = total_loss_with_grad(g, &es, cfg, pivot)?;
    let mut flat = Vec::with_capacity(params.num_params());
    for ((p, trace), gh) in params.views().iter().zip(&traces).zip(&grad_h) {
        let gp = view_backward(g, p, trace, gh)?;
        flat.extend_from_slice(gp.weight.data());
        flat.extend_from_slice(&gp.attention);
    }
    Ok((loss, flat))
}

/// Central-difference check of [`objective`]'s gradient at `params`, one
/// report group per view weight and attention block.
pub fn check_objective_gradient(
    g: &Graph,
    params: &ModelParams,
    cfg: &LossConfig,
    pivot: usize,
    step: f64,
    tolerance: f64,
) -> Result<GradcheckReport> {
    objective(g, params, cfg, pivot)?;
    let n = params.num_params();
    let f = |flat: &[f64]| {
        ModelParams::from_flat(params, flat)
            .and_then(|p| objective(g, &p, cfg, pivot))
            .unwrap_or_else(|_| (f64::NAN, vec![f64::NAN; n]))
    };
    Ok(gradcheck(f, &params.flatten(), &params.param_groups(), step, tolerance))
}

/// Parameters plus optimizer state; everything needed to continue a run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub params: ModelParams,
    pub optimizer: AdamState,
    pub epochs_done: usize,
}

impl TrainState {
    pub fn fresh(g: &Graph, cfg: &TrainConfig) -> Result<Self> {
        let mut params = init_params(g.num_features(), cfg.hidden_dim, cfg.views, cfg.seed)?;
        if cfg.precision == Precision::F32 {
            let flat: Vec<f64> = params.flatten().into_iter().map(|v| cfg.precision.round(v)).collect();
            params.assign_flat(&flat)?;
        }
        let optimizer = AdamState::new(params.num_params());
        Ok(Self {
            params,
            optimizer,
            epochs_done: 0,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct OptimizerFile {
    format: String,
    version: u32,
    epochs_done: usize,
    adam: AdamState,
}

const OPTIMIZER_FORMAT: &str = "ncla-optimizer-state";

pub fn save_optimizer_state(state: &TrainState, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = OptimizerFile {
        format: OPTIMIZER_FORMAT.into(),
        version: 1,
        epochs_done: state.epochs_done,
        adam: state.optimizer.clone(),
    };
    fs::write(path, serde_json::to_string(&file)? + "\n").map_err(|e| NclaError::io(path, e))
}

/// Reads an optimizer-state file written by [`save_optimizer_state`]:
/// returns `(epochs_done, adam_state)`.
pub fn load_optimizer_state(path: impl AsRef<Path>) -> Result<(usize, AdamState)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| NclaError::io(path, e))?;
    let file: OptimizerFile = serde_json::from_str(&text)?;
    if file.format != OPTIMIZER_FORMAT || file.version != 1 {
        return Err(NclaError::Checkpoint(format!("unsupported optimizer state {:?} v{}", file.format, file.version)));
    }
    Ok((file.epochs_done, file.adam))
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    /// Loss before each update, for global epochs `first_epoch..`.
    pub loss_trace: Vec<f64>,
    pub pivots: Vec<usize>,
    pub first_epoch: usize,
    pub wall_time_secs: f64,
    pub state: TrainState,
    /// Embeddings from the final parameters.
    pub embeddings: EmbeddingSet,
}

pub fn train(g: &Graph, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    train_from(g, cfg, TrainState::fresh(g, cfg)?)
}

/// Continues `state` until `cfg.epochs` total epochs have run.
pub fn train_from(g: &Graph, cfg: &TrainConfig, mut state: TrainState) -> Result<TrainReport> {
    cfg.validate()?;
    if state.params.input_dim() != g.num_features()
        || state.params.num_views() != cfg.views
        || state.params.hidden_dim() != cfg.hidden_dim
    {
        return Err(NclaError::InvalidConfig("resumed parameters do not match graph/config dimensions".into()));
    }
    if state.optimizer.m.len() != state.params.num_params() {
        return Err(NclaError::InvalidConfig("optimizer state does not match parameter count".into()));
    }
    let graph;
    let g = if cfg.precision == Precision::F32 {
        graph = g.with_features(g.features().map(|v| cfg.precision.round(v)))?;
        &graph
    } else {
        g
    };
    let loss_cfg = cfg.loss_config();
    let adam = cfg.adam();
    let start = Instant::now();
    let first_epoch = state.epochs_done;
    let mut loss_trace = Vec::with_capacity(cfg.epochs.saturating_sub(first_epoch));
    let mut pivots = Vec::with_capacity(loss_trace.capacity());
    let mut flat = state.params.flatten();

    for epoch in first_epoch..cfg.epochs {
        let pivot = cfg.pivot_for_epoch(epoch);
        let (loss, grads) = objective(g, &state.params, &loss_cfg, pivot)?;
        if !loss.is_finite() || grads.iter().any(|v| !v.is_finite()) {
            return Err(NclaError::NonFiniteLoss {
                epoch,
                param_norms: state.params.view_norms(),
            });
        }
        adam_step(&mut flat, &grads, &mut state.optimizer, &adam)?;
        if cfg.precision == Precision::F32 {
            flat.iter_mut().for_each(|v| *v = cfg.precision.round(*v));
        }
        state.params.assign_flat(&flat)?;
        state.epochs_done = epoch + 1;
        loss_trace.push(loss);
        pivots.push(pivot);
        if cfg.log_every > 0 && (epoch + 1) % cfg.log_every == 0 {
            log::info!("epoch {:>5}  loss {:.6}  pivot {}", epoch + 1, loss, pivot);
        }
    }

    let (_, mut embeddings) = forward(g, &state.params)?;
    if cfg.precision == Precision::F32 {
        let round = |m: &DenseMatrix| m.map(|v| cfg.precision.round(v));
        embeddings = EmbeddingSet::from_views(embeddings.per_view.iter().map(round).collect())?;
    }
    Ok(TrainReport {
        loss_trace,
        pivots,
        first_epoch,
        wall_time_secs: start.elapsed().as_secs_f64(),
        state,
        embeddings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![0.5, -1.0];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, &AdamConfig::default()).unwrap();
        assert_eq!(p, vec![0.5, -1.0]);
    }

    #[test]
    fn first_step_is_learning_rate_sized() {
        // m_hat = v_hat = 1 after bias correction, so the step is lr / (1 + eps)
        let mut p = vec![0.0];
        let mut s = AdamState::new(1);
        let cfg = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        adam_step(&mut p, &[1.0], &mut s, &cfg).unwrap();
        assert!((p[0] - (-0.1 / (1.0 + 1e-8))).abs() < 1e-15);
        assert!((p[0] + 0.1).abs() < 1e-8);
    }

    #[test]
    fn coupled_weight_decay_acts_like_gradient() {
        let cfg = AdamConfig {
            learning_rate: 0.1,
            weight_decay: 0.5,
            ..AdamConfig::default()
        };
        let mut a = vec![2.0];
        adam_step(&mut a, &[0.0], &mut AdamState::new(1), &cfg).unwrap();
        let mut b = vec![2.0];
        let plain = AdamConfig { weight_decay: 0.0, ..cfg.clone() };
        adam_step(&mut b, &[1.0], &mut AdamState::new(1), &plain).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shape_mismatch() {
        let mut p = vec![0.0; 2];
        assert!(adam_step(&mut p, &[1.0], &mut AdamState::new(2), &AdamConfig::default()).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = [
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { views: 1, ..Default::default() },
            TrainConfig { learning_rate: -1.0, ..Default::default() },
            TrainConfig { weight_decay: -1e-3, ..Default::default() },
            TrainConfig { tau: 0.0, ..Default::default() },
            TrainConfig { pivot_policy: PivotPolicy::Fixed(2), ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn reseeded_pivots_cover_views() {
        let cfg = TrainConfig { views: 4, ..Default::default() };
        let mut seen = [false; 4];
        for e in 0..100 {
            seen[cfg.pivot_for_epoch(e)] = true;
        }
        assert!(seen.iter().all(|&s| s));
        assert_eq!(cfg.pivot_for_epoch(7), cfg.pivot_for_epoch(7));
    }
}
