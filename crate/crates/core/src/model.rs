//! Attention-learned graph views and per-view encoders.
//!
//! View k owns a projection `W_k` (F'×F) and an attention vector `phi_k`
//! (2F'). The adaptive adjacency of view k is the softmax, over each
//! closed neighborhood `N_i ∪ {i}`, of `LeakyReLU(phi_k · [W_k x_i ∥ W_k x_j])`;
//! the view embedding is `ELU(Σ_j Ã_ij W_k x_j)`. Views never share
//! parameters. The concatenation of all views is the model output, kept
//! un-normalized.

use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diff::{
    self, elu, elu_grad, leaky_relu, leaky_relu_grad, DenseMatrix, EdgeValues, ParamGroup,
    LEAKY_RELU_SLOPE,
};
use crate::error::{NclaError, Result};
use crate::graph::Graph;
use crate::seed::rng_for;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewParams {
    /// F'×F projection.
    pub weight: DenseMatrix,
    /// Source half then neighbor half, 2F' entries.
    pub attention: Vec<f64>,
}

impl ViewParams {
    pub fn hidden_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn num_params(&self) -> usize {
        self.weight.data().len() + self.attention.len()
    }

    pub fn norm(&self) -> f64 {
        let w = self.weight.frobenius_norm();
        let a: f64 = self.attention.iter().map(|v| v * v).sum();
        (w * w + a).sqrt()
    }

    fn check(&self, g: &Graph) -> Result<()> {
        if self.input_dim() != g.num_features() {
            return Err(NclaError::shape("view params", g.num_features(), self.input_dim()));
        }
        if self.attention.len() != 2 * self.hidden_dim() {
            return Err(NclaError::shape("view params", 2 * self.hidden_dim(), self.attention.len()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    views: Vec<ViewParams>,
}

impl ModelParams {
    pub fn new(views: Vec<ViewParams>) -> Result<Self> {
        if views.len() < 2 {
            return Err(NclaError::InvalidConfig(format!("need at least 2 views, got {}", views.len())));
        }
        let (h, f) = (views[0].hidden_dim(), views[0].input_dim());
        for v in &views {
            if v.hidden_dim() != h || v.input_dim() != f || v.attention.len() != 2 * h {
                return Err(NclaError::InvalidConfig("views disagree on dimensions".into()));
            }
            if !v.weight.is_finite() || v.attention.iter().any(|x| !x.is_finite()) {
                return Err(NclaError::InvalidConfig("non-finite parameter".into()));
            }
        }
        Ok(Self { views })
    }

    pub fn views(&self) -> &[ViewParams] {
        &self.views
    }

    pub fn num_views(&self) -> usize {
        self.views.len()
    }

    pub fn hidden_dim(&self) -> usize {
        self.views[0].hidden_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.views[0].input_dim()
    }

    pub fn num_params(&self) -> usize {
        self.views.iter().map(ViewParams::num_params).sum()
    }

    /// Per view: weight (row-major) then attention.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for v in &self.views {
            out.extend_from_slice(v.weight.data());
            out.extend_from_slice(&v.attention);
        }
        out
    }

    /// Inverse of [`ModelParams::flatten`].
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(NclaError::shape("ModelParams::assign_flat", self.num_params(), flat.len()));
        }
        let mut offset = 0;
        for v in &mut self.views {
            let n = v.weight.data().len();
            v.weight.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
            let m = v.attention.len();
            v.attention.copy_from_slice(&flat[offset..offset + m]);
            offset += m;
        }
        Ok(())
    }

    pub fn from_flat(template: &ModelParams, flat: &[f64]) -> Result<Self> {
        let mut out = template.clone();
        out.assign_flat(flat)?;
        Ok(out)
    }

    /// Flat-index ranges of each view's weight and attention blocks.
    pub fn param_groups(&self) -> Vec<ParamGroup> {
        let mut groups = Vec::with_capacity(2 * self.views.len());
        let mut offset = 0;
        for (k, v) in self.views.iter().enumerate() {
            let n = v.weight.data().len();
            groups.push(ParamGroup {
                name: format!("view{k}.weight"),
                range: offset..offset + n,
            });
            offset += n;
            groups.push(ParamGroup {
                name: format!("view{k}.attention"),
                range: offset..offset + v.attention.len(),
            });
            offset += v.attention.len();
        }
        groups
    }

    pub fn view_norms(&self) -> Vec<f64> {
        self.views.iter().map(ViewParams::norm).collect()
    }
}

/// Glorot-uniform parameters, each view drawn from its own seed stream.
pub fn init_params(input_dim: usize, hidden_dim: usize, views: usize, seed: u64) -> Result<ModelParams> {
    if input_dim == 0 || hidden_dim == 0 {
        return Err(NclaError::InvalidConfig("dimensions must be positive".into()));
    }
    let params = (0..views)
        .map(|k| {
            let mut rng = rng_for(seed, &format!("init:view:{k}"));
            let w_bound = (6.0 / (input_dim + hidden_dim) as f64).sqrt();
            let weight = DenseMatrix::from_fn(hidden_dim, input_dim, |_, _| rng.random_range(-w_bound..=w_bound));
            let a_bound = (6.0 / (2 * hidden_dim + 1) as f64).sqrt();
            let attention = (0..2 * hidden_dim).map(|_| rng.random_range(-a_bound..=a_bound)).collect();
            ViewParams { weight, attention }
        })
        .collect();
    ModelParams::new(params)
}

/// Adaptive edge coefficients of one view, in the graph's closed-neighborhood layout.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveAdjacency {
    pub coefficients: EdgeValues,
}

impl AdaptiveAdjacency {
    /// Coefficient for (i, j); zero when j is outside `N_i ∪ {i}`.
    pub fn get(&self, g: &Graph, i: usize, j: usize) -> f64 {
        self.coefficients.get(g.layout(), i, j).unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    pub per_view: Vec<DenseMatrix>,
    pub concatenated: DenseMatrix,
}

impl EmbeddingSet {
    pub fn from_views(per_view: Vec<DenseMatrix>) -> Result<Self> {
        let refs: Vec<&DenseMatrix> = per_view.iter().collect();
        let concatenated = DenseMatrix::hconcat(&refs)?;
        Ok(Self { per_view, concatenated })
    }

    pub fn num_views(&self) -> usize {
        self.per_view.len()
    }
}

/// Intermediate values of one view's forward pass, kept for backprop.
#[derive(Clone, Debug)]
pub struct ViewTrace {
    pub projected: DenseMatrix,
    pub scores: EdgeValues,
    pub adjacency: AdaptiveAdjacency,
    pub aggregated: DenseMatrix,
    pub embedding: DenseMatrix,
}

fn project(g: &Graph, p: &ViewParams) -> Result<DenseMatrix> {
    p.check(g)?;
    diff::matmul_transb(g.features(), &p.weight)
}

fn adjacency_from_projection(g: &Graph, p: &ViewParams, projected: &DenseMatrix) -> Result<(EdgeValues, AdaptiveAdjacency)> {
    let layout = g.layout();
    let scores = diff::pair_concat_scores(projected, &p.attention, layout)?;
    let logits = EdgeValues::new(
        layout,
        scores.values().iter().map(|&s| leaky_relu(s, LEAKY_RELU_SLOPE)).collect(),
    )?;
    let coefficients = diff::neighborhood_softmax(&logits, layout)?;
    Ok((scores, AdaptiveAdjacency { coefficients }))
}

pub fn compute_view_adjacency(g: &Graph, p: &ViewParams) -> Result<AdaptiveAdjacency> {
    let projected = project(g, p)?;
    Ok(adjacency_from_projection(g, p, &projected)?.1)
}

pub fn encode_view(g: &Graph, p: &ViewParams, adj: &AdaptiveAdjacency) -> Result<DenseMatrix> {
    let projected = project(g, p)?;
    let aggregated = diff::weighted_neighbor_sum(&adj.coefficients, &projected, g.layout())?;
    Ok(aggregated.map(elu))
}

pub fn view_forward(g: &Graph, p: &ViewParams) -> Result<ViewTrace> {
    let projected = project(g, p)?;
    let (scores, adjacency) = adjacency_from_projection(g, p, &projected)?;
    let aggregated = diff::weighted_neighbor_sum(&adjacency.coefficients, &projected, g.layout())?;
    let embedding = aggregated.map(elu);
    Ok(ViewTrace {
        projected,
        scores,
        adjacency,
        aggregated,
        embedding,
    })
}

/// Gradient of a scalar w.r.t. one view's parameters, given its gradient
/// w.r.t. that view's embedding.
pub fn view_backward(g: &Graph, p: &ViewParams, trace: &ViewTrace, grad_embedding: &DenseMatrix) -> Result<ViewParams> {
    let layout = g.layout();
    let mut grad_agg = grad_embedding.clone();
    for (gv, &u) in grad_agg.data_mut().iter_mut().zip(trace.aggregated.data()) {
        *gv *= elu_grad(u);
    }
    let alpha = &trace.adjacency.coefficients;
    let (grad_alpha, mut grad_proj) = diff::weighted_neighbor_sum_backward(alpha, &trace.projected, &grad_agg, layout)?;
    let grad_logits = diff::neighborhood_softmax_backward(alpha, &grad_alpha, layout)?;
    let grad_scores = EdgeValues::new(
        layout,
        grad_logits
            .values()
            .iter()
            .zip(trace.scores.values())
            .map(|(&gl, &s)| gl * leaky_relu_grad(s, LEAKY_RELU_SLOPE))
            .collect(),
    )?;
    let (grad_proj_attn, grad_attention) =
        diff::pair_concat_scores_backward(&trace.projected, &p.attention, layout, &grad_scores)?;
    grad_proj.add_assign(&grad_proj_attn)?;
    let grad_weight = diff::matmul_transa(&grad_proj, g.features())?;
    Ok(ViewParams {
        weight: grad_weight,
        attention: grad_attention,
    })
}

/// All views plus their concatenation.
pub fn forward_traced(g: &Graph, mp: &ModelParams) -> Result<(Vec<ViewTrace>, EmbeddingSet)> {
    let traces: Vec<ViewTrace> = mp
        .views
        .par_iter()
        .map(|p| view_forward(g, p))
        .collect::<Result<_>>()?;
    let embeddings = EmbeddingSet::from_views(traces.iter().map(|t| t.embedding.clone()).collect())?;
    Ok((traces, embeddings))
}

pub fn forward(g: &Graph, mp: &ModelParams) -> Result<(Vec<AdaptiveAdjacency>, EmbeddingSet)> {
    let (traces, embeddings) = forward_traced(g, mp)?;
    Ok((traces.into_iter().map(|t| t.adjacency).collect(), embeddings))
}

const CHECKPOINT_FORMAT: &str = "ncla-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    num_views: usize,
    hidden_dim: usize,
    input_dim: usize,
    views: Vec<CheckpointView>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointView {
    weight: Vec<f64>,
    attention: Vec<f64>,
}

/// JSON checkpoint; see the README for the field layout.
pub fn checkpoint_to_string(mp: &ModelParams) -> Result<String> {
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        num_views: mp.num_views(),
        hidden_dim: mp.hidden_dim(),
        input_dim: mp.input_dim(),
        views: mp
            .views
            .iter()
            .map(|v| CheckpointView {
                weight: v.weight.data().to_vec(),
                attention: v.attention.clone(),
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&file)? + "\n")
}

pub fn checkpoint_from_str(text: &str) -> Result<ModelParams> {
    let file: CheckpointFile = serde_json::from_str(text)?;
    if file.format != CHECKPOINT_FORMAT || file.version != CHECKPOINT_VERSION {
        return Err(NclaError::Checkpoint(format!(
            "unsupported format {:?} version {}",
            file.format, file.version
        )));
    }
    if file.views.len() != file.num_views {
        return Err(NclaError::Checkpoint("view count mismatch".into()));
    }
    let views = file
        .views
        .into_iter()
        .map(|v| {
            if v.attention.len() != 2 * file.hidden_dim {
                return Err(NclaError::Checkpoint("attention length mismatch".into()));
            }
            let weight = DenseMatrix::from_vec(file.hidden_dim, file.input_dim, v.weight)
                .map_err(|e| NclaError::Checkpoint(e.to_string()))?;
            Ok(ViewParams {
                weight,
                attention: v.attention,
            })
        })
        .collect::<Result<_>>()?;
    ModelParams::new(views)
}

pub fn save_checkpoint(mp: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, checkpoint_to_string(mp)?).map_err(|e| NclaError::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams> {
    let path = path.as_ref();
    checkpoint_from_str(&fs::read_to_string(path).map_err(|e| NclaError::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sbm::{generate_sbm, SbmSpec};

    fn star() -> Graph {
        let x = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![-1.0, 0.5]]).unwrap();
        Graph::from_edges("star", x, [(0, 1), (0, 2), (0, 3)], None).unwrap().0
    }

    #[test]
    fn isolated_node_attends_to_itself() {
        let x = DenseMatrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let g = Graph::from_edges("g", x, [(0, 1)], None).unwrap().0;
        let mp = init_params(1, 3, 2, 1).unwrap();
        let adj = compute_view_adjacency(&g, &mp.views()[0]).unwrap();
        assert_eq!(adj.get(&g, 2, 2), 1.0);
        assert_eq!(adj.get(&g, 0, 2), 0.0);
    }

    #[test]
    fn zero_attention_is_uniform() {
        let g = star();
        let mut p = init_params(2, 3, 2, 4).unwrap().views()[0].clone();
        p.attention.iter_mut().for_each(|a| *a = 0.0);
        let adj = compute_view_adjacency(&g, &p).unwrap();
        assert!((adj.get(&g, 0, 2) - 0.25).abs() < 1e-15);
        assert!((adj.get(&g, 3, 0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_weight_gives_zero_embeddings() {
        let g = star();
        let mut p = init_params(2, 3, 2, 4).unwrap().views()[0].clone();
        p.weight.data_mut().iter_mut().for_each(|w| *w = 0.0);
        let adj = compute_view_adjacency(&g, &p).unwrap();
        let h = encode_view(&g, &p, &adj).unwrap();
        assert!(h.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn edgeless_graph_embeds_each_node_alone() {
        let x = DenseMatrix::from_rows(&[vec![1.0, -2.0], vec![0.3, 0.4]]).unwrap();
        let g = Graph::from_edges("g", x.clone(), [], None).unwrap().0;
        let p = init_params(2, 3, 2, 9).unwrap().views()[1].clone();
        let adj = compute_view_adjacency(&g, &p).unwrap();
        let h = encode_view(&g, &p, &adj).unwrap();
        let expected = diff::matmul_transb(&x, &p.weight).unwrap().map(elu);
        assert_eq!(h, expected);
    }

    #[test]
    fn star_graph_matches_dense_aggregation() {
        let g = star();
        let p = ViewParams {
            weight: DenseMatrix::from_rows(&[vec![0.5, -0.25], vec![0.1, 0.2]]).unwrap(),
            attention: vec![0.0; 4],
        };
        let adj = compute_view_adjacency(&g, &p).unwrap();
        let h = encode_view(&g, &p, &adj).unwrap();
        // uniform dense adjacency: centre averages 4 rows, leaves average with centre
        let dense = [
            [0.25, 0.25, 0.25, 0.25],
            [0.5, 0.5, 0.0, 0.0],
            [0.5, 0.0, 0.5, 0.0],
            [0.5, 0.0, 0.0, 0.5],
        ];
        let wx = diff::matmul_transb(g.features(), &p.weight).unwrap();
        for i in 0..4 {
            for c in 0..2 {
                let u: f64 = (0..4).map(|j| dense[i][j] * wx.get(j, c)).sum();
                assert!((h.get(i, c) - elu(u)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identical_views_give_identical_embeddings() {
        let g = generate_sbm(&SbmSpec {
            num_blocks: 2,
            nodes_per_block: 5,
            p_in: 0.6,
            p_out: 0.1,
            feature_dim: 3,
            feature_signal: 1.0,
            seed: 2,
        })
        .unwrap();
        let v = init_params(3, 4, 2, 5).unwrap().views()[0].clone();
        let mp = ModelParams::new(vec![v.clone(), v]).unwrap();
        let (_, es) = forward(&g, &mp).unwrap();
        assert_eq!(es.per_view[0], es.per_view[1]);
        assert_eq!(es.concatenated.cols(), 8);
    }

    #[test]
    fn init_is_reproducible_bounded_and_untied() {
        let a = init_params(10, 6, 3, 42).unwrap();
        let b = init_params(10, 6, 3, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.views()[0].weight, a.views()[1].weight);
        let bound = (6.0f64 / 16.0).sqrt();
        assert!(a.views().iter().all(|v| v.weight.data().iter().all(|w| w.abs() <= bound)));
        assert!(init_params(10, 6, 1, 42).is_err());
    }

    #[test]
    fn flatten_round_trip_and_checkpoint() {
        let mp = init_params(4, 3, 2, 8).unwrap();
        let flat = mp.flatten();
        assert_eq!(ModelParams::from_flat(&mp, &flat).unwrap(), mp);
        let groups = mp.param_groups();
        assert_eq!(groups.last().unwrap().range.end, mp.num_params());
        let text = checkpoint_to_string(&mp).unwrap();
        assert_eq!(checkpoint_from_str(&text).unwrap(), mp);
        assert!(checkpoint_from_str(&text.replace("ncla-checkpoint", "other")).is_err());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let g = star();
        let p = init_params(3, 2, 2, 1).unwrap().views()[0].clone();
        assert!(compute_view_adjacency(&g, &p).is_err());
    }
}
