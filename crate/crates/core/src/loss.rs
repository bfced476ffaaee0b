//! Neighbor contrastive loss and its single-positive relatives.
//!
//! For an anchor `u_i` (row i of the L2-normalized anchor view) and the
//! other view `v`, every term is `exp(<u_i, w> / tau)` for some candidate
//! `w`. The denominator holds the cross-view self pair `v_i`, every
//! cross-view `v_j` (j ≠ i) and, unless the variant drops them, every
//! same-view `u_j` (j ≠ i). The numerator keeps `v_i` plus, depending on
//! the variant, the same-view and/or cross-view neighbors of i.
//!
//! | variant       | same-view in denominator | same-view nbrs positive | cross-view nbrs positive |
//! |---------------|--------------------------|-------------------------|--------------------------|
//! | `NCL`         | yes                      | yes                     | yes                      |
//! | `NT_XENT`     | yes                      | no                      | no                       |
//! | `INFONCE`     | no                       | no                      | no                       |
//! | `NCL_NO_POS2` | yes                      | no                      | yes                      |
//! | `NCL_NO_POS3` | yes                      | yes                     | no                       |
//!
//! Pairwise similarities are produced in blocks of `chunk_size` anchor rows,
//! so peak memory is `O(chunk_size · N)`. Gradients take a second pass over
//! column blocks; each output row is owned by exactly one block, which
//! keeps results independent of the thread count.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diff::{self, dot, DenseMatrix};
use crate::error::{NclaError, Result};
use crate::graph::Graph;
use crate::model::EmbeddingSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossVariant {
    #[serde(rename = "NCL")]
    Ncl,
    #[serde(rename = "INFONCE")]
    InfoNce,
    #[serde(rename = "NT_XENT")]
    NtXent,
    #[serde(rename = "NCL_NO_POS2")]
    NclNoPos2,
    #[serde(rename = "NCL_NO_POS3")]
    NclNoPos3,
}

impl LossVariant {
    pub const ALL: [LossVariant; 5] = [
        LossVariant::Ncl,
        LossVariant::InfoNce,
        LossVariant::NtXent,
        LossVariant::NclNoPos2,
        LossVariant::NclNoPos3,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LossVariant::Ncl => "NCL",
            LossVariant::InfoNce => "INFONCE",
            LossVariant::NtXent => "NT_XENT",
            LossVariant::NclNoPos2 => "NCL_NO_POS2",
            LossVariant::NclNoPos3 => "NCL_NO_POS3",
        }
    }

    fn mask(self) -> TermMask {
        let (intra_in_denominator, intra_positive, inter_positive) = match self {
            LossVariant::Ncl => (true, true, true),
            LossVariant::NtXent => (true, false, false),
            LossVariant::InfoNce => (false, false, false),
            LossVariant::NclNoPos2 => (true, false, true),
            LossVariant::NclNoPos3 => (true, true, false),
        };
        TermMask {
            intra_in_denominator,
            intra_positive,
            inter_positive,
        }
    }
}

impl fmt::Display for LossVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossVariant {
    type Err = NclaError;

    fn from_str(s: &str) -> Result<Self> {
        LossVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| NclaError::InvalidConfig(format!("unknown loss variant {s:?}")))
    }
}

#[derive(Clone, Copy, Debug)]
struct TermMask {
    intra_in_denominator: bool,
    intra_positive: bool,
    inter_positive: bool,
}

/// How the pivot view of the multi-view loss is picked each epoch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PivotPolicy {
    Fixed(usize),
    /// Uniform draw per epoch from the seed stream `pivot:epoch:<e>`.
    Reseeded,
}

impl fmt::Display for PivotPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PivotPolicy::Fixed(l) => write!(f, "fixed:{l}"),
            PivotPolicy::Reseeded => f.write_str("reseeded"),
        }
    }
}

impl FromStr for PivotPolicy {
    type Err = NclaError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "reseeded" {
            return Ok(PivotPolicy::Reseeded);
        }
        s.strip_prefix("fixed:")
            .and_then(|l| l.parse().ok())
            .map(PivotPolicy::Fixed)
            .ok_or_else(|| NclaError::InvalidConfig(format!("bad pivot policy {s:?} (want reseeded | fixed:<view>)")))
    }
}

impl TryFrom<String> for PivotPolicy {
    type Error = NclaError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PivotPolicy> for String {
    fn from(p: PivotPolicy) -> String {
        p.to_string()
    }
}

pub const DEFAULT_CHUNK_SIZE: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub tau: f64,
    pub variant: LossVariant,
    pub pivot_policy: PivotPolicy,
    pub chunk_size: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            tau: 1.0,
            variant: LossVariant::Ncl,
            pivot_policy: PivotPolicy::Reseeded,
            chunk_size: DEFAULT_CHUNK_SIZE,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(NclaError::InvalidConfig(format!("tau must be > 0, got {}", self.tau)));
        }
        if self.chunk_size == 0 {
            return Err(NclaError::InvalidConfig("chunk_size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViewSide {
    First,
    Second,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairKind {
    /// Both rows from the first view.
    IntraFirst,
    /// Both rows from the second view.
    IntraSecond,
    /// Row a from the first view, row b from the second.
    Inter,
}

/// Scaled similarities `<a, b> / tau` between two row-normalized views,
/// produced in anchor-row blocks.
pub struct PairwiseSimilarities<'a> {
    first: &'a DenseMatrix,
    second: &'a DenseMatrix,
    tau: f64,
    chunk_size: usize,
}

/// Similarity logits for anchors `rows` against all N rows.
pub struct SimilarityChunk {
    pub rows: Range<usize>,
    /// Anchor view against itself.
    pub intra: DenseMatrix,
    /// Anchor view against the other view.
    pub inter: DenseMatrix,
}

impl<'a> PairwiseSimilarities<'a> {
    pub fn new(first: &'a DenseMatrix, second: &'a DenseMatrix, tau: f64, chunk_size: usize) -> Result<Self> {
        if first.shape() != second.shape() {
            return Err(NclaError::shape(
                "pairwise_similarities",
                format!("{:?}", first.shape()),
                format!("{:?}", second.shape()),
            ));
        }
        if !first.is_finite() || !second.is_finite() {
            return Err(NclaError::NonFinite { op: "pairwise_similarities" });
        }
        if !(tau > 0.0) || chunk_size == 0 {
            return Err(NclaError::InvalidConfig("tau > 0 and chunk_size >= 1 required".into()));
        }
        Ok(Self {
            first,
            second,
            tau,
            chunk_size,
        })
    }

    pub fn num_rows(&self) -> usize {
        self.first.rows()
    }

    fn views(&self, anchor: ViewSide) -> (&'a DenseMatrix, &'a DenseMatrix) {
        match anchor {
            ViewSide::First => (self.first, self.second),
            ViewSide::Second => (self.second, self.first),
        }
    }

    /// `exp(<a, b> / tau)` for a single pair.
    pub fn exp_similarity(&self, kind: PairKind, a: usize, b: usize) -> f64 {
        let (x, y) = match kind {
            PairKind::IntraFirst => (self.first.row(a), self.first.row(b)),
            PairKind::IntraSecond => (self.second.row(a), self.second.row(b)),
            PairKind::Inter => (self.first.row(a), self.second.row(b)),
        };
        (dot(x, y) / self.tau).exp()
    }

    pub fn chunk_ranges(&self) -> Vec<Range<usize>> {
        let n = self.num_rows();
        (0..n)
            .step_by(self.chunk_size)
            .map(|s| s..(s + self.chunk_size).min(n))
            .collect()
    }

    pub fn chunk(&self, anchor: ViewSide, rows: Range<usize>) -> Result<SimilarityChunk> {
        let (own, other) = self.views(anchor);
        let block = row_block(own, rows.clone());
        let mut intra = diff::matmul_transb(&block, own)?;
        let mut inter = diff::matmul_transb(&block, other)?;
        intra.scale(1.0 / self.tau);
        inter.scale(1.0 / self.tau);
        if !intra.is_finite() || !inter.is_finite() {
            return Err(NclaError::NonFinite { op: "pairwise_similarities" });
        }
        Ok(SimilarityChunk { rows, intra, inter })
    }

    pub fn chunks(&self, anchor: ViewSide) -> impl Iterator<Item = Result<SimilarityChunk>> + '_ {
        self.chunk_ranges().into_iter().map(move |r| self.chunk(anchor, r))
    }
}

fn row_block(m: &DenseMatrix, rows: Range<usize>) -> DenseMatrix {
    let cols = m.cols();
    DenseMatrix::from_vec(rows.len(), cols, m.data()[rows.start * cols..rows.end * cols].to_vec())
        .expect("non-empty row block")
}

/// Per-anchor log-sum-exp of the denominator and numerator term sets.
#[derive(Clone, Copy, Debug)]
struct AnchorStats {
    log_denominator: f64,
    log_numerator: f64,
}

impl AnchorStats {
    fn loss(self) -> f64 {
        self.log_denominator - self.log_numerator
    }
}

/// Neighbor indicator for one node, reused across rows of a block.
struct NeighborMarks {
    marks: Vec<bool>,
}

impl NeighborMarks {
    fn new(n: usize) -> Self {
        Self { marks: vec![false; n] }
    }

    fn with<R>(&mut self, nbrs: &[usize], f: impl FnOnce(&[bool]) -> R) -> R {
        nbrs.iter().for_each(|&j| self.marks[j] = true);
        let out = f(&self.marks);
        nbrs.iter().for_each(|&j| self.marks[j] = false);
        out
    }
}

/// Log-sum-exp of the anchor's denominator and numerator terms.
///
/// Both sums share the denominator max and visit terms in the same order,
/// so when numerator and denominator hold the same terms they are bitwise
/// equal and the loss is exactly zero.
fn anchor_stats(i: usize, intra: &[f64], inter: &[f64], is_nbr: &[bool], mask: TermMask) -> AnchorStats {
    let n = inter.len();
    let mut max = inter[i];
    for j in 0..n {
        if j == i {
            continue;
        }
        max = max.max(inter[j]);
        if mask.intra_in_denominator {
            max = max.max(intra[j]);
        }
    }
    let mut sum_d = (inter[i] - max).exp();
    let mut sum_p = sum_d;
    for j in 0..n {
        if j == i {
            continue;
        }
        if mask.intra_in_denominator {
            let e = (intra[j] - max).exp();
            sum_d += e;
            if is_nbr[j] && mask.intra_positive {
                sum_p += e;
            }
        }
        let e = (inter[j] - max).exp();
        sum_d += e;
        if is_nbr[j] && mask.inter_positive {
            sum_p += e;
        }
    }
    let log_numerator = if sum_p > f64::MIN_POSITIVE {
        max + sum_p.ln()
    } else {
        // numerator terms all far below the denominator max
        let mut pmax = inter[i];
        for j in (0..n).filter(|&j| j != i && is_nbr[j]) {
            if mask.intra_in_denominator && mask.intra_positive {
                pmax = pmax.max(intra[j]);
            }
            if mask.inter_positive {
                pmax = pmax.max(inter[j]);
            }
        }
        let mut s = (inter[i] - pmax).exp();
        for j in (0..n).filter(|&j| j != i && is_nbr[j]) {
            if mask.intra_in_denominator && mask.intra_positive {
                s += (intra[j] - pmax).exp();
            }
            if mask.inter_positive {
                s += (inter[j] - pmax).exp();
            }
        }
        pmax + s.ln()
    };
    AnchorStats {
        log_denominator: max + sum_d.ln(),
        log_numerator,
    }
}

/// d loss_i / d logit for a same-view term (i, j), j ≠ i.
#[inline]
fn intra_coefficient(x: f64, stats: AnchorStats, is_nbr: bool, mask: TermMask) -> f64 {
    if !mask.intra_in_denominator {
        return 0.0;
    }
    let mut c = (x - stats.log_denominator).exp();
    if is_nbr && mask.intra_positive {
        c -= (x - stats.log_numerator).exp();
    }
    c
}

/// d loss_i / d logit for a cross-view term (i, j).
#[inline]
fn inter_coefficient(x: f64, stats: AnchorStats, positive: bool) -> f64 {
    let mut c = (x - stats.log_denominator).exp();
    if positive {
        c -= (x - stats.log_numerator).exp();
    }
    c
}

struct DirectionalOutput {
    anchor_losses: Vec<f64>,
    grad_anchor: Option<DenseMatrix>,
    grad_other: Option<DenseMatrix>,
}

/// Anchor losses of every row of `anchor` contrasted with `other`, plus
/// gradients of their plain sum w.r.t. both (normalized) inputs.
fn directional(
    g: &Graph,
    sims: &PairwiseSimilarities<'_>,
    side: ViewSide,
    mask: TermMask,
    with_grad: bool,
) -> Result<DirectionalOutput> {
    let n = sims.num_rows();
    let (anchor, other) = sims.views(side);
    let tau = sims.tau;
    let width = anchor.cols();
    let ranges = sims.chunk_ranges();

    // pass 1: per-anchor statistics and the anchor-row gradient
    let blocks: Vec<Vec<(AnchorStats, Vec<f64>)>> = ranges
        .par_iter()
        .map(|rows| -> Result<_> {
            let chunk = sims.chunk(side, rows.clone())?;
            let mut marks = NeighborMarks::new(n);
            let mut out = Vec::with_capacity(rows.len());
            for (r, i) in rows.clone().enumerate() {
                let intra = chunk.intra.row(r);
                let inter = chunk.inter.row(r);
                out.push(marks.with(g.adjacent(i), |is_nbr| {
                    let stats = anchor_stats(i, intra, inter, is_nbr, mask);
                    let mut grad = Vec::new();
                    if with_grad {
                        grad = vec![0.0; width];
                        for j in 0..n {
                            let ci = if j == i { 0.0 } else { intra_coefficient(intra[j], stats, is_nbr[j], mask) };
                            let positive = j == i || (is_nbr[j] && mask.inter_positive);
                            let ce = inter_coefficient(inter[j], stats, positive);
                            let (aj, oj) = (anchor.row(j), other.row(j));
                            for c in 0..width {
                                grad[c] += (ci * aj[c] + ce * oj[c]) / tau;
                            }
                        }
                    }
                    (stats, grad)
                }));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<(AnchorStats, Vec<f64>)> = blocks.into_iter().flatten().collect();
    let anchor_losses: Vec<f64> = rows.iter().map(|(s, _)| s.loss()).collect();
    if !with_grad {
        return Ok(DirectionalOutput {
            anchor_losses,
            grad_anchor: None,
            grad_other: None,
        });
    }
    let stats: Vec<AnchorStats> = rows.iter().map(|(s, _)| *s).collect();

    // pass 2: contributions flowing into the candidate rows j, grouped by j
    let scatter: Vec<Vec<(Vec<f64>, Vec<f64>)>> = ranges
        .par_iter()
        .map(|cols| -> Result<_> {
            let block_a = row_block(anchor, cols.clone());
            let block_o = row_block(other, cols.clone());
            let mut intra_t = diff::matmul_transb(&block_a, anchor)?;
            let mut inter_t = diff::matmul_transb(&block_o, anchor)?;
            intra_t.scale(1.0 / tau);
            inter_t.scale(1.0 / tau);
            let mut marks = NeighborMarks::new(n);
            let mut out = Vec::with_capacity(cols.len());
            for (r, j) in cols.clone().enumerate() {
                let intra = intra_t.row(r);
                let inter = inter_t.row(r);
                out.push(marks.with(g.adjacent(j), |is_nbr| {
                    let mut ga = vec![0.0; width];
                    let mut go = vec![0.0; width];
                    for i in 0..n {
                        let ui = anchor.row(i);
                        if i != j {
                            let ci = intra_coefficient(intra[i], stats[i], is_nbr[i], mask);
                            for c in 0..width {
                                ga[c] += ci * ui[c] / tau;
                            }
                        }
                        let positive = i == j || (is_nbr[i] && mask.inter_positive);
                        let ce = inter_coefficient(inter[i], stats[i], positive);
                        for c in 0..width {
                            go[c] += ce * ui[c] / tau;
                        }
                    }
                    (ga, go)
                }));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut grad_anchor = DenseMatrix::zeros(n, width);
    let mut grad_other = DenseMatrix::zeros(n, width);
    for (i, (_, local)) in rows.iter().enumerate() {
        grad_anchor.row_mut(i).copy_from_slice(local);
    }
    for (j, (ga, go)) in scatter.into_iter().flatten().enumerate() {
        for (dst, v) in grad_anchor.row_mut(j).iter_mut().zip(ga) {
            *dst += v;
        }
        grad_other.row_mut(j).copy_from_slice(&go);
    }
    Ok(DirectionalOutput {
        anchor_losses,
        grad_anchor: Some(grad_anchor),
        grad_other: Some(grad_other),
    })
}

fn check_graph(g: &Graph, h: &DenseMatrix) -> Result<()> {
    if h.rows() != g.num_nodes() {
        return Err(NclaError::shape("contrastive loss", g.num_nodes(), h.rows()));
    }
    Ok(())
}

/// Loss of a single anchor. `first`/`second` must already be row-normalized.
pub fn anchor_loss(
    i: usize,
    view: ViewSide,
    g: &Graph,
    first: &DenseMatrix,
    second: &DenseMatrix,
    cfg: &LossConfig,
) -> Result<f64> {
    cfg.validate()?;
    check_graph(g, first)?;
    let n = g.num_nodes();
    if i >= n {
        return Err(NclaError::NodeOutOfRange { index: i, num_nodes: n });
    }
    let sims = PairwiseSimilarities::new(first, second, cfg.tau, cfg.chunk_size)?;
    let chunk = sims.chunk(view, i..i + 1)?;
    let mut marks = NeighborMarks::new(n);
    let stats = marks.with(g.adjacent(i), |is_nbr| {
        anchor_stats(i, chunk.intra.row(0), chunk.inter.row(0), is_nbr, cfg.variant.mask())
    });
    Ok(stats.loss())
}

/// Value and raw-embedding gradients of the symmetric two-view loss.
#[derive(Clone, Debug)]
pub struct TwoViewLoss {
    pub value: f64,
    pub grad_first: Option<DenseMatrix>,
    pub grad_second: Option<DenseMatrix>,
    /// Rows that were all-zero in either view (passed through normalization unchanged).
    pub zero_rows: usize,
}

fn two_view(g: &Graph, h1: &DenseMatrix, h2: &DenseMatrix, cfg: &LossConfig, with_grad: bool) -> Result<TwoViewLoss> {
    cfg.validate()?;
    check_graph(g, h1)?;
    check_graph(g, h2)?;
    let n1 = diff::l2_normalize_rows(h1);
    let n2 = diff::l2_normalize_rows(h2);
    let zero_rows = n1.zero_rows.len() + n2.zero_rows.len();
    if zero_rows > 0 {
        log::debug!("contrastive loss: {zero_rows} zero embedding rows");
    }
    let sims = PairwiseSimilarities::new(&n1.matrix, &n2.matrix, cfg.tau, cfg.chunk_size)?;
    let mask = cfg.variant.mask();
    let d1 = directional(g, &sims, ViewSide::First, mask, with_grad)?;
    let d2 = directional(g, &sims, ViewSide::Second, mask, with_grad)?;
    let n = g.num_nodes();
    let scale = 1.0 / (2 * n) as f64;
    let total: f64 = d1
        .anchor_losses
        .iter()
        .zip(&d2.anchor_losses)
        .map(|(a, b)| a + b)
        .sum();
    let value = total * scale;
    if !value.is_finite() {
        return Err(NclaError::NonFinite { op: "two_view_loss" });
    }
    let (grad_first, grad_second) = if with_grad {
        let mut g1 = d1.grad_anchor.expect("gradient requested");
        g1.add_assign(d2.grad_other.as_ref().expect("gradient requested"))?;
        let mut g2 = d2.grad_anchor.expect("gradient requested");
        g2.add_assign(d1.grad_other.as_ref().expect("gradient requested"))?;
        g1.scale(scale);
        g2.scale(scale);
        (
            Some(diff::l2_normalize_rows_backward(&n1, &g1)?),
            Some(diff::l2_normalize_rows_backward(&n2, &g2)?),
        )
    } else {
        (None, None)
    };
    Ok(TwoViewLoss {
        value,
        grad_first,
        grad_second,
        zero_rows,
    })
}

/// Symmetric two-view loss averaged over all 2N anchors. Inputs are raw
/// embeddings; rows are L2-normalized internally.
pub fn two_view_loss(g: &Graph, h1: &DenseMatrix, h2: &DenseMatrix, cfg: &LossConfig) -> Result<f64> {
    Ok(two_view(g, h1, h2, cfg, false)?.value)
}

pub fn two_view_loss_with_grad(g: &Graph, h1: &DenseMatrix, h2: &DenseMatrix, cfg: &LossConfig) -> Result<TwoViewLoss> {
    two_view(g, h1, h2, cfg, true)
}

fn check_pivot(es: &EmbeddingSet, pivot: usize) -> Result<()> {
    let k = es.num_views();
    if k < 2 {
        return Err(NclaError::InvalidConfig(format!("need at least 2 views, got {k}")));
    }
    if pivot >= k {
        return Err(NclaError::PivotOutOfRange { pivot, views: k });
    }
    Ok(())
}

/// Multi-view loss: `(1/K) Σ_{k≠pivot} two_view_loss(H_k, H_pivot)`.
pub fn total_loss(g: &Graph, es: &EmbeddingSet, cfg: &LossConfig, pivot: usize) -> Result<f64> {
    check_pivot(es, pivot)?;
    let k = es.num_views();
    let mut sum = 0.0;
    for v in (0..k).filter(|&v| v != pivot) {
        sum += two_view_loss(g, &es.per_view[v], &es.per_view[pivot], cfg)?;
    }
    Ok(sum / k as f64)
}

/// [`total_loss`] with the gradient w.r.t. each raw view embedding.
pub fn total_loss_with_grad(g: &Graph, es: &EmbeddingSet, cfg: &LossConfig, pivot: usize) -> Result<(f64, Vec<DenseMatrix>)> {
    check_pivot(es, pivot)?;
    let k = es.num_views();
    let (rows, cols) = es.per_view[0].shape();
    let mut grads = vec![DenseMatrix::zeros(rows, cols); k];
    let mut sum = 0.0;
    for v in (0..k).filter(|&v| v != pivot) {
        let term = two_view_loss_with_grad(g, &es.per_view[v], &es.per_view[pivot], cfg)?;
        sum += term.value;
        grads[v].add_assign(term.grad_first.as_ref().expect("gradient requested"))?;
        grads[pivot].add_assign(term.grad_second.as_ref().expect("gradient requested"))?;
    }
    let scale = 1.0 / k as f64;
    grads.iter_mut().for_each(|m| m.scale(scale));
    Ok((sum * scale, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn graph(n: usize, edges: &[(usize, usize)]) -> Graph {
        Graph::from_edges("g", DenseMatrix::from_fn(n, 1, |r, _| r as f64), edges.iter().copied(), None)
            .unwrap()
            .0
    }

    fn complete(n: usize) -> Graph {
        let edges: Vec<_> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
        graph(n, &edges)
    }

    fn random(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn cfg(variant: LossVariant, chunk: usize) -> LossConfig {
        LossConfig {
            variant,
            chunk_size: chunk,
            ..LossConfig::default()
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for v in LossVariant::ALL {
            assert_eq!(v.as_str().parse::<LossVariant>().unwrap(), v);
        }
        assert!("ncl".parse::<LossVariant>().is_err());
        assert_eq!("fixed:2".parse::<PivotPolicy>().unwrap(), PivotPolicy::Fixed(2));
        assert_eq!("reseeded".parse::<PivotPolicy>().unwrap(), PivotPolicy::Reseeded);
        assert!("fixed".parse::<PivotPolicy>().is_err());
    }

    #[test]
    fn identical_and_orthogonal_rows() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let sims = PairwiseSimilarities::new(&a, &a, 1.0, 1).unwrap();
        assert!((sims.exp_similarity(PairKind::Inter, 0, 0) - std::f64::consts::E).abs() < 1e-15);
        assert_eq!(sims.exp_similarity(PairKind::IntraFirst, 0, 1), 1.0);
    }

    #[test]
    fn complete_graph_ncl_is_zero() {
        let g = complete(5);
        let h1 = random(5, 3, 1);
        let h2 = random(5, 3, 2);
        for chunk in [1, 2, 5] {
            let l = two_view_loss(&g, &h1, &h2, &cfg(LossVariant::Ncl, chunk)).unwrap();
            assert_eq!(l, 0.0);
        }
    }

    #[test]
    fn edgeless_graph_ncl_equals_nt_xent() {
        let g = graph(6, &[]);
        let h1 = random(6, 4, 3);
        let h2 = random(6, 4, 4);
        let a = two_view_loss(&g, &h1, &h2, &cfg(LossVariant::Ncl, 4)).unwrap();
        let b = two_view_loss(&g, &h1, &h2, &cfg(LossVariant::NtXent, 4)).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn symmetric_in_views() {
        let g = graph(6, &[(0, 1), (1, 2), (3, 4)]);
        let h1 = random(6, 3, 5);
        let h2 = random(6, 3, 6);
        for v in LossVariant::ALL {
            let c = cfg(v, 2);
            assert_eq!(two_view_loss(&g, &h1, &h2, &c).unwrap(), two_view_loss(&g, &h2, &h1, &c).unwrap());
        }
    }

    #[test]
    fn pivot_out_of_range() {
        let g = graph(3, &[(0, 1)]);
        let es = EmbeddingSet::from_views(vec![random(3, 2, 1), random(3, 2, 2)]).unwrap();
        assert!(matches!(
            total_loss(&g, &es, &LossConfig::default(), 2),
            Err(NclaError::PivotOutOfRange { .. })
        ));
    }

    #[test]
    fn anchor_loss_matches_directional_sum() {
        let g = graph(5, &[(0, 1), (1, 2), (2, 3), (0, 4)]);
        let h1 = random(5, 3, 9);
        let h2 = random(5, 3, 10);
        let n1 = diff::l2_normalize_rows(&h1).matrix;
        let n2 = diff::l2_normalize_rows(&h2).matrix;
        let c = cfg(LossVariant::NclNoPos3, 3);
        let mut sum = 0.0;
        for i in 0..5 {
            sum += anchor_loss(i, ViewSide::First, &g, &n1, &n2, &c).unwrap()
                + anchor_loss(i, ViewSide::Second, &g, &n1, &n2, &c).unwrap();
        }
        let l = two_view_loss(&g, &h1, &h2, &c).unwrap();
        assert!((sum / 10.0 - l).abs() < 1e-12);
        assert!(anchor_loss(5, ViewSide::First, &g, &n1, &n2, &c).is_err());
    }

    #[test]
    fn tiny_temperature_stays_finite() {
        let g = graph(4, &[(0, 1), (2, 3)]);
        let h1 = random(4, 3, 11);
        let h2 = random(4, 3, 12);
        let c = LossConfig {
            tau: 1e-3,
            ..LossConfig::default()
        };
        let out = two_view_loss_with_grad(&g, &h1, &h2, &c).unwrap();
        assert!(out.value.is_finite() && out.value >= 0.0);
        assert!(out.grad_first.unwrap().is_finite());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let g = graph(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)]);
        let h1 = random(6, 4, 21);
        let h2 = random(6, 4, 22);
        for v in LossVariant::ALL {
            let c = cfg(v, 4);
            let f = |p: &[f64]| {
                let a = DenseMatrix::from_vec(6, 4, p[..24].to_vec()).unwrap();
                let b = DenseMatrix::from_vec(6, 4, p[24..].to_vec()).unwrap();
                let out = two_view_loss_with_grad(&g, &a, &b, &c).unwrap();
                let mut grad = out.grad_first.unwrap().into_data();
                grad.extend(out.grad_second.unwrap().into_data());
                (out.value, grad)
            };
            let mut p = h1.data().to_vec();
            p.extend_from_slice(h2.data());
            let report = diff::gradcheck(f, &p, &[], 1e-6, 1e-5);
            assert!(report.passed, "{v}: {report:?}");
        }
    }
}
