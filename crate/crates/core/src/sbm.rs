//! Seeded stochastic block model generator with block-dependent features.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diff::DenseMatrix;
use crate::error::{NclaError, Result};
use crate::graph::Graph;
use crate::seed::rng_for;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbmSpec {
    pub num_blocks: usize,
    pub nodes_per_block: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    /// Mean offset added to block b's features along axis `b mod feature_dim`.
    pub feature_signal: f64,
    pub seed: u64,
}

impl SbmSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(NclaError::InvalidConfig(format!("sbm: {msg}")));
        if self.num_blocks == 0 || self.nodes_per_block == 0 {
            return bad("num_blocks and nodes_per_block must be positive");
        }
        if !(0.0..=1.0).contains(&self.p_in) || !(0.0..=1.0).contains(&self.p_out) || self.p_out > self.p_in {
            return bad("need 0 <= p_out <= p_in <= 1");
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be >= 1");
        }
        if !(self.feature_signal >= 0.0 && self.feature_signal.is_finite()) {
            return bad("feature_signal must be finite and >= 0");
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.num_blocks * self.nodes_per_block
    }
}

/// Node `i` belongs to block `i / nodes_per_block`; labels are block ids.
pub fn generate_sbm(spec: &SbmSpec) -> Result<Graph> {
    spec.validate()?;
    let n = spec.num_nodes();
    let block = |i: usize| i / spec.nodes_per_block;

    let mut edge_rng = rng_for(spec.seed, "sbm:edges");
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if block(i) == block(j) { spec.p_in } else { spec.p_out };
            // one draw per pair regardless of p keeps the stream aligned across specs
            let u: f64 = edge_rng.random();
            if u < p {
                edges.push((i, j));
            }
        }
    }

    let mut feat_rng = rng_for(spec.seed, "sbm:features");
    let mut features = DenseMatrix::zeros(n, spec.feature_dim);
    for i in 0..n {
        let row = features.row_mut(i);
        for v in row.iter_mut() {
            *v = feat_rng.sample(StandardNormal);
        }
        row[block(i) % spec.feature_dim] += spec.feature_signal;
    }
    let labels = (0..n).map(block).collect();
    let name = format!(
        "sbm-{}x{}-pin{}-pout{}-seed{}",
        spec.num_blocks, spec.nodes_per_block, spec.p_in, spec.p_out, spec.seed
    );
    Ok(Graph::from_edges(name, features, edges, Some((labels, spec.num_blocks)))?.0)
}
