//! Immutable undirected graph with CSR adjacency and dense node features.

use std::ops::Range;

use crate::diff::DenseMatrix;
use crate::error::{NclaError, Result};

/// Closed-neighborhood layout: for node i the group `N_i ∪ {i}`, column
/// indices sorted ascending. Per-edge kernels store one value per slot.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborhoodLayout {
    offsets: Vec<usize>,
    cols: Vec<usize>,
    reverse: Vec<usize>,
}

impl NeighborhoodLayout {
    fn build(row_offsets: &[usize], col_indices: &[usize]) -> Self {
        let n = row_offsets.len() - 1;
        let mut offsets = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(col_indices.len() + n);
        offsets.push(0);
        for i in 0..n {
            let nbrs = &col_indices[row_offsets[i]..row_offsets[i + 1]];
            let split = nbrs.partition_point(|&j| j < i);
            cols.extend_from_slice(&nbrs[..split]);
            cols.push(i);
            cols.extend_from_slice(&nbrs[split..]);
            offsets.push(cols.len());
        }
        let mut layout = Self {
            offsets,
            cols,
            reverse: Vec::new(),
        };
        let mut reverse = Vec::with_capacity(layout.cols.len());
        for i in 0..n {
            for s in layout.group(i) {
                let j = layout.cols[s];
                reverse.push(layout.slot(j, i).expect("adjacency is symmetric"));
            }
        }
        layout.reverse = reverse;
        layout
    }

    #[inline]
    pub fn num_rows(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Directed edges plus one self slot per node.
    #[inline]
    pub fn num_slots(&self) -> usize {
        self.cols.len()
    }

    #[inline]
    pub fn group(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    #[inline]
    pub fn cols_of(&self, i: usize) -> &[usize] {
        &self.cols[self.group(i)]
    }

    #[inline]
    pub fn col(&self, slot: usize) -> usize {
        self.cols[slot]
    }

    /// Slot holding the mirrored pair: for slot (i, j), the slot of (j, i).
    #[inline]
    pub fn reverse_slot(&self, slot: usize) -> usize {
        self.reverse[slot]
    }

    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let group = self.group(i);
        self.cols[group.clone()]
            .binary_search(&j)
            .ok()
            .map(|k| group.start + k)
    }
}

/// Bookkeeping from edge normalisation during construction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EdgeStats {
    pub input_edges: usize,
    pub self_loops_dropped: usize,
    pub duplicates_dropped: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    name: String,
    features: DenseMatrix,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    layout: NeighborhoodLayout,
    labels: Option<Vec<usize>>,
    num_classes: Option<usize>,
}

impl Graph {
    /// Builds a graph from an arbitrary edge list. Edges are symmetrized,
    /// deduplicated, and self-loops dropped; the counts are returned.
    pub fn from_edges(
        name: impl Into<String>,
        features: DenseMatrix,
        edges: impl IntoIterator<Item = (usize, usize)>,
        labels: Option<(Vec<usize>, usize)>,
    ) -> Result<(Self, EdgeStats)> {
        let n = features.rows();
        if !features.is_finite() {
            return Err(NclaError::InvalidGraph("non-finite feature value".into()));
        }
        let mut stats = EdgeStats::default();
        let mut directed = Vec::new();
        for (a, b) in edges {
            stats.input_edges += 1;
            for idx in [a, b] {
                if idx >= n {
                    return Err(NclaError::NodeOutOfRange {
                        index: idx,
                        num_nodes: n,
                    });
                }
            }
            if a == b {
                stats.self_loops_dropped += 1;
                continue;
            }
            directed.push((a, b));
            directed.push((b, a));
        }
        directed.sort_unstable();
        let before = directed.len();
        directed.dedup();
        // each undirected duplicate removes two directed entries
        stats.duplicates_dropped = (before - directed.len()) / 2;

        let mut row_offsets = vec![0usize; n + 1];
        for &(a, _) in &directed {
            row_offsets[a + 1] += 1;
        }
        for i in 0..n {
            row_offsets[i + 1] += row_offsets[i];
        }
        let col_indices: Vec<usize> = directed.into_iter().map(|(_, b)| b).collect();

        let (labels, num_classes) = match labels {
            Some((labels, c)) => {
                if labels.len() != n {
                    return Err(NclaError::InvalidGraph(format!(
                        "expected {n} labels, found {}",
                        labels.len()
                    )));
                }
                if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
                    return Err(NclaError::InvalidGraph(format!(
                        "label {bad} out of range for {c} classes"
                    )));
                }
                (Some(labels), Some(c))
            }
            None => (None, None),
        };
        let layout = NeighborhoodLayout::build(&row_offsets, &col_indices);
        Ok((
            Self {
                name: name.into(),
                features,
                row_offsets,
                col_indices,
                layout,
                labels,
                num_classes,
            },
            stats,
        ))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    #[inline]
    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    #[inline]
    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.num_classes
    }

    pub fn layout(&self) -> &NeighborhoodLayout {
        &self.layout
    }

    /// CSR row offsets (length N + 1) and column indices.
    pub fn csr(&self) -> (&[usize], &[usize]) {
        (&self.row_offsets, &self.col_indices)
    }

    /// Number of stored directed entries, i.e. twice the undirected edge count.
    pub fn num_directed_entries(&self) -> usize {
        self.col_indices.len()
    }

    pub fn num_undirected_edges(&self) -> usize {
        self.col_indices.len() / 2
    }

    /// Sorted neighbors of `i`, excluding `i` itself.
    pub fn neighbors(&self, i: usize) -> Result<&[usize]> {
        if i >= self.num_nodes() {
            return Err(NclaError::NodeOutOfRange {
                index: i,
                num_nodes: self.num_nodes(),
            });
        }
        Ok(self.adjacent(i))
    }

    /// Unchecked variant of [`Graph::neighbors`]; panics when `i` is out of range.
    #[inline]
    pub fn adjacent(&self, i: usize) -> &[usize] {
        &self.col_indices[self.row_offsets[i]..self.row_offsets[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row_offsets[i + 1] - self.row_offsets[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacent(i).binary_search(&j).is_ok()
    }

    /// Each undirected edge once, as (i, j) with i < j.
    pub fn undirected_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes()).flat_map(move |i| {
            self.adjacent(i)
                .iter()
                .filter(move |&&j| j > i)
                .map(move |&j| (i, j))
        })
    }

    /// Relabels nodes: old node `i` becomes node `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Graph> {
        let n = self.num_nodes();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(NclaError::InvalidGraph("permutation is not a bijection".into()));
        }
        let mut features = DenseMatrix::zeros(n, self.num_features());
        for i in 0..n {
            features.row_mut(perm[i]).copy_from_slice(self.features.row(i));
        }
        let labels = self.labels.as_ref().map(|labels| {
            let mut out = vec![0; n];
            for i in 0..n {
                out[perm[i]] = labels[i];
            }
            (out, self.num_classes.unwrap_or(0))
        });
        let edges: Vec<_> = self.undirected_edges().map(|(a, b)| (perm[a], perm[b])).collect();
        Ok(Graph::from_edges(self.name.clone(), features, edges, labels)?.0)
    }

    /// Same topology, replaced features.
    pub fn with_features(&self, features: DenseMatrix) -> Result<Graph> {
        if features.rows() != self.num_nodes() {
            return Err(NclaError::shape("Graph::with_features", self.num_nodes(), features.rows()));
        }
        if !features.is_finite() {
            return Err(NclaError::InvalidGraph("non-finite feature value".into()));
        }
        let mut g = self.clone();
        g.features = features;
        Ok(g)
    }
}
