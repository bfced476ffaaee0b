//! Independent reference implementations and random fixtures shared by the
//! integration tests. Nothing here calls into the crate's loss or attention
//! kernels; graphs are only used for their edge lists.

#![allow(dead_code)]

use ncla_core::diff::DenseMatrix;
use ncla_core::graph::Graph;
use ncla_core::loss::LossVariant;
use ncla_core::model::ModelParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Erdos-Renyi graph with Gaussian features; `p` = 0 and 1 give the edgeless and complete graphs.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64, features: usize) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let x = normal_matrix(rng, n, features);
    Graph::from_edges("random", x, edges, None).unwrap().0
}

pub fn complete_graph(n: usize, x: DenseMatrix) -> Graph {
    let edges: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    Graph::from_edges("complete", x, edges, None).unwrap().0
}

pub fn edgeless_graph(x: DenseMatrix) -> Graph {
    Graph::from_edges("edgeless", x, Vec::<(usize, usize)>::new(), None).unwrap().0
}

/// Dense 0/1 adjacency rebuilt from the undirected edge list.
pub fn adjacency_matrix(g: &Graph) -> Vec<Vec<bool>> {
    let n = g.num_nodes();
    let mut a = vec![vec![false; n]; n];
    for (i, j) in g.undirected_edges() {
        a[i][j] = true;
        a[j][i] = true;
    }
    a
}

pub fn normalize(h: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..h.rows())
        .map(|i| {
            let r = h.row(i);
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                r.to_vec()
            } else {
                r.iter().map(|v| v / norm).collect()
            }
        })
        .collect()
}

fn ip(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// (same-view in denominator, same-view neighbors positive, cross-view neighbors positive)
pub fn variant_flags(v: LossVariant) -> (bool, bool, bool) {
    match v {
        LossVariant::Ncl => (true, true, true),
        LossVariant::NtXent => (true, false, false),
        LossVariant::InfoNce => (false, false, false),
        LossVariant::NclNoPos2 => (true, false, true),
        LossVariant::NclNoPos3 => (true, true, false),
    }
}

/// Anchor loss by enumerating every pair term with explicit loops.
pub fn oracle_anchor_loss(adj: &[Vec<bool>], anchor: &[Vec<f64>], other: &[Vec<f64>], i: usize, tau: f64, variant: LossVariant) -> f64 {
    let (intra_den, intra_pos, inter_pos) = variant_flags(variant);
    let n = adj.len();
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..n {
        let inter = (ip(&anchor[i], &other[j]) / tau).exp();
        den += inter;
        if j == i || (inter_pos && adj[i][j]) {
            num += inter;
        }
        if j != i {
            let intra = (ip(&anchor[i], &anchor[j]) / tau).exp();
            if intra_den {
                den += intra;
            }
            if intra_pos && adj[i][j] {
                num += intra;
            }
        }
    }
    -(num / den).ln()
}

pub fn oracle_two_view(g: &Graph, h1: &DenseMatrix, h2: &DenseMatrix, tau: f64, variant: LossVariant) -> f64 {
    let adj = adjacency_matrix(g);
    let u = normalize(h1);
    let v = normalize(h2);
    let n = g.num_nodes();
    let mut total = 0.0;
    for i in 0..n {
        total += oracle_anchor_loss(&adj, &u, &v, i, tau, variant);
        total += oracle_anchor_loss(&adj, &v, &u, i, tau, variant);
    }
    total / (2 * n) as f64
}

pub fn oracle_total(g: &Graph, views: &[DenseMatrix], tau: f64, variant: LossVariant, pivot: usize) -> f64 {
    let k = views.len();
    let sum: f64 = (0..k)
        .filter(|&v| v != pivot)
        .map(|v| oracle_two_view(g, &views[v], &views[pivot], tau, variant))
        .sum();
    sum / k as f64
}

/// SimCLR-style NT-Xent: stack both normalized views into 2N rows; each
/// row's positive is its counterpart, every other row is a negative.
pub fn standalone_nt_xent(h1: &DenseMatrix, h2: &DenseMatrix, tau: f64) -> f64 {
    let n = h1.rows();
    let mut z = normalize(h1);
    z.extend(normalize(h2));
    let mut total = 0.0;
    for a in 0..2 * n {
        let partner = (a + n) % (2 * n);
        let logits: Vec<f64> = (0..2 * n).map(|b| ip(&z[a], &z[b]) / tau).collect();
        let max = logits.iter().enumerate().filter(|&(b, _)| b != a).map(|(_, &l)| l).fold(f64::NEG_INFINITY, f64::max);
        let lse = max + (0..2 * n).filter(|&b| b != a).map(|b| (logits[b] - max).exp()).sum::<f64>().ln();
        total += lse - logits[partner];
    }
    total / (2 * n) as f64
}

fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.2 * x
    }
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

/// Dense attention for one view: returns the N×N coefficient matrix and the embedding.
pub fn dense_attention(g: &Graph, weight: &DenseMatrix, attention: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = g.num_nodes();
    let (fo, fi) = weight.shape();
    let x = g.features();
    let z: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..fo).map(|o| (0..fi).map(|f| weight.get(o, f) * x.get(i, f)).sum()).collect())
        .collect();
    let adj = adjacency_matrix(g);
    let mut alpha = vec![vec![0.0; n]; n];
    for i in 0..n {
        let mut logits = vec![f64::NEG_INFINITY; n];
        for j in 0..n {
            if i == j || adj[i][j] {
                let s = ip(&attention[..fo], &z[i]) + ip(&attention[fo..], &z[j]);
                logits[j] = leaky(s);
            }
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        for j in 0..n {
            alpha[i][j] = (logits[j] - max).exp() / total;
        }
    }
    let h = (0..n)
        .map(|i| (0..fo).map(|o| elu((0..n).map(|j| alpha[i][j] * z[j][o]).sum())).collect())
        .collect();
    (alpha, h)
}

pub fn dense_forward(g: &Graph, params: &ModelParams) -> Vec<DenseMatrix> {
    params
        .views()
        .iter()
        .map(|v| DenseMatrix::from_rows(&dense_attention(g, &v.weight, &v.attention).1).unwrap())
        .collect()
}

pub fn max_abs_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
