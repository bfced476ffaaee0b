//! Dense and graph-sparse numerical kernels with hand-derived backward passes.
//!
//! Every kernel on the training path has a `*_backward` companion. The
//! companions are checked against central finite differences by
//! [`gradcheck`] in the unit tests below and in the integration suites.
//!
//! Graph-sparse kernels operate on [`EdgeValues`]: one value per slot of a
//! [`NeighborhoodLayout`], i.e. one per directed edge plus one self-loop
//! slot per node. Row-parallel kernels never share an accumulator between
//! rows, so results do not depend on the thread count.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NclaError, Result};
use crate::graph::NeighborhoodLayout;

/// Negative-side slope of LeakyReLU in the attention logits.
pub const LEAKY_RELU_SLOPE: f64 = 0.2;

/// Row count above which row-parallel kernels hand work to rayon.
const PAR_MIN_ROWS: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(NclaError::shape(
                "DenseMatrix::from_vec",
                "positive dimensions",
                format!("{rows}x{cols}"),
            ));
        }
        if data.len() != rows * cols {
            return Err(NclaError::shape(
                "DenseMatrix::from_vec",
                rows * cols,
                data.len(),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(NclaError::shape("DenseMatrix::from_rows", cols, row.len()));
            }
            data.extend_from_slice(row);
        }
        Self::from_vec(rows.len(), cols, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn add_assign(&mut self, other: &DenseMatrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(NclaError::shape(
                "DenseMatrix::add_assign",
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Horizontal concatenation `[a | b | ...]`.
    pub fn hconcat(parts: &[&DenseMatrix]) -> Result<DenseMatrix> {
        let rows = parts.first().map_or(0, |m| m.rows);
        if let Some(bad) = parts.iter().find(|m| m.rows != rows) {
            return Err(NclaError::shape("hconcat", rows, bad.rows));
        }
        let cols: usize = parts.iter().map(|m| m.cols).sum();
        let mut out = DenseMatrix::zeros(rows, cols);
        for r in 0..rows {
            let mut offset = 0;
            for part in parts {
                out.row_mut(r)[offset..offset + part.cols].copy_from_slice(part.row(r));
                offset += part.cols;
            }
        }
        Ok(out)
    }

    /// Columns `range` of every row, as a new matrix.
    pub fn column_block(&self, range: Range<usize>) -> DenseMatrix {
        let width = range.len();
        DenseMatrix::from_fn(self.rows, width, |r, c| self.get(r, range.start + c))
    }
}

/// One value per slot of a [`NeighborhoodLayout`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeValues {
    values: Vec<f64>,
}

impl EdgeValues {
    pub fn new(layout: &NeighborhoodLayout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.num_slots() {
            return Err(NclaError::shape("EdgeValues::new", layout.num_slots(), values.len()));
        }
        Ok(Self { values })
    }

    pub fn zeros(layout: &NeighborhoodLayout) -> Self {
        Self {
            values: vec![0.0; layout.num_slots()],
        }
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Values of node `i`'s closed-neighborhood group.
    pub fn group<'a>(&'a self, layout: &NeighborhoodLayout, i: usize) -> &'a [f64] {
        &self.values[layout.group(i)]
    }

    /// Value stored for the ordered pair (i, j), or `None` when j is not in
    /// the closed neighborhood of i.
    pub fn get(&self, layout: &NeighborhoodLayout, i: usize, j: usize) -> Option<f64> {
        layout.slot(i, j).map(|s| self.values[s])
    }
}

fn check_layout(op: &'static str, layout: &NeighborhoodLayout, values: &EdgeValues) -> Result<()> {
    if values.len() != layout.num_slots() {
        return Err(NclaError::shape(op, layout.num_slots(), values.len()));
    }
    Ok(())
}

fn check_finite(op: &'static str, data: &[f64]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NclaError::NonFinite { op })
    }
}

fn for_each_row(out: &mut DenseMatrix, f: impl Fn(usize, &mut [f64]) + Sync + Send) {
    let cols = out.cols;
    if cols == 0 {
        return;
    }
    if out.rows >= PAR_MIN_ROWS {
        out.data
            .par_chunks_mut(cols)
            .enumerate()
            .for_each(|(r, row)| f(r, row));
    } else {
        out.data
            .chunks_mut(cols)
            .enumerate()
            .for_each(|(r, row)| f(r, row));
    }
}

/// `a · b`.
pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.rows {
        return Err(NclaError::shape("matmul", a.cols, b.rows));
    }
    let mut out = DenseMatrix::zeros(a.rows, b.cols);
    for_each_row(&mut out, |r, row| {
        for (k, &x) in a.row(r).iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (o, &y) in row.iter_mut().zip(b.row(k)) {
                *o += x * y;
            }
        }
    });
    check_finite("matmul", &out.data)?;
    Ok(out)
}

/// `a · bᵀ`, i.e. all pairwise row inner products.
pub fn matmul_transb(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.cols {
        return Err(NclaError::shape("matmul_transb", a.cols, b.cols));
    }
    let mut out = DenseMatrix::zeros(a.rows, b.rows);
    for_each_row(&mut out, |r, row| {
        let ar = a.row(r);
        for (j, o) in row.iter_mut().enumerate() {
            *o = dot(ar, b.row(j));
        }
    });
    check_finite("matmul_transb", &out.data)?;
    Ok(out)
}

/// `aᵀ · b`.
pub fn matmul_transa(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.rows != b.rows {
        return Err(NclaError::shape("matmul_transa", a.rows, b.rows));
    }
    let mut out = DenseMatrix::zeros(a.cols, b.cols);
    for_each_row(&mut out, |r, row| {
        for k in 0..a.rows {
            let x = a.get(k, r);
            if x == 0.0 {
                continue;
            }
            for (o, &y) in row.iter_mut().zip(b.row(k)) {
                *o += x * y;
            }
        }
    });
    check_finite("matmul_transa", &out.data)?;
    Ok(out)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Row-wise inner products `<a_r, b_r>`.
pub fn inner_product_rows(a: &DenseMatrix, b: &DenseMatrix) -> Result<Vec<f64>> {
    if a.shape() != b.shape() {
        return Err(NclaError::shape(
            "inner_product_rows",
            format!("{:?}", a.shape()),
            format!("{:?}", b.shape()),
        ));
    }
    Ok((0..a.rows).map(|r| dot(a.row(r), b.row(r))).collect())
}

#[inline]
pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

#[inline]
pub fn leaky_relu_grad(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}

#[inline]
pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

#[inline]
pub fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

/// Per-slot attention score `phi · [z_i ∥ z_j]` for every (i, j) slot of the
/// layout, without materialising the concatenated pair rows.
pub fn pair_concat_scores(
    z: &DenseMatrix,
    phi: &[f64],
    layout: &NeighborhoodLayout,
) -> Result<EdgeValues> {
    let width = z.cols;
    if phi.len() != 2 * width {
        return Err(NclaError::shape("pair_concat_scores", 2 * width, phi.len()));
    }
    if z.rows != layout.num_rows() {
        return Err(NclaError::shape("pair_concat_scores", layout.num_rows(), z.rows));
    }
    let (phi_src, phi_dst) = phi.split_at(width);
    let src: Vec<f64> = (0..z.rows).map(|i| dot(phi_src, z.row(i))).collect();
    let dst: Vec<f64> = (0..z.rows).map(|i| dot(phi_dst, z.row(i))).collect();
    let mut values = Vec::with_capacity(layout.num_slots());
    for i in 0..layout.num_rows() {
        for &j in layout.cols_of(i) {
            values.push(src[i] + dst[j]);
        }
    }
    Ok(EdgeValues { values })
}

/// Gradients of [`pair_concat_scores`] w.r.t. `z` and `phi`.
pub fn pair_concat_scores_backward(
    z: &DenseMatrix,
    phi: &[f64],
    layout: &NeighborhoodLayout,
    grad: &EdgeValues,
) -> Result<(DenseMatrix, Vec<f64>)> {
    check_layout("pair_concat_scores_backward", layout, grad)?;
    let width = z.cols;
    let (phi_src, phi_dst) = phi.split_at(width);
    // d score / d src_i summed over i's group; d score / d dst_j gathered via reverse slots
    let grad_src: Vec<f64> = (0..layout.num_rows())
        .map(|i| grad.values[layout.group(i)].iter().sum())
        .collect();
    let grad_dst: Vec<f64> = (0..layout.num_rows())
        .map(|j| {
            layout
                .group(j)
                .map(|s| grad.values[layout.reverse_slot(s)])
                .sum()
        })
        .collect();
    let mut gphi = vec![0.0; 2 * width];
    for i in 0..z.rows {
        let zi = z.row(i);
        for c in 0..width {
            gphi[c] += grad_src[i] * zi[c];
            gphi[width + c] += grad_dst[i] * zi[c];
        }
    }
    let gz = DenseMatrix::from_fn(z.rows, width, |i, c| {
        grad_src[i] * phi_src[c] + grad_dst[i] * phi_dst[c]
    });
    Ok((gz, gphi))
}

/// Softmax over each closed-neighborhood group, with per-group max
/// subtraction.
pub fn neighborhood_softmax(logits: &EdgeValues, layout: &NeighborhoodLayout) -> Result<EdgeValues> {
    check_layout("neighborhood_softmax", layout, logits)?;
    let mut values = vec![0.0; logits.len()];
    for i in 0..layout.num_rows() {
        let range = layout.group(i);
        let group = &logits.values[range.clone()];
        let max = group.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let out = &mut values[range];
        let mut total = 0.0;
        for (o, &x) in out.iter_mut().zip(group) {
            *o = (x - max).exp();
            total += *o;
        }
        out.iter_mut().for_each(|o| *o /= total);
    }
    check_finite("neighborhood_softmax", &values)?;
    Ok(EdgeValues { values })
}

/// Backward of [`neighborhood_softmax`] given its output `alpha`.
pub fn neighborhood_softmax_backward(
    alpha: &EdgeValues,
    grad_alpha: &EdgeValues,
    layout: &NeighborhoodLayout,
) -> Result<EdgeValues> {
    check_layout("neighborhood_softmax_backward", layout, alpha)?;
    check_layout("neighborhood_softmax_backward", layout, grad_alpha)?;
    let mut values = vec![0.0; alpha.len()];
    for i in 0..layout.num_rows() {
        let range = layout.group(i);
        let a = &alpha.values[range.clone()];
        let g = &grad_alpha.values[range.clone()];
        let inner = dot(a, g);
        for ((o, &ai), &gi) in values[range].iter_mut().zip(a).zip(g) {
            *o = ai * (gi - inner);
        }
    }
    Ok(EdgeValues { values })
}

/// `out_i = Σ_{j in group(i)} alpha_ij · z_j`.
pub fn weighted_neighbor_sum(
    alpha: &EdgeValues,
    z: &DenseMatrix,
    layout: &NeighborhoodLayout,
) -> Result<DenseMatrix> {
    check_layout("weighted_neighbor_sum", layout, alpha)?;
    if z.rows != layout.num_rows() {
        return Err(NclaError::shape("weighted_neighbor_sum", layout.num_rows(), z.rows));
    }
    let mut out = DenseMatrix::zeros(z.rows, z.cols);
    for_each_row(&mut out, |i, row| {
        for s in layout.group(i) {
            let a = alpha.values[s];
            for (o, &v) in row.iter_mut().zip(z.row(layout.col(s))) {
                *o += a * v;
            }
        }
    });
    Ok(out)
}

/// Gradients of [`weighted_neighbor_sum`] w.r.t. `alpha` and `z`.
pub fn weighted_neighbor_sum_backward(
    alpha: &EdgeValues,
    z: &DenseMatrix,
    grad_out: &DenseMatrix,
    layout: &NeighborhoodLayout,
) -> Result<(EdgeValues, DenseMatrix)> {
    check_layout("weighted_neighbor_sum_backward", layout, alpha)?;
    if grad_out.shape() != z.shape() {
        return Err(NclaError::shape(
            "weighted_neighbor_sum_backward",
            format!("{:?}", z.shape()),
            format!("{:?}", grad_out.shape()),
        ));
    }
    let mut galpha = vec![0.0; alpha.len()];
    for i in 0..layout.num_rows() {
        for s in layout.group(i) {
            galpha[s] = dot(grad_out.row(i), z.row(layout.col(s)));
        }
    }
    // z_j receives alpha_ij · g_i from every i whose group holds j; the
    // layout is symmetric so those are exactly j's own group members.
    let mut gz = DenseMatrix::zeros(z.rows, z.cols);
    for_each_row(&mut gz, |j, row| {
        for s in layout.group(j) {
            let a = alpha.values[layout.reverse_slot(s)];
            for (o, &g) in row.iter_mut().zip(grad_out.row(layout.col(s))) {
                *o += a * g;
            }
        }
    });
    Ok((EdgeValues { values: galpha }, gz))
}

/// Output of [`l2_normalize_rows`]; keeps the norms for the backward pass.
#[derive(Clone, Debug)]
pub struct NormalizedRows {
    pub matrix: DenseMatrix,
    pub norms: Vec<f64>,
    /// Rows that were identically zero and were passed through unchanged.
    pub zero_rows: Vec<usize>,
}

pub fn l2_normalize_rows(x: &DenseMatrix) -> NormalizedRows {
    let mut matrix = x.clone();
    let mut norms = Vec::with_capacity(x.rows);
    let mut zero_rows = Vec::new();
    for r in 0..x.rows {
        let norm = dot(x.row(r), x.row(r)).sqrt();
        norms.push(norm);
        if norm > 0.0 {
            matrix.row_mut(r).iter_mut().for_each(|v| *v /= norm);
        } else {
            zero_rows.push(r);
        }
    }
    NormalizedRows {
        matrix,
        norms,
        zero_rows,
    }
}

/// Backward of [`l2_normalize_rows`]: `(g - n (n·g)) / ‖x‖`; zero rows get
/// zero gradient.
pub fn l2_normalize_rows_backward(normalized: &NormalizedRows, grad: &DenseMatrix) -> Result<DenseMatrix> {
    let n = &normalized.matrix;
    if grad.shape() != n.shape() {
        return Err(NclaError::shape(
            "l2_normalize_rows_backward",
            format!("{:?}", n.shape()),
            format!("{:?}", grad.shape()),
        ));
    }
    let mut out = DenseMatrix::zeros(n.rows, n.cols);
    for r in 0..n.rows {
        let norm = normalized.norms[r];
        if norm == 0.0 {
            continue;
        }
        let nr = n.row(r);
        let gr = grad.row(r);
        let proj = dot(nr, gr);
        for ((o, &ni), &gi) in out.row_mut(r).iter_mut().zip(nr).zip(gr) {
            *o = (gi - ni * proj) / norm;
        }
    }
    Ok(out)
}

/// Denominator floor for [`relative_error`]: below this magnitude the
/// comparison degrades to an absolute one.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-3;

/// `|a - n| / max(|a|, |n|, RELATIVE_ERROR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
    (analytic - numeric).abs() / scale
}

/// A named contiguous block of parameters, reported separately.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamGroup {
    pub name: String,
    pub range: Range<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupCheck {
    pub name: String,
    pub max_relative_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub step: f64,
    pub tolerance: f64,
    pub groups: Vec<GroupCheck>,
    pub max_relative_error: f64,
    pub passed: bool,
}

/// Compares the gradient returned by `f` against central finite
/// differences at `params`, parameter by parameter.
///
/// `f` returns `(value, gradient)`; only the value is used at perturbed
/// points. Pass an empty `groups` slice to report everything as one group.
pub fn gradcheck<F>(f: F, params: &[f64], groups: &[ParamGroup], step: f64, tolerance: f64) -> GradcheckReport
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = f(params);
    assert_eq!(analytic.len(), params.len(), "gradient length must match parameter count");
    let whole;
    let groups = if groups.is_empty() {
        whole = [ParamGroup {
            name: "all".into(),
            range: 0..params.len(),
        }];
        &whole[..]
    } else {
        groups
    };
    let mut probe = params.to_vec();
    let mut reports = Vec::with_capacity(groups.len());
    for group in groups {
        let mut worst = GroupCheck {
            name: group.name.clone(),
            max_relative_error: 0.0,
            worst_index: group.range.start,
            analytic: 0.0,
            numeric: 0.0,
        };
        for idx in group.range.clone() {
            let orig = probe[idx];
            probe[idx] = orig + step;
            let plus = f(&probe).0;
            probe[idx] = orig - step;
            let minus = f(&probe).0;
            probe[idx] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let err = relative_error(analytic[idx], numeric);
            if err > worst.max_relative_error || !err.is_finite() {
                worst = GroupCheck {
                    name: group.name.clone(),
                    max_relative_error: if err.is_finite() { err } else { f64::INFINITY },
                    worst_index: idx,
                    analytic: analytic[idx],
                    numeric,
                };
            }
        }
        reports.push(worst);
    }
    let max_relative_error = reports
        .iter()
        .map(|g| g.max_relative_error)
        .fold(0.0, f64::max);
    GradcheckReport {
        step,
        tolerance,
        groups: reports,
        max_relative_error,
        passed: max_relative_error < tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn path_graph(n: usize) -> Graph {
        let features = DenseMatrix::from_fn(n, 1, |r, _| r as f64);
        Graph::from_edges("path", features, (1..n).map(|i| (i - 1, i)), None).unwrap().0
    }

    #[test]
    fn activations_at_zero() {
        assert_eq!(elu(0.0), 0.0);
        assert_eq!(leaky_relu(0.0, LEAKY_RELU_SLOPE), 0.0);
        assert_eq!(leaky_relu(-1.0, LEAKY_RELU_SLOPE), -0.2);
        assert!((elu(-1.0) - ((-1.0f64).exp() - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn equal_logits_give_uniform_groups() {
        let g = path_graph(5);
        let layout = g.layout();
        let logits = EdgeValues::new(layout, vec![0.7; layout.num_slots()]).unwrap();
        let alpha = neighborhood_softmax(&logits, layout).unwrap();
        for i in 0..5 {
            let group = alpha.group(layout, i);
            for &a in group {
                assert!((a - 1.0 / group.len() as f64).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn softmax_groups_sum_to_one_with_large_logits() {
        let g = path_graph(6);
        let layout = g.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let logits = EdgeValues::new(
            layout,
            (0..layout.num_slots()).map(|_| rng.random_range(-800.0..800.0)).collect(),
        )
        .unwrap();
        let alpha = neighborhood_softmax(&logits, layout).unwrap();
        for i in 0..6 {
            let sum: f64 = alpha.group(layout, i).iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(alpha.group(layout, i).iter().all(|a| (0.0..=1.0).contains(a)));
        }
    }

    #[test]
    fn normalize_rows_unit_norm_and_zero_rows() {
        let x = DenseMatrix::from_rows(&[vec![3.0, 4.0], vec![0.0, 0.0], vec![-1e-3, 2e-3]]).unwrap();
        let n = l2_normalize_rows(&x);
        assert_eq!(n.zero_rows, vec![1]);
        assert_eq!(n.matrix.row(1), &[0.0, 0.0]);
        for r in [0, 2] {
            assert!((dot(n.matrix.row(r), n.matrix.row(r)) - 1.0).abs() < 1e-12);
        }
        let back = l2_normalize_rows_backward(&n, &DenseMatrix::from_fn(3, 2, |_, _| 1.0)).unwrap();
        assert_eq!(back.row(1), &[0.0, 0.0]);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let a = DenseMatrix::zeros(2, 3);
        let b = DenseMatrix::zeros(2, 3);
        assert!(matches!(matmul(&a, &b), Err(NclaError::ShapeMismatch { .. })));
        assert!(matmul_transb(&a, &b).is_ok());
        assert!(DenseMatrix::from_vec(0, 3, vec![]).is_err());
    }

    #[test]
    fn matmul_variants_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_matrix(70, 5, &mut rng);
        let b = random_matrix(4, 5, &mut rng);
        let abt = matmul_transb(&a, &b).unwrap();
        let abt2 = matmul(&a, &b.transpose()).unwrap();
        for (x, y) in abt.data().iter().zip(abt2.data()) {
            assert!((x - y).abs() < 1e-14);
        }
        let c = random_matrix(70, 3, &mut rng);
        let atc = matmul_transa(&a, &c).unwrap();
        let atc2 = matmul(&a.transpose(), &c).unwrap();
        for (x, y) in atc.data().iter().zip(atc2.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn gradcheck_constant_function() {
        let report = gradcheck(|p| (4.2, vec![0.0; p.len()]), &[1.0, -2.0, 3.0], &[], 1e-6, 1e-5);
        assert!(report.passed);
        assert_eq!(report.max_relative_error, 0.0);
    }

    #[test]
    fn gradcheck_sum_elu_of_linear_map() {
        // f(W) = Σ elu(W x_r) over a random 4×3 input
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_matrix(4, 3, &mut rng);
        let w0: Vec<f64> = (0..2 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = |p: &[f64]| {
            let w = DenseMatrix::from_vec(2, 3, p.to_vec()).unwrap();
            let pre = matmul_transb(&x, &w).unwrap();
            let value = pre.data().iter().map(|&v| elu(v)).sum();
            let gpre = pre.map(elu_grad);
            let gw = matmul_transa(&gpre, &x).unwrap();
            (value, gw.into_data())
        };
        let report = gradcheck(f, &w0, &[], 1e-6, 1e-5);
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn gradcheck_catches_wrong_gradient() {
        let report = gradcheck(|p| (p[0] * p[0], vec![3.0 * p[0]]), &[0.5], &[], 1e-6, 1e-5);
        assert!(!report.passed);
    }

    #[test]
    fn sparse_kernels_pass_gradcheck() {
        let features = DenseMatrix::from_fn(5, 1, |r, _| r as f64);
        let g = Graph::from_edges("g", features, [(0, 1), (1, 2), (2, 0), (3, 4), (1, 4)], None)
            .unwrap()
            .0;
        let layout = g.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let width = 3;
        let z0 = random_matrix(5, width, &mut rng);
        let phi: Vec<f64> = (0..2 * width).map(|_| rng.random_range(-1.0..1.0)).collect();
        let probe = random_matrix(5, width, &mut rng);

        // scalar = Σ probe ⊙ ELU(softmax(leaky(scores(z))) · z)
        let f = |p: &[f64]| {
            let z = DenseMatrix::from_vec(5, width, p[..5 * width].to_vec()).unwrap();
            let phi = &p[5 * width..];
            let scores = pair_concat_scores(&z, phi, layout).unwrap();
            let logits = EdgeValues::new(
                layout,
                scores.values().iter().map(|&v| leaky_relu(v, LEAKY_RELU_SLOPE)).collect(),
            )
            .unwrap();
            let alpha = neighborhood_softmax(&logits, layout).unwrap();
            let agg = weighted_neighbor_sum(&alpha, &z, layout).unwrap();
            let value: f64 = agg.data().iter().zip(probe.data()).map(|(&u, &q)| elu(u) * q).sum();

            let gagg = DenseMatrix::from_fn(5, width, |r, c| probe.get(r, c) * elu_grad(agg.get(r, c)));
            let (galpha, mut gz) = weighted_neighbor_sum_backward(&alpha, &z, &gagg, layout).unwrap();
            let glogits = neighborhood_softmax_backward(&alpha, &galpha, layout).unwrap();
            let gscores = EdgeValues::new(
                layout,
                glogits
                    .values()
                    .iter()
                    .zip(scores.values())
                    .map(|(&g, &s)| g * leaky_relu_grad(s, LEAKY_RELU_SLOPE))
                    .collect(),
            )
            .unwrap();
            let (gz2, gphi) = pair_concat_scores_backward(&z, phi, layout, &gscores).unwrap();
            gz.add_assign(&gz2).unwrap();
            let mut grad = gz.into_data();
            grad.extend(gphi);
            (value, grad)
        };
        let mut params = z0.into_data();
        params.extend(phi);
        let report = gradcheck(f, &params, &[], 1e-6, 1e-5);
        assert!(report.passed, "{report:?}");
    }
}
