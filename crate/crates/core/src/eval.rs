//! Label-scarce node classification on frozen embeddings.
//!
//! Splits take exactly `c` training nodes per class. The probe is a
//! multinomial logistic regression on columns standardized with
//! training-split statistics, minimizing mean cross-entropy plus
//! `λ/2 · ‖θ‖²` (weights and bias) with L-BFGS and Armijo backtracking.
//! With a validation set, λ is the grid value with the best validation
//! accuracy (first one on ties); without, λ = `default_lambda`.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diff::{dot, DenseMatrix};
use crate::error::{NclaError, Result};
use crate::graph::Graph;
use crate::seed::rng_for;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ValidationRule {
    #[default]
    None,
    FixedTotal(usize),
    PerClass(usize),
}

impl fmt::Display for ValidationRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationRule::None => f.write_str("none"),
            ValidationRule::FixedTotal(n) => write!(f, "total:{n}"),
            ValidationRule::PerClass(m) => write!(f, "per-class:{m}"),
        }
    }
}

impl FromStr for ValidationRule {
    type Err = NclaError;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || NclaError::InvalidConfig(format!("bad validation rule {s:?} (want none | total:<n> | per-class:<m>)"));
        if s == "none" {
            return Ok(ValidationRule::None);
        }
        if let Some(n) = s.strip_prefix("total:") {
            return n.parse().map(ValidationRule::FixedTotal).map_err(|_| bad());
        }
        if let Some(m) = s.strip_prefix("per-class:") {
            return m.parse().map(ValidationRule::PerClass).map_err(|_| bad());
        }
        Err(bad())
    }
}

impl TryFrom<String> for ValidationRule {
    type Error = NclaError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ValidationRule> for String {
    fn from(v: ValidationRule) -> String {
        v.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub labels_per_class: usize,
    pub validation: ValidationRule,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

fn labels_of(g: &Graph) -> Result<(&[usize], usize)> {
    match (g.labels(), g.num_classes()) {
        (Some(l), Some(c)) => Ok((l, c)),
        _ => Err(NclaError::MissingLabels),
    }
}

/// Stratified split; every list is sorted ascending.
pub fn sample_split(g: &Graph, spec: &SplitSpec) -> Result<Split> {
    let (labels, num_classes) = labels_of(g)?;
    if spec.labels_per_class == 0 {
        return Err(NclaError::InvalidConfig("labels_per_class must be >= 1".into()));
    }
    let mut rng = rng_for(spec.seed, "split");
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (node, &l) in labels.iter().enumerate() {
        by_class[l].push(node);
    }
    let per_class_val = match spec.validation {
        ValidationRule::PerClass(m) => m,
        _ => 0,
    };
    let mut train = Vec::new();
    let mut validation = Vec::new();
    let mut rest = Vec::new();
    for (class, nodes) in by_class.iter_mut().enumerate() {
        let required = spec.labels_per_class + per_class_val;
        if nodes.len() < required {
            return Err(NclaError::InsufficientClass {
                class,
                available: nodes.len(),
                required,
            });
        }
        nodes.shuffle(&mut rng);
        train.extend_from_slice(&nodes[..spec.labels_per_class]);
        validation.extend_from_slice(&nodes[spec.labels_per_class..required]);
        rest.extend_from_slice(&nodes[required..]);
    }
    if let ValidationRule::FixedTotal(n) = spec.validation {
        if rest.len() < n {
            return Err(NclaError::InvalidConfig(format!(
                "validation needs {n} nodes, only {} remain after training selection",
                rest.len()
            )));
        }
        rest.sort_unstable();
        rest.shuffle(&mut rng);
        validation.extend(rest.drain(..n));
    }
    train.sort_unstable();
    validation.sort_unstable();
    rest.sort_unstable();
    Ok(Split {
        train,
        validation,
        test: rest,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRegConfig {
    pub reg_grid: Vec<f64>,
    /// λ used when the split has no validation nodes.
    pub default_lambda: f64,
    pub tolerance: f64,
    pub max_iter: usize,
}

pub const DEFAULT_REG_GRID: [f64; 6] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0];

impl Default for LogRegConfig {
    fn default() -> Self {
        Self {
            reg_grid: DEFAULT_REG_GRID.to_vec(),
            default_lambda: 1e-2,
            tolerance: 1e-6,
            max_iter: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Column mean and population std over `rows`; zero-variance columns get scale 1.
    pub fn fit(x: &DenseMatrix, rows: &[usize]) -> Self {
        let d = x.cols();
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for &r in rows {
            for (m, &v) in mean.iter_mut().zip(x.row(r)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for &r in rows {
            for ((s, &v), &m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((&v, &m), &s)| (v - m) / s)
            .collect()
    }
}

/// Fitted probe. `weights` is C × D on standardized inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegression {
    pub weights: DenseMatrix,
    pub bias: Vec<f64>,
    pub standardizer: Standardizer,
    pub lambda: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    /// Objective after each accepted iteration, starting at θ = 0.
    pub objective_trace: Vec<f64>,
}

impl LogisticRegression {
    pub fn num_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn decision(&self, raw_row: &[f64]) -> Vec<f64> {
        let x = self.standardizer.transform_row(raw_row);
        (0..self.num_classes())
            .map(|c| dot(self.weights.row(c), &x) + self.bias[c])
            .collect()
    }

    pub fn predict_row(&self, raw_row: &[f64]) -> usize {
        argmax(&self.decision(raw_row))
    }

    pub fn predict(&self, h: &DenseMatrix, rows: &[usize]) -> Vec<usize> {
        rows.iter().map(|&r| self.predict_row(h.row(r))).collect()
    }

    pub fn accuracy(&self, h: &DenseMatrix, labels: &[usize], rows: &[usize]) -> f64 {
        if rows.is_empty() {
            return 0.0;
        }
        let hits = rows.iter().filter(|&&r| self.predict_row(h.row(r)) == labels[r]).count();
        hits as f64 / rows.len() as f64
    }
}

/// Index of the largest entry; lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Mean cross-entropy plus `λ/2 ‖θ‖²` and its gradient. `theta` holds the
/// C × D weights row-major followed by C biases.
pub fn logreg_objective(theta: &[f64], x: &[Vec<f64>], y: &[usize], num_classes: usize, lambda: f64) -> (f64, Vec<f64>) {
    let d = x.first().map_or(0, Vec::len);
    let n = x.len() as f64;
    let (w, b) = theta.split_at(num_classes * d);
    let mut grad = vec![0.0; theta.len()];
    let mut loss = 0.0;
    let mut probs = vec![0.0; num_classes];
    for (xi, &yi) in x.iter().zip(y) {
        for c in 0..num_classes {
            probs[c] = dot(&w[c * d..(c + 1) * d], xi) + b[c];
        }
        let max = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for p in probs.iter_mut() {
            *p = (*p - max).exp();
            total += *p;
        }
        loss += total.ln() + max - (dot(&w[yi * d..(yi + 1) * d], xi) + b[yi]);
        for c in 0..num_classes {
            let coef = (probs[c] / total - if c == yi { 1.0 } else { 0.0 }) / n;
            for (gw, &xv) in grad[c * d..(c + 1) * d].iter_mut().zip(xi) {
                *gw += coef * xv;
            }
            grad[num_classes * d + c] += coef;
        }
    }
    let reg: f64 = theta.iter().map(|t| t * t).sum();
    for (g, &t) in grad.iter_mut().zip(theta) {
        *g += lambda * t;
    }
    (loss / n + 0.5 * lambda * reg, grad)
}

const LBFGS_MEMORY: usize = 10;

/// L-BFGS with Armijo backtracking on standardized rows `x`.
fn solve(x: &[Vec<f64>], y: &[usize], num_classes: usize, lambda: f64, tol: f64, max_iter: usize) -> (Vec<f64>, usize, f64, bool, Vec<f64>) {
    let d = x.first().map_or(0, Vec::len);
    let dim = num_classes * (d + 1);
    let mut theta = vec![0.0; dim];
    let (mut f, mut g) = logreg_objective(&theta, x, y, num_classes, lambda);
    let mut trace = vec![f];
    let mut mem: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::with_capacity(LBFGS_MEMORY);
    let norm = |v: &[f64]| dot(v, v).sqrt();
    let mut iterations = 0;
    while iterations < max_iter {
        if norm(&g) <= tol {
            return (theta, iterations, norm(&g), true, trace);
        }
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(mem.len());
        for (s, yv, rho) in mem.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(yv).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, yv, _)) = mem.last() {
            let gamma = dot(s, yv) / dot(yv, yv);
            q.iter_mut().for_each(|qi| *qi *= gamma);
        }
        for ((s, yv, rho), a) in mem.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(yv, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.into_iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            mem.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&g, &dir);
        }
        let mut step = if mem.is_empty() { (1.0 / norm(&g)).min(1.0) } else { 1.0 };
        let accepted = loop {
            let trial: Vec<f64> = theta.iter().zip(&dir).map(|(t, di)| t + step * di).collect();
            let (ft, gt) = logreg_objective(&trial, x, y, num_classes, lambda);
            if ft <= f + 1e-4 * step * slope {
                break Some((trial, ft, gt));
            }
            step *= 0.5;
            if step < 1e-20 {
                break None;
            }
        };
        let Some((next, fn_, gn)) = accepted else {
            break;
        };
        let s: Vec<f64> = next.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 {
            if mem.len() == LBFGS_MEMORY {
                mem.remove(0);
            }
            mem.push((s, yv, 1.0 / sy));
        }
        theta = next;
        f = fn_;
        g = gn;
        trace.push(f);
        iterations += 1;
    }
    let gnorm = norm(&g);
    (theta, iterations, gnorm, gnorm <= tol, trace)
}

/// Fits the probe on `train` rows of `h` with a fixed λ.
pub fn fit_logreg_with_lambda(
    h: &DenseMatrix,
    labels: &[usize],
    num_classes: usize,
    train: &[usize],
    lambda: f64,
    cfg: &LogRegConfig,
) -> Result<LogisticRegression> {
    if !h.is_finite() {
        return Err(NclaError::NonFinite { op: "fit_logreg" });
    }
    let mut present = vec![false; num_classes];
    train.iter().for_each(|&r| present[labels[r]] = true);
    if let Some(class) = present.iter().position(|&p| !p) {
        return Err(NclaError::DegenerateSplit { class });
    }
    let standardizer = Standardizer::fit(h, train);
    let x: Vec<Vec<f64>> = train.iter().map(|&r| standardizer.transform_row(h.row(r))).collect();
    let y: Vec<usize> = train.iter().map(|&r| labels[r]).collect();
    let (theta, iterations, grad_norm, converged, objective_trace) =
        solve(&x, &y, num_classes, lambda, cfg.tolerance, cfg.max_iter);
    if !converged {
        log::warn!("logistic regression (λ={lambda}) stopped after {iterations} iterations, gradient norm {grad_norm:.3e}");
    }
    let d = h.cols();
    let weights = DenseMatrix::from_vec(num_classes, d, theta[..num_classes * d].to_vec())?;
    Ok(LogisticRegression {
        weights,
        bias: theta[num_classes * d..].to_vec(),
        standardizer,
        lambda,
        iterations,
        grad_norm,
        converged,
        objective_trace,
    })
}

/// Fits the probe, choosing λ on the validation nodes when there are any.
pub fn fit_logreg(h: &DenseMatrix, g: &Graph, split: &Split, cfg: &LogRegConfig) -> Result<LogisticRegression> {
    let (labels, num_classes) = labels_of(g)?;
    if h.rows() != g.num_nodes() {
        return Err(NclaError::shape("fit_logreg", g.num_nodes(), h.rows()));
    }
    if split.validation.is_empty() || cfg.reg_grid.is_empty() {
        return fit_logreg_with_lambda(h, labels, num_classes, &split.train, cfg.default_lambda, cfg);
    }
    let mut best: Option<(f64, LogisticRegression)> = None;
    for &lambda in &cfg.reg_grid {
        let model = fit_logreg_with_lambda(h, labels, num_classes, &split.train, lambda, cfg)?;
        let acc = model.accuracy(h, labels, &split.validation);
        if best.as_ref().is_none_or(|(b, _)| acc > *b) {
            best = Some((acc, model));
        }
    }
    Ok(best.expect("non-empty grid").1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitOutcome {
    pub seed: u64,
    pub accuracy: f64,
    pub lambda: f64,
    pub train_size: usize,
    pub validation_size: usize,
    pub test_size: usize,
    pub converged: bool,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub splits: Vec<SplitOutcome>,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator); 0 for one split.
    pub std: f64,
}

impl EvalResult {
    pub fn from_splits(splits: Vec<SplitOutcome>) -> Self {
        let accs: Vec<f64> = splits.iter().map(|s| s.accuracy).collect();
        let (mean, std) = mean_and_sample_std(&accs);
        Self { splits, mean, std }
    }

    pub fn accuracies(&self) -> Vec<f64> {
        self.splits.iter().map(|s| s.accuracy).collect()
    }
}

pub fn mean_and_sample_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs `n_splits` splits with seeds `spec.seed .. spec.seed + n_splits`.
pub fn evaluate(h: &DenseMatrix, g: &Graph, spec: &SplitSpec, n_splits: usize, cfg: &LogRegConfig) -> Result<EvalResult> {
    let (labels, _) = labels_of(g)?;
    if n_splits == 0 {
        return Err(NclaError::InvalidConfig("n_splits must be >= 1".into()));
    }
    let splits = (0..n_splits as u64)
        .into_par_iter()
        .map(|offset| -> Result<SplitOutcome> {
            let split_spec = SplitSpec {
                seed: spec.seed + offset,
                ..spec.clone()
            };
            let split = sample_split(g, &split_spec)?;
            let model = fit_logreg(h, g, &split, cfg)?;
            Ok(SplitOutcome {
                seed: split_spec.seed,
                accuracy: model.accuracy(h, labels, &split.test),
                lambda: model.lambda,
                train_size: split.train.len(),
                validation_size: split.validation.len(),
                test_size: split.test.len(),
                converged: model.converged,
                grad_norm: model.grad_norm,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalResult::from_splits(splits))
}
