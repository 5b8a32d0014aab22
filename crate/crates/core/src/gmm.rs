//! Diagonal-covariance Gaussian mixture models trained with EM.
//!
//! A model may carry a per-dimension z-score normalization learned from its training
//! data. Scoring applies the normalization and adds the log-Jacobian, so
//! [`Gmm::log_likelihood`] is always a density over the original feature space and
//! scores from differently normalized models are directly comparable.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const GMM_SCHEMA_VERSION: u32 = 1;

const LN_2PI: f64 = 1.837_877_066_409_345_5; // ln(2π)
const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;
/// Components whose total responsibility falls below this are re-seeded.
const COLLAPSE_MASS: f64 = 1e-8;
const MAX_LLOYD_ITERS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmConfig {
    pub n_components: usize,
    pub max_iters: usize,
    /// Stop once the relative log-likelihood improvement drops below this.
    pub tol: f64,
    pub seed: u64,
    /// Variance floor as a fraction of each dimension's global data variance.
    pub variance_floor_factor: f64,
    /// Z-score each dimension on the training data before fitting.
    pub normalize: bool,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            n_components: 8,
            max_iters: 100,
            tol: 1e-5,
            seed: 0,
            variance_floor_factor: 1e-3,
            normalize: true,
        }
    }
}

impl EmConfig {
    pub fn with_components(mut self, n_components: usize) -> Self {
        self.n_components = n_components;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_components == 0 || self.max_iters == 0 {
            return Err(Error::Config("n_components and max_iters must be positive".into()));
        }
        if !(self.tol > 0.0) || !(self.variance_floor_factor > 0.0) {
            return Err(Error::Config("tol and variance_floor_factor must be positive".into()));
        }
        Ok(())
    }
}

/// Per-dimension affine map `z = (x - mean) / scale` applied before scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalization {
    fn fit(data: &[f64], n: usize, dim: usize) -> Self {
        let mut mean = vec![0.0; dim];
        for row in data.chunks_exact(dim) {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; dim];
        for row in data.chunks_exact(dim) {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let scale = var
            .iter()
            .map(|v| {
                let s = (v / n as f64).sqrt();
                if s > 0.0 && s.is_finite() {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for (((o, x), m), s) in out.iter_mut().zip(x).zip(&self.mean).zip(&self.scale) {
            *o = (x - m) / s;
        }
    }

    fn log_jacobian(&self) -> f64 {
        -self.scale.iter().map(|s| s.ln()).sum::<f64>()
    }
}

/// A Gaussian mixture density with diagonal covariances. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GmmDocument", into = "GmmDocument")]
pub struct Gmm {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
    normalization: Option<Normalization>,
    // cached: ln w_c - 0.5 Σ_d ln(2π v_cd)
    log_norms: Vec<f64>,
    inv_vars: Vec<Vec<f64>>,
    log_jacobian: f64,
}

impl Gmm {
    pub fn new(
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        variances: Vec<Vec<f64>>,
        normalization: Option<Normalization>,
    ) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::Persistence("mixture has no components".into()));
        }
        if means.len() != k || variances.len() != k {
            return Err(Error::Persistence(format!(
                "{k} weights but {} means and {} variance rows",
                means.len(),
                variances.len()
            )));
        }
        let dim = means[0].len();
        if dim == 0 {
            return Err(Error::Persistence("zero-dimensional mixture".into()));
        }
        if means.iter().chain(&variances).any(|row| row.len() != dim) {
            return Err(Error::Persistence("ragged mean or variance rows".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Persistence("weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::Persistence(format!("weights sum to {total}, expected 1")));
        }
        if means.iter().flatten().any(|m| !m.is_finite()) {
            return Err(Error::Persistence("non-finite mean".into()));
        }
        if variances.iter().flatten().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Persistence("variances must be finite and positive".into()));
        }
        if let Some(n) = &normalization {
            if n.mean.len() != dim || n.scale.len() != dim {
                return Err(Error::Persistence("normalization length differs from dim".into()));
            }
            if n.mean.iter().any(|m| !m.is_finite()) || n.scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                return Err(Error::Persistence("invalid normalization vectors".into()));
            }
        }
        let log_norms = weights
            .iter()
            .zip(&variances)
            .map(|(w, var)| w.ln() - 0.5 * var.iter().map(|v| LN_2PI + v.ln()).sum::<f64>())
            .collect();
        let inv_vars = variances
            .iter()
            .map(|var| var.iter().map(|v| 1.0 / v).collect())
            .collect();
        let log_jacobian = normalization.as_ref().map_or(0.0, Normalization::log_jacobian);
        Ok(Self {
            weights,
            means,
            variances,
            normalization,
            log_norms,
            inv_vars,
            log_jacobian,
        })
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn variances(&self) -> &[Vec<f64>] {
        &self.variances
    }

    pub fn normalization(&self) -> Option<&Normalization> {
        self.normalization.as_ref()
    }

    /// Component means mapped back to the original feature space.
    pub fn means_in_feature_space(&self) -> Vec<Vec<f64>> {
        match &self.normalization {
            None => self.means.clone(),
            Some(n) => self
                .means
                .iter()
                .map(|m| m.iter().zip(&n.mean).zip(&n.scale).map(|((z, mu), s)| z * s + mu).collect())
                .collect(),
        }
    }

    /// `log p(f | model)` computed with max-subtraction over components.
    pub fn log_likelihood(&self, f: &[f64]) -> Result<f64> {
        if f.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: f.len(),
            });
        }
        Ok(self.score(f))
    }

    /// Unchecked variant of [`Gmm::log_likelihood`]; `f` must have `dim()` entries.
    pub(crate) fn score(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.dim());
        match &self.normalization {
            None => self.score_normalized(f),
            Some(n) => {
                let mut z = [0.0; 32];
                if f.len() <= z.len() {
                    n.apply_into(f, &mut z[..f.len()]);
                    self.score_normalized(&z[..f.len()]) + self.log_jacobian
                } else {
                    let mut z = vec![0.0; f.len()];
                    n.apply_into(f, &mut z);
                    self.score_normalized(&z) + self.log_jacobian
                }
            }
        }
    }

    fn component_log_densities(&self, z: &[f64], out: &mut [f64]) {
        for (c, slot) in out.iter_mut().enumerate() {
            let quad: f64 = z
                .iter()
                .zip(&self.means[c])
                .zip(&self.inv_vars[c])
                .map(|((x, m), iv)| (x - m) * (x - m) * iv)
                .sum();
            *slot = self.log_norms[c] - 0.5 * quad;
        }
    }

    fn score_normalized(&self, z: &[f64]) -> f64 {
        let mut buf = [0.0; 64];
        if self.n_components() <= buf.len() {
            let terms = &mut buf[..self.n_components()];
            self.component_log_densities(z, terms);
            log_sum_exp(terms)
        } else {
            let mut terms = vec![0.0; self.n_components()];
            self.component_log_densities(z, &mut terms);
            log_sum_exp(&terms)
        }
    }

    pub fn to_document(&self) -> GmmDocument {
        self.clone().into()
    }

    pub fn from_document(doc: GmmDocument) -> Result<Self> {
        doc.try_into()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("gmm serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Persistence(e.to_string()))
    }
}

/// `log Σ exp(x_i)`, shifted by the maximum term.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Versioned on-disk form of a [`Gmm`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmmDocument {
    pub schema_version: u32,
    pub dim: usize,
    pub n_components: usize,
    pub normalization: Option<Normalization>,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

impl From<Gmm> for GmmDocument {
    fn from(g: Gmm) -> Self {
        GmmDocument {
            schema_version: GMM_SCHEMA_VERSION,
            dim: g.dim(),
            n_components: g.n_components(),
            normalization: g.normalization,
            weights: g.weights,
            means: g.means,
            variances: g.variances,
        }
    }
}

impl TryFrom<GmmDocument> for Gmm {
    type Error = Error;

    fn try_from(doc: GmmDocument) -> Result<Self> {
        if doc.schema_version != GMM_SCHEMA_VERSION {
            return Err(Error::Persistence(format!(
                "unsupported gmm schema_version {} (supported: {GMM_SCHEMA_VERSION})",
                doc.schema_version
            )));
        }
        let g = Gmm::new(doc.weights, doc.means, doc.variances, doc.normalization)?;
        if g.dim() != doc.dim || g.n_components() != doc.n_components {
            return Err(Error::Persistence(format!(
                "header says dim {} x {} components, payload is {} x {}",
                doc.dim,
                doc.n_components,
                g.dim(),
                g.n_components()
            )));
        }
        Ok(g)
    }
}

impl std::fmt::Display for Gmm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Gmm({} components, dim {})", self.n_components(), self.dim())
    }
}

/// Row-major copy of the data with its shape.
struct Matrix {
    data: Vec<f64>,
    n: usize,
    dim: usize,
}

impl Matrix {
    fn from_rows<T: AsRef<[f64]>>(rows: &[T]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InsufficientData("no training rows".into()));
        }
        let dim = rows[0].as_ref().len();
        if dim == 0 {
            return Err(Error::InsufficientData("zero-dimensional rows".into()));
        }
        let mut data = Vec::with_capacity(n * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("training data contains non-finite values".into()));
            }
            data.extend_from_slice(row);
        }
        Ok(Self { data, n, dim })
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn kmeans_on(m: &Matrix, k: usize, seed: u64) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    if k == 0 {
        return Err(Error::Config("k must be positive".into()));
    }
    if m.n < k {
        return Err(Error::InsufficientData(format!(
            "{} rows for {k} clusters",
            m.n
        )));
    }
    let mut rng = rng::seeded(seed);

    // D²-weighted (k-means++) seeding over distinct row indices
    let mut chosen = vec![false; m.n];
    let first = rng.random_range(0..m.n);
    chosen[first] = true;
    let mut centers = vec![m.row(first).to_vec()];
    let mut d2: Vec<f64> = (0..m.n).map(|i| squared_distance(m.row(i), &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = (0..m.n).filter(|&i| !chosen[i]).map(|i| d2[i]).sum();
        let pick = if total > 0.0 && total.is_finite() {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for i in (0..m.n).filter(|&i| !chosen[i] && d2[i] > 0.0) {
                pick = Some(i);
                target -= d2[i];
                if target <= 0.0 {
                    break;
                }
            }
            pick.expect("positive total implies a candidate")
        } else {
            let remaining: Vec<usize> = (0..m.n).filter(|&i| !chosen[i]).collect();
            remaining[rng.random_range(0..remaining.len())]
        };
        chosen[pick] = true;
        let c = m.row(pick).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(squared_distance(m.row(i), &c));
        }
        centers.push(c);
    }

    let mut assignment = vec![usize::MAX; m.n];
    for _ in 0..MAX_LLOYD_ITERS {
        let mut changed = false;
        for (i, slot) in assignment.iter_mut().enumerate() {
            let (j, _) = nearest(m.row(i), &centers);
            if *slot != j {
                *slot = j;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; m.dim]; k];
        let mut counts = vec![0usize; k];
        for (i, &j) in assignment.iter().enumerate() {
            counts[j] += 1;
            for (s, x) in sums[j].iter_mut().zip(m.row(i)) {
                *s += x;
            }
        }
        for j in 0..k {
            // an empty cluster keeps its previous center
            if counts[j] > 0 {
                centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
    }
    for (i, slot) in assignment.iter_mut().enumerate() {
        *slot = nearest(m.row(i), &centers).0;
    }
    Ok((centers, assignment))
}

/// k-means++ seeding refined by at most 20 Lloyd iterations.
pub fn kmeans_init<T: AsRef<[f64]>>(data: &[T], k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if data.len() < k {
        return Err(Error::InsufficientData(format!("{} rows for {k} clusters", data.len())));
    }
    let m = Matrix::from_rows(data)?;
    Ok(kmeans_on(&m, k, seed)?.0)
}

/// Diagnostics from one EM run.
#[derive(Debug, Clone, PartialEq)]
pub struct FitTrace {
    /// Training-set log-likelihood (in the normalized space) after each E-step.
    pub log_likelihoods: Vec<f64>,
    pub converged: bool,
    /// Number of component re-seeds after responsibility collapse.
    pub reseeds: usize,
}

pub fn fit_gmm<T: AsRef<[f64]>>(data: &[T], config: &EmConfig) -> Result<Gmm> {
    fit_gmm_traced(data, config).map(|(g, _)| g)
}

/// EM fit returning the per-iteration log-likelihood trace.
///
/// Initial parameters come from k-means: hard-assignment weights, means and
/// per-cluster variances. Each iteration runs a log-domain E-step, then updates
/// weights, means and variances (floored at `variance_floor_factor` times the
/// per-dimension data variance). A component whose responsibility mass collapses is
/// re-seeded at the worst-explained training row.
pub fn fit_gmm_traced<T: AsRef<[f64]>>(data: &[T], config: &EmConfig) -> Result<(Gmm, FitTrace)> {
    config.validate()?;
    let k = config.n_components;
    if data.len() < k {
        return Err(Error::InsufficientData(format!(
            "{} rows for a {k}-component mixture",
            data.len()
        )));
    }
    let mut m = Matrix::from_rows(data)?;
    let (n, dim) = (m.n, m.dim);

    let normalization = config.normalize.then(|| Normalization::fit(&m.data, n, dim));
    if let Some(norm) = &normalization {
        let mut z = vec![0.0; dim];
        for row in m.data.chunks_exact_mut(dim) {
            norm.apply_into(row, &mut z);
            row.copy_from_slice(&z);
        }
    }

    let global_mean: Vec<f64> = (0..dim)
        .map(|d| (0..n).map(|i| m.row(i)[d]).sum::<f64>() / n as f64)
        .collect();
    let global_var: Vec<f64> = (0..dim)
        .map(|d| {
            let v = (0..n).map(|i| (m.row(i)[d] - global_mean[d]).powi(2)).sum::<f64>() / n as f64;
            if v > 0.0 {
                v
            } else {
                1.0
            }
        })
        .collect();
    let floor: Vec<f64> = global_var.iter().map(|v| v * config.variance_floor_factor).collect();

    let (centers, assignment) = kmeans_on(&m, k, config.seed)?;
    let mut counts = vec![0usize; k];
    let mut var_sums = vec![vec![0.0; dim]; k];
    for (i, &j) in assignment.iter().enumerate() {
        counts[j] += 1;
        for (d, x) in m.row(i).iter().enumerate() {
            var_sums[j][d] += (x - centers[j][d]).powi(2);
        }
    }
    let mut weights: Vec<f64> = counts.iter().map(|&c| c.max(1) as f64).collect();
    let wsum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= wsum);
    let mut means = centers;
    let mut variances: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            (0..dim)
                .map(|d| {
                    let v = if counts[j] > 1 {
                        var_sums[j][d] / counts[j] as f64
                    } else {
                        global_var[d]
                    };
                    v.max(floor[d])
                })
                .collect()
        })
        .collect();

    let mut trace = FitTrace {
        log_likelihoods: Vec::new(),
        converged: false,
        reseeds: 0,
    };
    let mut resp = vec![0.0; n * k];
    let mut point_ll = vec![0.0; n];
    let mut log_norms = vec![0.0; k];
    let mut inv_vars = vec![vec![0.0; dim]; k];

    for _ in 0..config.max_iters {
        // E-step
        for j in 0..k {
            log_norms[j] = weights[j].ln()
                - 0.5 * variances[j].iter().map(|v| LN_2PI + v.ln()).sum::<f64>();
            for (iv, v) in inv_vars[j].iter_mut().zip(&variances[j]) {
                *iv = 1.0 / v;
            }
        }
        let mut total_ll = 0.0;
        for i in 0..n {
            let x = m.row(i);
            let r = &mut resp[i * k..(i + 1) * k];
            for j in 0..k {
                let quad: f64 = x
                    .iter()
                    .zip(&means[j])
                    .zip(&inv_vars[j])
                    .map(|((x, mu), iv)| (x - mu) * (x - mu) * iv)
                    .sum();
                r[j] = log_norms[j] - 0.5 * quad;
            }
            let lse = log_sum_exp(r);
            for v in r.iter_mut() {
                *v = (*v - lse).exp();
            }
            point_ll[i] = lse;
            total_ll += lse;
        }
        if let Some(&prev) = trace.log_likelihoods.last() {
            trace.log_likelihoods.push(total_ll);
            if (total_ll - prev) / prev.abs().max(f64::MIN_POSITIVE) < config.tol {
                trace.converged = true;
                break;
            }
        } else {
            trace.log_likelihoods.push(total_ll);
        }

        // M-step
        let mut mass = vec![0.0; k];
        let mut new_means = vec![vec![0.0; dim]; k];
        for i in 0..n {
            let x = m.row(i);
            for j in 0..k {
                let r = resp[i * k + j];
                mass[j] += r;
                for (s, v) in new_means[j].iter_mut().zip(x) {
                    *s += r * v;
                }
            }
        }
        let mut collapsed: Vec<usize> = Vec::new();
        for j in 0..k {
            if mass[j] < COLLAPSE_MASS {
                collapsed.push(j);
            } else {
                new_means[j].iter_mut().for_each(|s| *s /= mass[j]);
            }
        }
        let mut new_vars = vec![vec![0.0; dim]; k];
        for i in 0..n {
            let x = m.row(i);
            for j in 0..k {
                let r = resp[i * k + j];
                if r == 0.0 {
                    continue;
                }
                for ((s, v), mu) in new_vars[j].iter_mut().zip(x).zip(&new_means[j]) {
                    *s += r * (v - mu) * (v - mu);
                }
            }
        }
        for j in 0..k {
            if mass[j] >= COLLAPSE_MASS {
                for (v, fl) in new_vars[j].iter_mut().zip(&floor) {
                    *v = (*v / mass[j]).max(*fl);
                }
                weights[j] = mass[j] / n as f64;
            }
        }
        if !collapsed.is_empty() {
            let mut worst: Vec<usize> = (0..n).collect();
            worst.sort_by(|&a, &b| point_ll[a].total_cmp(&point_ll[b]).then(a.cmp(&b)));
            for (slot, &j) in collapsed.iter().enumerate() {
                let at = worst[slot % n];
                new_means[j] = m.row(at).to_vec();
                new_vars[j] = global_var.iter().zip(&floor).map(|(v, f)| v.max(*f)).collect();
                weights[j] = 1.0 / n as f64;
                trace.reseeds += 1;
            }
        }
        let wsum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= wsum);
        means = new_means;
        variances = new_vars;
    }

    // release the normalized copy before building the model
    m.data = Vec::new();
    let gmm = Gmm::new(weights, means, variances, normalization)?;
    Ok((gmm, trace))
}

/// Density of a single diagonal Gaussian; used by tests and diagnostics.
pub fn diagonal_gaussian_density(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(var)
        .map(|((x, m), v)| (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * PI * v).sqrt())
        .product()
}
