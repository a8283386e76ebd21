//! Core value types: data matrices, Gaussian mixtures, cluster groupings and
//! the records produced by the misclassification-probability machinery.
//!
//! All types are immutable once built. Matrices are stored row-major and
//! serialized to JSON as nested arrays.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, GaussianFactor};

/// Weight-sum tolerance for a valid mixture.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Inputs this close to summing to one are renormalized rather than rejected.
pub const WEIGHT_RENORMALIZE_TOL: f64 = 1e-6;

fn to_rows(values: &[f64], cols: usize) -> Vec<Vec<f64>> {
    if cols == 0 {
        return Vec::new();
    }
    values.chunks(cols).map(<[f64]>::to_vec).collect()
}

fn from_rows(rows: Vec<Vec<f64>>, what: &str) -> std::result::Result<(usize, usize, Vec<f64>), String> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    let mut out = Vec::with_capacity(n * p);
    for (i, r) in rows.into_iter().enumerate() {
        if r.len() != p {
            return Err(format!("{what}: row {i} has {} entries, expected {p}", r.len()));
        }
        out.extend(r);
    }
    Ok((n, p, out))
}

/// Formats a number with up to 12 significant decimals, trailing zeros trimmed.
pub(crate) fn short_num(x: f64) -> String {
    let s = format!("{x:.12}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

// ---------------------------------------------------------------------------
// DataMatrix

/// `n` observations of `p` real features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "DataMatrixRepr", try_from = "DataMatrixRepr")]
pub struct DataMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    feature_names: Option<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct DataMatrixRepr {
    rows: usize,
    cols: usize,
    values: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature_names: Option<Vec<String>>,
}

impl From<DataMatrix> for DataMatrixRepr {
    fn from(m: DataMatrix) -> Self {
        Self {
            rows: m.rows,
            cols: m.cols,
            values: to_rows(&m.values, m.cols),
            feature_names: m.feature_names,
        }
    }
}

impl TryFrom<DataMatrixRepr> for DataMatrix {
    type Error = String;
    fn try_from(r: DataMatrixRepr) -> std::result::Result<Self, String> {
        let (n, p, values) = from_rows(r.values, "values")?;
        if n != r.rows || p != r.cols {
            return Err(format!("declared {}x{} but values are {n}x{p}", r.rows, r.cols));
        }
        DataMatrix::new(n, p, values)
            .and_then(|m| match r.feature_names {
                Some(names) => m.with_feature_names(names),
                None => Ok(m),
            })
            .map_err(|e| e.to_string())
    }
}

impl DataMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("data matrix needs at least one row and one column"));
        }
        if values.len() != rows * cols {
            return Err(Error::invalid(format!(
                "expected {} values for a {rows}x{cols} matrix, got {}",
                rows * cols,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value at row {}, column {}",
                i / cols + 1,
                i % cols + 1
            )));
        }
        Ok(Self {
            rows,
            cols,
            values,
            feature_names: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let (n, p, values) = from_rows(rows.to_vec(), "rows").map_err(Error::InvalidArgument)?;
        Self::new(n, p, values)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.cols {
            return Err(Error::invalid(format!(
                "{} feature names for {} columns",
                names.len(),
                self.cols
            )));
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks(self.cols)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.iter_rows().map(|r| r[j]).collect()
    }

    /// Name of column `j`, falling back to its 1-based position.
    pub fn column_label(&self, j: usize) -> String {
        match &self.feature_names {
            Some(names) => names[j].clone(),
            None => format!("column {}", j + 1),
        }
    }

    /// Rows selected by `idx`, in that order.
    pub fn select_rows(&self, idx: &[usize]) -> DataMatrix {
        let mut values = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        DataMatrix {
            rows: idx.len(),
            cols: self.cols,
            values,
            feature_names: self.feature_names.clone(),
        }
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.cols];
        for r in self.iter_rows() {
            for (a, b) in m.iter_mut().zip(r) {
                *a += b;
            }
        }
        m.iter_mut().for_each(|a| *a /= self.rows as f64);
        m
    }

    /// Per-column population (divide by n) variances.
    pub fn column_variances(&self) -> Vec<f64> {
        let mean = self.column_means();
        let mut v = vec![0.0; self.cols];
        for r in self.iter_rows() {
            for j in 0..self.cols {
                let d = r[j] - mean[j];
                v[j] += d * d;
            }
        }
        v.iter_mut().for_each(|a| *a /= self.rows as f64);
        v
    }

    /// Canonical bytes used for hashing.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.values.len());
        out.extend((self.rows as u64).to_le_bytes());
        out.extend((self.cols as u64).to_le_bytes());
        for v in &self.values {
            out.extend(v.to_le_bytes());
        }
        out
    }
}

// ---------------------------------------------------------------------------
// GaussianComponent

/// Multivariate normal density with a lazily cached Cholesky factor.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(into = "ComponentRepr", try_from = "ComponentRepr")]
pub struct GaussianComponent {
    mean: Vec<f64>,
    covariance: Vec<f64>,
    factor: OnceLock<Option<GaussianFactor>>,
}

#[derive(Serialize, Deserialize)]
struct ComponentRepr {
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
}

impl From<GaussianComponent> for ComponentRepr {
    fn from(c: GaussianComponent) -> Self {
        let p = c.mean.len();
        Self {
            covariance: to_rows(&c.covariance, p),
            mean: c.mean,
        }
    }
}

impl TryFrom<ComponentRepr> for GaussianComponent {
    type Error = String;
    fn try_from(r: ComponentRepr) -> std::result::Result<Self, String> {
        let (n, p, cov) = from_rows(r.covariance, "covariance")?;
        if n != p || p != r.mean.len() {
            return Err(format!(
                "covariance is {n}x{p} but mean has length {}",
                r.mean.len()
            ));
        }
        Ok(GaussianComponent::new_unchecked(r.mean, cov))
    }
}

impl PartialEq for GaussianComponent {
    fn eq(&self, other: &Self) -> bool {
        self.mean == other.mean && self.covariance == other.covariance
    }
}

impl GaussianComponent {
    /// Builds a component, rejecting covariances that are not symmetric
    /// positive definite.
    pub fn new(mean: Vec<f64>, covariance: Vec<f64>) -> Result<Self> {
        let c = Self::new_unchecked(mean, covariance);
        let issues = c.issues(0);
        if issues.is_empty() {
            Ok(c)
        } else {
            Err(Error::Validation(ValidationReport { issues }))
        }
    }

    /// Builds a component without any checks; see [`validate`].
    pub fn new_unchecked(mean: Vec<f64>, covariance: Vec<f64>) -> Self {
        Self {
            mean,
            covariance,
            factor: OnceLock::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Row-major `p x p` covariance.
    pub fn covariance(&self) -> &[f64] {
        &self.covariance
    }

    pub fn factor(&self) -> Option<&GaussianFactor> {
        self.factor
            .get_or_init(|| {
                let p = self.mean.len();
                if self.covariance.len() != p * p {
                    return None;
                }
                GaussianFactor::new(&self.covariance, p)
            })
            .as_ref()
    }

    fn expect_factor(&self) -> &GaussianFactor {
        self.factor()
            .expect("covariance must be positive definite; validate the model first")
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let p = self.dim();
        let mut diff = vec![0.0; p];
        let mut scratch = vec![0.0; p];
        self.expect_factor()
            .log_density(&self.mean, x, &mut diff, &mut scratch)
    }

    /// Draws `mean + L z` for a standard-normal vector `z`.
    pub fn transform_standard(&self, z: &[f64], out: &mut [f64]) {
        self.expect_factor().transform(&self.mean, z, out);
    }

    fn issues(&self, index: usize) -> Vec<Issue> {
        let p = self.mean.len();
        let mut out = Vec::new();
        if self.covariance.len() != p * p {
            out.push(Issue::new(
                IssueKind::Dimension,
                Some(index),
                format!("component {index}: covariance has {} entries, expected {}", self.covariance.len(), p * p),
            ));
            return out;
        }
        if self.mean.iter().chain(&self.covariance).any(|v| !v.is_finite()) {
            out.push(Issue::new(
                IssueKind::NonFinite,
                Some(index),
                format!("component {index}: non-finite parameter"),
            ));
            return out;
        }
        let mut symmetric = true;
        for i in 0..p {
            for j in 0..i {
                let (a, b) = (self.covariance[i * p + j], self.covariance[j * p + i]);
                if (a - b).abs() > 1e-10 * a.abs().max(b.abs()).max(1.0) {
                    symmetric = false;
                }
            }
        }
        if !symmetric {
            out.push(Issue::new(
                IssueKind::NotSymmetric,
                Some(index),
                format!("component {index}: covariance not symmetric"),
            ));
        } else if self.factor().is_none() {
            let ev = linalg::symmetric_eigenvalues(&self.covariance, p);
            out.push(Issue::new(
                IssueKind::NotPositiveDefinite,
                Some(index),
                format!(
                    "component {index}: covariance not positive definite (smallest eigenvalue {})",
                    short_num(ev[0])
                ),
            ));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// MixtureModel

/// Finite Gaussian mixture `P(x) = sum_k alpha_k p(x | k)`.
///
/// Deserialization only checks shapes; run [`validate`] on loaded models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr")]
pub struct MixtureModel {
    kappa: usize,
    weights: Vec<f64>,
    components: Vec<GaussianComponent>,
    p: usize,
}

#[derive(Deserialize)]
struct ModelRepr {
    weights: Vec<f64>,
    components: Vec<GaussianComponent>,
    kappa: Option<usize>,
    p: Option<usize>,
}

impl TryFrom<ModelRepr> for MixtureModel {
    type Error = String;
    fn try_from(r: ModelRepr) -> std::result::Result<Self, String> {
        let m = MixtureModel::new_unchecked(r.weights, r.components);
        if m.components.len() != m.kappa {
            return Err(format!("{} weights but {} components", m.kappa, m.components.len()));
        }
        if r.kappa.is_some_and(|k| k != m.kappa) {
            return Err(format!("declared kappa does not match {} components", m.kappa));
        }
        if let Some(c) = m.components.iter().find(|c| c.dim() != m.p) {
            return Err(format!("component dimensions differ ({} and {})", m.p, c.dim()));
        }
        if r.p.is_some_and(|p| p != m.p) {
            return Err(format!("declared p does not match dimension {}", m.p));
        }
        Ok(m)
    }
}

impl MixtureModel {
    /// Builds and validates a mixture. Weights within
    /// [`WEIGHT_RENORMALIZE_TOL`] of summing to one are renormalized.
    pub fn new(weights: Vec<f64>, components: Vec<GaussianComponent>) -> Result<Self> {
        Self::new_unchecked(weights, components).normalized()
    }

    pub fn new_unchecked(weights: Vec<f64>, components: Vec<GaussianComponent>) -> Self {
        let p = components.first().map_or(0, GaussianComponent::dim);
        Self {
            kappa: weights.len(),
            weights,
            components,
            p,
        }
    }

    /// Applies the renormalization rule, then validates.
    pub fn normalized(mut self) -> Result<Self> {
        let sum: f64 = self.weights.iter().sum();
        let off = (sum - 1.0).abs();
        if off > WEIGHT_SUM_TOL && off <= WEIGHT_RENORMALIZE_TOL && sum > 0.0 {
            log::warn!("mixture weights sum to {sum}; renormalizing");
            self.weights.iter_mut().for_each(|w| *w /= sum);
        }
        validate(&self).map_err(Error::Validation)?;
        Ok(self)
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn component(&self, k: usize) -> &GaussianComponent {
        &self.components[k]
    }

    /// Log of the mixture density `P(x)`.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.components)
            .map(|(w, c)| w.ln() + c.log_density(x))
            .collect();
        log_sum_exp(&terms)
    }

    /// Reorders components; `order[new] = old`.
    pub fn permuted(&self, order: &[usize]) -> MixtureModel {
        MixtureModel {
            kappa: self.kappa,
            weights: order.iter().map(|&o| self.weights[o]).collect(),
            components: order.iter().map(|&o| self.components[o].clone()).collect(),
            p: self.p,
        }
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    Empty,
    Dimension,
    NonFinite,
    NonPositiveWeight,
    WeightSum,
    NotSymmetric,
    NotPositiveDefinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub kind: IssueKind,
    /// Component index the issue refers to, if any.
    pub index: Option<usize>,
    pub message: String,
}

impl Issue {
    fn new(kind: IssueKind, index: Option<usize>, message: String) -> Self {
        Self { kind, index, message }
    }
}

/// Every invariant violation found in a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn has(&self, kind: IssueKind) -> bool {
        self.issues.iter().any(|i| i.kind == kind)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msgs: Vec<&str> = self.issues.iter().map(|i| i.message.as_str()).collect();
        f.write_str(&msgs.join("; "))
    }
}

/// Checks every mixture invariant and reports all violations.
pub fn validate(model: &MixtureModel) -> std::result::Result<(), ValidationReport> {
    let mut issues = Vec::new();
    if model.weights.is_empty() || model.components.is_empty() {
        issues.push(Issue::new(IssueKind::Empty, None, "mixture has no components".into()));
    }
    if model.kappa != model.weights.len() || model.kappa != model.components.len() {
        issues.push(Issue::new(
            IssueKind::Dimension,
            None,
            format!(
                "kappa {} but {} weights and {} components",
                model.kappa,
                model.weights.len(),
                model.components.len()
            ),
        ));
    }
    if model.p == 0 {
        issues.push(Issue::new(IssueKind::Dimension, None, "dimension p must be at least 1".into()));
    }
    for (k, &w) in model.weights.iter().enumerate() {
        if !w.is_finite() {
            issues.push(Issue::new(IssueKind::NonFinite, Some(k), format!("weight {k} is not finite")));
        } else if w <= 0.0 {
            issues.push(Issue::new(
                IssueKind::NonPositiveWeight,
                Some(k),
                format!("weight {k} is {} (must be > 0)", short_num(w)),
            ));
        }
    }
    let sum: f64 = model.weights.iter().sum();
    if sum.is_finite() && (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        issues.push(Issue::new(IssueKind::WeightSum, None, format!("weights sum {}", short_num(sum))));
    }
    for (k, c) in model.components.iter().enumerate() {
        if c.dim() != model.p {
            issues.push(Issue::new(
                IssueKind::Dimension,
                Some(k),
                format!("component {k} has dimension {}, expected {}", c.dim(), model.p),
            ));
            continue;
        }
        issues.extend(c.issues(k));
    }
    if issues.is_empty() {
        Ok(())
    } else {
        Err(ValidationReport { issues })
    }
}

// ---------------------------------------------------------------------------
// ClusterConfiguration and Partition

/// Grouping of mixture components into `K` clusters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ConfigRepr")]
pub struct ClusterConfiguration {
    assignment: Vec<usize>,
    #[serde(rename = "K")]
    k: usize,
}

#[derive(Deserialize)]
struct ConfigRepr {
    assignment: Vec<usize>,
    #[serde(rename = "K")]
    k: Option<usize>,
}

impl TryFrom<ConfigRepr> for ClusterConfiguration {
    type Error = String;
    fn try_from(r: ConfigRepr) -> std::result::Result<Self, String> {
        let c = ClusterConfiguration::new(r.assignment).map_err(|e| e.to_string())?;
        match r.k {
            Some(k) if k != c.k => Err(format!("declared K={k} but assignment uses {} clusters", c.k)),
            _ => Ok(c),
        }
    }
}

fn check_surjective(labels: &[usize], what: &str) -> Result<usize> {
    if labels.is_empty() {
        return Err(Error::invalid(format!("{what} is empty")));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut seen = vec![false; k];
    labels.iter().for_each(|&l| seen[l] = true);
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::invalid(format!(
            "{what} is not onto 0..{}: cluster {missing} is empty",
            k - 1
        )));
    }
    Ok(k)
}

impl ClusterConfiguration {
    pub fn new(assignment: Vec<usize>) -> Result<Self> {
        let k = check_surjective(&assignment, "assignment")?;
        Ok(Self { assignment, k })
    }

    /// Every component its own cluster.
    pub fn singletons(kappa: usize) -> Self {
        Self {
            assignment: (0..kappa).collect(),
            k: kappa,
        }
    }

    /// All components in one cluster.
    pub fn single(kappa: usize) -> Self {
        Self {
            assignment: vec![0; kappa],
            k: 1,
        }
    }

    /// Relabels clusters by order of first appearance.
    pub fn from_groups(assignment: &[usize]) -> Result<Self> {
        Self::new(compact_labels(assignment))
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn kappa(&self) -> usize {
        self.assignment.len()
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&c| self.assignment[c] == cluster)
            .collect()
    }

    /// Merges clusters `i` and `j` into the lower index; higher labels shift
    /// down by one.
    pub fn merge(&self, i: usize, j: usize) -> Result<Self> {
        if i == j || i >= self.k || j >= self.k {
            return Err(Error::invalid(format!("cannot merge clusters {i} and {j} of {}", self.k)));
        }
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        let assignment = self
            .assignment
            .iter()
            .map(|&a| match a {
                a if a == hi => lo,
                a if a > hi => a - 1,
                a => a,
            })
            .collect();
        Self::new(assignment)
    }

    /// Cluster weights: sums of component weights per cluster.
    pub fn cluster_weights(&self, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        for (c, &a) in self.assignment.iter().enumerate() {
            out[a] += weights[c];
        }
        out
    }

    pub fn check_against(&self, model: &MixtureModel) -> Result<()> {
        if self.assignment.len() != model.kappa() {
            return Err(Error::invalid(format!(
                "configuration covers {} components but the model has {}",
                self.assignment.len(),
                model.kappa()
            )));
        }
        Ok(())
    }

    /// Reorders components; `order[new] = old`, matching [`MixtureModel::permuted`].
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            assignment: order.iter().map(|&o| self.assignment[o]).collect(),
            k: self.k,
        }
    }
}

pub fn compact_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// Hard clustering of `n` observations into `K` non-empty groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PartitionRepr")]
pub struct Partition {
    labels: Vec<usize>,
    #[serde(rename = "K")]
    k: usize,
}

#[derive(Deserialize)]
struct PartitionRepr {
    labels: Vec<usize>,
    #[serde(rename = "K")]
    k: Option<usize>,
}

impl TryFrom<PartitionRepr> for Partition {
    type Error = String;
    fn try_from(r: PartitionRepr) -> std::result::Result<Self, String> {
        let p = Partition::new(r.labels).map_err(|e| e.to_string())?;
        match r.k {
            Some(k) if k != p.k => Err(format!("declared K={k} but labels use {} clusters", p.k)),
            _ => Ok(p),
        }
    }
}

impl Partition {
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        let k = check_surjective(&labels, "labels")?;
        Ok(Self { labels, k })
    }

    /// Relabels by order of first appearance, so any label set is accepted.
    pub fn from_labels(labels: &[usize]) -> Self {
        let labels = compact_labels(labels);
        let k = labels.iter().max().map_or(0, |m| m + 1);
        Self { labels, k }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        self.labels.iter().for_each(|&l| s[l] += 1);
        s
    }
}

// ---------------------------------------------------------------------------
// Estimates and merge records

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub m_samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeStep {
    /// Node ids of the merged clusters: leaves are components `0..kappa`,
    /// the cluster created by step `t` is `kappa + t`.
    pub cluster_pair: (usize, usize),
    pub delta_pmc: f64,
    pub pmc_before: f64,
    pub pmc_after: f64,
    pub new_cluster_members: BTreeSet<usize>,
}

/// Ordered record of hierarchical merges with exact bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeTrace {
    pub kappa: usize,
    pub initial_pmc: McEstimate,
    pub steps: Vec<MergeStep>,
    #[serde(rename = "final_K")]
    pub final_k: usize,
}

impl MergeTrace {
    /// Bookkept misclassification probability after the last step.
    pub fn final_pmc(&self) -> f64 {
        self.steps
            .last()
            .map_or(self.initial_pmc.value, |s| s.pmc_after)
    }

    pub fn is_complete(&self) -> bool {
        self.final_k == 1
    }
}
