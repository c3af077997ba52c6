//! Empirical-risk-minimization instances: hinge-loss SVM with l1/l2/ball
//! regularizers, LIBSVM ingestion, synthetic data generation, and even random
//! partitioning across nodes.
//!
//! Feature vectors are sparse; decision variables are dense. Dot products
//! iterate the sparse side. Feature indices are 0-based internally; the
//! LIBSVM text format is 1-based.

use std::io::BufRead;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, ProblemError>;

/// A sparse vector with strictly increasing 0-based indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVector {
    pub fn empty() -> Self {
        Self { indices: Vec::new(), values: Vec::new() }
    }

    pub fn new(indices: Vec<u32>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(ProblemError::InvalidArgument(
                "index/value length mismatch in sparse vector".into(),
            ));
        }
        if !indices.windows(2).all(|w| w[0] < w[1]) {
            return Err(ProblemError::InvalidArgument(
                "sparse indices must be strictly increasing".into(),
            ));
        }
        Ok(Self { indices, values })
    }

    pub fn from_dense(dense: &[f64]) -> Self {
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for (i, &v) in dense.iter().enumerate() {
            if v != 0.0 {
                indices.push(i as u32);
                values.push(v);
            }
        }
        Self { indices, values }
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Largest index, or `None` when empty.
    pub fn max_index(&self) -> Option<u32> {
        self.indices.last().copied()
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * dense[i as usize]).sum()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// dense += scale * self
    pub fn add_scaled_into(&self, scale: f64, dense: &mut [f64]) {
        for (i, v) in self.iter() {
            dense[i as usize] += scale * v;
        }
    }

    pub fn scaled(&self, scale: f64) -> Self {
        Self {
            indices: self.indices.clone(),
            values: self.values.iter().map(|v| scale * v).collect(),
        }
    }
}

/// One labeled example; labels are exactly ±1.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: SparseVector,
    pub label: f64,
}

impl Sample {
    pub fn new(features: SparseVector, label: f64) -> Result<Self> {
        if label != 1.0 && label != -1.0 {
            return Err(ProblemError::InvalidArgument(format!(
                "label must be +1 or -1, got {label}"
            )));
        }
        Ok(Self { features, label })
    }
}

/// The samples owned by one node.
#[derive(Debug, Clone)]
pub struct LocalDataset {
    pub owner: usize,
    pub samples: Vec<Sample>,
}

impl LocalDataset {
    pub fn new(owner: usize, samples: Vec<Sample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(ProblemError::InvalidArgument(format!(
                "local dataset for node {owner} is empty"
            )));
        }
        Ok(Self { owner, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// The regularization term h shared across nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularizer {
    /// h(x) = lambda * ||x||_1
    L1 { lambda: f64 },
    /// h(x) = (mu / 2) * ||x||^2, strongly convex with modulus mu.
    L2Half { mu: f64 },
    /// Indicator of the Euclidean ball of the given radius.
    Ball { radius: f64 },
    /// h = 0.
    Zero,
}

impl Regularizer {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Regularizer::L1 { lambda } => lambda > 0.0,
            Regularizer::L2Half { mu } => mu > 0.0,
            Regularizer::Ball { radius } => radius > 0.0,
            Regularizer::Zero => true,
        };
        if ok {
            Ok(())
        } else {
            Err(ProblemError::InvalidArgument(format!(
                "regularizer parameter must be positive: {self:?}"
            )))
        }
    }

    /// Strong-convexity modulus: mu for the squared-norm kind, 0 otherwise.
    pub fn modulus(&self) -> f64 {
        match *self {
            Regularizer::L2Half { mu } => mu,
            _ => 0.0,
        }
    }

    /// h(x), possibly +inf for the ball indicator.
    pub fn value(&self, x: &[f64]) -> f64 {
        match *self {
            Regularizer::L1 { lambda } => lambda * x.iter().map(|v| v.abs()).sum::<f64>(),
            Regularizer::L2Half { mu } => 0.5 * mu * x.iter().map(|v| v * v).sum::<f64>(),
            Regularizer::Ball { radius } => {
                let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm <= radius {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Regularizer::Zero => 0.0,
        }
    }
}

/// A full distributed ERM instance.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    locals: Vec<LocalDataset>,
    regularizer: Regularizer,
    lipschitz: f64,
    dimension: usize,
}

impl ProblemInstance {
    /// Builds an instance; `lipschitz` and `dimension` default to the maximum
    /// feature norm and max index + 1 when omitted.
    pub fn new(
        locals: Vec<LocalDataset>,
        regularizer: Regularizer,
        lipschitz: Option<f64>,
        dimension: Option<usize>,
    ) -> Result<Self> {
        regularizer.validate()?;
        if locals.is_empty() {
            return Err(ProblemError::InvalidArgument("no local datasets".into()));
        }
        let mut max_norm = 0.0f64;
        let mut max_index: Option<u32> = None;
        for local in &locals {
            if local.samples.is_empty() {
                return Err(ProblemError::InvalidArgument(format!(
                    "local dataset for node {} is empty",
                    local.owner
                )));
            }
            for s in &local.samples {
                max_norm = max_norm.max(s.features.norm());
                max_index = max_index.max(s.features.max_index());
            }
        }
        let needed_dim = max_index.map_or(0, |i| i as usize + 1);
        let dimension = dimension.unwrap_or(needed_dim);
        if dimension < needed_dim {
            return Err(ProblemError::DimensionMismatch(format!(
                "declared dimension {dimension} but features reach index {needed_dim}"
            )));
        }
        let lipschitz = match lipschitz {
            Some(l) => {
                if l + 1e-12 < max_norm {
                    return Err(ProblemError::InvalidArgument(format!(
                        "lipschitz {l} below max feature norm {max_norm}"
                    )));
                }
                l
            }
            None => max_norm,
        };
        Ok(Self { locals, regularizer, lipschitz, dimension })
    }

    pub fn locals(&self) -> &[LocalDataset] {
        &self.locals
    }

    pub fn node_count(&self) -> usize {
        self.locals.len()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn regularizer(&self) -> &Regularizer {
        &self.regularizer
    }

    /// q = min_i q_i, the smallest local sample count.
    pub fn min_samples_per_node(&self) -> usize {
        self.locals.iter().map(|l| l.len()).min().unwrap_or(0)
    }

    /// F(x) = (1/n) Σ_i (1/q_i) Σ_j hinge + h(x), evaluated over all data.
    pub fn objective(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dimension {
            return Err(ProblemError::DimensionMismatch(format!(
                "x has length {}, instance dimension is {}",
                x.len(),
                self.dimension
            )));
        }
        let mut loss = 0.0;
        for local in &self.locals {
            let mut node_loss = 0.0;
            for s in &local.samples {
                node_loss += hinge_loss(x, s);
            }
            loss += node_loss / local.len() as f64;
        }
        Ok(loss / self.locals.len() as f64 + self.regularizer.value(x))
    }
}

/// max{0, 1 − y⟨C, x⟩}.
pub fn hinge_loss(x: &[f64], sample: &Sample) -> f64 {
    (1.0 - sample.label * sample.features.dot(x)).max(0.0)
}

/// Subgradient of the hinge loss at x: −y·C when the margin is violated
/// (1 − y⟨C, x⟩ > 0), the zero vector otherwise (ties at the kink resolve
/// to 0).
pub fn hinge_subgradient(x: &[f64], sample: &Sample) -> Result<SparseVector> {
    if let Some(max_index) = sample.features.max_index() {
        if max_index as usize >= x.len() {
            return Err(ProblemError::DimensionMismatch(format!(
                "sample index {max_index} out of range for x of length {}",
                x.len()
            )));
        }
    }
    let margin = 1.0 - sample.label * sample.features.dot(x);
    if margin > 0.0 {
        Ok(sample.features.scaled(-sample.label))
    } else {
        Ok(SparseVector::empty())
    }
}

/// A valid hinge Lipschitz constant: the maximum Euclidean feature norm.
pub fn lipschitz_bound(samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(ProblemError::InvalidArgument("lipschitz_bound of empty sample list".into()));
    }
    Ok(samples.iter().map(|s| s.features.norm()).fold(0.0, f64::max))
}

/// Parses LIBSVM text: lines of `label idx:val idx:val ...` with 1-based
/// strictly increasing indices; labels +1/1/-1/0 (0 maps to −1). Comments
/// (`#`) are rejected. Returns the samples and the dimension (max index, or
/// the expected dimension when given).
pub fn parse_libsvm(
    reader: impl BufRead,
    expected_dimension: Option<usize>,
) -> Result<(Vec<Sample>, usize)> {
    let mut samples = Vec::new();
    let mut dim = expected_dimension.unwrap_or(0);
    for (lineno, line) in reader.lines().enumerate() {
        let line_num = lineno + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.contains('#') {
            return Err(ProblemError::Parse {
                line: line_num,
                msg: "comments are not allowed".into(),
            });
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().ok_or_else(|| ProblemError::Parse {
            line: line_num,
            msg: "missing label".into(),
        })?;
        let label = match label_tok {
            "+1" | "1" => 1.0,
            "-1" | "0" => -1.0,
            other => {
                return Err(ProblemError::Parse {
                    line: line_num,
                    msg: format!("invalid label token {other:?}"),
                })
            }
        };
        let mut indices: Vec<u32> = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        for tok in tokens {
            let (idx_s, val_s) = tok.split_once(':').ok_or_else(|| ProblemError::Parse {
                line: line_num,
                msg: format!("malformed feature token {tok:?}"),
            })?;
            let idx: u32 = idx_s.parse().map_err(|_| ProblemError::Parse {
                line: line_num,
                msg: format!("invalid feature index {idx_s:?}"),
            })?;
            if idx == 0 {
                return Err(ProblemError::Parse {
                    line: line_num,
                    msg: "feature indices are 1-based".into(),
                });
            }
            if let Some(&prev) = indices.last() {
                // prev is 0-based, idx still 1-based.
                if idx - 1 <= prev {
                    return Err(ProblemError::Parse {
                        line: line_num,
                        msg: format!("nonincreasing feature index {idx}"),
                    });
                }
            }
            if let Some(limit) = expected_dimension {
                if idx as usize > limit {
                    return Err(ProblemError::Parse {
                        line: line_num,
                        msg: format!("feature index {idx} exceeds declared dimension {limit}"),
                    });
                }
            }
            let val: f64 = val_s.parse().map_err(|_| ProblemError::Parse {
                line: line_num,
                msg: format!("invalid feature value {val_s:?}"),
            })?;
            if !val.is_finite() {
                return Err(ProblemError::Parse {
                    line: line_num,
                    msg: format!("non-finite feature value {val_s:?}"),
                });
            }
            indices.push(idx - 1);
            values.push(val);
            if expected_dimension.is_none() {
                dim = dim.max(idx as usize);
            }
        }
        let features = SparseVector::new(indices, values).map_err(|e| ProblemError::Parse {
            line: line_num,
            msg: e.to_string(),
        })?;
        samples.push(Sample { features, label });
    }
    Ok((samples, dim))
}

/// Writes samples in LIBSVM text form (LF line endings, 1-based indices,
/// shortest round-trip float formatting). Inverse of [`parse_libsvm`].
pub fn write_libsvm(out: &mut impl std::io::Write, samples: &[Sample]) -> Result<()> {
    for s in samples {
        let label = if s.label > 0.0 { "+1" } else { "-1" };
        write!(out, "{label}")?;
        for (i, v) in s.features.iter() {
            write!(out, " {}:{}", i + 1, v)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Generates a linearly separated synthetic binary dataset.
///
/// Draws a unit ground-truth direction and spherical Gaussian features,
/// labels by the sign of the inner product, shifts each point by `margin`
/// along ±the direction, and caps feature norms at 1 (so the hinge Lipschitz
/// constant is at most 1). Returns the samples and the direction.
pub fn generate_synthetic_with_truth<R: Rng + ?Sized>(
    n_samples: usize,
    dimension: usize,
    margin: f64,
    rng: &mut R,
) -> (Vec<Sample>, Vec<f64>) {
    assert!(dimension >= 1, "dimension must be >= 1");
    let mut truth: Vec<f64> = (0..dimension).map(|_| rng.sample(StandardNormal)).collect();
    let norm = truth.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        truth[0] = 1.0;
    } else {
        truth.iter_mut().for_each(|v| *v /= norm);
    }

    let mut samples = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let mut x: Vec<f64> = (0..dimension).map(|_| rng.sample(StandardNormal)).collect();
        let inner: f64 = x.iter().zip(&truth).map(|(a, b)| a * b).sum();
        let label = if inner >= 0.0 { 1.0 } else { -1.0 };
        for (xi, ui) in x.iter_mut().zip(&truth) {
            *xi += margin * label * ui;
        }
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1.0 {
            x.iter_mut().for_each(|v| *v /= norm);
        }
        samples.push(Sample { features: SparseVector::from_dense(&x), label });
    }
    (samples, truth)
}

/// [`generate_synthetic_with_truth`] without the ground-truth direction.
pub fn generate_synthetic<R: Rng + ?Sized>(
    n_samples: usize,
    dimension: usize,
    margin: f64,
    rng: &mut R,
) -> Vec<Sample> {
    generate_synthetic_with_truth(n_samples, dimension, margin, rng).0
}

/// Randomly permutes the samples and splits them contiguously into
/// `n_nodes` parts whose sizes differ by at most one.
pub fn partition_even<R: Rng + ?Sized>(
    mut samples: Vec<Sample>,
    n_nodes: usize,
    rng: &mut R,
) -> Result<Vec<LocalDataset>> {
    if n_nodes == 0 {
        return Err(ProblemError::InvalidArgument("n_nodes must be >= 1".into()));
    }
    if samples.len() < n_nodes {
        return Err(ProblemError::InvalidArgument(format!(
            "cannot split {} samples across {n_nodes} nodes",
            samples.len()
        )));
    }
    samples.shuffle(rng);
    let base = samples.len() / n_nodes;
    let extra = samples.len() % n_nodes;
    let mut out = Vec::with_capacity(n_nodes);
    let mut rest = samples;
    for owner in 0..n_nodes {
        let take = base + usize::from(owner < extra);
        let remainder = rest.split_off(take);
        out.push(LocalDataset { owner, samples: rest });
        rest = remainder;
    }
    debug_assert!(rest.is_empty());
    Ok(out)
}
