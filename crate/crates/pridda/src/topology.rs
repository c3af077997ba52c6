//! Gossip network topology: graphs, random matching sampling, Metropolis
//! mixing matrices, and estimation of the mixing parameter beta.
//!
//! At each time step a set of pairwise-disjoint edges (a matching) is sampled
//! uniformly from the supergraph; its endpoints are the active nodes, so the
//! active fraction is the constant `2k/n`. The gossip matrix for the step is
//! built with Metropolis weights over the sampled subgraph: every such matrix
//! is symmetric and doubly stochastic, and inactive nodes keep identity rows.
//!
//! The mixing parameter is the square root of the spectral radius of
//! `E[WᵀW] − 𝟙𝟙ᵀ/n`; [`estimate_beta`] approximates it by Monte Carlo over
//! independently sampled matrices.
//!
//! Nodes are `0..n` everywhere in this crate; file formats and the CLI
//! present them 1-based.

use rand::Rng;
use thiserror::Error;

use crate::exec::{fixed_chunks, ExecMode};
use crate::seeding;

/// Tolerance for the doubly-stochastic and symmetry invariants.
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no matching of size {k} exists in the graph")]
    InfeasibleSampling { k: usize },
    #[error("edge ({0}, {1}) is not in the graph")]
    EdgeNotInGraph(usize, usize),
    #[error("matrix invariant violated: {0}")]
    InvalidMatrix(String),
}

type Result<T> = std::result::Result<T, TopologyError>;

/// An undirected simple graph on nodes `0..node_count`.
#[derive(Debug, Clone)]
pub struct Graph {
    node_count: usize,
    /// Normalized (min, max) pairs, sorted, deduplicated.
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Builds a graph, normalizing edges to (min, max) order.
    ///
    /// Rejects self-loops, duplicates, and endpoints outside `0..node_count`.
    pub fn new(node_count: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if node_count == 0 {
            return Err(TopologyError::InvalidArgument("graph needs at least 1 node".into()));
        }
        let mut norm: Vec<(usize, usize)> = Vec::new();
        for (u, v) in edges {
            if u == v {
                return Err(TopologyError::InvalidArgument(format!("self-loop at node {u}")));
            }
            if u >= node_count || v >= node_count {
                return Err(TopologyError::InvalidArgument(format!(
                    "edge ({u}, {v}) references a node outside 0..{node_count}"
                )));
            }
            norm.push((u.min(v), u.max(v)));
        }
        norm.sort_unstable();
        let before = norm.len();
        norm.dedup();
        if norm.len() != before {
            return Err(TopologyError::InvalidArgument("duplicate edge".into()));
        }
        Ok(Self { node_count, edges: norm })
    }

    /// The complete graph on `n >= 2` nodes, with all n(n-1)/2 edges.
    pub fn complete(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(TopologyError::InvalidArgument(format!(
                "complete graph needs n >= 2, got {n}"
            )));
        }
        let mut edges = Vec::with_capacity(n * (n - 1) / 2);
        for u in 0..n {
            for v in (u + 1)..n {
                edges.push((u, v));
            }
        }
        Ok(Self { node_count: n, edges })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains_edge(&self, u: usize, v: usize) -> bool {
        let key = (u.min(v), u.max(v));
        self.edges.binary_search(&key).is_ok()
    }

    /// Whether a matching of size `k` exists (backtracking search).
    pub fn has_matching_of_size(&self, k: usize) -> bool {
        if k == 0 {
            return true;
        }
        if 2 * k > self.node_count || k > self.edges.len() {
            return false;
        }
        let mut used = vec![false; self.node_count];
        self.extend_matching(0, k, &mut used)
    }

    fn extend_matching(&self, from: usize, need: usize, used: &mut [bool]) -> bool {
        if need == 0 {
            return true;
        }
        for idx in from..self.edges.len() {
            if self.edges.len() - idx < need {
                return false;
            }
            let (u, v) = self.edges[idx];
            if !used[u] && !used[v] {
                used[u] = true;
                used[v] = true;
                if self.extend_matching(idx + 1, need - 1, used) {
                    return true;
                }
                used[u] = false;
                used[v] = false;
            }
        }
        false
    }
}

/// One time step's mixing matrix together with its active-node indicator.
///
/// Invariants (checked by [`GossipMatrix::validate`]): entries in [0, 1], row
/// and column sums equal 1 within [`STOCHASTIC_TOL`], and inactive nodes have
/// identity rows and columns.
#[derive(Debug, Clone)]
pub struct GossipMatrix {
    n: usize,
    /// Row-major n×n weights.
    entries: Vec<f64>,
    active: Vec<bool>,
}

impl GossipMatrix {
    /// Builds a matrix and checks all invariants.
    pub fn new(n: usize, entries: Vec<f64>, active: Vec<bool>) -> Result<Self> {
        let m = Self::new_unchecked(n, entries, active)?;
        m.validate()?;
        Ok(m)
    }

    /// Builds a matrix checking only the shape, not the stochasticity
    /// invariants. Intended for tests that need deliberately invalid inputs.
    pub fn new_unchecked(n: usize, entries: Vec<f64>, active: Vec<bool>) -> Result<Self> {
        if entries.len() != n * n || active.len() != n {
            return Err(TopologyError::InvalidArgument(format!(
                "shape mismatch: n={n}, entries={}, active={}",
                entries.len(),
                active.len()
            )));
        }
        Ok(Self { n, entries, active })
    }

    /// The identity matrix with no active nodes.
    pub fn identity(n: usize) -> Self {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        Self { n, entries, active: vec![false; n] }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    /// Checks entry range, double stochasticity, and inactive-identity rows
    /// and columns at [`STOCHASTIC_TOL`].
    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        for i in 0..n {
            let mut row_sum = 0.0;
            for j in 0..n {
                let w = self.entry(i, j);
                if !(-STOCHASTIC_TOL..=1.0 + STOCHASTIC_TOL).contains(&w) {
                    return Err(TopologyError::InvalidMatrix(format!(
                        "entry ({i}, {j}) = {w} outside [0, 1]"
                    )));
                }
                row_sum += w;
            }
            if (row_sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(TopologyError::InvalidMatrix(format!(
                    "row {i} sums to {row_sum}"
                )));
            }
        }
        for j in 0..n {
            let col_sum: f64 = (0..n).map(|i| self.entry(i, j)).sum();
            if (col_sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(TopologyError::InvalidMatrix(format!(
                    "column {j} sums to {col_sum}"
                )));
            }
        }
        for i in 0..n {
            if !self.active[i] {
                for j in 0..n {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    if (self.entry(i, j) - expect).abs() > STOCHASTIC_TOL
                        || (self.entry(j, i) - expect).abs() > STOCHASTIC_TOL
                    {
                        return Err(TopologyError::InvalidMatrix(format!(
                            "inactive node {i} has a non-identity row or column"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.n;
        for i in 0..n {
            for j in (i + 1)..n {
                if (self.entry(i, j) - self.entry(j, i)).abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// y = W x for a scalar value per node.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| self.row(i).iter().zip(x).map(|(w, v)| w * v).sum())
            .collect()
    }

    /// Accumulates WᵀW into `acc` (row-major n×n), exploiting row sparsity.
    fn accumulate_gram(&self, acc: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(acc.len(), n * n);
        let mut nonzero: Vec<(usize, f64)> = Vec::with_capacity(8);
        for l in 0..n {
            nonzero.clear();
            for j in 0..n {
                let w = self.entry(l, j);
                if w != 0.0 {
                    nonzero.push((j, w));
                }
            }
            for &(a, wa) in &nonzero {
                for &(b, wb) in &nonzero {
                    acc[a * n + b] += wa * wb;
                }
            }
        }
    }
}

/// Samples `k` pairwise node-disjoint edges uniformly among all size-k
/// matchings of the graph.
///
/// Uniformity comes from rejection: a uniform k-subset of the edge set,
/// conditioned on being a matching, is uniform over size-k matchings.
pub fn sample_matching<R: Rng + ?Sized>(
    graph: &Graph,
    k: usize,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    if k == 0 {
        return Err(TopologyError::InvalidArgument("matching size k must be >= 1".into()));
    }
    if !graph.has_matching_of_size(k) {
        return Err(TopologyError::InfeasibleSampling { k });
    }
    Ok(sample_matching_feasible(graph, k, rng))
}

/// Rejection loop; the caller has already established feasibility.
fn sample_matching_feasible<R: Rng + ?Sized>(
    graph: &Graph,
    k: usize,
    rng: &mut R,
) -> Vec<(usize, usize)> {
    let edges = graph.edges();
    let mut used = vec![false; graph.node_count()];
    'draw: loop {
        let picks = rand::seq::index::sample(rng, edges.len(), k);
        used.iter_mut().for_each(|u| *u = false);
        let mut out = Vec::with_capacity(k);
        for idx in picks.iter() {
            let (u, v) = edges[idx];
            if used[u] || used[v] {
                continue 'draw;
            }
            used[u] = true;
            used[v] = true;
            out.push((u, v));
        }
        return out;
    }
}

/// Builds the Metropolis-weight gossip matrix for a sampled edge set.
///
/// Off-diagonal weights are `1/(1 + max(d_i, d_j))` with degrees taken within
/// the sampled subgraph; diagonals absorb the remainder; nodes not incident
/// to a sampled edge keep identity rows and are marked inactive.
pub fn metropolis_matrix(graph: &Graph, sampled_edges: &[(usize, usize)]) -> Result<GossipMatrix> {
    let n = graph.node_count();
    let mut seen: Vec<(usize, usize)> = Vec::with_capacity(sampled_edges.len());
    for &(u, v) in sampled_edges {
        if !graph.contains_edge(u, v) {
            return Err(TopologyError::EdgeNotInGraph(u, v));
        }
        let key = (u.min(v), u.max(v));
        if seen.contains(&key) {
            return Err(TopologyError::InvalidArgument(format!(
                "duplicate sampled edge ({u}, {v})"
            )));
        }
        seen.push(key);
    }

    let mut degree = vec![0usize; n];
    for &(u, v) in &seen {
        degree[u] += 1;
        degree[v] += 1;
    }

    let mut entries = vec![0.0; n * n];
    for &(u, v) in &seen {
        let w = 1.0 / (1.0 + degree[u].max(degree[v]) as f64);
        entries[u * n + v] = w;
        entries[v * n + u] = w;
    }
    let active: Vec<bool> = degree.iter().map(|&d| d > 0).collect();
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| entries[i * n + j]).sum();
        entries[i * n + i] = 1.0 - off;
    }
    GossipMatrix::new_unchecked(n, entries, active)
}

/// A strategy producing one gossip matrix per time step.
pub trait GossipSampler: Send + Sync {
    fn node_count(&self) -> usize;

    /// The constant fraction of active nodes per step.
    fn iota(&self) -> f64;

    fn sample(&self, rng: &mut dyn rand::RngCore) -> Result<GossipMatrix>;
}

/// Uniform size-k matching sampling with Metropolis weights.
#[derive(Debug, Clone)]
pub struct MatchingSampler {
    graph: Graph,
    k: usize,
}

impl MatchingSampler {
    pub fn new(graph: Graph, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(TopologyError::InvalidArgument("matching size k must be >= 1".into()));
        }
        if !graph.has_matching_of_size(k) {
            return Err(TopologyError::InfeasibleSampling { k });
        }
        Ok(Self { graph, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }
}

impl GossipSampler for MatchingSampler {
    fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    fn iota(&self) -> f64 {
        2.0 * self.k as f64 / self.graph.node_count() as f64
    }

    fn sample(&self, rng: &mut dyn rand::RngCore) -> Result<GossipMatrix> {
        let edges = sample_matching_feasible(&self.graph, self.k, rng);
        metropolis_matrix(&self.graph, &edges)
    }
}

/// Deterministic full mixing: the Metropolis matrix over every edge of the
/// supergraph, all nodes active. This is the no-sampling baseline (iota = 1);
/// on the complete graph it equals 𝟙𝟙ᵀ/n.
#[derive(Debug, Clone)]
pub struct FullMixingSampler {
    graph: Graph,
    matrix: GossipMatrix,
}

impl FullMixingSampler {
    pub fn new(graph: Graph) -> Result<Self> {
        let n = graph.node_count();
        let metropolis = metropolis_matrix(&graph, &graph.edges().to_vec())?;
        if n > 1 && metropolis.active_count() != n {
            return Err(TopologyError::InvalidArgument(
                "full mixing requires a graph with no isolated nodes".into(),
            ));
        }
        // Every node performs local updates in the no-sampling baseline; on
        // the single-node graph the matrix is the trivial identity.
        let matrix = GossipMatrix::new_unchecked(n, metropolis.entries, vec![true; n])?;
        Ok(Self { graph, matrix })
    }
}

impl GossipSampler for FullMixingSampler {
    fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    fn iota(&self) -> f64 {
        1.0
    }

    fn sample(&self, _rng: &mut dyn rand::RngCore) -> Result<GossipMatrix> {
        Ok(self.matrix.clone())
    }
}

/// Monte-Carlo estimate of the mixing parameter beta.
#[derive(Debug, Clone, Copy)]
pub struct BetaEstimate {
    /// sqrt of the spectral radius of the averaged WᵀW − 𝟙𝟙ᵀ/n, clipped to [0, 1].
    pub value: f64,
    pub trials: u64,
    /// Batch-means standard error of `value` (0 for a single batch).
    pub standard_error: f64,
}

/// Estimates beta by averaging WᵀW over `trials` independent draws and taking
/// the spectral radius of the mean minus 𝟙𝟙ᵀ/n (power iteration, relative
/// tolerance 1e-10, at most 10⁴ iterations, deterministic start vector).
pub fn estimate_beta<R: Rng + ?Sized>(
    sampler: &dyn GossipSampler,
    trials: u64,
    rng: &mut R,
) -> Result<BetaEstimate> {
    estimate_beta_in(ExecMode::auto(), sampler, trials, rng)
}

/// [`estimate_beta`] with an explicit execution mode. Results are
/// bit-identical across modes.
pub fn estimate_beta_in<R: Rng + ?Sized>(
    mode: ExecMode,
    sampler: &dyn GossipSampler,
    trials: u64,
    rng: &mut R,
) -> Result<BetaEstimate> {
    if trials == 0 {
        return Err(TopologyError::InvalidArgument("trials must be >= 1".into()));
    }
    let n = sampler.node_count();
    let master = rng.next_u64();
    let chunks = fixed_chunks(trials as usize);

    let partials: Vec<Result<Vec<f64>>> =
        crate::exec::map_indexed(mode, &chunks, |_, &(start, len)| {
            let mut acc = vec![0.0; n * n];
            for trial in start..start + len {
                let mut trial_rng = seeding::keyed_rng(master, 0, trial as u64);
                let w = sampler.sample(&mut trial_rng)?;
                w.accumulate_gram(&mut acc);
            }
            Ok(acc)
        });

    let mut total = vec![0.0; n * n];
    let mut batch_values = Vec::with_capacity(chunks.len());
    for (partial, &(_, len)) in partials.into_iter().zip(&chunks) {
        let partial = partial?;
        for (t, p) in total.iter_mut().zip(&partial) {
            *t += p;
        }
        batch_values.push(beta_of_mean_gram(&partial, n, len as f64));
    }

    let value = beta_of_mean_gram(&total, n, trials as f64);
    let standard_error = if batch_values.len() >= 2 {
        let b = batch_values.len() as f64;
        let mean = batch_values.iter().sum::<f64>() / b;
        let var = batch_values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1.0);
        (var / b).sqrt()
    } else {
        0.0
    };

    Ok(BetaEstimate { value, trials, standard_error })
}

fn beta_of_mean_gram(gram_sum: &[f64], n: usize, count: f64) -> f64 {
    let mut b = vec![0.0; n * n];
    let uniform = 1.0 / n as f64;
    for i in 0..n {
        for j in 0..n {
            b[i * n + j] = gram_sum[i * n + j] / count - uniform;
        }
    }
    let rho = spectral_radius(&b, n, 1e-10, 10_000);
    rho.max(0.0).sqrt().clamp(0.0, 1.0)
}

/// Largest-magnitude eigenvalue of a symmetric matrix by power iteration.
///
/// Deterministic start vector (ramp with the mean removed); converges when
/// the Rayleigh quotient changes by at most `rel_tol` relatively.
pub fn spectral_radius(matrix: &[f64], n: usize, rel_tol: f64, max_iter: usize) -> f64 {
    assert_eq!(matrix.len(), n * n);
    let mut v: Vec<f64> = (0..n).map(|i| (i + 1) as f64).collect();
    let mean = v.iter().sum::<f64>() / n as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return 0.0;
    }
    v.iter_mut().for_each(|x| *x /= norm);

    let mut w = vec![0.0; n];
    let mut prev = f64::INFINITY;
    for _ in 0..max_iter {
        for i in 0..n {
            w[i] = matrix[i * n..(i + 1) * n].iter().zip(&v).map(|(m, x)| m * x).sum();
        }
        let rayleigh: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        let wnorm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if wnorm == 0.0 {
            return 0.0;
        }
        for i in 0..n {
            v[i] = w[i] / wnorm;
        }
        let lambda = rayleigh.abs();
        if (lambda - prev).abs() <= rel_tol * lambda.max(f64::MIN_POSITIVE) {
            return lambda;
        }
        prev = lambda;
    }
    prev
}

/// Exact beta for uniform size-k matching sampling on the complete graph:
/// sqrt((n − 1 − k)/(n − 1)).
pub fn analytic_beta_complete_matching(n: usize, k: usize) -> Result<f64> {
    if n < 2 || k == 0 || 2 * k > n {
        return Err(TopologyError::InvalidArgument(format!(
            "need n >= 2 and 1 <= k <= n/2, got n={n}, k={k}"
        )));
    }
    Ok((((n - 1 - k) as f64) / ((n - 1) as f64)).sqrt())
}
