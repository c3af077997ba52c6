//! Suboptimality and consensus summaries, and the theoretical bound
//! envelopes overlaid on empirical traces.
//!
//! With M = ι·L²/2 + 2·√ι·L²/(1−β), the error envelope for the ergodic
//! auxiliary iterate after t steps is
//!
//!     A_t⁻¹·[ γ_t·d(x*)/ι
//!             + Σ_{τ≤t} a_τ²/(μιA_τ + γ_τ) · (M + mισ²/2 + 2√(mι)Lσ/(1−β)) ]
//!
//! and the consensus deviations from the auxiliary sequence obey
//!
//!     mean:        a_t(L + √m·σ)√ι / ((1−β)(μιA_t + γ_t))
//!     mean square: a_t²(L² + mσ²)ι / ((1−β)²(μιA_t + γ_τ)²).
//!
//! Closed-form specializations for the two canonical schedules:
//!
//!     strongly convex (a_t = t, γ_t = 0):
//!         16/(t+1)·( L²(ln t + 1)/(μ²ι(1−β)²t) + M/(μ²ι) )
//!     convex (a_t = 1, γ_t = γ√t):
//!         suboptimality  (d(x*) + 2ιM)/(ιγ√t)
//!         consensus      2L√ι/(γ(1−β)√t)

use thiserror::Error;

use crate::engine::{RunTrace, Schedule, ScheduleKind};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("schedule does not match the requested bound: {0}")]
    ScheduleMismatch(String),
    #[error("degenerate schedule: mu*iota*A_t + gamma_t must stay positive")]
    DegenerateSchedule,
}

type Result<T> = std::result::Result<T, MetricsError>;

/// Constants entering the bound envelopes.
#[derive(Debug, Clone, Copy)]
pub struct BoundParams {
    pub lipschitz: f64,
    /// Mixing parameter, in [0, 1).
    pub beta: f64,
    /// Node sampling ratio, in (0, 1].
    pub iota: f64,
    /// Strong-convexity modulus of the regularizer.
    pub mu: f64,
    /// Per-coordinate noise standard deviation (0 for noiseless runs).
    pub sigma: f64,
    /// Decision-variable dimension m.
    pub dimension: usize,
    /// d(x*) = ‖x*‖²/2.
    pub d_xstar: f64,
    pub schedule: Schedule,
}

impl BoundParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta < 1.0) {
            return Err(MetricsError::InvalidArgument(format!(
                "beta must be in [0, 1), got {}",
                self.beta
            )));
        }
        if !(self.iota > 0.0 && self.iota <= 1.0) {
            return Err(MetricsError::InvalidArgument(format!(
                "iota must be in (0, 1], got {}",
                self.iota
            )));
        }
        if self.lipschitz < 0.0 || self.mu < 0.0 || self.sigma < 0.0 || self.d_xstar < 0.0 {
            return Err(MetricsError::InvalidArgument(
                "lipschitz, mu, sigma, d_xstar must be nonnegative".into(),
            ));
        }
        if self.dimension == 0 {
            return Err(MetricsError::InvalidArgument("dimension must be >= 1".into()));
        }
        Ok(())
    }

    /// M = ι·L²/2 + 2·√ι·L²/(1−β).
    pub fn constant_m(&self) -> Result<f64> {
        self.validate()?;
        constant_m(self.iota, self.lipschitz, self.beta)
    }

    fn denominator_at(&self, t: u64) -> f64 {
        self.mu * self.iota * self.schedule.cumulative(t) + self.schedule.gamma_at(t)
    }
}

/// M = ι·L²/2 + 2·√ι·L²/(1−β).
pub fn constant_m(iota: f64, lipschitz: f64, beta: f64) -> Result<f64> {
    if !(beta >= 0.0 && beta < 1.0) {
        return Err(MetricsError::InvalidArgument(format!("beta must be in [0, 1), got {beta}")));
    }
    let l2 = lipschitz * lipschitz;
    Ok(iota * l2 / 2.0 + 2.0 * iota.sqrt() * l2 / (1.0 - beta))
}

fn per_step_noise_factor(params: &BoundParams) -> Result<f64> {
    let m = params.dimension as f64;
    let big_m = params.constant_m()?;
    Ok(big_m
        + m * params.iota * params.sigma * params.sigma / 2.0
        + 2.0 * (m * params.iota).sqrt() * params.lipschitz * params.sigma / (1.0 - params.beta))
}

/// The error envelope for E[F(ỹ^(t)) − F(x*)] (already divided by A_t).
pub fn theorem2_envelope(params: &BoundParams, t: u64) -> Result<f64> {
    Ok(theorem2_envelope_series(params, &[t])?[0])
}

/// [`theorem2_envelope`] at several strictly increasing times, sharing the
/// running partial sum.
pub fn theorem2_envelope_series(params: &BoundParams, ts: &[u64]) -> Result<Vec<f64>> {
    params.validate()?;
    if ts.iter().any(|&t| t == 0) {
        return Err(MetricsError::InvalidArgument("envelope times must be >= 1".into()));
    }
    if !ts.windows(2).all(|w| w[0] < w[1]) {
        return Err(MetricsError::InvalidArgument(
            "envelope times must be strictly increasing".into(),
        ));
    }
    let factor = per_step_noise_factor(params)?;
    let mut out = Vec::with_capacity(ts.len());
    let mut partial = 0.0;
    let mut tau = 1u64;
    for &t in ts {
        while tau <= t {
            let denom = params.denominator_at(tau);
            if denom <= 0.0 {
                return Err(MetricsError::DegenerateSchedule);
            }
            let a = params.schedule.weight(tau);
            partial += a * a / denom;
            tau += 1;
        }
        let big_a = params.schedule.cumulative(t);
        let head = params.schedule.gamma_at(t) * params.d_xstar / params.iota;
        out.push((head + partial * factor) / big_a);
    }
    Ok(out)
}

/// Consensus deviation envelopes at time t: (mean bound, mean-square bound).
pub fn lemma4_envelope(params: &BoundParams, t: u64) -> Result<(f64, f64)> {
    params.validate()?;
    if t == 0 {
        return Err(MetricsError::InvalidArgument("envelope times must be >= 1".into()));
    }
    let denom = params.denominator_at(t);
    if denom <= 0.0 {
        return Err(MetricsError::DegenerateSchedule);
    }
    let m = params.dimension as f64;
    let a = params.schedule.weight(t);
    let one_minus_beta = 1.0 - params.beta;
    let mean = a * (params.lipschitz + m.sqrt() * params.sigma) * params.iota.sqrt()
        / (one_minus_beta * denom);
    let mean_sq = a * a * (params.lipschitz * params.lipschitz + m * params.sigma * params.sigma)
        * params.iota
        / (one_minus_beta * one_minus_beta * denom * denom);
    Ok((mean, mean_sq))
}

/// Which closed-form corollary envelope to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorollaryBound {
    /// Noiseless strongly convex rate for (1/n)Σ‖x̃_i − x*‖².
    C1,
    /// Noiseless convex rate for E[F(ỹ) − F(x*)].
    C2Subopt,
    /// Noiseless convex consensus rate for (1/n)Σ‖x̃_i − ỹ‖.
    C2Consensus,
}

/// Evaluates the requested closed form; errors when the schedule does not
/// match the corollary's hypothesis. Divergent values (e.g. as ι → 0) are
/// reported as +inf.
pub fn corollary_envelope(params: &BoundParams, which: CorollaryBound, t: u64) -> Result<f64> {
    params.validate()?;
    if t == 0 {
        return Err(MetricsError::InvalidArgument("envelope times must be >= 1".into()));
    }
    let tf = t as f64;
    let big_m = params.constant_m()?;
    match which {
        CorollaryBound::C1 => {
            if params.schedule.kind != ScheduleKind::StronglyConvex || params.mu <= 0.0 {
                return Err(MetricsError::ScheduleMismatch(
                    "C1 needs the strongly convex schedule (a_t = t, gamma_t = 0, mu > 0)".into(),
                ));
            }
            let mu2 = params.mu * params.mu;
            let l2 = params.lipschitz * params.lipschitz;
            let one_minus_beta_sq = (1.0 - params.beta) * (1.0 - params.beta);
            Ok(16.0 / (tf + 1.0)
                * (l2 * (tf.ln() + 1.0) / (mu2 * params.iota * one_minus_beta_sq * tf)
                    + big_m / (mu2 * params.iota)))
        }
        CorollaryBound::C2Subopt => {
            require_convex(params)?;
            Ok((params.d_xstar + 2.0 * params.iota * big_m)
                / (params.iota * params.schedule.gamma * tf.sqrt()))
        }
        CorollaryBound::C2Consensus => {
            require_convex(params)?;
            Ok(2.0 * params.lipschitz * params.iota.sqrt()
                / (params.schedule.gamma * (1.0 - params.beta) * tf.sqrt()))
        }
    }
}

fn require_convex(params: &BoundParams) -> Result<()> {
    if params.schedule.kind != ScheduleKind::Convex {
        return Err(MetricsError::ScheduleMismatch(
            "C2 needs the convex schedule (a_t = 1, gamma_t = gamma*sqrt(t))".into(),
        ));
    }
    Ok(())
}

/// Fills the envelope columns of a trace in place.
pub fn annotate_trace(trace: &mut RunTrace, params: &BoundParams) -> Result<()> {
    params.validate()?;
    if (params.iota - trace.iota).abs() > 1e-12 {
        return Err(MetricsError::InvalidArgument(format!(
            "params iota {} does not match trace iota {}",
            params.iota, trace.iota
        )));
    }
    if (params.sigma - trace.sigma).abs() > 1e-12 {
        return Err(MetricsError::InvalidArgument(format!(
            "params sigma {} does not match trace sigma {}",
            params.sigma, trace.sigma
        )));
    }
    let ts: Vec<u64> = trace.rows.iter().map(|r| r.t).collect();
    let envelopes = theorem2_envelope_series(params, &ts)?;
    for (row, env) in trace.rows.iter_mut().zip(envelopes) {
        row.thm2_envelope = env;
        row.lemma4_envelope = lemma4_envelope(params, row.t)?.0;
    }
    Ok(())
}

/// Mean and standard error of one column across seeds.
#[derive(Debug, Clone, Copy)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

fn mean_se(values: &[f64]) -> MeanSe {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return MeanSe { mean, se: 0.0 };
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    MeanSe { mean, se: (var / k).sqrt() }
}

/// Seed-aggregated view of one recorded time across traces.
#[derive(Debug, Clone, Copy)]
pub struct AggregatedRow {
    pub t: u64,
    pub subopt_mean_ergodic: MeanSe,
    pub subopt_aux_ergodic: MeanSe,
    pub consensus_instant: MeanSe,
    pub consensus_ergodic: MeanSe,
    pub mean_sq_dist_ergodic: MeanSe,
    pub eps_hat: f64,
    pub thm2_envelope: f64,
    pub lemma4_envelope: f64,
}

/// Aggregates traces with identical recording grids into per-row mean and
/// standard error.
pub fn aggregate_traces(traces: &[RunTrace]) -> Result<Vec<AggregatedRow>> {
    let first = traces
        .first()
        .ok_or_else(|| MetricsError::InvalidArgument("no traces to aggregate".into()))?;
    for trace in traces {
        if trace.rows.len() != first.rows.len()
            || trace.rows.iter().zip(&first.rows).any(|(a, b)| a.t != b.t)
        {
            return Err(MetricsError::InvalidArgument(
                "traces disagree on the recording grid".into(),
            ));
        }
    }
    let mut out = Vec::with_capacity(first.rows.len());
    for i in 0..first.rows.len() {
        let col = |f: fn(&crate::engine::TraceRow) -> f64| -> Vec<f64> {
            traces.iter().map(|tr| f(&tr.rows[i])).collect()
        };
        out.push(AggregatedRow {
            t: first.rows[i].t,
            subopt_mean_ergodic: mean_se(&col(|r| r.subopt_mean_ergodic)),
            subopt_aux_ergodic: mean_se(&col(|r| r.subopt_aux_ergodic)),
            consensus_instant: mean_se(&col(|r| r.consensus_instant)),
            consensus_ergodic: mean_se(&col(|r| r.consensus_ergodic)),
            mean_sq_dist_ergodic: mean_se(&col(|r| r.mean_sq_dist_ergodic)),
            eps_hat: first.rows[i].eps_hat,
            thm2_envelope: first.rows[i].thm2_envelope,
            lemma4_envelope: first.rows[i].lemma4_envelope,
        });
    }
    Ok(out)
}

/// Per-run utility summary against a reference objective value.
#[derive(Debug, Clone)]
pub struct UtilitySummary {
    pub first_suboptimality: f64,
    pub final_suboptimality: f64,
    /// Trapezoidal area under the suboptimality-versus-t curve.
    pub area_under_curve: f64,
    /// Final (1/n)Σ‖x̃_i − x*‖², when the run carried a reference point.
    pub final_mean_sq_dist: Option<f64>,
    pub per_row: Vec<(u64, f64)>,
}

/// Summarizes a trace's node-mean ergodic suboptimality against `f_star`.
pub fn utility_summary(trace: &RunTrace, f_star: f64) -> Result<UtilitySummary> {
    if !f_star.is_finite() {
        return Err(MetricsError::InvalidArgument("reference objective must be finite".into()));
    }
    if trace.rows.is_empty() {
        return Err(MetricsError::InvalidArgument("trace has no recorded rows".into()));
    }
    let per_row: Vec<(u64, f64)> = trace
        .rows
        .iter()
        .map(|r| (r.t, r.objective_mean_ergodic - f_star))
        .collect();
    let mut auc = 0.0;
    for w in per_row.windows(2) {
        let ((t0, s0), (t1, s1)) = (w[0], w[1]);
        auc += (t1 - t0) as f64 * 0.5 * (s0 + s1);
    }
    let final_dist = trace.rows.last().map(|r| r.mean_sq_dist_ergodic);
    Ok(UtilitySummary {
        first_suboptimality: per_row[0].1,
        final_suboptimality: per_row[per_row.len() - 1].1,
        area_under_curve: auc,
        final_mean_sq_dist: final_dist.filter(|d| d.is_finite()),
        per_row,
    })
}

/// Least-squares slope of ln(y) against ln(t); `None` unless at least two
/// points with positive y exist.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(t, y)| *t > 0.0 && *y > 0.0)
        .map(|(t, y)| (t.ln(), y.ln()))
        .collect();
    if logs.len() < 2 {
        return None;
    }
    let k = logs.len() as f64;
    let mx = logs.iter().map(|(x, _)| x).sum::<f64>() / k;
    let my = logs.iter().map(|(_, y)| y).sum::<f64>() / k;
    let sxx: f64 = logs.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}
