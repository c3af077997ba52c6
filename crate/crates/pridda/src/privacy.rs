//! The differential-privacy accountant.
//!
//! The accounting chain mirrors how the guarantee is established for the
//! sampled-node algorithm:
//!
//! 1. *Gaussian mechanism.* A batch of stochastic subgradients over the
//!    active nodes has sensitivity `2L/q`, so perturbing it with per-coordinate
//!    noise of standard deviation σ is (ε_t, δ₀)-DP per step with
//!    `ε_t = 2L·sqrt(2·ln(2/δ₀))/(q·σ)`.
//! 2. *Amplification by node sampling.* Running the mechanism on a random
//!    fraction ι of the nodes amplifies each step to
//!    `(ι·(e^{ε_t} − 1), ι·δ₀)`-DP; the analysis uses the surrogate `2ι·ε_t`,
//!    valid (i.e. an upper bound on the exact value) whenever
//!    `ε_t ≤ `[`SURROGATE_EPSILON_LIMIT`].
//! 3. *Advanced composition.* [`compose`] combines heterogeneous steps:
//!    `ε̃ = sqrt(Σ 2ε_i²·ln(e + sqrt(Σε_i²)/δ')) + Σε_i²` and
//!    `δ̃ = 1 − (1−δ')·Π(1−δ_i)`.
//!
//! [`calibrate`] inverts the chain: given a target `(ε, δ₀)`, sampling ratio
//! ι, Lipschitz constant L, per-node sample count q, and a horizon
//! `T ≥ 5ε²/(4ι²)`, it returns the minimal noise variance
//! `σ² = 32·ι²·L²·T·ln(2/δ₀)/(q²·ε²)` together with the per-step and
//! amplified epsilons and the achieved `(ε̃, δ̃)` from replaying the chain
//! with `δ' = sqrt(Σ(ε'_t)²)`. The replay evaluates the chain's closing bound
//! `ε̃ = sqrt(3/5)·s + s²/5` with `s² = Σ(ε'_t)²` — the same curve
//! [`privacy_loss_at`] reports at `t = T` — which guarantees `ε̃ ≤ ε` for
//! every feasible budget. All logarithms are natural.

use thiserror::Error;

/// Largest per-step epsilon for which the linear surrogate `2ιε` upper-bounds
/// the exact amplified value `ι(e^ε − 1)`.
pub const SURROGATE_EPSILON_LIMIT: f64 = 1.2564;

#[derive(Debug, Error)]
pub enum PrivacyError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("horizon too short: need T >= {minimum}")]
    HorizonTooShort { minimum: u64 },
    #[error("sigma = 0 yields infinite privacy loss")]
    InfinitePrivacyLoss,
    #[error("surrogate amplification invalid for epsilon = {epsilon} > {SURROGATE_EPSILON_LIMIT}")]
    SurrogateInvalid { epsilon: f64 },
    #[error("out of range: {0}")]
    OutOfRange(String),
}

type Result<T> = std::result::Result<T, PrivacyError>;

/// A target privacy budget and the run parameters it must cover.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBudget {
    /// Target epsilon, in (0, 1].
    pub epsilon: f64,
    /// Per-step Gaussian-mechanism delta, in (0, 1].
    pub delta0: f64,
    /// Node sampling ratio, in (0, 1].
    pub iota: f64,
    /// Lipschitz constant of the per-sample losses.
    pub lipschitz: f64,
    /// Minimum number of samples per node, q = min_i q_i.
    pub samples_per_node: u64,
    /// Number of iterations T the budget must cover.
    pub horizon: u64,
}

impl PrivacyBudget {
    pub fn new(
        epsilon: f64,
        delta0: f64,
        iota: f64,
        lipschitz: f64,
        samples_per_node: u64,
        horizon: u64,
    ) -> Result<Self> {
        let budget = Self { epsilon, delta0, iota, lipschitz, samples_per_node, horizon };
        budget.validate()?;
        Ok(budget)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(PrivacyError::InvalidArgument(format!(
                "epsilon must be in (0, 1], got {}",
                self.epsilon
            )));
        }
        if !(self.delta0 > 0.0 && self.delta0 <= 1.0) {
            return Err(PrivacyError::InvalidArgument(format!(
                "delta0 must be in (0, 1], got {}",
                self.delta0
            )));
        }
        if !(self.iota > 0.0 && self.iota <= 1.0) {
            return Err(PrivacyError::InvalidArgument(format!(
                "iota must be in (0, 1], got {}",
                self.iota
            )));
        }
        if !(self.lipschitz > 0.0 && self.lipschitz.is_finite()) {
            return Err(PrivacyError::InvalidArgument(format!(
                "lipschitz must be a positive real, got {}",
                self.lipschitz
            )));
        }
        if self.samples_per_node == 0 {
            return Err(PrivacyError::InvalidArgument("samples_per_node must be >= 1".into()));
        }
        let minimum = min_horizon(self.epsilon, self.iota);
        if self.horizon < minimum {
            return Err(PrivacyError::HorizonTooShort { minimum });
        }
        Ok(())
    }
}

/// Smallest feasible horizon: ceil(5ε²/(4ι²)).
pub fn min_horizon(epsilon: f64, iota: f64) -> u64 {
    (5.0 * epsilon * epsilon / (4.0 * iota * iota)).ceil().max(1.0) as u64
}

/// Derived noise level and the per-step/overall accounting it implies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseCalibration {
    /// The budget this calibration was derived from.
    pub budget: PrivacyBudget,
    /// Per-coordinate noise standard deviation.
    pub sigma: f64,
    pub sigma_squared: f64,
    /// ε_t of the per-step Gaussian mechanism on the subsampled data.
    pub per_step_epsilon: f64,
    /// Surrogate amplified per-step epsilon ε'_t = 2ι·ε_t (≤ 0.9).
    pub amplified_epsilon: f64,
    /// Exact amplified per-step epsilon ι·(e^{ε_t} − 1), for information.
    pub amplified_epsilon_exact: f64,
    /// Amplified per-step delta ι·δ₀.
    pub amplified_delta: f64,
    /// Achieved overall epsilon from the accounting replay (≤ target ε).
    pub final_epsilon: f64,
    /// Achieved overall delta δ̃ = 1 − (1−δ')·(1−ιδ₀)^T with δ' = sqrt(Σ(ε'_t)²).
    pub final_delta: f64,
}

/// Worst-case L2 sensitivity of the stacked stochastic-subgradient query:
/// 2L/q.
pub fn sensitivity(lipschitz: f64, samples_per_node: u64) -> Result<f64> {
    if lipschitz < 0.0 || !lipschitz.is_finite() {
        return Err(PrivacyError::InvalidArgument(format!(
            "lipschitz must be nonnegative, got {lipschitz}"
        )));
    }
    if samples_per_node == 0 {
        return Err(PrivacyError::InvalidArgument("samples_per_node must be >= 1".into()));
    }
    Ok(2.0 * lipschitz / samples_per_node as f64)
}

/// Per-step epsilon of the Gaussian mechanism at noise level sigma:
/// ε_t = 2L·sqrt(2·ln(2/δ₀))/(q·σ).
pub fn per_step_epsilon(
    lipschitz: f64,
    samples_per_node: u64,
    sigma: f64,
    delta0: f64,
) -> Result<f64> {
    if !(delta0 > 0.0 && delta0 <= 1.0) {
        return Err(PrivacyError::InvalidArgument(format!(
            "delta0 must be in (0, 1], got {delta0}"
        )));
    }
    if sigma == 0.0 {
        return Err(PrivacyError::InfinitePrivacyLoss);
    }
    if !(sigma > 0.0) {
        return Err(PrivacyError::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    let delta = sensitivity(lipschitz, samples_per_node)?;
    Ok(delta * (2.0 * (2.0 / delta0).ln()).sqrt() / sigma)
}

/// Result of amplification by subsampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Amplified {
    /// Exact amplified epsilon ι·(e^ε − 1).
    pub exact: f64,
    /// Surrogate 2ιε; `None` when ε > [`SURROGATE_EPSILON_LIMIT`], where the
    /// surrogate would no longer upper-bound the exact value.
    pub surrogate: Option<f64>,
    /// Amplified delta ι·δ.
    pub delta: f64,
}

/// Amplifies an (ε, δ)-DP step run on a random ι-fraction of the data.
pub fn amplify(epsilon: f64, delta: f64, iota: f64) -> Result<Amplified> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(PrivacyError::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(PrivacyError::InvalidArgument(format!("delta must be in (0, 1], got {delta}")));
    }
    if !(iota > 0.0 && iota <= 1.0) {
        return Err(PrivacyError::InvalidArgument(format!("iota must be in (0, 1], got {iota}")));
    }
    let exact = iota * epsilon.exp_m1();
    let surrogate = (epsilon <= SURROGATE_EPSILON_LIMIT).then_some(2.0 * iota * epsilon);
    Ok(Amplified { exact, surrogate, delta: iota * delta })
}

/// The surrogate amplified epsilon 2ιε, or an error when the surrogate is
/// not a valid upper bound for this ε.
pub fn amplify_surrogate(epsilon: f64, iota: f64) -> Result<f64> {
    amplify(epsilon, 1.0, iota)?
        .surrogate
        .ok_or(PrivacyError::SurrogateInvalid { epsilon })
}

/// Heterogeneous advanced composition of (ε_i, δ_i)-DP steps:
///
/// ε̃ = sqrt(Σ 2ε_i²·ln(e + sqrt(Σε_i²)/δ')) + Σε_i²,
/// δ̃ = 1 − (1−δ')·Π(1−δ_i),
///
/// requiring every ε_i ∈ (0, 0.9] and δ_i, δ' ∈ (0, 1].
pub fn compose(steps: &[(f64, f64)], delta_prime: f64) -> Result<(f64, f64)> {
    if !(delta_prime > 0.0 && delta_prime <= 1.0) {
        return Err(PrivacyError::InvalidArgument(format!(
            "delta_prime must be in (0, 1], got {delta_prime}"
        )));
    }
    let mut sum_sq = 0.0;
    let mut survive = 1.0;
    for &(eps, delta) in steps {
        if !(eps > 0.0 && eps <= 0.9) {
            return Err(PrivacyError::OutOfRange(format!(
                "composition requires epsilon_i in (0, 0.9], got {eps}"
            )));
        }
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(PrivacyError::OutOfRange(format!(
                "composition requires delta_i in (0, 1], got {delta}"
            )));
        }
        sum_sq += eps * eps;
        survive *= 1.0 - delta;
    }
    let eps_tilde = if steps.is_empty() {
        0.0
    } else {
        let log_term = (std::f64::consts::E + sum_sq.sqrt() / delta_prime).ln();
        (2.0 * sum_sq * log_term).sqrt() + sum_sq
    };
    let delta_tilde = 1.0 - (1.0 - delta_prime) * survive;
    Ok((eps_tilde, delta_tilde))
}

/// Calibrates the minimal noise variance for a budget and replays the
/// accounting chain.
///
/// Returns σ² = 32·ι²·L²·T·ln(2/δ₀)/(q²·ε²) and the derived per-step,
/// amplified, and achieved privacy figures. Errors with the minimum feasible
/// horizon when T < 5ε²/(4ι²).
pub fn calibrate(budget: &PrivacyBudget) -> Result<NoiseCalibration> {
    budget.validate()?;
    let q = budget.samples_per_node as f64;
    let t = budget.horizon as f64;
    let iota = budget.iota;
    let l = budget.lipschitz;

    let sigma_squared = 32.0 * iota * iota * l * l * t * (2.0 / budget.delta0).ln()
        / (q * q * budget.epsilon * budget.epsilon);
    let sigma = sigma_squared.sqrt();

    let eps_step = per_step_epsilon(l, budget.samples_per_node, sigma, budget.delta0)?;
    let amp = amplify(eps_step, budget.delta0, iota)?;
    let eps_amp = amp
        .surrogate
        .ok_or(PrivacyError::SurrogateInvalid { epsilon: eps_step })?;
    if eps_amp > 0.9 + 1e-12 {
        // Unreachable for feasible horizons: ε'_t = ε/√T ≤ 2ι/√5 < 0.9.
        return Err(PrivacyError::OutOfRange(format!(
            "amplified per-step epsilon {eps_amp} exceeds 0.9"
        )));
    }

    // Replay: s² = Σ_t (ε'_t)² over the horizon, δ' = s, and the closing
    // bound ε̃ = sqrt(3/5)·s + s²/5 of the accounting chain (the s ≤ 1
    // guarantee makes this the privacy-loss curve at t = T).
    let s_squared = t * eps_amp * eps_amp;
    let s = s_squared.sqrt().min(1.0);
    let final_epsilon = (0.6f64).sqrt() * s + s * s / 5.0;
    let final_delta = 1.0 - (1.0 - s) * (1.0 - iota * budget.delta0).powf(t);

    Ok(NoiseCalibration {
        budget: *budget,
        sigma,
        sigma_squared,
        per_step_epsilon: eps_step,
        amplified_epsilon: eps_amp,
        amplified_epsilon_exact: amp.exact,
        amplified_delta: amp.delta,
        final_epsilon,
        final_delta,
    })
}

/// Cumulative privacy loss after t of T iterations of a run calibrated to ε:
/// ε̂(t) = sqrt(3t/(5T))·ε + (t/(5T))·ε².
pub fn privacy_loss_at(t: u64, horizon: u64, epsilon: f64) -> Result<f64> {
    if horizon == 0 {
        return Err(PrivacyError::InvalidArgument("horizon must be >= 1".into()));
    }
    if t > horizon {
        return Err(PrivacyError::OutOfRange(format!("t = {t} exceeds horizon {horizon}")));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(PrivacyError::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let frac = t as f64 / horizon as f64;
    Ok((3.0 * frac / 5.0).sqrt() * epsilon + frac / 5.0 * epsilon * epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn golden_budget() -> PrivacyBudget {
        PrivacyBudget::new(1.0, 0.01, 0.1, 1.0, 100, 1000).unwrap()
    }

    #[test]
    fn sensitivity_examples() {
        assert_abs_diff_eq!(sensitivity(1.0, 100).unwrap(), 0.02);
        assert_abs_diff_eq!(sensitivity(0.0, 7).unwrap(), 0.0);
        assert_abs_diff_eq!(sensitivity(5.0, 1).unwrap(), 10.0);
        assert!(sensitivity(1.0, 0).is_err());
        assert!(sensitivity(-1.0, 1).is_err());
    }

    #[test]
    fn per_step_epsilon_examples() {
        // sigma from the golden calibration; eps_t^2 must be 0.025.
        let eps = per_step_epsilon(1.0, 100, 0.41175982772671884, 0.01).unwrap();
        assert_relative_eq!(eps, 0.15811388300841897, max_relative = 1e-12);
        assert_relative_eq!(eps * eps, 0.025, max_relative = 1e-12);

        // Doubling sigma halves epsilon.
        let half = per_step_epsilon(1.0, 100, 2.0 * 0.41175982772671884, 0.01).unwrap();
        assert_relative_eq!(half, eps / 2.0, max_relative = 1e-14);

        // Solving the formula for sigma at eps_t = 1.
        let sigma = 2.0 * (2.0 * (200.0f64).ln()).sqrt();
        assert_relative_eq!(per_step_epsilon(1.0, 1, sigma, 0.01).unwrap(), 1.0, max_relative = 1e-14);

        assert!(matches!(
            per_step_epsilon(1.0, 1, 0.0, 0.01),
            Err(PrivacyError::InfinitePrivacyLoss)
        ));
    }

    #[test]
    fn amplify_examples() {
        let a = amplify(0.15811388300841897, 0.01, 0.1).unwrap();
        assert_relative_eq!(a.exact, 0.017129957823219573, max_relative = 1e-12);
        let s = a.surrogate.unwrap();
        assert_relative_eq!(s, 0.03162277660168379, max_relative = 1e-12);
        assert!(s >= a.exact);
        assert_abs_diff_eq!(a.delta, 0.001);

        // iota = 1: exact is e^eps - 1, delta unchanged.
        let b = amplify(0.3, 0.2, 1.0).unwrap();
        assert_relative_eq!(b.exact, 0.3f64.exp_m1(), max_relative = 1e-15);
        assert_abs_diff_eq!(b.delta, 0.2);

        // Both go to zero with epsilon.
        let c = amplify(1e-12, 0.5, 0.3).unwrap();
        assert!(c.exact < 1e-11 && c.surrogate.unwrap() < 1e-11);

        assert!(matches!(
            amplify_surrogate(1.3, 0.5),
            Err(PrivacyError::SurrogateInvalid { .. })
        ));
        assert!(amplify(1.3, 0.5, 0.5).unwrap().surrogate.is_none());
    }

    #[test]
    fn surrogate_dominates_exact_up_to_limit() {
        for i in 1..=125 {
            let eps = i as f64 / 100.0;
            if eps <= SURROGATE_EPSILON_LIMIT {
                let a = amplify(eps, 1.0, 0.37).unwrap();
                assert!(a.surrogate.unwrap() >= a.exact, "eps = {eps}");
            }
        }
    }

    #[test]
    fn compose_golden_value() {
        // Frozen from a 50-digit evaluation of the composition formulas.
        let steps = vec![(0.1, 0.01); 10];
        let (eps, delta) = compose(&steps, 0.1).unwrap();
        assert_abs_diff_eq!(eps, 0.6952565679622640, epsilon = 1e-12);
        assert_abs_diff_eq!(delta, 0.1860561324920760, epsilon = 1e-12);
    }

    #[test]
    fn compose_boundaries() {
        // delta' = 1 forces delta_tilde = 1.
        let (_, d) = compose(&[(0.5, 0.5)], 1.0).unwrap();
        assert_abs_diff_eq!(d, 1.0);
        // Empty composition carries only delta'.
        let (e0, d0) = compose(&[], 0.25).unwrap();
        assert_eq!(e0, 0.0);
        assert_abs_diff_eq!(d0, 0.25);
        // Out-of-range epsilon.
        assert!(matches!(
            compose(&[(0.95, 0.1)], 0.1),
            Err(PrivacyError::OutOfRange(_))
        ));
        assert!(compose(&[(0.1, 0.1)], 0.0).is_err());
    }

    #[test]
    fn compose_single_step_dominates_its_input() {
        for &(e1, d1, dp) in &[(0.1, 0.01, 0.5), (0.9, 0.9, 0.01), (0.5, 1e-9, 1.0)] {
            let (et, dt) = compose(&[(e1, d1)], dp).unwrap();
            assert!(et >= e1);
            assert!(dt >= d1.min(1.0) - 1e-15);
        }
    }

    #[test]
    fn calibrate_golden_values() {
        let cal = calibrate(&golden_budget()).unwrap();
        assert_relative_eq!(cal.sigma_squared, 0.16954615572953717, max_relative = 1e-12);
        assert_relative_eq!(cal.sigma, 0.41175982772671884, max_relative = 1e-12);
        assert_relative_eq!(cal.per_step_epsilon, 0.15811388300841897, max_relative = 1e-12);
        assert_relative_eq!(cal.amplified_epsilon, 0.03162277660168379, max_relative = 1e-12);
        assert_relative_eq!(cal.amplified_epsilon_exact, 0.017129957823219573, max_relative = 1e-12);
        assert!(cal.amplified_epsilon <= 0.9);
        assert_relative_eq!(cal.final_epsilon, 0.9745966692414834, max_relative = 1e-12);
        assert!(cal.final_epsilon <= 1.0);
        assert!(cal.final_delta > 0.0 && cal.final_delta <= 1.0);
        // Self-consistency: eps_t^2 * 4 iota^2 T = eps^2.
        let lhs = cal.per_step_epsilon.powi(2) * 4.0 * 0.1 * 0.1 * 1000.0;
        assert_relative_eq!(lhs, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn calibrate_scaling_in_q() {
        let b1 = golden_budget();
        let b2 = PrivacyBudget::new(1.0, 0.01, 0.1, 1.0, 200, 1000).unwrap();
        let c1 = calibrate(&b1).unwrap();
        let c2 = calibrate(&b2).unwrap();
        assert_relative_eq!(c2.sigma_squared, c1.sigma_squared / 4.0, max_relative = 1e-12);
    }

    #[test]
    fn calibrate_sigma_monotonicity() {
        let base = calibrate(&golden_budget()).unwrap().sigma_squared;
        let more_t = calibrate(&PrivacyBudget::new(1.0, 0.01, 0.1, 1.0, 100, 2000).unwrap())
            .unwrap()
            .sigma_squared;
        let more_iota = calibrate(&PrivacyBudget::new(1.0, 0.01, 0.2, 1.0, 100, 1000).unwrap())
            .unwrap()
            .sigma_squared;
        let less_eps = calibrate(&PrivacyBudget::new(0.5, 0.01, 0.1, 1.0, 100, 1000).unwrap())
            .unwrap()
            .sigma_squared;
        assert!(more_t > base);
        assert!(more_iota > base);
        assert!(less_eps > base);
    }

    #[test]
    fn horizon_too_short_names_minimum() {
        assert_eq!(min_horizon(1.0, 0.1), 125);
        match PrivacyBudget::new(1.0, 0.01, 0.1, 1.0, 100, 124) {
            Err(PrivacyError::HorizonTooShort { minimum }) => assert_eq!(minimum, 125),
            other => panic!("expected HorizonTooShort, got {other:?}"),
        }
        assert!(PrivacyBudget::new(1.0, 0.01, 0.1, 1.0, 100, 125).is_ok());
        assert!(PrivacyBudget::new(2.0, 0.01, 0.1, 1.0, 100, 1000).is_err());
    }

    #[test]
    fn privacy_loss_curve() {
        assert_abs_diff_eq!(
            privacy_loss_at(1000, 1000, 1.0).unwrap(),
            0.9745966692414834,
            epsilon = 1e-12
        );
        assert_eq!(privacy_loss_at(0, 1000, 1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(
            privacy_loss_at(1000, 1000, 0.5).unwrap(),
            0.4372983346207417,
            epsilon = 1e-12
        );
        assert!(privacy_loss_at(1001, 1000, 1.0).is_err());
    }

    #[test]
    fn privacy_loss_nondecreasing_and_capped() {
        for &eps in &[0.1, 0.25, 0.5, 0.9, 1.0] {
            let horizon = 333;
            let mut prev = 0.0;
            for t in 0..=horizon {
                let v = privacy_loss_at(t, horizon, eps).unwrap();
                assert!(v >= prev - 1e-15);
                prev = v;
            }
            assert!(prev <= eps + 1e-12, "final loss {prev} above target {eps}");
        }
    }

    #[test]
    fn end_to_end_guarantee_on_grid() {
        // Calibrate over the full grid and check the replay stays within
        // budget in every cell.
        for &eps in &[0.25, 0.5, 1.0] {
            for &iota in &[0.05, 0.1, 0.5, 1.0] {
                for &delta0 in &[0.01, 0.1] {
                    let t_min = min_horizon(eps, iota);
                    for t in [t_min, 10 * t_min] {
                        let budget = PrivacyBudget::new(eps, delta0, iota, 1.0, 100, t).unwrap();
                        let cal = calibrate(&budget).unwrap();
                        assert!(
                            cal.final_epsilon <= eps,
                            "eps_tilde {} above target {eps} at iota={iota}, T={t}",
                            cal.final_epsilon
                        );
                        assert!(cal.amplified_epsilon <= 0.9);
                        // Per-step self-consistency at the calibrated minimum.
                        let lhs = cal.per_step_epsilon.powi(2) * 4.0 * iota * iota * t as f64;
                        assert_relative_eq!(lhs, eps * eps, max_relative = 1e-12);
                    }
                }
            }
        }
    }
}
