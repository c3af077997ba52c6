//! Deterministic centralized ground truth.
//!
//! Full-batch dual averaging over the entire dataset (no sampling, no
//! noise): the exact subgradient of the average loss feeds the dual
//! accumulator, and the primal is recovered through the same inner
//! minimization as the distributed algorithm with coefficients A_{t+1} and
//! γ_{t+1}. Strongly convex instances use a_t = t with γ_t = 0, all others
//! a_t = 1 with γ_t = γ√t.
//!
//! The solution is the best objective value seen among periodically evaluated
//! candidates (current and ergodic iterates), so extending `max_iterations`
//! can only improve it. The solver stops early when the best value changes by
//! less than `rel_tol` relatively across one evaluation window.

use crate::engine::{EngineError, Schedule};
use crate::problems::ProblemInstance;
use crate::prox::prox_solve_into;

#[derive(Debug, Clone, Copy)]
pub struct ReferenceOptions {
    pub max_iterations: u64,
    /// γ for the convex schedule; ignored for strongly convex instances.
    pub gamma: f64,
    /// Candidate-evaluation (and stopping-check) period in steps.
    pub eval_every: u64,
    /// Relative best-objective change below which the solver stops.
    pub rel_tol: f64,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        Self { max_iterations: 200_000, gamma: 1.0, eval_every: 1000, rel_tol: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub x_star: Vec<f64>,
    pub f_star: f64,
    pub iterations_run: u64,
    pub converged: bool,
}

impl ReferenceSolution {
    pub fn as_reference(&self) -> crate::engine::Reference {
        crate::engine::Reference { x_star: self.x_star.clone(), f_star: self.f_star }
    }
}

/// Exact subgradient of the averaged hinge loss at x.
fn full_subgradient(problem: &ProblemInstance, x: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let n = problem.node_count() as f64;
    for local in problem.locals() {
        let weight = 1.0 / (n * local.len() as f64);
        for sample in &local.samples {
            if 1.0 - sample.label * sample.features.dot(x) > 0.0 {
                sample.features.add_scaled_into(-sample.label * weight, out);
            }
        }
    }
}

pub fn solve_reference(
    problem: &ProblemInstance,
    opts: &ReferenceOptions,
) -> Result<ReferenceSolution, EngineError> {
    if opts.max_iterations == 0 || opts.eval_every == 0 {
        return Err(EngineError::InvalidConfig(
            "reference solver needs positive max_iterations and eval_every".into(),
        ));
    }
    let modulus = problem.regularizer().modulus();
    let schedule = if modulus > 0.0 {
        Schedule::strongly_convex(modulus)?
    } else {
        if !(opts.gamma > 0.0) {
            return Err(EngineError::InvalidConfig(format!(
                "convex reference schedule requires gamma > 0, got {}",
                opts.gamma
            )));
        }
        Schedule::convex(opts.gamma)?
    };

    let m = problem.dimension();
    let mut z = vec![0.0; m];
    let mut x = vec![0.0; m];
    prox_solve_into(&z, schedule.cumulative(1), schedule.gamma_at(1), problem.regularizer(), &mut x)?;
    let mut ergodic_num: Vec<f64> = x.iter().map(|v| schedule.weight(1) * v).collect();

    let mut grad = vec![0.0; m];
    let mut best_x = x.clone();
    let mut best_f = problem.objective(&x)?;
    let mut window_best = best_f;
    let mut converged = false;
    let mut iterations_run = 0;

    for t in 1..=opts.max_iterations {
        iterations_run = t;
        full_subgradient(problem, &x, &mut grad);
        let a_t = schedule.weight(t);
        for (zi, gi) in z.iter_mut().zip(&grad) {
            *zi += a_t * gi;
        }
        prox_solve_into(
            &z,
            schedule.cumulative(t + 1),
            schedule.gamma_at(t + 1),
            problem.regularizer(),
            &mut x,
        )?;
        let a_next = schedule.weight(t + 1);
        for (acc, v) in ergodic_num.iter_mut().zip(&x) {
            *acc += a_next * v;
        }

        if t % opts.eval_every == 0 || t == opts.max_iterations {
            let big_a = schedule.cumulative(t + 1);
            let ergodic: Vec<f64> = ergodic_num.iter().map(|v| v / big_a).collect();
            for candidate in [&x, &ergodic] {
                let f = problem.objective(candidate)?;
                if f < best_f {
                    best_f = f;
                    best_x.copy_from_slice(candidate);
                }
            }
            let change = (window_best - best_f).abs();
            if t > opts.eval_every && change <= opts.rel_tol * best_f.abs().max(1.0) {
                converged = true;
                break;
            }
            window_best = best_f;
        }
    }

    Ok(ReferenceSolution { x_star: best_x, f_star: best_f, iterations_run, converged })
}
