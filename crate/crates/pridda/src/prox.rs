//! The dual-averaging inner minimization
//!
//!     argmin_x { <z, x> + c·h(x) + gamma·d(x) },    d(x) = ||x||²/2,
//!
//! solved in closed form per regularizer kind, plus a brute-force grid oracle
//! for testing. The subproblem must be strongly convex:
//! `gamma + c·modulus(h) > 0`.

use thiserror::Error;

use crate::problems::Regularizer;

#[derive(Debug, Error)]
pub enum ProxError {
    #[error("degenerate subproblem: gamma + c*modulus must be positive (gamma={gamma}, c={c})")]
    DegenerateSubproblem { gamma: f64, c: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("grid oracle supports dimensions 1..=3, got {0}")]
    OracleScale(usize),
}

type Result<T> = std::result::Result<T, ProxError>;

/// One inner minimization: accumulated dual z, regularizer coefficient c
/// (iota·A_t in the algorithm), and proximal weight gamma.
#[derive(Debug, Clone)]
pub struct ProxQuery {
    pub z: Vec<f64>,
    pub c: f64,
    pub gamma: f64,
    pub regularizer: Regularizer,
}

impl ProxQuery {
    pub fn validate(&self) -> Result<()> {
        if self.c < 0.0 || !self.c.is_finite() {
            return Err(ProxError::InvalidArgument(format!("c must be >= 0, got {}", self.c)));
        }
        if self.gamma < 0.0 || !self.gamma.is_finite() {
            return Err(ProxError::InvalidArgument(format!(
                "gamma must be >= 0, got {}",
                self.gamma
            )));
        }
        if self.gamma + self.c * self.regularizer.modulus() <= 0.0 {
            return Err(ProxError::DegenerateSubproblem { gamma: self.gamma, c: self.c });
        }
        // The ball indicator keeps its constraint regardless of c, but still
        // needs gamma > 0 for a unique minimizer; likewise l1 and zero.
        match self.regularizer {
            Regularizer::L2Half { .. } => {}
            _ => {
                if self.gamma <= 0.0 {
                    return Err(ProxError::DegenerateSubproblem { gamma: self.gamma, c: self.c });
                }
            }
        }
        Ok(())
    }
}

/// Solves the inner minimization in closed form, writing into `out`.
///
/// * l1(λ): soft-thresholding, x_j = −sign(z_j)·max(|z_j| − cλ, 0)/γ;
/// * l2(μ/2‖·‖²): x = −z/(cμ + γ);
/// * ball(R): x = −z/γ projected onto the radius-R ball (c is ignored:
///   scaling an indicator does not change it);
/// * zero: x = −z/γ.
pub fn prox_solve_into(
    z: &[f64],
    c: f64,
    gamma: f64,
    regularizer: &Regularizer,
    out: &mut [f64],
) -> Result<()> {
    debug_assert_eq!(z.len(), out.len());
    let modulus = regularizer.modulus();
    if gamma + c * modulus <= 0.0 || (modulus == 0.0 && gamma <= 0.0) {
        return Err(ProxError::DegenerateSubproblem { gamma, c });
    }
    match *regularizer {
        Regularizer::L1 { lambda } => {
            let threshold = c * lambda;
            for (o, &zj) in out.iter_mut().zip(z) {
                let mag = (zj.abs() - threshold).max(0.0);
                *o = -zj.signum() * mag / gamma;
            }
        }
        Regularizer::L2Half { mu } => {
            let denom = c * mu + gamma;
            for (o, &zj) in out.iter_mut().zip(z) {
                *o = -zj / denom;
            }
        }
        Regularizer::Ball { radius } => {
            let znorm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            if znorm / gamma <= radius {
                for (o, &zj) in out.iter_mut().zip(z) {
                    *o = -zj / gamma;
                }
            } else {
                let scale = -radius / znorm;
                for (o, &zj) in out.iter_mut().zip(z) {
                    *o = scale * zj;
                }
            }
        }
        Regularizer::Zero => {
            for (o, &zj) in out.iter_mut().zip(z) {
                *o = -zj / gamma;
            }
        }
    }
    Ok(())
}

/// Solves a [`ProxQuery`], returning the unique minimizer.
pub fn prox_solve(query: &ProxQuery) -> Result<Vec<f64>> {
    query.validate()?;
    let mut out = vec![0.0; query.z.len()];
    prox_solve_into(&query.z, query.c, query.gamma, &query.regularizer, &mut out)?;
    Ok(out)
}

/// The objective <z, x> + c·h(x) + gamma·||x||²/2 (possibly +inf).
pub fn prox_objective(x: &[f64], query: &ProxQuery) -> f64 {
    let linear: f64 = x.iter().zip(&query.z).map(|(a, b)| a * b).sum();
    let quad: f64 = x.iter().map(|v| v * v).sum::<f64>() * 0.5;
    linear + query.c * query.regularizer.value(x) + query.gamma * quad
}

/// Brute-force oracle: exhaustive grid minimization over
/// `[-box_radius, box_radius]^m` at `resolution`, then iterative local
/// re-gridding (factor-5 shrink per round) down to 1e-8. Dimensions 1..=3
/// only. Independent of the closed forms above.
///
/// For the ball indicator in dimensions 2–3 the search runs in polar
/// coordinates: on a rectangular Cartesian grid, moves along the curved
/// boundary are infeasible, so refinement would stall at the boundary; the
/// polar parameter box has no such curvature.
pub fn prox_oracle(query: &ProxQuery, box_radius: f64, resolution: f64) -> Result<Vec<f64>> {
    query.validate()?;
    let dim = query.z.len();
    if dim == 0 || dim > 3 {
        return Err(ProxError::OracleScale(dim));
    }
    if !(box_radius > 0.0) || !(resolution > 0.0) {
        return Err(ProxError::InvalidArgument(
            "box_radius and resolution must be positive".into(),
        ));
    }

    if let Regularizer::Ball { radius } = query.regularizer {
        if dim >= 2 {
            return Ok(ball_oracle(query, radius, dim));
        }
    }

    let objective = |x: &[f64]| prox_objective(x, query);
    let origin = vec![0.0; dim];
    let best = shrinking_grid(
        &objective,
        &origin,
        &vec![box_radius; dim],
        resolution,
        None,
        Some(&origin),
    );
    Ok(best.0)
}

fn ball_oracle(query: &ProxQuery, radius: f64, dim: usize) -> Vec<f64> {
    use std::f64::consts::PI;
    // Parameters: (r, theta) in 2-D, (r, theta, phi) in 3-D, r in [0, radius].
    let to_cartesian = |p: &[f64]| -> Vec<f64> {
        match dim {
            2 => vec![p[0] * p[1].cos(), p[0] * p[1].sin()],
            _ => vec![
                p[0] * p[2].sin() * p[1].cos(),
                p[0] * p[2].sin() * p[1].sin(),
                p[0] * p[2].cos(),
            ],
        }
    };
    let objective = |p: &[f64]| prox_objective(&to_cartesian(p), query);
    let (center, radii) = if dim == 2 {
        (vec![radius / 2.0, 0.0], vec![radius / 2.0, PI])
    } else {
        (vec![radius / 2.0, 0.0, PI / 2.0], vec![radius / 2.0, PI, PI / 2.0])
    };
    let lo = vec![0.0, f64::NEG_INFINITY, f64::NEG_INFINITY];
    let hi = vec![radius, f64::INFINITY, f64::INFINITY];
    let bounds = (&lo[..dim], &hi[..dim]);
    let best = shrinking_grid(&objective, &center, &radii, radius / 50.0, Some(bounds), None);
    to_cartesian(&best.0)
}

/// Exhaustive grid pass over an axis-aligned box followed by factor-5
/// shrinking local re-grids down to 1e-9 steps. `bounds` clamps coordinates;
/// `anchor` adds one always-evaluated candidate (a known-feasible point).
fn shrinking_grid(
    objective: &dyn Fn(&[f64]) -> f64,
    center: &[f64],
    radii: &[f64],
    resolution: f64,
    bounds: Option<(&[f64], &[f64])>,
    anchor: Option<&[f64]>,
) -> (Vec<f64>, f64) {
    let mut best = grid_pass(objective, center, radii, resolution, bounds, anchor);
    let mut step = resolution;
    while step > 1e-9 {
        let next_step = step / 5.0;
        // Three-step margin keeps the true minimizer (within one cell
        // diagonal of the incumbent) inside the refined box.
        let refined = grid_pass(
            objective,
            &best.0,
            &vec![3.0 * step; center.len()],
            next_step,
            bounds,
            None,
        );
        if refined.1 <= best.1 {
            best = refined;
        }
        step = next_step;
    }
    best
}

fn grid_pass(
    objective: &dyn Fn(&[f64]) -> f64,
    center: &[f64],
    radii: &[f64],
    step: f64,
    bounds: Option<(&[f64], &[f64])>,
    anchor: Option<&[f64]>,
) -> (Vec<f64>, f64) {
    let dim = center.len();
    let per_axis: Vec<usize> =
        radii.iter().map(|r| (2.0 * r / step).ceil() as usize + 1).collect();
    let (mut best_x, mut best_f) = match anchor {
        Some(a) => (a.to_vec(), objective(a)),
        None => (center.to_vec(), f64::INFINITY),
    };
    let mut point = vec![0.0; dim];
    let mut counters = vec![0usize; dim];
    loop {
        for d in 0..dim {
            let mut v = center[d] - radii[d] + counters[d] as f64 * step;
            if let Some((lo, hi)) = bounds {
                v = v.clamp(lo[d], hi[d]);
            }
            point[d] = v;
        }
        let f = objective(&point);
        if f < best_f {
            best_f = f;
            best_x.copy_from_slice(&point);
        }
        // Odometer increment over the grid.
        let mut d = 0;
        loop {
            counters[d] += 1;
            if counters[d] < per_axis[d] {
                break;
            }
            counters[d] = 0;
            d += 1;
            if d == dim {
                return (best_x, best_f);
            }
        }
    }
}
