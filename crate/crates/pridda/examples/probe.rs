// Scratch probe for experiment-parameter tuning. Not part of the deliverable.
use std::sync::Arc;
use std::time::Instant;

use pridda::engine::{self, NoiseModel, Reference, RunConfig, Schedule};
use pridda::exec::ExecMode;
use pridda::metrics::{self, BoundParams, CorollaryBound};
use pridda::privacy::{calibrate, PrivacyBudget};
use pridda::problems::{generate_synthetic, partition_even, ProblemInstance, Regularizer};
use pridda::reference::{solve_reference, ReferenceOptions};
use pridda::topology::{analytic_beta_complete_matching, FullMixingSampler, Graph, MatchingSampler};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn build_problem(m: usize, reg: Regularizer, n: usize, samples: usize, margin: f64) -> Arc<ProblemInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(7_777);
    let data = generate_synthetic(samples, m, margin, &mut rng);
    let locals = partition_even(data, n, &mut rng).unwrap();
    Arc::new(ProblemInstance::new(locals, reg, Some(1.0), Some(m)).unwrap())
}

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "c5".into());
    match which.as_str() {
        "c5" => probe_c5(),
        "c6" => probe_c6(),
        "c7" => probe_c7(),
        "c8" => probe_c8(),
        "refq" => probe_refq(),
        _ => eprintln!("unknown probe"),
    }
}

fn probe_c5() {
    let n = 20;
    let m = 20;
    let mu = 0.05;
    let problem = build_problem(m, Regularizer::L2Half { mu }, n, 1000, 1.0);
    let t0 = Instant::now();
    let refsol = solve_reference(
        &problem,
        &ReferenceOptions { max_iterations: 300_000, eval_every: 1000, ..Default::default() },
    )
    .unwrap();
    println!(
        "reference: f*={:.10} iters={} converged={} in {:?}",
        refsol.f_star, refsol.iterations_run, refsol.converged, t0.elapsed()
    );
    let norm2: f64 = refsol.x_star.iter().map(|v| v * v).sum();
    println!("||x*||^2 = {norm2:.6}");

    let sampler = Arc::new(MatchingSampler::new(Graph::complete(n).unwrap(), 1).unwrap());
    let schedule = Schedule::strongly_convex(mu).unwrap();
    let configs: Vec<RunConfig> = (0..20)
        .map(|seed| RunConfig {
            problem: problem.clone(),
            schedule,
            sampler: sampler.clone(),
            noise: NoiseModel::Noiseless,
            horizon: 10_000,
            seed: 1000 + seed,
            trace_stride: 100,
            reference: Some(Reference { x_star: refsol.x_star.clone(), f_star: refsol.f_star }),
        })
        .collect();
    let t1 = Instant::now();
    let traces = engine::run_many(&configs, ExecMode::Parallel).unwrap();
    println!("20 noiseless runs in {:?}", t1.elapsed());

    let beta = analytic_beta_complete_matching(n, 1).unwrap();
    let params = BoundParams {
        lipschitz: 1.0,
        beta,
        iota: 0.1,
        mu,
        sigma: 0.0,
        dimension: m,
        d_xstar: 0.5 * norm2,
        schedule,
    };
    let agg = metrics::aggregate_traces(&traces).unwrap();
    let mut ok = true;
    let mut points = Vec::new();
    for row in &agg {
        let env = metrics::corollary_envelope(&params, CorollaryBound::C1, row.t).unwrap();
        let mean = row.mean_sq_dist_ergodic.mean;
        let margin = mean - 2.0 * row.mean_sq_dist_ergodic.se;
        if margin > env {
            ok = false;
        }
        if row.t >= 100 {
            points.push((row.t as f64, mean));
        }
        if row.t % 2000 == 0 || row.t <= 300 {
            println!(
                "t={:6} dist2={:.6e} (se {:.2e}) env={:.6e} dual_resid_max(first trace)={:.2e}",
                row.t, mean, row.mean_sq_dist_ergodic.se, env, traces[0].max_dual_residual
            );
        }
    }
    let slope = metrics::log_log_slope(&points).unwrap();
    println!("C1 bound ok={ok} slope={slope:.3}");
}

fn probe_c6() {
    let n = 20;
    let m = 20;
    let problem = build_problem(m, Regularizer::L1 { lambda: 0.01 }, n, 1000, 1.0);
    let t0 = Instant::now();
    let refsol = solve_reference(
        &problem,
        &ReferenceOptions { max_iterations: 300_000, gamma: 1.0, eval_every: 1000, ..Default::default() },
    )
    .unwrap();
    println!(
        "reference: f*={:.10} iters={} converged={} in {:?}",
        refsol.f_star, refsol.iterations_run, refsol.converged, t0.elapsed()
    );
    let norm2: f64 = refsol.x_star.iter().map(|v| v * v).sum();
    println!("||x*||^2 = {norm2:.6}");

    let gamma = 0.25;
    let sampler = Arc::new(MatchingSampler::new(Graph::complete(n).unwrap(), 1).unwrap());
    let schedule = Schedule::convex(gamma).unwrap();
    let configs: Vec<RunConfig> = (0..20)
        .map(|seed| RunConfig {
            problem: problem.clone(),
            schedule,
            sampler: sampler.clone(),
            noise: NoiseModel::Noiseless,
            horizon: 10_000,
            seed: 2000 + seed,
            trace_stride: 100,
            reference: Some(Reference { x_star: refsol.x_star.clone(), f_star: refsol.f_star }),
        })
        .collect();
    let traces = engine::run_many(&configs, ExecMode::Parallel).unwrap();
    println!("20 runs in {:?}", t0.elapsed());

    let beta = analytic_beta_complete_matching(n, 1).unwrap();
    let params = BoundParams {
        lipschitz: 1.0,
        beta,
        iota: 0.1,
        mu: 0.0,
        sigma: 0.0,
        dimension: m,
        d_xstar: 0.5 * norm2,
        schedule,
    };
    let agg = metrics::aggregate_traces(&traces).unwrap();
    let mut ok_sub = true;
    let mut ok_cons = true;
    let mut points = Vec::new();
    for row in &agg {
        let env_s = metrics::corollary_envelope(&params, CorollaryBound::C2Subopt, row.t).unwrap();
        let env_c =
            metrics::corollary_envelope(&params, CorollaryBound::C2Consensus, row.t).unwrap();
        if row.subopt_aux_ergodic.mean - 2.0 * row.subopt_aux_ergodic.se > env_s {
            ok_sub = false;
        }
        if row.consensus_ergodic.mean - 2.0 * row.consensus_ergodic.se > env_c {
            ok_cons = false;
        }
        if row.t >= 100 {
            points.push((row.t as f64, row.subopt_aux_ergodic.mean));
        }
        if row.t % 2000 == 0 || row.t <= 300 {
            println!(
                "t={:6} sub_y={:.6e} envS={:.6e}  cons_erg={:.6e} envC={:.6e}",
                row.t, row.subopt_aux_ergodic.mean, env_s, row.consensus_ergodic.mean, env_c
            );
        }
    }
    let slope = metrics::log_log_slope(&points).unwrap();
    println!("C2 ok_sub={ok_sub} ok_cons={ok_cons} slope={slope:.3}");
}

fn probe_c7() {
    let n = 20;
    let m = 10;
    let mu = 0.05;
    let problem = build_problem(m, Regularizer::L2Half { mu }, n, 1000, 1.0);
    let refsol = solve_reference(
        &problem,
        &ReferenceOptions { max_iterations: 300_000, eval_every: 1000, ..Default::default() },
    )
    .unwrap();
    println!("reference f*={:.10}", refsol.f_star);
    let norm2: f64 = refsol.x_star.iter().map(|v| v * v).sum();

    let beta = analytic_beta_complete_matching(n, 1).unwrap();
    let iota: f64 = 0.1;
    let scale = 2500.0 / (iota.powi(3) * (1.0 - beta).powi(2) * m as f64 * (1.0f64 / 0.01).ln());
    println!("corollary-3 scale T0 = {scale:.3e}");
    let horizon = 36_000u64;
    let budget = PrivacyBudget::new(1.0, 0.01, iota, 1.0, 50, horizon).unwrap();
    let cal = calibrate(&budget).unwrap();
    println!("sigma = {:.4}", cal.sigma);

    let sampler = Arc::new(MatchingSampler::new(Graph::complete(n).unwrap(), 1).unwrap());
    let schedule = Schedule::strongly_convex(mu).unwrap();
    let configs: Vec<RunConfig> = (0..50)
        .map(|seed| RunConfig {
            problem: problem.clone(),
            schedule,
            sampler: sampler.clone(),
            noise: NoiseModel::Calibrated(cal),
            horizon,
            seed: 3000 + seed,
            trace_stride: 360,
            reference: Some(Reference { x_star: refsol.x_star.clone(), f_star: refsol.f_star }),
        })
        .collect();
    let t0 = Instant::now();
    let traces = engine::run_many(&configs, ExecMode::Parallel).unwrap();
    println!("50 noisy runs in {:?}", t0.elapsed());

    let params = BoundParams {
        lipschitz: 1.0,
        beta,
        iota,
        mu,
        sigma: cal.sigma,
        dimension: m,
        d_xstar: 0.5 * norm2,
        schedule,
    };
    let ts: Vec<u64> = traces[0].rows.iter().map(|r| r.t).collect();
    let envs = metrics::theorem2_envelope_series(&params, &ts).unwrap();
    let agg = metrics::aggregate_traces(&traces).unwrap();
    let mut ok = true;
    for (row, env) in agg.iter().zip(&envs) {
        let a_t = schedule.cumulative(row.t);
        let lhs = a_t * (row.subopt_aux_ergodic.mean - 2.0 * row.subopt_aux_ergodic.se);
        let rhs = a_t * env;
        if lhs > rhs {
            ok = false;
        }
        if row.t % 7200 == 0 || row.t == 360 {
            println!(
                "t={:6} A_t*subopt={:.4e} (se {:.1e}) A_t*env={:.4e} eps_hat={:.4}",
                row.t,
                a_t * row.subopt_aux_ergodic.mean,
                a_t * row.subopt_aux_ergodic.se,
                rhs,
                row.eps_hat
            );
        }
    }
    println!("thm2 noisy ok={ok}");
}

fn probe_c8() {
    let n = 20;
    let m = 20;
    let horizon: u64 = std::env::args().nth(2).map(|v| v.parse().unwrap()).unwrap_or(2000);
    println!("horizon = {horizon}");
    let seeds: Vec<u64> = (0..30).collect();
    for (name, reg, schedule, gamma_ref) in [
        (
            "l2",
            Regularizer::L2Half { mu: 0.05 },
            Schedule::strongly_convex(0.05).unwrap(),
            1.0,
        ),
        ("l1", Regularizer::L1 { lambda: 0.01 }, Schedule::convex(0.25).unwrap(), 0.25),
    ] {
        let problem = build_problem(m, reg, n, 1000, 1.0);
        let refsol = solve_reference(
            &problem,
            &ReferenceOptions {
                max_iterations: 200_000,
                gamma: gamma_ref,
                eval_every: 1000,
                ..Default::default()
            },
        )
        .unwrap();
        let reference = Reference { x_star: refsol.x_star.clone(), f_star: refsol.f_star };

        let mut finals: Vec<Vec<f64>> = Vec::new();
        for k in [1usize, 2] {
            let sampler = Arc::new(MatchingSampler::new(Graph::complete(n).unwrap(), k).unwrap());
            let iota = 2.0 * k as f64 / n as f64;
            let budget = PrivacyBudget::new(1.0, 0.01, iota, 1.0, 50, horizon).unwrap();
            let cal = calibrate(&budget).unwrap();
            let configs: Vec<RunConfig> = seeds
                .iter()
                .map(|&seed| RunConfig {
                    problem: problem.clone(),
                    schedule,
                    sampler: sampler.clone(),
                    noise: NoiseModel::Calibrated(cal),
                    horizon,
                    seed: 4000 + seed,
                    trace_stride: horizon,
                    reference: Some(reference.clone()),
                })
                .collect();
            let traces = engine::run_many(&configs, ExecMode::Parallel).unwrap();
            finals.push(traces.iter().map(|t| t.final_suboptimality().unwrap()).collect());
            println!(
                "{name} k={k}: sigma={:.3} mean final subopt = {:.4}",
                cal.sigma,
                finals.last().unwrap().iter().sum::<f64>() / 30.0
            );
        }
        // Baseline iota = 1.
        let sampler = Arc::new(FullMixingSampler::new(Graph::complete(n).unwrap()).unwrap());
        let budget = PrivacyBudget::new(1.0, 0.01, 1.0, 1.0, 50, horizon).unwrap();
        let cal = calibrate(&budget).unwrap();
        let configs: Vec<RunConfig> = seeds
            .iter()
            .map(|&seed| RunConfig {
                problem: problem.clone(),
                schedule,
                sampler: sampler.clone(),
                noise: NoiseModel::Calibrated(cal),
                horizon,
                seed: 4000 + seed,
                trace_stride: horizon,
                reference: Some(reference.clone()),
            })
            .collect();
        let traces = engine::run_many(&configs, ExecMode::Parallel).unwrap();
        let base: Vec<f64> = traces.iter().map(|t| t.final_suboptimality().unwrap()).collect();
        println!(
            "{name} base: sigma={:.3} mean final subopt = {:.4}",
            cal.sigma,
            base.iter().sum::<f64>() / 30.0
        );

        let k1_vs_base =
            finals[0].iter().zip(&base).filter(|(a, b)| a < b).count() as f64 / 30.0;
        let k1_vs_k2 =
            finals[0].iter().zip(&finals[1]).filter(|(a, b)| a < b).count() as f64 / 30.0;
        println!("{name}: k1<base {:.0}%  k1<k2 {:.0}%", 100.0 * k1_vs_base, 100.0 * k1_vs_k2);
    }
}

fn probe_refq() {
    let problem = build_problem(20, Regularizer::L1 { lambda: 0.01 }, 20, 1000, 1.0);
    for (iters, gamma) in [(300_000u64, 1.0), (1_200_000, 1.0), (300_000, 0.25), (1_200_000, 0.25)] {
        let t0 = Instant::now();
        let r = solve_reference(
            &problem,
            &ReferenceOptions { max_iterations: iters, gamma, eval_every: 1000, ..Default::default() },
        )
        .unwrap();
        println!(
            "iters={iters} gamma={gamma}: f*={:.12} converged={} in {:?}",
            r.f_star, r.converged, t0.elapsed()
        );
    }
}
