//! The four subcommands: calibrate, reference, run, sweep.

use std::path::{Path, PathBuf};

use pridda::engine::{self, NoiseModel, RunConfig};
use pridda::exec::{thread_cap_from_env, ExecMode};
use pridda::metrics::{aggregate_traces, annotate_trace, BoundParams};
use pridda::privacy::{calibrate, min_horizon, PrivacyBudget};
use pridda::reference::{solve_reference, ReferenceOptions};

use crate::config::{build_experiment, Experiment, ExperimentConfig};
use crate::error::{CliError, Result};
use crate::format::{
    aggregate_csv, float17, read_reference, reference_file, trace_csv, write_file,
};

/// Flags shared by the experiment commands.
pub struct RunFlags {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
    pub trace_stride: Option<u64>,
}

pub struct CalibrateArgs {
    pub epsilon: f64,
    pub delta0: f64,
    pub iota: f64,
    pub lipschitz: f64,
    pub samples_per_node: u64,
    pub horizon: Option<u64>,
}

/// Prints the calibration report as key=value lines.
pub fn cmd_calibrate(args: &CalibrateArgs, out: &mut impl std::io::Write) -> Result<()> {
    let minimum = min_horizon(args.epsilon, args.iota);
    let horizon = args.horizon.unwrap_or(minimum);
    let budget = PrivacyBudget::new(
        args.epsilon,
        args.delta0,
        args.iota,
        args.lipschitz,
        args.samples_per_node,
        horizon,
    )
    .map_err(CliError::config)?;
    let cal = calibrate(&budget).map_err(CliError::config)?;
    let mut lines = String::new();
    for (key, value) in [
        ("epsilon", float17(budget.epsilon)),
        ("delta0", float17(budget.delta0)),
        ("iota", float17(budget.iota)),
        ("lipschitz", float17(budget.lipschitz)),
        ("q", budget.samples_per_node.to_string()),
        ("horizon", budget.horizon.to_string()),
        ("min_horizon", minimum.to_string()),
        ("sigma_squared", float17(cal.sigma_squared)),
        ("sigma", float17(cal.sigma)),
        ("per_step_epsilon", float17(cal.per_step_epsilon)),
        ("amplified_epsilon", float17(cal.amplified_epsilon)),
        ("amplified_epsilon_exact", float17(cal.amplified_epsilon_exact)),
        ("amplified_delta", float17(cal.amplified_delta)),
        ("achieved_epsilon", float17(cal.final_epsilon)),
        ("achieved_delta", float17(cal.final_delta)),
    ] {
        lines.push_str(&format!("{key}={value}\n"));
    }
    out.write_all(lines.as_bytes()).map_err(CliError::runtime)
}

fn out_dir(config: &ExperimentConfig, flags_out: &Option<PathBuf>) -> Result<PathBuf> {
    flags_out
        .clone()
        .or_else(|| config.run.out_dir.clone())
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set run.out_dir".into()))
}

fn reference_path(config: &ExperimentConfig, dir: &Path) -> PathBuf {
    let rel = config.run.reference.clone().unwrap_or_else(|| PathBuf::from("reference.kv"));
    if rel.is_absolute() {
        rel
    } else {
        dir.join(rel)
    }
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."))
}

fn apply_overrides(config: &mut ExperimentConfig, flags: &RunFlags) {
    if let Some(seeds) = &flags.seeds {
        config.run.seeds = seeds.clone();
    }
    if let Some(stride) = flags.trace_stride {
        config.run.trace_stride = stride;
    }
}

/// Computes the centralized reference solution and writes the reference file.
pub fn cmd_reference(flags: &RunFlags, iterations: Option<u64>) -> Result<()> {
    let mut config = ExperimentConfig::load(&flags.config)?;
    apply_overrides(&mut config, flags);
    let dir = out_dir(&config, &flags.out)?;
    let experiment = build_experiment(&config, &config_dir(&flags.config))?;
    let opts = ReferenceOptions {
        max_iterations: iterations.unwrap_or(200_000),
        gamma: config.schedule.gamma.unwrap_or(1.0),
        ..Default::default()
    };
    let solution = solve_reference(&experiment.problem, &opts).map_err(CliError::runtime)?;
    let path = reference_path(&config, &dir);
    write_file(
        &path,
        &reference_file(&solution.as_reference(), solution.iterations_run, solution.converged),
    )?;
    println!("reference: f_star={} written to {}", float17(solution.f_star), path.display());
    Ok(())
}

fn bound_params(experiment: &Experiment, d_xstar: f64) -> BoundParams {
    BoundParams {
        lipschitz: experiment.problem.lipschitz(),
        beta: experiment.beta,
        iota: experiment.sampler.iota(),
        mu: experiment.problem.regularizer().modulus(),
        sigma: experiment.noise.sigma(),
        dimension: experiment.problem.dimension(),
        d_xstar,
        schedule: experiment.schedule,
    }
}

fn run_experiment(
    experiment: &Experiment,
    config: &ExperimentConfig,
    reference: &pridda::engine::Reference,
) -> Result<Vec<engine::RunTrace>> {
    let configs: Vec<RunConfig> = config
        .run
        .seeds
        .iter()
        .map(|&seed| RunConfig {
            problem: experiment.problem.clone(),
            schedule: experiment.schedule,
            sampler: experiment.sampler.clone(),
            noise: experiment.noise,
            horizon: config.run.horizon,
            seed,
            trace_stride: config.run.trace_stride,
            reference: Some(reference.clone()),
        })
        .collect();
    for cfg in &configs {
        cfg.validate().map_err(CliError::config)?;
    }
    let mut traces =
        engine::run_many_capped(&configs, ExecMode::auto(), thread_cap_from_env())
            .map_err(CliError::runtime)?;
    let d_xstar = 0.5 * reference.x_star.iter().map(|v| v * v).sum::<f64>();
    let params = bound_params(experiment, d_xstar);
    for trace in &mut traces {
        annotate_trace(trace, &params).map_err(CliError::runtime)?;
    }
    Ok(traces)
}

fn run_metadata(config: &ExperimentConfig, experiment: &Experiment) -> String {
    let mut meta = String::new();
    meta.push_str(&format!("horizon={}\n", config.run.horizon));
    meta.push_str(&format!("trace_stride={}\n", config.run.trace_stride));
    meta.push_str(&format!("nodes={}\n", experiment.problem.node_count()));
    meta.push_str(&format!("dimension={}\n", experiment.problem.dimension()));
    meta.push_str(&format!("iota={}\n", float17(experiment.sampler.iota())));
    meta.push_str(&format!("beta={}\n", float17(experiment.beta)));
    meta.push_str(&format!("sigma={}\n", float17(experiment.noise.sigma())));
    match &experiment.noise {
        NoiseModel::Calibrated(cal) => {
            meta.push_str(&format!("epsilon={}\n", float17(cal.budget.epsilon)));
            meta.push_str(&format!("delta0={}\n", float17(cal.budget.delta0)));
            meta.push_str(&format!("achieved_epsilon={}\n", float17(cal.final_epsilon)));
            meta.push_str(&format!("achieved_delta={}\n", float17(cal.final_delta)));
        }
        NoiseModel::Noiseless => meta.push_str("epsilon=none\n"),
    }
    // The eps_hat column applies the intermediate-loss curve with this run's
    // own calibration; the no-sampling baseline uses it with iota = 1.
    meta.push_str("eps_hat_accounting=intermediate_loss_curve\n");
    meta
}

/// Runs the experiment across seeds, writing one CSV per seed plus the
/// seed-aggregated CSV and a metadata file.
pub fn cmd_run(flags: &RunFlags) -> Result<()> {
    let mut config = ExperimentConfig::load(&flags.config)?;
    apply_overrides(&mut config, flags);
    let dir = out_dir(&config, &flags.out)?;
    let experiment = build_experiment(&config, &config_dir(&flags.config))?;
    let reference = read_reference(&reference_path(&config, &dir))?;
    if reference.x_star.len() != experiment.problem.dimension() {
        return Err(CliError::Config(format!(
            "reference dimension {} does not match problem dimension {}",
            reference.x_star.len(),
            experiment.problem.dimension()
        )));
    }

    let traces = run_experiment(&experiment, &config, &reference)?;
    for trace in &traces {
        write_file(&dir.join(format!("trace_seed_{}.csv", trace.seed)), &trace_csv(trace))?;
    }
    let agg = aggregate_traces(&traces).map_err(CliError::runtime)?;
    write_file(&dir.join("aggregate.csv"), &aggregate_csv(&agg))?;
    write_file(&dir.join("run_meta.txt"), &run_metadata(&config, &experiment))?;

    if let Some(last) = agg.last() {
        println!(
            "run: {} seeds, T={}, final mean suboptimality {}",
            traces.len(),
            config.run.horizon,
            float17(last.subopt_mean_ergodic.mean)
        );
    }
    Ok(())
}

/// Applies one sweep-axis value to a copy of the configuration.
fn apply_axis(config: &ExperimentConfig, axis: &str, value: f64) -> Result<ExperimentConfig> {
    let mut modified = config.clone();
    match axis {
        "epsilon" => {
            modified.privacy.epsilon = Some(value);
        }
        "iota" => {
            let n = config.problem.nodes as f64;
            if (value - 1.0).abs() < 1e-12 {
                modified.topology.strategy = "full".into();
                modified.topology.k = None;
            } else {
                let k = value * n / 2.0;
                if (k - k.round()).abs() > 1e-9 || k < 1.0 {
                    return Err(CliError::Config(format!(
                        "iota value {value} does not correspond to an integer matching size on {n} nodes"
                    )));
                }
                modified.topology.strategy = "matching".into();
                modified.topology.k = Some(k.round() as usize);
            }
        }
        "k_edges" => {
            if (value - value.round()).abs() > 1e-9 || value < 1.0 {
                return Err(CliError::Config(format!("k_edges value {value} must be a positive integer")));
            }
            modified.topology.strategy = "matching".into();
            modified.topology.k = Some(value.round() as usize);
        }
        other => return Err(CliError::Config(format!("unknown sweep axis {other:?}"))),
    }
    Ok(modified)
}

/// Matched-seed comparison across the configured axis; emits one long-format
/// CSV of final suboptimality per (value, seed).
pub fn cmd_sweep(flags: &RunFlags) -> Result<()> {
    let mut config = ExperimentConfig::load(&flags.config)?;
    apply_overrides(&mut config, flags);
    let sweep = config
        .sweep
        .clone()
        .ok_or_else(|| CliError::Config("sweep command needs a [sweep] section".into()))?;
    if sweep.values.is_empty() {
        return Err(CliError::Config("sweep.values must not be empty".into()));
    }
    let dir = out_dir(&config, &flags.out)?;

    let mut csv = String::from("axis,value,seed,final_subopt\n");
    let mut finals: Vec<Vec<f64>> = Vec::new();
    for &value in &sweep.values {
        let modified = apply_axis(&config, &sweep.axis, value)?;
        let experiment = build_experiment(&modified, &config_dir(&flags.config))?;
        let reference = read_reference(&reference_path(&modified, &dir))?;
        let traces = run_experiment(&experiment, &modified, &reference)?;
        let mut row = Vec::with_capacity(traces.len());
        for trace in &traces {
            let final_subopt = trace.final_suboptimality().ok_or_else(|| {
                CliError::Runtime("trace recorded no rows; lower trace_stride".into())
            })?;
            csv.push_str(&format!(
                "{},{},{},{}\n",
                sweep.axis,
                float17(value),
                trace.seed,
                float17(final_subopt)
            ));
            row.push(final_subopt);
        }
        finals.push(row);
    }
    write_file(&dir.join(format!("sweep_{}.csv", sweep.axis)), &csv)?;

    // Pairwise matched-seed win rates against the first value.
    for (i, row) in finals.iter().enumerate().skip(1) {
        let wins = finals[0].iter().zip(row).filter(|(a, b)| a < b).count();
        println!(
            "sweep {}: value {} beats value {} on {}/{} matched seeds",
            sweep.axis,
            float17(sweep.values[0]),
            float17(sweep.values[i]),
            wins,
            row.len()
        );
    }
    Ok(())
}
