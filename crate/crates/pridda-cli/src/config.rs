//! Experiment configuration: flat TOML sections [problem], [schedule],
//! [privacy], [topology], [run], and optionally [sweep]. Unknown keys are
//! errors.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use pridda::engine::{NoiseModel, Schedule};
use pridda::privacy::{calibrate, PrivacyBudget};
use pridda::problems::{
    generate_synthetic, parse_libsvm, partition_even, ProblemInstance, Regularizer,
};
use pridda::topology::{
    analytic_beta_complete_matching, FullMixingSampler, GossipSampler, Graph, MatchingSampler,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSection,
    pub schedule: ScheduleSection,
    pub privacy: PrivacySection,
    pub topology: TopologySection,
    pub run: RunSection,
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    /// "synthetic" or "libsvm".
    pub source: String,
    pub nodes: usize,
    /// "l1" | "l2_half" | "ball" | "zero".
    pub regularizer: String,
    pub reg_param: Option<f64>,
    /// Optional Lipschitz override; defaults to the max feature norm.
    pub lipschitz: Option<f64>,
    // synthetic:
    pub samples: Option<usize>,
    pub dimension: Option<usize>,
    pub margin: Option<f64>,
    /// Seed for data generation and partitioning (shared across runs so
    /// matched-seed comparisons see identical data).
    pub data_seed: Option<u64>,
    // libsvm:
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    /// "strongly_convex" | "convex" | "constant_gamma".
    pub kind: String,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivacySection {
    /// "calibrated" | "noiseless".
    pub mode: String,
    pub epsilon: Option<f64>,
    pub delta0: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    /// "matching" | "full". The supergraph is complete on [problem].nodes.
    pub strategy: String,
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub horizon: u64,
    pub trace_stride: u64,
    pub seeds: Vec<u64>,
    /// Reference-solution file, resolved against the output directory.
    pub reference: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// "epsilon" | "iota" | "k_edges".
    pub axis: String,
    pub values: Vec<f64>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {path:?}: {e}")))?;
        let config: ExperimentConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("config error: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.seeds.is_empty() {
            return Err(CliError::Config("run.seeds must not be empty".into()));
        }
        if self.run.horizon == 0 || self.run.trace_stride == 0 {
            return Err(CliError::Config("run.horizon and run.trace_stride must be >= 1".into()));
        }
        match self.privacy.mode.as_str() {
            "noiseless" => {}
            "calibrated" => {
                if self.privacy.epsilon.is_none() || self.privacy.delta0.is_none() {
                    return Err(CliError::Config(
                        "calibrated privacy needs epsilon and delta0".into(),
                    ));
                }
            }
            other => return Err(CliError::Config(format!("unknown privacy mode {other:?}"))),
        }
        Ok(())
    }
}

/// The materialized experiment: everything `run`/`sweep` needs beyond seeds.
pub struct Experiment {
    pub problem: Arc<ProblemInstance>,
    pub schedule: Schedule,
    pub sampler: Arc<dyn GossipSampler>,
    pub noise: NoiseModel,
    /// Analytic mixing parameter for the configured strategy.
    pub beta: f64,
}

pub fn build_problem(section: &ProblemSection, config_dir: &Path) -> Result<Arc<ProblemInstance>> {
    let regularizer = match section.regularizer.as_str() {
        "l1" => Regularizer::L1 {
            lambda: require(section.reg_param, "problem.reg_param for l1")?,
        },
        "l2_half" => Regularizer::L2Half {
            mu: require(section.reg_param, "problem.reg_param for l2_half")?,
        },
        "ball" => Regularizer::Ball {
            radius: require(section.reg_param, "problem.reg_param for ball")?,
        },
        "zero" => Regularizer::Zero,
        other => return Err(CliError::Config(format!("unknown regularizer {other:?}"))),
    };
    let samples = match section.source.as_str() {
        "synthetic" => {
            let n_samples = require(section.samples, "problem.samples")?;
            let dimension = require(section.dimension, "problem.dimension")?;
            let margin = section.margin.unwrap_or(0.0);
            let mut rng = ChaCha8Rng::seed_from_u64(section.data_seed.unwrap_or(0));
            generate_synthetic(n_samples, dimension, margin, &mut rng)
        }
        "libsvm" => {
            let rel = section
                .path
                .as_ref()
                .ok_or_else(|| CliError::Config("problem.path required for libsvm".into()))?;
            let path = if rel.is_absolute() { rel.clone() } else { config_dir.join(rel) };
            let file = fs::File::open(&path)
                .map_err(|e| CliError::Config(format!("cannot open dataset {path:?}: {e}")))?;
            let (samples, _) = parse_libsvm(BufReader::new(file), section.dimension)
                .map_err(CliError::config)?;
            samples
        }
        other => return Err(CliError::Config(format!("unknown problem source {other:?}"))),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(section.data_seed.unwrap_or(0).wrapping_add(1));
    let locals = partition_even(samples, section.nodes, &mut rng).map_err(CliError::config)?;
    let dimension = section.dimension;
    let problem = ProblemInstance::new(locals, regularizer, section.lipschitz, dimension)
        .map_err(CliError::config)?;
    Ok(Arc::new(problem))
}

pub fn build_schedule(section: &ScheduleSection, regularizer: &Regularizer) -> Result<Schedule> {
    let modulus = regularizer.modulus();
    match section.kind.as_str() {
        "strongly_convex" => Schedule::strongly_convex(modulus).map_err(CliError::config),
        "convex" => {
            Schedule::convex(require(section.gamma, "schedule.gamma")?).map_err(CliError::config)
        }
        "constant_gamma" => {
            Schedule::constant_gamma(require(section.gamma, "schedule.gamma")?, modulus)
                .map_err(CliError::config)
        }
        other => Err(CliError::Config(format!("unknown schedule kind {other:?}"))),
    }
}

pub struct BuiltSampler {
    pub sampler: Arc<dyn GossipSampler>,
    pub beta: f64,
}

pub fn build_sampler(section: &TopologySection, nodes: usize) -> Result<BuiltSampler> {
    let graph = Graph::complete(nodes).map_err(CliError::config)?;
    match section.strategy.as_str() {
        "matching" => {
            let k = require(section.k, "topology.k")?;
            let sampler = MatchingSampler::new(graph, k).map_err(CliError::config)?;
            let beta = analytic_beta_complete_matching(nodes, k).map_err(CliError::config)?;
            Ok(BuiltSampler { sampler: Arc::new(sampler), beta })
        }
        "full" => {
            let sampler = FullMixingSampler::new(graph).map_err(CliError::config)?;
            Ok(BuiltSampler { sampler: Arc::new(sampler), beta: 0.0 })
        }
        other => Err(CliError::Config(format!("unknown topology strategy {other:?}"))),
    }
}

pub fn build_noise(
    section: &PrivacySection,
    iota: f64,
    problem: &ProblemInstance,
    horizon: u64,
) -> Result<NoiseModel> {
    match section.mode.as_str() {
        "noiseless" => Ok(NoiseModel::Noiseless),
        "calibrated" => {
            let budget = PrivacyBudget::new(
                require(section.epsilon, "privacy.epsilon")?,
                require(section.delta0, "privacy.delta0")?,
                iota,
                problem.lipschitz(),
                problem.min_samples_per_node() as u64,
                horizon,
            )
            .map_err(CliError::config)?;
            Ok(NoiseModel::Calibrated(calibrate(&budget).map_err(CliError::config)?))
        }
        other => Err(CliError::Config(format!("unknown privacy mode {other:?}"))),
    }
}

/// Builds the full experiment from a parsed config.
pub fn build_experiment(config: &ExperimentConfig, config_dir: &Path) -> Result<Experiment> {
    let problem = build_problem(&config.problem, config_dir)?;
    let schedule = build_schedule(&config.schedule, problem.regularizer())?;
    let built = build_sampler(&config.topology, problem.node_count())?;
    let noise = build_noise(&config.privacy, built.sampler.iota(), &problem, config.run.horizon)?;
    Ok(Experiment { problem, schedule, sampler: built.sampler, noise, beta: built.beta })
}

fn require<T>(value: Option<T>, name: &str) -> Result<T> {
    value.ok_or_else(|| CliError::Config(format!("missing {name}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
        [problem]
        source = "synthetic"
        nodes = 4
        regularizer = "l2_half"
        reg_param = 0.1
        samples = 40
        dimension = 5
        margin = 0.5
        data_seed = 1

        [schedule]
        kind = "strongly_convex"

        [privacy]
        mode = "noiseless"

        [topology]
        strategy = "matching"
        k = 1

        [run]
        horizon = 100
        trace_stride = 10
        seeds = [1, 2]
    "#;

    #[test]
    fn parses_and_builds() {
        let config: ExperimentConfig = toml::from_str(BASE).unwrap();
        config.validate().unwrap();
        let exp = build_experiment(&config, Path::new(".")).unwrap();
        assert_eq!(exp.problem.node_count(), 4);
        assert_eq!(exp.sampler.iota(), 0.5);
        assert!(matches!(exp.noise, NoiseModel::Noiseless));
        assert!(exp.beta > 0.0 && exp.beta < 1.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = BASE.replace("margin = 0.5", "margin = 0.5\n        typo_key = 1");
        let parsed: std::result::Result<ExperimentConfig, _> = toml::from_str(&bad);
        assert!(parsed.is_err());
    }

    #[test]
    fn calibrated_mode_requires_budget_fields() {
        let bad = BASE.replace("mode = \"noiseless\"", "mode = \"calibrated\"");
        let config: ExperimentConfig = toml::from_str(&bad).unwrap();
        assert!(config.validate().is_err());
    }
}
