//! Differentially private distributed dual averaging (DDA) with node sampling,
//! simulated over gossip networks.
//!
//! The crate is organized around the pipeline of a private distributed
//! empirical-risk-minimization experiment:
//!
//! * [`topology`] — graphs, random matching sampling, Metropolis gossip
//!   matrices, and Monte-Carlo estimation of the mixing parameter beta.
//! * [`privacy`] — the exact DP accountant: Gaussian mechanism, amplification
//!   by node sampling, heterogeneous advanced composition, noise calibration,
//!   and the intermediate privacy-loss curve.
//! * [`problems`] — hinge-loss SVM instances with l1/l2/ball regularizers,
//!   LIBSVM ingestion, synthetic data, and even partitioning across nodes.
//! * [`prox`] — closed-form solvers for the dual-averaging inner
//!   minimization, plus an independent grid oracle for testing.
//! * [`engine`] — the private DDA loop itself: dual mixing, primal recovery,
//!   ergodic averages, the auxiliary consensus sequence, and run traces.
//! * [`metrics`] — suboptimality/consensus summaries and the theoretical
//!   bound envelopes overlaid on empirical traces.
//! * [`reference`] — a deterministic centralized solver producing the ground
//!   truth (x*, F(x*)) used by the experiment harness.
//! * [`exec`] — sequential/parallel execution of independent trials
//!   (parallelism via rayon behind the default `parallel` feature).
//!
//! All randomized components take explicit seeds and are deterministic:
//! rerunning any experiment with the same configuration produces identical
//! results, independent of thread count.

pub mod engine;
pub mod exec;
pub mod metrics;
pub mod privacy;
pub mod problems;
pub mod prox;
pub mod reference;
mod seeding;
pub mod topology;
