//! Metrics, synthetic data, benchmark runner and scripted scenarios.

pub mod metrics;
pub mod probe;
pub mod qrels;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod synth;

pub use metrics::{mean_defined, ndcg_at_k, recall_at_k, LatencyStats};
pub use qrels::Qrels;
pub use runner::{run_benchmark, BenchReport, BenchRun, QuerySet};
pub use scenario::{run_scenario, ScenarioName, ScenarioOutcome};
pub use synth::{generate_synthetic, PlantStrength, SynthData, SynthSpec};
