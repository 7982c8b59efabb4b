//! Scripted scenarios on frozen synthetic collections.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use super::report::write_reports;
use super::runner::{run_benchmark, BenchReport, BenchRun};
use super::synth::{generate_synthetic, PlantStrength, SynthSpec};
use crate::engine::EngineConfig;
use crate::error::{Error, Result};
use crate::fusion::FusionMethod;
use crate::model::PathTag;

/// Relative slack allowed between consecutive latencies in the trade-off chain.
pub const LATENCY_NOISE: f64 = 0.10;
/// Minimum nDCG drop the corrupted path must cause.
pub const WEAKEST_LINK_MARGIN: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioName {
    WeakestLink,
    TradeoffMap,
    TrfVsRrf,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 3] = [
        ScenarioName::WeakestLink,
        ScenarioName::TradeoffMap,
        ScenarioName::TrfVsRrf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioName::WeakestLink => "weakest_link",
            ScenarioName::TradeoffMap => "tradeoff_map",
            ScenarioName::TrfVsRrf => "trf_vs_rrf",
        }
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s.replace('-', "_"))
            .ok_or_else(|| Error::Config(format!("unknown scenario {s:?}")))
    }
}

/// Every path planted with comparable strength.
pub fn clean_spec() -> SynthSpec {
    SynthSpec::default()
}

/// The clean collection with dense vectors made independent of relevance.
pub fn weakest_link_spec() -> SynthSpec {
    SynthSpec {
        noise_path: Some(PathTag::Dvs),
        ..clean_spec()
    }
}

/// Token tensors carry the most faithful signal.
pub fn trf_spec() -> SynthSpec {
    SynthSpec {
        doc_count: 3000,
        strength: PlantStrength {
            tens: 1.0,
            ..PlantStrength::uniform(0.6)
        },
        ..clean_spec()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioOutcome {
    pub name: ScenarioName,
    pub checks: Vec<Check>,
    pub run: BenchRun,
}

impl ScenarioOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn find(&self, combo: &[PathTag], method: FusionMethod) -> Option<&BenchReport> {
        self.run
            .reports
            .iter()
            .find(|r| r.combination == combo && r.fusion == method)
    }
}

pub fn scenario_spec(name: ScenarioName) -> SynthSpec {
    match name {
        ScenarioName::WeakestLink => weakest_link_spec(),
        ScenarioName::TradeoffMap => clean_spec(),
        ScenarioName::TrfVsRrf => trf_spec(),
    }
}

use PathTag::{Dvs, Fts, Svs, Tens};

/// Combinations and fusion methods each scenario measures.
pub fn scenario_plan(name: ScenarioName) -> (Vec<Vec<PathTag>>, Vec<FusionMethod>) {
    match name {
        ScenarioName::WeakestLink => (
            vec![vec![Fts], vec![Dvs], vec![Fts, Dvs]],
            vec![FusionMethod::Rrf],
        ),
        ScenarioName::TradeoffMap => (
            vec![
                vec![Fts],
                vec![Svs],
                vec![Dvs],
                vec![Tens],
                vec![Fts, Svs],
                vec![Fts, Svs, Dvs],
                vec![Fts, Svs, Dvs, Tens],
            ],
            vec![FusionMethod::Rrf],
        ),
        ScenarioName::TrfVsRrf => (
            vec![vec![Fts, Dvs], vec![Fts, Dvs, Tens]],
            vec![FusionMethod::Rrf, FusionMethod::Trf],
        ),
    }
}

/// Generates the scenario's collection under `out_dir/data`, benchmarks it and
/// writes reports plus `checks.txt` into `out_dir`.
pub fn run_scenario(name: ScenarioName, out_dir: &Path) -> Result<ScenarioOutcome> {
    run_scenario_with(name, &scenario_spec(name), out_dir)
}

pub fn run_scenario_with(name: ScenarioName, spec: &SynthSpec, out_dir: &Path) -> Result<ScenarioOutcome> {
    let data = generate_synthetic(spec)?;
    let files = data.write(&out_dir.join("data"))?;
    drop(data);
    let mut cfg = EngineConfig::load(&files.config())?;
    let (combos, methods) = scenario_plan(name);
    let mut paradigms: Vec<PathTag> = combos.iter().flatten().copied().collect();
    paradigms.sort();
    paradigms.dedup();
    cfg.paradigms = paradigms;
    cfg.bench.combinations = Some(combos);
    cfg.bench.fusion_methods = methods;
    let run = run_benchmark(&cfg)?;
    write_reports(out_dir, &run)?;
    let mut outcome = ScenarioOutcome {
        name,
        checks: Vec::new(),
        run,
    };
    outcome.checks = evaluate_checks(&outcome)?;
    let text: String = outcome
        .checks
        .iter()
        .map(|c| format!("{} {}: {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail))
        .collect();
    let path = out_dir.join("checks.txt");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(outcome)
}

fn get<'a>(o: &'a ScenarioOutcome, combo: &[PathTag], m: FusionMethod) -> Result<&'a BenchReport> {
    o.find(combo, m).ok_or_else(|| {
        Error::Config(format!("scenario run lacks {} {m}", super::runner::combination_label(combo)))
    })
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check {
        name: name.to_string(),
        passed,
        detail,
    }
}

fn evaluate_checks(o: &ScenarioOutcome) -> Result<Vec<Check>> {
    let rrf = FusionMethod::Rrf;
    Ok(match o.name {
        ScenarioName::WeakestLink => {
            let fts = get(o, &[Fts], rrf)?.ndcg_at_k;
            let dvs = get(o, &[Dvs], rrf)?.ndcg_at_k;
            let fused = get(o, &[Fts, Dvs], rrf)?.ndcg_at_k;
            let best = fts.max(dvs);
            vec![check(
                "fused_below_best_single",
                fused <= best - WEAKEST_LINK_MARGIN,
                format!("FTS {fts:.4}, DVS {dvs:.4}, FTS+DVS RRF {fused:.4}, drop {:.4}", best - fused),
            )]
        }
        ScenarioName::TradeoffMap => {
            let chain: [&[PathTag]; 4] = [&[Fts], &[Fts, Svs], &[Fts, Svs, Dvs], &[Fts, Svs, Dvs, Tens]];
            let lat: Vec<f64> = chain
                .iter()
                .map(|c| get(o, c, rrf).map(|r| r.latency.mean_ms))
                .collect::<Result<_>>()?;
            let monotone = lat.windows(2).all(|w| w[1] >= w[0] * (1.0 - LATENCY_NOISE));
            let singles: Vec<(PathTag, f64)> = [Fts, Svs, Dvs, Tens]
                .iter()
                .map(|&p| get(o, &[p], rrf).map(|r| (p, r.ndcg_at_k)))
                .collect::<Result<_>>()?;
            let three = get(o, &[Fts, Svs, Dvs], rrf)?.ndcg_at_k;
            let best = singles.iter().map(|s| s.1).fold(0.0, f64::max);
            let fmt_lat: Vec<String> = lat.iter().map(|l| format!("{l:.3}")).collect();
            vec![
                check(
                    "latency_non_decreasing",
                    monotone,
                    format!("mean ms along 1..4 paths: {}", fmt_lat.join(" <= ")),
                ),
                check(
                    "four_paths_slower_than_fts",
                    lat[3] > lat[0],
                    format!("{:.3} ms vs {:.3} ms", lat[3], lat[0]),
                ),
                check(
                    "three_paths_beat_singles",
                    three >= best,
                    format!(
                        "FTS+SVS+DVS {three:.4} vs singles {}",
                        singles
                            .iter()
                            .map(|(p, v)| format!("{p} {v:.4}"))
                            .collect::<Vec<_>>()
                            .join(", ")
                    ),
                ),
            ]
        }
        ScenarioName::TrfVsRrf => {
            let r = get(o, &[Fts, Dvs], rrf)?;
            let t = get(o, &[Fts, Dvs], FusionMethod::Trf)?;
            let full = get(o, &[Fts, Dvs, Tens], rrf)?;
            vec![
                check(
                    "trf_ndcg_at_least_rrf",
                    t.ndcg_at_k >= r.ndcg_at_k,
                    format!("TRF {:.4} vs RRF {:.4}", t.ndcg_at_k, r.ndcg_at_k),
                ),
                check(
                    "trf_peak_below_full_tens",
                    t.query_peak_bytes < full.query_peak_bytes,
                    format!(
                        "FTS+DVS TRF {} bytes vs FTS+DVS+TENS {} bytes",
                        t.query_peak_bytes, full.query_peak_bytes
                    ),
                ),
            ]
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_parse() {
        for n in ScenarioName::ALL {
            assert_eq!(n.as_str().parse::<ScenarioName>().unwrap(), n);
        }
        assert_eq!("trf-vs-rrf".parse::<ScenarioName>().unwrap(), ScenarioName::TrfVsRrf);
        assert!("other".parse::<ScenarioName>().is_err());
    }

    #[test]
    fn frozen_specs_are_valid() {
        for n in ScenarioName::ALL {
            scenario_spec(n).validate().unwrap();
        }
    }
}
