//! Report rendering: wide CSV, long CSV and a markdown summary.

use std::fmt::Write as _;
use std::path::Path;

use super::runner::{BenchReport, BenchRun};
use crate::error::{Error, Result};

pub const REPORTS_JSON: &str = "reports.json";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_LONG_CSV: &str = "report_long.csv";
pub const SUMMARY_MD: &str = "summary.md";

const CSV_HEADER: &str = "combination,fusion,k,ndcg,queries,latency_mean_ms,latency_p50_ms,latency_p95_ms,latency_cv,qps,qps_threads,index_bytes,build_peak_bytes,query_peak_bytes,repetitions_identical,digest";

fn metrics(r: &BenchReport) -> Vec<(&'static str, f64)> {
    vec![
        ("ndcg", r.ndcg_at_k),
        ("latency_mean_ms", r.latency.mean_ms),
        ("latency_p50_ms", r.latency.p50_ms),
        ("latency_p95_ms", r.latency.p95_ms),
        ("qps", r.qps),
        ("index_bytes", r.index_bytes as f64),
        ("build_peak_bytes", r.build_peak_bytes as f64),
        ("query_peak_bytes", r.query_peak_bytes as f64),
    ]
}

pub fn to_csv(reports: &[BenchReport]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for r in reports {
        writeln!(
            out,
            "{},{},{},{:.6},{},{:.4},{:.4},{:.4},{:.4},{:.2},{},{},{},{},{},{}",
            r.label(),
            r.fusion,
            r.k,
            r.ndcg_at_k,
            r.queries_evaluated,
            r.latency.mean_ms,
            r.latency.p50_ms,
            r.latency.p95_ms,
            r.latency.cv,
            r.qps,
            r.qps_threads,
            r.index_bytes,
            r.build_peak_bytes,
            r.query_peak_bytes,
            r.repetitions_identical,
            r.digest
        )
        .unwrap();
    }
    out
}

/// One row per (combination, fusion, metric).
pub fn to_long_csv(reports: &[BenchReport]) -> String {
    let mut out = String::from("combination,fusion,n_paths,metric,value\n");
    for r in reports {
        for (m, v) in metrics(r) {
            writeln!(out, "{},{},{},{m},{v}", r.label(), r.fusion, r.combination.len()).unwrap();
        }
    }
    out
}

fn mib(b: u64) -> f64 {
    b as f64 / (1024.0 * 1024.0)
}

pub fn to_markdown(reports: &[BenchReport]) -> String {
    let mut out = String::new();
    if let Some(r) = reports.first() {
        if !r.single_path_ndcg.is_empty() {
            out.push_str("Single-path nDCG: ");
            let parts: Vec<String> = r
                .single_path_ndcg
                .iter()
                .map(|(p, v)| format!("{p} {v:.4}"))
                .collect();
            out.push_str(&parts.join(", "));
            out.push_str("\n\n");
        }
    }
    let k = reports.first().map_or(10, |r| r.k);
    writeln!(
        out,
        "| combination | fusion | nDCG@{k} | mean ms | p50 ms | p95 ms | QPS | index MiB | query peak MiB |"
    )
    .unwrap();
    out.push_str("|---|---|---:|---:|---:|---:|---:|---:|---:|\n");
    for r in reports {
        writeln!(
            out,
            "| {} | {} | {:.4} | {:.3} | {:.3} | {:.3} | {:.1} | {:.2} | {:.2} |",
            r.label(),
            r.fusion,
            r.ndcg_at_k,
            r.latency.mean_ms,
            r.latency.p50_ms,
            r.latency.p95_ms,
            r.qps,
            mib(r.index_bytes),
            mib(r.query_peak_bytes)
        )
        .unwrap();
    }
    out
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the JSON run plus CSV, long CSV and markdown into `dir`.
pub fn write_reports(dir: &Path, run: &BenchRun) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(
        &dir.join(REPORTS_JSON),
        &serde_json::to_string_pretty(run).expect("run serializes"),
    )?;
    write(&dir.join(REPORT_CSV), &to_csv(&run.reports))?;
    write(&dir.join(REPORT_LONG_CSV), &to_long_csv(&run.reports))?;
    write(&dir.join(SUMMARY_MD), &to_markdown(&run.reports))
}

pub fn read_reports(dir: &Path) -> Result<BenchRun> {
    let path = dir.join(REPORTS_JSON);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::metrics::LatencyStats;
    use crate::fusion::FusionMethod;
    use crate::model::PathTag;

    fn report() -> BenchReport {
        BenchReport {
            combination: vec![PathTag::Fts, PathTag::Dvs],
            fusion: FusionMethod::Rrf,
            k: 10,
            ndcg_at_k: 0.5,
            queries_evaluated: 3,
            latency: LatencyStats {
                mean_ms: 1.0,
                p50_ms: 1.0,
                p95_ms: 2.0,
                cv: 0.1,
            },
            qps: 900.0,
            qps_threads: 4,
            index_bytes: 2048,
            build_peak_bytes: 1 << 20,
            query_peak_bytes: 1 << 19,
            single_path_ndcg: [(PathTag::Fts, 0.7)].into_iter().collect(),
            digest: "ab".into(),
            repetitions_identical: true,
            mean_tensors_loaded: None,
        }
    }

    #[test]
    fn csv_has_one_row_per_report() {
        let csv = to_csv(&[report(), report()]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
        assert!(lines[1].starts_with("FTS+DVS,RRF,10,0.500000"));
    }

    #[test]
    fn long_csv_and_markdown() {
        let long = to_long_csv(&[report()]);
        assert_eq!(long.lines().count(), 1 + 8);
        assert!(long.contains("FTS+DVS,RRF,2,qps,900"));
        let md = to_markdown(&[report()]);
        assert!(md.contains("| FTS+DVS | RRF | 0.5000 |"));
        assert!(md.contains("FTS 0.7000"));
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let run = BenchRun {
            reports: vec![report()],
            build_peak_bytes: 1,
            build_seconds: 0.5,
            single_path_ndcg: Default::default(),
        };
        write_reports(dir.path(), &run).unwrap();
        assert_eq!(read_reports(dir.path()).unwrap(), run);
        assert!(dir.path().join(SUMMARY_MD).exists());
    }
}
