use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hsearch::bench::report::{read_reports, to_csv, to_long_csv, to_markdown, write_reports};
use hsearch::bench::scenario::{run_scenario_with, scenario_spec};
use hsearch::bench::{generate_synthetic, run_benchmark, QuerySet, ScenarioName, SynthSpec};
use hsearch::engine::{load_indexes, save_indexes, EngineConfig, EngineHandle, LoadOptions, QuerySpec};
use hsearch::fusion::FusionMethod;
use hsearch::{Error, PathTag, Result};
use serde_json::json;

#[derive(Parser)]
#[command(name = "hsearch", version, about = "Hybrid retrieval: build, search and benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build every configured index and save it to `paths.index_dir`.
    Build {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a query file against saved indexes; writes one JSON line per query.
    Search {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `paths.queries`.
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated paths, e.g. FTS,DVS. Defaults to the configured paradigms.
        #[arg(long, value_delimiter = ',')]
        paths: Option<Vec<PathTag>>,
        #[arg(long)]
        fusion: Option<FusionMethod>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Benchmark all configured combinations and fusion methods.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a saved benchmark report.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Md)]
        format: Format,
    },
    /// Write a synthetic collection and a matching config.json.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Start from a scenario's frozen spec instead of the default one.
        #[arg(long)]
        scenario: Option<ScenarioName>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        docs: Option<usize>,
        #[arg(long)]
        queries: Option<usize>,
        #[arg(long)]
        noise_path: Option<PathTag>,
    },
    /// Run a scripted scenario end to end and check its expected outcome.
    Scenario {
        name: ScenarioName,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Long,
    Md,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Build { config } => build(&config)?,
        Command::Search { config, queries, out, paths, fusion, k } => {
            let mut cfg = EngineConfig::load(&config)?;
            if let Some(q) = queries {
                cfg.paths.queries = Some(q);
            }
            if let Some(m) = fusion {
                cfg.fusion.method = m;
            }
            if let Some(k) = k {
                cfg.fusion.k = k;
            }
            let paths = paths.unwrap_or_else(|| cfg.paradigms.clone());
            search(&cfg, &paths, &out)?;
        }
        Command::Bench { config, out } => {
            let run = run_benchmark(&EngineConfig::load(&config)?)?;
            write_reports(&out, &run)?;
            print!("{}", to_markdown(&run.reports));
        }
        Command::Report { input, format } => {
            let run = read_reports(&input)?;
            let text = match format {
                Format::Csv => to_csv(&run.reports),
                Format::Long => to_long_csv(&run.reports),
                Format::Md => to_markdown(&run.reports),
            };
            print!("{text}");
        }
        Command::Synth { out, scenario, seed, docs, queries, noise_path } => {
            let mut spec = scenario.map_or_else(SynthSpec::default, scenario_spec);
            if let Some(s) = seed {
                spec.seed = s;
            }
            if let Some(n) = docs {
                spec.doc_count = n;
            }
            if let Some(n) = queries {
                spec.n_queries = n;
            }
            if noise_path.is_some() {
                spec.noise_path = noise_path;
            }
            let files = generate_synthetic(&spec)?.write(&out)?;
            println!("{}", files.config().display());
        }
        Command::Scenario { name, out, seed } => {
            let mut spec = scenario_spec(name);
            if let Some(s) = seed {
                spec.seed = s;
            }
            let outcome = run_scenario_with(name, &spec, &out)?;
            print!("{}", to_markdown(&outcome.run.reports));
            for c in &outcome.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if !outcome.passed() {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn build(config: &Path) -> Result<()> {
    let cfg = EngineConfig::load(config)?;
    let dir = cfg.index_dir()?;
    let handle = EngineHandle::build(&cfg)?;
    save_indexes(&handle, dir)?;
    eprintln!("indexed {} documents into {}", handle.manifest.doc_count(), dir.display());
    Ok(())
}

fn search(cfg: &EngineConfig, paths: &[PathTag], out: &Path) -> Result<()> {
    let queries = QuerySet::load(cfg)?;
    let needs_store = cfg.fusion.method == FusionMethod::Trf || paths.contains(&PathTag::Tens);
    let handle = load_indexes(cfg.index_dir()?, &LoadOptions::for_paths(paths, needs_store, cfg.search_params()))?;
    let file = File::create(out).map_err(|e| io_err(out, e))?;
    let mut w = BufWriter::new(file);
    for (qid, payloads) in queries.ids.iter().zip(queries.payloads) {
        let spec = QuerySpec::new(paths, payloads, cfg.fusion.clone());
        let result = handle.search(&spec)?;
        let hits: Vec<_> = result
            .fused
            .hits
            .iter()
            .map(|h| json!({"docid": handle.manifest.external_id(h.doc), "score": h.score}))
            .collect();
        writeln!(w, "{}", json!({"qid": qid, "hits": hits})).map_err(|e| io_err(out, e))?;
    }
    w.flush().map_err(|e| io_err(out, e))
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}
