use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sempubsub_core::ontology::{load_ontology, OntologyDocument};
use sempubsub_core::{demo, Ontology};
use sempubsub_workload::{bench, drive, generate, DomainSpec, DriveOptions, Streams};

#[derive(Debug, Parser)]
#[command(name = "workload", version, about = "Workload generator and load driver for the semantic pub/sub broker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write seeded subscription and publication streams to a directory.
    Gen {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        subs: usize,
        #[arg(long, default_value_t = 100)]
        pubs: usize,
        /// DomainSpec JSON; defaults to the bundled job-finder vocabulary.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay streams against a running broker and write a JSON and CSV report.
    Drive {
        #[arg(long, default_value = "http://127.0.0.1:8080")]
        broker: String,
        /// Requests per second; 0 for unthrottled.
        #[arg(long, default_value_t = 0.0)]
        rate: f64,
        #[arg(long, default_value_t = 4)]
        concurrency: usize,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 3)]
        max_retries: u32,
    },
    /// Time indexed matching against the brute-force oracle.
    Bench {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        subs: usize,
        #[arg(long, default_value_t = 200)]
        events: usize,
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Overrides the domain file's equality bias.
        #[arg(long)]
        equality_bias: Option<f64>,
        #[arg(long = "ontology")]
        ontologies: Vec<PathBuf>,
        #[arg(long, default_value_t = demo::DEMO_YEAR)]
        current_year: i32,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_spec(path: Option<&PathBuf>) -> Result<DomainSpec, String> {
    match path {
        None => Ok(DomainSpec::jobfinder()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            DomainSpec::from_json_str(&text).map_err(|e| format!("{}: {e}", p.display()))
        }
    }
}

fn read_ontology(paths: &[PathBuf]) -> Result<Ontology, String> {
    if paths.is_empty() {
        return Ok(demo::jobfinder_ontology());
    }
    let docs = paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            OntologyDocument::from_json_str(&text).map_err(|e| format!("{}: {e}", p.display()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    load_ontology(&docs).map_err(|e| e.to_string())
}

async fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Gen { seed, subs, pubs, spec, out } => {
            let spec = read_spec(spec.as_ref())?;
            let w = generate::generate(seed, subs, pubs, &spec);
            generate::write_workload(&out, &w).map_err(|e| format!("{}: {e}", out.display()))?;
            println!(
                "wrote {subs} subscriptions and {pubs} publications to {} (alias fraction {:.3})",
                out.display(),
                w.stats.fraction()
            );
        }
        Command::Drive { broker, rate, concurrency, input, report, max_retries } => {
            let streams = Streams::read(&input).map_err(|e| format!("{}: {e}", input.display()))?;
            let opts = DriveOptions { rate, concurrency, max_retries, ..DriveOptions::new(broker) };
            let (summary, records) = drive::drive(opts, &streams).await.map_err(|e| e.to_string())?;
            drive::write_report(&report, &summary, &records).map_err(|e| e.to_string())?;
            println!(
                "{} publications, matched_total {} in {:.2}s ({} mode); report at {}",
                summary.publications.sent,
                summary.matched_total,
                summary.duration_secs,
                summary.mode,
                report.display()
            );
        }
        Command::Bench { seed, subs, events, spec, equality_bias, ontologies, current_year, out } => {
            let mut spec = read_spec(spec.as_ref())?;
            if let Some(b) = equality_bias {
                spec.equality_bias = b;
                spec.validate().map_err(|e| e.to_string())?;
            }
            let ontology = read_ontology(&ontologies)?;
            let mut rows = Vec::new();
            for semantic in [false, true] {
                let run = bench::bench(&spec, &ontology, seed, subs, events, current_year, semantic);
                if run.mismatches > 0 {
                    return Err(format!("index and oracle disagreed on {} events", run.mismatches));
                }
                rows.extend(run.rows);
            }
            bench::write_csv(&out, &rows).map_err(|e| e.to_string())?;
            for r in &rows {
                println!("{:>9} {:>6} {:>8.1} us", r.mode, r.matcher, r.median_match_micros);
            }
        }
    }
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::FAILURE
        }
    }
}
