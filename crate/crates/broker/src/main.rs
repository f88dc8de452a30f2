use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use sempubsub_broker::{http, Broker, BrokerConfig, Mode};
use sempubsub_core::ontology::{load_ontology, OntologyDocument};
use sempubsub_core::{demo, Ontology, PrecisionConfig, StageSet};

#[derive(Debug, Parser)]
#[command(name = "sempubsub-broker", version, about = "Semantic publish/subscribe broker")]
struct Args {
    /// Ontology document; repeat for several domains. Defaults to the bundled job-finder ontology.
    #[arg(long = "ontology", value_name = "PATH")]
    ontologies: Vec<PathBuf>,
    #[arg(long, default_value = "semantic")]
    mode: Mode,
    #[arg(long, default_value = "127.0.0.1")]
    bind: std::net::IpAddr,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Year used for CURRENT_YEAR and open-ended ranges. Defaults to the wall-clock year at startup.
    #[arg(long)]
    current_year: Option<i32>,
    /// Directory for the append-only log. Without it nothing survives a restart.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long, default_value_t = sempubsub_core::pipeline::DEFAULT_MAX_PASSES)]
    max_passes: u32,
    /// Hierarchy hop cap for the default precision: a number or "unbounded".
    #[arg(long, default_value = "unbounded", value_parser = parse_generality)]
    max_generality: Generality,
    /// Shared token required by /admin endpoints. Unset means they are open.
    #[arg(long, env = "SEMPUBSUB_ADMIN_TOKEN")]
    admin_token: Option<String>,
}

#[derive(Clone, Copy, Debug)]
struct Generality(Option<u32>);

fn parse_generality(s: &str) -> Result<Generality, String> {
    if s.eq_ignore_ascii_case("unbounded") {
        return Ok(Generality(None));
    }
    s.parse().map(|n| Generality(Some(n))).map_err(|e| format!("{s}: {e}"))
}

fn load(paths: &[PathBuf]) -> Result<Ontology, String> {
    if paths.is_empty() {
        return Ok(demo::jobfinder_ontology());
    }
    let mut docs = Vec::new();
    for p in paths {
        let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
        docs.push(OntologyDocument::from_json_str(&text).map_err(|e| format!("{}: {e}", p.display()))?);
    }
    load_ontology(&docs).map_err(|e| e.to_string())
}

async fn run(args: Args) -> Result<(), String> {
    let ontology = load(&args.ontologies)?;
    for w in ontology.warnings() {
        log::warn!("ontology: {w}");
    }
    let precision = PrecisionConfig::new(StageSet::ALL, args.max_generality.0, args.max_passes).map_err(|e| e.to_string())?;
    let current_year = args.current_year.unwrap_or_else(|| time::OffsetDateTime::now_utc().year());
    let mut config = BrokerConfig::new(current_year).with_mode(args.mode).with_default_precision(precision);
    config.data_dir = args.data_dir;
    config.admin_token = args.admin_token;
    if config.admin_token.is_none() {
        log::warn!("admin endpoints are unauthenticated; pass --admin-token to gate them");
    }

    let broker = Broker::open(config, ontology).map_err(|e| e.to_string())?;
    let addr = SocketAddr::new(args.bind, args.port);
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| format!("bind {addr}: {e}"))?;
    log::info!("listening on {addr} in {} mode, ontology {}", broker.mode(), broker.ontology().digest());
    tokio::select! {
        served = http::serve(listener, broker) => served.map_err(|e| e.to_string()),
        _ = tokio::signal::ctrl_c() => {
            log::info!("shutting down");
            Ok(())
        }
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Args::parse()).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::FAILURE
        }
    }
}
