//! `cardtune` command line: validate cards, compose prompts, recommend,
//! tune, benchmark and serve.
//!
//! Machine output goes to stdout, diagnostics to stderr. Exit codes: 0
//! success, 1 validation or domain error, 2 usage error, 3 backend or I/O
//! error.

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use cardtune::bench::{default_seeds, run_unseen_benchmark, BenchError};
use cardtune::cards::{parse_data_card, parse_model_card, CardError, DataCard, ModelCard};
use cardtune::composer::{compose_prompt, UserRequest};
use cardtune::encoder::{embedder_from_env, Embedder};
use cardtune::oracle::{Backend, HttpBackend, MockBackend, TrainingLog};
use cardtune::pipeline::{run_followup, run_recommend, seed_recommendation, PipelineError};
use cardtune::registry::{load_registry, Registry, RegistryError};
use cardtune::transfer::{Recommendation, TransferParams, DEFAULT_K, DEFAULT_TAU};
use cardtune::tuner::{Constraint, StopReason};
use cardtune_service::{run_server, ServiceConfig, DEFAULT_BUDGET};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(
    name = "cardtune",
    version,
    about = "Card-driven hyperparameter recommendation and tuning"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check data or model card documents
    Validate {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Print the prompt paragraph for a pair of cards
    Compose {
        #[command(flatten)]
        cards: CardArgs,
        /// Additional request appended to the prompt (repeatable)
        #[arg(long = "request")]
        requests: Vec<String>,
    },
    /// Print the transfer recommendation for a pair of cards
    Recommend {
        #[command(flatten)]
        cards: CardArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Recommend, tune against predicted logs, then apply each request
    Tune {
        #[command(flatten)]
        cards: CardArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = DEFAULT_BUDGET as u64, value_parser = clap::value_parser!(u64).range(1..))]
        budget: u64,
        /// Follow-up request, a constraint such as `fps >= 10` or free text (repeatable)
        #[arg(long = "request")]
        requests: Vec<String>,
    },
    /// Run the synthetic unseen-dataset benchmark
    Bench {
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
        seeds: u64,
        #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u64).range(2..))]
        n_known: u64,
        #[arg(long, default_value_t = DEFAULT_K, value_parser = parse_k)]
        k: usize,
        #[arg(long, default_value_t = DEFAULT_TAU, value_parser = parse_tau)]
        tau: f64,
        /// Also write the full report as JSON
        #[arg(long)]
        results: Option<PathBuf>,
    },
    /// Serve the HTTP API
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        #[arg(long)]
        registry: Option<PathBuf>,
        /// Restore sessions from, and save them to, this file
        #[arg(long)]
        snapshot: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct CardArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub registry: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = BackendKind::Mock)]
    pub backend: BackendKind,
    #[arg(long, default_value_t = DEFAULT_K, value_parser = parse_k)]
    pub k: usize,
    #[arg(long, default_value_t = DEFAULT_TAU, value_parser = parse_tau)]
    pub tau: f64,
}

fn parse_k(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(k) if k >= 1 => Ok(k),
        _ => Err("expected an integer >= 1".into()),
    }
}

fn parse_tau(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(t) if (0.0..1.0).contains(&t) => Ok(t),
        _ => Err("expected a number in [0, 1)".into()),
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Domain(String),
    #[error("{0}")]
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Backend(_) => 3,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let msg = format!("{}: {e}", e.code());
        match e {
            PipelineError::Transfer(cardtune::transfer::TransferError::Encoder(_)) => CliError::Backend(msg),
            _ if e.is_backend() => CliError::Backend(msg),
            _ => CliError::Domain(msg),
        }
    }
}

impl From<RegistryError> for CliError {
    fn from(e: RegistryError) -> Self {
        let msg = format!("registry: {}: {e}", e.code());
        match e {
            RegistryError::IoFailure(_) | RegistryError::CorruptRegistry(_) => CliError::Backend(msg),
            _ => CliError::Domain(msg),
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Registry(r) => r.into(),
            other => CliError::Domain(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Backend(format!("{}: {e}", path.display()))
}

fn card_err(path: &Path, e: &CardError) -> CliError {
    CliError::Domain(format!("{}: {}: {e}", path.display(), e.code()))
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| io_err(path, e))
}

fn load_cards(args: &CardArgs) -> Result<(DataCard, ModelCard), CliError> {
    let data = parse_data_card(&read(&args.data)?).map_err(|e| card_err(&args.data, &e))?;
    let model = parse_model_card(&read(&args.model)?).map_err(|e| card_err(&args.model, &e))?;
    Ok((data, model))
}

fn load_registry_arg(dir: Option<&Path>) -> Result<Registry, CliError> {
    match dir {
        Some(d) => Ok(load_registry(d)?),
        None => Ok(Registry::new()),
    }
}

fn backend(kind: BackendKind) -> Result<Box<dyn Backend>, CliError> {
    match kind {
        BackendKind::Mock => Ok(Box::new(MockBackend)),
        BackendKind::Http => HttpBackend::from_env()
            .map(|b| Box::new(b) as Box<dyn Backend>)
            .map_err(|e| CliError::Backend(format!("{}: {e}", e.code()))),
    }
}

fn embedder() -> Result<Box<dyn Embedder>, CliError> {
    embedder_from_env().map_err(|e| CliError::Backend(format!("embedder: {e}")))
}

fn emit_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Backend(e.to_string()))?;
    text.push('\n');
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Backend(e.to_string()))
}

/// One recommend-and-tune round of `tune`.
#[derive(Debug, Serialize)]
pub struct Round {
    pub request: Option<UserRequest>,
    pub constraints: Vec<Constraint>,
    pub seed: Recommendation,
    pub recommendation: Recommendation,
    pub best_final_metric: f64,
    pub queries_used: usize,
    pub stop_reason: StopReason,
}

#[derive(Debug, Serialize)]
pub struct TuneDocument {
    pub recommendation: Recommendation,
    pub predicted_log: TrainingLog,
    pub rounds: Vec<Round>,
}

fn validate(paths: &[PathBuf], err: &mut dyn Write) -> Result<(), CliError> {
    let mut failures = 0;
    for path in paths {
        let bytes = read(path)?;
        let looks_like_model = serde_json::from_slice::<serde_json::Value>(&bytes)
            .ok()
            .and_then(|v| v.get("arch_hparams").map(|_| ()))
            .is_some();
        let result = if looks_like_model {
            parse_model_card(&bytes).map(|_| ())
        } else {
            parse_data_card(&bytes).map(|_| ())
        };
        match result {
            Ok(()) => {
                let _ = writeln!(err, "{}: ok", path.display());
            }
            Err(e) => {
                failures += 1;
                let _ = writeln!(err, "{}", card_err(path, &e));
            }
        }
    }
    if failures > 0 {
        return Err(CliError::Domain(format!("{failures} invalid card(s)")));
    }
    let _ = writeln!(err, "ok");
    Ok(())
}

fn tune_cmd(
    cards: &CardArgs,
    run: &RunArgs,
    budget: usize,
    requests: &[String],
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    let (data, model) = load_cards(cards)?;
    let registry = load_registry_arg(run.registry.as_deref())?;
    let backend = backend(run.backend)?;
    let embedder = embedder()?;
    let params = TransferParams { k: run.k, tau: run.tau };
    let mut constraints: Vec<Constraint> = Vec::new();
    let first = run_recommend(
        &data,
        &model,
        &registry,
        embedder.as_ref(),
        backend.as_ref(),
        params,
        &constraints,
        budget,
    )?;
    let round = |request, constraints: &[Constraint], o: &cardtune::pipeline::Outcome| Round {
        request,
        constraints: constraints.to_vec(),
        seed: o.seed.clone(),
        recommendation: o.recommendation.clone(),
        best_final_metric: o.tune_result.best_final_metric,
        queries_used: o.tune_result.queries_used,
        stop_reason: o.tune_result.stop_reason,
    };
    let mut rounds = vec![round(None, &constraints, &first)];
    let mut current = first;
    for text in requests {
        let request = UserRequest::classify(text);
        let mut next_constraints = constraints.clone();
        if let Some(c) = request.as_constraint() {
            next_constraints.push(c.clone());
        }
        let _ = writeln!(err, "request: {text}");
        current = run_followup(
            &data,
            &model,
            &current.recommendation,
            &current.predicted_log,
            &request,
            backend.as_ref(),
            &next_constraints,
            budget,
        )?;
        constraints = next_constraints;
        rounds.push(round(Some(request), &constraints, &current));
    }
    emit_json(
        out,
        &TuneDocument {
            recommendation: current.recommendation,
            predicted_log: current.predicted_log,
            rounds,
        },
    )
}

fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { paths } => validate(&paths, err),
        Command::Compose { cards, requests } => {
            let (data, model) = load_cards(&cards)?;
            let requests: Vec<UserRequest> = requests.iter().map(|r| UserRequest::classify(r)).collect();
            let prompt = compose_prompt(&data, &model, &requests);
            out.write_all(prompt.text.as_bytes())
                .map_err(|e| CliError::Backend(e.to_string()))
        }
        Command::Recommend { cards, run } => {
            let (data, model) = load_cards(&cards)?;
            let registry = load_registry_arg(run.registry.as_deref())?;
            let backend = backend(run.backend)?;
            let embedder = embedder()?;
            let params = TransferParams { k: run.k, tau: run.tau };
            let rec = seed_recommendation(&data, &model, &registry, embedder.as_ref(), backend.as_ref(), params)?;
            emit_json(out, &rec)
        }
        Command::Tune {
            cards,
            run,
            budget,
            requests,
        } => tune_cmd(&cards, &run, budget as usize, &requests, out, err),
        Command::Bench {
            seeds,
            n_known,
            k,
            tau,
            results,
        } => {
            let report = run_unseen_benchmark(
                n_known as usize,
                &default_seeds(seeds as usize),
                TransferParams { k, tau },
            )?;
            out.write_all(report.to_table().as_bytes())
                .map_err(|e| CliError::Backend(e.to_string()))?;
            if let Some(path) = results {
                let mut bytes = serde_json::to_vec_pretty(&report).map_err(|e| CliError::Backend(e.to_string()))?;
                bytes.push(b'\n');
                std::fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
            }
            Ok(())
        }
        Command::Serve {
            port,
            host,
            registry,
            snapshot,
        } => {
            let config = ServiceConfig {
                registry_dir: registry,
                snapshot,
                ..ServiceConfig::default()
            };
            run_server(SocketAddr::new(host, port), config).map_err(|e| CliError::Backend(format!("serve: {e}")))
        }
    }
}

/// Parses `argv` and runs the command, returning the process exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = out.write_all(rendered.as_bytes());
            } else {
                let _ = err.write_all(rendered.as_bytes());
            }
            return code;
        }
    };
    match dispatch(cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
