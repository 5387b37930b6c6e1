use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand};
use interlace_analysis::{build_report, compute_trace_metrics, write_report, AnalysisConfig, MetricBank, ReportConfig};
use interlace_core::replay::replay_verify;
use interlace_core::store::TraceStore;
use interlace_core::TaskKind;
use interlace_service::server::{serve, AppState, SystemClock};
use interlace_service::{simulate, Environment, PolicyKind, ServiceConfig, SimPlan};

#[derive(Parser)]
#[command(name = "interlace", version, about = "Run, simulate and analyse human-LM interaction sessions")]
struct Cli {
    /// JSON configuration file. Bundled defaults are used when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve the session API.
    Serve {
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        traces: Option<PathBuf>,
    },
    /// Run simulated participants and store their traces.
    Simulate {
        /// Tasks to run; all five when omitted.
        #[arg(long, value_delimiter = ',')]
        task: Vec<TaskKind>,
        #[arg(long, value_delimiter = ',', default_value = "mock-alpha,mock-beta,mock-gamma")]
        models: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "diligent,hasty")]
        policies: Vec<PolicyKind>,
        /// Sessions per task, model and policy.
        #[arg(long, default_value_t = 5)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "traces")]
        traces: PathBuf,
    },
    /// Re-run every stored trace and compare it with its snapshots.
    Replay {
        #[arg(long, default_value = "traces")]
        traces: PathBuf,
    },
    /// Per-session metric values as JSON lines.
    Analyze {
        #[arg(long, default_value = "traces")]
        traces: PathBuf,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Keep sessions that failed the attention check.
        #[arg(long)]
        keep_failed_attention: bool,
    },
    /// Summary tables, pairwise tests and regressions per task.
    Report {
        #[arg(long, default_value = "traces")]
        traces: PathBuf,
        #[arg(long, default_value = "report")]
        out: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Reference model for the regressions.
        #[arg(long)]
        reference: Option<String>,
        #[arg(long)]
        keep_failed_attention: bool,
    },
}

fn load_config(path: Option<&Path>) -> anyhow::Result<ServiceConfig> {
    match path {
        Some(p) => ServiceConfig::load(p),
        None => Ok(ServiceConfig::default()),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let cfg = load_config(cli.config.as_deref())?;
    let env = Environment::from_config(&cfg)?;
    match cli.command {
        Command::Serve { bind, traces } => {
            let bind = bind.unwrap_or_else(|| cfg.bind.clone());
            let store = TraceStore::new(traces.unwrap_or_else(|| cfg.trace_dir.clone()));
            let app = AppState::new(Arc::new(env), store, Arc::new(SystemClock));
            tokio::runtime::Runtime::new()?.block_on(serve(app, &bind))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate { task, models, policies, n, seed, traces } => {
            let tasks = if task.is_empty() { TaskKind::ALL.to_vec() } else { task };
            let plan = SimPlan { tasks, models, policies, per_cell: n, seed };
            let store = TraceStore::new(traces);
            let results = simulate(&env, &plan, Some(&store));
            let mut failed = 0;
            for r in &results {
                match r {
                    Ok(o) => println!(
                        "{}\t{}\t{:?}\tverified",
                        o.spec.session_id,
                        o.events,
                        o.end_reason.map(|r| format!("{r:?}")).unwrap_or_default()
                    ),
                    Err(e) => {
                        failed += 1;
                        eprintln!("{e}");
                    }
                }
            }
            eprintln!("{} sessions, {failed} failed, traces in {}", results.len(), store.root().display());
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Replay { traces } => {
            let store = TraceStore::new(traces);
            let mut bad = 0;
            let traces = store.load_all()?;
            for trace in &traces {
                let report = replay_verify(trace, &env.surveys);
                match report.first_divergence() {
                    None => println!("{}\tok\t{} actions", trace.session_id(), report.actions_replayed),
                    Some(d) => {
                        bad += 1;
                        println!("{}\tdiverged at seq {}: {:?} {}", trace.session_id(), d.seq, d.kind, d.detail);
                    }
                }
            }
            eprintln!("{} traces, {bad} diverged", traces.len());
            Ok(if bad == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Analyze { traces, out, keep_failed_attention } => {
            let traces = TraceStore::new(traces).load_all()?;
            let bank = MetricBank::bundled();
            let config = AnalysisConfig { exclude_failed_attention: !keep_failed_attention, ..AnalysisConfig::default() };
            let mut lines = String::new();
            for trace in &traces {
                let m = compute_trace_metrics(trace, &env.surveys, &bank, &config);
                lines.push_str(&serde_json::to_string(&m)?);
                lines.push('\n');
            }
            match out {
                Some(path) => std::fs::write(&path, lines).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{lines}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { traces, out, alpha, reference, keep_failed_attention } => {
            let traces = TraceStore::new(traces).load_all()?;
            let config = ReportConfig {
                analysis: AnalysisConfig { exclude_failed_attention: !keep_failed_attention, ..AnalysisConfig::default() },
                alpha,
                reference_model: reference,
                ..ReportConfig::default()
            };
            let report = build_report(&traces, &env.surveys, &MetricBank::bundled(), &config);
            write_report(&report, &out).with_context(|| format!("writing {}", out.display()))?;
            eprintln!("{} traces, report in {}", traces.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
