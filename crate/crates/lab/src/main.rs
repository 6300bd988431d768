use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use wcst_lab::config::{config_schema, LabConfig};
use wcst_lab::fixture::write_fixture;
use wcst_lab::pipeline::{rerun_from_provenance, run_pipeline};
use wcst_lab::service::{router, serve, AppState, MonotonicClock};
use wcst_lab::run_batch;

#[derive(Parser)]
#[command(name = "wcst-lab", version, about = "Card-sorting session service, simulation and EEG analysis")]
struct Cli {
    /// TOML config file (see `wcst-lab schema`).
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override any config field, e.g. `--set pipeline.cluster.n_permutations=5000`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Global seed; also read from WCST_LAB_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP session service.
    Serve {
        /// Bind address; also read from WCST_LAB_BIND.
        #[arg(long)]
        bind: Option<String>,
    },
    /// Play batches of closed-loop sessions and write the metrics report.
    Simulate {
        /// Sessions per agent (batch.n_sessions).
        #[arg(long)]
        sessions: Option<usize>,
        /// Output directory (batch.output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Keep every session's JSONL log.
        #[arg(long)]
        logs: bool,
    },
    /// Run the EEG analysis pipeline.
    Analyze {
        /// Output directory (pipeline.output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Rerun the analysis recorded in a provenance sidecar.
        #[arg(long, conflicts_with = "config")]
        provenance: Option<PathBuf>,
    },
    /// Write a synthetic ground-truth dataset and its analysis config.
    Synth {
        /// Dataset directory; created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Number of participants (synth.participants).
        #[arg(long)]
        participants: Option<usize>,
        /// Sampling rate in Hz (synth.fs).
        #[arg(long)]
        fs: Option<f64>,
    },
    /// Print the config JSON Schema.
    Schema,
    /// Print the default config as TOML.
    Defaults,
}

fn quoted(p: &std::path::Path) -> String {
    toml::Value::String(p.display().to_string()).to_string()
}

fn run(cli: Cli) -> Result<(), String> {
    let mut overrides = cli.set.clone();
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    let cwd = std::env::current_dir().map_err(|e| e.to_string())?;
    match &cli.command {
        Command::Serve { bind: Some(b) } => overrides.push(format!("service.bind={}", toml::Value::String(b.clone()))),
        Command::Simulate { sessions, out, logs } => {
            overrides.extend(sessions.map(|n| format!("batch.n_sessions={n}")));
            overrides.extend(out.as_ref().map(|o| format!("batch.output_dir={}", quoted(&cwd.join(o)))));
            if *logs {
                overrides.push("batch.write_logs=true".into());
            }
        }
        Command::Analyze { out: Some(o), provenance: None } => {
            overrides.push(format!("pipeline.output_dir={}", quoted(&cwd.join(o))));
        }
        Command::Synth { participants, fs, .. } => {
            overrides.extend(participants.map(|n| format!("synth.participants={n}")));
            overrides.extend(fs.map(|f| format!("synth.fs={f:?}")));
        }
        _ => {}
    }
    let load = || {
        LabConfig::assemble(cli.config.as_deref(), |k| std::env::var(k).ok(), &overrides).map_err(|e| e.to_string())
    };
    match cli.command {
        Command::Schema => print!("{}", config_schema()),
        Command::Defaults => print!("{}", LabConfig::default().to_toml()),
        Command::Serve { .. } => {
            let cfg = load()?;
            cfg.validate().map_err(|e| e.to_string())?;
            let app = router(AppState::new(cfg.session.clone(), Arc::new(MonotonicClock::default())));
            let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
            eprintln!("listening on {}", cfg.service.bind);
            rt.block_on(serve(&cfg.service.bind, app))
                .map_err(|e| format!("cannot serve on {}: {e}", cfg.service.bind))?;
        }
        Command::Simulate { .. } => {
            let cfg = load()?;
            cfg.validate().map_err(|e| e.to_string())?;
            let report = run_batch(&cfg.batch, &cfg.session);
            report.write(&cfg.batch.output_dir).map_err(|e| e.to_string())?;
            let failed = report.sessions.iter().filter(|s| s.error.is_some()).count();
            print!("{}", report.report.text);
            if failed > 0 {
                eprintln!("{failed} sessions had errors; see sessions.csv");
            }
            eprintln!("wrote {}", cfg.batch.output_dir.display());
        }
        Command::Analyze { provenance: Some(p), out } => {
            let outputs = rerun_from_provenance(&p, out.map(|o| cwd.join(o)).as_deref()).map_err(|e| e.to_string())?;
            eprintln!("wrote {}", outputs.output_dir.display());
        }
        Command::Analyze { provenance: None, .. } => {
            let cfg = load()?;
            let outputs = run_pipeline(&cfg.pipeline).map_err(|e| e.to_string())?;
            for b in &outputs.bands {
                let sig = b.clusters.iter().filter(|c| c.significant).count();
                println!("{:<6} clusters {:>3}  significant {sig}", b.band.name(), b.clusters.len());
            }
            eprintln!("wrote {}", outputs.output_dir.display());
        }
        Command::Synth { out, .. } => {
            let cfg = load()?;
            let path = write_fixture(&cfg, &cwd.join(out)).map_err(|e| e.to_string())?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
