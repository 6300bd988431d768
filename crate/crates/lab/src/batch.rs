//! Closed-loop batch simulation and the comparison report.

use std::fmt::Write as _;
use std::path::Path;

use wcst_core::agents::play_session;
use wcst_core::metrics::{report_table, summarize_session, ColumnDirections, MetricsRow, Report, SessionMetrics};
use wcst_core::task::SessionConfig;

use crate::config::{AgentEntry, BatchConfig};
use crate::par::par_map;
use crate::seeds::derive_seed;

/// Outcome of one session. `error` is set when the session could not be
/// built or any agent call failed; such sessions are left out of the
/// aggregate rows.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionEntry {
    pub agent: String,
    pub session: usize,
    pub seed: u64,
    pub metrics: Option<SessionMetrics>,
    pub n_trials: usize,
    pub agent_errors: usize,
    pub error: Option<String>,
    /// JSONL export, kept only when logs are requested.
    pub log: Option<String>,
}

#[derive(Clone, Debug)]
pub struct BatchReport {
    pub sessions: Vec<SessionEntry>,
    /// One mean row per agent with at least one clean session.
    pub rows: Vec<MetricsRow>,
    pub report: Report,
}

/// Seed of the `i`-th session; equal across agents so rows are paired.
pub fn session_seed(base: u64, i: usize) -> u64 {
    derive_seed(base, i as u64)
}

fn run_one(entry: &AgentEntry, agent_idx: usize, i: usize, base: &SessionConfig, cfg: &BatchConfig) -> SessionEntry {
    let seed = session_seed(base.seed, i);
    let mut config = SessionConfig { seed, ..base.clone() };
    if let Some(m) = entry.max_trials {
        config.max_trials = m;
    }
    let switch_streak = config.switch_streak;
    let mut out = SessionEntry {
        agent: entry.label(),
        session: i,
        seed,
        metrics: None,
        n_trials: 0,
        agent_errors: 0,
        error: None,
        log: None,
    };
    let agent_seed = derive_seed(seed, 1 + agent_idx as u64);
    match play_session(config, &entry.agent, agent_seed, cfg.nominal_rt_s) {
        Ok(run) => {
            out.n_trials = run.session.trials().len();
            out.agent_errors = run.agent_errors.len();
            if let Some((trial, e)) = run.agent_errors.first() {
                out.error = Some(format!("{} agent errors, first at trial {trial}: {e}", run.agent_errors.len()));
            }
            match summarize_session(run.session.trials(), switch_streak) {
                Ok(m) => out.metrics = Some(m),
                Err(e) => out.error = Some(e.to_string()),
            }
            if cfg.write_logs {
                out.log = Some(run.session.export_log());
            }
        }
        Err(e) => out.error = Some(e.to_string()),
    }
    out
}

/// Plays `cfg.n_sessions` sessions per agent, spread over worker threads.
/// Results do not depend on the thread count.
pub fn run_batch(cfg: &BatchConfig, session: &SessionConfig) -> BatchReport {
    let jobs: Vec<(usize, usize)> = (0..cfg.agents.len())
        .flat_map(|a| (0..cfg.n_sessions).map(move |i| (a, i)))
        .collect();
    let sessions = par_map(&jobs, |_, &(a, i)| run_one(&cfg.agents[a], a, i, session, cfg));
    let rows: Vec<MetricsRow> = cfg
        .agents
        .iter()
        .filter_map(|entry| {
            let label = entry.label();
            let clean: Vec<SessionMetrics> = sessions
                .iter()
                .filter(|s| s.agent == label && s.error.is_none())
                .filter_map(|s| s.metrics.clone())
                .collect();
            MetricsRow::mean_of(label, &clean)
        })
        .collect();
    let report = report_table(&rows, ColumnDirections::default()).unwrap_or_else(|_| Report {
        text: "no agent completed a session without errors\n".into(),
        csv: "label,acc,per,rc,latency\n".into(),
        best: Vec::new(),
    });
    BatchReport { sessions, rows, report }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl BatchReport {
    /// `agent,session,seed,acc,per,rc,latency,n_trials,agent_errors,error`.
    pub fn sessions_csv(&self) -> String {
        let mut out = String::from("agent,session,seed,acc,per,rc,latency,n_trials,agent_errors,error\n");
        for s in &self.sessions {
            let (acc, per, rc, lat) = match &s.metrics {
                Some(m) => (
                    format!("{:.4}", m.acc),
                    m.per.map_or_else(|| "-".into(), |p| format!("{p:.4}")),
                    m.rc.to_string(),
                    format!("{:.4}", m.mean_latency),
                ),
                None => ("".into(), "".into(), "".into(), "".into()),
            };
            let _ = writeln!(
                out,
                "{},{},{},{acc},{per},{rc},{lat},{},{},{}",
                csv_field(&s.agent),
                s.session,
                s.seed,
                s.n_trials,
                s.agent_errors,
                csv_field(s.error.as_deref().unwrap_or(""))
            );
        }
        out
    }

    /// Writes `sessions.csv`, `aggregate.csv`, `report.txt` and, when
    /// kept, one log per session under `logs/`.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("sessions.csv"), self.sessions_csv())?;
        std::fs::write(dir.join("aggregate.csv"), &self.report.csv)?;
        std::fs::write(dir.join("report.txt"), &self.report.text)?;
        if self.sessions.iter().any(|s| s.log.is_some()) {
            let logs = dir.join("logs");
            std::fs::create_dir_all(&logs)?;
            for s in &self.sessions {
                if let Some(log) = &s.log {
                    let name: String = s
                        .agent
                        .chars()
                        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
                        .collect();
                    std::fs::write(logs.join(format!("{name}-{:04}.jsonl", s.session)), log)?;
                }
            }
        }
        Ok(())
    }
}
