use wcst_core::agents::AgentKind;
use wcst_core::task::SessionConfig;
use wcst_lab::config::{AgentEntry, BatchConfig};
use wcst_lab::run_batch;

fn batch(agents: Vec<AgentEntry>, n: usize) -> BatchConfig {
    BatchConfig { n_sessions: n, agents, ..BatchConfig::default() }
}

#[test]
fn oracle_rows_are_perfect() {
    let r = run_batch(&batch(vec![AgentEntry::new(AgentKind::Oracle)], 4), &SessionConfig::default());
    let row = &r.rows[0];
    assert_eq!((row.acc, row.rc, row.latency), (100.0, 5.0, 0.0));
    assert!(r.sessions.iter().all(|s| s.n_trials == 60 && s.error.is_none()));
}

#[test]
fn non_converger_row_has_table_shape() {
    let entry = AgentEntry {
        label: Some("non-converger".into()),
        agent: AgentKind::Scripted { choices: vec![1] },
        max_trials: Some(128),
    };
    let r = run_batch(&batch(vec![entry], 5), &SessionConfig::default());
    let row = &r.rows[0];
    assert!(row.acc < 30.0, "{}", row.acc);
    assert_eq!((row.rc, row.latency, row.per), (0.0, 128.0, None));
    let line = r.report.text.lines().find(|l| l.contains("non-converger")).unwrap();
    assert!(line.contains("128.00") && line.contains(" - "), "{line}");
    for col in ["ACC", "PER", "#RC", "Latency"] {
        assert!(r.report.text.contains(col));
    }
}

#[test]
fn sessions_are_paired_and_deterministic() {
    let cfg = batch(vec![AgentEntry::new(AgentKind::Random), AgentEntry::new(AgentKind::HypothesisTesting)], 6);
    let a = run_batch(&cfg, &SessionConfig::with_seed(3));
    let b = run_batch(&cfg, &SessionConfig::with_seed(3));
    assert_eq!(a.sessions, b.sessions);
    assert_eq!(a.report, b.report);
    let seeds = |label: &str| a.sessions.iter().filter(|s| s.agent == label).map(|s| s.seed).collect::<Vec<_>>();
    assert_eq!(seeds("random"), seeds("hypothesis"));
}

#[test]
fn writes_csv_report_and_logs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = batch(vec![AgentEntry::new(AgentKind::HypothesisTesting)], 3);
    cfg.write_logs = true;
    let r = run_batch(&cfg, &SessionConfig::default());
    r.write(dir.path()).unwrap();
    let sessions = std::fs::read_to_string(dir.path().join("sessions.csv")).unwrap();
    assert_eq!(sessions.lines().count(), 4);
    assert!(sessions.starts_with("agent,session,seed,acc,per,rc,latency,n_trials,agent_errors,error\n"));
    assert_eq!(std::fs::read_to_string(dir.path().join("aggregate.csv")).unwrap(), r.report.csv);
    assert_eq!(std::fs::read_dir(dir.path().join("logs")).unwrap().count(), 3);
}
