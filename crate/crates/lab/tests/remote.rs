use wcst_core::agents::{play_session, AgentKind};
use wcst_core::task::SessionConfig;
use wcst_lab::config::{AgentEntry, BatchConfig};
use wcst_lab::run_batch;
use wcst_lab::service::{scripted_agent_router, Background};

fn remote(srv: &Background) -> AgentKind {
    AgentKind::Remote { endpoint: srv.url("/"), timeout_s: 5.0, strict: true }
}

#[test]
fn mock_over_the_wire_matches_in_process_scripted_agent() {
    let choices = vec![2, 1, 4, 4, 3, 1, 2];
    let srv = Background::spawn(scripted_agent_router(choices.clone())).unwrap();
    for seed in [0, 11, 12345] {
        let config = SessionConfig { max_trials: 150, ..SessionConfig::with_seed(seed) };
        let local = play_session(config.clone(), &AgentKind::Scripted { choices: choices.clone() }, 0, 0.7).unwrap();
        let wire = play_session(config, &remote(&srv), 0, 0.7).unwrap();
        assert!(wire.agent_errors.is_empty(), "{:?}", wire.agent_errors);
        assert_eq!(wire.session.trials(), local.session.trials());
        assert_eq!(wire.session.export_log(), local.session.export_log());
    }
}

#[test]
fn unreachable_remote_is_a_per_session_error() {
    let dead = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap()
    };
    let cfg = BatchConfig {
        n_sessions: 2,
        agents: vec![
            AgentEntry::new(AgentKind::Oracle),
            AgentEntry {
                label: Some("offline".into()),
                agent: AgentKind::Remote { endpoint: format!("http://{dead}/"), timeout_s: 1.0, strict: false },
                max_trials: Some(60),
            },
        ],
        ..BatchConfig::default()
    };
    let report = run_batch(&cfg, &SessionConfig::default());
    assert_eq!(report.sessions.len(), 4);
    let offline: Vec<_> = report.sessions.iter().filter(|s| s.agent == "offline").collect();
    assert!(offline.iter().all(|s| s.agent_errors == 60 && s.error.as_deref().unwrap().contains("transport")));
    assert_eq!(report.rows.len(), 1);
    assert_eq!(report.rows[0].label, "oracle");
    assert!(report.sessions_csv().lines().filter(|l| l.starts_with("offline")).all(|l| l.contains("transport")));
}
