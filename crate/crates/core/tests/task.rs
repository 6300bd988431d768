use wcst_core::agents::{play_session, AgentKind};
use wcst_core::metrics::{summarize_session, trial_phases, TrialPhase};
use wcst_core::task::{import_log, indicated_key, Card, Choice, RuleDimension, SessionConfig, SessionState, TaskError};

fn other_rule(spec_rule: RuleDimension, not: &[RuleDimension]) -> RuleDimension {
    RuleDimension::ALL
        .into_iter()
        .find(|r| *r != spec_rule && !not.contains(r))
        .unwrap()
}

#[test]
fn indicated_key_is_the_stimulus_attribute() {
    let keys: [Card; 4] = std::array::from_fn(|k| Card::from_array([k as u8; 4]).unwrap());
    let stim = Card::from_array([2, 0, 3, 1]).unwrap();
    let got: Vec<u8> = RuleDimension::ALL.iter().map(|&d| indicated_key(&keys, &stim, d)).collect();
    assert_eq!(got, [2, 0, 3, 1]);
}

#[test]
fn schedule_covers_all_rules_then_always_switches() {
    for seed in 0..200 {
        let s = SessionState::new(SessionConfig { n_blocks: 12, ..SessionConfig::with_seed(seed) }).unwrap();
        let sched = s.rule_schedule();
        let mut first: Vec<_> = sched[..4].to_vec();
        first.sort_by_key(|r| r.index());
        assert_eq!(first, RuleDimension::ALL);
        assert!(sched.windows(2).all(|w| w[0] != w[1]), "seed {seed}: {sched:?}");
    }
}

/// Block 0: 2 errors then 10 correct. Block 1: 3 errors (2 on the previous
/// rule's key) then 10 correct.
#[test]
fn hand_scored_session() {
    let mut s = SessionState::new(SessionConfig { n_blocks: 2, ..SessionConfig::with_seed(5) }).unwrap();
    let prev = s.rule_schedule()[0];
    let plan: Vec<Option<Vec<RuleDimension>>> = vec![
        Some(vec![]),
        Some(vec![]),
        None, None, None, None, None, None, None, None, None, None,
        Some(vec![prev]),
        Some(vec![prev]),
        Some(vec![]),
        None, None, None, None, None, None, None, None, None, None,
    ];
    for step in &plan {
        let spec = s.next_trial().unwrap();
        let key = match step {
            None => spec.correct_key(),
            Some(v) if v.len() == 1 => spec.key_for(v[0]),
            Some(_) => spec.key_for(other_rule(spec.active_rule, &[prev])),
        };
        s.submit_choice(Choice::Key(key + 1), 0.5).unwrap();
    }
    assert!(s.is_finished());
    let m = summarize_session(s.trials(), 10).unwrap();
    assert_eq!(m.n_trials, 25);
    assert_eq!(m.acc, 80.0);
    assert_eq!(m.rc, 1);
    assert_eq!(m.mean_latency, 2.5);
    assert!((m.per.unwrap() - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!((m.blocks[1].perseverative_errors, m.blocks[1].total_errors), (2, 3));

    let phases = trial_phases(s.trials(), 10);
    assert_eq!(phases.iter().filter(|p| **p == TrialPhase::Search).count(), 5);
    assert_eq!(phases[2], TrialPhase::Confirm);
    assert_eq!(phases[12], TrialPhase::Search);
}

#[test]
fn timeline_and_rt_bounds() {
    let cfg = SessionConfig::with_seed(1);
    let mut s = SessionState::new(cfg.clone()).unwrap();
    s.next_trial().unwrap();
    assert!(matches!(s.submit_choice(Choice::Key(1), 3.5), Err(TaskError::InvalidRt { .. })));
    assert!(matches!(s.submit_choice(Choice::Key(5), 0.5), Err(TaskError::InvalidChoice(5))));
    let a = s.submit_choice(Choice::Key(2), 0.75).unwrap();
    let e = a.event_times;
    assert_eq!((e.fixation_on, e.keys_on, e.stimulus_on), (0.0, 0.5, 1.0));
    assert_eq!((e.response, e.feedback_on), (Some(1.75), 1.75));

    s.next_trial().unwrap();
    let b = s.submit_choice(Choice::Timeout, 99.0).unwrap();
    assert!(!b.correct && b.rt.is_none());
    assert_eq!(b.event_times.fixation_on, 2.75);
    assert_eq!(b.event_times.feedback_on, b.event_times.stimulus_on + cfg.response_window);
}

#[test]
fn max_trials_ends_the_session() {
    let cfg = SessionConfig { max_trials: 70, ..SessionConfig::with_seed(2) };
    let run = play_session(cfg, &AgentKind::Scripted { choices: vec![1] }, 0, 0.6).unwrap();
    assert_eq!(run.session.trials().len(), 70);
    assert!(run.session.is_finished());
    let mut s = run.session;
    assert!(s.next_trial().is_err());
}

#[test]
fn log_reproduces_the_session() {
    let run = play_session(SessionConfig::with_seed(77), &AgentKind::HypothesisTesting, 0, 0.6).unwrap();
    let text = run.session.export_log();
    let log = import_log(&text).unwrap();
    assert_eq!(log.records, run.session.trials());
    assert_eq!(log.to_jsonl(), text);
    let again = play_session(log.config.clone(), &AgentKind::HypothesisTesting, 0, 0.6).unwrap();
    assert_eq!(again.session.trials(), run.session.trials());
    assert!(import_log(&text[..text.len() / 2]).is_err());
}

#[test]
fn agents_behave_to_type() {
    let cfg = SessionConfig::with_seed(4);
    let persev = play_session(cfg.clone(), &AgentKind::Perseverative { rule: RuleDimension::Color }, 0, 0.6).unwrap();
    let m = summarize_session(persev.session.trials(), 10).unwrap();
    assert!(persev.session.trials().iter().all(|t| t.choice.key0() == Some(t.trial_spec.key_for(RuleDimension::Color))));
    assert!(m.rc <= 1);

    let hyp = play_session(cfg, &AgentKind::HypothesisTesting, 0, 0.6).unwrap();
    let m = summarize_session(hyp.session.trials(), 10).unwrap();
    assert_eq!(m.rc, 5);
    assert!(m.mean_latency <= 10.0, "{:?}", m.blocks);
}
