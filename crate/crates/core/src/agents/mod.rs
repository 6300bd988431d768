//! Agents that play the card-sorting task in a closed loop.
//!
//! An agent sees an [`Observation`]: the cards on screen and the outcome of
//! every earlier trial. The type has no field for the active rule, the block
//! index or the switch event, so no agent can be told when a rule changes.

mod remote;

pub use remote::{
    parse_reply, HttpTransport, RemoteAgent, RemoteError, Transport, TrialPayload,
    DEFAULT_REMOTE_TIMEOUT_S,
};

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::task::{
    indicated_key, Card, Choice, RuleDimension, SessionConfig, SessionState, TaskError,
    TrialRecord, TrialSpec,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("remote agent: {0}")]
    Remote(#[from] RemoteError),
    #[error("agent returned key {0} outside 1-4")]
    OutOfRange(u8),
}

/// Outcome of one earlier trial as seen by an agent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    /// One-based key, `None` for a timeout.
    pub choice: Option<u8>,
    pub correct: bool,
}

impl From<&TrialRecord> for HistoryEntry {
    fn from(r: &TrialRecord) -> Self {
        HistoryEntry {
            choice: r.choice.as_option(),
            correct: r.correct,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub session_id: String,
    pub trial_index: usize,
    pub key_cards: [Card; 4],
    pub stimulus: Card,
    pub history: Vec<HistoryEntry>,
    /// Always false: agents are never told that the rule switched.
    pub block_feedback_reset: bool,
}

impl Observation {
    /// Builds the agent-visible view of a pending trial. Rule and block are
    /// dropped here.
    pub fn new(session_id: &str, spec: &TrialSpec, past: &[TrialRecord]) -> Self {
        Observation {
            session_id: session_id.to_string(),
            trial_index: spec.trial_index,
            key_cards: spec.key_cards,
            stimulus: spec.stimulus,
            history: past.iter().map(HistoryEntry::from).collect(),
            block_feedback_reset: false,
        }
    }

    pub fn from_session(session: &SessionState, spec: &TrialSpec) -> Self {
        Self::new(session.session_id(), spec, session.trials())
    }
}

pub trait Agent {
    /// Returns a one-based key index.
    fn choose(&mut self, obs: &Observation) -> Result<u8, AgentError>;

    fn name(&self) -> String;
}

/// Subset of the four rules, stored as a bitmask.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct RuleSet(u8);

impl RuleSet {
    pub const ALL: RuleSet = RuleSet(0b1111);
    pub const EMPTY: RuleSet = RuleSet(0);

    pub fn single(r: RuleDimension) -> Self {
        RuleSet(1 << r.index())
    }

    pub fn from_rules(rules: &[RuleDimension]) -> Self {
        RuleSet(rules.iter().fold(0, |m, r| m | (1 << r.index())))
    }

    pub fn contains(self, r: RuleDimension) -> bool {
        self.0 & (1 << r.index()) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset(self, other: RuleSet) -> bool {
        self.0 & !other.0 == 0
    }

    /// Rules in the fixed try-order (color, shape, number, border).
    pub fn iter(self) -> impl Iterator<Item = RuleDimension> {
        RuleDimension::ALL
            .into_iter()
            .filter(move |&r| self.contains(r))
    }

    pub fn first(self) -> Option<RuleDimension> {
        self.iter().next()
    }
}

impl fmt::Debug for RuleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Belief revision after feedback on `chosen` (zero-based key).
///
/// Correct keeps the rules pointing at the chosen key, incorrect drops them.
/// An empty result restarts from every rule that did not point at the
/// chosen key.
pub fn hypothesis_update(
    beliefs: RuleSet,
    chosen: u8,
    correct: bool,
    key_cards: &[Card; 4],
    stimulus: &Card,
) -> RuleSet {
    let pointing = RuleSet::from_rules(
        &RuleDimension::ALL
            .into_iter()
            .filter(|&r| indicated_key(key_cards, stimulus, r) == chosen)
            .collect::<Vec<_>>(),
    );
    let next = if correct {
        RuleSet(beliefs.0 & pointing.0)
    } else {
        RuleSet(beliefs.0 & !pointing.0)
    };
    if next.is_empty() {
        RuleSet(RuleSet::ALL.0 & !pointing.0)
    } else {
        next
    }
}

/// Knows the rule schedule and tracks the block from its own feedback.
#[derive(Clone, Debug)]
pub struct OracleAgent {
    schedule: Vec<RuleDimension>,
    switch_streak: usize,
}

impl OracleAgent {
    pub fn new(schedule: Vec<RuleDimension>, switch_streak: usize) -> Self {
        OracleAgent {
            schedule,
            switch_streak,
        }
    }

    pub fn for_session(session: &SessionState) -> Self {
        Self::new(
            session.rule_schedule().to_vec(),
            session.config().switch_streak,
        )
    }

    fn block_from_history(&self, history: &[HistoryEntry]) -> usize {
        let (mut block, mut streak) = (0, 0);
        for h in history {
            if h.correct {
                streak += 1;
                if streak == self.switch_streak {
                    block += 1;
                    streak = 0;
                }
            } else {
                streak = 0;
            }
        }
        block.min(self.schedule.len().saturating_sub(1))
    }
}

impl Agent for OracleAgent {
    fn choose(&mut self, obs: &Observation) -> Result<u8, AgentError> {
        let rule = self.schedule[self.block_from_history(&obs.history)];
        Ok(indicated_key(&obs.key_cards, &obs.stimulus, rule) + 1)
    }

    fn name(&self) -> String {
        "oracle".into()
    }
}

#[derive(Clone, Debug)]
pub struct RandomAgent {
    rng: ChaCha8Rng,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        RandomAgent {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Agent for RandomAgent {
    fn choose(&mut self, _obs: &Observation) -> Result<u8, AgentError> {
        Ok(self.rng.random_range(1..=4))
    }

    fn name(&self) -> String {
        "random".into()
    }
}

/// Eliminates rules from feedback and always plays the first remaining rule
/// in the fixed try-order.
#[derive(Clone, Debug)]
pub struct HypothesisAgent {
    beliefs: RuleSet,
    last: Option<(u8, Card, [Card; 4])>,
}

impl Default for HypothesisAgent {
    fn default() -> Self {
        HypothesisAgent {
            beliefs: RuleSet::ALL,
            last: None,
        }
    }
}

impl HypothesisAgent {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn beliefs(&self) -> RuleSet {
        self.beliefs
    }
}

impl Agent for HypothesisAgent {
    fn choose(&mut self, obs: &Observation) -> Result<u8, AgentError> {
        if let (Some((chosen, stim, keys)), Some(fb)) = (self.last, obs.history.last()) {
            // a timed-out previous trial carries no evidence
            if fb.choice.is_some() {
                self.beliefs = hypothesis_update(self.beliefs, chosen, fb.correct, &keys, &stim);
            }
        }
        let rule = self.beliefs.first().expect("beliefs never empty");
        let key = indicated_key(&obs.key_cards, &obs.stimulus, rule);
        self.last = Some((key, obs.stimulus, obs.key_cards));
        Ok(key + 1)
    }

    fn name(&self) -> String {
        "hypothesis".into()
    }
}

/// Sorts by one dimension forever.
#[derive(Clone, Debug)]
pub struct PerseverativeAgent {
    rule: RuleDimension,
}

impl PerseverativeAgent {
    pub fn new(rule: RuleDimension) -> Self {
        PerseverativeAgent { rule }
    }
}

impl Agent for PerseverativeAgent {
    fn choose(&mut self, obs: &Observation) -> Result<u8, AgentError> {
        Ok(indicated_key(&obs.key_cards, &obs.stimulus, self.rule) + 1)
    }

    fn name(&self) -> String {
        format!("perseverative-{}", self.rule)
    }
}

/// Replays a fixed list of keys, indexed by trial and wrapping around.
#[derive(Clone, Debug)]
pub struct ScriptedAgent {
    choices: Vec<u8>,
}

impl ScriptedAgent {
    pub fn new(choices: Vec<u8>) -> Result<Self, AgentError> {
        if let Some(&bad) = choices.iter().find(|&&c| !(1..=4).contains(&c)) {
            return Err(AgentError::OutOfRange(bad));
        }
        if choices.is_empty() {
            return Err(AgentError::OutOfRange(0));
        }
        Ok(ScriptedAgent { choices })
    }

    pub fn choice_at(choices: &[u8], trial_index: usize) -> u8 {
        choices[trial_index % choices.len()]
    }
}

impl Agent for ScriptedAgent {
    fn choose(&mut self, obs: &Observation) -> Result<u8, AgentError> {
        Ok(Self::choice_at(&self.choices, obs.trial_index))
    }

    fn name(&self) -> String {
        "scripted".into()
    }
}

/// Serializable agent selector used by configs and the batch runner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentKind {
    Oracle,
    Random,
    HypothesisTesting,
    Perseverative {
        #[serde(default = "default_perseverative_rule")]
        rule: RuleDimension,
    },
    Remote {
        endpoint: String,
        #[serde(default = "default_remote_timeout")]
        timeout_s: f64,
        #[serde(default)]
        strict: bool,
    },
    Scripted {
        choices: Vec<u8>,
    },
}

fn default_perseverative_rule() -> RuleDimension {
    RuleDimension::Color
}

fn default_remote_timeout() -> f64 {
    DEFAULT_REMOTE_TIMEOUT_S
}

impl AgentKind {
    pub fn label(&self) -> String {
        match self {
            AgentKind::Oracle => "oracle".into(),
            AgentKind::Random => "random".into(),
            AgentKind::HypothesisTesting => "hypothesis".into(),
            AgentKind::Perseverative { rule } => format!("perseverative-{rule}"),
            AgentKind::Remote { endpoint, .. } => format!("remote({endpoint})"),
            AgentKind::Scripted { .. } => "scripted".into(),
        }
    }

    /// Instantiates the agent for one session. `seed` drives stochastic
    /// agents; the oracle reads the session's schedule.
    pub fn build(&self, session: &SessionState, seed: u64) -> Result<Box<dyn Agent>, AgentError> {
        Ok(match self {
            AgentKind::Oracle => Box::new(OracleAgent::for_session(session)),
            AgentKind::Random => Box::new(RandomAgent::new(seed)),
            AgentKind::HypothesisTesting => Box::new(HypothesisAgent::new()),
            AgentKind::Perseverative { rule } => Box::new(PerseverativeAgent::new(*rule)),
            AgentKind::Remote {
                endpoint,
                timeout_s,
                strict,
            } => Box::new(RemoteAgent::new(
                HttpTransport::new(endpoint, std::time::Duration::from_secs_f64(*timeout_s)),
                *strict,
            )),
            AgentKind::Scripted { choices } => Box::new(ScriptedAgent::new(choices.clone())?),
        })
    }
}

/// Result of running one closed-loop session.
#[derive(Debug)]
pub struct ClosedLoop {
    pub session: SessionState,
    /// Trials whose agent call failed and were recorded as timeouts.
    pub agent_errors: Vec<(usize, AgentError)>,
}

/// Plays a session to completion. Every agent response is submitted with
/// `nominal_rt`; failed agent calls become timeouts.
pub fn run_closed_loop(
    mut session: SessionState,
    agent: &mut dyn Agent,
    nominal_rt: f64,
) -> Result<ClosedLoop, TaskError> {
    let mut agent_errors = Vec::new();
    while !session.is_finished() {
        let spec = session.next_trial()?;
        let obs = Observation::from_session(&session, &spec);
        let choice = match agent.choose(&obs) {
            Ok(k) if (1..=4).contains(&k) => Choice::Key(k),
            Ok(k) => {
                agent_errors.push((spec.trial_index, AgentError::OutOfRange(k)));
                Choice::Timeout
            }
            Err(e) => {
                agent_errors.push((spec.trial_index, e));
                Choice::Timeout
            }
        };
        session.submit_choice(choice, nominal_rt)?;
    }
    Ok(ClosedLoop {
        session,
        agent_errors,
    })
}

/// Builds a session from `config` and plays it with `kind`.
pub fn play_session(
    config: SessionConfig,
    kind: &AgentKind,
    agent_seed: u64,
    nominal_rt: f64,
) -> Result<ClosedLoop, AgentSessionError> {
    let session = SessionState::new(config)?;
    let mut agent = kind.build(&session, agent_seed)?;
    Ok(run_closed_loop(session, agent.as_mut(), nominal_rt)?)
}

#[derive(Debug, Error)]
pub enum AgentSessionError {
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Agent(#[from] AgentError),
}
