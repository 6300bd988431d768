//! Card-sorting task engine.
//!
//! A session is a seeded state machine: a schedule of hidden sorting rules,
//! one stimulus card per trial matched against four fixed key cards, and a
//! rule switch after a run of consecutive correct responses.
//!
//! Key card `k` carries attribute index `k` on every dimension, and every
//! stimulus is a permutation of `{0, 1, 2, 3}` over the four dimensions. The
//! key a rule points at is therefore the stimulus' attribute index on that
//! rule's dimension, and the four rules always point at four different keys.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaskError {
    #[error("invalid session config: {0}")]
    Config(String),
    #[error("card attribute index {0} out of range 0-3")]
    Attribute(u8),
    #[error("choice {0} outside 1-4")]
    InvalidChoice(u8),
    #[error("response time {rt} s outside [0, {window}] s")]
    InvalidRt { rt: f64, window: f64 },
    #[error("no pending trial; call next_trial first")]
    NoPendingTrial,
    #[error("session is finished")]
    SessionComplete,
    #[error("log line {line}: {msg}")]
    Log { line: usize, msg: String },
}

/// One of the four hidden sorting rules. The discriminant is the stable log
/// encoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(into = "u8", try_from = "u8")]
#[repr(u8)]
pub enum RuleDimension {
    Color = 0,
    Shape = 1,
    Number = 2,
    BorderColor = 3,
}

impl RuleDimension {
    pub const ALL: [RuleDimension; 4] = [
        RuleDimension::Color,
        RuleDimension::Shape,
        RuleDimension::Number,
        RuleDimension::BorderColor,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: u8) -> Option<Self> {
        Self::ALL.get(i as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            RuleDimension::Color => "color",
            RuleDimension::Shape => "shape",
            RuleDimension::Number => "number",
            RuleDimension::BorderColor => "border_color",
        }
    }
}

impl From<RuleDimension> for u8 {
    fn from(r: RuleDimension) -> u8 {
        r as u8
    }
}

impl TryFrom<u8> for RuleDimension {
    type Error = TaskError;
    fn try_from(v: u8) -> Result<Self, TaskError> {
        RuleDimension::from_index(v).ok_or(TaskError::Attribute(v))
    }
}

impl fmt::Display for RuleDimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A card described by one attribute index (0-3) per dimension.
/// Serialized as `[color, shape, number, border]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "[u8; 4]", try_from = "[u8; 4]")]
pub struct Card {
    attrs: [u8; 4],
}

impl Card {
    pub fn new(color: u8, shape: u8, number: u8, border: u8) -> Result<Self, TaskError> {
        Self::from_array([color, shape, number, border])
    }

    pub fn from_array(attrs: [u8; 4]) -> Result<Self, TaskError> {
        if let Some(&bad) = attrs.iter().find(|&&a| a > 3) {
            return Err(TaskError::Attribute(bad));
        }
        Ok(Card { attrs })
    }

    pub const fn uniform(k: u8) -> Self {
        Card { attrs: [k, k, k, k] }
    }

    pub fn attribute(&self, dim: RuleDimension) -> u8 {
        self.attrs[dim.index()]
    }

    pub fn color_idx(&self) -> u8 {
        self.attrs[0]
    }
    pub fn shape_idx(&self) -> u8 {
        self.attrs[1]
    }
    pub fn number_idx(&self) -> u8 {
        self.attrs[2]
    }
    pub fn border_idx(&self) -> u8 {
        self.attrs[3]
    }

    pub fn to_array(self) -> [u8; 4] {
        self.attrs
    }

    /// True when the four attribute indices are pairwise distinct.
    pub fn is_permutation(&self) -> bool {
        let mut seen = [false; 4];
        for &a in &self.attrs {
            if seen[a as usize] {
                return false;
            }
            seen[a as usize] = true;
        }
        true
    }
}

impl From<Card> for [u8; 4] {
    fn from(c: Card) -> Self {
        c.attrs
    }
}

impl TryFrom<[u8; 4]> for Card {
    type Error = TaskError;
    fn try_from(a: [u8; 4]) -> Result<Self, TaskError> {
        Card::from_array(a)
    }
}

/// Key card `k` has attribute index `k` on every dimension.
pub const KEY_CARDS: [Card; 4] = [
    Card::uniform(0),
    Card::uniform(1),
    Card::uniform(2),
    Card::uniform(3),
];

/// Zero-based index of the key card sharing `stimulus`' attribute on `dim`.
pub fn indicated_key(key_cards: &[Card; 4], stimulus: &Card, dim: RuleDimension) -> u8 {
    let want = stimulus.attribute(dim);
    key_cards
        .iter()
        .position(|k| k.attribute(dim) == want)
        .expect("key cards cover every attribute value") as u8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub key_cards: [Card; 4],
    pub stimulus: Card,
    pub trial_index: usize,
    pub block_index: usize,
    pub active_rule: RuleDimension,
}

impl TrialSpec {
    /// Zero-based key that `dim` points at for this stimulus.
    pub fn key_for(&self, dim: RuleDimension) -> u8 {
        indicated_key(&self.key_cards, &self.stimulus, dim)
    }

    /// Zero-based correct key under the active rule.
    pub fn correct_key(&self) -> u8 {
        self.key_for(self.active_rule)
    }
}

/// A response to a trial: a one-based key index, or no response in time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Choice {
    Key(u8),
    Timeout,
}

impl Choice {
    /// Zero-based key index, if a key was pressed.
    pub fn key0(self) -> Option<u8> {
        match self {
            Choice::Key(k) => Some(k - 1),
            Choice::Timeout => None,
        }
    }

    pub fn as_option(self) -> Option<u8> {
        match self {
            Choice::Key(k) => Some(k),
            Choice::Timeout => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub seed: u64,
    pub n_blocks: usize,
    pub switch_streak: usize,
    pub response_window: f64,
    pub max_trials: usize,
    pub fixation_duration: f64,
    /// Time the key cards are shown alone before the stimulus appears.
    pub keys_duration: f64,
    pub feedback_duration: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            seed: 0,
            n_blocks: 6,
            switch_streak: 10,
            response_window: 3.0,
            max_trials: 512,
            fixation_duration: 0.5,
            keys_duration: 0.5,
            feedback_duration: 1.0,
        }
    }
}

impl SessionConfig {
    pub fn with_seed(seed: u64) -> Self {
        SessionConfig {
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        let bad = |m: &str| Err(TaskError::Config(m.to_string()));
        if self.n_blocks < 1 {
            return bad("n_blocks must be >= 1");
        }
        if self.switch_streak < 1 {
            return bad("switch_streak must be >= 1");
        }
        if !(self.response_window > 0.0) || !self.response_window.is_finite() {
            return bad("response_window must be > 0");
        }
        if self.max_trials < self.n_blocks * self.switch_streak {
            return Err(TaskError::Config(format!(
                "max_trials ({}) must be >= n_blocks x switch_streak ({})",
                self.max_trials,
                self.n_blocks * self.switch_streak
            )));
        }
        for (name, v) in [
            ("fixation_duration", self.fixation_duration),
            ("keys_duration", self.keys_duration),
            ("feedback_duration", self.feedback_duration),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(TaskError::Config(format!("{name} must be >= 0")));
            }
        }
        Ok(())
    }
}

/// Event onsets in seconds relative to session start.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventTimes {
    pub fixation_on: f64,
    pub keys_on: f64,
    pub stimulus_on: f64,
    /// Absent for timeouts.
    pub response: Option<f64>,
    pub feedback_on: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub trial_spec: TrialSpec,
    pub choice: Choice,
    pub correct: bool,
    pub rt: Option<f64>,
    pub event_times: EventTimes,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    AwaitingResponse,
    Finished,
}

/// Rule schedule: the first four blocks are a random permutation of all
/// rules, later blocks draw uniformly from the three rules that differ from
/// the preceding block.
pub fn rule_schedule<R: Rng>(rng: &mut R, n_blocks: usize) -> Vec<RuleDimension> {
    let mut first = RuleDimension::ALL;
    first.shuffle(rng);
    let mut out: Vec<RuleDimension> = first.iter().copied().take(n_blocks).collect();
    while out.len() < n_blocks {
        let prev = *out.last().expect("non-empty");
        let others: Vec<RuleDimension> = RuleDimension::ALL
            .iter()
            .copied()
            .filter(|&r| r != prev)
            .collect();
        out.push(others[rng.random_range(0..others.len())]);
    }
    out
}

fn random_stimulus<R: Rng>(rng: &mut R, previous: Option<Card>) -> Card {
    loop {
        let mut attrs = [0u8, 1, 2, 3];
        attrs.shuffle(rng);
        let card = Card { attrs };
        if Some(card) != previous {
            return card;
        }
    }
}

#[derive(Clone, Debug)]
pub struct SessionState {
    session_id: String,
    config: SessionConfig,
    rule_schedule: Vec<RuleDimension>,
    current_block: usize,
    current_streak: usize,
    trials: Vec<TrialRecord>,
    phase: Phase,
    pending: Option<TrialSpec>,
    last_stimulus: Option<Card>,
    clock: f64,
    rng: ChaCha8Rng,
}

impl SessionState {
    pub fn new(config: SessionConfig) -> Result<Self, TaskError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let rule_schedule = rule_schedule(&mut rng, config.n_blocks);
        Ok(SessionState {
            session_id: format!("seed-{}", config.seed),
            config,
            rule_schedule,
            current_block: 0,
            current_streak: 0,
            trials: Vec::new(),
            phase: Phase::AwaitingResponse,
            pending: None,
            last_stimulus: None,
            clock: 0.0,
            rng,
        })
    }

    pub fn with_session_id(mut self, id: impl Into<String>) -> Self {
        self.session_id = id.into();
        self
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }
    pub fn config(&self) -> &SessionConfig {
        &self.config
    }
    pub fn rule_schedule(&self) -> &[RuleDimension] {
        &self.rule_schedule
    }
    pub fn current_block(&self) -> usize {
        self.current_block
    }
    pub fn current_streak(&self) -> usize {
        self.current_streak
    }
    pub fn trials(&self) -> &[TrialRecord] {
        &self.trials
    }
    pub fn phase(&self) -> Phase {
        self.phase
    }
    pub fn pending(&self) -> Option<&TrialSpec> {
        self.pending.as_ref()
    }
    pub fn is_finished(&self) -> bool {
        self.phase == Phase::Finished
    }

    /// Draws the next trial, or returns the still-pending one.
    pub fn next_trial(&mut self) -> Result<TrialSpec, TaskError> {
        if self.phase == Phase::Finished {
            return Err(TaskError::SessionComplete);
        }
        if let Some(p) = &self.pending {
            return Ok(p.clone());
        }
        let stimulus = random_stimulus(&mut self.rng, self.last_stimulus);
        self.last_stimulus = Some(stimulus);
        let spec = TrialSpec {
            key_cards: KEY_CARDS,
            stimulus,
            trial_index: self.trials.len(),
            block_index: self.current_block,
            active_rule: self.rule_schedule[self.current_block],
        };
        self.pending = Some(spec.clone());
        Ok(spec)
    }

    /// Scores the pending trial. `rt` is ignored for [`Choice::Timeout`].
    pub fn submit_choice(&mut self, choice: Choice, rt: f64) -> Result<TrialRecord, TaskError> {
        if self.phase == Phase::Finished {
            return Err(TaskError::SessionComplete);
        }
        if let Choice::Key(k) = choice {
            if !(1..=4).contains(&k) {
                return Err(TaskError::InvalidChoice(k));
            }
            if !(rt >= 0.0 && rt <= self.config.response_window) {
                return Err(TaskError::InvalidRt {
                    rt,
                    window: self.config.response_window,
                });
            }
        }
        let spec = self.pending.take().ok_or(TaskError::NoPendingTrial)?;

        let correct = choice.key0() == Some(spec.correct_key());
        let rt = choice.key0().map(|_| rt);

        let cfg = &self.config;
        let fixation_on = self.clock;
        let keys_on = fixation_on + cfg.fixation_duration;
        let stimulus_on = keys_on + cfg.keys_duration;
        let response = rt.map(|r| stimulus_on + r);
        let feedback_on = response.unwrap_or(stimulus_on + cfg.response_window);
        self.clock = feedback_on + cfg.feedback_duration;

        let record = TrialRecord {
            trial_spec: spec,
            choice,
            correct,
            rt,
            event_times: EventTimes {
                fixation_on,
                keys_on,
                stimulus_on,
                response,
                feedback_on,
            },
        };
        self.trials.push(record.clone());

        if correct {
            self.current_streak += 1;
            if self.current_streak == self.config.switch_streak {
                self.current_streak = 0;
                self.current_block += 1;
                if self.current_block == self.config.n_blocks {
                    self.phase = Phase::Finished;
                }
            }
        } else {
            self.current_streak = 0;
        }
        if self.trials.len() >= self.config.max_trials {
            self.phase = Phase::Finished;
        }
        Ok(record)
    }

    pub fn log(&self) -> SessionLog {
        SessionLog {
            session_id: self.session_id.clone(),
            config: self.config.clone(),
            records: self.trials.clone(),
        }
    }

    pub fn export_log(&self) -> String {
        self.log().to_jsonl()
    }
}

/// Convenience wrapper matching the operation name used across the crate.
pub fn new_session(config: SessionConfig) -> Result<SessionState, TaskError> {
    SessionState::new(config)
}

pub const LOG_FORMAT: &str = "wcst-log";
pub const LOG_VERSION: u32 = 1;

/// A completed or partial session as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionLog {
    pub session_id: String,
    pub config: SessionConfig,
    pub records: Vec<TrialRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LogHeader {
    format: String,
    version: u32,
    session_id: String,
    config: SessionConfig,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LogLine {
    session_id: String,
    trial_index: usize,
    block_index: usize,
    rule: RuleDimension,
    stimulus: Card,
    choice: Option<u8>,
    correct: bool,
    rt_s: Option<f64>,
    t_fixation: f64,
    t_keys: f64,
    t_stimulus: f64,
    t_response: Option<f64>,
    t_feedback: f64,
}

impl SessionLog {
    /// Line-delimited JSON: a header object followed by one object per trial.
    pub fn to_jsonl(&self) -> String {
        let header = LogHeader {
            format: LOG_FORMAT.to_string(),
            version: LOG_VERSION,
            session_id: self.session_id.clone(),
            config: self.config.clone(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for r in &self.records {
            let line = LogLine {
                session_id: self.session_id.clone(),
                trial_index: r.trial_spec.trial_index,
                block_index: r.trial_spec.block_index,
                rule: r.trial_spec.active_rule,
                stimulus: r.trial_spec.stimulus,
                choice: r.choice.as_option(),
                correct: r.correct,
                rt_s: r.rt,
                t_fixation: r.event_times.fixation_on,
                t_keys: r.event_times.keys_on,
                t_stimulus: r.event_times.stimulus_on,
                t_response: r.event_times.response,
                t_feedback: r.event_times.feedback_on,
            };
            out.push_str(&serde_json::to_string(&line).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, TaskError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or(TaskError::Log {
            line: 1,
            msg: "empty log".into(),
        })?;
        let header: LogHeader = serde_json::from_str(first).map_err(|e| TaskError::Log {
            line: 1,
            msg: format!("bad header: {e}"),
        })?;
        if header.format != LOG_FORMAT || header.version != LOG_VERSION {
            return Err(TaskError::Log {
                line: 1,
                msg: format!("unsupported format {} v{}", header.format, header.version),
            });
        }
        let mut records = Vec::new();
        for (i, l) in lines {
            let err = |msg: String| TaskError::Log { line: i + 1, msg };
            let line: LogLine = serde_json::from_str(l).map_err(|e| err(e.to_string()))?;
            let choice = match line.choice {
                None => Choice::Timeout,
                Some(k) if (1..=4).contains(&k) => Choice::Key(k),
                Some(k) => return Err(err(format!("choice {k} outside 1-4"))),
            };
            if line.trial_index != records.len() {
                return Err(err(format!(
                    "trial_index {} out of sequence (expected {})",
                    line.trial_index,
                    records.len()
                )));
            }
            records.push(TrialRecord {
                trial_spec: TrialSpec {
                    key_cards: KEY_CARDS,
                    stimulus: line.stimulus,
                    trial_index: line.trial_index,
                    block_index: line.block_index,
                    active_rule: line.rule,
                },
                choice,
                correct: line.correct,
                rt: line.rt_s,
                event_times: EventTimes {
                    fixation_on: line.t_fixation,
                    keys_on: line.t_keys,
                    stimulus_on: line.t_stimulus,
                    response: line.t_response,
                    feedback_on: line.t_feedback,
                },
            });
        }
        Ok(SessionLog {
            session_id: header.session_id,
            config: header.config,
            records,
        })
    }
}

pub fn import_log(text: &str) -> Result<SessionLog, TaskError> {
    SessionLog::parse(text)
}
