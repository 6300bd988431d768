//! TOML configuration shared by every subcommand.
//!
//! Precedence: defaults, then the config file, then `WCST_LAB_BIND` /
//! `WCST_LAB_SEED`, then `--set key=value` and dedicated CLI flags.

use std::path::{Path, PathBuf};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use wcst_core::agents::AgentKind;
use wcst_core::eeg_io::montage::DEFAULT_EOG;
use wcst_core::erp::{ClusterOptions, Condition, Lock};
use wcst_core::signal::{BandDef, IcaOptions, NotchOptions, BANDS};
use wcst_core::synth::Component;
use wcst_core::task::{RuleDimension, SessionConfig};

pub const ENV_BIND: &str = "WCST_LAB_BIND";
pub const ENV_SEED: &str = "WCST_LAB_SEED";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid override {0:?}: expected key=value")]
    Override(String),
    #[error("invalid {field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.to_string(), message: message.into() }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct LabConfig {
    /// When set, replaces every seed below (session, ICA, balancing,
    /// permutations, synth).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub service: ServiceConfig,
    pub session: SessionConfig,
    pub batch: BatchConfig,
    pub pipeline: PipelineConfig,
    pub synth: SynthConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { bind: "127.0.0.1:8080".into() }
    }
}

/// One agent row of a batch run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct AgentEntry {
    /// Row label; defaults to the agent kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub agent: AgentKind,
    /// Per-agent cap replacing `session.max_trials`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_trials: Option<usize>,
}

impl AgentEntry {
    pub fn new(agent: AgentKind) -> Self {
        AgentEntry { label: None, agent, max_trials: None }
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.agent.label())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct BatchConfig {
    pub n_sessions: usize,
    /// Response time recorded for every agent choice.
    pub nominal_rt_s: f64,
    pub output_dir: PathBuf,
    /// Also write each session's JSONL log.
    pub write_logs: bool,
    pub agents: Vec<AgentEntry>,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig {
            n_sessions: 20,
            nominal_rt_s: 0.8,
            output_dir: PathBuf::from("batch"),
            write_logs: false,
            agents: vec![
                AgentEntry::new(AgentKind::Oracle),
                AgentEntry::new(AgentKind::Random),
                AgentEntry::new(AgentKind::HypothesisTesting),
                AgentEntry::new(AgentKind::Perseverative { rule: RuleDimension::Color }),
                AgentEntry {
                    label: Some("non-converger".into()),
                    agent: AgentKind::Scripted { choices: vec![1] },
                    max_trials: Some(128),
                },
            ],
        }
    }
}

/// One participant: a BrainVision header plus an optional behavior log.
/// Without a log the recording must already carry condition markers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ParticipantInput {
    pub id: String,
    pub vhdr: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log: Option<PathBuf>,
    /// Recording time (s) of the log's time origin.
    #[serde(default)]
    pub log_offset_s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct BandEdges {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub output_dir: PathBuf,
    pub participants: Vec<ParticipantInput>,
    /// Channel labels read as EOG; all others are EEG.
    pub eog_channels: Vec<String>,
    pub notch: NotchOptions,
    /// Broadband filter applied before ICA.
    pub bandpass: BandEdges,
    pub run_ica: bool,
    pub ica: IcaOptions,
    pub bands: Vec<BandDef>,
    pub lock: Lock,
    /// Conditions (a, b) of the difference wave a − b; defaults to the
    /// lock's standard contrast.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contrast: Option<[Condition; 2]>,
    /// Seed for subsampling the larger condition.
    pub balance_seed: u64,
    pub cluster: ClusterOptions,
    /// Channels closer than this (chord / sphere diameter) are neighbors.
    pub adjacency_threshold: f64,
    pub topo_svg: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            output_dir: PathBuf::from("analysis"),
            participants: Vec::new(),
            eog_channels: DEFAULT_EOG.map(String::from).to_vec(),
            notch: NotchOptions::default(),
            bandpass: BandEdges { lo: 0.5, hi: 100.0 },
            run_ica: true,
            ica: IcaOptions::default(),
            bands: BANDS.to_vec(),
            lock: Lock::Stimulus,
            contrast: None,
            balance_seed: 0,
            cluster: ClusterOptions::default(),
            adjacency_threshold: 0.4,
            topo_svg: true,
        }
    }
}

fn check_edges(field: &str, lo: f64, hi: f64) -> Result<(), ConfigError> {
    if !(lo > 0.0 && lo.is_finite() && hi.is_finite()) {
        return Err(invalid(field, format!("edges must be finite with lo > 0, got {lo}-{hi}")));
    }
    if lo >= hi {
        return Err(invalid(field, format!("lower edge {lo} Hz must be below upper edge {hi} Hz")));
    }
    Ok(())
}

impl PipelineConfig {
    pub fn contrast_pair(&self) -> (Condition, Condition) {
        self.contrast.map_or_else(|| self.lock.contrast(), |[a, b]| (a, b))
    }

    /// Checks everything that does not depend on the input files.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.participants.len() < 2 {
            return Err(invalid(
                "pipeline.participants",
                format!("the cluster test needs at least 2 participants, found {}", self.participants.len()),
            ));
        }
        let mut ids: Vec<&str> = self.participants.iter().map(|p| p.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(invalid("pipeline.participants", format!("duplicate id {:?}", w[0])));
        }
        if ids.iter().any(|id| id.is_empty() || id.contains(['/', '\\'])) {
            return Err(invalid("pipeline.participants", "ids must be non-empty without path separators"));
        }
        let n = &self.notch;
        if !(n.line_freq > 0.0 && n.line_freq.is_finite()) {
            return Err(invalid("pipeline.notch.line_freq", "must be positive"));
        }
        if !(n.window_s > 0.0 && n.window_s.is_finite()) {
            return Err(invalid("pipeline.notch.window_s", "must be positive"));
        }
        if !(0.0..1.0).contains(&n.overlap) {
            return Err(invalid("pipeline.notch.overlap", "must be in [0, 1)"));
        }
        check_edges("pipeline.bandpass", self.bandpass.lo, self.bandpass.hi)?;
        if self.bands.is_empty() {
            return Err(invalid("pipeline.bands", "at least one band is required"));
        }
        for b in &self.bands {
            check_edges(&format!("pipeline.bands.{}", b.band.name()), b.lo, b.hi)?;
        }
        let mut names: Vec<_> = self.bands.iter().map(|b| b.band).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.bands.len() {
            return Err(invalid("pipeline.bands", "each band may appear once"));
        }
        let ica = &self.ica;
        if !(ica.variance_retained > 0.0 && ica.variance_retained <= 1.0) {
            return Err(invalid("pipeline.ica.variance_retained", "must be in (0, 1]"));
        }
        if !(ica.tolerance > 0.0) || ica.max_iter == 0 {
            return Err(invalid("pipeline.ica", "tolerance and max_iter must be positive"));
        }
        if ica.max_components == Some(0) {
            return Err(invalid("pipeline.ica.max_components", "must be positive"));
        }
        if !(ica.eog_threshold > 0.0 && ica.eog_threshold <= 1.0) {
            return Err(invalid("pipeline.ica.eog_threshold", "must be in (0, 1]"));
        }
        let (a, b) = self.contrast_pair();
        if a == b || a.lock() != self.lock || b.lock() != self.lock {
            return Err(invalid(
                "pipeline.contrast",
                format!("{a} and {b} must be distinct {:?}-locked conditions", self.lock),
            ));
        }
        self.cluster
            .validate()
            .map_err(|e| invalid("pipeline.cluster", e.to_string()))?;
        if !(self.adjacency_threshold >= 0.0 && self.adjacency_threshold.is_finite()) {
            return Err(invalid("pipeline.adjacency_threshold", "must be finite and >= 0"));
        }
        Ok(())
    }

    /// Resolves relative paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        for p in &mut self.participants {
            fix(&mut p.vhdr);
            if let Some(l) = &mut p.log {
                fix(l);
            }
        }
    }
}

/// Ground-truth dataset: one recording and behavior log per participant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub participants: usize,
    pub fs: f64,
    /// Agent whose session provides the behavior timeline.
    pub agent: AgentKind,
    pub tail_s: f64,
    pub components: Vec<Component>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let parietal = ["P3", "Pz", "P4", "CP1", "CP2"].map(String::from).to_vec();
        SynthConfig {
            seed: 1,
            participants: 6,
            fs: 250.0,
            agent: AgentKind::HypothesisTesting,
            tail_s: 2.0,
            components: vec![
                Component::PinkNoise { channels: vec![], amplitude: 10.0 },
                Component::WhiteNoise { channels: vec![], amplitude: 2.0 },
                Component::Blink { amplitude: 100.0, rate_hz: 0.2 },
                Component::LineNoise { channels: vec![], amplitude: 5.0, freqs: vec![60.0, 120.0] },
                Component::ErpP300 {
                    channels: parietal,
                    amplitude: 8.0,
                    condition: Condition::Conf,
                    latency_s: 0.35,
                    width_s: 0.05,
                },
            ],
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.participants == 0 {
            return Err(invalid("synth.participants", "must be positive"));
        }
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return Err(invalid("synth.fs", "must be positive"));
        }
        if !(self.tail_s >= 0.0 && self.tail_s.is_finite()) {
            return Err(invalid("synth.tail_s", "must be >= 0"));
        }
        if matches!(self.agent, AgentKind::Remote { .. }) {
            return Err(invalid("synth.agent", "remote agents are not supported for synthesis"));
        }
        Ok(())
    }
}

impl LabConfig {
    /// Reads a TOML file without environment overrides; relative paths
    /// inside resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::assemble(Some(path), |_| None, &[])
    }

    /// Applies `key.path=value` overrides (TOML values; bare words are
    /// strings) to `table`, then deserializes and resolves paths.
    pub fn from_table(mut table: toml::Table, base: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: LabConfig = table.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.pipeline.resolve_paths(base);
        if cfg.batch.output_dir.is_relative() {
            cfg.batch.output_dir = base.join(&cfg.batch.output_dir);
        }
        Ok(cfg)
    }

    /// Reads the optional file, environment and overrides in that order.
    pub fn assemble(
        path: Option<&Path>,
        env: impl Fn(&str) -> Option<String>,
        overrides: &[String],
    ) -> Result<Self, ConfigError> {
        let (mut table, base) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|source| ConfigError::Io { path: p.to_path_buf(), source })?;
                let t: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
                (t, p.parent().unwrap_or(Path::new(".")).to_path_buf())
            }
            None => (toml::Table::new(), PathBuf::from(".")),
        };
        if let Some(bind) = env(ENV_BIND) {
            apply_override(&mut table, &format!("service.bind={}", toml::Value::String(bind)))?;
        }
        if let Some(seed) = env(ENV_SEED) {
            let s: u64 = seed
                .trim()
                .parse()
                .map_err(|_| invalid(ENV_SEED, format!("not an unsigned integer: {seed:?}")))?;
            apply_override(&mut table, &format!("seed={s}"))?;
        }
        let mut cfg = Self::from_table(table, &base, overrides)?;
        cfg.apply_seed();
        Ok(cfg)
    }

    /// Copies the global seed into every component seed.
    pub fn apply_seed(&mut self) {
        if let Some(s) = self.seed {
            self.session.seed = s;
            self.pipeline.ica.seed = s;
            self.pipeline.balance_seed = s;
            self.pipeline.cluster.seed = s;
            self.synth.seed = s;
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.session.validate().map_err(|e| invalid("session", e.to_string()))?;
        if !(self.batch.nominal_rt_s >= 0.0 && self.batch.nominal_rt_s <= self.session.response_window) {
            return Err(invalid("batch.nominal_rt_s", "must lie within the response window"));
        }
        self.synth.validate()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| ConfigError::Override(spec.to_string()))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigError::Override(spec.to_string()));
    }
    let value = parse_value(raw.trim());
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| invalid(key, format!("{p} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// JSON Schema of the config file.
pub fn config_schema() -> String {
    serde_json::to_string_pretty(&schemars::schema_for!(LabConfig)).expect("schema serializes") + "\n"
}
