//! Ground-truth datasets on disk: per participant a BrainVision recording
//! without condition markers, the behavior log that places them, and the
//! synth manifest; plus a ready-to-run analysis config.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use wcst_core::agents::play_session;
use wcst_core::eeg_io::write_brainvision_files;
use wcst_core::erp::Condition;
use wcst_core::synth::{generate, Component, SynthSpec};
use wcst_core::task::SessionConfig;
use wcst_core::Synthesized64;

use crate::config::{LabConfig, ParticipantInput};
use crate::seeds::derive_seed;

pub const ANALYSIS_CONFIG: &str = "analysis.toml";
pub const TRUTH_FILE: &str = "truth.json";

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("invalid synth config: {0}")]
    Config(String),
    #[error("participant {id}: {message}")]
    Participant { id: String, message: String },
    #[error("write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Channels and time span (relative to the event) of an injected ERP.
/// The span covers latency ± 2 widths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectedRegion {
    pub kind: String,
    pub condition: Condition,
    pub channels: Vec<String>,
    pub start_s: f64,
    pub end_s: f64,
}

fn round_us(t: f64) -> f64 {
    (t * 1e6).round() / 1e6
}

pub fn injected_regions(components: &[Component]) -> Vec<InjectedRegion> {
    components
        .iter()
        .filter_map(|c| match c {
            Component::ErpFrn { channels, condition, latency_s, width_s, .. }
            | Component::ErpP300 { channels, condition, latency_s, width_s, .. } => Some(InjectedRegion {
                kind: c.kind().to_string(),
                condition: *condition,
                channels: channels.clone(),
                start_s: round_us(latency_s - 2.0 * width_s),
                end_s: round_us(latency_s + 2.0 * width_s),
            }),
            Component::BandBurst { channels, condition, onset_s, duration_s, .. } => Some(InjectedRegion {
                kind: c.kind().to_string(),
                condition: *condition,
                channels: channels.clone(),
                start_s: round_us(*onset_s),
                end_s: round_us(onset_s + duration_s),
            }),
            _ => None,
        })
        .collect()
}

pub fn participant_id(i: usize) -> String {
    format!("p{:02}", i + 1)
}

/// Plays one session with the configured agent and renders its recording.
pub fn synthesize_participant(cfg: &LabConfig, i: usize) -> Result<(String, Synthesized64, String), FixtureError> {
    let s = &cfg.synth;
    let id = participant_id(i);
    let err = |m: String| FixtureError::Participant { id: id.clone(), message: m };
    let session = SessionConfig { seed: derive_seed(s.seed, 3 * i as u64), ..cfg.session.clone() };
    let run = play_session(session, &s.agent, derive_seed(s.seed, 3 * i as u64 + 1), cfg.batch.nominal_rt_s)
        .map_err(|e| err(e.to_string()))?;
    let log = run.session.log();
    let spec = SynthSpec {
        seed: derive_seed(s.seed, 3 * i as u64 + 2),
        tail_s: s.tail_s,
        components: s.components.clone(),
        ..SynthSpec::with_default_noise(0, s.fs)
    };
    let synth: Synthesized64 = generate(&spec, &log).map_err(|e| err(e.to_string()))?;
    Ok((id, synth, log.to_jsonl()))
}

/// Writes the dataset into `dir` and returns the analysis config path.
pub fn write_fixture(cfg: &LabConfig, dir: &Path) -> Result<PathBuf, FixtureError> {
    cfg.synth.validate().map_err(|e| FixtureError::Config(e.to_string()))?;
    cfg.session.validate().map_err(|e| FixtureError::Config(e.to_string()))?;
    let io = |path: PathBuf| move |source| FixtureError::Io { path, source };
    std::fs::create_dir_all(dir).map_err(io(dir.to_path_buf()))?;
    let made = crate::par::par_map(&(0..cfg.synth.participants).collect::<Vec<_>>(), |_, &i| {
        synthesize_participant(cfg, i)
    });
    let mut participants = Vec::new();
    for r in made {
        let (id, synth, log) = r?;
        let rec = synth
            .recording
            .clone()
            .with_markers(Vec::new())
            .map_err(|e| FixtureError::Participant { id: id.clone(), message: e.to_string() })?;
        write_brainvision_files(&rec, dir, &id).map_err(io(dir.join(format!("{id}.vhdr"))))?;
        let log_name = format!("{id}.jsonl");
        std::fs::write(dir.join(&log_name), log).map_err(io(dir.join(&log_name)))?;
        let manifest = dir.join(format!("{id}.manifest.json"));
        std::fs::write(&manifest, synth.manifest.to_json()).map_err(io(manifest.clone()))?;
        participants.push(ParticipantInput {
            id: id.clone(),
            vhdr: format!("{id}.vhdr").into(),
            log: Some(log_name.into()),
            log_offset_s: 0.0,
        });
    }
    let truth = serde_json::to_string_pretty(&injected_regions(&cfg.synth.components)).expect("regions serialize") + "\n";
    std::fs::write(dir.join(TRUTH_FILE), truth).map_err(io(dir.join(TRUTH_FILE)))?;

    let mut analysis = cfg.clone();
    analysis.seed = None;
    analysis.pipeline.participants = participants;
    analysis.pipeline.output_dir = PathBuf::from("analysis");
    analysis.batch.output_dir = PathBuf::from("batch");
    let path = dir.join(ANALYSIS_CONFIG);
    std::fs::write(&path, analysis.to_toml()).map_err(io(path.clone()))?;
    Ok(path)
}
