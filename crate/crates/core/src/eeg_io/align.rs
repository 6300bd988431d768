//! Places behavioral log events on the sample grid of a recording.

use thiserror::Error;

use super::{Marker, Recording};
use crate::metrics::{trial_phases, TrialPhase};
use crate::num::Real;
use crate::task::SessionLog;

pub mod labels {
    pub const STIM: &str = "STIM";
    pub const FB_COR: &str = "FB_COR";
    pub const FB_INC: &str = "FB_INC";
    pub const COND_CONF: &str = "COND_CONF";
    pub const COND_SEARCH: &str = "COND_SEARCH";
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("events outside the recording for trials {trials:?}")]
pub struct AlignError {
    pub trials: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlignOptions {
    /// Recording time (s) of the log's time origin.
    pub offset_s: f64,
}

impl Default for AlignOptions {
    fn default() -> Self {
        AlignOptions { offset_s: 0.0 }
    }
}

/// Adds STIM + COND_* markers at stimulus onset and FB_COR/FB_INC at
/// feedback onset, each at the nearest sample. Existing markers are kept;
/// the result is sorted by sample (stable).
pub fn align_behavior<T: Real>(
    rec: &Recording<T>,
    log: &SessionLog,
    opts: AlignOptions,
) -> Result<Recording<T>, AlignError> {
    let fs = rec.fs();
    let n = rec.n_samples();
    let to_sample = |t: f64| -> Option<usize> {
        let s = ((t + opts.offset_s) * fs).round();
        (s >= 0.0 && s < n as f64).then_some(s as usize)
    };
    let phases = trial_phases(&log.records, log.config.switch_streak);
    let mut added = Vec::with_capacity(log.records.len() * 3);
    let mut bad = Vec::new();
    for (r, phase) in log.records.iter().zip(phases) {
        let (Some(stim), Some(fb)) = (
            to_sample(r.event_times.stimulus_on),
            to_sample(r.event_times.feedback_on),
        ) else {
            bad.push(r.trial_spec.trial_index);
            continue;
        };
        added.push(Marker::stimulus(stim, labels::STIM));
        added.push(Marker::stimulus(
            stim,
            match phase {
                TrialPhase::Confirm => labels::COND_CONF,
                TrialPhase::Search => labels::COND_SEARCH,
            },
        ));
        added.push(Marker::stimulus(
            fb,
            if r.correct {
                labels::FB_COR
            } else {
                labels::FB_INC
            },
        ));
    }
    if !bad.is_empty() {
        return Err(AlignError { trials: bad });
    }
    let mut markers = rec.markers().to_vec();
    markers.extend(added);
    markers.sort_by_key(|m| m.sample);
    Ok(rec
        .clone()
        .with_markers(markers)
        .expect("aligned markers are in range"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{play_session, AgentKind};
    use crate::eeg_io::ChannelInfo;
    use crate::metrics::summarize_session;
    use crate::task::SessionConfig;
    use ndarray::Array2;

    fn blank(fs: f64, secs: f64) -> Recording<f64> {
        let n = (fs * secs) as usize;
        Recording::new(
            fs,
            vec![ChannelInfo::from_label("Cz", &[])],
            Array2::zeros((1, n)),
            vec![],
        )
        .unwrap()
    }

    fn hypothesis_log(seed: u64) -> SessionLog {
        play_session(
            SessionConfig::with_seed(seed),
            &AgentKind::HypothesisTesting,
            0,
            0.8,
        )
        .unwrap()
        .session
        .log()
    }

    #[test]
    fn nearest_sample_rounding() {
        let mut log = hypothesis_log(1);
        log.records.truncate(1);
        log.records[0].event_times.stimulus_on = 1.0004;
        log.records[0].event_times.feedback_on = 1.9996;
        let out = align_behavior(&blank(1000.0, 3.0), &log, AlignOptions::default()).unwrap();
        let stim = out.markers().iter().find(|m| m.label == labels::STIM).unwrap();
        assert_eq!(stim.sample, 1000);
        let fb = out.markers().iter().find(|m| m.label.starts_with("FB_")).unwrap();
        assert_eq!(fb.sample, 2000);
    }

    #[test]
    fn feedback_labels_and_phases_match_metrics() {
        let log = hypothesis_log(5);
        let dur = log.records.last().unwrap().event_times.feedback_on + 2.0;
        let out = align_behavior(&blank(250.0, dur), &log, AlignOptions::default()).unwrap();
        let count = |l: &str| out.markers().iter().filter(|m| m.label == l).count();
        let n_inc = log.records.iter().filter(|r| !r.correct).count();
        assert_eq!(count(labels::FB_INC), n_inc);
        assert_eq!(count(labels::FB_COR), log.records.len() - n_inc);
        assert_eq!(count(labels::STIM), log.records.len());
        // SEARCH trials = sum of block latencies
        let m = summarize_session(&log.records, 10).unwrap();
        let search: usize = m.blocks.iter().map(|b| b.latency).sum();
        assert_eq!(count(labels::COND_SEARCH), search);
        assert_eq!(count(labels::COND_CONF), log.records.len() - search);
        // alignment error bounded by half a sample
        for (r, m) in log
            .records
            .iter()
            .zip(out.markers().iter().filter(|m| m.label == labels::STIM))
        {
            assert!((m.sample as f64 / 250.0 - r.event_times.stimulus_on).abs() <= 0.5 / 250.0 + 1e-12);
        }
    }

    #[test]
    fn out_of_range_lists_trials() {
        let log = hypothesis_log(2);
        let e = align_behavior(&blank(100.0, 10.0), &log, AlignOptions::default()).unwrap_err();
        assert!(!e.trials.is_empty());
        assert!(e.trials.windows(2).all(|w| w[0] < w[1]));
        assert!(e.trials[0] > 0);
    }
}
