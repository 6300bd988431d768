//! Event-related potential statistics: epoching with baseline correction,
//! balanced condition averages, difference waves, spatio-temporal cluster
//! permutation tests and windowed topographies.

mod cluster;
mod output;
mod topo;

pub use cluster::{
    build_adjacency, cluster_permutation, cluster_permutation_exact, find_clusters, t_map,
    Adjacency, ClusterOptions, ClusterOutcome, ClusterResult, Polarity, RawCluster,
};
pub use output::{clusters_csv, clusters_json, erp_csv, topo_json, topo_svg, ClusterSummary, TopoRecord};
pub use topo::{significance_mask, topo_windows, TopoWindow, TOPO_END_S, TOPO_START_S, TOPO_WIDTH_S};

use ndarray::{s, Array2};
use rand::seq::index::sample;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eeg_io::{labels, ChannelInfo, Recording};
use crate::num::Real;

pub const EPOCH_PRE_S: f64 = 0.1;
pub const EPOCH_POST_S: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ErpError {
    #[error("no epochs could be extracted ({skipped} events too close to the recording edges)")]
    NoEpochs { skipped: usize },
    #[error("condition {0} has no epochs")]
    EmptyCondition(Condition),
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error("need at least 2 participants, found {0}")]
    TooFewParticipants(usize),
    #[error("adjacency graph has no channels")]
    EmptyAdjacency,
    #[error("channel {0} has no position")]
    MissingPosition(String),
    #[error("window {start_s}-{end_s} s not covered by data spanning {first_s}-{last_s} s")]
    WindowRange {
        start_s: f64,
        end_s: f64,
        first_s: f64,
        last_s: f64,
    },
    #[error("invalid input: {0}")]
    Input(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(rename_all = "lowercase")]
pub enum Lock {
    Stimulus,
    Feedback,
}

impl Lock {
    /// Condition pair whose difference wave is analyzed, as (a, b) in a − b.
    pub fn contrast(self) -> (Condition, Condition) {
        match self {
            Lock::Stimulus => (Condition::Conf, Condition::Search),
            Lock::Feedback => (Condition::Inc, Condition::Cor),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(rename_all = "UPPERCASE")]
pub enum Condition {
    Conf,
    Search,
    Cor,
    Inc,
}

impl Condition {
    pub fn name(self) -> &'static str {
        match self {
            Condition::Conf => "CONF",
            Condition::Search => "SEARCH",
            Condition::Cor => "COR",
            Condition::Inc => "INC",
        }
    }

    pub fn marker_label(self) -> &'static str {
        match self {
            Condition::Conf => labels::COND_CONF,
            Condition::Search => labels::COND_SEARCH,
            Condition::Cor => labels::FB_COR,
            Condition::Inc => labels::FB_INC,
        }
    }

    pub fn lock(self) -> Lock {
        match self {
            Condition::Conf | Condition::Search => Lock::Stimulus,
            Condition::Cor | Condition::Inc => Lock::Feedback,
        }
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Samples before the event and total epoch length at `fs`.
pub fn epoch_geometry(fs: f64) -> (usize, usize) {
    let pre = (EPOCH_PRE_S * fs).round() as usize;
    let len = ((EPOCH_PRE_S + EPOCH_POST_S) * fs).round() as usize;
    (pre, len)
}

/// Sample times of an epoch relative to the event.
pub fn epoch_times(fs: f64) -> Vec<f64> {
    let (pre, len) = epoch_geometry(fs);
    (0..len).map(|i| (i as f64 - pre as f64) / fs).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Epoch<T> {
    pub condition: Condition,
    /// EEG channels x samples, baseline-corrected.
    pub data: Array2<T>,
    pub event_sample: usize,
    pub participant: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochSet<T> {
    pub fs: f64,
    /// EEG channels, in data row order.
    pub channels: Vec<ChannelInfo>,
    pub epochs: Vec<Epoch<T>>,
    /// Events skipped because the window left the recording.
    pub skipped: usize,
}

impl<T: Real> EpochSet<T> {
    pub fn count(&self, c: Condition) -> usize {
        self.epochs.iter().filter(|e| e.condition == c).count()
    }
}

/// Cuts [−0.1 s, +0.5 s) epochs around every condition marker of `lock` on
/// the EEG channels and subtracts each channel's mean over [−0.1 s, 0).
pub fn epoch<T: Real>(rec: &Recording<T>, lock: Lock, participant: &str) -> Result<EpochSet<T>, ErpError> {
    let (pre, len) = epoch_geometry(rec.fs());
    let eeg = rec.eeg_indices();
    let (a, b) = lock.contrast();
    let mut epochs = Vec::new();
    let mut skipped = 0;
    for m in rec.markers() {
        let condition = match [a, b].into_iter().find(|c| c.marker_label() == m.label) {
            Some(c) => c,
            None => continue,
        };
        if m.sample < pre || m.sample - pre + len > rec.n_samples() {
            skipped += 1;
            continue;
        }
        let start = m.sample - pre;
        let mut data = Array2::<T>::zeros((eeg.len(), len));
        for (r, &ch) in eeg.iter().enumerate() {
            let src = rec.data().slice(s![ch, start..start + len]);
            let base = if pre > 0 {
                src.slice(s![..pre]).iter().copied().sum::<T>() / T::of_usize(pre)
            } else {
                T::zero()
            };
            data.row_mut(r).iter_mut().zip(src).for_each(|(d, &v)| *d = v - base);
        }
        epochs.push(Epoch {
            condition,
            data,
            event_sample: m.sample,
            participant: participant.to_string(),
        });
    }
    if epochs.is_empty() {
        return Err(ErpError::NoEpochs { skipped });
    }
    Ok(EpochSet {
        fs: rec.fs(),
        channels: eeg.iter().map(|&i| rec.channels()[i].clone()).collect(),
        epochs,
        skipped,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionAverage<T> {
    pub condition: Condition,
    pub data: Array2<T>,
    pub n_trials: usize,
}

/// Averages the two conditions after subsampling the larger one, without
/// replacement, down to the size of the smaller.
pub fn balance_and_average<T: Real>(
    set: &EpochSet<T>,
    pair: (Condition, Condition),
    seed: u64,
) -> Result<(ConditionAverage<T>, ConditionAverage<T>), ErpError> {
    let pick = |c: Condition| -> Vec<&Epoch<T>> { set.epochs.iter().filter(|e| e.condition == c).collect() };
    let (ea, eb) = (pick(pair.0), pick(pair.1));
    for (c, e) in [(pair.0, &ea), (pair.1, &eb)] {
        if e.is_empty() {
            return Err(ErpError::EmptyCondition(c));
        }
    }
    let n = ea.len().min(eb.len());
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut average = |c: Condition, all: Vec<&Epoch<T>>| -> ConditionAverage<T> {
        let chosen: Vec<usize> = if all.len() > n {
            let mut idx = sample(&mut rng, all.len(), n).into_vec();
            idx.sort_unstable();
            idx
        } else {
            (0..n).collect()
        };
        let mut acc = Array2::<T>::zeros(all[0].data.dim());
        for &i in &chosen {
            acc += &all[i].data;
        }
        ConditionAverage {
            condition: c,
            data: acc / T::of_usize(n),
            n_trials: n,
        }
    };
    let a = average(pair.0, ea);
    let b = average(pair.1, eb);
    Ok((a, b))
}

/// Elementwise `a − b`.
pub fn difference_wave<T: Real>(a: &ConditionAverage<T>, b: &ConditionAverage<T>) -> Result<Array2<T>, ErpError> {
    if a.data.dim() != b.data.dim() {
        return Err(ErpError::ShapeMismatch(a.data.dim(), b.data.dim()));
    }
    Ok(&a.data - &b.data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eeg_io::Marker;

    fn rec_with(fs: f64, n: usize, rows: usize, markers: Vec<Marker>, fill: impl Fn(usize, usize) -> f64) -> Recording<f64> {
        let names = ["Fz", "Cz", "Pz", "TP9"];
        let ch = (0..rows).map(|i| ChannelInfo::from_label(names[i], &["TP9"])).collect();
        Recording::new(fs, ch, Array2::from_shape_fn((rows, n), |(c, s)| fill(c, s)), markers).unwrap()
    }

    #[test]
    fn window_arithmetic() {
        let rec = rec_with(1000.0, 10_000, 2, vec![Marker::stimulus(5000, labels::COND_CONF)], |_, s| s as f64);
        let set = epoch(&rec, Lock::Stimulus, "p").unwrap();
        let e = &set.epochs[0];
        assert_eq!(e.data.ncols(), 600);
        // ramp: value at offset i is (4900 + i) minus the baseline mean 4949.5
        assert_eq!(e.data[[0, 0]], 4900.0 - 4949.5);
        assert_eq!(e.data[[0, 599]], 5499.0 - 4949.5);
        assert_eq!(epoch_times(1000.0)[100], 0.0);
    }

    #[test]
    fn constant_channel_becomes_zero_and_eog_dropped() {
        let rec = rec_with(250.0, 2000, 4, vec![Marker::stimulus(500, labels::FB_INC)], |_, _| 5.0);
        let set = epoch(&rec, Lock::Feedback, "p").unwrap();
        assert_eq!(set.channels.len(), 3);
        assert!(set.epochs[0].data.iter().all(|&v| v == 0.0));
        assert_eq!(set.epochs[0].data.ncols(), 150);
    }

    #[test]
    fn baseline_mean_is_zero() {
        let markers = (0..5).map(|k| Marker::stimulus(300 + 200 * k, labels::COND_SEARCH)).collect();
        let rec = rec_with(500.0, 2000, 3, markers, |c, s| ((s * 7 + c * 13) % 17) as f64 * 1.3 + 40.0);
        let set = epoch(&rec, Lock::Stimulus, "p").unwrap();
        for e in &set.epochs {
            for row in e.data.rows() {
                let m: f64 = row.iter().take(50).sum::<f64>() / 50.0;
                assert!(m.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn edge_event_is_skipped_and_counted() {
        let mut markers: Vec<Marker> = (0..19).map(|k| Marker::stimulus(1000 + 700 * k, labels::COND_CONF)).collect();
        markers.insert(0, Marker::stimulus(50, labels::COND_CONF));
        let rec = rec_with(1000.0, 15_000, 2, markers, |_, _| 0.0);
        let set = epoch(&rec, Lock::Stimulus, "p").unwrap();
        assert_eq!(set.epochs.len(), 19);
        assert_eq!(set.skipped, 1);
    }

    #[test]
    fn no_epochs_is_error() {
        let rec = rec_with(1000.0, 1000, 2, vec![Marker::stimulus(10, labels::FB_COR)], |_, _| 0.0);
        assert_eq!(epoch(&rec, Lock::Feedback, "p").unwrap_err(), ErpError::NoEpochs { skipped: 1 });
        assert_eq!(epoch(&rec, Lock::Stimulus, "p").unwrap_err(), ErpError::NoEpochs { skipped: 0 });
    }

    fn set_with_counts(n_conf: usize, n_search: usize) -> EpochSet<f64> {
        let mk = |c, k: usize| Epoch {
            condition: c,
            data: Array2::from_elem((2, 4), k as f64),
            event_sample: k,
            participant: "p".into(),
        };
        let mut epochs: Vec<Epoch<f64>> = (0..n_conf).map(|k| mk(Condition::Conf, k)).collect();
        epochs.extend((0..n_search).map(|k| mk(Condition::Search, 100 + k)));
        EpochSet { fs: 10.0, channels: vec![], epochs, skipped: 0 }
    }

    #[test]
    fn balancing_subsamples_majority() {
        let set = set_with_counts(30, 10);
        let (a, b) = balance_and_average(&set, (Condition::Conf, Condition::Search), 7).unwrap();
        assert_eq!((a.n_trials, b.n_trials), (10, 10));
        assert_eq!(b.data[[0, 0]], 104.5);
        let again = balance_and_average(&set, (Condition::Conf, Condition::Search), 7).unwrap();
        assert_eq!(again.0, a);
        let (a2, _) = balance_and_average(&set_with_counts(10, 10), (Condition::Conf, Condition::Search), 7).unwrap();
        assert_eq!(a2.data[[1, 3]], 4.5);
    }

    #[test]
    fn empty_condition_is_error() {
        let set = set_with_counts(3, 0);
        assert_eq!(
            balance_and_average(&set, (Condition::Conf, Condition::Search), 0).unwrap_err(),
            ErpError::EmptyCondition(Condition::Search)
        );
    }

    #[test]
    fn difference_wave_values() {
        let a = ConditionAverage { condition: Condition::Inc, data: ndarray::array![[1.0, 2.0], [3.0, 4.5]], n_trials: 1 };
        let b = ConditionAverage { condition: Condition::Cor, data: ndarray::array![[0.5, 2.0], [-1.0, 4.0]], n_trials: 1 };
        assert_eq!(difference_wave(&a, &b).unwrap(), ndarray::array![[0.5, 0.0], [4.0, 0.5]]);
        assert_eq!(difference_wave(&b, &a).unwrap(), -difference_wave(&a, &b).unwrap());
        assert!(difference_wave(&a, &a).unwrap().iter().all(|&v| v == 0.0));
        let c = ConditionAverage { condition: Condition::Cor, data: Array2::zeros((1, 2)), n_trials: 1 };
        assert!(matches!(difference_wave(&a, &c), Err(ErpError::ShapeMismatch(..))));
    }
}
