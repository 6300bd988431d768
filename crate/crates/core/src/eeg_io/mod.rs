//! Multichannel recordings, BrainVision-style file I/O and alignment of
//! behavioral log events to samples.

mod align;
mod brainvision;
pub mod montage;

pub use align::{align_behavior, AlignError, AlignOptions, labels};
pub use brainvision::{
    read_brainvision, read_brainvision_files, write_brainvision, write_brainvision_files,
    BrainVisionFiles, ParseError,
};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChannelRole {
    Eeg,
    Eog,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelInfo {
    pub name: String,
    pub role: ChannelRole,
    /// Unit-sphere coordinates, when the label is in the montage table.
    pub position: Option<[f64; 3]>,
}

impl ChannelInfo {
    /// Looks the label up in the montage table; role is EOG iff the label is
    /// one of `eog_labels`.
    pub fn from_label(name: &str, eog_labels: &[&str]) -> Self {
        let role = if eog_labels.iter().any(|e| e.eq_ignore_ascii_case(name)) {
            ChannelRole::Eog
        } else {
            ChannelRole::Eeg
        };
        ChannelInfo {
            name: name.to_string(),
            role,
            position: montage::position(name),
        }
    }
}

/// Default 32-channel layout with TP9/TP10 as EOG.
pub fn standard_channels() -> Vec<ChannelInfo> {
    montage::standard_32_labels()
        .into_iter()
        .map(|l| ChannelInfo::from_label(l, &montage::DEFAULT_EOG))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Marker {
    pub sample: usize,
    pub label: String,
    /// BrainVision marker type, e.g. `Stimulus`.
    pub kind: String,
}

impl Marker {
    pub fn stimulus(sample: usize, label: impl Into<String>) -> Self {
        Marker {
            sample,
            label: label.into(),
            kind: "Stimulus".into(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecordingError {
    #[error("sampling rate must be positive, got {0}")]
    SamplingRate(f64),
    #[error("data has {rows} rows but {channels} channels are declared")]
    RowCount { rows: usize, channels: usize },
    #[error("duplicate channel name {0}")]
    DuplicateChannel(String),
    #[error("marker {label} at sample {sample} outside [0, {n_samples})")]
    MarkerRange {
        label: String,
        sample: usize,
        n_samples: usize,
    },
}

/// Channels x samples matrix in microvolts plus metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Recording<T> {
    fs: f64,
    channels: Vec<ChannelInfo>,
    data: Array2<T>,
    markers: Vec<Marker>,
}

impl<T: Real> Recording<T> {
    pub fn new(
        fs: f64,
        channels: Vec<ChannelInfo>,
        data: Array2<T>,
        markers: Vec<Marker>,
    ) -> Result<Self, RecordingError> {
        if !(fs > 0.0) || !fs.is_finite() {
            return Err(RecordingError::SamplingRate(fs));
        }
        if data.nrows() != channels.len() {
            return Err(RecordingError::RowCount {
                rows: data.nrows(),
                channels: channels.len(),
            });
        }
        for (i, c) in channels.iter().enumerate() {
            if channels[..i].iter().any(|o| o.name == c.name) {
                return Err(RecordingError::DuplicateChannel(c.name.clone()));
            }
        }
        let n = data.ncols();
        if let Some(m) = markers.iter().find(|m| m.sample >= n) {
            return Err(RecordingError::MarkerRange {
                label: m.label.clone(),
                sample: m.sample,
                n_samples: n,
            });
        }
        Ok(Recording {
            fs,
            channels,
            data,
            markers,
        })
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }
    pub fn channels(&self) -> &[ChannelInfo] {
        &self.channels
    }
    pub fn data(&self) -> &Array2<T> {
        &self.data
    }
    pub fn markers(&self) -> &[Marker] {
        &self.markers
    }
    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }
    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }
    pub fn duration(&self) -> f64 {
        self.n_samples() as f64 / self.fs
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.name == name)
    }

    pub fn indices_with_role(&self, role: ChannelRole) -> Vec<usize> {
        self.channels
            .iter()
            .enumerate()
            .filter(|(_, c)| c.role == role)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn eeg_indices(&self) -> Vec<usize> {
        self.indices_with_role(ChannelRole::Eeg)
    }

    pub fn eog_indices(&self) -> Vec<usize> {
        self.indices_with_role(ChannelRole::Eog)
    }

    /// Same metadata with new data of identical shape.
    pub fn with_data(&self, data: Array2<T>) -> Self {
        assert_eq!(data.dim(), self.data.dim(), "shape must be preserved");
        Recording {
            fs: self.fs,
            channels: self.channels.clone(),
            data,
            markers: self.markers.clone(),
        }
    }

    pub fn with_markers(mut self, markers: Vec<Marker>) -> Result<Self, RecordingError> {
        let n = self.n_samples();
        if let Some(m) = markers.iter().find(|m| m.sample >= n) {
            return Err(RecordingError::MarkerRange {
                label: m.label.clone(),
                sample: m.sample,
                n_samples: n,
            });
        }
        self.markers = markers;
        Ok(self)
    }

    pub fn into_parts(self) -> (f64, Vec<ChannelInfo>, Array2<T>, Vec<Marker>) {
        (self.fs, self.channels, self.data, self.markers)
    }

    /// Converts the sample type.
    pub fn cast<U: Real>(&self) -> Recording<U> {
        Recording {
            fs: self.fs,
            channels: self.channels.clone(),
            data: self.data.mapv(|v| U::of(v.as_f64())),
            markers: self.markers.clone(),
        }
    }
}
