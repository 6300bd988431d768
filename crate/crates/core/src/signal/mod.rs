//! Preprocessing chain: common-average re-reference, line-noise removal by
//! sinusoid regression, zero-phase band-pass, canonical band split and ICA
//! ocular artifact removal.

mod butter;
mod ica;
mod notch;
mod spectrum;

pub use butter::{Biquad, Butterworth};
pub use ica::{ica_clean, ica_fit, IcaModel, IcaOptions};
pub use notch::{notch_spectrum_fit, NotchOptions};
pub use spectrum::welch_psd;

use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eeg_io::{ChannelRole, Recording};
use crate::num::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("invalid band {lo}-{hi} Hz at fs {fs} Hz (need 0 < lo < hi < fs/2)")]
    InvalidBand { lo: f64, hi: f64, fs: f64 },
    #[error("need at least 2 EEG channels, found {0}")]
    TooFewEegChannels(usize),
    #[error("line frequency {line} Hz must be below Nyquist {nyquist} Hz")]
    LineFrequency { line: f64, nyquist: f64 },
    #[error("notch window of {samples} samples is too short")]
    WindowTooShort { samples: usize },
    #[error("need at least {needed} samples, found {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error("ICA did not converge after {iterations} iterations (last change {last_change:.3e}, tolerance {tolerance:.1e})")]
    Convergence {
        iterations: usize,
        last_change: f64,
        tolerance: f64,
    },
    #[error("channel mismatch: {0}")]
    ChannelMismatch(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

/// Subtracts the instantaneous mean of the EEG-role channels from every
/// EEG-role channel. EOG channels are copied unchanged.
pub fn rereference_common_average<T: Real>(rec: &Recording<T>) -> Result<Recording<T>, SignalError> {
    let eeg = rec.eeg_indices();
    if eeg.len() < 2 {
        return Err(SignalError::TooFewEegChannels(eeg.len()));
    }
    let mut data = rec.data().clone();
    let inv = T::one() / T::of_usize(eeg.len());
    for s in 0..rec.n_samples() {
        let mut col = data.column_mut(s);
        let m = eeg.iter().map(|&c| col[c]).sum::<T>() * inv;
        for &c in &eeg {
            col[c] -= m;
        }
    }
    Ok(rec.with_data(data))
}

/// Order-4 Butterworth band-pass applied forward and backward to every
/// channel.
pub fn bandpass<T: Real>(rec: &Recording<T>, lo: f64, hi: f64) -> Result<Recording<T>, SignalError> {
    let filt = Butterworth::bandpass(4, lo, hi, rec.fs())?;
    Ok(rec.with_data(filter_rows(rec.data(), &filt)))
}

/// Band-pass only the rows whose role matches `role`.
pub fn bandpass_role<T: Real>(
    rec: &Recording<T>,
    lo: f64,
    hi: f64,
    role: ChannelRole,
) -> Result<Recording<T>, SignalError> {
    let filt = Butterworth::bandpass(4, lo, hi, rec.fs())?;
    let mut data = rec.data().clone();
    for c in rec.indices_with_role(role) {
        let row: Vec<T> = data.row(c).to_vec();
        let y = filt.filtfilt(&row);
        data.row_mut(c).iter_mut().zip(y).for_each(|(d, v)| *d = v);
    }
    Ok(rec.with_data(data))
}

pub(crate) fn filter_rows<T: Real>(data: &Array2<T>, filt: &Butterworth) -> Array2<T> {
    let mut out = data.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let x: Vec<T> = row.to_vec();
        let y = filt.filtfilt(&x);
        row.iter_mut().zip(y).for_each(|(d, v)| *d = v);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Delta,
    Theta,
    Alpha,
    Beta,
    Gamma,
}

impl Band {
    pub const ALL: [Band; 5] = [Band::Delta, Band::Theta, Band::Alpha, Band::Beta, Band::Gamma];

    pub fn name(self) -> &'static str {
        match self {
            Band::Delta => "delta",
            Band::Theta => "theta",
            Band::Alpha => "alpha",
            Band::Beta => "beta",
            Band::Gamma => "gamma",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
pub struct BandDef {
    pub band: Band,
    pub lo: f64,
    pub hi: f64,
}

pub const BANDS: [BandDef; 5] = [
    BandDef { band: Band::Delta, lo: 0.5, hi: 4.0 },
    BandDef { band: Band::Theta, lo: 4.0, hi: 8.0 },
    BandDef { band: Band::Alpha, lo: 8.0, hi: 13.0 },
    BandDef { band: Band::Beta, lo: 13.0, hi: 30.0 },
    BandDef { band: Band::Gamma, lo: 30.0, hi: 80.0 },
];

/// One band-passed copy of the recording per canonical band.
pub fn band_split<T: Real>(rec: &Recording<T>) -> Result<BTreeMap<Band, Recording<T>>, SignalError> {
    band_split_with(rec, &BANDS)
}

pub fn band_split_with<T: Real>(
    rec: &Recording<T>,
    bands: &[BandDef],
) -> Result<BTreeMap<Band, Recording<T>>, SignalError> {
    bands
        .iter()
        .map(|b| Ok((b.band, bandpass(rec, b.lo, b.hi)?)))
        .collect()
}
