//! Line-noise removal by windowed least-squares sinusoid regression.
//!
//! In each window every channel is regressed on a constant plus a sine and
//! cosine at each harmonic of the line frequency below Nyquist. The fitted
//! harmonic part (not the constant) is subtracted, with overlapping windows
//! blended by a raised-cosine taper normalized to unit total weight.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::SignalError;
use crate::eeg_io::Recording;
use crate::num::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(default, deny_unknown_fields)]
pub struct NotchOptions {
    pub line_freq: f64,
    /// Highest harmonic to fit, in Hz; `None` means everything below Nyquist.
    pub max_freq: Option<f64>,
    pub window_s: f64,
    pub overlap: f64,
}

impl Default for NotchOptions {
    fn default() -> Self {
        NotchOptions {
            line_freq: 60.0,
            max_freq: None,
            window_s: 4.0,
            overlap: 0.5,
        }
    }
}

impl NotchOptions {
    pub fn harmonics(&self, fs: f64) -> Vec<f64> {
        let top = self.max_freq.unwrap_or(f64::INFINITY).min(fs / 2.0);
        (1..)
            .map(|h| h as f64 * self.line_freq)
            .take_while(|&f| f < top && f < fs / 2.0)
            .collect()
    }

    pub fn validate(&self, fs: f64) -> Result<(), SignalError> {
        if !(self.line_freq > 0.0) || self.line_freq >= fs / 2.0 {
            return Err(SignalError::LineFrequency {
                line: self.line_freq,
                nyquist: fs / 2.0,
            });
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(SignalError::Parameter(format!(
                "notch overlap {} outside [0, 1)",
                self.overlap
            )));
        }
        let samples = (self.window_s * fs).round() as usize;
        if samples < 2 || (samples as f64) < 2.0 * fs / self.line_freq {
            return Err(SignalError::WindowTooShort { samples });
        }
        Ok(())
    }
}

/// Removes line noise at `opts.line_freq` and its harmonics from every channel.
pub fn notch_spectrum_fit<T: Real>(
    rec: &Recording<T>,
    opts: &NotchOptions,
) -> Result<Recording<T>, SignalError> {
    let fs = rec.fs();
    opts.validate(fs)?;
    let freqs = opts.harmonics(fs);
    let n = rec.n_samples();
    let n_ch = rec.n_channels();
    let win = (opts.window_s * fs).round() as usize;
    let hop = ((win as f64) * (1.0 - opts.overlap)).round().max(1.0) as usize;
    let n_par = 1 + 2 * freqs.len();

    let taper: Vec<f64> = (0..win)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / win as f64).cos())
        .collect();

    let mut fitted = vec![vec![0.0f64; n]; n_ch];
    let mut weight = vec![0.0f64; n];
    let data = rec.data();

    // first window starts one hop before the signal so the taper covers sample 0
    let mut start = -(hop as i64);
    while start < n as i64 {
        let lo = start.max(0) as usize;
        let hi = ((start + win as i64).min(n as i64)) as usize;
        let len = hi - lo;
        if len >= 2 * n_par {
            let mut basis = DMatrix::<f64>::zeros(len, n_par);
            for (r, i) in (lo..hi).enumerate() {
                let t = i as f64 / fs;
                basis[(r, 0)] = 1.0;
                for (k, &f) in freqs.iter().enumerate() {
                    let ph = 2.0 * std::f64::consts::PI * f * t;
                    basis[(r, 1 + 2 * k)] = ph.cos();
                    basis[(r, 2 + 2 * k)] = ph.sin();
                }
            }
            let gram = basis.transpose() * &basis;
            if let Some(chol) = gram.cholesky() {
                for (c, fit_row) in fitted.iter_mut().enumerate() {
                    let y = DVector::from_iterator(len, (lo..hi).map(|i| data[[c, i]].as_f64()));
                    let coef = chol.solve(&(basis.transpose() * &y));
                    for (r, i) in (lo..hi).enumerate() {
                        let mut line = 0.0;
                        for p in 1..n_par {
                            line += basis[(r, p)] * coef[p];
                        }
                        fit_row[i] += taper[(i as i64 - start) as usize] * line;
                    }
                }
                for i in lo..hi {
                    weight[i] += taper[(i as i64 - start) as usize];
                }
            }
        }
        start += hop as i64;
    }

    let mut out = data.clone();
    for (c, fit_row) in fitted.iter().enumerate() {
        for i in 0..n {
            if weight[i] > 0.0 {
                out[[c, i]] -= T::of(fit_row[i] / weight[i]);
            }
        }
    }
    Ok(rec.with_data(out))
}
