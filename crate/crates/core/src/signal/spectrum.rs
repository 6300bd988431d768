//! Welch power spectral density.

use rustfft::{num_complex::Complex64, FftPlanner};

use super::SignalError;
use crate::num::Real;

/// One-sided PSD (units²/Hz) from Hann-windowed segments of `seg_len`
/// samples with 50 % overlap. Returns (frequencies, power).
pub fn welch_psd<T: Real>(x: &[T], fs: f64, seg_len: usize) -> Result<(Vec<f64>, Vec<f64>), SignalError> {
    if seg_len < 2 || x.len() < seg_len {
        return Err(SignalError::TooFewSamples { needed: seg_len.max(2), found: x.len() });
    }
    let window: Vec<f64> = (0..seg_len)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / seg_len as f64).cos())
        .collect();
    let win_power: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(seg_len);
    let n_bins = seg_len / 2 + 1;
    let mut acc = vec![0.0; n_bins];
    let mut count = 0;
    let hop = seg_len / 2;
    let mut start = 0;
    let mut buf = vec![Complex64::new(0.0, 0.0); seg_len];
    while start + seg_len <= x.len() {
        let seg = &x[start..start + seg_len];
        let mean = seg.iter().map(|v| v.as_f64()).sum::<f64>() / seg_len as f64;
        for (b, (v, w)) in buf.iter_mut().zip(seg.iter().zip(&window)) {
            *b = Complex64::new((v.as_f64() - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (k, a) in acc.iter_mut().enumerate() {
            *a += buf[k].norm_sqr();
        }
        count += 1;
        start += hop;
    }
    let scale = 1.0 / (fs * win_power * count as f64);
    let psd = acc
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let one_sided = if k == 0 || (seg_len.is_multiple_of(2) && k == n_bins - 1) { 1.0 } else { 2.0 };
            a * scale * one_sided
        })
        .collect();
    let freqs = (0..n_bins).map(|k| k as f64 * fs / seg_len as f64).collect();
    Ok((freqs, psd))
}
