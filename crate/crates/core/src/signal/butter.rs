//! Digital Butterworth band-pass design (bilinear transform, prewarped band
//! edges) realized as second-order sections, and zero-phase
//! forward-backward filtering.

use num_complex::Complex64;

use super::SignalError;
use crate::num::Real;

/// One biquad, `a[0] == 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b[0] + z_inv * self.b[1] + z2 * self.b[2])
            / (self.a[0] + z_inv * self.a[1] + z2 * self.a[2])
    }

    /// Transposed direct-form-II state for a constant input of 1.
    fn step_state(&self) -> [f64; 2] {
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        let dc = (b0 + b1 + b2) / (1.0 + a1 + a2);
        let z2 = b2 - a2 * dc;
        let z1 = b1 - a1 * dc + z2;
        [z1, z2]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Butterworth {
    sections: Vec<Biquad>,
    /// Largest pole magnitude, sets the edge padding length.
    max_pole_radius: f64,
}

impl Butterworth {
    /// Band-pass built from an `order`-pole low-pass prototype (2·order
    /// poles in total).
    pub fn bandpass(order: usize, lo: f64, hi: f64, fs: f64) -> Result<Self, SignalError> {
        let nyq = fs / 2.0;
        if order == 0 || !(lo > 0.0 && lo < hi && hi < nyq) {
            return Err(SignalError::InvalidBand { lo, hi, fs });
        }
        let warp = |f: f64| 2.0 * fs * (std::f64::consts::PI * f / fs).tan();
        let (w1, w2) = (warp(lo), warp(hi));
        let bw = w2 - w1;
        let w0_sq = w1 * w2;

        let n = order as f64;
        let mut z_poles = Vec::with_capacity(2 * order);
        for k in 0..order {
            let theta = std::f64::consts::PI * (2.0 * k as f64 + n + 1.0) / (2.0 * n);
            let p = Complex64::from_polar(1.0, theta);
            let half = p * (bw / 2.0);
            let root = (half * half - w0_sq).sqrt();
            for s in [half + root, half - root] {
                let two_fs = Complex64::new(2.0 * fs, 0.0);
                z_poles.push((two_fs + s) / (two_fs - s));
            }
        }

        let max_pole_radius = z_poles.iter().map(|p| p.norm()).fold(0.0, f64::max);
        let center = 2.0 * (w0_sq.sqrt() / (2.0 * fs)).atan();
        let z_inv_c = Complex64::from_polar(1.0, -center);

        let mut upper: Vec<Complex64> = z_poles.iter().copied().filter(|p| p.im > 1e-14).collect();
        let mut real: Vec<f64> = z_poles
            .iter()
            .filter(|p| p.im.abs() <= 1e-14)
            .map(|p| p.re)
            .collect();
        upper.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
        real.sort_by(f64::total_cmp);

        let mut sections = Vec::with_capacity(order);
        let mut push = |a: [f64; 3]| {
            let mut sec = Biquad {
                b: [1.0, 0.0, -1.0],
                a,
            };
            let g = sec.response(z_inv_c).norm();
            sec.b = sec.b.map(|v| v / g);
            sections.push(sec);
        };
        for p in upper {
            push([1.0, -2.0 * p.re, p.norm_sqr()]);
        }
        for pair in real.chunks(2) {
            let (r1, r2) = (pair[0], *pair.get(1).unwrap_or(&0.0));
            push([1.0, -(r1 + r2), r1 * r2]);
        }
        Ok(Butterworth {
            sections,
            max_pole_radius,
        })
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    /// Complex response of one forward pass at `f` Hz.
    pub fn response(&self, f: f64, fs: f64) -> Complex64 {
        let z_inv = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * f / fs);
        self.sections
            .iter()
            .map(|s| s.response(z_inv))
            .fold(Complex64::new(1.0, 0.0), |acc, h| acc * h)
    }

    /// Edge padding: three time constants of the slowest pole, in samples.
    pub fn pad_len(&self) -> usize {
        let r = self.max_pole_radius.min(1.0 - 1e-12);
        (3.0 * (-1.0 / r.ln())).ceil() as usize
    }

    /// Single causal pass with initial state `x0 * step_state`.
    fn lfilter(&self, x: &mut [f64]) {
        let Some(&first) = x.first() else { return };
        let mut carry = first;
        for sec in &self.sections {
            let [b0, b1, b2] = sec.b;
            let [_, a1, a2] = sec.a;
            let zi = sec.step_state();
            let mut z1 = zi[0] * carry;
            let mut z2 = zi[1] * carry;
            for v in x.iter_mut() {
                let xin = *v;
                let y = b0 * xin + z1;
                z1 = b1 * xin - a1 * y + z2;
                z2 = b2 * xin - a2 * y;
                *v = y;
            }
            // next section starts in steady state for its own input level
            carry = x[0];
        }
    }

    /// Zero-phase filtering with odd reflection padding at both ends.
    /// Runs in f64 whatever the storage type.
    pub fn filtfilt<T: Real>(&self, x: &[T]) -> Vec<T> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        if n == 1 {
            return vec![T::zero()];
        }
        let x: Vec<f64> = x.iter().map(|v| v.as_f64()).collect();
        let pad = self.pad_len().min(n - 1);
        let mut buf = Vec::with_capacity(n + 2 * pad);
        buf.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        buf.extend_from_slice(&x);
        buf.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        self.lfilter(&mut buf);
        buf.reverse();
        self.lfilter(&mut buf);
        buf.reverse();
        buf[pad..pad + n].iter().map(|&v| T::of(v)).collect()
    }
}
