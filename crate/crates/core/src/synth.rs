//! Synthetic EEG with known ground truth: event-locked ERP components,
//! oscillatory bursts, blinks, line noise and pink/white noise, driven by a
//! behavioral session log.
//!
//! Every deterministic contribution is listed in a [`Manifest`] that can
//! re-render it exactly; noise is drawn from per-channel ChaCha streams.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eeg_io::{align_behavior, montage, AlignError, AlignOptions, ChannelInfo, Recording, RecordingError};
use crate::erp::Condition;
use crate::num::Real;
use crate::task::SessionLog;

pub const BLINK_DURATION_S: f64 = 0.4;

/// Blink spatial weights relative to the EOG channels (weight 1).
pub const BLINK_WEIGHTS: [(&str, f64); 7] = [
    ("Fp1", 0.6),
    ("Fp2", 0.6),
    ("F7", 0.3),
    ("F8", 0.3),
    ("F3", 0.25),
    ("Fz", 0.25),
    ("F4", 0.25),
];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    Spec(String),
    #[error("unknown channel {0}")]
    UnknownChannel(String),
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error(transparent)]
    Recording(#[from] RecordingError),
}

fn frn_latency() -> f64 {
    0.2
}
fn frn_width() -> f64 {
    0.05
}
fn p300_latency() -> f64 {
    0.35
}
fn p300_width() -> f64 {
    0.1
}
fn line_freqs() -> Vec<f64> {
    vec![60.0, 120.0, 180.0]
}

/// One injected effect. Amplitudes are µV: peak for ERPs, bursts, blinks
/// and each line harmonic; RMS for noise. Empty `channels` means every
/// EEG channel for noise and line components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Component {
    /// Negative Gaussian deflection after each `condition` event.
    ErpFrn {
        channels: Vec<String>,
        amplitude: f64,
        condition: Condition,
        #[serde(default = "frn_latency")]
        latency_s: f64,
        #[serde(default = "frn_width")]
        width_s: f64,
    },
    /// Positive Gaussian deflection after each `condition` event.
    ErpP300 {
        channels: Vec<String>,
        amplitude: f64,
        condition: Condition,
        #[serde(default = "p300_latency")]
        latency_s: f64,
        #[serde(default = "p300_width")]
        width_s: f64,
    },
    /// Hann-windowed sinusoid starting `onset_s` after each event.
    BandBurst {
        channels: Vec<String>,
        amplitude: f64,
        condition: Condition,
        freq_hz: f64,
        onset_s: f64,
        duration_s: f64,
    },
    /// Biphasic 0.4 s blinks at random times on EOG and frontal channels.
    Blink { amplitude: f64, rate_hz: f64 },
    LineNoise {
        #[serde(default)]
        channels: Vec<String>,
        amplitude: f64,
        #[serde(default = "line_freqs")]
        freqs: Vec<f64>,
    },
    PinkNoise {
        #[serde(default)]
        channels: Vec<String>,
        amplitude: f64,
    },
    WhiteNoise {
        #[serde(default)]
        channels: Vec<String>,
        amplitude: f64,
    },
}

impl Component {
    pub fn kind(&self) -> &'static str {
        match self {
            Component::ErpFrn { .. } => "erp_frn",
            Component::ErpP300 { .. } => "erp_p300",
            Component::BandBurst { .. } => "band_burst",
            Component::Blink { .. } => "blink",
            Component::LineNoise { .. } => "line_noise",
            Component::PinkNoise { .. } => "pink_noise",
            Component::WhiteNoise { .. } => "white_noise",
        }
    }

    fn amplitude(&self) -> f64 {
        match self {
            Component::ErpFrn { amplitude, .. }
            | Component::ErpP300 { amplitude, .. }
            | Component::BandBurst { amplitude, .. }
            | Component::Blink { amplitude, .. }
            | Component::LineNoise { amplitude, .. }
            | Component::PinkNoise { amplitude, .. }
            | Component::WhiteNoise { amplitude, .. } => *amplitude,
        }
    }
}

fn default_channels() -> Vec<String> {
    montage::standard_32_labels().into_iter().map(String::from).collect()
}
fn default_eog() -> Vec<String> {
    montage::DEFAULT_EOG.iter().map(|s| s.to_string()).collect()
}
fn default_tail() -> f64 {
    2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    pub fs: f64,
    /// Recording length; `None` ends `tail_s` after the last feedback.
    #[serde(default)]
    pub duration_s: Option<f64>,
    #[serde(default = "default_tail")]
    pub tail_s: f64,
    #[serde(default = "default_channels")]
    pub channels: Vec<String>,
    #[serde(default = "default_eog")]
    pub eog: Vec<String>,
    #[serde(default)]
    pub components: Vec<Component>,
}

impl SynthSpec {
    /// Standard montage with the default noise floor: pink 10 µV RMS plus
    /// white 2 µV RMS on every channel.
    pub fn with_default_noise(seed: u64, fs: f64) -> Self {
        SynthSpec {
            seed,
            fs,
            duration_s: None,
            tail_s: default_tail(),
            channels: default_channels(),
            eog: default_eog(),
            components: vec![
                Component::PinkNoise { channels: vec![], amplitude: 10.0 },
                Component::WhiteNoise { channels: vec![], amplitude: 2.0 },
            ],
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Spec(m));
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return bad(format!("fs must be positive, got {}", self.fs));
        }
        if let Some(d) = self.duration_s {
            if !(d > 0.0 && d.is_finite()) {
                return bad(format!("duration_s must be positive, got {d}"));
            }
        }
        if self.channels.is_empty() {
            return bad("no channels".into());
        }
        for (i, c) in self.components.iter().enumerate() {
            let a = c.amplitude();
            if !(a >= 0.0 && a.is_finite()) {
                return bad(format!("component {i} ({}) has negative or non-finite amplitude {a}", c.kind()));
            }
            match c {
                Component::ErpFrn { width_s, .. } | Component::ErpP300 { width_s, .. } if !(*width_s > 0.0) => {
                    return bad(format!("component {i} width must be positive"));
                }
                Component::BandBurst { freq_hz, duration_s, .. }
                    if !(*duration_s > 0.0) || !(*freq_hz > 0.0 && *freq_hz < self.fs / 2.0) =>
                {
                    return bad(format!("component {i} burst needs duration > 0 and 0 < freq < fs/2"));
                }
                Component::Blink { rate_hz, .. } if !(*rate_hz >= 0.0) => {
                    return bad(format!("component {i} blink rate must be >= 0"));
                }
                Component::LineNoise { freqs, .. } if freqs.iter().any(|f| !(*f > 0.0 && *f < self.fs / 2.0)) => {
                    return bad(format!("component {i} line frequencies must lie in (0, fs/2)"));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Deterministic waveform of an instance, in absolute sample time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    /// `sign · exp(−½((t − peak)/width)²)` with t relative to the event.
    Gaussian { peak_s: f64, width_s: f64, sign: f64 },
    /// Hann-windowed sine, phase zero at the burst start.
    HannSine { freq_hz: f64 },
    /// Fixed biphasic blink template over the span.
    Blink,
    /// Sum of unit sines with phase zero at sample 0.
    Sines { freqs: Vec<f64> },
    /// Drawn from ChaCha stream `stream` of the spec seed; not re-renderable.
    Noise { stream: u64, pink: bool },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    /// Index into the spec's component list.
    pub component: usize,
    pub kind: String,
    pub channels: Vec<String>,
    pub weights: Vec<f64>,
    pub amplitude: f64,
    pub event_sample: Option<usize>,
    /// Half-open sample span [start, end).
    pub start_sample: usize,
    pub end_sample: usize,
    pub shape: Shape,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub fs: f64,
    pub n_samples: usize,
    pub channels: Vec<String>,
    pub instances: Vec<Instance>,
}

fn blink_template(u: f64) -> f64 {
    (-((u - 0.3) / 0.12).powi(2)).exp() - 0.35 * (-((u - 0.7) / 0.12).powi(2)).exp()
}

impl Instance {
    /// Unit-amplitude waveform value at absolute sample `i` (inside the span).
    fn value(&self, i: usize, fs: f64) -> f64 {
        match &self.shape {
            Shape::Gaussian { peak_s, width_s, sign } => {
                let t = (i as f64 - self.event_sample.unwrap_or(0) as f64) / fs;
                sign * (-0.5 * ((t - peak_s) / width_s).powi(2)).exp()
            }
            Shape::HannSine { freq_hz } => {
                let len = (self.end_sample - self.start_sample) as f64;
                let k = (i - self.start_sample) as f64;
                let env = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k / len).cos();
                env * (2.0 * std::f64::consts::PI * freq_hz * k / fs).sin()
            }
            Shape::Blink => {
                let len = (self.end_sample - self.start_sample) as f64;
                blink_template((i - self.start_sample) as f64 / len)
            }
            Shape::Sines { freqs } => freqs
                .iter()
                .map(|f| (2.0 * std::f64::consts::PI * f * i as f64 / fs).sin())
                .sum(),
            Shape::Noise { .. } => 0.0,
        }
    }

    pub fn is_noise(&self) -> bool {
        matches!(self.shape, Shape::Noise { .. })
    }
}

impl Manifest {
    /// Sum of every deterministic instance: the recording minus its noise.
    pub fn render(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.channels.len(), self.n_samples));
        for inst in self.instances.iter().filter(|i| !i.is_noise()) {
            let rows: Vec<usize> = inst
                .channels
                .iter()
                .map(|c| self.channels.iter().position(|x| x == c).expect("manifest channel"))
                .collect();
            for i in inst.start_sample..inst.end_sample {
                let v = inst.amplitude * inst.value(i, self.fs);
                for (&r, &w) in rows.iter().zip(&inst.weights) {
                    out[[r, i]] += w * v;
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Synthesized<T> {
    pub recording: Recording<T>,
    pub manifest: Manifest,
}

/// Exponent of the signed power warp applied to Gaussian 1/f noise. The
/// warp makes each channel's background a super-Gaussian (excess kurtosis
/// about 1.7) independent source, which ICA can separate, while the log-log
/// spectral slope stays within a few percent of −1.
pub const PINK_WARP: f64 = 1.4;

/// 1/f-shaped noise with unit RMS and zero mean.
fn pink(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut buf: Vec<Complex64> = (0..n).map(|_| Complex64::new(StandardNormal.sample(rng), 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, b) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64;
        *b = if f == 0.0 { Complex64::new(0.0, 0.0) } else { *b / f.sqrt() };
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let warped: Vec<f64> = buf.iter().map(|c| c.re.signum() * c.re.abs().powf(PINK_WARP)).collect();
    let mean = warped.iter().sum::<f64>() / n as f64;
    let x: Vec<f64> = warped.iter().map(|v| v - mean).collect();
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if rms > 0.0 {
        x.iter().map(|v| v / rms).collect()
    } else {
        x
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Renders `spec` against the events of `log` (aligned with zero offset).
/// The recording carries STIM, COND_* and FB_* markers.
pub fn generate<T: Real>(spec: &SynthSpec, log: &SessionLog) -> Result<Synthesized<T>, SynthError> {
    spec.validate()?;
    let fs = spec.fs;
    let duration = match spec.duration_s {
        Some(d) => d,
        None => log.records.last().map_or(0.0, |r| r.event_times.feedback_on) + spec.tail_s,
    };
    let n = (duration * fs).round() as usize;
    if n == 0 {
        return Err(SynthError::Spec("recording would be empty".into()));
    }
    let eog: Vec<&str> = spec.eog.iter().map(String::as_str).collect();
    let channels: Vec<ChannelInfo> = spec.channels.iter().map(|c| ChannelInfo::from_label(c, &eog)).collect();
    let blank = Recording::new(fs, channels.clone(), Array2::<f64>::zeros((channels.len(), n)), vec![])?;
    let marked = align_behavior(&blank, log, AlignOptions::default())?;
    let eeg_names: Vec<String> = marked.eeg_indices().iter().map(|&i| spec.channels[i].clone()).collect();

    let resolve = |names: &[String], all_default: bool| -> Result<Vec<String>, SynthError> {
        if names.is_empty() && all_default {
            return Ok(spec.channels.clone());
        }
        names
            .iter()
            .map(|c| {
                spec.channels
                    .iter()
                    .find(|x| *x == c)
                    .cloned()
                    .ok_or_else(|| SynthError::UnknownChannel(c.clone()))
            })
            .collect()
    };
    let events = |cond: Condition| -> Vec<usize> {
        marked
            .markers()
            .iter()
            .filter(|m| m.label == cond.marker_label())
            .map(|m| m.sample)
            .collect()
    };
    let to_samples = |t: f64| (t * fs).round() as i64;
    let clip = |a: i64, b: i64| -> Option<(usize, usize)> {
        let (a, b) = (a.max(0) as usize, b.min(n as i64).max(0) as usize);
        (a < b).then_some((a, b))
    };

    let mut instances = Vec::new();
    for (ci, comp) in spec.components.iter().enumerate() {
        let kind = comp.kind().to_string();
        match comp {
            Component::ErpFrn { channels, amplitude, condition, latency_s, width_s }
            | Component::ErpP300 { channels, amplitude, condition, latency_s, width_s } => {
                let chans = resolve(channels, false)?;
                let sign = if matches!(comp, Component::ErpFrn { .. }) { -1.0 } else { 1.0 };
                for ev in events(*condition) {
                    let lo = ev as i64 + to_samples(latency_s - 4.0 * width_s);
                    let hi = ev as i64 + to_samples(latency_s + 4.0 * width_s) + 1;
                    if let Some((a, b)) = clip(lo, hi) {
                        instances.push(Instance {
                            component: ci,
                            kind: kind.clone(),
                            weights: vec![1.0; chans.len()],
                            channels: chans.clone(),
                            amplitude: *amplitude,
                            event_sample: Some(ev),
                            start_sample: a,
                            end_sample: b,
                            shape: Shape::Gaussian { peak_s: *latency_s, width_s: *width_s, sign },
                        });
                    }
                }
            }
            Component::BandBurst { channels, amplitude, condition, freq_hz, onset_s, duration_s } => {
                let chans = resolve(channels, false)?;
                for ev in events(*condition) {
                    let lo = ev as i64 + to_samples(*onset_s);
                    let hi = lo + to_samples(*duration_s);
                    // bursts are kept whole so the taper stays symmetric
                    if lo >= 0 && hi <= n as i64 && hi > lo {
                        instances.push(Instance {
                            component: ci,
                            kind: kind.clone(),
                            weights: vec![1.0; chans.len()],
                            channels: chans.clone(),
                            amplitude: *amplitude,
                            event_sample: Some(ev),
                            start_sample: lo as usize,
                            end_sample: hi as usize,
                            shape: Shape::HannSine { freq_hz: *freq_hz },
                        });
                    }
                }
            }
            Component::Blink { amplitude, rate_hz } => {
                let len = (BLINK_DURATION_S * fs).round() as usize;
                let mut chans: Vec<String> = spec.eog.iter().filter(|e| spec.channels.contains(e)).cloned().collect();
                let mut weights = vec![1.0; chans.len()];
                for (name, w) in BLINK_WEIGHTS {
                    if spec.channels.iter().any(|c| c == name) {
                        chans.push(name.to_string());
                        weights.push(w);
                    }
                }
                let count = (duration * rate_hz).floor() as usize;
                if len == 0 || len > n || count == 0 {
                    continue;
                }
                let mut rng = stream_rng(spec.seed, ci as u64);
                let mut starts: Vec<usize> = (0..count).map(|_| rng.random_range(0..=n - len)).collect();
                starts.sort_unstable();
                for s in starts {
                    instances.push(Instance {
                        component: ci,
                        kind: kind.clone(),
                        channels: chans.clone(),
                        weights: weights.clone(),
                        amplitude: *amplitude,
                        event_sample: None,
                        start_sample: s,
                        end_sample: s + len,
                        shape: Shape::Blink,
                    });
                }
            }
            Component::LineNoise { channels, amplitude, freqs } => {
                let chans = resolve(channels, true)?;
                instances.push(Instance {
                    component: ci,
                    kind,
                    weights: vec![1.0; chans.len()],
                    channels: chans,
                    amplitude: *amplitude,
                    event_sample: None,
                    start_sample: 0,
                    end_sample: n,
                    shape: Shape::Sines { freqs: freqs.clone() },
                });
            }
            Component::PinkNoise { channels, amplitude } | Component::WhiteNoise { channels, amplitude } => {
                let chans = if channels.is_empty() { eeg_names.clone() } else { resolve(channels, false)? };
                instances.push(Instance {
                    component: ci,
                    kind,
                    weights: vec![1.0; chans.len()],
                    channels: chans,
                    amplitude: *amplitude,
                    event_sample: None,
                    start_sample: 0,
                    end_sample: n,
                    shape: Shape::Noise {
                        stream: ci as u64,
                        pink: matches!(comp, Component::PinkNoise { .. }),
                    },
                });
            }
        }
    }

    let manifest = Manifest {
        seed: spec.seed,
        fs,
        n_samples: n,
        channels: spec.channels.clone(),
        instances,
    };
    let mut data = manifest.render();
    for inst in manifest.instances.iter() {
        let Shape::Noise { stream, pink: is_pink } = inst.shape else { continue };
        if inst.amplitude == 0.0 {
            continue;
        }
        for name in &inst.channels {
            let row = spec.channels.iter().position(|c| c == name).expect("resolved channel");
            // one stream per (component, channel)
            let mut rng = stream_rng(spec.seed, (1 << 32) + (stream << 16) + row as u64);
            let noise: Vec<f64> = if is_pink {
                pink(&mut rng, n)
            } else {
                (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
            };
            for (d, v) in data.row_mut(row).iter_mut().zip(noise) {
                *d += inst.amplitude * v;
            }
        }
    }
    let (_, _, _, markers) = marked.into_parts();
    let recording = Recording::new(fs, channels, data.mapv(T::of), markers)?;
    Ok(Synthesized { recording, manifest })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{play_session, AgentKind};
    use crate::erp::{balance_and_average, difference_wave, epoch, epoch_times, Lock};
    use crate::signal::welch_psd;
    use crate::task::SessionConfig;

    fn log(seed: u64) -> SessionLog {
        play_session(SessionConfig::with_seed(seed), &AgentKind::HypothesisTesting, 0, 0.7)
            .unwrap()
            .session
            .log()
    }

    fn spec(components: Vec<Component>) -> SynthSpec {
        SynthSpec {
            components,
            ..SynthSpec::with_default_noise(1, 250.0)
        }
    }

    #[test]
    fn pink_noise_has_unit_log_slope() {
        let s = SynthSpec {
            channels: vec!["Cz".into()],
            eog: vec![],
            duration_s: Some(240.0),
            ..spec(vec![Component::PinkNoise { channels: vec![], amplitude: 1.0 }])
        };
        let out = generate::<f64>(&s, &SessionLog { records: vec![], ..log(1) }).unwrap();
        let x = out.recording.data().row(0).to_vec();
        let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
        assert!((rms - 1.0).abs() < 1e-9);
        let (f, p) = welch_psd(&x, 250.0, 1000).unwrap();
        let pts: Vec<(f64, f64)> = f
            .iter()
            .zip(&p)
            .filter(|(f, _)| **f >= 1.0 && **f <= 40.0)
            .map(|(f, p)| (f.ln(), p.ln()))
            .collect();
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!((slope + 1.0).abs() < 0.2, "slope {slope}");
    }

    #[test]
    fn frn_recovered_by_averaging() {
        let s = SynthSpec {
            seed: 5,
            ..spec(vec![
                Component::ErpFrn {
                    channels: vec!["Fz".into(), "FC1".into(), "FC2".into()],
                    amplitude: 6.0,
                    condition: Condition::Inc,
                    latency_s: 0.2,
                    width_s: 0.05,
                },
                Component::WhiteNoise { channels: vec![], amplitude: 0.5 },
            ])
        };
        let mut lg = log(3);
        // stretch the log with more sessions' worth of trials
        for seed in 4..12 {
            let extra = log(seed);
            let offset = lg.records.last().unwrap().event_times.feedback_on + 3.0;
            for mut r in extra.records {
                let e = &mut r.event_times;
                e.fixation_on += offset;
                e.keys_on += offset;
                e.stimulus_on += offset;
                e.feedback_on += offset;
                e.response = e.response.map(|t| t + offset);
                lg.records.push(r);
            }
        }
        let out = generate::<f64>(&s, &lg).unwrap();
        let set = epoch(&out.recording, Lock::Feedback, "p").unwrap();
        let (inc, cor) = balance_and_average(&set, (Condition::Inc, Condition::Cor), 0).unwrap();
        assert!(inc.n_trials >= 30);
        let d = difference_wave(&inc, &cor).unwrap();
        let fz = set.channels.iter().position(|c| c.name == "Fz").unwrap();
        let times = epoch_times(250.0);
        let (imin, vmin) = d.row(fz).iter().enumerate().fold((0, f64::MAX), |a, (i, &v)| if v < a.1 { (i, v) } else { a });
        assert!((times[imin] - 0.2).abs() <= 0.012, "peak at {}", times[imin]);
        assert!((vmin + 6.0).abs() < 0.6, "peak {vmin}");
        let pz = set.channels.iter().position(|c| c.name == "Pz").unwrap();
        assert!(d.row(pz).iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn zero_amplitude_is_silent() {
        let s = spec(vec![
            Component::PinkNoise { channels: vec![], amplitude: 0.0 },
            Component::WhiteNoise { channels: vec![], amplitude: 0.0 },
            Component::Blink { amplitude: 0.0, rate_hz: 0.3 },
            Component::LineNoise { channels: vec![], amplitude: 0.0, freqs: vec![60.0] },
            Component::ErpP300 {
                channels: vec!["Pz".into()],
                amplitude: 0.0,
                condition: Condition::Cor,
                latency_s: 0.35,
                width_s: 0.1,
            },
        ]);
        let out = generate::<f32>(&s, &log(2)).unwrap();
        assert!(out.recording.data().iter().all(|&v| v == 0.0));
        assert!(!out.recording.markers().is_empty());
    }

    #[test]
    fn manifest_reconstructs_noise_free_part() {
        let mut comps = vec![
            Component::Blink { amplitude: 80.0, rate_hz: 0.2 },
            Component::LineNoise { channels: vec![], amplitude: 3.0, freqs: vec![50.0, 100.0] },
            Component::BandBurst {
                channels: vec!["Oz".into()],
                amplitude: 4.0,
                condition: Condition::Conf,
                freq_hz: 10.0,
                onset_s: 0.1,
                duration_s: 0.3,
            },
            Component::ErpP300 {
                channels: vec!["Pz".into(), "Cz".into()],
                amplitude: 5.0,
                condition: Condition::Cor,
                latency_s: 0.35,
                width_s: 0.1,
            },
        ];
        let clean = generate::<f64>(&spec(comps.clone()), &log(4)).unwrap();
        assert_eq!(clean.manifest.render(), clean.recording.data().clone());
        comps.push(Component::PinkNoise { channels: vec![], amplitude: 10.0 });
        let noisy = generate::<f64>(&spec(comps), &log(4)).unwrap();
        let residual = noisy.recording.data() - &noisy.manifest.render();
        let fz = 4;
        assert!(residual.row(fz).iter().any(|&v| v != 0.0));
        // EOG channels receive no noise by default
        let tp9 = noisy.recording.channel_index("TP9").unwrap();
        assert!(residual.row(tp9).iter().all(|&v| v.abs() < 1e-9));
        let json = noisy.manifest.to_json();
        let back: Manifest = serde_json::from_str(&json).unwrap();
        assert_eq!(back, noisy.manifest);
    }

    #[test]
    fn deterministic_and_validated() {
        let s = SynthSpec::with_default_noise(9, 250.0);
        let a = generate::<f32>(&s, &log(1)).unwrap();
        let b = generate::<f32>(&s, &log(1)).unwrap();
        assert_eq!(a, b);
        let neg = spec(vec![Component::WhiteNoise { channels: vec![], amplitude: -1.0 }]);
        assert!(matches!(generate::<f64>(&neg, &log(1)), Err(SynthError::Spec(_))));
        let unknown = spec(vec![Component::ErpFrn {
            channels: vec!["XX".into()],
            amplitude: 1.0,
            condition: Condition::Inc,
            latency_s: 0.2,
            width_s: 0.05,
        }]);
        assert!(matches!(generate::<f64>(&unknown, &log(1)), Err(SynthError::UnknownChannel(_))));
        let short = SynthSpec { duration_s: Some(5.0), ..SynthSpec::with_default_noise(9, 250.0) };
        assert!(matches!(generate::<f64>(&short, &log(1)), Err(SynthError::Align(_))));
    }
}
