use wcst_core::agents::{play_session, AgentKind};
use wcst_core::erp::{balance_and_average, epoch, epoch_times, Condition, Lock};
use wcst_core::signal::welch_psd;
use wcst_core::synth::{generate, Component, Manifest, SynthSpec};
use wcst_core::task::{SessionConfig, SessionLog};
use wcst_core::Synthesized64;

fn log(seed: u64) -> SessionLog {
    play_session(SessionConfig::with_seed(seed), &AgentKind::HypothesisTesting, 0, 0.6)
        .unwrap()
        .session
        .log()
}

fn p300(amplitude: f64) -> Component {
    Component::ErpP300 {
        channels: vec!["Pz".into(), "P3".into()],
        amplitude,
        condition: Condition::Conf,
        latency_s: 0.3,
        width_s: 0.05,
    }
}

#[test]
fn noiseless_recording_is_its_manifest() {
    let spec = SynthSpec {
        components: vec![p300(6.0), Component::Blink { amplitude: 80.0, rate_hz: 0.3 }, Component::LineNoise {
            channels: vec![],
            amplitude: 2.0,
            freqs: vec![60.0],
        }],
        ..SynthSpec::with_default_noise(3, 250.0)
    };
    let syn: Synthesized64 = generate(&spec, &log(1)).unwrap();
    let diff = (syn.recording.data() - &syn.manifest.render()).mapv(f64::abs).fold(0.0, |a: f64, &b| a.max(b));
    assert!(diff < 1e-12, "{diff}");
    let back: Manifest = serde_json::from_str(&syn.manifest.to_json()).unwrap();
    assert_eq!(back, syn.manifest);
    let oz = syn.recording.channel_index("Oz").unwrap();
    let tp9 = syn.recording.channel_index("TP9").unwrap();
    // Oz sees only line noise; the EOG channel carries blinks alone
    assert!(syn.recording.data().row(oz).iter().all(|v| v.abs() <= 2.0 + 1e-9));
    assert!(syn.recording.data().row(tp9).iter().any(|v| v.abs() > 50.0));
}

#[test]
fn injected_p300_is_recovered_by_averaging() {
    let spec = SynthSpec { components: vec![p300(8.0)], ..SynthSpec::with_default_noise(5, 250.0) };
    let syn: Synthesized64 = generate(&spec, &log(2)).unwrap();
    let set = epoch(&syn.recording, Lock::Stimulus, "p").unwrap();
    let (conf, search) = balance_and_average(&set, (Condition::Conf, Condition::Search), 0).unwrap();
    let pz = set.channels.iter().position(|c| c.name == "Pz").unwrap();
    let times = epoch_times(250.0);
    let row = conf.data.row(pz);
    let (peak_i, peak) = row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    assert!((times[peak_i] - 0.3).abs() < 0.04, "peak at {}", times[peak_i]);
    assert!((peak - 8.0).abs() < 4.0, "{peak}");
    assert!(search.data.row(pz).iter().all(|v| v.abs() < *peak));
}

#[test]
fn pink_noise_has_unit_slope_and_is_seeded() {
    let spec = SynthSpec { components: vec![Component::PinkNoise { channels: vec![], amplitude: 10.0 }], ..SynthSpec::with_default_noise(8, 250.0) };
    let a: Synthesized64 = generate(&spec, &log(0)).unwrap();
    let b: Synthesized64 = generate(&spec, &log(0)).unwrap();
    assert_eq!(a.recording, b.recording);
    let other: Synthesized64 = generate(&SynthSpec { seed: 9, ..spec.clone() }, &log(0)).unwrap();
    assert_ne!(a.recording.data(), other.recording.data());

    let x: Vec<f64> = a.recording.data().row(0).to_vec();
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
    assert!((rms - 10.0).abs() < 1e-9);
    let (f, p) = welch_psd(&x, 250.0, 1000).unwrap();
    let pts: Vec<(f64, f64)> = f.iter().zip(&p).filter(|(f, _)| (1.0..=40.0).contains(*f)).map(|(f, p)| (f.ln(), p.ln())).collect();
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((slope + 1.0).abs() < 0.2, "{slope}");
}

#[test]
fn spec_errors_are_reported() {
    let bad = SynthSpec { fs: 0.0, ..SynthSpec::with_default_noise(0, 250.0) };
    assert!(generate::<f64>(&bad, &log(0)).is_err());
    let unknown = SynthSpec { components: vec![Component::ErpFrn { channels: vec!["Nope".into()], amplitude: 1.0, condition: Condition::Inc, latency_s: 0.25, width_s: 0.05 }], ..SynthSpec::with_default_noise(0, 250.0) };
    assert!(generate::<f64>(&unknown, &log(0)).is_err());
}
