//! Analysis driver: re-reference, notch, band-pass, ICA, band split, epoch,
//! balance and average, difference wave, cluster test, topographies.
//!
//! Participants are preprocessed in parallel; everything after the
//! difference wave runs per band across participants. All outputs are
//! rendered in memory and written only when every stage succeeded.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use wcst_core::eeg_io::{align_behavior, read_brainvision_files, AlignOptions, ChannelInfo};
use wcst_core::erp::{
    balance_and_average, build_adjacency, cluster_permutation, clusters_csv, clusters_json, difference_wave, epoch,
    epoch_times, erp_csv, significance_mask, topo_json, topo_svg, topo_windows, ClusterSummary, TopoRecord,
    TOPO_END_S, TOPO_START_S, TOPO_WIDTH_S,
};
use wcst_core::signal::{bandpass, ica_clean, ica_fit, notch_spectrum_fit, rereference_common_average, Band, BandDef};
use wcst_core::task::import_log;
use wcst_core::Recording64;

use crate::config::{ParticipantInput, PipelineConfig};
use crate::par::par_map;
use crate::seeds::derive_seed;

pub const PROVENANCE_FILE: &str = "provenance.json";

/// A failed stage, naming the stage and the participant or band involved.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("stage `{stage}` failed ({context}): {message}")]
pub struct PipelineError {
    pub stage: &'static str,
    pub context: String,
    pub message: String,
}

fn fail<E: std::fmt::Display>(stage: &'static str, context: impl Into<String>) -> impl FnOnce(E) -> PipelineError {
    let context = context.into();
    move |e| PipelineError { stage, context, message: e.to_string() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IcaSummary {
    pub components: usize,
    pub iterations: usize,
    pub rejected: Vec<usize>,
    /// Largest |r| of any component with an EOG channel.
    pub max_eog_r: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandEpochs {
    pub band: Band,
    /// Epochs found per condition before balancing.
    pub counts: BTreeMap<String, usize>,
    pub skipped: usize,
    /// Epochs per condition after balancing.
    pub balanced: usize,
    pub balance_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticipantSummary {
    pub id: String,
    pub n_samples: usize,
    pub ica: Option<IcaSummary>,
    pub bands: Vec<BandEpochs>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandResult {
    pub band: Band,
    pub threshold: f64,
    pub clusters: Vec<ClusterSummary>,
    pub topo: Vec<TopoRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub id: String,
    pub files: Vec<FileDigest>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub ica: u64,
    pub balance: u64,
    pub cluster: u64,
}

/// Everything needed to rerun an analysis and check its outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub core_version: String,
    pub config_sha256: String,
    pub config: PipelineConfig,
    pub seeds: Seeds,
    pub inputs: Vec<InputDigest>,
    pub participants: Vec<ParticipantSummary>,
    pub outputs: Vec<FileDigest>,
}

#[derive(Clone, Debug)]
pub struct PipelineOutputs {
    pub output_dir: PathBuf,
    pub bands: Vec<BandResult>,
    pub provenance: Provenance,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hex SHA-256 of the config's canonical JSON form.
pub fn config_hash(cfg: &PipelineConfig) -> String {
    sha256_hex(serde_json::to_string(cfg).expect("config serializes").as_bytes())
}

struct Loaded {
    rec: Recording64,
    inputs: InputDigest,
}

fn digest(path: &Path) -> std::io::Result<FileDigest> {
    Ok(FileDigest { file: path.display().to_string(), sha256: sha256_hex(&std::fs::read(path)?) })
}

/// Paths named by `DataFile=` / `MarkerFile=` in a BrainVision header.
fn companion_files(vhdr: &Path) -> std::io::Result<Vec<PathBuf>> {
    let text = std::fs::read_to_string(vhdr)?;
    let dir = vhdr.parent().unwrap_or(Path::new("."));
    Ok(text
        .lines()
        .filter_map(|l| l.strip_prefix("DataFile=").or_else(|| l.strip_prefix("MarkerFile=")))
        .map(|f| dir.join(f.trim()))
        .collect())
}

fn load(p: &ParticipantInput, eog: &[&str]) -> Result<Loaded, PipelineError> {
    let ctx = format!("participant {}", p.id);
    let rec: Recording64 = read_brainvision_files(&p.vhdr, eog).map_err(fail("load", ctx.clone()))?;
    let mut paths = vec![p.vhdr.clone()];
    paths.extend(companion_files(&p.vhdr).map_err(fail("load", ctx.clone()))?);
    let rec = match &p.log {
        Some(log_path) => {
            paths.push(log_path.clone());
            let text = std::fs::read_to_string(log_path).map_err(fail("load", ctx.clone()))?;
            let log = import_log(&text).map_err(fail("load", ctx.clone()))?;
            align_behavior(&rec, &log, AlignOptions { offset_s: p.log_offset_s }).map_err(fail("align", ctx.clone()))?
        }
        None => rec,
    };
    let files = paths
        .iter()
        .map(|f| digest(f))
        .collect::<Result<_, _>>()
        .map_err(fail("load", ctx))?;
    Ok(Loaded { rec, inputs: InputDigest { id: p.id.clone(), files } })
}

/// File-dependent checks, run before any processing.
fn check_inputs(cfg: &PipelineConfig, loaded: &[Loaded]) -> Result<(), PipelineError> {
    let first = &loaded[0].rec;
    let fs = first.fs();
    let names = |r: &Recording64| r.channels().iter().map(|c| c.name.clone()).collect::<Vec<_>>();
    for (l, p) in loaded.iter().zip(&cfg.participants) {
        let ctx = format!("participant {}", p.id);
        if l.rec.fs() != fs {
            return Err(fail("config", ctx)(format!("sampling rate {} Hz differs from {} Hz", l.rec.fs(), fs)));
        }
        if names(&l.rec) != names(first) {
            return Err(fail("config", ctx)("channel labels differ from the first participant"));
        }
    }
    let nyquist = fs / 2.0;
    cfg.notch.validate(fs).map_err(fail("config", "pipeline.notch"))?;
    let mut edges = vec![("pipeline.bandpass".to_string(), cfg.bandpass.hi)];
    edges.extend(cfg.bands.iter().map(|b| (format!("pipeline.bands.{}", b.band.name()), b.hi)));
    for (field, hi) in edges {
        if hi >= nyquist {
            return Err(fail("config", field)(format!("upper edge {hi} Hz must be below Nyquist {nyquist} Hz")));
        }
    }
    Ok(())
}

struct BandWaves {
    a: Array2<f64>,
    b: Array2<f64>,
    delta: Array2<f64>,
}

struct Processed {
    summary: ParticipantSummary,
    channels: Vec<ChannelInfo>,
    waves: Vec<BandWaves>,
}

fn process(cfg: &PipelineConfig, index: usize, id: &str, rec: &Recording64) -> Result<Processed, PipelineError> {
    let ctx = format!("participant {id}");
    let rec = rereference_common_average(rec).map_err(fail("rereference", ctx.clone()))?;
    let rec = notch_spectrum_fit(&rec, &cfg.notch).map_err(fail("notch", ctx.clone()))?;
    let rec = bandpass(&rec, cfg.bandpass.lo, cfg.bandpass.hi).map_err(fail("bandpass", ctx.clone()))?;
    let (rec, ica) = if cfg.run_ica {
        let model = ica_fit(&rec, &cfg.ica).map_err(fail("ica", ctx.clone()))?;
        let max_eog_r = model.eog_correlations(&rec).into_iter().fold(0.0, f64::max);
        let (clean, rejected) = ica_clean(&rec, &model, cfg.ica.eog_threshold).map_err(fail("ica", ctx.clone()))?;
        let summary = IcaSummary { components: model.n_components(), iterations: model.iterations, rejected, max_eog_r };
        (clean, Some(summary))
    } else {
        (rec, None)
    };
    let pair = cfg.contrast_pair();
    let balance_seed = derive_seed(cfg.balance_seed, index as u64);
    let mut bands = Vec::with_capacity(cfg.bands.len());
    let mut waves = Vec::with_capacity(cfg.bands.len());
    let mut channels = Vec::new();
    for BandDef { band, lo, hi } in &cfg.bands {
        let bctx = format!("{ctx}, band {}", band.name());
        let filtered = bandpass(&rec, *lo, *hi).map_err(fail("band_split", bctx.clone()))?;
        let set = epoch(&filtered, cfg.lock, id).map_err(fail("epoch", bctx.clone()))?;
        let (a, b) = balance_and_average(&set, pair, balance_seed).map_err(fail("balance", bctx.clone()))?;
        let delta = difference_wave(&a, &b).map_err(fail("difference", bctx))?;
        bands.push(BandEpochs {
            band: *band,
            counts: [pair.0, pair.1].iter().map(|c| (c.name().to_string(), set.count(*c))).collect(),
            skipped: set.skipped,
            balanced: a.n_trials,
            balance_seed,
        });
        channels = set.channels;
        waves.push(BandWaves { a: a.data, b: b.data, delta });
    }
    Ok(Processed {
        summary: ParticipantSummary { id: id.to_string(), n_samples: rec.n_samples(), ica, bands },
        channels,
        waves,
    })
}

fn mean_of<'a>(arrays: impl Iterator<Item = &'a Array2<f64>>) -> Array2<f64> {
    let mut n = 0.0;
    let mut acc: Option<Array2<f64>> = None;
    for a in arrays {
        n += 1.0;
        match &mut acc {
            Some(s) => *s += a,
            None => acc = Some(a.clone()),
        }
    }
    acc.expect("at least one participant") / n
}

/// Runs the full chain and writes its outputs plus [`PROVENANCE_FILE`]
/// into `cfg.output_dir`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutputs, PipelineError> {
    cfg.validate().map_err(fail("config", "pipeline"))?;
    let eog: Vec<&str> = cfg.eog_channels.iter().map(String::as_str).collect();
    let loaded = cfg
        .participants
        .iter()
        .map(|p| load(p, &eog))
        .collect::<Result<Vec<_>, _>>()?;
    check_inputs(cfg, &loaded)?;
    let fs = loaded[0].rec.fs();

    let processed = par_map(&loaded, |i, l| process(cfg, i, &cfg.participants[i].id, &l.rec))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let channels = processed[0].channels.clone();
    let adjacency = build_adjacency(&channels, cfg.adjacency_threshold).map_err(fail("cluster", "adjacency"))?;
    let times = epoch_times(fs);
    let (ca, cb) = cfg.contrast_pair();
    let diff_label = format!("{}-{}", ca.name(), cb.name());

    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    let mut bands = Vec::with_capacity(cfg.bands.len());
    for (k, def) in cfg.bands.iter().enumerate() {
        let name = def.band.name();
        let deltas: Vec<Array2<f64>> = processed.iter().map(|p| p.waves[k].delta.clone()).collect();
        let outcome = cluster_permutation(&deltas, &adjacency, &cfg.cluster).map_err(fail("cluster", format!("band {name}")))?;
        let summaries: Vec<ClusterSummary> = outcome
            .clusters
            .iter()
            .enumerate()
            .map(|(id, c)| ClusterSummary::new(id, c, &channels, &times))
            .collect();
        let grand_a = mean_of(processed.iter().map(|p| &p.waves[k].a));
        let grand_b = mean_of(processed.iter().map(|p| &p.waves[k].b));
        let grand_delta = mean_of(deltas.iter());
        let mask = significance_mask(outcome.t_map.dim(), &outcome.clusters);
        let topo = |map: &Array2<f64>| {
            topo_windows(map, &times, Some(&mask), TOPO_START_S, TOPO_END_S, TOPO_WIDTH_S)
                .map_err(fail("topo", format!("band {name}")))
        };
        let t_windows = topo(&outcome.t_map)?;
        let d_windows = topo(&grand_delta)?;
        let mut records: Vec<TopoRecord> = t_windows.iter().map(|w| TopoRecord::new(name, "t", w, &channels)).collect();
        records.extend(d_windows.iter().map(|w| TopoRecord::new(name, "delta", w, &channels)));

        files.push((
            format!("erp_{name}.csv"),
            erp_csv(&times, &channels, &[(ca.name(), &grand_a), (cb.name(), &grand_b), (&diff_label, &grand_delta)])
                .into_bytes(),
        ));
        files.push((format!("clusters_{name}.csv"), clusters_csv(&summaries).into_bytes()));
        files.push((format!("clusters_{name}.json"), (clusters_json(&summaries) + "\n").into_bytes()));
        files.push((format!("topo_{name}.json"), (topo_json(&records) + "\n").into_bytes()));
        if cfg.topo_svg {
            for (i, w) in t_windows.iter().enumerate() {
                files.push((format!("topo_{name}_t_{i:02}.svg"), topo_svg(&format!("{name} t"), w, &channels).into_bytes()));
            }
        }
        bands.push(BandResult { band: def.band, threshold: outcome.threshold, clusters: summaries, topo: records });
    }

    let provenance = Provenance {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        core_version: wcst_core::VERSION.into(),
        config_sha256: config_hash(cfg),
        config: cfg.clone(),
        seeds: Seeds { ica: cfg.ica.seed, balance: cfg.balance_seed, cluster: cfg.cluster.seed },
        inputs: loaded.into_iter().map(|l| l.inputs).collect(),
        participants: processed.into_iter().map(|p| p.summary).collect(),
        outputs: files
            .iter()
            .map(|(f, bytes)| FileDigest { file: f.clone(), sha256: sha256_hex(bytes) })
            .collect(),
    };
    let dir = &cfg.output_dir;
    let write = |name: &str, bytes: &[u8]| std::fs::write(dir.join(name), bytes).map_err(fail("write", dir.join(name).display().to_string()));
    std::fs::create_dir_all(dir).map_err(fail("write", dir.display().to_string()))?;
    for (name, bytes) in &files {
        write(name, bytes)?;
    }
    let sidecar = serde_json::to_string_pretty(&provenance).expect("provenance serializes") + "\n";
    write(PROVENANCE_FILE, sidecar.as_bytes())?;
    Ok(PipelineOutputs { output_dir: dir.clone(), bands, provenance })
}

/// Reruns the analysis recorded in a provenance sidecar, optionally into
/// another directory.
pub fn rerun_from_provenance(path: &Path, output_dir: Option<&Path>) -> Result<PipelineOutputs, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(fail("config", path.display().to_string()))?;
    let mut prov: Provenance = serde_json::from_str(&text).map_err(fail("config", path.display().to_string()))?;
    if let Some(dir) = output_dir {
        prov.config.output_dir = dir.to_path_buf();
    }
    run_pipeline(&prov.config)
}
