//! BrainVision header/marker/binary triple, IEEE_FLOAT_32 multiplexed dialect.
//!
//! Marker positions in the marker file are 1-based data points; they are
//! converted to 0-based sample indices on read and back on write.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use thiserror::Error;

use super::{ChannelInfo, Marker, Recording};
use crate::num::Real;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{file}{}{}: {msg}",
    section.as_ref().map(|s| format!(" [{s}]")).unwrap_or_default(),
    line.map(|l| format!(" line {l}")).unwrap_or_default())]
pub struct ParseError {
    pub file: String,
    pub section: Option<String>,
    pub line: Option<usize>,
    pub msg: String,
}

/// In-memory contents of the three files.
#[derive(Clone, Debug, PartialEq)]
pub struct BrainVisionFiles {
    pub vhdr: String,
    pub vmrk: String,
    pub eeg: Vec<u8>,
}

struct Entry {
    value: String,
    line: usize,
}

/// INI sections keyed by name; entries keep their source line.
struct Ini {
    file: String,
    sections: HashMap<String, (usize, Vec<(String, Entry)>)>,
}

impl Ini {
    fn parse(file: &str, text: &str) -> Result<Self, ParseError> {
        let mut sections: HashMap<String, (usize, Vec<(String, Entry)>)> = HashMap::new();
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = i + 1;
            if line.is_empty() || line.starts_with(';') {
                continue;
            }
            if line.starts_with('[') {
                let name = line
                    .strip_prefix('[')
                    .and_then(|l| l.strip_suffix(']'))
                    .ok_or_else(|| ParseError {
                        file: file.into(),
                        section: None,
                        line: Some(lineno),
                        msg: format!("malformed section header {line:?}"),
                    })?;
                sections.entry(name.to_string()).or_insert((lineno, Vec::new()));
                current = Some(name.to_string());
                continue;
            }
            let Some(sec) = &current else {
                // identification line before the first section
                continue;
            };
            // free-text sections such as [Comment] carry no key=value pairs
            if let Some((k, v)) = line.split_once('=') {
                sections.get_mut(sec).expect("section exists").1.push((
                    k.trim().to_string(),
                    Entry {
                        value: v.trim().to_string(),
                        line: lineno,
                    },
                ));
            }
        }
        Ok(Ini {
            file: file.into(),
            sections,
        })
    }

    fn err(&self, section: &str, line: Option<usize>, msg: impl Into<String>) -> ParseError {
        ParseError {
            file: self.file.clone(),
            section: Some(section.into()),
            line,
            msg: msg.into(),
        }
    }

    fn section(&self, name: &str) -> Result<&[(String, Entry)], ParseError> {
        self.sections
            .get(name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| ParseError {
                file: self.file.clone(),
                section: Some(name.into()),
                line: None,
                msg: "missing section".into(),
            })
    }

    fn section_line(&self, name: &str) -> Option<usize> {
        self.sections.get(name).map(|(l, _)| *l)
    }

    fn get(&self, section: &str, key: &str) -> Result<&Entry, ParseError> {
        self.section(section)?
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, e)| e)
            .ok_or_else(|| {
                self.err(
                    section,
                    self.section_line(section),
                    format!("missing required key {key}"),
                )
            })
    }

    fn opt(&self, section: &str, key: &str) -> Option<&Entry> {
        self.sections
            .get(section)?
            .1
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, e)| e)
    }

    /// Entries `<prefix><n>` sorted by n, checking that n runs 1..=len.
    fn numbered(&self, section: &str, prefix: &str) -> Result<Vec<&Entry>, ParseError> {
        let mut out: Vec<(usize, &Entry)> = Vec::new();
        for (k, e) in self.section(section)? {
            if let Some(n) = k.strip_prefix(prefix) {
                let n: usize = n.parse().map_err(|_| {
                    self.err(section, Some(e.line), format!("bad entry name {k}"))
                })?;
                out.push((n, e));
            }
        }
        out.sort_by_key(|(n, _)| *n);
        for (i, (n, e)) in out.iter().enumerate() {
            if *n != i + 1 {
                return Err(self.err(
                    section,
                    Some(e.line),
                    format!("{prefix}{n} out of sequence (expected {prefix}{})", i + 1),
                ));
            }
        }
        Ok(out.into_iter().map(|(_, e)| e).collect())
    }
}

fn unescape(s: &str) -> String {
    s.replace("\\1", ",")
}

fn escape(s: &str) -> String {
    s.replace(',', "\\1")
}

struct Names<'a> {
    vhdr: &'a str,
    vmrk: &'a str,
    eeg: &'a str,
}

const DEFAULT_NAMES: Names<'static> = Names {
    vhdr: "header",
    vmrk: "markers",
    eeg: "data",
};

/// Parses the three documents. Channels listed in `eog_labels` get the EOG
/// role; positions come from the montage table.
pub fn read_brainvision<T: Real>(
    vhdr: &str,
    vmrk: &str,
    eeg: &[u8],
    eog_labels: &[&str],
) -> Result<Recording<T>, ParseError> {
    read_named(vhdr, vmrk, eeg, eog_labels, &DEFAULT_NAMES)
}

fn read_named<T: Real>(
    vhdr: &str,
    vmrk: &str,
    eeg: &[u8],
    eog_labels: &[&str],
    names: &Names<'_>,
) -> Result<Recording<T>, ParseError> {
    let h = Ini::parse(names.vhdr, vhdr)?;
    const COMMON: &str = "Common Infos";
    const BINARY: &str = "Binary Infos";
    const CHANNELS: &str = "Channel Infos";

    let fmt = h.get(COMMON, "DataFormat")?;
    if fmt.value != "BINARY" {
        return Err(h.err(
            COMMON,
            Some(fmt.line),
            format!("unsupported DataFormat {}; only BINARY", fmt.value),
        ));
    }
    let orient = h.get(COMMON, "DataOrientation")?;
    if orient.value != "MULTIPLEXED" {
        return Err(h.err(
            COMMON,
            Some(orient.line),
            format!(
                "unsupported DataOrientation {}; only MULTIPLEXED",
                orient.value
            ),
        ));
    }
    let nch_e = h.get(COMMON, "NumberOfChannels")?;
    let n_channels: usize = nch_e
        .value
        .parse()
        .ok()
        .filter(|&n: &usize| n > 0)
        .ok_or_else(|| h.err(COMMON, Some(nch_e.line), "NumberOfChannels must be a positive integer"))?;
    let si = h.get(COMMON, "SamplingInterval")?;
    let interval: f64 = si
        .value
        .parse()
        .ok()
        .filter(|&v: &f64| v > 0.0 && v.is_finite())
        .ok_or_else(|| h.err(COMMON, Some(si.line), "SamplingInterval must be a positive number"))?;
    let bf = h.get(BINARY, "BinaryFormat")?;
    if bf.value != "IEEE_FLOAT_32" {
        return Err(h.err(
            BINARY,
            Some(bf.line),
            format!(
                "unsupported BinaryFormat {}; only IEEE_FLOAT_32 is supported",
                bf.value
            ),
        ));
    }

    let ch_entries = h.numbered(CHANNELS, "Ch")?;
    if ch_entries.len() != n_channels {
        return Err(h.err(
            CHANNELS,
            h.section_line(CHANNELS),
            format!(
                "NumberOfChannels={} but {} Ch entries",
                n_channels,
                ch_entries.len()
            ),
        ));
    }
    let mut channels = Vec::with_capacity(n_channels);
    let mut resolutions = Vec::with_capacity(n_channels);
    for e in &ch_entries {
        let parts: Vec<&str> = e.value.split(',').collect();
        let name = unescape(parts[0].trim());
        if name.is_empty() {
            return Err(h.err(CHANNELS, Some(e.line), "empty channel name"));
        }
        let res = match parts.get(2).map(|s| s.trim()) {
            None | Some("") => 1.0,
            Some(s) => s
                .parse::<f64>()
                .map_err(|_| h.err(CHANNELS, Some(e.line), format!("bad resolution {s:?}")))?,
        };
        if channels.iter().any(|c: &ChannelInfo| c.name == name) {
            return Err(h.err(CHANNELS, Some(e.line), format!("duplicate channel {name}")));
        }
        channels.push(ChannelInfo::from_label(&name, eog_labels));
        resolutions.push(res);
    }

    let frame = n_channels * 4;
    let expected = match h.opt(COMMON, "DataPoints") {
        Some(dp) => {
            let points: usize = dp
                .value
                .parse()
                .map_err(|_| h.err(COMMON, Some(dp.line), "DataPoints must be an integer"))?;
            points * frame
        }
        None => eeg.len().div_ceil(frame) * frame,
    };
    if eeg.len() != expected {
        return Err(ParseError {
            file: names.eeg.into(),
            section: None,
            line: None,
            msg: format!(
                "expected {expected} bytes ({n_channels} channels x 4 bytes per sample), got {}",
                eeg.len()
            ),
        });
    }
    let n_samples = eeg.len() / frame;
    let mut data = Array2::<T>::zeros((n_channels, n_samples));
    for (s, chunk) in eeg.chunks_exact(frame).enumerate() {
        for (c, b) in chunk.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
            data[[c, s]] = if resolutions[c] == 1.0 {
                T::of(v as f64)
            } else {
                T::of(v as f64 * resolutions[c])
            };
        }
    }

    let m = Ini::parse(names.vmrk, vmrk)?;
    const MARKERS: &str = "Marker Infos";
    let mut markers = Vec::new();
    for e in m.numbered(MARKERS, "Mk")? {
        let parts: Vec<&str> = e.value.split(',').collect();
        if parts.len() < 3 {
            return Err(m.err(
                MARKERS,
                Some(e.line),
                "expected <type>,<description>,<position>,...",
            ));
        }
        let pos: usize = parts[2]
            .trim()
            .parse()
            .map_err(|_| m.err(MARKERS, Some(e.line), format!("bad position {:?}", parts[2])))?;
        if pos == 0 || pos > n_samples {
            return Err(m.err(
                MARKERS,
                Some(e.line),
                format!("position {pos} outside 1..={n_samples}"),
            ));
        }
        markers.push(Marker {
            sample: pos - 1,
            label: unescape(parts[1].trim()),
            kind: unescape(parts[0].trim()),
        });
    }

    Recording::new(rate_from_interval(interval), channels, data, markers).map_err(|e| ParseError {
        file: names.vhdr.into(),
        section: None,
        line: None,
        msg: e.to_string(),
    })
}

/// Sampling rate for an interval in µs. Rates within 1e-9 (relative) of an
/// integer snap to it, so integer rates survive the µs round trip exactly.
fn rate_from_interval(interval_us: f64) -> f64 {
    let fs = 1e6 / interval_us;
    if (fs - fs.round()).abs() <= 1e-9 * fs {
        fs.round()
    } else {
        fs
    }
}

/// Reads `<stem>.vhdr` and the data/marker files it names (relative to the
/// header's directory).
pub fn read_brainvision_files<T: Real>(
    vhdr_path: &Path,
    eog_labels: &[&str],
) -> Result<Recording<T>, ParseError> {
    let io_err = |p: &Path, e: std::io::Error| ParseError {
        file: p.display().to_string(),
        section: None,
        line: None,
        msg: e.to_string(),
    };
    let vhdr = fs::read_to_string(vhdr_path).map_err(|e| io_err(vhdr_path, e))?;
    let h = Ini::parse(&vhdr_path.display().to_string(), &vhdr)?;
    let dir = vhdr_path.parent().unwrap_or(Path::new("."));
    let data_path: PathBuf = dir.join(&h.get("Common Infos", "DataFile")?.value);
    let marker_path: PathBuf = dir.join(&h.get("Common Infos", "MarkerFile")?.value);
    let eeg = fs::read(&data_path).map_err(|e| io_err(&data_path, e))?;
    let vmrk = fs::read_to_string(&marker_path).map_err(|e| io_err(&marker_path, e))?;
    let (a, b, c) = (
        vhdr_path.display().to_string(),
        marker_path.display().to_string(),
        data_path.display().to_string(),
    );
    read_named(
        &vhdr,
        &vmrk,
        &eeg,
        eog_labels,
        &Names {
            vhdr: &a,
            vmrk: &b,
            eeg: &c,
        },
    )
}

/// Emits header, marker and binary documents; the header and marker file
/// reference `<base>.eeg` and `<base>.vmrk`.
pub fn write_brainvision<T: Real>(rec: &Recording<T>, base: &str) -> BrainVisionFiles {
    let mut vhdr = String::new();
    vhdr.push_str("Brain Vision Data Exchange Header File Version 1.0\n");
    vhdr.push_str("; Data written by wcst-core\n\n");
    vhdr.push_str("[Common Infos]\n");
    vhdr.push_str("Codepage=UTF-8\n");
    let _ = writeln!(vhdr, "DataFile={base}.eeg");
    let _ = writeln!(vhdr, "MarkerFile={base}.vmrk");
    vhdr.push_str("DataFormat=BINARY\n");
    vhdr.push_str("DataOrientation=MULTIPLEXED\n");
    let _ = writeln!(vhdr, "NumberOfChannels={}", rec.n_channels());
    let _ = writeln!(vhdr, "DataPoints={}", rec.n_samples());
    let _ = writeln!(vhdr, "SamplingInterval={}", 1e6 / rec.fs());
    vhdr.push_str("\n[Binary Infos]\nBinaryFormat=IEEE_FLOAT_32\n\n");
    vhdr.push_str("[Channel Infos]\n");
    vhdr.push_str("; Ch<n>=<name>,<reference>,<resolution>,<unit>\n");
    for (i, c) in rec.channels().iter().enumerate() {
        let _ = writeln!(vhdr, "Ch{}={},,1,µV", i + 1, escape(&c.name));
    }

    let mut vmrk = String::new();
    vmrk.push_str("Brain Vision Data Exchange Marker File, Version 1.0\n\n");
    vmrk.push_str("[Common Infos]\nCodepage=UTF-8\n");
    let _ = writeln!(vmrk, "DataFile={base}.eeg");
    vmrk.push_str("\n[Marker Infos]\n");
    vmrk.push_str("; Mk<n>=<type>,<description>,<position>,<size>,<channel>\n");
    for (i, m) in rec.markers().iter().enumerate() {
        let _ = writeln!(
            vmrk,
            "Mk{}={},{},{},1,0",
            i + 1,
            escape(&m.kind),
            escape(&m.label),
            m.sample + 1
        );
    }

    let data = rec.data();
    let mut eeg = Vec::with_capacity(rec.n_channels() * rec.n_samples() * 4);
    for s in 0..rec.n_samples() {
        for c in 0..rec.n_channels() {
            eeg.extend_from_slice(&(data[[c, s]].as_f64() as f32).to_le_bytes());
        }
    }
    BrainVisionFiles { vhdr, vmrk, eeg }
}

/// Writes `<dir>/<base>.{vhdr,vmrk,eeg}` and returns the header path.
pub fn write_brainvision_files<T: Real>(
    rec: &Recording<T>,
    dir: &Path,
    base: &str,
) -> std::io::Result<PathBuf> {
    let files = write_brainvision(rec, base);
    fs::create_dir_all(dir)?;
    let vhdr = dir.join(format!("{base}.vhdr"));
    fs::write(&vhdr, files.vhdr)?;
    fs::write(dir.join(format!("{base}.vmrk")), files.vmrk)?;
    fs::write(dir.join(format!("{base}.eeg")), files.eeg)?;
    Ok(vhdr)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HDR: &str = "Brain Vision Data Exchange Header File Version 1.0\r
\r
[Common Infos]\r
DataFile=tiny.eeg\r
MarkerFile=tiny.vmrk\r
DataFormat=BINARY\r
DataOrientation=MULTIPLEXED\r
NumberOfChannels=2\r
SamplingInterval=1000\r
\r
[Binary Infos]\r
BinaryFormat=IEEE_FLOAT_32\r
\r
[Channel Infos]\r
Ch1=Cz,,1,µV\r
Ch2=TP9,,,µV\r
";

    const MRK: &str = "Brain Vision Data Exchange Marker File, Version 1.0

[Marker Infos]
Mk1=New Segment,,1,1,0
Mk2=Stimulus,STIM,3,1,0
";

    fn payload() -> Vec<u8> {
        let mut out = Vec::new();
        for s in 0..4 {
            for _c in 0..2 {
                out.extend_from_slice(&(s as f32).to_le_bytes());
            }
        }
        out
    }

    #[test]
    fn hand_written_fixture() {
        let rec: Recording<f64> = read_brainvision(HDR, MRK, &payload(), &["TP9"]).unwrap();
        assert_eq!(rec.fs(), 1000.0);
        assert_eq!(rec.data().row(0).to_vec(), vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(rec.data().row(1).to_vec(), vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(rec.eog_indices(), vec![1]);
        assert_eq!(rec.markers().len(), 2);
        assert_eq!(rec.markers()[1].sample, 2);
        assert_eq!(rec.markers()[1].label, "STIM");
    }

    #[test]
    fn truncated_payload_reports_byte_counts() {
        let mut p = payload();
        p.truncate(p.len() - 4);
        let e = read_brainvision::<f64>(HDR, MRK, &p, &[]).unwrap_err();
        assert_eq!(e.file, "data");
        assert!(e.msg.contains("expected 32 bytes"), "{e}");
        assert!(e.msg.contains("got 28"), "{e}");
    }

    #[test]
    fn missing_key_names_section_and_line() {
        let hdr = HDR.replace("SamplingInterval=1000\r\n", "");
        let e = read_brainvision::<f64>(&hdr, MRK, &payload(), &[]).unwrap_err();
        assert_eq!(e.section.as_deref(), Some("Common Infos"));
        assert_eq!(e.line, Some(3));
        assert!(e.msg.contains("SamplingInterval"));
        assert!(e.to_string().starts_with("header [Common Infos] line 3"));
    }

    #[test]
    fn int16_dialect_rejected() {
        let hdr = HDR.replace("IEEE_FLOAT_32", "INT_16");
        let e = read_brainvision::<f64>(&hdr, MRK, &payload(), &[]).unwrap_err();
        assert!(e.msg.contains("INT_16"));
        assert_eq!(e.line, Some(12));
    }

    #[test]
    fn channel_count_mismatch() {
        let hdr = HDR.replace("NumberOfChannels=2", "NumberOfChannels=3");
        let e = read_brainvision::<f64>(&hdr, MRK, &payload(), &[]).unwrap_err();
        assert!(e.msg.contains("3 but 2"));
    }

    #[test]
    fn marker_out_of_range() {
        let mrk = MRK.replace("STIM,3", "STIM,9");
        let e = read_brainvision::<f64>(HDR, &mrk, &payload(), &[]).unwrap_err();
        assert_eq!(e.file, "markers");
        assert_eq!(e.line, Some(5));
    }

    #[test]
    fn resolution_is_applied() {
        let hdr = HDR.replace("Ch1=Cz,,1,", "Ch1=Cz,,0.5,");
        let rec: Recording<f32> = read_brainvision(&hdr, MRK, &payload(), &[]).unwrap();
        assert_eq!(rec.data().row(0).to_vec(), vec![0.0, 0.5, 1.0, 1.5]);
    }

    #[test]
    fn writer_sizes_and_empty_markers() {
        let ch = super::super::standard_channels();
        let data = Array2::<f64>::zeros((32, 1000));
        let rec = Recording::new(1000.0, ch, data, vec![]).unwrap();
        let f = write_brainvision(&rec, "x");
        assert_eq!(f.eeg.len(), 32 * 1000 * 4);
        assert!(!f.vmrk.contains("Mk1="));
        let back: Recording<f64> = read_brainvision(&f.vhdr, &f.vmrk, &f.eeg, &["TP9", "TP10"]).unwrap();
        assert_eq!(back.channels(), rec.channels());
    }

    #[test]
    fn escaped_commas_survive() {
        let ch = vec![ChannelInfo::from_label("A,B", &[])];
        let rec = Recording::new(
            500.0,
            ch,
            Array2::<f32>::zeros((1, 3)),
            vec![Marker::stimulus(1, "x,y")],
        )
        .unwrap();
        let f = write_brainvision(&rec, "e");
        let back: Recording<f32> = read_brainvision(&f.vhdr, &f.vmrk, &f.eeg, &[]).unwrap();
        assert_eq!(back, rec);
    }
}
