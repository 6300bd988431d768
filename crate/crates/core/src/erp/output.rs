//! Text artifacts: ERP waveform CSV, cluster CSV/JSON, topography JSON and
//! a static SVG topography.

use std::fmt::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{ClusterResult, Polarity, TopoWindow};
use crate::eeg_io::ChannelInfo;
use crate::num::Real;

/// Long-format CSV `time_s,channel,condition,uv`, one row per
/// (condition, channel, sample).
pub fn erp_csv<T: Real>(times: &[f64], channels: &[ChannelInfo], waves: &[(&str, &Array2<T>)]) -> String {
    let mut out = String::from("time_s,channel,condition,uv\n");
    for (cond, data) in waves {
        for (c, ch) in channels.iter().enumerate() {
            for (i, t) in times.iter().enumerate() {
                let _ = writeln!(out, "{},{},{},{}", fmt_time(*t), ch.name, cond, data[[c, i]].as_f64());
            }
        }
    }
    out
}

fn fmt_time(t: f64) -> String {
    format!("{t:.4}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub id: usize,
    pub polarity: Polarity,
    pub mass: f64,
    pub p_value: f64,
    pub significant: bool,
    pub t_start_s: f64,
    pub t_end_s: f64,
    pub channels: Vec<String>,
    pub n_members: usize,
    /// (channel index, sample index) pairs.
    pub members: Vec<(usize, usize)>,
}

impl ClusterSummary {
    pub fn new(id: usize, c: &ClusterResult, channels: &[ChannelInfo], times: &[f64]) -> Self {
        let (lo, hi) = c.sample_span();
        ClusterSummary {
            id,
            polarity: c.polarity,
            mass: c.mass,
            p_value: c.p_value,
            significant: c.significant,
            t_start_s: times[lo],
            t_end_s: times[hi],
            channels: c.channels().iter().map(|&i| channels[i].name.clone()).collect(),
            n_members: c.members.len(),
            members: c.members.clone(),
        }
    }
}

pub fn clusters_csv(summaries: &[ClusterSummary]) -> String {
    let mut out = String::from("id,polarity,mass,p_value,significant,t_start_s,t_end_s,n_members,channels\n");
    for s in summaries {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{},{},{},{},{}",
            s.id,
            match s.polarity {
                Polarity::Positive => "positive",
                Polarity::Negative => "negative",
            },
            s.mass,
            s.p_value,
            s.significant,
            fmt_time(s.t_start_s),
            fmt_time(s.t_end_s),
            s.n_members,
            s.channels.join(";")
        );
    }
    out
}

pub fn clusters_json(summaries: &[ClusterSummary]) -> String {
    serde_json::to_string_pretty(summaries).expect("cluster summaries serialize")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelValue {
    pub channel: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopoRecord {
    pub band: String,
    /// `t` for t-maps, `delta` for difference-wave amplitude.
    pub measure: String,
    pub window_start_s: f64,
    pub window_end_s: f64,
    pub values: Vec<ChannelValue>,
    pub significant: Vec<String>,
}

impl TopoRecord {
    pub fn new(band: &str, measure: &str, w: &TopoWindow, channels: &[ChannelInfo]) -> Self {
        let round = |x: f64| (x * 1e6).round() / 1e6;
        TopoRecord {
            band: band.to_string(),
            measure: measure.to_string(),
            window_start_s: round(w.start_s),
            window_end_s: round(w.end_s),
            values: channels
                .iter()
                .zip(&w.values)
                .map(|(c, &v)| ChannelValue { channel: c.name.clone(), value: v })
                .collect(),
            significant: channels
                .iter()
                .zip(&w.significant)
                .filter(|(_, &s)| s)
                .map(|(c, _)| c.name.clone())
                .collect(),
        }
    }
}

pub fn topo_json(records: &[TopoRecord]) -> String {
    serde_json::to_string_pretty(records).expect("topography records serialize")
}

const DISC_R: f64 = 100.0;
const CENTER: f64 = 130.0;
/// Polar angle mapped to the disc rim.
const RIM_DEG: f64 = 110.0;

fn color(v: f64, limit: f64) -> String {
    let x = (v / limit).clamp(-1.0, 1.0);
    let (r, g, b) = if x >= 0.0 {
        (255.0, 255.0 * (1.0 - x), 255.0 * (1.0 - x))
    } else {
        (255.0 * (1.0 + x), 255.0 * (1.0 + x), 255.0)
    };
    format!("#{:02x}{:02x}{:02x}", r.round() as u8, g.round() as u8, b.round() as u8)
}

/// Flat-disc projection (distance from center proportional to polar
/// angle), linear blue-white-red scale symmetric about zero. Significant
/// channels get a heavy outline.
pub fn topo_svg(title: &str, w: &TopoWindow, channels: &[ChannelInfo]) -> String {
    let limit = w.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let size = 2.0 * CENTER;
    let mut out = String::new();
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{}" viewBox="0 0 {size} {}">"#,
        size + 30.0,
        size + 30.0
    );
    let _ = write!(
        out,
        r##"<circle cx="{CENTER}" cy="{CENTER}" r="{DISC_R}" fill="none" stroke="#333333" stroke-width="1.5"/>"##
    );
    for ((ch, &v), &sig) in channels.iter().zip(&w.values).zip(&w.significant) {
        let Some([x, y, z]) = ch.position else { continue };
        let theta = z.clamp(-1.0, 1.0).acos().to_degrees();
        let phi = x.atan2(y);
        let r = DISC_R * theta / RIM_DEG;
        let (px, py) = (CENTER + r * phi.sin(), CENTER - r * phi.cos());
        let stroke = if sig { "stroke=\"#000000\" stroke-width=\"2.5\"" } else { "stroke=\"#777777\" stroke-width=\"0.5\"" };
        let _ = write!(
            out,
            r#"<circle cx="{px:.1}" cy="{py:.1}" r="9" fill="{}" {stroke}/><text x="{px:.1}" y="{:.1}" font-size="7" text-anchor="middle">{}</text>"#,
            color(v, limit),
            py + 2.5,
            ch.name
        );
    }
    let _ = write!(
        out,
        r#"<text x="{CENTER}" y="{:.1}" font-size="11" text-anchor="middle">{title} {:.2}-{:.2} s, |max| {:.3}</text></svg>"#,
        size + 15.0,
        w.start_s,
        w.end_s,
        limit
    );
    out
}
