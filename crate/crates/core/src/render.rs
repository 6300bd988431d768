//! SVG rendering of the trial display: a row of four key cards above a
//! centered stimulus card.
//!
//! The asset table is fixed so renders are reproducible byte for byte.

use std::fmt::Write;

use crate::task::Card;

pub const FILL_COLORS: [&str; 4] = ["#E69F00", "#56B4E9", "#009E73", "#CC79A7"];
pub const SHAPES: [&str; 4] = ["triangle", "star", "cross", "circle"];
pub const BORDER_COLORS: [&str; 4] = ["#000000", "#D55E00", "#0072B2", "#999999"];

const CARD_W: f64 = 100.0;
const CARD_H: f64 = 140.0;
const GAP: f64 = 20.0;

fn shape_svg(out: &mut String, shape: u8, cx: f64, cy: f64, r: f64, fill: &str) {
    match shape {
        0 => {
            let _ = write!(
                out,
                r#"<polygon points="{:.1},{:.1} {:.1},{:.1} {:.1},{:.1}" fill="{fill}"/>"#,
                cx,
                cy - r,
                cx - r,
                cy + r,
                cx + r,
                cy + r
            );
        }
        1 => {
            let mut pts = String::new();
            for i in 0..10 {
                let rad = if i % 2 == 0 { r } else { r * 0.45 };
                let a = std::f64::consts::PI * (i as f64) / 5.0 - std::f64::consts::FRAC_PI_2;
                let _ = write!(pts, "{:.1},{:.1} ", cx + rad * a.cos(), cy + rad * a.sin());
            }
            let _ = write!(out, r#"<polygon points="{}" fill="{fill}"/>"#, pts.trim_end());
        }
        2 => {
            let t = r * 0.35;
            let _ = write!(
                out,
                r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{fill}"/><rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{fill}"/>"#,
                cx - r,
                cy - t,
                2.0 * r,
                2.0 * t,
                cx - t,
                cy - r,
                2.0 * t,
                2.0 * r
            );
        }
        _ => {
            let _ = write!(
                out,
                r#"<circle cx="{cx:.1}" cy="{cy:.1}" r="{r:.1}" fill="{fill}"/>"#
            );
        }
    }
}

/// One card as an SVG group with its top-left corner at `(x, y)`.
pub fn render_card(card: &Card, x: f64, y: f64) -> String {
    let mut out = String::new();
    let _ = write!(
        out,
        r##"<g class="card" data-card="{}{}{}{}"><rect x="{x:.1}" y="{y:.1}" width="{CARD_W}" height="{CARD_H}" rx="8" fill="#ffffff" stroke="{}" stroke-width="6"/>"##,
        card.color_idx(),
        card.shape_idx(),
        card.number_idx(),
        card.border_idx(),
        BORDER_COLORS[card.border_idx() as usize],
    );
    let count = card.number_idx() as usize + 1;
    let r = 12.0;
    let spacing = CARD_H / (count as f64 + 1.0);
    for i in 0..count {
        let cy = y + spacing * (i as f64 + 1.0);
        shape_svg(
            &mut out,
            card.shape_idx(),
            x + CARD_W / 2.0,
            cy,
            r,
            FILL_COLORS[card.color_idx() as usize],
        );
    }
    out.push_str("</g>");
    out
}

/// Full trial display.
pub fn render_trial(key_cards: &[Card; 4], stimulus: &Card) -> String {
    let width = 4.0 * CARD_W + 5.0 * GAP;
    let height = 2.0 * CARD_H + 3.0 * GAP;
    let mut out = String::new();
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    for (k, card) in key_cards.iter().enumerate() {
        let x = GAP + k as f64 * (CARD_W + GAP);
        out.push_str(&render_card(card, x, GAP));
        let _ = write!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="14" text-anchor="middle">{}</text>"#,
            x + CARD_W / 2.0,
            GAP + CARD_H + 15.0,
            k + 1
        );
    }
    out.push_str(&render_card(
        stimulus,
        (width - CARD_W) / 2.0,
        2.0 * GAP + CARD_H,
    ));
    out.push_str("</svg>");
    out
}
