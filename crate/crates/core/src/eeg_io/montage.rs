//! 32-channel 10-20 montage on the unit sphere.
//!
//! Positions are idealized spherical coordinates: polar angle from the
//! vertex (Cz) and azimuth from the nose, positive toward the right ear.
//! x points right, y toward the nose, z up.

/// (label, polar angle deg, azimuth deg)
const MONTAGE_32: [(&str, f64, f64); 32] = [
    ("Fp1", 72.0, -18.0),
    ("Fp2", 72.0, 18.0),
    ("F7", 72.0, -54.0),
    ("F3", 50.0, -40.0),
    ("Fz", 36.0, 0.0),
    ("F4", 50.0, 40.0),
    ("F8", 72.0, 54.0),
    ("FC5", 58.0, -68.0),
    ("FC1", 22.0, -45.0),
    ("FC2", 22.0, 45.0),
    ("FC6", 58.0, 68.0),
    ("T7", 72.0, -90.0),
    ("C3", 36.0, -90.0),
    ("Cz", 0.0, 0.0),
    ("C4", 36.0, 90.0),
    ("T8", 72.0, 90.0),
    ("TP9", 100.0, -108.0),
    ("CP5", 58.0, -112.0),
    ("CP1", 22.0, -135.0),
    ("CP2", 22.0, 135.0),
    ("CP6", 58.0, 112.0),
    ("TP10", 100.0, 108.0),
    ("P7", 72.0, -126.0),
    ("P3", 50.0, -140.0),
    ("Pz", 36.0, 180.0),
    ("P4", 50.0, 140.0),
    ("P8", 72.0, 126.0),
    ("PO9", 100.0, -144.0),
    ("O1", 72.0, -162.0),
    ("Oz", 72.0, 180.0),
    ("O2", 72.0, 162.0),
    ("PO10", 100.0, 144.0),
];

/// Default EOG channel labels.
pub const DEFAULT_EOG: [&str; 2] = ["TP9", "TP10"];

fn to_xyz(polar_deg: f64, azimuth_deg: f64) -> [f64; 3] {
    let p = polar_deg.to_radians();
    let a = azimuth_deg.to_radians();
    [p.sin() * a.sin(), p.sin() * a.cos(), p.cos()]
}

/// Channel labels of the default 32-channel layout, in recording order.
pub fn standard_32_labels() -> Vec<&'static str> {
    MONTAGE_32.iter().map(|m| m.0).collect()
}

/// Unit-sphere position for a known label (case-insensitive).
pub fn position(label: &str) -> Option<[f64; 3]> {
    MONTAGE_32
        .iter()
        .find(|m| m.0.eq_ignore_ascii_case(label))
        .map(|m| to_xyz(m.1, m.2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positions_are_unit_vectors() {
        for l in standard_32_labels() {
            let p = position(l).unwrap();
            let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
        assert_eq!(position("cz"), Some([0.0, 0.0, 1.0]));
        assert!(position("Fp1").unwrap()[0] < 0.0);
        assert!(position("Fp1").unwrap()[1] > 0.0);
        assert!(position("XYZ").is_none());
    }

    #[test]
    fn labels_unique() {
        let mut l = standard_32_labels();
        l.sort();
        l.dedup();
        assert_eq!(l.len(), 32);
    }
}
