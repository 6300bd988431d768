//! Per-channel means over consecutive 50 ms windows.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{ClusterResult, ErpError};

pub const TOPO_START_S: f64 = 0.05;
pub const TOPO_END_S: f64 = 0.50;
pub const TOPO_WIDTH_S: f64 = 0.05;

/// Slack for sample times that land on a window edge up to rounding.
const EDGE_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopoWindow {
    pub start_s: f64,
    pub end_s: f64,
    /// Channel means of the input over samples with start ≤ t < end.
    pub values: Vec<f64>,
    /// Channel touches a significant cluster inside the window.
    pub significant: Vec<bool>,
}

/// Channel x sample mask of members of significant clusters.
pub fn significance_mask(shape: (usize, usize), clusters: &[ClusterResult]) -> Array2<bool> {
    let mut mask = Array2::from_elem(shape, false);
    for c in clusters.iter().filter(|c| c.significant) {
        for &(ch, s) in &c.members {
            mask[[ch, s]] = true;
        }
    }
    mask
}

/// Window means of `map` (channels x samples) whose sample `i` lies at
/// `times[i]` seconds. Windows tile [start, end) with the given width.
pub fn topo_windows(
    map: &Array2<f64>,
    times: &[f64],
    mask: Option<&Array2<bool>>,
    start: f64,
    end: f64,
    width: f64,
) -> Result<Vec<TopoWindow>, ErpError> {
    if map.ncols() != times.len() || mask.is_some_and(|m| m.dim() != map.dim()) {
        return Err(ErpError::Input("map, times and mask shapes differ".into()));
    }
    if !(width > 0.0 && end > start) {
        return Err(ErpError::Input(format!("bad window spec {start}-{end} s by {width} s")));
    }
    let step = times.get(1).map_or(0.0, |t| t - times[0]);
    let (first, last) = (times.first().copied().unwrap_or(0.0), times.last().copied().unwrap_or(0.0));
    if times.is_empty() || start < first - EDGE_EPS || end > last + step + EDGE_EPS {
        return Err(ErpError::WindowRange { start_s: start, end_s: end, first_s: first, last_s: last });
    }
    let count = ((end - start) / width).round() as usize;
    (0..count)
        .map(|k| {
            let lo = start + k as f64 * width;
            let hi = lo + width;
            let idx: Vec<usize> = (0..times.len())
                .filter(|&i| times[i] >= lo - EDGE_EPS && times[i] < hi - EDGE_EPS)
                .collect();
            if idx.is_empty() {
                return Err(ErpError::WindowRange { start_s: lo, end_s: hi, first_s: first, last_s: last });
            }
            let values = map
                .rows()
                .into_iter()
                .map(|row| idx.iter().map(|&i| row[i]).sum::<f64>() / idx.len() as f64)
                .collect();
            let significant = (0..map.nrows())
                .map(|c| mask.is_some_and(|m| idx.iter().any(|&i| m[[c, i]])))
                .collect();
            Ok(TopoWindow { start_s: lo, end_s: hi, values, significant })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::erp::{epoch_times, Polarity};

    #[test]
    fn nine_windows_of_constant_input() {
        let times = epoch_times(250.0);
        let map = Array2::from_elem((3, times.len()), 2.5);
        let w = topo_windows(&map, &times, None, TOPO_START_S, TOPO_END_S, TOPO_WIDTH_S).unwrap();
        assert_eq!(w.len(), 9);
        assert!(w.iter().all(|x| x.values == vec![2.5; 3]));
        assert!((w[8].end_s - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ramp_means_increase() {
        let times = epoch_times(1000.0);
        let map = Array2::from_shape_fn((2, times.len()), |(_, i)| times[i]);
        let w = topo_windows(&map, &times, None, TOPO_START_S, TOPO_END_S, TOPO_WIDTH_S).unwrap();
        for p in w.windows(2) {
            assert!(p[1].values[0] > p[0].values[0]);
        }
        // window [0.05, 0.10) at 1 kHz averages 0.050..0.099
        assert!((w[0].values[0] - 0.0745).abs() < 1e-12);
    }

    #[test]
    fn mask_is_carried() {
        let times = epoch_times(100.0);
        let map = Array2::zeros((2, times.len()));
        let cl = ClusterResult {
            polarity: Polarity::Positive,
            members: vec![(1, 10 + 22)],
            mass: 3.0,
            p_value: 0.01,
            significant: true,
        };
        let mask = significance_mask(map.dim(), &[cl]);
        let w = topo_windows(&map, &times, Some(&mask), TOPO_START_S, TOPO_END_S, TOPO_WIDTH_S).unwrap();
        // sample 32 is at 0.22 s, inside window 3 [0.20, 0.25)
        for (k, win) in w.iter().enumerate() {
            assert_eq!(win.significant, vec![false, k == 3]);
        }
    }

    #[test]
    fn uncovered_range_is_error() {
        let times: Vec<f64> = (0..20).map(|i| i as f64 / 100.0).collect();
        let map = Array2::zeros((1, 20));
        assert!(matches!(
            topo_windows(&map, &times, None, TOPO_START_S, TOPO_END_S, TOPO_WIDTH_S),
            Err(ErpError::WindowRange { .. })
        ));
    }
}
