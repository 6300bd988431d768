//! Group-level spatio-temporal cluster permutation test on participant
//! difference waves, with sign-flip resampling.

use std::collections::{HashMap, VecDeque};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::ErpError;
use crate::eeg_io::ChannelInfo;
use crate::num::Real;

/// |t| reported where all participants agree exactly (zero variance).
const T_CAP: f64 = 1e9;

/// Undirected channel neighborhood graph.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjacency {
    neighbors: Vec<Vec<usize>>,
}

impl Adjacency {
    /// Builds from an edge list; self-loops are dropped and edges symmetrized.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a != b && a < n && b < n {
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Adjacency { neighbors }
    }

    pub fn n_channels(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, ch: usize) -> &[usize] {
        &self.neighbors[ch]
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }
}

/// Edge iff the normalized distance between two channels is below
/// `threshold`. The normalized distance is the chord between unit-sphere
/// positions divided by the sphere diameter, so it lies in [0, 1].
pub fn build_adjacency(channels: &[ChannelInfo], threshold: f64) -> Result<Adjacency, ErpError> {
    let pos: Vec<[f64; 3]> = channels
        .iter()
        .map(|c| c.position.ok_or_else(|| ErpError::MissingPosition(c.name.clone())))
        .collect::<Result<_, _>>()?;
    let mut edges = Vec::new();
    for i in 0..pos.len() {
        for j in i + 1..pos.len() {
            let d = (0..3).map(|k| (pos[i][k] - pos[j][k]).powi(2)).sum::<f64>().sqrt() / 2.0;
            if d < threshold {
                edges.push((i, j));
            }
        }
    }
    Ok(Adjacency::from_edges(pos.len(), &edges))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

/// Connected supra-threshold set before significance assessment.
#[derive(Clone, Debug, PartialEq)]
pub struct RawCluster {
    pub polarity: Polarity,
    /// (channel, sample), sorted.
    pub members: Vec<(usize, usize)>,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub polarity: Polarity,
    pub members: Vec<(usize, usize)>,
    pub mass: f64,
    pub p_value: f64,
    pub significant: bool,
}

impl ClusterResult {
    pub fn channels(&self) -> Vec<usize> {
        let mut ch: Vec<usize> = self.members.iter().map(|m| m.0).collect();
        ch.sort_unstable();
        ch.dedup();
        ch
    }

    /// First and last member sample (inclusive).
    pub fn sample_span(&self) -> (usize, usize) {
        let lo = self.members.iter().map(|m| m.1).min().unwrap_or(0);
        let hi = self.members.iter().map(|m| m.1).max().unwrap_or(0);
        (lo, hi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(default, deny_unknown_fields)]
pub struct ClusterOptions {
    pub n_permutations: usize,
    pub cluster_alpha: f64,
    pub report_alpha: f64,
    pub seed: u64,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        ClusterOptions {
            n_permutations: 1000,
            cluster_alpha: 0.05,
            report_alpha: 0.1,
            seed: 0,
        }
    }
}

impl ClusterOptions {
    pub fn validate(&self) -> Result<(), ErpError> {
        if self.n_permutations == 0 {
            return Err(ErpError::Input("n_permutations must be positive".into()));
        }
        for (name, v) in [("cluster_alpha", self.cluster_alpha), ("report_alpha", self.report_alpha)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(ErpError::Input(format!("{name} {v} outside (0, 1)")));
            }
        }
        Ok(())
    }

    /// Two-tailed critical |t| for `n` participants.
    pub fn threshold(&self, n: usize) -> f64 {
        StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .expect("df >= 1")
            .inverse_cdf(1.0 - self.cluster_alpha / 2.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterOutcome {
    pub t_map: Array2<f64>,
    pub threshold: f64,
    /// Sorted by decreasing |mass|.
    pub clusters: Vec<ClusterResult>,
    /// Largest |mass| per resample.
    pub null: Vec<f64>,
}

/// Sufficient statistics for sign-flipped one-sample t maps: the sum of
/// squares is invariant under sign flips, only the sums change.
struct Stack {
    n: usize,
    shape: (usize, usize),
    values: Vec<Array2<f64>>,
    sumsq: Array2<f64>,
}

impl Stack {
    fn new<T: Real>(deltas: &[Array2<T>]) -> Result<Self, ErpError> {
        if deltas.len() < 2 {
            return Err(ErpError::TooFewParticipants(deltas.len()));
        }
        let shape = deltas[0].dim();
        if let Some(d) = deltas.iter().find(|d| d.dim() != shape) {
            return Err(ErpError::ShapeMismatch(shape, d.dim()));
        }
        let values: Vec<Array2<f64>> = deltas.iter().map(|d| d.mapv(|v| v.as_f64())).collect();
        let mut sumsq = Array2::<f64>::zeros(shape);
        for v in &values {
            sumsq += &v.mapv(|x| x * x);
        }
        Ok(Stack { n: deltas.len(), shape, values, sumsq })
    }

    fn with_adjacency<T: Real>(deltas: &[Array2<T>], adj: &Adjacency) -> Result<Self, ErpError> {
        if adj.n_channels() == 0 {
            return Err(ErpError::EmptyAdjacency);
        }
        let stack = Stack::new(deltas)?;
        if stack.shape.0 != adj.n_channels() {
            return Err(ErpError::Input(format!(
                "{} channels in data but {} in adjacency",
                stack.shape.0,
                adj.n_channels()
            )));
        }
        Ok(stack)
    }

    /// t map with participant `i` negated when bit `i` of `mask` is set.
    fn t_map(&self, mask: u64) -> Array2<f64> {
        let mut sum = Array2::<f64>::zeros(self.shape);
        for (i, v) in self.values.iter().enumerate() {
            if mask >> i & 1 == 1 {
                sum -= v;
            } else {
                sum += v;
            }
        }
        let n = self.n as f64;
        let mut t = sum;
        t.zip_mut_with(&self.sumsq, |s, &ss| {
            let mean = *s / n;
            let var = ((ss - n * mean * mean) / (n - 1.0)).max(0.0);
            *s = if var > 0.0 {
                (mean / (var / n).sqrt()).clamp(-T_CAP, T_CAP)
            } else if mean == 0.0 {
                0.0
            } else {
                mean.signum() * T_CAP
            };
        });
        t
    }
}

/// One-sample t statistic against zero at every (channel, sample).
pub fn t_map<T: Real>(deltas: &[Array2<T>]) -> Result<Array2<f64>, ErpError> {
    Ok(Stack::new(deltas)?.t_map(0))
}

/// Connected components of supra-threshold points, separately per sign.
/// Neighbors are adjacent channels at the same sample and the same channel
/// at adjacent samples.
pub fn find_clusters(t: &Array2<f64>, threshold: f64, adj: &Adjacency) -> Vec<RawCluster> {
    let (n_ch, n_s) = t.dim();
    let mut seen = Array2::<bool>::from_elem((n_ch, n_s), false);
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for ch in 0..n_ch {
        for s in 0..n_s {
            if seen[[ch, s]] || t[[ch, s]].abs() <= threshold {
                continue;
            }
            let positive = t[[ch, s]] > 0.0;
            let inside = |c: usize, k: usize| {
                let v = t[[c, k]];
                v.abs() > threshold && (v > 0.0) == positive
            };
            let mut members = Vec::new();
            let mut mass = 0.0;
            seen[[ch, s]] = true;
            queue.push_back((ch, s));
            while let Some((c, k)) = queue.pop_front() {
                members.push((c, k));
                mass += t[[c, k]];
                let temporal = [k.checked_sub(1), (k + 1 < n_s).then_some(k + 1)];
                let next = temporal
                    .into_iter()
                    .flatten()
                    .map(|kk| (c, kk))
                    .chain(adj.neighbors(c).iter().map(|&cc| (cc, k)));
                for (cc, kk) in next {
                    if !seen[[cc, kk]] && inside(cc, kk) {
                        seen[[cc, kk]] = true;
                        queue.push_back((cc, kk));
                    }
                }
            }
            members.sort_unstable();
            out.push(RawCluster {
                polarity: if positive { Polarity::Positive } else { Polarity::Negative },
                members,
                mass,
            });
        }
    }
    out
}

fn max_abs_mass(t: &Array2<f64>, threshold: f64, adj: &Adjacency) -> f64 {
    find_clusters(t, threshold, adj)
        .iter()
        .map(|c| c.mass.abs())
        .fold(0.0, f64::max)
}

fn assemble(
    observed: Vec<RawCluster>,
    null: &[f64],
    p_of: impl Fn(usize) -> f64,
    report_alpha: f64,
) -> Vec<ClusterResult> {
    let mut clusters: Vec<ClusterResult> = observed
        .into_iter()
        .map(|c| {
            let exceed = null.iter().filter(|&&m| m >= c.mass.abs()).count();
            let p_value = p_of(exceed);
            ClusterResult {
                polarity: c.polarity,
                members: c.members,
                mass: c.mass,
                p_value,
                significant: p_value < report_alpha,
            }
        })
        .collect();
    clusters.sort_by(|a, b| b.mass.abs().total_cmp(&a.mass.abs()).then(a.members.cmp(&b.members)));
    clusters
}

/// Monte-Carlo sign-flip test. Resample `i` draws its flip pattern from
/// its own ChaCha stream, so results do not depend on evaluation order.
/// p = (1 + #{null ≥ |mass|}) / (n_permutations + 1).
pub fn cluster_permutation<T: Real>(
    deltas: &[Array2<T>],
    adj: &Adjacency,
    opts: &ClusterOptions,
) -> Result<ClusterOutcome, ErpError> {
    opts.validate()?;
    let stack = Stack::with_adjacency(deltas, adj)?;
    if stack.n > 63 {
        return Err(ErpError::Input(format!("at most 63 participants supported, found {}", stack.n)));
    }
    let threshold = opts.threshold(stack.n);
    let full = (1u64 << stack.n) - 1;
    // a pattern and its complement give the same t map up to sign
    let mut cache: HashMap<u64, f64> = HashMap::new();
    let null: Vec<f64> = (0..opts.n_permutations)
        .map(|i| {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(i as u64);
            let mask = rng.random::<u64>() & full;
            let key = if mask & 1 == 1 { mask ^ full } else { mask };
            *cache
                .entry(key)
                .or_insert_with(|| max_abs_mass(&stack.t_map(key), threshold, adj))
        })
        .collect();
    let t = stack.t_map(0);
    let observed = find_clusters(&t, threshold, adj);
    let denom = (opts.n_permutations + 1) as f64;
    let clusters = assemble(observed, &null, |k| (1 + k) as f64 / denom, opts.report_alpha);
    Ok(ClusterOutcome { t_map: t, threshold, clusters, null })
}

/// Exhaustive variant over all 2^n sign patterns (identity included):
/// p = #{null ≥ |mass|} / 2^n. Limited to n ≤ 20.
pub fn cluster_permutation_exact<T: Real>(
    deltas: &[Array2<T>],
    adj: &Adjacency,
    opts: &ClusterOptions,
) -> Result<ClusterOutcome, ErpError> {
    opts.validate()?;
    let stack = Stack::with_adjacency(deltas, adj)?;
    if stack.n > 20 {
        return Err(ErpError::Input(format!("exact enumeration limited to 20 participants, found {}", stack.n)));
    }
    let threshold = opts.threshold(stack.n);
    let total = 1u64 << stack.n;
    let null: Vec<f64> = (0..total)
        .map(|mask| max_abs_mass(&stack.t_map(mask), threshold, adj))
        .collect();
    let t = stack.t_map(0);
    let observed = find_clusters(&t, threshold, adj);
    let clusters = assemble(observed, &null, |k| k as f64 / total as f64, opts.report_alpha);
    Ok(ClusterOutcome { t_map: t, threshold, clusters, null })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eeg_io::standard_channels;
    use crate::eeg_io::ChannelRole;
    use rand_distr::{Distribution, Normal};

    fn line_graph(n: usize) -> Adjacency {
        Adjacency::from_edges(n, &(1..n).map(|i| (i - 1, i)).collect::<Vec<_>>())
    }

    fn noise(seed: u64, n: usize, shape: (usize, usize)) -> Vec<Array2<f64>> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = Normal::new(0.0, 1.0).unwrap();
        (0..n).map(|_| Array2::from_shape_fn(shape, |_| g.sample(&mut rng))).collect()
    }

    #[test]
    fn adjacency_thresholds() {
        let eeg: Vec<ChannelInfo> = standard_channels().into_iter().filter(|c| c.role == ChannelRole::Eeg).collect();
        let none = build_adjacency(&eeg, 0.0).unwrap();
        assert_eq!(none.n_edges(), 0);
        let all = build_adjacency(&eeg, 2.1).unwrap();
        assert_eq!(all.n_edges(), eeg.len() * (eeg.len() - 1) / 2);
        let std = build_adjacency(&eeg, 0.4).unwrap();
        for (c, ch) in eeg.iter().enumerate() {
            assert!(!std.neighbors(c).is_empty(), "{} isolated", ch.name);
            assert!(!std.neighbors(c).contains(&c));
            for &d in std.neighbors(c) {
                assert!(std.neighbors(d).contains(&c));
            }
        }
        let bad = vec![ChannelInfo::from_label("X1", &[])];
        assert_eq!(build_adjacency(&bad, 0.4).unwrap_err(), ErpError::MissingPosition("X1".into()));
    }

    #[test]
    fn t_map_matches_formula() {
        let d = vec![ndarray::array![[1.0, 0.0]], ndarray::array![[2.0, 0.0]], ndarray::array![[3.0, 0.0]]];
        let t = t_map(&d).unwrap();
        // mean 2, sd 1, n 3
        assert!((t[[0, 0]] - 2.0 * 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(t[[0, 1]], 0.0);
    }

    #[test]
    fn clusters_respect_adjacency() {
        let mut t = Array2::<f64>::zeros((4, 10));
        for k in 2..6 {
            t[[0, k]] = 5.0;
            t[[1, k]] = 4.0;
        }
        t[[3, 4]] = 9.0;
        t[[2, 8]] = -3.0;
        let adj = Adjacency::from_edges(4, &[(0, 1)]);
        let cl = find_clusters(&t, 2.0, &adj);
        assert_eq!(cl.len(), 3);
        let big = cl.iter().find(|c| c.members.len() == 8).unwrap();
        assert_eq!(big.mass, 36.0);
        assert!(cl.iter().any(|c| c.members == vec![(3, 4)]));
        assert!(cl.iter().any(|c| c.polarity == Polarity::Negative && c.mass == -3.0));
    }

    #[test]
    fn opposite_signs_do_not_merge() {
        let t = ndarray::array![[3.0, -3.0, 3.0]];
        let cl = find_clusters(&t, 1.0, &line_graph(1));
        assert_eq!(cl.len(), 3);
    }

    /// Brute-force reference: exhaustive enumeration written without the
    /// sum-of-squares shortcut or mask caching.
    fn naive_exact_p(deltas: &[Array2<f64>], adj: &Adjacency, thr: f64) -> Vec<f64> {
        let n = deltas.len();
        let t_of = |signs: &[f64]| -> Array2<f64> {
            let shape = deltas[0].dim();
            Array2::from_shape_fn(shape, |(c, s)| {
                let x: Vec<f64> = (0..n).map(|i| signs[i] * deltas[i][[c, s]]).collect();
                let m = x.iter().sum::<f64>() / n as f64;
                let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
                m / (v / n as f64).sqrt()
            })
        };
        let obs = find_clusters(&t_of(&vec![1.0; n]), thr, adj);
        let null: Vec<f64> = (0..1u32 << n)
            .map(|mask| {
                let signs: Vec<f64> = (0..n).map(|i| if mask >> i & 1 == 1 { -1.0 } else { 1.0 }).collect();
                find_clusters(&t_of(&signs), thr, adj).iter().map(|c| c.mass.abs()).fold(0.0, f64::max)
            })
            .collect();
        let mut ps: Vec<(f64, f64)> = obs
            .iter()
            .map(|c| (c.mass.abs(), null.iter().filter(|&&m| m >= c.mass.abs()).count() as f64 / null.len() as f64))
            .collect();
        ps.sort_by(|a, b| b.0.total_cmp(&a.0));
        ps.into_iter().map(|p| p.1).collect()
    }

    #[test]
    fn exact_matches_naive_enumeration() {
        let mut d = noise(3, 4, (3, 20));
        for x in d.iter_mut() {
            for k in 5..10 {
                x[[1, k]] += 2.5;
            }
        }
        let adj = line_graph(3);
        let opts = ClusterOptions::default();
        let out = cluster_permutation_exact(&d, &adj, &opts).unwrap();
        let want = naive_exact_p(&d, &adj, out.threshold);
        let got: Vec<f64> = out.clusters.iter().map(|c| c.p_value).collect();
        assert_eq!(got, want);
        assert_eq!(out.null.len(), 16);
    }

    #[test]
    fn p_value_bounds_and_ordering() {
        let mut d = noise(8, 6, (4, 30));
        for x in d.iter_mut() {
            for k in 10..16 {
                x[[0, k]] += 3.0;
                x[[1, k]] += 3.0;
            }
        }
        let opts = ClusterOptions { n_permutations: 200, ..Default::default() };
        let out = cluster_permutation(&d, &line_graph(4), &opts).unwrap();
        assert!(!out.clusters.is_empty());
        for c in &out.clusters {
            assert!(c.p_value >= 1.0 / 201.0 && c.p_value <= 1.0);
        }
        for w in out.clusters.windows(2) {
            assert!(w[0].p_value <= w[1].p_value);
        }
        assert!(out.clusters[0].significant);
    }

    #[test]
    fn deterministic_and_sign_symmetric() {
        let d = noise(11, 5, (3, 40));
        let adj = line_graph(3);
        let opts = ClusterOptions { seed: 4, ..Default::default() };
        let a = cluster_permutation(&d, &adj, &opts).unwrap();
        let b = cluster_permutation(&d, &adj, &opts).unwrap();
        assert_eq!(a, b);
        let neg: Vec<Array2<f64>> = d.iter().map(|x| -x).collect();
        let c = cluster_permutation(&neg, &adj, &opts).unwrap();
        assert_eq!(a.clusters.len(), c.clusters.len());
        for (x, y) in a.clusters.iter().zip(&c.clusters) {
            assert_eq!(x.members, y.members);
            assert_ne!(x.polarity, y.polarity);
            assert!((x.mass + y.mass).abs() < 1e-9);
            assert_eq!(x.p_value, y.p_value);
        }
    }

    #[test]
    fn input_errors() {
        let adj = line_graph(2);
        let one = noise(1, 1, (2, 5));
        assert_eq!(
            cluster_permutation(&one, &adj, &ClusterOptions::default()).unwrap_err(),
            ErpError::TooFewParticipants(1)
        );
        let two = noise(1, 2, (2, 5));
        assert_eq!(
            cluster_permutation(&two, &Adjacency::from_edges(0, &[]), &ClusterOptions::default()).unwrap_err(),
            ErpError::EmptyAdjacency
        );
    }
}
