//! Symmetric FastICA (tanh contrast) on the EEG channels after PCA
//! whitening, and ocular artifact removal by correlation with EOG channels.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SignalError;
use crate::eeg_io::Recording;
use crate::num::{pearson, Real};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(default, deny_unknown_fields)]
pub struct IcaOptions {
    pub seed: u64,
    /// Fraction of EEG variance kept by the whitening step.
    pub variance_retained: f64,
    /// Hard cap on the number of components.
    pub max_components: Option<usize>,
    pub tolerance: f64,
    pub max_iter: usize,
    /// Components whose largest |r| with an EOG channel exceeds this are removed.
    pub eog_threshold: f64,
}

impl Default for IcaOptions {
    fn default() -> Self {
        IcaOptions {
            seed: 0,
            variance_retained: 0.999,
            max_components: None,
            tolerance: 1e-6,
            max_iter: 500,
            eog_threshold: 0.4,
        }
    }
}

/// Fitted decomposition. `unmixing` maps centered EEG channels to
/// components; `mixing` maps components back, and
/// `unmixing * mixing` is the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct IcaModel {
    /// Row indices of the EEG channels the model was fitted on.
    pub channels: Vec<usize>,
    pub channel_names: Vec<String>,
    pub means: Vec<f64>,
    pub unmixing: DMatrix<f64>,
    pub mixing: DMatrix<f64>,
    pub iterations: usize,
    pub explained_variance: f64,
}

impl IcaModel {
    pub fn n_components(&self) -> usize {
        self.unmixing.nrows()
    }

    fn centered<T: Real>(&self, rec: &Recording<T>) -> DMatrix<f64> {
        let data = rec.data();
        DMatrix::from_fn(self.channels.len(), rec.n_samples(), |r, s| {
            data[[self.channels[r], s]].as_f64() - self.means[r]
        })
    }

    /// Component activations, one row per component.
    pub fn sources<T: Real>(&self, rec: &Recording<T>) -> Array2<f64> {
        let s = &self.unmixing * self.centered(rec);
        Array2::from_shape_fn((s.nrows(), s.ncols()), |(r, c)| s[(r, c)])
    }

    /// Largest |Pearson r| between each component and any EOG channel.
    pub fn eog_correlations<T: Real>(&self, rec: &Recording<T>) -> Vec<f64> {
        let src = self.sources(rec);
        let eog: Vec<Vec<f64>> = rec
            .eog_indices()
            .into_iter()
            .map(|c| rec.data().row(c).iter().map(|v| v.as_f64()).collect())
            .collect();
        src.rows()
            .into_iter()
            .map(|row| {
                let row = row.to_vec();
                eog.iter()
                    .map(|e| pearson(&row, e).abs())
                    .fold(0.0, f64::max)
            })
            .collect()
    }
}

fn sym_decorrelate(w: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(w * w.transpose());
    let d = eig.eigenvalues.map(|v| 1.0 / v.max(1e-300).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose() * w
}

/// Fits ICA on the EEG-role channels of `rec`.
pub fn ica_fit<T: Real>(rec: &Recording<T>, opts: &IcaOptions) -> Result<IcaModel, SignalError> {
    let channels = rec.eeg_indices();
    let c = channels.len();
    let n = rec.n_samples();
    if c < 2 {
        return Err(SignalError::TooFewEegChannels(c));
    }
    if n < 10 * c {
        return Err(SignalError::TooFewSamples { needed: 10 * c, found: n });
    }
    let data = rec.data();
    let means: Vec<f64> = channels
        .iter()
        .map(|&ch| data.row(ch).iter().map(|v| v.as_f64()).sum::<f64>() / n as f64)
        .collect();
    let x = DMatrix::from_fn(c, n, |r, s| data[[channels[r], s]].as_f64() - means[r]);
    let cov = (&x * x.transpose()) / (n as f64 - 1.0);

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    if total <= 0.0 {
        return Err(SignalError::Parameter("EEG channels have zero variance".into()));
    }
    let top = eig.eigenvalues[order[0]];
    let mut k = 0;
    let mut acc = 0.0;
    while k < c && eig.eigenvalues[order[k]] > 1e-12 * top {
        acc += eig.eigenvalues[order[k]];
        k += 1;
        if acc / total >= opts.variance_retained {
            break;
        }
    }
    if let Some(cap) = opts.max_components {
        k = k.min(cap.max(1));
    }
    let explained_variance = order[..k].iter().map(|&i| eig.eigenvalues[i]).sum::<f64>() / total;

    // whitening K (k x c) and its pseudo-inverse (c x k)
    let basis = DMatrix::from_fn(c, k, |r, j| eig.eigenvectors[(r, order[j])]);
    let scale: Vec<f64> = order[..k].iter().map(|&i| eig.eigenvalues[i].sqrt()).collect();
    let whiten = DMatrix::from_fn(k, c, |j, r| basis[(r, j)] / scale[j]);
    let dewhiten = DMatrix::from_fn(c, k, |r, j| basis[(r, j)] * scale[j]);
    let z = &whiten * &x;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.seed);
    let init = DMatrix::from_fn(k, k, |_, _| StandardNormal.sample(&mut rng));
    let mut w = sym_decorrelate(&init);
    let mut last_change = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let g = (&w * &z).map(f64::tanh);
        let g_prime_mean: Vec<f64> = g
            .row_iter()
            .map(|row| row.iter().map(|v| 1.0 - v * v).sum::<f64>() / n as f64)
            .collect();
        let mut w1 = (&g * z.transpose()) / n as f64;
        for (i, gp) in g_prime_mean.iter().enumerate() {
            let shifted = w.row(i) * *gp;
            let mut row = w1.row_mut(i);
            row -= shifted;
        }
        let w1 = sym_decorrelate(&w1);
        let dots = &w1 * w.transpose();
        last_change = (0..k)
            .map(|i| (dots[(i, i)].abs() - 1.0).abs())
            .fold(0.0, f64::max);
        w = w1;
        if last_change < opts.tolerance {
            return Ok(IcaModel {
                channel_names: channels.iter().map(|&i| rec.channels()[i].name.clone()).collect(),
                channels,
                means,
                unmixing: &w * whiten,
                mixing: dewhiten * w.transpose(),
                iterations,
                explained_variance,
            });
        }
    }
    Err(SignalError::Convergence {
        iterations,
        last_change,
        tolerance: opts.tolerance,
    })
}

/// Removes components whose EOG correlation exceeds `threshold`. Only the
/// rejected components' projections are subtracted, so with nothing
/// rejected the data are returned unchanged. Returns the cleaned
/// recording and the rejected component indices.
pub fn ica_clean<T: Real>(
    rec: &Recording<T>,
    model: &IcaModel,
    threshold: f64,
) -> Result<(Recording<T>, Vec<usize>), SignalError> {
    let names: Vec<&str> = rec.eeg_indices().iter().map(|&i| rec.channels()[i].name.as_str()).collect();
    if names != model.channel_names.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(SignalError::ChannelMismatch(format!(
            "model fitted on [{}], recording has [{}]",
            model.channel_names.join(","),
            names.join(",")
        )));
    }
    let corr = model.eog_correlations(rec);
    let rejected: Vec<usize> = (0..corr.len()).filter(|&i| corr[i] > threshold).collect();
    if rejected.is_empty() {
        return Ok((rec.clone(), rejected));
    }
    let s = &model.unmixing * model.centered(rec);
    let mut out = rec.data().clone();
    for (r, &ch) in model.channels.iter().enumerate() {
        for t in 0..rec.n_samples() {
            let artifact: f64 = rejected.iter().map(|&j| model.mixing[(r, j)] * s[(j, t)]).sum();
            out[[ch, t]] -= T::of(artifact);
        }
    }
    Ok((rec.with_data(out), rejected))
}
