//! Gaussian process regression with an isotropic squared exponential kernel.
//!
//! Targets are centred on their mean before fitting; predictions add the mean
//! back, so far from the data the posterior mean reverts to the target mean.

use nalgebra::Cholesky;

use crate::error::{Error, Result};
use crate::nn::{Matrix, Vector};

/// Jitter added to the diagonal, in order, until the factorisation succeeds.
pub const JITTER_LADDER: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

pub fn se_kernel(x: &[f64], y: &[f64], sigma_f: f64, length_scale: f64) -> f64 {
    let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    sigma_f * sigma_f * (-sq / (2.0 * length_scale * length_scale)).exp()
}

pub fn gram<X: AsRef<[f64]>>(inputs: &[X], sigma_f: f64, length_scale: f64) -> Matrix {
    let n = inputs.len();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = se_kernel(inputs[i].as_ref(), inputs[j].as_ref(), sigma_f, length_scale);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Cholesky factor of `k + (noise + jitter) I`, escalating the jitter along
/// [`JITTER_LADDER`]. A zero noise always gets at least the first nonzero rung.
pub fn cholesky_with_jitter(k: &Matrix, noise: f64) -> Result<(Cholesky<f64, nalgebra::Dyn>, f64)> {
    for &jitter in &JITTER_LADDER {
        if noise + jitter <= 0.0 {
            continue;
        }
        let mut m = k.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += noise + jitter;
        }
        if let Some(c) = Cholesky::new(m) {
            return Ok((c, jitter));
        }
    }
    Err(Error::NotPositiveDefinite)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub sigma_f: f64,
    pub length_scale: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            sigma_f: 1.0,
            length_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GprModel {
    train_inputs: Vec<Vec<f64>>,
    train_targets: Vector,
    target_mean: f64,
    pub hyper: Hyperparams,
    pub noise_var: f64,
    /// Jitter that was needed on top of `noise_var`.
    pub jitter: f64,
    chol: Cholesky<f64, nalgebra::Dyn>,
    alpha: Vector,
}

impl GprModel {
    pub fn fit(inputs: &[Vec<f64>], targets: &[f64], hyper: Hyperparams, noise_var: f64) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::TooFewObservations { needed: 1, got: 0 });
        }
        if inputs.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                context: "gpr fit",
                expected: inputs.len(),
                found: targets.len(),
            });
        }
        let dim = inputs[0].len();
        if let Some(bad) = inputs.iter().find(|x| x.len() != dim) {
            return Err(Error::DimensionMismatch {
                context: "gpr fit",
                expected: dim,
                found: bad.len(),
            });
        }
        let target_mean = targets.iter().sum::<f64>() / targets.len() as f64;
        let centred = Vector::from_iterator(targets.len(), targets.iter().map(|t| t - target_mean));
        let k = gram(inputs, hyper.sigma_f, hyper.length_scale);
        let (chol, jitter) = cholesky_with_jitter(&k, noise_var)?;
        let alpha = chol.solve(&centred);
        Ok(GprModel {
            train_inputs: inputs.to_vec(),
            train_targets: Vector::from_row_slice(targets),
            target_mean,
            hyper,
            noise_var,
            jitter,
            chol,
            alpha,
        })
    }

    pub fn len(&self) -> usize {
        self.train_inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train_inputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.train_inputs[0].len()
    }

    pub fn targets(&self) -> &Vector {
        &self.train_targets
    }

    pub fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "gpr predict",
                expected: self.dim(),
                found: x.len(),
            });
        }
        let mut acc = 0.0;
        for (xi, a) in self.train_inputs.iter().zip(self.alpha.iter()) {
            acc += se_kernel(xi, x, self.hyper.sigma_f, self.hyper.length_scale) * a;
        }
        Ok(acc + self.target_mean)
    }

    /// Log marginal likelihood of the centred targets.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let centred = self.train_targets.map(|t| t - self.target_mean);
        let n = centred.len() as f64;
        let log_det_half: f64 = self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
        -0.5 * centred.dot(&self.alpha) - log_det_half - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }
}

pub fn log_marginal_likelihood(inputs: &[Vec<f64>], targets: &[f64], hyper: Hyperparams, noise_var: f64) -> Result<f64> {
    Ok(GprModel::fit(inputs, targets, hyper, noise_var)?.log_marginal_likelihood())
}

pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperGrid {
    pub sigma_f: Vec<f64>,
    pub length_scale: Vec<f64>,
}

impl Default for HyperGrid {
    /// 7 x 7 log-spaced grid: sigma_f in [0.1, 10], length scale in [0.05, 5].
    fn default() -> Self {
        HyperGrid {
            sigma_f: log_space(0.1, 10.0, 7),
            length_scale: log_space(0.05, 5.0, 7),
        }
    }
}

/// Grid search for the hyperparameters maximising the log marginal
/// likelihood. The initial setting is always a candidate, so the result never
/// scores below it. Returns the winner and its score.
pub fn optimize_hyperparams(
    inputs: &[Vec<f64>],
    targets: &[f64],
    initial: Hyperparams,
    grid: &HyperGrid,
    noise_var: f64,
) -> Result<(Hyperparams, f64)> {
    if inputs.len() < 2 {
        return Err(Error::TooFewObservations {
            needed: 2,
            got: inputs.len(),
        });
    }
    let candidates = std::iter::once(initial).chain(grid.sigma_f.iter().flat_map(|&s| {
        grid.length_scale.iter().map(move |&l| Hyperparams {
            sigma_f: s,
            length_scale: l,
        })
    }));
    let mut best: Option<(Hyperparams, f64)> = None;
    for h in candidates {
        let Ok(lml) = log_marginal_likelihood(inputs, targets, h, noise_var) else {
            continue;
        };
        if !lml.is_finite() {
            continue;
        }
        if best.is_none_or(|(_, b)| lml > b) {
            best = Some((h, lml));
        }
    }
    best.ok_or(Error::HyperparameterSearchFailed)
}
