use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// ARD squared-exponential hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparams {
    pub signal_std: f64,
    pub length_scales: Vec<f64>,
    pub noise_std: f64,
}

impl GpHyperparams {
    pub fn new(signal_std: f64, length_scales: Vec<f64>, noise_std: f64) -> Result<Self> {
        let hp = Self {
            signal_std,
            length_scales,
            noise_std,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn dim(&self) -> usize {
        self.length_scales.len()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !(ok(self.signal_std) && ok(self.noise_std) && self.length_scales.iter().all(|&l| ok(l))) {
            return Err(Error::invalid(format!("hyperparameters must be positive: {self:?}")));
        }
        if self.length_scales.is_empty() {
            return Err(Error::invalid("at least one length scale is required"));
        }
        Ok(())
    }

    /// `[ln σ_f, ln ℓ_1, …, ln ℓ_D, ln σ_n]`.
    pub fn to_log(&self) -> DVector<f64> {
        let d = self.dim();
        let mut v = DVector::zeros(d + 2);
        v[0] = self.signal_std.ln();
        for (i, l) in self.length_scales.iter().enumerate() {
            v[i + 1] = l.ln();
        }
        v[d + 1] = self.noise_std.ln();
        v
    }

    pub fn from_log(v: &DVector<f64>) -> Self {
        let d = v.len() - 2;
        Self {
            signal_std: v[0].exp(),
            length_scales: (0..d).map(|i| v[i + 1].exp()).collect(),
            noise_std: v[d + 1].exp(),
        }
    }

    /// Diagonal jitter added to the kernel matrix on top of the noise.
    pub fn jitter(&self) -> f64 {
        JITTER * self.signal_std * self.signal_std
    }
}

/// Relative diagonal jitter, in units of `σ_f²`.
pub const JITTER: f64 = 1e-8;

/// `σ_f² exp(-½ Σ_d (x_d - x'_d)² / ℓ_d²)`.
pub fn kernel(x: &[f64], x_prime: &[f64], hp: &GpHyperparams) -> Result<f64> {
    if x.len() != hp.dim() {
        return Err(Error::DimensionMismatch {
            expected: hp.dim(),
            got: x.len(),
        });
    }
    if x_prime.len() != hp.dim() {
        return Err(Error::DimensionMismatch {
            expected: hp.dim(),
            got: x_prime.len(),
        });
    }
    Ok(kernel_unchecked(x.iter().copied(), x_prime.iter().copied(), hp))
}

pub(crate) fn kernel_unchecked(
    x: impl Iterator<Item = f64>,
    y: impl Iterator<Item = f64>,
    hp: &GpHyperparams,
) -> f64 {
    let r2: f64 = x
        .zip(y)
        .zip(&hp.length_scales)
        .map(|((a, b), l)| {
            let d = (a - b) / l;
            d * d
        })
        .sum();
    hp.signal_std * hp.signal_std * (-0.5 * r2).exp()
}

/// Noise-free kernel matrix between the rows of `a` and `b`.
pub(crate) fn cross_kernel(a: &DMatrix<f64>, b: &DMatrix<f64>, hp: &GpHyperparams) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
        kernel_unchecked(a.row(i).iter().copied(), b.row(j).iter().copied(), hp)
    })
}
