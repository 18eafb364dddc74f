use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Estimated error density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Density {
    /// Gaussian KDE evaluated on `grid`, normalised so the trapezoidal
    /// integral over the grid is one.
    Smooth {
        bandwidth: f64,
        grid: Vec<f64>,
        density: Vec<f64>,
    },
    /// Every sample has the same value; no bandwidth exists.
    Spike { location: f64 },
}

impl Density {
    pub fn is_degenerate(&self) -> bool {
        matches!(self, Density::Spike { .. })
    }

    /// `x,y` rows; a spike is written as a single row with `y = inf`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x", "y"])?;
        match self {
            Density::Smooth { grid, density, .. } => {
                for (x, y) in grid.iter().zip(density) {
                    w.serialize((x, y))?;
                }
            }
            Density::Spike { location } => w.serialize((location, f64::INFINITY))?,
        }
        w.flush()?;
        Ok(())
    }
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn sorted(samples: &[f64]) -> Vec<f64> {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Silverman's rule, `0.9 min(σ, IQR/1.34) n^{-1/5}`; `None` for zero spread.
pub fn silverman_bandwidth(samples: &[f64]) -> Option<f64> {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if !(sd > 0.0) {
        return None;
    }
    let s = sorted(samples);
    let iqr = quantile(&s, 0.75) - quantile(&s, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    Some(0.9 * spread * n.powf(-0.2))
}

/// Evenly spaced grid reaching four bandwidths past the extreme samples.
pub fn default_grid(samples: &[f64], points: usize) -> Vec<f64> {
    let s = sorted(samples);
    let pad = 4.0 * silverman_bandwidth(samples).unwrap_or(0.0);
    let (lo, hi) = (s[0] - pad, s[s.len() - 1] + pad);
    let points = points.max(2);
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

pub fn kde_pdf(samples: &[f64], grid: &[f64]) -> Result<Density> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "density estimate needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().chain(grid).any(|x| !x.is_finite()) {
        return Err(Error::invalid("samples and grid must be finite"));
    }
    let Some(h) = silverman_bandwidth(samples) else {
        return Ok(Density::Spike { location: samples[0] });
    };
    if grid.len() < 2 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("grid must have at least 2 strictly increasing points"));
    }
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let mut density: Vec<f64> = grid
        .iter()
        .map(|&x| {
            norm * samples
                .iter()
                .map(|&s| (-0.5 * ((x - s) / h).powi(2)).exp())
                .sum::<f64>()
        })
        .collect();
    let mass = trapezoid(grid, &density);
    if !(mass > 0.0) {
        return Err(Error::invalid("grid does not overlap the samples"));
    }
    density.iter_mut().for_each(|d| *d /= mass);
    Ok(Density::Smooth {
        bandwidth: h,
        grid: grid.to_vec(),
        density,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn constant_samples_are_a_spike() {
        let d = kde_pdf(&[0.0; 10], &[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(d, Density::Spike { location: 0.0 });
        assert!(kde_pdf(&[1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn standard_normal_peak() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let grid = default_grid(&xs, 801);
        let Density::Smooth { grid, density, .. } = kde_pdf(&xs, &grid).unwrap() else {
            panic!()
        };
        assert!((trapezoid(&grid, &density) - 1.0).abs() < 1e-3);
        assert!(density.iter().all(|&d| d >= 0.0));
        // Density at zero by direct evaluation, independent of the grid.
        let h = silverman_bandwidth(&xs).unwrap();
        let at0 = xs.iter().map(|x| (-0.5 * (x / h).powi(2)).exp()).sum::<f64>()
            / (xs.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
        let exact = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((at0 - exact).abs() / exact < 0.05, "{at0}");
    }

    #[test]
    fn silverman_matches_hand_value() {
        // σ = 1.5811, IQR = 2 -> spread = min(1.5811, 1.4925) = 1.4925.
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let h = silverman_bandwidth(&xs).unwrap();
        let expected = 0.9 * (2.0 / 1.34) * 5f64.powf(-0.2);
        assert!((h - expected).abs() < 1e-12);
    }

    #[test]
    fn csv_shape() {
        let d = kde_pdf(&[0.1, 0.2, 0.4], &[0.0, 0.25, 0.5]).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("x,y\n"));
    }
}
