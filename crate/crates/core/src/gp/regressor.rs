//! Zero-mean GP regression with an ARD squared-exponential kernel.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kernel::{cross_kernel, kernel_unchecked, GpHyperparams};
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Extra jitter multipliers tried when the kernel matrix is numerically
/// indefinite.
const JITTER_ESCALATION: [f64; 5] = [1.0, 1e2, 1e4, 1e6, 1e8];

/// A trained GP: hyperparameters, data and the cached factorisation.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "GpRecord", into = "GpRecord")]
pub struct GpRegressor {
    hyperparams: GpHyperparams,
    inputs: DMatrix<f64>,
    targets: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    weights: DVector<f64>,
}

/// Serialised form; the factorisation is recomputed on load.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct GpRecord {
    hyperparams: GpHyperparams,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
}

impl From<GpRegressor> for GpRecord {
    fn from(gp: GpRegressor) -> Self {
        Self {
            inputs: gp.inputs.row_iter().map(|r| r.iter().copied().collect()).collect(),
            targets: gp.targets.iter().copied().collect(),
            hyperparams: gp.hyperparams,
        }
    }
}

impl TryFrom<GpRecord> for GpRegressor {
    type Error = Error;

    fn try_from(r: GpRecord) -> Result<Self> {
        let x = rows_to_matrix(&r.inputs, r.hyperparams.dim())?;
        GpRegressor::new(r.hyperparams, x, DVector::from_vec(r.targets))
    }
}

pub(crate) fn rows_to_matrix(rows: &[Vec<f64>], dim: usize) -> Result<DMatrix<f64>> {
    for row in rows {
        if row.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: row.len(),
            });
        }
    }
    Ok(DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]))
}

/// `K + (σ_n² + jitter) I`, factorised, escalating the jitter if needed.
fn factor(hp: &GpHyperparams, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, Cholesky<f64, Dyn>)> {
    let k = cross_kernel(x, x, hp);
    let base = hp.noise_std * hp.noise_std;
    for scale in JITTER_ESCALATION {
        let mut ky = k.clone();
        for i in 0..x.nrows() {
            ky[(i, i)] += base + hp.jitter() * scale;
        }
        if let Some(chol) = Cholesky::new(ky) {
            if scale > 1.0 {
                log::warn!("kernel matrix needed {scale}x jitter");
            }
            return Ok((k, chol));
        }
    }
    Err(Error::GpFit("kernel matrix is not positive definite".into()))
}

fn check_data(hp: &GpHyperparams, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    hp.validate()?;
    if x.ncols() != hp.dim() {
        return Err(Error::DimensionMismatch {
            expected: hp.dim(),
            got: x.ncols(),
        });
    }
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    if x.nrows() == 0 {
        return Err(Error::InsufficientData("GP needs at least one training point".into()));
    }
    if !(x.iter().all(|v| v.is_finite()) && y.iter().all(|v| v.is_finite())) {
        return Err(Error::invalid("GP training data must be finite"));
    }
    Ok(())
}

impl GpRegressor {
    /// Condition a GP with fixed hyperparameters on `(x, y)`; rows of `x` are
    /// samples.
    pub fn new(hyperparams: GpHyperparams, inputs: DMatrix<f64>, targets: DVector<f64>) -> Result<Self> {
        check_data(&hyperparams, &inputs, &targets)?;
        let (_, chol) = factor(&hyperparams, &inputs)?;
        let weights = chol.solve(&targets);
        Ok(Self {
            hyperparams,
            inputs,
            targets,
            chol,
            weights,
        })
    }

    pub fn hyperparams(&self) -> &GpHyperparams {
        &self.hyperparams
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    fn k_star(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_fn(self.len(), |i, _| {
            kernel_unchecked(self.inputs.row(i).iter().copied(), x.iter().copied(), &self.hyperparams)
        })
    }

    fn check_query(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.hyperparams.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.hyperparams.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Posterior mean only.
    pub fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        self.check_query(x)?;
        Ok(self.k_star(x).dot(&self.weights))
    }

    /// Posterior mean and predictive variance of a noisy observation at `x`.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        self.check_query(x)?;
        let ks = self.k_star(x);
        let mean = ks.dot(&self.weights);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&ks)
            .ok_or_else(|| Error::GpFit("singular factor".into()))?;
        let hp = &self.hyperparams;
        let prior = hp.signal_std * hp.signal_std + hp.noise_std * hp.noise_std;
        Ok((mean, (prior - v.norm_squared()).max(0.0)))
    }
}

/// Log marginal likelihood and its gradient with respect to
/// [`GpHyperparams::to_log`].
pub fn log_marginal_likelihood(
    hp: &GpHyperparams,
    inputs: &DMatrix<f64>,
    targets: &DVector<f64>,
) -> Result<(f64, DVector<f64>)> {
    check_data(hp, inputs, targets)?;
    lml_unchecked(hp, inputs, targets)
}

fn lml_unchecked(hp: &GpHyperparams, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
    let n = x.nrows();
    let d = hp.dim();
    let (k, chol) = factor(hp, x)?;
    let alpha = chol.solve(y);
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
    let value = -0.5 * y.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * LN_2PI;

    // ∂L/∂θ = ½ tr((ααᵀ - K⁻¹) ∂K/∂θ)
    let k_inv = chol.inverse();
    let a = &alpha * alpha.transpose() - k_inv;
    let mut grad = DVector::zeros(d + 2);
    let jitter = hp.jitter();
    let mut g_sf = 0.0;
    let mut trace_a = 0.0;
    for j in 0..n {
        trace_a += a[(j, j)];
        for i in 0..n {
            let aij = a[(i, j)];
            let kij = k[(i, j)];
            g_sf += aij * kij;
            if i == j {
                continue;
            }
            let w = aij * kij;
            for dd in 0..d {
                let l = hp.length_scales[dd];
                let diff = (x[(i, dd)] - x[(j, dd)]) / l;
                grad[dd + 1] += w * diff * diff;
            }
        }
    }
    // σ_f scales both K and the jitter.
    grad[0] = g_sf + jitter * trace_a;
    for dd in 0..d {
        grad[dd + 1] *= 0.5;
    }
    grad[d + 1] = hp.noise_std * hp.noise_std * trace_a;
    Ok((value, grad))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpFitOptions {
    /// Random starts in addition to the supplied initial point.
    pub restarts: usize,
    pub max_iters: usize,
    /// Stop once the projected gradient norm falls below this.
    pub grad_tol: f64,
    /// Half-width of the search box around the initial log-parameters.
    pub log_range: f64,
    /// Half-width for the random restarts, in log units.
    pub restart_spread: f64,
    pub seed: u64,
}

impl Default for GpFitOptions {
    fn default() -> Self {
        Self {
            restarts: 2,
            max_iters: 100,
            grad_tol: 1e-5,
            log_range: 7.0,
            restart_spread: 1.0,
            seed: 0,
        }
    }
}

/// Maximise the log marginal likelihood from `init` and a few random starts,
/// then condition on the data.
pub fn gp_fit(
    inputs: DMatrix<f64>,
    targets: DVector<f64>,
    init: &GpHyperparams,
    options: &GpFitOptions,
) -> Result<GpRegressor> {
    check_data(init, &inputs, &targets)?;
    let x0 = init.to_log();
    let lo = x0.map(|v| v - options.log_range);
    let hi = x0.map(|v| v + options.log_range);
    let objective = |theta: &DVector<f64>| lml_unchecked(&GpHyperparams::from_log(theta), &inputs, &targets).ok();

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut starts = vec![x0.clone()];
    for _ in 0..options.restarts {
        starts.push(x0.map(|v| v + rng.random_range(-options.restart_spread..=options.restart_spread)));
    }

    let mut best: Option<(f64, DVector<f64>)> = None;
    for start in starts {
        if let Some((theta, value)) = ascend(&objective, start, &lo, &hi, options) {
            if best.as_ref().is_none_or(|(b, _)| value > *b) {
                best = Some((value, theta));
            }
        }
    }
    let (_, theta) = best.ok_or_else(|| Error::GpFit("no start produced a finite likelihood".into()))?;
    GpRegressor::new(GpHyperparams::from_log(&theta), inputs, targets)
}

/// Projected BFGS ascent with Armijo backtracking on a box.
fn ascend(
    f: &impl Fn(&DVector<f64>) -> Option<(f64, DVector<f64>)>,
    start: DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    options: &GpFitOptions,
) -> Option<(DVector<f64>, f64)> {
    let project = |x: DVector<f64>| x.zip_zip_map(lo, hi, |v, l, h| v.clamp(l, h));
    let n = start.len();
    let mut x = project(start);
    let (mut fx, mut g) = f(&x)?;
    if !fx.is_finite() {
        return None;
    }
    let mut h = DMatrix::<f64>::identity(n, n);
    for _ in 0..options.max_iters {
        let pg = project(&x + &g) - &x;
        if pg.norm() < options.grad_tol {
            break;
        }
        let mut accepted = None;
        for use_bfgs in [true, false] {
            let dir = if use_bfgs { &h * &g } else { g.clone() };
            if dir.dot(&g) <= 0.0 {
                continue;
            }
            let mut t = (1.0 / dir.amax()).min(1.0);
            for _ in 0..40 {
                let cand = project(&x + &dir * t);
                let step = &cand - &x;
                if step.amax() < 1e-14 {
                    break;
                }
                if let Some((fc, gc)) = f(&cand) {
                    if fc.is_finite() && fc >= fx + 1e-4 * g.dot(&step) {
                        accepted = Some((cand, fc, gc));
                        break;
                    }
                }
                t *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
            h = DMatrix::identity(n, n);
        }
        let Some((xn, fxn, gn)) = accepted else {
            break;
        };
        let s = &xn - &x;
        // Curvature of -f.
        let yv = &g - &gn;
        let sy = s.dot(&yv);
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(n, n);
            let left = &eye - &s * yv.transpose() * rho;
            let right = &eye - &yv * s.transpose() * rho;
            h = &left * &h * &right + &s * s.transpose() * rho;
        }
        let improvement = fxn - fx;
        x = xn;
        fx = fxn;
        g = gn;
        if improvement.abs() < 1e-10 * (1.0 + fx.abs()) {
            break;
        }
    }
    Some((x, fx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::LU;

    fn random_problem(seed: u64, n: usize, d: usize) -> (GpHyperparams, DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::<f64>::from_fn(n, d, |_, _| rng.random_range(-2.0..2.0));
        let y = DVector::from_fn(n, |i, _| (x[(i, 0)] * 1.3).sin() + 0.1 * rng.random_range(-1.0..1.0));
        let hp = GpHyperparams::new(
            rng.random_range(0.3..2.0),
            (0..d).map(|_| rng.random_range(0.3..3.0)).collect(),
            rng.random_range(0.05..0.5),
        )
        .unwrap();
        (hp, x, y)
    }

    /// Textbook posterior via a dense LU solve.
    fn dense_posterior(hp: &GpHyperparams, x: &DMatrix<f64>, y: &DVector<f64>, q: &[f64]) -> (f64, f64) {
        let n = x.nrows();
        let mut ky = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let xi: Vec<f64> = x.row(i).iter().copied().collect();
                let xj: Vec<f64> = x.row(j).iter().copied().collect();
                ky[(i, j)] = super::super::kernel(&xi, &xj, hp).unwrap();
            }
            ky[(i, i)] += hp.noise_std.powi(2) + hp.jitter();
        }
        let ks = DVector::from_fn(n, |i, _| {
            let xi: Vec<f64> = x.row(i).iter().copied().collect();
            super::super::kernel(&xi, q, hp).unwrap()
        });
        let lu = LU::new(ky);
        let mean = ks.dot(&lu.solve(y).unwrap());
        let var = hp.signal_std.powi(2) + hp.noise_std.powi(2) - ks.dot(&lu.solve(&ks).unwrap());
        (mean, var)
    }

    #[test]
    fn posterior_matches_dense_solve() {
        for seed in 0..10 {
            let (hp, x, y) = random_problem(seed, 40, 3);
            let gp = GpRegressor::new(hp.clone(), x.clone(), y.clone()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            for _ in 0..10 {
                let q: Vec<f64> = (0..3).map(|_| rng.random_range(-2.5..2.5)).collect();
                let (m, v) = gp.predict(&q).unwrap();
                let (mo, vo) = dense_posterior(&hp, &x, &y, &q);
                assert!((m - mo).abs() < 1e-10, "{m} vs {mo}");
                assert!((v - vo).abs() < 1e-10, "{v} vs {vo}");
            }
        }
    }

    #[test]
    fn single_point_interpolates() {
        let hp = GpHyperparams::new(1.0, vec![1.0, 1.0], 1e-6).unwrap();
        let x = DMatrix::from_row_slice(1, 2, &[0.3, -0.2]);
        let gp = GpRegressor::new(hp, x, DVector::from_vec(vec![0.7])).unwrap();
        let (m, v) = gp.predict(&[0.3, -0.2]).unwrap();
        assert!((m - 0.7).abs() < 1e-6);
        assert!(v >= 0.0 && v < 1e-6);
    }

    #[test]
    fn reverts_to_prior_far_away() {
        let (hp, x, y) = random_problem(3, 20, 2);
        let gp = GpRegressor::new(hp.clone(), x, y).unwrap();
        let (m, v) = gp.predict(&[1e4, -1e4]).unwrap();
        assert_eq!(m, 0.0);
        assert_relative_eq!(v, hp.signal_std.powi(2) + hp.noise_std.powi(2), epsilon = 1e-12);
    }

    #[test]
    fn zero_targets_give_zero_mean() {
        let (hp, x, _) = random_problem(4, 15, 2);
        let gp = GpRegressor::new(hp, x, DVector::zeros(15)).unwrap();
        assert_eq!(gp.predict_mean(&[0.1, 0.2]).unwrap(), 0.0);
    }

    #[test]
    fn scalar_likelihood_closed_form() {
        let hp = GpHyperparams::new(0.1, vec![1.0], 2.0).unwrap();
        let x = DMatrix::from_row_slice(1, 1, &[0.5]);
        let y = DVector::from_vec(vec![1.2]);
        let (value, _) = log_marginal_likelihood(&hp, &x, &y).unwrap();
        let s2 = 0.01 + 4.0 + hp.jitter();
        let expected = -0.5 * 1.44 / s2 - 0.5 * (std::f64::consts::TAU * s2).ln();
        assert_relative_eq!(value, expected, epsilon = 1e-12);
    }

    #[test]
    fn zero_targets_likelihood_ignores_length_scale_for_one_point() {
        let x = DMatrix::from_row_slice(1, 2, &[0.5, 0.1]);
        let y = DVector::zeros(1);
        let a = log_marginal_likelihood(&GpHyperparams::new(1.0, vec![0.1, 1.0], 0.1).unwrap(), &x, &y).unwrap();
        let b = log_marginal_likelihood(&GpHyperparams::new(1.0, vec![9.0, 0.2], 0.1).unwrap(), &x, &y).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1[1], 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let h = 1e-5;
        for seed in 0..20 {
            let (hp, x, y) = random_problem(seed, 25, 3);
            let (_, grad) = log_marginal_likelihood(&hp, &x, &y).unwrap();
            let theta = hp.to_log();
            for i in 0..theta.len() {
                let mut up = theta.clone();
                up[i] += h;
                let mut dn = theta.clone();
                dn[i] -= h;
                let fu = log_marginal_likelihood(&GpHyperparams::from_log(&up), &x, &y).unwrap().0;
                let fd = log_marginal_likelihood(&GpHyperparams::from_log(&dn), &x, &y).unwrap().0;
                let fdiff = (fu - fd) / (2.0 * h);
                let rel = (grad[i] - fdiff).abs() / grad[i].abs().max(1e-3);
                assert!(rel < 1e-5, "seed {seed} param {i}: {} vs {fdiff}", grad[i]);
            }
        }
    }

    #[test]
    fn fit_improves_likelihood_and_beats_constant_baseline() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = |a: f64, b: f64| (1.5 * a).sin() * (0.7 * b).cos() + 0.3 * a;
        let sample = |rng: &mut ChaCha8Rng, n: usize| {
            let x = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-2.0..2.0));
            let y = DVector::from_fn(n, |i, _| f(x[(i, 0)], x[(i, 1)]) + 0.01 * rng.random_range(-1.0..1.0));
            (x, y)
        };
        let (x, y) = sample(&mut rng, 50);
        let (xt, yt) = sample(&mut rng, 200);
        let init = GpHyperparams::new(1.0, vec![1.0, 1.0], 0.1).unwrap();
        let before = log_marginal_likelihood(&init, &x, &y).unwrap().0;
        let gp = gp_fit(x.clone(), y.clone(), &init, &GpFitOptions::default()).unwrap();
        let after = log_marginal_likelihood(gp.hyperparams(), &x, &y).unwrap().0;
        assert!(after > before);
        let mean = y.mean();
        let mut se = 0.0;
        let mut se_base = 0.0;
        for i in 0..xt.nrows() {
            let q = [xt[(i, 0)], xt[(i, 1)]];
            se += (gp.predict_mean(&q).unwrap() - yt[i]).powi(2);
            se_base += (mean - yt[i]).powi(2);
        }
        assert!(se < 0.05 * se_base, "{se} vs {se_base}");
    }

    #[test]
    fn serde_round_trip_recomputes_weights() {
        let (hp, x, y) = random_problem(5, 12, 2);
        let gp = GpRegressor::new(hp, x, y).unwrap();
        let json = serde_json::to_string(&gp).unwrap();
        let back: GpRegressor = serde_json::from_str(&json).unwrap();
        let q = [0.2, 0.4];
        assert_eq!(gp.predict(&q).unwrap(), back.predict(&q).unwrap());
    }

    #[test]
    fn rejects_bad_data() {
        let hp = GpHyperparams::new(1.0, vec![1.0], 0.1).unwrap();
        assert!(GpRegressor::new(hp.clone(), DMatrix::zeros(0, 1), DVector::zeros(0)).is_err());
        assert!(GpRegressor::new(hp.clone(), DMatrix::zeros(2, 2), DVector::zeros(2)).is_err());
        assert!(GpRegressor::new(hp, DMatrix::zeros(2, 1), DVector::zeros(3)).is_err());
    }
}
