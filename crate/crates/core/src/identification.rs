//! Friction and restitution identification.
//!
//! The objective for a batch of trials is the summed impulse error
//! `Σ ‖P_n - P̂_n(μ, ε)‖₂` between measured impulses and model predictions.
//! It is piecewise smooth (contact modes switch across the box), so the search
//! is a dense grid followed by a derivative-free Nelder-Mead polish from the
//! best cell.

use std::io::Write;
use std::path::Path;

use nalgebra::Vector2;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{predict_in_frame, ContactFrame, ModelId, ModelParams, ParamBounds};
use crate::trial::{ImpactTrial, TrialId};

/// Objective spread along μ below which μ is reported as unidentifiable.
pub const FLAT_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerSettings {
    /// Grid vertices per axis, bounds included.
    pub grid_mu: usize,
    pub grid_epsilon: usize,
    /// Stop polishing once the simplex spread in objective and parameters
    /// falls below this.
    pub polish_tol: f64,
    pub max_polish_iters: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            grid_mu: 64,
            grid_epsilon: 64,
            polish_tol: 1e-12,
            max_polish_iters: 400,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Trials per fit.
    pub k: usize,
    /// Bootstrap iterations.
    pub m: usize,
    pub bounds: ParamBounds,
    pub optimizer: OptimizerSettings,
    pub seed: u64,
}

impl FitConfig {
    pub fn new(k: usize, m: usize, seed: u64) -> Self {
        Self {
            k,
            m,
            bounds: ParamBounds::default(),
            optimizer: OptimizerSettings::default(),
            seed,
        }
    }

    pub fn validate(&self, n_trials: usize) -> Result<()> {
        self.bounds.validate()?;
        if self.m == 0 {
            return Err(Error::invalid("bootstrap needs at least one iteration"));
        }
        if self.k == 0 || self.k > n_trials {
            return Err(Error::InsufficientData(format!(
                "k = {} trials per fit with {n_trials} available",
                self.k
            )));
        }
        let o = &self.optimizer;
        if o.grid_mu == 0 || o.grid_epsilon == 0 {
            return Err(Error::invalid("grid needs at least one vertex per axis"));
        }
        Ok(())
    }
}

/// Outcome of one batch fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchFit {
    pub params: ModelParams,
    pub objective: f64,
    /// The objective does not depend on μ at the optimum; μ was set to its
    /// lower bound.
    pub mu_flat: bool,
    /// The polish met its tolerance before the iteration cap.
    pub converged: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStd {
    pub mu: f64,
    pub epsilon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelId,
    pub k: usize,
    pub m: usize,
    pub seed: u64,
    pub mean_params: ModelParams,
    pub std_params: ParamStd,
    pub iterations: Vec<BatchFit>,
}

impl FitResult {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

/// Trials reduced to what the objective needs.
struct Prepared {
    frames: Vec<ContactFrame>,
    measured: Vec<Vector2<f64>>,
}

impl Prepared {
    fn new<'a>(trials: impl IntoIterator<Item = &'a ImpactTrial>) -> Result<Self> {
        let mut frames = Vec::new();
        let mut measured = Vec::new();
        for t in trials {
            frames.push(ContactFrame::new(&t.body, &t.contact, t.v_pre())?);
            measured.push(t.measured_impulse()?.as_vector());
        }
        Ok(Self { frames, measured })
    }

    fn objective(&self, model: ModelId, mu: f64, eps: f64) -> f64 {
        self.frames
            .iter()
            .zip(&self.measured)
            .map(|(f, p)| (predict_in_frame(model, f, mu, eps) - p).norm())
            .sum()
    }
}

fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Summed impulse error of `model` at `params` over `trials`.
pub fn batch_objective(model: ModelId, trials: &[ImpactTrial], params: &ModelParams) -> Result<f64> {
    Ok(Prepared::new(trials)?.objective(model, params.mu, params.epsilon))
}

/// Minimise the summed impulse error over the parameter box.
pub fn fit_batch(
    model: ModelId,
    trials: &[ImpactTrial],
    bounds: &ParamBounds,
    settings: &OptimizerSettings,
) -> Result<BatchFit> {
    if trials.is_empty() {
        return Err(Error::InsufficientData("fit needs at least one trial".into()));
    }
    bounds.validate()?;
    let data = Prepared::new(trials)?;
    Ok(fit_prepared(model, &data, bounds, settings))
}

fn fit_prepared(model: ModelId, data: &Prepared, bounds: &ParamBounds, settings: &OptimizerSettings) -> BatchFit {
    let mus = axis(bounds.mu.0, bounds.mu.1, settings.grid_mu);
    let epss = axis(bounds.epsilon.0, bounds.epsilon.1, settings.grid_epsilon);
    let f = |x: [f64; 2]| {
        let p = bounds.clamp(x[0], x[1]);
        data.objective(model, p.mu, p.epsilon)
    };

    // Strict improvement keeps the smallest μ (then ε) among exact ties.
    let mut best = ([mus[0], epss[0]], f64::INFINITY);
    for &mu in &mus {
        for &eps in &epss {
            let v = f([mu, eps]);
            if v < best.1 {
                best = ([mu, eps], v);
            }
        }
    }

    let step = [
        cell(bounds.mu, settings.grid_mu),
        cell(bounds.epsilon, settings.grid_epsilon),
    ];
    let (x, value, converged) = nelder_mead(
        &f,
        best.0,
        step,
        best.1,
        settings.polish_tol,
        settings.max_polish_iters,
    );
    let mut params = bounds.clamp(x[0], x[1]);
    let mut objective = value;

    let spread = mus
        .iter()
        .map(|&mu| data.objective(model, mu, params.epsilon))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let mu_flat = spread.1 - spread.0 < FLAT_TOL;
    if mu_flat {
        let at_floor = data.objective(model, bounds.mu.0, params.epsilon);
        if at_floor <= objective + FLAT_TOL {
            params.mu = bounds.mu.0;
            objective = at_floor;
        }
    }
    BatchFit {
        params,
        objective,
        mu_flat,
        converged,
    }
}

fn cell(range: (f64, f64), n: usize) -> f64 {
    let width = range.1 - range.0;
    if n > 1 {
        width / (n - 1) as f64
    } else {
        width.max(1e-3)
    }
}

/// Nelder-Mead on a box (points are clamped by `f`), started from `x0` with
/// a simplex of the given per-axis steps. Returns the best point ever seen.
fn nelder_mead(
    f: &impl Fn([f64; 2]) -> f64,
    x0: [f64; 2],
    step: [f64; 2],
    f0: f64,
    tol: f64,
    max_iters: usize,
) -> ([f64; 2], f64, bool) {
    let mut simplex = [
        (x0, f0),
        ([x0[0] + step[0], x0[1]], 0.0),
        ([x0[0], x0[1] + step[1]], 0.0),
    ];
    for v in simplex.iter_mut().skip(1) {
        v.1 = f(v.0);
    }
    let lerp = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    let mut converged = false;
    for _ in 0..max_iters {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let size = simplex[1..]
            .iter()
            .map(|v| (v.0[0] - simplex[0].0[0]).abs().max((v.0[1] - simplex[0].0[1]).abs()))
            .fold(0.0, f64::max);
        if simplex[2].1 - simplex[0].1 <= tol * (1.0 + simplex[0].1.abs()) && size <= 1e-9 {
            converged = true;
            break;
        }
        let centroid = lerp(simplex[0].0, simplex[1].0, 0.5);
        let worst = simplex[2];
        let reflected = lerp(centroid, worst.0, -1.0);
        let fr = f(reflected);
        if fr < simplex[0].1 {
            let expanded = lerp(centroid, worst.0, -2.0);
            let fe = f(expanded);
            simplex[2] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[1].1 {
            simplex[2] = (reflected, fr);
        } else {
            let contracted = if fr < worst.1 {
                lerp(centroid, reflected, 0.5)
            } else {
                lerp(centroid, worst.0, 0.5)
            };
            let fc = f(contracted);
            if fc < worst.1.min(fr) {
                simplex[2] = (contracted, fc);
            } else {
                let best = simplex[0].0;
                for v in simplex.iter_mut().skip(1) {
                    v.0 = lerp(best, v.0, 0.5);
                    v.1 = f(v.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    // Report the clamped location actually evaluated.
    let best = simplex[0];
    (best.0, best.1, converged)
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Generator for bootstrap iteration `i`: one ChaCha stream per iteration so
/// results do not depend on scheduling.
fn iteration_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng
}

/// `m` batch fits on random `k`-subsets drawn without replacement, then
/// mean and (population) standard deviation of the parameters.
pub fn fit_bootstrap(model: ModelId, trials: &[ImpactTrial], config: &FitConfig) -> Result<FitResult> {
    config.validate(trials.len())?;
    let n = trials.len();
    let iterations = (0..config.m)
        .into_par_iter()
        .map(|i| {
            let mut rng = iteration_rng(config.seed, i);
            let mut picks = index::sample(&mut rng, n, config.k).into_vec();
            // Sorting keeps the objective's summation order independent of
            // the draw order.
            picks.sort_unstable();
            let data = Prepared::new(picks.iter().map(|&j| &trials[j]))?;
            Ok(fit_prepared(model, &data, &config.bounds, &config.optimizer))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mu, mu_std) = mean_std(iterations.iter().map(|f| f.params.mu));
    let (eps, eps_std) = mean_std(iterations.iter().map(|f| f.params.epsilon));
    Ok(FitResult {
        model,
        k: config.k,
        m: config.m,
        seed: config.seed,
        mean_params: config.bounds.clamp(mu, eps),
        std_params: ParamStd {
            mu: mu_std,
            epsilon: eps_std,
        },
        iterations,
    })
}

/// One bootstrap summary per subset size.
pub fn convergence_curve(
    model: ModelId,
    trials: &[ImpactTrial],
    k_values: &[usize],
    config: &FitConfig,
) -> Result<Vec<FitResult>> {
    if let Some(&k_max) = k_values.iter().max() {
        if k_max > trials.len() {
            return Err(Error::InsufficientData(format!(
                "largest k {k_max} exceeds {} trials",
                trials.len()
            )));
        }
    }
    k_values
        .iter()
        .map(|&k| fit_bootstrap(model, trials, &FitConfig { k, ..*config }))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerTrialFit {
    pub trial_id: TrialId,
    pub params: ModelParams,
    /// Attained impulse error `‖P - P̂‖`.
    pub residual: f64,
}

/// Parameters that best explain each trial on its own.
pub fn fit_per_trial(
    model: ModelId,
    trials: &[ImpactTrial],
    bounds: &ParamBounds,
    settings: &OptimizerSettings,
) -> Result<Vec<PerTrialFit>> {
    bounds.validate()?;
    trials
        .par_iter()
        .map(|t| {
            let data = Prepared::new(std::iter::once(t))?;
            let fit = fit_prepared(model, &data, bounds, settings);
            Ok(PerTrialFit {
                trial_id: t.trial_id,
                params: fit.params,
                residual: fit.objective,
            })
        })
        .collect()
}

/// Objective values over a `(μ, ε)` grid, `values[i][j]` at `(mu[i], epsilon[j])`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSurface {
    pub model: ModelId,
    pub mu: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl ObjectiveSurface {
    /// Grid minimum as `(μ, ε, value)`.
    pub fn min(&self) -> Option<(f64, f64, f64)> {
        let mut best: Option<(f64, f64, f64)> = None;
        for (i, row) in self.values.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if best.is_none_or(|b| v < b.2) {
                    best = Some((self.mu[i], self.epsilon[j], v));
                }
            }
        }
        best
    }

    /// Long-format CSV with header `mu,epsilon,objective`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["mu", "epsilon", "objective"])?;
        for (i, row) in self.values.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                w.write_record([
                    self.mu[i].to_string(),
                    self.epsilon[j].to_string(),
                    v.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn objective_surface(
    model: ModelId,
    trials: &[ImpactTrial],
    mu: &[f64],
    epsilon: &[f64],
) -> Result<ObjectiveSurface> {
    for &m in mu {
        if !(0.0..=crate::models::MU_MAX).contains(&m) {
            return Err(Error::invalid(format!("grid friction value {m} out of range")));
        }
    }
    for &e in epsilon {
        if !(0.0..=1.0).contains(&e) {
            return Err(Error::invalid(format!("grid restitution value {e} out of range")));
        }
    }
    let data = Prepared::new(trials)?;
    let values = mu
        .par_iter()
        .map(|&m| epsilon.iter().map(|&e| data.objective(model, m, e)).collect())
        .collect();
    Ok(ObjectiveSurface {
        model,
        mu: mu.to_vec(),
        epsilon: epsilon.to_vec(),
        values,
    })
}

/// Evenly spaced grid over `bounds` for [`objective_surface`].
pub fn surface_axes(bounds: &ParamBounds, n_mu: usize, n_epsilon: usize) -> (Vec<f64>, Vec<f64>) {
    (
        axis(bounds.mu.0, bounds.mu.1, n_mu.max(1)),
        axis(bounds.epsilon.0, bounds.epsilon.1, n_epsilon.max(1)),
    )
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
