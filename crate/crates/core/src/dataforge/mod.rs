//! Synthetic impact data from a compliant contact simulator, and dataset I/O.

mod config;
mod io;
mod sim;

use std::collections::BTreeMap;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{BodyConfig, ContactConfig, GenConfig, InitialConfig, NoiseConfig, Range};
pub use io::{
    load_dataset, read_csv, read_json, save_dataset, write_csv, write_json, LoadedDataset,
    TrialRecord, CSV_HEADER,
};
pub use sim::{simulate_event, simulate_impact, RejectReason, SimulatedEvent};

use crate::error::{Error, Result};
use crate::dynamics::PlanarState;
use crate::trial::ImpactTrial;
use sim::Simulator;

/// Below this acceptance rate the configuration is considered broken.
pub const MIN_ACCEPTANCE_RATE: f64 = 0.1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenStats {
    pub attempted: usize,
    pub accepted: usize,
    pub rejected: BTreeMap<RejectReason, usize>,
}

impl GenStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.attempted == 0 {
            1.0
        } else {
            self.accepted as f64 / self.attempted as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedDataset {
    pub trials: Vec<ImpactTrial>,
    pub stats: GenStats,
}

/// Random initial state for candidate `index`, drawn from its own stream so
/// the result does not depend on scheduling.
fn candidate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Initial state of candidate `index`: lowest point on the floor, falling
/// at the speed reached from the sampled drop height.
pub fn sample_initial_state(config: &GenConfig, index: u64) -> Result<PlanarState> {
    let sim = Simulator::new(config)?;
    Ok(initial_state(&sim, config, &mut candidate_rng(config.seed, index)))
}

fn initial_state(sim: &Simulator<'_>, config: &GenConfig, rng: &mut ChaCha8Rng) -> PlanarState {
    let init = &config.initial;
    let h = init.drop_height.sample(rng.random());
    let vx = init.horizontal_velocity.sample(rng.random());
    let w = init.angular_velocity.sample(rng.random());
    let theta = init.orientation.sample(rng.random());
    let vy = -(2.0 * config.gravity * h).sqrt();
    sim.touching(0.0, theta, Vector3::new(vx, vy, w))
}

fn simulate_candidate(
    sim: &Simulator<'_>,
    config: &GenConfig,
    index: u64,
) -> std::result::Result<ImpactTrial, RejectReason> {
    let mut rng = candidate_rng(config.seed, index);
    let start = initial_state(sim, config, &mut rng);
    let out = sim.run(&start)?;
    let mut trial = sim.package(&out, index).trial;

    if !config.noise.is_zero() {
        let n = &config.noise;
        let mut jitter = |v: &mut Vector3<f64>| {
            for (x, s) in v.iter_mut().zip([n.vx, n.vy, n.omega]) {
                if s > 0.0 {
                    *x += Normal::new(0.0, s).expect("validated std").sample(&mut rng);
                }
            }
        };
        jitter(&mut trial.state_pre.v);
        jitter(&mut trial.state_post.v);
        if !trial.is_approaching() {
            return Err(RejectReason::NotApproaching);
        }
    }
    Ok(trial)
}

/// `config.n_trials` accepted trials with ids `0..n`.
///
/// Candidates are simulated in parallel batches and accepted in index order,
/// so the output is a pure function of the config.
pub fn generate_dataset(config: &GenConfig) -> Result<GeneratedDataset> {
    config.validate()?;
    let sim = Simulator::new(config)?;
    let n = config.n_trials;
    let max_attempts = ((n as f64 / MIN_ACCEPTANCE_RATE).ceil() as usize).max(n);
    let mut stats = GenStats::default();
    let mut trials = Vec::with_capacity(n);
    let mut next = 0usize;

    while trials.len() < n && next < max_attempts {
        let want = n - trials.len();
        let batch = (want + want / 4 + 8).min(max_attempts - next);
        let results: Vec<_> = (next..next + batch)
            .into_par_iter()
            .map(|i| simulate_candidate(&sim, config, i as u64))
            .collect();
        for r in results {
            if trials.len() == n {
                break;
            }
            stats.attempted += 1;
            match r {
                Ok(mut t) => {
                    t.trial_id = trials.len() as u64;
                    trials.push(t);
                }
                Err(reason) => *stats.rejected.entry(reason).or_default() += 1,
            }
        }
        next += batch;
    }
    stats.accepted = trials.len();
    log::info!(
        "generated {} trials from {} candidates ({:?})",
        stats.accepted,
        stats.attempted,
        stats.rejected
    );
    if trials.len() < n || stats.acceptance_rate() < MIN_ACCEPTANCE_RATE {
        return Err(Error::Config(format!(
            "acceptance rate {:.1}% is below {:.0}% ({} of {} candidates; rejections {:?})",
            100.0 * stats.acceptance_rate(),
            100.0 * MIN_ACCEPTANCE_RATE,
            stats.accepted,
            stats.attempted,
            stats.rejected
        )));
    }
    Ok(GeneratedDataset { trials, stats })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: usize, seed: u64) -> GenConfig {
        GenConfig {
            n_trials: n,
            seed,
            ..GenConfig::default()
        }
    }

    #[test]
    fn empty_request() {
        let ds = generate_dataset(&small(0, 1)).unwrap();
        assert!(ds.trials.is_empty());
        assert_eq!(ds.stats.attempted, 0);
    }

    #[test]
    fn ids_are_sequential_and_trials_valid() {
        let ds = generate_dataset(&small(20, 5)).unwrap();
        assert_eq!(ds.trials.len(), 20);
        for (i, t) in ds.trials.iter().enumerate() {
            assert_eq!(t.trial_id, i as u64);
            t.validate().unwrap();
            assert!(t.is_approaching());
            assert_eq!(t.state_pre.q, t.state_post.q);
        }
        assert_eq!(ds.stats.accepted, 20);
        assert_eq!(
            ds.stats.attempted,
            20 + ds.stats.rejected.values().sum::<usize>()
        );
    }

    #[test]
    fn same_seed_same_data() {
        let a = generate_dataset(&small(12, 9)).unwrap();
        let b = generate_dataset(&small(12, 9)).unwrap();
        assert_eq!(a, b);
        let c = generate_dataset(&small(12, 10)).unwrap();
        assert_ne!(a.trials, c.trials);
    }

    #[test]
    fn prefix_stable_in_n() {
        let a = generate_dataset(&small(6, 3)).unwrap();
        let b = generate_dataset(&small(15, 3)).unwrap();
        assert_eq!(a.trials[..], b.trials[..6]);
    }

    #[test]
    fn hopeless_config_is_an_error() {
        let mut cfg = small(10, 0);
        // Resting on the floor: nothing ever approaches it.
        cfg.initial.drop_height = Range(0.0, 0.0);
        cfg.initial.horizontal_velocity = Range(0.0, 0.0);
        cfg.initial.angular_velocity = Range(0.0, 0.0);
        assert!(matches!(generate_dataset(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn noise_is_applied() {
        let clean = generate_dataset(&small(10, 2)).unwrap();
        let mut cfg = small(10, 2);
        cfg.noise = NoiseConfig {
            vx: 0.01,
            vy: 0.01,
            omega: 0.1,
        };
        let noisy = generate_dataset(&cfg).unwrap();
        let d = (noisy.trials[0].state_post.v - clean.trials[0].state_post.v).norm();
        assert!(d > 0.0 && d < 1.0);
    }
}
