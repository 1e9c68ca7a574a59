//! Training/test corpus construction: sampling around the bifurcation,
//! integration, trimming, stacking and trajectory-level batching.

use ndarray::{s, Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{integrate, trim_transients, TimeGrid, Trajectory};
use crate::systems::System;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingSpec {
    /// Sampling center u_c (translated coordinates, usually 0).
    pub u_center: Vec<f64>,
    /// alpha_c, 0 after translation.
    pub alpha_center: f64,
    pub sigma_u: f64,
    pub sigma_alpha: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl SamplingSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sigma_u < 0.0 || self.sigma_alpha < 0.0 {
            return Err(Error::InvalidArgument("sigmas must be non-negative".into()));
        }
        if self.n_train == 0 {
            return Err(Error::InvalidArgument("n_train must be >= 1".into()));
        }
        Ok(())
    }
}

/// Stacked snapshot corpus. Trajectory j occupies the contiguous column range
/// j*t_kept .. (j+1)*t_kept of `u` and `u_dot`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    pub u: Array2<f64>,
    pub u_dot: Array2<f64>,
    /// One alpha per trajectory, broadcast per column at loss time.
    pub alpha: Vec<f64>,
    pub t_kept: usize,
    pub grid: TimeGrid,
}

impl TrajectorySet {
    pub fn state_dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn n_traj(&self) -> usize {
        self.alpha.len()
    }

    pub fn columns(&self) -> usize {
        self.u.ncols()
    }

    pub fn traj_range(&self, j: usize) -> std::ops::Range<usize> {
        j * self.t_kept..(j + 1) * self.t_kept
    }

    /// Un-stacks the set back into individual trimmed trajectories. The
    /// derivative columns are carried over; they were never finite-differenced.
    pub fn unstack(&self) -> Vec<Trajectory> {
        (0..self.n_traj())
            .map(|j| {
                let r = self.traj_range(j);
                Trajectory {
                    states: self.u.slice(s![.., r.clone()]).to_owned(),
                    derivs: self.u_dot.slice(s![.., r]).to_owned(),
                    alpha: self.alpha[j],
                    grid: self.grid,
                }
            })
            .collect()
    }

    fn from_trajectories_or_empty(trajs: &[Trajectory], dim: usize, t_kept: usize, grid: TimeGrid) -> Self {
        if trajs.is_empty() {
            return TrajectorySet {
                u: Array2::zeros((dim, 0)),
                u_dot: Array2::zeros((dim, 0)),
                alpha: Vec::new(),
                t_kept,
                grid,
            };
        }
        Self::from_trajectories(trajs)
    }

    pub fn from_trajectories(trajs: &[Trajectory]) -> Self {
        let t_kept = trajs[0].n_points();
        let dim = trajs[0].state_dim();
        let n = trajs.len();
        let mut u = Array2::zeros((dim, n * t_kept));
        let mut u_dot = Array2::zeros((dim, n * t_kept));
        let mut alpha = Vec::with_capacity(n);
        for (j, t) in trajs.iter().enumerate() {
            u.slice_mut(s![.., j * t_kept..(j + 1) * t_kept]).assign(&t.states);
            u_dot.slice_mut(s![.., j * t_kept..(j + 1) * t_kept]).assign(&t.derivs);
            alpha.push(t.alpha);
        }
        TrajectorySet { u, u_dot, alpha, t_kept, grid: trajs[0].grid }
    }
}

/// A batch of whole trajectories (a trajectory is never split).
#[derive(Debug, Clone)]
pub struct Batch {
    pub u: Array2<f64>,
    pub u_dot: Array2<f64>,
    pub alpha: Vec<f64>,
    pub t_kept: usize,
}

impl Batch {
    pub fn n_traj(&self) -> usize {
        self.alpha.len()
    }
}

/// n_train + n_test (u0, alpha0) pairs, componentwise uniform around the
/// centers; u-draws and alpha-draws are independent streams, deterministic
/// under the seed.
pub fn sample_initial_conditions(spec: &SamplingSpec) -> Result<Vec<(Array1<f64>, f64)>> {
    spec.validate()?;
    let total = spec.n_train + spec.n_test;
    let mut u_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut a_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9E3779B97F4A7C15);
    let mut out = Vec::with_capacity(total);
    for _ in 0..total {
        let u0: Array1<f64> = spec
            .u_center
            .iter()
            .map(|&c| c + spec.sigma_u * u_rng.gen_range(-1.0..=1.0))
            .collect();
        let a0 = spec.alpha_center + spec.sigma_alpha * a_rng.gen_range(-1.0..=1.0);
        out.push((u0, a0));
    }
    Ok(out)
}

fn integrate_batch(
    system: &System,
    ics: &[(Array1<f64>, f64)],
    grid: &TimeGrid,
    n_trim: usize,
) -> Vec<Result<Trajectory>> {
    ics.par_iter()
        .map(|(u0, a0)| {
            let rhs = |u: ndarray::ArrayView1<f64>, a: f64| system.rhs(u, a).unwrap();
            let traj = integrate(&rhs, u0.view(), *a0, grid)?;
            trim_transients(&traj, n_trim)
        })
        .collect()
}

const RESAMPLE_ROUNDS: usize = 50;

/// Integrates each sampled pair, trims, and stacks into train/test sets.
/// Trajectories that blow up are resampled so the final counts stay exact.
pub fn build_set(
    system: &System,
    spec: &SamplingSpec,
    grid: &TimeGrid,
    n_trim: usize,
) -> Result<(TrajectorySet, TrajectorySet)> {
    let ics = sample_initial_conditions(spec)?;
    if let System::NeuralField(t) = system {
        // warm the equilibrium cache single-threaded before parallel use
        for (_, a0) in &ics {
            t.equilibrium(*a0)?;
        }
    }
    let mut results = integrate_batch(system, &ics, grid, n_trim);
    let mut resample_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5851F42D4C957F2D);
    let mut attempted = results.len();
    for _ in 0..RESAMPLE_ROUNDS {
        let failed: Vec<usize> = results
            .iter()
            .enumerate()
            .filter(|(_, r)| r.is_err())
            .map(|(i, _)| i)
            .collect();
        if failed.is_empty() {
            break;
        }
        let replacements: Vec<(Array1<f64>, f64)> = failed
            .iter()
            .map(|_| {
                let u0: Array1<f64> = spec
                    .u_center
                    .iter()
                    .map(|&c| c + spec.sigma_u * resample_rng.gen_range(-1.0..=1.0))
                    .collect();
                let a0 =
                    spec.alpha_center + spec.sigma_alpha * resample_rng.gen_range(-1.0..=1.0);
                (u0, a0)
            })
            .collect();
        if let System::NeuralField(t) = system {
            for (_, a0) in &replacements {
                t.equilibrium(*a0)?;
            }
        }
        attempted += replacements.len();
        let retried = integrate_batch(system, &replacements, grid, n_trim);
        for (slot, r) in failed.into_iter().zip(retried) {
            results[slot] = r;
        }
    }
    let failed = results.iter().filter(|r| r.is_err()).count();
    if failed > 0 {
        return Err(Error::DatasetConstruction { failed, attempted });
    }
    let trajs: Vec<Trajectory> = results.into_iter().map(|r| r.unwrap()).collect();
    let train = TrajectorySet::from_trajectories(&trajs[..spec.n_train]);
    let test = TrajectorySet::from_trajectories_or_empty(
        &trajs[spec.n_train..],
        train.state_dim(),
        train.t_kept,
        train.grid,
    );
    Ok((train, test))
}

/// Trajectory-level batches, reshuffled per epoch; a trailing partial batch is
/// dropped, and the order is deterministic in (seed, epoch).
pub fn batches(
    set: &TrajectorySet,
    batch_size_trajectories: usize,
    seed: u64,
    epoch: usize,
) -> Result<Vec<Batch>> {
    let n = set.n_traj();
    if batch_size_trajectories == 0 || batch_size_trajectories > n {
        return Err(Error::InvalidArgument(format!(
            "batch size {batch_size_trajectories} incompatible with {n} trajectories"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng =
        ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9E3779B97F4A7C15));
    order.shuffle(&mut rng);
    let t = set.t_kept;
    let dim = set.state_dim();
    let mut out = Vec::new();
    for chunk in order.chunks(batch_size_trajectories) {
        if chunk.len() < batch_size_trajectories {
            break;
        }
        let mut u = Array2::zeros((dim, chunk.len() * t));
        let mut u_dot = Array2::zeros((dim, chunk.len() * t));
        let mut alpha = Vec::with_capacity(chunk.len());
        for (k, &j) in chunk.iter().enumerate() {
            let r = set.traj_range(j);
            u.slice_mut(s![.., k * t..(k + 1) * t]).assign(&set.u.slice(s![.., r.clone()]));
            u_dot.slice_mut(s![.., k * t..(k + 1) * t]).assign(&set.u_dot.slice(s![.., r]));
            alpha.push(set.alpha[j]);
        }
        out.push(Batch { u, u_dot, alpha, t_kept: t });
    }
    Ok(out)
}
