//! The normal-form autoencoder: state and parameter autoencoders coupled
//! through a six-term loss that constrains the latent dynamics to a scaled
//! normal form, plus the ADAM training loop.

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::dataset::{batches, Batch, TrajectorySet};
use crate::error::{Error, Result};
use crate::mlp::{Activation, AdamState, Mlp};
use crate::normal_forms::{NormalForm, NormalFormKind};

/// Smoothing width of the differentiable sign surrogate in the orientation
/// loss.
pub const SIGN_EPSILON: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    pub lambda5: f64,
    pub lambda6: f64,
}

impl LossWeights {
    pub fn new(l: [f64; 6]) -> Result<Self> {
        if l.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument("loss weights must be finite and >= 0".into()));
        }
        Ok(LossWeights {
            lambda1: l[0],
            lambda2: l[1],
            lambda3: l[2],
            lambda4: l[3],
            lambda5: l[4],
            lambda6: l[5],
        })
    }

    pub fn lorenz96() -> Self {
        Self::new([1.0, 1e-2, 1e-3, 1e-3, 0.0, 1e-1]).unwrap()
    }

    pub fn neural_field() -> Self {
        Self::new([1.0, 1e-2, 1e-4, 0.0, 1e-3, 0.0]).unwrap()
    }

    pub fn navier_stokes_pod() -> Self {
        Self::new([1.0, 1.0, 1e-4, 1e-4, 0.0, 1e-1]).unwrap()
    }
}

/// Weighted loss terms; `total` is their sum. `l6_hard` is the monitoring
/// value of the orientation term with the non-smoothed sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub l4: f64,
    pub l5: f64,
    pub l6: f64,
    pub total: f64,
    pub l6_hard: f64,
}

impl LossReport {
    fn check_finite(&self) -> Result<()> {
        for (i, v) in [self.l1, self.l2, self.l3, self.l4, self.l5, self.l6]
            .into_iter()
            .enumerate()
        {
            if !v.is_finite() {
                return Err(Error::TrainingDivergence { term: i + 1, iteration: 0 });
            }
        }
        Ok(())
    }
}

/// The four networks plus the time scale. tau is stored as log_tau so the
/// trained value stays positive.
#[derive(Debug, Clone)]
pub struct NfAutoencoder {
    pub phi1: Mlp,
    pub psi1: Mlp,
    pub phi2: Mlp,
    pub psi2: Mlp,
    pub kind: NormalFormKind,
    pub omega: f64,
    pub log_tau: f64,
    pub tau_trainable: bool,
    /// +1 or -1: the sign the orientation loss matches beta against alpha.
    pub orientation: f64,
}

impl NfAutoencoder {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        phi1: Mlp,
        psi1: Mlp,
        phi2: Mlp,
        psi2: Mlp,
        kind: NormalFormKind,
        omega: f64,
        tau: f64,
        tau_trainable: bool,
        orientation: f64,
    ) -> Result<Self> {
        let nf = NormalForm::new(kind, omega, tau)?;
        let latent = nf.dim();
        if phi1.out_dim() != latent || psi1.in_dim() != latent {
            return Err(Error::InvalidArgument(format!(
                "latent dimension {latent} does not match phi1 out {} / psi1 in {}",
                phi1.out_dim(),
                psi1.in_dim()
            )));
        }
        if phi1.in_dim() != psi1.out_dim() {
            return Err(Error::InvalidArgument("psi1 must invert phi1's shape".into()));
        }
        if phi2.in_dim() != 1 || phi2.out_dim() != 1 || psi2.in_dim() != 1 || psi2.out_dim() != 1 {
            return Err(Error::InvalidArgument("phi2/psi2 must be scalar maps".into()));
        }
        if orientation != 1.0 && orientation != -1.0 {
            return Err(Error::InvalidArgument("orientation must be +1 or -1".into()));
        }
        Ok(NfAutoencoder {
            phi1,
            psi1,
            phi2,
            psi2,
            kind,
            omega,
            log_tau: tau.ln(),
            tau_trainable,
            orientation,
        })
    }

    /// Convenience constructor from hidden-layer lists.
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        state_dim: usize,
        kind: NormalFormKind,
        omega: f64,
        tau: f64,
        tau_trainable: bool,
        orientation: f64,
        phi1_hidden: &[usize],
        psi1_hidden: &[usize],
        phi2_hidden: &[usize],
        psi2_hidden: &[usize],
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        let latent = NormalForm::new(kind, omega, tau)?.dim();
        let sizes = |i: usize, h: &[usize], o: usize| -> Vec<usize> {
            let mut v = vec![i];
            v.extend_from_slice(h);
            v.push(o);
            v
        };
        let phi1 = Mlp::init(&sizes(state_dim, phi1_hidden, latent), activation, seed)?;
        let psi1 = Mlp::init(&sizes(latent, psi1_hidden, state_dim), activation, seed + 1)?;
        let phi2 = Mlp::init(&sizes(1, phi2_hidden, 1), activation, seed + 2)?;
        let psi2 = Mlp::init(&sizes(1, psi2_hidden, 1), activation, seed + 3)?;
        Self::new(phi1, psi1, phi2, psi2, kind, omega, tau, tau_trainable, orientation)
    }

    pub fn tau(&self) -> f64 {
        self.log_tau.exp()
    }

    pub fn nf(&self) -> NormalForm {
        NormalForm { kind: self.kind, omega: self.omega, tau: self.tau() }
    }

    pub fn latent_dim(&self) -> usize {
        self.nf().dim()
    }

    pub fn n_params(&self) -> usize {
        self.phi1.n_params() + self.psi1.n_params() + self.phi2.n_params() + self.psi2.n_params()
            + 1
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        self.phi1.push_flat(&mut out);
        self.psi1.push_flat(&mut out);
        self.phi2.push_flat(&mut out);
        self.psi2.push_flat(&mut out);
        out.push(self.log_tau);
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) {
        let mut k = 0;
        k += self.phi1.read_flat(&flat[k..]);
        k += self.psi1.read_flat(&flat[k..]);
        k += self.phi2.read_flat(&flat[k..]);
        k += self.psi2.read_flat(&flat[k..]);
        self.log_tau = flat[k];
    }

    /// Z = phi1(U), beta = phi2(alpha) with one beta per trajectory.
    pub fn encode(&self, u: &Array2<f64>, alpha: &[f64]) -> Result<(Array2<f64>, Vec<f64>)> {
        let z = self.phi1.forward(u)?;
        let a = Array2::from_shape_vec((1, alpha.len()), alpha.to_vec()).unwrap();
        let beta = self.phi2.forward(&a)?;
        Ok((z, beta.row(0).to_vec()))
    }

    /// Z_dot via the chain rule: (grad_u phi1) u_dot.
    pub fn latent_derivative(&self, u: &Array2<f64>, u_dot: &Array2<f64>) -> Result<Array2<f64>> {
        self.phi1.jvp_input(u, u_dot)
    }

    /// Reconstruction psi1(phi1(U)).
    pub fn reconstruct(&self, u: &Array2<f64>) -> Result<Array2<f64>> {
        self.psi1.forward(&self.phi1.forward(u)?)
    }

    // -- batched scaled normal form ------------------------------------

    /// G[:, k] = g(Z[:, k], beta_col[k]) / tau^2, vectorized per kind.
    fn batch_field(&self, z: &Array2<f64>, beta_col: &[f64]) -> Array2<f64> {
        let c = z.ncols();
        let inv_t2 = (-2.0 * self.log_tau).exp();
        let mut g = Array2::zeros((z.nrows(), c));
        match self.kind {
            NormalFormKind::SaddleNode => {
                for k in 0..c {
                    let zv = z[[0, k]];
                    g[[0, k]] = (beta_col[k] - zv * zv) * inv_t2;
                }
            }
            NormalFormKind::Transcritical => {
                for k in 0..c {
                    let zv = z[[0, k]];
                    g[[0, k]] = zv * (beta_col[k] - zv) * inv_t2;
                }
            }
            NormalFormKind::Pitchfork => {
                for k in 0..c {
                    let zv = z[[0, k]];
                    g[[0, k]] = zv * (beta_col[k] - zv * zv) * inv_t2;
                }
            }
            NormalFormKind::Hopf => {
                let w = self.omega;
                for k in 0..c {
                    let (z1, z2) = (z[[0, k]], z[[1, k]]);
                    let r2 = z1 * z1 + z2 * z2;
                    let b = beta_col[k];
                    g[[0, k]] = (b * z1 - w * z2 - z1 * r2) * inv_t2;
                    g[[1, k]] = (w * z1 + b * z2 - z2 * r2) * inv_t2;
                }
            }
        }
        g
    }

    /// Pulls an upstream gradient on G back onto Z and beta:
    /// dZ[:, k] = (dg/dz)^T dG[:, k], dbeta_col[k] = (dg/dbeta) . dG[:, k].
    fn batch_field_backward(
        &self,
        z: &Array2<f64>,
        beta_col: &[f64],
        dg: &Array2<f64>,
    ) -> (Array2<f64>, Vec<f64>) {
        let c = z.ncols();
        let inv_t2 = (-2.0 * self.log_tau).exp();
        let mut dz = Array2::zeros(z.raw_dim());
        let mut dbeta = vec![0.0; c];
        match self.kind {
            NormalFormKind::SaddleNode => {
                for k in 0..c {
                    dz[[0, k]] = -2.0 * z[[0, k]] * inv_t2 * dg[[0, k]];
                    dbeta[k] = inv_t2 * dg[[0, k]];
                }
            }
            NormalFormKind::Transcritical => {
                for k in 0..c {
                    let zv = z[[0, k]];
                    dz[[0, k]] = (beta_col[k] - 2.0 * zv) * inv_t2 * dg[[0, k]];
                    dbeta[k] = zv * inv_t2 * dg[[0, k]];
                }
            }
            NormalFormKind::Pitchfork => {
                for k in 0..c {
                    let zv = z[[0, k]];
                    dz[[0, k]] = (beta_col[k] - 3.0 * zv * zv) * inv_t2 * dg[[0, k]];
                    dbeta[k] = zv * inv_t2 * dg[[0, k]];
                }
            }
            NormalFormKind::Hopf => {
                let w = self.omega;
                for k in 0..c {
                    let (z1, z2) = (z[[0, k]], z[[1, k]]);
                    let r2 = z1 * z1 + z2 * z2;
                    let b = beta_col[k];
                    let (d1, d2) = (dg[[0, k]], dg[[1, k]]);
                    dz[[0, k]] =
                        ((b - r2 - 2.0 * z1 * z1) * d1 + (w - 2.0 * z1 * z2) * d2) * inv_t2;
                    dz[[1, k]] =
                        ((-w - 2.0 * z1 * z2) * d1 + (b - r2 - 2.0 * z2 * z2) * d2) * inv_t2;
                    dbeta[k] = (z1 * d1 + z2 * d2) * inv_t2;
                }
            }
        }
        (dz, dbeta)
    }

    /// All six weighted loss terms plus exact gradients with respect to every
    /// network parameter and log(tau) as a flat vector (tau slot last).
    pub fn compute_losses(
        &self,
        batch: &Batch,
        weights: &LossWeights,
    ) -> Result<(LossReport, Vec<f64>)> {
        let n = batch.n_traj();
        let t_f = batch.t_kept;
        let c = n * t_f;
        if batch.u.ncols() != c {
            return Err(Error::DimensionMismatch { expected: c, got: batch.u.ncols() });
        }

        let a_row = Array2::from_shape_vec((1, n), batch.alpha.clone()).unwrap();
        let beta = self.phi2.forward(&a_row)?; // 1 x n
        let beta_col: Vec<f64> = (0..c).map(|k| beta[[0, k / t_f]]).collect();

        let z = self.phi1.forward(&batch.u)?;
        let z_dot = self.phi1.jvp_input(&batch.u, &batch.u_dot)?;
        let g = self.batch_field(&z, &beta_col);

        // L1: state reconstruction
        let u_hat = self.psi1.forward(&z)?;
        let r1 = &batch.u - &u_hat;
        let l1 = weights.lambda1 * r1.iter().map(|v| v * v).sum::<f64>() / c as f64;
        let up_psi1 = r1.mapv(|v| -2.0 * weights.lambda1 / c as f64 * v);
        let (mut g_psi1, dz_recon) = self.psi1.backward(&z, &up_psi1)?;

        // L2: parameter reconstruction (per trajectory; the per-column sum
        // repeats each trajectory t_f times, cancelling to 1/n)
        let a_hat = self.psi2.forward(&beta)?;
        let r2 = &a_row - &a_hat;
        let l2 = weights.lambda2 * r2.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let up_psi2 = r2.mapv(|v| -2.0 * weights.lambda2 / n as f64 * v);
        let (g_psi2, dbeta_recon) = self.psi2.backward(&beta, &up_psi2)?;

        // L3: latent consistency
        let r3 = &z_dot - &g;
        let l3 = weights.lambda3 * r3.iter().map(|v| v * v).sum::<f64>() / c as f64;
        let up3 = r3.mapv(|v| 2.0 * weights.lambda3 / c as f64 * v);
        let (g_phi1_jvp, _, _) = self.phi1.backward_through_jvp(&batch.u, &batch.u_dot, &up3)?;
        let mut dg = up3.mapv(|v| -v);

        // L4: reconstruction consistency
        let u_dot_hat = self.psi1.jvp_input(&z, &g)?;
        let r4 = &batch.u_dot - &u_dot_hat;
        let l4 = weights.lambda4 * r4.iter().map(|v| v * v).sum::<f64>() / c as f64;
        let up4 = r4.mapv(|v| -2.0 * weights.lambda4 / c as f64 * v);
        let (g_psi1_jvp, dz_psi1_x, dg4) = self.psi1.backward_through_jvp(&z, &g, &up4)?;
        g_psi1.add_assign(&g_psi1_jvp);
        dg += &dg4;

        // tau gradient: G = exp(-2 log_tau) g_unscaled
        let mut d_log_tau = -2.0 * (&dg * &g).sum();

        // pull dG back onto Z and beta
        let (dz_field, dbeta_field_col) = self.batch_field_backward(&z, &beta_col, &dg);

        // L5: latent time-mean centering (l1 norm per trajectory)
        let latent = self.latent_dim();
        let mut l5_raw = 0.0;
        let mut dz_mean = Array2::zeros(z.raw_dim());
        for j in 0..n {
            let cols = j * t_f..(j + 1) * t_f;
            let m = z.slice(s![.., cols.clone()]).mean_axis(ndarray::Axis(1)).unwrap();
            for i in 0..latent {
                l5_raw += m[i].abs();
                let gsign = weights.lambda5 / n as f64 * m[i].signum() / t_f as f64;
                for k in cols.clone() {
                    dz_mean[[i, k]] = gsign;
                }
            }
        }
        let l5 = weights.lambda5 * l5_raw / n as f64;

        // L6: orientation, with a smooth tanh surrogate for sgn(beta)
        let o = self.orientation;
        let mut l6_raw = 0.0;
        let mut l6_hard_raw = 0.0;
        let mut dbeta6 = vec![0.0; n];
        for j in 0..n {
            let sa = sign_hard(batch.alpha[j]);
            let th = (beta[[0, j]] / SIGN_EPSILON).tanh();
            let v = sa - o * th;
            l6_raw += v.abs();
            l6_hard_raw += (sa - o * sign_hard(beta[[0, j]])).abs();
            dbeta6[j] =
                weights.lambda6 / n as f64 * v.signum() * (-o) * (1.0 - th * th) / SIGN_EPSILON;
        }
        let l6 = weights.lambda6 * l6_raw / n as f64;
        let l6_hard = weights.lambda6 * l6_hard_raw / n as f64;

        let report = LossReport {
            l1,
            l2,
            l3,
            l4,
            l5,
            l6,
            total: l1 + l2 + l3 + l4 + l5 + l6,
            l6_hard,
        };
        report.check_finite()?;

        // accumulate phi1 gradients through its output Z
        let dz_total = &dz_recon + &dz_field + &dz_psi1_x + &dz_mean;
        let (mut g_phi1, _) = self.phi1.backward(&batch.u, &dz_total)?;
        g_phi1.add_assign(&g_phi1_jvp);

        // accumulate phi2 gradients through beta (scatter column terms per
        // trajectory)
        let mut dbeta_total = dbeta_recon.clone();
        for k in 0..c {
            dbeta_total[[0, k / t_f]] += dbeta_field_col[k];
        }
        for j in 0..n {
            dbeta_total[[0, j]] += dbeta6[j];
        }
        let (g_phi2, _) = self.phi2.backward(&a_row, &dbeta_total)?;

        if !self.tau_trainable {
            d_log_tau = 0.0;
        }

        let mut flat = Vec::with_capacity(self.n_params());
        g_phi1.push_flat(&mut flat);
        g_psi1.push_flat(&mut flat);
        g_phi2.push_flat(&mut flat);
        g_psi2.push_flat(&mut flat);
        flat.push(d_log_tau);
        Ok((report, flat))
    }

    /// Total loss only, convenient for probes and finite-difference oracles.
    pub fn loss_total(&self, batch: &Batch, weights: &LossWeights) -> Result<f64> {
        Ok(self.compute_losses(batch, weights)?.0.total)
    }
}

fn sign_hard(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// tau = sqrt(T_alpha / T_beta) from period estimates.
pub fn estimate_tau(data_period: f64, nf_period: f64) -> Result<f64> {
    if !(data_period > 0.0 && nf_period > 0.0) {
        return Err(Error::InvalidArgument("periods must be positive".into()));
    }
    Ok((data_period / nf_period).sqrt())
}

/// One loss-history row per training iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iteration: usize,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub l4: f64,
    pub l5: f64,
    pub l6: f64,
    pub total: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub rows: Vec<HistoryRow>,
}

impl TrainHistory {
    fn push(&mut self, iteration: usize, r: &LossReport, tau: f64) {
        self.rows.push(HistoryRow {
            iteration,
            l1: r.l1,
            l2: r.l2,
            l3: r.l3,
            l4: r.l4,
            l5: r.l5,
            l6: r.l6,
            total: r.total,
            tau,
        });
    }
}

/// Training outcome: the history always survives, divergence is reported
/// alongside it.
#[derive(Debug)]
pub struct TrainOutcome {
    pub history: TrainHistory,
    pub error: Option<Error>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub eta: f64,
    pub seed: u64,
}

/// Runs epochs x batches ADAM steps over all parameters (and tau when
/// trainable); deterministic per seed.
pub fn train(
    model: &mut NfAutoencoder,
    train_set: &TrajectorySet,
    weights: &LossWeights,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let mut params = model.params_flat();
    let mut adam = AdamState::new(params.len(), cfg.eta);
    let mut history = TrainHistory::default();
    let mut iteration = 0;
    for epoch in 0..cfg.epochs {
        let epoch_batches = batches(train_set, cfg.batch_size, cfg.seed, epoch)?;
        for batch in &epoch_batches {
            match model.compute_losses(batch, weights) {
                Ok((report, grads)) => {
                    history.push(iteration, &report, model.tau());
                    adam.step(&mut params, &grads)?;
                    model.set_params_flat(&params);
                }
                Err(Error::TrainingDivergence { term, .. }) => {
                    return Ok(TrainOutcome {
                        history,
                        error: Some(Error::TrainingDivergence { term, iteration }),
                    });
                }
                Err(e) => return Err(e),
            }
            iteration += 1;
        }
    }
    Ok(TrainOutcome { history, error: None })
}
