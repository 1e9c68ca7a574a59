//! Canonical normal-form vector fields used to constrain the latent space.
//!
//! The four supported bifurcations are saddle-node, transcritical, pitchfork
//! (all scalar) and Hopf (two real coordinates). Every field is also available
//! in a time-scaled variant g/tau^2, which is what the latent dynamics are
//! matched against.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{integrate, TimeGrid, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalFormKind {
    SaddleNode,
    Transcritical,
    Pitchfork,
    Hopf,
}

/// A target normal form g(z, beta) together with its time scale tau.
///
/// The Hopf field is supercritical: the cubic term is -z|z|^2, so for
/// beta > 0 a stable limit cycle of radius sqrt(beta) exists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalForm {
    pub kind: NormalFormKind,
    /// Rotation frequency, used by the Hopf field only.
    #[serde(default = "default_omega")]
    pub omega: f64,
    /// Time scale; the scaled field is g/tau^2.
    #[serde(default = "default_tau")]
    pub tau: f64,
}

fn default_omega() -> f64 {
    1.0
}

fn default_tau() -> f64 {
    1.0
}

impl NormalForm {
    pub fn new(kind: NormalFormKind, omega: f64, tau: f64) -> Result<Self> {
        let nf = NormalForm { kind, omega, tau };
        nf.validate()?;
        Ok(nf)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "tau must be positive and finite, got {}",
                self.tau
            )));
        }
        if self.kind == NormalFormKind::Hopf && !(self.omega.is_finite() && self.omega != 0.0) {
            return Err(Error::InvalidArgument(format!(
                "Hopf omega must be finite and nonzero, got {}",
                self.omega
            )));
        }
        Ok(())
    }

    /// Latent dimension: 1 for the scalar kinds, 2 for Hopf.
    pub fn dim(&self) -> usize {
        match self.kind {
            NormalFormKind::Hopf => 2,
            _ => 1,
        }
    }

    fn check_dim(&self, z: ArrayView1<f64>) -> Result<()> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: z.len(),
            });
        }
        Ok(())
    }

    /// The un-scaled field g(z, beta).
    pub fn eval_rhs(&self, z: ArrayView1<f64>, beta: f64) -> Result<Array1<f64>> {
        self.check_dim(z)?;
        Ok(match self.kind {
            NormalFormKind::SaddleNode => Array1::from(vec![beta - z[0] * z[0]]),
            NormalFormKind::Transcritical => Array1::from(vec![z[0] * (beta - z[0])]),
            NormalFormKind::Pitchfork => Array1::from(vec![z[0] * (beta - z[0] * z[0])]),
            NormalFormKind::Hopf => {
                let (z1, z2) = (z[0], z[1]);
                let r2 = z1 * z1 + z2 * z2;
                let w = self.omega;
                Array1::from(vec![
                    beta * z1 - w * z2 - z1 * r2,
                    w * z1 + beta * z2 - z2 * r2,
                ])
            }
        })
    }

    /// The time-scaled field g(z, beta) / tau^2.
    pub fn eval_rhs_scaled(&self, z: ArrayView1<f64>, beta: f64) -> Result<Array1<f64>> {
        let mut g = self.eval_rhs(z, beta)?;
        g.mapv_inplace(|v| v / (self.tau * self.tau));
        Ok(g)
    }

    /// Jacobian d(g/tau^2)/dz of the scaled field.
    pub fn eval_rhs_grad_z(&self, z: ArrayView1<f64>, beta: f64) -> Result<Array2<f64>> {
        self.check_dim(z)?;
        let t2 = self.tau * self.tau;
        Ok(match self.kind {
            NormalFormKind::SaddleNode => {
                Array2::from_shape_vec((1, 1), vec![-2.0 * z[0] / t2]).unwrap()
            }
            NormalFormKind::Transcritical => {
                Array2::from_shape_vec((1, 1), vec![(beta - 2.0 * z[0]) / t2]).unwrap()
            }
            NormalFormKind::Pitchfork => {
                Array2::from_shape_vec((1, 1), vec![(beta - 3.0 * z[0] * z[0]) / t2]).unwrap()
            }
            NormalFormKind::Hopf => {
                let (z1, z2) = (z[0], z[1]);
                let r2 = z1 * z1 + z2 * z2;
                let w = self.omega;
                Array2::from_shape_vec(
                    (2, 2),
                    vec![
                        (beta - r2 - 2.0 * z1 * z1) / t2,
                        (-w - 2.0 * z1 * z2) / t2,
                        (w - 2.0 * z1 * z2) / t2,
                        (beta - r2 - 2.0 * z2 * z2) / t2,
                    ],
                )
                .unwrap()
            }
        })
    }

    /// Gradient d(g/tau^2)/dbeta of the scaled field.
    pub fn eval_rhs_grad_beta(&self, z: ArrayView1<f64>, _beta: f64) -> Result<Array1<f64>> {
        self.check_dim(z)?;
        let t2 = self.tau * self.tau;
        Ok(match self.kind {
            NormalFormKind::SaddleNode => Array1::from(vec![1.0 / t2]),
            NormalFormKind::Transcritical | NormalFormKind::Pitchfork => {
                Array1::from(vec![z[0] / t2])
            }
            NormalFormKind::Hopf => Array1::from(vec![z[0] / t2, z[1] / t2]),
        })
    }

    /// Integrates the scaled normal form from `n_traj` initial values drawn
    /// uniformly in `z0_center +- spread` componentwise.
    pub fn simulate_ensemble(
        &self,
        z0_center: ArrayView1<f64>,
        beta: f64,
        n_traj: usize,
        spread: f64,
        grid: &TimeGrid,
        seed: u64,
    ) -> Result<Vec<Trajectory>> {
        self.check_dim(z0_center)?;
        if n_traj == 0 {
            return Err(Error::InvalidArgument("n_traj must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rhs = |z: ArrayView1<f64>, b: f64| self.eval_rhs_scaled(z, b).unwrap();
        let mut out = Vec::with_capacity(n_traj);
        for k in 0..n_traj {
            let z0: Array1<f64> = z0_center.mapv(|c| c + spread * rng.gen_range(-1.0..=1.0));
            match integrate(&rhs, z0.view(), beta, grid) {
                Ok(traj) => out.push(traj),
                Err(Error::Blowup { index, .. }) => {
                    return Err(Error::Blowup {
                        index,
                        trajectory: k,
                    })
                }
                Err(e) => return Err(e),
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;

    fn nf(kind: NormalFormKind) -> NormalForm {
        NormalForm::new(kind, 1.0, 1.0).unwrap()
    }

    #[test]
    fn pitchfork_equilibrium() {
        let g = nf(NormalFormKind::Pitchfork)
            .eval_rhs(array![1.0].view(), 1.0)
            .unwrap();
        assert_eq!(g, array![0.0]);
    }

    #[test]
    fn hopf_field_value() {
        let g = nf(NormalFormKind::Hopf)
            .eval_rhs(array![1.0, 0.0].view(), 0.0)
            .unwrap();
        assert_relative_eq!(g[0], -1.0);
        assert_relative_eq!(g[1], 1.0);
    }

    #[test]
    fn saddle_node_at_origin() {
        let g = nf(NormalFormKind::SaddleNode)
            .eval_rhs(array![0.0].view(), 0.5)
            .unwrap();
        assert_relative_eq!(g[0], 0.5);
    }

    #[test]
    fn scaled_field_examples() {
        let sn = NormalForm::new(NormalFormKind::SaddleNode, 1.0, 2.0).unwrap();
        let g = sn.eval_rhs_scaled(array![0.0].view(), 1.0).unwrap();
        assert_relative_eq!(g[0], 0.25);

        let hopf = NormalForm::new(NormalFormKind::Hopf, 1.0, std::f64::consts::SQRT_2).unwrap();
        let g = hopf.eval_rhs_scaled(array![1.0, 0.0].view(), 0.0).unwrap();
        assert_relative_eq!(g[0], -0.5, epsilon = 1e-12);
        assert_relative_eq!(g[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn grad_z_examples() {
        let j = nf(NormalFormKind::SaddleNode)
            .eval_rhs_grad_z(array![0.0].view(), 0.0)
            .unwrap();
        assert_relative_eq!(j[[0, 0]], 0.0);

        let j = nf(NormalFormKind::Pitchfork)
            .eval_rhs_grad_z(array![1.0].view(), 1.0)
            .unwrap();
        assert_relative_eq!(j[[0, 0]], -2.0);

        let hopf = NormalForm::new(NormalFormKind::Hopf, 1.0, 1.0).unwrap();
        let j = hopf.eval_rhs_grad_z(array![0.0, 0.0].view(), 0.3).unwrap();
        assert_relative_eq!(j[[0, 0]], 0.3);
        assert_relative_eq!(j[[0, 1]], -1.0);
        assert_relative_eq!(j[[1, 0]], 1.0);
        assert_relative_eq!(j[[1, 1]], 0.3);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert!(nf(NormalFormKind::Hopf)
            .eval_rhs(array![1.0].view(), 0.0)
            .is_err());
        assert!(nf(NormalFormKind::Pitchfork)
            .eval_rhs(array![1.0, 2.0].view(), 0.0)
            .is_err());
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(NormalForm::new(NormalFormKind::Pitchfork, 1.0, 0.0).is_err());
        assert!(NormalForm::new(NormalFormKind::Hopf, 0.0, 1.0).is_err());
        assert!(NormalForm::new(NormalFormKind::Hopf, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn grad_z_matches_finite_differences() {
        let kinds = [
            NormalFormKind::SaddleNode,
            NormalFormKind::Transcritical,
            NormalFormKind::Pitchfork,
            NormalFormKind::Hopf,
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = 1e-6;
        for i in 0..100 {
            let kind = kinds[i % kinds.len()];
            let f = NormalForm::new(kind, 1.3, 0.9).unwrap();
            let z: Array1<f64> = (0..f.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let beta = rng.gen_range(-1.0..1.0);
            let jac = f.eval_rhs_grad_z(z.view(), beta).unwrap();
            for j in 0..f.dim() {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[j] += h;
                zm[j] -= h;
                let gp = f.eval_rhs_scaled(zp.view(), beta).unwrap();
                let gm = f.eval_rhs_scaled(zm.view(), beta).unwrap();
                for i_out in 0..f.dim() {
                    let fd = (gp[i_out] - gm[i_out]) / (2.0 * h);
                    let an = jac[[i_out, j]];
                    let scale = an.abs().max(fd.abs()).max(1.0);
                    assert!(
                        (fd - an).abs() / scale < 1e-6,
                        "{kind:?} d g[{i_out}]/dz[{j}]: fd={fd} analytic={an}"
                    );
                }
            }
        }
    }

    #[test]
    fn hopf_rotation_equivariance() {
        let f = NormalForm::new(NormalFormKind::Hopf, 1.7, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let z = array![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let beta: f64 = rng.gen_range(-0.5..0.5);
            let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let (c, s) = (th.cos(), th.sin());
            let rz = array![c * z[0] - s * z[1], s * z[0] + c * z[1]];
            let g_rz = f.eval_rhs(rz.view(), beta).unwrap();
            let g_z = f.eval_rhs(z.view(), beta).unwrap();
            let rg_z = array![c * g_z[0] - s * g_z[1], s * g_z[0] + c * g_z[1]];
            assert_relative_eq!(g_rz[0], rg_z[0], epsilon = 1e-12);
            assert_relative_eq!(g_rz[1], rg_z[1], epsilon = 1e-12);
        }
    }

    #[test]
    fn hopf_limit_cycle_radius() {
        // supercritical: r -> sqrt(beta) for 0 < r(0) < 2 sqrt(beta)
        let f = NormalForm::new(NormalFormKind::Hopf, 1.0, 1.0).unwrap();
        let grid = TimeGrid::new(0.0, 200.0, 4001).unwrap();
        for beta in [0.25f64, 0.1] {
            let r_target = beta.sqrt();
            for r0 in [0.05, 1.5 * r_target] {
                let rhs = |z: ArrayView1<f64>, b: f64| f.eval_rhs_scaled(z, b).unwrap();
                let traj = integrate(&rhs, array![r0, 0.0].view(), beta, &grid).unwrap();
                let last = traj.states.column(traj.states.ncols() - 1);
                let r = (last[0] * last[0] + last[1] * last[1]).sqrt();
                assert!((r - r_target).abs() < 0.01, "beta={beta} r0={r0} r={r}");
            }
        }
    }

    #[test]
    fn ensemble_examples() {
        let grid = TimeGrid::new(0.0, 5.0, 101).unwrap();
        // pitchfork from the origin with zero spread stays at zero
        let f = nf(NormalFormKind::Pitchfork);
        let trajs = f
            .simulate_ensemble(array![0.0].view(), 0.5, 5, 0.0, &grid, 1)
            .unwrap();
        for t in &trajs {
            assert!(t.states.iter().all(|&v| v == 0.0));
        }
        // saddle node with beta < 0 escapes downward and is reported as a blowup
        let f = nf(NormalFormKind::SaddleNode);
        let long = TimeGrid::new(0.0, 50.0, 5001).unwrap();
        let err = f
            .simulate_ensemble(array![2.0].view(), -1.0, 1, 0.0, &long, 1)
            .unwrap_err();
        assert!(matches!(err, Error::Blowup { .. }));
    }

    #[test]
    fn ensemble_deterministic() {
        let grid = TimeGrid::new(0.0, 1.0, 11).unwrap();
        let f = NormalForm::new(NormalFormKind::Hopf, 1.0, 1.0).unwrap();
        let a = f
            .simulate_ensemble(array![0.3, 0.0].view(), 0.2, 4, 0.1, &grid, 42)
            .unwrap();
        let b = f
            .simulate_ensemble(array![0.3, 0.0].view(), 0.2, 4, 0.1, &grid, 42)
            .unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.states, y.states);
        }
    }

    proptest! {
        #[test]
        fn scaled_equals_unscaled_over_tau_squared(
            tau in 0.2f64..3.0,
            beta in -1.0f64..1.0,
            z1 in -1.0f64..1.0,
            z2 in -1.0f64..1.0,
            kind_idx in 0usize..4,
        ) {
            let kinds = [
                NormalFormKind::SaddleNode,
                NormalFormKind::Transcritical,
                NormalFormKind::Pitchfork,
                NormalFormKind::Hopf,
            ];
            let f = NormalForm::new(kinds[kind_idx], 1.0, tau).unwrap();
            let z = if f.dim() == 1 { array![z1] } else { array![z1, z2] };
            let g = f.eval_rhs(z.view(), beta).unwrap();
            let gs = f.eval_rhs_scaled(z.view(), beta).unwrap();
            for i in 0..f.dim() {
                prop_assert!((gs[i] - g[i] / (tau * tau)).abs() < 1e-12);
            }
        }

        #[test]
        fn pitchfork_is_odd(z in -2.0f64..2.0, beta in -1.0f64..1.0) {
            let f = nf(NormalFormKind::Pitchfork);
            let gp = f.eval_rhs(array![z].view(), beta).unwrap();
            let gm = f.eval_rhs(array![-z].view(), beta).unwrap();
            prop_assert!((gp[0] + gm[0]).abs() < 1e-12);
        }
    }
}
