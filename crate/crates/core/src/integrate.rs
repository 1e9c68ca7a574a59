//! Fixed-step RK4 integration producing snapshot and derivative matrices.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Any state |u_i| above this aborts integration as a blow-up.
pub const BLOWUP_THRESHOLD: f64 = 1e6;

/// Uniform time grid on [t0, t_end] with n_points samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub t_end: f64,
    pub n_points: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t_end: f64, n_points: usize) -> Result<Self> {
        if !(t_end > t0) {
            return Err(Error::InvalidArgument(format!(
                "t_end ({t_end}) must exceed t0 ({t0})"
            )));
        }
        if n_points < 2 {
            return Err(Error::InvalidArgument(format!(
                "n_points must be >= 2, got {n_points}"
            )));
        }
        Ok(TimeGrid { t0, t_end, n_points })
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t0) / (self.n_points - 1) as f64
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        let dt = self.dt();
        (0..self.n_points).map(move |k| self.t0 + k as f64 * dt)
    }
}

/// One integrated trajectory: states and RHS values column per time point.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// state_dim x n_points
    pub states: Array2<f64>,
    /// derivs column k is the RHS evaluated at states column k
    pub derivs: Array2<f64>,
    pub alpha: f64,
    pub grid: TimeGrid,
}

impl Trajectory {
    pub fn state_dim(&self) -> usize {
        self.states.nrows()
    }

    pub fn n_points(&self) -> usize {
        self.states.ncols()
    }
}

/// Classic fixed-step RK4 over the grid. The stored derivatives are the RHS
/// recomputed at the stored points, never finite differences.
pub fn integrate<F>(rhs: &F, u0: ArrayView1<f64>, alpha: f64, grid: &TimeGrid) -> Result<Trajectory>
where
    F: Fn(ArrayView1<f64>, f64) -> Array1<f64>,
{
    let dim = u0.len();
    let dt = grid.dt();
    let mut states = Array2::zeros((dim, grid.n_points));
    let mut derivs = Array2::zeros((dim, grid.n_points));

    let finite = |u: &Array1<f64>| u.iter().all(|v| v.is_finite() && v.abs() <= BLOWUP_THRESHOLD);

    let mut u = u0.to_owned();
    for k in 0..grid.n_points {
        if !finite(&u) {
            return Err(Error::Blowup { index: k, trajectory: 0 });
        }
        let f = rhs(u.view(), alpha);
        states.column_mut(k).assign(&u);
        derivs.column_mut(k).assign(&f);
        if k + 1 == grid.n_points {
            break;
        }
        let k1 = f;
        let k2 = rhs((&u + &(&k1 * (dt / 2.0))).view(), alpha);
        let k3 = rhs((&u + &(&k2 * (dt / 2.0))).view(), alpha);
        let k4 = rhs((&u + &(&k3 * dt)).view(), alpha);
        u = &u + &((k1 + &k2 * 2.0 + &k3 * 2.0 + k4) * (dt / 6.0));
    }

    Ok(Trajectory { states, derivs, alpha, grid: *grid })
}

/// Drops the first `n_trim` columns, adjusting the grid accordingly.
pub fn trim_transients(traj: &Trajectory, n_trim: usize) -> Result<Trajectory> {
    let n = traj.n_points();
    if n_trim >= n {
        return Err(Error::InvalidArgument(format!(
            "n_trim ({n_trim}) must be below n_points ({n})"
        )));
    }
    if n_trim == 0 {
        return Ok(traj.clone());
    }
    let dt = traj.grid.dt();
    let grid = TimeGrid {
        t0: traj.grid.t0 + n_trim as f64 * dt,
        t_end: traj.grid.t_end,
        n_points: n - n_trim,
    };
    Ok(Trajectory {
        states: traj.states.slice(ndarray::s![.., n_trim..]).to_owned(),
        derivs: traj.derivs.slice(ndarray::s![.., n_trim..]).to_owned(),
        alpha: traj.alpha,
        grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn decay(u: ArrayView1<f64>, _a: f64) -> Array1<f64> {
        -&u
    }

    #[test]
    fn constant_rhs_gives_constant_trajectory() {
        let rhs = |_u: ArrayView1<f64>, _a: f64| array![0.0, 0.0];
        let grid = TimeGrid::new(0.0, 1.0, 11).unwrap();
        let t = integrate(&rhs, array![1.0, -2.0].view(), 0.0, &grid).unwrap();
        for col in t.states.columns() {
            assert_eq!(col.to_owned(), array![1.0, -2.0]);
        }
    }

    #[test]
    fn exponential_decay_accuracy() {
        let grid = TimeGrid::new(0.0, 1.0, 101).unwrap();
        let t = integrate(&decay, array![1.0].view(), 0.0, &grid).unwrap();
        let end = t.states[[0, 100]];
        assert!((end - (-1.0f64).exp()).abs() < 1e-8, "end={end}");
    }

    #[test]
    fn rk4_order_check() {
        // halving dt must shrink the terminal error ~16x
        let exact = (-1.0f64).exp();
        let coarse = integrate(&decay, array![1.0].view(), 0.0, &TimeGrid::new(0.0, 1.0, 11).unwrap())
            .unwrap()
            .states[[0, 10]];
        let fine = integrate(&decay, array![1.0].view(), 0.0, &TimeGrid::new(0.0, 1.0, 21).unwrap())
            .unwrap()
            .states[[0, 20]];
        let ratio = (coarse - exact).abs() / (fine - exact).abs();
        assert!((14.0..=18.0).contains(&ratio), "ratio={ratio}");
    }

    #[test]
    fn derivs_match_finite_differences() {
        let grid = TimeGrid::new(0.0, 1.0, 101).unwrap();
        let t = integrate(&decay, array![1.0].view(), 0.0, &grid).unwrap();
        let dt = grid.dt();
        let mut max_rel = 0.0f64;
        for k in 1..100 {
            let fd = (t.states[[0, k + 1]] - t.states[[0, k - 1]]) / (2.0 * dt);
            let rel = (fd - t.derivs[[0, k]]).abs() / t.derivs[[0, k]].abs();
            max_rel = max_rel.max(rel);
        }
        assert!(max_rel < 0.05, "max_rel={max_rel}");
    }

    #[test]
    fn blowup_reports_index() {
        let rhs = |u: ArrayView1<f64>, _a: f64| &u * &u * 10.0 + 1.0;
        let grid = TimeGrid::new(0.0, 10.0, 1001).unwrap();
        let err = integrate(&rhs, array![5.0].view(), 0.0, &grid).unwrap_err();
        match err {
            Error::Blowup { index, .. } => assert!(index > 0),
            other => panic!("expected blowup, got {other:?}"),
        }
    }

    #[test]
    fn trim_examples() {
        let grid = TimeGrid::new(0.0, 1.0, 500).unwrap();
        let t = integrate(&decay, array![1.0].view(), 0.0, &grid).unwrap();
        assert_eq!(trim_transients(&t, 0).unwrap(), t);
        let trimmed = trim_transients(&t, 200).unwrap();
        assert_eq!(trimmed.n_points(), 300);
        assert_eq!(trimmed.states.column(0), t.states.column(200));
        assert_relative_eq!(trimmed.grid.dt(), grid.dt(), epsilon = 1e-12);
        assert!(trim_transients(&t, 500).is_err());

        let grid = TimeGrid::new(0.0, 1.0, 250).unwrap();
        let t = integrate(&decay, array![1.0].view(), 0.0, &grid).unwrap();
        assert_eq!(trim_transients(&t, 50).unwrap().n_points(), 200);
    }

    #[test]
    fn determinism() {
        let grid = TimeGrid::new(0.0, 2.0, 41).unwrap();
        let a = integrate(&decay, array![0.7].view(), 0.0, &grid).unwrap();
        let b = integrate(&decay, array![0.7].view(), 0.0, &grid).unwrap();
        assert_eq!(a.states, b.states);
        assert_eq!(a.derivs, b.derivs);
    }
}
