//! Proper orthogonal decomposition of externally supplied snapshot matrices
//! (method of snapshots), truncation, unitary mixing, and reconstruction back
//! to physical space.

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::TrajectorySet;
use crate::error::{Error, Result};
use crate::integrate::TimeGrid;

/// Fixed 4x4 unitary mixing preset used by the reference cylinder-flow runs.
pub const GAMMA_PRESET_4: [[f64; 4]; 4] = [
    [0.154739, -0.523688, 0.675546, 0.495243],
    [0.87244, 0.298319, 0.249166, -0.29685],
    [-0.292797, 0.785392, 0.450626, 0.30719],
    [0.359894, 0.141123, -0.527721, 0.756353],
];

pub fn gamma_preset_4() -> Array2<f64> {
    Array2::from_shape_fn((4, 4), |(i, j)| GAMMA_PRESET_4[i][j])
}

#[derive(Debug, Clone)]
pub struct PodBasis {
    /// Temporal mean of the trimmed snapshots (w-bar).
    pub mean_field: Array1<f64>,
    /// Orthonormal spatial modes, one column per retained mode.
    pub modes: Array2<f64>,
    pub singular_values: Array1<f64>,
    /// Unitary mixing applied to the reduced series (identity by default).
    pub gamma: Array2<f64>,
    pub m: usize,
}

#[derive(Debug, Clone)]
pub struct ReducedSeries {
    /// Lambda = Sigma_m V_m^T, the reduced temporal coefficients.
    pub lambda: Array2<f64>,
    /// Gamma . Lambda, what the autoencoder actually trains on.
    pub mixed: Array2<f64>,
}

/// Thin SVD A = U diag(s) V^T by one-sided Jacobi rotations; singular values
/// descending, k = min(rows, cols) columns in U and V.
pub fn jacobi_svd(a: &Array2<f64>) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
    let (r, c) = a.dim();
    if c > r {
        // A^T = U' S V'^T  =>  A = V' S U'^T
        let (u, s, v) = jacobi_svd(&a.t().to_owned());
        return (v, s, u);
    }
    let mut w = a.clone();
    let mut v = Array2::<f64>::eye(c);
    let eps = 1e-12;
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..c {
            for q in (p + 1)..c {
                let wp = w.column(p);
                let wq = w.column(q);
                let alpha = wp.dot(&wp);
                let beta = wq.dot(&wq);
                let gamma = wp.dot(&wq);
                if gamma.abs() <= eps * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for i in 0..r {
                    let (a_ip, a_iq) = (w[[i, p]], w[[i, q]]);
                    w[[i, p]] = cs * a_ip - sn * a_iq;
                    w[[i, q]] = sn * a_ip + cs * a_iq;
                }
                for i in 0..c {
                    let (v_ip, v_iq) = (v[[i, p]], v[[i, q]]);
                    v[[i, p]] = cs * v_ip - sn * v_iq;
                    v[[i, q]] = sn * v_ip + cs * v_iq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    // column norms are the singular values; sort descending
    let mut order: Vec<usize> = (0..c).collect();
    let norms: Vec<f64> = (0..c).map(|j| w.column(j).dot(&w.column(j)).sqrt()).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());
    let mut u = Array2::zeros((r, c));
    let mut sigma = Array1::zeros(c);
    let mut v_sorted = Array2::zeros((c, c));
    for (slot, &j) in order.iter().enumerate() {
        sigma[slot] = norms[j];
        v_sorted.column_mut(slot).assign(&v.column(j));
        if norms[j] > 0.0 {
            let col = w.column(j).mapv(|x| x / norms[j]);
            u.column_mut(slot).assign(&col);
        }
    }
    // numerically zero directions leave U columns empty; complete them to an
    // orthonormal set deterministically so downstream truncation stays valid
    let tol = sigma[0].max(1.0) * 1e-13;
    for slot in 0..c {
        if sigma[slot] > tol {
            continue;
        }
        'candidates: for i in 0..r {
            let mut cand: Array1<f64> = Array1::zeros(r);
            cand[i] = 1.0;
            for j in 0..c {
                if j != slot && (sigma[j] > tol || j < slot) {
                    let proj = u.column(j).dot(&cand);
                    cand = &cand - &u.column(j).mapv(|x| x * proj);
                }
            }
            let n = cand.dot(&cand).sqrt();
            if n > 1e-8 {
                u.column_mut(slot).assign(&cand.mapv(|x| x / n));
                break 'candidates;
            }
        }
    }
    (u, sigma, v_sorted)
}

/// Trims the first `trim` columns, subtracts the temporal mean of the trimmed
/// block, subsamples by `stride`, then truncates the SVD to rank m.
pub fn pod_decompose(
    snapshots: &Array2<f64>,
    m: usize,
    trim: usize,
    stride: usize,
) -> Result<(PodBasis, ReducedSeries)> {
    let (space, t) = snapshots.dim();
    if stride == 0 || m == 0 {
        return Err(Error::InvalidArgument("m and stride must be >= 1".into()));
    }
    if trim >= t || t - trim < m {
        return Err(Error::InvalidArgument(format!(
            "trim {trim} leaves fewer than m = {m} of {t} snapshot columns"
        )));
    }
    let trimmed = snapshots.slice(s![.., trim..]);
    let mean = trimmed.mean_axis(Axis(1)).unwrap();
    let kept: Vec<usize> = (0..trimmed.ncols()).step_by(stride).collect();
    let mut w = Array2::zeros((space, kept.len()));
    for (out, &k) in kept.iter().enumerate() {
        let col = &trimmed.column(k) - &mean;
        w.column_mut(out).assign(&col);
    }
    let achievable = space.min(w.ncols());
    if m > achievable {
        return Err(Error::RankDeficient { requested: m, achievable });
    }
    let (u, sigma, v) = jacobi_svd(&w);
    let mut modes = u.slice(s![.., ..m]).to_owned();
    let singular_values = sigma.slice(s![..m]).to_owned();
    // Lambda = Sigma_m V_m^T
    let mut lambda = Array2::zeros((m, w.ncols()));
    for j in 0..m {
        for k in 0..w.ncols() {
            lambda[[j, k]] = singular_values[j] * v[[k, j]];
        }
    }
    // sign convention: largest-magnitude mode entry positive, sign folded
    // into Lambda
    for j in 0..m {
        let mut best = 0;
        for i in 0..space {
            if modes[[i, j]].abs() > modes[[best, j]].abs() {
                best = i;
            }
        }
        if modes[[best, j]] < 0.0 {
            for i in 0..space {
                modes[[i, j]] = -modes[[i, j]];
            }
            for k in 0..w.ncols() {
                lambda[[j, k]] = -lambda[[j, k]];
            }
        }
    }
    let basis = PodBasis {
        mean_field: mean,
        modes,
        singular_values,
        gamma: Array2::<f64>::eye(m),
        m,
    };
    let series = ReducedSeries { mixed: lambda.clone(), lambda };
    Ok((basis, series))
}

/// Installs a mixing matrix and recomputes mixed = gamma . Lambda.
pub fn apply_mixing(
    basis: &mut PodBasis,
    series: &mut ReducedSeries,
    gamma: Array2<f64>,
) -> Result<()> {
    if gamma.nrows() != basis.m || gamma.ncols() != basis.m {
        return Err(Error::DimensionMismatch { expected: basis.m, got: gamma.nrows() });
    }
    series.mixed = gamma.dot(&series.lambda);
    basis.gamma = gamma;
    Ok(())
}

/// Orthogonal factor U V^T of a seeded random matrix; deterministic per seed.
pub fn make_unitary_gamma(m: usize, seed: u64) -> Result<Array2<f64>> {
    if m == 0 {
        return Err(Error::InvalidArgument("m must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = Array2::from_shape_fn((m, m), |_| rng.gen_range(-1.0..1.0));
    let (u, _s, v) = jacobi_svd(&raw);
    Ok(u.dot(&v.t()))
}

/// w-bar + modes . gamma^T . mixed_series.
pub fn reconstruct(basis: &PodBasis, mixed_series: &Array2<f64>) -> Result<Array2<f64>> {
    if mixed_series.nrows() != basis.m {
        return Err(Error::DimensionMismatch { expected: basis.m, got: mixed_series.nrows() });
    }
    let lambda_hat = basis.gamma.t().dot(mixed_series);
    let mut out = basis.modes.dot(&lambda_hat);
    for mut col in out.axis_iter_mut(Axis(1)) {
        col += &basis.mean_field;
    }
    Ok(out)
}

/// Second-order finite differences in time (centered inside, one-sided at the
/// ends); the reduced dynamics have no closed-form right-hand side.
pub fn finite_difference_derivatives(series: &Array2<f64>, dt: f64) -> Result<Array2<f64>> {
    let (m, t) = series.dim();
    if t < 3 {
        return Err(Error::InvalidArgument("need at least 3 time points".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("dt must be positive".into()));
    }
    let mut d = Array2::zeros((m, t));
    for i in 0..m {
        d[[i, 0]] = (-3.0 * series[[i, 0]] + 4.0 * series[[i, 1]] - series[[i, 2]]) / (2.0 * dt);
        for k in 1..t - 1 {
            d[[i, k]] = (series[[i, k + 1]] - series[[i, k - 1]]) / (2.0 * dt);
        }
        d[[i, t - 1]] =
            (3.0 * series[[i, t - 1]] - 4.0 * series[[i, t - 2]] + series[[i, t - 3]]) / (2.0 * dt);
    }
    Ok(d)
}

/// Stacks mixed reduced series (one per parameter value) into a training set,
/// with derivatives by finite differences.
pub fn reduced_trajectory_set(
    mixed: &[Array2<f64>],
    alphas: &[f64],
    dt: f64,
) -> Result<TrajectorySet> {
    if mixed.is_empty() || mixed.len() != alphas.len() {
        return Err(Error::InvalidArgument(
            "need one mixed series per parameter value".into(),
        ));
    }
    let (m, t) = mixed[0].dim();
    let n = mixed.len();
    let mut u = Array2::zeros((m, n * t));
    let mut u_dot = Array2::zeros((m, n * t));
    for (j, series) in mixed.iter().enumerate() {
        if series.dim() != (m, t) {
            return Err(Error::DimensionMismatch { expected: t, got: series.ncols() });
        }
        u.slice_mut(s![.., j * t..(j + 1) * t]).assign(series);
        u_dot
            .slice_mut(s![.., j * t..(j + 1) * t])
            .assign(&finite_difference_derivatives(series, dt)?);
    }
    let grid = TimeGrid::new(0.0, dt * (t - 1) as f64, t)?;
    Ok(TrajectorySet { u, u_dot, alpha: alphas.to_vec(), t_kept: t, grid })
}
