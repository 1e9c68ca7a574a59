//! Ground-truth parameterized systems used to generate training data, plus
//! the translations that move each bifurcation to the origin.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{integrate, TimeGrid};

/// Critical forcing of the n=64 Lorenz96 Hopf bifurcation.
pub const LORENZ96_ALPHA_C: f64 = 0.84975;

/// Critical input strength of the neural-field Hopf bifurcation.
pub const NEURAL_FIELD_ALPHA_C: f64 = 0.8040;

// ---------------------------------------------------------------------------
// Scalar ODE

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarOdeParams {
    pub gamma: f64,
    pub u_sn: f64,
    pub alpha_sn: f64,
    pub alpha_pf: f64,
}

impl Default for ScalarOdeParams {
    fn default() -> Self {
        ScalarOdeParams { gamma: 0.01, u_sn: -6.0, alpha_sn: -6.0, alpha_pf: 6.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScalarBifurcation {
    SaddleNode,
    Pitchfork,
    Transcritical,
}

/// gamma * u * (alpha - alpha_pf - u^2) * (alpha - alpha_sn + (u - u_sn)^2)
pub fn scalar_rhs(p: &ScalarOdeParams, u: f64, alpha: f64) -> f64 {
    p.gamma
        * u
        * (alpha - p.alpha_pf - u * u)
        * (alpha - p.alpha_sn + (u - p.u_sn) * (u - p.u_sn))
}

/// Shift pair (u0, a0) moving the chosen bifurcation to the origin.
pub fn scalar_shift(p: &ScalarOdeParams, which: ScalarBifurcation) -> (f64, f64) {
    match which {
        ScalarBifurcation::Pitchfork => (0.0, p.alpha_pf),
        ScalarBifurcation::SaddleNode => (p.u_sn, p.alpha_sn),
        ScalarBifurcation::Transcritical => (0.0, p.alpha_sn - p.u_sn * p.u_sn),
    }
}

/// The scalar field in coordinates where `which` bifurcates at (0, 0).
pub fn scalar_translated_rhs(
    p: &ScalarOdeParams,
    u: f64,
    alpha: f64,
    which: ScalarBifurcation,
) -> f64 {
    let (u0, a0) = scalar_shift(p, which);
    scalar_rhs(p, u + u0, alpha + a0)
}

/// Smooth-equivalence scaling of the translated pitchfork field:
/// translated rhs = h(u, alpha) * u * (alpha - u^2).
pub fn scalar_pitchfork_h(p: &ScalarOdeParams, u: f64, alpha: f64) -> f64 {
    p.gamma * (alpha + p.alpha_pf - p.alpha_sn + (u - p.u_sn) * (u - p.u_sn))
}

// ---------------------------------------------------------------------------
// Lorenz96

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lorenz96Params {
    pub n: usize,
}

impl Default for Lorenz96Params {
    fn default() -> Self {
        Lorenz96Params { n: 64 }
    }
}

impl Lorenz96Params {
    pub fn validate(&self) -> Result<()> {
        if self.n < 4 {
            return Err(Error::InvalidArgument(format!(
                "Lorenz96 needs n >= 4, got {}",
                self.n
            )));
        }
        Ok(())
    }
}

/// du_j/dt = -u_{j-1} (u_{j-2} - u_{j+1}) - u_j + alpha, cyclic indices mod n.
pub fn lorenz96_rhs(p: &Lorenz96Params, u: ArrayView1<f64>, alpha: f64) -> Result<Array1<f64>> {
    let n = p.n;
    if u.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: u.len() });
    }
    let mut du = Array1::zeros(n);
    for j in 0..n {
        let jm1 = (j + n - 1) % n;
        let jm2 = (j + n - 2) % n;
        let jp1 = (j + 1) % n;
        du[j] = -u[jm1] * (u[jm2] - u[jp1]) - u[j] + alpha;
    }
    Ok(du)
}

/// Lorenz96 after (u, alpha) -> (u + alpha_c, alpha + alpha_c): equilibrium at
/// u = 0, bifurcation at alpha = 0.
pub fn lorenz96_translated_rhs(
    p: &Lorenz96Params,
    u: ArrayView1<f64>,
    alpha: f64,
) -> Result<Array1<f64>> {
    let full_alpha = alpha + LORENZ96_ALPHA_C;
    let shifted = u.mapv(|v| v + full_alpha);
    lorenz96_rhs(p, shifted.view(), full_alpha)
}

// ---------------------------------------------------------------------------
// Neural field

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
}

impl SpatialGrid {
    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_points - 1) as f64
    }

    pub fn points(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.n_points).map(|k| self.x_min + k as f64 * dx).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuralFieldParams {
    pub kappa: f64,
    pub tau_nf: f64,
    pub w_e: f64,
    pub sigma_e: f64,
    pub beta_nf: f64,
    pub u_thr: f64,
    pub sigma: f64,
    pub grid: SpatialGrid,
}

impl Default for NeuralFieldParams {
    fn default() -> Self {
        NeuralFieldParams {
            kappa: 2.75,
            tau_nf: 10.0,
            w_e: 1.0,
            sigma_e: 1.0,
            beta_nf: 6.0,
            u_thr: 0.375,
            sigma: 1.2,
            grid: SpatialGrid { x_min: -6.0, x_max: 6.0, n_points: 64 },
        }
    }
}

impl NeuralFieldParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_nf > 0.0 && self.sigma_e > 0.0 && self.sigma > 0.0) {
            return Err(Error::InvalidArgument(
                "tau_nf, sigma_e and sigma must all be positive".into(),
            ));
        }
        if self.grid.n_points < 2 {
            return Err(Error::InvalidArgument("spatial grid needs >= 2 points".into()));
        }
        Ok(())
    }
}

/// Discretized neural field: precomputed Gaussian connectivity kernel with
/// Riemann-sum weighting, working on the packed state (u, a) of length 2n.
#[derive(Debug, Clone)]
pub struct NeuralFieldModel {
    pub params: NeuralFieldParams,
    /// n x n kernel matrix K_ij = w_e exp(-((x_i - x_j)/sigma_e)^2) dx
    kernel: Array2<f64>,
    /// Gaussian input profile per grid point, unit amplitude.
    input_profile: Array1<f64>,
}

impl NeuralFieldModel {
    pub fn new(params: NeuralFieldParams) -> Result<Self> {
        params.validate()?;
        let xs = params.grid.points();
        let n = xs.len();
        let dx = params.grid.dx();
        let mut kernel = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                let d = (xs[i] - xs[j]) / params.sigma_e;
                kernel[[i, j]] = params.w_e * (-d * d).exp() * dx;
            }
        }
        let input_profile = xs
            .iter()
            .map(|&x| (-(x / params.sigma) * (x / params.sigma)).exp())
            .collect();
        Ok(NeuralFieldModel { params, kernel, input_profile })
    }

    pub fn n(&self) -> usize {
        self.params.grid.n_points
    }

    pub fn state_dim(&self) -> usize {
        2 * self.n()
    }

    /// Logistic firing rate 1 / (1 + exp(-beta_nf (u - u_thr))).
    pub fn firing_rate(&self, u: f64) -> f64 {
        1.0 / (1.0 + (-self.params.beta_nf * (u - self.params.u_thr)).exp())
    }

    /// RHS on the packed state (u, a): udot = -u - kappa a + K f(u) + alpha I(x),
    /// adot = (u - a)/tau_nf.
    pub fn rhs(&self, state: ArrayView1<f64>, alpha: f64) -> Result<Array1<f64>> {
        let n = self.n();
        if state.len() != 2 * n {
            return Err(Error::DimensionMismatch { expected: 2 * n, got: state.len() });
        }
        let u = state.slice(ndarray::s![..n]);
        let a = state.slice(ndarray::s![n..]);
        let f: Array1<f64> = u.mapv(|v| self.firing_rate(v));
        let conv = self.kernel.dot(&f);
        let mut out = Array1::zeros(2 * n);
        for j in 0..n {
            out[j] = -u[j] - self.params.kappa * a[j] + conv[j] + alpha * self.input_profile[j];
            out[n + j] = (u[j] - a[j]) / self.params.tau_nf;
        }
        Ok(out)
    }
}

/// Equilibrium estimate from a simulated trajectory, per the translated
/// parameter's sign: last snapshot for alpha < 0, post-trim time average for
/// alpha >= 0.
pub fn estimate_nf_equilibrium(
    alpha: f64,
    trajectory: &Array2<f64>,
    trim: usize,
) -> Result<Array1<f64>> {
    let cols = trajectory.ncols();
    if cols == 0 {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    }
    if trim >= cols {
        return Err(Error::InvalidArgument(format!(
            "trim ({trim}) must be below column count ({cols})"
        )));
    }
    if alpha < 0.0 {
        Ok(trajectory.column(cols - 1).to_owned())
    } else {
        let kept = trajectory.slice(ndarray::s![.., trim..]);
        Ok(kept.mean_axis(ndarray::Axis(1)).unwrap())
    }
}

/// Neural field translated so the (data-estimated) equilibrium sits at the
/// origin and the bifurcation at alpha = 0. Equilibria are computed once per
/// alpha by integrating to large t, then cached; warm the cache
/// single-threaded before concurrent use.
pub struct TranslatedNeuralField {
    pub model: NeuralFieldModel,
    pub alpha_c: f64,
    settle_grid: TimeGrid,
    settle_trim: usize,
    cache: RwLock<HashMap<u64, Arc<Array1<f64>>>>,
}

impl TranslatedNeuralField {
    pub fn new(params: NeuralFieldParams) -> Result<Self> {
        Ok(TranslatedNeuralField {
            model: NeuralFieldModel::new(params)?,
            alpha_c: NEURAL_FIELD_ALPHA_C,
            settle_grid: TimeGrid::new(0.0, 400.0, 1001)?,
            settle_trim: 500,
            cache: RwLock::new(HashMap::new()),
        })
    }

    /// Data-estimated equilibrium at the translated parameter `alpha`.
    pub fn equilibrium(&self, alpha: f64) -> Result<Arc<Array1<f64>>> {
        let key = alpha.to_bits();
        if let Some(eq) = self.cache.read().unwrap().get(&key) {
            return Ok(eq.clone());
        }
        let rhs = |s: ArrayView1<f64>, a: f64| self.model.rhs(s, a).unwrap();
        let u0 = Array1::zeros(self.model.state_dim());
        let traj = integrate(&rhs, u0.view(), alpha + self.alpha_c, &self.settle_grid)?;
        let eq = Arc::new(estimate_nf_equilibrium(alpha, &traj.states, self.settle_trim)?);
        self.cache.write().unwrap().insert(key, eq.clone());
        Ok(eq)
    }

    pub fn rhs(&self, state: ArrayView1<f64>, alpha: f64) -> Result<Array1<f64>> {
        let eq = self.equilibrium(alpha)?;
        let shifted = &state.to_owned() + eq.as_ref();
        self.model.rhs(shifted.view(), alpha + self.alpha_c)
    }
}

// ---------------------------------------------------------------------------
// System instances

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    ScalarSn,
    ScalarPf,
    ScalarTc,
    Lorenz96,
    NeuralField,
}

/// A translated system ready for data generation: the bifurcation sits at
/// (u, alpha) = (0, 0).
#[derive(Clone)]
pub enum System {
    Scalar { params: ScalarOdeParams, which: ScalarBifurcation },
    Lorenz96 { params: Lorenz96Params },
    NeuralField(Arc<TranslatedNeuralField>),
}

impl System {
    pub fn from_kind(kind: SystemKind) -> Result<Self> {
        Ok(match kind {
            SystemKind::ScalarSn => System::Scalar {
                params: ScalarOdeParams::default(),
                which: ScalarBifurcation::SaddleNode,
            },
            SystemKind::ScalarPf => System::Scalar {
                params: ScalarOdeParams::default(),
                which: ScalarBifurcation::Pitchfork,
            },
            SystemKind::ScalarTc => System::Scalar {
                params: ScalarOdeParams::default(),
                which: ScalarBifurcation::Transcritical,
            },
            SystemKind::Lorenz96 => System::Lorenz96 { params: Lorenz96Params::default() },
            SystemKind::NeuralField => {
                System::NeuralField(Arc::new(TranslatedNeuralField::new(
                    NeuralFieldParams::default(),
                )?))
            }
        })
    }

    pub fn kind(&self) -> SystemKind {
        match self {
            System::Scalar { which: ScalarBifurcation::SaddleNode, .. } => SystemKind::ScalarSn,
            System::Scalar { which: ScalarBifurcation::Pitchfork, .. } => SystemKind::ScalarPf,
            System::Scalar { which: ScalarBifurcation::Transcritical, .. } => SystemKind::ScalarTc,
            System::Lorenz96 { .. } => SystemKind::Lorenz96,
            System::NeuralField(_) => SystemKind::NeuralField,
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            System::Scalar { .. } => 1,
            System::Lorenz96 { params } => params.n,
            System::NeuralField(t) => t.model.state_dim(),
        }
    }

    /// Translated RHS.
    pub fn rhs(&self, u: ArrayView1<f64>, alpha: f64) -> Result<Array1<f64>> {
        match self {
            System::Scalar { params, which } => {
                if u.len() != 1 {
                    return Err(Error::DimensionMismatch { expected: 1, got: u.len() });
                }
                Ok(Array1::from(vec![scalar_translated_rhs(params, u[0], alpha, *which)]))
            }
            System::Lorenz96 { params } => lorenz96_translated_rhs(params, u, alpha),
            System::NeuralField(t) => t.rhs(u, alpha),
        }
    }

    /// Equilibrium used as the sampling center u_c (translated coordinates).
    pub fn sampling_center(&self, alpha: f64) -> Result<Array1<f64>> {
        match self {
            System::NeuralField(_) => {
                // the translation already moves the per-alpha equilibrium to 0
                let _ = alpha;
                Ok(Array1::zeros(self.state_dim()))
            }
            _ => Ok(Array1::zeros(self.state_dim())),
        }
    }
}
