//! Minimal fully connected networks with exact reverse-mode parameter
//! gradients, forward-mode input Jacobian products, and the reverse pass
//! *through* the Jacobian product (which needs second derivatives of the
//! activation). Also houses the ADAM optimizer.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Elu,
}

impl Activation {
    #[inline]
    pub fn f(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp() - 1.0
                }
            }
        }
    }

    #[inline]
    pub fn df(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    x.exp()
                }
            }
        }
    }

    /// Second derivative; elu uses the left limit 1 at x = 0.
    #[inline]
    pub fn d2f(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                -2.0 * t * (1.0 - t * t)
            }
            Activation::Elu => {
                if x > 0.0 {
                    0.0
                } else {
                    x.exp()
                }
            }
        }
    }
}

/// Fully connected network; the activation acts on hidden layers only, the
/// output layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub activation: Activation,
}

/// Parameter gradients mirroring an [`Mlp`]'s shapes.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub d_weights: Vec<Array2<f64>>,
    pub d_biases: Vec<Array1<f64>>,
}

impl MlpGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        MlpGrads {
            d_weights: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            d_biases: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.d_weights.iter_mut().zip(&other.d_weights) {
            *a += b;
        }
        for (a, b) in self.d_biases.iter_mut().zip(&other.d_biases) {
            *a += b;
        }
    }

    pub fn push_flat(&self, out: &mut Vec<f64>) {
        for (w, b) in self.d_weights.iter().zip(&self.d_biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
    }
}

struct ForwardCache {
    /// layer inputs x_0 .. x_{L-1}
    xs: Vec<Array2<f64>>,
    /// pre-activations a_0 .. a_{L-1}
    pre: Vec<Array2<f64>>,
    /// final output
    out: Array2<f64>,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases, deterministic per seed.
    pub fn init(layer_sizes: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidArgument(
                "layer_sizes needs at least input and output".into(),
            ));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidArgument("layer sizes must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..layer_sizes.len() - 1 {
            let (fan_in, fan_out) = (layer_sizes[l], layer_sizes[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = Array2::from_shape_fn((fan_out, fan_in), |_| rng.gen_range(-bound..=bound));
            weights.push(w);
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Mlp { layer_sizes: layer_sizes.to_vec(), weights, biases, activation })
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn in_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<()> {
        if x.nrows() != self.in_dim() {
            return Err(Error::DimensionMismatch { expected: self.in_dim(), got: x.nrows() });
        }
        Ok(())
    }

    fn forward_cached(&self, x: &Array2<f64>) -> ForwardCache {
        let l_max = self.n_layers();
        let mut xs = Vec::with_capacity(l_max);
        let mut pre = Vec::with_capacity(l_max);
        let mut cur = x.clone();
        for l in 0..l_max {
            let a = self.affine(l, &cur);
            xs.push(cur);
            if l + 1 < l_max {
                cur = a.mapv(|v| self.activation.f(v));
            } else {
                cur = a.clone();
            }
            pre.push(a);
        }
        ForwardCache { xs, pre, out: cur }
    }

    fn affine(&self, l: usize, x: &Array2<f64>) -> Array2<f64> {
        let mut a = self.weights[l].dot(x);
        a += &self.biases[l].view().insert_axis(Axis(1));
        a
    }

    /// Columnwise forward pass.
    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        Ok(self.forward_cached(x).out)
    }

    /// Exact directional derivative of `forward` at `x` along `v`
    /// (forward-mode chain through the layers).
    pub fn jvp_input(&self, x: &Array2<f64>, v: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        if v.raw_dim() != x.raw_dim() {
            return Err(Error::DimensionMismatch { expected: x.nrows(), got: v.nrows() });
        }
        let cache = self.forward_cached(x);
        let l_max = self.n_layers();
        let mut vc = v.clone();
        for l in 0..l_max {
            let w = self.weights[l].dot(&vc);
            if l + 1 < l_max {
                vc = &w * &cache.pre[l].mapv(|a| self.activation.df(a));
            } else {
                vc = w;
            }
        }
        Ok(vc)
    }

    /// Exact reverse-mode gradients of sum(upstream .* forward(x)) with
    /// respect to all parameters and to x.
    pub fn backward(
        &self,
        x: &Array2<f64>,
        upstream: &Array2<f64>,
    ) -> Result<(MlpGrads, Array2<f64>)> {
        self.check_input(x)?;
        if upstream.nrows() != self.out_dim() || upstream.ncols() != x.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.out_dim(),
                got: upstream.nrows(),
            });
        }
        let cache = self.forward_cached(x);
        let mut grads = MlpGrads::zeros_like(self);
        let l_max = self.n_layers();
        let mut g = upstream.clone();
        for l in (0..l_max).rev() {
            let ga = if l + 1 < l_max {
                &g * &cache.pre[l].mapv(|a| self.activation.df(a))
            } else {
                g
            };
            grads.d_weights[l] += &ga.dot(&cache.xs[l].t());
            grads.d_biases[l] += &ga.sum_axis(Axis(1));
            g = self.weights[l].t().dot(&ga);
        }
        Ok((grads, g))
    }

    /// Exact gradients of sum(upstream .* jvp_input(x, v)) with respect to all
    /// parameters, x, and v. Needs the activation's second derivative.
    pub fn backward_through_jvp(
        &self,
        x: &Array2<f64>,
        v: &Array2<f64>,
        upstream: &Array2<f64>,
    ) -> Result<(MlpGrads, Array2<f64>, Array2<f64>)> {
        self.check_input(x)?;
        if v.raw_dim() != x.raw_dim() {
            return Err(Error::DimensionMismatch { expected: x.nrows(), got: v.nrows() });
        }
        if upstream.nrows() != self.out_dim() || upstream.ncols() != x.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.out_dim(),
                got: upstream.nrows(),
            });
        }
        let cache = self.forward_cached(x);
        let l_max = self.n_layers();

        // forward-mode pass, keeping the per-layer tangents
        // vs[l]: tangent entering layer l; ws[l] = W_l vs[l]
        let mut vs = Vec::with_capacity(l_max);
        let mut ws = Vec::with_capacity(l_max);
        let mut vc = v.clone();
        for l in 0..l_max {
            let w = self.weights[l].dot(&vc);
            vs.push(vc);
            let next = if l + 1 < l_max {
                &w * &cache.pre[l].mapv(|a| self.activation.df(a))
            } else {
                w.clone()
            };
            ws.push(w);
            vc = next;
        }

        let mut grads = MlpGrads::zeros_like(self);
        let mut gx = Array2::zeros(upstream.raw_dim());
        let mut gv = upstream.clone();
        for l in (0..l_max).rev() {
            let (gw, mut ga) = if l + 1 < l_max {
                let df = cache.pre[l].mapv(|a| self.activation.df(a));
                let d2f = cache.pre[l].mapv(|a| self.activation.d2f(a));
                let gw = &gv * &df;
                // v-path curvature plus the plain x-path
                let ga = &(&d2f * &ws[l]) * &gv + &(&df * &gx);
                (gw, ga)
            } else {
                (gv, gx)
            };
            grads.d_weights[l] += &gw.dot(&vs[l].t());
            grads.d_weights[l] += &ga.dot(&cache.xs[l].t());
            grads.d_biases[l] += &ga.sum_axis(Axis(1));
            gv = self.weights[l].t().dot(&gw);
            gx = self.weights[l].t().dot(&mut ga);
        }
        Ok((grads, gx, gv))
    }

    // -- flat parameter vector -------------------------------------------

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn push_flat(&self, out: &mut Vec<f64>) {
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
    }

    /// Reads parameters back from a flat slice; returns how many were consumed.
    pub fn read_flat(&mut self, flat: &[f64]) -> usize {
        let mut k = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for e in w.iter_mut() {
                *e = flat[k];
                k += 1;
            }
            for e in b.iter_mut() {
                *e = flat[k];
                k += 1;
            }
        }
        k
    }
}

// ---------------------------------------------------------------------------
// ADAM

/// Bias-corrected ADAM over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub eta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(n_params: usize, eta: f64) -> Self {
        AdamState {
            eta,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient(format!("parameter {i}")));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.eta * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}
