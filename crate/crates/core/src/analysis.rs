//! Post-training validation: period estimation by discrete Fourier
//! transform, latent-vs-normal-form ensemble comparison, amplitude
//! diagnostics, and metric reports.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{integrate, TimeGrid};
use crate::nf_autoencoder::NfAutoencoder;
use crate::normal_forms::NormalForm;
use crate::dataset::TrajectorySet;

/// Dominant oscillation period of a time series: 1/f* where f* is the
/// non-DC peak of the magnitude spectrum (Hann window, mean removed),
/// refined by quadratic interpolation over the three bins around the peak.
pub fn dominant_period(series: &[f64], dt: f64) -> Result<f64> {
    let n = series.len();
    if n < 8 {
        return Err(Error::InvalidArgument("need at least 8 samples".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("dt must be positive".into()));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let scale = series.iter().map(|v| (v - mean).abs()).fold(0.0f64, f64::max);
    let mut buf: Vec<Complex<f64>> = series
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos();
            Complex::new((v - mean) * w, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    let mags: Vec<f64> = buf[..=half].iter().map(|c| c.norm()).collect();
    let mut peak = 1;
    for k in 2..half {
        if mags[k] > mags[peak] {
            peak = k;
        }
    }
    if mags[peak] <= 1e-10 * n as f64 * scale.max(1e-300) || scale == 0.0 {
        return Err(Error::NoOscillation);
    }
    // quadratic interpolation on log magnitudes around the peak bin
    let mut delta = 0.0;
    if peak > 1 && peak + 1 <= half && mags[peak - 1] > 0.0 && mags[peak + 1] > 0.0 {
        let la = mags[peak - 1].ln();
        let lb = mags[peak].ln();
        let lc = mags[peak + 1].ln();
        let denom = la - 2.0 * lb + lc;
        if denom.abs() > 1e-300 {
            delta = (0.5 * (la - lc) / denom).clamp(-0.5, 0.5);
        }
    }
    let freq = (peak as f64 + delta) / (n as f64 * dt);
    Ok(1.0 / freq)
}

/// Time-averaged distance from a latent trajectory to the pointwise min-max
/// envelope of an ensemble of normal-form simulations started around the
/// latent trajectory's first point. Zero when the trajectory lies inside the
/// envelope at every time.
///
/// The saddle-node field with beta < 0 escapes to -infinity in finite time,
/// so an ensemble member may legitimately blow up inside the window; the
/// score is then taken over the longest prefix on which the whole ensemble
/// exists, provided that prefix covers at least half the window. Shorter
/// prefixes propagate the blowup error.
pub fn ensemble_mismatch(
    latent: &Array2<f64>,
    nf: &NormalForm,
    beta: f64,
    n_ensemble: usize,
    spread: f64,
    grid: &TimeGrid,
    seed: u64,
) -> Result<f64> {
    let (dim, t) = latent.dim();
    if t == 0 || t != grid.n_points {
        return Err(Error::DimensionMismatch { expected: grid.n_points, got: t });
    }
    if dim != nf.dim() {
        return Err(Error::DimensionMismatch { expected: nf.dim(), got: dim });
    }
    let z0 = latent.column(0).to_owned();
    let mut window = *grid;
    let ensemble = loop {
        match nf.simulate_ensemble(z0.view(), beta, n_ensemble.max(1), spread, &window, seed) {
            Ok(e) => break e,
            Err(Error::Blowup { index, trajectory }) => {
                if index < (t + 1) / 2 {
                    return Err(Error::Blowup { index, trajectory });
                }
                window = TimeGrid::new(
                    window.t0,
                    window.t0 + window.dt() * (index - 1) as f64,
                    index,
                )?;
            }
            Err(e) => return Err(e),
        }
    };
    let t_valid = window.n_points;
    let mut score = 0.0;
    for k in 0..t_valid {
        let mut d2 = 0.0;
        for i in 0..dim {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for traj in &ensemble {
                let v = traj.states[[i, k]];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            let z = latent[[i, k]];
            let out = (lo - z).max(z - hi).max(0.0);
            d2 += out * out;
        }
        score += d2.sqrt();
    }
    Ok(score / t_valid as f64)
}

/// Steady oscillation amplitude for each parameter value: half the
/// peak-to-peak range of the first state component over the final quarter of
/// the trajectory, or 0 when the trajectory has decayed (terminal
/// fluctuation below 1e-4). Blowups are flagged per parameter value.
pub fn amplitude_vs_parameter<F>(
    rhs: &F,
    u0: ArrayView1<f64>,
    alphas: &[f64],
    grid: &TimeGrid,
) -> Result<Vec<(f64, Result<f64>)>>
where
    F: Fn(ArrayView1<f64>, f64) -> Array1<f64> + Sync,
{
    if alphas.is_empty() {
        return Err(Error::InvalidArgument("alpha list must be nonempty".into()));
    }
    let out = alphas
        .par_iter()
        .map(|&alpha| {
            let amp = integrate(rhs, u0, alpha, grid).map(|traj| {
                let t = traj.states.ncols();
                let tail = traj.states.row(0);
                let window = &tail.as_slice().unwrap()[t - t / 4..];
                let lo = window.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = window.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if hi - lo < 1e-4 {
                    0.0
                } else {
                    0.5 * (hi - lo)
                }
            });
            (alpha, amp)
        })
        .collect();
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryReport {
    pub alpha: f64,
    pub beta: f64,
    /// Latent trace, one inner vector per latent component.
    pub latent: Vec<Vec<f64>>,
    pub mismatch: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub trajectories: Vec<TrajectoryReport>,
    /// ||U - psi1 phi1 U||_F / ||U||_F over the whole test set.
    pub reconstruction_rel_error: f64,
    /// Fraction of trajectories where sign(alpha) == orientation * sign(beta).
    pub sign_agreement: f64,
    /// Mean dominant period of the first state component, oscillating
    /// trajectories only.
    pub data_period: Option<f64>,
    /// Same for the first latent component.
    pub latent_period: Option<f64>,
}

/// Transforms every test trajectory to (Z, beta), scores it against a
/// normal-form ensemble, and aggregates reconstruction / orientation
/// metrics.
pub fn validation_report(
    model: &NfAutoencoder,
    test_set: &TrajectorySet,
    n_ensemble: usize,
    spread: f64,
    seed: u64,
) -> Result<ValidationReport> {
    let n = test_set.n_traj();
    if n == 0 {
        return Err(Error::InvalidArgument("test set must be nonempty".into()));
    }
    let (z, betas) = model.encode(&test_set.u, &per_traj_alpha_columns(test_set))?;
    let u_hat = model.psi1.forward(&z)?;
    let num: f64 = (&test_set.u - &u_hat).iter().map(|v| v * v).sum::<f64>().sqrt();
    let den: f64 = test_set.u.iter().map(|v| v * v).sum::<f64>().sqrt();
    let reconstruction_rel_error = if den > 0.0 { num / den } else { num };

    let nf = model.nf();
    let dt = test_set.grid.dt();
    let grid_one = TimeGrid::new(0.0, dt * (test_set.t_kept - 1) as f64, test_set.t_kept)?;
    let trajectories: Vec<TrajectoryReport> = (0..n)
        .into_par_iter()
        .map(|j| -> Result<TrajectoryReport> {
            let range = test_set.traj_range(j);
            let zj = z.slice(ndarray::s![.., range.clone()]).to_owned();
            let beta = betas[range.start];
            // saddle-node fields escape to -inf for beta < 0, so ensemble
            // blowup is a legitimate outcome; score it as infinitely far
            // from the envelope rather than failing the whole report
            let mismatch = match ensemble_mismatch(
                &zj,
                &nf,
                beta,
                n_ensemble,
                spread,
                &grid_one,
                seed.wrapping_add(j as u64),
            ) {
                Ok(score) => score,
                Err(Error::Blowup { .. }) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            Ok(TrajectoryReport {
                alpha: test_set.alpha[j],
                beta,
                latent: zj.axis_iter(Axis(0)).map(|row| row.to_vec()).collect(),
                mismatch,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let agree = (0..n)
        .filter(|&j| {
            sgn(test_set.alpha[j]) == sgn(model.orientation * trajectories[j].beta)
        })
        .count();
    let sign_agreement = agree as f64 / n as f64;

    let data_period = mean_period(
        (0..n).map(|j| {
            let r = test_set.traj_range(j);
            test_set.u.row(0).slice(ndarray::s![r]).to_vec()
        }),
        dt,
    );
    let latent_period = mean_period(trajectories.iter().map(|t| t.latent[0].clone()), dt);

    Ok(ValidationReport {
        trajectories,
        reconstruction_rel_error,
        sign_agreement,
        data_period,
        latent_period,
    })
}

fn per_traj_alpha_columns(set: &TrajectorySet) -> Vec<f64> {
    let mut out = Vec::with_capacity(set.columns());
    for j in 0..set.n_traj() {
        out.extend(std::iter::repeat(set.alpha[j]).take(set.t_kept));
    }
    out
}

fn sgn(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

fn mean_period(series: impl Iterator<Item = Vec<f64>>, dt: f64) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0;
    for s in series {
        if let Ok(p) = dominant_period(&s, dt) {
            sum += p;
            count += 1;
        }
    }
    if count > 0 {
        Some(sum / count as f64)
    } else {
        None
    }
}

/// Writes one time column plus one column per series row.
pub fn write_trace_csv(path: &std::path::Path, times: &[f64], series: &Array2<f64>) -> Result<()> {
    let mut out = String::from("t");
    for i in 0..series.nrows() {
        out.push_str(&format!(",z{i}"));
    }
    out.push('\n');
    for (k, t) in times.iter().enumerate() {
        out.push_str(&format!("{t}"));
        for i in 0..series.nrows() {
            out.push_str(&format!(",{}", series[[i, k]]));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Minimal SVG line plot of each series row versus time, optionally shading a
/// lower/upper envelope band.
pub fn svg_line_plot(
    times: &[f64],
    series: &Array2<f64>,
    envelope: Option<(&Array2<f64>, &Array2<f64>)>,
    title: &str,
) -> String {
    const W: f64 = 640.0;
    const H: f64 = 360.0;
    const PAD: f64 = 40.0;
    let t0 = times.first().copied().unwrap_or(0.0);
    let t1 = times.last().copied().unwrap_or(1.0);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in series.iter() {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    if let Some((el, eh)) = envelope {
        for v in el.iter().chain(eh.iter()) {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    if !(hi > lo) {
        lo -= 1.0;
        hi += 1.0;
    }
    let x = |t: f64| PAD + (t - t0) / (t1 - t0).max(1e-300) * (W - 2.0 * PAD);
    let y = |v: f64| H - PAD - (v - lo) / (hi - lo) * (H - 2.0 * PAD);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n<text x=\"{PAD}\" y=\"20\">{title}</text>\n"
    );
    if let Some((el, eh)) = envelope {
        for i in 0..el.nrows() {
            let mut pts = String::new();
            for (k, &t) in times.iter().enumerate() {
                pts.push_str(&format!("{:.2},{:.2} ", x(t), y(el[[i, k]])));
            }
            for (k, &t) in times.iter().enumerate().rev() {
                pts.push_str(&format!("{:.2},{:.2} ", x(t), y(eh[[i, k]])));
            }
            svg.push_str(&format!(
                "<polygon points=\"{pts}\" fill=\"#9ecae1\" fill-opacity=\"0.4\" stroke=\"none\"/>\n"
            ));
        }
    }
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"];
    for i in 0..series.nrows() {
        let mut pts = String::new();
        for (k, &t) in times.iter().enumerate() {
            pts.push_str(&format!("{:.2},{:.2} ", x(t), y(series[[i, k]])));
        }
        svg.push_str(&format!(
            "<polyline points=\"{pts}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
            colors[i % colors.len()]
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::{Activation, Mlp};
    use crate::normal_forms::NormalFormKind;
    use crate::systems::{lorenz96_translated_rhs, Lorenz96Params};
    use approx::assert_relative_eq;
    use ndarray::array;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sampled(f: impl Fn(f64) -> f64, dt: f64, t_end: f64) -> Vec<f64> {
        let n = (t_end / dt).round() as usize;
        (0..n).map(|k| f(k as f64 * dt)).collect()
    }

    #[test]
    fn sinusoid_period_recovered() {
        let s = sampled(|t| (2.0 * std::f64::consts::PI * t / 5.0).sin(), 0.05, 40.0);
        let p = dominant_period(&s, 0.05).unwrap();
        assert!((p - 5.0).abs() < 0.05, "p={p}");
    }

    #[test]
    fn period_invariant_under_amplitude_scaling() {
        let s = sampled(|t| (2.0 * std::f64::consts::PI * t / 3.7).sin(), 0.05, 40.0);
        let s10: Vec<f64> = s.iter().map(|v| 10.0 * v).collect();
        assert_eq!(dominant_period(&s, 0.05).unwrap(), dominant_period(&s10, 0.05).unwrap());
    }

    #[test]
    fn dominant_component_wins_in_two_tone_signal() {
        let s = sampled(
            |t| {
                (2.0 * std::f64::consts::PI * t / 5.0).sin()
                    + 0.1 * (2.0 * std::f64::consts::PI * t / 1.3).sin()
            },
            0.05,
            40.0,
        );
        let p = dominant_period(&s, 0.05).unwrap();
        assert!((p - 5.0).abs() < 0.05, "p={p}");
    }

    #[test]
    fn constant_series_has_no_oscillation() {
        let s = vec![3.25; 64];
        assert!(matches!(dominant_period(&s, 0.1), Err(Error::NoOscillation)));
        assert!(dominant_period(&[1.0; 4], 0.1).is_err());
    }

    #[test]
    fn period_error_below_one_percent_across_random_periods() {
        let dt = 0.05;
        let window = 40.0;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let period = rng.gen_range(8.0 * dt..window / 4.0);
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            let s = sampled(
                |t| (std::f64::consts::TAU * t / period + phase).sin(),
                dt,
                window,
            );
            let p = dominant_period(&s, dt).unwrap();
            assert!(
                (p - period).abs() / period < 0.01,
                "period={period} estimate={p}"
            );
        }
    }

    fn all_kinds() -> [NormalFormKind; 4] {
        [
            NormalFormKind::SaddleNode,
            NormalFormKind::Transcritical,
            NormalFormKind::Pitchfork,
            NormalFormKind::Hopf,
        ]
    }

    #[test]
    fn trajectory_inside_its_own_envelope() {
        let grid = TimeGrid::new(0.0, 5.0, 201).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for kind in all_kinds() {
            for _ in 0..3 {
                let beta: f64 = rng.gen_range(-0.5..0.5);
                let nf = NormalForm::new(kind, 1.0, 1.0).unwrap();
                let z0 = Array1::from_elem(nf.dim(), 0.2);
                let seed = rng.gen();
                let ensemble = nf
                    .simulate_ensemble(z0.view(), beta, 20, 0.05, &grid, seed)
                    .unwrap();
                let latent = ensemble[0].states.clone();
                let score =
                    ensemble_mismatch(&latent, &nf, beta, 20, 0.05, &grid, seed).unwrap();
                assert_eq!(score, 0.0, "{kind:?} beta={beta}");
            }
        }
    }

    #[test]
    fn stuck_at_unstable_origin_scores_positive() {
        // latent leaves the basin entry point and then sits at the unstable
        // origin; the ensemble converges to the limit cycle, whose envelope
        // leaves the origin behind
        let nf = NormalForm::new(NormalFormKind::Hopf, 1.0, 1.0).unwrap();
        let grid = TimeGrid::new(0.0, 30.0, 601).unwrap();
        let mut latent = Array2::zeros((2, 601));
        latent[[0, 0]] = 0.3;
        let score = ensemble_mismatch(&latent, &nf, 0.3, 20, 0.05, &grid, 3).unwrap();
        assert!(score > 0.05, "score={score}");
    }

    #[test]
    fn zero_spread_collapses_to_pointwise_distance() {
        let nf = NormalForm::new(NormalFormKind::Pitchfork, 1.0, 1.0).unwrap();
        let grid = TimeGrid::new(0.0, 2.0, 51).unwrap();
        let reference = nf
            .simulate_ensemble(array![0.4].view(), 0.2, 1, 0.0, &grid, 1)
            .unwrap()
            .remove(0);
        let latent = &reference.states + 0.1;
        // latent starts at reference start + 0.1, so the degenerate ensemble
        // follows the trajectory from that shifted point
        let shifted = nf
            .simulate_ensemble(latent.column(0), 0.2, 1, 0.0, &grid, 1)
            .unwrap()
            .remove(0);
        let expect: f64 = (0..51)
            .map(|k| (latent[[0, k]] - shifted.states[[0, k]]).abs())
            .sum::<f64>()
            / 51.0;
        let score = ensemble_mismatch(&latent, &nf, 0.2, 5, 0.0, &grid, 9).unwrap();
        assert_relative_eq!(score, expect, epsilon = 1e-12);
    }

    #[test]
    fn hopf_amplitude_follows_square_root_law() {
        let nf = NormalForm::new(NormalFormKind::Hopf, 1.0, 1.0).unwrap();
        let rhs = |z: ArrayView1<f64>, beta: f64| nf.eval_rhs(z, beta).unwrap();
        let grid = TimeGrid::new(0.0, 200.0, 4001).unwrap();
        let betas: Vec<f64> = (1..=8).map(|k| 0.05 * k as f64).collect();
        let points =
            amplitude_vs_parameter(&rhs, array![0.1, 0.0].view(), &betas, &grid).unwrap();
        for (beta, amp) in points {
            let amp = amp.unwrap();
            let expect = beta.sqrt();
            assert!(
                (amp - expect).abs() / expect < 0.05,
                "beta={beta} amp={amp} expect={expect}"
            );
        }
        let sub = amplitude_vs_parameter(&rhs, array![0.1, 0.0].view(), &[-0.2], &grid).unwrap();
        assert_eq!(sub[0].1.as_ref().unwrap(), &0.0);
    }

    #[test]
    fn lorenz96_amplitude_crosses_at_critical_alpha() {
        let p = Lorenz96Params { n: 64 };
        let rhs = |u: ArrayView1<f64>, a: f64| lorenz96_translated_rhs(&p, u, a).unwrap();
        let mut u0 = Array1::zeros(64);
        u0[0] = 0.01;
        let grid = TimeGrid::new(0.0, 300.0, 6001).unwrap();
        let points = amplitude_vs_parameter(&rhs, u0.view(), &[-0.3, 0.3], &grid).unwrap();
        let below = points[0].1.as_ref().unwrap();
        let above = points[1].1.as_ref().unwrap();
        assert_eq!(*below, 0.0);
        assert!(*above > 0.1, "above={above}");
    }

    fn identity_model(state_dim: usize) -> NfAutoencoder {
        let mut phi1 = Mlp::init(&[state_dim, 2], Activation::Tanh, 0).unwrap();
        let mut psi1 = Mlp::init(&[2, state_dim], Activation::Tanh, 0).unwrap();
        phi1.weights[0].fill(0.0);
        psi1.weights[0].fill(0.0);
        for i in 0..2.min(state_dim) {
            phi1.weights[0][[i, i]] = 1.0;
            psi1.weights[0][[i, i]] = 1.0;
        }
        let mut phi2 = Mlp::init(&[1, 1], Activation::Tanh, 0).unwrap();
        phi2.weights[0][[0, 0]] = 1.0;
        let mut psi2 = Mlp::init(&[1, 1], Activation::Tanh, 0).unwrap();
        psi2.weights[0][[0, 0]] = 1.0;
        NfAutoencoder::new(
            phi1,
            psi1,
            phi2,
            psi2,
            NormalFormKind::Hopf,
            1.0,
            1.0,
            false,
            1.0,
        )
        .unwrap()
    }

    fn hopf_test_set() -> TrajectorySet {
        let nf = NormalForm::new(NormalFormKind::Hopf, 1.0, 1.0).unwrap();
        let grid = TimeGrid::new(0.0, 8.0, 161).unwrap();
        let alphas = [-0.3, -0.1, 0.2, 0.4];
        let mut trajs = Vec::new();
        for (j, &a) in alphas.iter().enumerate() {
            let mut t = nf
                .simulate_ensemble(array![0.3, 0.1].view(), a, 1, 0.0, &grid, j as u64)
                .unwrap()
                .remove(0);
            t.alpha = a;
            trajs.push(t);
        }
        TrajectorySet::from_trajectories(&trajs)
    }

    #[test]
    fn identity_model_reconstructs_perfectly() {
        let set = hopf_test_set();
        let model = identity_model(2);
        let report = validation_report(&model, &set, 10, 0.05, 7).unwrap();
        assert!(report.reconstruction_rel_error < 1e-12);
        assert_eq!(report.sign_agreement, 1.0);
        assert_eq!(report.trajectories.len(), 4);
        for t in &report.trajectories {
            assert!(t.mismatch >= 0.0);
            assert_eq!(t.latent.len(), 2);
        }
    }

    #[test]
    fn zeroed_model_has_unit_relative_error() {
        let set = hopf_test_set();
        let mut model = identity_model(2);
        for w in model.phi1.weights.iter_mut().chain(model.psi1.weights.iter_mut()) {
            w.fill(0.0);
        }
        let report = validation_report(&model, &set, 5, 0.05, 7).unwrap();
        assert_relative_eq!(report.reconstruction_rel_error, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn aggregate_metrics_invariant_to_trajectory_order() {
        let set = hopf_test_set();
        let model = identity_model(2);
        let r1 = validation_report(&model, &set, 10, 0.05, 7).unwrap();
        let r1b = validation_report(&model, &set, 10, 0.05, 7).unwrap();
        assert_eq!(r1.reconstruction_rel_error, r1b.reconstruction_rel_error);
        // reverse the trajectory order
        let n = set.n_traj();
        let mut rev_trajs = Vec::new();
        for j in (0..n).rev() {
            let r = set.traj_range(j);
            rev_trajs.push((
                set.u.slice(ndarray::s![.., r.clone()]).to_owned(),
                set.u_dot.slice(ndarray::s![.., r]).to_owned(),
                set.alpha[j],
            ));
        }
        let mut u = Array2::zeros(set.u.raw_dim());
        let mut u_dot = Array2::zeros(set.u.raw_dim());
        let mut alpha = Vec::new();
        for (j, (uj, dj, aj)) in rev_trajs.into_iter().enumerate() {
            let r = j * set.t_kept..(j + 1) * set.t_kept;
            u.slice_mut(ndarray::s![.., r.clone()]).assign(&uj);
            u_dot.slice_mut(ndarray::s![.., r]).assign(&dj);
            alpha.push(aj);
        }
        let reversed = TrajectorySet { u, u_dot, alpha, t_kept: set.t_kept, grid: set.grid };
        let r2 = validation_report(&model, &reversed, 10, 0.05, 7).unwrap();
        assert_relative_eq!(
            r1.reconstruction_rel_error,
            r2.reconstruction_rel_error,
            epsilon = 1e-12
        );
        assert_eq!(r1.sign_agreement, r2.sign_agreement);
    }

    #[test]
    fn csv_and_svg_exports() {
        let dir = tempfile::tempdir().unwrap();
        let times: Vec<f64> = (0..10).map(|k| 0.1 * k as f64).collect();
        let series = Array2::from_shape_fn((2, 10), |(i, k)| (i as f64 + 1.0) * k as f64);
        let path = dir.path().join("trace.csv");
        write_trace_csv(&path, &times, &series).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,z0,z1\n"));
        assert_eq!(text.lines().count(), 11);

        let lo = &series - 0.5;
        let hi = &series + 0.5;
        let svg = svg_line_plot(&times, &series, Some((&lo, &hi)), "latent");
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("<polygon").count(), 2);
        assert!(svg.contains("latent"));
    }
}
