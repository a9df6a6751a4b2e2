//! Interface evolution in the `θ–L` formulation with the small-scale
//! decomposition: equal-arclength tangential velocity, a second-order linear
//! propagator for `θ̂`, Adams–Bashforth updates for `s_α` and the reference
//! marker, spectral filters, and curve reconstruction.
//!
//! `θ` is stored as samples of the lifted tangent angle. Its periodic part
//! `ψ = θ − α` is what gets transformed and propagated.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::{geometry_of, reconstruct_curve, CurveError, MarkerCurve};
use crate::field_solver::FieldError;
use crate::spectral;

pub use crate::spectral::hilbert as hilbert_transform;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvolutionError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error("arclength speed became non-positive ({s_alpha}) at t = {t}")]
    Instability { s_alpha: f64, t: f64 },
    #[error("velocity has {got} samples, curve has {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("non-finite value in the updated interface at t = {t}")]
    NonFinite { t: f64 },
}

/// Knobs of one time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepOptions {
    /// Coefficient `c` of the extracted term `(c/s_α³)ℋ[θ_ααα]`.
    pub stiffness: f64,
    /// Plain Adams–Bashforth on the full rate: no term is extracted and the
    /// integrating factors are 1.
    #[serde(default)]
    pub explicit: bool,
    #[serde(default = "default_filter_order")]
    pub filter_order: i32,
    #[serde(default = "default_filter_strength")]
    pub filter_strength: f64,
    /// Modes below this magnitude are zeroed; `None` disables the filter.
    #[serde(default = "default_krasny")]
    pub krasny_threshold: Option<f64>,
}

fn default_filter_order() -> i32 {
    25
}

fn default_filter_strength() -> f64 {
    10.0
}

fn default_krasny() -> Option<f64> {
    Some(1e-12)
}

impl StepOptions {
    pub fn new(stiffness: f64) -> Self {
        Self {
            stiffness,
            explicit: false,
            filter_order: default_filter_order(),
            filter_strength: default_filter_strength(),
            krasny_threshold: default_krasny(),
        }
    }
}

/// Quantities of the previous step needed by the two-step schemes.
#[derive(Debug, Clone, PartialEq)]
struct History {
    n_hat: Vec<Complex64>,
    m: f64,
    v0_n0: [f64; 2],
    s_alpha: f64,
}

#[derive(Debug, Clone)]
pub struct EvolutionState {
    theta: Vec<f64>,
    s_alpha: f64,
    ref_point: [f64; 2],
    t: f64,
    curve: MarkerCurve,
    history: Option<History>,
}

impl EvolutionState {
    /// Starts from a curve that is already equally spaced in arclength.
    pub fn from_curve(curve: MarkerCurve, t: f64) -> Result<Self, EvolutionError> {
        let geom = geometry_of(&curve)?;
        Ok(Self {
            theta: geom.theta,
            s_alpha: geom.s_alpha,
            ref_point: curve.point(0),
            t,
            curve,
            history: None,
        })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn s_alpha(&self) -> f64 {
        self.s_alpha
    }

    pub fn ref_point(&self) -> [f64; 2] {
        self.ref_point
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn curve(&self) -> &MarkerCurve {
        &self.curve
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Advances by `dt`. `velocity` returns the normal velocity on the given curve.
    pub fn step<F>(
        &self,
        dt: f64,
        opts: &StepOptions,
        velocity: F,
    ) -> Result<EvolutionState, EvolutionError>
    where
        F: FnOnce(&MarkerCurve) -> Result<Vec<f64>, FieldError>,
    {
        let n = self.len();
        let v = velocity(&self.curve)?;
        if v.len() != n {
            return Err(EvolutionError::ShapeMismatch {
                expected: n,
                got: v.len(),
            });
        }
        let s = self.s_alpha;
        let psi = periodic_part(&self.theta);
        let psi_hat = spectral::forward(&psi);
        let theta_a: Vec<f64> = spectral::derivative(&psi, 1)
            .iter()
            .map(|d| 1.0 + d)
            .collect();

        let g: Vec<f64> = theta_a.iter().zip(&v).map(|(a, b)| a * b).collect();
        let (m, p) = spectral::periodic_antiderivative(&g);
        let tang: Vec<f64> = p.iter().map(|x| -x).collect();
        let c = if opts.explicit { 0.0 } else { opts.stiffness };
        let n_hat = nonlinear_spectrum(&psi_hat, &theta_a, s, &v, &tang, c);

        let v0_n0 = [v[0] * self.theta[0].sin(), -v[0] * self.theta[0].cos()];
        let (s_new, ref_new) = match &self.history {
            Some(h) => (
                s + 0.5 * dt * (3.0 * m - h.m),
                [
                    self.ref_point[0] + 0.5 * dt * (3.0 * v0_n0[0] - h.v0_n0[0]),
                    self.ref_point[1] + 0.5 * dt * (3.0 * v0_n0[1] - h.v0_n0[1]),
                ],
            ),
            None => (
                s + dt * m,
                [
                    self.ref_point[0] + dt * v0_n0[0],
                    self.ref_point[1] + dt * v0_n0[1],
                ],
            ),
        };
        let t_new = self.t + dt;
        if !(s_new > 0.0) {
            return Err(EvolutionError::Instability {
                s_alpha: s_new,
                t: t_new,
            });
        }

        let inv3 = |x: f64| 1.0 / (x * x * x);
        let one_step = 0.5 * dt * (inv3(s) + inv3(s_new));
        let mut new_hat = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            let k3 = (spectral::wavenumber(j, n).abs() as f64).powi(3);
            let e1 = (-c * k3 * one_step).exp();
            new_hat[j] = match &self.history {
                Some(h) => {
                    let two_step = dt * (0.5 * inv3(h.s_alpha) + inv3(s) + 0.5 * inv3(s_new));
                    let e2 = (-c * k3 * two_step).exp();
                    e1 * psi_hat[j] + 0.5 * dt * (3.0 * e1 * n_hat[j] - e2 * h.n_hat[j])
                }
                None => e1 * (psi_hat[j] + dt * n_hat[j]),
            };
        }
        fourier_filter(&mut new_hat, opts.filter_order, opts.filter_strength);
        if let Some(thr) = opts.krasny_threshold {
            krasny_filter(&mut new_hat, thr);
        }

        let theta: Vec<f64> = spectral::inverse(&new_hat)
            .iter()
            .enumerate()
            .map(|(j, p)| p + 2.0 * PI * j as f64 / n as f64)
            .collect();
        if theta.iter().any(|x| !x.is_finite()) || !ref_new.iter().all(|x| x.is_finite()) {
            return Err(EvolutionError::NonFinite { t: t_new });
        }
        let curve = reconstruct_curve(&theta, s_new, ref_new)?;
        Ok(EvolutionState {
            theta,
            s_alpha: s_new,
            ref_point: ref_new,
            t: t_new,
            curve,
            history: Some(History {
                n_hat,
                m,
                v0_n0,
                s_alpha: s,
            }),
        })
    }
}

fn periodic_part(theta: &[f64]) -> Vec<f64> {
    let n = theta.len();
    theta
        .iter()
        .enumerate()
        .map(|(j, t)| t - 2.0 * PI * j as f64 / n as f64)
        .collect()
}

/// Tangential velocity keeping the markers equally spaced in arclength:
/// `T(α) = (α/2π)∫θ_α V − ∫₀^α θ_α V`.
pub fn tangent_velocity(theta: &[f64], v: &[f64]) -> Vec<f64> {
    let psi = periodic_part(theta);
    let g: Vec<f64> = spectral::derivative(&psi, 1)
        .iter()
        .zip(v)
        .map(|(d, vi)| (1.0 + d) * vi)
        .collect();
    let (_, p) = spectral::periodic_antiderivative(&g);
    p.iter().map(|x| -x).collect()
}

fn nonlinear_spectrum(
    psi_hat: &[Complex64],
    theta_a: &[f64],
    s: f64,
    v: &[f64],
    tang: &[f64],
    stiffness: f64,
) -> Vec<Complex64> {
    let n = psi_hat.len();
    let v_a = spectral::derivative(v, 1);
    let rate: Vec<f64> = (0..n)
        .map(|i| (theta_a[i] * tang[i] - v_a[i]) / s)
        .collect();
    let mut out = spectral::forward(&rate);
    let c = stiffness / (s * s * s);
    for (j, o) in out.iter_mut().enumerate() {
        let k = spectral::wavenumber(j, n).abs() as f64;
        *o += c * k * k * k * psi_hat[j];
    }
    out
}

/// `N = (1/s_α)(θ_α T − V_α) − (c/s_α³)ℋ[θ_ααα]`.
pub fn sde_nonlinear_term(
    theta: &[f64],
    s_alpha: f64,
    v: &[f64],
    tang: &[f64],
    stiffness: f64,
) -> Vec<f64> {
    let psi = periodic_part(theta);
    let theta_a: Vec<f64> = spectral::derivative(&psi, 1)
        .iter()
        .map(|d| 1.0 + d)
        .collect();
    let hat = nonlinear_spectrum(
        &spectral::forward(&psi),
        &theta_a,
        s_alpha,
        v,
        tang,
        stiffness,
    );
    spectral::inverse(&hat)
}

/// Multiplies mode `k` by `exp(−strength (2|k|/N)^order)`.
pub fn fourier_filter(spectrum: &mut [Complex64], order: i32, strength: f64) {
    let n = spectrum.len();
    for (j, c) in spectrum.iter_mut().enumerate() {
        let xi = 2.0 * spectral::wavenumber(j, n).abs() as f64 / n as f64;
        *c *= (-strength * xi.powi(order)).exp();
    }
}

/// Zeroes modes whose magnitude is below `threshold`.
pub fn krasny_filter(spectrum: &mut [Complex64], threshold: f64) {
    for c in spectrum.iter_mut() {
        if c.norm() < threshold {
            *c = Complex64::new(0.0, 0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::equal_arclength_reparametrize;
    use crate::field_solver::{FieldSolver, SolverOptions};
    use crate::linear_theory::radial_traces;
    use crate::params::ModelParams;
    use proptest::prelude::*;

    fn alphas(n: usize) -> Vec<f64> {
        spectral::nodes(n)
    }

    #[test]
    fn hilbert_multiplier() {
        let a = alphas(32);
        for k in 1..5 {
            let c: Vec<f64> = a.iter().map(|x| (k as f64 * x).cos()).collect();
            let s: Vec<f64> = a.iter().map(|x| (k as f64 * x).sin()).collect();
            let hc = hilbert_transform(&c);
            let hs = hilbert_transform(&s);
            for j in 0..32 {
                assert!((hc[j] - s[j]).abs() < 1e-14);
                assert!((hs[j] + c[j]).abs() < 1e-14);
            }
        }
        assert!(hilbert_transform(&[3.0; 16])
            .iter()
            .all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn tangent_velocity_examples() {
        let n = 64;
        let theta: Vec<f64> = alphas(n).iter().map(|a| a + PI / 2.0).collect();
        let t = tangent_velocity(&theta, &[0.7; 64]);
        assert!(t.iter().all(|x| x.abs() < 1e-14));
        let l = 3.0;
        let v: Vec<f64> = alphas(n).iter().map(|a| (l * a).cos()).collect();
        let t = tangent_velocity(&theta, &v);
        for (j, a) in alphas(n).iter().enumerate() {
            assert!((t[j] + (l * a).sin() / l).abs() < 1e-14);
        }
    }

    #[test]
    fn nonlinear_term_examples() {
        let n = 64;
        let circle: Vec<f64> = alphas(n).iter().map(|a| a + PI / 2.0).collect();
        let nl = sde_nonlinear_term(&circle, 2.0, &[0.3; 64], &[0.0; 64], 0.05);
        assert!(nl.iter().all(|x| x.abs() < 1e-13));
        // θ = α + 0.01 sin 3α: ℋ[θ_ααα] = ℋ[−0.27 cos 3α] = −0.27 sin 3α
        let (s, c) = (1.5, 0.2);
        let theta: Vec<f64> = alphas(n)
            .iter()
            .map(|a| a + 0.01 * (3.0 * a).sin())
            .collect();
        let nl = sde_nonlinear_term(&theta, s, &[0.0; 64], &[0.0; 64], c);
        for (j, a) in alphas(n).iter().enumerate() {
            let want = c / s.powi(3) * 0.27 * (3.0 * a).sin();
            assert!((nl[j] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn nonlinear_term_reproduces_full_rate() {
        let n = 64;
        let (s, c) = (1.3, 0.4);
        let theta: Vec<f64> = alphas(n)
            .iter()
            .map(|a| a + 0.1 * (2.0 * a).cos() + 0.05 * (5.0 * a).sin())
            .collect();
        let v: Vec<f64> = alphas(n)
            .iter()
            .map(|a| 0.5 + 0.2 * (3.0 * a).sin())
            .collect();
        let tang = tangent_velocity(&theta, &v);
        let nl = sde_nonlinear_term(&theta, s, &v, &tang, c);
        let psi = periodic_part(&theta);
        let h = hilbert_transform(&spectral::derivative(&psi, 3));
        let ta = spectral::derivative(&psi, 1);
        let va = spectral::derivative(&v, 1);
        for i in 0..n {
            let full = ((1.0 + ta[i]) * tang[i] - va[i]) / s;
            assert!((c / s.powi(3) * h[i] + nl[i] - full).abs() < 1e-12);
        }
    }

    #[test]
    fn explicit_first_step_is_euler_on_full_rate() {
        let n = 64;
        let curve = MarkerCurve::circle(n, 2.0, [0.0, 0.0]).unwrap();
        let state = EvolutionState::from_curve(curve, 0.0).unwrap();
        let v: Vec<f64> = alphas(n)
            .iter()
            .map(|a| 0.5 + 0.2 * (3.0 * a).sin())
            .collect();
        let mut opts = StepOptions::new(5.0);
        opts.explicit = true;
        opts.filter_strength = 0.0;
        opts.krasny_threshold = None;
        let dt = 1e-3;
        let next = state.step(dt, &opts, |_| Ok(v.clone())).unwrap();
        let tang = tangent_velocity(state.theta(), &v);
        let va = spectral::derivative(&v, 1);
        for i in 0..n {
            let rate = (tang[i] - va[i]) / state.s_alpha();
            assert!((next.theta()[i] - state.theta()[i] - dt * rate).abs() < 1e-13);
        }
    }

    #[test]
    fn filters() {
        let n = 32;
        let mut spec = vec![Complex64::new(1.0, 0.0); n];
        fourier_filter(&mut spec, 25, 10.0);
        assert_eq!(spec[0], Complex64::new(1.0, 0.0));
        assert!((spec[n / 2].re - (-10f64).exp()).abs() < 1e-18);
        assert!((spec[n / 2].re - 4.54e-5).abs() < 1e-7);
        let mut spec = vec![Complex64::new(1e-3, 1e-3); n];
        let orig = spec.clone();
        krasny_filter(&mut spec, 1e-12);
        assert_eq!(spec, orig);
        spec[3] = Complex64::new(1e-13, 0.0);
        krasny_filter(&mut spec, 1e-12);
        assert_eq!(spec[3], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn stationary_circle_is_a_fixed_point() {
        let n = 64;
        let p = ModelParams::new(1.0, 0.01, 0.0, 0.0, 5.0, 0.001).unwrap();
        let mut solver = FieldSolver::new(
            MarkerCurve::circle(n, 13.0, [0.0, 0.0]).unwrap(),
            p,
            SolverOptions::default(),
        )
        .unwrap();
        let start = MarkerCurve::circle(n, 2.0, [0.0, 0.0]).unwrap();
        let mut state = EvolutionState::from_curve(start.clone(), 0.0).unwrap();
        let opts = StepOptions::new(p.adhesion);
        for _ in 0..100 {
            state = state
                .step(0.05, &opts, |c| solver.solve(c).map(|f| f.velocity))
                .unwrap();
        }
        assert!(state.curve().max_distance(&start) < 1e-10);
    }

    #[test]
    fn prescribed_uniform_velocity_grows_circle_exactly() {
        let n = 32;
        let mut state =
            EvolutionState::from_curve(MarkerCurve::circle(n, 1.0, [0.0, 0.0]).unwrap(), 0.0)
                .unwrap();
        let opts = StepOptions::new(0.1);
        for _ in 0..10 {
            state = state.step(0.1, &opts, |_| Ok(vec![0.5; 32])).unwrap();
        }
        let want = MarkerCurve::circle(n, 1.5, [0.0, 0.0]).unwrap();
        assert!(state.curve().max_distance(&want) < 1e-12);
        assert!((state.t() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn shrinking_to_nothing_is_an_instability() {
        let state =
            EvolutionState::from_curve(MarkerCurve::circle(16, 1.0, [0.0, 0.0]).unwrap(), 0.0)
                .unwrap();
        let err = state
            .step(1.0, &StepOptions::new(0.0), |_| Ok(vec![-2.0; 16]))
            .unwrap_err();
        assert!(matches!(err, EvolutionError::Instability { .. }));
        let err = state
            .step(1.0, &StepOptions::new(0.0), |_| Ok(vec![0.0; 8]))
            .unwrap_err();
        assert!(matches!(err, EvolutionError::ShapeMismatch { .. }));
    }

    #[test]
    fn circle_radius_follows_radial_ode() {
        // dR/dt = P·C(R) integrated by RK4 with a fine step
        let n = 32;
        let p = ModelParams::new(1.0, 0.01, 0.5, 0.0, 5.0, 0.001).unwrap();
        let far = MarkerCurve::circle(n, 13.0, [0.0, 0.0]).unwrap();
        let mut solver = FieldSolver::new(far, p, SolverOptions::default()).unwrap();
        let mut state =
            EvolutionState::from_curve(MarkerCurve::circle(n, 2.0, [0.0, 0.0]).unwrap(), 0.0)
                .unwrap();
        let opts = StepOptions::new(p.adhesion);
        let (dt, t_end) = (0.005, 1.0);
        for _ in 0..(t_end / dt) as usize {
            state = state
                .step(dt, &opts, |c| solver.solve(c).map(|f| f.velocity))
                .unwrap();
        }
        let rate = |r: f64| p.proliferation * radial_traces(r, 13.0, &p).unwrap().dsigma_dn;
        let mut r = 2.0;
        let h = 1e-3;
        for _ in 0..(t_end / h).round() as usize {
            let k1 = rate(r);
            let k2 = rate(r + 0.5 * h * k1);
            let k3 = rate(r + 0.5 * h * k2);
            let k4 = rate(r + h * k3);
            r += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        let r_eff = state.s_alpha();
        assert!((r_eff - r).abs() / r < 1e-4, "{r_eff} vs {r}");
    }

    #[test]
    fn markers_stay_equally_spaced() {
        let n = 64;
        let p = ModelParams::new(1.0, 0.01, 0.5, 0.0, 5.0, 0.001).unwrap();
        let start = equal_arclength_reparametrize(
            &MarkerCurve::polar(n, |t| 2.0 + 0.1 * (2.0 * t).cos()).unwrap(),
            1e-14,
        )
        .unwrap();
        let mut solver = FieldSolver::new(
            MarkerCurve::circle(n, 13.0, [0.0, 0.0]).unwrap(),
            p,
            SolverOptions::default(),
        )
        .unwrap();
        let mut state = EvolutionState::from_curve(start, 0.0).unwrap();
        let opts = StepOptions::new(p.adhesion);
        for _ in 0..20 {
            state = state
                .step(0.01, &opts, |c| solver.solve(c).map(|f| f.velocity))
                .unwrap();
            let geom = geometry_of(state.curve()).unwrap();
            let dev = geom
                .speed
                .iter()
                .map(|s| (s - state.s_alpha()).abs())
                .fold(0.0, f64::max);
            assert!(dev / state.s_alpha() < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn tangent_velocity_vanishes_at_origin_and_is_periodic(
            amp in 0.0f64..0.2, k in 1u32..6, c0 in -1.0f64..1.0, c1 in -1.0f64..1.0
        ) {
            let n = 64;
            let theta: Vec<f64> = alphas(n).iter().map(|a| a + amp * (k as f64 * a).sin()).collect();
            let v: Vec<f64> = alphas(n).iter().map(|a| c0 + c1 * (2.0 * a).cos() + 0.3 * a.sin().powi(2)).collect();
            let t = tangent_velocity(&theta, &v);
            prop_assert!(t[0].abs() < 1e-13);
            // periodic: the spectral interpolant closes up
            let interp = spectral::TrigInterpolant::new(&t);
            prop_assert!((interp.eval(2.0 * PI) - t[0]).abs() < 1e-12);
            // s_αt = T_α + θ_α V is α-independent
            let psi = periodic_part(&theta);
            let ta = spectral::derivative(&psi, 1);
            let tda = spectral::derivative(&t, 1);
            let sat: Vec<f64> = (0..n).map(|i| tda[i] + (1.0 + ta[i]) * v[i]).collect();
            let m = spectral::mean(&sat);
            prop_assert!(sat.iter().all(|x| (x - m).abs() < 1e-12));
        }
    }
}
