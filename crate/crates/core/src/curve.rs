//! Closed 2π-periodic marker curves and their spectral geometry.
//!
//! Orientation is counter-clockwise; the outward normal is
//! `(y_α, -x_α)/s_α = (sin θ, -cos θ)` where `θ` is the tangent angle.

use std::f64::consts::PI;

use thiserror::Error;

use crate::spectral::{self, TrigInterpolant};

/// Below this arclength speed a curve is considered degenerate.
pub const DEGENERATE_SPEED: f64 = 1e-12;

const NEWTON_MAX_ITER: usize = 50;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurveError {
    #[error("marker count {0} is not a power of two >= 4")]
    BadSampleCount(usize),
    #[error("coordinate arrays differ in length ({x} vs {y})")]
    ShapeMismatch { x: usize, y: usize },
    #[error("degenerate curve: s_alpha = {speed:e} at marker {index}")]
    Degenerate { index: usize, speed: f64 },
    #[error("curve is not a positively oriented simple loop (tangent winding {winding:.3} rad)")]
    Orientation { winding: f64 },
    #[error("equal-arclength Newton iteration did not converge at marker {index} (residual {residual:e})")]
    Reparametrization { index: usize, residual: f64 },
    #[error("non-finite coordinate at marker {0}")]
    NonFinite(usize),
}

/// A closed curve sampled at `α_j = 2πj/N`, `N` a power of two.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerCurve {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl MarkerCurve {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self, CurveError> {
        if x.len() != y.len() {
            return Err(CurveError::ShapeMismatch {
                x: x.len(),
                y: y.len(),
            });
        }
        let n = x.len();
        if n < 4 || !n.is_power_of_two() {
            return Err(CurveError::BadSampleCount(n));
        }
        if let Some(i) = (0..n).find(|&i| !x[i].is_finite() || !y[i].is_finite()) {
            return Err(CurveError::NonFinite(i));
        }
        Ok(Self { x, y })
    }

    /// Samples `f(α)` at the `n` equispaced parameter nodes.
    pub fn from_parametrization(
        n: usize,
        f: impl Fn(f64) -> (f64, f64),
    ) -> Result<Self, CurveError> {
        let (x, y) = spectral::nodes(n).into_iter().map(f).unzip();
        Self::new(x, y)
    }

    /// Polar curve `r(θ)` sampled at equispaced polar angles.
    pub fn polar(n: usize, r: impl Fn(f64) -> f64) -> Result<Self, CurveError> {
        Self::from_parametrization(n, |t| {
            let rt = r(t);
            (rt * t.cos(), rt * t.sin())
        })
    }

    pub fn circle(n: usize, radius: f64, center: [f64; 2]) -> Result<Self, CurveError> {
        Self::from_parametrization(n, |t| {
            (center[0] + radius * t.cos(), center[1] + radius * t.sin())
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn point(&self, j: usize) -> [f64; 2] {
        [self.x[j], self.y[j]]
    }

    pub fn alpha(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.len() as f64
    }

    /// Largest marker-wise distance to another curve with the same sampling.
    pub fn max_distance(&self, other: &MarkerCurve) -> f64 {
        self.x
            .iter()
            .zip(&self.y)
            .zip(other.x.iter().zip(&other.y))
            .map(|((x0, y0), (x1, y1))| (x0 - x1).hypot(y0 - y1))
            .fold(0.0, f64::max)
    }

    /// Trigonometric resampling onto `m` markers at the same parameter values.
    pub fn resample(&self, m: usize) -> Result<MarkerCurve, CurveError> {
        MarkerCurve::new(
            spectral::resample(&self.x, m),
            spectral::resample(&self.y, m),
        )
    }
}

/// Spectral geometry of a [`MarkerCurve`].
#[derive(Debug, Clone)]
pub struct CurveGeometry {
    /// Continuous lift of the tangent angle; `θ(α) - α` is periodic.
    pub theta: Vec<f64>,
    /// Mean arclength speed `L/2π` (the uniform `s_α` of an equal-arclength curve).
    pub s_alpha: f64,
    /// Pointwise arclength speed.
    pub speed: Vec<f64>,
    pub kappa: Vec<f64>,
    pub tangent: Vec<[f64; 2]>,
    pub normal: Vec<[f64; 2]>,
    pub x_alpha: Vec<f64>,
    pub y_alpha: Vec<f64>,
}

impl CurveGeometry {
    pub fn length(&self) -> f64 {
        2.0 * PI * self.s_alpha
    }
}

/// `d^order f/dα^order` of periodic samples.
pub fn spectral_derivative(samples: &[f64], order: u32) -> Vec<f64> {
    spectral::derivative(samples, order)
}

pub fn geometry_of(curve: &MarkerCurve) -> Result<CurveGeometry, CurveError> {
    let n = curve.len();
    let xa = spectral::derivative(&curve.x, 1);
    let ya = spectral::derivative(&curve.y, 1);
    let xaa = spectral::derivative(&curve.x, 2);
    let yaa = spectral::derivative(&curve.y, 2);

    let mut speed = Vec::with_capacity(n);
    for i in 0..n {
        let s = xa[i].hypot(ya[i]);
        if !(s >= DEGENERATE_SPEED) {
            return Err(CurveError::Degenerate { index: i, speed: s });
        }
        speed.push(s);
    }

    let mut theta = Vec::with_capacity(n);
    let mut prev = ya[0].atan2(xa[0]);
    theta.push(prev);
    for i in 1..n {
        let raw = ya[i].atan2(xa[i]);
        let lifted = prev + wrap_angle(raw - prev);
        theta.push(lifted);
        prev = lifted;
    }
    // lift of θ_0 continued one step past θ_{N-1}
    let closing = prev + wrap_angle(theta[0] - prev);
    let winding = closing - theta[0];
    if (winding - 2.0 * PI).abs() > 1e-6 {
        return Err(CurveError::Orientation { winding });
    }

    let kappa: Vec<f64> = (0..n)
        .map(|i| (xa[i] * yaa[i] - xaa[i] * ya[i]) / speed[i].powi(3))
        .collect();
    let tangent: Vec<[f64; 2]> = (0..n)
        .map(|i| [xa[i] / speed[i], ya[i] / speed[i]])
        .collect();
    let normal: Vec<[f64; 2]> = (0..n)
        .map(|i| [ya[i] / speed[i], -xa[i] / speed[i]])
        .collect();
    let s_alpha = spectral::mean(&speed);

    Ok(CurveGeometry {
        theta,
        s_alpha,
        speed,
        kappa,
        tangent,
        normal,
        x_alpha: xa,
        y_alpha: ya,
    })
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// Resamples the curve so that markers are equally spaced in arclength.
///
/// Each new parameter `α_j` solves `∫_0^{α_j} s_β dβ = jL/N` by Newton's method
/// from the uniform guess, to `|residual| <= tol·L`; the markers are then
/// evaluated on the trigonometric interpolant of the input.
pub fn equal_arclength_reparametrize(
    curve: &MarkerCurve,
    tol: f64,
) -> Result<MarkerCurve, CurveError> {
    let geom = geometry_of(curve)?;
    let n = curve.len();
    let (mean_speed, arc_tilde) = spectral::periodic_antiderivative(&geom.speed);
    let length = 2.0 * PI * mean_speed;
    let arc = TrigInterpolant::new(&arc_tilde);
    let speed = TrigInterpolant::new(&geom.speed);
    let x = TrigInterpolant::new(&curve.x);
    let y = TrigInterpolant::new(&curve.y);

    let mut new_x = Vec::with_capacity(n);
    let mut new_y = Vec::with_capacity(n);
    for j in 0..n {
        let target = length * j as f64 / n as f64;
        let mut a = 2.0 * PI * j as f64 / n as f64;
        let mut residual = f64::INFINITY;
        let mut converged = false;
        for _ in 0..NEWTON_MAX_ITER {
            residual = mean_speed * a + arc.eval(a) - target;
            if residual.abs() <= tol * length {
                converged = true;
                break;
            }
            a -= residual / speed.eval(a);
        }
        if !converged {
            return Err(CurveError::Reparametrization { index: j, residual });
        }
        new_x.push(x.eval(a));
        new_y.push(y.eval(a));
    }
    MarkerCurve::new(new_x, new_y)
}

/// Rebuilds marker positions from a tangent-angle profile and uniform speed:
/// `x(α) = x(0) + s_α (∫_0^α cos θ − (α/2π) ∫_0^{2π} cos θ)`, likewise for `y`.
pub fn reconstruct_curve(
    theta: &[f64],
    s_alpha: f64,
    ref_point: [f64; 2],
) -> Result<MarkerCurve, CurveError> {
    let cos: Vec<f64> = theta.iter().map(|t| t.cos()).collect();
    let sin: Vec<f64> = theta.iter().map(|t| t.sin()).collect();
    // the mean part integrates to α·mean and cancels against the closure term
    let (_, px) = spectral::periodic_antiderivative(&cos);
    let (_, py) = spectral::periodic_antiderivative(&sin);
    let x = px.iter().map(|p| ref_point[0] + s_alpha * p).collect();
    let y = py.iter().map(|p| ref_point[1] + s_alpha * p).collect();
    MarkerCurve::new(x, y)
}

/// Enclosed area `½∮(x y_α − y x_α)dα` and length `∮ s_α dα`.
pub fn area_and_length(curve: &MarkerCurve) -> (f64, f64) {
    let n = curve.len();
    let xa = spectral::derivative(&curve.x, 1);
    let ya = spectral::derivative(&curve.y, 1);
    let h = 2.0 * PI / n as f64;
    let mut area = 0.0;
    let mut length = 0.0;
    for i in 0..n {
        area += curve.x[i] * ya[i] - curve.y[i] * xa[i];
        length += xa[i].hypot(ya[i]);
    }
    (0.5 * h * area, h * length)
}
