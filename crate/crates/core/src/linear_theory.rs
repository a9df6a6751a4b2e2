//! Linear stability of a perturbed circular tumor `r = R + δ cos(lθ)` inside a
//! concentric far-field circle of radius `R_∞`.
//!
//! Coefficients come from solving the boundary-condition systems directly:
//! `σ = A₁I₀(μ₁r) + δB₁I_l(μ₁r)cos lθ` inside and
//! `σ = A₂I₀(μ₂r) + A₃K₀(μ₂r) + δ(B₂I_l(μ₂r) + B₃K_l(μ₂r))cos lθ` outside.

use serde::Serialize;
use thiserror::Error;

use crate::linalg::{lu_solve, DenseMatrix};
use crate::params::ModelParams;
use crate::specfun::{bessel_i, bessel_k, SpecfunError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinearError {
    #[error("need 0 < R < R_inf, got R = {r}, R_inf = {r_inf}")]
    Geometry { r: f64, r_inf: f64 },
    #[error("mode number must be >= 2, got {0}")]
    Mode(u32),
    #[error("boundary-condition system is singular")]
    Singular,
    #[error(transparent)]
    Bessel(#[from] SpecfunError),
    #[error("time step must be positive and finite, got {0}")]
    Step(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialCoefficients {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationCoefficients {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthRates {
    pub dr_dt: f64,
    /// `(δ/R)⁻¹ d(δ/R)/dt`.
    pub shape_rate: f64,
    /// `δ⁻¹ dδ/dt`.
    pub delta_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearModeState {
    pub r: f64,
    pub delta: f64,
    pub l: u32,
    pub r_inf: f64,
}

fn check(r: f64, r_inf: f64) -> Result<(), LinearError> {
    if r > 0.0 && r < r_inf && r_inf.is_finite() {
        Ok(())
    } else {
        Err(LinearError::Geometry { r, r_inf })
    }
}

/// Solves a small dense system after equilibrating columns, which keeps the
/// wildly different magnitudes of `I_l` and `K_l` from spoiling the pivots.
fn solve_scaled(rows: [[f64; 3]; 3], rhs: [f64; 3]) -> Result<[f64; 3], LinearError> {
    let mut scale = [0.0; 3];
    for (j, s) in scale.iter_mut().enumerate() {
        *s = rows.iter().map(|r| r[j].abs()).fold(0.0, f64::max);
        if !(*s > 0.0) || !s.is_finite() {
            return Err(LinearError::Singular);
        }
    }
    let m = DenseMatrix::from_fn(3, 3, |i, j| rows[i][j] / scale[j]);
    let sol = lu_solve(&m, &rhs).map_err(|_| LinearError::Singular)?;
    Ok([
        sol.x[0] / scale[0],
        sol.x[1] / scale[1],
        sol.x[2] / scale[2],
    ])
}

/// Radial solution: continuity of `σ` and of `D∂σ/∂r` at `R`, `σ(R_∞) = 1`.
pub fn radial_coefficients(
    r: f64,
    r_inf: f64,
    params: &ModelParams,
) -> Result<RadialCoefficients, LinearError> {
    check(r, r_inf)?;
    let (m1, m2, d) = (params.mu1(), params.mu2(), params.diffusivity);
    let rows = [
        [
            bessel_i(0, m1 * r)?,
            -bessel_i(0, m2 * r)?,
            -bessel_k(0, m2 * r)?,
        ],
        [0.0, bessel_i(0, m2 * r_inf)?, bessel_k(0, m2 * r_inf)?],
        [
            m1 * bessel_i(1, m1 * r)?,
            -d * m2 * bessel_i(1, m2 * r)?,
            d * m2 * bessel_k(1, m2 * r)?,
        ],
    ];
    let [a1, a2, a3] = solve_scaled(rows, [0.0, 1.0, 0.0])?;
    Ok(RadialCoefficients { a1, a2, a3 })
}

/// First-order coefficients from the `O(δ)` interface and far-field conditions.
pub fn perturbation_coefficients(
    r: f64,
    r_inf: f64,
    params: &ModelParams,
    l: u32,
) -> Result<PerturbationCoefficients, LinearError> {
    if l < 2 {
        return Err(LinearError::Mode(l));
    }
    let a = radial_coefficients(r, r_inf, params)?;
    let (m1, m2, d) = (params.mu1(), params.mu2(), params.diffusivity);
    let (x1, x2) = (m1 * r, m2 * r);
    let c = m1 * a.a1 * bessel_i(1, x1)?;
    let il1 = bessel_i(l, x1)?;
    let il2 = bessel_i(l, x2)?;
    let kl2 = bessel_k(l, x2)?;
    let dil1 = bessel_i(l - 1, x1)? - l as f64 / x1 * il1;
    let dil2 = bessel_i(l - 1, x2)? - l as f64 / x2 * il2;
    let dkl2 = -bessel_k(l - 1, x2)? - l as f64 / x2 * kl2;
    // second radial derivatives of the O(1) solution at R
    let s1 = a.a1 * m1 * m1 * (bessel_i(0, x1)? - bessel_i(1, x1)? / x1);
    let s2 = a.a2 * m2 * m2 * (bessel_i(0, x2)? - bessel_i(1, x2)? / x2)
        + a.a3 * m2 * m2 * (bessel_k(0, x2)? + bessel_k(1, x2)? / x2);
    let rows = [
        [il1, -il2, -kl2],
        [0.0, bessel_i(l, m2 * r_inf)?, bessel_k(l, m2 * r_inf)?],
        [m1 * dil1, -d * m2 * dil2, -d * m2 * dkl2],
    ];
    let rhs = [c * (1.0 / d - 1.0), 0.0, d * s2 - s1];
    let [b1, b2, b3] = solve_scaled(rows, rhs)?;
    Ok(PerturbationCoefficients { b1, b2, b3 })
}

/// `C = μ₁A₁I₁(μ₁R)`, the radial flux into the tumor.
pub fn radial_flux(r: f64, r_inf: f64, params: &ModelParams) -> Result<f64, LinearError> {
    let a = radial_coefficients(r, r_inf, params)?;
    Ok(params.mu1() * a.a1 * bessel_i(1, params.mu1() * r)?)
}

/// Nutrient-dependent pieces of the shape equation:
/// `(flux term, taxis term)` with
/// flux `= μ₁²A₁I₀ + B₁(μ₁I_{l−1} − (l/R)I_l) − 2C/R` and taxis `= B₁(l/R)I_l + (l/R)C`.
fn shape_terms(
    r: f64,
    r_inf: f64,
    params: &ModelParams,
    l: u32,
) -> Result<(f64, f64, f64), LinearError> {
    let a = radial_coefficients(r, r_inf, params)?;
    let b = perturbation_coefficients(r, r_inf, params, l)?;
    let m1 = params.mu1();
    let x1 = m1 * r;
    let c = m1 * a.a1 * bessel_i(1, x1)?;
    let il = bessel_i(l, x1)?;
    let lf = l as f64;
    let flux = m1 * m1 * a.a1 * bessel_i(0, x1)? + b.b1 * (m1 * bessel_i(l - 1, x1)? - lf / r * il)
        - 2.0 * c / r;
    let taxis = b.b1 * lf / r * il + lf / r * c;
    Ok((c, flux, taxis))
}

pub fn growth_rates(
    r: f64,
    params: &ModelParams,
    l: u32,
    r_inf: f64,
) -> Result<GrowthRates, LinearError> {
    let (c, flux, taxis) = shape_terms(r, r_inf, params, l)?;
    let d = params.dim();
    let lf = l as f64;
    let p = params.proliferation;
    let dr_dt = c * p - params.apoptosis * r / d;
    let shape_rate =
        -params.adhesion * lf * (lf * lf - 1.0) / r.powi(3) + lf / d * params.apoptosis + p * flux
            - (p - params.chemotaxis) * taxis;
    let delta_rate = shape_rate + dr_dt / r;
    Ok(GrowthRates {
        dr_dt,
        shape_rate,
        delta_rate,
    })
}

/// Apoptosis rate at which mode `l` is neutrally stable.
pub fn critical_apoptosis(
    r: f64,
    params: &ModelParams,
    l: u32,
    r_inf: f64,
) -> Result<f64, LinearError> {
    let (_, flux, taxis) = shape_terms(r, r_inf, params, l)?;
    let d = params.dim();
    let lf = l as f64;
    let p = params.proliferation;
    Ok(
        params.adhesion * d * (lf * lf - 1.0) / r.powi(3) - p * d / lf * flux
            + (p - params.chemotaxis) * d / lf * taxis,
    )
}

/// Boundary traces of the radial solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialTraces {
    pub sigma: f64,
    pub dsigma_dn: f64,
    /// `∂σ₂/∂n` on the far-field circle (outward normal).
    pub far_flux: f64,
}

pub fn radial_traces(
    r: f64,
    r_inf: f64,
    params: &ModelParams,
) -> Result<RadialTraces, LinearError> {
    let a = radial_coefficients(r, r_inf, params)?;
    let (m1, m2) = (params.mu1(), params.mu2());
    Ok(RadialTraces {
        sigma: a.a1 * bessel_i(0, m1 * r)?,
        dsigma_dn: a.a1 * m1 * bessel_i(1, m1 * r)?,
        far_flux: m2 * (a.a2 * bessel_i(1, m2 * r_inf)? - a.a3 * bessel_k(1, m2 * r_inf)?),
    })
}

/// Coefficients of `δ cos(lθ)` in the interface traces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstOrderTraces {
    pub sigma: f64,
    pub dsigma_dn: f64,
    pub dp_dn: f64,
}

pub fn first_order_traces(
    r: f64,
    r_inf: f64,
    params: &ModelParams,
    l: u32,
) -> Result<FirstOrderTraces, LinearError> {
    let a = radial_coefficients(r, r_inf, params)?;
    let b = perturbation_coefficients(r, r_inf, params, l)?;
    let m1 = params.mu1();
    let x1 = m1 * r;
    let lf = l as f64;
    let i0 = bessel_i(0, x1)?;
    let i1 = bessel_i(1, x1)?;
    let il = bessel_i(l, x1)?;
    let c = m1 * a.a1 * i1;
    let chi_term = params.proliferation - params.chemotaxis;
    Ok(FirstOrderTraces {
        sigma: c + b.b1 * il,
        dsigma_dn: a.a1 * (m1 * m1 * i0 - m1 * i1 / r)
            + b.b1 * (m1 * bessel_i(l - 1, x1)? - lf * il / r),
        dp_dn: lf
            * (params.adhesion * (lf * lf - 1.0) / r.powi(3) - params.apoptosis / params.dim()
                + chi_term * (c / r + b.b1 * il / r)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearPoint {
    pub t: f64,
    pub r: f64,
    pub delta: f64,
}

impl LinearPoint {
    pub fn shape_factor(&self) -> f64 {
        self.delta / self.r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TrajectoryStatus {
    Completed,
    /// The radius left `(0, R_∞)`; the trajectory stops at the last valid state.
    LeftDomain,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearTrajectory {
    pub points: Vec<LinearPoint>,
    pub status: TrajectoryStatus,
}

impl LinearTrajectory {
    /// Linear interpolation of `(R, δ)` at time `t`.
    pub fn at(&self, t: f64) -> Option<LinearPoint> {
        let pts = &self.points;
        let k = pts.partition_point(|p| p.t < t);
        if k == 0 {
            return pts.first().filter(|p| (p.t - t).abs() < 1e-12).copied();
        }
        if k == pts.len() {
            return pts.last().filter(|p| (p.t - t).abs() < 1e-9).copied();
        }
        let (a, b) = (pts[k - 1], pts[k]);
        let w = (t - a.t) / (b.t - a.t);
        Some(LinearPoint {
            t,
            r: a.r + w * (b.r - a.r),
            delta: a.delta + w * (b.delta - a.delta),
        })
    }
}

/// Classical RK4 on `dR/dt = CP − AR/d`, `dδ/dt = δ·(δ⁻¹dδ/dt)`.
pub fn integrate_linear_ode(
    state0: LinearModeState,
    params: &ModelParams,
    t_end: f64,
    dt: f64,
) -> Result<LinearTrajectory, LinearError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(LinearError::Step(dt));
    }
    check(state0.r, state0.r_inf)?;
    let rhs = |r: f64, delta: f64| -> Result<(f64, f64), LinearError> {
        let g = growth_rates(r, params, state0.l, state0.r_inf)?;
        Ok((g.dr_dt, delta * g.delta_rate))
    };
    let steps = (t_end / dt).round().max(0.0) as usize;
    let h = if steps > 0 { t_end / steps as f64 } else { 0.0 };
    let mut points = vec![LinearPoint {
        t: 0.0,
        r: state0.r,
        delta: state0.delta,
    }];
    let (mut r, mut delta) = (state0.r, state0.delta);
    for n in 0..steps {
        let stage = |r: f64, d: f64| -> Result<Option<(f64, f64)>, LinearError> {
            if !(r > 0.0 && r < state0.r_inf) {
                return Ok(None);
            }
            rhs(r, d).map(Some)
        };
        let Some(k1) = stage(r, delta)? else { break };
        let Some(k2) = stage(r + 0.5 * h * k1.0, delta + 0.5 * h * k1.1)? else {
            break;
        };
        let Some(k3) = stage(r + 0.5 * h * k2.0, delta + 0.5 * h * k2.1)? else {
            break;
        };
        let Some(k4) = stage(r + h * k3.0, delta + h * k3.1)? else {
            break;
        };
        let nr = r + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        let nd = delta + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        if !(nr > 0.0 && nr < state0.r_inf) {
            break;
        }
        r = nr;
        delta = nd;
        points.push(LinearPoint {
            t: (n + 1) as f64 * h,
            r,
            delta,
        });
    }
    let status = if points.len() == steps + 1 {
        TrajectoryStatus::Completed
    } else {
        TrajectoryStatus::LeftDomain
    };
    Ok(LinearTrajectory { points, status })
}
