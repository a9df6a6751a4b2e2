//! Boundary-integral solution of the two-phase nutrient problem and of the
//! interior pressure problem, and the resulting normal velocity.
//!
//! Nutrient unknowns are ordered `[σ on Γ (N), ∂σ₁/∂n on Γ (N), ∂σ₂/∂n on Γ_∞ (N_∞)]`.
//! Flux continuity `∂σ₂/∂n = (1/D)∂σ₁/∂n` on `Γ` is built in.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::{geometry_of, CurveError, CurveGeometry, MarkerCurve};
use crate::kernels::{
    helmholtz_cross, helmholtz_self_multi, kress_weights, laplace_double_at, laplace_double_matrix,
    split_laplace_single, KernelError, KressRule, Panel,
};
use crate::linalg::{solve, DenseMatrix, GmresOptions, SolveError, SolverKind};
use crate::params::ModelParams;
use crate::specfun::bessel_k01;
use crate::spectral;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("{system} solve failed: {source}")]
    Solve {
        system: &'static str,
        #[source]
        source: SolveError,
    },
    #[error("tumor interface is not strictly inside the far-field boundary")]
    Containment,
    #[error("far-field boundary was built for mu2 = {built}, parameters give {requested}")]
    FarFieldMismatch { built: f64, requested: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub restart: usize,
    pub kind: SolverKind,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 500,
            restart: 100,
            kind: SolverKind::Gmres,
        }
    }
}

impl SolverOptions {
    fn gmres(&self) -> GmresOptions {
        GmresOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            restart: self.restart,
        }
    }
}

/// The fixed far-field boundary together with its self-interaction blocks,
/// which are assembled once.
#[derive(Debug, Clone)]
pub struct FarField {
    curve: MarkerCurve,
    panel: Panel,
    mu2: f64,
    single: DenseMatrix,
    double_row_sums: Vec<f64>,
}

impl FarField {
    pub fn new(curve: MarkerCurve, params: &ModelParams) -> Result<Self, FieldError> {
        let panel = Panel::new(&curve)?;
        let mu2 = params.mu2();
        let rule = kress_weights(panel.len() / 2);
        let pair = helmholtz_self_multi(&panel, &[mu2])?
            .pop()
            .expect("one kernel");
        let single = pair.single.nystrom(Some(&rule), Some(&panel.speed));
        let double_row_sums = pair.double.nystrom(Some(&rule), None).row_sums();
        Ok(Self {
            curve,
            panel,
            mu2,
            single,
            double_row_sums,
        })
    }

    pub fn curve(&self) -> &MarkerCurve {
        &self.curve
    }

    pub fn panel(&self) -> &Panel {
        &self.panel
    }

    pub fn len(&self) -> usize {
        self.panel.len()
    }

    pub fn is_empty(&self) -> bool {
        self.panel.is_empty()
    }

    /// Whether a point lies strictly inside the far-field curve.
    pub fn contains(&self, point: [f64; 2]) -> bool {
        laplace_double_at(&self.panel, point) > 0.5
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NutrientSolution {
    pub sigma: Vec<f64>,
    pub dsigma_dn: Vec<f64>,
    pub far_flux: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl NutrientSolution {
    /// The stacked unknown vector, usable as a warm start.
    pub fn stacked(&self) -> Vec<f64> {
        let mut v = self.sigma.clone();
        v.extend_from_slice(&self.dsigma_dn);
        v.extend_from_slice(&self.far_flux);
        v
    }
}

/// Assembles the `(2N + N_∞)`-square Nyström system and its right-hand side.
pub fn nutrient_system(
    tumor: &Panel,
    far: &FarField,
    params: &ModelParams,
) -> Result<(DenseMatrix, Vec<f64>), FieldError> {
    let (mu1, mu2, d) = (params.mu1(), params.mu2(), params.diffusivity);
    if (mu2 - far.mu2).abs() > 1e-14 * mu2 {
        return Err(FieldError::FarFieldMismatch {
            built: far.mu2,
            requested: mu2,
        });
    }
    let n = tumor.len();
    let m = far.len();
    let rule = kress_weights(n / 2);
    let mut pairs = helmholtz_self_multi(tumor, &[mu1, mu2])?;
    let ext = pairs.pop().expect("two kernels");
    let int = pairs.pop().expect("two kernels");
    // forward: target Γ_∞ / source Γ; backward: target Γ / source Γ_∞
    let (to_far, from_far) = helmholtz_cross(tumor, &far.panel, mu2, true)?;

    let s1 = int.single.nystrom(Some(&rule), Some(&tumor.speed));
    let d1 = int.double.nystrom(Some(&rule), None);
    let s2 = ext.single.nystrom(Some(&rule), Some(&tumor.speed));
    let d2 = ext.double.nystrom(Some(&rule), None);
    let s2_gf = from_far.single.nystrom(None, Some(&far.panel.speed));
    let d2_gf = from_far.double.nystrom(None, None);
    let s2_fg = to_far.single.nystrom(None, Some(&tumor.speed));
    let d2_fg = to_far.double.nystrom(None, None);

    let size = 2 * n + m;
    let mut a = DenseMatrix::zeros(size, size);
    let mut b = vec![0.0; size];
    // interior: ½σ + D₁σ − S₁q = 0
    a.add_block(0, 0, &d1, 1.0);
    a.add_block(0, n, &s1, -1.0);
    // exterior on Γ: −½σ + D₂σ − (1/D)S₂q + S₂f = D₂[1 on Γ_∞]
    a.add_block(n, 0, &d2, 1.0);
    a.add_block(n, n, &s2, -1.0 / d);
    a.add_block(n, 2 * n, &s2_gf, 1.0);
    // exterior on Γ_∞: D₂σ − (1/D)S₂q + S₂f = ½ + D₂[1 on Γ_∞]
    a.add_block(2 * n, 0, &d2_fg, 1.0);
    a.add_block(2 * n, n, &s2_fg, -1.0 / d);
    a.add_block(2 * n, 2 * n, &far.single, 1.0);
    for i in 0..n {
        a.add_to(i, i, 0.5);
        a.add_to(n + i, i, -0.5);
        b[n + i] = d2_gf.row(i).iter().sum();
    }
    for i in 0..m {
        b[2 * n + i] = 0.5 + far.double_row_sums[i];
    }
    Ok((a, b))
}

pub fn solve_nutrient(
    tumor: &MarkerCurve,
    far: &FarField,
    params: &ModelParams,
    opts: &SolverOptions,
    warm: Option<&[f64]>,
) -> Result<NutrientSolution, FieldError> {
    let panel = Panel::new(tumor)?;
    solve_nutrient_on(&panel, far, params, opts, warm)
}

fn solve_nutrient_on(
    panel: &Panel,
    far: &FarField,
    params: &ModelParams,
    opts: &SolverOptions,
    warm: Option<&[f64]>,
) -> Result<NutrientSolution, FieldError> {
    if !(0..panel.len()).all(|i| far.contains([panel.x[i], panel.y[i]])) {
        return Err(FieldError::Containment);
    }
    let (a, b) = nutrient_system(panel, far, params)?;
    let sol = solve(opts.kind, &a, &b, warm, opts.gmres()).map_err(|source| FieldError::Solve {
        system: "nutrient",
        source,
    })?;
    let n = panel.len();
    Ok(NutrientSolution {
        sigma: sol.x[..n].to_vec(),
        dsigma_dn: sol.x[n..2 * n].to_vec(),
        far_flux: sol.x[2 * n..].to_vec(),
        iterations: sol.iterations,
        residual: sol.residual,
    })
}

/// Nutrient value at an off-boundary point from the layer representation
/// (plain trapezoid; the point must be well separated from both curves).
pub fn probe_sigma(
    tumor: &MarkerCurve,
    far: &FarField,
    params: &ModelParams,
    sol: &NutrientSolution,
    point: [f64; 2],
) -> Result<f64, FieldError> {
    let panel = Panel::new(tumor)?;
    let inside_tumor = laplace_double_at(&panel, point) > 0.5;
    // Σ_j [G q_j − σ_j ∂G/∂n'] over a curve, trapezoid rule
    let layer = |p: &Panel, mu: f64, density: &[f64], flux: &[f64]| {
        let h = p.h();
        (0..p.len())
            .map(|j| {
                let dx = point[0] - p.x[j];
                let dy = point[1] - p.y[j];
                let r = dx.hypot(dy);
                let (k0, k1) = bessel_k01(mu * r);
                let g = k0 / (2.0 * std::f64::consts::PI);
                let dg = mu * k1 * (dx * p.nx[j] + dy * p.ny[j]) / (2.0 * std::f64::consts::PI * r);
                h * p.speed[j] * (g * flux[j] - density[j] * dg)
            })
            .sum::<f64>()
    };
    if inside_tumor {
        return Ok(layer(&panel, params.mu1(), &sol.sigma, &sol.dsigma_dn));
    }
    let q2: Vec<f64> = sol
        .dsigma_dn
        .iter()
        .map(|q| q / params.diffusivity)
        .collect();
    let ones = vec![1.0; far.len()];
    Ok(-layer(&panel, params.mu2(), &sol.sigma, &q2)
        + layer(&far.panel, params.mu2(), &ones, &sol.far_flux))
}

/// Right-hand side `G⁻¹κ + (P − χ)σ − A|x|²/(2d)` of the pressure equation.
pub fn pressure_rhs(
    tumor: &MarkerCurve,
    geom: &CurveGeometry,
    sigma: &[f64],
    params: &ModelParams,
) -> Vec<f64> {
    let chi = params.proliferation - params.chemotaxis;
    let a = params.apoptosis / (2.0 * params.dim());
    (0..tumor.len())
        .map(|i| {
            let [x, y] = tumor.point(i);
            params.adhesion * geom.kappa[i] + chi * sigma[i] - a * (x * x + y * y)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PressureSolution {
    pub eta: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Solves `(½I + 𝒟)η = rhs`, where `𝒟` is the Laplace double layer with
/// `G = (1/2π)ln r`; the interior pressure is the double-layer potential of `η`.
pub fn solve_pressure_density(
    tumor: &MarkerCurve,
    sigma: &[f64],
    geom: &CurveGeometry,
    params: &ModelParams,
    opts: &SolverOptions,
    warm: Option<&[f64]>,
) -> Result<PressureSolution, FieldError> {
    let panel = Panel::new(tumor)?;
    let rhs = pressure_rhs(tumor, geom, sigma, params);
    solve_pressure_on(&panel, &rhs, opts, warm)
}

fn solve_pressure_on(
    panel: &Panel,
    rhs: &[f64],
    opts: &SolverOptions,
    warm: Option<&[f64]>,
) -> Result<PressureSolution, FieldError> {
    let mut a = laplace_double_matrix(panel);
    for i in 0..panel.len() {
        a.add_to(i, i, 0.5);
    }
    let sol =
        solve(opts.kind, &a, rhs, warm, opts.gmres()).map_err(|source| FieldError::Solve {
            system: "pressure",
            source,
        })?;
    Ok(PressureSolution {
        eta: sol.x,
        iterations: sol.iterations,
        residual: sol.residual,
    })
}

/// `∂p/∂n = d/ds 𝒮[dη/ds]` with `𝒮` the Laplace single layer.
pub fn pressure_normal_derivative(
    tumor: &MarkerCurve,
    eta: &[f64],
) -> Result<Vec<f64>, FieldError> {
    let panel = Panel::new(tumor)?;
    let rule = kress_weights(panel.len() / 2);
    Ok(pressure_normal_derivative_on(&panel, &rule, eta))
}

fn pressure_normal_derivative_on(panel: &Panel, rule: &KressRule, eta: &[f64]) -> Vec<f64> {
    let single = split_laplace_single(panel).nystrom(Some(rule), Some(&panel.speed));
    let eta_s: Vec<f64> = spectral::derivative(eta, 1)
        .iter()
        .zip(&panel.speed)
        .map(|(d, s)| d / s)
        .collect();
    let potential = single.matvec(&eta_s);
    spectral::derivative(&potential, 1)
        .iter()
        .zip(&panel.speed)
        .map(|(d, s)| d / s)
        .collect()
}

/// `V = −∂p/∂n + P ∂σ/∂n − (A/d)(n·x)`.
pub fn normal_velocity(
    dp_dn: &[f64],
    dsigma_dn: &[f64],
    tumor: &MarkerCurve,
    geom: &CurveGeometry,
    params: &ModelParams,
) -> Vec<f64> {
    let a = params.apoptosis / params.dim();
    (0..tumor.len())
        .map(|i| {
            let [x, y] = tumor.point(i);
            let nx = geom.normal[i][0] * x + geom.normal[i][1] * y;
            -dp_dn[i] + params.proliferation * dsigma_dn[i] - a * nx
        })
        .collect()
}

/// Every boundary trace of one field solve.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFields {
    pub sigma: Vec<f64>,
    pub dsigma_dn: Vec<f64>,
    pub far_flux: Vec<f64>,
    pub eta: Vec<f64>,
    pub dp_dn: Vec<f64>,
    pub velocity: Vec<f64>,
    pub kappa: Vec<f64>,
    pub nutrient_iterations: usize,
    pub pressure_iterations: usize,
}

impl BoundaryFields {
    pub fn iterations(&self) -> usize {
        self.nutrient_iterations + self.pressure_iterations
    }
}

/// Owns the far field and reuses the previous densities as GMRES warm starts.
#[derive(Debug, Clone)]
pub struct FieldSolver {
    far: FarField,
    params: ModelParams,
    opts: SolverOptions,
    warm_nutrient: Option<Vec<f64>>,
    warm_pressure: Option<Vec<f64>>,
}

impl FieldSolver {
    pub fn new(
        far_curve: MarkerCurve,
        params: ModelParams,
        opts: SolverOptions,
    ) -> Result<Self, FieldError> {
        let far = FarField::new(far_curve, &params)?;
        Ok(Self {
            far,
            params,
            opts,
            warm_nutrient: None,
            warm_pressure: None,
        })
    }

    pub fn far_field(&self) -> &FarField {
        &self.far
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    /// Nutrient, then pressure, then velocity on the given interface.
    pub fn solve(&mut self, tumor: &MarkerCurve) -> Result<BoundaryFields, FieldError> {
        let geom = geometry_of(tumor)?;
        let panel = Panel::new(tumor)?;
        let warm_n = self
            .warm_nutrient
            .as_deref()
            .filter(|w| w.len() == 2 * tumor.len() + self.far.len());
        let nut = solve_nutrient_on(&panel, &self.far, &self.params, &self.opts, warm_n)?;
        let rhs = pressure_rhs(tumor, &geom, &nut.sigma, &self.params);
        let warm_p = self
            .warm_pressure
            .as_deref()
            .filter(|w| w.len() == tumor.len());
        let pres = solve_pressure_on(&panel, &rhs, &self.opts, warm_p)?;
        let rule = kress_weights(panel.len() / 2);
        let dp_dn = pressure_normal_derivative_on(&panel, &rule, &pres.eta);
        let velocity = normal_velocity(&dp_dn, &nut.dsigma_dn, tumor, &geom, &self.params);
        self.warm_nutrient = Some(nut.stacked());
        self.warm_pressure = Some(pres.eta.clone());
        Ok(BoundaryFields {
            sigma: nut.sigma,
            dsigma_dn: nut.dsigma_dn,
            far_flux: nut.far_flux,
            eta: pres.eta,
            dp_dn,
            velocity,
            kappa: geom.kappa,
            nutrient_iterations: nut.iterations,
            pressure_iterations: pres.iterations,
        })
    }
}
