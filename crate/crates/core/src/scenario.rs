//! Simulation configuration, geometry construction, orchestration of the
//! field solve and interface update, diagnostics and CSV output, and the
//! linear-comparison, stability and convergence drivers.

use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::{area_and_length, equal_arclength_reparametrize, CurveError, MarkerCurve};
use crate::evolution::{EvolutionError, EvolutionState, StepOptions};
use crate::field_solver::{BoundaryFields, FarField, FieldError, FieldSolver, SolverOptions};
use crate::kernels::Panel;
use crate::linear_theory::{
    critical_apoptosis, integrate_linear_ode, LinearError, LinearModeState,
};
use crate::params::{ModelParams, ParamError};

pub const SCHEMA_VERSION: u32 = 1;

/// Tolerance of the Newton solve for the initial equal-arclength markers.
const REPARAM_TOL: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: String, reason: String },
    #[error("cannot parse configuration: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("initial tumor is not strictly inside the far-field boundary")]
    Containment,
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Linear(#[from] LinearError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl ScenarioError {
    fn config(field: &str, reason: impl Into<String>) -> Self {
        Self::Config {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    /// Whether the error stems from the user's input rather than from a run.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Self::Config { .. }
                | Self::Parse(_)
                | Self::Param(_)
                | Self::Containment
                | Self::Curve(_)
        )
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ScenarioError + '_ {
    move |source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Initial tumor interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialShape {
    /// `r = R₀ + δ₀ cos(lθ)`.
    PerturbedCircle {
        #[serde(rename = "R0")]
        r0: f64,
        delta0: f64,
        l: u32,
    },
    /// `x²/a² + y²/b² = 1`.
    Ellipse { a: f64, b: f64 },
    Circle {
        #[serde(rename = "R")]
        r: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trig {
    Cos,
    Sin,
}

/// One term `f(kθ − phase)^power` of a composite far-field radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigTerm {
    pub func: Trig,
    #[serde(default = "one")]
    pub power: u32,
    pub k: u32,
    #[serde(default)]
    pub phase: f64,
}

fn one() -> u32 {
    1
}

/// Far-field boundary in polar form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FarFieldShape {
    Circle {
        #[serde(rename = "R_inf")]
        r_inf: f64,
    },
    /// `R_∞ + amp·cos(kθ − phase)`.
    Cosine {
        #[serde(rename = "R_inf")]
        r_inf: f64,
        amp: f64,
        k: u32,
        #[serde(default)]
        phase: f64,
    },
    /// `R_∞ + amp·Σ terms`.
    Composite {
        #[serde(rename = "R_inf")]
        r_inf: f64,
        amp: f64,
        terms: Vec<TrigTerm>,
    },
}

impl FarFieldShape {
    pub fn radius(&self, theta: f64) -> f64 {
        match self {
            Self::Circle { r_inf } => *r_inf,
            Self::Cosine {
                r_inf,
                amp,
                k,
                phase,
            } => r_inf + amp * (*k as f64 * theta - phase).cos(),
            Self::Composite { r_inf, amp, terms } => {
                let sum: f64 = terms
                    .iter()
                    .map(|t| {
                        let arg = t.k as f64 * theta - t.phase;
                        let v = match t.func {
                            Trig::Cos => arg.cos(),
                            Trig::Sin => arg.sin(),
                        };
                        v.powi(t.power as i32)
                    })
                    .sum();
                r_inf + amp * sum
            }
        }
    }

    /// The radius if the boundary is a circle centred at the origin.
    pub fn circle_radius(&self) -> Option<f64> {
        match self {
            Self::Circle { r_inf } => Some(*r_inf),
            _ => None,
        }
    }
}

/// Overrides of the interface-update knobs; stiffness defaults to `G⁻¹`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stiffness: Option<f64>,
    #[serde(default)]
    pub explicit: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter_order: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter_strength: Option<f64>,
    /// Krasny threshold; a negative value disables the filter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub krasny_threshold: Option<f64>,
}

impl EvolutionConfig {
    pub fn step_options(&self, params: &ModelParams) -> StepOptions {
        let mut o = StepOptions::new(self.stiffness.unwrap_or(params.adhesion));
        o.explicit = self.explicit;
        if let Some(v) = self.filter_order {
            o.filter_order = v;
        }
        if let Some(v) = self.filter_strength {
            o.filter_strength = v;
        }
        if let Some(v) = self.krasny_threshold {
            o.krasny_threshold = (v >= 0.0).then_some(v);
        }
        o
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Snapshot cadence in steps; the final state is always written. 0 writes only initial and final.
    #[serde(default = "default_cadence")]
    pub snapshot_every: usize,
}

fn default_cadence() -> usize {
    100
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            snapshot_every: default_cadence(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    schema_version: u32,
    params: ModelParams,
    #[serde(rename = "N")]
    n: i64,
    #[serde(rename = "N_inf", default)]
    n_inf: Option<i64>,
    dt: f64,
    t_end: f64,
    initial_shape: InitialShape,
    farfield_shape: FarFieldShape,
    #[serde(default)]
    solver: SolverOptions,
    #[serde(default)]
    evolution: EvolutionConfig,
    #[serde(default)]
    output: OutputConfig,
}

/// A validated simulation description.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSpec {
    pub schema_version: u32,
    pub params: ModelParams,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "N_inf")]
    pub n_inf: usize,
    pub dt: f64,
    pub t_end: f64,
    pub initial_shape: InitialShape,
    pub farfield_shape: FarFieldShape,
    pub solver: SolverOptions,
    pub evolution: EvolutionConfig,
    pub output: OutputConfig,
}

fn marker_count(field: &str, v: i64) -> Result<usize, ScenarioError> {
    if v < 4 || (v as u64).count_ones() != 1 {
        return Err(ScenarioError::config(
            field,
            format!("must be a power of two >= 4, got {v}"),
        ));
    }
    Ok(v as usize)
}

fn positive(field: &str, v: f64) -> Result<(), ScenarioError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ScenarioError::config(
            field,
            format!("must be positive and finite, got {v}"),
        ))
    }
}

impl SimulationSpec {
    pub fn from_json_str(s: &str) -> Result<Self, ScenarioError> {
        let raw: RawSpec = serde_json::from_str(s)?;
        Self::validate(raw)
    }

    fn validate(raw: RawSpec) -> Result<Self, ScenarioError> {
        if raw.schema_version != SCHEMA_VERSION {
            return Err(ScenarioError::config(
                "schema_version",
                format!(
                    "unsupported version {}, expected {SCHEMA_VERSION}",
                    raw.schema_version
                ),
            ));
        }
        raw.params.validate()?;
        let n = marker_count("N", raw.n)?;
        let n_inf = marker_count("N_inf", raw.n_inf.unwrap_or(raw.n))?;
        positive("dt", raw.dt)?;
        if !(raw.t_end >= 0.0 && raw.t_end.is_finite()) {
            return Err(ScenarioError::config(
                "t_end",
                format!("must be non-negative and finite, got {}", raw.t_end),
            ));
        }
        positive("solver.tol", raw.solver.tol)?;
        if raw.solver.max_iter == 0 || raw.solver.restart == 0 {
            return Err(ScenarioError::config(
                "solver",
                "max_iter and restart must be positive",
            ));
        }
        match &raw.initial_shape {
            InitialShape::PerturbedCircle { r0, delta0, l } => {
                positive("initial_shape.R0", *r0)?;
                if !(delta0.abs() < *r0) {
                    return Err(ScenarioError::config(
                        "initial_shape.delta0",
                        "must satisfy |delta0| < R0",
                    ));
                }
                if *l == 0 {
                    return Err(ScenarioError::config("initial_shape.l", "must be >= 1"));
                }
            }
            InitialShape::Ellipse { a, b } => {
                positive("initial_shape.a", *a)?;
                positive("initial_shape.b", *b)?;
            }
            InitialShape::Circle { r } => positive("initial_shape.R", *r)?,
        }
        let r_inf = match &raw.farfield_shape {
            FarFieldShape::Circle { r_inf }
            | FarFieldShape::Cosine { r_inf, .. }
            | FarFieldShape::Composite { r_inf, .. } => *r_inf,
        };
        positive("farfield_shape.R_inf", r_inf)?;
        let spec = Self {
            schema_version: raw.schema_version,
            params: raw.params,
            n,
            n_inf,
            dt: raw.dt,
            t_end: raw.t_end,
            initial_shape: raw.initial_shape,
            farfield_shape: raw.farfield_shape,
            solver: raw.solver,
            evolution: raw.evolution,
            output: raw.output,
        };
        let far = build_far_field(&spec.farfield_shape, spec.n_inf)?;
        let tumor = build_initial_tumor(&spec.initial_shape, spec.n)?;
        check_containment(&tumor, &far)?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

pub fn parse_config(path: &Path) -> Result<SimulationSpec, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|e| {
        ScenarioError::config("config", format!("cannot read {}: {e}", path.display()))
    })?;
    SimulationSpec::from_json_str(&text)
}

/// Far-field curve sampled at equally spaced polar angles. The boundary
/// never moves, and for trigonometric radii this parametrization is band
/// limited, which an equal-arclength one is not.
pub fn build_far_field(shape: &FarFieldShape, n: usize) -> Result<MarkerCurve, ScenarioError> {
    let samples = 8 * n.max(256);
    let min_r = (0..samples)
        .map(|j| shape.radius(2.0 * PI * j as f64 / samples as f64))
        .fold(f64::INFINITY, f64::min);
    if !(min_r > 0.0) {
        return Err(ScenarioError::config(
            "farfield_shape",
            format!("radius must stay positive, minimum {min_r}"),
        ));
    }
    if let Some(r) = shape.circle_radius() {
        return Ok(MarkerCurve::circle(n, r, [0.0, 0.0])?);
    }
    Ok(MarkerCurve::polar(n, |t| shape.radius(t))?)
}

/// Initial tumor curve with equal-arclength markers.
pub fn build_initial_tumor(shape: &InitialShape, n: usize) -> Result<MarkerCurve, ScenarioError> {
    let c = match *shape {
        InitialShape::Circle { r } => return Ok(MarkerCurve::circle(n, r, [0.0, 0.0])?),
        InitialShape::PerturbedCircle { r0, delta0, l } => {
            MarkerCurve::polar(n, |t| r0 + delta0 * (l as f64 * t).cos())?
        }
        InitialShape::Ellipse { a, b } => {
            MarkerCurve::from_parametrization(n, |t| (a * t.cos(), b * t.sin()))?
        }
    };
    Ok(equal_arclength_reparametrize(&c, REPARAM_TOL)?)
}

/// Every tumor marker must lie strictly inside the far-field curve.
pub fn check_containment(tumor: &MarkerCurve, far: &MarkerCurve) -> Result<(), ScenarioError> {
    let panel = Panel::new(far)?;
    let inside =
        (0..tumor.len()).all(|i| crate::kernels::laplace_double_at(&panel, tumor.point(i)) > 0.5);
    let clear = Panel::new(tumor)?.min_distance(&panel) > 0.0;
    if inside && clear {
        Ok(())
    } else {
        Err(ScenarioError::Containment)
    }
}

/// Per-step summary of the interface and fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    #[serde(rename = "R_eff")]
    pub r_eff: f64,
    pub shape_factor: f64,
    pub area: f64,
    pub arclength: f64,
    pub min_sigma: f64,
    pub max_sigma: f64,
    pub solver_iterations: usize,
}

impl DiagnosticsRow {
    pub fn new(t: f64, curve: &MarkerCurve, fields: &BoundaryFields) -> Self {
        let (area, arclength) = area_and_length(curve);
        let r_eff = (area / PI).sqrt();
        Self {
            t,
            r_eff,
            shape_factor: shape_factor(curve, r_eff),
            area,
            arclength,
            min_sigma: fields.sigma.iter().copied().fold(f64::INFINITY, f64::min),
            max_sigma: fields
                .sigma
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max),
            solver_iterations: fields.iterations(),
        }
    }
}

/// `max_Γ ||x|/R_eff − 1|`.
pub fn shape_factor(curve: &MarkerCurve, r_eff: f64) -> f64 {
    (0..curve.len())
        .map(|i| {
            let [x, y] = curve.point(i);
            (x.hypot(y) / r_eff - 1.0).abs()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub curve: MarkerCurve,
    pub fields: BoundaryFields,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// The run stopped early; everything up to `t` is valid.
    Truncated {
        t: f64,
        reason: String,
    },
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub status: RunStatus,
    pub diagnostics: Vec<DiagnosticsRow>,
    pub far_curve: MarkerCurve,
    /// Last state whose fields were solved.
    pub last: Option<Snapshot>,
    pub steps: usize,
}

impl RunOutput {
    pub fn is_complete(&self) -> bool {
        self.status == RunStatus::Completed
    }

    pub fn final_curve(&self) -> Option<&MarkerCurve> {
        self.last.as_ref().map(|s| &s.curve)
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

struct RunWriter {
    dir: PathBuf,
    diagnostics: csv::Writer<File>,
}

impl RunWriter {
    fn create(dir: &Path, spec: &SimulationSpec) -> Result<Self, ScenarioError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let spec_path = dir.join("spec.json");
        fs::write(&spec_path, spec.to_json()).map_err(io_err(&spec_path))?;
        let diag_path = dir.join("diagnostics.csv");
        let mut diagnostics = csv::Writer::from_path(&diag_path)?;
        diagnostics.write_record([
            "t",
            "R_eff",
            "shape_factor",
            "area",
            "arclength",
            "min_sigma",
            "max_sigma",
            "solver_iterations",
        ])?;
        diagnostics.flush().map_err(io_err(&diag_path))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            diagnostics,
        })
    }

    fn row(&mut self, r: &DiagnosticsRow) -> Result<(), ScenarioError> {
        self.diagnostics.write_record([
            fmt(r.t),
            fmt(r.r_eff),
            fmt(r.shape_factor),
            fmt(r.area),
            fmt(r.arclength),
            fmt(r.min_sigma),
            fmt(r.max_sigma),
            r.solver_iterations.to_string(),
        ])?;
        let path = self.dir.join("diagnostics.csv");
        self.diagnostics.flush().map_err(io_err(&path))
    }

    fn snapshot(&self, snap: &Snapshot, far: &MarkerCurve) -> Result<(), ScenarioError> {
        write_snapshot(
            &self.dir.join(format!("snapshot_{:06}.csv", snap.step)),
            snap,
        )?;
        write_far_flux(
            &self.dir.join(format!("farflux_{:06}.csv", snap.step)),
            far,
            &snap.fields.far_flux,
        )
    }

    fn status(&self, out: &RunOutput) -> Result<(), ScenarioError> {
        let path = self.dir.join("status.json");
        let body = serde_json::json!({
            "status": out.status,
            "steps": out.steps,
            "t": out.last.as_ref().map(|s| s.t),
        });
        fs::write(
            &path,
            serde_json::to_string_pretty(&body).expect("status serializes"),
        )
        .map_err(io_err(&path))
    }
}

/// Writes `alpha,x,y,sigma,dsigma_dn,eta,dp_dn,V,kappa`.
pub fn write_snapshot(path: &Path, snap: &Snapshot) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "alpha",
        "x",
        "y",
        "sigma",
        "dsigma_dn",
        "eta",
        "dp_dn",
        "V",
        "kappa",
    ])?;
    let f = &snap.fields;
    for i in 0..snap.curve.len() {
        let [x, y] = snap.curve.point(i);
        w.write_record([
            fmt(snap.curve.alpha(i)),
            fmt(x),
            fmt(y),
            fmt(f.sigma[i]),
            fmt(f.dsigma_dn[i]),
            fmt(f.eta[i]),
            fmt(f.dp_dn[i]),
            fmt(f.velocity[i]),
            fmt(f.kappa[i]),
        ])?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes `alpha,x,y,dsigma2_dn_inf` on the far-field boundary.
pub fn write_far_flux(path: &Path, far: &MarkerCurve, flux: &[f64]) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["alpha", "x", "y", "dsigma2_dn_inf"])?;
    for (i, q) in flux.iter().enumerate() {
        let [x, y] = far.point(i);
        w.write_record([fmt(far.alpha(i)), fmt(x), fmt(y), fmt(*q)])?;
    }
    w.flush().map_err(io_err(path))
}

/// Runs `spec` from `t = 0` to `t_end`. With `out`, diagnostics, snapshots
/// and a status file are written there as the run proceeds. Solver or
/// stepping failures end the run with [`RunStatus::Truncated`].
pub fn run_simulation(
    spec: &SimulationSpec,
    out: Option<&Path>,
) -> Result<RunOutput, ScenarioError> {
    let far_curve = build_far_field(&spec.farfield_shape, spec.n_inf)?;
    let tumor = build_initial_tumor(&spec.initial_shape, spec.n)?;
    check_containment(&tumor, &far_curve)?;
    let mut solver = FieldSolver::new(far_curve.clone(), spec.params, spec.solver)?;
    let opts = spec.evolution.step_options(&spec.params);
    let mut writer = out.map(|d| RunWriter::create(d, spec)).transpose()?;
    let mut state = EvolutionState::from_curve(tumor, 0.0).map_err(|e| match e {
        EvolutionError::Curve(c) => ScenarioError::Curve(c),
        other => ScenarioError::config("initial_shape", other.to_string()),
    })?;
    let total = spec.steps();
    let cadence = spec.output.snapshot_every;
    let mut diagnostics = Vec::with_capacity(total + 1);
    let mut last = None;
    let mut status = RunStatus::Completed;
    let mut steps = 0;
    for step in 0..=total {
        // the time grid is exact multiples of dt
        let t = step as f64 * spec.dt;
        let fields = match solver.solve(state.curve()) {
            Ok(f) => f,
            Err(e) => {
                status = RunStatus::Truncated {
                    t,
                    reason: e.to_string(),
                };
                break;
            }
        };
        let row = DiagnosticsRow::new(t, state.curve(), &fields);
        if let Some(w) = writer.as_mut() {
            w.row(&row)?;
        }
        diagnostics.push(row);
        let snap = Snapshot {
            step,
            t,
            curve: state.curve().clone(),
            fields,
        };
        let due = step == total || step == 0 || (cadence > 0 && step % cadence == 0);
        if let (Some(w), true) = (writer.as_ref(), due) {
            w.snapshot(&snap, &far_curve)?;
        }
        if step % 100 == 0 {
            log::info!(
                "step {step}/{total} t={t:.4} R_eff={:.6} iterations={}",
                row.r_eff,
                row.solver_iterations
            );
        }
        let velocity = snap.fields.velocity.clone();
        let snap_step = snap.step;
        last = Some(snap);
        if step == total {
            break;
        }
        match state.step(spec.dt, &opts, |_| Ok(velocity)) {
            Ok(next) => {
                state = next;
                steps = step + 1;
            }
            Err(e) => {
                status = RunStatus::Truncated {
                    t,
                    reason: e.to_string(),
                };
                log::warn!("run truncated after step {snap_step}: {e}");
                break;
            }
        }
    }
    if let RunStatus::Truncated { t, reason } = &status {
        log::warn!("run truncated at t={t}: {reason}");
        if let (Some(w), Some(s)) = (writer.as_ref(), last.as_ref()) {
            if cadence == 0 || s.step % cadence != 0 {
                w.snapshot(s, &far_curve)?;
            }
        }
    }
    let output = RunOutput {
        status,
        diagnostics,
        far_curve,
        last,
        steps,
    };
    if let Some(w) = writer.as_ref() {
        w.status(&output)?;
    }
    Ok(output)
}

/// Nonlinear and linear-theory radius and shape factor at common times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub t: f64,
    pub r_eff_nonlinear: f64,
    pub r_linear: f64,
    pub shape_factor_nonlinear: f64,
    pub shape_factor_linear: f64,
}

#[derive(Debug, Clone)]
pub struct LinearComparison {
    pub rows: Vec<ComparisonRow>,
    pub run: RunOutput,
}

/// Runs `spec` and the linear ODE for mode `l` side by side. Requires a
/// perturbed-circle start with the same mode and a circular far field.
pub fn linear_compare(
    spec: &SimulationSpec,
    l: u32,
    out: Option<&Path>,
) -> Result<LinearComparison, ScenarioError> {
    let InitialShape::PerturbedCircle {
        r0,
        delta0,
        l: shape_l,
    } = spec.initial_shape
    else {
        return Err(ScenarioError::config(
            "initial_shape",
            "linear comparison needs a perturbed_circle",
        ));
    };
    if shape_l != l {
        return Err(ScenarioError::config(
            "mode",
            format!("initial shape has mode {shape_l}, requested {l}"),
        ));
    }
    let r_inf = spec.farfield_shape.circle_radius().ok_or_else(|| {
        ScenarioError::config(
            "farfield_shape",
            "linear comparison needs a circular far field",
        )
    })?;
    let state0 = LinearModeState {
        r: r0,
        delta: delta0,
        l,
        r_inf,
    };
    let linear_dt = (spec.dt / 10.0).min(1e-3);
    let traj = integrate_linear_ode(state0, &spec.params, spec.t_end, linear_dt)?;
    let run = run_simulation(spec, out)?;
    let rows: Vec<ComparisonRow> = run
        .diagnostics
        .iter()
        .filter_map(|d| {
            traj.at(d.t).map(|p| ComparisonRow {
                t: d.t,
                r_eff_nonlinear: d.r_eff,
                r_linear: p.r,
                shape_factor_nonlinear: d.shape_factor,
                shape_factor_linear: p.shape_factor(),
            })
        })
        .collect();
    if let Some(dir) = out {
        let path = dir.join("linear_compare.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record([
            "t",
            "R_eff_nonlinear",
            "R_linear",
            "shape_factor_nonlinear",
            "shape_factor_linear",
        ])?;
        for r in &rows {
            w.write_record([
                fmt(r.t),
                fmt(r.r_eff_nonlinear),
                fmt(r.r_linear),
                fmt(r.shape_factor_nonlinear),
                fmt(r.shape_factor_linear),
            ])?;
        }
        w.flush().map_err(io_err(&path))?;
    }
    Ok(LinearComparison { rows, run })
}

/// `A_c(R)` for each mode on `samples` radii in `(0, r_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityTable {
    pub modes: Vec<u32>,
    pub radii: Vec<f64>,
    /// `values[i][m]` is `A_c` at `radii[i]` for `modes[m]`.
    pub values: Vec<Vec<f64>>,
}

pub fn stability_curves(
    params: &ModelParams,
    r_inf: f64,
    modes: &[u32],
    r_max: f64,
    samples: usize,
) -> Result<StabilityTable, ScenarioError> {
    if !(r_max > 0.0 && r_max < r_inf) {
        return Err(ScenarioError::config(
            "rmax",
            format!("must lie in (0, R_inf = {r_inf}), got {r_max}"),
        ));
    }
    if samples == 0 {
        return Err(ScenarioError::config("samples", "must be positive"));
    }
    let radii: Vec<f64> = (1..=samples)
        .map(|i| r_max * i as f64 / samples as f64)
        .collect();
    let values = radii
        .iter()
        .map(|&r| {
            modes
                .iter()
                .map(|&l| critical_apoptosis(r, params, l, r_inf))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(StabilityTable {
        modes: modes.to_vec(),
        radii,
        values,
    })
}

pub fn write_stability(path: &Path, table: &StabilityTable) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["R".to_string()];
    header.extend(table.modes.iter().map(|l| format!("A_c_l{l}")));
    w.write_record(&header)?;
    for (r, row) in table.radii.iter().zip(&table.values) {
        let mut rec = vec![fmt(*r)];
        rec.extend(row.iter().map(|v| fmt(*v)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceMode {
    /// Levels are time steps.
    Temporal,
    /// Levels are marker counts.
    Spatial,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub level: f64,
    /// Max pointwise interface distance to the reference at `t_end`; `None` if the run failed.
    pub error: Option<f64>,
    /// `error(previous level) / error(this level)`.
    pub ratio: Option<f64>,
    /// Observed order between this and the previous level.
    pub order: Option<f64>,
    pub status: RunStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub mode: ConvergenceMode,
    pub reference: f64,
    pub rows: Vec<ConvergenceRow>,
}

/// Runs `spec` at each level (concurrently) and compares the final
/// interfaces with the finest level. Temporal levels are compared marker by
/// marker; spatial levels after trigonometric interpolation to the finest grid.
pub fn convergence_study(
    spec: &SimulationSpec,
    mode: ConvergenceMode,
    levels: &[f64],
) -> Result<ConvergenceTable, ScenarioError> {
    if levels.is_empty() {
        return Err(ScenarioError::config(
            "levels",
            "at least one level is required",
        ));
    }
    let mut specs = Vec::with_capacity(levels.len());
    for &level in levels {
        let mut s = spec.clone();
        match mode {
            ConvergenceMode::Temporal => {
                positive("levels", level)?;
                s.dt = level;
            }
            ConvergenceMode::Spatial => {
                if level.fract() != 0.0 {
                    return Err(ScenarioError::config(
                        "levels",
                        format!("marker count must be an integer, got {level}"),
                    ));
                }
                s.n = marker_count("levels", level as i64)?;
                s.n_inf = s.n;
            }
        }
        specs.push(s);
    }
    // finest level last
    let mut order: Vec<usize> = (0..levels.len()).collect();
    match mode {
        ConvergenceMode::Temporal => order.sort_by(|&a, &b| levels[b].total_cmp(&levels[a])),
        ConvergenceMode::Spatial => order.sort_by(|&a, &b| levels[a].total_cmp(&levels[b])),
    }
    let runs: Vec<Result<RunOutput, ScenarioError>> = std::thread::scope(|scope| {
        let specs = &specs;
        let handles: Vec<_> = order
            .iter()
            .map(|&i| scope.spawn(move || run_simulation(&specs[i], None)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("level run panicked"))
            .collect()
    });
    let reference_level = levels[*order.last().expect("non-empty")];
    if levels.len() == 1 {
        log::warn!("convergence study with a single level has nothing to compare");
        return Ok(ConvergenceTable {
            mode,
            reference: reference_level,
            rows: Vec::new(),
        });
    }
    let reference = match runs.last().expect("non-empty") {
        Ok(r) if r.is_complete() => r.final_curve().cloned(),
        _ => None,
    };
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for (&i, run) in order.iter().zip(&runs).take(order.len() - 1) {
        let (status, curve) = match run {
            Ok(r) => (
                r.status.clone(),
                if r.is_complete() {
                    r.final_curve().cloned()
                } else {
                    None
                },
            ),
            Err(e) => (
                RunStatus::Truncated {
                    t: 0.0,
                    reason: e.to_string(),
                },
                None,
            ),
        };
        let error = match (&curve, &reference) {
            (Some(c), Some(refc)) => {
                let c = if c.len() == refc.len() {
                    c.clone()
                } else {
                    c.resample(refc.len())?
                };
                Some(c.max_distance(refc))
            }
            _ => None,
        };
        let (ratio, ord) = match (
            rows.last().and_then(|r| r.error.map(|e| (r.level, e))),
            error,
        ) {
            (Some((prev_level, prev)), Some(e)) if e > 0.0 => {
                let ratio = prev / e;
                (
                    Some(ratio),
                    Some(ratio.ln() / (prev_level / levels[i]).ln().abs()),
                )
            }
            _ => (None, None),
        };
        rows.push(ConvergenceRow {
            level: levels[i],
            error,
            ratio,
            order: ord,
            status,
        });
    }
    Ok(ConvergenceTable {
        mode,
        reference: reference_level,
        rows,
    })
}

pub fn write_convergence(path: &Path, table: &ConvergenceTable) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["level", "error", "ratio", "order", "status"])?;
    let opt = |v: Option<f64>| v.map(fmt).unwrap_or_default();
    for r in &table.rows {
        let status = match &r.status {
            RunStatus::Completed => "completed".to_string(),
            RunStatus::Truncated { t, .. } => format!("truncated at t={t}"),
        };
        w.write_record([
            fmt(r.level),
            opt(r.error),
            opt(r.ratio),
            opt(r.order),
            status,
        ])?;
    }
    w.flush().map_err(io_err(path))
}

/// Creates `dir` and returns it, for drivers that write several files.
pub fn ensure_dir(dir: &Path) -> Result<&Path, ScenarioError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    Ok(dir)
}

/// Writes `text` to `path`, mapping the error.
pub fn write_text(path: &Path, text: &str) -> Result<(), ScenarioError> {
    let mut f = BufWriter::new(File::create(path).map_err(io_err(path))?);
    f.write_all(text.as_bytes()).map_err(io_err(path))
}

/// The far-field cache for a spec, exposed for probing fields off the boundary.
pub fn far_field_of(spec: &SimulationSpec) -> Result<FarField, ScenarioError> {
    Ok(FarField::new(
        build_far_field(&spec.farfield_shape, spec.n_inf)?,
        &spec.params,
    )?)
}
