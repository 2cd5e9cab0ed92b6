//! Gradient-flow search: ∂x/∂s = γ ∇J(x), integrated in the search index s.
//!
//! The state `x` is either the vector of field samples or the vector of
//! spectral phases. Three integrators are available: forward Euler and
//! classical RK4 with a fixed step Δs, and the Dormand–Prince 4(5) pair
//! with an absolute max-norm error tolerance τ.
//!
//! For field samples the flow follows the functional derivative
//! δJ/δε(t_l) ≈ (∂J/∂ε_l)/Δt, so Δs and τ do not depend on how finely the
//! time axis is cut.

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::dynamics::{evaluate_field, Evaluation, GradientKind, GradientMode, GradientVector};
use crate::error::{Error, Result};
use crate::field::{FieldGrid, PiecewiseField, SpectralBasis, SpectralPhaseField};
use crate::objective::{bare_value, converged, landscape_extrema, LandscapeExtrema};
use crate::system::{Direction, ObjectiveSpec, QuantumSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Euler,
    Rk4Fixed,
    Rk45Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub integrator: Integrator,
    /// Flow coefficient; `None` picks +1 when maximizing and −1 when minimizing.
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Δs for the fixed-step integrators.
    #[serde(default)]
    pub step_size: Option<f64>,
    /// Absolute error tolerance τ for the adaptive integrator.
    #[serde(default)]
    pub tolerance: Option<f64>,
    /// Convergence parameter; `None` means 0.001 (J_max − J_min).
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default)]
    pub max_s: Option<f64>,
    #[serde(default)]
    pub gradient_mode: GradientMode,
    /// Optional early stop for runs that stop making progress.
    #[serde(default)]
    pub stall: Option<StallCriterion>,
}

/// Ends a run once the progress of its last `window` accepted steps, carried
/// forward at the same rate, would not reach the convergence threshold
/// before `max_iterations`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StallCriterion {
    pub window: usize,
}

fn default_max_iterations() -> usize {
    50_000
}

impl OptimizerConfig {
    pub fn adaptive(tolerance: f64) -> Self {
        Self {
            integrator: Integrator::Rk45Adaptive,
            gamma: None,
            step_size: None,
            tolerance: Some(tolerance),
            eta: None,
            max_iterations: default_max_iterations(),
            max_s: None,
            gradient_mode: GradientMode::Exact,
            stall: None,
        }
    }

    pub fn fixed(integrator: Integrator, step_size: f64) -> Self {
        Self {
            integrator,
            step_size: Some(step_size),
            tolerance: None,
            ..Self::adaptive(1.0)
        }
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn with_max_s(mut self, max_s: f64) -> Self {
        self.max_s = Some(max_s);
        self
    }

    pub fn with_gradient_mode(mut self, mode: GradientMode) -> Self {
        self.gradient_mode = mode;
        self
    }

    pub fn with_stall(mut self, window: usize) -> Self {
        self.stall = Some(StallCriterion { window });
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: Option<f64>| match v {
            Some(x) if x > 0.0 && x.is_finite() => Ok(()),
            Some(x) => Err(Error::InvalidParameter(format!("{name} must be positive, got {x}"))),
            None => Err(Error::InvalidParameter(format!(
                "{name} is required by the {:?} integrator",
                self.integrator
            ))),
        };
        match self.integrator {
            Integrator::Euler | Integrator::Rk4Fixed => positive("step_size", self.step_size)?,
            Integrator::Rk45Adaptive => positive("tolerance", self.tolerance)?,
        }
        if self.eta.is_some() {
            positive("eta", self.eta)?;
        }
        if self.max_s.is_some() {
            positive("max_s", self.max_s)?;
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be at least 1".into()));
        }
        if let Some(st) = self.stall {
            if st.window == 0 {
                return Err(Error::InvalidParameter("stall window must be at least 1".into()));
            }
        }
        if let Some(g) = self.gamma {
            if !(g.is_finite() && g != 0.0) {
                return Err(Error::InvalidParameter(format!("gamma must be finite and nonzero, got {g}")));
            }
        }
        Ok(())
    }

    /// γ with its sign checked against the search direction.
    pub fn resolved_gamma(&self, direction: Direction) -> Result<f64> {
        let gamma = self.gamma.unwrap_or(direction.default_gamma());
        let ok = match direction {
            Direction::Maximize => gamma > 0.0,
            Direction::Minimize => gamma < 0.0,
        };
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "gamma = {gamma} has the wrong sign for {direction:?}"
            )));
        }
        Ok(gamma)
    }
}

/// Which variables the flow moves.
#[derive(Debug, Clone)]
pub enum Parameterization {
    FieldSamples { grid: FieldGrid },
    /// Only the phases move; frequencies, A₀ and ζ stay as in the template.
    SpectralPhases { template: SpectralPhaseField },
}

#[derive(Debug, Clone)]
pub struct ControlProblem {
    pub system: QuantumSystem,
    pub objective: ObjectiveSpec,
    parameterization: Parameterization,
    basis: Option<SpectralBasis>,
    /// Extrema of the bare objective; convergence is judged on it.
    pub extrema: LandscapeExtrema,
}

impl ControlProblem {
    pub fn new(
        system: QuantumSystem,
        objective: ObjectiveSpec,
        parameterization: Parameterization,
    ) -> Result<Self> {
        if system.dim() != objective.dim() {
            return Err(Error::DimensionMismatch {
                expected: system.dim(),
                found: objective.dim(),
            });
        }
        let bare = ObjectiveSpec {
            penalty_weight: 0.0,
            ..objective.clone()
        };
        let extrema = landscape_extrema(&bare)?;
        let basis = match &parameterization {
            Parameterization::FieldSamples { .. } => None,
            Parameterization::SpectralPhases { template } => Some(SpectralBasis::new(template)),
        };
        Ok(Self {
            system,
            objective,
            parameterization,
            basis,
            extrema,
        })
    }

    pub fn parameterization(&self) -> &Parameterization {
        &self.parameterization
    }

    /// Factor turning ∂J/∂x into the flow direction: 1/Δt for field samples.
    pub fn flow_scale(&self) -> f64 {
        match &self.parameterization {
            Parameterization::FieldSamples { grid } => 1.0 / grid.dt(),
            Parameterization::SpectralPhases { .. } => 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.parameterization {
            Parameterization::FieldSamples { grid } => grid.intervals,
            Parameterization::SpectralPhases { template } => template.components(),
        }
    }

    pub fn field_of(&self, state: &[f64]) -> PiecewiseField {
        match &self.parameterization {
            Parameterization::FieldSamples { grid } => PiecewiseField {
                grid: *grid,
                samples: state.to_vec(),
            },
            Parameterization::SpectralPhases { template } => PiecewiseField {
                grid: template.grid,
                samples: self.basis.as_ref().expect("built in new").synthesize(state),
            },
        }
    }

    pub fn evaluate(&self, state: &[f64], mode: GradientMode) -> Result<Evaluation> {
        match &self.parameterization {
            Parameterization::FieldSamples { grid } => {
                let field = PiecewiseField {
                    grid: *grid,
                    samples: state.to_vec(),
                };
                evaluate_field(&self.system, &field, &self.objective, mode)
            }
            Parameterization::SpectralPhases { .. } => {
                let field = self.field_of(state);
                let eval = evaluate_field(&self.system, &field, &self.objective, mode)?;
                let basis = self.basis.as_ref().expect("built in new");
                Ok(Evaluation {
                    gradient: GradientVector {
                        kind: GradientKind::SpectralPhases,
                        values: basis.contract(state, &eval.gradient.values),
                    },
                    ..eval
                })
            }
        }
    }

    /// Objective without the fluence penalty at `state`.
    pub fn bare_objective(&self, state: &[f64]) -> f64 {
        let field = self.field_of(state);
        let prop = crate::dynamics::propagate(&self.system, &field);
        bare_value(&self.objective, prop.final_unitary())
    }
}

/// Right-hand side of the flow at `state`.
pub fn flow_rhs(problem: &ControlProblem, state: &[f64], gamma: f64, mode: GradientMode) -> Result<Vec<f64>> {
    let eval = problem.evaluate(state, mode)?;
    let c = gamma * problem.flow_scale();
    Ok(eval.gradient.values.iter().map(|g| c * g).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TerminationReason {
    Converged,
    MaxIterations,
    MaxS,
    StepFailure,
    Stalled,
}

impl TerminationReason {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminationReason::Converged => "Converged",
            TerminationReason::MaxIterations => "MaxIterations",
            TerminationReason::MaxS => "MaxS",
            TerminationReason::StepFailure => "StepFailure",
            TerminationReason::Stalled => "Stalled",
        }
    }
}

impl std::str::FromStr for TerminationReason {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Converged" => Ok(Self::Converged),
            "MaxIterations" => Ok(Self::MaxIterations),
            "MaxS" => Ok(Self::MaxS),
            "StepFailure" => Ok(Self::StepFailure),
            "Stalled" => Ok(Self::Stalled),
            other => Err(Error::InvalidParameter(format!("unknown termination reason {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizationTrace {
    /// Search effort: steps taken, rejected adaptive steps included.
    pub iterations_used: usize,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub s_history: Vec<f64>,
    pub j_history: Vec<f64>,
    /// Final variables: field samples or phases.
    pub final_state: Vec<f64>,
    pub final_field: PiecewiseField,
    pub converged: bool,
    pub final_j: f64,
    /// Bare objective at the final state (equals `final_j` without a penalty).
    pub final_bare_j: f64,
    /// ‖flow direction‖ / |γ| at the final state.
    pub final_gradient_norm: f64,
    pub final_fluence: f64,
    pub eta: f64,
    pub termination_reason: TerminationReason,
    /// Diagnostic for `StepFailure`.
    pub failure: Option<String>,
}

impl OptimizationTrace {
    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }

    /// CSV with columns `s, J`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["s", "J"])?;
        for (s, j) in self.s_history.iter().zip(&self.j_history) {
            w.write_record([format!("{s:e}"), format!("{j:e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Current point of the flow with everything the stopping tests need.
struct Point {
    state: Vec<f64>,
    value: f64,
    bare: f64,
    rhs: Vec<f64>,
    fluence: f64,
}

struct Flow<'a> {
    problem: &'a ControlProblem,
    gamma: f64,
    mode: GradientMode,
}

impl Flow<'_> {
    fn point(&self, state: Vec<f64>) -> Result<Point, String> {
        let eval = self.problem.evaluate(&state, self.mode).map_err(|e| e.to_string())?;
        let Evaluation {
            value,
            gradient,
            fluence,
        } = eval;
        if !value.is_finite() || gradient.values.iter().any(|g| !g.is_finite()) {
            return Err(format!("non-finite objective or gradient (J = {value})"));
        }
        let penalty = self.problem.objective.penalty_weight * fluence;
        let c = self.gamma * self.problem.flow_scale();
        let rhs = gradient.values.iter().map(|g| c * g).collect();
        Ok(Point {
            state,
            value,
            bare: value + penalty,
            rhs,
            fluence,
        })
    }

    fn rhs_at(&self, state: Vec<f64>) -> Result<Vec<f64>, String> {
        self.point(state).map(|p| p.rhs)
    }
}

fn axpy_all(base: &[f64], h: f64, terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = base.to_vec();
    for &(c, k) in terms {
        if c != 0.0 {
            let hc = h * c;
            out.iter_mut().zip(k).for_each(|(o, ki)| *o += hc * ki);
        }
    }
    out
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

// Dormand–Prince 5(4) tableau; the flow is autonomous so the nodes are unused.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order weights minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const MAX_GROWTH: f64 = 5.0;
const MIN_SHRINK: f64 = 0.2;
const SAFETY: f64 = 0.9;

struct Recorder {
    s: f64,
    s_history: Vec<f64>,
    j_history: Vec<f64>,
    /// Bare J and iteration count at every accepted point, for the stall rule.
    bare_history: Vec<f64>,
    iteration_marks: Vec<usize>,
    accepted: usize,
    rejected: usize,
}

impl Recorder {
    fn push(&mut self, p: &Point) {
        self.s_history.push(self.s);
        self.j_history.push(p.value);
        self.bare_history.push(p.bare);
        self.iteration_marks.push(self.iterations());
    }

    fn iterations(&self) -> usize {
        self.accepted + self.rejected
    }

    /// `threshold` is the bare J that counts as converged; `sign` is +1 when maximizing.
    fn stalled(&self, stall: Option<StallCriterion>, threshold: f64, sign: f64, max_iterations: usize) -> bool {
        let Some(st) = stall else { return false };
        let n = self.bare_history.len();
        if n <= st.window {
            return false;
        }
        let (now, then) = (n - 1, n - 1 - st.window);
        let progress = sign * (self.bare_history[now] - self.bare_history[then]);
        if !(progress > 0.0) {
            return true;
        }
        let remaining = sign * (threshold - self.bare_history[now]);
        let spent = (self.iteration_marks[now] - self.iteration_marks[then]) as f64;
        let left = max_iterations.saturating_sub(self.iterations()) as f64;
        remaining / progress * spent > left
    }
}

/// Runs the gradient flow from `initial` until convergence or a cap.
pub fn optimize(
    problem: &ControlProblem,
    config: &OptimizerConfig,
    initial: Vec<f64>,
) -> Result<OptimizationTrace> {
    config.validate()?;
    if initial.len() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            found: initial.len(),
        });
    }
    let direction = problem.objective.direction;
    let gamma = config.resolved_gamma(direction)?;
    let eta = config.eta.unwrap_or_else(|| problem.extrema.default_eta());
    let max_s = config.max_s.unwrap_or(f64::INFINITY);
    let flow = Flow {
        problem,
        gamma,
        mode: config.gradient_mode,
    };
    let mut rec = Recorder {
        s: 0.0,
        s_history: Vec::new(),
        j_history: Vec::new(),
        bare_history: Vec::new(),
        iteration_marks: Vec::new(),
        accepted: 0,
        rejected: 0,
    };
    let done = |p: &Point| converged(p.bare, &problem.extrema, eta, direction);
    let (threshold, sign) = match direction {
        Direction::Maximize => (problem.extrema.j_max - eta, 1.0),
        Direction::Minimize => (problem.extrema.j_min + eta, -1.0),
    };

    let mut current = match flow.point(initial.clone()) {
        Ok(p) => p,
        Err(msg) => {
            let field = problem.field_of(&initial);
            return Ok(OptimizationTrace {
                iterations_used: 0,
                accepted_steps: 0,
                rejected_steps: 0,
                s_history: vec![0.0],
                j_history: vec![f64::NAN],
                final_fluence: field.fluence(),
                final_field: field,
                final_state: initial,
                converged: false,
                final_j: f64::NAN,
                final_bare_j: f64::NAN,
                final_gradient_norm: f64::NAN,
                eta,
                termination_reason: TerminationReason::StepFailure,
                failure: Some(msg),
            });
        }
    };
    rec.push(&current);

    let mut failure = None;
    let reason = if done(&current) {
        TerminationReason::Converged
    } else {
        match config.integrator {
            Integrator::Euler | Integrator::Rk4Fixed => {
                let ds = config.step_size.expect("validated");
                loop {
                    if rec.iterations() >= config.max_iterations {
                        break TerminationReason::MaxIterations;
                    }
                    if rec.s >= max_s {
                        break TerminationReason::MaxS;
                    }
                    let step = match config.integrator {
                        Integrator::Euler => Ok(axpy_all(&current.state, ds, &[(1.0, &current.rhs)])),
                        _ => rk4_step(&flow, &current, ds),
                    };
                    let next = step.and_then(|y| flow.point(y));
                    rec.accepted += 1;
                    match next {
                        Ok(p) => {
                            current = p;
                            rec.s += ds;
                            rec.push(&current);
                            if done(&current) {
                                break TerminationReason::Converged;
                            }
                            if rec.stalled(config.stall, threshold, sign, config.max_iterations) {
                                break TerminationReason::Stalled;
                            }
                        }
                        Err(msg) => {
                            failure = Some(msg);
                            break TerminationReason::StepFailure;
                        }
                    }
                }
            }
            Integrator::Rk45Adaptive => {
                let tol = config.tolerance.expect("validated");
                let mut h = 1e-3 / (1.0 + l2(&current.rhs));
                loop {
                    if rec.iterations() >= config.max_iterations {
                        break TerminationReason::MaxIterations;
                    }
                    if rec.s >= max_s {
                        break TerminationReason::MaxS;
                    }
                    let h_try = h.min(max_s - rec.s);
                    match dopri_step(&flow, &current, h_try) {
                        Ok((next, err)) => {
                            if err <= tol {
                                rec.accepted += 1;
                                rec.s += h_try;
                                current = next;
                                rec.push(&current);
                                if done(&current) {
                                    break TerminationReason::Converged;
                                }
                                if rec.stalled(config.stall, threshold, sign, config.max_iterations) {
                                    break TerminationReason::Stalled;
                                }
                            } else {
                                rec.rejected += 1;
                            }
                            let factor = if err == 0.0 {
                                MAX_GROWTH
                            } else {
                                (SAFETY * (tol / err).powf(0.2)).clamp(MIN_SHRINK, MAX_GROWTH)
                            };
                            h = h_try * factor;
                            if !(h > f64::EPSILON * rec.s.max(1.0)) {
                                failure = Some(format!("step size underflow at s = {}", rec.s));
                                break TerminationReason::StepFailure;
                            }
                        }
                        Err(msg) => {
                            rec.rejected += 1;
                            failure = Some(msg);
                            break TerminationReason::StepFailure;
                        }
                    }
                }
            }
        }
    };

    let final_field = problem.field_of(&current.state);
    Ok(OptimizationTrace {
        iterations_used: rec.iterations(),
        accepted_steps: rec.accepted,
        rejected_steps: rec.rejected,
        s_history: rec.s_history,
        j_history: rec.j_history,
        final_gradient_norm: l2(&current.rhs) / gamma.abs(),
        final_fluence: current.fluence,
        final_field,
        converged: reason == TerminationReason::Converged,
        final_j: current.value,
        final_bare_j: current.bare,
        final_state: current.state,
        eta,
        termination_reason: reason,
        failure,
    })
}

fn rk4_step(flow: &Flow, p: &Point, h: f64) -> Result<Vec<f64>, String> {
    let y = &p.state;
    let k1 = &p.rhs;
    let k2 = flow.rhs_at(axpy_all(y, 0.5 * h, &[(1.0, k1)]))?;
    let k3 = flow.rhs_at(axpy_all(y, 0.5 * h, &[(1.0, &k2)]))?;
    let k4 = flow.rhs_at(axpy_all(y, h, &[(1.0, &k3)]))?;
    Ok(axpy_all(
        y,
        h / 6.0,
        &[(1.0, k1), (2.0, &k2), (2.0, &k3), (1.0, &k4)],
    ))
}

/// One Dormand–Prince attempt; returns the fifth-order point and the max-norm error estimate.
fn dopri_step(flow: &Flow, p: &Point, h: f64) -> Result<(Point, f64), String> {
    let y = &p.state;
    let k1 = &p.rhs;
    let k2 = flow.rhs_at(axpy_all(y, h, &[(A21, k1)]))?;
    let k3 = flow.rhs_at(axpy_all(y, h, &[(A31, k1), (A32, &k2)]))?;
    let k4 = flow.rhs_at(axpy_all(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]))?;
    let k5 = flow.rhs_at(axpy_all(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
    let k6 = flow.rhs_at(axpy_all(
        y,
        h,
        &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
    ))?;
    let y5 = axpy_all(y, h, &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
    let next = flow.point(y5)?;
    let k7 = &next.rhs;
    let err = (0..y.len())
        .map(|i| (h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])).abs())
        .fold(0.0, f64::max);
    if !err.is_finite() {
        return Err("non-finite error estimate".into());
    }
    Ok((next, err))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminationClass {
    GlobalOptimum,
    TrappedCritical,
    SaddleVicinity,
    Undetermined,
}

/// Diagnoses how a finished search ended relative to the landscape's critical values.
pub fn classify_termination(
    trace: &OptimizationTrace,
    extrema: &LandscapeExtrema,
    grad_tol: f64,
) -> TerminationClass {
    if trace.converged {
        return TerminationClass::GlobalOptimum;
    }
    if !(trace.final_gradient_norm < grad_tol) {
        return TerminationClass::Undetermined;
    }
    let j = trace.final_bare_j;
    match extrema.nearest_critical_value(j) {
        Some(c) if (c - j).abs() <= trace.eta => TerminationClass::SaddleVicinity,
        _ => TerminationClass::TrappedCritical,
    }
}
