//! Piecewise-constant propagation and objective gradients.
//!
//! The exact gradient differentiates the discretized product of interval
//! propagators. The approximate gradient samples the continuous-time
//! functional derivative at interval right endpoints and scales by Δt.
//!
//! Real symmetric systems (the rotor family) go through a state/costate
//! engine; anything else uses dense propagators.

mod real;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{phase_sensitivity, synthesize_choice_ii, PiecewiseField, SpectralPhaseField};
use crate::numerics::{hermitian_eig_unchecked, ComplexMatrix, EigenDecomposition};
use crate::objective::{evaluate, unitary_cotangent};
use crate::system::{ObjectiveSpec, QuantumSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientMode {
    Approximate,
    #[default]
    Exact,
}

#[derive(Debug, Clone)]
pub struct PropagationResult {
    /// U(t_l, 0) for l = 0..=L, starting from the identity.
    pub cumulative: Vec<ComplexMatrix>,
    /// Eigendecomposition of H₀ − μ ε_l per interval, reused by the exact gradient.
    increments: Vec<EigenDecomposition>,
    dt: f64,
}

impl PropagationResult {
    pub fn final_unitary(&self) -> &ComplexMatrix {
        self.cumulative.last().expect("cumulative always holds U(0)")
    }

    pub fn increment(&self, l: usize) -> ComplexMatrix {
        self.increments[l].unitary(self.dt)
    }
}

fn check_dims(system: &QuantumSystem, n: usize) -> Result<()> {
    if system.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: system.dim(),
            found: n,
        });
    }
    Ok(())
}

pub fn propagate(system: &QuantumSystem, field: &PiecewiseField) -> PropagationResult {
    let n = system.dim();
    let dt = field.grid.dt();
    let mut cumulative = Vec::with_capacity(field.samples.len() + 1);
    let mut increments = Vec::with_capacity(field.samples.len());
    cumulative.push(ComplexMatrix::identity(n, n));
    for &eps in &field.samples {
        let eig = hermitian_eig_unchecked(&system.hamiltonian(eps));
        let step = eig.unitary(dt);
        let next = step * cumulative.last().unwrap();
        cumulative.push(next);
        increments.push(eig);
    }
    PropagationResult {
        cumulative,
        increments,
        dt,
    }
}

/// μ(t) = U† μ U
pub fn dipole_heisenberg(u: &ComplexMatrix, mu: &ComplexMatrix) -> ComplexMatrix {
    u.adjoint() * mu * u
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GradientKind {
    FieldSamples,
    SpectralPhases,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector {
    pub kind: GradientKind,
    pub values: Vec<f64>,
}

impl GradientVector {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Tr(A B) without forming the product.
fn trace_product(a: &ComplexMatrix, b: &ComplexMatrix) -> Complex64 {
    let n = a.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..n {
        for k in 0..n {
            acc += a[(j, k)] * b[(k, j)];
        }
    }
    acc
}

/// ∂J/∂ε_l for every interval, given a finished propagation.
fn field_gradient_from(
    system: &QuantumSystem,
    field: &PiecewiseField,
    objective: &ObjectiveSpec,
    prop: &PropagationResult,
    mode: GradientMode,
) -> Vec<f64> {
    let u_t = prop.final_unitary();
    // dJ = Re Tr(C dU_T); P = C U_T
    let p = unitary_cotangent(objective, u_t) * u_t;
    let dt = prop.dt;
    let mu = system.dipole();
    let mut grad: Vec<f64> = match mode {
        GradientMode::Approximate => (1..prop.cumulative.len())
            .map(|l| {
                // δJ/δε(t) = −Im Tr(P μ(t))
                let mu_t = dipole_heisenberg(&prop.cumulative[l], mu);
                -trace_product(&p, &mu_t).im * dt
            })
            .collect(),
        GradientMode::Exact => {
            let neg_mu = -mu;
            (1..prop.cumulative.len())
                .map(|l| {
                    // ∂U_T/∂ε_l = U_T U_l† dU_l U_{l−1}
                    let eig = &prop.increments[l - 1];
                    let x = &prop.cumulative[l - 1] * (&p * prop.cumulative[l].adjoint());
                    let v = &eig.eigenvectors;
                    let x_rot = v.adjoint() * x * v;
                    let k_rot = v.adjoint() * &neg_mu * v;
                    let gamma = eig.exp_divided_differences(dt);
                    let n = v.nrows();
                    let mut acc = 0.0;
                    for j in 0..n {
                        for k in 0..n {
                            acc += (x_rot[(k, j)] * gamma[(j, k)] * k_rot[(j, k)]).re;
                        }
                    }
                    acc
                })
                .collect()
        }
    };
    add_penalty_gradient(&mut grad, field, objective.penalty_weight);
    grad
}

fn add_penalty_gradient(grad: &mut [f64], field: &PiecewiseField, weight: f64) {
    if weight > 0.0 {
        let dt = field.grid.dt();
        for (g, e) in grad.iter_mut().zip(&field.samples) {
            *g -= 2.0 * weight * e * dt;
        }
    }
}

pub fn gradient_field_samples(
    system: &QuantumSystem,
    field: &PiecewiseField,
    objective: &ObjectiveSpec,
    mode: GradientMode,
) -> Result<GradientVector> {
    Ok(evaluate_field(system, field, objective, mode)?.gradient)
}

/// Contracts ∂J/∂ε_l against ∂ε_l/∂φ_m.
fn phase_gradient_from(spec: &SpectralPhaseField, field_grad: &[f64]) -> Vec<f64> {
    (0..spec.components())
        .map(|m| {
            let sens = phase_sensitivity(spec, m).expect("index within range");
            sens.samples.iter().zip(field_grad).map(|(s, g)| s * g).sum()
        })
        .collect()
}

pub fn gradient_spectral_phases(
    system: &QuantumSystem,
    spec: &SpectralPhaseField,
    objective: &ObjectiveSpec,
    mode: GradientMode,
) -> Result<GradientVector> {
    let field = synthesize_choice_ii(spec);
    let field_grad = gradient_field_samples(system, &field, objective, mode)?;
    Ok(GradientVector {
        kind: GradientKind::SpectralPhases,
        values: phase_gradient_from(spec, &field_grad.values),
    })
}

/// Objective value and gradient from a single propagation.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: GradientVector,
    pub fluence: f64,
}

pub fn evaluate_field(
    system: &QuantumSystem,
    field: &PiecewiseField,
    objective: &ObjectiveSpec,
    mode: GradientMode,
) -> Result<Evaluation> {
    check_dims(system, objective.dim())?;
    let Some(real_system) = real::RealSystem::from_system(system) else {
        return evaluate_field_dense(system, field, objective, mode);
    };
    let (bare, mut values) =
        real::value_and_gradient(&real_system, &field.samples, field.grid.dt(), objective, mode);
    add_penalty_gradient(&mut values, field, objective.penalty_weight);
    let fluence = field.fluence();
    Ok(Evaluation {
        value: bare - objective.penalty_weight * fluence,
        gradient: GradientVector {
            kind: GradientKind::FieldSamples,
            values,
        },
        fluence,
    })
}

/// Same as [`evaluate_field`] but always through full propagators.
pub fn evaluate_field_dense(
    system: &QuantumSystem,
    field: &PiecewiseField,
    objective: &ObjectiveSpec,
    mode: GradientMode,
) -> Result<Evaluation> {
    check_dims(system, objective.dim())?;
    let prop = propagate(system, field);
    let value = evaluate(objective, prop.final_unitary(), Some(field))?;
    Ok(Evaluation {
        value,
        gradient: GradientVector {
            kind: GradientKind::FieldSamples,
            values: field_gradient_from(system, field, objective, &prop, mode),
        },
        fluence: field.fluence(),
    })
}

pub fn evaluate_phases(
    system: &QuantumSystem,
    spec: &SpectralPhaseField,
    objective: &ObjectiveSpec,
    mode: GradientMode,
) -> Result<Evaluation> {
    let field = synthesize_choice_ii(spec);
    let eval = evaluate_field(system, &field, objective, mode)?;
    Ok(Evaluation {
        gradient: GradientVector {
            kind: GradientKind::SpectralPhases,
            values: phase_gradient_from(spec, &eval.gradient.values),
        },
        ..eval
    })
}
