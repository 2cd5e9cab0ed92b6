//! Objective values, their landscape extrema, and the convergence test.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{fluence, PiecewiseField};
use crate::numerics::{hermitian_eig, ComplexMatrix};
use crate::system::{Direction, ObjectiveKind, ObjectiveSpec};

/// Values closer than this are merged in the critical-value list.
const CRITICAL_DEDUP_TOL: f64 = 1e-12;

/// Largest dimension for which all pairings are enumerated.
const MAX_ENUMERATED_LEVELS: usize = 8;

/// Objective of the bare (unpenalized) kind at final propagator `u_t`.
pub fn bare_value(objective: &ObjectiveSpec, u_t: &ComplexMatrix) -> f64 {
    match &objective.kind {
        ObjectiveKind::StateTransition { initial, target } => {
            let amplitude = target.dotc(&(u_t * initial));
            amplitude.norm_sqr()
        }
        ObjectiveKind::Observable { rho0, theta } => {
            (u_t.adjoint() * theta * u_t * rho0).trace().re
        }
        ObjectiveKind::EvolutionOperator { target } => {
            let n = target.nrows() as f64;
            0.5 - (target.adjoint() * u_t).trace().re / (2.0 * n)
        }
    }
}

pub fn evaluate(
    objective: &ObjectiveSpec,
    u_t: &ComplexMatrix,
    field: Option<&PiecewiseField>,
) -> Result<f64> {
    if u_t.nrows() != objective.dim() {
        return Err(Error::DimensionMismatch {
            expected: objective.dim(),
            found: u_t.nrows(),
        });
    }
    let bare = bare_value(objective, u_t);
    if objective.penalty_weight > 0.0 {
        let field = field.ok_or(Error::MissingField)?;
        Ok(bare - objective.penalty_weight * fluence(field))
    } else {
        Ok(bare)
    }
}

/// Matrix C with dJ = Re Tr(C dU_T) for the bare objective.
pub(crate) fn unitary_cotangent(objective: &ObjectiveSpec, u_t: &ComplexMatrix) -> ComplexMatrix {
    match &objective.kind {
        ObjectiveKind::StateTransition { initial, target } => {
            let amplitude = target.dotc(&(u_t * initial));
            initial * target.adjoint() * (amplitude.conj() * 2.0)
        }
        ObjectiveKind::Observable { rho0, theta } => rho0 * u_t.adjoint() * theta * Complex64::new(2.0, 0.0),
        ObjectiveKind::EvolutionOperator { target } => {
            let n = target.nrows() as f64;
            target.adjoint() * Complex64::new(-0.5 / n, 0.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeExtrema {
    pub j_min: f64,
    pub j_max: f64,
    /// Ascending. Empty when the dimension is too large to enumerate.
    pub critical_values: Vec<f64>,
}

impl LandscapeExtrema {
    pub fn range(&self) -> f64 {
        self.j_max - self.j_min
    }

    /// η = 0.001 (J_max − J_min)
    pub fn default_eta(&self) -> f64 {
        1e-3 * self.range()
    }

    pub fn target(&self, direction: Direction) -> f64 {
        match direction {
            Direction::Maximize => self.j_max,
            Direction::Minimize => self.j_min,
        }
    }

    pub fn nearest_critical_value(&self, j: f64) -> Option<f64> {
        self.critical_values
            .iter()
            .copied()
            .min_by(|a, b| (a - j).abs().total_cmp(&(b - j).abs()))
    }
}

fn dedup_sorted(mut values: Vec<f64>) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    values.dedup_by(|a, b| (*a - *b).abs() < CRITICAL_DEDUP_TOL);
    values
}

fn for_each_permutation(n: usize, mut visit: impl FnMut(&[usize])) {
    // Heap's algorithm
    let mut perm: Vec<usize> = (0..n).collect();
    let mut counters = vec![0usize; n];
    visit(&perm);
    let mut i = 0;
    while i < n {
        if counters[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(counters[i], i);
            }
            visit(&perm);
            counters[i] += 1;
            i = 0;
        } else {
            counters[i] = 0;
            i += 1;
        }
    }
}

/// Critical values Σ_k p_σ(k) θ_k over all pairings of the two spectra.
fn observable_critical_values(populations: &[f64], theta: &[f64]) -> LandscapeExtrema {
    let n = populations.len();
    if n > MAX_ENUMERATED_LEVELS {
        // rearrangement inequality: like-sorted pairing maximizes, opposite-sorted minimizes
        let mut p = populations.to_vec();
        let mut q = theta.to_vec();
        p.sort_by(f64::total_cmp);
        q.sort_by(f64::total_cmp);
        let j_max = p.iter().zip(&q).map(|(a, b)| a * b).sum();
        let j_min = p.iter().zip(q.iter().rev()).map(|(a, b)| a * b).sum();
        return LandscapeExtrema {
            j_min,
            j_max,
            critical_values: Vec::new(),
        };
    }
    let mut values = Vec::new();
    for_each_permutation(n, |sigma| {
        values.push(sigma.iter().zip(theta).map(|(&s, t)| populations[s] * t).sum());
    });
    let critical_values = dedup_sorted(values);
    LandscapeExtrema {
        j_min: critical_values[0],
        j_max: *critical_values.last().unwrap(),
        critical_values,
    }
}

pub fn landscape_extrema(objective: &ObjectiveSpec) -> Result<LandscapeExtrema> {
    if objective.penalty_weight > 0.0 {
        return Err(Error::PenalizedExtrema);
    }
    let extrema = match &objective.kind {
        ObjectiveKind::StateTransition { .. } => LandscapeExtrema {
            j_min: 0.0,
            j_max: 1.0,
            critical_values: vec![0.0, 1.0],
        },
        ObjectiveKind::EvolutionOperator { target } => {
            let n = target.nrows();
            LandscapeExtrema {
                j_min: 0.0,
                j_max: 1.0,
                critical_values: (0..=n).map(|k| k as f64 / n as f64).collect(),
            }
        }
        ObjectiveKind::Observable { rho0, theta } => {
            let p = hermitian_eig(rho0)?.eigenvalues;
            let q = hermitian_eig(theta)?.eigenvalues;
            observable_critical_values(&p, &q)
        }
    };
    Ok(extrema)
}

/// J ≥ J_max − η when maximizing, J ≤ J_min + η when minimizing.
pub fn converged(j: f64, extrema: &LandscapeExtrema, eta: f64, direction: Direction) -> bool {
    match direction {
        Direction::Maximize => j >= extrema.j_max - eta,
        Direction::Minimize => j <= extrema.j_min + eta,
    }
}
