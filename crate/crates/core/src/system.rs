//! Model Hamiltonians, objective data, and unitary targets.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::numerics::{
    ensure_hermitian, expm_unitary, polar_unitary, real_diagonal, unitarity_defect, ComplexMatrix,
};
use crate::rng::{stream_rng, Stream};

const SYSTEM_HERMITIAN_TOL: f64 = 1e-12;

/// Field-free Hamiltonian and dipole operator; H(t) = H₀ − μ ε(t).
#[derive(Debug, Clone)]
pub struct QuantumSystem {
    h0: ComplexMatrix,
    dipole: ComplexMatrix,
}

impl QuantumSystem {
    pub fn new(h0: ComplexMatrix, dipole: ComplexMatrix) -> Result<Self> {
        if h0.nrows() < 2 {
            return Err(Error::InvalidParameter("dimension must be at least 2".into()));
        }
        if dipole.shape() != h0.shape() {
            return Err(Error::DimensionMismatch {
                expected: h0.nrows(),
                found: dipole.nrows(),
            });
        }
        ensure_hermitian(&h0, SYSTEM_HERMITIAN_TOL)?;
        ensure_hermitian(&dipole, SYSTEM_HERMITIAN_TOL)?;
        Ok(Self { h0, dipole })
    }

    pub fn dim(&self) -> usize {
        self.h0.nrows()
    }

    pub fn h0(&self) -> &ComplexMatrix {
        &self.h0
    }

    pub fn dipole(&self) -> &ComplexMatrix {
        &self.dipole
    }

    /// H₀ − μ ε
    pub fn hamiltonian(&self, field: f64) -> ComplexMatrix {
        &self.h0 - &self.dipole * Complex64::new(field, 0.0)
    }

    /// Same system with μ replaced by zero; uncontrollable by construction.
    pub fn without_coupling(&self) -> Self {
        let n = self.dim();
        Self {
            h0: self.h0.clone(),
            dipole: ComplexMatrix::zeros(n, n),
        }
    }
}

/// Parameters of the rotor-like model: H₀ = Σ λ j(j+1)|j⟩⟨j|, μ_jk = D^{|j−k|}/D.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotorParams {
    pub levels: usize,
    pub lambda: f64,
    pub decay: f64,
    #[serde(default)]
    pub diagonal_dipole: f64,
}

impl RotorParams {
    pub fn build(&self) -> Result<QuantumSystem> {
        build_rotor_system(self.levels, self.lambda, self.decay, self.diagonal_dipole)
    }
}

pub fn build_rotor_system(
    levels: usize,
    lambda: f64,
    decay: f64,
    diagonal_dipole: f64,
) -> Result<QuantumSystem> {
    if levels < 2 {
        return Err(Error::InvalidParameter(format!(
            "rotor needs at least 2 levels, got {levels}"
        )));
    }
    if !(decay > 0.0 && decay <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "dipole decay must lie in (0, 1], got {decay}"
        )));
    }
    let energies: Vec<f64> = (0..levels)
        .map(|j| lambda * (j * (j + 1)) as f64)
        .collect();
    let h0 = real_diagonal(&energies);
    let dipole = ComplexMatrix::from_fn(levels, levels, |j, k| {
        let value = if j == k {
            diagonal_dipole
        } else {
            decay.powi(j.abs_diff(k) as i32) / decay
        };
        Complex64::new(value, 0.0)
    });
    QuantumSystem::new(h0, dipole)
}

/// Smallest nonzero and largest |E_j − E_k| of a diagonal H₀.
pub fn transition_frequency_bounds(system: &QuantumSystem) -> Result<(f64, f64)> {
    let h0 = system.h0();
    let n = system.dim();
    let off_diagonal = (0..n)
        .flat_map(|j| (0..n).map(move |k| (j, k)))
        .filter(|(j, k)| j != k)
        .map(|(j, k)| h0[(j, k)].norm())
        .fold(0.0, f64::max);
    if off_diagonal > SYSTEM_HERMITIAN_TOL {
        return Err(Error::InvalidParameter("H0 must be diagonal".into()));
    }
    let energies: Vec<f64> = (0..n).map(|j| h0[(j, j)].re).collect();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for j in 0..n {
        for k in (j + 1)..n {
            let gap = (energies[j] - energies[k]).abs();
            if gap > 0.0 {
                lo = lo.min(gap);
                hi = hi.max(gap);
            }
        }
    }
    if lo.is_infinite() {
        return Err(Error::DegenerateSpectrum);
    }
    Ok((lo, hi))
}

/// Hermitian generator with row-major upper-triangle draws (real then
/// imaginary part), followed by the diagonal, all uniform on [0, 2π].
pub fn random_hermitian_generator(levels: usize, seed: u64) -> ComplexMatrix {
    let mut rng = stream_rng(seed, Stream::Target);
    let mut a = ComplexMatrix::zeros(levels, levels);
    for j in 0..levels {
        for k in (j + 1)..levels {
            let re = rng.random_range(0.0..=TAU);
            let im = rng.random_range(0.0..=TAU);
            a[(j, k)] = Complex64::new(re, im);
            a[(k, j)] = Complex64::new(re, -im);
        }
    }
    for j in 0..levels {
        a[(j, j)] = Complex64::new(rng.random_range(0.0..=TAU), 0.0);
    }
    a
}

/// W = exp(iA).
pub fn unitary_from_generator(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    expm_unitary(a, -1.0)
}

pub fn random_unitary_target(levels: usize, seed: u64) -> Result<ComplexMatrix> {
    if levels < 2 {
        return Err(Error::InvalidParameter(format!(
            "target dimension must be at least 2, got {levels}"
        )));
    }
    unitary_from_generator(&random_hermitian_generator(levels, seed))
}

#[rustfmt::skip]
const W1_RAW: [[(f64, f64); 5]; 5] = [
    [(0.456, -0.034), (0.064, 0.711), (0.055, 0.108), (0.222, 0.163), (0.409, -0.154)],
    [(-0.031, -0.246), (-0.418, 0.232), (0.621, -0.342), (-0.137, -0.417), (-0.101, -0.067)],
    [(-0.399, -0.008), (-0.236, 0.003), (-0.076, 0.216), (-0.327, 0.139), (0.278, -0.727)],
    [(-0.485, -0.329), (0.112, 0.326), (0.198, 0.521), (-0.123, 0.156), (-0.071, 0.427)],
    [(0.075, 0.471), (0.225, 0.190), (-0.074, 0.337), (-0.347, -0.668), (-0.035, 0.004)],
];

#[rustfmt::skip]
#[allow(clippy::approx_constant)]
const W2_RAW: [[(f64, f64); 5]; 5] = [
    [(0.131, 0.215), (-0.005, -0.039), (-0.121, 0.034), (0.292, 0.332), (0.603, 0.601)],
    [(0.084, -0.732), (0.317, -0.420), (0.122, 0.240), (-0.232, 0.059), (0.123, 0.187)],
    [(0.119, -0.023), (0.082, 0.098), (0.749, -0.486), (0.087, -0.318), (0.055, 0.245)],
    [(0.083, -0.584), (-0.239, 0.423), (-0.126, -0.214), (0.474, 0.287), (-0.217, 0.031)],
    [(-0.105, -0.143), (-0.241, 0.641), (0.099, 0.208), (-0.575, -0.017), (0.330, 0.080)],
];

fn from_table(table: &[[(f64, f64); 5]; 5]) -> ComplexMatrix {
    ComplexMatrix::from_fn(5, 5, |j, k| Complex64::new(table[j][k].0, table[j][k].1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PresetTarget {
    W1,
    W2,
}

/// A preset gate with 3-decimal entries and its polar projection.
#[derive(Debug, Clone)]
pub struct PresetUnitary {
    pub raw: ComplexMatrix,
    pub projected: ComplexMatrix,
}

impl PresetTarget {
    pub fn load(self) -> PresetUnitary {
        let raw = match self {
            PresetTarget::W1 => from_table(&W1_RAW),
            PresetTarget::W2 => from_table(&W2_RAW),
        };
        let projected = polar_unitary(&raw).expect("preset gates are nonsingular");
        PresetUnitary { raw, projected }
    }
}

pub fn preset_targets() -> (PresetUnitary, PresetUnitary) {
    (PresetTarget::W1.load(), PresetTarget::W2.load())
}

fn matrix_to_pairs(m: &ComplexMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|j| (0..m.ncols()).map(|k| [m[(j, k)].re, m[(j, k)].im]).collect())
        .collect()
}

/// Parses a row-major matrix of `[re, im]` pairs.
pub fn matrix_from_pairs(rows: &[Vec<[f64; 2]>]) -> Result<ComplexMatrix> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidParameter("matrix must be square".into()));
    }
    Ok(ComplexMatrix::from_fn(n, n, |j, k| {
        Complex64::new(rows[j][k][0], rows[j][k][1])
    }))
}

/// JSON fixture of both preset targets, raw and projected, entries as `[re, im]`.
pub fn preset_targets_json() -> serde_json::Value {
    let (w1, w2) = preset_targets();
    serde_json::json!({
        "W1": { "raw": matrix_to_pairs(&w1.raw), "projected": matrix_to_pairs(&w1.projected) },
        "W2": { "raw": matrix_to_pairs(&w2.raw), "projected": matrix_to_pairs(&w2.projected) },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Maximize,
    Minimize,
}

impl Direction {
    /// Default flow coefficient: +1 ascends, −1 descends.
    pub fn default_gamma(self) -> f64 {
        match self {
            Direction::Maximize => 1.0,
            Direction::Minimize => -1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub enum ObjectiveKind {
    /// |⟨f|U_T|i⟩|²
    StateTransition {
        initial: DVector<Complex64>,
        target: DVector<Complex64>,
    },
    /// Tr(U_T† θ U_T ρ₀)
    Observable {
        rho0: ComplexMatrix,
        theta: ComplexMatrix,
    },
    /// ½ − Re Tr(W† U_T) / 2N
    EvolutionOperator { target: ComplexMatrix },
}

#[derive(Debug, Clone)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    pub direction: Direction,
    pub penalty_weight: f64,
}

fn basis_vector(levels: usize, index: usize) -> Result<DVector<Complex64>> {
    if index >= levels {
        return Err(Error::IndexOutOfRange {
            index,
            len: levels,
        });
    }
    let mut v = DVector::zeros(levels);
    v[index] = Complex64::new(1.0, 0.0);
    Ok(v)
}

impl ObjectiveSpec {
    /// Transition |from⟩ → |to⟩ between basis states.
    pub fn state_transition(levels: usize, from: usize, to: usize) -> Result<Self> {
        Self::state_transition_vectors(basis_vector(levels, from)?, basis_vector(levels, to)?)
    }

    pub fn state_transition_vectors(
        initial: DVector<Complex64>,
        target: DVector<Complex64>,
    ) -> Result<Self> {
        if initial.len() != target.len() {
            return Err(Error::DimensionMismatch {
                expected: initial.len(),
                found: target.len(),
            });
        }
        for v in [&initial, &target] {
            if (v.norm() - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "state vectors must be normalized, got norm {}",
                    v.norm()
                )));
            }
        }
        Ok(Self {
            kind: ObjectiveKind::StateTransition { initial, target },
            direction: Direction::Maximize,
            penalty_weight: 0.0,
        })
    }

    /// ρ₀ and θ diagonal in the H₀ eigenbasis, given as spectra.
    pub fn observable_diagonal(populations: &[f64], theta: &[f64]) -> Result<Self> {
        Self::observable(real_diagonal(populations), real_diagonal(theta))
    }

    pub fn observable(rho0: ComplexMatrix, theta: ComplexMatrix) -> Result<Self> {
        if rho0.shape() != theta.shape() {
            return Err(Error::DimensionMismatch {
                expected: rho0.nrows(),
                found: theta.nrows(),
            });
        }
        ensure_hermitian(&rho0, 1e-12)?;
        ensure_hermitian(&theta, 1e-12)?;
        let trace = rho0.trace();
        if (trace.re - 1.0).abs() > 1e-10 || trace.im.abs() > 1e-10 {
            return Err(Error::InvalidParameter(format!(
                "rho0 must have unit trace, got {trace}"
            )));
        }
        let min_population = crate::numerics::hermitian_eig(&rho0)?.eigenvalues[0];
        if min_population < -1e-12 {
            return Err(Error::InvalidParameter(
                "rho0 must be positive semidefinite".into(),
            ));
        }
        Ok(Self {
            kind: ObjectiveKind::Observable { rho0, theta },
            direction: Direction::Maximize,
            penalty_weight: 0.0,
        })
    }

    pub fn evolution_operator(target: ComplexMatrix) -> Result<Self> {
        let defect = unitarity_defect(&target);
        if defect > 1e-6 {
            return Err(Error::InvalidParameter(format!(
                "target must be unitary, ‖W†W − I‖_F = {defect:.3e}"
            )));
        }
        Ok(Self {
            kind: ObjectiveKind::EvolutionOperator { target },
            direction: Direction::Minimize,
            penalty_weight: 0.0,
        })
    }

    pub fn with_direction(mut self, direction: Direction) -> Self {
        self.direction = direction;
        self
    }

    pub fn with_penalty(mut self, weight: f64) -> Result<Self> {
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "penalty weight must be finite and nonnegative, got {weight}"
            )));
        }
        self.penalty_weight = weight;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            ObjectiveKind::StateTransition { initial, .. } => initial.len(),
            ObjectiveKind::Observable { rho0, .. } => rho0.nrows(),
            ObjectiveKind::EvolutionOperator { target } => target.nrows(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{frobenius_norm, is_unitary};

    #[test]
    fn rotor_energies() {
        let sys = build_rotor_system(6, 1.0, 0.5, 0.0).unwrap();
        let diag: Vec<f64> = (0..6).map(|j| sys.h0()[(j, j)].re).collect();
        assert_eq!(diag, vec![0.0, 2.0, 6.0, 12.0, 20.0, 30.0]);
    }

    #[test]
    fn rotor_dipole_entries() {
        let sys = build_rotor_system(6, 1.0, 0.5, 0.0).unwrap();
        let mu = sys.dipole();
        assert_eq!(mu[(0, 1)].re, 1.0);
        assert_eq!(mu[(3, 2)].re, 1.0);
        assert_eq!(mu[(0, 2)].re, 0.5);
        assert_eq!(mu[(1, 4)].re, 0.25);
        assert_eq!(mu[(2, 2)].re, 0.0);
    }

    #[test]
    fn rotor_diagonal_dipole_and_trace() {
        let sys = build_rotor_system(5, 1.0, 0.9, 1.0).unwrap();
        for j in 0..5 {
            assert_eq!(sys.dipole()[(j, j)].re, 1.0);
        }
        assert!((sys.dipole().trace().re - 5.0).abs() < 1e-15);
    }

    #[test]
    fn rotor_rejects_bad_parameters() {
        assert!(build_rotor_system(1, 1.0, 0.5, 0.0).is_err());
        assert!(build_rotor_system(4, 1.0, 0.0, 0.0).is_err());
        assert!(build_rotor_system(4, 1.0, 1.5, 0.0).is_err());
    }

    #[test]
    fn frequency_bounds_of_rotors() {
        let six = build_rotor_system(6, 1.0, 0.5, 0.0).unwrap();
        assert_eq!(transition_frequency_bounds(&six).unwrap(), (2.0, 30.0));
        let four = build_rotor_system(4, 1.0, 0.9, 0.0).unwrap();
        assert_eq!(transition_frequency_bounds(&four).unwrap(), (2.0, 12.0));
    }

    #[test]
    fn frequency_bounds_degenerate() {
        let sys = QuantumSystem::new(real_diagonal(&[5.0, 5.0]), real_diagonal(&[1.0, 1.0])).unwrap();
        assert!(matches!(
            transition_frequency_bounds(&sys),
            Err(Error::DegenerateSpectrum)
        ));
    }

    #[test]
    fn zero_generator_gives_identity() {
        let w = unitary_from_generator(&ComplexMatrix::zeros(4, 4)).unwrap();
        assert!(frobenius_norm(&(w - ComplexMatrix::identity(4, 4))) < 1e-15);
    }

    #[test]
    fn random_target_is_deterministic_and_unitary() {
        let a = random_unitary_target(5, 99).unwrap();
        let b = random_unitary_target(5, 99).unwrap();
        assert_eq!(a, b);
        assert!(is_unitary(&a, 1e-10));
        assert_ne!(a, random_unitary_target(5, 100).unwrap());
    }

    #[test]
    fn generator_is_hermitian_with_entries_in_range() {
        let a = random_hermitian_generator(6, 3);
        assert!(crate::numerics::is_hermitian(&a, 0.0));
        for j in 0..6 {
            for k in j..6 {
                assert!((0.0..=TAU).contains(&a[(j, k)].re));
                assert!((0.0..=TAU).contains(&a[(j, k)].im));
            }
        }
    }

    #[test]
    fn preset_raw_entries() {
        let (w1, w2) = preset_targets();
        assert_eq!(w1.raw[(0, 0)], Complex64::new(0.456, -0.034));
        assert_eq!(w2.raw[(0, 0)], Complex64::new(0.131, 0.215));
        assert_eq!(w1.raw[(4, 3)], Complex64::new(-0.347, -0.668));
        assert_eq!(w2.raw[(3, 4)], Complex64::new(-0.217, 0.031));
    }

    #[test]
    fn preset_projection() {
        for preset in [PresetTarget::W1, PresetTarget::W2] {
            let w = preset.load();
            assert!(unitarity_defect(&w.raw) < 5e-3, "{preset:?}");
            assert!(is_unitary(&w.projected, 1e-12));
            let shift = (&w.projected - &w.raw).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(shift < 1e-3, "{preset:?} moved by {shift}");
        }
    }

    #[test]
    fn objective_validation() {
        assert!(ObjectiveSpec::state_transition(4, 0, 4).is_err());
        assert!(ObjectiveSpec::observable_diagonal(&[0.5, 0.4], &[0.0, 1.0]).is_err());
        assert!(ObjectiveSpec::observable_diagonal(&[1.2, -0.2], &[0.0, 1.0]).is_err());
        let not_unitary = real_diagonal(&[1.0, 2.0]);
        assert!(ObjectiveSpec::evolution_operator(not_unitary).is_err());
        let w = ObjectiveSpec::evolution_operator(ComplexMatrix::identity(3, 3)).unwrap();
        assert_eq!(w.direction, Direction::Minimize);
        assert_eq!(
            ObjectiveSpec::state_transition(4, 0, 3).unwrap().direction,
            Direction::Maximize
        );
        assert!(w.clone().with_penalty(-1.0).is_err());
    }
}
