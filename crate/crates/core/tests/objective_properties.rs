mod common;

use num_complex::Complex64;

use common::{random_unitary, rng};
use ctrl_landscape::objective::{bare_value, landscape_extrema};
use ctrl_landscape::system::{random_unitary_target, ObjectiveSpec};

#[test]
fn transition_and_gate_objectives_are_bounded() {
    let mut r = rng(1);
    let transition = ObjectiveSpec::state_transition(5, 0, 4).unwrap();
    let gate = ObjectiveSpec::evolution_operator(random_unitary_target(5, 2).unwrap()).unwrap();
    for _ in 0..1000 {
        let u = random_unitary(5, &mut r);
        let p = bare_value(&transition, &u);
        let w = bare_value(&gate, &u);
        assert!((-1e-12..=1.0 + 1e-12).contains(&p), "J_P = {p}");
        assert!((-1e-12..=1.0 + 1e-12).contains(&w), "J_W = {w}");
    }
}

#[test]
fn observable_stays_within_its_extrema() {
    let spec = ObjectiveSpec::observable_diagonal(&[0.6, 0.4, 0.0, 0.0, 0.0, 0.0], &[0.0, 0.0, 0.0, 0.1, 0.2, 0.7]).unwrap();
    let extrema = landscape_extrema(&spec).unwrap();
    let mut r = rng(2);
    for _ in 0..1000 {
        let j = bare_value(&spec, &random_unitary(6, &mut r));
        assert!(j >= extrema.j_min - 1e-12 && j <= extrema.j_max + 1e-12, "J = {j}");
    }
}

#[test]
fn gate_objective_under_a_global_phase() {
    let w = random_unitary_target(5, 9).unwrap();
    let spec = ObjectiveSpec::evolution_operator(w.clone()).unwrap();
    for alpha in [0.0, std::f64::consts::FRAC_PI_2, std::f64::consts::PI] {
        let u = &w * Complex64::from_polar(1.0, alpha);
        let expected = (1.0 - alpha.cos()) / 2.0;
        assert!((bare_value(&spec, &u) - expected).abs() < 1e-12);
    }
}
