//! Built-in constraint sweeps at two scales.
//!
//! `Paper` uses the full grids and run counts; `Desk` keeps a few interior
//! grid points with 10–50 runs each so a whole preset finishes in minutes.

use crate::dynamics::GradientMode;
use crate::error::{Error, Result};
use crate::harness::{
    ExperimentKind, ObjectiveTemplate, ParameterizationTemplate, ProblemTemplate, Scale,
    SweepSpec, SystemTemplate, TargetTemplate, DEFAULT_BASE_SEED,
};
use crate::optimizer::{Integrator, OptimizerConfig};
use crate::system::{PresetTarget, RotorParams};

pub const PRESET_NAMES: [&str; 9] = [
    "dt",
    "variable-count",
    "duration-w1",
    "duration-w2",
    "fluence-phases",
    "fluence-samples",
    "step-size-euler",
    "step-size-rk4",
    "tolerance",
];

/// Interval counts of the Δt sweep: 511 down to 95 in steps of 32, then 80 (Δt = 0.625).
pub const DT_INTERVALS: [usize; 15] = [511, 479, 447, 415, 383, 351, 319, 287, 255, 223, 191, 159, 127, 95, 80];

const DT_DURATION: f64 = 50.0;

fn rotor(levels: usize, decay: f64, diagonal_dipole: f64) -> SystemTemplate {
    SystemTemplate::Rotor(RotorParams {
        levels,
        lambda: 1.0,
        decay,
        diagonal_dipole,
    })
}

fn field_samples() -> ParameterizationTemplate {
    ParameterizationTemplate::FieldSamples { components: 20 }
}

fn phases(components: usize) -> ParameterizationTemplate {
    ParameterizationTemplate::SpectralPhases {
        components,
        frequencies: None,
    }
}

fn observable_problem() -> ProblemTemplate {
    ProblemTemplate {
        system: rotor(6, 0.5, 0.0),
        objective: ObjectiveTemplate::Observable {
            populations: vec![0.6, 0.4, 0.0, 0.0, 0.0, 0.0],
            theta: vec![0.0, 0.0, 0.0, 0.1, 0.2, 0.7],
        },
        direction: None,
        penalty_weight: 0.0,
        duration: DT_DURATION,
        intervals: DT_INTERVALS[0],
        parameterization: field_samples(),
        initial_fluence: 10.0,
        zeta_fraction: 0.1,
    }
}

fn four_level_transition(parameterization: ParameterizationTemplate, f0: f64) -> ProblemTemplate {
    ProblemTemplate {
        system: rotor(4, 0.9, 0.0),
        objective: ObjectiveTemplate::StateTransition { from: 0, to: 3 },
        direction: None,
        penalty_weight: 0.0,
        duration: 50.0,
        intervals: 1023,
        parameterization,
        initial_fluence: f0,
        zeta_fraction: 0.1,
    }
}

fn gate_problem(target: PresetTarget) -> ProblemTemplate {
    ProblemTemplate {
        system: rotor(5, 0.9, 1.0),
        objective: ObjectiveTemplate::EvolutionOperator {
            target: TargetTemplate::Preset(target),
        },
        direction: None,
        penalty_weight: 0.0,
        duration: 4.0,
        intervals: 128,
        parameterization: field_samples(),
        initial_fluence: 10.0,
        zeta_fraction: 0.1,
    }
}

fn six_level_transition() -> ProblemTemplate {
    ProblemTemplate {
        system: rotor(6, 0.5, 0.0),
        objective: ObjectiveTemplate::StateTransition { from: 0, to: 5 },
        direction: None,
        penalty_weight: 0.0,
        duration: 50.0,
        intervals: 511,
        parameterization: field_samples(),
        initial_fluence: 10.0,
        zeta_fraction: 0.1,
    }
}

/// Accepted steps over which the presets' stall rule measures progress.
pub const STALL_WINDOW: usize = 500;

/// Default adaptive search; the s cap and stall rule stop trapped runs.
fn adaptive(max_s: f64) -> OptimizerConfig {
    OptimizerConfig::adaptive(1e-8)
        .with_max_s(max_s)
        .with_stall(STALL_WINDOW)
}

fn log_grid(lo_exp: i32, hi_exp: i32) -> Vec<f64> {
    (lo_exp..=hi_exp).map(|e| 10f64.powi(e)).collect()
}

fn dt_grid(intervals: &[usize]) -> Vec<f64> {
    intervals.iter().map(|&l| DT_DURATION / l as f64).collect()
}

struct Plan {
    experiment: ExperimentKind,
    problem: ProblemTemplate,
    optimizer: OptimizerConfig,
    paper_grid: Vec<f64>,
    paper_runs: usize,
    desk_grid: Vec<f64>,
    desk_runs: usize,
}

fn plan(name: &str) -> Option<Plan> {
    let p = match name {
        "dt" => Plan {
            experiment: ExperimentKind::DtSweep,
            problem: observable_problem(),
            optimizer: adaptive(200.0).with_gradient_mode(GradientMode::Approximate),
            paper_grid: dt_grid(&DT_INTERVALS),
            paper_runs: 1000,
            desk_grid: dt_grid(&[511, 255, 159, 80]),
            desk_runs: 20,
        },
        "variable-count" => Plan {
            experiment: ExperimentKind::VariableCountSweep,
            problem: four_level_transition(phases(16), 1e3),
            // the flow is stiff at this fluence; slow climbers are cut off here
            optimizer: adaptive(200.0).with_max_iterations(6000),
            paper_grid: (3..=16).map(f64::from).collect(),
            paper_runs: 1000,
            desk_grid: vec![3.0, 5.0, 8.0, 12.0, 16.0],
            desk_runs: 50,
        },
        "duration-w1" | "duration-w2" => Plan {
            experiment: ExperimentKind::DurationSweep,
            problem: gate_problem(if name.ends_with("w1") {
                PresetTarget::W1
            } else {
                PresetTarget::W2
            }),
            // gate searches near the threshold creep toward J_min for 10⁴ or more iterations
            optimizer: OptimizerConfig::adaptive(1e-8)
                .with_max_iterations(30_000)
                .with_stall(STALL_WINDOW)
                .with_gradient_mode(GradientMode::Approximate),
            paper_grid: (0..=60).map(|k| 1.0 + 0.05 * f64::from(k)).collect(),
            paper_runs: 100,
            desk_grid: vec![1.0, 2.0, 2.8, 3.4, 4.0],
            desk_runs: 20,
        },
        "fluence-phases" => Plan {
            experiment: ExperimentKind::FluenceSweepChoiceII,
            problem: four_level_transition(phases(16), 10.0),
            optimizer: adaptive(200.0),
            paper_grid: vec![
                0.5, 1.0, 2.0, 3.0, 5.0, 7.5, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0,
            ],
            paper_runs: 1000,
            desk_grid: vec![0.5, 2.0, 10.0, 30.0, 50.0],
            desk_runs: 20,
        },
        "fluence-samples" => Plan {
            experiment: ExperimentKind::FluenceSweepChoiceI,
            problem: four_level_transition(field_samples(), 1.0),
            optimizer: adaptive(200.0),
            paper_grid: log_grid(-6, 3),
            paper_runs: 100,
            desk_grid: vec![1e-4, 1e-2, 1.0, 1e2],
            desk_runs: 10,
        },
        "step-size-euler" | "step-size-rk4" => Plan {
            experiment: ExperimentKind::StepSizeSweep,
            problem: six_level_transition(),
            optimizer: OptimizerConfig::fixed(
                if name.ends_with("euler") {
                    Integrator::Euler
                } else {
                    Integrator::Rk4Fixed
                },
                0.01,
            )
            .with_max_s(50.0),
            paper_grid: vec![0.01, 0.02, 0.03, 0.05, 0.07, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5],
            paper_runs: 1000,
            desk_grid: vec![0.01, 0.1, 0.3, 0.5],
            desk_runs: 50,
        },
        "tolerance" => Plan {
            experiment: ExperimentKind::ToleranceSweep,
            problem: six_level_transition(),
            optimizer: OptimizerConfig::adaptive(1e-3)
                .with_max_s(50.0)
                .with_stall(STALL_WINDOW),
            paper_grid: vec![1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2, 1e-1],
            paper_runs: 1000,
            desk_grid: vec![1e-3, 1e-2, 1e-1],
            desk_runs: 20,
        },
        _ => return None,
    };
    Some(p)
}

/// The named preset at the given scale.
pub fn preset(name: &str, scale: Scale) -> Result<SweepSpec> {
    let p = plan(name).ok_or_else(|| {
        Error::InvalidParameter(format!("unknown preset {name:?}; known: {}", PRESET_NAMES.join(", ")))
    })?;
    let (constraint_grid, runs_per_point) = match scale {
        Scale::Paper => (p.paper_grid, p.paper_runs),
        Scale::Desk => (p.desk_grid, p.desk_runs),
    };
    Ok(SweepSpec {
        name: name.to_owned(),
        experiment: p.experiment,
        problem: p.problem,
        constraint_grid,
        runs_per_point,
        base_seed: DEFAULT_BASE_SEED,
        optimizer: p.optimizer,
        workers: 0,
    })
}

pub fn preset_experiments(scale: Scale) -> Vec<SweepSpec> {
    PRESET_NAMES
        .iter()
        .map(|name| preset(name, scale).expect("listed presets exist"))
        .collect()
}
