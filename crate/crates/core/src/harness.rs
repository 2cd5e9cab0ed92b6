//! Seeded constraint sweeps: problem templates, preset experiments, batch
//! execution, aggregation and persistence.
//!
//! A sweep varies one constraint over a grid and runs `runs_per_point`
//! independent searches at every grid point. Run `r` at grid index `g` uses
//! the seed `run_seed(base_seed, g, r)`, so records do not depend on the
//! worker count or on scheduling.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::mpsc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{
    init_field_choice_i, random_phases, FieldGrid, SpectralPhaseField, DEFAULT_INIT_COMPONENTS,
    DEFAULT_ZETA_FRACTION,
};
use crate::optimizer::{
    optimize, ControlProblem, Integrator, OptimizationTrace, OptimizerConfig, Parameterization,
    TerminationReason,
};
use crate::rng::run_seed;
use crate::system::{
    matrix_from_pairs, random_unitary_target, Direction, ObjectiveSpec, PresetTarget,
    QuantumSystem, RotorParams,
};

pub const DEFAULT_BASE_SEED: u64 = 20_150_521;

type Pairs = Vec<Vec<[f64; 2]>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemTemplate {
    Rotor(RotorParams),
    /// Row-major matrices of `[re, im]` pairs.
    Explicit { h0: Pairs, dipole: Pairs },
}

impl SystemTemplate {
    pub fn build(&self) -> Result<QuantumSystem> {
        match self {
            SystemTemplate::Rotor(p) => p.build(),
            SystemTemplate::Explicit { h0, dipole } => {
                QuantumSystem::new(matrix_from_pairs(h0)?, matrix_from_pairs(dipole)?)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetTemplate {
    /// One of the two preset gates, projected onto the nearest unitary.
    Preset(PresetTarget),
    /// exp(iA) with A drawn from `generator_seed`.
    Random { generator_seed: u64 },
    Matrix(Pairs),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveTemplate {
    StateTransition {
        from: usize,
        to: usize,
    },
    /// Diagonal ρ₀ and θ given by their spectra.
    Observable {
        populations: Vec<f64>,
        theta: Vec<f64>,
    },
    ObservableMatrix {
        rho0: Pairs,
        theta: Pairs,
    },
    EvolutionOperator {
        target: TargetTemplate,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterizationTemplate {
    /// Free field samples, initialized from `components` random cosines.
    FieldSamples {
        #[serde(default = "default_components")]
        components: usize,
    },
    /// Phases of fixed unit-amplitude components; frequencies default to 1, 2, …, M.
    SpectralPhases {
        components: usize,
        #[serde(default)]
        frequencies: Option<Vec<f64>>,
    },
}

fn default_components() -> usize {
    DEFAULT_INIT_COMPONENTS
}

fn default_zeta_fraction() -> f64 {
    DEFAULT_ZETA_FRACTION
}

/// Everything needed to build a control problem and draw its initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemTemplate {
    pub system: SystemTemplate,
    pub objective: ObjectiveTemplate,
    /// Defaults to maximize, except minimize for the evolution-operator objective.
    #[serde(default)]
    pub direction: Option<Direction>,
    #[serde(default)]
    pub penalty_weight: f64,
    pub duration: f64,
    pub intervals: usize,
    pub parameterization: ParameterizationTemplate,
    pub initial_fluence: f64,
    /// Envelope width as a fraction of the duration.
    #[serde(default = "default_zeta_fraction")]
    pub zeta_fraction: f64,
}

impl ProblemTemplate {
    pub fn grid(&self) -> Result<FieldGrid> {
        FieldGrid::new(self.duration, self.intervals)
    }

    pub fn objective_spec(&self, levels: usize) -> Result<ObjectiveSpec> {
        let spec = match &self.objective {
            ObjectiveTemplate::StateTransition { from, to } => {
                ObjectiveSpec::state_transition(levels, *from, *to)?
            }
            ObjectiveTemplate::Observable { populations, theta } => {
                ObjectiveSpec::observable_diagonal(populations, theta)?
            }
            ObjectiveTemplate::ObservableMatrix { rho0, theta } => {
                ObjectiveSpec::observable(matrix_from_pairs(rho0)?, matrix_from_pairs(theta)?)?
            }
            ObjectiveTemplate::EvolutionOperator { target } => {
                let w = match target {
                    TargetTemplate::Preset(p) => p.load().projected,
                    TargetTemplate::Random { generator_seed } => {
                        random_unitary_target(levels, *generator_seed)?
                    }
                    TargetTemplate::Matrix(rows) => matrix_from_pairs(rows)?,
                };
                ObjectiveSpec::evolution_operator(w)?
            }
        };
        let spec = match self.direction {
            Some(d) => spec.with_direction(d),
            None => spec,
        };
        if self.penalty_weight != 0.0 {
            spec.with_penalty(self.penalty_weight)
        } else {
            Ok(spec)
        }
    }

    fn zeta(&self) -> f64 {
        self.zeta_fraction * self.duration
    }

    /// Builds the problem for one run and draws its initial state from `seed`.
    pub fn instantiate(&self, seed: u64) -> Result<(ControlProblem, Vec<f64>)> {
        let system = self.system.build()?;
        let objective = self.objective_spec(system.dim())?;
        let grid = self.grid()?;
        match &self.parameterization {
            ParameterizationTemplate::FieldSamples { components } => {
                let field = init_field_choice_i(
                    &system,
                    grid,
                    *components,
                    self.zeta(),
                    self.initial_fluence,
                    seed,
                )?;
                let problem =
                    ControlProblem::new(system, objective, Parameterization::FieldSamples { grid })?;
                Ok((problem, field.samples))
            }
            ParameterizationTemplate::SpectralPhases {
                components,
                frequencies,
            } => {
                let frequencies = match frequencies {
                    Some(f) if f.len() == *components => f.clone(),
                    Some(f) => {
                        return Err(Error::DimensionMismatch {
                            expected: *components,
                            found: f.len(),
                        })
                    }
                    None => (1..=*components).map(|m| m as f64).collect(),
                };
                let phases = random_phases(*components, seed);
                let template = SpectralPhaseField::calibrated(
                    grid,
                    frequencies,
                    phases.clone(),
                    self.zeta(),
                    self.initial_fluence,
                )?;
                let problem = ControlProblem::new(
                    system,
                    objective,
                    Parameterization::SpectralPhases { template },
                )?;
                Ok((problem, phases))
            }
        }
    }
}

/// A single search: problem, optimizer settings and the seed of the initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub problem: ProblemTemplate,
    pub optimizer: OptimizerConfig,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    DEFAULT_BASE_SEED
}

impl RunSpec {
    pub fn run(&self) -> Result<(ControlProblem, OptimizationTrace)> {
        let (problem, initial) = self.problem.instantiate(self.seed)?;
        let trace = optimize(&problem, &self.optimizer, initial)?;
        Ok((problem, trace))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentKind {
    /// Constraint value is Δt; the interval count becomes T/Δt.
    DtSweep,
    /// Constraint value is the number of spectral components M.
    VariableCountSweep,
    /// Constraint value is T at a fixed interval count.
    DurationSweep,
    /// Constraint value is F₀ with phase variables.
    FluenceSweepChoiceII,
    /// Constraint value is F₀ with free field samples.
    FluenceSweepChoiceI,
    /// Constraint value is Δs of a fixed-step integrator.
    StepSizeSweep,
    /// Constraint value is τ of the adaptive integrator.
    ToleranceSweep,
    /// The template is used unchanged; the value is only a label.
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub name: String,
    pub experiment: ExperimentKind,
    pub problem: ProblemTemplate,
    pub constraint_grid: Vec<f64>,
    pub runs_per_point: usize,
    pub base_seed: u64,
    pub optimizer: OptimizerConfig,
    /// Worker threads; 0 lets the pool decide.
    #[serde(default)]
    pub workers: usize,
}

fn as_count(value: f64, what: &str) -> Result<usize> {
    if value >= 1.0 && value.fract() == 0.0 && value < u32::MAX as f64 {
        Ok(value as usize)
    } else {
        Err(Error::InvalidParameter(format!("{what} must be a positive integer, got {value}")))
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.constraint_grid.is_empty() {
            return Err(Error::Empty("constraint grid"));
        }
        if self.runs_per_point == 0 {
            return Err(Error::InvalidParameter("runs_per_point must be at least 1".into()));
        }
        let w = &self.constraint_grid;
        let increasing = w.windows(2).all(|p| p[0] < p[1]);
        let decreasing = w.windows(2).all(|p| p[0] > p[1]);
        if !(increasing || decreasing) {
            return Err(Error::InvalidParameter(
                "constraint grid must be strictly monotone".into(),
            ));
        }
        for &value in w {
            let (problem, config) = self.point(value)?;
            config.validate()?;
            let system = problem.system.build()?;
            problem.objective_spec(system.dim())?;
            problem.grid()?;
        }
        Ok(())
    }

    /// Problem template and optimizer settings at one constraint value.
    pub fn point(&self, value: f64) -> Result<(ProblemTemplate, OptimizerConfig)> {
        let mut problem = self.problem.clone();
        let mut config = self.optimizer;
        let bad = |msg: &str| Err(Error::InvalidParameter(format!("{:?}: {msg}", self.experiment)));
        match self.experiment {
            ExperimentKind::DtSweep => {
                if !(value > 0.0) {
                    return bad("Δt must be positive");
                }
                problem.intervals = as_count((problem.duration / value).round(), "T/Δt")?;
            }
            ExperimentKind::VariableCountSweep => match &mut problem.parameterization {
                ParameterizationTemplate::SpectralPhases {
                    components,
                    frequencies,
                } => {
                    *components = as_count(value, "M")?;
                    if let Some(f) = frequencies {
                        if f.len() < *components {
                            return bad("fewer explicit frequencies than components");
                        }
                        f.truncate(*components);
                    }
                }
                ParameterizationTemplate::FieldSamples { .. } => {
                    return bad("needs spectral-phase variables")
                }
            },
            ExperimentKind::DurationSweep => problem.duration = value,
            ExperimentKind::FluenceSweepChoiceII => {
                if !matches!(problem.parameterization, ParameterizationTemplate::SpectralPhases { .. }) {
                    return bad("needs spectral-phase variables");
                }
                problem.initial_fluence = value;
            }
            ExperimentKind::FluenceSweepChoiceI => {
                if !matches!(problem.parameterization, ParameterizationTemplate::FieldSamples { .. }) {
                    return bad("needs field-sample variables");
                }
                problem.initial_fluence = value;
            }
            ExperimentKind::StepSizeSweep => {
                if config.integrator == Integrator::Rk45Adaptive {
                    return bad("needs a fixed-step integrator");
                }
                config.step_size = Some(value);
            }
            ExperimentKind::ToleranceSweep => {
                if config.integrator != Integrator::Rk45Adaptive {
                    return bad("needs the adaptive integrator");
                }
                config.tolerance = Some(value);
            }
            ExperimentKind::Custom => {}
        }
        Ok((problem, config))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub experiment: String,
    pub constraint_value: f64,
    pub run_index: usize,
    pub seed: u64,
    #[serde(with = "bool_as_int")]
    pub converged: bool,
    #[serde(rename = "final_J")]
    pub final_j: f64,
    pub iterations: usize,
    pub final_fluence: f64,
    pub termination_reason: TerminationReason,
    pub wall_time_seconds: f64,
}

mod bool_as_int {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(serde::de::Error::custom(format!("expected 0 or 1, got {other}"))),
        }
    }
}

impl RunRecord {
    /// Same record apart from the timing column.
    pub fn same_outcome(&self, other: &Self) -> bool {
        let strip = |r: &Self| Self {
            wall_time_seconds: 0.0,
            ..r.clone()
        };
        let (a, b) = (strip(self), strip(other));
        // NaN-tolerant comparison of the float columns
        a.experiment == b.experiment
            && a.constraint_value.to_bits() == b.constraint_value.to_bits()
            && a.run_index == b.run_index
            && a.seed == b.seed
            && a.converged == b.converged
            && a.final_j.to_bits() == b.final_j.to_bits()
            && a.iterations == b.iterations
            && a.final_fluence.to_bits() == b.final_fluence.to_bits()
            && a.termination_reason == b.termination_reason
    }
}

/// Runs one search of a sweep and returns its full trace.
pub fn run_trace(spec: &SweepSpec, grid_index: usize, run_index: usize) -> Result<OptimizationTrace> {
    let value = spec.constraint_grid[grid_index];
    let (template, config) = spec.point(value)?;
    let (problem, initial) = template.instantiate(run_seed(spec.base_seed, grid_index, run_index))?;
    optimize(&problem, &config, initial)
}

fn run_record(spec: &SweepSpec, grid_index: usize, run_index: usize) -> RunRecord {
    let start = Instant::now();
    let outcome = run_trace(spec, grid_index, run_index);
    let wall_time_seconds = start.elapsed().as_secs_f64();
    let (converged, final_j, iterations, final_fluence, termination_reason) = match outcome {
        Ok(t) => (t.converged, t.final_j, t.iterations_used, t.final_fluence, t.termination_reason),
        Err(_) => (false, f64::NAN, 0, f64::NAN, TerminationReason::StepFailure),
    };
    RunRecord {
        experiment: spec.name.clone(),
        constraint_value: spec.constraint_grid[grid_index],
        run_index,
        seed: run_seed(spec.base_seed, grid_index, run_index),
        converged,
        final_j,
        iterations,
        final_fluence,
        termination_reason,
        wall_time_seconds,
    }
}

type Job = (usize, usize);

#[cfg(feature = "parallel")]
fn execute(spec: &SweepSpec, jobs: &[Job], tx: mpsc::Sender<(Job, RunRecord)>) -> Result<()> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
    pool.install(|| {
        jobs.par_iter().for_each_with(tx, |tx, &(g, r)| {
            // a closed channel means the collector is gone; nothing left to report to
            let _ = tx.send(((g, r), run_record(spec, g, r)));
        })
    });
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn execute(spec: &SweepSpec, jobs: &[Job], tx: mpsc::Sender<(Job, RunRecord)>) -> Result<()> {
    for &(g, r) in jobs {
        if tx.send(((g, r), run_record(spec, g, r))).is_err() {
            break;
        }
    }
    Ok(())
}

/// Runs every (grid point, run) pair, handing each record to `sink` as it
/// completes. Returns the records ordered by grid point, then run index.
pub fn run_sweep_with(
    spec: &SweepSpec,
    mut sink: impl FnMut(&RunRecord) -> Result<()>,
) -> Result<Vec<RunRecord>> {
    spec.validate()?;
    let jobs: Vec<Job> = (0..spec.constraint_grid.len())
        .flat_map(|g| (0..spec.runs_per_point).map(move |r| (g, r)))
        .collect();
    let (tx, rx) = mpsc::channel();
    let mut collected = Vec::with_capacity(jobs.len());
    let mut sink_error = None;
    let exec = std::thread::scope(|scope| {
        let worker = scope.spawn(|| execute(spec, &jobs, tx));
        for (job, record) in rx {
            if sink_error.is_none() {
                if let Err(e) = sink(&record) {
                    sink_error = Some(e);
                }
            }
            collected.push((job, record));
        }
        worker.join().expect("sweep worker panicked")
    });
    exec?;
    if let Some(e) = sink_error {
        return Err(e);
    }
    collected.sort_by_key(|(job, _)| *job);
    Ok(collected.into_iter().map(|(_, r)| r).collect())
}

pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<RunRecord>> {
    run_sweep_with(spec, |_| Ok(()))
}

/// Runs a sweep into `dir`: `spec.json` first, `records.csv` appended and
/// flushed after every run (in completion order), then `aggregate.csv`.
pub fn run_sweep_to_dir(spec: &SweepSpec, dir: &Path) -> Result<Vec<RunRecord>> {
    spec.validate()?;
    std::fs::create_dir_all(dir)?;
    write_spec_json(spec, File::create(dir.join("spec.json"))?)?;
    let mut writer = csv::Writer::from_writer(File::create(dir.join("records.csv"))?);
    let records = run_sweep_with(spec, |r| {
        writer.serialize(r)?;
        writer.flush()?;
        Ok(())
    })?;
    drop(writer);
    write_aggregate_csv(&aggregate(&records)?, File::create(dir.join("aggregate.csv"))?)?;
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub constraint_value: f64,
    pub fraction_success: f64,
    #[serde(rename = "mean_final_J")]
    pub mean_final_j: f64,
    /// Mean fluence over converged runs; absent when none converged.
    pub mean_opt_fluence: Option<f64>,
    pub n_runs: usize,
}

/// Per-constraint-value statistics, ordered by constraint value.
pub fn aggregate(records: &[RunRecord]) -> Result<Vec<AggregateRow>> {
    if records.is_empty() {
        return Err(Error::Empty("records"));
    }
    let mut groups: BTreeMap<u64, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.constraint_value.to_bits()).or_default().push(r);
    }
    let mut rows: Vec<AggregateRow> = groups
        .into_values()
        .map(|mut group| {
            // fixed summation order makes the fold independent of input order
            group.sort_by(|a, b| {
                (a.run_index, a.seed, &a.experiment).cmp(&(b.run_index, b.seed, &b.experiment))
            });
            let n = group.len();
            let successes: Vec<&&RunRecord> = group.iter().filter(|r| r.converged).collect();
            let mean_final_j = group.iter().map(|r| r.final_j).sum::<f64>() / n as f64;
            let mean_opt_fluence = (!successes.is_empty()).then(|| {
                successes.iter().map(|r| r.final_fluence).sum::<f64>() / successes.len() as f64
            });
            AggregateRow {
                constraint_value: group[0].constraint_value,
                fraction_success: successes.len() as f64 / n as f64,
                mean_final_j,
                mean_opt_fluence,
                n_runs: n,
            }
        })
        .collect();
    rows.sort_by(|a, b| a.constraint_value.total_cmp(&b.constraint_value));
    Ok(rows)
}

pub fn write_records_csv<W: Write>(records: &[RunRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if records.is_empty() {
        w.write_record(RECORD_COLUMNS)?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub const RECORD_COLUMNS: [&str; 10] = [
    "experiment",
    "constraint_value",
    "run_index",
    "seed",
    "converged",
    "final_J",
    "iterations",
    "final_fluence",
    "termination_reason",
    "wall_time_seconds",
];

pub const AGGREGATE_COLUMNS: [&str; 5] = [
    "constraint_value",
    "fraction_success",
    "mean_final_J",
    "mean_opt_fluence",
    "n_runs",
];

pub fn read_records_csv<R: std::io::Read>(reader: R) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != RECORD_COLUMNS {
        return Err(Error::InvalidParameter(format!("unexpected records header {header:?}")));
    }
    r.deserialize().map(|row| Ok(row?)).collect()
}

pub fn write_aggregate_csv<W: Write>(rows: &[AggregateRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if rows.is_empty() {
        w.write_record(AGGREGATE_COLUMNS)?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_aggregate_csv<R: std::io::Read>(reader: R) -> Result<Vec<AggregateRow>> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize().map(|row| Ok(row?)).collect()
}

pub fn write_spec_json<W: Write>(spec: &SweepSpec, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    serde_json::to_writer_pretty(&mut w, spec)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_spec_json<R: std::io::Read>(reader: R) -> Result<SweepSpec> {
    Ok(serde_json::from_reader(reader)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Desk,
    Paper,
}

impl std::str::FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            other => Err(Error::InvalidParameter(format!("unknown scale {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::preset;

    fn small_spec() -> SweepSpec {
        SweepSpec {
            name: "small".into(),
            experiment: ExperimentKind::DurationSweep,
            problem: ProblemTemplate {
                system: SystemTemplate::Rotor(RotorParams {
                    levels: 3,
                    lambda: 1.0,
                    decay: 0.9,
                    diagonal_dipole: 0.0,
                }),
                objective: ObjectiveTemplate::StateTransition { from: 0, to: 2 },
                direction: None,
                penalty_weight: 0.0,
                duration: 5.0,
                intervals: 32,
                parameterization: ParameterizationTemplate::FieldSamples { components: 6 },
                initial_fluence: 2.0,
                zeta_fraction: 0.1,
            },
            constraint_grid: vec![3.0, 5.0, 8.0],
            runs_per_point: 5,
            base_seed: 11,
            optimizer: OptimizerConfig::adaptive(1e-6).with_max_iterations(40),
            workers: 1,
        }
    }

    fn record(value: f64, run_index: usize, converged: bool, final_j: f64, final_fluence: f64) -> RunRecord {
        RunRecord {
            experiment: "t".into(),
            constraint_value: value,
            run_index,
            seed: run_seed(1, 0, run_index),
            converged,
            final_j,
            iterations: 3,
            final_fluence,
            termination_reason: if converged {
                TerminationReason::Converged
            } else {
                TerminationReason::MaxIterations
            },
            wall_time_seconds: 0.5,
        }
    }

    #[test]
    fn one_record_per_grid_point_and_run() {
        let records = run_sweep(&small_spec()).unwrap();
        assert_eq!(records.len(), 15);
        for (i, r) in records.iter().enumerate() {
            assert_eq!(r.constraint_value, [3.0, 5.0, 8.0][i / 5]);
            assert_eq!(r.run_index, i % 5);
            assert_eq!(r.seed, run_seed(11, i / 5, i % 5));
            assert!(r.iterations >= 1);
        }
    }

    #[test]
    fn repeated_sweeps_agree_apart_from_timing() {
        let a = run_sweep(&small_spec()).unwrap();
        let b = run_sweep(&small_spec()).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.same_outcome(y)));
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let mut spec = small_spec();
        let one = run_sweep(&spec).unwrap();
        spec.workers = 8;
        let eight = run_sweep(&spec).unwrap();
        assert!(one.iter().zip(&eight).all(|(x, y)| x.same_outcome(y)));
        assert_eq!(aggregate(&one).unwrap(), aggregate(&eight).unwrap());
    }

    #[test]
    fn invalid_specs_fail_before_running() {
        let mut spec = small_spec();
        spec.constraint_grid = vec![];
        assert!(run_sweep(&spec).is_err());
        let mut spec = small_spec();
        spec.constraint_grid = vec![3.0, 8.0, 5.0];
        assert!(run_sweep(&spec).is_err());
        let mut spec = small_spec();
        spec.constraint_grid = vec![3.0, 3.0];
        assert!(spec.validate().is_err());
        let mut spec = small_spec();
        spec.runs_per_point = 0;
        assert!(spec.validate().is_err());
        let mut spec = small_spec();
        spec.experiment = ExperimentKind::VariableCountSweep;
        assert!(spec.validate().is_err());
        let mut spec = small_spec();
        spec.experiment = ExperimentKind::ToleranceSweep;
        spec.optimizer = OptimizerConfig::fixed(Integrator::Euler, 0.1);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn failing_runs_are_recorded() {
        let mut spec = small_spec();
        spec.experiment = ExperimentKind::Custom;
        spec.constraint_grid = vec![0.0];
        spec.runs_per_point = 2;
        spec.optimizer.gamma = Some(1e300);
        let records = run_sweep(&spec).unwrap();
        assert_eq!(records.len(), 2);
        assert!(records.iter().all(|r| !r.converged));
    }

    #[test]
    fn grid_points_map_onto_the_template() {
        let spec = preset("dt", Scale::Desk).unwrap();
        let (p, _) = spec.point(50.0 / 80.0).unwrap();
        assert_eq!(p.intervals, 80);
        let spec = preset("variable-count", Scale::Desk).unwrap();
        let (p, _) = spec.point(5.0).unwrap();
        assert!(matches!(p.parameterization, ParameterizationTemplate::SpectralPhases { components: 5, .. }));
        assert!(spec.point(4.5).is_err());
        let spec = preset("step-size-rk4", Scale::Desk).unwrap();
        assert_eq!(spec.point(0.3).unwrap().1.step_size, Some(0.3));
        let spec = preset("tolerance", Scale::Desk).unwrap();
        assert_eq!(spec.point(0.01).unwrap().1.tolerance, Some(0.01));
        let spec = preset("fluence-samples", Scale::Desk).unwrap();
        assert_eq!(spec.point(0.01).unwrap().0.initial_fluence, 0.01);
        let spec = preset("duration-w2", Scale::Desk).unwrap();
        assert_eq!(spec.point(2.8).unwrap().0.duration, 2.8);
    }

    #[test]
    fn aggregate_examples() {
        let rows = aggregate(&[record(1.0, 0, true, 0.2, 3.0), record(1.0, 1, true, 0.4, 5.0)]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].fraction_success, 1.0);
        assert!((rows[0].mean_final_j - 0.3).abs() < 1e-15);
        assert_eq!(rows[0].mean_opt_fluence, Some(4.0));
        assert_eq!(rows[0].n_runs, 2);

        let rows = aggregate(&[record(2.0, 0, false, 0.1, 3.0), record(2.0, 1, false, 0.3, 5.0)]).unwrap();
        assert_eq!(rows[0].fraction_success, 0.0);
        assert_eq!(rows[0].mean_opt_fluence, None);

        let rows = aggregate(&[record(2.0, 0, true, 1.0, 3.0), record(2.0, 1, false, 0.5, 5.0)]).unwrap();
        assert_eq!(rows[0].fraction_success, 0.5);
        assert_eq!(rows[0].mean_opt_fluence, Some(3.0));

        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn aggregate_groups_and_orders_by_value() {
        let rows = aggregate(&[
            record(3.0, 0, true, 1.0, 1.0),
            record(1.0, 0, false, 0.0, 1.0),
            record(3.0, 1, false, 0.5, 1.0),
        ])
        .unwrap();
        assert_eq!(rows.iter().map(|r| r.constraint_value).collect::<Vec<_>>(), [1.0, 3.0]);
        assert_eq!(rows[1].n_runs, 2);
    }

    #[test]
    fn records_csv_round_trip() {
        let mut records = run_sweep(&small_spec()).unwrap();
        records[0].final_j = f64::NAN;
        records[0].termination_reason = TerminationReason::StepFailure;
        let mut buf = Vec::new();
        write_records_csv(&records, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), RECORD_COLUMNS.join(","));
        for line in text.lines().skip(1) {
            assert!(matches!(line.split(',').nth(4), Some("0" | "1")), "{line}");
        }
        let back = read_records_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), records.len());
        for (a, b) in records.iter().zip(&back) {
            assert!(a.same_outcome(b));
            assert_eq!(a.wall_time_seconds, b.wall_time_seconds);
        }
        assert!(read_records_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn aggregate_csv_round_trip() {
        let rows = aggregate(&[
            record(0.1, 0, true, 0.999, 12.5),
            record(0.2, 0, false, 0.3, 1.0),
        ])
        .unwrap();
        let mut buf = Vec::new();
        write_aggregate_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), AGGREGATE_COLUMNS.join(","));
        assert_eq!(read_aggregate_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn spec_json_round_trip() {
        for spec in crate::presets::preset_experiments(Scale::Paper) {
            let mut buf = Vec::new();
            write_spec_json(&spec, &mut buf).unwrap();
            assert_eq!(read_spec_json(buf.as_slice()).unwrap(), spec);
        }
    }

    #[test]
    fn sweep_to_dir_writes_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = small_spec();
        spec.constraint_grid = vec![5.0];
        spec.runs_per_point = 3;
        let records = run_sweep_to_dir(&spec, dir.path()).unwrap();
        let on_disk = read_records_csv(File::open(dir.path().join("records.csv")).unwrap()).unwrap();
        assert_eq!(on_disk.len(), 3);
        for r in &records {
            assert!(on_disk.iter().any(|d| d.same_outcome(r)));
        }
        let rows = read_aggregate_csv(File::open(dir.path().join("aggregate.csv")).unwrap()).unwrap();
        assert_eq!(rows, aggregate(&records).unwrap());
        assert_eq!(read_spec_json(File::open(dir.path().join("spec.json")).unwrap()).unwrap(), spec);
    }

    #[test]
    fn scale_parses() {
        assert_eq!("desk".parse::<Scale>().unwrap(), Scale::Desk);
        assert_eq!("paper".parse::<Scale>().unwrap(), Scale::Paper);
        assert!("huge".parse::<Scale>().is_err());
    }
}
