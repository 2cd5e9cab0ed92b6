use std::collections::HashSet;

use proptest::prelude::*;

use ctrl_landscape::harness::{aggregate, read_records_csv, write_records_csv, RunRecord, Scale};
use ctrl_landscape::optimizer::TerminationReason;
use ctrl_landscape::presets::{preset_experiments, PRESET_NAMES};
use ctrl_landscape::rng::run_seed;

fn record(value_index: usize, run_index: usize, converged: bool, final_j: f64, fluence: f64) -> RunRecord {
    RunRecord {
        experiment: "prop".into(),
        constraint_value: [0.5, 1.0, 2.0, 4.0][value_index],
        run_index,
        seed: run_seed(3, value_index, run_index),
        converged,
        final_j,
        iterations: run_index + 1,
        final_fluence: fluence,
        termination_reason: if converged { TerminationReason::Converged } else { TerminationReason::MaxS },
        wall_time_seconds: 0.25,
    }
}

fn records() -> impl Strategy<Value = Vec<RunRecord>> {
    prop::collection::vec((0usize..4, any::<bool>(), 0.0f64..1.0, 0.0f64..100.0), 1..60).prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (g, c, j, f))| record(g, i, c, j, f))
            .collect()
    })
}

proptest! {
    #[test]
    fn aggregation_ignores_record_order(recs in records(), key in any::<u64>()) {
        let mut shuffled = recs.clone();
        shuffled.sort_by_key(|r| run_seed(key, r.run_index, 0));
        prop_assert_eq!(aggregate(&recs).unwrap(), aggregate(&shuffled).unwrap());
    }

    #[test]
    fn aggregate_rows_are_consistent(recs in records()) {
        let rows = aggregate(&recs).unwrap();
        prop_assert_eq!(rows.iter().map(|r| r.n_runs).sum::<usize>(), recs.len());
        for row in &rows {
            prop_assert!((0.0..=1.0).contains(&row.fraction_success));
            prop_assert_eq!(row.mean_opt_fluence.is_none(), row.fraction_success == 0.0);
        }
    }

    #[test]
    fn records_survive_csv(recs in records()) {
        let mut buf = Vec::new();
        write_records_csv(&recs, &mut buf).unwrap();
        prop_assert_eq!(read_records_csv(buf.as_slice()).unwrap(), recs);
    }
}

#[test]
fn seeds_are_distinct_within_every_preset() {
    for spec in preset_experiments(Scale::Paper) {
        let mut seen = HashSet::new();
        for g in 0..spec.constraint_grid.len() {
            for r in 0..spec.runs_per_point {
                assert!(seen.insert(run_seed(spec.base_seed, g, r)), "{}", spec.name);
            }
        }
    }
}

#[test]
fn presets_cover_both_scales() {
    for scale in [Scale::Desk, Scale::Paper] {
        let specs = preset_experiments(scale);
        assert_eq!(specs.len(), PRESET_NAMES.len());
        for spec in &specs {
            spec.validate().unwrap();
            if scale == Scale::Desk {
                assert!((10..=50).contains(&spec.runs_per_point), "{}", spec.name);
            }
        }
    }
}

#[test]
fn documented_examples_parse_and_validate() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/examples");
    for name in ["transition.json", "gate.json"] {
        let text = std::fs::read_to_string(dir.join(name)).unwrap();
        let spec: ctrl_landscape::harness::RunSpec = serde_json::from_str(&text).unwrap();
        spec.optimizer.validate().unwrap();
        spec.problem.instantiate(spec.seed).unwrap();
    }
    let sweep = ctrl_landscape::harness::read_spec_json(
        std::fs::File::open(dir.join("explicit-sweep.json")).unwrap(),
    )
    .unwrap();
    sweep.validate().unwrap();
}
