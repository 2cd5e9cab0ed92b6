//! The checked-in target fixture must match what the crate computes.
//! Regenerate with `UPDATE_FIXTURES=1 cargo test --test fixtures`.

use std::path::PathBuf;

use ctrl_landscape::numerics::unitarity_defect;
use ctrl_landscape::system::{matrix_from_pairs, preset_targets_json};

fn fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/preset_targets.json")
}

fn pairs(v: &serde_json::Value) -> Vec<Vec<[f64; 2]>> {
    serde_json::from_value(v.clone()).unwrap()
}

#[test]
fn preset_target_fixture_is_current() {
    let computed = preset_targets_json();
    if std::env::var_os("UPDATE_FIXTURES").is_some() {
        std::fs::write(fixture_path(), serde_json::to_string_pretty(&computed).unwrap() + "\n").unwrap();
    }
    let stored: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fixture_path()).unwrap()).unwrap();
    for name in ["W1", "W2"] {
        for form in ["raw", "projected"] {
            let a = pairs(&stored[name][form]);
            let b = pairs(&computed[name][form]);
            assert_eq!(a.len(), 5);
            for (ra, rb) in a.iter().zip(&b) {
                for (x, y) in ra.iter().zip(rb) {
                    assert!((x[0] - y[0]).abs() < 1e-15 && (x[1] - y[1]).abs() < 1e-15, "{name} {form}");
                }
            }
        }
        let projected = matrix_from_pairs(&pairs(&stored[name]["projected"])).unwrap();
        assert!(unitarity_defect(&projected) < 1e-12);
        let raw = matrix_from_pairs(&pairs(&stored[name]["raw"])).unwrap();
        assert!(unitarity_defect(&raw) < 1e-2);
    }
    // raw entries keep their three-decimal values
    assert_eq!(pairs(&stored["W2"]["raw"])[0][0], [0.131, 0.215]);
    assert_eq!(pairs(&stored["W2"]["raw"])[4][4], [0.330, 0.080]);
}
