//! External-format tests: CSV exports, serialized value functions, shipped
//! scenario documents, and byte-level determinism of reruns.

use std::path::PathBuf;

use fshedge::filter::{self, SimplexVector};
use fshedge::mmm;
use fshedge::model::{Measure, ModelSpec};
use fshedge::scenarios;
use fshedge::simulate;
use fshedge::valuefn;

fn repo_scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

#[test]
fn shipped_scenarios_match_builtins() {
    for name in scenarios::ALL {
        let path = repo_scenarios_dir().join(format!("{name}.json"));
        let text = std::fs::read_to_string(&path)
            .unwrap_or_else(|e| panic!("missing scenario file {}: {e}", path.display()));
        let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(doc["schema"], "scenario/1");
        let model: ModelSpec = serde_json::from_value(doc["model"].clone()).unwrap();
        model.basic_validate().unwrap();
        let builtin = scenarios::by_name(name).unwrap();
        assert_eq!(
            model.to_json().unwrap(),
            builtin.to_json().unwrap(),
            "scenario file {name} diverged from the built-in"
        );
    }
}

#[test]
fn path_csv_is_deterministic_and_rfc4180() {
    let spec = scenarios::two_regime_small();
    let path = simulate::simulate_path(&spec, 32, Measure::Physical, 99).unwrap();
    let density = mmm::doleans_density(&spec, &path).unwrap();
    let a = path.to_csv(&spec, Some(&density.values)).unwrap();
    let b = path.to_csv(&spec, Some(&density.values)).unwrap();
    assert_eq!(a, b);
    assert!(a.starts_with("t,X,S,jump,atom,z,L\r\n"), "header: {}", a.lines().next().unwrap());
    assert_eq!(a.lines().count(), 33 + 1); // header + grid points
    // every jump row carries the recorded size
    for e in path.events.iter().filter(|e| e.size != 0.0) {
        assert!(a.contains(&format!("{}", e.size)));
    }
}

#[test]
fn filter_csv_has_grid_and_innovations() {
    let spec = scenarios::two_regime_small();
    let path = simulate::simulate_path(&spec, 16, Measure::Physical, 5).unwrap();
    let prior = SimplexVector::delta(spec.x0, spec.dim());
    let traj = filter::filter_path(&spec, &path.observables(), Measure::Physical, &prior).unwrap();
    let csv = traj.to_csv(&path.times).unwrap();
    assert!(csv.starts_with("t,p_1,p_2,dI\r\n"));
    assert_eq!(csv.lines().count(), 18);
}

#[test]
fn gapprox_serialization_roundtrips_both_representations() {
    let spec = scenarios::two_regime_small();
    let lattice = valuefn::solve_g_lattice(&spec, 3, 2).unwrap();
    let text = lattice.to_json().unwrap();
    assert!(text.contains("\"gapprox/1\""));
    let back = valuefn::GApprox::from_json(&text).unwrap();
    assert_eq!(back.n_steps(), 3);

    let prior = SimplexVector::delta(spec.x0, spec.dim());
    let ens = simulate::simulate_ensemble(&spec, 4, Measure::Minimal, 500, 11).unwrap();
    let fps: Vec<_> = ens
        .paths
        .iter()
        .map(|p| filter::filter_path(&spec, &p.observables(), Measure::Physical, &prior).unwrap())
        .collect();
    let reg = valuefn::fit_g_regression(&spec, &ens, &fps, 2).unwrap();
    let text = reg.to_json().unwrap();
    let back = valuefn::GApprox::from_json(&text).unwrap();
    let a = reg.value(&spec, 1, 0, 1.05, prior.as_slice()).unwrap();
    let b = back.value(&spec, 1, 0, 1.05, prior.as_slice()).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
}

#[test]
fn model_json_rejects_structural_errors() {
    let mut spec = scenarios::two_regime_small();
    spec.coeffs.regime_jump_dest[0][0] = 7; // out of range
    let text = spec.to_json().unwrap();
    assert!(ModelSpec::from_json(&text).is_err());
}

#[test]
fn verify_report_serialization_is_stable() {
    let run1 = fshedge::verify::run_suite(123, Some(&[9])).unwrap();
    let run2 = fshedge::verify::run_suite(123, Some(&[9])).unwrap();
    assert_eq!(
        run1.report.to_json().unwrap(),
        run2.report.to_json().unwrap()
    );
    assert_eq!(run1.report.schema, "verify/1");
}
