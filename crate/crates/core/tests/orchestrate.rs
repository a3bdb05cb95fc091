use std::path::{Path, PathBuf};

use proptest::prelude::*;

use trafficlens::orchestrate::{
    expand_grid, run_parallel, select_best, write_sweep_outputs, ExternalBackend, Metric, ParameterGrid,
    RowStatus, SweepOutput, SweepResult, SweepRow, ToyBackend,
};
use trafficlens::simkit::{Aggregates, Network};

fn grid(demand: serde_json::Value) -> ParameterGrid {
    serde_json::from_value(serde_json::json!({
        "demand": demand,
        "horizon": [0.0, 600.0],
        "toy": {"horizon_end": 1800.0},
        "axes": {
            "cycle_length": [90.0, 120.0],
            "splits": [{"weights": [1, 3, 1, 2, 1, 3, 1, 2]}, {"weights": [1, 1, 1, 1, 1, 1, 1, 1]}],
            "offset": [0.0, 30.0],
            "seed": [1, 2]
        }
    }))
    .unwrap()
}

fn corridor_grid() -> ParameterGrid {
    grid(serde_json::json!({"counts": {"EB-through": 120, "WB-through": 100, "I2:NB-left": 20}}))
}

#[test]
fn results_do_not_depend_on_worker_count_or_rerun() {
    let network = Network::corridor(2, 300.0, 200.0, 14.0, Some(6));
    let g = corridor_grid();
    let scenarios = expand_grid(&g).unwrap().scenarios;
    assert_eq!(scenarios.len(), 16);
    let backend = ToyBackend { params: g.toy };
    let one = run_parallel(&scenarios, &network, 1, &backend, &SweepOutput::default()).unwrap();
    let three = run_parallel(&scenarios, &network, 3, &backend, &SweepOutput::default()).unwrap();
    let again = run_parallel(&scenarios, &network, 3, &backend, &SweepOutput::default()).unwrap();
    assert_eq!(one, three);
    assert_eq!(three, again);
    assert!(one.rows.iter().all(|r| r.status == RowStatus::Ok));
}

#[test]
fn resume_skips_finished_scenarios() {
    let network = Network::corridor(2, 300.0, 200.0, 14.0, Some(6));
    let g = corridor_grid();
    let expansion = expand_grid(&g).unwrap();
    let backend = ToyBackend { params: g.toy };
    let dir = tempfile::tempdir().unwrap();
    let out = SweepOutput { dir: Some(dir.path().to_path_buf()), resume: true };
    let first = run_parallel(&expansion.scenarios, &network, 2, &backend, &out).unwrap();
    assert_eq!(first.executed, 16);
    write_sweep_outputs(dir.path(), &g, &expansion, &first).unwrap();
    assert!(dir.path().join("manifest.json").is_file());
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 17);
    let second = run_parallel(&expansion.scenarios, &network, 2, &backend, &out).unwrap();
    assert_eq!(second.executed, 0);
    assert_eq!(first.rows, second.rows);
}

fn row(id: &str, value: Option<f64>, ok: bool) -> SweepRow {
    SweepRow {
        scenario_id: id.into(),
        axis_values: Default::default(),
        status: if ok { RowStatus::Ok } else { RowStatus::Failed },
        aggregates: ok.then(|| Aggregates { mean_delay: value, throughput: value.unwrap_or(0.0) as usize, ..Default::default() }),
        error: (!ok).then(|| "failed".into()),
    }
}

proptest! {
    #[test]
    fn select_best_matches_a_scan(cells in prop::collection::vec((0u8..6, prop::option::of(0u8..5), any::<bool>()), 1..30)) {
        let mut rows: Vec<SweepRow> = Vec::new();
        for (i, (id, v, ok)) in cells.iter().enumerate() {
            rows.push(row(&format!("s{id}-{i:02}"), v.map(f64::from), *ok));
        }
        let result = SweepResult { rows: rows.clone(), best: Default::default(), executed: 0 };
        for metric in [Metric::MeanDelay, Metric::Throughput] {
            let mut scan: Option<(f64, &str)> = None;
            for r in &rows {
                let Some(v) = r.aggregates.as_ref().and_then(|a| metric.value(a)) else { continue };
                if r.status != RowStatus::Ok {
                    continue;
                }
                let key = if metric.maximize() { -v } else { v };
                if scan.is_none_or(|(k, id)| key < k || (key == k && r.scenario_id.as_str() < id)) {
                    scan = Some((key, r.scenario_id.as_str()));
                }
            }
            match (select_best(&result, metric), scan) {
                (Ok(best), Some((_, id))) => prop_assert_eq!(best.scenario_id.as_str(), id),
                (Err(_), None) => {}
                (got, want) => prop_assert!(false, "{:?} vs {:?}", got.map(|r| &r.scenario_id), want),
            }
        }
    }
}

fn stub(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("stub.sh");
    std::fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
    path
}

fn single_scenario_grid() -> (ParameterGrid, Network) {
    let mut g = grid(serde_json::json!({"counts": {"NB-through": 2}}));
    g.axes.cycle_length.truncate(1);
    g.axes.splits.truncate(1);
    g.axes.offset.truncate(1);
    g.axes.seed.truncate(1);
    (g, Network::single_intersection("I1", 250.0, 13.0, None))
}

#[test]
fn external_backend_reads_the_trip_file_it_is_given() {
    let tmp = tempfile::tempdir().unwrap();
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tripinfo.xml");
    let script = stub(tmp.path(), &format!("test -s \"$1\" || exit 9\ncp '{}' \"$2\"", fixture.display()));
    let backend = ExternalBackend { command_template: format!("sh {} ${{config}} ${{output}}", script.display()), timeout_s: 30.0 };
    let (g, network) = single_scenario_grid();
    let scenarios = expand_grid(&g).unwrap().scenarios;
    let out = SweepOutput { dir: Some(tmp.path().join("sweep")), resume: false };
    let result = run_parallel(&scenarios, &network, 1, &backend, &out).unwrap();
    let a = result.rows[0].aggregates.as_ref().expect("scenario succeeded");
    assert_eq!((a.injected, a.throughput, a.incomplete), (2, 2, 0));
    assert_eq!(a.mean_travel_time, Some(48.75));
}

#[test]
fn failing_external_run_becomes_a_failed_row() {
    let tmp = tempfile::tempdir().unwrap();
    let script = stub(tmp.path(), "echo simulator exploded >&2\nexit 1");
    let backend = ExternalBackend { command_template: format!("sh {} ${{config}} ${{output}}", script.display()), timeout_s: 30.0 };
    let (g, network) = single_scenario_grid();
    let scenarios = expand_grid(&g).unwrap().scenarios;
    let dir = tmp.path().join("sweep");
    let out = SweepOutput { dir: Some(dir.clone()), resume: false };
    let result = run_parallel(&scenarios, &network, 1, &backend, &out).unwrap();
    let r = &result.rows[0];
    assert_eq!(r.status, RowStatus::Failed);
    assert!(r.error.as_deref().unwrap().contains("simulator exploded"));
    assert!(dir.join("results").join(&r.scenario_id).join("error.txt").is_file());
    assert!(select_best(&result, Metric::MeanDelay).is_err());
}

#[test]
fn missing_program_is_reported_before_running() {
    let backend = ExternalBackend { command_template: "no-such-simulator-xyz ${config} ${output}".into(), timeout_s: 5.0 };
    let (g, network) = single_scenario_grid();
    let scenarios = expand_grid(&g).unwrap().scenarios;
    assert!(run_parallel(&scenarios, &network, 1, &backend, &SweepOutput::default()).is_err());
}
