mod common;

use common::{check_hand_simulation, golden_args, golden_dir, write_golden_inputs};
use lexcascade::report::{audit, RunReport};

const REPORT: &str = "expected_report.json";

#[test]
#[ignore = "rewrites the committed fixture"]
fn regenerate_golden_fixture() {
    let dir = golden_dir();
    write_golden_inputs(&dir);
    let out = dir.join(REPORT);
    assert_eq!(lexcascade::cli::run(golden_args(&dir, &out, 1)), 0);
    check_hand_simulation(&RunReport::load(&out).unwrap()).unwrap();
}

#[test]
fn committed_report_matches_hand_simulation() {
    let text = std::fs::read_to_string(golden_dir().join(REPORT)).unwrap();
    let report = audit(&text).unwrap();
    check_hand_simulation(&report).unwrap();
}

#[test]
fn golden_run_is_byte_identical_for_any_worker_count() {
    let dir = golden_dir();
    let expected = std::fs::read(dir.join(REPORT)).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    for workers in [1, 2, 3, 8] {
        let out = tmp.path().join(format!("r{workers}.json"));
        assert_eq!(lexcascade::cli::run(golden_args(&dir, &out, workers)), 0);
        assert_eq!(
            std::fs::read(&out).unwrap(),
            expected,
            "workers = {workers}"
        );
    }
}
