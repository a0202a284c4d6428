use std::fs;

use mplp::model::{
    generate_instance, load_instance, parse_instance, save_instance, validate_instance, Diagnostic,
    GenConfig, InstanceError, TimeWindow,
};

fn sample() -> mplp::ProblemInstance {
    generate_instance(&GenConfig::new(3, 4, 5.0, 21)).unwrap()
}

#[test]
fn save_then_load_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.mplp.json");
    for seed in [1, 2, 3] {
        let inst = generate_instance(&GenConfig::new(5, 5, 5.0, seed)).unwrap();
        save_instance(&inst, &path).unwrap();
        assert_eq!(load_instance(&path).unwrap(), inst);
    }
}

#[test]
fn zero_demand_is_rejected_on_load() {
    let mut inst = sample();
    inst.customers[1].demand = 0;
    let text = serde_json::to_string(&inst).unwrap();
    match parse_instance(&text) {
        Err(InstanceError::Invalid(d)) => {
            assert!(d.contains(&Diagnostic::ZeroDemand { customer: inst.customers[1].id }))
        }
        other => panic!("expected validation error, got {other:?}"),
    }
}

#[test]
fn overlapping_customer_windows_are_rejected_on_load() {
    let mut inst = sample();
    let c = &mut inst.customers[0];
    let mut dup = c.stopovers[0].clone();
    dup.window = TimeWindow::new(dup.window.start + 1.0, dup.window.end + 1.0);
    c.stopovers.push(dup);
    let text = serde_json::to_string(&inst).unwrap();
    match parse_instance(&text) {
        Err(InstanceError::Invalid(d)) => assert!(d
            .iter()
            .any(|d| matches!(d, Diagnostic::OverlappingWindows { .. }))),
        other => panic!("expected validation error, got {other:?}"),
    }
}

#[test]
fn malformed_file_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, "{\n  \"format\": \"mplp-1\",\n  \"customers\": [,]\n}\n").unwrap();
    match load_instance(&path) {
        Err(InstanceError::Parse { path: p, line, .. }) => {
            assert_eq!(p, path);
            assert_eq!(line, 3);
        }
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn foreign_format_tag_is_rejected() {
    let mut inst = sample();
    inst.format = "other-9".into();
    let text = serde_json::to_string(&inst).unwrap();
    assert!(matches!(parse_instance(&text), Err(InstanceError::Format { .. })));
}

#[test]
fn generated_instances_validate_clean() {
    for seed in 1..=20 {
        let inst = generate_instance(&GenConfig::new(4, 6, 5.0, seed)).unwrap();
        assert_eq!(validate_instance(&inst), vec![], "seed {seed}");
    }
}

#[test]
fn saved_bytes_are_stable() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    save_instance(&generate_instance(&GenConfig::new(5, 10, 5.0, 7)).unwrap(), &a).unwrap();
    save_instance(&generate_instance(&GenConfig::new(5, 10, 5.0, 7)).unwrap(), &b).unwrap();
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}
