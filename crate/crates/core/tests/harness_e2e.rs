use std::path::Path;
use std::time::Instant;

use miniuuv::exec::Execution;
use miniuuv::harness::{builtin, evaluate_run_dir, run_batch, run_scenario, write_artifacts, RunArtifacts, Scenario};

fn run(name: &str) -> RunArtifacts {
    let mut s = builtin::builtin(name).unwrap();
    s.resolve().unwrap();
    run_scenario(s).unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn same_seed_gives_identical_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["circle", "pump_test"] {
        let (a, b) = (tmp.path().join(format!("{name}_a")), tmp.path().join(format!("{name}_b")));
        write_artifacts(&run(name), &a).unwrap();
        write_artifacts(&run(name), &b).unwrap();
        let (fa, fb) = (files(&a), files(&b));
        assert!(fa.len() >= 10);
        assert_eq!(fa, fb, "{name} artifacts differ");
    }
}

#[test]
fn batch_execution_modes_agree() {
    let scenarios: Vec<Scenario> = builtin::NAMES
        .iter()
        .map(|n| {
            let mut s = builtin::builtin(n).unwrap();
            s.resolve().unwrap();
            s
        })
        .collect();
    let seq = run_batch(&scenarios, Execution::Sequential);
    let par = run_batch(&scenarios, Execution::default());
    for (a, b) in seq.into_iter().zip(par) {
        assert_eq!(a.unwrap(), b.unwrap());
    }
}

#[test]
fn different_seeds_differ() {
    let mut s = builtin::builtin("line").unwrap();
    s.resolve().unwrap();
    let a = run_scenario(s.clone()).unwrap();
    s.seed = 2;
    let b = run_scenario(s).unwrap();
    assert_ne!(a.detections, b.detections);
}

#[test]
fn metrics_recomputed_from_run_dir() {
    let tmp = tempfile::tempdir().unwrap();
    for name in builtin::NAMES {
        let r = run(name);
        let dir = tmp.path().join(name);
        write_artifacts(&r, &dir).unwrap();
        let again = evaluate_run_dir(&dir).unwrap();
        assert_eq!(again.keys().collect::<Vec<_>>(), r.metrics.keys().collect::<Vec<_>>());
        for (k, v) in &r.metrics {
            let w = again[k];
            assert!((v - w).abs() <= 1e-9 * v.abs().max(1.0), "{name}.{k}: {v} vs {w}");
        }
    }
}

#[test]
fn commands_beyond_cutoff_never_apply() {
    let mut s = builtin::builtin("pump_test").unwrap();
    s.set("channel.d0", "0.2").unwrap();
    s.set("channel.d1", "0.5").unwrap();
    s.resolve().unwrap();
    let r = run_scenario(s).unwrap();
    assert!(r.metrics["commands_sent_beyond_d1"] > 0.0);
    assert_eq!(r.metrics["commands_applied_beyond_d1"], 0.0);
    for c in &r.commands {
        if c.depth_at_send >= 0.5 {
            assert!(!c.delivered && c.applied_time.is_none());
        }
    }
}

#[test]
fn noiseless_line_tracks_surge() {
    let mut s = builtin::builtin("line").unwrap().noiseless();
    s.resolve().unwrap();
    let r = run_scenario(s).unwrap();
    assert!(r.metrics["rmse_u_rel"] < 0.02, "{}", r.metrics["rmse_u_rel"]);
    assert!(r.metrics["rmse_xy"] < 0.01, "{}", r.metrics["rmse_xy"]);
    assert_eq!(r.metrics["detection_coverage"], 1.0);
}

#[test]
fn scenario_text_round_trips() {
    for name in builtin::NAMES {
        let mut s = builtin::builtin(name).unwrap();
        s.resolve().unwrap();
        let mut back = Scenario::from_text(&s.to_text(), None).unwrap();
        back.resolve().unwrap();
        assert_eq!(back, s, "{name}");
    }
}

#[test]
fn scenario_file_with_param_file() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("boat.params"), "# heavier hull\nmass = 3.1\ndrag_surge = 5\n").unwrap();
    let path = tmp.path().join("s.txt");
    std::fs::write(
        &path,
        "name = short\nduration = 3\nvehicle_params = boat.params\ncamera.tilt_x_deg = 2\ncmd = 0.5 motors 40 40\n",
    )
    .unwrap();
    let mut s = Scenario::from_file(&path).unwrap();
    s.resolve().unwrap();
    assert_eq!(s.vehicle.mass, 3.1);
    assert_eq!(s.vehicle.drag_surge, 5.0);
    assert!((s.camera_mount.tilt_x - 2f64.to_radians()).abs() < 1e-15);
    let r = run_scenario(s).unwrap();
    assert_eq!(r.metrics["commands_applied"], 1.0);
    assert!(r.truth.last().unwrap().u > 0.1);
}

#[test]
fn bad_configs_are_rejected() {
    let mut s = Scenario::default();
    assert!(s.set("vehicle.wings", "2").is_err());
    assert!(s.set("duration", "abc").is_err());
    assert!(s.set("camera.height_deg", "3").is_err());
    let mut s = Scenario { duration: -1.0, ..Scenario::default() };
    assert!(s.resolve().is_err());
    assert!(Scenario::from_text("cmd = 1 motors 150 0\n", None).is_err());
}

#[test]
fn builtins_finish_quickly() {
    for name in builtin::NAMES {
        let t0 = Instant::now();
        let r = run(name);
        let secs = t0.elapsed().as_secs_f64();
        assert!(secs < 10.0, "{name} took {secs} s");
        assert!(!r.segments.is_empty(), "{name} produced no track");
    }
}
