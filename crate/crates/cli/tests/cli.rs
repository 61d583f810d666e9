use std::fs;
use std::process::{Command, Output};

fn relaxlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relaxlab"))
        .args(args)
        .env_remove("RELAXLAB_THREADS")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(k).unwrap().parse().unwrap()).collect()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(relaxlab(&["--help"]).status.code(), Some(0));
    assert_eq!(relaxlab(&["--no-such-flag"]).status.code(), Some(1));
}

#[test]
fn config_errors_name_the_precondition() {
    let o = relaxlab(&["--time-grid", "0:1:2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("length is required"));

    let o = relaxlab(&["--length", "10", "--subsystem", "12"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("site 12 outside"));

    let o = relaxlab(&["--length", "10", "--state", "fock:1,1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("ring has 10 sites"));

    let o = relaxlab(&["--length", "10", "--time-grid", "5:1:3"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn dynamics_to_stdout_shows_relaxation() {
    let o = relaxlab(&["--length", "500", "--time-grid", "2:40:2", "--mode", "dynamics"]);
    // The default grid reaches |beta| = 2, where the bound's preconditions fail, so the
    // sweep exits 2 with the measured columns still written.
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let csv = String::from_utf8(o.stdout).unwrap();
    let d = column(&csv, "sup_dist");
    assert_eq!(d.len(), 2);
    assert!(d[1] < d[0]);
    assert!(column(&csv, "F_S").iter().all(|v| v.is_nan()));
}

#[test]
fn outputs_are_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let o = relaxlab(&[
            "--length",
            "300",
            "--time-grid",
            "1:30:6",
            "--mode",
            "bounds",
            "--beta-max",
            "1",
            "--seed",
            "5",
            "--threads",
            threads,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let csv = fs::read(&out).unwrap();
        let json = fs::read(out.with_extension("json")).unwrap();
        (csv, json)
    };
    let (csv_a, json_a) = run("a.csv", "1");
    let (csv_b, json_b) = run("b.csv", "4");
    assert_eq!(csv_a, csv_b);
    // Only the echoed thread count and output path may differ.
    let strip = |bytes: &[u8]| {
        let mut v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
        let cfg = v["config"].as_object_mut().unwrap();
        cfg.remove("threads");
        cfg.remove("out");
        v
    };
    assert_eq!(strip(&json_a), strip(&json_b));

    let text = String::from_utf8(csv_a).unwrap();
    assert!(text.starts_with(
        "t,sup_dist,F_S,F_term_1,F_term_2,F_term_3,F_term_4,F_term_5,trace_dist,t_relax_flag,recurrence_flag\n"
    ));
    let f = column(&text, "F_S");
    let d = column(&text, "sup_dist");
    // t = 1 is outside the regime; every later record carries a bound above the measurement.
    assert!(f[0].is_nan());
    for k in 1..f.len() {
        assert!(d[k] <= f[k]);
    }
    let meta: serde_json::Value = serde_json::from_slice(&json_a).unwrap();
    assert_eq!(meta["config"]["length"], 300);
    assert_eq!(meta["summary"]["bound_violations"], 0);
    assert!(meta["columns"]["F_S"].as_str().unwrap().starts_with("certified"));
    assert!(meta["columns"]["sup_dist"].as_str().unwrap().starts_with("measured"));
    assert!(meta["constants"]["c1"].as_f64().unwrap() > 0.0);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "# sweep\nlength = 40\ntime_grid = 0:3:4\nstate = fock-uniform:2\nmode = dynamics\n",
    )
    .unwrap();
    let o = relaxlab(&["--config", cfg.to_str().unwrap(), "--time-grid", "0:1:2"]);
    // All records sit below |t| = 2, so none admits the bound.
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let csv = String::from_utf8(o.stdout).unwrap();
    assert_eq!(column(&csv, "t"), vec![0.0, 1.0]);

    fs::write(&cfg, "length = 40\nbogus = 1\n").unwrap();
    let o = relaxlab(&["--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("config line 2"));
}

#[test]
fn thread_count_falls_back_to_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_relaxlab"))
        .args(["--length", "20", "--time-grid", "0:1:2"])
        .env("RELAXLAB_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("threads must be at least 1"));
}

#[test]
fn reconstruct_mode_reports_trace_distance() {
    let o = relaxlab(&["--length", "200", "--time-grid", "0:20:2", "--mode", "reconstruct"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let csv = String::from_utf8(o.stdout).unwrap();
    let tr = column(&csv, "trace_dist");
    assert!(tr.iter().all(|v| (0.0..=2.0).contains(v)));
    assert!(tr[1] < tr[0]);
}

#[test]
fn verify_quick_passes() {
    let o = relaxlab(&["--mode", "verify", "--level", "quick"]);
    let text = String::from_utf8_lossy(&o.stdout).into_owned();
    assert_eq!(o.status.code(), Some(0), "{text}{}", stderr(&o));
    assert!(text.lines().count() >= 10);
    assert!(text.lines().all(|l| l.starts_with("PASS ")));
}
