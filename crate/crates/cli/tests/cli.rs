use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn affordance(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_affordance"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn run_preset(name: &str, out: &Path, extra: &[&str]) -> Output {
    let scenario = format!("preset:{name}");
    let mut args = vec!["run", "--scenario", &scenario, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    affordance(&args)
}

#[test]
fn presets_are_listed() {
    let o = affordance(&["presets"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for name in ["fig3a-1", "fig3a-4", "fig4-pickplace", "spatial7-range", "hammer-sim"] {
        assert!(text.contains(name), "{name} missing from\n{text}");
    }
    let one = affordance(&["presets", "fig4-pickplace"]);
    assert!(one.status.success());
    assert!(stdout(&one).contains("name = \"fig4-pickplace\""));
    assert_eq!(affordance(&["presets", "nope"]).status.code(), Some(1));
}

#[test]
fn run_writes_tables_report_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_preset("fig3a-1", dir.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["trajectory.csv", "history.csv", "report.json", "timing.json", "ellipsoid.json", "plot.svg"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }

    let traj = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let mut lines = traj.lines();
    assert_eq!(lines.next(), Some("t,q_0,q_1,q_2,p_x,p_y,u_0,u_1,u_2"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 101);
    assert!(rows.iter().all(|r| r.split(',').count() == 9));
    let last: Vec<f64> = rows[100].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(&last[6..], &[0.0, 0.0, 0.0]);

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["via_consensus_feasible"], true);
    assert!(report["final_position_error_m"].as_f64().unwrap() < 1e-2);
    assert!(!report["history"].as_array().unwrap().is_empty());
    assert!(report.get("elapsed_s").is_none());

    let ellipse: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("ellipsoid.json")).unwrap()).unwrap();
    assert_eq!(ellipse["eigenvalues"].as_array().unwrap().len(), 2);

    let svg = fs::read_to_string(dir.path().join("plot.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert_eq!(svg.matches("<polyline").count(), 3);
    assert!(svg.contains("<ellipse"));
}

#[test]
fn rerun_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run_preset("fig4-pickplace", a.path(), &["--seed", "3"]).status.success());
    assert!(run_preset("fig4-pickplace", b.path(), &["--seed", "3"]).status.success());
    for f in ["trajectory.csv", "history.csv", "report.json", "ellipsoid.json", "plot.svg"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn table_format_skips_plot_and_spatial_has_three_coordinates() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_preset("spatial7-range", dir.path(), &["--format", "table"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(!dir.path().join("plot.svg").exists());
    let traj = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(traj.lines().next().unwrap().contains(",p_x,p_y,p_z,u_0,"));
}

#[test]
fn invalid_scenario_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = stdout(&affordance(&["presets", "fig3a-1"])).replace("t_pick_step = 50", "t_pick_step = 100");
    let path = dir.path().join("bad.toml");
    fs::write(&path, text).unwrap();
    let o = affordance(&["run", "--scenario", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("t_pick_step"), "{}", stderr(&o));

    let typo = stdout(&affordance(&["presets", "fig3a-1"])).replace("dt_s", "dt_seconds");
    fs::write(&path, typo).unwrap();
    let o = affordance(&["run", "--scenario", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("dt_seconds"), "{}", stderr(&o));
}

#[test]
fn compare_tabulates_every_cell_independent_of_threads() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = |out: &Path, threads: &str| {
        affordance(&[
            "compare",
            "--scenario",
            "preset:fig4-pickplace",
            "--modes",
            "none,directional",
            "--seeds",
            "0,1",
            "--max-threads",
            threads,
            "--out",
            out.to_str().unwrap(),
        ])
    };
    let o = args(a.path(), "1");
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(args(b.path(), "2").status.success());
    let table = fs::read_to_string(a.path().join("compare.csv")).unwrap();
    assert_eq!(table, fs::read_to_string(b.path().join("compare.csv")).unwrap());
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "mode,seed,alpha_t,status");
    assert_eq!(rows.len(), 5);
    assert!(rows[1].starts_with("none,0,") && rows[4].starts_with("directional,1,"));
}

#[test]
fn compare_rejects_empty_modes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = affordance(&["compare", "--scenario", "preset:fig4-pickplace", "--modes", "", "--out", out]);
    assert_eq!(o.status.code(), Some(1));
    let o = affordance(&["compare", "--scenario", "preset:fig4-pickplace", "--out", out]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn check_prints_one_line_per_suite() {
    let o = affordance(&["check", "--suite", "lqr", "--suite", "geometry"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines.iter().all(|l| l.starts_with("PASS") && l.contains("max_error=")));
    assert_eq!(affordance(&["check", "--suite", "bogus"]).status.code(), Some(1));
}
