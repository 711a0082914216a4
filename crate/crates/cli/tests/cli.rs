use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn preset(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("presets").join(name)
}

fn qlc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qlc"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("qlc runs")
}

fn stdout_f64(o: &Output) -> f64 {
    String::from_utf8_lossy(&o.stdout).trim().parse().expect("numeric stdout")
}

#[test]
fn trivial_controller_cost_writes_result() {
    let dir = tempfile::tempdir().unwrap();
    let p = preset("cavity_plant.json");
    let o = qlc(dir.path(), &["cost", "--netlist", p.to_str().unwrap(), "--kn", "10", "--controller", "trivial"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!((stdout_f64(&o) - 2.0).abs() < 1e-12);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("result.json")).unwrap()).unwrap();
    assert!((v["cost"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert!((v["no_control_cost"].as_f64().unwrap() - 10.0 / 3.0).abs() < 1e-12);
}

#[test]
fn cavity_preset_no_control_is_one_third() {
    let dir = tempfile::tempdir().unwrap();
    let p = preset("cavity_plant.json");
    let o = qlc(dir.path(), &["cost", "--netlist", p.to_str().unwrap(), "--controller", "none"]);
    assert_eq!(o.status.code(), Some(0));
    assert!((stdout_f64(&o) - 1.0 / 3.0).abs() < 1e-14);
}

#[test]
fn invalid_netlist_reports_pointer() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(
        &bad,
        r#"{"schema":"qlc/1","components":[{"id":"a","type":"phase","params":{"phi":"x"}}],"noise":[]}"#,
    )
    .unwrap();
    let o = qlc(dir.path(), &["validate", "--netlist", "bad.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/components/0/params/phi"));

    let dup = dir.path().join("dup.json");
    fs::write(
        &dup,
        r#"{"schema":"qlc/1","components":[{"id":"a","type":"phase","params":{"phi":0}},
            {"id":"a","type":"phase","params":{"phi":1}}],"noise":[]}"#,
    )
    .unwrap();
    let o = qlc(dir.path(), &["validate", "--netlist", "dup.json"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("/components/1/id") && err.contains("duplicate"), "{err}");
}

#[test]
fn unstable_loop_is_solver_failure() {
    let dir = tempfile::tempdir().unwrap();
    let p = preset("cavity_plant.json");
    // OPO pumped far above threshold
    let o = qlc(
        dir.path(),
        &["cost", "--netlist", p.to_str().unwrap(), "--controller", "opo", "--theta", "0.1,0.1,0,50,0,0,0"],
    );
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn wrong_theta_length_is_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = preset("cavity_plant.json");
    let o = qlc(dir.path(), &["cost", "--netlist", p.to_str().unwrap(), "--controller", "cavity", "--theta", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_csv_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let p = preset("optomech.json");
    let run = |out: &str| {
        let o = qlc(
            dir.path(),
            &[
                "sweep", "--netlist", p.to_str().unwrap(), "--controller", "cavity", "--kn-log", "0:2:3",
                "--restarts", "4", "--seed", "7", "--out", out,
            ],
        );
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(dir.path().join(out)).unwrap()
    };
    let a = run("a.csv");
    let b = run("b.csv");
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("kn,cost,ratio,kappa1,kappa2,delta,K"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 3);
    for r in &rows {
        // ratio is the bath occupation over the controlled cost
        assert!((r[2] - r[0] / r[1]).abs() < 1e-9 * r[2]);
        assert!(r[2] > 1.0);
    }
}

#[test]
fn eliminate_beamsplitter_cascade() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bs.json");
    fs::write(
        &path,
        r#"{"schema":"qlc/1",
            "components":[{"id":"b1","type":"beamsplitter","params":{"alpha":0.6}},
                          {"id":"b2","type":"beamsplitter","params":{"alpha":0.8}}],
            "composition":{"series":[{"ref":"b1"},{"ref":"b2"}]},
            "noise":[{"port":"b1.0","kind":"vacuum"},{"port":"b1.1","kind":"vacuum"}]}"#,
    )
    .unwrap();
    let o = qlc(dir.path(), &["eliminate", "--netlist", "bs.json"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["symplectic_residual"].as_f64().unwrap() < 1e-12);
    // S2 S1 has top-left entry 0.8*0.6 - 0.6*0.8 = 0
    assert!(v["d"][0][0].as_f64().unwrap().abs() < 1e-12);
    assert_eq!(v["inputs"][0], "b1.0");
    assert_eq!(v["outputs"][0], "b2.0");
}

#[test]
fn spectrum_of_trivial_loop() {
    let dir = tempfile::tempdir().unwrap();
    let p = preset("cavity_plant.json");
    let o = qlc(
        dir.path(),
        &[
            "spectrum", "--netlist", p.to_str().unwrap(), "--kn", "10", "--controller", "trivial", "--theta", "0",
            "--omega", "-1:1:21",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("omega,flux,s_xx,s_pp"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 21);
    // a detuned cavity driven through the thermal mirror: the symmetrized
    // flux peaks at both sidebands ±Δ
    let peak = rows.iter().max_by(|a, b| a[1].total_cmp(&b[1])).unwrap();
    assert!((peak[0].abs() - 0.1).abs() < 1e-12 && peak[1] > 0.0);
    for (a, b) in rows.iter().zip(rows.iter().rev()) {
        assert!((a[1] - b[1]).abs() < 1e-12);
    }
}

#[test]
fn bad_range_and_missing_controller() {
    let dir = tempfile::tempdir().unwrap();
    let p = preset("cavity_plant.json");
    let o = qlc(dir.path(), &["sweep", "--netlist", p.to_str().unwrap(), "--controller", "cavity", "--kn-log", "1:2"]);
    assert_eq!(o.status.code(), Some(2));
    let o = qlc(dir.path(), &["optimize", "--netlist", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
