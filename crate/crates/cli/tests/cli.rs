use std::process::{Command, Output};

fn permlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_permlab")).args(args).output().expect("spawn permlab")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const PQ_BASE: &str = r#"{"kind":"pq","p":"exp(x)","q":"exp(-x)","beta":0.5,"interval":[-3,3]}"#;
const CHAIN: &str = r#"{"states":3,"m":[1,1,1],"generator":[[-2,1,0.5],[1,-2,0.5],[0.5,0.5,-1.5]],"mu":[0.3,0.2,0.1]}"#;

#[test]
fn verify_core_passes() {
    let o = permlab(&["verify", "--suite", "core"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains(", 0 failed"));
}

#[test]
fn brownian_potential_value() {
    let o = permlab(&["potential", "eval", "--psi", r#"{"kind":"gaussian_plus","C":0.5}"#, "--beta", "0.5", "--x", "1"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("x,y,kind,value"));
    let value: f64 = lines.next().unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert!((value - (-1.0f64).exp()).abs() < 1e-7, "{}", value);
}

#[test]
fn diffusion_family_eval() {
    let spec = r#"{"p":"exp(x)","q":"exp(-x)","beta":0.5,"interval":[-3,3]}"#;
    let o = permlab(&["potential", "eval", "--family", "pq", "--spec", spec, "--x", "-1,0.5", "--y", "0"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 3);
}

#[test]
fn kernel_analyze_json() {
    let o = permlab(&["kernel", "analyze", "--base", PQ_BASE, "--grid", "0,0.5,16,0.5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let nu = v["nu"].as_f64().unwrap();
    assert!(nu >= 1.0 && nu < 1.01);
    assert_eq!(v["mmatrix_ok"], true);
    assert!((v["det_ratio"].as_f64().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn outputs_are_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str, name: &str| {
        let path = dir.path().join(name);
        let o = permlab(&[
            "--threads", threads, "rebirth", "sim", "--model", CHAIN, "--paths", "4000", "--seed", "11", "--out",
            path.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        std::fs::read(path).unwrap()
    };
    assert_eq!(run("1", "a.csv"), run("4", "b.csv"));

    let cfg = dir.path().join("lil.json");
    std::fs::write(
        &cfg,
        format!(r#"{{"base":{},"d":0,"theta":0.5,"q":0.5,"schedule":[16],"k":1,"n_paths":300,"seed":5}}"#, PQ_BASE),
    )
    .unwrap();
    let lil = |threads: &str| {
        let o = permlab(&["--threads", threads, "lil", "run", "--config", cfg.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        o.stdout
    };
    let a = lil("1");
    assert_eq!(a, lil("3"));
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 4);
}

#[test]
fn check_ek_reports_z() {
    let model = r#"{"states":2,"m":[1,2],"generator":[[-2,1],[0.5,-1]]}"#;
    let o = permlab(&["rebirth", "check-ek", "--model", model, "--y", "0", "--paths", "20000", "--seed", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["z"].as_f64().unwrap().abs() < 5.0);
}

#[test]
fn unknown_keys_exit_with_status_two() {
    let o = permlab(&["rebirth", "sim", "--model", r#"{"states":1,"m":[1],"gen":[[-1]]}"#, "--paths", "1", "--seed", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gen"));

    let o = permlab(&["kernel", "analyze", "--base", r#"{"kind":"pq","p":"exp(x)","q":"exp(-x)","beta":0.5,"interval":[-3,3],"extra":1}"#, "--grid", "0,0.5,16,0.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("extra"));
}

#[test]
fn numeric_errors_exit_with_status_one() {
    // The grid guard rejects t_m above e^{-e}.
    let o = permlab(&["kernel", "analyze", "--base", PQ_BASE, "--grid", "0,0.5,4,0.5"]);
    assert_eq!(o.status.code(), Some(1));
}
