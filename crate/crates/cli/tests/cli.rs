use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_manifoldmix"))
        .args(args)
        .env_remove("MANIFOLDMIX_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = cli(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(text: &[u8]) -> Value {
    serde_json::from_slice(text).expect("valid JSON")
}

fn c_shape(dir: &TempDir) -> PathBuf {
    let data = path(dir, "c.csv");
    ok(&["cshape", "--n", "200", "--seed", "0", "--out", s(&data)]);
    data
}

#[test]
fn invalid_manifold_is_a_usage_error_and_writes_nothing() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "bench.csv");
    for m in ["sphere:99x", "torus:3", "spd:0"] {
        let r = cli(&["bench", "--manifold", m, "--out", s(&out)]);
        assert_eq!(r.status.code(), Some(2), "{m}: {}", stderr(&r));
    }
    let r = cli(&["bench", "--manifold", "spd:2", "--family", "vmf", "--targets", "2", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(!out.exists());
    assert!(!path(&dir, "bench.targets.csv").exists());
}

#[test]
fn bench_is_reproducible_and_thread_independent() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str, threads: Option<&str>| {
        let out = path(&dir, name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_manifoldmix"));
        cmd.args([
            "bench", "--manifold", "sphere:2", "--family", "vmf", "--targets", "3", "--train", "50", "--test", "30",
            "--seed", "11", "--out", s(&out),
        ]);
        match threads {
            Some(t) => cmd.env("MANIFOLDMIX_THREADS", t),
            None => cmd.env_remove("MANIFOLDMIX_THREADS"),
        };
        let r = cmd.output().unwrap();
        assert!(r.status.success(), "{}", stderr(&r));
        let targets = out.with_file_name(format!("{}.targets.csv", out.file_stem().unwrap().to_str().unwrap()));
        (fs::read(&out).unwrap(), fs::read(targets).unwrap())
    };
    let a = run("a.csv", None);
    let b = run("b.csv", None);
    let c = run("c.csv", Some("1"));
    assert_eq!(a, b);
    assert_eq!(a, c);
    let summary = String::from_utf8(a.0).unwrap();
    assert_eq!(summary.lines().count(), 4);
    assert!(summary.starts_with("manifold,dim,family,method,mean_ll,std_ll,failures\n"));
}

#[test]
fn bench_json_summary() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "summary.json");
    let targets = path(&dir, "per-target.csv");
    ok(&[
        "bench", "--manifold", "spd:2", "--family", "iwd", "--targets", "2", "--train", "40", "--test", "20",
        "--out", s(&out), "--targets-out", s(&targets), "--format", "json",
    ]);
    let v = json(&fs::read(&out).unwrap());
    assert_eq!(v["manifold"], "spd:2");
    assert_eq!(v["methods"].as_array().unwrap().len(), 3);
    assert!(fs::read_to_string(&targets).unwrap().lines().count() > 1);
}

#[test]
fn fit_report_matches_loglik_and_model_reload() {
    let dir = TempDir::new().unwrap();
    let data = c_shape(&dir);
    for method in ["euclidean", "tangent", "riemannian"] {
        let model = path(&dir, &format!("{method}.json"));
        let report = path(&dir, &format!("{method}.report.json"));
        ok(&[
            "fit", "--input", s(&data), "--method", method, "--k", "3", "--model", s(&model), "--report", s(&report),
        ]);
        let rep = json(&fs::read(&report).unwrap());
        assert_eq!(rep["method"], method);
        let train_ll = rep["final_train_ll"].as_f64().unwrap();
        let log = rep["train_log"].as_array().unwrap();
        for w in log.windows(2) {
            assert!(w[1].as_f64().unwrap() >= w[0].as_f64().unwrap() - 1e-8);
        }

        let scored = json(&ok(&["loglik", "--model", s(&model), "--input", s(&data)]).stdout);
        let total = scored["total"].as_f64().unwrap();
        assert!((total - train_ll).abs() < 1e-9 * train_ll.abs().max(1.0), "{method}: {total} vs {train_ll}");
        assert_eq!(scored["n"], 200);

        // A second scoring of the reloaded model is bit-identical.
        let again = json(&ok(&["loglik", "--model", s(&model), "--input", s(&data)]).stdout);
        assert_eq!(again["total"].as_f64().unwrap().to_bits(), total.to_bits());
    }
}

#[test]
fn riemannian_beats_tangent_at_the_frechet_mean_on_the_c_shape() {
    let dir = TempDir::new().unwrap();
    let data = c_shape(&dir);
    let ll = |method: &str| {
        let model = path(&dir, "m.json");
        let rep = json(&ok(&["fit", "--input", s(&data), "--method", method, "--basepoint", "frechet", "--model", s(&model)]).stdout);
        rep["final_train_ll"].as_f64().unwrap()
    };
    let (t, r) = (ll("tangent"), ll("riemannian"));
    assert!(t < r, "tangent {t} vs riemannian {r}");
}

#[test]
fn malformed_input_names_the_line() {
    let dir = TempDir::new().unwrap();
    let data = path(&dir, "bad.csv");
    fs::write(&data, "# manifold=sphere:2\n1,0,0\n0,1,0\n0,1\n").unwrap();
    let r = cli(&["fit", "--input", s(&data), "--method", "euclidean", "--model", s(&path(&dir, "m.json"))]);
    assert_eq!(r.status.code(), Some(2));
    assert!(stderr(&r).contains("line 4"), "{}", stderr(&r));

    fs::write(&data, "# manifold=sphere:2\n1,0,0\n0,abc,0\n").unwrap();
    let r = cli(&["distort", "--input", s(&data)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(stderr(&r).contains("line 3"), "{}", stderr(&r));

    fs::write(&data, "1,0,0\n").unwrap();
    let r = cli(&["distort", "--input", s(&data)]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn tangent_fit_through_the_cut_locus_is_a_runtime_error() {
    let dir = TempDir::new().unwrap();
    let data = path(&dir, "far.csv");
    // -e1 is the antipode of the origin basepoint e1.
    fs::write(&data, "# manifold=sphere:2\n0,0,1\n0,0.6,0.8\n0,1,0\n0.6,0,0.8\n-1,0,0\n").unwrap();
    let r = cli(&[
        "fit", "--input", s(&data), "--method", "tangent", "--basepoint", "origin", "--k", "1", "--model",
        s(&path(&dir, "m.json")),
    ]);
    assert_eq!(r.status.code(), Some(1));
    assert!(stderr(&r).contains("local diffeomorphism"), "{}", stderr(&r));
    assert!(!path(&dir, "m.json").exists());
}

#[test]
fn sampling_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let (a, b, c) = (path(&dir, "a.csv"), path(&dir, "b.csv"), path(&dir, "c.csv"));
    ok(&["sample", "--manifold", "spd:3", "--family", "rgd", "--n", "25", "--seed", "3", "--out", s(&a)]);
    ok(&["sample", "--manifold", "spd:3", "--family", "rgd", "--n", "25", "--seed", "3", "--out", s(&b)]);
    ok(&["sample", "--manifold", "spd:3", "--family", "rgd", "--n", "25", "--seed", "4", "--out", s(&c)]);
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    assert_ne!(text, fs::read_to_string(&c).unwrap());
    assert!(text.starts_with("# manifold=spd:3\n"));
    assert_eq!(text.lines().count(), 26);
}

#[test]
fn grid_output() {
    let dir = TempDir::new().unwrap();
    let data = c_shape(&dir);
    let model = path(&dir, "m.json");
    ok(&["fit", "--input", s(&data), "--method", "riemannian", "--model", s(&model)]);
    let grid = path(&dir, "grid.csv");
    ok(&["grid", "--model", s(&model), "--resolution", "5", "--out", s(&grid)]);
    let text = fs::read_to_string(&grid).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("lat,lon,density,solid_angle"));
    let mut mass = 0.0;
    let mut cells = 0;
    for line in lines {
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(f[2] >= 0.0);
        mass += f[2] * f[3];
        cells += 1;
    }
    assert_eq!(cells, 36 * 72);
    assert!(mass > 0.5 && mass < 1.5, "{mass}");

    let spd_data = path(&dir, "spd.csv");
    ok(&["sample", "--manifold", "spd:2", "--family", "rgd", "--n", "30", "--out", s(&spd_data)]);
    let spd_model = path(&dir, "spd.json");
    ok(&["fit", "--input", s(&spd_data), "--method", "riemannian", "--k", "2", "--model", s(&spd_model)]);
    let r = cli(&["grid", "--model", s(&spd_model), "--out", s(&path(&dir, "g2.csv"))]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn distortion_of_points_at_the_basepoint_is_zero() {
    let dir = TempDir::new().unwrap();
    let data = path(&dir, "same.csv");
    fs::write(&data, "# manifold=sphere:3\n1,0,0,0\n1,0,0,0\n1,0,0,0\n").unwrap();
    let rep = json(&ok(&["distort", "--input", s(&data), "--basepoint", "origin"]).stdout);
    assert_eq!(rep["n_pairs"], 3);
    for key in ["mean_abs", "max_abs", "signed_mean", "max_basepoint_error"] {
        assert_eq!(rep[key].as_f64().unwrap(), 0.0, "{key}");
    }
}

#[test]
fn missing_arguments_exit_with_usage_code() {
    assert_eq!(cli(&["fit"]).status.code(), Some(2));
    assert_eq!(cli(&["bench", "--targets", "x", "--out", "o.csv"]).status.code(), Some(2));
    assert_eq!(cli(&["frobnicate"]).status.code(), Some(2));
    assert!(cli(&["--help"]).status.success());
}
