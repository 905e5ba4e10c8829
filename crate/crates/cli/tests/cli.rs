use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use codetune_core::bench::generate_toy_data;
use codetune_core::optimizer::f_quantile;
use codetune_core::{CalibrationDataset, ComputerData};
use serde_json::Value;
use tempfile::TempDir;

fn codetune(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_codetune")).current_dir(dir).env_remove("CODETUNE_JOBS").args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = codetune(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

/// The single stderr line of a failed run.
fn failure(dir: &Path, args: &[&str]) -> String {
    let out = codetune(dir, args);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    err.trim_end().to_string()
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write_csv(path: &Path, header: &str, rows: impl Iterator<Item = Vec<f64>>) {
    let mut s = format!("{header}\n");
    for r in rows {
        s += &r.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",");
        s.push('\n');
    }
    std::fs::write(path, s).unwrap();
}

fn header(q: usize, p: usize) -> String {
    let mut h: Vec<String> = (1..=q).map(|i| format!("t{i}")).collect();
    h.extend((1..=p).map(|i| format!("x{i}")));
    h.push("y".into());
    h.join(",")
}

fn write_dataset(dir: &Path, data: &CalibrationDataset) {
    let c = data.computer();
    write_csv(
        &dir.join("computer.csv"),
        &header(c.q(), c.p()),
        (0..c.n()).map(|i| {
            let mut r: Vec<f64> = c.inputs().row(i).iter().copied().collect();
            r.push(c.responses()[i]);
            r
        }),
    );
    let e = data.experimental();
    write_csv(
        &dir.join("experimental.csv"),
        &header(0, e.p()),
        (0..e.n()).map(|i| {
            let mut r: Vec<f64> = e.x_inputs().row(i).iter().copied().collect();
            r.push(e.responses()[i]);
            r
        }),
    );
}

/// Four tuning and four control inputs, 64 computer and 42 experimental runs.
fn tokamak_shaped(dir: &Path) {
    let unit = |i: usize, j: usize, n: usize| (((i * (2 * j + 3) + j * 7) % n) as f64 + 0.5) / n as f64;
    let code = |t: &[f64], x: &[f64]| t[0] * x[0] + (t[1] * x[1]).sin() + t[2] * x[2] * x[2] - t[3] * x[3] + 0.5 * t[0] * t[3];
    write_csv(
        &dir.join("computer.csv"),
        &header(4, 4),
        (0..64).map(|i| {
            let r: Vec<f64> = (0..8).map(|j| unit(i, j, 64)).collect();
            let mut row = r.clone();
            row.push(code(&r[..4], &r[4..]));
            row
        }),
    );
    let tau = [0.4, 0.6, 0.3, 0.7];
    write_csv(
        &dir.join("experimental.csv"),
        &header(0, 4),
        (0..42).map(|i| {
            let x: Vec<f64> = (0..4).map(|j| unit(i, j + 4, 42)).collect();
            let mut row = x.clone();
            row.push(code(&tau, &x) + 0.01 * ((i * 13 % 7) as f64 - 3.0));
            row
        }),
    );
}

#[test]
fn fit_reports_one_beta_per_input_plus_intercept() {
    let dir = TempDir::new().unwrap();
    write_csv(
        &dir.path().join("c.csv"),
        "t1,x1,x2,y",
        (0..5).map(|i| {
            let v = i as f64 / 4.0;
            vec![v, (3.0 * v).sin(), v * v, v + (2.0 * v).cos()]
        }),
    );
    ok(dir.path(), &["fit", "--computer", "c.csv", "--out", "fit.json"]);
    let doc = read_json(dir.path().join("fit.json"));
    let params = doc["results"]["fit"]["parameters"].as_array().unwrap();
    let betas = params.iter().filter(|p| p["name"].as_str().unwrap().starts_with("beta_")).count();
    assert_eq!(betas, 1 + 1 + 2);
    assert_eq!(doc["config"]["computer"], "c.csv");
}

#[test]
fn malformed_cell_is_located() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("c.csv"), "t1,x1,y\n0.1,0.2,1\n0.3,zz,2\n0.5,0.6,3\n").unwrap();
    let err = failure(dir.path(), &["fit", "--computer", "c.csv"]);
    assert!(err.starts_with("error[parse]:"), "{err}");
    assert!(err.contains("line 3, column 'x1'"), "{err}");
}

#[test]
fn combined_fit_lists_table_shaped_parameters() {
    let dir = TempDir::new().unwrap();
    tokamak_shaped(dir.path());
    ok(
        dir.path(),
        &["fit", "--computer", "computer.csv", "--experimental", "experimental.csv", "--tau", "0.4,0.6,0.3,0.7", "--fit-multistart", "3", "-o", "fit.json"],
    );
    let doc = read_json(dir.path().join("fit.json"));
    let names: Vec<String> = doc["results"]["fit"]["parameters"].as_array().unwrap().iter().map(|p| p["name"].as_str().unwrap().to_string()).collect();
    let mut expected = vec!["theta".to_string()];
    expected.extend((0..9).map(|i| format!("beta_{i}")));
    expected.extend(["sigma2".into(), "gamma_E".into()]);
    assert_eq!(names, expected);
    assert_eq!(doc["results"]["fit"]["n_experimental"], 42);
}

#[test]
fn calibrate_round_trips_through_its_report() {
    let dir = TempDir::new().unwrap();
    write_dataset(dir.path(), &generate_toy_data(1, 30, 20, 77).unwrap());
    let base = ["--computer", "computer.csv", "--experimental", "experimental.csv", "--fit-multistart", "4", "--tau-multistart", "6"];
    let mut first = vec!["calibrate", "--out", "a.json"];
    first.extend(base);
    ok(dir.path(), &first);
    ok(dir.path(), &["calibrate", "--config", "a.json", "--out", "b.json", "--jobs", "1"]);
    let mut a = read_json(dir.path().join("a.json"));
    let mut b = read_json(dir.path().join("b.json"));
    assert_eq!(a["results"]["tau_hat"], b["results"]["tau_hat"]);
    for doc in [&mut a, &mut b] {
        let o = doc.as_object_mut().unwrap();
        o.remove("wall_seconds");
        o["config"].as_object_mut().unwrap().remove("out");
    }
    assert_eq!(a, b);
    assert_eq!(a["residuals"].as_array().unwrap().len(), 50);
    let exp_rows = a["residuals"].as_array().unwrap().iter().filter(|r| r["source"] == "E").count();
    assert_eq!(exp_rows, 20);

    let shown = String::from_utf8(ok(dir.path(), &["report", "a.json"]).stdout).unwrap();
    assert!(shown.contains("tau_hat") && shown.contains("method: ANLS"));
}

#[test]
fn single_iteration_maxmin_matches_anls() {
    let dir = TempDir::new().unwrap();
    write_dataset(dir.path(), &generate_toy_data(6, 15, 10, 5).unwrap());
    let base = ["--computer", "computer.csv", "--experimental", "experimental.csv", "--fit-multistart", "3", "--tau-multistart", "4"];
    let mut anls = vec!["calibrate", "--out", "anls.json", "--method", "anls"];
    anls.extend(base);
    let mut mm = vec!["calibrate", "--out", "mm.json", "--method", "maxmin", "--max-iterations", "1"];
    mm.extend(base);
    ok(dir.path(), &anls);
    ok(dir.path(), &mm);
    let a = read_json(dir.path().join("anls.json"));
    let m = read_json(dir.path().join("mm.json"));
    assert_eq!(m["results"]["method"], "MaxMin");
    for key in ["tau_hat", "rss_p", "predictor_variant", "surrogate"] {
        assert_eq!(a["results"][key], m["results"][key], "{key}");
    }
    assert_eq!(a["residuals"], m["residuals"]);
    assert_eq!(a["trace"], m["trace"]);
}

#[test]
fn region_threshold_is_constant_and_matches_quantile() {
    let dir = TempDir::new().unwrap();
    tokamak_shaped(dir.path());
    ok(
        dir.path(),
        &[
            "calibrate",
            "--computer",
            "computer.csv",
            "--experimental",
            "experimental.csv",
            "--fit-multistart",
            "2",
            "--tau-multistart",
            "3",
            "--alpha",
            "0.05",
            "--pair",
            "1,4",
            "--grid-points",
            "4",
            "--region-csv",
            "region.csv",
        ],
    );
    let doc = read_json(dir.path().join("codetune-report.json"));
    let reg = &doc["region"];
    let rss = doc["results"]["rss_p"].as_f64().unwrap();
    let f = f_quantile(0.05, 4, 38).unwrap();
    let expected = rss * (1.0 + 4.0 / 38.0 * f);
    assert!((reg["threshold"].as_f64().unwrap() - expected).abs() <= 1e-12 * expected);
    assert_eq!(reg["columns"][0], "tau_1");
    assert_eq!(reg["columns"][1], "tau_4");
    // Four lattice points per axis plus the tau_hat coordinate on each.
    let n = reg["grid"].as_array().unwrap().len();
    assert!(n == 16 || n == 20 || n == 25, "{n}");
    let side = std::fs::read_to_string(dir.path().join("region.csv")).unwrap();
    let thresholds: Vec<&str> = side.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(thresholds.len(), n);
    assert!(thresholds.iter().all(|t| *t == thresholds[0]));
}

#[test]
fn benchmark_smoke_table_and_jobs_independence() {
    let dir = TempDir::new().unwrap();
    let args = |out: &'static str| {
        vec![
            "benchmark",
            "--functions",
            "6",
            "--methods",
            "anls,maxmin",
            "--repetitions",
            "2",
            "--n-c",
            "12",
            "--n-e",
            "8",
            "--fit-multistart",
            "2",
            "--tau-multistart",
            "3",
            "--max-iterations",
            "3",
            "--out",
            out,
        ]
    };
    let start = std::time::Instant::now();
    let out = ok(dir.path(), &args("one.json"));
    assert!(start.elapsed().as_secs() < 60);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("Average distance to the true value (SD)"));

    let mut two = args("two.json");
    two.extend(["--jobs", "2"]);
    ok(dir.path(), &two);
    let a = read_json(dir.path().join("one.json"));
    let b = read_json(dir.path().join("two.json"));
    assert_eq!(a["results"]["rows"], b["results"]["rows"]);
    assert_eq!(a["results"]["columns"][6], "Average distance to the true value (SD)");
    assert_eq!(a["results"]["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn benchmark_rejects_bad_function_before_running() {
    let dir = TempDir::new().unwrap();
    let err = failure(dir.path(), &["benchmark", "--functions", "1,9", "--out", "x.json"]);
    assert!(err.starts_with("error[unknown-test-function]"), "{err}");
    assert!(!dir.path().join("x.json").exists());
}

#[test]
fn design_with_builtin_function() {
    let dir = TempDir::new().unwrap();
    let common = ["design", "--test-function", "6", "--weight-points", "200", "--pool-size", "80", "--fit-multistart", "3"];
    let run = |extra: &[&str]| {
        let mut a = common.to_vec();
        a.extend(extra);
        ok(dir.path(), &a);
        read_json(dir.path().join("codetune-report.json"))
    };

    let one = run(&["--n-initial", "10", "--max-stages", "1"]);
    assert_eq!(one["results"]["stages"], 1);
    let csv = std::fs::read_to_string(dir.path().join("design.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t1,t2,x1,x2,y");
    assert_eq!(lines.len(), 11);

    let inf = run(&["--target-mmse", "inf"]);
    assert_eq!(inf["results"]["stages"], 1);

    let two = run(&["--max-stages", "2", "--design-out", "two.csv"]);
    let mmse: Vec<f64> = two["results"]["mmse_history"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(mmse.len(), 2);
    assert!(mmse[1] <= mmse[0], "{mmse:?}");
    assert_eq!(std::fs::read_to_string(dir.path().join("two.csv")).unwrap().lines().count(), 21);
}

#[cfg(unix)]
#[test]
fn design_with_external_simulator() {
    use std::os::unix::fs::PermissionsExt;
    let dir = TempDir::new().unwrap();
    let script = |name: &str, body: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        std::fs::set_permissions(&p, std::fs::Permissions::from_mode(0o755)).unwrap();
        p.to_string_lossy().into_owned()
    };
    let good = script(
        "sim.sh",
        r#"#!/bin/sh
awk -F, '{ printf "%.17g\n", $1 * $1 + 2 * $2 }'
"#,
    );
    ok(dir.path(), &["design", "--simulator", &good, "--ranges", "0:1,0:2", "--n-initial", "6", "--max-stages", "1", "--weight-points", "100"]);
    let csv = std::fs::read_to_string(dir.path().join("design.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("z1,z2,y"));
    for l in lines {
        let v: Vec<f64> = l.split(',').map(|s| s.parse().unwrap()).collect();
        assert!((v[2] - (v[0] * v[0] + 2.0 * v[1])).abs() < 1e-9 * (1.0 + v[2].abs()));
    }

    let bad = script("bad.sh", "#!/bin/sh\necho 'mesh failed' >&2\nexit 3\n");
    let err = failure(dir.path(), &["design", "--simulator", &bad, "--ranges", "0:1", "--n-initial", "4"]);
    assert!(err.starts_with("error[simulator]") && err.contains("mesh failed"), "{err}");
}

#[test]
fn config_file_and_jobs_env() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("run.cfg"), "# fit settings\ncomputer = c.csv\nfit_multistart = 2 # quick\n").unwrap();
    write_csv(&dir.path().join("c.csv"), "t1,x1,y", (0..6).map(|i| vec![i as f64, (i * i) as f64 / 5.0, (i as f64).sqrt()]));
    let out = Command::new(env!("CARGO_BIN_EXE_codetune"))
        .current_dir(dir.path())
        .env("CODETUNE_JOBS", "1")
        .args(["fit", "--config", "run.cfg", "--fit-multistart", "3"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(dir.path().join("codetune-report.json"));
    assert_eq!(doc["config"]["fit_multistart"], "3");

    std::fs::write(dir.path().join("typo.cfg"), "computr = c.csv\n").unwrap();
    let err = failure(dir.path(), &["fit", "--config", "typo.cfg"]);
    assert!(err.contains("typo.cfg:1") && err.contains("unknown key 'computr'"), "{err}");

    let bad_jobs = Command::new(env!("CARGO_BIN_EXE_codetune"))
        .current_dir(dir.path())
        .env("CODETUNE_JOBS", "many")
        .args(["fit", "--config", "run.cfg"])
        .output()
        .unwrap();
    assert!(!bad_jobs.status.success());
}

#[test]
fn fit_data_must_be_consistent() {
    let dir = TempDir::new().unwrap();
    let c = ComputerData::new(
        nalgebra::DMatrix::from_element(3, 1, 0.5),
        nalgebra::DMatrix::from_fn(3, 1, |i, _| i as f64),
        nalgebra::DVector::from_element(3, 1.0),
    )
    .unwrap();
    write_csv(&dir.path().join("c.csv"), "t1,x1,y", (0..c.n()).map(|i| vec![c.t_inputs()[(i, 0)], c.x_inputs()[(i, 0)], 1.0]));
    let err = failure(dir.path(), &["fit", "--computer", "c.csv", "--tau", "0.5"]);
    assert!(err.starts_with("error[config]"), "{err}");
}
