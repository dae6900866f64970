use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn imcf(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_imcf"))
        .args(args)
        .env("IMCF_OUT_DIR", out_dir)
        .output()
        .expect("run imcf")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn last_row(path: &Path) -> Vec<f64> {
    let text = std::fs::read_to_string(path).unwrap();
    let line = text.lines().last().unwrap();
    line.split(',').map(|x| x.parse().unwrap()).collect()
}

#[test]
fn check_profile_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = imcf(
        &[
            "check-profile",
            "--family",
            "hyperbolic",
            "--k",
            "1",
            "--json",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["report"]["assumption_a"]["pass"], Value::Bool(true));
    assert!(doc["report"]["const_b1"].as_f64().unwrap() <= 1.0 + 1e-9);

    let o = imcf(&["check-profile", "--family", "euclidean"], tmp.path());
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("assumption A: pass"));
    assert!(text.contains("theta_bar: identically zero"));

    let bad = tmp.path().join("bad.csv");
    std::fs::write(
        &bad,
        "r,theta,theta1,theta2,theta3\n1,1,1,0,0\n0.5,2,1,0,0\n",
    )
    .unwrap();
    let o = imcf(
        &[
            "check-profile",
            "--family",
            "tabulated",
            "--path",
            bad.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 1);

    // increasing but concave, so assumption A fails
    let concave = tmp.path().join("concave.csv");
    let rows: String = (0..=40)
        .map(|i| {
            let r = 1.0 + i as f64 * 0.05;
            format!(
                "{r},{},{},{},{}\n",
                r.ln() + 1.0,
                1.0 / r,
                -1.0 / (r * r),
                2.0 / (r * r * r)
            )
        })
        .collect();
    std::fs::write(&concave, format!("r,theta,theta1,theta2,theta3\n{rows}")).unwrap();
    let out = tmp.path().join("report.json");
    let o = imcf(
        &[
            "check-profile",
            "--family",
            "tabulated",
            "--path",
            concave.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.exists());
}

#[test]
fn simulate_round_euclidean_run() {
    let tmp = tempfile::tempdir().unwrap();
    let o = imcf(
        &[
            "simulate",
            "--family",
            "euclidean",
            "--n",
            "2",
            "--grid",
            "64",
            "--initial",
            "round(1)",
            "--t_end",
            "2",
            "--output_every",
            "0.5",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let series = tmp.path().join("series.csv");
    let header = std::fs::read_to_string(&series)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_owned();
    assert_eq!(
        header,
        "t,min_u,max_u,sup_v,sup_grad,sup_grad_weighted,H_min,H_max,sup_deficit,sup_weighted_deficit,w_mean,rescaled_spread"
    );
    let row = last_row(&series);
    assert_eq!(row[0], 2.0);
    assert!((row[2] - std::f64::consts::E).abs() <= 1e-5);
    let state = std::fs::read_to_string(tmp.path().join("final_state.csv")).unwrap();
    assert!(state.starts_with("chi,u\n"));
    assert_eq!(state.lines().count(), 66);
    let m = manifest(tmp.path());
    assert_eq!(m["exit_code"], 0);
    assert_eq!(m["termination"]["reason"], "completed");
    assert_eq!(m["config"]["family"], "euclidean");
}

#[test]
fn zero_end_time_gives_one_row() {
    let tmp = tempfile::tempdir().unwrap();
    let o = imcf(
        &[
            "simulate",
            "--family",
            "euclidean",
            "--grid",
            "32",
            "--initial",
            "round(1)",
            "--t_end",
            "0",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(tmp.path().join("series.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert_eq!(last_row(&tmp.path().join("series.csv"))[0], 0.0);
}

#[test]
fn simulate_off_center_hyperbolic_sphere() {
    let tmp = tempfile::tempdir().unwrap();
    let o = imcf(
        &[
            "simulate",
            "--family",
            "hyperbolic",
            "--grid",
            "64",
            "--initial",
            "offcenter_hyp(1, 0.3)",
            "--t_end",
            "2",
            "--output_every",
            "0.25",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let row = last_row(&tmp.path().join("series.csv"));
    assert!(row[5] > 0.0);
}

#[test]
fn simulate_error_exit_codes_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("bad");
    let o = imcf(
        &[
            "simulate",
            "--family",
            "nope",
            "--initial",
            "round(1)",
            "--t_end",
            "1",
            "--out_dir",
            dir.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 1);
    let m = manifest(&dir);
    assert_eq!(m["termination"]["reason"], "error");
    assert_eq!(m["exit_code"], 1);

    let dir = tmp.path().join("convexity");
    let o = imcf(
        &[
            "simulate",
            "--family",
            "euclidean",
            "--grid",
            "64",
            "--initial",
            "legendre(1, 0.6, 8)",
            "--t_end",
            "1",
            "--out_dir",
            dir.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("mean_convexity_lost"));
    assert_eq!(
        manifest(&dir)["termination"]["reason"],
        "mean_convexity_lost"
    );

    let dir = tmp.path().join("domain");
    let o = imcf(
        &[
            "simulate",
            "--family",
            "hyperbolic",
            "--r0",
            "0.5",
            "--r_max",
            "2",
            "--grid",
            "32",
            "--initial",
            "round(1)",
            "--t_end",
            "5",
            "--out_dir",
            dir.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 4);
    assert_eq!(manifest(&dir)["termination"]["reason"], "domain_exit");
}

#[test]
fn config_file_reproduces_series_bit_for_bit() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.ini");
    std::fs::write(
        &cfg,
        "[profile]\nfamily = hyperbolic\n\n[flow]\nn = 2\ngrid = 64\nt_end = 1\noutput_every = 0.25\ninitial = legendre(1, 0.05, 2)\n",
    )
    .unwrap();
    let a = tmp.path().join("a");
    let o = imcf(
        &[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--out_dir",
            a.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    // the echoed config reproduces the run
    let b = tmp.path().join("b");
    let echoed = a.join("config.ini");
    let o = imcf(
        &[
            "simulate",
            "--config",
            echoed.to_str().unwrap(),
            "--out_dir",
            b.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0);
    assert_eq!(
        std::fs::read(a.join("series.csv")).unwrap(),
        std::fs::read(b.join("series.csv")).unwrap()
    );

    // flags override the file
    let c = tmp.path().join("c");
    let o = imcf(
        &[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--t_end",
            "0.5",
            "--out_dir",
            c.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0);
    assert_eq!(last_row(&c.join("series.csv"))[0], 0.5);
}

#[test]
fn sweep_writes_one_directory_per_run() {
    let tmp = tempfile::tempdir().unwrap();
    let o = imcf(
        &[
            "simulate",
            "--family",
            "euclidean",
            "--initial",
            "round(1)",
            "--t_end",
            "0.5",
            "--sweep",
            "grid=32,48",
            "--threads",
            "2",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for (i, cells) in [(0, 32), (1, 48)] {
        let dir = tmp.path().join(format!("run_{i:03}"));
        let state = std::fs::read_to_string(dir.join("final_state.csv")).unwrap();
        assert_eq!(state.lines().count(), cells + 2);
        assert_eq!(manifest(&dir)["sweep"], format!("grid={cells}"));
    }
    let index: Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("sweep.json")).unwrap())
            .unwrap();
    assert_eq!(index.as_array().unwrap().len(), 2);
}

#[test]
fn fit_decay_on_synthetic_series() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("q.csv");
    let rows: String = (0..=40)
        .map(|i| {
            let t = i as f64 * 0.25;
            format!("{t},{:.17e}\n", (-t / 2.0).exp())
        })
        .collect();
    std::fs::write(&csv, format!("t,q\n{rows}")).unwrap();
    let out = tmp.path().join("fit.json");
    let o = imcf(
        &[
            "fit-decay",
            "--series",
            csv.to_str().unwrap(),
            "--quantity",
            "q",
            "--out",
            out.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!((doc["fits"]["pure_exp"]["b"].as_f64().unwrap() + 0.5).abs() < 1e-9);
    assert!((doc["fits"]["exp_log"]["b"].as_f64().unwrap() + 0.5).abs() < 1e-6);
    assert_eq!(doc["window"][0].as_f64(), Some(5.0));

    let zero = tmp.path().join("zero.csv");
    std::fs::write(
        &zero,
        format!(
            "t,q\n{}",
            (0..20).map(|i| format!("{i},0\n")).collect::<String>()
        ),
    )
    .unwrap();
    let o = imcf(
        &[
            "fit-decay",
            "--series",
            zero.to_str().unwrap(),
            "--quantity",
            "q",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 5);

    let o = imcf(
        &[
            "fit-decay",
            "--series",
            csv.to_str().unwrap(),
            "--quantity",
            "missing",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 1);

    let empty = tmp.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let o = imcf(
        &["fit-decay", "--series", empty.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(code(&o), 1);
}

#[test]
fn plot_draws_barrier_envelopes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = imcf(
        &[
            "simulate",
            "--family",
            "hyperbolic",
            "--grid",
            "32",
            "--initial",
            "round(1)",
            "--t_end",
            "1",
            "--output_every",
            "0.25",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0);
    let series = tmp.path().join("series.csv");
    let svg = tmp.path().join("chart.svg");
    let o = imcf(
        &[
            "plot",
            "--series",
            series.to_str().unwrap(),
            "--family",
            "hyperbolic",
            "--out",
            svg.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&svg).unwrap();
    assert!(text.starts_with("<svg"));
    assert_eq!(text.matches("<polyline").count(), 4);

    let o = imcf(
        &[
            "plot",
            "--series",
            series.to_str().unwrap(),
            "--columns",
            "nope",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 1);
}
