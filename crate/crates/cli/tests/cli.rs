use std::fs;
use std::process::{Command, Output};

use deformer_core::{read_tensor, write_tensor, Tensor};
use serde_json::Value;

fn deformer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deformer"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn gradcheck_default_passes_tightly() {
    let out = deformer(&["gradcheck"]);
    assert_eq!(code(&out), 0);
    let r = json(&out);
    assert!(r["max_rel_err"].as_f64().unwrap() < 1e-6);
    assert_eq!(r["checks"].as_array().unwrap().len(), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("\"gradcheck\""));
}

#[test]
fn gradcheck_absurd_step_fails() {
    let out = deformer(&["gradcheck", "--eps", "10"]);
    assert_eq!(code(&out), 1);
    assert!(json(&out)["max_rel_err"].as_f64().unwrap() > 1e-2);
}

#[test]
fn gradcheck_budget_is_a_usage_error() {
    let out = deformer(&["gradcheck", "--time", "1000", "--channels", "16"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn unknown_flags_are_usage_errors() {
    assert_eq!(code(&deformer(&["equiv", "--no-such-flag"])), 2);
    assert_eq!(code(&deformer(&["frobnicate"])), 2);
}

#[test]
fn equiv_reports_exact_match() {
    let out = deformer(&["equiv", "--trials", "10"]);
    assert_eq!(code(&out), 0);
    let r = json(&out);
    assert_eq!(r["max_abs_diff"].as_f64(), Some(0.0));
    assert_eq!(r["bitwise_equal_trials"].as_u64(), Some(10));
}

#[test]
fn train_toy_writes_metrics_and_reloadable_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let out = deformer(&[
        "train-toy",
        "--steps",
        "30",
        "--offset-init",
        "zero",
        "--out-dir",
        run.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("final_loss "));

    let metrics = fs::read_to_string(run.join("metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(lines.next(), Some("step,loss,offset_l1"));
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[0], "0");
    assert_eq!(first[2].parse::<f64>().unwrap(), 0.0);
    let last = metrics.lines().last().unwrap();
    assert!(last.starts_with("29,"));

    let dump = fs::read(run.join("offsets/layer0/utt000.dt")).unwrap();
    let t: Tensor<f32> = read_tensor(&dump[..]).unwrap();
    assert_eq!(t.shape(), &[48, 1, 15]);
    let pos: Tensor<f32> =
        read_tensor(&fs::read(run.join("positions/layer0/utt000.dt")).unwrap()[..]).unwrap();
    assert_eq!(pos.shape(), t.shape());
    let summary: Value =
        serde_json::from_str(&fs::read_to_string(run.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["offset_dumps"].as_array().unwrap().len(), 16);
}

#[test]
fn train_toy_config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("toy.cfg");
    fs::write(&cfg, "# small run\nsteps = 5\nbatch = 2\njitter = 1\n").unwrap();
    let run = dir.path().join("run");
    let out = deformer(&[
        "train-toy",
        "--config",
        cfg.to_str().unwrap(),
        "--jitter",
        "2",
        "--out-dir",
        run.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let resolved = fs::read_to_string(run.join("config.txt")).unwrap();
    assert!(resolved.contains("steps=5\n"));
    assert!(resolved.contains("batch=2\n"));
    assert!(resolved.contains("jitter=2\n"));
}

#[test]
fn train_toy_rejects_bad_groups_and_keys() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let run = run.to_str().unwrap();
    assert_eq!(
        code(&deformer(&[
            "train-toy",
            "--deformable-groups",
            "3",
            "--out-dir",
            run
        ])),
        2
    );
    assert_eq!(
        code(&deformer(&[
            "train-toy",
            "--set",
            "colour=red",
            "--out-dir",
            run
        ])),
        2
    );
    assert_eq!(
        code(&deformer(&[
            "train-toy",
            "--offset-init",
            "gaussian",
            "--out-dir",
            run
        ])),
        2
    );
}

#[test]
fn analyze_attention_identity_is_diagonal() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("id.dt");
    let n = 6;
    let id = Tensor::<f64>::from_fn(&[1, n, n], |i| if (i / n) % n == i % n { 1.0 } else { 0.0 });
    write_tensor(&id, fs::File::create(&path).unwrap()).unwrap();
    let out = deformer(&["analyze", "attention", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let r = json(&out);
    assert_eq!(r["mean"]["diagonality"].as_f64(), Some(0.0));
    assert_eq!(r["mean"]["globalness"].as_f64(), Some(0.0));
    let bound = r["metric_bounds"]["globalness_upper"].as_f64().unwrap();
    assert!((bound - (n as f64).ln()).abs() < 1e-12);
}

#[test]
fn malformed_dump_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.dt");
    fs::write(
        &path,
        b"DTNSR1\x00\x01\x02\x00\x00\x00\x00\x00\x00\x00\x01\x02",
    )
    .unwrap();
    let out = deformer(&["analyze", "offsets", path.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("broken.dt"));
}

#[test]
fn analyze_offsets_matches_library_boxplot() {
    let dir = tempfile::tempdir().unwrap();
    let layer = dir.path().join("layer0");
    fs::create_dir(&layer).unwrap();
    let a = Tensor::<f32>::from_fn(&[4, 1, 3], |i| i as f32 * 0.25 - 1.0);
    let b = Tensor::<f32>::from_fn(&[2, 1, 3], |i| 5.0 - i as f32);
    write_tensor(&a, fs::File::create(layer.join("utt000.dt")).unwrap()).unwrap();
    write_tensor(&b, fs::File::create(layer.join("utt001.dt")).unwrap()).unwrap();
    let out = deformer(&["analyze", "offsets", layer.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let stats = &json(&out)["layers"][0]["stats"];
    let pooled: Vec<f32> = a.data().iter().chain(b.data()).copied().collect();
    let expected = deformer_core::analysis::offset_boxplot(&pooled).unwrap();
    assert_eq!(stats["n"].as_u64(), Some(18));
    assert_eq!(stats["median"].as_f64(), Some(expected.median));
    assert_eq!(stats["q3"].as_f64(), Some(expected.q3));
    assert_eq!(
        stats["outlier_count"].as_u64(),
        Some(expected.outlier_count as u64)
    );
}

#[test]
fn bench_reports_both_kernels_with_analytic_ops() {
    let run = |repeat: &str| {
        let out = deformer(&[
            "bench",
            "--t",
            "50",
            "--channels",
            "4",
            "--k",
            "3",
            "--repeat",
            repeat,
        ]);
        assert_eq!(code(&out), 0);
        String::from_utf8(out.stdout).unwrap()
    };
    let one = run("1");
    let nine = run("9");
    let rows: Vec<Vec<String>> = one
        .lines()
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    assert_eq!(
        rows[0].join(","),
        "kernel,pass,batch,t,channels,k,groups,repeat,median_seconds,frames_per_sec,ops"
    );
    assert_eq!(rows.len(), 5);
    assert_eq!(nine.lines().count(), 5);
    let ops = |kernel: &str, pass: &str| -> u64 {
        rows.iter()
            .find(|r| r[0] == kernel && r[1] == pass)
            .unwrap()[10]
            .parse()
            .unwrap()
    };
    // B·T·F·K, plus B·T·G_d·K lerps and B·T·G_d·K·F·K offset MACs.
    assert_eq!(ops("regular", "forward"), 50 * 4 * 3);
    assert_eq!(
        ops("deformable", "forward"),
        50 * 4 * 3 + 50 * 3 + 50 * 3 * 4 * 3
    );
    assert!(ops("deformable", "forward") > ops("regular", "forward"));
    assert_eq!(
        ops("regular", "forward_backward"),
        3 * ops("regular", "forward")
    );
}
