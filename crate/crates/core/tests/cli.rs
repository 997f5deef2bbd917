use std::path::{Path, PathBuf};

use deepframe::cli::run;

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("deepframe-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn call(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let mut argv = vec!["deepframe"];
    argv.extend_from_slice(args);
    let code = run(argv, &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_bad_arguments() {
    assert_eq!(call(&["--help"]).0, 0);
    assert_eq!(call(&["--version"]).0, 0);
    assert_eq!(call(&["frobnicate"]).0, 1);
    assert_eq!(call(&["baseline", "--method", "median", "--out", "x.png"]).0, 1);
}

#[test]
fn synth_train_interpolate_evaluate() {
    let dir = scratch("pipeline");
    let spec = dir.join("synth.txt");
    std::fs::write(&spec, "width = 16\nheight = 16\nsequences = 3\nframes = 4\nmax_speed = 2\nseed = 5\n").unwrap();
    let data = dir.join("data");
    let (code, _) = call(&["synth", "--spec", s(&spec), "--out", s(&data)]);
    assert_eq!(code, 0);
    assert!(data.join("frames.txt").exists());
    assert!(data.join("flows.txt").exists());
    assert!(data.join("run_header.txt").exists());

    let cfg = dir.join("train.txt");
    std::fs::write(
        &cfg,
        "mode = mse\nchannels = 4,8\nsteps = 3\nbatch = 2\ndataset = data/frames.txt\ncheckpoint = run/model.ck\nlog = run/log.tsv\n",
    )
    .unwrap();
    let (code, out) = call(&["train", "--config", s(&cfg), "--set", "lr=0.002"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("average"));
    let ckpt = dir.join("run/model.ck");
    assert!(ckpt.exists());
    let header = std::fs::read_to_string(dir.join("run/run_header.txt")).unwrap();
    assert!(header.contains("config_sha256="));
    let log = std::fs::read_to_string(dir.join("run/log.tsv")).unwrap();
    assert_eq!(log.lines().count(), 4);

    let first = data.join("s0000_f000.png");
    let second = data.join("s0000_f002.png");
    let pred = dir.join("mid.png");
    let (code, _) = call(&[
        "interpolate", "--ckpt", s(&ckpt), "--first", s(&first), "--second", s(&second), "--out", s(&pred),
    ]);
    assert_eq!(code, 0);
    assert!(pred.exists());
    assert!(dir.join("mid_panel.png").exists());

    let base = dir.join("avg");
    let (code, out) = call(&["baseline", "--method", "average", "--frames", s(&data.join("frames.txt")), "--out", s(&base)]);
    assert_eq!(code, 0);
    assert!(out.contains("psnr="));
    let (code, out) = call(&[
        "evaluate",
        "--pred-manifest",
        s(&base.join("pred.txt")),
        "--truth-manifest",
        s(&base.join("truth.txt")),
        "--jobs",
        "2",
    ]);
    assert_eq!(code, 0);
    assert!(out.contains("count=6"), "{out}");

    let warp = dir.join("warp");
    let (code, _) = call(&[
        "baseline", "--method", "warp", "--frames", s(&data.join("frames.txt")),
        "--flows", s(&data.join("flows.txt")), "--out", s(&warp),
    ]);
    assert_eq!(code, 0);
}

#[test]
fn validation_and_runtime_exit_codes() {
    let dir = scratch("codes");
    let cfg = dir.join("bad.txt");
    std::fs::write(&cfg, "mode = sideways\n").unwrap();
    assert_eq!(call(&["train", "--config", s(&cfg)]).0, 1);
    let (code, _) = call(&["baseline", "--method", "warp", "--first", "a.png", "--second", "b.png", "--out", "c.png"]);
    assert_eq!(code, 1);
    let missing = dir.join("nope.ck");
    assert_eq!(
        call(&["interpolate", "--ckpt", s(&missing), "--first", "a.png", "--second", "b.png", "--out", "c.png"]).0,
        2
    );
}

#[test]
fn gradcheck_passes() {
    let (code, out) = call(&["gradcheck"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.lines().count() > 5);
}

fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file() && p.file_name().unwrap() != "run_header.txt")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn same_arguments_same_bytes() {
    let dir = scratch("repro");
    let spec = dir.join("synth.txt");
    std::fs::write(&spec, "width = 16\nheight = 16\nsequences = 2\nframes = 3\nseed = 1\n").unwrap();
    let cfg = dir.join("train.txt");
    std::fs::write(&cfg, "channels = 4,8\nsteps = 4\nbatch = 1\nmode = adversarial\ndisc_channels = 4\ndataset = data/frames.txt\ncheckpoint = out/model.ck\nlog = out/log.tsv\n").unwrap();
    let mut runs = Vec::new();
    for _ in 0..2 {
        let _ = std::fs::remove_dir_all(dir.join("data"));
        let _ = std::fs::remove_dir_all(dir.join("out"));
        assert_eq!(call(&["synth", "--spec", s(&spec), "--out", s(&dir.join("data"))]).0, 0);
        assert_eq!(call(&["train", "--config", s(&cfg), "--seed", "3"]).0, 0);
        runs.push((outputs(&dir.join("data")), outputs(&dir.join("out"))));
    }
    assert!(!runs[0].1.is_empty());
    assert!(runs[0] == runs[1]);
}
