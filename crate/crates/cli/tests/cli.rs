use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ccrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccrl")).args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

const TINY: &str = r#"
mode = "ccrl"
levels = ["1", "2"]
seeds = [3]
transition_budget = 768
precision = "f32"
env.max_steps = 40
ppo.rollout_len = 16
ppo.epochs = 1
eval.interval = 64
eval.episodes = 1
eval.switch_window = 1
eval.switch_threshold = 0.0
"#;

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn bench_reports_latency() {
    let o = ccrl(&["bench", "--map", "1", "--steps", "500"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = String::from_utf8_lossy(&o.stdout);
    assert!(s.contains("median") && s.contains("p99"), "{s}");
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&ccrl(&["bench", "--map", "atlantis"])), 1);
    assert_eq!(code(&ccrl(&["frobnicate"])), 1);
    assert_eq!(code(&ccrl(&["train", "--config", "/nonexistent/run.toml"])), 1);
    assert_eq!(code(&ccrl(&["eval", "--checkpoint", "/nonexistent/x.ckpt", "--maps", "1"])), 1);
    let tmp = tempfile::tempdir().unwrap();
    let bad = write_config(tmp.path(), "ppo.gamma = 7.0\n");
    assert_eq!(code(&ccrl(&["train", "--config", &bad])), 1);
    assert_eq!(code(&ccrl(&["train", "--mode", "sideways"])), 1);
}

#[test]
fn corrupt_checkpoint_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let ck = tmp.path().join("bad.ckpt");
    fs::write(&ck, "ccrl-network 1\nscalar f64\ninput 24 24 32\n").unwrap();
    let o = ccrl(&["eval", "--checkpoint", ck.to_str().unwrap(), "--maps", "1", "--episodes", "1"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn train_is_deterministic_and_feeds_eval_and_render() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        let o = ccrl(&["train", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ma = fs::read(a.join("seed_3/metrics.csv")).unwrap();
    assert_eq!(ma, fs::read(b.join("seed_3/metrics.csv")).unwrap());
    assert_eq!(fs::read(a.join("seed_3/eval.csv")).unwrap(), fs::read(b.join("seed_3/eval.csv")).unwrap());
    let stages = fs::read_to_string(a.join("seed_3/stages.csv")).unwrap();
    let pools: Vec<&str> = stages.lines().skip(1).map(|l| l.split(',').nth(2).unwrap()).collect();
    assert_eq!(pools, ["4", "8"]);

    let ck = a.join("seed_3/final.ckpt");
    let trace = tmp.path().join("trace.csv");
    let ev = tmp.path().join("ev");
    let o = ccrl(&[
        "eval",
        "--config",
        &cfg,
        "--checkpoint",
        ck.to_str().unwrap(),
        "--maps",
        "1,test_hall",
        "--episodes",
        "2",
        "--seeds",
        "0,1",
        "--trace",
        trace.to_str().unwrap(),
        "--out",
        ev.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let episodes = fs::read_to_string(ev.join("episodes.csv")).unwrap();
    assert_eq!(episodes.lines().count(), 1 + 2 * 2 * 2);

    let pgm = tmp.path().join("trace.pgm");
    let o = ccrl(&["render", "--trace", trace.to_str().unwrap(), "--map", "1", "--out", pgm.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(&pgm).unwrap().starts_with("P2\n20 20\n255\n"));
}

#[test]
fn scripted_eval_covers_every_map() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "env.success_threshold = 1.0\n");
    let out = tmp.path().join("ev");
    let o = ccrl(&[
        "eval",
        "--scripted",
        "--config",
        &cfg,
        "--maps",
        "1,test_wide",
        "--episodes",
        "2",
        "--seeds",
        "7",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("episodes.csv")).unwrap();
    for line in csv.lines().skip(1) {
        assert_eq!(line.split(',').nth(3), Some("1"), "{line}");
    }
}
