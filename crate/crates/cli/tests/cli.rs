use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
scenario = "builtin:procedural:3"
budget_per_scene = 4
snapshot_interval = 2
seeds = [0, 1]
candidates_per_step = 8
pretrain_pairs = 60
out_dir = "runs"
"#;

fn curio(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_curio"));
    cmd.args(args).env_remove("CURIO_OUT").env("RUST_LOG", "warn");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("exp.toml");
    std::fs::write(&p, body).unwrap();
    p
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn explore_then_evaluate_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = curio(&["explore", "--config", s(&cfg), "--out", s(&out), "--workers", "2"], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for policy in ["random", "cycling", "curiosity"] {
        for seed in [0, 1] {
            let run = out.join(format!("explore/procedural-3/{policy}/seed_{seed}"));
            assert!(run.join("steps.csv").is_file());
            assert!(run.join("store.bin").is_file());
            let steps = std::fs::read_to_string(run.join("steps.csv")).unwrap();
            let mut lines = steps.lines();
            assert!(lines.next().unwrap().starts_with("# config_hash: "));
            assert_eq!(lines.next().unwrap(), "step,scene,object,part,u,policy,novelty,store_size");
            assert_eq!(lines.count(), 20);
        }
    }
    let o = curio(&["evaluate", "--config", s(&cfg), "--out", s(&out)], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let eval = out.join("evaluate/procedural-3");
    let curve = std::fs::read_to_string(eval.join("audio_pred.csv")).unwrap();
    assert_eq!(curve.lines().nth(1).unwrap(), "policy,seed,samples,scene,active_entries,mean_mcd");
    assert!(curve.contains(",inf"));
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(eval.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config_hash"].as_str().unwrap().len(), 64);
    for policy in ["random", "cycling", "curiosity"] {
        assert_eq!(summary["audio_pred"][policy]["auc"].as_array().unwrap().len(), 2);
    }
}

#[test]
fn reruns_are_byte_identical_and_worker_independent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(code(&curio(&["explore", "--config", s(&cfg), "--out", s(&a), "--workers", "1"], &[])), 0);
    assert_eq!(code(&curio(&["explore", "--config", s(&cfg), "--out", s(&b), "--workers", "4"], &[])), 0);
    for policy in ["random", "cycling", "curiosity"] {
        let rel = format!("explore/procedural-3/{policy}/seed_1");
        for f in ["steps.csv", "store.bin"] {
            assert_eq!(std::fs::read(a.join(&rel).join(f)).unwrap(), std::fs::read(b.join(&rel).join(f)).unwrap());
        }
    }
}

#[test]
fn output_root_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let env_out = dir.path().join("from_env");
    let flag_out = dir.path().join("from_flag");
    let args = ["explore", "--config", s(&cfg), "--seeds", "0", "--policy", "cycling"];
    assert_eq!(code(&curio(&args, &[("CURIO_OUT", &env_out)])), 0);
    assert!(env_out.join("explore/procedural-3/cycling/seed_0/steps.csv").is_file());
    assert!(!env_out.join("explore/procedural-3/random").exists());
    let mut with_flag = args.to_vec();
    with_flag.extend(["--out", s(&flag_out)]);
    assert_eq!(code(&curio(&with_flag, &[("CURIO_OUT", &env_out)])), 0);
    assert!(flag_out.join("explore/procedural-3/cycling/seed_0/steps.csv").is_file());
}

#[test]
fn invalid_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let bad = config(dir.path(), &SMALL.replace("budget_per_scene = 4", "budget_per_scene = 0"));
    let o = curio(&["explore", "--config", s(&bad), "--out", s(&out)], &[]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("budget_per_scene"));

    let unknown = config(dir.path(), &format!("{SMALL}\nbudgett = 3\n"));
    assert_eq!(code(&curio(&["explore", "--config", s(&unknown), "--out", s(&out)], &[])), 1);

    let cfg = config(dir.path(), SMALL);
    assert_eq!(code(&curio(&["explore", "--config", s(&cfg), "--policy", "greedy", "--out", s(&out)], &[])), 1);
    assert_eq!(code(&curio(&["explore", "--config", s(&cfg), "--workers", "0", "--out", s(&out)], &[])), 1);
    assert_eq!(code(&curio(&["explore", "--config", s(&dir.path().join("missing.toml"))], &[])), 1);
}

#[test]
fn evaluate_without_runs_names_the_missing_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let out = dir.path().join("empty");
    let o = curio(&["evaluate", "--config", s(&cfg), "--out", s(&out)], &[]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed_0"));
}

#[test]
fn evaluate_rejects_runs_from_another_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = config(dir.path(), SMALL);
    assert_eq!(code(&curio(&["explore", "--config", s(&cfg), "--out", s(&out), "--seeds", "0"], &[])), 0);
    let other = config(dir.path(), &SMALL.replace("candidates_per_step = 8", "candidates_per_step = 9"));
    let o = curio(&["evaluate", "--config", s(&other), "--out", s(&out), "--seeds", "0"], &[]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("hash"));
}

#[test]
fn runtime_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, "a file, not a directory").unwrap();
    let o = curio(&["explore", "--config", s(&cfg), "--out", s(&blocker), "--seeds", "0", "--policy", "random"], &[]);
    assert_eq!(code(&o), 2);

    let dsp = config(dir.path(), &format!("{SMALL}\n[dsp]\nmel_break_hz = 800.0\n"));
    let o = curio(&["validate-dsp", "--config", s(&dsp)], &[]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL mfcc-vs-reference"));
}

#[test]
fn validate_dsp_passes_on_defaults() {
    let o = curio(&["validate-dsp"], &[]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 5);
    assert!(!text.contains("FAIL"));
}

#[test]
fn export_wav_writes_one_file_per_strike() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let args = ["--config", s(&cfg), "--out", s(&out), "--seeds", "1", "--policy", "curiosity"];
    assert_eq!(code(&curio(&[&["explore"][..], &args].concat(), &[])), 0);
    assert_eq!(code(&curio(&[&["export-wav"][..], &args].concat(), &[])), 0);
    let wav_dir = out.join("wav/procedural-3/curiosity/seed_1");
    let n = std::fs::read_dir(&wav_dir).unwrap().count();
    assert_eq!(n, 20);
}
