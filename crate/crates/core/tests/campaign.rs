use std::fs;
use std::path::Path;
use std::process::Command;

use pqos_core::config::{Mode, Regime};
use pqos_core::runner::{evaluate_checkpoint, load_metrics, run_campaign, summarize_dir, CampaignSummary};
use pqos_core::SimConfig;

fn quick(mode: Mode) -> SimConfig {
    SimConfig {
        mode,
        episodes: 2,
        steps_per_episode: 20,
        t_ppo: 16,
        minibatch: 8,
        ..SimConfig::default()
    }
}

fn pqos(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_pqos")).args(args).output().unwrap()
}

#[test]
fn campaign_directory_is_complete() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let mut cfg = quick(Mode::Meta);
    cfg.set_regime(Regime::Dc1_6);
    cfg.meta_algorithm = Some(pqos_core::config::MetaAlgorithm::Lts);
    let outcome = run_campaign(&cfg, &out, true).unwrap();

    for f in ["config.toml", "metrics.csv", "summary.json", "checkpoints/agents.json", "meta_decisions.csv", "trace.jsonl"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    assert_eq!(SimConfig::load(&out.join("config.toml")).unwrap(), cfg);
    let rows = load_metrics(&out.join("metrics.csv")).unwrap();
    assert_eq!(rows, outcome.metrics);
    assert_eq!(rows.len(), 2);
    let summary: CampaignSummary = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary, outcome.summary);
    assert!(summary.tail.ics_share.is_some());

    let trace = fs::read_to_string(out.join("trace.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(trace.lines().next().unwrap()).unwrap();
    assert!(first.is_object());
}

#[test]
fn single_episode_campaign() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SimConfig { episodes: 1, ..quick(Mode::Ics) };
    let outcome = run_campaign(&cfg, dir.path(), false).unwrap();
    assert_eq!(outcome.metrics.len(), 1);
    assert_eq!(outcome.summary.tail.episodes, 1);
    assert!(!dir.path().join("meta_decisions.csv").exists());
    assert!(!dir.path().join("trace.jsonl").exists());
}

#[test]
fn eval_and_summarize_reuse_a_campaign() {
    let dir = tempfile::tempdir().unwrap();
    run_campaign(&quick(Mode::Ccs), dir.path(), false).unwrap();
    let (rows, summary) = evaluate_checkpoint(dir.path(), 2).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| !r.training));
    assert_eq!(summary.tail.episodes, 2);
    assert!(dir.path().join("eval_metrics.csv").is_file());

    let boxes = summarize_dir(dir.path()).unwrap();
    assert_eq!(boxes.rows, 2);
    let lat = &boxes.columns["latency_mean"];
    assert!(lat.min <= lat.median && lat.median <= lat.max);
    assert!(dir.path().join("boxplots.json").is_file());
}

#[test]
fn same_seed_reproduces_metrics_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick(Mode::Ics);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run_campaign(&cfg, &a, false).unwrap();
    run_campaign(&cfg, &b, false).unwrap();
    let read = |p: &Path| fs::read(p.join("metrics.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn cli_train_eval_summarize() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("exp.toml");
    fs::write(&cfg_path, "steps_per_episode = 20\nt_ppo = 16\nminibatch = 8\n").unwrap();
    let out = dir.path().join("run");
    let o = pqos(&[
        "train",
        "--config",
        cfg_path.to_str().unwrap(),
        "--mode",
        "C",
        "--learning",
        "federated",
        "--regime",
        "STATIC_B",
        "--tau",
        "30",
        "--seed",
        "4",
        "--episodes",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: CampaignSummary = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary.mode, Mode::C);
    assert_eq!(summary.seed, 4);
    assert_eq!(summary.latency_threshold_ms, 30.0);
    assert_eq!(summary.regime.as_deref(), Some("STATIC_B"));
    assert_eq!((summary.p_gb, summary.p_bg), (1.0, 0.0));

    let o = pqos(&["eval", "--checkpoint", out.to_str().unwrap(), "--episodes", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = pqos(&["summarize", "--in", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("deadline_hit_prob"));
}

#[test]
fn cli_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("bad.toml");
    fs::write(&cfg_path, "n_uess = 5\n").unwrap();
    let o = pqos(&["train", "--config", cfg_path.to_str().unwrap(), "--out", dir.path().join("x").to_str().unwrap()]);
    assert!(!o.status.success());
    let o = pqos(&["train", "--regime", "DC_9", "--out", dir.path().join("y").to_str().unwrap()]);
    assert!(!o.status.success());
    let o = pqos(&["eval", "--checkpoint", dir.path().join("missing").to_str().unwrap()]);
    assert!(!o.status.success());
}
