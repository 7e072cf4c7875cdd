use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::{tail_means, BoxSummary, EpisodeMetrics, TailMeans};
use super::{AgentsCheckpoint, Simulator};
use crate::config::{Learning, MetaAlgorithm, Mode, SimConfig};
use crate::error::{Error, Result};

pub const CONFIG_FILE: &str = "config.toml";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const AGENTS_FILE: &str = "agents.json";
pub const META_LOG_FILE: &str = "meta_decisions.csv";
pub const TRACE_FILE: &str = "trace.jsonl";

/// Machine-readable outcome of a campaign, written to `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub mode: Mode,
    pub learning: Learning,
    pub meta_algorithm: Option<MetaAlgorithm>,
    pub regime: Option<String>,
    pub p_gb: f64,
    pub p_bg: f64,
    pub latency_threshold_ms: f64,
    pub seed: u64,
    pub episodes: usize,
    /// Means over the final `summary_tail` episodes.
    pub tail: TailMeans,
    /// Distribution of per-episode mean rewards over the same tail.
    pub reward_box: Option<BoxSummary>,
    pub latency_box: Option<BoxSummary>,
}

#[derive(Debug)]
pub struct CampaignOutcome {
    pub dir: PathBuf,
    pub metrics: Vec<EpisodeMetrics>,
    pub summary: CampaignSummary,
}

pub fn summarize_campaign(cfg: &SimConfig, rows: &[EpisodeMetrics]) -> CampaignSummary {
    let tail_start = rows.len().saturating_sub(cfg.summary_tail.max(1));
    let tail = &rows[tail_start..];
    let col = |f: fn(&EpisodeMetrics) -> f64| tail.iter().map(f).collect::<Vec<_>>();
    CampaignSummary {
        mode: cfg.mode,
        learning: cfg.learning,
        meta_algorithm: cfg.meta_algorithm,
        regime: cfg.regime.map(|r| r.name().to_string()),
        p_gb: cfg.p_gb,
        p_bg: cfg.p_bg,
        latency_threshold_ms: cfg.latency_threshold_ms,
        seed: cfg.seed,
        episodes: rows.len(),
        tail: tail_means(rows, cfg.summary_tail),
        reward_box: BoxSummary::from_samples(&col(|r| r.mean_reward)),
        latency_box: BoxSummary::from_samples(&col(|r| r.latency_mean)),
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), value).map_err(|e| Error::format(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::format(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_metrics(path: &Path, rows: &[EpisodeMetrics]) -> Result<()> {
    write_csv(path, rows)
}

pub fn load_metrics(path: &Path) -> Result<Vec<EpisodeMetrics>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| Error::format(path, e))).collect()
}

/// Trains `cfg.episodes` episodes and writes the campaign directory:
/// resolved config, per-episode metrics, summary, final checkpoints, the
/// meta decision log (meta runs) and optionally a per-slot trace.
pub fn run_campaign(cfg: &SimConfig, out: &Path, trace: bool) -> Result<CampaignOutcome> {
    cfg.validate()?;
    create_dir(out)?;
    create_dir(&out.join(CHECKPOINT_DIR))?;
    let cfg_path = out.join(CONFIG_FILE);
    fs::write(&cfg_path, cfg.to_toml_string()).map_err(|e| Error::io(&cfg_path, e))?;

    let mut sim = Simulator::new(cfg.clone())?;
    if trace {
        let p = out.join(TRACE_FILE);
        let f = File::create(&p).map_err(|e| Error::io(&p, e))?;
        sim.set_trace(Box::new(BufWriter::new(f)));
    }
    let metrics = sim.train(cfg.episodes)?;
    write_metrics(&out.join(METRICS_FILE), &metrics)?;
    write_json(&out.join(CHECKPOINT_DIR).join(AGENTS_FILE), &sim.agents.checkpoint())?;
    if cfg.mode == Mode::Meta {
        write_csv(&out.join(META_LOG_FILE), sim.meta_log())?;
    }
    let summary = summarize_campaign(cfg, &metrics);
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(CampaignOutcome {
        dir: out.to_path_buf(),
        metrics,
        summary,
    })
}

/// Restores the agents of a campaign directory and plays greedy episodes.
/// Results go to `eval_metrics.csv` and `eval_summary.json` in the same directory.
pub fn evaluate_checkpoint(dir: &Path, episodes: usize) -> Result<(Vec<EpisodeMetrics>, CampaignSummary)> {
    let cfg = SimConfig::load(&dir.join(CONFIG_FILE))?;
    let ckpt: AgentsCheckpoint = read_json(&dir.join(CHECKPOINT_DIR).join(AGENTS_FILE))?;
    let mut sim = Simulator::new(cfg.clone())?;
    sim.agents.restore(ckpt)?;
    let rows = sim.evaluate(episodes)?;
    write_metrics(&dir.join("eval_metrics.csv"), &rows)?;
    let summary = summarize_campaign(
        &SimConfig {
            summary_tail: episodes,
            ..cfg
        },
        &rows,
    );
    write_json(&dir.join("eval_summary.json"), &summary)?;
    Ok((rows, summary))
}

/// Box-plot statistics of every numeric metric column of a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirSummary {
    pub rows: usize,
    pub columns: BTreeMap<String, BoxSummary>,
}

/// Reads `metrics.csv` under `dir`, writes `boxplots.json` next to it and
/// returns the per-column summaries.
pub fn summarize_dir(dir: &Path) -> Result<DirSummary> {
    let path = dir.join(METRICS_FILE);
    let rows = load_metrics(&path)?;
    if rows.is_empty() {
        return Err(Error::format(&path, "no metric rows"));
    }
    let cols: [(&str, fn(&EpisodeMetrics) -> Option<f64>); 11] = [
        ("mean_reward", |r| Some(r.mean_reward)),
        ("mean_ca_reward", |r| r.mean_ca_reward),
        ("mean_sa_reward", |r| r.mean_sa_reward),
        ("latency_mean", |r| Some(r.latency_mean)),
        ("latency_median", |r| Some(r.latency_median)),
        ("mean_map", |r| Some(r.mean_map)),
        ("deadline_hit_prob", |r| Some(r.deadline_hit_prob)),
        ("share_c1", |r| Some(r.share_c1)),
        ("share_c2", |r| Some(r.share_c2)),
        ("share_c3", |r| Some(r.share_c3)),
        ("ics_share", |r| r.ics_share),
    ];
    let mut columns = BTreeMap::new();
    for (name, f) in cols {
        let v: Vec<f64> = rows.iter().filter_map(f).collect();
        if let Some(b) = BoxSummary::from_samples(&v) {
            columns.insert(name.to_string(), b);
        }
    }
    let summary = DirSummary {
        rows: rows.len(),
        columns,
    };
    write_json(&dir.join("boxplots.json"), &summary)?;
    Ok(summary)
}
