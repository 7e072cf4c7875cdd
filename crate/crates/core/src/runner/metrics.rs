use serde::{Deserialize, Serialize};

/// Quantile with linear interpolation between order statistics
/// (position `p * (n - 1)` in the sorted sample).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// The statistics a box plot draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxSummary {
    pub n: usize,
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// Most extreme samples within 1.5 IQR of the box, never inside it.
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: usize,
}

impl BoxSummary {
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        let mut s: Vec<f64> = samples.iter().copied().filter(|x| x.is_finite()).collect();
        if s.is_empty() {
            return None;
        }
        s.sort_by(f64::total_cmp);
        let q1 = quantile_sorted(&s, 0.25);
        let q3 = quantile_sorted(&s, 0.75);
        let iqr = q3 - q1;
        let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let whisker_low = s.iter().copied().find(|&x| x >= lo_fence).unwrap_or(s[0]).min(q1);
        let whisker_high = s.iter().rev().copied().find(|&x| x <= hi_fence).unwrap_or(s[s.len() - 1]).max(q3);
        Some(Self {
            n: s.len(),
            mean: s.iter().sum::<f64>() / s.len() as f64,
            min: s[0],
            q1,
            median: quantile_sorted(&s, 0.5),
            q3,
            max: s[s.len() - 1],
            whisker_low,
            whisker_high,
            outliers: s.iter().filter(|&&x| x < lo_fence || x > hi_fence).count(),
        })
    }
}

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub training: bool,
    pub slots: u64,
    /// The slot cap was hit before every UE completed its steps.
    pub truncated: bool,
    pub generated: u64,
    pub receptions: u64,
    /// Mean per-reception compression reward in its independent form
    /// (mAP if on time, `-latency/100` otherwise); also the meta reward.
    pub mean_reward: f64,
    /// Mean compression-agent reward as used for training.
    pub mean_ca_reward: Option<f64>,
    pub mean_sa_reward: Option<f64>,
    pub latency_mean: f64,
    pub latency_std: f64,
    pub latency_min: f64,
    pub latency_q1: f64,
    pub latency_median: f64,
    pub latency_q3: f64,
    pub latency_max: f64,
    pub latency_whisker_low: f64,
    pub latency_whisker_high: f64,
    pub mean_map: f64,
    pub deadline_hit_prob: f64,
    /// Share of compression decisions (as applied) per configuration.
    pub share_c1: f64,
    pub share_c2: f64,
    pub share_c3: f64,
    pub decisions: u64,
    /// Fraction of meta windows spent in centralized ICS.
    pub ics_share: Option<f64>,
    pub meta_windows: Option<u64>,
    pub ca_loss: Option<f64>,
    pub ppo_updates: u64,
}

/// Per-episode accumulator behind [`EpisodeMetrics`].
#[derive(Debug, Default)]
pub(crate) struct EpisodeAccumulator {
    pub latencies: Vec<f64>,
    pub reward_sum: f64,
    pub ca_reward: Option<(f64, u64)>,
    pub sa_reward: Option<(f64, u64)>,
    pub map_sum: f64,
    pub hits: u64,
    pub labels: [u64; 3],
    pub generated: u64,
    pub ca_loss: (f64, u64),
    pub ics_windows: u64,
    pub windows: u64,
    pub ppo_updates: u64,
}

fn mean_of(acc: Option<(f64, u64)>) -> Option<f64> {
    acc.filter(|&(_, n)| n > 0).map(|(s, n)| s / n as f64)
}

impl EpisodeAccumulator {
    pub fn finish(self, episode: usize, training: bool, slots: u64, truncated: bool, meta: bool) -> EpisodeMetrics {
        let n = self.latencies.len();
        let nf = n.max(1) as f64;
        let bx = BoxSummary::from_samples(&self.latencies);
        let mean = self.latencies.iter().sum::<f64>() / nf;
        let std = (self.latencies.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / nf).sqrt();
        let get = |f: fn(&BoxSummary) -> f64| bx.as_ref().map(f).unwrap_or(f64::NAN);
        let decisions: u64 = self.labels.iter().sum();
        let share = |i: usize| self.labels[i] as f64 / decisions.max(1) as f64;
        EpisodeMetrics {
            episode,
            training,
            slots,
            truncated,
            generated: self.generated,
            receptions: n as u64,
            mean_reward: if n == 0 { f64::NAN } else { self.reward_sum / nf },
            mean_ca_reward: mean_of(self.ca_reward),
            mean_sa_reward: mean_of(self.sa_reward),
            latency_mean: if n == 0 { f64::NAN } else { mean },
            latency_std: if n == 0 { f64::NAN } else { std },
            latency_min: get(|b| b.min),
            latency_q1: get(|b| b.q1),
            latency_median: get(|b| b.median),
            latency_q3: get(|b| b.q3),
            latency_max: get(|b| b.max),
            latency_whisker_low: get(|b| b.whisker_low),
            latency_whisker_high: get(|b| b.whisker_high),
            mean_map: if n == 0 { f64::NAN } else { self.map_sum / nf },
            deadline_hit_prob: if n == 0 { 0.0 } else { self.hits as f64 / nf },
            share_c1: share(0),
            share_c2: share(1),
            share_c3: share(2),
            decisions,
            ics_share: meta.then(|| self.ics_windows as f64 / self.windows.max(1) as f64),
            meta_windows: meta.then_some(self.windows),
            ca_loss: mean_of(Some(self.ca_loss)),
            ppo_updates: self.ppo_updates,
        }
    }
}

/// Means of the headline metrics over the last `tail` rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailMeans {
    pub episodes: usize,
    pub mean_reward: f64,
    pub latency_mean: f64,
    pub latency_median: f64,
    pub mean_map: f64,
    pub deadline_hit_prob: f64,
    pub share_c1: f64,
    pub share_c2: f64,
    pub share_c3: f64,
    pub ics_share: Option<f64>,
}

pub fn tail_means(rows: &[EpisodeMetrics], tail: usize) -> TailMeans {
    let start = rows.len().saturating_sub(tail.max(1));
    let tail_rows = &rows[start..];
    let mean = |f: &dyn Fn(&EpisodeMetrics) -> f64| {
        let v: Vec<f64> = tail_rows.iter().map(f).filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            f64::NAN
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let ics: Vec<f64> = tail_rows.iter().filter_map(|r| r.ics_share).collect();
    TailMeans {
        episodes: tail_rows.len(),
        mean_reward: mean(&|r| r.mean_reward),
        latency_mean: mean(&|r| r.latency_mean),
        latency_median: mean(&|r| r.latency_median),
        mean_map: mean(&|r| r.mean_map),
        deadline_hit_prob: mean(&|r| r.deadline_hit_prob),
        share_c1: mean(&|r| r.share_c1),
        share_c2: mean(&|r| r.share_c2),
        share_c3: mean(&|r| r.share_c3),
        ics_share: (!ics.is_empty()).then(|| ics.iter().sum::<f64>() / ics.len() as f64),
    }
}
