//! Scheduling agent: a shared PPO actor/critic choosing per-UE priority
//! levels, and the allocators that turn priorities into OFDM-symbol grants.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent_ca::Normalizer;
use crate::config::{Mode, SimConfig, TieBreak};
use crate::error::{Error, Result};
use crate::nn::{argmax, softmax, AdamState, Mlp};

pub const SA_OBS_DIM: usize = 6;

/// Normalized local observation of one scheduling agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaObservation(pub [f64; SA_OBS_DIM]);

/// Raw quantities behind an [`SaObservation`], all averaged over the
/// agent's rolling window except `symbols_needed` and `delivered_bits`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaMeasurements {
    pub mean_sinr_db: f64,
    pub mean_mcs: f64,
    pub mean_buffer_bits: f64,
    pub symbols_needed: usize,
    pub mean_latency_ms: f64,
    /// Application bits delivered since the previous decision.
    pub delivered_bits: f64,
}

pub fn build_sa_observation(m: &SaMeasurements, norm: &Normalizer, frame_bits: f64) -> SaObservation {
    let delivered = if frame_bits > 0.0 {
        (m.delivered_bits / frame_bits).clamp(0.0, 1.0)
    } else {
        0.0
    };
    SaObservation([
        norm.sinr(m.mean_sinr_db),
        norm.mcs(m.mean_mcs),
        norm.occupancy(m.mean_buffer_bits),
        norm.symbols(m.symbols_needed as f64),
        norm.latency(m.mean_latency_ms),
        delivered,
    ])
}

/// Scheduling-agent reward: 1 when the deadline is met, otherwise a penalty
/// proportional to the violation (scaled by `m_a / k` in CCS).
pub fn reward_sa(latency_ms: f64, tau_ms: f64, map_value: f64, k: usize, mode: Mode) -> f64 {
    if latency_ms <= tau_ms {
        1.0
    } else if mode == Mode::Ccs {
        -((latency_ms - tau_ms) * map_value) / (100.0 * k as f64)
    } else {
        -(latency_ms - tau_ms) / 100.0
    }
}

/// Generalized advantage estimates by backward recursion.
pub fn gae(rewards: &[f64], values: &[f64], bootstrap_value: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    assert_eq!(rewards.len(), values.len());
    let mut adv = vec![0.0; rewards.len()];
    let mut running = 0.0;
    for t in (0..rewards.len()).rev() {
        let next_v = if t + 1 < values.len() { values[t + 1] } else { bootstrap_value };
        let delta = rewards[t] + gamma * next_v - values[t];
        running = delta + gamma * lambda * running;
        adv[t] = running;
    }
    adv
}

/// One collected decision of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct SaStep {
    pub obs: [f64; SA_OBS_DIM],
    pub action: usize,
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    /// Critic value of the state that followed this decision.
    pub next_value: f64,
    /// Whether the following step in the stored sequence is this step's
    /// actual successor (false across episode boundaries).
    pub continues: bool,
}

/// Advantages and returns for one agent's sequence, resetting the
/// recursion wherever the sequence is not contiguous.
pub fn advantages_and_returns(steps: &[SaStep], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let mut adv = Vec::with_capacity(steps.len());
    let mut start = 0;
    for end in 0..steps.len() {
        let last = end + 1 == steps.len() || !steps[end].continues;
        if last {
            let seg = &steps[start..=end];
            let r: Vec<f64> = seg.iter().map(|s| s.reward).collect();
            let v: Vec<f64> = seg.iter().map(|s| s.value).collect();
            adv.extend(gae(&r, &v, seg[seg.len() - 1].next_value, gamma, lambda));
            start = end + 1;
        }
    }
    let ret = adv.iter().zip(steps).map(|(a, s)| a + s.value).collect();
    (adv, ret)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoParams {
    pub clip: f64,
    pub c1: f64,
    pub c2: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub learning_rate: f64,
    pub normalize_advantages: bool,
}

impl PpoParams {
    pub fn from_config(cfg: &SimConfig) -> Self {
        Self {
            clip: cfg.ppo_clip,
            c1: cfg.ppo_c1,
            c2: cfg.ppo_c2,
            epochs: cfg.ppo_epochs,
            minibatch: cfg.minibatch,
            gamma: cfg.gamma,
            lambda: cfg.gae_lambda,
            learning_rate: cfg.learning_rate,
            normalize_advantages: cfg.advantage_normalization,
        }
    }
}

/// Averages reported by one [`PpoModel::update`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PpoDiagnostics {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone)]
pub struct PpoModel {
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_opt: AdamState,
    pub critic_opt: AdamState,
    pub params: PpoParams,
    pub updates: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoCheckpoint {
    pub actor: Mlp,
    pub critic: Mlp,
    pub updates: u64,
}

pub fn categorical_entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

fn sample_categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

impl PpoModel {
    pub fn new<R: Rng + ?Sized>(hidden: &[usize], n_actions: usize, params: PpoParams, rng: &mut R) -> Self {
        let mut a = vec![SA_OBS_DIM];
        a.extend_from_slice(hidden);
        let mut c = a.clone();
        a.push(n_actions);
        c.push(1);
        let actor = Mlp::new(&a, rng);
        let critic = Mlp::new(&c, rng);
        Self {
            actor_opt: AdamState::new(actor.parameter_count(), params.learning_rate),
            critic_opt: AdamState::new(critic.parameter_count(), params.learning_rate),
            actor,
            critic,
            params,
            updates: 0,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.actor.parameter_count() + self.critic.parameter_count()
    }

    pub fn policy(&self, obs: &[f64]) -> Vec<f64> {
        softmax(&self.actor.forward(obs).expect("observation width matches actor"))
    }

    pub fn value(&self, obs: &[f64]) -> f64 {
        self.critic.forward(obs).expect("observation width matches critic")[0]
    }

    /// Samples an action; returns `(action, log-probability, value)`.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> (usize, f64, f64) {
        let p = self.policy(obs);
        let a = sample_categorical(&p, rng);
        (a, p[a].ln(), self.value(obs))
    }

    pub fn greedy(&self, obs: &[f64]) -> usize {
        argmax(&self.actor.forward(obs).expect("observation width matches actor"))
    }

    /// Clipped-surrogate update over the concatenated trajectories of all
    /// agents: `epochs` passes of shuffled minibatches, one Adam step each.
    pub fn update<R: Rng + ?Sized>(&mut self, trajectories: &[Vec<SaStep>], rng: &mut R) -> Result<PpoDiagnostics> {
        let mut steps: Vec<&SaStep> = Vec::new();
        let mut adv = Vec::new();
        let mut ret = Vec::new();
        for traj in trajectories {
            let (a, r) = advantages_and_returns(traj, self.params.gamma, self.params.lambda);
            adv.extend(a);
            ret.extend(r);
            steps.extend(traj.iter());
        }
        if steps.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if self.params.normalize_advantages && adv.len() > 1 {
            let n = adv.len() as f64;
            let mean = adv.iter().sum::<f64>() / n;
            let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
            for a in &mut adv {
                *a = (*a - mean) / (std + 1e-8);
            }
        }
        let batch = PpoBatch {
            obs: steps.iter().flat_map(|s| s.obs).collect(),
            actions: steps.iter().map(|s| s.action).collect(),
            old_log_probs: steps.iter().map(|s| s.log_prob).collect(),
            advantages: adv,
            returns: ret,
        };
        self.update_batch(&batch, rng)
    }

    /// Optimizes on precomputed advantages and returns.
    pub fn update_batch<R: Rng + ?Sized>(&mut self, batch: &PpoBatch, rng: &mut R) -> Result<PpoDiagnostics> {
        let n = batch.actions.len();
        if n == 0 {
            return Err(Error::EmptyBatch);
        }
        let mut order: Vec<usize> = (0..n).collect();
        let mut diag = PpoDiagnostics::default();
        let mut count = 0usize;
        for _ in 0..self.params.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(self.params.minibatch.max(1)) {
                let d = self.minibatch_step(batch, chunk);
                diag.policy_loss += d.policy_loss;
                diag.value_loss += d.value_loss;
                diag.entropy += d.entropy;
                count += 1;
            }
        }
        let c = count as f64;
        diag.policy_loss /= c;
        diag.value_loss /= c;
        diag.entropy /= c;
        self.updates += 1;
        Ok(diag)
    }

    fn minibatch_step(&mut self, batch: &PpoBatch, idx: &[usize]) -> PpoDiagnostics {
        let (grads_a, grads_c, d) = self.minibatch_gradients(batch, idx);
        self.actor_opt.step(self.actor.params_mut(), &grads_a);
        self.critic_opt.step(self.critic.params_mut(), &grads_c);
        d
    }

    /// Gradients of the loss `-(surrogate) + c1 * MSE - c2 * entropy`.
    pub fn minibatch_gradients(&self, batch: &PpoBatch, idx: &[usize]) -> (Vec<f64>, Vec<f64>, PpoDiagnostics) {
        let m = idx.len();
        let mf = m as f64;
        let na = self.actor.output_dim();
        let mut obs = Vec::with_capacity(m * SA_OBS_DIM);
        for &i in idx {
            obs.extend_from_slice(&batch.obs[i * SA_OBS_DIM..(i + 1) * SA_OBS_DIM]);
        }
        let eps = self.params.clip;
        let at = self.actor.forward_batch(&obs, m);
        let ct = self.critic.forward_batch(&obs, m);
        let mut g_logits = vec![0.0; m * na];
        let mut g_value = vec![0.0; m];
        let mut d = PpoDiagnostics::default();
        for (b, &i) in idx.iter().enumerate() {
            let logits = &at.output()[b * na..(b + 1) * na];
            let p = softmax(logits);
            let a = batch.actions[i];
            let adv = batch.advantages[i];
            let ratio = (p[a].ln() - batch.old_log_probs[i]).exp();
            let unclipped = ratio * adv;
            let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
            // derivative of the surrogate w.r.t. log pi(a)
            let ds = if unclipped <= clipped { ratio * adv } else { 0.0 };
            d.policy_loss -= unclipped.min(clipped) / mf;
            let h = categorical_entropy(&p);
            d.entropy += h / mf;
            for j in 0..na {
                let dlogp = if j == a { 1.0 } else { 0.0 } - p[j];
                let dh = -p[j] * (p[j].max(f64::MIN_POSITIVE).ln() + h);
                g_logits[b * na + j] = (-ds * dlogp - self.params.c2 * dh) / mf;
            }
            let err = ct.output()[b] - batch.returns[i];
            d.value_loss += err * err / mf;
            g_value[b] = 2.0 * self.params.c1 * err / mf;
        }
        let mut ga = vec![0.0; self.actor.parameter_count()];
        let mut gc = vec![0.0; self.critic.parameter_count()];
        self.actor.backward(&at, &g_logits, &mut ga);
        self.critic.backward(&ct, &g_value, &mut gc);
        (ga, gc, d)
    }

    pub fn checkpoint(&self) -> PpoCheckpoint {
        PpoCheckpoint {
            actor: self.actor.clone(),
            critic: self.critic.clone(),
            updates: self.updates,
        }
    }

    pub fn restore(&mut self, ckpt: PpoCheckpoint) -> Result<()> {
        if !ckpt.actor.same_architecture(&self.actor) || !ckpt.critic.same_architecture(&self.critic) {
            return Err(Error::Shape("PPO checkpoint architecture mismatch".into()));
        }
        self.actor = ckpt.actor;
        self.critic = ckpt.critic;
        self.updates = ckpt.updates;
        Ok(())
    }
}

/// Flattened training batch for [`PpoModel::update_batch`].
#[derive(Debug, Clone, PartialEq)]
pub struct PpoBatch {
    pub obs: Vec<f64>,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

/// UE service order: decreasing priority, equal priorities in rotated
/// index order starting from `rotation_offset`.
pub fn service_order(priorities: &[usize], rotation_offset: usize, tie_break: TieBreak) -> Vec<usize> {
    let n = priorities.len();
    let mut order: Vec<usize> = (0..n).collect();
    let rot = match tie_break {
        TieBreak::RoundRobin if n > 0 => rotation_offset % n,
        _ => 0,
    };
    order.sort_by_key(|&u| (std::cmp::Reverse(priorities[u]), (u + n - rot) % n.max(1)));
    order
}

/// Grants symbols to UEs in decreasing priority order, each receiving
/// `min(demand, remaining)`. Leftover symbols stay unallocated.
pub fn greedy_allocate(
    priorities: &[usize],
    demands: &[usize],
    symbols: usize,
    rotation_offset: usize,
    tie_break: TieBreak,
) -> Vec<usize> {
    assert_eq!(priorities.len(), demands.len());
    let mut grants = vec![0; demands.len()];
    let mut left = symbols;
    for u in service_order(priorities, rotation_offset, tie_break) {
        let g = demands[u].min(left);
        grants[u] = g;
        left -= g;
    }
    grants
}

/// Priority-free fallback: symbols are dealt one at a time, round-robin
/// from `rotation_offset`, to UEs whose demand is not yet met.
pub fn equal_share_allocate(demands: &[usize], symbols: usize, rotation_offset: usize) -> Vec<usize> {
    let n = demands.len();
    let mut grants = vec![0; n];
    if n == 0 {
        return grants;
    }
    let mut left = symbols;
    while left > 0 {
        let mut progressed = false;
        for i in 0..n {
            let u = (rotation_offset + i) % n;
            if left > 0 && grants[u] < demands[u] {
                grants[u] += 1;
                left -= 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    grants
}
