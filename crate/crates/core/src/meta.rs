//! Meta agent choosing a global SINR threshold that switches the network
//! between centralized ICS and federated C operation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::agent_ca::{DdqlAgent, DdqlCheckpoint, DdqlParams, EpsilonSchedule, Normalizer, Transition};
use crate::config::{MetaAlgorithm, SimConfig};
use crate::error::{Error, Result};
use crate::nn::{argmax, AdamState, Mlp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MetaMode {
    CentralizedIcs,
    FederatedC,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaDecision {
    pub gamma_db: f64,
    pub resulting_mode: MetaMode,
}

/// Centralized ICS if the network mean SINR reaches the threshold
/// (inclusive), federated C otherwise.
pub fn apply_threshold(gamma_db: f64, network_mean_sinr_db: f64) -> MetaDecision {
    let resulting_mode = if network_mean_sinr_db >= gamma_db {
        MetaMode::CentralizedIcs
    } else {
        MetaMode::FederatedC
    };
    MetaDecision {
        gamma_db,
        resulting_mode,
    }
}

/// Mean compression-agent reward over all UEs and receptions in the window.
pub fn meta_reward(ca_rewards: &[f64]) -> f64 {
    if ca_rewards.is_empty() {
        0.0
    } else {
        ca_rewards.iter().sum::<f64>() / ca_rewards.len() as f64
    }
}

/// Constant-step-size value update for non-stationary bandits.
pub fn eg_update(q: &mut [f64], action: usize, reward: f64, alpha: f64) {
    q[action] += alpha * (reward - q[action]);
}

pub fn eg_select<R: Rng + ?Sized>(q: &[f64], epsilon: f64, rng: &mut R) -> usize {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        rng.random_range(0..q.len())
    } else {
        argmax(q)
    }
}

/// Posterior-sampling scale `R_M * sqrt(9 d ln(t / rho))`, with the
/// logarithm clamped at zero for `t < rho`.
pub fn lts_noise_scale(t: f64, d: usize, r_m: f64, rho: f64) -> f64 {
    r_m * (9.0 * d as f64 * (t / rho).ln().max(0.0)).sqrt()
}

/// Per-arm Bayesian linear regression state.
#[derive(Debug, Clone, PartialEq)]
pub struct LtsArm {
    pub phi: DMatrix<f64>,
    pub b: DVector<f64>,
    pub theta: DVector<f64>,
    pub t: u64,
}

impl LtsArm {
    pub fn new(d: usize) -> Self {
        Self {
            phi: DMatrix::identity(d, d),
            b: DVector::zeros(d),
            theta: DVector::zeros(d),
            t: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn update(&mut self, x: &[f64], reward: f64) {
        let x = DVector::from_column_slice(x);
        self.phi.ger(1.0, &x, &x, 1.0);
        self.b.axpy(reward, &x, 1.0);
        self.t += 1;
        self.theta = self
            .phi
            .clone()
            .cholesky()
            .expect("identity plus outer products is positive definite")
            .solve(&self.b);
    }

    /// Draw from `Normal(theta, v^2 Phi^-1)`.
    pub fn sample<R: Rng + ?Sized>(&self, v: f64, rng: &mut R) -> DVector<f64> {
        if v == 0.0 {
            return self.theta.clone();
        }
        let d = self.dim();
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let chol = self.phi.clone().cholesky().expect("positive definite");
        // Phi = L L^T, so L^-T z has covariance Phi^-1
        let y = chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .expect("triangular factor is nonsingular");
        &self.theta + y * v
    }

    pub fn mean_score(&self, x: &[f64]) -> f64 {
        self.theta.iter().zip(x).map(|(t, x)| t * x).sum()
    }

    fn to_saved(&self) -> SavedArm {
        SavedArm {
            phi: self.phi.as_slice().to_vec(),
            b: self.b.as_slice().to_vec(),
            t: self.t,
        }
    }

    fn from_saved(s: &SavedArm) -> Result<Self> {
        let d = s.b.len();
        if s.phi.len() != d * d {
            return Err(Error::Shape("arm posterior matrix is not square".into()));
        }
        let phi = DMatrix::from_column_slice(d, d, &s.phi);
        let b = DVector::from_column_slice(&s.b);
        let theta = phi
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Shape("arm posterior matrix is not positive definite".into()))?
            .solve(&b);
        Ok(Self { phi, b, theta, t: s.t })
    }
}

/// Thompson draw per arm, then argmax of `x^T theta~`.
pub fn lts_select<R: Rng + ?Sized>(arms: &[LtsArm], x: &[f64], v: f64, rng: &mut R) -> usize {
    let scores: Vec<f64> = arms
        .iter()
        .map(|a| a.sample(v, rng).iter().zip(x).map(|(t, x)| t * x).sum())
        .collect();
    argmax(&scores)
}

/// Per-UE sums over the receptions of the current window.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaWindow {
    sinr: Vec<f64>,
    reward: Vec<f64>,
    latency: Vec<f64>,
    map: Vec<f64>,
    count: Vec<usize>,
}

impl MetaWindow {
    pub fn new(n_ues: usize) -> Self {
        Self {
            sinr: vec![0.0; n_ues],
            reward: vec![0.0; n_ues],
            latency: vec![0.0; n_ues],
            map: vec![0.0; n_ues],
            count: vec![0; n_ues],
        }
    }

    pub fn record(&mut self, ue: usize, sinr_db: f64, ca_reward: f64, latency_ms: f64, map_value: f64) {
        self.sinr[ue] += sinr_db;
        self.reward[ue] += ca_reward;
        self.latency[ue] += latency_ms;
        self.map[ue] += map_value;
        self.count[ue] += 1;
    }

    /// Every UE has at least `w` receptions.
    pub fn is_complete(&self, w: usize) -> bool {
        self.count.iter().all(|&c| c >= w)
    }

    fn mean(v: &[f64], c: &[usize]) -> f64 {
        let n: usize = c.iter().sum();
        if n == 0 {
            0.0
        } else {
            v.iter().sum::<f64>() / n as f64
        }
    }

    pub fn mean_sinr_db(&self) -> f64 {
        Self::mean(&self.sinr, &self.count)
    }

    pub fn meta_reward(&self) -> f64 {
        Self::mean(&self.reward, &self.count)
    }

    /// Per UE: SINR, CA reward, latency and mAP means, each mapped to [0, 1].
    pub fn context(&self, norm: &Normalizer) -> Vec<f64> {
        let mut x = Vec::with_capacity(4 * self.count.len());
        for u in 0..self.count.len() {
            let c = self.count[u].max(1) as f64;
            x.push(norm.sinr(self.sinr[u] / c));
            x.push((self.reward[u] / c).clamp(-1.0, 1.0) * 0.5 + 0.5);
            x.push(norm.latency(self.latency[u] / c));
            x.push((self.map[u] / c).clamp(0.0, 1.0));
        }
        x
    }

    pub fn reset(&mut self) {
        let n = self.count.len();
        *self = Self::new(n);
    }
}

/// Linear Thompson sampling on learned features.
#[derive(Debug, Clone)]
pub struct Nlts {
    pub extractor: Mlp,
    pub optimizer: AdamState,
    pub arms: Vec<LtsArm>,
    pub history: Vec<(Vec<f64>, usize, f64)>,
    pub history_cap: usize,
    pub retrain_every: u64,
    pub train_steps: usize,
    pub minibatch: usize,
    pub steps: u64,
}

impl Nlts {
    pub fn new(extractor: Mlp, cfg: &SimConfig) -> Self {
        let d = extractor.sizes()[extractor.sizes().len() - 2];
        let n_arms = extractor.output_dim();
        Self {
            optimizer: AdamState::new(extractor.parameter_count(), cfg.learning_rate),
            extractor,
            arms: (0..n_arms).map(|_| LtsArm::new(d)).collect(),
            history: Vec::new(),
            history_cap: cfg.nlts_history,
            retrain_every: cfg.t_nlts as u64,
            train_steps: cfg.nlts_train_steps,
            minibatch: cfg.minibatch,
            steps: 0,
        }
    }

    pub fn features(&self, x: &[f64]) -> Vec<f64> {
        self.extractor.forward_batch(x, 1).last_hidden().to_vec()
    }

    pub fn select<R: Rng + ?Sized>(&self, x: &[f64], v: f64, rng: &mut R) -> usize {
        lts_select(&self.arms, &self.features(x), v, rng)
    }

    pub fn observe<R: Rng + ?Sized>(&mut self, x: &[f64], action: usize, reward: f64, rng: &mut R) {
        let phi = self.features(x);
        self.arms[action].update(&phi, reward);
        if self.history.len() == self.history_cap {
            self.history.remove(0);
        }
        self.history.push((x.to_vec(), action, reward));
        self.steps += 1;
        if self.steps.is_multiple_of(self.retrain_every) {
            self.retrain(rng);
            self.rebuild();
        }
    }

    /// Regresses observed rewards on the head of the taken arm.
    pub fn retrain<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        if self.history.is_empty() {
            return;
        }
        let d = self.extractor.input_dim();
        let na = self.extractor.output_dim();
        for _ in 0..self.train_steps {
            let m = self.minibatch.min(self.history.len());
            let idx: Vec<usize> = (0..m).map(|_| rng.random_range(0..self.history.len())).collect();
            let mut xs = Vec::with_capacity(m * d);
            for &i in &idx {
                xs.extend_from_slice(&self.history[i].0);
            }
            let tape = self.extractor.forward_batch(&xs, m);
            let mut g = vec![0.0; m * na];
            for (b, &i) in idx.iter().enumerate() {
                let (_, a, r) = self.history[i];
                g[b * na + a] = 2.0 * (tape.output()[b * na + a] - r) / m as f64;
            }
            let mut grads = vec![0.0; self.extractor.parameter_count()];
            self.extractor.backward(&tape, &g, &mut grads);
            self.optimizer.step(self.extractor.params_mut(), &grads);
        }
    }

    /// Replays the history through the current extractor into fresh posteriors.
    pub fn rebuild(&mut self) {
        let d = self.arms[0].dim();
        for a in &mut self.arms {
            *a = LtsArm::new(d);
        }
        for i in 0..self.history.len() {
            let phi = self.features(&self.history[i].0);
            let (_, a, r) = self.history[i];
            self.arms[a].update(&phi, r);
        }
    }
}

#[derive(Debug, Clone)]
pub enum MetaPolicy {
    Random,
    Eg { q: Vec<f64>, epsilon: f64, alpha: f64 },
    Lts { arms: Vec<LtsArm> },
    Nlts(Box<Nlts>),
    Ddql(Box<DdqlAgent>),
}

/// Entry of the per-window decision log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaLogEntry {
    pub episode: usize,
    pub window: u64,
    pub gamma_db: f64,
    pub mean_sinr_db: f64,
    pub mode: MetaMode,
    /// Reward credited to the previous decision.
    pub meta_reward: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct MetaAgent {
    pub algorithm: MetaAlgorithm,
    pub policy: MetaPolicy,
    pub thresholds_db: Vec<f64>,
    pub lts_rm: f64,
    pub lts_rho: f64,
    pub windows: u64,
    last: Option<(Vec<f64>, usize)>,
}

/// Serializable state of a [`MetaAgent`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm")]
pub enum MetaCheckpoint {
    R,
    Eg { q: Vec<f64> },
    Lts { arms: Vec<SavedArm> },
    Nlts { extractor: Mlp, history: Vec<(Vec<f64>, usize, f64)>, steps: u64 },
    Ddql { agent: DdqlCheckpoint },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedArm {
    /// Column-major d x d.
    pub phi: Vec<f64>,
    pub b: Vec<f64>,
    pub t: u64,
}

impl MetaAgent {
    /// `decision_horizon` is the expected number of windows in training,
    /// used for the DDQL exploration schedule.
    pub fn new<R: Rng + ?Sized>(
        algorithm: MetaAlgorithm,
        cfg: &SimConfig,
        decision_horizon: u64,
        rng: &mut R,
    ) -> Self {
        let n_arms = cfg.meta_thresholds_db.len();
        let d = 4 * cfg.n_ues;
        let mut sizes = vec![d];
        sizes.extend_from_slice(&cfg.meta_hidden);
        sizes.push(n_arms);
        let policy = match algorithm {
            MetaAlgorithm::R => MetaPolicy::Random,
            MetaAlgorithm::Eg => MetaPolicy::Eg {
                q: vec![0.0; n_arms],
                epsilon: cfg.eg_epsilon,
                alpha: cfg.eg_alpha,
            },
            MetaAlgorithm::Lts => MetaPolicy::Lts {
                arms: (0..n_arms).map(|_| LtsArm::new(d)).collect(),
            },
            MetaAlgorithm::Nlts => MetaPolicy::Nlts(Box::new(Nlts::new(Mlp::new(&sizes, rng), cfg))),
            MetaAlgorithm::Ddql => MetaPolicy::Ddql(Box::new(DdqlAgent::new(
                &sizes,
                DdqlParams::from_config(cfg),
                EpsilonSchedule::over_horizon(cfg, decision_horizon),
                rng,
            ))),
        };
        Self {
            algorithm,
            policy,
            thresholds_db: cfg.meta_thresholds_db.clone(),
            lts_rm: cfg.lts_rm,
            lts_rho: cfg.lts_rho,
            windows: 0,
            last: None,
        }
    }

    /// Forgets the pending decision (e.g. at an episode boundary).
    pub fn end_episode(&mut self) {
        self.last = None;
    }

    /// Chooses an arm index for context `x`.
    pub fn select<R: Rng + ?Sized>(&mut self, x: &[f64], rng: &mut R, training: bool) -> usize {
        let t = (self.windows + 1) as f64;
        let (r_m, rho) = (self.lts_rm, self.lts_rho);
        let noise = |d: usize| if training { lts_noise_scale(t, d, r_m, rho) } else { 0.0 };
        match &mut self.policy {
            MetaPolicy::Random => rng.random_range(0..self.thresholds_db.len()),
            MetaPolicy::Eg { q, epsilon, .. } => eg_select(q, if training { *epsilon } else { 0.0 }, rng),
            MetaPolicy::Lts { arms } => lts_select(arms, x, noise(x.len()), rng),
            MetaPolicy::Nlts(n) => n.select(x, noise(n.arms[0].dim()), rng),
            MetaPolicy::Ddql(agent) => agent.select_action(x, rng, training),
        }
    }

    /// Window boundary: credits `reward` to the pending decision, picks a new
    /// threshold for `x`, and applies it to the window's mean SINR.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        x: &[f64],
        reward: f64,
        mean_sinr_db: f64,
        rng: &mut R,
        training: bool,
    ) -> (usize, MetaDecision, Option<f64>) {
        let credited = self.last.take().map(|(px, pa)| {
            if training {
                self.learn(&px, pa, reward, x, rng);
            }
            reward
        });
        let a = self.select(x, rng, training);
        self.windows += 1;
        self.last = Some((x.to_vec(), a));
        (a, apply_threshold(self.thresholds_db[a], mean_sinr_db), credited)
    }

    fn learn<R: Rng + ?Sized>(&mut self, x: &[f64], a: usize, reward: f64, next: &[f64], rng: &mut R) {
        match &mut self.policy {
            MetaPolicy::Random => {}
            MetaPolicy::Eg { q, alpha, .. } => eg_update(q, a, reward, *alpha),
            MetaPolicy::Lts { arms } => arms[a].update(x, reward),
            MetaPolicy::Nlts(n) => n.observe(x, a, reward, rng),
            MetaPolicy::Ddql(agent) => {
                agent.remember(Transition {
                    state: x.to_vec(),
                    action: a,
                    reward,
                    next_state: next.to_vec(),
                    done: false,
                });
                if agent.can_update() {
                    agent.update(rng).expect("buffer holds a minibatch");
                }
            }
        }
    }

    pub fn checkpoint(&self) -> MetaCheckpoint {
        match &self.policy {
            MetaPolicy::Random => MetaCheckpoint::R,
            MetaPolicy::Eg { q, .. } => MetaCheckpoint::Eg { q: q.clone() },
            MetaPolicy::Lts { arms } => MetaCheckpoint::Lts {
                arms: arms.iter().map(LtsArm::to_saved).collect(),
            },
            MetaPolicy::Nlts(n) => MetaCheckpoint::Nlts {
                extractor: n.extractor.clone(),
                history: n.history.clone(),
                steps: n.steps,
            },
            MetaPolicy::Ddql(agent) => MetaCheckpoint::Ddql {
                agent: agent.checkpoint(),
            },
        }
    }

    pub fn restore(&mut self, ckpt: MetaCheckpoint) -> Result<()> {
        match (&mut self.policy, ckpt) {
            (MetaPolicy::Random, MetaCheckpoint::R) => {}
            (MetaPolicy::Eg { q, .. }, MetaCheckpoint::Eg { q: saved }) if saved.len() == q.len() => *q = saved,
            (MetaPolicy::Lts { arms }, MetaCheckpoint::Lts { arms: saved }) if saved.len() == arms.len() => {
                *arms = saved.iter().map(LtsArm::from_saved).collect::<Result<_>>()?;
            }
            (MetaPolicy::Nlts(n), MetaCheckpoint::Nlts { extractor, history, steps }) => {
                if !extractor.same_architecture(&n.extractor) {
                    return Err(Error::AgentMismatch("NLTS extractor architecture differs".into()));
                }
                n.extractor = extractor;
                n.history = history;
                n.steps = steps;
                n.rebuild();
            }
            (MetaPolicy::Ddql(agent), MetaCheckpoint::Ddql { agent: saved }) => agent.restore(saved)?,
            _ => return Err(Error::AgentMismatch("meta checkpoint does not match the configured algorithm".into())),
        }
        Ok(())
    }
}
