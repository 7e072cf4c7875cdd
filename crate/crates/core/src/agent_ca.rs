//! Compression agent: double deep Q-learning over the three compression
//! configurations, with centralized and decentralized state builders and
//! federated averaging of per-UE models.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::app::max_frame_bits;
use crate::config::{Mode, SimConfig};
use crate::error::{Error, Result};
use crate::netsim::{LayerStats, Summary};
use crate::nn::{argmax, AdamState, Mlp};

pub const CA_STATE_DIM: usize = 16;
pub const CA_ACTIONS: usize = 3;

/// Normalized 16-feature compression-agent state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaState(pub [f64; CA_STATE_DIM]);

impl CaState {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Min-max ranges used to normalize every feature into [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizer {
    pub sinr_min_db: f64,
    pub sinr_max_db: f64,
    pub latency_max_ms: f64,
    pub occupancy_max_bits: f64,
    /// Symbol budget of one frame period.
    pub symbols_max: f64,
    pub mcs_max: f64,
}

impl Normalizer {
    pub fn from_config(cfg: &SimConfig) -> Self {
        let slots_per_period = cfg.frame_period_ms() / cfg.slot_ms();
        Self {
            sinr_min_db: cfg.sinr_norm_min_db,
            sinr_max_db: cfg.sinr_norm_max_db,
            latency_max_ms: cfg.latency_norm_max_ms,
            occupancy_max_bits: cfg.occupancy_norm_frames * max_frame_bits(cfg.lidar_fps),
            symbols_max: cfg.useful_symbols_per_slot as f64 * slots_per_period,
            mcs_max: crate::channel::MAX_MCS as f64,
        }
    }

    pub fn sinr(&self, db: f64) -> f64 {
        unit((db - self.sinr_min_db) / (self.sinr_max_db - self.sinr_min_db))
    }

    pub fn latency(&self, ms: f64) -> f64 {
        unit(ms / self.latency_max_ms)
    }

    pub fn occupancy(&self, bits: f64) -> f64 {
        unit(bits / self.occupancy_max_bits)
    }

    pub fn symbols(&self, n: f64) -> f64 {
        unit(n / self.symbols_max)
    }

    pub fn mcs(&self, m: f64) -> f64 {
        unit(m / self.mcs_max)
    }
}

fn unit(x: f64) -> f64 {
    if x.is_finite() {
        x.clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Raw per-UE measurements available when a compression decision is taken.
#[derive(Debug, Clone, Copy)]
pub struct UeMeasurements<'a> {
    pub sinr_db: f64,
    pub mcs: usize,
    pub symbols_needed: usize,
    pub occupancy_bits: f64,
    pub stats: &'a LayerStats,
}

fn scaled(s: Summary, f: impl Fn(f64) -> f64) -> [f64; 4] {
    [f(s.mean), f(s.std), f(s.min), f(s.max)]
}

fn common_prefix(m: &UeMeasurements<'_>, norm: &Normalizer, out: &mut [f64; CA_STATE_DIM]) {
    out[0] = norm.sinr(m.sinr_db);
    out[1] = norm.mcs(m.mcs as f64);
    out[2] = norm.symbols(m.symbols_needed as f64);
    out[3..7].copy_from_slice(&scaled(m.stats.app_latency.summary(), |x| norm.latency(x)));
    out[7..11].copy_from_slice(&scaled(m.stats.app_prr.summary(), unit));
}

/// RAN-side state: radio features, application latency/PRR statistics and
/// PHY latency/PRR statistics.
pub fn build_centralized_state(m: &UeMeasurements<'_>, norm: &Normalizer) -> CaState {
    let mut s = [0.0; CA_STATE_DIM];
    common_prefix(m, norm, &mut s);
    s[11..15].copy_from_slice(&scaled(m.stats.phy_latency.summary(), |x| norm.latency(x)));
    s[15] = unit(m.stats.phy_prr.summary().mean);
    CaState(s)
}

/// UE-side state: the PHY slots are replaced by MAC buffer occupancy
/// statistics plus the instantaneous occupancy.
pub fn build_decentralized_state(m: &UeMeasurements<'_>, norm: &Normalizer) -> CaState {
    let mut s = [0.0; CA_STATE_DIM];
    common_prefix(m, norm, &mut s);
    s[11..15].copy_from_slice(&scaled(m.stats.occupancy.summary(), |x| norm.occupancy(x)));
    s[15] = norm.occupancy(m.occupancy_bits);
    CaState(s)
}

/// Compression-agent reward.
///
/// Deadline met: the mAP of the chosen configuration. Otherwise a latency
/// penalty `-l/100`, discounted by the priority level `k` in CCS.
pub fn reward_ca(latency_ms: f64, tau_ms: f64, map_value: f64, mode: Mode, k: usize) -> f64 {
    if latency_ms <= tau_ms {
        map_value
    } else if mode == Mode::Ccs {
        -latency_ms / (100.0 * k as f64)
    } else {
        -latency_ms / 100.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity ring of transitions with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self {
            capacity,
            items: Vec::new(),
            head: 0,
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Indices of a uniform sample with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        (0..n).map(|_| rng.random_range(0..self.items.len())).collect()
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }
}

/// Linear decay from `start` to `end` over `decay_steps`, then flat.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl EpsilonSchedule {
    /// Decays over the first `fraction` of `horizon` steps.
    pub fn over_horizon(cfg: &SimConfig, horizon: u64) -> Self {
        Self {
            start: cfg.epsilon_start,
            end: cfg.epsilon_end,
            decay_steps: ((horizon as f64) * cfg.epsilon_decay_fraction).round() as u64,
        }
    }

    pub fn value(&self, step: u64) -> f64 {
        if self.decay_steps == 0 || step >= self.decay_steps {
            return self.end;
        }
        let frac = step as f64 / self.decay_steps as f64;
        self.start + (self.end - self.start) * frac
    }
}

/// Hyperparameters shared by every DDQL learner in the repo.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdqlParams {
    pub gamma: f64,
    pub learning_rate: f64,
    pub minibatch: usize,
    pub target_sync: u64,
    pub replay_capacity: usize,
}

impl DdqlParams {
    pub fn from_config(cfg: &SimConfig) -> Self {
        Self {
            gamma: cfg.gamma,
            learning_rate: cfg.learning_rate,
            minibatch: cfg.minibatch,
            target_sync: cfg.t_ddql as u64,
            replay_capacity: cfg.replay_capacity,
        }
    }
}

/// Q-network, periodically synced target network, replay buffer and Adam.
#[derive(Debug, Clone)]
pub struct DdqlAgent {
    pub q_net: Mlp,
    pub target_net: Mlp,
    pub buffer: ReplayBuffer,
    pub optimizer: AdamState,
    pub epsilon: EpsilonSchedule,
    pub params: DdqlParams,
    /// Gradient steps taken so far.
    pub updates: u64,
    /// Transitions stored so far (drives the epsilon schedule).
    pub experience: u64,
}

/// Serializable part of a [`DdqlAgent`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdqlCheckpoint {
    pub q_net: Mlp,
    pub target_net: Mlp,
    pub epsilon: EpsilonSchedule,
    pub updates: u64,
    pub experience: u64,
}

impl DdqlAgent {
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], params: DdqlParams, epsilon: EpsilonSchedule, rng: &mut R) -> Self {
        let q_net = Mlp::new(sizes, rng);
        Self {
            target_net: q_net.clone(),
            optimizer: AdamState::new(q_net.parameter_count(), params.learning_rate),
            q_net,
            buffer: ReplayBuffer::new(params.replay_capacity),
            epsilon,
            params,
            updates: 0,
            experience: 0,
        }
    }

    pub fn n_actions(&self) -> usize {
        self.q_net.output_dim()
    }

    pub fn current_epsilon(&self) -> f64 {
        self.epsilon.value(self.experience)
    }

    pub fn q_values(&self, state: &[f64]) -> Vec<f64> {
        self.q_net.forward(state).expect("state width matches network")
    }

    /// Epsilon-greedy in training, greedy otherwise. Ties go to the lowest index.
    pub fn select_action<R: Rng + ?Sized>(&mut self, state: &[f64], rng: &mut R, training: bool) -> usize {
        if training {
            let eps = self.current_epsilon();
            if rng.random::<f64>() < eps {
                return rng.random_range(0..self.n_actions());
            }
        }
        argmax(&self.q_values(state))
    }

    pub fn remember(&mut self, t: Transition) {
        self.experience += 1;
        self.buffer.push(t);
    }

    pub fn can_update(&self) -> bool {
        self.buffer.len() >= self.params.minibatch
    }

    /// One gradient step on a uniformly sampled minibatch.
    ///
    /// Target `y = r + gamma * max_a' Q_target(s', a')`; loss is the mean
    /// squared error on the taken actions. The target network is refreshed
    /// whenever the update counter reaches a multiple of the sync interval.
    pub fn update<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<f64> {
        let m = self.params.minibatch;
        if self.buffer.len() < m {
            return Err(Error::InsufficientBuffer {
                have: self.buffer.len(),
                need: m,
            });
        }
        let idx = self.buffer.sample_indices(m, rng);
        self.update_on(&idx)
    }

    /// Gradient step on the given buffer indices.
    pub fn update_on(&mut self, idx: &[usize]) -> Result<f64> {
        if idx.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let m = idx.len();
        let d = self.q_net.input_dim();
        let na = self.n_actions();
        let mut states = Vec::with_capacity(m * d);
        let mut next = Vec::with_capacity(m * d);
        for &i in idx {
            let t = self.buffer.get(i);
            states.extend_from_slice(&t.state);
            next.extend_from_slice(&t.next_state);
        }
        let next_q = self.target_net.forward_batch(&next, m);
        let tape = self.q_net.forward_batch(&states, m);
        let q = tape.output();
        let mut grad_out = vec![0.0; m * na];
        let mut loss = 0.0;
        for (b, &i) in idx.iter().enumerate() {
            let t = self.buffer.get(i);
            let y = td_target(t, &next_q.output()[b * na..(b + 1) * na], self.params.gamma);
            let err = q[b * na + t.action] - y;
            loss += err * err;
            grad_out[b * na + t.action] = 2.0 * err / m as f64;
        }
        let mut grads = vec![0.0; self.q_net.parameter_count()];
        self.q_net.backward(&tape, &grad_out, &mut grads);
        self.optimizer.step(self.q_net.params_mut(), &grads);
        self.updates += 1;
        if self.updates.is_multiple_of(self.params.target_sync) {
            self.sync_target();
        }
        Ok(loss / m as f64)
    }

    pub fn sync_target(&mut self) {
        self.target_net = self.q_net.clone();
    }

    pub fn checkpoint(&self) -> DdqlCheckpoint {
        DdqlCheckpoint {
            q_net: self.q_net.clone(),
            target_net: self.target_net.clone(),
            epsilon: self.epsilon,
            updates: self.updates,
            experience: self.experience,
        }
    }

    pub fn restore(&mut self, ckpt: DdqlCheckpoint) -> Result<()> {
        if !ckpt.q_net.same_architecture(&self.q_net) || !ckpt.target_net.same_architecture(&self.q_net) {
            return Err(Error::Shape(format!(
                "checkpoint architecture {:?} does not match {:?}",
                ckpt.q_net.sizes(),
                self.q_net.sizes()
            )));
        }
        self.q_net = ckpt.q_net;
        self.target_net = ckpt.target_net;
        self.epsilon = ckpt.epsilon;
        self.updates = ckpt.updates;
        self.experience = ckpt.experience;
        Ok(())
    }
}

/// `r + gamma * max_a' Q_target(s', a')`; terminal transitions do not bootstrap.
pub fn td_target(t: &Transition, next_q: &[f64], gamma: f64) -> f64 {
    if t.done {
        t.reward
    } else {
        t.reward + gamma * next_q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Elementwise mean of parameter vectors sharing one architecture.
pub fn fedavg(models: &[&Mlp]) -> Result<Mlp> {
    let first = models.first().ok_or(Error::EmptyBatch)?;
    if let Some(bad) = models.iter().find(|m| !m.same_architecture(first)) {
        return Err(Error::Shape(format!(
            "cannot average {:?} with {:?}",
            first.sizes(),
            bad.sizes()
        )));
    }
    let n = models.len() as f64;
    let mut sum = vec![0.0; first.parameter_count()];
    for m in models {
        for (s, &p) in sum.iter_mut().zip(m.params()) {
            *s += p;
        }
    }
    for s in &mut sum {
        *s /= n;
    }
    Mlp::from_parts(first.sizes().to_vec(), sum)
}

/// Averages the Q- and target networks of federated agents and
/// redistributes the global model to every agent.
pub fn federate(agents: &mut [DdqlAgent]) -> Result<()> {
    if agents.len() < 2 {
        return Ok(());
    }
    let q = fedavg(&agents.iter().map(|a| &a.q_net).collect::<Vec<_>>())?;
    let target = fedavg(&agents.iter().map(|a| &a.target_net).collect::<Vec<_>>())?;
    for a in agents.iter_mut() {
        a.q_net.set_params(q.params())?;
        a.target_net.set_params(target.params())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsim::LayerStats;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(m: usize, sync: u64, gamma: f64) -> DdqlParams {
        DdqlParams {
            gamma,
            learning_rate: 1e-4,
            minibatch: m,
            target_sync: sync,
            replay_capacity: 1000,
        }
    }

    fn flat_eps(e: f64) -> EpsilonSchedule {
        EpsilonSchedule {
            start: e,
            end: e,
            decay_steps: 0,
        }
    }

    #[test]
    fn reward_examples() {
        assert_eq!(reward_ca(40.0, 50.0, 0.686, Mode::Ics, 1), 0.686);
        assert_eq!(reward_ca(120.0, 50.0, 0.686, Mode::Ics, 1), -1.2);
        assert!((reward_ca(120.0, 50.0, 0.686, Mode::Ccs, 3) - -0.4).abs() < 1e-15);
        assert_eq!(reward_ca(50.0, 50.0, 0.257, Mode::C, 2), 0.257);
    }

    #[test]
    fn ccs_reward_increases_with_priority() {
        for l in [51.0, 80.0, 300.0] {
            let r: Vec<f64> = (1..=3).map(|k| reward_ca(l, 50.0, 0.5, Mode::Ccs, k)).collect();
            assert!(r[0] < r[1] && r[1] < r[2]);
        }
    }

    #[test]
    fn zero_measurements_zero_state() {
        let cfg = SimConfig {
            sinr_norm_min_db: 0.0,
            ..SimConfig::default()
        };
        let norm = Normalizer::from_config(&cfg);
        let stats = LayerStats::new(20);
        let m = UeMeasurements {
            sinr_db: 0.0,
            mcs: 0,
            symbols_needed: 0,
            occupancy_bits: 0.0,
            stats: &stats,
        };
        assert_eq!(build_centralized_state(&m, &norm).0, [0.0; 16]);
        assert_eq!(build_decentralized_state(&m, &norm).0, [0.0; 16]);
    }

    #[test]
    fn sinr_feature_normalization() {
        let norm = Normalizer::from_config(&SimConfig::default());
        let stats = LayerStats::new(20);
        let m = UeMeasurements {
            sinr_db: 30.0,
            mcs: 28,
            symbols_needed: 10,
            occupancy_bits: 0.0,
            stats: &stats,
        };
        let s = build_centralized_state(&m, &norm);
        assert!((s.0[0] - 0.8).abs() < 1e-15);
        assert_eq!(s.0.len(), 16);
        assert_eq!(s.0[1], 1.0);
    }

    #[test]
    fn constant_occupancy_features() {
        let cfg = SimConfig::default();
        let norm = Normalizer::from_config(&cfg);
        let mut stats = LayerStats::new(20);
        let o = 1e6;
        for _ in 0..7 {
            stats.occupancy.push(o);
        }
        let m = UeMeasurements {
            sinr_db: 5.0,
            mcs: 11,
            symbols_needed: 3,
            occupancy_bits: o,
            stats: &stats,
        };
        let s = build_decentralized_state(&m, &norm).0;
        let on = norm.occupancy(o);
        assert!(on > 0.0);
        assert_eq!([s[11], s[12], s[13], s[14], s[15]], [on, 0.0, on, on, on]);
        assert!(s.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn epsilon_schedule_linear_then_flat() {
        let cfg = SimConfig::default();
        let e = EpsilonSchedule::over_horizon(&cfg, 1000);
        assert_eq!(e.decay_steps, 800);
        assert_eq!(e.value(0), 1.0);
        assert!((e.value(400) - (1.0 - 0.99 * 0.5)).abs() < 1e-12);
        assert_eq!(e.value(800), 0.01);
        assert_eq!(e.value(5000), 0.01);
        let mut prev = f64::INFINITY;
        for s in 0..1200 {
            let v = e.value(s);
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn select_action_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut agent = DdqlAgent::new(&[2, 3], params(4, 10, 0.9), flat_eps(1.0), &mut rng);
        let mut counts = [0usize; 3];
        let n = 100_000;
        for _ in 0..n {
            counts[agent.select_action(&[0.3, 0.2], &mut rng, true)] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 1.0 / 3.0).abs() < 0.01);
        }

        // Q = (0.1, 0.9, 0.3) through biases
        agent.q_net = Mlp::from_parts(vec![2, 3], vec![0.0; 6].into_iter().chain([0.1, 0.9, 0.3]).collect()).unwrap();
        agent.epsilon = flat_eps(0.0);
        assert_eq!(agent.select_action(&[1.0, 1.0], &mut rng, true), 1);
        agent.epsilon = flat_eps(1.0);
        for _ in 0..100 {
            assert_eq!(agent.select_action(&[1.0, 1.0], &mut rng, false), 1);
        }
    }

    #[test]
    fn update_requires_minibatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut agent = DdqlAgent::new(&[2, 3], params(64, 10, 0.9), flat_eps(0.0), &mut rng);
        assert!(matches!(agent.update(&mut rng), Err(Error::InsufficientBuffer { have: 0, need: 64 })));
    }

    #[test]
    fn gamma_zero_target_is_reward() {
        let t = Transition {
            state: vec![0.0],
            action: 0,
            reward: 0.42,
            next_state: vec![0.0],
            done: false,
        };
        assert_eq!(td_target(&t, &[5.0, 9.0, -1.0], 0.0), 0.42);
        assert_eq!(td_target(&t, &[5.0, 9.0, -1.0], 0.5), 0.42 + 4.5);
    }

    #[test]
    fn single_transition_loss_by_hand() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut agent = DdqlAgent::new(&[3, 4, 3], params(1, 1000, 0.95), flat_eps(0.0), &mut rng);
        // make target differ from the online net
        for p in agent.target_net.params_mut() {
            *p += 0.05;
        }
        let s = vec![0.2, -0.4, 0.9];
        let s2 = vec![0.7, 0.1, -0.3];
        let t = Transition {
            state: s.clone(),
            action: 2,
            reward: -0.3,
            next_state: s2.clone(),
            done: false,
        };
        agent.remember(t);
        let q = agent.q_net.forward(&s).unwrap();
        let qt = agent.target_net.forward(&s2).unwrap();
        let y = -0.3 + 0.95 * qt.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let expected = (q[2] - y).powi(2);
        let loss = agent.update_on(&[0]).unwrap();
        assert!((loss - expected).abs() < 1e-12);
    }

    #[test]
    fn target_sync_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sync = 8000;
        let mut agent = DdqlAgent::new(&[4, 8, 3], params(4, sync, 0.95), flat_eps(0.0), &mut rng);
        for i in 0..16 {
            agent.remember(Transition {
                state: vec![i as f64 / 16.0, 0.5, -0.2, 1.0],
                action: i % 3,
                reward: (i as f64).sin(),
                next_state: vec![0.1, i as f64 / 16.0, 0.3, 0.0],
                done: false,
            });
        }
        let initial_target = agent.target_net.clone();
        for _ in 0..sync - 1 {
            agent.update(&mut rng).unwrap();
        }
        assert_eq!(agent.target_net, initial_target);
        assert_ne!(agent.q_net, initial_target);
        agent.update(&mut rng).unwrap();
        assert_eq!(agent.updates, sync);
        assert_eq!(agent.target_net.params(), agent.q_net.params());
    }

    #[test]
    fn replay_sampling_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut buf = ReplayBuffer::new(100);
        for i in 0..100 {
            buf.push(Transition {
                state: vec![i as f64],
                action: 0,
                reward: 0.0,
                next_state: vec![],
                done: false,
            });
        }
        let n = 1_000_000;
        let mut counts = [0usize; 100];
        for i in buf.sample_indices(n, &mut rng) {
            counts[i] += 1;
        }
        let p = 0.01;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 5.0 * sigma);
        }
    }

    #[test]
    fn replay_ring_overwrites_oldest() {
        let mut buf = ReplayBuffer::new(3);
        for i in 0..5 {
            buf.push(Transition {
                state: vec![i as f64],
                action: 0,
                reward: 0.0,
                next_state: vec![],
                done: false,
            });
        }
        let mut held: Vec<f64> = (0..3).map(|i| buf.get(i).state[0]).collect();
        held.sort_by(f64::total_cmp);
        assert_eq!(held, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn fedavg_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = Mlp::new(&[16, 64, 32, 3], &mut rng);
        let same = fedavg(&[&a, &a, &a]).unwrap();
        for (x, y) in same.params().iter().zip(a.params()) {
            assert!((x - y).abs() < 1e-15);
        }
        let neg = Mlp::from_parts(a.sizes().to_vec(), a.params().iter().map(|p| -p).collect()).unwrap();
        assert!(fedavg(&[&a, &neg]).unwrap().params().iter().all(|&p| p == 0.0));
        let other = Mlp::new(&[16, 32, 3], &mut rng);
        assert!(matches!(fedavg(&[&a, &other]), Err(Error::Shape(_))));
    }

    #[test]
    fn federate_redistributes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut agents: Vec<DdqlAgent> = (0..4)
            .map(|_| DdqlAgent::new(&[4, 8, 3], params(4, 10, 0.9), flat_eps(0.0), &mut rng))
            .collect();
        let mean = fedavg(&agents.iter().map(|a| &a.q_net).collect::<Vec<_>>()).unwrap();
        federate(&mut agents).unwrap();
        for a in &agents {
            assert_eq!(a.q_net.params(), mean.params());
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let agent = DdqlAgent::new(&[16, 64, 32, 3], params(4, 10, 0.9), flat_eps(0.3), &mut rng);
        let text = serde_json::to_string(&agent.checkpoint()).unwrap();
        let mut other = DdqlAgent::new(&[16, 64, 32, 3], params(4, 10, 0.9), flat_eps(0.3), &mut rng);
        other.restore(serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(other.q_net, agent.q_net);
        let mut wrong = DdqlAgent::new(&[16, 32, 3], params(4, 10, 0.9), flat_eps(0.3), &mut rng);
        assert!(wrong.restore(agent.checkpoint()).is_err());
    }
}
