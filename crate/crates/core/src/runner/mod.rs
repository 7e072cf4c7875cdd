//! Episode engine: composes the channel, the uplink buffers, the frame
//! sources and the learning agents of the configured mode, plus campaign
//! persistence and summaries.

mod campaign;
mod metrics;

pub use campaign::{
    evaluate_checkpoint, load_metrics, run_campaign, summarize_campaign, summarize_dir, write_metrics, CampaignOutcome,
    CampaignSummary, DirSummary,
};
pub use metrics::{quantile_sorted, tail_means, BoxSummary, EpisodeMetrics, TailMeans};

use std::collections::VecDeque;
use std::io::Write;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent_ca::{
    build_centralized_state, build_decentralized_state, federate, reward_ca, CaState, DdqlAgent, DdqlCheckpoint,
    DdqlParams, EpsilonSchedule, Normalizer, Transition, UeMeasurements, CA_ACTIONS, CA_STATE_DIM,
};
use crate::agent_sa::{
    build_sa_observation, equal_share_allocate, greedy_allocate, reward_sa, PpoCheckpoint, PpoModel, PpoParams,
    SaMeasurements, SaStep,
};
use crate::app::{max_frame_bits, FrameSource, Label};
use crate::channel::{McsTable, UeChannel};
use crate::config::{Learning, Mode, SimConfig};
use crate::error::{Error, Result};
use crate::meta::{MetaAgent, MetaCheckpoint, MetaLogEntry, MetaMode, MetaWindow};
use crate::netsim::{advance_slot, symbols_needed, DeliveryRecord, LayerStats, UeQueue, UeRadio};
use crate::seeds::{stream_rng, Stream};

use metrics::EpisodeAccumulator;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    Central,
    Federated,
}

impl Family {
    fn slot(self) -> usize {
        self as usize
    }
}

/// What is active during a given window of the episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Operating {
    ca: Option<Family>,
    sa: bool,
}

/// The learners of a run; which ones exist depends on the mode.
#[derive(Debug, Clone)]
pub struct Agents {
    pub central_ca: Option<DdqlAgent>,
    pub federated_ca: Vec<DdqlAgent>,
    pub sa: Option<PpoModel>,
    pub meta: Option<MetaAgent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentsCheckpoint {
    pub central_ca: Option<DdqlCheckpoint>,
    pub federated_ca: Vec<DdqlCheckpoint>,
    pub sa: Option<PpoCheckpoint>,
    pub meta: Option<MetaCheckpoint>,
}

impl Agents {
    pub fn new(cfg: &SimConfig) -> Self {
        let n = cfg.n_ues;
        let per_ue = (cfg.episodes * cfg.steps_per_episode) as u64;
        let mut sizes = vec![CA_STATE_DIM];
        sizes.extend_from_slice(&cfg.ca_hidden);
        sizes.push(CA_ACTIONS);
        let params = DdqlParams::from_config(cfg);
        let wants_central = matches!(cfg.mode, Mode::Ics | Mode::Ccs | Mode::Meta)
            || (cfg.mode == Mode::C && cfg.learning == Learning::Centralized);
        let wants_federated = cfg.mode == Mode::Meta || (cfg.mode == Mode::C && cfg.learning == Learning::Federated);
        let central_ca = wants_central.then(|| {
            let mut rng = stream_rng(cfg.seed, Stream::AgentInit, 0);
            DdqlAgent::new(&sizes, params, EpsilonSchedule::over_horizon(cfg, per_ue * n as u64), &mut rng)
        });
        let federated_ca = if wants_federated {
            let mut rng = stream_rng(cfg.seed, Stream::AgentInit, 1);
            let global = DdqlAgent::new(&sizes, params, EpsilonSchedule::over_horizon(cfg, per_ue), &mut rng);
            vec![global; n]
        } else {
            Vec::new()
        };
        let sa = (cfg.mode != Mode::C).then(|| {
            let mut rng = stream_rng(cfg.seed, Stream::AgentInit, 2);
            PpoModel::new(&cfg.ppo_hidden, cfg.priority_levels, PpoParams::from_config(cfg), &mut rng)
        });
        let meta = cfg.meta_algorithm.filter(|_| cfg.mode == Mode::Meta).map(|alg| {
            let mut rng = stream_rng(cfg.seed, Stream::AgentInit, 3);
            let windows = (cfg.episodes * cfg.steps_per_episode / cfg.window.max(1)) as u64;
            MetaAgent::new(alg, cfg, windows, &mut rng)
        });
        Self {
            central_ca,
            federated_ca,
            sa,
            meta,
        }
    }

    pub fn checkpoint(&self) -> AgentsCheckpoint {
        AgentsCheckpoint {
            central_ca: self.central_ca.as_ref().map(DdqlAgent::checkpoint),
            federated_ca: self.federated_ca.iter().map(DdqlAgent::checkpoint).collect(),
            sa: self.sa.as_ref().map(PpoModel::checkpoint),
            meta: self.meta.as_ref().map(MetaAgent::checkpoint),
        }
    }

    pub fn restore(&mut self, ckpt: AgentsCheckpoint) -> Result<()> {
        let mismatch = |what: &str| Error::AgentMismatch(format!("checkpoint {what} does not match the configured mode"));
        match (&mut self.central_ca, ckpt.central_ca) {
            (Some(a), Some(c)) => a.restore(c)?,
            (None, None) => {}
            _ => return Err(mismatch("central compression agent")),
        }
        if self.federated_ca.len() != ckpt.federated_ca.len() {
            return Err(mismatch("federated compression agents"));
        }
        for (a, c) in self.federated_ca.iter_mut().zip(ckpt.federated_ca) {
            a.restore(c)?;
        }
        match (&mut self.sa, ckpt.sa) {
            (Some(a), Some(c)) => a.restore(c)?,
            (None, None) => {}
            _ => return Err(mismatch("scheduling agent")),
        }
        match (&mut self.meta, ckpt.meta) {
            (Some(a), Some(c)) => a.restore(c)?,
            (None, None) => {}
            _ => return Err(mismatch("meta agent")),
        }
        Ok(())
    }
}

/// Compression decision awaiting its reward and its successor state.
#[derive(Debug, Clone)]
struct CaRecord {
    seq: u64,
    states: [Option<CaState>; 2],
    action: usize,
    family: Family,
    reward: Option<f64>,
    next: Option<[Option<CaState>; 2]>,
}

#[derive(Debug, Clone)]
struct SaRecord {
    seq: u64,
    obs: [f64; 6],
    action: usize,
    log_prob: f64,
    value: f64,
    reward: Option<f64>,
    next_value: Option<f64>,
    /// The chain was broken after this decision; it can never be completed.
    dead: bool,
}

/// Per-frame bookkeeping needed at delivery time.
#[derive(Debug, Clone, Copy)]
struct FrameTag {
    seq: u64,
    k: usize,
}

struct UeRuntime {
    channel: UeChannel,
    source: FrameSource,
    stats: LayerStats,
    k: usize,
    receptions: usize,
    delivered_bits_since_decision: f64,
    tags: VecDeque<FrameTag>,
    ca_records: VecDeque<CaRecord>,
    sa_records: VecDeque<SaRecord>,
}

/// Per-slot trace line.
#[derive(Debug, Clone, Serialize)]
struct SlotTrace<'a> {
    episode: usize,
    slot: u64,
    t_ms: f64,
    sinr_db: &'a [f64],
    mcs: &'a [usize],
    outage: &'a [bool],
    grants: &'a [usize],
    occupancy_bits: &'a [f64],
    delivered: &'a [DeliveryRecord],
}

/// Owns the agents and random streams of one run and plays episodes.
pub struct Simulator {
    cfg: SimConfig,
    norm: Normalizer,
    table: McsTable,
    n_prb: usize,
    pub agents: Agents,
    channel_rngs: Vec<ChaCha8Rng>,
    explore_rng: ChaCha8Rng,
    sampler_rng: ChaCha8Rng,
    meta_rng: ChaCha8Rng,
    rollouts: Vec<Vec<SaStep>>,
    episode: usize,
    rotation: usize,
    meta_mode: MetaMode,
    meta_log: Vec<MetaLogEntry>,
    trace: Option<Box<dyn Write>>,
}

impl Simulator {
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let agents = Agents::new(&cfg);
        Ok(Self {
            norm: Normalizer::from_config(&cfg),
            table: McsTable::from_config(&cfg),
            n_prb: cfg.n_prb(),
            channel_rngs: (0..cfg.n_ues)
                .map(|u| stream_rng(cfg.seed, Stream::Channel, u as u64))
                .collect(),
            explore_rng: stream_rng(cfg.seed, Stream::Exploration, 0),
            sampler_rng: stream_rng(cfg.seed, Stream::Sampler, 0),
            meta_rng: stream_rng(cfg.seed, Stream::Meta, 0),
            rollouts: vec![Vec::new(); cfg.n_ues],
            episode: 0,
            rotation: 0,
            meta_mode: MetaMode::CentralizedIcs,
            meta_log: Vec::new(),
            trace: None,
            agents,
            cfg,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn set_trace(&mut self, sink: Box<dyn Write>) {
        self.trace = Some(sink);
    }

    pub fn meta_log(&self) -> &[MetaLogEntry] {
        &self.meta_log
    }

    pub fn episodes_played(&self) -> usize {
        self.episode
    }

    fn operating(&self) -> Operating {
        match self.cfg.mode {
            Mode::C => Operating {
                ca: Some(match self.cfg.learning {
                    Learning::Centralized => Family::Central,
                    Learning::Federated => Family::Federated,
                }),
                sa: false,
            },
            Mode::S => Operating { ca: None, sa: true },
            Mode::Ics | Mode::Ccs => Operating {
                ca: Some(Family::Central),
                sa: true,
            },
            Mode::Meta => match self.meta_mode {
                MetaMode::CentralizedIcs => Operating {
                    ca: Some(Family::Central),
                    sa: true,
                },
                MetaMode::FederatedC => Operating {
                    ca: Some(Family::Federated),
                    sa: false,
                },
            },
        }
    }

    fn reward_mode(&self) -> Mode {
        if self.cfg.mode == Mode::Ccs {
            Mode::Ccs
        } else {
            Mode::Ics
        }
    }

    /// Trains for `episodes` episodes.
    pub fn train(&mut self, episodes: usize) -> Result<Vec<EpisodeMetrics>> {
        (0..episodes).map(|_| self.run_episode(true)).collect()
    }

    /// Plays `episodes` episodes with greedy policies and no learning.
    pub fn evaluate(&mut self, episodes: usize) -> Result<Vec<EpisodeMetrics>> {
        (0..episodes).map(|_| self.run_episode(false)).collect()
    }

    /// Simulates slots until every UE has `steps_per_episode` receptions
    /// (or the slot cap is reached), driving decisions, rewards and updates.
    pub fn run_episode(&mut self, training: bool) -> Result<EpisodeMetrics> {
        let cfg = self.cfg.clone();
        let n = cfg.n_ues;
        let period = cfg.frame_period_ms();
        let slot_ms = cfg.slot_ms();
        let max_slots = ((cfg.max_episode_length_factor * cfg.steps_per_episode as f64 * period) / slot_ms).ceil() as u64;
        let initial = cfg.initial_link_state();
        let mut ues: Vec<UeRuntime> = (0..n)
            .map(|u| UeRuntime {
                channel: UeChannel::new(initial, &cfg),
                source: FrameSource::new(u, u as f64 * period / n as f64, &cfg),
                stats: LayerStats::new(cfg.stats_window),
                k: 1,
                receptions: 0,
                delivered_bits_since_decision: 0.0,
                tags: VecDeque::new(),
                ca_records: VecDeque::new(),
                sa_records: VecDeque::new(),
            })
            .collect();
        let mut queues: Vec<UeQueue> = (0..n).map(|_| UeQueue::new()).collect();
        let mut radios: Vec<UeRadio> = ues
            .iter()
            .map(|ue| UeRadio::new(ue.channel.current(), &self.table, self.n_prb))
            .collect();
        let mut window = MetaWindow::new(n);
        let mut acc = EpisodeAccumulator {
            ca_reward: self.agents.central_ca.is_some().then_some((0.0, 0)).or(
                (!self.agents.federated_ca.is_empty()).then_some((0.0, 0)),
            ),
            sa_reward: self.agents.sa.as_ref().map(|_| (0.0, 0)),
            ..Default::default()
        };
        if cfg.mode == Mode::Meta {
            self.meta_mode = MetaMode::CentralizedIcs;
        }
        let mut window_index = 0u64;
        let mut demands = vec![0usize; n];
        let mut slot = 0u64;
        let mut truncated = true;

        while slot < max_slots {
            let t0 = slot as f64 * slot_ms;
            for u in 0..n {
                let state = ues[u].channel.step(&mut self.channel_rngs[u], &cfg);
                radios[u] = UeRadio::new(state, &self.table, self.n_prb);
            }
            let op = self.operating();
            for u in 0..n {
                while ues[u].source.next_time_ms() <= t0 + 1e-9 {
                    let label = self.decide(u, op, training, &mut ues[u], &queues[u], &radios[u], &mut acc);
                    let frame = ues[u].source.emit(&label.config(), &cfg);
                    ues[u].stats.on_generated(frame.seq);
                    let k = ues[u].k;
                    ues[u].tags.push_back(FrameTag { seq: frame.seq, k });
                    queues[u].submit(frame);
                    acc.generated += 1;
                }
                queues[u].admit(t0);
                demands[u] = symbols_needed(queues[u].occupancy_bits(), radios[u].symbol_capacity_bits);
            }
            let grants = if op.sa {
                let k: Vec<usize> = ues.iter().map(|ue| ue.k).collect();
                greedy_allocate(&k, &demands, cfg.useful_symbols_per_slot, self.rotation, cfg.tie_break)
            } else {
                equal_share_allocate(&demands, cfg.useful_symbols_per_slot, self.rotation)
            };
            self.rotation = self.rotation.wrapping_add(1);
            let out = advance_slot(&mut queues, &grants, &radios, t0, &cfg);
            for (u, phy) in out.phy.iter().enumerate() {
                if let Some(ok) = phy {
                    ues[u].stats.on_phy(*ok);
                }
            }
            for rec in &out.deliveries {
                self.on_delivery(rec, training, &mut ues[rec.ue_id], &radios[rec.ue_id], &mut window, &mut acc);
            }
            if training && !out.deliveries.is_empty() {
                self.maybe_update_ppo(&mut acc)?;
            }
            if cfg.mode == Mode::Meta && window.is_complete(cfg.window) {
                self.close_window(&mut window, window_index, training, &mut acc);
                window_index += 1;
            }
            if let Some(sink) = self.trace.as_mut() {
                if grants.iter().any(|&g| g > 0) || !out.deliveries.is_empty() {
                    let line = SlotTrace {
                        episode: self.episode,
                        slot,
                        t_ms: t0,
                        sinr_db: &radios.iter().map(|r| r.channel.sinr_db).collect::<Vec<_>>(),
                        mcs: &radios.iter().map(|r| r.mcs).collect::<Vec<_>>(),
                        outage: &radios.iter().map(|r| r.channel.outage).collect::<Vec<_>>(),
                        grants: &grants,
                        occupancy_bits: &queues.iter().map(UeQueue::occupancy_bits).collect::<Vec<_>>(),
                        delivered: &out.deliveries,
                    };
                    serde_json::to_writer(&mut *sink, &line).map_err(|e| Error::format("trace", e))?;
                    sink.write_all(b"\n").map_err(|e| Error::io("trace", e))?;
                }
            }
            slot += 1;
            if ues.iter().all(|ue| ue.receptions >= cfg.steps_per_episode) {
                truncated = false;
                break;
            }
        }

        // Decisions whose outcome or successor never arrived are discarded.
        for (u, ue) in ues.iter_mut().enumerate() {
            ue.ca_records.clear();
            ue.sa_records.clear();
            if let Some(last) = self.rollouts[u].last_mut() {
                last.continues = false;
            }
        }
        if training && !self.agents.federated_ca.is_empty() && (self.episode + 1).is_multiple_of(cfg.fedavg_period_episodes.max(1))
        {
            federate(&mut self.agents.federated_ca)?;
        }
        if let Some(meta) = self.agents.meta.as_mut() {
            meta.end_episode();
        }
        if let Some(sink) = self.trace.as_mut() {
            sink.flush().map_err(|e| Error::io("trace", e))?;
        }
        let metrics = acc.finish(self.episode, training, slot, truncated, cfg.mode == Mode::Meta);
        self.episode += 1;
        Ok(metrics)
    }

    #[allow(clippy::too_many_arguments)]
    fn decide(
        &mut self,
        u: usize,
        op: Operating,
        training: bool,
        ue: &mut UeRuntime,
        queue: &UeQueue,
        radio: &UeRadio,
        acc: &mut EpisodeAccumulator,
    ) -> Label {
        let cfg = &self.cfg;
        let occupancy = queue.occupancy_bits();
        let sym = symbols_needed(occupancy, radio.symbol_capacity_bits);
        ue.stats.sinr.push(radio.channel.sinr_db);
        ue.stats.mcs.push(radio.mcs as f64);
        ue.stats.occupancy.push(occupancy);
        let seq = ue.source.generated();

        let label = match op.ca {
            None => cfg.fixed_compression,
            Some(family) => {
                let m = UeMeasurements {
                    sinr_db: radio.channel.sinr_db,
                    mcs: radio.mcs,
                    symbols_needed: sym,
                    occupancy_bits: occupancy,
                    stats: &ue.stats,
                };
                let states = [
                    self.agents.central_ca.as_ref().map(|_| build_centralized_state(&m, &self.norm)),
                    (!self.agents.federated_ca.is_empty()).then(|| build_decentralized_state(&m, &self.norm)),
                ];
                let own = states[family.slot()].expect("active family has an agent");
                let agent = match family {
                    Family::Central => self.agents.central_ca.as_mut().expect("central agent"),
                    Family::Federated => &mut self.agents.federated_ca[u],
                };
                let chosen = agent.select_action(own.as_slice(), &mut self.explore_rng, training);
                let mut applied = Label::from_index(chosen);
                if family == Family::Central && cfg.centralized_control_loss && radio.channel.outage {
                    applied = cfg.control_fallback;
                }
                if training {
                    if let Some(prev) = ue.ca_records.back_mut() {
                        prev.next = Some(states);
                    }
                    ue.ca_records.push_back(CaRecord {
                        seq,
                        states,
                        action: applied.index(),
                        family,
                        reward: None,
                        next: None,
                    });
                }
                applied
            }
        };
        acc.labels[label.index()] += 1;

        if let Some(sa) = self.agents.sa.as_ref() {
            if op.sa {
                let sm = SaMeasurements {
                    mean_sinr_db: ue.stats.sinr.summary().mean,
                    mean_mcs: ue.stats.mcs.summary().mean,
                    mean_buffer_bits: ue.stats.occupancy.summary().mean,
                    symbols_needed: sym,
                    mean_latency_ms: ue.stats.app_latency.summary().mean,
                    delivered_bits: ue.delivered_bits_since_decision,
                };
                let obs = build_sa_observation(&sm, &self.norm, max_frame_bits(cfg.lidar_fps));
                ue.delivered_bits_since_decision = 0.0;
                if training {
                    let (a, log_prob, value) = sa.act(&obs.0, &mut self.explore_rng);
                    ue.k = a + 1;
                    if let Some(prev) = ue.sa_records.back_mut() {
                        if !prev.dead {
                            prev.next_value = Some(value);
                        }
                    }
                    ue.sa_records.push_back(SaRecord {
                        seq,
                        obs: obs.0,
                        action: a,
                        log_prob,
                        value,
                        reward: None,
                        next_value: None,
                        dead: false,
                    });
                } else {
                    ue.k = sa.greedy(&obs.0) + 1;
                }
            } else if let Some(prev) = ue.sa_records.back_mut() {
                // the scheduler is frozen for this decision: no successor
                if prev.next_value.is_none() {
                    prev.dead = true;
                }
            }
        }
        label
    }

    fn on_delivery(
        &mut self,
        rec: &DeliveryRecord,
        training: bool,
        ue: &mut UeRuntime,
        radio: &UeRadio,
        window: &mut MetaWindow,
        acc: &mut EpisodeAccumulator,
    ) {
        let cfg = &self.cfg;
        let u = rec.ue_id;
        let tag = ue.tags.pop_front().expect("every delivered frame was tagged");
        debug_assert_eq!(tag.seq, rec.seq);
        ue.stats.on_delivered(rec);
        ue.delivered_bits_since_decision += rec.size_bits;
        ue.receptions += 1;

        let tau = cfg.latency_threshold_ms;
        let lat = rec.e2e_latency_ms;
        let base = reward_ca(lat, tau, rec.map_value, Mode::Ics, 1);
        acc.latencies.push(lat);
        acc.reward_sum += base;
        acc.map_sum += rec.map_value;
        acc.hits += rec.deadline_met as u64;
        let mode = self.reward_mode();
        let r_ca = reward_ca(lat, tau, rec.map_value, mode, tag.k);
        let r_sa = reward_sa(lat, tau, rec.map_value, tag.k, mode);
        if let Some((s, c)) = acc.ca_reward.as_mut() {
            *s += r_ca;
            *c += 1;
        }
        if let Some((s, c)) = acc.sa_reward.as_mut() {
            *s += r_sa;
            *c += 1;
        }
        if cfg.mode == Mode::Meta {
            window.record(u, radio.channel.sinr_db, base, lat, rec.map_value);
        }
        if !training {
            return;
        }

        if let Ok(i) = ue.ca_records.binary_search_by_key(&rec.seq, |r| r.seq) {
            ue.ca_records[i].reward = Some(r_ca);
        }
        while let Some(front) = ue.ca_records.front() {
            if front.reward.is_none() || front.next.is_none() {
                break;
            }
            let r = ue.ca_records.pop_front().unwrap();
            let next = r.next.unwrap();
            for family in [Family::Central, Family::Federated] {
                let i = family.slot();
                let (Some(s), Some(s2)) = (r.states[i], next[i]) else {
                    continue;
                };
                if family != r.family && !cfg.meta_train_inactive {
                    continue;
                }
                let agent = match family {
                    Family::Central => self.agents.central_ca.as_mut(),
                    Family::Federated => self.agents.federated_ca.get_mut(u),
                };
                if let Some(agent) = agent {
                    agent.remember(Transition {
                        state: s.0.to_vec(),
                        action: r.action,
                        reward: r.reward.unwrap(),
                        next_state: s2.0.to_vec(),
                        done: false,
                    });
                    if agent.can_update() {
                        let loss = agent.update(&mut self.sampler_rng).expect("minibatch available");
                        acc.ca_loss.0 += loss;
                        acc.ca_loss.1 += 1;
                    }
                }
            }
        }

        if let Ok(i) = ue.sa_records.binary_search_by_key(&rec.seq, |r| r.seq) {
            ue.sa_records[i].reward = Some(r_sa);
        }
        while let Some(front) = ue.sa_records.front() {
            if front.reward.is_none() || (front.next_value.is_none() && !front.dead) {
                break;
            }
            let r = ue.sa_records.pop_front().unwrap();
            let rollout = &mut self.rollouts[u];
            if r.dead {
                if let Some(last) = rollout.last_mut() {
                    last.continues = false;
                }
                continue;
            }
            rollout.push(SaStep {
                obs: r.obs,
                action: r.action,
                log_prob: r.log_prob,
                reward: r.reward.unwrap(),
                value: r.value,
                next_value: r.next_value.unwrap(),
                continues: true,
            });
        }
    }

    fn maybe_update_ppo(&mut self, acc: &mut EpisodeAccumulator) -> Result<()> {
        let Some(sa) = self.agents.sa.as_mut() else {
            return Ok(());
        };
        let t = self.cfg.t_ppo;
        let ready = self.rollouts.iter().all(|r| r.len() >= t) || self.rollouts.iter().any(|r| r.len() >= 2 * t);
        if !ready {
            return Ok(());
        }
        let batch: Vec<Vec<SaStep>> = self
            .rollouts
            .iter()
            .filter(|r| r.len() >= t)
            .map(|r| r[..t].to_vec())
            .collect();
        for r in &mut self.rollouts {
            r.clear();
        }
        sa.update(&batch, &mut self.sampler_rng)?;
        acc.ppo_updates += 1;
        Ok(())
    }

    fn close_window(&mut self, window: &mut MetaWindow, index: u64, training: bool, acc: &mut EpisodeAccumulator) {
        let Some(meta) = self.agents.meta.as_mut() else {
            window.reset();
            return;
        };
        let x = window.context(&self.norm);
        let reward = window.meta_reward();
        let sinr = window.mean_sinr_db();
        let (_, decision, credited) = meta.step(&x, reward, sinr, &mut self.meta_rng, training);
        self.meta_mode = decision.resulting_mode;
        acc.windows += 1;
        if decision.resulting_mode == MetaMode::CentralizedIcs {
            acc.ics_windows += 1;
        }
        self.meta_log.push(MetaLogEntry {
            episode: self.episode,
            window: index,
            gamma_db: decision.gamma_db,
            mean_sinr_db: sinr,
            mode: decision.resulting_mode,
            meta_reward: credited,
        });
        window.reset();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{MetaAlgorithm, Regime};

    fn small(mode: Mode) -> SimConfig {
        SimConfig {
            mode,
            steps_per_episode: 30,
            episodes: 3,
            t_ppo: 16,
            minibatch: 8,
            replay_capacity: 1000,
            ..SimConfig::default()
        }
    }

    #[test]
    fn one_episode_has_enough_deliveries() {
        let mut cfg = small(Mode::Ics);
        cfg.steps_per_episode = 400;
        cfg.set_regime(Regime::StaticG);
        let mut sim = Simulator::new(cfg).unwrap();
        let m = sim.run_episode(true).unwrap();
        assert!(m.receptions >= 2000);
        assert!(!m.truncated);
        assert!((0.0..=1.0).contains(&m.deadline_hit_prob));
    }

    #[test]
    fn fixed_c3_in_s_mode_delivers_c3_map() {
        let mut cfg = small(Mode::S);
        cfg.fixed_compression = Label::C3;
        let mut sim = Simulator::new(cfg).unwrap();
        for m in sim.train(2).unwrap() {
            assert!((m.mean_map - 0.686).abs() < 1e-12);
            assert_eq!(m.share_c3, 1.0);
        }
    }

    #[test]
    fn episodes_are_deterministic() {
        for mode in [Mode::C, Mode::S, Mode::Ics, Mode::Ccs, Mode::Meta] {
            let mut cfg = small(mode);
            cfg.set_regime(Regime::Dc1_6);
            if mode == Mode::Meta {
                cfg.meta_algorithm = Some(MetaAlgorithm::Ddql);
            }
            let run = || Simulator::new(cfg.clone()).unwrap().train(2).unwrap();
            let (a, b) = (run(), run());
            assert_eq!(format!("{a:?}"), format!("{b:?}"), "{mode:?}");
        }
    }

    #[test]
    fn different_seeds_differ() {
        let cfg = small(Mode::Ics);
        let a = Simulator::new(cfg.clone()).unwrap().train(1).unwrap();
        let b = Simulator::new(SimConfig { seed: 9, ..cfg }).unwrap().train(1).unwrap();
        assert_ne!(a[0].mean_reward, b[0].mean_reward);
    }

    #[test]
    fn meta_runs_log_every_window() {
        let mut cfg = small(Mode::Meta);
        cfg.set_regime(Regime::Dc1_2);
        for alg in [MetaAlgorithm::R, MetaAlgorithm::Eg, MetaAlgorithm::Lts, MetaAlgorithm::Nlts, MetaAlgorithm::Ddql] {
            cfg.meta_algorithm = Some(alg);
            let mut sim = Simulator::new(cfg.clone()).unwrap();
            let rows = sim.train(2).unwrap();
            let windows: u64 = rows.iter().map(|r| r.meta_windows.unwrap()).sum();
            assert!(windows > 0);
            assert_eq!(sim.meta_log().len() as u64, windows);
            for e in sim.meta_log() {
                assert!([10.0, 20.0, 30.0].contains(&e.gamma_db));
                assert_eq!(e.mode, crate::meta::apply_threshold(e.gamma_db, e.mean_sinr_db).resulting_mode);
            }
        }
    }

    #[test]
    fn federated_agents_are_averaged_each_episode() {
        let mut cfg = small(Mode::C);
        cfg.learning = Learning::Federated;
        let mut sim = Simulator::new(cfg).unwrap();
        sim.train(1).unwrap();
        let first = sim.agents.federated_ca[0].q_net.params().to_vec();
        for a in &sim.agents.federated_ca {
            assert_eq!(a.q_net.params(), &first[..]);
        }
    }

    #[test]
    fn ppo_learns_in_sa_modes() {
        let mut sim = Simulator::new(small(Mode::S)).unwrap();
        let rows = sim.train(3).unwrap();
        assert!(rows.iter().map(|r| r.ppo_updates).sum::<u64>() > 0);
    }

    #[test]
    fn checkpoint_restores_greedy_behaviour() {
        let cfg = small(Mode::Ics);
        let mut sim = Simulator::new(cfg.clone()).unwrap();
        sim.train(2).unwrap();
        let ckpt = sim.agents.checkpoint();
        let text = serde_json::to_string(&ckpt).unwrap();
        let mut a = Simulator::new(cfg.clone()).unwrap();
        a.agents.restore(serde_json::from_str(&text).unwrap()).unwrap();
        let mut b = Simulator::new(cfg.clone()).unwrap();
        b.agents.restore(ckpt).unwrap();
        assert_eq!(format!("{:?}", a.evaluate(1).unwrap()), format!("{:?}", b.evaluate(1).unwrap()));
        let mut wrong = Simulator::new(small(Mode::S)).unwrap();
        assert!(wrong.agents.restore(sim.agents.checkpoint()).is_err());
    }

    #[test]
    fn starved_episode_is_truncated() {
        let mut cfg = small(Mode::S);
        cfg.set_regime(Regime::StaticB);
        cfg.fixed_compression = Label::C3;
        cfg.max_episode_length_factor = 1.0;
        let mut sim = Simulator::new(cfg).unwrap();
        let m = sim.run_episode(true).unwrap();
        assert!(m.truncated);
    }
}
