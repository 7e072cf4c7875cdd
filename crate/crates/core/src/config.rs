//! Experiment configuration.
//!
//! A [`SimConfig`] is loaded from a TOML document. Every key is optional and
//! falls back to the default experiment setup (five UEs at 28 GHz, 50 MHz,
//! numerology 3, 30 fps LiDAR, `tau = 50 ms`, three priority levels). Unknown
//! keys are rejected so that typos in an experiment manifest surface early.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::app::Label;
use crate::error::{Error, Result};

/// Operating mode of the optimization framework.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Mode {
    /// Compression agent only.
    C,
    /// Scheduling agent only.
    S,
    /// Both agents, independent rewards.
    Ics,
    /// Both agents, coupled rewards.
    Ccs,
    /// Meta agent switching between centralized ICS and federated C.
    Meta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Learning {
    Centralized,
    Federated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MetaAlgorithm {
    R,
    Eg,
    Lts,
    Nlts,
    Ddql,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "C" => Ok(Mode::C),
            "S" => Ok(Mode::S),
            "ICS" => Ok(Mode::Ics),
            "CCS" => Ok(Mode::Ccs),
            "META" => Ok(Mode::Meta),
            _ => Err(Error::invalid("mode", format!("unknown mode `{s}`"))),
        }
    }
}

impl FromStr for MetaAlgorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "R" => Ok(MetaAlgorithm::R),
            "EG" => Ok(MetaAlgorithm::Eg),
            "LTS" => Ok(MetaAlgorithm::Lts),
            "NLTS" => Ok(MetaAlgorithm::Nlts),
            "DDQL" => Ok(MetaAlgorithm::Ddql),
            _ => Err(Error::invalid("meta_algorithm", format!("unknown meta algorithm `{s}`"))),
        }
    }
}

/// Named channel regimes used by the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Regime {
    StaticG,
    StaticB,
    #[serde(rename = "DC_1_6")]
    Dc1_6,
    #[serde(rename = "DC_1_2")]
    Dc1_2,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::StaticG => "STATIC_G",
            Regime::StaticB => "STATIC_B",
            Regime::Dc1_6 => "DC_1_6",
            Regime::Dc1_2 => "DC_1_2",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "STATIC_G" => Ok(Regime::StaticG),
            "STATIC_B" => Ok(Regime::StaticB),
            "DC_1_6" => Ok(Regime::Dc1_6),
            "DC_1_2" => Ok(Regime::Dc1_2),
            other => Err(Error::UnknownRegime(other.to_string())),
        }
    }
}

/// Transition probabilities `(p_gb, p_bg)` of a named regime.
pub fn channel_regime(name: &str) -> Result<(f64, f64)> {
    Ok(name.parse::<Regime>()?.transition_probabilities())
}

impl Regime {
    pub fn transition_probabilities(self) -> (f64, f64) {
        match self {
            Regime::StaticG => (0.0, 1.0),
            Regime::StaticB => (1.0, 0.0),
            Regime::Dc1_6 => (0.2, 1.0),
            Regime::Dc1_2 => (1.0, 1.0),
        }
    }

    /// Channel state every chain starts from.
    pub fn initial_state(self) -> crate::channel::LinkState {
        match self {
            Regime::StaticB => crate::channel::LinkState::Bad,
            _ => crate::channel::LinkState::Good,
        }
    }
}

/// Stationary fraction of time spent in the Bad state.
pub fn bad_duty_cycle(p_gb: f64, p_bg: f64) -> f64 {
    if p_gb + p_bg == 0.0 {
        0.0
    } else {
        p_gb / (p_gb + p_bg)
    }
}

/// Order among UEs sharing one priority level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TieBreak {
    RoundRobin,
    LowestIndex,
}

/// One row of a user-supplied MCS table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McsEntry {
    pub threshold: f64,
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    // network
    pub n_ues: usize,
    pub carrier_ghz: f64,
    pub bandwidth_mhz: f64,
    pub numerology: u32,
    pub symbol_duration_us: f64,
    pub useful_symbols_per_slot: usize,
    /// PRBs available to the uplink; derived from bandwidth and numerology when absent.
    pub n_prb: Option<usize>,
    pub backhaul_delay_ms: f64,
    pub backhaul_rate_gbps: f64,

    // channel
    pub regime: Option<Regime>,
    pub p_gb: f64,
    pub p_bg: f64,
    pub sinr_good_db: f64,
    pub sinr_bad_db: f64,
    pub sinr_std_db: f64,
    pub sinr_truncation_db: f64,
    pub outage_good: f64,
    pub outage_bad: f64,
    pub mcs_table: Option<Vec<McsEntry>>,

    // application
    pub lidar_fps: f64,
    pub latency_threshold_ms: f64,
    /// Compression used whenever no compression agent is active (S mode).
    pub fixed_compression: Label,
    /// In centralized learning, a compression decision issued while the UE is
    /// in outage does not reach it and the UE encodes with this configuration.
    pub centralized_control_loss: bool,
    pub control_fallback: Label,

    // experiment
    pub mode: Mode,
    pub learning: Learning,
    pub meta_algorithm: Option<MetaAlgorithm>,
    pub seed: u64,
    pub episodes: usize,
    pub steps_per_episode: usize,
    /// Hard cap on simulated slots per episode, as a multiple of the nominal
    /// episode length (`steps_per_episode` frame periods).
    pub max_episode_length_factor: f64,
    pub summary_tail: usize,

    // shared learning hyperparameters
    pub priority_levels: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub learning_rate: f64,
    pub minibatch: usize,

    // compression agent
    pub ca_hidden: Vec<usize>,
    pub t_ddql: usize,
    pub replay_capacity: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_fraction: f64,
    pub fedavg_period_episodes: usize,
    pub stats_window: usize,
    pub sinr_norm_min_db: f64,
    pub sinr_norm_max_db: f64,
    pub latency_norm_max_ms: f64,
    pub occupancy_norm_frames: f64,

    // scheduling agent
    pub ppo_hidden: Vec<usize>,
    pub ppo_clip: f64,
    pub ppo_c1: f64,
    pub ppo_c2: f64,
    pub ppo_epochs: usize,
    pub t_ppo: usize,
    pub advantage_normalization: bool,
    pub tie_break: TieBreak,

    // meta agent
    pub meta_thresholds_db: Vec<f64>,
    pub window: usize,
    pub meta_hidden: Vec<usize>,
    pub meta_train_inactive: bool,
    pub eg_epsilon: f64,
    pub eg_alpha: f64,
    pub lts_rm: f64,
    pub lts_rho: f64,
    pub t_nlts: usize,
    pub nlts_history: usize,
    pub nlts_train_steps: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_ues: 5,
            carrier_ghz: 28.0,
            bandwidth_mhz: 50.0,
            numerology: 3,
            symbol_duration_us: 8.92,
            useful_symbols_per_slot: 12,
            n_prb: None,
            backhaul_delay_ms: 10.0,
            backhaul_rate_gbps: 100.0,

            regime: None,
            p_gb: 0.0,
            p_bg: 1.0,
            sinr_good_db: 30.0,
            sinr_bad_db: 5.0,
            sinr_std_db: 3.0,
            sinr_truncation_db: 10.0,
            outage_good: 0.0,
            outage_bad: 0.2,
            mcs_table: None,

            lidar_fps: 30.0,
            latency_threshold_ms: 50.0,
            fixed_compression: Label::C3,
            centralized_control_loss: true,
            control_fallback: Label::C3,

            mode: Mode::Ics,
            learning: Learning::Centralized,
            meta_algorithm: None,
            seed: 0,
            episodes: 250,
            steps_per_episode: 400,
            max_episode_length_factor: 20.0,
            summary_tail: 25,

            priority_levels: 3,
            gamma: 0.95,
            gae_lambda: 0.95,
            learning_rate: 1e-4,
            minibatch: 64,

            ca_hidden: vec![64, 32],
            t_ddql: 8000,
            replay_capacity: 100_000,
            epsilon_start: 1.0,
            epsilon_end: 0.01,
            epsilon_decay_fraction: 0.8,
            fedavg_period_episodes: 1,
            stats_window: 20,
            sinr_norm_min_db: -10.0,
            sinr_norm_max_db: 40.0,
            latency_norm_max_ms: 500.0,
            occupancy_norm_frames: 5.0,

            ppo_hidden: vec![64, 64],
            ppo_clip: 0.2,
            ppo_c1: 0.5,
            ppo_c2: 0.01,
            ppo_epochs: 10,
            t_ppo: 512,
            advantage_normalization: true,
            tie_break: TieBreak::RoundRobin,

            meta_thresholds_db: vec![10.0, 20.0, 30.0],
            window: 1,
            meta_hidden: vec![64, 32],
            meta_train_inactive: true,
            eg_epsilon: 0.1,
            eg_alpha: 0.1,
            lts_rm: 1.0,
            lts_rho: 0.5,
            t_nlts: 128,
            nlts_history: 4096,
            nlts_train_steps: 32,
        }
    }
}

fn check_prob(field: &'static str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("{p} is not a probability in [0, 1]")))
    }
}

fn check_pos(field: &'static str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("{x} must be strictly positive")))
    }
}

fn check_count(field: &'static str, n: usize) -> Result<()> {
    if n > 0 {
        Ok(())
    } else {
        Err(Error::invalid(field, "must be a positive integer"))
    }
}

impl SimConfig {
    /// Parses a TOML document, fills defaults and validates.
    pub fn from_toml_str(document: &str) -> Result<Self> {
        let mut cfg: SimConfig =
            toml::from_str(document).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.resolve_regime(document_sets_probabilities(document))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("SimConfig always serializes")
    }

    /// Applies a named regime, overwriting the transition probabilities.
    pub fn set_regime(&mut self, regime: Regime) {
        let (p_gb, p_bg) = regime.transition_probabilities();
        self.regime = Some(regime);
        self.p_gb = p_gb;
        self.p_bg = p_bg;
    }

    fn resolve_regime(&mut self, explicit_probabilities: bool) -> Result<()> {
        if let Some(regime) = self.regime {
            let (p_gb, p_bg) = regime.transition_probabilities();
            if explicit_probabilities && (self.p_gb != p_gb || self.p_bg != p_bg) {
                return Err(Error::invalid(
                    "regime",
                    format!(
                        "{regime} implies p_gb={p_gb}, p_bg={p_bg} but the document sets p_gb={}, p_bg={}",
                        self.p_gb, self.p_bg
                    ),
                ));
            }
            self.p_gb = p_gb;
            self.p_bg = p_bg;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        check_count("n_ues", self.n_ues)?;
        check_pos("carrier_ghz", self.carrier_ghz)?;
        check_pos("bandwidth_mhz", self.bandwidth_mhz)?;
        if self.numerology > 6 {
            return Err(Error::invalid("numerology", "must be in 0..=6"));
        }
        check_pos("symbol_duration_us", self.symbol_duration_us)?;
        check_count("useful_symbols_per_slot", self.useful_symbols_per_slot)?;
        if self.useful_symbols_per_slot > 14 {
            return Err(Error::invalid(
                "useful_symbols_per_slot",
                "a slot carries at most 14 OFDM symbols",
            ));
        }
        if let Some(n) = self.n_prb {
            check_count("n_prb", n)?;
        }
        check_pos("backhaul_delay_ms", self.backhaul_delay_ms)?;
        check_pos("backhaul_rate_gbps", self.backhaul_rate_gbps)?;

        check_prob("p_gb", self.p_gb)?;
        check_prob("p_bg", self.p_bg)?;
        check_prob("outage_good", self.outage_good)?;
        check_prob("outage_bad", self.outage_bad)?;
        if !(self.sinr_std_db >= 0.0) {
            return Err(Error::invalid("sinr_std_db", "must be nonnegative"));
        }
        if !(self.sinr_truncation_db >= 0.0) {
            return Err(Error::invalid("sinr_truncation_db", "must be nonnegative"));
        }
        if let Some(rows) = &self.mcs_table {
            crate::channel::McsTable::from_entries(rows)?;
        }

        check_pos("lidar_fps", self.lidar_fps)?;
        check_pos("latency_threshold_ms", self.latency_threshold_ms)?;

        check_count("episodes", self.episodes)?;
        check_count("steps_per_episode", self.steps_per_episode)?;
        if !(self.max_episode_length_factor >= 1.0) {
            return Err(Error::invalid("max_episode_length_factor", "must be at least 1"));
        }
        check_count("summary_tail", self.summary_tail)?;

        check_count("priority_levels", self.priority_levels)?;
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::invalid("gamma", "must lie in (0, 1)"));
        }
        if !(self.gae_lambda > 0.0 && self.gae_lambda <= 1.0) {
            return Err(Error::invalid("gae_lambda", "must lie in (0, 1]"));
        }
        check_pos("learning_rate", self.learning_rate)?;
        check_count("minibatch", self.minibatch)?;

        if self.ca_hidden.contains(&0) {
            return Err(Error::invalid("ca_hidden", "layer widths must be positive"));
        }
        check_count("t_ddql", self.t_ddql)?;
        if self.replay_capacity < self.minibatch {
            return Err(Error::invalid("replay_capacity", "must hold at least one minibatch"));
        }
        check_prob("epsilon_start", self.epsilon_start)?;
        check_prob("epsilon_end", self.epsilon_end)?;
        if self.epsilon_end > self.epsilon_start {
            return Err(Error::invalid("epsilon_end", "must not exceed epsilon_start"));
        }
        check_prob("epsilon_decay_fraction", self.epsilon_decay_fraction)?;
        check_count("fedavg_period_episodes", self.fedavg_period_episodes)?;
        check_count("stats_window", self.stats_window)?;
        if !(self.sinr_norm_max_db > self.sinr_norm_min_db) {
            return Err(Error::invalid("sinr_norm_max_db", "must exceed sinr_norm_min_db"));
        }
        check_pos("latency_norm_max_ms", self.latency_norm_max_ms)?;
        check_pos("occupancy_norm_frames", self.occupancy_norm_frames)?;

        if self.ppo_hidden.contains(&0) {
            return Err(Error::invalid("ppo_hidden", "layer widths must be positive"));
        }
        check_pos("ppo_clip", self.ppo_clip)?;
        if !(self.ppo_c1 >= 0.0) {
            return Err(Error::invalid("ppo_c1", "must be nonnegative"));
        }
        if !(self.ppo_c2 >= 0.0) {
            return Err(Error::invalid("ppo_c2", "must be nonnegative"));
        }
        check_count("ppo_epochs", self.ppo_epochs)?;
        check_count("t_ppo", self.t_ppo)?;

        if self.meta_thresholds_db.is_empty() {
            return Err(Error::invalid("meta_thresholds_db", "needs at least one threshold"));
        }
        check_count("window", self.window)?;
        if self.meta_hidden.is_empty() || self.meta_hidden.contains(&0) {
            return Err(Error::invalid("meta_hidden", "needs at least one positive hidden layer"));
        }
        check_prob("eg_epsilon", self.eg_epsilon)?;
        if !(self.eg_alpha > 0.0 && self.eg_alpha <= 1.0) {
            return Err(Error::invalid("eg_alpha", "must lie in (0, 1]"));
        }
        if !(self.lts_rm >= 0.0) {
            return Err(Error::invalid("lts_rm", "must be nonnegative"));
        }
        check_pos("lts_rho", self.lts_rho)?;
        check_count("t_nlts", self.t_nlts)?;
        check_count("nlts_history", self.nlts_history)?;

        match self.mode {
            Mode::Meta if self.meta_algorithm.is_none() => Err(Error::invalid(
                "meta_algorithm",
                "mode META requires a meta algorithm",
            )),
            Mode::S | Mode::Ics | Mode::Ccs if self.learning != Learning::Centralized => {
                Err(Error::invalid(
                    "learning",
                    "the scheduling agent runs at the RAN; S, ICS and CCS require CENTRALIZED",
                ))
            }
            _ => Ok(()),
        }
    }

    /// Slot length in milliseconds (1 ms / 2^numerology).
    pub fn slot_ms(&self) -> f64 {
        1.0 / f64::from(1u32 << self.numerology)
    }

    pub fn frame_period_ms(&self) -> f64 {
        1000.0 / self.lidar_fps
    }

    pub fn subcarrier_spacing_khz(&self) -> f64 {
        15.0 * f64::from(1u32 << self.numerology)
    }

    /// Uplink PRB count. Uses the NR transmission-bandwidth tables for the
    /// common (bandwidth, SCS) pairs and falls back to a 90% occupancy estimate.
    pub fn n_prb(&self) -> usize {
        if let Some(n) = self.n_prb {
            return n;
        }
        let scs = self.subcarrier_spacing_khz();
        let table: &[(f64, f64, usize)] = &[
            (50.0, 120.0, 32),
            (100.0, 120.0, 66),
            (200.0, 120.0, 132),
            (400.0, 120.0, 264),
            (50.0, 60.0, 66),
            (100.0, 60.0, 135),
            (200.0, 60.0, 264),
        ];
        table
            .iter()
            .find(|(bw, s, _)| *bw == self.bandwidth_mhz && *s == scs)
            .map(|&(_, _, n)| n)
            .unwrap_or_else(|| ((self.bandwidth_mhz * 1e3 * 0.9) / (12.0 * scs)).floor() as usize)
    }

    pub fn initial_link_state(&self) -> crate::channel::LinkState {
        self.regime
            .map(Regime::initial_state)
            .unwrap_or(crate::channel::LinkState::Good)
    }

    /// Number of meta-agent actions.
    pub fn meta_arms(&self) -> usize {
        self.meta_thresholds_db.len()
    }
}

fn document_sets_probabilities(document: &str) -> bool {
    document
        .parse::<toml::Table>()
        .map(|t| t.contains_key("p_gb") || t.contains_key("p_bg"))
        .unwrap_or(false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = SimConfig::from_toml_str("").unwrap();
        assert_eq!(cfg.n_ues, 5);
        assert_eq!(cfg.latency_threshold_ms, 50.0);
        assert_eq!(cfg.priority_levels, 3);
        assert_eq!(cfg.gamma, 0.95);
        assert_eq!(cfg.gae_lambda, 0.95);
        assert_eq!(cfg.learning_rate, 1e-4);
        assert_eq!((cfg.ppo_clip, cfg.ppo_c1, cfg.ppo_c2), (0.2, 0.5, 0.01));
        assert_eq!(cfg.minibatch, 64);
        assert_eq!(cfg.window, 1);
        assert_eq!((cfg.t_ddql, cfg.t_ppo, cfg.t_nlts), (8000, 512, 128));
        assert_eq!((cfg.lts_rm, cfg.lts_rho), (1.0, 0.5));
        assert_eq!(cfg.useful_symbols_per_slot, 12);
        assert_eq!(cfg.episodes, 250);
        assert_eq!(cfg.steps_per_episode, 400);
    }

    #[test]
    fn scheduling_mode_rejects_federated() {
        let err = SimConfig::from_toml_str("mode = \"S\"\nlearning = \"FEDERATED\"").unwrap_err();
        assert!(matches!(err, Error::Invalid { field: "learning", .. }), "{err}");
    }

    #[test]
    fn probability_out_of_range() {
        let err = SimConfig::from_toml_str("p_gb = 1.2").unwrap_err();
        assert!(matches!(err, Error::Invalid { field: "p_gb", .. }), "{err}");
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(
            SimConfig::from_toml_str("n_uez = 3"),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn meta_needs_algorithm() {
        let err = SimConfig::from_toml_str("mode = \"META\"").unwrap_err();
        assert!(matches!(err, Error::Invalid { field: "meta_algorithm", .. }));
        SimConfig::from_toml_str("mode = \"META\"\nmeta_algorithm = \"NLTS\"").unwrap();
    }

    #[test]
    fn regimes() {
        assert_eq!(channel_regime("DC_1_6").unwrap(), (0.2, 1.0));
        assert_eq!(channel_regime("DC_1_2").unwrap(), (1.0, 1.0));
        assert_eq!(channel_regime("STATIC_G").unwrap(), (0.0, 1.0));
        assert_eq!(channel_regime("STATIC_B").unwrap(), (1.0, 0.0));
        assert!(matches!(channel_regime("DC_1_3"), Err(Error::UnknownRegime(_))));
    }

    #[test]
    fn duty_cycles_are_exact() {
        let (g, b) = channel_regime("DC_1_6").unwrap();
        assert_eq!(bad_duty_cycle(g, b), 0.2 / 1.2);
        assert!((bad_duty_cycle(g, b) - 1.0 / 6.0).abs() < 1e-15);
        let (g, b) = channel_regime("DC_1_2").unwrap();
        assert_eq!(bad_duty_cycle(g, b), 0.5);
    }

    #[test]
    fn regime_key_fills_probabilities() {
        let cfg = SimConfig::from_toml_str("regime = \"DC_1_6\"").unwrap();
        assert_eq!((cfg.p_gb, cfg.p_bg), (0.2, 1.0));
        let err = SimConfig::from_toml_str("regime = \"DC_1_6\"\np_gb = 0.5").unwrap_err();
        assert!(matches!(err, Error::Invalid { field: "regime", .. }));
    }

    #[test]
    fn default_prb_count() {
        let cfg = SimConfig::default();
        assert_eq!(cfg.n_prb(), 32);
        assert_eq!(cfg.slot_ms(), 0.125);
    }

    #[test]
    fn round_trip_fixed_documents() {
        for doc in [
            "",
            "mode = \"META\"\nmeta_algorithm = \"LTS\"\nregime = \"DC_1_2\"\nseed = 17",
            "mode = \"C\"\nlearning = \"FEDERATED\"\nlatency_threshold_ms = 30.0",
        ] {
            let cfg = SimConfig::from_toml_str(doc).unwrap();
            let again = SimConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
            assert_eq!(cfg, again);
        }
    }

    #[test]
    fn custom_mcs_table_round_trips() {
        let rows: Vec<String> = (0..29)
            .map(|i| format!("{{ threshold = {}.0, efficiency = {} }}", i - 6, 0.25 * (i + 1) as f64))
            .collect();
        let doc = format!("mcs_table = [{}]", rows.join(", "));
        let cfg = SimConfig::from_toml_str(&doc).unwrap();
        let again = SimConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, again);
        let short = "mcs_table = [{ threshold = 0.0, efficiency = 1.0 }]";
        assert!(SimConfig::from_toml_str(short).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn serialize_then_load_is_identity(
                n in 1usize..12,
                tau in 1.0f64..200.0,
                p_gb in 0.0f64..=1.0,
                p_bg in 0.0f64..=1.0,
                seed in any::<u64>(),
                lr in 1e-6f64..1e-1,
                std in 0.0f64..6.0,
            ) {
                let cfg = SimConfig {
                    n_ues: n,
                    latency_threshold_ms: tau,
                    p_gb,
                    p_bg,
                    seed,
                    learning_rate: lr,
                    sinr_std_db: std,
                    mode: Mode::C,
                    learning: Learning::Federated,
                    ..SimConfig::default()
                };
                cfg.validate().unwrap();
                let loaded = SimConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
                prop_assert_eq!(&loaded, &cfg);
                let again = SimConfig::from_toml_str(&loaded.to_toml_string()).unwrap();
                prop_assert_eq!(again, loaded);
            }
        }
    }
}
