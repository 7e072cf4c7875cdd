//! Two-state Markov uplink channel and the SINR -> MCS -> capacity ladder.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::{McsEntry, SimConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkState {
    Good,
    Bad,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    pub state: LinkState,
    pub sinr_db: f64,
    /// Only ever set in the Bad state.
    pub outage: bool,
}

/// One Markov step: G -> B with `p_gb`, B -> G with `p_bg`.
pub fn step_markov<R: Rng + ?Sized>(current: LinkState, p_gb: f64, p_bg: f64, rng: &mut R) -> LinkState {
    match current {
        LinkState::Good if rng.random::<f64>() < p_gb => LinkState::Bad,
        LinkState::Bad if rng.random::<f64>() < p_bg => LinkState::Good,
        s => s,
    }
}

/// Draws the SINR (dB) and outage flag for one slot.
///
/// SINR is Gaussian around the state mean with `sinr_std_db` spread,
/// truncated to `mean +- sinr_truncation_db`.
pub fn sample_sinr<R: Rng + ?Sized>(state: LinkState, rng: &mut R, cfg: &SimConfig) -> (f64, bool) {
    let (mean, p_out) = match state {
        LinkState::Good => (cfg.sinr_good_db, cfg.outage_good),
        LinkState::Bad => (cfg.sinr_bad_db, cfg.outage_bad),
    };
    let sinr = if cfg.sinr_std_db > 0.0 {
        let limit = cfg.sinr_truncation_db;
        loop {
            let z: f64 = StandardNormal.sample(rng);
            let offset = z * cfg.sinr_std_db;
            if offset.abs() <= limit {
                break mean + offset;
            }
        }
    } else {
        mean
    };
    let outage = p_out > 0.0 && rng.random::<f64>() < p_out;
    (sinr, outage)
}

/// Spectral efficiencies (bits per resource element) of the default ladder:
/// the NR 256QAM MCS table with the 64QAM-table QPSK point 0.3066 inserted
/// so that the ladder has 29 strictly increasing entries.
pub const DEFAULT_EFFICIENCIES: [f64; 29] = [
    0.2344, 0.3066, 0.3770, 0.6016, 0.8770, 1.1758, 1.4766, 1.6953, 1.9141, 2.1602, 2.4063,
    2.5703, 2.7305, 3.0293, 3.3223, 3.6094, 3.9023, 4.2129, 4.5234, 4.8164, 5.1152, 5.3320,
    5.5547, 5.8906, 6.2266, 6.5703, 6.9141, 7.1602, 7.4063,
];

pub const MAX_MCS: usize = 28;

#[derive(Debug, Clone, PartialEq)]
pub struct McsTable {
    thresholds: Vec<f64>,
    efficiencies: Vec<f64>,
}

impl Default for McsTable {
    fn default() -> Self {
        Self {
            thresholds: (0..DEFAULT_EFFICIENCIES.len()).map(|i| -6.0 + i as f64).collect(),
            efficiencies: DEFAULT_EFFICIENCIES.to_vec(),
        }
    }
}

impl McsTable {
    pub fn new(thresholds: Vec<f64>, efficiencies: Vec<f64>) -> Result<Self> {
        if thresholds.len() != efficiencies.len() || thresholds.is_empty() {
            return Err(Error::invalid(
                "mcs_table",
                "thresholds and efficiencies must be non-empty and equally long",
            ));
        }
        if thresholds.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("mcs_table", "thresholds must be strictly increasing"));
        }
        if efficiencies[0] <= 0.0 || efficiencies.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid(
                "mcs_table",
                "efficiencies must be positive and strictly increasing",
            ));
        }
        Ok(Self {
            thresholds,
            efficiencies,
        })
    }

    pub fn from_entries(rows: &[McsEntry]) -> Result<Self> {
        if rows.len() != MAX_MCS + 1 {
            return Err(Error::invalid(
                "mcs_table",
                format!("expected {} rows, got {}", MAX_MCS + 1, rows.len()),
            ));
        }
        Self::new(
            rows.iter().map(|r| r.threshold).collect(),
            rows.iter().map(|r| r.efficiency).collect(),
        )
    }

    pub fn from_config(cfg: &SimConfig) -> Self {
        match &cfg.mcs_table {
            Some(rows) => Self::from_entries(rows).expect("validated config"),
            None => Self::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn efficiency(&self, mcs: usize) -> f64 {
        self.efficiencies[mcs]
    }
}

/// Largest index whose cutoff is at or below `sinr_db`; 0 below the ladder.
pub fn sinr_to_mcs(sinr_db: f64, table: &McsTable) -> usize {
    table
        .thresholds
        .partition_point(|&t| t <= sinr_db)
        .saturating_sub(1)
}

/// Bits carried by one OFDM symbol across the whole carrier.
pub fn symbol_capacity_bits(mcs: usize, table: &McsTable, n_prb: usize) -> f64 {
    n_prb as f64 * 12.0 * table.efficiency(mcs)
}

/// Per-UE channel: Markov chain plus per-slot SINR/outage draw.
#[derive(Debug, Clone)]
pub struct UeChannel {
    current: ChannelState,
}

impl UeChannel {
    pub fn new(initial: LinkState, cfg: &SimConfig) -> Self {
        let sinr_db = match initial {
            LinkState::Good => cfg.sinr_good_db,
            LinkState::Bad => cfg.sinr_bad_db,
        };
        Self {
            current: ChannelState {
                state: initial,
                sinr_db,
                outage: false,
            },
        }
    }

    pub fn current(&self) -> ChannelState {
        self.current
    }

    /// Advances one slot and returns the new observation.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R, cfg: &SimConfig) -> ChannelState {
        let state = step_markov(self.current.state, cfg.p_gb, cfg.p_bg, rng);
        let (sinr_db, outage) = sample_sinr(state, rng, cfg);
        self.current = ChannelState {
            state,
            sinr_db,
            outage,
        };
        self.current
    }
}
