//! LiDAR frame source and the Draco compression operating points.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    C1,
    C2,
    C3,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::C1, Label::C2, Label::C3];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Label {
        Label::ALL[i]
    }

    pub fn config(self) -> CompressionConfig {
        COMPRESSION_TABLE[self.index()]
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self)
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "C1" => Ok(Label::C1),
            "C2" => Ok(Label::C2),
            "C3" => Ok(Label::C3),
            _ => Err(Error::invalid("fixed_compression", format!("unknown configuration `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressionConfig {
    pub label: Label,
    /// Quantization bits.
    pub q: u32,
    /// Compression level.
    pub c: u32,
    pub rate_mbps: f64,
    pub enc_delay_ms: f64,
    pub map_value: f64,
}

const COMPRESSION_TABLE: [CompressionConfig; 3] = [
    CompressionConfig {
        label: Label::C1,
        q: 8,
        c: 10,
        rate_mbps: 21.25,
        enc_delay_ms: 8.21,
        map_value: 0.257,
    },
    CompressionConfig {
        label: Label::C2,
        q: 9,
        c: 5,
        rate_mbps: 31.35,
        enc_delay_ms: 6.97,
        map_value: 0.572,
    },
    CompressionConfig {
        label: Label::C3,
        q: 10,
        c: 0,
        rate_mbps: 41.35,
        enc_delay_ms: 5.50,
        map_value: 0.686,
    },
];

pub fn compression_table() -> [CompressionConfig; 3] {
    COMPRESSION_TABLE
}

/// Checks the ordering the agents rely on: rate and mAP increase from C1 to
/// C3 while encoding delay decreases.
pub fn check_table_ordering(table: &[CompressionConfig]) -> Result<()> {
    for w in table.windows(2) {
        if !(w[0].rate_mbps < w[1].rate_mbps
            && w[0].map_value < w[1].map_value
            && w[0].enc_delay_ms > w[1].enc_delay_ms)
        {
            return Err(Error::invalid(
                "compression_table",
                format!("{} -> {} breaks the rate/mAP/delay ordering", w[0].label, w[1].label),
            ));
        }
    }
    Ok(())
}

pub fn frame_size_bits(config: &CompressionConfig, fps: f64) -> f64 {
    config.rate_mbps * 1e6 / fps
}

/// Largest frame any configuration produces; used to normalize buffer features.
pub fn max_frame_bits(fps: f64) -> f64 {
    COMPRESSION_TABLE
        .iter()
        .map(|c| frame_size_bits(c, fps))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub ue_id: usize,
    pub seq: u64,
    pub gen_time_ms: f64,
    pub size_bits: f64,
    pub enc_delay_ms: f64,
    pub map_value: f64,
    pub label: Label,
}

impl Frame {
    /// Time at which the encoder hands the frame to the uplink buffer.
    pub fn ready_time_ms(&self) -> f64 {
        self.gen_time_ms + self.enc_delay_ms
    }
}

pub fn generate_frame(ue_id: usize, now_ms: f64, seq: u64, action: &CompressionConfig, cfg: &SimConfig) -> Frame {
    Frame {
        ue_id,
        seq,
        gen_time_ms: now_ms,
        size_bits: frame_size_bits(action, cfg.lidar_fps),
        enc_delay_ms: action.enc_delay_ms,
        map_value: action.map_value,
        label: action.label,
    }
}

/// Constant-rate frame clock of one UE.
#[derive(Debug, Clone)]
pub struct FrameSource {
    ue_id: usize,
    period_ms: f64,
    offset_ms: f64,
    next_seq: u64,
}

impl FrameSource {
    pub fn new(ue_id: usize, offset_ms: f64, cfg: &SimConfig) -> Self {
        Self {
            ue_id,
            period_ms: cfg.frame_period_ms(),
            offset_ms,
            next_seq: 0,
        }
    }

    /// Generation time of the next frame.
    pub fn next_time_ms(&self) -> f64 {
        self.offset_ms + self.next_seq as f64 * self.period_ms
    }

    pub fn emit(&mut self, action: &CompressionConfig, cfg: &SimConfig) -> Frame {
        let frame = generate_frame(self.ue_id, self.next_time_ms(), self.next_seq, action, cfg);
        self.next_seq += 1;
        frame
    }

    pub fn generated(&self) -> u64 {
        self.next_seq
    }
}
