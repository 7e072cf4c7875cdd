//! Slot-level uplink engine: per-UE buffers, scheduled service, outage stalls,
//! backhaul delay and per-frame latency accounting.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::app::{Frame, Label};
use crate::channel::{sinr_to_mcs, symbol_capacity_bits, ChannelState, McsTable};
use crate::config::SimConfig;

/// Residual below which a frame counts as fully transmitted.
const BIT_EPS: f64 = 1e-6;

/// Radio view of one UE during one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UeRadio {
    pub channel: ChannelState,
    pub mcs: usize,
    pub symbol_capacity_bits: f64,
}

impl UeRadio {
    pub fn new(channel: ChannelState, table: &McsTable, n_prb: usize) -> Self {
        let mcs = sinr_to_mcs(channel.sinr_db, table);
        Self {
            channel,
            mcs,
            symbol_capacity_bits: symbol_capacity_bits(mcs, table, n_prb),
        }
    }
}

#[derive(Debug, Clone)]
struct Queued {
    frame: Frame,
    remaining_bits: f64,
    first_service_ms: Option<f64>,
}

/// Encoder stage plus FIFO uplink buffer of one UE.
#[derive(Debug, Clone, Default)]
pub struct UeQueue {
    encoding: VecDeque<Frame>,
    pending: VecDeque<Queued>,
    occupancy_bits: f64,
}

impl UeQueue {
    pub fn new() -> Self {
        Self::default()
    }

    /// Hands a freshly generated frame to the encoder.
    pub fn submit(&mut self, frame: Frame) {
        self.encoding.push_back(frame);
    }

    /// Moves every frame whose encoding finished by `now_ms` into the buffer.
    pub fn admit(&mut self, now_ms: f64) {
        while let Some(f) = self.encoding.front() {
            if f.ready_time_ms() > now_ms + 1e-9 {
                break;
            }
            let frame = self.encoding.pop_front().unwrap();
            self.occupancy_bits += frame.size_bits;
            self.pending.push_back(Queued {
                remaining_bits: frame.size_bits,
                frame,
                first_service_ms: None,
            });
        }
    }

    /// Inserts a frame directly into the buffer, bypassing the encoder.
    pub fn enqueue(&mut self, frame: Frame) {
        self.occupancy_bits += frame.size_bits;
        self.pending.push_back(Queued {
            remaining_bits: frame.size_bits,
            frame,
            first_service_ms: None,
        });
    }

    pub fn occupancy_bits(&self) -> f64 {
        self.occupancy_bits
    }

    pub fn frames_buffered(&self) -> usize {
        self.pending.len()
    }

    pub fn frames_encoding(&self) -> usize {
        self.encoding.len()
    }

    /// Bits still inside the encoder.
    pub fn encoding_bits(&self) -> f64 {
        self.encoding.iter().map(|f| f.size_bits).sum()
    }

    /// Sum of per-frame residuals; equals `occupancy_bits` up to rounding.
    pub fn residual_sum(&self) -> f64 {
        self.pending.iter().map(|q| q.remaining_bits).sum()
    }

    pub fn clear(&mut self) {
        self.encoding.clear();
        self.pending.clear();
        self.occupancy_bits = 0.0;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveryRecord {
    pub ue_id: usize,
    pub seq: u64,
    pub label: Label,
    pub size_bits: f64,
    pub gen_time_ms: f64,
    pub delivery_time_ms: f64,
    pub e2e_latency_ms: f64,
    /// Time between the first and the last transmitted bit, slot-aligned.
    pub phy_latency_ms: f64,
    pub map_value: f64,
    pub deadline_met: bool,
}

/// Per-UE PHY outcome of one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhyOutcome {
    /// No grant or nothing to send.
    Idle,
    Served,
    /// Granted symbols were lost to outage.
    Lost,
}

#[derive(Debug, Clone, Default)]
pub struct SlotOutcome {
    pub deliveries: Vec<DeliveryRecord>,
    pub served_bits: Vec<f64>,
    pub phy: Vec<Option<bool>>,
}

/// OFDM symbols required to empty `occupancy_bits` at the given per-symbol capacity.
pub fn symbols_needed(occupancy_bits: f64, symbol_capacity_bits: f64) -> usize {
    if occupancy_bits <= BIT_EPS {
        0
    } else {
        (occupancy_bits / symbol_capacity_bits).ceil() as usize
    }
}

pub fn e2e_latency(gen_time_ms: f64, delivery_time_ms: f64) -> f64 {
    delivery_time_ms - gen_time_ms
}

/// Serves one slot starting at `slot_start_ms`.
///
/// Each UE drains `min(grant * capacity, occupancy)` bits unless it is in
/// outage, in which case nothing moves. A frame whose last bit leaves in
/// this slot reaches the remote host at slot end plus the backhaul delay.
///
/// # Panics
///
/// If the grants exceed the useful symbols of a slot.
pub fn advance_slot(
    queues: &mut [UeQueue],
    allocation: &[usize],
    radios: &[UeRadio],
    slot_start_ms: f64,
    cfg: &SimConfig,
) -> SlotOutcome {
    let total: usize = allocation.iter().sum();
    assert!(
        total <= cfg.useful_symbols_per_slot,
        "allocation of {total} symbols exceeds the {} available",
        cfg.useful_symbols_per_slot
    );
    assert_eq!(queues.len(), allocation.len());
    assert_eq!(queues.len(), radios.len());

    let slot_end = slot_start_ms + cfg.slot_ms();
    let arrival = slot_end + cfg.backhaul_delay_ms;
    let mut out = SlotOutcome {
        deliveries: Vec::new(),
        served_bits: vec![0.0; queues.len()],
        phy: vec![None; queues.len()],
    };

    for (u, q) in queues.iter_mut().enumerate() {
        let grant = allocation[u];
        if grant == 0 || q.pending.is_empty() {
            continue;
        }
        if radios[u].channel.outage {
            out.phy[u] = Some(false);
            continue;
        }
        out.phy[u] = Some(true);
        let mut budget = grant as f64 * radios[u].symbol_capacity_bits;
        while budget > 0.0 {
            let Some(head) = q.pending.front_mut() else {
                break;
            };
            head.first_service_ms.get_or_insert(slot_start_ms);
            let take = budget.min(head.remaining_bits);
            head.remaining_bits -= take;
            budget -= take;
            q.occupancy_bits -= take;
            out.served_bits[u] += take;
            if head.remaining_bits <= BIT_EPS {
                let done = q.pending.pop_front().unwrap();
                q.occupancy_bits -= done.remaining_bits;
                let latency = e2e_latency(done.frame.gen_time_ms, arrival);
                out.deliveries.push(DeliveryRecord {
                    ue_id: u,
                    seq: done.frame.seq,
                    label: done.frame.label,
                    size_bits: done.frame.size_bits,
                    gen_time_ms: done.frame.gen_time_ms,
                    delivery_time_ms: arrival,
                    e2e_latency_ms: latency,
                    phy_latency_ms: slot_end - done.first_service_ms.unwrap_or(slot_start_ms),
                    map_value: done.frame.map_value,
                    deadline_met: latency <= cfg.latency_threshold_ms,
                });
            }
        }
        if q.pending.is_empty() {
            q.occupancy_bits = 0.0;
        }
    }
    out
}

/// Mean, population standard deviation, minimum and maximum of a window.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

/// Fixed-length FIFO window of samples with a cached summary.
#[derive(Debug, Clone)]
pub struct RollingWindow {
    capacity: usize,
    samples: VecDeque<f64>,
    summary: Summary,
}

impl RollingWindow {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self {
            capacity,
            samples: VecDeque::with_capacity(capacity),
            summary: Summary::default(),
        }
    }

    pub fn push(&mut self, x: f64) {
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back(x);
        self.refresh();
    }

    fn refresh(&mut self) {
        let n = self.samples.len() as f64;
        let mean = self.samples.iter().sum::<f64>() / n;
        let var = self.samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let (min, max) = self
            .samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        // rounding can push the mean a hair outside [min, max] for constant windows
        self.summary = Summary {
            mean: mean.clamp(min, max),
            std: var.sqrt(),
            min,
            max,
        };
    }

    /// Zero summary until the first sample arrives.
    pub fn summary(&self) -> Summary {
        self.summary
    }

    pub fn last(&self) -> Option<f64> {
        self.samples.back().copied()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().copied()
    }
}

/// Per-UE measurement windows that feed the agents' state vectors.
#[derive(Debug, Clone)]
pub struct LayerStats {
    /// Application-layer E2E latency, one sample per reception.
    pub app_latency: RollingWindow,
    /// Application-layer PRR, one sample per reception.
    pub app_prr: RollingWindow,
    /// PHY service latency (first to last bit), one sample per reception.
    pub phy_latency: RollingWindow,
    /// PHY transport-block success, one sample per granted slot.
    pub phy_prr: RollingWindow,
    /// MAC buffer occupancy in bits, one sample per decision.
    pub occupancy: RollingWindow,
    /// SINR and MCS, one sample per decision.
    pub sinr: RollingWindow,
    pub mcs: RollingWindow,
    delivered_flags: VecDeque<(u64, bool)>,
    window: usize,
}

impl LayerStats {
    pub fn new(window: usize) -> Self {
        Self {
            app_latency: RollingWindow::new(window),
            app_prr: RollingWindow::new(window),
            phy_latency: RollingWindow::new(window),
            phy_prr: RollingWindow::new(window),
            occupancy: RollingWindow::new(window),
            sinr: RollingWindow::new(window),
            mcs: RollingWindow::new(window),
            delivered_flags: VecDeque::with_capacity(window),
            window,
        }
    }

    pub fn on_generated(&mut self, seq: u64) {
        if self.delivered_flags.len() == self.window {
            self.delivered_flags.pop_front();
        }
        self.delivered_flags.push_back((seq, false));
    }

    /// Records a reception and pushes a PRR sample: delivered fraction of the
    /// most recently generated frames.
    pub fn on_delivered(&mut self, record: &DeliveryRecord) {
        if let Some(entry) = self.delivered_flags.iter_mut().find(|(s, _)| *s == record.seq) {
            entry.1 = true;
        }
        let n = self.delivered_flags.len().max(1);
        let delivered = self.delivered_flags.iter().filter(|(_, d)| *d).count();
        self.app_prr.push(delivered as f64 / n as f64);
        self.app_latency.push(record.e2e_latency_ms);
        self.phy_latency.push(record.phy_latency_ms);
    }

    pub fn on_phy(&mut self, success: bool) {
        self.phy_prr.push(if success { 1.0 } else { 0.0 });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::app::{generate_frame, Label};
    use crate::channel::{LinkState, McsTable};

    fn radio(sinr: f64, outage: bool) -> UeRadio {
        UeRadio::new(
            ChannelState {
                state: if outage { LinkState::Bad } else { LinkState::Good },
                sinr_db: sinr,
                outage,
            },
            &McsTable::default(),
            32,
        )
    }

    fn frame_of(bits: f64, gen: f64) -> Frame {
        Frame {
            ue_id: 0,
            seq: 0,
            gen_time_ms: gen,
            size_bits: bits,
            enc_delay_ms: 0.0,
            map_value: 0.5,
            label: Label::C1,
        }
    }

    #[test]
    fn symbols_needed_examples() {
        assert_eq!(symbols_needed(0.0, 90.0), 0);
        assert_eq!(symbols_needed(1000.0, 90.0), 12);
        assert!(symbols_needed(2000.0, 90.0) >= symbols_needed(1000.0, 90.0));
    }

    #[test]
    fn full_frame_over_21_slots() {
        let cfg = SimConfig::default();
        let mut qs = vec![UeQueue::new()];
        qs[0].enqueue(frame_of(708_333.0, 0.0));
        let r = [radio(30.0, false)];
        assert!((r[0].symbol_capacity_bits - 2844.0).abs() < 0.5);
        let mut slots = 0;
        let mut delivered = None;
        while delivered.is_none() {
            let out = advance_slot(&mut qs, &[12], &r, slots as f64 * cfg.slot_ms(), &cfg);
            slots += 1;
            delivered = out.deliveries.into_iter().next();
        }
        assert_eq!(slots, (708_333.0f64 / (12.0 * r[0].symbol_capacity_bits)).ceil() as usize);
        assert_eq!(slots, 21);
        let d = delivered.unwrap();
        assert!((d.e2e_latency_ms - (21.0 * 0.125 + 10.0)).abs() < 1e-9);
    }

    #[test]
    fn outage_stalls() {
        let cfg = SimConfig::default();
        let mut qs = vec![UeQueue::new()];
        qs[0].enqueue(frame_of(50_000.0, 0.0));
        let out = advance_slot(&mut qs, &[12], &[radio(5.0, true)], 0.0, &cfg);
        assert!(out.deliveries.is_empty());
        assert_eq!(qs[0].occupancy_bits(), 50_000.0);
        assert_eq!(out.phy[0], Some(false));
    }

    #[test]
    fn empty_queue_noop() {
        let cfg = SimConfig::default();
        let mut qs = vec![UeQueue::new(), UeQueue::new()];
        let out = advance_slot(&mut qs, &[6, 6], &[radio(30.0, false); 2], 0.0, &cfg);
        assert!(out.deliveries.is_empty());
        assert_eq!(out.served_bits, vec![0.0, 0.0]);
        assert_eq!(out.phy, vec![None, None]);
    }

    #[test]
    #[should_panic(expected = "exceeds")]
    fn over_allocation_is_a_contract_violation() {
        let cfg = SimConfig::default();
        let mut qs = vec![UeQueue::new(), UeQueue::new()];
        advance_slot(&mut qs, &[7, 6], &[radio(30.0, false); 2], 0.0, &cfg);
    }

    #[test]
    fn minimal_latency_c3() {
        // encoded frame ready exactly at a slot boundary and served in one slot
        let cfg = SimConfig::default();
        let c3 = Label::C3.config();
        let mut f = generate_frame(0, 0.0, 0, &c3, &cfg);
        f.size_bits = 1000.0;
        let mut qs = vec![UeQueue::new()];
        qs[0].submit(f);
        let slot = cfg.slot_ms();
        let mut t = 0.0;
        let mut rec = None;
        for s in 0..100 {
            t = s as f64 * slot;
            qs[0].admit(t);
            let out = advance_slot(&mut qs, &[12], &[radio(30.0, false)], t, &cfg);
            if let Some(d) = out.deliveries.into_iter().next() {
                rec = Some(d);
                break;
            }
        }
        let d = rec.unwrap();
        assert!((t - 5.5).abs() < 1e-12);
        assert!((d.e2e_latency_ms - 15.625).abs() < 1e-12);
        assert!(d.deadline_met);
    }

    #[test]
    fn deadline_comparison() {
        let cfg = SimConfig::default();
        let mut qs = vec![UeQueue::new()];
        // 0.125 slot + 10 backhaul = 10.125; gen at -39.775 gives latency 49.9
        qs[0].enqueue(frame_of(100.0, -39.775));
        let out = advance_slot(&mut qs, &[1], &[radio(30.0, false)], 0.0, &cfg);
        let d = &out.deliveries[0];
        assert!((d.e2e_latency_ms - 49.9).abs() < 1e-9);
        assert!(d.deadline_met);
    }

    #[test]
    fn window_summaries() {
        let mut w = RollingWindow::new(3);
        assert_eq!(w.summary(), Summary::default());
        w.push(4.0);
        assert_eq!(
            w.summary(),
            Summary {
                mean: 4.0,
                std: 0.0,
                min: 4.0,
                max: 4.0
            }
        );
        let mut w = RollingWindow::new(3);
        for x in [1.0, 2.0, 3.0] {
            w.push(x);
        }
        let s = w.summary();
        assert!((s.mean - 2.0).abs() < 1e-15);
        assert!((s.std - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        w.push(10.0);
        assert_eq!(w.samples().collect::<Vec<_>>(), vec![2.0, 3.0, 10.0]);
        assert_eq!(w.summary().min, 2.0);
    }

    #[test]
    fn prr_counts_in_flight_frames() {
        let mut st = LayerStats::new(4);
        for s in 0..4 {
            st.on_generated(s);
        }
        let rec = DeliveryRecord {
            ue_id: 0,
            seq: 1,
            label: Label::C1,
            size_bits: 1.0,
            gen_time_ms: 0.0,
            delivery_time_ms: 20.0,
            e2e_latency_ms: 20.0,
            phy_latency_ms: 1.0,
            map_value: 0.257,
            deadline_met: true,
        };
        st.on_delivered(&rec);
        assert_eq!(st.app_prr.last(), Some(0.25));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn bits_are_conserved(
                sizes in proptest::collection::vec(1_000.0f64..2_000_000.0, 1..6),
                grants in proptest::collection::vec(0usize..=12, 1..200),
                outages in proptest::collection::vec(any::<bool>(), 1..200),
            ) {
                let cfg = SimConfig::default();
                let mut qs = vec![UeQueue::new()];
                let generated: f64 = sizes.iter().sum();
                for (i, &s) in sizes.iter().enumerate() {
                    let mut f = frame_of(s, 0.0);
                    f.seq = i as u64;
                    qs[0].enqueue(f);
                }
                let mut delivered = 0.0;
                let mut served = 0.0;
                let mut last_t = f64::NEG_INFINITY;
                for (i, &g) in grants.iter().enumerate() {
                    let out_flag = outages[i % outages.len()];
                    let r = [radio(if out_flag { 5.0 } else { 30.0 }, out_flag)];
                    let out = advance_slot(&mut qs, &[g], &r, i as f64 * 0.125, &cfg);
                    for d in &out.deliveries {
                        prop_assert!(d.delivery_time_ms >= last_t);
                        last_t = d.delivery_time_ms;
                        delivered += d.size_bits;
                    }
                    served += out.served_bits[0];
                    let in_queue = qs[0].occupancy_bits();
                    prop_assert!((in_queue - qs[0].residual_sum()).abs() < 1e-3);
                    prop_assert!((generated - in_queue - served).abs() < 1e-3 * sizes.len() as f64);
                    prop_assert!(delivered <= served + 1e-3 * sizes.len() as f64);
                }
            }

            #[test]
            fn latency_nonincreasing_in_grant(
                bits in 10_000.0f64..3_000_000.0,
                g in 1usize..12,
            ) {
                let cfg = SimConfig::default();
                let run = |grant: usize| {
                    let mut qs = vec![UeQueue::new()];
                    qs[0].enqueue(frame_of(bits, 0.0));
                    let r = [radio(30.0, false)];
                    for s in 0..100_000 {
                        let out = advance_slot(&mut qs, &[grant], &r, s as f64 * 0.125, &cfg);
                        if let Some(d) = out.deliveries.first() {
                            return d.e2e_latency_ms;
                        }
                    }
                    f64::INFINITY
                };
                prop_assert!(run(g + 1) <= run(g));
            }
        }
    }
}
