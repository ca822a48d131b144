//! Abstract wireless link: unit-disk connectivity, air time, packet success
//! probability as a function of SNR, and the payload throughput formula
//! `T = (L - C) / L * R * f(gamma)`.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::kernel::SimTime;
use crate::mobility::Position;
use crate::rng::RngStream;

#[derive(Debug, Error, PartialEq)]
pub enum LinkError {
    #[error("packet size {packet} must exceed header overhead {header}")]
    HeaderTooLarge { packet: f64, header: f64 },
    #[error("invalid link parameter {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
}

/// Packet success probability as a function of SNR.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SuccessCurve {
    /// 1 at or above `threshold`, 0 below.
    Step { threshold: f64 },
    /// `1 - exp(-k * gamma)`.
    Exponential { k: f64 },
}

impl Default for SuccessCurve {
    fn default() -> Self {
        SuccessCurve::Step { threshold: 1.0 }
    }
}

impl SuccessCurve {
    pub fn name(&self) -> &'static str {
        match self {
            SuccessCurve::Step { .. } => "step",
            SuccessCurve::Exponential { .. } => "exponential",
        }
    }

    /// The curve's parameter (threshold or rate).
    pub fn parameter(&self) -> f64 {
        match *self {
            SuccessCurve::Step { threshold } => threshold,
            SuccessCurve::Exponential { k } => k,
        }
    }
}

impl FromStr for SuccessCurve {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "step" => Ok(SuccessCurve::Step { threshold: 1.0 }),
            "exponential" => Ok(SuccessCurve::Exponential { k: 1.0 }),
            other => Err(format!("unknown success curve '{other}' (expected step or exponential)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkModel {
    pub tx_range: f64,
    /// Raw channel rate in bits per second.
    pub bitrate: f64,
    /// Per-packet overhead in bytes (MAC, IP and UDP headers).
    pub header_bytes: u32,
    /// Distance at which the SNR ratio equals 1.
    pub snr_reference_distance: f64,
    pub curve: SuccessCurve,
    /// Transmit FIFO capacity, excluding the frame on air.
    pub queue_len: usize,
}

impl Default for LinkModel {
    fn default() -> Self {
        LinkModel {
            tx_range: 250.0,
            bitrate: 2e6,
            header_bytes: 58,
            snr_reference_distance: 250.0,
            curve: SuccessCurve::default(),
            queue_len: 50,
        }
    }
}

impl LinkModel {
    pub fn validate(&self) -> Result<(), LinkError> {
        let positive = [
            ("tx_range_m", self.tx_range),
            ("bitrate_bps", self.bitrate),
            ("snr_reference_distance_m", self.snr_reference_distance),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(LinkError::InvalidParameter { name, value });
            }
        }
        let p = self.curve.parameter();
        if !(p >= 0.0 && p.is_finite()) {
            return Err(LinkError::InvalidParameter {
                name: "success_param",
                value: p,
            });
        }
        Ok(())
    }

    /// SNR ratio at distance `d`: `(d_ref / d)^2`, with `d` floored at 1 mm.
    pub fn gamma_at(&self, distance: f64) -> f64 {
        let d = distance.max(1e-3);
        (self.snr_reference_distance / d).powi(2)
    }

    /// Seconds needed to put `payload_bytes` plus the header on the air.
    pub fn air_time(&self, payload_bytes: u32) -> f64 {
        f64::from(payload_bytes + self.header_bytes) * 8.0 / self.bitrate
    }
}

/// Probability of receiving a packet correctly at SNR `gamma`.
pub fn packet_success(gamma: f64, curve: &SuccessCurve) -> f64 {
    if !(gamma > 0.0) {
        return 0.0;
    }
    match *curve {
        SuccessCurve::Step { threshold } => {
            if gamma >= threshold {
                1.0
            } else {
                0.0
            }
        }
        SuccessCurve::Exponential { k } => 1.0 - (-k * gamma).exp(),
    }
}

/// Payload rate `(L - C) / L * R * f(gamma)` for packet size `L` and header
/// overhead `C` in bytes, channel rate `R` in bits/s.
pub fn effective_throughput(packet_bytes: f64, header_bytes: f64, bitrate: f64, gamma: f64, curve: &SuccessCurve) -> Result<f64, LinkError> {
    if !(packet_bytes > header_bytes) {
        return Err(LinkError::HeaderTooLarge {
            packet: packet_bytes,
            header: header_bytes,
        });
    }
    Ok(payload_rate(packet_bytes, header_bytes, bitrate, packet_success(gamma, curve)))
}

/// The throughput formula with `f(gamma)` supplied directly.
pub fn payload_rate(packet_bytes: f64, header_bytes: f64, bitrate: f64, success: f64) -> f64 {
    (packet_bytes - header_bytes) / packet_bytes * bitrate * success
}

/// Symmetric adjacency lists. `neighbors(i)` is sorted by node index.
#[derive(Clone, Debug, PartialEq)]
pub struct Adjacency {
    lists: Vec<Vec<(usize, f64)>>,
}

impl Adjacency {
    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    /// Neighbors of `node` with their distances.
    pub fn neighbors(&self, node: usize) -> &[(usize, f64)] {
        &self.lists[node]
    }

    pub fn is_adjacent(&self, a: usize, b: usize) -> bool {
        self.lists[a].binary_search_by_key(&b, |&(n, _)| n).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.lists.iter().map(Vec::len).sum::<usize>() / 2
    }
}

/// Unit-disk graph: `a` and `b` are linked iff their distance is at most
/// `tx_range`.
pub fn connectivity(positions: &[Position], model: &LinkModel) -> Adjacency {
    let mut lists = vec![Vec::new(); positions.len()];
    for a in 0..positions.len() {
        for b in (a + 1)..positions.len() {
            let d = positions[a].distance(positions[b]);
            if d <= model.tx_range {
                lists[a].push((b, d));
                lists[b].push((a, d));
            }
        }
    }
    for l in &mut lists {
        l.sort_by_key(|&(n, _)| n);
    }
    Adjacency { lists }
}

/// Neighbors of a single node, sorted by index.
pub fn neighborhood(sender: usize, positions: &[Position], model: &LinkModel) -> Vec<(usize, f64)> {
    positions
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != sender)
        .filter_map(|(i, p)| {
            let d = positions[sender].distance(*p);
            (d <= model.tx_range).then_some((i, d))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Receiver {
    Unicast(usize),
    Broadcast,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DropReason {
    NoRoute,
    OutOfRange,
    ChannelLoss,
    QueueOverflow,
    TtlExpired,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::NoRoute => "no-route",
            DropReason::OutOfRange => "out-of-range",
            DropReason::ChannelLoss => "channel-loss",
            DropReason::QueueOverflow => "queue-overflow",
            DropReason::TtlExpired => "ttl-expired",
        }
    }
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DropReason {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            DropReason::NoRoute,
            DropReason::OutOfRange,
            DropReason::ChannelLoss,
            DropReason::QueueOverflow,
            DropReason::TtlExpired,
        ]
        .into_iter()
        .find(|r| r.as_str() == s)
        .ok_or_else(|| format!("unknown drop reason '{s}'"))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Transmission {
    pub sender: usize,
    pub receiver: Receiver,
    pub payload_bytes: u32,
    pub start: SimTime,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TxOutcome {
    Delivered { receiver: usize, at: SimTime },
    Dropped { receiver: usize, reason: DropReason },
}

/// Decides the fate of one transmission. `neighbors` is the sender's
/// neighborhood at `tx.start`. Each intended receiver gets exactly one
/// outcome, and one uniform draw is consumed per adjacent receiver.
pub fn transmit(tx: &Transmission, rng: &mut RngStream, neighbors: &[(usize, f64)], model: &LinkModel) -> Vec<TxOutcome> {
    let arrive = tx.start + model.air_time(tx.payload_bytes);
    let mut decide = |receiver: usize, distance: f64| {
        let p = packet_success(model.gamma_at(distance), &model.curve);
        if rng.random::<f64>() < p {
            TxOutcome::Delivered { receiver, at: arrive }
        } else {
            TxOutcome::Dropped {
                receiver,
                reason: DropReason::ChannelLoss,
            }
        }
    };
    match tx.receiver {
        Receiver::Broadcast => neighbors.iter().map(|&(n, d)| decide(n, d)).collect(),
        Receiver::Unicast(to) => match neighbors.iter().find(|&&(n, _)| n == to) {
            Some(&(n, d)) => vec![decide(n, d)],
            None => vec![TxOutcome::Dropped {
                receiver: to,
                reason: DropReason::OutOfRange,
            }],
        },
    }
}

/// What happened to a frame offered to a [`TxQueue`].
#[derive(Debug, PartialEq)]
pub enum Offer<T> {
    /// The transmitter was idle; put this frame on the air now.
    StartNow(T),
    Queued,
    /// Queue full; this frame (the offered one, or a data frame evicted to
    /// make room for a priority frame) is handed back.
    Rejected(T),
}

/// Per-node transmit FIFO with tail drop. One frame is on the air at a time.
/// Priority frames (routing control) wait ahead of ordinary ones.
#[derive(Debug)]
pub struct TxQueue<T> {
    busy: bool,
    waiting: VecDeque<T>,
    /// The first `priority` waiting frames are priority frames.
    priority: usize,
    capacity: usize,
}

impl<T> TxQueue<T> {
    pub fn new(capacity: usize) -> Self {
        TxQueue {
            busy: false,
            waiting: VecDeque::new(),
            priority: 0,
            capacity,
        }
    }

    pub fn offer(&mut self, frame: T) -> Offer<T> {
        if !self.busy {
            self.busy = true;
            Offer::StartNow(frame)
        } else if self.waiting.len() < self.capacity {
            self.waiting.push_back(frame);
            Offer::Queued
        } else {
            Offer::Rejected(frame)
        }
    }

    /// Queues `frame` behind earlier priority frames but ahead of all
    /// ordinary ones. When full, the newest ordinary frame is evicted.
    pub fn offer_priority(&mut self, frame: T) -> Offer<T> {
        if !self.busy {
            self.busy = true;
            return Offer::StartNow(frame);
        }
        if self.priority >= self.capacity {
            return Offer::Rejected(frame);
        }
        self.waiting.insert(self.priority, frame);
        self.priority += 1;
        if self.waiting.len() > self.capacity {
            let evicted = self.waiting.pop_back().expect("queue is over capacity");
            return Offer::Rejected(evicted);
        }
        Offer::Queued
    }

    /// Called when the frame on air finishes; returns the next one to send.
    pub fn complete(&mut self) -> Option<T> {
        let next = self.waiting.pop_front();
        self.priority = self.priority.saturating_sub(1);
        self.busy = next.is_some();
        next
    }

    pub fn is_busy(&self) -> bool {
        self.busy
    }

    pub fn waiting(&self) -> usize {
        self.waiting.len()
    }

    pub fn iter_waiting(&self) -> impl Iterator<Item = &T> {
        self.waiting.iter()
    }
}
