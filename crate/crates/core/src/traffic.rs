//! Application sources: constant bit rate and MPEG-4-like variable bit rate.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, LogNormal};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::kernel::SimTime;
use crate::olsr::NodeId;
use crate::rng::RngStream;

#[derive(Debug, Error, PartialEq)]
pub enum TrafficError {
    #[error("{n_sources} sources need {needed} distinct nodes, only {n_nodes} available")]
    TooManySources { n_sources: usize, n_nodes: usize, needed: usize },
    #[error("invalid traffic parameter {name}: {message}")]
    Invalid { name: &'static str, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TrafficKind {
    Cbr,
    Vbr,
}

impl TrafficKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TrafficKind::Cbr => "cbr",
            TrafficKind::Vbr => "vbr",
        }
    }
}

impl fmt::Display for TrafficKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrafficKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cbr" => Ok(TrafficKind::Cbr),
            "vbr" => Ok(TrafficKind::Vbr),
            other => Err(format!("unknown traffic type '{other}' (expected cbr or vbr)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Flow {
    pub id: usize,
    pub source: NodeId,
    pub destination: NodeId,
    pub start: SimTime,
    pub stop: SimTime,
    pub kind: TrafficKind,
}

/// A data packet as handed to the network layer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Packet {
    pub id: u64,
    pub flow: usize,
    pub source: NodeId,
    pub destination: NodeId,
    pub payload_bytes: u32,
    /// Emission instant at the source application.
    pub emitted_at: SimTime,
    /// Frame sequence number within the flow (VBR only).
    pub frame: Option<u64>,
    pub hops: u32,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CbrConfig {
    pub packet_size: u32,
    /// Packets per second.
    pub rate: f64,
}

impl Default for CbrConfig {
    fn default() -> Self {
        CbrConfig {
            packet_size: 512,
            rate: 4.0,
        }
    }
}

impl CbrConfig {
    pub fn validate(&self) -> Result<(), TrafficError> {
        if self.packet_size == 0 {
            return Err(invalid("cbr_size_bytes", "must be positive"));
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(invalid("cbr_rate_pps", "must be positive"));
        }
        Ok(())
    }
}

fn invalid(name: &'static str, message: &str) -> TrafficError {
    TrafficError::Invalid {
        name,
        message: message.to_string(),
    }
}

/// Constant-rate emitter. The k-th emission happens at `start + k / rate`.
#[derive(Clone, Debug)]
pub struct CbrSource {
    cfg: CbrConfig,
    flow: Flow,
    emitted: u64,
}

impl CbrSource {
    pub fn new(cfg: CbrConfig, flow: Flow) -> Self {
        CbrSource { cfg, flow, emitted: 0 }
    }

    /// Instant of the next emission, or `None` once the flow has stopped.
    pub fn next_time(&self) -> Option<SimTime> {
        let t = self.flow.start + self.emitted as f64 / self.cfg.rate;
        (t < self.flow.stop).then_some(t)
    }

    /// Emits the packet due now (payload size only; ids are assigned by the
    /// caller) and returns it with the following emission time.
    pub fn next_cbr(&mut self) -> Option<(u32, SimTime, Option<SimTime>)> {
        let now = self.next_time()?;
        self.emitted += 1;
        Some((self.cfg.packet_size, now, self.next_time()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FrameType {
    I,
    P,
    B,
}

/// Lognormal frame-size law per frame type, in bytes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameSizeLaw {
    pub mu: f64,
    pub sigma: f64,
}

impl FrameSizeLaw {
    pub fn median(median_bytes: f64, sigma: f64) -> Self {
        FrameSizeLaw {
            mu: median_bytes.ln(),
            sigma,
        }
    }

    pub fn mean(&self) -> f64 {
        (self.mu + self.sigma * self.sigma / 2.0).exp()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VbrConfig {
    /// Selects the frame-size sample path; equal seeds give equal paths.
    pub initial_seed: f64,
    /// Multiplies every frame size.
    pub rate_factor: f64,
    pub fps: f64,
    pub gop: String,
    pub i_frame: FrameSizeLaw,
    pub p_frame: FrameSizeLaw,
    pub b_frame: FrameSizeLaw,
    pub mtu: u32,
}

impl Default for VbrConfig {
    fn default() -> Self {
        VbrConfig {
            initial_seed: 0.4,
            rate_factor: 0.25,
            fps: 25.0,
            gop: "IBBPBBPBBPBB".to_string(),
            i_frame: FrameSizeLaw::median(5000.0, 0.4),
            p_frame: FrameSizeLaw::median(1800.0, 0.5),
            b_frame: FrameSizeLaw::median(800.0, 0.6),
            mtu: 1024,
        }
    }
}

impl VbrConfig {
    pub fn validate(&self) -> Result<(), TrafficError> {
        if !(self.rate_factor > 0.0 && self.rate_factor.is_finite()) {
            return Err(invalid("vbr_rate_factor", "must be positive"));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(invalid("vbr_fps", "must be positive"));
        }
        if !self.gop.starts_with('I') || !self.gop.chars().all(|c| matches!(c, 'I' | 'P' | 'B')) {
            return Err(invalid("vbr_gop", "must be a non-empty I/P/B pattern starting with I"));
        }
        if self.mtu == 0 {
            return Err(invalid("mtu_bytes", "must be positive"));
        }
        for law in [self.i_frame, self.p_frame, self.b_frame] {
            if !(law.sigma >= 0.0 && law.mu.is_finite()) {
                return Err(invalid("frame_size_params", "sigma must be non-negative"));
            }
        }
        Ok(())
    }

    fn law(&self, ty: FrameType) -> FrameSizeLaw {
        match ty {
            FrameType::I => self.i_frame,
            FrameType::P => self.p_frame,
            FrameType::B => self.b_frame,
        }
    }

    fn pattern(&self) -> Vec<FrameType> {
        self.gop
            .chars()
            .map(|c| match c {
                'I' => FrameType::I,
                'P' => FrameType::P,
                _ => FrameType::B,
            })
            .collect()
    }

    /// Long-run mean source rate in bits per second (before rounding).
    pub fn mean_bitrate(&self) -> f64 {
        let pattern = self.pattern();
        let per_frame: f64 = pattern.iter().map(|&t| self.law(t).mean()).sum::<f64>() / pattern.len() as f64;
        per_frame * self.rate_factor * 8.0 * self.fps
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VbrFrame {
    pub seq: u64,
    pub kind: FrameType,
    /// Unrounded `rate_factor * draw`.
    pub scaled_size: f64,
    pub bytes: u32,
    pub at: SimTime,
}

/// Frame generator. The frame-size draws depend only on `initial_seed`, so
/// changing the rate factor rescales the same sample path.
#[derive(Clone, Debug)]
pub struct VbrSource {
    cfg: VbrConfig,
    pattern: Vec<FrameType>,
    start: SimTime,
    stop: SimTime,
    frame: u64,
    rng: ChaCha12Rng,
}

impl VbrSource {
    pub fn new(cfg: VbrConfig, start: SimTime, stop: SimTime) -> Result<Self, TrafficError> {
        cfg.validate()?;
        let mut h = Sha256::new();
        h.update(b"vbr-initial-seed");
        h.update(cfg.initial_seed.to_bits().to_le_bytes());
        let rng = ChaCha12Rng::from_seed(h.finalize().into());
        Ok(VbrSource {
            pattern: cfg.pattern(),
            cfg,
            start,
            stop,
            frame: 0,
            rng,
        })
    }

    pub fn for_flow(cfg: VbrConfig, flow: &Flow) -> Result<Self, TrafficError> {
        Self::new(cfg, flow.start, flow.stop)
    }

    pub fn config(&self) -> &VbrConfig {
        &self.cfg
    }

    pub fn next_time(&self) -> Option<SimTime> {
        let t = self.start + self.frame as f64 / self.cfg.fps;
        (t < self.stop).then_some(t)
    }

    /// Produces the frame due now and returns it with the next frame time.
    pub fn next_vbr_frame(&mut self) -> Option<(VbrFrame, Option<SimTime>)> {
        let at = self.next_time()?;
        let kind = self.pattern[(self.frame % self.pattern.len() as u64) as usize];
        let law = self.cfg.law(kind);
        let draw = LogNormal::new(law.mu, law.sigma)
            .expect("validated lognormal parameters")
            .sample(&mut self.rng);
        let scaled = self.cfg.rate_factor * draw;
        let frame = VbrFrame {
            seq: self.frame,
            kind,
            scaled_size: scaled,
            bytes: (scaled.round().max(1.0)).min(u32::MAX as f64) as u32,
            at,
        };
        self.frame += 1;
        Some((frame, self.next_time()))
    }
}

/// Splits a frame size into MTU-sized pieces: all full except possibly the last.
pub fn fragment_sizes(size: u32, mtu: u32) -> Vec<u32> {
    assert!(mtu > 0, "mtu must be positive");
    let full = size / mtu;
    let mut out = vec![mtu; full as usize];
    if size % mtu != 0 || size == 0 {
        out.push(size % mtu);
    }
    out
}

/// Turns one frame into packets that all carry the frame's emission instant.
/// Packet ids are taken from `next_id`, which is advanced.
pub fn fragment(size: u32, mtu: u32, now: SimTime, flow: &Flow, frame: Option<u64>, next_id: &mut u64) -> Vec<Packet> {
    fragment_sizes(size, mtu)
        .into_iter()
        .map(|bytes| {
            let id = *next_id;
            *next_id += 1;
            Packet {
                id,
                flow: flow.id,
                source: flow.source,
                destination: flow.destination,
                payload_bytes: bytes,
                emitted_at: now,
                frame,
                hops: 0,
            }
        })
        .collect()
}

/// Rate factor applied when a scenario leaves it unset: 0.33 from 40 nodes
/// up, 0.25 below.
pub fn default_rate_factor(n_nodes: usize) -> f64 {
    if n_nodes >= 40 {
        0.33
    } else {
        0.25
    }
}

/// Pairs `n_sources` disjoint (source, destination) couples and staggers
/// their start times uniformly in `start_window`.
pub fn build_flows(
    n_nodes: usize,
    n_sources: usize,
    kind: TrafficKind,
    start_window: (f64, f64),
    stop: SimTime,
    rng: &mut RngStream,
) -> Result<Vec<Flow>, TrafficError> {
    let needed = 2 * n_sources;
    if needed > n_nodes {
        return Err(TrafficError::TooManySources {
            n_sources,
            n_nodes,
            needed,
        });
    }
    let (lo, hi) = start_window;
    if !(lo >= 0.0 && hi >= lo) {
        return Err(invalid("traffic_start_s", "window must satisfy 0 <= min <= max"));
    }
    let mut ids: Vec<NodeId> = (0..n_nodes).collect();
    ids.shuffle(rng);
    ids.chunks_exact(2)
        .take(n_sources)
        .enumerate()
        .map(|(id, pair)| {
            let offset = if hi > lo { rng.random_range(lo..hi) } else { lo };
            let start = SimTime::from_secs(offset);
            if start >= stop {
                return Err(invalid("traffic_start_s", "flows must start before the horizon"));
            }
            Ok(Flow {
                id,
                source: pair[0],
                destination: pair[1],
                start,
                stop,
                kind,
            })
        })
        .collect()
}
