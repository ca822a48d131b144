//! Per-packet bookkeeping and the delay, throughput and delivery-ratio metrics.

use std::collections::{BTreeMap, BTreeSet};
use std::io;

use thiserror::Error;

use crate::kernel::SimTime;
use crate::link::DropReason;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("packet {0} was already sent")]
    DuplicateSend(u64),
    #[error("packet {0} was never sent")]
    UnknownPacket(u64),
    #[error("packet {id} already has outcome {previous}")]
    DoubleOutcome { id: u64, previous: String },
    #[error("packet {id} received at {h_r} before it was emitted at {h_t}")]
    ReceivedBeforeSent { id: u64, h_t: f64, h_r: f64 },
    #[error("no data packets were sent")]
    NothingSent,
    #[error("measurement window [{0}, {1}] is empty")]
    EmptyWindow(f64, f64),
    #[error("record dump line {line}: {message}")]
    Dump { line: u64, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PacketRecord {
    pub id: u64,
    pub flow: usize,
    pub bytes: u32,
    pub h_t: f64,
    pub h_r: Option<f64>,
    pub drop: Option<DropReason>,
    pub frame: Option<u64>,
}

impl PacketRecord {
    pub fn in_flight(&self) -> bool {
        self.h_r.is_none() && self.drop.is_none()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Outcome {
    Received(SimTime),
    Dropped(DropReason),
}

/// Data-packet ledger for one run. Control traffic never enters it.
#[derive(Clone, Debug)]
pub struct MetricsLedger {
    records: BTreeMap<u64, PacketRecord>,
    n_r: u64,
    n_dropped: u64,
    window: (f64, f64),
}

impl MetricsLedger {
    pub fn new(t0: f64, t1: f64) -> Result<Self, MetricsError> {
        if !(t1 > t0) {
            return Err(MetricsError::EmptyWindow(t0, t1));
        }
        Ok(MetricsLedger {
            records: BTreeMap::new(),
            n_r: 0,
            n_dropped: 0,
            window: (t0, t1),
        })
    }

    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    pub fn sent(&self) -> u64 {
        self.records.len() as u64
    }

    pub fn received(&self) -> u64 {
        self.n_r
    }

    pub fn dropped(&self) -> u64 {
        self.n_dropped
    }

    pub fn in_flight(&self) -> u64 {
        self.sent() - self.n_r - self.n_dropped
    }

    pub fn records(&self) -> impl Iterator<Item = &PacketRecord> {
        self.records.values()
    }

    pub fn get(&self, id: u64) -> Option<&PacketRecord> {
        self.records.get(&id)
    }

    pub fn record_send(&mut self, id: u64, flow: usize, bytes: u32, h_t: SimTime) -> Result<(), MetricsError> {
        self.record_send_frame(id, flow, bytes, h_t, None)
    }

    pub fn record_send_frame(&mut self, id: u64, flow: usize, bytes: u32, h_t: SimTime, frame: Option<u64>) -> Result<(), MetricsError> {
        if self.records.contains_key(&id) {
            return Err(MetricsError::DuplicateSend(id));
        }
        self.records.insert(
            id,
            PacketRecord {
                id,
                flow,
                bytes,
                h_t: h_t.secs(),
                h_r: None,
                drop: None,
                frame,
            },
        );
        Ok(())
    }

    /// Stores the fate of a packet. A second reception of an already
    /// received packet is ignored and reported as `Ok(false)`.
    pub fn record_outcome(&mut self, id: u64, outcome: Outcome) -> Result<bool, MetricsError> {
        let rec = self.records.get_mut(&id).ok_or(MetricsError::UnknownPacket(id))?;
        match (rec.h_r, rec.drop, outcome) {
            (Some(_), None, Outcome::Received(_)) => Ok(false),
            (None, None, Outcome::Received(at)) => {
                if at.secs() < rec.h_t {
                    return Err(MetricsError::ReceivedBeforeSent {
                        id,
                        h_t: rec.h_t,
                        h_r: at.secs(),
                    });
                }
                rec.h_r = Some(at.secs());
                self.n_r += 1;
                Ok(true)
            }
            (None, None, Outcome::Dropped(reason)) => {
                rec.drop = Some(reason);
                self.n_dropped += 1;
                Ok(true)
            }
            (h_r, drop, _) => Err(MetricsError::DoubleOutcome {
                id,
                previous: match (h_r, drop) {
                    (Some(t), _) => format!("received at {t}"),
                    (_, Some(r)) => format!("dropped ({r})"),
                    _ => unreachable!(),
                },
            }),
        }
    }

    /// Mean of `H_r - H_t` over received packets, `None` when nothing arrived.
    pub fn avg_delay(&self) -> Option<f64> {
        exact_mean(self.records.values().filter_map(|r| r.h_r.map(|h| h - r.h_t)))
    }

    /// Received payload bits per second over the measurement window.
    pub fn measured_throughput(&self) -> f64 {
        let bytes: u64 = self.records.values().filter(|r| r.h_r.is_some()).map(|r| r.bytes as u64).sum();
        bytes as f64 * 8.0 / (self.window.1 - self.window.0)
    }

    pub fn pdr(&self) -> Result<f64, MetricsError> {
        if self.records.is_empty() {
            return Err(MetricsError::NothingSent);
        }
        Ok(self.n_r as f64 / self.sent() as f64)
    }

    pub fn report(&self) -> MetricsReport {
        let mut drops = BTreeMap::new();
        let mut flows: BTreeMap<usize, FlowStats> = BTreeMap::new();
        let mut frames: BTreeMap<(usize, u64), bool> = BTreeMap::new();
        let mut delays: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for r in self.records.values() {
            if let Some(reason) = r.drop {
                *drops.entry(reason).or_insert(0u64) += 1;
            }
            let f = flows.entry(r.flow).or_insert_with(|| FlowStats {
                flow: r.flow,
                ..FlowStats::default()
            });
            f.sent += 1;
            if let Some(h_r) = r.h_r {
                f.received += 1;
                f.received_bytes += r.bytes as u64;
                delays.entry(r.flow).or_default().push(h_r - r.h_t);
            }
            if let Some(frame) = r.frame {
                let ok = frames.entry((r.flow, frame)).or_insert(true);
                *ok &= r.h_r.is_some();
            }
        }
        for (flow, d) in delays {
            flows.get_mut(&flow).expect("delay belongs to a known flow").avg_delay = exact_mean(d);
        }
        for (&(flow, _), &ok) in &frames {
            let f = flows.get_mut(&flow).expect("frame belongs to a known flow");
            f.frames_sent += 1;
            f.frames_complete += ok as u64;
        }
        MetricsReport {
            avg_delay: self.avg_delay(),
            throughput: self.measured_throughput(),
            pdr: self.pdr().ok(),
            sent: self.sent(),
            received: self.n_r,
            dropped: self.n_dropped,
            in_flight: self.in_flight(),
            drops,
            flows: flows.into_values().collect(),
        }
    }

    /// Writes the raw record dump: `packet_id,flow_id,bytes,h_t,h_r,drop_reason`.
    /// Times use the shortest representation that parses back to the same value.
    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<(), MetricsError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(DUMP_HEADER)?;
        for r in self.records.values() {
            w.write_record([
                r.id.to_string(),
                r.flow.to_string(),
                r.bytes.to_string(),
                r.h_t.to_string(),
                r.h_r.map(|h| h.to_string()).unwrap_or_default(),
                r.drop.map(|d| d.as_str().to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Rebuilds a ledger from a record dump (frame tags are not part of it).
    pub fn read_csv<R: io::Read>(input: R, window: (f64, f64)) -> Result<Self, MetricsError> {
        let mut ledger = MetricsLedger::new(window.0, window.1)?;
        let mut rd = csv::Reader::from_reader(input);
        let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        if header != DUMP_HEADER {
            return Err(MetricsError::Dump {
                line: 1,
                message: format!("expected header {}", DUMP_HEADER.join(",")),
            });
        }
        for (i, row) in rd.records().enumerate() {
            let row = row?;
            let line = i as u64 + 2;
            let bad = |message: String| MetricsError::Dump { line, message };
            let field = |k: usize| row.get(k).ok_or_else(|| bad(format!("missing column {}", DUMP_HEADER[k])));
            let num = |k: usize| -> Result<f64, MetricsError> {
                field(k)?.parse().map_err(|e| bad(format!("{}: {e}", DUMP_HEADER[k])))
            };
            let id: u64 = field(0)?.parse().map_err(|e| bad(format!("packet_id: {e}")))?;
            let flow: usize = field(1)?.parse().map_err(|e| bad(format!("flow_id: {e}")))?;
            let bytes: u32 = field(2)?.parse().map_err(|e| bad(format!("bytes: {e}")))?;
            let h_t = SimTime::try_from_secs(num(3)?).ok_or_else(|| bad("h_t out of range".into()))?;
            ledger.record_send(id, flow, bytes, h_t)?;
            if !field(4)?.is_empty() {
                let h_r = SimTime::try_from_secs(num(4)?).ok_or_else(|| bad("h_r out of range".into()))?;
                ledger.record_outcome(id, Outcome::Received(h_r))?;
            }
            let reason = field(5)?;
            if !reason.is_empty() {
                ledger.record_outcome(id, Outcome::Dropped(reason.parse().map_err(bad)?))?;
            }
        }
        Ok(ledger)
    }
}

pub const DUMP_HEADER: [&str; 6] = ["packet_id", "flow_id", "bytes", "h_t", "h_r", "drop_reason"];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FlowStats {
    pub flow: usize,
    pub sent: u64,
    pub received: u64,
    pub received_bytes: u64,
    pub avg_delay: Option<f64>,
    /// VBR frames whose every fragment arrived.
    pub frames_complete: u64,
    pub frames_sent: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub avg_delay: Option<f64>,
    pub throughput: f64,
    pub pdr: Option<f64>,
    pub sent: u64,
    pub received: u64,
    pub dropped: u64,
    pub in_flight: u64,
    pub drops: BTreeMap<DropReason, u64>,
    pub flows: Vec<FlowStats>,
}

impl MetricsReport {
    pub fn flows_with_traffic(&self) -> BTreeSet<usize> {
        self.flows.iter().filter(|f| f.sent > 0).map(|f| f.flow).collect()
    }
}

/// Sums floats exactly into a list of non-overlapping partials.
fn exact_partials(values: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut kept = 0;
        for i in 0..partials.len() {
            let mut y = partials[i];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        partials.truncate(kept);
        partials.push(x);
    }
    partials
}

/// Arithmetic mean with the sum carried exactly, so the only rounding is in
/// the final division.
pub fn exact_mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut n = 0u64;
    let partials = exact_partials(values.into_iter().inspect(|_| n += 1));
    if n == 0 {
        return None;
    }
    let n = n as f64;
    let hi: f64 = partials.iter().rev().fold(0.0, |acc, p| acc + p);
    let q = hi / n;
    // Exact residual of (sum - q * n), spread over the partials.
    let mut residual = partials.clone();
    residual.push(-q * n);
    residual.push(-(q.mul_add(n, -(q * n))));
    let rest: f64 = exact_partials(residual).iter().sum();
    Some(q + rest / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use rand::Rng;

    fn t(s: f64) -> SimTime {
        SimTime::from_secs(s)
    }

    fn ledger() -> MetricsLedger {
        MetricsLedger::new(0.0, 1.0).unwrap()
    }

    #[test]
    fn sends_and_duplicates() {
        let mut l = ledger();
        l.record_send(1, 0, 512, t(0.0)).unwrap();
        assert_eq!(l.sent(), 1);
        assert!(matches!(l.record_send(1, 0, 512, t(0.1)), Err(MetricsError::DuplicateSend(1))));
        for id in 2..10_001 {
            l.record_send(id, 0, 1, t(0.0)).unwrap();
        }
        assert_eq!(l.sent(), 10_000);
    }

    #[test]
    fn outcomes() {
        let mut l = ledger();
        l.record_send(1, 0, 512, t(0.5)).unwrap();
        l.record_send(2, 0, 512, t(0.5)).unwrap();
        assert!(l.record_outcome(1, Outcome::Received(t(0.5))).unwrap());
        assert_eq!(l.avg_delay(), Some(0.0));
        assert!(!l.record_outcome(1, Outcome::Received(t(0.9))).unwrap());
        assert_eq!(l.received(), 1);
        assert!(l.record_outcome(1, Outcome::Dropped(DropReason::NoRoute)).is_err());
        l.record_outcome(2, Outcome::Dropped(DropReason::NoRoute)).unwrap();
        assert!(l.record_outcome(2, Outcome::Dropped(DropReason::TtlExpired)).is_err());
        assert!(l.record_outcome(2, Outcome::Received(t(0.9))).is_err());
        assert!(matches!(l.record_outcome(3, Outcome::Received(t(1.0))), Err(MetricsError::UnknownPacket(3))));
        let rep = l.report();
        assert_eq!(rep.drops[&DropReason::NoRoute], 1);
        assert_eq!(rep.received, 1);
    }

    #[test]
    fn reception_before_emission_rejected() {
        let mut l = ledger();
        l.record_send(1, 0, 10, t(2.0)).unwrap();
        assert!(l.record_outcome(1, Outcome::Received(t(1.0))).is_err());
    }

    #[test]
    fn mean_of_three_delays() {
        let mut l = ledger();
        for (id, d) in [0.1, 0.2, 0.3].into_iter().enumerate() {
            l.record_send(id as u64, 0, 1, t(0.0)).unwrap();
            l.record_outcome(id as u64, Outcome::Received(t(d))).unwrap();
        }
        assert_eq!(l.avg_delay(), Some(0.2));
    }

    #[test]
    fn no_receptions() {
        let mut l = ledger();
        assert_eq!(l.avg_delay(), None);
        assert_eq!(l.measured_throughput(), 0.0);
        assert!(matches!(l.pdr(), Err(MetricsError::NothingSent)));
        l.record_send(0, 0, 1, t(0.0)).unwrap();
        assert_eq!(l.avg_delay(), None);
        assert_eq!(l.pdr().unwrap(), 0.0);
        assert_eq!(l.in_flight(), 1);
    }

    #[test]
    fn throughput_of_one_packet() {
        let mut l = ledger();
        l.record_send(0, 0, 512, t(0.0)).unwrap();
        l.record_outcome(0, Outcome::Received(t(0.01))).unwrap();
        assert_eq!(l.measured_throughput(), 4096.0);
    }

    #[test]
    fn pdr_fractions() {
        let mut l = ledger();
        for id in 0..4 {
            l.record_send(id, 0, 1, t(0.0)).unwrap();
        }
        for id in 0..3 {
            l.record_outcome(id, Outcome::Received(t(0.1))).unwrap();
        }
        assert_eq!(l.pdr().unwrap(), 0.75);
        l.record_outcome(3, Outcome::Received(t(0.1))).unwrap();
        assert_eq!(l.pdr().unwrap(), 1.0);
    }

    /// Correctly rounded mean of values that are multiples of 2^-40, via
    /// integer arithmetic with a sticky bit for the discarded remainder.
    fn dyadic_mean(values: &[f64]) -> f64 {
        let sum: i128 = values.iter().map(|v| (v * (1u64 << 40) as f64) as i128).sum();
        let n = values.len() as i128;
        let scaled = sum << 60;
        let q = scaled / n;
        let sticky = (scaled % n != 0) as i128;
        ((q << 1) | sticky) as f64 / 2f64.powi(101)
    }

    #[test]
    fn random_ledger_matches_recomputation() {
        let mut rng = RngStream::root(5).fork("ledger");
        let mut l = MetricsLedger::new(0.0, 100.0).unwrap();
        let mut raw = Vec::new();
        for id in 0..1000u64 {
            let h_t = (rng.random_range(0..100_000u64) as f64) / 1024.0;
            l.record_send(id, (id % 7) as usize, 100 + (id % 13) as u32, t(h_t)).unwrap();
            match rng.random_range(0..3) {
                0 => {
                    let d = (rng.random_range(0..4096u64) as f64) / 1024.0;
                    l.record_outcome(id, Outcome::Received(t(h_t + d))).unwrap();
                    raw.push((d, 100 + (id % 13)));
                }
                1 => {
                    l.record_outcome(id, Outcome::Dropped(DropReason::ChannelLoss)).unwrap();
                }
                _ => {}
            }
        }
        let delays: Vec<f64> = raw.iter().map(|r| r.0).collect();
        assert_eq!(l.avg_delay(), Some(dyadic_mean(&delays)));
        let bits: u64 = raw.iter().map(|r| r.1 * 8).sum();
        assert_eq!(l.measured_throughput(), bits as f64 / 100.0);
        assert_eq!(l.pdr().unwrap(), raw.len() as f64 / 1000.0);
        assert_eq!(l.sent(), l.received() + l.dropped() + l.in_flight());
    }

    #[test]
    fn exact_mean_survives_cancellation() {
        assert_eq!(exact_mean([1e16, 1.0, -1e16, 1.0]), Some(0.5));
        assert_eq!(exact_mean([0.1; 10]), Some(0.1));
        assert_eq!(exact_mean(std::iter::empty()), None);
    }

    #[test]
    fn dump_round_trip_recomputes_exactly() {
        let mut rng = RngStream::root(8).fork("dump");
        let mut l = MetricsLedger::new(0.0, 60.0).unwrap();
        for id in 0..500u64 {
            let h_t: f64 = rng.random::<f64>() * 50.0;
            l.record_send(id, (id % 3) as usize, 512, t(h_t)).unwrap();
            let u: f64 = rng.random();
            if u < 0.6 {
                l.record_outcome(id, Outcome::Received(t(h_t + rng.random::<f64>()))).unwrap();
            } else if u < 0.9 {
                l.record_outcome(id, Outcome::Dropped(DropReason::QueueOverflow)).unwrap();
            }
        }
        let mut buf = Vec::new();
        l.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("packet_id,flow_id,bytes,h_t,h_r,drop_reason\n"));
        let back = MetricsLedger::read_csv(buf.as_slice(), l.window()).unwrap();
        assert_eq!(back.report(), l.report());
        assert_eq!(back.avg_delay().map(f64::to_bits), l.avg_delay().map(f64::to_bits));
    }

    #[test]
    fn dump_with_wrong_header_rejected() {
        let err = MetricsLedger::read_csv("id,flow\n1,2\n".as_bytes(), (0.0, 1.0)).unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }

    #[test]
    fn frame_level_stats() {
        let mut l = ledger();
        // Frame 0 split in two fragments, both arrive; frame 1 loses one.
        for (id, frame) in [(0, 0), (1, 0), (2, 1), (3, 1)] {
            l.record_send_frame(id, 4, 100, t(0.0), Some(frame)).unwrap();
        }
        for id in [0, 1, 2] {
            l.record_outcome(id, Outcome::Received(t(0.2))).unwrap();
        }
        let rep = l.report();
        assert_eq!(rep.flows[0].frames_sent, 2);
        assert_eq!(rep.flows[0].frames_complete, 1);
        assert_eq!(rep.flows[0].received, 3);
    }

    proptest::proptest! {
        #[test]
        fn conservation_and_bounds(outcomes in proptest::collection::vec(0u8..3, 1..200)) {
            let mut l = MetricsLedger::new(0.0, 10.0).unwrap();
            for (id, o) in outcomes.iter().enumerate() {
                l.record_send(id as u64, 0, 10, t(1.0)).unwrap();
                match o {
                    0 => { l.record_outcome(id as u64, Outcome::Received(t(1.5))).unwrap(); }
                    1 => { l.record_outcome(id as u64, Outcome::Dropped(DropReason::NoRoute)).unwrap(); }
                    _ => {}
                }
            }
            proptest::prop_assert_eq!(l.sent(), l.received() + l.dropped() + l.in_flight());
            let pdr = l.pdr().unwrap();
            proptest::prop_assert!((0.0..=1.0).contains(&pdr));
            proptest::prop_assert!(l.avg_delay().is_none_or(|d| d >= 0.0));
        }
    }
}
