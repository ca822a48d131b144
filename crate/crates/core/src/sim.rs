//! One simulation run: mobility, link, OLSR, traffic and metrics driven by
//! the event scheduler.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::Rng;
use thiserror::Error;

use crate::kernel::{KernelError, Scheduler, SimTime};
use crate::link::{transmit, DropReason, LinkModel, Offer, Receiver, Transmission, TxOutcome, TxQueue};
use crate::metrics::{MetricsError, MetricsLedger, MetricsReport, Outcome};
use crate::mobility::{init_track, MobileNode, MobilityError, MobilityModel, NodeTrack, Position};
use crate::olsr::{HelloMsg, NodeId, OlsrState, Route, TcMsg};
use crate::rng::RngStream;
use crate::scenario::{Scenario, ScenarioError};
use crate::traffic::{build_flows, fragment, CbrSource, Flow, Packet, TrafficError, TrafficKind, VbrSource};

/// Hop limit for data packets.
pub const DATA_TTL: u32 = 64;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("mobility: {0}")]
    Mobility(#[from] MobilityError),
    #[error("traffic: {0}")]
    Traffic(#[from] TrafficError),
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
    #[error("event loop: {0}")]
    Kernel(#[from] KernelError),
    #[error("run {fingerprint} seed {seed}: {source}")]
    Run {
        fingerprint: String,
        seed: u64,
        #[source]
        source: Box<SimError>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Frame {
    Hello(HelloMsg),
    Tc(TcMsg),
    Data(Packet),
}

impl Frame {
    pub fn payload_bytes(&self) -> u32 {
        match self {
            Frame::Hello(m) => m.wire_bytes(),
            Frame::Tc(m) => m.wire_bytes(),
            Frame::Data(p) => p.payload_bytes,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Queued {
    pub frame: Frame,
    pub receiver: Receiver,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Event {
    WaypointReached(NodeId),
    EmitHello(NodeId),
    EmitTc(NodeId),
    TrafficEmit(usize),
    PacketArrival { to: NodeId, from: NodeId, frame: Frame },
    TxComplete(NodeId),
    MetricsSnapshot,
}

/// Counters captured at regular instants during a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Snapshot {
    pub at: SimTime,
    pub sent: u64,
    pub received: u64,
    pub dropped: u64,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub fingerprint: String,
    pub seed: u64,
    pub report: MetricsReport,
    pub wall_clock: Duration,
    pub events: u64,
    pub snapshots: Vec<Snapshot>,
    pub control_frames: u64,
    pub ledger: MetricsLedger,
}

impl RunResult {
    /// Equal outcome, ignoring wall-clock time.
    pub fn same_outcome(&self, other: &RunResult) -> bool {
        self.fingerprint == other.fingerprint
            && self.seed == other.seed
            && self.report == other.report
            && self.events == other.events
            && self.snapshots == other.snapshots
            && self.control_frames == other.control_frames
    }
}

enum Source {
    Cbr(CbrSource),
    Vbr(VbrSource),
}

struct World {
    link: LinkModel,
    nodes: Vec<MobileNode>,
    olsr: Vec<OlsrState>,
    jitter_rng: Vec<RngStream>,
    queues: Vec<TxQueue<Queued>>,
    link_rng: RngStream,
    flows: Vec<Flow>,
    sources: Vec<Source>,
    mtu: u32,
    next_packet: u64,
    ledger: MetricsLedger,
    snapshots: Vec<Snapshot>,
    snapshot_every: f64,
    control_frames: u64,
}

impl World {
    fn position(&self, node: NodeId, now: SimTime) -> Result<Position, SimError> {
        Ok(self.nodes[node].track.position_at(now)?)
    }

    fn jittered(&mut self, node: NodeId, interval: f64) -> f64 {
        let j = self.olsr[node].timers().jitter;
        let offset = if j > 0.0 { self.jitter_rng[node].random_range(-j..=j) } else { 0.0 };
        interval + offset
    }

    fn dispatch(&mut self, sched: &mut Scheduler<Event>, now: SimTime, ev: &Event) -> Result<(), SimError> {
        match *ev {
            Event::WaypointReached(n) => {
                let node = &mut self.nodes[n];
                if let Some(next) = node.track.advance(&mut node.rng, now)? {
                    sched.schedule(next, Event::WaypointReached(n))?;
                }
            }
            Event::EmitHello(n) => {
                let msg = self.olsr[n].emit_hello(now);
                self.control_frames += 1;
                self.enqueue(sched, n, now, Frame::Hello(msg), Receiver::Broadcast)?;
                let gap = self.jittered(n, self.olsr[n].timers().hello_interval);
                sched.schedule_in(gap, Event::EmitHello(n))?;
            }
            Event::EmitTc(n) => {
                if let Some(msg) = self.olsr[n].emit_tc(now) {
                    self.control_frames += 1;
                    self.enqueue(sched, n, now, Frame::Tc(msg), Receiver::Broadcast)?;
                }
                let gap = self.jittered(n, self.olsr[n].timers().tc_interval);
                sched.schedule_in(gap, Event::EmitTc(n))?;
            }
            Event::TrafficEmit(f) => self.emit_traffic(sched, f, now)?,
            Event::PacketArrival { to, from, ref frame } => self.arrive(sched, to, from, frame, now)?,
            Event::TxComplete(n) => {
                if let Some(next) = self.queues[n].complete() {
                    self.start_tx(sched, n, now, next)?;
                }
            }
            Event::MetricsSnapshot => {
                self.snapshots.push(Snapshot {
                    at: now,
                    sent: self.ledger.sent(),
                    received: self.ledger.received(),
                    dropped: self.ledger.dropped(),
                });
                sched.schedule_in(self.snapshot_every, Event::MetricsSnapshot)?;
            }
        }
        Ok(())
    }

    fn emit_traffic(&mut self, sched: &mut Scheduler<Event>, f: usize, now: SimTime) -> Result<(), SimError> {
        let flow = self.flows[f];
        let (packets, next) = match &mut self.sources[f] {
            Source::Cbr(src) => match src.next_cbr() {
                Some((size, at, next)) => (fragment(size, self.mtu, at, &flow, None, &mut self.next_packet), next),
                None => return Ok(()),
            },
            Source::Vbr(src) => match src.next_vbr_frame() {
                Some((frame, next)) => (
                    fragment(frame.bytes, self.mtu, frame.at, &flow, Some(frame.seq), &mut self.next_packet),
                    next,
                ),
                None => return Ok(()),
            },
        };
        for p in packets {
            self.ledger.record_send_frame(p.id, p.flow, p.payload_bytes, p.emitted_at, p.frame)?;
            self.route(sched, flow.source, p, now)?;
        }
        if let Some(next) = next {
            sched.schedule(next, Event::TrafficEmit(f))?;
        }
        Ok(())
    }

    /// Hands a data packet held by `at` to its next hop, or drops it.
    fn route(&mut self, sched: &mut Scheduler<Event>, at: NodeId, p: Packet, now: SimTime) -> Result<(), SimError> {
        if p.hops >= DATA_TTL {
            return self.drop_packet(p.id, DropReason::TtlExpired);
        }
        match self.olsr[at].route_data(p.destination, now) {
            Ok(next) => self.enqueue(sched, at, now, Frame::Data(p), Receiver::Unicast(next)),
            Err(reason) => self.drop_packet(p.id, reason),
        }
    }

    fn drop_packet(&mut self, id: u64, reason: DropReason) -> Result<(), SimError> {
        self.ledger.record_outcome(id, Outcome::Dropped(reason))?;
        Ok(())
    }

    fn enqueue(&mut self, sched: &mut Scheduler<Event>, n: NodeId, now: SimTime, frame: Frame, receiver: Receiver) -> Result<(), SimError> {
        let q = Queued { frame, receiver };
        let offer = match q.frame {
            Frame::Data(_) => self.queues[n].offer(q),
            _ => self.queues[n].offer_priority(q),
        };
        match offer {
            Offer::StartNow(q) => self.start_tx(sched, n, now, q),
            Offer::Queued => Ok(()),
            Offer::Rejected(q) => match q.frame {
                Frame::Data(p) => self.drop_packet(p.id, DropReason::QueueOverflow),
                _ => Ok(()),
            },
        }
    }

    fn start_tx(&mut self, sched: &mut Scheduler<Event>, n: NodeId, now: SimTime, q: Queued) -> Result<(), SimError> {
        let here = self.position(n, now)?;
        let neighbors: Vec<(usize, f64)> = match q.receiver {
            Receiver::Unicast(to) => {
                let d = here.distance(self.position(to, now)?);
                if d <= self.link.tx_range {
                    vec![(to, d)]
                } else {
                    Vec::new()
                }
            }
            Receiver::Broadcast => {
                let mut out = Vec::new();
                for m in (0..self.nodes.len()).filter(|&m| m != n) {
                    let d = here.distance(self.position(m, now)?);
                    if d <= self.link.tx_range {
                        out.push((m, d));
                    }
                }
                out
            }
        };
        let tx = Transmission {
            sender: n,
            receiver: q.receiver,
            payload_bytes: q.frame.payload_bytes(),
            start: now,
        };
        let outcomes = transmit(&tx, &mut self.link_rng, &neighbors, &self.link);
        let mut frame = q.frame;
        if let Frame::Data(p) = &mut frame {
            p.hops += 1;
        }
        for outcome in outcomes {
            match outcome {
                TxOutcome::Delivered { receiver, at } => {
                    sched.schedule(
                        at,
                        Event::PacketArrival {
                            to: receiver,
                            from: n,
                            frame: frame.clone(),
                        },
                    )?;
                }
                TxOutcome::Dropped { reason, .. } => {
                    if let Frame::Data(p) = &frame {
                        self.drop_packet(p.id, reason)?;
                    }
                }
            }
        }
        sched.schedule_in(self.link.air_time(tx.payload_bytes), Event::TxComplete(n))?;
        Ok(())
    }

    fn arrive(&mut self, sched: &mut Scheduler<Event>, to: NodeId, from: NodeId, frame: &Frame, now: SimTime) -> Result<(), SimError> {
        match frame {
            Frame::Hello(msg) => self.olsr[to].process_hello(msg, now),
            Frame::Tc(msg) => {
                if let Some(fwd) = self.olsr[to].receive_tc(msg, from, now) {
                    self.control_frames += 1;
                    self.enqueue(sched, to, now, Frame::Tc(fwd), Receiver::Broadcast)?;
                }
            }
            &Frame::Data(p) => {
                if p.destination == to {
                    self.ledger.record_outcome(p.id, Outcome::Received(now))?;
                } else {
                    self.route(sched, to, p, now)?;
                }
            }
        }
        Ok(())
    }
}

/// Initial tracks for every node of a scenario, each with its own stream.
pub fn initial_nodes(scenario: &Scenario, root: &RngStream) -> Result<Vec<MobileNode>, SimError> {
    let mobility = root.fork("mobility");
    (0..scenario.n_nodes)
        .map(|i| {
            let mut rng = mobility.fork(&format!("node-{i}"));
            let track = match (&scenario.positions, scenario.mobility.model) {
                (Some(p), MobilityModel::Static) => NodeTrack::fixed(i, p[i], scenario.area),
                _ => init_track(i, &mut rng, scenario.area, scenario.mobility)?,
            };
            Ok(MobileNode::new(track, rng))
        })
        .collect()
}

/// Runs `scenario` with `seed` (overriding the scenario's own seed) to its
/// horizon.
pub fn run(scenario: &Scenario, seed: u64) -> Result<RunResult, SimError> {
    let scenario = Scenario { seed, ..scenario.clone() };
    let fingerprint = scenario.fingerprint();
    Simulation::new(&scenario)
        .and_then(Simulation::finish)
        .map_err(|e| SimError::Run {
            fingerprint: fingerprint[..12].to_string(),
            seed,
            source: Box::new(e),
        })
}

/// A run that can be stepped and inspected before it reaches its horizon.
pub struct Simulation {
    scenario: Scenario,
    horizon: SimTime,
    sched: Scheduler<Event>,
    world: World,
    started: Instant,
}

impl Simulation {
    pub fn new(scenario: &Scenario) -> Result<Self, SimError> {
        let scenario = scenario.resolved();
        scenario.validate()?;
        let started = Instant::now();
        let horizon = SimTime::from_secs(scenario.horizon);
        let root = RngStream::root(scenario.seed);
        let n = scenario.n_nodes;

        let nodes = initial_nodes(&scenario, &root)?;
        let olsr_root = root.fork("olsr");
        let mut jitter_rng: Vec<RngStream> = (0..n).map(|i| olsr_root.fork(&format!("node-{i}"))).collect();

        let mut traffic_rng = root.fork("traffic");
        let flows = build_flows(n, scenario.sources(), scenario.traffic, scenario.traffic_start, horizon, &mut traffic_rng)?;
        let sources = flows
            .iter()
            .map(|f| match scenario.traffic {
                TrafficKind::Cbr => Ok(Source::Cbr(CbrSource::new(scenario.cbr, *f))),
                TrafficKind::Vbr => VbrSource::for_flow(scenario.vbr_config(), f).map(Source::Vbr),
            })
            .collect::<Result<Vec<_>, _>>()?;

        let mut sched: Scheduler<Event> = Scheduler::new();
        for (i, node) in nodes.iter().enumerate() {
            if let Some(t) = node.track.next_event() {
                sched.schedule(t, Event::WaypointReached(i))?;
            }
        }
        // First emissions spread uniformly over one interval.
        for (i, rng) in jitter_rng.iter_mut().enumerate() {
            let h: f64 = rng.random_range(0.0..scenario.olsr.hello_interval);
            sched.schedule(SimTime::from_secs(h), Event::EmitHello(i))?;
            let t: f64 = rng.random_range(0.0..scenario.olsr.tc_interval);
            sched.schedule(SimTime::from_secs(t), Event::EmitTc(i))?;
        }
        for f in &flows {
            sched.schedule(f.start, Event::TrafficEmit(f.id))?;
        }
        let snapshot_every = scenario.horizon / 20.0;
        sched.schedule(SimTime::from_secs(snapshot_every), Event::MetricsSnapshot)?;

        let world = World {
            link: scenario.link,
            nodes,
            olsr: (0..n).map(|i| OlsrState::new(i, scenario.olsr)).collect(),
            jitter_rng,
            queues: (0..n).map(|_| TxQueue::new(scenario.link.queue_len)).collect(),
            link_rng: root.fork("link"),
            flows,
            sources,
            mtu: scenario.vbr.mtu,
            next_packet: 0,
            ledger: MetricsLedger::new(0.0, scenario.horizon)?,
            snapshots: Vec::new(),
            snapshot_every,
            control_frames: 0,
        };
        Ok(Simulation {
            scenario,
            horizon,
            sched,
            world,
            started,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn now(&self) -> SimTime {
        self.sched.now()
    }

    /// Processes every event up to `t` (capped at the horizon).
    pub fn run_until(&mut self, t: SimTime) -> Result<SimTime, SimError> {
        let world = &mut self.world;
        Ok(self.sched.run_until(t.min(self.horizon), |s, now, ev| world.dispatch(s, now, ev))?)
    }

    pub fn flows(&self) -> &[Flow] {
        &self.world.flows
    }

    pub fn positions(&self) -> Result<Vec<Position>, SimError> {
        let now = self.now();
        (0..self.world.nodes.len()).map(|i| self.world.position(i, now)).collect()
    }

    /// Current routing table of `node`.
    pub fn routes(&mut self, node: NodeId) -> &BTreeMap<NodeId, Route> {
        let now = self.now();
        self.world.olsr[node].routes(now)
    }

    pub fn olsr(&self, node: NodeId) -> &OlsrState {
        &self.world.olsr[node]
    }

    pub fn ledger(&self) -> &MetricsLedger {
        &self.world.ledger
    }

    /// Runs to the horizon and collects the results.
    pub fn finish(mut self) -> Result<RunResult, SimError> {
        self.run_until(self.horizon)?;
        Ok(RunResult {
            fingerprint: self.scenario.fingerprint(),
            seed: self.scenario.seed,
            report: self.world.ledger.report(),
            wall_clock: self.started.elapsed(),
            events: self.sched.processed(),
            snapshots: self.world.snapshots,
            control_frames: self.world.control_frames,
            ledger: self.world.ledger,
        })
    }
}
