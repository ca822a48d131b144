//! Per-node OLSR engine: HELLO link sensing, MPR selection, TC diffusion over
//! the MPR backbone and minimum-hop route computation.
//!
//! The engine is transport-agnostic. The simulator hands it received
//! messages and asks it for outgoing ones; nothing here schedules events.

mod mpr;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::kernel::SimTime;
use crate::link::DropReason;

pub use mpr::{covers_all, select_mprs};

pub type NodeId = usize;

/// Bytes of OLSR packet + message header in a HELLO or TC.
pub const MESSAGE_HEADER_BYTES: u32 = 16;
/// Bytes per listed node address.
pub const ADDRESS_BYTES: u32 = 4;
/// How long a seen TC key is remembered for duplicate suppression.
pub const DUPLICATE_HOLD: f64 = 30.0;
/// Initial TTL of a TC message.
pub const TC_TTL: u8 = 255;

#[derive(Debug, Error, PartialEq)]
pub enum OlsrError {
    #[error("2-hop node {0} has no reaching symmetric neighbor")]
    EmptyReachSet(NodeId),
    #[error("invalid OLSR timers: {0}")]
    InvalidTimers(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OlsrTimers {
    pub hello_interval: f64,
    pub tc_interval: f64,
    pub neighbor_hold: f64,
    pub topology_hold: f64,
    /// Half-width of the uniform jitter applied to each periodic emission.
    pub jitter: f64,
}

impl Default for OlsrTimers {
    fn default() -> Self {
        OlsrTimers {
            hello_interval: 2.0,
            tc_interval: 5.0,
            neighbor_hold: 6.0,
            topology_hold: 15.0,
            jitter: 0.1,
        }
    }
}

impl OlsrTimers {
    pub fn validate(&self) -> Result<(), OlsrError> {
        let bad = |m: String| Err(OlsrError::InvalidTimers(m));
        if !(self.hello_interval > 0.0 && self.tc_interval > 0.0) {
            return bad("intervals must be positive".into());
        }
        if self.neighbor_hold <= self.hello_interval {
            return bad(format!(
                "neighbor_hold_s ({}) must exceed hello_interval_s ({})",
                self.neighbor_hold, self.hello_interval
            ));
        }
        if self.topology_hold <= self.tc_interval {
            return bad(format!(
                "topology_hold_s ({}) must exceed tc_interval_s ({})",
                self.topology_hold, self.tc_interval
            ));
        }
        if !(self.jitter >= 0.0 && self.jitter < self.hello_interval.min(self.tc_interval)) {
            return bad(format!("jitter_s ({}) must be in [0, min interval)", self.jitter));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LinkStatus {
    Asym,
    Sym,
    /// Symmetric, and selected as MPR by the HELLO's originator.
    Mpr,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HelloMsg {
    pub originator: NodeId,
    pub emitted_at: SimTime,
    pub entries: Vec<(NodeId, LinkStatus)>,
}

impl HelloMsg {
    pub fn wire_bytes(&self) -> u32 {
        MESSAGE_HEADER_BYTES + ADDRESS_BYTES * self.entries.len() as u32
    }

    pub fn status_of(&self, node: NodeId) -> Option<LinkStatus> {
        self.entries.iter().find(|(n, _)| *n == node).map(|&(_, s)| s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TcMsg {
    pub originator: NodeId,
    /// Per-originator message sequence number, used for duplicate detection.
    pub msg_seq: u32,
    /// Advertised neighbor sequence number; changes with the advertised set.
    pub ansn: u32,
    pub advertised: Vec<NodeId>,
    pub ttl: u8,
    pub hop_count: u8,
}

impl TcMsg {
    pub fn wire_bytes(&self) -> u32 {
        MESSAGE_HEADER_BYTES + ADDRESS_BYTES * self.advertised.len() as u32
    }

    pub fn key(&self) -> (NodeId, u32) {
        (self.originator, self.msg_seq)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForwardDecision {
    Forward,
    NotSelector,
    Duplicate,
    TtlExhausted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Route {
    pub next_hop: NodeId,
    pub hops: u32,
}

#[derive(Clone, Copy, Debug)]
struct NeighborEntry {
    sym: bool,
    expiry: SimTime,
}

#[derive(Clone, Copy, Debug)]
struct TopologyEntry {
    ansn: u32,
    expiry: SimTime,
}

/// Protocol state of one node.
#[derive(Clone, Debug)]
pub struct OlsrState {
    id: NodeId,
    timers: OlsrTimers,
    neighbors: BTreeMap<NodeId, NeighborEntry>,
    /// 2-hop node -> (reaching neighbor -> expiry).
    two_hop: BTreeMap<NodeId, BTreeMap<NodeId, SimTime>>,
    mprs: BTreeSet<NodeId>,
    /// MPRs are reselected lazily, when next needed.
    mprs_dirty: bool,
    selectors: BTreeMap<NodeId, SimTime>,
    /// (last hop, destination) -> entry.
    topology: BTreeMap<(NodeId, NodeId), TopologyEntry>,
    routes: BTreeMap<NodeId, Route>,
    routes_dirty: bool,
    duplicates: HashMap<(NodeId, u32), SimTime>,
    ansn: u32,
    last_advertised: Option<BTreeSet<NodeId>>,
    msg_seq: u32,
    /// Earliest expiry among neighbor, 2-hop, selector and topology tuples;
    /// nothing can expire before it.
    purge_due: Option<SimTime>,
    duplicate_sweep_at: SimTime,
}

impl OlsrState {
    pub fn new(id: NodeId, timers: OlsrTimers) -> Self {
        OlsrState {
            id,
            timers,
            neighbors: BTreeMap::new(),
            two_hop: BTreeMap::new(),
            mprs: BTreeSet::new(),
            mprs_dirty: false,
            selectors: BTreeMap::new(),
            topology: BTreeMap::new(),
            routes: BTreeMap::new(),
            routes_dirty: false,
            duplicates: HashMap::new(),
            ansn: 0,
            last_advertised: None,
            msg_seq: 0,
            purge_due: None,
            duplicate_sweep_at: SimTime::ZERO,
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn timers(&self) -> &OlsrTimers {
        &self.timers
    }

    pub fn sym_neighbors(&self) -> BTreeSet<NodeId> {
        self.neighbors.iter().filter(|(_, e)| e.sym).map(|(&n, _)| n).collect()
    }

    pub fn neighbor_status(&mut self, n: NodeId) -> Option<LinkStatus> {
        self.ensure_mprs();
        self.status(n)
    }

    fn status(&self, n: NodeId) -> Option<LinkStatus> {
        self.neighbors.get(&n).map(|e| match (e.sym, self.mprs.contains(&n)) {
            (false, _) => LinkStatus::Asym,
            (true, false) => LinkStatus::Sym,
            (true, true) => LinkStatus::Mpr,
        })
    }

    pub fn mpr_set(&mut self) -> &BTreeSet<NodeId> {
        self.ensure_mprs();
        &self.mprs
    }

    pub fn mpr_selectors(&self) -> BTreeSet<NodeId> {
        self.selectors.keys().copied().collect()
    }

    /// Strict 2-hop neighborhood: reachable through a symmetric neighbor,
    /// excluding ourselves and our symmetric neighbors.
    pub fn strict_two_hop(&self) -> BTreeMap<NodeId, BTreeSet<NodeId>> {
        let sym = self.sym_neighbors();
        self.two_hop
            .iter()
            .filter(|(t, _)| **t != self.id && !sym.contains(t))
            .filter_map(|(&t, via)| {
                let via: BTreeSet<NodeId> = via.keys().copied().filter(|v| sym.contains(v)).collect();
                (!via.is_empty()).then_some((t, via))
            })
            .collect()
    }

    /// Topology tuples as (destination, last hop, ANSN).
    pub fn topology(&self) -> impl Iterator<Item = (NodeId, NodeId, u32)> + '_ {
        self.topology.iter().map(|(&(l, d), e)| (d, l, e.ansn))
    }

    pub fn ansn(&self) -> u32 {
        self.ansn
    }

    /// Drops expired tuples. Returns true if anything that feeds MPR
    /// selection or routing changed.
    fn purge(&mut self, now: SimTime) -> bool {
        if now > self.duplicate_sweep_at {
            self.duplicates.retain(|_, exp| *exp >= now);
            self.duplicate_sweep_at = now + self.timers.hello_interval;
        }
        if self.purge_due.is_none_or(|due| now <= due) {
            return false;
        }
        let before = (self.neighbors.len(), self.two_hop_len(), self.topology.len(), self.selectors.len());
        self.neighbors.retain(|_, e| e.expiry >= now);
        let neighbors = &self.neighbors;
        for via in self.two_hop.values_mut() {
            via.retain(|v, exp| *exp >= now && neighbors.get(v).is_some_and(|e| e.sym));
        }
        self.two_hop.retain(|_, via| !via.is_empty());
        self.selectors
            .retain(|s, exp| *exp >= now && neighbors.get(s).is_some_and(|e| e.sym));
        self.topology.retain(|_, e| e.expiry >= now);
        self.purge_due = self
            .neighbors
            .values()
            .map(|e| e.expiry)
            .chain(self.two_hop.values().flat_map(|via| via.values().copied()))
            .chain(self.selectors.values().copied())
            .chain(self.topology.values().map(|e| e.expiry))
            .min();
        let after = (self.neighbors.len(), self.two_hop_len(), self.topology.len(), self.selectors.len());
        let changed = before != after;
        if changed {
            self.refresh_mprs();
            self.routes_dirty = true;
        }
        changed
    }

    fn note_expiry(&mut self, at: SimTime) {
        self.purge_due = Some(self.purge_due.map_or(at, |due| due.min(at)));
    }

    fn is_duplicate(&self, key: (NodeId, u32), now: SimTime) -> bool {
        self.duplicates.get(&key).is_some_and(|exp| *exp >= now)
    }

    fn two_hop_len(&self) -> usize {
        self.two_hop.values().map(BTreeMap::len).sum()
    }

    fn refresh_mprs(&mut self) {
        self.mprs_dirty = true;
    }

    fn ensure_mprs(&mut self) {
        if !self.mprs_dirty {
            return;
        }
        self.mprs_dirty = false;
        let sym = self.sym_neighbors();
        let strict = self.strict_two_hop();
        // strict_two_hop never yields an empty reaching set.
        self.mprs = select_mprs(&sym, &strict).expect("strict 2-hop sets are non-empty");
    }

    /// Builds the periodic HELLO listing every current neighbor.
    pub fn emit_hello(&mut self, now: SimTime) -> HelloMsg {
        self.purge(now);
        self.ensure_mprs();
        let entries = self
            .neighbors
            .keys()
            .map(|&n| (n, self.status(n).expect("listed neighbor")))
            .collect();
        HelloMsg {
            originator: self.id,
            emitted_at: now,
            entries,
        }
    }

    /// Link sensing, 2-hop discovery and MPR-selector bookkeeping from one
    /// received HELLO.
    pub fn process_hello(&mut self, msg: &HelloMsg, now: SimTime) {
        if msg.originator == self.id {
            return;
        }
        self.purge(now);
        let from = msg.originator;
        let expiry = now + self.timers.neighbor_hold;
        self.note_expiry(expiry);
        let listed = msg.status_of(self.id);
        let sym = listed.is_some();

        let was = self.neighbors.insert(from, NeighborEntry { sym, expiry });
        let mut changed = was.map(|e| e.sym) != Some(sym);

        let mut reached: BTreeSet<NodeId> = BTreeSet::new();
        if sym {
            reached = msg
                .entries
                .iter()
                .filter(|(n, s)| *n != self.id && *s != LinkStatus::Asym)
                .map(|&(n, _)| n)
                .collect();
        }
        for (target, via) in self.two_hop.iter_mut() {
            if !reached.contains(target) && via.remove(&from).is_some() {
                changed = true;
            }
        }
        for &target in &reached {
            let via = self.two_hop.entry(target).or_default();
            if via.insert(from, expiry).is_none() {
                changed = true;
            }
        }
        self.two_hop.retain(|_, via| !via.is_empty());

        if listed == Some(LinkStatus::Mpr) {
            if self.selectors.insert(from, expiry).is_none() {
                changed = true;
            }
        } else if self.selectors.remove(&from).is_some() {
            changed = true;
        }

        if changed {
            self.refresh_mprs();
            self.routes_dirty = true;
        }
    }

    /// Builds a TC advertising the MPR selector set, or nothing if no
    /// neighbor has selected us.
    pub fn emit_tc(&mut self, now: SimTime) -> Option<TcMsg> {
        self.purge(now);
        let advertised = self.mpr_selectors();
        if advertised.is_empty() {
            return None;
        }
        if self.last_advertised.as_ref() != Some(&advertised) {
            self.ansn = self.ansn.wrapping_add(1);
            self.last_advertised = Some(advertised.clone());
        }
        self.msg_seq = self.msg_seq.wrapping_add(1);
        let msg = TcMsg {
            originator: self.id,
            msg_seq: self.msg_seq,
            ansn: self.ansn,
            advertised: advertised.into_iter().collect(),
            ttl: TC_TTL,
            hop_count: 0,
        };
        self.duplicates.insert(msg.key(), now + DUPLICATE_HOLD);
        Some(msg)
    }

    /// Relay rule: forward only if `from` selected us as MPR and this
    /// message has not been seen before. The message is marked seen either way.
    pub fn forward_flooded(&mut self, msg: &TcMsg, from: NodeId, now: SimTime) -> ForwardDecision {
        let fresh = !self.is_duplicate(msg.key(), now);
        self.duplicates.insert(msg.key(), now + DUPLICATE_HOLD);
        if !fresh {
            ForwardDecision::Duplicate
        } else if !self.selectors.contains_key(&from) {
            ForwardDecision::NotSelector
        } else if msg.ttl <= 1 {
            ForwardDecision::TtlExhausted
        } else {
            ForwardDecision::Forward
        }
    }

    /// Full TC handling: topology update on first receipt, then the relay
    /// decision. Returns the copy to rebroadcast, if any.
    pub fn receive_tc(&mut self, msg: &TcMsg, from: NodeId, now: SimTime) -> Option<TcMsg> {
        self.purge(now);
        if msg.originator == self.id || !self.neighbors.get(&from).is_some_and(|e| e.sym) {
            return None;
        }
        if !self.is_duplicate(msg.key(), now) {
            self.process_tc(msg, now);
        }
        match self.forward_flooded(msg, from, now) {
            ForwardDecision::Forward => Some(TcMsg {
                ttl: msg.ttl - 1,
                hop_count: msg.hop_count.saturating_add(1),
                ..msg.clone()
            }),
            _ => None,
        }
    }

    fn process_tc(&mut self, msg: &TcMsg, now: SimTime) {
        let last = msg.originator;
        let ansn = msg.ansn;
        let from_last = (last, NodeId::MIN)..=(last, NodeId::MAX);
        let mut stale = Vec::new();
        for (&key, e) in self.topology.range(from_last) {
            if ansn_newer(e.ansn, ansn) {
                return;
            }
            if ansn_newer(ansn, e.ansn) {
                stale.push(key);
            }
        }
        let mut changed = !stale.is_empty();
        for key in stale {
            self.topology.remove(&key);
        }
        let expiry = now + self.timers.topology_hold;
        self.note_expiry(expiry);
        for &dest in &msg.advertised {
            if self
                .topology
                .insert((last, dest), TopologyEntry { ansn, expiry })
                .is_none()
            {
                changed = true;
            }
        }
        if changed {
            self.routes_dirty = true;
        }
    }

    /// Routing table, recomputed if any input table changed.
    pub fn routes(&mut self, now: SimTime) -> &BTreeMap<NodeId, Route> {
        self.purge(now);
        if self.routes_dirty {
            self.routes = self.compute_routes();
            self.routes_dirty = false;
        }
        &self.routes
    }

    /// Minimum-hop routes over symmetric links, 2-hop links and topology
    /// tuples, computed level by level. Among equally short routes the
    /// lowest next hop wins.
    pub fn compute_routes(&self) -> BTreeMap<NodeId, Route> {
        let sym = self.sym_neighbors();
        let size = 1 + [
            Some(self.id),
            self.neighbors.keys().next_back().copied(),
            self.two_hop.keys().next_back().copied(),
            self.topology.keys().map(|&(l, d)| l.max(d)).max(),
        ]
        .into_iter()
        .flatten()
        .max()
        .unwrap_or(0);

        // Out-edges bucketed by source node: 2-hop links from symmetric
        // neighbors plus topology tuples.
        let mut is_sym = vec![false; size];
        for &n in &sym {
            is_sym[n] = true;
        }
        let two_hop_links: Vec<(NodeId, NodeId)> = self
            .two_hop
            .iter()
            .flat_map(|(&target, via)| via.keys().filter(|&&v| is_sym[v]).map(move |&v| (v, target)))
            .collect();
        let links = || two_hop_links.iter().copied().chain(self.topology.keys().copied());
        let mut start = vec![0usize; size + 1];
        for (from, _) in links() {
            start[from + 1] += 1;
        }
        for i in 0..size {
            start[i + 1] += start[i];
        }
        let mut fill = start.clone();
        let mut edges = vec![0; start[size]];
        for (from, to) in links() {
            edges[fill[from]] = to;
            fill[from] += 1;
        }

        let mut route: Vec<Option<Route>> = vec![None; size];
        for &n in &sym {
            route[n] = Some(Route { next_hop: n, hops: 1 });
        }
        let mut frontier: Vec<NodeId> = sym.iter().copied().collect();
        let mut candidate: Vec<Option<NodeId>> = vec![None; size];
        let mut touched = Vec::new();
        let mut hops = 1;
        while !frontier.is_empty() {
            for &u in &frontier {
                let via = route[u].expect("frontier nodes are routed").next_hop;
                for &w in &edges[start[u]..start[u + 1]] {
                    if w == self.id || route[w].is_some() {
                        continue;
                    }
                    match &mut candidate[w] {
                        Some(best) => *best = (*best).min(via),
                        slot @ None => {
                            *slot = Some(via);
                            touched.push(w);
                        }
                    }
                }
            }
            hops += 1;
            touched.sort_unstable();
            for &w in &touched {
                let next_hop = candidate[w].take().expect("touched nodes have a candidate");
                route[w] = Some(Route { next_hop, hops });
            }
            frontier = std::mem::take(&mut touched);
        }
        route
            .into_iter()
            .enumerate()
            .filter_map(|(n, r)| r.map(|r| (n, r)))
            .collect()
    }

    /// Data-plane lookup.
    pub fn route_data(&mut self, destination: NodeId, now: SimTime) -> Result<NodeId, DropReason> {
        self.routes(now)
            .get(&destination)
            .map(|r| r.next_hop)
            .ok_or(DropReason::NoRoute)
    }
}

/// Sequence-number comparison with wrap-around.
fn ansn_newer(a: u32, b: u32) -> bool {
    a != b && a.wrapping_sub(b) < u32::MAX / 2
}
