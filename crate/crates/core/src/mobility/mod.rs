//! Node mobility: Random Waypoint, Random Direction and steady-state Random
//! Waypoint initialisation, plus NS-2 movement-trace export.
//!
//! Tracks are piecewise linear. Every waypoint (leg start) lands on a 1 µs
//! time grid and every coordinate and speed on a 1 µm / 1 µm·s⁻¹ grid, which
//! is the resolution of the six-decimal NS-2 trace format. A node that
//! reaches its destination between two grid ticks waits there for the
//! remainder of the tick (less than 1 µs).

mod trace;

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, TAU};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::kernel::SimTime;
use crate::rng::RngStream;

pub use trace::{export_ns2_trace, parse_ns2_trace, Ns2Node, Ns2Trace, Setdest, TraceError};

/// Spatial and temporal resolution shared with the trace format.
pub const GRID: f64 = 1e-6;

const WALL_TOLERANCE: f64 = 1e-6;
const WINDOW_SLACK: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum MobilityError {
    #[error("area must have strictly positive width and height, got {width} x {height}")]
    InvalidArea { width: f64, height: f64 },
    #[error("speeds must satisfy 0 < v_min <= v_max, got v_min={v_min} v_max={v_max}")]
    InvalidSpeeds { v_min: f64, v_max: f64 },
    #[error("pause time must be non-negative, got {0}")]
    NegativePause(f64),
    #[error("steady-state initialisation needs v_min > 0")]
    ZeroMinSpeed,
    #[error("position queried at {t} outside the current leg window [{from}, {until}]")]
    OutsideLeg { t: f64, from: f64, until: f64 },
    #[error("advance called at {now} but the next waypoint is at {expected}")]
    NotAtWaypoint { now: f64, expected: f64 },
    #[error("model {0} cannot be initialised by this function")]
    WrongModel(MobilityModel),
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(self, other: Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn lerp(self, other: Position, frac: f64) -> Position {
        Position {
            x: self.x + (other.x - self.x) * frac,
            y: self.y + (other.y - self.y) * frac,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AreaBounds {
    pub width: f64,
    pub height: f64,
}

impl Default for AreaBounds {
    fn default() -> Self {
        AreaBounds {
            width: 1000.0,
            height: 1000.0,
        }
    }
}

impl AreaBounds {
    pub fn new(width: f64, height: f64) -> Result<Self, MobilityError> {
        let area = AreaBounds { width, height };
        area.validate()?;
        Ok(area)
    }

    pub fn validate(&self) -> Result<(), MobilityError> {
        if self.width > 0.0 && self.height > 0.0 && self.width.is_finite() && self.height.is_finite() {
            Ok(())
        } else {
            Err(MobilityError::InvalidArea {
                width: self.width,
                height: self.height,
            })
        }
    }

    pub fn contains(&self, p: Position) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }

    fn clamp(&self, p: Position) -> Position {
        Position::new(p.x.clamp(0.0, self.width), p.y.clamp(0.0, self.height))
    }

    fn uniform_point(&self, rng: &mut RngStream) -> Position {
        let x = rng.random::<f64>() * self.width;
        let y = rng.random::<f64>() * self.height;
        self.snap(Position::new(x, y))
    }

    /// Rounds onto the trace grid without leaving the area.
    fn snap(&self, p: Position) -> Position {
        self.clamp(Position::new(quantize(p.x), quantize(p.y)))
    }

    /// Mean distance between two independent uniform points in the area.
    pub fn mean_leg_distance(&self) -> f64 {
        let (w, h) = (self.width, self.height);
        let d = w.hypot(h);
        (w.powi(3) / (h * h)
            + h.powi(3) / (w * w)
            + d * (3.0 - (w * w) / (h * h) - (h * h) / (w * w))
            + 2.5 * ((h * h / w) * ((w + d) / h).ln() + (w * w / h) * ((h + d) / w).ln()))
            / 15.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MobilityModel {
    RandomWaypoint,
    RandomDirection,
    SteadyState,
    /// Nodes never move. Used for controlled topologies.
    Static,
}

impl MobilityModel {
    pub fn as_str(self) -> &'static str {
        match self {
            MobilityModel::RandomWaypoint => "rwp",
            MobilityModel::RandomDirection => "rd",
            MobilityModel::SteadyState => "mbgss",
            MobilityModel::Static => "static",
        }
    }
}

impl fmt::Display for MobilityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MobilityModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rwp" => Ok(MobilityModel::RandomWaypoint),
            "rd" => Ok(MobilityModel::RandomDirection),
            "mbgss" | "mbg_ss" | "mbg-ss" => Ok(MobilityModel::SteadyState),
            "static" => Ok(MobilityModel::Static),
            other => Err(format!("unknown mobility model '{other}' (expected rwp, rd, mbgss or static)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MobilityConfig {
    pub model: MobilityModel,
    pub v_min: f64,
    pub v_max: f64,
    pub pause: f64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        MobilityConfig {
            model: MobilityModel::RandomWaypoint,
            v_min: 1.0,
            v_max: 10.0,
            pause: 0.0,
        }
    }
}

impl MobilityConfig {
    pub fn validate(&self) -> Result<(), MobilityError> {
        if !(self.v_min > 0.0 && self.v_min <= self.v_max && self.v_max.is_finite()) {
            return Err(MobilityError::InvalidSpeeds {
                v_min: self.v_min,
                v_max: self.v_max,
            });
        }
        if !(self.pause >= 0.0 && self.pause.is_finite()) {
            return Err(MobilityError::NegativePause(self.pause));
        }
        Ok(())
    }

    fn uniform_speed(&self, rng: &mut RngStream) -> f64 {
        let v = if self.v_min == self.v_max {
            self.v_min
        } else {
            rng.random_range(self.v_min..=self.v_max)
        };
        self.snap_speed(v)
    }

    /// Draws from the time-stationary speed law of Random Waypoint, whose
    /// density is proportional to 1/v on `[v_min, v_max]`.
    fn stationary_speed(&self, rng: &mut RngStream) -> f64 {
        let v = if self.v_min == self.v_max {
            self.v_min
        } else {
            let u: f64 = rng.random();
            self.v_min * (self.v_max / self.v_min).powf(u)
        };
        self.snap_speed(v)
    }

    fn snap_speed(&self, v: f64) -> f64 {
        quantize(v).clamp(self.v_min, self.v_max)
    }

    /// Mean of 1/v for a uniform speed on `[v_min, v_max]`.
    pub fn mean_inverse_speed(&self) -> f64 {
        if self.v_min == self.v_max {
            1.0 / self.v_min
        } else {
            (self.v_max / self.v_min).ln() / (self.v_max - self.v_min)
        }
    }

    /// Mean speed of the time-stationary law.
    pub fn stationary_mean_speed(&self) -> f64 {
        1.0 / self.mean_inverse_speed()
    }
}

/// One straight-line movement at constant speed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MovementLeg {
    pub origin: Position,
    pub destination: Position,
    pub speed: f64,
    pub depart_at: SimTime,
    pub arrive_at: SimTime,
}

impl MovementLeg {
    pub fn new(origin: Position, destination: Position, speed: f64, depart_at: SimTime) -> Self {
        let distance = origin.distance(destination);
        let travel = if distance > 0.0 { distance / speed } else { 0.0 };
        MovementLeg {
            origin,
            destination,
            speed,
            depart_at,
            arrive_at: depart_at + travel,
        }
    }

    fn stationary(at: Position, depart_at: SimTime) -> Self {
        MovementLeg {
            origin: at,
            destination: at,
            speed: 0.0,
            depart_at,
            arrive_at: depart_at,
        }
    }

    pub fn length(&self) -> f64 {
        self.origin.distance(self.destination)
    }

    /// Linear interpolation, clamped to the leg's endpoints.
    pub fn position_at(&self, t: SimTime) -> Position {
        let span = self.arrive_at - self.depart_at;
        if span <= 0.0 {
            return self.destination;
        }
        let frac = ((t - self.depart_at) / span).clamp(0.0, 1.0);
        if frac >= 1.0 {
            self.destination
        } else {
            self.origin.lerp(self.destination, frac)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Moving,
    Paused,
}

/// Trajectory state of one node.
#[derive(Clone, Debug)]
pub struct NodeTrack {
    node: usize,
    area: AreaBounds,
    cfg: MobilityConfig,
    leg: MovementLeg,
    phase: Phase,
    /// End of the current state's validity; `None` for static nodes.
    hold_until: Option<SimTime>,
    heading: Option<f64>,
}

impl NodeTrack {
    /// A node that stays at `at` forever.
    pub fn fixed(node: usize, at: Position, area: AreaBounds) -> Self {
        NodeTrack {
            node,
            area,
            cfg: MobilityConfig {
                model: MobilityModel::Static,
                ..MobilityConfig::default()
            },
            leg: MovementLeg::stationary(area.snap(at), SimTime::ZERO),
            phase: Phase::Paused,
            hold_until: None,
            heading: None,
        }
    }

    fn moving(node: usize, area: AreaBounds, cfg: MobilityConfig, leg: MovementLeg, heading: Option<f64>) -> Self {
        NodeTrack {
            node,
            area,
            cfg,
            hold_until: Some(align_up(leg.arrive_at)),
            leg,
            phase: Phase::Moving,
            heading,
        }
    }

    pub fn node(&self) -> usize {
        self.node
    }

    pub fn model(&self) -> MobilityModel {
        self.cfg.model
    }

    pub fn config(&self) -> &MobilityConfig {
        &self.cfg
    }

    pub fn leg(&self) -> &MovementLeg {
        &self.leg
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Current Random Direction heading in radians.
    pub fn heading(&self) -> Option<f64> {
        self.heading
    }

    /// Time of the next waypoint event, if the node ever moves again.
    pub fn next_event(&self) -> Option<SimTime> {
        self.hold_until
    }

    /// Position at `t`, which must lie in the current leg (or pause) window.
    pub fn position_at(&self, t: SimTime) -> Result<Position, MobilityError> {
        let from = self.leg.depart_at;
        let until = self.hold_until.map_or(f64::INFINITY, SimTime::secs);
        if t.secs() < from.secs() - WINDOW_SLACK || t.secs() > until + WINDOW_SLACK {
            return Err(MobilityError::OutsideLeg {
                t: t.secs(),
                from: from.secs(),
                until,
            });
        }
        Ok(self.leg.position_at(t))
    }

    /// Installs the next state at a waypoint event and returns the time of
    /// the following waypoint event.
    pub fn advance(&mut self, rng: &mut RngStream, now: SimTime) -> Result<Option<SimTime>, MobilityError> {
        let Some(expected) = self.hold_until else {
            return Ok(None);
        };
        if (now - expected).abs() > WINDOW_SLACK {
            return Err(MobilityError::NotAtWaypoint {
                now: now.secs(),
                expected: expected.secs(),
            });
        }
        let now = expected;
        let here = self.leg.destination;

        if self.phase == Phase::Moving && self.cfg.pause > 0.0 {
            self.phase = Phase::Paused;
            self.leg = MovementLeg::stationary(here, now);
            self.hold_until = Some(align_up(now + self.cfg.pause));
            return Ok(self.hold_until);
        }

        let leg = match self.cfg.model {
            MobilityModel::RandomWaypoint | MobilityModel::SteadyState => {
                let destination = self.area.uniform_point(rng);
                MovementLeg::new(here, destination, self.cfg.uniform_speed(rng), now)
            }
            MobilityModel::RandomDirection => {
                let heading = next_direction_rd(rng, here, &self.area);
                self.heading = Some(heading);
                let destination = ray_to_boundary(here, heading, &self.area);
                MovementLeg::new(here, destination, self.cfg.uniform_speed(rng), now)
            }
            MobilityModel::Static => return Ok(None),
        };
        self.leg = leg;
        self.phase = Phase::Moving;
        self.hold_until = Some(align_up(leg.arrive_at));
        Ok(self.hold_until)
    }
}

/// Random Waypoint start: uniform position, uniform destination, uniform speed.
pub fn init_rwp(node: usize, rng: &mut RngStream, area: AreaBounds, cfg: MobilityConfig) -> Result<NodeTrack, MobilityError> {
    check(area, cfg, MobilityModel::RandomWaypoint)?;
    let origin = area.uniform_point(rng);
    let destination = area.uniform_point(rng);
    let speed = cfg.uniform_speed(rng);
    Ok(NodeTrack::moving(
        node,
        area,
        cfg,
        MovementLeg::new(origin, destination, speed, SimTime::ZERO),
        None,
    ))
}

/// Random Direction start: uniform position and heading, travel to the wall.
pub fn init_rd(node: usize, rng: &mut RngStream, area: AreaBounds, cfg: MobilityConfig) -> Result<NodeTrack, MobilityError> {
    check(area, cfg, MobilityModel::RandomDirection)?;
    let origin = area.uniform_point(rng);
    let heading = rng.random::<f64>() * TAU;
    let destination = ray_to_boundary(origin, heading, &area);
    let speed = cfg.uniform_speed(rng);
    Ok(NodeTrack::moving(
        node,
        area,
        cfg,
        MovementLeg::new(origin, destination, speed, SimTime::ZERO),
        Some(heading),
    ))
}

/// Random Waypoint started from its stationary regime.
///
/// The initial state is paused with the stationary pause probability;
/// otherwise a waypoint pair is drawn with probability proportional to its
/// length, the node is placed uniformly along it, and its speed is drawn
/// from the 1/v law.
pub fn init_steady_state(
    node: usize,
    rng: &mut RngStream,
    area: AreaBounds,
    cfg: MobilityConfig,
) -> Result<NodeTrack, MobilityError> {
    if cfg.v_min <= 0.0 {
        return Err(MobilityError::ZeroMinSpeed);
    }
    check(area, cfg, MobilityModel::SteadyState)?;

    if cfg.pause > 0.0 {
        let mean_travel = area.mean_leg_distance() * cfg.mean_inverse_speed();
        let p_pause = cfg.pause / (cfg.pause + mean_travel);
        if rng.random::<f64>() < p_pause {
            let at = area.uniform_point(rng);
            let residual = rng.random::<f64>() * cfg.pause;
            return Ok(NodeTrack {
                node,
                area,
                cfg,
                leg: MovementLeg::stationary(at, SimTime::ZERO),
                phase: Phase::Paused,
                hold_until: Some(align_up(SimTime::ZERO + residual)),
                heading: None,
            });
        }
    }

    let speed = cfg.stationary_speed(rng);
    let diagonal = area.width.hypot(area.height);
    let (from, to) = loop {
        let a = area.uniform_point(rng);
        let b = area.uniform_point(rng);
        if rng.random::<f64>() * diagonal < a.distance(b) {
            break (a, b);
        }
    };
    let along: f64 = rng.random();
    let origin = area.snap(from.lerp(to, along));
    Ok(NodeTrack::moving(
        node,
        area,
        cfg,
        MovementLeg::new(origin, to, speed, SimTime::ZERO),
        None,
    ))
}

/// Dispatches on `cfg.model`; static nodes get a uniform fixed position.
pub fn init_track(node: usize, rng: &mut RngStream, area: AreaBounds, cfg: MobilityConfig) -> Result<NodeTrack, MobilityError> {
    match cfg.model {
        MobilityModel::RandomWaypoint => init_rwp(node, rng, area, cfg),
        MobilityModel::RandomDirection => init_rd(node, rng, area, cfg),
        MobilityModel::SteadyState => init_steady_state(node, rng, area, cfg),
        MobilityModel::Static => {
            area.validate()?;
            let at = area.uniform_point(rng);
            Ok(NodeTrack::fixed(node, at, area))
        }
    }
}

fn check(area: AreaBounds, cfg: MobilityConfig, model: MobilityModel) -> Result<(), MobilityError> {
    area.validate()?;
    cfg.validate()?;
    if cfg.model != model {
        return Err(MobilityError::WrongModel(cfg.model));
    }
    Ok(())
}

/// New heading for a node standing at `at`, uniform over the directions that
/// point back into the area. On a wall that is a half-plane (0 to 180 degrees
/// measured from the wall), in a corner a quarter-plane. A node away from the
/// boundary gets a uniform heading.
pub fn next_direction_rd(rng: &mut RngStream, at: Position, area: &AreaBounds) -> f64 {
    let mut nx: f64 = 0.0;
    let mut ny: f64 = 0.0;
    let mut walls = 0;
    if at.x <= WALL_TOLERANCE {
        nx += 1.0;
        walls += 1;
    }
    if at.x >= area.width - WALL_TOLERANCE {
        nx -= 1.0;
        walls += 1;
    }
    if at.y <= WALL_TOLERANCE {
        ny += 1.0;
        walls += 1;
    }
    if at.y >= area.height - WALL_TOLERANCE {
        ny -= 1.0;
        walls += 1;
    }
    let u: f64 = rng.random();
    if walls == 0 || (nx == 0.0 && ny == 0.0) {
        return u * TAU;
    }
    let center = ny.atan2(nx);
    let half_width = if nx != 0.0 && ny != 0.0 { FRAC_PI_4 } else { FRAC_PI_2 };
    // Open interval: a heading parallel to the wall would give a zero-length leg.
    let offset = (2.0 * u - 1.0) * half_width * (1.0 - 1e-12);
    (center + offset).rem_euclid(TAU)
}

/// Point where the ray from `origin` along `heading` leaves the area, snapped
/// exactly onto the wall it hits.
pub fn ray_to_boundary(origin: Position, heading: f64, area: &AreaBounds) -> Position {
    let (dy, dx) = heading.sin_cos();
    let tx = if dx > 0.0 {
        (area.width - origin.x) / dx
    } else if dx < 0.0 {
        -origin.x / dx
    } else {
        f64::INFINITY
    };
    let ty = if dy > 0.0 {
        (area.height - origin.y) / dy
    } else if dy < 0.0 {
        -origin.y / dy
    } else {
        f64::INFINITY
    };
    let t = tx.min(ty).max(0.0);
    let mut hit = area.snap(Position::new(origin.x + t * dx, origin.y + t * dy));
    if tx <= ty {
        hit.x = if dx > 0.0 { area.width } else { 0.0 };
    } else {
        hit.y = if dy > 0.0 { area.height } else { 0.0 };
    }
    hit
}

/// Distance from `p` to the nearest wall of `area`.
pub fn wall_distance(p: Position, area: &AreaBounds) -> f64 {
    p.x.min(area.width - p.x).min(p.y).min(area.height - p.y)
}

/// A node's track bundled with its private random stream.
#[derive(Clone, Debug)]
pub struct MobileNode {
    pub track: NodeTrack,
    pub rng: RngStream,
}

impl MobileNode {
    pub fn new(track: NodeTrack, rng: RngStream) -> Self {
        MobileNode { track, rng }
    }

    /// Every leg (including pauses) departing at or before `horizon`, in
    /// order. Works on a copy; `self` is not advanced.
    pub fn legs_until(&self, horizon: SimTime) -> Result<Vec<MovementLeg>, MobilityError> {
        let mut node = self.clone();
        let mut legs = vec![*node.track.leg()];
        while let Some(next) = node.track.next_event() {
            if next > horizon {
                break;
            }
            node.track.advance(&mut node.rng, next)?;
            legs.push(*node.track.leg());
        }
        Ok(legs)
    }
}

fn quantize(v: f64) -> f64 {
    (v / GRID).round() * GRID
}

/// Smallest grid instant at or after `t`.
fn align_up(t: SimTime) -> SimTime {
    let k = (t.secs() / GRID).ceil();
    let below = (k - 1.0) * GRID;
    if below >= t.secs() {
        SimTime::from_secs(below.max(0.0))
    } else {
        SimTime::from_secs(k * GRID)
    }
}

/// Positions of all `tracks` at `t`.
pub fn positions_at(tracks: &[NodeTrack], t: SimTime) -> Result<Vec<Position>, MobilityError> {
    tracks.iter().map(|tr| tr.position_at(t)).collect()
}

#[cfg(test)]
mod tests;
