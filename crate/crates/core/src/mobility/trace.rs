//! NS-2 movement traces (the `setdest` dialect).
//!
//! ```text
//! $node_(0) set X_ 12.000000
//! $node_(0) set Y_ 7.500000
//! $node_(0) set Z_ 0.000000
//! $ns_ at 0.000000 "$node_(0) setdest 100.000000 0.000000 10.000000"
//! ```

use std::fmt::Write as _;

use thiserror::Error;

use super::{MobileNode, MobilityError, Position};
use crate::kernel::SimTime;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("node {0} has no initial position")]
    MissingInitial(usize),
    #[error(transparent)]
    Mobility(#[from] MobilityError),
}

/// Writes initial positions for every node (in index order) followed by all
/// `setdest` commands departing in `[0, horizon]`, ordered by time then node.
pub fn export_ns2_trace(nodes: &[MobileNode], horizon: SimTime) -> Result<String, TraceError> {
    let mut out = String::new();
    let mut moves = Vec::new();
    for (i, node) in nodes.iter().enumerate() {
        let legs = node.legs_until(horizon)?;
        let start = legs[0].origin;
        writeln!(out, "$node_({i}) set X_ {:.6}", start.x).unwrap();
        writeln!(out, "$node_({i}) set Y_ {:.6}", start.y).unwrap();
        writeln!(out, "$node_({i}) set Z_ 0.000000").unwrap();
        for leg in legs {
            if leg.origin != leg.destination {
                moves.push((leg.depart_at.secs(), i, leg.destination, leg.speed));
            }
        }
    }
    moves.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for (t, i, dest, speed) in moves {
        writeln!(
            out,
            "$ns_ at {t:.6} \"$node_({i}) setdest {:.6} {:.6} {speed:.6}\"",
            dest.x, dest.y
        )
        .unwrap();
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Setdest {
    pub at: f64,
    pub destination: Position,
    pub speed: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Ns2Node {
    pub initial: Position,
    pub moves: Vec<Setdest>,
}

/// A parsed movement trace.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Ns2Trace {
    pub nodes: Vec<Ns2Node>,
}

impl Ns2Trace {
    /// Replays the commands with NS-2 semantics: a `setdest` issued at `t`
    /// starts from wherever the node is at `t` and moves straight towards
    /// the target at the given speed, stopping on arrival.
    pub fn position_at(&self, node: usize, t: f64) -> Option<Position> {
        let n = self.nodes.get(node)?;
        let mut start = n.initial;
        let mut motion: Option<(f64, Position, f64)> = None;
        let travel = |from: Position, since: f64, m: Option<(f64, Position, f64)>, now: f64| match m {
            None => from,
            Some((_, to, v)) => {
                let d = from.distance(to);
                let covered = (v * (now - since)).max(0.0);
                if covered >= d || d == 0.0 {
                    to
                } else {
                    let k = covered / d;
                    Position::new(from.x + (to.x - from.x) * k, from.y + (to.y - from.y) * k)
                }
            }
        };
        let mut since = 0.0;
        for cmd in n.moves.iter().take_while(|c| c.at <= t) {
            start = travel(start, since, motion, cmd.at);
            since = cmd.at;
            motion = Some((cmd.at, cmd.destination, cmd.speed));
        }
        Some(travel(start, since, motion, t))
    }
}

pub fn parse_ns2_trace(text: &str) -> Result<Ns2Trace, TraceError> {
    let mut initial: Vec<[Option<f64>; 2]> = Vec::new();
    let mut moves: Vec<Vec<Setdest>> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let err = |message: String| TraceError::Parse { line, message };
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        if let Some(rest) = s.strip_prefix("$ns_ at ") {
            let (time, cmd) = rest
                .split_once(' ')
                .ok_or_else(|| err("missing command after time".into()))?;
            let at = parse_num(time).map_err(&err)?;
            let cmd = cmd
                .trim()
                .strip_prefix('"')
                .and_then(|c| c.strip_suffix('"'))
                .ok_or_else(|| err("command must be double-quoted".into()))?;
            let (node, rest) = parse_node(cmd).map_err(&err)?;
            let fields: Vec<&str> = rest.split_whitespace().collect();
            match fields.as_slice() {
                ["setdest", x, y, v] => {
                    let sd = Setdest {
                        at,
                        destination: Position::new(parse_num(x).map_err(&err)?, parse_num(y).map_err(&err)?),
                        speed: parse_num(v).map_err(&err)?,
                    };
                    if moves.len() <= node {
                        moves.resize_with(node + 1, Vec::new);
                    }
                    moves[node].push(sd);
                }
                _ => return Err(err(format!("unsupported command '{rest}'"))),
            }
        } else if s.starts_with("$node_(") {
            let (node, rest) = parse_node(s).map_err(&err)?;
            let fields: Vec<&str> = rest.split_whitespace().collect();
            let (axis, value) = match fields.as_slice() {
                ["set", axis, value] => (*axis, parse_num(value).map_err(&err)?),
                _ => return Err(err(format!("expected 'set <axis> <value>', got '{rest}'"))),
            };
            if initial.len() <= node {
                initial.resize(node + 1, [None, None]);
            }
            match axis {
                "X_" => initial[node][0] = Some(value),
                "Y_" => initial[node][1] = Some(value),
                "Z_" => {}
                other => return Err(err(format!("unknown axis '{other}'"))),
            }
        } else {
            return Err(err(format!("unrecognised statement '{s}'")));
        }
    }

    let count = initial.len().max(moves.len());
    moves.resize_with(count, Vec::new);
    initial.resize(count, [None, None]);
    let mut nodes = Vec::with_capacity(count);
    for (i, (init, mut mv)) in initial.into_iter().zip(moves).enumerate() {
        let [Some(x), Some(y)] = init else {
            return Err(TraceError::MissingInitial(i));
        };
        mv.sort_by(|a, b| a.at.total_cmp(&b.at));
        nodes.push(Ns2Node {
            initial: Position::new(x, y),
            moves: mv,
        });
    }
    Ok(Ns2Trace { nodes })
}

fn parse_node(s: &str) -> Result<(usize, &str), String> {
    let rest = s
        .strip_prefix("$node_(")
        .ok_or_else(|| format!("expected '$node_(<i>)' in '{s}'"))?;
    let (id, rest) = rest
        .split_once(')')
        .ok_or_else(|| "unterminated node index".to_string())?;
    let id = id.parse().map_err(|_| format!("bad node index '{id}'"))?;
    Ok((id, rest.trim()))
}

fn parse_num(s: &str) -> Result<f64, String> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("bad number '{s}'"))
}
