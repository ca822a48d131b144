//! Scenario files: `key = value` lines with `#` comments.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::link::{LinkModel, SuccessCurve};
use crate::mobility::{AreaBounds, MobilityConfig, MobilityModel, Position};
use crate::olsr::OlsrTimers;
use crate::traffic::{default_rate_factor, CbrConfig, TrafficKind, VbrConfig};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key '{key}' given twice (first on line {first})")]
    DuplicateKey { line: usize, key: String, first: usize },
    #[error("line {line}: bad value for {key}: {message}")]
    BadValue { line: usize, key: String, message: String },
    #[error("missing mandatory key '{0}'")]
    Missing(&'static str),
    #[error("invalid {key}: {message}")]
    Invalid { key: &'static str, message: String },
    #[error("cannot read {path}")]
    Io { path: String, source: std::io::Error },
}

/// Largest source count used when `n_sources` is left on auto.
pub const MAX_AUTO_SOURCES: usize = 40;

pub const KEYS: &[&str] = &[
    "horizon_s",
    "n_nodes",
    "area_width_m",
    "area_height_m",
    "model",
    "v_min_mps",
    "v_max_mps",
    "pause_s",
    "positions",
    "seed",
    "tx_range_m",
    "snr_reference_m",
    "bitrate_bps",
    "header_bytes",
    "success_curve",
    "success_param",
    "queue_len",
    "hello_interval_s",
    "tc_interval_s",
    "neighbor_hold_s",
    "topology_hold_s",
    "jitter_s",
    "traffic",
    "n_sources",
    "traffic_start_min_s",
    "traffic_start_max_s",
    "cbr_rate_pps",
    "cbr_size_bytes",
    "vbr_seed",
    "vbr_rate_factor",
    "vbr_fps",
    "vbr_gop",
    "mtu_bytes",
];

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub horizon: f64,
    pub n_nodes: usize,
    pub area: AreaBounds,
    pub mobility: MobilityConfig,
    /// Fixed node positions, only for the static model.
    pub positions: Option<Vec<Position>>,
    pub seed: u64,
    pub link: LinkModel,
    pub olsr: OlsrTimers,
    pub traffic: TrafficKind,
    /// `None` means `min(n_nodes / 2, 40)`.
    pub n_sources: Option<usize>,
    pub traffic_start: (f64, f64),
    pub cbr: CbrConfig,
    pub vbr: VbrConfig,
    /// `None` means 0.33 with 40 or more nodes, 0.25 otherwise.
    pub vbr_rate_factor: Option<f64>,
}

impl Scenario {
    pub fn new(n_nodes: usize) -> Self {
        Scenario {
            horizon: crate::kernel::DEFAULT_HORIZON.secs(),
            n_nodes,
            area: AreaBounds::default(),
            mobility: MobilityConfig::default(),
            positions: None,
            seed: 1,
            link: LinkModel::default(),
            olsr: OlsrTimers::default(),
            traffic: TrafficKind::Cbr,
            n_sources: None,
            traffic_start: (10.0, 20.0),
            cbr: CbrConfig::default(),
            vbr: VbrConfig::default(),
            vbr_rate_factor: None,
        }
    }

    /// Copy with a different node count; auto-sized fields follow it.
    pub fn with_nodes(&self, n_nodes: usize) -> Self {
        Scenario {
            n_nodes,
            ..self.clone()
        }
    }

    pub fn sources(&self) -> usize {
        self.n_sources.unwrap_or((self.n_nodes / 2).min(MAX_AUTO_SOURCES))
    }

    pub fn rate_factor(&self) -> f64 {
        self.vbr_rate_factor.unwrap_or_else(|| default_rate_factor(self.n_nodes))
    }

    /// VBR configuration with the rate factor filled in.
    pub fn vbr_config(&self) -> VbrConfig {
        VbrConfig {
            rate_factor: self.rate_factor(),
            ..self.vbr.clone()
        }
    }

    /// Same scenario with every auto value replaced by its concrete value.
    pub fn resolved(&self) -> Self {
        Scenario {
            n_sources: Some(self.sources()),
            vbr_rate_factor: Some(self.rate_factor()),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |key: &'static str, message: String| Err(ScenarioError::Invalid { key, message });
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return invalid("horizon_s", format!("{} must be positive", self.horizon));
        }
        if self.n_nodes < 2 {
            return invalid("n_nodes", format!("{} is below the minimum of 2", self.n_nodes));
        }
        self.area
            .validate()
            .map_err(|e| ScenarioError::Invalid { key: "area_width_m", message: e.to_string() })?;
        if self.mobility.model != MobilityModel::Static {
            self.mobility
                .validate()
                .map_err(|e| ScenarioError::Invalid { key: "v_min_mps", message: e.to_string() })?;
        }
        if let Some(p) = &self.positions {
            if self.mobility.model != MobilityModel::Static {
                return invalid("positions", "only allowed with model = static".into());
            }
            if p.len() != self.n_nodes {
                return invalid("positions", format!("{} positions for {} nodes", p.len(), self.n_nodes));
            }
            if let Some(out) = p.iter().find(|q| !self.area.contains(**q)) {
                return invalid("positions", format!("({}, {}) lies outside the area", out.x, out.y));
            }
        }
        self.link
            .validate()
            .map_err(|e| ScenarioError::Invalid { key: "tx_range_m", message: e.to_string() })?;
        self.olsr
            .validate()
            .map_err(|e| ScenarioError::Invalid { key: "hello_interval_s", message: e.to_string() })?;
        self.cbr
            .validate()
            .map_err(|e| ScenarioError::Invalid { key: "cbr_rate_pps", message: e.to_string() })?;
        self.vbr_config()
            .validate()
            .map_err(|e| ScenarioError::Invalid { key: "vbr_gop", message: e.to_string() })?;
        if 2 * self.sources() > self.n_nodes {
            return invalid(
                "n_sources",
                format!("{} sources need {} nodes, only {} configured", self.sources(), 2 * self.sources(), self.n_nodes),
            );
        }
        let (lo, hi) = self.traffic_start;
        if !(lo >= 0.0 && hi >= lo && hi < self.horizon) {
            return invalid("traffic_start_min_s", format!("window [{lo}, {hi}] must lie inside [0, horizon)"));
        }
        Ok(())
    }

    /// Canonical text form. Parsing it gives back an equal scenario.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("horizon_s", fmt_f64(self.horizon));
        kv("n_nodes", self.n_nodes.to_string());
        kv("area_width_m", fmt_f64(self.area.width));
        kv("area_height_m", fmt_f64(self.area.height));
        kv("model", self.mobility.model.as_str().into());
        kv("v_min_mps", fmt_f64(self.mobility.v_min));
        kv("v_max_mps", fmt_f64(self.mobility.v_max));
        kv("pause_s", fmt_f64(self.mobility.pause));
        if let Some(p) = &self.positions {
            let list: Vec<String> = p.iter().map(|q| format!("{} {}", fmt_f64(q.x), fmt_f64(q.y))).collect();
            kv("positions", list.join("; "));
        }
        kv("seed", self.seed.to_string());
        kv("tx_range_m", fmt_f64(self.link.tx_range));
        kv("snr_reference_m", fmt_f64(self.link.snr_reference_distance));
        kv("bitrate_bps", fmt_f64(self.link.bitrate));
        kv("header_bytes", self.link.header_bytes.to_string());
        kv("success_curve", self.link.curve.name().into());
        kv("success_param", fmt_f64(self.link.curve.parameter()));
        kv("queue_len", self.link.queue_len.to_string());
        kv("hello_interval_s", fmt_f64(self.olsr.hello_interval));
        kv("tc_interval_s", fmt_f64(self.olsr.tc_interval));
        kv("neighbor_hold_s", fmt_f64(self.olsr.neighbor_hold));
        kv("topology_hold_s", fmt_f64(self.olsr.topology_hold));
        kv("jitter_s", fmt_f64(self.olsr.jitter));
        kv("traffic", self.traffic.as_str().into());
        kv("n_sources", self.n_sources.map_or("auto".into(), |n| n.to_string()));
        kv("traffic_start_min_s", fmt_f64(self.traffic_start.0));
        kv("traffic_start_max_s", fmt_f64(self.traffic_start.1));
        kv("cbr_rate_pps", fmt_f64(self.cbr.rate));
        kv("cbr_size_bytes", self.cbr.packet_size.to_string());
        kv("vbr_seed", fmt_f64(self.vbr.initial_seed));
        kv("vbr_rate_factor", self.vbr_rate_factor.map_or("auto".into(), fmt_f64));
        kv("vbr_fps", fmt_f64(self.vbr.fps));
        kv("vbr_gop", self.vbr.gop.clone());
        kv("mtu_bytes", self.vbr.mtu.to_string());
        out
    }

    /// SHA-256 of the canonical text of the resolved scenario.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.resolved().to_config_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn fmt_f64(v: f64) -> String {
    // Shortest text that parses back to the same value.
    format!("{v:?}")
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut entries: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| ScenarioError::Syntax {
            line,
            message: format!("expected 'key = value', found '{body}'"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(ScenarioError::UnknownKey { line, key: key.into() });
        }
        if let Some(&(first, _)) = entries.get(key) {
            return Err(ScenarioError::DuplicateKey { line, key: key.into(), first });
        }
        entries.insert(key, (line, value));
    }

    let n_nodes = match entries.get("n_nodes") {
        Some(&(line, v)) => parse_value::<usize>("n_nodes", line, v)?,
        None => return Err(ScenarioError::Missing("n_nodes")),
    };
    let mut s = Scenario::new(n_nodes);
    let mut curve_name: Option<&str> = None;
    let mut curve_param: Option<f64> = None;
    let mut snr_reference: Option<f64> = None;

    for (&key, &(line, v)) in &entries {
        macro_rules! num {
            ($t:ty) => {
                parse_value::<$t>(key, line, v)?
            };
        }
        match key {
            "n_nodes" => {}
            "horizon_s" => s.horizon = num!(f64),
            "area_width_m" => s.area.width = num!(f64),
            "area_height_m" => s.area.height = num!(f64),
            "model" => s.mobility.model = num!(MobilityModel),
            "v_min_mps" => s.mobility.v_min = num!(f64),
            "v_max_mps" => s.mobility.v_max = num!(f64),
            "pause_s" => s.mobility.pause = num!(f64),
            "positions" => s.positions = Some(parse_positions(line, v)?),
            "seed" => s.seed = num!(u64),
            "tx_range_m" => s.link.tx_range = num!(f64),
            "snr_reference_m" => snr_reference = Some(num!(f64)),
            "bitrate_bps" => s.link.bitrate = num!(f64),
            "header_bytes" => s.link.header_bytes = num!(u32),
            "success_curve" => curve_name = Some(v),
            "success_param" => curve_param = Some(num!(f64)),
            "queue_len" => s.link.queue_len = num!(usize),
            "hello_interval_s" => s.olsr.hello_interval = num!(f64),
            "tc_interval_s" => s.olsr.tc_interval = num!(f64),
            "neighbor_hold_s" => s.olsr.neighbor_hold = num!(f64),
            "topology_hold_s" => s.olsr.topology_hold = num!(f64),
            "jitter_s" => s.olsr.jitter = num!(f64),
            "traffic" => s.traffic = num!(TrafficKind),
            "n_sources" => s.n_sources = auto_or(key, line, v)?,
            "traffic_start_min_s" => s.traffic_start.0 = num!(f64),
            "traffic_start_max_s" => s.traffic_start.1 = num!(f64),
            "cbr_rate_pps" => s.cbr.rate = num!(f64),
            "cbr_size_bytes" => s.cbr.packet_size = num!(u32),
            "vbr_seed" => s.vbr.initial_seed = num!(f64),
            "vbr_rate_factor" => s.vbr_rate_factor = auto_or(key, line, v)?,
            "vbr_fps" => s.vbr.fps = num!(f64),
            "vbr_gop" => s.vbr.gop = v.to_string(),
            "mtu_bytes" => s.vbr.mtu = num!(u32),
            _ => unreachable!("key list and match arms agree"),
        }
    }
    s.link.snr_reference_distance = snr_reference.unwrap_or(s.link.tx_range);
    if let Some(name) = curve_name {
        let line = entries["success_curve"].0;
        s.link.curve = name.parse().map_err(|message| ScenarioError::BadValue {
            line,
            key: "success_curve".into(),
            message,
        })?;
    }
    if let Some(p) = curve_param {
        s.link.curve = match s.link.curve {
            SuccessCurve::Step { .. } => SuccessCurve::Step { threshold: p },
            SuccessCurve::Exponential { .. } => SuccessCurve::Exponential { k: p },
        };
    }
    s.validate()?;
    Ok(s)
}

fn parse_value<T: std::str::FromStr>(key: &str, line: usize, v: &str) -> Result<T, ScenarioError>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| ScenarioError::BadValue {
        line,
        key: key.into(),
        message: format!("'{v}': {e}"),
    })
}

fn auto_or<T: std::str::FromStr>(key: &str, line: usize, v: &str) -> Result<Option<T>, ScenarioError>
where
    T::Err: std::fmt::Display,
{
    if v == "auto" {
        Ok(None)
    } else {
        parse_value(key, line, v).map(Some)
    }
}

/// `x y; x y; ...`
fn parse_positions(line: usize, v: &str) -> Result<Vec<Position>, ScenarioError> {
    v.split(';')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            let xy: Vec<&str> = p.split_whitespace().collect();
            match xy.as_slice() {
                [x, y] => Ok(Position::new(parse_value("positions", line, x)?, parse_value("positions", line, y)?)),
                _ => Err(ScenarioError::BadValue {
                    line,
                    key: "positions".into(),
                    message: format!("expected 'x y', found '{p}'"),
                }),
            }
        })
        .collect()
}
