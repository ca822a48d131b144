//! Density sweeps: every (model, traffic, node count, seed) combination of a
//! base scenario, run in parallel and reduced to CSV rows in a fixed order.

use std::io::Write;

use rayon::prelude::*;
use thiserror::Error;

use crate::metrics::MetricsReport;
use crate::mobility::MobilityModel;
use crate::scenario::Scenario;
use crate::sim::run;
use crate::traffic::TrafficKind;

pub const CSV_HEADER: [&str; 14] = [
    "run_id",
    "model",
    "traffic",
    "n_nodes",
    "n_sources",
    "seed",
    "avg_delay_s",
    "throughput_bps",
    "pdr",
    "sent",
    "received",
    "dropped",
    "in_flight",
    "status",
];

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("sweep needs at least one {0}")]
    Empty(&'static str),
    #[error("bad node range '{text}': {message}")]
    NodeRange { text: String, message: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub base: Scenario,
    pub node_counts: Vec<usize>,
    pub models: Vec<MobilityModel>,
    pub traffics: Vec<TrafficKind>,
    /// Runs per cell. Cell seeds are `base.seed`, `base.seed + 1`, ...
    pub seeds: u64,
}

impl SweepSpec {
    /// Node counts 10, 20, ..., 100, the three mobile models, both traffic
    /// kinds and ten seeds.
    pub fn full(base: Scenario) -> Self {
        SweepSpec {
            base,
            node_counts: (1..=10).map(|k| 10 * k).collect(),
            models: vec![MobilityModel::RandomWaypoint, MobilityModel::RandomDirection, MobilityModel::SteadyState],
            traffics: vec![TrafficKind::Cbr, TrafficKind::Vbr],
            seeds: 10,
        }
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        if self.node_counts.is_empty() {
            return Err(SweepError::Empty("node count"));
        }
        if self.models.is_empty() {
            return Err(SweepError::Empty("mobility model"));
        }
        if self.traffics.is_empty() {
            return Err(SweepError::Empty("traffic kind"));
        }
        if self.seeds == 0 {
            return Err(SweepError::Empty("seed"));
        }
        Ok(())
    }

    pub fn total_runs(&self) -> usize {
        self.node_counts.len() * self.models.len() * self.traffics.len() * self.seeds as usize
    }

    /// Cells in output order: model, then traffic, then node count.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &model in &self.models {
            for &traffic in &self.traffics {
                for &n_nodes in &self.node_counts {
                    out.push(Cell { model, traffic, n_nodes });
                }
            }
        }
        out
    }

    pub fn scenario_for(&self, cell: Cell) -> Scenario {
        let mut s = self.base.with_nodes(cell.n_nodes);
        s.mobility.model = cell.model;
        s.traffic = cell.traffic;
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cell {
    pub model: MobilityModel,
    pub traffic: TrafficKind,
    pub n_nodes: usize,
}

impl Cell {
    fn label(&self) -> String {
        format!("{}-{}-n{}", self.model.as_str(), self.traffic, self.n_nodes)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RowKind {
    Run { seed: u64 },
    Failed { seed: u64, message: String },
    Aggregate { runs: usize, sd_delay: Option<f64>, sd_throughput: f64, sd_pdr: Option<f64> },
}

/// One CSV line. Aggregate rows hold per-cell means in the metric columns.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub run_id: String,
    pub cell: Cell,
    pub n_sources: usize,
    pub kind: RowKind,
    pub avg_delay: Option<f64>,
    pub throughput: Option<f64>,
    pub pdr: Option<f64>,
    pub sent: Option<f64>,
    pub received: Option<f64>,
    pub dropped: Option<f64>,
    pub in_flight: Option<f64>,
}

impl SweepRow {
    fn from_report(cell: Cell, n_sources: usize, seed: u64, r: &MetricsReport) -> Self {
        SweepRow {
            run_id: format!("{}-s{seed}", cell.label()),
            cell,
            n_sources,
            kind: RowKind::Run { seed },
            avg_delay: r.avg_delay,
            throughput: Some(r.throughput),
            pdr: r.pdr,
            sent: Some(r.sent as f64),
            received: Some(r.received as f64),
            dropped: Some(r.dropped as f64),
            in_flight: Some(r.in_flight as f64),
        }
    }

    fn failed(cell: Cell, n_sources: usize, seed: u64, message: String) -> Self {
        SweepRow {
            run_id: format!("{}-s{seed}", cell.label()),
            cell,
            n_sources,
            kind: RowKind::Failed { seed, message },
            avg_delay: None,
            throughput: None,
            pdr: None,
            sent: None,
            received: None,
            dropped: None,
            in_flight: None,
        }
    }

    pub fn is_aggregate(&self) -> bool {
        matches!(self.kind, RowKind::Aggregate { .. })
    }

    pub fn fields(&self) -> [String; 14] {
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:?}"));
        let count = |v: Option<f64>| match (&self.kind, v) {
            (RowKind::Run { .. }, Some(v)) => format!("{}", v as u64),
            (_, v) => opt(v),
        };
        let (seed, status) = match &self.kind {
            RowKind::Run { seed } => (seed.to_string(), "ok".to_string()),
            RowKind::Failed { seed, message } => (seed.to_string(), format!("failed: {message}")),
            RowKind::Aggregate { runs, sd_delay, sd_throughput, sd_pdr } => (
                String::new(),
                format!(
                    "mean(runs={runs};sd_delay={};sd_throughput={};sd_pdr={})",
                    opt(*sd_delay),
                    opt(Some(*sd_throughput)),
                    opt(*sd_pdr)
                ),
            ),
        };
        [
            self.run_id.clone(),
            self.cell.model.as_str().to_string(),
            self.cell.traffic.to_string(),
            self.cell.n_nodes.to_string(),
            self.n_sources.to_string(),
            seed,
            opt(self.avg_delay),
            opt(self.throughput),
            opt(self.pdr),
            count(self.sent),
            count(self.received),
            count(self.dropped),
            count(self.in_flight),
            status,
        ]
    }
}

/// Sample mean and standard deviation (n - 1 denominator, 0 for one value).
pub fn mean_sd(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt()))
}

/// Mean row for one cell over its successful runs. `None` when every run failed.
pub fn aggregate(cell: Cell, n_sources: usize, rows: &[SweepRow]) -> Option<SweepRow> {
    let ok: Vec<&SweepRow> = rows.iter().filter(|r| matches!(r.kind, RowKind::Run { .. })).collect();
    if ok.is_empty() {
        return None;
    }
    let column = |f: fn(&SweepRow) -> Option<f64>| -> Vec<f64> { ok.iter().filter_map(|r| f(r)).collect() };
    let delay = mean_sd(&column(|r| r.avg_delay));
    let throughput = mean_sd(&column(|r| r.throughput)).expect("successful runs report throughput");
    let pdr = mean_sd(&column(|r| r.pdr));
    let mean = |f: fn(&SweepRow) -> Option<f64>| mean_sd(&column(f)).map(|(m, _)| m);
    Some(SweepRow {
        run_id: format!("{}-mean", cell.label()),
        cell,
        n_sources,
        kind: RowKind::Aggregate {
            runs: ok.len(),
            sd_delay: delay.map(|d| d.1),
            sd_throughput: throughput.1,
            sd_pdr: pdr.map(|p| p.1),
        },
        avg_delay: delay.map(|d| d.0),
        throughput: Some(throughput.0),
        pdr: pdr.map(|p| p.0),
        sent: mean(|r| r.sent),
        received: mean(|r| r.received),
        dropped: mean(|r| r.dropped),
        in_flight: mean(|r| r.in_flight),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOutput {
    /// Data rows of each cell followed by its aggregate row.
    pub rows: Vec<SweepRow>,
}

impl SweepOutput {
    pub fn data_rows(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| !r.is_aggregate())
    }

    pub fn failures(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| matches!(r.kind, RowKind::Failed { .. }))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), SweepError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(CSV_HEADER)?;
        for row in &self.rows {
            out.write_record(row.fields())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String, SweepError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Runs every combination in `spec`. Runs execute on the rayon pool; the
/// rows come back in the order of [`SweepSpec::cells`], seeds ascending.
pub fn sweep(spec: &SweepSpec) -> Result<SweepOutput, SweepError> {
    spec.validate()?;
    let jobs: Vec<(Cell, Scenario, u64)> = spec
        .cells()
        .into_iter()
        .flat_map(|cell| {
            let scenario = spec.scenario_for(cell);
            (0..spec.seeds).map(move |k| (cell, scenario.clone(), spec.base.seed.wrapping_add(k)))
        })
        .collect();
    let runs: Vec<SweepRow> = jobs
        .par_iter()
        .map(|(cell, scenario, seed)| match run(scenario, *seed) {
            Ok(result) => SweepRow::from_report(*cell, scenario.sources(), *seed, &result.report),
            Err(e) => SweepRow::failed(*cell, scenario.sources(), *seed, e.to_string()),
        })
        .collect();

    let mut rows = Vec::with_capacity(runs.len() + runs.len() / spec.seeds as usize);
    for chunk in runs.chunks(spec.seeds as usize) {
        let cell = chunk[0].cell;
        rows.extend_from_slice(chunk);
        if let Some(agg) = aggregate(cell, chunk[0].n_sources, chunk) {
            rows.push(agg);
        }
    }
    Ok(SweepOutput { rows })
}

/// `10..100:10` (inclusive, with step), `10..40` (step 10) or `10,20,40`.
pub fn parse_node_range(text: &str) -> Result<Vec<usize>, SweepError> {
    let bad = |message: &str| SweepError::NodeRange {
        text: text.to_string(),
        message: message.to_string(),
    };
    let num = |s: &str| s.trim().parse::<usize>().map_err(|e| bad(&e.to_string()));
    let counts = if let Some((lo, rest)) = text.split_once("..") {
        let (hi, step) = match rest.split_once(':') {
            Some((hi, step)) => (num(hi)?, num(step)?),
            None => (num(rest)?, 10),
        };
        let lo = num(lo)?;
        if step == 0 {
            return Err(bad("step must be positive"));
        }
        if hi < lo {
            return Err(bad("end lies below start"));
        }
        (lo..=hi).step_by(step).collect()
    } else {
        text.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    if counts.is_empty() {
        return Err(bad("no node counts"));
    }
    Ok(counts)
}
