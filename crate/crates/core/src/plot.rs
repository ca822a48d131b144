//! SVG line charts of sweep results: one chart per metric and traffic kind,
//! node count on the x axis, one series per mobility model.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::sweep::{mean_sd, CSV_HEADER};

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("column {index} should be '{expected}', found '{found}'")]
    Schema { index: usize, expected: &'static str, found: String },
    #[error("missing column '{0}'")]
    MissingColumn(&'static str),
    #[error("line {line}, column '{column}': cannot read '{value}'")]
    BadValue { line: u64, column: &'static str, value: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Metric {
    Delay,
    Throughput,
    Pdr,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Delay, Metric::Throughput, Metric::Pdr];

    pub fn file_stem(self) -> &'static str {
        match self {
            Metric::Delay => "delay",
            Metric::Throughput => "throughput",
            Metric::Pdr => "pdr",
        }
    }

    fn title(self) -> &'static str {
        match self {
            Metric::Delay => "Average end-to-end delay",
            Metric::Throughput => "Measured throughput",
            Metric::Pdr => "Packet delivery ratio",
        }
    }

    fn axis_label(self) -> &'static str {
        match self {
            Metric::Delay => "delay (s)",
            Metric::Throughput => "throughput (kbit/s)",
            Metric::Pdr => "delivered / sent",
        }
    }

    fn scale(self) -> f64 {
        match self {
            Metric::Throughput => 1e-3,
            _ => 1.0,
        }
    }
}

pub const TRAFFICS: [&str; 2] = ["vbr", "cbr"];

/// Mean and standard deviation at one node count.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub n_nodes: usize,
    pub mean: f64,
    pub sd: f64,
}

/// Per-cell values read from a results CSV, keyed by traffic, metric and model.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlotData {
    pub series: BTreeMap<(String, Metric), BTreeMap<String, Vec<Point>>>,
    pub models: Vec<String>,
}

impl PlotData {
    pub fn series(&self, traffic: &str, metric: Metric) -> Option<&BTreeMap<String, Vec<Point>>> {
        self.series.get(&(traffic.to_string(), metric))
    }
}

fn check_header(header: &csv::StringRecord) -> Result<(), PlotError> {
    for (index, &expected) in CSV_HEADER.iter().enumerate() {
        match header.get(index) {
            Some(found) if found == expected => {}
            Some(found) => {
                return Err(PlotError::Schema {
                    index,
                    expected,
                    found: found.to_string(),
                })
            }
            None => return Err(PlotError::MissingColumn(expected)),
        }
    }
    if let Some(extra) = header.get(CSV_HEADER.len()) {
        return Err(PlotError::Schema {
            index: CSV_HEADER.len(),
            expected: "(end of header)",
            found: extra.to_string(),
        });
    }
    Ok(())
}

fn col(name: &str) -> usize {
    CSV_HEADER.iter().position(|&c| c == name).expect("known column")
}

/// Reads a sweep CSV. Successful run rows are averaged per cell; a cell
/// present only as an aggregate row uses its stored mean and deviations.
pub fn read_results<R: Read>(input: R) -> Result<PlotData, PlotError> {
    let mut reader = csv::Reader::from_reader(input);
    check_header(reader.headers()?)?;

    type Key = (String, String, usize);
    let mut runs: BTreeMap<Key, [Vec<f64>; 3]> = BTreeMap::new();
    let mut aggregates: BTreeMap<Key, [Option<Point>; 3]> = BTreeMap::new();
    let mut models: Vec<String> = Vec::new();

    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |name: &'static str| record.get(col(name)).unwrap_or("");
        let number = |name: &'static str| -> Result<Option<f64>, PlotError> {
            let v = field(name);
            if v.is_empty() {
                return Ok(None);
            }
            v.parse::<f64>().map(Some).map_err(|_| PlotError::BadValue {
                line,
                column: name,
                value: v.to_string(),
            })
        };
        let n_nodes: usize = field("n_nodes").parse().map_err(|_| PlotError::BadValue {
            line,
            column: "n_nodes",
            value: field("n_nodes").to_string(),
        })?;
        let model = field("model").to_string();
        let traffic = field("traffic").to_string();
        if !models.contains(&model) {
            models.push(model.clone());
        }
        let key = (traffic, model, n_nodes);
        let values = [number("avg_delay_s")?, number("throughput_bps")?, number("pdr")?];
        let status = field("status");
        if status == "ok" {
            let entry = runs.entry(key).or_default();
            for (slot, v) in entry.iter_mut().zip(values) {
                slot.extend(v);
            }
        } else if let Some(inner) = status.strip_prefix("mean(").and_then(|s| s.strip_suffix(')')) {
            let sds = parse_deviations(inner);
            let point = |i: usize, name: &str| {
                values[i].map(|mean| Point {
                    n_nodes,
                    mean,
                    sd: sds.get(name).copied().unwrap_or(0.0),
                })
            };
            aggregates.insert(key, [point(0, "sd_delay"), point(1, "sd_throughput"), point(2, "sd_pdr")]);
        }
    }

    let mut data = PlotData {
        series: BTreeMap::new(),
        models,
    };
    let mut add = |key: &Key, metric: usize, p: Point| {
        data.series
            .entry((key.0.clone(), Metric::ALL[metric]))
            .or_default()
            .entry(key.1.clone())
            .or_default()
            .push(p);
    };
    for (key, columns) in &runs {
        for (i, values) in columns.iter().enumerate() {
            if let Some((mean, sd)) = mean_sd(values) {
                add(key, i, Point { n_nodes: key.2, mean, sd });
            }
        }
    }
    for (key, points) in &aggregates {
        if runs.contains_key(key) {
            continue;
        }
        for (i, p) in points.iter().enumerate() {
            if let Some(p) = p {
                add(key, i, *p);
            }
        }
    }
    for models in data.series.values_mut() {
        for points in models.values_mut() {
            points.sort_by_key(|p| p.n_nodes);
        }
    }
    Ok(data)
}

fn parse_deviations(inner: &str) -> BTreeMap<String, f64> {
    inner
        .split(';')
        .filter_map(|kv| kv.split_once('='))
        .filter_map(|(k, v)| v.parse().ok().map(|v| (k.to_string(), v)))
        .collect()
}

/// Round tick positions covering `[lo, hi]`.
pub fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = if hi > lo { hi - lo } else { lo.abs().max(1.0) };
    let raw = span / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|&s| s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).floor() as i64;
    let last = (hi / step).ceil().max((lo / step).floor() + 1.0) as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 130.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

fn label(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

/// One chart as SVG text. Every model in `models` gets a legend entry, even
/// without points.
pub fn render_chart(metric: Metric, traffic: &str, models: &[String], series: Option<&BTreeMap<String, Vec<Point>>>) -> String {
    let empty = BTreeMap::new();
    let series = series.unwrap_or(&empty);
    let scale = metric.scale();
    let all: Vec<&Point> = series.values().flatten().collect();

    let (mut x_lo, mut x_hi) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p.n_nodes as f64), hi.max(p.n_nodes as f64))
    });
    let (mut y_lo, mut y_hi) = all.iter().fold((0.0f64, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min((p.mean - p.sd) * scale), hi.max((p.mean + p.sd) * scale))
    });
    if all.is_empty() {
        (x_lo, x_hi, y_lo, y_hi) = (0.0, 100.0, 0.0, 1.0);
    }
    if x_hi <= x_lo {
        x_lo -= 5.0;
        x_hi += 5.0;
    }
    if metric == Metric::Pdr {
        y_hi = y_hi.max(1.0);
    }
    let x_ticks = nice_ticks(x_lo, x_hi, 10);
    let y_ticks = nice_ticks(y_lo, y_hi, 6);
    let (x0, x1) = (x_ticks[0], *x_ticks.last().expect("ticks"));
    let (y0, y1) = (y_ticks[0], *y_ticks.last().expect("ticks"));
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
    let py = |y: f64| TOP + plot_h - (y - y0) / (y1 - y0) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}, {} traffic</text>"#,
        LEFT + plot_w / 2.0,
        metric.title(),
        traffic.to_uppercase()
    );
    for &t in &x_ticks {
        let x = px(t);
        let _ = writeln!(svg, r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#e5e5e5"/>"##, TOP + plot_h);
        let _ = writeln!(svg, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + plot_h + 16.0, label(t));
    }
    for &t in &y_ticks {
        let y = py(t);
        let _ = writeln!(svg, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e5e5e5"/>"##, LEFT + plot_w);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, y + 4.0, label(t));
    }
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">number of nodes</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 14.0
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(18,{:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        TOP + plot_h / 2.0,
        metric.axis_label()
    );

    for (i, model) in models.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let points = series.get(model).map_or(&[][..], Vec::as_slice);
        let _ = writeln!(svg, r#"<g class="series" data-model="{model}">"#);
        if points.len() > 1 {
            let path: Vec<String> = points
                .iter()
                .map(|p| format!("{:.2},{:.2}", px(p.n_nodes as f64), py(p.mean * scale)))
                .collect();
            let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, path.join(" "));
        }
        for p in points {
            let (x, y) = (px(p.n_nodes as f64), py(p.mean * scale));
            if p.sd > 0.0 {
                let (lo, hi) = (py((p.mean - p.sd) * scale), py((p.mean + p.sd) * scale));
                let _ = writeln!(
                    svg,
                    r#"<path d="M{x:.2},{lo:.2}V{hi:.2}M{:.2},{lo:.2}h8M{:.2},{hi:.2}h8" stroke="{color}"/>"#,
                    x - 4.0,
                    x - 4.0
                );
            }
            let _ = writeln!(svg, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3.5" fill="{color}"/>"#);
        }
        let ly = TOP + 14.0 + 20.0 * i as f64;
        let lx = LEFT + plot_w + 14.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 24.0,
            lx + 30.0,
            ly + 4.0,
            model.to_uppercase()
        );
        let _ = writeln!(svg, "</g>");
    }
    if all.is_empty() {
        let _ = writeln!(
            svg,
            r##"<text x="{:.2}" y="{:.2}" text-anchor="middle" fill="#888">no data</text>"##,
            LEFT + plot_w / 2.0,
            TOP + plot_h / 2.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes the six charts for `csv_path` into `out_dir` and returns their paths.
pub fn emit_plots(csv_path: impl AsRef<Path>, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, PlotError> {
    let csv_path = csv_path.as_ref();
    let out_dir = out_dir.as_ref();
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| PlotError::Io { path, source }
    };
    let file = std::fs::File::open(csv_path).map_err(io(csv_path))?;
    let data = read_results(file)?;
    std::fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let mut written = Vec::new();
    for metric in Metric::ALL {
        for traffic in TRAFFICS {
            let svg = render_chart(metric, traffic, &data.models, data.series(traffic, metric));
            let path = out_dir.join(format!("{}_{traffic}.svg", metric.file_stem()));
            std::fs::write(&path, svg).map_err(io(&path))?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "run_id,model,traffic,n_nodes,n_sources,seed,avg_delay_s,throughput_bps,pdr,sent,received,dropped,in_flight,status\n";

    fn row(model: &str, traffic: &str, n: usize, seed: u64, delay: f64) -> String {
        format!("{model}-{traffic}-n{n}-s{seed},{model},{traffic},{n},5,{seed},{delay},1000.0,0.5,10,5,5,0,ok\n")
    }

    #[test]
    fn header_mismatch_names_column() {
        let bad = HEADER.replace("pdr", "delivery");
        let err = read_results(bad.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("'pdr'"), "{err}");
        let short = "run_id,model,traffic\n";
        let err = read_results(short.as_bytes()).unwrap_err();
        assert!(matches!(err, PlotError::MissingColumn("n_nodes")));
    }

    #[test]
    fn bad_value_names_column() {
        let text = format!("{HEADER}x,rwp,cbr,10,5,1,fast,1.0,0.5,1,1,0,0,ok\n");
        let err = read_results(text.as_bytes()).unwrap_err();
        assert!(matches!(err, PlotError::BadValue { column: "avg_delay_s", line: 2, .. }), "{err}");
    }

    #[test]
    fn cells_are_averaged() {
        let mut text = HEADER.to_string();
        for (seed, d) in [(1, 0.1), (2, 0.3)] {
            text += &row("rwp", "vbr", 10, seed, d);
        }
        text += &row("rd", "vbr", 10, 1, 0.2);
        text += &row("rd", "vbr", 20, 1, 0.4);
        text += "rwp-vbr-n10-mean,rwp,vbr,10,5,,0.2,1000.0,0.5,10.0,5.0,5.0,0.0,mean(runs=2;sd_delay=0.1;sd_throughput=0.0;sd_pdr=0.0)\n";
        let data = read_results(text.as_bytes()).unwrap();
        assert_eq!(data.models, vec!["rwp".to_string(), "rd".to_string()]);
        let delay = data.series("vbr", Metric::Delay).unwrap();
        let rwp = &delay["rwp"];
        assert_eq!(rwp.len(), 1);
        assert!((rwp[0].mean - 0.2).abs() < 1e-12);
        assert!((rwp[0].sd - (0.02f64).sqrt()).abs() < 1e-12);
        assert_eq!(delay["rd"].iter().map(|p| p.n_nodes).collect::<Vec<_>>(), vec![10, 20]);
        assert!(data.series("cbr", Metric::Delay).is_none());
    }

    #[test]
    fn aggregate_only_rows_are_used() {
        let text = format!(
            "{HEADER}mbgss-cbr-n30-mean,mbgss,cbr,30,15,,0.05,2000.0,0.9,1.0,1.0,0.0,0.0,mean(runs=3;sd_delay=0.01;sd_throughput=5.0;sd_pdr=)\n"
        );
        let data = read_results(text.as_bytes()).unwrap();
        let p = data.series("cbr", Metric::Throughput).unwrap()["mbgss"][0];
        assert_eq!((p.n_nodes, p.mean, p.sd), (30, 2000.0, 5.0));
        assert_eq!(data.series("cbr", Metric::Pdr).unwrap()["mbgss"][0].sd, 0.0);
    }

    #[test]
    fn one_series_per_model() {
        let mut text = HEADER.to_string();
        for m in ["rwp", "rd", "mbgss"] {
            text += &row(m, "cbr", 10, 1, 0.01);
        }
        let data = read_results(text.as_bytes()).unwrap();
        let svg = render_chart(Metric::Delay, "cbr", &data.models, data.series("cbr", Metric::Delay));
        assert_eq!(svg.matches(r#"class="series""#).count(), 3);
        assert_eq!(svg.matches("<circle").count(), 3);
        let empty = render_chart(Metric::Pdr, "vbr", &data.models, None);
        assert!(empty.contains("no data"));
    }

    #[test]
    fn ticks_cover_range() {
        let t = nice_ticks(10.0, 100.0, 10);
        assert_eq!(t.first(), Some(&10.0));
        assert_eq!(t.last(), Some(&100.0));
        let t = nice_ticks(0.0, 0.0123, 6);
        assert!(t[0] <= 0.0 && *t.last().unwrap() >= 0.0123);
        assert!(t.len() <= 8);
    }

    #[test]
    fn six_files() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("r.csv");
        std::fs::write(&csv, format!("{HEADER}{}", row("rwp", "vbr", 10, 1, 0.1))).unwrap();
        let out = dir.path().join("plots");
        let files = emit_plots(&csv, &out).unwrap();
        let mut names: Vec<String> = files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
        names.sort();
        assert_eq!(
            names,
            ["delay_cbr.svg", "delay_vbr.svg", "pdr_cbr.svg", "pdr_vbr.svg", "throughput_cbr.svg", "throughput_vbr.svg"]
        );
    }
}
