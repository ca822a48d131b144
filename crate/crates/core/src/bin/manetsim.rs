use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use manetsim::kernel::SimTime;
use manetsim::mobility::{export_ns2_trace, MobilityModel};
use manetsim::plot::emit_plots;
use manetsim::rng::RngStream;
use manetsim::scenario::{load_scenario, Scenario};
use manetsim::sim::{initial_nodes, run};
use manetsim::sweep::{parse_node_range, sweep, RowKind, SweepSpec};
use manetsim::traffic::TrafficKind;

#[derive(Parser)]
#[command(name = "manetsim", version, about = "Discrete-event MANET simulator with OLSR routing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its records and summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the scenario file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every node count, model and traffic kind over several seeds.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `lo..hi:step` or a comma list.
        #[arg(long, default_value = "10..100:10")]
        nodes: String,
        #[arg(long, default_value = "rwp,rd,mbgss", value_delimiter = ',')]
        models: Vec<MobilityModel>,
        #[arg(long, default_value = "cbr,vbr", value_delimiter = ',')]
        traffic: Vec<TrafficKind>,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw the six delay, throughput and delivery charts from a sweep CSV.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export node movement as an NS-2 trace.
    Trace {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn load(path: &Path) -> Result<Scenario> {
    load_scenario(path).with_context(|| format!("loading {}", path.display()))
}

fn cmd_run(config: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut scenario = load(config)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    create_dir(out)?;
    write(&out.join("scenario.conf"), scenario.resolved().to_config_string())?;
    let result = run(&scenario, scenario.seed)?;
    let r = &result.report;

    let mut records = Vec::new();
    result.ledger.write_csv(&mut records)?;
    write(&out.join("records.csv"), records)?;

    let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v}"));
    let mut summary = format!(
        "fingerprint = {}\nseed = {}\navg_delay_s = {}\nthroughput_bps = {}\npdr = {}\nsent = {}\nreceived = {}\ndropped = {}\nin_flight = {}\n",
        result.fingerprint,
        result.seed,
        opt(r.avg_delay),
        r.throughput,
        opt(r.pdr),
        r.sent,
        r.received,
        r.dropped,
        r.in_flight
    );
    for (reason, n) in &r.drops {
        summary += &format!("dropped_{} = {n}\n", reason.as_str().replace('-', "_"));
    }
    summary += &format!("events = {}\ncontrol_frames = {}\n", result.events, result.control_frames);
    write(&out.join("summary.txt"), &summary)?;
    print!("{summary}");
    eprintln!("wall clock {:.2?}, output in {}", result.wall_clock, out.display());
    Ok(())
}

fn cmd_sweep(config: &Path, spec: SweepSpec, out: &Path) -> Result<()> {
    create_dir(out)?;
    write(&out.join("scenario.conf"), spec.base.to_config_string())?;
    let models: Vec<&str> = spec.models.iter().map(|m| m.as_str()).collect();
    let traffics: Vec<&str> = spec.traffics.iter().map(|t| t.as_str()).collect();
    let counts: Vec<String> = spec.node_counts.iter().map(usize::to_string).collect();
    write(
        &out.join("sweep.conf"),
        format!(
            "config = {}\nnodes = {}\nmodels = {}\ntraffic = {}\nseeds = {}\n",
            config.display(),
            counts.join(","),
            models.join(","),
            traffics.join(","),
            spec.seeds
        ),
    )?;
    eprintln!("{} runs on {} threads", spec.total_runs(), rayon::current_num_threads());
    let started = std::time::Instant::now();
    let output = sweep(&spec)?;
    let csv_path = out.join("results.csv");
    write(&csv_path, output.to_csv_string()?)?;

    let mut failures = String::new();
    for row in output.failures() {
        if let RowKind::Failed { message, .. } = &row.kind {
            eprintln!("run {} failed: {message}", row.run_id);
            failures += &format!("{}: {message}\n", row.run_id);
        }
    }
    if !failures.is_empty() {
        write(&out.join("failures.log"), &failures)?;
    }
    eprintln!(
        "{} data rows ({} failed) in {:.1?}, written to {}",
        output.data_rows().count(),
        output.failures().count(),
        started.elapsed(),
        csv_path.display()
    );
    Ok(())
}

fn cmd_trace(config: &Path, out: &Path) -> Result<()> {
    let scenario = load(config)?;
    let nodes = initial_nodes(&scenario, &RngStream::root(scenario.seed))?;
    let trace = export_ns2_trace(&nodes, SimTime::from_secs(scenario.horizon))?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write(out, trace)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config, seed, out } => cmd_run(&config, seed, &out),
        Command::Sweep {
            config,
            nodes,
            models,
            traffic,
            seeds,
            out,
        } => {
            let spec = SweepSpec {
                base: load(&config)?,
                node_counts: parse_node_range(&nodes)?,
                models,
                traffics: traffic,
                seeds,
            };
            cmd_sweep(&config, spec, &out)
        }
        Command::Plot { csv, out } => {
            for path in emit_plots(&csv, &out)? {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Trace { config, out } => cmd_trace(&config, &out),
    }
}
