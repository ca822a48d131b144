//! A reduced density sweep: every model and traffic kind at a few node
//! counts, written as CSV with the six charts next to it.
//!
//! cargo run --release --example density_sweep -- [out_dir] [seeds] [horizon_s]

use std::path::PathBuf;

use manetsim::plot::emit_plots;
use manetsim::scenario::Scenario;
use manetsim::sweep::{sweep, RowKind, SweepSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = PathBuf::from(args.first().map_or("target/density_sweep", String::as_str));
    let seeds: u64 = args.get(1).map_or(Ok(3), |s| s.parse())?;
    let horizon: f64 = args.get(2).map_or(Ok(120.0), |s| s.parse())?;

    let mut base = Scenario::new(10);
    base.horizon = horizon;
    let spec = SweepSpec {
        node_counts: vec![10, 20, 30, 40],
        seeds,
        ..SweepSpec::full(base)
    };
    println!("{} runs of {horizon} s", spec.total_runs());
    let result = sweep(&spec)?;

    std::fs::create_dir_all(&out)?;
    let csv = out.join("results.csv");
    std::fs::write(&csv, result.to_csv_string()?)?;
    for row in result.rows.iter().filter(|r| matches!(r.kind, RowKind::Aggregate { .. })) {
        println!(
            "{:<18} delay {:>8.2} ms  throughput {:>9.1} kb/s  pdr {:.3}",
            row.run_id,
            row.avg_delay.unwrap_or(f64::NAN) * 1e3,
            row.throughput.unwrap_or(0.0) / 1e3,
            row.pdr.unwrap_or(0.0)
        );
    }
    for path in emit_plots(&csv, &out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
