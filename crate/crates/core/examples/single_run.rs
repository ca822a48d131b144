//! One full-length run, printing the three metrics and the drop breakdown.
//!
//! cargo run --release --example single_run -- [n_nodes] [rwp|rd|mbgss] [cbr|vbr] [seed] [horizon_s]

use manetsim::scenario::parse_scenario;
use manetsim::sim::run;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n_nodes = args.first().map_or("50", String::as_str);
    let model = args.get(1).map_or("mbgss", String::as_str);
    let traffic = args.get(2).map_or("vbr", String::as_str);
    let seed: u64 = args.get(3).map_or(Ok(1), |s| s.parse())?;
    let horizon = args.get(4).map_or("1200", String::as_str);

    let scenario = parse_scenario(&format!(
        "n_nodes = {n_nodes}\nmodel = {model}\ntraffic = {traffic}\nhorizon_s = {horizon}\n"
    ))?;
    let result = run(&scenario, seed)?;
    let r = &result.report;

    println!("scenario {}", &result.fingerprint[..16]);
    println!("{} nodes, {} sources, model {model}, traffic {traffic}, seed {seed}", scenario.n_nodes, scenario.sources());
    match r.avg_delay {
        Some(d) => println!("average end-to-end delay  {:.6} s", d),
        None => println!("average end-to-end delay  n/a (nothing received)"),
    }
    println!("throughput                {:.1} bit/s", r.throughput);
    println!("packet delivery ratio     {:.4}", r.pdr.unwrap_or(0.0));
    println!("sent {} received {} dropped {} in flight {}", r.sent, r.received, r.dropped, r.in_flight);
    for (reason, count) in &r.drops {
        println!("  dropped ({reason}): {count}");
    }
    println!("{} events, {} control frames, {:.2?} wall clock", result.events, result.control_frames, result.wall_clock);
    Ok(())
}
