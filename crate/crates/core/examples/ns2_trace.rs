//! Export node movement in NS-2 `setdest` form, read it back and compare
//! positions.
//!
//! cargo run --example ns2_trace -- [n_nodes] [horizon_s] [model]

use manetsim::kernel::SimTime;
use manetsim::mobility::{export_ns2_trace, parse_ns2_trace};
use manetsim::rng::RngStream;
use manetsim::scenario::parse_scenario;
use manetsim::sim::initial_nodes;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n = args.first().map_or("5", String::as_str);
    let horizon: f64 = args.get(1).map_or(Ok(200.0), |s| s.parse())?;
    let model = args.get(2).map_or("rwp", String::as_str);
    let s = parse_scenario(&format!("n_nodes = {n}\nhorizon_s = {horizon}\nmodel = {model}\nn_sources = 0\n"))?;

    let nodes = initial_nodes(&s, &RngStream::root(s.seed))?;
    let text = export_ns2_trace(&nodes, SimTime::from_secs(horizon))?;
    for line in text.lines().take(3 * s.n_nodes + 6) {
        println!("{line}");
    }
    println!("... {} lines", text.lines().count());

    let parsed = parse_ns2_trace(&text)?;
    let mut worst = 0.0f64;
    for k in 0..=100 {
        let t = horizon * k as f64 / 100.0;
        for (i, node) in nodes.iter().enumerate() {
            let truth = node.track.position_at(SimTime::from_secs(t)).or_else(|_| {
                // Past the current leg; replay from the leg list instead.
                let legs = node.legs_until(SimTime::from_secs(horizon))?;
                let leg = legs.iter().rev().find(|l| l.depart_at.secs() <= t).unwrap_or(&legs[0]);
                Ok::<_, manetsim::mobility::MobilityError>(leg.position_at(SimTime::from_secs(t)))
            })?;
            let back = parsed.position_at(i, t).expect("node in trace");
            worst = worst.max(truth.distance(back));
        }
    }
    println!("largest difference over 101 probe times: {worst:.3e} m");
    Ok(())
}
