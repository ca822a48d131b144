//! OLSR on a static 5x4 grid without data traffic: how many routes each node
//! knows as HELLO and TC messages spread.
//!
//! cargo run --example olsr_convergence

use manetsim::kernel::SimTime;
use manetsim::scenario::parse_scenario;
use manetsim::sim::Simulation;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // 200 m spacing with a 250 m range: only horizontal and vertical links.
    let positions: Vec<String> = (0..20).map(|i| format!("{} {}", 100 + 200 * (i % 5), 100 + 200 * (i / 5))).collect();
    let s = parse_scenario(&format!(
        "n_nodes = 20\nmodel = static\npositions = {}\nn_sources = 0\nhorizon_s = 40\n",
        positions.join("; ")
    ))?;
    let mut sim = Simulation::new(&s)?;
    println!("{:>6} {:>12} {:>12} {:>14}", "t (s)", "min routes", "max routes", "corner 0 -> 19");
    for step in 1..=16 {
        let t = SimTime::from_secs(step as f64 * 2.0);
        sim.run_until(t)?;
        let counts: Vec<usize> = (0..20).map(|n| sim.routes(n).len()).collect();
        let corner = sim.routes(0).get(&19).map_or("-".to_string(), |r| format!("via {} in {}", r.next_hop, r.hops));
        println!(
            "{:>6.1} {:>12} {:>12} {:>14}",
            t.secs(),
            counts.iter().min().unwrap(),
            counts.iter().max().unwrap(),
            corner
        );
    }
    let mprs = sim.olsr(7).mpr_selectors();
    println!("node 7 is MPR for {mprs:?}");
    Ok(())
}
