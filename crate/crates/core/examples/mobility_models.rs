//! The three mobility models side by side: first legs of one node, then the
//! ensemble speed in early and late windows. Plain random waypoint slows
//! down over time; the steady-state start does not.
//!
//! cargo run --release --example mobility_models

use manetsim::kernel::SimTime;
use manetsim::mobility::{init_track, AreaBounds, MobileNode, MobilityConfig, MobilityModel, MovementLeg};
use manetsim::rng::RngStream;

const MODELS: [MobilityModel; 3] = [MobilityModel::RandomWaypoint, MobilityModel::RandomDirection, MobilityModel::SteadyState];

fn legs(model: MobilityModel, seed: u64, node: usize, horizon: f64) -> Vec<MovementLeg> {
    let cfg = MobilityConfig { model, ..MobilityConfig::default() };
    let mut rng = RngStream::root(seed).fork(&format!("node-{node}"));
    let track = init_track(node, &mut rng, AreaBounds::default(), cfg).expect("valid config");
    MobileNode::new(track, rng).legs_until(SimTime::from_secs(horizon)).expect("legs")
}

fn mean_speed(model: MobilityModel, window: (f64, f64)) -> f64 {
    let mut distance = 0.0;
    let (nodes, seeds) = (50usize, 20u64);
    for seed in 0..seeds {
        for node in 0..nodes {
            for l in legs(model, seed, node, window.1) {
                let overlap = l.arrive_at.secs().min(window.1) - l.depart_at.secs().max(window.0);
                distance += l.speed * overlap.max(0.0);
            }
        }
    }
    distance / ((window.1 - window.0) * (nodes as u64 * seeds) as f64)
}

fn main() {
    for model in MODELS {
        println!("{model}: first legs of node 0");
        for l in legs(model, 1, 0, 1200.0).iter().take(4) {
            println!(
                "  t={:>8.2}s ({:>6.1}, {:>6.1}) -> ({:>6.1}, {:>6.1}) at {:.2} m/s",
                l.depart_at.secs(),
                l.origin.x,
                l.origin.y,
                l.destination.x,
                l.destination.y,
                l.speed
            );
        }
    }
    println!();
    println!("mean speed (m/s), 50 nodes x 20 seeds, v in [1, 10], no pause");
    println!("{:>6} {:>10} {:>10} {:>10}", "model", "0-100 s", "500-600 s", "1100-1200 s");
    for model in MODELS {
        let w: Vec<f64> = [(0.0, 100.0), (500.0, 600.0), (1100.0, 1200.0)].iter().map(|&w| mean_speed(model, w)).collect();
        println!("{:>6} {:>10.3} {:>10.3} {:>10.3}", model.as_str(), w[0], w[1], w[2]);
    }
    let stationary = MobilityConfig { model: MobilityModel::SteadyState, ..MobilityConfig::default() }.stationary_mean_speed();
    println!("stationary mean speed for this range: {stationary:.3} m/s");
}
