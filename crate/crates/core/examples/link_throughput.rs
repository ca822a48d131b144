//! Payload throughput of the link model: the closed form over distance, then
//! a saturated two-node run measured against it.
//!
//! cargo run --release --example link_throughput

use manetsim::link::{effective_throughput, LinkModel, SuccessCurve};
use manetsim::scenario::parse_scenario;
use manetsim::sim::run;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let link = LinkModel::default();
    let soft = SuccessCurve::Exponential { k: 2.0 };
    let size = 512.0 + f64::from(link.header_bytes);
    println!("{:>8} {:>10} {:>14} {:>14}", "d (m)", "gamma", "step (kb/s)", "exp k=2 (kb/s)");
    for d in [10.0, 50.0, 100.0, 150.0, 200.0, 250.0, 300.0, 400.0] {
        let g = link.gamma_at(d);
        let step = effective_throughput(size, f64::from(link.header_bytes), link.bitrate, g, &link.curve)?;
        let exp = effective_throughput(size, f64::from(link.header_bytes), link.bitrate, g, &soft)?;
        println!("{d:>8.0} {g:>10.3} {:>14.1} {:>14.1}", step / 1e3, exp / 1e3);
    }

    // One CBR flow offered far more than the channel carries.
    let s = parse_scenario(
        "n_nodes = 2\nmodel = static\npositions = 100 100; 200 100\nn_sources = 1\nhorizon_s = 60\n\
         traffic_start_min_s = 5\ntraffic_start_max_s = 5\ncbr_rate_pps = 1000\ncbr_size_bytes = 512\n",
    )?;
    let r = run(&s, 1)?.report;
    let formula = effective_throughput(size, f64::from(link.header_bytes), link.bitrate, 1.0, &link.curve)?;
    println!();
    // Traffic is on for 55 of the 60 measured seconds.
    println!(
        "saturated pair: measured {:.1} kb/s, link limit {:.1} kb/s, limit scaled to the active share {:.1} kb/s",
        r.throughput / 1e3,
        formula / 1e3,
        formula * 55.0 / 60.0 / 1e3
    );
    println!("delivered {} of {} packets; {} dropped at the queue", r.received, r.sent, r.dropped);
    Ok(())
}
