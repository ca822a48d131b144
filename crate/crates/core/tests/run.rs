use manetsim::kernel::SimTime;
use manetsim::link::{effective_throughput, DropReason, SuccessCurve};
use manetsim::mobility::{MobilityModel, Position};
use manetsim::scenario::{parse_scenario, Scenario};
use manetsim::sim::{run, Simulation};
use manetsim::traffic::TrafficKind;

fn static_pair(distance: f64) -> Scenario {
    let mut s = Scenario::new(2);
    s.horizon = 120.0;
    s.mobility.model = MobilityModel::Static;
    s.positions = Some(vec![Position::new(100.0, 500.0), Position::new(100.0 + distance, 500.0)]);
    s.n_sources = Some(1);
    s
}

#[test]
fn adjacent_static_pair_delivers_everything() {
    let r = run(&static_pair(100.0), 3).unwrap();
    let rep = &r.report;
    assert!(rep.sent > 300);
    // Only the packet possibly on the air at the horizon can be missing.
    assert!(rep.in_flight <= 1);
    assert_eq!(rep.dropped, 0);
    assert_eq!(rep.received + rep.in_flight, rep.sent);
    // One hop: delay is the air time of a 512-byte packet plus queueing behind control frames.
    let air = (512.0 + 58.0) * 8.0 / 2e6;
    let d = rep.avg_delay.unwrap();
    assert!(d >= air - 1e-12 && d < 2.0 * air, "{d}");
}

#[test]
fn distant_pair_drops_everything_for_lack_of_route() {
    let r = run(&static_pair(400.0), 3).unwrap();
    let rep = &r.report;
    assert!(rep.sent > 300);
    assert_eq!(rep.received, 0);
    assert_eq!(rep.pdr, Some(0.0));
    assert_eq!(rep.drops.get(&DropReason::NoRoute), Some(&rep.sent));
}

#[test]
fn chain_relays_through_middle_node() {
    let mut s = Scenario::new(3);
    s.horizon = 60.0;
    s.mobility.model = MobilityModel::Static;
    s.positions = Some(vec![Position::new(100.0, 500.0), Position::new(300.0, 500.0), Position::new(500.0, 500.0)]);
    s.n_sources = Some(1);
    let mut sim = Simulation::new(&s).unwrap();
    sim.run_until(SimTime::from_secs(30.0)).unwrap();
    let r0 = sim.routes(0).clone();
    assert_eq!(r0[&2].next_hop, 1);
    assert_eq!(r0[&2].hops, 2);
    let flow = sim.flows()[0];
    let r = sim.finish().unwrap();
    assert!(r.report.sent > 100);
    if flow.source.abs_diff(flow.destination) == 2 {
        // Two hops: each received packet was on the air twice.
        let air = (512.0 + 58.0) * 8.0 / 2e6;
        assert!(r.report.avg_delay.unwrap() >= 2.0 * air - 1e-12);
    }
    assert_eq!(r.report.dropped, 0);
}

#[test]
fn saturated_link_matches_throughput_formula() {
    let mut s = static_pair(50.0);
    s.horizon = 100.0;
    s.cbr.packet_size = 1000;
    s.cbr.rate = 1000.0;
    s.vbr.mtu = 1500;
    s.traffic_start = (10.0, 10.0);
    let r = run(&s, 1).unwrap();
    // Delivered payload bits over the saturated part of the run.
    let (t0, t1) = (20.0, 100.0);
    let bits: f64 = r
        .ledger
        .records()
        .filter_map(|p| p.h_r.filter(|&h| h > t0 && h <= t1).map(|_| p.bytes as f64 * 8.0))
        .sum();
    let measured = bits / (t1 - t0);
    let l = 1000.0 + 58.0;
    let predicted = effective_throughput(l, 58.0, 2e6, 1.0, &SuccessCurve::Step { threshold: 1.0 }).unwrap();
    assert!((measured / predicted - 1.0).abs() < 0.05, "{measured} vs {predicted}");
}

#[test]
fn same_scenario_and_seed_replays_exactly() {
    let s = parse_scenario("n_nodes = 20\nhorizon_s = 120\ntraffic = vbr\nmodel = rwp\n").unwrap();
    let a = run(&s, 11).unwrap();
    let b = run(&s, 11).unwrap();
    assert!(a.same_outcome(&b));
    let c = run(&s, 12).unwrap();
    assert!(!c.same_outcome(&a));
    assert_eq!(s.traffic, TrafficKind::Vbr);
}

#[test]
fn conservation_holds_under_mobility() {
    for model in ["rwp", "rd", "mbgss"] {
        let s = parse_scenario(&format!("n_nodes = 20\nhorizon_s = 120\nmodel = {model}\n")).unwrap();
        let rep = run(&s, 2).unwrap().report;
        assert_eq!(rep.sent, rep.received + rep.dropped + rep.in_flight, "{model}");
        assert!(rep.received > 0, "{model}");
    }
}
