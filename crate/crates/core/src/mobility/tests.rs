use super::*;
use crate::rng::RngStream;
use rand::Rng;

fn rng(label: &str) -> RngStream {
    RngStream::root(42).fork(label)
}

fn cfg(model: MobilityModel) -> MobilityConfig {
    MobilityConfig {
        model,
        ..MobilityConfig::default()
    }
}

fn t(s: f64) -> SimTime {
    SimTime::from_secs(s)
}

#[test]
fn rwp_initial_coordinates_inside_area() {
    let mut r = rng("rwp");
    let area = AreaBounds::default();
    for i in 0..2000 {
        let tr = init_rwp(i, &mut r, area, cfg(MobilityModel::RandomWaypoint)).unwrap();
        assert!(area.contains(tr.leg().origin));
        assert!(area.contains(tr.leg().destination));
    }
}

#[test]
fn degenerate_speed_interval() {
    let mut r = rng("deg");
    let c = MobilityConfig {
        v_min: 5.0,
        v_max: 5.0,
        ..cfg(MobilityModel::RandomWaypoint)
    };
    let mut node = MobileNode::new(init_rwp(0, &mut r, AreaBounds::default(), c).unwrap(), r);
    for leg in node.legs_until(t(2000.0)).unwrap() {
        assert_eq!(leg.speed, 5.0);
    }
    let mut r2 = rng("deg-ss");
    let ss = MobilityConfig {
        model: MobilityModel::SteadyState,
        ..c
    };
    for i in 0..100 {
        assert_eq!(init_steady_state(i, &mut r2, AreaBounds::default(), ss).unwrap().leg().speed, 5.0);
    }
    node.track.advance(&mut node.rng, node.track.next_event().unwrap()).unwrap();
}

#[test]
fn rd_east_heading_hits_east_wall() {
    let area = AreaBounds::default();
    assert_eq!(ray_to_boundary(Position::new(500.0, 500.0), 0.0, &area), Position::new(1000.0, 500.0));
    assert_eq!(
        ray_to_boundary(Position::new(500.0, 500.0), std::f64::consts::PI, &area),
        Position::new(0.0, 500.0)
    );
}

#[test]
fn rd_from_boundary_crosses_area() {
    let area = AreaBounds::default();
    let from = Position::new(0.0, 300.0);
    let hit = ray_to_boundary(from, 0.3, &area);
    assert!(hit.x > 0.0);
    assert!(wall_distance(hit, &area) < 1e-6);
    assert!(hit.distance(from) > 0.0);
}

#[test]
fn rd_legs_end_on_boundary() {
    let area = AreaBounds::default();
    let mut r = rng("rd");
    let mut node = MobileNode::new(init_rd(0, &mut r, area, cfg(MobilityModel::RandomDirection)).unwrap(), r);
    let mut checked = 0;
    while checked < 10_000 {
        let leg = *node.track.leg();
        assert!(wall_distance(leg.destination, &area) < 1e-6);
        if checked > 0 {
            assert!(wall_distance(leg.origin, &area) < 1e-6);
        }
        let next = node.track.next_event().unwrap();
        node.track.advance(&mut node.rng, next).unwrap();
        checked += 1;
    }
}

#[test]
fn rd_heading_points_inward_on_east_wall() {
    let area = AreaBounds::default();
    let mut r = rng("east");
    for _ in 0..1000 {
        let h = next_direction_rd(&mut r, Position::new(1000.0, 400.0), &area);
        assert!(h.cos() < 0.0, "heading {h} leaves through the east wall");
    }
}

#[test]
fn rd_heading_in_corner_is_quarter_plane() {
    let area = AreaBounds::default();
    let mut r = rng("corner");
    for _ in 0..1000 {
        let h = next_direction_rd(&mut r, Position::new(0.0, 0.0), &area);
        assert!(h.cos() >= 0.0 && h.sin() >= 0.0, "heading {h}");
        let h = next_direction_rd(&mut r, Position::new(1000.0, 1000.0), &area);
        assert!(h.cos() <= 0.0 && h.sin() <= 0.0, "heading {h}");
    }
}

#[test]
fn rd_south_wall_heading_is_uniform_over_half_plane() {
    // One-sample Kolmogorov-Smirnov test against U(0, pi).
    let area = AreaBounds::default();
    let mut r = rng("south");
    let n = 10_000;
    let mut angles: Vec<f64> = (0..n)
        .map(|_| next_direction_rd(&mut r, Position::new(420.0, 0.0), &area))
        .collect();
    for a in &angles {
        assert!(*a > 0.0 && *a < std::f64::consts::PI);
    }
    angles.sort_by(f64::total_cmp);
    let d = angles
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let cdf = a / std::f64::consts::PI;
            (cdf - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - cdf).abs())
        })
        .fold(0.0, f64::max);
    // Asymptotic critical value at alpha = 0.01.
    let critical = 1.6276 / (n as f64).sqrt();
    assert!(d < critical, "KS D = {d} >= {critical}");
}

#[test]
fn rwp_initial_positions_uniform() {
    let area = AreaBounds::default();
    let mut r = rng("uniform");
    let n = 100_000;
    let mut counts = [0u32; 100];
    let (mut sx, mut sy) = (0.0, 0.0);
    for i in 0..n {
        let p = init_rwp(i, &mut r, area, cfg(MobilityModel::RandomWaypoint)).unwrap().leg().origin;
        sx += p.x;
        sy += p.y;
        let cx = ((p.x / 100.0) as usize).min(9);
        let cy = ((p.y / 100.0) as usize).min(9);
        counts[cy * 10 + cx] += 1;
    }
    assert!((sx / n as f64 - 500.0).abs() < 5.0);
    assert!((sy / n as f64 - 500.0).abs() < 5.0);
    let expected = n as f64 / 100.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let critical = statrs_chi2_critical(99);
    assert!(chi2 < critical, "chi2 {chi2} >= {critical}");
}

fn statrs_chi2_critical(dof: u32) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    ChiSquared::new(dof as f64).unwrap().inverse_cdf(0.99)
}

#[test]
fn position_at_interpolates() {
    let leg = MovementLeg::new(Position::new(0.0, 0.0), Position::new(100.0, 0.0), 10.0, t(0.0));
    assert_eq!(leg.arrive_at, t(10.0));
    assert_eq!(leg.position_at(t(5.0)), Position::new(50.0, 0.0));
    assert_eq!(leg.position_at(t(0.0)), leg.origin);
    assert_eq!(leg.position_at(t(10.0)), leg.destination);
}

#[test]
fn position_outside_window_is_rejected() {
    let mut r = rng("window");
    let tr = init_rwp(0, &mut r, AreaBounds::default(), cfg(MobilityModel::RandomWaypoint)).unwrap();
    let end = tr.next_event().unwrap();
    assert!(tr.position_at(end).is_ok());
    assert!(matches!(tr.position_at(end + 1.0), Err(MobilityError::OutsideLeg { .. })));
}

#[test]
fn random_positions_stay_inside() {
    let area = AreaBounds::default();
    for model in [MobilityModel::RandomWaypoint, MobilityModel::RandomDirection, MobilityModel::SteadyState] {
        let mut r = rng(model.as_str());
        let mut node = MobileNode::new(init_track(0, &mut r, area, cfg(model)).unwrap(), r.fork("probe"));
        let mut probe = r.fork("times");
        let mut queries = 0;
        while queries < 10_000 {
            let tr = &node.track;
            let (a, b) = (tr.leg().depart_at.secs(), tr.next_event().unwrap().secs());
            for _ in 0..5 {
                let q = a + (b - a) * probe.random::<f64>();
                let p = tr.position_at(t(q)).unwrap();
                assert!(area.contains(p), "{model}: {p:?}");
                queries += 1;
            }
            node.track.advance(&mut node.rng, t(b)).unwrap();
        }
    }
}

#[test]
fn zero_pause_departs_at_arrival() {
    let mut r = rng("pause0");
    let mut tr = init_rwp(0, &mut r, AreaBounds::default(), cfg(MobilityModel::RandomWaypoint)).unwrap();
    for _ in 0..100 {
        let arrival = tr.leg().arrive_at;
        let next = tr.next_event().unwrap();
        tr.advance(&mut r, next).unwrap();
        assert_eq!(tr.phase(), Phase::Moving);
        let gap = tr.leg().depart_at - arrival;
        assert!((0.0..GRID).contains(&gap), "gap {gap}");
    }
}

#[test]
fn pause_delays_departure() {
    let mut r = rng("pause30");
    let c = MobilityConfig {
        pause: 30.0,
        ..cfg(MobilityModel::RandomWaypoint)
    };
    let mut tr = init_rwp(0, &mut r, AreaBounds::default(), c).unwrap();
    let arrival = tr.leg().arrive_at;
    let end_of_pause = tr.advance(&mut r, tr.next_event().unwrap()).unwrap().unwrap();
    assert_eq!(tr.phase(), Phase::Paused);
    assert!((end_of_pause - arrival - 30.0).abs() < 2.0 * GRID);
    let stop = tr.leg().origin;
    assert_eq!(tr.position_at(arrival + 15.0).unwrap(), stop);
    tr.advance(&mut r, end_of_pause).unwrap();
    assert_eq!(tr.phase(), Phase::Moving);
    assert_eq!(tr.leg().depart_at, end_of_pause);
    assert_eq!(tr.leg().origin, stop);
}

#[test]
fn advance_off_schedule_is_rejected() {
    let mut r = rng("off");
    let mut tr = init_rwp(0, &mut r, AreaBounds::default(), cfg(MobilityModel::RandomWaypoint)).unwrap();
    assert!(matches!(tr.advance(&mut r, t(0.5)), Err(MobilityError::NotAtWaypoint { .. })));
}

#[test]
fn speeds_within_bounds() {
    let c = cfg(MobilityModel::RandomWaypoint);
    for model in [MobilityModel::RandomWaypoint, MobilityModel::RandomDirection, MobilityModel::SteadyState] {
        let mut r = rng(model.as_str());
        let node = MobileNode::new(init_track(0, &mut r, AreaBounds::default(), cfg(model)).unwrap(), r);
        for leg in node.legs_until(t(20_000.0)).unwrap() {
            assert!((c.v_min..=c.v_max).contains(&leg.speed), "{model}: {}", leg.speed);
        }
    }
}

#[test]
fn steady_state_rejects_zero_min_speed() {
    let mut r = rng("zero");
    let c = MobilityConfig {
        v_min: 0.0,
        ..cfg(MobilityModel::SteadyState)
    };
    assert_eq!(
        init_steady_state(0, &mut r, AreaBounds::default(), c).unwrap_err(),
        MobilityError::ZeroMinSpeed
    );
}

#[test]
fn wrong_model_is_rejected() {
    let mut r = rng("wrong");
    assert!(matches!(
        init_rwp(0, &mut r, AreaBounds::default(), cfg(MobilityModel::RandomDirection)),
        Err(MobilityError::WrongModel(_))
    ));
}

#[test]
fn mean_leg_distance_matches_monte_carlo() {
    let mut r = rng("mc");
    for area in [AreaBounds::new(1.0, 1.0).unwrap(), AreaBounds::new(1000.0, 400.0).unwrap()] {
        let n = 400_000;
        let mean: f64 = (0..n)
            .map(|_| {
                let a = Position::new(r.random::<f64>() * area.width, r.random::<f64>() * area.height);
                let b = Position::new(r.random::<f64>() * area.width, r.random::<f64>() * area.height);
                a.distance(b)
            })
            .sum::<f64>()
            / n as f64;
        let closed = area.mean_leg_distance();
        assert!((mean - closed).abs() / closed < 5e-3, "{mean} vs {closed}");
    }
    assert!((AreaBounds::new(1.0, 1.0).unwrap().mean_leg_distance() - 0.521_405).abs() < 1e-6);
}

/// Time-average speed of a plain RWP node: total distance over total time.
fn long_run_rwp_speed(seed_label: &str, nodes: usize, horizon: f64) -> f64 {
    let area = AreaBounds::default();
    let (mut dist, mut time) = (0.0, 0.0);
    for i in 0..nodes {
        let mut r = rng(seed_label).fork(&i.to_string());
        let mut tr = init_rwp(i, &mut r, area, cfg(MobilityModel::RandomWaypoint)).unwrap();
        loop {
            let leg = *tr.leg();
            dist += leg.length();
            let next = tr.next_event().unwrap();
            time += next - leg.depart_at;
            if next.secs() > horizon {
                break;
            }
            tr.advance(&mut r, next).unwrap();
        }
    }
    dist / time
}

#[test]
fn steady_state_speed_matches_long_run_average() {
    let oracle = long_run_rwp_speed("long-run", 10, 1e6);
    let c = cfg(MobilityModel::SteadyState);
    let mut r = rng("ss-speed");
    let n = 100_000;
    let mean: f64 = (0..n)
        .map(|i| init_steady_state(i, &mut r, AreaBounds::default(), c).unwrap().leg().speed)
        .sum::<f64>()
        / n as f64;
    let closed = (c.v_max - c.v_min) / (c.v_max / c.v_min).ln();
    assert!((mean - oracle).abs() / oracle < 0.02, "init mean {mean}, long-run {oracle}");
    assert!((mean - closed).abs() / closed < 0.02, "init mean {mean}, closed form {closed}");
}

#[test]
fn steady_state_positions_match_long_run_occupancy() {
    // Two-sample chi-square homogeneity test on a 10x10 grid. The oracle
    // samples each RWP node every 500 s, far longer than a typical leg, so
    // its samples are close to independent.
    let area = AreaBounds::default();
    let cell = |p: Position| ((p.y / 100.0) as usize).min(9) * 10 + ((p.x / 100.0) as usize).min(9);
    let mut oracle = [0f64; 100];
    let per_node = 2_000;
    for i in 0..50 {
        let mut r = rng("occupancy").fork(&i.to_string());
        let mut tr = init_rwp(i, &mut r, area, cfg(MobilityModel::RandomWaypoint)).unwrap();
        // Burn in past the initial transient.
        let mut probe = 5_000.0;
        for _ in 0..per_node {
            while tr.next_event().unwrap().secs() < probe {
                let next = tr.next_event().unwrap();
                tr.advance(&mut r, next).unwrap();
            }
            oracle[cell(tr.position_at(t(probe)).unwrap())] += 1.0;
            probe += 500.0;
        }
    }
    let mut sampled = [0f64; 100];
    let mut r = rng("ss-pos");
    for i in 0..100_000 {
        let p = init_steady_state(i, &mut r, area, cfg(MobilityModel::SteadyState)).unwrap().leg().origin;
        sampled[cell(p)] += 1.0;
    }
    let (n1, n2) = (oracle.iter().sum::<f64>(), sampled.iter().sum::<f64>());
    let mut chi2 = 0.0;
    for k in 0..100 {
        let total = oracle[k] + sampled[k];
        for (obs, n) in [(oracle[k], n1), (sampled[k], n2)] {
            let expected = total * n / (n1 + n2);
            chi2 += (obs - expected).powi(2) / expected;
        }
    }
    assert!(chi2 < statrs_chi2_critical(99), "chi2 {chi2}");

    // And the density is centre-weighted rather than uniform.
    let centre: f64 = [44, 45, 54, 55].iter().map(|&k| sampled[k]).sum();
    let corner: f64 = [0, 9, 90, 99].iter().map(|&k| sampled[k]).sum();
    assert!(centre > 3.0 * corner);
}

#[test]
fn steady_state_with_pause_can_start_paused() {
    let c = MobilityConfig {
        pause: 200.0,
        ..cfg(MobilityModel::SteadyState)
    };
    let mut r = rng("ss-pause");
    let paused = (0..2000)
        .filter(|&i| init_steady_state(i, &mut r, AreaBounds::default(), c).unwrap().phase() == Phase::Paused)
        .count();
    let area = AreaBounds::default();
    let p = 200.0 / (200.0 + area.mean_leg_distance() * c.mean_inverse_speed());
    let frac = paused as f64 / 2000.0;
    assert!((frac - p).abs() < 0.05, "paused fraction {frac}, expected {p}");
}

#[test]
fn static_node_never_moves() {
    let tr = NodeTrack::fixed(0, Position::new(5.0, 7.0), AreaBounds::default());
    assert_eq!(tr.next_event(), None);
    assert_eq!(tr.position_at(t(1e5)).unwrap(), Position::new(5.0, 7.0));
}

#[test]
fn trace_static_node() {
    let node = MobileNode::new(NodeTrack::fixed(0, Position::new(5.0, 7.0), AreaBounds::default()), rng("s"));
    let text = export_ns2_trace(&[node], t(1200.0)).unwrap();
    assert_eq!(
        text,
        "$node_(0) set X_ 5.000000\n$node_(0) set Y_ 7.000000\n$node_(0) set Z_ 0.000000\n"
    );
}

#[test]
fn trace_single_leg_line() {
    let area = AreaBounds::default();
    let leg = MovementLeg::new(Position::new(0.0, 0.0), Position::new(100.0, 0.0), 10.0, t(0.0));
    let track = NodeTrack::moving(0, area, MobilityConfig::default(), leg, None);
    let node = MobileNode::new(track, rng("one"));
    // Horizon before the first waypoint so only the initial leg is emitted.
    let text = export_ns2_trace(&[node], t(5.0)).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "$node_(0) set X_ 0.000000");
    assert_eq!(lines[3], "$ns_ at 0.000000 \"$node_(0) setdest 100.000000 0.000000 10.000000\"");
}

#[test]
fn trace_round_trip() {
    let area = AreaBounds::default();
    let root = RngStream::root(9);
    let horizon = t(1200.0);
    let models = [MobilityModel::RandomWaypoint, MobilityModel::RandomDirection, MobilityModel::SteadyState];
    let nodes: Vec<MobileNode> = (0..20)
        .map(|i| {
            let mut r = root.fork(&format!("n{i}"));
            let c = MobilityConfig {
                pause: if i % 4 == 0 { 7.5 } else { 0.0 },
                ..cfg(models[i % 3])
            };
            MobileNode::new(init_track(i, &mut r, area, c).unwrap(), r)
        })
        .collect();
    let text = export_ns2_trace(&nodes, horizon).unwrap();
    let parsed = parse_ns2_trace(&text).unwrap();
    assert_eq!(parsed.nodes.len(), 20);
    let mut probe = root.fork("probe");
    let mut worst: f64 = 0.0;
    for (i, node) in nodes.iter().enumerate() {
        let legs = node.legs_until(horizon).unwrap();
        for _ in 0..1000 {
            let q = probe.random::<f64>() * 1200.0;
            let idx = legs.partition_point(|l| l.depart_at.secs() <= q) - 1;
            let direct = legs[idx].position_at(t(q));
            let replay = parsed.position_at(i, q).unwrap();
            worst = worst.max(direct.distance(replay));
        }
    }
    assert!(worst < 1e-6, "max round-trip error {worst}");
}

#[test]
fn parse_errors_carry_line_numbers() {
    let err = parse_ns2_trace("$node_(0) set X_ 1.0\n$node_(0) set Y_ oops\n").unwrap_err();
    assert!(matches!(err, TraceError::Parse { line: 2, .. }), "{err}");
    let err = parse_ns2_trace("$node_(0) set X_ 1.0\n").unwrap_err();
    assert!(matches!(err, TraceError::MissingInitial(0)));
}
