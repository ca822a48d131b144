//! MPEG-4-like frames: one group of pictures, mean bitrate under both rate
//! factors, and how a large frame splits into packets.
//!
//! cargo run --release --example vbr_traffic

use manetsim::kernel::SimTime;
use manetsim::traffic::{fragment_sizes, VbrConfig, VbrSource};

fn mean_bitrate(rate_factor: f64, frames: u64) -> f64 {
    let cfg = VbrConfig { rate_factor, ..VbrConfig::default() };
    let fps = cfg.fps;
    let mut src = VbrSource::new(cfg, SimTime::ZERO, SimTime::from_secs(frames as f64 / fps)).expect("valid config");
    let mut bytes = 0u64;
    let mut n = 0u64;
    while let Some((f, _)) = src.next_vbr_frame() {
        bytes += u64::from(f.bytes);
        n += 1;
    }
    bytes as f64 * 8.0 / (n as f64 / fps)
}

fn main() {
    let cfg = VbrConfig::default();
    let mut src = VbrSource::new(cfg.clone(), SimTime::ZERO, SimTime::from_secs(10.0)).expect("valid config");
    println!("first GoP ({}), rate factor {}", cfg.gop, cfg.rate_factor);
    for _ in 0..cfg.gop.len() {
        let (f, _) = src.next_vbr_frame().expect("flow active");
        println!("  #{:>2} {:?} at {:.2}s: {:>5} bytes", f.seq, f.kind, f.at.secs(), f.bytes);
    }

    let low = mean_bitrate(0.25, 100_000);
    let high = mean_bitrate(0.33, 100_000);
    println!("mean bitrate over 1e5 frames: {:.1} kbit/s at 0.25, {:.1} kbit/s at 0.33 (ratio {:.4})", low / 1e3, high / 1e3, high / low);
    println!("expected from the frame-size laws at 0.25: {:.1} kbit/s", VbrConfig { rate_factor: 0.25, ..cfg.clone() }.mean_bitrate() / 1e3);
    println!("a 2600-byte frame with mtu {}: {:?}", cfg.mtu, fragment_sizes(2600, cfg.mtu));
}
