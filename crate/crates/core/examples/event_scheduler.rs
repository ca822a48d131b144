//! The event kernel on its own: two hosts bouncing a token, a timeout that
//! gets cancelled, and same-instant events firing in insertion order.
//!
//! cargo run --example event_scheduler

use manetsim::kernel::{Scheduler, SimTime};

#[derive(Debug)]
enum Ev {
    Token { to: u8, hops: u32 },
    Timeout,
    Tick(&'static str),
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut sched: Scheduler<Ev> = Scheduler::new();
    sched.schedule(SimTime::from_secs(0.0), Ev::Token { to: 1, hops: 0 })?;
    let timeout = sched.schedule(SimTime::from_secs(0.35), Ev::Timeout)?;
    for name in ["first", "second", "third"] {
        sched.schedule(SimTime::from_secs(0.5), Ev::Tick(name))?;
    }

    let mut cancelled = false;
    let end = sched.run_until(SimTime::from_secs(1.0), |s, now, ev| {
        match *ev {
            Ev::Tick(name) => println!("{now:>10}  tick {name}"),
            Ev::Timeout => println!("{now:>10}  timeout"),
            Ev::Token { .. } => println!("{now:>10}  {ev:?}"),
        }
        match *ev {
            Ev::Token { to, hops } if hops < 6 => {
                s.schedule_in(0.125, Ev::Token { to: 1 - to, hops: hops + 1 })?;
                if hops == 2 && !cancelled {
                    cancelled = s.cancel(timeout);
                    println!("{:>10}  timeout cancelled: {cancelled}", "");
                }
            }
            _ => {}
        }
        Ok::<_, manetsim::kernel::KernelError>(())
    })?;
    println!("clock stopped at {end}, {} events processed, {} pending", sched.processed(), sched.len());
    Ok(())
}
