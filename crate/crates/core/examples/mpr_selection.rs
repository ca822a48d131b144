//! Multipoint relay selection on a hand-made neighborhood.
//!
//! Node 0 has neighbors 1..=5. Neighbor 1 is the only way to reach 6, so it
//! is picked first; 3 then covers the most of what remains.
//!
//! cargo run --example mpr_selection

use std::collections::{BTreeMap, BTreeSet};

use manetsim::olsr::{covers_all, select_mprs};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sym: BTreeSet<usize> = (1..=5).collect();
    let links: &[(usize, &[usize])] = &[(6, &[1]), (7, &[1, 3]), (8, &[2, 3]), (9, &[3, 4]), (10, &[4, 5])];
    let two_hop: BTreeMap<usize, BTreeSet<usize>> = links.iter().map(|&(w, via)| (w, via.iter().copied().collect())).collect();

    println!("1-hop: {sym:?}");
    for (w, via) in &two_hop {
        println!("2-hop {w:>2} via {via:?}");
    }
    let mprs = select_mprs(&sym, &two_hop)?;
    println!("MPR set: {mprs:?}");
    println!("covers every 2-hop neighbor: {}", covers_all(&mprs, &two_hop));
    Ok(())
}
