//! Multipoint relay selection.

use std::collections::{BTreeMap, BTreeSet};

use super::{NodeId, OlsrError};

/// Greedy MPR heuristic.
///
/// `two_hop` maps every strict 2-hop node (not the selecting node, not one of
/// its symmetric neighbors) to the symmetric neighbors that reach it.
///
/// 1. Every neighbor that is the only way to reach some 2-hop node is taken.
/// 2. While 2-hop nodes remain uncovered, take the neighbor covering the most
///    of them. Ties go to the neighbor reaching more 2-hop nodes overall,
///    then to the lower id.
pub fn select_mprs(sym_neighbors: &BTreeSet<NodeId>, two_hop: &BTreeMap<NodeId, BTreeSet<NodeId>>) -> Result<BTreeSet<NodeId>, OlsrError> {
    let mut reach: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
    for (&target, via) in two_hop {
        let usable: Vec<NodeId> = via.iter().copied().filter(|v| sym_neighbors.contains(v)).collect();
        if usable.is_empty() {
            return Err(OlsrError::EmptyReachSet(target));
        }
        for v in usable {
            reach.entry(v).or_default().insert(target);
        }
    }

    let mut mprs = BTreeSet::new();
    let mut uncovered: BTreeSet<NodeId> = two_hop.keys().copied().collect();

    for (_, via) in two_hop {
        let mut usable = via.iter().filter(|v| sym_neighbors.contains(v));
        if let (Some(&only), None) = (usable.next(), usable.next()) {
            mprs.insert(only);
        }
    }
    for m in &mprs {
        for t in &reach[m] {
            uncovered.remove(t);
        }
    }

    while !uncovered.is_empty() {
        let best = reach
            .iter()
            .filter(|(n, _)| !mprs.contains(*n))
            .map(|(&n, targets)| {
                let gain = targets.intersection(&uncovered).count();
                (gain, targets.len(), std::cmp::Reverse(n))
            })
            .max()
            .filter(|&(gain, _, _)| gain > 0)
            .map(|(_, _, std::cmp::Reverse(n))| n)
            .expect("every uncovered 2-hop node has a reaching neighbor");
        for t in &reach[&best] {
            uncovered.remove(t);
        }
        mprs.insert(best);
    }
    Ok(mprs)
}

/// True if every 2-hop node is reached by at least one member of `mprs`.
pub fn covers_all(mprs: &BTreeSet<NodeId>, two_hop: &BTreeMap<NodeId, BTreeSet<NodeId>>) -> bool {
    two_hop.values().all(|via| via.iter().any(|v| mprs.contains(v)))
}
