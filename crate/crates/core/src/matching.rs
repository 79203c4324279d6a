//! Bipartite b-matching: can every peer receive its demanded number of
//! distinct users from its own pool?

use std::collections::HashMap;

use crate::ecosystem::UserId;

/// Finds distinct users meeting every demand, trying each pool in the order
/// given. Returns per-peer assignments sorted by user id, or `None` when no
/// assignment exists.
pub fn b_matching(demands: &[u64], pools: &[Vec<UserId>]) -> Option<Vec<Vec<UserId>>> {
    assert_eq!(demands.len(), pools.len(), "one pool per demand");
    let mut index: HashMap<UserId, usize> = HashMap::new();
    let mut users: Vec<UserId> = Vec::new();
    let adj: Vec<Vec<usize>> = pools
        .iter()
        .map(|pool| {
            pool.iter()
                .map(|&u| {
                    *index.entry(u).or_insert_with(|| {
                        users.push(u);
                        users.len() - 1
                    })
                })
                .collect()
        })
        .collect();

    let total: u64 = demands.iter().sum();
    if total > users.len() as u64 || demands.iter().zip(&adj).any(|(&d, a)| d > a.len() as u64) {
        return None;
    }

    let mut owner: Vec<Option<usize>> = vec![None; users.len()];
    let mut seen = vec![0u32; users.len()];
    let mut stamp = 0u32;
    for (peer, &d) in demands.iter().enumerate() {
        for _ in 0..d {
            stamp += 1;
            if !augment(peer, &adj, &mut owner, &mut seen, stamp) {
                return None;
            }
        }
    }

    let mut out = vec![Vec::new(); pools.len()];
    for (u, o) in owner.iter().enumerate() {
        if let Some(p) = *o {
            out[p].push(users[u]);
        }
    }
    for a in &mut out {
        a.sort_unstable();
    }
    Some(out)
}

fn augment(peer: usize, adj: &[Vec<usize>], owner: &mut [Option<usize>], seen: &mut [u32], stamp: u32) -> bool {
    for &u in &adj[peer] {
        if seen[u] == stamp {
            continue;
        }
        seen[u] = stamp;
        let free = match owner[u] {
            None => true,
            Some(other) => other != peer && augment(other, adj, owner, seen, stamp),
        };
        if free {
            owner[u] = Some(peer);
            return true;
        }
    }
    false
}

pub fn feasible(demands: &[u64], pools: &[Vec<UserId>]) -> bool {
    b_matching(demands, pools).is_some()
}
