//! One-attempt-at-a-time stuffing attacker for large ecosystems.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attacker::{within_budget, AttackState, Attacker, StuffingPlan};
use crate::auction::{AuctionState, Market};
use crate::ecosystem::{Ecosystem, SiteIdx, UserId};
use crate::error::Result;

/// Slots each peer would give `target` if it bid next.
pub fn project_allocations(market: &Market, auction: &AuctionState, target: SiteIdx) -> Result<Vec<u64>> {
    (0..market.n_sites())
        .map(|s| {
            if s == target {
                Ok(0)
            } else {
                Ok(auction.prop_bid(market, s)?.slots[target])
            }
        })
        .collect()
}

/// A batch under construction.
#[derive(Debug, Clone)]
pub struct GreedyBatch {
    /// Allocation each peer's monitors are assumed to follow.
    pub slots: Vec<u64>,
    pub counts: Vec<u64>,
    pub assignment: Vec<Vec<UserId>>,
    taken: HashSet<UserId>,
    cursor: Vec<usize>,
}

pub struct GreedyAttacker<'a> {
    base: Attacker<'a>,
    eco: &'a Ecosystem,
    market: &'a Market,
    rng: ChaCha8Rng,
}

impl<'a> GreedyAttacker<'a> {
    pub fn new(base: Attacker<'a>, eco: &'a Ecosystem, market: &'a Market, seed: u64) -> Self {
        Self {
            base,
            eco,
            market,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn attacker(&self) -> &Attacker<'a> {
        &self.base
    }

    /// Starts a batch against the larger of the current and projected slots.
    pub fn start_batch(&self, auction: &AuctionState, attack: &AttackState) -> Result<GreedyBatch> {
        let target = self.base.target();
        let projected = project_allocations(self.market, auction, target)?;
        let latest = auction.allocations_to(target);
        let n = self.base.n_sites();
        Ok(GreedyBatch {
            slots: latest.iter().zip(&projected).map(|(&a, &b)| a.max(b)).collect(),
            counts: vec![0; n],
            assignment: vec![Vec::new(); n],
            taken: attack.captured.keys().copied().collect(),
            cursor: vec![0; n],
        })
    }

    fn gain(&self, batch: &GreedyBatch, s: SiteIdx, f: u64) -> f64 {
        self.base.reuse(s) * f as f64 * self.base.dodge(s, batch.slots[s], f)
    }

    /// Change in the batch's expected gain at `s` from one more attempt.
    pub fn marginal_gain(&self, batch: &GreedyBatch, s: SiteIdx) -> f64 {
        let f = batch.counts[s];
        self.gain(batch, s, f + 1) - self.gain(batch, s, f)
    }

    fn available(&self, batch: &mut GreedyBatch, s: SiteIdx) -> bool {
        let pool = self.base.shared_pool(s);
        while batch.cursor[s] < pool.len() && batch.taken.contains(&pool[batch.cursor[s]]) {
            batch.cursor[s] += 1;
        }
        batch.cursor[s] < pool.len()
    }

    fn batch_dodge(&self, batch: &GreedyBatch, bump: Option<SiteIdx>) -> f64 {
        (0..self.base.n_sites())
            .filter(|&s| s != self.base.target())
            .map(|s| {
                let f = batch.counts[s] + u64::from(bump == Some(s));
                self.base.dodge(s, batch.slots[s], f)
            })
            .product()
    }

    /// Commits one attempt. Returns `false` once no attempt adds expected gain
    /// within budget.
    pub fn greedy_step(&mut self, batch: &mut GreedyBatch, attack: &AttackState) -> bool {
        let target = self.base.target();
        let aggression = self.base.params().aggression;
        let mut best = 0.0;
        let mut ties: Vec<SiteIdx> = Vec::new();
        for s in (0..self.base.n_sites()).filter(|&s| s != target) {
            if !self.available(batch, s) {
                continue;
            }
            let delta = self.marginal_gain(batch, s);
            if delta <= 0.0 || !within_budget(attack.cumulative_dodge * self.batch_dodge(batch, Some(s)), aggression) {
                continue;
            }
            if delta > best {
                best = delta;
                ties.clear();
                ties.push(s);
            } else if delta == best {
                ties.push(s);
            }
        }
        if ties.is_empty() {
            return false;
        }
        let s = ties[self.rng.random_range(0..ties.len())];

        // fewest accounts first; pools are sorted by account count
        let pool = self.base.shared_pool(s);
        let fewest = self.eco.sites_of(pool[batch.cursor[s]]).len();
        let group: Vec<UserId> = pool[batch.cursor[s]..]
            .iter()
            .copied()
            .take_while(|&u| self.eco.sites_of(u).len() == fewest)
            .filter(|u| !batch.taken.contains(u))
            .collect();
        let u = group[self.rng.random_range(0..group.len())];
        batch.taken.insert(u);
        batch.counts[s] += 1;
        batch.assignment[s].push(u);
        true
    }

    /// Runs greedy steps to exhaustion and packages the batch.
    pub fn plan(&mut self, auction: &AuctionState, attack: &AttackState) -> Result<StuffingPlan> {
        let mut batch = self.start_batch(auction, attack)?;
        while self.greedy_step(&mut batch, attack) {}
        let (batch_dodge, gains, expected_gain, _) =
            self.base.evaluate(&batch.slots, &batch.counts, attack.cumulative_dodge);
        for a in &mut batch.assignment {
            a.sort_unstable();
        }
        Ok(StuffingPlan {
            counts: batch.counts,
            assignment: batch.assignment,
            batch_dodge,
            gains,
            expected_gain,
        })
    }

    pub fn advance(&self, attack: &mut AttackState, plan: &StuffingPlan) -> Result<()> {
        self.base.advance(attack, plan)
    }
}
