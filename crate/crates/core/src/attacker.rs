//! Worst-case credential-stuffing planner.
//!
//! Plans are under-specified as per-peer attempt counts; a count vector is
//! valid when it fits the aggression budget and distinct uncaptured users can
//! be found for every attempt. Concrete users are chosen afterwards, favouring
//! users with the fewest accounts.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::auction::{AuctionState, Market};
use crate::ecosystem::{Ecosystem, SiteIdx, UserId};
use crate::error::{Error, Result};
use crate::matching::{b_matching, feasible};
use crate::risk::optimal_attempts;
use crate::sequence::{eligible_bidders, Slack};

pub const BUDGET_TOLERANCE: f64 = 1e-12;

/// How a batch's expected gain is weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainWeighting {
    /// By the batch's own dodge probability.
    #[default]
    Batch,
    /// By the cumulative dodge probability including this batch.
    Cumulative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackerParams {
    pub foresight: usize,
    pub lookahead: usize,
    pub aggression: f64,
    pub weighting: GainWeighting,
}

impl Default for AttackerParams {
    fn default() -> Self {
        Self {
            foresight: 0,
            lookahead: 1,
            aggression: 0.75,
            weighting: GainWeighting::Batch,
        }
    }
}

impl AttackerParams {
    pub fn validate(&self) -> Result<()> {
        if self.lookahead == 0 {
            return Err(Error::ZeroLookahead);
        }
        if !(0.0..=1.0).contains(&self.aggression) {
            return Err(Error::AggressionOutOfRange(self.aggression));
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.foresight + self.lookahead
    }
}

/// `1 − cumulative ≤ aggression` up to [`BUDGET_TOLERANCE`].
pub fn within_budget(cumulative_dodge: f64, aggression: f64) -> bool {
    1.0 - cumulative_dodge <= aggression + BUDGET_TOLERANCE
}

#[derive(Debug, Clone, PartialEq)]
pub struct StuffingPlan {
    /// Attempts per site; the target's entry is 0.
    pub counts: Vec<u64>,
    /// Concrete users per site, sorted by id.
    pub assignment: Vec<Vec<UserId>>,
    pub batch_dodge: Vec<f64>,
    /// Per-site expected gain.
    pub gains: Vec<f64>,
    pub expected_gain: f64,
}

impl StuffingPlan {
    pub fn empty(n: usize) -> Self {
        Self {
            counts: vec![0; n],
            assignment: vec![Vec::new(); n],
            batch_dodge: vec![1.0; n],
            gains: vec![0.0; n],
            expected_gain: 0.0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }

    pub fn dodge(&self) -> f64 {
        self.batch_dodge.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackTraceRow {
    pub bid_index: usize,
    pub peer: SiteIdx,
    pub f: u64,
    pub batch_dodge: f64,
    pub cumulative_dodge: f64,
    pub expected_gain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackState {
    /// Expected capture per stuffed user.
    pub captured: BTreeMap<UserId, f64>,
    pub cumulative_dodge: f64,
    pub cumulative_cost: f64,
    pub bid_index: usize,
    pub trace: Vec<AttackTraceRow>,
    /// Cumulative cost after each attack opportunity.
    pub cost_history: Vec<f64>,
}

impl Default for AttackState {
    fn default() -> Self {
        Self {
            captured: BTreeMap::new(),
            cumulative_dodge: 1.0,
            cumulative_cost: 0.0,
            bid_index: 0,
            trace: Vec::new(),
            cost_history: Vec::new(),
        }
    }
}

impl AttackState {
    pub fn is_stuffed(&self, u: UserId) -> bool {
        self.captured.contains_key(&u)
    }
}

/// Everything about the ecosystem the attacker needs, precomputed for one
/// target.
pub struct Attacker<'a> {
    market: &'a Market,
    target: SiteIdx,
    slack: Slack,
    params: AttackerParams,
    /// Shared users per site, sorted by (account count, id).
    shared: Vec<Vec<UserId>>,
    reuse: Vec<f64>,
    vulnerable: usize,
}

impl<'a> Attacker<'a> {
    pub fn new(
        e: &Ecosystem,
        market: &'a Market,
        target: SiteIdx,
        slack: Slack,
        params: AttackerParams,
    ) -> Result<Self> {
        params.validate()?;
        if target >= e.n_sites() {
            return Err(Error::UnknownSite(target));
        }
        let n = e.n_sites();
        let mut shared = vec![Vec::new(); n];
        let mut reuse = vec![0.0; n];
        for s in (0..n).filter(|&s| s != target) {
            let mut users = e.shared_users(target, s);
            users.sort_by_key(|&u| (e.sites_of(u).len(), u));
            shared[s] = users;
            reuse[s] = e.reuse_rate(target, s);
        }
        Ok(Self {
            market,
            target,
            slack,
            params,
            shared,
            reuse,
            vulnerable: e.vulnerable_users(target)?.len(),
        })
    }

    pub fn params(&self) -> &AttackerParams {
        &self.params
    }

    pub fn target(&self) -> SiteIdx {
        self.target
    }

    /// `|V|` of the target.
    pub fn vulnerable(&self) -> usize {
        self.vulnerable
    }

    pub fn n_sites(&self) -> usize {
        self.shared.len()
    }

    pub fn reuse(&self, s: SiteIdx) -> f64 {
        self.reuse[s]
    }

    pub fn shared_pool(&self, s: SiteIdx) -> &[UserId] {
        &self.shared[s]
    }

    /// Uncaptured shared users per site, in preference order.
    pub fn pools(&self, attack: &AttackState) -> Vec<Vec<UserId>> {
        self.shared
            .iter()
            .map(|p| p.iter().copied().filter(|&u| !attack.is_stuffed(u)).collect())
            .collect()
    }

    /// Dodge probability of `f` attempts at `s` while `s` allocates `k` slots.
    pub fn dodge(&self, s: SiteIdx, k: u64, f: u64) -> f64 {
        let q = self.market.views[self.target].query(s, k);
        self.market.model.binom_ratio(q.population(), f, q.monitored())
    }

    /// Per-site attempt caps: the unimodal optimum, clamped to the pool.
    pub fn bounds(&self, alloc_to_target: &[u64], pools: &[Vec<UserId>]) -> Vec<u64> {
        (0..self.n_sites())
            .map(|s| {
                if s == self.target {
                    0
                } else {
                    let q = self.market.views[self.target].query(s, alloc_to_target[s]);
                    optimal_attempts(&q).min(pools[s].len() as u64)
                }
            })
            .collect()
    }

    /// `(per-site dodge, per-site gain, total gain, batch dodge)`.
    pub fn evaluate(
        &self,
        alloc_to_target: &[u64],
        counts: &[u64],
        cumulative_dodge: f64,
    ) -> (Vec<f64>, Vec<f64>, f64, f64) {
        let n = self.n_sites();
        let mut dodges = vec![1.0; n];
        let mut gains = vec![0.0; n];
        for s in (0..n).filter(|&s| s != self.target) {
            dodges[s] = self.dodge(s, alloc_to_target[s], counts[s]);
        }
        let batch: f64 = dodges.iter().product();
        let weight_all = cumulative_dodge * batch;
        let mut total = 0.0;
        for s in (0..n).filter(|&s| s != self.target) {
            let w = match self.params.weighting {
                GainWeighting::Batch => dodges[s],
                GainWeighting::Cumulative => weight_all,
            };
            gains[s] = self.reuse[s] * counts[s] as f64 * w;
            total += gains[s];
        }
        (dodges, gains, total, batch)
    }

    fn concretize(
        &self,
        alloc_to_target: &[u64],
        counts: Vec<u64>,
        pools: &[Vec<UserId>],
        cumulative_dodge: f64,
    ) -> StuffingPlan {
        let assignment = b_matching(&counts, pools).expect("count vector was checked feasible");
        let (batch_dodge, gains, expected_gain, _) = self.evaluate(alloc_to_target, &counts, cumulative_dodge);
        StuffingPlan {
            counts,
            assignment,
            batch_dodge,
            gains,
            expected_gain,
        }
    }

    /// Best single-step plan by best-first search over count vectors, starting
    /// from the per-site caps and decrementing one coordinate at a time.
    pub fn fast_path_lookahead1(&self, alloc_to_target: &[u64], attack: &AttackState) -> StuffingPlan {
        let n = self.n_sites();
        if self.params.weighting == GainWeighting::Cumulative {
            return self.brute_force_step(alloc_to_target, attack);
        }
        let pools = self.pools(attack);
        let top = self.bounds(alloc_to_target, &pools);
        let cum = attack.cumulative_dodge;

        // prefix-max gains give a bound that never increases along decrements
        let mut gain_tab: Vec<Vec<f64>> = vec![Vec::new(); n];
        let mut dodge_tab: Vec<Vec<f64>> = vec![Vec::new(); n];
        let mut ub_tab: Vec<Vec<f64>> = vec![Vec::new(); n];
        for s in (0..n).filter(|&s| s != self.target) {
            let mut best = 0.0f64;
            for f in 0..=top[s] {
                let d = self.dodge(s, alloc_to_target[s], f);
                let g = self.reuse[s] * f as f64 * d;
                best = best.max(g);
                dodge_tab[s].push(d);
                gain_tab[s].push(g);
                ub_tab[s].push(best);
            }
        }
        let sum = |v: &[u64], tab: &[Vec<f64>]| -> f64 {
            (0..n)
                .filter(|&s| s != self.target)
                .map(|s| tab[s][v[s] as usize])
                .sum()
        };

        let mut heap = BinaryHeap::new();
        let mut seen = BTreeSet::new();
        heap.push(Node {
            bound: sum(&top, &ub_tab),
            counts: top.clone(),
            last: 0,
        });
        let mut best: Option<(f64, Vec<u64>)> = None;
        while let Some(node) = heap.pop() {
            if let Some((bv, _)) = &best {
                if node.bound < *bv {
                    break;
                }
            }
            let v = &node.counts;
            let batch: f64 = (0..n)
                .filter(|&s| s != self.target)
                .map(|s| dodge_tab[s][v[s] as usize])
                .product();
            if within_budget(cum * batch, self.params.aggression) && feasible(v, &pools) {
                let val = sum(v, &gain_tab);
                let better = match &best {
                    None => true,
                    Some((bv, bc)) => val > *bv || (val == *bv && v < bc),
                };
                if better {
                    best = Some((val, v.clone()));
                }
            }
            for i in node.last..n {
                if v[i] == 0 {
                    continue;
                }
                let mut child = v.clone();
                child[i] -= 1;
                if seen.insert(child.clone()) {
                    heap.push(Node {
                        bound: sum(&child, &ub_tab),
                        counts: child,
                        last: i,
                    });
                }
            }
        }
        let counts = best.map_or_else(|| vec![0; n], |(_, c)| c);
        self.concretize(alloc_to_target, counts, &pools, cum)
    }

    /// Single-step optimum by full enumeration of the capped box.
    pub fn brute_force_step(&self, alloc_to_target: &[u64], attack: &AttackState) -> StuffingPlan {
        let pools = self.pools(attack);
        let top = self.bounds(alloc_to_target, &pools);
        let cum = attack.cumulative_dodge;
        let mut best: Option<(f64, Vec<u64>)> = None;
        for_each_vector(&top, &mut |v| {
            let (_, _, val, batch) = self.evaluate(alloc_to_target, v, cum);
            if !within_budget(cum * batch, self.params.aggression) || !feasible(v, &pools) {
                return;
            }
            if best.as_ref().is_none_or(|(bv, _)| val > *bv) {
                best = Some((val, v.to_vec()));
            }
        });
        let counts = best.map_or_else(|| vec![0; self.n_sites()], |(_, c)| c);
        self.concretize(alloc_to_target, counts, &pools, cum)
    }

    /// First step of the best plan over `foresight + lookahead` attack
    /// opportunities. The next `foresight` bidders come from `known`; later
    /// bidders are equiprobable among those eligible.
    pub fn plan_attack(&self, auction: &AuctionState, attack: &AttackState, known: &[SiteIdx]) -> Result<StuffingPlan> {
        let known = &known[..known.len().min(self.params.foresight)];
        let pools = self.pools(attack);
        let alloc = auction.allocations_to(self.target);
        if pools.iter().all(|p| p.is_empty()) {
            return Ok(StuffingPlan::empty(self.n_sites()));
        }
        let mut prior = Vec::new();
        let (_, first) = self.dfs(auction, attack.cumulative_dodge, &pools, &mut prior, 0, known)?;
        let counts = first.unwrap_or_else(|| vec![0; self.n_sites()]);
        Ok(self.concretize(&alloc, counts, &pools, attack.cumulative_dodge))
    }

    fn dfs(
        &self,
        auction: &AuctionState,
        cum: f64,
        pools: &[Vec<UserId>],
        prior: &mut Vec<Vec<u64>>,
        step: usize,
        known: &[SiteIdx],
    ) -> Result<(f64, Option<Vec<u64>>)> {
        let alloc = auction.allocations_to(self.target);
        let top = self.bounds(&alloc, pools);
        let last_step = step + 1 == self.params.depth();

        // future allocation paths do not depend on the attack
        let mut children: Vec<AuctionState> = Vec::new();
        if !last_step {
            let bidders = match known.get(step) {
                Some(&b) => vec![b],
                None => eligible_bidders(&auction.counts, self.slack, None, auction.last_bidder),
            };
            for b in bidders {
                let mut next = auction.clone();
                let bid = next.prop_bid(self.market, b)?;
                next.apply_bid(self.market, &bid)?;
                children.push(next);
            }
        }

        let mut best: Option<(f64, Vec<u64>)> = None;
        let mut err = None;
        for_each_vector(&top, &mut |v| {
            if err.is_some() {
                return;
            }
            let (_, _, gain, batch) = self.evaluate(&alloc, v, cum);
            let next_cum = cum * batch;
            if !within_budget(next_cum, self.params.aggression) {
                return;
            }
            prior.push(v.to_vec());
            if combined_feasible(prior, pools) {
                let mut future = 0.0;
                for child in &children {
                    match self.dfs(child, next_cum, pools, prior, step + 1, known) {
                        Ok((fv, _)) => future += fv,
                        Err(e) => err = Some(e),
                    }
                }
                if !children.is_empty() {
                    future /= children.len() as f64;
                }
                let val = gain + future;
                if best.as_ref().is_none_or(|(bv, _)| val > *bv) {
                    best = Some((val, v.to_vec()));
                }
            }
            prior.pop();
        });
        if let Some(e) = err {
            return Err(e);
        }
        Ok(match best {
            Some((v, c)) => (v, Some(c)),
            None => (0.0, None),
        })
    }

    /// Commits a plan: records its users, dodge and cost.
    pub fn advance(&self, attack: &mut AttackState, plan: &StuffingPlan) -> Result<()> {
        if plan.is_empty() {
            attack.bid_index += 1;
            attack.cost_history.push(attack.cumulative_cost);
            return Ok(());
        }
        let next = attack.cumulative_dodge * plan.dodge();
        if !within_budget(next, self.params.aggression) {
            return Err(Error::BudgetViolated {
                detection: 1.0 - next,
                aggression: self.params.aggression,
            });
        }
        let mut fresh = BTreeSet::new();
        for (s, users) in plan.assignment.iter().enumerate() {
            if users.len() as u64 != plan.counts[s] {
                return Err(Error::Config(format!(
                    "site {s}: {} users assigned for {} attempts",
                    users.len(),
                    plan.counts[s]
                )));
            }
            for &u in users {
                if attack.is_stuffed(u) || !fresh.insert(u) || !self.shared[s].contains(&u) {
                    return Err(Error::InvalidAssignment(u));
                }
            }
        }
        attack.cumulative_dodge = next;
        for (s, users) in plan.assignment.iter().enumerate() {
            if users.is_empty() {
                continue;
            }
            let per_user = plan.gains[s] / users.len() as f64;
            for &u in users {
                attack.captured.insert(u, per_user);
            }
            attack.trace.push(AttackTraceRow {
                bid_index: attack.bid_index,
                peer: s,
                f: plan.counts[s],
                batch_dodge: plan.batch_dodge[s],
                cumulative_dodge: attack.cumulative_dodge,
                expected_gain: plan.gains[s],
            });
        }
        attack.cumulative_cost += plan.expected_gain;
        attack.bid_index += 1;
        attack.cost_history.push(attack.cumulative_cost);
        Ok(())
    }

    /// `cost / |V|`, zero when nothing is vulnerable.
    pub fn norm_cost(&self, cost: f64) -> f64 {
        if self.vulnerable == 0 {
            0.0
        } else {
            (cost / self.vulnerable as f64).clamp(0.0, 1.0)
        }
    }
}

fn combined_feasible(prior: &[Vec<u64>], pools: &[Vec<UserId>]) -> bool {
    let mut demands = Vec::with_capacity(prior.len() * pools.len());
    let mut all = Vec::with_capacity(prior.len() * pools.len());
    for v in prior {
        for (s, &c) in v.iter().enumerate() {
            if c > 0 {
                demands.push(c);
                all.push(pools[s].clone());
            }
        }
    }
    feasible(&demands, &all)
}

/// Visits every vector `0 ≤ v ≤ top` in lexicographic order.
pub fn for_each_vector(top: &[u64], visit: &mut impl FnMut(&[u64])) {
    let mut v = vec![0u64; top.len()];
    loop {
        visit(&v);
        let mut i = top.len();
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if v[i] < top[i] {
                v[i] += 1;
                break;
            }
            v[i] = 0;
        }
    }
}

struct Node {
    bound: f64,
    counts: Vec<u64>,
    last: usize,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    /// Highest bound first, then the lexicographically smaller vector.
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then_with(|| other.counts.cmp(&self.counts))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ecosystem::Privacy;
    use crate::risk::RiskModel;

    fn setup(members: Vec<Vec<UserId>>, users: usize, caps: Vec<u64>) -> (Ecosystem, Market) {
        let e = Ecosystem::new(users, members, caps, Privacy::Psi).unwrap();
        let m = Market::new(&e, RiskModel::default());
        (e, m)
    }

    fn params(aggression: f64) -> AttackerParams {
        AttackerParams {
            aggression,
            ..Default::default()
        }
    }

    #[test]
    fn unmonitored_peer_is_fully_stuffed() {
        let (e, m) = setup(vec![(0..6).collect(), (0..4).collect(), vec![5]], 6, vec![0, 0, 0]);
        let a = Attacker::new(&e, &m, 0, Slack::Infinite, params(0.0)).unwrap();
        let plan = a.fast_path_lookahead1(&[0, 0, 0], &AttackState::default());
        assert_eq!(plan.counts, vec![0, 4, 1]);
        assert_eq!(plan.expected_gain, 5.0);
        assert_eq!(plan.assignment[1], vec![0, 1, 2, 3]);
    }

    #[test]
    fn zero_aggression_with_monitors_is_empty() {
        let (e, m) = setup(vec![(0..6).collect(), (0..4).collect(), vec![4, 5]], 6, vec![2, 2, 2]);
        let a = Attacker::new(&e, &m, 0, Slack::Infinite, params(0.0)).unwrap();
        let plan = a.fast_path_lookahead1(&[0, 1, 1], &AttackState::default());
        assert!(plan.is_empty());
        assert_eq!(plan.expected_gain, 0.0);
    }

    #[test]
    fn over_demanded_pool_falls_back() {
        // both peers only share users 0 and 1 with the target
        let (e, m) = setup(vec![(0..6).collect(), vec![0, 1], vec![0, 1]], 6, vec![0, 0, 0]);
        let a = Attacker::new(&e, &m, 0, Slack::Infinite, params(1.0)).unwrap();
        let plan = a.fast_path_lookahead1(&[0, 0, 0], &AttackState::default());
        assert_eq!(plan.expected_gain, 2.0);
        // lexicographically smallest optimum
        assert_eq!(plan.counts, vec![0, 0, 2]);
        assert_eq!(a.brute_force_step(&[0, 0, 0], &AttackState::default()), plan);
    }

    #[test]
    fn advance_accumulates_and_guards_budget() {
        let (e, m) = setup(vec![(0..6).collect(), (0..4).collect(), vec![4, 5]], 6, vec![2, 2, 2]);
        let a = Attacker::new(&e, &m, 0, Slack::Infinite, params(0.5)).unwrap();
        let mut st = AttackState::default();
        let plan = a.fast_path_lookahead1(&[0, 1, 1], &st);
        assert!(!plan.is_empty());
        a.advance(&mut st, &plan).unwrap();
        assert!(within_budget(st.cumulative_dodge, 0.5));
        assert_eq!(st.cumulative_cost, plan.expected_gain);
        let before = st.clone();
        a.advance(&mut st, &StuffingPlan::empty(3)).unwrap();
        assert_eq!(st.cumulative_dodge, before.cumulative_dodge);
        assert_eq!(st.cumulative_cost, before.cumulative_cost);
        // replaying the same users is rejected
        assert!(a.advance(&mut st, &plan).is_err());
    }

    #[test]
    fn vectors_in_lex_order() {
        let mut seen = Vec::new();
        for_each_vector(&[1, 0, 2], &mut |v| seen.push(v.to_vec()));
        assert_eq!(
            seen,
            vec![
                vec![0, 0, 0],
                vec![0, 0, 1],
                vec![0, 0, 2],
                vec![1, 0, 0],
                vec![1, 0, 1],
                vec![1, 0, 2]
            ]
        );
    }
}
