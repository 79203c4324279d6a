//! Tree-search bidder with full visibility of its peers.
//!
//! The target enumerates its allocations on an increment grid, replays the
//! peers' deterministic proportional-response bids along the known part of the
//! sequence, then branches uniformly over eligible bidders. Leaves score the
//! target's per-bid risk; target nodes take the minimum, chance nodes the mean.

use dashmap::DashMap;
use serde::{Deserialize, Serialize};

use crate::auction::{AuctionState, Market};
use crate::ecosystem::SiteIdx;
use crate::error::{Error, Result};
use crate::prop::Allocation;
use crate::sequence::{eligible_bidders, Slack};

pub const DEFAULT_DEPTH_BOUND: usize = 3;
pub const DEFAULT_GRID_STEPS: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExhaustiveParams {
    pub cutline: bool,
    pub foresight: usize,
    pub lookahead: usize,
    /// Slots per grid step; 0 derives it from `grid_steps`.
    pub increment: u64,
    /// Steps across the capacity when `increment` is 0.
    pub grid_steps: u64,
    pub depth_bound: usize,
    pub cache: bool,
}

impl Default for ExhaustiveParams {
    fn default() -> Self {
        Self {
            cutline: false,
            foresight: 0,
            lookahead: 1,
            increment: 0,
            grid_steps: DEFAULT_GRID_STEPS,
            depth_bound: DEFAULT_DEPTH_BOUND,
            cache: true,
        }
    }
}

impl ExhaustiveParams {
    pub fn validate(&self) -> Result<()> {
        if self.lookahead == 0 {
            return Err(Error::ZeroLookahead);
        }
        let depth = self.foresight + self.lookahead;
        if depth > self.depth_bound {
            return Err(Error::DepthExceeded {
                depth,
                bound: self.depth_bound,
            });
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.foresight + self.lookahead
    }

    /// The configured increment, or `max(1, cap / grid_steps)` when unset.
    pub fn effective_increment(&self, capacity: u64) -> u64 {
        if self.increment > 0 {
            self.increment
        } else {
            (capacity / self.grid_steps.max(1)).max(1)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Insert {
    BidNow,
    Wait,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub allocation: Allocation,
    /// Expected per-bid risk of the target at the horizon.
    pub value: f64,
}

/// All compositions of `capacity` over `peers` in multiples of `increment`,
/// the last peer absorbing the remainder. Returned in lexicographic order of
/// the full slot vector (the bidder's own entry stays 0).
pub fn allocation_grid(n: usize, bidder: SiteIdx, capacity: u64, increment: u64) -> Result<Vec<Vec<u64>>> {
    if increment == 0 {
        return Err(Error::ZeroIncrement);
    }
    let peers: Vec<SiteIdx> = (0..n).filter(|&p| p != bidder).collect();
    let units = capacity / increment;
    let rem = capacity - units * increment;
    let mut out = Vec::new();
    let mut parts = vec![0u64; peers.len()];
    compose(&mut parts, 0, units, &mut |parts| {
        let mut slots = vec![0u64; n];
        for (i, &p) in peers.iter().enumerate() {
            slots[p] = parts[i] * increment;
        }
        if let Some(&last) = peers.last() {
            slots[last] += rem;
        }
        out.push(slots);
    });
    out.sort_unstable();
    Ok(out)
}

fn compose(parts: &mut [u64], i: usize, left: u64, emit: &mut impl FnMut(&[u64])) {
    if i + 1 == parts.len() {
        parts[i] = left;
        emit(parts);
        return;
    }
    for v in 0..=left {
        parts[i] = v;
        compose(parts, i + 1, left - v, emit);
    }
}

fn better(candidate: f64, best: f64) -> bool {
    if best.is_infinite() {
        return candidate < best;
    }
    candidate < best - 1e-12 * best.abs().max(1.0)
}

pub struct ExhaustiveBidder<'m> {
    market: &'m Market,
    target: SiteIdx,
    slack: Slack,
    params: ExhaustiveParams,
    grid: Vec<Vec<u64>>,
    cache: DashMap<(Vec<u64>, usize), f64>,
}

impl<'m> ExhaustiveBidder<'m> {
    pub fn new(market: &'m Market, target: SiteIdx, slack: Slack, params: ExhaustiveParams) -> Result<Self> {
        params.validate()?;
        if target >= market.n_sites() {
            return Err(Error::UnknownSite(target));
        }
        let cap = market.views[target].capacity;
        let grid = allocation_grid(market.n_sites(), target, cap, params.effective_increment(cap))?;
        Ok(Self {
            market,
            target,
            slack,
            params,
            grid,
            cache: DashMap::new(),
        })
    }

    pub fn params(&self) -> &ExhaustiveParams {
        &self.params
    }

    pub fn grid(&self) -> &[Vec<u64>] {
        &self.grid
    }

    pub fn cache_len(&self) -> usize {
        self.cache.len()
    }

    /// Grid allocations plus the proportional-response bid, lexicographically.
    fn candidates(&self, state: &AuctionState) -> Result<Vec<Vec<u64>>> {
        let prop = state.prop_bid(self.market, self.target)?.slots;
        let mut c = self.grid.clone();
        if let Err(pos) = c.binary_search(&prop) {
            c.insert(pos, prop);
        }
        Ok(c)
    }

    fn after(&self, state: &AuctionState, slots: Vec<u64>, bidder: SiteIdx) -> Result<AuctionState> {
        let mut next = state.clone();
        next.apply_bid(self.market, &Allocation { bidder, slots })?;
        Ok(next)
    }

    fn target_node(&self, state: &AuctionState, rem: usize, pos: usize, known: &[SiteIdx]) -> Result<f64> {
        if rem == 0 {
            // the target's own bid never moves its own risk
            return Ok(state.per_bid_risk(self.market, self.target).0);
        }
        let mut best = f64::INFINITY;
        for slots in self.candidates(state)? {
            let v = self.value(&self.after(state, slots, self.target)?, rem, pos, known)?;
            if better(v, best) {
                best = v;
            }
        }
        Ok(best)
    }

    fn bidder_value(&self, state: &AuctionState, b: SiteIdx, rem: usize, pos: usize, known: &[SiteIdx]) -> Result<f64> {
        if b == self.target {
            self.target_node(state, rem, pos, known)
        } else {
            let bid = state.prop_bid(self.market, b)?;
            self.value(&self.after(state, bid.slots, b)?, rem, pos, known)
        }
    }

    /// Expected target risk after `rem` more bids.
    fn value(&self, state: &AuctionState, rem: usize, pos: usize, known: &[SiteIdx]) -> Result<f64> {
        if rem == 0 {
            return Ok(state.per_bid_risk(self.market, self.target).0);
        }
        if let Some(&b) = known.get(pos) {
            return self.bidder_value(state, b, rem - 1, pos + 1, known);
        }
        let key = self.params.cache.then(|| (state.fingerprint(), rem));
        if let Some(k) = &key {
            if let Some(v) = self.cache.get(k) {
                return Ok(*v);
            }
        }
        let cut = self.params.cutline.then_some(self.target);
        let eligible = eligible_bidders(&state.counts, self.slack, cut, state.last_bidder);
        let v = if eligible.is_empty() {
            state.per_bid_risk(self.market, self.target).0
        } else {
            let mut sum = 0.0;
            for &b in &eligible {
                sum += self.bidder_value(state, b, rem - 1, pos, known)?;
            }
            sum / eligible.len() as f64
        };
        if let Some(k) = key {
            self.cache.insert(k, v);
        }
        Ok(v)
    }

    /// Argmin allocation with the known bidders `known` (at most `foresight`
    /// of them are used) following the target's bid.
    pub fn plan_bid(&self, state: &AuctionState, known: &[SiteIdx]) -> Result<Plan> {
        let known = &known[..known.len().min(self.params.foresight)];
        let depth = self.params.depth();
        let mut best: Option<(Vec<u64>, f64)> = None;
        for slots in self.candidates(state)? {
            let v = self.value(&self.after(state, slots.clone(), self.target)?, depth, 0, known)?;
            if best.as_ref().is_none_or(|(_, b)| better(v, *b)) {
                best = Some((slots, v));
            }
        }
        let (slots, value) = best.expect("the candidate set always holds the prop bid");
        Ok(Plan {
            allocation: Allocation {
                bidder: self.target,
                slots,
            },
            value,
        })
    }

    /// Whether to cut in line before the next dictated bidder.
    pub fn decide_insert(&self, state: &AuctionState, known: &[SiteIdx]) -> Result<Insert> {
        if !self.params.cutline {
            return Err(Error::CutlineDisabled);
        }
        let eligible = eligible_bidders(&state.counts, self.slack, Some(self.target), state.last_bidder);
        if !eligible.contains(&self.target) {
            return Ok(Insert::Wait);
        }
        let known = &known[..known.len().min(self.params.foresight)];
        let depth = self.params.depth();
        let now = self.plan_bid(state, known)?.value;

        let wait = if let Some(&b) = known.first() {
            let bid = state.prop_bid(self.market, b)?;
            self.value(&self.after(state, bid.slots, b)?, depth, 1, known)?
        } else {
            let peers: Vec<SiteIdx> = eligible.into_iter().filter(|&b| b != self.target).collect();
            if peers.is_empty() {
                return Ok(Insert::BidNow);
            }
            let mut sum = 0.0;
            for &b in &peers {
                let bid = state.prop_bid(self.market, b)?;
                sum += self.value(&self.after(state, bid.slots, b)?, depth, 0, known)?;
            }
            sum / peers.len() as f64
        };
        Ok(if better(now, wait) {
            Insert::BidNow
        } else {
            Insert::Wait
        })
    }
}
