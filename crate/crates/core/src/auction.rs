//! Evolving bidding state shared by the simulator, the exhaustive bidder and
//! the attacker planners.

use crate::ecosystem::{Ecosystem, LocalView, SiteIdx};
use crate::error::{Error, Result};
use crate::prop::{first_bid, respond_bid, Allocation, PropState};
use crate::risk::{per_bid_risk, RiskModel};

/// Immutable per-site views plus the risk model every site uses.
#[derive(Debug, Clone)]
pub struct Market {
    pub views: Vec<LocalView>,
    pub model: RiskModel,
}

impl Market {
    pub fn new(e: &Ecosystem, model: RiskModel) -> Self {
        Self {
            views: (0..e.n_sites()).map(|s| e.local_view(s)).collect(),
            model,
        }
    }

    pub fn n_sites(&self) -> usize {
        self.views.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuctionState {
    pub props: Vec<PropState>,
    /// `latest[bidder][receiver]`: slots in the bidder's most recent bid.
    pub latest: Vec<Vec<u64>>,
    /// Counted bids per site since the first-bid round.
    pub counts: Vec<u32>,
    pub last_bidder: Option<SiteIdx>,
    /// Counted bids placed so far.
    pub bids: usize,
}

impl AuctionState {
    pub fn new(market: &Market, smoothing: &[f64]) -> Result<Self> {
        let n = market.n_sites();
        if smoothing.len() != n {
            return Err(Error::Config(format!(
                "expected {n} smoothing factors, got {}",
                smoothing.len()
            )));
        }
        let props = market
            .views
            .iter()
            .zip(smoothing)
            .map(|(v, &smf)| PropState::new(v, &market.model, smf))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            props,
            latest: vec![vec![0; n]; n],
            counts: vec![0; n],
            last_bidder: None,
            bids: 0,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.counts.len()
    }

    fn deliver(&mut self, market: &Market, alloc: &Allocation) -> Result<()> {
        let b = alloc.bidder;
        for (p, &k) in alloc.slots.iter().enumerate() {
            if p == b {
                continue;
            }
            self.props[p].receive_allocation(&market.views[p], &market.model, b, k as f64)?;
        }
        self.latest[b].clone_from(&alloc.slots);
        Ok(())
    }

    /// Every site places its bootstrap bid once, in ascending index order.
    /// These bids are not counted.
    pub fn first_bid_round(&mut self, market: &Market) -> Result<Vec<Allocation>> {
        let mut out = Vec::with_capacity(self.n_sites());
        for s in 0..self.n_sites() {
            let alloc = first_bid(&market.views[s], &self.props[s]);
            self.deliver(market, &alloc)?;
            out.push(alloc);
        }
        Ok(out)
    }

    /// Applies a counted bid.
    pub fn apply_bid(&mut self, market: &Market, alloc: &Allocation) -> Result<()> {
        self.deliver(market, alloc)?;
        self.counts[alloc.bidder] += 1;
        self.last_bidder = Some(alloc.bidder);
        self.bids += 1;
        Ok(())
    }

    /// The bid site `s` would place next under proportional response.
    pub fn prop_bid(&self, market: &Market, s: SiteIdx) -> Result<Allocation> {
        if self.props[s].has_heard_from_all() {
            respond_bid(&market.views[s], &self.props[s])
        } else {
            Ok(first_bid(&market.views[s], &self.props[s]))
        }
    }

    /// Most recent allocation from every site to `s`, indexed by site.
    pub fn allocations_to(&self, s: SiteIdx) -> Vec<u64> {
        self.latest.iter().map(|row| row[s]).collect()
    }

    /// `(risk, norm_risk)` of `s` under the latest allocations it holds.
    pub fn per_bid_risk(&self, market: &Market, s: SiteIdx) -> (f64, f64) {
        per_bid_risk(&market.views[s], &market.model, &self.allocations_to(s))
    }

    /// Bit-exact identity of everything that drives future bids.
    pub fn fingerprint(&self) -> Vec<u64> {
        let n = self.n_sites();
        let mut key = Vec::with_capacity(n * (2 * n + 2) + 1);
        let min = self.counts.iter().copied().min().unwrap_or(0);
        key.extend(self.counts.iter().map(|&c| u64::from(c - min)));
        key.push(self.last_bidder.map_or(u64::MAX, |b| b as u64));
        for row in &self.latest {
            key.extend_from_slice(row);
        }
        for st in &self.props {
            for t in &st.peers {
                key.push(t.avg_alloc_from.to_bits());
                key.push(u64::from(t.received.min(3)));
            }
        }
        key
    }
}
