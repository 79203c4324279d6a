//! Proportional-response bidding.
//!
//! A site bootstraps with baseline weights derived from the risk each peer
//! would pose at one slot, then answers received allocations by weighting peers
//! inversely to the (smoothed) risk they leave it with. The two weight vectors
//! are interpolated by `1/(1+μ)` and `μ/(1+μ)` where `μ` is the largest
//! average risk from any peer.

use crate::ecosystem::{LocalView, SiteIdx};
use crate::error::{Error, Result};
use crate::risk::RiskModel;

/// Floors `x` after absorbing floating-point noise just below an integer.
pub(crate) fn floor_slots(x: f64) -> u64 {
    (x + 1e-9).floor().max(0.0) as u64
}

/// One site's bid: slots assigned to each peer, indexed by site.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Allocation {
    pub bidder: SiteIdx,
    pub slots: Vec<u64>,
}

impl Allocation {
    pub fn total(&self) -> u64 {
        self.slots.iter().sum()
    }

    pub fn to(&self, peer: SiteIdx) -> u64 {
        self.slots[peer]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PeerTrack {
    /// Smoothed slots received from the peer (real-valued).
    pub avg_alloc_from: f64,
    /// Risk at `floor(avg_alloc_from)`.
    pub avg_risk: f64,
    pub received: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropState {
    pub site: SiteIdx,
    pub smoothing: f64,
    /// Indexed by site; the entry for `site` is unused.
    pub peers: Vec<PeerTrack>,
    /// Baseline weights, fixed by the site's local view.
    pub base_weights: Vec<f64>,
}

impl PropState {
    pub fn new(view: &LocalView, model: &RiskModel, smoothing: f64) -> Result<Self> {
        if !(smoothing > 0.0 && smoothing <= 1.0) {
            return Err(Error::Config(format!(
                "smoothing factor must lie in (0, 1], got {smoothing}"
            )));
        }
        Ok(Self {
            site: view.site,
            smoothing,
            peers: vec![PeerTrack::default(); view.n_sites()],
            base_weights: baseline_weights(view, model),
        })
    }

    pub fn has_heard_from_all(&self) -> bool {
        self.peers
            .iter()
            .enumerate()
            .all(|(p, t)| p == self.site || t.received > 0)
    }

    /// Incorporates `k` slots received from `from`.
    pub fn receive_allocation(&mut self, view: &LocalView, model: &RiskModel, from: SiteIdx, k: f64) -> Result<()> {
        if !(k.is_finite() && k >= 0.0) {
            return Err(Error::BadAllocation(k));
        }
        if from == self.site || from >= self.peers.len() {
            return Err(Error::UnknownSite(from));
        }
        let clamped = view.clamp_allocation(from, k);
        let smf = self.smoothing;
        let track = &mut self.peers[from];
        track.received += 1;
        track.avg_alloc_from = if track.received <= 2 {
            clamped
        } else {
            smf * clamped + (1.0 - smf) * track.avg_alloc_from
        };
        track.avg_risk = view.pair_risk(model, from, floor_slots(track.avg_alloc_from)).risk;
        Ok(())
    }

    /// Weights from the current average risks; uniform when all are zero.
    pub fn response_weights(&self) -> Vec<f64> {
        let risks: Vec<f64> = self.peers.iter().map(|t| t.avg_risk).collect();
        inverse_share_weights(self.site, &risks)
    }

    /// `μ`: the largest average risk from any peer.
    pub fn max_avg_risk(&self) -> f64 {
        self.peers
            .iter()
            .enumerate()
            .filter(|&(p, _)| p != self.site)
            .map(|(_, t)| t.avg_risk)
            .fold(0.0, f64::max)
    }

    /// Pre-floor interpolation of baseline and response weights.
    pub fn blended_weights(&self) -> Vec<f64> {
        let mu = self.max_avg_risk();
        let w = self.response_weights();
        let (a, b) = (1.0 / (1.0 + mu), mu / (1.0 + mu));
        self.base_weights
            .iter()
            .zip(&w)
            .enumerate()
            .map(|(p, (&base, &wt))| if p == self.site { 0.0 } else { a * base + b * wt })
            .collect()
    }
}

/// `(1/(n−2)) (1 − r_p / Σ r)` per peer, or `1/(n−1)` each when `Σ r = 0`.
fn inverse_share_weights(site: SiteIdx, risks: &[f64]) -> Vec<f64> {
    let n = risks.len();
    let total: f64 = risks
        .iter()
        .enumerate()
        .filter(|&(p, _)| p != site)
        .map(|(_, &r)| r)
        .sum();
    risks
        .iter()
        .enumerate()
        .map(|(p, &r)| {
            if p == site {
                0.0
            } else if total > 0.0 {
                (1.0 - r / total) / (n as f64 - 2.0)
            } else {
                1.0 / (n as f64 - 1.0)
            }
        })
        .collect()
}

/// Baseline weights from the risk each peer poses at a single slot.
pub fn baseline_weights(view: &LocalView, model: &RiskModel) -> Vec<f64> {
    let risks: Vec<f64> = (0..view.n_sites())
        .map(|p| {
            if p == view.site {
                0.0
            } else {
                view.pair_risk(model, p, 1).risk
            }
        })
        .collect();
    inverse_share_weights(view.site, &risks)
}

fn allocate(site: SiteIdx, capacity: u64, weights: &[f64]) -> Allocation {
    let slots = weights
        .iter()
        .enumerate()
        .map(|(p, &w)| if p == site { 0 } else { floor_slots(capacity as f64 * w) })
        .collect();
    Allocation { bidder: site, slots }
}

/// Bootstrap bid: `floor(cap × baseWt)` per peer.
pub fn first_bid(view: &LocalView, state: &PropState) -> Allocation {
    allocate(view.site, view.capacity, &state.base_weights)
}

/// Response bid once every peer has bid at least once.
pub fn respond_bid(view: &LocalView, state: &PropState) -> Result<Allocation> {
    if let Some(peer) = state
        .peers
        .iter()
        .enumerate()
        .position(|(p, t)| p != state.site && t.received == 0)
    {
        return Err(Error::MissingAllocation { site: state.site, peer });
    }
    Ok(allocate(view.site, view.capacity, &state.blended_weights()))
}
