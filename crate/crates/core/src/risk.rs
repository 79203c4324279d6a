//! Dodge probabilities, the attacker's optimal stuffing count, and the risk a
//! site incurs from each peer's allocation.
//!
//! For a monitoring site `s` and a peer `s'` sharing `n'` users, an attacker
//! stuffing `f` of them at `s'` gains `f` users if none of the `m` monitors `s`
//! deployed at `s'` hits a stuffed account. The monitors are drawn uniformly
//! from a population of `N` users: the intersection itself under PSI
//! (`N = n'`), or all of `U_s` under PSICA (`N = |U_s|`). `m = min(N, k)`.
//!
//! The dodge probability `C(N−f, m) / C(N, m)` is evaluated in O(1): exact
//! log-factorial table lookups up to a size threshold, the Stirling path above.

use crate::ecosystem::{Ecosystem, LocalView, Privacy, SiteIdx};
use crate::error::{Error, Result};
use crate::stirling::{self, ln_factorial, stirling_binom_ratio};

pub const DEFAULT_STIRLING_THRESHOLD: u64 = 10_000;

/// One site's view of one peer's allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RiskQuery {
    pub privacy: Privacy,
    /// `|U_s|` of the monitoring site.
    pub local_users: u64,
    /// `n' = |U_s ∩ U_s'|`.
    pub intersection: u64,
    /// Slots `k` received from the peer.
    pub allocation: u64,
}

impl RiskQuery {
    pub fn psi(intersection: u64, allocation: u64) -> Self {
        Self {
            privacy: Privacy::Psi,
            local_users: intersection,
            intersection,
            allocation,
        }
    }

    pub fn psica(local_users: u64, intersection: u64, allocation: u64) -> Self {
        Self {
            privacy: Privacy::Psica,
            local_users,
            intersection,
            allocation,
        }
    }

    pub fn with_allocation(self, allocation: u64) -> Self {
        Self { allocation, ..self }
    }

    /// Size of the pool monitors are drawn from.
    pub fn population(&self) -> u64 {
        match self.privacy {
            Privacy::Psi => self.intersection,
            Privacy::Psica => self.local_users,
        }
    }

    /// Number of monitors actually deployed, `min(N, k)`.
    pub fn monitored(&self) -> u64 {
        self.population().min(self.allocation)
    }

    fn validate(&self) -> Result<()> {
        if self.privacy == Privacy::Psica && self.intersection > self.local_users {
            return Err(Error::SharedExceedsLocal {
                shared: self.intersection,
                local: self.local_users,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Exact,
    Stirling,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskResult {
    pub optimal_attempts: u64,
    /// Expected users gained by the optimal attacker.
    pub risk: f64,
    /// `risk / n'`, zero when nothing is shared.
    pub norm_risk: f64,
    pub method: Method,
}

/// Risk evaluation with a configurable exact/Stirling switch-over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RiskModel {
    /// Populations above this use the Stirling path.
    pub stirling_threshold: u64,
}

impl Default for RiskModel {
    fn default() -> Self {
        Self {
            stirling_threshold: DEFAULT_STIRLING_THRESHOLD,
        }
    }
}

impl RiskModel {
    /// The exact path needs table entries up to the threshold.
    pub fn new(stirling_threshold: u64) -> Self {
        Self {
            stirling_threshold: stirling_threshold.min(stirling::TABLE_LEN as u64 - 1),
        }
    }

    fn method_for(&self, population: u64) -> Method {
        if population > self.stirling_threshold {
            Method::Stirling
        } else {
            Method::Exact
        }
    }

    /// `C(N−f, m) / C(N, m)` for a pool of `N`, `f` stuffed and `m` monitored.
    pub fn binom_ratio(&self, population: u64, attempts: u64, monitored: u64) -> f64 {
        let (n, f, m) = (population, attempts, monitored.min(population));
        if f == 0 || m == 0 {
            return 1.0;
        }
        if n - f.min(n) < m {
            return 0.0;
        }
        let p = match self.method_for(n) {
            Method::Stirling if n - f - m >= 1 => match stirling_binom_ratio(n, f, m) {
                Ok(r) => r.approx,
                Err(_) => log_ratio(n, f, m).exp(),
            },
            _ => log_ratio(n, f, m).exp(),
        };
        p.clamp(0.0, 1.0)
    }

    pub fn dodge_probability(&self, q: &RiskQuery, attempts: u64) -> Result<f64> {
        q.validate()?;
        if attempts > q.intersection {
            return Err(Error::AttemptsExceedShared {
                attempts,
                shared: q.intersection,
            });
        }
        Ok(self.binom_ratio(q.population(), attempts, q.monitored()))
    }

    /// Expected gain `f × Pr[dodge]`.
    pub fn expected_gain(&self, q: &RiskQuery, attempts: u64) -> Result<f64> {
        Ok(attempts as f64 * self.dodge_probability(q, attempts)?)
    }

    /// The optimal attempt count and its expected gain.
    ///
    /// `E[G_{f+1}] > E[G_f]` exactly when `f < (N − m)/(m + 1)`, so the gain
    /// rises up to `ceil((N − m)/(m + 1))` and falls after it; at an integral
    /// crossover the two neighbours tie and the smaller is kept. The optimum is
    /// clamped to `n'`.
    pub fn optimal_stuffing(&self, q: &RiskQuery) -> Result<(u64, f64)> {
        q.validate()?;
        let f = optimal_attempts(q);
        Ok((f, self.expected_gain(q, f)?))
    }

    pub fn risk(&self, q: &RiskQuery) -> Result<RiskResult> {
        let (f, gain) = self.optimal_stuffing(q)?;
        let norm = if q.intersection == 0 {
            0.0
        } else {
            (gain / q.intersection as f64).clamp(0.0, 1.0)
        };
        Ok(RiskResult {
            optimal_attempts: f,
            risk: gain,
            norm_risk: norm,
            method: self.method_for(q.population()),
        })
    }
}

/// Closed-form argmax of `f × C(N−f, m)/C(N, m)` over `0 ≤ f ≤ n'`.
pub fn optimal_attempts(q: &RiskQuery) -> u64 {
    let n = q.population();
    let m = q.monitored();
    let num = n - m;
    let den = m + 1;
    let floor = num / den;
    let ceil = floor + u64::from(!num.is_multiple_of(den));
    ceil.min(q.intersection)
}

/// The two closed-form candidates `(floor, ceil)` of `(N − m)/(m + 1)`, clamped to `n'`.
pub fn candidate_attempts(q: &RiskQuery) -> (u64, u64) {
    let n = q.population();
    let m = q.monitored();
    let num = n - m;
    let den = m + 1;
    let floor = num / den;
    let ceil = floor + u64::from(!num.is_multiple_of(den));
    (floor.min(q.intersection), ceil.min(q.intersection))
}

fn log_ratio(n: u64, f: u64, m: u64) -> f64 {
    ln_factorial(n - f) + ln_factorial(n - m) - ln_factorial(n - f - m) - ln_factorial(n)
}

pub fn dodge_probability(q: &RiskQuery, attempts: u64) -> Result<f64> {
    RiskModel::default().dodge_probability(q, attempts)
}

pub fn optimal_stuffing(q: &RiskQuery) -> Result<(u64, f64)> {
    RiskModel::default().optimal_stuffing(q)
}

impl LocalView {
    pub fn query(&self, peer: SiteIdx, allocation: u64) -> RiskQuery {
        RiskQuery {
            privacy: self.privacy,
            local_users: self.own_users,
            intersection: self.shared[peer],
            allocation,
        }
    }

    pub fn pair_risk(&self, model: &RiskModel, peer: SiteIdx, allocation: u64) -> RiskResult {
        model
            .risk(&self.query(peer, allocation))
            .expect("local views keep intersections within the site's own users")
    }

    /// Monitors a peer's allocation can actually buy: `min(k, |U_s|)` under
    /// PSICA, `min(k, n')` under PSI.
    pub fn clamp_allocation(&self, peer: SiteIdx, k: f64) -> f64 {
        let bound = match self.privacy {
            Privacy::Psi => self.shared[peer],
            Privacy::Psica => self.own_users,
        };
        k.min(bound as f64)
    }
}

/// Risk `s` incurs from `peer`'s allocation of `k` slots.
pub fn pair_risk(e: &Ecosystem, s: SiteIdx, peer: SiteIdx, k: u64) -> Result<RiskResult> {
    if s >= e.n_sites() {
        return Err(Error::UnknownSite(s));
    }
    if peer >= e.n_sites() {
        return Err(Error::UnknownSite(peer));
    }
    if s == peer {
        return Err(Error::SelfPair(s));
    }
    RiskModel::default().risk(&RiskQuery {
        privacy: e.privacy(),
        local_users: e.user_count(s),
        intersection: e.shared_count(s, peer),
        allocation: k,
    })
}

/// `(Σ risk, Σ norm_risk)` of `s` over all peers, using each peer's most recent
/// allocation to `s`. `allocations_to_s` is indexed by site; the entry for `s`
/// itself is ignored.
pub fn per_bid_risk(view: &LocalView, model: &RiskModel, allocations_to_s: &[u64]) -> (f64, f64) {
    view.peers().fold((0.0, 0.0), |(r, nr), p| {
        let res = view.pair_risk(model, p, allocations_to_s[p]);
        (r + res.risk, nr + res.norm_risk)
    })
}
