#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slotbarter::auction::{AuctionState, Market};
use slotbarter::ecosystem::{Ecosystem, Privacy};
use slotbarter::risk::RiskModel;

pub fn binomial(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

/// `C(N−f, m) / C(N, m)` as an exact rational.
pub fn exact_dodge(n: u64, f: u64, m: u64) -> BigRational {
    if f > n {
        return BigRational::zero();
    }
    BigRational::new(binomial(n - f, m), binomial(n, m))
}

pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().expect("ratio fits in f64")
}

/// Largest `f · dodge(f)` over `f ∈ [0, shared]`; the smallest maximizer wins.
pub fn brute_optimal(privacy: Privacy, local: u64, shared: u64, k: u64) -> (u64, BigRational) {
    let population = match privacy {
        Privacy::Psi => shared,
        Privacy::Psica => local,
    };
    let m = k.min(population);
    let mut best = (0, BigRational::zero());
    for f in 1..=shared {
        let g = exact_dodge(population, f, m) * BigRational::from_integer(BigInt::from(f));
        if g > best.1 {
            best = (f, g);
        }
    }
    best
}

pub fn rel_err(approx: f64, exact: f64) -> f64 {
    if exact == 0.0 {
        approx.abs()
    } else {
        ((approx - exact) / exact).abs()
    }
}

/// Hall's condition over every subset of demands.
pub fn hall_feasible(demands: &[(u64, &[u32])]) -> bool {
    let d = demands.len();
    (1u32..(1 << d)).all(|mask| {
        let mut union: Vec<u32> = Vec::new();
        let mut need = 0;
        for (i, (c, pool)) in demands.iter().enumerate() {
            if mask & (1 << i) != 0 {
                need += c;
                union.extend_from_slice(pool);
            }
        }
        union.sort_unstable();
        union.dedup();
        need <= union.len() as u64
    })
}

/// Inputs of one attack opportunity against `target`.
pub struct AttackCase<'a> {
    pub target: usize,
    pub privacy: Privacy,
    pub own: u64,
    pub shared: &'a [u64],
    pub reuse: &'a [f64],
    pub alloc: &'a [u64],
}

impl AttackCase<'_> {
    pub fn dodge(&self, s: usize, f: u64) -> BigRational {
        let pop = match self.privacy {
            Privacy::Psi => self.shared[s],
            Privacy::Psica => self.own,
        };
        exact_dodge(pop, f, self.alloc[s].min(pop))
    }

    /// Exact `(Σ ρ f d, Π d)` for one count vector.
    pub fn score(&self, v: &[u64]) -> (BigRational, BigRational) {
        let mut gain = BigRational::zero();
        let mut batch = BigRational::one();
        for s in (0..v.len()).filter(|&s| s != self.target) {
            let d = self.dodge(s, v[s]);
            let rho = BigRational::from_float(self.reuse[s]).unwrap();
            gain += rho * BigRational::from_integer(BigInt::from(v[s])) * d.clone();
            batch *= d;
        }
        (gain, batch)
    }
}

/// Every vector `0 ≤ v ≤ top`.
pub fn boxes(top: &[u64]) -> Vec<Vec<u64>> {
    let mut out = vec![Vec::new()];
    for &t in top {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..=t).map(move |x| {
                    let mut q = p.clone();
                    q.push(x);
                    q
                })
            })
            .collect();
    }
    out
}

pub fn within(cum: f64, batch: &BigRational, aggression: f64) -> bool {
    1.0 - cum * to_f64(batch) <= aggression + 1e-12
}

/// Best single-opportunity gain over all feasible count vectors.
pub fn best_single_step(case: &AttackCase, pools: &[Vec<u32>], cum: f64, aggression: f64) -> BigRational {
    let top: Vec<u64> = pools.iter().map(|p| p.len() as u64).collect();
    let mut best = BigRational::zero();
    for v in boxes(&top) {
        let (gain, batch) = case.score(&v);
        let demands: Vec<(u64, &[u32])> = v.iter().zip(pools).map(|(&c, p)| (c, p.as_slice())).collect();
        if within(cum, &batch, aggression) && hall_feasible(&demands) && gain > best {
            best = gain;
        }
    }
    best
}

/// A random three-site market (target 0) after the first-bid round and a few
/// proportional bids.
pub fn random_attack_instance(seed: u64) -> (Ecosystem, Market, AuctionState) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users = rng.random_range(6..=30usize);
    let members: Vec<Vec<u32>> = (0..3)
        .map(|_| (0..users as u32).filter(|_| rng.random_bool(0.6)).collect())
        .collect();
    let caps = (0..3).map(|_| rng.random_range(0..=5u64)).collect();
    let privacy = if rng.random_bool(0.5) {
        Privacy::Psi
    } else {
        Privacy::Psica
    };
    let mut e = Ecosystem::new(users, members, caps, privacy).unwrap();
    for s in 1..3 {
        let rate = [0.5, 0.8, 1.0][rng.random_range(0..3)];
        e.set_reuse_rate(0, s, rate).unwrap();
    }
    let market = Market::new(&e, RiskModel::default());
    let mut st = AuctionState::new(&market, &[1.0; 3]).unwrap();
    st.first_bid_round(&market).unwrap();
    for _ in 0..rng.random_range(0..6) {
        let b = rng.random_range(0..3);
        let bid = st.prop_bid(&market, b).unwrap();
        st.apply_bid(&market, &bid).unwrap();
    }
    (e, market, st)
}

pub const BREACH10: &str = include_str!("../fixtures/breach10.tsv");
pub const SALT: &[u8] = b"fixture-salt";

/// Hand-computed expectations for the ten-line fixture; returns every mismatch.
pub fn breach10_mismatches() -> Vec<String> {
    use slotbarter::dataset::{anonymize, ingest, quartiles, reuse_rate, site_stats, HashFilter, Quartile};
    let mut bad = Vec::new();
    let mut check = |what: &str, ok: bool| {
        if !ok {
            bad.push(what.to_string());
        }
    };
    let d = ingest(BREACH10.as_bytes(), SALT, &HashFilter::default()).unwrap();
    let s = d.summary;
    check("lines", s.lines == 10);
    check("malformed", s.malformed == 1);
    check("duplicates", s.duplicates == 1);
    check("hashed", s.hashed == 1);
    check("entries", s.entries == 7);
    check("sites", s.sites == 4);
    check("users", s.users == 4);
    check("lcc sites", s.lcc_sites == 3);
    check("lcc users", s.lcc_users == 3);
    check("site names", d.site_names == ["alpha", "beta", "gamma"]);

    let mut keys: Vec<String> = ["ann", "bob", "cat"]
        .iter()
        .map(|u| anonymize(SALT, &format!("{u}@x.com")))
        .collect();
    let order = keys.clone();
    keys.sort();
    let id = |name: usize| keys.binary_search(&order[name]).unwrap() as u32;
    let (ann, bob, cat) = (id(0), id(1), id(2));
    let mut members: Vec<Vec<u32>> = vec![vec![ann], vec![ann, bob], vec![bob, cat]];
    for m in &mut members {
        m.sort_unstable();
    }
    for (site, want) in members.iter().enumerate() {
        check(
            &format!("members of site {site}"),
            d.ecosystem.members(site) == want.as_slice(),
        );
    }

    check("reuse alpha-beta", reuse_rate(&d.reuse, 0, 1).ok() == Some(1.0));
    check("reuse beta-gamma", reuse_rate(&d.reuse, 1, 2).ok() == Some(0.0));
    check("no alpha-gamma pair", reuse_rate(&d.reuse, 0, 2).is_err());
    check("pair count", d.reuse.len() == 2);
    check(
        "quartiles",
        quartiles(&d.ecosystem) == [Quartile::S, Quartile::M, Quartile::M],
    );

    let stats = site_stats(&d).unwrap();
    let shared: Vec<u64> = stats.iter().map(|r| r.shared).collect();
    let capturable: Vec<u64> = stats.iter().map(|r| r.capturable).collect();
    check("shared per site", shared == [1, 2, 1]);
    check("capturable per site", capturable == [1, 1, 0]);
    bad
}

/// Eight sites of sizes 1..=8: two per quartile.
pub fn quartile_mismatches() -> Vec<String> {
    use slotbarter::dataset::{quartile_sample, quartiles, Quartile};
    let members: Vec<Vec<u32>> = (1..=8u32).map(|k| (0..k).collect()).collect();
    let e = Ecosystem::new(8, members, vec![1; 8], Privacy::Psi).unwrap();
    let q = quartiles(&e);
    let want = [
        Quartile::S,
        Quartile::S,
        Quartile::M,
        Quartile::M,
        Quartile::L,
        Quartile::L,
        Quartile::XL,
        Quartile::XL,
    ];
    let mut bad = Vec::new();
    if q != want {
        bad.push(format!("quartiles {q:?}"));
    }
    if quartile_sample(&e, Quartile::XL, 2, 0).ok() != Some(vec![6, 7]) {
        bad.push("XL sample".into());
    }
    if quartile_sample(&e, Quartile::L, 3, 0).is_ok() {
        bad.push("oversized sample accepted".into());
    }
    bad
}
