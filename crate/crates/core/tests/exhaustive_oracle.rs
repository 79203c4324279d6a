mod common;

use common::rel_err;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slotbarter::auction::{AuctionState, Market};
use slotbarter::ecosystem::{Ecosystem, Privacy};
use slotbarter::exhaustive::{allocation_grid, ExhaustiveBidder, ExhaustiveParams};
use slotbarter::prop::Allocation;
use slotbarter::risk::RiskModel;
use slotbarter::sequence::{eligible_bidders, Slack};

fn instance(seed: u64) -> (Market, AuctionState) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users = rng.random_range(8..=24usize);
    let members: Vec<Vec<u32>> = (0..3)
        .map(|_| (0..users as u32).filter(|_| rng.random_bool(0.55)).collect())
        .collect();
    let caps = (0..3).map(|_| rng.random_range(1..=6u64)).collect();
    let privacy = if rng.random_bool(0.5) {
        Privacy::Psi
    } else {
        Privacy::Psica
    };
    let e = Ecosystem::new(users, members, caps, privacy).unwrap();
    let market = Market::new(&e, RiskModel::default());
    let smf: Vec<f64> = (0..3).map(|_| [1.0, 0.5, 0.25][rng.random_range(0..3)]).collect();
    let mut st = AuctionState::new(&market, &smf).unwrap();
    st.first_bid_round(&market).unwrap();
    for _ in 0..rng.random_range(0..5) {
        let b = rng.random_range(0..3);
        let bid = st.prop_bid(&market, b).unwrap();
        st.apply_bid(&market, &bid).unwrap();
    }
    (market, st)
}

fn with_bid(market: &Market, st: &AuctionState, bidder: usize, slots: Vec<u64>) -> AuctionState {
    let mut s = st.clone();
    s.apply_bid(market, &Allocation { bidder, slots }).unwrap();
    s
}

/// Every split of the capacity between the two peers, plus the prop bid.
fn all_bids(market: &Market, st: &AuctionState, target: usize) -> Vec<Vec<u64>> {
    let cap = market.views[target].capacity;
    let peers: Vec<usize> = (0..3).filter(|&p| p != target).collect();
    let mut out: Vec<Vec<u64>> = (0..=cap)
        .map(|x| {
            let mut v = vec![0; 3];
            v[peers[0]] = x;
            v[peers[1]] = cap - x;
            v
        })
        .collect();
    out.push(st.prop_bid(market, target).unwrap().slots);
    out
}

/// Expected target risk one bid after `slots`, with the next bidder drawn
/// uniformly among those eligible.
fn one_step(market: &Market, st: &AuctionState, target: usize, slots: Vec<u64>) -> f64 {
    let after = with_bid(market, st, target, slots);
    let eligible = eligible_bidders(&after.counts, Slack::Infinite, None, after.last_bidder);
    let total: f64 = eligible
        .iter()
        .map(|&b| {
            let bid = after.prop_bid(market, b).unwrap();
            with_bid(market, &after, b, bid.slots).per_bid_risk(market, target).0
        })
        .sum();
    total / eligible.len() as f64
}

fn params(lookahead: usize, cache: bool) -> ExhaustiveParams {
    ExhaustiveParams {
        lookahead,
        increment: 1,
        cache,
        ..ExhaustiveParams::default()
    }
}

#[test]
fn depth_one_plan_matches_enumeration() {
    for seed in 0..80 {
        let (market, st) = instance(seed);
        let target = (seed % 3) as usize;
        let bidder = ExhaustiveBidder::new(&market, target, Slack::Infinite, params(1, true)).unwrap();
        let plan = bidder.plan_bid(&st, &[]).unwrap();
        let best = all_bids(&market, &st, target)
            .into_iter()
            .map(|b| one_step(&market, &st, target, b))
            .fold(f64::INFINITY, f64::min);
        assert!(
            rel_err(plan.value, best) < 1e-12,
            "seed {seed}: {} vs {best}",
            plan.value
        );
        let chosen = one_step(&market, &st, target, plan.allocation.slots.clone());
        assert!(rel_err(chosen, best) < 1e-12);
        let prop = one_step(&market, &st, target, st.prop_bid(&market, target).unwrap().slots);
        assert!(plan.value <= prop + 1e-12 * prop.max(1.0));
    }
}

#[test]
fn cache_does_not_change_plans() {
    for seed in 100..115 {
        let (market, st) = instance(seed);
        let with = ExhaustiveBidder::new(&market, 0, Slack::Infinite, params(2, true)).unwrap();
        let without = ExhaustiveBidder::new(&market, 0, Slack::Infinite, params(2, false)).unwrap();
        let a = with.plan_bid(&st, &[]).unwrap();
        let b = without.plan_bid(&st, &[]).unwrap();
        assert_eq!(a.allocation, b.allocation, "seed {seed}");
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert!(with.cache_len() > 0);
        assert_eq!(without.cache_len(), 0);
    }
}

#[test]
fn foresight_follows_the_known_bidder() {
    for seed in 200..230 {
        let (market, st) = instance(seed);
        let known = [1 + (seed % 2) as usize];
        let p = ExhaustiveParams {
            foresight: 1,
            lookahead: 1,
            increment: 1,
            ..ExhaustiveParams::default()
        };
        let bidder = ExhaustiveBidder::new(&market, 0, Slack::Infinite, p).unwrap();
        let plan = bidder.plan_bid(&st, &known).unwrap();
        // the known bidder moves first, then one uniform draw
        let best = all_bids(&market, &st, 0)
            .into_iter()
            .map(|slots| {
                let after = with_bid(&market, &st, 0, slots);
                let bid = after.prop_bid(&market, known[0]).unwrap();
                let after = with_bid(&market, &after, known[0], bid.slots);
                let eligible = eligible_bidders(&after.counts, Slack::Infinite, None, after.last_bidder);
                eligible
                    .iter()
                    .map(|&b| {
                        if b == 0 {
                            return after.per_bid_risk(&market, 0).0;
                        }
                        let bid = after.prop_bid(&market, b).unwrap();
                        with_bid(&market, &after, b, bid.slots).per_bid_risk(&market, 0).0
                    })
                    .sum::<f64>()
                    / eligible.len() as f64
            })
            .fold(f64::INFINITY, f64::min);
        assert!(rel_err(plan.value, best) < 1e-12, "seed {seed}");
    }
}

#[test]
fn grid_covers_every_split() {
    let g = allocation_grid(4, 1, 6, 2).unwrap();
    assert_eq!(g.len(), 10);
    assert!(g.iter().all(|v| v[1] == 0 && v.iter().sum::<u64>() == 6));
    let uneven = allocation_grid(3, 0, 7, 3).unwrap();
    assert_eq!(uneven, vec![vec![0, 0, 7], vec![0, 3, 4], vec![0, 6, 1]]);
}
