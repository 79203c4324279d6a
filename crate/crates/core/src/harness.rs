//! Experiment cells and the runs behind each CLI subcommand.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::attacker::{within_budget, AttackState, AttackTraceRow, Attacker, GainWeighting, StuffingPlan};
use crate::auction::{AuctionState, Market};
use crate::config::{AttackStart, ExperimentConfig, TargetKind};
use crate::ecosystem::{Ecosystem, LocalView, Privacy, SiteIdx};
use crate::error::{Error, Result};
use crate::exhaustive::{ExhaustiveBidder, ExhaustiveParams, Insert};
use crate::greedy::GreedyAttacker;
use crate::placement::{generate_placement, PlacementParams};
use crate::prop::{respond_bid, Allocation, PropState};
use crate::risk::RiskModel;
use crate::sequence::{eligible_bidders, generate_sequence, SequenceConstraint, Slack};

/// SplitMix64 step, used to derive independent per-cell seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(mix(base), |acc, &t| mix(acc ^ mix(t)))
}

const TAG_PLACEMENT: u64 = 1;
const TAG_SEQUENCE: u64 = 2;
const TAG_ATTACKER: u64 = 3;

/// One point of the configured grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridPoint {
    pub popularity: f64,
    pub target_capacity: f64,
    pub peer_capacity: f64,
    pub smoothing_target: f64,
    pub smoothing_peers: f64,
    pub privacy: Privacy,
    pub aggression: f64,
    pub lookahead: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cell {
    pub index: usize,
    pub point_index: usize,
    #[serde(flatten)]
    pub point: GridPoint,
    pub placement_rep: usize,
    pub sequence_rep: usize,
    pub placement_seed: u64,
    pub sequence_seed: u64,
    pub attacker_seed: u64,
}

fn axis<T: Copy>(values: &Option<Vec<T>>, default: T) -> Vec<T> {
    match values {
        Some(v) if !v.is_empty() => v.clone(),
        _ => vec![default],
    }
}

pub fn grid_points(cfg: &ExperimentConfig) -> Vec<GridPoint> {
    let g = &cfg.grid;
    let mut out = Vec::new();
    for popularity in axis(&g.popularity, cfg.placement.popularity) {
        for target_capacity in axis(&g.target_capacity, cfg.placement.target_capacity) {
            for peer_capacity in axis(&g.peer_capacity, cfg.placement.peer_capacity) {
                for smoothing_target in axis(&g.smoothing_target, cfg.auction.smoothing_target) {
                    for smoothing_peers in axis(&g.smoothing_peers, cfg.auction.smoothing_peers) {
                        for privacy in axis(&g.privacy, cfg.placement.privacy) {
                            for aggression in axis(&g.aggression, cfg.attack.params.aggression) {
                                for lookahead in axis(&g.lookahead, cfg.strategy.exhaustive.lookahead) {
                                    out.push(GridPoint {
                                        popularity,
                                        target_capacity,
                                        peer_capacity,
                                        smoothing_target,
                                        smoothing_peers,
                                        privacy,
                                        aggression,
                                        lookahead,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Every grid point crossed with every placement and sequence replicate.
/// Seeds depend on the replicate indices only, so grid points share
/// placements and sequences.
pub fn expand_cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut cells = Vec::new();
    for (pi, point) in grid_points(cfg).into_iter().enumerate() {
        for pr in 0..cfg.replicates.placements {
            for sr in 0..cfg.replicates.sequences {
                cells.push(Cell {
                    index: cells.len(),
                    point_index: pi,
                    point,
                    placement_rep: pr,
                    sequence_rep: sr,
                    placement_seed: derive_seed(cfg.seed, &[TAG_PLACEMENT, pr as u64]),
                    sequence_seed: derive_seed(cfg.seed, &[TAG_SEQUENCE, pr as u64, sr as u64]),
                    attacker_seed: derive_seed(cfg.seed, &[TAG_ATTACKER, pr as u64, sr as u64]),
                });
            }
        }
    }
    cells
}

/// The cell's ecosystem and target index.
pub fn build_ecosystem(cfg: &ExperimentConfig, cell: &Cell) -> Result<(Ecosystem, SiteIdx)> {
    let p = &cfg.placement;
    let pt = &cell.point;
    match &p.ecosystem {
        Some(path) => {
            let mut e = Ecosystem::from_text(&std::fs::read_to_string(path)?)?;
            let target = p.target - 1;
            if target >= e.n_sites() {
                return Err(Error::UnknownSite(target));
            }
            e.set_privacy(pt.privacy);
            let mut coeffs = vec![pt.peer_capacity; e.n_sites()];
            coeffs[target] = pt.target_capacity;
            e.apply_capacity_coefficients(&coeffs)?;
            Ok((e, target))
        }
        None => {
            let params =
                PlacementParams::uniform(pt.popularity, p.sites, pt.target_capacity, pt.peer_capacity, pt.privacy);
            Ok((generate_placement(&params, p.sites, p.users, cell.placement_seed)?, 0))
        }
    }
}

fn smoothing(n: usize, target: SiteIdx, pt: &GridPoint) -> Vec<f64> {
    let mut s = vec![pt.smoothing_peers; n];
    s[target] = pt.smoothing_target;
    s
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetStrategy {
    Prop,
    Exhaustive(ExhaustiveParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BidRecord {
    /// 1-based index among counted bids.
    pub bid_index: usize,
    pub bidder: SiteIdx,
    pub risk: Vec<f64>,
    pub norm_risk: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuctionTrace {
    pub first_round: Vec<Allocation>,
    pub bids: Vec<BidRecord>,
    pub allocations: Vec<Allocation>,
}

impl AuctionTrace {
    pub fn norm_risk_of(&self, site: SiteIdx) -> Vec<f64> {
        self.bids.iter().map(|b| b.norm_risk[site]).collect()
    }
}

fn record(state: &AuctionState, market: &Market, bidder: SiteIdx) -> BidRecord {
    let (risk, norm_risk) = (0..market.n_sites()).map(|s| state.per_bid_risk(market, s)).unzip();
    BidRecord {
        bid_index: state.bids,
        bidder,
        risk,
        norm_risk,
    }
}

/// Runs the first-bid round and `length` counted bids. Under cutline the
/// sequence names peers only and the exhaustive target inserts its own bids.
pub fn simulate(
    market: &Market,
    smoothing: &[f64],
    target: SiteIdx,
    sequence: &[SiteIdx],
    length: usize,
    slack: Slack,
    strategy: &TargetStrategy,
) -> Result<AuctionTrace> {
    let mut state = AuctionState::new(market, smoothing)?;
    let first_round = state.first_bid_round(market)?;
    let mut trace = AuctionTrace {
        first_round,
        bids: Vec::with_capacity(length),
        allocations: Vec::with_capacity(length),
    };
    let bidder = match strategy {
        TargetStrategy::Prop => None,
        TargetStrategy::Exhaustive(p) => Some(ExhaustiveBidder::new(market, target, slack, *p)?),
    };
    let push = |state: &mut AuctionState, alloc: Allocation, trace: &mut AuctionTrace| -> Result<()> {
        state.apply_bid(market, &alloc)?;
        trace.bids.push(record(state, market, alloc.bidder));
        trace.allocations.push(alloc);
        Ok(())
    };
    let cutline = bidder.as_ref().is_some_and(|b| b.params().cutline);
    let mut pos = 0;
    while state.bids < length {
        if cutline {
            let b = bidder.as_ref().expect("cutline implies an exhaustive bidder");
            let rest = &sequence[pos.min(sequence.len())..];
            let eligible = eligible_bidders(&state.counts, slack, Some(target), state.last_bidder);
            // a dictated peer held back by slack leaves the target no choice
            let forced = rest.first().is_some_and(|p| !eligible.contains(p)) && eligible.contains(&target);
            if forced || b.decide_insert(&state, rest)? == Insert::BidNow {
                let plan = b.plan_bid(&state, rest)?;
                push(&mut state, plan.allocation, &mut trace)?;
                continue;
            }
        }
        let Some(&s) = sequence.get(pos) else {
            return Err(Error::Config(format!(
                "bidding sequence ran out after {} of {length} bids",
                state.bids
            )));
        };
        pos += 1;
        let alloc = match (&bidder, s == target) {
            (Some(b), true) => b.plan_bid(&state, &sequence[pos..])?.allocation,
            _ => state.prop_bid(market, s)?,
        };
        push(&mut state, alloc, &mut trace)?;
    }
    Ok(trace)
}

fn market_for(cfg: &ExperimentConfig, e: &Ecosystem) -> Market {
    Market::new(e, RiskModel::new(cfg.auction.stirling_threshold))
}

fn sequence_for(
    cfg: &ExperimentConfig,
    n: usize,
    cutline: Option<SiteIdx>,
    len: usize,
    seed: u64,
) -> Result<Vec<SiteIdx>> {
    let mut c = SequenceConstraint::new(cfg.auction.slack, len);
    c.cutline = cutline;
    generate_sequence(n, &c, seed)
}

fn exhaustive_params(cfg: &ExperimentConfig, pt: &GridPoint) -> ExhaustiveParams {
    ExhaustiveParams {
        lookahead: pt.lookahead,
        ..cfg.strategy.exhaustive
    }
}

/// A replayed sequence, or a fresh one. Under cutline the target is dropped
/// from a replayed sequence.
fn pick_sequence(
    cfg: &ExperimentConfig,
    n: usize,
    cutline: Option<SiteIdx>,
    seed: u64,
    replay: Option<&[SiteIdx]>,
) -> Result<Vec<SiteIdx>> {
    match replay {
        Some(seq) => {
            if let Some(&bad) = seq.iter().find(|&&s| s >= n) {
                return Err(Error::UnknownSite(bad));
            }
            Ok(seq.iter().copied().filter(|&s| Some(s) != cutline).collect())
        }
        None => sequence_for(cfg, n, cutline, cfg.auction.length, seed),
    }
}

/// Auction of one cell with the configured target strategy.
pub fn run_auction(cfg: &ExperimentConfig, cell: &Cell, replay: Option<&[SiteIdx]>) -> Result<(AuctionTrace, SiteIdx)> {
    let (e, target) = build_ecosystem(cfg, cell)?;
    let market = market_for(cfg, &e);
    let n = e.n_sites();
    let (strategy, cut) = match cfg.strategy.target {
        TargetKind::Prop => (TargetStrategy::Prop, None),
        TargetKind::Exhaustive => {
            let p = exhaustive_params(cfg, &cell.point);
            (TargetStrategy::Exhaustive(p), p.cutline.then_some(target))
        }
    };
    let seq = pick_sequence(cfg, n, cut, cell.sequence_seed, replay)?;
    let smf = smoothing(n, target, &cell.point);
    Ok((
        simulate(
            &market,
            &smf,
            target,
            &seq,
            cfg.auction.length,
            cfg.auction.slack,
            &strategy,
        )?,
        target,
    ))
}

/// Target norm-risk traces of a prop/exhaustive pair over identical inputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedOutcome {
    pub prop: Vec<f64>,
    pub exhaustive: Vec<f64>,
}

pub fn run_paired(cfg: &ExperimentConfig, cell: &Cell, replay: Option<&[SiteIdx]>) -> Result<PairedOutcome> {
    let (e, target) = build_ecosystem(cfg, cell)?;
    let market = market_for(cfg, &e);
    let n = e.n_sites();
    let smf = smoothing(n, target, &cell.point);
    let len = cfg.auction.length;
    let params = exhaustive_params(cfg, &cell.point);

    let seq = pick_sequence(cfg, n, None, cell.sequence_seed, replay)?;
    let prop = simulate(
        &market,
        &smf,
        target,
        &seq,
        len,
        cfg.auction.slack,
        &TargetStrategy::Prop,
    )?;
    let exh_seq = if params.cutline {
        pick_sequence(cfg, n, Some(target), cell.sequence_seed, replay)?
    } else {
        seq
    };
    let exh = simulate(
        &market,
        &smf,
        target,
        &exh_seq,
        len,
        cfg.auction.slack,
        &TargetStrategy::Exhaustive(params),
    )?;
    Ok(PairedOutcome {
        prop: prop.norm_risk_of(target),
        exhaustive: exh.norm_risk_of(target),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairedMetrics {
    pub pairs: usize,
    pub bids: usize,
    pub adv_freq: f64,
    /// Median over improving bids; absent when none improve.
    pub abs_adv: Option<f64>,
    pub frac_adv: Option<f64>,
    /// Median relative improvement over every bid of every pair.
    pub median_rel_improvement: Option<f64>,
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    })
}

fn improves(exh: f64, prop: f64) -> bool {
    exh < prop - 1e-12 * prop.abs().max(1.0)
}

fn relative(prop: f64, exh: f64) -> f64 {
    if prop == 0.0 {
        0.0
    } else {
        (prop - exh) / prop
    }
}

pub fn paired_metrics(outcomes: &[PairedOutcome]) -> PairedMetrics {
    let mut abs = Vec::new();
    let mut frac = Vec::new();
    let mut rel = Vec::new();
    let mut bids = 0;
    for o in outcomes {
        for (&p, &x) in o.prop.iter().zip(&o.exhaustive) {
            bids += 1;
            rel.push(relative(p, x));
            if improves(x, p) {
                abs.push(p - x);
                frac.push(relative(p, x));
            }
        }
    }
    PairedMetrics {
        pairs: outcomes.len(),
        bids,
        adv_freq: if bids == 0 { 0.0 } else { abs.len() as f64 / bids as f64 },
        abs_adv: median(&mut abs),
        frac_adv: median(&mut frac),
        median_rel_improvement: median(&mut rel),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AttackRow {
    /// 1-based position in the attack window.
    pub opportunity: usize,
    /// Counted bids placed before this opportunity.
    pub bid_index: usize,
    pub norm_risk: f64,
    pub batch_norm_cost: f64,
    pub norm_cost: f64,
    pub cumulative_dodge: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    pub rows: Vec<AttackRow>,
    pub trace: Vec<AttackTraceRow>,
    pub vulnerable: usize,
    /// Steps at which the budget check failed.
    pub violations: usize,
    pub aggression: f64,
}

impl AttackOutcome {
    pub fn final_norm_cost(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.norm_cost)
    }
}

/// Attack against an all-prop auction of one cell.
pub fn run_attack(cfg: &ExperimentConfig, cell: &Cell) -> Result<AttackOutcome> {
    let (e, target) = build_ecosystem(cfg, cell)?;
    let market = market_for(cfg, &e);
    let n = e.n_sites();
    let smf = smoothing(n, target, &cell.point);
    let mut params = cfg.attack.params;
    params.aggression = cell.point.aggression;
    let window = cfg.attack.window;
    let slack = cfg.auction.slack;

    // long enough for the warm-up, the window and the foresight beyond it
    let seq_len = window + params.foresight + 64 * n;
    let seq = sequence_for(cfg, n, None, seq_len, cell.sequence_seed)?;

    let mut state = AuctionState::new(&market, &smf)?;
    state.first_bid_round(&market)?;
    let mut pos = 0;
    if cfg.attack.start == AttackStart::AfterResponse {
        while state.counts.contains(&0) {
            let b = *seq
                .get(pos)
                .ok_or_else(|| Error::Config("sequence too short for warm-up".into()))?;
            let bid = state.prop_bid(&market, b)?;
            state.apply_bid(&market, &bid)?;
            pos += 1;
        }
    }

    let base = Attacker::new(&e, &market, target, slack, params)?;
    let vulnerable = base.vulnerable();
    let mut greedy = cfg
        .attack
        .greedy
        .then(|| GreedyAttacker::new(base, &e, &market, cell.attacker_seed));
    let checker = if greedy.is_none() {
        Some(Attacker::new(&e, &market, target, slack, params)?)
    } else {
        None
    };

    let mut attack = AttackState::default();
    let mut rows = Vec::with_capacity(window);
    let mut violations = 0;
    for opportunity in 1..=window {
        if opportunity > 1 {
            let b = *seq
                .get(pos)
                .ok_or_else(|| Error::Config("sequence too short for window".into()))?;
            let bid = state.prop_bid(&market, b)?;
            state.apply_bid(&market, &bid)?;
            pos += 1;
        }
        let before = attack.cumulative_cost;
        let plan: StuffingPlan = match (&mut greedy, &checker) {
            (Some(g), _) => g.plan(&state, &attack)?,
            (None, Some(a)) => {
                if params.depth() == 1 && params.weighting == GainWeighting::Batch {
                    a.fast_path_lookahead1(&state.allocations_to(target), &attack)
                } else {
                    a.plan_attack(&state, &attack, &seq[pos..])?
                }
            }
            (None, None) => unreachable!("one attacker is always configured"),
        };
        let who: &Attacker = match (&greedy, &checker) {
            (Some(g), _) => g.attacker(),
            (None, Some(a)) => a,
            (None, None) => unreachable!("one attacker is always configured"),
        };
        who.advance(&mut attack, &plan)?;
        if !within_budget(attack.cumulative_dodge, params.aggression) {
            violations += 1;
        }
        rows.push(AttackRow {
            opportunity,
            bid_index: state.bids,
            norm_risk: state.per_bid_risk(&market, target).1,
            batch_norm_cost: who.norm_cost(attack.cumulative_cost - before),
            norm_cost: who.norm_cost(attack.cumulative_cost),
            cumulative_dodge: attack.cumulative_dodge,
        });
    }
    Ok(AttackOutcome {
        rows,
        trace: attack.trace,
        vulnerable,
        violations,
        aggression: params.aggression,
    })
}

/// Default cost of generating one monitoring request, in seconds.
pub const DEFAULT_REQUEST_COST: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchReport {
    pub sites: usize,
    pub capacity: u64,
    pub users: u64,
    /// Median time of one response bid.
    pub p2b_secs: f64,
    /// Median time for all peers to absorb one bid.
    pub p2a_secs: f64,
    pub request_cost_secs: f64,
    /// Bidding time over request-generation time.
    pub ratio: f64,
}

/// A site of `n` with `cap` slots and `users` users, with intersections drawn
/// uniformly and one allocation received from every peer.
pub fn synthetic_view(n: usize, cap: u64, users: u64, seed: u64) -> Result<(LocalView, PropState, RiskModel)> {
    if n < 3 {
        return Err(Error::TooFewSites(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shared: Vec<u64> = (0..n).map(|_| rng.random_range(0..=users)).collect();
    shared[0] = 0;
    let view = LocalView {
        site: 0,
        own_users: users,
        capacity: cap,
        privacy: Privacy::Psi,
        shared,
    };
    let model = RiskModel::default();
    let mut st = PropState::new(&view, &model, 1.0)?;
    for p in 1..n {
        let k = rng.random_range(0..=cap.max(1)) as f64;
        st.receive_allocation(&view, &model, p, k)?;
    }
    Ok((view, st, model))
}

fn median_duration(mut samples: Vec<Duration>) -> f64 {
    samples.sort_unstable();
    samples[samples.len() / 2].as_secs_f64()
}

pub fn bench_bid(n: usize, cap: u64, users: u64, request_cost: f64, reps: usize, seed: u64) -> Result<BenchReport> {
    let (view, st, model) = synthetic_view(n, cap, users, seed)?;
    let reps = reps.max(1);
    let mut p2b = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = Instant::now();
        std::hint::black_box(respond_bid(&view, std::hint::black_box(&st))?);
        p2b.push(t.elapsed());
    }
    let mut p2a = Vec::with_capacity(reps);
    for r in 0..reps {
        let mut scratch = st.clone();
        let k = (r as u64 % cap.max(1)) as f64;
        let t = Instant::now();
        for p in 1..n {
            scratch.receive_allocation(&view, &model, p, k)?;
        }
        p2a.push(t.elapsed());
        std::hint::black_box(&scratch);
    }
    let p2b_secs = median_duration(p2b);
    let p2a_secs = median_duration(p2a);
    Ok(BenchReport {
        sites: n,
        capacity: cap,
        users,
        p2b_secs,
        p2a_secs,
        request_cost_secs: request_cost,
        ratio: (p2b_secs + p2a_secs) / (cap as f64 * request_cost),
    })
}
