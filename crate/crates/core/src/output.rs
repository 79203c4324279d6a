//! Experiment drivers that fan cells out and write CSV results plus a manifest.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::ecosystem::{Privacy, SiteIdx};
use crate::error::{Error, Result};
use crate::harness::{
    expand_cells, paired_metrics, run_attack, run_auction, run_paired, AttackOutcome, BenchReport, Cell, PairedMetrics,
    PairedOutcome,
};
use crate::par::map_cells;

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'static str,
    command: &'a str,
    parallel: bool,
    cells: Vec<CellSeeds>,
    config: &'a ExperimentConfig,
}

#[derive(Serialize)]
struct CellSeeds {
    cell: usize,
    point: usize,
    placement_rep: usize,
    sequence_rep: usize,
    // TOML integers are signed 64-bit
    placement_seed: String,
    sequence_seed: String,
    attacker_seed: String,
}

pub fn write_manifest(out_dir: &Path, command: &str, cfg: &ExperimentConfig, cells: &[Cell]) -> Result<()> {
    let m = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        command,
        parallel: cfg!(feature = "parallel"),
        cells: cells
            .iter()
            .map(|c| CellSeeds {
                cell: c.index,
                point: c.point_index,
                placement_rep: c.placement_rep,
                sequence_rep: c.sequence_rep,
                placement_seed: c.placement_seed.to_string(),
                sequence_seed: c.sequence_seed.to_string(),
                attacker_seed: c.attacker_seed.to_string(),
            })
            .collect(),
        config: cfg,
    };
    let text = toml::to_string_pretty(&m).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(out_dir.join("manifest.toml"), text)?;
    Ok(())
}

fn writer(out_dir: &Path, name: &str) -> Result<csv::Writer<fs::File>> {
    Ok(csv::Writer::from_path(out_dir.join(name))?)
}

fn privacy_label(p: Privacy) -> &'static str {
    match p {
        Privacy::Psi => "psi",
        Privacy::Psica => "psica",
    }
}

#[derive(Serialize)]
struct RiskRow {
    cell: usize,
    bid_index: usize,
    bidder: usize,
    site: usize,
    risk: f64,
    norm_risk: f64,
}

#[derive(Serialize)]
struct AllocationRow {
    cell: usize,
    /// 0 for the first-bid round.
    bid_index: usize,
    bidder: usize,
    receiver: usize,
    slots: u64,
}

/// Site ids in the output are 1-based.
pub fn auction_experiment(cfg: &ExperimentConfig, out_dir: &Path, replay: Option<&[SiteIdx]>) -> Result<usize> {
    fs::create_dir_all(out_dir)?;
    let cells = expand_cells(cfg);
    let traces = map_cells(&cells, |c| run_auction(cfg, c, replay));
    let mut risk = writer(out_dir, "risk_trace.csv")?;
    let mut alloc = writer(out_dir, "allocations.csv")?;
    for (cell, trace) in cells.iter().zip(traces) {
        let (trace, _) = trace?;
        for a in &trace.first_round {
            for (r, &k) in a.slots.iter().enumerate().filter(|&(r, _)| r != a.bidder) {
                alloc.serialize(AllocationRow {
                    cell: cell.index,
                    bid_index: 0,
                    bidder: a.bidder + 1,
                    receiver: r + 1,
                    slots: k,
                })?;
            }
        }
        for (b, a) in trace.bids.iter().zip(&trace.allocations) {
            for s in 0..b.risk.len() {
                risk.serialize(RiskRow {
                    cell: cell.index,
                    bid_index: b.bid_index,
                    bidder: b.bidder + 1,
                    site: s + 1,
                    risk: b.risk[s],
                    norm_risk: b.norm_risk[s],
                })?;
            }
            for (r, &k) in a.slots.iter().enumerate().filter(|&(r, _)| r != a.bidder) {
                alloc.serialize(AllocationRow {
                    cell: cell.index,
                    bid_index: b.bid_index,
                    bidder: a.bidder + 1,
                    receiver: r + 1,
                    slots: k,
                })?;
            }
        }
    }
    risk.flush()?;
    alloc.flush()?;
    write_manifest(out_dir, "auction", cfg, &cells)?;
    Ok(cells.len())
}

#[derive(Serialize)]
struct PairedBidRow {
    cell: usize,
    point: usize,
    bid_index: usize,
    prop_norm_risk: f64,
    exhaustive_norm_risk: f64,
}

#[derive(Serialize)]
struct PairedSummaryRow {
    /// Grid point index, or "all".
    point: String,
    popularity: Option<f64>,
    target_capacity: Option<f64>,
    peer_capacity: Option<f64>,
    smoothing_target: Option<f64>,
    smoothing_peers: Option<f64>,
    privacy: Option<&'static str>,
    lookahead: Option<usize>,
    pairs: usize,
    bids: usize,
    adv_freq: f64,
    abs_adv: Option<f64>,
    frac_adv: Option<f64>,
    median_rel_improvement: Option<f64>,
}

impl PairedSummaryRow {
    fn new(point: String, cell: Option<&Cell>, m: PairedMetrics) -> Self {
        let p = cell.map(|c| c.point);
        Self {
            point,
            popularity: p.map(|p| p.popularity),
            target_capacity: p.map(|p| p.target_capacity),
            peer_capacity: p.map(|p| p.peer_capacity),
            smoothing_target: p.map(|p| p.smoothing_target),
            smoothing_peers: p.map(|p| p.smoothing_peers),
            privacy: p.map(|p| privacy_label(p.privacy)),
            lookahead: p.map(|p| p.lookahead),
            pairs: m.pairs,
            bids: m.bids,
            adv_freq: m.adv_freq,
            abs_adv: m.abs_adv,
            frac_adv: m.frac_adv,
            median_rel_improvement: m.median_rel_improvement,
        }
    }
}

/// Runs every cell as a prop/exhaustive pair. Returns the pooled metrics.
pub fn paired_experiment(cfg: &ExperimentConfig, out_dir: &Path, replay: Option<&[SiteIdx]>) -> Result<PairedMetrics> {
    fs::create_dir_all(out_dir)?;
    let cells = expand_cells(cfg);
    let outcomes: Vec<PairedOutcome> = map_cells(&cells, |c| run_paired(cfg, c, replay))
        .into_iter()
        .collect::<Result<_>>()?;

    let mut bids = writer(out_dir, "paired_bids.csv")?;
    for (cell, o) in cells.iter().zip(&outcomes) {
        for (i, (&p, &x)) in o.prop.iter().zip(&o.exhaustive).enumerate() {
            bids.serialize(PairedBidRow {
                cell: cell.index,
                point: cell.point_index,
                bid_index: i + 1,
                prop_norm_risk: p,
                exhaustive_norm_risk: x,
            })?;
        }
    }
    bids.flush()?;

    let mut summary = writer(out_dir, "paired_summary.csv")?;
    let points = cells.last().map_or(0, |c| c.point_index + 1);
    for pi in 0..points {
        let mine: Vec<PairedOutcome> = cells
            .iter()
            .zip(&outcomes)
            .filter(|(c, _)| c.point_index == pi)
            .map(|(_, o)| o.clone())
            .collect();
        let first = cells.iter().find(|c| c.point_index == pi);
        summary.serialize(PairedSummaryRow::new(pi.to_string(), first, paired_metrics(&mine)))?;
    }
    let all = paired_metrics(&outcomes);
    summary.serialize(PairedSummaryRow::new("all".into(), None, all))?;
    summary.flush()?;
    write_manifest(out_dir, "paired", cfg, &cells)?;
    Ok(all)
}

#[derive(Serialize)]
struct AttackRowOut {
    cell: usize,
    aggression: f64,
    opportunity: usize,
    bid_index: usize,
    norm_risk: f64,
    batch_norm_cost: f64,
    norm_cost: f64,
    cumulative_dodge: f64,
}

#[derive(Serialize)]
struct AttackStepOut {
    cell: usize,
    bid_index: usize,
    peer: usize,
    attempts: u64,
    batch_dodge: f64,
    cumulative_dodge: f64,
    expected_gain: f64,
}

#[derive(Serialize)]
struct MetricsRow {
    cell: usize,
    point: usize,
    aggression: f64,
    privacy: &'static str,
    vulnerable: usize,
    final_norm_cost: f64,
    violations: usize,
}

pub fn attack_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<AttackOutcome>> {
    fs::create_dir_all(out_dir)?;
    let cells = expand_cells(cfg);
    let outcomes: Vec<AttackOutcome> = map_cells(&cells, |c| run_attack(cfg, c))
        .into_iter()
        .collect::<Result<_>>()?;
    let mut rows = writer(out_dir, "attack_trace.csv")?;
    let mut steps = writer(out_dir, "attack_steps.csv")?;
    let mut metrics = writer(out_dir, "metrics.csv")?;
    for (cell, o) in cells.iter().zip(&outcomes) {
        for r in &o.rows {
            rows.serialize(AttackRowOut {
                cell: cell.index,
                aggression: o.aggression,
                opportunity: r.opportunity,
                bid_index: r.bid_index,
                norm_risk: r.norm_risk,
                batch_norm_cost: r.batch_norm_cost,
                norm_cost: r.norm_cost,
                cumulative_dodge: r.cumulative_dodge,
            })?;
        }
        for t in &o.trace {
            steps.serialize(AttackStepOut {
                cell: cell.index,
                bid_index: t.bid_index,
                peer: t.peer + 1,
                attempts: t.f,
                batch_dodge: t.batch_dodge,
                cumulative_dodge: t.cumulative_dodge,
                expected_gain: t.expected_gain,
            })?;
        }
        metrics.serialize(MetricsRow {
            cell: cell.index,
            point: cell.point_index,
            aggression: o.aggression,
            privacy: privacy_label(cell.point.privacy),
            vulnerable: o.vulnerable,
            final_norm_cost: o.final_norm_cost(),
            violations: o.violations,
        })?;
    }
    rows.flush()?;
    steps.flush()?;
    metrics.flush()?;
    write_manifest(out_dir, "attack", cfg, &cells)?;
    Ok(outcomes)
}

pub fn write_bench_csv(out_dir: &Path, reports: &[BenchReport]) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let mut w = writer(out_dir, "bench.csv")?;
    for r in reports {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
