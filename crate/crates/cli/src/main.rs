use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use slotbarter::config::{Constraint, ExperimentConfig, Preset};
use slotbarter::dataset::{self, HashFilter};
use slotbarter::ecosystem::{Ecosystem, SiteIdx};
use slotbarter::harness::{bench_bid, DEFAULT_REQUEST_COST};
use slotbarter::output;
use slotbarter::sequence::parse_sequence;

#[derive(Parser)]
#[command(name = "slotbarter", version, about = "Monitoring-slot bartering experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run auctions and write per-bid risk traces.
    Auction(ExperimentArgs),
    /// Run prop/exhaustive auction pairs and write improvement metrics.
    Paired(ExperimentArgs),
    /// Run stuffing attacks against live auctions.
    Attack(ExperimentArgs),
    /// Time response bids and allocation updates.
    Bench(BenchArgs),
    /// Parse a breach dump into an ecosystem file and reuse rates.
    Ingest(IngestArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Whitespace-separated 1-based site ids to replay instead of sampling.
    #[arg(long)]
    sequence_file: Option<PathBuf>,
    /// Privacy preset: psi or psica.
    #[arg(long)]
    preset: Option<Preset>,
    /// Constraint preset on the strategic bidder: psi-star.
    #[arg(long)]
    constraint: Option<Constraint>,
}

#[derive(Args)]
struct BenchArgs {
    /// Site counts to measure.
    #[arg(long, value_delimiter = ',', default_value = "100,1000,10000,100000")]
    sites: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    capacity: u64,
    /// Users at the measured site.
    #[arg(long, default_value_t = 1000)]
    users: u64,
    /// Cost of generating one monitoring request, in milliseconds.
    #[arg(long, default_value_t = DEFAULT_REQUEST_COST * 1e3)]
    request_cost_ms: f64,
    #[arg(long, default_value_t = 11)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    /// Tab-separated site, email, password lines.
    #[arg(long)]
    input: PathBuf,
    /// Environment variable holding the email salt.
    #[arg(long)]
    salt_env: String,
    /// Ecosystem file to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    reuse_out: PathBuf,
    /// Per-site statistics CSV.
    #[arg(long)]
    sites_out: Option<PathBuf>,
    /// Keep entries that look like password hashes.
    #[arg(long)]
    keep_hashed: bool,
}

fn load_config(args: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(p) = args.preset {
        cfg.apply_preset(p);
    }
    if let Some(c) = args.constraint {
        cfg.apply_constraint(c);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn site_count(cfg: &ExperimentConfig) -> Result<usize> {
    Ok(match &cfg.placement.ecosystem {
        Some(p) => Ecosystem::from_text(&std::fs::read_to_string(p)?)?.n_sites(),
        None => cfg.placement.sites,
    })
}

fn load_sequence(args: &ExperimentArgs, cfg: &ExperimentConfig) -> Result<Option<Vec<SiteIdx>>> {
    let Some(path) = &args.sequence_file else {
        return Ok(None);
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Some(parse_sequence(&text, site_count(cfg)?)?))
}

fn auction(args: ExperimentArgs) -> Result<()> {
    let cfg = load_config(&args)?;
    let seq = load_sequence(&args, &cfg)?;
    let cells = output::auction_experiment(&cfg, &args.out_dir, seq.as_deref())?;
    println!("{cells} auctions written to {}", args.out_dir.display());
    Ok(())
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "absent".to_string(), |v| format!("{v:.6}"))
}

fn paired(args: ExperimentArgs) -> Result<()> {
    let cfg = load_config(&args)?;
    let seq = load_sequence(&args, &cfg)?;
    let m = output::paired_experiment(&cfg, &args.out_dir, seq.as_deref())?;
    println!("pairs           {}", m.pairs);
    println!("advFreq         {:.6}", m.adv_freq);
    println!("absAdv          {}", fmt_opt(m.abs_adv));
    println!("fracAdv         {}", fmt_opt(m.frac_adv));
    println!("median rel impr {}", fmt_opt(m.median_rel_improvement));
    Ok(())
}

fn attack(args: ExperimentArgs) -> Result<()> {
    let cfg = load_config(&args)?;
    if args.sequence_file.is_some() {
        bail!("--sequence-file applies to auction and paired only");
    }
    let outcomes = output::attack_experiment(&cfg, &args.out_dir)?;
    let mut costs: Vec<f64> = outcomes.iter().map(|o| o.final_norm_cost()).collect();
    let violations: usize = outcomes.iter().map(|o| o.violations).sum();
    println!("runs            {}", outcomes.len());
    println!("median normCost {}", fmt_opt(slotbarter::harness::median(&mut costs)));
    println!("violations      {violations}");
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let mut reports = Vec::with_capacity(args.sites.len());
    println!("{:>8} {:>12} {:>12} {:>10}", "sites", "p2b_ms", "p2a_ms", "ratio");
    for &n in &args.sites {
        let r = bench_bid(
            n,
            args.capacity,
            args.users,
            args.request_cost_ms * 1e-3,
            args.reps,
            args.seed,
        )?;
        println!(
            "{:>8} {:>12.4} {:>12.4} {:>10.4}",
            n,
            r.p2b_secs * 1e3,
            r.p2a_secs * 1e3,
            r.ratio
        );
        reports.push(r);
    }
    output::write_bench_csv(&args.out_dir, &reports)?;
    Ok(())
}

fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn ingest(args: IngestArgs) -> Result<()> {
    let salt = std::env::var(&args.salt_env).with_context(|| format!("salt variable {} is not set", args.salt_env))?;
    let input = File::open(&args.input).with_context(|| format!("opening {}", args.input.display()))?;
    let filter = HashFilter {
        enabled: !args.keep_hashed,
        ..HashFilter::default()
    };
    let d = dataset::ingest(BufReader::new(input), salt.as_bytes(), &filter)?;
    create(&args.out)?.write_all(d.ecosystem.to_text().as_bytes())?;
    dataset::write_reuse_csv(&d, create(&args.reuse_out)?)?;
    if let Some(p) = &args.sites_out {
        dataset::write_site_stats_csv(&d, create(p)?)?;
    }
    let s = &d.summary;
    println!("lines       {}", s.lines);
    println!("malformed   {}", s.malformed);
    println!("duplicates  {}", s.duplicates);
    println!("hashed      {}", s.hashed);
    println!("entries     {}", s.entries);
    println!("sites       {}", s.sites);
    println!("users       {}", s.users);
    println!("lcc sites   {}", s.lcc_sites);
    println!("lcc users   {}", s.lcc_users);
    if let Some(m) = d.reuse.median_rate() {
        println!("median reuse {m:.4}");
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Auction(a) => auction(a),
        Command::Paired(a) => paired(a),
        Command::Attack(a) => attack(a),
        Command::Bench(a) => bench(a),
        Command::Ingest(a) => ingest(a),
    }
}
