//! `lowres-sim`: runs throughput campaigns and estimation sweeps and writes
//! the CSV/JSON artifacts consumed by the plotting tools.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use lowres_core::campaign::{
    emit_results, estimation_sweep, run_campaign, write_sweep_csv, CampaignConfig, Cdf, OutputFormat, Scheme,
};

#[derive(Parser)]
#[command(name = "lowres-sim", version, about = "mmWave MIMO throughput with low-resolution ADCs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Point-to-point rates with perfect CSI (wp_ua, up_ua, sp_sa).
    PtpPerfect(CampaignArgs),
    /// Point-to-point rate designed from estimated CSI (wp_ua, wp_ua_est).
    PtpEstimated(CampaignArgs),
    /// Multi-user TDMA downlink (proposed and naive, perfect and estimated CSI).
    Dl(CampaignArgs),
    /// Every scheme listed in the config.
    Run(CampaignArgs),
    /// Channel estimation NMSE over pilot lengths and training resolutions.
    EstimationSweep(SweepArgs),
}

#[derive(Args)]
struct Common {
    /// JSON config file; missing keys take the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of drops (trials for the sweep).
    #[arg(long)]
    drops: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads, 0 for one per core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args)]
struct CampaignArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated schemes overriding the subcommand's set.
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<Scheme>>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',', default_value = "128,256,512")]
    pilot_lens: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    bits: Vec<u32>,
    /// Trials per grid point; `--drops` is an alias.
    #[arg(long)]
    trials: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Jsonl => OutputFormat::JsonLines,
        }
    }
}

fn load_config(common: &Common) -> Result<CampaignConfig> {
    let mut cfg = match &common.config {
        Some(p) => CampaignConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => CampaignConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.master_seed = s;
    }
    if let Some(d) = common.drops {
        cfg.n_drops = d;
    }
    Ok(cfg)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{v:.3}"))
}

fn campaign(args: CampaignArgs, default_schemes: Option<&[Scheme]>) -> Result<()> {
    let mut cfg = load_config(&args.common)?;
    if let Some(s) = args.schemes {
        cfg.schemes = s;
    } else if let Some(d) = default_schemes {
        cfg.schemes = d.to_vec();
    }
    if cfg.schemes.is_empty() {
        bail!("no schemes selected");
    }
    let t0 = Instant::now();
    let result = run_campaign(&cfg, args.common.workers)?;
    let meta = emit_results(&result, args.format.into(), &args.common.out)?;
    println!(
        "{} drops x {} users, {} records ({} errors) in {:.1}s -> {}",
        cfg.n_drops,
        cfg.n_users,
        meta.n_records,
        meta.n_errors,
        t0.elapsed().as_secs_f64(),
        args.common.out.display()
    );
    println!("{:<16} {:>10} {:>10} {:>10}", "scheme", "median", "max", "bench_med");
    for (scheme, s) in result.summaries() {
        println!(
            "{:<16} {:>10} {:>10} {:>10}",
            scheme.name(),
            fmt_opt(s.rate.median()),
            fmt_opt(s.rate.max()),
            fmt_opt(s.benchmark.median())
        );
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let cfg = load_config(&args.common)?;
    let trials = args.trials.or(args.common.drops).unwrap_or(100);
    if trials == 0 {
        bail!("need at least one trial");
    }
    let pool = rayon_pool(args.common.workers)?;
    let recs = pool.install(|| estimation_sweep(&cfg, &args.pilot_lens, &args.bits, trials))?;
    std::fs::create_dir_all(&args.common.out)?;
    let path = args.common.out.join("sweep.csv");
    write_sweep_csv(&recs, &path)?;
    println!("{} trials -> {}", trials, path.display());
    println!("{:>9} {:>5} {:>14}", "pilot_len", "bits", "median_nmse_db");
    for &n_p in &args.pilot_lens {
        for &b in &args.bits {
            let cdf = Cdf::new(
                recs.iter()
                    .filter(|r| r.pilot_len == n_p && r.bits == b)
                    .map(|r| r.nmse_db)
                    .collect(),
            );
            println!("{:>9} {:>5} {:>14}", n_p, b, fmt_opt(cdf.median()));
        }
    }
    Ok(())
}

fn rayon_pool(workers: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(workers).build()?)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::PtpPerfect(a) => campaign(a, Some(&[Scheme::WpUa, Scheme::UpUa, Scheme::SpSa])),
        Command::PtpEstimated(a) => campaign(a, Some(&[Scheme::WpUa, Scheme::WpUaEst])),
        Command::Dl(a) => campaign(
            a,
            Some(&[Scheme::DlProposed, Scheme::DlNaive, Scheme::DlProposedEst, Scheme::DlNaiveEst]),
        ),
        Command::Run(a) => campaign(a, None),
        Command::EstimationSweep(a) => sweep(a),
    }
}
