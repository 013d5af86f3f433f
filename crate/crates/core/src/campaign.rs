//! Monte Carlo campaigns: drops of users around one BS, every requested
//! scheme evaluated per user, results written as CSV tables and CDFs.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::allocation::{allocate, sp_sa, wp_ua, SelectionMode, Strategy};
use crate::channel::{
    drop_user, noise_floor_dbm, sample_clusters, synthesize_channel, AngleModel, ArrayGeometry, ChannelMatrix,
    LinkTag, PathLossModel,
};
use crate::error::{Error, Result};
use crate::estimation::{
    estimate_bussgang_lmmse, estimate_gamp_em, gen_pilots, nmse, AngularDictionaries, GampOptions, PilotBlock,
};
use crate::rate::{
    dl_user_rate, naive_from_ptp, overhead_scale, ptp_rate, truncated_benchmark, Csi, Mismatch, RateReport, SchemeTag,
    TdmaMode,
};
use crate::seed::{derive_seed, rng_from, Stream};
use crate::subchannel::{effective_channel, svd_subchannels, whitened_real_channel};

/// One curve of the study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    WpUa,
    UpUa,
    SpSa,
    /// WP-UA designed from estimated CSI, pilot overhead deducted.
    WpUaEst,
    DlProposed,
    DlNaive,
    DlProposedEst,
    DlNaiveEst,
}

impl Scheme {
    pub const ALL: [Scheme; 8] = [
        Scheme::WpUa,
        Scheme::UpUa,
        Scheme::SpSa,
        Scheme::WpUaEst,
        Scheme::DlProposed,
        Scheme::DlNaive,
        Scheme::DlProposedEst,
        Scheme::DlNaiveEst,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::WpUa => "wp_ua",
            Scheme::UpUa => "up_ua",
            Scheme::SpSa => "sp_sa",
            Scheme::WpUaEst => "wp_ua_est",
            Scheme::DlProposed => "dl_proposed",
            Scheme::DlNaive => "dl_naive",
            Scheme::DlProposedEst => "dl_proposed_est",
            Scheme::DlNaiveEst => "dl_naive_est",
        }
    }

    pub fn uses_estimate(self) -> bool {
        matches!(self, Scheme::WpUaEst | Scheme::DlProposedEst | Scheme::DlNaiveEst)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    BussgangLmmse,
    EmGamp,
}

/// Campaign parameters. Missing keys take the defaults of the study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub n_drops: u64,
    pub n_users: u32,
    pub cell_radius_min_m: f64,
    pub cell_radius_max_m: f64,
    /// Informational: the path-loss coefficients already belong to this band.
    pub carrier_frequency_ghz: f64,
    pub bandwidth_hz: f64,
    pub noise_density_dbm_hz: f64,
    pub noise_figure_db: f64,
    pub bs_power_dbm: f64,
    /// `[rows, cols]` of the BS planar array.
    pub bs_antennas: [usize; 2],
    pub user_antennas: [usize; 2],
    /// Element spacing in wavelengths.
    pub antenna_spacing: f64,
    /// One-bit ADCs per user.
    pub n_q: u32,
    pub pilot_len: u32,
    pub coherence_len: u32,
    pub training_bits: u32,
    pub estimator: Estimator,
    pub mc_samples: usize,
    pub sp_sa_mode: SelectionMode,
    pub schemes: Vec<Scheme>,
    pub master_seed: u64,
    pub path_loss: PathLossModel,
    pub angles: AngleModel,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            n_drops: 500,
            n_users: 10,
            cell_radius_min_m: 10.0,
            cell_radius_max_m: 50.0,
            carrier_frequency_ghz: 28.0,
            bandwidth_hz: 1e9,
            noise_density_dbm_hz: -174.0,
            noise_figure_db: 6.0,
            bs_power_dbm: 30.0,
            bs_antennas: [8, 8],
            user_antennas: [4, 4],
            antenna_spacing: 0.5,
            n_q: 8,
            pilot_len: 512,
            coherence_len: 10240,
            training_bits: 3,
            estimator: Estimator::BussgangLmmse,
            mc_samples: crate::rate::DEFAULT_MC_SAMPLES,
            sp_sa_mode: SelectionMode::Single,
            schemes: Scheme::ALL.to_vec(),
            master_seed: 1,
            path_loss: PathLossModel::default(),
            angles: AngleModel::default(),
        }
    }
}

impl CampaignConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_users == 0 {
            return bad("n_users must be positive".into());
        }
        if !(self.cell_radius_min_m >= 1.0 && self.cell_radius_min_m < self.cell_radius_max_m) {
            return bad(format!(
                "cell radii ({}, {}) must satisfy 1 <= min < max",
                self.cell_radius_min_m, self.cell_radius_max_m
            ));
        }
        if self.n_q == 0 {
            return bad("n_q must be positive".into());
        }
        if self.pilot_len == 0 || self.pilot_len >= self.coherence_len {
            return bad(format!(
                "pilot_len {} must lie in [1, coherence_len = {})",
                self.pilot_len, self.coherence_len
            ));
        }
        if self.training_bits == 0 {
            return bad("training_bits must be positive".into());
        }
        if self.mc_samples == 0 {
            return bad("mc_samples must be positive".into());
        }
        if !(self.bandwidth_hz > 0.0) {
            return bad("bandwidth_hz must be positive".into());
        }
        if self.schemes.is_empty() {
            return bad("no schemes requested".into());
        }
        self.bs_geometry()?;
        self.user_geometry()?;
        Ok(())
    }

    pub fn bs_geometry(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::with_spacing(self.bs_antennas[0], self.bs_antennas[1], self.antenna_spacing)
    }

    pub fn user_geometry(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::with_spacing(self.user_antennas[0], self.user_antennas[1], self.antenna_spacing)
    }

    pub fn noise_floor_dbm(&self) -> f64 {
        noise_floor_dbm(self.noise_density_dbm_hz, self.bandwidth_hz, self.noise_figure_db)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One row per (drop, user, scheme).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropRecord {
    pub drop_id: u64,
    pub user_id: u32,
    pub scheme: Scheme,
    pub distance_m: f64,
    pub los: bool,
    pub path_loss_db: f64,
    /// Per-antenna receive SNR.
    pub snr_db: f64,
    pub rate_bps_hz: Option<f64>,
    pub benchmark_bps_hz: Option<f64>,
    pub nmse_db: Option<f64>,
    pub error: Option<String>,
}

pub const RECORD_HEADER: &str =
    "drop_id,user_id,scheme,distance_m,los,path_loss_db,snr_db,rate_bps_hz,benchmark_bps_hz,nmse_db,error";

struct UserLink {
    distance_m: f64,
    los: bool,
    path_loss_db: f64,
    snr_db: f64,
}

struct Estimated {
    nmse_db: f64,
    sigma: Vec<f64>,
    true_sigma: Vec<f64>,
    effective: crate::subchannel::EffectiveChannel,
    mc_seed: u64,
}

fn user_channel(cfg: &CampaignConfig, drop_id: u64, user: u32) -> Result<(UserLink, ChannelMatrix)> {
    let path = |s: Stream| [drop_id, u64::from(user), s as u64];
    let mut geo = rng_from(cfg.master_seed, &path(Stream::Geometry));
    let pos = drop_user(cfg.cell_radius_min_m, cfg.cell_radius_max_m, &mut geo)?;
    let link = cfg.path_loss.sample_link(pos.radius, &mut geo)?;
    let pl = cfg.path_loss.path_loss_db(link.distance, link.tag, link.shadowing_db)?;
    let snr_db = cfg.bs_power_dbm - pl - cfg.noise_floor_dbm();
    let mut cl = rng_from(cfg.master_seed, &path(Stream::Clusters));
    let clusters = sample_clusters(&cfg.angles, &mut cl)?;
    let beta = 10f64.powf(snr_db / 20.0);
    let ch = synthesize_channel(&clusters, &cfg.bs_geometry()?, &cfg.user_geometry()?, beta, link)?;
    Ok((
        UserLink {
            distance_m: link.distance,
            los: link.tag == LinkTag::Los,
            path_loss_db: pl,
            snr_db,
        },
        ch,
    ))
}

/// Trains on quantized pilots and returns the data-phase view of the true
/// channel through the estimate-designed SVD.
fn estimate_user(cfg: &CampaignConfig, drop_id: u64, user: u32, ch: &ChannelMatrix, true_sigma: &[f64]) -> Result<Estimated> {
    let path = |s: Stream| [drop_id, u64::from(user), s as u64];
    let n_t = ch.h.ncols();
    let mut prng = rng_from(cfg.master_seed, &path(Stream::Pilots));
    let pilots = gen_pilots(n_t, cfg.pilot_len as usize, 1.0, &mut prng)?;
    let mut nrng = rng_from(cfg.master_seed, &path(Stream::PilotNoise));
    let block = PilotBlock::observe(&ch.h, pilots, 1.0, Some(cfg.training_bits), &mut nrng)?;
    let dicts = AngularDictionaries::new(&cfg.user_geometry()?, &cfg.bs_geometry()?);
    let prior_var = (ch.beta_linear * ch.beta_linear).max(f64::MIN_POSITIVE);
    let est = match cfg.estimator {
        Estimator::BussgangLmmse => estimate_bussgang_lmmse(&block, &dicts, prior_var)?,
        Estimator::EmGamp => estimate_gamp_em(&block, &dicts, prior_var, &GampOptions::default())?.estimate,
    };
    let decomp = svd_subchannels(&whitened_real_channel(&est.h_hat))?;
    let effective = effective_channel(&whitened_real_channel(&ch.h), &decomp)?;
    Ok(Estimated {
        nmse_db: nmse(&ch.h, &est.h_hat)?,
        sigma: decomp.active_sigma().to_vec(),
        true_sigma: true_sigma.to_vec(),
        effective,
        mc_seed: derive_seed(cfg.master_seed, &path(Stream::MonteCarlo)),
    })
}

/// Rate of `scheme` with the truncated benchmark of the unit power budget,
/// shared by every scheme of a user.
fn evaluate(
    cfg: &CampaignConfig,
    scheme: Scheme,
    sigma: &[f64],
    est: Option<&Result<Estimated>>,
    ptp_est: &mut Option<RateReport>,
) -> Result<(RateReport, Option<f64>)> {
    let (mut report, nmse_db) = evaluate_rate(cfg, scheme, sigma, est, ptp_est)?;
    let users = match scheme {
        Scheme::DlProposed | Scheme::DlNaive | Scheme::DlProposedEst | Scheme::DlNaiveEst => cfg.n_users,
        Scheme::WpUa | Scheme::UpUa | Scheme::SpSa | Scheme::WpUaEst => 1,
    };
    let bench = truncated_benchmark(sigma, 1.0, cfg.n_q, users)?;
    report.benchmark_truncated = if scheme.uses_estimate() {
        overhead_scale(bench, cfg.pilot_len, cfg.coherence_len)?
    } else {
        bench
    };
    Ok((report, nmse_db))
}

fn evaluate_rate(
    cfg: &CampaignConfig,
    scheme: Scheme,
    sigma: &[f64],
    est: Option<&Result<Estimated>>,
    ptp_est: &mut Option<RateReport>,
) -> Result<(RateReport, Option<f64>)> {
    let n_u = cfg.n_users;
    match scheme {
        Scheme::WpUa | Scheme::UpUa => {
            let strat = if scheme == Scheme::WpUa { Strategy::WpUa } else { Strategy::UpUa };
            let tag = if scheme == Scheme::WpUa { SchemeTag::WpUa } else { SchemeTag::UpUa };
            let alloc = allocate(strat, sigma, 1.0, cfg.n_q)?;
            Ok((ptp_rate(sigma, &alloc, &Csi::Perfect, tag)?, None))
        }
        Scheme::SpSa => {
            let alloc = sp_sa(sigma, 1.0, cfg.n_q, cfg.sp_sa_mode)?;
            Ok((ptp_rate(sigma, &alloc, &Csi::Perfect, SchemeTag::SpSa)?, None))
        }
        Scheme::DlProposed | Scheme::DlNaive => {
            let mode = if scheme == Scheme::DlProposed { TdmaMode::Proposed } else { TdmaMode::Naive };
            let alloc = wp_ua(sigma, 1.0, cfg.n_q)?;
            Ok((dl_user_rate(sigma, &alloc, n_u, mode, &Csi::Perfect)?, None))
        }
        Scheme::WpUaEst | Scheme::DlProposedEst | Scheme::DlNaiveEst => {
            let est = match est {
                Some(Ok(e)) => e,
                Some(Err(e)) => return Err(Error::Config(format!("estimation failed: {e}"))),
                None => return Err(Error::Config("estimate missing".into())),
            };
            let alloc = wp_ua(&est.sigma, 1.0, cfg.n_q)?;
            let csi = Csi::Estimated(Mismatch {
                effective: &est.effective,
                true_sigma: &est.true_sigma,
                mc_samples: cfg.mc_samples,
                seed: est.mc_seed,
            });
            let ptp = |cache: &mut Option<RateReport>| -> Result<RateReport> {
                if cache.is_none() {
                    *cache = Some(ptp_rate(&est.sigma, &alloc, &csi, SchemeTag::WpUa)?);
                }
                Ok(cache.clone().expect("just filled"))
            };
            let mut report = match scheme {
                Scheme::WpUaEst => ptp(ptp_est)?,
                Scheme::DlProposedEst => dl_user_rate(&est.sigma, &alloc, n_u, TdmaMode::Proposed, &csi)?,
                _ => naive_from_ptp(&ptp(ptp_est)?, &alloc, &est.true_sigma, n_u)?,
            };
            report.total_bps_per_hz = overhead_scale(report.total_bps_per_hz, cfg.pilot_len, cfg.coherence_len)?;
            Ok((report, Some(est.nmse_db)))
        }
    }
}

/// Evaluates every requested scheme for every user of drop `drop_id`.
/// Failures are recorded per row and never abort the drop.
pub fn run_drop(cfg: &CampaignConfig, drop_id: u64) -> Vec<DropRecord> {
    let mut schemes = cfg.schemes.clone();
    schemes.sort();
    schemes.dedup();
    let mut out = Vec::with_capacity(cfg.n_users as usize * schemes.len());
    for user in 0..cfg.n_users {
        let blank = |scheme: Scheme, link: Option<&UserLink>| DropRecord {
            drop_id,
            user_id: user,
            scheme,
            distance_m: link.map_or(f64::NAN, |l| l.distance_m),
            los: link.is_some_and(|l| l.los),
            path_loss_db: link.map_or(f64::NAN, |l| l.path_loss_db),
            snr_db: link.map_or(f64::NAN, |l| l.snr_db),
            rate_bps_hz: None,
            benchmark_bps_hz: None,
            nmse_db: None,
            error: None,
        };
        let (link, ch) = match user_channel(cfg, drop_id, user) {
            Ok(x) => x,
            Err(e) => {
                for &s in &schemes {
                    out.push(DropRecord {
                        error: Some(e.to_string()),
                        ..blank(s, None)
                    });
                }
                continue;
            }
        };
        let decomp = svd_subchannels(&whitened_real_channel(&ch.h));
        let sigma: Vec<f64> = match &decomp {
            Ok(d) => d.active_sigma().to_vec(),
            Err(_) => Vec::new(),
        };
        let est = schemes
            .iter()
            .any(|s| s.uses_estimate())
            .then(|| estimate_user(cfg, drop_id, user, &ch, &sigma));
        let mut ptp_est = None;
        for &s in &schemes {
            let res = match &decomp {
                Ok(_) => evaluate(cfg, s, &sigma, est.as_ref(), &mut ptp_est),
                Err(e) => Err(Error::Config(format!("subchannel decomposition failed: {e}"))),
            };
            let mut rec = blank(s, Some(&link));
            match res {
                Ok((report, nmse_db)) => {
                    rec.rate_bps_hz = Some(report.total_bps_per_hz);
                    rec.benchmark_bps_hz = Some(report.benchmark_truncated);
                    rec.nmse_db = nmse_db;
                }
                Err(e) => {
                    rec.nmse_db = match &est {
                        Some(Ok(x)) if s.uses_estimate() => Some(x.nmse_db),
                        _ => None,
                    };
                    rec.error = Some(e.to_string());
                }
            }
            out.push(rec);
        }
    }
    out
}

/// Empirical CDF of one series: sorted samples with `cdf = (i + 1) / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cdf {
    pub samples: Vec<f64>,
}

impl Cdf {
    pub fn new(mut samples: Vec<f64>) -> Self {
        samples.retain(|x| x.is_finite());
        samples.sort_by(f64::total_cmp);
        Self { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let n = self.samples.len() as f64;
        self.samples
            .iter()
            .enumerate()
            .map(move |(i, &x)| (x, (i + 1) as f64 / n))
    }

    /// Lower median.
    pub fn median(&self) -> Option<f64> {
        self.quantile(0.5)
    }

    pub fn quantile(&self, q: f64) -> Option<f64> {
        if self.samples.is_empty() {
            return None;
        }
        let idx = ((q * self.samples.len() as f64).ceil() as usize).clamp(1, self.samples.len()) - 1;
        Some(self.samples[idx])
    }

    pub fn max(&self) -> Option<f64> {
        self.samples.last().copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeSummary {
    pub rate: Cdf,
    pub benchmark: Cdf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignResult {
    pub config: CampaignConfig,
    /// Sorted by drop, user, scheme.
    pub records: Vec<DropRecord>,
}

impl CampaignResult {
    pub fn n_errors(&self) -> usize {
        self.records.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn summaries(&self) -> BTreeMap<Scheme, SchemeSummary> {
        let mut by: BTreeMap<Scheme, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for r in &self.records {
            let e = by.entry(r.scheme).or_default();
            if let (Some(x), Some(b)) = (r.rate_bps_hz, r.benchmark_bps_hz) {
                e.0.push(x);
                e.1.push(b);
            }
        }
        by.into_iter()
            .map(|(s, (x, b))| {
                (
                    s,
                    SchemeSummary {
                        rate: Cdf::new(x),
                        benchmark: Cdf::new(b),
                    },
                )
            })
            .collect()
    }

    pub fn rates(&self, scheme: Scheme) -> impl Iterator<Item = &DropRecord> + '_ {
        self.records.iter().filter(move |r| r.scheme == scheme)
    }
}

/// Runs all drops on `workers` threads (0 picks the rayon default). The
/// output does not depend on the worker count.
pub fn run_campaign(cfg: &CampaignConfig, workers: usize) -> Result<CampaignResult> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let per_drop: Vec<Vec<DropRecord>> =
        pool.install(|| (0..cfg.n_drops).into_par_iter().map(|d| run_drop(cfg, d)).collect());
    let mut records: Vec<DropRecord> = per_drop.into_iter().flatten().collect();
    records.sort_by(|a, b| (a.drop_id, a.user_id, a.scheme).cmp(&(b.drop_id, b.user_id, b.scheme)));
    Ok(CampaignResult {
        config: cfg.clone(),
        records,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    JsonLines,
}

pub fn write_records_csv(records: &[DropRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in records {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    if records.is_empty() {
        w.write_record(RECORD_HEADER.split(',')).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_records_csv(path: &Path) -> Result<Vec<DropRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::csv(path, e)))
        .collect()
}

pub fn write_records_jsonl(records: &[DropRecord], path: &Path) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub const CDF_HEADER: &str = "scheme,series,rate_bps_hz,cdf";

fn write_cdf(scheme: Scheme, summary: &SchemeSummary, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(CDF_HEADER.split(',')).map_err(|e| Error::csv(path, e))?;
    for (series, cdf) in [("rate", &summary.rate), ("benchmark", &summary.benchmark)] {
        for (x, p) in cdf.points() {
            w.write_record([scheme.name(), series, &x.to_string(), &p.to_string()])
                .map_err(|e| Error::csv(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub config_hash: String,
    pub master_seed: u64,
    pub n_records: usize,
    pub n_errors: usize,
    pub schemes: Vec<Scheme>,
    pub medians: BTreeMap<String, Option<f64>>,
    pub config: CampaignConfig,
}

/// Writes `records.csv` (or `records.jsonl`), one `cdf_<scheme>.csv` per
/// scheme and `meta.json` into `dir`.
pub fn emit_results(result: &CampaignResult, format: OutputFormat, dir: &Path) -> Result<Meta> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    match format {
        OutputFormat::Csv => write_records_csv(&result.records, &dir.join("records.csv"))?,
        OutputFormat::JsonLines => write_records_jsonl(&result.records, &dir.join("records.jsonl"))?,
    }
    let summaries = result.summaries();
    for (scheme, s) in &summaries {
        write_cdf(*scheme, s, &dir.join(format!("cdf_{}.csv", scheme.name())))?;
    }
    let meta = Meta {
        config_hash: result.config.hash(),
        master_seed: result.config.master_seed,
        n_records: result.records.len(),
        n_errors: result.n_errors(),
        schemes: summaries.keys().copied().collect(),
        medians: summaries
            .iter()
            .map(|(k, v)| (k.name().to_string(), v.rate.median()))
            .collect(),
        config: result.config.clone(),
    };
    let path = dir.join("meta.json");
    fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(meta)
}

/// One estimation trial of the NMSE sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub trial: u64,
    pub pilot_len: u32,
    pub bits: u32,
    pub snr_db: f64,
    pub nmse_db: f64,
}

/// NMSE of the configured estimator over a grid of pilot lengths and
/// training resolutions. Trial `t` reuses the channel of drop `t`, user 0,
/// and the same pilot and noise streams for every grid point.
pub fn estimation_sweep(cfg: &CampaignConfig, pilot_lens: &[u32], bits: &[u32], trials: u64) -> Result<Vec<SweepRecord>> {
    cfg.validate()?;
    let dicts = AngularDictionaries::new(&cfg.user_geometry()?, &cfg.bs_geometry()?);
    let per_trial: Vec<Result<Vec<SweepRecord>>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let (link, ch) = user_channel(cfg, t, 0)?;
            let prior = (ch.beta_linear * ch.beta_linear).max(f64::MIN_POSITIVE);
            let mut out = Vec::new();
            for &n_p in pilot_lens {
                for &b in bits {
                    let path = |s: Stream| [t, 0, s as u64];
                    let mut prng = rng_from(cfg.master_seed, &path(Stream::Pilots));
                    let pilots = gen_pilots(ch.h.ncols(), n_p as usize, 1.0, &mut prng)?;
                    let mut nrng = rng_from(cfg.master_seed, &path(Stream::PilotNoise));
                    let block = PilotBlock::observe(&ch.h, pilots, 1.0, Some(b), &mut nrng)?;
                    let est = match cfg.estimator {
                        Estimator::BussgangLmmse => estimate_bussgang_lmmse(&block, &dicts, prior)?,
                        Estimator::EmGamp => {
                            estimate_gamp_em(&block, &dicts, prior, &GampOptions::default())?.estimate
                        }
                    };
                    out.push(SweepRecord {
                        trial: t,
                        pilot_len: n_p,
                        bits: b,
                        snr_db: link.snr_db,
                        nmse_db: nmse(&ch.h, &est.h_hat)?,
                    });
                }
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::new();
    for r in per_trial {
        all.extend(r?);
    }
    Ok(all)
}

pub fn write_sweep_csv(records: &[SweepRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in records {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
