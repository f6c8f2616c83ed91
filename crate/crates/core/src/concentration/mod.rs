//! Spatial concentration of per-region counts.

mod alternatives;
mod lorenz;
mod powerlaw;
mod zeta;

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

pub use alternatives::{ExponentialFit, LognormalFit};
pub use lorenz::{lorenz, LorenzCurve};
pub use powerlaw::{
    fit_power_law, fit_power_law_at, PowerLawFit, PowerLawSampler, MIN_OBSERVATIONS, MIN_TAIL,
};
pub use zeta::hurwitz_zeta;

use powerlaw::Tally;

pub const DEFAULT_SIGNIFICANCE: f64 = 0.05;
pub const MIN_BOOTSTRAP: usize = 100;

#[derive(Debug, Error)]
pub enum ConcentrationError {
    #[error("all counts are zero")]
    AllZero,
    #[error("{n} positive observations; at least {required} are required")]
    TooFewObservations { n: usize, required: usize },
    #[error("no xmin candidate leaves at least {MIN_TAIL} tail observations")]
    NoValidXmin,
    #[error("alternative fit did not converge: {0}")]
    NoConvergence(String),
    #[error("n_boot must be at least {MIN_BOOTSTRAP}, got {0}")]
    TooFewBootstraps(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed counts table: {0}")]
    BadCounts(String),
    #[error("delimited text: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    Exponential,
    Lognormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Favored {
    PowerLaw,
    Alternative,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LikelihoodRatioResult {
    /// Normalized log-likelihood ratio; positive favors the power law.
    pub statistic: f64,
    pub p_value: f64,
    pub favored: Favored,
    pub alternative: Alternative,
}

impl LikelihoodRatioResult {
    /// Applies the decision rule to a normalized statistic.
    pub fn from_statistic(statistic: f64, alternative: Alternative, significance: f64) -> Self {
        let p_value = erfc_two_sided(statistic);
        let favored = if p_value > significance || statistic == 0.0 {
            Favored::Inconclusive
        } else if statistic > 0.0 {
            Favored::PowerLaw
        } else {
            Favored::Alternative
        };
        Self {
            statistic,
            p_value,
            favored,
            alternative,
        }
    }
}

fn erfc_two_sided(z: f64) -> f64 {
    statrs::function::erf::erfc(z.abs() / std::f64::consts::SQRT_2)
}

fn tail_of(counts: &[u64], xmin: u64) -> Tally {
    Tally::new(counts.iter().copied().filter(|&c| c >= xmin && c > 0))
}

/// Vuong likelihood-ratio test of the fitted power law against `alternative`
/// on the same tail `x >= fit.xmin`.
pub fn likelihood_ratio(
    counts: &[u64],
    fit: &PowerLawFit,
    alternative: Alternative,
    significance: f64,
) -> Result<LikelihoodRatioResult, ConcentrationError> {
    let tail = tail_of(counts, fit.xmin);
    let n = tail.total();
    if n < MIN_TAIL {
        return Err(ConcentrationError::NoValidXmin);
    }
    let alt_log_pmf: Box<dyn Fn(u64) -> f64> = match alternative {
        Alternative::Exponential => {
            let m = ExponentialFit::fit(&tail, fit.xmin)?;
            Box::new(move |x| m.log_pmf(x))
        }
        Alternative::Lognormal => {
            let m = LognormalFit::fit(&tail, fit.xmin)?;
            Box::new(move |x| m.log_pmf(x))
        }
    };
    let log_zeta = hurwitz_zeta(fit.alpha, fit.xmin as f64).ln();
    let diffs: Vec<(f64, usize)> = tail
        .values
        .iter()
        .zip(&tail.counts)
        .map(|(&v, &c)| (-fit.alpha * (v as f64).ln() - log_zeta - alt_log_pmf(v), c))
        .collect();
    let nf = n as f64;
    let ratio: f64 = diffs.iter().map(|&(d, c)| d * c as f64).sum();
    let mean = ratio / nf;
    let var = diffs
        .iter()
        .map(|&(d, c)| c as f64 * (d - mean).powi(2))
        .sum::<f64>()
        / nf;
    let statistic = if var > 0.0 {
        ratio / (var * nf).sqrt()
    } else {
        0.0
    };
    Ok(LikelihoodRatioResult::from_statistic(
        statistic,
        alternative,
        significance,
    ))
}

/// KS distance of the best-fitting alternative on the power-law fit's tail.
pub fn alternative_ks(
    counts: &[u64],
    xmin: u64,
    alternative: Alternative,
) -> Result<f64, ConcentrationError> {
    let tail = tail_of(counts, xmin);
    if tail.total() < MIN_TAIL {
        return Err(ConcentrationError::NoValidXmin);
    }
    Ok(match alternative {
        Alternative::Exponential => {
            let m = ExponentialFit::fit(&tail, xmin)?;
            alternatives::ks_with_cdf(&tail, |x| m.cdf(x))
        }
        Alternative::Lognormal => {
            let m = LognormalFit::fit(&tail, xmin)?;
            alternatives::ks_with_cdf(&tail, |x| m.cdf(x))
        }
    })
}

/// Semi-parametric bootstrap goodness-of-fit p-value.
///
/// Each replicate keeps the sample size: every point is drawn from the
/// fitted power law with probability `n_tail / n`, otherwise uniformly from
/// the observed values below `xmin`. The replicate is refitted (including
/// the `xmin` search) and counted when its KS distance exceeds the observed
/// one. Replicate `i` uses a ChaCha8 stream seeded with `seed + i`.
pub fn gof_bootstrap(
    counts: &[u64],
    fit: &PowerLawFit,
    n_boot: usize,
    seed: u64,
) -> Result<f64, ConcentrationError> {
    if n_boot < MIN_BOOTSTRAP {
        return Err(ConcentrationError::TooFewBootstraps(n_boot));
    }
    let positive: Vec<u64> = counts.iter().copied().filter(|&c| c > 0).collect();
    let below: Vec<u64> = positive.iter().copied().filter(|&c| c < fit.xmin).collect();
    let n = positive.len();
    let p_tail = fit.n_tail as f64 / n as f64;
    let sampler = PowerLawSampler::new(fit.alpha, fit.xmin)?;

    let exceed: usize = (0..n_boot)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let synthetic: Vec<u64> = (0..n)
                .map(|_| {
                    if below.is_empty() || rng.random::<f64>() < p_tail {
                        sampler.sample(&mut rng)
                    } else {
                        below[rng.random_range(0..below.len())]
                    }
                })
                .collect();
            match powerlaw::fit_tally(&Tally::new(synthetic)) {
                Ok(refit) => usize::from(refit.ks_statistic > fit.ks_statistic),
                Err(_) => 0,
            }
        })
        .sum();
    Ok(exceed as f64 / n_boot as f64)
}

/// `{stat, p, favored}` entry of the fit report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LrSummary {
    pub stat: f64,
    pub p: f64,
    pub favored: Favored,
}

impl From<&LikelihoodRatioResult> for LrSummary {
    fn from(r: &LikelihoodRatioResult) -> Self {
        Self {
            stat: r.statistic,
            p: r.p_value,
            favored: r.favored,
        }
    }
}

/// JSON fit report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub alpha: f64,
    pub xmin: u64,
    pub ks: f64,
    pub n_tail: usize,
    pub gini: f64,
    pub lr_exponential: Option<LrSummary>,
    pub lr_lognormal: Option<LrSummary>,
    pub gof_p: Option<f64>,
}

/// Reads `region_id,count` rows; ids must be `0..R` in order.
pub fn read_counts<R: Read>(reader: R) -> Result<Vec<u64>, ConcentrationError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ConcentrationError::BadCounts(format!("missing column {name}")))
    };
    let (i_id, i_count) = (col("region_id")?, col("count")?);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let id: usize = rec
            .get(i_id)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ConcentrationError::BadCounts("bad region_id".into()))?;
        if id != out.len() {
            return Err(ConcentrationError::BadCounts(format!(
                "region ids must be 0..R in order, found {id}"
            )));
        }
        out.push(
            rec.get(i_count)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| {
                    ConcentrationError::BadCounts(format!("bad count for region {id}"))
                })?,
        );
    }
    Ok(out)
}

pub fn write_counts<W: Write>(counts: &[u64], writer: W) -> Result<(), ConcentrationError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["region_id", "count"])?;
    for (i, c) in counts.iter().enumerate() {
        w.write_record([i.to_string(), c.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Lorenz points as `cum_share_regions,cum_share_events`.
pub fn write_lorenz<W: Write>(
    curve: &LorenzCurve<f64>,
    writer: W,
) -> Result<(), ConcentrationError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["cum_share_regions", "cum_share_events"])?;
    for (x, y) in &curve.points {
        w.write_record([x.to_string(), y.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
