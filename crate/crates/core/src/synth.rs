//! Seeded generators for synthetic datasets with known ground truth.
//!
//! Every generator draws from a single `ChaCha8Rng` seeded with
//! `seed_from_u64(seed)`; the algorithm name travels with the scenario so
//! that outputs can be reproduced elsewhere.

use std::path::Path;

use chrono::{Days, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::concentration::PowerLawSampler;
use crate::rhythms::{TimeSeries, WEEK};
use crate::tessellate::RegionSeriesSet;
use crate::Scalar;

pub const RNG_ALGORITHM: &str = "ChaCha8Rng (rand_chacha 0.9) seed_from_u64";
/// First week start of every synthetic series (a Monday).
pub const EPOCH: (i32, u32, u32) = (2010, 1, 4);
pub const AR1_BURN_IN: usize = 1000;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("scenario file: {0}")]
    Scenario(String),
}

fn invalid(msg: impl Into<String>) -> SynthError {
    SynthError::InvalidParameter(msg.into())
}

pub fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(EPOCH.0, EPOCH.1, EPOCH.2).expect("valid epoch")
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// i.i.d. discrete power law on `x >= xmin` by inverse CDF of the zeta
/// tail.
pub fn gen_powerlaw_counts(
    alpha: f64,
    xmin: u64,
    n: usize,
    seed: u64,
) -> Result<Vec<u64>, SynthError> {
    if !(alpha > 1.0 && alpha.is_finite()) {
        return Err(invalid(format!("alpha must be > 1, got {alpha}")));
    }
    if xmin < 1 {
        return Err(invalid("xmin must be >= 1"));
    }
    let sampler = PowerLawSampler::new(alpha, xmin).map_err(|e| invalid(e.to_string()))?;
    let mut r = rng(seed);
    Ok((0..n).map(|_| sampler.sample(&mut r)).collect())
}

/// `x_t = a x_{t-1} + e_t` with standard normal innovations, after
/// discarding [`AR1_BURN_IN`] steps.
pub fn gen_ar1<T: Scalar>(a: f64, n: usize, seed: u64) -> Result<TimeSeries<T>, SynthError> {
    if !(a.abs() < 1.0) {
        return Err(invalid(format!("|a| must be < 1, got {a}")));
    }
    let mut r = rng(seed);
    let mut x = 0.0f64;
    let mut values = Vec::with_capacity(n);
    for t in 0..AR1_BURN_IN + n {
        let e: f64 = StandardNormal.sample(&mut r);
        x = a * x + e;
        if t >= AR1_BURN_IN {
            values.push(T::of(x));
        }
    }
    TimeSeries::weekly(values, epoch()).map_err(|e| invalid(e.to_string()))
}

/// `amplitude sin(2 pi t dt / period) + N(0, noise_sd^2)`, weekly.
pub fn gen_seasonal<T: Scalar>(
    period_years: f64,
    amplitude: f64,
    noise_sd: f64,
    n: usize,
    seed: u64,
) -> Result<TimeSeries<T>, SynthError> {
    if !(period_years > 0.0) || (n as f64) * WEEK < 2.0 * period_years {
        return Err(invalid(format!(
            "period {period_years} years is not resolvable in {n} weeks"
        )));
    }
    let noise = Normal::new(0.0, noise_sd).map_err(|_| invalid(format!("noise_sd {noise_sd}")))?;
    let mut r = rng(seed);
    let values = (0..n)
        .map(|t| {
            let phase = std::f64::consts::TAU * t as f64 * WEEK / period_years;
            T::of(amplitude * phase.sin() + noise.sample(&mut r))
        })
        .collect();
    TimeSeries::weekly(values, epoch()).map_err(|e| invalid(e.to_string()))
}

fn default_baseline_alpha() -> f64 {
    2.5
}

/// A city whose regions carry an annual cycle only while a window passes
/// over them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TravelingWave {
    #[serde(rename = "R")]
    pub r: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub window_weeks: usize,
    /// Regions the wave front crosses per year; 0 means no travel, every
    /// region periodic throughout.
    pub wave_speed_regions_per_year: f64,
    pub amplitude: f64,
    pub noise_sd: f64,
    /// Optional per-region mean level: `baseline * k_i` with `k_i` drawn
    /// from a discrete power law, giving the regions unequal totals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<f64>,
    #[serde(default = "default_baseline_alpha")]
    pub baseline_alpha: f64,
}

impl TravelingWave {
    pub fn new(
        r: usize,
        n: usize,
        window_weeks: usize,
        wave_speed: f64,
        amplitude: f64,
        noise_sd: f64,
    ) -> Self {
        Self {
            r,
            n,
            window_weeks,
            wave_speed_regions_per_year: wave_speed,
            amplitude,
            noise_sd,
            baseline: None,
            baseline_alpha: default_baseline_alpha(),
        }
    }

    /// Week at which region `i`'s window opens.
    pub fn window_start(&self, i: usize) -> usize {
        if self.wave_speed_regions_per_year == 0.0 {
            return 0;
        }
        let weeks = i as f64 / (self.wave_speed_regions_per_year * WEEK);
        (weeks.round() as usize) % self.n
    }

    /// Whether region `i` carries the cycle at week `t`.
    pub fn active(&self, i: usize, t: usize) -> bool {
        if self.wave_speed_regions_per_year == 0.0 || self.window_weeks >= self.n {
            return true;
        }
        (t + self.n - self.window_start(i)) % self.n < self.window_weeks
    }

    fn validate(&self) -> Result<(), SynthError> {
        if self.r < 4 {
            return Err(invalid(format!("R must be >= 4, got {}", self.r)));
        }
        if self.window_weeks == 0 || self.window_weeks > self.n {
            return Err(invalid(format!(
                "window_weeks must be in 1..=N ({}), got {}",
                self.n, self.window_weeks
            )));
        }
        if !(self.wave_speed_regions_per_year >= 0.0
            && self.wave_speed_regions_per_year.is_finite())
        {
            return Err(invalid("wave speed must be finite and non-negative"));
        }
        if !(self.noise_sd >= 0.0) || !self.amplitude.is_finite() {
            return Err(invalid(
                "amplitude must be finite and noise_sd non-negative",
            ));
        }
        if let Some(b) = self.baseline {
            if !(b >= 0.0 && b.is_finite()) || !(self.baseline_alpha > 1.0) {
                return Err(invalid(
                    "baseline must be non-negative and baseline_alpha > 1",
                ));
            }
        }
        Ok(())
    }
}

/// Region `i` is `level_i + amplitude sin(2 pi t / 52) 1[active] + noise`.
/// All cycles share one phase, so the city sum keeps a steady annual
/// component while each region's cycle comes and goes.
pub fn gen_traveling_wave_city<T: Scalar>(
    p: &TravelingWave,
    seed: u64,
) -> Result<RegionSeriesSet<T>, SynthError> {
    p.validate()?;
    let mut r = rng(seed);
    let levels: Vec<f64> = match p.baseline {
        Some(b) => {
            let sampler =
                PowerLawSampler::new(p.baseline_alpha, 1).map_err(|e| invalid(e.to_string()))?;
            (0..p.r)
                .map(|_| b * sampler.sample(&mut r) as f64)
                .collect()
        }
        None => vec![0.0; p.r],
    };
    let noise =
        Normal::new(0.0, p.noise_sd).map_err(|_| invalid(format!("noise_sd {}", p.noise_sd)))?;
    let regions = (0..p.r)
        .map(|i| {
            (0..p.n)
                .map(|t| {
                    let cycle = if p.active(i, t) {
                        p.amplitude * (std::f64::consts::TAU * t as f64 * WEEK).sin()
                    } else {
                        0.0
                    };
                    T::of(levels[i] + cycle + noise.sample(&mut r))
                })
                .collect()
        })
        .collect();
    let weeks = (0..p.n)
        .map(|t| epoch() + Days::new(7 * t as u64))
        .collect();
    Ok(RegionSeriesSet::from_regions(weeks, regions))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "parameters", rename_all = "snake_case")]
pub enum Scenario {
    PowerlawCounts {
        alpha: f64,
        xmin: u64,
        n: usize,
    },
    Ar1 {
        a: f64,
        n: usize,
    },
    Seasonal {
        period_years: f64,
        amplitude: f64,
        noise_sd: f64,
        n: usize,
    },
    TravelingWaveCity(TravelingWave),
}

fn default_rng() -> String {
    RNG_ALGORITHM.to_string()
}

/// JSON scenario file, e.g.
/// `{"seed": 7, "kind": "ar1", "parameters": {"a": 0.7, "n": 520}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub seed: u64,
    #[serde(flatten)]
    pub scenario: Scenario,
    #[serde(default = "default_rng")]
    pub rng: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioOutput {
    Counts(Vec<u64>),
    Series(TimeSeries<f64>),
    City(RegionSeriesSet<f64>),
}

impl ScenarioSpec {
    pub fn new(seed: u64, scenario: Scenario) -> Self {
        Self {
            seed,
            scenario,
            rng: default_rng(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        let spec: Self =
            serde_json::from_str(text).map_err(|e| SynthError::Scenario(e.to_string()))?;
        if spec.rng != RNG_ALGORITHM {
            return Err(SynthError::Scenario(format!(
                "unsupported generator `{}`; this build provides `{RNG_ALGORITHM}`",
                spec.rng
            )));
        }
        Ok(spec)
    }

    pub fn from_path(path: &Path) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SynthError::Scenario(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn generate(&self) -> Result<ScenarioOutput, SynthError> {
        Ok(match &self.scenario {
            Scenario::PowerlawCounts { alpha, xmin, n } => {
                ScenarioOutput::Counts(gen_powerlaw_counts(*alpha, *xmin, *n, self.seed)?)
            }
            Scenario::Ar1 { a, n } => ScenarioOutput::Series(gen_ar1(*a, *n, self.seed)?),
            Scenario::Seasonal {
                period_years,
                amplitude,
                noise_sd,
                n,
            } => ScenarioOutput::Series(gen_seasonal(
                *period_years,
                *amplitude,
                *noise_sd,
                *n,
                self.seed,
            )?),
            Scenario::TravelingWaveCity(p) => {
                ScenarioOutput::City(gen_traveling_wave_city(p, self.seed)?)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concentration::hurwitz_zeta;
    use crate::rhythms::lag1;

    #[test]
    fn powerlaw_mean_matches_zeta_ratio() {
        let x = gen_powerlaw_counts(2.5, 1, 100_000, 3).unwrap();
        let n = x.len() as f64;
        let mean = x.iter().map(|&v| v as f64).sum::<f64>() / n;
        let expected = hurwitz_zeta(1.5, 1.0) / hurwitz_zeta(2.5, 1.0);
        // The variance is infinite at alpha = 2.5; use the sample spread.
        let var = x.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        assert!(
            (mean - expected).abs() < 3.0 * (var / n).sqrt(),
            "{mean} vs {expected}"
        );
    }

    #[test]
    fn steep_tail_sits_at_xmin() {
        let x = gen_powerlaw_counts(10.0, 1, 10_000, 1).unwrap();
        let at_min = x.iter().filter(|&&v| v == 1).count();
        assert!(at_min as f64 / 10_000.0 > 0.99);
        let x = gen_powerlaw_counts(10.0, 3, 1000, 1).unwrap();
        assert!(x.iter().all(|&v| v >= 3));
    }

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(
            gen_powerlaw_counts(2.2, 2, 500, 9).unwrap(),
            gen_powerlaw_counts(2.2, 2, 500, 9).unwrap()
        );
        assert_eq!(
            gen_ar1::<f64>(0.5, 300, 4).unwrap(),
            gen_ar1::<f64>(0.5, 300, 4).unwrap()
        );
        assert_ne!(
            gen_ar1::<f64>(0.5, 300, 4).unwrap(),
            gen_ar1::<f64>(0.5, 300, 5).unwrap()
        );
    }

    #[test]
    fn invalid_parameters() {
        assert!(gen_powerlaw_counts(1.0, 1, 10, 0).is_err());
        assert!(gen_powerlaw_counts(2.0, 0, 10, 0).is_err());
        assert!(gen_ar1::<f64>(1.0, 10, 0).is_err());
        assert!(gen_seasonal::<f64>(3.0, 1.0, 0.1, 200, 0).is_err());
        let mut p = TravelingWave::new(3, 520, 156, 4.0, 1.0, 0.5);
        assert!(gen_traveling_wave_city::<f64>(&p, 0).is_err());
        p.r = 8;
        p.window_weeks = 600;
        assert!(gen_traveling_wave_city::<f64>(&p, 0).is_err());
    }

    #[test]
    fn ar1_autocorrelation() {
        let white = gen_ar1::<f64>(0.0, 10_000, 1).unwrap();
        let r1 = lag1(&white.values);
        assert!(r1 < 3.0 / 100.0, "r1={r1}");
        let red = gen_ar1::<f64>(0.7, 10_000, 2).unwrap();
        let r1 = lag1(&red.values);
        assert!((0.65..=0.75).contains(&r1), "r1={r1}");
    }

    #[test]
    fn seasonal_extremes() {
        let pure = gen_seasonal::<f64>(1.0, 2.0, 0.0, 104, 1).unwrap();
        for (t, v) in pure.values.iter().enumerate() {
            let expected = 2.0 * (std::f64::consts::TAU * t as f64 / 52.0).sin();
            assert!((v - expected).abs() < 1e-12);
        }
        let noise = gen_seasonal::<f64>(1.0, 0.0, 1.0, 104, 1).unwrap();
        let reference = Normal::new(0.0, 1.0).unwrap();
        let mut r = rng(1);
        for v in &noise.values {
            assert_eq!(*v, reference.sample(&mut r));
        }
    }

    #[test]
    fn traveling_wave_geometry() {
        let p = TravelingWave::new(40, 520, 156, 4.0, 1.0, 0.0);
        assert_eq!(p.window_start(0), 0);
        assert_eq!(p.window_start(1), 13);
        assert_eq!(p.window_start(39), 507);
        let set = gen_traveling_wave_city::<f64>(&p, 0).unwrap();
        // Region 39's window wraps past the end.
        assert!(p.active(39, 519) && p.active(39, 100) && !p.active(39, 200));
        for t in 0..520 {
            let active = (0..40).filter(|&i| p.active(i, t)).count();
            assert_eq!(active, 12, "t={t}");
        }
        assert_eq!(set.regions[5][0], 0.0);
        let full = TravelingWave {
            window_weeks: 520,
            ..p.clone()
        };
        let still = TravelingWave {
            wave_speed_regions_per_year: 0.0,
            ..p
        };
        assert_eq!(
            gen_traveling_wave_city::<f64>(&full, 0).unwrap(),
            gen_traveling_wave_city::<f64>(&still, 0).unwrap()
        );
    }

    #[test]
    fn baseline_levels() {
        let mut p = TravelingWave::new(20, 200, 52, 4.0, 1.0, 0.1);
        p.baseline = Some(10.0);
        let set = gen_traveling_wave_city::<f64>(&p, 3).unwrap();
        let totals = set.region_totals();
        assert!(totals.iter().all(|&t| t > 200.0 * 9.0));
    }

    #[test]
    fn scenario_json_roundtrip() {
        let text = r#"{"seed": 7, "kind": "ar1", "parameters": {"a": 0.7, "n": 520}}"#;
        let spec = ScenarioSpec::from_json(text).unwrap();
        assert_eq!(spec.scenario, Scenario::Ar1 { a: 0.7, n: 520 });
        assert_eq!(spec.rng, RNG_ALGORITHM);
        let back = ScenarioSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(back, spec);

        let wave = r#"{"seed": 1, "kind": "traveling_wave_city", "parameters":
            {"R": 40, "N": 520, "window_weeks": 156, "wave_speed_regions_per_year": 4,
             "amplitude": 1, "noise_sd": 0.5}}"#;
        let spec = ScenarioSpec::from_json(wave).unwrap();
        match spec.generate().unwrap() {
            ScenarioOutput::City(set) => assert_eq!((set.n_regions(), set.n_weeks()), (40, 520)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(ScenarioSpec::from_json(
            r#"{"seed": 1, "kind": "ar1", "parameters": {"a": 0.1, "n": 5}, "rng": "mt19937"}"#
        )
        .is_err());
        assert!(
            ScenarioSpec::from_json(r#"{"seed": 1, "kind": "nope", "parameters": {}}"#).is_err()
        );
    }
}
