//! Wavelet analysis of weekly series.
//!
//! Morlet continuous wavelet transform computed in the frequency domain,
//! global spectrum and scale-averaged band power tested against an AR(1)
//! red-noise null, band reconstruction, and the composed band power of a
//! set of regions.
//!
//! Conventions follow the usual Morlet recipe: `omega0 = 6`, scales
//! `s_j = s0 2^(j dj)` in years, coefficients normalized so that white noise
//! of variance `v` has expected `|W|^2 = v` at every scale, and the
//! reconstruction constant `C_delta = 0.776`. With those, for white noise
//! `(dj dt / (C_delta N)) sum_{j,n} |W(s_j, n)|^2 / s_j` is close to the
//! series variance.

use std::io::{Read, Write};

use chrono::{Days, NaiveDate};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::tessellate::RegionSeriesSet;
use crate::Scalar;

/// One week in years.
pub const WEEK: f64 = 1.0 / 52.0;
/// Two years of weekly data.
pub const MIN_LENGTH: usize = 104;
pub const TREND_WINDOW: usize = 53;
pub const OMEGA0: f64 = 6.0;
pub const C_DELTA: f64 = 0.776;
/// Decorrelation factor for time averaging.
pub const GAMMA: f64 = 2.32;
/// Decorrelation factor for scale averaging.
pub const DJ0: f64 = 0.60;
/// Longest run of missing weeks that is interpolated.
pub const MAX_GAP: usize = 2;
/// Circannual band, Fourier periods in years.
pub const CIRCANNUAL: (f64, f64) = (0.8, 1.1);

#[derive(Debug, Error)]
pub enum RhythmsError {
    #[error("series has {n} steps, need at least {min}")]
    TooShort { n: usize, min: usize },
    #[error("series has zero variance after trend removal")]
    ZeroVariance,
    #[error("non-finite value at step {0}")]
    NonFinite(usize),
    #[error("gap of {len} missing steps starting at step {start} exceeds {MAX_GAP}")]
    GapTooLong { start: usize, len: usize },
    #[error("invalid scale parameters: {0}")]
    BadScales(String),
    #[error("scales span periods {min_period:.3}..{max_period:.3} years, not covering {lo}..{hi}")]
    ScalesMissBand {
        lo: f64,
        hi: f64,
        min_period: f64,
        max_period: f64,
    },
    #[error("no scale has a period inside {lo}..{hi} years")]
    EmptyBand { lo: f64, hi: f64 },
    #[error("invalid band: {0}")]
    BadBand(String),
    #[error("need at least 2 regions with valid series, got {0}")]
    TooFewRegions(usize),
    #[error("malformed series table: {0}")]
    BadTable(String),
    #[error("delimited text: {0}")]
    Csv(#[from] csv::Error),
}

/// Regularly sampled series; `dt` in years, `t0` the first week start.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries<T> {
    pub values: Vec<T>,
    pub dt: T,
    pub t0: NaiveDate,
    /// Moving-average window already removed from the values, if any. The
    /// red-noise null accounts for it.
    pub trend_window: Option<usize>,
}

impl<T: Scalar> TimeSeries<T> {
    pub fn new(values: Vec<T>, dt: T, t0: NaiveDate) -> Result<Self, RhythmsError> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(RhythmsError::NonFinite(i));
        }
        Ok(Self {
            values,
            dt,
            t0,
            trend_window: None,
        })
    }

    pub fn weekly(values: Vec<T>, t0: NaiveDate) -> Result<Self, RhythmsError> {
        Self::new(values, T::of(WEEK), t0)
    }

    /// Weekly series from values that may contain NaN gaps.
    pub fn weekly_with_gaps(values: &[T], t0: NaiveDate) -> Result<Self, RhythmsError> {
        Self::weekly(fill_gaps(values)?, t0)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn week_start(&self, n: usize) -> NaiveDate {
        week_start(self.t0, n)
    }

    /// CSV `week_start,value`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), RhythmsError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["week_start", "value"])?;
        for (n, v) in self.values.iter().enumerate() {
            w.write_record([self.week_start(n).to_string(), v.to_string()])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads `week_start,value`; empty cells are gaps and are filled when
    /// short.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, RhythmsError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.get(0) != Some("week_start") || header.get(1) != Some("value") {
            return Err(RhythmsError::BadTable(
                "expected columns week_start,value".into(),
            ));
        }
        let mut t0 = None;
        let mut values = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let week = rec.get(0).unwrap_or("");
            let date = NaiveDate::parse_from_str(week, "%Y-%m-%d")
                .map_err(|_| RhythmsError::BadTable(format!("bad week_start `{week}`")))?;
            t0.get_or_insert(date);
            values.push(match rec.get(1).unwrap_or("") {
                "" | "NA" | "NaN" | "nan" => T::nan(),
                s => s
                    .parse::<f64>()
                    .map(T::of)
                    .map_err(|_| RhythmsError::BadTable(format!("bad value `{s}`")))?,
            });
        }
        let t0 = t0.ok_or_else(|| RhythmsError::BadTable("no rows".into()))?;
        Self::weekly_with_gaps(&values, t0)
    }
}

fn week_start(t0: NaiveDate, n: usize) -> NaiveDate {
    t0 + Days::new(7 * n as u64)
}

/// Linearly interpolates runs of at most [`MAX_GAP`] missing values (NaN).
/// Runs touching either end are filled with the nearest observed value.
pub fn fill_gaps<T: Scalar>(values: &[T]) -> Result<Vec<T>, RhythmsError> {
    let mut out = values.to_vec();
    let n = out.len();
    let mut i = 0;
    while i < n {
        if !out[i].is_nan() {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && out[i].is_nan() {
            i += 1;
        }
        let len = i - start;
        if len > MAX_GAP {
            return Err(RhythmsError::GapTooLong { start, len });
        }
        match (start.checked_sub(1).map(|k| out[k]), out.get(i).copied()) {
            (Some(a), Some(b)) => {
                let step = (b - a) / T::of_usize(len + 1);
                for k in 0..len {
                    out[start + k] = a + step * T::of_usize(k + 1);
                }
            }
            (Some(v), None) | (None, Some(v)) => out[start..i].iter_mut().for_each(|x| *x = v),
            (None, None) => return Err(RhythmsError::GapTooLong { start, len }),
        }
    }
    if let Some(k) = out.iter().position(|v| !v.is_finite()) {
        return Err(RhythmsError::NonFinite(k));
    }
    Ok(out)
}

/// Subtracts a centered moving average of [`TREND_WINDOW`] steps. Near the
/// edges the window shrinks symmetrically so it stays centered.
pub fn remove_trend<T: Scalar>(values: &[T]) -> Vec<T> {
    let n = values.len();
    let half = TREND_WINDOW / 2;
    (0..n)
        .map(|i| {
            let h = half.min(i).min(n - 1 - i);
            let window = &values[i - h..=i + h];
            let mean = window.iter().copied().sum::<T>() / T::of_usize(window.len());
            values[i] - mean
        })
        .collect()
}

/// Trend removal followed by standardization to zero mean and unit
/// variance.
pub fn detrend<T: Scalar>(y: &TimeSeries<T>) -> Result<TimeSeries<T>, RhythmsError> {
    let n = y.len();
    if n < MIN_LENGTH {
        return Err(RhythmsError::TooShort { n, min: MIN_LENGTH });
    }
    let residual = remove_trend(&y.values);
    let (mean, var) = mean_var(&residual);
    let sd = var.sqrt();
    let magnitude = y.values.iter().fold(T::one(), |m, v| m.max(v.abs()));
    if !(sd > T::epsilon().sqrt() * magnitude) {
        return Err(RhythmsError::ZeroVariance);
    }
    Ok(TimeSeries {
        values: residual.iter().map(|&r| (r - mean) / sd).collect(),
        dt: y.dt,
        t0: y.t0,
        trend_window: Some(TREND_WINDOW),
    })
}

/// Mean and population variance.
fn mean_var<T: Scalar>(x: &[T]) -> (T, T) {
    let n = T::of_usize(x.len());
    let mean = x.iter().copied().sum::<T>() / n;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    (mean, var)
}

/// Pearson lag-1 autocorrelation, floored at 0.
pub fn lag1<T: Scalar>(x: &[T]) -> T {
    if x.len() < 3 {
        return T::zero();
    }
    let (a, b) = (&x[..x.len() - 1], &x[1..]);
    let n = T::of_usize(a.len());
    let ma = a.iter().copied().sum::<T>() / n;
    let mb = b.iter().copied().sum::<T>() / n;
    let (mut sab, mut saa, mut sbb) = (T::zero(), T::zero(), T::zero());
    for (&u, &v) in a.iter().zip(b) {
        sab = sab + (u - ma) * (v - mb);
        saa = saa + (u - ma) * (u - ma);
        sbb = sbb + (v - mb) * (v - mb);
    }
    if saa <= T::zero() || sbb <= T::zero() {
        return T::zero();
    }
    (sab / (saa * sbb).sqrt()).max(T::zero())
}

/// Normalized AR(1) spectrum at the given Fourier period.
pub fn red_noise<T: Scalar>(a: T, dt: T, period: T) -> T {
    let one = T::one();
    let c = (T::TAU() * dt / period).cos();
    (one - a * a) / (one + a * a - (a + a) * c)
}

/// Squared gain of "subtract the centered `window`-point mean" at frequency
/// `f` in cycles per step.
fn trend_residual_gain(window: usize, f: f64) -> f64 {
    let x = std::f64::consts::PI * f;
    let h = if x.sin().abs() < 1e-12 {
        1.0
    } else {
        (window as f64 * x).sin() / (window as f64 * x.sin())
    };
    (1.0 - h) * (1.0 - h)
}

const NULL_GRID: usize = 2048;

/// AR(1) red-noise null, optionally seen through the trend filter.
///
/// Without a filter this is the plain AR(1) spectrum with `a` the lag-1
/// autocorrelation. When the series was detrended, the filter removes
/// low-frequency power and lowers the lag-1 autocorrelation, so `a` is the
/// AR(1) coefficient whose filtered process has the observed lag-1
/// autocorrelation, and the null spectrum is the filtered AR(1) spectrum
/// rescaled to the observed variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RedNoise {
    pub a: f64,
    pub variance: f64,
    pub trend_window: Option<usize>,
    /// Variance of the filtered unit AR(1) process; 1 without a filter.
    #[serde(skip)]
    filtered_variance: f64,
}

impl RedNoise {
    pub fn estimate<T: Scalar>(y: &TimeSeries<T>) -> Self {
        let (_, var) = mean_var(&y.values);
        let r1 = lag1(&y.values).f64();
        let variance = var.f64();
        match y.trend_window {
            None => Self {
                a: r1,
                variance,
                trend_window: None,
                filtered_variance: 1.0,
            },
            Some(window) => {
                let gains: Vec<(f64, f64)> = (0..NULL_GRID)
                    .map(|k| {
                        let f = (k as f64 + 0.5) / (2 * NULL_GRID) as f64;
                        (
                            trend_residual_gain(window, f),
                            (std::f64::consts::TAU * f).cos(),
                        )
                    })
                    .collect();
                let moments = |a: f64| {
                    let (mut v, mut c) = (0.0, 0.0);
                    for &(g, cos) in &gains {
                        let p = g * (1.0 - a * a) / (1.0 + a * a - 2.0 * a * cos);
                        v += p;
                        c += p * cos;
                    }
                    (v / NULL_GRID as f64, c / v)
                };
                let (mut lo, mut hi) = (0.0, 0.999);
                let a = if r1 <= moments(lo).1 {
                    lo
                } else if r1 >= moments(hi).1 {
                    hi
                } else {
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        if moments(mid).1 < r1 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    0.5 * (lo + hi)
                };
                Self {
                    a,
                    variance,
                    trend_window: Some(window),
                    filtered_variance: moments(a).0,
                }
            }
        }
    }

    /// Expected `|W|^2` at a Fourier period (years) for step `dt`.
    pub fn spectrum(&self, dt: f64, period: f64) -> f64 {
        let base = red_noise(self.a, dt, period);
        match self.trend_window {
            None => self.variance * base,
            Some(w) => {
                self.variance * base * trend_residual_gain(w, dt / period) / self.filtered_variance
            }
        }
    }
}

/// Fourier period of a Morlet scale divided by the scale.
pub fn fourier_factor<T: Scalar>() -> T {
    let w0 = T::of(OMEGA0);
    T::of(4.0) * T::PI() / (w0 + (T::of(2.0) + w0 * w0).sqrt())
}

/// `s_j = s0 2^(j dj)` for `j = 0..=j_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScaleParams<T> {
    pub s0: T,
    pub dj: T,
    pub j_max: usize,
}

impl<T: Scalar> ScaleParams<T> {
    /// `s0 = dt`, `dj = 0.1`, largest scale at least four years.
    ///
    /// Starting one octave below the customary `2 dt` lets the smallest
    /// scales cover frequencies up to Nyquist, so a full-band reconstruction
    /// keeps the variance of white noise.
    pub fn standard(dt: T) -> Self {
        let s0 = dt;
        let dj = T::of(0.1);
        let j_max = ((T::of(4.0) / s0).log2() / dj)
            .ceil()
            .to_usize()
            .unwrap_or(0);
        Self { s0, dj, j_max }
    }

    pub fn scales(&self) -> Vec<T> {
        (0..=self.j_max)
            .map(|j| self.s0 * (T::of_usize(j) * self.dj).exp2())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveletField<T> {
    /// `coefficients[j][n]`.
    pub coefficients: Vec<Vec<Complex<T>>>,
    /// Strictly increasing, in years.
    pub scales: Vec<T>,
    /// Fourier-equivalent periods of `scales`.
    pub periods: Vec<T>,
    /// Largest scale unaffected by the edges at each step.
    pub coi: Vec<T>,
    pub omega0: T,
    pub dt: T,
    pub dj: T,
    pub t0: NaiveDate,
    /// Red-noise null estimated from the input.
    pub null: RedNoise,
    /// Population variance of the input.
    pub variance: T,
}

impl<T: Scalar> WaveletField<T> {
    pub fn n_times(&self) -> usize {
        self.coi.len()
    }

    pub fn n_scales(&self) -> usize {
        self.scales.len()
    }

    pub fn power(&self, j: usize, n: usize) -> T {
        self.coefficients[j][n].norm_sqr()
    }

    /// Whether every scale up to `scale` is clear of edge effects at `n`.
    pub fn coi_valid(&self, n: usize, scale: T) -> bool {
        scale <= self.coi[n]
    }

    /// Indices of scales whose period lies in `[lo, hi]`.
    pub fn band_indices(&self, band: (T, T)) -> Result<Vec<usize>, RhythmsError> {
        let (lo, hi) = band;
        if !(lo < hi) || lo < T::zero() {
            return Err(RhythmsError::BadBand(format!("{lo}:{hi}")));
        }
        let idx: Vec<usize> = (0..self.n_scales())
            .filter(|&j| self.periods[j] >= lo && self.periods[j] <= hi)
            .collect();
        if idx.is_empty() {
            return Err(RhythmsError::EmptyBand {
                lo: lo.f64(),
                hi: hi.f64(),
            });
        }
        Ok(idx)
    }
}

/// Morlet transform by the convolution theorem, with the mean-removed series
/// zero-padded to the next power of two.
///
/// Errors when the scale grid does not reach across the circannual band.
pub fn cwt<T: Scalar>(
    y: &TimeSeries<T>,
    params: &ScaleParams<T>,
) -> Result<WaveletField<T>, RhythmsError> {
    cwt_covering(y, params, (T::of(CIRCANNUAL.0), T::of(CIRCANNUAL.1)))
}

/// As [`cwt`], checking coverage of `band` (Fourier periods, years).
pub fn cwt_covering<T: Scalar>(
    y: &TimeSeries<T>,
    params: &ScaleParams<T>,
    band: (T, T),
) -> Result<WaveletField<T>, RhythmsError> {
    let n = y.len();
    if n < 4 {
        return Err(RhythmsError::TooShort { n, min: 4 });
    }
    if !(params.s0 > T::zero()) || !(params.dj > T::zero()) || !(y.dt > T::zero()) {
        return Err(RhythmsError::BadScales(format!(
            "s0={}, dj={}, dt={}",
            params.s0, params.dj, y.dt
        )));
    }
    let scales = params.scales();
    let ff = fourier_factor::<T>();
    let periods: Vec<T> = scales.iter().map(|&s| s * ff).collect();
    let (min_period, max_period) = (periods[0], periods[periods.len() - 1]);
    if min_period > band.0 || max_period < band.1 {
        return Err(RhythmsError::ScalesMissBand {
            lo: band.0.f64(),
            hi: band.1.f64(),
            min_period: min_period.f64(),
            max_period: max_period.f64(),
        });
    }

    let (mean, variance) = mean_var(&y.values);
    let centered: Vec<T> = y.values.iter().map(|&v| v - mean).collect();
    let padded = n.next_power_of_two();
    let mut spectrum: Vec<Complex<T>> = centered
        .iter()
        .map(|&v| Complex::new(v, T::zero()))
        .chain(std::iter::repeat(Complex::new(T::zero(), T::zero())))
        .take(padded)
        .collect();
    let mut planner = FftPlanner::<T>::new();
    planner.plan_fft_forward(padded).process(&mut spectrum);
    let inverse = planner.plan_fft_inverse(padded);

    let dt = y.dt;
    let np = T::of_usize(padded);
    let omega: Vec<T> = (0..padded)
        .map(|m| {
            let k = if m <= padded / 2 {
                T::of_usize(m)
            } else {
                -T::of_usize(padded - m)
            };
            T::TAU() * k / (np * dt)
        })
        .collect();
    let w0 = T::of(OMEGA0);
    let norm0 = T::PI().powf(T::of(-0.25));
    let half = T::of(0.5);
    let mut buf = vec![Complex::new(T::zero(), T::zero()); padded];
    let coefficients = scales
        .iter()
        .map(|&s| {
            let amp = (T::TAU() * s / dt).sqrt() * norm0 / np;
            for (m, b) in buf.iter_mut().enumerate() {
                *b = if omega[m] > T::zero() {
                    let z = s * omega[m] - w0;
                    spectrum[m] * (amp * (-half * z * z).exp())
                } else {
                    Complex::new(T::zero(), T::zero())
                };
            }
            inverse.process(&mut buf);
            buf[..n].to_vec()
        })
        .collect();

    let s_max = scales[scales.len() - 1];
    let coi = (0..n)
        .map(|i| (dt * T::of_usize(i.min(n - 1 - i)) / T::SQRT_2()).min(s_max))
        .collect();
    Ok(WaveletField {
        coefficients,
        scales,
        periods,
        coi,
        omega0: w0,
        dt,
        dj: params.dj,
        t0: y.t0,
        null: RedNoise::estimate(y),
        variance,
    })
}

fn chi2_quantile(p: f64, dof: f64) -> f64 {
    ChiSquared::new(dof)
        .map(|d| d.inverse_cdf(p))
        .unwrap_or(f64::NAN)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlobalSpectrum<T> {
    pub scales: Vec<T>,
    pub periods: Vec<T>,
    /// Time average of `|W|^2` per scale.
    pub power: Vec<T>,
    /// Red-noise threshold per scale.
    pub significance: Vec<T>,
    /// Scales whose power exceeds the threshold.
    pub peak_scales: Vec<T>,
}

impl<T: Scalar> GlobalSpectrum<T> {
    pub fn is_peak(&self, j: usize) -> bool {
        self.power[j] > self.significance[j]
    }

    /// Whether some scale with period in `[lo, hi]` is significant.
    pub fn significant_in(&self, lo: T, hi: T) -> bool {
        (0..self.power.len())
            .any(|j| self.periods[j] >= lo && self.periods[j] <= hi && self.is_peak(j))
    }

    /// Period of the largest power.
    pub fn dominant_period(&self) -> T {
        let j = (0..self.power.len())
            .max_by(|&a, &b| {
                self.power[a]
                    .partial_cmp(&self.power[b])
                    .expect("finite power")
            })
            .unwrap_or(0);
        self.periods[j]
    }

    /// CSV `scale_years,power,significance`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), RhythmsError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["scale_years", "power", "significance"])?;
        for j in 0..self.scales.len() {
            w.write_record([
                self.scales[j].to_string(),
                self.power[j].to_string(),
                self.significance[j].to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Time-averaged spectrum tested against the AR(1) spectrum of `y` scaled by
/// `chi2_nu(1 - alpha) / nu`, where `nu = 2 sqrt(1 + (N dt / (gamma s))^2)`.
pub fn global_spectrum<T: Scalar>(
    w: &WaveletField<T>,
    y: &TimeSeries<T>,
    alpha: f64,
) -> GlobalSpectrum<T> {
    let n = w.n_times();
    let null = RedNoise::estimate(y);
    let span = T::of_usize(n) * w.dt;
    let power: Vec<T> = w
        .coefficients
        .iter()
        .map(|row| row.iter().map(|c| c.norm_sqr()).sum::<T>() / T::of_usize(n))
        .collect();
    let significance: Vec<T> = (0..w.n_scales())
        .map(|j| {
            let ratio = span / (T::of(GAMMA) * w.scales[j]);
            let dof = (T::of(2.0) * (T::one() + ratio * ratio).sqrt()).f64();
            let chi = T::of(chi2_quantile(1.0 - alpha, dof) / dof);
            T::of(null.spectrum(w.dt.f64(), w.periods[j].f64())) * chi
        })
        .collect();
    let peak_scales = (0..w.n_scales())
        .filter(|&j| power[j] > significance[j])
        .map(|j| w.scales[j])
        .collect();
    GlobalSpectrum {
        scales: w.scales.clone(),
        periods: w.periods.clone(),
        power,
        significance,
        peak_scales,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandPower<T> {
    /// Fourier periods in years.
    pub band: (T, T),
    /// `(dj dt / C_delta) sum_j |W(s_j, n)|^2 / s_j` over the band.
    pub series: Vec<T>,
    pub threshold: T,
    /// Above threshold and clear of the cone of influence.
    pub significant: Vec<bool>,
    pub coi_valid: Vec<bool>,
    #[serde(skip)]
    pub t0: NaiveDate,
}

impl<T: Scalar> BandPower<T> {
    /// Fraction of COI-valid steps that are significant.
    pub fn significant_fraction(&self) -> f64 {
        let valid = self.coi_valid.iter().filter(|&&v| v).count();
        if valid == 0 {
            return 0.0;
        }
        self.significant.iter().filter(|&&s| s).count() as f64 / valid as f64
    }

    /// CSV `week_start,power,threshold,significant,coi_valid`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), RhythmsError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "week_start",
            "power",
            "threshold",
            "significant",
            "coi_valid",
        ])?;
        for n in 0..self.series.len() {
            w.write_record([
                week_start(self.t0, n).to_string(),
                self.series[n].to_string(),
                self.threshold.to_string(),
                self.significant[n].to_string(),
                self.coi_valid[n].to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Scale-averaged power over the scales whose period lies in `band`, with
/// the AR(1) threshold for the averaged degrees of freedom
/// `nu = 2 n_a S_avg / S_mid sqrt(1 + (n_a dj / dj0)^2)`.
pub fn band_power<T: Scalar>(
    w: &WaveletField<T>,
    band: (T, T),
    alpha: f64,
) -> Result<BandPower<T>, RhythmsError> {
    let idx = w.band_indices(band)?;
    let factor = w.dj * w.dt / T::of(C_DELTA);
    let series: Vec<T> = (0..w.n_times())
        .map(|n| factor * idx.iter().map(|&j| w.power(j, n) / w.scales[j]).sum::<T>())
        .collect();

    let na = T::of_usize(idx.len());
    let inv_sum = idx.iter().map(|&j| T::one() / w.scales[j]).sum::<T>();
    let s_avg = T::one() / inv_sum;
    let (s1, s2) = (w.scales[idx[0]], w.scales[idx[idx.len() - 1]]);
    let s_mid = (s1 * s2).sqrt();
    let spread = na * w.dj / T::of(DJ0);
    let dof = (T::of(2.0) * na * s_avg / s_mid * (T::one() + spread * spread).sqrt()).f64();
    let chi = T::of(chi2_quantile(1.0 - alpha, dof) / dof);
    let null = idx
        .iter()
        .map(|&j| T::of(w.null.spectrum(w.dt.f64(), w.periods[j].f64())) / w.scales[j])
        .sum::<T>();
    let threshold = factor * null * chi;

    let coi_valid: Vec<bool> = (0..w.n_times()).map(|n| w.coi_valid(n, s2)).collect();
    let significant = (0..w.n_times())
        .map(|n| coi_valid[n] && series[n] > threshold)
        .collect();
    Ok(BandPower {
        band,
        series,
        threshold,
        significant,
        coi_valid,
        t0: w.t0,
    })
}

/// Inverse transform restricted to the scales whose period lies in `band`:
/// `x_n = dj sqrt(dt) / (C_delta psi0(0)) sum_j Re W(s_j, n) / sqrt(s_j)`.
/// The result has zero mean.
pub fn reconstruct_band<T: Scalar>(
    w: &WaveletField<T>,
    band: (T, T),
) -> Result<TimeSeries<T>, RhythmsError> {
    let idx = w.band_indices(band)?;
    let psi0 = T::PI().powf(T::of(-0.25));
    let factor = w.dj * w.dt.sqrt() / (T::of(C_DELTA) * psi0);
    let values = (0..w.n_times())
        .map(|n| {
            factor
                * idx
                    .iter()
                    .map(|&j| w.coefficients[j][n].re / w.scales[j].sqrt())
                    .sum::<T>()
        })
        .collect();
    Ok(TimeSeries {
        values,
        dt: w.dt,
        t0: w.t0,
        trend_window: None,
    })
}

/// Every scale of the field.
pub fn full_band<T: Scalar>() -> (T, T) {
    (T::zero(), T::infinity())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RhythmOptions {
    /// Fourier periods in years.
    pub band: (f64, f64),
    /// Significance level of the red-noise tests.
    pub alpha: f64,
}

impl Default for RhythmOptions {
    fn default() -> Self {
        Self {
            band: CIRCANNUAL,
            alpha: 0.05,
        }
    }
}

impl RhythmOptions {
    pub fn validate(&self) -> Result<(), RhythmsError> {
        let (lo, hi) = self.band;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(RhythmsError::BadBand(format!("{lo}:{hi}")));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(RhythmsError::BadBand(format!(
                "significance level {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesAnalysis<T> {
    pub detrended: TimeSeries<T>,
    pub field: WaveletField<T>,
    pub spectrum: GlobalSpectrum<T>,
    pub band: BandPower<T>,
}

/// Detrend, transform with [`ScaleParams::standard`], then test the global
/// spectrum and the band.
pub fn analyze_series<T: Scalar>(
    y: &TimeSeries<T>,
    opts: &RhythmOptions,
) -> Result<SeriesAnalysis<T>, RhythmsError> {
    opts.validate()?;
    let band = (T::of(opts.band.0), T::of(opts.band.1));
    let detrended = detrend(y)?;
    let field = cwt_covering(&detrended, &ScaleParams::standard(y.dt), band)?;
    let spectrum = global_spectrum(&field, &detrended, opts.alpha);
    let band = band_power(&field, band, opts.alpha)?;
    Ok(SeriesAnalysis {
        detrended,
        field,
        spectrum,
        band,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComposedPower {
    pub week_starts: Vec<NaiveDate>,
    /// Number of regions with a significant band at each step.
    pub c_b: Vec<usize>,
    /// Number of analyzed regions clear of the cone of influence at each
    /// step.
    pub regions_valid: Vec<usize>,
    /// Per-region significance masks; `None` for rejected regions.
    pub masks: Vec<Option<Vec<bool>>>,
    /// Regions excluded from the analysis, with the reason.
    pub rejected: Vec<(usize, String)>,
}

impl ComposedPower {
    /// Coefficient of variation (population) of `c_b` over steps where the
    /// regions are clear of the cone of influence.
    pub fn interior_cv(&self) -> Option<f64> {
        let vals: Vec<f64> = (0..self.c_b.len())
            .filter(|&t| self.regions_valid[t] > 0)
            .map(|t| self.c_b[t] as f64)
            .collect();
        if vals.is_empty() {
            return None;
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        if mean <= 0.0 {
            return None;
        }
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        Some(var.sqrt() / mean)
    }

    /// CSV `week_start,c_b,regions_valid`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), RhythmsError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["week_start", "c_b", "regions_valid"])?;
        for t in 0..self.c_b.len() {
            w.write_record([
                self.week_starts[t].to_string(),
                self.c_b[t].to_string(),
                self.regions_valid[t].to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Band significance for every region; regions are analyzed in parallel.
///
/// Regions with long gaps or no variance are rejected and listed rather
/// than failing the whole set.
pub fn composed_power<T: Scalar>(
    set: &RegionSeriesSet<T>,
    opts: &RhythmOptions,
) -> Result<ComposedPower, RhythmsError> {
    opts.validate()?;
    let t = set.n_weeks();
    let t0 = *set.week_starts.first().ok_or(RhythmsError::TooShort {
        n: 0,
        min: MIN_LENGTH,
    })?;
    let outcomes: Vec<Result<BandPower<T>, RhythmsError>> = set
        .regions
        .par_iter()
        .map(|values| {
            let y = TimeSeries::weekly_with_gaps(values, t0)?;
            Ok(analyze_series(&y, opts)?.band)
        })
        .collect();
    let mut masks = Vec::with_capacity(outcomes.len());
    let mut rejected = Vec::new();
    let mut c_b = vec![0usize; t];
    let mut regions_valid = vec![0usize; t];
    for (id, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(band) => {
                for n in 0..t {
                    c_b[n] += usize::from(band.significant[n]);
                    regions_valid[n] += usize::from(band.coi_valid[n]);
                }
                masks.push(Some(band.significant));
            }
            Err(
                e @ (RhythmsError::GapTooLong { .. }
                | RhythmsError::ZeroVariance
                | RhythmsError::NonFinite(_)),
            ) => {
                rejected.push((id, e.to_string()));
                masks.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let analyzed = masks.iter().filter(|m| m.is_some()).count();
    if analyzed < 2 {
        return Err(RhythmsError::TooFewRegions(analyzed));
    }
    Ok(ComposedPower {
        week_starts: set.week_starts.clone(),
        c_b,
        regions_valid,
        masks,
        rejected,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Run {
    pub region: usize,
    pub start: usize,
    pub length: usize,
}

/// Maximal runs of `true`, as `(start, length)`.
pub fn runs(mask: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &m) in mask.iter().chain(std::iter::once(&false)).enumerate() {
        match (m, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i - s));
                start = None;
            }
            _ => {}
        }
    }
    out
}

/// Significant runs pooled over regions, in region then time order.
pub fn significant_durations(masks: &[Option<Vec<bool>>]) -> Vec<Run> {
    masks
        .iter()
        .enumerate()
        .filter_map(|(region, m)| m.as_ref().map(|m| (region, m)))
        .flat_map(|(region, m)| {
            runs(m).into_iter().map(move |(start, length)| Run {
                region,
                start,
                length,
            })
        })
        .collect()
}

pub fn median_duration(runs: &[Run]) -> Option<f64> {
    let mut lengths: Vec<usize> = runs.iter().map(|r| r.length).collect();
    if lengths.is_empty() {
        return None;
    }
    lengths.sort_unstable();
    let m = lengths.len();
    Some(if m % 2 == 1 {
        lengths[m / 2] as f64
    } else {
        (lengths[m / 2 - 1] + lengths[m / 2]) as f64 / 2.0
    })
}

/// CSV `region_id,run_start,run_length_weeks`.
pub fn write_durations_csv<W: Write>(
    runs: &[Run],
    week_starts: &[NaiveDate],
    writer: W,
) -> Result<(), RhythmsError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["region_id", "run_start", "run_length_weeks"])?;
    for r in runs {
        w.write_record([
            r.region.to_string(),
            week_starts[r.start].to_string(),
            r.length.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
