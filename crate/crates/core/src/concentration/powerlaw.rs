//! Discrete power-law fitting: `p(x) = x^(-alpha) / zeta(alpha, xmin)` for
//! integer `x >= xmin`, with `xmin` chosen by minimum Kolmogorov–Smirnov
//! distance.

use rand::Rng;
use serde::Serialize;

use super::zeta::hurwitz_zeta;
use super::ConcentrationError;

pub const MIN_OBSERVATIONS: usize = 50;
pub const MIN_TAIL: usize = 10;
const ALPHA_LOWER: f64 = 1.0 + 1e-6;
const ALPHA_UPPER: f64 = 30.0;
const ALPHA_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub alpha: f64,
    pub xmin: u64,
    pub ks_statistic: f64,
    /// Observations `>= xmin`.
    pub n_tail: usize,
    pub log_likelihood: f64,
}

impl PowerLawFit {
    /// Asymptotic standard error `(alpha - 1) / sqrt(n_tail)`.
    pub fn std_error(&self) -> f64 {
        (self.alpha - 1.0) / (self.n_tail as f64).sqrt()
    }

    pub fn is_valid(&self) -> bool {
        self.alpha > 1.0 && self.xmin >= 1 && self.n_tail >= MIN_TAIL
    }

    pub fn log_pmf(&self, x: u64) -> f64 {
        -self.alpha * (x as f64).ln() - hurwitz_zeta(self.alpha, self.xmin as f64).ln()
    }
}

/// Sorted distinct values with their multiplicities.
#[derive(Debug, Clone)]
pub(crate) struct Tally {
    pub values: Vec<u64>,
    pub counts: Vec<usize>,
}

impl Tally {
    pub fn new(data: impl IntoIterator<Item = u64>) -> Self {
        let mut sorted: Vec<u64> = data.into_iter().collect();
        sorted.sort_unstable();
        let mut values = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for v in sorted {
            if values.last() == Some(&v) {
                *counts.last_mut().expect("paired with values") += 1;
            } else {
                values.push(v);
                counts.push(1);
            }
        }
        Self { values, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Sub-tally of values `>= xmin`.
    pub fn tail(&self, xmin: u64) -> Tally {
        let start = self.values.partition_point(|&v| v < xmin);
        Tally {
            values: self.values[start..].to_vec(),
            counts: self.counts[start..].to_vec(),
        }
    }
}

/// Maximizes `-n ln zeta(alpha, xmin) - alpha * sum_ln` by golden section.
fn mle_alpha(n: usize, sum_ln: f64, xmin: u64) -> (f64, f64) {
    let q = xmin as f64;
    let nf = n as f64;
    let loglik = |a: f64| -nf * hurwitz_zeta(a, q).ln() - a * sum_ln;
    let (a, f) = golden_max(loglik, ALPHA_LOWER, ALPHA_UPPER, ALPHA_TOL);
    (a, f)
}

pub(crate) fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

/// `zeta(alpha, v)` for every distinct tail value, summing downward from the
/// largest value so that no cancellation occurs.
fn zeta_at_values(alpha: f64, values: &[u64]) -> Vec<f64> {
    const MAX_GAP_SUM: u64 = 64;
    let mut z = vec![0.0; values.len()];
    let last = values.len() - 1;
    z[last] = hurwitz_zeta(alpha, values[last] as f64);
    for k in (0..last).rev() {
        let (v, next) = (values[k], values[k + 1]);
        z[k] = if next - v <= MAX_GAP_SUM {
            let mut acc = z[k + 1];
            for m in (v..next).rev() {
                acc += (m as f64).powf(-alpha);
            }
            acc
        } else {
            hurwitz_zeta(alpha, v as f64)
        };
    }
    z
}

/// KS distance between the empirical tail and the fitted discrete model,
/// taking the supremum over all integers (both ends of each flat step).
pub(crate) fn ks_distance(tail: &Tally, alpha: f64) -> f64 {
    let z = zeta_at_values(alpha, &tail.values);
    let z0 = hurwitz_zeta(alpha, tail.values[0] as f64);
    let n = tail.total() as f64;
    let mut cum = 0usize;
    let mut d: f64 = 0.0;
    for k in 0..tail.values.len() {
        cum += tail.counts[k];
        let emp = cum as f64 / n;
        let v = tail.values[k] as f64;
        let model_at = 1.0 - (z[k] - v.powf(-alpha)) / z0;
        d = d.max((emp - model_at).abs());
        if k + 1 < tail.values.len() {
            let model_before_next = 1.0 - z[k + 1] / z0;
            d = d.max((emp - model_before_next).abs());
        }
    }
    d
}

fn fit_tail(tail: &Tally, xmin: u64) -> PowerLawFit {
    let n = tail.total();
    let sum_ln: f64 = tail
        .values
        .iter()
        .zip(&tail.counts)
        .map(|(&v, &c)| c as f64 * (v as f64).ln())
        .sum();
    let (alpha, log_likelihood) = mle_alpha(n, sum_ln, xmin);
    PowerLawFit {
        alpha,
        xmin,
        ks_statistic: ks_distance(tail, alpha),
        n_tail: n,
        log_likelihood,
    }
}

fn positive_tally(counts: &[u64]) -> Result<Tally, ConcentrationError> {
    let tally = Tally::new(counts.iter().copied().filter(|&c| c > 0));
    let n = tally.total();
    if n < MIN_OBSERVATIONS {
        return Err(ConcentrationError::TooFewObservations {
            n,
            required: MIN_OBSERVATIONS,
        });
    }
    Ok(tally)
}

/// Fits the discrete power law, scanning every observed value as `xmin`
/// candidate and keeping the one with the smallest KS distance. Zero counts
/// are ignored.
pub fn fit_power_law(counts: &[u64]) -> Result<PowerLawFit, ConcentrationError> {
    let tally = positive_tally(counts)?;
    fit_tally(&tally)
}

pub(crate) fn fit_tally(tally: &Tally) -> Result<PowerLawFit, ConcentrationError> {
    let mut best: Option<PowerLawFit> = None;
    let mut remaining = tally.total();
    for (k, &xmin) in tally.values.iter().enumerate() {
        if remaining < MIN_TAIL {
            break;
        }
        let tail = Tally {
            values: tally.values[k..].to_vec(),
            counts: tally.counts[k..].to_vec(),
        };
        let fit = fit_tail(&tail, xmin);
        if best
            .as_ref()
            .is_none_or(|b| fit.ks_statistic < b.ks_statistic)
        {
            best = Some(fit);
        }
        remaining -= tally.counts[k];
    }
    best.ok_or(ConcentrationError::NoValidXmin)
}

/// Fits alpha with `xmin` held fixed.
pub fn fit_power_law_at(counts: &[u64], xmin: u64) -> Result<PowerLawFit, ConcentrationError> {
    let tally = positive_tally(counts)?;
    let tail = tally.tail(xmin.max(1));
    if tail.total() < MIN_TAIL {
        return Err(ConcentrationError::NoValidXmin);
    }
    Ok(fit_tail(&tail, xmin.max(1)))
}

/// Inverse-CDF sampler for the discrete power law on `x >= xmin`.
#[derive(Debug, Clone)]
pub struct PowerLawSampler {
    alpha: f64,
    xmin: u64,
    zeta_xmin: f64,
    /// `ccdf[i] = P(X >= xmin + i)` for the first table entries.
    ccdf: Vec<f64>,
}

impl PowerLawSampler {
    const TABLE: usize = 256;
    const MAX_VALUE: u64 = 1 << 52;

    pub fn new(alpha: f64, xmin: u64) -> Result<Self, ConcentrationError> {
        if !(alpha > 1.0 && alpha.is_finite()) || xmin < 1 {
            return Err(ConcentrationError::InvalidParameter(format!(
                "power law needs alpha > 1 and xmin >= 1, got alpha={alpha}, xmin={xmin}"
            )));
        }
        let zeta_xmin = hurwitz_zeta(alpha, xmin as f64);
        let mut ccdf = Vec::with_capacity(Self::TABLE + 1);
        let mut z = hurwitz_zeta(alpha, (xmin + Self::TABLE as u64) as f64);
        let mut rev = vec![z];
        for i in (0..Self::TABLE as u64).rev() {
            z += ((xmin + i) as f64).powf(-alpha);
            rev.push(z);
        }
        ccdf.extend(rev.into_iter().rev().map(|z| z / zeta_xmin));
        Ok(Self {
            alpha,
            xmin,
            zeta_xmin,
            ccdf,
        })
    }

    fn ccdf_at(&self, x: u64) -> f64 {
        let i = x - self.xmin;
        if (i as usize) < self.ccdf.len() {
            self.ccdf[i as usize]
        } else {
            hurwitz_zeta(self.alpha, x as f64) / self.zeta_xmin
        }
    }

    /// Returns the `x` with `P(X >= x + 1) < u <= P(X >= x)`.
    pub fn quantile(&self, u: f64) -> u64 {
        let table = &self.ccdf;
        if u > table[table.len() - 1] {
            // First index whose ccdf falls below u, minus one.
            let idx = table.partition_point(|&c| c >= u);
            return self.xmin + idx as u64 - 1;
        }
        // x lies at or beyond the end of the table: double, then bisect.
        let mut lo = self.xmin + (table.len() as u64 - 1);
        let mut hi = lo.max(1) * 2;
        while self.ccdf_at(hi) >= u {
            lo = hi;
            if hi >= Self::MAX_VALUE {
                return Self::MAX_VALUE;
            }
            hi *= 2;
        }
        // Invariant: ccdf(lo) >= u > ccdf(hi).
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.ccdf_at(mid) >= u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u = 1.0 - rng.random::<f64>();
        self.quantile(u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn draw(alpha: f64, xmin: u64, n: usize, seed: u64) -> Vec<u64> {
        let s = PowerLawSampler::new(alpha, xmin).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| s.sample(&mut rng)).collect()
    }

    #[test]
    fn quantile_brackets_are_exact() {
        let s = PowerLawSampler::new(2.5, 1).unwrap();
        let z = hurwitz_zeta(2.5, 1.0);
        for x in [1u64, 2, 5, 200, 256, 257, 300, 10_000] {
            let at = hurwitz_zeta(2.5, x as f64) / z;
            let next = hurwitz_zeta(2.5, (x + 1) as f64) / z;
            let u = 0.5 * (at + next);
            assert_eq!(s.quantile(u), x, "x={x}");
            if x > 256 {
                assert_eq!(s.quantile(at), x, "x={x} at the closed end");
            }
        }
    }

    #[test]
    fn pmf_matches_frequencies() {
        let xs = draw(2.0, 1, 200_000, 3);
        let z = hurwitz_zeta(2.0, 1.0);
        for x in 1..=4u64 {
            let p = (x as f64).powf(-2.0) / z;
            let f = xs.iter().filter(|&&v| v == x).count() as f64 / xs.len() as f64;
            let sd = (p * (1.0 - p) / xs.len() as f64).sqrt();
            assert!((f - p).abs() < 4.0 * sd, "x={x} f={f} p={p}");
        }
    }

    #[test]
    fn recovers_alpha_with_fixed_xmin() {
        let xs = draw(2.5, 1, 50_000, 5);
        let fit = fit_power_law_at(&xs, 1).unwrap();
        assert!((fit.alpha - 2.5).abs() < 3.0 * fit.std_error(), "{fit:?}");
        assert_eq!(fit.n_tail, 50_000);
    }

    #[test]
    fn recovers_alpha_and_xmin_above_one() {
        let xs = draw(2.2, 5, 20_000, 9);
        let fit = fit_power_law(&xs).unwrap();
        assert!((fit.alpha - 2.2).abs() < 0.1, "{fit:?}");
        assert!(fit.xmin >= 5);
        assert!(fit.is_valid());
    }

    #[test]
    fn too_few_observations() {
        let err = fit_power_law(&[1, 2, 3]).unwrap_err();
        assert!(matches!(
            err,
            ConcentrationError::TooFewObservations { n: 3, .. }
        ));
        let zeros = vec![0u64; 100];
        assert!(fit_power_law(&zeros).is_err());
    }

    #[test]
    fn ks_of_the_generating_model_is_small() {
        let xs = draw(3.0, 1, 20_000, 1);
        let tally = Tally::new(xs);
        let d = ks_distance(&tally, 3.0);
        // Kolmogorov 99.9% critical value 1.95 / sqrt(n).
        assert!(d < 1.95 / (20_000f64).sqrt(), "d={d}");
    }

    #[test]
    fn golden_section_finds_parabola_peak() {
        let (x, _) = golden_max(|x| -(x - 2.345).powi(2), 1.0, 10.0, 1e-9);
        assert!((x - 2.345).abs() < 1e-8);
    }

    #[test]
    fn invalid_sampler_parameters() {
        assert!(PowerLawSampler::new(1.0, 1).is_err());
        assert!(PowerLawSampler::new(2.0, 0).is_err());
    }
}
