//! Competing discrete tail models for the likelihood-ratio comparison.
//! Both are truncated to `x >= xmin` so they share the power law's support.

use statrs::function::erf::erfc;

use super::powerlaw::Tally;
use super::ConcentrationError;

/// `p(x) = (1 - e^-lambda) e^(-lambda (x - xmin))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialFit {
    pub lambda: f64,
    pub xmin: u64,
}

impl ExponentialFit {
    /// Closed-form MLE: `lambda = ln(1 + 1 / mean(x - xmin))`.
    pub(crate) fn fit(tail: &Tally, xmin: u64) -> Result<Self, ConcentrationError> {
        let n = tail.total() as f64;
        let excess: f64 = tail
            .values
            .iter()
            .zip(&tail.counts)
            .map(|(&v, &c)| c as f64 * (v - xmin) as f64)
            .sum::<f64>()
            / n;
        if excess <= 0.0 {
            return Err(ConcentrationError::NoConvergence(
                "exponential: every tail value equals xmin".into(),
            ));
        }
        Ok(Self {
            lambda: (1.0 / excess).ln_1p(),
            xmin,
        })
    }

    pub fn log_pmf(&self, x: u64) -> f64 {
        (-(-self.lambda).exp_m1()).ln() - self.lambda * (x - self.xmin) as f64
    }

    pub fn cdf(&self, x: u64) -> f64 {
        -(-self.lambda * (x - self.xmin + 1) as f64).exp_m1()
    }
}

/// Continuous lognormal mass on `[x, x + 1)`, renormalized to `x >= xmin`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LognormalFit {
    pub mu: f64,
    pub sigma: f64,
    pub xmin: u64,
}

/// Standard normal upper tail `Q(z)`.
fn upper(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

impl LognormalFit {
    fn z(&self, x: f64) -> f64 {
        (x.ln() - self.mu) / self.sigma
    }

    fn log_pmf_with(&self, x: u64, log_norm: f64) -> f64 {
        let (a, b) = (self.z(x as f64), self.z(x as f64 + 1.0));
        // Difference of the tail on whichever side keeps precision.
        let mass = if a > 0.0 {
            upper(a) - upper(b)
        } else {
            upper(-b) - upper(-a)
        };
        if mass > 1e-300 {
            mass.ln() - log_norm
        } else {
            // Midpoint density once the interval mass underflows.
            let m = x as f64 + 0.5;
            let zm = self.z(m);
            -0.5 * zm * zm - (self.sigma * m * (2.0 * std::f64::consts::PI).sqrt()).ln() - log_norm
        }
    }

    fn log_norm(&self) -> f64 {
        upper(self.z(self.xmin as f64)).ln()
    }

    pub fn log_pmf(&self, x: u64) -> f64 {
        self.log_pmf_with(x, self.log_norm())
    }

    pub fn cdf(&self, x: u64) -> f64 {
        1.0 - upper(self.z(x as f64 + 1.0)) / upper(self.z(self.xmin as f64))
    }

    fn log_likelihood(&self, tail: &Tally) -> f64 {
        let log_norm = self.log_norm();
        if !log_norm.is_finite() {
            return f64::NEG_INFINITY;
        }
        tail.values
            .iter()
            .zip(&tail.counts)
            .map(|(&v, &c)| c as f64 * self.log_pmf_with(v, log_norm))
            .sum()
    }

    /// Numerical MLE over `(mu, ln sigma)` by Nelder–Mead, started from the
    /// moments of `ln x`.
    pub(crate) fn fit(tail: &Tally, xmin: u64) -> Result<Self, ConcentrationError> {
        let n = tail.total() as f64;
        let (mut s1, mut s2) = (0.0, 0.0);
        for (&v, &c) in tail.values.iter().zip(&tail.counts) {
            let l = (v as f64).ln();
            s1 += c as f64 * l;
            s2 += c as f64 * l * l;
        }
        let mean = s1 / n;
        let sd = (s2 / n - mean * mean).max(0.0).sqrt().max(0.1);
        let objective = |p: [f64; 2]| {
            if !(-50.0..=50.0).contains(&p[0]) || !(-8.0..=4.0).contains(&p[1]) {
                return f64::INFINITY;
            }
            let m = LognormalFit {
                mu: p[0],
                sigma: p[1].exp(),
                xmin,
            };
            let ll = m.log_likelihood(tail);
            if ll.is_finite() {
                -ll
            } else {
                f64::INFINITY
            }
        };
        let (best, converged) = nelder_mead(objective, [mean, sd.ln()], [0.5, 0.3], 1e-10, 4000);
        let fit = LognormalFit {
            mu: best[0],
            sigma: best[1].exp(),
            xmin,
        };
        if !converged || !fit.log_likelihood(tail).is_finite() {
            return Err(ConcentrationError::NoConvergence(format!(
                "lognormal: optimizer stopped at mu={}, sigma={}",
                fit.mu, fit.sigma
            )));
        }
        Ok(fit)
    }
}

/// Minimizes `f` over two parameters; returns the best vertex and whether
/// the simplex's value spread fell below `ftol`.
fn nelder_mead(
    f: impl Fn([f64; 2]) -> f64,
    start: [f64; 2],
    step: [f64; 2],
    ftol: f64,
    max_iter: usize,
) -> ([f64; 2], bool) {
    let mut simplex = [
        start,
        [start[0] + step[0], start[1]],
        [start[0], start[1] + step[1]],
    ];
    let mut values = simplex.map(&f);
    for _ in 0..max_iter {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.map(|i| simplex[i]);
        values = order.map(|i| values[i]);
        let spread = (values[2] - values[0]).abs();
        if spread <= ftol * (1.0 + values[0].abs()) {
            return (simplex[0], true);
        }
        let centroid = [
            0.5 * (simplex[0][0] + simplex[1][0]),
            0.5 * (simplex[0][1] + simplex[1][1]),
        ];
        let along = |t: f64| {
            [
                centroid[0] + t * (simplex[2][0] - centroid[0]),
                centroid[1] + t * (simplex[2][1] - centroid[1]),
            ]
        };
        let reflected = along(-1.0);
        let fr = f(reflected);
        if fr < values[0] {
            let expanded = along(-2.0);
            let fe = f(expanded);
            if fe < fr {
                simplex[2] = expanded;
                values[2] = fe;
            } else {
                simplex[2] = reflected;
                values[2] = fr;
            }
        } else if fr < values[1] {
            simplex[2] = reflected;
            values[2] = fr;
        } else {
            let contracted = if fr < values[2] {
                along(-0.5)
            } else {
                along(0.5)
            };
            let fc = f(contracted);
            if fc < values[2].min(fr) {
                simplex[2] = contracted;
                values[2] = fc;
            } else {
                for i in 1..3 {
                    simplex[i] = [
                        0.5 * (simplex[0][0] + simplex[i][0]),
                        0.5 * (simplex[0][1] + simplex[i][1]),
                    ];
                    values[i] = f(simplex[i]);
                }
            }
        }
    }
    let best = (0..3)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("three vertices");
    (simplex[best], false)
}

/// KS distance between a tail and any discrete model given by its CDF,
/// checked at both ends of every flat step of the empirical CDF.
pub(crate) fn ks_with_cdf(tail: &Tally, cdf: impl Fn(u64) -> f64) -> f64 {
    let n = tail.total() as f64;
    let mut cum = 0usize;
    let mut d: f64 = 0.0;
    for k in 0..tail.values.len() {
        cum += tail.counts[k];
        let emp = cum as f64 / n;
        d = d.max((emp - cdf(tail.values[k])).abs());
        if k + 1 < tail.values.len() {
            d = d.max((emp - cdf(tail.values[k + 1] - 1)).abs());
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Geometric, LogNormal};

    #[test]
    fn exponential_pmf_sums_to_one() {
        let m = ExponentialFit {
            lambda: 0.3,
            xmin: 4,
        };
        let s: f64 = (4..500).map(|x| m.log_pmf(x).exp()).sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!((m.cdf(10) - (4..=10).map(|x| m.log_pmf(x).exp()).sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn lognormal_pmf_sums_to_one() {
        let m = LognormalFit {
            mu: 1.0,
            sigma: 0.8,
            xmin: 2,
        };
        let s: f64 = (2..200_000).map(|x| m.log_pmf(x).exp()).sum();
        assert!((s - 1.0).abs() < 1e-6, "s={s}");
    }

    #[test]
    fn exponential_recovers_geometric_rate() {
        let p: f64 = 0.2;
        let g = Geometric::new(p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tail = Tally::new((0..50_000).map(|_| g.sample(&mut rng) + 1));
        let fit = ExponentialFit::fit(&tail, 1).unwrap();
        let lambda = -(1.0 - p).ln();
        assert!((fit.lambda - lambda).abs() < 0.01, "{fit:?} vs {lambda}");
    }

    #[test]
    fn lognormal_recovers_parameters() {
        let d = LogNormal::<f64>::new(3.0, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let tail = Tally::new(
            (0..20_000)
                .map(|_| d.sample(&mut rng).floor() as u64)
                .filter(|&x| x >= 1),
        );
        let fit = LognormalFit::fit(&tail, 1).unwrap();
        assert!((fit.mu - 3.0).abs() < 0.03, "{fit:?}");
        assert!((fit.sigma - 0.5).abs() < 0.03, "{fit:?}");
    }

    #[test]
    fn degenerate_exponential_tail_fails() {
        let tail = Tally::new(vec![3u64; 20]);
        assert!(ExponentialFit::fit(&tail, 3).is_err());
    }

    #[test]
    fn nelder_mead_rosenbrock() {
        let (p, ok) = nelder_mead(
            |p| (1.0 - p[0]).powi(2) + 100.0 * (p[1] - p[0] * p[0]).powi(2),
            [-1.2, 1.0],
            [0.5, 0.5],
            1e-14,
            10_000,
        );
        assert!(ok);
        assert!(
            (p[0] - 1.0).abs() < 1e-3 && (p[1] - 1.0).abs() < 1e-3,
            "{p:?}"
        );
    }
}
