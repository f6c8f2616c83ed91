//! Hoeffding's D test of independence between paired city-level scalars.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::rankdyn::midranks;
use crate::Scalar;

pub const MIN_SAMPLE: usize = 5;
pub const MIN_PERMUTATIONS: usize = 999;

#[derive(Debug, Error)]
pub enum IndependenceError {
    #[error("Hoeffding's D needs at least {MIN_SAMPLE} pairs, got {0}")]
    TooFewPairs(usize),
    #[error("x, y and labels must have equal lengths ({x}, {y}, {labels})")]
    LengthMismatch { x: usize, y: usize, labels: usize },
    #[error("n_perm must be at least {MIN_PERMUTATIONS}, got {0}")]
    TooFewPermutations(usize),
    #[error("non-finite value in sample")]
    NonFinite,
    #[error("malformed pairs table: {0}")]
    BadTable(String),
    #[error("delimited text: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample<T> {
    pub x: Vec<T>,
    pub y: Vec<T>,
    pub labels: Vec<String>,
}

impl<T: Scalar> PairedSample<T> {
    pub fn new(x: Vec<T>, y: Vec<T>, labels: Vec<String>) -> Result<Self, IndependenceError> {
        if x.len() != y.len() || x.len() != labels.len() {
            return Err(IndependenceError::LengthMismatch {
                x: x.len(),
                y: y.len(),
                labels: labels.len(),
            });
        }
        if x.len() < MIN_SAMPLE {
            return Err(IndependenceError::TooFewPairs(x.len()));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(IndependenceError::NonFinite);
        }
        Ok(Self { x, y, labels })
    }

    /// Unlabeled sample; cities are numbered.
    pub fn unlabeled(x: Vec<T>, y: Vec<T>) -> Result<Self, IndependenceError> {
        let labels = (0..x.len()).map(|i| i.to_string()).collect();
        Self::new(x, y, labels)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Reads `label,x,y` rows.
    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self, IndependenceError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        let col = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| IndependenceError::BadTable(format!("missing column {name}")))
        };
        let (i_label, i_x, i_y) = (col("label")?, col("x")?, col("y")?);
        let (mut labels, mut x, mut y) = (Vec::new(), Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec?;
            let num = |i: usize| {
                rec.get(i)
                    .and_then(|s| s.parse::<f64>().ok())
                    .map(T::of)
                    .ok_or_else(|| {
                        IndependenceError::BadTable(format!("bad number in row {rec:?}"))
                    })
            };
            labels.push(rec.get(i_label).unwrap_or("").to_string());
            x.push(num(i_x)?);
            y.push(num(i_y)?);
        }
        Self::new(x, y, labels)
    }
}

/// Hoeffding's D with midranks, scaled so that `D = 1` for a strictly
/// monotone relation without ties; the range is `[-0.5, 1]`.
///
/// `D = 30 [(n-2)(n-3) D1 + D2 - 2(n-2) D3] / [n(n-1)(n-2)(n-3)(n-4)]` with
/// `D1 = sum (Q-1)(Q-2)`, `D2 = sum (R-1)(R-2)(S-1)(S-2)` and
/// `D3 = sum (R-2)(S-2)(Q-1)`, where `R`, `S` are the marginal ranks and `Q`
/// the bivariate rank (1 + points strictly below-left, ties counted half
/// or a quarter).
pub fn hoeffding_d<T: Scalar>(s: &PairedSample<T>) -> Result<T, IndependenceError> {
    if s.len() < MIN_SAMPLE {
        return Err(IndependenceError::TooFewPairs(s.len()));
    }
    Ok(d_statistic(&s.x, &s.y))
}

fn d_statistic<T: Scalar>(x: &[T], y: &[T]) -> T {
    let n = x.len();
    let r = midranks(x);
    let s = midranks(y);
    let (quarter, half, one, two) = (T::of(0.25), T::of(0.5), T::one(), T::of(2.0));
    let q: Vec<T> = (0..n)
        .map(|i| {
            let mut acc = one;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let (bx, ex) = (x[j] < x[i], x[j] == x[i]);
                let (by, ey) = (y[j] < y[i], y[j] == y[i]);
                if bx && by {
                    acc = acc + one;
                } else if ex && ey {
                    acc = acc + quarter;
                } else if ex && by || bx && ey {
                    acc = acc + half;
                }
            }
            acc
        })
        .collect();
    let (mut d1, mut d2, mut d3) = (T::zero(), T::zero(), T::zero());
    for i in 0..n {
        d1 = d1 + (q[i] - one) * (q[i] - two);
        d2 = d2 + (r[i] - one) * (r[i] - two) * (s[i] - one) * (s[i] - two);
        d3 = d3 + (r[i] - two) * (s[i] - two) * (q[i] - one);
    }
    let nf = T::of_usize(n);
    let numerator = (nf - two) * (nf - T::of(3.0)) * d1 + d2 - two * (nf - two) * d3;
    let denominator = nf * (nf - one) * (nf - two) * (nf - T::of(3.0)) * (nf - T::of(4.0));
    T::of(30.0) * numerator / denominator
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HoeffdingTest {
    #[serde(rename = "D")]
    pub d: f64,
    pub p_value: f64,
    pub n: usize,
    pub n_perm: usize,
    /// `reject` when `p_value <= alpha`, else `fail_to_reject`.
    pub decision: String,
}

/// Permutation p-value `(1 + #{D_perm >= D_obs}) / (n_perm + 1)`.
///
/// Permutation `i` shuffles `y` with a ChaCha8 stream seeded `seed + i`.
/// A constant `x` or `y` carries no dependence information; its p-value is
/// 1 by convention.
pub fn hoeffding_test<T: Scalar>(
    s: &PairedSample<T>,
    n_perm: usize,
    seed: u64,
) -> Result<f64, IndependenceError> {
    if n_perm < MIN_PERMUTATIONS {
        return Err(IndependenceError::TooFewPermutations(n_perm));
    }
    let observed = hoeffding_d(s)?;
    let constant = |v: &[T]| v.iter().all(|&a| a == v[0]);
    if constant(&s.x) || constant(&s.y) {
        return Ok(1.0);
    }
    let at_least: usize = (0..n_perm)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let mut y = s.y.clone();
            y.shuffle(&mut rng);
            usize::from(d_statistic(&s.x, &y) >= observed)
        })
        .sum();
    Ok((1 + at_least) as f64 / (n_perm + 1) as f64)
}

/// Runs the permutation test and packages the JSON summary.
pub fn hoeffding_report<T: Scalar>(
    s: &PairedSample<T>,
    n_perm: usize,
    seed: u64,
    alpha: f64,
) -> Result<HoeffdingTest, IndependenceError> {
    let d = hoeffding_d(s)?.f64();
    let p_value = hoeffding_test(s, n_perm, seed)?;
    Ok(HoeffdingTest {
        d,
        p_value,
        n: s.len(),
        n_perm,
        decision: if p_value <= alpha {
            "reject".into()
        } else {
            "fail_to_reject".into()
        },
    })
}
