//! Temporal stability of the spatial crime rank.
//!
//! Each week the regions are ordered by descending count; the entropy of
//! which region holds a given rank position, normalized by `ln R`, is 0 when
//! one region always sits there and 1 under uniform turnover.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::tessellate::RegionSeriesSet;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum RankError {
    #[error("need at least {required} {what}, got {got}")]
    TooSmall {
        what: &'static str,
        required: usize,
        got: usize,
    },
    #[error("delimited text: {0}")]
    Csv(#[from] csv::Error),
}

/// `ranks[t][i]` is the region id at rank position `i` (0 = most events) in
/// week `t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankMatrix {
    pub ranks: Vec<Vec<usize>>,
}

impl RankMatrix {
    pub fn n_weeks(&self) -> usize {
        self.ranks.len()
    }

    pub fn n_regions(&self) -> usize {
        self.ranks.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyProfile<T> {
    /// Normalized entropy per rank position, in `[0, 1]`.
    pub h: Vec<T>,
    pub mean_h: T,
}

/// Orders regions by descending value each week; ties go to the lower id.
/// Missing values rank last.
pub fn weekly_ranks<T: Scalar>(s: &RegionSeriesSet<T>) -> Result<RankMatrix, RankError> {
    let (r, t) = (s.n_regions(), s.n_weeks());
    if r < 2 {
        return Err(RankError::TooSmall {
            what: "regions",
            required: 2,
            got: r,
        });
    }
    if t < 2 {
        return Err(RankError::TooSmall {
            what: "weeks",
            required: 2,
            got: t,
        });
    }
    let ranks = (0..t)
        .map(|week| {
            let key = |id: usize| {
                let v = s.regions[id][week];
                if v.is_nan() {
                    T::neg_infinity()
                } else {
                    v
                }
            };
            let mut ids: Vec<usize> = (0..r).collect();
            ids.sort_by(|&a, &b| {
                key(b)
                    .partial_cmp(&key(a))
                    .expect("no NaN keys")
                    .then(a.cmp(&b))
            });
            ids
        })
        .collect();
    Ok(RankMatrix { ranks })
}

/// `h[i] = -sum_j p_j ln p_j / ln R`, where `p_j` is the fraction of weeks
/// region `j` holds position `i`.
pub fn position_entropy<T: Scalar>(m: &RankMatrix) -> Result<EntropyProfile<T>, RankError> {
    let (t, r) = (m.n_weeks(), m.n_regions());
    if t < 2 {
        return Err(RankError::TooSmall {
            what: "weeks",
            required: 2,
            got: t,
        });
    }
    if r < 2 {
        return Err(RankError::TooSmall {
            what: "regions",
            required: 2,
            got: r,
        });
    }
    let log_r = T::of_usize(r).ln();
    let tf = T::of_usize(t);
    let mut occupancy = vec![0usize; r];
    let h: Vec<T> = (0..r)
        .map(|pos| {
            occupancy.iter_mut().for_each(|c| *c = 0);
            for row in &m.ranks {
                occupancy[row[pos]] += 1;
            }
            let entropy = occupancy
                .iter()
                .filter(|&&c| c > 0)
                .map(|&c| {
                    let p = T::of_usize(c) / tf;
                    -p * p.ln()
                })
                .fold(T::zero(), |a, b| a + b);
            (entropy / log_r).max(T::zero()).min(T::one())
        })
        .collect();
    let mean_h = h.iter().copied().fold(T::zero(), |a, b| a + b) / T::of_usize(r);
    Ok(EntropyProfile { h, mean_h })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankShape<T> {
    /// Spearman correlation of `h[i]` with `i` over the leading positions.
    pub spearman: T,
    /// Number of leading positions used.
    pub k: usize,
    pub top: Vec<T>,
}

/// Leading positions examined: the top decile, but never fewer than ten.
pub fn leading_positions(r: usize) -> usize {
    r.div_ceil(10).max(10).min(r)
}

pub fn entropy_vs_rank_shape<T: Scalar>(
    profile: &EntropyProfile<T>,
) -> Result<RankShape<T>, RankError> {
    let r = profile.h.len();
    if r < 10 {
        return Err(RankError::TooSmall {
            what: "rank positions",
            required: 10,
            got: r,
        });
    }
    let k = leading_positions(r);
    let top = profile.h[..k].to_vec();
    let positions: Vec<T> = (0..k).map(T::of_usize).collect();
    Ok(RankShape {
        spearman: spearman(&positions, &top),
        k,
        top,
    })
}

/// Midranks (1-based) with ties sharing their average rank.
pub fn midranks<T: Scalar>(x: &[T]) -> Vec<T> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).expect("finite values"));
    let mut ranks = vec![T::zero(); x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = T::of((i + j) as f64 / 2.0 + 1.0);
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation; 0 when either side has zero variance.
pub fn spearman<T: Scalar>(x: &[T], y: &[T]) -> T {
    let (rx, ry) = (midranks(x), midranks(y));
    let n = T::of_usize(x.len());
    let mx = rx.iter().copied().fold(T::zero(), |a, b| a + b) / n;
    let my = ry.iter().copied().fold(T::zero(), |a, b| a + b) / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in rx.iter().zip(&ry) {
        sxy = sxy + (a - mx) * (b - my);
        sxx = sxx + (a - mx) * (a - mx);
        syy = syy + (b - my) * (b - my);
    }
    if sxx <= T::zero() || syy <= T::zero() {
        T::zero()
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// CSV `position,entropy` with 1-based positions.
pub fn write_entropy_csv<W: Write, T: Scalar>(
    profile: &EntropyProfile<T>,
    writer: W,
) -> Result<(), RankError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["position", "entropy"])?;
    for (i, h) in profile.h.iter().enumerate() {
        w.write_record([(i + 1).to_string(), h.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Days, NaiveDate};
    use proptest::prelude::*;

    fn set(regions: Vec<Vec<f64>>) -> RegionSeriesSet<f64> {
        let t = regions[0].len();
        let origin = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        let weeks = (0..t).map(|w| origin + Days::new(7 * w as u64)).collect();
        RegionSeriesSet::from_regions(weeks, regions)
    }

    #[test]
    fn two_region_example() {
        let m = weekly_ranks(&set(vec![vec![5.0, 1.0], vec![3.0, 9.0]])).unwrap();
        assert_eq!(m.ranks, vec![vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn ties_give_identity_rows() {
        let m = weekly_ranks(&set(vec![vec![2.0; 5]; 4])).unwrap();
        assert!(m.ranks.iter().all(|row| row == &vec![0, 1, 2, 3]));
    }

    #[test]
    fn too_small_inputs() {
        assert!(weekly_ranks(&set(vec![vec![1.0, 2.0]])).is_err());
        assert!(weekly_ranks(&set(vec![vec![1.0], vec![2.0]])).is_err());
    }

    #[test]
    fn fixed_leader_has_zero_entropy() {
        let regions = vec![
            vec![100.0, 90.0, 95.0, 99.0],
            vec![1.0, 3.0, 2.0, 5.0],
            vec![3.0, 1.0, 5.0, 2.0],
        ];
        let p = position_entropy::<f64>(&weekly_ranks(&set(regions)).unwrap()).unwrap();
        assert_eq!(p.h[0], 0.0);
        assert!(p.h[1] > 0.0);
    }

    #[test]
    fn uniform_rotation_has_unit_entropy() {
        // Region j leads in week t when t % 3 == j, six weeks.
        let regions = (0..3)
            .map(|j| {
                (0..6)
                    .map(|t| if t % 3 == j { 10.0 } else { j as f64 })
                    .collect()
            })
            .collect();
        let p = position_entropy::<f64>(&weekly_ranks(&set(regions)).unwrap()).unwrap();
        assert!((p.h[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shape_examples() {
        let ascending = EntropyProfile {
            h: (0..20).map(|i| i as f64 * 0.05).collect(),
            mean_h: 0.475,
        };
        assert!((entropy_vs_rank_shape(&ascending).unwrap().spearman - 1.0).abs() < 1e-12);
        let flat = EntropyProfile {
            h: vec![0.7; 20],
            mean_h: 0.7,
        };
        assert_eq!(entropy_vs_rank_shape(&flat).unwrap().spearman, 0.0);
        let short = EntropyProfile {
            h: vec![0.5; 9],
            mean_h: 0.5,
        };
        assert!(entropy_vs_rank_shape(&short).is_err());
    }

    #[test]
    fn leading_position_count() {
        assert_eq!(leading_positions(10), 10);
        assert_eq!(leading_positions(50), 10);
        assert_eq!(leading_positions(250), 25);
    }

    #[test]
    fn midranks_share_ties() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    fn random_set(values: Vec<f64>, r: usize) -> RegionSeriesSet<f64> {
        let t = values.len() / r;
        set((0..r)
            .map(|i| values[i * t..(i + 1) * t].to_vec())
            .collect())
    }

    proptest! {
        #[test]
        fn rows_are_permutations(values in prop::collection::vec(0.0f64..20.0, 40..41)) {
            let m = weekly_ranks(&random_set(values, 5)).unwrap();
            for row in &m.ranks {
                let mut sorted = row.clone();
                sorted.sort_unstable();
                prop_assert_eq!(sorted, (0..5).collect::<Vec<_>>());
            }
        }

        /// Without ties, relabeling regions leaves the profile unchanged.
        #[test]
        fn relabeling_invariance(
            values in prop::collection::hash_set(0u32..1_000_000, 48..49),
            shift in 1usize..6,
        ) {
            let values: Vec<f64> = values.into_iter().map(f64::from).collect();
            let a = random_set(values, 6);
            let mut regions = a.regions.clone();
            regions.rotate_left(shift);
            let b = set(regions);
            let pa = position_entropy::<f64>(&weekly_ranks(&a).unwrap()).unwrap();
            let pb = position_entropy::<f64>(&weekly_ranks(&b).unwrap()).unwrap();
            for (x, y) in pa.h.iter().zip(&pb.h) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn entropy_bounds(values in prop::collection::vec(0.0f64..5.0, 60..61)) {
            let p = position_entropy::<f64>(&weekly_ranks(&random_set(values, 6)).unwrap()).unwrap();
            for h in &p.h {
                prop_assert!((0.0..=1.0).contains(h));
            }
            let mean = p.h.iter().sum::<f64>() / p.h.len() as f64;
            prop_assert!((mean - p.mean_h).abs() < 1e-12);
        }
    }
}
