use serde::Serialize;

use super::ConcentrationError;
use crate::Scalar;

/// Lorenz curve with regions ordered by descending count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LorenzCurve<T> {
    /// `(cumulative share of regions, cumulative share of events)`, from
    /// `(0, 0)` to `(1, 1)`.
    pub points: Vec<(T, T)>,
    pub gini: T,
}

pub fn lorenz<T: Scalar>(counts: &[u64]) -> Result<LorenzCurve<T>, ConcentrationError> {
    let total: u128 = counts.iter().map(|&c| u128::from(c)).sum();
    if total == 0 {
        return Err(ConcentrationError::AllZero);
    }
    let n = counts.len();
    let mut desc = counts.to_vec();
    desc.sort_unstable_by(|a, b| b.cmp(a));

    let mut points = Vec::with_capacity(n + 1);
    points.push((T::zero(), T::zero()));
    let mut cum = 0u128;
    for (i, &c) in desc.iter().enumerate() {
        cum += u128::from(c);
        points.push((
            T::of((i + 1) as f64 / n as f64),
            T::of(cum as f64 / total as f64),
        ));
    }
    // Close exactly on (1, 1).
    if let Some(last) = points.last_mut() {
        *last = (T::one(), T::one());
    }

    Ok(LorenzCurve {
        points,
        gini: T::of(gini_exact(&desc, total)),
    })
}

/// `1 - 2 * area` under the ascending Lorenz curve with the trapezoid sums
/// kept in integers: `n*S - sum_i (C_{i-1} + C_i)` over `n*S`.
fn gini_exact(desc: &[u64], total: u128) -> f64 {
    let n = desc.len() as u128;
    let mut cum = 0u128;
    let mut trapezoids = 0u128;
    for &c in desc.iter().rev() {
        let prev = cum;
        cum += u128::from(c);
        trapezoids += prev + cum;
    }
    let numerator = n * total - trapezoids;
    numerator as f64 / (n * total) as f64
}
