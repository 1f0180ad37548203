//! Outcome fairness metrics: attribute rates, statistical parity, the fair
//! target boundary, bias verdicts, and box-plot statistics over groups of
//! concepts.

use crate::error::{Error, Result};
use crate::scalar::{cast, cast_usize, Scalar};

/// Slack on boundary comparisons so that rates sitting exactly on the edge
/// in real arithmetic (0.46, 0.54, a 0.04 step) stay inclusive despite
/// binary rounding of the decimal inputs.
const EDGE_EPS: f64 = 1e-9;

/// Fraction of labels equal to 1.
pub fn attribute_rate<T: Scalar>(labels: &[u8]) -> Result<T> {
    if labels.is_empty() {
        return Err(Error::Empty("attribute_rate on empty labels".into()));
    }
    let ones = labels.iter().filter(|&&a| a == 1).count();
    Ok(cast_usize::<T>(ones) / cast_usize::<T>(labels.len()))
}

/// Statistical parity gap `|P(y=1 | a=1) - P(y=1 | a=0)|` over pairs of
/// (membership, attribute). Fails if either attribute group is empty.
pub fn parity_gap<T: Scalar>(pairs: &[(bool, u8)]) -> Result<T> {
    if pairs.is_empty() {
        return Err(Error::Empty("parity_gap on empty input".into()));
    }
    let mut n = [0usize; 2];
    let mut pos = [0usize; 2];
    for &(y, a) in pairs {
        let a = a as usize;
        if a > 1 {
            return Err(Error::Spec(format!("attribute label {a} is not binary")));
        }
        n[a] += 1;
        if y {
            pos[a] += 1;
        }
    }
    for a in 0..2 {
        if n[a] == 0 {
            return Err(Error::Degenerate(format!(
                "attribute group a={a} has no members"
            )));
        }
    }
    let p1 = cast_usize::<T>(pos[1]) / cast_usize::<T>(n[1]);
    let p0 = cast_usize::<T>(pos[0]) / cast_usize::<T>(n[0]);
    Ok((p1 - p0).abs())
}

/// Closed interval of acceptable rates around a target proportion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FairBoundary<T> {
    pub target: T,
    pub half_width: T,
}

impl<T: Scalar> FairBoundary<T> {
    pub fn new(target: T, half_width: T) -> Result<Self> {
        if !(T::zero()..=T::one()).contains(&target) {
            return Err(Error::Spec(format!("boundary target {target} not in [0,1]")));
        }
        if half_width < T::zero() || !half_width.is_finite() {
            return Err(Error::Spec(format!("bad boundary half width {half_width}")));
        }
        Ok(FairBoundary { target, half_width })
    }
}

impl<T: Scalar> Default for FairBoundary<T> {
    /// Balanced target with a four-point tolerance: [0.46, 0.54].
    fn default() -> Self {
        FairBoundary {
            target: cast(0.5),
            half_width: cast(0.04),
        }
    }
}

/// Inclusive membership test with edge slack.
pub fn within_boundary<T: Scalar>(rate: T, b: &FairBoundary<T>) -> bool {
    (rate - b.target).abs() <= b.half_width + cast(EDGE_EPS)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BiasVerdict {
    Amplified,
    Reflected,
    Mitigated,
}

impl std::fmt::Display for BiasVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            BiasVerdict::Amplified => "amplified",
            BiasVerdict::Reflected => "reflected",
            BiasVerdict::Mitigated => "mitigated",
        };
        f.write_str(s)
    }
}

/// Compare an outcome rate against a reference rate: `Reflected` when the
/// outcome stays within the boundary half-width of the reference, otherwise
/// `Amplified` when it moved away from the target and `Mitigated` when it
/// moved toward it.
pub fn verdict<T: Scalar>(ref_rate: T, out_rate: T, b: &FairBoundary<T>) -> BiasVerdict {
    let eps = cast::<T>(EDGE_EPS);
    if (out_rate - ref_rate).abs() <= b.half_width + eps {
        BiasVerdict::Reflected
    } else if (out_rate - b.target).abs() > (ref_rate - b.target).abs() + eps {
        BiasVerdict::Amplified
    } else {
        BiasVerdict::Mitigated
    }
}

/// A concept's measured rate along with how many samples produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct RateRecord<T> {
    pub concept: String,
    pub rate: T,
    pub count: usize,
}

/// Split concepts into the under-represented (`m`, rate below one half) and
/// over-represented (`f`) groups by their reference rates.
pub fn group_split<T: Scalar>(rates: &[RateRecord<T>]) -> (Vec<RateRecord<T>>, Vec<RateRecord<T>>) {
    let half = cast::<T>(0.5);
    let mut f = Vec::new();
    let mut m = Vec::new();
    for r in rates {
        if r.rate < half {
            m.push(r.clone());
        } else {
            f.push(r.clone());
        }
    }
    (f, m)
}

/// Five-number summary plus whisker bounds for a box plot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxStats<T> {
    pub min: T,
    pub q1: T,
    pub median: T,
    pub q3: T,
    pub max: T,
    pub lo_whisker: T,
    pub hi_whisker: T,
}

/// Box statistics for a named group of concepts.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupStats<T> {
    pub label: String,
    pub members: Vec<String>,
    pub stats: BoxStats<T>,
}

/// Quantile by linear interpolation at position `1 + p(n-1)` over the
/// sorted sample.
fn quantile<T: Scalar>(sorted: &[T], p: f64) -> T {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    sorted[lo] + cast::<T>(frac) * (sorted[lo + 1] - sorted[lo])
}

/// Box statistics with interpolated quartiles; whiskers reach the most
/// extreme points within 1.5 IQR of the quartiles.
pub fn box_stats<T: Scalar>(values: &[T]) -> Result<BoxStats<T>> {
    if values.is_empty() {
        return Err(Error::Empty("box_stats on empty values".into()));
    }
    if values.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("box_stats on non-finite value".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q1 = quantile(&sorted, 0.25);
    let median = quantile(&sorted, 0.5);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    let lo_fence = q1 - cast::<T>(1.5) * iqr;
    let hi_fence = q3 + cast::<T>(1.5) * iqr;
    let lo_whisker = *sorted.iter().find(|x| **x >= lo_fence).unwrap();
    let hi_whisker = *sorted.iter().rev().find(|x| **x <= hi_fence).unwrap();
    Ok(BoxStats {
        min: sorted[0],
        q1,
        median,
        q3,
        max: sorted[sorted.len() - 1],
        lo_whisker,
        hi_whisker,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b() -> FairBoundary<f64> {
        FairBoundary::default()
    }

    #[test]
    fn attribute_rate_counts_ones() {
        let rate: f64 = attribute_rate(&[1, 0, 1, 1]).unwrap();
        assert_eq!(rate, 0.75);
        assert!(matches!(
            attribute_rate::<f64>(&[]),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn attribute_rate_complement() {
        let labels = [1u8, 0, 0, 1, 1, 0, 1];
        let flipped: Vec<u8> = labels.iter().map(|a| 1 - a).collect();
        let r: f64 = attribute_rate(&labels).unwrap();
        let rf: f64 = attribute_rate(&flipped).unwrap();
        assert!((r + rf - 1.0).abs() < 1e-15);
    }

    #[test]
    fn parity_gap_hand_case() {
        // a=1 group: 40/50 positive; a=0 group: 10/50 positive.
        let mut pairs = Vec::new();
        for i in 0..50 {
            pairs.push((i < 40, 1u8));
        }
        for i in 0..50 {
            pairs.push((i < 10, 0u8));
        }
        let gap: f64 = parity_gap(&pairs).unwrap();
        assert!((gap - 0.6).abs() < 1e-15);
    }

    #[test]
    fn parity_gap_symmetric_under_attribute_swap() {
        let pairs = [
            (true, 1u8),
            (false, 1),
            (true, 0),
            (true, 1),
            (false, 0),
            (false, 0),
        ];
        let swapped: Vec<(bool, u8)> = pairs.iter().map(|&(y, a)| (y, 1 - a)).collect();
        let g1: f64 = parity_gap(&pairs).unwrap();
        let g2: f64 = parity_gap(&swapped).unwrap();
        assert!((g1 - g2).abs() < 1e-15);
    }

    #[test]
    fn parity_gap_missing_group_is_degenerate() {
        let pairs = [(true, 1u8), (false, 1)];
        assert!(matches!(parity_gap::<f64>(&pairs), Err(Error::Degenerate(_))));
    }

    #[test]
    fn boundary_edges_are_inclusive() {
        assert!(within_boundary(0.46, &b()));
        assert!(within_boundary(0.54, &b()));
        assert!(within_boundary(0.5, &b()));
        assert!(!within_boundary(0.4599, &b()));
        assert!(!within_boundary(0.5401, &b()));
    }

    #[test]
    fn boundary_target_always_inside() {
        for t in 0..=20 {
            let target = t as f64 / 20.0;
            let bd = FairBoundary::new(target, 0.0).unwrap();
            assert!(within_boundary(target, &bd));
        }
    }

    #[test]
    fn verdict_hand_cases() {
        assert_eq!(verdict(0.30, 0.32, &b()), BiasVerdict::Reflected);
        assert_eq!(verdict(0.30, 0.20, &b()), BiasVerdict::Amplified);
        assert_eq!(verdict(0.30, 0.40, &b()), BiasVerdict::Mitigated);
        assert_eq!(verdict(0.7, 0.7, &b()), BiasVerdict::Reflected);
    }

    #[test]
    fn group_split_by_half() {
        let rates = vec![
            RateRecord { concept: "a".into(), rate: 0.3, count: 10 },
            RateRecord { concept: "b".into(), rate: 0.7, count: 10 },
            RateRecord { concept: "c".into(), rate: 0.5, count: 10 },
        ];
        let (f, m) = group_split(&rates);
        let f_names: Vec<&str> = f.iter().map(|r| r.concept.as_str()).collect();
        let m_names: Vec<&str> = m.iter().map(|r| r.concept.as_str()).collect();
        assert_eq!(f_names, vec!["b", "c"]);
        assert_eq!(m_names, vec!["a"]);
    }

    #[test]
    fn box_stats_interpolated_quartiles() {
        let s = box_stats(&[0.1f64, 0.2, 0.3, 0.4]).unwrap();
        assert!((s.q1 - 0.175).abs() < 1e-15);
        assert!((s.median - 0.25).abs() < 1e-15);
        assert!((s.q3 - 0.325).abs() < 1e-15);
        assert_eq!(s.min, 0.1);
        assert_eq!(s.max, 0.4);
    }

    #[test]
    fn box_stats_singleton() {
        let s = box_stats(&[0.2]).unwrap();
        assert_eq!(s.min, 0.2);
        assert_eq!(s.q1, 0.2);
        assert_eq!(s.median, 0.2);
        assert_eq!(s.q3, 0.2);
        assert_eq!(s.max, 0.2);
        assert_eq!(s.lo_whisker, 0.2);
        assert_eq!(s.hi_whisker, 0.2);
    }

    #[test]
    fn box_stats_whiskers_clip_outliers() {
        let mut vals = vec![0.0; 0];
        vals.extend((0..11).map(|i| 0.4 + i as f64 * 0.01));
        vals.push(5.0); // far outlier
        let s = box_stats(&vals).unwrap();
        assert_eq!(s.max, 5.0);
        assert!(s.hi_whisker < 1.0, "whisker {}", s.hi_whisker);
    }

    #[test]
    fn box_stats_unsorted_input() {
        let a = box_stats(&[0.4, 0.1, 0.3, 0.2]).unwrap();
        let b = box_stats(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(a, b);
    }
}
