use std::fmt;

use serde::{Deserialize, Serialize};

use super::SamplerError;

/// A half-open score interval `[lo, hi)` with its sampling rate. When
/// `closed_hi` is set the interval is `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub lo: f64,
    pub hi: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub closed_hi: bool,
    pub rate: f64,
}

impl Bucket {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && (x < self.hi || (self.closed_hi && x == self.hi))
    }

    /// Draw size for a unit of `size` items. The epsilon absorbs decimal
    /// rates such as 0.29 whose binary product lands just under an integer.
    pub fn quota(&self, size: usize) -> usize {
        (self.rate * size as f64 + 1e-9).floor() as usize
    }

    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let close = if self.closed_hi { ']' } else { ')' };
        write!(f, "[{},{}{close}", trim_float(self.lo), trim_float(self.hi))
    }
}

fn trim_float(x: f64) -> String {
    let s = format!("{x:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() { "0".into() } else { s.to_string() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BucketScheme {
    /// Scores at or above this value are discarded before bucketing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drop_above: Option<f64>,
    /// Exact-match tasks below this accuracy are removed before bucketing.
    #[serde(default)]
    pub drop_below_task_accuracy: f64,
    #[serde(rename = "bucket")]
    pub buckets: Vec<Bucket>,
}

/// Default low-accuracy cutoff for exact-match tasks.
pub const DEFAULT_EM_CUTOFF: f64 = 0.05;

/// Default exact-match rate ladder, lowest-accuracy decile first.
pub const DEFAULT_EM_RATES: [f64; 10] = [0.40, 0.35, 0.30, 0.25, 0.20, 0.15, 0.10, 0.10, 0.10, 0.10];

impl BucketScheme {
    /// `[0,0.2)` at 40%, then `[0.2,0.3)` … `[0.7,0.8)` at 10%; scores of
    /// 0.8 and above are dropped.
    pub fn generation_default() -> Self {
        let edges = [0.0, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8];
        let buckets = edges
            .windows(2)
            .enumerate()
            .map(|(i, w)| Bucket {
                lo: w[0],
                hi: w[1],
                closed_hi: false,
                rate: if i == 0 { 0.40 } else { 0.10 },
            })
            .collect();
        Self {
            drop_above: Some(0.8),
            drop_below_task_accuracy: 0.0,
            buckets,
        }
    }

    /// Ten equal-width intervals over `[0.05, 1.0]` with a non-increasing
    /// rate ladder from 0.40 down to 0.10.
    pub fn exact_match_default() -> Self {
        let cutoff = DEFAULT_EM_CUTOFF;
        let width = (1.0 - cutoff) / 10.0;
        let buckets = DEFAULT_EM_RATES
            .iter()
            .enumerate()
            .map(|(i, &rate)| Bucket {
                lo: cutoff + width * i as f64,
                hi: if i == 9 { 1.0 } else { cutoff + width * (i + 1) as f64 },
                closed_hi: i == 9,
                rate,
            })
            .collect();
        Self {
            drop_above: None,
            drop_below_task_accuracy: cutoff,
            buckets,
        }
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        let invalid = |m: String| Err(SamplerError::InvalidScheme(m));
        if self.buckets.is_empty() {
            return invalid("no buckets".into());
        }
        for b in &self.buckets {
            if b.lo.is_nan() || b.hi.is_nan() || b.lo >= b.hi {
                return invalid(format!("bucket {b} is empty or reversed"));
            }
            if !(0.0..=1.0).contains(&b.rate) {
                return invalid(format!("bucket {b} rate {} outside [0,1]", b.rate));
            }
        }
        for pair in self.buckets.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let overlaps = a.hi > b.lo || (a.closed_hi && a.hi == b.lo);
            if overlaps {
                return invalid(format!("buckets {a} and {b} overlap or are out of order"));
            }
        }
        if !(0.0..=1.0).contains(&self.drop_below_task_accuracy) {
            return invalid("drop_below_task_accuracy outside [0,1]".into());
        }
        Ok(())
    }

    /// Index of the bucket holding `score`, or `None` when the score is
    /// dropped or falls in no interval.
    pub fn locate(&self, score: f64) -> Option<usize> {
        if self.drop_above.is_some_and(|cap| score >= cap) {
            return None;
        }
        self.buckets.iter().position(|b| b.contains(score))
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SamplerError> {
        let scheme: Self =
            toml::from_str(text).map_err(|e| SamplerError::InvalidScheme(e.to_string()))?;
        scheme.validate()?;
        Ok(scheme)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scheme serializes to TOML")
    }

    pub(crate) fn check_non_increasing_rates(&self) -> Result<(), SamplerError> {
        for pair in self.buckets.windows(2) {
            if pair[1].rate > pair[0].rate {
                return Err(SamplerError::NonMonotoneRates {
                    lower: pair[0].label(),
                    lower_rate: pair[0].rate,
                    higher: pair[1].label(),
                    higher_rate: pair[1].rate,
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_default_edges() {
        let s = BucketScheme::generation_default();
        s.validate().unwrap();
        assert_eq!(s.buckets.len(), 7);
        assert_eq!(s.buckets[s.locate(0.75).unwrap()].label(), "[0.7,0.8)");
        assert_eq!(s.buckets[s.locate(0.20).unwrap()].label(), "[0.2,0.3)");
        assert_eq!(s.buckets[s.locate(0.0).unwrap()].label(), "[0,0.2)");
        assert_eq!(s.locate(0.85), None);
        assert_eq!(s.locate(0.8), None);
        assert_eq!(s.buckets[0].quota(100), 40);
        assert_eq!(s.buckets[2].quota(50), 5);
    }

    #[test]
    fn exact_match_default_covers_to_one() {
        let s = BucketScheme::exact_match_default();
        s.validate().unwrap();
        s.check_non_increasing_rates().unwrap();
        assert_eq!(s.locate(1.0), Some(9));
        assert_eq!(s.locate(0.05), Some(0));
        assert_eq!(s.locate(0.04), None);
        assert_ne!(s.locate(0.15), s.locate(0.55));
    }

    #[test]
    fn decimal_rates_floor_exactly() {
        let b = Bucket { lo: 0.0, hi: 1.0, closed_hi: false, rate: 0.29 };
        assert_eq!(b.quota(100), 29);
        let b = Bucket { rate: 0.35, ..b };
        assert_eq!(b.quota(100), 35);
        assert_eq!(b.quota(3), 1);
    }

    #[test]
    fn rejects_overlap_and_bad_rates() {
        let mut s = BucketScheme::generation_default();
        s.buckets[1].lo = 0.1;
        assert!(s.validate().is_err());
        let mut s = BucketScheme::generation_default();
        s.buckets[0].rate = 1.5;
        assert!(s.validate().is_err());
        let mut s = BucketScheme::exact_match_default();
        s.buckets[9].rate = 0.9;
        assert!(matches!(s.check_non_increasing_rates(), Err(SamplerError::NonMonotoneRates { .. })));
    }

    #[test]
    fn toml_round_trip() {
        for s in [BucketScheme::generation_default(), BucketScheme::exact_match_default()] {
            assert_eq!(BucketScheme::from_toml_str(&s.to_toml_string()).unwrap(), s);
        }
    }
}
