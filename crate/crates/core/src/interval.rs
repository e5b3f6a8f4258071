//! Closed real intervals.
//!
//! Endpoints are inclusive. Infinite endpoints are allowed in memory and are
//! written as `null` in JSON, since JSON has no representation for them.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const UNBOUNDED: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    /// `lo <= hi` and neither endpoint is NaN.
    pub fn is_valid(&self) -> bool {
        self.lo <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn midpoint(&self) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            self.lo + (self.hi - self.lo) / 2.0
        }
    }

    /// Intersection of two closed intervals, `None` when disjoint.
    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.max(self.lo).min(self.hi)
    }
}

impl std::fmt::Display for Interval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

impl Serialize for Interval {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let lo = self.lo.is_finite().then_some(self.lo);
        let hi = self.hi.is_finite().then_some(self.hi);
        (lo, hi).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Interval {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let (lo, hi) = <(Option<f64>, Option<f64>)>::deserialize(deserializer)?;
        let iv = Interval {
            lo: lo.unwrap_or(f64::NEG_INFINITY),
            hi: hi.unwrap_or(f64::INFINITY),
        };
        if iv.lo.is_nan() || iv.hi.is_nan() {
            return Err(D::Error::custom("interval endpoint is NaN"));
        }
        Ok(iv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intersect_overlapping() {
        let a = Interval::new(100.0, 5000.0);
        let b = Interval::new(0.0, 500.0);
        assert_eq!(a.intersect(&b), Some(Interval::new(100.0, 500.0)));
    }

    #[test]
    fn intersect_touching_is_point() {
        let a = Interval::new(1.0, 2000.0);
        let b = Interval::new(0.0, 1.0);
        assert_eq!(a.intersect(&b), Some(Interval::point(1.0)));
    }

    #[test]
    fn intersect_disjoint() {
        assert_eq!(
            Interval::new(600.0, 5000.0).intersect(&Interval::new(0.0, 500.0)),
            None
        );
    }

    #[test]
    fn json_uses_null_for_infinite_ends() {
        let iv = Interval::new(f64::NEG_INFINITY, 3.0);
        let s = serde_json::to_string(&iv).unwrap();
        assert_eq!(s, "[null,3.0]");
        let back: Interval = serde_json::from_str(&s).unwrap();
        assert_eq!(back, iv);
    }
}
