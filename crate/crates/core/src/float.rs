//! Outward-rounded `f64` bounds for fast prefilters.
//!
//! A [`Bounds`] value always contains the exact real it stands for; results
//! that cannot be decided here fall back to [`crate::dyadic::Interval`].

use crate::dyadic::{Dyadic, Interval};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "inverted bounds");
        Bounds { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Bounds { lo: x, hi: x }
    }

    pub fn from_interval(iv: &Interval) -> Self {
        Bounds { lo: iv.lo_f64(), hi: iv.hi_f64() }
    }

    pub fn to_interval(self) -> Interval {
        let lo = Dyadic::from_f64(self.lo).expect("finite lower bound");
        let hi = Dyadic::from_f64(self.hi).expect("finite upper bound");
        Interval::new(lo, hi, 64)
    }

    /// `[x(1-rel), x(1+rel)]` for `x >= 0`.
    pub fn relative(x: f64, rel: f64) -> Self {
        Bounds { lo: (x * (1.0 - rel)).next_down().max(0.0), hi: (x * (1.0 + rel)).next_up() }
    }

    pub fn mid(self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn add(self, o: Bounds) -> Bounds {
        Bounds { lo: (self.lo + o.lo).next_down(), hi: (self.hi + o.hi).next_up() }
    }

    /// Multiply by a float known exactly (an integer below 2^53).
    pub fn scale(self, k: f64) -> Bounds {
        if k >= 0.0 {
            Bounds { lo: (self.lo * k).next_down(), hi: (self.hi * k).next_up() }
        } else {
            Bounds { lo: (self.hi * k).next_down(), hi: (self.lo * k).next_up() }
        }
    }

    /// Product of two non-negative enclosures.
    pub fn mul_nonneg(self, o: Bounds) -> Bounds {
        Bounds {
            lo: (self.lo * o.lo).next_down().max(0.0),
            hi: (self.hi * o.hi).next_up(),
        }
    }

    /// Enclosure of `‖x‖` for `x` in the bounds.
    pub fn dist_to_z(self) -> Bounds {
        let fl = self.lo.floor();
        if self.hi.floor() != fl || !fl.is_finite() {
            return Bounds { lo: 0.0, hi: 0.5 };
        }
        // exact: both ends share the integer part
        let a = self.lo - fl;
        let b = self.hi - fl;
        if b <= 0.5 {
            Bounds { lo: a, hi: b }
        } else if a >= 0.5 {
            Bounds { lo: 1.0 - b, hi: 1.0 - a }
        } else {
            Bounds { lo: a.min(1.0 - b), hi: 0.5 }
        }
    }

    /// `1/x` for strictly positive bounds.
    pub fn recip_pos(self) -> Option<Bounds> {
        if self.lo <= 0.0 {
            return None;
        }
        Some(Bounds { lo: (1.0 / self.hi).next_down(), hi: (1.0 / self.lo).next_up() })
    }

    /// Enclosure of `|x|`.
    pub fn abs(self) -> Bounds {
        if self.lo >= 0.0 {
            self
        } else if self.hi <= 0.0 {
            Bounds { lo: -self.hi, hi: -self.lo }
        } else {
            Bounds { lo: 0.0, hi: self.hi.max(-self.lo) }
        }
    }

    /// Enclosure of `max(x, y)`.
    pub fn max(self, o: Bounds) -> Bounds {
        Bounds { lo: self.lo.max(o.lo), hi: self.hi.max(o.hi) }
    }

    /// Whether every point of `self` is below every point of `o`.
    pub fn below(self, o: Bounds) -> bool {
        self.hi < o.lo
    }

    pub fn contains(self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_bounds_cover_point() {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let b = Bounds::new(phi.next_down(), phi.next_up());
        for q in 1..200 {
            let x = b.scale(q as f64);
            let d = x.dist_to_z();
            let exact = {
                let v = q as f64 * phi;
                (v - v.round()).abs()
            };
            assert!(d.lo <= exact + 1e-12 && exact - 1e-12 <= d.hi);
        }
    }

    #[test]
    fn straddling_integer_gives_zero_lower() {
        let d = Bounds::new(2.9, 3.1).dist_to_z();
        assert_eq!(d.lo, 0.0);
    }

    #[test]
    fn reciprocal_is_outward() {
        let r = Bounds::point(3.0).recip_pos().unwrap();
        assert!(r.lo < 1.0 / 3.0 && 1.0 / 3.0 < r.hi);
        assert!(Bounds::new(0.0, 1.0).recip_pos().is_none());
    }
}
