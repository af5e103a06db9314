//! Exact age-of-information arithmetic.
//!
//! Ages take values `a + bτ`. With `τ = num/den` every such value is an
//! integer number of `1/den` ticks, so states compare exactly.

use crate::error::{Error, Result};

pub const MAX_TAU_DENOMINATOR: u32 = 1000;

/// Age in ticks of `1/ticks_per_slot` slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Aoi(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AoiScale {
    /// Ticks in a full slot.
    pub ticks_per_slot: u32,
    /// Ticks in a retransmission slot of length `τ`.
    pub ticks_per_retx: u32,
}

impl AoiScale {
    pub fn integer() -> Self {
        Self {
            ticks_per_slot: 1,
            ticks_per_retx: 1,
        }
    }

    /// Smallest denominator `den ≤ 1000` with `τ = num/den` to within 1e-9.
    pub fn for_tau(tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::config("scheme.tau", format!("must lie in (0, 1], got {tau}")));
        }
        for den in 1..=MAX_TAU_DENOMINATOR {
            let num = (tau * den as f64).round();
            if num >= 1.0 && (num / den as f64 - tau).abs() <= 1e-9 {
                return Ok(Self {
                    ticks_per_slot: den,
                    ticks_per_retx: num as u32,
                });
            }
        }
        Err(Error::config(
            "scheme.tau",
            format!("{tau} is not a fraction with denominator <= {MAX_TAU_DENOMINATOR}"),
        ))
    }

    pub fn tau(&self) -> f64 {
        self.ticks_per_retx as f64 / self.ticks_per_slot as f64
    }

    pub fn slots(&self, n: u32) -> Aoi {
        Aoi(n * self.ticks_per_slot)
    }

    /// `(m − 1)τ + 1`: the age right after an update delivered on its m-th
    /// transmission.
    pub fn after_delivery(&self, m: u32) -> Aoi {
        Aoi((m - 1) * self.ticks_per_retx + self.ticks_per_slot)
    }

    /// `q + (m − 1)τ + 1`, capped at `cap`.
    pub fn after_failure(&self, q: Aoi, m: u32, cap: Aoi) -> Aoi {
        Aoi((q.0 + self.after_delivery(m).0).min(cap.0))
    }

    pub fn value(&self, q: Aoi) -> f64 {
        q.0 as f64 / self.ticks_per_slot as f64
    }

    /// Splits an age into `(whole, frac_units)` with `value = whole +
    /// frac_units·τ` and `frac_units` minimal.
    pub fn parts(&self, q: Aoi) -> (u32, u32) {
        let mut b = 0;
        while b * self.ticks_per_retx <= q.0 {
            let rest = q.0 - b * self.ticks_per_retx;
            if rest.is_multiple_of(self.ticks_per_slot) {
                return (rest / self.ticks_per_slot, b);
            }
            b += 1;
        }
        unreachable!("ages are always whole slots plus retransmission slots")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_fractions() {
        let s = AoiScale::for_tau(0.5).unwrap();
        assert_eq!((s.ticks_per_slot, s.ticks_per_retx), (2, 1));
        let s = AoiScale::for_tau(0.2).unwrap();
        assert_eq!((s.ticks_per_slot, s.ticks_per_retx), (5, 1));
        assert_eq!(AoiScale::for_tau(1.0).unwrap(), AoiScale::integer());
        let s = AoiScale::for_tau(0.35).unwrap();
        assert_eq!((s.ticks_per_slot, s.ticks_per_retx), (20, 7));
        assert!(AoiScale::for_tau(0.0).is_err());
        assert!(AoiScale::for_tau(1.1).is_err());
        assert!(AoiScale::for_tau(std::f64::consts::FRAC_1_SQRT_2).is_err());
    }

    #[test]
    fn retransmission_arithmetic() {
        let s = AoiScale::for_tau(0.5).unwrap();
        let cap = s.slots(10);
        assert_eq!(s.value(s.after_delivery(2)), 1.5);
        assert_eq!(s.value(s.after_failure(s.slots(3), 2, cap)), 4.5);
        assert_eq!(s.after_failure(s.slots(10), 2, cap), cap);
        assert_eq!(s.parts(Aoi(9)), (4, 1));
        assert_eq!(s.parts(s.slots(3)), (3, 0));
    }
}
