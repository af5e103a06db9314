//! Normal-approximation packet error rates for HARQ over AWGN, and the SINRs
//! seen by a superposed retransmission + fresh update pair.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Q-function arguments beyond this magnitude are clamped to 0 or 1.
pub const Q_CLAMP: f64 = 40.0;

/// `log₂²(e)`, the high-SNR limit of the channel dispersion.
pub const LOG2E_SQ: f64 = std::f64::consts::LOG2_E * std::f64::consts::LOG2_E;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FblLink {
    /// First-transmission codeword length in channel uses.
    pub n1: u32,
    /// Message size in bits.
    pub b: u32,
    /// Transmit SNR in dB; noise power is normalised to one.
    pub snr_db: f64,
    /// Maximum number of transmissions per update.
    pub m_max: u32,
}

impl FblLink {
    pub fn new(n1: u32, b: u32, snr_db: f64, m_max: u32) -> Result<Self> {
        let link = Self { n1, b, snr_db, m_max };
        link.validate()?;
        Ok(link)
    }

    /// `n₁ = b = 100`, 0 dB, two transmissions.
    pub fn benchmark() -> Self {
        Self {
            n1: 100,
            b: 100,
            snr_db: 0.0,
            m_max: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n1 == 0 {
            return Err(Error::config("link.n1", "must be >= 1"));
        }
        if self.b == 0 {
            return Err(Error::config("link.b", "must be >= 1"));
        }
        if self.m_max == 0 {
            return Err(Error::config("link.m_max", "must be >= 1"));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::config("link.snr_db", "must be finite"));
        }
        Ok(())
    }

    /// Linear transmit power `P = 10^(SNR/10)`.
    pub fn power(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }
}

/// Gaussian tail probability `Q(x) = P(N(0,1) > x)`.
pub fn q_function(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x >= Q_CLAMP {
        0.0
    } else if x <= -Q_CLAMP {
        1.0
    } else {
        0.5 * erfc(x / std::f64::consts::SQRT_2)
    }
}

/// Channel dispersion `V(γ) = (1 − (1+γ)⁻²) log₂²(e)`.
pub fn dispersion(gamma: f64) -> f64 {
    let g = 1.0 + gamma;
    (1.0 - 1.0 / (g * g)) * LOG2E_SQ
}

/// `Q(num / den)` clamped to [0, 1], with `den = 0` resolved by the sign of
/// the numerator (zero dispersion means a deterministic outcome).
fn na_error(num: f64, den: f64) -> f64 {
    let p = if den > 0.0 {
        q_function(num / den)
    } else if num >= 0.0 {
        0.0
    } else {
        1.0
    };
    p.clamp(0.0, 1.0)
}

fn check_gammas(gammas: &[f64]) -> Result<()> {
    if let Some(g) = gammas.iter().find(|g| !(**g >= 0.0) || !g.is_finite()) {
        return Err(Error::Domain(format!("SNR values must be finite and >= 0, got {g}")));
    }
    Ok(())
}

/// Chase-combining error after `gammas.len()` transmissions of the same
/// `n₁`-symbol codeword; MRC makes the effective SNR the sum.
pub fn eps_cc(link: &FblLink, gammas: &[f64]) -> Result<f64> {
    if gammas.is_empty() || gammas.len() > link.m_max as usize {
        return Err(Error::Domain(format!(
            "CC-HARQ needs between 1 and {} SNR values, got {}",
            link.m_max,
            gammas.len()
        )));
    }
    check_gammas(gammas)?;
    let sum: f64 = gammas.iter().sum();
    let n = link.n1 as f64;
    let num = n * (1.0 + sum).log2() - link.b as f64 + n.log2();
    let den = (n * dispersion(sum)).sqrt();
    Ok(na_error(num, den))
}

/// Incremental-redundancy error after transmitting blocks of `lengths[i]`
/// symbols at SNR `gammas[i]`; the first block must be the `n₁`-symbol one.
pub fn eps_ir(link: &FblLink, gammas: &[f64], lengths: &[f64]) -> Result<f64> {
    if gammas.is_empty() || gammas.len() != lengths.len() {
        return Err(Error::Domain(format!(
            "IR-HARQ needs matching non-empty SNR and length lists, got {} and {}",
            gammas.len(),
            lengths.len()
        )));
    }
    check_gammas(gammas)?;
    if lengths[0] != link.n1 as f64 {
        return Err(Error::Domain(format!(
            "first IR block must have n1 = {} symbols, got {}",
            link.n1, lengths[0]
        )));
    }
    for (i, (&n, &g)) in lengths.iter().zip(gammas).enumerate().skip(1) {
        if !(n >= 0.0) || !n.is_finite() {
            return Err(Error::Domain(format!("block {i} has invalid length {n}")));
        }
        if n == 0.0 && g > 0.0 {
            return Err(Error::Domain(format!("block {i} has zero length but SNR {g}")));
        }
    }

    let mut info = 0.0;
    let mut disp = 0.0;
    let mut total = 0.0;
    for (&n, &g) in lengths.iter().zip(gammas) {
        info += n * (1.0 + g).log2();
        disp += n * dispersion(g);
        total += n;
    }
    let num = info - link.b as f64 + total.log2();
    Ok(na_error(num, disp.sqrt()))
}

/// Block lengths for `m` IR transmissions with retransmission fraction `tau`:
/// `[n₁, τn₁, τn₁, …]`.
pub fn ir_lengths(link: &FblLink, tau: f64, m: usize) -> Vec<f64> {
    let n1 = link.n1 as f64;
    let mut v = vec![n1];
    v.extend(std::iter::repeat_n(tau * n1, m.saturating_sub(1)));
    v
}

/// Fraction of the transmit power given to the retransmitted (old) update.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct NomaSplit(f64);

impl NomaSplit {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Domain(format!("power fraction must lie in (0, 1], got {alpha}")));
        }
        Ok(Self(alpha))
    }

    pub fn alpha(self) -> f64 {
        self.0
    }
}

/// How the pending (old) update was first received.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PrevCase {
    /// Sent alone at full power.
    Solo,
    /// Sent superposed; the retransmission it rode along with was decoded and
    /// cancelled, so it saw `(1−α)P`.
    SicOk,
    /// Sent superposed and SIC failed.
    SicFail,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NomaSinrs {
    /// SNR the pending update was received with on its first transmission.
    pub gamma_old_first: f64,
    /// SINR of the retransmitted old update, decoded first with the fresh
    /// update as interference.
    pub gamma_retx: f64,
    /// SNR of the fresh update after the retransmission is cancelled.
    pub gamma_new: f64,
}

/// SINRs of a non-orthogonal slot. The old (retransmitted) update is always
/// decoded first, whatever the split.
pub fn noma_sinrs(
    power: f64,
    split_prev: Option<NomaSplit>,
    split_cur: NomaSplit,
    prev_case: PrevCase,
) -> Result<NomaSinrs> {
    if !(power > 0.0) || !power.is_finite() {
        return Err(Error::Domain(format!("power must be positive, got {power}")));
    }
    let gamma_old_first = match prev_case {
        PrevCase::Solo => power,
        PrevCase::SicOk | PrevCase::SicFail => {
            let prev = split_prev.ok_or_else(|| {
                Error::Domain("previous power split required for a superposed context".into())
            })?;
            let a = prev.alpha();
            if prev_case == PrevCase::SicOk {
                (1.0 - a) * power
            } else {
                (1.0 - a) / a * power
            }
        }
    };
    let a = split_cur.alpha();
    Ok(NomaSinrs {
        gamma_old_first,
        gamma_retx: a * power / (1.0 + (1.0 - a) * power),
        gamma_new: (1.0 - a) * power,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Upper tail of N(0,1) by composite Simpson quadrature of the density on
    /// [x, x + 12].
    fn q_oracle(x: f64) -> f64 {
        let n = 200_000;
        let h = 12.0 / n as f64;
        let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = pdf(x) + pdf(x + 12.0);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * pdf(x + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn q_function_values() {
        assert_eq!(q_function(0.0), 0.5);
        assert_eq!(q_function(40.0), 0.0);
        assert_eq!(q_function(f64::INFINITY), 0.0);
        assert_eq!(q_function(f64::NEG_INFINITY), 1.0);
        assert!((q_function(1.2816) - 0.100).abs() < 1e-4);
        for &x in &[-3.0, -1.0, 0.3, 1.2816, 2.5, 5.0] {
            assert!((q_function(x) - q_oracle(x)).abs() < 1e-10, "x={x}");
            assert!((q_function(-x) - (1.0 - q_function(x))).abs() < 1e-12);
        }
    }

    #[test]
    fn dispersion_values() {
        assert_eq!(dispersion(0.0), 0.0);
        assert!((dispersion(1e6) - LOG2E_SQ).abs() < 1e-3);
        assert!((LOG2E_SQ - 2.0814).abs() < 1e-4);
        let by_hand = 0.75 * (1.0 / std::f64::consts::LN_2).powi(2);
        assert!((dispersion(1.0) - by_hand).abs() < 1e-12);
        assert!((dispersion(1.0) - 1.5610).abs() < 1e-4);
    }

    #[test]
    fn cc_error_examples() {
        let link = FblLink::benchmark();
        let one = eps_cc(&link, &[1.0]).unwrap();
        // (100·1 − 100 + log₂100) / √(100·V(1)) = 6.6439 / 12.4940
        let arg = (100f64.log2()) / (100.0 * dispersion(1.0)).sqrt();
        assert!((arg - 0.5317).abs() < 1e-4);
        assert!((one - q_oracle(arg)).abs() < 1e-9);
        assert!((one - 0.2974).abs() < 1e-3);

        let two = eps_cc(&link, &[1.0, 1.0]).unwrap();
        assert!(two < one);

        let tiny = FblLink { b: 1, ..link };
        assert!(eps_cc(&tiny, &[1.0]).unwrap() < 1e-12);

        assert!(eps_cc(&link, &[]).is_err());
        assert!(eps_cc(&link, &[1.0, 1.0, 1.0]).is_err());
        // zero SNR with b > log2(n): certain failure, not an error
        assert_eq!(eps_cc(&link, &[0.0]).unwrap(), 1.0);
    }

    #[test]
    fn ir_error_examples() {
        let link = FblLink::benchmark();
        let single = eps_ir(&link, &[1.0], &[100.0]).unwrap();
        assert_eq!(single.to_bits(), eps_cc(&link, &[1.0]).unwrap().to_bits());

        let half = eps_ir(&link, &[1.0, 1.0], &[100.0, 50.0]).unwrap();
        let full = eps_ir(&link, &[1.0, 1.0], &[100.0, 100.0]).unwrap();
        assert!(half < single && half > full);

        let tiny = FblLink { b: 1, ..link };
        assert!(eps_ir(&tiny, &[1.0, 1.0], &[100.0, 20.0]).unwrap() < 1e-12);

        assert!(eps_ir(&link, &[1.0], &[50.0]).is_err());
        assert!(eps_ir(&link, &[1.0, 1.0], &[100.0, 0.0]).is_err());
        assert!(eps_ir(&link, &[1.0, 1.0], &[100.0]).is_err());
    }

    #[test]
    fn noma_examples() {
        let s = noma_sinrs(1.0, None, NomaSplit::new(0.5).unwrap(), PrevCase::Solo).unwrap();
        assert_eq!(s.gamma_old_first, 1.0);
        assert!((s.gamma_retx - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.gamma_new, 0.5);

        let s = noma_sinrs(1.0, None, NomaSplit::new(1.0).unwrap(), PrevCase::Solo).unwrap();
        assert_eq!(s.gamma_retx, 1.0);
        assert_eq!(s.gamma_new, 0.0);

        let prev = NomaSplit::new(0.9).unwrap();
        let cur = NomaSplit::new(0.5).unwrap();
        let s = noma_sinrs(1.0, Some(prev), cur, PrevCase::SicFail).unwrap();
        assert!((s.gamma_old_first - 0.1 / 0.9).abs() < 1e-12);
        let s = noma_sinrs(1.0, Some(prev), cur, PrevCase::SicOk).unwrap();
        assert!((s.gamma_old_first - 0.1).abs() < 1e-12);

        assert!(noma_sinrs(1.0, None, cur, PrevCase::SicOk).is_err());
        assert!(NomaSplit::new(0.0).is_err());
        assert!(NomaSplit::new(1.5).is_err());
    }
}
