//! Log-space probability arithmetic.
//!
//! The model's quantities span roughly 1e-5 down to well below 1e-300 once
//! logical-block probabilities are raised to the replica count, so every
//! probability is carried as its natural logarithm and only converted back to
//! a linear value at report boundaries.

use std::f64::consts::{LN_10, LN_2};
use std::fmt;

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// Stop summing a tail once the geometric bound on the remainder drops below
/// this fraction of the running sum.
const TAIL_STOP_RELATIVE: f64 = 1e-30;

/// Up to this many factors, ln C(n,k) is accumulated term by term instead of
/// through log-gamma differences, which lose digits to cancellation.
const DIRECT_SUM_MAX_K: u64 = 5000;

/// Natural logarithm of a probability. `-inf` encodes exactly zero.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LogProb(f64);

impl LogProb {
    pub const ZERO: LogProb = LogProb(f64::NEG_INFINITY);
    pub const ONE: LogProb = LogProb(0.0);

    /// Wraps a natural-log value; it must be `<= 0` (or `-inf`).
    pub fn from_ln(ln: f64) -> Result<Self> {
        if ln.is_nan() || ln > 0.0 {
            return Err(Error::Domain(format!(
                "log-probability must be <= 0, got {ln}"
            )));
        }
        Ok(LogProb(ln))
    }

    /// Rounding in composite expressions can leave a log-probability a few
    /// ulps above zero; those are clamped to certainty.
    pub(crate) fn from_ln_clamped(ln: f64) -> Self {
        debug_assert!(!ln.is_nan());
        debug_assert!(
            ln <= 1e-9,
            "log-probability {ln} is not a rounding artifact"
        );
        LogProb(ln.min(0.0))
    }

    pub fn from_prob(p: f64) -> Result<Self> {
        check_prob(p, "probability")?;
        Ok(LogProb(p.ln()))
    }

    pub fn ln(self) -> f64 {
        self.0
    }

    pub fn log10(self) -> f64 {
        self.0 / LN_10
    }

    /// Linear value; underflows to 0 below ~1e-308.
    pub fn prob(self) -> f64 {
        self.0.exp()
    }

    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    pub fn powi(self, exponent: u32) -> LogProb {
        if exponent == 0 {
            return LogProb::ONE;
        }
        LogProb(self.0 * f64::from(exponent))
    }

    /// ln(1 - p).
    pub fn complement(self) -> LogProb {
        LogProb(log1mexp(self.0))
    }

    /// Scientific notation derived from the logarithm, so values below the
    /// f64 range still print (e.g. `3.141593e-412`).
    pub fn to_sci_string(self) -> String {
        if self.is_zero() {
            return "0".to_string();
        }
        let l10 = self.log10();
        let mut exponent = l10.floor();
        let mut mantissa = 10f64.powf(l10 - exponent);
        // 9.9999996 rounds up to 10.000000 at six decimals
        if format!("{mantissa:.6}").starts_with("10") {
            mantissa /= 10.0;
            exponent += 1.0;
        }
        format!("{mantissa:.6}e{}", exponent as i64)
    }
}

/// Product of independent probabilities.
#[allow(clippy::suspicious_arithmetic_impl)]
impl std::ops::Mul for LogProb {
    type Output = LogProb;

    fn mul(self, other: LogProb) -> LogProb {
        LogProb(self.0 + other.0)
    }
}

impl fmt::Display for LogProb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_sci_string())
    }
}

/// Serialized as `{ "value": <linear>, "log10": <log10 or null for zero> }`.
impl Serialize for LogProb {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("LogProb", 2)?;
        s.serialize_field("value", &self.prob())?;
        let l10 = if self.is_zero() {
            None
        } else {
            Some(self.log10())
        };
        s.serialize_field("log10", &l10)?;
        s.end()
    }
}

pub(crate) fn check_prob(p: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("{what} must lie in [0,1], got {p}")));
    }
    Ok(())
}

/// ln(1 - e^x) for x <= 0, switching between the two stable forms at -ln 2.
pub fn log1mexp(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        0.0
    } else if x > -LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// Exact C(n,k) for n <= 64 (the largest value, C(64,32), fits in a u64).
pub fn binomial_exact(n: u64, k: u64) -> Option<u128> {
    if k > n || n > 64 {
        return None;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) at every step
        acc = acc * u128::from(n - i) / u128::from(i + 1);
    }
    Some(acc)
}

/// ln C(n, k).
pub fn log_binomial(n: u64, k: u64) -> Result<f64> {
    if k > n {
        return Err(Error::Domain(format!("C({n},{k}) requires k <= n")));
    }
    if let Some(exact) = binomial_exact(n, k) {
        return Ok((exact as f64).ln());
    }
    let kk = k.min(n - k);
    if kk <= DIRECT_SUM_MAX_K {
        // ln C(n,kk) = sum_{i=1}^{kk} ln(1 + (n-kk)/i)
        let rest = (n - kk) as f64;
        return Ok((1..=kk).map(|i| (rest / i as f64).ln_1p()).sum());
    }
    let (n, kk) = (n as f64, kk as f64);
    Ok(libm::lgamma(n + 1.0) - libm::lgamma(kk + 1.0) - libm::lgamma(n - kk + 1.0))
}

/// ln P(X >= threshold) for X ~ Binomial(n, p).
///
/// Any threshold above `n` yields exactly zero.
pub fn log_binomial_tail(n: u64, threshold: u64, p: f64) -> Result<LogProb> {
    check_prob(p, "p")?;
    Ok(binomial_tail_ln(n, threshold, p.ln(), (-p).ln_1p()))
}

/// Tail with the success probability supplied in log space, so `p` itself may
/// lie below the f64 range. `ln_q` is ln(1 - p).
pub fn log_binomial_tail_lp(n: u64, threshold: u64, p: LogProb) -> LogProb {
    binomial_tail_ln(n, threshold, p.ln(), p.complement().ln())
}

fn binomial_tail_ln(n: u64, threshold: u64, ln_p: f64, ln_q: f64) -> LogProb {
    if threshold == 0 {
        return LogProb::ONE;
    }
    if threshold > n || ln_p == f64::NEG_INFINITY {
        return LogProb::ZERO;
    }
    if ln_q == f64::NEG_INFINITY {
        return LogProb::ONE;
    }

    let mean = n as f64 * ln_p.exp();
    if (threshold as f64) <= mean {
        // Upper tail is large: take the complement of the lower tail, whose
        // terms shrink going down from threshold-1 (which lies below the mode).
        let top = threshold - 1;
        let first = log_term(n, top, ln_p, ln_q);
        let inv_odds = (ln_q - ln_p).exp();
        let lower = ln_series(first, top, |step| {
            let i = top - step + 1;
            i as f64 / (n - i + 1) as f64 * inv_odds
        });
        return LogProb::from_ln_clamped(log1mexp(lower.min(0.0)));
    }

    let first = log_term(n, threshold, ln_p, ln_q);
    let odds = (ln_p - ln_q).exp();
    let upper = ln_series(first, n - threshold, |step| {
        let i = threshold + step - 1;
        (n - i) as f64 / (i + 1) as f64 * odds
    });
    LogProb::from_ln_clamped(upper)
}

/// ln [C(n,i) p^i (1-p)^(n-i)].
fn log_term(n: u64, i: u64, ln_p: f64, ln_q: f64) -> f64 {
    let mut ln = log_binomial(n, i).expect("i <= n");
    if i > 0 {
        ln += i as f64 * ln_p;
    }
    if i < n {
        ln += (n - i) as f64 * ln_q;
    }
    ln
}

/// ln of a positive series given its first term (in log space) and the
/// ratio between consecutive terms, `ratio(s) = term_s / term_{s-1}` for
/// `s = 1..=steps`. Ratios must be non-increasing: once one drops below 1,
/// the remainder after the current term is at most `next / (1 - ratio)`, and
/// summation stops when that bound is negligible.
fn ln_series(first: f64, steps: u64, mut ratio: impl FnMut(u64) -> f64) -> f64 {
    let mut acc = 1.0f64;
    let mut term = 1.0f64;
    let mut offset = 0.0f64;
    for s in 1..=steps {
        let r = ratio(s);
        term *= r;
        if term == 0.0 {
            break;
        }
        acc += term;
        if r < 1.0 && term * r / (1.0 - r) < TAIL_STOP_RELATIVE * acc {
            break;
        }
        if term > 1e250 {
            offset += term.ln();
            acc /= term;
            term = 1.0;
        }
    }
    first + acc.ln() + offset
}

/// 1 - (1 - p)^m, accurate for p far below machine epsilon.
pub fn complement_power(p: f64, m: u64) -> Result<f64> {
    check_prob(p, "p")?;
    if m == 0 {
        return Err(Error::Domain("exponent m must be >= 1".into()));
    }
    Ok(-(m as f64 * (-p).ln_1p()).exp_m1())
}

/// Log-space [`complement_power`].
pub fn complement_power_lp(p: LogProb, m: u64) -> Result<LogProb> {
    if m == 0 {
        return Err(Error::Domain("exponent m must be >= 1".into()));
    }
    if m == 1 {
        return Ok(p);
    }
    if p.ln() < -700.0 {
        // (1-p)^m = 1 - m p + O(p^2) and p^2 is far below representable
        return Ok(LogProb::from_ln_clamped(p.ln() + (m as f64).ln()));
    }
    let y = m as f64 * p.complement().ln();
    Ok(LogProb::from_ln_clamped(log1mexp(y)))
}

/// ln sum exp(terms), shifted by the maximum.
pub fn log_sum_exp(terms: &[f64]) -> Result<f64> {
    let max = terms
        .iter()
        .copied()
        .fold(None, |m: Option<f64>, t| Some(m.map_or(t, |m| m.max(t))))
        .ok_or_else(|| Error::Domain("log_sum_exp of an empty list".into()))?;
    if max == f64::NEG_INFINITY {
        return Ok(max);
    }
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    Ok(max + sum.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn log_binomial_examples() {
        assert!(rel(log_binomial(5, 3).unwrap(), 10f64.ln()) < 1e-15);
        assert_eq!(log_binomial(7, 0).unwrap(), 0.0);
        // ln C(2312,23) from exact big-integer arithmetic
        assert!(rel(log_binomial(2312, 23).unwrap(), 126.438_507_933_283_72) < 1e-13);
        assert!(matches!(log_binomial(3, 4), Err(Error::Domain(_))));
    }

    #[test]
    fn log_binomial_paths_agree() {
        // direct sum vs log-gamma just past the switch-over
        let n = 20_000u64;
        let k = DIRECT_SUM_MAX_K + 1;
        let direct: f64 = (1..=k).map(|i| ((n - k) as f64 / i as f64).ln_1p()).sum();
        assert!(rel(log_binomial(n, k).unwrap(), direct) < 1e-12);
    }

    #[test]
    fn tail_examples() {
        assert_eq!(log_binomial_tail(10, 0, 0.3).unwrap(), LogProb::ONE);
        assert!(rel(log_binomial_tail(2, 2, 0.5).unwrap().ln(), 0.25f64.ln()) < 1e-15);
        assert!(log_binomial_tail(4, 5, 0.3).unwrap().is_zero());
        assert!(log_binomial_tail(4, 1, 1.5).is_err());
        assert_eq!(log_binomial_tail(4, 1, 1.0).unwrap(), LogProb::ONE);
        assert!(log_binomial_tail(4, 1, 0.0).unwrap().is_zero());
    }

    #[test]
    fn tail_near_certain_and_huge_n() {
        // p = 0.5, threshold 1 on n = 10^6: the terms climb ~10^300000 before
        // peaking, exercising the rescaling path.
        let lp = log_binomial_tail(1_000_000, 1, 0.5).unwrap();
        assert!(lp.ln() > -1e-12 && lp.ln() <= 0.0);
        let half = log_binomial_tail(1_000_001, 500_001, 0.5).unwrap();
        assert!((half.prob() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn complement_power_examples() {
        assert_eq!(complement_power(0.0, 4).unwrap(), 0.0);
        assert_eq!(complement_power(0.37, 1).unwrap(), 0.37);
        assert!(rel(complement_power(1e-3, 4).unwrap(), 3.994_003_999e-3) < 1e-12);
        assert!(rel(complement_power(1e-35, 8).unwrap(), 8e-35) < 1e-12);
        assert_eq!(complement_power(1.0, 3).unwrap(), 1.0);
        assert!(complement_power(0.1, 0).is_err());
    }

    #[test]
    fn complement_power_lp_below_f64_range() {
        let tiny = LogProb::from_ln(-1000.0).unwrap();
        let got = complement_power_lp(tiny, 4).unwrap();
        assert!((got.ln() - (-1000.0 + 4f64.ln())).abs() < 1e-12);
        let p = LogProb::from_prob(1e-3).unwrap();
        assert!(rel(complement_power_lp(p, 4).unwrap().prob(), 3.994_003_999e-3) < 1e-12);
    }

    #[test]
    fn log_sum_exp_examples() {
        let got = log_sum_exp(&[0.25f64.ln(), 0.75f64.ln()]).unwrap();
        assert!(got.abs() < 1e-15);
        assert_eq!(log_sum_exp(&[-3.5]).unwrap(), -3.5);
        let tiny = 1e-300f64.ln();
        assert!(rel(log_sum_exp(&[tiny, tiny]).unwrap(), 2e-300f64.ln()) < 1e-15);
        assert!(log_sum_exp(&[]).is_err());
        assert_eq!(
            log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]).unwrap(),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn logprob_basics() {
        assert!(LogProb::from_ln(0.1).is_err());
        assert!(LogProb::from_prob(1.2).is_err());
        let p = LogProb::from_prob(0.25).unwrap();
        assert!(rel(p.complement().prob(), 0.75) < 1e-15);
        assert_eq!(LogProb::ZERO.complement(), LogProb::ONE);
        assert!(LogProb::ONE.complement().is_zero());
        assert_eq!(LogProb::ZERO.to_sci_string(), "0");
        assert_eq!(
            LogProb::from_ln(-1000.0).unwrap().to_sci_string(),
            "5.075959e-435"
        );
        assert_eq!(
            LogProb::from_prob(1e-3).unwrap().to_sci_string(),
            "1.000000e-3"
        );
        let json = serde_json::to_string(&LogProb::from_prob(0.01).unwrap()).unwrap();
        assert!(json.starts_with("{\"value\":0.01"));
        assert_eq!(
            serde_json::to_string(&LogProb::ZERO).unwrap(),
            "{\"value\":0.0,\"log10\":null}"
        );
    }

    proptest! {
        #[test]
        fn tail_monotone(n in 1u64..400, t in 0u64..400, p in 0.0f64..1.0, dp in 0.0f64..0.1) {
            let t = t.min(n);
            let a = log_binomial_tail(n, t, p).unwrap();
            let b = log_binomial_tail(n, t + 1, p).unwrap();
            prop_assert!(b.ln() <= a.ln() + 1e-12);
            let p2 = (p + dp).min(1.0);
            let c = log_binomial_tail(n, t, p2).unwrap();
            prop_assert!(c.ln() >= a.ln() - 1e-12 * a.ln().abs().max(1.0));
        }

        #[test]
        fn complement_power_sandwich(p in 0.0f64..=1.0, m in 1u64..1000) {
            let v = complement_power(p, m).unwrap();
            let upper = (m as f64 * p).min(1.0);
            prop_assert!(v >= p * (1.0 - 1e-12));
            prop_assert!(v <= upper * (1.0 + 1e-12));
        }

        #[test]
        fn complement_power_composes(lnp in -80.0f64..-1e-3, a in 1u64..200, b in 1u64..200) {
            let p = lnp.exp();
            let ca = complement_power(p, a).unwrap();
            let cb = complement_power(p, b).unwrap();
            let whole = complement_power(p, a + b).unwrap();
            // 1 - (1-ca)(1-cb) = ca + cb - ca*cb
            let composed = ca + cb - ca * cb;
            prop_assert!(rel(composed, whole) <= 1e-10);
        }
    }
}
