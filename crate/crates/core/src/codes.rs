//! BCH code parameters, cache-line failure probabilities, and storage
//! overhead of the two-tier chipkill design.
//!
//! The storage-optimized tier protects `k` data bits with a BCH code of
//! length `n = k + t * (ceil(log2 k) + 1)` that corrects up to `t` bit errors.
//! A codeword with more errors than the decoder can handle is either flagged
//! (DUE) or silently miscorrected into a wrong codeword (NDE); the split is
//! set by the miscorrection fraction, the share of the syndrome space that the
//! decoding spheres claim.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{log_binomial, log_binomial_tail, log_sum_exp, LogProb};
use crate::schemes::ExtraReadsFormula;

/// Performance-tier share of the total overhead. Calibrated so that
/// BCH(2312,2048,22) totals 27.0%; the tier split is not itemized anywhere.
pub const DEFAULT_PERF_TIER_OVERHEAD: f64 = 0.1411;

/// Operating point of the NVM technology, worst case at the end of the
/// refresh period.
pub const DEFAULT_RBER: f64 = 2e-4;

/// Above this many check bits the miscorrection sum is evaluated in log space
/// instead of with exact integers.
const EXACT_Q_MAX_CHECK_BITS: u32 = 1024;

/// A binary BCH(n, k, t) code.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CodeSpec {
    /// Data bits per codeword.
    pub k: u32,
    /// Correctable bit errors.
    pub t: u32,
    /// Codeword length in bits.
    pub n: u32,
    /// Fraction of uncorrectable patterns that the decoder miscorrects.
    /// Exactly zero when `t == 0` (no decoding is attempted).
    pub q_miscorrect: LogProb,
}

impl CodeSpec {
    /// BCH code for `k` data bits correcting `t` errors, with the codeword
    /// length derived from the standard length bound.
    pub fn bch(k: u32, t: u32) -> Result<Self> {
        bch_codeword_length(k, t)
    }

    /// A code with an explicit length, for toy codes and degenerate cases
    /// where `t` may reach or exceed `n`.
    pub fn with_length(n: u32, k: u32, t: u32) -> Result<Self> {
        if k == 0 || n < k {
            return Err(Error::Domain(format!(
                "code needs 0 < k <= n, got n={n}, k={k}"
            )));
        }
        let mut code = CodeSpec {
            k,
            t,
            n,
            q_miscorrect: LogProb::ZERO,
        };
        if t > 0 {
            code.q_miscorrect = miscorrection_fraction(&code)?;
        }
        Ok(code)
    }

    pub fn check_bits(&self) -> u32 {
        self.n - self.k
    }
}

/// Which reading of the cache-line DUE sum to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DueFormula {
    /// Binomial tail, `RBER^i (1-RBER)^(n-i)` weighting.
    #[default]
    Corrected,
    /// `RBER^i * RBER^(n-i)` literally, which collapses to `RBER^n` per term.
    AsPrinted,
}

/// Error count at which the storage-optimized tier gives up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailThreshold {
    /// Failure needs at least t+1 errors.
    #[default]
    MoreThanT,
    /// Failure at t errors already (sensitivity variant).
    AtLeastT,
}

/// Unit whose failure probability is composed into a physical-block failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockGranularity {
    /// Exponent b/c: one independent failure per cache line.
    #[default]
    CacheLine,
    /// Exponent ceil(8b/k): one independent failure per codeword touched.
    Codeword,
}

/// Switches between alternative readings of the model's formulas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelVariants {
    pub due_formula: DueFormula,
    pub tail_threshold: TailThreshold,
    pub block_granularity: BlockGranularity,
    pub pb_extra_reads: ExtraReadsFormula,
    pub ec_extra_reads: ExtraReadsFormula,
}

impl ModelVariants {
    /// Corrected DUE sum, strictly-more-than-t threshold, per-line exponent,
    /// primary-backup reads as printed, erasure-coding reads corrected.
    pub fn standard() -> Self {
        ModelVariants {
            due_formula: DueFormula::Corrected,
            tail_threshold: TailThreshold::MoreThanT,
            block_granularity: BlockGranularity::CacheLine,
            pb_extra_reads: ExtraReadsFormula::AsPrinted,
            ec_extra_reads: ExtraReadsFormula::Corrected,
        }
    }
}

impl Default for ModelVariants {
    fn default() -> Self {
        ModelVariants::standard()
    }
}

/// Memory technology and geometry. Missing fields take the defaults of the
/// studied design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoryConfig {
    /// Raw bit error rate.
    pub rber: f64,
    pub cache_line_bytes: u32,
    pub block_bytes: u32,
    /// Fraction of data size spent on performance-tier protection bits.
    pub perf_tier_overhead: f64,
    /// Probability that an error event escapes the performance tier and
    /// reaches the BCH tier.
    pub perf_filter: f64,
    pub variants: ModelVariants,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        MemoryConfig {
            rber: DEFAULT_RBER,
            cache_line_bytes: 64,
            block_bytes: 64,
            perf_tier_overhead: DEFAULT_PERF_TIER_OVERHEAD,
            perf_filter: 1.0,
            variants: ModelVariants::standard(),
        }
    }
}

impl MemoryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rber > 0.0 && self.rber < 1.0) {
            return Err(Error::config(
                "rber",
                format!("must lie in (0,1), got {}", self.rber),
            ));
        }
        if self.cache_line_bytes == 0 {
            return Err(Error::config("cache_line_bytes", "must be positive"));
        }
        if self.block_bytes == 0 || !self.block_bytes.is_multiple_of(self.cache_line_bytes) {
            return Err(Error::config(
                "block_bytes",
                format!(
                    "must be a positive multiple of cache_line_bytes ({}), got {}",
                    self.cache_line_bytes, self.block_bytes
                ),
            ));
        }
        if !(self.perf_tier_overhead >= 0.0 && self.perf_tier_overhead.is_finite()) {
            return Err(Error::config(
                "perf_tier_overhead",
                "must be a finite value >= 0",
            ));
        }
        if !(self.perf_filter > 0.0 && self.perf_filter <= 1.0) {
            return Err(Error::config(
                "perf_filter",
                format!("must lie in (0,1], got {}", self.perf_filter),
            ));
        }
        Ok(())
    }

    /// Number of independently failing units per physical block.
    pub fn units_per_block(&self, code: &CodeSpec) -> Result<u64> {
        self.validate()?;
        Ok(match self.variants.block_granularity {
            BlockGranularity::CacheLine => u64::from(self.block_bytes / self.cache_line_bytes),
            BlockGranularity::Codeword => {
                (u64::from(self.block_bytes) * 8).div_ceil(u64::from(code.k))
            }
        })
    }
}

fn ceil_log2(k: u32) -> u32 {
    32 - (k - 1).leading_zeros()
}

/// Derives `n = k + t * (ceil(log2 k) + 1)`.
pub fn bch_codeword_length(k: u32, t: u32) -> Result<CodeSpec> {
    if k < 2 {
        return Err(Error::Domain(format!(
            "BCH data length must be >= 2 bits, got {k}"
        )));
    }
    let check = u64::from(t) * u64::from(ceil_log2(k) + 1);
    let n = u32::try_from(u64::from(k) + check)
        .map_err(|_| Error::Domain(format!("codeword length overflows for k={k}, t={t}")))?;
    CodeSpec::with_length(n, k, t)
}

/// Share of the `2^(n-k)` syndromes claimed by radius-`t` decoding spheres,
/// `min(1, sum_{i<=t} C(n,i) / 2^(n-k))`.
pub fn miscorrection_fraction(code: &CodeSpec) -> Result<LogProb> {
    if code.t == 0 {
        return Err(Error::Domain(
            "miscorrection needs t >= 1 (no decoding spheres)".into(),
        ));
    }
    let radius = code.t.min(code.n);
    let check = code.check_bits();
    let ln_q = if check <= EXACT_Q_MAX_CHECK_BITS {
        let mut term = BigUint::one();
        let mut sum = BigUint::zero();
        for i in 0..=radius {
            sum += &term;
            term = term * (code.n - i) / (i + 1);
        }
        ln_biguint(&sum) - f64::from(check) * std::f64::consts::LN_2
    } else {
        let terms = (0..=u64::from(radius))
            .map(|i| log_binomial(u64::from(code.n), i))
            .collect::<Result<Vec<_>>>()?;
        log_sum_exp(&terms)? - f64::from(check) * std::f64::consts::LN_2
    };
    Ok(LogProb::from_ln_clamped(ln_q.min(0.0)))
}

pub(crate) fn ln_biguint(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 1000 {
        return x.to_f64().expect("fits in f64").ln();
    }
    let shift = bits - 64;
    let top = (x >> shift).to_f64().expect("64-bit value");
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

/// `f * P(uncorrectable error count)`: the part of the error distribution the
/// BCH tier cannot correct, before splitting into DUE and NDE.
pub fn uncorrectable_prob(code: &CodeSpec, cfg: &MemoryConfig) -> Result<LogProb> {
    cfg.validate()?;
    let threshold = match cfg.variants.tail_threshold {
        TailThreshold::MoreThanT => u64::from(code.t) + 1,
        TailThreshold::AtLeastT => u64::from(code.t),
    };
    let n = u64::from(code.n);
    let tail = match cfg.variants.due_formula {
        DueFormula::Corrected => log_binomial_tail(n, threshold, cfg.rber)?,
        DueFormula::AsPrinted => {
            // sum_{i>=th} C(n,i) RBER^n = RBER^n 2^n P(Bin(n, 1/2) >= th)
            let fair = log_binomial_tail(n, threshold, 0.5)?;
            if fair.is_zero() {
                fair
            } else {
                let ln = n as f64 * (cfg.rber.ln() + std::f64::consts::LN_2) + fair.ln();
                LogProb::from_ln_clamped(ln)
            }
        }
    };
    Ok(LogProb::from_prob(cfg.perf_filter)? * tail)
}

/// Cache-line failure probability due to a detected-but-uncorrectable error.
pub fn cache_line_due(code: &CodeSpec, cfg: &MemoryConfig) -> Result<LogProb> {
    Ok(uncorrectable_prob(code, cfg)? * code.q_miscorrect.complement())
}

/// Cache-line failure probability due to silent miscorrection.
pub fn cache_line_nde(code: &CodeSpec, cfg: &MemoryConfig) -> Result<LogProb> {
    if code.t == 0 {
        return Err(Error::Domain(
            "NDE needs t >= 1 (no decoder to miscorrect)".into(),
        ));
    }
    Ok(uncorrectable_prob(code, cfg)? * code.q_miscorrect)
}

/// Per-replica storage overhead over an unprotected layout of the same scheme.
pub fn storage_overhead(code: &CodeSpec, cfg: &MemoryConfig) -> f64 {
    cfg.perf_tier_overhead + f64::from(code.check_bits()) / f64::from(code.k)
}
