//! Physical-block and logical-block reliability for the supported replication
//! layouts, the code-strength optimizer, and parameter sweeps.
//!
//! A physical block fails when any of its cache lines fails. A logical block
//! maps onto `N` physical blocks: primary-backup reads them in sequence until
//! one succeeds, erasure coding needs any `K` of the `N`. Reads that hit a
//! DUE fall back to the next block; the expected number of extra reads is
//! the performance cost of relying on replicas.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codes::{cache_line_due, cache_line_nde, storage_overhead, CodeSpec, MemoryConfig};
use crate::error::{Constraint, Error, Result};
use crate::numerics::{
    check_prob, complement_power_lp, log_binomial, log_binomial_tail, log_binomial_tail_lp, LogProb,
};

/// Search limit for the optimizer.
pub const DEFAULT_T_MAX: u32 = 512;

/// Data bits per codeword in the studied design.
pub const DEFAULT_K: u32 = 2048;

/// Code strength of the unreplicated chipkill design.
pub const REFERENCE_T: u32 = 22;

/// Replication layout of one logical block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", try_from = "RawScheme")]
pub enum Scheme {
    Baseline,
    PrimaryBackup { n: u32 },
    ErasureCode { n: u32, k: u32 },
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case")]
enum SchemeKind {
    Baseline,
    PrimaryBackup,
    ErasureCode,
}

/// Wire form of [`Scheme`]; rejects fields that do not belong to the kind.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScheme {
    kind: SchemeKind,
    n: Option<u32>,
    k: Option<u32>,
}

impl TryFrom<RawScheme> for Scheme {
    type Error = Error;

    fn try_from(raw: RawScheme) -> Result<Self> {
        let scheme = match (raw.kind, raw.n, raw.k) {
            (SchemeKind::Baseline, None, None) => Scheme::Baseline,
            (SchemeKind::PrimaryBackup, Some(n), None) => Scheme::PrimaryBackup { n },
            (SchemeKind::ErasureCode, Some(n), Some(k)) => Scheme::ErasureCode { n, k },
            (SchemeKind::Baseline, ..) => {
                return Err(Error::config("scheme", "baseline takes no n or k"))
            }
            (SchemeKind::PrimaryBackup, ..) => {
                return Err(Error::config("scheme", "primary_backup takes n and no k"))
            }
            (SchemeKind::ErasureCode, ..) => {
                return Err(Error::config("scheme", "erasure_code needs both n and k"))
            }
        };
        scheme.validate()?;
        Ok(scheme)
    }
}

impl Scheme {
    pub fn primary_backup(n: u32) -> Result<Self> {
        let s = Scheme::PrimaryBackup { n };
        s.validate()?;
        Ok(s)
    }

    pub fn erasure_code(n: u32, k: u32) -> Result<Self> {
        let s = Scheme::ErasureCode { n, k };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Scheme::Baseline => Ok(()),
            Scheme::PrimaryBackup { n } if n >= 1 => Ok(()),
            Scheme::PrimaryBackup { n } => Err(Error::config(
                "scheme.n",
                format!("primary-backup needs N >= 1, got {n}"),
            )),
            Scheme::ErasureCode { n, k } if k >= 1 && n > k => Ok(()),
            Scheme::ErasureCode { n, k } => Err(Error::config(
                "scheme",
                format!("erasure coding needs N > K >= 1, got N={n}, K={k}"),
            )),
        }
    }

    /// Physical blocks per logical block (N).
    pub fn total_blocks(&self) -> u32 {
        match *self {
            Scheme::Baseline => 1,
            Scheme::PrimaryBackup { n } | Scheme::ErasureCode { n, .. } => n,
        }
    }

    /// Blocks needed to reconstruct the logical block (K).
    pub fn data_blocks(&self) -> u32 {
        match *self {
            Scheme::ErasureCode { k, .. } => k,
            _ => 1,
        }
    }

    /// Same layout kind with a different block count.
    pub fn with_total_blocks(&self, n: u32) -> Result<Self> {
        let s = match *self {
            Scheme::Baseline => {
                return Err(Error::config(
                    "scheme",
                    "baseline has no replica count to vary",
                ))
            }
            Scheme::PrimaryBackup { .. } => Scheme::PrimaryBackup { n },
            Scheme::ErasureCode { k, .. } => Scheme::ErasureCode { n, k },
        };
        s.validate()?;
        Ok(s)
    }

    /// Short name used in file names and tables.
    pub fn label(&self) -> String {
        match *self {
            Scheme::Baseline => "baseline".into(),
            Scheme::PrimaryBackup { n } => format!("pb{n}"),
            Scheme::ErasureCode { n, k } => format!("ec{n}_{k}"),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Scheme::Baseline => write!(f, "Baseline"),
            Scheme::PrimaryBackup { n } => write!(f, "PrimaryBackup(N={n})"),
            Scheme::ErasureCode { n, k } => write!(f, "ErasureCode(N={n}, K={k})"),
        }
    }
}

/// Which expression to use for the expected number of extra block reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtraReadsFormula {
    /// The closed form as originally written. Not normalized: the
    /// primary-backup sum drops the all-blocks-fail outcome, and the
    /// erasure-coding sum carries an extra C(N, K+i) factor.
    AsPrinted,
    /// Exact expectation of the sequential read procedure.
    Corrected,
}

impl FromStr for ExtraReadsFormula {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "as_printed" | "as-printed" => Ok(ExtraReadsFormula::AsPrinted),
            "corrected" => Ok(ExtraReadsFormula::Corrected),
            other => Err(Error::Domain(format!(
                "unknown extra-reads variant {other:?}"
            ))),
        }
    }
}

/// 1 - (1 - p_c)^units over the cache lines (or codewords) of one block.
pub fn block_fail_prob(p_c: LogProb, cfg: &MemoryConfig, code: &CodeSpec) -> Result<LogProb> {
    complement_power_lp(p_c, cfg.units_per_block(code)?)
}

/// Primary-backup logical failure: every one of the N replicas fails.
pub fn pb_logical_due(p_b: LogProb, n: u32) -> LogProb {
    p_b.powi(n)
}

/// Expected extra reads under primary-backup fallback.
pub fn pb_extra_reads(p_b: f64, n: u32, formula: ExtraReadsFormula) -> Result<f64> {
    check_prob(p_b, "p_b")?;
    if n == 0 {
        return Err(Error::Domain("N must be >= 1".into()));
    }
    // Block j+1 is read iff the first j all failed.
    let partial: f64 = (1..n).map(|j| p_b.powi(j as i32)).sum();
    Ok(match formula {
        // -1 + sum_{i<N} p^i (1-p)(i+1) telescopes to sum_{1<=i<N} p^i - N p^N
        ExtraReadsFormula::AsPrinted => partial - f64::from(n) * p_b.powi(n as i32),
        ExtraReadsFormula::Corrected => partial,
    })
}

/// Erasure-coded logical failure: at least N-K+1 of the N blocks fail.
pub fn ec_logical_due(p_b: LogProb, n: u32, k: u32) -> Result<LogProb> {
    if k == 0 || k >= n {
        return Err(Error::Domain(format!(
            "erasure coding needs N > K >= 1, got N={n}, K={k}"
        )));
    }
    Ok(log_binomial_tail_lp(
        u64::from(n),
        u64::from(n - k + 1),
        p_b,
    ))
}

/// Expected extra reads beyond the K needed by an erasure-coded read.
pub fn ec_extra_reads(p_b: f64, n: u32, k: u32, formula: ExtraReadsFormula) -> Result<f64> {
    check_prob(p_b, "p_b")?;
    if k == 0 || k >= n {
        return Err(Error::Domain(format!(
            "erasure coding needs N > K >= 1, got N={n}, K={k}"
        )));
    }
    match formula {
        ExtraReadsFormula::AsPrinted => {
            let (nn, kk) = (u64::from(n), u64::from(k));
            let mut sum = 0.0;
            for i in 0..=(nn - kk) {
                let ways = (log_binomial(nn, kk + i)? + log_binomial(kk + i - 1, i)?).exp();
                sum += ways * p_b.powi(i as i32) * (1.0 - p_b).powi(k as i32 - 1) * (kk + i) as f64;
            }
            Ok(sum - f64::from(k))
        }
        ExtraReadsFormula::Corrected => {
            // Read j > K happens iff the first j-1 reads held fewer than K
            // successes, i.e. at least j-K failures.
            let mut sum = 0.0;
            for j in (k + 1)..=n {
                sum += log_binomial_tail(u64::from(j - 1), u64::from(j - k), p_b)?.prob();
            }
            Ok(sum)
        }
    }
}

/// Every probability in the model for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReliabilityReport {
    pub p_c_due: LogProb,
    pub p_c_nde: LogProb,
    pub p_b_due: LogProb,
    /// Per individual replica; replication does not mask silent corruption.
    pub p_b_nde: LogProb,
    pub p_lb_due: LogProb,
    /// Expected additional physical-block reads per logical read.
    pub a_r: f64,
    pub overhead_total: f64,
    pub scheme: Scheme,
    pub code: CodeSpec,
    pub cfg: MemoryConfig,
}

/// Evaluates the full model for one code, memory configuration and scheme.
pub fn analyze(code: &CodeSpec, cfg: &MemoryConfig, scheme: &Scheme) -> Result<ReliabilityReport> {
    cfg.validate()?;
    scheme.validate()?;
    let p_c_due = cache_line_due(code, cfg)?;
    let p_c_nde = if code.t == 0 {
        LogProb::ZERO
    } else {
        cache_line_nde(code, cfg)?
    };
    let p_b_due = block_fail_prob(p_c_due, cfg, code)?;
    let p_b_nde = block_fail_prob(p_c_nde, cfg, code)?;

    let (p_lb_due, a_r) = match *scheme {
        Scheme::Baseline => (p_b_due, 0.0),
        Scheme::PrimaryBackup { n } => (
            pb_logical_due(p_b_due, n),
            pb_extra_reads(p_b_due.prob(), n, cfg.variants.pb_extra_reads)?,
        ),
        Scheme::ErasureCode { n, k } => (
            ec_logical_due(p_b_due, n, k)?,
            ec_extra_reads(p_b_due.prob(), n, k, cfg.variants.ec_extra_reads)?,
        ),
    };

    Ok(ReliabilityReport {
        p_c_due,
        p_c_nde,
        p_b_due,
        p_b_nde,
        p_lb_due,
        a_r,
        overhead_total: storage_overhead(code, cfg),
        scheme: *scheme,
        code: *code,
        cfg: *cfg,
    })
}

/// Reliability targets for the optimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Targets {
    /// Upper bound on logical-block DUE probability.
    pub due: LogProb,
    /// Optional upper bound on per-replica NDE probability.
    pub nde: Option<LogProb>,
}

impl Targets {
    pub fn due_only(due: LogProb) -> Self {
        Targets { due, nde: None }
    }

    fn validate(&self) -> Result<()> {
        for (name, t) in [("target_due", Some(self.due)), ("target_nde", self.nde)] {
            if let Some(t) = t {
                if t.is_zero() {
                    return Err(Error::config(name, "target must be > 0"));
                }
            }
        }
        Ok(())
    }

    fn met_by(&self, report: &ReliabilityReport) -> (bool, bool) {
        let due_ok = report.p_lb_due.ln() <= self.due.ln();
        let nde_ok = self.nde.is_none_or(|nde| report.p_b_nde.ln() <= nde.ln());
        (due_ok, nde_ok)
    }
}

/// Logical DUE of the unreplicated design at the reference strength, used as
/// the default target.
pub fn reference_due(cfg: &MemoryConfig, k: u32) -> Result<LogProb> {
    let code = CodeSpec::bch(k, REFERENCE_T)?;
    Ok(analyze(&code, cfg, &Scheme::Baseline)?.p_lb_due)
}

/// Weakest code (smallest t) meeting the targets, found by linear scan.
pub fn optimize(
    cfg: &MemoryConfig,
    scheme: &Scheme,
    targets: &Targets,
    k: u32,
    t_max: u32,
) -> Result<ReliabilityReport> {
    targets.validate()?;
    let mut due_reached = false;
    for t in 0..=t_max {
        let report = analyze(&CodeSpec::bch(k, t)?, cfg, scheme)?;
        let (due_ok, nde_ok) = targets.met_by(&report);
        if due_ok && nde_ok {
            return Ok(report);
        }
        due_reached |= due_ok;
    }
    let binding = if due_reached {
        Constraint::Nde
    } else {
        Constraint::Due
    };
    Err(Error::Infeasible { binding, t_max })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    T,
    BlockBytes,
    #[serde(alias = "N")]
    N,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::T => "t",
            SweepAxis::BlockBytes => "block_bytes",
            SweepAxis::N => "N",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// Model outputs at each axis value.
    Raw,
    /// Minimal overhead meeting the target at each axis value.
    OverheadAtTarget,
}

/// Everything a sweep holds fixed.
#[derive(Debug, Clone, Copy)]
pub struct SweepParams {
    pub cfg: MemoryConfig,
    pub scheme: Scheme,
    pub k: u32,
    /// Code strength for raw sweeps over block size or replica count.
    pub t: u32,
    pub targets: Targets,
    pub t_max: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis_value: u64,
    /// Code strength used (raw) or chosen by the optimizer (target mode).
    pub t: Option<u32>,
    pub overhead_total: Option<f64>,
    pub p_lb_due: Option<LogProb>,
    pub p_b_nde: Option<LogProb>,
    pub a_r: Option<f64>,
    /// Set when no t up to the limit meets the targets.
    pub infeasible: Option<String>,
}

impl SweepRow {
    fn from_report(axis_value: u64, r: &ReliabilityReport) -> Self {
        SweepRow {
            axis_value,
            t: Some(r.code.t),
            overhead_total: Some(r.overhead_total),
            p_lb_due: Some(r.p_lb_due),
            p_b_nde: Some(r.p_b_nde),
            a_r: Some(r.a_r),
            infeasible: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub mode: SweepMode,
    pub scheme: Scheme,
    pub rows: Vec<SweepRow>,
}

/// Evaluates one row per axis value. Rows are independent and computed in
/// parallel; output order is always ascending axis value.
pub fn sweep(
    axis: SweepAxis,
    values: &[u64],
    params: &SweepParams,
    mode: SweepMode,
) -> Result<SweepTable> {
    if values.is_empty() {
        return Err(Error::config("sweep.values", "range must not be empty"));
    }
    if axis == SweepAxis::T && mode == SweepMode::OverheadAtTarget {
        return Err(Error::config(
            "sweep.axis",
            "t cannot be swept in overhead-at-target mode",
        ));
    }
    if axis == SweepAxis::N && params.scheme == Scheme::Baseline {
        return Err(Error::config(
            "sweep.axis",
            "baseline has no replica count to sweep",
        ));
    }
    params.cfg.validate()?;
    params.scheme.validate()?;

    let mut values = values.to_vec();
    values.sort_unstable();
    values.dedup();

    let rows = values
        .par_iter()
        .map(|&v| sweep_row(axis, v, params, mode))
        .collect::<Result<Vec<_>>>()?;

    Ok(SweepTable {
        axis,
        mode,
        scheme: params.scheme,
        rows,
    })
}

fn narrow(field: &str, v: u64) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::config(field, format!("value {v} out of range")))
}

fn sweep_row(axis: SweepAxis, v: u64, params: &SweepParams, mode: SweepMode) -> Result<SweepRow> {
    let mut cfg = params.cfg;
    let mut scheme = params.scheme;
    let mut t = params.t;
    match axis {
        SweepAxis::T => t = narrow("sweep.values", v)?,
        SweepAxis::BlockBytes => {
            cfg.block_bytes = narrow("sweep.values", v)?;
            cfg.validate()?;
        }
        SweepAxis::N => scheme = scheme.with_total_blocks(narrow("sweep.values", v)?)?,
    }
    match mode {
        SweepMode::Raw => {
            let report = analyze(&CodeSpec::bch(params.k, t)?, &cfg, &scheme)?;
            Ok(SweepRow::from_report(v, &report))
        }
        SweepMode::OverheadAtTarget => {
            match optimize(&cfg, &scheme, &params.targets, params.k, params.t_max) {
                Ok(report) => Ok(SweepRow::from_report(v, &report)),
                Err(Error::Infeasible { binding, .. }) => Ok(SweepRow {
                    axis_value: v,
                    t: None,
                    overhead_total: None,
                    p_lb_due: None,
                    p_b_nde: None,
                    a_r: None,
                    infeasible: Some(binding.to_string()),
                }),
                Err(e) => Err(e),
            }
        }
    }
}
