//! Configuration loading and the four batch workflows behind the
//! `replica-ecc` binary.
//!
//! Each `cmd_*` function is pure with respect to I/O: it returns the
//! artifacts to emit, and [`emit`] writes them to stdout or to files plus a
//! `<name>.meta.json` sidecar.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codes::{CodeSpec, MemoryConfig};
use crate::error::Error;
use crate::numerics::LogProb;
use crate::oracle::{
    enumerate_scheme, montecarlo_bits, montecarlo_scheme, BitVerdicts, MonteCarlo, SchemeVerdicts,
    DEFAULT_Z_THRESHOLD,
};
use crate::schemes::{
    analyze, ec_extra_reads, ec_logical_due, optimize, pb_extra_reads, pb_logical_due,
    reference_due, sweep, ExtraReadsFormula, ReliabilityReport, Scheme, SweepAxis, SweepMode,
    SweepParams, SweepTable, Targets, DEFAULT_K, DEFAULT_T_MAX, REFERENCE_T,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_ORACLE: i32 = 4;

/// Relative tolerance for closed-form logical DUE against exact enumeration.
pub const LOGICAL_DUE_REL_TOL: f64 = 1e-12;
/// Absolute tolerance for extra reads against exact enumeration.
pub const EXTRA_READS_ABS_TOL: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Model(#[from] Error),
    #[error("config {path}: {message}")]
    ConfigFile { path: String, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0} validation check(s) failed")]
    ValidationFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Model(Error::Infeasible { .. }) => EXIT_INFEASIBLE,
            CliError::Model(Error::Precondition(_) | Error::Size { .. }) => EXIT_ORACLE,
            CliError::Model(_)
            | CliError::ConfigFile { .. }
            | CliError::Usage(_)
            | CliError::Io { .. } => EXIT_CONFIG,
            CliError::ValidationFailed(_) => EXIT_VALIDATION_FAILED,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    Text,
}

fn default_k() -> u32 {
    DEFAULT_K
}
fn default_t() -> u32 {
    REFERENCE_T
}
fn default_t_max() -> u32 {
    DEFAULT_T_MAX
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeSection {
    #[serde(default = "default_k")]
    pub k: u32,
    /// Strength for `analyze` and raw block/replica sweeps.
    #[serde(default = "default_t")]
    pub t: u32,
    /// Optimizer search limit.
    #[serde(default = "default_t_max")]
    pub t_max: u32,
}

impl Default for CodeSection {
    fn default() -> Self {
        CodeSection {
            k: DEFAULT_K,
            t: REFERENCE_T,
            t_max: DEFAULT_T_MAX,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceTarget {
    /// Logical DUE of the unreplicated design at the reference strength.
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DueTarget {
    Value(f64),
    Reference(ReferenceTarget),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    pub due: Option<DueTarget>,
    /// Upper bound on per-replica NDE probability.
    pub nde: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSpec {
    pub start: u64,
    /// Inclusive.
    pub end: u64,
    #[serde(default = "one")]
    pub step: u64,
}

fn one() -> u64 {
    1
}

fn default_mode() -> SweepMode {
    SweepMode::Raw
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: SweepAxis,
    /// Explicit axis values; exclusive with `range`.
    pub values: Option<Vec<u64>>,
    pub range: Option<RangeSpec>,
    #[serde(default = "default_mode")]
    pub mode: SweepMode,
}

impl SweepSection {
    pub fn axis_values(&self) -> CliResult<Vec<u64>> {
        let values = match (&self.values, &self.range) {
            (Some(v), None) => v.clone(),
            (None, Some(r)) => {
                if r.step == 0 {
                    return Err(CliError::Usage("sweep.range.step must be positive".into()));
                }
                (r.start..=r.end).step_by(r.step as usize).collect()
            }
            (Some(_), Some(_)) => {
                return Err(CliError::Usage(
                    "sweep: give either values or range, not both".into(),
                ))
            }
            (None, None) => {
                return Err(CliError::Usage("sweep: values or range is required".into()))
            }
        };
        if values.is_empty() {
            return Err(CliError::Usage("sweep range is empty".into()));
        }
        Ok(values)
    }
}

/// A bit-level Monte Carlo case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BitCase {
    pub k: u32,
    pub t: u32,
    pub rber: f64,
}

fn default_trials() -> u64 {
    1_000_000
}
fn default_seed() -> u64 {
    42
}
fn default_z() -> f64 {
    DEFAULT_Z_THRESHOLD
}
fn default_p_grid() -> Vec<f64> {
    vec![0.5, 0.1, 1e-2, 1e-3]
}
fn default_p_nde() -> f64 {
    0.01
}
fn default_validation_schemes() -> Vec<Scheme> {
    let mut schemes: Vec<Scheme> = (1..=6).map(|n| Scheme::PrimaryBackup { n }).collect();
    schemes.push(Scheme::ErasureCode { n: 5, k: 3 });
    schemes.push(Scheme::ErasureCode { n: 4, k: 2 });
    schemes
}
fn default_bit_cases() -> Vec<BitCase> {
    vec![
        BitCase {
            k: 64,
            t: 2,
            rber: 0.01,
        },
        BitCase {
            k: 64,
            t: 2,
            rber: 0.5,
        },
        BitCase {
            k: 256,
            t: 4,
            rber: 0.01,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_z")]
    pub z_threshold: f64,
    /// Per-block DUE probabilities to validate at.
    #[serde(default = "default_p_grid")]
    pub p_grid: Vec<f64>,
    /// Per-block NDE probability used alongside every grid point.
    #[serde(default = "default_p_nde")]
    pub p_nde: f64,
    #[serde(default = "default_validation_schemes")]
    pub schemes: Vec<Scheme>,
    #[serde(default = "default_bit_cases")]
    pub bit_cases: Vec<BitCase>,
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection {
            trials: default_trials(),
            seed: default_seed(),
            z_threshold: default_z(),
            p_grid: default_p_grid(),
            p_nde: default_p_nde(),
            schemes: default_validation_schemes(),
            bit_cases: default_bit_cases(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub format: Option<Format>,
    pub path: Option<PathBuf>,
}

fn default_schemes() -> Vec<Scheme> {
    vec![Scheme::Baseline]
}

/// Complete run configuration, read from a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub memory: MemoryConfig,
    #[serde(default)]
    pub code: CodeSection,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<Scheme>,
    #[serde(default)]
    pub targets: TargetSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            memory: MemoryConfig::default(),
            code: CodeSection::default(),
            schemes: default_schemes(),
            targets: TargetSection::default(),
            sweep: None,
            oracle: OracleSection::default(),
            output: OutputSection::default(),
        }
    }
}

fn field_err(field: &str, reason: impl Into<String>) -> CliError {
    CliError::Model(Error::Config {
        field: field.into(),
        reason: reason.into(),
    })
}

impl RunConfig {
    pub fn from_json(text: &str, origin: &str) -> CliResult<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::ConfigFile {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text, &path.display().to_string())
    }

    /// Checks every model invariant up front so that bad input fails before
    /// any work is done.
    pub fn validate(&self) -> CliResult<()> {
        self.memory.validate()?;
        CodeSpec::bch(self.code.k, self.code.t)?;
        if self.schemes.is_empty() {
            return Err(field_err("schemes", "at least one scheme is required"));
        }
        for s in &self.schemes {
            s.validate()?;
        }
        if let Some(DueTarget::Value(v)) = self.targets.due {
            if !(v > 0.0 && v <= 1.0) {
                return Err(field_err(
                    "targets.due",
                    format!("must lie in (0,1], got {v}"),
                ));
            }
        }
        if let Some(v) = self.targets.nde {
            if !(v > 0.0 && v <= 1.0) {
                return Err(field_err(
                    "targets.nde",
                    format!("must lie in (0,1], got {v}"),
                ));
            }
        }
        for &p in &self.oracle.p_grid {
            if !(0.0..=1.0).contains(&p) || p + self.oracle.p_nde > 1.0 {
                return Err(field_err(
                    "oracle.p_grid",
                    format!("{p} + p_nde must stay within [0,1]"),
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.oracle.p_nde) {
            return Err(field_err("oracle.p_nde", "must lie in [0,1]"));
        }
        for s in &self.oracle.schemes {
            s.validate()?;
        }
        for c in &self.oracle.bit_cases {
            CodeSpec::bch(c.k, c.t)?;
            if !(c.rber > 0.0 && c.rber < 1.0) {
                return Err(field_err(
                    "oracle.bit_cases.rber",
                    format!("must lie in (0,1), got {}", c.rber),
                ));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    fn due_target(&self, default_to_reference: bool) -> CliResult<LogProb> {
        match self.targets.due {
            Some(DueTarget::Value(v)) => Ok(LogProb::from_prob(v)?),
            Some(DueTarget::Reference(ReferenceTarget::Baseline)) => {
                Ok(reference_due(&self.memory, self.code.k)?)
            }
            None if default_to_reference => Ok(reference_due(&self.memory, self.code.k)?),
            None => Err(field_err("targets.due", "a DUE target is required")),
        }
    }

    fn targets(&self, default_to_reference: bool) -> CliResult<Targets> {
        Ok(Targets {
            due: self.due_target(default_to_reference)?,
            nde: self.targets.nde.map(LogProb::from_prob).transpose()?,
        })
    }
}

/// Flag overrides; any value given here wins over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(seed) = self.seed {
            cfg.oracle.seed = seed;
        }
        if let Some(trials) = self.trials {
            cfg.oracle.trials = trials;
        }
        if let Some(format) = self.format {
            cfg.output.format = Some(format);
        }
        if let Some(out) = &self.out {
            cfg.output.path = Some(out.clone());
        }
    }
}

/// One output document. `tag` distinguishes per-scheme files.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub tag: Option<String>,
    pub extension: &'static str,
    pub content: String,
}

#[derive(Debug, Serialize)]
struct Sidecar<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config_sha256: String,
    seed: u64,
    tag: Option<&'a str>,
}

fn artifact_path(base: &Path, tag: Option<&str>, multiple: bool) -> PathBuf {
    match tag {
        Some(tag) if multiple => {
            let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
            let ext = base.extension().and_then(|s| s.to_str());
            let name = match ext {
                Some(ext) => format!("{stem}_{tag}.{ext}"),
                None => format!("{stem}_{tag}"),
            };
            base.with_file_name(name)
        }
        _ => base.to_path_buf(),
    }
}

fn sidecar_path(data: &Path) -> PathBuf {
    let stem = data.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    data.with_file_name(format!("{stem}.meta.json"))
}

/// Writes artifacts to `cfg.output.path` (with sidecars) or to stdout.
pub fn emit(
    command: &str,
    cfg: &RunConfig,
    artifacts: &[Artifact],
    stdout: &mut impl std::io::Write,
) -> CliResult<()> {
    let io_err = |path: &Path| {
        let path = path.display().to_string();
        move |source| CliError::Io { path, source }
    };
    match &cfg.output.path {
        None => {
            let multiple = artifacts.len() > 1;
            for a in artifacts {
                if multiple {
                    if let Some(tag) = &a.tag {
                        writeln!(stdout, "# {tag}").map_err(io_err(Path::new("<stdout>")))?;
                    }
                }
                stdout
                    .write_all(a.content.as_bytes())
                    .map_err(io_err(Path::new("<stdout>")))?;
            }
        }
        Some(base) => {
            if let Some(dir) = base.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(io_err(dir))?;
            }
            let multiple = artifacts.len() > 1;
            let hash = cfg.hash();
            for a in artifacts {
                let path = artifact_path(base, a.tag.as_deref(), multiple);
                fs::write(&path, &a.content).map_err(io_err(&path))?;
                let meta = Sidecar {
                    tool: env!("CARGO_PKG_NAME"),
                    version: env!("CARGO_PKG_VERSION"),
                    command,
                    config_sha256: hash.clone(),
                    seed: cfg.oracle.seed,
                    tag: a.tag.as_deref(),
                };
                let meta_path = sidecar_path(&path);
                let json = serde_json::to_string_pretty(&meta).expect("sidecar serializes") + "\n";
                fs::write(&meta_path, json).map_err(io_err(&meta_path))?;
            }
        }
    }
    Ok(())
}

fn sci(p: LogProb) -> String {
    p.to_sci_string()
}

fn log10_field(p: LogProb) -> String {
    if p.is_zero() {
        "-inf".into()
    } else {
        format!("{:.6}", p.log10())
    }
}

fn percent(x: f64) -> String {
    format!("{:.1}%", x * 100.0)
}

fn report_text(r: &ReliabilityReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<16}{}", "scheme", r.scheme);
    let _ = writeln!(
        s,
        "{:<16}BCH({},{},{})",
        "code", r.code.n, r.code.k, r.code.t
    );
    let _ = writeln!(s, "{:<16}{}", "rber", r.cfg.rber);
    let _ = writeln!(
        s,
        "{:<16}{} / {} bytes",
        "line / block", r.cfg.cache_line_bytes, r.cfg.block_bytes
    );
    let _ = writeln!(s, "{:<16}{}", "perf_filter", r.cfg.perf_filter);
    let _ = writeln!(s, "{:<16}{}", "overhead_total", percent(r.overhead_total));
    let probs = [
        ("q_miscorrect", r.code.q_miscorrect),
        ("p_c_due", r.p_c_due),
        ("p_c_nde", r.p_c_nde),
        ("p_b_due", r.p_b_due),
        ("p_b_nde", r.p_b_nde),
        ("p_lb_due", r.p_lb_due),
    ];
    for (name, p) in probs {
        let _ = writeln!(s, "{name:<16}{:<16}(log10 {})", sci(p), log10_field(p));
    }
    let _ = writeln!(s, "{:<16}{:.6e}", "a_r", r.a_r);
    s
}

const REPORT_CSV_HEADER: &str =
    "scheme,k,t,n,overhead_total,p_c_due,p_c_nde,p_b_due,p_b_nde,p_lb_due,a_r,\
log10_p_c_due,log10_p_c_nde,log10_p_b_due,log10_p_b_nde,log10_p_lb_due\n";

fn report_csv_row(r: &ReliabilityReport) -> String {
    let p = [r.p_c_due, r.p_c_nde, r.p_b_due, r.p_b_nde, r.p_lb_due];
    let values: Vec<String> = p.iter().map(|&x| sci(x)).collect();
    let logs: Vec<String> = p.iter().map(|&x| log10_field(x)).collect();
    format!(
        "{},{},{},{},{:.6},{},{:.6e},{}\n",
        r.scheme.label(),
        r.code.k,
        r.code.t,
        r.code.n,
        r.overhead_total,
        values.join(","),
        r.a_r,
        logs.join(",")
    )
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn reports_artifact(reports: &[ReliabilityReport], format: Format) -> Artifact {
    let content = match format {
        Format::Json => json(&reports),
        Format::Csv => {
            let mut s = REPORT_CSV_HEADER.to_string();
            for r in reports {
                s += &report_csv_row(r);
            }
            s
        }
        Format::Text => reports
            .iter()
            .map(report_text)
            .collect::<Vec<_>>()
            .join("\n"),
    };
    Artifact {
        tag: None,
        extension: ext(format),
        content,
    }
}

fn ext(format: Format) -> &'static str {
    match format {
        Format::Json => "json",
        Format::Csv => "csv",
        Format::Text => "txt",
    }
}

/// Single-point evaluation of every configured scheme at `code.t`.
pub fn cmd_analyze(cfg: &RunConfig) -> CliResult<Vec<Artifact>> {
    let code = CodeSpec::bch(cfg.code.k, cfg.code.t)?;
    let reports = cfg
        .schemes
        .iter()
        .map(|s| analyze(&code, &cfg.memory, s))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(vec![reports_artifact(
        &reports,
        cfg.output.format.unwrap_or(Format::Text),
    )])
}

/// CSV for one sweep table. Probabilities are followed by their log10 so that
/// values below the f64 range survive plotting tools.
pub fn sweep_csv(table: &SweepTable) -> String {
    let axis = table.axis.name();
    let mut s = String::new();
    match table.mode {
        SweepMode::Raw => {
            // the trailing t column is redundant when t is the axis
            let with_t = table.axis != SweepAxis::T;
            let _ = write!(
                s,
                "{axis},overhead_total,p_lb_due,p_b_nde,a_r,log10_p_lb_due,log10_p_b_nde"
            );
            s += if with_t { ",t\n" } else { "\n" };
            for row in &table.rows {
                let (due, nde) = (
                    row.p_lb_due.unwrap_or(LogProb::ZERO),
                    row.p_b_nde.unwrap_or(LogProb::ZERO),
                );
                let _ = write!(
                    s,
                    "{},{:.6},{},{},{:.6e},{},{}",
                    row.axis_value,
                    row.overhead_total.unwrap_or(f64::NAN),
                    sci(due),
                    sci(nde),
                    row.a_r.unwrap_or(f64::NAN),
                    log10_field(due),
                    log10_field(nde),
                );
                if with_t {
                    let _ = write!(s, ",{}", row.t.map_or(String::new(), |t| t.to_string()));
                }
                s.push('\n');
            }
        }
        SweepMode::OverheadAtTarget => {
            let _ = writeln!(s, "{axis},overhead_at_target,t,p_lb_due,log10_p_lb_due,a_r");
            for row in &table.rows {
                match (row.overhead_total, row.t, row.p_lb_due, row.a_r) {
                    (Some(ov), Some(t), Some(due), Some(a_r)) => {
                        let _ = writeln!(
                            s,
                            "{},{:.6},{},{},{},{:.6e}",
                            row.axis_value,
                            ov,
                            t,
                            sci(due),
                            log10_field(due),
                            a_r
                        );
                    }
                    _ => {
                        let reason = row.infeasible.as_deref().unwrap_or("unknown");
                        let _ = writeln!(s, "{},infeasible:{},,,,", row.axis_value, reason);
                    }
                }
            }
        }
    }
    s
}

/// One table per configured scheme.
pub fn cmd_sweep(cfg: &RunConfig) -> CliResult<Vec<Artifact>> {
    let section = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Usage("sweep: config has no `sweep` section".into()))?;
    let values = section.axis_values()?;
    let targets = if section.mode == SweepMode::OverheadAtTarget {
        cfg.targets(true)?
    } else {
        Targets::due_only(LogProb::ONE)
    };
    let format = cfg.output.format.unwrap_or(Format::Csv);
    let mut out = Vec::new();
    for scheme in &cfg.schemes {
        let params = SweepParams {
            cfg: cfg.memory,
            scheme: *scheme,
            k: cfg.code.k,
            t: cfg.code.t,
            targets,
            t_max: cfg.code.t_max,
        };
        let table = sweep(section.axis, &values, &params, section.mode)?;
        let content = match format {
            Format::Json => json(&table),
            Format::Csv | Format::Text => sweep_csv(&table),
        };
        out.push(Artifact {
            tag: Some(scheme.label()),
            extension: ext(format),
            content,
        });
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct OptimizeResult {
    pub report: ReliabilityReport,
    /// Overhead of the unreplicated design at the reference strength.
    pub reference_overhead: f64,
    /// Reference overhead minus optimized overhead, in percentage points.
    pub savings_points: f64,
}

pub fn optimize_all(cfg: &RunConfig) -> CliResult<Vec<OptimizeResult>> {
    let targets = cfg.targets(false)?;
    let reference = analyze(
        &CodeSpec::bch(cfg.code.k, REFERENCE_T)?,
        &cfg.memory,
        &Scheme::Baseline,
    )?;
    cfg.schemes
        .iter()
        .map(|s| {
            let report = optimize(&cfg.memory, s, &targets, cfg.code.k, cfg.code.t_max)?;
            let savings_points = (reference.overhead_total - report.overhead_total) * 100.0;
            Ok(OptimizeResult {
                report,
                reference_overhead: reference.overhead_total,
                savings_points,
            })
        })
        .collect()
}

/// Minimal-strength report per scheme plus a savings summary.
pub fn cmd_optimize(cfg: &RunConfig) -> CliResult<Vec<Artifact>> {
    let results = optimize_all(cfg)?;
    let format = cfg.output.format.unwrap_or(Format::Text);
    let content = match format {
        Format::Json => json(&results),
        Format::Csv => {
            let mut s = REPORT_CSV_HEADER.trim_end().to_string() + ",savings_points\n";
            for r in &results {
                s += report_csv_row(&r.report).trim_end();
                let _ = writeln!(s, ",{:.4}", r.savings_points);
            }
            s
        }
        Format::Text => {
            let mut s = String::new();
            for r in &results {
                s += &report_text(&r.report);
                let _ = writeln!(
                    s,
                    "savings: {} -> {} ({:.1} points less overhead than the t={} baseline)\n",
                    percent(r.reference_overhead),
                    percent(r.report.overhead_total),
                    r.savings_points,
                    REFERENCE_T
                );
            }
            s
        }
    };
    Ok(vec![Artifact {
        tag: None,
        extension: ext(format),
        content,
    }])
}

/// Closed-form logical DUE against exact enumeration at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogicalDueCheck {
    pub scheme: Scheme,
    pub p_due: f64,
    pub analytic: f64,
    pub exact: f64,
    pub rel_err: f64,
    pub pass: bool,
}

/// Both extra-read expressions against exact enumeration at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtraReadsCheck {
    pub scheme: Scheme,
    pub p_due: f64,
    pub exact: f64,
    pub as_printed: f64,
    pub corrected: f64,
    pub as_printed_abs_err: f64,
    pub corrected_abs_err: f64,
    pub corrected_pass: bool,
    /// Informational: the printed expression is known to be unnormalized.
    pub as_printed_diverges: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationSummary {
    pub seed: u64,
    pub trials: u64,
    pub z_threshold: f64,
    pub logical_due: Vec<LogicalDueCheck>,
    pub extra_reads: Vec<ExtraReadsCheck>,
    pub montecarlo_scheme: Vec<SchemeVerdicts>,
    pub montecarlo_bits: Vec<BitVerdicts>,
    pub failures: usize,
    pub pass: bool,
}

fn extra_reads(scheme: &Scheme, p: f64, formula: ExtraReadsFormula) -> crate::Result<f64> {
    match *scheme {
        Scheme::Baseline => Ok(0.0),
        Scheme::PrimaryBackup { n } => pb_extra_reads(p, n, formula),
        Scheme::ErasureCode { n, k } => ec_extra_reads(p, n, k, formula),
    }
}

fn logical_due(scheme: &Scheme, p: f64) -> crate::Result<f64> {
    let p_b = LogProb::from_prob(p)?;
    Ok(match *scheme {
        Scheme::Baseline => p_b,
        Scheme::PrimaryBackup { n } => pb_logical_due(p_b, n),
        Scheme::ErasureCode { n, k } => ec_logical_due(p_b, n, k)?,
    }
    .prob())
}

/// Closed form versus exact enumeration for one scheme and block DUE rate.
pub fn formula_checks(
    scheme: &Scheme,
    p: f64,
) -> crate::Result<(LogicalDueCheck, ExtraReadsCheck)> {
    let exact = enumerate_scheme(p, 0.0, scheme)?;
    let analytic = logical_due(scheme, p)?;
    let exact_due = exact.p_lb_due_f64();
    let rel_err = if exact_due == 0.0 {
        analytic.abs()
    } else {
        ((analytic - exact_due) / exact_due).abs()
    };
    let exact_ar = exact.a_r_f64();
    let printed = extra_reads(scheme, p, ExtraReadsFormula::AsPrinted)?;
    let corrected = extra_reads(scheme, p, ExtraReadsFormula::Corrected)?;
    Ok((
        LogicalDueCheck {
            scheme: *scheme,
            p_due: p,
            analytic,
            exact: exact_due,
            rel_err,
            pass: rel_err <= LOGICAL_DUE_REL_TOL,
        },
        ExtraReadsCheck {
            scheme: *scheme,
            p_due: p,
            exact: exact_ar,
            as_printed: printed,
            corrected,
            as_printed_abs_err: (printed - exact_ar).abs(),
            corrected_abs_err: (corrected - exact_ar).abs(),
            corrected_pass: (corrected - exact_ar).abs() <= EXTRA_READS_ABS_TOL,
            as_printed_diverges: (printed - exact_ar).abs() > EXTRA_READS_ABS_TOL,
        },
    ))
}

pub fn run_validation(cfg: &RunConfig) -> CliResult<ValidationSummary> {
    let o = &cfg.oracle;
    let mc = MonteCarlo {
        trials: o.trials,
        seed: o.seed,
        z_threshold: o.z_threshold,
    };
    let mut logical = Vec::new();
    let mut reads = Vec::new();
    let mut verdicts = Vec::new();
    for scheme in &o.schemes {
        for &p in &o.p_grid {
            let (due, ar) = formula_checks(scheme, p)?;
            logical.push(due);
            reads.push(ar);
            verdicts.push(montecarlo_scheme(p, o.p_nde, scheme, &mc)?);
        }
    }
    let bits = o
        .bit_cases
        .iter()
        .map(|c| montecarlo_bits(&CodeSpec::bch(c.k, c.t)?, c.rber, &mc))
        .collect::<Result<Vec<_>, _>>()?;

    let failures = logical.iter().filter(|c| !c.pass).count()
        + reads.iter().filter(|c| !c.corrected_pass).count()
        + verdicts
            .iter()
            .flat_map(|v| [&v.p_lb_due, &v.a_r, &v.p_any_nde])
            .filter(|v| !v.pass)
            .count()
        + bits
            .iter()
            .flat_map(|b| [&b.p_c_due, &b.p_c_nde])
            .filter(|v| !v.pass)
            .count();
    Ok(ValidationSummary {
        seed: o.seed,
        trials: o.trials,
        z_threshold: o.z_threshold,
        logical_due: logical,
        extra_reads: reads,
        montecarlo_scheme: verdicts,
        montecarlo_bits: bits,
        failures,
        pass: failures == 0,
    })
}

/// Runs the validation suite. The JSON is always produced; the error carries
/// the failure count so the caller can emit first and exit non-zero after.
pub fn cmd_validate(cfg: &RunConfig) -> CliResult<(Vec<Artifact>, Option<CliError>)> {
    let summary = run_validation(cfg)?;
    let failure = (!summary.pass).then_some(CliError::ValidationFailed(summary.failures));
    Ok((
        vec![Artifact {
            tag: None,
            extension: "json",
            content: json(&summary),
        }],
        failure,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_json(r#"{"memory": {"rberr": 0.1}}"#, "inline").unwrap_err();
        assert_eq!(err.exit_code(), EXIT_CONFIG);
        assert!(err.to_string().contains("rberr"), "{err}");
        let err = RunConfig::from_json(r#"{"extra": 1}"#, "inline").unwrap_err();
        assert!(err.to_string().contains("extra"));
    }

    #[test]
    fn invalid_values_name_the_field() {
        let err =
            RunConfig::from_json(r#"{"memory": {"block_bytes": 100}}"#, "inline").unwrap_err();
        assert!(err.to_string().contains("block_bytes"), "{err}");
        let err = RunConfig::from_json(r#"{"targets": {"due": 2.0}}"#, "inline").unwrap_err();
        assert!(err.to_string().contains("targets.due"), "{err}");
        let err = RunConfig::from_json(
            r#"{"schemes": [{"kind": "erasure_code", "n": 3, "k": 3}]}"#,
            "inline",
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), EXIT_CONFIG);
    }

    #[test]
    fn empty_config_is_the_studied_design() {
        let cfg = RunConfig::from_json("{}", "inline").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let due: RunConfig =
            RunConfig::from_json(r#"{"targets": {"due": "baseline", "nde": 1e-22}}"#, "x").unwrap();
        assert_eq!(
            due.targets.due,
            Some(DueTarget::Reference(ReferenceTarget::Baseline))
        );
    }

    #[test]
    fn range_expansion() {
        let s = SweepSection {
            axis: SweepAxis::T,
            values: None,
            range: Some(RangeSpec {
                start: 64,
                end: 512,
                step: 64,
            }),
            mode: SweepMode::Raw,
        };
        assert_eq!(
            s.axis_values().unwrap(),
            vec![64, 128, 192, 256, 320, 384, 448, 512]
        );
        let empty = SweepSection {
            range: Some(RangeSpec {
                start: 5,
                end: 1,
                step: 1,
            }),
            ..s.clone()
        };
        assert_eq!(empty.axis_values().unwrap_err().exit_code(), EXIT_CONFIG);
        let both = SweepSection {
            values: Some(vec![1]),
            ..s
        };
        assert!(both.axis_values().is_err());
    }

    #[test]
    fn overrides_win() {
        let mut cfg = RunConfig::default();
        Overrides {
            seed: Some(9),
            trials: Some(20_000),
            format: Some(Format::Json),
            out: None,
        }
        .apply(&mut cfg);
        assert_eq!(
            (cfg.oracle.seed, cfg.oracle.trials, cfg.output.format),
            (9, 20_000, Some(Format::Json))
        );
    }

    #[test]
    fn exit_codes() {
        assert_eq!(
            CliError::from(Error::Infeasible {
                binding: crate::error::Constraint::Due,
                t_max: 1
            })
            .exit_code(),
            3
        );
        assert_eq!(
            CliError::from(Error::Precondition("x".into())).exit_code(),
            4
        );
        assert_eq!(CliError::ValidationFailed(2).exit_code(), 1);
        assert_eq!(CliError::Usage("x".into()).exit_code(), 2);
    }

    #[test]
    fn per_scheme_paths() {
        let base = Path::new("/tmp/fig3/top.csv");
        assert_eq!(
            artifact_path(base, Some("pb3"), true),
            Path::new("/tmp/fig3/top_pb3.csv")
        );
        assert_eq!(artifact_path(base, Some("pb3"), false), base);
        assert_eq!(
            sidecar_path(Path::new("/tmp/fig3/top_pb3.csv")),
            Path::new("/tmp/fig3/top_pb3.meta.json")
        );
    }

    #[test]
    fn text_report_shows_percent_and_log10() {
        let cfg = RunConfig::default();
        let out = cmd_analyze(&cfg).unwrap();
        assert!(out[0].content.contains("27.0%"), "{}", out[0].content);
        assert!(out[0].content.contains("log10 -30."));
    }
}
