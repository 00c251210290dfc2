//! Independent checks of the closed-form model.
//!
//! Two oracles, neither of which shares code with the formulas in
//! [`crate::schemes`] or [`crate::codes`]:
//!
//! - exact enumeration of the logical-block read procedure with rational
//!   arithmetic, and
//! - seeded Monte Carlo fault injection, both at block level (per-replica
//!   outcomes) and at bit level (error counts per codeword).
//!
//! Monte Carlo trials are split into fixed-size chunks; chunk `c` draws from
//! a ChaCha8 stream seeded with `seed` and stream id `c`. Counts are integers
//! summed per chunk, so results are bit-identical regardless of thread
//! scheduling.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use crate::codes::{cache_line_due, cache_line_nde, CodeSpec, MemoryConfig, ModelVariants};
use crate::error::{Error, Result};
use crate::numerics::{check_prob, LogProb};
use crate::schemes::{ec_logical_due, pb_logical_due, Scheme};

/// Largest block count the exact enumeration accepts.
pub const MAX_ENUMERATION_BLOCKS: u32 = 20;

/// Smallest trial count accepted by the Monte Carlo oracles.
pub const MIN_TRIALS: u64 = 10_000;

pub const DEFAULT_Z_THRESHOLD: f64 = 4.0;

const CHUNK_TRIALS: u64 = 1 << 16;

/// Outcome of reading one physical block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockOutcome {
    Ok,
    /// Detected, uncorrectable: the reader falls back to another block.
    Due,
    /// Silently corrupt: the read "succeeds" with wrong data.
    Nde,
}

/// Outcome of one logical-block read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadResult {
    Success,
    Due,
    /// Enough blocks were read, but at least one of them was silently corrupt.
    Nde,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrialOutcome {
    pub blocks_read: u32,
    pub result: ReadResult,
    pub blocks: Vec<BlockOutcome>,
}

/// Runs the read procedure over blocks in order: keep reading until `K`
/// blocks have been read without a DUE, or until all `N` blocks are spent.
/// NDE blocks count as successful reads and never trigger a fallback.
pub fn read_logical_block(
    scheme: &Scheme,
    mut outcome: impl FnMut(u32) -> BlockOutcome,
) -> (u32, ReadResult) {
    let n = scheme.total_blocks();
    let need = scheme.data_blocks();
    let mut good = 0;
    let mut corrupt = false;
    for i in 0..n {
        match outcome(i) {
            BlockOutcome::Ok => good += 1,
            BlockOutcome::Nde => {
                good += 1;
                corrupt = true;
            }
            BlockOutcome::Due => {}
        }
        if good == need {
            let result = if corrupt {
                ReadResult::Nde
            } else {
                ReadResult::Success
            };
            return (i + 1, result);
        }
    }
    (n, ReadResult::Due)
}

/// Read procedure applied to a complete outcome vector.
pub fn simulate_read(scheme: &Scheme, blocks: &[BlockOutcome]) -> Result<TrialOutcome> {
    if blocks.len() != scheme.total_blocks() as usize {
        return Err(Error::Domain(format!(
            "outcome vector has {} entries, scheme has {} blocks",
            blocks.len(),
            scheme.total_blocks()
        )));
    }
    let (blocks_read, result) = read_logical_block(scheme, |i| blocks[i as usize]);
    Ok(TrialOutcome {
        blocks_read,
        result,
        blocks: blocks.to_vec(),
    })
}

/// One class of outcome vectors sharing the same read prefix: the blocks
/// after `blocks_read` are never looked at.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeClass {
    pub blocks_read: u32,
    pub result: ReadResult,
    pub prob: BigRational,
}

/// Exact results of the read procedure.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactOutcome {
    pub p_lb_due: BigRational,
    /// Expected reads beyond the K that a clean read needs.
    pub a_r: BigRational,
    pub p_any_nde: BigRational,
    pub classes: Vec<OutcomeClass>,
}

impl ExactOutcome {
    pub fn p_lb_due_f64(&self) -> f64 {
        to_f64(&self.p_lb_due)
    }
    pub fn a_r_f64(&self) -> f64 {
        to_f64(&self.a_r)
    }
    pub fn p_any_nde_f64(&self) -> f64 {
        to_f64(&self.p_any_nde)
    }
}

pub(crate) fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn exact(p: f64) -> BigRational {
    BigRational::from_float(p).expect("finite probability")
}

fn check_block_probs(p_due: f64, p_nde: f64) -> Result<()> {
    check_prob(p_due, "p_due")?;
    check_prob(p_nde, "p_nde")?;
    if p_due + p_nde > 1.0 {
        return Err(Error::Domain(format!(
            "p_due + p_nde = {} exceeds 1",
            p_due + p_nde
        )));
    }
    Ok(())
}

/// Exact distribution of the read procedure, with every block independently
/// DUE with `p_due`, NDE with `p_nde`, and clean otherwise.
///
/// Probability mass is propagated over read prefixes, merging prefixes that
/// agree on (reads so far, good reads, corruption seen); each terminal state
/// is one [`OutcomeClass`]. Probabilities are the exact rationals of the f64
/// inputs.
pub fn enumerate_scheme(p_due: f64, p_nde: f64, scheme: &Scheme) -> Result<ExactOutcome> {
    check_block_probs(p_due, p_nde)?;
    scheme.validate()?;
    let n = scheme.total_blocks();
    if n > MAX_ENUMERATION_BLOCKS {
        return Err(Error::Size {
            n,
            limit: MAX_ENUMERATION_BLOCKS,
        });
    }
    let need = scheme.data_blocks();
    let due = exact(p_due);
    let nde = exact(p_nde);
    let ok = BigRational::one() - &due - &nde;

    // frontier[good][corrupt] after `reads` reads, all still in progress
    let mut frontier = vec![[BigRational::zero(), BigRational::zero()]; need as usize];
    frontier[0][0] = BigRational::one();
    let mut classes = Vec::new();
    for reads in 1..=n {
        let mut next = vec![[BigRational::zero(), BigRational::zero()]; need as usize];
        let mut finished = [BigRational::zero(), BigRational::zero()];
        for (good, row) in frontier.iter().enumerate() {
            for (corrupt, mass) in row.iter().enumerate() {
                if mass.is_zero() {
                    continue;
                }
                next[good][corrupt] += mass * &due;
                let moves = [(&ok, corrupt), (&nde, 1)];
                for (step, now_corrupt) in moves {
                    let m = mass * step;
                    if good + 1 == need as usize {
                        finished[now_corrupt] += m;
                    } else {
                        next[good + 1][now_corrupt] += m;
                    }
                }
            }
        }
        for (corrupt, result) in [(0, ReadResult::Success), (1, ReadResult::Nde)] {
            let prob = std::mem::take(&mut finished[corrupt]);
            if !prob.is_zero() {
                classes.push(OutcomeClass {
                    blocks_read: reads,
                    result,
                    prob,
                });
            }
        }
        frontier = next;
    }
    let failed: BigRational = frontier.iter().flat_map(|row| row.iter()).sum();
    if !failed.is_zero() {
        classes.push(OutcomeClass {
            blocks_read: n,
            result: ReadResult::Due,
            prob: failed,
        });
    }
    Ok(summarize(classes, need))
}

fn summarize(classes: Vec<OutcomeClass>, need: u32) -> ExactOutcome {
    let mut p_lb_due = BigRational::zero();
    let mut p_any_nde = BigRational::zero();
    let mut reads = BigRational::zero();
    for c in &classes {
        reads += &c.prob * BigRational::from_integer(BigInt::from(c.blocks_read - need));
        match c.result {
            ReadResult::Due => p_lb_due += &c.prob,
            ReadResult::Nde => p_any_nde += &c.prob,
            ReadResult::Success => {}
        }
    }
    ExactOutcome {
        p_lb_due,
        a_r: reads,
        p_any_nde,
        classes,
    }
}

/// Brute force over all `3^N` outcome vectors. Exponential; intended as a
/// cross-check of [`enumerate_scheme`] at small N.
pub fn enumerate_vectors(p_due: f64, p_nde: f64, scheme: &Scheme) -> Result<ExactOutcome> {
    check_block_probs(p_due, p_nde)?;
    scheme.validate()?;
    let n = scheme.total_blocks();
    if n > 10 {
        return Err(Error::Size { n, limit: 10 });
    }
    let weights = [
        (
            BlockOutcome::Ok,
            BigRational::one() - exact(p_due) - exact(p_nde),
        ),
        (BlockOutcome::Due, exact(p_due)),
        (BlockOutcome::Nde, exact(p_nde)),
    ];
    let mut classes = Vec::with_capacity(3usize.pow(n));
    let mut vector = vec![BlockOutcome::Ok; n as usize];
    for code in 0..3u64.pow(n) {
        let mut rest = code;
        let mut prob = BigRational::one();
        for slot in vector.iter_mut() {
            let (outcome, w) = &weights[(rest % 3) as usize];
            rest /= 3;
            *slot = *outcome;
            prob *= w;
        }
        let trial = simulate_read(scheme, &vector)?;
        classes.push(OutcomeClass {
            blocks_read: trial.blocks_read,
            result: trial.result,
            prob,
        });
    }
    Ok(summarize(classes, scheme.data_blocks()))
}

/// Comparison of one analytic quantity against its Monte Carlo estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationVerdict {
    pub quantity: String,
    pub analytic: f64,
    pub empirical: f64,
    pub std_error: f64,
    pub z: f64,
    pub pass: bool,
    pub trials: u64,
    pub seed: u64,
    /// Fewer than ten expected events: the comparison has little power.
    pub low_events: bool,
}

impl ValidationVerdict {
    fn new(
        quantity: &str,
        analytic: f64,
        empirical: f64,
        std_error: f64,
        trials: u64,
        seed: u64,
        z_max: f64,
    ) -> Self {
        let diff = empirical - analytic;
        let z = if std_error > 0.0 {
            diff / std_error
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(diff)
        };
        ValidationVerdict {
            quantity: quantity.to_string(),
            analytic,
            empirical,
            std_error,
            z,
            pass: z.abs() <= z_max,
            trials,
            seed,
            low_events: analytic * (trials as f64) < 10.0,
        }
    }
}

/// Monte Carlo settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarlo {
    pub trials: u64,
    pub seed: u64,
    pub z_threshold: f64,
}

impl MonteCarlo {
    pub fn new(trials: u64, seed: u64) -> Self {
        MonteCarlo {
            trials,
            seed,
            z_threshold: DEFAULT_Z_THRESHOLD,
        }
    }

    fn check(&self) -> Result<()> {
        if self.trials < MIN_TRIALS {
            return Err(Error::Precondition(format!(
                "Monte Carlo needs at least {MIN_TRIALS} trials, got {}",
                self.trials
            )));
        }
        if self.z_threshold.is_nan() || self.z_threshold <= 0.0 {
            return Err(Error::Precondition("z threshold must be positive".into()));
        }
        Ok(())
    }

    /// Runs `body` on every chunk of trials with its own RNG stream and sums
    /// the integer counters.
    fn run<const C: usize>(
        &self,
        body: impl Fn(&mut ChaCha8Rng, u64) -> [u64; C] + Sync,
    ) -> [u64; C] {
        let chunks = self.trials.div_ceil(CHUNK_TRIALS);
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(c);
                let len = CHUNK_TRIALS.min(self.trials - c * CHUNK_TRIALS);
                body(&mut rng, len)
            })
            .reduce(
                || [0; C],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x += y;
                    }
                    a
                },
            )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeVerdicts {
    pub scheme: Scheme,
    pub p_due: f64,
    pub p_nde: f64,
    /// Against the closed-form logical DUE.
    pub p_lb_due: ValidationVerdict,
    /// Against the exact enumeration.
    pub a_r: ValidationVerdict,
    /// Against the exact enumeration.
    pub p_any_nde: ValidationVerdict,
}

impl SchemeVerdicts {
    pub fn all_pass(&self) -> bool {
        self.p_lb_due.pass && self.a_r.pass && self.p_any_nde.pass
    }
}

fn binomial_se(p: f64, trials: u64) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}

/// Block-level fault injection: draws per-replica outcomes and runs the
/// scheme's read procedure.
pub fn montecarlo_scheme(
    p_due: f64,
    p_nde: f64,
    scheme: &Scheme,
    mc: &MonteCarlo,
) -> Result<SchemeVerdicts> {
    mc.check()?;
    let exact = enumerate_scheme(p_due, p_nde, scheme)?;
    let p_b = LogProb::from_prob(p_due)?;
    let analytic_lb = match *scheme {
        Scheme::Baseline => p_b,
        Scheme::PrimaryBackup { n } => pb_logical_due(p_b, n),
        Scheme::ErasureCode { n, k } => ec_logical_due(p_b, n, k)?,
    }
    .prob();
    let need = u64::from(scheme.data_blocks());
    let bad_cut = p_due;
    let nde_cut = p_due + p_nde;

    let [fails, corrupt, extra, extra_sq] = mc.run(|rng, len| {
        let mut counts = [0u64; 4];
        for _ in 0..len {
            let (reads, result) = read_logical_block(scheme, |_| {
                let u: f64 = rng.gen();
                if u < bad_cut {
                    BlockOutcome::Due
                } else if u < nde_cut {
                    BlockOutcome::Nde
                } else {
                    BlockOutcome::Ok
                }
            });
            match result {
                ReadResult::Due => counts[0] += 1,
                ReadResult::Nde => counts[1] += 1,
                ReadResult::Success => {}
            }
            let e = u64::from(reads) - need;
            counts[2] += e;
            counts[3] += e * e;
        }
        counts
    });

    let t = mc.trials as f64;
    let mean_extra = extra as f64 / t;
    let var_extra = ((extra_sq as f64 / t - mean_extra * mean_extra) * t / (t - 1.0)).max(0.0);
    let exact_nde = exact.p_any_nde_f64();
    Ok(SchemeVerdicts {
        scheme: *scheme,
        p_due,
        p_nde,
        p_lb_due: ValidationVerdict::new(
            "p_lb_due",
            analytic_lb,
            fails as f64 / t,
            binomial_se(analytic_lb, mc.trials),
            mc.trials,
            mc.seed,
            mc.z_threshold,
        ),
        a_r: ValidationVerdict::new(
            "a_r",
            exact.a_r_f64(),
            mean_extra,
            (var_extra / t).sqrt(),
            mc.trials,
            mc.seed,
            mc.z_threshold,
        ),
        p_any_nde: ValidationVerdict::new(
            "p_any_nde",
            exact_nde,
            corrupt as f64 / t,
            binomial_se(exact_nde, mc.trials),
            mc.trials,
            mc.seed,
            mc.z_threshold,
        ),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BitVerdicts {
    pub code: CodeSpec,
    pub rber: f64,
    pub p_c_due: ValidationVerdict,
    pub p_c_nde: ValidationVerdict,
}

impl BitVerdicts {
    pub fn all_pass(&self) -> bool {
        self.p_c_due.pass && self.p_c_nde.pass
    }
}

/// Bit-level fault injection: the number of flipped bits per codeword is
/// drawn from Binomial(n, rber); more than `t` flips is uncorrectable, and an
/// uncorrectable codeword is miscorrected with probability `q_miscorrect`.
/// Compared against the cache-line DUE/NDE with no performance-tier filter.
pub fn montecarlo_bits(code: &CodeSpec, rber: f64, mc: &MonteCarlo) -> Result<BitVerdicts> {
    mc.check()?;
    check_prob(rber, "rber")?;
    let expected_flips = rber * f64::from(code.n) * mc.trials as f64;
    if expected_flips < 100.0 {
        return Err(Error::Precondition(format!(
            "rber * n * trials = {expected_flips:.3} < 100; raise rber or trials"
        )));
    }
    let cfg = MemoryConfig {
        rber,
        perf_filter: 1.0,
        variants: ModelVariants::standard(),
        ..Default::default()
    };
    cfg.validate()?;
    let analytic_due = cache_line_due(code, &cfg)?.prob();
    let analytic_nde = if code.t == 0 {
        0.0
    } else {
        cache_line_nde(code, &cfg)?.prob()
    };

    let flips = Binomial::new(u64::from(code.n), rber).map_err(|e| Error::Domain(e.to_string()))?;
    let q = code.q_miscorrect.prob();
    let t = u64::from(code.t);
    let [due, nde] = mc.run(|rng, len| {
        let mut counts = [0u64; 2];
        for _ in 0..len {
            if flips.sample(rng) > t {
                if rng.gen::<f64>() < q {
                    counts[1] += 1;
                } else {
                    counts[0] += 1;
                }
            }
        }
        counts
    });

    let trials = mc.trials as f64;
    Ok(BitVerdicts {
        code: *code,
        rber,
        p_c_due: ValidationVerdict::new(
            "p_c_due",
            analytic_due,
            due as f64 / trials,
            binomial_se(analytic_due, mc.trials),
            mc.trials,
            mc.seed,
            mc.z_threshold,
        ),
        p_c_nde: ValidationVerdict::new(
            "p_c_nde",
            analytic_nde,
            nde as f64 / trials,
            binomial_se(analytic_nde, mc.trials),
            mc.trials,
            mc.seed,
            mc.z_threshold,
        ),
    })
}
