//! Log-space numerics and code parameters against exact integer arithmetic.

mod common;

use common::{choose, ln_big, ln_tail_exact, rel};
use num_bigint::BigUint;
use num_traits::One;
use replica_ecc::codes::{miscorrection_fraction, CodeSpec};
use replica_ecc::numerics::{binomial_exact, complement_power, log_binomial, log_binomial_tail};

#[test]
fn log_binomial_matches_big_integers() {
    for n in [0u64, 1, 5, 30, 64, 65, 100, 777, 2312, 10_000, 1_000_000] {
        let ks: Vec<u64> = [0, 1, 2, 7, 23, n / 3, n / 2, n.saturating_sub(1), n]
            .into_iter()
            .filter(|&k| k <= n && (n < 20_000 || k <= 40))
            .collect();
        for k in ks {
            let exact = ln_big(&choose(n, k.min(n - k)));
            let got = log_binomial(n, k).unwrap();
            if exact == 0.0 {
                assert_eq!(got, 0.0, "C({n},{k})");
            } else {
                assert!(rel(got, exact) <= 1e-12, "C({n},{k}): {got} vs {exact}");
            }
        }
    }
    let exact = ln_big(&choose(2312, 23));
    assert!(rel(log_binomial(2312, 23).unwrap(), exact) <= 1e-12);
}

#[test]
fn small_exact_binomials() {
    for n in 0..=64u64 {
        for k in 0..=n {
            assert_eq!(BigUint::from(binomial_exact(n, k).unwrap()), choose(n, k));
        }
    }
    assert!(binomial_exact(65, 3).is_none());
}

#[test]
fn tail_matches_rational_summation_up_to_30() {
    // p = num/den exactly representable in binary so the library sees the same value
    let probs: [(u64, u64); 6] = [(1, 1024), (1, 64), (1, 8), (1, 2), (3, 4), (1023, 1024)];
    for n in 0..=30u64 {
        for &(num, den) in &probs {
            let p = num as f64 / den as f64;
            for th in 0..=n + 1 {
                let exact = ln_tail_exact(n, th, num, den);
                let got = log_binomial_tail(n, th, p).unwrap().ln();
                if exact == f64::NEG_INFINITY {
                    assert_eq!(got, exact, "n={n} th={th} p={p}");
                } else {
                    // relative error of the probability, from the log difference
                    assert!(
                        (got - exact).abs() <= 1e-9,
                        "n={n} th={th} p={p}: {got} vs {exact}"
                    );
                }
            }
        }
    }
}

#[test]
fn tail_at_the_baseline_operating_point() {
    // p = 2e-4 = 1/5000, every term from 23 to 2312
    let exact = ln_tail_exact(2312, 23, 1, 5000);
    assert!((exact - (-69.895_533_334_758_52)).abs() < 1e-10);
    let got = log_binomial_tail(2312, 23, 2e-4).unwrap();
    assert!((got.ln() - exact).abs() <= 1e-9);
    assert!((-31.0..-30.0).contains(&got.log10()));
}

#[test]
fn complement_power_rational() {
    // 1 - 0.999^4 = 3994003999 / 10^12
    assert!(rel(complement_power(1e-3, 4).unwrap(), 3_994_003_999.0 / 1e12) <= 1e-12);
}

fn q_exact_ln(n: u64, k: u64, t: u64) -> f64 {
    let mut sum = BigUint::from(0u32);
    for i in 0..=t {
        sum += choose(n, i);
    }
    let space = BigUint::one() << (n - k);
    if sum >= space {
        0.0
    } else {
        ln_big(&sum) - (n - k) as f64 * std::f64::consts::LN_2
    }
}

#[test]
fn miscorrection_matches_exact_for_short_codes() {
    for n in 2..=64u32 {
        for k in 1..n {
            for t in 1..=(n - k).min(12) {
                let code = CodeSpec::with_length(n, k, t).unwrap();
                let expect = q_exact_ln(n.into(), k.into(), t.into());
                let got = miscorrection_fraction(&code).unwrap().ln();
                if expect == 0.0 {
                    assert_eq!(got, 0.0);
                } else {
                    assert!(rel(got, expect) <= 1e-12, "n={n} k={k} t={t}");
                }
            }
        }
    }
}

#[test]
fn miscorrection_of_studied_codes() {
    for (t, n) in [(22u32, 2312u64), (6, 2120)] {
        let code = CodeSpec::bch(2048, t).unwrap();
        assert_eq!(u64::from(code.n), n);
        let expect = q_exact_ln(n, 2048, t.into());
        assert!(rel(code.q_miscorrect.ln(), expect) <= 1e-12);
        assert!(code.q_miscorrect.prob() < 1e-3);
    }
}

/// Syndrome-table decoding of the narrow-sense BCH(15,7,2) code
/// (generator x^8 + x^7 + x^6 + x^4 + 1), checked over all 2^15 error
/// patterns: the share of weight >= 3 patterns whose syndrome falls in a
/// radius-2 decoding sphere should be close to the sphere-volume estimate.
#[test]
fn miscorrection_estimate_against_exhaustive_decoding() {
    const G: u32 = 0x1D1;
    let syndrome = |mut e: u32| {
        for b in (8..15).rev() {
            if e >> b & 1 == 1 {
                e ^= G << (b - 8);
            }
        }
        e
    };
    let mut in_sphere = [false; 256];
    for e in 0u32..1 << 15 {
        if e.count_ones() <= 2 {
            in_sphere[syndrome(e) as usize] = true;
        }
    }
    assert_eq!(in_sphere.iter().filter(|&&x| x).count(), 121);
    let (mut total, mut miscorrected) = (0u32, 0u32);
    for e in 0u32..1 << 15 {
        if e.count_ones() >= 3 {
            total += 1;
            miscorrected += u32::from(in_sphere[syndrome(e) as usize]);
        }
    }
    let empirical = f64::from(miscorrected) / f64::from(total);
    let code = CodeSpec::with_length(15, 7, 2).unwrap();
    assert!((code.q_miscorrect.prob() - 121.0 / 256.0).abs() < 1e-15);
    assert!(
        rel(empirical, code.q_miscorrect.prob()) < 0.01,
        "{empirical}"
    );
}
