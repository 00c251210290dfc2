//! Exact big-integer reference computations shared by the integration tests.
//! Nothing here calls into the library's numerics.

#![allow(dead_code)]

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub fn ln_big(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 1000 {
        return x.to_f64().unwrap().ln();
    }
    let shift = bits - 64;
    (x >> shift).to_f64().unwrap().ln() + shift as f64 * std::f64::consts::LN_2
}

pub fn choose(n: u64, k: u64) -> BigUint {
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// ln P(Binomial(n, num/den) >= threshold), summed over every term with exact
/// integers: sum_i C(n,i) num^i (den-num)^(n-i) / den^n.
pub fn ln_tail_exact(n: u64, threshold: u64, num: u64, den: u64) -> f64 {
    let mut sum = BigUint::zero();
    for i in threshold..=n {
        sum += choose(n, i)
            * BigUint::from(num).pow(i as u32)
            * BigUint::from(den - num).pow((n - i) as u32);
    }
    if sum.is_zero() {
        return f64::NEG_INFINITY;
    }
    ln_big(&sum) - n as f64 * (den as f64).ln()
}

pub fn ln_rational(r: &BigRational) -> f64 {
    assert!(r.is_positive());
    ln_big(&r.numer().magnitude().clone()) - ln_big(&r.denom().magnitude().clone())
}

pub fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    ((a - b) / b).abs()
}
