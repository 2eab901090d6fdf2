//! Extended-precision evaluation of floor(exp(c * n^kappa)) for rational
//! c and kappa. f64 is not enough here: near the representability limit the
//! exponential passes within ~2e-22 (relative) of an integer, so the floor
//! needs far more precision than 53 bits. Everything runs in fixed point
//! with 256 fractional bits on top of num-bigint.

use crate::error::{Error, Result};
use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use std::sync::OnceLock;

const SCALE: usize = 256;

fn one_fp() -> BigUint {
    BigUint::one() << SCALE
}

/// ln 2 = 2 * atanh(1/3); the series in z = 1/3 converges a digit per term.
fn ln2_fp() -> &'static BigUint {
    static LN2: OnceLock<BigUint> = OnceLock::new();
    LN2.get_or_init(|| {
        let z = one_fp() / 3u32;
        let zz = (&z * &z) >> SCALE;
        let mut power = z.clone();
        let mut sum = z;
        let mut k = 1u64;
        loop {
            power = (&power * &zz) >> SCALE;
            if power.is_zero() {
                break;
            }
            sum += &power / (2 * k + 1);
            k += 1;
        }
        sum << 1
    })
}

/// e^x for a fixed-point x >= 0: reduce by ln 2, Taylor on the remainder,
/// shift back. The remainder is < 0.7 so ~60 terms reach 2^-256.
fn exp_fp(x: &BigUint) -> BigUint {
    let ln2 = ln2_fp();
    let k = (x / ln2).to_u64().expect("exponent out of range");
    let r = x - ln2 * k;
    let mut term = one_fp();
    let mut sum = one_fp();
    let mut i = 1u64;
    loop {
        term = ((&term * &r) >> SCALE) / i;
        if term.is_zero() {
            break;
        }
        sum += &term;
        i += 1;
    }
    sum << k as usize
}

/// floor(exp((c_num/c_den) * n^(kappa_num/kappa_den))) as an exact integer.
///
/// n^kappa is computed as the kappa_den-th root of n^kappa_num at full
/// fixed-point scale, so every step keeps >200 correct fractional bits and
/// the final floor is exact whenever the true value is not within ~2^-240
/// of an integer (the schedule's worst case is ~2^-72 away).
pub fn exp_floor(c_num: u64, c_den: u64, kappa_num: u64, kappa_den: u64, n: u64) -> Result<BigUint> {
    if c_den == 0 || kappa_den == 0 {
        return Err(Error::Schedule("zero denominator".into()));
    }
    if kappa_den > 64 || kappa_num > 64 {
        return Err(Error::Schedule(
            "exponent must be a simple fraction like 1/3".into(),
        ));
    }
    if n == 0 {
        return Ok(BigUint::one());
    }
    let base = BigUint::from(n).pow(kappa_num as u32);
    let root = (base << (SCALE * kappa_den as usize)).nth_root(kappa_den as u32);
    let x = root * c_num / c_den;
    Ok(exp_fp(&x) >> SCALE)
}

/// Natural log of a positive big integer, via the top 64 bits of mantissa.
pub fn ln_biguint(t: &BigUint) -> Result<f64> {
    if t.is_zero() {
        return Err(Error::Schedule("log of zero".into()));
    }
    let bits = t.bits();
    if bits <= 53 {
        return Ok((t.to_u64().unwrap() as f64).ln());
    }
    let shift = bits - 64;
    let top = (t >> shift as usize).to_u64().unwrap();
    Ok((top as f64).ln() + shift as f64 * std::f64::consts::LN_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(n: u64) -> u64 {
        exp_floor(3, 1, 1, 3, n).unwrap().to_u64().unwrap()
    }

    #[test]
    fn pinned_schedule_values() {
        assert_eq!(t(1), 20);
        assert_eq!(t(2), 43);
        assert_eq!(t(8), 403);
        assert_eq!(t(9), 512);
        assert_eq!(t(16), 1918);
        assert_eq!(t(17), 2239);
        assert_eq!(t(27), 8103);
        assert_eq!(t(28), 9043);
        assert_eq!(t(40), 28562);
        assert_eq!(t(41), 31090);
    }

    #[test]
    fn representability_boundary() {
        // largest n with e^{3 n^{1/3}} < 2^63
        assert!(exp_floor(3, 1, 1, 3, 3084).unwrap().bits() <= 63);
        assert!(exp_floor(3, 1, 1, 3, 3085).unwrap().bits() > 63);
    }

    #[test]
    fn ln2_constant_is_accurate() {
        let approx = (ln2_fp() >> (SCALE - 62)).to_u64().unwrap() as f64 / (1u64 << 62) as f64;
        assert!((approx - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn exact_cubes_hit_integer_exponents() {
        // n = 1000 -> exponent exactly 30; e^30 = 10686474581524.462...
        let v = exp_floor(3, 1, 1, 3, 1000).unwrap();
        assert_eq!(v.to_u64().unwrap(), 10686474581524);
    }

    #[test]
    fn ln_matches_exponent() {
        let v = exp_floor(3, 1, 1, 3, 100).unwrap();
        // 3 * 100^{1/3} = 13.92476...; the floor shifts ln by < 1/T
        let x = 3.0 * 100f64.cbrt();
        assert!((ln_biguint(&v).unwrap() - x).abs() < 2e-6);
        let p = BigUint::one() << 100usize;
        assert!((ln_biguint(&p).unwrap() - 100.0 * std::f64::consts::LN_2).abs() < 1e-9);
    }

    #[test]
    fn beyond_u64_range_still_exact_in_log() {
        let v = exp_floor(3, 1, 1, 3, 100_000).unwrap();
        let x = 3.0 * 100_000f64.cbrt();
        assert!((ln_biguint(&v).unwrap() - x).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_rationals() {
        assert!(exp_floor(3, 0, 1, 3, 5).is_err());
        assert!(exp_floor(3, 1, 1, 0, 5).is_err());
        assert!(exp_floor(3, 1, 1, 1000, 5).is_err());
    }
}
