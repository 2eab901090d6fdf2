//! The deterministic comparison-time schedule T_n = floor(e^{c n^kappa}),
//! its step probabilities p_n = (T_{n+1} - T_n)/T_{n+1}, the auxiliary
//! walk built from Bernoulli(p_n) indicators, and the Bernstein bound.

use crate::bigexp;
use crate::displacement::DisplacementModel;
use crate::error::{Error, Result};
use num_traits::ToPrimitive;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use std::fmt;

/// Positive rational in lowest terms; schedule exponents must be exact
/// (a rounded 1/3 shifts large floors by whole integers).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rational {
    num: u64,
    den: u64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

impl Rational {
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if den == 0 {
            return Err(Error::Schedule("zero denominator".into()));
        }
        let g = gcd(num, den).max(1);
        Ok(Rational { num: num / g, den: den / g })
    }

    /// Accepts an integer, a fraction "p/q", or a finite decimal.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = |_| Error::Schedule(format!("invalid rational: {s}"));
        if let Some((p, q)) = s.split_once('/') {
            return Rational::new(
                p.trim().parse::<u64>().map_err(bad)?,
                q.trim().parse::<u64>().map_err(bad)?,
            );
        }
        if let Some((int, frac)) = s.split_once('.') {
            if frac.is_empty() || frac.len() > 18 || !frac.bytes().all(|b| b.is_ascii_digit()) {
                return Err(Error::Schedule(format!("invalid rational: {s}")));
            }
            let den = 10u64.pow(frac.len() as u32);
            let whole = if int.is_empty() { 0 } else { int.parse::<u64>().map_err(bad)? };
            let num = whole
                .checked_mul(den)
                .and_then(|w| w.checked_add(frac.parse::<u64>().unwrap()))
                .ok_or_else(|| Error::Schedule(format!("rational too large: {s}")))?;
            return Rational::new(num, den);
        }
        Rational::new(s.parse::<u64>().map_err(bad)?, 1)
    }

    pub fn num(&self) -> u64 {
        self.num
    }

    pub fn den(&self) -> u64 {
        self.den
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

/// Increments Y_i = R_i * D_i (zero when the Bernoulli(p_i) indicator is
/// off, a fresh displacement otherwise) and their total S_n.
#[derive(Debug, Clone)]
pub struct AuxWalk {
    pub d: usize,
    /// flat (n-1) x d layout
    pub increments: Vec<f64>,
    /// S_n = Y_1 + ... + Y_{n-1}
    pub sum: Vec<f64>,
}

/// Times are exact integers up to the representability cutoff (the largest
/// n with e^{c n^kappa} < 2^63) and tracked in log space beyond it.
#[derive(Debug, Clone)]
pub struct Schedule {
    c: Rational,
    kappa: Rational,
    n_max: u64,
    /// t[n] for n in 1..=n_max+1; None beyond the cutoff
    t: Vec<Option<u64>>,
    /// c * n^kappa (pre-floor) for n in 1..=n_max+1
    log_t: Vec<f64>,
    /// p[n] for n in 1..=n_max
    p: Vec<f64>,
}

pub const DEFAULT_C: Rational = Rational { num: 3, den: 1 };
pub const DEFAULT_KAPPA: Rational = Rational { num: 1, den: 3 };

impl Schedule {
    pub fn new(c: Rational, kappa: Rational, n_max: u64) -> Result<Self> {
        if c.is_zero() {
            return Err(Error::Schedule("c must be positive".into()));
        }
        if kappa.is_zero() || kappa.num > kappa.den {
            return Err(Error::Schedule("kappa must lie in (0, 1]".into()));
        }
        if n_max < 1 {
            return Err(Error::Schedule("n_max must be >= 1".into()));
        }
        let len = (n_max + 2) as usize;
        let mut t: Vec<Option<u64>> = vec![None; len];
        let mut log_t = vec![0.0f64; len];
        let mut representable = true;
        for n in 1..=n_max + 1 {
            log_t[n as usize] = log_time(c, kappa, n);
            if representable {
                let v = bigexp::exp_floor(c.num, c.den, kappa.num, kappa.den, n)?;
                if v.bits() <= 63 {
                    t[n as usize] = v.to_u64();
                } else {
                    representable = false;
                }
            }
        }
        let mut p = vec![0.0f64; (n_max + 1) as usize];
        for n in 1..=n_max {
            let i = n as usize;
            p[i] = match (t[i], t[i + 1]) {
                (Some(a), Some(b)) => (b - a) as f64 / b as f64,
                // floor dropped above the cutoff; relative error < 2^-63
                _ => -f64::exp_m1(log_t[i] - log_t[i + 1]),
            };
        }
        Ok(Schedule { c, kappa, n_max, t, log_t, p })
    }

    pub fn standard(n_max: u64) -> Result<Self> {
        Schedule::new(DEFAULT_C, DEFAULT_KAPPA, n_max)
    }

    pub fn c(&self) -> Rational {
        self.c
    }

    pub fn kappa(&self) -> Rational {
        self.kappa
    }

    pub fn n_max(&self) -> u64 {
        self.n_max
    }

    fn check_index(&self, n: u64, hi: u64) -> Result<()> {
        if n < 1 || n > hi {
            return Err(Error::Schedule(format!(
                "index {n} outside table range 1..={hi}"
            )));
        }
        Ok(())
    }

    /// Exact T_n. Errors beyond the representability cutoff.
    pub fn big_time(&self, n: u64) -> Result<u64> {
        self.check_index(n, self.n_max + 1)?;
        self.t[n as usize].ok_or_else(|| {
            Error::Schedule(format!(
                "T_{n} exceeds 2^63; use log_big_time beyond the cutoff"
            ))
        })
    }

    /// Largest tabulated n with T_n exactly representable, if any.
    pub fn representable_up_to(&self) -> Option<u64> {
        (1..=self.n_max + 1).rev().find(|&n| self.t[n as usize].is_some())
    }

    /// c * n^kappa, the pre-floor exponent.
    pub fn log_big_time(&self, n: u64) -> Result<f64> {
        self.check_index(n, self.n_max + 1)?;
        Ok(self.log_t[n as usize])
    }

    /// p_n = (T_{n+1} - T_n)/T_{n+1}, exact below the cutoff.
    pub fn step_prob(&self, n: u64) -> Result<f64> {
        self.check_index(n, self.n_max)?;
        Ok(self.p[n as usize])
    }

    /// R_i ~ Bernoulli(p_i) for i < n, each firing one fresh displacement.
    pub fn sample_aux_walk(
        &self,
        model: &DisplacementModel,
        n: u64,
        rng: &mut ChaCha12Rng,
    ) -> Result<AuxWalk> {
        if n < 2 {
            return Err(Error::Schedule("aux walk needs n >= 2".into()));
        }
        self.check_index(n - 1, self.n_max)?;
        let d = model.d();
        let mut increments = vec![0.0f64; (n - 1) as usize * d];
        let mut sum = vec![0.0f64; d];
        for i in 1..n {
            if rng.random::<f64>() < self.p[i as usize] {
                let at = (i - 1) as usize * d;
                model.sample_into(&mut increments[at..at + d], rng);
                for j in 0..d {
                    sum[j] += increments[at + j];
                }
            }
        }
        Ok(AuxWalk { d, increments, sum })
    }

    /// S_n only, without materializing the increments.
    pub fn sample_aux_walk_sum(
        &self,
        model: &DisplacementModel,
        n: u64,
        rng: &mut ChaCha12Rng,
    ) -> Result<Vec<f64>> {
        if n < 2 {
            return Err(Error::Schedule("aux walk needs n >= 2".into()));
        }
        self.check_index(n - 1, self.n_max)?;
        let d = model.d();
        let mut buf = vec![0.0f64; d];
        let mut sum = vec![0.0f64; d];
        for i in 1..n {
            if rng.random::<f64>() < self.p[i as usize] {
                model.sample_into(&mut buf, rng);
                for j in 0..d {
                    sum[j] += buf[j];
                }
            }
        }
        Ok(sum)
    }
}

fn log_time(c: Rational, kappa: Rational, n: u64) -> f64 {
    let x = n as f64;
    // exact roots where available keep the stated values (8 -> 6, 1000 -> 30)
    let powed = match (kappa.num, kappa.den) {
        (_, 1) => x.powi(kappa.num as i32),
        (1, 2) => x.sqrt(),
        (1, 3) => x.cbrt(),
        _ => x.powf(kappa.as_f64()),
    };
    c.as_f64() * powed
}

/// sqrt(2 v t) + t, the deviation radius with failure probability e^{-t}.
pub fn bernstein_threshold(v: f64, t: f64) -> Result<f64> {
    if v < 0.0 || t < 0.0 || !v.is_finite() || !t.is_finite() {
        return Err(Error::Schedule("bernstein inputs must be nonnegative".into()));
    }
    Ok((2.0 * v * t).sqrt() + t)
}

pub fn bernstein_bound(t: f64) -> Result<f64> {
    if t < 0.0 || !t.is_finite() {
        return Err(Error::Schedule("bernstein inputs must be nonnegative".into()));
    }
    Ok((-t).exp())
}
