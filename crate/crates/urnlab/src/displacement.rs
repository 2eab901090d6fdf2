//! Displacement laws and their stable-limit metadata.
//!
//! A displacement law is a sampleable distribution on R^d (iid coordinates
//! for d > 1). Each law carries the normalization exponent alpha with
//! n^(-alpha) * sum of n draws converging to a limit law, the limit law
//! itself, and a tail exponent beta with P(|delta| > n^beta) = o(1/n).

use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Kind {
    /// Constant displacement c.
    PointMass { c: f64 },
    /// Centered normal with standard deviation sigma.
    Gaussian { sigma: f64 },
    /// Symmetric Cauchy with the given half-width.
    Cauchy { scale: f64 },
    /// Symmetric stable law of index s in (0, 2].
    Stable { s: f64, scale: f64 },
    /// Symmetric Pareto: sign * scale * U^(-1/a), tail P(|x| > t) = (t/scale)^(-a).
    Pareto { a: f64, scale: f64 },
    /// Uniform on {-1, +1}.
    Rademacher,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementModel {
    kind: Kind,
    d: usize,
}

/// Limit-law metadata: n^(-alpha) * S_n converges to `limit` (product law
/// over coordinates for d > 1), and P(|delta| > n^beta) = o(1/n).
#[derive(Debug, Clone, PartialEq)]
pub struct StableLimit {
    pub alpha: f64,
    pub limit: DisplacementModel,
    pub beta: f64,
}

impl DisplacementModel {
    pub fn new(kind: Kind, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::ModelSpec("dimension must be >= 1".into()));
        }
        match &kind {
            Kind::PointMass { c } => {
                if !c.is_finite() {
                    return Err(Error::ModelSpec("point-mass c must be finite".into()));
                }
            }
            Kind::Gaussian { sigma } => {
                if !sigma.is_finite() || *sigma <= 0.0 {
                    return Err(Error::ModelSpec("gaussian sigma must be positive".into()));
                }
            }
            Kind::Cauchy { scale } => {
                if !scale.is_finite() || *scale <= 0.0 {
                    return Err(Error::ModelSpec("cauchy scale must be positive".into()));
                }
            }
            Kind::Stable { s, scale } => {
                if !(*s > 0.0 && *s <= 2.0) {
                    return Err(Error::ModelSpec("stable index must lie in (0, 2]".into()));
                }
                if !scale.is_finite() || *scale <= 0.0 {
                    return Err(Error::ModelSpec("stable scale must be positive".into()));
                }
            }
            Kind::Pareto { a, scale } => {
                if !a.is_finite() || *a <= 0.0 {
                    return Err(Error::ModelSpec("pareto tail index must be positive".into()));
                }
                if !scale.is_finite() || *scale <= 0.0 {
                    return Err(Error::ModelSpec("pareto scale must be positive".into()));
                }
            }
            Kind::Rademacher => {}
        }
        Ok(DisplacementModel { kind, d })
    }

    /// Parses `kind(param=value,...);d=<int>`; the `;d=` suffix defaults to 1.
    /// Omitted numeric parameters default to c=0, sigma=1, scale=1;
    /// the stable index s and pareto tail index a are required.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if text.is_empty() {
            return Err(Error::ModelSpec("empty model spec".into()));
        }
        let mut d = 1usize;
        let mut head = text;
        if let Some((h, rest)) = text.split_once(';') {
            head = h.trim();
            for part in rest.split(';') {
                let part = part.trim();
                let (k, v) = part
                    .split_once('=')
                    .ok_or_else(|| Error::ModelSpec(format!("expected key=value, got `{part}`")))?;
                match k.trim() {
                    "d" => {
                        d = v.trim().parse().map_err(|_| {
                            Error::ModelSpec(format!("bad dimension `{}`", v.trim()))
                        })?;
                    }
                    other => return Err(Error::ModelSpec(format!("unknown model key `{other}`"))),
                }
            }
        }
        let (name, params) = match head.split_once('(') {
            Some((n, p)) => {
                let p = p
                    .strip_suffix(')')
                    .ok_or_else(|| Error::ModelSpec(format!("unbalanced parens in `{head}`")))?;
                (n.trim(), p.trim())
            }
            None => (head, ""),
        };
        let mut vals: Vec<(String, f64)> = Vec::new();
        if !params.is_empty() {
            for item in params.split(',') {
                let (k, v) = item.split_once('=').ok_or_else(|| {
                    Error::ModelSpec(format!("expected param=value, got `{item}`"))
                })?;
                let x: f64 = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::ModelSpec(format!("bad number `{}`", v.trim())))?;
                vals.push((k.trim().to_string(), x));
            }
        }
        let get = |key: &str| -> Option<f64> {
            vals.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
        };
        let known = |allowed: &[&str], vals: &[(String, f64)]| -> Result<()> {
            for (k, _) in vals {
                if !allowed.contains(&k.as_str()) {
                    return Err(Error::ModelSpec(format!(
                        "unknown parameter `{k}` for `{name}`"
                    )));
                }
            }
            Ok(())
        };
        let kind = match name {
            "point-mass" => {
                known(&["c"], &vals)?;
                Kind::PointMass { c: get("c").unwrap_or(0.0) }
            }
            "gaussian" => {
                known(&["sigma"], &vals)?;
                Kind::Gaussian { sigma: get("sigma").unwrap_or(1.0) }
            }
            "cauchy" => {
                known(&["scale"], &vals)?;
                Kind::Cauchy { scale: get("scale").unwrap_or(1.0) }
            }
            "symmetric-stable" => {
                known(&["s", "scale"], &vals)?;
                let s = get("s")
                    .ok_or_else(|| Error::ModelSpec("symmetric-stable requires s=...".into()))?;
                Kind::Stable { s, scale: get("scale").unwrap_or(1.0) }
            }
            "symmetric-pareto" => {
                known(&["a", "scale"], &vals)?;
                let a = get("a")
                    .ok_or_else(|| Error::ModelSpec("symmetric-pareto requires a=...".into()))?;
                Kind::Pareto { a, scale: get("scale").unwrap_or(1.0) }
            }
            "rademacher" => {
                known(&[], &vals)?;
                Kind::Rademacher
            }
            other => return Err(Error::ModelSpec(format!("unknown model kind `{other}`"))),
        };
        DisplacementModel::new(kind, d)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn kind(&self) -> &Kind {
        &self.kind
    }

    /// Writes one draw into `out` (length d), coordinates iid.
    pub fn sample_into<R: Rng + ?Sized>(&self, out: &mut [f64], rng: &mut R) {
        debug_assert_eq!(out.len(), self.d);
        for slot in out.iter_mut() {
            *slot = self.sample_coord(rng);
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        self.sample_into(&mut out, rng);
        out
    }

    #[inline]
    pub fn sample_coord<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            Kind::PointMass { c } => *c,
            Kind::Gaussian { sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                sigma * z
            }
            Kind::Cauchy { scale } => {
                let u: f64 = rng.random();
                scale * (PI * (u - 0.5)).tan()
            }
            Kind::Stable { s, scale } => scale * stable_sampler_unit(*s, rng),
            Kind::Pareto { a, scale } => {
                let u: f64 = rng.random();
                let mag = scale * (1.0 - u).powf(-1.0 / a); // 1-u in (0,1], no zero base
                if rng.random::<bool>() {
                    mag
                } else {
                    -mag
                }
            }
            Kind::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    /// True for laws without atoms; colors of distinct balls then collide
    /// with probability zero.
    pub fn is_continuous(&self) -> bool {
        !matches!(&self.kind, Kind::PointMass { .. } | Kind::Rademacher)
    }

    /// True when the one-dimensional law exposes an exact CDF.
    pub fn has_cdf(&self) -> bool {
        if self.d != 1 {
            return false;
        }
        match &self.kind {
            Kind::PointMass { .. } | Kind::Gaussian { .. } | Kind::Cauchy { .. } => true,
            Kind::Stable { s, .. } => *s == 1.0 || *s == 2.0,
            Kind::Pareto { .. } | Kind::Rademacher => false,
        }
    }

    /// P(delta <= x). Only for d = 1 kinds with a closed form.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        self.cdf_impl(x, false)
    }

    /// Left limit P(delta < x); differs from `cdf` only for atomic laws.
    pub fn cdf_left(&self, x: f64) -> Result<f64> {
        self.cdf_impl(x, true)
    }

    fn cdf_impl(&self, x: f64, strict: bool) -> Result<f64> {
        if self.d != 1 {
            return Err(Error::Unsupported(
                "CDF is only defined for one-dimensional models".into(),
            ));
        }
        match &self.kind {
            Kind::PointMass { c } => {
                let inside = if strict { x > *c } else { x >= *c };
                Ok(if inside { 1.0 } else { 0.0 })
            }
            Kind::Gaussian { sigma } => Ok(gaussian_cdf(x, *sigma)),
            Kind::Cauchy { scale } => Ok(cauchy_cdf(x, *scale)),
            Kind::Stable { s, scale } => match *s {
                1.0 => Ok(cauchy_cdf(x, *scale)),
                2.0 => Ok(gaussian_cdf(x, scale * 2.0f64.sqrt())),
                _ => Err(Error::Unsupported(format!(
                    "no closed-form CDF for stable index {s}"
                ))),
            },
            Kind::Pareto { .. } | Kind::Rademacher => Err(Error::Unsupported(format!(
                "CDF unavailable for `{self}`"
            ))),
        }
    }

    /// Smallest radius r with P(|delta| > r) <= eps, possibly overshooting.
    /// Used to skip negligible convolution contributions.
    pub fn radius_for_tail(&self, eps: f64) -> Result<f64> {
        match &self.kind {
            Kind::PointMass { c } => Ok(c.abs()),
            Kind::Gaussian { sigma } => Ok(sigma * (2.0 * (2.0 / eps).ln()).sqrt()),
            Kind::Cauchy { scale } => Ok(scale * (PI * 0.5 * (1.0 - eps)).tan()),
            Kind::Stable { s, scale } => match *s {
                1.0 => Ok(scale * (PI * 0.5 * (1.0 - eps)).tan()),
                2.0 => Ok(scale * 2.0f64.sqrt() * (2.0 * (2.0 / eps).ln()).sqrt()),
                _ => Err(Error::Unsupported(
                    "tail radius needs a closed-form CDF".into(),
                )),
            },
            Kind::Pareto { a, scale } => Ok(scale * eps.powf(-1.0 / a)),
            Kind::Rademacher => Ok(1.0),
        }
    }

    /// Normalization exponent, limit law, and tail exponent for this model.
    pub fn stable_limit(&self) -> Result<StableLimit> {
        let (alpha, limit_kind, beta) = match &self.kind {
            Kind::PointMass { c } => (1.0, Kind::PointMass { c: *c }, 1.0),
            Kind::Gaussian { sigma } => (0.5, Kind::Gaussian { sigma: *sigma }, 1.0),
            Kind::Rademacher => (0.5, Kind::Gaussian { sigma: 1.0 }, 1.0),
            Kind::Cauchy { scale } => (1.0, Kind::Cauchy { scale: *scale }, 2.0),
            Kind::Stable { s, scale } => {
                if *s == 2.0 {
                    // index-2 stable with scale c is N(0, 2c^2)
                    (0.5, Kind::Gaussian { sigma: scale * 2.0f64.sqrt() }, 1.0)
                } else {
                    (1.0 / s, Kind::Stable { s: *s, scale: *scale }, 1.0 / s + 1.0)
                }
            }
            Kind::Pareto { a, scale } => {
                if *a == 2.0 {
                    return Err(Error::Unsupported(
                        "pareto tail index 2 sits on the normal/stable boundary; \
                         no pure power normalization applies"
                            .into(),
                    ));
                }
                if *a > 2.0 {
                    // finite variance a*scale^2/(a-2)
                    let sigma = scale * (a / (a - 2.0)).sqrt();
                    (0.5, Kind::Gaussian { sigma }, 1.0 / a + 1.0)
                } else {
                    // tail constant C = scale^a feeds the classical stable
                    // scale sigma^a = C * Gamma(2-a) cos(pi a/2) / (1-a),
                    // with the a -> 1 limit pi/2.
                    let factor = if *a == 1.0 {
                        PI / 2.0
                    } else {
                        libm::tgamma(2.0 - a) * (PI * a / 2.0).cos() / (1.0 - a)
                    };
                    let sigma = scale * factor.powf(1.0 / a);
                    (1.0 / a, Kind::Stable { s: *a, scale: sigma }, 1.0 / a + 1.0)
                }
            }
        };
        Ok(StableLimit {
            alpha,
            limit: DisplacementModel::new(limit_kind, self.d)?,
            beta,
        })
    }
}

impl StableLimit {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.limit.sample(rng)
    }
}

#[inline]
pub fn gaussian_cdf(x: f64, sigma: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / (sigma * 2.0f64.sqrt())))
}

#[inline]
pub fn cauchy_cdf(x: f64, scale: f64) -> f64 {
    (x / scale).atan() / PI + 0.5
}

/// Chambers-Mallows-Stuck sampler for the symmetric s-stable law at unit
/// scale: sin(s T)/cos(T)^(1/s) * (cos((1-s)T)/W)^((1-s)/s) with T uniform
/// on (-pi/2, pi/2) and W standard exponential. s=1 reduces to tan(T) and
/// s=2 to 2 sin(T) sqrt(W), which is N(0, 2).
pub fn stable_sampler_unit<R: Rng + ?Sized>(s: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    let theta = PI * (u - 0.5);
    if s == 1.0 {
        return theta.tan();
    }
    let v: f64 = rng.random();
    let mut w = -(1.0 - v).ln(); // (0,1] argument keeps w finite
    if w == 0.0 {
        w = f64::MIN_POSITIVE; // a zero uniform would otherwise give an infinite draw
    }
    let a = (s * theta).sin() / theta.cos().powf(1.0 / s);
    let b = (((1.0 - s) * theta).cos() / w).powf((1.0 - s) / s);
    a * b
}

/// Symmetric s-stable draw with the given scale; errors outside (0, 2].
pub fn stable_sampler<R: Rng + ?Sized>(s: f64, scale: f64, rng: &mut R) -> Result<f64> {
    if !(s > 0.0 && s <= 2.0) {
        return Err(Error::ModelSpec("stable index must lie in (0, 2]".into()));
    }
    Ok(scale * stable_sampler_unit(s, rng))
}

impl fmt::Display for DisplacementModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            Kind::PointMass { c } => write!(f, "point-mass(c={c})")?,
            Kind::Gaussian { sigma } => write!(f, "gaussian(sigma={sigma})")?,
            Kind::Cauchy { scale } => write!(f, "cauchy(scale={scale})")?,
            Kind::Stable { s, scale } => write!(f, "symmetric-stable(s={s},scale={scale})")?,
            Kind::Pareto { a, scale } => write!(f, "symmetric-pareto(a={a},scale={scale})")?,
            Kind::Rademacher => write!(f, "rademacher")?,
        }
        write!(f, ";d={}", self.d)
    }
}
