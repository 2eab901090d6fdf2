//! Empirical-measure machinery: rescaling, box discretization, and the
//! distances used by the verification pipelines (L1 over boxes, exact
//! atomic total variation, Kolmogorov-Smirnov, Wasserstein-1).

use crate::error::{Error, Result};
use std::collections::{BTreeMap, HashMap};
use std::io::Write;

/// Finite atomic measure on R^d: flat coordinate storage, one weight per atom.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicMeasure {
    d: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

/// Sparse nonnegative measure on the grid of half-open boxes
/// [i*h, (i+1)*h)^d; `overflow` holds mass not assigned to any box.
/// BTreeMap keys give deterministic iteration order.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxedMeasure {
    h: f64,
    d: usize,
    masses: BTreeMap<Vec<i64>, f64>,
    overflow: f64,
}

impl AtomicMeasure {
    pub fn new(d: usize, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::Measure("dimension must be >= 1".into()));
        }
        if coords.len() != weights.len() * d {
            return Err(Error::Measure(format!(
                "coordinate count {} does not match {} atoms of dimension {d}",
                coords.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::Measure("weights must be positive and finite".into()));
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::Measure("coordinates must be finite".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Measure(format!(
                "weights must sum to 1, got {total}"
            )));
        }
        Ok(AtomicMeasure { d, coords, weights })
    }

    /// Uniform probability on the given points (flat layout, length k*d).
    pub fn uniform_on(d: usize, coords: &[f64]) -> Result<Self> {
        if d == 0 || coords.is_empty() || !coords.len().is_multiple_of(d) {
            return Err(Error::Measure("need a nonempty multiple of d coordinates".into()));
        }
        let k = coords.len() / d;
        AtomicMeasure::new(d, coords.to_vec(), vec![1.0 / k as f64; k])
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn atom(&self, i: usize) -> (&[f64], f64) {
        (&self.coords[i * self.d..(i + 1) * self.d], self.weights[i])
    }

    /// Renormalization: pushes mass at x to x/a.
    pub fn rescale_theta(&self, a: f64) -> Result<AtomicMeasure> {
        if !a.is_finite() || a <= 0.0 {
            return Err(Error::Measure("rescale factor must be positive".into()));
        }
        Ok(AtomicMeasure {
            d: self.d,
            coords: self.coords.iter().map(|x| x / a).collect(),
            weights: self.weights.clone(),
        })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let names: Vec<String> = (1..=self.d).map(|j| format!("x_{j}")).collect();
        writeln!(w, "{},weight", names.join(","))?;
        for i in 0..self.len() {
            let (x, wt) = self.atom(i);
            let coords: Vec<String> = x.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{},{wt:.16e}", coords.join(","))?;
        }
        Ok(())
    }
}

/// Componentwise floor(x/h); the box of x among half-open cubes of width h.
pub fn box_index(x: &[f64], h: f64) -> Result<Vec<i64>> {
    if !h.is_finite() || h <= 0.0 {
        return Err(Error::Measure("box width must be positive".into()));
    }
    x.iter()
        .map(|&c| {
            if !c.is_finite() {
                return Err(Error::Measure("non-finite coordinate".into()));
            }
            Ok((c / h).floor() as i64)
        })
        .collect()
}

/// Sums atom weights per box. Total mass is preserved exactly up to float
/// summation order.
pub fn boxify(measure: &AtomicMeasure, h: f64) -> Result<BoxedMeasure> {
    let mut masses: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
    for i in 0..measure.len() {
        let (x, w) = measure.atom(i);
        *masses.entry(box_index(x, h)?).or_insert(0.0) += w;
    }
    Ok(BoxedMeasure { h, d: measure.d, masses, overflow: 0.0 })
}

impl BoxedMeasure {
    pub fn from_parts(
        h: f64,
        d: usize,
        masses: BTreeMap<Vec<i64>, f64>,
        overflow: f64,
    ) -> Result<Self> {
        if !h.is_finite() || h <= 0.0 || d == 0 {
            return Err(Error::Measure("need positive width and dimension".into()));
        }
        if overflow < 0.0 || masses.values().any(|m| *m < 0.0 || !m.is_finite()) {
            return Err(Error::Measure("box masses must be nonnegative".into()));
        }
        if masses.keys().any(|k| k.len() != d) {
            return Err(Error::Measure("box index arity must equal d".into()));
        }
        Ok(BoxedMeasure { h, d, masses, overflow })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn masses(&self) -> &BTreeMap<Vec<i64>, f64> {
        &self.masses
    }

    pub fn overflow(&self) -> f64 {
        self.overflow
    }

    pub fn mass_of(&self, idx: &[i64]) -> f64 {
        self.masses.get(idx).copied().unwrap_or(0.0)
    }

    /// Total mass including the overflow bucket.
    pub fn total(&self) -> f64 {
        self.masses.values().sum::<f64>() + self.overflow
    }

    /// Merges boxes pairwise (index i to floor(i/2) componentwise, width
    /// doubled). Coarsening can only cancel differences, never create them.
    pub fn coarsen_pairwise(&self) -> BoxedMeasure {
        let mut masses: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
        for (k, m) in &self.masses {
            let key: Vec<i64> = k.iter().map(|i| i.div_euclid(2)).collect();
            *masses.entry(key).or_insert(0.0) += m;
        }
        BoxedMeasure { h: self.h * 2.0, d: self.d, masses, overflow: self.overflow }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "h={:.16e}", self.h)?;
        let names: Vec<String> = (1..=self.d).map(|j| format!("i_{j}")).collect();
        writeln!(w, "{},mass", names.join(","))?;
        for (k, m) in &self.masses {
            let idx: Vec<String> = k.iter().map(|i| i.to_string()).collect();
            writeln!(w, "{},{m:.16e}", idx.join(","))?;
        }
        if self.overflow > 0.0 {
            let blanks: Vec<&str> = (0..self.d).map(|_| "overflow").collect();
            writeln!(w, "{},{:.16e}", blanks.join(","), self.overflow)?;
        }
        Ok(())
    }
}

/// Sum over the union of occupied boxes of |P - Q|, plus the overflow
/// difference; equals twice the total variation of the boxed laws when both
/// are probabilities.
pub fn l1_box_discrepancy(p: &BoxedMeasure, q: &BoxedMeasure) -> Result<f64> {
    if p.h != q.h {
        return Err(Error::Measure(format!(
            "box widths differ: {} vs {}",
            p.h, q.h
        )));
    }
    if p.d != q.d {
        return Err(Error::Measure("dimensions differ".into()));
    }
    let mut sum = (p.overflow - q.overflow).abs();
    let mut ita = p.masses.iter().peekable();
    let mut itb = q.masses.iter().peekable();
    loop {
        match (ita.peek(), itb.peek()) {
            (Some((ka, ma)), Some((kb, mb))) => match ka.cmp(kb) {
                std::cmp::Ordering::Less => {
                    sum += **ma;
                    ita.next();
                }
                std::cmp::Ordering::Greater => {
                    sum += **mb;
                    itb.next();
                }
                std::cmp::Ordering::Equal => {
                    sum += (**ma - **mb).abs();
                    ita.next();
                    itb.next();
                }
            },
            (Some((_, ma)), None) => {
                sum += **ma;
                ita.next();
            }
            (None, Some((_, mb))) => {
                sum += **mb;
                itb.next();
            }
            (None, None) => break,
        }
    }
    Ok(sum)
}

/// Canonical bit pattern used to match atoms exactly; folds -0.0 onto 0.0.
fn atom_key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|&c| (c + 0.0).to_bits()).collect()
}

/// Exact total variation between atomic measures: half the sum over distinct
/// atom locations of |P - Q|, atoms matched by exact coordinate equality.
pub fn tv_atomic(p: &AtomicMeasure, q: &AtomicMeasure) -> Result<f64> {
    if p.d != q.d {
        return Err(Error::Measure("dimensions differ".into()));
    }
    let mut diff: HashMap<Vec<u64>, f64> = HashMap::with_capacity(p.len() + q.len());
    for i in 0..p.len() {
        let (x, w) = p.atom(i);
        *diff.entry(atom_key(x)).or_insert(0.0) += w;
    }
    for i in 0..q.len() {
        let (x, w) = q.atom(i);
        *diff.entry(atom_key(x)).or_insert(0.0) -= w;
    }
    Ok(0.5 * diff.values().map(|v| v.abs()).sum::<f64>())
}

/// One-sample Kolmogorov-Smirnov distance against a continuous CDF.
pub fn ks_distance<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<f64> {
    ks_distance_general(samples, &cdf, &cdf)
}

/// One-sample KS distance with an explicit left limit, correct for CDFs
/// with atoms: sup F_n - F is attained at sample points, sup F - F_n at
/// their left limits.
pub fn ks_distance_general<F, G>(samples: &[f64], cdf: F, cdf_left: G) -> Result<f64>
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    if samples.is_empty() {
        return Err(Error::Measure("empty sample".into()));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("non-finite sample"));
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let hi = (i + 1) as f64 / n - cdf(x);
        let lo = cdf_left(x) - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    Ok(d.max(0.0))
}

/// Two-sample KS distance by a merge walk over both sorted samples; ties are
/// consumed on both sides before the gap is measured.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Measure("empty sample".into()));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|u, v| u.partial_cmp(v).expect("non-finite sample"));
    ys.sort_by(|u, v| u.partial_cmp(v).expect("non-finite sample"));
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < n && j < m {
        let t = xs[i].min(ys[j]);
        while i < n && xs[i] == t {
            i += 1;
        }
        while j < m && ys[j] == t {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    Ok(d)
}

/// Asymptotic KS critical value at the given significance level:
/// c(level) = sqrt(ln(2/level)/2), scaled by the effective sample size.
pub fn ks_critical_one_sample(level: f64, n: usize) -> f64 {
    ((2.0 / level).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

pub fn ks_critical_two_sample(level: f64, n: usize, m: usize) -> f64 {
    let c = ((2.0 / level).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// Wasserstein-1 between equal-size samples: mean absolute difference of
/// order statistics.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Measure("sample sizes differ".into()));
    }
    if a.is_empty() {
        return Err(Error::Measure("empty sample".into()));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|u, v| u.partial_cmp(v).expect("non-finite sample"));
    ys.sort_by(|u, v| u.partial_cmp(v).expect("non-finite sample"));
    let total: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - y).abs()).sum();
    Ok(total / xs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn am(points: &[f64]) -> AtomicMeasure {
        AtomicMeasure::uniform_on(1, points).unwrap()
    }

    #[test]
    fn box_index_examples() {
        assert_eq!(box_index(&[0.0, 0.0], 1.0).unwrap(), vec![0, 0]);
        assert_eq!(box_index(&[0.5], 0.25).unwrap(), vec![2]);
        assert_eq!(box_index(&[-0.3], 1.0).unwrap(), vec![-1]);
        assert!(box_index(&[f64::NAN], 1.0).is_err());
        assert!(box_index(&[0.0], 0.0).is_err());
    }

    #[test]
    fn boxify_examples() {
        let b = boxify(&am(&[0.1, 0.9]), 1.0).unwrap();
        assert_eq!(b.mass_of(&[0]), 1.0);
        assert_eq!(b.masses().len(), 1);

        let b = boxify(&am(&[-0.5, 0.5]), 0.5).unwrap();
        assert_eq!(b.mass_of(&[-1]), 0.5);
        assert_eq!(b.mass_of(&[1]), 0.5);
        assert!((b.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rescale_theta_examples() {
        // mass moves with the atoms; weights are untouched
        let a = am(&[2.0, 4.0]);
        let r = a.rescale_theta(2.0).unwrap();
        assert_eq!(r.atom(0).0, &[1.0]);
        assert_eq!(r.atom(1).0, &[2.0]);
        assert_eq!(r.atom(0).1, 0.5);
        let id = a.rescale_theta(1.0).unwrap();
        assert_eq!(id, a);
        assert!(a.rescale_theta(0.0).is_err());
    }

    #[test]
    fn l1_examples() {
        let p = boxify(&am(&[0.5]), 1.0).unwrap();
        let q = boxify(&am(&[1.5]), 1.0).unwrap();
        assert_eq!(l1_box_discrepancy(&p, &p).unwrap(), 0.0);
        assert_eq!(l1_box_discrepancy(&p, &q).unwrap(), 2.0);

        let p = boxify(&am(&[0.5, 1.5]), 1.0).unwrap();
        let q = boxify(&am(&[1.5, 2.5]), 1.0).unwrap();
        assert_eq!(l1_box_discrepancy(&p, &q).unwrap(), 1.0);

        let wide = boxify(&am(&[0.5]), 2.0).unwrap();
        assert!(l1_box_discrepancy(&p, &wide).is_err());
    }

    #[test]
    fn tv_examples() {
        let p = am(&[0.0, 1.0]);
        assert_eq!(tv_atomic(&p, &p).unwrap(), 0.0);
        let q = am(&[2.0, 3.0]);
        assert_eq!(tv_atomic(&p, &q).unwrap(), 1.0);
        // signed zero matches positive zero
        let z = am(&[-0.0, 1.0]);
        assert_eq!(tv_atomic(&p, &z).unwrap(), 0.0);
    }

    #[test]
    fn ks_distance_quantile_construction() {
        // samples at the reference quantiles (i - 1/2)/N give exactly 1/(2N)
        let n = 100;
        let samples: Vec<f64> = (1..=n)
            .map(|i| (i as f64 - 0.5) / n as f64)
            .collect();
        let ks = ks_distance(&samples, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!((ks - 1.0 / (2.0 * n as f64)).abs() < 1e-12);
    }

    #[test]
    fn ks_two_sample_examples() {
        assert_eq!(ks_two_sample(&[0.0], &[1.0]).unwrap(), 1.0);
        let a = [0.0, 1.0, 2.0];
        assert_eq!(ks_two_sample(&a, &a).unwrap(), 0.0);
        assert!(ks_two_sample(&[], &a).is_err());
    }

    #[test]
    fn ks_distance_handles_atoms() {
        // all samples at an atom of the reference: distance 0 needs the left limit
        let samples = [0.0; 8];
        let ks = ks_distance_general(
            &samples,
            |x| if x >= 0.0 { 1.0 } else { 0.0 },
            |x| if x > 0.0 { 1.0 } else { 0.0 },
        )
        .unwrap();
        assert_eq!(ks, 0.0);
    }

    #[test]
    fn wasserstein_examples() {
        assert_eq!(wasserstein1(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(wasserstein1(&[0.0, 1.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert!(wasserstein1(&[0.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn critical_values_match_asymptotics() {
        // c(1e-3) = 1.9494...
        let c = ks_critical_one_sample(1e-3, 1) * 1.0;
        assert!((c - 1.9494).abs() < 1e-3);
        let two = ks_critical_two_sample(1e-3, 5000, 5000);
        assert!((two - 0.0390).abs() < 2e-4);
    }

    #[test]
    fn coarsen_halves_resolution() {
        let b = boxify(&am(&[0.1, 1.1, 2.1, 3.1]), 1.0).unwrap();
        let c = b.coarsen_pairwise();
        assert_eq!(c.h(), 2.0);
        assert_eq!(c.mass_of(&[0]), 0.5);
        assert_eq!(c.mass_of(&[1]), 0.5);
    }
}
