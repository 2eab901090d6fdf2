//! Urn growth: ball n copies a uniformly chosen earlier ball's color and
//! adds an independent displacement. Parents are stored so the conditional
//! statistics downstream are exactly recomputable from a realized urn.

use crate::displacement::DisplacementModel;
use crate::error::{Error, Result};
use crate::rng::{derive_stream, Purpose};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

/// Colors X_1..X_n (flat n x d) and parents U_2..U_n (1-based ball indices).
///
/// Ball i's randomness comes from a stream derived from (seed, i), so
/// growing 1..=n in one call or across many calls gives identical states.
#[derive(Debug, Clone)]
pub struct UrnState {
    model: DisplacementModel,
    seed: u64,
    n: u64,
    colors: Vec<f64>,
    parents: Vec<u32>,
}

/// One draw of sum B_i * D_i with B_i ~ Bernoulli(1/i); `count` is sum B_i.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordSample {
    pub value: Vec<f64>,
    pub count: u64,
}

impl UrnState {
    pub fn new(model: DisplacementModel, seed: u64) -> UrnState {
        UrnState { model, seed, n: 0, colors: Vec::new(), parents: Vec::new() }
    }

    pub fn grown(model: DisplacementModel, seed: u64, n: u64) -> Result<UrnState> {
        let mut state = UrnState::new(model, seed);
        state.grow(n)?;
        Ok(state)
    }

    pub fn model(&self) -> &DisplacementModel {
        &self.model
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn d(&self) -> usize {
        self.model.d()
    }

    pub fn colors_flat(&self) -> &[f64] {
        &self.colors
    }

    pub fn parents(&self) -> &[u32] {
        &self.parents
    }

    /// Color of ball i, 1-based.
    pub fn color(&self, i: u64) -> &[f64] {
        let d = self.d();
        let at = (i - 1) as usize * d;
        &self.colors[at..at + d]
    }

    /// Parent index U_i, 1-based, for i >= 2.
    pub fn parent(&self, i: u64) -> u64 {
        self.parents[(i - 2) as usize] as u64
    }

    /// Test-only: assemble a state with hand-picked parents/colors.
    #[cfg(test)]
    pub(crate) fn from_raw(
        model: DisplacementModel,
        seed: u64,
        colors: Vec<f64>,
        parents: Vec<u32>,
    ) -> UrnState {
        let n = (colors.len() / model.d()) as u64;
        assert_eq!(colors.len(), n as usize * model.d());
        assert_eq!(parents.len(), n.saturating_sub(1) as usize);
        UrnState { model, seed, n, colors, parents }
    }

    pub fn grow(&mut self, target_n: u64) -> Result<()> {
        if target_n < self.n {
            return Err(Error::Urn(format!(
                "cannot shrink urn from {} to {target_n}",
                self.n
            )));
        }
        if target_n > u32::MAX as u64 {
            return Err(Error::Urn("parent indices are stored as u32".into()));
        }
        let d = self.d();
        self.colors.reserve(((target_n - self.n) as usize) * d);
        self.parents.reserve((target_n - self.n) as usize);
        let mut delta = vec![0.0f64; d];
        for i in self.n + 1..=target_n {
            let mut rng = derive_stream(self.seed, i, Purpose::Grow);
            if i == 1 {
                self.model.sample_into(&mut delta, &mut rng);
                self.colors.extend_from_slice(&delta);
                continue;
            }
            let u = rng.random_range(1..i);
            self.parents.push(u as u32);
            self.model.sample_into(&mut delta, &mut rng);
            let base = (u - 1) as usize * d;
            for (j, dj) in delta.iter().enumerate() {
                let c = self.colors[base + j] + dj;
                self.colors.push(c);
            }
        }
        self.n = target_n;
        Ok(())
    }

    /// k independent draws of X_I, I uniform on {1..n}, with replacement.
    /// Flat k x d layout.
    pub fn uniform_ball_samples(&self, k: usize, rng: &mut ChaCha12Rng) -> Result<Vec<f64>> {
        if k == 0 {
            return Err(Error::Urn("need at least one draw".into()));
        }
        if self.n == 0 {
            return Err(Error::Urn("empty urn".into()));
        }
        let d = self.d();
        let mut out = Vec::with_capacity(k * d);
        for _ in 0..k {
            let i = rng.random_range(1..=self.n);
            out.extend_from_slice(self.color(i));
        }
        Ok(out)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "version=1")?;
        writeln!(w, "d={}", self.d())?;
        writeln!(w, "model={}", self.model)?;
        writeln!(w, "seed={}", self.seed)?;
        writeln!(w, "n={}", self.n)?;
        for p in &self.parents {
            writeln!(w, "{p}")?;
        }
        let d = self.d();
        let mut line = String::new();
        for i in 0..self.n as usize {
            line.clear();
            for j in 0..d {
                if j > 0 {
                    line.push(' ');
                }
                let x = self.colors[i * d + j];
                if !x.is_finite() {
                    return Err(Error::Checkpoint("non-finite color".into()));
                }
                write!(line, "{}", format_hex_f64(x)).expect("string write");
            }
            writeln!(w, "{line}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<UrnState> {
        let file = std::fs::File::open(path)?;
        let mut lines = BufReader::new(file).lines();
        let mut next = |what: &str| -> Result<String> {
            lines
                .next()
                .transpose()?
                .ok_or_else(|| Error::Checkpoint(format!("truncated file: missing {what}")))
        };
        let header = |line: String, key: &str| -> Result<String> {
            line.strip_prefix(&format!("{key}="))
                .map(str::to_owned)
                .ok_or_else(|| Error::Checkpoint(format!("expected {key}=..., got {line:?}")))
        };
        let version = header(next("version")?, "version")?;
        if version != "1" {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let d: usize = header(next("d")?, "d")?
            .parse()
            .map_err(|_| Error::Checkpoint("bad dimension".into()))?;
        let model = DisplacementModel::parse(&header(next("model")?, "model")?)?;
        if model.d() != d {
            return Err(Error::Checkpoint("dimension does not match model".into()));
        }
        let seed: u64 = header(next("seed")?, "seed")?
            .parse()
            .map_err(|_| Error::Checkpoint("bad seed".into()))?;
        let n: u64 = header(next("n")?, "n")?
            .parse()
            .map_err(|_| Error::Checkpoint("bad ball count".into()))?;
        let mut parents = Vec::with_capacity(n.saturating_sub(1) as usize);
        for i in 2..=n {
            let u: u64 = next("parent")?
                .parse()
                .map_err(|_| Error::Checkpoint("bad parent index".into()))?;
            if u < 1 || u >= i {
                return Err(Error::Checkpoint(format!(
                    "parent U_{i} = {u} outside 1..={}",
                    i - 1
                )));
            }
            parents.push(u as u32);
        }
        let mut colors = Vec::with_capacity(n as usize * d);
        for _ in 0..n {
            let line = next("color")?;
            let parts: Vec<&str> = line.split(' ').collect();
            if parts.len() != d {
                return Err(Error::Checkpoint(format!(
                    "expected {d} coordinates, got {}",
                    parts.len()
                )));
            }
            for part in parts {
                colors.push(parse_hex_f64(part)?);
            }
        }
        if lines.next().transpose()?.is_some_and(|l| !l.trim().is_empty()) {
            return Err(Error::Checkpoint("trailing content after colors".into()));
        }
        Ok(UrnState { model, seed, n, colors, parents })
    }
}

/// value = sum_{i<=n} B_i * D_i, B_i ~ Bernoulli(1/i) independent.
/// Displacements are drawn only for indices whose indicator fires.
pub fn record_rep_sample(
    model: &DisplacementModel,
    n: u64,
    rng: &mut ChaCha12Rng,
) -> Result<RecordSample> {
    if n < 1 {
        return Err(Error::Urn("record representation needs n >= 1".into()));
    }
    let d = model.d();
    let mut value = vec![0.0f64; d];
    let mut delta = vec![0.0f64; d];
    let mut count = 0u64;
    for i in 1..=n {
        if rng.random_range(0..i) == 0 {
            count += 1;
            model.sample_into(&mut delta, rng);
            for j in 0..d {
                value[j] += delta[j];
            }
        }
    }
    Ok(RecordSample { value, count })
}

/// Lossless text encoding of a finite f64 (hex mantissa, binary exponent).
pub fn format_hex_f64(x: f64) -> String {
    let bits = x.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let mant = bits & ((1u64 << 52) - 1);
    if exp == 0 && mant == 0 {
        return format!("{sign}0x0p+0");
    }
    if exp == 0 {
        return format!("{sign}0x0.{mant:013x}p-1022");
    }
    let e = exp - 1023;
    format!("{sign}0x1.{mant:013x}p{}{}", if e < 0 { "" } else { "+" }, e)
}

pub fn parse_hex_f64(s: &str) -> Result<f64> {
    let bad = || Error::Checkpoint(format!("malformed float literal {s:?}"));
    let (sign, rest) = match s.strip_prefix('-') {
        Some(rest) => (1u64 << 63, rest),
        None => (0, s),
    };
    let rest = rest.strip_prefix("0x").ok_or_else(bad)?;
    if rest == "0p+0" {
        return Ok(f64::from_bits(sign));
    }
    let (lead, rest) = rest.split_at(1);
    let rest = rest.strip_prefix('.').ok_or_else(bad)?;
    let (mant_str, exp_str) = rest.split_once('p').ok_or_else(bad)?;
    if mant_str.len() != 13 {
        return Err(bad());
    }
    let mant = u64::from_str_radix(mant_str, 16).map_err(|_| bad())?;
    match lead {
        "0" => {
            if exp_str != "-1022" || mant == 0 {
                return Err(bad());
            }
            Ok(f64::from_bits(sign | mant))
        }
        "1" => {
            let e: i64 = exp_str.parse().map_err(|_| bad())?;
            let biased = e + 1023;
            if !(1..=2046).contains(&biased) {
                return Err(bad());
            }
            Ok(f64::from_bits(sign | ((biased as u64) << 52) | mant))
        }
        _ => Err(bad()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(spec: &str) -> DisplacementModel {
        DisplacementModel::parse(spec).unwrap()
    }

    #[test]
    fn first_ball_is_a_bare_displacement() {
        let u = UrnState::grown(model("point-mass(c=1);d=1"), 1, 1).unwrap();
        assert_eq!(u.colors_flat(), &[1.0]);
        assert!(u.parents().is_empty());
    }

    #[test]
    fn zero_model_stays_at_origin() {
        let u = UrnState::grown(model("point-mass(c=0);d=2"), 5, 50).unwrap();
        assert!(u.colors_flat().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn unit_point_mass_tracks_depths() {
        let u = UrnState::grown(model("point-mass(c=1);d=1"), 11, 200).unwrap();
        assert_eq!(u.color(1), &[1.0]);
        for i in 2..=200u64 {
            let p = u.parent(i);
            assert!((1..i).contains(&p));
            assert_eq!(u.color(i)[0], u.color(p)[0] + 1.0);
        }
    }

    #[test]
    fn growth_is_deterministic_and_extendable() {
        let m = model("cauchy(scale=1);d=1");
        let straight = UrnState::grown(m.clone(), 42, 300).unwrap();
        let again = UrnState::grown(m.clone(), 42, 300).unwrap();
        assert_eq!(straight.colors_flat(), again.colors_flat());
        assert_eq!(straight.parents(), again.parents());

        let mut staged = UrnState::grown(m, 42, 120).unwrap();
        staged.grow(300).unwrap();
        assert_eq!(staged.colors_flat(), straight.colors_flat());
        assert_eq!(staged.parents(), straight.parents());
    }

    #[test]
    fn shrinking_is_rejected() {
        let mut u = UrnState::grown(model("rademacher;d=1"), 0, 10).unwrap();
        assert!(u.grow(5).is_err());
    }

    #[test]
    fn uniform_ball_sampling() {
        let u = UrnState::grown(model("gaussian(sigma=1);d=1"), 7, 1).unwrap();
        let mut rng = derive_stream(7, 0, Purpose::UniformBall);
        let s = u.uniform_ball_samples(10, &mut rng).unwrap();
        assert!(s.iter().all(|x| *x == u.color(1)[0]));
        assert!(u.uniform_ball_samples(0, &mut rng).is_err());
    }

    #[test]
    fn record_sample_basics() {
        let mut rng = derive_stream(5, 0, Purpose::RecordRep);
        let one = record_rep_sample(&model("point-mass(c=1);d=1"), 1, &mut rng).unwrap();
        assert_eq!(one.count, 1);
        assert_eq!(one.value, vec![1.0]);
        for _ in 0..20 {
            let s = record_rep_sample(&model("point-mass(c=1);d=1"), 50, &mut rng).unwrap();
            assert_eq!(s.value[0], s.count as f64);
            assert!(s.count >= 1);
        }
        assert!(record_rep_sample(&model("rademacher;d=1"), 0, &mut rng).is_err());
    }

    #[test]
    fn hex_float_codec_is_bit_exact() {
        let cases = [
            0.0,
            -0.0,
            1.0,
            -1.0,
            0.1,
            -0.3,
            1e300,
            -1e-300,
            5e-324,
            f64::MIN_POSITIVE,
            std::f64::consts::PI,
            f64::MAX,
            -f64::MAX,
            2.2250738585072014e-308,
        ];
        for x in cases {
            let s = format_hex_f64(x);
            let back = parse_hex_f64(&s).unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{x} -> {s}");
        }
        assert_eq!(format_hex_f64(0.0), "0x0p+0");
        assert_eq!(format_hex_f64(-0.0), "-0x0p+0");
        for bad in ["", "1.5", "0x2.0000000000000p+0", "0x1.fp+0", "0x1.0000000000000p+9999"] {
            assert!(parse_hex_f64(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = std::env::temp_dir();
        let path = dir.join("urnlab_ckpt_roundtrip.txt");
        let u = UrnState::grown(model("cauchy(scale=2);d=1"), 9, 37).unwrap();
        u.save_checkpoint(&path).unwrap();
        let v = UrnState::load_checkpoint(&path).unwrap();
        assert_eq!(u.n(), v.n());
        assert_eq!(u.seed(), v.seed());
        assert_eq!(u.model().to_string(), v.model().to_string());
        assert_eq!(u.parents(), v.parents());
        let bits = |xs: &[f64]| xs.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(u.colors_flat()), bits(v.colors_flat()));
        // a loaded urn can keep growing as if never saved
        let mut loaded = v;
        loaded.grow(80).unwrap();
        let straight = UrnState::grown(model("cauchy(scale=2);d=1"), 9, 80).unwrap();
        assert_eq!(bits(loaded.colors_flat()), bits(straight.colors_flat()));
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn checkpoint_rejects_damage() {
        let dir = std::env::temp_dir();
        let empty = dir.join("urnlab_ckpt_empty.txt");
        std::fs::write(&empty, "").unwrap();
        assert!(UrnState::load_checkpoint(&empty).is_err());

        let badver = dir.join("urnlab_ckpt_badver.txt");
        std::fs::write(&badver, "version=2\n").unwrap();
        assert!(matches!(
            UrnState::load_checkpoint(&badver),
            Err(Error::Checkpoint(_))
        ));

        // U_5 = 7 violates U_5 <= 4
        let badparent = dir.join("urnlab_ckpt_badparent.txt");
        let mut text = String::from("version=1\nd=1\nmodel=point-mass(c=0);d=1\nseed=0\nn=5\n");
        text.push_str("1\n1\n2\n7\n");
        for _ in 0..5 {
            text.push_str("0x0p+0\n");
        }
        std::fs::write(&badparent, &text).unwrap();
        let err = UrnState::load_checkpoint(&badparent).unwrap_err();
        assert!(err.to_string().contains("U_5"), "{err}");

        let u = UrnState::grown(model("gaussian(sigma=1);d=1"), 3, 12).unwrap();
        let full = dir.join("urnlab_ckpt_full.txt");
        u.save_checkpoint(&full).unwrap();
        let text = std::fs::read_to_string(&full).unwrap();
        let truncated: String = text.lines().take(12).map(|l| format!("{l}\n")).collect();
        let cut = dir.join("urnlab_ckpt_cut.txt");
        std::fs::write(&cut, truncated).unwrap();
        assert!(UrnState::load_checkpoint(&cut).is_err());
        for p in [empty, badver, badparent, full, cut] {
            std::fs::remove_file(p).ok();
        }
    }
}
