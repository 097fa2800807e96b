//! Base dynamics: iid noise with reproducible two-sided streams, finite
//! periodic bases and irrational rotations with trigonometric samplers.
//!
//! Random draws are a pure function of `(seed, stream, index)`: index `n >= 0`
//! reads position `n` of the forward stream, index `n < 0` reads position
//! `-n - 1` of a separate backward stream.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::measures::frac;

/// Largest denominator rejected by the irrationality check.
pub const MAX_RATIONAL_DENOMINATOR: u64 = 1_000_000;

const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

#[inline]
fn u64_to_unit(x: u64) -> f64 {
    (x >> 11) as f64 * TWO_POW_M53
}

/// Distribution of a real-valued symbol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum Law {
    Uniform { lo: f64, hi: f64 },
    /// Finite support; `cumulative` is derived from `probs`.
    Atoms { values: Vec<f64>, probs: Vec<f64> },
    /// `v1` with probability `p`, otherwise `v0`.
    Bernoulli { p: f64, v0: f64, v1: f64 },
}

impl Law {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return param(format!("uniform({lo},{hi}) needs lo < hi"));
        }
        Ok(Law::Uniform { lo, hi })
    }

    pub fn atoms(pairs: &[(f64, f64)]) -> Result<Self> {
        if pairs.is_empty() {
            return param("atoms(...) needs at least one atom");
        }
        if pairs.iter().any(|&(v, p)| !v.is_finite() || !(p > 0.0) || !p.is_finite()) {
            return param("atom values must be finite and probabilities positive");
        }
        let total: f64 = pairs.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-9 {
            return param(format!("atom probabilities sum to {total}, expected 1"));
        }
        Ok(Law::Atoms {
            values: pairs.iter().map(|a| a.0).collect(),
            probs: pairs.iter().map(|a| a.1 / total).collect(),
        })
    }

    pub fn constant(v: f64) -> Self {
        Law::Atoms { values: vec![v], probs: vec![1.0] }
    }

    pub fn bernoulli(p: f64, v0: f64, v1: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) || !v0.is_finite() || !v1.is_finite() {
            return param(format!("bernoulli({p},{v0},{v1}) needs p in [0,1]"));
        }
        Ok(Law::Bernoulli { p, v0, v1 })
    }

    /// Maps a uniform variate in `[0, 1)` to a draw.
    #[inline]
    pub fn sample(&self, u: f64) -> f64 {
        match self {
            Law::Uniform { lo, hi } => lo + (hi - lo) * u,
            Law::Atoms { values, probs } => {
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                *values.last().expect("non-empty")
            }
            Law::Bernoulli { p, v0, v1 } => {
                if u < *p {
                    *v1
                } else {
                    *v0
                }
            }
        }
    }

    /// `(min, max)` of the support.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Law::Uniform { lo, hi } => (*lo, *hi),
            Law::Atoms { values, .. } => values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v))),
            Law::Bernoulli { p, v0, v1 } => {
                if *p == 0.0 {
                    (*v0, *v0)
                } else if *p == 1.0 {
                    (*v1, *v1)
                } else {
                    (v0.min(*v1), v0.max(*v1))
                }
            }
        }
    }

    /// `max |omega|` over the support.
    pub fn support_bound(&self) -> f64 {
        let (lo, hi) = self.support();
        lo.abs().max(hi.abs())
    }

    pub fn mean(&self) -> f64 {
        match self {
            Law::Uniform { lo, hi } => 0.5 * (lo + hi),
            Law::Atoms { values, probs } => values.iter().zip(probs).map(|(v, p)| v * p).sum(),
            Law::Bernoulli { p, v0, v1 } => (1.0 - p) * v0 + p * v1,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        let (lo, hi) = self.support();
        lo == hi
    }
}

impl fmt::Display for Law {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Law::Uniform { lo, hi } => write!(f, "uniform({lo},{hi})"),
            Law::Atoms { values, probs } => {
                write!(f, "atoms(")?;
                for (i, (v, p)) in values.iter().zip(probs).enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "({v},{p})")?;
                }
                write!(f, ")")
            }
            Law::Bernoulli { p, v0, v1 } => write!(f, "bernoulli({p},{v0},{v1})"),
        }
    }
}

impl FromStr for Law {
    type Err = Error;

    /// Grammar: `uniform(lo,hi)`, `atoms((v1,p1),...)`, `bernoulli(p,v0,v1)`.
    fn from_str(s: &str) -> Result<Self> {
        let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let open = s.find('(').ok_or_else(|| Error::Parse(format!("`{s}`: expected name(args)")))?;
        if !s.ends_with(')') {
            return Err(Error::Parse(format!("`{s}`: missing closing parenthesis")));
        }
        let name = s[..open].to_ascii_lowercase();
        let body = &s[open + 1..s.len() - 1];
        let nums = |body: &str| -> Result<Vec<f64>> {
            body.split(',')
                .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("`{t}` in `{s}`: {e}"))))
                .collect()
        };
        match name.as_str() {
            "uniform" => match nums(body)?.as_slice() {
                [lo, hi] => Law::uniform(*lo, *hi),
                _ => Err(Error::Parse(format!("`{s}`: uniform takes 2 arguments"))),
            },
            "bernoulli" => match nums(body)?.as_slice() {
                [p, v0, v1] => Law::bernoulli(*p, *v0, *v1),
                _ => Err(Error::Parse(format!("`{s}`: bernoulli takes 3 arguments"))),
            },
            "atoms" => {
                let inner = body
                    .strip_prefix('(')
                    .and_then(|b| b.strip_suffix(')'))
                    .ok_or_else(|| Error::Parse(format!("`{s}`: atoms expects ((v,p),...)")))?;
                let mut pairs = Vec::new();
                for chunk in inner.split("),(") {
                    match nums(chunk)?.as_slice() {
                        [v, p] => pairs.push((*v, *p)),
                        _ => return Err(Error::Parse(format!("`{s}`: atom `{chunk}` is not (v,p)"))),
                    }
                }
                Law::atoms(&pairs)
            }
            other => Err(Error::Parse(format!("unknown distribution `{other}`"))),
        }
    }
}

/// Seeded iid driver: `draw(index)` is a deterministic function of
/// `(seed, stream_id, index)` with marginal `law`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IidDriver {
    pub law: Law,
    pub seed: u64,
    pub stream_id: u64,
}

impl IidDriver {
    pub fn new(law: Law, seed: u64, stream_id: u64) -> Self {
        IidDriver { law, seed, stream_id }
    }

    pub fn with_stream(&self, stream_id: u64) -> Self {
        IidDriver { law: self.law.clone(), seed: self.seed, stream_id }
    }

    pub fn draw(&self, index: i64) -> f64 {
        self.law.sample(uniform_at(self.seed, self.stream_id, index))
    }

    /// Sequential draws for indices `start, start + 1, ...` (`start >= 0`).
    pub fn forward(&self, start: u64) -> DrawStream {
        DrawStream::new(self.seed, self.stream_id, false, start)
    }

    /// Sequential draws for indices `-1, -2, ...`.
    pub fn backward(&self) -> DrawStream {
        DrawStream::new(self.seed, self.stream_id, true, 0)
    }
}

/// Uniform variate in `[0, 1)` at a two-sided index.
pub fn uniform_at(seed: u64, stream_id: u64, index: i64) -> f64 {
    let (backward, pos) = if index >= 0 { (false, index as u64) } else { (true, (-(index + 1)) as u64) };
    DrawStream::new(seed, stream_id, backward, pos).next_uniform()
}

/// A positioned counter-based stream of uniforms.
#[derive(Clone, Debug)]
pub struct DrawStream {
    rng: ChaCha8Rng,
}

impl DrawStream {
    pub fn new(seed: u64, stream_id: u64, backward: bool, position: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id.wrapping_mul(2).wrapping_add(backward as u64));
        // one u64 per draw = two 32-bit words
        rng.set_word_pos(position as u128 * 2);
        DrawStream { rng }
    }

    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        u64_to_unit(self.rng.next_u64())
    }
}

/// `phi(x) = c0 + sum_k a_k cos(2 pi k x) + b_k sin(2 pi k x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigPolynomial {
    pub constant: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl TrigPolynomial {
    pub fn zero() -> Self {
        TrigPolynomial { constant: 0.0, cos: Vec::new(), sin: Vec::new() }
    }

    /// `amplitude * cos(2 pi x)`.
    pub fn cosine(amplitude: f64) -> Self {
        TrigPolynomial { constant: 0.0, cos: vec![amplitude], sin: Vec::new() }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let mut v = self.constant;
        for (k, a) in self.cos.iter().enumerate() {
            v += a * (TAU * (k + 1) as f64 * x).cos();
        }
        for (k, b) in self.sin.iter().enumerate() {
            v += b * (TAU * (k + 1) as f64 * x).sin();
        }
        v
    }

    /// `|phi| <= bound()`.
    pub fn bound(&self) -> f64 {
        self.constant.abs() + self.cos.iter().chain(&self.sin).map(|c| c.abs()).sum::<f64>()
    }

    pub fn is_zero(&self) -> bool {
        self.bound() == 0.0
    }
}

/// Irrational rotation `x -> x + frequency (mod 1)` with a sampling function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationBase {
    frequency: f64,
    x0: f64,
    sampler: TrigPolynomial,
}

impl RotationBase {
    pub fn new(frequency: f64, x0: f64, sampler: TrigPolynomial) -> Result<Self> {
        if !frequency.is_finite() || !x0.is_finite() {
            return param("rotation base parameters must be finite");
        }
        if let Some((p, q)) = rational_witness(frequency, MAX_RATIONAL_DENOMINATOR) {
            return param(format!("frequency {frequency} equals {p}/{q} at machine precision"));
        }
        Ok(RotationBase { frequency, x0: frac(x0), sampler })
    }

    pub fn frequency(&self) -> f64 {
        self.frequency
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn sampler(&self) -> &TrigPolynomial {
        &self.sampler
    }

    /// Same rotation started at `G^shift x0`.
    pub fn advanced(&self, shift: i64) -> RotationBase {
        RotationBase { frequency: self.frequency, x0: self.orbit(shift), sampler: self.sampler.clone() }
    }

    /// `G^n x0 = frac(x0 + n * frequency)`.
    #[inline]
    pub fn orbit(&self, n: i64) -> f64 {
        frac(self.x0 + frac(n as f64 * self.frequency))
    }

    #[inline]
    pub fn potential(&self, n: i64) -> f64 {
        self.sampler.eval(self.orbit(n))
    }
}

/// Returns `(p, q)` when `x` equals `p/q` with `q <= max_den` up to rounding.
pub fn rational_witness(x: f64, max_den: u64) -> Option<(i64, u64)> {
    let tol = |q: f64| 8.0 * f64::EPSILON * q * x.abs().max(1.0);
    let a0 = x.floor();
    let (mut h_prev, mut h) = (1.0f64, a0);
    let (mut k_prev, mut k) = (0.0f64, 1.0f64);
    let mut rem = x - a0;
    loop {
        if (k * x - h).abs() <= tol(k) {
            return Some((h as i64, k as u64));
        }
        if rem <= 0.0 {
            return Some((h as i64, k as u64));
        }
        let inv = 1.0 / rem;
        let a = inv.floor();
        rem = inv - a;
        let (h_next, k_next) = (a * h + h_prev, a * k + k_prev);
        if k_next > max_den as f64 {
            return None;
        }
        h_prev = h;
        h = h_next;
        k_prev = k;
        k = k_next;
    }
}

/// A finite cyclic base: `labels[n mod p]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicBase {
    labels: Vec<f64>,
}

impl PeriodicBase {
    pub fn new(labels: Vec<f64>) -> Result<Self> {
        if labels.is_empty() {
            return param("periodic base needs period >= 1");
        }
        if labels.iter().any(|l| !l.is_finite()) {
            return param("periodic labels must be finite");
        }
        Ok(PeriodicBase { labels })
    }

    pub fn period(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    #[inline]
    pub fn orbit(&self, n: i64) -> f64 {
        self.labels[n.rem_euclid(self.labels.len() as i64) as usize]
    }
}

/// The driver of a cocycle: produces the fiber symbol at each time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "base", rename_all = "snake_case")]
pub enum Base {
    Iid(IidDriver),
    Periodic(PeriodicBase),
    /// Symbol `phi(G^n x0) + W_n`.
    Quasiperiodic { rotation: RotationBase, noise: Option<IidDriver> },
}

impl Base {
    /// Symbols at times `start, start + 1, ...` for replica `replica`.
    /// Replicas use independent noise streams; periodic and rotation bases
    /// start the replica at `T^{replica * stride} x0`.
    pub fn forward(&self, replica: u64, stride: i64, start: i64) -> SymbolSource {
        self.source(replica, stride, start, 1)
    }

    /// Symbols at times `-1, -2, ...` (backward noise stream).
    pub fn backward(&self, replica: u64, stride: i64) -> SymbolSource {
        self.source(replica, stride, -1, -1)
    }

    fn source(&self, replica: u64, stride: i64, start: i64, dir: i64) -> SymbolSource {
        let shift = (replica as i64).wrapping_mul(stride);
        match self {
            Base::Iid(d) => {
                let d = d.with_stream(d.stream_id.wrapping_add(replica));
                let stream = if dir > 0 { d.forward(start as u64) } else { d.backward() };
                SymbolSource::Iid { law: d.law, stream }
            }
            Base::Periodic(p) => SymbolSource::Periodic { base: p.clone(), n: start + shift, dir },
            Base::Quasiperiodic { rotation, noise } => {
                let noise = noise.as_ref().map(|d| {
                    let d = d.with_stream(d.stream_id.wrapping_add(replica));
                    let stream = if dir > 0 { d.forward(start as u64) } else { d.backward() };
                    (d.law, stream)
                });
                SymbolSource::Quasi { rotation: rotation.advanced(shift), n: start, dir, noise }
            }
        }
    }

    /// Same base with every iid stream keyed by `seed`.
    pub fn reseeded(&self, seed: u64) -> Base {
        match self {
            Base::Iid(d) => Base::Iid(IidDriver { seed, ..d.clone() }),
            Base::Periodic(p) => Base::Periodic(p.clone()),
            Base::Quasiperiodic { rotation, noise } => Base::Quasiperiodic {
                rotation: rotation.clone(),
                noise: noise.as_ref().map(|d| IidDriver { seed, ..d.clone() }),
            },
        }
    }

    /// `sup |omega|` over possible symbols.
    pub fn symbol_bound(&self) -> f64 {
        match self {
            Base::Iid(d) => d.law.support_bound(),
            Base::Periodic(p) => p.labels.iter().fold(0.0, |m, l| m.max(l.abs())),
            Base::Quasiperiodic { rotation, noise } => {
                rotation.sampler.bound() + noise.as_ref().map_or(0.0, |d| d.law.support_bound())
            }
        }
    }

    /// Lower bound of the symbol range.
    pub fn symbol_min(&self) -> f64 {
        match self {
            Base::Iid(d) => d.law.support().0,
            Base::Periodic(p) => p.labels.iter().fold(f64::INFINITY, |m, &l| m.min(l)),
            Base::Quasiperiodic { rotation, noise } => {
                -rotation.sampler.bound() + noise.as_ref().map_or(0.0, |d| d.law.support().0)
            }
        }
    }

    /// Upper bound of the symbol range.
    pub fn symbol_max(&self) -> f64 {
        match self {
            Base::Iid(d) => d.law.support().1,
            Base::Periodic(p) => p.labels.iter().fold(f64::NEG_INFINITY, |m, &l| m.max(l)),
            Base::Quasiperiodic { rotation, noise } => {
                rotation.sampler.bound() + noise.as_ref().map_or(0.0, |d| d.law.support().1)
            }
        }
    }
}

/// Iterator over base symbols.
#[derive(Clone, Debug)]
pub enum SymbolSource {
    Iid { law: Law, stream: DrawStream },
    Periodic { base: PeriodicBase, n: i64, dir: i64 },
    Quasi { rotation: RotationBase, n: i64, dir: i64, noise: Option<(Law, DrawStream)> },
}

impl SymbolSource {
    #[inline]
    pub fn next_symbol(&mut self) -> f64 {
        match self {
            SymbolSource::Iid { law, stream } => law.sample(stream.next_uniform()),
            SymbolSource::Periodic { base, n, dir } => {
                let v = base.orbit(*n);
                *n += *dir;
                v
            }
            SymbolSource::Quasi { rotation, n, dir, noise } => {
                let mut v = rotation.potential(*n);
                *n += *dir;
                if let Some((law, stream)) = noise {
                    v += law.sample(stream.next_uniform());
                }
                v
            }
        }
    }
}
