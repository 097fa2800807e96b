//! Orientation-preserving circle homeomorphisms represented by their
//! degree-one lifts to the real line.
//!
//! The circle is `R/Z`. Projective maps act on `RP^1` through the coordinate
//! `y = theta / pi (mod 1)`, where `theta in [0, pi)` is the direction angle
//! of a nonzero vector of the plane.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

/// Determinant tolerance for [`Sl2Matrix::new`].
pub const DET_TOLERANCE: f64 = 1e-12;

/// A real 2x2 matrix with unit determinant, `(a, b; c, d)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sl2Matrix {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Sl2Matrix {
    pub const IDENTITY: Sl2Matrix = Sl2Matrix { a: 1.0, b: 0.0, c: 0.0, d: 1.0 };

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        let m = Sl2Matrix { a, b, c, d };
        let det = m.det();
        if !det.is_finite() || (det - 1.0).abs() >= DET_TOLERANCE {
            return Err(Error::InvalidMatrix { det });
        }
        Ok(m)
    }

    /// Builds a matrix without checking the determinant. Callers guarantee
    /// `ad - bc = 1` by construction (products, inverses, closed forms).
    pub(crate) const fn new_unchecked(a: f64, b: f64, c: f64, d: f64) -> Self {
        Sl2Matrix { a, b, c, d }
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn mul(&self, rhs: &Sl2Matrix) -> Sl2Matrix {
        Sl2Matrix::new_unchecked(
            self.a * rhs.a + self.b * rhs.c,
            self.a * rhs.b + self.b * rhs.d,
            self.c * rhs.a + self.d * rhs.c,
            self.c * rhs.b + self.d * rhs.d,
        )
    }

    pub fn inverse(&self) -> Sl2Matrix {
        Sl2Matrix::new_unchecked(self.d, -self.b, -self.c, self.a)
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [self.a * v[0] + self.b * v[1], self.c * v[0] + self.d * v[1]]
    }

    /// Rotation of the plane by `angle` radians.
    pub fn rotation(angle: f64) -> Sl2Matrix {
        let (s, c) = angle.sin_cos();
        Sl2Matrix::new_unchecked(c, -s, s, c)
    }

    /// `diag(lambda, 1/lambda)`; `lambda` must be nonzero.
    pub fn diagonal(lambda: f64) -> Result<Sl2Matrix> {
        if lambda == 0.0 || !lambda.is_finite() {
            return param(format!("diagonal entry must be finite and nonzero, got {lambda}"));
        }
        Ok(Sl2Matrix::new_unchecked(lambda, 0.0, 0.0, 1.0 / lambda))
    }
}

#[derive(Clone, Debug)]
enum MapKind {
    Rotation {
        shift: f64,
    },
    /// `phase + L(y + pre)` where `L` is the lift of the upper triangular
    /// factor `(r, x; 0, 1/r)` of the matrix that fixes the integers.
    Projective {
        phase: f64,
        pre: f64,
        r: f64,
        x: f64,
    },
    /// `post + h(y + pre)` with `h = f` or `h = f^{-1}`,
    /// `f(y) = y - s/(2 pi) sin(2 pi y)`.
    MorseSmale {
        s: f64,
        pre: f64,
        post: f64,
        inverted: bool,
    },
    /// Applied first to last.
    Composed(Arc<[LiftedCircleMap]>),
}

/// A monotone degree-one lift `R -> R` of a circle homeomorphism.
///
/// `eval(y + 1) = eval(y) + 1`, `eval` is strictly increasing, and
/// `inv_eval` is its inverse. `branch_offset` is the integer added on top of
/// the canonical lift of the underlying circle map.
#[derive(Clone, Debug)]
pub struct LiftedCircleMap {
    kind: MapKind,
    branch_offset: i64,
}

impl LiftedCircleMap {
    pub fn identity() -> Self {
        Self::rotation(0.0)
    }

    /// The rigid rotation `y -> y + alpha` (lifted without reduction).
    pub fn rotation(alpha: f64) -> Self {
        LiftedCircleMap { kind: MapKind::Rotation { shift: alpha }, branch_offset: 0 }
    }

    pub fn branch_offset(&self) -> i64 {
        self.branch_offset
    }

    /// True when the map is a rigid rotation (possibly composed).
    pub fn is_rotation(&self) -> bool {
        match &self.kind {
            MapKind::Rotation { .. } => true,
            MapKind::Composed(parts) => parts.iter().all(|g| g.is_rotation()),
            _ => false,
        }
    }

    /// Same circle map, lift shifted by the integer `k`.
    pub fn shifted(mut self, k: i64) -> Self {
        self.branch_offset += k;
        self
    }

    /// `R_t o self`: post-composition with the rotation by `t`.
    pub fn then_rotate(mut self, t: f64) -> Self {
        match &mut self.kind {
            MapKind::Rotation { shift } => *shift += t,
            MapKind::Projective { phase, .. } => *phase += t,
            MapKind::MorseSmale { post, .. } => *post += t,
            MapKind::Composed(_) => return compose(&LiftedCircleMap::rotation(t), &self),
        }
        self
    }

    #[inline]
    pub fn eval(&self, y: f64) -> f64 {
        self.eval_kind(y) + self.branch_offset as f64
    }

    #[inline]
    fn eval_kind(&self, y: f64) -> f64 {
        match &self.kind {
            MapKind::Rotation { shift } => y + shift,
            MapKind::Projective { phase, pre, r, x } => phase + triangular_lift(*r, *x, y + pre),
            MapKind::MorseSmale { s, pre, post, inverted } => {
                let z = y + pre;
                let h = if *inverted { morse_smale_inverse(*s, z) } else { morse_smale_forward(*s, z) };
                post + h
            }
            MapKind::Composed(parts) => parts.iter().fold(y, |acc, g| g.eval(acc)),
        }
    }

    pub fn inv_eval(&self, z: f64) -> f64 {
        let z = z - self.branch_offset as f64;
        match &self.kind {
            MapKind::Rotation { shift } => z - shift,
            MapKind::Projective { phase, pre, r, x } => triangular_lift(1.0 / r, -x, z - phase) - pre,
            MapKind::MorseSmale { s, pre, post, inverted } => {
                let t = z - post;
                let h = if *inverted { morse_smale_forward(*s, t) } else { morse_smale_inverse(*s, t) };
                h - pre
            }
            MapKind::Composed(parts) => parts.iter().rev().fold(z, |acc, g| g.inv_eval(acc)),
        }
    }

    /// Derivative of the lift; strictly positive.
    pub fn deriv(&self, y: f64) -> f64 {
        match &self.kind {
            MapKind::Rotation { .. } => 1.0,
            MapKind::Projective { pre, r, x, .. } => {
                let (s, c) = (PI * (y + pre)).sin_cos();
                let u0 = r * c + x * s;
                let u1 = s / r;
                1.0 / (u0 * u0 + u1 * u1)
            }
            MapKind::MorseSmale { s, pre, inverted, .. } => {
                let z = y + pre;
                if *inverted {
                    let w = morse_smale_inverse(*s, z);
                    1.0 / (1.0 - s * (TAU * w).cos())
                } else {
                    1.0 - s * (TAU * z).cos()
                }
            }
            MapKind::Composed(parts) => {
                let mut acc = y;
                let mut d = 1.0;
                for g in parts.iter() {
                    d *= g.deriv(acc);
                    acc = g.eval(acc);
                }
                d
            }
        }
    }

    /// A lift of the inverse circle map satisfying `inverse.eval(self.eval(y)) = y`.
    pub fn inverse(&self) -> LiftedCircleMap {
        let kind = match &self.kind {
            MapKind::Rotation { shift } => MapKind::Rotation { shift: -shift },
            MapKind::MorseSmale { s, pre, post, inverted } => {
                MapKind::MorseSmale { s: *s, pre: -post, post: -pre, inverted: !inverted }
            }
            MapKind::Projective { phase, pre, r, x } => {
                MapKind::Projective { phase: -pre, pre: -phase, r: 1.0 / r, x: -x }
            }
            MapKind::Composed(parts) => {
                let inv: Vec<LiftedCircleMap> = parts.iter().rev().map(|g| g.inverse()).collect();
                MapKind::Composed(inv.into())
            }
        };
        LiftedCircleMap { kind, branch_offset: -self.branch_offset }
    }
}

/// Lift of the action of `(r, x; 0, 1/r)`, `r > 0`, fixing the integers.
#[inline]
fn triangular_lift(r: f64, x: f64, y: f64) -> f64 {
    let k = y.floor();
    let (s, c) = (PI * (y - k)).sin_cos();
    // atan2(s / r, r c + x s), both arguments scaled by r > 0
    k + s.atan2(r * (r * c + x * s)) / PI
}

/// `f(y) = y - s/(2 pi) sin(2 pi y)`.
#[inline]
pub fn morse_smale_forward(s: f64, y: f64) -> f64 {
    y - s / TAU * (TAU * y).sin()
}

/// Inverse of [`morse_smale_forward`] by safeguarded Newton iteration.
pub fn morse_smale_inverse(s: f64, z: f64) -> f64 {
    let k = z.floor();
    let t = z - k;
    let amp = s / TAU;
    let (mut lo, mut hi) = (t - amp, t + amp);
    let mut y = t;
    for _ in 0..64 {
        let (sn, cs) = (TAU * y).sin_cos();
        let fy = y - amp * sn - t;
        if fy > 0.0 {
            hi = y;
        } else if fy < 0.0 {
            lo = y;
        } else {
            break;
        }
        let step = fy / (1.0 - s * cs);
        let mut next = y - step;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - y).abs() <= 4.0 * f64::EPSILON * (1.0 + y.abs()) {
            y = next;
            break;
        }
        y = next;
    }
    k + y
}

fn projective_kind(m: &Sl2Matrix) -> MapKind {
    // m = Rot(phi) * (r, x; 0, 1/r)
    let r = m.a.hypot(m.c);
    let phi = m.c.atan2(m.a);
    let x = (m.a * m.b + m.c * m.d) / r;
    MapKind::Projective { phase: phi / PI, pre: 0.0, r, x }
}

/// Lift of the projective action of `m` on `RP^1` with `eval(0)` placed in
/// `[floor(anchor), floor(anchor) + 1)`.
pub fn projectivize(m: &Sl2Matrix, anchor: f64) -> Result<LiftedCircleMap> {
    let det = m.det();
    if !det.is_finite() || (det - 1.0).abs() >= DET_TOLERANCE {
        return Err(Error::InvalidMatrix { det });
    }
    Ok(projectivize_unchecked(m, anchor))
}

pub(crate) fn projectivize_unchecked(m: &Sl2Matrix, anchor: f64) -> LiftedCircleMap {
    let kind = projective_kind(m);
    let MapKind::Projective { phase, .. } = kind else { unreachable!() };
    let offset = anchor.floor() - phase.floor();
    LiftedCircleMap { kind, branch_offset: offset as i64 }
}

/// The Morse–Smale map `f(y) = y - s/(2 pi) sin(2 pi y)`: attractor at 0
/// with multiplier `1 - s`, repeller at 1/2 with multiplier `1 + s`.
pub fn morse_smale(s: f64) -> Result<LiftedCircleMap> {
    if !(s > 0.0 && s < 1.0) {
        return param(format!("Morse-Smale strength must lie in (0,1), got {s}"));
    }
    Ok(LiftedCircleMap {
        kind: MapKind::MorseSmale { s, pre: 0.0, post: 0.0, inverted: false },
        branch_offset: 0,
    })
}

/// `g o h`.
pub fn compose(g: &LiftedCircleMap, h: &LiftedCircleMap) -> LiftedCircleMap {
    let mut parts: Vec<LiftedCircleMap> = Vec::new();
    for m in [h, g] {
        match &m.kind {
            MapKind::Composed(inner) if m.branch_offset == 0 => parts.extend(inner.iter().cloned()),
            _ => parts.push(m.clone()),
        }
    }
    LiftedCircleMap { kind: MapKind::Composed(parts.into()), branch_offset: 0 }
}

/// One-parameter fiber-map generators `(E, omega) -> LiftedCircleMap`.
///
/// `omega` is the base symbol: a noise draw, a periodic label or the total
/// potential at a site.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FiberFamily {
    /// `y -> y + E + omega`.
    Rotation,
    /// Projective action of the transfer matrix `(E - omega, -1; 1, 0)`.
    Schrodinger,
    /// `R_{E + omega} o P(diag(e^stretch, e^-stretch))`.
    Moebius { stretch: f64 },
    /// `R_E o f` for `omega < 1.5`, `R_E o f^{-1}` otherwise.
    MorseSmale { s: f64 },
    /// Members applied first to last at the same `(E, omega)`.
    Composed { parts: Vec<FiberFamily> },
}

impl FiberFamily {
    pub fn validate(&self) -> Result<()> {
        match self {
            FiberFamily::MorseSmale { s } => morse_smale(*s).map(|_| ()),
            FiberFamily::Moebius { stretch } if !stretch.is_finite() => {
                param("Moebius stretch must be finite")
            }
            FiberFamily::Composed { parts } => parts.iter().try_for_each(|p| p.validate()),
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn map(&self, e: f64, omega: f64) -> LiftedCircleMap {
        match self {
            FiberFamily::Rotation => LiftedCircleMap::rotation(e + omega),
            FiberFamily::Schrodinger => {
                projectivize_unchecked(&transfer(e, omega), 0.0)
            }
            FiberFamily::Moebius { stretch } => {
                let m = Sl2Matrix::new_unchecked(stretch.exp(), 0.0, 0.0, (-stretch).exp());
                projectivize_unchecked(&m, 0.0).then_rotate(e + omega)
            }
            FiberFamily::MorseSmale { s } => LiftedCircleMap {
                kind: MapKind::MorseSmale { s: *s, pre: 0.0, post: e, inverted: omega >= 1.5 },
                branch_offset: 0,
            },
            FiberFamily::Composed { parts } => {
                let maps: Vec<LiftedCircleMap> = parts.iter().map(|p| p.map(e, omega)).collect();
                LiftedCircleMap { kind: MapKind::Composed(maps.into()), branch_offset: 0 }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FiberFamily::Rotation => "rotation",
            FiberFamily::Schrodinger => "schrodinger",
            FiberFamily::Moebius { .. } => "moebius",
            FiberFamily::MorseSmale { .. } => "morse_smale",
            FiberFamily::Composed { .. } => "composed",
        }
    }
}

#[inline]
pub(crate) fn transfer(e: f64, v: f64) -> Sl2Matrix {
    Sl2Matrix::new_unchecked(e - v, -1.0, 1.0, 0.0)
}

/// A fiber family frozen at one base symbol: the parameter hook `E -> map`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapFamily {
    pub fiber: FiberFamily,
    pub symbol: f64,
}

impl MapFamily {
    pub fn at(&self, e: f64) -> LiftedCircleMap {
        self.fiber.map(e, self.symbol)
    }
}

/// Maximum recursion depth of the continuation bisection.
pub const CONTINUATION_MAX_DEPTH: u32 = 40;
/// Largest accepted jump of `eval_E(0)` between consecutive continuation
/// points after nearest-integer branch matching.
pub const CONTINUATION_STEP: f64 = 0.25;

/// Integer branch offsets making `E -> eval_E(0)` continuous along a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftCalibration {
    pub grid: Vec<f64>,
    pub offsets: Vec<i64>,
    /// Calibrated `eval_E(0)` at each grid point.
    pub anchors: Vec<f64>,
}

impl LiftCalibration {
    /// Integer to add to a map at parameter `e` whose uncalibrated lift has
    /// `eval(0) = raw_at_zero`, matching the interpolated calibrated anchor.
    pub fn offset_for(&self, e: f64, raw_at_zero: f64) -> i64 {
        let target = self.anchor_at(e);
        (target - raw_at_zero).round() as i64
    }

    fn anchor_at(&self, e: f64) -> f64 {
        let g = &self.grid;
        if g.len() == 1 || e <= g[0] {
            return self.anchors[0];
        }
        let last = g.len() - 1;
        if e >= g[last] {
            return self.anchors[last];
        }
        let i = g.partition_point(|&x| x <= e) - 1;
        let t = (e - g[i]) / (g[i + 1] - g[i]);
        self.anchors[i] + t * (self.anchors[i + 1] - self.anchors[i])
    }
}

/// Assigns branch offsets by continuation in `E` at the probe point `y = 0`,
/// bisecting any grid step whose matched jump exceeds [`CONTINUATION_STEP`].
pub fn calibrate_lifts<F>(hook: F, e_grid: &[f64], base_anchor: f64) -> Result<LiftCalibration>
where
    F: Fn(f64) -> LiftedCircleMap,
{
    if e_grid.is_empty() {
        return param("calibration grid is empty");
    }
    if e_grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return param("calibration grid must be sorted ascending");
    }
    let raw0 = hook(e_grid[0]).eval(0.0);
    let k0 = (base_anchor.floor() - raw0.floor()) as i64;
    let mut offsets = vec![k0];
    let mut anchors = vec![raw0 + k0 as f64];
    for w in e_grid.windows(2) {
        let prev = *anchors.last().expect("non-empty");
        let value = continue_branch(&hook, w[0], prev, w[1], 0)?;
        let raw = hook(w[1]).eval(0.0);
        offsets.push((value - raw).round() as i64);
        anchors.push(value);
    }
    Ok(LiftCalibration { grid: e_grid.to_vec(), offsets, anchors })
}

fn continue_branch<F>(hook: &F, ea: f64, va: f64, eb: f64, depth: u32) -> Result<f64>
where
    F: Fn(f64) -> LiftedCircleMap,
{
    let raw = hook(eb).eval(0.0);
    let matched = raw + (va - raw).round();
    if (matched - va).abs() < CONTINUATION_STEP {
        return Ok(matched);
    }
    if depth >= CONTINUATION_MAX_DEPTH {
        return Err(Error::ContinuityFailure { lo: ea, hi: eb });
    }
    let mid = 0.5 * (ea + eb);
    let vm = continue_branch(hook, ea, va, mid, depth + 1)?;
    continue_branch(hook, mid, vm, eb, depth + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fd(g: &LiftedCircleMap, y: f64) -> f64 {
        let h = 1e-6;
        (g.eval(y + h) - g.eval(y - h)) / (2.0 * h)
    }

    fn sample_maps() -> Vec<LiftedCircleMap> {
        let m = Sl2Matrix::new(2.0, 0.3, -0.7, 0.395).unwrap();
        vec![
            LiftedCircleMap::rotation(0.3),
            morse_smale(0.5).unwrap(),
            morse_smale(0.9).unwrap().then_rotate(0.1),
            morse_smale(0.5).unwrap().inverse(),
            projectivize(&m, 0.0).unwrap(),
            projectivize(&Sl2Matrix::rotation(2.5), 0.0).unwrap(),
            FiberFamily::Schrodinger.map(0.7, 0.2),
            FiberFamily::Moebius { stretch: 0.8 }.map(0.1, 0.3),
            compose(&morse_smale(0.5).unwrap(), &projectivize(&m, 0.0).unwrap()),
        ]
    }

    #[test]
    fn identity_matrix_acts_trivially() {
        let g = projectivize(&Sl2Matrix::IDENTITY, 0.0).unwrap();
        for &y in &[-1.3, 0.0, 0.25, 0.7, 3.1] {
            assert!((g.eval(y) - y).abs() < 1e-12);
        }
    }

    #[test]
    fn quarter_turn_is_half_turn_on_projective_line() {
        let m = Sl2Matrix::new(0.0, -1.0, 1.0, 0.0).unwrap();
        let g = projectivize(&m, 0.0).unwrap();
        for &y in &[-0.4, 0.0, 0.1, 0.5, 0.99] {
            assert!((g.eval(y) - (y + 0.5)).abs() < 1e-12, "y={y}");
        }
    }

    #[test]
    fn diagonal_matrix_fixed_points_and_multiplier() {
        let m = Sl2Matrix::new(2.0, 0.0, 0.0, 0.5).unwrap();
        let g = projectivize(&m, 0.0).unwrap();
        assert!(g.eval(0.0).abs() < 1e-15);
        assert!((g.eval(0.5) - 0.5).abs() < 1e-15);
        // Angle action of diag(l, 1/l): theta' = atan(tan(theta) / l^2), so
        // d theta'/d theta at 0 is 1/l^2.
        assert!((g.deriv(0.0) - 0.25).abs() < 1e-12);
        assert!((fd(&g, 0.0) - 0.25).abs() < 1e-6);
        assert!((g.deriv(0.5) - 4.0).abs() < 1e-12);
        // exactly two fixed points: sign changes of eval(y) - y on a fine grid
        let n = 10_000;
        let mut changes = 0;
        let mut prev = g.eval(0.5 / n as f64) - 0.5 / n as f64;
        for i in 1..n {
            let y = (i as f64 + 0.5) / n as f64;
            let cur = g.eval(y) - y;
            if cur.signum() != prev.signum() {
                changes += 1;
            }
            prev = cur;
        }
        // one change at 1/2 inside the grid, the other at 0 == 1 on the wrap
        assert_eq!(changes, 1);
        assert!(prev.signum() != (g.eval(0.5 / n as f64) - 0.5 / n as f64).signum());
    }

    #[test]
    fn non_unit_determinant_is_rejected() {
        assert!(matches!(Sl2Matrix::new(2.0, 0.0, 0.0, 1.0), Err(Error::InvalidMatrix { .. })));
        let bad = Sl2Matrix { a: 1.0, b: 1.0, c: 1.0, d: 1.0 };
        assert!(matches!(projectivize(&bad, 0.0), Err(Error::InvalidMatrix { .. })));
    }

    #[test]
    fn anchor_selects_branch() {
        let m = Sl2Matrix::rotation(-0.6 * PI); // phase -0.6
        let g = projectivize(&m, 0.0).unwrap();
        assert!((0.0..1.0).contains(&g.eval(0.0)));
        assert!((g.eval(0.0) - 0.4).abs() < 1e-12);
        let g2 = projectivize(&m, 2.3).unwrap();
        assert!((g2.eval(0.0) - 2.4).abs() < 1e-12);
    }

    #[test]
    fn morse_smale_examples() {
        let f = morse_smale(0.5).unwrap();
        assert_eq!(f.eval(0.0), 0.0);
        assert!((f.eval(0.5) - 0.5).abs() < 1e-16);
        assert!((f.deriv(0.0) - 0.5).abs() < 1e-15);
        assert!((f.deriv(0.5) - 1.5).abs() < 1e-15);
        assert!((fd(&f, 0.0) - 0.5).abs() < 1e-8);
        assert!((fd(&f, 0.5) - 1.5).abs() < 1e-8);
        assert!(morse_smale(0.0).is_err());
        assert!(morse_smale(1.0).is_err());
        assert!(morse_smale(-0.2).is_err());
    }

    #[test]
    fn compose_examples() {
        let a = LiftedCircleMap::rotation(0.2);
        let b = LiftedCircleMap::rotation(0.35);
        let ab = compose(&a, &b);
        for &y in &[-2.0, 0.0, 0.4, 1.7] {
            assert!((ab.eval(y) - (y + 0.55)).abs() < 1e-12);
        }
        let f = morse_smale(0.5).unwrap();
        let g = compose(&f, &LiftedCircleMap::rotation(0.25));
        let expected = 0.25 - 0.5 / TAU;
        assert!((g.eval(0.0) - expected).abs() < 1e-15);
        for g in sample_maps() {
            let id = compose(&g, &g.inverse());
            for &y in &[-0.7, 0.0, 0.33, 0.5, 2.9] {
                assert!((id.eval(y) - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn calibration_of_rotations_is_trivial() {
        let grid: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        let cal = calibrate_lifts(LiftedCircleMap::rotation, &grid, 0.0).unwrap();
        assert!(cal.offsets.iter().all(|&k| k == 0));
        for (e, v) in grid.iter().zip(&cal.anchors) {
            assert!((e - v).abs() < 1e-15);
        }
    }

    #[test]
    fn calibration_single_point_uses_anchor() {
        let cal = calibrate_lifts(|e| LiftedCircleMap::rotation(e + 3.0), &[0.4], 0.0).unwrap();
        assert_eq!(cal.offsets, vec![-3]);
        assert!((cal.anchors[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn calibration_unwraps_reduced_projective_phase() {
        // Rotation matrices by angle pi*E: canonical phase wraps at E = 1.
        let grid: Vec<f64> = (0..=30).map(|i| i as f64 * 0.1).collect();
        let hook = |e: f64| projectivize(&Sl2Matrix::rotation(PI * e), 0.0).unwrap();
        let cal = calibrate_lifts(hook, &grid, 0.0).unwrap();
        for (e, v) in grid.iter().zip(&cal.anchors) {
            assert!((e - v).abs() < 1e-9, "E={e} anchor={v}");
        }
    }

    #[test]
    fn calibration_coarse_grid_bisects() {
        // eval_E(0) = 4E/3 moves by 0.4 per grid step: needs bisection.
        let grid = [0.0, 0.3, 0.6, 0.9, 1.2];
        let hook = |e: f64| {
            let t = 4.0 * e / 3.0;
            LiftedCircleMap::rotation(t - t.floor())
        };
        let cal = calibrate_lifts(hook, &grid, 0.0).unwrap();
        for (e, v) in grid.iter().zip(&cal.anchors) {
            assert!((4.0 * e / 3.0 - v).abs() < 1e-12);
        }
    }

    #[test]
    fn calibration_detects_discontinuity() {
        let hook = |e: f64| LiftedCircleMap::rotation(if e < 0.55 { e } else { e + 0.5 });
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let err = calibrate_lifts(hook, &grid, 0.0).unwrap_err();
        match err {
            Error::ContinuityFailure { lo, hi } => assert!(lo <= 0.55 && hi >= 0.55 && hi - lo < 1e-9),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schrodinger_projective_derivative_is_unit_speed_formula() {
        for &(e, v) in &[(0.0, 0.0), (1.3, 0.4), (-2.5, 0.9), (3.2, -0.1)] {
            let a = transfer(e, v);
            let g = FiberFamily::Schrodinger.map(e, v);
            for i in 0..20 {
                let y = i as f64 / 20.0 + 0.013;
                let th = PI * y;
                let u = a.apply([th.cos(), th.sin()]);
                let expected = 1.0 / (u[0] * u[0] + u[1] * u[1]);
                assert!((g.deriv(y) - expected).abs() < 1e-12 * expected.max(1.0));
                assert!((fd(&g, y) - expected).abs() < 1e-6 * expected.max(1.0));
            }
        }
    }

    proptest! {
        #[test]
        fn lifts_are_degree_one_and_monotone(y in -5.0f64..5.0, dy in 1e-6f64..0.9) {
            for g in sample_maps() {
                let d = g.eval(y + 1.0) - g.eval(y) - 1.0;
                prop_assert!(d.abs() < 1e-12, "degree-one defect {}", d);
                prop_assert!(g.eval(y) < g.eval(y + dy));
                let z = g.eval(y);
                prop_assert!((g.eval(g.inv_eval(z)) - z).abs() < 1e-9);
                prop_assert!((g.inv_eval(z) - y).abs() < 1e-9);
            }
        }

        #[test]
        fn derivative_matches_finite_differences(y in -2.0f64..2.0) {
            for g in sample_maps() {
                let exact = g.deriv(y);
                prop_assert!(exact > 0.0);
                prop_assert!((fd(&g, y) - exact).abs() <= 1e-5 * exact);
            }
        }

        #[test]
        fn projectivize_respects_products(
            a1 in -3.0f64..3.0, b1 in -3.0f64..3.0, c1 in 0.2f64..3.0,
            a2 in -3.0f64..3.0, b2 in -3.0f64..3.0, c2 in -3.0f64..-0.2,
        ) {
            prop_assume!(a1.abs() > 0.1 && a2.abs() > 0.1);
            let m1 = Sl2Matrix::new(a1, b1, c1, (1.0 + b1 * c1) / a1).unwrap();
            let m2 = Sl2Matrix::new(a2, b2, c2, (1.0 + b2 * c2) / a2).unwrap();
            let prod = projectivize(&m1.mul(&m2), 0.0).unwrap();
            let comp = compose(&projectivize(&m1, 0.0).unwrap(), &projectivize(&m2, 0.0).unwrap());
            let k0 = comp.eval(0.0) - prod.eval(0.0);
            prop_assert!((k0 - k0.round()).abs() < 1e-9);
            for i in 0..100 {
                let y = -1.0 + 0.0217 * i as f64;
                prop_assert!((comp.eval(y) - prod.eval(y) - k0).abs() < 1e-9);
            }
        }
    }
}
