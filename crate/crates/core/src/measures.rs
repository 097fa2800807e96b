//! Atomic probability measures on the circle and on the line, the oriented
//! interval functional `Phi` and regularity diagnostics.
//!
//! Intervals are half-open `[a, b)`: an atom at the left endpoint is counted,
//! one at the right endpoint is not. `Phi_nu(a, b)` is evaluated as
//! `F~(b) - F~(a)` with the lifted CDF `F~(t) = floor(t) + nu([0, frac t))`.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::circle_maps::LiftedCircleMap;
use crate::error::{param, Error, Result};

/// Weight-sum tolerance; measures within it are stored without renormalising.
pub const MASS_TOLERANCE: f64 = 1e-12;

#[inline]
pub(crate) fn frac(t: f64) -> f64 {
    let f = t - t.floor();
    // t slightly below an integer can round up to exactly 1.0
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

/// Weighted atoms on `[0, 1)` with a precomputed CDF.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalCircleMeasure {
    positions: Vec<f64>,
    weights: Vec<f64>,
    /// `cdf[i] = nu([0, positions[i]))`, `cdf[n] = 1`.
    cdf: Vec<f64>,
}

impl EmpiricalCircleMeasure {
    /// Builds a measure from `(position, weight)` atoms. Positions are
    /// reduced mod 1, coincident atoms are merged.
    pub fn from_atoms(atoms: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut atoms: Vec<(f64, f64)> = atoms.into_iter().collect();
        if atoms.is_empty() {
            return param("measure needs at least one atom");
        }
        for &(p, w) in &atoms {
            if !p.is_finite() || !w.is_finite() || w <= 0.0 {
                return param(format!("invalid atom ({p}, {w})"));
            }
        }
        for a in atoms.iter_mut() {
            a.0 = frac(a.0);
        }
        atoms.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut positions = Vec::with_capacity(atoms.len());
        let mut weights: Vec<f64> = Vec::with_capacity(atoms.len());
        for (p, w) in atoms {
            if positions.last() == Some(&p) {
                *weights.last_mut().expect("paired") += w;
            } else {
                positions.push(p);
                weights.push(w);
            }
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            for w in weights.iter_mut() {
                *w /= total;
            }
        }
        Ok(Self::assemble(positions, weights))
    }

    /// Equal weights on the given points.
    pub fn from_points(points: &[f64]) -> Result<Self> {
        let w = 1.0 / points.len().max(1) as f64;
        Self::from_atoms(points.iter().map(|&p| (p, w)))
    }

    pub fn dirac(position: f64) -> Self {
        Self::assemble(vec![frac(position)], vec![1.0])
    }

    /// `n` equal atoms at `i/n`, approximating Lebesgue measure.
    pub fn uniform_grid(n: usize) -> Self {
        let n = n.max(1);
        let w = 1.0 / n as f64;
        Self::assemble((0..n).map(|i| i as f64 / n as f64).collect(), vec![w; n])
    }

    fn assemble(positions: Vec<f64>, weights: Vec<f64>) -> Self {
        let mut cdf = Vec::with_capacity(weights.len() + 1);
        let mut acc = 0.0;
        cdf.push(0.0);
        for &w in &weights {
            acc += w;
            cdf.push(acc);
        }
        *cdf.last_mut().expect("non-empty") = 1.0;
        EmpiricalCircleMeasure { positions, weights, cdf }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.positions.iter().copied().zip(self.weights.iter().copied())
    }

    /// `F(t) = nu([0, t))` for `t` in `[0, 1]`.
    #[inline]
    pub fn cdf(&self, t: f64) -> f64 {
        self.cdf[self.positions.partition_point(|&p| p < t)]
    }

    /// `nu([0, t])`.
    #[inline]
    fn cdf_closed(&self, t: f64) -> f64 {
        self.cdf[self.positions.partition_point(|&p| p <= t)]
    }

    /// Lifted CDF `F~(t) = floor(t) + F(t - floor(t))`.
    #[inline]
    pub fn lifted_cdf(&self, t: f64) -> f64 {
        let k = t.floor();
        k + self.cdf(t - k)
    }

    /// `Phi_nu(a, b)`: the lifted measure of the oriented half-interval from
    /// `a` to `b`.
    #[inline]
    pub fn phi_points(&self, a: f64, b: f64) -> f64 {
        if a == b {
            return 0.0;
        }
        self.lifted_cdf(b) - self.lifted_cdf(a)
    }

    /// Mass of the circle arc `[start, start + len)`, `0 <= len <= 1`.
    pub fn arc_mass(&self, start: f64, len: f64) -> f64 {
        self.phi_points(start, start + len)
    }

    /// Index of the atom carrying the quantile `u` in `[0, 1)`.
    #[inline]
    pub fn quantile_index(&self, u: f64) -> usize {
        let i = self.cdf[1..].partition_point(|&c| c <= u);
        i.min(self.positions.len() - 1)
    }

    #[inline]
    pub fn quantile(&self, u: f64) -> f64 {
        self.positions[self.quantile_index(u)]
    }

    /// Image measure under the circle map of `g`.
    pub fn push_forward(&self, g: &LiftedCircleMap) -> EmpiricalCircleMeasure {
        Self::from_atoms(self.atoms().map(|(p, w)| (g.eval(p), w))).expect("valid atoms map to valid atoms")
    }

    /// Largest mass of any closed-open arc of length `r`, by a two-pointer
    /// sweep over the atoms with wrap-around.
    pub fn max_arc_mass(&self, r: f64) -> f64 {
        if r >= 1.0 {
            return 1.0;
        }
        let n = self.positions.len();
        let pos = |i: usize| if i < n { self.positions[i] } else { self.positions[i - n] + 1.0 };
        let cum = |i: usize| if i <= n { self.cdf[i] } else { 1.0 + self.cdf[i - n] };
        let mut best = 0.0f64;
        let mut j = 0;
        for i in 0..n {
            if j < i {
                j = i;
            }
            let end = self.positions[i] + r;
            while j < i + n && pos(j) < end {
                j += 1;
            }
            best = best.max(cum(j) - cum(i));
        }
        best.min(1.0)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "position,weight")?;
        for (p, w) in self.atoms() {
            writeln!(out, "{p:.16e},{w:.16e}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut atoms = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with("position")) {
                continue;
            }
            let (p, w) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("line {}: expected `position,weight`", lineno + 1)))?;
            let parse = |s: &str| {
                s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
            };
            atoms.push((parse(p)?, parse(w)?));
        }
        Self::from_atoms(atoms)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

/// A compactly supported atomic probability measure on the real line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureOnLine {
    atoms: Vec<f64>,
    weights: Vec<f64>,
    /// `cum[i]` = total weight of `atoms[..i]`.
    cum: Vec<f64>,
}

impl MeasureOnLine {
    pub fn from_atoms(atoms: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut atoms: Vec<(f64, f64)> = atoms.into_iter().collect();
        if atoms.is_empty() {
            return param("measure needs at least one atom");
        }
        if atoms.iter().any(|&(x, w)| !x.is_finite() || !w.is_finite() || w <= 0.0) {
            return param("atoms must be finite with positive weight");
        }
        atoms.sort_by(|x, y| x.0.total_cmp(&y.0));
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        let scale = if (total - 1.0).abs() > MASS_TOLERANCE { 1.0 / total } else { 1.0 };
        let (xs, ws): (Vec<f64>, Vec<f64>) = atoms.into_iter().map(|(x, w)| (x, w * scale)).unzip();
        let mut cum = Vec::with_capacity(ws.len() + 1);
        let mut acc = 0.0;
        cum.push(0.0);
        for &w in &ws {
            acc += w;
            cum.push(acc);
        }
        *cum.last_mut().expect("non-empty") = 1.0;
        Ok(MeasureOnLine { atoms: xs, weights: ws, cum })
    }

    pub fn dirac(x: f64) -> Self {
        MeasureOnLine { atoms: vec![x], weights: vec![1.0], cum: vec![0.0, 1.0] }
    }

    /// The lift of a circle measure supported on `[0, 1)`.
    pub fn canonical_lift(nu: &EmpiricalCircleMeasure) -> Self {
        Self::from_atoms(nu.atoms()).expect("circle measure atoms are valid")
    }

    /// Image under a lifted map.
    pub fn push_forward(&self, g: &LiftedCircleMap) -> Self {
        Self::from_atoms(self.atoms().map(|(x, w)| (g.eval(x), w))).expect("valid atoms")
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.atoms.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn support(&self) -> (f64, f64) {
        (self.atoms[0], *self.atoms.last().expect("non-empty"))
    }

    /// `m((-inf, y])`.
    #[inline]
    pub fn cdf_closed(&self, y: f64) -> f64 {
        self.cum[self.atoms.partition_point(|&x| x <= y)]
    }

    /// Projection to the circle.
    pub fn project(&self) -> EmpiricalCircleMeasure {
        EmpiricalCircleMeasure::from_atoms(self.atoms()).expect("valid atoms")
    }
}

/// `Phi_nu(m1, m2) = int (F_{m1}(y) - F_{m2}(y)) d nu~(y)`, summed over the
/// lifted atoms of `nu` inside the joint support hull of `m1` and `m2`.
pub fn phi_measures(nu: &EmpiricalCircleMeasure, m1: &MeasureOnLine, m2: &MeasureOnLine) -> f64 {
    let (l1, h1) = m1.support();
    let (l2, h2) = m2.support();
    let lo = l1.min(l2);
    let hi = h1.max(h2);
    // Outside [lo, hi) the integrand vanishes: both CDFs are 0 below lo and 1 from hi on.
    let mut total = 0.0;
    let mut k = lo.floor();
    while k <= hi {
        let start = nu.positions.partition_point(|&p| p + k < lo);
        for (&p, &w) in nu.positions[start..].iter().zip(&nu.weights[start..]) {
            let z = p + k;
            if z >= hi {
                break;
            }
            let d = m1.cdf_closed(z) - m2.cdf_closed(z);
            if d != 0.0 {
                total += w * d;
            }
        }
        k += 1.0;
    }
    total
}

/// Maximal arc masses across scales with a log-log power-law fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderProfile {
    /// Decreasing.
    pub scales: Vec<f64>,
    pub max_mass: Vec<f64>,
    pub fitted_alpha: f64,
    pub fit_r2: f64,
}

pub fn holder_profile(nu: &EmpiricalCircleMeasure, scales: &[f64]) -> Result<HolderProfile> {
    if scales.len() < 3 {
        return param(format!("holder profile needs at least 3 scales, got {}", scales.len()));
    }
    if scales.iter().any(|&r| !(r > 0.0 && r < 1.0)) {
        return param("scales must lie in (0, 1)");
    }
    let mut scales = scales.to_vec();
    scales.sort_by(|a, b| b.total_cmp(a));
    let max_mass: Vec<f64> = scales.iter().map(|&r| nu.max_arc_mass(r)).collect();
    let xs: Vec<f64> = scales.iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = max_mass.iter().map(|m| m.ln()).collect();
    let fit = crate::stats::linear_fit(&xs, &ys);
    Ok(HolderProfile { scales, max_mass, fitted_alpha: fit.slope, fit_r2: fit.r2 })
}

/// Rotation-invariant Kolmogorov distance on the circle: half the range of
/// `F1 - F2` over all cut points, i.e. `min_c sup_t |F1(t) - F2(t) - c|`.
pub fn kolmogorov_distance(nu1: &EmpiricalCircleMeasure, nu2: &EmpiricalCircleMeasure) -> f64 {
    let mut lo = 0.0f64;
    let mut hi = 0.0f64;
    let mut visit = |t: f64| {
        for d in [nu1.cdf(t) - nu2.cdf(t), nu1.cdf_closed(t) - nu2.cdf_closed(t)] {
            lo = lo.min(d);
            hi = hi.max(d);
        }
    };
    for &t in nu1.positions.iter().chain(&nu2.positions) {
        visit(t);
    }
    0.5 * (hi - lo)
}

/// [`kolmogorov_distance`] against Lebesgue measure.
pub fn kolmogorov_to_uniform(nu: &EmpiricalCircleMeasure) -> f64 {
    let mut lo = 0.0f64;
    let mut hi = 0.0f64;
    for (i, &p) in nu.positions.iter().enumerate() {
        for d in [nu.cdf[i] - p, nu.cdf[i + 1] - p] {
            lo = lo.min(d);
            hi = hi.max(d);
        }
    }
    0.5 * (hi - lo)
}
