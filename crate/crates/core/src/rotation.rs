//! Cocycle iteration, fibered rotation numbers, stationary and invariant
//! fiber measures, the translation value and increment formulas.
//!
//! All rotation numbers are reported in turns of the fiber circle, scaled by
//! [`CocycleFamily::rho_scale`]: projective (Schrodinger) families act on
//! `RP^1`, which the vector angle covers twice, so their numbers are halved.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circle_maps::{calibrate_lifts, compose, FiberFamily, LiftCalibration, LiftedCircleMap};
use crate::drivers::{Base, DrawStream, Law, PeriodicBase};
use crate::error::{param, Error, Result};
use crate::measures::{
    frac, kolmogorov_distance, phi_measures, EmpiricalCircleMeasure, MeasureOnLine,
};
use crate::stats::{mean_stderr, pairwise_sum, MIN_BATCHES};

/// Grid size used to calibrate lifts over the parameter window.
pub const CALIBRATION_GRID: usize = 65;
/// Self-consistency tolerance for stationary measure estimates.
pub const STATIONARY_TOLERANCE: f64 = 0.02;
/// Distance below which a return-map orbit is considered closed.
pub const CYCLE_TOLERANCE: f64 = 1e-10;
/// Longest cycle searched for by [`invariant_field_periodic`].
pub const MAX_CYCLE: usize = 1000;
/// Tolerance of [`lift_independence_check`].
pub const LIFT_CHECK_TOLERANCE: f64 = 1e-12;

// Stream ids reserved for Monte Carlo integration; replica streams count up
// from the driver's own stream id and stay far below these.
const MC_STREAM_OMEGA: u64 = 1 << 40;
const MC_STREAM_Y: u64 = (1 << 40) + 1;
const MC_STREAM_Z: u64 = (1 << 40) + 2;
const MC_BATCHES: usize = 32;
const MIXTURE_NODES: usize = 32;

/// Skew-product family `(E, base symbol) -> lifted fiber map` with lifts
/// calibrated continuously in `E` over `e_window`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CocycleFamily {
    pub base: Base,
    pub fiber: FiberFamily,
    pub e_window: (f64, f64),
    calibration: LiftCalibration,
    reference_symbol: f64,
    global_offset: i64,
    site_offsets: Vec<(f64, i64)>,
}

impl CocycleFamily {
    pub fn new(base: Base, fiber: FiberFamily, e_window: (f64, f64)) -> Result<Self> {
        fiber.validate()?;
        let (lo, hi) = e_window;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return param(format!("parameter window [{lo}, {hi}] is not a compact interval"));
        }
        let reference_symbol = 0.5 * (base.symbol_min() + base.symbol_max());
        let grid: Vec<f64> = if lo == hi {
            vec![lo]
        } else {
            (0..CALIBRATION_GRID)
                .map(|i| lo + (hi - lo) * i as f64 / (CALIBRATION_GRID - 1) as f64)
                .collect()
        };
        let hook = |e: f64| fiber.map(e, reference_symbol);
        let calibration = calibrate_lifts(hook, &grid, hook(lo).eval(0.0))?;
        Ok(CocycleFamily {
            base,
            fiber,
            e_window,
            calibration,
            reference_symbol,
            global_offset: 0,
            site_offsets: Vec::new(),
        })
    }

    pub fn calibration(&self) -> &LiftCalibration {
        &self.calibration
    }

    /// Integer added to every lift on top of the continuation.
    pub fn global_offset(&self) -> i64 {
        self.global_offset
    }

    pub fn with_global_offset(mut self, k: i64) -> Self {
        self.global_offset = k;
        self
    }

    /// Shifts the lift over every site whose symbol equals `symbol` by `k`.
    pub fn with_lift_offsets(mut self, offsets: &[(f64, i64)]) -> Self {
        self.site_offsets = offsets.to_vec();
        self
    }

    /// Factor converting lift displacement to turns.
    pub fn rho_scale(&self) -> f64 {
        match self.fiber {
            FiberFamily::Schrodinger => 0.5,
            _ => 1.0,
        }
    }

    /// The calibrated fiber at parameter `e`.
    pub fn at(&self, e: f64) -> Fiber<'_> {
        let raw = self.fiber.map(e, self.reference_symbol).eval(0.0);
        let shift = self.global_offset + self.calibration.offset_for(e, raw);
        Fiber { family: self, e, shift }
    }

    fn site_offset(&self, omega: f64) -> i64 {
        self.site_offsets.iter().find(|s| s.0 == omega).map_or(0, |s| s.1)
    }

    fn iid_law(&self) -> Result<&Law> {
        match &self.base {
            Base::Iid(d) => Ok(&d.law),
            _ => Err(Error::Structural("operation requires an iid base".into())),
        }
    }
}

/// A [`CocycleFamily`] frozen at one parameter value.
#[derive(Clone, Copy, Debug)]
pub struct Fiber<'a> {
    family: &'a CocycleFamily,
    e: f64,
    shift: i64,
}

impl Fiber<'_> {
    pub fn e(&self) -> f64 {
        self.e
    }

    #[inline]
    pub fn map(&self, omega: f64) -> LiftedCircleMap {
        let k = self.shift + self.family.site_offset(omega);
        self.family.fiber.map(self.e, omega).shifted(k)
    }
}

/// Value with a batch-means standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    /// Iterations per replica or Monte Carlo sample count.
    pub n: u64,
    /// Replicas or batches behind `stderr`.
    pub replicas: usize,
}

pub type RotationEstimate = Estimate;

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, stderr: 0.0, n: 0, replicas: 0 }
    }

    pub fn record(&self, seed: u64, params: serde_json::Value) -> EstimateRecord {
        EstimateRecord { value: self.value, stderr: self.stderr, n: self.n, seed, params }
    }

    /// `self - other` with independent errors.
    pub fn minus(&self, other: &Estimate) -> Estimate {
        Estimate {
            value: self.value - other.value,
            stderr: self.stderr.hypot(other.stderr),
            n: self.n.min(other.n),
            replicas: self.replicas.min(other.replicas),
        }
    }
}

/// Machine-readable estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub value: f64,
    pub stderr: f64,
    pub n: u64,
    pub seed: u64,
    pub params: serde_json::Value,
}

/// Advances the reduced state `y in [0, 1)` with integer part in `acc`.
#[inline]
fn step(g: &LiftedCircleMap, y: &mut f64, acc: &mut f64, t: u64) -> Result<()> {
    let z = g.eval(*y);
    if !z.is_finite() {
        return Err(Error::NumericOverflow { step: t });
    }
    let k = z.floor();
    *acc += k;
    *y = z - k;
    if *y >= 1.0 {
        *y -= 1.0;
        *acc += 1.0;
    }
    Ok(())
}

/// `S_n(y) = f_{E,T^{n-1}x} o ... o f_{E,x}(y~) - y~` with `y~ = frac(y)`,
/// the base started at time `start`.
pub fn iterate_shift(family: &CocycleFamily, e: f64, start: i64, y: f64, n: u64, seed: u64) -> Result<f64> {
    if n < 1 {
        return param("iterate_shift needs n >= 1");
    }
    if start < 0 && matches!(family.base, Base::Iid(_)) {
        return param("iid bases start at a non-negative time");
    }
    let fiber = family.at(e);
    let mut symbols = family.base.reseeded(seed).forward(0, 0, start);
    let y0 = frac(y);
    let (mut yr, mut acc) = (y0, 0.0);
    for t in 0..n {
        step(&fiber.map(symbols.next_symbol()), &mut yr, &mut acc, t)?;
    }
    Ok(acc + (yr - y0))
}

/// Birkhoff estimate of the fibered rotation number at `e`.
///
/// Each replica runs `burn_in + n` steps from `y = 0` on its own stream
/// (rotation and periodic bases are advanced by `burn_in + n` per replica);
/// the value is the mean of `S_n / n`. When fewer than 16 replicas are
/// requested each orbit is cut into equal batches for the error estimate.
pub fn birkhoff_rho(
    family: &CocycleFamily,
    e: f64,
    n: u64,
    burn_in: u64,
    replicas: usize,
    seed: u64,
) -> Result<RotationEstimate> {
    if n < 1 || replicas < 1 {
        return param("birkhoff_rho needs n >= 1 and at least one replica");
    }
    if n < 10 * burn_in {
        return param(format!("birkhoff_rho needs n >= 10 * burn_in (n = {n}, burn_in = {burn_in})"));
    }
    let per = MIN_BATCHES.div_ceil(replicas).min(n as usize) as u64;
    let base = family.base.reseeded(seed);
    let fiber = family.at(e);
    let stride = match base {
        Base::Periodic(_) => 1,
        _ => (n + burn_in) as i64,
    };
    let runs: Vec<Result<Vec<f64>>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut symbols = base.forward(r, stride, 0);
            let (mut y, mut acc) = (0.0, 0.0);
            for t in 0..burn_in {
                step(&fiber.map(symbols.next_symbol()), &mut y, &mut acc, t)?;
            }
            let mut sums = Vec::with_capacity(per as usize);
            let mut done = 0;
            for b in 0..per {
                let end = n * (b + 1) / per;
                let (start_y, start_acc) = (y, acc);
                for t in done..end {
                    step(&fiber.map(symbols.next_symbol()), &mut y, &mut acc, burn_in + t)?;
                }
                done = end;
                sums.push((acc - start_acc) + (y - start_y));
            }
            Ok(sums)
        })
        .collect();
    let scale = family.rho_scale();
    let mut values = Vec::with_capacity(replicas);
    let mut batch_means = Vec::with_capacity(replicas * per as usize);
    for run in runs {
        let sums = run?;
        values.push(scale * pairwise_sum(&sums) / n as f64);
        let mut prev = 0;
        for (b, s) in sums.iter().enumerate() {
            let end = n * (b as u64 + 1) / per;
            batch_means.push(scale * s / (end - prev) as f64);
            prev = end;
        }
    }
    let value = pairwise_sum(&values) / replicas as f64;
    let stderr = if replicas >= MIN_BATCHES {
        mean_stderr(&values).stderr
    } else {
        mean_stderr(&batch_means).stderr
    };
    Ok(Estimate { value, stderr, n, replicas })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

/// Stationary measures for the forward maps and for their inverses.
#[derive(Clone, Debug)]
pub struct StationaryPair {
    pub forward: StationaryEstimate,
    pub backward: StationaryEstimate,
}

#[derive(Clone, Debug)]
pub struct StationaryEstimate {
    pub measure: EmpiricalCircleMeasure,
    /// Kolmogorov distance between the measure and its averaged image.
    pub residual: f64,
    /// `residual <= STATIONARY_TOLERANCE`.
    pub converged: bool,
    pub n_samples: usize,
}

/// Averaging nodes for the law of the iid symbol.
fn mixture_nodes(law: &Law) -> Vec<(f64, f64)> {
    match law {
        Law::Uniform { lo, hi } => {
            let w = 1.0 / MIXTURE_NODES as f64;
            (0..MIXTURE_NODES).map(|i| (lo + (hi - lo) * (i as f64 + 0.5) * w, w)).collect()
        }
        Law::Atoms { values, probs } => values.iter().copied().zip(probs.iter().copied()).collect(),
        Law::Bernoulli { p, v0, v1 } => vec![(*v0, 1.0 - p), (*v1, *p)],
    }
}

/// Kolmogorov distance between `nu` and its image under the averaged
/// (inverse, when `backward`) fiber maps.
pub fn stationary_residual(
    family: &CocycleFamily,
    e: f64,
    direction: Direction,
    nu: &EmpiricalCircleMeasure,
) -> Result<f64> {
    let law = family.iid_law()?;
    let fiber = family.at(e);
    let mut atoms = Vec::with_capacity(nu.len() * MIXTURE_NODES);
    for (omega, w) in mixture_nodes(law) {
        let g = fiber.map(omega);
        let g = if direction == Direction::Backward { g.inverse() } else { g };
        atoms.extend(nu.atoms().map(|(p, m)| (g.eval(p), m * w)));
    }
    let image = EmpiricalCircleMeasure::from_atoms(atoms)?;
    Ok(kolmogorov_distance(nu, &image))
}

/// Empirical stationary measure from one long orbit of the random maps
/// (`Backward`: their inverses, on the backward noise stream). The sample
/// size is doubled up to twice while the self-consistency residual exceeds
/// [`STATIONARY_TOLERANCE`]; the last estimate is returned either way.
pub fn estimate_stationary(
    family: &CocycleFamily,
    e: f64,
    direction: Direction,
    n_burn: u64,
    n_samples: usize,
    seed: u64,
) -> Result<StationaryEstimate> {
    family.iid_law()?;
    if n_samples < 1000 {
        return param("estimate_stationary needs n_samples >= 1000");
    }
    let mut n = n_samples;
    let mut last = None;
    for _ in 0..3 {
        let measure = stationary_orbit(family, e, direction, n_burn, n, seed)?;
        let residual = stationary_residual(family, e, direction, &measure)?;
        let converged = residual <= STATIONARY_TOLERANCE;
        last = Some(StationaryEstimate { measure, residual, converged, n_samples: n });
        if converged {
            break;
        }
        n *= 2;
    }
    Ok(last.expect("at least one pass"))
}

fn stationary_orbit(
    family: &CocycleFamily,
    e: f64,
    direction: Direction,
    n_burn: u64,
    n_samples: usize,
    seed: u64,
) -> Result<EmpiricalCircleMeasure> {
    let base = family.base.reseeded(seed);
    let mut symbols = match direction {
        Direction::Forward => base.forward(0, 0, 0),
        Direction::Backward => base.backward(0, 0),
    };
    let fiber = family.at(e);
    let next_map = |omega: f64| {
        let g = fiber.map(omega);
        if direction == Direction::Backward {
            g.inverse()
        } else {
            g
        }
    };
    // a random start avoids sitting on a fixed point of the maps
    let (mut y, mut acc) = (crate::drivers::uniform_at(seed, MC_STREAM_Z + 1, 0), 0.0);
    for t in 0..n_burn {
        step(&next_map(symbols.next_symbol()), &mut y, &mut acc, t)?;
    }
    let mut points = Vec::with_capacity(n_samples);
    for t in 0..n_samples as u64 {
        step(&next_map(symbols.next_symbol()), &mut y, &mut acc, n_burn + t)?;
        points.push(y);
    }
    EmpiricalCircleMeasure::from_points(&points)
}

/// Forward and backward stationary measures at one parameter.
pub fn estimate_stationary_pair(
    family: &CocycleFamily,
    e: f64,
    n_burn: u64,
    n_samples: usize,
    seed: u64,
) -> Result<StationaryPair> {
    Ok(StationaryPair {
        forward: estimate_stationary(family, e, Direction::Forward, n_burn, n_samples, seed)?,
        backward: estimate_stationary(family, e, Direction::Backward, n_burn, n_samples, seed)?,
    })
}

/// Batched Monte Carlo mean of `f(i)` over `i in 0..n`, with `f` receiving
/// positioned uniform streams so each batch is independent of scheduling.
fn mc_batches<F>(n: u64, seed: u64, streams: &[u64], f: F) -> Result<Estimate>
where
    F: Fn(&mut [DrawStream]) -> Result<f64> + Sync,
{
    if n == 0 {
        return param("Monte Carlo sample size must be positive");
    }
    let batches = (MC_BATCHES as u64).min(n);
    let sums: Vec<Result<(f64, u64)>> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let (lo, hi) = (n * b / batches, n * (b + 1) / batches);
            let mut st: Vec<DrawStream> =
                streams.iter().map(|&s| DrawStream::new(seed, s, false, lo)).collect();
            let mut vals = Vec::with_capacity((hi - lo) as usize);
            for _ in lo..hi {
                vals.push(f(&mut st)?);
            }
            Ok((pairwise_sum(&vals), hi - lo))
        })
        .collect();
    let mut totals = Vec::with_capacity(batches as usize);
    let mut means = Vec::with_capacity(batches as usize);
    for s in sums {
        let (sum, count) = s?;
        totals.push(sum);
        means.push(sum / count as f64);
    }
    let value = pairwise_sum(&totals) / n as f64;
    Ok(Estimate { value, stderr: mean_stderr(&means).stderr, n, replicas: batches as usize })
}

/// Stationary-measure increment formula: the mean over `omega` and
/// `y ~ nu_plus_e1` of `Phi_{nu_minus_e2}(g_{E1,omega}(y), g_{E2,omega}(y))`,
/// estimating `rho(E2) - rho(E1)`.
pub fn increment_thm2(
    family: &CocycleFamily,
    e1: f64,
    e2: f64,
    nu_plus_e1: &EmpiricalCircleMeasure,
    nu_minus_e2: &EmpiricalCircleMeasure,
    n_mc: u64,
    seed: u64,
) -> Result<Estimate> {
    let law = family.iid_law()?;
    let (f1, f2) = (family.at(e1), family.at(e2));
    let scale = family.rho_scale();
    mc_batches(n_mc, seed, &[MC_STREAM_OMEGA, MC_STREAM_Y], |st| {
        let omega = law.sample(st[0].next_uniform());
        let y = nu_plus_e1.quantile(st[1].next_uniform());
        let (a, b) = (f1.map(omega).eval(y), f2.map(omega).eval(y));
        Ok(scale * nu_minus_e2.phi_points(a, b))
    })
}

/// Number of parameter values probed per sample by the monotonicity check.
const MONOTONICITY_PROBES: usize = 9;
const MONOTONICITY_SAMPLES: u64 = 256;

/// Orientation of `E -> g_{E,omega}(y)` on `[e1, e2]`: `+1` increasing,
/// `-1` decreasing; mixed behaviour is a monotonicity violation.
pub fn monotonicity_orientation(
    family: &CocycleFamily,
    e1: f64,
    e2: f64,
    samples: &[(f64, f64)],
) -> Result<f64> {
    let fibers: Vec<Fiber<'_>> = (0..MONOTONICITY_PROBES)
        .map(|i| family.at(e1 + (e2 - e1) * i as f64 / (MONOTONICITY_PROBES - 1) as f64))
        .collect();
    let mut orientation = 0.0;
    for &(omega, y) in samples {
        let vals: Vec<f64> = fibers.iter().map(|f| f.map(omega).eval(y)).collect();
        for (i, w) in vals.windows(2).enumerate() {
            let d = (w[1] - w[0]).signum() * (w[1] != w[0]) as i32 as f64;
            if d == 0.0 {
                continue;
            }
            if orientation == 0.0 {
                orientation = d;
            } else if d != orientation {
                return Err(Error::MonotonicityViolation { omega, y, e: fibers[i + 1].e() });
            }
        }
    }
    Ok(if orientation == 0.0 { 1.0 } else { orientation })
}

/// Product-measure form of the increment: the mean over `omega` of the
/// `nu_plus x nu_minus` mass of the region between the graphs of
/// `g_{E1,omega}` and `g_{E2,omega}`, estimated by hit-or-miss sampling of
/// `(y, z)`. The sign follows the orientation of the family in `E`.
pub fn increment_corollary(
    family: &CocycleFamily,
    e1: f64,
    e2: f64,
    nu_plus: &EmpiricalCircleMeasure,
    nu_minus: &EmpiricalCircleMeasure,
    n_mc: u64,
    seed: u64,
) -> Result<Estimate> {
    if e1 > e2 {
        return param(format!("increment_corollary needs E1 <= E2 (got {e1} > {e2})"));
    }
    let law = family.iid_law()?;
    if e1 == e2 {
        return Ok(Estimate { value: 0.0, stderr: 0.0, n: n_mc, replicas: 0 });
    }
    let mut st_omega = DrawStream::new(seed, MC_STREAM_OMEGA, false, 0);
    let mut st_y = DrawStream::new(seed, MC_STREAM_Y, false, 0);
    let probes: Vec<(f64, f64)> = (0..MONOTONICITY_SAMPLES.min(n_mc))
        .map(|_| (law.sample(st_omega.next_uniform()), nu_plus.quantile(st_y.next_uniform())))
        .collect();
    let orientation = monotonicity_orientation(family, e1, e2, &probes)?;
    let (f1, f2) = (family.at(e1), family.at(e2));
    let scale = family.rho_scale();
    let zs = [MC_STREAM_OMEGA, MC_STREAM_Y, MC_STREAM_Z];
    mc_batches(n_mc, seed, &zs, |st| {
        let omega = law.sample(st[0].next_uniform());
        let y = nu_plus.quantile(st[1].next_uniform());
        let z = nu_minus.quantile(st[2].next_uniform());
        let (a, b) = (f1.map(omega).eval(y), f2.map(omega).eval(y));
        let (lo, width) = if orientation > 0.0 { (a, b - a) } else { (b, a - b) };
        if !(width < 1.0) || width < 0.0 {
            return Err(Error::Structural(format!(
                "image arc at omega={omega}, y={y} is not proper (width {width})"
            )));
        }
        let hit = frac(z - lo) < width;
        Ok(if hit { scale * orientation } else { 0.0 })
    })
}

/// Fiber measures of an invariant measure of the skew product over a
/// periodic base, one per base site.
#[derive(Clone, Debug)]
pub struct InvariantMeasureField {
    pub base: PeriodicBase,
    pub e: f64,
    pub fiber_measures: Vec<EmpiricalCircleMeasure>,
    pub kind: FieldKind,
}

/// How the fiber measure over site 0 was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    /// Uniform on an attracting cycle of the return map.
    Atomic,
    /// Lebesgue measure (all fiber maps are rotations), stored as a grid.
    Lebesgue,
    /// Points of one orbit of the return map.
    Sampled,
}

impl InvariantMeasureField {
    /// A field of arbitrary fiber measures (not necessarily invariant).
    pub fn from_measures(base: &PeriodicBase, e: f64, fiber_measures: Vec<EmpiricalCircleMeasure>) -> Result<Self> {
        if fiber_measures.len() != base.period() {
            return Err(Error::Structural(format!(
                "{} fiber measures for a base of period {}",
                fiber_measures.len(),
                base.period()
            )));
        }
        Ok(InvariantMeasureField { base: base.clone(), e, fiber_measures, kind: FieldKind::Sampled })
    }

    /// `F_* nu`: site `x_{i+1}` carries `(f_{E,x_i})_* nu_{x_i}`.
    pub fn push_forward(&self, family: &CocycleFamily) -> InvariantMeasureField {
        let fiber = family.at(self.e);
        let p = self.base.period();
        let mut out = self.fiber_measures.clone();
        for i in 0..p {
            out[(i + 1) % p] = self.fiber_measures[i].push_forward(&fiber.map(self.base.labels()[i]));
        }
        InvariantMeasureField { fiber_measures: out, ..self.clone() }
    }

    /// `Phi_{nu_site}(a, b)`, exact for Lebesgue fields.
    pub fn phi(&self, site: usize, a: f64, b: f64) -> f64 {
        match self.kind {
            FieldKind::Lebesgue => b - a,
            _ => self.fiber_measures[site].phi_points(a, b),
        }
    }

    /// `max_x kolmogorov_distance((f_{E,x})_* nu_x, nu_{Tx})`.
    pub fn pushforward_residual(&self, family: &CocycleFamily) -> f64 {
        let fiber = family.at(self.e);
        let p = self.base.period();
        (0..p)
            .map(|i| {
                let image = self.fiber_measures[i].push_forward(&fiber.map(self.base.labels()[i]));
                kolmogorov_distance(&image, &self.fiber_measures[(i + 1) % p])
            })
            .fold(0.0, f64::max)
    }
}

/// Invariant fiber measures over a periodic base.
///
/// The measure on the fiber over site 0 is invariant for the return map
/// `f_p = f_{x_{p-1}} o ... o f_{x_0}`: uniform on an attracting cycle when
/// the orbit of `0` closes up within [`CYCLE_TOLERANCE`], an `n`-point grid
/// when every fiber map is a rotation (Lebesgue), otherwise `n` points of
/// one orbit. The other fibers are images along the base.
pub fn invariant_field_periodic(
    family: &CocycleFamily,
    e: f64,
    base: &PeriodicBase,
    n: usize,
) -> Result<InvariantMeasureField> {
    if n < 1 {
        return param("invariant_field_periodic needs n >= 1");
    }
    let fiber = family.at(e);
    let maps: Vec<LiftedCircleMap> = base.labels().iter().map(|&l| fiber.map(l)).collect();
    let ret = maps.iter().skip(1).fold(maps[0].clone(), |acc, g| compose(g, &acc));
    let (first, kind) = if maps.iter().all(|g| g.is_rotation()) {
        let h = 0.5 / n as f64;
        let grid: Vec<f64> = (0..n).map(|i| i as f64 / n as f64 + h).collect();
        (EmpiricalCircleMeasure::from_points(&grid)?, FieldKind::Lebesgue)
    } else if let Some(cycle) = attracting_cycle(&ret, n)? {
        (EmpiricalCircleMeasure::from_points(&cycle)?, FieldKind::Atomic)
    } else {
        let (mut y, mut acc) = (0.0, 0.0);
        let burn = n.min(100_000) as u64;
        for t in 0..burn {
            step(&ret, &mut y, &mut acc, t)?;
        }
        let mut pts = Vec::with_capacity(n);
        for t in 0..n as u64 {
            step(&ret, &mut y, &mut acc, burn + t)?;
            pts.push(y);
        }
        (EmpiricalCircleMeasure::from_points(&pts)?, FieldKind::Sampled)
    };
    let mut fiber_measures = vec![first];
    for g in &maps[..maps.len() - 1] {
        let next = fiber_measures.last().expect("non-empty").push_forward(g);
        fiber_measures.push(next);
    }
    Ok(InvariantMeasureField { base: base.clone(), e, fiber_measures, kind })
}

fn circle_distance(a: f64, b: f64) -> f64 {
    let d = frac(a - b);
    d.min(1.0 - d)
}

/// Orbit points of an attracting cycle reached from `0`, if any.
fn attracting_cycle(ret: &LiftedCircleMap, n: usize) -> Result<Option<Vec<f64>>> {
    let (mut y, mut acc) = (0.0, 0.0);
    let burn = (20 * n).clamp(20_000, 200_000) as u64;
    for t in 0..burn {
        step(ret, &mut y, &mut acc, t)?;
    }
    let y0 = y;
    let mut cycle = vec![y0];
    let mut log_deriv = ret.deriv(y0).ln();
    for q in 1..=MAX_CYCLE {
        step(ret, &mut y, &mut acc, burn + q as u64)?;
        if circle_distance(y, y0) < CYCLE_TOLERANCE {
            return Ok((log_deriv < -1e-9).then_some(cycle));
        }
        log_deriv += ret.deriv(y).ln();
        cycle.push(y);
    }
    Ok(None)
}

/// `Phi_nu(f_{E1,omega}(y), f_{E2,omega}(y))`; invariant under `y -> y + 1`.
pub fn theta(family: &CocycleFamily, e1: f64, e2: f64, omega: f64, nu: &EmpiricalCircleMeasure, y: f64) -> f64 {
    nu.phi_points(family.at(e1).map(omega).eval(y), family.at(e2).map(omega).eval(y))
}

fn check_same_base(a: &PeriodicBase, b: &PeriodicBase) -> Result<()> {
    if a != b {
        return Err(Error::Structural("invariant measure fields live over different bases".into()));
    }
    Ok(())
}

/// Invariant-measure increment formula over a periodic base: the exact
/// integral of `theta_{E1,E2,x; nu_{E2,Tx}}` against the atoms of
/// `nu_{E1,x}`, averaged over sites.
pub fn increment_thm1_periodic(
    family: &CocycleFamily,
    e1: f64,
    e2: f64,
    field_e1: &InvariantMeasureField,
    field_e2: &InvariantMeasureField,
) -> Result<f64> {
    check_same_base(&field_e1.base, &field_e2.base)?;
    if e1 == e2 {
        return Ok(0.0);
    }
    let (f1, f2) = (family.at(e1), family.at(e2));
    let labels = field_e1.base.labels();
    let p = labels.len();
    let per_site: Vec<f64> = (0..p)
        .map(|i| {
            let (g1, g2) = (f1.map(labels[i]), f2.map(labels[i]));
            let next = (i + 1) % p;
            let terms: Vec<f64> = field_e1.fiber_measures[i]
                .atoms()
                .map(|(y, w)| w * field_e2.phi(next, g1.eval(y), g2.eval(y)))
                .collect();
            pairwise_sum(&terms)
        })
        .collect();
    Ok(family.rho_scale() * pairwise_sum(&per_site) / p as f64)
}

/// Translation value of the `n`-th iterate: the site average of
/// `Phi_{nu2_{T^n x}}(nu1'_{T^n x}, (f^n_x)_* nu1'_x)` with `nu1'` the
/// canonical lifts into `[0, 1)`.
pub fn translation_value(
    family: &CocycleFamily,
    e: f64,
    base: &PeriodicBase,
    nu1: &InvariantMeasureField,
    nu2: &InvariantMeasureField,
    n: usize,
) -> Result<f64> {
    check_same_base(base, &nu1.base)?;
    check_same_base(base, &nu2.base)?;
    let fiber = family.at(e);
    let labels = base.labels();
    let p = labels.len();
    let per_site: Vec<f64> = (0..p)
        .map(|i| {
            let mut lifted = MeasureOnLine::canonical_lift(&nu1.fiber_measures[i]);
            for t in 0..n {
                lifted = lifted.push_forward(&fiber.map(labels[(i + t) % p]));
            }
            let j = (i + n) % p;
            let start = MeasureOnLine::canonical_lift(&nu1.fiber_measures[j]);
            phi_measures(&nu2.fiber_measures[j], &start, &lifted)
        })
        .collect();
    Ok(family.rho_scale() * pairwise_sum(&per_site) / p as f64)
}

/// Increment computation re-run by [`lift_independence_check`].
#[derive(Clone, Copy, Debug)]
pub enum IncrementOp<'a> {
    Thm1Periodic { field_e1: &'a InvariantMeasureField, field_e2: &'a InvariantMeasureField },
    Thm2 {
        nu_plus_e1: &'a EmpiricalCircleMeasure,
        nu_minus_e2: &'a EmpiricalCircleMeasure,
        n_mc: u64,
        seed: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LiftCheck {
    pub original: f64,
    pub shifted: f64,
    pub pass: bool,
}

/// Recomputes an increment with the lift over each symbol shifted by an
/// integer and compares within [`LIFT_CHECK_TOLERANCE`].
pub fn lift_independence_check(
    family: &CocycleFamily,
    e1: f64,
    e2: f64,
    offsets: &[(f64, i64)],
    op: IncrementOp<'_>,
) -> Result<LiftCheck> {
    let shifted = family.clone().with_lift_offsets(offsets);
    let run = |fam: &CocycleFamily| -> Result<f64> {
        match op {
            IncrementOp::Thm1Periodic { field_e1, field_e2 } => {
                increment_thm1_periodic(fam, e1, e2, field_e1, field_e2)
            }
            IncrementOp::Thm2 { nu_plus_e1, nu_minus_e2, n_mc, seed } => {
                Ok(increment_thm2(fam, e1, e2, nu_plus_e1, nu_minus_e2, n_mc, seed)?.value)
            }
        }
    };
    let (a, b) = (run(family)?, run(&shifted)?);
    Ok(LiftCheck { original: a, shifted: b, pass: (a - b).abs() <= LIFT_CHECK_TOLERANCE })
}
