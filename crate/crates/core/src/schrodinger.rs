//! Discrete Schrodinger operators with iid and quasiperiodic-plus-iid
//! potentials: transfer matrices, Sturm counts, spectral and dynamical IDS.

use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circle_maps::{FiberFamily, Sl2Matrix};
use crate::drivers::{Base, DrawStream, IidDriver, Law, RotationBase, TrigPolynomial};
use crate::error::{param, Error, Result};
use crate::measures::EmpiricalCircleMeasure;
use crate::rotation::{birkhoff_rho, CocycleFamily, Estimate};
use crate::stats::{mean_stderr, pairwise_sum, MIN_BATCHES};

/// Largest `|IDS(E_ref)|` accepted after anchoring the lifts.
pub const ANCHOR_TOLERANCE: f64 = 0.02;
/// Default path length for fiber-measure approximation.
pub const DEFAULT_N_PATH: usize = 200;
/// Atoms per approximated fiber measure.
pub const FIBER_ATOMS: usize = 32;

const BG_STREAM: u64 = 1 << 41;

/// `v(n) = phi(G^n x0) + W_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub background: Option<RotationBase>,
    pub noise: Law,
}

impl PotentialSpec {
    /// `v = 0`.
    pub fn free() -> Self {
        PotentialSpec { background: None, noise: Law::constant(0.0) }
    }

    pub fn anderson(noise: Law) -> Self {
        PotentialSpec { background: None, noise }
    }

    pub fn with_background(mut self, background: RotationBase) -> Self {
        self.background = Some(background);
        self
    }

    /// `sup |v|`.
    pub fn bound(&self) -> f64 {
        self.background.as_ref().map_or(0.0, |b| b.sampler().bound()) + self.noise.support_bound()
    }

    /// Same potential plus the constant `c`.
    pub fn shifted(&self, c: f64) -> PotentialSpec {
        let noise = match &self.noise {
            Law::Uniform { lo, hi } => Law::Uniform { lo: lo + c, hi: hi + c },
            Law::Atoms { values, probs } => {
                Law::Atoms { values: values.iter().map(|v| v + c).collect(), probs: probs.clone() }
            }
            Law::Bernoulli { p, v0, v1 } => Law::Bernoulli { p: *p, v0: v0 + c, v1: v1 + c },
        };
        PotentialSpec { background: self.background.clone(), noise }
    }

    /// The base whose symbol at time `n` is `v(n)`.
    pub fn base(&self, seed: u64) -> Base {
        let noise = IidDriver::new(self.noise.clone(), seed, 0);
        match &self.background {
            None => Base::Iid(noise),
            Some(rotation) => Base::Quasiperiodic { rotation: rotation.clone(), noise: Some(noise) },
        }
    }

    /// `v(0..len)` for replica `replica`: independent noise and, with a
    /// background, the phase advanced by `replica * len`.
    pub fn sample(&self, len: usize, replica: u64, seed: u64) -> Vec<f64> {
        let mut src = self.base(seed).forward(replica, len as i64, 0);
        (0..len).map(|_| src.next_symbol()).collect()
    }
}

/// `(E - v, -1; 1, 0)`.
pub fn transfer_matrix(e: f64, v: f64) -> Sl2Matrix {
    crate::circle_maps::transfer(e, v)
}

/// Number of eigenvalues strictly below `e` of the Dirichlet restriction
/// with diagonal `potential` and unit off-diagonal, by counting negative
/// pivots of the shifted `LDL^T` recursion.
pub fn sturm_count(potential: &[f64], e: f64) -> usize {
    let tiny = -f64::EPSILON * (1.0 + e.abs());
    let mut count = 0;
    let mut d = 1.0;
    for (i, &v) in potential.iter().enumerate() {
        d = if i == 0 { v - e } else { v - e - 1.0 / d };
        if d == 0.0 {
            d = tiny;
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// Spectral IDS at several energies, sharing one potential per replica.
pub fn ids_spectral_curve(
    spec: &PotentialSpec,
    energies: &[f64],
    l: usize,
    replicas: usize,
    seed: u64,
) -> Result<Vec<Estimate>> {
    if l < 1000 {
        return param(format!("spectral IDS needs L >= 1000 (got {l})"));
    }
    if replicas < 1 {
        return param("spectral IDS needs at least one replica");
    }
    let counts: Vec<Vec<f64>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let v = spec.sample(l, r, seed);
            energies.iter().map(|&e| sturm_count(&v, e) as f64 / l as f64).collect()
        })
        .collect();
    Ok((0..energies.len())
        .map(|j| {
            let vals: Vec<f64> = counts.iter().map(|c| c[j]).collect();
            let m = mean_stderr(&vals);
            Estimate { value: m.mean, stderr: m.stderr, n: l as u64, replicas }
        })
        .collect())
}

/// Paired increments `IDS(e0 + d) - IDS(e0)` for each `d` in `deltas`, each
/// replica counting on one potential so the noise largely cancels.
pub fn ids_spectral_increments(
    spec: &PotentialSpec,
    e0: f64,
    deltas: &[f64],
    l: usize,
    replicas: usize,
    seed: u64,
) -> Result<Vec<Estimate>> {
    if l < 1000 || replicas < 2 {
        return param("spectral increments need L >= 1000 and at least two replicas");
    }
    let diffs: Vec<Vec<f64>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let v = spec.sample(l, r, seed);
            let c0 = sturm_count(&v, e0) as f64;
            deltas.iter().map(|&d| (sturm_count(&v, e0 + d) as f64 - c0) / l as f64).collect()
        })
        .collect();
    Ok((0..deltas.len())
        .map(|j| {
            let vals: Vec<f64> = diffs.iter().map(|c| c[j]).collect();
            let m = mean_stderr(&vals);
            Estimate { value: m.mean, stderr: m.stderr, n: l as u64, replicas }
        })
        .collect())
}

/// Mean of `sturm_count / L` over replicas.
pub fn ids_spectral(spec: &PotentialSpec, e: f64, l: usize, replicas: usize, seed: u64) -> Result<Estimate> {
    Ok(ids_spectral_curve(spec, &[e], l, replicas, seed)?.remove(0))
}

/// Projective cocycle of a potential, with lifts continued over `e_window`.
#[derive(Clone, Debug)]
pub struct SchrodingerCocycle {
    pub spec: PotentialSpec,
    family: CocycleFamily,
    calibrated: bool,
}

impl SchrodingerCocycle {
    pub fn new(spec: PotentialSpec, e_window: (f64, f64)) -> Result<Self> {
        let family = CocycleFamily::new(spec.base(0), FiberFamily::Schrodinger, e_window)?;
        Ok(SchrodingerCocycle { spec, family, calibrated: false })
    }

    pub fn family(&self) -> &CocycleFamily {
        &self.family
    }

    pub fn is_calibrated(&self) -> bool {
        self.calibrated
    }

    fn check_window(&self, e: f64) -> Result<()> {
        let (lo, hi) = self.family.e_window;
        if !(lo..=hi).contains(&e) {
            return param(format!("energy {e} outside the window [{lo}, {hi}]"));
        }
        Ok(())
    }
}

/// Replicas used by dynamical estimates.
pub const DYNAMICAL_REPLICAS: usize = MIN_BATCHES;

fn dynamical_burn_in(n: u64) -> u64 {
    (n / 100).min(10_000)
}

/// Fixes the global lift branch so that the rotation number below the
/// spectrum is `1/2` (`IDS(E_ref) = 0`), with the window extended to
/// contain `e_ref`.
pub fn calibrate_ids_anchor(cocycle: &SchrodingerCocycle, e_ref: f64, seed: u64) -> Result<SchrodingerCocycle> {
    let gershgorin = -2.0 - cocycle.spec.bound();
    if e_ref > gershgorin {
        return param(format!("reference energy {e_ref} must lie at or below {gershgorin}"));
    }
    let (lo, hi) = cocycle.family.e_window;
    let family = CocycleFamily::new(cocycle.spec.base(0), FiberFamily::Schrodinger, (lo.min(e_ref), hi))?;
    let n = 20_000;
    let rho = birkhoff_rho(&family, e_ref, n, dynamical_burn_in(n), 4, seed)?.value;
    let scale = family.rho_scale();
    let k = ((0.5 - rho) / scale).round() as i64;
    let family = family.with_global_offset(k);
    let residual = (1.0 - 2.0 * (rho + k as f64 * scale)).abs();
    if residual > ANCHOR_TOLERANCE {
        return Err(Error::CalibrationFailure { residual });
    }
    Ok(SchrodingerCocycle { spec: cocycle.spec.clone(), family, calibrated: true })
}

/// `IDS(E) = 1 - 2 rho(E)` from Birkhoff sums of `n` steps per replica.
pub fn ids_dynamical(cocycle: &SchrodingerCocycle, e: f64, n: u64, seed: u64) -> Result<Estimate> {
    if !cocycle.calibrated {
        return Err(Error::CalibrationRequired);
    }
    cocycle.check_window(e)?;
    let rho = birkhoff_rho(&cocycle.family, e, n, dynamical_burn_in(n), DYNAMICAL_REPLICAS, seed)?;
    Ok(Estimate { value: 1.0 - 2.0 * rho.value, stderr: 2.0 * rho.stderr, ..rho })
}

/// Increment `rho(E2) - rho(E1)` for a quasiperiodic background with iid
/// noise: the average over base points `x` (consecutive orbit points) and
/// noise `omega` of `Phi_{nu-_{E2,Gx}}(g_{E1,x,omega}(y), g_{E2,x,omega}(y))`,
/// `y ~ nu+_{E1,x}`. Each fiber measure has [`FIBER_ATOMS`] atoms, the
/// images of `0` after `n_path` steps along the frozen base path with fresh
/// noise (forward for `nu+`, by inverse maps from the future for `nu-`).
/// `n_mc` is the number of base points.
pub fn increment_ergodic_background(
    cocycle: &SchrodingerCocycle,
    e1: f64,
    e2: f64,
    n_path: usize,
    n_mc: u64,
    seed: u64,
) -> Result<Estimate> {
    let Some(rotation) = &cocycle.spec.background else {
        return param("increment_ergodic_background needs a background potential");
    };
    if n_mc == 0 || n_path == 0 {
        return param("increment_ergodic_background needs n_path >= 1 and n_mc >= 1");
    }
    cocycle.check_window(e1)?;
    cocycle.check_window(e2)?;
    if e1 == e2 {
        return Ok(Estimate { value: 0.0, stderr: 0.0, n: n_mc, replicas: 0 });
    }
    let law = &cocycle.spec.noise;
    let family = &cocycle.family;
    let (f1, f2) = (family.at(e1), family.at(e2));
    let scale = family.rho_scale();
    let np = n_path as u64;
    let values: Vec<f64> = (0..n_mc)
        .into_par_iter()
        .map(|i| {
            let t = i as i64;
            let mut plus = Vec::with_capacity(FIBER_ATOMS);
            let mut minus = Vec::with_capacity(FIBER_ATOMS);
            for k in 0..FIBER_ATOMS as u64 {
                let stream = BG_STREAM + 3 * k;
                let mut w = DrawStream::new(seed, stream, false, i * np);
                let mut y = 0.0;
                for s in t - n_path as i64..t {
                    let v = rotation.potential(s) + law.sample(w.next_uniform());
                    y = f1.map(v).eval(y);
                }
                plus.push(y);
                let mut w = DrawStream::new(seed, stream + 1, false, i * np);
                let mut z = 0.0;
                for s in (t + 1..=t + n_path as i64).rev() {
                    let v = rotation.potential(s) + law.sample(w.next_uniform());
                    z = f2.map(v).inverse().eval(z);
                }
                minus.push(z);
            }
            let nu_minus = EmpiricalCircleMeasure::from_points(&minus).expect("finite atoms");
            let mut w = DrawStream::new(seed, BG_STREAM - 1, false, i * FIBER_ATOMS as u64);
            let phis: Vec<f64> = plus
                .iter()
                .map(|&y| {
                    let v = rotation.potential(t) + law.sample(w.next_uniform());
                    nu_minus.phi_points(f1.map(v).eval(y), f2.map(v).eval(y))
                })
                .collect();
            scale * pairwise_sum(&phis) / FIBER_ATOMS as f64
        })
        .collect();
    let value = pairwise_sum(&values) / n_mc as f64;
    let batches = (MIN_BATCHES * 2).min(n_mc as usize);
    let means: Vec<f64> = (0..batches)
        .map(|b| {
            let (lo, hi) = (n_mc as usize * b / batches, n_mc as usize * (b + 1) / batches);
            pairwise_sum(&values[lo..hi]) / (hi - lo) as f64
        })
        .collect();
    Ok(Estimate { value, stderr: mean_stderr(&means).stderr, n: n_mc, replicas: batches })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdsMethod {
    Spectral,
    Dynamical,
}

impl IdsMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            IdsMethod::Spectral => "spectral",
            IdsMethod::Dynamical => "dynamical",
        }
    }
}

/// IDS values on an energy grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdsCurve {
    pub energies: Vec<f64>,
    pub ids_values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub method: IdsMethod,
    /// `L` for spectral curves, `n` for dynamical ones.
    pub size: u64,
    pub seed: u64,
}

impl IdsCurve {
    pub fn spectral(spec: &PotentialSpec, energies: &[f64], l: usize, replicas: usize, seed: u64) -> Result<Self> {
        let est = ids_spectral_curve(spec, energies, l, replicas, seed)?;
        Ok(Self::from_estimates(energies, &est, IdsMethod::Spectral, l as u64, seed))
    }

    pub fn dynamical(cocycle: &SchrodingerCocycle, energies: &[f64], n: u64, seed: u64) -> Result<Self> {
        let est: Vec<Estimate> =
            energies.iter().map(|&e| ids_dynamical(cocycle, e, n, seed)).collect::<Result<_>>()?;
        Ok(Self::from_estimates(energies, &est, IdsMethod::Dynamical, n, seed))
    }

    fn from_estimates(energies: &[f64], est: &[Estimate], method: IdsMethod, size: u64, seed: u64) -> Self {
        IdsCurve {
            energies: energies.to_vec(),
            ids_values: est.iter().map(|e| e.value).collect(),
            stderr: est.iter().map(|e| e.stderr).collect(),
            method,
            size,
            seed,
        }
    }

    /// Non-decreasing within `k` standard errors of each step.
    pub fn is_monotone(&self, k: f64) -> bool {
        (1..self.energies.len()).all(|i| {
            let drop = self.ids_values[i - 1] - self.ids_values[i];
            drop <= k * self.stderr[i - 1].hypot(self.stderr[i])
        })
    }

    pub const CSV_HEADER: &'static str = "energy,ids,stderr,method,L_or_n,seed";

    pub fn write_csv<W: Write>(&self, mut out: W, header: bool) -> Result<()> {
        if header {
            writeln!(out, "{}", Self::CSV_HEADER)?;
        }
        for i in 0..self.energies.len() {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{},{},{}",
                self.energies[i],
                self.ids_values[i],
                self.stderr[i],
                self.method.as_str(),
                self.size,
                self.seed
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f), true)
    }

    /// Reads one curve (all rows must share method, size and seed).
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != Self::CSV_HEADER {
            return Err(Error::Parse(format!("expected header `{}`", Self::CSV_HEADER)));
        }
        let mut curve: Option<IdsCurve> = None;
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(Error::Parse(format!("expected 6 fields: `{line}`")));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("`{s}`: {e}")));
            let int = |s: &str| s.trim().parse::<u64>().map_err(|e| Error::Parse(format!("`{s}`: {e}")));
            let method = match f[3].trim() {
                "spectral" => IdsMethod::Spectral,
                "dynamical" => IdsMethod::Dynamical,
                m => return Err(Error::Parse(format!("unknown method `{m}`"))),
            };
            let (size, seed) = (int(f[4])?, int(f[5])?);
            let c = curve.get_or_insert_with(|| IdsCurve {
                energies: Vec::new(),
                ids_values: Vec::new(),
                stderr: Vec::new(),
                method,
                size,
                seed,
            });
            if c.method != method || c.size != size || c.seed != seed {
                return Err(Error::Parse("rows mix several curves".into()));
            }
            c.energies.push(num(f[0])?);
            c.ids_values.push(num(f[1])?);
            c.stderr.push(num(f[2])?);
        }
        curve.ok_or_else(|| Error::Parse("no rows".into()))
    }
}

/// `phi(x) = amplitude * cos(2 pi x)` over the rotation by `frequency`.
pub fn cosine_background(amplitude: f64, frequency: f64, x0: f64) -> Result<RotationBase> {
    RotationBase::new(frequency, x0, TrigPolynomial::cosine(amplitude))
}
