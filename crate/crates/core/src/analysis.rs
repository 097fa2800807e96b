//! Regularity estimates and the Morse-Smale counterexample harness.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circle_maps::{morse_smale_forward, morse_smale_inverse, FiberFamily};
use crate::drivers::{Base, DrawStream, IidDriver, Law};
use crate::error::{param, Error, Result};
use crate::measures::frac;
use crate::rotation::{birkhoff_rho, CocycleFamily, Estimate};
use crate::stats::{linear_fit, mean_stderr, pairwise_sum};

/// Pairs enter a Hölder fit only when `|delta| > SIGNAL_FACTOR * stderr`.
pub const SIGNAL_FACTOR: f64 = 4.0;
/// Minimum number of usable pairs in a Hölder fit.
pub const MIN_PAIRS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderPair {
    pub delta_e: f64,
    pub delta: f64,
    pub stderr: f64,
}

impl HolderPair {
    fn usable(&self) -> bool {
        self.delta_e > 0.0 && self.delta.abs() > SIGNAL_FACTOR * self.stderr && self.delta != 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderFit {
    /// Pairs passing the signal filter.
    pub pairs: Vec<HolderPair>,
    /// Slope of `log |delta|` against `log delta_e`.
    pub fitted_alpha: f64,
    pub fit_r2: f64,
    pub intercept: f64,
    /// `(min, max)` of `delta_e` over the fitted pairs.
    pub window: (f64, f64),
    pub rejected: usize,
}

/// Log-log fit over explicit increments.
pub fn holder_fit_pairs(pairs: &[HolderPair]) -> Result<HolderFit> {
    let usable: Vec<HolderPair> = pairs.iter().copied().filter(HolderPair::usable).collect();
    if usable.len() < MIN_PAIRS {
        return Err(Error::InsufficientSignal { usable: usable.len() });
    }
    let xs: Vec<f64> = usable.iter().map(|p| p.delta_e.ln()).collect();
    let (lo, hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if hi - lo < 1e-6 {
        return param("all increments share one energy scale; use a geometric energy grid");
    }
    let ys: Vec<f64> = usable.iter().map(|p| p.delta.abs().ln()).collect();
    let fit = linear_fit(&xs, &ys);
    let window = usable
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.delta_e), b.max(p.delta_e)));
    Ok(HolderFit {
        rejected: pairs.len() - usable.len(),
        pairs: usable,
        fitted_alpha: fit.slope,
        fit_r2: fit.r2,
        intercept: fit.intercept,
        window,
    })
}

/// Hölder exponent of a sampled curve `(E, value, stderr)` from the
/// increments between neighbouring energies.
pub fn holder_fit(curve: &[(f64, f64, f64)]) -> Result<HolderFit> {
    if curve.len() < 6 {
        return param(format!("holder_fit needs at least 6 points (got {})", curve.len()));
    }
    let mut pts = curve.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let pairs: Vec<HolderPair> = pts
        .windows(2)
        .map(|w| HolderPair { delta_e: w[1].0 - w[0].0, delta: w[1].1 - w[0].1, stderr: w[0].2.hypot(w[1].2) })
        .collect();
    holder_fit_pairs(&pairs)
}

/// `T_j = M(M+1) - j(j+1)`: expected time for the reflected walk from `j`
/// to reach `M`.
pub fn walk_expected_hitting_exact(m: u64, j: u64) -> Result<f64> {
    if j > m {
        return param(format!("walk start {j} outside [0, {m}]"));
    }
    Ok((m * (m + 1) - j * (j + 1)) as f64)
}

/// Largest residual of the hitting-time equations for the exact solution:
/// `T_M = 0`, `T_0 = 1 + (T_0 + T_1)/2` and
/// `T_j = 1 + (T_{j-1} + T_{j+1})/2` for `0 < j < M`.
pub fn walk_equation_residual(m: u64) -> Result<f64> {
    if m == 0 {
        return Ok(walk_expected_hitting_exact(0, 0)?.abs());
    }
    let t = |j: u64| walk_expected_hitting_exact(m, j);
    let mut worst = t(m)?.abs();
    worst = worst.max((t(0)? - 1.0 - 0.5 * (t(0)? + t(1)?)).abs());
    for j in 1..m {
        worst = worst.max((t(j)? - 1.0 - 0.5 * (t(j - 1)? + t(j + 1)?)).abs());
    }
    Ok(worst)
}

const WALK_STREAM: u64 = 1 << 42;
const WALK_BATCHES: u64 = 32;

/// Monte Carlo hitting time of `M` from `j` for the fair `+-1` walk where
/// a step below `0` stays at `0`.
pub fn walk_expected_hitting_mc(m: u64, j: u64, trials: u64, seed: u64) -> Result<Estimate> {
    if trials < 1000 {
        return param("walk_expected_hitting_mc needs at least 1000 trials");
    }
    if j > m {
        return param(format!("walk start {j} outside [0, {m}]"));
    }
    let times: Vec<Vec<f64>> = (0..WALK_BATCHES)
        .into_par_iter()
        .map(|b| {
            let (lo, hi) = (trials * b / WALK_BATCHES, trials * (b + 1) / WALK_BATCHES);
            let mut rng = DrawStream::new(seed, WALK_STREAM + b, false, 0);
            (lo..hi)
                .map(|_| {
                    let (mut pos, mut t) = (j, 0u64);
                    while pos < m {
                        t += 1;
                        if rng.next_uniform() < 0.5 {
                            pos += 1;
                        } else {
                            pos = pos.saturating_sub(1);
                        }
                    }
                    t as f64
                })
                .collect()
        })
        .collect();
    let all: Vec<f64> = times.into_iter().flatten().collect();
    let me = mean_stderr(&all);
    Ok(Estimate { value: me.mean, stderr: me.stderr, n: trials, replicas: all.len() })
}

/// Parameters of the Morse-Smale counterexample run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example53Config {
    /// Strength of `f(y) = y - s/(2 pi) sin(2 pi y)`.
    pub s: f64,
    pub e_grid: Vec<f64>,
    /// Steps per replica.
    pub n: u64,
    pub replicas: usize,
    pub seed: u64,
}

impl Example53Config {
    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s < 1.0) {
            return param(format!("s = {} must lie in (0, 1)", self.s));
        }
        if self.e_grid.is_empty() || self.e_grid.iter().any(|&e| !(e > 0.0 && e <= 0.1)) {
            return param("energy grid must be non-empty and inside (0, 0.1]");
        }
        if self.n < 10 || self.replicas < 1 {
            return param("need n >= 10 and at least one replica");
        }
        Ok(())
    }
}

/// `R_E o f` and `R_E o f^{-1}` with equal probabilities; lifts fix `0` at
/// `E = 0`.
pub fn example53_family(s: f64, e_max: f64, seed: u64) -> Result<CocycleFamily> {
    let law = Law::atoms(&[(1.0, 0.5), (2.0, 0.5)])?;
    CocycleFamily::new(Base::Iid(IidDriver::new(law, seed, 0)), FiberFamily::MorseSmale { s }, (0.0, e_max))
}

fn bisect<F: Fn(f64) -> f64>(h: F, mut a: f64, mut b: f64, what: &str) -> Result<f64> {
    let (mut ha, hb) = (h(a), h(b));
    if ha == 0.0 {
        return Ok(a);
    }
    if hb == 0.0 {
        return Ok(b);
    }
    if ha.signum() == hb.signum() || !ha.is_finite() || !hb.is_finite() {
        return Err(Error::RootFinding(format!("{what}: no sign change on [{a}, {b}]")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid == a || mid == b {
            break;
        }
        let hm = h(mid);
        if hm == 0.0 {
            return Ok(mid);
        }
        if hm.signum() == ha.signum() {
            a = mid;
            ha = hm;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Fixed points of `g_1 = R_E o f` and `g_2 = R_E o f^{-1}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example53FixedPoints {
    pub attractor_1: f64,
    pub repeller_1: f64,
    pub attractor_2: f64,
    pub repeller_2: f64,
}

pub fn example53_fixed_points(s: f64, e: f64) -> Result<Example53FixedPoints> {
    let h1 = |y: f64| morse_smale_forward(s, y) + e - y;
    let h2 = |y: f64| morse_smale_inverse(s, y) + e - y;
    Ok(Example53FixedPoints {
        attractor_1: bisect(h1, 0.0, 0.25, "attractor of R_E o f")?,
        repeller_1: bisect(h1, 0.25, 0.5, "repeller of R_E o f")?,
        attractor_2: bisect(h2, 0.5, 0.75, "attractor of R_E o f^-1")?,
        repeller_2: bisect(h2, -0.25, 0.0, "repeller of R_E o f^-1")?,
    })
}

const M_E_CAP: u64 = 10_000_000;

/// `M_E = min { j : f^j(A_2) in [R_2, A_1] }`.
pub fn example53_m_e(s: f64, e: f64) -> Result<u64> {
    let fp = example53_fixed_points(s, e)?;
    let width = frac(fp.attractor_1 - fp.repeller_2);
    let mut y = fp.attractor_2;
    for j in 0..M_E_CAP {
        if frac(y - fp.repeller_2) <= width {
            return Ok(j);
        }
        y = morse_smale_forward(s, y);
    }
    Err(Error::RootFinding(format!("orbit of A_2 did not reach [R_2, A_1] within {M_E_CAP} steps")))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example53Row {
    pub e: f64,
    pub rho: f64,
    pub stderr: f64,
    pub m_e: u64,
    /// `rho * (ln 1/E)^2`; heuristic stability check.
    pub compensated: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example53Table {
    pub config: Example53Config,
    pub rows: Vec<Example53Row>,
}

pub fn example53_run(config: &Example53Config) -> Result<Example53Table> {
    config.validate()?;
    let e_max = config.e_grid.iter().copied().fold(0.0, f64::max);
    let family = example53_family(config.s, e_max, config.seed)?;
    let burn_in = config.n / 100;
    let rows = config
        .e_grid
        .iter()
        .map(|&e| {
            let est = birkhoff_rho(&family, e, config.n, burn_in, config.replicas, config.seed)?;
            let l = (1.0 / e).ln();
            Ok(Example53Row {
                e,
                rho: est.value,
                stderr: est.stderr,
                m_e: example53_m_e(config.s, e)?,
                compensated: est.value * l * l,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Example53Table { config: config.clone(), rows })
}

/// Fit parameters reported alongside an [`Example53Table`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example53Summary {
    /// `M_E ~ slope * ln(1/E) + intercept`.
    pub m_e_slope: f64,
    pub m_e_intercept: f64,
    pub m_e_r2: f64,
    pub compensated_median: f64,
    /// `max(c / median, median / c)` over rows.
    pub compensated_spread: f64,
    pub holder: Option<HolderFit>,
    pub seed: u64,
    pub n: u64,
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

impl Example53Table {
    pub fn summary(&self) -> Example53Summary {
        let xs: Vec<f64> = self.rows.iter().map(|r| (1.0 / r.e).ln()).collect();
        let ms: Vec<f64> = self.rows.iter().map(|r| r.m_e as f64).collect();
        let fit = linear_fit(&xs, &ms);
        let comp: Vec<f64> = self.rows.iter().map(|r| r.compensated).collect();
        let med = median(&comp);
        let spread = comp.iter().map(|c| (c / med).max(med / c)).fold(1.0, f64::max);
        let curve: Vec<(f64, f64, f64)> = self.rows.iter().map(|r| (r.e, r.rho, r.stderr)).collect();
        Example53Summary {
            m_e_slope: fit.slope,
            m_e_intercept: fit.intercept,
            m_e_r2: fit.r2,
            compensated_median: med,
            compensated_spread: spread,
            holder: holder_fit(&curve).ok(),
            seed: self.config.seed,
            n: self.config.n,
        }
    }

    pub const CSV_HEADER: &'static str = "energy,rho,stderr,M_E,compensated,n,seed";

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for r in &self.rows {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{},{:.16e},{},{}",
                r.e, r.rho, r.stderr, r.m_e, r.compensated, self.config.n, self.config.seed
            )?;
        }
        Ok(())
    }

    pub fn save(&self, csv: impl AsRef<Path>, json: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(csv)?))?;
        let f = std::fs::File::create(json)?;
        serde_json::to_writer_pretty(f, &self.summary())?;
        Ok(())
    }
}

/// `lo * (hi/lo)^(i/(count-1))`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

/// Mean of a slice with deterministic summation.
pub fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}
