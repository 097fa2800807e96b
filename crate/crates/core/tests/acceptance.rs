//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `ACCEPTANCE_ONLY=1,4,13` restricts the run; `ACCEPTANCE_STRICT=1` turns
//! any FAIL into a non-zero exit status.

use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rotnum_core::analysis::{
    holder_fit, holder_fit_pairs, walk_equation_residual, walk_expected_hitting_exact, walk_expected_hitting_mc,
    Example53Config, HolderPair,
};
use rotnum_core::rotation::{
    birkhoff_rho, estimate_stationary, increment_corollary, increment_thm1_periodic, increment_thm2,
    invariant_field_periodic, lift_independence_check, translation_value, Direction, FieldKind, IncrementOp,
};
use rotnum_core::schrodinger::{
    calibrate_ids_anchor, cosine_background, ids_spectral, ids_spectral_increments, increment_ergodic_background,
    sturm_count, DEFAULT_N_PATH,
};
use rotnum_core::stats::combine_stderr;
use rotnum_core::*;

type Res<T> = std::result::Result<T, Box<dyn std::error::Error>>;

const SEED: u64 = 20_240_601;

/// Outcome of one criterion; `artifact` holds the bit patterns of every
/// number the criterion computed.
struct Outcome {
    pass: bool,
    detail: String,
    artifact: Vec<u64>,
}

#[derive(Default)]
struct Art(Vec<u64>);

impl Art {
    fn f(&mut self, x: f64) -> f64 {
        self.0.push(x.to_bits());
        x
    }
    fn est(&mut self, e: &Estimate) -> Estimate {
        self.f(e.value);
        self.f(e.stderr);
        *e
    }
}

struct Rng(ChaCha8Rng);

impl Rng {
    fn new(stream: u64) -> Self {
        Rng(ChaCha8Rng::seed_from_u64(SEED ^ (stream << 32)))
    }
    fn u(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.u()
    }
    fn int(&mut self, lo: i64, hi: i64) -> i64 {
        lo + (self.0.next_u64() % (hi - lo + 1) as u64) as i64
    }
    fn circle_measure(&mut self, max_atoms: i64) -> EmpiricalCircleMeasure {
        let k = self.int(1, max_atoms);
        let atoms: Vec<(f64, f64)> = (0..k).map(|_| (self.u(), self.range(0.1, 1.0))).collect();
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        EmpiricalCircleMeasure::from_atoms(atoms.into_iter().map(|(p, w)| (p, w / total))).unwrap()
    }
}

fn check(pass: bool, label: &str, failures: &mut Vec<String>) {
    if !pass {
        failures.push(label.to_string());
    }
}

fn outcome(failures: Vec<String>, detail: String, art: Art) -> Outcome {
    let pass = failures.is_empty();
    let detail = if pass { detail } else { format!("{detail}; failed: {}", failures.join(", ")) };
    Outcome { pass, detail, artifact: art.0 }
}

fn c1_exact_identities() -> Res<Outcome> {
    const CASES: usize = 1000;
    const TOL: f64 = 1e-12;
    let mut art = Art::default();
    let mut fails = Vec::new();
    let mut rng = Rng::new(1);
    let mut worst = [0.0f64; 6];

    for _ in 0..CASES {
        let nu = rng.circle_measure(20);
        let (a, b, c) = (rng.range(-5.0, 5.0), rng.range(-5.0, 5.0), rng.range(-5.0, 5.0));
        let add = (nu.phi_points(a, c) - nu.phi_points(a, b) - nu.phi_points(b, c)).abs();
        let unit = (nu.phi_points(a, a + 1.0) - 1.0).abs();
        let k = rng.int(-5, 5) as f64;
        let shift = (nu.phi_points(a + k, b + k) - nu.phi_points(a, b)).abs();
        worst[0] = worst[0].max(art.f(add));
        worst[1] = worst[1].max(art.f(unit));
        worst[2] = worst[2].max(art.f(shift));
    }

    // integral of Phi(a, b) over an arbitrary coupling equals Phi(m1, m2)
    for _ in 0..CASES {
        let nu = rng.circle_measure(12);
        let (n1, n2) = (rng.int(1, 8) as usize, rng.int(1, 8) as usize);
        let xs: Vec<f64> = (0..n1).map(|_| rng.range(-3.0, 3.0)).collect();
        let ys: Vec<f64> = (0..n2).map(|_| rng.range(-3.0, 3.0)).collect();
        let mut joint: Vec<Vec<f64>> = (0..n1).map(|_| (0..n2).map(|_| rng.u()).collect()).collect();
        let total: f64 = joint.iter().flatten().sum();
        joint.iter_mut().flatten().for_each(|w| *w /= total);
        let m1 = MeasureOnLine::from_atoms(xs.iter().enumerate().map(|(i, &x)| (x, joint[i].iter().sum()))).unwrap();
        let m2 = MeasureOnLine::from_atoms(
            ys.iter().enumerate().map(|(j, &y)| (y, joint.iter().map(|row| row[j]).sum())),
        )
        .unwrap();
        let mut coupled = 0.0;
        for i in 0..n1 {
            for j in 0..n2 {
                coupled += joint[i][j] * nu.phi_points(xs[i], ys[j]);
            }
        }
        worst[3] = worst[3].max(art.f((coupled - phi_measures(&nu, &m1, &m2)).abs()));
    }

    // every built-in fiber family yields degree-one monotone lifts
    let mut mono_ok = true;
    for case in 0..CASES {
        let family = match case % 5 {
            0 => FiberFamily::Rotation,
            1 => FiberFamily::Schrodinger,
            2 => FiberFamily::Moebius { stretch: rng.range(-2.0, 2.0) },
            3 => FiberFamily::MorseSmale { s: rng.range(0.05, 0.95) },
            _ => FiberFamily::Composed {
                parts: vec![FiberFamily::Schrodinger, FiberFamily::Moebius { stretch: rng.range(-1.0, 1.0) }],
            },
        };
        let g = family.map(rng.range(-3.0, 3.0), rng.range(-2.0, 2.0));
        let y = rng.range(-10.0, 10.0);
        worst[4] = worst[4].max(art.f((g.eval(y + 1.0) - g.eval(y) - 1.0).abs()));
        let (y1, y2) = (rng.range(-10.0, 10.0), rng.range(-10.0, 10.0));
        let (lo, hi) = (y1.min(y2), y1.max(y2));
        mono_ok &= g.eval(lo) <= g.eval(hi);
    }

    // integer lift offsets per symbol leave the increment formulas unchanged
    let labels = [0.13, 0.58, 0.91];
    let base = PeriodicBase::new(labels.to_vec())?;
    let fam = CocycleFamily::new(Base::Periodic(base.clone()), FiberFamily::Moebius { stretch: 0.4 }, (0.0, 1.0))?;
    let (e1, e2) = (0.2, 0.45);
    let f1 = invariant_field_periodic(&fam, e1, &base, 2000)?;
    let f2 = invariant_field_periodic(&fam, e2, &base, 2000)?;
    let law = Law::atoms(&[(0.1, 0.3), (0.6, 0.5), (1.2, 0.2)])?;
    let iid = CocycleFamily::new(Base::Iid(IidDriver::new(law, SEED, 0)), FiberFamily::Schrodinger, (-0.5, 0.5))?;
    let nu_plus = estimate_stationary(&iid, 0.0, Direction::Forward, 1000, 4000, SEED)?.measure;
    let nu_minus = estimate_stationary(&iid, 0.3, Direction::Backward, 1000, 4000, SEED)?.measure;
    let mut lift_ok = 0;
    for case in 0..2 * CASES {
        let check = if case % 2 == 0 {
            let offsets: Vec<(f64, i64)> = labels.iter().map(|&l| (l, rng.int(-3, 3))).collect();
            lift_independence_check(&fam, e1, e2, &offsets, IncrementOp::Thm1Periodic { field_e1: &f1, field_e2: &f2 })?
        } else {
            let offsets: Vec<(f64, i64)> = [0.1, 0.6, 1.2].iter().map(|&l| (l, rng.int(-3, 3))).collect();
            let op = IncrementOp::Thm2 { nu_plus_e1: &nu_plus, nu_minus_e2: &nu_minus, n_mc: 64, seed: case as u64 };
            lift_independence_check(&iid, 0.0, 0.3, &offsets, op)?
        };
        worst[5] = worst[5].max(art.f((check.original - check.shifted).abs()));
        lift_ok += check.pass as usize;
    }

    let names = ["additivity", "unit period", "shift equivariance", "coupling identity", "degree one", "lift independence"];
    for (w, name) in worst.iter().zip(names) {
        check(*w <= TOL, name, &mut fails);
    }
    check(mono_ok, "monotone lifts", &mut fails);
    check(lift_ok == 2 * CASES, "lift check flag", &mut fails);
    let detail = format!(
        "max errors: additivity {:.1e}, unit {:.1e}, shift {:.1e}, coupling {:.1e}, degree-one {:.1e}, lift {:.1e} (tol 1e-12, {} cases each)",
        worst[0], worst[1], worst[2], worst[3], worst[4], worst[5], CASES
    );
    Ok(outcome(fails, detail, art))
}

fn c2_rigid_rotation() -> Res<Outcome> {
    let mut art = Art::default();
    let alpha = 2f64.sqrt() - 1.0;
    let fam = CocycleFamily::new(
        Base::Iid(IidDriver::new(Law::constant(0.0), SEED, 0)),
        FiberFamily::Rotation,
        (0.0, 1.0),
    )?;
    let est = art.est(&birkhoff_rho(&fam, alpha, 1000, 0, 1, SEED)?);
    let err = (est.value - alpha).abs();
    let mut fails = Vec::new();
    check(err <= 1e-12, "rho", &mut fails);
    Ok(outcome(fails, format!("|rho - alpha| = {err:.1e} (tol 1e-12)"), art))
}

fn c3_sturm_oracle() -> Res<Outcome> {
    let mut art = Art::default();
    let mut rng = Rng::new(3);
    let mut mismatches = 0;
    let mut total = 0;
    for _ in 0..100 {
        for l in [8usize, 16, 32, 64] {
            let v: Vec<f64> = (0..l).map(|_| rng.range(-3.0, 3.0)).collect();
            let h = DMatrix::from_fn(l, l, |i, j| {
                if i == j {
                    v[i]
                } else if i.abs_diff(j) == 1 {
                    1.0
                } else {
                    0.0
                }
            });
            let eig = SymmetricEigen::new(h).eigenvalues;
            for _ in 0..10 {
                let e = rng.range(-5.0, 5.0);
                let dense = eig.iter().filter(|&&x| x < e).count();
                let sturm = sturm_count(&v, e);
                art.0.push(sturm as u64);
                mismatches += (dense != sturm) as usize;
                total += 1;
            }
        }
    }
    let mut fails = Vec::new();
    check(mismatches == 0, "count mismatch", &mut fails);
    Ok(outcome(fails, format!("{mismatches} mismatches in {total} counts"), art))
}

fn free_ids(e: f64) -> f64 {
    1.0 - (e / 2.0).acos() / std::f64::consts::PI
}

fn c4_free_ids() -> Res<Outcome> {
    let mut art = Art::default();
    let mut fails = Vec::new();
    let spec = PotentialSpec::free();
    let cocycle = calibrate_ids_anchor(&SchrodingerCocycle::new(spec.clone(), (-1.5, 1.5))?, -2.5, SEED)?;
    let (mut ws, mut wd) = (0.0f64, 0.0f64);
    for e in [-1.5, -1.0, 0.0, 1.0, 1.5] {
        let exact = free_ids(e);
        let s = art.est(&ids_spectral(&spec, e, 100_000, 1, SEED)?);
        let d = art.est(&rotnum_core::schrodinger::ids_dynamical(&cocycle, e, 100_000, SEED)?);
        ws = ws.max((s.value - exact).abs());
        wd = wd.max((d.value - exact).abs());
    }
    check(ws <= 2e-3, "spectral", &mut fails);
    check(wd <= 5e-3, "dynamical", &mut fails);
    Ok(outcome(fails, format!("max error spectral {ws:.1e} (tol 2e-3), dynamical {wd:.1e} (tol 5e-3)"), art))
}

fn c5_anderson_cross_method() -> Res<Outcome> {
    let mut art = Art::default();
    let mut fails = Vec::new();
    let spec = PotentialSpec::anderson(Law::uniform(0.0, 1.0)?);
    let energies: Vec<f64> = (0..9).map(|i| -1.5 + 0.5 * i as f64).collect();
    let cocycle = calibrate_ids_anchor(&SchrodingerCocycle::new(spec.clone(), (-1.5, 2.5))?, -3.5, SEED)?;
    let spectral = IdsCurve::spectral(&spec, &energies, 100_000, 16, SEED)?;
    let dynamical = IdsCurve::dynamical(&cocycle, &energies, 1_000_000, SEED)?;
    let mut worst = 0.0f64;
    for i in 0..energies.len() {
        let (s, d) = (art.f(spectral.ids_values[i]), art.f(dynamical.ids_values[i]));
        let se = combine_stderr(&[art.f(spectral.stderr[i]), art.f(dynamical.stderr[i])]);
        worst = worst.max((d - s).abs() / se);
    }
    check(worst < 4.0, "agreement", &mut fails);
    check(spectral.is_monotone(2.0), "spectral monotone", &mut fails);
    check(dynamical.is_monotone(2.0), "dynamical monotone", &mut fails);
    Ok(outcome(fails, format!("max |dyn - spec| = {worst:.2} combined stderr (tol 4) at 9 energies"), art))
}

fn c6_stationary_formula() -> Res<Outcome> {
    let mut art = Art::default();
    let mut fails = Vec::new();
    let law = Law::uniform(0.0, 1.0)?;
    let fam = CocycleFamily::new(Base::Iid(IidDriver::new(law, SEED, 0)), FiberFamily::Schrodinger, (-0.1, 0.7))?;
    let (n, burn, samples, n_mc) = (1_000_000, 10_000, 1_000_000, 1_000_000);
    let plus = |e| estimate_stationary(&fam, e, Direction::Forward, burn, samples, SEED).map(|s| s.measure);
    let minus = |e| estimate_stationary(&fam, e, Direction::Backward, burn, samples, SEED).map(|s| s.measure);
    let mut lines = Vec::new();
    for (e1, e2) in [(0.0, 0.1), (0.5, 0.6)] {
        let em = 0.5 * (e1 + e2);
        let (p1, pm) = (plus(e1)?, plus(em)?);
        let (m2, mm) = (minus(e2)?, minus(em)?);
        let b1 = art.est(&birkhoff_rho(&fam, e1, n, burn, 16, SEED)?);
        let b2 = art.est(&birkhoff_rho(&fam, e2, n, burn, 16, SEED)?);
        let oracle = b2.minus(&b1);
        let t = art.est(&increment_thm2(&fam, e1, e2, &p1, &m2, n_mc, SEED)?);
        let c = art.est(&increment_corollary(&fam, e1, e2, &p1, &m2, n_mc, SEED)?);
        let ta = art.est(&increment_thm2(&fam, e1, em, &p1, &mm, n_mc, SEED)?);
        let tb = art.est(&increment_thm2(&fam, em, e2, &pm, &m2, n_mc, SEED)?);
        let z_oracle = (t.value - oracle.value).abs() / t.stderr.hypot(oracle.stderr);
        let z_cor = (c.value - t.value).abs() / c.stderr.hypot(t.stderr);
        let z_tel = (ta.value + tb.value - t.value).abs() / combine_stderr(&[ta.stderr, tb.stderr, t.stderr]);
        check(z_oracle < 4.0, &format!("formula vs Birkhoff at ({e1},{e2})"), &mut fails);
        check(z_cor < 4.0, &format!("product form at ({e1},{e2})"), &mut fails);
        check(z_tel < 4.0, &format!("telescoping at ({e1},{em},{e2})"), &mut fails);
        lines.push(format!(
            "({e1},{e2}): formula {:.5} vs Birkhoff {:.5} [{z_oracle:.2}s], product {:.5} [{z_cor:.2}s], telescoping [{z_tel:.2}s]",
            t.value, oracle.value, c.value
        ));
    }
    Ok(outcome(fails, format!("{} (tol 4s)", lines.join("; ")), art))
}

fn c7_periodic_formula() -> Res<Outcome> {
    let mut art = Art::default();
    let mut fails = Vec::new();
    let mut rng = Rng::new(7);
    let (mut rot_err, mut moeb_z) = (0.0f64, 0.0f64);
    for p in 1..=3usize {
        let labels: Vec<f64> = (0..p).map(|_| rng.u()).collect();
        let base = PeriodicBase::new(labels)?;
        let rot = CocycleFamily::new(Base::Periodic(base.clone()), FiberFamily::Rotation, (0.0, 1.0))?;
        let (e1, e2) = (0.1, 0.35);
        let f1 = invariant_field_periodic(&rot, e1, &base, 1000)?;
        let f2 = invariant_field_periodic(&rot, e2, &base, 1000)?;
        let inc = art.f(increment_thm1_periodic(&rot, e1, e2, &f1, &f2)?);
        rot_err = rot_err.max((inc - (e2 - e1)).abs());

        let moeb = CocycleFamily::new(Base::Periodic(base.clone()), FiberFamily::Moebius { stretch: 0.5 }, (0.0, 1.0))?;
        for (e1, e2) in [(0.1, 0.3), (0.4, 0.8)] {
            let f1 = invariant_field_periodic(&moeb, e1, &base, 100_000)?;
            let f2 = invariant_field_periodic(&moeb, e2, &base, 100_000)?;
            let inc = art.f(increment_thm1_periodic(&moeb, e1, e2, &f1, &f2)?);
            let b1 = art.est(&birkhoff_rho(&moeb, e1, 1_000_000, 10_000, p, SEED)?);
            let b2 = art.est(&birkhoff_rho(&moeb, e2, 1_000_000, 10_000, p, SEED)?);
            let diff = b2.minus(&b1);
            let tol = 4.0 * diff.stderr + 1e-3;
            moeb_z = moeb_z.max((inc - diff.value).abs() / tol);
        }
    }
    check(rot_err <= 1e-6, "rotation fibers", &mut fails);
    check(moeb_z <= 1.0, "Moebius fibers", &mut fails);
    Ok(outcome(
        fails,
        format!("rotation max error {rot_err:.1e} (tol 1e-6); Moebius max |diff| / (4s + 1e-3) = {moeb_z:.3}"),
        art,
    ))
}

fn c8_translation_value() -> Res<Outcome> {
    let mut art = Art::default();
    let mut fails = Vec::new();
    let base = PeriodicBase::new(vec![0.07, 0.21])?;
    let fam = CocycleFamily::new(Base::Periodic(base.clone()), FiberFamily::Moebius { stretch: 0.25 }, (0.0, 1.0))?;
    // first energy of a fixed scan whose invariant field is an attracting cycle
    let mut found = None;
    for i in 1..100 {
        let e = 0.01 * i as f64;
        let field = invariant_field_periodic(&fam, e, &base, 1000)?;
        if field.kind == FieldKind::Atomic {
            found = Some((e, field));
            break;
        }
    }
    let Some((e, nu1)) = found else {
        return Ok(outcome(vec!["no atomic invariant field found".into()], String::new(), art));
    };
    let grid = |offset: f64, k: usize| {
        EmpiricalCircleMeasure::from_points(&(0..k).map(|i| (i as f64 + offset) / k as f64).collect::<Vec<_>>())
    };
    let nu2 = InvariantMeasureField::from_measures(&base, e, vec![grid(0.31, 97)?, grid(0.77, 89)?])?;
    let t1 = art.f(translation_value(&fam, e, &base, &nu1, &nu2, 1)?);
    let mut worst_iter = 0.0f64;
    for n in 1..=20 {
        let tn = art.f(translation_value(&fam, e, &base, &nu1, &nu2, n)?);
        worst_iter = worst_iter.max((tn - n as f64 * t1).abs() / (n as f64 * 1e-9));
    }
    // cocycle relation with a non-invariant first measure
    let mu = InvariantMeasureField::from_measures(&base, e, vec![grid(0.5, 61)?, grid(0.2, 53)?])?;
    let pushed = mu.push_forward(&fam);
    let mut worst_cocycle = 0.0f64;
    let mut largest = 0.0f64;
    for n in 2..=20 {
        let lhs = translation_value(&fam, e, &base, &mu, &nu1, n)?;
        largest = largest.max(lhs.abs());
        let rhs = translation_value(&fam, e, &base, &mu, &nu1, 1)? + translation_value(&fam, e, &base, &pushed, &nu1, n - 1)?;
        worst_cocycle = worst_cocycle.max(art.f((lhs - rhs).abs()));
    }
    check(worst_iter <= 1.0, "iterates", &mut fails);
    check(worst_cocycle < 1e-9, "cocycle relation", &mut fails);
    Ok(outcome(
        fails,
        format!(
            "E = {e:.2}, T = {t1:.6}; max |T(F^n) - nT| / (n 1e-9) = {worst_iter:.2e}; cocycle residual {worst_cocycle:.1e} (tol 1e-9, values up to {largest:.2})"
        ),
        art,
    ))
}

fn c9_walk() -> Res<Outcome> {
    let mut art = Art::default();
    let mut fails = Vec::new();
    let mut worst = 0.0f64;
    for m in 1..=1000 {
        worst = worst.max(art.f(walk_equation_residual(m)?));
    }
    let mut zs = Vec::new();
    for (m, j) in [(5, 0), (10, 3)] {
        let exact = art.f(walk_expected_hitting_exact(m, j)?);
        let mc = art.est(&walk_expected_hitting_mc(m, j, 100_000, SEED)?);
        zs.push((mc.value - exact).abs() / mc.stderr);
    }
    check(worst == 0.0, "exact residual", &mut fails);
    check(zs.iter().all(|&z| z < 4.0), "Monte Carlo", &mut fails);
    Ok(outcome(
        fails,
        format!("max residual {worst:.1e} for M <= 1000; MC deviations {:.2}s, {:.2}s (tol 4s)", zs[0], zs[1]),
        art,
    ))
}

fn c10_morse_smale_scaling() -> Res<Outcome> {
    let mut art = Art::default();
    let mut fails = Vec::new();
    let exps = [-5.0, -4.75, -4.5, -4.25, -4.0, -3.75, -3.5, -3.25, -3.0, -2.0];
    let e_grid: Vec<f64> = exps.iter().map(|&x: &f64| if x.fract() == 0.0 { 10f64.powi(x as i32) } else { 10f64.powf(x) }).collect();
    let config = Example53Config { s: 0.5, e_grid: e_grid.clone(), n: 10_000_000, replicas: 16, seed: SEED };
    let table = rotnum_core::analysis::example53_run(&config)?;
    for r in &table.rows {
        art.f(r.rho);
        art.f(r.stderr);
    }
    let decades: Vec<_> = [0, 4, 8, 9].iter().map(|&i| &table.rows[i]).collect();
    let min_z = decades.iter().map(|r| r.rho / r.stderr).fold(f64::INFINITY, f64::min);
    let mut comp: Vec<f64> = decades.iter().map(|r| r.compensated).collect();
    comp.sort_by(f64::total_cmp);
    let med = 0.5 * (comp[1] + comp[2]);
    let spread = comp.iter().map(|c| (c / med).max(med / c)).fold(1.0, f64::max);
    let curve: Vec<(f64, f64, f64)> = table.rows[..9].iter().map(|r| (r.e, r.rho, r.stderr)).collect();
    let fit = holder_fit(&curve)?;
    art.f(fit.fitted_alpha);
    check(decades.len() == 4 && min_z > 4.0, "positive rho", &mut fails);
    check(spread <= 3.0, "compensated ratio", &mut fails);
    check(fit.fitted_alpha < 0.2, "Holder exponent", &mut fails);
    let rhos: Vec<String> = decades.iter().map(|r| format!("{:.3e}", r.rho)).collect();
    Ok(outcome(
        fails,
        format!(
            "rho at 1e-5..1e-2 = [{}], min rho/s = {min_z:.0} (tol 4); compensated spread {spread:.2} (tol 3); Holder exponent {:.3} on [1e-5, 1e-3] (tol < 0.2)",
            rhos.join(", "),
            fit.fitted_alpha
        ),
        art,
    ))
}

fn c11_holder_sanity() -> Res<Outcome> {
    let mut art = Art::default();
    let mut fails = Vec::new();
    let grid = rotnum_core::analysis::log_grid(1e-6, 1e-2, 13);
    let fit_of = |f: &dyn Fn(f64) -> f64, grid: &[f64]| -> Res<f64> {
        let curve: Vec<(f64, f64, f64)> = grid.iter().map(|&e| (e, f(e), 0.0)).collect();
        Ok(holder_fit(&curve)?.fitted_alpha)
    };
    let lin = art.f(fit_of(&|e| e, &grid)?);
    let sqrt = art.f(fit_of(&|e: f64| e.sqrt(), &grid)?);
    let log_grid = rotnum_core::analysis::log_grid(1e-12, 1e-8, 13);
    let log = art.f(fit_of(&|e: f64| (1.0 / e).ln().powi(-2), &log_grid)?);
    check((lin - 1.0).abs() <= 0.02, "E", &mut fails);
    check((sqrt - 0.5).abs() <= 0.02, "sqrt E", &mut fails);
    check(log < 0.15, "log profile", &mut fails);
    Ok(outcome(fails, format!("exponents: E {lin:.4}, sqrt E {sqrt:.4}, (log 1/E)^-2 {log:.4}"), art))
}

fn c12_ergodic_background() -> Res<Outcome> {
    let mut art = Art::default();
    let mut fails = Vec::new();
    let background = cosine_background(0.5, 2f64.sqrt() - 1.0, 0.0)?;
    let spec = PotentialSpec::anderson(Law::uniform(0.0, 1.0)?).with_background(background);
    let cocycle = SchrodingerCocycle::new(spec.clone(), (-1.0, 2.05))?;
    let mut lines = Vec::new();
    for (e1, e2) in [(-1.0, -0.95), (2.0, 2.05)] {
        let inc = art.est(&increment_ergodic_background(&cocycle, e1, e2, DEFAULT_N_PATH, 2000, SEED)?);
        let b1 = art.est(&birkhoff_rho(cocycle.family(), e1, 1_000_000, 10_000, 16, SEED)?);
        let b2 = art.est(&birkhoff_rho(cocycle.family(), e2, 1_000_000, 10_000, 16, SEED)?);
        let oracle = b2.minus(&b1);
        let z = (inc.value - oracle.value).abs() / inc.stderr.hypot(oracle.stderr);
        check(z < 4.0, &format!("increment at ({e1},{e2})"), &mut fails);
        lines.push(format!("({e1},{e2}): {:.5} vs Birkhoff {:.5} [{z:.2}s]", inc.value, oracle.value));
    }
    let deltas = rotnum_core::analysis::log_grid(1e-3, 1e-1, 9);
    let incs = ids_spectral_increments(&spec, 0.5, &deltas, 100_000, 16, SEED)?;
    let pairs: Vec<HolderPair> = deltas
        .iter()
        .zip(&incs)
        .map(|(&d, est)| HolderPair { delta_e: d, delta: art.f(est.value), stderr: art.f(est.stderr) })
        .collect();
    let fit = holder_fit_pairs(&pairs)?;
    art.f(fit.fitted_alpha);
    check(fit.fitted_alpha > 0.05 && fit.fit_r2 > 0.9, "IDS Holder fit", &mut fails);
    Ok(outcome(
        fails,
        format!(
            "{} (tol 4s); IDS exponent {:.3} with R^2 {:.4} (need > 0.05, > 0.9)",
            lines.join("; "),
            fit.fitted_alpha,
            fit.fit_r2
        ),
        art,
    ))
}

type Criterion = (u32, &'static str, fn() -> Res<Outcome>);

const CRITERIA: [Criterion; 12] = [
    (1, "exact identities", c1_exact_identities),
    (2, "rigid rotation", c2_rigid_rotation),
    (3, "Sturm count vs dense eigensolve", c3_sturm_oracle),
    (4, "free Laplacian IDS", c4_free_ids),
    (5, "Anderson IDS cross-method", c5_anderson_cross_method),
    (6, "stationary-measure increment formula", c6_stationary_formula),
    (7, "periodic-base increment formula", c7_periodic_formula),
    (8, "translation value", c8_translation_value),
    (9, "random-walk hitting times", c9_walk),
    (10, "Morse-Smale small-E scaling", c10_morse_smale_scaling),
    (11, "Holder estimation sanity", c11_holder_sanity),
    (12, "ergodic background", c12_ergodic_background),
];

fn run(f: fn() -> Res<Outcome>) -> Outcome {
    f().unwrap_or_else(|e| Outcome { pass: false, detail: format!("error: {e}"), artifact: Vec::new() })
}

fn pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().expect("thread pool")
}

fn main() {
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let wanted = |id: u32| only.as_ref().is_none_or(|o| o.contains(&id));
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");

    let main_pool = pool(4);
    let mut results: Vec<(u32, Outcome)> = Vec::new();
    let mut failed = 0;
    for (id, name, f) in CRITERIA {
        if !wanted(id) {
            continue;
        }
        let t = Instant::now();
        let out = main_pool.install(|| run(f));
        let status = if out.pass { "PASS" } else { "FAIL" };
        println!("{status} {id:>2} {name}: {} [{:.1}s]", out.detail, t.elapsed().as_secs_f64());
        failed += !out.pass as usize;
        results.push((id, out));
    }

    if wanted(13) {
        let t = Instant::now();
        let single = pool(1);
        let mut diverged = Vec::new();
        for (id, out) in &results {
            let f = CRITERIA.iter().find(|c| c.0 == *id).expect("known criterion").2;
            let again = single.install(|| run(f));
            if again.artifact != out.artifact || again.detail != out.detail {
                diverged.push(id.to_string());
            }
        }
        let pass = diverged.is_empty() && !results.is_empty();
        let status = if pass { "PASS" } else { "FAIL" };
        let detail = if diverged.is_empty() {
            format!("{} criteria bit-identical with 4 and 1 workers", results.len())
        } else {
            format!("artifacts differ between 4 and 1 workers for criteria {}", diverged.join(", "))
        };
        println!("{status} 13 determinism: {detail} [{:.1}s]", t.elapsed().as_secs_f64());
        failed += !pass as usize;
    }

    println!("acceptance: {failed} criteria failed");
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
