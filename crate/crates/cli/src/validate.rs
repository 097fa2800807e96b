//! Invariant suite behind `rotnum validate`.

use nalgebra::{DMatrix, SymmetricEigen};
use rotnum_core::drivers::uniform_at;
use rotnum_core::rotation::{
    invariant_field_periodic, lift_independence_check, translation_value, FieldKind, IncrementOp,
    InvariantMeasureField,
};
use rotnum_core::schrodinger::sturm_count;
use rotnum_core::{
    phi_measures, Base, CocycleFamily, EmpiricalCircleMeasure, FiberFamily, MeasureOnLine, PeriodicBase,
};

use crate::config::{CliError, CliResult, Params};

const TOL: f64 = 1e-12;

/// Uniform draws on a private stream.
struct Draws {
    seed: u64,
    stream: u64,
    i: i64,
}

impl Draws {
    fn new(seed: u64, stream: u64) -> Self {
        Draws { seed, stream: (1 << 50) + stream, i: 0 }
    }
    fn u(&mut self) -> f64 {
        self.i += 1;
        uniform_at(self.seed, self.stream, self.i)
    }
    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.u()
    }
    fn int(&mut self, lo: i64, hi: i64) -> i64 {
        (lo + ((hi - lo + 1) as f64 * self.u()) as i64).min(hi)
    }
    fn measure(&mut self, max_atoms: i64) -> EmpiricalCircleMeasure {
        let k = self.int(1, max_atoms);
        let atoms: Vec<(f64, f64)> = (0..k).map(|_| (self.u(), self.range(0.1, 1.0))).collect();
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        EmpiricalCircleMeasure::from_atoms(atoms.into_iter().map(|(x, w)| (x, w / total))).expect("valid atoms")
    }
}

struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn phi_identities(cases: usize, seed: u64) -> Check {
    let mut d = Draws::new(seed, 1);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let nu = d.measure(20);
        let (a, b, c) = (d.range(-5.0, 5.0), d.range(-5.0, 5.0), d.range(-5.0, 5.0));
        let k = d.int(-5, 5) as f64;
        worst = worst
            .max((nu.phi_points(a, c) - nu.phi_points(a, b) - nu.phi_points(b, c)).abs())
            .max((nu.phi_points(a, a + 1.0) - 1.0).abs())
            .max((nu.phi_points(a + k, b + k) - nu.phi_points(a, b)).abs());
    }
    Check { name: "Phi identities", pass: worst <= TOL, detail: format!("max error {worst:.1e} over {cases} cases") }
}

fn coupling_identity(cases: usize, seed: u64) -> Check {
    let mut d = Draws::new(seed, 2);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let nu = d.measure(12);
        let (n1, n2) = (d.int(1, 6) as usize, d.int(1, 6) as usize);
        let xs: Vec<f64> = (0..n1).map(|_| d.range(-3.0, 3.0)).collect();
        let ys: Vec<f64> = (0..n2).map(|_| d.range(-3.0, 3.0)).collect();
        let mut joint: Vec<Vec<f64>> = (0..n1).map(|_| (0..n2).map(|_| d.u()).collect()).collect();
        let total: f64 = joint.iter().flatten().sum();
        joint.iter_mut().flatten().for_each(|w| *w /= total);
        let m1 = MeasureOnLine::from_atoms((0..n1).map(|i| (xs[i], joint[i].iter().sum()))).expect("valid");
        let m2 = MeasureOnLine::from_atoms((0..n2).map(|j| (ys[j], joint.iter().map(|r| r[j]).sum()))).expect("valid");
        let coupled: f64 =
            (0..n1).flat_map(|i| (0..n2).map(move |j| (i, j))).map(|(i, j)| joint[i][j] * nu.phi_points(xs[i], ys[j])).sum();
        worst = worst.max((coupled - phi_measures(&nu, &m1, &m2)).abs());
    }
    Check { name: "coupling identity", pass: worst <= TOL, detail: format!("max error {worst:.1e} over {cases} cases") }
}

fn lifts(cases: usize, seed: u64) -> Check {
    let mut d = Draws::new(seed, 3);
    let (mut worst, mut monotone) = (0.0f64, true);
    for i in 0..cases {
        let family = match i % 4 {
            0 => FiberFamily::Rotation,
            1 => FiberFamily::Schrodinger,
            2 => FiberFamily::Moebius { stretch: d.range(-2.0, 2.0) },
            _ => FiberFamily::MorseSmale { s: d.range(0.05, 0.95) },
        };
        let g = family.map(d.range(-3.0, 3.0), d.range(-2.0, 2.0));
        let y = d.range(-10.0, 10.0);
        worst = worst.max((g.eval(y + 1.0) - g.eval(y) - 1.0).abs());
        let (a, b) = (d.range(-10.0, 10.0), d.range(-10.0, 10.0));
        monotone &= g.eval(a.min(b)) <= g.eval(a.max(b));
    }
    Check {
        name: "lift degree one and monotone",
        pass: worst <= TOL && monotone,
        detail: format!("max degree error {worst:.1e}, monotone {monotone}"),
    }
}

fn moebius_family(labels: &[f64], stretch: f64) -> rotnum_core::Result<(CocycleFamily, PeriodicBase)> {
    let base = PeriodicBase::new(labels.to_vec())?;
    let fam = CocycleFamily::new(Base::Periodic(base.clone()), FiberFamily::Moebius { stretch }, (0.0, 1.0))?;
    Ok((fam, base))
}

fn lift_independence(cases: usize, seed: u64) -> rotnum_core::Result<Check> {
    let labels = [0.13, 0.58, 0.91];
    let (fam, base) = moebius_family(&labels, 0.4)?;
    let f1 = invariant_field_periodic(&fam, 0.2, &base, 2000)?;
    let f2 = invariant_field_periodic(&fam, 0.45, &base, 2000)?;
    let mut d = Draws::new(seed, 4);
    let (mut worst, mut all) = (0.0f64, true);
    for _ in 0..cases {
        let offsets: Vec<(f64, i64)> = labels.iter().map(|&l| (l, d.int(-3, 3))).collect();
        let op = IncrementOp::Thm1Periodic { field_e1: &f1, field_e2: &f2 };
        let c = lift_independence_check(&fam, 0.2, 0.45, &offsets, op)?;
        worst = worst.max((c.original - c.shifted).abs());
        all &= c.pass;
    }
    Ok(Check { name: "lift independence", pass: all, detail: format!("max change {worst:.1e} over {cases} offsets") })
}

fn cocycle_relation() -> rotnum_core::Result<Check> {
    let (fam, base) = moebius_family(&[0.07, 0.21], 0.25)?;
    let Some((e, nu)) = (1..100)
        .map(|i| 0.01 * i as f64)
        .map(|e| invariant_field_periodic(&fam, e, &base, 1000).map(|f| (e, f)))
        .find(|r| r.as_ref().map_or(true, |(_, f)| f.kind == FieldKind::Atomic))
        .transpose()?
    else {
        return Ok(Check { name: "cocycle relation", pass: false, detail: "no atomic invariant field".into() });
    };
    let grid = |offset: f64, k: usize| {
        EmpiricalCircleMeasure::from_points(&(0..k).map(|i| (i as f64 + offset) / k as f64).collect::<Vec<_>>())
    };
    let other = InvariantMeasureField::from_measures(&base, e, vec![grid(0.31, 97)?, grid(0.77, 89)?])?;
    let t1 = translation_value(&fam, e, &base, &nu, &other, 1)?;
    let mut iter_err = 0.0f64;
    for n in 1..=20 {
        iter_err = iter_err.max((translation_value(&fam, e, &base, &nu, &other, n)? - n as f64 * t1).abs() / n as f64);
    }
    let mu = InvariantMeasureField::from_measures(&base, e, vec![grid(0.5, 61)?, grid(0.2, 53)?])?;
    let pushed = mu.push_forward(&fam);
    let mut residual = 0.0f64;
    for n in 2..=20 {
        let lhs = translation_value(&fam, e, &base, &mu, &nu, n)?;
        let rhs = translation_value(&fam, e, &base, &mu, &nu, 1)? + translation_value(&fam, e, &base, &pushed, &nu, n - 1)?;
        residual = residual.max((lhs - rhs).abs());
    }
    Ok(Check {
        name: "cocycle relation",
        pass: iter_err <= 1e-9 && residual < 1e-9,
        detail: format!("iterate error {iter_err:.1e} per step, cocycle residual {residual:.1e}"),
    })
}

fn sturm_vs_dense(seed: u64) -> Check {
    let mut d = Draws::new(seed, 5);
    let (mut mismatches, mut total) = (0, 0);
    for _ in 0..100 {
        for l in [8usize, 16, 32, 64] {
            let v: Vec<f64> = (0..l).map(|_| d.range(-3.0, 3.0)).collect();
            let h = DMatrix::from_fn(l, l, |i, j| if i == j { v[i] } else if i.abs_diff(j) == 1 { 1.0 } else { 0.0 });
            let eig = SymmetricEigen::new(h).eigenvalues;
            for _ in 0..10 {
                let e = d.range(-5.0, 5.0);
                mismatches += (eig.iter().filter(|&&x| x < e).count() != sturm_count(&v, e)) as usize;
                total += 1;
            }
        }
    }
    Check { name: "Sturm vs dense", pass: mismatches == 0, detail: format!("{mismatches} mismatches in {total} counts") }
}

pub fn run(p: &Params) -> CliResult<String> {
    let (cases, seed) = (p.usize("cases")?, p.u64("seed")?);
    let checks = vec![
        phi_identities(cases, seed),
        coupling_identity(cases, seed),
        lifts(cases, seed),
        lift_independence(cases, seed)?,
        cocycle_relation()?,
        sturm_vs_dense(seed),
    ];
    for c in &checks {
        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
    if failed.is_empty() {
        Ok(format!("validate: all {} checks passed", checks.len()))
    } else {
        Err(CliError::Validation(failed.join(", ")))
    }
}
