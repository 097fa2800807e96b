use std::fmt::Write as _;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use rotnum_core::analysis::{example53_run, holder_fit, Example53Config};
use rotnum_core::rotation::{
    birkhoff_rho, estimate_stationary, increment_corollary, increment_thm1_periodic, increment_thm2,
    invariant_field_periodic, Direction,
};
use rotnum_core::schrodinger::{calibrate_ids_anchor, cosine_background, increment_ergodic_background};
use rotnum_core::stats::combine_stderr;
use rotnum_core::{
    Base, CocycleFamily, Estimate, FiberFamily, IdsCurve, IidDriver, Law, PeriodicBase, PotentialSpec,
    SchrodingerCocycle,
};

use crate::config::{parse_grid, CliError, CliResult, Params};

fn usage(msg: String) -> CliError {
    CliError::Usage(msg)
}

fn law(p: &Params, key: &str) -> CliResult<Law> {
    let raw = p.str(key)?;
    raw.parse().map_err(|e| usage(format!("key '{key}': {e}")))
}

fn fiber(p: &Params) -> CliResult<FiberFamily> {
    Ok(match p.str("family")? {
        "rigid" => FiberFamily::Rotation,
        "schrodinger" => FiberFamily::Schrodinger,
        "moebius" => FiberFamily::Moebius { stretch: p.f64("stretch")? },
        "morse-smale" => FiberFamily::MorseSmale { s: p.f64("s")? },
        other => return Err(usage(format!("key 'family': unknown family '{other}'"))),
    })
}

fn periodic_base(p: &Params) -> CliResult<Option<PeriodicBase>> {
    p.opt("labels")
        .map(|raw| {
            let labels = parse_grid(raw).map_err(|m| usage(format!("key 'labels': {m}")))?;
            Ok(PeriodicBase::new(labels)?)
        })
        .transpose()
}

fn base(p: &Params) -> CliResult<Base> {
    if let Some(b) = periodic_base(p)? {
        return Ok(Base::Periodic(b));
    }
    let noise = IidDriver::new(law(p, "law")?, p.u64("seed")?, 0);
    Ok(match p.opt_f64("background")? {
        Some(amp) => Base::Quasiperiodic {
            rotation: cosine_background(amp, p.f64("frequency")?, p.f64("x0")?)?,
            noise: Some(noise),
        },
        None => Base::Iid(noise),
    })
}

fn window(energies: &[f64]) -> (f64, f64) {
    energies.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &e| (a.min(e), b.max(e)))
}

fn family(p: &Params, energies: &[f64]) -> CliResult<CocycleFamily> {
    Ok(CocycleFamily::new(base(p)?, fiber(p)?, window(energies))?)
}

fn out_path(p: &Params) -> Option<PathBuf> {
    p.opt("out").map(PathBuf::from)
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents)?;
    Ok(())
}

fn fmt_est(e: &Estimate) -> String {
    format!("{:.12} ± {:.2e}", e.value, e.stderr)
}

pub fn rotation(p: &Params) -> CliResult<String> {
    let energies = match p.opt_f64("alpha")? {
        Some(a) => vec![a],
        None => p.grid("energies")?,
    };
    let fam = family(p, &energies)?;
    let (n, burn, replicas, seed) = (p.u64("n")?, p.u64("burn-in")?, p.usize("replicas")?, p.u64("seed")?);
    let mut csv = String::from("energy,rho,stderr,n,replicas,seed\n");
    let mut rows = Vec::new();
    for &e in &energies {
        let est = birkhoff_rho(&fam, e, n, burn, replicas, seed)?;
        writeln!(csv, "{e:.16e},{:.16e},{:.16e},{n},{},{seed}", est.value, est.stderr, est.replicas).unwrap();
        rows.push((e, est));
    }
    if let Some(path) = out_path(p) {
        write_file(&path, &csv)?;
    }
    Ok(match rows.as_slice() {
        [(_, est)] => format!("rho = {} (n = {n}, replicas = {replicas}, seed = {seed})", fmt_est(est)),
        _ => rows
            .iter()
            .map(|(e, est)| format!("E = {e:.6}: rho = {}", fmt_est(est)))
            .collect::<Vec<_>>()
            .join("\n"),
    })
}

pub fn increment(p: &Params) -> CliResult<String> {
    let (e1, e2) = (p.f64("e1")?, p.f64("e2")?);
    let seed = p.u64("seed")?;
    let method = p.str("method")?;
    let (n_mc, n_samples, n_burn) = (p.u64("n-mc")?, p.usize("n-samples")?, p.u64("n-burn")?);
    let est = match method {
        "stationary" | "product" => {
            let fam = family(p, &[e1, e2])?;
            let plus = estimate_stationary(&fam, e1, Direction::Forward, n_burn, n_samples, seed)?;
            let minus = estimate_stationary(&fam, e2, Direction::Backward, n_burn, n_samples, seed)?;
            for (name, s) in [("forward", &plus), ("backward", &minus)] {
                if !s.converged {
                    eprintln!("warning: {name} stationary measure residual {:.3e} above tolerance", s.residual);
                }
            }
            if method == "stationary" {
                increment_thm2(&fam, e1, e2, &plus.measure, &minus.measure, n_mc, seed)?
            } else {
                increment_corollary(&fam, e1, e2, &plus.measure, &minus.measure, n_mc, seed)?
            }
        }
        "periodic" => {
            let Some(pb) = periodic_base(p)? else {
                return Err(usage("method 'periodic' needs key 'labels'".into()));
            };
            let fam = family(p, &[e1, e2])?;
            let n_field = p.usize("n-field")?;
            let f1 = invariant_field_periodic(&fam, e1, &pb, n_field)?;
            let f2 = invariant_field_periodic(&fam, e2, &pb, n_field)?;
            Estimate { n: n_field as u64, ..Estimate::exact(increment_thm1_periodic(&fam, e1, e2, &f1, &f2)?) }
        }
        "background" => {
            if p.str("family")? != "schrodinger" {
                return Err(usage("method 'background' needs family 'schrodinger'".into()));
            }
            let Some(amp) = p.opt_f64("background")? else {
                return Err(usage("method 'background' needs key 'background'".into()));
            };
            let spec = PotentialSpec::anderson(law(p, "law")?)
                .with_background(cosine_background(amp, p.f64("frequency")?, p.f64("x0")?)?);
            let cocycle = SchrodingerCocycle::new(spec, window(&[e1, e2]))?;
            increment_ergodic_background(&cocycle, e1, e2, p.usize("n-path")?, n_mc, seed)?
        }
        "birkhoff" => {
            let fam = family(p, &[e1, e2])?;
            let n = p.u64("n")?;
            let burn = n / 100;
            let b1 = birkhoff_rho(&fam, e1, n, burn, 16, seed)?;
            birkhoff_rho(&fam, e2, n, burn, 16, seed)?.minus(&b1)
        }
        other => return Err(usage(format!("key 'method': unknown method '{other}'"))),
    };
    if let Some(path) = out_path(p) {
        let csv = format!(
            "e1,e2,method,increment,stderr,n,seed\n{e1:.16e},{e2:.16e},{method},{:.16e},{:.16e},{},{seed}\n",
            est.value, est.stderr, est.n
        );
        write_file(&path, &csv)?;
    }
    Ok(format!("increment = {} ({method}, E1 = {e1}, E2 = {e2}, seed = {seed})", fmt_est(&est)))
}

pub fn stationary(p: &Params) -> CliResult<String> {
    let e = p.f64("energy")?;
    let seed = p.u64("seed")?;
    let direction = match p.str("direction")? {
        "forward" => Direction::Forward,
        "backward" => Direction::Backward,
        other => return Err(usage(format!("key 'direction': unknown direction '{other}'"))),
    };
    let fam = family(p, &[e])?;
    let est = estimate_stationary(&fam, e, direction, p.u64("n-burn")?, p.usize("n-samples")?, seed)?;
    if let Some(path) = out_path(p) {
        let mut csv = String::from("position,weight,n_samples,seed\n");
        for (x, w) in est.measure.atoms() {
            writeln!(csv, "{x:.16e},{w:.16e},{},{seed}", est.n_samples).unwrap();
        }
        write_file(&path, &csv)?;
    }
    Ok(format!(
        "stationary measure: {} atoms, residual {:.3e} ({}), seed = {seed}",
        est.measure.len(),
        est.residual,
        if est.converged { "converged" } else { "not converged" }
    ))
}

pub fn ids(p: &Params) -> CliResult<String> {
    let energies = p.grid("energies")?;
    let seed = p.u64("seed")?;
    let mut spec = match p.str("spec")? {
        "free" => PotentialSpec::free(),
        _ => PotentialSpec::anderson(law(p, "spec")?),
    };
    if let Some(amp) = p.opt_f64("background")? {
        spec = spec.with_background(cosine_background(amp, p.f64("frequency")?, p.f64("x0")?)?);
    }
    let method = p.str("method")?;
    let (want_spec, want_dyn) = match method {
        "spectral" => (true, false),
        "dynamical" => (false, true),
        "both" => (true, true),
        other => return Err(usage(format!("key 'method': unknown method '{other}'"))),
    };
    let spectral = if want_spec {
        Some(IdsCurve::spectral(&spec, &energies, p.usize("L")?, p.usize("replicas")?, seed)?)
    } else {
        None
    };
    let dynamical = if want_dyn {
        let anchor = p.opt_f64("anchor")?.unwrap_or(-2.5 - spec.bound());
        let cocycle = calibrate_ids_anchor(&SchrodingerCocycle::new(spec.clone(), window(&energies))?, anchor, seed)?;
        Some(IdsCurve::dynamical(&cocycle, &energies, p.u64("n")?, seed)?)
    } else {
        None
    };
    if let Some(path) = out_path(p) {
        let mut buf = Vec::new();
        let mut header = true;
        for curve in spectral.iter().chain(dynamical.iter()) {
            curve.write_csv(&mut buf, header)?;
            header = false;
        }
        std::fs::write(path, buf)?;
    }
    Ok(match (&spectral, &dynamical) {
        (Some(s), Some(d)) => {
            let diff = (0..energies.len()).map(|i| (s.ids_values[i] - d.ids_values[i]).abs()).fold(0.0, f64::max);
            let se = (0..energies.len()).map(|i| combine_stderr(&[s.stderr[i], d.stderr[i]])).fold(0.0, f64::max);
            format!(
                "IDS at {} energies: max |dynamical - spectral| = {diff:.3e}, max combined stderr {se:.3e}, seed = {seed}",
                energies.len()
            )
        }
        (Some(c), None) | (None, Some(c)) => {
            format!("IDS ({}) at {} energies, monotone: {}, seed = {seed}", c.method.as_str(), energies.len(), c.is_monotone(2.0))
        }
        (None, None) => unreachable!("at least one method is selected"),
    })
}

/// Rows `(energy, value, stderr)`; when a fourth column names a method
/// (IDS files), only the first method's rows are kept.
fn read_curve(path: &str) -> CliResult<Vec<(f64, f64, f64)>> {
    let file = std::fs::File::open(path).map_err(|e| usage(format!("key 'input': cannot open {path}: {e}")))?;
    let mut curve = Vec::new();
    let mut method: Option<String> = None;
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if line.trim().is_empty() || (i == 0 && fields[0].parse::<f64>().is_err()) {
            continue;
        }
        if fields.len() < 3 {
            return Err(CliError::Validation(format!("{path}:{}: expected energy,value,stderr", i + 1)));
        }
        if let Some(tag) = fields.get(3).filter(|t| t.parse::<f64>().is_err()) {
            if method.get_or_insert_with(|| tag.to_string()) != tag {
                continue;
            }
        }
        let num = |t: &str| {
            t.parse::<f64>().map_err(|_| CliError::Validation(format!("{path}:{}: bad number '{t}'", i + 1)))
        };
        curve.push((num(fields[0])?, num(fields[1])?, num(fields[2])?));
    }
    Ok(curve)
}

pub fn holder(p: &Params) -> CliResult<String> {
    let curve = read_curve(p.str("input")?)?;
    let fit = holder_fit(&curve)?;
    if let Some(path) = out_path(p) {
        let json = serde_json::to_string_pretty(&fit).map_err(rotnum_core::Error::from)?;
        write_file(&path, &json)?;
    }
    Ok(format!(
        "holder exponent {:.6} (R^2 {:.4}) from {} increments on [{:.3e}, {:.3e}], {} rejected",
        fit.fitted_alpha,
        fit.fit_r2,
        fit.pairs.len(),
        fit.window.0,
        fit.window.1,
        fit.rejected
    ))
}

pub fn example53(p: &Params) -> CliResult<String> {
    let config = Example53Config {
        s: p.f64("s")?,
        e_grid: p.grid("energies")?,
        n: p.u64("n")?,
        replicas: p.usize("replicas")?,
        seed: p.u64("seed")?,
    };
    let table = example53_run(&config)?;
    let summary = table.summary();
    if let Some(path) = out_path(p) {
        table.save(&path, path.with_extension("json"))?;
    }
    let holder = summary.holder.as_ref().map_or("n/a (need 6 energies)".to_string(), |h| format!("{:.3}", h.fitted_alpha));
    Ok(format!(
        "M_E slope {:.3} (R^2 {:.4}), compensated median {:.4}, spread {:.2}, holder exponent {holder}, seed = {}",
        summary.m_e_slope, summary.m_e_r2, summary.compensated_median, summary.compensated_spread, summary.seed
    ))
}
