//! Run configuration: per-command keys, config files and typed lookup.
//!
//! Config file grammar: one `key = value` per line, `#` starts a comment,
//! blank lines are ignored. Keys are the long flag names without dashes.
//! Precedence: built-in default < config file < command-line flag.

use std::collections::BTreeMap;
use std::path::Path;

use clap::{Arg, ArgMatches, Command};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("{0}")]
    Core(#[from] rotnum_core::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) | CliError::Core(_) | CliError::Io(_) => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub struct Key {
    pub name: &'static str,
    pub help: &'static str,
    pub default: Option<&'static str>,
}

const fn key(name: &'static str, help: &'static str, default: Option<&'static str>) -> Key {
    Key { name, help, default }
}

pub const GLOBAL_KEYS: &[Key] = &[
    key("seed", "Master seed", Some("0")),
    key("workers", "Worker threads (results do not depend on it)", None),
    key("out", "Output path (CSV; JSON side files use the same stem)", None),
];

const FAMILY_KEYS: &[Key] = &[
    key("family", "Fiber family: rigid | schrodinger | moebius | morse-smale", Some("schrodinger")),
    key("law", "Symbol law: uniform(lo,hi) | atoms((v,p),...) | bernoulli(p,v0,v1)", Some("atoms((0,1))")),
    key("labels", "Comma-separated labels of a periodic base (replaces the iid law)", None),
    key("background", "Amplitude of a cos(2 pi x) background over an irrational rotation", None),
    key("frequency", "Frequency of the background rotation", Some("0.41421356237309503")),
    key("x0", "Initial phase of the background rotation", Some("0")),
    key("stretch", "Log-stretch of the moebius family", Some("0.5")),
    key("s", "Strength of the morse-smale family, in (0, 1)", Some("0.5")),
];

pub struct CommandSpec {
    pub name: &'static str,
    pub about: &'static str,
    pub keys: &'static [Key],
    pub family: bool,
}

pub const COMMANDS: &[CommandSpec] = &[
    CommandSpec {
        name: "rotation",
        about: "Birkhoff estimate of the fibered rotation number",
        keys: &[
            key("energies", "Parameter grid lo:hi:count or a comma list", None),
            key("alpha", "Single parameter value (rotation angle for the rigid family)", None),
            key("n", "Steps per replica", Some("100000")),
            key("burn-in", "Discarded steps per replica", Some("0")),
            key("replicas", "Independent replicas", Some("16")),
        ],
        family: true,
    },
    CommandSpec {
        name: "increment",
        about: "Increment rho(E2) - rho(E1) by one of the measure formulas",
        keys: &[
            key("e1", "Lower parameter", None),
            key("e2", "Upper parameter", None),
            key("method", "stationary | product | periodic | background | birkhoff", Some("stationary")),
            key("n", "Birkhoff steps per replica", Some("1000000")),
            key("n-mc", "Monte Carlo samples (base points for background)", Some("100000")),
            key("n-samples", "Stationary-measure orbit length", Some("100000")),
            key("n-burn", "Stationary-measure burn-in", Some("10000")),
            key("n-field", "Atoms of sampled invariant fields", Some("100000")),
            key("n-path", "Path length for background fiber measures", Some("200")),
        ],
        family: true,
    },
    CommandSpec {
        name: "stationary",
        about: "Stationary measure of the random fiber maps (or their inverses)",
        keys: &[
            key("energy", "Parameter value", Some("0")),
            key("direction", "forward | backward", Some("forward")),
            key("n-samples", "Orbit length", Some("100000")),
            key("n-burn", "Burn-in", Some("10000")),
        ],
        family: true,
    },
    CommandSpec {
        name: "ids",
        about: "Integrated density of states by eigenvalue counting and/or rotation numbers",
        keys: &[
            key("spec", "Potential noise: free or a law, e.g. uniform(0,1)", Some("free")),
            key("background", "Amplitude of a cos(2 pi x) background", None),
            key("frequency", "Frequency of the background rotation", Some("0.41421356237309503")),
            key("x0", "Initial phase of the background rotation", Some("0")),
            key("method", "spectral | dynamical | both", Some("both")),
            key("energies", "Energy grid lo:hi:count or a comma list", None),
            key("L", "Box size for eigenvalue counting", Some("100000")),
            key("replicas", "Potentials for eigenvalue counting", Some("16")),
            key("n", "Steps per replica for the dynamical method", Some("1000000")),
            key("anchor", "Reference energy below the spectrum (default: 0.5 below the Gershgorin bound)", None),
        ],
        family: false,
    },
    CommandSpec {
        name: "holder",
        about: "Log-log Holder fit of a curve given as CSV (energy, value, stderr columns)",
        keys: &[key("input", "CSV file; the first three columns are energy, value, stderr", None)],
        family: false,
    },
    CommandSpec {
        name: "example53",
        about: "Morse-Smale counterexample: rho(E), M_E and compensated ratios",
        keys: &[
            key("s", "Strength of the Morse-Smale map", Some("0.5")),
            key("energies", "Energy grid lo:hi:count or a comma list", Some("1e-2,1e-3,1e-4,1e-5")),
            key("n", "Steps per replica", Some("10000000")),
            key("replicas", "Independent replicas", Some("16")),
        ],
        family: false,
    },
    CommandSpec {
        name: "validate",
        about: "Invariant suite: Phi identities, lift checks, cocycle relation, Sturm counts",
        keys: &[key("cases", "Randomized cases per check", Some("1000"))],
        family: false,
    },
];

impl CommandSpec {
    pub fn all_keys(&self) -> impl Iterator<Item = &Key> {
        let family: &[Key] = if self.family { FAMILY_KEYS } else { &[] };
        GLOBAL_KEYS.iter().chain(family).chain(self.keys.iter())
    }

    fn find(&self, name: &str) -> Option<&Key> {
        self.all_keys().find(|k| k.name == name)
    }
}

pub fn command_line() -> Command {
    let mut cmd = Command::new("rotnum")
        .about("Fibered rotation numbers, increment formulas and IDS experiments")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true);
    for spec in COMMANDS {
        let mut sub = Command::new(spec.name).about(spec.about).arg(
            Arg::new("config").long("config").value_name("PATH").help("key = value config file"),
        );
        // the first definition wins when a command repeats a family key
        let mut seen = Vec::new();
        for k in spec.all_keys() {
            if seen.contains(&k.name) {
                continue;
            }
            seen.push(k.name);
            let help = match k.default {
                Some(d) => format!("{} [default: {d}]", k.help),
                None => k.help.to_string(),
            };
            sub = sub.arg(Arg::new(k.name).long(k.name).value_name("VALUE").allow_hyphen_values(true).help(help));
        }
        cmd = cmd.subcommand(sub);
    }
    cmd
}

/// Resolved key/value parameters of one command.
#[derive(Clone, Debug)]
pub struct Params {
    pub command: &'static str,
    values: BTreeMap<String, String>,
}

pub fn parse_config_file(text: &str) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Usage(format!("config line {}: expected key = value", i + 1)));
        };
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl Params {
    pub fn resolve(spec: &CommandSpec, matches: &ArgMatches) -> CliResult<Params> {
        let mut values = BTreeMap::new();
        for k in spec.all_keys() {
            if let Some(d) = k.default {
                values.entry(k.name.to_string()).or_insert_with(|| d.to_string());
            }
        }
        if let Some(path) = matches.get_one::<String>("config") {
            let text = std::fs::read_to_string(Path::new(path))
                .map_err(|e| CliError::Usage(format!("cannot read config file {path}: {e}")))?;
            for (k, v) in parse_config_file(&text)? {
                if spec.find(&k).is_none() {
                    return Err(CliError::Usage(format!("unknown key '{k}' for command '{}'", spec.name)));
                }
                values.insert(k, v);
            }
        }
        for k in spec.all_keys() {
            if let Some(v) = matches.get_one::<String>(k.name) {
                values.insert(k.name.to_string(), v.clone());
            }
        }
        Ok(Params { command: spec.name, values })
    }

    pub fn opt(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn str(&self, key: &str) -> CliResult<&str> {
        self.opt(key)
            .ok_or_else(|| CliError::Usage(format!("missing required key '{key}' for command '{}'", self.command)))
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, raw: &str) -> CliResult<T> {
        raw.parse()
            .map_err(|_| CliError::Usage(format!("key '{key}': cannot parse '{raw}'")))
    }

    pub fn f64(&self, key: &str) -> CliResult<f64> {
        self.parsed(key, self.str(key)?)
    }

    pub fn opt_f64(&self, key: &str) -> CliResult<Option<f64>> {
        self.opt(key).map(|v| self.parsed(key, v)).transpose()
    }

    pub fn u64(&self, key: &str) -> CliResult<u64> {
        self.parsed(key, self.str(key)?)
    }

    pub fn usize(&self, key: &str) -> CliResult<usize> {
        self.parsed(key, self.str(key)?)
    }

    /// `lo:hi:count` (inclusive, evenly spaced) or `a,b,c`.
    pub fn grid(&self, key: &str) -> CliResult<Vec<f64>> {
        parse_grid(self.str(key)?).map_err(|msg| CliError::Usage(format!("key '{key}': {msg}")))
    }
}

pub fn parse_grid(s: &str) -> std::result::Result<Vec<f64>, String> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("cannot parse '{t}' as a number"));
    let parts: Vec<&str> = s.split(':').collect();
    match parts.len() {
        1 => s.split(',').map(num).collect(),
        3 => {
            let (lo, hi) = (num(parts[0])?, num(parts[1])?);
            let count: usize = parts[2].trim().parse().map_err(|_| format!("bad count '{}'", parts[2]))?;
            match count {
                0 => Err("grid count must be positive".into()),
                1 => Ok(vec![lo]),
                _ => Ok((0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect()),
            }
        }
        _ => Err(format!("'{s}' is neither lo:hi:count nor a comma list")),
    }
}
