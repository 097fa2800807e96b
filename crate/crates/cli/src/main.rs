//! `rotnum`: command-line experiments for fibered rotation numbers.

mod commands;
mod config;
mod validate;

use clap::error::ErrorKind;

use config::{command_line, CliError, CliResult, Params, COMMANDS};

fn dispatch(params: &Params) -> CliResult<String> {
    match params.command {
        "rotation" => commands::rotation(params),
        "increment" => commands::increment(params),
        "stationary" => commands::stationary(params),
        "ids" => commands::ids(params),
        "holder" => commands::holder(params),
        "example53" => commands::example53(params),
        "validate" => validate::run(params),
        other => Err(CliError::Usage(format!("unknown command '{other}'"))),
    }
}

fn execute(params: &Params) -> CliResult<String> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = params.opt("workers") {
        let w: usize = w.parse().map_err(|_| CliError::Usage(format!("key 'workers': cannot parse '{w}'")))?;
        if w == 0 {
            return Err(CliError::Usage("key 'workers': must be at least 1".into()));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| CliError::Usage(format!("worker pool: {e}")))?;
    pool.install(|| dispatch(params))
}

fn main() {
    let matches = match command_line().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let (name, sub) = matches.subcommand().expect("a subcommand is required");
    let spec = COMMANDS.iter().find(|c| c.name == name).expect("registered command");
    let result = Params::resolve(spec, sub).and_then(|p| execute(&p));
    match result {
        Ok(summary) => println!("{summary}"),
        Err(e) => {
            eprintln!("rotnum {name}: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
