//! `gisim`: command-line front end. Exit codes: 0 success, 1 I/O failure,
//! 2 usage error, 3 configuration error, 4 check failure.

mod args;
mod digest;
mod run;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

use args::Cli;
use run::Failure;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.threads {
        Some(t) => match rayon_pool(t) {
            Ok(pool) => pool.install(|| run::run(&cli.command)),
            Err(e) => Err(e),
        },
        None => run::run(&cli.command),
    };
    let out = match result {
        Ok(o) => o,
        Err(Failure::Config(msg)) => {
            eprintln!("gisim: {msg}");
            return ExitCode::from(3);
        }
        Err(Failure::Io(msg)) => {
            eprintln!("gisim: {msg}");
            return ExitCode::from(1);
        }
    };
    let written = match &cli.out {
        Some(path) => {
            std::fs::write(path, &out.text).map_err(|e| format!("{}: {e}", path.display()))
        }
        None => std::io::stdout()
            .write_all(out.text.as_bytes())
            .map_err(|e| e.to_string()),
    };
    if let Err(msg) = written {
        eprintln!("gisim: {msg}");
        return ExitCode::from(1);
    }
    if out.check_failed {
        eprintln!("gisim: simulator output differs from the reference");
        return ExitCode::from(4);
    }
    ExitCode::SUCCESS
}

fn rayon_pool(threads: usize) -> Result<rayon::ThreadPool, Failure> {
    if threads == 0 {
        return Err(Failure::Config("--threads must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Failure::Config(e.to_string()))
}
