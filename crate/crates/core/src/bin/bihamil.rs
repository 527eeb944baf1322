use bihamil::scenario::{exit_code, registry, run_construct, run_convergence, run_obstruct, write_samples, Report, Scenario};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Builds and checks local bi-Hamiltonian structures for 3D vector fields.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Construct the pair on a stream tube and evaluate every identity.
    Construct {
        #[command(flatten)]
        common: Common,
        /// Write tube and residual samples as CSV into this directory.
        #[arg(long)]
        dump_samples: Option<PathBuf>,
    },
    /// Run the Chern-number and torus-integral obstruction probes.
    Obstruct {
        #[command(flatten)]
        common: Common,
    },
    /// Residuals under joint refinement, with fitted slopes.
    Converge {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 4)]
        levels: usize,
    },
    /// List the named fields.
    Fields,
}

#[derive(Args)]
struct Common {
    scenario: PathBuf,
    /// Print the report as one JSON document.
    #[arg(long)]
    json: bool,
    /// Multiply every upper-bound tolerance by this factor.
    #[arg(long)]
    tolerance_scale: Option<f64>,
}

fn load(c: &Common) -> Result<Scenario, bihamil::Error> {
    let mut sc = Scenario::load(&c.scenario)?;
    if let Some(k) = c.tolerance_scale {
        if !(k > 0.0 && k.is_finite()) {
            return Err(bihamil::Error::Scenario(format!("tolerance scale must be positive, got {k}")));
        }
        sc.tolerances = sc.tolerances.scaled(k);
    }
    Ok(sc)
}

fn emit(report: &Report, json: bool) -> ExitCode {
    if json {
        println!("{}", report.to_json());
    } else {
        print!("{}", report.to_text());
    }
    ExitCode::from(exit_code(report) as u8)
}

fn load_error(e: bihamil::Error, json: bool) -> ExitCode {
    if json {
        let body = serde_json::json!({ "pass": false, "error": { "kind": e.kind(), "message": e.to_string() } });
        println!("{body}");
    } else {
        eprintln!("error: {e}");
    }
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(n) = std::env::var("BIHAMIL_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => eprintln!("warning: ignoring BIHAMIL_THREADS={n:?}"),
        }
    }
    match cli.command {
        Command::Fields => {
            for f in registry() {
                println!("{:<14} {}", f.name, f.description);
            }
            ExitCode::SUCCESS
        }
        Command::Construct { common, dump_samples } => {
            let sc = match load(&common) {
                Ok(s) => s,
                Err(e) => return load_error(e, common.json),
            };
            let out = run_construct(&sc);
            if let Some(dir) = dump_samples {
                match write_samples(&out, &dir) {
                    Ok(paths) => paths.iter().for_each(|p| eprintln!("wrote {}", p.display())),
                    Err(e) => eprintln!("warning: could not write samples: {e}"),
                }
            }
            emit(&out.report, common.json)
        }
        Command::Obstruct { common } => {
            let sc = match load(&common) {
                Ok(s) => s,
                Err(e) => return load_error(e, common.json),
            };
            let dir = common.scenario.parent().map(Path::to_path_buf);
            emit(&run_obstruct(&sc, dir.as_deref()), common.json)
        }
        Command::Converge { common, levels } => {
            let sc = match load(&common) {
                Ok(s) => s,
                Err(e) => return load_error(e, common.json),
            };
            emit(&run_convergence(&sc, levels), common.json)
        }
    }
}
