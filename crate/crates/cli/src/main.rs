use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nullcurve_cli::commands::{
    cmd_check, cmd_cy, cmd_mesh, cmd_rh, cmd_sl2, cmd_zigzag, to_json, CliError, DriverOverrides, MeshOverrides,
    RhOverrides,
};
use nullcurve::transforms::PolarGrid;
use nullcurve_cli::export::{Format, Target};

#[derive(Parser)]
#[command(name = "nullcurve", version, about = "Null curves in C^3: deformations, drivers and meshes")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve one Riemann-Hilbert problem.
    Rh {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n_max: Option<usize>,
    },
    /// Run the bounded complete disc driver.
    Cy {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write zero in the wall_ms column.
        #[arg(long)]
        no_timing: bool,
    },
    /// Run the bounded third coordinate driver.
    Zigzag {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        no_timing: bool,
    },
    /// Export a surface mesh from a curve or an SL_2 grid.
    Mesh {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, value_parser = parse_target)]
        target: Option<Target>,
        #[arg(long, value_parser = parse_format)]
        format: Option<Format>,
        #[arg(long)]
        n_r: Option<usize>,
        #[arg(long)]
        n_theta: Option<usize>,
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        translate_z3: Option<f64>,
    },
    /// Sample the SL_2 null curve of a curve on a polar grid.
    Sl2 {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, default_value_t = 32)]
        n_r: usize,
        #[arg(long, default_value_t = 128)]
        n_theta: usize,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        translate_z3: f64,
    },
    /// Run the invariant checks on a curve or SL_2 grid file.
    Check {
        #[arg(long)]
        input: PathBuf,
    },
}

fn parse_target(s: &str) -> Result<Target, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown target {s}"))
}

fn parse_format(s: &str) -> Result<Format, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown format {s}"))
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::from(e.code as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                return fail(CliError::input("InvalidArguments", e.to_string()));
            }
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let r = match cli.cmd {
        Cmd::Rh { config, out, eps, seed, n_max } => cmd_rh(&config, &out, &RhOverrides { eps, seed, n_max }),
        Cmd::Cy { config, out, steps, seed, no_timing } => {
            cmd_cy(&config, &out, &DriverOverrides { steps, seed, no_timing })
        }
        Cmd::Zigzag { config, out, steps, seed, no_timing } => {
            cmd_zigzag(&config, &out, &DriverOverrides { steps, seed, no_timing })
        }
        Cmd::Mesh { input, config, out, target, format, n_r, n_theta, radius, translate_z3 } => {
            let ov = MeshOverrides { target, format, n_r, n_theta, radius, translate_z3 };
            cmd_mesh(&input, config.as_deref(), &out, &ov).map(|p| println!("{}", p.display()))
        }
        Cmd::Sl2 { input, out, n_r, n_theta, radius, translate_z3 } => PolarGrid::new(n_r, n_theta, radius)
            .map_err(|e| CliError::input("InvalidGrid", e.to_string()))
            .and_then(|g| cmd_sl2(&input, &out, g, translate_z3))
            .map(|p| println!("{}", p.display())),
        Cmd::Check { input } => match cmd_check(&input) {
            Ok(report) => {
                print!("{}", to_json(&report));
                Ok(())
            }
            Err((report, e)) => {
                if !report.checks.is_empty() {
                    print!("{}", to_json(&report));
                }
                Err(e)
            }
        },
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}
