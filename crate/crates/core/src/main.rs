use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use cmc_heights::harness::{self, ExperimentConfig};
use cmc_heights::model::curvature_report;
use cmc_heights::rotational::hemisphere_height;
use cmc_heights::solver::grid::{DomainGrid, DomainShape};
use cmc_heights::solver::{graph_height, solve_dirichlet, SolverConfig};
use cmc_heights::stability::cylinder_stability;
use cmc_heights::{Point3, Result, SpaceParams};

#[derive(Parser)]
#[command(name = "cmc-heights", version, about = "Height estimates for constant mean curvature graphs in E(kappa, tau)")]
struct Cli {
    /// Machine-readable JSON output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct Space {
    #[arg(long, allow_negative_numbers = true)]
    kappa: f64,
    #[arg(long, allow_negative_numbers = true)]
    tau: f64,
}

impl Space {
    fn params(self) -> Result<SpaceParams> {
        SpaceParams::new(self.kappa, self.tau)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Curvature of the model at a point.
    Curvature {
        #[command(flatten)]
        space: Space,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        x: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        y: f64,
    },
    /// Dirichlet problem for a constant mean curvature graph with boundary in a section.
    Solve {
        #[command(flatten)]
        space: Space,
        #[arg(long = "H")]
        h: f64,
        /// Disk radius (centred at the origin).
        #[arg(long, conflicts_with = "square")]
        radius: Option<f64>,
        /// Side of the square [0, s]².
        #[arg(long)]
        square: Option<f64>,
        /// Lattice cells per side.
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        boundary: f64,
        /// Write the solution as JSON.
        #[arg(long)]
        save: Option<PathBuf>,
    },
    /// Height of the upper hemisphere of the rotational H-sphere.
    Sphere {
        #[command(flatten)]
        space: Space,
        #[arg(long = "H")]
        h: f64,
    },
    /// Stability of the vertical cylinder of mean curvature H.
    Cylinder {
        #[command(flatten)]
        space: Space,
        #[arg(long = "H")]
        h: f64,
    },
    /// Run an experiment described by a JSON config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Override the worker count of the config.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run the invariant suite.
    Check,
}

fn round9(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Curvature { space, x, y } => {
            let r = curvature_report(Point3::new(x, y, 0.0), &space.params()?)?;
            if cli.json {
                println!(
                    "{}",
                    json!({"scalar": r.scalar, "ricci": r.ricci, "ricci_frame": r.ricci_diag_frame, "killing_residual": r.killing_residual})
                );
            } else {
                println!("scalar {:?}", round9(r.scalar));
                println!("ricci(E1,E1) ricci(E2,E2) ricci(E3,E3) {:?} {:?} {:?}", round9(r.ricci_diag_frame[0]), round9(r.ricci_diag_frame[1]), round9(r.ricci_diag_frame[2]));
            }
        }
        Command::Solve { space, h, radius, square, n, boundary, save } => {
            let shape = match (radius, square) {
                (_, Some(s)) => DomainShape::square(s),
                (r, None) => DomainShape::disk(r.unwrap_or(0.5)),
            };
            let grid = DomainGrid::new(shape, n)?;
            let sol = solve_dirichlet(&grid, boundary, h, &space.params()?, &SolverConfig::default())?;
            let height = graph_height(&sol)?;
            if let Some(path) = save {
                sol.save_json(&path)?;
            }
            if cli.json {
                println!(
                    "{}",
                    json!({"H": h, "n": n, "height": height, "iterations": sol.iterations, "residual_max": sol.residual_max, "min_abs_nu": sol.min_abs_nu})
                );
            } else {
                println!("height {height:e} iterations {} residual {:e} min|nu| {:e}", sol.iterations, sol.residual_max, sol.min_abs_nu);
            }
        }
        Command::Sphere { space, h } => {
            let height = hemisphere_height(h, &space.params()?)?;
            if cli.json {
                println!("{}", json!({"H": h, "hemisphere_height": height}));
            } else {
                println!("{:?}", round9(height));
            }
        }
        Command::Cylinder { space, h } => {
            let s = cylinder_stability(h, &space.params()?)?;
            if cli.json {
                println!("{}", serde_json::to_string(&s)?);
            } else {
                let verdict = if s.stable { "stable" } else { "unstable" };
                println!("{verdict} margin {:?} spectral {:?}", round9(s.margin), round9(s.spectral_lambda_min));
            }
        }
        Command::Sweep { config, workers } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(w) = workers {
                cfg.workers = w;
            }
            let records = harness::run_experiment(&cfg)?;
            if cli.json {
                println!("{}", serde_json::to_string(&records)?);
            } else {
                print!("{}", harness::plot_table(&records));
            }
        }
        Command::Check => {
            let checks = harness::run_checks()?;
            let ok = checks.iter().all(|c| c.passed);
            if cli.json {
                println!("{}", serde_json::to_string(&checks)?);
            } else {
                for c in &checks {
                    let tag = if c.passed { "PASS" } else { "FAIL" };
                    println!("{tag} {} value {:e} threshold {:e}", c.name, c.value, c.threshold);
                }
            }
            return Ok(ok);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
