//! `lyapgen`: finite-time Lyapunov functions and domain-of-attraction estimates.
//!
//! Settings come from three layers, lowest first: built-in defaults, the
//! JSON document given with `--config`, and command-line flags.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "lyapgen", version, about = "Finite-time Lyapunov functions and domain-of-attraction estimates")]
struct Cli {
    /// Run configuration (JSON); flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every randomized stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for output files.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
pub struct Target {
    /// Built-in system name or path to a system definition file.
    #[arg(long)]
    system: Option<String>,
    /// Analysis box in original coordinates, `l1,l2,..:u1,u2,..`.
    #[arg(long = "box", allow_hyphen_values = true)]
    bounds: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Locate and classify equilibria in the analysis box.
    Equilibria {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Choose a horizon and check the finite-time condition.
    Verify {
        #[command(flatten)]
        target: Target,
        /// Position of the equilibrium in the system's list.
        #[arg(long, conflicts_with = "eq_point")]
        eq_index: Option<usize>,
        /// Newton start for the equilibrium, `x1,x2,..`.
        #[arg(long, allow_hyphen_values = true)]
        eq_point: Option<String>,
        /// `identity`, `scaled:C`, `lyapunov[:Q]` or `matrix:a,b;c,d`.
        #[arg(long = "p")]
        p: Option<String>,
        /// Horizon; searched on the d grid when absent.
        #[arg(long)]
        d: Option<f64>,
        #[arg(long)]
        margin: Option<f64>,
        /// Level of V bounding the candidate set; largest level inside the box when absent.
        #[arg(long)]
        level: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Construct W from a certificate.
    Build {
        #[arg(long)]
        cert: PathBuf,
        /// Integrate V along the flow instead of the closed ray form.
        #[arg(long)]
        flow: bool,
        /// Expansion steps applied after construction.
        #[arg(long)]
        expand: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Find the largest certified level of W and export its contour.
    Doa {
        #[arg(long)]
        w: PathBuf,
        #[arg(long = "box", allow_hyphen_values = true)]
        bounds: Option<String>,
        /// Level bracket `lo,hi`.
        #[arg(long)]
        c_range: Option<String>,
        /// Expansion steps applied before the search.
        #[arg(long)]
        expand: Vec<f64>,
        /// Also require the level set inside this certificate's candidate set.
        #[arg(long)]
        within: Option<PathBuf>,
        /// Grid points per axis.
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        contour: Option<PathBuf>,
    },
    /// Compose W with x -> x + alpha*f(x).
    Expand {
        #[arg(long)]
        w: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate one trajectory and write it as CSV.
    Trace {
        #[command(flatten)]
        target: Target,
        /// Start point `x1,x2,..`.
        #[arg(long, allow_hyphen_values = true)]
        x0: String,
        #[arg(long, default_value_t = 50.0)]
        t: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the contour of a given level of W.
    Export {
        #[arg(long)]
        w: PathBuf,
        #[arg(long)]
        level: f64,
        #[arg(long = "box", allow_hyphen_values = true)]
        bounds: Option<String>,
        /// Grid points per axis in 2D, rays in 3D.
        #[arg(long)]
        resolution: Option<usize>,
        /// Keep every curve, not only the origin's component.
        #[arg(long)]
        all: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run worked examples end to end (`all` for every one).
    Reproduce {
        #[arg(required = true)]
        examples: Vec<String>,
        /// Also write the contour of every certified level.
        #[arg(long)]
        contours: bool,
    },
    /// Reload output files and recompute what they record.
    Check {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Err(msg) = commands::init_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }
    match commands::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
