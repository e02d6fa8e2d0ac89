//! `pdemom`: bounds, controllers and reference simulations for polynomial
//! PDE problems described in JSON problem files.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pdemom_sdp::Tolerances;

#[derive(Parser, Debug)]
#[command(name = "pdemom", version, about = "Moment relaxations of polynomial PDE problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Lower and upper bounds on the objective of an analysis problem.
    Analyze(Common),
    /// Cost lower bound and polynomial feedback law of a control problem.
    Control {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        kappa: KappaArgs,
    },
    /// Finite-volume run of a Burgers problem, closed loop when it has controls.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        kappa: KappaArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Run without the extracted controller.
        #[arg(long)]
        open_loop: bool,
    },
    /// Write the relaxation in SDPA sparse format.
    ExportSdpa(Common),
    /// Residuals of the moments generated by a closed-form solution.
    Certify {
        #[command(flatten)]
        common: Common,
        /// `y` as expressions in x1, x2, ...; one per unknown, separated by ';'.
        #[arg(long)]
        solution: String,
        /// Distributed inputs `u(x)`, separated by ';'.
        #[arg(long)]
        control: Option<String>,
    },
    /// Bounds over several relaxation degrees.
    Sweep(Common),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Problem file (JSON).
    #[arg(long)]
    pub problem: PathBuf,
    /// Relaxation degree; defaults to the value stored in the problem file.
    #[arg(long)]
    pub d: Option<u32>,
    /// Degree cap on derivative moments.
    #[arg(long)]
    pub d_tilde: Option<u32>,
    /// Degrees for `sweep`, e.g. 4,6,8.
    #[arg(long, value_delimiter = ',')]
    pub sweep: Vec<u32>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, env = "PDEMOM_TOL_GAP")]
    pub tol_gap: Option<f64>,
    #[arg(long, env = "PDEMOM_TOL_FEAS")]
    pub tol_feas: Option<f64>,
    #[arg(long, env = "PDEMOM_MAX_ITER")]
    pub max_iter: Option<usize>,
    #[arg(long, env = "PDEMOM_PSD_CAP")]
    pub psd_cap: Option<usize>,
    /// Also write the SDPs in SDPA format.
    #[arg(long)]
    pub export_sdpa: bool,
}

impl Common {
    pub fn tolerances(&self) -> Tolerances {
        let mut t = Tolerances::default();
        if let Some(v) = self.tol_gap {
            t.gap = v;
        }
        if let Some(v) = self.tol_feas {
            t.feas = v;
        }
        if let Some(v) = self.max_iter {
            t.max_iter = v;
        }
        if let Some(v) = self.psd_cap {
            t.psd_cap = v;
        }
        t
    }
}

#[derive(Args, Debug, Clone, Copy)]
pub struct KappaArgs {
    /// Controller degree (default d/2).
    #[arg(long)]
    pub kappa_degree: Option<u32>,
}

#[derive(Args, Debug, Clone, Copy)]
pub struct GridArgs {
    #[arg(long, default_value_t = 100)]
    pub nx: usize,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze(c) => commands::analyze(c),
        Command::Control { common, kappa } => commands::control(common, *kappa),
        Command::Simulate {
            common,
            kappa,
            grid,
            open_loop,
        } => commands::simulate(common, *kappa, *grid, *open_loop),
        Command::ExportSdpa(c) => commands::export_sdpa(c),
        Command::Certify {
            common,
            solution,
            control,
        } => commands::certify(common, solution, control.as_deref()),
        Command::Sweep(c) => commands::sweep(c),
    };
    match result {
        Ok(outcome) => ExitCode::from(outcome.code()),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
