use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use pdemom::assembly::AssembledSdp;
use pdemom_sdp::{Sense, Solution, Status};

/// Text report accumulated line by line.
#[derive(Default)]
pub struct Report {
    text: String,
}

impl Report {
    pub fn line(&mut self, s: impl AsRef<str>) {
        self.text.push_str(s.as_ref());
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

/// Output directory with an index of written files.
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> std::io::Result<OutDir> {
        std::fs::create_dir_all(root)?;
        Ok(OutDir {
            root: root.to_path_buf(),
        })
    }

    pub fn write(&self, name: &str, contents: &str) -> std::io::Result<()> {
        std::fs::write(self.root.join(name), contents)
    }
}

pub fn sense_name(sense: Sense) -> &'static str {
    match sense {
        Sense::Minimize => "min",
        Sense::Maximize => "max",
    }
}

/// Status with the "unverified" mark on anything short of optimal.
pub fn status_label(status: Status) -> String {
    if status == Status::Optimal {
        status.to_string()
    } else {
        format!("{status} (unverified)")
    }
}

pub fn value(v: f64) -> String {
    format!("{v:.10}")
}

/// Deterministic summary of the relaxation size.
pub fn relaxation_line(a: &AssembledSdp) -> String {
    let mut s = format!(
        "relaxation: d = {}, d_tilde = {}, largest block {}, {} moments, {} rows",
        a.d,
        a.d_tilde,
        a.largest_block(),
        a.problem.n_vars,
        a.problem.equalities.len()
    );
    let _ = write!(
        s,
        " ({} trivial, {} duplicate, {} capped rows dropped)",
        a.trivial_rows, a.duplicate_rows, a.capped_rows
    );
    if a.unbounded_support {
        s.push_str("; warning: unbounded Y or Z, convergence in d not guaranteed");
    }
    s
}

/// Solver diagnostics of one side, without timings.
pub fn diagnostics(sol: &Solution) -> String {
    let r = &sol.report;
    format!(
        "dual {} rel. gap {:.3e}, max residual {:.3e}, min eigenvalue {:.3e}, {} iterations",
        value(r.dual_objective),
        r.relative_gap,
        r.max_equality_residual,
        r.min_block_eigenvalue,
        r.iterations
    )
}

pub const BOUND_HEADER: &str =
    "side,status,verified,value,dual,relative_gap,max_equality_residual,min_block_eigenvalue,iterations\n";

pub fn bound_row(side: &str, sol: &Result<Solution, String>) -> String {
    match sol {
        Ok(s) => {
            let r = &s.report;
            format!(
                "{side},{},{},{:e},{:e},{:e},{:e},{:e},{}\n",
                r.status,
                r.status == Status::Optimal,
                r.primal_objective,
                r.dual_objective,
                r.relative_gap,
                r.max_equality_residual,
                r.min_block_eigenvalue,
                r.iterations
            )
        }
        Err(_) => format!("{side},error,false,,,,,,\n"),
    }
}
