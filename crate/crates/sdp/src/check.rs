use crate::problem::ConicProblem;
use crate::SdpError;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    /// `||A s - b||_inf`
    pub max_equality_residual: f64,
    /// Row attaining the maximum, if there are rows.
    pub worst_row: Option<usize>,
    pub block_min_eigenvalues: Vec<f64>,
    pub min_block_eigenvalue: f64,
    pub objective: f64,
}

impl CheckReport {
    pub fn is_feasible(&self, tol_feas: f64, tol_psd: f64) -> bool {
        self.max_equality_residual <= tol_feas && self.min_block_eigenvalue >= -tol_psd
    }
}

/// Residuals of a candidate moment vector against the problem data.
pub fn check_solution(p: &ConicProblem, s: &[f64]) -> Result<CheckReport, SdpError> {
    if s.len() != p.n_vars {
        return Err(SdpError::DimensionMismatch {
            got: s.len(),
            want: p.n_vars,
        });
    }
    p.validate()?;
    let mut max_res = 0.0f64;
    let mut worst_row = None;
    for (r, row) in p.equalities.iter().enumerate() {
        let res = (row.dot(s) - row.rhs).abs();
        if worst_row.is_none() || res > max_res {
            max_res = res;
            worst_row = Some(r);
        }
    }
    let block_min_eigenvalues: Vec<f64> = p
        .blocks
        .iter()
        .map(|b| {
            if b.size == 0 {
                return f64::INFINITY;
            }
            b.evaluate(s)
                .symmetric_eigenvalues()
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let min_block_eigenvalue = block_min_eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    Ok(CheckReport {
        max_equality_residual: max_res,
        worst_row,
        block_min_eigenvalues,
        min_block_eigenvalue,
        objective: p.objective(s),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{PsdBlock, Sense};

    fn toy() -> ConicProblem {
        let mut p = ConicProblem::new(3, Sense::Minimize);
        p.c = vec![1.0, 0.0, 0.0];
        let mut b = PsdBlock::new("M", 2);
        b.push(0, 0, 0, 1.0);
        b.push(0, 1, 1, 1.0);
        b.push(1, 1, 2, 1.0);
        p.blocks.push(b);
        p.add_equality(vec![(2, 1.0)], 1.0);
        p.add_equality(vec![(1, 1.0)], 0.5);
        p
    }

    #[test]
    fn zero_vector_residual_is_rhs_norm() {
        let r = check_solution(&toy(), &[0.0; 3]).unwrap();
        assert_eq!(r.max_equality_residual, 1.0);
        assert_eq!(r.worst_row, Some(0));
    }

    #[test]
    fn perturbation_shows_up_in_residual() {
        let r = check_solution(&toy(), &[0.25, 0.5 + 1e-3, 1.0]).unwrap();
        assert!(r.max_equality_residual >= 1e-3 - 1e-15);
        assert_eq!(r.worst_row, Some(1));
    }

    #[test]
    fn optimum_is_feasible_and_singular() {
        let r = check_solution(&toy(), &[0.25, 0.5, 1.0]).unwrap();
        assert!(r.is_feasible(1e-12, 1e-12));
        assert!(r.min_block_eigenvalue.abs() < 1e-12);
        assert_eq!(r.objective, 0.25);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(check_solution(&toy(), &[0.0; 2]).is_err());
    }
}
