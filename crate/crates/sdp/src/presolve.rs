//! Elimination of the equality constraints: `A s = b  <=>  s = s0 + N t`.

use nalgebra::{DMatrix, DVector};

use crate::problem::ConicProblem;
use crate::SdpError;

/// Affine parametrization of the solution set of the equality rows.
#[derive(Clone, Debug)]
pub struct Presolved {
    pub s0: DVector<f64>,
    /// `n_vars x n_free`; column `q` is `e_{free[q]}` minus pivot corrections.
    pub null_basis: DMatrix<f64>,
    pub free: Vec<usize>,
    pub rank: usize,
    /// Rows found linearly dependent on the others.
    pub dropped_rows: usize,
    /// Largest right-hand-side mismatch among the dropped rows.
    pub max_dependent_residual: f64,
}

impl Presolved {
    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    /// `s0 + N t`.
    pub fn lift(&self, t: &DVector<f64>) -> DVector<f64> {
        &self.s0 + &self.null_basis * t
    }
}

/// Gauss-Jordan elimination with complete pivoting on the row-equilibrated
/// system. `tol` is the relative pivot / consistency threshold.
pub fn presolve(p: &ConicProblem, tol: f64) -> Result<Presolved, SdpError> {
    let n = p.n_vars;
    let m = p.equalities.len();
    let mut a = DMatrix::<f64>::zeros(m, n);
    let mut b = DVector::<f64>::zeros(m);
    for (r, row) in p.equalities.iter().enumerate() {
        for &(k, c) in &row.coeffs {
            a[(r, k)] += c;
        }
        b[r] = row.rhs;
    }
    for r in 0..m {
        let scale = a.row(r).iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if scale > 0.0 {
            a.row_mut(r).scale_mut(1.0 / scale);
            b[r] /= scale;
        }
    }

    // row permutation is done in place; column permutation tracked in `cols`
    let mut cols: Vec<usize> = (0..n).collect();
    let mut rank = 0usize;
    while rank < m.min(n) {
        let mut best = 0.0;
        let mut piv = (rank, rank);
        for r in rank..m {
            for c in rank..n {
                let v = a[(r, cols[c])].abs();
                if v > best {
                    best = v;
                    piv = (r, c);
                }
            }
        }
        if best <= tol {
            break;
        }
        let (pr, pc) = piv;
        a.swap_rows(rank, pr);
        b.swap_rows(rank, pr);
        cols.swap(rank, pc);
        let col = cols[rank];
        let inv = 1.0 / a[(rank, col)];
        a.row_mut(rank).scale_mut(inv);
        b[rank] *= inv;
        a[(rank, col)] = 1.0;
        let pivot_row = a.row(rank).clone_owned();
        let pivot_b = b[rank];
        for r in 0..m {
            if r == rank {
                continue;
            }
            let f = a[(r, col)];
            if f != 0.0 {
                for c in rank..n {
                    let cc = cols[c];
                    a[(r, cc)] -= f * pivot_row[cc];
                }
                a[(r, col)] = 0.0;
                b[r] -= f * pivot_b;
            }
        }
        rank += 1;
    }

    let mut max_dependent_residual: f64 = 0.0;
    let b_scale = 1.0 + (0..m).fold(0.0f64, |acc, r| acc.max(b[r].abs()));
    for r in rank..m {
        let res = b[r].abs();
        max_dependent_residual = max_dependent_residual.max(res);
        if res > tol.sqrt().max(1e-7) * b_scale {
            return Err(SdpError::InconsistentEqualities { row: r, residual: res });
        }
    }

    let pivots: Vec<usize> = cols[..rank].to_vec();
    let mut free: Vec<usize> = cols[rank..].to_vec();
    free.sort_unstable();
    let mut s0 = DVector::<f64>::zeros(n);
    for (r, &pc) in pivots.iter().enumerate() {
        s0[pc] = b[r];
    }
    let mut null_basis = DMatrix::<f64>::zeros(n, free.len());
    for (q, &f) in free.iter().enumerate() {
        null_basis[(f, q)] = 1.0;
        for (r, &pc) in pivots.iter().enumerate() {
            null_basis[(pc, q)] = -a[(r, f)];
        }
    }
    Ok(Presolved {
        s0,
        null_basis,
        free,
        rank,
        dropped_rows: m - rank,
        max_dependent_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Sense;

    #[test]
    fn parametrizes_solution_set() {
        let mut p = ConicProblem::new(4, Sense::Minimize);
        p.add_equality(vec![(0, 1.0), (1, 2.0)], 3.0);
        p.add_equality(vec![(1, 1.0), (2, -1.0)], 1.0);
        p.add_equality(vec![(0, 2.0), (1, 4.0)], 6.0); // dependent
        let pre = presolve(&p, 1e-12).unwrap();
        assert_eq!(pre.rank, 2);
        assert_eq!(pre.dropped_rows, 1);
        assert_eq!(pre.n_free(), 2);
        for t in [[0.0, 0.0], [1.0, -2.0], [0.3, 7.0]] {
            let s = pre.lift(&DVector::from_row_slice(&t));
            for row in &p.equalities {
                assert!((row.dot(s.as_slice()) - row.rhs).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn detects_inconsistency() {
        let mut p = ConicProblem::new(2, Sense::Minimize);
        p.add_equality(vec![(0, 1.0), (1, 1.0)], 1.0);
        p.add_equality(vec![(0, 1.0), (1, 1.0)], 2.0);
        assert!(matches!(
            presolve(&p, 1e-12),
            Err(SdpError::InconsistentEqualities { .. })
        ));
    }

    #[test]
    fn no_equalities_keeps_all_variables_free() {
        let p = ConicProblem::new(3, Sense::Minimize);
        let pre = presolve(&p, 1e-12).unwrap();
        assert_eq!(pre.free, vec![0, 1, 2]);
        assert_eq!(pre.null_basis, DMatrix::identity(3, 3));
    }
}
