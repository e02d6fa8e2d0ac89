//! Analytic SDP families with closed-form optima.

use nalgebra::DMatrix;
use pdemom_sdp::{ConicProblem, PsdBlock, Sense};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &g * g.transpose() + DMatrix::identity(n, n) * 0.5
}

/// `min s0  s.t. [[s0, v^T], [v, B]] >= 0`; optimum `v^T B^{-1} v`.
/// With `as_variables`, `v` and `B` are free variables pinned by equalities.
pub fn schur_instance(rng: &mut ChaCha8Rng, as_variables: bool) -> (ConicProblem, f64) {
    let n = rng.random_range(1..=4);
    let b = random_spd(rng, n);
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let vv = nalgebra::DVector::from_vec(v.clone());
    let truth = vv.dot(&b.clone().cholesky().unwrap().solve(&vv));
    let mut blk = PsdBlock::new("schur", n + 1);
    let mut n_vars = 1;
    let mut eqs = Vec::new();
    blk.push(0, 0, 0, 1.0);
    for i in 0..n {
        if as_variables {
            blk.push(0, i + 1, n_vars, 1.0);
            eqs.push((n_vars, v[i]));
            n_vars += 1;
        } else {
            blk.push_constant(0, i + 1, -v[i]);
        }
        for j in i..n {
            if as_variables {
                blk.push(i + 1, j + 1, n_vars, 1.0);
                eqs.push((n_vars, b[(i, j)]));
                n_vars += 1;
            } else {
                blk.push_constant(i + 1, j + 1, -b[(i, j)]);
            }
        }
    }
    let mut p = ConicProblem::new(n_vars, Sense::Minimize);
    p.c[0] = 1.0;
    for (k, val) in eqs {
        p.add_equality(vec![(k, 1.0)], val);
    }
    p.blocks.push(blk);
    (p, truth)
}

/// `min <C, X>  s.t. tr X = 1, X >= 0`; optimum `lambda_min(C)`.
pub fn trace_instance(rng: &mut ChaCha8Rng) -> (ConicProblem, f64) {
    let n = rng.random_range(2..=5);
    let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let c = (&g + g.transpose()) * 0.5;
    let truth = c.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
    let mut blk = PsdBlock::new("X", n);
    let mut p = ConicProblem::new(n * (n + 1) / 2, Sense::Minimize);
    let mut k = 0;
    let mut trace = Vec::new();
    for i in 0..n {
        for j in i..n {
            blk.push(i, j, k, 1.0);
            p.c[k] = if i == j { c[(i, i)] } else { 2.0 * c[(i, j)] };
            if i == j {
                trace.push((k, 1.0));
            }
            k += 1;
        }
    }
    p.add_equality(trace, 1.0);
    p.blocks.push(blk);
    (p, truth)
}

pub fn library() -> Vec<(String, ConicProblem, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut out = Vec::new();
    for k in 0..25 {
        let (p, t) = schur_instance(&mut rng, k % 2 == 1);
        out.push((format!("schur-{k}"), p, t));
    }
    for k in 0..25 {
        let (p, t) = trace_instance(&mut rng);
        out.push((format!("trace-{k}"), p, t));
    }
    out
}
