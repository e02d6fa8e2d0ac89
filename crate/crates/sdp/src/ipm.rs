//! Infeasible-start primal-dual path following with Nesterov-Todd scaling and
//! Mehrotra predictor-corrector steps, on the equality-reduced LMI problem
//!
//! ```text
//! minimize c_t^T t   s.t.   X = A_t(t) - C' >= 0
//! maximize <C', Z>   s.t.   A_t^*(Z) = c_t,  Z >= 0
//! ```

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use crate::presolve::{presolve, Presolved};
use crate::problem::{symmetrize_upper, ConicProblem, Sense};
use crate::SdpError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub gap: f64,
    pub feas: f64,
    pub psd: f64,
    pub max_iter: usize,
    pub psd_cap: usize,
    /// Feasibility level accepted for a near-optimal report.
    pub near_feas: f64,
    /// Relative gap accepted for a near-optimal report.
    pub near_gap: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            gap: 1e-8,
            feas: 1e-8,
            psd: 1e-9,
            max_iter: 200,
            psd_cap: 500,
            near_feas: 1e-6,
            near_gap: 1e-3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Optimal,
    NearOptimal,
    InfeasibleCertificate,
    Unbounded,
    NumericalFailure,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Optimal => "optimal",
            Status::NearOptimal => "near-optimal",
            Status::InfeasibleCertificate => "infeasible-certificate",
            Status::Unbounded => "unbounded",
            Status::NumericalFailure => "numerical-failure",
        }
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One interior-point iterate, in the internal minimization sense.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterInfo {
    pub iter: usize,
    pub pobj: f64,
    pub dobj: f64,
    pub pinf: f64,
    pub dinf: f64,
    pub mu: f64,
    /// `<X, Z>`
    pub xz: f64,
    /// `<R_p, Z>` with `R_p = A_t(t) - C' - X`
    pub rpz: f64,
    /// `r_d^T t` with `r_d = A_t^*(Z) - c_t`
    pub rdt: f64,
    pub alpha_p: f64,
    pub alpha_d: f64,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub status: Status,
    pub sense: Sense,
    /// `c^T s + offset` at the returned point.
    pub primal_objective: f64,
    /// Dual objective in the user's sense: a lower bound for minimization,
    /// an upper bound for maximization, whenever the dual iterate is feasible.
    pub dual_objective: f64,
    pub gap: f64,
    pub relative_gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub max_equality_residual: f64,
    pub min_block_eigenvalue: f64,
    pub iterations: usize,
    pub wall_time: Duration,
    pub certificate_norm: Option<f64>,
    pub equality_rank: usize,
    pub dropped_rows: usize,
    pub free_variables: usize,
    pub trace: Vec<IterInfo>,
    pub message: String,
}

impl SolveReport {
    /// The certified side of the bracket (dual value).
    pub fn bound(&self) -> f64 {
        self.dual_objective
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub s: Vec<f64>,
    pub z: Vec<DMatrix<f64>>,
    pub report: SolveReport,
}

/// Per-block data in "full" form: both `(i, j)` and `(j, i)` listed.
struct BlockData {
    size: usize,
    upper: Vec<(usize, usize, usize, f64)>,
    full: Vec<(usize, usize, usize, f64)>,
    cprime: DMatrix<f64>,
}

struct Scaling {
    lambda: DVector<f64>,
    /// `R^{-1}`
    rinv: DMatrix<f64>,
    /// `R^{-T}`
    rinv_t: DMatrix<f64>,
    winv: DMatrix<f64>,
}

struct Direction {
    dt: DVector<f64>,
    dx: Vec<DMatrix<f64>>,
    dz: Vec<DMatrix<f64>>,
    dxs: Vec<DMatrix<f64>>,
    dzs: Vec<DMatrix<f64>>,
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn sym(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

struct Reduced {
    blocks: Vec<BlockData>,
    pre: Presolved,
    n_s: usize,
    c_int: DVector<f64>,
    c_t: DVector<f64>,
    /// `c_int^T s0`
    c_s0: f64,
}

impl Reduced {
    /// Linear part of every block at a moment-space vector.
    fn amap(&self, v: &DVector<f64>) -> Vec<DMatrix<f64>> {
        self.blocks
            .iter()
            .map(|b| {
                let mut m = DMatrix::zeros(b.size, b.size);
                for &(i, j, k, c) in &b.upper {
                    m[(i, j)] += c * v[k];
                }
                symmetrize_upper(&mut m);
                m
            })
            .collect()
    }

    /// `A^*(M)` in moment space.
    fn adjoint(&self, ms: &[DMatrix<f64>]) -> DVector<f64> {
        let mut out = DVector::zeros(self.n_s);
        for (b, m) in self.blocks.iter().zip(ms) {
            for &(i, j, k, c) in &b.full {
                out[k] += c * m[(i, j)];
            }
        }
        out
    }

    fn adjoint_t(&self, ms: &[DMatrix<f64>]) -> DVector<f64> {
        self.pre.null_basis.tr_mul(&self.adjoint(ms))
    }

    fn amap_t(&self, t: &DVector<f64>) -> Vec<DMatrix<f64>> {
        self.amap(&(&self.pre.null_basis * t))
    }

    /// `H_t = N^T H_s N` with `H_s[k, l] = <A_k, W^{-1} A_l W^{-1}>`.
    fn schur(&self, winv: &[DMatrix<f64>]) -> DMatrix<f64> {
        let n = self.n_s;
        let mut hs = vec![0.0f64; n * n];
        for (b, w) in self.blocks.iter().zip(winv) {
            let ws = w.as_slice();
            let m = b.size;
            for &(p, q, k, a) in &b.full {
                let row = &mut hs[k * n..(k + 1) * n];
                for &(i, j, l, c) in &b.full {
                    // tr(E_pq W E_ij W) = W_qi W_jp
                    row[l] += a * c * ws[q + i * m] * ws[j + p * m];
                }
            }
        }
        let hs = DMatrix::from_vec(n, n, hs);
        let nb = &self.pre.null_basis;
        let hn = &hs * nb;
        let mut h = nb.tr_mul(&hn);
        sym(&mut h);
        h
    }
}

fn factor(h: &DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = nalgebra::Cholesky::new(h.clone()) {
        return Some(c);
    }
    let scale = (0..h.nrows()).fold(0.0f64, |a, i| a.max(h[(i, i)].abs())).max(1e-300);
    let mut delta = 1e-14 * scale;
    while delta <= 1e-6 * scale {
        let mut hr = h.clone();
        for i in 0..h.nrows() {
            hr[(i, i)] += delta;
        }
        if let Some(c) = nalgebra::Cholesky::new(hr) {
            return Some(c);
        }
        delta *= 100.0;
    }
    None
}

fn scaling(x: &DMatrix<f64>, z: &DMatrix<f64>) -> Option<Scaling> {
    let lx = nalgebra::Cholesky::new(x.clone())?.l();
    let lz = nalgebra::Cholesky::new(z.clone())?.l();
    let m = lz.tr_mul(&lx);
    let svd = m.svd(true, true);
    let u = svd.u?;
    let v = svd.v_t?.transpose();
    let lambda = svd.singular_values;
    if lambda.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return None;
    }
    let n = lambda.len();
    let mut isq = DMatrix::zeros(n, n);
    let mut inv = DMatrix::zeros(n, n);
    for i in 0..n {
        isq[(i, i)] = 1.0 / lambda[i].sqrt();
        inv[(i, i)] = 1.0 / lambda[i];
    }
    let rinv_t = &lz * &u * &isq;
    // R^{-1} = Lambda^{1/2} V^T L_X^{-1} equals (R^{-T})^T
    let rinv = rinv_t.transpose();
    let _ = v;
    let mut winv = &lz * &u * &inv * u.transpose() * lz.transpose();
    sym(&mut winv);
    Some(Scaling {
        lambda,
        rinv,
        rinv_t,
        winv,
    })
}

/// Largest step `alpha` with `Lambda + alpha * D >= 0`.
fn max_step(lambda: &DVector<f64>, d: &DMatrix<f64>) -> f64 {
    let n = lambda.len();
    if n == 0 {
        return f64::INFINITY;
    }
    let mut m = d.clone();
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] /= (lambda[i] * lambda[j]).sqrt();
        }
    }
    sym(&mut m);
    let e = min_eig(&m);
    if e < 0.0 {
        -1.0 / e
    } else {
        f64::INFINITY
    }
}

fn direction(
    red: &Reduced,
    sc: &[Scaling],
    rc: &[DMatrix<f64>],
    rp: &[DMatrix<f64>],
    rd: &DVector<f64>,
    chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
) -> Direction {
    let mut dtil = Vec::with_capacity(sc.len());
    let mut pmat = Vec::with_capacity(sc.len());
    let mut qmat = Vec::with_capacity(sc.len());
    for ((s, r), rpk) in sc.iter().zip(rc).zip(rp) {
        let n = s.lambda.len();
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                d[(i, j)] = 2.0 * r[(i, j)] / (s.lambda[i] + s.lambda[j]);
            }
        }
        sym(&mut d);
        let mut p = &s.rinv_t * &d * &s.rinv;
        sym(&mut p);
        let q = &p - &s.winv * rpk * &s.winv;
        dtil.push(d);
        pmat.push(p);
        qmat.push(q);
    }
    let g = red.adjoint_t(&qmat) + rd;
    let dt = chol.solve(&g);
    let adt = red.amap_t(&dt);
    let mut dx = Vec::with_capacity(sc.len());
    let mut dz = Vec::with_capacity(sc.len());
    let mut dxs = Vec::with_capacity(sc.len());
    let mut dzs = Vec::with_capacity(sc.len());
    for k in 0..sc.len() {
        let dxk = &adt[k] + &rp[k];
        let mut dxsk = &sc[k].rinv * &dxk * sc[k].rinv.transpose();
        sym(&mut dxsk);
        let dzsk = &dtil[k] - &dxsk;
        let mut dzk = &pmat[k] - &sc[k].winv * &dxk * &sc[k].winv;
        sym(&mut dzk);
        dx.push(dxk);
        dz.push(dzk);
        dxs.push(dxsk);
        dzs.push(dzsk);
    }
    Direction { dt, dx, dz, dxs, dzs }
}

/// Solve the problem. Deterministic: no randomness, single-threaded.
pub fn solve(p: &ConicProblem, tol: &Tolerances) -> Result<Solution, SdpError> {
    let start = Instant::now();
    p.validate()?;
    let total = p.psd_dimension();
    if total > tol.psd_cap {
        return Err(SdpError::PsdCapExceeded {
            total,
            cap: tol.psd_cap,
        });
    }
    let pre = presolve(p, 1e-11)?;
    let sign = match p.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let n_s = p.n_vars;
    let c_int = DVector::from_iterator(n_s, p.c.iter().map(|c| sign * c));
    let c_t = pre.null_basis.tr_mul(&c_int);
    let c_s0 = c_int.dot(&pre.s0);

    let mut blocks = Vec::with_capacity(p.blocks.len());
    for b in &p.blocks {
        let mut upper = Vec::with_capacity(b.entries.len());
        let mut full = Vec::with_capacity(2 * b.entries.len());
        for e in &b.entries {
            upper.push((e.i, e.j, e.var, e.coef));
            full.push((e.i, e.j, e.var, e.coef));
            if e.i != e.j {
                full.push((e.j, e.i, e.var, e.coef));
            }
        }
        let mut cmat = DMatrix::zeros(b.size, b.size);
        for &(i, j, v) in &b.constant {
            cmat[(i, j)] += v;
        }
        symmetrize_upper(&mut cmat);
        blocks.push(BlockData {
            size: b.size,
            upper,
            full,
            cprime: cmat,
        });
    }
    let mut red = Reduced {
        blocks,
        pre,
        n_s,
        c_int,
        c_t,
        c_s0,
    };
    // C' = C - A(s0)
    let as0 = red.amap(&red.pre.s0);
    for (b, a) in red.blocks.iter_mut().zip(&as0) {
        b.cprime = &b.cprime - a;
    }

    let n_t = red.pre.n_free();
    let n_blocks = red.blocks.len();
    let n_total: usize = red.blocks.iter().map(|b| b.size).sum();
    let cp_norm = red
        .blocks
        .iter()
        .map(|b| b.cprime.norm_squared())
        .sum::<f64>()
        .sqrt();
    let ct_norm = red.c_t.norm();

    let mut report = SolveReport {
        status: Status::NumericalFailure,
        sense: p.sense,
        primal_objective: f64::NAN,
        dual_objective: f64::NAN,
        gap: f64::NAN,
        relative_gap: f64::NAN,
        primal_infeasibility: f64::NAN,
        dual_infeasibility: f64::NAN,
        max_equality_residual: f64::NAN,
        min_block_eigenvalue: f64::NAN,
        iterations: 0,
        wall_time: Duration::ZERO,
        certificate_norm: None,
        equality_rank: red.pre.rank,
        dropped_rows: red.pre.dropped_rows,
        free_variables: n_t,
        trace: Vec::new(),
        message: String::new(),
    };

    let finish = |mut report: SolveReport, s: DVector<f64>, z: Vec<DMatrix<f64>>, red: &Reduced| {
        let sv: Vec<f64> = s.iter().copied().collect();
        report.primal_objective = p.objective(&sv);
        report.max_equality_residual = p
            .equalities
            .iter()
            .map(|r| (r.dot(&sv) - r.rhs).abs())
            .fold(0.0, f64::max);
        report.min_block_eigenvalue = p
            .blocks
            .iter()
            .map(|b| min_eig(&b.evaluate(&sv)))
            .fold(f64::INFINITY, f64::min);
        if report.dual_objective.is_nan() {
            report.dual_objective = report.primal_objective;
        }
        report.gap = sign * (report.primal_objective - report.dual_objective);
        report.relative_gap = report.gap.abs()
            / (1.0 + report.primal_objective.abs() + report.dual_objective.abs());
        report.wall_time = start.elapsed();
        let _ = red;
        Solution { s: sv, z, report }
    };

    // No cone: a linear program over an affine set.
    if n_blocks == 0 || n_t == 0 {
        let s = red.pre.s0.clone();
        report.iterations = 0;
        if n_t > 0 && ct_norm > 1e-12 {
            report.status = Status::Unbounded;
            report.message = "objective decreases along a free direction".into();
            report.dual_objective = f64::NEG_INFINITY * sign;
        } else {
            let sv: Vec<f64> = s.iter().copied().collect();
            let ok = p
                .blocks
                .iter()
                .all(|b| min_eig(&b.evaluate(&sv)) >= -tol.psd);
            report.status = if ok {
                Status::Optimal
            } else {
                Status::InfeasibleCertificate
            };
            report.dual_objective = p.objective(&sv);
        }
        let z = red.blocks.iter().map(|b| DMatrix::zeros(b.size, b.size)).collect();
        return Ok(finish(report, s, z, &red));
    }

    // Starting point.
    let mut bj_norm: f64 = 0.0;
    let mut ratio: f64 = 0.0;
    for j in 0..n_t {
        let col = red.pre.null_basis.column(j).clone_owned();
        let a = red.amap(&col);
        let nrm = a.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt();
        bj_norm = bj_norm.max(nrm);
        ratio = ratio.max((1.0 + red.c_t[j].abs()) / (1.0 + nrm));
    }
    let cmax = red
        .blocks
        .iter()
        .map(|b| b.cprime.norm() / (b.size as f64).sqrt())
        .fold(0.0, f64::max);
    let tau_x = 10.0 * cmax.max(1.0);
    let tau_z = (10.0 * ratio).max(1.0) * (n_total as f64).sqrt().max(1.0);
    let mut t = DVector::<f64>::zeros(n_t);
    let mut x: Vec<DMatrix<f64>> = red
        .blocks
        .iter()
        .map(|b| DMatrix::identity(b.size, b.size) * tau_x)
        .collect();
    let mut z: Vec<DMatrix<f64>> = red
        .blocks
        .iter()
        .map(|b| DMatrix::identity(b.size, b.size) * tau_z)
        .collect();

    let mut best: Option<(f64, DVector<f64>, Vec<DMatrix<f64>>, f64, f64, f64)> = None;
    let mut stall = 0usize;
    let gamma = 0.98;

    for it in 0..tol.max_iter {
        report.iterations = it;
        let s = red.pre.lift(&t);
        let ax = red.amap_t(&t);
        let rp: Vec<DMatrix<f64>> = (0..n_blocks)
            .map(|k| &ax[k] - &red.blocks[k].cprime - &x[k])
            .collect();
        let rd = red.adjoint_t(&z) - &red.c_t;
        let pobj = red.c_int.dot(&s);
        let dobj = red.c_s0
            + red
                .blocks
                .iter()
                .zip(&z)
                .map(|(b, zk)| inner(&b.cprime, zk))
                .sum::<f64>();
        let xz: f64 = x.iter().zip(&z).map(|(a, b)| inner(a, b)).sum();
        let rpz: f64 = rp.iter().zip(&z).map(|(a, b)| inner(a, b)).sum();
        let rdt = rd.dot(&t);
        let mu = xz / n_total as f64;
        let rp_norm = rp.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt();
        let pinf = rp_norm / (1.0 + cp_norm);
        let dinf = rd.norm() / (1.0 + ct_norm);
        let rel_gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());

        let merit = pinf.max(dinf).max(rel_gap);
        let improved = best.as_ref().map_or(true, |b| merit < b.0);
        if improved {
            best = Some((merit, t.clone(), z.clone(), dobj, pinf, dinf));
        }

        let mut info = IterInfo {
            iter: it,
            pobj: pobj + sign * p.offset,
            dobj: dobj + sign * p.offset,
            pinf,
            dinf,
            mu,
            xz,
            rpz,
            rdt,
            alpha_p: 0.0,
            alpha_d: 0.0,
        };

        if pinf <= tol.feas && dinf <= tol.feas && rel_gap <= tol.gap {
            let sv: Vec<f64> = s.iter().copied().collect();
            let lam = p
                .blocks
                .iter()
                .map(|b| min_eig(&b.evaluate(&sv)))
                .fold(f64::INFINITY, f64::min);
            if lam >= -tol.psd {
                report.trace.push(info);
                report.status = Status::Optimal;
                report.dual_objective = sign * (dobj + sign * p.offset);
                report.primal_infeasibility = pinf;
                report.dual_infeasibility = dinf;
                report.message = format!("converged in {it} iterations");
                return Ok(finish(report, s, z, &red));
            }
        }

        // Farkas-type certificates.
        let cz: f64 = red
            .blocks
            .iter()
            .zip(&z)
            .map(|(b, zk)| inner(&b.cprime, zk))
            .sum();
        let atz = red.adjoint_t(&z);
        if cz > 0.0 && atz.norm() <= 1e-8 * cz && cz > 1e6 {
            let cert = atz.norm() / cz;
            report.trace.push(info);
            report.status = Status::InfeasibleCertificate;
            report.certificate_norm = Some(cert);
            report.dual_objective = sign * f64::INFINITY;
            report.primal_infeasibility = pinf;
            report.dual_infeasibility = dinf;
            report.message = "dual ray found: the LMI is infeasible".into();
            return Ok(finish(report, s, z, &red));
        }
        let ct_t = red.c_t.dot(&t);
        if pinf <= tol.feas && ct_t < -1e8 * (1.0 + ct_norm) {
            let ray: Vec<DMatrix<f64>> = ax.iter().map(|m| m / (-ct_t)).collect();
            let lam = ray.iter().map(min_eig).fold(f64::INFINITY, f64::min);
            if lam >= -1e-8 {
                report.trace.push(info);
                report.status = Status::Unbounded;
                report.certificate_norm = Some(1.0 / (-ct_t));
                report.dual_objective = sign * f64::NEG_INFINITY;
                report.message = "primal ray found: objective unbounded".into();
                return Ok(finish(report, s, z, &red));
            }
        }

        // Scaling and Schur complement.
        let mut sc = Vec::with_capacity(n_blocks);
        for k in 0..n_blocks {
            match scaling(&x[k], &z[k]) {
                Some(s) => sc.push(s),
                None => {
                    report.message = format!("lost positive definiteness in block {k}");
                    break;
                }
            }
        }
        if sc.len() < n_blocks {
            report.trace.push(info);
            break;
        }
        let winv: Vec<DMatrix<f64>> = sc.iter().map(|s| s.winv.clone()).collect();
        let h = red.schur(&winv);
        let chol = match factor(&h) {
            Some(c) => c,
            None => {
                report.message = "Schur complement is not positive definite".into();
                report.trace.push(info);
                break;
            }
        };

        // Predictor.
        let rc_aff: Vec<DMatrix<f64>> = sc
            .iter()
            .map(|s| {
                let n = s.lambda.len();
                DMatrix::from_fn(n, n, |i, j| if i == j { -s.lambda[i] * s.lambda[i] } else { 0.0 })
            })
            .collect();
        let aff = direction(&red, &sc, &rc_aff, &rp, &rd, &chol);
        let mut ap = 1.0f64;
        let mut ad = 1.0f64;
        for k in 0..n_blocks {
            ap = ap.min(max_step(&sc[k].lambda, &aff.dxs[k]));
            ad = ad.min(max_step(&sc[k].lambda, &aff.dzs[k]));
        }
        let mut xz_aff = 0.0;
        for k in 0..n_blocks {
            let xa = &x[k] + &aff.dx[k] * ap;
            let za = &z[k] + &aff.dz[k] * ad;
            xz_aff += inner(&xa, &za);
        }
        let mu_aff = xz_aff / n_total as f64;
        let sigma = if mu > 0.0 {
            (mu_aff / mu).clamp(0.0, 1.0).powi(3)
        } else {
            0.0
        };

        // Corrector.
        let rc: Vec<DMatrix<f64>> = (0..n_blocks)
            .map(|k| {
                let s = &sc[k];
                let n = s.lambda.len();
                let mut cross = &aff.dxs[k] * &aff.dzs[k];
                cross = (&cross + cross.transpose()) * 0.5;
                DMatrix::from_fn(n, n, |i, j| {
                    let diag = if i == j {
                        sigma * mu - s.lambda[i] * s.lambda[i]
                    } else {
                        0.0
                    };
                    diag - cross[(i, j)]
                })
            })
            .collect();
        let dir = direction(&red, &sc, &rc, &rp, &rd, &chol);
        let mut ap = 1.0f64;
        let mut ad = 1.0f64;
        for k in 0..n_blocks {
            ap = ap.min(gamma * max_step(&sc[k].lambda, &dir.dxs[k]));
            ad = ad.min(gamma * max_step(&sc[k].lambda, &dir.dzs[k]));
        }
        info.alpha_p = ap;
        info.alpha_d = ad;
        report.trace.push(info);

        if !(ap.is_finite() && ad.is_finite()) || dir.dt.iter().any(|v| !v.is_finite()) {
            report.message = "non-finite search direction".into();
            break;
        }
        t += &dir.dt * ap;
        for k in 0..n_blocks {
            x[k] += &dir.dx[k] * ap;
            z[k] += &dir.dz[k] * ad;
            sym(&mut x[k]);
            sym(&mut z[k]);
        }

        if ap < 1e-8 && ad < 1e-8 {
            stall += 1;
        } else if improved {
            stall = 0;
        } else {
            stall += 1;
        }
        if stall >= 15 {
            report.message = "no progress over 15 iterations".into();
            break;
        }
        report.iterations = it + 1;
    }

    // Not converged: fall back to the best iterate seen.
    let (merit, bt, bz, bdobj, bpinf, bdinf) = best.expect("at least one iterate");
    let s = red.pre.lift(&bt);
    report.primal_infeasibility = bpinf;
    report.dual_infeasibility = bdinf;
    report.dual_objective = sign * (bdobj + sign * p.offset);
    let feasible = bpinf <= tol.near_feas && bdinf <= tol.near_feas;
    report.status = if feasible && merit <= tol.near_gap.max(tol.near_feas) {
        Status::NearOptimal
    } else {
        Status::NumericalFailure
    };
    if report.message.is_empty() {
        report.message = "iteration limit reached".into();
    }
    Ok(finish(report, s, bz, &red))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::PsdBlock;

    fn toy() -> ConicProblem {
        // min s0 s.t. [[s0, s1], [s1, s2]] >= 0, s2 = 1, s1 = 1/2
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
    fn schur_toy_optimum() {
        let sol = solve(&toy(), &Tolerances::default()).unwrap();
        assert_eq!(sol.report.status, Status::Optimal);
        assert!((sol.report.primal_objective - 0.25).abs() < 1e-7);
        assert!((sol.s[0] - 0.25).abs() < 1e-7);
    }

    #[test]
    fn single_scalar_block() {
        let mut p = ConicProblem::new(1, Sense::Minimize);
        p.c = vec![1.0];
        let mut b = PsdBlock::new("s", 1);
        b.push(0, 0, 0, 1.0);
        p.blocks.push(b);
        let sol = solve(&p, &Tolerances::default()).unwrap();
        assert_eq!(sol.report.status, Status::Optimal);
        assert!(sol.report.primal_objective.abs() < 1e-7);
    }

    #[test]
    fn maximization_sense() {
        // max s s.t. 1 - s >= 0
        let mut p = ConicProblem::new(1, Sense::Maximize);
        p.c = vec![1.0];
        let mut b = PsdBlock::new("s", 1);
        b.push(0, 0, 0, -1.0);
        b.push_constant(0, 0, -1.0);
        p.blocks.push(b);
        let sol = solve(&p, &Tolerances::default()).unwrap();
        assert_eq!(sol.report.status, Status::Optimal);
        assert!((sol.report.primal_objective - 1.0).abs() < 1e-7);
        assert!((sol.report.dual_objective - 1.0).abs() < 1e-7);
    }

    #[test]
    fn infeasible_lmi() {
        // s >= 1 and -s >= 0
        let mut p = ConicProblem::new(1, Sense::Minimize);
        p.c = vec![1.0];
        let mut b = PsdBlock::new("a", 1);
        b.push(0, 0, 0, 1.0);
        b.push_constant(0, 0, 1.0);
        p.blocks.push(b);
        let mut b = PsdBlock::new("b", 1);
        b.push(0, 0, 0, -1.0);
        p.blocks.push(b);
        let sol = solve(&p, &Tolerances::default()).unwrap();
        assert_ne!(sol.report.status, Status::Optimal);
        assert_ne!(sol.report.status, Status::NearOptimal);
    }

    #[test]
    fn unbounded_lmi() {
        // min s s.t. -s >= 0
        let mut p = ConicProblem::new(1, Sense::Minimize);
        p.c = vec![1.0];
        let mut b = PsdBlock::new("a", 1);
        b.push(0, 0, 0, -1.0);
        p.blocks.push(b);
        let sol = solve(&p, &Tolerances::default()).unwrap();
        assert_ne!(sol.report.status, Status::Optimal);
    }

    #[test]
    fn psd_cap_enforced() {
        let tol = Tolerances {
            psd_cap: 1,
            ..Tolerances::default()
        };
        assert!(matches!(
            solve(&toy(), &tol),
            Err(SdpError::PsdCapExceeded { total: 2, cap: 1 })
        ));
    }
}
