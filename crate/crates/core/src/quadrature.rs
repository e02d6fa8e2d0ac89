//! Tensor Gauss-Legendre quadrature on boxes and box faces.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

use crate::polyalg::MonomialBasis;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QuadratureError {
    #[error("quadrature did not converge: last change {change:e} with {nodes} nodes per axis")]
    NotConverged { change: f64, nodes: usize },
}

/// Axis-aligned box in which some coordinates may be frozen (a face).
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub fixed: Vec<Option<f64>>,
}

impl Region {
    pub fn full(lo: &[f64], hi: &[f64]) -> Region {
        Region {
            lo: lo.to_vec(),
            hi: hi.to_vec(),
            fixed: vec![None; lo.len()],
        }
    }

    /// Face `x_axis = value` of the box.
    pub fn face(lo: &[f64], hi: &[f64], axis: usize, value: f64) -> Region {
        let mut r = Region::full(lo, hi);
        r.fixed[axis] = Some(value);
        r
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Tensor nodes with `q` Gauss points per free axis.
    pub fn nodes(&self, q: usize) -> Vec<(Vec<f64>, f64)> {
        let rule = GaussLegendre::new(NonZeroUsize::new(q).expect("q > 0"));
        let pairs = rule.as_node_weight_pairs();
        let mut out = vec![(Vec::with_capacity(self.dim()), 1.0)];
        for j in 0..self.dim() {
            if let Some(v) = self.fixed[j] {
                for (p, _) in &mut out {
                    p.push(v);
                }
                continue;
            }
            let (a, b) = (self.lo[j], self.hi[j]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (b + a);
            let mut next = Vec::with_capacity(out.len() * q);
            for (p, w) in &out {
                for &(t, wt) in pairs {
                    let mut np = p.clone();
                    np.push(mid + half * t);
                    next.push((np, w * wt * half));
                }
            }
            out = next;
        }
        out
    }
}

/// `int_region f` with `q` points per axis.
pub fn integrate(region: &Region, q: usize, f: impl Fn(&[f64]) -> f64) -> f64 {
    region.nodes(q).iter().map(|(p, w)| w * f(p)).sum()
}

/// Doubles the node count from `q0` until two successive values differ by
/// at most `tol` (relative to `1 + |value|`).
pub fn integrate_converged(
    region: &Region,
    q0: usize,
    q_max: usize,
    tol: f64,
    f: impl Fn(&[f64]) -> f64,
) -> Result<f64, QuadratureError> {
    let mut q = q0.max(1);
    let mut prev = integrate(region, q, &f);
    loop {
        let nq = q * 2;
        if nq > q_max {
            return Err(QuadratureError::NotConverged {
                change: f64::NAN,
                nodes: q,
            });
        }
        let cur = integrate(region, nq, &f);
        let change = (cur - prev).abs();
        if change <= tol * (1.0 + cur.abs()) {
            return Ok(cur);
        }
        if nq * 2 > q_max {
            return Err(QuadratureError::NotConverged { change, nodes: nq });
        }
        prev = cur;
        q = nq;
    }
}

/// All moments `int w(x) v(x)^alpha dx` for `alpha` in `basis`, where
/// `point(x)` returns `(v(x), w(x))`.
pub fn moments(
    region: &Region,
    q: usize,
    basis: &MonomialBasis,
    point: &impl Fn(&[f64]) -> (Vec<f64>, f64),
) -> Vec<f64> {
    let dim = basis.dim();
    let max_e = basis.degree() as usize;
    let mut acc = vec![0.0; basis.len()];
    let mut powers = vec![vec![1.0; max_e + 1]; dim];
    for (x, w) in region.nodes(q) {
        let (v, weight) = point(&x);
        debug_assert_eq!(v.len(), dim);
        for (k, &vk) in v.iter().enumerate() {
            for e in 1..=max_e {
                powers[k][e] = powers[k][e - 1] * vk;
            }
        }
        let ww = w * weight;
        for (slot, m) in acc.iter_mut().zip(basis.monomials()) {
            let mut t = ww;
            for (k, e) in m.exponents().enumerate() {
                if e > 0 {
                    t *= powers[k][e as usize];
                }
            }
            *slot += t;
        }
    }
    acc
}

/// [`moments`] with node doubling until the max-norm change is below `tol`.
pub fn moments_converged(
    region: &Region,
    basis: &MonomialBasis,
    tol: f64,
    point: &impl Fn(&[f64]) -> (Vec<f64>, f64),
) -> Result<Vec<f64>, QuadratureError> {
    let free = region.fixed.iter().filter(|f| f.is_none()).count();
    // keep the tensor grid below a few million nodes
    let q_max = match free {
        0 | 1 => 4096,
        2 => 512,
        3 => 128,
        _ => 32,
    };
    let mut q = 8usize.max(basis.degree() as usize);
    let mut prev = moments(region, q, basis, point);
    loop {
        let nq = 2 * q;
        if nq > q_max {
            return Err(QuadratureError::NotConverged {
                change: f64::NAN,
                nodes: q,
            });
        }
        let cur = moments(region, nq, basis, point);
        let change = cur
            .iter()
            .zip(&prev)
            .map(|(a, b)| (a - b).abs() / (1.0 + a.abs()))
            .fold(0.0, f64::max);
        if change <= tol {
            return Ok(cur);
        }
        prev = cur;
        q = nq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exactness() {
        let r = Region::full(&[0.0, -1.0], &[2.0, 1.0]);
        // int x^3 y^2 = (16/4)*(2/3)
        let v = integrate(&r, 4, |p| p[0].powi(3) * p[1].powi(2));
        assert!((v - 4.0 * 2.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn face_integration_freezes_axis() {
        let r = Region::face(&[0.0, 0.0], &[1.0, 1.0], 1, 1.0);
        let v = integrate(&r, 3, |p| p[0] * p[0] + p[1]);
        assert!((v - (1.0 / 3.0 + 1.0)).abs() < 1e-14);
    }

    #[test]
    fn converges_on_smooth_function() {
        let r = Region::full(&[0.0], &[1.0]);
        let v = integrate_converged(&r, 4, 1024, 1e-12, |p| p[0].exp()).unwrap();
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn moment_batch_matches_analytic() {
        let r = Region::full(&[0.0, 0.0], &[1.0, 1.0]);
        let b = MonomialBasis::graded(2, 4);
        let m = moments_converged(&r, &b, 1e-12, &|x| (x.to_vec(), 1.0)).unwrap();
        for (mi, v) in b.monomials().iter().zip(&m) {
            let want: f64 = mi.exponents().map(|k| 1.0 / (k + 1) as f64).product();
            assert!((v - want).abs() < 1e-14);
        }
    }
}
