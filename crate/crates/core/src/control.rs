//! Polynomial feedback laws recovered from control-measure moments by
//! moment matching: find `kappa` with `l_nu(b) = l_mu(b * kappa)` for every
//! monomial `b` of degree at most the controller degree.

use std::collections::HashMap;
use std::fmt::Write;

use nalgebra::{DMatrix, DVector};

use crate::assembly::{AssembledSdp, MeasureKey};
use crate::moments::MomentVector;
use crate::polyalg::{mono_basis, MultiIndex, Polynomial, VarKind};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExtractError {
    #[error("variable {0} of the control measure is missing from the occupation measure")]
    DimensionMismatch(String),
    #[error("occupation moments vanish; nothing to match against")]
    ZeroMass,
    #[error("moment {0:?} needed for the matching system is not available")]
    MissingMoment(Vec<u32>),
    #[error("the relaxation has no control measure {0}")]
    NoControl(String),
}

/// `kappa = beta^T c` over the space of the control measure.
#[derive(Clone, Debug)]
pub struct ControllerPolynomial {
    pub kappa: Polynomial,
    pub degree: u32,
    /// `||M c - s_nu||_2` of the matching system.
    pub residual: f64,
    /// `lambda_max / lambda_min` of the moment matrix (infinite if singular).
    pub condition: f64,
    /// Eigenvalues kept by the pseudoinverse.
    pub rank: usize,
}

impl ControllerPolynomial {
    pub fn coefficients(&self) -> Vec<(MultiIndex, f64)> {
        mono_basis(self.kappa.space().dim(), self.degree)
            .into_iter()
            .map(|m| {
                let c = self.kappa.coefficient(&m);
                (m, c)
            })
            .collect()
    }

    /// CSV rows `alpha_1,...,alpha_n,coefficient` with a header.
    pub fn to_csv(&self) -> String {
        coefficient_csv(&self.kappa, self.degree)
    }
}

fn coefficient_csv(p: &Polynomial, degree: u32) -> String {
    let space = p.space();
    let mut out = String::new();
    for v in space.variables() {
        let _ = write!(out, "{},", v.name);
    }
    out.push_str("coefficient\n");
    for m in mono_basis(space.dim(), degree) {
        for e in m.exponents() {
            let _ = write!(out, "{e},");
        }
        let _ = writeln!(out, "{:e}", p.coefficient(&m));
    }
    out
}

/// Relative eigenvalue cutoff of the pseudoinverse.
pub const CUTOFF: f64 = 1e-9;

/// Controller of degree `d / 2`.
pub fn extract(s_mu: &MomentVector, s_nu: &MomentVector, d: u32) -> Result<ControllerPolynomial, ExtractError> {
    extract_with_degree(s_mu, s_nu, d / 2)
}

/// Moment matching with an explicit controller degree `r`; `s_mu` needs
/// moments up to `2 r` and `s_nu` up to `r`. Variables of `s_mu` absent
/// from `s_nu` (derivatives) are marginalized out.
pub fn extract_with_degree(s_mu: &MomentVector, s_nu: &MomentVector, r: u32) -> Result<ControllerPolynomial, ExtractError> {
    extract_with_cutoff(s_mu, s_nu, r, CUTOFF)
}

/// As [`extract_with_degree`], keeping eigenvalues above `cutoff * lambda_max`.
pub fn extract_with_cutoff(
    s_mu: &MomentVector,
    s_nu: &MomentVector,
    r: u32,
    cutoff: f64,
) -> Result<ControllerPolynomial, ExtractError> {
    let nu_space = s_nu.space();
    let mu_space = s_mu.space();
    let map: Vec<usize> = (0..nu_space.dim())
        .map(|v| {
            mu_space
                .index_of(nu_space.name(v))
                .ok_or_else(|| ExtractError::DimensionMismatch(nu_space.name(v).to_string()))
        })
        .collect::<Result<_, _>>()?;
    // marginal of mu on the control-measure variables
    let mut marginal: HashMap<Vec<u32>, f64> = HashMap::new();
    for (m, &v) in s_mu.basis().monomials().iter().zip(s_mu.values()) {
        let local: Vec<u32> = map.iter().map(|&w| m.exponent(w)).collect();
        if local.iter().sum::<u32>() == m.degree() {
            marginal.insert(local, v);
        }
    }
    let dim = nu_space.dim();
    let rows = mono_basis(dim, r);
    let k = rows.len();
    let mu_at = |m: &MultiIndex| -> Result<f64, ExtractError> {
        let e: Vec<u32> = m.exponents().collect();
        marginal.get(&e).copied().ok_or(ExtractError::MissingMoment(e))
    };
    let mass = mu_at(&MultiIndex::zero(dim))?;
    if mass.abs() == 0.0 {
        return Err(ExtractError::ZeroMass);
    }
    let mut mat = DMatrix::zeros(k, k);
    for (i, a) in rows.iter().enumerate() {
        for (j, b) in rows.iter().enumerate().skip(i) {
            let v = mu_at(&a.add(b))?;
            mat[(i, j)] = v;
            mat[(j, i)] = v;
        }
    }
    let mut rhs = DVector::zeros(k);
    for (i, a) in rows.iter().enumerate() {
        rhs[i] = s_nu
            .get(a)
            .ok_or_else(|| ExtractError::MissingMoment(a.exponents().collect()))?;
    }
    let eig = mat.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &l| a.max(l.abs()));
    if lmax == 0.0 {
        return Err(ExtractError::ZeroMass);
    }
    let lmin = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &l| a.min(l));
    let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
    let qtb = eig.eigenvectors.tr_mul(&rhs);
    let mut y = DVector::zeros(k);
    let mut rank = 0;
    for i in 0..k {
        let l = eig.eigenvalues[i];
        if l > cutoff * lmax {
            y[i] = qtb[i] / l;
            rank += 1;
        }
    }
    let c = &eig.eigenvectors * y;
    let residual = (&mat * &c - &rhs).norm();
    let mut kappa = Polynomial::zero(nu_space);
    for (m, &ci) in rows.iter().zip(c.iter()) {
        kappa.add_term(m.clone(), ci);
    }
    Ok(ControllerPolynomial {
        kappa,
        degree: r,
        residual,
        condition,
        rank,
    })
}

/// Clamp to `[lo, hi]`.
pub fn saturate(value: f64, (lo, hi): (f64, f64)) -> f64 {
    value.clamp(lo, hi)
}

/// Feedback law for one input channel in physical units.
#[derive(Clone, Debug)]
pub struct Controller {
    pub channel: usize,
    /// Boundary piece for boundary controls.
    pub piece: Option<usize>,
    /// Density on the unit box with values in `[0, 1]` when feasible.
    pub unit: ControllerPolynomial,
    /// `u(x, y)` in physical coordinates, over `x1.., y1..`.
    pub physical: Polynomial,
    pub bounds: (f64, f64),
}

impl Controller {
    /// Raw feedback value at physical `(x, y)`.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut pt = Vec::with_capacity(x.len() + y.len());
        pt.extend_from_slice(x);
        pt.extend_from_slice(y);
        self.physical.eval(&pt)
    }

    /// Coefficients of the physical law.
    pub fn to_csv(&self) -> String {
        coefficient_csv(&self.physical, self.unit.degree)
    }

    /// Feedback value clamped to the input box.
    pub fn eval_saturated(&self, x: &[f64], y: &[f64]) -> f64 {
        saturate(self.eval(x, y), self.bounds)
    }
}

/// `a + (b - a) kappa(t(x), y)`; `x` variables are identified by name, so
/// face measures without the fixed coordinate work unchanged.
fn physical_law(unit: &Polynomial, lo: &[f64], len: &[f64], (a, b): (f64, f64)) -> Polynomial {
    let space = unit.space().clone();
    let images: Vec<Polynomial> = (0..space.dim())
        .map(|v| {
            let var = Polynomial::var(&space, v);
            match space.kind(v) {
                VarKind::X => {
                    let x = space.name(v)[1..].parse::<usize>().expect("x index") - 1;
                    (&var - &Polynomial::constant(&space, lo[x])).scale(1.0 / len[x])
                }
                _ => var,
            }
        })
        .collect();
    let k = unit.compose(&images).expect("same space");
    &Polynomial::constant(&space, a) + &k.scale(b - a)
}

/// Every distributed and boundary controller of a solved control relaxation,
/// each of degree `degree` (default `d / 2`).
pub fn controllers(sdp: &AssembledSdp, s: &[f64], degree: Option<u32>) -> Result<Vec<Controller>, ExtractError> {
    let r = degree.unwrap_or(sdp.d / 2);
    let sc = &sdp.scaling;
    let (n, n_y) = (sdp.scaled.n, sdp.scaled.n_y);
    let xy = sdp.scaled.space.subspace(&(0..n + n_y).collect::<Vec<_>>());
    let mut out = Vec::new();
    for lay in &sdp.measures {
        let (channel, piece, base, bounds, lo, len) = match lay.key {
            MeasureKey::Nu(k) => (k, None, MeasureKey::Mu, sc.inputs[k], sc.lo.clone(), sc.len.clone()),
            MeasureKey::NuB(i, k) => (
                k,
                Some(i),
                MeasureKey::Boundary(i),
                sc.boundary_inputs[&i][k],
                sc.lo.clone(),
                sc.len.clone(),
            ),
            _ => continue,
        };
        let s_nu = sdp.moments_of(lay.key, s).expect("layout");
        let s_mu = sdp
            .moments_of(base, s)
            .ok_or_else(|| ExtractError::NoControl(base.to_string()))?;
        let unit = extract_with_degree(&s_mu, &s_nu, r)?;
        let physical = physical_law(&unit.kappa, &lo, &len, bounds)
            .embed(&xy)
            .expect("control variables are coordinates or unknowns");
        out.push(Controller {
            channel,
            piece,
            unit,
            physical,
            bounds,
        });
    }
    Ok(out)
}
