//! Truncated moment sequences, the Riesz functional, moment and localizing
//! matrices.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;

use crate::polyalg::{mono_basis, MonomialBasis, MultiIndex, Polynomial, VariableSpace};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MomentError {
    #[error("polynomial of degree {degree} exceeds truncation degree {d}")]
    DegreeOverflow { degree: u32, d: u32 },
    #[error("moment {0:?} is not part of the truncated sequence")]
    MissingMoment(MultiIndex),
    #[error("moment vector has {got} entries, basis needs {want}")]
    LengthMismatch { got: usize, want: usize },
    #[error("polynomial and moment vector live in different variable spaces")]
    SpaceMismatch,
}

/// Truncated moment sequence `s_alpha = int x^alpha dmu` over a basis.
#[derive(Clone, Debug)]
pub struct MomentVector {
    space: VariableSpace,
    d: u32,
    basis: Arc<MonomialBasis>,
    values: Vec<f64>,
}

impl MomentVector {
    /// Full graded basis of degree `d`.
    pub fn new(space: &VariableSpace, d: u32, values: Vec<f64>) -> Result<Self, MomentError> {
        let basis = MonomialBasis::cached(space.dim(), d);
        Self::with_basis(space, d, basis, values)
    }

    /// Arbitrary (for instance z-capped) basis.
    pub fn with_basis(
        space: &VariableSpace,
        d: u32,
        basis: Arc<MonomialBasis>,
        values: Vec<f64>,
    ) -> Result<Self, MomentError> {
        if values.len() != basis.len() {
            return Err(MomentError::LengthMismatch {
                got: values.len(),
                want: basis.len(),
            });
        }
        Ok(MomentVector {
            space: space.clone(),
            d,
            basis,
            values,
        })
    }

    /// Moments computed by `f(alpha)` for every basis element.
    pub fn from_fn(
        space: &VariableSpace,
        d: u32,
        mut f: impl FnMut(&MultiIndex) -> f64,
    ) -> Self {
        let basis = MonomialBasis::cached(space.dim(), d);
        let values = basis.monomials().iter().map(&mut f).collect();
        MomentVector {
            space: space.clone(),
            d,
            basis,
            values,
        }
    }

    /// Moments of the Dirac measure at `point`.
    pub fn dirac(space: &VariableSpace, d: u32, point: &[f64]) -> Self {
        Self::from_fn(space, d, |m| {
            m.exponents()
                .zip(point)
                .map(|(e, &x)| x.powi(e as i32))
                .product()
        })
    }

    pub fn space(&self) -> &VariableSpace {
        &self.space
    }

    pub fn degree(&self) -> u32 {
        self.d
    }

    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, m: &MultiIndex) -> Option<f64> {
        self.basis.position(m).map(|i| self.values[i])
    }

    /// Total mass `s_0`.
    pub fn mass(&self) -> f64 {
        self.get(&MultiIndex::zero(self.space.dim())).unwrap_or(0.0)
    }

    pub fn scaled(&self, a: f64) -> MomentVector {
        MomentVector {
            values: self.values.iter().map(|v| v * a).collect(),
            ..self.clone()
        }
    }

    /// CSV rows `alpha_1,...,alpha_n,value` in basis order, with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for v in self.space.variables() {
            let _ = write!(out, "{},", v.name);
        }
        out.push_str("value\n");
        for (m, v) in self.basis.monomials().iter().zip(&self.values) {
            for e in m.exponents() {
                let _ = write!(out, "{e},");
            }
            let _ = writeln!(out, "{v:e}");
        }
        out
    }
}

/// `l_s(p) = sum_alpha p_alpha s_alpha`.
pub fn riesz(s: &MomentVector, p: &Polynomial) -> Result<f64, MomentError> {
    if p.space() != s.space() {
        return Err(MomentError::SpaceMismatch);
    }
    if p.degree() > s.d {
        return Err(MomentError::DegreeOverflow {
            degree: p.degree(),
            d: s.d,
        });
    }
    let mut acc = 0.0;
    for (m, c) in p.terms() {
        let v = s.get(m).ok_or_else(|| MomentError::MissingMoment(m.clone()))?;
        acc += c * v;
    }
    Ok(acc)
}

/// Coefficient vector of `p` in the graded basis of degree `d`, zero-padded.
pub fn riesz_coeffs(p: &Polynomial, d: u32) -> Result<Vec<f64>, MomentError> {
    let basis = MonomialBasis::cached(p.space().dim(), d);
    Ok(riesz_coeffs_sparse(p, &basis)?
        .into_iter()
        .fold(vec![0.0; basis.len()], |mut acc, (i, c)| {
            acc[i] += c;
            acc
        }))
}

/// Sparse `(position, coefficient)` pairs of `p` in `basis`.
pub fn riesz_coeffs_sparse(
    p: &Polynomial,
    basis: &MonomialBasis,
) -> Result<Vec<(usize, f64)>, MomentError> {
    p.terms()
        .map(|(m, c)| {
            basis
                .position(m)
                .map(|i| (i, c))
                .ok_or_else(|| {
                    if m.degree() > basis.degree() {
                        MomentError::DegreeOverflow {
                            degree: m.degree(),
                            d: basis.degree(),
                        }
                    } else {
                        MomentError::MissingMoment(m.clone())
                    }
                })
        })
        .collect()
}

/// Linear map `s -> M(g, s)` stored as sparse entries of the upper triangle.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalizingMap {
    pub size: usize,
    pub rows: Vec<MultiIndex>,
    /// `(i, j, moment position, coefficient)` with `i <= j`.
    pub entries: Vec<(usize, usize, usize, f64)>,
}

impl LocalizingMap {
    /// Entry `(a, b)` is `sum_gamma g_gamma s_{a + b + gamma}` for `a, b` in
    /// `rows`; every needed moment must be present in `moments`.
    pub fn new(
        moments: &MonomialBasis,
        rows: &[MultiIndex],
        g: &Polynomial,
    ) -> Result<LocalizingMap, MomentError> {
        let mut entries = Vec::new();
        for (i, a) in rows.iter().enumerate() {
            for (j, b) in rows.iter().enumerate().skip(i) {
                let ab = a.add(b);
                for (gm, gc) in g.terms() {
                    let m = ab.add(gm);
                    let pos = moments
                        .position(&m)
                        .ok_or_else(|| MomentError::MissingMoment(m.clone()))?;
                    entries.push((i, j, pos, gc));
                }
            }
        }
        Ok(LocalizingMap {
            size: rows.len(),
            rows: rows.to_vec(),
            entries,
        })
    }

    /// Moment matrix over the cached Hankel index map.
    pub fn moment(dim: usize, d: u32) -> Arc<LocalizingMap> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, u32), Arc<LocalizingMap>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("moment map cache poisoned");
        guard
            .entry((dim, d))
            .or_insert_with(|| {
                let moments = MonomialBasis::cached(dim, 2 * (d / 2));
                let rows = mono_basis(dim, d / 2);
                let one = Polynomial::constant(&VariableSpace::generic(dim), 1.0);
                Arc::new(LocalizingMap::new(&moments, &rows, &one).expect("complete basis"))
            })
            .clone()
    }

    pub fn evaluate(&self, s: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.size, self.size);
        for &(i, j, k, c) in &self.entries {
            m[(i, j)] += c * s[k];
        }
        for i in 0..self.size {
            for j in 0..i {
                m[(i, j)] = m[(j, i)];
            }
        }
        m
    }
}

/// Row basis size of a localizing matrix: `d_bar = floor((d - deg g)/2)`.
pub fn localizing_order(d: u32, g_degree: u32) -> Option<u32> {
    d.checked_sub(g_degree).map(|r| r / 2)
}

/// `M_d(s) = l_s(beta_{d/2} beta_{d/2}^T)`.
pub fn moment_matrix(s: &MomentVector, d: u32) -> Result<DMatrix<f64>, MomentError> {
    let one = Polynomial::constant(s.space(), 1.0);
    localizing_matrix(s, &one, 2 * (d / 2))
}

/// `M_d(g, s) = l_s(beta_r beta_r^T g)` with `r = floor((d - deg g)/2)`.
pub fn localizing_matrix(
    s: &MomentVector,
    g: &Polynomial,
    d: u32,
) -> Result<DMatrix<f64>, MomentError> {
    if g.space() != s.space() {
        return Err(MomentError::SpaceMismatch);
    }
    let r = localizing_order(d, g.degree()).ok_or(MomentError::DegreeOverflow {
        degree: g.degree(),
        d,
    })?;
    if d > s.d {
        return Err(MomentError::DegreeOverflow { degree: d, d: s.d });
    }
    let rows = mono_basis(s.space().dim(), r);
    let map = LocalizingMap::new(s.basis(), &rows, g)?;
    Ok(map.evaluate(s.values()))
}

/// Smallest eigenvalue of a symmetric matrix (`+inf` when empty).
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lebesgue_unit(space: &VariableSpace, d: u32) -> MomentVector {
        MomentVector::from_fn(space, d, |m| {
            m.exponents().map(|k| 1.0 / (k + 1) as f64).product()
        })
    }

    #[test]
    fn riesz_examples() {
        let s1 = VariableSpace::coordinates(1);
        let leb = lebesgue_unit(&s1, 4);
        let x = Polynomial::var(&s1, 0);
        assert!((riesz(&leb, &x).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(riesz(&leb, &Polynomial::zero(&s1)).unwrap(), 0.0);
        let dirac = MomentVector::dirac(&s1, 4, &[0.0]);
        let p = Polynomial::parse("3 + x1^2", &s1).unwrap();
        assert_eq!(riesz(&dirac, &p).unwrap(), 3.0);
        let too_high = Polynomial::parse("x1^5", &s1).unwrap();
        assert!(matches!(riesz(&leb, &too_high), Err(MomentError::DegreeOverflow { .. })));
    }

    #[test]
    fn riesz_coeff_examples() {
        let s = VariableSpace::coordinates(2);
        assert_eq!(
            riesz_coeffs(&Polynomial::constant(&s, 1.0), 2).unwrap(),
            vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        );
        let c = riesz_coeffs(&Polynomial::parse("x1*x2", &s).unwrap(), 2).unwrap();
        assert_eq!(c, vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let c = riesz_coeffs(&Polynomial::parse("(x1 + x2)^2", &s).unwrap(), 2).unwrap();
        assert_eq!(c, vec![0.0, 0.0, 0.0, 1.0, 2.0, 1.0]);
    }

    #[test]
    fn moment_matrix_examples() {
        let s1 = VariableSpace::coordinates(1);
        let m = moment_matrix(&lebesgue_unit(&s1, 2), 2).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0 / 3.0]));
        let dirac = MomentVector::dirac(&s1, 4, &[0.0]);
        let m = moment_matrix(&dirac, 4).unwrap();
        assert_eq!(m[(0, 0)], 1.0);
        assert_eq!(m.iter().filter(|v| **v != 0.0).count(), 1);
        let s2 = VariableSpace::coordinates(2);
        assert_eq!(moment_matrix(&lebesgue_unit(&s2, 4), 4).unwrap().nrows(), 6);
    }

    #[test]
    fn localizing_examples() {
        let s1 = VariableSpace::coordinates(1);
        let leb = lebesgue_unit(&s1, 4);
        let g = Polynomial::parse("x1*(1 - x1)", &s1).unwrap();
        let m = localizing_matrix(&leb, &g, 2).unwrap();
        assert_eq!(m.nrows(), 1);
        assert!((m[(0, 0)] - 1.0 / 6.0).abs() < 1e-15);
        let one = Polynomial::constant(&s1, 1.0);
        assert_eq!(
            localizing_matrix(&leb, &one, 3).unwrap(),
            moment_matrix(&leb, 2).unwrap()
        );
        let g4 = Polynomial::parse("x1^4 - x1", &s1).unwrap();
        let m = localizing_matrix(&leb, &g4, 4).unwrap();
        assert_eq!(m.nrows(), 1);
        assert!((m[(0, 0)] - (0.2 - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn csv_export() {
        let s1 = VariableSpace::coordinates(1);
        let csv = lebesgue_unit(&s1, 1).to_csv();
        assert_eq!(csv, "x1,value\n0,1e0\n1,5e-1\n");
    }
}
