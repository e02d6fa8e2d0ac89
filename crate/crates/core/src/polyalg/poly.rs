use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use super::index::MultiIndex;
use super::space::VariableSpace;
use super::PolyError;

/// Sparse multivariate polynomial with `f64` coefficients.
///
/// Terms are kept in graded-lex order and exact zeros are never stored.
#[derive(Clone, PartialEq)]
pub struct Polynomial {
    space: VariableSpace,
    terms: BTreeMap<MultiIndex, f64>,
}

/// Image of one variable under [`Polynomial::map_vars`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum VarImage {
    /// Renamed to the target variable at this position.
    Var(usize),
    /// Replaced by a constant.
    Const(f64),
    /// Not available in the target; any occurrence is an error.
    Absent,
}

/// `x_i -> offset + scale * x_i`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineMap {
    pub offset: f64,
    pub scale: f64,
}

impl AffineMap {
    pub const IDENTITY: AffineMap = AffineMap {
        offset: 0.0,
        scale: 1.0,
    };
}

impl Polynomial {
    pub fn zero(space: &VariableSpace) -> Self {
        Polynomial {
            space: space.clone(),
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(space: &VariableSpace, c: f64) -> Self {
        Self::monomial(space, MultiIndex::zero(space.dim()), c)
    }

    pub fn var(space: &VariableSpace, v: usize) -> Self {
        Self::monomial(space, MultiIndex::unit(space.dim(), v), 1.0)
    }

    /// Variable looked up by name. Panics on unknown names.
    pub fn named(space: &VariableSpace, name: &str) -> Self {
        let v = space
            .index_of(name)
            .unwrap_or_else(|| panic!("unknown variable {name}"));
        Self::var(space, v)
    }

    pub fn monomial(space: &VariableSpace, m: MultiIndex, c: f64) -> Self {
        assert_eq!(m.dim(), space.dim());
        let mut terms = BTreeMap::new();
        if c != 0.0 {
            terms.insert(m, c);
        }
        Polynomial {
            space: space.clone(),
            terms,
        }
    }

    pub fn from_terms(
        space: &VariableSpace,
        terms: impl IntoIterator<Item = (MultiIndex, f64)>,
    ) -> Self {
        let mut p = Self::zero(space);
        for (m, c) in terms {
            p.add_term(m, c);
        }
        p
    }

    pub fn space(&self) -> &VariableSpace {
        &self.space
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> + '_ {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coefficient(&self, m: &MultiIndex) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; zero for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(MultiIndex::degree).max().unwrap_or(0)
    }

    /// Largest degree in the listed variables.
    pub fn degree_in(&self, vars: &[usize]) -> u32 {
        self.terms.keys().map(|m| m.degree_in(vars)).max().unwrap_or(0)
    }

    /// Whether variable `v` occurs in some term.
    pub fn uses_var(&self, v: usize) -> bool {
        self.terms.keys().any(|m| m.exponent(v) > 0)
    }

    pub fn add_term(&mut self, m: MultiIndex, c: f64) {
        debug_assert_eq!(m.dim(), self.space.dim());
        if c == 0.0 {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if *e.get() == 0.0 {
                    e.remove();
                }
            }
        }
    }

    fn check_space(&self, other: &Polynomial) -> Result<(), PolyError> {
        if self.space != other.space {
            return Err(PolyError::SpaceMismatch);
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_space(other)?;
        let mut out = self.clone();
        for (m, c) in other.terms() {
            out.add_term(m.clone(), c);
        }
        Ok(out)
    }

    pub fn try_mul(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_space(other)?;
        let mut acc: BTreeMap<MultiIndex, f64> = BTreeMap::new();
        for (a, ca) in self.terms() {
            for (b, cb) in other.terms() {
                *acc.entry(a.add(b)).or_insert(0.0) += ca * cb;
            }
        }
        acc.retain(|_, c| *c != 0.0);
        Ok(Polynomial {
            space: self.space.clone(),
            terms: acc,
        })
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        if s == 0.0 {
            return Polynomial::zero(&self.space);
        }
        Polynomial {
            space: self.space.clone(),
            terms: self
                .terms
                .iter()
                .map(|(m, &c)| (m.clone(), c * s))
                .filter(|(_, c)| *c != 0.0)
                .collect(),
        }
    }

    pub fn pow(&self, k: u32) -> Polynomial {
        let mut out = Polynomial::constant(&self.space, 1.0);
        for _ in 0..k {
            out = &out * self;
        }
        out
    }

    /// Formal partial derivative in variable `v`.
    pub fn diff(&self, v: usize) -> Polynomial {
        let mut out = Polynomial::zero(&self.space);
        for (m, c) in self.terms() {
            let e = m.exponent(v);
            if let Some(lower) = m.decrement(v) {
                out.add_term(lower, c * e as f64);
            }
        }
        out
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        assert_eq!(point.len(), self.space.dim(), "point dimension mismatch");
        self.terms()
            .map(|(m, c)| {
                m.exponents()
                    .zip(point)
                    .fold(c, |acc, (e, &x)| if e == 0 { acc } else { acc * x.powi(e as i32) })
            })
            .sum()
    }

    /// Substitute every variable by a polynomial over a common target space.
    pub fn compose(&self, images: &[Polynomial]) -> Result<Polynomial, PolyError> {
        assert_eq!(images.len(), self.space.dim());
        let target = match images.first() {
            Some(p) => p.space.clone(),
            None => return Ok(self.clone()),
        };
        if images.iter().any(|p| p.space != target) {
            return Err(PolyError::SpaceMismatch);
        }
        // powers[v][e] = images[v]^e, built lazily
        let mut powers: Vec<Vec<Polynomial>> = images
            .iter()
            .map(|_| vec![Polynomial::constant(&target, 1.0)])
            .collect();
        let mut out = Polynomial::zero(&target);
        for (m, c) in self.terms() {
            let mut term = Polynomial::constant(&target, c);
            for (v, e) in m.exponents().enumerate() {
                if e == 0 {
                    continue;
                }
                while powers[v].len() <= e as usize {
                    let next = powers[v].last().unwrap() * &images[v];
                    powers[v].push(next);
                }
                term = &term * &powers[v][e as usize];
            }
            for (tm, tc) in term.terms() {
                out.add_term(tm.clone(), tc);
            }
        }
        Ok(out)
    }

    /// Per-variable affine change `x_i -> a_i + b_i x_i`; degree is preserved
    /// when every scale is nonzero.
    pub fn affine_substitute(&self, maps: &[AffineMap]) -> Polynomial {
        assert_eq!(maps.len(), self.space.dim());
        let images: Vec<Polynomial> = maps
            .iter()
            .enumerate()
            .map(|(v, m)| {
                &Polynomial::constant(&self.space, m.offset)
                    + &Polynomial::var(&self.space, v).scale(m.scale)
            })
            .collect();
        self.compose(&images).expect("same space")
    }

    /// Replace a single variable by a polynomial over the same space.
    pub fn substitute_var(&self, v: usize, image: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_space(image)?;
        if !self.uses_var(v) {
            return Ok(self.clone());
        }
        let images: Vec<Polynomial> = (0..self.space.dim())
            .map(|i| {
                if i == v {
                    image.clone()
                } else {
                    Polynomial::var(&self.space, i)
                }
            })
            .collect();
        self.compose(&images)
    }

    /// Move to another space by renaming/fixing variables without arithmetic
    /// blow-up (constants are folded into coefficients).
    pub fn map_vars(
        &self,
        target: &VariableSpace,
        image: impl Fn(usize) -> VarImage,
    ) -> Result<Polynomial, PolyError> {
        let images: Vec<VarImage> = (0..self.space.dim()).map(image).collect();
        let mut out = Polynomial::zero(target);
        for (m, c) in self.terms() {
            let mut exps = vec![0u32; target.dim()];
            let mut coef = c;
            for (v, e) in m.exponents().enumerate() {
                if e == 0 {
                    continue;
                }
                match images[v] {
                    VarImage::Var(t) => exps[t] += e,
                    VarImage::Const(k) => coef *= k.powi(e as i32),
                    VarImage::Absent => {
                        return Err(PolyError::UnknownVariable(self.space.name(v).to_string()))
                    }
                }
            }
            out.add_term(MultiIndex::from_exponents(&exps), coef);
        }
        Ok(out)
    }

    /// Re-express over `target`, matching variables by name.
    pub fn embed(&self, target: &VariableSpace) -> Result<Polynomial, PolyError> {
        let src = self.space.clone();
        self.map_vars(target, |v| match target.index_of(src.name(v)) {
            Some(t) => VarImage::Var(t),
            None => VarImage::Absent,
        })
    }

    /// Split by total degree in `vars`: returns `(degree, part)` pairs.
    pub fn split_by_degree_in(&self, vars: &[usize]) -> BTreeMap<u32, Polynomial> {
        let mut out: BTreeMap<u32, Polynomial> = BTreeMap::new();
        for (m, c) in self.terms() {
            out.entry(m.degree_in(vars))
                .or_insert_with(|| Polynomial::zero(&self.space))
                .add_term(m.clone(), c);
        }
        out
    }

    /// Largest absolute coefficient.
    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |a, &c| a.max(c.abs()))
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        self.try_add(rhs).expect("polynomial space mismatch")
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self.try_add(&rhs.scale(-1.0))
            .expect("polynomial space mismatch")
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        self.try_mul(rhs).expect("polynomial space mismatch")
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

impl fmt::Display for Polynomial {
    /// Text form accepted by [`Polynomial::parse`], terms in graded-lex order.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (m, &c)) in self.terms.iter().enumerate() {
            let mag = c.abs();
            if i == 0 {
                if c < 0.0 {
                    write!(f, "-")?;
                }
            } else if c < 0.0 {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let mut factors: Vec<String> = Vec::new();
            if mag != 1.0 || m.is_constant() {
                factors.push(format!("{mag:?}"));
            }
            for (v, e) in m.exponents().enumerate() {
                match e {
                    0 => {}
                    1 => factors.push(self.space.name(v).to_string()),
                    _ => factors.push(format!("{}^{}", self.space.name(v), e)),
                }
            }
            write!(f, "{}", factors.join("*"))?;
        }
        Ok(())
    }
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Polynomial({self})")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::space::VariableSpace;

    fn p(s: &VariableSpace, t: &str) -> Polynomial {
        Polynomial::parse(t, s).unwrap()
    }

    #[test]
    fn difference_of_squares() {
        let s = VariableSpace::coordinates(1);
        let got = &p(&s, "x1 + 1") * &p(&s, "x1 - 1");
        assert_eq!(got, p(&s, "x1^2 - 1"));
    }

    #[test]
    fn times_zero_is_zero() {
        let s = VariableSpace::coordinates(2);
        let got = &p(&s, "3*x1*x2 + x2") * &Polynomial::zero(&s);
        assert!(got.is_zero());
        assert_eq!(got.degree(), 0);
    }

    #[test]
    fn product_with_derivative_variable() {
        let s = VariableSpace::pde(2, 1, 0);
        let got = &p(&s, "y1*z1_2") * &p(&s, "y1");
        assert_eq!(got, p(&s, "y1^2*z1_2"));
    }

    #[test]
    fn mismatched_spaces_are_rejected() {
        let a = Polynomial::constant(&VariableSpace::coordinates(1), 1.0);
        let b = Polynomial::constant(&VariableSpace::coordinates(2), 1.0);
        assert_eq!(a.try_mul(&b), Err(PolyError::SpaceMismatch));
    }

    #[test]
    fn derivatives() {
        let s = VariableSpace::pde(2, 1, 0);
        assert_eq!(p(&s, "x1^2*x2").diff(0), p(&s, "2*x1*x2"));
        assert!(p(&s, "7").diff(0).is_zero());
        let y = s.index_of("y1").unwrap();
        assert_eq!(p(&s, "y1^3*z1_1").diff(y), p(&s, "3*y1^2*z1_1"));
    }

    #[test]
    fn affine_substitution() {
        let s = VariableSpace::coordinates(1);
        let m = [AffineMap {
            offset: 0.0,
            scale: 5.0,
        }];
        assert_eq!(p(&s, "x1").affine_substitute(&m), p(&s, "5*x1"));
        let (a, b) = (0.3, -1.7);
        let m = [AffineMap {
            offset: a,
            scale: b,
        }];
        let got = p(&s, "x1^2").affine_substitute(&m);
        let want = Polynomial::from_terms(
            &s,
            [
                (MultiIndex::from_exponents(&[0]), a * a),
                (MultiIndex::from_exponents(&[1]), 2.0 * a * b),
                (MultiIndex::from_exponents(&[2]), b * b),
            ],
        );
        for (m, c) in want.terms() {
            assert!((got.coefficient(m) - c).abs() < 1e-15);
        }
        let q = p(&s, "3*x1^3 - x1 + 2");
        assert_eq!(q.affine_substitute(&[AffineMap::IDENTITY]), q);
    }

    #[test]
    fn evaluation() {
        let s = VariableSpace::coordinates(2);
        assert_eq!(p(&s, "x1*x2").eval(&[2.0, 3.0]), 6.0);
        assert_eq!(Polynomial::zero(&s).eval(&[1.5, -2.0]), 0.0);
        let y0 = p(&s, "10*(x2*(1 - x2))^2");
        assert!((y0.eval(&[0.0, 0.5]) - 0.625).abs() < 1e-15);
    }

    #[test]
    fn map_vars_fixes_and_renames() {
        let full = VariableSpace::pde(2, 1, 0);
        let face = full.subspace(&[1, 2]); // x2, y1
        let q = p(&full, "3*x1^2*x2*y1 + x1");
        let got = q
            .map_vars(&face, |v| match v {
                0 => VarImage::Const(2.0),
                1 => VarImage::Var(0),
                2 => VarImage::Var(1),
                _ => VarImage::Absent,
            })
            .unwrap();
        assert_eq!(got, p(&face, "12*x2*y1 + 2"));
        assert!(p(&full, "z1_1").map_vars(&face, |_| VarImage::Absent).is_err());
    }

    #[test]
    fn display_roundtrip() {
        let s = VariableSpace::pde(2, 1, 1);
        let q = p(&s, "3*x1^2*y1*z1_2 - 0.5*x2 + u1 - 1");
        let again = p(&s, &q.to_string());
        assert_eq!(q, again);
    }
}
