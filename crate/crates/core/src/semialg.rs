//! Domains, boundary partitions and analytic moments of the Lebesgue and
//! surface measures.

use std::collections::HashMap;
use std::fmt;

use crate::polyalg::{MultiIndex, Polynomial, VariableSpace};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("degenerate box: lo[{axis}] = {lo} is not below hi[{axis}] = {hi}")]
    DegenerateBox { axis: usize, lo: f64, hi: f64 },
    #[error("box bounds have mismatched lengths {0} and {1}")]
    DimensionMismatch(usize, usize),
    #[error("piece {0} is not an axis-aligned box face and no surface-moment table was supplied")]
    UnsupportedPiece(usize),
    #[error("surface-moment table has no entry for piece {piece}, alpha {alpha:?}")]
    MissingSigmaMoment { piece: usize, alpha: Vec<u32> },
    #[error("Lebesgue moments are only available for box domains")]
    NotABox,
    #[error("no boundary piece with index {0}")]
    NoSuchPiece(usize),
    #[error("surface-moment table line {line}: {msg}")]
    SigmaTable { line: usize, msg: String },
}

/// `{x : g_i(x) >= 0}` with an optional redundant ball `N^2 - |x|^2 >= 0`.
#[derive(Clone, Debug)]
pub struct SemialgebraicSet {
    pub space: VariableSpace,
    pub inequalities: Vec<Polynomial>,
    pub ball_radius: Option<f64>,
}

impl SemialgebraicSet {
    pub fn new(space: VariableSpace, inequalities: Vec<Polynomial>) -> Self {
        SemialgebraicSet {
            space,
            inequalities,
            ball_radius: None,
        }
    }

    /// All inequalities, including `N^2 - |x|^2` when a ball radius is set.
    pub fn all_inequalities(&self) -> Vec<Polynomial> {
        let mut out = self.inequalities.clone();
        if let Some(r) = self.ball_radius {
            let mut ball = Polynomial::constant(&self.space, r * r);
            for v in 0..self.space.dim() {
                let xv = Polynomial::var(&self.space, v);
                ball = &ball - &(&xv * &xv);
            }
            out.push(ball);
        }
        out
    }

    pub fn contains(&self, point: &[f64], tol: f64) -> bool {
        self.all_inequalities().iter().all(|g| g.eval(point) >= -tol)
    }
}

/// Which end of an interval a box face sits on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Lower,
    Upper,
}

/// Axis-aligned face `x_axis = value` of a box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxFace {
    pub axis: usize,
    pub side: Side,
    pub value: f64,
}

/// One element of the boundary partition.
#[derive(Clone, Debug)]
pub struct BoundaryPiece {
    pub index: usize,
    /// Vanishes on the piece; its gradient points outward.
    pub h: Polynomial,
    /// Inequalities cutting the piece out of `{h = 0}`.
    pub inequalities: Vec<Polynomial>,
    pub normal_gradient: Vec<Polynomial>,
    /// `normal_gradient` is the exact unit normal.
    pub is_normal_unit: bool,
    pub face: Option<BoxFace>,
}

impl BoundaryPiece {
    /// Checks `grad h != 0` at the supplied points.
    pub fn normal_nonvanishing_at(&self, points: &[Vec<f64>]) -> bool {
        points.iter().all(|p| {
            let n2: f64 = self.normal_gradient.iter().map(|g| g.eval(p).powi(2)).sum();
            n2 > 1e-24
        })
    }
}

/// Moments of the surface measure on each piece, read from a table.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SigmaTable {
    entries: HashMap<(usize, Vec<u32>), f64>,
}

impl SigmaTable {
    pub fn insert(&mut self, piece: usize, alpha: Vec<u32>, value: f64) {
        self.entries.insert((piece, alpha), value);
    }

    pub fn get(&self, piece: usize, alpha: &[u32]) -> Option<f64> {
        self.entries.get(&(piece, alpha.to_vec())).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Lines `piece alpha_1 ... alpha_n value`; `#` starts a comment.
    pub fn parse(text: &str, n: usize) -> Result<SigmaTable, GeometryError> {
        let mut table = SigmaTable::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| GeometryError::SigmaTable {
                line: lineno + 1,
                msg,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != n + 2 {
                return Err(err(format!("expected {} fields, found {}", n + 2, fields.len())));
            }
            let piece: usize = fields[0]
                .parse()
                .map_err(|_| err(format!("bad piece index '{}'", fields[0])))?;
            let mut alpha = Vec::with_capacity(n);
            for f in &fields[1..=n] {
                alpha.push(f.parse().map_err(|_| err(format!("bad exponent '{f}'")))?);
            }
            let value: f64 = fields[n + 1]
                .parse()
                .map_err(|_| err(format!("bad value '{}'", fields[n + 1])))?;
            table.insert(piece, alpha, value);
        }
        Ok(table)
    }
}

impl fmt::Display for SigmaTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut keys: Vec<&(usize, Vec<u32>)> = self.entries.keys().collect();
        keys.sort();
        for k in keys {
            write!(f, "{}", k.0)?;
            for a in &k.1 {
                write!(f, " {a}")?;
            }
            writeln!(f, " {:e}", self.entries[k])?;
        }
        Ok(())
    }
}

/// `Omega` together with its boundary partition.
#[derive(Clone, Debug)]
pub struct DomainGeometry {
    pub omega: SemialgebraicSet,
    pub pieces: Vec<BoundaryPiece>,
    bounds: Option<(Vec<f64>, Vec<f64>)>,
    sigma: Option<SigmaTable>,
}

fn interval_moment(lo: f64, hi: f64, k: u32) -> f64 {
    let e = (k + 1) as i32;
    (hi.powi(e) - lo.powi(e)) / (k + 1) as f64
}

/// Box `[lo, hi]` with faces ordered `x_1 = lo_1, x_1 = hi_1, x_2 = lo_2, ...`.
pub fn box_domain(lo: &[f64], hi: &[f64]) -> Result<DomainGeometry, GeometryError> {
    if lo.len() != hi.len() {
        return Err(GeometryError::DimensionMismatch(lo.len(), hi.len()));
    }
    for (axis, (&l, &h)) in lo.iter().zip(hi).enumerate() {
        if !(l < h) || !l.is_finite() || !h.is_finite() {
            return Err(GeometryError::DegenerateBox { axis, lo: l, hi: h });
        }
    }
    let n = lo.len();
    let space = VariableSpace::coordinates(n);
    let interval = |j: usize| {
        let xj = Polynomial::var(&space, j);
        &(&xj - &Polynomial::constant(&space, lo[j])) * &(&Polynomial::constant(&space, hi[j]) - &xj)
    };
    let omega = SemialgebraicSet::new(space.clone(), (0..n).map(interval).collect());
    let mut pieces = Vec::with_capacity(2 * n);
    for j in 0..n {
        for side in [Side::Lower, Side::Upper] {
            let xj = Polynomial::var(&space, j);
            let (h, value, sign) = match side {
                Side::Lower => (&Polynomial::constant(&space, lo[j]) - &xj, lo[j], -1.0),
                Side::Upper => (&xj - &Polynomial::constant(&space, hi[j]), hi[j], 1.0),
            };
            let normal_gradient = (0..n)
                .map(|k| Polynomial::constant(&space, if k == j { sign } else { 0.0 }))
                .collect();
            pieces.push(BoundaryPiece {
                index: pieces.len(),
                h,
                inequalities: (0..n).filter(|&k| k != j).map(interval).collect(),
                normal_gradient,
                is_normal_unit: true,
                face: Some(BoxFace {
                    axis: j,
                    side,
                    value,
                }),
            });
        }
    }
    Ok(DomainGeometry {
        omega,
        pieces,
        bounds: Some((lo.to_vec(), hi.to_vec())),
        sigma: None,
    })
}

impl DomainGeometry {
    /// General domain; surface moments come from `sigma`.
    pub fn from_parts(
        omega: SemialgebraicSet,
        pieces: Vec<BoundaryPiece>,
        sigma: SigmaTable,
    ) -> DomainGeometry {
        DomainGeometry {
            omega,
            pieces,
            bounds: None,
            sigma: Some(sigma),
        }
    }

    pub fn dim(&self) -> usize {
        self.omega.space.dim()
    }

    pub fn space(&self) -> &VariableSpace {
        &self.omega.space
    }

    pub fn box_bounds(&self) -> Option<(&[f64], &[f64])> {
        self.bounds.as_ref().map(|(l, h)| (l.as_slice(), h.as_slice()))
    }

    pub fn is_box(&self) -> bool {
        self.bounds.is_some()
    }

    pub fn piece(&self, i: usize) -> Result<&BoundaryPiece, GeometryError> {
        self.pieces.get(i).ok_or(GeometryError::NoSuchPiece(i))
    }

    pub fn sigma_table(&self) -> Option<&SigmaTable> {
        self.sigma.as_ref()
    }

    /// `int_Omega x^alpha dx`.
    pub fn lebesgue_moment(&self, alpha: &MultiIndex) -> Result<f64, GeometryError> {
        let (lo, hi) = self.box_bounds().ok_or(GeometryError::NotABox)?;
        Ok(alpha
            .exponents()
            .enumerate()
            .map(|(j, k)| interval_moment(lo[j], hi[j], k))
            .product())
    }

    /// `int_{piece} x^alpha dsigma`.
    pub fn surface_moment(&self, piece: usize, alpha: &MultiIndex) -> Result<f64, GeometryError> {
        let p = self.piece(piece)?;
        if let Some(table) = &self.sigma {
            let a: Vec<u32> = alpha.exponents().collect();
            return table
                .get(piece, &a)
                .ok_or(GeometryError::MissingSigmaMoment { piece, alpha: a });
        }
        let face = p.face.ok_or(GeometryError::UnsupportedPiece(piece))?;
        let (lo, hi) = self.box_bounds().ok_or(GeometryError::UnsupportedPiece(piece))?;
        Ok(alpha
            .exponents()
            .enumerate()
            .map(|(j, k)| {
                if j == face.axis {
                    face.value.powi(k as i32)
                } else {
                    interval_moment(lo[j], hi[j], k)
                }
            })
            .product())
    }

    /// `int_Omega p dx` for `p` over the coordinate space.
    pub fn lebesgue_integral(&self, p: &Polynomial) -> Result<f64, GeometryError> {
        let mut acc = 0.0;
        for (m, c) in p.terms() {
            acc += c * self.lebesgue_moment(m)?;
        }
        Ok(acc)
    }

    /// `int_{piece} p dsigma` for `p` over the coordinate space.
    pub fn surface_integral(&self, piece: usize, p: &Polynomial) -> Result<f64, GeometryError> {
        let mut acc = 0.0;
        for (m, c) in p.terms() {
            acc += c * self.surface_moment(piece, m)?;
        }
        Ok(acc)
    }

    pub fn volume(&self) -> Result<f64, GeometryError> {
        self.lebesgue_moment(&MultiIndex::zero(self.dim()))
    }

    pub fn piece_area(&self, piece: usize) -> Result<f64, GeometryError> {
        self.surface_moment(piece, &MultiIndex::zero(self.dim()))
    }

    /// Largest discrepancy `|int psi o h dsigma_from - int psi dsigma_to|`
    /// over monomials `psi` with `|alpha| <= d`.
    pub fn measure_preservation_defect(
        &self,
        from: usize,
        to: usize,
        map: &[Polynomial],
        d: u32,
    ) -> Result<f64, GeometryError> {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for alpha in crate::polyalg::mono_basis(n, d) {
            let psi = Polynomial::monomial(self.space(), alpha.clone(), 1.0);
            let pulled = psi.compose(map).expect("map over coordinate space");
            let lhs = self.surface_integral(from, &pulled)?;
            let rhs = self.surface_moment(to, &alpha)?;
            worst = worst.max((lhs - rhs).abs());
        }
        Ok(worst)
    }
}
