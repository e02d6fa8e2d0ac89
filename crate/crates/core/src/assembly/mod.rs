//! Translation of a [`PdeProblem`] at relaxation degree `d` into a moment SDP.
//!
//! The problem is first rescaled to the unit box. Constraint families are
//! collected symbolically as lists of `(measure, operator, coefficient)`
//! terms, each with its own maximal test degree; every test monomial then
//! yields one row, mapped onto the moment columns of the measures involved.

mod rescale;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use pdemom_sdp::{ConicProblem, PsdBlock, Sense};

use crate::moments::{LocalizingMap, MomentError, MomentVector};
use crate::polyalg::{
    mono_basis, MonomialBasis, MultiIndex, PolyError, Polynomial, VarImage, VarKind, VariableSpace,
};
use crate::problem::{BoundaryCondition, DirichletData, PdeProblem, PeriodicDegree, ProblemError};
use crate::quadrature::{moments_converged, QuadratureError, Region};
use crate::semialg::{GeometryError, Side};

pub use rescale::{rescale, Scaling};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AssemblyError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("relaxation degree must be even and positive, got {0}")]
    BadDegree(u32),
    #[error("{family}: integrands need degree {need}, above d = {d}")]
    DegreeTooSmall { family: String, need: u32, d: u32 },
    #[error("{0}: controls must enter linearly")]
    NonlinearControl(String),
    #[error("{0}: control terms may not involve derivatives")]
    ControlWithDerivative(String),
    #[error("{0}: distributed controls cannot enter boundary integrands")]
    ControlOnBoundary(String),
    #[error("periodic map from piece {from} to {to} does not preserve the surface measure (defect {defect:e})")]
    PeriodicNotPreserving { from: usize, to: usize, defect: f64 },
    #[error("row {tag} has no terms but right-hand side {rhs:e}")]
    InconsistentRow { tag: String, rhs: f64 },
    #[error("{0}")]
    Unsupported(String),
}

/// One measure of the relaxation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MeasureKey {
    /// Occupation measure on `Omega x Y x Z`.
    Mu,
    /// Boundary measure of a piece.
    Boundary(usize),
    /// Distributed control measure of a channel.
    Nu(usize),
    /// Boundary control measure `(piece, channel)`.
    NuB(usize, usize),
    NuHat(usize),
    NuHatB(usize, usize),
}

impl fmt::Display for MeasureKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasureKey::Mu => write!(f, "mu"),
            MeasureKey::Boundary(i) => write!(f, "mu_b{i}"),
            MeasureKey::Nu(k) => write!(f, "nu{}", k + 1),
            MeasureKey::NuB(i, k) => write!(f, "nu_b{i}_{}", k + 1),
            MeasureKey::NuHat(k) => write!(f, "nuhat{}", k + 1),
            MeasureKey::NuHatB(i, k) => write!(f, "nuhat_b{i}_{}", k + 1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeasureRole {
    Occupation,
    Boundary,
    Control,
    Slack,
}

impl MeasureKey {
    pub fn role(self) -> MeasureRole {
        match self {
            MeasureKey::Mu => MeasureRole::Occupation,
            MeasureKey::Boundary(_) => MeasureRole::Boundary,
            MeasureKey::Nu(_) | MeasureKey::NuB(..) => MeasureRole::Control,
            MeasureKey::NuHat(_) | MeasureKey::NuHatB(..) => MeasureRole::Slack,
        }
    }

    pub fn piece(self) -> Option<usize> {
        match self {
            MeasureKey::Boundary(i) | MeasureKey::NuB(i, _) | MeasureKey::NuHatB(i, _) => Some(i),
            _ => None,
        }
    }
}

/// Constraint family generating a block of rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FamilyKind {
    Stokes { m: usize },
    Pde { row: usize },
    BoundaryRow { piece: usize, row: usize },
    Dirichlet { piece: usize },
    Periodic { from: usize, to: usize },
    Marginal { piece: usize },
    Slack { channel: usize },
    BoundarySlack { piece: usize, channel: usize },
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FamilyKind::Stokes { m } => write!(f, "stokes x{}", m + 1),
            FamilyKind::Pde { row } => write!(f, "pde row {}", row + 1),
            FamilyKind::BoundaryRow { piece, row } => write!(f, "boundary {piece} row {}", row + 1),
            FamilyKind::Dirichlet { piece } => write!(f, "dirichlet {piece}"),
            FamilyKind::Periodic { from, to } => write!(f, "periodic {from}->{to}"),
            FamilyKind::Marginal { piece } => write!(f, "marginal {piece}"),
            FamilyKind::Slack { channel } => write!(f, "slack u{}", channel + 1),
            FamilyKind::BoundarySlack { piece, channel } => {
                write!(f, "slack {piece} u{}", channel + 1)
            }
        }
    }
}

/// Origin of one equality row: family and test monomial.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RowTag {
    pub family: FamilyKind,
    /// Test monomial over the full problem space.
    pub test: MultiIndex,
}

impl RowTag {
    pub fn describe(&self, space: &VariableSpace) -> String {
        format!(
            "{} phi={}",
            self.family,
            Polynomial::monomial(space, self.test.clone(), 1.0)
        )
    }
}

/// Column layout and support of one measure.
#[derive(Clone, Debug)]
pub struct MeasureLayout {
    pub key: MeasureKey,
    pub name: String,
    pub role: MeasureRole,
    /// Full-space index of each local variable.
    pub vars: Vec<usize>,
    /// Coordinate frozen on a box face, `(axis, value)`.
    pub fixed: Option<(usize, f64)>,
    pub space: VariableSpace,
    pub basis: Arc<MonomialBasis>,
    pub offset: usize,
    /// Inequalities `g >= 0` over `space` carrying localizing blocks.
    pub supports: Vec<Polynomial>,
}

impl MeasureLayout {
    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn columns(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.basis.len()
    }

    /// Local positions of the derivative variables.
    pub fn z_positions(&self) -> Vec<usize> {
        self.space.indices_of(VarKind::Z)
    }

    /// Full-space monomial as `(local monomial, factor)`, `None` when it
    /// involves a variable this measure does not carry.
    pub fn localize(&self, m: &MultiIndex) -> Option<(MultiIndex, f64)> {
        let mut exps = vec![0u32; self.vars.len()];
        let mut factor = 1.0;
        let mut seen = 0u32;
        for (pos, &v) in self.vars.iter().enumerate() {
            exps[pos] = m.exponent(v);
            seen += exps[pos];
        }
        if let Some((axis, value)) = self.fixed {
            let e = m.exponent(axis);
            if e > 0 {
                factor *= value.powi(e as i32);
                seen += e;
            }
        }
        if seen != m.degree() {
            return None;
        }
        Some((MultiIndex::from_exponents(&exps), factor))
    }

    /// Full-space polynomial re-expressed over the local space.
    pub fn localize_poly(&self, p: &Polynomial) -> Result<Polynomial, PolyError> {
        let fixed = self.fixed;
        let vars = &self.vars;
        p.map_vars(&self.space, |v| {
            if let Some(pos) = vars.iter().position(|&w| w == v) {
                VarImage::Var(pos)
            } else if let Some((axis, value)) = fixed.filter(|f| f.0 == v) {
                let _ = axis;
                VarImage::Const(value)
            } else {
                VarImage::Absent
            }
        })
    }
}

/// Assembled relaxation together with the bookkeeping needed to interpret
/// its solutions.
#[derive(Clone, Debug)]
pub struct AssembledSdp {
    pub problem: ConicProblem,
    pub measures: Vec<MeasureLayout>,
    /// Parallel to `problem.equalities`.
    pub tags: Vec<RowTag>,
    pub d: u32,
    pub d_tilde: u32,
    pub test_degrees: Vec<(FamilyKind, u32)>,
    pub trivial_rows: usize,
    pub duplicate_rows: usize,
    /// Rows dropped because they need moments beyond the z-degree cap.
    pub capped_rows: usize,
    pub scaling: Scaling,
    /// `Y` or `Z` carries no constraint, so convergence in `d` is not
    /// guaranteed.
    pub unbounded_support: bool,
    /// Problem after rescaling, in the coordinates of the moments.
    pub scaled: PdeProblem,
}

impl AssembledSdp {
    pub fn measure(&self, key: MeasureKey) -> Option<&MeasureLayout> {
        self.measures.iter().find(|m| m.key == key)
    }

    /// Index of the measure owning column `col`.
    pub fn column_owner(&self, col: usize) -> Option<usize> {
        self.measures.iter().position(|m| m.columns().contains(&col))
    }

    pub fn largest_block(&self) -> usize {
        self.problem.blocks.iter().map(|b| b.size).max().unwrap_or(0)
    }

    /// Moment vector of every measure.
    pub fn split(&self, s: &[f64]) -> Vec<MomentVector> {
        self.measures
            .iter()
            .map(|m| {
                MomentVector::with_basis(&m.space, self.d, m.basis.clone(), s[m.columns()].to_vec())
                    .expect("layout matches basis")
            })
            .collect()
    }

    pub fn moments_of(&self, key: MeasureKey, s: &[f64]) -> Option<MomentVector> {
        let m = self.measure(key)?;
        Some(
            MomentVector::with_basis(&m.space, self.d, m.basis.clone(), s[m.columns()].to_vec())
                .expect("layout matches basis"),
        )
    }

    pub fn with_sense(&self, sense: Sense) -> ConicProblem {
        let mut p = self.problem.clone();
        p.sense = sense;
        p
    }

    pub fn describe_row(&self, r: usize) -> String {
        self.tags[r].describe(&self.scaled.space)
    }
}

#[derive(Clone, Debug)]
enum Op {
    Phi,
    Dx(usize),
    /// Derivative in `y_k` (0-based `k`).
    Dy(usize),
    /// `phi(h(x), y)` with the images of every full-space variable.
    Pull(Arc<Vec<Polynomial>>),
}

impl Op {
    fn apply(&self, phi: &Polynomial, n: usize) -> Result<Polynomial, PolyError> {
        match self {
            Op::Phi => Ok(phi.clone()),
            Op::Dx(j) => Ok(phi.diff(*j)),
            Op::Dy(k) => Ok(phi.diff(n + k)),
            Op::Pull(images) => phi.compose(images),
        }
    }

    fn is_derivative(&self) -> bool {
        matches!(self, Op::Dx(_) | Op::Dy(_))
    }

    fn simple_key(&self) -> Option<(u8, usize)> {
        match self {
            Op::Phi => Some((0, 0)),
            Op::Dx(j) => Some((1, *j)),
            Op::Dy(k) => Some((2, *k)),
            Op::Pull(_) => None,
        }
    }
}

#[derive(Clone, Debug)]
struct Term {
    key: MeasureKey,
    op: Op,
    coef: Polynomial,
}

#[derive(Clone, Debug)]
enum DirichletRhs {
    /// `h` over the coordinate space.
    Poly(Vec<Polynomial>),
    /// Quadrature moments over `(x, y)`, keyed by exponents.
    Table(HashMap<Vec<u32>, f64>),
}

#[derive(Clone, Debug)]
enum Rhs {
    Zero,
    Sigma(usize),
    Dirichlet(usize, DirichletRhs),
}

#[derive(Clone, Debug)]
struct Family {
    kind: FamilyKind,
    terms: Vec<Term>,
    /// Test functions depend on `x` only.
    x_only: bool,
    degree: u32,
    rhs: Rhs,
}

struct Builder<'a> {
    p: &'a PdeProblem,
    space: VariableSpace,
    n: usize,
    n_y: usize,
    subs: HashMap<usize, Polynomial>,
    u_vars: Vec<usize>,
}

impl<'a> Builder<'a> {
    fn new(p: &'a PdeProblem) -> Self {
        Builder {
            p,
            space: p.space.clone(),
            n: p.n,
            n_y: p.n_y,
            subs: p.reductions.substitutions.iter().cloned().collect(),
            u_vars: p.space.indices_of(VarKind::U),
        }
    }

    fn one(&self) -> Polynomial {
        Polynomial::constant(&self.space, 1.0)
    }

    /// `z_{k,j}` or its substitution.
    fn zexpr(&self, k: usize, j: usize) -> Polynomial {
        let v = self.p.z_index(k, j);
        self.subs
            .get(&v)
            .cloned()
            .unwrap_or_else(|| Polynomial::var(&self.space, v))
    }

    fn substitute(&self, q: &Polynomial) -> Result<Polynomial, AssemblyError> {
        let mut out = q.clone();
        for (&v, s) in &self.subs {
            out = out.substitute_var(v, s)?;
        }
        Ok(out)
    }

    /// Coordinate-space polynomial lifted into the full space.
    fn lift(&self, q: &Polynomial) -> Result<Polynomial, AssemblyError> {
        Ok(q.map_vars(&self.space, VarImage::Var)?)
    }

    /// Split `coef` on `key` into its control-free part and the parts
    /// linear in each input, which move to the control measures.
    fn route(&self, key: MeasureKey, coef: &Polynomial, ctx: &str) -> Result<Vec<(MeasureKey, Polynomial)>, AssemblyError> {
        let mut out = Vec::new();
        let mut base = Polynomial::zero(&self.space);
        let mut per_u: BTreeMap<usize, Polynomial> = BTreeMap::new();
        for (m, c) in coef.terms() {
            let du = m.degree_in(&self.u_vars);
            match du {
                0 => base.add_term(m.clone(), c),
                1 => {
                    let k = self
                        .u_vars
                        .iter()
                        .position(|&u| m.exponent(u) == 1)
                        .expect("u exponent");
                    let reduced = m.decrement(self.u_vars[k]).expect("u exponent");
                    per_u
                        .entry(k)
                        .or_insert_with(|| Polynomial::zero(&self.space))
                        .add_term(reduced, c);
                }
                _ => return Err(AssemblyError::NonlinearControl(ctx.to_string())),
            }
        }
        if !base.is_zero() {
            out.push((key, base));
        }
        for (k, q) in per_u {
            if q.is_zero() {
                continue;
            }
            let nu = match key {
                MeasureKey::Mu => MeasureKey::Nu(k),
                _ => return Err(AssemblyError::ControlOnBoundary(ctx.to_string())),
            };
            if q.degree_in(&self.space.indices_of(VarKind::Z)) > 0 {
                return Err(AssemblyError::ControlWithDerivative(ctx.to_string()));
            }
            out.push((nu, q));
        }
        Ok(out)
    }

    fn push(&self, terms: &mut Vec<Term>, key: MeasureKey, op: Op, coef: &Polynomial, ctx: &str) -> Result<(), AssemblyError> {
        for (k, c) in self.route(key, coef, ctx)? {
            terms.push(Term {
                key: k,
                op: op.clone(),
                coef: c,
            });
        }
        Ok(())
    }

    /// Outward normal component `m` on a piece, over the full space.
    fn normal(&self, piece: usize, m: usize) -> Result<Polynomial, AssemblyError> {
        let pc = &self.p.geometry.pieces[piece];
        match pc.face {
            Some(f) if self.p.geometry.is_box() => {
                if f.axis != m {
                    return Ok(Polynomial::zero(&self.space));
                }
                let s = match f.side {
                    Side::Lower => -1.0,
                    Side::Upper => 1.0,
                };
                Ok(Polynomial::constant(&self.space, s))
            }
            _ => self.lift(&pc.normal_gradient[m]),
        }
    }

    fn finish(&self, kind: FamilyKind, terms: Vec<Term>, d: u32) -> Result<Option<Family>, AssemblyError> {
        let mut merged: Vec<Term> = Vec::new();
        for t in terms {
            if let Some(sk) = t.op.simple_key() {
                if let Some(e) = merged
                    .iter_mut()
                    .find(|e| e.key == t.key && e.op.simple_key() == Some(sk))
                {
                    e.coef = &e.coef + &t.coef;
                    continue;
                }
            }
            merged.push(t);
        }
        merged.retain(|t| !t.coef.is_zero());
        if merged.is_empty() {
            return Ok(None);
        }
        let mut inflation: i64 = 0;
        for t in &merged {
            let inf = t.coef.degree() as i64 - i64::from(t.op.is_derivative());
            inflation = inflation.max(inf);
        }
        if inflation > d as i64 {
            return Err(AssemblyError::DegreeTooSmall {
                family: kind.to_string(),
                need: inflation as u32,
                d,
            });
        }
        Ok(Some(Family {
            kind,
            terms: merged,
            x_only: false,
            degree: d - inflation as u32,
            rhs: Rhs::Zero,
        }))
    }

    fn families(&self, d: u32) -> Result<Vec<Family>, AssemblyError> {
        let p = self.p;
        let (n, n_y) = (self.n, self.n_y);
        let n_pieces = p.geometry.pieces.len();
        let mut out = Vec::new();

        for m in 0..n {
            let kind = FamilyKind::Stokes { m };
            let ctx = kind.to_string();
            let mut terms = vec![Term {
                key: MeasureKey::Mu,
                op: Op::Dx(m),
                coef: self.one(),
            }];
            for k in 0..n_y {
                self.push(&mut terms, MeasureKey::Mu, Op::Dy(k), &self.zexpr(k, m), &ctx)?;
            }
            for i in 0..n_pieces {
                let eta = self.normal(i, m)?;
                self.push(&mut terms, MeasureKey::Boundary(i), Op::Phi, &-&eta, &ctx)?;
            }
            if let Some(f) = self.finish(kind, terms, d)? {
                out.push(f);
            }
        }

        for (r, f) in p.f.iter().enumerate() {
            let kind = FamilyKind::Pde { row: r };
            let ctx = kind.to_string();
            let mut terms = Vec::new();
            self.push(&mut terms, MeasureKey::Mu, Op::Phi, &self.substitute(f)?, &ctx)?;
            for t in &p.b {
                let (i, j) = (t.i, t.j);
                let row = &t.matrix[r];
                let mut col = Polynomial::zero(&self.space);
                let mut dcol = Polynomial::zero(&self.space);
                for (kp, bq) in row.iter().enumerate() {
                    let zi = self.zexpr(kp, i);
                    col = &col + &(bq * &zi);
                    let mut db = bq.diff(j);
                    for k in 0..n_y {
                        db = &db + &(&bq.diff(n + k) * &self.zexpr(k, j));
                    }
                    dcol = &dcol + &(&db * &zi);
                }
                self.push(&mut terms, MeasureKey::Mu, Op::Phi, &-&dcol, &ctx)?;
                self.push(&mut terms, MeasureKey::Mu, Op::Dx(j), &-&col, &ctx)?;
                for k in 0..n_y {
                    let c = &self.zexpr(k, j) * &col;
                    self.push(&mut terms, MeasureKey::Mu, Op::Dy(k), &-&c, &ctx)?;
                }
                for piece in 0..n_pieces {
                    let c = &self.normal(piece, j)? * &col;
                    self.push(&mut terms, MeasureKey::Boundary(piece), Op::Phi, &c, &ctx)?;
                }
            }
            if let Some(c) = &p.controls {
                for (k, ck) in c.c[r].iter().enumerate() {
                    terms.push(Term {
                        key: MeasureKey::Nu(k),
                        op: Op::Phi,
                        coef: -ck,
                    });
                }
            }
            if let Some(f) = self.finish(kind, terms, d)? {
                out.push(f);
            }
        }

        for (i, bc) in p.boundary.iter().enumerate() {
            match bc {
                BoundaryCondition::Free => {}
                BoundaryCondition::General { g, control } => {
                    for (r, gr) in g.iter().enumerate() {
                        let kind = FamilyKind::BoundaryRow { piece: i, row: r };
                        let ctx = kind.to_string();
                        let mut terms = Vec::new();
                        self.push(&mut terms, MeasureKey::Boundary(i), Op::Phi, &self.substitute(gr)?, &ctx)?;
                        if let Some(c) = control {
                            for (k, ck) in c.c[r].iter().enumerate() {
                                terms.push(Term {
                                    key: MeasureKey::NuB(i, k),
                                    op: Op::Phi,
                                    coef: -ck,
                                });
                            }
                        }
                        if let Some(f) = self.finish(kind, terms, d)? {
                            out.push(f);
                        }
                    }
                }
                BoundaryCondition::Dirichlet(h) => {
                    // quadrature is exact for polynomial data on box faces and
                    // avoids the cancellation of expanding h^k in monomials
                    let on_face = p.geometry.is_box() && p.geometry.pieces[i].face.is_some();
                    let rhs = match h {
                        DirichletData::Polynomial(_) if on_face => {
                            DirichletRhs::Table(self.dirichlet_table(i, h, d, 1e-13)?)
                        }
                        DirichletData::Polynomial(h) => {
                            let coords = p.geometry.space().clone();
                            DirichletRhs::Poly(
                                h.iter()
                                    .map(|q| {
                                        q.map_vars(&coords, |v| {
                                            if v < n {
                                                VarImage::Var(v)
                                            } else {
                                                VarImage::Absent
                                            }
                                        })
                                    })
                                    .collect::<Result<_, _>>()?,
                            )
                        }
                        DirichletData::Function(_) => DirichletRhs::Table(self.dirichlet_table(i, h, d, 1e-10)?),
                    };
                    out.push(Family {
                        kind: FamilyKind::Dirichlet { piece: i },
                        terms: vec![Term {
                            key: MeasureKey::Boundary(i),
                            op: Op::Phi,
                            coef: self.one(),
                        }],
                        x_only: false,
                        degree: d,
                        rhs: Rhs::Dirichlet(i, rhs),
                    });
                }
                BoundaryCondition::Periodic { target, map } => {
                    let coords = p.geometry.space().clone();
                    let coord_map: Vec<Polynomial> = map
                        .iter()
                        .map(|q| {
                            q.map_vars(&coords, |v| {
                                if v < n {
                                    VarImage::Var(v)
                                } else {
                                    VarImage::Absent
                                }
                            })
                        })
                        .collect::<Result<_, _>>()?;
                    let defect = p.geometry.measure_preservation_defect(i, *target, &coord_map, d)?;
                    if defect > 1e-10 {
                        return Err(AssemblyError::PeriodicNotPreserving {
                            from: i,
                            to: *target,
                            defect,
                        });
                    }
                    let deg_h = map.iter().map(Polynomial::degree).max().unwrap_or(1).max(1);
                    let images: Vec<Polynomial> = (0..self.space.dim())
                        .map(|v| {
                            if v < n {
                                map[v].clone()
                            } else {
                                Polynomial::var(&self.space, v)
                            }
                        })
                        .collect();
                    out.push(Family {
                        kind: FamilyKind::Periodic {
                            from: i,
                            to: *target,
                        },
                        terms: vec![
                            Term {
                                key: MeasureKey::Boundary(*target),
                                op: Op::Phi,
                                coef: self.one(),
                            },
                            Term {
                                key: MeasureKey::Boundary(i),
                                op: Op::Pull(Arc::new(images)),
                                coef: self.one().scale(-1.0),
                            },
                        ],
                        x_only: false,
                        degree: match p.reductions.periodic_degree {
                            PeriodicDegree::Shifted => d.checked_sub(deg_h).ok_or_else(|| {
                                AssemblyError::DegreeTooSmall {
                                    family: format!("periodic {i}->{target}"),
                                    need: deg_h,
                                    d,
                                }
                            })?,
                            PeriodicDegree::Maximal => d / deg_h,
                        },
                        rhs: Rhs::Zero,
                    });
                }
            }
        }

        for i in 0..n_pieces {
            out.push(Family {
                kind: FamilyKind::Marginal { piece: i },
                terms: vec![Term {
                    key: MeasureKey::Boundary(i),
                    op: Op::Phi,
                    coef: self.one(),
                }],
                x_only: true,
                degree: d,
                rhs: Rhs::Sigma(i),
            });
        }

        let slack = |kind, nu, hat, base| Family {
            kind,
            terms: vec![
                Term {
                    key: nu,
                    op: Op::Phi,
                    coef: self.one(),
                },
                Term {
                    key: hat,
                    op: Op::Phi,
                    coef: self.one(),
                },
                Term {
                    key: base,
                    op: Op::Phi,
                    coef: self.one().scale(-1.0),
                },
            ],
            x_only: false,
            degree: d,
            rhs: Rhs::Zero,
        };
        if p.controls.is_some() {
            for k in 0..self.u_vars.len() {
                out.push(slack(
                    FamilyKind::Slack { channel: k },
                    MeasureKey::Nu(k),
                    MeasureKey::NuHat(k),
                    MeasureKey::Mu,
                ));
            }
        }
        for (i, bc) in p.boundary.iter().enumerate() {
            if let BoundaryCondition::General {
                control: Some(c), ..
            } = bc
            {
                for k in 0..c.bounds.len() {
                    out.push(slack(
                        FamilyKind::BoundarySlack { piece: i, channel: k },
                        MeasureKey::NuB(i, k),
                        MeasureKey::NuHatB(i, k),
                        MeasureKey::Boundary(i),
                    ));
                }
            }
        }
        Ok(out)
    }

    /// `int_piece x^a h(x)^b dsigma` for `|(a, b)| <= d` by quadrature.
    fn dirichlet_table(&self, piece: usize, h: &DirichletData, d: u32, tol: f64) -> Result<HashMap<Vec<u32>, f64>, AssemblyError> {
        let g = &self.p.geometry;
        let face = g.pieces[piece].face.filter(|_| g.is_box()).ok_or_else(|| {
            AssemblyError::Unsupported(format!(
                "Dirichlet data given as a function on piece {piece} needs a box face"
            ))
        })?;
        let (lo, hi) = g.box_bounds().expect("box");
        let region = Region::face(lo, hi, face.axis, face.value);
        let dim = self.n + self.n_y;
        let basis = MonomialBasis::graded(dim, d);
        let n_y = self.n_y;
        let vals = moments_converged(&region, &basis, tol, &|x: &[f64]| {
            let mut v = x.to_vec();
            let hv = h.eval(x);
            v.extend_from_slice(&hv[..n_y]);
            (v, 1.0)
        })?;
        Ok(basis
            .monomials()
            .iter()
            .zip(vals)
            .map(|(m, v)| (m.exponents().collect(), v))
            .collect())
    }

    /// Objective coefficients per measure, after substitution and routing.
    fn objective(&self) -> Result<Vec<(MeasureKey, Polynomial)>, AssemblyError> {
        let o = &self.p.objective;
        let mut out = self.route(MeasureKey::Mu, &self.substitute(&o.l)?, "objective")?;
        for (&i, l) in &o.l_boundary {
            out.extend(self.route(MeasureKey::Boundary(i), &self.substitute(l)?, "boundary objective")?);
        }
        for (k, l) in o.l_u.iter().enumerate() {
            out.push((MeasureKey::Nu(k), l.clone()));
        }
        for (&i, ls) in &o.l_u_boundary {
            for (k, l) in ls.iter().enumerate() {
                out.push((MeasureKey::NuB(i, k), l.clone()));
            }
        }
        out.retain(|(_, q)| !q.is_zero());
        Ok(out)
    }
}

fn z_degree(m: &MultiIndex, z_pos: &[usize]) -> u32 {
    m.degree_in(z_pos)
}

/// Every test monomial of degree `<= deg` in `(x, y)` (or `x` only), over
/// the full space.
fn test_monomials(space: &VariableSpace, n: usize, n_y: usize, deg: u32, x_only: bool) -> Vec<MultiIndex> {
    let k = if x_only { n } else { n + n_y };
    let dim = space.dim();
    mono_basis(k, deg)
        .into_iter()
        .map(|m| {
            let mut e: Vec<u32> = m.exponents().collect();
            e.resize(dim, 0);
            MultiIndex::from_exponents(&e)
        })
        .collect()
}

/// Maximal test degree of each constraint family (after rescaling).
pub fn test_degrees(problem: &PdeProblem, d: u32) -> Result<Vec<(FamilyKind, u32)>, AssemblyError> {
    problem.validate()?;
    let (scaled, _) = rescale(problem)?;
    let b = Builder::new(&scaled);
    Ok(b.families(d)?.iter().map(|f| (f.kind, f.degree)).collect())
}

/// Build the degree-`d` relaxation. The z-degree cap comes from
/// `problem.reductions.d_tilde` (default `d`).
pub fn build_sdp(problem: &PdeProblem, d: u32) -> Result<AssembledSdp, AssemblyError> {
    if d == 0 || d % 2 != 0 {
        return Err(AssemblyError::BadDegree(d));
    }
    problem.validate()?;
    let (sp, scaling) = rescale(problem)?;
    let d_tilde = sp.reductions.d_tilde.unwrap_or(d).min(d);
    let b = Builder::new(&sp);
    let families = b.families(d)?;
    let objective = b.objective()?;
    let space = sp.space.clone();
    let (n, n_y) = (sp.n, sp.n_y);
    let geom = &sp.geometry;

    // measures and the z variables each one carries
    let mut keys: BTreeSet<MeasureKey> = BTreeSet::new();
    keys.insert(MeasureKey::Mu);
    for i in 0..geom.pieces.len() {
        keys.insert(MeasureKey::Boundary(i));
    }
    if let Some(c) = &sp.controls {
        for k in 0..c.bounds.len() {
            keys.insert(MeasureKey::Nu(k));
            keys.insert(MeasureKey::NuHat(k));
        }
    }
    for (i, bc) in sp.boundary.iter().enumerate() {
        if let BoundaryCondition::General {
            control: Some(c), ..
        } = bc
        {
            for k in 0..c.bounds.len() {
                keys.insert(MeasureKey::NuB(i, k));
                keys.insert(MeasureKey::NuHatB(i, k));
            }
        }
    }
    let z_all = space.indices_of(VarKind::Z);
    let mut z_used: BTreeMap<MeasureKey, BTreeSet<usize>> = BTreeMap::new();
    let mut note = |key: MeasureKey, q: &Polynomial| {
        let e = z_used.entry(key).or_default();
        for &v in &z_all {
            if q.uses_var(v) {
                e.insert(v);
            }
        }
    };
    for f in &families {
        for t in &f.terms {
            note(t.key, &t.coef);
        }
    }
    for (k, q) in &objective {
        note(*k, q);
    }

    let y_vars = space.indices_of(VarKind::Y);
    let omega_ineq: Vec<Polynomial> = geom
        .omega
        .all_inequalities()
        .iter()
        .map(|g| b.lift(g))
        .collect::<Result<_, _>>()?;
    let mut measures = Vec::with_capacity(keys.len());
    let mut offset = 0;
    let mut unbounded = false;
    for key in keys {
        let piece = key.piece();
        let mut fixed = None;
        let mut vars: Vec<usize> = (0..n).collect();
        if let Some(i) = piece {
            if let Some(f) = geom.pieces[i].face.filter(|_| geom.is_box()) {
                vars.retain(|&v| v != f.axis);
                fixed = Some((f.axis, f.value));
            }
        }
        vars.extend(&y_vars);
        let carries_z = matches!(key, MeasureKey::Mu | MeasureKey::Boundary(_));
        if carries_z {
            if let Some(zs) = z_used.get(&key) {
                vars.extend(zs.iter());
            }
        }
        let local = space.subspace(&vars);
        let z_pos = local.indices_of(VarKind::Z);
        let basis = if z_pos.is_empty() || d_tilde >= d {
            MonomialBasis::cached(vars.len(), d)
        } else {
            Arc::new(MonomialBasis::filtered(vars.len(), d, |m| z_degree(m, &z_pos) <= d_tilde))
        };
        let mut layout = MeasureLayout {
            key,
            name: key.to_string(),
            role: key.role(),
            vars,
            fixed,
            space: local,
            basis,
            offset,
            supports: Vec::new(),
        };
        // supports
        let mut cand: Vec<Polynomial> = Vec::new();
        match piece {
            None => cand.extend(omega_ineq.iter().cloned()),
            Some(i) => {
                let pc = &geom.pieces[i];
                for g in &pc.inequalities {
                    cand.push(b.lift(g)?);
                }
                if fixed.is_none() {
                    let h = b.lift(&pc.h)?;
                    cand.push(-&h);
                    cand.push(h);
                }
            }
        }
        let yb = sp.bounds.y_on(piece);
        if yb.inequalities.is_empty() {
            unbounded = true;
        }
        cand.extend(yb.inequalities.iter().cloned());
        if carries_z && layout.space.count(VarKind::Z) > 0 {
            let zb = sp.bounds.z_on(piece);
            if zb.inequalities.is_empty() {
                unbounded = true;
            }
            cand.extend(zb.inequalities.iter().cloned());
        }
        for g in cand {
            if let Ok(gl) = layout.localize_poly(&g) {
                if gl.degree() > 0 {
                    layout.supports.push(gl);
                }
            }
        }
        offset += layout.basis.len();
        measures.push(layout);
    }
    let n_vars = offset;
    let index: HashMap<MeasureKey, usize> = measures.iter().enumerate().map(|(i, m)| (m.key, i)).collect();

    // rows
    let mut cp = ConicProblem::new(n_vars, sp.sense);
    let mut tags = Vec::new();
    let mut test_degrees = Vec::new();
    let (mut trivial, mut duplicates, mut capped) = (0usize, 0usize, 0usize);
    let mut seen: HashSet<(Vec<(usize, u64)>, u64)> = HashSet::new();
    for fam in &families {
        test_degrees.push((fam.kind, fam.degree));
        for test in test_monomials(&space, n, n_y, fam.degree, fam.x_only) {
            let phi = Polynomial::monomial(&space, test.clone(), 1.0);
            let mut parts: BTreeMap<MeasureKey, Polynomial> = BTreeMap::new();
            for t in &fam.terms {
                let q = &t.op.apply(&phi, n)? * &t.coef;
                let e = parts.entry(t.key).or_insert_with(|| Polynomial::zero(&space));
                *e = &*e + &q;
            }
            let rhs = match &fam.rhs {
                Rhs::Zero => 0.0,
                Rhs::Sigma(i) => {
                    let xm: Vec<u32> = (0..n).map(|v| test.exponent(v)).collect();
                    geom.surface_moment(*i, &MultiIndex::from_exponents(&xm))?
                }
                Rhs::Dirichlet(i, DirichletRhs::Poly(h)) => {
                    let coords = geom.space();
                    let mut q = Polynomial::constant(coords, 1.0);
                    for v in 0..n {
                        let e = test.exponent(v);
                        if e > 0 {
                            q = &q * &Polynomial::var(coords, v).pow(e);
                        }
                    }
                    for (k, hk) in h.iter().enumerate() {
                        let e = test.exponent(n + k);
                        if e > 0 {
                            q = &q * &hk.pow(e);
                        }
                    }
                    geom.surface_integral(*i, &q)?
                }
                Rhs::Dirichlet(_, DirichletRhs::Table(t)) => {
                    let key: Vec<u32> = (0..n + n_y).map(|v| test.exponent(v)).collect();
                    t[&key]
                }
            };
            let mut row: BTreeMap<usize, f64> = BTreeMap::new();
            let mut over_cap = false;
            for (key, q) in &parts {
                let lay = &measures[index[key]];
                for (m, c) in q.terms() {
                    let (lm, factor) = lay.localize(m).ok_or_else(|| {
                        AssemblyError::Unsupported(format!(
                            "{}: term {} not carried by {}",
                            fam.kind,
                            Polynomial::monomial(&space, m.clone(), 1.0),
                            lay.name
                        ))
                    })?;
                    let v = c * factor;
                    if v == 0.0 {
                        continue;
                    }
                    match lay.basis.position(&lm) {
                        Some(pos) => *row.entry(lay.offset + pos).or_insert(0.0) += v,
                        None if lm.degree() <= d => over_cap = true,
                        None => {
                            return Err(AssemblyError::DegreeTooSmall {
                                family: fam.kind.to_string(),
                                need: lm.degree(),
                                d,
                            })
                        }
                    }
                }
            }
            if over_cap {
                capped += 1;
                continue;
            }
            let scale = row.values().fold(0.0f64, |a, v| a.max(v.abs()));
            let coeffs: Vec<(usize, f64)> = row
                .into_iter()
                .filter(|&(_, v)| v.abs() > 1e-13 * scale)
                .collect();
            let tag = RowTag {
                family: fam.kind,
                test,
            };
            if coeffs.is_empty() {
                if rhs.abs() > 1e-12 {
                    return Err(AssemblyError::InconsistentRow {
                        tag: tag.describe(&space),
                        rhs,
                    });
                }
                trivial += 1;
                continue;
            }
            let hash_key = (
                coeffs.iter().map(|&(k, v)| (k, (v + 0.0).to_bits())).collect::<Vec<_>>(),
                (rhs + 0.0).to_bits(),
            );
            if !seen.insert(hash_key) {
                duplicates += 1;
                continue;
            }
            cp.add_equality(coeffs, rhs);
            tags.push(tag);
        }
    }

    // objective
    for (key, q) in &objective {
        let lay = &measures[index[key]];
        for (m, c) in q.terms() {
            let (lm, factor) = lay.localize(m).ok_or_else(|| {
                AssemblyError::Unsupported(format!("objective term not carried by {}", lay.name))
            })?;
            let pos = lay.basis.position(&lm).ok_or_else(|| AssemblyError::DegreeTooSmall {
                family: "objective".into(),
                need: lm.degree(),
                d,
            })?;
            cp.c[lay.offset + pos] += c * factor;
        }
    }

    // PSD blocks
    for lay in &measures {
        let dim = lay.vars.len();
        let z_pos = lay.z_positions();
        let rows_for = |r: u32, zr: u32| -> Vec<MultiIndex> {
            mono_basis(dim, r)
                .into_iter()
                .filter(|m| z_degree(m, &z_pos) <= zr)
                .collect()
        };
        let one = Polynomial::constant(&lay.space, 1.0);
        let mut gens: Vec<(String, Polynomial)> = vec![(format!("{}:M", lay.name), one)];
        for (gi, g) in lay.supports.iter().enumerate() {
            gens.push((format!("{}:g{gi}", lay.name), g.clone()));
        }
        for (name, g) in gens {
            let (dg, zg) = (g.degree(), g.degree_in(&z_pos));
            if dg > d || zg > d_tilde {
                continue;
            }
            let rows = rows_for((d - dg) / 2, (d_tilde - zg) / 2);
            if rows.is_empty() {
                continue;
            }
            let map = LocalizingMap::new(&lay.basis, &rows, &g)?;
            let mut blk = PsdBlock::new(name, map.size);
            for &(i, j, pos, c) in &map.entries {
                blk.push(i, j, lay.offset + pos, c);
            }
            cp.blocks.push(blk);
        }
    }
    let cp = cp.canonical();
    Ok(AssembledSdp {
        problem: cp,
        measures,
        tags,
        d,
        d_tilde,
        test_degrees,
        trivial_rows: trivial,
        duplicate_rows: duplicates,
        capped_rows: capped,
        scaling,
        unbounded_support: unbounded,
        scaled: sp,
    })
}
