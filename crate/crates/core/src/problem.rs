//! Declarative description of a polynomial PDE analysis or control problem.
//!
//! Every polynomial lives in the full space `VariableSpace::pde(n, n_y, n_u)`
//! (`x`, `y`, `z`, `u` blocks); the role of each field restricts which blocks
//! may appear.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use pdemom_sdp::Sense;

use crate::polyalg::{Polynomial, VarKind, VariableSpace};
use crate::semialg::DomainGeometry;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProblemError {
    #[error("{field}: uses the {kind:?} block, which is not allowed here")]
    ForbiddenBlock { field: String, kind: VarKind },
    #[error("{field}: expected {want} entries, got {got}")]
    Shape {
        field: String,
        want: usize,
        got: usize,
    },
    #[error("boundary piece {0} has more than one condition")]
    DuplicateCondition(usize),
    #[error("boundary piece {0} does not exist")]
    NoSuchPiece(usize),
    #[error("periodic map from piece {from} to {to}: {msg}")]
    Periodic { from: usize, to: usize, msg: String },
    #[error("substitution for {var}: {msg}")]
    Substitution { var: String, msg: String },
    #[error("empty input interval [{lo}, {hi}] for control {channel}")]
    EmptyInput { channel: usize, lo: f64, hi: f64 },
    #[error("control problems are minimizations")]
    ControlSense,
    #[error("{0}")]
    Invalid(String),
}

/// Prescribed boundary values `y = h(x)` on a piece.
#[derive(Clone)]
pub enum DirichletData {
    /// One polynomial per unknown, in the `x` block only.
    Polynomial(Vec<Polynomial>),
    /// Arbitrary integrable data, evaluated at a point of the piece.
    Function(Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>),
}

impl DirichletData {
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        match self {
            DirichletData::Polynomial(h) => {
                let dim = h.first().map_or(0, |p| p.space().dim());
                let mut pt = vec![0.0; dim];
                pt[..x.len()].copy_from_slice(x);
                h.iter().map(|p| p.eval(&pt)).collect()
            }
            DirichletData::Function(f) => f(x),
        }
    }
}

impl fmt::Debug for DirichletData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DirichletData::Polynomial(h) => f.debug_tuple("Polynomial").field(h).finish(),
            DirichletData::Function(_) => f.write_str("Function(..)"),
        }
    }
}

/// Boundary control entering `G_i = C_i u_i`.
#[derive(Clone, Debug)]
pub struct BoundaryControl {
    /// `n_G x n_ui` matrix over `(x, y)`.
    pub c: Vec<Vec<Polynomial>>,
    /// Physical input box per channel.
    pub bounds: Vec<(f64, f64)>,
}

#[derive(Clone, Debug)]
pub enum BoundaryCondition {
    /// No condition (`G = 0`).
    Free,
    /// `G_i(x, y, z) = C_i(x, y) u_i`, one row per component.
    General {
        g: Vec<Polynomial>,
        control: Option<BoundaryControl>,
    },
    Dirichlet(DirichletData),
    /// `y(x) = y(h(x))` for `x` on this piece, `h` mapping onto `target`.
    Periodic { target: usize, map: Vec<Polynomial> },
}

/// `B_{ij}` multiplies `d^2 y / dx_i dx_j`; `matrix` is `n_F x n_y` over `(x, y)`.
#[derive(Clone, Debug)]
pub struct SecondOrderTerm {
    pub i: usize,
    pub j: usize,
    pub matrix: Vec<Vec<Polynomial>>,
}

/// Distributed control `F + sum B d^2y = C u` with `u` in a box.
#[derive(Clone, Debug)]
pub struct Controls {
    /// `n_F x n_u` over `(x, y)`.
    pub c: Vec<Vec<Polynomial>>,
    pub bounds: Vec<(f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct Objective {
    /// Integrand over `Omega`, in `(x, y, z)`.
    pub l: Polynomial,
    /// Integrands over boundary pieces.
    pub l_boundary: BTreeMap<usize, Polynomial>,
    /// Coefficients of the distributed control, `(x, y)` only.
    pub l_u: Vec<Polynomial>,
    /// Coefficients of boundary controls per piece.
    pub l_u_boundary: BTreeMap<usize, Vec<Polynomial>>,
}

impl Objective {
    pub fn new(l: Polynomial) -> Self {
        Objective {
            l,
            l_boundary: BTreeMap::new(),
            l_u: Vec::new(),
            l_u_boundary: BTreeMap::new(),
        }
    }
}

/// Semialgebraic constraints `g >= 0` on one variable block.
#[derive(Clone, Debug, Default)]
pub struct VarBounds {
    pub inequalities: Vec<Polynomial>,
    /// Redundant ball `N^2 - |v|^2 >= 0` over the block.
    pub ball: Option<f64>,
}

impl VarBounds {
    pub fn is_unbounded(&self) -> bool {
        self.inequalities.is_empty() && self.ball.is_none()
    }

    /// Interval bounds per variable of `vars`, with the matching ball.
    pub fn boxed(space: &VariableSpace, vars: &[usize], lo: &[f64], hi: &[f64]) -> Self {
        let mut inequalities = Vec::with_capacity(vars.len());
        let mut r2 = 0.0;
        for ((&v, &a), &b) in vars.iter().zip(lo).zip(hi) {
            let x = Polynomial::var(space, v);
            let g = &(&x - &Polynomial::constant(space, a)) * &(&Polynomial::constant(space, b) - &x);
            inequalities.push(g);
            r2 += a.abs().max(b.abs()).powi(2);
        }
        VarBounds {
            inequalities,
            ball: Some(r2.sqrt()),
        }
    }

    /// Inequalities with the ball written out over `vars`.
    pub fn expanded(&self, space: &VariableSpace, vars: &[usize]) -> Vec<Polynomial> {
        let mut out = self.inequalities.clone();
        if let Some(r) = self.ball {
            let mut g = Polynomial::constant(space, r * r);
            for &v in vars {
                let x = Polynomial::var(space, v);
                g = &g - &(&x * &x);
            }
            out.push(g);
        }
        out
    }
}

#[derive(Clone, Debug, Default)]
pub struct Bounds {
    pub y: VarBounds,
    pub z: VarBounds,
    pub y_boundary: BTreeMap<usize, VarBounds>,
    pub z_boundary: BTreeMap<usize, VarBounds>,
}

impl Bounds {
    pub fn y_on(&self, piece: Option<usize>) -> &VarBounds {
        piece.and_then(|i| self.y_boundary.get(&i)).unwrap_or(&self.y)
    }

    pub fn z_on(&self, piece: Option<usize>) -> &VarBounds {
        piece.and_then(|i| self.z_boundary.get(&i)).unwrap_or(&self.z)
    }
}

/// Maximal degree of the test functions in periodic rows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PeriodicDegree {
    /// `d - deg h`.
    Shifted,
    /// Largest degree keeping `phi(h(x), y)` within `d`, i.e. `d / deg h`.
    #[default]
    Maximal,
}

/// Derivatives solved for explicitly, `z_{k,j} := expr(x, y, kept z, u)`,
/// the optional degree cap on `z` moments and the periodic test degree.
#[derive(Clone, Debug, Default)]
pub struct Reductions {
    /// `(index of z_{k,j} in the full space, expression)`.
    pub substitutions: Vec<(usize, Polynomial)>,
    pub d_tilde: Option<u32>,
    pub periodic_degree: PeriodicDegree,
}

#[derive(Clone, Debug)]
pub struct PdeProblem {
    pub name: String,
    pub geometry: DomainGeometry,
    pub space: VariableSpace,
    pub n: usize,
    pub n_y: usize,
    /// Rows of `F(x, y, z)`.
    pub f: Vec<Polynomial>,
    pub b: Vec<SecondOrderTerm>,
    /// One condition per boundary piece.
    pub boundary: Vec<BoundaryCondition>,
    pub controls: Option<Controls>,
    pub objective: Objective,
    pub bounds: Bounds,
    pub reductions: Reductions,
    pub sense: Sense,
}

fn check_blocks(field: &str, p: &Polynomial, allowed: &[VarKind]) -> Result<(), ProblemError> {
    let space = p.space();
    for v in 0..space.dim() {
        if p.uses_var(v) && !allowed.contains(&space.kind(v)) {
            return Err(ProblemError::ForbiddenBlock {
                field: field.to_string(),
                kind: space.kind(v),
            });
        }
    }
    Ok(())
}

fn check_len(field: &str, got: usize, want: usize) -> Result<(), ProblemError> {
    if got != want {
        return Err(ProblemError::Shape {
            field: field.to_string(),
            want,
            got,
        });
    }
    Ok(())
}

fn check_inputs(bounds: &[(f64, f64)]) -> Result<(), ProblemError> {
    for (k, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(ProblemError::EmptyInput { channel: k, lo, hi });
        }
    }
    Ok(())
}

impl PdeProblem {
    /// Problem with no equations, free boundary, zero objective.
    pub fn new(name: &str, geometry: DomainGeometry, n_y: usize, n_u: usize) -> Self {
        let n = geometry.dim();
        let space = VariableSpace::pde(n, n_y, n_u);
        let n_pieces = geometry.pieces.len();
        PdeProblem {
            name: name.to_string(),
            geometry,
            objective: Objective::new(Polynomial::zero(&space)),
            space,
            n,
            n_y,
            f: Vec::new(),
            b: Vec::new(),
            boundary: vec![BoundaryCondition::Free; n_pieces],
            controls: None,
            bounds: Bounds::default(),
            reductions: Reductions::default(),
            sense: Sense::Minimize,
        }
    }

    pub fn n_u(&self) -> usize {
        self.space.count(VarKind::U)
    }

    pub fn is_control(&self) -> bool {
        self.controls.is_some()
            || self.boundary.iter().any(|b| {
                matches!(
                    b,
                    BoundaryCondition::General {
                        control: Some(_),
                        ..
                    }
                )
            })
    }

    /// Position of `z_{k,j}` (0-based) in the full space.
    pub fn z_index(&self, k: usize, j: usize) -> usize {
        self.n + self.n_y + k * self.n + j
    }

    pub fn parse_poly(&self, text: &str) -> Result<Polynomial, crate::polyalg::PolyError> {
        Polynomial::parse(text, &self.space)
    }

    /// Structural checks; see [`ProblemError`].
    pub fn validate(&self) -> Result<(), ProblemError> {
        use VarKind::{U, X, Y, Z};
        let n_f = self.f.len();
        for (r, f) in self.f.iter().enumerate() {
            check_blocks(&format!("pde row {r}"), f, &[X, Y, Z])?;
        }
        for t in &self.b {
            if t.i >= self.n || t.j >= self.n {
                return Err(ProblemError::Invalid(format!(
                    "second-order term ({}, {}) outside {} coordinates",
                    t.i + 1,
                    t.j + 1,
                    self.n
                )));
            }
            check_len("second-order matrix rows", t.matrix.len(), n_f)?;
            for row in &t.matrix {
                check_len("second-order matrix columns", row.len(), self.n_y)?;
                for p in row {
                    check_blocks("second-order coefficient", p, &[X, Y])?;
                }
            }
        }
        check_len("boundary conditions", self.boundary.len(), self.geometry.pieces.len())?;
        let mut periodic_targets = Vec::new();
        for (i, bc) in self.boundary.iter().enumerate() {
            match bc {
                BoundaryCondition::Free => {}
                BoundaryCondition::General { g, control } => {
                    for p in g {
                        check_blocks(&format!("boundary {i}"), p, &[X, Y, Z])?;
                    }
                    if let Some(c) = control {
                        check_len("boundary control rows", c.c.len(), g.len())?;
                        check_inputs(&c.bounds)?;
                        for row in &c.c {
                            check_len("boundary control columns", row.len(), c.bounds.len())?;
                            for p in row {
                                check_blocks("boundary control coefficient", p, &[X, Y])?;
                            }
                        }
                    }
                }
                BoundaryCondition::Dirichlet(h) => {
                    if let DirichletData::Polynomial(h) = h {
                        check_len(&format!("dirichlet data on piece {i}"), h.len(), self.n_y)?;
                        for p in h {
                            check_blocks("dirichlet data", p, &[X])?;
                        }
                    }
                }
                BoundaryCondition::Periodic { target, map } => {
                    if *target >= self.boundary.len() {
                        return Err(ProblemError::NoSuchPiece(*target));
                    }
                    if *target == i {
                        return Err(ProblemError::Periodic {
                            from: i,
                            to: *target,
                            msg: "a piece cannot map onto itself".into(),
                        });
                    }
                    check_len("periodic map", map.len(), self.n)?;
                    for p in map {
                        check_blocks("periodic map", p, &[X])?;
                    }
                    if !matches!(self.boundary[*target], BoundaryCondition::Free) {
                        return Err(ProblemError::Periodic {
                            from: i,
                            to: *target,
                            msg: "the target piece must not carry its own condition".into(),
                        });
                    }
                    if periodic_targets.contains(target) {
                        return Err(ProblemError::DuplicateCondition(*target));
                    }
                    periodic_targets.push(*target);
                }
            }
        }
        if let Some(c) = &self.controls {
            check_len("control matrix rows", c.c.len(), n_f)?;
            check_len("control bounds", c.bounds.len(), self.n_u())?;
            check_inputs(&c.bounds)?;
            for row in &c.c {
                check_len("control matrix columns", row.len(), self.n_u())?;
                for p in row {
                    check_blocks("control coefficient", p, &[X, Y])?;
                }
            }
        } else if self.n_u() > 0 {
            return Err(ProblemError::Invalid(
                "control variables declared without a control matrix".into(),
            ));
        }
        check_blocks("objective", &self.objective.l, &[X, Y, Z])?;
        for (&i, p) in &self.objective.l_boundary {
            if i >= self.boundary.len() {
                return Err(ProblemError::NoSuchPiece(i));
            }
            check_blocks("boundary objective", p, &[X, Y, Z])?;
        }
        if !self.objective.l_u.is_empty() {
            check_len("control objective", self.objective.l_u.len(), self.n_u())?;
        }
        for p in &self.objective.l_u {
            check_blocks("control objective", p, &[X, Y])?;
        }
        for (&i, ps) in &self.objective.l_u_boundary {
            let nu = match self.boundary.get(i) {
                Some(BoundaryCondition::General {
                    control: Some(c), ..
                }) => c.bounds.len(),
                Some(_) => 0,
                None => return Err(ProblemError::NoSuchPiece(i)),
            };
            check_len("boundary control objective", ps.len(), nu)?;
            for p in ps {
                check_blocks("boundary control objective", p, &[X, Y])?;
            }
        }
        for g in &self.bounds.y.inequalities {
            check_blocks("y bounds", g, &[Y])?;
        }
        for g in &self.bounds.z.inequalities {
            check_blocks("z bounds", g, &[Z])?;
        }
        for (&i, b) in &self.bounds.y_boundary {
            if i >= self.boundary.len() {
                return Err(ProblemError::NoSuchPiece(i));
            }
            for g in &b.inequalities {
                check_blocks("boundary y bounds", g, &[Y])?;
            }
        }
        for (&i, b) in &self.bounds.z_boundary {
            if i >= self.boundary.len() {
                return Err(ProblemError::NoSuchPiece(i));
            }
            for g in &b.inequalities {
                check_blocks("boundary z bounds", g, &[Z])?;
            }
        }
        let eliminated: Vec<usize> = self.reductions.substitutions.iter().map(|s| s.0).collect();
        for (v, expr) in &self.reductions.substitutions {
            let name = self.space.name(*v).to_string();
            if self.space.kind(*v) != Z {
                return Err(ProblemError::Substitution {
                    var: name,
                    msg: "only derivatives can be eliminated".into(),
                });
            }
            if eliminated.iter().filter(|&&e| e == *v).count() > 1 {
                return Err(ProblemError::Substitution {
                    var: name,
                    msg: "declared twice".into(),
                });
            }
            for &e in &eliminated {
                if expr.uses_var(e) {
                    return Err(ProblemError::Substitution {
                        var: name,
                        msg: format!("expression references eliminated {}", self.space.name(e)),
                    });
                }
            }
            check_blocks(&format!("substitution for {name}"), expr, &[X, Y, Z, U])?;
            for (m, _) in expr.terms() {
                if m.degree_in(&self.space.indices_of(U)) > 1 {
                    return Err(ProblemError::Substitution {
                        var: name,
                        msg: "controls must enter linearly".into(),
                    });
                }
            }
        }
        if self.is_control() && self.sense != Sense::Minimize {
            return Err(ProblemError::ControlSense);
        }
        Ok(())
    }
}
