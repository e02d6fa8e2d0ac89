//! JSON problem files. Unknown keys are rejected; polynomials are written in
//! the text syntax of [`Polynomial::parse`] over `x1.., y1.., z1_1.., u1..`.
//!
//! ```json
//! {
//!   "name": "transport",
//!   "domain": { "box": { "lo": [0, 0], "hi": [1, 1] } },
//!   "unknowns": { "y": 1 },
//!   "pde": { "f": ["z1_1 + z1_2"] },
//!   "boundary": [
//!     { "piece": 0, "dirichlet": ["x2^2"] },
//!     { "piece": 2, "dirichlet": ["x1^2"] }
//!   ],
//!   "objective": { "sense": "min", "l": "y1^2" },
//!   "relaxation": { "d": 4 }
//! }
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use pdemom_sdp::Sense;
use serde::Deserialize;

use crate::polyalg::{PolyError, Polynomial, VariableSpace};
use crate::problem::{
    BoundaryCondition, BoundaryControl, Bounds, Controls, DirichletData, Objective, PdeProblem,
    PeriodicDegree, ProblemError, Reductions, SecondOrderTerm, VarBounds,
};
use crate::semialg::{box_domain, BoundaryPiece, DomainGeometry, GeometryError, SemialgebraicSet, SigmaTable};

#[derive(Debug, thiserror::Error)]
pub enum ProblemFileError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}, column {column}: {msg}")]
    Syntax { line: usize, column: usize, msg: String },
    #[error("{field}: {source}")]
    Poly { field: String, source: PolyError },
    #[error("{field}: {msg}")]
    Field { field: String, msg: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

fn field_err(field: impl Into<String>, msg: impl Into<String>) -> ProblemFileError {
    ProblemFileError::Field {
        field: field.into(),
        msg: msg.into(),
    }
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct FileDoc {
    name: Option<String>,
    domain: DomainDoc,
    unknowns: UnknownsDoc,
    pde: PdeDoc,
    #[serde(default)]
    boundary: Vec<BoundaryDoc>,
    controls: Option<ControlsDoc>,
    objective: ObjectiveDoc,
    #[serde(default)]
    bounds: BoundsDoc,
    #[serde(default)]
    reductions: ReductionsDoc,
    #[serde(default)]
    relaxation: RelaxationDoc,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
enum DomainDoc {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Semialgebraic {
        dim: usize,
        inequalities: Vec<String>,
        pieces: Vec<PieceDoc>,
        /// Either the table itself or a path relative to the problem file.
        sigma: String,
    },
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct PieceDoc {
    h: String,
    #[serde(default)]
    inequalities: Vec<String>,
    normal_gradient: Vec<String>,
    #[serde(default)]
    unit_normal: bool,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct UnknownsDoc {
    y: usize,
    #[serde(default)]
    u: usize,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct PdeDoc {
    f: Vec<String>,
    #[serde(default)]
    second_order: Vec<SecondOrderDoc>,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct SecondOrderDoc {
    /// 1-based coordinate indices.
    i: usize,
    j: usize,
    matrix: Vec<Vec<String>>,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct BoundaryDoc {
    piece: usize,
    dirichlet: Option<Vec<String>>,
    periodic: Option<PeriodicDoc>,
    general: Option<GeneralDoc>,
    #[serde(default)]
    free: bool,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct PeriodicDoc {
    target: usize,
    map: Vec<String>,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct GeneralDoc {
    g: Vec<String>,
    control: Option<ControlsDoc>,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct ControlsDoc {
    c: Vec<Vec<String>>,
    bounds: Vec<[f64; 2]>,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct ObjectiveDoc {
    #[serde(default)]
    sense: SenseDoc,
    l: String,
    #[serde(default)]
    boundary: BTreeMap<usize, String>,
    #[serde(default)]
    l_u: Vec<String>,
    #[serde(default)]
    l_u_boundary: BTreeMap<usize, Vec<String>>,
}

#[derive(Deserialize, Debug, Default, Clone, Copy)]
#[serde(rename_all = "snake_case")]
enum SenseDoc {
    #[default]
    Min,
    Max,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct BoundsDoc {
    #[serde(default)]
    y: VarBoundsDoc,
    #[serde(default)]
    z: VarBoundsDoc,
    #[serde(default)]
    y_boundary: BTreeMap<usize, VarBoundsDoc>,
    #[serde(default)]
    z_boundary: BTreeMap<usize, VarBoundsDoc>,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct VarBoundsDoc {
    #[serde(default)]
    inequalities: Vec<String>,
    ball: Option<f64>,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct ReductionsDoc {
    #[serde(default)]
    substitutions: BTreeMap<String, String>,
    #[serde(default)]
    periodic_degree: PeriodicDegreeDoc,
}

#[derive(Deserialize, Debug, Default, Clone, Copy)]
#[serde(rename_all = "snake_case")]
enum PeriodicDegreeDoc {
    Shifted,
    #[default]
    Maximal,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct RelaxationDoc {
    d: Option<u32>,
    d_tilde: Option<u32>,
}

/// Relaxation settings stored with a problem.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Relaxation {
    pub d: Option<u32>,
    pub d_tilde: Option<u32>,
}

/// A parsed problem file.
#[derive(Clone, Debug)]
pub struct ProblemFile {
    pub problem: PdeProblem,
    pub relaxation: Relaxation,
}

fn parse_in(space: &VariableSpace, field: &str, text: &str) -> Result<Polynomial, ProblemFileError> {
    Polynomial::parse(text, space).map_err(|source| ProblemFileError::Poly {
        field: field.to_string(),
        source,
    })
}

fn parse_all(space: &VariableSpace, field: &str, texts: &[String]) -> Result<Vec<Polynomial>, ProblemFileError> {
    texts
        .iter()
        .enumerate()
        .map(|(k, t)| parse_in(space, &format!("{field}[{k}]"), t))
        .collect()
}

fn parse_matrix(space: &VariableSpace, field: &str, rows: &[Vec<String>]) -> Result<Vec<Vec<Polynomial>>, ProblemFileError> {
    rows.iter()
        .enumerate()
        .map(|(r, row)| parse_all(space, &format!("{field}[{r}]"), row))
        .collect()
}

fn geometry(doc: &DomainDoc, base: Option<&Path>) -> Result<DomainGeometry, ProblemFileError> {
    match doc {
        DomainDoc::Box { lo, hi } => Ok(box_domain(lo, hi)?),
        DomainDoc::Semialgebraic {
            dim,
            inequalities,
            pieces,
            sigma,
        } => {
            let space = VariableSpace::coordinates(*dim);
            let omega = SemialgebraicSet::new(space.clone(), parse_all(&space, "domain.inequalities", inequalities)?);
            let pieces = pieces
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let f = format!("domain.pieces[{i}]");
                    let normal_gradient = parse_all(&space, &format!("{f}.normal_gradient"), &p.normal_gradient)?;
                    if normal_gradient.len() != *dim {
                        return Err(field_err(format!("{f}.normal_gradient"), format!("expected {dim} entries")));
                    }
                    Ok(BoundaryPiece {
                        index: i,
                        h: parse_in(&space, &format!("{f}.h"), &p.h)?,
                        inequalities: parse_all(&space, &format!("{f}.inequalities"), &p.inequalities)?,
                        normal_gradient,
                        is_normal_unit: p.unit_normal,
                        face: None,
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let text = if sigma.lines().count() > 1 || sigma.trim().is_empty() {
                sigma.clone()
            } else {
                let path = base.map_or_else(|| Path::new(sigma).to_path_buf(), |b| b.join(sigma));
                std::fs::read_to_string(&path).map_err(|source| ProblemFileError::Io {
                    path: path.display().to_string(),
                    source,
                })?
            };
            let table = SigmaTable::parse(&text, *dim)?;
            Ok(DomainGeometry::from_parts(omega, pieces, table))
        }
    }
}

fn var_bounds(space: &VariableSpace, field: &str, doc: &VarBoundsDoc) -> Result<VarBounds, ProblemFileError> {
    Ok(VarBounds {
        inequalities: parse_all(space, &format!("{field}.inequalities"), &doc.inequalities)?,
        ball: doc.ball,
    })
}

fn inputs(bounds: &[[f64; 2]]) -> Vec<(f64, f64)> {
    bounds.iter().map(|b| (b[0], b[1])).collect()
}

/// Parses and validates a problem file; `base` resolves relative paths.
pub fn parse_problem(text: &str, base: Option<&Path>) -> Result<ProblemFile, ProblemFileError> {
    let doc: FileDoc = serde_json::from_str(text).map_err(|e| ProblemFileError::Syntax {
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    })?;
    let geom = geometry(&doc.domain, base)?;
    let n_u = doc.unknowns.u;
    let mut p = PdeProblem::new(doc.name.as_deref().unwrap_or("problem"), geom, doc.unknowns.y, n_u);
    let space = p.space.clone();
    p.f = parse_all(&space, "pde.f", &doc.pde.f)?;
    p.b = doc
        .pde
        .second_order
        .iter()
        .enumerate()
        .map(|(k, t)| {
            if t.i == 0 || t.j == 0 {
                return Err(field_err(format!("pde.second_order[{k}]"), "indices are 1-based"));
            }
            Ok(SecondOrderTerm {
                i: t.i - 1,
                j: t.j - 1,
                matrix: parse_matrix(&space, &format!("pde.second_order[{k}].matrix"), &t.matrix)?,
            })
        })
        .collect::<Result<_, _>>()?;
    let n_pieces = p.geometry.pieces.len();
    let mut seen = vec![false; n_pieces];
    for (k, b) in doc.boundary.iter().enumerate() {
        let field = format!("boundary[{k}]");
        if b.piece >= n_pieces {
            return Err(ProblemError::NoSuchPiece(b.piece).into());
        }
        if std::mem::replace(&mut seen[b.piece], true) {
            return Err(ProblemError::DuplicateCondition(b.piece).into());
        }
        let given = usize::from(b.dirichlet.is_some())
            + usize::from(b.periodic.is_some())
            + usize::from(b.general.is_some())
            + usize::from(b.free);
        if given != 1 {
            return Err(field_err(field, "exactly one of dirichlet, periodic, general, free is required"));
        }
        p.boundary[b.piece] = if let Some(h) = &b.dirichlet {
            BoundaryCondition::Dirichlet(DirichletData::Polynomial(parse_all(&space, &format!("{field}.dirichlet"), h)?))
        } else if let Some(per) = &b.periodic {
            BoundaryCondition::Periodic {
                target: per.target,
                map: parse_all(&space, &format!("{field}.periodic.map"), &per.map)?,
            }
        } else if let Some(g) = &b.general {
            BoundaryCondition::General {
                g: parse_all(&space, &format!("{field}.general.g"), &g.g)?,
                control: match &g.control {
                    None => None,
                    Some(c) => Some(BoundaryControl {
                        c: parse_matrix(&space, &format!("{field}.general.control.c"), &c.c)?,
                        bounds: inputs(&c.bounds),
                    }),
                },
            }
        } else {
            BoundaryCondition::Free
        };
    }
    if let Some(c) = &doc.controls {
        p.controls = Some(Controls {
            c: parse_matrix(&space, "controls.c", &c.c)?,
            bounds: inputs(&c.bounds),
        });
    }
    let o = &doc.objective;
    p.objective = Objective {
        l: parse_in(&space, "objective.l", &o.l)?,
        l_boundary: o
            .boundary
            .iter()
            .map(|(&i, t)| Ok((i, parse_in(&space, &format!("objective.boundary.{i}"), t)?)))
            .collect::<Result<_, ProblemFileError>>()?,
        l_u: parse_all(&space, "objective.l_u", &o.l_u)?,
        l_u_boundary: o
            .l_u_boundary
            .iter()
            .map(|(&i, t)| Ok((i, parse_all(&space, &format!("objective.l_u_boundary.{i}"), t)?)))
            .collect::<Result<_, ProblemFileError>>()?,
    };
    p.sense = match o.sense {
        SenseDoc::Min => Sense::Minimize,
        SenseDoc::Max => Sense::Maximize,
    };
    let b = &doc.bounds;
    p.bounds = Bounds {
        y: var_bounds(&space, "bounds.y", &b.y)?,
        z: var_bounds(&space, "bounds.z", &b.z)?,
        y_boundary: b
            .y_boundary
            .iter()
            .map(|(&i, v)| Ok((i, var_bounds(&space, &format!("bounds.y_boundary.{i}"), v)?)))
            .collect::<Result<_, ProblemFileError>>()?,
        z_boundary: b
            .z_boundary
            .iter()
            .map(|(&i, v)| Ok((i, var_bounds(&space, &format!("bounds.z_boundary.{i}"), v)?)))
            .collect::<Result<_, ProblemFileError>>()?,
    };
    let substitutions = doc
        .reductions
        .substitutions
        .iter()
        .map(|(var, expr)| {
            let field = format!("reductions.substitutions.{var}");
            let v = space
                .index_of(var)
                .ok_or_else(|| field_err(&field, format!("unknown variable {var}")))?;
            Ok((v, parse_in(&space, &field, expr)?))
        })
        .collect::<Result<_, ProblemFileError>>()?;
    p.reductions = Reductions {
        substitutions,
        d_tilde: doc.relaxation.d_tilde,
        periodic_degree: match doc.reductions.periodic_degree {
            PeriodicDegreeDoc::Shifted => PeriodicDegree::Shifted,
            PeriodicDegreeDoc::Maximal => PeriodicDegree::Maximal,
        },
    };
    if let Some(d) = doc.relaxation.d {
        if d == 0 || d % 2 != 0 {
            return Err(field_err("relaxation.d", format!("{d} is not a positive even integer")));
        }
    }
    p.validate()?;
    Ok(ProblemFile {
        problem: p,
        relaxation: Relaxation {
            d: doc.relaxation.d,
            d_tilde: doc.relaxation.d_tilde,
        },
    })
}

/// Reads and parses a problem file from disk.
pub fn load_problem(path: &Path) -> Result<ProblemFile, ProblemFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| ProblemFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_problem(&text, path.parent())
}
