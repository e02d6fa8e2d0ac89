//! Affine change of variables onto the unit box and unit input boxes.
//!
//! With `x = lo + len * t`, `z_{k,j} = w_{k,j} / len_j` and
//! `u = a + (b - a) v`, the rescaled problem is again a PDE problem whose
//! derivative variables `w` are derivatives in `t` and whose inputs `v` live
//! in `[0, 1]`. Objective integrands absorb the Jacobian, so optimal values
//! are unchanged.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::polyalg::{Polynomial, VarKind, VariableSpace};
use crate::problem::{
    BoundaryCondition, BoundaryControl, Bounds, Controls, DirichletData, Objective, PdeProblem,
    Reductions, SecondOrderTerm, VarBounds,
};
use crate::semialg::box_domain;

use super::AssemblyError;

/// Map between physical and unit-box coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Scaling {
    pub lo: Vec<f64>,
    pub len: Vec<f64>,
    /// Physical input box per distributed channel.
    pub inputs: Vec<(f64, f64)>,
    /// Physical input boxes of boundary controls, per piece.
    pub boundary_inputs: BTreeMap<usize, Vec<(f64, f64)>>,
}

impl Scaling {
    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.lo)
            .zip(&self.len)
            .map(|((x, lo), len)| (x - lo) / len)
            .collect()
    }

    pub fn to_physical(&self, t: &[f64]) -> Vec<f64> {
        t.iter()
            .zip(&self.lo)
            .zip(&self.len)
            .map(|((t, lo), len)| lo + len * t)
            .collect()
    }

    pub fn jacobian(&self) -> f64 {
        self.len.iter().product()
    }

    /// Jacobian of the face `x_axis = const`.
    pub fn face_jacobian(&self, axis: usize) -> f64 {
        self.len
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != axis)
            .map(|(_, l)| l)
            .product()
    }
}

fn scale_matrix(m: &[Vec<Polynomial>], images: &[Polynomial]) -> Result<Vec<Vec<Polynomial>>, AssemblyError> {
    m.iter()
        .map(|row| row.iter().map(|p| Ok(p.compose(images)?)).collect())
        .collect()
}

/// `g - sum_k c_k a_k` and `c_k (b_k - a_k)`.
fn shift_inputs(
    g: &Polynomial,
    c_row: &[Polynomial],
    bounds: &[(f64, f64)],
) -> (Polynomial, Vec<Polynomial>) {
    let mut g = g.clone();
    let mut c = Vec::with_capacity(c_row.len());
    for (ck, &(a, b)) in c_row.iter().zip(bounds) {
        g = &g - &ck.scale(a);
        c.push(ck.scale(b - a));
    }
    (g, c)
}

fn expand_bounds(b: &VarBounds, space: &VariableSpace, vars: &[usize]) -> VarBounds {
    let mut out = b.expanded(space, vars);
    out.retain(|g| !g.is_zero());
    VarBounds {
        inequalities: out,
        ball: None,
    }
}

/// Rescaled copy of `p` on the unit box (geometry left alone when it is not
/// a box), with every redundant ball written out explicitly.
pub fn rescale(p: &PdeProblem) -> Result<(PdeProblem, Scaling), AssemblyError> {
    let space = p.space.clone();
    let n = p.n;
    let (lo, len) = match p.geometry.box_bounds() {
        Some((lo, hi)) => (lo.to_vec(), lo.iter().zip(hi).map(|(l, h)| h - l).collect()),
        None => (vec![0.0; n], vec![1.0; n]),
    };
    let inputs: Vec<(f64, f64)> = p
        .controls
        .as_ref()
        .map(|c| c.bounds.clone())
        .unwrap_or_default();
    let u_vars = space.indices_of(VarKind::U);
    let mut images = Vec::with_capacity(space.dim());
    for v in 0..space.dim() {
        let var = Polynomial::var(&space, v);
        let img = match space.kind(v) {
            VarKind::X => &Polynomial::constant(&space, lo[v]) + &var.scale(len[v]),
            VarKind::Y => var,
            VarKind::Z => {
                let j = (v - n - p.n_y) % n;
                var.scale(1.0 / len[j])
            }
            VarKind::U => {
                let k = u_vars.iter().position(|&u| u == v).expect("u index");
                let (a, b) = inputs[k];
                &Polynomial::constant(&space, a) + &var.scale(b - a)
            }
        };
        images.push(img);
    }
    let comp = |q: &Polynomial| -> Result<Polynomial, AssemblyError> { Ok(q.compose(&images)?) };

    let mut out = p.clone();
    let scaling = Scaling {
        lo: lo.clone(),
        len: len.clone(),
        inputs: inputs.clone(),
        boundary_inputs: p
            .boundary
            .iter()
            .enumerate()
            .filter_map(|(i, b)| match b {
                BoundaryCondition::General {
                    control: Some(c), ..
                } => Some((i, c.bounds.clone())),
                _ => None,
            })
            .collect(),
    };
    if p.geometry.is_box() {
        out.geometry = box_domain(&vec![0.0; n], &vec![1.0; n])?;
    }
    let jac = scaling.jacobian();
    let face_jac = |i: usize| -> f64 {
        match p.geometry.pieces[i].face {
            Some(f) if p.geometry.is_box() => scaling.face_jacobian(f.axis),
            _ => 1.0,
        }
    };

    // PDE rows and distributed controls
    let f_comp: Vec<Polynomial> = p.f.iter().map(comp).collect::<Result<_, _>>()?;
    match &p.controls {
        Some(c) => {
            let cm = scale_matrix(&c.c, &images)?;
            let mut f_new = Vec::with_capacity(f_comp.len());
            let mut c_new = Vec::with_capacity(cm.len());
            for (f, row) in f_comp.iter().zip(&cm) {
                let (g, cr) = shift_inputs(f, row, &c.bounds);
                f_new.push(g);
                c_new.push(cr);
            }
            out.f = f_new;
            out.controls = Some(Controls {
                c: c_new,
                bounds: vec![(0.0, 1.0); c.bounds.len()],
            });
        }
        None => out.f = f_comp,
    }
    out.b = p
        .b
        .iter()
        .map(|t| {
            let s = 1.0 / (len[t.i] * len[t.j]);
            Ok(SecondOrderTerm {
                i: t.i,
                j: t.j,
                matrix: t
                    .matrix
                    .iter()
                    .map(|row| row.iter().map(|q| Ok(comp(q)?.scale(s))).collect())
                    .collect::<Result<_, AssemblyError>>()?,
            })
        })
        .collect::<Result<_, AssemblyError>>()?;

    // boundary conditions
    out.boundary = p
        .boundary
        .iter()
        .map(|bc| -> Result<BoundaryCondition, AssemblyError> {
            Ok(match bc {
                BoundaryCondition::Free => BoundaryCondition::Free,
                BoundaryCondition::General { g, control } => {
                    let g: Vec<Polynomial> = g.iter().map(comp).collect::<Result<_, _>>()?;
                    match control {
                        None => BoundaryCondition::General { g, control: None },
                        Some(c) => {
                            let cm = scale_matrix(&c.c, &images)?;
                            let mut g_new = Vec::with_capacity(g.len());
                            let mut c_new = Vec::with_capacity(g.len());
                            for (gr, row) in g.iter().zip(&cm) {
                                let (gg, cr) = shift_inputs(gr, row, &c.bounds);
                                g_new.push(gg);
                                c_new.push(cr);
                            }
                            BoundaryCondition::General {
                                g: g_new,
                                control: Some(BoundaryControl {
                                    c: c_new,
                                    bounds: vec![(0.0, 1.0); c.bounds.len()],
                                }),
                            }
                        }
                    }
                }
                BoundaryCondition::Dirichlet(DirichletData::Polynomial(h)) => {
                    BoundaryCondition::Dirichlet(DirichletData::Polynomial(
                        h.iter().map(comp).collect::<Result<_, _>>()?,
                    ))
                }
                BoundaryCondition::Dirichlet(DirichletData::Function(f)) => {
                    let f = f.clone();
                    let (lo, len) = (lo.clone(), len.clone());
                    BoundaryCondition::Dirichlet(DirichletData::Function(Arc::new(move |t: &[f64]| {
                        let x: Vec<f64> = t
                            .iter()
                            .zip(&lo)
                            .zip(&len)
                            .map(|((t, lo), len)| lo + len * t)
                            .collect();
                        f(&x)
                    })))
                }
                BoundaryCondition::Periodic { target, map } => BoundaryCondition::Periodic {
                    target: *target,
                    map: map
                        .iter()
                        .enumerate()
                        .map(|(j, h)| {
                            let hc = comp(h)?;
                            Ok((&hc - &Polynomial::constant(&space, lo[j])).scale(1.0 / len[j]))
                        })
                        .collect::<Result<_, AssemblyError>>()?,
                },
            })
        })
        .collect::<Result<_, _>>()?;

    // objective
    let obj = &p.objective;
    let mut l = comp(&obj.l)?;
    let mut l_u = Vec::with_capacity(obj.l_u.len());
    for (k, lu) in obj.l_u.iter().enumerate() {
        let (a, b) = inputs[k];
        let luc = comp(lu)?;
        l = &l + &luc.scale(a);
        l_u.push(luc.scale((b - a) * jac));
    }
    let mut l_boundary = BTreeMap::new();
    for (&i, lb) in &obj.l_boundary {
        l_boundary.insert(i, comp(lb)?);
    }
    let mut l_u_boundary = BTreeMap::new();
    for (&i, lus) in &obj.l_u_boundary {
        let bounds = &scaling.boundary_inputs[&i];
        let mut scaled = Vec::with_capacity(lus.len());
        for (lu, &(a, b)) in lus.iter().zip(bounds) {
            let luc = comp(lu)?;
            let e = l_boundary
                .entry(i)
                .or_insert_with(|| Polynomial::zero(&space));
            *e = &*e + &luc.scale(a);
            scaled.push(luc.scale((b - a) * face_jac(i)));
        }
        l_u_boundary.insert(i, scaled);
    }
    for (&i, lb) in l_boundary.iter_mut() {
        *lb = lb.scale(face_jac(i));
    }
    out.objective = Objective {
        l: l.scale(jac),
        l_boundary,
        l_u,
        l_u_boundary,
    };

    // variable bounds; balls are written out before the change of variables
    let eliminated: Vec<usize> = p.reductions.substitutions.iter().map(|s| s.0).collect();
    let y_vars = space.indices_of(VarKind::Y);
    let z_kept: Vec<usize> = space
        .indices_of(VarKind::Z)
        .into_iter()
        .filter(|v| !eliminated.contains(v))
        .collect();
    let scale_z = |b: &VarBounds| -> Result<VarBounds, AssemblyError> {
        let e = expand_bounds(b, &space, &z_kept);
        Ok(VarBounds {
            inequalities: e.inequalities.iter().map(comp).collect::<Result<_, _>>()?,
            ball: None,
        })
    };
    out.bounds = Bounds {
        y: expand_bounds(&p.bounds.y, &space, &y_vars),
        z: scale_z(&p.bounds.z)?,
        y_boundary: p
            .bounds
            .y_boundary
            .iter()
            .map(|(&i, b)| (i, expand_bounds(b, &space, &y_vars)))
            .collect(),
        z_boundary: p
            .bounds
            .z_boundary
            .iter()
            .map(|(&i, b)| Ok((i, scale_z(b)?)))
            .collect::<Result<_, AssemblyError>>()?,
    };

    out.reductions = Reductions {
        substitutions: p
            .reductions
            .substitutions
            .iter()
            .map(|(v, s)| {
                let j = (v - n - p.n_y) % n;
                Ok((*v, comp(s)?.scale(len[j])))
            })
            .collect::<Result<_, AssemblyError>>()?,
        d_tilde: p.reductions.d_tilde,
        periodic_degree: p.reductions.periodic_degree,
    };
    Ok((out, scaling))
}
