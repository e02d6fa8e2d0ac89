//! Moments of the occupation, boundary and control measures generated by a
//! known classical solution, computed by quadrature. A true solution must
//! satisfy every equality row of the relaxation.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::assembly::{AssembledSdp, AssemblyError, MeasureKey};
use crate::polyalg::{Polynomial, VarKind};
use crate::quadrature::{moments_converged, Region};

type Field = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type Jacobian = Arc<dyn Fn(&[f64]) -> Vec<Vec<f64>> + Send + Sync>;

/// Solution `y(x)` in physical coordinates with its Jacobian
/// `dy[k][j] = dy_k/dx_j` and, for control problems, the inputs used.
#[derive(Clone)]
pub struct GraphSolution {
    pub y: Field,
    pub dy: Jacobian,
    /// Distributed inputs `u(x)` in physical units.
    pub u: Option<Field>,
    /// Boundary inputs per piece.
    pub u_boundary: BTreeMap<usize, Field>,
}

impl GraphSolution {
    pub fn new(y: Field, dy: Jacobian) -> Self {
        GraphSolution {
            y,
            dy,
            u: None,
            u_boundary: BTreeMap::new(),
        }
    }

    /// Polynomial solution over the coordinate space; derivatives are exact.
    pub fn from_polynomials(y: Vec<Polynomial>) -> Self {
        let n = y.first().map_or(0, |p| p.space().dim());
        let dy: Vec<Vec<Polynomial>> = y.iter().map(|p| (0..n).map(|j| p.diff(j)).collect()).collect();
        let yc = y.clone();
        GraphSolution::new(
            Arc::new(move |x: &[f64]| yc.iter().map(|p| p.eval(x)).collect()),
            Arc::new(move |x: &[f64]| {
                dy.iter()
                    .map(|row| row.iter().map(|p| p.eval(x)).collect())
                    .collect()
            }),
        )
    }

    pub fn with_control(mut self, u: Field) -> Self {
        self.u = Some(u);
        self
    }
}

/// Full moment vector (all measures, column order of `sdp`) generated by
/// `sol`. Only box domains are supported.
pub fn graph_moments(sdp: &AssembledSdp, sol: &GraphSolution) -> Result<Vec<f64>, AssemblyError> {
    let geom = &sdp.scaled.geometry;
    let (lo, hi) = geom
        .box_bounds()
        .ok_or_else(|| AssemblyError::Unsupported("graph moments need a box domain".into()))?;
    let (lo, hi) = (lo.to_vec(), hi.to_vec());
    let sp = &sdp.scaled;
    let (n, n_y) = (sp.n, sp.n_y);
    let scaling = &sdp.scaling;
    let mut out = vec![0.0; sdp.problem.n_vars];
    for lay in &sdp.measures {
        let region = match lay.key.piece() {
            None => Region::full(&lo, &hi),
            Some(i) => {
                let f = geom.pieces[i].face.expect("box face");
                Region::face(&lo, &hi, f.axis, f.value)
            }
        };
        let input: Option<(Field, (f64, f64), usize, bool)> = match lay.key {
            MeasureKey::Nu(k) | MeasureKey::NuHat(k) => {
                let u = sol.u.clone().ok_or_else(|| {
                    AssemblyError::Unsupported("control measure without an input field".into())
                })?;
                Some((u, scaling.inputs[k], k, matches!(lay.key, MeasureKey::NuHat(_))))
            }
            MeasureKey::NuB(i, k) | MeasureKey::NuHatB(i, k) => {
                let u = sol.u_boundary.get(&i).cloned().ok_or_else(|| {
                    AssemblyError::Unsupported(format!("boundary control {i} without an input field"))
                })?;
                Some((u, scaling.boundary_inputs[&i][k], k, matches!(lay.key, MeasureKey::NuHatB(..))))
            }
            _ => None,
        };
        let kinds: Vec<(VarKind, usize)> = lay
            .vars
            .iter()
            .map(|&v| (sp.space.kind(v), v))
            .collect();
        let point = |t: &[f64]| -> (Vec<f64>, f64) {
            let x = scaling.to_physical(t);
            let y = (sol.y)(&x);
            let dy = (sol.dy)(&x);
            let vals = kinds
                .iter()
                .map(|&(kind, v)| match kind {
                    VarKind::X => t[v],
                    VarKind::Y => y[v - n],
                    VarKind::Z => {
                        let r = v - n - n_y;
                        let (k, j) = (r / n, r % n);
                        scaling.len[j] * dy[k][j]
                    }
                    VarKind::U => unreachable!("inputs are not measure coordinates"),
                })
                .collect();
            let w = match &input {
                None => 1.0,
                Some((u, (a, b), k, hat)) => {
                    let v = ((u(&x)[*k]) - a) / (b - a);
                    if *hat {
                        1.0 - v
                    } else {
                        v
                    }
                }
            };
            (vals, w)
        };
        let m = moments_converged(&region, &lay.basis, 1e-12, &point)?;
        out[lay.columns()].copy_from_slice(&m);
    }
    Ok(out)
}
