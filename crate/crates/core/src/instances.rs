//! Ready-made problems: Burgers analysis and control, transport, and
//! Burgers with constant data.

use pdemom_sdp::Sense;

use crate::polyalg::Polynomial;
use crate::problem::{
    BoundaryCondition, Controls, DirichletData, Objective, PdeProblem, Reductions,
};
use crate::semialg::box_domain;

/// Faces of `[0, T] x [0, L]`: `x1 = 0`, `x1 = T`, `x2 = 0`, `x2 = L`.
pub const INITIAL: usize = 0;
pub const FINAL: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;

/// Initial profile used by the Burgers experiments.
pub const Y0: &str = "10*(x2*(1-x2))^2";

/// Objective of a Burgers analysis instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BurgersObjective {
    /// `int y^2 dx`
    Energy,
    /// `int x2^2 y^2 dx`
    WeightedEnergy,
}

/// Options for [`burgers`].
#[derive(Clone, Debug)]
pub struct BurgersSpec {
    pub horizon: f64,
    pub length: f64,
    /// Initial data over `x2` (on `[0, length]`).
    pub y0: String,
    pub objective: BurgersObjective,
    /// Distributed input box; `None` for analysis.
    pub control: Option<(f64, f64)>,
    /// Eliminate `dy/dx1` through the equation.
    pub reduced: bool,
    pub sense: Sense,
    pub d_tilde: Option<u32>,
}

impl Default for BurgersSpec {
    fn default() -> Self {
        BurgersSpec {
            horizon: 5.0,
            length: 1.0,
            y0: Y0.to_string(),
            objective: BurgersObjective::Energy,
            control: None,
            reduced: true,
            sense: Sense::Minimize,
            d_tilde: None,
        }
    }
}

fn poly(p: &PdeProblem, s: &str) -> Polynomial {
    p.parse_poly(s).expect("built-in expression")
}

/// `dy/dx1 + y dy/dx2 = u` on `[0, T] x [0, L]`, periodic in `x2`, with
/// Dirichlet initial data on `x1 = 0`.
pub fn burgers(spec: &BurgersSpec) -> PdeProblem {
    let n_u = usize::from(spec.control.is_some());
    let geom = box_domain(&[0.0, 0.0], &[spec.horizon, spec.length]).expect("box");
    let name = match (spec.control.is_some(), spec.objective) {
        (true, _) => "burgers_control",
        (false, BurgersObjective::Energy) => "burgers_energy",
        (false, BurgersObjective::WeightedEnergy) => "burgers_x2y2",
    };
    let mut p = PdeProblem::new(name, geom, 1, n_u);
    p.f = vec![poly(&p, "z1_1 + y1*z1_2")];
    if let Some(bounds) = spec.control {
        p.controls = Some(Controls {
            c: vec![vec![poly(&p, "1")]],
            bounds: vec![bounds],
        });
    }
    p.boundary[INITIAL] = BoundaryCondition::Dirichlet(DirichletData::Polynomial(vec![poly(&p, &spec.y0)]));
    p.boundary[LEFT] = BoundaryCondition::Periodic {
        target: RIGHT,
        map: vec![poly(&p, "x1"), poly(&p, &format!("x2 + {}", spec.length))],
    };
    let l = match spec.objective {
        BurgersObjective::Energy => "y1^2",
        BurgersObjective::WeightedEnergy => "x2^2*y1^2",
    };
    p.objective = Objective::new(poly(&p, l));
    if spec.reduced {
        let rhs = if spec.control.is_some() {
            "u1 - y1*z1_2"
        } else {
            "-y1*z1_2"
        };
        p.reductions = Reductions {
            substitutions: vec![(p.z_index(0, 0), poly(&p, rhs))],
            d_tilde: spec.d_tilde,
            ..Reductions::default()
        };
    } else {
        p.reductions.d_tilde = spec.d_tilde;
    }
    p.sense = spec.sense;
    p
}

pub fn burgers_energy(sense: Sense) -> PdeProblem {
    burgers(&BurgersSpec {
        sense,
        ..BurgersSpec::default()
    })
}

pub fn burgers_x2y2(sense: Sense) -> PdeProblem {
    burgers(&BurgersSpec {
        objective: BurgersObjective::WeightedEnergy,
        sense,
        ..BurgersSpec::default()
    })
}

/// Energy minimization with `u in [-1, 1]` over `[0, 3] x [0, 1]`.
pub fn burgers_control() -> PdeProblem {
    burgers(&BurgersSpec {
        horizon: 3.0,
        control: Some((-1.0, 1.0)),
        ..BurgersSpec::default()
    })
}

/// Burgers on the unit square with constant initial value `c`
/// (so `y = c` everywhere), unreduced.
pub fn burgers_constant(c: f64) -> PdeProblem {
    burgers(&BurgersSpec {
        horizon: 1.0,
        y0: format!("{c}"),
        reduced: false,
        ..BurgersSpec::default()
    })
}

/// `dy/dx1 + dy/dx2 = 0` on the unit square with inflow data taken from
/// `y = f(x2 - x1)`, `f` given as a polynomial in `s`.
pub fn transport(f: &str) -> PdeProblem {
    let geom = box_domain(&[0.0, 0.0], &[1.0, 1.0]).expect("box");
    let mut p = PdeProblem::new("transport", geom, 1, 0);
    p.f = vec![poly(&p, "z1_1 + z1_2")];
    let on = |s: &str| poly(&p, &f.replace('s', &format!("({s})")));
    let (initial, left) = (on("x2"), on("-x1"));
    p.boundary[INITIAL] = BoundaryCondition::Dirichlet(DirichletData::Polynomial(vec![initial]));
    p.boundary[LEFT] = BoundaryCondition::Dirichlet(DirichletData::Polynomial(vec![left]));
    p.objective = Objective::new(poly(&p, "y1^2"));
    p
}
