use std::sync::Arc;

use pdemom::assembly::{build_sdp, test_degrees, AssemblyError, FamilyKind, MeasureKey, MeasureRole};
use pdemom::instances::*;
use pdemom::oracle::{graph_moments, GraphSolution};
use pdemom::polyalg::{binomial, MultiIndex, Polynomial, VariableSpace};
use pdemom::problem::{BoundaryCondition, DirichletData, Objective, PdeProblem, PeriodicDegree, SecondOrderTerm};
use pdemom::semialg::box_domain;
use pdemom_sdp::{check_solution, solve, Sense, Tolerances};

fn xs() -> VariableSpace {
    VariableSpace::coordinates(2)
}

fn exact(p: &str) -> GraphSolution {
    GraphSolution::from_polynomials(vec![Polynomial::parse(p, &xs()).unwrap()])
}

fn y0(s: f64) -> f64 {
    10.0 * (s * (1.0 - s)).powi(2)
}

fn dy0(s: f64) -> f64 {
    20.0 * s * (1.0 - s) * (1.0 - 2.0 * s)
}

/// Foot of the characteristic through `(t, x)` for the periodic Burgers
/// initial profile, valid before the first shock.
fn foot(t: f64, x: f64) -> f64 {
    let mut xi = x;
    for _ in 0..100 {
        let f = xi + t * y0(xi.rem_euclid(1.0)) - x;
        let step = f / (1.0 + t * dy0(xi.rem_euclid(1.0)));
        xi -= step;
        if step.abs() < 1e-15 {
            break;
        }
    }
    xi.rem_euclid(1.0)
}

fn characteristic_solution() -> GraphSolution {
    GraphSolution::new(
        Arc::new(|x: &[f64]| vec![y0(foot(x[0], x[1]))]),
        Arc::new(|x: &[f64]| {
            let xi = foot(x[0], x[1]);
            let g = dy0(xi) / (1.0 + x[0] * dy0(xi));
            vec![vec![-y0(xi) * g, g]]
        }),
    )
}

#[test]
fn largest_block_follows_binomial_formula() {
    let table = [
        (4u64, [15u64, 35, 70]),
        (6, [28, 84, 210]),
        (8, [45, 165, 495]),
        (10, [66, 286, 1001]),
        (12, [91, 455, 1820]),
        (17, [171, 1140, 5985]),
        (21, [253, 2024, 12650]),
        (24, [325, 2925, 20475]),
    ];
    for (n_var, row) in table {
        for (k, d) in [4u64, 6, 8].into_iter().enumerate() {
            assert_eq!(binomial(n_var + d / 2, n_var), row[k], "n_var={n_var} d={d}");
        }
    }
    for (d, n) in [(4, 15), (6, 35)] {
        let a = build_sdp(&burgers_energy(Sense::Minimize), d).unwrap();
        assert_eq!(a.largest_block(), n);
        let mu = a.problem.blocks.iter().find(|b| b.name == "mu:M").unwrap();
        assert_eq!(mu.size, n);
    }
    // without the reduction both derivatives are kept: n_var = 5
    let a = build_sdp(&burgers(&BurgersSpec { reduced: false, ..BurgersSpec::default() }), 4).unwrap();
    assert_eq!(a.largest_block(), 21);
}

#[test]
fn per_family_test_degrees() {
    let burgers = test_degrees(&burgers_energy(Sense::Minimize), 4).unwrap();
    assert!(burgers.contains(&(FamilyKind::Stokes { m: 0 }, 3)));
    assert!(burgers.contains(&(FamilyKind::Stokes { m: 1 }, 4)));
    assert!(burgers.contains(&(FamilyKind::Dirichlet { piece: 0 }, 4)));
    assert!(burgers.contains(&(FamilyKind::Periodic { from: 2, to: 3 }, 4)));
    let linear = test_degrees(&transport("s^2"), 6).unwrap();
    assert!(linear.contains(&(FamilyKind::Pde { row: 0 }, 5)));
    assert!(linear.iter().all(|&(_, k)| k >= 1));
    assert!(matches!(build_sdp(&transport("s"), 3), Err(AssemblyError::BadDegree(3))));
    let mut shifted = burgers_energy(Sense::Minimize);
    shifted.reductions.periodic_degree = PeriodicDegree::Shifted;
    let degrees = test_degrees(&shifted, 4).unwrap();
    assert!(degrees.contains(&(FamilyKind::Periodic { from: 2, to: 3 }, 3)));
}

#[test]
fn dirichlet_rows_integrate_the_initial_profile() {
    let a = build_sdp(&burgers_energy(Sense::Minimize), 4).unwrap();
    let r = (0..a.tags.len())
        .find(|&r| a.tags[r].family == FamilyKind::Dirichlet { piece: INITIAL } && a.describe_row(r).ends_with("phi=y1"))
        .unwrap();
    assert!((a.problem.equalities[r].rhs - 1.0 / 3.0).abs() < 1e-14);
}

#[test]
fn objective_selects_the_weighted_moment() {
    for (p, mono) in [
        (burgers_energy(Sense::Minimize), [0u32, 0, 2, 0]),
        (burgers_x2y2(Sense::Minimize), [0, 2, 2, 0]),
    ] {
        let a = build_sdp(&p, 4).unwrap();
        let mu = a.measure(MeasureKey::Mu).unwrap();
        let col = mu.offset + mu.basis.position(&MultiIndex::from_exponents(&mono)).unwrap();
        let nz: Vec<usize> = (0..a.problem.n_vars).filter(|&j| a.problem.c[j] != 0.0).collect();
        assert_eq!(nz, vec![col]);
        assert!((a.problem.c[col] - 5.0).abs() < 1e-14);
    }
    let mut p = transport("s");
    p.objective = Objective::new(Polynomial::zero(&p.space));
    assert!(build_sdp(&p, 4).unwrap().problem.c.iter().all(|&c| c == 0.0));
}

#[test]
fn columns_and_rows_are_accounted_for() {
    let a = build_sdp(&burgers_control(), 4).unwrap();
    assert_eq!(a.tags.len(), a.problem.equalities.len());
    for col in 0..a.problem.n_vars {
        let owners = a.measures.iter().filter(|m| m.columns().contains(&col)).count();
        assert_eq!(owners, 1);
        assert!(a.column_owner(col).is_some());
    }
    let roles: Vec<MeasureRole> = a.measures.iter().map(|m| m.role).collect();
    assert!(roles.contains(&MeasureRole::Control) && roles.contains(&MeasureRole::Slack));
}

#[test]
fn free_pieces_add_no_boundary_rows() {
    let a = build_sdp(&transport("s^2"), 4).unwrap();
    assert!(a.tags.iter().all(|t| !matches!(
        t.family,
        FamilyKind::Dirichlet { piece: FINAL } | FamilyKind::BoundaryRow { piece: FINAL, .. }
    )));
}

#[test]
fn periodic_maps_must_preserve_the_surface_measure() {
    let mut p = burgers_energy(Sense::Minimize);
    p.boundary[LEFT] = BoundaryCondition::Periodic {
        target: RIGHT,
        map: vec![p.parse_poly("0.5*x1").unwrap(), p.parse_poly("x2 + 1").unwrap()],
    };
    assert!(matches!(build_sdp(&p, 4), Err(AssemblyError::PeriodicNotPreserving { .. })));
}

#[test]
fn constant_and_transport_solutions_are_feasible() {
    for d in [4u32, 6] {
        for (p, y) in [
            (burgers_constant(0.3), "0.3"),
            (burgers_constant(-1.2), "-1.2"),
            (transport("s^2"), "(x2 - x1)^2"),
            (transport("1 + s - 2*s^3"), "1 + (x2 - x1) - 2*(x2 - x1)^3"),
        ] {
            let a = build_sdp(&p, d).unwrap();
            let s = graph_moments(&a, &exact(y)).unwrap();
            let c = check_solution(&a.problem, &s).unwrap();
            assert!(c.max_equality_residual <= 1e-8, "{} d={d}: {:e}", p.name, c.max_equality_residual);
            assert!(c.min_block_eigenvalue >= -1e-9, "{} d={d}: {:e}", p.name, c.min_block_eigenvalue);
        }
    }
}

#[test]
fn smooth_burgers_solution_is_feasible_before_the_shock() {
    let p = burgers(&BurgersSpec {
        horizon: 0.3,
        objective: BurgersObjective::WeightedEnergy,
        ..BurgersSpec::default()
    });
    for d in [4u32, 6] {
        let a = build_sdp(&p, d).unwrap();
        let s = graph_moments(&a, &characteristic_solution()).unwrap();
        let c = check_solution(&a.problem, &s).unwrap();
        assert!(c.max_equality_residual <= 1e-9, "d={d}: {:e}", c.max_equality_residual);
        assert!(c.min_block_eigenvalue >= -1e-9);
    }
}

#[test]
fn non_solutions_violate_interior_rows_only() {
    let mut p = burgers_constant(0.0);
    for bc in p.boundary.iter_mut() {
        *bc = BoundaryCondition::Free;
    }
    let a = build_sdp(&p, 4).unwrap();
    let s = graph_moments(&a, &exact("x2")).unwrap();
    let mut interior = 0.0f64;
    for (eq, tag) in a.problem.equalities.iter().zip(&a.tags) {
        let row = eq.dot(&s) - eq.rhs;
        match tag.family {
            FamilyKind::Pde { .. } => interior = interior.max(row.abs()),
            _ => assert!(row.abs() <= 1e-10, "{}: {row:e}", tag.describe(&a.scaled.space)),
        }
    }
    assert!(interior > 1e-3);
}

#[test]
fn second_order_terms_transfer_derivatives() {
    // y_x1 - y_x2x2 = 0 solved by y = 2 x1 + x2^2
    let geom = box_domain(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
    let mut p = PdeProblem::new("heat", geom, 1, 0);
    p.f = vec![p.parse_poly("z1_1").unwrap()];
    p.b = vec![SecondOrderTerm {
        i: 1,
        j: 1,
        matrix: vec![vec![p.parse_poly("-1").unwrap()]],
    }];
    p.boundary[INITIAL] = BoundaryCondition::Dirichlet(DirichletData::Polynomial(vec![p.parse_poly("x2^2").unwrap()]));
    p.objective = Objective::new(p.parse_poly("y1^2").unwrap());
    for d in [4u32, 6] {
        let a = build_sdp(&p, d).unwrap();
        let s = graph_moments(&a, &exact("2*x1 + x2^2")).unwrap();
        let c = check_solution(&a.problem, &s).unwrap();
        assert!(c.max_equality_residual <= 1e-9, "d={d}: {:e}", c.max_equality_residual);
        let wrong = graph_moments(&a, &exact("x1 + x2^2")).unwrap();
        assert!(check_solution(&a.problem, &wrong).unwrap().max_equality_residual > 1e-3);
    }
}

#[test]
fn control_slack_rows_split_the_occupation_marginal() {
    // y = x1 solves y_x1 + y y_x2 = u with u = 1, y(0, .) = 0
    let p = burgers(&BurgersSpec {
        horizon: 1.0,
        y0: "0".into(),
        control: Some((-1.0, 1.0)),
        reduced: false,
        ..BurgersSpec::default()
    });
    let a = build_sdp(&p, 4).unwrap();
    let full = exact("x1").with_control(Arc::new(|_: &[f64]| vec![1.0]));
    let s = graph_moments(&a, &full).unwrap();
    assert!(check_solution(&a.problem, &s).unwrap().max_equality_residual <= 1e-10);
    let hat = a.moments_of(MeasureKey::NuHat(0), &s).unwrap();
    assert!(hat.values().iter().all(|v| v.abs() <= 1e-14));
    // y = 0 with u = 0 sits in the middle of the input box
    let rest = exact("0").with_control(Arc::new(|_: &[f64]| vec![0.0]));
    let s = graph_moments(&a, &rest).unwrap();
    assert!(check_solution(&a.problem, &s).unwrap().max_equality_residual <= 1e-10);
    let nu = a.moments_of(MeasureKey::Nu(0), &s).unwrap();
    let hat = a.moments_of(MeasureKey::NuHat(0), &s).unwrap();
    for (x, y) in nu.values().iter().zip(hat.values()) {
        assert!((x - y).abs() <= 1e-14);
    }
    assert!((nu.mass() - 0.5).abs() <= 1e-14);
}

#[test]
fn mass_identities_hold_at_the_solver_output() {
    let a = build_sdp(&burgers_energy(Sense::Minimize), 4).unwrap();
    let sol = solve(&a.problem, &Tolerances::default()).unwrap();
    let mu = a.moments_of(MeasureKey::Mu, &sol.s).unwrap();
    assert!((mu.mass() - 1.0).abs() <= 1e-7);
    for piece in 0..4 {
        let b = a.moments_of(MeasureKey::Boundary(piece), &sol.s).unwrap();
        assert!((b.mass() - 1.0).abs() <= 1e-7, "piece {piece}: {}", b.mass());
    }
}

#[test]
fn area_objective_gives_the_domain_volume() {
    let mut p = burgers_energy(Sense::Minimize);
    p.objective = Objective::new(p.parse_poly("1").unwrap());
    let a = build_sdp(&p, 4).unwrap();
    for sense in [Sense::Minimize, Sense::Maximize] {
        let sol = solve(&a.with_sense(sense), &Tolerances::default()).unwrap();
        assert!((sol.report.primal_objective - 5.0).abs() <= 1e-7);
    }
}

#[test]
fn energy_is_pinned_at_degree_four() {
    let a = build_sdp(&burgers_energy(Sense::Minimize), 4).unwrap();
    for sense in [Sense::Minimize, Sense::Maximize] {
        let sol = solve(&a.with_sense(sense), &Tolerances::default()).unwrap();
        assert!((sol.report.primal_objective - 50.0 / 63.0).abs() <= 1e-6, "{sense:?}: {}", sol.report.primal_objective);
    }
}
