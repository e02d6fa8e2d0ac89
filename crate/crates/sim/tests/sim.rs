use approx::assert_abs_diff_eq;
use pdemom::polyalg::{Polynomial, VariableSpace};
use pdemom_sim::{functional_eval, simulate, SimConfig, SimError, CFL_MAX};

fn y0(s: f64) -> f64 {
    10.0 * (s * (1.0 - s)).powi(2)
}

fn pde_space() -> VariableSpace {
    VariableSpace::pde(2, 1, 0)
}

#[test]
fn constant_state_is_preserved() {
    let sol = simulate(|_| 0.7, None, &SimConfig::new(1.0, 1.0, 50, 0.01)).unwrap();
    for row in &sol.y {
        assert!(row.iter().all(|&v| (v - 0.7).abs() <= 1e-14));
    }
    assert_eq!(sol.t.len(), 101);
    assert_abs_diff_eq!(*sol.t.last().unwrap(), 1.0, epsilon = 1e-15);
}

#[test]
fn constant_input_drives_a_uniform_ramp() {
    let sol = simulate(|_| 0.0, Some(&|_, _, _| 0.4), &SimConfig::new(2.0, 1.0, 40, 0.01)).unwrap();
    for (t, row) in sol.t.iter().zip(&sol.y) {
        assert!(row.iter().all(|&v| (v - 0.4 * t).abs() <= 1e-12));
    }
    assert!(sol.u[0].iter().all(|&u| u == 0.4));
}

#[test]
fn mass_is_conserved_without_input() {
    let sol = simulate(y0, None, &SimConfig::new(5.0, 1.0, 200, 0.002)).unwrap();
    let m0 = sol.mass_at(0);
    assert_abs_diff_eq!(m0, 1.0 / 3.0, epsilon = 1e-4);
    for n in 0..sol.t.len() {
        assert!((sol.mass_at(n) - m0).abs() <= 1e-12);
    }
}

#[test]
fn energy_is_nearly_conserved_before_the_shock() {
    let e0 = 100.0 / 630.0;
    let coarse = simulate(y0, None, &SimConfig::new(0.3, 1.0, 200, 0.001)).unwrap();
    let fine = simulate(y0, None, &SimConfig::new(0.3, 1.0, 800, 0.00025)).unwrap();
    let (ec, ef) = (e0 - coarse.final_energy(), e0 - fine.final_energy());
    assert!(ec > 0.0 && ef > 0.0);
    assert!(ef <= 1e-3);
    // first-order dissipation: refining 4x cuts the loss by roughly 4x
    assert!(ec / ef > 3.0, "{ec:e} {ef:e}");
}

#[test]
fn energy_decays_through_the_shock() {
    let sol = simulate(y0, None, &SimConfig::new(5.0, 1.0, 400, 0.0025)).unwrap();
    for n in 1..sol.t.len() {
        assert!(sol.energy_at(n) <= sol.energy_at(n - 1) + 1e-15);
    }
    assert!(sol.final_energy() < 0.75 * sol.energy_at(0));
}

#[test]
fn space_time_integrals_converge_under_refinement() {
    let value = |nx: usize| {
        let sol = simulate(y0, None, &SimConfig::new(5.0, 1.0, nx, 1.0 / nx as f64)).unwrap();
        sol.integrate(|_, _, y| y * y)
    };
    let (a, b, c) = (value(100), value(200), value(400));
    assert!((c - b).abs() < (b - a).abs());
    assert!((c - b).abs() <= 5e-3);
}

#[test]
fn integrating_one_gives_the_area() {
    let sol = simulate(y0, None, &SimConfig::new(5.0, 1.0, 100, 0.01)).unwrap();
    assert_abs_diff_eq!(sol.integrate(|_, _, _| 1.0), 5.0, epsilon = 1e-12);
    let one = Polynomial::constant(&pde_space(), 1.0);
    let v = functional_eval(&sol, &one).unwrap();
    assert_abs_diff_eq!(v.value, 5.0, epsilon = 1e-12);
    assert!(!v.approximate_derivatives);
}

#[test]
fn functionals_match_direct_integration() {
    let sol = simulate(y0, None, &SimConfig::new(0.4, 1.0, 200, 0.002)).unwrap();
    let l = Polynomial::parse("x2^2*y1^2", &pde_space()).unwrap();
    let v = functional_eval(&sol, &l).unwrap();
    assert_abs_diff_eq!(v.value, sol.integrate(|_, x, y| x * x * y * y), epsilon = 1e-12);
    // the equation residual integrates to nearly zero
    let r = Polynomial::parse("(z1_1 + y1*z1_2)^2", &pde_space()).unwrap();
    let res = functional_eval(&sol, &r).unwrap();
    assert!(res.approximate_derivatives);
    assert!(res.value < 0.05, "{}", res.value);
    let with_u = Polynomial::parse("u1", &VariableSpace::pde(2, 1, 1)).unwrap();
    assert!(matches!(functional_eval(&sol, &with_u), Err(SimError::UnknownVariable(_))));
}

#[test]
fn large_inputs_are_reported_as_blow_up() {
    let err = simulate(|_| 0.0, Some(&|_, _, _| 1e10), &SimConfig::new(1.0, 1.0, 20, 0.01)).unwrap_err();
    assert_eq!(err, SimError::BlowUp { step: 1, t: 0.01 });
}

#[test]
fn steps_respect_the_cfl_limit() {
    let halved = simulate(|_| 50.0, None, &SimConfig::new(0.1, 1.0, 100, 0.01)).unwrap();
    assert!(halved.dt_halvings >= 6);
    assert!(halved.max_cfl <= CFL_MAX);
    let grows = simulate(|_| 0.0, Some(&|_, _, _| 100.0), &SimConfig::new(1.0, 1.0, 100, 0.01)).unwrap();
    assert_eq!(grows.dt_halvings, 0);
    assert!(grows.split_steps > 0);
    assert!(grows.max_cfl <= CFL_MAX);
}

#[test]
fn invalid_grids_are_rejected() {
    assert!(matches!(simulate(y0, None, &SimConfig::new(1.0, 1.0, 1, 0.01)), Err(SimError::BadGrid(_))));
    assert!(matches!(simulate(y0, None, &SimConfig::new(1.0, 1.0, 10, 0.0)), Err(SimError::BadGrid(_))));
}

#[test]
fn csv_has_one_row_per_grid_point() {
    let sol = simulate(y0, None, &SimConfig::new(0.02, 1.0, 10, 0.01)).unwrap();
    let csv = sol.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,x,y,u");
    assert_eq!(lines.len(), 1 + 3 * 10);
}
