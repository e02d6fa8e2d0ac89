//! Acceptance report: one PASS/FAIL line per criterion. Failing criteria are
//! reported, not asserted, so the numbers stay visible in the test log.

#[path = "../../sdp/tests/common/mod.rs"]
mod library;

use std::fmt::Write as _;
use std::time::Instant;

use pdemom::assembly::build_sdp;
use pdemom::control::{controllers, extract_with_degree};
use pdemom::instances::*;
use pdemom::moments::MomentVector;
use pdemom::oracle::{graph_moments, GraphSolution};
use pdemom::polyalg::{binomial, mono_basis, Polynomial, VariableSpace};
use pdemom::semialg::box_domain;
use pdemom_sdp::{check_solution, sdpa, solve, Sense, SolveReport, Status, Tolerances};
use pdemom_sim::{functional_eval, simulate, SimConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn y0(s: f64) -> f64 {
    10.0 * (s * (1.0 - s)).powi(2)
}

fn usable(r: &SolveReport) -> bool {
    matches!(r.status, Status::Optimal | Status::NearOptimal)
}

fn bounds(p: &pdemom::problem::PdeProblem, d: u32) -> (SolveReport, SolveReport) {
    let a = build_sdp(p, d).expect("assembly");
    let tol = Tolerances::default();
    let lo = solve(&a.with_sense(Sense::Minimize), &tol).expect("solve").report;
    let up = solve(&a.with_sense(Sense::Maximize), &tol).expect("solve").report;
    (lo, up)
}

fn energy_bounds() -> (Verdict, (f64, f64)) {
    let t = Instant::now();
    let (lo, up) = bounds(&burgers_energy(Sense::Minimize), 4);
    let secs = t.elapsed().as_secs_f64();
    let truth = 50.0 / 63.0;
    let (l, u) = (lo.primal_objective, up.primal_objective);
    let pass = (l - truth).abs() <= 1e-5 && (u - truth).abs() <= 1e-5 && usable(&lo) && usable(&up) && secs <= 60.0;
    let v = verdict(
        pass,
        format!(
            "energy d=4: lower {l:.10} ({}), upper {u:.10} ({}), target {truth:.10} +- 1e-5, {secs:.2} s (limit 60 s)",
            lo.status, up.status
        ),
    );
    (v, (l, u))
}

struct Row {
    d: u32,
    lo: SolveReport,
    up: SolveReport,
}

fn x2y2_table() -> (Verdict, Option<(f64, f64)>) {
    let reference = [(4u32, 0.206, 0.380), (6, 0.263, 0.297), (8, 0.276, 0.283)];
    let p = burgers_x2y2(Sense::Minimize);
    let mut rows = Vec::new();
    let mut detail = String::from("x2^2 y^2:");
    let mut pass = true;
    for &(d, rl, ru) in &reference {
        let t = Instant::now();
        let (lo, up) = bounds(&p, d);
        let (l, u) = (lo.primal_objective, up.primal_objective);
        let near = (l - rl).abs() <= 0.02 && (u - ru).abs() <= 0.02 && usable(&lo) && usable(&up);
        let ok = if d == 8 {
            let sandwich = lo.status == Status::NearOptimal || up.status == Status::NearOptimal;
            near || (sandwich && usable(&lo) && usable(&up) && l <= u)
        } else {
            near
        };
        pass &= ok;
        let _ = write!(
            detail,
            " d={d} [{l:.4} {}, {u:.4} {}] vs ({rl}, {ru}) {} ({:.0} s);",
            lo.status,
            up.status,
            if ok { "ok" } else { "off" },
            t.elapsed().as_secs_f64()
        );
        rows.push(Row { d, lo, up });
    }
    let lows: Vec<(u32, f64)> = rows.iter().filter(|r| usable(&r.lo)).map(|r| (r.d, r.lo.primal_objective)).collect();
    let ups: Vec<(u32, f64)> = rows.iter().filter(|r| usable(&r.up)).map(|r| (r.d, r.up.primal_objective)).collect();
    let lm = lows.windows(2).all(|w| w[1].1 >= w[0].1 - 1e-6);
    let um = ups.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-6);
    pass &= lm && um;
    let _ = write!(
        detail,
        " lower {} and upper {} over usable solves",
        if lm { "nondecreasing" } else { "NOT monotone" },
        if um { "nonincreasing" } else { "NOT monotone" }
    );
    let lower = lows.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
    let upper = ups.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    let tightest = (lower.is_finite() && upper.is_finite()).then_some((lower, upper));
    (verdict(pass, detail), tightest)
}

fn sandwich(energy: (f64, f64), x2y2: Option<(f64, f64)>) -> Verdict {
    let dx = 1.0 / 400.0;
    let sol = simulate(y0, None, &SimConfig::new(5.0, 1.0, 400, 0.4 * dx / 0.625)).expect("simulation");
    let space = VariableSpace::pde(2, 1, 0);
    let value = |l: &str| functional_eval(&sol, &Polynomial::parse(l, &space).unwrap()).unwrap().value;
    let (e, w) = (value("y1^2"), value("x2^2*y1^2"));
    let inside = |v: f64, (lo, up): (f64, f64)| v >= lo - 1e-3 && v <= up + 1e-3;
    let e_ok = inside(e, energy);
    let mut detail = format!(
        "nx=400 energy {e:.5} vs [{:.5}, {:.5}] {}",
        energy.0,
        energy.1,
        if e_ok { "inside" } else { "outside" }
    );
    let w_ok = match x2y2 {
        Some(b) => {
            let ok = inside(w, b);
            let _ = write!(detail, "; x2^2 y^2 {w:.5} vs [{:.5}, {:.5}] {}", b.0, b.1, if ok { "inside" } else { "outside" });
            ok
        }
        None => {
            let _ = write!(detail, "; x2^2 y^2 {w:.5} has no usable bounds");
            false
        }
    };
    verdict(e_ok && w_ok, detail)
}

fn table_one() -> Verdict {
    let printed: [(u64, [u64; 3]); 8] = [
        (4, [15, 35, 70]),
        (6, [28, 84, 210]),
        (8, [45, 165, 495]),
        (10, [66, 286, 1001]),
        (12, [91, 455, 1820]),
        (17, [171, 1140, 5985]),
        (21, [253, 2024, 12650]),
        (24, [325, 2925, 20475]),
    ];
    let mut matches = 0;
    for (n_var, row) in printed {
        for (k, d) in [4u64, 6, 8].into_iter().enumerate() {
            matches += usize::from(binomial(n_var + d / 2, n_var) == row[k]);
        }
    }
    let p = burgers_energy(Sense::Minimize);
    let b4 = build_sdp(&p, 4).unwrap().largest_block();
    let b6 = build_sdp(&p, 6).unwrap().largest_block();
    verdict(
        matches == 24 && b4 == 15 && b6 == 35,
        format!("{matches}/24 table entries reproduced; largest block {b4} at d=4, {b6} at d=6"),
    )
}

fn controller_pipeline() -> Verdict {
    let p = burgers_control();
    let a = build_sdp(&p, 6).unwrap();
    let sol = solve(&a.problem, &Tolerances::default()).unwrap();
    let bound = sol.report.primal_objective;
    let laws = match controllers(&a, &sol.s, Some(3)) {
        Ok(l) => l,
        Err(e) => return verdict(false, format!("extraction failed: {e}")),
    };
    let law = &laws[0];
    let cfg = SimConfig::new(3.0, 1.0, 100, 0.01);
    let space = VariableSpace::pde(2, 1, 1);
    let l = Polynomial::parse("y1^2", &space).unwrap();
    let free = simulate(y0, None, &cfg).unwrap();
    let free_cost = functional_eval(&free, &l).unwrap().value;
    let feedback = |t: f64, x: f64, y: f64| law.eval_saturated(&[t, x], &[y]);
    let closed = match simulate(y0, Some(&feedback), &cfg) {
        Ok(s) => s,
        Err(e) => return verdict(false, format!("closed loop failed: {e}")),
    };
    let cost = functional_eval(&closed, &l).unwrap().value;
    let ratio = closed.final_energy() / closed.energy_at(0);
    let checks = [
        law.unit.degree == 3,
        ratio <= 0.05,
        cost >= bound - 1e-3,
        free_cost > cost,
    ];
    verdict(
        checks.iter().all(|&c| c),
        format!(
            "d=6 p_d {bound:.5} ({}), kappa degree {}, closed-loop cost {cost:.5}, open-loop cost {free_cost:.5}, \
             final/initial energy {ratio:.3e} (limit 0.05)",
            sol.report.status, law.unit.degree
        ),
    )
}

fn oracle_suite() -> Verdict {
    let xs = VariableSpace::coordinates(2);
    let (mut res, mut eig) = (0.0f64, f64::INFINITY);
    let mut count = 0;
    for d in [4u32, 6] {
        let cases: Vec<(pdemom::problem::PdeProblem, String)> = vec![
            (burgers_constant(0.3), "0.3".into()),
            (burgers_constant(-1.2), "-1.2".into()),
            (burgers_constant(2.0), "2".into()),
            (transport("s"), "x2 - x1".into()),
            (transport("s^2"), "(x2 - x1)^2".into()),
            (transport("1 + s - 2*s^3"), "1 + (x2 - x1) - 2*(x2 - x1)^3".into()),
        ];
        for (p, y) in cases {
            let a = build_sdp(&p, d).unwrap();
            let sol = GraphSolution::from_polynomials(vec![Polynomial::parse(&y, &xs).unwrap()]);
            let s = graph_moments(&a, &sol).unwrap();
            let c = check_solution(&a.problem, &s).unwrap();
            res = res.max(c.max_equality_residual);
            eig = eig.min(c.min_block_eigenvalue);
            count += 1;
        }
    }
    verdict(
        res <= 1e-8 && eig >= -1e-9,
        format!("{count} oracle instances at d=4,6: max residual {res:.2e} (limit 1e-8), min eigenvalue {eig:.2e} (limit -1e-9)"),
    )
}

fn moment_matching() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for k in 0..20 {
        let dim = 2 + k % 2;
        let g = box_domain(&vec![0.0; dim], &vec![1.0; dim]).unwrap();
        let space = VariableSpace::coordinates(dim);
        let mu = MomentVector::from_fn(&space, 6, |m| g.lebesgue_moment(m).unwrap());
        let kappa = Polynomial::from_terms(&space, mono_basis(dim, 3).into_iter().map(|m| (m, rng.random_range(-1.0..1.0))));
        let nu = MomentVector::from_fn(&space, 3, |m| kappa.terms().map(|(a, c)| c * mu.get(&m.add(a)).unwrap()).sum());
        let got = extract_with_degree(&mu, &nu, 3).unwrap();
        worst = worst.max((&got.kappa - &kappa).max_abs_coeff());
    }
    verdict(worst <= 1e-8, format!("20 random cubic densities in 2 and 3 variables: max coefficient error {worst:.2e} (limit 1e-8)"))
}

fn solver_correctness() -> Verdict {
    let tol = Tolerances::default();
    let (mut err, mut gap, mut trip) = (0.0f64, 0.0f64, 0.0f64);
    let mut optimal = 0;
    let lib = library::library();
    for (_, p, truth) in &lib {
        let r = solve(p, &tol).unwrap().report;
        optimal += usize::from(r.status == Status::Optimal);
        err = err.max((r.primal_objective - truth).abs());
        gap = gap.max(r.relative_gap);
        let back = solve(&sdpa::import(&sdpa::export(p)).unwrap(), &tol).unwrap().report;
        trip = trip.max((back.primal_objective - r.primal_objective).abs());
    }
    let a = build_sdp(&burgers_energy(Sense::Minimize), 4).unwrap();
    let r = solve(&a.problem, &tol).unwrap().report;
    let back = solve(&sdpa::import(&sdpa::export(&a.problem)).unwrap(), &tol).unwrap().report;
    trip = trip.max((back.primal_objective - r.primal_objective).abs());
    verdict(
        optimal == lib.len() && err <= 1e-7 && gap <= 1e-8 && trip <= 1e-9,
        format!(
            "{optimal}/{} optimal, max objective error {err:.2e} (1e-7), max gap {gap:.2e} (1e-8), SDPA round trip drift {trip:.2e} (1e-9)",
            lib.len()
        ),
    )
}

fn geometry_identities() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..60 {
        let n = rng.random_range(1..=3);
        let lo: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..1.0)).collect();
        let hi: Vec<f64> = lo.iter().map(|l| l + rng.random_range(0.5..2.5)).collect();
        let g = box_domain(&lo, &hi).unwrap();
        let space = VariableSpace::coordinates(n);
        let h = Polynomial::from_terms(&space, mono_basis(n, 4).into_iter().map(|m| (m, rng.random_range(-1.0..1.0))));
        for m in 0..n {
            let surface: f64 = g
                .pieces
                .iter()
                .map(|pc| g.surface_integral(pc.index, &(&h * &pc.normal_gradient[m])).unwrap())
                .sum();
            let volume = g.lebesgue_integral(&h.diff(m)).unwrap();
            worst = worst.max((surface - volume).abs() / (1.0 + volume.abs()));
        }
    }
    let mut defect = 0.0f64;
    for a in [1.0, 0.5, 2.5] {
        let g = box_domain(&[0.0, 0.0], &[1.0, a]).unwrap();
        let s = g.space().clone();
        let map = [Polynomial::var(&s, 0), Polynomial::parse(&format!("x2 + {a}"), &s).unwrap()];
        defect = defect.max(g.measure_preservation_defect(2, 3, &map, 8).unwrap());
    }
    verdict(
        worst <= 1e-10 && defect <= 1e-10,
        format!("divergence theorem on 60 random boxes: worst relative defect {worst:.2e} (1e-10); periodic sigma defect to degree 8 {defect:.2e}"),
    )
}

fn main() {
    // the libtest protocol passes flags such as --list; nothing to list here
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut lines: Vec<(u32, Verdict)> = Vec::new();
    let (c1, energy) = energy_bounds();
    lines.push((1, c1));
    let (c2, x2y2) = x2y2_table();
    lines.push((2, c2));
    lines.push((3, sandwich(energy, x2y2)));
    lines.push((4, table_one()));
    lines.push((5, controller_pipeline()));
    lines.push((6, oracle_suite()));
    lines.push((7, moment_matching()));
    lines.push((8, solver_correctness()));
    lines.push((9, geometry_identities()));
    let passed = lines.iter().filter(|(_, v)| v.pass).count();
    for (k, v) in &lines {
        println!("criterion {k}: {} | {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("acceptance: {passed}/{} criteria pass", lines.len());
}
