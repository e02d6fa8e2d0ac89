use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use pdemom::assembly::{build_sdp, AssembledSdp, AssemblyError};
use pdemom::control::{controllers, Controller, ExtractError};
use pdemom::instances::{INITIAL, LEFT, RIGHT};
use pdemom::oracle::{graph_moments, GraphSolution};
use pdemom::polyalg::{Polynomial, VariableSpace};
use pdemom::problem::{BoundaryCondition, PdeProblem};
use pdemom::problem_file::{load_problem, ProblemFileError};
use pdemom_sdp::{check_solution, sdpa, solve, Sense, Solution, Status, Tolerances};
use pdemom_sim::{functional_eval, simulate as run_sim, GridSolution, SimConfig, SimError};

use crate::report::{
    bound_row, diagnostics, relaxation_line, sense_name, status_label, value, OutDir, Report, BOUND_HEADER,
};
use crate::{Common, GridArgs, KappaArgs};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    ProblemFile(#[from] ProblemFileError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Assembly(AssemblyError),
    #[error("{0}")]
    Solver(String),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Assembly(AssemblyError::Quadrature(_)) | CliError::Solver(_) | CliError::Simulation(_) => 3,
            _ => 2,
        }
    }
}

impl From<AssemblyError> for CliError {
    fn from(e: AssemblyError) -> Self {
        CliError::Assembly(e)
    }
}

/// Result of a command that ran to completion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Outcome {
    Success,
    SolverFailure,
    InvariantViolation,
}

impl Outcome {
    pub fn code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::SolverFailure => 3,
            Outcome::InvariantViolation => 4,
        }
    }
}

fn failed(sol: &Result<Solution, String>) -> bool {
    match sol {
        Ok(s) => !matches!(s.report.status, Status::Optimal | Status::NearOptimal),
        Err(_) => true,
    }
}

fn solved_value(sol: &Result<Solution, String>) -> Option<f64> {
    (!failed(sol)).then(|| sol.as_ref().map(|s| s.report.primal_objective).ok()).flatten()
}

fn load(c: &Common, d: Option<u32>) -> Result<(PdeProblem, u32), CliError> {
    let file = load_problem(&c.problem)?;
    let mut p = file.problem;
    if let Some(t) = c.d_tilde.or(file.relaxation.d_tilde) {
        p.reductions.d_tilde = Some(t);
    }
    let d = d
        .or(c.d)
        .or(file.relaxation.d)
        .ok_or_else(|| CliError::Usage("no relaxation degree: pass --d or set relaxation.d".into()))?;
    Ok((p, d))
}

fn run_solve(a: &AssembledSdp, sense: Sense, tol: &Tolerances) -> Result<Solution, String> {
    solve(&a.with_sense(sense), tol).map_err(|e| e.to_string())
}

fn side_line(label: &str, sol: &Result<Solution, String>) -> String {
    match sol {
        Ok(s) => format!(
            "{label}: {}  {}\n  {}",
            value(s.report.primal_objective),
            status_label(s.report.status),
            diagnostics(s)
        ),
        Err(e) => format!("{label}: solver error: {e}"),
    }
}

fn write_moments(out: &OutDir, a: &AssembledSdp, tag: &str, sol: &Result<Solution, String>) -> std::io::Result<()> {
    if let Ok(s) = sol {
        for (m, mv) in a.measures.iter().zip(a.split(&s.s)) {
            out.write(&format!("moments_{tag}_{}.csv", m.name), &mv.to_csv())?;
        }
    }
    Ok(())
}

fn finish(out: &OutDir, report: &Report) -> Result<(), CliError> {
    out.write("report.txt", report.as_str())?;
    print!("{}", report.as_str());
    Ok(())
}

/// Inf and sup of the objective relaxation.
pub fn analyze(c: &Common) -> Result<Outcome, CliError> {
    let (p, d) = load(c, None)?;
    if p.is_control() {
        return Err(CliError::Usage(format!("{} declares controls; use `control`", p.name)));
    }
    let a = build_sdp(&p, d)?;
    let out = OutDir::create(&c.out)?;
    let tol = c.tolerances();
    let lower = run_solve(&a, Sense::Minimize, &tol);
    let upper = run_solve(&a, Sense::Maximize, &tol);
    let mut r = Report::default();
    r.line(format!("problem: {}", p.name));
    r.line(relaxation_line(&a));
    r.line(side_line("lower", &lower));
    r.line(side_line("upper", &upper));
    let mut outcome = Outcome::Success;
    if failed(&lower) || failed(&upper) {
        outcome = Outcome::SolverFailure;
    }
    if let (Some(lo), Some(up)) = (solved_value(&lower), solved_value(&upper)) {
        if lo > up + 1e-6 * (1.0 + up.abs()) {
            r.line(format!("invariant violated: lower {} exceeds upper {}", value(lo), value(up)));
            outcome = Outcome::InvariantViolation;
        }
    }
    let csv = format!("{BOUND_HEADER}{}{}", bound_row("lower", &lower), bound_row("upper", &upper));
    out.write("bounds.csv", &csv)?;
    write_moments(&out, &a, "lower", &lower)?;
    write_moments(&out, &a, "upper", &upper)?;
    if c.export_sdpa {
        export_both(&out, &a, &p.name)?;
    }
    finish(&out, &r)?;
    Ok(outcome)
}

fn export_both(out: &OutDir, a: &AssembledSdp, name: &str) -> std::io::Result<()> {
    for sense in [Sense::Minimize, Sense::Maximize] {
        out.write(
            &format!("{name}_d{}_{}.dat-s", a.d, sense_name(sense)),
            &sdpa::export(&a.with_sense(sense)),
        )?;
    }
    Ok(())
}

struct ControlRun {
    a: AssembledSdp,
    sol: Result<Solution, String>,
    laws: Vec<Controller>,
}

fn control_run(c: &Common, kappa: KappaArgs, p: &PdeProblem, d: u32) -> Result<ControlRun, CliError> {
    if !p.is_control() {
        return Err(CliError::Usage(format!("{} declares no controls", p.name)));
    }
    let a = build_sdp(p, d)?;
    let sol = run_solve(&a, p.sense, &c.tolerances());
    let laws = match &sol {
        Ok(s) if !failed(&sol) => controllers(&a, &s.s, kappa.kappa_degree).map_err(|e| match e {
            ExtractError::MissingMoment(_) => CliError::Usage(format!("controller degree too high for d = {d}: {e}")),
            other => CliError::Solver(other.to_string()),
        })?,
        _ => Vec::new(),
    };
    Ok(ControlRun { a, sol, laws })
}

fn law_name(law: &Controller) -> String {
    match law.piece {
        None => format!("u{}", law.channel + 1),
        Some(i) => format!("u{}_b{i}", law.channel + 1),
    }
}

fn control_report(r: &mut Report, run: &ControlRun) {
    r.line(relaxation_line(&run.a));
    r.line(side_line("cost bound p_d", &run.sol));
    for law in &run.laws {
        r.line(format!(
            "controller {}: degree {}, matching residual {:.3e}, condition {:.3e}, rank {}/{}",
            law_name(law),
            law.unit.degree,
            law.unit.residual,
            law.unit.condition,
            law.unit.rank,
            law.unit.coefficients().len()
        ));
        r.line(format!("  {} = {}", law_name(law), law.physical));
    }
}

/// Lower bound on the optimal cost and the extracted feedback laws.
pub fn control(c: &Common, kappa: KappaArgs) -> Result<Outcome, CliError> {
    let (p, d) = load(c, None)?;
    let run = control_run(c, kappa, &p, d)?;
    let out = OutDir::create(&c.out)?;
    let mut r = Report::default();
    r.line(format!("problem: {}", p.name));
    control_report(&mut r, &run);
    out.write("bounds.csv", &format!("{BOUND_HEADER}{}", bound_row("cost", &run.sol)))?;
    write_moments(&out, &run.a, "cost", &run.sol)?;
    for law in &run.laws {
        out.write(&format!("controller_{}.csv", law_name(law)), &law.to_csv())?;
        out.write(&format!("controller_{}_unit.csv", law_name(law)), &law.unit.to_csv())?;
    }
    if c.export_sdpa {
        out.write(&format!("{}_d{d}_{}.dat-s", p.name, sense_name(p.sense)), &sdpa::export(&run.a.problem))?;
    }
    finish(&out, &r)?;
    Ok(if failed(&run.sol) {
        Outcome::SolverFailure
    } else {
        Outcome::Success
    })
}

/// Checks that `p` is the periodic Burgers problem the simulator handles.
fn burgers_setup(p: &PdeProblem) -> Result<(f64, f64), CliError> {
    let not = |why: &str| CliError::Usage(format!("{} cannot be simulated: {why}", p.name));
    let (lo, hi) = p.geometry.box_bounds().ok_or_else(|| not("domain is not a box"))?;
    if lo.len() != 2 || lo.iter().any(|&v| v != 0.0) {
        return Err(not("domain must be [0, T] x [0, L]"));
    }
    let burgers = p.parse_poly("z1_1 + y1*z1_2").expect("fixed expression");
    if p.n_y != 1 || p.f.len() != 1 || p.f[0] != burgers || !p.b.is_empty() {
        return Err(not("equation is not dy/dx1 + y dy/dx2 = u"));
    }
    if !matches!(p.boundary[INITIAL], BoundaryCondition::Dirichlet(_)) {
        return Err(not("initial data missing on x1 = 0"));
    }
    if !matches!(p.boundary[LEFT], BoundaryCondition::Periodic { target: RIGHT, .. }) {
        return Err(not("x2 must be periodic"));
    }
    if let Some(ctrl) = &p.controls {
        let one = p.parse_poly("1").expect("fixed expression");
        if ctrl.c.len() != 1 || ctrl.c[0].len() != 1 || ctrl.c[0][0] != one {
            return Err(not("the input must enter as a source with coefficient 1"));
        }
    }
    if p.boundary.iter().any(|b| matches!(b, BoundaryCondition::General { control: Some(_), .. })) {
        return Err(not("boundary controls are not simulated"));
    }
    if !p.objective.l_boundary.is_empty() || !p.objective.l_u_boundary.is_empty() {
        return Err(not("boundary objective terms are not simulated"));
    }
    Ok((hi[0], hi[1]))
}

/// `int l(x) + l_u(x, y) u dx` over the grid.
fn cost(sol: &GridSolution, p: &PdeProblem) -> Result<f64, CliError> {
    let mut total = functional_eval(sol, &p.objective.l)?.value;
    if let Some(l_u) = p.objective.l_u.first() {
        let xy = p.space.subspace(&[0, 1, 2]);
        let l_u = l_u.embed(&xy).map_err(|e| CliError::Usage(format!("objective.l_u: {e}")))?;
        let last = sol.t.len() - 1;
        let mut acc = 0.0;
        for n in 0..=last {
            let w = if n == 0 || n == last { 0.5 } else { 1.0 };
            for i in 0..sol.nx {
                acc += w * l_u.eval(&[sol.t[n], sol.x[i], sol.y[n][i]]) * sol.u[n][i];
            }
        }
        total += acc * sol.dx * sol.dt;
    }
    Ok(total)
}

/// Reference simulation; with controls, the extracted law is applied with
/// saturation and compared against the open loop and the cost bound.
pub fn simulate(c: &Common, kappa: KappaArgs, grid: GridArgs, open_loop: bool) -> Result<Outcome, CliError> {
    let file = load_problem(&c.problem)?;
    let p = file.problem;
    let (horizon, length) = burgers_setup(&p)?;
    let BoundaryCondition::Dirichlet(data) = &p.boundary[INITIAL] else {
        unreachable!("checked by burgers_setup")
    };
    let y0 = |s: f64| data.eval(&[0.0, s])[0];
    let cfg = SimConfig::new(horizon, length, grid.nx, grid.dt);
    let out = OutDir::create(&c.out)?;
    let mut r = Report::default();
    r.line(format!("problem: {}", p.name));
    r.line(format!("grid: nx = {}, dt = {}, horizon {horizon}, length {length}", grid.nx, grid.dt));
    let free = run_sim(y0, None, &cfg)?;
    let free_cost = cost(&free, &p)?;
    let mut summary = String::from("run,cost,initial_energy,final_energy,dt_used,split_steps,max_cfl\n");
    let mut row = |name: &str, sol: &GridSolution, cost: f64| {
        summary.push_str(&format!(
            "{name},{cost:e},{:e},{:e},{:e},{},{:e}\n",
            sol.energy_at(0),
            sol.final_energy(),
            sol.dt,
            sol.split_steps,
            sol.max_cfl
        ));
    };
    row("open_loop", &free, free_cost);
    r.line(format!(
        "open loop: cost {}, final energy {}",
        value(free_cost),
        value(free.final_energy())
    ));
    let mut outcome = Outcome::Success;
    let mut trajectory = &free;
    let closed;
    if p.is_control() && !open_loop {
        let d = c
            .d
            .or(file.relaxation.d)
            .ok_or_else(|| CliError::Usage("no relaxation degree: pass --d or set relaxation.d".into()))?;
        let mut p = p.clone();
        if let Some(t) = c.d_tilde.or(file.relaxation.d_tilde) {
            p.reductions.d_tilde = Some(t);
        }
        let run = control_run(c, kappa, &p, d)?;
        control_report(&mut r, &run);
        let Some(law) = run.laws.first() else {
            r.line("no controller: the relaxation was not solved");
            out.write("summary.csv", &summary)?;
            out.write("trajectory.csv", &free.to_csv())?;
            finish(&out, &r)?;
            return Ok(Outcome::SolverFailure);
        };
        let feedback = |t: f64, x: f64, y: f64| law.eval_saturated(&[t, x], &[y]);
        closed = run_sim(y0, Some(&feedback), &cfg)?;
        let closed_cost = cost(&closed, &p)?;
        row("closed_loop", &closed, closed_cost);
        r.line(format!(
            "closed loop: cost {}, final energy {} ({:.3e} of initial)",
            value(closed_cost),
            value(closed.final_energy()),
            closed.final_energy() / closed.energy_at(0)
        ));
        if let Some(bound) = solved_value(&run.sol) {
            let tol = 1e-3 * (1.0 + bound.abs());
            if closed_cost < bound - tol && run.sol.as_ref().is_ok_and(|s| s.report.status == Status::Optimal) {
                r.line(format!(
                    "invariant violated: closed-loop cost {} below the bound {}",
                    value(closed_cost),
                    value(bound)
                ));
                outcome = Outcome::InvariantViolation;
            }
        }
        trajectory = &closed;
    }
    out.write("summary.csv", &summary)?;
    out.write("trajectory.csv", &trajectory.to_csv())?;
    finish(&out, &r)?;
    Ok(outcome)
}

/// SDPA files for the problem's sense (both senses for analysis problems).
pub fn export_sdpa(c: &Common) -> Result<Outcome, CliError> {
    let (p, d) = load(c, None)?;
    let a = build_sdp(&p, d)?;
    let out = OutDir::create(&c.out)?;
    let mut r = Report::default();
    r.line(format!("problem: {}", p.name));
    r.line(relaxation_line(&a));
    if p.is_control() {
        let name = format!("{}_d{d}_{}.dat-s", p.name, sense_name(p.sense));
        out.write(&name, &sdpa::export(&a.problem))?;
        r.line(format!("wrote {name}"));
    } else {
        export_both(&out, &a, &p.name)?;
        for sense in [Sense::Minimize, Sense::Maximize] {
            r.line(format!("wrote {}_d{d}_{}.dat-s", p.name, sense_name(sense)));
        }
    }
    finish(&out, &r)?;
    Ok(Outcome::Success)
}

fn parse_fields(text: &str, n: usize, want: usize, what: &str) -> Result<Vec<Polynomial>, CliError> {
    let xs = VariableSpace::coordinates(n);
    let parts: Vec<Polynomial> = text
        .split(';')
        .map(|s| Polynomial::parse(s.trim(), &xs).map_err(|e| CliError::Usage(format!("--{what}: {e}"))))
        .collect::<Result<_, _>>()?;
    if parts.len() != want {
        return Err(CliError::Usage(format!("--{what}: expected {want} expressions, got {}", parts.len())));
    }
    Ok(parts)
}

/// Residuals of the graph moments of a closed-form candidate solution.
pub fn certify(c: &Common, solution: &str, control: Option<&str>) -> Result<Outcome, CliError> {
    let (p, d) = load(c, None)?;
    let n = p.n;
    let ys = parse_fields(solution, n, p.n_y, "solution")?;
    let mut sol = GraphSolution::from_polynomials(ys);
    if let Some(u) = control {
        let us = parse_fields(u, n, p.n_u(), "control")?;
        sol = sol.with_control(Arc::new(move |x: &[f64]| us.iter().map(|q| q.eval(x)).collect()));
    } else if p.is_control() {
        return Err(CliError::Usage("the problem has controls: pass --control".into()));
    }
    let a = build_sdp(&p, d)?;
    let s = graph_moments(&a, &sol)?;
    let check = check_solution(&a.problem, &s).map_err(|e| CliError::Solver(e.to_string()))?;
    let mut by_family: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (row, tag) in a.problem.equalities.iter().zip(&a.tags) {
        let e = by_family.entry(tag.family.to_string()).or_insert((0.0, 0));
        e.0 = e.0.max((row.dot(&s) - row.rhs).abs());
        e.1 += 1;
    }
    let out = OutDir::create(&c.out)?;
    let mut r = Report::default();
    r.line(format!("problem: {}", p.name));
    r.line(relaxation_line(&a));
    r.line(format!("max equality residual: {:.3e}", check.max_equality_residual));
    if let Some(w) = check.worst_row {
        r.line(format!("worst row: {}", a.describe_row(w)));
    }
    r.line(format!("min block eigenvalue: {:.3e}", check.min_block_eigenvalue));
    let mut csv = String::from("family,rows,max_residual\n");
    for (family, (res, rows)) in &by_family {
        r.line(format!("  {family}: {rows} rows, max residual {res:.3e}"));
        csv.push_str(&format!("{family},{rows},{res:e}\n"));
    }
    let mut blocks = String::from("block,min_eigenvalue\n");
    for (b, e) in a.problem.blocks.iter().zip(&check.block_min_eigenvalues) {
        blocks.push_str(&format!("{},{e:e}\n", b.name));
    }
    let tol = c.tolerances();
    let ok = check.is_feasible(tol.feas, tol.psd);
    r.line(if ok {
        "verdict: feasible".to_string()
    } else {
        format!("verdict: not feasible (tolerances {:e} / {:e})", tol.feas, tol.psd)
    });
    out.write("residuals.csv", &csv)?;
    out.write("blocks.csv", &blocks)?;
    finish(&out, &r)?;
    Ok(if ok {
        Outcome::Success
    } else {
        Outcome::InvariantViolation
    })
}

struct SweepEntry {
    d: u32,
    result: Result<SweepSolve, String>,
}

struct SweepSolve {
    block: usize,
    rows: usize,
    lower: Option<Result<Solution, String>>,
    upper: Option<Result<Solution, String>>,
    assemble: Duration,
    solve: Duration,
}

fn sweep_one(p: &PdeProblem, d: u32, tol: &Tolerances) -> Result<SweepSolve, String> {
    let t0 = Instant::now();
    let a = build_sdp(p, d).map_err(|e| e.to_string())?;
    let assemble = t0.elapsed();
    let t1 = Instant::now();
    let (lower, upper) = if p.is_control() {
        match p.sense {
            Sense::Minimize => (Some(run_solve(&a, Sense::Minimize, tol)), None),
            Sense::Maximize => (None, Some(run_solve(&a, Sense::Maximize, tol))),
        }
    } else {
        (Some(run_solve(&a, Sense::Minimize, tol)), Some(run_solve(&a, Sense::Maximize, tol)))
    };
    Ok(SweepSolve {
        block: a.largest_block(),
        rows: a.problem.equalities.len(),
        lower,
        upper,
        assemble,
        solve: t1.elapsed(),
    })
}

fn cell(sol: &Option<Result<Solution, String>>) -> (String, String) {
    match sol {
        None => ("-".into(), "-".into()),
        Some(Ok(s)) => (value(s.report.primal_objective), status_label(s.report.status)),
        Some(Err(e)) => ("-".into(), format!("error: {e}")),
    }
}

fn monotone(values: &[(u32, f64)], increasing: bool) -> bool {
    values.windows(2).all(|w| {
        let tol = 1e-6 * (1.0 + w[0].1.abs());
        if increasing {
            w[1].1 >= w[0].1 - tol
        } else {
            w[1].1 <= w[0].1 + tol
        }
    })
}

/// Bounds for each degree of `--sweep`, solved in parallel.
pub fn sweep(c: &Common) -> Result<Outcome, CliError> {
    let (p, _) = load(c, Some(0))?;
    let mut degrees = if c.sweep.is_empty() {
        c.d.into_iter().collect::<Vec<_>>()
    } else {
        c.sweep.clone()
    };
    degrees.sort_unstable();
    degrees.dedup();
    if degrees.is_empty() {
        return Err(CliError::Usage("pass --sweep 4,6,8 or --d".into()));
    }
    if let Some(&bad) = degrees.iter().find(|&&d| d == 0 || d % 2 != 0) {
        return Err(CliError::Usage(format!("relaxation degree must be even and positive, got {bad}")));
    }
    let tol = c.tolerances();
    let entries: Vec<SweepEntry> = std::thread::scope(|scope| {
        let handles: Vec<_> = degrees
            .iter()
            .map(|&d| {
                let (p, tol) = (&p, &tol);
                scope.spawn(move || SweepEntry {
                    d,
                    result: sweep_one(p, d, tol),
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep job panicked")).collect()
    });
    let out = OutDir::create(&c.out)?;
    let mut r = Report::default();
    r.line(format!("problem: {}", p.name));
    r.line(format!("{:>3} {:>6} {:>7}  {:<14} {:<26} {:<14} {:<26}", "d", "N", "rows", "lower", "status", "upper", "status"));
    let mut csv = String::from("d,largest_block,rows,lower,lower_status,upper,upper_status\n");
    let mut timings = String::from("d,assemble_seconds,solve_seconds\n");
    let mut outcome = Outcome::Success;
    let (mut lows, mut ups) = (Vec::new(), Vec::new());
    for e in &entries {
        match &e.result {
            Ok(s) => {
                let (lv, ls) = cell(&s.lower);
                let (uv, us) = cell(&s.upper);
                r.line(format!("{:>3} {:>6} {:>7}  {lv:<14} {ls:<26} {uv:<14} {us:<26}", e.d, s.block, s.rows));
                csv.push_str(&format!("{},{},{},{lv},{ls},{uv},{us}\n", e.d, s.block, s.rows));
                timings.push_str(&format!("{},{:.3},{:.3}\n", e.d, s.assemble.as_secs_f64(), s.solve.as_secs_f64()));
                for (side, acc) in [(&s.lower, &mut lows), (&s.upper, &mut ups)] {
                    if let Some(sol) = side {
                        if failed(sol) {
                            outcome = outcome.max(Outcome::SolverFailure);
                        } else if let Some(v) = solved_value(sol) {
                            acc.push((e.d, v));
                        }
                    }
                }
            }
            Err(msg) => {
                r.line(format!("{:>3}  failed: {msg}", e.d));
                csv.push_str(&format!("{},,,,failed,,failed\n", e.d));
                outcome = outcome.max(Outcome::SolverFailure);
            }
        }
    }
    let (lm, um) = (monotone(&lows, true), monotone(&ups, false));
    r.line(format!(
        "monotonicity: lower {}, upper {}",
        if lm { "nondecreasing" } else { "VIOLATED" },
        if um { "nonincreasing" } else { "VIOLATED" }
    ));
    if !(lm && um) {
        outcome = Outcome::InvariantViolation;
    }
    out.write("sweep.csv", &csv)?;
    out.write("timings.csv", &timings)?;
    finish(&out, &r)?;
    print!("{timings}");
    Ok(outcome)
}
