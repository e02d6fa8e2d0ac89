//! Finite-volume solver for the periodic Burgers equation
//! `dy/dt + d(y^2/2)/dx = u(t, x, y)` with a local Lax-Friedrichs (Rusanov)
//! flux and forward Euler stepping. The control source is added after the
//! flux update.

use std::fmt::Write;

use pdemom::polyalg::Polynomial;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("solution left |y| <= 1e6 at step {step} (t = {t})")]
    BlowUp { step: usize, t: f64 },
    #[error("invalid grid: {0}")]
    BadGrid(String),
    #[error("functional uses variable {0}, which the grid does not provide")]
    UnknownVariable(String),
}

/// Blow-up threshold on `|y|`.
pub const BLOW_UP: f64 = 1e6;

/// Largest CFL number `max|y| dt / dx` accepted for a step.
pub const CFL_MAX: f64 = 1.0;

/// Grid and horizon.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig {
    pub horizon: f64,
    pub length: f64,
    pub nx: usize,
    pub dt: f64,
}

impl SimConfig {
    pub fn new(horizon: f64, length: f64, nx: usize, dt: f64) -> Self {
        SimConfig {
            horizon,
            length,
            nx,
            dt,
        }
    }

    pub fn dx(&self) -> f64 {
        self.length / self.nx as f64
    }
}

/// State on a uniform periodic grid, recorded at every time step.
#[derive(Clone, Debug)]
pub struct GridSolution {
    pub dt: f64,
    pub dx: f64,
    pub nx: usize,
    pub periodic: bool,
    /// Times `n dt`, ending exactly at the horizon.
    pub t: Vec<f64>,
    /// Cell centres.
    pub x: Vec<f64>,
    /// `y[n][i]` at `(t[n], x[i])`.
    pub y: Vec<Vec<f64>>,
    /// Saturated input applied during step `n` (zero on the last record).
    pub u: Vec<Vec<f64>>,
    /// Halvings of the requested `dt` forced by the initial CFL number.
    pub dt_halvings: u32,
    /// Steps that had to be split into substeps to keep CFL <= 1.
    pub split_steps: usize,
    /// Largest CFL number over all accepted (sub)steps.
    pub max_cfl: f64,
}

fn rusanov(a: f64, b: f64) -> f64 {
    0.5 * (0.5 * a * a + 0.5 * b * b) - 0.5 * a.abs().max(b.abs()) * (b - a)
}

fn flux_step(y: &[f64], r: f64, out: &mut Vec<f64>) {
    let n = y.len();
    let flux: Vec<f64> = (0..n).map(|i| rusanov(y[i], y[(i + 1) % n])).collect();
    out.clear();
    out.extend((0..n).map(|i| y[i] - r * (flux[i] - flux[(i + n - 1) % n])));
}

fn max_abs(y: &[f64]) -> f64 {
    y.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// Runs the scheme from `y0` up to the horizon. `controller(t, x, y)` is
/// evaluated pointwise on the state at the start of each step and its value
/// is used as given (saturate it beforehand if needed).
pub fn simulate(
    y0: impl Fn(f64) -> f64,
    controller: Option<&dyn Fn(f64, f64, f64) -> f64>,
    cfg: &SimConfig,
) -> Result<GridSolution, SimError> {
    if cfg.nx < 2 || !(cfg.dt > 0.0) || !(cfg.horizon > 0.0) || !(cfg.length > 0.0) {
        return Err(SimError::BadGrid(format!("{cfg:?}")));
    }
    let dx = cfg.dx();
    let x: Vec<f64> = (0..cfg.nx).map(|i| (i as f64 + 0.5) * dx).collect();
    let mut y: Vec<f64> = x.iter().map(|&s| y0(s)).collect();
    let mut dt = cfg.dt;
    let mut dt_halvings = 0;
    while max_abs(&y) * dt / dx > CFL_MAX {
        dt *= 0.5;
        dt_halvings += 1;
    }
    let steps = (cfg.horizon / dt).round().max(1.0) as usize;
    let dt = cfg.horizon / steps as f64;
    let mut sol = GridSolution {
        dt,
        dx,
        nx: cfg.nx,
        periodic: true,
        t: Vec::with_capacity(steps + 1),
        x: x.clone(),
        y: Vec::with_capacity(steps + 1),
        u: Vec::with_capacity(steps + 1),
        dt_halvings,
        split_steps: 0,
        max_cfl: 0.0,
    };
    let mut next = Vec::with_capacity(cfg.nx);
    for n in 0..steps {
        let t = n as f64 * dt;
        let u: Vec<f64> = match controller {
            Some(k) => x.iter().zip(&y).map(|(&s, &v)| k(t, s, v)).collect(),
            None => vec![0.0; cfg.nx],
        };
        // the flux update is monotone, so only the input can raise max|y|
        let peak = max_abs(&y) + dt * max_abs(&u);
        let mut sub = 1usize;
        while peak * dt / (sub as f64 * dx) > CFL_MAX {
            sub *= 2;
        }
        if sub > 1 {
            sol.split_steps += 1;
        }
        let h = dt / sub as f64;
        let mut cur = y.clone();
        for _ in 0..sub {
            sol.max_cfl = sol.max_cfl.max(max_abs(&cur) * h / dx);
            flux_step(&cur, h / dx, &mut next);
            for (v, ui) in next.iter_mut().zip(&u) {
                *v += h * ui;
            }
            std::mem::swap(&mut cur, &mut next);
        }
        sol.t.push(t);
        sol.y.push(std::mem::replace(&mut y, cur));
        sol.u.push(u);
        if y.iter().any(|v| !v.is_finite() || v.abs() > BLOW_UP) {
            return Err(SimError::BlowUp { step: n + 1, t: t + dt });
        }
    }
    sol.t.push(cfg.horizon);
    sol.y.push(y);
    sol.u.push(vec![0.0; cfg.nx]);
    Ok(sol)
}

impl GridSolution {
    /// `int y(t_n, x)^2 dx`.
    pub fn energy_at(&self, n: usize) -> f64 {
        self.y[n].iter().map(|v| v * v).sum::<f64>() * self.dx
    }

    pub fn final_energy(&self) -> f64 {
        self.energy_at(self.y.len() - 1)
    }

    /// `int y dx` at step `n`.
    pub fn mass_at(&self, n: usize) -> f64 {
        self.y[n].iter().sum::<f64>() * self.dx
    }

    /// Space-time integral of `f(t, x, y)`: midpoint rule in space,
    /// trapezoidal rule in time.
    pub fn integrate(&self, f: impl Fn(f64, f64, f64) -> f64) -> f64 {
        let last = self.t.len() - 1;
        let mut total = 0.0;
        for (n, (&t, row)) in self.t.iter().zip(&self.y).enumerate() {
            let w = if n == 0 || n == last { 0.5 } else { 1.0 };
            let s: f64 = self.x.iter().zip(row).map(|(&x, &y)| f(t, x, y)).sum();
            total += w * s;
        }
        total * self.dx * self.dt
    }

    /// `t,x,y,u` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x,y,u\n");
        for ((t, row), urow) in self.t.iter().zip(&self.y).zip(&self.u) {
            for ((x, y), u) in self.x.iter().zip(row).zip(urow) {
                let _ = writeln!(out, "{t},{x},{y:e},{u:e}");
            }
        }
        out
    }
}

/// Value of a discretized functional.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FunctionalValue {
    pub value: f64,
    /// Derivatives were replaced by central differences.
    pub approximate_derivatives: bool,
}

/// `int L(x, y, Dy) dx` over the space-time grid. `L` may use `x1` (time),
/// `x2`, `y1`, `z1_1 = dy/dx1` and `z1_2 = dy/dx2`; derivatives are taken by
/// central differences (one-sided at the first and last record).
pub fn functional_eval(sol: &GridSolution, l: &Polynomial) -> Result<FunctionalValue, SimError> {
    let space = l.space();
    #[derive(Clone, Copy)]
    enum Slot {
        T,
        X,
        Y,
        Dt,
        Dx,
    }
    let mut slots = Vec::with_capacity(space.dim());
    let mut approx = false;
    for v in 0..space.dim() {
        let name = space.name(v);
        let slot = match name {
            "x1" => Slot::T,
            "x2" => Slot::X,
            "y1" => Slot::Y,
            "z1_1" => Slot::Dt,
            "z1_2" => Slot::Dx,
            _ => {
                if l.uses_var(v) {
                    return Err(SimError::UnknownVariable(name.to_string()));
                }
                Slot::Y
            }
        };
        if matches!(slot, Slot::Dt | Slot::Dx) && l.uses_var(v) {
            approx = true;
        }
        slots.push(slot);
    }
    let last = sol.t.len() - 1;
    let nx = sol.nx;
    let mut point = vec![0.0; space.dim()];
    let mut total = 0.0;
    for n in 0..=last {
        let w = if n == 0 || n == last { 0.5 } else { 1.0 };
        let (a, b) = (n.saturating_sub(1), (n + 1).min(last));
        let span = (b - a) as f64 * sol.dt;
        let mut s = 0.0;
        for i in 0..nx {
            for (p, slot) in point.iter_mut().zip(&slots) {
                *p = match slot {
                    Slot::T => sol.t[n],
                    Slot::X => sol.x[i],
                    Slot::Y => sol.y[n][i],
                    Slot::Dt => (sol.y[b][i] - sol.y[a][i]) / span,
                    Slot::Dx => {
                        (sol.y[n][(i + 1) % nx] - sol.y[n][(i + nx - 1) % nx]) / (2.0 * sol.dx)
                    }
                };
            }
            s += l.eval(&point);
        }
        total += w * s;
    }
    Ok(FunctionalValue {
        value: total * sol.dx * sol.dt,
        approximate_derivatives: approx,
    })
}
