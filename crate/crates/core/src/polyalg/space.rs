use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

/// Role of a variable inside a PDE problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarKind {
    /// Independent coordinate `x_i`.
    X,
    /// Unknown function value `y_k`.
    Y,
    /// Derivative `z_{k,j} = dy_k/dx_j`.
    Z,
    /// Control input `u_k`.
    U,
}

impl VarKind {
    fn block_name(self) -> &'static str {
        match self {
            VarKind::X => "x",
            VarKind::Y => "y",
            VarKind::Z => "z",
            VarKind::U => "u",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
}

#[derive(Debug, PartialEq, Eq)]
struct SpaceInner {
    vars: Vec<Variable>,
    by_name: HashMap<String, usize>,
}

/// Ordered, named variables grouped into `x`, `y`, `z`, `u` blocks.
///
/// Cheap to clone. Two spaces compare equal when their variable lists agree.
#[derive(Clone)]
pub struct VariableSpace {
    inner: Arc<SpaceInner>,
}

impl PartialEq for VariableSpace {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner) || self.inner.vars == other.inner.vars
    }
}

impl Eq for VariableSpace {}

impl fmt::Debug for VariableSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.inner.vars.iter().map(|v| v.name.as_str()).collect();
        write!(f, "VariableSpace{names:?}")
    }
}

/// Canonical name of `z_{k,j}` (both 1-based).
pub fn z_name(k: usize, j: usize) -> String {
    format!("z{k}_{j}")
}

impl VariableSpace {
    pub fn from_variables(vars: Vec<Variable>) -> Self {
        let mut by_name = HashMap::with_capacity(vars.len());
        for (i, v) in vars.iter().enumerate() {
            let prev = by_name.insert(v.name.clone(), i);
            assert!(prev.is_none(), "duplicate variable name {}", v.name);
        }
        VariableSpace {
            inner: Arc::new(SpaceInner { vars, by_name }),
        }
    }

    /// Full PDE space: `x1..xn`, `y1..y_ny`, `z{k}_{j}` (k-major), `u1..u_nu`.
    pub fn pde(n: usize, n_y: usize, n_u: usize) -> Self {
        let mut vars = Vec::with_capacity(n + n_y + n_y * n + n_u);
        for i in 1..=n {
            vars.push(Variable {
                name: format!("x{i}"),
                kind: VarKind::X,
            });
        }
        for k in 1..=n_y {
            vars.push(Variable {
                name: format!("y{k}"),
                kind: VarKind::Y,
            });
        }
        for k in 1..=n_y {
            for j in 1..=n {
                vars.push(Variable {
                    name: z_name(k, j),
                    kind: VarKind::Z,
                });
            }
        }
        for k in 1..=n_u {
            vars.push(Variable {
                name: format!("u{k}"),
                kind: VarKind::U,
            });
        }
        Self::from_variables(vars)
    }

    /// Coordinates only.
    pub fn coordinates(n: usize) -> Self {
        Self::pde(n, 0, 0)
    }

    /// Anonymous space `t1..t_dim`, handy for tests and generic moment work.
    pub fn generic(dim: usize) -> Self {
        Self::pde(dim, 0, 0)
    }

    pub fn dim(&self) -> usize {
        self.inner.vars.len()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.inner.vars
    }

    pub fn name(&self, i: usize) -> &str {
        &self.inner.vars[i].name
    }

    pub fn kind(&self, i: usize) -> VarKind {
        self.inner.vars[i].kind
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.inner.by_name.get(name).copied()
    }

    /// Positions of every variable of the given kind.
    pub fn indices_of(&self, kind: VarKind) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.kind(i) == kind).collect()
    }

    pub fn count(&self, kind: VarKind) -> usize {
        self.inner.vars.iter().filter(|v| v.kind == kind).count()
    }

    /// Block sizes in declaration order, e.g. `[("x", 2), ("y", 1), ("z", 2)]`.
    pub fn blocks(&self) -> Vec<(&'static str, usize)> {
        let mut out: Vec<(&'static str, usize)> = Vec::new();
        for v in &self.inner.vars {
            match out.last_mut() {
                Some((name, len)) if *name == v.kind.block_name() => *len += 1,
                _ => out.push((v.kind.block_name(), 1)),
            }
        }
        out
    }

    /// Space made of the listed variables, in the given order.
    pub fn subspace(&self, indices: &[usize]) -> VariableSpace {
        Self::from_variables(indices.iter().map(|&i| self.inner.vars[i].clone()).collect())
    }

    /// Append variables (names must be fresh).
    pub fn extended(&self, extra: &[Variable]) -> VariableSpace {
        let mut vars = self.inner.vars.clone();
        vars.extend_from_slice(extra);
        Self::from_variables(vars)
    }
}
