use nalgebra::DMatrix;

use crate::SdpError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Coefficient `coef` of variable `var` at `(i, j)` and `(j, i)`, `i <= j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockEntry {
    pub i: usize,
    pub j: usize,
    pub var: usize,
    pub coef: f64,
}

/// One PSD constraint `sum_j s_j A_j - C >= 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct PsdBlock {
    pub name: String,
    pub size: usize,
    pub entries: Vec<BlockEntry>,
    /// Upper-triangle entries `(i, j, value)` of `C`.
    pub constant: Vec<(usize, usize, f64)>,
}

impl PsdBlock {
    pub fn new(name: impl Into<String>, size: usize) -> Self {
        PsdBlock {
            name: name.into(),
            size,
            entries: Vec::new(),
            constant: Vec::new(),
        }
    }

    pub fn push(&mut self, i: usize, j: usize, var: usize, coef: f64) {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        if coef != 0.0 {
            self.entries.push(BlockEntry { i, j, var, coef });
        }
    }

    pub fn push_constant(&mut self, i: usize, j: usize, value: f64) {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        if value != 0.0 {
            self.constant.push((i, j, value));
        }
    }

    /// `F(s) = sum_j s_j A_j - C`.
    pub fn evaluate(&self, s: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.size, self.size);
        for e in &self.entries {
            m[(e.i, e.j)] += e.coef * s[e.var];
        }
        for &(i, j, v) in &self.constant {
            m[(i, j)] -= v;
        }
        symmetrize_upper(&mut m);
        m
    }

    /// Entries sorted by `(i, j, var)` with duplicates merged.
    fn canonicalize(&mut self) {
        self.entries.sort_by(|a, b| (a.i, a.j, a.var).cmp(&(b.i, b.j, b.var)));
        let mut merged: Vec<BlockEntry> = Vec::with_capacity(self.entries.len());
        for e in self.entries.drain(..) {
            match merged.last_mut() {
                Some(last) if (last.i, last.j, last.var) == (e.i, e.j, e.var) => last.coef += e.coef,
                _ => merged.push(e),
            }
        }
        merged.retain(|e| e.coef != 0.0);
        self.entries = merged;
        self.constant.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(self.constant.len());
        for c in self.constant.drain(..) {
            match merged.last_mut() {
                Some(last) if (last.0, last.1) == (c.0, c.1) => last.2 += c.2,
                _ => merged.push(c),
            }
        }
        merged.retain(|c| c.2 != 0.0);
        self.constant = merged;
    }
}

pub(crate) fn symmetrize_upper(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            m[(i, j)] = m[(j, i)];
        }
    }
}

/// Sparse equality row `sum coef * s_var = rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl LinearRow {
    pub fn dot(&self, s: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(k, c)| c * s[k]).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConicProblem {
    pub n_vars: usize,
    pub sense: Sense,
    pub c: Vec<f64>,
    pub offset: f64,
    pub equalities: Vec<LinearRow>,
    pub blocks: Vec<PsdBlock>,
}

impl ConicProblem {
    pub fn new(n_vars: usize, sense: Sense) -> Self {
        ConicProblem {
            n_vars,
            sense,
            c: vec![0.0; n_vars],
            offset: 0.0,
            equalities: Vec::new(),
            blocks: Vec::new(),
        }
    }

    pub fn add_equality(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.equalities.push(LinearRow { coeffs, rhs });
    }

    pub fn psd_dimension(&self) -> usize {
        self.blocks.iter().map(|b| b.size).sum()
    }

    pub fn objective(&self, s: &[f64]) -> f64 {
        self.c.iter().zip(s).map(|(c, v)| c * v).sum::<f64>() + self.offset
    }

    pub fn validate(&self) -> Result<(), SdpError> {
        if self.c.len() != self.n_vars {
            return Err(SdpError::DimensionMismatch {
                got: self.c.len(),
                want: self.n_vars,
            });
        }
        let check_var = |index: usize| {
            if index >= self.n_vars {
                Err(SdpError::VariableOutOfRange {
                    index,
                    n_vars: self.n_vars,
                })
            } else {
                Ok(())
            }
        };
        for row in &self.equalities {
            for &(k, _) in &row.coeffs {
                check_var(k)?;
            }
        }
        for (b, blk) in self.blocks.iter().enumerate() {
            let range = |i: usize, j: usize| {
                if i >= blk.size || j >= blk.size {
                    Err(SdpError::EntryOutOfRange {
                        block: b,
                        i,
                        j,
                        size: blk.size,
                    })
                } else {
                    Ok(())
                }
            };
            for e in &blk.entries {
                check_var(e.var)?;
                range(e.i, e.j)?;
            }
            for &(i, j, _) in &blk.constant {
                range(i, j)?;
            }
        }
        Ok(())
    }

    /// Same problem with sorted, merged entries; used for structural
    /// comparisons and deterministic export.
    pub fn canonical(&self) -> ConicProblem {
        let mut out = self.clone();
        for b in &mut out.blocks {
            b.canonicalize();
        }
        for row in &mut out.equalities {
            row.coeffs.sort_by_key(|&(k, _)| k);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.coeffs.len());
            for (k, c) in row.coeffs.drain(..) {
                match merged.last_mut() {
                    Some(last) if last.0 == k => last.1 += c,
                    _ => merged.push((k, c)),
                }
            }
            merged.retain(|&(_, c)| c != 0.0);
            row.coeffs = merged;
        }
        out
    }
}
