//! SDPA sparse format (`.dat-s`).
//!
//! The file encodes `min c^T x  s.t.  sum_i F_i x_i - F_0 >= 0`. Free
//! variables map directly onto `x`. Equality rows `a^T x = b` are written as
//! pairs `a^T x - b >= 0`, `-a^T x + b >= 0` in a trailing diagonal block whose
//! index is recorded in a `* equality-block` comment so the rows can be
//! recovered on import. A maximization is exported as minimization of `-c`.

use std::fmt::Write as _;

use crate::problem::{ConicProblem, PsdBlock, Sense};
use crate::SdpError;

pub fn export(p: &ConicProblem) -> String {
    let p = p.canonical();
    let sign = match p.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let mut out = String::new();
    let sense = match p.sense {
        Sense::Minimize => "minimize",
        Sense::Maximize => "maximize",
    };
    let _ = writeln!(out, "* sense {sense}");
    let _ = writeln!(out, "* objective-offset {:e}", p.offset);
    for (k, b) in p.blocks.iter().enumerate() {
        let _ = writeln!(out, "* block {} {}", k + 1, b.name);
    }
    let eq_block = p.blocks.len() + 1;
    let has_eq = !p.equalities.is_empty();
    if has_eq {
        let _ = writeln!(out, "* equality-block {eq_block}");
    }
    let n_blocks = p.blocks.len() + usize::from(has_eq);
    let _ = writeln!(out, "{}", p.n_vars);
    let _ = writeln!(out, "{n_blocks}");
    let mut sizes: Vec<String> = p.blocks.iter().map(|b| b.size.to_string()).collect();
    if has_eq {
        sizes.push(format!("-{}", 2 * p.equalities.len()));
    }
    let _ = writeln!(out, "{}", sizes.join(" "));
    let c: Vec<String> = p.c.iter().map(|v| format!("{:e}", sign * v)).collect();
    let _ = writeln!(out, "{}", c.join(" "));

    // (matno, block, i, j, value), 1-based
    let mut lines: Vec<(usize, usize, usize, usize, f64)> = Vec::new();
    for (k, b) in p.blocks.iter().enumerate() {
        for &(i, j, v) in &b.constant {
            lines.push((0, k + 1, i + 1, j + 1, v));
        }
        for e in &b.entries {
            lines.push((e.var + 1, k + 1, e.i + 1, e.j + 1, e.coef));
        }
    }
    for (r, row) in p.equalities.iter().enumerate() {
        let (ip, im) = (2 * r + 1, 2 * r + 2);
        if row.rhs != 0.0 {
            lines.push((0, eq_block, ip, ip, row.rhs));
            lines.push((0, eq_block, im, im, -row.rhs));
        }
        for &(k, a) in &row.coeffs {
            lines.push((k + 1, eq_block, ip, ip, a));
            lines.push((k + 1, eq_block, im, im, -a));
        }
    }
    lines.sort_by(|a, b| (a.0, a.1, a.2, a.3).cmp(&(b.0, b.1, b.2, b.3)));
    for (m, b, i, j, v) in lines {
        let _ = writeln!(out, "{m} {b} {i} {j} {v:e}");
    }
    out
}

fn err(line: usize, msg: impl Into<String>) -> SdpError {
    SdpError::SdpaParse {
        line,
        msg: msg.into(),
    }
}

fn tokens(s: &str) -> Vec<&str> {
    s.split(|c: char| c.is_whitespace() || matches!(c, ',' | '{' | '}' | '(' | ')'))
        .filter(|t| !t.is_empty())
        .collect()
}

fn parse_f64(tok: &str, line: usize) -> Result<f64, SdpError> {
    let t = tok.replace(['d', 'D'], "e");
    t.parse::<f64>()
        .map_err(|_| err(line, format!("bad number `{tok}`")))
}

fn parse_usize(tok: &str, line: usize) -> Result<usize, SdpError> {
    tok.parse::<usize>()
        .map_err(|_| err(line, format!("bad integer `{tok}`")))
}

/// Parse an SDPA sparse file. Comment directives written by [`export`] are
/// honoured; other diagonal blocks become 1x1 PSD blocks.
pub fn import(text: &str) -> Result<ConicProblem, SdpError> {
    let mut sense = Sense::Minimize;
    let mut offset = 0.0;
    let mut eq_block: Option<usize> = None;
    let mut names: Vec<(usize, String)> = Vec::new();
    let mut data: Vec<(usize, &str)> = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let ln = ln + 1;
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix('*').or_else(|| line.strip_prefix('"')) {
            let t: Vec<&str> = rest.split_whitespace().collect();
            match t.as_slice() {
                ["sense", "maximize"] => sense = Sense::Maximize,
                ["sense", "minimize"] => sense = Sense::Minimize,
                ["objective-offset", v] => offset = parse_f64(v, ln)?,
                ["equality-block", k] => eq_block = Some(parse_usize(k, ln)?),
                ["block", k, name] => names.push((parse_usize(k, ln)?, name.to_string())),
                _ => {}
            }
            continue;
        }
        if line.is_empty() && data.len() < 2 {
            continue;
        }
        data.push((ln, line));
    }
    if data.len() < 2 {
        return Err(err(data.last().map_or(0, |d| d.0), "missing header"));
    }
    let (l0, s0) = data[0];
    let n_vars = parse_usize(
        tokens(s0).first().ok_or_else(|| err(l0, "missing variable count"))?,
        l0,
    )?;
    let (l1, s1) = data[1];
    let n_blocks = parse_usize(
        tokens(s1).first().ok_or_else(|| err(l1, "missing block count"))?,
        l1,
    )?;
    let (l2, s2) = data.get(2).copied().unwrap_or((l1 + 1, ""));
    let sizes: Vec<i64> = tokens(s2)
        .iter()
        .map(|t| t.parse::<i64>().map_err(|_| err(l2, format!("bad block size `{t}`"))))
        .collect::<Result<_, _>>()?;
    if sizes.len() != n_blocks {
        return Err(err(l2, format!("expected {n_blocks} block sizes, got {}", sizes.len())));
    }
    let (l3, s3) = data.get(3).copied().unwrap_or((l2 + 1, ""));
    let c_raw: Vec<f64> = tokens(s3)
        .iter()
        .map(|t| parse_f64(t, l3))
        .collect::<Result<_, _>>()?;
    if c_raw.len() != n_vars {
        return Err(err(l3, format!("expected {n_vars} objective entries, got {}", c_raw.len())));
    }
    let sign = match sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };

    // Map SDPA blocks to problem blocks.
    enum Target {
        Psd(usize),
        Diag(Vec<usize>),
        Equality,
    }
    let mut p = ConicProblem::new(n_vars, sense);
    p.c = c_raw.iter().map(|v| sign * v).collect();
    p.offset = offset;
    let mut targets = Vec::with_capacity(n_blocks);
    let mut eq_rows = 0usize;
    for (k, &sz) in sizes.iter().enumerate() {
        let kb = k + 1;
        if Some(kb) == eq_block {
            if sz >= 0 || (-sz) % 2 != 0 {
                return Err(err(l2, "equality block must be diagonal with even size"));
            }
            eq_rows = (-sz) as usize / 2;
            targets.push(Target::Equality);
        } else if sz > 0 {
            let name = names
                .iter()
                .find(|(i, _)| *i == kb)
                .map_or_else(|| format!("B{kb}"), |(_, n)| n.clone());
            targets.push(Target::Psd(p.blocks.len()));
            p.blocks.push(PsdBlock::new(name, sz as usize));
        } else {
            let mut ids = Vec::new();
            for i in 0..(-sz) as usize {
                ids.push(p.blocks.len());
                p.blocks.push(PsdBlock::new(format!("B{kb}.{}", i + 1), 1));
            }
            targets.push(Target::Diag(ids));
        }
    }
    let mut plus: Vec<Vec<(usize, f64)>> = vec![Vec::new(); eq_rows];
    let mut rhs = vec![0.0; eq_rows];
    for &(ln, line) in &data[4.min(data.len())..] {
        if line.is_empty() {
            continue;
        }
        let t = tokens(line);
        if t.len() != 5 {
            return Err(err(ln, "entry line needs 5 fields"));
        }
        let m = parse_usize(t[0], ln)?;
        let b = parse_usize(t[1], ln)?;
        let i = parse_usize(t[2], ln)?;
        let j = parse_usize(t[3], ln)?;
        let v = parse_f64(t[4], ln)?;
        if m > n_vars || b == 0 || b > n_blocks || i == 0 || j == 0 {
            return Err(err(ln, "index out of range"));
        }
        let (i, j) = (i - 1, j - 1);
        match &targets[b - 1] {
            Target::Psd(k) => {
                let blk = &mut p.blocks[*k];
                if i >= blk.size || j >= blk.size {
                    return Err(err(ln, "entry outside block"));
                }
                if m == 0 {
                    blk.push_constant(i, j, v);
                } else {
                    blk.push(i, j, m - 1, v);
                }
            }
            Target::Diag(ids) => {
                if i != j || i >= ids.len() {
                    return Err(err(ln, "off-diagonal entry in diagonal block"));
                }
                let blk = &mut p.blocks[ids[i]];
                if m == 0 {
                    blk.push_constant(0, 0, v);
                } else {
                    blk.push(0, 0, m - 1, v);
                }
            }
            Target::Equality => {
                if i != j || i >= 2 * eq_rows {
                    return Err(err(ln, "bad equality-block entry"));
                }
                if i % 2 == 0 {
                    let r = i / 2;
                    if m == 0 {
                        rhs[r] += v;
                    } else {
                        plus[r].push((m - 1, v));
                    }
                }
            }
        }
    }
    for (coeffs, b) in plus.into_iter().zip(rhs) {
        p.add_equality(coeffs, b);
    }
    Ok(p.canonical())
}
