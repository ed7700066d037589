//! Fixed-format MPS writer.
//!
//! Rows are named `R0000001..`, columns `C0000001..` (1-based, 8 characters),
//! the objective row is `OBJ`. Fields start at columns 2, 5, 15, 25, 40, 50
//! and numbers are right-aligned in 12 characters. Maximization problems are
//! written with an `OBJSENSE` section.

use std::fmt::Write as _;
use std::io;

use crate::{LpProblem, RowSense, Sense};

pub fn row_name(i: usize) -> String {
    format!("R{:07}", i + 1)
}

pub fn column_name(j: usize) -> String {
    format!("C{:07}", j + 1)
}

/// Shortest rendering of `v` that fits in 12 characters.
pub fn format_number(v: f64) -> String {
    let plain = format!("{v}");
    if plain.len() <= 12 {
        return plain;
    }
    for digits in (0..=6).rev() {
        let s = format!("{v:.digits$e}");
        if s.len() <= 12 {
            return s;
        }
    }
    format!("{v:.0e}")
}

fn entry(out: &mut String, first: &str, name: &str, value: f64) {
    let _ = writeln!(out, "    {first:<8}  {name:<8}  {:>12}", format_number(value));
}

fn bound(out: &mut String, kind: &str, col: &str, value: Option<f64>) {
    match value {
        Some(v) => {
            let _ = writeln!(out, " {kind:<2} BND       {col:<8}  {:>12}", format_number(v));
        }
        None => {
            let _ = writeln!(out, " {kind:<2} BND       {col}");
        }
    }
}

/// Renders `p` as fixed-format MPS text.
pub fn to_mps(p: &LpProblem, name: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "NAME          {name}");
    if p.sense == Sense::Maximize {
        out.push_str("OBJSENSE\n    MAX\n");
    }
    out.push_str("ROWS\n N  OBJ\n");
    for (i, r) in p.rows.iter().enumerate() {
        let t = match r.sense {
            RowSense::Le => "L",
            RowSense::Ge => "G",
            RowSense::Eq => "E",
        };
        let _ = writeln!(out, " {t}  {}", row_name(i));
    }

    // Column-major view of the matrix, duplicates summed.
    let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); p.num_columns()];
    for (i, r) in p.rows.iter().enumerate() {
        for &(j, a) in &r.coeffs {
            match by_col[j].last_mut() {
                Some((last, v)) if *last == i => *v += a,
                _ => by_col[j].push((i, a)),
            }
        }
    }

    out.push_str("COLUMNS\n");
    let mut in_int = false;
    let mut marker = 0;
    for (j, c) in p.columns.iter().enumerate() {
        if c.integer != in_int {
            let kind = if c.integer { "'INTORG'" } else { "'INTEND'" };
            let _ = writeln!(out, "    MARKER{marker:04}  'MARKER'                 {kind}");
            marker += 1;
            in_int = c.integer;
        }
        let name = column_name(j);
        if c.cost != 0.0 || by_col[j].is_empty() {
            entry(&mut out, &name, "OBJ", c.cost);
        }
        for &(i, a) in &by_col[j] {
            if a != 0.0 {
                entry(&mut out, &name, &row_name(i), a);
            }
        }
    }
    if in_int {
        let _ = writeln!(out, "    MARKER{marker:04}  'MARKER'                 'INTEND'");
    }

    out.push_str("RHS\n");
    for (i, r) in p.rows.iter().enumerate() {
        if r.rhs != 0.0 {
            entry(&mut out, "RHS", &row_name(i), r.rhs);
        }
    }

    out.push_str("BOUNDS\n");
    for (j, c) in p.columns.iter().enumerate() {
        let name = column_name(j);
        let (lo, hi) = (c.lower, c.upper);
        if c.integer && lo == 0.0 && hi == 1.0 {
            bound(&mut out, "BV", &name, None);
        } else if lo == hi {
            bound(&mut out, "FX", &name, Some(lo));
        } else if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
            bound(&mut out, "FR", &name, None);
        } else {
            if lo == f64::NEG_INFINITY {
                bound(&mut out, "MI", &name, None);
            } else if lo != 0.0 {
                bound(&mut out, "LO", &name, Some(lo));
            }
            if hi.is_finite() {
                bound(&mut out, "UP", &name, Some(hi));
            } else if c.integer {
                bound(&mut out, "PL", &name, None);
            }
        }
    }
    out.push_str("ENDATA\n");
    out
}

pub fn write_mps(p: &LpProblem, name: &str, w: &mut impl io::Write) -> io::Result<()> {
    w.write_all(to_mps(p, name).as_bytes())
}
