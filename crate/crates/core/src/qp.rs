//! Sparse standard-form concave quadratic programs.
//!
//! A [`QuadraticProgram`] is a maximization problem
//!
//! ```text
//!     maximize   1/2 x' diag(Q) x + c' x + k
//!     subject to rl <= A x <= ru
//!                xl <=   x <= xu
//! ```
//!
//! with a diagonal, negative-semidefinite quadratic term. Equality rows are
//! expressed as `rl == ru`. Infinite bounds use `f64::INFINITY`.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Optimization sense. Only maximization is produced by the builders; the
/// solver negates internally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Maximize,
}

/// Sparse constraint matrix stored row-major (CSR).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseRows {
    /// Row start offsets into `cols`/`values`; length `nrows + 1`.
    pub starts: Vec<usize>,
    pub cols: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseRows {
    pub fn new() -> Self {
        SparseRows {
            starts: vec![0],
            cols: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.starts.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Appends a row given as `(column, coefficient)` pairs.
    pub fn push_row(&mut self, entries: &[(usize, f64)]) {
        for &(c, v) in entries {
            self.cols.push(c);
            self.values.push(v);
        }
        self.starts.push(self.cols.len());
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let lo = self.starts[r];
        let hi = self.starts[r + 1];
        (&self.cols[lo..hi], &self.values[lo..hi])
    }

    /// y = A x
    pub fn mul(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.nrows() {
            let (cols, vals) = self.row(r);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            y[r] = acc;
        }
    }

    /// y = A' x (y must be zeroed by the caller or accumulated deliberately).
    pub fn mul_transpose_add(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.nrows() {
            let (cols, vals) = self.row(r);
            let xr = x[r];
            if xr != 0.0 {
                for (c, v) in cols.iter().zip(vals) {
                    y[*c] += v * xr;
                }
            }
        }
    }
}

impl Default for SparseRows {
    fn default() -> Self {
        Self::new()
    }
}

/// A sparse concave QP in maximization standard form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticProgram {
    pub sense: Sense,
    pub num_vars: usize,
    /// Diagonal of the quadratic coefficient matrix; entries must be <= 0.
    pub quadratic_diag: Vec<f64>,
    pub linear: Vec<f64>,
    /// Constant objective offset (fixed maintenance terms live here).
    pub constant: f64,
    pub rows: SparseRows,
    pub row_lower: Vec<f64>,
    pub row_upper: Vec<f64>,
    pub var_lower: Vec<f64>,
    pub var_upper: Vec<f64>,
}

/// Structural problems detected by [`QuadraticProgram::check_invariants`].
#[derive(Debug, thiserror::Error)]
pub enum QpInvariantError {
    #[error("dimension mismatch in {field}: expected {expected}, found {found}")]
    Dimension {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("positive curvature {value} on variable {var}")]
    PositiveCurvature { var: usize, value: f64 },
    #[error("constraint row {row} is empty")]
    EmptyRow { row: usize },
    #[error("row {row} has lower bound {lower} above upper bound {upper}")]
    CrossedBounds { row: usize, lower: f64, upper: f64 },
}

impl QuadraticProgram {
    pub fn num_rows(&self) -> usize {
        self.rows.nrows()
    }

    /// Objective value at `x`, in the maximize sense, including the constant.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        let mut v = self.constant;
        for i in 0..self.num_vars {
            v += self.linear[i] * x[i] + 0.5 * self.quadratic_diag[i] * x[i] * x[i];
        }
        v
    }

    pub fn check_invariants(&self) -> Result<(), QpInvariantError> {
        let n = self.num_vars;
        let check = |field: &'static str, found: usize, expected: usize| {
            if found != expected {
                Err(QpInvariantError::Dimension {
                    field,
                    expected,
                    found,
                })
            } else {
                Ok(())
            }
        };
        check("quadratic_diag", self.quadratic_diag.len(), n)?;
        check("linear", self.linear.len(), n)?;
        check("var_lower", self.var_lower.len(), n)?;
        check("var_upper", self.var_upper.len(), n)?;
        let m = self.rows.nrows();
        check("row_lower", self.row_lower.len(), m)?;
        check("row_upper", self.row_upper.len(), m)?;
        for (i, &d) in self.quadratic_diag.iter().enumerate() {
            if d > 0.0 {
                return Err(QpInvariantError::PositiveCurvature { var: i, value: d });
            }
        }
        for r in 0..m {
            if self.rows.starts[r + 1] == self.rows.starts[r] {
                return Err(QpInvariantError::EmptyRow { row: r });
            }
            if self.row_lower[r] > self.row_upper[r] {
                return Err(QpInvariantError::CrossedBounds {
                    row: r,
                    lower: self.row_lower[r],
                    upper: self.row_upper[r],
                });
            }
        }
        Ok(())
    }

    /// Renders the documented plain-text dump: a header with counts, one `v`
    /// line per variable (curvature, linear coefficient, bounds), COO triplets
    /// and one `r` line per row with its bounds.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        out.push_str("gridplan-qp 1\n");
        out.push_str("maximize\n");
        let _ = writeln!(
            out,
            "counts {} {} {}",
            self.num_vars,
            self.num_rows(),
            self.rows.nnz()
        );
        let _ = writeln!(out, "constant {}", fmt_bound(self.constant));
        for i in 0..self.num_vars {
            let _ = writeln!(
                out,
                "v {} {} {} {} {}",
                i,
                fmt_bound(self.quadratic_diag[i]),
                fmt_bound(self.linear[i]),
                fmt_bound(self.var_lower[i]),
                fmt_bound(self.var_upper[i])
            );
        }
        for r in 0..self.num_rows() {
            let (cols, vals) = self.rows.row(r);
            for (c, v) in cols.iter().zip(vals) {
                let _ = writeln!(out, "a {} {} {}", r, c, fmt_bound(*v));
            }
        }
        for r in 0..self.num_rows() {
            let _ = writeln!(
                out,
                "r {} {} {}",
                r,
                fmt_bound(self.row_lower[r]),
                fmt_bound(self.row_upper[r])
            );
        }
        out
    }

    /// Parses the dump format back. Intended for cross-checking against
    /// external tools and for tests.
    pub fn parse_dump(text: &str) -> Result<QuadraticProgram, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty dump")?;
        if header != "gridplan-qp 1" {
            return Err(format!("unknown dump header: {header}"));
        }
        let sense = lines.next().ok_or("missing sense")?;
        if sense != "maximize" {
            return Err(format!("unknown sense: {sense}"));
        }
        let counts = lines.next().ok_or("missing counts")?;
        let mut it = counts.split_whitespace();
        if it.next() != Some("counts") {
            return Err("expected counts line".into());
        }
        let n: usize = parse_tok(it.next(), "var count")?;
        let m: usize = parse_tok(it.next(), "row count")?;
        let nnz: usize = parse_tok(it.next(), "nnz count")?;
        let constant_line = lines.next().ok_or("missing constant")?;
        let mut it = constant_line.split_whitespace();
        if it.next() != Some("constant") {
            return Err("expected constant line".into());
        }
        let constant = parse_num(it.next().ok_or("missing constant value")?)?;

        let mut qp = QuadraticProgram {
            sense: Sense::Maximize,
            num_vars: n,
            quadratic_diag: vec![0.0; n],
            linear: vec![0.0; n],
            constant,
            rows: SparseRows::new(),
            row_lower: vec![f64::NEG_INFINITY; m],
            row_upper: vec![f64::INFINITY; m],
            var_lower: vec![0.0; n],
            var_upper: vec![f64::INFINITY; n],
        };
        let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(nnz);
        for line in lines {
            let mut it = line.split_whitespace();
            match it.next() {
                Some("v") => {
                    let i: usize = parse_tok(it.next(), "var index")?;
                    qp.quadratic_diag[i] = parse_num(it.next().ok_or("missing quad")?)?;
                    qp.linear[i] = parse_num(it.next().ok_or("missing linear")?)?;
                    qp.var_lower[i] = parse_num(it.next().ok_or("missing lb")?)?;
                    qp.var_upper[i] = parse_num(it.next().ok_or("missing ub")?)?;
                }
                Some("a") => {
                    let r: usize = parse_tok(it.next(), "row index")?;
                    let c: usize = parse_tok(it.next(), "col index")?;
                    let v = parse_num(it.next().ok_or("missing value")?)?;
                    triplets.push((r, c, v));
                }
                Some("r") => {
                    let r: usize = parse_tok(it.next(), "row index")?;
                    qp.row_lower[r] = parse_num(it.next().ok_or("missing row lb")?)?;
                    qp.row_upper[r] = parse_num(it.next().ok_or("missing row ub")?)?;
                }
                Some(other) => return Err(format!("unknown record: {other}")),
                None => {}
            }
        }
        if triplets.len() != nnz {
            return Err(format!("expected {} triplets, found {}", nnz, triplets.len()));
        }
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_entries: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
        for (r, c, v) in triplets {
            row_entries[r].push((c, v));
        }
        for entries in &row_entries {
            qp.rows.push_row(entries);
        }
        Ok(qp)
    }
}

fn parse_tok<T: std::str::FromStr>(tok: Option<&str>, what: &str) -> Result<T, String> {
    tok.ok_or_else(|| format!("missing {what}"))?
        .parse()
        .map_err(|_| format!("bad {what}"))
}

fn parse_num(tok: &str) -> Result<f64, String> {
    match tok {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => tok.parse().map_err(|_| format!("bad number: {tok}")),
    }
}

fn fmt_bound(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        // 17 significant digits round-trips f64 exactly
        format!("{v:.16e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_qp() -> QuadraticProgram {
        let mut rows = SparseRows::new();
        rows.push_row(&[(0, 1.0), (1, -2.0)]);
        rows.push_row(&[(1, 3.5)]);
        QuadraticProgram {
            sense: Sense::Maximize,
            num_vars: 2,
            quadratic_diag: vec![-0.04, 0.0],
            linear: vec![260.0, -10.0],
            constant: -123.456,
            rows,
            row_lower: vec![0.0, f64::NEG_INFINITY],
            row_upper: vec![0.0, 7.25],
            var_lower: vec![0.0, 0.0],
            var_upper: vec![1000.0, f64::INFINITY],
        }
    }

    #[test]
    fn dump_round_trips() {
        let qp = small_qp();
        let text = qp.dump();
        let back = QuadraticProgram::parse_dump(&text).unwrap();
        assert_eq!(qp, back);
    }

    #[test]
    fn invariants_catch_positive_curvature() {
        let mut qp = small_qp();
        qp.check_invariants().unwrap();
        qp.quadratic_diag[1] = 1e-9;
        assert!(matches!(
            qp.check_invariants(),
            Err(QpInvariantError::PositiveCurvature { var: 1, .. })
        ));
    }

    #[test]
    fn invariants_catch_empty_row() {
        let mut qp = small_qp();
        qp.rows.push_row(&[]);
        qp.row_lower.push(0.0);
        qp.row_upper.push(0.0);
        assert!(matches!(
            qp.check_invariants(),
            Err(QpInvariantError::EmptyRow { row: 2 })
        ));
    }

    #[test]
    fn objective_value_includes_constant() {
        let qp = small_qp();
        let x = [10.0, 2.0];
        let expect = -123.456 + 260.0 * 10.0 + 0.5 * (-0.04) * 100.0 - 10.0 * 2.0;
        assert!((qp.objective_value(&x) - expect).abs() < 1e-12);
    }
}
