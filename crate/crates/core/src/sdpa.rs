//! SDPA sparse format (`.dat-s`) reading and writing.
//!
//! The moment problem `maximize C•Y s.t. F_k•Y = g_k, Y ⪰ 0` is the SDPA dual
//! form, so `F0 = C`, `F_k` are the constraint matrices and the cost vector is
//! `g`. Off-diagonal coefficients are halved because `F•Y` counts them twice.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::momentsdp::MomentProblem;

/// Nonzero upper-triangle element; all indices are 1-based as in the file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpaEntry {
    pub matrix: usize,
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpaProblem {
    pub comment: String,
    /// Negative sizes denote diagonal blocks.
    pub block_sizes: Vec<i64>,
    pub c: Vec<f64>,
    pub entries: Vec<SdpaEntry>,
}

impl SdpaProblem {
    pub fn num_constraints(&self) -> usize {
        self.c.len()
    }

    pub fn to_sdpa_string(&self) -> String {
        let mut out = String::new();
        for line in self.comment.lines() {
            let _ = writeln!(out, "\"{line}");
        }
        let _ = writeln!(out, "{}", self.c.len());
        let _ = writeln!(out, "{}", self.block_sizes.len());
        let sizes: Vec<String> = self.block_sizes.iter().map(|b| b.to_string()).collect();
        let _ = writeln!(out, "{}", sizes.join(" "));
        let costs: Vec<String> = self.c.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", costs.join(" "));
        for e in &self.entries {
            let _ = writeln!(out, "{} {} {} {} {}", e.matrix, e.block, e.row, e.col, e.value);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut comment = Vec::new();
        let mut body = String::new();
        let mut in_header = true;
        for line in text.lines() {
            let t = line.trim_start();
            if in_header && (t.starts_with('"') || t.starts_with('*')) {
                comment.push(t[1..].to_string());
                continue;
            }
            in_header = false;
            body.push_str(line);
            body.push('\n');
        }
        let mut tokens = body
            .split(|c: char| c.is_whitespace() || "{}(),".contains(c))
            .filter(|t| !t.is_empty() && !t.starts_with('='));
        let mut next =
            |what: &str| tokens.next().ok_or_else(|| Error::Parse(format!("unexpected end of file reading {what}")));
        fn num<T: std::str::FromStr>(tok: &str, what: &str) -> Result<T> {
            tok.parse().map_err(|_| Error::Parse(format!("bad {what}: {tok:?}")))
        }

        let m: usize = num(next("constraint count")?, "constraint count")?;
        let nblocks: usize = num(next("block count")?, "block count")?;
        let block_sizes =
            (0..nblocks).map(|_| num::<i64>(next("block size")?, "block size")).collect::<Result<Vec<_>>>()?;
        let c = (0..m).map(|_| num::<f64>(next("cost")?, "cost")).collect::<Result<Vec<_>>>()?;

        let mut entries = Vec::new();
        let rest: Vec<&str> = tokens.collect();
        if !rest.len().is_multiple_of(5) {
            return Err(Error::Parse(format!("{} trailing tokens do not form entries", rest.len() % 5)));
        }
        for chunk in rest.chunks(5) {
            let e = SdpaEntry {
                matrix: num(chunk[0], "matrix number")?,
                block: num(chunk[1], "block number")?,
                row: num(chunk[2], "row")?,
                col: num(chunk[3], "column")?,
                value: num(chunk[4], "value")?,
            };
            if e.matrix > m || e.block == 0 || e.block > nblocks {
                return Err(Error::Parse(format!("entry out of range: {chunk:?}")));
            }
            let size = block_sizes[e.block - 1].unsigned_abs() as usize;
            if e.row == 0 || e.col == 0 || e.row > size || e.col > size {
                return Err(Error::Parse(format!("entry outside its block: {chunk:?}")));
            }
            entries.push(e);
        }
        Ok(Self { comment: comment.join("\n"), block_sizes, c, entries })
    }

    pub fn from_moment_problem(p: &MomentProblem) -> Self {
        let entry = |matrix: usize, (i, j): (usize, usize), a: f64| SdpaEntry {
            matrix,
            block: 1,
            row: i + 1,
            col: j + 1,
            value: if i == j { a } else { a / 2.0 },
        };
        let mut entries: Vec<SdpaEntry> = p.objective.iter().map(|&(e, a)| entry(0, e, a)).collect();
        for (k, con) in p.constraints.iter().enumerate() {
            entries.extend(con.coeffs.iter().map(|&(e, a)| entry(k + 1, e, a)));
        }
        let q: Vec<String> = p.q.iter().map(|x| x.to_string()).collect();
        Self {
            comment: format!(
                "K3 moment relaxation, M={} outcomes, labels ({}), dim {}, maximize F0*Y",
                p.outcomes,
                q.join(","),
                p.dim
            ),
            block_sizes: vec![p.dim as i64],
            c: p.constraints.iter().map(|c| c.rhs).collect(),
            entries,
        }
    }
}

pub fn export_sdpa(problem: &MomentProblem, destination: &Path) -> Result<()> {
    fs::write(destination, SdpaProblem::from_moment_problem(problem).to_sdpa_string())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qubit_problem_declares_dimension_19() {
        let p = MomentProblem::new(2).unwrap();
        let text = SdpaProblem::from_moment_problem(&p).to_sdpa_string();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with('"'));
        assert_eq!(lines[1].parse::<usize>().unwrap(), p.constraints.len());
        assert_eq!(lines[2], "1");
        assert_eq!(lines[3], "19");
    }

    #[test]
    fn round_trip() {
        let p = MomentProblem::new(3).unwrap();
        let s = SdpaProblem::from_moment_problem(&p);
        let back = SdpaProblem::parse(&s.to_sdpa_string()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.num_constraints(), p.constraints.len());
    }

    #[test]
    fn off_diagonals_are_halved() {
        let p = MomentProblem::new(2).unwrap();
        let s = SdpaProblem::from_moment_problem(&p);
        assert!(s.entries.iter().filter(|e| e.row != e.col).all(|e| e.value.abs() == 0.5 || e.value.abs() == 1.0));
        assert!(s.entries.iter().any(|e| e.row != e.col && e.value.abs() == 0.5));
    }

    #[test]
    fn parses_punctuated_headers() {
        let text = "* toy\n\"second\n2 =mDIM\n1 =nBLOCK\n{2}\n{1.0, 1.0}\n0 1 1 1 1\n1 1 1 2 0.5\n2 1 2 2 -1\n";
        let p = SdpaProblem::parse(text).unwrap();
        assert_eq!(p.comment, " toy\nsecond");
        assert_eq!(p.num_constraints(), 2);
        assert_eq!(p.entries.len(), 3);
    }

    #[test]
    fn rejects_truncated_files() {
        assert!(SdpaProblem::parse("3\n1\n4\n1 2\n").is_err());
        assert!(SdpaProblem::parse("1\n1\n2\n1\n1 1 3 3 1\n").is_err());
    }

    #[test]
    fn unwritable_destination_errors() {
        let p = MomentProblem::new(2).unwrap();
        assert!(export_sdpa(&p, Path::new("/nonexistent-dir/x.dat-s")).is_err());
    }
}
