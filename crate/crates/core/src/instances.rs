//! Benchmark instance families and the COO text format.
//!
//! Lattices are `m × n` grids of cells holding `t` spins each. Spin ids
//! are assigned row-major over cells and then cell-locally, so cell
//! `(r, c)` owns spins `(r·n + c)·t + 1 ..= (r·n + c)·t + t`.
//!
//! Random draws follow the stream rule of [`crate::rng`]: couplings are
//! drawn from [`crate::rng::STREAM_COUPLINGS`] in lexicographic edge order,
//! fields from [`crate::rng::STREAM_FIELDS`] in node order.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::IsingModel;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub rows: usize,
    pub cols: usize,
    pub cell_size: usize,
    /// King's-graph connectivity when set, square otherwise.
    pub diagonal_edges: bool,
}

impl LatticeSpec {
    pub fn new(rows: usize, cols: usize, cell_size: usize, diagonal_edges: bool) -> Result<Self> {
        if rows == 0 || cols == 0 || cell_size == 0 {
            return Err(Error::Argument(format!(
                "lattice dimensions must be positive, got {rows}x{cols}x{cell_size}"
            )));
        }
        Ok(LatticeSpec {
            rows,
            cols,
            cell_size,
            diagonal_edges,
        })
    }

    /// King's lattice, the layout the PEPS solver expects.
    pub fn king(rows: usize, cols: usize, cell_size: usize) -> Result<Self> {
        Self::new(rows, cols, cell_size, true)
    }

    pub fn num_spins(&self) -> usize {
        self.rows * self.cols * self.cell_size
    }

    /// 1-based spin ids of cell `(r, c)`.
    pub fn cell_spins(&self, r: usize, c: usize) -> Vec<usize> {
        let base = (r * self.cols + c) * self.cell_size;
        (1..=self.cell_size).map(|k| base + k).collect()
    }

    /// Cell `(r, c)` holding 1-based spin `id`.
    pub fn cell_of(&self, id: usize) -> (usize, usize) {
        let cell = (id - 1) / self.cell_size;
        (cell / self.cols, cell % self.cols)
    }

    fn cells_adjacent(&self, a: (usize, usize), b: (usize, usize)) -> bool {
        let dr = a.0.abs_diff(b.0);
        let dc = a.1.abs_diff(b.1);
        match (dr, dc) {
            (0, 1) | (1, 0) => true,
            (1, 1) => self.diagonal_edges,
            _ => false,
        }
    }
}

/// Edge list of a lattice: cliques inside cells plus complete bipartite
/// connections between adjacent cells. Sorted, 1-based, `i < j`.
pub fn build_lattice(spec: &LatticeSpec) -> Vec<(usize, usize)> {
    let n = spec.num_spins();
    let mut edges = Vec::new();
    for i in 1..=n {
        let ci = spec.cell_of(i);
        for j in i + 1..=n {
            let cj = spec.cell_of(j);
            if ci == cj || spec.cells_adjacent(ci, cj) {
                edges.push((i, j));
            }
        }
    }
    edges
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InstanceClass {
    /// `J ~ U(-1, 1)`, `h ~ U(-0.1, 0.1)`.
    Rau,
    /// `J ~ U(-1, 1)`, `h = 0`.
    Rco,
    /// Corrupted biased ferromagnet: discrete `J` and `h`.
    CbfmP,
}

impl InstanceClass {
    pub fn name(&self) -> &'static str {
        match self {
            InstanceClass::Rau => "rau",
            InstanceClass::Rco => "rco",
            InstanceClass::CbfmP => "cbfm-p",
        }
    }
}

impl std::str::FromStr for InstanceClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rau" => Ok(InstanceClass::Rau),
            "rco" => Ok(InstanceClass::Rco),
            "cbfm-p" | "cbfm_p" | "cbfmp" => Ok(InstanceClass::CbfmP),
            other => Err(Error::Argument(format!("unknown instance class '{other}'"))),
        }
    }
}

/// CBFM-P coupling law: `P(0) = 0.35, P(-1) = 0.10, P(+1) = 0.55`.
pub const CBFM_COUPLING_TABLE: [(f64, f64); 3] = [(0.0, 0.35), (-1.0, 0.10), (1.0, 0.55)];
/// CBFM-P field law: `P(0) = 0.15, P(-1) = 0.85, P(+1) = 0`.
pub const CBFM_FIELD_TABLE: [(f64, f64); 3] = [(0.0, 0.15), (-1.0, 0.85), (1.0, 0.0)];

fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn categorical<R: Rng>(rng: &mut R, table: &[(f64, f64)]) -> f64 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(value, p) in table {
        acc += p;
        if u < acc {
            return value;
        }
    }
    // Rounding slack: fall back to the last entry with positive mass.
    table.iter().rev().find(|(_, p)| *p > 0.0).map(|e| e.0).unwrap_or(0.0)
}

/// Draws an instance of `class` on the given graph.
pub fn generate(
    class: InstanceClass,
    num_spins: usize,
    edges: &[(usize, usize)],
    seed: u64,
) -> Result<IsingModel> {
    if edges.is_empty() {
        return Err(Error::Argument("edge list is empty".into()));
    }
    let mut sorted: Vec<(usize, usize)> = edges.iter().map(|&(i, j)| (i.min(j), i.max(j))).collect();
    sorted.sort_unstable();

    let mut coupling_rng = rng::stream(seed, rng::STREAM_COUPLINGS);
    let mut field_rng = rng::stream(seed, rng::STREAM_FIELDS);
    let mut model = IsingModel::new(num_spins);
    for (i, j) in sorted {
        let v = match class {
            InstanceClass::Rau | InstanceClass::Rco => uniform(&mut coupling_rng, -1.0, 1.0),
            InstanceClass::CbfmP => categorical(&mut coupling_rng, &CBFM_COUPLING_TABLE),
        };
        model.add_coupling(i, j, v)?;
    }
    for i in 1..=num_spins {
        let h = match class {
            InstanceClass::Rau => uniform(&mut field_rng, -0.1, 0.1),
            InstanceClass::Rco => 0.0,
            InstanceClass::CbfmP => categorical(&mut field_rng, &CBFM_FIELD_TABLE),
        };
        model.set_field(i, h)?;
    }
    Ok(model)
}

/// Parses `i j v` rows (1-based; `i == j` sets the field `h_i`).
pub fn parse_coo(text: &str) -> Result<IsingModel> {
    let mut rows: Vec<(usize, usize, usize, f64)> = Vec::new();
    let mut max_id = 0;
    for (k, raw) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = raw.trim_end_matches('\r').trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 3 tokens 'i j v', found {}", tokens.len()),
            });
        }
        let id = |t: &str| -> Result<usize> {
            match t.parse::<usize>() {
                Ok(v) if v >= 1 => Ok(v),
                _ => Err(Error::Parse {
                    line: line_no,
                    message: format!("'{t}' is not a positive node id"),
                }),
            }
        };
        let i = id(tokens[0])?;
        let j = id(tokens[1])?;
        let v: f64 = tokens[2].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("'{}' is not a number", tokens[2]),
        })?;
        max_id = max_id.max(i).max(j);
        rows.push((line_no, i, j, v));
    }

    let mut model = IsingModel::new(max_id);
    let mut seen = std::collections::HashMap::new();
    for (line_no, i, j, v) in rows {
        let key = (i.min(j), i.max(j));
        if let Some(first) = seen.insert(key, line_no) {
            return Err(Error::Parse {
                line: line_no,
                message: format!(
                    "duplicate entry for pair ({}, {}), first given on line {first}",
                    key.0, key.1
                ),
            });
        }
        if i == j {
            model.set_field(i, v)?;
        } else {
            model.add_coupling(i, j, v)?;
        }
    }
    Ok(model)
}

/// Writes every field row (`i i h_i`) followed by couplings in
/// lexicographic order, LF-terminated, 17 significant digits.
pub fn write_coo(model: &IsingModel) -> String {
    let mut out = String::new();
    for i in 1..=model.num_spins() {
        let _ = writeln!(out, "{i} {i} {:.16e}", model.field(i));
    }
    for (i, j, v) in model.couplings() {
        let _ = writeln!(out, "{i} {j} {v:.16e}");
    }
    out
}
