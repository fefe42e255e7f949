//! Tensor-network search in probability space.
//!
//! An Ising instance laid out on a king's grid of cells is clustered into a
//! Potts model (one node per cell, `d = 2^k` states). The Gibbs weights
//! `e^{-βE}` form a PEPS whose rows are absorbed bottom-up into boundary
//! MPSs. Conditional marginals of the next node in row-major order are read
//! off those boundaries and drive a beam-style branch-and-bound.
//!
//! A Potts state `x` of a cell with spins `(σ_1, …, σ_k)` stores `σ_1` in
//! the most significant bit; a clear bit is spin `-1`.
//!
//! Pair energies between adjacent cells only depend on the boundary spins
//! taking part in the crossing couplings, so every edge carries two
//! [`Projector`]s and a reduced energy matrix.

use std::collections::HashMap;
use std::rc::Rc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::LatticeSpec;
use crate::model::{IsingModel, SpinConfig};

/// Largest number of spins per cell (`d ≤ 256`).
pub const CELL_SIZE_CAP: usize = 8;

/// Energies closer than this are considered degenerate.
const ENERGY_TOL: f64 = 1e-9;

/// The eight symmetries of a rectangular grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    Rot90,
    Rot180,
    Rot270,
    MirrorColumns,
    MirrorRows,
    Transpose,
    AntiTranspose,
}

impl Transform {
    pub const ALL: [Transform; 8] = [
        Transform::Identity,
        Transform::Rot90,
        Transform::Rot180,
        Transform::Rot270,
        Transform::MirrorColumns,
        Transform::MirrorRows,
        Transform::Transpose,
        Transform::AntiTranspose,
    ];

    fn swaps_axes(self) -> bool {
        matches!(
            self,
            Transform::Rot90 | Transform::Rot270 | Transform::Transpose | Transform::AntiTranspose
        )
    }

    /// Dimensions of the transformed grid.
    pub fn dims(self, rows: usize, cols: usize) -> (usize, usize) {
        if self.swaps_axes() {
            (cols, rows)
        } else {
            (rows, cols)
        }
    }

    /// Cell of the original `rows × cols` grid shown at `(r, c)` of the
    /// transformed grid.
    pub fn source(self, rows: usize, cols: usize, r: usize, c: usize) -> (usize, usize) {
        match self {
            Transform::Identity => (r, c),
            Transform::Rot90 => (rows - 1 - c, r),
            Transform::Rot180 => (rows - 1 - r, cols - 1 - c),
            Transform::Rot270 => (c, cols - 1 - r),
            Transform::MirrorColumns => (r, cols - 1 - c),
            Transform::MirrorRows => (rows - 1 - r, c),
            Transform::Transpose => (c, r),
            Transform::AntiTranspose => (rows - 1 - c, cols - 1 - r),
        }
    }
}

/// Assignment of spins to the cells of a `rows × cols` grid, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PottsLayout {
    rows: usize,
    cols: usize,
    cells: Vec<Vec<usize>>,
}

impl PottsLayout {
    pub fn new(rows: usize, cols: usize, cells: Vec<Vec<usize>>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Structure("layout must have at least one cell".into()));
        }
        if cells.len() != rows * cols {
            return Err(Error::Dimension {
                expected: rows * cols,
                got: cells.len(),
            });
        }
        Ok(PottsLayout { rows, cols, cells })
    }

    pub fn from_lattice(spec: &LatticeSpec) -> Self {
        let cells = (0..spec.rows)
            .flat_map(|r| (0..spec.cols).map(move |c| (r, c)))
            .map(|(r, c)| spec.cell_spins(r, c))
            .collect();
        PottsLayout {
            rows: spec.rows,
            cols: spec.cols,
            cells,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn num_nodes(&self) -> usize {
        self.cells.len()
    }

    pub fn cell(&self, r: usize, c: usize) -> &[usize] {
        &self.cells[r * self.cols + c]
    }

    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    pub fn transformed(&self, t: Transform) -> PottsLayout {
        let (rows, cols) = t.dims(self.rows, self.cols);
        let cells = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| (r, c)))
            .map(|(r, c)| {
                let (sr, sc) = t.source(self.rows, self.cols, r, c);
                self.cell(sr, sc).to_vec()
            })
            .collect();
        PottsLayout { rows, cols, cells }
    }
}

/// Compression of a cell state onto a subset of its spins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Projector {
    map: Vec<usize>,
    representatives: Vec<usize>,
}

impl Projector {
    /// Projector of a `k`-spin cell onto the spins at `positions`
    /// (strictly increasing, 0-based within the cell).
    pub fn from_positions(k: usize, positions: &[usize]) -> Self {
        let m = positions.len();
        let map = (0..1usize << k)
            .map(|x| {
                positions
                    .iter()
                    .enumerate()
                    .filter(|&(_, &p)| x >> (k - 1 - p) & 1 == 1)
                    .fold(0, |acc, (j, _)| acc | 1 << (m - 1 - j))
            })
            .collect();
        let representatives = (0..1usize << m)
            .map(|y| {
                positions
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| y >> (m - 1 - j) & 1 == 1)
                    .fold(0, |acc, (_, &p)| acc | 1 << (k - 1 - p))
            })
            .collect();
        Projector {
            map,
            representatives,
        }
    }

    pub fn source_dim(&self) -> usize {
        self.map.len()
    }

    pub fn reduced_dim(&self) -> usize {
        self.representatives.len()
    }

    #[inline]
    pub fn project(&self, x: usize) -> usize {
        self.map[x]
    }

    /// A source state projecting onto `y`; unprojected spins are `-1`.
    #[inline]
    pub fn representative(&self, y: usize) -> usize {
        self.representatives[y]
    }
}

/// Compressed pair interaction between two adjacent cells `a < b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PottsEdge {
    pub cells: (usize, usize),
    pub projectors: (Projector, Projector),
    /// Row-major `reduced_a × reduced_b`.
    pub energies: Vec<f64>,
    /// Cell positions of the boundary spins on each side.
    pub boundary: (Vec<usize>, Vec<usize>),
}

impl PottsEdge {
    pub fn reduced_energy(&self, a: usize, b: usize) -> f64 {
        self.energies[a * self.projectors.1.reduced_dim() + b]
    }

    pub fn energy(&self, xa: usize, xb: usize) -> f64 {
        self.reduced_energy(self.projectors.0.project(xa), self.projectors.1.project(xb))
    }
}

fn cell_spin(x: usize, k: usize, p: usize) -> f64 {
    if x >> (k - 1 - p) & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Projectors and reduced pair energies for the couplings crossing from
/// `cell_a` to `cell_b`.
pub fn build_projectors(
    model: &IsingModel,
    cell_a: &[usize],
    cell_b: &[usize],
) -> (Projector, Projector, Vec<f64>) {
    let mut crossing = Vec::new();
    for (pa, &i) in cell_a.iter().enumerate() {
        for (pb, &j) in cell_b.iter().enumerate() {
            if let Some(v) = model.coupling(i.min(j), i.max(j)) {
                crossing.push((pa, pb, v));
            }
        }
    }
    let mut ba: Vec<usize> = crossing.iter().map(|c| c.0).collect();
    let mut bb: Vec<usize> = crossing.iter().map(|c| c.1).collect();
    ba.sort_unstable();
    ba.dedup();
    bb.sort_unstable();
    bb.dedup();
    let (ka, kb) = (cell_a.len(), cell_b.len());
    let pa = Projector::from_positions(ka, &ba);
    let pb = Projector::from_positions(kb, &bb);
    let mut energies = Vec::with_capacity(pa.reduced_dim() * pb.reduced_dim());
    for a in 0..pa.reduced_dim() {
        let xa = pa.representative(a);
        for b in 0..pb.reduced_dim() {
            let xb = pb.representative(b);
            energies.push(
                crossing
                    .iter()
                    .map(|&(i, j, v)| v * cell_spin(xa, ka, i) * cell_spin(xb, kb, j))
                    .sum(),
            );
        }
    }
    (pa, pb, energies)
}

/// Potts form of an Ising model on a king's-graph cell layout.
#[derive(Debug, Clone)]
pub struct PottsHamiltonian {
    layout: PottsLayout,
    num_spins: usize,
    local: Vec<Vec<f64>>,
    edges: Vec<PottsEdge>,
    lookup: HashMap<(usize, usize), usize>,
}

/// Clusters `model` into a Potts model on `layout`. Every king-adjacent
/// pair of cells gets an edge, possibly with an empty boundary.
pub fn cluster_to_potts(model: &IsingModel, layout: &PottsLayout) -> Result<PottsHamiltonian> {
    let n = model.num_spins();
    let mut owner = vec![usize::MAX; n];
    for (node, cell) in layout.cells.iter().enumerate() {
        if cell.len() > CELL_SIZE_CAP {
            return Err(Error::Capacity {
                size: cell.len(),
                cap: CELL_SIZE_CAP,
            });
        }
        if cell.is_empty() {
            return Err(Error::Structure(format!("cell {node} is empty")));
        }
        for &s in cell {
            if s == 0 || s > n {
                return Err(Error::Structure(format!("spin {s} outside 1..={n}")));
            }
            if owner[s - 1] != usize::MAX {
                return Err(Error::Structure(format!("spin {s} assigned to two cells")));
            }
            owner[s - 1] = node;
        }
    }
    if let Some(i) = owner.iter().position(|&o| o == usize::MAX) {
        return Err(Error::Structure(format!("spin {} is not assigned to a cell", i + 1)));
    }
    let cols = layout.cols;
    for (i, j, _) in model.couplings() {
        let (a, b) = (owner[i - 1], owner[j - 1]);
        let (ra, ca) = (a / cols, a % cols);
        let (rb, cb) = (b / cols, b % cols);
        if ra.abs_diff(rb) > 1 || ca.abs_diff(cb) > 1 {
            return Err(Error::Structure(format!(
                "coupling ({i}, {j}) joins non-adjacent cells ({ra}, {ca}) and ({rb}, {cb})"
            )));
        }
    }

    let local = layout
        .cells
        .iter()
        .map(|cell| {
            let k = cell.len();
            (0..1usize << k)
                .map(|x| {
                    let mut e = 0.0;
                    for (p, &i) in cell.iter().enumerate() {
                        let si = cell_spin(x, k, p);
                        e += model.field(i) * si;
                        for (q, &j) in cell.iter().enumerate().skip(p + 1) {
                            if let Some(v) = model.coupling(i.min(j), i.max(j)) {
                                e += v * si * cell_spin(x, k, q);
                            }
                        }
                    }
                    e
                })
                .collect()
        })
        .collect();

    let mut edges = Vec::new();
    let mut lookup = HashMap::new();
    for a in 0..layout.num_nodes() {
        let (ra, ca) = (a / cols, a % cols);
        let neighbours = [(ra, ca + 1), (ra + 1, ca.wrapping_sub(1)), (ra + 1, ca), (ra + 1, ca + 1)];
        for (rb, cb) in neighbours {
            if rb >= layout.rows || cb >= cols {
                continue;
            }
            let b = rb * cols + cb;
            let (cell_a, cell_b) = (&layout.cells[a], &layout.cells[b]);
            let (pa, pb, energies) = build_projectors(model, cell_a, cell_b);
            let boundary_of = |p: &Projector, k: usize| -> Vec<usize> {
                (0..k)
                    .filter(|&q| p.representative(p.reduced_dim() - 1) >> (k - 1 - q) & 1 == 1)
                    .collect()
            };
            let boundary = (boundary_of(&pa, cell_a.len()), boundary_of(&pb, cell_b.len()));
            lookup.insert((a.min(b), a.max(b)), edges.len());
            let (cells, projectors, energies, boundary) = if a < b {
                ((a, b), (pa, pb), energies, boundary)
            } else {
                let (da, db) = (pa.reduced_dim(), pb.reduced_dim());
                let t = (0..db)
                    .flat_map(|y| (0..da).map(move |x| (x, y)))
                    .map(|(x, y)| energies[x * db + y])
                    .collect();
                ((b, a), (pb, pa), t, (boundary.1, boundary.0))
            };
            edges.push(PottsEdge {
                cells,
                projectors,
                energies,
                boundary,
            });
        }
    }
    Ok(PottsHamiltonian {
        layout: layout.clone(),
        num_spins: n,
        local,
        edges,
        lookup,
    })
}

impl PottsHamiltonian {
    pub fn layout(&self) -> &PottsLayout {
        &self.layout
    }

    pub fn num_nodes(&self) -> usize {
        self.layout.num_nodes()
    }

    pub fn num_spins(&self) -> usize {
        self.num_spins
    }

    pub fn dim(&self, node: usize) -> usize {
        self.local[node].len()
    }

    pub fn local_energies(&self, node: usize) -> &[f64] {
        &self.local[node]
    }

    pub fn edges(&self) -> &[PottsEdge] {
        &self.edges
    }

    pub fn edge(&self, a: usize, b: usize) -> Option<&PottsEdge> {
        self.lookup.get(&(a.min(b), a.max(b))).map(|&e| &self.edges[e])
    }

    fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        self.lookup.get(&(a.min(b), a.max(b))).copied()
    }

    /// Projector of node `a` on its edge towards `b`.
    pub fn edge_projector(&self, a: usize, b: usize) -> Option<&Projector> {
        self.edge(a, b).map(|e| {
            if e.cells.0 == a {
                &e.projectors.0
            } else {
                &e.projectors.1
            }
        })
    }

    /// Pair energy between node `a` in state `xa` and node `b` in state
    /// `xb`; zero for non-adjacent nodes.
    pub fn pair_energy(&self, a: usize, xa: usize, b: usize, xb: usize) -> f64 {
        match self.edge(a, b) {
            Some(e) if e.cells.0 == a => e.energy(xa, xb),
            Some(e) => e.energy(xb, xa),
            None => 0.0,
        }
    }

    fn check_states(&self, states: &[usize]) -> Result<()> {
        if states.len() != self.num_nodes() {
            return Err(Error::Dimension {
                expected: self.num_nodes(),
                got: states.len(),
            });
        }
        for (n, &x) in states.iter().enumerate() {
            if x >= self.dim(n) {
                return Err(Error::Domain(format!("state {x} of node {n} exceeds {}", self.dim(n))));
            }
        }
        Ok(())
    }

    pub fn energy(&self, states: &[usize]) -> Result<f64> {
        self.check_states(states)?;
        let local: f64 = states.iter().enumerate().map(|(n, &x)| self.local[n][x]).sum();
        let pair: f64 = self
            .edges
            .iter()
            .map(|e| e.energy(states[e.cells.0], states[e.cells.1]))
            .sum();
        Ok(local + pair)
    }

    pub fn decode(&self, states: &[usize]) -> Result<SpinConfig> {
        self.check_states(states)?;
        let mut spins = vec![0i8; self.num_spins];
        for (cell, &x) in self.layout.cells.iter().zip(states) {
            let k = cell.len();
            for (p, &i) in cell.iter().enumerate() {
                spins[i - 1] = cell_spin(x, k, p) as i8;
            }
        }
        SpinConfig::new(spins)
    }

    pub fn encode(&self, config: &SpinConfig) -> Result<Vec<usize>> {
        if config.len() != self.num_spins {
            return Err(Error::Dimension {
                expected: self.num_spins,
                got: config.len(),
            });
        }
        let s = config.values();
        Ok(self
            .layout
            .cells
            .iter()
            .map(|cell| {
                let k = cell.len();
                cell.iter()
                    .enumerate()
                    .filter(|&(_, &i)| s[i - 1] == 1)
                    .fold(0, |acc, (p, _)| acc | 1 << (k - 1 - p))
            })
            .collect())
    }
}

/// Gibbs-weight network of a Potts model on a (possibly transformed) grid.
#[derive(Debug, Clone)]
pub struct PepsNetwork {
    potts: PottsHamiltonian,
    beta: f64,
    transform: Transform,
    local_weights: Vec<Vec<f64>>,
    edge_weights: Vec<Vec<f64>>,
    /// Per node: projection onto spins coupled to the row below.
    down: Vec<Projector>,
    /// Per node: projection onto spins coupled to the right neighbour and
    /// to the upper-right neighbour.
    carry_right: Vec<Projector>,
    /// Per node: projection onto spins coupled to the lower-right neighbour.
    carry_diagonal: Vec<Projector>,
}

/// Builds the network of `model` clustered on `layout` after applying
/// `transform` to the grid.
pub fn build_peps(
    model: &IsingModel,
    layout: &PottsLayout,
    beta: f64,
    transform: Transform,
) -> Result<PepsNetwork> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::Domain(format!("beta must be finite and >= 0, got {beta}")));
    }
    let potts = cluster_to_potts(model, &layout.transformed(transform))?;
    Ok(PepsNetwork::new(potts, beta, transform))
}

impl PepsNetwork {
    fn new(potts: PottsHamiltonian, beta: f64, transform: Transform) -> Self {
        let local_weights = potts
            .local
            .iter()
            .map(|es| es.iter().map(|e| (-beta * e).exp()).collect())
            .collect();
        let edge_weights = potts
            .edges
            .iter()
            .map(|e| e.energies.iter().map(|v| (-beta * v).exp()).collect())
            .collect();
        let (rows, cols) = (potts.layout.rows, potts.layout.cols);
        let node = |r: usize, c: usize| r * cols + c;
        let union = |n: usize, others: &[Option<usize>]| -> Projector {
            let mut pos: Vec<usize> = others
                .iter()
                .flatten()
                .filter_map(|&m| potts.edge(n, m))
                .flat_map(|e| {
                    if e.cells.0 == n {
                        e.boundary.0.clone()
                    } else {
                        e.boundary.1.clone()
                    }
                })
                .collect();
            pos.sort_unstable();
            pos.dedup();
            Projector::from_positions(potts.layout.cells[n].len(), &pos)
        };
        let at = |r: Option<usize>, c: Option<usize>| -> Option<usize> {
            match (r, c) {
                (Some(r), Some(c)) if r < rows && c < cols => Some(node(r, c)),
                _ => None,
            }
        };
        let mut down = Vec::new();
        let mut carry_right = Vec::new();
        let mut carry_diagonal = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let n = node(r, c);
                let below = Some(r + 1);
                down.push(union(
                    n,
                    &[at(below, c.checked_sub(1)), at(below, Some(c)), at(below, Some(c + 1))],
                ));
                carry_right.push(union(
                    n,
                    &[at(Some(r), Some(c + 1)), at(r.checked_sub(1), Some(c + 1))],
                ));
                carry_diagonal.push(union(n, &[at(below, Some(c + 1))]));
            }
        }
        PepsNetwork {
            potts,
            beta,
            transform,
            local_weights,
            edge_weights,
            down,
            carry_right,
            carry_diagonal,
        }
    }

    pub fn potts(&self) -> &PottsHamiltonian {
        &self.potts
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn transform(&self) -> Transform {
        self.transform
    }

    pub fn rows(&self) -> usize {
        self.potts.layout.rows
    }

    pub fn cols(&self) -> usize {
        self.potts.layout.cols
    }

    fn node(&self, r: usize, c: usize) -> usize {
        r * self.cols() + c
    }

    /// Boltzmann weight of the pair interaction; 1 for non-adjacent nodes.
    fn weight(&self, a: usize, xa: usize, b: usize, xb: usize) -> f64 {
        match self.potts.edge_index(a, b) {
            Some(i) => {
                let e = &self.potts.edges[i];
                let (xa, xb) = if e.cells.0 == a { (xa, xb) } else { (xb, xa) };
                let (pa, pb) = &e.projectors;
                self.edge_weights[i][pa.project(xa) * pb.reduced_dim() + pb.project(xb)]
            }
            None => 1.0,
        }
    }

    /// Projector of node `a` towards `b`, if both exist and are adjacent.
    fn toward(&self, a: usize, b: Option<usize>) -> Option<&Projector> {
        b.and_then(|b| self.potts.edge_projector(a, b))
    }

    /// Full contraction as `ln Z`, with exact row compression.
    pub fn log_partition(&self, params: &ContractionParams) -> Result<f64> {
        Contractor::new(self, params)?.log_partition()
    }
}

/// Boundary-MPS compression settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionParams {
    /// Maximum bond dimension.
    pub chi: usize,
    /// Singular values below `tol · largest` are discarded.
    pub tol: f64,
    /// Variational refinement sweeps after truncation.
    pub sweeps: usize,
}

impl Default for ContractionParams {
    fn default() -> Self {
        ContractionParams {
            chi: 32,
            tol: 1e-12,
            sweeps: 1,
        }
    }
}

impl ContractionParams {
    fn validate(&self) -> Result<()> {
        if self.chi == 0 {
            return Err(Error::Argument("chi must be >= 1".into()));
        }
        if !(self.tol >= 0.0 && self.tol < 1.0) {
            return Err(Error::Argument(format!("tolerance {} not in [0, 1)", self.tol)));
        }
        Ok(())
    }
}

/// Rank-3 tensor `(left, physical, right)`, row-major.
#[derive(Debug, Clone, PartialEq)]
struct Site {
    dl: usize,
    p: usize,
    dr: usize,
    data: Vec<f64>,
}

impl Site {
    fn zeros(dl: usize, p: usize, dr: usize) -> Self {
        Site {
            dl,
            p,
            dr,
            data: vec![0.0; dl * p * dr],
        }
    }

    #[inline]
    fn idx(&self, a: usize, s: usize, b: usize) -> usize {
        (a * self.p + s) * self.dr + b
    }

    #[inline]
    fn get(&self, a: usize, s: usize, b: usize) -> f64 {
        self.data[self.idx(a, s, b)]
    }

    /// `(left·physical) × right`.
    fn left_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dl * self.p, self.dr, &self.data)
    }

    /// `left × (physical·right)`.
    fn right_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dl, self.p * self.dr, &self.data)
    }

    fn from_matrix(m: &DMatrix<f64>, dl: usize, p: usize, dr: usize) -> Self {
        debug_assert_eq!(m.nrows() * m.ncols(), dl * p * dr);
        let mut data = Vec::with_capacity(dl * p * dr);
        for i in 0..m.nrows() {
            data.extend(m.row(i).iter());
        }
        Site { dl, p, dr, data }
    }

    fn slice(&self, s: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.dl, self.dr, |a, b| self.get(a, s, b))
    }

    fn from_slices(slices: &[DMatrix<f64>]) -> Self {
        let (dl, dr) = slices[0].shape();
        let mut site = Site::zeros(dl, slices.len(), dr);
        for (s, m) in slices.iter().enumerate() {
            for a in 0..dl {
                for b in 0..dr {
                    let i = site.idx(a, s, b);
                    site.data[i] = m[(a, b)];
                }
            }
        }
        site
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Environment of the sites left of `c`: `L'[α', t'] = Σ_s A(s)ᵀ L T(s)`.
fn extend_left(l: &DMatrix<f64>, a: &Site, t: &Site) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.dr, t.dr);
    for s in 0..a.p {
        out += a.slice(s).transpose() * l * t.slice(s);
    }
    out
}

/// `R[β, t] = Σ_s A(s) R' T(s)ᵀ`.
fn extend_right(r: &DMatrix<f64>, a: &Site, t: &Site) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.dl, t.dl);
    for s in 0..a.p {
        out += a.slice(s) * r * t.slice(s).transpose();
    }
    out
}

/// Best single-site tensor given orthonormal environments.
fn optimal_site(l: &DMatrix<f64>, t: &Site, r: &DMatrix<f64>) -> Site {
    let slices: Vec<DMatrix<f64>> = (0..t.p).map(|s| l * t.slice(s) * r.transpose()).collect();
    Site::from_slices(&slices)
}

/// One right-to-left plus left-to-right single-site fitting pass of `a`
/// towards `target`. `a` is left-canonical on entry and on exit.
fn variational_sweep(a: &mut [Site], target: &[Site]) {
    let n = a.len();
    let one = DMatrix::from_element(1, 1, 1.0);
    let mut lenv = vec![one.clone()];
    for c in 0..n - 1 {
        let next = extend_left(&lenv[c], &a[c], &target[c]);
        lenv.push(next);
    }
    let mut renv = vec![one.clone(); n + 1];
    for c in (1..n).rev() {
        let center = optimal_site(&lenv[c], &target[c], &renv[c + 1]);
        let qr = center.right_matrix().transpose().qr();
        let q = qr.q().transpose();
        let k = q.nrows();
        a[c] = Site::from_matrix(&q, k, center.p, center.dr);
        renv[c] = extend_right(&renv[c + 1], &a[c], &target[c]);
    }
    lenv[0] = one;
    for c in 0..n - 1 {
        let center = optimal_site(&lenv[c], &target[c], &renv[c + 1]);
        let qr = center.left_matrix().qr();
        let q = qr.q();
        let k = q.ncols();
        a[c] = Site::from_matrix(&q, center.dl, center.p, k);
        lenv[c + 1] = extend_left(&lenv[c], &a[c], &target[c]);
    }
    a[n - 1] = optimal_site(&lenv[n - 1], &target[n - 1], &renv[n]);
}

/// Compresses `raw` to bond dimension `chi`. Returns the normalized sites,
/// the log of the removed scale, and the summed relative discarded weight.
fn compress(mut t: Vec<Site>, params: &ContractionParams) -> Result<(Vec<Site>, f64, f64)> {
    let n = t.len();
    let mut log_scale = 0.0;
    for s in t.iter_mut() {
        let m = max_abs(&s.data);
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::Contraction(
                "row product vanished or overflowed; beta or chi too aggressive".into(),
            ));
        }
        s.data.iter_mut().for_each(|v| *v /= m);
        log_scale += m.ln();
    }
    let target = t.clone();
    for c in (1..n).rev() {
        let qr = t[c].right_matrix().transpose().qr();
        let q = qr.q().transpose();
        let r = qr.r().transpose();
        let k = q.nrows();
        let (p, dr) = (t[c].p, t[c].dr);
        t[c] = Site::from_matrix(&q, k, p, dr);
        let left = t[c - 1].left_matrix() * r;
        let (dl, p) = (t[c - 1].dl, t[c - 1].p);
        t[c - 1] = Site::from_matrix(&left, dl, p, k);
    }
    let mut discarded = 0.0;
    for c in 0..n.saturating_sub(1) {
        let svd = t[c].left_matrix().svd(true, true);
        let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
        let sv = svd.singular_values;
        let mut order: Vec<usize> = (0..sv.len()).collect();
        order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
        let largest = sv[order[0]];
        if !(largest > 0.0 && largest.is_finite()) {
            return Err(Error::Contraction("boundary chain has zero norm".into()));
        }
        let keep: Vec<usize> = order
            .iter()
            .copied()
            .take_while(|&i| sv[i] >= params.tol * largest)
            .take(params.chi)
            .collect();
        let total: f64 = sv.iter().map(|s| s * s).sum();
        let kept: f64 = keep.iter().map(|&i| sv[i] * sv[i]).sum();
        discarded += ((total - kept) / total).max(0.0);
        let k = keep.len();
        let uk = DMatrix::from_fn(u.nrows(), k, |i, j| u[(i, keep[j])]);
        let svk = DMatrix::from_fn(k, vt.ncols(), |i, j| sv[keep[i]] * vt[(keep[i], j)]);
        let (dl, p) = (t[c].dl, t[c].p);
        t[c] = Site::from_matrix(&uk, dl, p, k);
        let next = &svk * t[c + 1].right_matrix();
        let (p, dr) = (t[c + 1].p, t[c + 1].dr);
        t[c + 1] = Site::from_matrix(&next, k, p, dr);
    }
    for _ in 0..params.sweeps {
        variational_sweep(&mut t, &target);
    }
    let last = t.last_mut().expect("non-empty row");
    let norm = last.data.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::Contraction("compressed boundary has zero norm".into()));
    }
    last.data.iter_mut().for_each(|v| *v /= norm);
    Ok((t, log_scale + norm.ln(), discarded))
}

/// Sum over all rows below `row` of the Gibbs weights, as an MPS over the
/// down-projected states of `row`. The true value is `e^{log_scale}` times
/// the contraction of the stored sites.
#[derive(Debug, Clone)]
pub struct BoundaryMps {
    row: usize,
    sites: Vec<Site>,
    log_scale: f64,
    discarded_weight: f64,
}

impl BoundaryMps {
    pub fn row(&self) -> usize {
        self.row
    }

    pub fn num_sites(&self) -> usize {
        self.sites.len()
    }

    /// Right bond dimensions of every site but the last.
    pub fn bond_dims(&self) -> Vec<usize> {
        self.sites[..self.sites.len() - 1].iter().map(|s| s.dr).collect()
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    pub fn physical_dims(&self) -> Vec<usize> {
        self.sites.iter().map(|s| s.p).collect()
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    /// Relative singular-value weight dropped while building this boundary
    /// and every boundary below it.
    pub fn discarded_weight(&self) -> f64 {
        self.discarded_weight
    }

    /// Value for the given physical indices.
    pub fn evaluate(&self, physical: &[usize]) -> Result<f64> {
        if physical.len() != self.sites.len() {
            return Err(Error::Dimension {
                expected: self.sites.len(),
                got: physical.len(),
            });
        }
        let mut v = vec![1.0];
        for (site, &s) in self.sites.iter().zip(physical) {
            if s >= site.p {
                return Err(Error::Domain(format!("physical index {s} exceeds {}", site.p)));
            }
            v = (0..site.dr)
                .map(|b| (0..site.dl).map(|a| v[a] * site.get(a, s, b)).sum())
                .collect();
        }
        Ok(v[0] * self.log_scale.exp())
    }
}

fn bottom_boundary(net: &PepsNetwork) -> BoundaryMps {
    let r = net.rows() - 1;
    let sites = (0..net.cols())
        .map(|c| {
            let p = net.down[net.node(r, c)].reduced_dim();
            Site {
                dl: 1,
                p,
                dr: 1,
                data: vec![1.0; p],
            }
        })
        .collect();
    BoundaryMps {
        row: r,
        sites,
        log_scale: 0.0,
        discarded_weight: 0.0,
    }
}

/// Absorbs row `r + 1` into the boundary below it, before compression.
fn row_product(net: &PepsNetwork, below: &BoundaryMps, r: usize) -> Vec<Site> {
    let s = r + 1;
    let cols = net.cols();
    (0..cols)
        .map(|c| {
            let xn = net.node(s, c);
            let yn = net.node(r, c);
            let prev_x = (c > 0).then(|| net.node(s, c - 1));
            let prev_y = (c > 0).then(|| net.node(r, c - 1));
            let bs = &below.sites[c];
            let u_proj = prev_x.map(|m| &net.carry_right[m]);
            let v_proj = prev_y.map(|m| &net.carry_diagonal[m]);
            let u_dim = u_proj.map_or(1, Projector::reduced_dim);
            let v_dim = v_proj.map_or(1, Projector::reduced_dim);
            let u_out = net.carry_right[xn].reduced_dim();
            let v_out = net.carry_diagonal[yn].reduced_dim();
            let y_dim = net.down[yn].reduced_dim();
            let mut site = Site::zeros(bs.dl * u_dim * v_dim, y_dim, bs.dr * u_out * v_out);
            for (x, &lw) in net.local_weights[xn].iter().enumerate() {
                if lw == 0.0 {
                    continue;
                }
                let dn = net.down[xn].project(x);
                let uo = net.carry_right[xn].project(x);
                for y in 0..y_dim {
                    let yrep = net.down[yn].representative(y);
                    let vo = net.carry_diagonal[yn].project(yrep);
                    let w_vert = net.weight(yn, yrep, xn, x);
                    for u in 0..u_dim {
                        let (w_h, w_anti) = match (prev_x, u_proj) {
                            (Some(m), Some(p)) => {
                                let urep = p.representative(u);
                                (net.weight(m, urep, xn, x), net.weight(yn, yrep, m, urep))
                            }
                            _ => (1.0, 1.0),
                        };
                        for v in 0..v_dim {
                            let w_diag = match (prev_y, v_proj) {
                                (Some(m), Some(p)) => net.weight(m, p.representative(v), xn, x),
                                _ => 1.0,
                            };
                            let w = lw * w_vert * w_h * w_anti * w_diag;
                            if w == 0.0 {
                                continue;
                            }
                            for a in 0..bs.dl {
                                let l = (a * u_dim + u) * v_dim + v;
                                for b in 0..bs.dr {
                                    let rr = (b * u_out + uo) * v_out + vo;
                                    let i = site.idx(l, y, rr);
                                    site.data[i] += w * bs.get(a, dn, b);
                                }
                            }
                        }
                    }
                }
            }
            site
        })
        .collect()
}

fn build_boundaries(net: &PepsNetwork, params: &ContractionParams) -> Result<Vec<BoundaryMps>> {
    params.validate()?;
    let rows = net.rows();
    let mut out = vec![bottom_boundary(net)];
    for r in (0..rows - 1).rev() {
        let below = out.last().expect("seeded");
        let raw = row_product(net, below, r);
        let (sites, ls, disc) = compress(raw, params)?;
        let b = BoundaryMps {
            row: r,
            sites,
            log_scale: below.log_scale + ls,
            discarded_weight: below.discarded_weight + disc,
        };
        out.push(b);
    }
    out.reverse();
    Ok(out)
}

/// Boundary MPS of the rows below `row`.
pub fn boundary_mps(net: &PepsNetwork, row: usize, params: &ContractionParams) -> Result<BoundaryMps> {
    if row >= net.rows() {
        return Err(Error::Argument(format!("row {row} outside 0..{}", net.rows())));
    }
    Ok(build_boundaries(net, params)?.swap_remove(row))
}

/// Right environments of one row given the fixed row above it.
#[derive(Debug)]
struct RowEnv {
    /// `unary[c][x]`: local weight times couplings to the row above.
    unary: Vec<Vec<f64>>,
    /// `env[c]`: row-major `(bond left of c) × (horizontal index of c-1)`.
    env: Vec<Vec<f64>>,
    h_dims: Vec<usize>,
    /// `ln` of the scale removed from `env[c]`, cumulative from the right.
    log_scale: Vec<f64>,
}

/// Conditional-marginal engine over one network with cached environments.
pub struct Contractor<'a> {
    net: &'a PepsNetwork,
    boundaries: Vec<BoundaryMps>,
    cache_row: Option<usize>,
    cache: HashMap<Vec<usize>, Rc<RowEnv>>,
}

impl<'a> Contractor<'a> {
    pub fn new(net: &'a PepsNetwork, params: &ContractionParams) -> Result<Self> {
        Ok(Contractor {
            net,
            boundaries: build_boundaries(net, params)?,
            cache_row: None,
            cache: HashMap::new(),
        })
    }

    pub fn boundary(&self, row: usize) -> &BoundaryMps {
        &self.boundaries[row]
    }

    /// Total discarded singular-value weight over all boundaries.
    pub fn discarded_weight(&self) -> f64 {
        self.boundaries[0].discarded_weight
    }

    fn row_env(&mut self, r: usize, above: &[usize]) -> Result<Rc<RowEnv>> {
        if self.cache_row != Some(r) {
            self.cache.clear();
            self.cache_row = Some(r);
        }
        if let Some(e) = self.cache.get(above) {
            return Ok(Rc::clone(e));
        }
        let net = self.net;
        let cols = net.cols();
        let bnd = &self.boundaries[r];
        let unary: Vec<Vec<f64>> = (0..cols)
            .map(|c| {
                let n = net.node(r, c);
                net.local_weights[n]
                    .iter()
                    .enumerate()
                    .map(|(x, &lw)| {
                        let mut w = lw;
                        if r > 0 {
                            let (lo, hi) = (c.saturating_sub(1), (c + 1).min(cols - 1));
                            for (cc, &xa) in (lo..).zip(&above[lo..=hi]) {
                                w *= net.weight(net.node(r - 1, cc), xa, n, x);
                            }
                        }
                        w
                    })
                    .collect()
            })
            .collect();
        let h_dims: Vec<usize> = (0..=cols)
            .map(|c| {
                if c == 0 || c == cols {
                    1
                } else {
                    let n = net.node(r, c - 1);
                    net.toward(n, Some(n + 1)).map_or(1, Projector::reduced_dim)
                }
            })
            .collect();
        let mut env = vec![Vec::new(); cols + 1];
        let mut log_scale = vec![0.0; cols + 1];
        env[cols] = vec![1.0];
        for c in (0..cols).rev() {
            let n = net.node(r, c);
            let site = &bnd.sites[c];
            let h_in = h_dims[c];
            let h_out = h_dims[c + 1];
            let proj_in = (c > 0).then(|| net.toward(n - 1, Some(n))).flatten();
            let proj_out = net.toward(n, (c + 1 < cols).then_some(n + 1));
            let mut e = vec![0.0; site.dl * h_in];
            for (x, &w) in unary[c].iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let dn = net.down[n].project(x);
                let ho = proj_out.map_or(0, |p| p.project(x));
                let mut inner = vec![0.0; site.dl];
                for (a, slot) in inner.iter_mut().enumerate() {
                    *slot = (0..site.dr)
                        .map(|b| site.get(a, dn, b) * env[c + 1][b * h_out + ho])
                        .sum();
                }
                for h in 0..h_in {
                    let wh = match proj_in {
                        Some(p) => net.weight(n - 1, p.representative(h), n, x),
                        None => 1.0,
                    };
                    for a in 0..site.dl {
                        e[a * h_in + h] += w * wh * inner[a];
                    }
                }
            }
            let m = max_abs(&e);
            if !(m > 0.0 && m.is_finite()) {
                return Err(Error::Contraction(format!(
                    "row {r} environment vanished; beta or chi too aggressive"
                )));
            }
            e.iter_mut().for_each(|v| *v /= m);
            env[c] = e;
            log_scale[c] = log_scale[c + 1] + m.ln();
        }
        let out = Rc::new(RowEnv {
            unary,
            env,
            h_dims,
            log_scale,
        });
        self.cache.insert(above.to_vec(), Rc::clone(&out));
        Ok(out)
    }

    /// `ln Z` of the network.
    pub fn log_partition(&mut self) -> Result<f64> {
        let env = self.row_env(0, &[])?;
        Ok(env.env[0][0].ln() + env.log_scale[0] + self.boundaries[0].log_scale)
    }

    /// Unnormalized weights of the states of node `(r, c)` given the left
    /// vector of the row prefix and the state of `(r, c - 1)`.
    fn weights(&self, env: &RowEnv, r: usize, c: usize, left: &[f64], prev: Option<usize>) -> Vec<f64> {
        let net = self.net;
        let n = net.node(r, c);
        let site = &self.boundaries[r].sites[c];
        let h_out = env.h_dims[c + 1];
        let proj_out = net.toward(n, (c + 1 < net.cols()).then_some(n + 1));
        let mut through = vec![vec![0.0; site.dr]; site.p];
        for (dn, row) in through.iter_mut().enumerate() {
            for (a, &la) in left.iter().enumerate() {
                if la == 0.0 {
                    continue;
                }
                for (b, slot) in row.iter_mut().enumerate() {
                    *slot += la * site.get(a, dn, b);
                }
            }
        }
        env.unary[c]
            .iter()
            .enumerate()
            .map(|(x, &w)| {
                let wh = match prev {
                    Some(px) => net.weight(n - 1, px, n, x),
                    None => 1.0,
                };
                let dn = net.down[n].project(x);
                let ho = proj_out.map_or(0, |p| p.project(x));
                let tail: f64 = through[dn]
                    .iter()
                    .enumerate()
                    .map(|(b, &v)| v * env.env[c + 1][b * h_out + ho])
                    .sum();
                w * wh * tail
            })
            .collect()
    }

    /// Left vector after fixing node `(r, c)` to `x`, rescaled to max 1.
    fn advance_left(&self, r: usize, c: usize, left: &[f64], x: usize) -> Vec<f64> {
        let n = self.net.node(r, c);
        let site = &self.boundaries[r].sites[c];
        let dn = self.net.down[n].project(x);
        let mut out: Vec<f64> = (0..site.dr)
            .map(|b| left.iter().enumerate().map(|(a, &la)| la * site.get(a, dn, b)).sum())
            .collect();
        let m = max_abs(&out);
        if m > 0.0 {
            out.iter_mut().for_each(|v| *v /= m);
        }
        out
    }

    /// `p(x_next | prefix)` for the node following `prefix` in row-major
    /// order.
    pub fn conditional(&mut self, prefix: &[usize]) -> Result<Vec<f64>> {
        let net = self.net;
        let total = net.potts.num_nodes();
        if prefix.len() >= total {
            return Err(Error::Argument(format!(
                "prefix covers all {total} nodes; nothing to condition"
            )));
        }
        for (n, &x) in prefix.iter().enumerate() {
            if x >= net.potts.dim(n) {
                return Err(Error::Domain(format!("state {x} of node {n} exceeds {}", net.potts.dim(n))));
            }
        }
        let cols = net.cols();
        let (r, c) = (prefix.len() / cols, prefix.len() % cols);
        let above = if r > 0 { &prefix[(r - 1) * cols..r * cols] } else { &[][..] };
        let env = self.row_env(r, above)?;
        let mut left = vec![1.0];
        for cc in 0..c {
            left = self.advance_left(r, cc, &left, prefix[r * cols + cc]);
        }
        let prev = (c > 0).then(|| prefix[r * cols + c - 1]);
        normalize(self.weights(&env, r, c, &left, prev))
    }
}

/// Truncated boundaries can produce slightly negative weights; those are
/// clamped to zero before normalizing.
fn normalize(mut w: Vec<f64>) -> Result<Vec<f64>> {
    w.iter_mut().for_each(|v| *v = v.max(0.0));
    let z: f64 = w.iter().sum();
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::Contraction(
            "conditional weights vanished; beta or chi too aggressive".into(),
        ));
    }
    w.iter_mut().for_each(|v| *v /= z);
    Ok(w)
}

/// Conditional distribution of the node after `prefix`.
pub fn conditional_probability(
    net: &PepsNetwork,
    prefix: &[usize],
    params: &ContractionParams,
) -> Result<Vec<f64>> {
    Contractor::new(net, params)?.conditional(prefix)
}

/// Excitation selection for [`extract_droplets`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropletParams {
    /// Largest accepted excitation energy above the reference.
    pub max_energy: f64,
    /// Minimum Hamming distance to the reference and between droplets.
    pub min_hamming: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Droplet {
    /// Spins flipped relative to the reference (0-based positions).
    pub mask: Vec<bool>,
    pub excitation: f64,
    pub size: usize,
}

impl Droplet {
    pub fn apply(&self, reference: &SpinConfig) -> SpinConfig {
        let v = reference
            .values()
            .iter()
            .zip(&self.mask)
            .map(|(&s, &f)| if f { -s } else { s })
            .collect();
        SpinConfig::new(v).expect("±1")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedState {
    pub potts: Vec<usize>,
    pub spins: SpinConfig,
    pub energy: f64,
    pub log_probability: f64,
    /// Number of retained states sharing this energy.
    pub degeneracy: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSolution {
    /// Retained states by increasing energy.
    pub states: Vec<RankedState>,
    pub largest_discarded_probability: f64,
    pub droplets: Vec<Droplet>,
    pub transform: Transform,
}

impl SearchSolution {
    pub fn best(&self) -> Option<&RankedState> {
        self.states.first()
    }

    pub fn best_energy(&self) -> f64 {
        self.best().map_or(f64::INFINITY, |s| s.energy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    /// Beam width `M`.
    pub max_states: usize,
    /// Candidates less probable than `cutoff ×` the best are dropped.
    pub cutoff: f64,
    pub contraction: ContractionParams,
    pub droplets: Option<DropletParams>,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            max_states: 256,
            cutoff: 0.0,
            contraction: ContractionParams::default(),
            droplets: None,
        }
    }
}

struct Partial {
    states: Vec<usize>,
    log_prob: f64,
    left: Vec<f64>,
}

/// Beam search over nodes in row-major order, keeping the `M` most probable
/// partial assignments; the survivors are decoded and ranked by energy.
pub fn branch_and_bound(
    model: &IsingModel,
    net: &PepsNetwork,
    params: &SearchParams,
) -> Result<SearchSolution> {
    if params.max_states == 0 {
        return Err(Error::Argument("max_states must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&params.cutoff) {
        return Err(Error::Argument(format!("cutoff {} not in [0, 1)", params.cutoff)));
    }
    if model.num_spins() != net.potts.num_spins() {
        return Err(Error::Dimension {
            expected: net.potts.num_spins(),
            got: model.num_spins(),
        });
    }
    let mut ctr = Contractor::new(net, &params.contraction)?;
    let cols = net.cols();
    let log_cut = params.cutoff.ln();
    let mut beam = vec![Partial {
        states: Vec::new(),
        log_prob: 0.0,
        left: vec![1.0],
    }];
    let mut largest_discarded = 0.0f64;
    for node in 0..net.potts.num_nodes() {
        let (r, c) = (node / cols, node % cols);
        let mut children: Vec<(f64, usize, usize)> = Vec::new();
        let mut lefts = Vec::with_capacity(beam.len());
        for (pi, p) in beam.iter().enumerate() {
            let above = if r > 0 { &p.states[(r - 1) * cols..r * cols] } else { &[][..] };
            let env = ctr.row_env(r, above)?;
            let left = if c == 0 { vec![1.0] } else { p.left.clone() };
            let prev = (c > 0).then(|| p.states[node - 1]);
            let probs = normalize(ctr.weights(&env, r, c, &left, prev))?;
            for (x, q) in probs.into_iter().enumerate() {
                children.push((p.log_prob + q.ln(), pi, x));
            }
            lefts.push(left);
        }
        children.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then_with(|| beam[a.1].states.cmp(&beam[b.1].states))
                .then(a.2.cmp(&b.2))
        });
        let best = children[0].0;
        let mut next = Vec::with_capacity(params.max_states.min(children.len()));
        for (lp, pi, x) in children {
            let keep = lp.is_finite() && next.len() < params.max_states && lp >= best + log_cut;
            if !keep {
                if lp.is_finite() {
                    largest_discarded = largest_discarded.max(lp.exp());
                }
                continue;
            }
            let mut states = beam[pi].states.clone();
            states.push(x);
            let left = if c + 1 < cols {
                ctr.advance_left(r, c, &lefts[pi], x)
            } else {
                vec![1.0]
            };
            next.push(Partial {
                states,
                log_prob: lp,
                left,
            });
        }
        beam = next;
    }
    let mut ranked = beam
        .into_iter()
        .map(|p| {
            let spins = net.potts.decode(&p.states)?;
            let energy = model.energy(&spins)?;
            Ok(RankedState {
                potts: p.states,
                spins,
                energy,
                log_probability: p.log_prob,
                degeneracy: 1,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| {
        a.energy
            .total_cmp(&b.energy)
            .then(b.log_probability.total_cmp(&a.log_probability))
            .then_with(|| a.potts.cmp(&b.potts))
    });
    let energies: Vec<f64> = ranked.iter().map(|s| s.energy).collect();
    for s in ranked.iter_mut() {
        s.degeneracy = energies.iter().filter(|&&e| (e - s.energy).abs() <= ENERGY_TOL).count();
    }
    let mut solution = SearchSolution {
        states: ranked,
        largest_discarded_probability: largest_discarded,
        droplets: Vec::new(),
        transform: net.transform,
    };
    if let (Some(dp), Some(best)) = (params.droplets, solution.best()) {
        let reference = best.spins.clone();
        solution.droplets = extract_droplets(model, &solution, &reference, &dp)?;
    }
    Ok(solution)
}

/// Greedy selection, in energy order, of retained states that differ from
/// `reference` and from every accepted droplet in at least `min_hamming`
/// spins and lie at most `max_energy` above `reference`.
pub fn extract_droplets(
    model: &IsingModel,
    solution: &SearchSolution,
    reference: &SpinConfig,
    params: &DropletParams,
) -> Result<Vec<Droplet>> {
    let e_ref = model.energy(reference)?;
    let mut accepted: Vec<Droplet> = Vec::new();
    for s in &solution.states {
        let excitation = s.energy - e_ref;
        if excitation > params.max_energy + ENERGY_TOL {
            continue;
        }
        let mask: Vec<bool> = reference
            .values()
            .iter()
            .zip(s.spins.values())
            .map(|(a, b)| a != b)
            .collect();
        let size = mask.iter().filter(|&&f| f).count();
        if size == 0 || size < params.min_hamming {
            continue;
        }
        let far = accepted.iter().all(|d| {
            d.mask.iter().zip(&mask).filter(|(a, b)| a != b).count() >= params.min_hamming
        });
        if far {
            accepted.push(Droplet {
                mask,
                excitation,
                size,
            });
        }
    }
    Ok(accepted)
}

/// Runs [`branch_and_bound`] under all eight grid transforms and returns
/// the lowest-energy result; ties go to the earlier transform.
pub fn solve_with_transforms(
    model: &IsingModel,
    layout: &PottsLayout,
    beta: f64,
    params: &SearchParams,
) -> Result<SearchSolution> {
    let results: Vec<SearchSolution> = Transform::ALL
        .par_iter()
        .map(|&t| {
            let net = build_peps(model, layout, beta, t)?;
            branch_and_bound(model, &net, params)
        })
        .collect::<Result<_>>()?;
    Ok(results
        .into_iter()
        .reduce(|best, s| if s.best_energy() < best.best_energy() - ENERGY_TOL { s } else { best })
        .expect("eight transforms"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{build_lattice, generate, InstanceClass};
    use crate::model::tests::random_model;
    use crate::model::GibbsTable;
    use crate::oracle::{brute_force, exact_conditional};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn king(rows: usize, cols: usize, t: usize, class: InstanceClass, seed: u64) -> (IsingModel, PottsLayout) {
        let spec = LatticeSpec::king(rows, cols, t).unwrap();
        let m = generate(class, spec.num_spins(), &build_lattice(&spec), seed).unwrap();
        (m, PottsLayout::from_lattice(&spec))
    }

    fn exact() -> ContractionParams {
        ContractionParams {
            chi: 1024,
            tol: 0.0,
            sweeps: 1,
        }
    }

    #[test]
    fn single_cell_local_table() {
        let m = IsingModel::from_parts(2, [(1, 2, 1.0)], vec![0.0; 2]).unwrap();
        let layout = PottsLayout::new(1, 1, vec![vec![1, 2]]).unwrap();
        let p = cluster_to_potts(&m, &layout).unwrap();
        assert_eq!(p.local_energies(0), &[1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn potts_energy_matches_ising() {
        let (m, layout) = king(3, 3, 2, InstanceClass::Rau, 3);
        let p = cluster_to_potts(&m, &layout).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let s: Vec<i8> = (0..18).map(|_| if rng.random() { 1 } else { -1 }).collect();
            let cfg = SpinConfig::new(s).unwrap();
            let x = p.encode(&cfg).unwrap();
            assert_eq!(p.decode(&x).unwrap(), cfg);
            assert!((p.energy(&x).unwrap() - m.energy(&cfg).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn empty_boundary_edge() {
        let m = IsingModel::from_parts(4, [(1, 2, 0.5), (3, 4, 0.25)], vec![0.0; 4]).unwrap();
        let layout = PottsLayout::new(1, 2, vec![vec![1, 2], vec![3, 4]]).unwrap();
        let p = cluster_to_potts(&m, &layout).unwrap();
        let e = p.edge(0, 1).unwrap();
        assert_eq!((e.projectors.0.reduced_dim(), e.projectors.1.reduced_dim()), (1, 1));
        assert_eq!(e.energies, vec![0.0]);
    }

    #[test]
    fn projector_counts_boundary_spins() {
        let m = IsingModel::from_parts(4, [(1, 3, 0.5), (1, 4, -0.3)], vec![0.0; 4]).unwrap();
        let (pa, pb, _) = build_projectors(&m, &[1, 2], &[3, 4]);
        assert_eq!(pa.reduced_dim(), 2);
        assert_eq!(pb.reduced_dim(), 4);
        assert_eq!(pb.map, vec![0, 1, 2, 3]);
        for x in 0..4 {
            // Spin 1 is the high bit of the cell state.
            assert_eq!(pa.project(x), x >> 1);
        }
    }

    #[test]
    fn projected_pair_energy_matches_dense_table() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let mut m = IsingModel::new(4);
            for (i, j) in [(1, 3), (1, 4), (2, 3), (2, 4)] {
                if rng.random::<f64>() < 0.5 {
                    m.add_coupling(i, j, rng.random_range(-1.0..1.0)).unwrap();
                }
            }
            let (pa, pb, e) = build_projectors(&m, &[1, 2], &[3, 4]);
            for xa in 0..4 {
                for xb in 0..4 {
                    let s = [cell_spin(xa, 2, 0), cell_spin(xa, 2, 1), cell_spin(xb, 2, 0), cell_spin(xb, 2, 1)];
                    let dense: f64 = m.couplings().map(|(i, j, v)| v * s[i - 1] * s[j - 1]).sum();
                    let via = e[pa.project(xa) * pb.reduced_dim() + pb.project(xb)];
                    assert!((dense - via).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn structure_errors() {
        let m = IsingModel::from_parts(3, [(1, 3, 1.0)], vec![0.0; 3]).unwrap();
        let unassigned = PottsLayout::new(1, 2, vec![vec![1], vec![2]]).unwrap();
        assert!(matches!(cluster_to_potts(&m, &unassigned), Err(Error::Structure(_))));
        let far = PottsLayout::new(1, 3, vec![vec![1], vec![2], vec![3]]).unwrap();
        assert!(matches!(cluster_to_potts(&m, &far), Err(Error::Structure(_))));
        let big = IsingModel::new(9);
        let one = PottsLayout::new(1, 1, vec![(1..=9).collect()]).unwrap();
        assert!(matches!(cluster_to_potts(&big, &one), Err(Error::Capacity { .. })));
    }

    #[test]
    fn transforms_are_bijections() {
        for t in Transform::ALL {
            let (rows, cols) = t.dims(3, 4);
            let mut seen = [false; 12];
            for r in 0..rows {
                for c in 0..cols {
                    let (sr, sc) = t.source(3, 4, r, c);
                    assert!(!seen[sr * 4 + sc]);
                    seen[sr * 4 + sc] = true;
                }
            }
        }
    }

    fn gibbs_log_z(m: &IsingModel, beta: f64) -> f64 {
        GibbsTable::new(m, beta).unwrap().log_partition()
    }

    #[test]
    fn single_cell_partition_function() {
        let m = random_model(3, 1.0, 4);
        let layout = PottsLayout::new(1, 1, vec![vec![1, 2, 3]]).unwrap();
        let net = build_peps(&m, &layout, 0.7, Transform::Identity).unwrap();
        let z = net.log_partition(&exact()).unwrap();
        assert_relative_eq!(z, gibbs_log_z(&m, 0.7), max_relative = 1e-12);
    }

    #[test]
    fn partition_function_matches_enumeration() {
        for (rows, cols, t) in [(2, 2, 1), (2, 3, 2), (3, 2, 1), (3, 3, 1)] {
            for seed in 0..3 {
                let (m, layout) = king(rows, cols, t, InstanceClass::Rau, seed);
                for beta in [0.5, 1.0, 2.0] {
                    let net = build_peps(&m, &layout, beta, Transform::Identity).unwrap();
                    let z = net.log_partition(&exact()).unwrap().exp();
                    let want = gibbs_log_z(&m, beta).exp();
                    assert!((z - want).abs() <= 1e-10 * want, "{rows}x{cols}x{t} β={beta}: {z} vs {want}");
                }
            }
        }
    }

    #[test]
    fn partition_function_is_transform_invariant() {
        let (m, layout) = king(2, 3, 2, InstanceClass::CbfmP, 5);
        let want = gibbs_log_z(&m, 1.3).exp();
        for t in Transform::ALL {
            let net = build_peps(&m, &layout, 1.3, t).unwrap();
            let z = net.log_partition(&exact()).unwrap().exp();
            assert!((z - want).abs() <= 1e-10 * want, "{t:?}");
        }
    }

    #[test]
    fn sparse_crossings_contract_exactly() {
        // Random subsets of the king couplings exercise partial projectors.
        let spec = LatticeSpec::king(3, 3, 2).unwrap();
        let layout = PottsLayout::from_lattice(&spec);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..5 {
            let mut m = IsingModel::new(18);
            for (i, j) in build_lattice(&spec) {
                if rng.random::<f64>() < 0.4 {
                    m.add_coupling(i, j, rng.random_range(-1.0..1.0)).unwrap();
                }
            }
            for i in 1..=18 {
                m.set_field(i, rng.random_range(-0.5..0.5)).unwrap();
            }
            for t in [Transform::Identity, Transform::Rot90, Transform::AntiTranspose] {
                let net = build_peps(&m, &layout, 1.0, t).unwrap();
                assert_relative_eq!(
                    net.log_partition(&exact()).unwrap(),
                    gibbs_log_z(&m, 1.0),
                    max_relative = 1e-10
                );
            }
        }
    }

    #[test]
    fn two_row_boundary_equals_last_row_sum() {
        let (m, layout) = king(2, 2, 1, InstanceClass::Rau, 8);
        let net = build_peps(&m, &layout, 0.9, Transform::Identity).unwrap();
        let b = boundary_mps(&net, 0, &exact()).unwrap();
        let p = net.potts();
        // With one spin per cell and full crossings, down-projection is the
        // identity.
        for y0 in 0..2 {
            for y1 in 0..2 {
                let mut want = 0.0;
                for x2 in 0..2 {
                    for x3 in 0..2 {
                        let xs = [y0, y1, x2, x3];
                        let e: f64 = p.local_energies(2)[x2]
                            + p.local_energies(3)[x3]
                            + [(0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
                                .iter()
                                .map(|&(a, b)| p.pair_energy(a, xs[a], b, xs[b]))
                                .sum::<f64>();
                        want += (-0.9 * e).exp();
                    }
                }
                assert_relative_eq!(b.evaluate(&[y0, y1]).unwrap(), want, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn bond_dimension_respects_chi_and_discard_shrinks() {
        let (m, layout) = king(4, 4, 1, InstanceClass::Rau, 2);
        let net = build_peps(&m, &layout, 1.0, Transform::Identity).unwrap();
        let mut last = f64::INFINITY;
        for chi in [1, 2, 3, 4, 6, 8] {
            let params = ContractionParams {
                chi,
                tol: 1e-12,
                sweeps: 1,
            };
            let ctr = Contractor::new(&net, &params).unwrap();
            for r in 0..4 {
                assert!(ctr.boundary(r).max_bond() <= chi);
            }
            let d = ctr.discarded_weight();
            assert!(d <= last + 1e-12, "chi {chi}: {d} > {last}");
            last = d;
        }
        assert!(last < 1e-20);
    }

    #[test]
    fn zero_beta_is_uniform() {
        let (m, layout) = king(2, 2, 2, InstanceClass::Rau, 1);
        let net = build_peps(&m, &layout, 0.0, Transform::Identity).unwrap();
        let p = conditional_probability(&net, &[3, 1], &exact()).unwrap();
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    /// Exact `p(x | prefix)` of a cell state by the chain rule over its spins.
    fn exact_cell_conditional(
        m: &IsingModel,
        beta: f64,
        layout: &PottsLayout,
        prefix: &[usize],
    ) -> Vec<f64> {
        let mut fixed = vec![None; m.num_spins()];
        for (cell, &x) in layout.cells().iter().zip(prefix) {
            for (p, &i) in cell.iter().enumerate() {
                fixed[i - 1] = Some(cell_spin(x, cell.len(), p) as i8);
            }
        }
        let cell = &layout.cells()[prefix.len()];
        let k = cell.len();
        (0..1usize << k)
            .map(|x| {
                let mut f = fixed.clone();
                let mut prob = 1.0;
                for (p, &i) in cell.iter().enumerate() {
                    let s = cell_spin(x, k, p) as i8;
                    let q = exact_conditional(m, beta, &f, i).unwrap();
                    prob *= if s == 1 { q[1] } else { q[0] };
                    f[i - 1] = Some(s);
                }
                prob
            })
            .collect()
    }

    #[test]
    fn conditionals_match_enumeration() {
        let (m, layout) = king(3, 3, 1, InstanceClass::Rau, 6);
        let beta = 1.2;
        let net = build_peps(&m, &layout, beta, Transform::Identity).unwrap();
        let mut ctr = Contractor::new(&net, &exact()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let len = rng.random_range(0..9);
            let prefix: Vec<usize> = (0..len).map(|_| rng.random_range(0..2)).collect();
            let got = ctr.conditional(&prefix).unwrap();
            let want = exact_cell_conditional(&m, beta, &layout, &prefix);
            assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-8, "{prefix:?}: {got:?} vs {want:?}");
            }
        }
    }

    #[test]
    fn multi_spin_conditionals_match_enumeration() {
        let (m, layout) = king(2, 3, 2, InstanceClass::CbfmP, 4);
        let beta = 0.8;
        let net = build_peps(&m, &layout, beta, Transform::Identity).unwrap();
        let mut ctr = Contractor::new(&net, &exact()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let len = rng.random_range(0..6);
            let prefix: Vec<usize> = (0..len).map(|_| rng.random_range(0..4)).collect();
            let got = ctr.conditional(&prefix).unwrap();
            let want = exact_cell_conditional(&m, beta, &layout, &prefix);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn full_beam_recovers_spectrum() {
        let (m, layout) = king(2, 2, 1, InstanceClass::Rau, 7);
        let net = build_peps(&m, &layout, 1.0, Transform::Identity).unwrap();
        let params = SearchParams {
            max_states: 16,
            contraction: exact(),
            ..SearchParams::default()
        };
        let sol = branch_and_bound(&m, &net, &params).unwrap();
        let spec = brute_force(&m, 16).unwrap();
        assert_eq!(sol.states.len(), 16);
        assert_eq!(sol.largest_discarded_probability, 0.0);
        let log_z = gibbs_log_z(&m, 1.0);
        for (s, want) in sol.states.iter().zip(&spec.states) {
            assert_eq!(s.spins, want.config);
            assert!((s.energy - want.energy).abs() < 1e-12);
            // Chain rule telescopes to the Gibbs probability.
            assert!((s.log_probability - (-want.energy - log_z)).abs() < 1e-8);
        }
        for w in sol.states.windows(2) {
            assert!(w[0].log_probability >= w[1].log_probability - 1e-12);
        }
    }

    #[test]
    fn greedy_beam_is_well_defined() {
        let (m, layout) = king(3, 3, 2, InstanceClass::Rco, 1);
        let net = build_peps(&m, &layout, 2.0, Transform::Identity).unwrap();
        let params = SearchParams {
            max_states: 1,
            ..SearchParams::default()
        };
        let a = branch_and_bound(&m, &net, &params).unwrap();
        let b = branch_and_bound(&m, &net, &params).unwrap();
        assert_eq!(a.states.len(), 1);
        assert_eq!(a, b);
        assert!((m.energy(&a.states[0].spins).unwrap() - a.states[0].energy).abs() < 1e-12);
    }

    #[test]
    fn beam_finds_ground_states() {
        let params = SearchParams {
            max_states: 256,
            ..SearchParams::default()
        };
        let mut hits = 0;
        for seed in 0..5 {
            let (m, layout) = king(3, 3, 2, InstanceClass::Rco, seed);
            let net = build_peps(&m, &layout, 2.0, Transform::Identity).unwrap();
            let sol = branch_and_bound(&m, &net, &params).unwrap();
            let gs = brute_force(&m, 1).unwrap().ground_energy();
            hits += usize::from((sol.best_energy() - gs).abs() < 1e-9);
            for s in &sol.states {
                assert!((m.energy(&s.spins).unwrap() - s.energy).abs() < 1e-10);
            }
        }
        assert!(hits >= 5);
    }

    #[test]
    fn cutoff_discards_and_reports() {
        let (m, layout) = king(3, 3, 1, InstanceClass::Rau, 2);
        let net = build_peps(&m, &layout, 1.0, Transform::Identity).unwrap();
        let params = SearchParams {
            max_states: 512,
            cutoff: 0.5,
            contraction: exact(),
            droplets: None,
        };
        let sol = branch_and_bound(&m, &net, &params).unwrap();
        assert!(sol.states.len() < 512);
        assert!(sol.largest_discarded_probability > 0.0);
        assert!(branch_and_bound(&m, &net, &SearchParams { cutoff: 1.0, ..params }).is_err());
        assert!(branch_and_bound(&m, &net, &SearchParams { max_states: 0, ..params }).is_err());
    }

    #[test]
    fn quality_is_monotone_in_beam_and_chi() {
        let (m, layout) = king(3, 4, 2, InstanceClass::Rco, 3);
        let mut by_m = Vec::new();
        for max_states in [1, 4, 16, 64, 256] {
            let net = build_peps(&m, &layout, 2.0, Transform::Identity).unwrap();
            let params = SearchParams {
                max_states,
                ..SearchParams::default()
            };
            by_m.push(branch_and_bound(&m, &net, &params).unwrap().best_energy());
        }
        assert!(by_m.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{by_m:?}");
        let mut by_chi = Vec::new();
        for chi in [4, 16, 64] {
            let net = build_peps(&m, &layout, 2.0, Transform::Identity).unwrap();
            let params = SearchParams {
                max_states: 16,
                contraction: ContractionParams { chi, ..ContractionParams::default() },
                ..SearchParams::default()
            };
            by_chi.push(branch_and_bound(&m, &net, &params).unwrap().best_energy());
        }
        assert!(by_chi.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{by_chi:?}");
    }

    #[test]
    fn droplets() {
        let (m, layout) = king(2, 3, 2, InstanceClass::Rco, 4);
        let net = build_peps(&m, &layout, 1.0, Transform::Identity).unwrap();
        let dp = DropletParams {
            max_energy: 0.0,
            min_hamming: 3,
        };
        let params = SearchParams {
            max_states: 4096,
            contraction: exact(),
            droplets: Some(dp),
            ..SearchParams::default()
        };
        let sol = branch_and_bound(&m, &net, &params).unwrap();
        let best = sol.best().unwrap();
        // The global flip is the only zero-energy excitation.
        assert_eq!(sol.droplets.len(), 1);
        let d = &sol.droplets[0];
        assert_eq!(d.size, 12);
        assert!(d.excitation.abs() < 1e-10);
        assert_eq!(d.apply(&best.spins), best.spins.flipped());

        let (m, layout) = king(2, 2, 2, InstanceClass::Rau, 4);
        let net = build_peps(&m, &layout, 1.0, Transform::Identity).unwrap();
        let sol = branch_and_bound(&m, &net, &SearchParams { droplets: Some(dp), ..params }).unwrap();
        assert!(sol.droplets.is_empty());

        let wide = DropletParams {
            max_energy: 5.0,
            min_hamming: 2,
        };
        let ds = extract_droplets(&m, &sol, &sol.best().unwrap().spins, &wide).unwrap();
        assert!(!ds.is_empty());
        let reference = &sol.best().unwrap().spins;
        let e_ref = m.energy(reference).unwrap();
        for (i, a) in ds.iter().enumerate() {
            let e = m.energy(&a.apply(reference)).unwrap();
            assert!((e - e_ref - a.excitation).abs() < 1e-10);
            for b in &ds[i + 1..] {
                assert!(a.mask.iter().zip(&b.mask).filter(|(x, y)| x != y).count() >= 2);
            }
        }
    }

    #[test]
    fn transforms_agree_in_exact_regime() {
        let (m, layout) = king(2, 3, 2, InstanceClass::Rau, 11);
        let params = SearchParams {
            max_states: 64,
            contraction: exact(),
            ..SearchParams::default()
        };
        let gs = brute_force(&m, 1).unwrap().ground_energy();
        let mut each = Vec::new();
        for t in Transform::ALL {
            let net = build_peps(&m, &layout, 2.0, t).unwrap();
            let sol = branch_and_bound(&m, &net, &params).unwrap();
            assert!((sol.best_energy() - gs).abs() < 1e-10, "{t:?}");
            each.push(sol.best_energy());
        }
        let all = solve_with_transforms(&m, &layout, 2.0, &params).unwrap();
        assert!(each.iter().all(|&e| all.best_energy() <= e + 1e-12));
        assert_eq!(all.transform, Transform::Identity);
    }

    #[test]
    fn symmetric_instance_is_transform_blind() {
        let spec = LatticeSpec::king(2, 2, 2).unwrap();
        let edges = build_lattice(&spec);
        let m = IsingModel::from_parts(8, edges.iter().map(|&(i, j)| (i, j, 0.5)), vec![0.0; 8]).unwrap();
        let layout = PottsLayout::from_lattice(&spec);
        let params = SearchParams {
            max_states: 16,
            ..SearchParams::default()
        };
        let energies: Vec<Vec<f64>> = Transform::ALL
            .iter()
            .map(|&t| {
                let net = build_peps(&m, &layout, 1.0, t).unwrap();
                branch_and_bound(&m, &net, &params)
                    .unwrap()
                    .states
                    .iter()
                    .map(|s| s.energy)
                    .collect()
            })
            .collect();
        for e in &energies[1..] {
            assert_eq!(e.len(), energies[0].len());
            for (a, b) in e.iter().zip(&energies[0]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn projector_is_surjective_and_consistent(k in 1usize..6, mask in 0u32..64) {
            let positions: Vec<usize> = (0..k).filter(|&p| mask >> p & 1 == 1).collect();
            let proj = Projector::from_positions(k, &positions);
            let mut hit = vec![false; proj.reduced_dim()];
            for x in 0..1usize << k {
                let y = proj.project(x);
                hit[y] = true;
                let r = proj.representative(y);
                prop_assert_eq!(proj.project(r), y);
                for &p in &positions {
                    prop_assert_eq!(cell_spin(x, k, p), cell_spin(r, k, p));
                }
            }
            prop_assert!(hit.into_iter().all(|h| h));
        }

        #[test]
        fn decode_encode_round_trip(seed in 0u64..1000) {
            let (m, layout) = king(2, 2, 3, InstanceClass::Rau, seed);
            let p = cluster_to_potts(&m, &layout).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<usize> = (0..4).map(|_| rng.random_range(0..8)).collect();
            let s = p.decode(&x).unwrap();
            prop_assert_eq!(p.encode(&s).unwrap(), x.clone());
            prop_assert!((p.energy(&x).unwrap() - m.energy(&s).unwrap()).abs() < 1e-10);
        }
    }
}
