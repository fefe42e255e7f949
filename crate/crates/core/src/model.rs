//! Ising and QUBO cost functions, their exact conversions, and exact
//! Gibbs distributions for small systems.
//!
//! Node ids are 1-based at every public boundary. Configurations of `N`
//! spins are also addressed by an integer index in `0..2^N`: spin `i`
//! (1-based) is `+1` iff bit `N - i` of the index is set. Index order is
//! therefore lexicographic order with `-1 < +1`.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of spins up to which exact Gibbs tables are built.
pub const GIBBS_ENUMERATION_CAP: usize = 20;

/// A spin configuration over `{-1, +1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<i8>", into = "Vec<i8>")]
pub struct SpinConfig(Vec<i8>);

impl SpinConfig {
    pub fn new(values: Vec<i8>) -> Result<Self> {
        if let Some(v) = values.iter().find(|&&v| v != 1 && v != -1) {
            return Err(Error::Domain(format!("spin value {v} is not ±1")));
        }
        Ok(SpinConfig(values))
    }

    pub fn uniform(n: usize, value: i8) -> Self {
        assert!(value == 1 || value == -1);
        SpinConfig(vec![value; n])
    }

    /// Configuration with lexicographic index `index` (see module docs).
    pub fn from_index(index: u64, n: usize) -> Self {
        SpinConfig(
            (0..n)
                .map(|i| if (index >> (n - 1 - i)) & 1 == 1 { 1 } else { -1 })
                .collect(),
        )
    }

    pub fn index(&self) -> u64 {
        debug_assert!(self.0.len() <= 64);
        self.0
            .iter()
            .fold(0u64, |acc, &s| (acc << 1) | u64::from(s == 1))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[i8] {
        &self.0
    }

    pub fn flip(&mut self, k: usize) {
        self.0[k] = -self.0[k];
    }

    pub fn flipped(&self) -> SpinConfig {
        SpinConfig(self.0.iter().map(|s| -s).collect())
    }

    pub fn hamming(&self, other: &SpinConfig) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }

    pub fn to_binary(&self) -> BinaryConfig {
        BinaryConfig(self.0.iter().map(|&s| ((s + 1) / 2) as u8).collect())
    }
}

impl TryFrom<Vec<i8>> for SpinConfig {
    type Error = Error;
    fn try_from(values: Vec<i8>) -> Result<Self> {
        SpinConfig::new(values)
    }
}

impl From<SpinConfig> for Vec<i8> {
    fn from(c: SpinConfig) -> Self {
        c.0
    }
}

/// A binary assignment over `{0, 1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryConfig(Vec<u8>);

impl BinaryConfig {
    pub fn new(values: Vec<u8>) -> Result<Self> {
        if let Some(v) = values.iter().find(|&&v| v > 1) {
            return Err(Error::Domain(format!("binary value {v} is not 0/1")));
        }
        Ok(BinaryConfig(values))
    }

    pub fn values(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `s = 2x - 1`.
    pub fn to_spins(&self) -> SpinConfig {
        SpinConfig(self.0.iter().map(|&x| 2 * x as i8 - 1).collect())
    }
}

/// Maps a ±1 vector to its 0/1 counterpart, `x = (s + 1) / 2`.
pub fn spins_to_binary(spins: &[i8]) -> Result<Vec<u8>> {
    Ok(SpinConfig::new(spins.to_vec())?.to_binary().0)
}

/// Maps a 0/1 vector to its ±1 counterpart, `s = 2x - 1`.
pub fn binary_to_spins(bits: &[u8]) -> Result<Vec<i8>> {
    Ok(BinaryConfig::new(bits.to_vec())?.to_spins().0)
}

/// Compressed sparse adjacency of an Ising model with 0-based indices.
#[derive(Debug, Clone)]
pub struct Adjacency {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
}

impl Adjacency {
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[i]..self.offsets[i + 1];
        self.targets[range.clone()]
            .iter()
            .copied()
            .zip(self.weights[range].iter().copied())
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    /// `Σ_j J_ij s_j` over the symmetric coupling matrix.
    pub fn coupling_sum(&self, i: usize, spins: &[i8]) -> f64 {
        self.neighbors(i).map(|(j, w)| w * f64::from(spins[j])).sum()
    }

    /// `Σ_j J_ij x_j` for real-valued `x`.
    pub fn coupling_sum_real(&self, i: usize, x: &[f64]) -> f64 {
        self.neighbors(i).map(|(j, w)| w * x[j]).sum()
    }
}

/// Ising Hamiltonian `H(s) = Σ_{i<j} J_ij s_i s_j + Σ_i h_i s_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsingModel {
    num_spins: usize,
    couplings: BTreeMap<(usize, usize), f64>,
    fields: Vec<f64>,
}

impl IsingModel {
    pub fn new(num_spins: usize) -> Self {
        IsingModel {
            num_spins,
            couplings: BTreeMap::new(),
            fields: vec![0.0; num_spins],
        }
    }

    /// Builds a model from 1-based `(i, j, J_ij)` triples and per-node fields.
    pub fn from_parts(
        num_spins: usize,
        couplings: impl IntoIterator<Item = (usize, usize, f64)>,
        fields: Vec<f64>,
    ) -> Result<Self> {
        if fields.len() != num_spins {
            return Err(Error::Dimension {
                expected: num_spins,
                got: fields.len(),
            });
        }
        let mut model = IsingModel::new(num_spins);
        model.fields = fields;
        for (i, j, v) in couplings {
            model.add_coupling(i, j, v)?;
        }
        Ok(model)
    }

    pub fn num_spins(&self) -> usize {
        self.num_spins
    }

    fn check_node(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.num_spins {
            return Err(Error::Structure(format!(
                "node {i} outside 1..={}",
                self.num_spins
            )));
        }
        Ok(())
    }

    /// Adds `J_ij` for the unordered pair `{i, j}`. Duplicates and
    /// self-loops are rejected.
    pub fn add_coupling(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        self.check_node(i)?;
        self.check_node(j)?;
        if i == j {
            return Err(Error::Structure(format!(
                "self-loop ({i},{i}) must be given as a field"
            )));
        }
        let key = (i.min(j), i.max(j));
        if self.couplings.contains_key(&key) {
            return Err(Error::Structure(format!(
                "duplicate coupling for pair ({}, {})",
                key.0, key.1
            )));
        }
        self.couplings.insert(key, value);
        Ok(())
    }

    pub fn set_field(&mut self, i: usize, value: f64) -> Result<()> {
        self.check_node(i)?;
        self.fields[i - 1] = value;
        Ok(())
    }

    /// Field of 1-based node `i`.
    pub fn field(&self, i: usize) -> f64 {
        self.fields[i - 1]
    }

    pub fn fields(&self) -> &[f64] {
        &self.fields
    }

    pub fn coupling(&self, i: usize, j: usize) -> Option<f64> {
        self.couplings.get(&(i.min(j), i.max(j))).copied()
    }

    /// Couplings as 1-based `(i, j, J_ij)` with `i < j`, lexicographic.
    pub fn couplings(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.couplings.iter().map(|(&(i, j), &v)| (i, j, v))
    }

    pub fn num_couplings(&self) -> usize {
        self.couplings.len()
    }

    /// Replaces coupling values in place, keeping the edge set.
    pub fn map_couplings(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> IsingModel {
        let mut out = self.clone();
        for (&(i, j), v) in out.couplings.iter_mut() {
            *v = f(i, j, *v);
        }
        out
    }

    pub fn adjacency(&self) -> Adjacency {
        let n = self.num_spins;
        let mut lists: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, j, v) in self.couplings() {
            lists[i - 1].push((j - 1, v));
            lists[j - 1].push((i - 1, v));
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        let mut weights = Vec::new();
        offsets.push(0);
        for list in lists {
            for (t, w) in list {
                targets.push(t);
                weights.push(w);
            }
            offsets.push(targets.len());
        }
        Adjacency {
            offsets,
            targets,
            weights,
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.num_spins {
            return Err(Error::Dimension {
                expected: self.num_spins,
                got: len,
            });
        }
        Ok(())
    }

    pub fn energy(&self, config: &SpinConfig) -> Result<f64> {
        self.check_len(config.len())?;
        Ok(self.energy_unchecked(config.values()))
    }

    /// Energy of a raw ±1 slice whose length is known to match.
    pub fn energy_unchecked(&self, s: &[i8]) -> f64 {
        let mut e = 0.0;
        for (&(i, j), &v) in &self.couplings {
            e += v * f64::from(s[i - 1] * s[j - 1]);
        }
        for (h, &si) in self.fields.iter().zip(s) {
            e += h * f64::from(si);
        }
        e
    }

    /// Energy of the configuration with lexicographic index `index`.
    pub fn energy_of_index(&self, index: u64) -> f64 {
        let n = self.num_spins;
        let spin = |i: usize| -> f64 {
            if (index >> (n - i)) & 1 == 1 {
                1.0
            } else {
                -1.0
            }
        };
        let mut e = 0.0;
        for (&(i, j), &v) in &self.couplings {
            e += v * spin(i) * spin(j);
        }
        for (k, h) in self.fields.iter().enumerate() {
            e += h * spin(k + 1);
        }
        e
    }

    /// Energy change from flipping 0-based spin `k`:
    /// `ΔE = -2 s_k (h_k + Σ_j J_kj s_j)`.
    pub fn flip_delta(&self, adjacency: &Adjacency, s: &[i8], k: usize) -> f64 {
        -2.0 * f64::from(s[k]) * (self.fields[k] + adjacency.coupling_sum(k, s))
    }

    /// Standard deviation of the off-diagonal entries of the symmetric
    /// coupling matrix (absent couplings count as zero).
    pub fn coupling_std(&self) -> f64 {
        let n = self.num_spins;
        if n < 2 {
            return 0.0;
        }
        let count = (n * (n - 1)) as f64;
        let sum: f64 = 2.0 * self.couplings.values().sum::<f64>();
        let sum_sq: f64 = 2.0 * self.couplings.values().map(|v| v * v).sum::<f64>();
        let mean = sum / count;
        (sum_sq / count - mean * mean).max(0.0).sqrt()
    }
}

/// QUBO objective `E(x) = Σ_i Q_ii x_i + Σ_{i<j} Q_ij x_i x_j`, stored
/// upper-triangular with 1-based indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuboModel {
    num_vars: usize,
    entries: BTreeMap<(usize, usize), f64>,
}

impl QuboModel {
    pub fn new(num_vars: usize) -> Self {
        QuboModel {
            num_vars,
            entries: BTreeMap::new(),
        }
    }

    /// Inserts `Q_ij` (`i <= j` after ordering). Repeated pairs are an error.
    pub fn insert(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        for k in [i, j] {
            if k == 0 || k > self.num_vars {
                return Err(Error::Structure(format!(
                    "variable {k} outside 1..={}",
                    self.num_vars
                )));
            }
        }
        let key = (i.min(j), i.max(j));
        if self.entries.insert(key, value).is_some() {
            return Err(Error::Structure(format!(
                "duplicate QUBO entry ({}, {})",
                key.0, key.1
            )));
        }
        Ok(())
    }

    /// Folds a full (possibly symmetric) row-major matrix into
    /// upper-triangular storage by adding `Q_ij + Q_ji`.
    pub fn from_full_matrix(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut q = QuboModel::new(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: row.len(),
                });
            }
            for j in i..n {
                let v = if i == j { row[i] } else { row[j] + rows[j][i] };
                if v != 0.0 {
                    q.entries.insert((i + 1, j + 1), v);
                }
            }
        }
        Ok(q)
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries
            .get(&(i.min(j), i.max(j)))
            .copied()
            .unwrap_or(0.0)
    }

    /// Entries as `(i, j, Q_ij)` with `i <= j`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries.iter().map(|(&(i, j), &v)| (i, j, v))
    }

    pub fn energy(&self, x: &BinaryConfig) -> Result<f64> {
        if x.len() != self.num_vars {
            return Err(Error::Dimension {
                expected: self.num_vars,
                got: x.len(),
            });
        }
        let x = x.values();
        Ok(self
            .entries
            .iter()
            .map(|(&(i, j), &v)| v * f64::from(x[i - 1] * x[j - 1]))
            .sum())
    }
}

/// Ising → QUBO: `Q_ij = 4J_ij`, `Q_ii = 2h_i - 2Σ_{j≠i} J_ij`, offset
/// `C = Σ J_ij - Σ h_i` so that `H(s) = E(x(s)) + C`.
pub fn ising_to_qubo(model: &IsingModel) -> (QuboModel, f64) {
    let n = model.num_spins();
    let mut diag: Vec<f64> = model.fields().iter().map(|h| 2.0 * h).collect();
    let mut qubo = QuboModel::new(n);
    let mut offset = 0.0;
    for (i, j, v) in model.couplings() {
        qubo.entries.insert((i, j), 4.0 * v);
        diag[i - 1] -= 2.0 * v;
        diag[j - 1] -= 2.0 * v;
        offset += v;
    }
    for (i, d) in diag.into_iter().enumerate() {
        qubo.entries.insert((i + 1, i + 1), d);
    }
    offset -= model.fields().iter().sum::<f64>();
    (qubo, offset)
}

/// QUBO → Ising: `J_ij = Q_ij/4`, `h_i = Q_ii/2 + ¼Σ_{j≠i} Q_ij`, offset
/// `C = ¼Σ_{i<j} Q_ij + ½Σ_i Q_ii` so that `E(x) = H(s(x)) + C`.
pub fn qubo_to_ising(qubo: &QuboModel) -> (IsingModel, f64) {
    let n = qubo.num_vars();
    let mut model = IsingModel::new(n);
    let mut offset = 0.0;
    let mut diag_half = vec![0.0; n];
    let mut off_quarter = vec![0.0; n];
    for (i, j, v) in qubo.entries() {
        if i == j {
            diag_half[i - 1] = 0.5 * v;
            offset += 0.5 * v;
        } else {
            model.couplings.insert((i, j), 0.25 * v);
            off_quarter[i - 1] += 0.25 * v;
            off_quarter[j - 1] += 0.25 * v;
            offset += 0.25 * v;
        }
    }
    for k in 0..n {
        model.fields[k] = diag_half[k] + off_quarter[k];
    }
    (model, offset)
}

/// Exact Boltzmann distribution over all `2^N` configurations.
#[derive(Debug, Clone)]
pub struct GibbsTable {
    beta: f64,
    num_spins: usize,
    log_partition: f64,
    energies: Vec<f64>,
    probabilities: Vec<f64>,
}

impl GibbsTable {
    pub fn new(model: &IsingModel, beta: f64) -> Result<Self> {
        Self::with_cap(model, beta, GIBBS_ENUMERATION_CAP)
    }

    pub fn with_cap(model: &IsingModel, beta: f64, cap: usize) -> Result<Self> {
        let n = model.num_spins();
        if n > cap {
            return Err(Error::Capacity { size: n, cap });
        }
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::Argument(format!("beta must be finite and >= 0, got {beta}")));
        }
        let energies: Vec<f64> = (0..1u64 << n).map(|k| model.energy_of_index(k)).collect();
        let log_weights: Vec<f64> = energies.iter().map(|e| -beta * e).collect();
        let log_partition = log_sum_exp(&log_weights);
        let probabilities = log_weights
            .iter()
            .map(|lw| (lw - log_partition).exp())
            .collect();
        Ok(GibbsTable {
            beta,
            num_spins: n,
            log_partition,
            energies,
            probabilities,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn num_spins(&self) -> usize {
        self.num_spins
    }

    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    /// Probabilities indexed by lexicographic configuration index.
    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn probability(&self, config: &SpinConfig) -> f64 {
        self.probabilities[config.index() as usize]
    }

    /// Configuration of maximum probability (lowest index on ties).
    pub fn most_probable(&self) -> SpinConfig {
        let mut best = 0;
        for (k, &p) in self.probabilities.iter().enumerate() {
            if p > self.probabilities[best] {
                best = k;
            }
        }
        SpinConfig::from_index(best as u64, self.num_spins)
    }

    /// Draws `count` i.i.d. configurations by inverse-CDF sampling.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<SpinConfig> {
        let mut cdf = Vec::with_capacity(self.probabilities.len());
        let mut acc = 0.0;
        for p in &self.probabilities {
            acc += p;
            cdf.push(acc);
        }
        let total = acc;
        (0..count)
            .map(|_| {
                let u: f64 = rng.random::<f64>() * total;
                let k = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
                SpinConfig::from_index(k as u64, self.num_spins)
            })
            .collect()
    }
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
