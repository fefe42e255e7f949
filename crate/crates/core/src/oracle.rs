//! Exhaustive ground-state search and exact conditionals.
//!
//! Configurations are visited in binary-reflected Gray-code order: step
//! `k` flips the spin addressed by `trailing_zeros(k)`, where Gray bit `t`
//! maps to spin `N - 1 - t` (0-based) so that the bit pattern coincides
//! with the lexicographic configuration index. Each flip costs
//! `O(degree)` through cached local fields.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Adjacency, IsingModel, SpinConfig};

/// Default cap for single-stream enumeration.
pub const BRUTE_FORCE_CAP: usize = 24;
/// Cap for prefix-sharded enumeration.
pub const SHARDED_CAP: usize = 36;
/// Default spectrum length.
pub const DEFAULT_SPECTRUM_SIZE: usize = 100;
/// Energies closer than this are reported as one degenerate level.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// One configuration of a spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumState {
    pub config: SpinConfig,
    pub energy: f64,
}

/// A group of configurations sharing one energy.
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub energy: f64,
    pub configs: Vec<SpinConfig>,
}

impl Level {
    pub fn degeneracy(&self) -> usize {
        self.configs.len()
    }
}

/// The `k` lowest configurations, ascending by energy, ties ordered
/// lexicographically with `-1 < +1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub states: Vec<SpectrumState>,
}

impl Spectrum {
    pub fn ground_energy(&self) -> f64 {
        self.states[0].energy
    }

    pub fn ground_state(&self) -> &SpinConfig {
        &self.states[0].config
    }

    pub fn energies(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.energy).collect()
    }

    /// Consecutive states grouped by energy.
    pub fn levels(&self) -> Vec<Level> {
        let mut levels: Vec<Level> = Vec::new();
        for s in &self.states {
            match levels.last_mut() {
                Some(l) if (s.energy - l.energy).abs() <= DEGENERACY_TOL => {
                    l.configs.push(s.config.clone())
                }
                _ => levels.push(Level {
                    energy: s.energy,
                    configs: vec![s.config.clone()],
                }),
            }
        }
        levels
    }

    /// Configurations of the lowest level.
    pub fn ground_states(&self) -> Vec<SpinConfig> {
        self.levels()
            .into_iter()
            .next()
            .map(|l| l.configs)
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    energy: f64,
    index: u64,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.energy
            .total_cmp(&other.energy)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Bounded max-heap keeping the `k` smallest candidates.
struct TopK {
    k: usize,
    heap: BinaryHeap<Candidate>,
}

impl TopK {
    fn new(k: usize) -> Self {
        TopK {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    #[inline]
    fn offer(&mut self, energy: f64, index: u64) {
        let c = Candidate { energy, index };
        if self.heap.len() < self.k {
            self.heap.push(c);
        } else if let Some(worst) = self.heap.peek() {
            if c < *worst {
                self.heap.pop();
                self.heap.push(c);
            }
        }
    }

    fn merge(mut self, other: TopK) -> TopK {
        for c in other.heap {
            self.offer(c.energy, c.index);
        }
        self
    }

    fn into_spectrum(self, model: &IsingModel) -> Spectrum {
        let n = model.num_spins();
        let mut states: Vec<SpectrumState> = self
            .heap
            .into_iter()
            .map(|c| {
                let config = SpinConfig::from_index(c.index, n);
                // Re-evaluate so reported energies carry no incremental drift.
                let energy = model.energy_unchecked(config.values());
                SpectrumState { config, energy }
            })
            .collect();
        states.sort_by(|a, b| {
            a.energy
                .total_cmp(&b.energy)
                .then_with(|| a.config.cmp(&b.config))
        });
        Spectrum { states }
    }
}

/// Gray-code walk over the spins listed in `free` (entry `t` is flipped
/// by Gray bit `t`), starting from `spins`. `visit` receives the running
/// lexicographic index and the incrementally updated energy.
///
/// The spin behind Gray bit 0 is never flipped physically: at every step
/// both of its values are reported, the flipped one through its local
/// field. This halves the number of neighbour updates.
fn gray_walk(
    model: &IsingModel,
    adjacency: &Adjacency,
    mut spins: Vec<f64>,
    free: &[usize],
    mut visit: impl FnMut(u64, f64),
) {
    let n = model.num_spins();
    let as_i8: Vec<i8> = spins.iter().map(|&s| s as i8).collect();
    let mut index = SpinConfig::new(as_i8.clone()).map(|c| c.index()).unwrap_or(0);
    let mut energy = model.energy_unchecked(&as_i8);
    let mut local: Vec<f64> = (0..n)
        .map(|i| model.fields()[i] + adjacency.coupling_sum(i, &as_i8))
        .collect();
    let masks: Vec<u64> = free.iter().map(|&k| 1u64 << (n - 1 - k)).collect();

    let Some((&low, outer)) = free.split_first() else {
        visit(index, energy);
        return;
    };
    let low_mask = masks[0];
    let low_value = spins[low];
    let mut emit = |index: u64, energy: f64, low_field: f64| {
        visit(index, energy);
        visit(index ^ low_mask, energy - 2.0 * low_value * low_field);
    };
    emit(index, energy, local[low]);
    let steps: u64 = 1u64 << outer.len();
    for step in 1..steps {
        let t = step.trailing_zeros() as usize;
        let k = outer[t];
        let old = spins[k];
        energy -= 2.0 * old * local[k];
        spins[k] = -old;
        let delta = -2.0 * old;
        for (j, w) in adjacency.neighbors(k) {
            local[j] += w * delta;
        }
        index ^= masks[t + 1];
        emit(index, energy, local[low]);
    }
}

fn check_cap(n: usize, cap: usize) -> Result<()> {
    if n > cap {
        return Err(Error::Capacity { size: n, cap });
    }
    Ok(())
}

/// Streams every configuration as `(index, energy)`, each exactly once.
pub fn for_each_state(model: &IsingModel, visit: impl FnMut(u64, f64)) -> Result<()> {
    let n = model.num_spins();
    check_cap(n, BRUTE_FORCE_CAP)?;
    let adjacency = model.adjacency();
    let free: Vec<usize> = (0..n).rev().collect();
    gray_walk(model, &adjacency, vec![-1.0; n], &free, visit);
    Ok(())
}

/// The `k` lowest configurations by exhaustive Gray-code enumeration.
pub fn brute_force(model: &IsingModel, k: usize) -> Result<Spectrum> {
    brute_force_with_cap(model, k, BRUTE_FORCE_CAP)
}

pub fn brute_force_with_cap(model: &IsingModel, k: usize, cap: usize) -> Result<Spectrum> {
    let n = model.num_spins();
    check_cap(n, cap)?;
    if k == 0 {
        return Err(Error::Argument("spectrum size must be at least 1".into()));
    }
    let adjacency = model.adjacency();
    let free: Vec<usize> = (0..n).rev().collect();
    let mut top = TopK::new(k);
    gray_walk(model, &adjacency, vec![-1.0; n], &free, |idx, e| top.offer(e, idx));
    Ok(top.into_spectrum(model))
}

/// Exhaustive enumeration split into `2^prefix_bits` shards by fixing the
/// leading spins; each shard runs its own Gray code and the shards are
/// merged by energy.
///
/// When every field is zero the spectrum is closed under global flip, so
/// only configurations with spin 1 at `-1` are enumerated and partners are
/// added afterwards.
pub fn brute_force_sharded(model: &IsingModel, k: usize, prefix_bits: usize) -> Result<Spectrum> {
    let n = model.num_spins();
    check_cap(n, SHARDED_CAP)?;
    if k == 0 {
        return Err(Error::Argument("spectrum size must be at least 1".into()));
    }
    let symmetric = n > 1 && model.fields().iter().all(|&h| h == 0.0);
    let pinned = usize::from(symmetric);
    let prefix_bits = prefix_bits.min(n - pinned);
    let adjacency = model.adjacency();
    let lead = pinned + prefix_bits;
    let free: Vec<usize> = (lead..n).rev().collect();
    let merged = (0..1u64 << prefix_bits)
        .into_par_iter()
        .map(|shard| {
            let mut spins = vec![-1.0; n];
            for b in 0..prefix_bits {
                if (shard >> (prefix_bits - 1 - b)) & 1 == 1 {
                    spins[pinned + b] = 1.0;
                }
            }
            let mut top = TopK::new(k);
            gray_walk(model, &adjacency, spins, &free, |idx, e| top.offer(e, idx));
            top
        })
        .reduce(|| TopK::new(k), TopK::merge);
    if !symmetric {
        return Ok(merged.into_spectrum(model));
    }
    let all_ones = (1u64 << n) - 1;
    let mut both = TopK::new(k);
    for c in merged.heap {
        both.offer(c.energy, c.index);
        both.offer(c.energy, c.index ^ all_ones);
    }
    Ok(both.into_spectrum(model))
}

/// Exact `p(s_target | fixed)` as `[p(-1), p(+1)]`, by summing Boltzmann
/// weights over every completion of the unfixed spins.
///
/// `fixed` has one entry per spin (0-based); `target` is a 1-based node id.
pub fn exact_conditional(
    model: &IsingModel,
    beta: f64,
    fixed: &[Option<i8>],
    target: usize,
) -> Result<[f64; 2]> {
    let n = model.num_spins();
    check_cap(n, BRUTE_FORCE_CAP)?;
    if fixed.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: fixed.len(),
        });
    }
    if target == 0 || target > n {
        return Err(Error::Argument(format!("target {target} outside 1..={n}")));
    }
    let t = target - 1;
    if fixed[t].is_some() {
        return Err(Error::Argument(format!("target spin {target} is already fixed")));
    }
    if let Some(v) = fixed.iter().flatten().find(|&&v| v != 1 && v != -1) {
        return Err(Error::Domain(format!("fixed value {v} is not ±1")));
    }
    let adjacency = model.adjacency();
    let free: Vec<usize> = (0..n).rev().filter(|&i| i != t && fixed[i].is_none()).collect();
    let mut log_weights = [0.0; 2];
    for (slot, value) in [-1.0, 1.0].into_iter().enumerate() {
        let spins: Vec<f64> = (0..n)
            .map(|i| match fixed[i] {
                Some(v) => f64::from(v),
                None if i == t => value,
                None => -1.0,
            })
            .collect();
        let mut acc = StreamingLogSumExp::default();
        gray_walk(model, &adjacency, spins, &free, |_, e| acc.push(-beta * e));
        log_weights[slot] = acc.value();
    }
    let up = 1.0 / (1.0 + (log_weights[0] - log_weights[1]).exp());
    let down = 1.0 / (1.0 + (log_weights[1] - log_weights[0]).exp());
    Ok([down, up])
}

/// Running `ln Σ exp(x)` with rescaling on new maxima.
#[derive(Debug, Clone, Copy)]
pub struct StreamingLogSumExp {
    max: f64,
    sum: f64,
}

impl Default for StreamingLogSumExp {
    fn default() -> Self {
        StreamingLogSumExp {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }
}

impl StreamingLogSumExp {
    pub fn push(&mut self, x: f64) {
        if x <= self.max {
            self.sum += (x - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    pub fn value(&self) -> f64 {
        self.max + self.sum.ln()
    }
}
