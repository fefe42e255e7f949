//! Closed-system transverse-field annealing, simulated exactly on the full
//! `2^N`-dimensional state space with fourth-order Magnus steps.
//!
//! `H(s) = -A(s)/2 Σ σˣ_i + B(s)/2 (Σ J_ij σᶻ_i σᶻ_j + Σ h_i σᶻ_i)`, with
//! `ħ = 1`. Basis states use the configuration index of
//! [`SpinConfig::index`]; `σᶻ_i` acts on it with eigenvalue `s_i`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{IsingModel, SpinConfig};
use crate::rng;

/// Largest supported number of spins (dimension 4096).
pub const DYNAMICS_CAP: usize = 12;

/// Largest tolerated deviation of a distribution's total from 1.
const NORMALIZATION_TOL: f64 = 1e-6;

/// Annealing envelopes `A(s)`, `B(s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Envelope {
    /// `A = 1 - s`, `B = s`.
    Linear,
    /// Piecewise-linear table; held constant outside its range.
    Tabulated { s: Vec<f64>, a: Vec<f64>, b: Vec<f64> },
}

impl Envelope {
    pub fn tabulated(s: Vec<f64>, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if s.is_empty() || s.len() != a.len() || s.len() != b.len() {
            return Err(Error::Argument("envelope columns must be nonempty and equally long".into()));
        }
        if s.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Argument("envelope s column must be strictly increasing".into()));
        }
        if s.iter().chain(&a).chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::Domain("envelope values must be finite".into()));
        }
        Ok(Envelope::Tabulated { s, a, b })
    }

    /// Parses `s,A,B` rows; a non-numeric first row is taken as a header.
    pub fn from_csv(text: &str) -> Result<Self> {
        let (mut s, mut a, mut b) = (Vec::new(), Vec::new(), Vec::new());
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed: std::result::Result<Vec<f64>, _> = cols.iter().map(|c| c.parse::<f64>()).collect();
            match parsed {
                Ok(v) if v.len() == 3 => {
                    s.push(v[0]);
                    a.push(v[1]);
                    b.push(v[2]);
                }
                Err(_) if s.is_empty() && n == 0 => continue,
                _ => {
                    return Err(Error::Parse {
                        line: n + 1,
                        message: format!("expected three numbers `s,A,B`, got `{line}`"),
                    })
                }
            }
        }
        Self::tabulated(s, a, b)
    }

    pub fn at(&self, x: f64) -> (f64, f64) {
        match self {
            Envelope::Linear => (1.0 - x, x),
            Envelope::Tabulated { s, a, b } => {
                let last = s.len() - 1;
                if x <= s[0] {
                    return (a[0], b[0]);
                }
                if x >= s[last] {
                    return (a[last], b[last]);
                }
                let k = s.partition_point(|&v| v <= x) - 1;
                let w = (x - s[k]) / (s[k + 1] - s[k]);
                (a[k] + w * (a[k + 1] - a[k]), b[k] + w * (b[k + 1] - b[k]))
            }
        }
    }
}

/// Annealing parameter `s(t)` over `[0, τ]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchedulePath {
    /// `0 → 1`.
    Forward,
    /// `1 → s_a` over the first half, back to 1 over the second.
    Reverse { s_a: f64 },
    /// `1 → s_a` over the first third, held, back to 1 over the last third.
    ReverseWithPause { s_a: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub envelope: Envelope,
    pub path: SchedulePath,
    pub tau: f64,
}

impl AnnealSchedule {
    pub fn new(envelope: Envelope, path: SchedulePath, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Argument(format!("anneal time {tau} must be positive")));
        }
        if let SchedulePath::Reverse { s_a } | SchedulePath::ReverseWithPause { s_a } = path {
            if !(0.0..=1.0).contains(&s_a) {
                return Err(Error::Argument(format!("turning point {s_a} not in [0, 1]")));
            }
        }
        Ok(AnnealSchedule { envelope, path, tau })
    }

    pub fn forward(tau: f64) -> Result<Self> {
        Self::new(Envelope::Linear, SchedulePath::Forward, tau)
    }

    pub fn s(&self, t: f64) -> f64 {
        let u = (t / self.tau).clamp(0.0, 1.0);
        match self.path {
            SchedulePath::Forward => u,
            SchedulePath::Reverse { s_a } => {
                if u <= 0.5 {
                    s_a + (1.0 - s_a) * (1.0 - 2.0 * u)
                } else {
                    s_a + (1.0 - s_a) * (2.0 * u - 1.0)
                }
            }
            SchedulePath::ReverseWithPause { s_a } => {
                let third = self.tau / 3.0;
                if t <= third {
                    s_a + (1.0 - s_a) * (1.0 - t / third)
                } else if t <= 2.0 * third {
                    s_a
                } else {
                    s_a + (1.0 - s_a) * ((t - 2.0 * third) / third).min(1.0)
                }
            }
        }
    }

    /// `(A, B)` at time `t`.
    pub fn coefficients(&self, t: f64) -> (f64, f64) {
        self.envelope.at(self.s(t))
    }
}

/// Pure state over the computational basis.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    amplitudes: DVector<Complex64>,
}

impl QuantumState {
    /// `|+⟩^⊗N`.
    pub fn plus(n: usize) -> Result<Self> {
        check_cap(n)?;
        let dim = 1usize << n;
        let a = Complex64::new(1.0 / (dim as f64).sqrt(), 0.0);
        Ok(QuantumState {
            amplitudes: DVector::from_element(dim, a),
        })
    }

    pub fn basis(config: &SpinConfig) -> Result<Self> {
        check_cap(config.len())?;
        let mut v = DVector::zeros(1usize << config.len());
        v[config.index() as usize] = Complex64::new(1.0, 0.0);
        Ok(QuantumState { amplitudes: v })
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn num_spins(&self) -> usize {
        self.amplitudes.len().trailing_zeros() as usize
    }

    /// `⟨ψ|H|ψ⟩`.
    pub fn expectation(&self, h: &DMatrix<Complex64>) -> f64 {
        self.amplitudes.dotc(&(h * &self.amplitudes)).re
    }
}

fn check_cap(n: usize) -> Result<()> {
    if n > DYNAMICS_CAP {
        return Err(Error::Capacity {
            size: n,
            cap: DYNAMICS_CAP,
        });
    }
    Ok(())
}

/// The two fixed operators of the family `H = -A/2·X + B/2·D`.
struct Operators {
    /// `Σ σˣ`.
    x: DMatrix<Complex64>,
    /// Classical energies on the diagonal.
    d: Vec<f64>,
    /// `[X, D]`.
    xd: DMatrix<Complex64>,
}

impl Operators {
    fn new(model: &IsingModel) -> Result<Self> {
        let n = model.num_spins();
        check_cap(n)?;
        let dim = 1usize << n;
        let mut x = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for k in 0..n {
                x[(i ^ (1 << k), i)] = Complex64::new(1.0, 0.0);
            }
        }
        let d: Vec<f64> = (0..dim as u64).map(|i| model.energy_of_index(i)).collect();
        // [X, D]_{ij} = X_ij (d_j - d_i).
        let xd = DMatrix::from_fn(dim, dim, |i, j| x[(i, j)] * (d[j] - d[i]));
        Ok(Operators { x, d, xd })
    }

    fn hamiltonian(&self, a: f64, b: f64) -> DMatrix<Complex64> {
        let mut h = &self.x * Complex64::new(-0.5 * a, 0.0);
        for (i, &e) in self.d.iter().enumerate() {
            h[(i, i)] += Complex64::new(0.5 * b * e, 0.0);
        }
        h
    }
}

/// Dense `H` for envelope values `A`, `B`.
pub fn build_hamiltonian(model: &IsingModel, a: f64, b: f64) -> Result<DMatrix<Complex64>> {
    Ok(Operators::new(model)?.hamiltonian(a, b))
}

/// Dense `H(s)` under the schedule's envelope.
pub fn hamiltonian_at(model: &IsingModel, envelope: &Envelope, s: f64) -> Result<DMatrix<Complex64>> {
    let (a, b) = envelope.at(s);
    build_hamiltonian(model, a, b)
}

/// `exp(-iK)` for Hermitian `K`.
fn unitary_exp(k: DMatrix<Complex64>) -> DMatrix<Complex64> {
    let eig = SymmetricEigen::new(k);
    let v = &eig.eigenvectors;
    let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| Complex64::new(0.0, -l).exp()));
    v * phases * v.adjoint()
}

/// One fourth-order Magnus step over `[t, t + dt]` with two-point Gauss
/// nodes: `Ω = -i dt/2 (H₁ + H₂) - (√3 dt²/12)[H₂, H₁]`, applied as
/// `exp(Ω) = exp(-iK)` with Hermitian `K = iΩ`.
fn magnus_step(ops: &Operators, schedule: &AnnealSchedule, t: f64, dt: f64) -> DMatrix<Complex64> {
    let c = 3f64.sqrt() / 6.0;
    let (a1, b1) = schedule.coefficients(t + (0.5 - c) * dt);
    let (a2, b2) = schedule.coefficients(t + (0.5 + c) * dt);
    let mut k = ops.hamiltonian(0.5 * (a1 + a2), 0.5 * (b1 + b2)) * Complex64::new(dt, 0.0);
    // [H₂, H₁] = (a₁b₂ - a₂b₁)/4 · [X, D].
    let w = (a1 * b2 - a2 * b1) / 4.0;
    if w != 0.0 {
        let coef = Complex64::new(0.0, -3f64.sqrt() * dt * dt / 12.0 * w);
        k += &ops.xd * coef;
    }
    unitary_exp(k)
}

fn evolve_with(
    ops: &Operators,
    schedule: &AnnealSchedule,
    state: &QuantumState,
    t0: f64,
    t1: f64,
    steps: usize,
) -> Result<QuantumState> {
    if steps == 0 {
        return Err(Error::Argument("steps must be >= 1".into()));
    }
    if state.amplitudes.len() != ops.d.len() {
        return Err(Error::Dimension {
            expected: ops.d.len(),
            got: state.amplitudes.len(),
        });
    }
    let dt = (t1 - t0) / steps as f64;
    let mut psi = state.amplitudes.clone();
    for k in 0..steps {
        let u = magnus_step(ops, schedule, t0 + k as f64 * dt, dt);
        psi = u * psi;
    }
    Ok(QuantumState { amplitudes: psi })
}

/// Propagates `state` from `t0` to `t1` in `steps` equal Magnus steps.
pub fn evolve_interval(
    model: &IsingModel,
    schedule: &AnnealSchedule,
    state: &QuantumState,
    t0: f64,
    t1: f64,
    steps: usize,
) -> Result<QuantumState> {
    evolve_with(&Operators::new(model)?, schedule, state, t0, t1, steps)
}

/// Full anneal over `[0, τ]` from `|+⟩^⊗N`.
pub fn evolve(model: &IsingModel, schedule: &AnnealSchedule, steps: usize) -> Result<QuantumState> {
    let ops = Operators::new(model)?;
    let start = QuantumState::plus(model.num_spins())?;
    evolve_with(&ops, schedule, &start, 0.0, schedule.tau, steps)
}

/// Probabilities over basis configurations, indexed by
/// [`SpinConfig::index`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDistribution {
    pub probabilities: Vec<f64>,
}

impl OutcomeDistribution {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        let d = OutcomeDistribution { probabilities };
        d.check()?;
        Ok(d)
    }

    fn check(&self) -> Result<()> {
        if self.probabilities.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::Argument("probabilities must be finite and non-negative".into()));
        }
        let total: f64 = self.probabilities.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Argument(format!("distribution sums to {total}, not 1")));
        }
        Ok(())
    }

    pub fn probability(&self, config: &SpinConfig) -> f64 {
        self.probabilities
            .get(config.index() as usize)
            .copied()
            .unwrap_or(0.0)
    }
}

pub fn measure(state: &QuantumState) -> OutcomeDistribution {
    OutcomeDistribution {
        probabilities: state.amplitudes.iter().map(|a| a.norm_sqr()).collect(),
    }
}

/// Total probability of the given ground states.
pub fn ground_state_probability(dist: &OutcomeDistribution, ground: &[SpinConfig]) -> f64 {
    let mut idx: Vec<u64> = ground.iter().map(SpinConfig::index).collect();
    idx.sort_unstable();
    idx.dedup();
    idx.into_iter()
        .filter_map(|i| dist.probabilities.get(i as usize))
        .sum()
}

fn check_pair(p: &OutcomeDistribution, q: &OutcomeDistribution) -> Result<()> {
    if p.probabilities.len() != q.probabilities.len() {
        return Err(Error::Dimension {
            expected: p.probabilities.len(),
            got: q.probabilities.len(),
        });
    }
    p.check()?;
    q.check()
}

/// `½ Σ |P - Q|`.
pub fn tvd(p: &OutcomeDistribution, q: &OutcomeDistribution) -> Result<f64> {
    check_pair(p, q)?;
    Ok(0.5
        * p.probabilities
            .iter()
            .zip(&q.probabilities)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>())
}

/// `(Σ √(P Q))²`.
pub fn classical_fidelity(p: &OutcomeDistribution, q: &OutcomeDistribution) -> Result<f64> {
    check_pair(p, q)?;
    if p == q {
        return Ok(1.0);
    }
    let bc: f64 = p
        .probabilities
        .iter()
        .zip(&q.probabilities)
        .map(|(a, b)| (a * b).sqrt())
        .sum();
    Ok((bc * bc).min(1.0))
}

/// Average outcome distribution over `draws` coupling perturbations
/// `J_ij + δ`, `δ ~ N(0, σ)`; fields are left untouched. Draw `m` uses the
/// replica stream `m` of `seed`.
pub fn ice_ensemble(
    model: &IsingModel,
    sigma: f64,
    draws: usize,
    schedule: &AnnealSchedule,
    steps: usize,
    seed: u64,
) -> Result<OutcomeDistribution> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Argument(format!("sigma {sigma} must be finite and >= 0")));
    }
    if draws == 0 {
        return Err(Error::Argument("draws must be >= 1".into()));
    }
    check_cap(model.num_spins())?;
    if sigma == 0.0 {
        // Every draw is the clean instance.
        return Ok(measure(&evolve(model, schedule, steps)?));
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Argument(e.to_string()))?;
    let dists: Vec<Vec<f64>> = (0..draws)
        .into_par_iter()
        .map(|m| {
            let mut rng = rng::replica_stream(seed, m);
            let noisy = model.map_couplings(|_, _, j| j + normal.sample(&mut rng));
            Ok(measure(&evolve(&noisy, schedule, steps)?).probabilities)
        })
        .collect::<Result<_>>()?;
    let mut sum = vec![0.0; dists[0].len()];
    for d in &dists {
        for (s, p) in sum.iter_mut().zip(d) {
            *s += p;
        }
    }
    let total: f64 = sum.iter().sum();
    sum.iter_mut().for_each(|s| *s /= total);
    OutcomeDistribution::new(sum)
}
