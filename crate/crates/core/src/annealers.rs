//! Stochastic heuristics returning [`SampleSet`]s: simulated annealing,
//! parallel annealing, discrete simulated bifurcation, and a greedy
//! steepest-descent post-processor.
//!
//! Replica `r` of a run seeded with `seed` draws from
//! [`rng::replica_stream`]`(seed, r)`, so results do not depend on how
//! replicas are scheduled across threads.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Adjacency, IsingModel, SpinConfig};
use crate::rng::{self, StreamRng};

/// One returned configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub spins: SpinConfig,
    pub energy: f64,
    pub replica: usize,
}

/// Configurations produced by one solver run, with its wall-clock time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub solver: String,
    pub seed: u64,
    /// Wall-clock seconds of the whole run.
    pub run_time: f64,
    pub samples: Vec<Sample>,
}

impl SampleSet {
    pub fn best(&self) -> Option<&Sample> {
        self.samples
            .iter()
            .min_by(|a, b| a.energy.total_cmp(&b.energy))
    }

    pub fn best_energy(&self) -> f64 {
        self.best().map(|s| s.energy).unwrap_or(f64::INFINITY)
    }

    /// Checks every stored energy against a fresh evaluation.
    pub fn verify(&self, model: &IsingModel, tol: f64) -> Result<()> {
        for s in &self.samples {
            let e = model.energy(&s.spins)?;
            if (e - s.energy).abs() > tol {
                return Err(Error::Inconsistent(format!(
                    "replica {} reports energy {} but evaluates to {e}",
                    s.replica, s.energy
                )));
            }
        }
        Ok(())
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    // Clock granularity can report zero for tiny runs.
    (out, start.elapsed().as_secs_f64().max(1e-9))
}

fn run_replicas(
    solver: &str,
    seed: u64,
    replicas: usize,
    model: &IsingModel,
    one: impl Fn(usize, &mut StreamRng) -> SpinConfig + Sync,
) -> SampleSet {
    let (configs, run_time) = timed(|| {
        (0..replicas)
            .into_par_iter()
            .map(|r| {
                let mut rng = rng::replica_stream(seed, r);
                one(r, &mut rng)
            })
            .collect::<Vec<_>>()
    });
    let samples = configs
        .into_iter()
        .enumerate()
        .map(|(replica, spins)| {
            let energy = model.energy_unchecked(spins.values());
            Sample {
                spins,
                energy,
                replica,
            }
        })
        .collect();
    SampleSet {
        solver: solver.to_string(),
        seed,
        run_time,
        samples,
    }
}

fn random_spins(n: usize, rng: &mut StreamRng) -> Vec<i8> {
    (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect()
}

/// `sign` with `sign(0) = +1`.
#[inline]
pub fn sign(x: f64) -> i8 {
    if x < 0.0 {
        -1
    } else {
        1
    }
}

#[inline]
pub fn clip(x: f64, lo: f64, hi: f64) -> f64 {
    x.clamp(lo, hi)
}

/// Metropolis acceptance: 1 for non-positive `ΔE`, `exp(-βΔE)` otherwise.
pub fn metropolis_acceptance(beta: f64, delta_e: f64) -> f64 {
    if delta_e <= 0.0 {
        1.0
    } else if beta.is_infinite() {
        0.0
    } else {
        (-beta * delta_e).exp()
    }
}

/// Single-spin-flip Metropolis chain with cached local fields.
#[derive(Debug, Clone)]
pub struct MetropolisChain<'a> {
    model: &'a IsingModel,
    adjacency: Adjacency,
    spins: Vec<i8>,
    local: Vec<f64>,
    energy: f64,
}

impl<'a> MetropolisChain<'a> {
    pub fn new(model: &'a IsingModel, start: SpinConfig) -> Result<Self> {
        if start.len() != model.num_spins() {
            return Err(Error::Dimension {
                expected: model.num_spins(),
                got: start.len(),
            });
        }
        let adjacency = model.adjacency();
        let spins: Vec<i8> = start.values().to_vec();
        let local = (0..spins.len())
            .map(|i| model.fields()[i] + adjacency.coupling_sum(i, &spins))
            .collect();
        let energy = model.energy_unchecked(&spins);
        Ok(MetropolisChain {
            model,
            adjacency,
            spins,
            local,
            energy,
        })
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    fn flip(&mut self, k: usize) {
        let old = f64::from(self.spins[k]);
        self.energy -= 2.0 * old * self.local[k];
        self.spins[k] = -self.spins[k];
        for (j, w) in self.adjacency.neighbors(k) {
            self.local[j] -= 2.0 * w * old;
        }
    }

    /// Proposes a flip of a uniformly chosen spin; returns whether it was
    /// accepted.
    pub fn step<R: Rng>(&mut self, beta: f64, rng: &mut R) -> bool {
        let n = self.spins.len();
        if n == 0 {
            return false;
        }
        let k = rng.random_range(0..n);
        let delta = -2.0 * f64::from(self.spins[k]) * self.local[k];
        let accept = delta <= 0.0 || rng.random::<f64>() < metropolis_acceptance(beta, delta);
        if accept {
            self.flip(k);
        }
        accept
    }

    /// `N` proposals.
    pub fn sweep<R: Rng>(&mut self, beta: f64, rng: &mut R) {
        for _ in 0..self.spins.len() {
            self.step(beta, rng);
        }
    }

    pub fn config(&self) -> SpinConfig {
        SpinConfig::new(self.spins.clone()).expect("chain holds ±1 spins")
    }

    pub fn model(&self) -> &'a IsingModel {
        self.model
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TemperatureSchedule {
    /// `T_{k+1} = α T_k`.
    Geometric { alpha: f64 },
    /// `T_k = T_0 (1 - k/K)`.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaParams {
    pub initial_temperature: f64,
    pub temperature_steps: usize,
    pub sweeps_per_temperature: usize,
    pub schedule: TemperatureSchedule,
    pub replicas: usize,
}

impl Default for SaParams {
    fn default() -> Self {
        SaParams {
            initial_temperature: 3.0,
            temperature_steps: 200,
            sweeps_per_temperature: 4,
            schedule: TemperatureSchedule::Geometric { alpha: 0.97 },
            replicas: 16,
        }
    }
}

impl SaParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_temperature > 0.0) {
            return Err(Error::Argument("initial temperature must be > 0".into()));
        }
        if let TemperatureSchedule::Geometric { alpha } = self.schedule {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::Argument(format!("cooling factor {alpha} not in (0, 1)")));
            }
        }
        if self.temperature_steps == 0 || self.sweeps_per_temperature == 0 || self.replicas == 0 {
            return Err(Error::Argument("steps, sweeps and replicas must be >= 1".into()));
        }
        Ok(())
    }

    fn temperature(&self, k: usize) -> f64 {
        match self.schedule {
            TemperatureSchedule::Geometric { alpha } => {
                self.initial_temperature * alpha.powi(k as i32)
            }
            TemperatureSchedule::Linear => {
                self.initial_temperature * (1.0 - k as f64 / self.temperature_steps as f64)
            }
        }
    }
}

/// Simulated annealing; each replica returns its best-seen configuration.
pub fn simulated_annealing(model: &IsingModel, params: &SaParams, seed: u64) -> Result<SampleSet> {
    params.validate()?;
    let n = model.num_spins();
    Ok(run_replicas("sa", seed, params.replicas, model, |_, rng| {
        let start = SpinConfig::new(random_spins(n, rng)).expect("±1");
        let mut chain = MetropolisChain::new(model, start).expect("length matches");
        let mut best_energy = chain.energy();
        let mut best = chain.spins().to_vec();
        for k in 0..params.temperature_steps {
            let beta = 1.0 / params.temperature(k);
            for _ in 0..params.sweeps_per_temperature * n {
                if chain.step(beta, rng) && chain.energy() < best_energy - 1e-12 {
                    best_energy = chain.energy();
                    best.copy_from_slice(chain.spins());
                }
            }
        }
        SpinConfig::new(best).expect("±1")
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PaParams {
    pub step_size: f64,
    /// Momentum factor; `1 - step_size` when absent.
    pub momentum: Option<f64>,
    pub steps: usize,
    pub trajectories: usize,
    /// `λ(t)` falls linearly from this value to 0 over the run.
    pub lambda_initial: f64,
}

impl Default for PaParams {
    fn default() -> Self {
        PaParams {
            step_size: 0.05,
            momentum: None,
            steps: 1000,
            trajectories: 32,
            lambda_initial: 3.0,
        }
    }
}

impl PaParams {
    pub fn momentum(&self) -> f64 {
        self.momentum.unwrap_or(1.0 - self.step_size)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size <= 1.0) {
            return Err(Error::Argument(format!("step size {} not in (0, 1]", self.step_size)));
        }
        let m = self.momentum();
        if !(0.0..1.0).contains(&m) {
            return Err(Error::Argument(format!("momentum {m} not in [0, 1)")));
        }
        if self.steps == 0 || self.trajectories == 0 {
            return Err(Error::Argument("steps and trajectories must be >= 1".into()));
        }
        if !(self.lambda_initial >= 0.0) {
            return Err(Error::Argument("initial lambda must be >= 0".into()));
        }
        Ok(())
    }

    fn lambda(&self, t: usize) -> f64 {
        if self.steps <= 1 {
            return 0.0;
        }
        self.lambda_initial * (1.0 - t as f64 / (self.steps - 1) as f64)
    }
}

/// Analog state of one parallel-annealing trajectory.
#[derive(Debug, Clone)]
pub struct PaState {
    pub x: Vec<f64>,
    pub momentum: Vec<f64>,
    pub spins: Vec<i8>,
}

impl PaState {
    pub fn new(spins: Vec<i8>) -> Self {
        let n = spins.len();
        PaState {
            x: vec![0.0; n],
            momentum: vec![0.0; n],
            spins,
        }
    }

    /// One update: gradient `(J + Jᵀ)s + h + λx`, momentum step, clipping,
    /// and re-binarization.
    pub fn step(&mut self, model: &IsingModel, adjacency: &Adjacency, params: &PaParams, lambda: f64) {
        let beta = params.momentum();
        let n = self.x.len();
        for i in 0..n {
            let grad = adjacency.coupling_sum(i, &self.spins) + model.fields()[i] + lambda * self.x[i];
            self.momentum[i] = clip(beta * self.momentum[i] - params.step_size * grad, -1.0, 1.0);
        }
        for i in 0..n {
            self.x[i] = clip(self.x[i] + self.momentum[i], -1.0, 1.0);
            self.spins[i] = sign(self.x[i]);
        }
    }
}

/// Parallel annealing; each trajectory returns its best-seen configuration.
pub fn parallel_annealing(model: &IsingModel, params: &PaParams, seed: u64) -> Result<SampleSet> {
    params.validate()?;
    let n = model.num_spins();
    let adjacency = model.adjacency();
    Ok(run_replicas("pa", seed, params.trajectories, model, |_, rng| {
        let mut state = PaState::new(random_spins(n, rng));
        let mut best = state.spins.clone();
        let mut best_energy = model.energy_unchecked(&best);
        for t in 0..params.steps {
            state.step(model, &adjacency, params, params.lambda(t));
            let e = model.energy_unchecked(&state.spins);
            if e < best_energy - 1e-12 {
                best_energy = e;
                best.copy_from_slice(&state.spins);
            }
        }
        SpinConfig::new(best).expect("±1")
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PumpSchedule {
    /// `a(t)` rises linearly from 0 to `a0` over the run.
    Linear,
    /// `a(t) = a0` throughout.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SbParams {
    pub a0: f64,
    /// Coupling scale; `0.7·a0/(σ_J·√N)` when absent.
    pub c0: Option<f64>,
    pub dt: f64,
    pub steps: usize,
    pub pump: PumpSchedule,
    pub replicas: usize,
    /// Initial momenta are drawn from `U(-w, w)` with this `w`.
    pub initial_momentum: f64,
}

impl Default for SbParams {
    fn default() -> Self {
        SbParams {
            a0: 1.0,
            c0: None,
            dt: 0.5,
            steps: 1000,
            pump: PumpSchedule::Linear,
            replicas: 32,
            initial_momentum: 0.1,
        }
    }
}

impl SbParams {
    /// Resolves `c0`, falling back to the supplied value when the coupling
    /// spread vanishes.
    pub fn resolve_c0(&self, model: &IsingModel) -> Result<f64> {
        if let Some(c0) = self.c0 {
            return Ok(c0);
        }
        let sigma = model.coupling_std();
        let n = model.num_spins() as f64;
        if sigma > 0.0 && n > 0.0 {
            Ok(0.7 * self.a0 / (sigma * n.sqrt()))
        } else {
            Err(Error::Argument(
                "coupling spread is zero; supply c0 explicitly".into(),
            ))
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a0 > 0.0) || !(self.dt > 0.0) {
            return Err(Error::Argument("a0 and dt must be > 0".into()));
        }
        if let Some(c0) = self.c0 {
            if !(c0 > 0.0) {
                return Err(Error::Argument("c0 must be > 0".into()));
            }
        }
        if self.steps == 0 || self.replicas == 0 {
            return Err(Error::Argument("steps and replicas must be >= 1".into()));
        }
        if !(self.initial_momentum >= 0.0) {
            return Err(Error::Argument("initial momentum width must be >= 0".into()));
        }
        Ok(())
    }

    fn pump(&self, k: usize) -> f64 {
        match self.pump {
            PumpSchedule::Linear => self.a0 * k as f64 / self.steps as f64,
            PumpSchedule::Constant => self.a0,
        }
    }
}

/// Perfectly inelastic wall at `|x| = 1`.
pub fn wall(x: f64, y: f64) -> (f64, f64) {
    if x.abs() > 1.0 {
        (f64::from(sign(x)), 0.0)
    } else {
        (x, y)
    }
}

/// Position/momentum state of one bifurcation replica.
#[derive(Debug, Clone)]
pub struct SbState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl SbState {
    /// One symplectic-Euler step: `x ← x + a0·y·Δt` from the old momenta,
    /// then `y ← y + (-(a0 - a)·x_old - c0·G(x_new))·Δt` with
    /// `G_i = Σ_j J_ij sign(x_j) + h_i`, then the wall.
    pub fn step(&mut self, model: &IsingModel, adjacency: &Adjacency, a0: f64, a: f64, c0: f64, dt: f64) {
        let x_old = self.x.clone();
        for (x, y) in self.x.iter_mut().zip(&self.y) {
            *x += a0 * y * dt;
        }
        let signs: Vec<i8> = self.x.iter().map(|&v| sign(v)).collect();
        for (i, (y, xo)) in self.y.iter_mut().zip(&x_old).enumerate() {
            let g = adjacency.coupling_sum(i, &signs) + model.fields()[i];
            *y += (-(a0 - a) * xo - c0 * g) * dt;
        }
        for (x, y) in self.x.iter_mut().zip(self.y.iter_mut()) {
            (*x, *y) = wall(*x, *y);
        }
    }

    pub fn binarize(&self) -> Vec<i8> {
        self.x.iter().map(|&v| sign(v)).collect()
    }
}

/// Discrete simulated bifurcation; each replica returns its final
/// binarized position.
pub fn simulated_bifurcation(model: &IsingModel, params: &SbParams, seed: u64) -> Result<SampleSet> {
    params.validate()?;
    let c0 = params.resolve_c0(model)?;
    let n = model.num_spins();
    let adjacency = model.adjacency();
    let w = params.initial_momentum;
    Ok(run_replicas("sbm", seed, params.replicas, model, |_, rng| {
        let mut state = SbState {
            x: vec![0.0; n],
            y: (0..n)
                .map(|_| if w > 0.0 { rng.random_range(-w..w) } else { 0.0 })
                .collect(),
        };
        for k in 0..params.steps {
            state.step(model, &adjacency, params.a0, params.pump(k), c0, params.dt);
        }
        SpinConfig::new(state.binarize()).expect("±1")
    }))
}

/// Greedy descent: flips the spin with the most negative `ΔE` (lowest index
/// on ties) until no single flip lowers the energy.
pub fn steepest_descent(model: &IsingModel, start: &SpinConfig) -> Result<SpinConfig> {
    if start.len() != model.num_spins() {
        return Err(Error::Dimension {
            expected: model.num_spins(),
            got: start.len(),
        });
    }
    let adjacency = model.adjacency();
    let mut s = start.values().to_vec();
    loop {
        let mut best: Option<(usize, f64)> = None;
        for k in 0..s.len() {
            let d = model.flip_delta(&adjacency, &s, k);
            if d < 0.0 && best.is_none_or(|(_, b)| d < b) {
                best = Some((k, d));
            }
        }
        match best {
            Some((k, _)) => s[k] = -s[k],
            None => break,
        }
    }
    SpinConfig::new(s)
}

/// Steepest descent from `replicas` uniformly random starts.
pub fn random_descent(model: &IsingModel, replicas: usize, seed: u64) -> Result<SampleSet> {
    if replicas == 0 {
        return Err(Error::Argument("replicas must be >= 1".into()));
    }
    let n = model.num_spins();
    Ok(run_replicas("descent", seed, replicas, model, |_, rng| {
        let start = SpinConfig::new(random_spins(n, rng)).expect("random spins are ±1");
        steepest_descent(model, &start).expect("length matches")
    }))
}

/// Descent applied to every sample of a set, as a post-processor.
pub fn descend_samples(model: &IsingModel, samples: &SampleSet) -> Result<SampleSet> {
    let mut out = samples.clone();
    out.solver = format!("{}+descent", samples.solver);
    let (polished, extra) = timed(|| -> Result<Vec<Sample>> {
        samples
            .samples
            .iter()
            .map(|s| {
                let spins = steepest_descent(model, &s.spins)?;
                let energy = model.energy_unchecked(spins.values());
                Ok(Sample {
                    spins,
                    energy,
                    replica: s.replica,
                })
            })
            .collect()
    });
    out.samples = polished?;
    out.run_time += extra;
    Ok(out)
}
