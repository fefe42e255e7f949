//! Benchmark scores: approximation ratio, time-to-solution, and diversity
//! of near-optimal solutions.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::annealers::SampleSet;
use crate::error::{Error, Result};
use crate::model::SpinConfig;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    /// Target confidence `p_t`.
    pub target_confidence: f64,
    /// Approximation-ratio cutoff `a_r` for diversity and time-to-target.
    pub approximation_ratio: f64,
    /// Independence fraction `R`: accepted solutions differ in `≥ R·N` spins.
    pub independence_fraction: f64,
    pub restarts: usize,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            target_confidence: 0.99,
            approximation_ratio: 0.01,
            independence_fraction: 0.5,
            restarts: 100,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_confidence > 0.0 && self.target_confidence < 1.0) {
            return Err(Error::Argument(format!(
                "target confidence {} not in (0, 1)",
                self.target_confidence
            )));
        }
        if !(self.approximation_ratio >= 0.0) {
            return Err(Error::Argument("approximation ratio must be >= 0".into()));
        }
        if !(self.independence_fraction > 0.0 && self.independence_fraction <= 1.0) {
            return Err(Error::Argument(format!(
                "independence fraction {} not in (0, 1]",
                self.independence_fraction
            )));
        }
        if self.restarts == 0 {
            return Err(Error::Argument("restarts must be >= 1".into()));
        }
        Ok(())
    }
}

/// `(E - E_best) / (2|E_best|)`. Negative values mean `E` beats the
/// reference, which must then be re-baselined.
pub fn e_approx(energy: f64, e_best: f64) -> Result<f64> {
    if e_best == 0.0 {
        return Err(Error::UndefinedMetric(
            "approximation ratio is undefined for a zero reference energy".into(),
        ));
    }
    Ok((energy - e_best) / (2.0 * e_best.abs()))
}

/// Time to reach confidence `p_t` by independent repetition of runs of
/// length `t_run` that each succeed with probability `p_s`.
///
/// `p_s = 0` gives `+∞`; `p_s ≥ p_t` gives `t_run` since at least one run is
/// needed.
pub fn tts(p_s: f64, p_t: f64, t_run: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_s) {
        return Err(Error::Argument(format!("success probability {p_s} not in [0, 1]")));
    }
    if !(p_t > 0.0 && p_t < 1.0) {
        return Err(Error::Argument(format!("target confidence {p_t} not in (0, 1)")));
    }
    if !(t_run > 0.0 && t_run.is_finite()) {
        return Err(Error::Argument(format!("run time {t_run} must be positive")));
    }
    if p_s == 0.0 {
        return Ok(f64::INFINITY);
    }
    if p_s >= p_t {
        return Ok(t_run);
    }
    Ok(t_run * (1.0 - p_t).ln() / (1.0 - p_s).ln())
}

/// Success criterion for one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Threshold {
    /// `E ≤ energy`.
    Absolute { energy: f64 },
    /// `e_approx(E, e_best) ≤ ratio`.
    Relative { e_best: f64, ratio: f64 },
}

impl Threshold {
    /// Largest energy counted as a success.
    pub fn energy(&self) -> Result<f64> {
        match *self {
            Threshold::Absolute { energy } => Ok(energy),
            Threshold::Relative { e_best, ratio } => {
                if e_best == 0.0 {
                    return Err(Error::UndefinedMetric(
                        "relative threshold needs a nonzero reference energy".into(),
                    ));
                }
                Ok(e_best + 2.0 * ratio * e_best.abs())
            }
        }
    }
}

/// Fraction of runs whose best energy meets `threshold`.
pub fn success_fraction(runs: &[SampleSet], threshold: &Threshold) -> Result<f64> {
    if runs.is_empty() {
        return Err(Error::Argument("no runs observed".into()));
    }
    let cut = threshold.energy()?;
    let hits = runs.iter().filter(|r| r.best_energy() <= cut + 1e-12 * cut.abs().max(1.0)).count();
    Ok(hits as f64 / runs.len() as f64)
}

/// Time-to-target with `p_s` the fraction of successful runs and `t_run`
/// their mean wall-clock time.
pub fn time_to_target(runs: &[SampleSet], threshold: &Threshold, p_t: f64) -> Result<f64> {
    let p = success_fraction(runs, threshold)?;
    let t_run = runs.iter().map(|r| r.run_time).sum::<f64>() / runs.len() as f64;
    tts(p, p_t, t_run)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diversity {
    pub count: usize,
    /// Indices into the input states of one largest independent set found.
    pub witnesses: Vec<usize>,
}

/// Size of the largest set of near-optimal states found by randomized
/// greedy construction, where near-optimal means `e_approx ≤ a_r` and
/// independent means pairwise Hamming distance `≥ R·N`.
pub fn diversity(
    states: &[SpinConfig],
    energies: &[f64],
    e_best: f64,
    a_r: f64,
    r: f64,
    restarts: usize,
    seed: u64,
) -> Result<Diversity> {
    if states.len() != energies.len() {
        return Err(Error::Dimension {
            expected: states.len(),
            got: energies.len(),
        });
    }
    let Some(first) = states.first() else {
        return Err(Error::Argument("diversity needs at least one state".into()));
    };
    let n = first.len();
    if let Some(bad) = states.iter().find(|s| s.len() != n) {
        return Err(Error::Dimension {
            expected: n,
            got: bad.len(),
        });
    }
    let mut eligible = Vec::new();
    for (i, &e) in energies.iter().enumerate() {
        if e_approx(e, e_best)? <= a_r + 1e-12 {
            eligible.push(i);
        }
    }
    let min_distance = r * n as f64;
    let mut rng = rng::stream(seed, 0);
    let mut best = Diversity {
        count: 0,
        witnesses: Vec::new(),
    };
    for _ in 0..restarts.max(1) {
        eligible.shuffle(&mut rng);
        let mut chosen: Vec<usize> = Vec::new();
        for &i in &eligible {
            if chosen
                .iter()
                .all(|&j| states[i].hamming(&states[j]) as f64 >= min_distance)
            {
                chosen.push(i);
            }
        }
        if chosen.len() > best.count {
            chosen.sort_unstable();
            best = Diversity {
                count: chosen.len(),
                witnesses: chosen,
            };
        }
    }
    Ok(best)
}

/// `D_solver / D_total`, with 0 for an empty pool.
pub fn d_approx(d_solver: usize, d_total: usize) -> f64 {
    if d_total == 0 {
        0.0
    } else {
        d_solver as f64 / d_total as f64
    }
}

/// Median with the mean of the two middle values for even counts. NaN
/// inputs are rejected; infinities are ordered normally.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() || values.iter().any(|v| v.is_nan()) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    // Equal middles are returned as is, avoiding overflow in the average.
    Some(if v.len() % 2 == 1 || v[m - 1] == v[m] {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}
