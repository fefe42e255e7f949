//! Thermodynamic analysis of annealing samples: pseudo-likelihood
//! thermometry, TUR lower bounds on entropy production, heat and work, the
//! four operating modes, and efficiency bounds. Units have `k_B = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{IsingModel, SpinConfig};

/// Default upper end of the β search bracket.
pub const BETA_MAX: f64 = 50.0;

/// Golden-section stopping width.
const BETA_TOL: f64 = 1e-6;

/// `g(x) = x·atanh(x)`; `+∞` at `|x| = 1`.
pub fn g(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        f64::INFINITY
    } else {
        let a = x.abs();
        a * a.atanh()
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn check_samples(model: &IsingModel, samples: &[SpinConfig]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Argument("no samples".into()));
    }
    if model.num_spins() == 0 {
        return Err(Error::Argument("model has no spins".into()));
    }
    if let Some(s) = samples.iter().find(|s| s.len() != model.num_spins()) {
        return Err(Error::Dimension {
            expected: model.num_spins(),
            got: s.len(),
        });
    }
    Ok(())
}

/// `s_i·f_i` with `f_i = h_i + Σ_j J_ij s_j`, for every sample and site.
fn aligned_fields(model: &IsingModel, samples: &[SpinConfig]) -> Vec<f64> {
    let adj = model.adjacency();
    samples
        .iter()
        .flat_map(|s| {
            let v = s.values();
            (0..v.len())
                .map(|i| f64::from(v[i]) * (model.fields()[i] + adj.coupling_sum(i, v)))
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Neumaier-compensated sum; the error stays O(ε) however many terms.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        carry += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + carry
}

fn lambda_from(aligned: &[f64], beta: f64) -> f64 {
    -compensated_sum(aligned.iter().map(|&x| softplus(2.0 * beta * x))) / aligned.len() as f64
}

/// Mean per-site log pseudo-likelihood `Λ(β)`, where
/// `p(s_i | rest) = 1 / (1 + e^{2β s_i f_i})` for `H = ΣJss + Σhs`.
pub fn pseudo_log_likelihood(model: &IsingModel, samples: &[SpinConfig], beta: f64) -> Result<f64> {
    check_samples(model, samples)?;
    Ok(lambda_from(&aligned_fields(model, samples), beta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaEstimate {
    pub beta: f64,
    pub log_likelihood: f64,
    /// The maximizer sits at the upper end of the bracket.
    pub boundary_hit: bool,
}

/// Maximizes `Λ` over `[0, beta_max]` by golden-section search.
pub fn pseudo_likelihood_beta(
    model: &IsingModel,
    samples: &[SpinConfig],
    beta_max: f64,
) -> Result<BetaEstimate> {
    check_samples(model, samples)?;
    if !(beta_max > 0.0 && beta_max.is_finite()) {
        return Err(Error::Argument(format!("beta_max {beta_max} must be positive")));
    }
    let aligned = aligned_fields(model, samples);
    if aligned.iter().all(|&x| x == 0.0) {
        return Err(Error::Degenerate(
            "every local field vanishes; the pseudo-likelihood is flat".into(),
        ));
    }
    let f = |b: f64| lambda_from(&aligned, b);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0, beta_max);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > BETA_TOL {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    let mut beta = 0.5 * (lo + hi);
    // Λ is concave, so an interior maximum beats both ends.
    for end in [0.0, beta_max] {
        if f(end) > f(beta) {
            beta = end;
        }
    }
    Ok(BetaEstimate {
        beta,
        log_likelihood: f(beta),
        boundary_hit: beta_max - beta <= 2.0 * BETA_TOL,
    })
}

/// First two raw moments of the processor energy change `ΔE₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyChangeStats {
    pub mean: f64,
    pub second_moment: f64,
    pub count: usize,
}

impl EnergyChangeStats {
    pub fn new(mean: f64, second_moment: f64, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::Argument("at least two energy changes are required".into()));
        }
        if second_moment < mean * mean * (1.0 - 1e-12) {
            return Err(Error::Domain(format!(
                "second moment {second_moment} below squared mean {}",
                mean * mean
            )));
        }
        Ok(EnergyChangeStats {
            mean,
            second_moment,
            count,
        })
    }

    pub fn from_changes(changes: &[f64]) -> Result<Self> {
        let n = changes.len();
        if n < 2 {
            return Err(Error::Argument("at least two energy changes are required".into()));
        }
        let mean = changes.iter().sum::<f64>() / n as f64;
        let second = changes.iter().map(|x| x * x).sum::<f64>() / n as f64;
        Self::new(mean, second.max(mean * mean), n)
    }
}

/// `ΔE₁` per run: energy of the final sample minus that of the initial
/// configuration.
pub fn energy_changes(model: &IsingModel, initial: &[SpinConfig], last: &[SpinConfig]) -> Result<Vec<f64>> {
    if initial.len() != last.len() {
        return Err(Error::Dimension {
            expected: initial.len(),
            got: last.len(),
        });
    }
    initial
        .iter()
        .zip(last)
        .map(|(a, b)| Ok(model.energy(b)? - model.energy(a)?))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermoBounds {
    /// Lower bound on `⟨Σ⟩`.
    pub sigma_lb: f64,
    /// Lower bound on `-⟨Q⟩ = ⟨ΔE₂⟩`.
    pub heat_lb: f64,
    /// Lower bound on `⟨W⟩`.
    pub work_lb: f64,
}

impl ThermoBounds {
    pub fn per_spin(&self, num_spins: usize) -> ThermoBounds {
        let n = num_spins as f64;
        ThermoBounds {
            sigma_lb: self.sigma_lb / n,
            heat_lb: self.heat_lb / n,
            work_lb: self.work_lb / n,
        }
    }
}

/// Bounds from `⟨Σ⟩ ≥ 2g(r)` with `r = ⟨ΔE₁⟩/√⟨ΔE₁²⟩` and
/// `Σ = β₁ΔE₁ + β₂ΔE₂`.
pub fn tur_bounds(stats: &EnergyChangeStats, beta1: f64, beta2: f64) -> Result<ThermoBounds> {
    if !(beta1 > 0.0 && beta2 > 0.0) {
        return Err(Error::Argument("inverse temperatures must be > 0".into()));
    }
    if !(stats.second_moment > 0.0) {
        return Err(Error::Degenerate("second moment of the energy change is zero".into()));
    }
    let r = (stats.mean / stats.second_moment.sqrt()).clamp(-1.0, 1.0);
    let gr = g(r);
    if gr.is_infinite() {
        return Ok(ThermoBounds {
            sigma_lb: f64::INFINITY,
            heat_lb: f64::INFINITY,
            work_lb: f64::INFINITY,
        });
    }
    Ok(ThermoBounds {
        sigma_lb: 2.0 * gr,
        heat_lb: 2.0 * gr / beta2 - beta1 / beta2 * stats.mean,
        work_lb: 2.0 * gr / beta2 + (1.0 - beta1 / beta2) * stats.mean,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatingMode {
    Refrigerator,
    Engine,
    Accelerator,
    Heater,
}

impl OperatingMode {
    pub fn label(self) -> char {
        match self {
            OperatingMode::Refrigerator => 'R',
            OperatingMode::Engine => 'E',
            OperatingMode::Accelerator => 'A',
            OperatingMode::Heater => 'H',
        }
    }
}

/// Sign patterns `(ΔE₁, ΔE₂, W)`; zero counts as non-negative.
pub fn classify_mode(de1: f64, de2: f64, work: f64) -> Result<OperatingMode> {
    let scale = de1.abs().max(de2.abs()).max(work.abs()).max(1.0);
    if (work - de1 - de2).abs() > 1e-9 * scale {
        return Err(Error::Inconsistent(format!(
            "work {work} differs from the energy balance {}",
            de1 + de2
        )));
    }
    let (p1, p2, pw) = (de1 >= 0.0, de2 >= 0.0, work >= 0.0);
    match (p1, p2, pw) {
        (true, false, true) => Ok(OperatingMode::Refrigerator),
        (false, true, false) => Ok(OperatingMode::Engine),
        (false, true, true) => Ok(OperatingMode::Accelerator),
        (true, true, true) => Ok(OperatingMode::Heater),
        _ => Err(Error::Inconsistent(format!(
            "signs of ({de1}, {de2}, {work}) match no operating mode"
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "status", content = "mode")]
pub enum ModeInference {
    Certified(OperatingMode),
    Indeterminate,
}

/// Mode implied by the measured `⟨ΔE₁⟩` and the certified lower bounds,
/// or `Indeterminate` when the bounds leave a sign open.
pub fn infer_mode(de1_mean: f64, bounds: &ThermoBounds) -> ModeInference {
    // ⟨ΔE₂⟩ ≥ heat_lb and ⟨W⟩ ≥ work_lb; only positive lower bounds fix a
    // sign.
    if bounds.heat_lb < 0.0 {
        return ModeInference::Indeterminate;
    }
    if de1_mean >= 0.0 {
        ModeInference::Certified(OperatingMode::Heater)
    } else if bounds.work_lb >= 0.0 {
        ModeInference::Certified(OperatingMode::Accelerator)
    } else {
        ModeInference::Indeterminate
    }
}

/// Fraction of samples at the ground energy.
pub fn success_probability(energies: &[f64], ground_energy: f64) -> Result<f64> {
    if energies.is_empty() {
        return Err(Error::Argument("no samples".into()));
    }
    let tol = 1e-9 * ground_energy.abs().max(1.0);
    Ok(energies.iter().filter(|&&e| (e - ground_energy).abs() <= tol).count() as f64 / energies.len() as f64)
}

/// Mean of `E / E*` over the samples.
pub fn solution_quality(energies: &[f64], ground_energy: f64) -> Result<f64> {
    if energies.is_empty() {
        return Err(Error::Argument("no samples".into()));
    }
    if ground_energy == 0.0 {
        return Err(Error::UndefinedMetric("solution quality needs a nonzero ground energy".into()));
    }
    Ok(energies.iter().map(|e| e / ground_energy).sum::<f64>() / energies.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Efficiencies {
    /// `P_GS / W_lb`.
    pub computational: f64,
    /// `W_lb / Q_lb`.
    pub thermodynamic: f64,
}

pub fn efficiencies(p_gs: f64, work_lb: f64, heat_lb: f64) -> Result<Efficiencies> {
    if !(work_lb > 0.0) {
        return Err(Error::Argument(format!("work bound {work_lb} must be > 0")));
    }
    if heat_lb == 0.0 {
        return Err(Error::Argument("heat bound must be nonzero".into()));
    }
    Ok(Efficiencies {
        computational: p_gs / work_lb,
        thermodynamic: work_lb / heat_lb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::random_model;
    use crate::model::GibbsTable;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn g_values() {
        assert!((g(0.5) - 0.5 * 0.5f64.atanh()).abs() < 1e-15);
        assert!((g(0.5) - 0.274653072167027).abs() < 1e-9);
        assert_eq!(g(0.0), 0.0);
        assert_eq!(g(1.0), f64::INFINITY);
    }

    #[test]
    fn lambda_at_zero() {
        let m = random_model(6, 0.5, 1);
        let samples = vec![SpinConfig::uniform(6, 1), SpinConfig::uniform(6, -1)];
        let l = pseudo_log_likelihood(&m, &samples, 0.0).unwrap();
        assert!((l + 2f64.ln()).abs() < 1e-12);

        // Rounding must not accumulate with the number of terms.
        let big = random_model(12, 0.5, 2);
        let many = vec![SpinConfig::uniform(12, 1); 20_000];
        let l = pseudo_log_likelihood(&big, &many, 0.0).unwrap();
        assert!((l + 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn recovers_gibbs_temperature() {
        let m = random_model(12, 0.4, 3);
        let table = GibbsTable::new(&m, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let samples = table.sample(10_000, &mut rng);
        let est = pseudo_likelihood_beta(&m, &samples, BETA_MAX).unwrap();
        assert!((est.beta - 1.0).abs() < 0.05, "{est:?}");
        assert!(!est.boundary_hit);
    }

    #[test]
    fn ordered_data_hits_boundary() {
        let m = IsingModel::from_parts(4, [(1, 2, -1.0), (2, 3, -1.0), (3, 4, -1.0)], vec![0.0; 4]).unwrap();
        let est = pseudo_likelihood_beta(&m, &[SpinConfig::uniform(4, 1)], BETA_MAX).unwrap();
        assert!(est.boundary_hit);
    }

    #[test]
    fn flat_likelihood_is_degenerate() {
        let m = IsingModel::new(3);
        let r = pseudo_likelihood_beta(&m, &[SpinConfig::uniform(3, 1)], BETA_MAX);
        assert!(matches!(r, Err(Error::Degenerate(_))));
    }

    #[test]
    fn zero_mean_gives_zero_bounds() {
        let s = EnergyChangeStats::new(0.0, 2.0, 10).unwrap();
        let b = tur_bounds(&s, 1.0, 2.0).unwrap();
        assert_eq!((b.sigma_lb, b.heat_lb, b.work_lb), (0.0, 0.0, 0.0));
        assert!(tur_bounds(&EnergyChangeStats::new(0.0, 0.0, 10).unwrap(), 1.0, 1.0).is_err());
        let sat = tur_bounds(&EnergyChangeStats::new(1.0, 1.0, 10).unwrap(), 1.0, 1.0).unwrap();
        assert_eq!(sat.sigma_lb, f64::INFINITY);
    }

    #[test]
    fn mode_table() {
        assert_eq!(classify_mode(1.0, -0.5, 0.5).unwrap(), OperatingMode::Refrigerator);
        assert_eq!(classify_mode(-1.0, 0.4, -0.6).unwrap(), OperatingMode::Engine);
        assert_eq!(classify_mode(-0.4, 1.0, 0.6).unwrap(), OperatingMode::Accelerator);
        assert_eq!(classify_mode(0.4, 1.0, 1.4).unwrap(), OperatingMode::Heater);
        assert_eq!(classify_mode(0.0, 0.0, 0.0).unwrap(), OperatingMode::Heater);
        assert!(classify_mode(1.0, 1.0, 0.5).is_err());
        // Work balance holds but the pattern (−, −, −) violates ⟨Σ⟩ ≥ 0.
        assert!(classify_mode(-1.0, -1.0, -2.0).is_err());
    }

    #[test]
    fn inference_only_certifies_fixed_signs() {
        let b = ThermoBounds {
            sigma_lb: 0.1,
            heat_lb: 0.2,
            work_lb: 0.1,
        };
        assert_eq!(infer_mode(0.3, &b), ModeInference::Certified(OperatingMode::Heater));
        assert_eq!(infer_mode(-0.1, &b), ModeInference::Certified(OperatingMode::Accelerator));
        assert_eq!(infer_mode(-0.3, &ThermoBounds { work_lb: -0.1, ..b }), ModeInference::Indeterminate);
        assert_eq!(infer_mode(0.3, &ThermoBounds { heat_lb: -0.1, ..b }), ModeInference::Indeterminate);
    }

    #[test]
    fn efficiency_cases() {
        assert_eq!(efficiencies(0.0, 1.0, 2.0).unwrap().computational, 0.0);
        assert!((efficiencies(0.5, 2.0, 4.0).unwrap().thermodynamic - 0.5).abs() < 1e-15);
        assert!(efficiencies(0.5, 0.0, 1.0).is_err());
        assert!(efficiencies(0.5, 1.0, 0.0).is_err());
        let e = [-3.0, -3.0, -3.0];
        assert_eq!(success_probability(&e, -3.0).unwrap(), 1.0);
        assert_eq!(solution_quality(&e, -3.0).unwrap(), 1.0);
        let pooled = [-3.0, -2.0, -1.5, 0.0];
        let want = (1.0 + 2.0 / 3.0 + 0.5 + 0.0) / 4.0;
        assert!((solution_quality(&pooled, -3.0).unwrap() - want).abs() < 1e-15);
        assert_eq!(success_probability(&pooled, -3.0).unwrap(), 0.25);
    }

    #[test]
    fn energy_change_moments() {
        let m = IsingModel::from_parts(2, [(1, 2, 1.0)], vec![0.0, 0.0]).unwrap();
        let a = vec![SpinConfig::uniform(2, 1); 2];
        let b = vec![SpinConfig::new(vec![1, -1]).unwrap(), SpinConfig::uniform(2, 1)];
        let d = energy_changes(&m, &a, &b).unwrap();
        assert_eq!(d, vec![-2.0, 0.0]);
        let s = EnergyChangeStats::from_changes(&d).unwrap();
        assert_eq!((s.mean, s.second_moment), (-1.0, 2.0));
    }

    /// Two outcomes `±(a, b)` with `P(+)/P(−) = e^{β₁a + β₂b}`.
    pub(crate) fn exchange_pair(a: f64, b: f64, beta1: f64, beta2: f64) -> [(f64, f64, f64); 2] {
        let s = beta1 * a + beta2 * b;
        let p = 1.0 / (1.0 + (-s).exp());
        [(a, b, p), (-a, -b, 1.0 - p)]
    }

    /// Checks all three bounds against the true averages of a joint law.
    ///
    /// Two-outcome laws saturate the bound exactly, so the comparison allows
    /// for rounding: a relative `1e-12` of the largest term involved, plus the
    /// change in `g` caused by perturbing `r` by a few ulps (`g` is
    /// ill-conditioned near `|r| = 1`).
    fn bounds_hold(law: &[(f64, f64, f64)], beta1: f64, beta2: f64) -> bool {
        let e1: f64 = law.iter().map(|&(a, _, p)| p * a).sum();
        let e1sq: f64 = law.iter().map(|&(a, _, p)| p * a * a).sum();
        let e2: f64 = law.iter().map(|&(_, b, p)| p * b).sum();
        let sigma = beta1 * e1 + beta2 * e2;
        let Ok(stats) = EnergyChangeStats::new(e1, e1sq, 2) else {
            return true;
        };
        let Ok(bd) = tur_bounds(&stats, beta1, beta2) else {
            return true;
        };
        let r = (e1 / e1sq.sqrt()).clamp(-1.0, 1.0);
        let nudged = (r.abs() * (1.0 + 8.0 * f64::EPSILON)).min(1.0);
        let dg = (g(nudged) - g(r)).abs();
        let gr = 2.0 * g(r);
        let slack = |terms: &[f64], cond: f64| {
            1e-12 * terms.iter().fold(1.0f64, |m, t| m.max(t.abs())) + 2.0 * cond * dg
        };
        let ok_sigma = sigma >= bd.sigma_lb - slack(&[sigma, beta1 * e1, beta2 * e2, gr], 1.0);
        let ok_heat = e2 >= bd.heat_lb - slack(&[e2, gr / beta2, beta1 / beta2 * e1], 1.0 / beta2);
        let ok_work =
            e1 + e2 >= bd.work_lb - slack(&[e1, e2, gr / beta2, (1.0 - beta1 / beta2) * e1], 1.0 / beta2);
        ok_sigma && ok_heat && ok_work
    }

    #[test]
    fn tur_holds_on_exchange_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let (b1, b2) = (rng.random_range(0.05..5.0), rng.random_range(0.05..5.0));
            let law = exchange_pair(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), b1, b2);
            assert!(bounds_hold(&law, b1, b2), "{law:?} {b1} {b2}");
        }
    }

    #[test]
    fn oracle_flags_laws_breaking_the_fluctuation_theorem() {
        // Reversed weights give ⟨Σ⟩ < 0 while the bound stays ≥ 0.
        let [(a, b, p), (na, nb, q)] = exchange_pair(1.0, 0.5, 1.0, 2.0);
        assert!(!bounds_hold(&[(a, b, q), (na, nb, p)], 1.0, 2.0));
    }

    #[test]
    fn tur_holds_on_mixtures_of_exchange_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..2000 {
            let (b1, b2) = (rng.random_range(0.05..5.0), rng.random_range(0.05..5.0));
            let k = rng.random_range(2..5);
            let weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = weights.iter().sum();
            let law: Vec<(f64, f64, f64)> = weights
                .iter()
                .flat_map(|w| {
                    exchange_pair(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), b1, b2)
                        .map(|(a, b, p)| (a, b, p * w / total))
                })
                .collect();
            assert!(bounds_hold(&law, b1, b2));
        }
    }

    proptest! {
        #[test]
        fn g_is_even_and_monotone_in_magnitude(x in -0.999f64..0.999, y in -0.999f64..0.999) {
            prop_assert!((g(x) - g(-x)).abs() < 1e-15);
            prop_assert!(g(x) >= 0.0);
            if x.abs() < y.abs() {
                prop_assert!(g(x) <= g(y));
            }
            let mid = g(0.5 * (x + y));
            prop_assert!(mid <= 0.5 * (g(x) + g(y)) + 1e-12);
        }

        #[test]
        fn sigma_bound_is_nonnegative(mean in -10.0f64..10.0, extra in 0.0f64..10.0, b1 in 0.1f64..5.0, b2 in 0.1f64..5.0) {
            let s = EnergyChangeStats::new(mean, mean * mean + extra + 1e-9, 10).unwrap();
            let b = tur_bounds(&s, b1, b2).unwrap();
            prop_assert!(b.sigma_lb >= 0.0);
        }
    }
}
