//! Median approximation-ratio and diversity curves.
//!
//! For each instance, `E_best` is the lowest energy over every run of every
//! solver. A curve point `(solver, budget)` pools the solver's runs with
//! `t_run ≤ budget` on each instance and takes medians across the instances
//! where such runs exist.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use isingkit::metrics::{d_approx, diversity, e_approx, median, MetricConfig};
use isingkit::{Result, SpinConfig};
use serde::{Deserialize, Serialize};

/// One solver run on one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub instance: String,
    pub solver: String,
    pub t_run: f64,
    pub states: Vec<SpinConfig>,
    pub energies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSummary {
    pub instance_hash: String,
    pub e_best: f64,
    /// Diversity of the union of all solvers' samples.
    pub d_total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub solver: String,
    pub budget_seconds: f64,
    /// Instances with at least one run inside the budget.
    pub instances: usize,
    pub median_e_approx: f64,
    pub median_d_approx: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchTable {
    pub config: MetricConfig,
    pub diversity_seed: u64,
    pub budgets: Vec<f64>,
    pub instances: Vec<InstanceSummary>,
    pub curves: Vec<CurvePoint>,
}

fn pool<'a>(runs: impl Iterator<Item = &'a Run>) -> (Vec<SpinConfig>, Vec<f64>) {
    let mut states = Vec::new();
    let mut energies = Vec::new();
    for r in runs {
        states.extend(r.states.iter().cloned());
        energies.extend(&r.energies);
    }
    (states, energies)
}

fn pool_diversity(states: &[SpinConfig], energies: &[f64], e_best: f64, cfg: &MetricConfig, seed: u64) -> Result<usize> {
    if states.is_empty() {
        return Ok(0);
    }
    Ok(diversity(
        states,
        energies,
        e_best,
        cfg.approximation_ratio,
        cfg.independence_fraction,
        cfg.restarts,
        seed,
    )?
    .count)
}

/// Builds the curve table; `budgets` defaults to every distinct run time.
pub fn bench_table(runs: &[Run], budgets: Option<&[f64]>, cfg: &MetricConfig, seed: u64) -> Result<BenchTable> {
    cfg.validate()?;
    let mut by_instance: BTreeMap<&str, Vec<&Run>> = BTreeMap::new();
    for r in runs {
        if r.states.len() != r.energies.len() || r.states.is_empty() {
            return Err(isingkit::Error::Argument(format!(
                "run of {} on {} has no samples or mismatched energies",
                r.solver, r.instance
            )));
        }
        by_instance.entry(&r.instance).or_default().push(r);
    }
    let mut budgets: Vec<f64> = match budgets {
        Some(b) => b.to_vec(),
        None => runs.iter().map(|r| r.t_run).collect(),
    };
    if budgets.iter().any(|b| b.is_nan()) {
        return Err(isingkit::Error::Argument("budgets must be numbers".into()));
    }
    budgets.sort_by(f64::total_cmp);
    budgets.dedup();
    let solvers: BTreeSet<&str> = runs.iter().map(|r| r.solver.as_str()).collect();

    let mut instances = Vec::new();
    for (hash, rs) in &by_instance {
        let e_best = rs
            .iter()
            .flat_map(|r| r.energies.iter().copied())
            .fold(f64::INFINITY, f64::min);
        let (states, energies) = pool(rs.iter().copied());
        let d_total = pool_diversity(&states, &energies, e_best, cfg, seed)?;
        instances.push(InstanceSummary {
            instance_hash: hash.to_string(),
            e_best,
            d_total,
        });
    }

    let mut curves = Vec::new();
    for solver in &solvers {
        for &budget in &budgets {
            let mut ea = Vec::new();
            let mut da = Vec::new();
            for summary in &instances {
                let inside: Vec<&Run> = by_instance[summary.instance_hash.as_str()]
                    .iter()
                    .copied()
                    .filter(|r| r.solver == *solver && r.t_run <= budget)
                    .collect();
                if inside.is_empty() {
                    continue;
                }
                let (states, energies) = pool(inside.into_iter());
                let best = energies.iter().copied().fold(f64::INFINITY, f64::min);
                ea.push(e_approx(best, summary.e_best)?);
                let d = pool_diversity(&states, &energies, summary.e_best, cfg, seed)?;
                da.push(d_approx(d, summary.d_total));
            }
            if let (Some(me), Some(md)) = (median(&ea), median(&da)) {
                curves.push(CurvePoint {
                    solver: solver.to_string(),
                    budget_seconds: budget,
                    instances: ea.len(),
                    median_e_approx: me,
                    median_d_approx: md,
                });
            }
        }
    }
    Ok(BenchTable {
        config: *cfg,
        diversity_seed: seed,
        budgets,
        instances,
        curves,
    })
}

/// Plot-ready CSV of the curve points.
pub fn curves_csv(table: &BenchTable) -> String {
    let mut out = String::from("solver,budget_seconds,instances,median_e_approx,median_d_approx\n");
    for p in &table.curves {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            p.solver, p.budget_seconds, p.instances, p.median_e_approx, p.median_d_approx
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(instance: &str, solver: &str, t_run: f64, energies: &[f64]) -> Run {
        Run {
            instance: instance.into(),
            solver: solver.into(),
            t_run,
            states: energies.iter().map(|_| SpinConfig::uniform(4, 1)).collect(),
            energies: energies.to_vec(),
        }
    }

    fn cfg() -> MetricConfig {
        MetricConfig {
            restarts: 4,
            ..MetricConfig::default()
        }
    }

    #[test]
    fn single_solver_curve_is_its_trajectory() {
        let runs = vec![
            run("a", "sa", 1.0, &[-5.0]),
            run("a", "sa", 2.0, &[-8.0]),
            run("a", "sa", 3.0, &[-10.0]),
        ];
        let t = bench_table(&runs, None, &cfg(), 0).unwrap();
        assert_eq!(t.budgets, vec![1.0, 2.0, 3.0]);
        let got: Vec<f64> = t.curves.iter().map(|p| p.median_e_approx).collect();
        assert_eq!(got, vec![0.25, 0.1, 0.0]);
    }

    #[test]
    fn pooled_best_bounds_every_solver() {
        let runs = vec![
            run("a", "sa", 1.0, &[-5.0, -7.0]),
            run("a", "pa", 1.0, &[-6.0]),
            run("a", "sbm", 1.0, &[-7.5]),
        ];
        let t = bench_table(&runs, None, &cfg(), 0).unwrap();
        assert_eq!(t.instances[0].e_best, -7.5);
        assert!(t.curves.iter().all(|p| p.median_e_approx >= 0.0));
    }

    #[test]
    fn three_solver_medians() {
        // Per-instance bests: a = -10, b = -20, c = -4.
        let runs = vec![
            run("a", "pa", 1.0, &[-10.0]),
            run("a", "sa", 1.0, &[-9.0]),
            run("a", "sbm", 1.0, &[-8.0]),
            run("b", "pa", 1.0, &[-18.0]),
            run("b", "sa", 1.0, &[-20.0]),
            run("b", "sbm", 1.0, &[-20.0]),
            run("c", "pa", 1.0, &[-3.0]),
            run("c", "sa", 1.0, &[-2.0]),
            run("c", "sbm", 1.0, &[-4.0]),
        ];
        let t = bench_table(&runs, Some(&[0.5, 1.0]), &cfg(), 0).unwrap();
        let by = |s: &str| t.curves.iter().find(|p| p.solver == s).unwrap();
        // pa: {0, 0.05, 0.125}; sa: {0.05, 0, 0.25}; sbm: {0.1, 0, 0}.
        assert_eq!(by("pa").median_e_approx, 0.05);
        assert_eq!(by("sa").median_e_approx, 0.05);
        assert_eq!(by("sbm").median_e_approx, 0.0);
        // A solver scores diversity 1 exactly where its best is within 1%.
        assert_eq!(by("pa").median_d_approx, 0.0);
        assert_eq!(by("sa").median_d_approx, 0.0);
        assert_eq!(by("sbm").median_d_approx, 1.0);
        assert_eq!(t.curves.len(), 3);
        assert!(t.curves.iter().all(|p| p.budget_seconds == 1.0 && p.instances == 3));
    }

    #[test]
    fn budget_filters_runs() {
        let runs = vec![run("a", "sa", 2.0, &[-1.0]), run("a", "pa", 5.0, &[-2.0])];
        let t = bench_table(&runs, Some(&[1.0, 3.0]), &cfg(), 0).unwrap();
        assert_eq!(t.curves.len(), 1);
        assert_eq!(t.curves[0].solver, "sa");
        assert_eq!(t.curves[0].median_e_approx, 0.25);
        let csv = curves_csv(&t);
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.ends_with("sa,3,1,0.25,0\n"));
    }
}
