//! Subcommand implementations.

use std::path::{Path, PathBuf};
use std::time::Instant;

use isingkit::annealers::{
    parallel_annealing, random_descent, simulated_annealing, simulated_bifurcation, PaParams, SaParams, SbParams,
};
use isingkit::dynamics::{
    classical_fidelity, ground_state_probability, ice_ensemble, tvd, AnnealSchedule, Envelope,
    OutcomeDistribution, SchedulePath,
};
use isingkit::instances::{build_lattice, generate, parse_coo, write_coo, LatticeSpec};
use isingkit::metrics::{diversity, e_approx, median, success_fraction, time_to_target, MetricConfig, Threshold};
use isingkit::oracle::{brute_force, brute_force_sharded, BRUTE_FORCE_CAP};
use isingkit::peps::{
    branch_and_bound, build_peps, solve_with_transforms, ContractionParams, DropletParams, PottsLayout, SearchParams,
    Transform,
};
use isingkit::thermo::{
    classify_mode, efficiencies, energy_changes, infer_mode, pseudo_likelihood_beta, solution_quality,
    success_probability, tur_bounds, BetaEstimate, Efficiencies, EnergyChangeStats, ModeInference, OperatingMode,
    ThermoBounds,
};
use isingkit::{IsingModel, SpinConfig};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::args::{
    BenchArgs, GenArgs, LatticeArg, MetricArgs, MetricsArgs, PathKind, SimulateArgs, SolveArgs, SolverKind,
    ThermoArgs, TransformSet,
};
use crate::bench::{bench_table, curves_csv, Run};
use crate::error::{CliError, CliResult};
use crate::io::{file_name, load_instance, load_samples, read_bytes, read_json, sha256_hex, write_atomic, write_json};
use crate::records::{GraphSource, Manifest, ManifestEntry, SampleRecord, SamplesFile, Source};

/// Largest instance whose ground energy is computed on demand.
const AUTO_GROUND_CAP: usize = BRUTE_FORCE_CAP;

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn lattice_spec(arg: LatticeArg, grid: bool) -> CliResult<LatticeSpec> {
    Ok(LatticeSpec::new(arg.rows, arg.cols, arg.cell_size, !grid)?)
}

pub fn gen(args: &GenArgs) -> CliResult<()> {
    let (num_spins, edges, graph) = match (&args.lattice, &args.graph) {
        (Some(l), _) => {
            let spec = lattice_spec(*l, args.grid)?;
            let graph = GraphSource::Lattice {
                rows: spec.rows,
                cols: spec.cols,
                cell_size: spec.cell_size,
                diagonal_edges: spec.diagonal_edges,
            };
            (spec.num_spins(), build_lattice(&spec), graph)
        }
        (None, Some(path)) => {
            let bytes = read_bytes(path)?;
            let text = std::str::from_utf8(&bytes).map_err(|e| CliError::input(path, e))?;
            let m = parse_coo(text).map_err(|e| CliError::input(path, e))?;
            let edges = m.couplings().map(|(i, j, _)| (i, j)).collect();
            let graph = GraphSource::File {
                file: file_name(path),
                sha256: sha256_hex(&bytes),
            };
            (m.num_spins(), edges, graph)
        }
        (None, None) => return Err(CliError::Usage("one of --lattice or --graph is required".into())),
    };
    create_dir(&args.out)?;
    let prefix = args.name.clone().unwrap_or_else(|| args.class.name().to_string());
    let mut instances = Vec::with_capacity(args.count);
    for k in 0..args.count {
        let seed = args.seed.wrapping_add(k as u64);
        let model = generate(args.class, num_spins, &edges, seed)?;
        let text = write_coo(&model);
        let file = format!("{prefix}_{k}.txt");
        write_atomic(&args.out.join(&file), text.as_bytes())?;
        instances.push(ManifestEntry {
            file,
            sha256: sha256_hex(text.as_bytes()),
            seed,
            num_spins,
        });
    }
    let manifest = Manifest {
        class: args.class.name().to_string(),
        graph,
        seed: args.seed,
        count: args.count,
        instances,
    };
    write_json(&args.out.join("manifest.json"), &manifest)
}

fn set_some<T: Copy>(target: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *target = v;
    }
}

pub fn solve(args: &SolveArgs) -> CliResult<()> {
    let inst = load_instance(&args.instance)?;
    let model = &inst.model;
    if let Some(t) = args.t_run {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(CliError::Usage(format!("--t-run {t} must be a non-negative number")));
        }
    }
    let start = Instant::now();
    let (params, samples, extra): (serde_json::Value, Vec<SampleRecord>, Option<serde_json::Value>) = match args.solver
    {
        SolverKind::Bruteforce => {
            if args.k == 0 {
                return Err(CliError::Usage("--k must be >= 1".into()));
            }
            let spectrum = if model.num_spins() > BRUTE_FORCE_CAP {
                brute_force_sharded(model, args.k, 8)?
            } else {
                brute_force(model, args.k)?
            };
            let samples = spectrum
                .states
                .into_iter()
                .map(|s| SampleRecord {
                    spins: s.config,
                    energy: s.energy,
                })
                .collect();
            (json!({ "k": args.k }), samples, None)
        }
        SolverKind::Sa => {
            let mut p = SaParams::default();
            set_some(&mut p.replicas, args.replicas);
            set_some(&mut p.temperature_steps, args.temperature_steps);
            set_some(&mut p.sweeps_per_temperature, args.sweeps);
            let set = simulated_annealing(model, &p, args.seed)?;
            (to_value(&p), records(set.samples), None)
        }
        SolverKind::Pa => {
            let mut p = PaParams::default();
            set_some(&mut p.trajectories, args.replicas);
            set_some(&mut p.steps, args.steps);
            let set = parallel_annealing(model, &p, args.seed)?;
            (to_value(&p), records(set.samples), None)
        }
        SolverKind::Sbm => {
            let mut p = SbParams::default();
            set_some(&mut p.replicas, args.replicas);
            set_some(&mut p.steps, args.steps);
            let set = simulated_bifurcation(model, &p, args.seed)?;
            (to_value(&p), records(set.samples), None)
        }
        SolverKind::Descent => {
            let replicas = args.replicas.unwrap_or(16);
            let set = random_descent(model, replicas, args.seed)?;
            (json!({ "replicas": replicas }), records(set.samples), None)
        }
        SolverKind::Peps => solve_peps(args, model)?,
    };
    let measured = start.elapsed().as_secs_f64();
    let best_energy = samples.iter().map(|s| s.energy).fold(f64::INFINITY, f64::min);
    let mut value = serde_json::to_value(SamplesFile {
        instance_hash: inst.hash,
        solver: solver_tag(args.solver).to_string(),
        params,
        seed: args.seed,
        t_run_seconds: args.t_run.unwrap_or(measured),
        sample_count: samples.len(),
        samples,
        best_energy,
        instance: inst.name,
    })
    .expect("samples serialize");
    if let Some(extra) = extra {
        value["droplets"] = extra;
    }
    write_json(&args.out, &value)
}

fn solver_tag(kind: SolverKind) -> &'static str {
    match kind {
        SolverKind::Bruteforce => "bruteforce",
        SolverKind::Sa => "sa",
        SolverKind::Pa => "pa",
        SolverKind::Sbm => "sbm",
        SolverKind::Peps => "peps",
        SolverKind::Descent => "descent",
    }
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("params serialize")
}

fn records(samples: Vec<isingkit::annealers::Sample>) -> Vec<SampleRecord> {
    samples
        .into_iter()
        .map(|s| SampleRecord {
            spins: s.spins,
            energy: s.energy,
        })
        .collect()
}

type SolverOutput = (serde_json::Value, Vec<SampleRecord>, Option<serde_json::Value>);

fn solve_peps(args: &SolveArgs, model: &IsingModel) -> CliResult<SolverOutput> {
    let lattice = args
        .lattice
        .ok_or_else(|| CliError::Usage("--solver peps needs --lattice ROWSxCOLSxCELL".into()))?;
    let spec = lattice_spec(lattice, args.grid)?;
    let layout = PottsLayout::from_lattice(&spec);
    let droplets = match (args.droplet_max_energy, args.droplet_min_hamming) {
        (Some(max_energy), Some(min_hamming)) => Some(DropletParams {
            max_energy,
            min_hamming,
        }),
        _ => None,
    };
    let params = SearchParams {
        max_states: args.max_states,
        cutoff: args.cutoff,
        contraction: ContractionParams {
            chi: args.chi,
            ..ContractionParams::default()
        },
        droplets,
    };
    let (solution, transforms) = match args.transforms {
        TransformSet::All => (
            solve_with_transforms(model, &layout, args.beta, &params)?,
            Transform::ALL.to_vec(),
        ),
        TransformSet::Identity => {
            let net = build_peps(model, &layout, args.beta, Transform::Identity)?;
            (branch_and_bound(model, &net, &params)?, vec![Transform::Identity])
        }
    };
    let value = json!({
        "lattice": { "rows": spec.rows, "cols": spec.cols, "cell_size": spec.cell_size, "diagonal_edges": spec.diagonal_edges },
        "beta": args.beta,
        "search": params,
        "transforms": transforms,
        "best_transform": solution.transform,
        "largest_discarded_probability": solution.largest_discarded_probability,
    });
    let extra = droplets.map(|_| to_value(&solution.droplets));
    let samples = solution
        .states
        .into_iter()
        .map(|s| SampleRecord {
            spins: s.spins,
            energy: s.energy,
        })
        .collect();
    Ok((value, samples, extra))
}

fn metric_config(m: &MetricArgs) -> CliResult<MetricConfig> {
    let cfg = MetricConfig {
        target_confidence: m.confidence,
        approximation_ratio: m.ratio,
        independence_fraction: m.independence,
        restarts: m.restarts,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn source(path: &Path) -> CliResult<Source> {
    Ok(Source {
        file: file_name(path),
        sha256: sha256_hex(&read_bytes(path)?),
    })
}

#[derive(Debug, Serialize)]
struct BenchRecord {
    manifest: Source,
    samples: Vec<Source>,
    #[serde(flatten)]
    table: crate::bench::BenchTable,
}

pub fn bench(args: &BenchArgs) -> CliResult<()> {
    let cfg = metric_config(&args.metric)?;
    let manifest: Manifest = read_json(&args.manifest)?;
    let base = args.manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut instances = std::collections::BTreeMap::new();
    for entry in &manifest.instances {
        let path = base.join(&entry.file);
        let inst = load_instance(&path)?;
        if inst.hash != entry.sha256 {
            return Err(CliError::Contract(format!(
                "{} hashes to {} but the manifest lists {}",
                path.display(),
                inst.hash,
                entry.sha256
            )));
        }
        instances.insert(inst.hash.clone(), inst);
    }
    let mut runs = Vec::with_capacity(args.samples.len());
    let mut sources = Vec::with_capacity(args.samples.len());
    for path in &args.samples {
        let probe: SamplesFile = read_json(path)?;
        let inst = instances.get(&probe.instance_hash).ok_or_else(|| {
            CliError::Contract(format!(
                "{} refers to instance {} which is not in the manifest",
                path.display(),
                probe.instance_hash
            ))
        })?;
        let file = load_samples(path, inst)?;
        runs.push(Run {
            instance: file.instance_hash.clone(),
            solver: file.solver.clone(),
            t_run: file.t_run_seconds,
            states: file.samples.iter().map(|s| s.spins.clone()).collect(),
            energies: file.samples.iter().map(|s| s.energy).collect(),
        });
        sources.push(source(path)?);
    }
    let table = bench_table(&runs, args.budgets.as_deref(), &cfg, args.metric.seed)?;
    if let Some(csv) = &args.csv {
        write_atomic(csv, curves_csv(&table).as_bytes())?;
    }
    write_json(
        &args.out,
        &BenchRecord {
            manifest: source(&args.manifest)?,
            samples: sources,
            table,
        },
    )
}

#[derive(Debug, Serialize)]
struct GridPoint {
    s: Option<f64>,
    tau: Option<f64>,
    h: Option<f64>,
}

#[derive(Debug, Serialize)]
struct ThermoRecord {
    instance_hash: String,
    initial: Source,
    #[serde(rename = "final")]
    final_: Source,
    point: GridPoint,
    samples: usize,
    beta1: f64,
    beta2: BetaEstimate,
    de1: EnergyChangeStats,
    bounds: ThermoBounds,
    bounds_per_spin: ThermoBounds,
    inferred_mode: ModeInference,
    de2: Option<f64>,
    mode: Option<OperatingMode>,
    mode_label: Option<String>,
    ground_energy: Option<f64>,
    p_gs: Option<f64>,
    q_gs: Option<f64>,
    efficiencies: Option<Efficiencies>,
}

fn ground_energy(model: &IsingModel, given: Option<f64>) -> CliResult<Option<f64>> {
    match given {
        Some(e) => Ok(Some(e)),
        None if model.num_spins() <= AUTO_GROUND_CAP => Ok(Some(brute_force(model, 1)?.ground_energy())),
        None => Ok(None),
    }
}

pub fn thermo(args: &ThermoArgs) -> CliResult<()> {
    let inst = load_instance(&args.model)?;
    let model = &inst.model;
    let initial = load_samples(&args.initial, &inst)?;
    let last = load_samples(&args.final_, &inst)?;
    if initial.samples.len() != last.samples.len() {
        return Err(CliError::Contract(format!(
            "{} initial but {} final configurations",
            initial.samples.len(),
            last.samples.len()
        )));
    }
    let init: Vec<SpinConfig> = initial.samples.iter().map(|s| s.spins.clone()).collect();
    let fin: Vec<SpinConfig> = last.samples.iter().map(|s| s.spins.clone()).collect();
    let beta2 = pseudo_likelihood_beta(model, &fin, args.beta_max)?;
    let stats = EnergyChangeStats::from_changes(&energy_changes(model, &init, &fin)?)?;
    let bounds = tur_bounds(&stats, args.beta1, beta2.beta)?;
    let mode = match args.de2 {
        Some(de2) => Some(classify_mode(stats.mean, de2, stats.mean + de2)?),
        None => None,
    };
    let gs = ground_energy(model, args.ground_energy)?;
    let energies: Vec<f64> = last.samples.iter().map(|s| s.energy).collect();
    let (p_gs, q_gs) = match gs {
        Some(e) => (
            Some(success_probability(&energies, e)?),
            solution_quality(&energies, e).ok(),
        ),
        None => (None, None),
    };
    let eff = p_gs.and_then(|p| efficiencies(p, bounds.work_lb, bounds.heat_lb).ok());
    let record = ThermoRecord {
        instance_hash: inst.hash.clone(),
        initial: source(&args.initial)?,
        final_: source(&args.final_)?,
        point: GridPoint {
            s: args.s,
            tau: args.tau,
            h: args.h,
        },
        samples: fin.len(),
        beta1: args.beta1,
        beta2,
        de1: stats,
        bounds,
        bounds_per_spin: bounds.per_spin(model.num_spins()),
        inferred_mode: infer_mode(stats.mean, &bounds),
        de2: args.de2,
        mode,
        mode_label: mode.map(|m| m.label().to_string()),
        ground_energy: gs,
        p_gs,
        q_gs,
        efficiencies: eff,
    };
    write_json(&args.out, &record)
}

/// Output of `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateRecord {
    pub instance_hash: String,
    pub schedule: AnnealSchedule,
    pub steps: usize,
    pub sigma: f64,
    pub draws: usize,
    pub seed: u64,
    pub ground_energy: f64,
    pub ground_states: Vec<SpinConfig>,
    pub ground_state_probability: f64,
    /// Probabilities indexed by configuration; spin `i` is +1 iff bit
    /// `N - i` of the index is set.
    pub distribution: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reference: Option<Source>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tvd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fidelity: Option<f64>,
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let inst = load_instance(&args.model)?;
    let envelope = match &args.envelope {
        Some(path) => {
            let bytes = read_bytes(path)?;
            let text = std::str::from_utf8(&bytes).map_err(|e| CliError::input(path, e))?;
            Envelope::from_csv(text).map_err(|e| CliError::input(path, e))?
        }
        None => Envelope::Linear,
    };
    let need_s_a = || {
        args.s_a
            .ok_or_else(|| CliError::Usage("reverse schedules need --s-a".into()))
    };
    let path = match args.schedule {
        PathKind::Forward => SchedulePath::Forward,
        PathKind::Reverse => SchedulePath::Reverse { s_a: need_s_a()? },
        PathKind::Pause => SchedulePath::ReverseWithPause { s_a: need_s_a()? },
    };
    let schedule = AnnealSchedule::new(envelope, path, args.tau)?;
    let dist = ice_ensemble(&inst.model, args.sigma, args.draws, &schedule, args.steps, args.seed)?;
    // Whole spectrum, so every degenerate ground state is included.
    let spectrum = brute_force(&inst.model, 1usize << inst.model.num_spins())?;
    let ground_states = spectrum.ground_states();
    let (reference, tvd_value, fidelity) = match &args.reference {
        Some(path) => {
            let other: SimulateRecord = read_json(path)?;
            let q = OutcomeDistribution::new(other.distribution)?;
            (Some(source(path)?), Some(tvd(&dist, &q)?), Some(classical_fidelity(&dist, &q)?))
        }
        None => (None, None, None),
    };
    let record = SimulateRecord {
        instance_hash: inst.hash,
        ground_energy: spectrum.ground_energy(),
        ground_state_probability: ground_state_probability(&dist, &ground_states),
        ground_states,
        schedule,
        steps: args.steps,
        sigma: args.sigma,
        draws: args.draws,
        seed: args.seed,
        distribution: dist.probabilities,
        reference,
        tvd: tvd_value,
        fidelity,
    };
    write_json(&args.out, &record)
}

#[derive(Debug, Serialize)]
struct RunSummary {
    file: String,
    sha256: String,
    solver: String,
    seed: u64,
    t_run_seconds: f64,
    best_energy: f64,
    e_approx: f64,
}

#[derive(Debug, Serialize)]
struct MetricsRecord {
    instance_hash: String,
    config: MetricConfig,
    e_best: f64,
    threshold: Threshold,
    runs: Vec<RunSummary>,
    median_e_approx: f64,
    success_fraction: f64,
    /// `null` when no run succeeds.
    tts_seconds: Option<f64>,
    diversity: usize,
    diversity_witnesses: Vec<usize>,
}

pub fn metrics(args: &MetricsArgs) -> CliResult<()> {
    let cfg = metric_config(&args.metric)?;
    let inst = load_instance(&args.instance)?;
    let files: Vec<(PathBuf, SamplesFile)> = args
        .samples
        .iter()
        .map(|p| Ok((p.clone(), load_samples(p, &inst)?)))
        .collect::<CliResult<_>>()?;
    let pooled_best = files.iter().map(|(_, f)| f.best_energy).fold(f64::INFINITY, f64::min);
    let e_best = args.e_best.unwrap_or(pooled_best);
    let threshold = match args.target_energy {
        Some(energy) => Threshold::Absolute { energy },
        None => Threshold::Relative {
            e_best,
            ratio: cfg.approximation_ratio,
        },
    };
    let sets: Vec<_> = files.iter().map(|(_, f)| f.to_sample_set()).collect();
    let mut runs = Vec::with_capacity(files.len());
    for (path, f) in &files {
        runs.push(RunSummary {
            file: file_name(path),
            sha256: sha256_hex(&read_bytes(path)?),
            solver: f.solver.clone(),
            seed: f.seed,
            t_run_seconds: f.t_run_seconds,
            best_energy: f.best_energy,
            e_approx: e_approx(f.best_energy, e_best)?,
        });
    }
    let ea: Vec<f64> = runs.iter().map(|r| r.e_approx).collect();
    let states: Vec<SpinConfig> = files
        .iter()
        .flat_map(|(_, f)| f.samples.iter().map(|s| s.spins.clone()))
        .collect();
    let energies: Vec<f64> = files
        .iter()
        .flat_map(|(_, f)| f.samples.iter().map(|s| s.energy))
        .collect();
    let div = diversity(
        &states,
        &energies,
        e_best,
        cfg.approximation_ratio,
        cfg.independence_fraction,
        cfg.restarts,
        args.metric.seed,
    )?;
    let tts = time_to_target(&sets, &threshold, cfg.target_confidence)?;
    let record = MetricsRecord {
        instance_hash: inst.hash.clone(),
        config: cfg,
        e_best,
        threshold,
        median_e_approx: median(&ea).expect("at least one run"),
        success_fraction: success_fraction(&sets, &threshold)?,
        tts_seconds: tts.is_finite().then_some(tts),
        diversity: div.count,
        diversity_witnesses: div.witnesses,
        runs,
    };
    write_json(&args.out, &record)
}
