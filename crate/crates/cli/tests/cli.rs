use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use isingkit::instances::{build_lattice, generate, write_coo, InstanceClass, LatticeSpec};
use isingkit::oracle::brute_force;
use isingkit::{GibbsTable, IsingModel, SpinConfig};
use serde_json::{json, Value};

fn isingkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isingkit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = isingkit(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

fn write_model(dir: &Path, name: &str, model: &IsingModel) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, write_coo(model)).unwrap();
    p
}

fn example() -> IsingModel {
    IsingModel::from_parts(3, [(1, 2, 1.0), (1, 3, 0.5), (2, 3, -0.75)], vec![1.0, -1.0, 1.5]).unwrap()
}

fn king(rows: usize, cols: usize, seed: u64) -> IsingModel {
    let spec = LatticeSpec::king(rows, cols, 2).unwrap();
    generate(InstanceClass::Rau, spec.num_spins(), &build_lattice(&spec), seed).unwrap()
}

/// A samples file in the `solve` schema, built directly from configurations.
fn write_samples(dir: &Path, name: &str, instance: &Path, model: &IsingModel, configs: &[SpinConfig]) -> PathBuf {
    let bytes = std::fs::read(instance).unwrap();
    let hash = isingkit_cli::io::sha256_hex(&bytes);
    let samples: Vec<Value> = configs
        .iter()
        .map(|c| json!({ "spins": c, "energy": model.energy(c).unwrap() }))
        .collect();
    let best = configs
        .iter()
        .map(|c| model.energy(c).unwrap())
        .fold(f64::INFINITY, f64::min);
    let v = json!({
        "instance_hash": hash,
        "solver": "fixture",
        "params": {},
        "seed": 0,
        "t_run_seconds": 1.0,
        "samples": samples,
        "best_energy": best,
        "instance": "fixture",
        "sample_count": configs.len(),
    });
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_vec(&v).unwrap()).unwrap();
    p
}

#[test]
fn gen_writes_instances_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rco");
    ok(&["gen", "--class", "rco", "--lattice", "3x3x2", "--count", "20", "--seed", "7", "--out", s(&out)]);
    let manifest = read_json(&out.join("manifest.json"));
    let entries = manifest["instances"].as_array().unwrap();
    assert_eq!(entries.len(), 20);
    for (k, e) in entries.iter().enumerate() {
        let path = out.join(e["file"].as_str().unwrap());
        assert_eq!(e["file"], format!("rco_{k}.txt"));
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(e["sha256"], isingkit_cli::io::sha256_hex(&bytes));
        let m = isingkit::instances::parse_coo(std::str::from_utf8(&bytes).unwrap()).unwrap();
        assert_eq!(m.num_spins(), 18);
        assert!(m.fields().iter().all(|&h| h == 0.0));
    }

    let empty = dir.path().join("empty");
    ok(&["gen", "--class", "rau", "--lattice", "2x2x2", "--count", "0", "--out", s(&empty)]);
    let names: Vec<_> = std::fs::read_dir(&empty).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names, vec!["manifest.json"]);
}

#[test]
fn gen_from_graph_file() {
    let dir = tempfile::tempdir().unwrap();
    let graph = write_model(dir.path(), "g.txt", &example());
    let out = dir.path().join("out");
    ok(&["gen", "--class", "cbfm-p", "--graph", s(&graph), "--count", "2", "--out", s(&out), "--name", "g"]);
    let m = isingkit::instances::parse_coo(&std::fs::read_to_string(out.join("g_1.txt")).unwrap()).unwrap();
    assert_eq!(m.num_spins(), 3);
    assert_eq!(read_json(&out.join("manifest.json"))["graph"]["kind"], "file");
}

#[test]
fn bruteforce_on_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write_model(dir.path(), "ex.txt", &example());
    let out = dir.path().join("bf.json");
    ok(&["solve", s(&inst), "--solver", "bruteforce", "--k", "3", "--out", s(&out)]);
    let v = read_json(&out);
    assert!((v["best_energy"].as_f64().unwrap() + 3.25).abs() < 1e-12);
    assert_eq!(v["samples"].as_array().unwrap().len(), 3);
    for key in ["instance_hash", "solver", "params", "seed", "t_run_seconds", "samples", "best_energy"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn every_solver_reports_verified_samples() {
    let dir = tempfile::tempdir().unwrap();
    let model = king(2, 3, 4);
    let inst = write_model(dir.path(), "k.txt", &model);
    let gs = brute_force(&model, 1).unwrap().ground_energy();
    for solver in ["sa", "pa", "sbm", "descent", "peps", "bruteforce"] {
        let out = dir.path().join(format!("{solver}.json"));
        let mut args = vec!["solve", s(&inst), "--solver", solver, "--seed", "3", "--out", s(&out)];
        if solver == "peps" {
            args.extend(["--lattice", "2x3x2"]);
        }
        ok(&args);
        let v = read_json(&out);
        let file: isingkit_cli::records::SamplesFile = serde_json::from_value(v).unwrap();
        file.verify(&model).unwrap();
        assert_eq!(file.solver, solver);
        assert!(file.best_energy >= gs - 1e-9);
        if solver != "descent" {
            assert!((file.best_energy - gs).abs() < 1e-9, "{solver}");
        }
    }
}

#[test]
fn peps_all_transforms() {
    let dir = tempfile::tempdir().unwrap();
    let model = king(3, 3, 2);
    let inst = write_model(dir.path(), "k.txt", &model);
    let out = dir.path().join("p.json");
    ok(&[
        "solve", s(&inst), "--solver", "peps", "--lattice", "3x3x2", "--chi", "32", "--beta", "2",
        "--max-states", "256", "--transforms", "all", "--out", s(&out),
        "--droplet-max-energy", "2", "--droplet-min-hamming", "3",
    ]);
    let v = read_json(&out);
    assert_eq!(v["params"]["transforms"].as_array().unwrap().len(), 8);
    assert!(v["droplets"].is_array());
    let gs = brute_force(&model, 1).unwrap().ground_energy();
    assert!((v["best_energy"].as_f64().unwrap() - gs).abs() < 1e-9);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = isingkit(&["solve", s(&dir.path().join("nope.txt")), "--solver", "sa", "--out", "x.json"]);
    assert_eq!(missing.status.code(), Some(2));
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "1 2\n").unwrap();
    let malformed = isingkit(&["solve", s(&bad), "--solver", "sa", "--out", s(&dir.path().join("o.json"))]);
    assert_eq!(malformed.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&malformed.stderr).contains("line 1"));
    let inst = write_model(dir.path(), "ex.txt", &example());
    let unknown = isingkit(&["solve", s(&inst), "--solver", "magic", "--out", "x.json"]);
    assert_eq!(unknown.status.code(), Some(2));
    let peps = isingkit(&["solve", s(&inst), "--solver", "peps", "--out", "x.json"]);
    assert_eq!(peps.status.code(), Some(2));
    // Too large for the dense simulator: a contract failure.
    let big = write_model(dir.path(), "big.txt", &king(2, 4, 1));
    let sim = isingkit(&["simulate", "--model", s(&big), "--tau", "1", "--steps", "1", "--out", s(&dir.path().join("s.json"))]);
    assert_eq!(sim.status.code(), Some(1));
}

#[test]
fn bench_curves_and_hash_checks() {
    let dir = tempfile::tempdir().unwrap();
    let inst_dir = dir.path().join("inst");
    ok(&["gen", "--class", "rau", "--lattice", "2x2x2", "--count", "2", "--seed", "1", "--out", s(&inst_dir)]);
    let manifest = inst_dir.join("manifest.json");
    let mut samples = Vec::new();
    for (k, solver) in [(0, "sa"), (1, "sa"), (0, "descent"), (1, "descent")] {
        let out = dir.path().join(format!("{solver}_{k}.json"));
        let t = if solver == "sa" { "2" } else { "1" };
        ok(&[
            "solve", s(&inst_dir.join(format!("rau_{k}.txt"))), "--solver", solver, "--replicas", "4",
            "--out", s(&out), "--t-run", t,
        ]);
        samples.push(out);
    }
    let out = dir.path().join("bench.json");
    let csv = dir.path().join("bench.csv");
    let mut args = vec!["bench", "--manifest", s(&manifest), "--out", s(&out), "--csv", s(&csv), "--samples"];
    args.extend(samples.iter().map(|p| s(p)));
    ok(&args);
    let v = read_json(&out);
    assert_eq!(v["budgets"], json!([1.0, 2.0]));
    let instances = v["instances"].as_array().unwrap();
    for (inst, k) in instances.iter().zip(0..) {
        let e_best = inst["e_best"].as_f64().unwrap();
        for p in &samples {
            let f = read_json(p);
            if f["instance_hash"] == inst["instance_hash"] {
                assert!(e_best <= f["best_energy"].as_f64().unwrap(), "instance {k}");
            }
        }
    }
    // descent at budget 1, descent and sa at budget 2.
    assert_eq!(v["curves"].as_array().unwrap().len(), 3);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 4);

    // A samples file whose instance is not in the manifest aborts.
    let stray_inst = write_model(dir.path(), "stray.txt", &example());
    let stray = dir.path().join("stray.json");
    ok(&["solve", s(&stray_inst), "--solver", "sa", "--out", s(&stray)]);
    let bad = isingkit(&["bench", "--manifest", s(&manifest), "--out", s(&out), "--samples", s(&stray)]);
    assert_eq!(bad.status.code(), Some(1));
    // So does an instance file edited after the manifest was written.
    std::fs::write(inst_dir.join("rau_0.txt"), write_coo(&example())).unwrap();
    let bad = isingkit(&["bench", "--manifest", s(&manifest), "--out", s(&out), "--samples", s(&samples[1])]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn metrics_record() {
    let dir = tempfile::tempdir().unwrap();
    let model = king(2, 2, 5);
    let inst = write_model(dir.path(), "k.txt", &model);
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    ok(&["solve", s(&inst), "--solver", "bruteforce", "--out", s(&a), "--t-run", "1"]);
    ok(&["solve", s(&inst), "--solver", "descent", "--replicas", "1", "--seed", "2", "--out", s(&b), "--t-run", "1"]);
    let out = dir.path().join("m.json");
    ok(&["metrics", "--instance", s(&inst), "--samples", s(&a), s(&b), "--out", s(&out)]);
    let v = read_json(&out);
    let gs = brute_force(&model, 1).unwrap().ground_energy();
    assert_eq!(v["e_best"].as_f64().unwrap(), gs);
    let p = v["success_fraction"].as_f64().unwrap();
    assert!(p == 0.5 || p == 1.0);
    assert!(v["diversity"].as_u64().unwrap() >= 1);
}

#[test]
fn thermo_recovers_gibbs_temperature() {
    let dir = tempfile::tempdir().unwrap();
    let model = king(2, 3, 11);
    let inst = write_model(dir.path(), "k.txt", &model);
    let table = GibbsTable::new(&model, 1.0).unwrap();
    let mut rng = isingkit::rng::stream(5, 0);
    let last = table.sample(10_000, &mut rng);
    let first = table.sample(10_000, &mut rng);
    let fin = write_samples(dir.path(), "fin.json", &inst, &model, &last);
    let init = write_samples(dir.path(), "init.json", &inst, &model, &first);
    let out = dir.path().join("t.json");
    ok(&["thermo", "--model", s(&inst), "--initial", s(&init), "--final", s(&fin), "--beta1", "1", "--out", s(&out)]);
    let v = read_json(&out);
    let beta = v["beta2"]["beta"].as_f64().unwrap();
    assert!((beta - 1.0).abs() <= 0.05, "beta = {beta}");
    assert!(v["p_gs"].as_f64().unwrap() > 0.0);
}

#[test]
fn thermo_zero_mean_change_and_modes() {
    let dir = tempfile::tempdir().unwrap();
    let model = king(2, 2, 9);
    let inst = write_model(dir.path(), "k.txt", &model);
    let spectrum = brute_force(&model, 2).unwrap();
    let (g, x) = (spectrum.states[0].config.clone(), spectrum.states[1].config.clone());
    let gap = spectrum.states[1].energy - spectrum.states[0].energy;
    assert!(gap > 0.0);

    let thermo = |init: &[SpinConfig], fin: &[SpinConfig], de2: Option<f64>| -> Value {
        let i = write_samples(dir.path(), "i.json", &inst, &model, init);
        let f = write_samples(dir.path(), "f.json", &inst, &model, fin);
        let out = dir.path().join("t.json");
        let de2s = de2.map(|d| d.to_string());
        let mut args = vec!["thermo", "--model", s(&inst), "--initial", s(&i), "--final", s(&f), "--beta1", "1", "--out", s(&out)];
        if let Some(d) = &de2s {
            args.extend(["--de2", d.as_str()]);
        }
        ok(&args);
        read_json(&out)
    };

    let zero = thermo(&[g.clone(), x.clone()], &[x.clone(), g.clone()], None);
    assert_eq!(zero["de1"]["mean"], 0.0);
    for k in ["sigma_lb", "heat_lb", "work_lb"] {
        assert_eq!(zero["bounds"][k].as_f64().unwrap().abs(), 0.0, "{k}");
    }

    let up = [g.clone(), x.clone()];
    let up_fin = [x.clone(), x.clone()];
    let d = gap / 2.0;
    assert_eq!(thermo(&up, &up_fin, Some(-d / 2.0))["mode_label"], "R");
    assert_eq!(thermo(&up, &up_fin, Some(d))["mode_label"], "H");
    let down = [x.clone(), x.clone()];
    let down_fin = [g.clone(), x.clone()];
    assert_eq!(thermo(&down, &down_fin, Some(d / 2.0))["mode_label"], "E");
    assert_eq!(thermo(&down, &down_fin, Some(2.0 * d))["mode_label"], "A");
}

#[test]
fn simulate_records() {
    let dir = tempfile::tempdir().unwrap();
    let ferro = IsingModel::from_parts(2, [(1, 2, -1.0)], vec![0.0; 2]).unwrap();
    let inst = write_model(dir.path(), "f.txt", &ferro);
    let long = dir.path().join("long.json");
    ok(&["simulate", "--model", s(&inst), "--tau", "1000", "--steps", "10000", "--out", s(&long)]);
    assert!(read_json(&long)["ground_state_probability"].as_f64().unwrap() >= 0.99);

    let noisy = write_model(dir.path(), "n.txt", &king(1, 2, 3));
    let one = dir.path().join("one.json");
    let many = dir.path().join("many.json");
    let base = ["simulate", "--model", s(&noisy), "--tau", "5", "--steps", "50", "--sigma", "0"];
    ok(&[&base[..], &["--draws", "1", "--out", s(&one)]].concat());
    ok(&[&base[..], &["--draws", "100", "--out", s(&many)]].concat());
    let (a, b) = (read_json(&one), read_json(&many));
    assert_eq!(a["distribution"], b["distribution"]);
    assert_eq!(a["ground_state_probability"], b["ground_state_probability"]);

    let cmp = dir.path().join("cmp.json");
    let csv = dir.path().join("env.csv");
    std::fs::write(&csv, "s,A,B\n0,1,0\n1,0,1\n").unwrap();
    ok(&[
        "simulate", "--model", s(&noisy), "--tau", "5", "--steps", "50", "--schedule", "reverse", "--s-a", "0.3",
        "--envelope", s(&csv), "--sigma", "0.05", "--draws", "8", "--reference", s(&one), "--out", s(&cmp),
    ]);
    let v = read_json(&cmp);
    let t = v["tvd"].as_f64().unwrap();
    let f = v["fidelity"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&f));
    assert_eq!(v["reference"]["file"], "one.json");
}
