//! JSON artifact schemas.

use isingkit::annealers::{Sample, SampleSet};
use isingkit::{IsingModel, SpinConfig};
use serde::{Deserialize, Serialize};

/// Largest tolerated gap between a stored and a recomputed energy.
pub const ENERGY_TOL: f64 = 1e-9;

/// Instance manifest written by `gen`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub class: String,
    pub graph: GraphSource,
    pub seed: u64,
    pub count: usize,
    pub instances: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GraphSource {
    Lattice {
        rows: usize,
        cols: usize,
        cell_size: usize,
        diagonal_edges: bool,
    },
    File {
        file: String,
        sha256: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
    pub seed: u64,
    pub num_spins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub spins: SpinConfig,
    pub energy: f64,
}

/// Output of `solve`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplesFile {
    pub instance_hash: String,
    pub solver: String,
    pub params: serde_json::Value,
    pub seed: u64,
    pub t_run_seconds: f64,
    pub samples: Vec<SampleRecord>,
    pub best_energy: f64,
    pub instance: String,
    pub sample_count: usize,
}

impl SamplesFile {
    pub fn verify(&self, model: &IsingModel) -> isingkit::Result<()> {
        if self.samples.len() != self.sample_count {
            return Err(isingkit::Error::Inconsistent(format!(
                "sample_count {} but {} samples stored",
                self.sample_count,
                self.samples.len()
            )));
        }
        for (k, s) in self.samples.iter().enumerate() {
            let e = model.energy(&s.spins)?;
            if (e - s.energy).abs() > ENERGY_TOL * e.abs().max(1.0) {
                return Err(isingkit::Error::Inconsistent(format!(
                    "sample {k} stores energy {} but evaluates to {e}",
                    s.energy
                )));
            }
        }
        let best = self.samples.iter().map(|s| s.energy).fold(f64::INFINITY, f64::min);
        if self.samples.is_empty() || best != self.best_energy {
            return Err(isingkit::Error::Inconsistent(format!(
                "best_energy {} does not match the samples",
                self.best_energy
            )));
        }
        Ok(())
    }

    pub fn to_sample_set(&self) -> SampleSet {
        SampleSet {
            solver: self.solver.clone(),
            seed: self.seed,
            run_time: self.t_run_seconds,
            samples: self
                .samples
                .iter()
                .enumerate()
                .map(|(replica, s)| Sample {
                    spins: s.spins.clone(),
                    energy: s.energy,
                    replica,
                })
                .collect(),
        }
    }
}

/// Name and hash of an input file, so results trace back to exact bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Source {
    pub file: String,
    pub sha256: String,
}
