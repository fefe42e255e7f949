//! File access: hashing, atomic writes and typed loaders.

use std::io::Write;
use std::path::Path;

use isingkit::instances::parse_coo;
use isingkit::IsingModel;
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::records::SamplesFile;

/// Lowercase hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

/// File name without directories, for records that must not depend on
/// where the inputs live.
pub fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("records serialize");
    out.push(b'\n');
    out
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_atomic(path, &to_json_bytes(value))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::input(path, e))
}

/// A parsed COO instance with the hash of its exact bytes.
#[derive(Debug, Clone)]
pub struct Instance {
    pub model: IsingModel,
    pub hash: String,
    pub name: String,
}

pub fn load_instance(path: &Path) -> CliResult<Instance> {
    let bytes = read_bytes(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| CliError::input(path, e))?;
    let model = parse_coo(text).map_err(|e| CliError::input(path, e))?;
    Ok(Instance {
        model,
        hash: sha256_hex(&bytes),
        name: file_name(path),
    })
}

/// Loads a samples file and checks it belongs to `instance` and that every
/// stored energy re-evaluates.
pub fn load_samples(path: &Path, instance: &Instance) -> CliResult<SamplesFile> {
    let file: SamplesFile = read_json(path)?;
    if file.instance_hash != instance.hash {
        return Err(CliError::Contract(format!(
            "{} was produced for instance {} but {} hashes to {}",
            path.display(),
            file.instance_hash,
            instance.name,
            instance.hash
        )));
    }
    file.verify(&instance.model)
        .map_err(|e| CliError::Contract(format!("{}: {e}", path.display())))?;
    Ok(file)
}
