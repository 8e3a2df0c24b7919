//! On-disk formats: flat binary arrays with a JSON-text header line, network
//! checkpoints (JSON manifest + shared binary weight format), and the CSV
//! appenders used for metrics.
//!
//! Binary layout of a transition file: one JSON header line terminated by
//! `\n`, then row-major little-endian f64 payloads in order: states
//! (`n × d`), next states (`n × d'`), and, when labeled, actions (`n`,
//! stored as f64).

use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::env::TransitionSet;
use crate::error::StorageError;
use crate::net::{Activation, Network};

#[derive(Debug, Serialize, Deserialize)]
struct TransitionHeader {
    n: usize,
    d: usize,
    d_prime: usize,
    labeled: bool,
    seed: u64,
}

fn io_err(path: &Path, source: std::io::Error) -> StorageError {
    StorageError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn save_transitions(path: &Path, set: &TransitionSet) -> Result<(), StorageError> {
    let header = TransitionHeader {
        n: set.len(),
        d: set.state_dim(),
        d_prime: set.next_dim(),
        labeled: set.labeled(),
        seed: set.seed,
    };
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, &header).expect("header serializes");
    w.write_all(b"\n").map_err(|e| io_err(path, e))?;
    write_f64s(&mut w, set.states.iter().copied()).map_err(|e| io_err(path, e))?;
    write_f64s(&mut w, set.next_states.iter().copied()).map_err(|e| io_err(path, e))?;
    if let Some(actions) = &set.actions {
        write_f64s(&mut w, actions.iter().map(|&a| a as f64)).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn load_transitions(path: &Path) -> Result<TransitionSet, StorageError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = BufReader::new(file);
    let header: TransitionHeader = read_header_line(&mut r, path)?;
    let states = read_f64s(&mut r, header.n * header.d, path)?;
    let next = read_f64s(&mut r, header.n * header.d_prime, path)?;
    let actions = if header.labeled {
        Some(
            read_f64s(&mut r, header.n, path)?
                .into_iter()
                .map(|v| v as u32)
                .collect(),
        )
    } else {
        None
    };
    Ok(TransitionSet {
        states: Array2::from_shape_vec((header.n, header.d), states).expect("shape"),
        next_states: Array2::from_shape_vec((header.n, header.d_prime), next).expect("shape"),
        actions,
        seed: header.seed,
    })
}

/// Network checkpoint manifest: architecture, provenance and training step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub layer_dims: Vec<usize>,
    pub activations: Vec<Activation>,
    pub seed: u64,
    pub step: u64,
    /// Free-form role tag ("idm", "fdm", "policy", ...).
    pub kind: String,
    /// Latent-space size for encoder/decoder checkpoints, 0 when not applicable.
    pub latent_count: usize,
}

/// Write `<prefix>.json` (manifest) and `<prefix>.bin` (flat weights).
pub fn save_network(
    prefix: &Path,
    net: &Network,
    manifest: &CheckpointManifest,
) -> Result<(), StorageError> {
    let json_path = prefix.with_extension("json");
    let bin_path = prefix.with_extension("bin");
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(&json_path, json).map_err(|e| io_err(&json_path, e))?;

    let flat = net.flat_parameters();
    let file = File::create(&bin_path).map_err(|e| io_err(&bin_path, e))?;
    let mut w = BufWriter::new(file);
    let header = serde_json::json!({ "len": flat.len() });
    serde_json::to_writer(&mut w, &header).expect("header serializes");
    w.write_all(b"\n").map_err(|e| io_err(&bin_path, e))?;
    write_f64s(&mut w, flat.into_iter()).map_err(|e| io_err(&bin_path, e))?;
    w.flush().map_err(|e| io_err(&bin_path, e))
}

/// Load a checkpoint written by [`save_network`].
pub fn load_network(prefix: &Path) -> Result<(Network, CheckpointManifest), StorageError> {
    let json_path = prefix.with_extension("json");
    let bin_path = prefix.with_extension("bin");
    let manifest_text =
        std::fs::read_to_string(&json_path).map_err(|e| io_err(&json_path, e))?;
    let manifest: CheckpointManifest =
        serde_json::from_str(&manifest_text).map_err(|e| StorageError::MalformedHeader {
            path: json_path.display().to_string(),
            reason: e.to_string(),
        })?;

    let mut net = Network::seeded(&manifest.layer_dims, &manifest.activations, 0).map_err(|e| {
        StorageError::MalformedHeader {
            path: json_path.display().to_string(),
            reason: e.to_string(),
        }
    })?;
    let file = File::open(&bin_path).map_err(|e| io_err(&bin_path, e))?;
    let mut r = BufReader::new(file);
    let header: serde_json::Value = read_header_line(&mut r, &bin_path)?;
    let len = header["len"].as_u64().ok_or_else(|| StorageError::MalformedHeader {
        path: bin_path.display().to_string(),
        reason: "missing len".into(),
    })? as usize;
    let flat = read_f64s(&mut r, len, &bin_path)?;
    net.set_flat_parameters(&flat)
        .map_err(|e| StorageError::MalformedHeader {
            path: bin_path.display().to_string(),
            reason: e.to_string(),
        })?;
    Ok((net, manifest))
}

fn write_f64s<W: Write>(w: &mut W, values: impl Iterator<Item = f64>) -> std::io::Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, count: usize, path: &Path) -> Result<Vec<f64>, StorageError> {
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes).map_err(|_| StorageError::PayloadMismatch {
        path: path.display().to_string(),
        expected: count * 8,
        got: 0,
    })?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

fn read_header_line<R: Read, T: for<'de> Deserialize<'de>>(
    r: &mut R,
    path: &Path,
) -> Result<T, StorageError> {
    let mut line = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        r.read_exact(&mut byte).map_err(|_| StorageError::MalformedHeader {
            path: path.display().to_string(),
            reason: "unterminated header line".into(),
        })?;
        if byte[0] == b'\n' {
            break;
        }
        line.push(byte[0]);
        if line.len() > 64 * 1024 {
            return Err(StorageError::MalformedHeader {
                path: path.display().to_string(),
                reason: "header line too long".into(),
            });
        }
    }
    serde_json::from_slice(&line).map_err(|e| StorageError::MalformedHeader {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Append one CSV row, writing `header` first when the file does not exist.
pub fn append_csv_row(path: &Path, header: &str, row: &str) -> Result<(), StorageError> {
    let exists = path.exists();
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    if !exists {
        writeln!(w, "{header}").map_err(|e| io_err(path, e))?;
    }
    writeln!(w, "{row}").map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{make_builtin_env, sample_transitions};
    use crate::net::Activation;

    #[test]
    fn transition_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let env = make_builtin_env("quadrant4", 0).unwrap();
        for labeled in [true, false] {
            let set = sample_transitions(&env, 64, 9, labeled).unwrap();
            let path = dir.path().join(format!("t_{labeled}.bin"));
            save_transitions(&path, &set).unwrap();
            let loaded = load_transitions(&path).unwrap();
            assert_eq!(loaded.states, set.states);
            assert_eq!(loaded.next_states, set.next_states);
            assert_eq!(loaded.actions, set.actions);
            assert_eq!(loaded.seed, set.seed);
        }
    }

    #[test]
    fn checkpoint_roundtrip_restores_parameters() {
        let dir = tempfile::tempdir().unwrap();
        let net = Network::mlp(4, &[8, 8], 3, Activation::Identity, 17).unwrap();
        let manifest = CheckpointManifest {
            layer_dims: vec![4, 8, 8, 3],
            activations: vec![Activation::Tanh, Activation::Tanh, Activation::Identity],
            seed: 17,
            step: 123,
            kind: "idm".into(),
            latent_count: 3,
        };
        let prefix = dir.path().join("model");
        save_network(&prefix, &net, &manifest).unwrap();
        let (loaded, loaded_manifest) = load_network(&prefix).unwrap();
        assert_eq!(loaded.flat_parameters(), net.flat_parameters());
        assert_eq!(loaded_manifest.step, 123);
        assert_eq!(loaded_manifest.kind, "idm");
    }

    #[test]
    fn csv_appender_writes_header_once() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        append_csv_row(&path, "a,b", "1,2").unwrap();
        append_csv_row(&path, "a,b", "3,4").unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "a,b\n1,2\n3,4\n");
    }
}
