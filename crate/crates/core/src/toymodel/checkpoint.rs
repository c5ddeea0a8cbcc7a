use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

use super::params::{ModelConfig, ModelParams};
use super::vocab::Vocabulary;
use super::ToyModel;

const FORMAT: &str = "pts-checkpoint-v1";

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    config: ModelConfig,
    vocab: Vocabulary,
    manifest: Vec<ManifestEntry>,
}

/// One JSON header line, then every parameter as a little-endian `f64` in
/// manifest order.
pub fn write_checkpoint<F: Scalar, W: Write>(mut out: W, model: &ToyModel<F>) -> Result<()> {
    let header = Header {
        format: FORMAT.to_string(),
        config: model.config.clone(),
        vocab: model.vocab.clone(),
        manifest: model
            .params
            .shapes()
            .into_iter()
            .map(|(name, shape)| ManifestEntry {
                name: name.to_string(),
                shape,
            })
            .collect(),
    };
    let io = |e| Error::io("<checkpoint>", e);
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n").map_err(io)?;
    for (_, tensor) in model.params.tensors() {
        for v in tensor {
            out.write_all(&v.to_f64_lossy().to_le_bytes()).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

pub fn read_checkpoint<F: Scalar, R: BufRead>(mut input: R) -> Result<ToyModel<F>> {
    let io = |e| Error::io("<checkpoint>", e);
    let mut line = Vec::new();
    input.read_until(b'\n', &mut line).map_err(io)?;
    let header: Header = serde_json::from_slice(&line)?;
    if header.format != FORMAT {
        return Err(Error::Checkpoint(format!(
            "unknown format {:?}",
            header.format
        )));
    }
    let mut model = ToyModel::new(header.config, header.vocab)?;
    let expected = model.params.shapes();
    if expected.len() != header.manifest.len()
        || expected
            .iter()
            .zip(&header.manifest)
            .any(|((n, s), m)| *n != m.name || *s != m.shape)
    {
        return Err(Error::Checkpoint(
            "manifest does not match the model config".into(),
        ));
    }
    let mut buf = [0u8; 8];
    for (name, tensor) in model.params.tensors_mut() {
        for v in tensor.iter_mut() {
            input
                .read_exact(&mut buf)
                .map_err(|_| Error::Checkpoint(format!("truncated data in tensor {name}")))?;
            *v = F::from_f64_lossy(f64::from_le_bytes(buf));
        }
    }
    if input.read(&mut buf).map_err(io)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after parameters".into()));
    }
    if !model.params.is_finite() {
        return Err(Error::Checkpoint("non-finite parameter values".into()));
    }
    Ok(model)
}

pub fn save_checkpoint<F: Scalar>(path: impl AsRef<Path>, model: &ToyModel<F>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(BufWriter::new(file), model).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn load_checkpoint<F: Scalar>(path: impl AsRef<Path>) -> Result<ToyModel<F>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

#[doc(hidden)]
pub fn parameter_bytes<F: Scalar>(params: &ModelParams<F>) -> Vec<u8> {
    params
        .tensors()
        .iter()
        .flat_map(|(_, t)| t.iter().flat_map(|v| v.to_f64_lossy().to_le_bytes()))
        .collect()
}
