//! Checkpoint directory format.
//!
//! * `model.json`: the [`ModelConfig`]
//! * `manifest.json` + `weights.bin`: trainable parameters, little-endian f32,
//!   concatenated in manifest order
//! * `buffers.json` + `buffers.bin`: batch-norm running statistics in the same
//!   layout (kept apart so `weights.bin` holds exactly the trainable scalars)

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::net::{ModelConfig, SegNet};
use crate::error::{Error, Result};
use crate::nn::{Module, Visitor};
use crate::tensor::{lit, Element, RunningStats, Tensor};

pub const MODEL_FILE: &str = "model.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const WEIGHTS_FILE: &str = "weights.bin";
pub const BUFFER_MANIFEST_FILE: &str = "buffers.json";
pub const BUFFERS_FILE: &str = "buffers.bin";

const DTYPE: &str = "f32";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub byte_offset: u64,
}

impl ManifestEntry {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Manifest(pub Vec<ManifestEntry>);

impl Manifest {
    pub fn scalar_count(&self) -> usize {
        self.0.iter().map(ManifestEntry::numel).sum()
    }

    fn byte_len(&self) -> u64 {
        4 * self.scalar_count() as u64
    }
}

/// Named arrays in traversal order.
type Arrays = Vec<(String, Vec<usize>, Vec<f64>)>;

fn encode(arrays: &Arrays) -> (Manifest, Vec<u8>) {
    let mut entries = Vec::with_capacity(arrays.len());
    let mut blob = Vec::new();
    for (name, shape, values) in arrays {
        entries.push(ManifestEntry {
            name: name.clone(),
            shape: shape.clone(),
            dtype: DTYPE.into(),
            byte_offset: blob.len() as u64,
        });
        for &v in values {
            blob.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    (Manifest(entries), blob)
}

fn decode_entry(entry: &ManifestEntry, blob: &[u8]) -> Result<Vec<f32>> {
    if entry.dtype != DTYPE {
        return Err(Error::Checkpoint(format!("{}: unsupported dtype '{}'", entry.name, entry.dtype)));
    }
    let start = entry.byte_offset as usize;
    let end = start + 4 * entry.numel();
    let bytes = blob
        .get(start..end)
        .ok_or_else(|| Error::Checkpoint(format!("{}: bytes {start}..{end} out of range", entry.name)))?;
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}

struct Collect<T: Element> {
    params: Vec<(String, Tensor<T>)>,
    /// `(name, running mean, running var)` snapshots.
    buffers: Vec<(String, Vec<T>, Vec<T>)>,
}

impl<T: Element> Visitor<T> for Collect<T> {
    fn param(&mut self, name: &str, tensor: &Tensor<T>) {
        self.params.push((name.into(), tensor.clone()));
    }

    fn buffer(&mut self, name: &str, stats: &RunningStats<T>) {
        self.buffers.push((name.into(), stats.mean(), stats.var()));
    }
}

struct ApplyBuffers<T: Element> {
    values: std::vec::IntoIter<(Vec<T>, Vec<T>)>,
    result: Result<()>,
}

impl<T: Element> Visitor<T> for ApplyBuffers<T> {
    fn param(&mut self, _: &str, _: &Tensor<T>) {}

    fn buffer(&mut self, _: &str, stats: &RunningStats<T>) {
        if let (Some((mean, var)), Ok(())) = (self.values.next(), &self.result) {
            self.result = stats.set(mean, var);
        }
    }
}

fn collect<T: Element>(net: &SegNet<T>) -> Collect<T> {
    let mut c = Collect {
        params: Vec::new(),
        buffers: Vec::new(),
    };
    net.visit("", &mut c);
    c
}

fn to_f64<T: Element>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect()
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| Error::io(path, e))
}

fn read(dir: &Path, name: &str) -> Result<Vec<u8>> {
    let path = dir.join(name);
    fs::read(&path).map_err(|e| Error::io(path, e))
}

fn read_json<D: for<'de> Deserialize<'de>>(dir: &Path, name: &str) -> Result<D> {
    serde_json::from_slice(&read(dir, name)?)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", dir.join(name).display())))
}

pub fn save<T: Element>(net: &SegNet<T>, dir: impl AsRef<Path>) -> Result<Manifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let c = collect(net);
    let params: Arrays = c
        .params
        .iter()
        .map(|(n, t)| (n.clone(), t.shape().to_vec(), to_f64(&t.to_vec())))
        .collect();
    let buffers: Arrays = c
        .buffers
        .iter()
        .flat_map(|(n, mean, var)| {
            let shape = vec![mean.len()];
            [
                (format!("{n}.running_mean"), shape.clone(), to_f64(mean)),
                (format!("{n}.running_var"), shape, to_f64(var)),
            ]
        })
        .collect();
    let (manifest, blob) = encode(&params);
    let (buffer_manifest, buffer_blob) = encode(&buffers);
    write(dir, MODEL_FILE, &serde_json::to_vec_pretty(&net.config)?)?;
    write(dir, MANIFEST_FILE, &serde_json::to_vec_pretty(&manifest)?)?;
    write(dir, WEIGHTS_FILE, &blob)?;
    write(dir, BUFFER_MANIFEST_FILE, &serde_json::to_vec_pretty(&buffer_manifest)?)?;
    write(dir, BUFFERS_FILE, &buffer_blob)?;
    Ok(manifest)
}

pub fn read_config(dir: impl AsRef<Path>) -> Result<ModelConfig> {
    read_json(dir.as_ref(), MODEL_FILE)
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    read_json(dir.as_ref(), MANIFEST_FILE)
}

fn check_entry(entry: &ManifestEntry, name: &str, shape: &[usize]) -> Result<()> {
    if entry.name != name || entry.shape != shape {
        return Err(Error::Checkpoint(format!(
            "manifest entry {}{:?} does not match model tensor {name}{shape:?}",
            entry.name, entry.shape
        )));
    }
    Ok(())
}

fn check_blob(manifest: &Manifest, blob: &[u8], file: &str) -> Result<()> {
    if blob.len() as u64 != manifest.byte_len() {
        return Err(Error::Checkpoint(format!(
            "{file} holds {} bytes, manifest describes {}",
            blob.len(),
            manifest.byte_len()
        )));
    }
    Ok(())
}

/// Overwrites the parameters and running statistics of `net` with those
/// stored in `dir`. Names, order and shapes must match exactly.
pub fn load_into<T: Element>(net: &SegNet<T>, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let c = collect(net);
    let manifest = read_manifest(dir)?;
    let blob = read(dir, WEIGHTS_FILE)?;
    check_blob(&manifest, &blob, WEIGHTS_FILE)?;
    if manifest.0.len() != c.params.len() {
        return Err(Error::Checkpoint(format!(
            "manifest lists {} tensors, model has {}",
            manifest.0.len(),
            c.params.len()
        )));
    }
    let mut staged = Vec::with_capacity(c.params.len());
    for (entry, (name, t)) in manifest.0.iter().zip(&c.params) {
        check_entry(entry, name, t.shape())?;
        staged.push(decode_entry(entry, &blob)?);
    }

    let buffer_manifest: Manifest = read_json(dir, BUFFER_MANIFEST_FILE)?;
    let buffer_blob = read(dir, BUFFERS_FILE)?;
    check_blob(&buffer_manifest, &buffer_blob, BUFFERS_FILE)?;
    if buffer_manifest.0.len() != 2 * c.buffers.len() {
        return Err(Error::Checkpoint(format!(
            "buffer manifest lists {} arrays, model has {}",
            buffer_manifest.0.len(),
            2 * c.buffers.len()
        )));
    }
    let mut staged_buffers = Vec::with_capacity(c.buffers.len());
    for (pair, (name, mean, _)) in buffer_manifest.0.chunks_exact(2).zip(&c.buffers) {
        let shape = [mean.len()];
        check_entry(&pair[0], &format!("{name}.running_mean"), &shape)?;
        check_entry(&pair[1], &format!("{name}.running_var"), &shape)?;
        staged_buffers.push((decode_entry(&pair[0], &buffer_blob)?, decode_entry(&pair[1], &buffer_blob)?));
    }

    let cast = |v: Vec<f32>| v.into_iter().map(|x| lit::<T>(x as f64)).collect::<Vec<T>>();
    for ((_, t), values) in c.params.iter().zip(staged) {
        t.set_data(&cast(values))?;
    }
    let mut apply = ApplyBuffers {
        values: staged_buffers.into_iter().map(|(m, v)| (cast(m), cast(v))).collect::<Vec<_>>().into_iter(),
        result: Ok(()),
    };
    net.visit("", &mut apply);
    apply.result
}

/// Rebuilds the network from `model.json` and loads its weights.
pub fn load<T: Element>(dir: impl AsRef<Path>) -> Result<SegNet<T>> {
    let dir = dir.as_ref();
    let net = SegNet::new(read_config(dir)?, 0)?;
    load_into(&net, dir)?;
    Ok(net)
}
