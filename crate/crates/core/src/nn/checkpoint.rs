//! Checkpoint container: `ATNC` magic, `u32` format version, `u64` header
//! length, JSON header, then little-endian `f32` tensors in header order
//! (network parameters, then Adam first and second moments).

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::net::{AutotunerNet, NetArch};
use super::optim::{AdamConfig, AdamState};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"ATNC";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AdamHeader {
    config: AdamConfig,
    step: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    arch: NetArch,
    tensors: Vec<TensorEntry>,
    adam: Option<AdamHeader>,
    #[serde(default)]
    meta: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub net: AutotunerNet<f32>,
    pub adam: Option<AdamState<f32>>,
    pub meta: serde_json::Value,
}

pub fn save_checkpoint(
    path: &Path,
    net: &AutotunerNet<f32>,
    adam: Option<&AdamState<f32>>,
    meta: serde_json::Value,
) -> Result<()> {
    let params = net.params();
    if let Some(a) = adam {
        let sizes: Vec<usize> = params.iter().map(|p| p.len()).collect();
        if a.sizes() != sizes {
            return Err(Error::Shape(
                "optimizer state does not match the network".into(),
            ));
        }
    }
    let header = Header {
        format_version: FORMAT_VERSION,
        arch: net.arch.clone(),
        tensors: net
            .param_names()
            .into_iter()
            .zip(&params)
            .map(|(name, p)| TensorEntry { name, len: p.len() })
            .collect(),
        adam: adam.map(|a| AdamHeader {
            config: a.config,
            step: a.step,
        }),
        meta,
    };
    let json = serde_json::to_vec(&header)?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    let mut tensors: Vec<&[f32]> = params;
    if let Some(a) = adam {
        tensors.extend(a.m.iter().map(Vec::as_slice));
        tensors.extend(a.v.iter().map(Vec::as_slice));
    }
    for t in tensors {
        for v in t {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let tmp = path.with_extension("tmp");
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&buf)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| Error::io(path, e))
}

/// Loads a checkpoint whose architecture must be the Table-1 network.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    load_checkpoint_with_arch(path, &NetArch::table1())
}

pub fn load_checkpoint_with_arch(path: &Path, expected: &NetArch) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let corrupt = |msg: &str| Error::CorruptCheckpoint(format!("{}: {msg}", path.display()));
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(corrupt("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::IncompatibleCheckpoint(format!(
            "format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = 16usize
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| corrupt("truncated header"))?;
    let header: Header = serde_json::from_slice(&bytes[16..body])
        .map_err(|e| corrupt(&format!("bad header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::IncompatibleCheckpoint(
            "header version mismatch".into(),
        ));
    }
    if header.arch != *expected {
        return Err(Error::IncompatibleCheckpoint(format!(
            "layer list {:?} does not match the expected architecture",
            header.arch.convs
        )));
    }
    let mut net = AutotunerNet::<f32>::zeros(header.arch.clone())
        .map_err(|e| Error::IncompatibleCheckpoint(e.to_string()))?;
    let names = net.param_names();
    let sizes: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
    if header.tensors.len() != names.len()
        || header
            .tensors
            .iter()
            .zip(names.iter().zip(&sizes))
            .any(|(t, (n, &s))| t.name != *n || t.len != s)
    {
        return Err(Error::IncompatibleCheckpoint(
            "tensor list does not match the architecture".into(),
        ));
    }
    let n_params: usize = sizes.iter().sum();
    let copies = if header.adam.is_some() { 3 } else { 1 };
    let expected_len = body + 4 * n_params * copies;
    if bytes.len() != expected_len {
        return Err(corrupt(&format!(
            "payload is {} bytes, expected {}",
            bytes.len() - body,
            expected_len - body
        )));
    }
    let mut floats = bytes[body..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()));
    for p in net.params_mut() {
        p.iter_mut().for_each(|v| *v = floats.next().unwrap());
    }
    let adam = header.adam.map(|h| {
        let mut state = AdamState::<f32>::new(h.config, &sizes);
        state.step = h.step;
        for m in state.m.iter_mut().chain(state.v.iter_mut()) {
            m.iter_mut().for_each(|v| *v = floats.next().unwrap());
        }
        state
    });
    if net
        .params()
        .iter()
        .any(|p| p.iter().any(|v| !v.is_finite()))
    {
        return Err(corrupt("non-finite parameter"));
    }
    Ok(Checkpoint {
        net,
        adam,
        meta: header.meta,
    })
}
