//! Binary parameter checkpoints.
//!
//! Layout: 8-byte magic `EPNTCKPT`, `u32` container version, `u64` header
//! length, a JSON header, then every tensor's values as little-endian `f64`
//! in header order. The header records names, shapes, the model variant,
//! `prior_scale`, `d_z`, a parameter fingerprint and the SHA-256 of the data
//! block. Loading validates everything before building any state.

use std::fs;
use std::io::Write;
use std::path::Path;

use epinet_core::agents::{Agent, AgentKind, AgentModel, AgentSnapshot, AgentSpec};
use epinet_core::{NamedParams, Tensor2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config_file::hex;
use crate::error::{HarnessError, Result};

pub const MAGIC: &[u8; 8] = b"EPNTCKPT";
pub const CONTAINER_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    /// Agent kind (`epinet_ts`, `greedy_point`, ...).
    pub variant: String,
    /// Network family behind it (`epinet`, `point_estimate`, `deep_ensemble`).
    pub enn_variant: String,
    pub snapshot_version: u32,
    pub step: u64,
    pub prior_scale: f64,
    pub index_dim: usize,
    pub tensors: Vec<TensorEntry>,
    /// FNV-1a of names, shapes and values, hex.
    pub fingerprint: String,
    pub data_sha256: String,
}

struct Tensors<'a>(&'a [(String, Tensor2)]);

impl NamedParams for Tensors<'_> {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Tensor2)) {
        for (n, t) in self.0 {
            f(n, t);
        }
    }

    fn assign_param(&mut self, name: &str, _: &Tensor2) -> epinet_core::Result<()> {
        Err(epinet_core::Error::State(format!("read-only tensor list, cannot assign `{name}`")))
    }
}

fn fingerprint(tensors: &[(String, Tensor2)]) -> String {
    format!("{:016x}", Tensors(tensors).param_fingerprint())
}

fn enn_variant(kind: AgentKind) -> &'static str {
    match kind {
        AgentKind::EpinetTs => "epinet",
        AgentKind::GreedyPoint | AgentKind::EpsilonGreedy(_) => "point_estimate",
        AgentKind::EnsembleTs(_) => "deep_ensemble",
    }
}

/// Serialize `tensors` under `header` (whose tensor list, fingerprint and
/// digest are filled in here).
pub fn encode(mut header: CheckpointHeader, tensors: &[(String, Tensor2)]) -> Vec<u8> {
    let mut data = Vec::with_capacity(8 * tensors.iter().map(|(_, t)| t.data().len()).sum::<usize>());
    for (_, t) in tensors {
        for v in t.data() {
            data.extend_from_slice(&v.to_le_bytes());
        }
    }
    header.tensors = tensors
        .iter()
        .map(|(n, t)| TensorEntry {
            name: n.clone(),
            rows: t.rows(),
            cols: t.cols(),
        })
        .collect();
    header.fingerprint = fingerprint(tensors);
    header.data_sha256 = hex(&Sha256::digest(&data));
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(20 + json.len() + data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&data);
    out
}

/// Parse and fully validate a checkpoint.
pub fn decode(bytes: &[u8], origin: &Path) -> Result<(CheckpointHeader, Vec<(String, Tensor2)>)> {
    let bad = |msg: String| HarnessError::format(origin, msg);
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CONTAINER_VERSION {
        return Err(bad(format!(
            "checkpoint container version {version} is not supported (expected {CONTAINER_VERSION})"
        )));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let header_end = usize::try_from(header_len)
        .ok()
        .and_then(|l| l.checked_add(20))
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("header length runs past the end of the file".into()))?;
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes[20..header_end]).map_err(|e| bad(format!("corrupt header: {e}")))?;
    let data = &bytes[header_end..];
    let expected: usize = header
        .tensors
        .iter()
        .try_fold(0usize, |acc, t| t.rows.checked_mul(t.cols).and_then(|n| acc.checked_add(n)))
        .ok_or_else(|| bad("tensor shapes overflow".into()))?;
    if expected.checked_mul(8) != Some(data.len()) {
        return Err(bad(format!(
            "data block holds {} bytes, header describes {expected} values",
            data.len()
        )));
    }
    if hex(&Sha256::digest(data)) != header.data_sha256 {
        return Err(bad("data block does not match its SHA-256".into()));
    }
    let mut values = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for e in &header.tensors {
        let v: Vec<f64> = values.by_ref().take(e.rows * e.cols).collect();
        let t = Tensor2::from_vec(e.rows, e.cols, v).map_err(|err| bad(err.to_string()))?;
        tensors.push((e.name.clone(), t));
    }
    if fingerprint(&tensors) != header.fingerprint {
        return Err(bad("parameter fingerprint mismatch".into()));
    }
    Ok((header, tensors))
}

/// Checkpoint bytes of an agent's parameters.
pub fn encode_agent(agent: &Agent) -> Vec<u8> {
    let snap = agent.snapshot();
    let (prior_scale, index_dim) = match agent.model() {
        AgentModel::Epinet(m) => (m.head().prior_scale(), m.index_dim()),
        _ => (0.0, 0),
    };
    let header = CheckpointHeader {
        variant: snap.kind.name().into(),
        enn_variant: enn_variant(snap.kind).into(),
        snapshot_version: snap.version,
        step: snap.step,
        prior_scale,
        index_dim,
        tensors: Vec::new(),
        fingerprint: String::new(),
        data_sha256: String::new(),
    };
    encode(header, &snap.params)
}

/// Rebuild an agent for `spec` from checkpoint bytes.
pub fn decode_agent(bytes: &[u8], origin: &Path, spec: AgentSpec, seed: u64) -> Result<Agent> {
    let (header, params) = decode(bytes, origin)?;
    if header.variant != spec.kind.name() {
        return Err(HarnessError::format(
            origin,
            format!("checkpoint holds a {} agent, expected {}", header.variant, spec.kind.name()),
        ));
    }
    if spec.kind == AgentKind::EpinetTs
        && (header.prior_scale != spec.shape.prior_scale || header.index_dim != spec.shape.index_dim)
    {
        return Err(HarnessError::format(
            origin,
            format!(
                "checkpoint has prior_scale {} and d_z {}, configuration asks for {} and {}",
                header.prior_scale, header.index_dim, spec.shape.prior_scale, spec.shape.index_dim
            ),
        ));
    }
    let snapshot = AgentSnapshot {
        version: header.snapshot_version,
        kind: spec.kind,
        step: header.step,
        params,
    };
    Agent::restore(spec, &snapshot, seed).map_err(|e| HarnessError::format(origin, e.to_string()))
}

/// Write through a temporary file and rename, so readers never see a
/// partial checkpoint.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    let mut f = fs::File::create(&tmp).map_err(|e| HarnessError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| HarnessError::io(&tmp, e))?;
    f.sync_all().map_err(|e| HarnessError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}

pub fn save_agent(path: &Path, agent: &Agent) -> Result<()> {
    write_atomic(path, &encode_agent(agent))
}

pub fn load_agent(path: &Path, spec: AgentSpec, seed: u64) -> Result<Agent> {
    let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    decode_agent(&bytes, path, spec, seed)
}
