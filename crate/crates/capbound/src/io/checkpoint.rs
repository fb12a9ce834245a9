//! Single-file tensor container: a magic line with the manifest length, a JSON
//! manifest, then little-endian row-major payloads.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensors::KernelTensor;
use crate::train::net::{ConvLayer, NetArch, TinyNet};

pub const CHECKPOINT_MAGIC: &str = "CAPBOUND-CKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Weight,
    Reference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn size(&self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    role: Role,
    shape: Vec<usize>,
    dtype: DType,
    byte_offset: usize,
    byte_length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    tensors: Vec<ManifestEntry>,
    #[serde(default)]
    zero_references: Vec<String>,
}

/// One stored tensor; values are held as `f64` and written in `dtype`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub role: Role,
    pub shape: Vec<usize>,
    pub dtype: DType,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub tensors: Vec<TensorRecord>,
    /// Weights whose reference is the zero tensor.
    pub zero_references: Vec<String>,
}

fn fmt_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Format(msg.into()))
}

impl Checkpoint {
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        let mut weights = HashMap::new();
        let mut refs = HashMap::new();
        for t in &self.tensors {
            if !seen.insert((t.name.clone(), t.role)) {
                return fmt_err(format!("duplicate tensor '{}' ({:?})", t.name, t.role));
            }
            if t.shape.iter().product::<usize>() != t.data.len() {
                return fmt_err(format!("tensor '{}': shape {:?} does not match {} values", t.name, t.shape, t.data.len()));
            }
            match t.role {
                Role::Weight => weights.insert(t.name.clone(), t.shape.clone()),
                Role::Reference => refs.insert(t.name.clone(), t.shape.clone()),
            };
        }
        for (name, shape) in &weights {
            match refs.get(name) {
                Some(r) if r != shape => {
                    return fmt_err(format!("tensor '{name}': reference shape {r:?} differs from weight {shape:?}"))
                }
                Some(_) => {
                    if self.zero_references.contains(name) {
                        return fmt_err(format!("tensor '{name}': both a reference and a zero-reference marker"));
                    }
                }
                None if self.zero_references.contains(name) => {}
                None => return fmt_err(format!("tensor '{name}': weight has no reference")),
            }
        }
        for name in refs.keys().chain(&self.zero_references) {
            if !weights.contains_key(name) {
                return fmt_err(format!("tensor '{name}': reference without weight"));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut offset = 0;
        let mut entries = Vec::with_capacity(self.tensors.len());
        for t in &self.tensors {
            let len = t.data.len() * t.dtype.size();
            entries.push(ManifestEntry {
                name: t.name.clone(),
                role: t.role,
                shape: t.shape.clone(),
                dtype: t.dtype,
                byte_offset: offset,
                byte_length: len,
            });
            offset += len;
        }
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            tensors: entries,
            zero_references: self.zero_references.clone(),
        };
        let json = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
        let mut out = format!("{CHECKPOINT_MAGIC} {}\n", json.len()).into_bytes();
        out.extend_from_slice(&json);
        out.reserve(offset);
        for t in &self.tensors {
            match t.dtype {
                DType::F32 => t.data.iter().for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
                DType::F64 => t.data.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("missing checkpoint header line".into()))?;
        let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::Format("header is not UTF-8".into()))?;
        let len: usize = match header.split_once(' ') {
            Some((magic, n)) if magic == CHECKPOINT_MAGIC => {
                n.trim().parse().map_err(|_| Error::Format(format!("bad manifest length '{n}'")))?
            }
            _ => return fmt_err(format!("not a checkpoint (header '{header}')")),
        };
        let start = nl + 1;
        if bytes.len() < start + len {
            return fmt_err("truncated manifest");
        }
        let manifest: Manifest =
            serde_json::from_slice(&bytes[start..start + len]).map_err(|e| Error::Format(format!("manifest: {e}")))?;
        if manifest.format_version != FORMAT_VERSION {
            return fmt_err(format!("unsupported format_version {}", manifest.format_version));
        }
        let payload = &bytes[start + len..];
        let mut spans: Vec<(usize, usize, &str)> = Vec::new();
        let mut tensors = Vec::with_capacity(manifest.tensors.len());
        for e in &manifest.tensors {
            let count: usize = e.shape.iter().product();
            if e.byte_length != count * e.dtype.size() {
                return fmt_err(format!("tensor '{}': byte_length {} does not match shape {:?}", e.name, e.byte_length, e.shape));
            }
            let end = e.byte_offset.checked_add(e.byte_length).filter(|&x| x <= payload.len());
            let Some(end) = end else {
                return fmt_err(format!("tensor '{}': payload out of range", e.name));
            };
            spans.push((e.byte_offset, end, &e.name));
            let raw = &payload[e.byte_offset..end];
            let data: Vec<f64> = match e.dtype {
                DType::F32 => raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect(),
                DType::F64 => raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
            };
            tensors.push(TensorRecord {
                name: e.name.clone(),
                role: e.role,
                shape: e.shape.clone(),
                dtype: e.dtype,
                data,
            });
        }
        spans.sort();
        for w in spans.windows(2) {
            if w[1].0 < w[0].1 {
                return fmt_err(format!("tensors '{}' and '{}' overlap", w[0].2, w[1].2));
            }
        }
        let ck = Self {
            tensors,
            zero_references: manifest.zero_references,
        };
        ck.validate()?;
        Ok(ck)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn get(&self, name: &str, role: Role) -> Option<&TensorRecord> {
        self.tensors.iter().find(|t| t.name == name && t.role == role)
    }

    fn kernel(t: &TensorRecord) -> Result<KernelTensor> {
        let shape: [usize; 4] = t.shape.clone().try_into().map_err(|_| {
            Error::Format(format!("tensor '{}': expected 4 dimensions, got {:?}", t.name, t.shape))
        })?;
        KernelTensor::new(shape, t.data.clone())
    }

    /// Weight and reference kernels for `name`.
    pub fn layer(&self, name: &str) -> Result<(KernelTensor, KernelTensor)> {
        let w = self
            .get(name, Role::Weight)
            .ok_or_else(|| Error::Format(format!("tensor '{name}' missing from checkpoint")))?;
        let weight = Self::kernel(w)?;
        let reference = match self.get(name, Role::Reference) {
            Some(r) => Self::kernel(r)?,
            None => KernelTensor::zeros(weight.shape()),
        };
        Ok((weight, reference))
    }

    pub fn from_net(net: &TinyNet, dtype: DType) -> Self {
        let mut tensors = Vec::with_capacity(2 * net.layers.len());
        for l in &net.layers {
            for (role, k) in [(Role::Weight, &l.weight), (Role::Reference, &l.reference)] {
                tensors.push(TensorRecord {
                    name: l.name.clone(),
                    role,
                    shape: k.shape().to_vec(),
                    dtype,
                    data: k.data().to_vec(),
                });
            }
        }
        Self {
            tensors,
            zero_references: Vec::new(),
        }
    }

    /// Resolves every block of `arch` to its tensors.
    pub fn to_net(&self, arch: &NetArch) -> Result<TinyNet> {
        let layers = arch
            .blocks
            .iter()
            .map(|b| {
                let (weight, reference) = self.layer(&b.name)?;
                Ok(ConvLayer {
                    name: b.name.clone(),
                    weight,
                    reference,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        TinyNet::from_layers(arch.clone(), layers)
    }

    /// Replaces the weight of `name`, keeping its dtype.
    pub fn set_weight(&mut self, name: &str, k: &KernelTensor) -> Result<()> {
        let t = self
            .tensors
            .iter_mut()
            .find(|t| t.name == name && t.role == Role::Weight)
            .ok_or_else(|| Error::Format(format!("tensor '{name}' missing from checkpoint")))?;
        if t.shape != k.shape() {
            return fmt_err(format!("tensor '{name}': shape {:?} differs from {:?}", t.shape, k.shape()));
        }
        t.data = k.data().to_vec();
        Ok(())
    }
}
