//! Weight checkpoints: one file holding the model spec as JSON plus all named
//! parameter and buffer tensors as packed little-endian f64. Reloading
//! reproduces forward outputs bit-exactly on the writing platform.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use eebench_core::model::{build_model, ModelInstance, ModelSpec};

const MAGIC: &str = "EEBENCH_CKPT v1";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    n_channels: usize,
    window_len: usize,
    tensors: Vec<TensorMeta>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    len: usize,
}

pub fn save_checkpoint(path: &Path, model: &mut ModelInstance) -> Result<()> {
    let named = model.named_values();
    let header = Header {
        spec: model.spec.clone(),
        n_channels: model.n_channels,
        window_len: model.window_len,
        tensors: named.iter().map(|(name, v)| TensorMeta { name: name.clone(), len: v.len() }).collect(),
    };
    let mut file =
        fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    writeln!(file, "{MAGIC}")?;
    writeln!(file, "{}", serde_json::to_string(&header)?)?;
    for (_, values) in &named {
        for v in values {
            file.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelInstance> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let first_nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| anyhow!("truncated checkpoint"))?;
    if &bytes[..first_nl] != MAGIC.as_bytes() {
        bail!("not an eebench checkpoint: bad magic");
    }
    let rest = &bytes[first_nl + 1..];
    let second_nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| anyhow!("truncated checkpoint header"))?;
    let header: Header = serde_json::from_slice(&rest[..second_nl])
        .context("parsing checkpoint header")?;
    let mut data = &rest[second_nl + 1..];

    let mut entries: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for tensor in &header.tensors {
        let need = tensor.len * 8;
        if data.len() < need {
            bail!("checkpoint truncated inside tensor '{}'", tensor.name);
        }
        let values: Vec<f64> = data[..need]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        entries.insert(tensor.name.clone(), values);
        data = &data[need..];
    }

    let mut model = build_model(&header.spec, header.n_channels, header.window_len, 0)
        .map_err(|e| anyhow!("rebuilding model from checkpoint: {e}"))?;
    model.load_named(&entries).map_err(|e| anyhow!("loading tensors: {e}"))?;
    Ok(model)
}
