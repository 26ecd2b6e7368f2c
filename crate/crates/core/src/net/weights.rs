//! Weight files: the binary container with the architecture as a JSON
//! manifest and every layer's weights then biases as one `f64` payload.

use std::fs;
use std::path::Path;

use super::{Architecture, NetworkParams};
use crate::container::{Container, Payload};
use crate::error::{Error, Result};

pub fn write_weights(params: &NetworkParams) -> Result<Vec<u8>> {
    let manifest = serde_json::to_string(params.architecture())?;
    let mut payload = Vec::with_capacity(params.param_count());
    for layer in params.layers() {
        payload.extend_from_slice(&layer.weights);
        payload.extend_from_slice(&layer.bias);
    }
    let container = Container::new(vec![payload.len() as u64], Payload::F64(payload))?.with_manifest(manifest);
    Ok(container.to_bytes())
}

pub fn read_weights(bytes: &[u8]) -> Result<NetworkParams> {
    let container = Container::from_bytes(bytes)?;
    let manifest = container
        .manifest
        .ok_or_else(|| Error::parse(8, "weight file lacks a layer manifest"))?;
    let arch: Architecture = serde_json::from_str(&manifest).map_err(|e| Error::parse(20, format!("manifest: {e}")))?;
    let values = match container.payload {
        Payload::F64(v) => v,
        Payload::F32(_) => return Err(Error::parse(8, "weight payload must be 64-bit floats")),
    };
    let mut params = NetworkParams::zeros(arch)?;
    if values.len() != params.param_count() {
        return Err(Error::dimension(format!(
            "weight payload has {} values, architecture needs {}",
            values.len(),
            params.param_count()
        )));
    }
    let mut rest = values.as_slice();
    for layer in params.layers_mut() {
        let (w, tail) = rest.split_at(layer.weights.len());
        layer.weights.copy_from_slice(w);
        let (b, tail) = tail.split_at(layer.bias.len());
        layer.bias.copy_from_slice(b);
        rest = tail;
    }
    Ok(params)
}

pub fn save_weights(params: &NetworkParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_weights(params)?).map_err(|e| Error::from(e).in_file(path))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<NetworkParams> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::from(e).in_file(path))?;
    read_weights(&bytes).map_err(|e| e.in_file(path))
}
