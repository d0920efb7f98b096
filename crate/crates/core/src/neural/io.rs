//! Weights container: `ICNN` magic, a little-endian `u32` version, a
//! `u64` manifest length, a JSON manifest (architecture and tensor
//! shapes), then every tensor as little-endian `f64` in manifest order.

use std::fs;
use std::path::Path;

use ndarray::{Array1, ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use super::{Layer, Network, NetworkSpec};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"ICNN";
pub const WEIGHTS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    spec: NetworkSpec,
    shapes: Vec<Vec<usize>>,
}

/// Trainable tensors followed by batch-norm running statistics, per layer.
fn tensors(net: &Network) -> Vec<ArrayD<f64>> {
    let mut out = Vec::new();
    for layer in net.branches.iter().flatten().chain(&net.head) {
        out.extend(layer.params().into_iter().cloned());
        if let Layer::BatchNorm { running_mean, running_var, .. } = layer {
            out.push(running_mean.clone().into_dyn());
            out.push(running_var.clone().into_dyn());
        }
    }
    out
}

pub fn encode(net: &Network) -> Result<Vec<u8>> {
    let all = tensors(net);
    let manifest = serde_json::to_vec(&Manifest { spec: net.spec.clone(), shapes: all.iter().map(|t| t.shape().to_vec()).collect() })?;
    let mut buf = Vec::with_capacity(16 + manifest.len() + 8 * all.iter().map(|t| t.len()).sum::<usize>());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&WEIGHTS_FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
    buf.extend_from_slice(&manifest);
    for t in &all {
        for v in t.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

pub fn decode(bytes: &[u8]) -> Result<Network> {
    let bad = |m: String| Error::ModelFormat(m);
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(bad("not a network weights file".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != WEIGHTS_FORMAT_VERSION {
        return Err(bad(format!("weights format version {version}, this build reads {WEIGHTS_FORMAT_VERSION}")));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(16..).filter(|b| b.len() >= len).ok_or_else(|| bad("truncated manifest".into()))?;
    let manifest: Manifest = serde_json::from_slice(&body[..len])?;
    let mut data = &body[len..];

    let mut net = Network::build(&manifest.spec, 0)?;
    let expected: Vec<Vec<usize>> = tensors(&net).iter().map(|t| t.shape().to_vec()).collect();
    if expected != manifest.shapes {
        return Err(bad(format!("manifest shapes {:?} do not match the architecture {:?}", manifest.shapes, expected)));
    }
    let total: usize = expected.iter().map(|s| s.iter().product::<usize>()).sum();
    if data.len() != total * 8 {
        return Err(bad(format!("expected {} bytes of tensor data, found {}", total * 8, data.len())));
    }
    let mut read = |shape: &[usize]| {
        let n: usize = shape.iter().product();
        let vals: Vec<f64> = data[..n * 8].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        data = &data[n * 8..];
        ArrayD::from_shape_vec(IxDyn(shape), vals).expect("sized")
    };
    let mut loaded: Vec<ArrayD<f64>> = expected.iter().map(|s| read(s)).collect();
    loaded.reverse();
    let layers = net.branches.iter_mut().flatten().chain(net.head.iter_mut());
    for layer in layers {
        for p in layer.params_mut() {
            *p = loaded.pop().expect("counted");
        }
        if let Layer::BatchNorm { running_mean, running_var, .. } = layer {
            *running_mean = to_1d(loaded.pop().expect("counted"));
            *running_var = to_1d(loaded.pop().expect("counted"));
        }
    }
    Ok(net)
}

fn to_1d(a: ArrayD<f64>) -> Array1<f64> {
    a.into_dimensionality().expect("1-D running statistic")
}

pub fn save_network(net: &Network, path: &Path) -> Result<()> {
    fs::write(path, encode(net)?).map_err(|e| Error::io(path, e))
}

pub fn load_network(path: &Path) -> Result<Network> {
    decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{build_preset, Preset, PresetOptions};

    fn small() -> Network {
        let opts = PresetOptions { hidden: Some(vec![6, 5, 4]), ..Default::default() };
        let mut net = Network::build(&build_preset(Preset::ComplexAnn, &[vec![3]], 3, &opts).unwrap(), 9).unwrap();
        if let Some(Layer::BatchNorm { running_mean, .. }) = net.branches[0].get_mut(1) {
            running_mean.fill(0.25);
        }
        net
    }

    #[test]
    fn round_trip_is_exact() {
        let net = small();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        save_network(&net, &path).unwrap();
        assert_eq!(load_network(&path).unwrap(), net);
    }

    #[test]
    fn rejects_bad_headers_and_truncation() {
        let bytes = encode(&small()).unwrap();
        let mut wrong_version = bytes.clone();
        wrong_version[4] = 9;
        assert!(matches!(decode(&wrong_version), Err(Error::ModelFormat(_))));
        assert!(matches!(decode(&bytes[..bytes.len() - 8]), Err(Error::ModelFormat(_))));
        assert!(matches!(decode(b"nope"), Err(Error::ModelFormat(_))));
    }
}
