//! Model checkpoint file: versioned header, then per-tensor records of
//! (name, rows, cols, row-major 64-bit values). Round trips are bit-exact;
//! float metadata is stored as raw bit patterns.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{Activation, CosineHead, LirrModel, Mlp, ModelError, PredictorHead};
use crate::diffcore::Tensor;

const MAGIC: &[u8; 8] = b"LIRRCKPT";
const VERSION: u32 = 1;

#[derive(Error, Debug)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] io::Error),
    #[error("bad checkpoint format: {0}")]
    Format(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub fn save_model(model: &LirrModel, path: &Path) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;

    let mut meta = String::new();
    meta.push_str(&format!("activation = {}\n", model.encoder().activation().name()));
    meta.push_str(&format!(
        "grl_lambda_rep_bits = {:016x}\n",
        model.grl_lambda_rep.to_bits()
    ));
    meta.push_str(&format!(
        "grl_lambda_risk_bits = {:016x}\n",
        model.grl_lambda_risk.to_bits()
    ));
    match model.predictor_fi() {
        PredictorHead::Linear(_) => meta.push_str("fi_head = linear\n"),
        PredictorHead::Cosine(head) => {
            meta.push_str("fi_head = cosine\n");
            meta.push_str(&format!(
                "cosine_temperature_bits = {:016x}\n",
                head.temperature.to_bits()
            ));
        }
    }
    write_bytes(&mut w, meta.as_bytes())?;

    let names = model.param_names();
    let params = model.params();
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, tensor) in names.iter().zip(params) {
        write_bytes(&mut w, name.as_bytes())?;
        w.write_all(&(tensor.rows() as u64).to_le_bytes())?;
        w.write_all(&(tensor.cols() as u64).to_le_bytes())?;
        for v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<LirrModel, CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::Format("missing checkpoint magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(CheckpointError::Format(format!("unsupported version {version}")));
    }

    let meta_bytes = read_bytes(&mut r)?;
    let meta = String::from_utf8(meta_bytes)
        .map_err(|_| CheckpointError::Format("metadata is not UTF-8".into()))?;
    let mut fields = BTreeMap::new();
    for line in meta.lines() {
        if let Some((k, v)) = line.split_once('=') {
            fields.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    let activation = Activation::parse(
        fields
            .get("activation")
            .ok_or_else(|| CheckpointError::Format("missing activation".into()))?,
    )?;
    let grl_lambda_rep = read_bits_field(&fields, "grl_lambda_rep_bits")?;
    let grl_lambda_risk = read_bits_field(&fields, "grl_lambda_risk_bits")?;
    let fi_head = fields
        .get("fi_head")
        .ok_or_else(|| CheckpointError::Format("missing fi_head".into()))?
        .clone();

    let count = read_u32(&mut r)? as usize;
    let mut tensors: Vec<(String, Tensor)> = Vec::with_capacity(count);
    for _ in 0..count {
        let name = String::from_utf8(read_bytes(&mut r)?)
            .map_err(|_| CheckpointError::Format("tensor name is not UTF-8".into()))?;
        let rows = read_u64(&mut r)? as usize;
        let cols = read_u64(&mut r)? as usize;
        let mut data = vec![0.0f64; rows * cols];
        for v in data.iter_mut() {
            let mut buf = [0u8; 8];
            r.read_exact(&mut buf)?;
            *v = f64::from_le_bytes(buf);
        }
        tensors.push((name, Tensor::from_vec(rows, cols, data)));
    }

    let encoder = collect_mlp("encoder", &tensors, activation)?;
    let predictor_fi = if fi_head == "cosine" {
        let temperature = read_bits_field(&fields, "cosine_temperature_bits")?;
        let weight = tensors
            .iter()
            .find(|(n, _)| n == "fi.cosine_weight")
            .map(|(_, t)| t.clone())
            .ok_or_else(|| CheckpointError::Format("missing fi.cosine_weight".into()))?;
        PredictorHead::Cosine(CosineHead { weight, temperature })
    } else {
        PredictorHead::Linear(collect_mlp("fi", &tensors, activation)?)
    };
    let predictor_fd = collect_mlp("fd", &tensors, activation)?;
    let domain_classifier = collect_mlp("c", &tensors, activation)?;

    Ok(LirrModel::new(
        encoder,
        predictor_fi,
        predictor_fd,
        domain_classifier,
        grl_lambda_rep,
        grl_lambda_risk,
    )?)
}

fn collect_mlp(
    prefix: &str,
    tensors: &[(String, Tensor)],
    activation: Activation,
) -> Result<Mlp, CheckpointError> {
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for layer in 0.. {
        let w = tensors.iter().find(|(n, _)| *n == format!("{prefix}.w{layer}"));
        let b = tensors.iter().find(|(n, _)| *n == format!("{prefix}.b{layer}"));
        match (w, b) {
            (Some((_, w)), Some((_, b))) => {
                weights.push(w.clone());
                biases.push(b.clone());
            }
            (None, None) => break,
            _ => {
                return Err(CheckpointError::Format(format!(
                    "incomplete layer {layer} for {prefix}"
                )))
            }
        }
    }
    if weights.is_empty() {
        return Err(CheckpointError::Format(format!("no tensors for {prefix}")));
    }
    Ok(Mlp::from_parts(weights, biases, activation)?)
}

fn read_bits_field(
    fields: &BTreeMap<String, String>,
    key: &str,
) -> Result<f64, CheckpointError> {
    let raw = fields
        .get(key)
        .ok_or_else(|| CheckpointError::Format(format!("missing {key}")))?;
    let bits = u64::from_str_radix(raw, 16)
        .map_err(|_| CheckpointError::Format(format!("bad bits in {key}")))?;
    Ok(f64::from_bits(bits))
}

fn write_bytes(w: &mut impl Write, bytes: &[u8]) -> io::Result<()> {
    w.write_all(&(bytes.len() as u32).to_le_bytes())?;
    w.write_all(bytes)
}

fn read_bytes(r: &mut impl Read) -> Result<Vec<u8>, CheckpointError> {
    let len = read_u32(r)? as usize;
    if len > 1 << 28 {
        return Err(CheckpointError::Format(format!("unreasonable field length {len}")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::common::TaskKind;
    use crate::models::{init_model, ModelConfig};

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let model = init_model(&ModelConfig::new(2, TaskKind::Classification, 2, 5)).unwrap();
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        for (a, b) in model.params().iter().zip(loaded.params()) {
            assert_eq!(a.shape(), b.shape());
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert_eq!(model.grl_lambda_rep.to_bits(), loaded.grl_lambda_rep.to_bits());

        // save the loaded model again: identical bytes
        let path2 = dir.path().join("model2.ckpt");
        save_model(&loaded, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn cosine_head_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let model = init_model(
            &ModelConfig::new(2, TaskKind::Classification, 2, 5).with_cosine_head(0.05),
        )
        .unwrap();
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        match loaded.predictor_fi() {
            PredictorHead::Cosine(head) => assert_eq!(head.temperature, 0.05),
            PredictorHead::Linear(_) => panic!("expected cosine head"),
        }
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(load_model(&path).is_err());
    }
}
