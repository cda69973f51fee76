//! Binary model bundles.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "IRISBNDL"
//! version    u32
//! manifest   u64 length + UTF-8 JSON
//! arrays     u32 count, then per array: u16 name length, name, u64 element count, f64 LE values
//! checksum   32 bytes SHA-256 of everything above
//! ```
//!
//! The version is checked before the checksum so that a bundle from another
//! format revision reports `VersionMismatch` rather than corruption.

use std::fs;
use std::path::Path;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::classify::{Dense, MlpModel};
use crate::error::{Error, Result};
use crate::reduce::{Kernel, KpcaModel, Matrix};

pub const MAGIC: &[u8; 8] = b"IRISBNDL";
pub const FORMAT_VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub manifest: Value,
    pub arrays: Vec<(String, Vec<f64>)>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptBundle(msg.into())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| corrupt("truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl Bundle {
    pub fn new(manifest: Value) -> Self {
        Self {
            manifest,
            arrays: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, values: Vec<f64>) {
        self.arrays.push((name.into(), values));
    }

    pub fn array(&self, name: &str) -> Result<&[f64]> {
        self.arrays
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| corrupt(format!("missing array {name:?}")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let manifest = serde_json::to_vec(&self.manifest).expect("JSON values serialize");
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for (name, values) in &self.arrays {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(values.len() as u64).to_le_bytes());
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        if bytes.len() < 12 + CHECKSUM_LEN {
            return Err(corrupt("truncated"));
        }
        let (body, checksum) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
        if Sha256::digest(body).as_slice() != checksum {
            return Err(corrupt("checksum mismatch"));
        }
        let mut r = Reader { buf: body, pos: 12 };
        let mlen = r.u64()? as usize;
        let manifest: Value =
            serde_json::from_slice(r.take(mlen)?).map_err(|e| corrupt(format!("manifest: {e}")))?;
        let count = r.u32()?;
        let mut arrays = Vec::new();
        for _ in 0..count {
            let nlen = r.u16()? as usize;
            let name = String::from_utf8(r.take(nlen)?.to_vec()).map_err(|_| corrupt("array name is not UTF-8"))?;
            let n = r.u64()? as usize;
            let raw = r.take(n.checked_mul(8).ok_or_else(|| corrupt("array too large"))?)?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            arrays.push((name, values));
        }
        if r.pos != body.len() {
            return Err(corrupt("trailing bytes"));
        }
        Ok(Self { manifest, arrays })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::FileNotFound(path.to_path_buf()));
        }
        Self::from_bytes(&fs::read(path)?)
    }

    fn kind(&self) -> Option<&str> {
        self.manifest.get("kind").and_then(Value::as_str)
    }

    fn expect_kind(&self, kind: &str) -> Result<()> {
        match self.kind() {
            Some(k) if k == kind => Ok(()),
            other => Err(corrupt(format!("expected a {kind} bundle, found {other:?}"))),
        }
    }

    fn usize_field(&self, key: &str) -> Result<usize> {
        self.manifest
            .get(key)
            .and_then(Value::as_u64)
            .map(|v| v as usize)
            .ok_or_else(|| corrupt(format!("manifest field {key:?} missing")))
    }
}

fn exact_len<'a>(b: &'a Bundle, name: &str, len: usize) -> Result<&'a [f64]> {
    let a = b.array(name)?;
    if a.len() != len {
        return Err(corrupt(format!("array {name:?} has {} values, expected {len}", a.len())));
    }
    Ok(a)
}

/// MLP bundle. Arrays `layer{k}.weights` (row-major outputs × inputs) and
/// `layer{k}.biases`, in layer order. `extra` is merged into the manifest.
pub fn mlp_to_bundle(model: &MlpModel, extra: Value) -> Bundle {
    let mut manifest = json!({
        "kind": "mlp",
        "layer_sizes": model.layer_sizes(),
        "hidden_activation": "relu",
        "output_activation": "softmax",
        "dropout": model.dropout,
    });
    if let (Some(m), Value::Object(e)) = (manifest.as_object_mut(), extra) {
        m.extend(e);
    }
    let mut b = Bundle::new(manifest);
    for (k, l) in model.layers.iter().enumerate() {
        b.push(format!("layer{k}.weights"), l.weights.clone());
        b.push(format!("layer{k}.biases"), l.biases.clone());
    }
    b
}

pub fn mlp_from_bundle(b: &Bundle) -> Result<MlpModel> {
    b.expect_kind("mlp")?;
    let sizes: Vec<usize> = serde_json::from_value(b.manifest["layer_sizes"].clone())
        .map_err(|e| corrupt(format!("layer_sizes: {e}")))?;
    if sizes.len() < 2 {
        return Err(corrupt("too few layers"));
    }
    let dropout = b.manifest["dropout"].as_f64().ok_or_else(|| corrupt("dropout missing"))?;
    let layers = sizes
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            Ok(Dense {
                inputs: w[0],
                outputs: w[1],
                weights: exact_len(b, &format!("layer{k}.weights"), w[0] * w[1])?.to_vec(),
                biases: exact_len(b, &format!("layer{k}.biases"), w[1])?.to_vec(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(MlpModel { layers, dropout })
}

pub fn kpca_to_bundle(model: &KpcaModel, extra: Value) -> Bundle {
    let mut manifest = json!({
        "kind": "kpca",
        "kernel": model.kernel,
        "samples": model.train.rows,
        "dims": model.train.cols,
        "components": model.k,
        "rank_deficient": model.rank_deficient,
    });
    if let (Some(m), Value::Object(e)) = (manifest.as_object_mut(), extra) {
        m.extend(e);
    }
    let mut b = Bundle::new(manifest);
    b.push("col_mean", model.col_mean.clone());
    b.push("col_std", model.col_std.clone());
    b.push("train", model.train.data.clone());
    b.push("kernel_row_means", model.kernel_row_means.clone());
    b.push("kernel_mean", vec![model.kernel_mean]);
    b.push("eigenvalues", model.eigenvalues.clone());
    b.push("coefficients", model.coefficients.clone());
    b
}

pub fn kpca_from_bundle(b: &Bundle) -> Result<KpcaModel> {
    b.expect_kind("kpca")?;
    let kernel: Kernel =
        serde_json::from_value(b.manifest["kernel"].clone()).map_err(|e| corrupt(format!("kernel: {e}")))?;
    let n = b.usize_field("samples")?;
    let d = b.usize_field("dims")?;
    let k = b.usize_field("components")?;
    let rank_deficient = b.manifest["rank_deficient"].as_bool().unwrap_or(false);
    Ok(KpcaModel {
        kernel,
        train: Matrix::new(n, d, exact_len(b, "train", n * d)?.to_vec())?,
        col_mean: exact_len(b, "col_mean", d)?.to_vec(),
        col_std: exact_len(b, "col_std", d)?.to_vec(),
        kernel_row_means: exact_len(b, "kernel_row_means", n)?.to_vec(),
        kernel_mean: exact_len(b, "kernel_mean", 1)?[0],
        eigenvalues: exact_len(b, "eigenvalues", k)?.to_vec(),
        coefficients: exact_len(b, "coefficients", n * k)?.to_vec(),
        k,
        rank_deficient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduce::kpca_fit;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mlp_round_trip_is_bit_exact() {
        let model = MlpModel::new(&[6, 10, 5, 3], 0.2, 4).unwrap();
        let bytes = mlp_to_bundle(&model, json!({"seed": 4})).to_bytes();
        let back = mlp_from_bundle(&Bundle::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(back, model);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let (a, b) = (model.predict_proba(&x).unwrap(), back.predict_proba(&x).unwrap());
            assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    #[test]
    fn kpca_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Matrix::new(12, 4, (0..48).map(|_| rng.gen::<f64>()).collect()).unwrap();
        let model = kpca_fit(&x, 5, Kernel::default_rbf(4)).unwrap();
        let back = kpca_from_bundle(&Bundle::from_bytes(&kpca_to_bundle(&model, json!({})).to_bytes()).unwrap())
            .unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn truncation_and_tampering_are_corrupt() {
        let bytes = mlp_to_bundle(&MlpModel::new(&[2, 3, 2], 0.0, 1).unwrap(), json!({})).to_bytes();
        for cut in [0, 5, 12, 40, bytes.len() - 1] {
            assert!(matches!(Bundle::from_bytes(&bytes[..cut]), Err(Error::CorruptBundle(_))), "cut {cut}");
        }
        let mut flipped = bytes.clone();
        flipped[30] ^= 1;
        assert!(matches!(Bundle::from_bytes(&flipped), Err(Error::CorruptBundle(_))));
    }

    #[test]
    fn altered_version_is_reported() {
        let mut bytes = Bundle::new(json!({"kind": "mlp"})).to_bytes();
        bytes[8] = 2;
        assert!(matches!(
            Bundle::from_bytes(&bytes),
            Err(Error::VersionMismatch { found: 2, expected: 1 })
        ));
    }

    #[test]
    fn wrong_kind_and_missing_file() {
        let b = Bundle::new(json!({"kind": "kpca"}));
        assert!(mlp_from_bundle(&b).is_err());
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(Bundle::load(&dir.path().join("nope")), Err(Error::FileNotFound(_))));
        let path = dir.path().join("m.bundle");
        let model = MlpModel::new(&[2, 2], 0.0, 1).unwrap();
        mlp_to_bundle(&model, json!({})).save(&path).unwrap();
        assert_eq!(mlp_from_bundle(&Bundle::load(&path).unwrap()).unwrap(), model);
    }
}
