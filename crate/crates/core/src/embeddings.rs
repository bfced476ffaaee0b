//! Embedding matrix files: raw little-endian row-major values plus a JSON
//! sidecar (`<stem>.json`) carrying shape, precision and the SHA-256 of
//! the checkpoint that produced them.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diff::DenseMatrix;
use crate::error::{NclaError, Result};
use crate::train::Precision;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingHeader {
    pub num_rows: usize,
    pub num_cols: usize,
    pub precision: Precision,
    pub byte_order: String,
    #[serde(default)]
    pub source_checkpoint_sha256: Option<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sidecar_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

pub fn encode(m: &DenseMatrix, precision: Precision) -> Vec<u8> {
    match precision {
        Precision::F64 => m.data().iter().flat_map(|v| v.to_le_bytes()).collect(),
        Precision::F32 => m.data().iter().flat_map(|&v| (v as f32).to_le_bytes()).collect(),
    }
}

pub fn write_embeddings(path: impl AsRef<Path>, m: &DenseMatrix, precision: Precision, checkpoint_sha256: Option<String>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(m, precision)).map_err(|e| NclaError::io(path, e))?;
    let header = EmbeddingHeader {
        num_rows: m.rows(),
        num_cols: m.cols(),
        precision,
        byte_order: "little".into(),
        source_checkpoint_sha256: checkpoint_sha256,
    };
    let side = sidecar_path(path);
    fs::write(&side, serde_json::to_string_pretty(&header)? + "\n").map_err(|e| NclaError::io(&side, e))
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<(DenseMatrix, EmbeddingHeader)> {
    let path = path.as_ref();
    let side = sidecar_path(path);
    let header: EmbeddingHeader =
        serde_json::from_str(&fs::read_to_string(&side).map_err(|e| NclaError::io(&side, e))?)?;
    let bytes = fs::read(path).map_err(|e| NclaError::io(path, e))?;
    let width = (header.precision.bits() / 8) as usize;
    let expected = header.num_rows * header.num_cols * width;
    if bytes.len() != expected {
        return Err(NclaError::DimensionMismatch {
            path: path.to_path_buf(),
            what: "bytes",
            expected,
            found: bytes.len(),
        });
    }
    let data: Vec<f64> = match header.precision {
        Precision::F64 => bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
        Precision::F32 => bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect(),
    };
    Ok((DenseMatrix::from_vec(header.num_rows, header.num_cols, data)?, header))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_both_precisions() {
        let tmp = tempfile::tempdir().unwrap();
        let m = DenseMatrix::from_rows(&[vec![1.0, -0.1], vec![1e-300, 3.25]]).unwrap();
        let p = tmp.path().join("e.bin");
        write_embeddings(&p, &m, Precision::F64, Some("abc".into())).unwrap();
        let (back, header) = read_embeddings(&p).unwrap();
        assert_eq!(back, m);
        assert_eq!(header.source_checkpoint_sha256.as_deref(), Some("abc"));
        write_embeddings(&p, &m, Precision::F32, None).unwrap();
        assert_eq!(fs::read(&p).unwrap().len(), 16);
        let (back, _) = read_embeddings(&p).unwrap();
        assert_eq!(back.get(0, 1), -0.1f32 as f64);
    }

    #[test]
    fn digest_is_stable() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
