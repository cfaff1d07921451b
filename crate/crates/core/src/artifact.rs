//! Binary containers for model state.
//!
//! Two formats live here. The model artifact container holds magic bytes,
//! a format version, length-prefixed JSON metadata and named f64 tensor
//! blobs with shape headers. The tensor archive (used for encoder weights)
//! is a JSON header mapping tensor names to dtype/shape/byte-offsets,
//! followed by the little-endian IEEE-754 payload.
//!
//! Both round-trip bit-exactly: metadata maps serialize with sorted keys
//! and tensor payloads are raw little-endian words.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2};
use serde_json::Value;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"MBAR";
const VERSION: u32 = 1;

/// A named dense f64 tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn from_array1(a: &Array1<f64>) -> Self {
        Tensor {
            shape: vec![a.len()],
            data: a.to_vec(),
        }
    }

    pub fn from_array2(a: &Array2<f64>) -> Self {
        Tensor {
            shape: vec![a.nrows(), a.ncols()],
            data: a.iter().copied().collect(),
        }
    }

    pub fn from_vec(v: &[f64]) -> Self {
        Tensor {
            shape: vec![v.len()],
            data: v.to_vec(),
        }
    }

    pub fn to_array1(&self, name: &str) -> Result<Array1<f64>> {
        if self.shape.len() != 1 {
            return Err(Error::Artifact(format!(
                "tensor {name}: expected 1 dimension, found shape {:?}",
                self.shape
            )));
        }
        Ok(Array1::from(self.data.clone()))
    }

    pub fn to_array2(&self, name: &str) -> Result<Array2<f64>> {
        if self.shape.len() != 2 {
            return Err(Error::Artifact(format!(
                "tensor {name}: expected 2 dimensions, found shape {:?}",
                self.shape
            )));
        }
        Array2::from_shape_vec((self.shape[0], self.shape[1]), self.data.clone())
            .map_err(|e| Error::Artifact(format!("tensor {name}: {e}")))
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// The versioned model container: JSON metadata plus ordered named tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub meta: Value,
    pub tensors: Vec<(String, Tensor)>,
}

impl ModelArtifact {
    pub fn new(meta: Value) -> Self {
        ModelArtifact {
            meta,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.push((name.into(), tensor));
    }

    /// Looks a tensor up by name; the error names the missing tensor.
    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Artifact(format!("missing tensor {name:?}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(
            std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
        );
        self.write(&mut out).map_err(|e| Error::io(path, e))
    }

    fn write<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        let meta = serde_json::to_vec(&self.meta).expect("metadata serializes");
        out.write_all(&(meta.len() as u64).to_le_bytes())?;
        out.write_all(&meta)?;
        out.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, tensor) in &self.tensors {
            let name_bytes = name.as_bytes();
            out.write_all(&(name_bytes.len() as u32).to_le_bytes())?;
            out.write_all(name_bytes)?;
            out.write_all(&(tensor.shape.len() as u32).to_le_bytes())?;
            for &dim in &tensor.shape {
                out.write_all(&(dim as u64).to_le_bytes())?;
            }
            for &v in &tensor.data {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::read(&bytes).map_err(|msg| Error::Artifact(format!("{}: {msg}", path.display())))
    }

    fn read(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut cursor = std::io::Cursor::new(bytes);
        let mut magic = [0u8; 4];
        cursor.read_exact(&mut magic).map_err(|e| e.to_string())?;
        if &magic != MAGIC {
            return Err(format!("bad magic bytes {magic:?}"));
        }
        let version = read_u32(&mut cursor)?;
        if version != VERSION {
            return Err(format!("unsupported container version {version}"));
        }
        let meta_len = read_u64(&mut cursor)? as usize;
        let mut meta_bytes = vec![0u8; meta_len];
        cursor.read_exact(&mut meta_bytes).map_err(|e| e.to_string())?;
        let meta: Value = serde_json::from_slice(&meta_bytes).map_err(|e| e.to_string())?;
        let count = read_u32(&mut cursor)? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = read_u32(&mut cursor)? as usize;
            let mut name_bytes = vec![0u8; name_len];
            cursor.read_exact(&mut name_bytes).map_err(|e| e.to_string())?;
            let name = String::from_utf8(name_bytes).map_err(|e| e.to_string())?;
            let ndim = read_u32(&mut cursor)? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(read_u64(&mut cursor)? as usize);
            }
            let total: usize = shape.iter().product();
            let mut data = Vec::with_capacity(total);
            let mut buf = [0u8; 8];
            for _ in 0..total {
                cursor.read_exact(&mut buf).map_err(|_| {
                    format!("tensor {name:?}: payload truncated")
                })?;
                data.push(f64::from_le_bytes(buf));
            }
            tensors.push((name, Tensor { shape, data }));
        }
        Ok(ModelArtifact { meta, tensors })
    }
}

fn read_u32<R: Read>(r: &mut R) -> std::result::Result<u32, String> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|e| e.to_string())?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> std::result::Result<u64, String> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf).map_err(|e| e.to_string())?;
    Ok(u64::from_le_bytes(buf))
}

/// Writes a tensor archive: `u64` header length, JSON header with a
/// `__config__` entry and per-tensor dtype/shape/offsets, then the packed
/// little-endian payload.
pub fn write_tensor_archive(
    path: &Path,
    config: &Value,
    tensors: &[(String, Tensor)],
) -> Result<()> {
    let mut header = serde_json::Map::new();
    header.insert("__config__".to_string(), config.clone());
    let mut offset = 0u64;
    for (name, tensor) in tensors {
        let bytes = (tensor.data.len() * 8) as u64;
        header.insert(
            name.clone(),
            serde_json::json!({
                "dtype": "F64",
                "shape": tensor.shape,
                "data_offsets": [offset, offset + bytes],
            }),
        );
        offset += bytes;
    }
    let header_bytes = serde_json::to_vec(&Value::Object(header))
        .map_err(|e| Error::Artifact(e.to_string()))?;
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    );
    (|| -> std::io::Result<()> {
        out.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
        out.write_all(&header_bytes)?;
        for (_, tensor) in tensors {
            for &v in &tensor.data {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    })()
    .map_err(|e| Error::io(path, e))
}

/// Reads a tensor archive written by [`write_tensor_archive`] (or any
/// producer of the same layout; `F32` payloads widen to f64).
pub fn read_tensor_archive(path: &Path) -> Result<(Value, Vec<(String, Tensor)>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 8 {
        return Err(Error::Artifact(format!(
            "{}: too short for a header",
            path.display()
        )));
    }
    let header_len = u64::from_le_bytes(bytes[0..8].try_into().unwrap()) as usize;
    let header_end = 8 + header_len;
    if bytes.len() < header_end {
        return Err(Error::Artifact(format!(
            "{}: header truncated",
            path.display()
        )));
    }
    let header: Value = serde_json::from_slice(&bytes[8..header_end])
        .map_err(|e| Error::Artifact(format!("{}: {e}", path.display())))?;
    let payload = &bytes[header_end..];
    let obj = header
        .as_object()
        .ok_or_else(|| Error::Artifact(format!("{}: header is not an object", path.display())))?;
    let config = obj.get("__config__").cloned().unwrap_or(Value::Null);

    let mut tensors = Vec::new();
    for (name, entry) in obj {
        if name == "__config__" {
            continue;
        }
        let dtype = entry
            .get("dtype")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Artifact(format!("tensor {name:?}: missing dtype")))?;
        let shape: Vec<usize> = entry
            .get("shape")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Artifact(format!("tensor {name:?}: missing shape")))?
            .iter()
            .map(|v| v.as_u64().unwrap_or(0) as usize)
            .collect();
        let offsets = entry
            .get("data_offsets")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Artifact(format!("tensor {name:?}: missing data_offsets")))?;
        let start = offsets[0].as_u64().unwrap_or(0) as usize;
        let end = offsets[1].as_u64().unwrap_or(0) as usize;
        if end > payload.len() || start > end {
            return Err(Error::Artifact(format!(
                "tensor {name:?}: offsets {start}..{end} outside payload of {} bytes",
                payload.len()
            )));
        }
        let raw = &payload[start..end];
        let expected: usize = shape.iter().product();
        let data: Vec<f64> = match dtype {
            "F64" => {
                if raw.len() != expected * 8 {
                    return Err(Error::Artifact(format!(
                        "tensor {name:?}: shape {shape:?} wants {expected} f64 values, payload has {} bytes",
                        raw.len()
                    )));
                }
                raw.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect()
            }
            "F32" => {
                if raw.len() != expected * 4 {
                    return Err(Error::Artifact(format!(
                        "tensor {name:?}: shape {shape:?} wants {expected} f32 values, payload has {} bytes",
                        raw.len()
                    )));
                }
                raw.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                    .collect()
            }
            other => {
                return Err(Error::Artifact(format!(
                    "tensor {name:?}: unsupported dtype {other:?}"
                )))
            }
        };
        tensors.push((name.clone(), Tensor { shape, data }));
    }
    Ok((config, tensors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn container_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.mbar");
        let mut art = ModelArtifact::new(json!({"model": "test", "k": 3}));
        art.push(
            "weights",
            Tensor {
                shape: vec![2, 3],
                data: vec![1.5, -2.25, 0.1 + 0.2, f64::MIN_POSITIVE, 1e300, -0.0],
            },
        );
        art.push("bias", Tensor::from_vec(&[0.125]));
        art.save(&path).unwrap();
        let back = ModelArtifact::load(&path).unwrap();
        assert_eq!(art, back);
        let bits: Vec<u64> = back.tensor("weights").unwrap().data.iter().map(|v| v.to_bits()).collect();
        let orig: Vec<u64> = art.tensor("weights").unwrap().data.iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits, orig);
    }

    #[test]
    fn saves_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.mbar");
        let b = dir.path().join("b.mbar");
        let mut art = ModelArtifact::new(json!({"b": 1, "a": 2}));
        art.push("t", Tensor::from_vec(&[1.0, 2.0]));
        art.save(&a).unwrap();
        art.save(&b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.mbar");
        std::fs::write(&path, b"NOPE____________").unwrap();
        let err = ModelArtifact::load(&path).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }

    #[test]
    fn missing_tensor_error_names_it() {
        let art = ModelArtifact::new(json!({}));
        let err = art.tensor("encoder.w").unwrap_err();
        assert!(err.to_string().contains("encoder.w"), "{err}");
    }

    #[test]
    fn archive_roundtrip_and_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("weights.bin");
        let tensors = vec![
            ("a.weight".to_string(), Tensor {
                shape: vec![2, 2],
                data: vec![1.0, 2.0, 3.0, 4.0],
            }),
            ("a.bias".to_string(), Tensor::from_vec(&[0.5, -0.5])),
        ];
        let cfg = json!({"hidden": 2, "n_layers": 1});
        write_tensor_archive(&path, &cfg, &tensors).unwrap();
        let (config, back) = read_tensor_archive(&path).unwrap();
        assert_eq!(config, cfg);
        let map: std::collections::HashMap<_, _> = back.into_iter().collect();
        assert_eq!(map["a.weight"].shape, vec![2, 2]);
        assert_eq!(map["a.weight"].data, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(map["a.bias"].data, vec![0.5, -0.5]);
    }

    #[test]
    fn archive_shape_mismatch_names_tensor() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        // Header promises 3 values but the payload carries 2.
        let header = json!({
            "w": {"dtype": "F64", "shape": [3], "data_offsets": [0, 16]},
        });
        let header_bytes = serde_json::to_vec(&header).unwrap();
        let mut bytes = Vec::new();
        bytes.extend((header_bytes.len() as u64).to_le_bytes());
        bytes.extend(&header_bytes);
        bytes.extend(1.0f64.to_le_bytes());
        bytes.extend(2.0f64.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        let err = read_tensor_archive(&path).unwrap_err();
        assert!(err.to_string().contains("\"w\""), "{err}");
    }
}
