//! Binary artifact formats: the embedding file and model checkpoints.
//! Both layouts are fixed; identical inputs must produce byte-identical
//! files.

use crate::error::{Error, Result};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

pub const EMBEDDING_MAGIC: &[u8; 4] = b"MRNE";
pub const EMBEDDING_VERSION: u32 = 1;
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MRCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Persisted id -> vector map.
///
/// Layout: magic "MRNE", format version u32, dim u32, count u64, then per
/// record: id length u16, UTF-8 id bytes, dim little-endian f32 values.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub dim: usize,
    pub entries: Vec<(String, Vec<f32>)>,
}

impl EmbeddingFile {
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(EMBEDDING_MAGIC)?;
        out.write_u32::<LittleEndian>(EMBEDDING_VERSION)?;
        out.write_u32::<LittleEndian>(self.dim as u32)?;
        out.write_u64::<LittleEndian>(self.entries.len() as u64)?;
        for (id, vec) in &self.entries {
            if vec.len() != self.dim {
                return Err(Error::shape(format!(
                    "embedding for {id:?} has {} values, expected {}",
                    vec.len(),
                    self.dim
                )));
            }
            let bytes = id.as_bytes();
            if bytes.len() > u16::MAX as usize {
                return Err(Error::data(format!("id too long: {id:?}")));
            }
            out.write_u16::<LittleEndian>(bytes.len() as u16)?;
            out.write_all(bytes)?;
            for &v in vec {
                out.write_f32::<LittleEndian>(v)?;
            }
        }
        Ok(())
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != EMBEDDING_MAGIC {
            return Err(Error::data("not an embedding file (bad magic)"));
        }
        let version = input.read_u32::<LittleEndian>()?;
        if version != EMBEDDING_VERSION {
            return Err(Error::data(format!(
                "unsupported embedding file version {version}"
            )));
        }
        let dim = input.read_u32::<LittleEndian>()? as usize;
        let count = input.read_u64::<LittleEndian>()? as usize;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let id_len = input.read_u16::<LittleEndian>()? as usize;
            let mut id_bytes = vec![0u8; id_len];
            input.read_exact(&mut id_bytes)?;
            let id = String::from_utf8(id_bytes)
                .map_err(|e| Error::data(format!("bad id encoding: {e}")))?;
            let mut vec = Vec::with_capacity(dim);
            for _ in 0..dim {
                vec.push(input.read_f32::<LittleEndian>()?);
            }
            entries.push((id, vec));
        }
        Ok(EmbeddingFile { dim, entries })
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        write_atomic(path, &buf)
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
        Self::read(std::io::BufReader::new(file))
    }

    pub fn to_f64_map(&self) -> BTreeMap<String, Vec<f64>> {
        self.entries
            .iter()
            .map(|(id, v)| (id.clone(), v.iter().map(|&x| x as f64).collect()))
            .collect()
    }
}

/// Human-readable half of a checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CheckpointManifest {
    pub model_kind: String,
    pub dims: BTreeMap<String, u64>,
    pub seed: u64,
    #[serde(default)]
    pub task_registry: Option<String>,
    /// per-task loss-normalizer EMA state
    #[serde(default)]
    pub normalizers: BTreeMap<String, f64>,
    #[serde(default)]
    pub extra: BTreeMap<String, String>,
}

/// Checkpoint: manifest JSON plus named tensors as little-endian f32.
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub tensors: Vec<(String, Vec<usize>, Vec<f32>)>,
}

impl Checkpoint {
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_u32::<LittleEndian>(CHECKPOINT_VERSION)?;
        let manifest =
            serde_json::to_vec(&self.manifest).map_err(|e| Error::data(e.to_string()))?;
        out.write_u32::<LittleEndian>(manifest.len() as u32)?;
        out.write_all(&manifest)?;
        out.write_u32::<LittleEndian>(self.tensors.len() as u32)?;
        for (name, shape, data) in &self.tensors {
            let expected: usize = shape.iter().product();
            if expected != data.len() {
                return Err(Error::shape(format!(
                    "tensor {name}: shape {shape:?} vs {} values",
                    data.len()
                )));
            }
            out.write_u16::<LittleEndian>(name.len() as u16)?;
            out.write_all(name.as_bytes())?;
            out.write_u8(shape.len() as u8)?;
            for &d in shape {
                out.write_u32::<LittleEndian>(d as u32)?;
            }
            for &v in data {
                out.write_f32::<LittleEndian>(v)?;
            }
        }
        Ok(())
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::data("not a checkpoint (bad magic)"));
        }
        let version = input.read_u32::<LittleEndian>()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::data(format!("unsupported checkpoint version {version}")));
        }
        let manifest_len = input.read_u32::<LittleEndian>()? as usize;
        let mut manifest_bytes = vec![0u8; manifest_len];
        input.read_exact(&mut manifest_bytes)?;
        let manifest: CheckpointManifest = serde_json::from_slice(&manifest_bytes)
            .map_err(|e| Error::data(format!("bad checkpoint manifest: {e}")))?;
        let count = input.read_u32::<LittleEndian>()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = input.read_u16::<LittleEndian>()? as usize;
            let mut name_bytes = vec![0u8; name_len];
            input.read_exact(&mut name_bytes)?;
            let name = String::from_utf8(name_bytes)
                .map_err(|e| Error::data(format!("bad tensor name: {e}")))?;
            let ndims = input.read_u8()? as usize;
            let mut shape = Vec::with_capacity(ndims);
            for _ in 0..ndims {
                shape.push(input.read_u32::<LittleEndian>()? as usize);
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                data.push(input.read_f32::<LittleEndian>()?);
            }
            tensors.push((name, shape, data));
        }
        Ok(Checkpoint { manifest, tensors })
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        write_atomic(path, &buf)
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
        Self::read(std::io::BufReader::new(file))
    }
}

/// Write via a temp file in the same directory, then rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "artifact".to_string())
    ));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
