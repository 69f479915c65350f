//! Parameter checkpoints: magic + version + config echo + named tensors.
//!
//! ```text
//! magic (4) | u32 version | u64 meta_len | meta (key = value text)
//! | u32 n_tensors | { u32 name_len, name, u32 rows, u32 cols, f64 LE data }
//! ```
//!
//! ViT checkpoints use magic `OSVT`, GRU checkpoints `OSGR`; both share the
//! container. The meta block echoes the model configuration (and, for the
//! GRU, the fitted normalizer bounds ride along as tensors).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::NnError;

pub const VIT_MAGIC: &[u8; 4] = b"OSVT";
pub const GRU_MAGIC: &[u8; 4] = b"OSGR";
const VERSION: u32 = 1;

pub fn write_checkpoint(
    path: &Path,
    magic: &[u8; 4],
    meta: &BTreeMap<String, String>,
    tensors: &[(&str, &DMatrix<f64>)],
) -> Result<(), NnError> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(magic)?;
    out.write_all(&VERSION.to_le_bytes())?;
    let mut meta_text = String::new();
    for (k, v) in meta {
        meta_text.push_str(k);
        meta_text.push_str(" = ");
        meta_text.push_str(v);
        meta_text.push('\n');
    }
    out.write_all(&(meta_text.len() as u64).to_le_bytes())?;
    out.write_all(meta_text.as_bytes())?;
    out.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, tensor) in tensors {
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&(tensor.nrows() as u32).to_le_bytes())?;
        out.write_all(&(tensor.ncols() as u32).to_le_bytes())?;
        // Row-major stream for readability in hex dumps.
        for r in 0..tensor.nrows() {
            for c in 0..tensor.ncols() {
                out.write_all(&tensor[(r, c)].to_le_bytes())?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub tensors: BTreeMap<String, DMatrix<f64>>,
}

impl Checkpoint {
    pub fn meta_str(&self, key: &str) -> Result<&str, NnError> {
        self.meta
            .get(key)
            .map(|s| s.as_str())
            .ok_or_else(|| NnError::ConfigMismatch(format!("missing meta key `{key}`")))
    }

    pub fn meta_usize(&self, key: &str) -> Result<usize, NnError> {
        self.meta_str(key)?
            .parse()
            .map_err(|_| NnError::ConfigMismatch(format!("meta key `{key}` is not an integer")))
    }

    /// Remove and return a tensor, checking its shape.
    pub fn take(&mut self, name: &str, rows: usize, cols: usize) -> Result<DMatrix<f64>, NnError> {
        let t = self
            .tensors
            .remove(name)
            .ok_or_else(|| NnError::ConfigMismatch(format!("missing tensor `{name}`")))?;
        if t.nrows() != rows || t.ncols() != cols {
            return Err(NnError::ConfigMismatch(format!(
                "tensor `{name}`: expected {rows}×{cols}, found {}×{}",
                t.nrows(),
                t.ncols()
            )));
        }
        Ok(t)
    }

    pub fn finish(self) -> Result<(), NnError> {
        if let Some(name) = self.tensors.keys().next() {
            return Err(NnError::ConfigMismatch(format!(
                "unexpected tensor `{name}` in checkpoint"
            )));
        }
        Ok(())
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, NnError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| NnError::Format("truncated checkpoint".into()))?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_checkpoint(path: &Path, magic: &[u8; 4]) -> Result<Checkpoint, NnError> {
    let mut input = BufReader::new(File::open(path)?);
    let mut found = [0u8; 4];
    input
        .read_exact(&mut found)
        .map_err(|_| NnError::Format("truncated checkpoint (magic)".into()))?;
    if &found != magic {
        return Err(NnError::Format(format!(
            "bad magic {found:?}, expected {:?}",
            std::str::from_utf8(magic).unwrap()
        )));
    }
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return Err(NnError::Format(format!("unsupported version {version}")));
    }
    let mut len_buf = [0u8; 8];
    input
        .read_exact(&mut len_buf)
        .map_err(|_| NnError::Format("truncated checkpoint (meta length)".into()))?;
    let meta_len = u64::from_le_bytes(len_buf) as usize;
    let mut meta_buf = vec![0u8; meta_len];
    input
        .read_exact(&mut meta_buf)
        .map_err(|_| NnError::Format("truncated checkpoint (meta)".into()))?;
    let meta_text =
        String::from_utf8(meta_buf).map_err(|_| NnError::Format("meta is not UTF-8".into()))?;
    let mut meta = BTreeMap::new();
    for line in meta_text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            meta.insert(k.trim().to_string(), v.trim().to_string());
        }
    }

    let n_tensors = read_u32(&mut input)? as usize;
    let mut tensors = BTreeMap::new();
    for _ in 0..n_tensors {
        let name_len = read_u32(&mut input)? as usize;
        let mut name_buf = vec![0u8; name_len];
        input
            .read_exact(&mut name_buf)
            .map_err(|_| NnError::Format("truncated checkpoint (tensor name)".into()))?;
        let name = String::from_utf8(name_buf)
            .map_err(|_| NnError::Format("tensor name is not UTF-8".into()))?;
        let rows = read_u32(&mut input)? as usize;
        let cols = read_u32(&mut input)? as usize;
        let mut data = vec![0u8; 8 * rows * cols];
        input
            .read_exact(&mut data)
            .map_err(|_| NnError::Format(format!("truncated checkpoint (tensor `{name}`)")))?;
        let mut tensor = DMatrix::zeros(rows, cols);
        let mut it = data.chunks_exact(8);
        for r in 0..rows {
            for c in 0..cols {
                let chunk = it.next().unwrap();
                tensor[(r, c)] = f64::from_le_bytes(chunk.try_into().unwrap());
            }
        }
        tensors.insert(name, tensor);
    }
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing)? != 0 {
        return Err(NnError::Format("trailing bytes after tensors".into()));
    }
    Ok(Checkpoint { meta, tensors })
}
