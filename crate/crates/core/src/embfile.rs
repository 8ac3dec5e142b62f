//! Binary item-embedding files.
//!
//! Layout, all little-endian: magic `AGTM`, `u32` version (1), `u32`
//! n_items, `u32` dim, then `n_items × dim` `f32` values row-major. A sidecar
//! `items.txt` next to the file lists one external item id per row.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const EMB_MAGIC: &[u8; 4] = b"AGTM";
pub const EMB_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

/// Item embeddings with their external ids, row-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemEmbeddings {
    pub item_ids: Vec<String>,
    pub matrix: Matrix,
}

impl ItemEmbeddings {
    pub fn new(item_ids: Vec<String>, matrix: Matrix) -> Result<Self> {
        if item_ids.len() != matrix.rows() {
            return Err(Error::Shape(format!(
                "{} item ids for {} embedding rows",
                item_ids.len(),
                matrix.rows()
            )));
        }
        Ok(Self { item_ids, matrix })
    }

    /// Rows reordered to `target_ids`. Ids missing here get a zero row; the
    /// second value counts them.
    pub fn align_to(&self, target_ids: &[String]) -> (Matrix, usize) {
        let index: std::collections::HashMap<&str, usize> = self
            .item_ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let dim = self.matrix.cols();
        let mut out = Matrix::zeros(target_ids.len(), dim);
        let mut missing = 0;
        for (r, id) in target_ids.iter().enumerate() {
            match index.get(id.as_str()) {
                Some(&src) => out.row_mut(r).copy_from_slice(self.matrix.row(src)),
                None => missing += 1,
            }
        }
        (out, missing)
    }
}

/// Path of the id sidecar for an embedding file: `items.txt` in the same
/// directory.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.parent().unwrap_or_else(|| Path::new(".")).join("items.txt")
}

pub fn encode(matrix: &Matrix) -> Result<Vec<u8>> {
    let rows = u32::try_from(matrix.rows()).map_err(|_| Error::Shape("too many rows".into()))?;
    let cols = u32::try_from(matrix.cols()).map_err(|_| Error::Shape("too many columns".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * matrix.as_slice().len());
    out.extend_from_slice(EMB_MAGIC);
    out.extend_from_slice(&EMB_VERSION.to_le_bytes());
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for v in matrix.to_f32() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Matrix> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format("embedding file shorter than its header".into()));
    }
    if &bytes[..4] != EMB_MAGIC {
        return Err(Error::Format("bad magic, expected AGTM".into()));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != EMB_VERSION {
        return Err(Error::Format(format!("unsupported embedding version {version}")));
    }
    let rows = word(8) as usize;
    let cols = word(12) as usize;
    let expected = HEADER_LEN + 4 * rows * cols;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "embedding payload is {} bytes, header implies {}",
            bytes.len(),
            expected
        )));
    }
    let data: Vec<f32> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Matrix::from_f32(rows, cols, &data)
}

/// Writes `emb` to `path` and its ids to the `items.txt` sidecar.
pub fn write_embeddings(path: &Path, emb: &ItemEmbeddings) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, encode(&emb.matrix)?).map_err(|e| Error::io(path, e))?;
    let sidecar = sidecar_path(path);
    let mut ids = Vec::new();
    for id in &emb.item_ids {
        if id.contains(['\n', '\r']) {
            return Err(Error::Invalid(format!("item id {id:?} contains a newline")));
        }
        writeln!(ids, "{id}").expect("write to Vec");
    }
    fs::write(&sidecar, ids).map_err(|e| Error::io(&sidecar, e))
}

/// Reads an embedding file and validates it against its `items.txt` sidecar.
pub fn read_embeddings(path: &Path) -> Result<ItemEmbeddings> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let matrix = decode(&bytes)?;
    let sidecar = sidecar_path(path);
    let text = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    let item_ids: Vec<String> = text.lines().map(str::to_owned).collect();
    if item_ids.len() != matrix.rows() {
        return Err(Error::Format(format!(
            "{} lists {} ids but the header says {} items",
            sidecar.display(),
            item_ids.len(),
            matrix.rows()
        )));
    }
    ItemEmbeddings::new(item_ids, matrix)
}
