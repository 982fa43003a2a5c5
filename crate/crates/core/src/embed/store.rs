//! Directory-backed store of externally computed vectors.
//!
//! Layout: one file per vector named by the lowercase hex SHA-256 of the
//! exact source string, holding little-endian `f32` values, plus an
//! `index.tsv` file with one `key<TAB>dim` line per vector.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const INDEX_FILE: &str = "index.tsv";

pub fn key_for(source: &str) -> String {
    hex::encode(Sha256::digest(source.as_bytes()))
}

fn is_hex_key(key: &str) -> bool {
    key.len() == 64 && key.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

/// Parses `key<TAB>dim` lines. Later duplicates override earlier ones.
pub fn parse_index(text: &str) -> Result<BTreeMap<String, usize>> {
    let mut index = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse { line: i + 1, message };
        let (key, dim) = line
            .split_once('\t')
            .ok_or_else(|| bad("expected key<TAB>dim".to_string()))?;
        if !is_hex_key(key) {
            return Err(bad(format!("invalid key {key:?}")));
        }
        let dim: usize = dim
            .trim()
            .parse()
            .map_err(|e| bad(format!("invalid dim: {e}")))?;
        if dim == 0 {
            return Err(bad("dim must be positive".to_string()));
        }
        index.insert(key.to_string(), dim);
    }
    Ok(index)
}

pub fn encode_vector(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect()
}

pub fn decode_vector(bytes: &[u8]) -> Result<Vec<f32>> {
    if bytes.len() % 4 != 0 {
        return Err(Error::Store(format!(
            "vector file length {} is not a multiple of 4",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

#[derive(Clone, Debug)]
pub struct VectorStore {
    dir: PathBuf,
    index: BTreeMap<String, usize>,
}

impl VectorStore {
    pub fn create(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let index_path = dir.join(INDEX_FILE);
        if !index_path.exists() {
            fs::write(&index_path, "").map_err(|e| Error::io(&index_path, e))?;
        }
        Self::open(dir)
    }

    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let index_path = dir.join(INDEX_FILE);
        let text = fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
        let index = parse_index(&text)?;
        Ok(VectorStore { dir, index })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn contains(&self, source: &str) -> bool {
        self.index.contains_key(&key_for(source))
    }

    /// Stores `values` under the key of `source`, returning the key.
    pub fn insert(&mut self, source: &str, values: &[f64]) -> Result<String> {
        if values.is_empty() {
            return Err(Error::Store("cannot store an empty vector".into()));
        }
        let key = key_for(source);
        let path = self.dir.join(&key);
        fs::write(&path, encode_vector(values)).map_err(|e| Error::io(&path, e))?;
        if self.index.get(&key) != Some(&values.len()) {
            let index_path = self.dir.join(INDEX_FILE);
            let mut f = OpenOptions::new()
                .append(true)
                .open(&index_path)
                .map_err(|e| Error::io(&index_path, e))?;
            writeln!(f, "{key}\t{}", values.len()).map_err(|e| Error::io(&index_path, e))?;
            self.index.insert(key.clone(), values.len());
        }
        Ok(key)
    }

    pub fn get(&self, source: &str) -> Result<Vec<f64>> {
        let key = key_for(source);
        let dim = *self
            .index
            .get(&key)
            .ok_or_else(|| Error::EmbeddingNotFound(key.clone()))?;
        let path = self.dir.join(&key);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let values = decode_vector(&bytes)?;
        if values.len() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                found: values.len(),
            });
        }
        Ok(values.into_iter().map(f64::from).collect())
    }
}
