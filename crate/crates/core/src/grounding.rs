//! Exact L2 grounding of generated embeddings onto catalog items.
//!
//! Candidates are compared by squared distance (same order as the true
//! distance) and ties are broken by item id. The table keeps its items
//! sorted by id, so the tie-break reduces to comparing row indices.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs;
use std::path::Path;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::metrics::Slate;
use crate::{Error, Id, Result};

const MAGIC: &[u8; 6] = b"IFEMB1";

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    ids: Vec<Id>,
    data: Vec<f32>,
    index: HashMap<Id, usize>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, entries: Vec<(Id, Vec<f32>)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("embedding dimension must be at least 1".into()));
        }
        let mut entries = entries;
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        let mut ids = Vec::with_capacity(entries.len());
        let mut data = Vec::with_capacity(entries.len() * dim);
        for (id, v) in entries {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    table: dim,
                    oracle: id,
                    got: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "embedding for `{id}` has non-finite components"
                )));
            }
            if ids.last() == Some(&id) {
                return Err(Error::InvalidConfig(format!("duplicate embedding id `{id}`")));
            }
            ids.push(id);
            data.extend_from_slice(&v);
        }
        let index = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        Ok(Self { dim, ids, data, index })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Item ids in ascending order; row `i` of the table belongs to `ids()[i]`.
    pub fn ids(&self) -> &[Id] {
        &self.ids
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.position(id).map(|i| self.row(i))
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Id, &[f32])> {
        self.ids.iter().enumerate().map(move |(i, id)| (id, self.row(i)))
    }

    fn check(&self, oracle: &OracleEmbedding) -> Result<()> {
        if oracle.vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                table: self.dim,
                oracle: oracle.sequence_ref.clone(),
                got: oracle.vector.len(),
            });
        }
        Ok(())
    }

    /// Squared L2 distance from `oracle` to every row, in row order.
    pub fn squared_distances(&self, oracle: &OracleEmbedding) -> Result<Vec<f64>> {
        self.check(oracle)?;
        Ok(self
            .data
            .chunks_exact(self.dim)
            .map(|row| {
                row.iter()
                    .zip(&oracle.vector)
                    .map(|(&a, &b)| {
                        let d = f64::from(a) - f64::from(b);
                        d * d
                    })
                    .sum()
            })
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let entries: Vec<(&str, &[f32])> = self.entries().map(|(id, v)| (id.as_str(), v)).collect();
        write_binary(path, self.dim, &entries)
    }

    /// Loads either the binary format or the TSV fallback.
    pub fn load(path: &Path) -> Result<Self> {
        let (dim, entries) = read_vectors(path)?;
        Self::new(dim, entries)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleEmbedding {
    pub sequence_ref: Id,
    pub vector: Vec<f32>,
}

impl OracleEmbedding {
    pub fn new(sequence_ref: impl Into<Id>, vector: Vec<f32>) -> Self {
        Self {
            sequence_ref: sequence_ref.into(),
            vector,
        }
    }
}

/// L2 distances from one oracle to every catalog item.
#[derive(Debug, Clone)]
pub struct Distances<'a> {
    table: &'a EmbeddingTable,
    sequence_ref: Id,
    squared: Vec<f64>,
    values: Vec<f64>,
}

impl<'a> Distances<'a> {
    pub fn table(&self) -> &'a EmbeddingTable {
        self.table
    }

    pub fn sequence_ref(&self) -> &str {
        &self.sequence_ref
    }

    /// Squared distances in table row order, the values rankings compare.
    pub fn squared(&self) -> &[f64] {
        &self.squared
    }

    /// Distances in table row order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.table.position(id).map(|i| self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'a Id, f64)> + '_ {
        self.table.ids.iter().zip(self.values.iter().copied())
    }
}

pub fn distances<'a>(table: &'a EmbeddingTable, oracle: &OracleEmbedding) -> Result<Distances<'a>> {
    let squared = table.squared_distances(oracle)?;
    let values = squared.iter().map(|d| d.sqrt()).collect();
    Ok(Distances {
        table,
        sequence_ref: oracle.sequence_ref.clone(),
        squared,
        values,
    })
}

fn by_score_then_row(scores: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b))
}

/// Row indices of the `k` smallest scores, ordered by (score, row).
pub(crate) fn top_k_rows(scores: &[f64], k: usize) -> Vec<usize> {
    let k = k.min(scores.len());
    if k == 0 {
        return Vec::new();
    }
    let mut rows: Vec<usize> = (0..scores.len()).collect();
    let cmp = by_score_then_row(scores);
    if k < rows.len() {
        rows.select_nth_unstable_by(k - 1, &cmp);
        rows.truncate(k);
    }
    rows.sort_unstable_by(&cmp);
    rows
}

/// The `k` nearest items to `oracle`, nearest first.
pub fn ground(table: &EmbeddingTable, oracle: &OracleEmbedding, k: usize) -> Result<Slate> {
    if k == 0 || k > table.len() {
        return Err(Error::KTooLarge {
            k,
            catalog: table.len(),
        });
    }
    let sq = table.squared_distances(oracle)?;
    let items = top_k_rows(&sq, k).into_iter().map(|i| table.ids[i].clone()).collect();
    Ok(Slate::new(oracle.sequence_ref.clone(), items))
}

/// [`ground`] over many oracles; output order follows input order.
pub fn ground_batch(table: &EmbeddingTable, oracles: &[OracleEmbedding], k: usize) -> Result<Vec<Slate>> {
    let one = |(index, o): (usize, &OracleEmbedding)| {
        ground(table, o, k).map_err(|e| Error::Batch {
            index,
            source: Box::new(e),
        })
    };
    #[cfg(feature = "parallel")]
    let out = oracles.par_iter().enumerate().map(one).collect();
    #[cfg(not(feature = "parallel"))]
    let out = oracles.iter().enumerate().map(one).collect();
    out
}

pub fn save_oracles(path: &Path, oracles: &[OracleEmbedding]) -> Result<()> {
    let dim = oracles.first().map_or(1, |o| o.vector.len());
    let entries: Vec<(&str, &[f32])> = oracles
        .iter()
        .map(|o| (o.sequence_ref.as_str(), o.vector.as_slice()))
        .collect();
    write_binary(path, dim, &entries)
}

/// Loads oracles in file order (binary or TSV).
pub fn load_oracles(path: &Path) -> Result<Vec<OracleEmbedding>> {
    let (_, entries) = read_vectors(path)?;
    Ok(entries.into_iter().map(|(id, v)| OracleEmbedding::new(id, v)).collect())
}

fn write_binary(path: &Path, dim: usize, entries: &[(&str, &[f32])]) -> Result<()> {
    let mut buf = Vec::with_capacity(14 + entries.len() * (8 + 4 * dim));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    for (id, v) in entries {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                table: dim,
                oracle: id.to_string(),
                got: v.len(),
            });
        }
        buf.extend_from_slice(&(id.len() as u32).to_le_bytes());
        buf.extend_from_slice(id.as_bytes());
        for x in *v {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Dimension plus `(id, vector)` rows.
type Rows = (usize, Vec<(Id, Vec<f32>)>);

fn read_vectors(path: &Path) -> Result<Rows> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(MAGIC) {
        decode_binary(&bytes).map_err(|reason| Error::EmbeddingFormat {
            path: path.to_path_buf(),
            reason,
        })
    } else {
        let text = String::from_utf8(bytes).map_err(|_| Error::EmbeddingFormat {
            path: path.to_path_buf(),
            reason: "neither IFEMB1 binary nor UTF-8 TSV".into(),
        })?;
        decode_tsv(&text, path)
    }
}

fn decode_binary(bytes: &[u8]) -> std::result::Result<Rows, String> {
    let mut pos = MAGIC.len();
    let u32_at = |pos: &mut usize| -> std::result::Result<u32, String> {
        let chunk = bytes
            .get(*pos..*pos + 4)
            .ok_or_else(|| format!("truncated at byte {pos}"))?;
        *pos += 4;
        Ok(u32::from_le_bytes(chunk.try_into().unwrap()))
    };
    let n = u32_at(&mut pos)? as usize;
    let dim = u32_at(&mut pos)? as usize;
    let mut entries = Vec::with_capacity(n.min(1 << 20));
    for r in 0..n {
        let len = u32_at(&mut pos)? as usize;
        let id = bytes
            .get(pos..pos + len)
            .ok_or_else(|| format!("record {r}: truncated id"))?;
        let id = std::str::from_utf8(id).map_err(|_| format!("record {r}: id is not UTF-8"))?;
        pos += len;
        let raw = bytes
            .get(pos..pos + 4 * dim)
            .ok_or_else(|| format!("record {r}: truncated vector"))?;
        pos += 4 * dim;
        let v = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        entries.push((id.to_string(), v));
    }
    if pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - pos));
    }
    Ok((dim, entries))
}

fn decode_tsv(text: &str, path: &Path) -> Result<Rows> {
    let mut dim = None;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let id = cols.next().unwrap_or_default();
        let v: Vec<f32> = cols
            .enumerate()
            .map(|(j, c)| {
                c.trim().parse::<f32>().map_err(|e| Error::MalformedRow {
                    file: path.to_path_buf(),
                    line: i + 1,
                    field: format!("v{j}"),
                    reason: format!("`{c}`: {e}"),
                })
            })
            .collect::<Result<_>>()?;
        match dim {
            None => dim = Some(v.len()),
            Some(d) if d != v.len() => {
                return Err(Error::MalformedRow {
                    file: path.to_path_buf(),
                    line: i + 1,
                    field: "row".into(),
                    reason: format!("expected {d} components, found {}", v.len()),
                })
            }
            _ => {}
        }
        entries.push((id.to_string(), v));
    }
    Ok((dim.unwrap_or(1), entries))
}
