//! Versioned binary cache of a parsed dataset, keyed by a digest of the
//! source files.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{AttributeKind, AttributeSpec, DataError, Dataset, DemoRecord, Rating, RatingMatrix, Result};
use crate::codec::{invalid_data, Reader, Writer};

pub const CACHE_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"MFDCFDS\0";

#[derive(Debug, Clone, PartialEq)]
pub struct CachedDataset {
    /// Hex SHA-256 of the source files the dataset was parsed from.
    pub source_digest: String,
    pub dataset: Dataset,
}

fn io_err(path: &Path, source: io::Error) -> DataError {
    DataError::Io { path: path.display().to_string(), source }
}

/// SHA-256 over the contents of `paths`, each framed by its length.
pub fn source_digest(paths: &[&Path]) -> Result<String> {
    let mut hasher = Sha256::new();
    for path in paths {
        let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

fn kind_code(kind: AttributeKind) -> u8 {
    match kind {
        AttributeKind::Categorical => 0,
        AttributeKind::AgeDecade => 1,
        AttributeKind::CountryToken => 2,
    }
}

fn kind_from(code: u8) -> io::Result<AttributeKind> {
    match code {
        0 => Ok(AttributeKind::Categorical),
        1 => Ok(AttributeKind::AgeDecade),
        2 => Ok(AttributeKind::CountryToken),
        other => Err(invalid_data(format!("unknown attribute kind {other}"))),
    }
}

pub(crate) fn encode_dataset<W: Write>(w: &mut Writer<W>, digest: &str, d: &Dataset) -> io::Result<()> {
    w.bytes(MAGIC)?;
    w.u32(CACHE_FORMAT_VERSION)?;
    w.str(digest)?;
    w.str(&d.name)?;
    w.len(d.user_ids.len())?;
    for id in &d.user_ids {
        w.str(id)?;
    }
    w.len(d.item_ids.len())?;
    for id in &d.item_ids {
        w.str(id)?;
    }
    let (lo, hi) = d.ratings.scale();
    w.f64(lo)?;
    w.f64(hi)?;
    w.len(d.ratings.len())?;
    for r in d.ratings.entries() {
        w.u32(r.user)?;
        w.u32(r.item)?;
        w.f64(r.value)?;
        w.u8(r.implicit as u8)?;
    }
    w.len(d.demo_schema.len())?;
    for spec in &d.demo_schema {
        w.str(&spec.name)?;
        w.u8(kind_code(spec.kind))?;
    }
    for rec in &d.user_demo {
        w.len(rec.len())?;
        for (k, v) in rec {
            w.str(k)?;
            w.str(v)?;
        }
    }
    for labels in &d.item_side {
        w.len(labels.len())?;
        for l in labels {
            w.str(l)?;
        }
    }
    Ok(())
}

fn decode_dataset<R: Read>(r: &mut Reader<R>) -> io::Result<CachedDataset> {
    if &r.array::<8>()? != MAGIC {
        return Err(invalid_data("not a dataset cache"));
    }
    let version = r.u32()?;
    if version != CACHE_FORMAT_VERSION {
        return Err(invalid_data(format!("cache format version {version}, expected {CACHE_FORMAT_VERSION}")));
    }
    let source_digest = r.str()?;
    let name = r.str()?;
    let n = r.len()?;
    let user_ids = (0..n).map(|_| r.str()).collect::<io::Result<Vec<_>>>()?;
    let m = r.len()?;
    let item_ids = (0..m).map(|_| r.str()).collect::<io::Result<Vec<_>>>()?;
    let scale = (r.f64()?, r.f64()?);
    let nnz = r.len()?;
    let mut entries = Vec::with_capacity(nnz.min(1 << 24));
    for _ in 0..nnz {
        entries.push(Rating { user: r.u32()?, item: r.u32()?, value: r.f64()?, implicit: r.u8()? != 0 });
    }
    let n_attr = r.len()?;
    let mut demo_schema = Vec::with_capacity(n_attr.min(1024));
    for _ in 0..n_attr {
        demo_schema.push(AttributeSpec { name: r.str()?, kind: kind_from(r.u8()?)? });
    }
    let mut user_demo = Vec::with_capacity(n);
    for _ in 0..n {
        let len = r.len()?;
        let mut rec = DemoRecord::new();
        for _ in 0..len {
            let k = r.str()?;
            rec.insert(k, r.str()?);
        }
        user_demo.push(rec);
    }
    let mut item_side = Vec::with_capacity(m);
    for _ in 0..m {
        let len = r.len()?;
        item_side.push((0..len).map(|_| r.str()).collect::<io::Result<Vec<_>>>()?);
    }
    r.expect_end()?;
    let ratings = RatingMatrix::new(n, m, entries, scale).map_err(|e| invalid_data(e.to_string()))?;
    let dataset = Dataset { name, user_ids, item_ids, ratings, demo_schema, user_demo, item_side };
    dataset.validate().map_err(|e| invalid_data(e.to_string()))?;
    Ok(CachedDataset { source_digest, dataset })
}

/// Writes the cache atomically (temporary file, then rename).
pub fn write_cache(path: &Path, cached: &CachedDataset) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let file = File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
    let mut w = Writer::new(BufWriter::new(file));
    encode_dataset(&mut w, &cached.source_digest, &cached.dataset).map_err(|e| io_err(&tmp, e))?;
    w.into_inner().flush().map_err(|e| io_err(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

pub fn read_cache(path: &Path) -> Result<CachedDataset> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    decode_dataset(&mut Reader::new(BufReader::new(file))).map_err(|e| match e.kind() {
        io::ErrorKind::InvalidData | io::ErrorKind::UnexpectedEof => DataError::Cache(format!("{}: {e}", path.display())),
        _ => io_err(path, e),
    })
}
