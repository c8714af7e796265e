//! Versioned little-endian model file.
//!
//! Layout: magic, format version, n, m, r, M, d_m list, hyperparameters,
//! dataset tag, bit-packed D (row-major), bit-packed B, dense R, dense W
//! blocks (row-major f64), then the encoders as a length-prefixed JSON blob.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Hyperparams, TrainedModel};
use crate::codec::{invalid_data, pack_signs_row_major, unpack_signs_row_major, Reader, Writer};
use crate::data::EncoderSet;

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"MFDCFMDL";

fn to_u32(v: usize, what: &str) -> io::Result<u32> {
    u32::try_from(v).map_err(|_| invalid_data(format!("{what} {v} does not fit in 32 bits")))
}

pub fn encode_model<W: Write>(out: W, model: &TrainedModel) -> io::Result<W> {
    let mut w = Writer::new(out);
    let (r, n, m) = (model.bits(), model.n_users(), model.n_items());
    let hp = &model.hyper;
    w.bytes(MAGIC)?;
    w.u32(MODEL_FORMAT_VERSION)?;
    w.u64(n as u64)?;
    w.u64(m as u64)?;
    w.u32(to_u32(r, "code length")?)?;
    w.u32(to_u32(model.w.len(), "view count")?)?;
    for block in &model.w {
        w.u64(block.ncols() as u64)?;
    }
    for v in [hp.alpha, hp.beta, hp.gamma, hp.lambda, hp.tol, hp.ridge] {
        w.f64(v)?;
    }
    w.u32(to_u32(hp.rank_budget(), "rank budget")?)?;
    w.u32(to_u32(hp.svd_rank(n, m), "SVD rank")?)?;
    w.u32(to_u32(hp.max_iters, "max_iters")?)?;
    w.u64(hp.seed)?;
    w.u8(hp.normalize_ratings as u8)?;
    w.str(&model.dataset)?;
    w.bytes(&pack_signs_row_major(&model.d))?;
    w.bytes(&pack_signs_row_major(&model.b))?;
    w.matrix_rows(&model.r)?;
    for block in &model.w {
        w.matrix_rows(block)?;
    }
    let encoders = serde_json::to_vec(&model.encoders).map_err(|e| invalid_data(e.to_string()))?;
    w.len(encoders.len())?;
    w.bytes(&encoders)?;
    Ok(w.into_inner())
}

pub fn decode_model<R: Read>(input: R) -> io::Result<TrainedModel> {
    let mut rd = Reader::new(input);
    if &rd.array::<8>()? != MAGIC {
        return Err(invalid_data("not a model file"));
    }
    let version = rd.u32()?;
    if version != MODEL_FORMAT_VERSION {
        return Err(invalid_data(format!("model format version {version}, expected {MODEL_FORMAT_VERSION}")));
    }
    let n = rd.len()?;
    let m = rd.len()?;
    let r = rd.u32()? as usize;
    let views = rd.u32()? as usize;
    let dims = (0..views).map(|_| rd.len()).collect::<io::Result<Vec<_>>>()?;
    let mut f = [0.0; 6];
    for v in &mut f {
        *v = rd.f64()?;
    }
    let rank_budget = rd.u32()? as usize;
    let svd_rank = rd.u32()? as usize;
    let max_iters = rd.u32()? as usize;
    let seed = rd.u64()?;
    let normalize_ratings = match rd.u8()? {
        0 => false,
        1 => true,
        other => return Err(invalid_data(format!("invalid flag byte {other}"))),
    };
    let hyper = Hyperparams {
        alpha: f[0],
        beta: f[1],
        gamma: f[2],
        lambda: f[3],
        tol: f[4],
        ridge: f[5],
        bits: r,
        rank_budget: Some(rank_budget),
        svd_rank: Some(svd_rank),
        max_iters,
        seed,
        normalize_ratings,
    };
    let dataset = rd.str()?;
    let d = unpack_signs_row_major(&rd.bytes((r * m).div_ceil(8))?, r, m);
    let b = unpack_signs_row_major(&rd.bytes((r * n).div_ceil(8))?, r, n);
    let rot = rd.matrix_rows(r, r)?;
    let w = dims.iter().map(|&dm| rd.matrix_rows(r, dm)).collect::<io::Result<Vec<_>>>()?;
    let len = rd.len()?;
    let encoders: EncoderSet = serde_json::from_slice(&rd.bytes(len)?).map_err(|e| invalid_data(e.to_string()))?;
    rd.expect_end()?;
    let model = TrainedModel { w, d, r: rot, b, hyper, dataset, encoders };
    model.check().map_err(|e| invalid_data(e.to_string()))?;
    Ok(model)
}

/// Writes through a temporary file renamed into place.
pub fn write_model(path: &Path, model: &TrainedModel) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    let out = encode_model(BufWriter::new(File::create(&tmp)?), model)?;
    out.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    std::fs::rename(&tmp, path)
}

pub fn read_model(path: &Path) -> io::Result<TrainedModel> {
    decode_model(BufReader::new(File::open(path)?))
}
