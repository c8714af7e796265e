use mfdcf_core::data::EncoderSet;
use mfdcf_core::solver::{decode_model, encode_model, read_model, write_model, Hyperparams, TrainedModel};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn signs(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 })
}

fn small_model() -> TrainedModel {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (r, n, m) = (5, 9, 11);
    let dims = [3, 6];
    let rot = DMatrix::from_fn(r, r, |_, _| rng.random::<f64>() - 0.5).qr().q();
    TrainedModel {
        w: dims.iter().map(|&d| DMatrix::from_fn(r, d, |_, _| rng.random::<f64>() * 4.0 - 2.0)).collect(),
        d: signs(&mut rng, r, m),
        r: rot,
        b: signs(&mut rng, r, n),
        hyper: Hyperparams { bits: r, rank_budget: Some(2), svd_rank: Some(4), seed: 99, ..Hyperparams::default() },
        dataset: "toy".into(),
        encoders: EncoderSet::raw(&dims),
    }
}

#[test]
fn encode_decode_round_trip_is_exact() {
    let model = small_model();
    let bytes = encode_model(Vec::new(), &model).unwrap();
    let back = decode_model(bytes.as_slice()).unwrap();
    assert_eq!(back, model);
    assert_eq!(encode_model(Vec::new(), &back).unwrap(), bytes);
}

#[test]
fn file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    let model = small_model();
    write_model(&path, &model).unwrap();
    assert_eq!(read_model(&path).unwrap(), model);
    assert!(!path.with_extension("tmp").exists());
}

#[test]
fn truncated_and_foreign_files_are_rejected() {
    let bytes = encode_model(Vec::new(), &small_model()).unwrap();
    for cut in [0, 7, 20, bytes.len() / 2, bytes.len() - 1] {
        assert!(decode_model(&bytes[..cut]).is_err(), "prefix of {cut} bytes accepted");
    }
    let mut bad = bytes.clone();
    bad[0] ^= 1;
    assert!(decode_model(bad.as_slice()).is_err());
    let mut version = bytes.clone();
    version[8] = 2;
    assert!(decode_model(version.as_slice()).is_err());
    let mut trailing = bytes;
    trailing.push(0);
    assert!(decode_model(trailing.as_slice()).is_err());
}
