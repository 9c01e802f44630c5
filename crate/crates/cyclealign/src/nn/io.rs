//! Parameter checkpoint encoding.
//!
//! Layout (all integers little-endian):
//! magic `CYAL`, format version u32, layer-size count u32, layer sizes u32
//! each, hidden activation code u8, output activation code u8, then per layer
//! the weight matrix row-major and the bias vector as f64. Round-trips are
//! bit-exact.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::bytes::{write_atomic, Reader, Writer};
use crate::error::Result;
use crate::nn::{Activation, Matrix, MlpParams, MlpSpec};

pub const PARAMS_MAGIC: &[u8; 4] = b"CYAL";
pub const PARAMS_VERSION: u32 = 1;

pub(crate) fn write_params_block(w: &mut Writer, params: &MlpParams) {
    w.magic(PARAMS_MAGIC);
    w.u32(PARAMS_VERSION);
    w.u32(params.spec.layer_sizes.len() as u32);
    for &s in &params.spec.layer_sizes {
        w.u32(s as u32);
    }
    w.u8(params.spec.hidden_activation.code());
    w.u8(params.spec.output_activation.code());
    for layer in 0..params.weights.len() {
        w.f64_slice(params.weights[layer].data());
        w.f64_slice(&params.biases[layer]);
    }
}

pub(crate) fn read_params_block(r: &mut Reader) -> Result<MlpParams> {
    r.magic(PARAMS_MAGIC)?;
    r.version(PARAMS_VERSION)?;
    let n_sizes = r.u32("layer count")? as usize;
    let mut sizes = Vec::with_capacity(n_sizes);
    for _ in 0..n_sizes {
        sizes.push(r.u32("layer size")? as usize);
    }
    let hidden = Activation::from_code(r.u8("hidden activation")?)?;
    let output = Activation::from_code(r.u8("output activation")?)?;
    let spec = MlpSpec::new(sizes, hidden, output)?;
    let mut weights = Vec::with_capacity(spec.num_layers());
    let mut biases = Vec::with_capacity(spec.num_layers());
    for layer in 0..spec.num_layers() {
        let rows = spec.layer_sizes[layer + 1];
        let cols = spec.layer_sizes[layer];
        let data = r.f64_vec(rows * cols, "weights")?;
        weights.push(Matrix::from_data(rows, cols, data)?);
        biases.push(r.f64_vec(rows, "biases")?);
    }
    Ok(MlpParams {
        spec,
        weights,
        biases,
    })
}

/// Serializes one network to its checkpoint byte form.
pub fn params_to_bytes(params: &MlpParams) -> Vec<u8> {
    let mut w = Writer::new();
    write_params_block(&mut w, params);
    w.into_bytes()
}

pub fn params_from_bytes(bytes: &[u8], origin: &str) -> Result<MlpParams> {
    let mut r = Reader::new(bytes, origin);
    let p = read_params_block(&mut r)?;
    r.done()?;
    Ok(p)
}

pub fn save_params(params: &MlpParams, path: &Path) -> Result<()> {
    write_atomic(path, &params_to_bytes(params))
}

pub fn load_params(path: &Path) -> Result<MlpParams> {
    let bytes = fs::read(path)?;
    params_from_bytes(&bytes, &path.display().to_string())
}

/// SHA-256 of the checkpoint byte form; the identity used by freeze checks.
pub fn digest_params(params: &MlpParams) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(params_to_bytes(params));
    h.finalize().into()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn sample() -> MlpParams {
        MlpParams::init(
            MlpSpec::new(vec![3, 5, 2], Activation::Tanh, Activation::Sigmoid).unwrap(),
            42,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let p = sample();
        let bytes = params_to_bytes(&p);
        let q = params_from_bytes(&bytes, "mem").unwrap();
        assert_eq!(p, q);
        assert_eq!(bytes, params_to_bytes(&q));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("net.cyal");
        let p = sample();
        save_params(&p, &path).unwrap();
        let q = load_params(&path).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn bad_magic_and_truncation_have_distinct_errors() {
        let p = sample();
        let mut bytes = params_to_bytes(&p);
        bytes[0] = b'X';
        assert!(matches!(
            params_from_bytes(&bytes, "mem"),
            Err(crate::error::Error::BadMagic { .. })
        ));

        let bytes = params_to_bytes(&p);
        assert!(matches!(
            params_from_bytes(&bytes[..bytes.len() - 3], "mem"),
            Err(crate::error::Error::Truncated { .. })
        ));
    }

    #[test]
    fn version_mismatch_detected() {
        let p = sample();
        let mut bytes = params_to_bytes(&p);
        bytes[4..8].copy_from_slice(&9u32.to_le_bytes());
        assert!(matches!(
            params_from_bytes(&bytes, "mem"),
            Err(crate::error::Error::VersionMismatch { found: 9, .. })
        ));
    }

    #[test]
    fn digest_tracks_parameter_changes() {
        let p = sample();
        let d1 = digest_params(&p);
        let mut q = p.clone();
        let v = q.weights[0].get(0, 0);
        q.weights[0].set(0, 0, v + 1e-9);
        assert_ne!(d1, digest_params(&q));
    }
}
