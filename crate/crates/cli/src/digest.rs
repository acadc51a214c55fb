use gisim_core::{Matrix, Scalar};
use sha2::{Digest, Sha256};

/// SHA-256 over the shape (two little-endian u64) followed by every element
/// in row-major order, little-endian.
pub fn matrix_digest<T: Scalar>(m: &Matrix<T>) -> String {
    let mut h = Sha256::new();
    h.update((m.rows() as u64).to_le_bytes());
    h.update((m.cols() as u64).to_le_bytes());
    for v in m.data() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}
