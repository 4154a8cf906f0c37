use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Content hash of a matrix plus its row count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub hash: String,
    pub rows: usize,
}

impl Fingerprint {
    pub fn of_matrix(x: &Array2<f64>) -> Self {
        let mut h = Sha256::new();
        h.update((x.nrows() as u64).to_le_bytes());
        h.update((x.ncols() as u64).to_le_bytes());
        for v in x.iter() {
            h.update(v.to_bits().to_le_bytes());
        }
        Fingerprint {
            hash: to_hex(&h.finalize()),
            rows: x.nrows(),
        }
    }
}

impl std::fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", &self.hash[..16.min(self.hash.len())], self.rows)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    to_hex(&Sha256::digest(bytes))
}

fn to_hex(bytes: &[u8]) -> String {
    use std::fmt::Write;
    bytes.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}
