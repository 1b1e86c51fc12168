use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Identifies the configuration and seed an artifact was produced under.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(config_hash: impl Into<String>, seed: u64) -> Self {
        Provenance {
            config_hash: config_hash.into(),
            seed,
        }
    }

    /// Hashes the JSON serialization of `config`.
    pub fn of<C: Serialize>(config: &C, seed: u64) -> Self {
        let bytes = serde_json::to_vec(config).expect("config serializes");
        Provenance::new(sha256_hex(&bytes), seed)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn hash_follows_content() {
        let a = Provenance::of(&serde_json::json!({"epochs": 10}), 1);
        let b = Provenance::of(&serde_json::json!({"epochs": 10}), 1);
        let c = Provenance::of(&serde_json::json!({"epochs": 11}), 1);
        assert_eq!(a, b);
        assert_ne!(a.config_hash, c.config_hash);
    }
}
