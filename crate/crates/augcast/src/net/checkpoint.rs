//! Saving and restoring trained networks. JSON with shortest-roundtrip
//! float formatting, so a load reproduces every parameter bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Hyperparameters, Network};

/// Serialized training artifact: the settings it was trained with and the
/// parameters of the best validation epoch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub hyperparameters: Hyperparameters,
    pub network: Network,
}

impl Checkpoint {
    pub const VERSION: u32 = 1;

    pub fn new(hyperparameters: Hyperparameters, network: Network) -> Self {
        Checkpoint { version: Self::VERSION, hyperparameters, network }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)
            .map_err(|e| Error::Numeric(format!("cannot serialize checkpoint: {e}")))?;
        fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path)?;
        let checkpoint: Checkpoint = serde_json::from_str(&raw).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: e.line(),
            msg: e.to_string(),
        })?;
        if checkpoint.version != Self::VERSION {
            return Err(Error::Validation(format!(
                "checkpoint version {} is not supported (expected {})",
                checkpoint.version,
                Self::VERSION
            )));
        }
        Ok(checkpoint)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let net = Network::new(5, 3, 6, 2, 4e-4, &mut rng).unwrap();
        let hp = Hyperparameters {
            cell_dim: 6,
            minibatch: 2,
            epoch_size: 2,
            max_epochs: 4,
            layers: 2,
            noise_std: 2e-4,
            init_std: 4e-4,
            l2_weight: 1e-4,
        };
        Checkpoint::new(hp, net)
    }

    #[test]
    fn roundtrip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let original = sample();
        original.save(&path).unwrap();
        let restored = Checkpoint::load(&path).unwrap();
        assert_eq!(restored.hyperparameters, original.hyperparameters);
        assert_eq!(restored.network, original.network);
        // Saving the restored copy reproduces the file byte for byte.
        let again = dir.path().join("model2.json");
        restored.save(&again).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let mut stale = sample();
        stale.version = 99;
        let json = serde_json::to_string(&stale).unwrap();
        fs::write(&path, json).unwrap();
        let err = Checkpoint::load(&path).unwrap_err();
        assert!(err.to_string().contains("version"));
    }

    #[test]
    fn corrupt_files_report_the_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        fs::write(&path, "{\"version\": 1,").unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }
}
