use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::NnError;

pub const CHECKPOINT_FORMAT: &str = "mecsim-checkpoint-v1";

/// Flat parameter checkpoint with a topology header. `params` follows the
/// network's documented flattening order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub policy: String,
    pub topology: serde_json::Value,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn new(policy: &str, topology: serde_json::Value, params: Vec<f64>) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            policy: policy.to_string(),
            topology,
            params,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        let json = serde_json::to_string(self)
            .map_err(|e| NnError::Checkpoint(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        let text = std::fs::read_to_string(path)?;
        let ck: Checkpoint =
            serde_json::from_str(&text).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(NnError::Checkpoint(format!(
                "unsupported checkpoint format {}",
                ck.format
            )));
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trips() {
        let dir = std::env::temp_dir().join("mecsim-ck-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ck.json");
        let ck = Checkpoint::new(
            "dqn",
            serde_json::json!({"in": 4, "out": 2}),
            vec![0.25, -1.5, 3.0],
        );
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.policy, "dqn");
        assert_eq!(back.params, ck.params);
        std::fs::remove_file(&path).unwrap();
    }
}
