//! Centralized numerical tolerances. `SPANFORGE_TOL` may point to a JSON file overriding any field.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub unitarity: f64,
    pub pinv_rel_cutoff: f64,
    pub feasibility_rel: f64,
    pub epsilon_floor: f64,
    pub witness_check: f64,
    pub bisection_slack: f64,
    pub clean_check: f64,
    /// Upper bound on the phase-register dimension times the state dimension in circuit mode.
    pub circuit_mode_budget: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            unitarity: 1e-10,
            pinv_rel_cutoff: 1e-10,
            feasibility_rel: 1e-6,
            epsilon_floor: 1e-4,
            witness_check: 1e-8,
            bisection_slack: 1e-6,
            clean_check: 1e-9,
            circuit_mode_budget: 1 << 26,
        }
    }
}

pub const ENV_VAR: &str = "SPANFORGE_TOL";

impl Tolerances {
    pub fn from_env() -> Result<Self, crate::Error> {
        match std::env::var(ENV_VAR) {
            Ok(path) if !path.is_empty() => {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| crate::Error::Io(format!("{path}: {e}")))?;
                serde_json::from_str(&text).map_err(|e| crate::Error::Parse(format!("{path}: {e}")))
            }
            _ => Ok(Self::default()),
        }
    }

    /// Hex digest of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("serializable");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = Tolerances::default();
        assert_eq!(a.hash(), Tolerances::default().hash());
        let mut b = a.clone();
        b.unitarity = 1e-9;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn partial_override_keeps_defaults() {
        let t: Tolerances = serde_json::from_str(r#"{"epsilon_floor": 0.001}"#).unwrap();
        assert_eq!(t.epsilon_floor, 0.001);
        assert_eq!(t.unitarity, 1e-10);
    }
}
