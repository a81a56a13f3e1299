use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{OptimizerState, TrainConfig};
use crate::error::{DialError, Result};
use crate::model::{CriticParams, EmbedderParams, ModelConfig, ModelParams, RewardHeadParams};

/// Position of a ChaCha stream: enough to resume it exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    /// Word position, as a decimal string (it is 68 bits wide).
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|_| DialError::InvalidArgument(format!("bad rng word_pos {:?}", self.word_pos)))?;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

/// Serialised trainer state. Floats round-trip bit-exactly through JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub theta: EmbedderParams,
    pub phi: RewardHeadParams,
    pub psi: CriticParams,
    pub opt_main: OptimizerState,
    pub opt_critic: OptimizerState,
    pub rng_state: Vec<RngState>,
    pub step: u64,
    pub epoch: u64,
}

impl Checkpoint {
    pub fn params(&self) -> ModelParams {
        ModelParams {
            theta: self.theta.clone(),
            phi: self.phi.clone(),
            psi: self.psi.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ck: Self = serde_json::from_str(s)?;
        ck.params().validate()?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
