//! Label providers: the simulated human backed by ground truth, and the trait
//! any live labeling channel implements.

use std::collections::{HashMap, HashSet};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::PairId;
use crate::error::{Error, Result};

/// Anything that can answer "are these pairs equivalent?".
pub trait LabelProvider {
    fn label(&mut self, pair_ids: &[PairId]) -> Result<Vec<bool>>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "millis")]
pub enum Latency {
    #[default]
    None,
    Fixed(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    #[serde(default)]
    pub flip_probability: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub latency: Latency,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            flip_probability: 0.0,
            seed: 0,
            latency: Latency::None,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.flip_probability) {
            return Err(Error::Config(format!(
                "flip probability must lie in [0,1), got {}",
                self.flip_probability
            )));
        }
        Ok(())
    }
}

/// Answers from ground truth, flipping each answer independently with the
/// configured probability.
#[derive(Debug, Clone)]
pub struct SimulatedOracle {
    truth: HashMap<PairId, bool>,
    answered: HashSet<PairId>,
    config: OracleConfig,
    rng: ChaCha8Rng,
    flipped: usize,
}

impl SimulatedOracle {
    pub fn new(truth: impl IntoIterator<Item = (PairId, bool)>, config: OracleConfig) -> Result<Self> {
        config.validate()?;
        Ok(SimulatedOracle {
            truth: truth.into_iter().collect(),
            answered: HashSet::new(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            flipped: 0,
        })
    }

    pub fn flipped(&self) -> usize {
        self.flipped
    }

    pub fn answered(&self) -> usize {
        self.answered.len()
    }
}

impl LabelProvider for SimulatedOracle {
    fn label(&mut self, pair_ids: &[PairId]) -> Result<Vec<bool>> {
        let mut seen = HashSet::with_capacity(pair_ids.len());
        for id in pair_ids {
            if !self.truth.contains_key(id) {
                return Err(Error::UnknownPair(*id));
            }
            if self.answered.contains(id) || !seen.insert(*id) {
                return Err(Error::AlreadyLabeled(*id));
            }
        }
        if let Latency::Fixed(ms) = self.config.latency {
            std::thread::sleep(Duration::from_millis(ms));
        }
        let p = self.config.flip_probability;
        let mut out = Vec::with_capacity(pair_ids.len());
        for id in pair_ids {
            self.answered.insert(*id);
            let mut label = self.truth[id];
            if p > 0.0 && self.rng.random::<f64>() < p {
                label = !label;
                self.flipped += 1;
            }
            out.push(label);
        }
        Ok(out)
    }
}
