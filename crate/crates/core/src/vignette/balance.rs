use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SymptomCategory;

pub const DEFAULT_MIN_PER_CATEGORY: usize = 44;
pub const DEFAULT_MAX_PER_CATEGORY: usize = 68;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceConfig {
    pub min_n: usize,
    pub max_n: usize,
    pub seed: u64,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        Self {
            min_n: DEFAULT_MIN_PER_CATEGORY,
            max_n: DEFAULT_MAX_PER_CATEGORY,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub min_n: usize,
    pub max_n: usize,
    pub available: BTreeMap<SymptomCategory, usize>,
    pub counts: BTreeMap<SymptomCategory, usize>,
    pub total: usize,
    pub warnings: Vec<String>,
    pub filters_applied: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalancedDataset<T> {
    pub cases: BTreeMap<SymptomCategory, Vec<T>>,
    pub manifest: DatasetManifest,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BalanceError {
    #[error("no categories to sample from")]
    EmptyDataset,
    #[error("Psychological cases must be filtered out before balancing")]
    PsychologicalPresent,
    #[error("min_n ({min_n}) exceeds max_n ({max_n})")]
    InvalidBounds { min_n: usize, max_n: usize },
}

fn category_rng(seed: u64, category: SymptomCategory) -> ChaCha8Rng {
    let salt = (category as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    ChaCha8Rng::seed_from_u64(seed ^ salt)
}

/// Draws up to `max_n` cases per category uniformly without replacement.
/// Categories with fewer than `min_n` cases are kept whole and flagged.
/// Each category has its own seeded stream, so adding or removing one
/// category never changes another's sample. Selected cases keep their
/// input order.
pub fn balance_sample<T: Clone>(
    cases: &BTreeMap<SymptomCategory, Vec<T>>,
    config: BalanceConfig,
) -> Result<BalancedDataset<T>, BalanceError> {
    if config.min_n > config.max_n {
        return Err(BalanceError::InvalidBounds {
            min_n: config.min_n,
            max_n: config.max_n,
        });
    }
    if cases.is_empty() {
        return Err(BalanceError::EmptyDataset);
    }
    if cases.contains_key(&SymptomCategory::Psychological) {
        return Err(BalanceError::PsychologicalPresent);
    }

    let mut sampled = BTreeMap::new();
    let mut available = BTreeMap::new();
    let mut counts = BTreeMap::new();
    let mut warnings = Vec::new();
    for (&category, pool) in cases {
        available.insert(category, pool.len());
        let chosen: Vec<T> = if pool.len() < config.min_n {
            warnings.push(format!(
                "{category}: only {} case(s) available, below minimum {}; included in full",
                pool.len(),
                config.min_n
            ));
            pool.clone()
        } else if pool.len() <= config.max_n {
            pool.clone()
        } else {
            let mut rng = category_rng(config.seed, category);
            let mut idx = rand::seq::index::sample(&mut rng, pool.len(), config.max_n).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| pool[i].clone()).collect()
        };
        counts.insert(category, chosen.len());
        sampled.insert(category, chosen);
    }
    let total = counts.values().sum();
    Ok(BalancedDataset {
        cases: sampled,
        manifest: DatasetManifest {
            seed: config.seed,
            min_n: config.min_n,
            max_n: config.max_n,
            available,
            counts,
            total,
            warnings,
            filters_applied: Vec::new(),
        },
    })
}
