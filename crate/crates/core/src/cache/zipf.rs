use rand::Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use super::{CacheConfig, CacheError, CacheHierarchy, CacheStats};
use crate::rng::{rng_for, stream};

/// Read-through workload: Zipf-ranked keys, a miss in every tier loads the
/// key from the backing source and writes it through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZipfWorkload {
    pub keys: u64,
    pub exponent: f64,
    /// Reads per second of simulated time.
    pub reads_per_second: f64,
}

impl Default for ZipfWorkload {
    fn default() -> Self {
        Self { keys: 100_000, exponent: 1.0, reads_per_second: 1_000.0 }
    }
}

pub fn zipf_key(rank: u64) -> [u8; 8] {
    rank.to_le_bytes()
}

/// Draws ranks in `1..=keys`.
pub struct ZipfKeys {
    dist: Zipf<f64>,
}

impl ZipfKeys {
    pub fn new(keys: u64, exponent: f64) -> Result<Self, CacheError> {
        let dist = Zipf::new(keys as f64, exponent).map_err(|e| CacheError::InvalidConfig(format!("zipf: {e}")))?;
        Ok(Self { dist })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        self.dist.sample(rng) as u64
    }
}

/// Cache plus its read workload, advanced in simulated seconds.
pub struct CacheDriver {
    cache: CacheHierarchy,
    keys: ZipfKeys,
    workload: ZipfWorkload,
    seed: u64,
    clock: f64,
    step: u64,
}

impl CacheDriver {
    pub fn new(config: CacheConfig, workload: ZipfWorkload, seed: u64) -> Result<Self, CacheError> {
        if !(workload.reads_per_second > 0.0) {
            return Err(CacheError::InvalidConfig("reads_per_second must be > 0".into()));
        }
        Ok(Self {
            cache: CacheHierarchy::new(config)?,
            keys: ZipfKeys::new(workload.keys, workload.exponent)?,
            workload,
            seed,
            clock: 0.0,
            step: 0,
        })
    }

    pub fn cache(&self) -> &CacheHierarchy {
        &self.cache
    }

    /// Serves `seconds` worth of reads and returns the memory hit rate over
    /// them (0 if no read happened).
    pub fn advance(&mut self, seconds: f64) -> Result<f64, CacheError> {
        let n = (seconds * self.workload.reads_per_second).round() as u64;
        let mut rng = rng_for(self.seed, stream::CACHE, self.step);
        self.step += 1;
        let dt = if n > 0 { seconds / n as f64 } else { 0.0 };
        let mut hits = 0u64;
        for i in 0..n {
            let now = self.clock + i as f64 * dt;
            let key = zipf_key(self.keys.sample(&mut rng));
            match self.cache.get(&key, now, None) {
                Some(h) if h.tier != super::Tier::L3 => hits += 1,
                Some(_) => {}
                None => {
                    self.cache.put(&key, &key, now)?;
                }
            }
        }
        self.clock += seconds;
        Ok(if n > 0 { hits as f64 / n as f64 } else { 0.0 })
    }

    pub fn stats(&self) -> CacheStats {
        self.cache.stats()
    }
}
