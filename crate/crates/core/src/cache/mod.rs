//! Three-tier cache: a small LRU tier, a consistent-hash sharded LRU tier,
//! and an authoritative versioned store. Entries in the two memory tiers
//! expire a fixed time after they were written.

mod lru;
mod ring;
mod store;
mod trace;
mod zipf;

pub use lru::{LruTier, Slot};
pub use ring::{key_hash, HashRing};
pub use store::{read_log, PersistentStore, Version};
pub use trace::{read_trace_csv, replay, TraceOp, TraceRecord};
pub use zipf::{zipf_key, CacheDriver, ZipfKeys, ZipfWorkload};

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Key = Vec<u8>;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("invalid cache config: {0}")]
    InvalidConfig(String),
    #[error("hash ring has no shards")]
    EmptyRing,
    #[error("truncated or corrupt log record")]
    CorruptLog,
    #[error("bad trace record: {0}")]
    BadTrace(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheConfig {
    pub l1_capacity: usize,
    pub l1_ttl_s: f64,
    /// Total L2 entries, split evenly over the shards.
    pub l2_capacity: usize,
    pub l2_ttl_s: f64,
    pub l2_shards: u32,
    pub l2_virtual_nodes: u32,
    /// Versions kept per key in the store.
    pub l3_retention: usize,
}

impl Default for CacheConfig {
    fn default() -> Self {
        Self {
            l1_capacity: 1_000,
            l1_ttl_s: 10.0,
            l2_capacity: 10_000,
            l2_ttl_s: 60.0,
            l2_shards: 4,
            l2_virtual_nodes: 128,
            l3_retention: 8,
        }
    }
}

impl CacheConfig {
    pub fn validate(&self) -> Result<(), CacheError> {
        let bad = |m: &str| Err(CacheError::InvalidConfig(m.into()));
        if self.l1_capacity == 0 || self.l2_capacity == 0 {
            return bad("capacities must be > 0");
        }
        if !(self.l1_ttl_s > 0.0 && self.l2_ttl_s > 0.0) {
            return bad("TTLs must be > 0");
        }
        if self.l2_shards == 0 || self.l2_capacity < self.l2_shards as usize {
            return bad("need at least one shard and one L2 entry per shard");
        }
        if self.l2_virtual_nodes == 0 || self.l3_retention == 0 {
            return bad("virtual nodes and retention must be > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tier {
    L1,
    L2,
    L3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheHit {
    pub value: Vec<u8>,
    pub version: u64,
    pub tier: Tier,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TierStats {
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
    pub expired: u64,
}

impl TierStats {
    pub fn lookups(&self) -> u64 {
        self.hits + self.misses
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CacheStats {
    pub l1: TierStats,
    pub l2: TierStats,
    pub l3: TierStats,
    pub lookups: u64,
    /// Share of lookups served from L1 or L2; 0 when `rate_defined` is false.
    pub memory_hit_rate: f64,
    pub rate_defined: bool,
}

pub struct CacheHierarchy {
    config: CacheConfig,
    l1: LruTier,
    ring: HashRing,
    shards: Vec<LruTier>,
    l3: PersistentStore,
    stats: [TierStats; 3],
    lookups: u64,
}

impl CacheHierarchy {
    pub fn new(config: CacheConfig) -> Result<Self, CacheError> {
        Self::build(config, None)
    }

    /// Same as `new`, with every store write appended to the log at `path`.
    pub fn with_log(config: CacheConfig, path: &Path) -> Result<Self, CacheError> {
        Self::build(config, Some(path))
    }

    fn build(config: CacheConfig, log: Option<&Path>) -> Result<Self, CacheError> {
        config.validate()?;
        let n = config.l2_shards as usize;
        let shards = (0..n)
            .map(|i| {
                let cap = config.l2_capacity / n + usize::from(i < config.l2_capacity % n);
                LruTier::new(cap, config.l2_ttl_s)
            })
            .collect();
        let l3 = match log {
            Some(p) => PersistentStore::with_log(config.l3_retention, p)?,
            None => PersistentStore::new(config.l3_retention),
        };
        Ok(Self {
            l1: LruTier::new(config.l1_capacity, config.l1_ttl_s),
            ring: HashRing::with_shards(config.l2_shards, config.l2_virtual_nodes),
            shards,
            l3,
            stats: [TierStats::default(); 3],
            lookups: 0,
            config,
        })
    }

    pub fn config(&self) -> &CacheConfig {
        &self.config
    }

    pub fn ring(&self) -> &HashRing {
        &self.ring
    }

    pub fn l1(&self) -> &LruTier {
        &self.l1
    }

    pub fn l2_shard(&self, shard: u32) -> &LruTier {
        &self.shards[shard as usize]
    }

    pub fn l2_len(&self) -> usize {
        self.shards.iter().map(LruTier::len).sum()
    }

    pub fn store(&self) -> &PersistentStore {
        &self.l3
    }

    fn shard_of(&self, key: &[u8]) -> usize {
        self.ring.assign(key).expect("ring built with at least one shard") as usize
    }

    /// Writes through to the store, then installs the new version in L2 and L1.
    pub fn put(&mut self, key: &[u8], value: &[u8], now: f64) -> Result<u64, CacheError> {
        let version = self.l3.put(key, value, now)?;
        let s = self.shard_of(key);
        self.shards[s].insert(key, value, version, now);
        self.l1.insert(key, value, version, now);
        Ok(version)
    }

    /// Loads a value into the store only, leaving the memory tiers cold.
    pub fn preload(&mut self, key: &[u8], value: &[u8], now: f64) -> Result<u64, CacheError> {
        self.l3.put(key, value, now)
    }

    /// Looks up L1, then L2, then the store. Lower-tier hits are promoted
    /// into every tier above. With `snapshot`, returns the newest version
    /// not newer than it.
    pub fn get(&mut self, key: &[u8], now: f64, snapshot: Option<u64>) -> Option<CacheHit> {
        self.lookups += 1;
        let fits = |v: u64| snapshot.is_none_or(|s| v <= s);

        if let Some(slot) = self.l1.get(key, now).filter(|s| fits(s.version)) {
            self.stats[0].hits += 1;
            return Some(CacheHit { value: slot.value.clone(), version: slot.version, tier: Tier::L1 });
        }
        self.stats[0].misses += 1;

        let s = self.shard_of(key);
        if let Some(slot) = self.shards[s].get(key, now).filter(|s| fits(s.version)) {
            self.stats[1].hits += 1;
            let hit = CacheHit { value: slot.value.clone(), version: slot.version, tier: Tier::L2 };
            self.l1.insert(key, &hit.value, hit.version, now);
            return Some(hit);
        }
        self.stats[1].misses += 1;

        let found = match snapshot {
            None => self.l3.latest(key),
            Some(v) => self.l3.at_snapshot(key, v),
        };
        let Some(found) = found else {
            self.stats[2].misses += 1;
            return None;
        };
        self.stats[2].hits += 1;
        let hit = CacheHit { value: found.value.clone(), version: found.version, tier: Tier::L3 };
        // Only the latest version lives in the memory tiers.
        if hit.version == self.l3.latest_version(key) {
            self.shards[s].insert(key, &hit.value, hit.version, now);
            self.l1.insert(key, &hit.value, hit.version, now);
        }
        Some(hit)
    }

    /// Evicts from L1 or from the given L2 shard.
    pub fn evict_lru(&mut self, tier: Tier, shard: u32, now: f64) -> Option<Key> {
        match tier {
            Tier::L1 => self.l1.evict_lru(now),
            Tier::L2 => self.shards.get_mut(shard as usize)?.evict_lru(now),
            Tier::L3 => None,
        }
    }

    /// Drops expired entries from both memory tiers.
    pub fn purge_expired(&mut self, now: f64) -> usize {
        self.l1.purge_expired(now) + self.shards.iter_mut().map(|s| s.purge_expired(now)).sum::<usize>()
    }

    pub fn flush(&mut self) -> Result<(), CacheError> {
        self.l3.flush()
    }

    pub fn stats(&self) -> CacheStats {
        let mut l1 = self.stats[0];
        l1.evictions = self.l1.evictions;
        l1.expired = self.l1.expired;
        let mut l2 = self.stats[1];
        l2.evictions = self.shards.iter().map(|s| s.evictions).sum();
        l2.expired = self.shards.iter().map(|s| s.expired).sum();
        let defined = self.lookups > 0;
        let rate = if defined { (l1.hits + l2.hits) as f64 / self.lookups as f64 } else { 0.0 };
        CacheStats { l1, l2, l3: self.stats[2], lookups: self.lookups, memory_hit_rate: rate, rate_defined: defined }
    }

    pub fn reset_stats(&mut self) {
        self.stats = [TierStats::default(); 3];
        self.lookups = 0;
    }
}
