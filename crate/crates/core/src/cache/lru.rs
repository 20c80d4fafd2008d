use std::collections::{BTreeMap, HashMap};

use super::Key;

#[derive(Debug, Clone, PartialEq)]
pub struct Slot {
    pub value: Vec<u8>,
    pub version: u64,
    pub inserted_at: f64,
    pub last_access: f64,
    seq: u64,
    expiry_seq: u64,
}

/// Capacity-bounded LRU map whose entries expire `ttl` seconds after they
/// were written. Expiry is checked lazily on access and when room is needed.
#[derive(Debug, Clone)]
pub struct LruTier {
    capacity: usize,
    ttl: f64,
    map: HashMap<Key, Slot>,
    /// Access sequence → key, oldest first.
    recency: BTreeMap<u64, Key>,
    /// (write time bits, write sequence) → key, oldest first.
    expiry: BTreeMap<(u64, u64), Key>,
    clock: u64,
    pub evictions: u64,
    pub expired: u64,
}

impl LruTier {
    pub fn new(capacity: usize, ttl: f64) -> Self {
        Self {
            capacity,
            ttl,
            map: HashMap::with_capacity(capacity),
            recency: BTreeMap::new(),
            expiry: BTreeMap::new(),
            clock: 0,
            evictions: 0,
            expired: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn ttl(&self) -> f64 {
        self.ttl
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    fn is_live(&self, slot: &Slot, now: f64) -> bool {
        now - slot.inserted_at <= self.ttl
    }

    /// Entry without touching recency or expiry bookkeeping.
    pub fn peek(&self, key: &[u8]) -> Option<&Slot> {
        self.map.get(key)
    }

    /// Live entry for `key`, refreshing its recency. An expired entry is
    /// dropped and reported as absent.
    pub fn get(&mut self, key: &[u8], now: f64) -> Option<&Slot> {
        let live = match self.map.get(key) {
            None => return None,
            Some(s) => self.is_live(s, now),
        };
        if !live {
            self.remove(key);
            self.expired += 1;
            return None;
        }
        let seq = self.tick();
        let slot = self.map.get_mut(key).expect("checked above");
        let k = self.recency.remove(&slot.seq).expect("recency indexed");
        slot.seq = seq;
        slot.last_access = slot.last_access.max(now);
        self.recency.insert(seq, k);
        self.map.get(key)
    }

    /// Writes `key`, resetting its TTL clock. Makes room first when full.
    pub fn insert(&mut self, key: &[u8], value: &[u8], version: u64, now: f64) {
        if self.capacity == 0 {
            return;
        }
        if self.map.contains_key(key) {
            self.remove(key);
        } else if self.map.len() >= self.capacity {
            self.purge_expired(now);
            if self.map.len() >= self.capacity {
                self.evict_lru(now);
            }
        }
        let seq = self.tick();
        let expiry_seq = seq;
        self.recency.insert(seq, key.to_vec());
        self.expiry.insert((now.to_bits(), expiry_seq), key.to_vec());
        self.map.insert(
            key.to_vec(),
            Slot { value: value.to_vec(), version, inserted_at: now, last_access: now, seq, expiry_seq },
        );
    }

    pub fn remove(&mut self, key: &[u8]) -> Option<Slot> {
        let slot = self.map.remove(key)?;
        self.recency.remove(&slot.seq);
        self.expiry.remove(&(slot.inserted_at.to_bits(), slot.expiry_seq));
        Some(slot)
    }

    /// Drops every entry whose age exceeds the TTL; returns how many.
    pub fn purge_expired(&mut self, now: f64) -> usize {
        let mut n = 0;
        while let Some((&(bits, _), _)) = self.expiry.first_key_value() {
            if now - f64::from_bits(bits) <= self.ttl {
                break;
            }
            let (_, key) = self.expiry.pop_first().expect("non-empty");
            let slot = self.map.remove(&key).expect("expiry indexed");
            self.recency.remove(&slot.seq);
            n += 1;
        }
        self.expired += n as u64;
        n
    }

    /// Purges expired entries, then removes the least recently accessed
    /// remaining entry.
    pub fn evict_lru(&mut self, now: f64) -> Option<Key> {
        self.purge_expired(now);
        let (_, key) = self.recency.pop_first()?;
        let slot = self.map.remove(&key).expect("recency indexed");
        self.expiry.remove(&(slot.inserted_at.to_bits(), slot.expiry_seq));
        self.evictions += 1;
        Some(key)
    }

    /// Keys from least to most recently accessed.
    pub fn keys_by_recency(&self) -> impl Iterator<Item = &Key> {
        self.recency.values()
    }
}
