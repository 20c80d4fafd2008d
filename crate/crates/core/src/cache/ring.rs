use std::collections::BTreeSet;

use xxhash_rust::xxh3::xxh3_64;

use super::CacheError;

/// Stable 64-bit key hash.
pub fn key_hash(key: &[u8]) -> u64 {
    xxh3_64(key)
}

fn point_hash(shard: u32, vnode: u32) -> u64 {
    let mut b = [0u8; 8];
    b[..4].copy_from_slice(&shard.to_le_bytes());
    b[4..].copy_from_slice(&vnode.to_le_bytes());
    xxh3_64(&b)
}

/// Consistent-hash ring with `virtual_nodes` points per shard.
#[derive(Debug, Clone)]
pub struct HashRing {
    virtual_nodes: u32,
    /// Sorted by (hash, shard).
    points: Vec<(u64, u32)>,
    shards: BTreeSet<u32>,
}

impl HashRing {
    pub fn new(virtual_nodes: u32) -> Self {
        Self { virtual_nodes: virtual_nodes.max(1), points: Vec::new(), shards: BTreeSet::new() }
    }

    pub fn with_shards(shards: u32, virtual_nodes: u32) -> Self {
        let mut r = Self::new(virtual_nodes);
        for s in 0..shards {
            r.add(s);
        }
        r
    }

    pub fn shards(&self) -> impl Iterator<Item = u32> + '_ {
        self.shards.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.shards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shards.is_empty()
    }

    pub fn points(&self) -> &[(u64, u32)] {
        &self.points
    }

    pub fn add(&mut self, shard: u32) -> bool {
        if !self.shards.insert(shard) {
            return false;
        }
        self.points.extend((0..self.virtual_nodes).map(|v| (point_hash(shard, v), shard)));
        self.points.sort_unstable();
        true
    }

    pub fn remove(&mut self, shard: u32) -> bool {
        if !self.shards.remove(&shard) {
            return false;
        }
        self.points.retain(|&(_, s)| s != shard);
        true
    }

    /// First ring point clockwise from the key's hash.
    pub fn assign_hash(&self, h: u64) -> Result<u32, CacheError> {
        if self.points.is_empty() {
            return Err(CacheError::EmptyRing);
        }
        let i = self.points.partition_point(|&(p, _)| p < h);
        Ok(self.points[if i == self.points.len() { 0 } else { i }].1)
    }

    pub fn assign(&self, key: &[u8]) -> Result<u32, CacheError> {
        self.assign_hash(key_hash(key))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_shard_takes_everything() {
        let r = HashRing::with_shards(1, 16);
        for i in 0..1000u32 {
            assert_eq!(r.assign(&i.to_le_bytes()).unwrap(), 0);
        }
    }

    #[test]
    fn empty_ring_is_an_error() {
        assert!(matches!(HashRing::new(8).assign(b"k"), Err(CacheError::EmptyRing)));
    }

    #[test]
    fn removal_only_moves_keys_of_removed_shard() {
        let mut r = HashRing::with_shards(5, 64);
        let keys: Vec<[u8; 4]> = (0..5000u32).map(|i| i.to_le_bytes()).collect();
        let before: Vec<u32> = keys.iter().map(|k| r.assign(k).unwrap()).collect();
        r.remove(2);
        for (k, &b) in keys.iter().zip(&before) {
            if b != 2 {
                assert_eq!(r.assign(k).unwrap(), b);
            }
        }
    }
}
