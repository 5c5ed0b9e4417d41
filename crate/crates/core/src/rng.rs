//! Counter-based random streams.
//!
//! A stream is identified by a 64-bit key derived from
//! `(seed, replica, level, node)`; draw `k` of that stream is a pure function
//! of `(key, k)`. Any traversal order of a replica's tree therefore sees the
//! same disorder at the same node.

use rand::RngCore;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline(always)]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline(always)]
fn absorb(key: u64, word: u64) -> u64 {
    mix64(key ^ mix64(word.wrapping_add(GOLDEN)))
}

/// Key of the stream attached to one node of one replica.
#[inline]
pub fn stream_key(seed: u64, replica: u64, level: u32, node: u64) -> u64 {
    node_key(replica_key(seed, replica), level, node)
}

/// Key shared by every stream of one replica; combine with [`node_key`].
#[inline]
pub fn replica_key(seed: u64, replica: u64) -> u64 {
    absorb(absorb(mix64(seed), replica), 0x5eed)
}

#[inline(always)]
pub fn node_key(replica_key: u64, level: u32, node: u64) -> u64 {
    absorb(absorb(replica_key, level as u64), node)
}

#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(key: u64) -> Self {
        Self { key, counter: 0 }
    }

    pub fn for_node(seed: u64, replica: u64, level: u32, node: u64) -> Self {
        Self::new(stream_key(seed, replica, level, node))
    }
}

impl RngCore for CounterRng {
    #[inline(always)]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline(always)]
    fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(8) {
            let v = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&v[..chunk.len()]);
        }
    }
}
