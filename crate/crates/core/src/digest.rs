//! Ordered maps that carry a running fingerprint of their contents.
//!
//! Each entry contributes the first 128 bits of the SHA-256 of its structural
//! encoding; the map's digest is the wrapping sum over entries. Inserts and
//! removals adjust the sum, so fingerprinting a large state after a small
//! change costs only the change.

use std::borrow::Borrow;
use std::collections::BTreeMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Collects the bytes the derived structural `Hash` writes. Integers are
/// little-endian and lengths `u64`, so digests agree across platforms.
struct ByteSink(Vec<u8>);

impl Hasher for ByteSink {
    fn write(&mut self, bytes: &[u8]) {
        self.0.extend_from_slice(bytes);
    }
    fn write_u8(&mut self, n: u8) {
        self.0.push(n);
    }
    fn write_u16(&mut self, n: u16) {
        self.0.extend_from_slice(&n.to_le_bytes());
    }
    fn write_u32(&mut self, n: u32) {
        self.0.extend_from_slice(&n.to_le_bytes());
    }
    fn write_u64(&mut self, n: u64) {
        self.0.extend_from_slice(&n.to_le_bytes());
    }
    fn write_u128(&mut self, n: u128) {
        self.0.extend_from_slice(&n.to_le_bytes());
    }
    fn write_usize(&mut self, n: usize) {
        self.write_u64(n as u64);
    }
    fn write_isize(&mut self, n: isize) {
        self.write_u64(n as u64);
    }
    fn finish(&self) -> u64 {
        let d = Sha256::digest(&self.0);
        u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
    }
}

/// SHA-256 of the structural encoding of `value`.
pub fn sha256_of<T: Hash + ?Sized>(value: &T) -> [u8; 32] {
    let mut sink = ByteSink(Vec::with_capacity(256));
    value.hash(&mut sink);
    Sha256::digest(&sink.0).into()
}

/// First 128 bits of [`sha256_of`].
pub fn digest128<T: Hash + ?Sized>(value: &T) -> u128 {
    let d = sha256_of(value);
    u128::from_le_bytes(d[..16].try_into().expect("digest is 32 bytes"))
}

/// Digest one map entry contributes.
pub fn entry_digest<K: Hash, V: Hash>(key: &K, value: &V) -> u128 {
    digest128(&(key, value))
}

/// A `BTreeMap` with a maintained content digest. Reads go through `Deref`;
/// writes must use the methods here so the digest stays exact.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct DigestMap<K: Ord, V> {
    map: BTreeMap<K, V>,
    sum: u128,
}

impl<K: Ord, V> Default for DigestMap<K, V> {
    fn default() -> Self {
        DigestMap { map: BTreeMap::new(), sum: 0 }
    }
}

impl<K: Ord + Hash, V: Hash> DigestMap<K, V> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn digest(&self) -> u128 {
        self.sum
    }

    /// The digest computed from scratch; equal to [`Self::digest`].
    pub fn recomputed_digest(&self) -> u128 {
        self.map.iter().fold(0u128, |acc, (k, v)| acc.wrapping_add(entry_digest(k, v)))
    }

    pub fn insert(&mut self, key: K, value: V) -> Option<V> {
        self.sum = self.sum.wrapping_add(entry_digest(&key, &value));
        let old = self.map.remove(&key);
        if let Some(v) = &old {
            self.sum = self.sum.wrapping_sub(entry_digest(&key, v));
        }
        self.map.insert(key, value);
        old
    }

    pub fn remove<Q>(&mut self, key: &Q) -> Option<V>
    where
        K: Borrow<Q>,
        Q: Ord + ?Sized,
    {
        let (k, v) = self.map.remove_entry(key)?;
        self.sum = self.sum.wrapping_sub(entry_digest(&k, &v));
        Some(v)
    }

    pub fn retain(&mut self, mut keep: impl FnMut(&K, &V) -> bool) {
        let mut sum = self.sum;
        self.map.retain(|k, v| {
            let kept = keep(k, v);
            if !kept {
                sum = sum.wrapping_sub(entry_digest(k, v));
            }
            kept
        });
        self.sum = sum;
    }

    pub fn clear(&mut self) {
        self.map.clear();
        self.sum = 0;
    }

    pub fn into_inner(self) -> BTreeMap<K, V> {
        self.map
    }
}

impl<K: Ord, V> Deref for DigestMap<K, V> {
    type Target = BTreeMap<K, V>;
    fn deref(&self) -> &BTreeMap<K, V> {
        &self.map
    }
}

/// Equal maps have equal digests, so hashing the digest alone is consistent.
impl<K: Ord, V> Hash for DigestMap<K, V> {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.sum.hash(state);
    }
}

impl<K: Ord + fmt::Debug, V: fmt::Debug> fmt::Debug for DigestMap<K, V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.map.fmt(f)
    }
}

impl<K: Ord + Hash, V: Hash> FromIterator<(K, V)> for DigestMap<K, V> {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        let mut m = DigestMap::new();
        m.extend(iter);
        m
    }
}

impl<K: Ord + Hash, V: Hash> Extend<(K, V)> for DigestMap<K, V> {
    fn extend<I: IntoIterator<Item = (K, V)>>(&mut self, iter: I) {
        for (k, v) in iter {
            self.insert(k, v);
        }
    }
}

impl<K: Ord + Hash, V: Hash> From<BTreeMap<K, V>> for DigestMap<K, V> {
    fn from(map: BTreeMap<K, V>) -> Self {
        let mut m = DigestMap { map, sum: 0 };
        m.sum = m.recomputed_digest();
        m
    }
}

impl<K: Ord + Hash, V: Hash, const N: usize> From<[(K, V); N]> for DigestMap<K, V> {
    fn from(entries: [(K, V); N]) -> Self {
        entries.into_iter().collect()
    }
}

impl<'a, K: Ord, V> IntoIterator for &'a DigestMap<K, V> {
    type Item = (&'a K, &'a V);
    type IntoIter = std::collections::btree_map::Iter<'a, K, V>;
    fn into_iter(self) -> Self::IntoIter {
        self.map.iter()
    }
}

impl<K: Ord, V> IntoIterator for DigestMap<K, V> {
    type Item = (K, V);
    type IntoIter = std::collections::btree_map::IntoIter<K, V>;
    fn into_iter(self) -> Self::IntoIter {
        self.map.into_iter()
    }
}

impl<K: Ord + Serialize, V: Serialize> Serialize for DigestMap<K, V> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.map.serialize(s)
    }
}

impl<'de, K, V> Deserialize<'de> for DigestMap<K, V>
where
    K: Ord + Hash + Deserialize<'de>,
    V: Hash + Deserialize<'de>,
{
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        BTreeMap::deserialize(d).map(DigestMap::from)
    }
}
