//! Actor placement: a compare-and-swap store shared by all components and a
//! bounded per-component read cache.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::num::NonZeroUsize;

use lru::LruCache;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::PlacementError;
use crate::fabric::{Component, ComponentId};
use crate::semantics::ActorRef;

pub const DEFAULT_CACHE_CAPACITY: usize = 1024;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placed {
    pub component: ComponentId,
    pub version: u64,
}

/// Durable actor-to-component map. Every update is a compare-and-swap.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementStore {
    entries: BTreeMap<ActorRef, Placed>,
    reads: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CasOutcome {
    /// The value recorded after the operation.
    pub won: ComponentId,
    pub installed: bool,
    pub version: u64,
}

impl PlacementStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Counted read, as a round trip to the store.
    pub fn get(&mut self, actor: &ActorRef) -> Option<ComponentId> {
        self.reads += 1;
        self.entries.get(actor).map(|p| p.component.clone())
    }

    /// Uncounted read for inspection.
    pub fn peek(&self, actor: &ActorRef) -> Option<&Placed> {
        self.entries.get(actor)
    }

    pub fn reads(&self) -> u64 {
        self.reads
    }

    pub fn entries(&self) -> impl Iterator<Item = (&ActorRef, &Placed)> {
        self.entries.iter()
    }

    pub fn cas(&mut self, actor: &ActorRef, expected: Option<&ComponentId>, candidate: ComponentId) -> CasOutcome {
        let current = self.entries.get(actor);
        if current.map(|p| &p.component) == expected {
            let version = current.map_or(1, |p| p.version + 1);
            self.entries.insert(actor.clone(), Placed { component: candidate.clone(), version });
            CasOutcome { won: candidate, installed: true, version }
        } else {
            let p = current.expect("expected differs from an absent entry only when present");
            CasOutcome { won: p.component.clone(), installed: false, version: p.version }
        }
    }

    /// Places `actor` on `candidate` if the store still holds `expected`;
    /// returns whichever component ends up recorded.
    pub fn place(
        &mut self,
        actor: &ActorRef,
        candidate: &Component,
        expected: Option<&ComponentId>,
    ) -> Result<CasOutcome, PlacementError> {
        if !candidate.can_host(actor.type_name()) {
            return Err(PlacementError::Incapable {
                component: candidate.id.to_string(),
                actor_type: actor.type_name().to_string(),
            });
        }
        Ok(self.cas(actor, expected, candidate.id.clone()))
    }

    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "placement ({} store reads)", self.reads);
        for (a, p) in &self.entries {
            let _ = writeln!(out, "  {a} -> {} v{}", p.component, p.version);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CachePolicy {
    #[default]
    Arc,
    Lru,
}

/// Adaptive replacement cache: recency list `t1`, frequency list `t2` and
/// their ghost lists `b1`, `b2`, with adaptive target size `p` for `t1`.
#[derive(Clone, Debug)]
pub struct ArcCache<K: std::hash::Hash + Eq + Clone, V: Clone> {
    cap: usize,
    p: usize,
    t1: LruCache<K, V>,
    t2: LruCache<K, V>,
    b1: LruCache<K, ()>,
    b2: LruCache<K, ()>,
}

impl<K: std::hash::Hash + Eq + Clone, V: Clone> ArcCache<K, V> {
    pub fn new(cap: usize) -> Self {
        assert!(cap > 0, "cache capacity must be positive");
        ArcCache {
            cap,
            p: 0,
            t1: LruCache::unbounded(),
            t2: LruCache::unbounded(),
            b1: LruCache::unbounded(),
            b2: LruCache::unbounded(),
        }
    }

    pub fn len(&self) -> usize {
        self.t1.len() + self.t2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn target(&self) -> usize {
        self.p
    }

    pub fn get(&mut self, k: &K) -> Option<V> {
        if let Some(v) = self.t1.pop(k) {
            self.t2.put(k.clone(), v.clone());
            return Some(v);
        }
        self.t2.get(k).cloned()
    }

    fn replace(&mut self, in_b2: bool) {
        let t1 = self.t1.len();
        if t1 >= 1 && (t1 > self.p || (in_b2 && t1 == self.p)) {
            if let Some((k, _)) = self.t1.pop_lru() {
                self.b1.put(k, ());
            }
        } else if let Some((k, _)) = self.t2.pop_lru() {
            self.b2.put(k, ());
        } else if let Some((k, _)) = self.t1.pop_lru() {
            self.b1.put(k, ());
        }
    }

    pub fn insert(&mut self, k: K, v: V) {
        if self.t1.contains(&k) {
            self.t1.pop(&k);
            self.t2.put(k, v);
            return;
        }
        if self.t2.contains(&k) {
            self.t2.put(k, v);
            return;
        }
        if self.b1.contains(&k) {
            let delta = (self.b2.len() / self.b1.len()).max(1);
            self.p = (self.p + delta).min(self.cap);
            self.replace(false);
            self.b1.pop(&k);
            self.t2.put(k, v);
            return;
        }
        if self.b2.contains(&k) {
            let delta = (self.b1.len() / self.b2.len()).max(1);
            self.p = self.p.saturating_sub(delta);
            self.replace(true);
            self.b2.pop(&k);
            self.t2.put(k, v);
            return;
        }
        let l1 = self.t1.len() + self.b1.len();
        let total = l1 + self.t2.len() + self.b2.len();
        if l1 == self.cap {
            if self.t1.len() < self.cap {
                self.b1.pop_lru();
                self.replace(false);
            } else {
                self.t1.pop_lru();
            }
        } else if total >= self.cap {
            if total >= 2 * self.cap {
                self.b2.pop_lru();
            }
            self.replace(false);
        }
        self.t1.put(k, v);
    }

    pub fn remove(&mut self, k: &K) {
        self.t1.pop(k);
        self.t2.pop(k);
        self.b1.pop(k);
        self.b2.pop(k);
    }
}

#[derive(Clone, Debug)]
enum Policy {
    Arc(ArcCache<ActorRef, ComponentId>),
    Lru(LruCache<ActorRef, ComponentId>),
}

/// Per-component placement read cache.
#[derive(Clone, Debug)]
pub struct PlacementCache {
    policy: Policy,
    capacity: usize,
    pub hits: u64,
    pub misses: u64,
}

impl PlacementCache {
    pub fn new(policy: CachePolicy, capacity: usize) -> Self {
        let cap = NonZeroUsize::new(capacity).expect("cache capacity must be positive");
        let policy = match policy {
            CachePolicy::Arc => Policy::Arc(ArcCache::new(capacity)),
            CachePolicy::Lru => Policy::Lru(LruCache::new(cap)),
        };
        PlacementCache { policy, capacity, hits: 0, misses: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        match &self.policy {
            Policy::Arc(c) => c.len(),
            Policy::Lru(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&mut self, actor: &ActorRef) -> Option<ComponentId> {
        match &mut self.policy {
            Policy::Arc(c) => c.get(actor),
            Policy::Lru(c) => c.get(actor).cloned(),
        }
    }

    pub fn insert(&mut self, actor: ActorRef, component: ComponentId) {
        match &mut self.policy {
            Policy::Arc(c) => c.insert(actor, component),
            Policy::Lru(c) => {
                c.put(actor, component);
            }
        }
    }

    pub fn invalidate(&mut self, actor: &ActorRef) {
        match &mut self.policy {
            Policy::Arc(c) => c.remove(actor),
            Policy::Lru(c) => {
                c.pop(actor);
            }
        }
    }
}

/// Cache-first lookup; a miss reads the store and caches what it found.
pub fn lookup(store: &mut PlacementStore, cache: &mut PlacementCache, actor: &ActorRef) -> Option<ComponentId> {
    if let Some(c) = cache.get(actor) {
        cache.hits += 1;
        return Some(c);
    }
    cache.misses += 1;
    let found = store.get(actor)?;
    cache.insert(actor.clone(), found.clone());
    Some(found)
}

/// Uniform choice among the given components that can host `actor_type`.
pub fn choose_host<'a, R: Rng>(
    actor_type: &str,
    candidates: impl IntoIterator<Item = &'a Component>,
    rng: &mut R,
) -> Option<&'a Component> {
    let capable: Vec<&Component> = candidates.into_iter().filter(|c| c.can_host(actor_type)).collect();
    if capable.is_empty() {
        None
    } else {
        Some(capable[rng.gen_range(0..capable.len())])
    }
}

/// Routes a stateless service call. Nothing is recorded.
pub fn route_service<'a, R: Rng>(
    service: &str,
    live: impl IntoIterator<Item = &'a Component>,
    rng: &mut R,
) -> Result<ComponentId, PlacementError> {
    choose_host(service, live, rng).map(|c| c.id.clone()).ok_or_else(|| PlacementError::NoRoute(service.to_string()))
}
