//! Two placers race to place the same actor through compare-and-swap, then
//! ARC and LRU caches answer repeated lookups from a skewed workload.
//!
//!     cargo run --example placement_cache

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vactor::fabric::{Component, ComponentId, Status};
use vactor::placement::{lookup, CachePolicy, PlacementCache, PlacementStore};
use vactor::semantics::ActorRef;

fn component(id: &str) -> Component {
    Component {
        id: ComponentId::new(id),
        actor_types: BTreeSet::from(["Fork".to_string()]),
        status: Status::Live,
        incarnation: 0,
        crashed_at_ms: None,
    }
}

fn main() {
    let mut store = PlacementStore::new();
    let f = ActorRef::of("Fork", "f0");
    let (a, b) = (component("a"), component("b"));
    // both read "unplaced", both try to install themselves
    let first = store.place(&f, &a, None).expect("capable");
    let second = store.place(&f, &b, None).expect("capable");
    println!("a installed={} -> {} v{}", first.installed, first.won, first.version);
    println!("b installed={} -> {} v{}", second.installed, second.won, second.version);
    // a stale expectation cannot overwrite a newer placement
    let moved = store.place(&f, &b, Some(&ComponentId::new("a"))).expect("capable");
    let stale = store.place(&f, &a, Some(&ComponentId::new("a"))).expect("capable");
    println!("move to b: installed={} v{}; stale retry: installed={}", moved.installed, moved.version, stale.installed);

    let forks: Vec<ActorRef> = (0..64).map(|i| ActorRef::of("Fork", &format!("f{i}"))).collect();
    for f in &forks {
        store.cas(f, store.peek(f).map(|p| p.component.clone()).as_ref(), ComponentId::new("a"));
    }
    for policy in [CachePolicy::Arc, CachePolicy::Lru] {
        let mut cache = PlacementCache::new(policy, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let reads = store.reads();
        for _ in 0..10_000 {
            // most lookups hit eight hot forks, the rest scan all of them
            let i = if rng.gen_bool(0.8) { rng.gen_range(0..8) } else { rng.gen_range(0..forks.len()) };
            lookup(&mut store, &mut cache, &forks[i]);
        }
        println!("{policy:?}: hits {} misses {} store reads {}", cache.hits, cache.misses, store.reads() - reads);
    }
}
