//! The partitioned log on its own: two components join, one receives a
//! request and crashes, membership notices after the grace period, and the
//! dangling partition is scanned and purged.
//!
//!     cargo run --example fabric_log

use std::collections::BTreeSet;

use vactor::fabric::{Body, ComponentId, Envelope, Fabric, FabricConfig};
use vactor::oracle::RequestId;
use vactor::semantics::{ActorRef, Invocation, Value};

fn main() {
    let mut fabric = Fabric::new(FabricConfig::default());
    let types: BTreeSet<String> = BTreeSet::from(["Fork".to_string()]);
    let (a, b) = (ComponentId::new("a"), ComponentId::new("b"));
    fabric.join(a.clone(), types.clone()).expect("joins");
    fabric.join(b.clone(), types).expect("joins");

    let call = Invocation::new(ActorRef::of("Fork", "f"), "take", Value::Int(42));
    let env = Envelope {
        request: RequestId::new_async(0),
        generation: 0,
        target: call.actor.clone(),
        body: Body::Request(call),
        origin: None,
        sender: None,
        epoch: fabric.membership().epoch,
        sent_at_ms: 0,
    };
    let pb = fabric.partition_of(&b).expect("b has a partition");
    fabric.append(pb, env).expect("appends");
    println!("b polls: {:?}", fabric.poll(&b).expect("polls").map(|(o, e)| format!("@{o} {e}")));

    fabric.fail(&b).expect("crashes");
    let when = fabric.next_detection_ms().expect("detection pending");
    println!("b crashed; detected at {when}ms: {:?}", fabric.advance_to(when));
    println!("dangling partitions: {:?}", fabric.membership().dangling);

    fabric.freeze();
    for e in fabric.scan_recent().expect("frozen") {
        println!("scan p{}@{} {}", e.partition, e.offset, e.envelope);
    }
    fabric.purge(pb).expect("purges");
    fabric.resume();
    print!("{}", fabric.dump());
}
