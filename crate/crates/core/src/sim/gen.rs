//! Seeded random scenarios with mixed failures.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::node::Granularity;

use super::scenario::{ComponentSpec, FailureMode, FailureSpec, JoinSpec, Scenario};

const PROGRAMS: [&str; 6] = ["dp_table", "dp_general:2", "dp_general:3", "dp_general:4", "dp_tailcall:2", "dp_tailcall:3"];

/// A scenario drawn from `seed`: a small dining program on two to four
/// components with up to two crashes or departures, sometimes followed by a
/// rejoin. At least one component always survives.
pub fn random_scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let program = *PROGRAMS.choose(&mut rng).expect("non-empty");
    let n = rng.gen_range(2..=4);
    let mut s = Scenario::with_defaults(program, n).expect("bundled programs resolve");
    s.name = format!("random-{seed}");
    s.seed = rng.gen::<u32>().into();
    s.max_steps = 20_000;
    if rng.gen_bool(0.3) {
        s.granularity = Granularity::Transition;
    }
    let types = s.components[0].actor_types.clone();
    let mut victims: Vec<String> = s.components.iter().map(|c| c.id.clone()).collect();
    victims.shuffle(&mut rng);
    let failures = rng.gen_range(0..=2.min(n - 1));
    for id in victims.into_iter().take(failures) {
        let at_step = rng.gen_range(1..60);
        let mode = if rng.gen_bool(0.25) { FailureMode::Leave } else { FailureMode::Crash };
        if rng.gen_bool(0.3) {
            let grace_ms = s.config.grace_period_s * 1000;
            let at_ms = at_step * s.config.quantum_ms + grace_ms + rng.gen_range(100..5_000);
            s.joins.push(JoinSpec { component: id.clone(), actor_types: types.clone(), at_step: None, at_ms: Some(at_ms) });
        }
        s.failures.push(FailureSpec { component: id, at_step: Some(at_step), at_ms: None, mode });
    }
    if rng.gen_bool(0.2) {
        s.components.push(ComponentSpec { id: format!("c{}", n + 1), actor_types: types });
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_valid() {
        for seed in 0..50 {
            let s = random_scenario(seed);
            assert_eq!(s, random_scenario(seed));
            s.validate().unwrap();
            assert!(s.failures.len() < s.components.len());
        }
    }
}
