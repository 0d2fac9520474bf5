use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rekindle_core::{Condition, DocKind, Millis};

use crate::scenario::{Phase, Scenario};
use crate::SimError;

const SEC: Millis = 1_000;

/// `n` random valid scenarios, reproducible from `seed`. Durations are whole
/// seconds.
pub fn fuzz_scenarios(n: usize, seed: u64) -> Result<Vec<Scenario>, SimError> {
    if n == 0 {
        return Err(SimError::EmptyRequest);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| scenario(&mut rng)).collect())
}

fn scenario(rng: &mut ChaCha8Rng) -> Scenario {
    let condition = match rng.random_range(0..3) {
        0 => Condition::Proposed,
        1 => Condition::Control,
        _ => Condition::None,
    };
    let n_phases = rng.random_range(1..=7);
    let mut script = Vec::with_capacity(n_phases);
    for i in 0..n_phases {
        let last = i + 1 == n_phases;
        let next = phase(rng, condition, last, 0);
        let open = next == Phase::Distract { duration_ms: None };
        script.push(next);
        if open && !last {
            script.push(react(rng, 1));
        }
    }
    let mut s = Scenario::new(condition, script);
    s.seed = rng.random();
    s.idle_threshold_t = rng.random_range(5..=120);
    s.doc_kind = if rng.random_bool(0.3) {
        DocKind::SlideDeck
    } else {
        DocKind::Text
    };
    s.tail_ms = rng.random_range(0..=200) * SEC;
    s
}

fn react(rng: &mut ChaCha8Rng, depth: u32) -> Phase {
    let then = (depth < 2 && rng.random_bool(0.3)).then(|| {
        let next = match rng.random_range(0..3) {
            0 => Phase::Work {
                duration_ms: rng.random_range(1..=90) * SEC,
                chars_per_10s: rng.random_range(0..=80),
            },
            1 => Phase::Distract {
                duration_ms: Some(rng.random_range(1..=200) * SEC),
            },
            _ => Phase::Delete {
                chars: rng.random_range(1..=40),
            },
        };
        Box::new(next)
    });
    Phase::ReactToNotification {
        delay_ms: rng.random_range(0..=240) * SEC,
        then,
    }
}

fn phase(rng: &mut ChaCha8Rng, condition: Condition, last: bool, depth: u32) -> Phase {
    let can_react = condition != Condition::None;
    loop {
        match rng.random_range(0..12) {
            0..=3 => {
                return Phase::Work {
                    duration_ms: rng.random_range(1..=120) * SEC,
                    chars_per_10s: rng.random_range(0..=80),
                }
            }
            4..=5 => {
                return Phase::Distract {
                    duration_ms: Some(rng.random_range(1..=300) * SEC),
                }
            }
            6 if can_react || last => return Phase::Distract { duration_ms: None },
            7..=8 if can_react => return react(rng, depth),
            9 => {
                return Phase::Away {
                    duration_ms: rng.random_range(1..=420) * SEC,
                }
            }
            10 => {
                return Phase::Delete {
                    chars: rng.random_range(1..=60),
                }
            }
            11 => {
                return Phase::SetThreshold {
                    idle_threshold_t: rng.random_range(5..=120),
                }
            }
            _ => continue,
        }
    }
}
