//! Input builders shared by the benchmarks.

use dualtone_core::eventlog::EventStore;
use dualtone_core::exploration::{RoundSpec, SessionEvent};
use dualtone_core::generation::mix_seed;
use dualtone_core::{ClipId, Session};

pub const THEMES: [&str; 8] = [
    "rainy jazz",
    "nice city pop",
    "cute future bass",
    "silent dream of a priestess",
    "robot lullaby",
    "desert caravan at night",
    "80's hip hop that break dancers would dance to",
    "epic orchestral trailer",
];

/// `n` short texts cycling through the themes with a numeric suffix.
pub fn texts(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{} {}", THEMES[i % THEMES.len()], i / THEMES.len())).collect()
}

/// An in-memory log holding one session with a chain of `rounds` prior
/// selections below the root, with placeholder clips.
pub fn chain_log(rounds: usize) -> (EventStore, Session) {
    let store = EventStore::in_memory();
    let (mut session, created) = Session::create("rainy jazz", "en").expect("theme");
    store.append(session.id, created).expect("append");

    let prompts: Vec<String> = (0..4).map(|i| format!("prompt {i}, piano, strings")).collect();
    let (mut head, opened) = session.open_round(&RoundSpec::new(prompts).with_seed(1)).expect("root");
    store.append(session.id, opened).expect("append");
    for step in 0..=rounds {
        let round = session.round(head).expect("round").clone();
        let clips = (0..round.expected_clips())
            .map(|j| dualtone_core::exploration::ClipRecord {
                id: ClipId::new(),
                seed: mix_seed(step as u64, 0, j as u32),
                blob: None,
            })
            .collect();
        let done = session.attach_results(head, clips).expect("attach");
        store.append(session.id, done).expect("append");
        if step == rounds {
            break;
        }
        let prior = session.round(head).expect("round").clips[0];
        let text = session.clip_prompt(prior).expect("prompt").text.clone();
        let (next, opened) = session
            .open_round(&RoundSpec::new(vec![text]).with_prior(prior, 0.5).with_seed(step as u64))
            .expect("open");
        store.append(session.id, opened).expect("append");
        head = next;
    }
    debug_assert!(matches!(store.records()[0].event, SessionEvent::SessionCreated { .. }));
    (store, session)
}
