use dualtone_bench::{chain_log, texts};

#[test]
fn chain_log_replays() {
    let (store, session) = chain_log(5);
    assert_eq!(store.replay(session.id).unwrap(), session);
    assert_eq!(session.rounds.len(), 6);
}

#[test]
fn texts_are_distinct() {
    let t = texts(20);
    assert_eq!(t.iter().collect::<std::collections::HashSet<_>>().len(), 20);
}
