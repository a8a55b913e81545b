mod common;

use std::sync::Arc;

use async_trait::async_trait;
use dualtone_core::blobs::{content_hash, BlobStore};
use dualtone_core::derive::{ClientError, Degradation, FixtureLanguageModel, OfflineLanguageModel, TranslationClient};
use dualtone_core::engine::RoundRequest;
use dualtone_core::{
    EdgeKind, EngineError, EventStore, ExplorationError, ModifierMode, RoundStatus, SessionEvent, StubBackend,
};

use common::*;

async fn started(engine: &dualtone_core::Engine) -> (dualtone_core::SessionId, dualtone_core::RoundId, Vec<dualtone_core::ClipId>) {
    let start = engine.create_session("rainy jazz", "en", Some(1)).await.unwrap();
    let clips = engine.execute_round(start.session_id, start.root_round).await.unwrap();
    (start.session_id, start.root_round, clips)
}

#[tokio::test]
async fn blank_theme_is_rejected_before_logging() {
    let engine = stub_engine(short_defaults());
    let err = engine.create_session("   ", "en", None).await.unwrap_err();
    assert!(matches!(err, EngineError::Exploration(ExplorationError::EmptyTheme)));
    assert!(engine.store().is_empty());
}

#[tokio::test]
async fn root_round_starts_pending() {
    let engine = stub_engine(short_defaults());
    let start = engine.create_session("rainy jazz", "en", Some(1)).await.unwrap();
    let s = engine.session(start.session_id).unwrap();
    assert_eq!(s.round(start.root_round).unwrap().status, RoundStatus::Pending);
    assert_eq!(start.derivation.prompts.len(), 4);
    assert!(!start.derivation.is_degraded());
    assert_eq!(engine.store().len(), 3);
}

#[tokio::test]
async fn edge_kinds_follow_the_request() {
    let engine = stub_engine(short_defaults());
    let (sid, root, clips) = started(&engine).await;
    let s = engine.session(sid).unwrap();
    let mut prompts: Vec<String> = s.round(root).unwrap().prompts.iter().map(|p| p.text.clone()).collect();

    prompts[2].push_str(", with strong flute");
    let edited = engine
        .open_round(sid, &RoundRequest { prompts: prompts.clone(), ..Default::default() })
        .unwrap();
    let prior_only = engine
        .open_round(
            sid,
            &RoundRequest {
                prompts: vec![s.clip_prompt(clips[7]).unwrap().text.clone()],
                prior: Some(clips[7]),
                strength: Some(0.5),
                ..Default::default()
            },
        )
        .unwrap();
    let both = engine
        .open_round(
            sid,
            &RoundRequest {
                prompts: vec!["brand new, words".into()],
                prior: Some(clips[0]),
                ..Default::default()
            },
        )
        .unwrap();

    let s = engine.session(sid).unwrap();
    let kind = |r| s.round(r).unwrap().edge.as_ref().unwrap().kind;
    assert_eq!(kind(edited), EdgeKind::PromptEdit);
    assert_eq!(s.round(edited).unwrap().edge.as_ref().unwrap().changed_prompt_slots.iter().copied().collect::<Vec<_>>(), [2]);
    assert_eq!(kind(prior_only), EdgeKind::PriorSelection);
    assert_eq!(s.round(prior_only).unwrap().transfer_strength, 0.5);
    assert_eq!(kind(both), EdgeKind::Both);
    // The prior round defaults to the engine's configured strength.
    assert_eq!(s.round(both).unwrap().transfer_strength, 0.5);
}

#[tokio::test]
async fn foreign_prior_and_bad_strength_are_rejected() {
    let engine = stub_engine(short_defaults());
    let (a, _, _) = started(&engine).await;
    let (_, _, other_clips) = started(&engine).await;
    let before = engine.store().len();

    let foreign = RoundRequest {
        prompts: vec!["calm piano, soft strings".into()],
        prior: Some(other_clips[0]),
        ..Default::default()
    };
    assert!(matches!(
        engine.open_round(a, &foreign),
        Err(EngineError::Exploration(ExplorationError::ForeignPrior(_)))
    ));
    assert!(engine.select_prior(a, other_clips[0]).is_err());

    let clip = engine.session(a).unwrap().clips.keys().next().copied();
    let strong = RoundRequest {
        prompts: vec!["calm piano, soft strings".into()],
        prior: clip,
        strength: Some(-0.1),
        ..Default::default()
    };
    assert!(matches!(
        engine.open_round(a, &strong),
        Err(EngineError::Exploration(ExplorationError::BadStrength(_)))
    ));
    assert_eq!(engine.store().len(), before);
}

#[tokio::test]
async fn tree_after_three_rounds_has_two_edges() {
    let engine = stub_engine(short_defaults());
    let (sid, root, clips) = started(&engine).await;
    let s = engine.session(sid).unwrap();
    let prompt = s.clip_prompt(clips[0]).unwrap().text.clone();
    let second = engine
        .run_round(sid, &RoundRequest { prompts: vec![prompt.clone()], prior: Some(clips[0]), ..Default::default() })
        .await
        .unwrap();
    engine
        .run_round(
            sid,
            &RoundRequest {
                prompts: vec![format!("{prompt}, with no drums")],
                parent: Some(second),
                ..Default::default()
            },
        )
        .await
        .unwrap();

    let tree = engine.tree(sid).unwrap();
    assert_eq!(tree.rounds.len(), 3);
    assert_eq!(tree.rounds.iter().filter(|r| r.edge.is_some()).count(), 2);
    assert_eq!(tree.root_round, Some(root));
    assert!(tree.rounds.iter().all(|r| r.status == RoundStatus::Complete));
    let json = serde_json::to_value(&tree).unwrap();
    assert_eq!(json["rounds"][1]["edge"]["kind"], "prior-selection");
    assert_eq!(json["rounds"][2]["edge"]["kind"], "prompt-edit");
}

#[tokio::test]
async fn each_action_appends_one_event() {
    let engine = stub_engine(short_defaults());
    let (sid, root, clips) = started(&engine).await;
    let prompt_id = engine.session(sid).unwrap().round(root).unwrap().prompts[0].id;

    let mut expected = engine.store().len();
    let mut check = |what: &str| {
        expected += 1;
        assert_eq!(engine.store().len(), expected, "{what}");
    };
    engine.record_download(clips[0]).unwrap();
    check("download");
    engine.record_share(clips[1]).unwrap();
    check("share");
    engine.select_prior(sid, clips[2]).unwrap();
    check("select prior");
    engine.edit_prompt(sid, prompt_id, "jazzy guitar, rain sounds").unwrap();
    check("edit prompt");
    engine.apply_modifier(sid, prompt_id, "Piano", ModifierMode::Suppress).unwrap();
    check("modifier");

    let kinds: Vec<_> = engine.store().records().iter().rev().take(5).map(|r| r.kind()).collect();
    let names: Vec<String> = kinds.iter().map(|k| serde_json::to_value(k).unwrap().as_str().unwrap().to_string()).collect();
    assert_eq!(names, ["modifier-applied", "prompt-edited", "prior-selected", "clip-shared", "clip-downloaded"]);
}

#[tokio::test]
async fn unknown_ids_are_reported() {
    let engine = stub_engine(short_defaults());
    let missing = dualtone_core::ClipId::new();
    assert!(matches!(engine.record_download(missing), Err(EngineError::UnknownClip(_))));
    assert!(matches!(engine.clip_wav(missing), Err(EngineError::UnknownClip(_))));
    assert!(matches!(
        engine.tree(dualtone_core::SessionId::new()),
        Err(EngineError::UnknownSession(_))
    ));
}

#[tokio::test]
async fn executing_twice_is_refused() {
    let engine = stub_engine(short_defaults());
    let (sid, root, _) = started(&engine).await;
    assert!(matches!(
        engine.execute_round(sid, root).await,
        Err(EngineError::Exploration(ExplorationError::RoundNotPending(_)))
    ));
}

#[tokio::test]
async fn offline_language_model_degrades_to_templates() {
    let engine = engine_with(
        short_defaults(),
        Arc::new(StubBackend),
        Arc::new(OfflineLanguageModel),
        EventStore::in_memory(),
        BlobStore::in_memory(),
    );
    let start = engine.create_session("rainy jazz", "en", None).await.unwrap();
    assert!(matches!(start.derivation.degraded, Some(Degradation::ClientUnavailable(_))));
    assert_eq!(start.derivation.prompts[0], "rainy jazz style music, melodic, instrumental");
    let clips = engine.execute_round(start.session_id, start.root_round).await.unwrap();
    assert_eq!(clips.len(), 12);
    let s = engine.session(start.session_id).unwrap();
    assert!(s.derivation.unwrap().degraded.is_some());
}

struct Dictionary;

#[async_trait]
impl TranslationClient for Dictionary {
    async fn translate(&self, text: &str, source_locale: &str) -> Result<String, ClientError> {
        match (text, source_locale) {
            ("雨の日のジャズ", "ja") => Ok("rainy day jazz".into()),
            _ => Err(ClientError::Unavailable("unknown phrase".into())),
        }
    }
}

#[tokio::test]
async fn non_english_themes_are_translated_before_the_query() {
    let lm = Arc::new(FixtureLanguageModel::constant(PRIESTESS_RESPONSE));
    let engine = dualtone_core::Engine::new(
        short_defaults(),
        dualtone_core::generation::BatchRunner::new(Arc::new(StubBackend), 4, std::time::Duration::from_secs(5)),
        lm.clone(),
        Arc::new(Dictionary),
        Arc::new(EventStore::in_memory()),
        Arc::new(BlobStore::in_memory()),
    )
    .unwrap();
    let start = engine.create_session("雨の日のジャズ", "ja", None).await.unwrap();
    assert_eq!(start.derivation.translated_theme.as_deref(), Some("rainy day jazz"));
    assert!(lm.queries()[0].contains("\"rainy day jazz\""));
    assert_eq!(engine.session(start.session_id).unwrap().theme_phrase, "雨の日のジャズ");

    // An unknown phrase falls back to the original text, flagged.
    let start = engine.create_session("夜の海", "ja", None).await.unwrap();
    assert!(start.derivation.translated_theme.is_none());
    assert!(matches!(start.derivation.degraded, Some(Degradation::ClientUnavailable(_))));
    assert!(lm.queries()[1].contains("\"夜の海\""));
}

#[tokio::test]
async fn sessions_and_audio_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (sid, clips, tree) = {
        let engine = file_engine(dir.path(), short_defaults(), Arc::new(StubBackend));
        let (sid, _, clips) = started(&engine).await;
        engine.record_share(clips[3]).unwrap();
        (sid, clips, engine.tree(sid).unwrap())
    };

    let engine = file_engine(dir.path(), short_defaults(), Arc::new(StubBackend));
    assert_eq!(engine.tree(sid).unwrap(), tree);
    let bytes = engine.clip_wav(clips[3]).unwrap();
    assert_eq!(&bytes[..4], b"RIFF");
    let blob = engine.session(sid).unwrap().clip(clips[3]).unwrap().blob.clone().unwrap();
    assert_eq!(blob, content_hash(&bytes));
    assert!(dir.path().join("blobs").join(format!("{blob}.wav")).is_file());
    assert!(matches!(
        engine.store().records().last().unwrap().event,
        SessionEvent::ClipShared { .. }
    ));
}

#[tokio::test]
async fn concurrent_rounds_in_one_session() {
    let engine = Arc::new(stub_engine(short_defaults()));
    let (sid, _, clips) = started(&engine).await;
    let s = engine.session(sid).unwrap();
    let mut handles = Vec::new();
    for clip in clips.iter().take(6) {
        let engine = engine.clone();
        let request = RoundRequest {
            prompts: vec![s.clip_prompt(*clip).unwrap().text.clone()],
            prior: Some(*clip),
            ..Default::default()
        };
        handles.push(tokio::spawn(async move { engine.run_round(sid, &request).await }));
    }
    for h in handles {
        h.await.unwrap().unwrap();
    }
    let live = engine.session(sid).unwrap();
    assert_eq!(live.rounds.len(), 7);
    assert!(live.rounds.values().all(|r| r.status == RoundStatus::Complete));
    assert_eq!(engine.replay(sid).unwrap(), live);
}

#[tokio::test]
async fn failed_round_keeps_the_session_usable() {
    let engine = engine_with(
        short_defaults(),
        Arc::new(GlitchBackend),
        fixture_lm(),
        EventStore::in_memory(),
        BlobStore::in_memory(),
    );
    let (sid, root, _) = started(&engine).await;
    let mut prompts: Vec<String> = engine.session(sid).unwrap().round(root).unwrap().prompt_texts().iter().map(|s| s.to_string()).collect();
    prompts[1] = "glitch, noise".into();
    let request = RoundRequest { prompts, ..Default::default() };
    let round = engine.open_round(sid, &request).unwrap();
    let err = engine.execute_round(sid, round).await.unwrap_err();
    assert!(matches!(err, EngineError::Generation(_)));
    let failed = engine.session(sid).unwrap().round(round).unwrap().clone();
    assert_eq!(failed.status, RoundStatus::Failed);
    assert_eq!(failed.failure.unwrap().failed_jobs, [3, 4, 5]);

    // Branching from the root again still works.
    let mut prompts = failed.prompts.iter().map(|p| p.text.clone()).collect::<Vec<_>>();
    prompts[1] = "clean, quiet".into();
    engine.run_round(sid, &RoundRequest { prompts, parent: Some(root), ..Default::default() }).await.unwrap();
    assert_eq!(engine.replay(sid).unwrap(), engine.session(sid).unwrap());
}
