use dualtone_core::derive::{
    derive_initial_prompts, fallback_prompts, ClientError, Degradation, DeriveError, FixtureLanguageModel,
    PassThroughTranslator,
};
use dualtone_core::parse_phrase_lists;
use serde::Deserialize;

#[derive(Deserialize)]
struct Case {
    name: String,
    response: String,
    expected: Option<Vec<String>>,
    #[serde(default)]
    found: Option<usize>,
}

#[test]
fn parser_fixture_suite() {
    let cases: Vec<Case> = serde_json::from_str(include_str!("fixtures/parser_cases.json")).unwrap();
    assert_eq!(cases.len(), 10);
    for case in cases {
        let got = parse_phrase_lists(&case.response);
        match case.expected {
            Some(lists) => assert_eq!(got.unwrap(), lists, "{}", case.name),
            None => assert_eq!(
                got.unwrap_err(),
                DeriveError::TooFewLists { found: case.found.unwrap() },
                "{}",
                case.name
            ),
        }
    }
}

#[test]
fn parsed_lists_never_carry_markers() {
    let response = "1. a, b\n2) c, d\n- e, f\n• g, h\n";
    let lists = parse_phrase_lists(response).unwrap();
    assert_eq!(lists, ["a, b", "c, d", "e, f", "g, h"]);
}

#[tokio::test]
async fn retry_after_unparseable_reply_is_not_degraded() {
    let lm = FixtureLanguageModel::scripted([
        Ok("no lists here".to_string()),
        Ok("1. a, b\n2. c, d\n3. e, f\n4. g, h".to_string()),
    ]);
    let out = derive_initial_prompts("rainy jazz", "en", &lm, &PassThroughTranslator).await.unwrap();
    assert_eq!(out.prompts, ["a, b", "c, d", "e, f", "g, h"]);
    assert_eq!(out.degraded, None);
    assert_eq!(lm.queries().len(), 2);
}

#[tokio::test]
async fn two_unparseable_replies_fall_back() {
    let lm = FixtureLanguageModel::constant("1. only, one\n2. two, lists");
    let out = derive_initial_prompts("rainy jazz", "en", &lm, &PassThroughTranslator).await.unwrap();
    assert_eq!(out.prompts, fallback_prompts("rainy jazz"));
    assert_eq!(out.degraded, Some(Degradation::Unparseable));
    assert_eq!(out.raw_response, "1. only, one\n2. two, lists");
    assert_eq!(lm.queries().len(), 2);
}

#[tokio::test]
async fn unreachable_model_falls_back() {
    let lm = FixtureLanguageModel::scripted([
        Err(ClientError::Unavailable("down".into())),
        Err(ClientError::Unavailable("still down".into())),
    ]);
    let out = derive_initial_prompts("rainy jazz", "en", &lm, &PassThroughTranslator).await.unwrap();
    assert_eq!(out.prompts.len(), 4);
    assert!(matches!(out.degraded, Some(Degradation::ClientUnavailable(_))));
}

#[tokio::test]
async fn the_query_is_the_template() {
    let lm = FixtureLanguageModel::echo_theme();
    let out = derive_initial_prompts("  city pop  ", "en", &lm, &PassThroughTranslator).await.unwrap();
    assert_eq!(out.prompts[0], "city pop, warm piano, soft strings");
    assert!(out.translated_theme.is_none());
}

#[test]
fn fallback_prompts_are_distinct() {
    let p = fallback_prompts("rainy jazz");
    assert_eq!(p.len(), 4);
    for i in 0..4 {
        for j in i + 1..4 {
            assert_ne!(p[i], p[j]);
        }
    }
}
