#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use parking_lot::Mutex;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use dualtone_core::blobs::BlobStore;
use dualtone_core::derive::{FixtureLanguageModel, LanguageModelClient, PassThroughTranslator};
use dualtone_core::engine::{RoundDefaults, RoundRequest};
use dualtone_core::generation::remote::{ErrorBody, GenerateRequestBody};
use dualtone_core::generation::{
    blend_with_prior, stub_synthesize, Backend, BackendError, BatchRunner, GenerationJob,
};
use dualtone_core::prompt_edit::INSTRUMENT_VOCABULARY;
use dualtone_core::{
    encode_wav, ClipId, Engine, EventStore, ModifierMode, RoundId, SessionId, StubBackend,
    Waveform,
};

pub const PRIESTESS_RESPONSE: &str = "1. otherworldly harmonies, delicate strings, minimalistic percussion, dreamlike vocals\n\
2. ethereal choir, soft harp, slow tempo\n\
3. ambient drones, distant bells, gentle reverb\n\
4. mystical flute, hushed piano, airy pads\n";

pub fn fixture_lm() -> Arc<dyn LanguageModelClient> {
    Arc::new(FixtureLanguageModel::constant(PRIESTESS_RESPONSE))
}

/// Default geometry: 3 clips per prompt, 10 s at 16 kHz.
pub fn full_defaults() -> RoundDefaults {
    RoundDefaults::default()
}

/// Short clips for tests that run many rounds.
pub fn short_defaults() -> RoundDefaults {
    RoundDefaults {
        duration_s: 0.05,
        ..RoundDefaults::default()
    }
}

pub fn engine_with(
    defaults: RoundDefaults,
    backend: Arc<dyn Backend>,
    lm: Arc<dyn LanguageModelClient>,
    store: EventStore,
    blobs: BlobStore,
) -> Engine {
    Engine::new(
        defaults,
        BatchRunner::new(backend, 12, Duration::from_secs(30)),
        lm,
        Arc::new(PassThroughTranslator),
        Arc::new(store),
        Arc::new(blobs),
    )
    .expect("engine")
}

pub fn stub_engine(defaults: RoundDefaults) -> Engine {
    engine_with(
        defaults,
        Arc::new(StubBackend),
        fixture_lm(),
        EventStore::in_memory(),
        BlobStore::in_memory(),
    )
}

pub fn file_engine(dir: &Path, defaults: RoundDefaults, backend: Arc<dyn Backend>) -> Engine {
    engine_with(
        defaults,
        backend,
        Arc::new(FixtureLanguageModel::echo_theme()),
        EventStore::open(dir.join("events.jsonl")).expect("log"),
        BlobStore::open(dir.join("blobs")).expect("blobs"),
    )
}

/// Stub backend that fails every job whose prompt mentions "glitch".
pub struct GlitchBackend;

#[async_trait]
impl Backend for GlitchBackend {
    async fn generate(&self, job: &GenerationJob) -> Result<Waveform, BackendError> {
        if job.prompt.contains("glitch") {
            return Err(BackendError::Internal("glitch requested".into()));
        }
        StubBackend.generate(job).await
    }
}

// ---------------------------------------------------------------------------
// In-process generation server speaking the wire protocol.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StubBehavior {
    Normal,
    /// Returns 100 samples fewer than requested.
    ShortAudio,
    /// Answers 500 for prompts containing "fail", normally otherwise.
    FailMarked,
    /// Answers 500 to everything.
    ServerError,
}

#[derive(Clone)]
pub struct ProtocolStub {
    behavior: Arc<Mutex<StubBehavior>>,
    requests: Arc<Mutex<Vec<GenerateRequestBody>>>,
}

impl ProtocolStub {
    pub fn set(&self, behavior: StubBehavior) {
        *self.behavior.lock() = behavior;
    }

    pub fn requests(&self) -> Vec<GenerateRequestBody> {
        self.requests.lock().clone()
    }
}

fn error(status: StatusCode, code: &str, message: &str) -> Response {
    (
        status,
        Json(ErrorBody {
            code: code.into(),
            message: message.into(),
        }),
    )
        .into_response()
}

async fn generate(State(stub): State<ProtocolStub>, Json(body): Json<GenerateRequestBody>) -> Response {
    stub.requests.lock().push(body.clone());
    let behavior = *stub.behavior.lock();
    if behavior == StubBehavior::ServerError || (behavior == StubBehavior::FailMarked && body.prompt.contains("fail")) {
        return error(StatusCode::INTERNAL_SERVER_ERROR, "model_failure", "synthetic failure");
    }
    let prior = match body.prior() {
        Ok(p) => p,
        Err(e) => return error(StatusCode::BAD_REQUEST, "bad_prior", &e.to_string()),
    };
    let fresh = stub_synthesize(&body.prompt, body.seed, body.duration_s, body.sample_rate);
    let mut out = match prior {
        Some(prior) => match blend_with_prior(&fresh, &prior, body.strength) {
            Ok(w) => w,
            Err(e) => return error(StatusCode::BAD_REQUEST, "bad_prior", &e.to_string()),
        },
        None => fresh,
    };
    if behavior == StubBehavior::ShortAudio {
        let keep = out.samples.len().saturating_sub(100);
        out.samples.truncate(keep);
    }
    let wav = encode_wav(&out).expect("stub output encodes");
    ([(header::CONTENT_TYPE, "audio/wav")], wav).into_response()
}

/// Binds the protocol stub on an ephemeral port; returns its base URL.
pub async fn spawn_protocol_stub() -> (String, ProtocolStub) {
    let stub = ProtocolStub {
        behavior: Arc::new(Mutex::new(StubBehavior::Normal)),
        requests: Arc::default(),
    };
    let app = Router::new().route("/generate", post(generate)).with_state(stub.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.expect("bind");
    let addr = listener.local_addr().expect("addr");
    tokio::spawn(async move {
        axum::serve(listener, app).await.expect("serve");
    });
    (format!("http://{addr}"), stub)
}

// ---------------------------------------------------------------------------
// Session scripts.

/// Toggles one instrument modifier on `prompt_id` and returns the new text.
fn toggle_modifier(engine: &Engine, session: SessionId, round: RoundId, slot: usize, step: usize) -> String {
    let s = engine.session(session).unwrap();
    let prompt = &s.round(round).unwrap().prompts[slot];
    let instrument = INSTRUMENT_VOCABULARY[step % INSTRUMENT_VOCABULARY.len()];
    let mode = match prompt.modifier_for(instrument).map(|m| m.mode) {
        Some(ModifierMode::Amplify) => ModifierMode::Suppress,
        _ => ModifierMode::Amplify,
    };
    engine.apply_modifier(session, prompt.id, instrument, mode).unwrap().text
}

/// A 32-round chain: 14 prompt edits alternating with prior selections,
/// followed by four more prior selections, ending in a share.
pub async fn scripted_journey(engine: &Engine, seed: u64) -> SessionId {
    let start = engine.create_session("silent dream of a priestess", "en", Some(seed)).await.unwrap();
    let session = start.session_id;
    engine.execute_round(session, start.root_round).await.unwrap();

    let mut head = start.root_round;
    let mut edits = 0;
    for step in 0..32u64 {
        let prompt_edit = step < 28 && step % 2 == 0;
        let s = engine.session(session).unwrap();
        let round = s.round(head).unwrap();
        let request = if prompt_edit {
            let slot = 0;
            let mut prompts: Vec<String> = round.prompts.iter().map(|p| p.text.clone()).collect();
            prompts[slot] = toggle_modifier(engine, session, head, slot, edits);
            edits += 1;
            RoundRequest {
                prompts,
                seed: Some(seed ^ step),
                ..RoundRequest::default()
            }
        } else {
            let clip = round.clips[(step as usize) % round.clips.len()];
            engine.select_prior(session, clip).unwrap();
            let prompt = s.clip_prompt(clip).unwrap().text.clone();
            RoundRequest {
                prompts: vec![prompt],
                prior: Some(clip),
                strength: Some(0.5),
                seed: Some(seed ^ step),
                ..RoundRequest::default()
            }
        };
        head = engine.run_round(session, &request).await.unwrap();
    }
    let last = engine.session(session).unwrap().round(head).unwrap().clips[0];
    engine.record_download(last).unwrap();
    engine.record_share(last).unwrap();
    session
}

fn completed_clips(engine: &Engine, session: SessionId) -> Vec<ClipId> {
    engine.session(session).unwrap().clips.keys().copied().collect()
}

/// Drives a session through a random mix of rounds, edits, selections,
/// downloads, shares and rejected requests. Every rejected request is
/// checked to leave the log untouched.
pub async fn random_session(engine: &Engine, rng: &mut ChaCha8Rng, foreign: Option<ClipId>) -> SessionId {
    let themes = ["rainy jazz", "nice city pop", "cute future bass", "desert caravan at night", "robot lullaby"];
    let theme = themes.choose(rng).unwrap();
    let start = engine.create_session(theme, "en", Some(rng.gen())).await.unwrap();
    let session = start.session_id;
    if rng.gen_bool(0.9) {
        engine.execute_round(session, start.root_round).await.unwrap();
    }

    let ops = rng.gen_range(3..12);
    for _ in 0..ops {
        let s = engine.session(session).unwrap();
        let rounds: Vec<RoundId> = s.rounds.keys().copied().collect();
        let clips = completed_clips(engine, session);
        let parent = *rounds.choose(rng).unwrap();
        let parent_round = s.round(parent).unwrap().clone();
        let before = engine.store().len();

        match rng.gen_range(0..8) {
            // Prompt edit from any round.
            0 | 1 => {
                let slot = rng.gen_range(0..parent_round.prompts.len());
                let mut prompts: Vec<String> = parent_round.prompts.iter().map(|p| p.text.clone()).collect();
                prompts[slot] = match rng.gen_range(0..3) {
                    0 => toggle_modifier(engine, session, parent, slot, rng.gen()),
                    1 => {
                        let id = parent_round.prompts[slot].id;
                        let text = format!("{}, variation {}", prompts[slot], rng.gen::<u16>());
                        engine.edit_prompt(session, id, &text).unwrap().text
                    }
                    _ => format!("{}, glitch", prompts[slot]),
                };
                let request = RoundRequest {
                    prompts,
                    parent: Some(parent),
                    seed: Some(rng.gen()),
                    ..RoundRequest::default()
                };
                let round = engine.open_round(session, &request).unwrap();
                if rng.gen_bool(0.85) {
                    let _ = engine.execute_round(session, round).await;
                }
            }
            // Prior selection, narrowing to the clip's prompt or keeping the
            // parent's prompts.
            2 | 3 if !clips.is_empty() => {
                let clip = *clips.choose(rng).unwrap();
                if rng.gen_bool(0.5) {
                    engine.select_prior(session, clip).unwrap();
                }
                let owner = s.clip(clip).unwrap().round;
                let prompts = if rng.gen_bool(0.5) {
                    vec![s.clip_prompt(clip).unwrap().text.clone()]
                } else {
                    s.round(owner).unwrap().prompts.iter().map(|p| p.text.clone()).collect()
                };
                let request = RoundRequest {
                    prompts,
                    prior: Some(clip),
                    strength: Some(*[0.0, 0.25, 0.5, 1.0].choose(rng).unwrap()),
                    seed: Some(rng.gen()),
                    ..RoundRequest::default()
                };
                let round = engine.open_round(session, &request).unwrap();
                let _ = engine.execute_round(session, round).await;
            }
            // Both at once.
            4 if !clips.is_empty() => {
                let clip = *clips.choose(rng).unwrap();
                let base = s.clip_prompt(clip).unwrap().text.clone();
                let request = RoundRequest {
                    prompts: vec![format!("{base}, extra reverb")],
                    prior: Some(clip),
                    seed: Some(rng.gen()),
                    ..RoundRequest::default()
                };
                engine.run_round(session, &request).await.unwrap();
            }
            5 if !clips.is_empty() => {
                let clip = *clips.choose(rng).unwrap();
                if rng.gen_bool(0.5) {
                    engine.record_download(clip).unwrap();
                } else {
                    engine.record_share(clip).unwrap();
                }
            }
            // Requests the engine must reject without logging anything.
            _ => {
                let unchanged = RoundRequest {
                    prompts: parent_round.prompts.iter().map(|p| p.text.clone()).collect(),
                    parent: Some(parent),
                    ..RoundRequest::default()
                };
                assert!(engine.open_round(session, &unchanged).is_err());
                if let Some(foreign) = foreign {
                    let request = RoundRequest {
                        prompts: vec!["anything, at all".into()],
                        prior: Some(foreign),
                        ..RoundRequest::default()
                    };
                    assert!(engine.open_round(session, &request).is_err());
                    assert!(engine.select_prior(session, foreign).is_err());
                }
                let bad_strength = RoundRequest {
                    prompts: vec!["anything, at all".into()],
                    prior: clips.first().copied(),
                    strength: Some(1.5),
                    ..RoundRequest::default()
                };
                assert!(engine.open_round(session, &bad_strength).is_err());
                assert_eq!(engine.store().len(), before, "rejected request reached the log");
            }
        }
    }
    session
}

// ---------------------------------------------------------------------------
// Numeric oracles.

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues and the matching eigenvectors (as rows), unsorted.
pub fn jacobi_eigen(matrix: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let values = (0..n).map(|i| a[i][i]).collect();
    let vectors = (0..n).map(|j| (0..n).map(|i| v[i][j]).collect()).collect();
    (values, vectors)
}

/// Sample covariance (divided by n - 1) computed with plain loops.
pub fn covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len();
    let d = rows[0].len();
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for r in rows {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
        }
    }
    for row in cov.iter_mut() {
        for x in row.iter_mut() {
            *x /= (n - 1) as f64;
        }
    }
    cov
}

/// Residual energy left after projecting onto the top two principal axes:
/// (n - 1) times the sum of the remaining eigenvalues.
pub fn oracle_residual(rows: &[Vec<f64>]) -> f64 {
    let (mut values, _) = jacobi_eigen(&covariance(rows));
    values.sort_by(|a, b| b.partial_cmp(a).unwrap());
    (rows.len() - 1) as f64 * values[2..].iter().sum::<f64>()
}
