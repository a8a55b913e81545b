//! Offline reports over an event log, written as CSV.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use dualtone_core::analytics::{
    default_stopwords, journeys_from_records, project_corpora, sample_without_replacement, term_frequencies,
    transition_counts, Corpus, HashEmbedder, PcaError,
};
use dualtone_core::blobs::{content_hash, BlobStore};
use dualtone_core::eventlog::replay_records;
use dualtone_core::{decode_wav, ClipId, EventLogError, EventRecord, EventStore, Session};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot read log: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Log(#[from] EventLogError),
    #[error("projection failed: {0}")]
    Pca(#[from] PcaError),
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

/// Reads a JSONL log without modifying it. Unlike opening the store for
/// writing, a torn final line is an error here.
pub fn load_log(path: &Path) -> Result<Vec<EventRecord>, ReportError> {
    let file = File::open(path)?;
    Ok(EventStore::import(BufReader::new(file))?.records())
}

/// Replays every session in the log, failing on the first inconsistency.
pub fn replay_all(records: &[EventRecord]) -> Result<Vec<Session>, EventLogError> {
    let mut seen = HashSet::new();
    records
        .iter()
        .map(|r| r.session_id)
        .filter(|id| seen.insert(*id))
        .map(|id| replay_records(records, id))
        .collect()
}

/// `term,count` over theme phrases, most frequent first.
pub fn terms_csv(records: &[EventRecord], min_count: u64, out: impl Write) -> Result<(), ReportError> {
    let themes: Vec<String> = replay_all(records)?.into_iter().map(|s| s.theme_phrase).collect();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["term", "count"])?;
    for t in term_frequencies(&themes, &default_stopwords(), min_count) {
        w.write_record([t.term, t.count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `from,to,count` for every observed action pair.
pub fn transitions_csv(records: &[EventRecord], out: impl Write) -> Result<(), ReportError> {
    let table = transition_counts(&journeys_from_records(records)?);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["from", "to", "count"])?;
    for (from, to, count) in table.rows() {
        w.write_record([from.as_str(), to.as_str(), &count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Distinct prompt texts across every round, in log order.
fn prompt_texts(sessions: &[Session]) -> Vec<String> {
    let mut seen = HashSet::new();
    sessions
        .iter()
        .flat_map(|s| s.rounds.values())
        .flat_map(|r| r.prompts.iter().map(|p| p.text.clone()))
        .filter(|t| seen.insert(t.clone()))
        .collect()
}

/// `corpus,x,y`: theme phrases, prompts and optional labels embedded and
/// projected together. Each corpus is sampled down to `per_corpus` texts.
pub fn project_csv(
    records: &[EventRecord],
    labels: &[String],
    per_corpus: usize,
    seed: u64,
    out: impl Write,
) -> Result<(), ReportError> {
    let sessions = replay_all(records)?;
    let themes: Vec<String> = sessions.iter().map(|s| s.theme_phrase.clone()).collect();
    let corpora: Vec<(Corpus, Vec<String>)> = [
        (Corpus::Themes, themes),
        (Corpus::Prompts, prompt_texts(&sessions)),
        (Corpus::Labels, labels.to_vec()),
    ]
    .into_iter()
    .enumerate()
    .map(|(i, (corpus, texts))| {
        let n = texts.len().min(per_corpus);
        let sample = sample_without_replacement(&texts, n, seed.wrapping_add(i as u64)).expect("n never exceeds the corpus");
        (corpus, sample)
    })
    .filter(|(_, texts)| !texts.is_empty())
    .collect();

    let mut w = csv::Writer::from_writer(out);
    w.write_record(["corpus", "x", "y"])?;
    if !corpora.is_empty() {
        let (points, _) = project_corpora(&corpora, &HashEmbedder::default())?;
        for p in points {
            w.write_record([
                p.source_corpus.as_str().to_string(),
                format!("{:.6}", p.coords[0]),
                format!("{:.6}", p.coords[1]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Default, PartialEq, Eq)]
pub struct Audit {
    pub sessions: usize,
    pub rounds: usize,
    pub clips: usize,
    pub events: usize,
    pub missing: Vec<ClipId>,
    pub corrupt: Vec<ClipId>,
}

impl Audit {
    pub fn is_clean(&self) -> bool {
        self.missing.is_empty() && self.corrupt.is_empty()
    }
}

/// Checks that every clip in the log has a stored blob whose content hash
/// matches its address and which decodes as a WAV.
pub fn audit(records: &[EventRecord], blobs: &BlobStore) -> Result<Audit, ReportError> {
    let sessions = replay_all(records)?;
    let mut report = Audit {
        sessions: sessions.len(),
        events: records.len(),
        ..Audit::default()
    };
    for s in &sessions {
        report.rounds += s.rounds.len();
        for (id, info) in &s.clips {
            report.clips += 1;
            let Some(hash) = &info.blob else {
                report.missing.push(*id);
                continue;
            };
            match blobs.get(hash)? {
                None => report.missing.push(*id),
                Some(bytes) if content_hash(&bytes) != *hash || decode_wav(&bytes).is_err() => report.corrupt.push(*id),
                Some(_) => {}
            }
        }
    }
    Ok(report)
}

