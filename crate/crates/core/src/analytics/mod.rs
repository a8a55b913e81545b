//! Offline analyses over the event log: theme-term frequencies, text
//! embeddings projected to two dimensions, and journey transition counts.

mod embed;
mod pca;
mod sampling;
mod terms;
mod transitions;

pub use embed::{hash_embed, Embedder, HashEmbedder, DEFAULT_EMBED_DIM};
pub use pca::{pca_project, reconstruction_error, PcaError, PcaProjection};
pub use sampling::{sample_without_replacement, SampleError};
pub use terms::{default_stopwords, term_frequencies, tokenize, TermCount, STOPWORDS};
pub use transitions::{journeys_from_records, transition_counts, Action, Journey, TransitionTable};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Corpus {
    Themes,
    Prompts,
    Labels,
}

impl Corpus {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Themes => "themes",
            Self::Prompts => "prompts",
            Self::Labels => "labels",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub source_corpus: Corpus,
    pub coords: [f64; 2],
}

/// Embeds every text of every corpus and projects them jointly onto the top
/// two principal components.
pub fn project_corpora(
    corpora: &[(Corpus, Vec<String>)],
    embedder: &dyn Embedder,
) -> Result<(Vec<ProjectedPoint>, PcaProjection), PcaError> {
    let tagged: Vec<(Corpus, Vec<f64>)> = corpora
        .iter()
        .flat_map(|(corpus, texts)| texts.iter().map(move |t| (*corpus, embedder.embed(t))))
        .collect();
    let vectors: Vec<Vec<f64>> = tagged.iter().map(|(_, v)| v.clone()).collect();
    let projection = pca_project(&vectors)?;
    let points = tagged
        .iter()
        .zip(&projection.coords)
        .map(|((corpus, _), coords)| ProjectedPoint {
            source_corpus: *corpus,
            coords: *coords,
        })
        .collect();
    Ok((points, projection))
}
