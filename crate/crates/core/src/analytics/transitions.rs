use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::eventlog::{replay_records, EventLogError, EventRecord};
use crate::exploration::{EdgeKind, SessionEvent};

/// Nodes of the journey flow diagram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    Start,
    PromptEdit,
    PriorSelection,
    Download,
    Share,
    Stop,
}

impl Action {
    pub const ALL: [Action; 6] = [
        Action::Start,
        Action::PromptEdit,
        Action::PriorSelection,
        Action::Download,
        Action::Share,
        Action::Stop,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Start => "start",
            Self::PromptEdit => "prompt-edit",
            Self::PriorSelection => "prior-selection",
            Self::Download => "download",
            Self::Share => "share",
            Self::Stop => "stop",
        }
    }

    /// Actions contributed by one constraint edge. An edge that both edits a
    /// prompt and selects a prior counts as the two steps in that order.
    pub fn from_edge(kind: EdgeKind) -> &'static [Action] {
        match kind {
            EdgeKind::PromptEdit => &[Action::PromptEdit],
            EdgeKind::PriorSelection => &[Action::PriorSelection],
            EdgeKind::Both => &[Action::PromptEdit, Action::PriorSelection],
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One session's path: refinement steps followed by a terminal action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Journey {
    pub steps: Vec<Action>,
    pub terminal: Action,
}

impl Journey {
    pub fn new(steps: Vec<Action>, terminal: Action) -> Self {
        Self { steps, terminal }
    }

    /// Start, steps, terminal.
    pub fn path(&self) -> impl Iterator<Item = Action> + '_ {
        std::iter::once(Action::Start)
            .chain(self.steps.iter().copied())
            .chain(std::iter::once(self.terminal))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TransitionTable {
    pub edges: BTreeMap<(Action, Action), u64>,
}

impl TransitionTable {
    pub fn get(&self, from: Action, to: Action) -> u64 {
        self.edges.get(&(from, to)).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.edges.values().sum()
    }

    /// Sum of counts leaving `from`.
    pub fn outflow(&self, from: Action) -> u64 {
        self.edges.iter().filter(|((f, _), _)| *f == from).map(|(_, c)| c).sum()
    }

    /// Non-zero edges in (from, to) order.
    pub fn rows(&self) -> impl Iterator<Item = (Action, Action, u64)> + '_ {
        self.edges.iter().filter(|(_, &c)| c > 0).map(|(&(f, t), &c)| (f, t, c))
    }
}

/// Counts consecutive pairs along every journey's start-to-terminal path.
pub fn transition_counts(journeys: &[Journey]) -> TransitionTable {
    let mut table = TransitionTable::default();
    for journey in journeys {
        let path: Vec<Action> = journey.path().collect();
        for pair in path.windows(2) {
            *table.edges.entry((pair[0], pair[1])).or_default() += 1;
        }
    }
    table
}

/// Reconstructs one journey per session, in session creation order.
///
/// Steps come from the constraint edges of the session's rounds in the order
/// they were opened. The terminal is the last download or share recorded
/// for the session, or stop when there is none.
pub fn journeys_from_records(records: &[EventRecord]) -> Result<Vec<Journey>, EventLogError> {
    let sessions: Vec<_> = records
        .iter()
        .filter(|r| matches!(r.event, SessionEvent::SessionCreated { .. }))
        .map(|r| r.session_id)
        .collect();

    sessions
        .into_iter()
        .map(|id| {
            let session = replay_records(records, id)?;
            let steps = session
                .rounds
                .values()
                .filter_map(|r| r.edge.as_ref())
                .flat_map(|e| Action::from_edge(e.kind).iter().copied())
                .collect();
            let terminal = records
                .iter()
                .rev()
                .filter(|r| r.session_id == id)
                .find_map(|r| match r.event {
                    SessionEvent::ClipDownloaded { .. } => Some(Action::Download),
                    SessionEvent::ClipShared { .. } => Some(Action::Share),
                    _ => None,
                })
                .unwrap_or(Action::Stop);
            Ok(Journey::new(steps, terminal))
        })
        .collect()
}
