//! Transcript ingestion, token-budget slicing and contextual attributes.

mod context;
mod slicing;
mod tokenizer;
mod transcript;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use context::{attach_context, ContextRecord, ContextValue};
pub use slicing::{sample_slices, slice_debate, Slice};
pub use tokenizer::{segment_count, Tokenizer};
pub use transcript::{normalize_speaker, normalize_whitespace, parse_transcript};

pub const DEFAULT_TARGET_TOKENS: usize = 2500;
pub const DEFAULT_OVERLAP: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Party {
    Democratic,
    Republican,
    Other,
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Party::Democratic => "Democratic",
            Party::Republican => "Republican",
            Party::Other => "Other",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: String,
    pub text: String,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Debate {
    pub id: String,
    pub year: i32,
    pub turns: Vec<Turn>,
    pub total_electoral_votes: u64,
    pub total_popular_votes: u64,
    pub elected_party: Party,
}

impl Debate {
    /// Character offset of each turn in the canonical debate text (turn texts
    /// joined by a single newline), plus the total length as the last entry.
    pub fn turn_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.turns.len() + 1);
        let mut at = 0;
        for (i, turn) in self.turns.iter().enumerate() {
            if i > 0 {
                at += 1;
            }
            offsets.push(at);
            at += turn.text.chars().count();
        }
        offsets.push(at);
        offsets
    }

    pub fn text(&self) -> String {
        self.turns
            .iter()
            .map(|t| t.text.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    President,
    VicePresident,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub speaker: String,
    pub party: Party,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartyResult {
    pub party: Party,
    pub electoral_votes: u64,
    pub popular_votes: u64,
}

/// Per-debate metadata file: debate identity, election outcome, candidate
/// roster and the speaker alias table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DebateMetadata {
    pub id: String,
    pub year: i32,
    pub elected_party: Party,
    pub total_electoral_votes: u64,
    pub total_popular_votes: u64,
    #[serde(default)]
    pub aliases: BTreeMap<String, String>,
    #[serde(default)]
    pub roster: Vec<RosterEntry>,
    #[serde(default)]
    pub results: Vec<PartyResult>,
}

impl DebateMetadata {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&raw).map_err(|e| Error::data(format!("{}: {e}", path.display())))
    }

    pub fn roster_entry(&self, speaker: &str) -> Option<&RosterEntry> {
        self.roster.iter().find(|r| r.speaker == speaker)
    }

    pub fn party_result(&self, party: Party) -> Option<&PartyResult> {
        self.results.iter().find(|r| r.party == party)
    }

    /// Canonical speaker name for a raw transcript label.
    pub fn resolve_speaker(&self, label: &str) -> String {
        let normalized = normalize_speaker(label);
        self.aliases
            .iter()
            .find(|(raw, _)| normalize_speaker(raw) == normalized)
            .map(|(_, canonical)| normalize_speaker(canonical))
            .unwrap_or(normalized)
    }
}
