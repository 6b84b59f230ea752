use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Debate, DebateMetadata, Party, Role, Slice};
use crate::error::{Error, Result};

/// Contextual attributes of one speaker within one slice.
///
/// Every field corresponds to exactly one contextual attribute of the
/// registry; [`ContextRecord::FIELD_NAMES`] lists them in declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextRecord {
    pub slice_id: String,
    pub debate_id: String,
    pub slice_size: usize,
    pub debate_year: i32,
    pub debate_total_electoral_votes: u64,
    pub debate_total_popular_votes: u64,
    pub debate_elected_party: Party,
    pub speaker: String,
    pub speaker_party: Party,
    pub speaker_quantitative_contribution: usize,
    pub speaker_quantitative_contribution_ratio: f64,
    pub speaker_num_parts: usize,
    pub speaker_avg_part_size: f64,
    pub speaker_electoral_votes: u64,
    pub speaker_electoral_votes_ratio: f64,
    pub speaker_popular_votes: u64,
    pub speaker_popular_votes_ratio: f64,
    pub speaker_won_election: u8,
    pub speaker_is_president_candidate: u8,
    pub speaker_is_vice_president_candidate: u8,
    pub speaker_is_candidate: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ContextValue {
    Text(String),
    Category(String),
    Integer(i64),
    Real(f64),
}

impl ContextRecord {
    pub const FIELD_NAMES: [&'static str; 21] = [
        "slice_id",
        "debate_id",
        "slice_size",
        "debate_year",
        "debate_total_electoral_votes",
        "debate_total_popular_votes",
        "debate_elected_party",
        "speaker",
        "speaker_party",
        "speaker_quantitative_contribution",
        "speaker_quantitative_contribution_ratio",
        "speaker_num_parts",
        "speaker_avg_part_size",
        "speaker_electoral_votes",
        "speaker_electoral_votes_ratio",
        "speaker_popular_votes",
        "speaker_popular_votes_ratio",
        "speaker_won_election",
        "speaker_is_president_candidate",
        "speaker_is_vice_president_candidate",
        "speaker_is_candidate",
    ];

    pub fn value(&self, field: &str) -> Option<ContextValue> {
        use ContextValue::*;
        let v = match field {
            "slice_id" => Text(self.slice_id.clone()),
            "debate_id" => Text(self.debate_id.clone()),
            "slice_size" => Integer(self.slice_size as i64),
            "debate_year" => Integer(self.debate_year as i64),
            "debate_total_electoral_votes" => Integer(self.debate_total_electoral_votes as i64),
            "debate_total_popular_votes" => Integer(self.debate_total_popular_votes as i64),
            "debate_elected_party" => Category(self.debate_elected_party.to_string()),
            "speaker" => Text(self.speaker.clone()),
            "speaker_party" => Category(self.speaker_party.to_string()),
            "speaker_quantitative_contribution" => Integer(self.speaker_quantitative_contribution as i64),
            "speaker_quantitative_contribution_ratio" => Real(self.speaker_quantitative_contribution_ratio),
            "speaker_num_parts" => Integer(self.speaker_num_parts as i64),
            "speaker_avg_part_size" => Real(self.speaker_avg_part_size),
            "speaker_electoral_votes" => Integer(self.speaker_electoral_votes as i64),
            "speaker_electoral_votes_ratio" => Real(self.speaker_electoral_votes_ratio),
            "speaker_popular_votes" => Integer(self.speaker_popular_votes as i64),
            "speaker_popular_votes_ratio" => Real(self.speaker_popular_votes_ratio),
            "speaker_won_election" => Integer(self.speaker_won_election as i64),
            "speaker_is_president_candidate" => Integer(self.speaker_is_president_candidate as i64),
            "speaker_is_vice_president_candidate" => Integer(self.speaker_is_vice_president_candidate as i64),
            "speaker_is_candidate" => Integer(self.speaker_is_candidate as i64),
            _ => return None,
        };
        Some(v)
    }
}

fn ratio(part: u64, total: u64) -> f64 {
    if total == 0 {
        0.0
    } else {
        part as f64 / total as f64
    }
}

/// One [`ContextRecord`] per speaker of `slice`, in order of first appearance.
///
/// Speakers missing from the roster are treated as non-candidates of party
/// `Other` with no votes.
pub fn attach_context(slice: &Slice, debate: &Debate, election: &DebateMetadata) -> Result<Vec<ContextRecord>> {
    if election.year != debate.year {
        return Err(Error::data(format!(
            "election metadata for {} does not cover debate year {}",
            election.year, debate.year
        )));
    }
    if slice.debate_id != debate.id {
        return Err(Error::data(format!(
            "slice {} does not belong to debate {}",
            slice.id, debate.id
        )));
    }

    let mut per_speaker: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (turn, &tokens) in slice.turns.iter().zip(&slice.turn_tokens) {
        let entry = per_speaker.entry(turn.speaker.as_str()).or_default();
        entry.0 += tokens;
        entry.1 += 1;
    }
    let total: usize = slice.turn_tokens.iter().sum();

    Ok(slice
        .speakers()
        .into_iter()
        .map(|speaker| {
            let (contribution, parts) = per_speaker[speaker];
            let roster = election.roster_entry(speaker);
            let party = roster.map_or(Party::Other, |r| r.party);
            let (electoral, popular) = match roster.and_then(|r| election.party_result(r.party)) {
                Some(res) => (res.electoral_votes, res.popular_votes),
                None => (0, 0),
            };
            let is_president = roster.is_some_and(|r| r.role == Role::President);
            let is_vice = roster.is_some_and(|r| r.role == Role::VicePresident);
            ContextRecord {
                slice_id: slice.id.clone(),
                debate_id: debate.id.clone(),
                slice_size: slice.target_tokens,
                debate_year: debate.year,
                debate_total_electoral_votes: debate.total_electoral_votes,
                debate_total_popular_votes: debate.total_popular_votes,
                debate_elected_party: debate.elected_party,
                speaker: speaker.to_string(),
                speaker_party: party,
                speaker_quantitative_contribution: contribution,
                speaker_quantitative_contribution_ratio: ratio(contribution as u64, total as u64),
                speaker_num_parts: parts,
                speaker_avg_part_size: contribution as f64 / parts as f64,
                speaker_electoral_votes: electoral,
                speaker_electoral_votes_ratio: ratio(electoral, debate.total_electoral_votes),
                speaker_popular_votes: popular,
                speaker_popular_votes_ratio: ratio(popular, debate.total_popular_votes),
                speaker_won_election: u8::from(roster.is_some() && party == debate.elected_party),
                speaker_is_president_candidate: u8::from(is_president),
                speaker_is_vice_president_candidate: u8::from(is_vice),
                speaker_is_candidate: u8::from(is_president || is_vice),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{PartyResult, RosterEntry, Turn};

    fn setup(turns: &[(&str, usize)]) -> (Slice, Debate, DebateMetadata) {
        let turns: Vec<Turn> = turns
            .iter()
            .enumerate()
            .map(|(i, (s, _))| Turn {
                speaker: s.to_string(),
                text: "x".into(),
                index: i,
            })
            .collect();
        let tokens: Vec<usize> = [600usize, 900, 900, 0].iter().copied().take(turns.len()).collect();
        let debate = Debate {
            id: "1960-1".into(),
            year: 1960,
            turns: turns.clone(),
            total_electoral_votes: 537,
            total_popular_votes: 1000,
            elected_party: Party::Democratic,
        };
        let slice = Slice {
            id: "1960-1#0".into(),
            debate_id: "1960-1".into(),
            target_tokens: 2500,
            token_count: tokens.iter().sum(),
            turn_tokens: tokens,
            turns,
            start: 0,
            end: 1,
            oversized: false,
        };
        let meta = DebateMetadata {
            id: "1960-1".into(),
            year: 1960,
            elected_party: Party::Democratic,
            total_electoral_votes: 537,
            total_popular_votes: 1000,
            aliases: Default::default(),
            roster: vec![
                RosterEntry {
                    speaker: "kennedy".into(),
                    party: Party::Democratic,
                    role: Role::President,
                },
                RosterEntry {
                    speaker: "nixon".into(),
                    party: Party::Republican,
                    role: Role::President,
                },
            ],
            results: vec![
                PartyResult {
                    party: Party::Democratic,
                    electoral_votes: 303,
                    popular_votes: 499,
                },
                PartyResult {
                    party: Party::Republican,
                    electoral_votes: 219,
                    popular_votes: 498,
                },
            ],
        };
        (slice, debate, meta)
    }

    #[test]
    fn quarter_contribution() {
        let (slice, debate, meta) = setup(&[("smith", 0), ("kennedy", 0), ("nixon", 0)]);
        let recs = attach_context(&slice, &debate, &meta).unwrap();
        assert_eq!(recs[0].speaker, "smith");
        assert_eq!(recs[0].speaker_quantitative_contribution, 600);
        assert_eq!(recs[0].speaker_quantitative_contribution_ratio, 0.25);
        assert_eq!(recs[0].speaker_party, Party::Other);
        assert_eq!(recs[0].speaker_is_candidate, 0);
        assert_eq!(recs[0].speaker_won_election, 0);
        assert_eq!(recs[1].speaker_won_election, 1);
        assert_eq!(recs[2].speaker_won_election, 0);
        assert_eq!(recs[2].speaker_electoral_votes, 219);
        let sum: f64 = recs.iter().map(|r| r.speaker_quantitative_contribution_ratio).sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_speaker() {
        let (slice, debate, meta) = setup(&[("nixon", 0), ("nixon", 0), ("nixon", 0)]);
        let recs = attach_context(&slice, &debate, &meta).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].speaker_quantitative_contribution_ratio, 1.0);
        assert_eq!(recs[0].speaker_num_parts, 3);
        assert_eq!(recs[0].speaker_avg_part_size, 800.0);
        assert_eq!(recs[0].speaker_is_president_candidate, 1);
    }

    #[test]
    fn year_mismatch() {
        let (slice, debate, mut meta) = setup(&[("nixon", 0)]);
        meta.year = 1964;
        assert!(attach_context(&slice, &debate, &meta).is_err());
    }

    #[test]
    fn every_field_has_a_value() {
        let (slice, debate, meta) = setup(&[("nixon", 0)]);
        let rec = &attach_context(&slice, &debate, &meta).unwrap()[0];
        for name in ContextRecord::FIELD_NAMES {
            assert!(rec.value(name).is_some(), "{name}");
        }
        let json = serde_json::to_value(rec).unwrap();
        assert_eq!(json.as_object().unwrap().len(), ContextRecord::FIELD_NAMES.len());
    }
}
