use std::sync::OnceLock;

use regex::Regex;
use serde::Deserialize;

use super::{Debate, DebateMetadata, Turn};
use crate::error::{Error, Result};

const MAX_LABEL_CHARS: usize = 48;

fn label_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| Regex::new(r"^\s*([A-Z][A-Z0-9 .'\-]*?)\s*:(.*)$").expect("valid label pattern"))
}

/// Collapse every whitespace run to one space and trim the ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Case-fold a speaker label and drop punctuation.
pub fn normalize_speaker(label: &str) -> String {
    let folded: String = label
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    normalize_whitespace(&folded)
}

#[derive(Deserialize)]
struct JsonTurn {
    speaker: String,
    text: String,
}

/// Parse a transcript in either supported form.
///
/// The text form has one turn per non-blank line, each starting with an
/// upper-case `LABEL:`. A JSON document starting with `[` is read as a list of
/// `{"speaker", "text"}` objects.
pub fn parse_transcript(raw: &str, meta: &DebateMetadata) -> Result<Debate> {
    if raw.trim().is_empty() {
        return Err(Error::EmptyTranscript);
    }
    check_year(meta.year)?;

    let turns = if raw.trim_start().starts_with('[') {
        parse_json(raw, meta)?
    } else {
        parse_text(raw, meta)?
    };

    Ok(Debate {
        id: meta.id.clone(),
        year: meta.year,
        turns,
        total_electoral_votes: meta.total_electoral_votes,
        total_popular_votes: meta.total_popular_votes,
        elected_party: meta.elected_party,
    })
}

fn parse_text(raw: &str, meta: &DebateMetadata) -> Result<Vec<Turn>> {
    let mut turns = Vec::new();
    for (n, line) in raw.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let caps = label_pattern().captures(line).ok_or_else(|| Error::Parse {
            line: line_no,
            message: format!("no speaker label in `{}`", preview(line)),
        })?;
        let label = &caps[1];
        if label.chars().count() > MAX_LABEL_CHARS || !label.chars().any(char::is_alphabetic) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("invalid speaker label `{label}`"),
            });
        }
        let text = normalize_whitespace(&caps[2]);
        if text.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("empty turn for speaker `{label}`"),
            });
        }
        let speaker = meta.resolve_speaker(label);
        turns.push(Turn {
            speaker,
            text,
            index: turns.len(),
        });
    }
    Ok(turns)
}

fn parse_json(raw: &str, meta: &DebateMetadata) -> Result<Vec<Turn>> {
    let items: Vec<JsonTurn> = serde_json::from_str(raw).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    if items.is_empty() {
        return Err(Error::EmptyTranscript);
    }
    let mut turns = Vec::with_capacity(items.len());
    for (i, item) in items.into_iter().enumerate() {
        let speaker = meta.resolve_speaker(&item.speaker);
        let text = normalize_whitespace(&item.text);
        if speaker.is_empty() || text.is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                message: "turn with empty speaker or text".into(),
            });
        }
        turns.push(Turn {
            speaker,
            text,
            index: i,
        });
    }
    Ok(turns)
}

fn check_year(year: i32) -> Result<()> {
    let now = current_year();
    if !(1960..=now).contains(&year) {
        return Err(Error::data(format!("debate year {year} outside [1960, {now}]")));
    }
    Ok(())
}

fn current_year() -> i32 {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    1970 + (secs / 31_556_952) as i32
}

fn preview(line: &str) -> String {
    let mut s: String = line.chars().take(40).collect();
    if line.chars().count() > 40 {
        s.push('…');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Party;
    use std::collections::BTreeMap;

    fn meta() -> DebateMetadata {
        DebateMetadata {
            id: "test".into(),
            year: 1960,
            elected_party: Party::Democratic,
            total_electoral_votes: 537,
            total_popular_votes: 68_838_219,
            aliases: BTreeMap::from([("MR. NIXON".to_string(), "nixon".to_string())]),
            roster: vec![],
            results: vec![],
        }
    }

    #[test]
    fn two_line_fixture() {
        let d = parse_transcript("SMITH: Hello.\nJONES: Hi.", &meta()).unwrap();
        let speakers: Vec<_> = d.turns.iter().map(|t| t.speaker.as_str()).collect();
        assert_eq!(speakers, ["smith", "jones"]);
        assert_eq!(d.turns[1].text, "Hi.");
        assert_eq!(d.turns[1].index, 1);
    }

    #[test]
    fn missing_label_names_line() {
        let err = parse_transcript("SMITH: Hello.\n\nthis line has no label\n", &meta()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lowercase_prefix_is_not_a_label() {
        assert!(parse_transcript("He said: hello", &meta()).is_err());
    }

    #[test]
    fn empty_input() {
        assert!(matches!(
            parse_transcript("  \n\n", &meta()),
            Err(Error::EmptyTranscript)
        ));
    }

    #[test]
    fn aliases_and_normalization() {
        let d = parse_transcript("MR. NIXON:  Well,\tthank you.\nNIXON: Again.", &meta()).unwrap();
        assert_eq!(d.turns[0].speaker, "nixon");
        assert_eq!(d.turns[1].speaker, "nixon");
        assert_eq!(d.turns[0].text, "Well, thank you.");
        assert_eq!(normalize_speaker("Sen. J.F. KENNEDY"), "sen j f kennedy");
    }

    #[test]
    fn json_form() {
        let raw = r#"[{"speaker": "MR. NIXON", "text": "Yes."}, {"speaker": "Smith", "text": " No. "}]"#;
        let d = parse_transcript(raw, &meta()).unwrap();
        assert_eq!(d.turns.len(), 2);
        assert_eq!(d.turns[0].speaker, "nixon");
        assert_eq!(d.turns[1].text, "No.");
    }

    #[test]
    fn year_out_of_range() {
        let mut m = meta();
        m.year = 1952;
        assert!(parse_transcript("A: b", &m).is_err());
    }

    #[test]
    fn concatenation_preserves_content() {
        let raw = "A: one two\nB: three\n\nA: four.";
        let d = parse_transcript(raw, &meta()).unwrap();
        let joined: Vec<_> = d.turns.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(joined.join(" "), "one two three four.");
    }
}
