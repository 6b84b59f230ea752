use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Debate, Tokenizer, Turn};
use crate::error::{Error, Result};

/// A window of consecutive turns sized by a token budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub id: String,
    pub debate_id: String,
    pub target_tokens: usize,
    pub turns: Vec<Turn>,
    /// Token count of each turn, aligned with `turns`.
    pub turn_tokens: Vec<usize>,
    pub token_count: usize,
    /// Character offsets into [`Debate::text`].
    pub start: usize,
    pub end: usize,
    /// Set when a single turn exceeds the budget and forms its own slice.
    pub oversized: bool,
}

impl Slice {
    pub fn first_turn(&self) -> usize {
        self.turns.first().map(|t| t.index).unwrap_or(0)
    }

    /// One past the index of the last turn.
    pub fn end_turn(&self) -> usize {
        self.turns.last().map(|t| t.index + 1).unwrap_or(0)
    }

    pub fn speakers(&self) -> Vec<&str> {
        let mut seen: Vec<&str> = Vec::new();
        for t in &self.turns {
            if !seen.contains(&t.speaker.as_str()) {
                seen.push(&t.speaker);
            }
        }
        seen
    }

    /// Transcript rendering used inside prompts.
    pub fn render(&self) -> String {
        self.turns
            .iter()
            .map(|t| format!("{}: {}", t.speaker.to_uppercase(), t.text))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Cut a debate into overlapping slices at turn boundaries.
///
/// Turns are accumulated greedily while the running total stays within
/// `target_tokens`. The next slice starts at the latest turn boundary at or
/// before `end - overlap * target_tokens`, and always at least one turn after
/// the previous start; the overlap shrinks when the following turn would not
/// fit beside it. The final slice is extended backwards (never past the
/// previous start) so it fills the budget. A turn longer than the budget is
/// emitted alone with `oversized` set.
pub fn slice_debate(debate: &Debate, target_tokens: usize, overlap: f64, tokenizer: Tokenizer) -> Result<Vec<Slice>> {
    if target_tokens == 0 {
        return Err(Error::Config("target_tokens must be positive".into()));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::Config(format!("overlap {overlap} outside [0, 1)")));
    }
    let n = debate.turns.len();
    if n == 0 {
        return Ok(Vec::new());
    }

    let tokens: Vec<usize> = debate.turns.iter().map(|t| tokenizer.count(&t.text)).collect();
    let mut prefix = vec![0usize; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + tokens[i];
    }
    let offsets = debate.turn_offsets();

    let mut ranges: Vec<(usize, usize, bool)> = Vec::new();
    let mut start = 0;
    let mut prev_start: Option<usize> = None;
    loop {
        let mut end = start;
        while end < n && prefix[end + 1] - prefix[start] <= target_tokens {
            end += 1;
        }
        let oversized = end == start;
        if oversized {
            end = start + 1;
        }
        if end == n && !oversized {
            let floor = prev_start.map_or(0, |p| p + 1);
            while start > floor && prefix[n] - prefix[start - 1] <= target_tokens {
                start -= 1;
            }
        }
        ranges.push((start, end, oversized));
        if end == n {
            break;
        }

        let anchor = prefix[end] as f64 - overlap * target_tokens as f64;
        let mut next = (start + 1..=end)
            .rev()
            .find(|&b| prefix[b] as f64 <= anchor)
            .unwrap_or(start + 1);
        // The next slice must reach past `end`; shrink the overlap until turn
        // `end` fits beside it.
        while next < end && prefix[end + 1] - prefix[next] > target_tokens {
            next += 1;
        }
        prev_start = Some(start);
        start = next;
    }

    Ok(ranges
        .into_iter()
        .enumerate()
        .map(|(k, (s, e, oversized))| Slice {
            id: format!("{}#{k}", debate.id),
            debate_id: debate.id.clone(),
            target_tokens,
            turns: debate.turns[s..e].to_vec(),
            turn_tokens: tokens[s..e].to_vec(),
            token_count: prefix[e] - prefix[s],
            start: offsets[s],
            end: offsets[e - 1] + debate.turns[e - 1].text.chars().count(),
            oversized,
        })
        .collect())
}

/// Seeded uniform sample of `n` slice ids without replacement, returned in
/// corpus order.
pub fn sample_slices(ids: &[String], n: usize, seed: u64) -> Result<Vec<String>> {
    if n > ids.len() {
        return Err(Error::data(format!("cannot sample {n} slices from {}", ids.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, ids.len(), n).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| ids[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Party;
    use proptest::prelude::*;

    fn debate_with(words_per_turn: &[usize]) -> Debate {
        let turns = words_per_turn
            .iter()
            .enumerate()
            .map(|(i, &w)| Turn {
                speaker: if i % 2 == 0 { "a".into() } else { "b".into() },
                text: vec!["w"; w].join(" "),
                index: i,
            })
            .collect();
        Debate {
            id: "d".into(),
            year: 1960,
            turns,
            total_electoral_votes: 0,
            total_popular_votes: 0,
            elected_party: Party::Other,
        }
    }

    fn turn_ranges(slices: &[Slice]) -> Vec<(usize, usize)> {
        slices.iter().map(|s| (s.first_turn(), s.end_turn())).collect()
    }

    #[test]
    fn empty_debate() {
        let d = debate_with(&[]);
        assert!(slice_debate(&d, 2500, 0.1, Tokenizer::Approx).unwrap().is_empty());
    }

    #[test]
    fn ten_turns_of_five_hundred() {
        // 375 words -> 500 approx tokens
        let d = debate_with(&[375; 10]);
        let slices = slice_debate(&d, 2500, 0.1, Tokenizer::Approx).unwrap();
        assert!(slices.iter().all(|s| s.turns.len() == 5));
        assert!(slices.iter().all(|s| s.token_count == 2500));
        assert_eq!(turn_ranges(&slices), [(0, 5), (4, 9), (5, 10)]);
        // the first pair shares exactly one turn
        assert_eq!(slices[0].end_turn() - slices[1].first_turn(), 1);
        assert_eq!(slices[1].id, "d#1");
    }

    #[test]
    fn nine_turns_share_one_turn() {
        let d = debate_with(&[375; 9]);
        let slices = slice_debate(&d, 2500, 0.1, Tokenizer::Approx).unwrap();
        assert_eq!(turn_ranges(&slices), [(0, 5), (4, 9)]);
    }

    #[test]
    fn oversized_turn_is_flagged() {
        let d = debate_with(&[30, 3000, 30]);
        let slices = slice_debate(&d, 100, 0.1, Tokenizer::Approx).unwrap();
        assert_eq!(turn_ranges(&slices), [(0, 1), (1, 2), (2, 3)]);
        assert!(!slices[0].oversized);
        assert!(slices[1].oversized);
        assert_eq!(slices[1].token_count, 4000);
    }

    #[test]
    fn short_debate_is_one_slice() {
        let d = debate_with(&[10, 10, 10]);
        let slices = slice_debate(&d, 2500, 0.1, Tokenizer::Approx).unwrap();
        assert_eq!(turn_ranges(&slices), [(0, 3)]);
        assert_eq!(slices[0].start, 0);
        assert_eq!(slices[0].end, d.text().chars().count());
    }

    #[test]
    fn bad_parameters() {
        let d = debate_with(&[1]);
        assert!(slice_debate(&d, 0, 0.1, Tokenizer::Approx).is_err());
        assert!(slice_debate(&d, 10, 1.0, Tokenizer::Approx).is_err());
    }

    #[test]
    fn offsets_index_canonical_text() {
        let d = debate_with(&[20, 20, 20, 20, 20, 20]);
        let text: Vec<char> = d.text().chars().collect();
        for s in slice_debate(&d, 60, 0.1, Tokenizer::Approx).unwrap() {
            let window: String = text[s.start..s.end].iter().collect();
            let expected: Vec<_> = s.turns.iter().map(|t| t.text.as_str()).collect();
            assert_eq!(window, expected.join("\n"));
        }
    }

    #[test]
    fn sampling_is_seeded() {
        let ids: Vec<String> = (0..419).map(|i| format!("s{i}")).collect();
        let a = sample_slices(&ids, 150, 42).unwrap();
        let b = sample_slices(&ids, 150, 42).unwrap();
        assert_eq!(a.len(), 150);
        assert_eq!(a, b);
        assert_ne!(a, sample_slices(&ids, 150, 43).unwrap());
        assert!(sample_slices(&ids, 500, 1).is_err());
    }

    proptest! {
        #[test]
        fn slicing_invariants(
            words in prop::collection::vec(prop_oneof![9 => 1usize..200, 1 => 400usize..1200], 1..60),
            target in 100usize..2000,
            overlap in 0.0f64..0.5,
        ) {
            let d = debate_with(&words);
            let tokens: Vec<usize> = d.turns.iter().map(|t| Tokenizer::Approx.count(&t.text)).collect();
            let max_turn = *tokens.iter().max().unwrap();
            let total: usize = tokens.iter().sum();
            let slices = slice_debate(&d, target, overlap, Tokenizer::Approx).unwrap();

            // coverage: every turn once, in order, after deduplicating overlaps
            let mut seen: Vec<usize> = Vec::new();
            for s in &slices {
                prop_assert_eq!(s.turns.len(), s.end_turn() - s.first_turn());
                for t in &s.turns {
                    if seen.last().is_none_or(|&l| t.index > l) {
                        seen.push(t.index);
                    }
                }
            }
            prop_assert_eq!(seen, (0..d.turns.len()).collect::<Vec<_>>());

            // token budget, oversized slices and short debates aside
            for s in slices.iter().filter(|s| !s.oversized) {
                if slices.len() == 1 && total < target {
                    continue;
                }
                prop_assert!(s.token_count + max_turn >= target && s.token_count <= target + max_turn);
            }

            // overlap at turn boundaries
            for w in slices.windows(2) {
                let (a, b) = (&w[0], &w[1]);
                prop_assert!(b.first_turn() > a.first_turn());
                prop_assert!(b.first_turn() <= a.end_turn() && b.end_turn() > a.end_turn());
                let shared = &tokens[b.first_turn()..a.end_turn()];
                let largest = shared.iter().copied().max().unwrap_or(0) as f64;
                prop_assert!(shared.iter().sum::<usize>() as f64 >= (overlap * target as f64).min(largest));
            }

            prop_assert_eq!(slice_debate(&d, target, overlap, Tokenizer::Approx).unwrap(), slices);
        }
    }
}
