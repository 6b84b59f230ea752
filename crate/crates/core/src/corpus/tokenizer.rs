use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Registered token counters.
///
/// `Approx` is the default: every maximal alphanumeric run and every other
/// non-whitespace character is one segment, and the segment count is scaled
/// by 4/3 and rounded up. `Cl100k` is the exact byte-pair encoding used by the
/// gpt-3.5/gpt-4 model family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tokenizer {
    #[default]
    Approx,
    Cl100k,
}

impl Tokenizer {
    pub const NAMES: [&'static str; 2] = ["approx", "cl100k"];

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "approx" => Ok(Tokenizer::Approx),
            "cl100k" | "cl100k_base" => Ok(Tokenizer::Cl100k),
            other => Err(Error::Config(format!(
                "unknown tokenizer `{other}` (known: {})",
                Self::NAMES.join(", ")
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Tokenizer::Approx => "approx",
            Tokenizer::Cl100k => "cl100k",
        }
    }

    pub fn count(&self, text: &str) -> usize {
        match self {
            Tokenizer::Approx => approx_tokens(segment_count(text)),
            Tokenizer::Cl100k => tiktoken_rs::cl100k_base_singleton().encode_ordinary(text).len(),
        }
    }
}

/// Number of word and punctuation segments in `text`.
pub fn segment_count(text: &str) -> usize {
    let mut count = 0;
    let mut in_word = false;
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            if !in_word {
                count += 1;
                in_word = true;
            }
        } else {
            in_word = false;
            if !ch.is_whitespace() {
                count += 1;
            }
        }
    }
    count
}

fn approx_tokens(segments: usize) -> usize {
    (segments * 4).div_ceil(3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_is_zero() {
        assert_eq!(Tokenizer::Approx.count(""), 0);
        assert_eq!(Tokenizer::Cl100k.count(""), 0);
    }

    #[test]
    fn hello_world() {
        // two segments * 4/3 = 2.67 -> 3
        assert_eq!(Tokenizer::Approx.count("hello world"), 3);
        // punctuation counts as its own segment
        assert_eq!(segment_count("Hello, world!"), 4);
    }

    #[test]
    fn seven_hundred_fifty_words() {
        let paragraph = vec!["word"; 750].join(" ");
        assert_eq!(Tokenizer::Approx.count(&paragraph), 1000);
    }

    #[test]
    fn unknown_tokenizer() {
        assert!(matches!(Tokenizer::from_name("gpt2"), Err(Error::Config(_))));
        assert_eq!(Tokenizer::from_name("approx").unwrap(), Tokenizer::Approx);
    }

    #[test]
    fn cl100k_is_exact_bpe() {
        assert_eq!(Tokenizer::Cl100k.count("hello world"), 2);
    }

    proptest! {
        #[test]
        fn subadditive(a in "\\PC{0,60}", b in "\\PC{0,60}") {
            let t = Tokenizer::Approx;
            let joined = format!("{a}{b}");
            prop_assert!(t.count(&joined) <= t.count(&a) + t.count(&b) + 1);
        }
    }
}
