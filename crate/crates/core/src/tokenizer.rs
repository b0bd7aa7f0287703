//! Token counting: whitespace splitting and byte-pair encoding.
//!
//! The BPE mode loads vocabulary files in the tiktoken interchange
//! format (`<base64 token bytes> <rank>` per line, the format the
//! `cl100k_base` vocabulary ships in) and applies standard rank-driven
//! byte-pair merging. Pre-tokenization follows a fixed rule set described
//! on [`pretokenize`]; it mirrors the GPT-style conventions of attaching
//! a single leading space to the following word and splitting digit runs
//! into groups of at most three.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read};
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("cannot count tokens of empty text")]
    EmptyText,
    #[error("vocab file line {line}: {reason}")]
    VocabLoad { line: u64, reason: String },
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("unknown tokenizer spec {0:?}: expected \"ws\" or \"bpe:<vocab-file>\"")]
    UnknownSpec(String),
}

/// Byte-pair-encoding vocabulary: token bytes to merge rank.
#[derive(Debug, Clone)]
pub struct BpeVocab {
    ranks: HashMap<Vec<u8>, u32>,
}

impl BpeVocab {
    /// Load a tiktoken-format vocabulary: one `<base64> <rank>` pair per
    /// line. Blank lines are ignored.
    pub fn from_reader(reader: impl Read) -> Result<Self, TokenizerError> {
        let mut ranks = HashMap::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line_no = i as u64 + 1;
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let (b64, rank_str) = trimmed.split_once(' ').ok_or(TokenizerError::VocabLoad {
                line: line_no,
                reason: "expected \"<base64> <rank>\"".into(),
            })?;
            let token = BASE64.decode(b64).map_err(|e| TokenizerError::VocabLoad {
                line: line_no,
                reason: format!("bad base64: {e}"),
            })?;
            let rank: u32 = rank_str.parse().map_err(|_| TokenizerError::VocabLoad {
                line: line_no,
                reason: format!("bad rank {rank_str:?}"),
            })?;
            if ranks.insert(token, rank).is_some() {
                return Err(TokenizerError::VocabLoad {
                    line: line_no,
                    reason: "duplicate token".into(),
                });
            }
        }
        if ranks.is_empty() {
            return Err(TokenizerError::VocabLoad {
                line: 0,
                reason: "empty vocabulary".into(),
            });
        }
        Ok(BpeVocab { ranks })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, TokenizerError> {
        BpeVocab::from_reader(File::open(path)?)
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    fn rank(&self, bytes: &[u8]) -> Option<u32> {
        self.ranks.get(bytes).copied()
    }

    /// Token count of one pre-tokenized piece under rank-driven merging.
    /// Bytes absent from the vocabulary count as one token each.
    fn count_piece(&self, piece: &str) -> u32 {
        let bytes = piece.as_bytes();
        if bytes.is_empty() {
            return 0;
        }
        if self.rank(bytes).is_some() {
            return 1;
        }
        // Boundaries of current parts: parts[i] spans bounds[i]..bounds[i+1].
        let mut bounds: Vec<usize> = (0..=bytes.len()).collect();
        loop {
            let mut best: Option<(u32, usize)> = None;
            for i in 0..bounds.len() - 2 {
                let candidate = &bytes[bounds[i]..bounds[i + 2]];
                if let Some(rank) = self.rank(candidate) {
                    if best.is_none_or(|(r, _)| rank < r) {
                        best = Some((rank, i));
                    }
                }
            }
            match best {
                Some((_, i)) => {
                    bounds.remove(i + 1);
                }
                None => break,
            }
        }
        (bounds.len() - 1) as u32
    }
}

/// Token counting backend.
pub enum Tokenizer {
    Whitespace,
    Bpe(BpeVocab),
}

impl Tokenizer {
    /// Parse a CLI tokenizer spec: `ws` or `bpe:<vocab-file>`.
    pub fn from_spec(spec: &str) -> Result<Self, TokenizerError> {
        if spec == "ws" || spec == "whitespace" {
            return Ok(Tokenizer::Whitespace);
        }
        if let Some(path) = spec.strip_prefix("bpe:") {
            return Ok(Tokenizer::Bpe(BpeVocab::from_file(path)?));
        }
        Err(TokenizerError::UnknownSpec(spec.to_string()))
    }

    pub fn describe(&self) -> String {
        match self {
            Tokenizer::Whitespace => "whitespace".to_string(),
            Tokenizer::Bpe(v) => format!("bpe({} tokens)", v.len()),
        }
    }

    /// Exact token count of non-empty text.
    pub fn count(&self, text: &str) -> Result<u32, TokenizerError> {
        if text.is_empty() {
            return Err(TokenizerError::EmptyText);
        }
        Ok(match self {
            Tokenizer::Whitespace => text.split_whitespace().count() as u32,
            Tokenizer::Bpe(vocab) => pretokenize(text)
                .into_iter()
                .map(|piece| vocab.count_piece(piece))
                .sum(),
        })
    }
}

/// Split text into BPE pre-tokenization pieces.
///
/// Scanning left to right, the first matching rule wins:
///
/// 1. a single space followed by a letter: the space plus the maximal
///    letter run;
/// 2. a single space followed by a digit: the space plus at most three
///    digits;
/// 3. a single space followed by any other non-whitespace: the space plus
///    the maximal run of non-whitespace, non-letter, non-digit characters;
/// 4. a letter: the maximal letter run;
/// 5. a digit: at most three digits;
/// 6. other non-whitespace: the maximal run of such characters;
/// 7. whitespace: the maximal whitespace run, except that a final space
///    directly before non-whitespace is left for rules 1-3.
///
/// Letters, digits, and whitespace use the Unicode `is_alphabetic`,
/// `is_numeric`, and `is_whitespace` classes.
pub fn pretokenize(text: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let n = chars.len();
    let mut pieces = Vec::new();
    let mut i = 0;
    let byte_end = |idx: usize| -> usize {
        if idx < n {
            chars[idx].0
        } else {
            text.len()
        }
    };
    while i < n {
        let (start, c) = chars[i];
        let next_class = |j: usize| chars.get(j).map(|&(_, c)| classify(c));
        if c == ' '
            && matches!(
                next_class(i + 1),
                Some(Class::Letter | Class::Digit | Class::Other)
            )
        {
            let class = next_class(i + 1).expect("checked");
            let mut j = i + 1;
            let limit = if class == Class::Digit { 3 } else { usize::MAX };
            let mut taken = 0;
            while j < n && classify(chars[j].1) == class && taken < limit {
                j += 1;
                taken += 1;
            }
            pieces.push(&text[start..byte_end(j)]);
            i = j;
            continue;
        }
        match classify(c) {
            Class::Letter | Class::Other => {
                let class = classify(c);
                let mut j = i;
                while j < n && classify(chars[j].1) == class {
                    j += 1;
                }
                pieces.push(&text[start..byte_end(j)]);
                i = j;
            }
            Class::Digit => {
                let mut j = i;
                while j < n && classify(chars[j].1) == Class::Digit && j - i < 3 {
                    j += 1;
                }
                pieces.push(&text[start..byte_end(j)]);
                i = j;
            }
            Class::Whitespace => {
                let mut j = i;
                while j < n && classify(chars[j].1) == Class::Whitespace {
                    j += 1;
                }
                // Leave a trailing space for the following word; a single
                // space before non-whitespace was already rules 1-3.
                if j < n && chars[j - 1].1 == ' ' && j - i > 1 {
                    j -= 1;
                }
                pieces.push(&text[start..byte_end(j)]);
                i = j;
            }
        }
    }
    pieces
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    Letter,
    Digit,
    Whitespace,
    Other,
}

fn classify(c: char) -> Class {
    if c.is_whitespace() {
        Class::Whitespace
    } else if c.is_alphabetic() {
        Class::Letter
    } else if c.is_numeric() {
        Class::Digit
    } else {
        Class::Other
    }
}
