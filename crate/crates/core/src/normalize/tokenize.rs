use serde::{Deserialize, Serialize};

use super::TokenizerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Splitter {
    /// split on whitespace only
    Whitespace,
    /// split on anything that is not a letter or digit
    WhitespacePunctuation,
}

/// Split `value` into tokens. Empty input gives no tokens.
pub fn tokenize(value: &str, cfg: &TokenizerConfig) -> Vec<String> {
    let pieces: Vec<&str> = match cfg.splitter {
        Splitter::Whitespace => value.split_whitespace().collect(),
        Splitter::WhitespacePunctuation => value
            .split(|c: char| !c.is_alphanumeric())
            .filter(|s| !s.is_empty())
            .collect(),
    };
    let mut out = Vec::with_capacity(pieces.len());
    for piece in pieces {
        if cfg.split_camel_case {
            split_camel(piece, &mut out);
        } else {
            out.push(piece.to_string());
        }
    }
    if cfg.lowercase {
        for t in &mut out {
            *t = t.to_lowercase();
        }
    }
    out
}

/// `PseudoState` -> `Pseudo`, `State`; `XMLParser` -> `XML`, `Parser`.
fn split_camel(s: &str, out: &mut Vec<String>) {
    let chars: Vec<char> = s.chars().collect();
    let mut start = 0;
    for i in 1..chars.len() {
        let prev = chars[i - 1];
        let cur = chars[i];
        let lower_to_upper = (prev.is_lowercase() || prev.is_ascii_digit()) && cur.is_uppercase();
        let acronym_end = prev.is_uppercase()
            && cur.is_uppercase()
            && chars.get(i + 1).is_some_and(|n| n.is_lowercase());
        if lower_to_upper || acronym_end {
            out.push(chars[start..i].iter().collect());
            start = i;
        }
    }
    if start < chars.len() {
        out.push(chars[start..].iter().collect());
    }
}
