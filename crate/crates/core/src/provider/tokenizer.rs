//! Deterministic token counting.
//!
//! `wordpunct-v1` (default, approximate): every maximal run of alphanumeric
//! characters is one token, every other non-whitespace character is one
//! token, whitespace is free. Counts are therefore additive over
//! whitespace-separated concatenation.
//!
//! `chars4`: `ceil(chars / 4)` over all characters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SCHEME: &str = "wordpunct-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TokenScheme {
    #[default]
    #[serde(rename = "wordpunct-v1")]
    WordPunct,
    #[serde(rename = "chars4")]
    Chars4,
}

impl TokenScheme {
    pub fn named(name: &str) -> Result<Self> {
        match name {
            "wordpunct-v1" => Ok(TokenScheme::WordPunct),
            "chars4" => Ok(TokenScheme::Chars4),
            other => Err(Error::usage(format!("unknown token scheme {other:?}"))),
        }
    }

    pub fn count(self, text: &str) -> usize {
        match self {
            TokenScheme::WordPunct => {
                let mut count = 0;
                let mut in_word = false;
                for c in text.chars() {
                    if c.is_alphanumeric() {
                        if !in_word {
                            count += 1;
                            in_word = true;
                        }
                    } else {
                        in_word = false;
                        if !c.is_whitespace() {
                            count += 1;
                        }
                    }
                }
                count
            }
            TokenScheme::Chars4 => text.chars().count().div_ceil(4),
        }
    }
}

pub fn count_tokens(text: &str, scheme: &str) -> Result<usize> {
    Ok(TokenScheme::named(scheme)?.count(text))
}
