use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sequence-mixer families of the factorial matrix, in display order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Mla,
    Mha,
    Gqa,
    Mamba2,
    Gdn,
}

impl Architecture {
    pub const ALL: [Architecture; 5] = [
        Architecture::Mla,
        Architecture::Mha,
        Architecture::Gqa,
        Architecture::Mamba2,
        Architecture::Gdn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Mla => "mla",
            Architecture::Mha => "mha",
            Architecture::Gqa => "gqa",
            Architecture::Mamba2 => "mamba2",
            Architecture::Gdn => "gdn",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Architecture::ALL
            .into_iter()
            .find(|a| a.as_str() == norm)
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}

/// Data conditions, ordered from synthetic to familiar real text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Mock,
    Shuffled,
    Remapped,
    Romansh,
    Opus,
    Wikitext,
}

impl Condition {
    pub const ALL: [Condition; 6] = [
        Condition::Mock,
        Condition::Shuffled,
        Condition::Remapped,
        Condition::Romansh,
        Condition::Opus,
        Condition::Wikitext,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Mock => "mock",
            Condition::Shuffled => "shuffled",
            Condition::Remapped => "remapped",
            Condition::Romansh => "romansh",
            Condition::Opus => "opus",
            Condition::Wikitext => "wikitext",
        }
    }

    /// Unmodified natural-language text.
    pub fn is_real(self) -> bool {
        matches!(
            self,
            Condition::Romansh | Condition::Opus | Condition::Wikitext
        )
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase();
        Condition::ALL
            .into_iter()
            .find(|c| c.as_str() == norm)
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}
