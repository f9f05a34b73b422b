use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered from least to most concentrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLabel {
    DataResilient,
    Mixed,
    PersistentlyConcentrated,
}

impl ClassLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::DataResilient => "data_resilient",
            ClassLabel::Mixed => "mixed",
            ClassLabel::PersistentlyConcentrated => "persistently_concentrated",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            ClassLabel::DataResilient,
            ClassLabel::Mixed,
            ClassLabel::PersistentlyConcentrated,
        ]
        .into_iter()
        .find(|c| c.as_str() == s)
        .ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}

/// Band edges of the two-class rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassThresholds {
    /// Resilient needs real-text Gini strictly below this.
    pub resilient_real_max: f64,
    /// ... and a mock/real ratio at least this.
    pub resilient_ratio_min: f64,
    /// Persistent needs real-text Gini strictly above this.
    pub persistent_real_min: f64,
    /// ... and a mock/real ratio strictly below this.
    pub persistent_ratio_max: f64,
}

impl Default for ClassThresholds {
    fn default() -> Self {
        Self {
            resilient_real_max: 0.20,
            resilient_ratio_min: 2.0,
            persistent_real_min: 0.24,
            persistent_ratio_max: 1.6,
        }
    }
}

/// Assigns a class from mock-data and real-text Gini.
///
/// A real-text Gini of exactly 0 means routing is perfectly balanced on real
/// data whatever mock does, which is the resilient end of the scale; the
/// ratio is then not evaluated.
pub fn classify(mock_gini: f64, real_gini: f64, th: &ClassThresholds) -> Result<ClassLabel> {
    for (name, v) in [("mock_gini", mock_gini), ("real_gini", real_gini)] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::param(
                name,
                format!("{v} must be finite and non-negative"),
            ));
        }
    }
    if real_gini == 0.0 {
        return Ok(ClassLabel::DataResilient);
    }
    let ratio = mock_gini / real_gini;
    Ok(
        if real_gini < th.resilient_real_max && ratio >= th.resilient_ratio_min {
            ClassLabel::DataResilient
        } else if real_gini > th.persistent_real_min && ratio < th.persistent_ratio_max {
            ClassLabel::PersistentlyConcentrated
        } else {
            ClassLabel::Mixed
        },
    )
}
