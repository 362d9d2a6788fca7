//! Shared outcome types.

use std::fmt;

use serde::Serialize;

/// Explosion classification of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    AlmostSureNonExplosion,
    PositiveProbabilityExplosion,
    AlmostSureExplosion,
    Inconclusive,
}

impl Verdict {
    pub fn label(self) -> &'static str {
        match self {
            Verdict::AlmostSureNonExplosion => "a.s. non-explosion",
            Verdict::PositiveProbabilityExplosion => "positive-probability explosion",
            Verdict::AlmostSureExplosion => "a.s. explosion",
            Verdict::Inconclusive => "inconclusive",
        }
    }

    pub fn is_explosive(self) -> bool {
        matches!(self, Verdict::PositiveProbabilityExplosion | Verdict::AlmostSureExplosion)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Outcome of a sampled sufficient condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Holds {
    Yes,
    No,
    Inconclusive,
}

impl fmt::Display for Holds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Holds::Yes => "yes",
            Holds::No => "no",
            Holds::Inconclusive => "inconclusive",
        })
    }
}
