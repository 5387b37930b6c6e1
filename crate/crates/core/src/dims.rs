//! The three evaluation dimensions every metric is placed on.

use serde::{Deserialize, Serialize};

/// What is evaluated: the interaction process or its final output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Process,
    Output,
}

/// Whose judgement the metric reflects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perspective {
    FirstPerson,
    ThirdParty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criteria {
    Quality,
    Preference,
    Both,
}

impl Criteria {
    pub fn includes_quality(self) -> bool {
        matches!(self, Criteria::Quality | Criteria::Both)
    }

    pub fn includes_preference(self) -> bool {
        matches!(self, Criteria::Preference | Criteria::Both)
    }
}
