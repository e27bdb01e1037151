use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The six surgical error classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ErrorType {
    /// Incising or cauterizing at the wrong location.
    I,
    /// Too much force or stretch.
    II,
    /// Foreign object left in the body.
    III,
    /// Clips applied incorrectly.
    IV,
    /// Wrong (part of an) organ removed, or removal never completed.
    V,
    /// Suturing at the wrong location.
    VI,
}

impl ErrorType {
    pub const ALL: [ErrorType; 6] = [
        ErrorType::I,
        ErrorType::II,
        ErrorType::III,
        ErrorType::IV,
        ErrorType::V,
        ErrorType::VI,
    ];

    pub fn roman(self) -> &'static str {
        match self {
            ErrorType::I => "I",
            ErrorType::II => "II",
            ErrorType::III => "III",
            ErrorType::IV => "IV",
            ErrorType::V => "V",
            ErrorType::VI => "VI",
        }
    }
}

impl fmt::Display for ErrorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.roman())
    }
}

impl FromStr for ErrorType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ErrorType::ALL
            .into_iter()
            .find(|t| t.roman() == s)
            .ok_or_else(|| format!("unknown error type '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Unit {
    Millimeter,
    Newton,
    /// Stretch ratio.
    Ratio,
    Clip,
    ProximalClips,
    DistalClips,
    Count,
}

impl Unit {
    pub fn symbol(self) -> &'static str {
        match self {
            Unit::Millimeter => "mm",
            Unit::Newton => "N",
            Unit::Ratio => "x",
            Unit::Clip => "clip",
            Unit::ProximalClips => "proximal clips",
            Unit::DistalClips => "distal clips",
            Unit::Count => "",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub value: f64,
    pub unit: Unit,
}

impl Measurement {
    pub fn new(value: f64, unit: Unit) -> Self {
        Self { value, unit }
    }
}

impl fmt::Display for Measurement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.unit {
            Unit::Count => write!(f, "{}", self.value),
            Unit::Ratio => write!(f, "{}x", self.value),
            u => write!(f, "{} {}", self.value, u.symbol()),
        }
    }
}

/// A detected safety error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Violation {
    pub t: u64,
    pub error_type: ErrorType,
    /// First entry is the quantity that triggered the violation.
    pub measured: Vec<Measurement>,
    pub threshold: Vec<Measurement>,
    pub subject_ids: Vec<String>,
    pub snapshot_base_name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum AchievementKind {
    /// An authored step was performed.
    Step,
    /// A removal target lost its last attachment.
    Freed,
    /// The procedure-wide completion criterion was met.
    Completion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Achievement {
    pub kind: AchievementKind,
    /// 1-based step index for [`AchievementKind::Step`].
    pub step_index: Option<usize>,
    pub t: u64,
    pub label: String,
}

/// End-of-session summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionReport {
    pub session_id: String,
    pub spec_title: String,
    pub achievements: Vec<Achievement>,
    pub violations: Vec<Violation>,
    pub proficient: bool,
    /// Snapshot directory relative to the report output root.
    pub snapshot_dir: String,
    pub message_text: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_type_round_trips_through_roman() {
        for t in ErrorType::ALL {
            assert_eq!(t.roman().parse::<ErrorType>().unwrap(), t);
        }
        assert!("VII".parse::<ErrorType>().is_err());
    }

    #[test]
    fn measurement_display() {
        assert_eq!(Measurement::new(3.0, Unit::Millimeter).to_string(), "3 mm");
        assert_eq!(Measurement::new(1.6, Unit::Ratio).to_string(), "1.6x");
    }
}
