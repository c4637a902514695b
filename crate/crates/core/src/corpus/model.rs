use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Category assigned to a person as a whole (not to any one statement).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PersonCategory {
    Centrist,
    Extremist,
    Terrorist,
}

impl PersonCategory {
    pub const ALL: [PersonCategory; 3] = [
        PersonCategory::Centrist,
        PersonCategory::Extremist,
        PersonCategory::Terrorist,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Statement label on the terrorism axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TerrorismLabel {
    C,
    E,
    T,
}

impl TerrorismLabel {
    pub const ALL: [TerrorismLabel; 3] = [TerrorismLabel::C, TerrorismLabel::E, TerrorismLabel::T];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Higher means more severe; used to break rater ties.
    pub fn severity(self) -> u8 {
        match self {
            TerrorismLabel::C => 0,
            TerrorismLabel::E => 1,
            TerrorismLabel::T => 2,
        }
    }
}

/// Statement label on the Brexit axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BrexitLabel {
    A,
    N,
    S,
    H,
    O,
}

impl BrexitLabel {
    pub const ALL: [BrexitLabel; 5] = [
        BrexitLabel::A,
        BrexitLabel::N,
        BrexitLabel::S,
        BrexitLabel::H,
        BrexitLabel::O,
    ];

    /// Severity order H > S > A > N > O.
    pub fn severity(self) -> u8 {
        match self {
            BrexitLabel::O => 0,
            BrexitLabel::N => 1,
            BrexitLabel::A => 2,
            BrexitLabel::S => 3,
            BrexitLabel::H => 4,
        }
    }

    pub fn is_brexit_related(self) -> bool {
        !matches!(self, BrexitLabel::O)
    }

    pub fn is_pro_brexit(self) -> bool {
        matches!(self, BrexitLabel::S | BrexitLabel::H)
    }
}

/// Which labelling axis a task works on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Terrorism,
    Brexit,
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "terrorism" => Ok(Axis::Terrorism),
            "brexit" => Ok(Axis::Brexit),
            other => Err(Error::invalid(format!("unknown axis `{other}`"))),
        }
    }
}

/// A label from either axis; rater combination rejects mixed axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AxisLabel {
    Terrorism(TerrorismLabel),
    Brexit(BrexitLabel),
}

impl AxisLabel {
    pub fn axis(self) -> Axis {
        match self {
            AxisLabel::Terrorism(_) => Axis::Terrorism,
            AxisLabel::Brexit(_) => Axis::Brexit,
        }
    }

    fn severity(self) -> u8 {
        match self {
            AxisLabel::Terrorism(l) => l.severity(),
            AxisLabel::Brexit(l) => l.severity(),
        }
    }
}

impl fmt::Display for AxisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AxisLabel::Terrorism(l) => write!(f, "{l:?}"),
            AxisLabel::Brexit(l) => write!(f, "{l:?}"),
        }
    }
}

/// Combines three independent rater labels into one.
///
/// The majority label wins; with three distinct labels the most severe one
/// is kept (terrorism: T > E > C, Brexit: H > S > A > N > O).
pub fn combine_rater_labels(labels: [AxisLabel; 3]) -> Result<AxisLabel> {
    let axis = labels[0].axis();
    if labels.iter().any(|l| l.axis() != axis) {
        return Err(Error::invalid("rater labels come from different axes"));
    }
    for (i, a) in labels.iter().enumerate() {
        if labels.iter().skip(i + 1).any(|b| b == a) {
            return Ok(*a);
        }
    }
    Ok(labels
        .into_iter()
        .max_by_key(|l| l.severity())
        .expect("three labels"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Person {
    pub id: String,
    #[serde(rename = "name")]
    pub display_name: String,
    #[serde(default)]
    pub group: String,
    #[serde(default, rename = "category", skip_serializing_if = "Option::is_none")]
    pub person_category: Option<PersonCategory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quote {
    pub id: String,
    pub person_id: String,
    pub timestamp: NaiveDate,
    pub text: String,
    #[serde(default)]
    pub language: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terrorism_label: Option<TerrorismLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub brexit_label: Option<BrexitLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

impl Quote {
    pub fn word_count(&self) -> usize {
        self.text.split_whitespace().count()
    }

    pub fn label(&self, axis: Axis) -> Option<AxisLabel> {
        match axis {
            Axis::Terrorism => self.terrorism_label.map(AxisLabel::Terrorism),
            Axis::Brexit => self.brexit_label.map(AxisLabel::Brexit),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Vote {
    For,
    Against,
    Absent,
}

impl FromStr for Vote {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "for" => Ok(Vote::For),
            "against" => Ok(Vote::Against),
            "absent" => Ok(Vote::Absent),
            other => Err(Error::invalid(format!("unknown vote `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub person_id: String,
    pub votes: Vec<(NaiveDate, Vote)>,
}

impl VoteRecord {
    pub fn new(person_id: impl Into<String>, votes: Vec<(NaiveDate, Vote)>) -> Result<Self> {
        let person_id = person_id.into();
        if votes.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(Error::invalid(format!(
                "votes for `{person_id}` are not in date order"
            )));
        }
        Ok(Self { person_id, votes })
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        self.votes
            .iter()
            .fold((0, 0, 0), |(f, a, n), (_, v)| match v {
                Vote::For => (f + 1, a, n),
                Vote::Against => (f, a + 1, n),
                Vote::Absent => (f, a, n + 1),
            })
    }
}

/// Net support as a share of all listed votes, in [-1, 1].
///
/// Absences stay in the denominator, so they pull the score towards zero.
pub fn vote_score(record: &VoteRecord) -> Result<f64> {
    if record.votes.is_empty() {
        return Err(Error::InsufficientData(format!(
            "empty voting record for `{}`",
            record.person_id
        )));
    }
    let (n_for, n_against, n_absent) = record.counts();
    if n_for + n_against == 0 {
        return Err(Error::InsufficientData(format!(
            "no for/against votes for `{}`",
            record.person_id
        )));
    }
    Ok((n_for as f64 - n_against as f64) / (n_for + n_against + n_absent) as f64)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub quotes: usize,
    pub persons: usize,
    pub terrorism: BTreeMap<String, usize>,
    pub brexit: BTreeMap<String, usize>,
    pub terrorism_unlabelled: usize,
    pub brexit_unlabelled: usize,
    pub persons_per_group: BTreeMap<String, usize>,
}
