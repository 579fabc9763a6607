//! Abnormality vocabulary and label sets.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::CoraxError;

/// Target abnormalities. `Consolidation` exists in the vocabulary but the
/// default phrase dictionary folds consolidation mentions into `LungOpacity`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Abnormality {
    Cardiomegaly,
    PleuralEffusion,
    Atelectasis,
    LungOpacity,
    Edema,
    Consolidation,
}

impl Abnormality {
    pub const ALL: [Abnormality; 6] = [
        Abnormality::Cardiomegaly,
        Abnormality::PleuralEffusion,
        Abnormality::Atelectasis,
        Abnormality::LungOpacity,
        Abnormality::Edema,
        Abnormality::Consolidation,
    ];

    /// Labels evaluated by default.
    pub const EVALUATED: [Abnormality; 5] = [
        Abnormality::Cardiomegaly,
        Abnormality::PleuralEffusion,
        Abnormality::Atelectasis,
        Abnormality::LungOpacity,
        Abnormality::Edema,
    ];

    /// Stable identifier used in file names, JSON keys and URLs.
    pub fn slug(self) -> &'static str {
        match self {
            Abnormality::Cardiomegaly => "cardiomegaly",
            Abnormality::PleuralEffusion => "pleural_effusion",
            Abnormality::Atelectasis => "atelectasis",
            Abnormality::LungOpacity => "lung_opacity",
            Abnormality::Edema => "edema",
            Abnormality::Consolidation => "consolidation",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Abnormality::Cardiomegaly => "Cardiomegaly",
            Abnormality::PleuralEffusion => "Pleural Effusion",
            Abnormality::Atelectasis => "Atelectasis",
            Abnormality::LungOpacity => "Lung Opacity",
            Abnormality::Edema => "Edema",
            Abnormality::Consolidation => "Consolidation",
        }
    }
}

impl fmt::Display for Abnormality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for Abnormality {
    type Err = CoraxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Abnormality::ALL
            .into_iter()
            .find(|a| a.slug() == s)
            .ok_or_else(|| CoraxError::Parameter(format!("unknown abnormality `{s}`")))
    }
}

/// A set of abnormality labels (Set A / Set B).
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelSet(BTreeSet<Abnormality>);

impl LabelSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, abn: Abnormality) -> bool {
        self.0.insert(abn)
    }

    pub fn remove(&mut self, abn: Abnormality) -> bool {
        self.0.remove(&abn)
    }

    pub fn contains(&self, abn: Abnormality) -> bool {
        self.0.contains(&abn)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Abnormality> + '_ {
        self.0.iter().copied()
    }

    /// `self ∖ other`
    pub fn difference(&self, other: &LabelSet) -> LabelSet {
        LabelSet(self.0.difference(&other.0).copied().collect())
    }

    pub fn union(&self, other: &LabelSet) -> LabelSet {
        LabelSet(self.0.union(&other.0).copied().collect())
    }

    pub fn intersection(&self, other: &LabelSet) -> LabelSet {
        LabelSet(self.0.intersection(&other.0).copied().collect())
    }

    pub fn is_superset(&self, other: &LabelSet) -> bool {
        self.0.is_superset(&other.0)
    }
}

impl FromIterator<Abnormality> for LabelSet {
    fn from_iter<I: IntoIterator<Item = Abnormality>>(iter: I) -> Self {
        LabelSet(iter.into_iter().collect())
    }
}

impl<const N: usize> From<[Abnormality; N]> for LabelSet {
    fn from(value: [Abnormality; N]) -> Self {
        value.into_iter().collect()
    }
}

impl fmt::Display for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str("}")
    }
}
