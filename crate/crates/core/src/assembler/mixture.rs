use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use super::AssembleError;
use crate::corpus::{InstructionRecord, Source};
use crate::hashing::rng_for;

/// One row of the mixture table. The two NI pools share the NI source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MixtureComponent {
    #[serde(rename = "LIMA")]
    Lima,
    OpenPlatypus,
    #[serde(rename = "NI-EM")]
    NiExactMatch,
    #[serde(rename = "NI-GEN")]
    NiGeneration,
    OpenbookQA,
    #[serde(rename = "QUAC")]
    Quac,
    #[serde(rename = "CNNDailyMail")]
    CnnDailyMail,
    MathInstruct,
}

impl MixtureComponent {
    pub const ALL: [MixtureComponent; 8] = [
        MixtureComponent::Lima,
        MixtureComponent::OpenPlatypus,
        MixtureComponent::NiExactMatch,
        MixtureComponent::NiGeneration,
        MixtureComponent::OpenbookQA,
        MixtureComponent::Quac,
        MixtureComponent::CnnDailyMail,
        MixtureComponent::MathInstruct,
    ];

    pub fn source(self) -> Source {
        match self {
            MixtureComponent::Lima => Source::Lima,
            MixtureComponent::OpenPlatypus => Source::OpenPlatypus,
            MixtureComponent::NiExactMatch | MixtureComponent::NiGeneration => Source::Ni,
            MixtureComponent::OpenbookQA => Source::OpenbookQA,
            MixtureComponent::Quac => Source::Quac,
            MixtureComponent::CnnDailyMail => Source::CnnDailyMail,
            MixtureComponent::MathInstruct => Source::MathInstruct,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MixtureComponent::Lima => "LIMA",
            MixtureComponent::OpenPlatypus => "OpenPlatypus",
            MixtureComponent::NiExactMatch => "NI-EM",
            MixtureComponent::NiGeneration => "NI-GEN",
            MixtureComponent::OpenbookQA => "OpenbookQA",
            MixtureComponent::Quac => "QUAC",
            MixtureComponent::CnnDailyMail => "CNNDailyMail",
            MixtureComponent::MathInstruct => "MathInstruct",
        }
    }
}

impl fmt::Display for MixtureComponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MixtureComponent {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MixtureComponent::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown mixture component {s:?}"))
    }
}

pub const KNOWN_PRESETS: [&str; 3] = ["200K", "400K", "700K"];

/// Per-component quotas plus the epoch count used for fine-tuning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub name: String,
    pub quotas: BTreeMap<MixtureComponent, usize>,
    pub epochs: u32,
    pub seed: u64,
}

impl MixtureSpec {
    /// The three published mixtures. Labels are nominal: the rows sum to
    /// 206,000, 389,000 and 709,000 records.
    pub fn preset(name: &str, seed: u64) -> Result<Self, AssembleError> {
        use MixtureComponent::*;
        let (label, ni, cnn, math, epochs) = match name.to_ascii_uppercase().as_str() {
            "200K" => ("200K", 50_000, 15_000, 50_000, 3),
            "400K" => ("400K", 110_000, 28_000, 100_000, 2),
            "700K" => ("700K", 220_000, 28_000, 200_000, 1),
            _ => {
                return Err(AssembleError::UnknownPreset {
                    name: name.to_string(),
                })
            }
        };
        let quotas = BTreeMap::from([
            (Lima, 1_000),
            (OpenPlatypus, 25_000),
            (NiExactMatch, ni),
            (NiGeneration, ni),
            (OpenbookQA, 5_000),
            (Quac, 10_000),
            (CnnDailyMail, cnn),
            (MathInstruct, math),
        ]);
        Ok(Self {
            name: label.to_string(),
            quotas,
            epochs,
            seed,
        })
    }

    pub fn total(&self) -> usize {
        self.quotas.values().sum()
    }
}

/// Assembled records, each tagged with the component it was drawn for.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Mixture {
    pub entries: Vec<(MixtureComponent, InstructionRecord)>,
    /// Records available per component before drawing.
    pub available: BTreeMap<MixtureComponent, usize>,
    /// Records drawn per component (before dedupe).
    pub drawn: BTreeMap<MixtureComponent, usize>,
    /// Duplicates removed per component.
    pub dedupe_removed: BTreeMap<MixtureComponent, usize>,
}

impl Mixture {
    /// Keeps the first occurrence of every content hash.
    pub fn dedupe(&mut self) -> usize {
        let mut seen = HashSet::with_capacity(self.entries.len());
        let before = self.entries.len();
        let removed = &mut self.dedupe_removed;
        self.entries.retain(|(component, rec)| {
            let keep = seen.insert(rec.content_hash);
            if !keep {
                *removed.entry(*component).or_insert(0) += 1;
            }
            keep
        });
        before - self.entries.len()
    }

    pub fn delivered(&self) -> BTreeMap<MixtureComponent, usize> {
        let mut counts = BTreeMap::new();
        for (c, _) in &self.entries {
            *counts.entry(*c).or_insert(0) += 1;
        }
        counts
    }

    pub fn into_records(self) -> Vec<InstructionRecord> {
        self.entries.into_iter().map(|(_, r)| r).collect()
    }
}

/// Draws `min(quota, available)` records per component without replacement
/// and shuffles the result, all seeded from `spec.seed`.
///
/// Every component with a positive quota must have a stream; this is
/// checked before anything is drawn.
pub fn assemble_mixture(
    spec: &MixtureSpec,
    sources: &BTreeMap<MixtureComponent, Vec<InstructionRecord>>,
) -> Result<Mixture, AssembleError> {
    let missing: Vec<String> = spec
        .quotas
        .iter()
        .filter(|(c, &q)| q > 0 && !sources.contains_key(c))
        .map(|(c, _)| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(AssembleError::MissingSources(missing));
    }

    let mut mixture = Mixture::default();
    for (&component, &quota) in &spec.quotas {
        let stream = sources.get(&component).map(Vec::as_slice).unwrap_or(&[]);
        let take = quota.min(stream.len());
        let mut rng = rng_for(spec.seed, &["mixture", component.as_str()]);
        let mut picked = index::sample(&mut rng, stream.len(), take).into_vec();
        picked.sort_unstable();
        mixture
            .entries
            .extend(picked.into_iter().map(|i| (component, stream[i].clone())));
        mixture.available.insert(component, stream.len());
        mixture.drawn.insert(component, take);
        if take < quota {
            tracing::warn!(%component, quota, available = stream.len(), "component short of quota");
        }
    }
    let mut rng = rng_for(spec.seed, &["mixture-shuffle"]);
    mixture.entries.shuffle(&mut rng);
    Ok(mixture)
}
