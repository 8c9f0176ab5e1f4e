//! Weight-transfer plans: which donor component initializes each component of
//! a candidate network.
//!
//! Within each stage the candidate's modules take the donor's first modules
//! in order, so a candidate stage can never be deeper than the donor stage.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::Architecture;
use crate::cost::{self, CostProfiles};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TransferError {
    #[error("stage {stage} has {candidate} modules but the donor only has {donor}")]
    StageDepthExceedsDonor { stage: usize, candidate: usize, donor: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// A transferable component of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ComponentRef {
    Stem,
    Module { stage: usize, module: usize },
    Shortcut { stage: usize },
    Classifier,
}

impl ComponentRef {
    pub fn component(&self) -> &'static str {
        match self {
            ComponentRef::Stem => "stem",
            ComponentRef::Module { .. } => "module",
            ComponentRef::Shortcut { .. } => "shortcut",
            ComponentRef::Classifier => "classifier",
        }
    }
}

impl fmt::Display for ComponentRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ComponentRef::Stem => write!(f, "stem"),
            ComponentRef::Module { stage, module } => write!(f, "stage{stage}.module{module}"),
            ComponentRef::Shortcut { stage } => write!(f, "stage{stage}.shortcut"),
            ComponentRef::Classifier => write!(f, "classifier"),
        }
    }
}

impl std::str::FromStr for ComponentRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stem" => return Ok(ComponentRef::Stem),
            "classifier" => return Ok(ComponentRef::Classifier),
            _ => {}
        }
        let bad = || format!("unrecognized component `{s}`");
        let (stage, rest) = s.strip_prefix("stage").and_then(|r| r.split_once('.')).ok_or_else(bad)?;
        let stage: usize = stage.parse().map_err(|_| bad())?;
        if rest == "shortcut" {
            return Ok(ComponentRef::Shortcut { stage });
        }
        let module = rest.strip_prefix("module").ok_or_else(bad)?.parse().map_err(|_| bad())?;
        Ok(ComponentRef::Module { stage, module })
    }
}

impl Serialize for ComponentRef {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ComponentRef {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferEntry {
    pub component: String,
    pub donor: ComponentRef,
    pub candidate: ComponentRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferPlan {
    pub entries: Vec<TransferEntry>,
    /// Fraction of candidate parameters initialized from the donor.
    pub coverage: f64,
}

impl TransferPlan {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serialization cannot fail")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        serde_json::from_slice(bytes)
    }

    pub fn module_entries(&self) -> usize {
        self.entries.iter().filter(|e| matches!(e.candidate, ComponentRef::Module { .. })).count()
    }

    pub fn is_identity(&self) -> bool {
        self.entries.iter().all(|e| e.donor == e.candidate)
    }
}

/// Every component of `a`, in forward order.
pub fn components(a: &Architecture) -> Vec<ComponentRef> {
    let mut out = vec![ComponentRef::Stem];
    for (i, s) in a.stages().iter().enumerate() {
        out.extend((0..s.modules).map(|j| ComponentRef::Module { stage: i, module: j }));
        if a.has_projection(i) {
            out.push(ComponentRef::Shortcut { stage: i });
        }
    }
    out.push(ComponentRef::Classifier);
    out
}

fn component_params(a: &Architecture, c: ComponentRef) -> f64 {
    match c {
        ComponentRef::Stem => cost::stem_params(a),
        ComponentRef::Module { stage, module } => cost::module_params(a, stage, module, &CostProfiles::default()),
        ComponentRef::Shortcut { stage } => cost::shortcut_params(a, stage),
        ComponentRef::Classifier => cost::classifier_params(a),
    }
}

pub fn plan_transfer(candidate: &Architecture, donor: &Architecture) -> Result<TransferPlan, TransferError> {
    if candidate.stage_count() != donor.stage_count() {
        return Err(TransferError::ShapeMismatch(format!(
            "candidate has {} stages, donor has {}",
            candidate.stage_count(),
            donor.stage_count()
        )));
    }
    if candidate.kind() != donor.kind() {
        return Err(TransferError::ShapeMismatch(format!(
            "module kinds differ: {:?} vs {:?}",
            candidate.kind(),
            donor.kind()
        )));
    }
    if candidate.widths() != donor.widths() {
        return Err(TransferError::ShapeMismatch(format!(
            "stage widths differ: {:?} vs {:?}",
            candidate.widths(),
            donor.widths()
        )));
    }
    for (field, c, d) in [
        ("input_side", candidate.input_side(), donor.input_side()),
        ("stem_channels", candidate.stem_channels(), donor.stem_channels()),
        ("num_classes", candidate.num_classes(), donor.num_classes()),
    ] {
        if c != d {
            return Err(TransferError::ShapeMismatch(format!("{field} differs: {c} vs {d}")));
        }
    }
    for (i, (c, d)) in candidate.stages().iter().zip(donor.stages()).enumerate() {
        if c.modules > d.modules {
            return Err(TransferError::StageDepthExceedsDonor { stage: i, candidate: c.modules, donor: d.modules });
        }
    }

    let mut covered = 0.0;
    let mut total = 0.0;
    let mut entries = Vec::new();
    for c in components(candidate) {
        // Prefix mapping: every candidate component has a same-named donor twin.
        let weight = component_params(candidate, c);
        total += weight;
        covered += weight;
        entries.push(TransferEntry { component: c.component().to_string(), donor: c, candidate: c });
    }
    Ok(TransferPlan { entries, coverage: if total > 0.0 { covered / total } else { 1.0 } })
}
