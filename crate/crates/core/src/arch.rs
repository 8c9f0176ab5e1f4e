//! Architecture descriptors: an ordered list of stages, each holding a number
//! of identical modules at a fixed width and resolution.
//!
//! Descriptors are immutable values. Every constructor validates the stage
//! layout and computes a content hash (`id`) over a canonical serialization,
//! so two descriptors with equal fields always share an id.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Number of input image channels fed to the stem convolution.
pub const INPUT_CHANNELS: usize = 3;

/// Channel expansion of the last 1×1 convolution in a bottleneck module.
pub const BOTTLENECK_EXPANSION: usize = 4;

fn divisible_by_pow2(x: usize, k: usize) -> bool {
    u32::try_from(k).ok().and_then(|k| 1usize.checked_shl(k)).is_some_and(|d| x.is_multiple_of(d))
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ArchError {
    #[error("stage count must be at least 1")]
    NoStages,
    #[error("stage {stage}: module count must be at least 1")]
    ZeroModules { stage: usize },
    #[error("stage {stage}: channel count must be positive")]
    ZeroChannels { stage: usize },
    #[error("expected {expected} per-stage values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("input_side {input_side} is not divisible by 2^{halvings}")]
    NonDivisibleInput { input_side: usize, halvings: usize },
    #[error("stage {stage}: spatial is {got}, expected {expected}")]
    SpatialMismatch { stage: usize, expected: usize, got: usize },
    #[error("field `{field}` must be positive")]
    NonPositive { field: &'static str },
    #[error("stage {stage}: bottleneck channels {channels} not divisible by expansion {BOTTLENECK_EXPANSION}")]
    BottleneckWidth { stage: usize, channels: usize },
    #[error("parse error: {0}")]
    Parse(String),
}

/// The repeated unit inside a stage.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModuleKind {
    /// Two 3×3 convolutions with an identity (or projection) shortcut.
    ResidualBasic,
    /// 1×1 → 3×3 → 1×1 convolutions; stage channels are the expanded width.
    ResidualBottleneck,
    /// An externally designed cell whose costs come from a registered profile.
    Cell { cost_profile_id: String },
}

impl ModuleKind {
    /// Convolutional layers per module, when fixed by the kind.
    pub fn fixed_layers(&self) -> Option<usize> {
        match self {
            ModuleKind::ResidualBasic => Some(2),
            ModuleKind::ResidualBottleneck => Some(3),
            ModuleKind::Cell { .. } => None,
        }
    }

    /// Default growth step: two modules for residual blocks, one for cells.
    pub fn default_growth_step(&self) -> usize {
        match self {
            ModuleKind::Cell { .. } => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StageSpec {
    pub index: usize,
    pub modules: usize,
    pub channels: usize,
    pub spatial: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Architecture {
    stages: Vec<StageSpec>,
    kind: ModuleKind,
    stem_channels: usize,
    num_classes: usize,
    input_side: usize,
    id: String,
}

/// On-disk descriptor layout. Field order here is the canonical order used
/// for hashing and for byte-stable output.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescriptorFile {
    pub stages: Vec<StageFile>,
    pub kind: ModuleKind,
    pub stem_channels: usize,
    pub num_classes: usize,
    pub input_side: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageFile {
    pub modules: usize,
    pub channels: usize,
    pub spatial: usize,
}

impl Architecture {
    /// Uniform network: `stage_count` stages with `m0` modules each. Stage `i`
    /// runs at `input_side / 2^i`; the stem width defaults from the first stage.
    pub fn build_uniform(
        stage_count: usize,
        m0: usize,
        kind: ModuleKind,
        widths: &[usize],
        input_side: usize,
        num_classes: usize,
    ) -> Result<Self, ArchError> {
        let stem = widths.first().map(|&w| default_stem(&kind, w)).unwrap_or(1);
        Self::build(&vec![m0; stage_count], kind, widths, stem, input_side, num_classes)
    }

    /// Arbitrary per-stage module counts with an explicit stem width.
    pub fn build(
        modules: &[usize],
        kind: ModuleKind,
        widths: &[usize],
        stem_channels: usize,
        input_side: usize,
        num_classes: usize,
    ) -> Result<Self, ArchError> {
        if modules.is_empty() {
            return Err(ArchError::NoStages);
        }
        if widths.len() != modules.len() {
            return Err(ArchError::LengthMismatch { expected: modules.len(), got: widths.len() });
        }
        let halvings = modules.len() - 1;
        if input_side == 0 || !divisible_by_pow2(input_side, halvings) {
            return Err(ArchError::NonDivisibleInput { input_side, halvings });
        }
        let stages = modules
            .iter()
            .zip(widths)
            .enumerate()
            .map(|(index, (&modules, &channels))| StageSpec {
                index,
                modules,
                channels,
                spatial: input_side >> index,
            })
            .collect();
        Self::from_parts(stages, kind, stem_channels, num_classes, input_side)
    }

    fn from_parts(
        stages: Vec<StageSpec>,
        kind: ModuleKind,
        stem_channels: usize,
        num_classes: usize,
        input_side: usize,
    ) -> Result<Self, ArchError> {
        if stages.is_empty() {
            return Err(ArchError::NoStages);
        }
        if stem_channels == 0 {
            return Err(ArchError::NonPositive { field: "stem_channels" });
        }
        if num_classes == 0 {
            return Err(ArchError::NonPositive { field: "num_classes" });
        }
        if input_side == 0 {
            return Err(ArchError::NonPositive { field: "input_side" });
        }
        let halvings = stages.len() - 1;
        if !divisible_by_pow2(input_side, halvings) {
            return Err(ArchError::NonDivisibleInput { input_side, halvings });
        }
        for (i, s) in stages.iter().enumerate() {
            if s.modules == 0 {
                return Err(ArchError::ZeroModules { stage: i });
            }
            if s.channels == 0 {
                return Err(ArchError::ZeroChannels { stage: i });
            }
            let expected = input_side >> i;
            if s.spatial != expected {
                return Err(ArchError::SpatialMismatch { stage: i, expected, got: s.spatial });
            }
            if kind == ModuleKind::ResidualBottleneck && s.channels % BOTTLENECK_EXPANSION != 0 {
                return Err(ArchError::BottleneckWidth { stage: i, channels: s.channels });
            }
        }
        let mut arch = Architecture {
            stages,
            kind,
            stem_channels,
            num_classes,
            input_side,
            id: String::new(),
        };
        arch.id = hex::encode(Sha256::digest(arch.canonical_bytes()));
        Ok(arch)
    }

    /// Adds `deltas[i]` modules to stage `i`. The input is left untouched.
    pub fn deepen(&self, deltas: &[usize]) -> Result<Self, ArchError> {
        if deltas.len() != self.stages.len() {
            return Err(ArchError::LengthMismatch { expected: self.stages.len(), got: deltas.len() });
        }
        let stages = self
            .stages
            .iter()
            .zip(deltas)
            .map(|(s, &d)| StageSpec { modules: s.modules + d, ..s.clone() })
            .collect();
        Self::from_parts(stages, self.kind.clone(), self.stem_channels, self.num_classes, self.input_side)
    }

    /// Same layout with the given per-stage module counts.
    pub fn with_modules(&self, modules: &[usize]) -> Result<Self, ArchError> {
        let widths: Vec<usize> = self.stages.iter().map(|s| s.channels).collect();
        Self::build(modules, self.kind.clone(), &widths, self.stem_channels, self.input_side, self.num_classes)
    }

    pub fn stages(&self) -> &[StageSpec] {
        &self.stages
    }

    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    pub fn modules(&self) -> Vec<usize> {
        self.stages.iter().map(|s| s.modules).collect()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.stages.iter().map(|s| s.channels).collect()
    }

    pub fn kind(&self) -> &ModuleKind {
        &self.kind
    }

    pub fn stem_channels(&self) -> usize {
        self.stem_channels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn input_side(&self) -> usize {
        self.input_side
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Channels entering stage `i`.
    pub fn stage_input_channels(&self, i: usize) -> usize {
        if i == 0 {
            self.stem_channels
        } else {
            self.stages[i - 1].channels
        }
    }

    /// Stride of the first module of stage `i`; every stage after the first
    /// halves the resolution.
    pub fn stage_stride(&self, i: usize) -> usize {
        if i == 0 {
            1
        } else {
            2
        }
    }

    /// Whether the first module of stage `i` needs a 1×1 projection shortcut.
    pub fn has_projection(&self, i: usize) -> bool {
        self.stage_stride(i) != 1 || self.stage_input_channels(i) != self.stages[i].channels
    }

    /// Same stage count, widths, kind, stem, classes and input size.
    pub fn same_layout(&self, other: &Architecture) -> bool {
        self.kind == other.kind
            && self.stem_channels == other.stem_channels
            && self.num_classes == other.num_classes
            && self.input_side == other.input_side
            && self.widths() == other.widths()
    }

    pub fn to_file(&self) -> DescriptorFile {
        DescriptorFile {
            stages: self
                .stages
                .iter()
                .map(|s| StageFile { modules: s.modules, channels: s.channels, spatial: s.spatial })
                .collect(),
            kind: self.kind.clone(),
            stem_channels: self.stem_channels,
            num_classes: self.num_classes,
            input_side: self.input_side,
        }
    }

    pub fn from_file(file: DescriptorFile) -> Result<Self, ArchError> {
        let stages = file
            .stages
            .into_iter()
            .enumerate()
            .map(|(index, s)| StageSpec { index, modules: s.modules, channels: s.channels, spatial: s.spatial })
            .collect();
        Self::from_parts(stages, file.kind, file.stem_channels, file.num_classes, file.input_side)
    }

    fn canonical_bytes(&self) -> Vec<u8> {
        // Struct field order is fixed, so compact JSON is already canonical.
        serde_json::to_vec(&self.to_file()).expect("descriptor serialization cannot fail")
    }

    /// Canonical compact JSON.
    pub fn serialize(&self) -> Vec<u8> {
        self.canonical_bytes()
    }

    /// Human-readable JSON for descriptor files.
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("descriptor serialization cannot fail")
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self, ArchError> {
        let file: DescriptorFile =
            serde_json::from_slice(bytes).map_err(|e| ArchError::Parse(e.to_string()))?;
        Self::from_file(file)
    }
}

impl Serialize for Architecture {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_file().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Architecture {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let file = DescriptorFile::deserialize(deserializer)?;
        Architecture::from_file(file).map_err(serde::de::Error::custom)
    }
}

/// Stem width used by uniform builds: the first stage's width, or its
/// unexpanded width for bottleneck networks (64 for a 256-wide first stage).
fn default_stem(kind: &ModuleKind, first_width: usize) -> usize {
    match kind {
        ModuleKind::ResidualBottleneck => (first_width / BOTTLENECK_EXPANSION).max(1),
        _ => first_width,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resnet(m: usize) -> Architecture {
        Architecture::build_uniform(3, m, ModuleKind::ResidualBasic, &[16, 32, 64], 32, 10).unwrap()
    }

    #[test]
    fn uniform_initial_network() {
        let a = resnet(6);
        assert_eq!(a.modules(), vec![6, 6, 6]);
        let sides: Vec<usize> = a.stages().iter().map(|s| s.spatial).collect();
        assert_eq!(sides, vec![32, 16, 8]);
        assert_eq!(a.stem_channels(), 16);
    }

    #[test]
    fn minimal_single_stage() {
        let a = Architecture::build_uniform(1, 1, ModuleKind::ResidualBasic, &[16], 32, 10).unwrap();
        assert_eq!(a.modules(), vec![1]);
        assert_eq!(a.stages()[0].spatial, 32);
    }

    #[test]
    fn resnet44_descriptor() {
        assert_eq!(resnet(7).modules(), vec![7, 7, 7]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(
            Architecture::build_uniform(3, 6, ModuleKind::ResidualBasic, &[16, 32, 64], 30, 10),
            Err(ArchError::NonDivisibleInput { input_side: 30, halvings: 2 })
        );
        assert_eq!(
            Architecture::build_uniform(3, 0, ModuleKind::ResidualBasic, &[16, 32, 64], 32, 10),
            Err(ArchError::ZeroModules { stage: 0 })
        );
        assert_eq!(
            Architecture::build_uniform(0, 6, ModuleKind::ResidualBasic, &[], 32, 10),
            Err(ArchError::NoStages)
        );
        assert_eq!(
            Architecture::build_uniform(3, 6, ModuleKind::ResidualBasic, &[16, 32], 32, 10),
            Err(ArchError::LengthMismatch { expected: 3, got: 2 })
        );
    }

    #[test]
    fn deepen_cases() {
        let a = resnet(6);
        assert_eq!(a.deepen(&[2, 2, 2]).unwrap().modules(), vec![8, 8, 8]);
        let b = a.deepen(&[0, 2, 0]).unwrap();
        assert_eq!(b.modules(), vec![6, 8, 6]);
        let c = b.deepen(&[0, 0, 0]).unwrap();
        assert_eq!(c, b);
        assert_eq!(c.id(), b.id());
        assert_ne!(a.id(), b.id());
        assert_eq!(a.modules(), vec![6, 6, 6]);
        assert_eq!(a.deepen(&[1]), Err(ArchError::LengthMismatch { expected: 3, got: 1 }));
    }

    #[test]
    fn projections_at_transitions_only() {
        let a = resnet(3);
        assert!(!a.has_projection(0));
        assert!(a.has_projection(1));
        assert!(a.has_projection(2));
    }

    #[test]
    fn serialization_round_trip_and_canonical() {
        let a = resnet(6).deepen(&[0, 2, 0]).unwrap();
        let bytes = a.serialize();
        assert_eq!(Architecture::deserialize(&bytes).unwrap(), a);
        assert_eq!(resnet(6).deepen(&[0, 2, 0]).unwrap().serialize(), bytes);
        let pretty = a.to_json_pretty();
        assert_eq!(Architecture::deserialize(pretty.as_bytes()).unwrap(), a);
    }

    #[test]
    fn canonical_form_ignores_key_order() {
        let shuffled = br#"{"input_side":32,"num_classes":10,"stem_channels":16,"kind":"residual_basic",
            "stages":[{"spatial":32,"channels":16,"modules":6},{"channels":32,"modules":6,"spatial":16},
            {"modules":6,"spatial":8,"channels":64}]}"#;
        let a = Architecture::deserialize(shuffled).unwrap();
        assert_eq!(a.serialize(), resnet(6).serialize());
        assert_eq!(a.id(), resnet(6).id());
    }

    #[test]
    fn malformed_input_names_field() {
        let bytes = resnet(6).serialize();
        let err = Architecture::deserialize(&bytes[..bytes.len() / 2]).unwrap_err();
        assert!(matches!(err, ArchError::Parse(_)));

        let missing = br#"{"stages":[{"modules":6,"spatial":32}],"kind":"residual_basic","stem_channels":16,"num_classes":10,"input_side":32}"#;
        let msg = Architecture::deserialize(missing).unwrap_err().to_string();
        assert!(msg.contains("channels"), "{msg}");

        let bad_spatial = br#"{"stages":[{"modules":6,"channels":16,"spatial":32},{"modules":6,"channels":32,"spatial":32}],"kind":"residual_basic","stem_channels":16,"num_classes":10,"input_side":32}"#;
        assert_eq!(
            Architecture::deserialize(bad_spatial).unwrap_err(),
            ArchError::SpatialMismatch { stage: 1, expected: 16, got: 32 }
        );
    }

    #[test]
    fn cell_kind_round_trips() {
        let kind = ModuleKind::Cell { cost_profile_id: "toy".into() };
        let a = Architecture::build_uniform(3, 2, kind.clone(), &[32, 64, 128], 32, 10).unwrap();
        assert_eq!(Architecture::deserialize(&a.serialize()).unwrap().kind(), &kind);
        assert_eq!(kind.default_growth_step(), 1);
    }
}
