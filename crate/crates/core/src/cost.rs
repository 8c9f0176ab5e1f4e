//! Analytical cost model: depth, parameters, multiply-accumulates, activation
//! memory and training emissions.
//!
//! Conventions:
//! - the stem is a 3×3 stride-1 convolution from [`INPUT_CHANNELS`] to the stem width;
//! - the first module of every stage after the first has stride 2, and a 1×1
//!   projection shortcut is added wherever the resolution or width changes;
//! - every convolution is followed by a normalization layer contributing
//!   `2·channels` parameters and no MACs;
//! - FLOPs are multiply-accumulates at batch 1 (`H_out·W_out·k²·C_in·C_out`);
//! - depth counts the stem, module convolutions and the classifier, but not
//!   projection shortcuts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{Architecture, ModuleKind, BOTTLENECK_EXPANSION, INPUT_CHANNELS};

const BYTES_PER_VALUE: f64 = 4.0;
const MIB: f64 = (1u64 << 20) as f64;

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("no cost profile registered for cell `{0}`")]
    MissingProfile(String),
    #[error("emissions input `{field}` must be strictly positive, got {value}")]
    NonPositive { field: &'static str, value: f64 },
    #[error("pue must be at least 1, got {0}")]
    PueBelowOne(f64),
    #[error("invalid cost profile `{id}`: {reason}")]
    InvalidProfile { id: String, reason: String },
    #[error("profile file: {0}")]
    Parse(String),
}

/// Polynomial in the channel count: `Σ coeffs[k]·C^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChannelPoly(pub Vec<f64>);

impl ChannelPoly {
    pub fn eval(&self, channels: usize) -> f64 {
        let c = channels as f64;
        self.0.iter().rev().fold(0.0, |acc, &k| acc * c + k)
    }
}

/// User-supplied cost table for an abstract cell at a given width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellProfile {
    /// Convolutional layers counted towards depth per cell.
    pub layers_per_cell: usize,
    /// Parameters of one cell as a function of its output channels.
    pub params: ChannelPoly,
    /// MACs per output spatial position; multiplied by `spatial²`.
    pub macs_per_position: ChannelPoly,
    /// Activation elements per output spatial position; multiplied by `spatial²`.
    pub activations_per_position: ChannelPoly,
}

/// Cell profiles keyed by id, as loaded from a profile file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CostProfiles(pub BTreeMap<String, CellProfile>);

impl CostProfiles {
    pub fn from_json(bytes: &[u8]) -> Result<Self, CostError> {
        let profiles: CostProfiles = serde_json::from_slice(bytes).map_err(|e| CostError::Parse(e.to_string()))?;
        for (id, p) in &profiles.0 {
            for (name, poly) in [
                ("params", &p.params),
                ("macs_per_position", &p.macs_per_position),
                ("activations_per_position", &p.activations_per_position),
            ] {
                if poly.0.iter().any(|c| !c.is_finite() || *c < 0.0) {
                    return Err(CostError::InvalidProfile {
                        id: id.clone(),
                        reason: format!("{name} coefficients must be finite and non-negative"),
                    });
                }
            }
        }
        Ok(profiles)
    }

    pub fn insert(&mut self, id: impl Into<String>, profile: CellProfile) {
        self.0.insert(id.into(), profile);
    }

    pub fn get(&self, id: &str) -> Result<&CellProfile, CostError> {
        self.0.get(id).ok_or_else(|| CostError::MissingProfile(id.to_string()))
    }
}

/// Training emissions inputs, in the units of common ML emissions calculators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmissionsInput {
    pub runtime_hours: f64,
    pub device_power_kw: f64,
    /// kgCO₂eq per kWh.
    pub grid_intensity: f64,
    #[serde(default = "default_pue")]
    pub pue: f64,
}

fn default_pue() -> f64 {
    1.0
}

impl EmissionsInput {
    pub fn validate(&self) -> Result<(), CostError> {
        for (field, value) in [
            ("runtime_hours", self.runtime_hours),
            ("device_power_kw", self.device_power_kw),
            ("grid_intensity", self.grid_intensity),
            ("pue", self.pue),
        ] {
            if !value.is_finite() || value <= 0.0 {
                return Err(CostError::NonPositive { field, value });
            }
        }
        if self.pue < 1.0 {
            return Err(CostError::PueBelowOne(self.pue));
        }
        Ok(())
    }
}

/// kgCO₂eq = hours · kW · PUE · (kg/kWh).
pub fn emissions(e: &EmissionsInput) -> Result<f64, CostError> {
    e.validate()?;
    Ok(e.runtime_hours * e.device_power_kw * e.pue * e.grid_intensity)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub depth: usize,
    pub params: u64,
    pub flops: u64,
    pub memory_mb: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub carbon_kg: Option<f64>,
}

/// Running totals for one forward pass.
#[derive(Debug, Default, Clone, Copy, PartialEq)]
struct Tally {
    params: f64,
    macs: f64,
    activations: f64,
}

impl Tally {
    /// k×k convolution followed by normalization.
    fn conv(&mut self, k: usize, c_in: usize, c_out: usize, out_side: usize) {
        let (k, c_in, c_out, side) = (k as f64, c_in as f64, c_out as f64, out_side as f64);
        self.params += k * k * c_in * c_out + 2.0 * c_out;
        self.macs += side * side * k * k * c_in * c_out;
        self.activations += side * side * c_out;
    }
}

/// Convolutional layers of the network, following the convention in the
/// module docs.
pub fn depth(a: &Architecture, profiles: &CostProfiles) -> Result<usize, CostError> {
    let per_module = match a.kind() {
        ModuleKind::Cell { cost_profile_id } => profiles.get(cost_profile_id)?.layers_per_cell,
        kind => kind.fixed_layers().expect("residual kinds have fixed layer counts"),
    };
    Ok(per_module * a.modules().iter().sum::<usize>() + 2)
}

/// Depth of a residual network; cells need [`depth`] with a profile.
pub fn residual_depth(a: &Architecture) -> Option<usize> {
    a.kind()
        .fixed_layers()
        .map(|l| l * a.modules().iter().sum::<usize>() + 2)
}

fn tally(a: &Architecture, profiles: &CostProfiles) -> Result<Tally, CostError> {
    let cell = match a.kind() {
        ModuleKind::Cell { cost_profile_id } => Some(profiles.get(cost_profile_id)?),
        _ => None,
    };
    let mut t = Tally::default();
    t.conv(3, INPUT_CHANNELS, a.stem_channels(), a.input_side());

    for (i, stage) in a.stages().iter().enumerate() {
        let side = stage.spatial;
        let c = stage.channels;
        for j in 0..stage.modules {
            let c_in = if j == 0 { a.stage_input_channels(i) } else { c };
            match a.kind() {
                ModuleKind::ResidualBasic => {
                    t.conv(3, c_in, c, side);
                    t.conv(3, c, c, side);
                }
                ModuleKind::ResidualBottleneck => {
                    let w = c / BOTTLENECK_EXPANSION;
                    // 1×1 reduce runs at the input resolution; stride lives in the 3×3.
                    let in_side = if j == 0 { side * a.stage_stride(i) } else { side };
                    t.conv(1, c_in, w, in_side);
                    t.conv(3, w, w, side);
                    t.conv(1, w, c, side);
                }
                ModuleKind::Cell { .. } => {
                    let p = cell.expect("cell profile resolved above");
                    let positions = (side * side) as f64;
                    t.params += p.params.eval(c);
                    t.macs += p.macs_per_position.eval(c) * positions;
                    t.activations += p.activations_per_position.eval(c) * positions;
                }
            }
        }
        if a.has_projection(i) {
            t.conv(1, a.stage_input_channels(i), c, side);
        }
    }

    let last = a.stages().last().expect("at least one stage").channels as f64;
    let classes = a.num_classes() as f64;
    t.params += last * classes + classes;
    t.macs += last * classes;
    Ok(t)
}

pub fn params(a: &Architecture, profiles: &CostProfiles) -> Result<u64, CostError> {
    Ok(tally(a, profiles)?.params.round() as u64)
}

pub fn flops(a: &Architecture, profiles: &CostProfiles) -> Result<u64, CostError> {
    Ok(tally(a, profiles)?.macs.round() as u64)
}

/// Approximate training-free footprint in MiB: fp32 parameters plus fp32
/// activations of every convolution output at batch 1.
pub fn memory(a: &Architecture, profiles: &CostProfiles) -> Result<f64, CostError> {
    let t = tally(a, profiles)?;
    Ok(BYTES_PER_VALUE * (t.params + t.activations) / MIB)
}

pub fn cost_report(
    a: &Architecture,
    profiles: &CostProfiles,
    emissions_input: Option<&EmissionsInput>,
) -> Result<CostReport, CostError> {
    let t = tally(a, profiles)?;
    Ok(CostReport {
        depth: depth(a, profiles)?,
        params: t.params.round() as u64,
        flops: t.macs.round() as u64,
        memory_mb: BYTES_PER_VALUE * (t.params + t.activations) / MIB,
        carbon_kg: emissions_input.map(emissions).transpose()?,
    })
}

/// Parameter count of the named part of a network, used to weight transfer
/// coverage. Cell modules without a profile weigh 1.
pub(crate) fn module_params(a: &Architecture, stage: usize, module: usize, profiles: &CostProfiles) -> f64 {
    let s = &a.stages()[stage];
    let c_in = if module == 0 { a.stage_input_channels(stage) } else { s.channels };
    let mut t = Tally::default();
    match a.kind() {
        ModuleKind::ResidualBasic => {
            t.conv(3, c_in, s.channels, 1);
            t.conv(3, s.channels, s.channels, 1);
        }
        ModuleKind::ResidualBottleneck => {
            let w = s.channels / BOTTLENECK_EXPANSION;
            t.conv(1, c_in, w, 1);
            t.conv(3, w, w, 1);
            t.conv(1, w, s.channels, 1);
        }
        ModuleKind::Cell { cost_profile_id } => {
            return profiles.get(cost_profile_id).map(|p| p.params.eval(s.channels)).unwrap_or(1.0);
        }
    }
    t.params
}

pub(crate) fn stem_params(a: &Architecture) -> f64 {
    let mut t = Tally::default();
    t.conv(3, INPUT_CHANNELS, a.stem_channels(), 1);
    t.params
}

pub(crate) fn shortcut_params(a: &Architecture, stage: usize) -> f64 {
    let mut t = Tally::default();
    t.conv(1, a.stage_input_channels(stage), a.stages()[stage].channels, 1);
    t.params
}

pub(crate) fn classifier_params(a: &Architecture) -> f64 {
    let last = a.stages().last().expect("at least one stage").channels as f64;
    let classes = a.num_classes() as f64;
    last * classes + classes
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resnet(m: &[usize]) -> Architecture {
        Architecture::build(m, ModuleKind::ResidualBasic, &[16, 32, 64], 16, 32, 10).unwrap()
    }

    fn none() -> CostProfiles {
        CostProfiles::default()
    }

    #[test]
    fn depth_convention() {
        assert_eq!(depth(&resnet(&[7, 7, 7]), &none()).unwrap(), 44);
        assert_eq!(depth(&resnet(&[9, 9, 9]), &none()).unwrap(), 56);
        assert_eq!(depth(&resnet(&[18, 18, 18]), &none()).unwrap(), 110);
        assert_eq!(depth(&resnet(&[1, 1, 1]), &none()).unwrap(), 8);
        for m in 1..30 {
            assert_eq!(residual_depth(&resnet(&[m, m, m])), Some(6 * m + 2));
        }
    }

    // Hand-summed layer by layer for m = (1, 1, 1):
    //   stem 3·3·3·16 + 32 = 464, 32·32·16 activations
    //   stage 0: 2·(9·16·16 + 32) = 4672, 2·32·32·16 activations
    //   stage 1: 9·16·32 + 64 + 9·32·32 + 64 + (16·32 + 64) = 14528, 3·16·16·32 activations
    //   stage 2: 9·32·64 + 128 + 9·64·64 + 128 + (32·64 + 128) = 57728, 3·8·8·64 activations
    //   classifier 64·10 + 10 = 650
    #[test]
    fn one_module_per_stage_by_hand() {
        let a = resnet(&[1, 1, 1]);
        let p = 464 + 4672 + 14528 + 57728 + 650;
        assert_eq!(params(&a, &none()).unwrap(), p);
        let macs: u64 = 32 * 32 * 27 * 16
            + 2 * 32 * 32 * 9 * 16 * 16
            + 16 * 16 * (9 * 16 * 32 + 9 * 32 * 32 + 16 * 32)
            + 8 * 8 * (9 * 32 * 64 + 9 * 64 * 64 + 32 * 64)
            + 640;
        assert_eq!(flops(&a, &none()).unwrap(), macs);
        let acts = 32 * 32 * 16 + 2 * 32 * 32 * 16 + 3 * 16 * 16 * 32 + 3 * 8 * 8 * 64;
        let expected = 4.0 * (p + acts) as f64 / (1 << 20) as f64;
        assert!((memory(&a, &none()).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn single_stage_single_module_by_hand() {
        let a = Architecture::build_uniform(1, 1, ModuleKind::ResidualBasic, &[16], 32, 10).unwrap();
        // stem + two 16→16 convs, no projection, classifier on 16 channels
        assert_eq!(params(&a, &none()).unwrap(), 464 + 2 * (2304 + 32) + 170);
    }

    #[test]
    fn adding_a_block_adds_its_exact_macs() {
        let base = resnet(&[1, 1, 1]);
        let deeper = resnet(&[2, 2, 2]);
        let extra = 32 * 32 * 2 * 9 * 16 * 16 + 16 * 16 * 2 * 9 * 32 * 32 + 8 * 8 * 2 * 9 * 64 * 64;
        assert_eq!(flops(&deeper, &none()).unwrap() - flops(&base, &none()).unwrap(), extra);
    }

    #[test]
    fn monotone_in_every_stage() {
        let base = resnet(&[6, 6, 6]);
        let b = cost_report(&base, &none(), None).unwrap();
        for i in 0..3 {
            let mut d = [0; 3];
            d[i] = 1;
            let r = cost_report(&base.deepen(&d).unwrap(), &none(), None).unwrap();
            assert!(r.depth > b.depth && r.params > b.params && r.flops > b.flops && r.memory_mb > b.memory_mb);
        }
        assert!(memory(&resnet(&[6, 8, 6]), &none()).unwrap() > memory(&base, &none()).unwrap());
    }

    #[test]
    fn memory_lower_bound() {
        let a = resnet(&[6, 6, 6]);
        let p = params(&a, &none()).unwrap() as f64;
        assert!(memory(&a, &none()).unwrap() >= 4.0 * p / (1 << 20) as f64);
    }

    #[test]
    fn bottleneck_counts() {
        let a = Architecture::build_uniform(4, 1, ModuleKind::ResidualBottleneck, &[256, 512, 1024, 2048], 56, 1000)
            .unwrap();
        assert_eq!(a.stem_channels(), 64);
        assert_eq!(depth(&a, &none()).unwrap(), 14);
        // first module of stage 0: 64→64 (1×1), 64→64 (3×3), 64→256 (1×1), projection 64→256
        let first = (64 * 64 + 128) + (9 * 64 * 64 + 128) + (64 * 256 + 512) + (64 * 256 + 512);
        let only_stage0 = Architecture::build(&[1], ModuleKind::ResidualBottleneck, &[256], 64, 56, 10).unwrap();
        assert_eq!(params(&only_stage0, &none()).unwrap(), (27 * 64 + 128) + first + 256 * 10 + 10);
    }

    #[test]
    fn cell_requires_profile() {
        let kind = ModuleKind::Cell { cost_profile_id: "toy".into() };
        let a = Architecture::build_uniform(2, 2, kind, &[8, 16], 8, 2).unwrap();
        assert_eq!(params(&a, &none()), Err(CostError::MissingProfile("toy".into())));

        let mut profiles = CostProfiles::default();
        profiles.insert(
            "toy",
            CellProfile {
                layers_per_cell: 5,
                params: ChannelPoly(vec![0.0, 0.0, 10.0]),
                macs_per_position: ChannelPoly(vec![0.0, 0.0, 10.0]),
                activations_per_position: ChannelPoly(vec![0.0, 4.0]),
            },
        );
        assert_eq!(depth(&a, &profiles).unwrap(), 5 * 4 + 2);
        let stem = 27 * 8 + 16;
        let cells = 2 * 640 + 2 * 2560;
        let projection = 8 * 16 + 32;
        let classifier = 16 * 2 + 2;
        assert_eq!(params(&a, &profiles).unwrap(), (stem + cells + projection + classifier) as u64);
        let macs = 64 * 27 * 8 + 2 * 640 * 64 + 2 * 2560 * 16 + 16 * 8 * 16 + 32;
        assert_eq!(flops(&a, &profiles).unwrap(), macs as u64);
    }

    #[test]
    fn profile_file_parsing() {
        let json = br#"{"nasnet_a": {"layers_per_cell": 20, "params": [0, 0, 12.5],
            "macs_per_position": [0, 0, 12.5], "activations_per_position": [0, 10]}}"#;
        let p = CostProfiles::from_json(json).unwrap();
        assert_eq!(p.get("nasnet_a").unwrap().layers_per_cell, 20);
        assert!(matches!(CostProfiles::from_json(b"{\"x\": {\"layers_per_cell\": 1}}"), Err(CostError::Parse(_))));
        let negative = br#"{"x": {"layers_per_cell": 1, "params": [-1], "macs_per_position": [0], "activations_per_position": [0]}}"#;
        assert!(matches!(CostProfiles::from_json(negative), Err(CostError::InvalidProfile { .. })));
    }

    #[test]
    fn emissions_arithmetic() {
        let e = EmissionsInput { runtime_hours: 36.0, device_power_kw: 0.25, grid_intensity: 0.25, pue: 1.0 };
        assert_eq!(emissions(&e).unwrap(), 2.25);
        let doubled = EmissionsInput { runtime_hours: 72.0, ..e.clone() };
        assert_eq!(emissions(&doubled).unwrap(), 4.5);
        let zero = EmissionsInput { runtime_hours: 0.0, ..e.clone() };
        assert_eq!(emissions(&zero), Err(CostError::NonPositive { field: "runtime_hours", value: 0.0 }));
        let low_pue = EmissionsInput { pue: 0.5, ..e };
        assert_eq!(emissions(&low_pue), Err(CostError::PueBelowOne(0.5)));
    }

    #[test]
    fn report_carries_carbon() {
        let e = EmissionsInput { runtime_hours: 1.0, device_power_kw: 0.3, grid_intensity: 0.5, pue: 1.2 };
        let r = cost_report(&resnet(&[9, 9, 9]), &none(), Some(&e)).unwrap();
        assert!((r.carbon_kg.unwrap() - 0.18).abs() < 1e-12);
        let json = serde_json::to_string(&cost_report(&resnet(&[1, 1, 1]), &none(), None).unwrap()).unwrap();
        assert!(!json.contains("carbon_kg"));
    }
}
