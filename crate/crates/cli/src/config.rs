//! TOML configuration file. Sections mirror the subcommand flags; any key
//! may be omitted.
//!
//! ```toml
//! seed = 7
//! [toy_model]
//! vertices = 600
//! [generation]
//! image_size = 128
//! [augmentation]
//! occlusion_box_prob = 0.3
//! [poses]
//! std = 0.3
//! [benchmark]
//! subjects = 200
//! [network]
//! hidden = 256
//! [training]
//! epochs = 20
//! [evaluate]
//! group_sizes = [1, 2, 4]
//! [uncertainty]
//! samples = 100
//! ```

use std::path::{Path, PathBuf};

use anyhow::Context;
use probfuse::metrics::Combination;
use probfuse::predictor::{NetConfig, TrainConfig};
use probfuse::synth::{AugmentationConfig, CorruptMode, GenerationConfig};
use serde::Deserialize;

use crate::args::{AugmentationFlags, GenerationFlags};

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub toy_model: ToyModelSection,
    pub generation: GenerationConfig,
    pub augmentation: AugmentationConfig,
    pub poses: PoseSection,
    pub benchmark: BenchmarkSection,
    pub network: NetConfig,
    pub training: TrainConfig,
    pub evaluate: EvaluateSection,
    pub uncertainty: UncertaintySection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyModelSection {
    pub vertices: Option<usize>,
    pub joints: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseSection {
    pub std: Option<f64>,
    pub bank: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSection {
    pub subjects: Option<usize>,
    pub views: Option<usize>,
    pub corrupt: Option<CorruptMode>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub group_sizes: Option<Vec<usize>>,
    pub combinations: Option<Vec<Combination>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UncertaintySection {
    pub samples: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn generation(&self, f: &GenerationFlags) -> GenerationConfig {
        let mut g = self.generation;
        set(&mut g.image_size, f.image_size);
        set(&mut g.focal, f.focal);
        set(&mut g.shape_mean, f.shape_mean);
        set(&mut g.shape_var, f.shape_var);
        set(&mut g.confidence_threshold, f.confidence_threshold);
        if let Some(v) = &f.cam_mean {
            g.cam_translation_mean = [v[0], v[1], v[2]];
        }
        if let Some(v) = &f.cam_var {
            g.cam_translation_var = [v[0], v[1], v[2]];
        }
        g
    }

    pub fn augmentation(&self, f: &AugmentationFlags) -> AugmentationConfig {
        let mut a = self.augmentation;
        set(&mut a.body_part_occlusion_prob, f.p_part_occlusion);
        set(&mut a.joint_lr_swap_prob, f.p_lr_swap);
        set(&mut a.half_image_occlusion_prob, f.p_half_image);
        set(&mut a.joint_removal_prob, f.p_joint_removal);
        set(&mut a.joint_noise_range, f.joint_noise);
        set(&mut a.vertex_noise_range, f.vertex_noise);
        set(&mut a.occlusion_box_prob, f.p_occlusion_box);
        set(&mut a.occlusion_box_size, f.occlusion_box_size);
        a
    }

    pub fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.seed).unwrap_or(0)
    }
}

/// Overwrites `slot` when a flag was given.
pub fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}
