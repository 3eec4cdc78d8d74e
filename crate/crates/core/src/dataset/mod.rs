//! Dataset construction: glyph-sheet ingestion, augmentation, stratified
//! splits and the on-disk manifest.

mod augment;
mod ingest;
mod manifest;

pub use augment::{
    add_noise, augment, displacement_field, elastic_deform, noise_residuals, noise_variance,
    random_crop, random_crop_with_window, rotate_aug, AugStep, AugmentPlan, Patch,
    MAX_CROP_SHIFT, ROTATIONS,
};
pub use ingest::{ingest_glyph_sheet, DeskSet, DeskSetConfig, SHEET_SIZES};
pub use manifest::{
    content_path, read_manifest, split_dataset, write_dataset, DatasetManifest, ManifestHeader,
    ManifestRecord, Split, SplitCounts, DEFAULT_FRACTIONS,
};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::imgcore::BinaryImage;
use crate::nn::LabeledSet;
use crate::segment::GLYPH_SIDE;
use crate::taxonomy::CompositeLabel;

/// Where a sample came from and everything that was done to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub font: String,
    pub size_pt: u32,
    pub augmentation: Vec<AugStep>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlyphSample {
    /// Always 32×32.
    pub patch: BinaryImage,
    pub label: CompositeLabel,
    pub provenance: Provenance,
}

/// Independent stream `index` of the generator seeded by `seed`, so a
/// worker handling sample `index` draws the same numbers in any schedule.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng.next_u64()
}

/// Which label a network learns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Main,
    Modifier,
}

impl Target {
    pub fn of(self, label: CompositeLabel) -> usize {
        match self {
            Target::Main => label.main_id,
            Target::Modifier => label.modifier_id,
        }
    }
}

impl std::str::FromStr for Target {
    type Err = crate::CoreError;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "main" => Ok(Target::Main),
            "modifier" | "mod" => Ok(Target::Modifier),
            _ => Err(crate::CoreError::Param(format!(
                "target must be main or modifier, got {s:?}"
            ))),
        }
    }
}

/// Network input for a batch of samples.
pub fn to_labeled<'a>(samples: impl IntoIterator<Item = &'a GlyphSample>, target: Target) -> LabeledSet {
    let mut set = LabeledSet::new(GLYPH_SIDE * GLYPH_SIDE);
    for s in samples {
        set.push(&s.patch.to_f32(), target.of(s.label));
    }
    set
}
