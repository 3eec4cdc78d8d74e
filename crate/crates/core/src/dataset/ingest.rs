use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    augment, derive_seed, split_dataset, to_labeled, AugmentPlan, DatasetManifest, GlyphSample,
    Provenance, Split, Target, DEFAULT_FRACTIONS,
};
use crate::imgcore::{binarize, RasterImage};
use crate::nn::LabeledSet;
use crate::segment::{normalize_glyph, segment_page, SegmentConfig, WORD_MARGIN};
use crate::synth::{render_sheet, FontStyle};
use crate::taxonomy::{CompositeLabel, Taxonomy};
use crate::{CoreError, Result};

/// Point sizes a glyph sheet may be rendered at.
pub const SHEET_SIZES: [u32; 6] = [15, 20, 25, 30, 35, 40];

/// Cuts a rendered glyph sheet into labeled 32×32 samples.
///
/// Row `i` of `rows` labels line `i` of the sheet in reading order. A row
/// whose glyph count differs from its label count rejects the sheet.
pub fn ingest_glyph_sheet(
    sheet: &RasterImage,
    rows: &[Vec<CompositeLabel>],
    font: &str,
    size_pt: u32,
    config: &SegmentConfig,
) -> Result<Vec<GlyphSample>> {
    if !SHEET_SIZES.contains(&size_pt) {
        return Err(CoreError::Param(format!(
            "sheet font size must be one of {SHEET_SIZES:?}, got {size_pt}"
        )));
    }
    let mask = binarize(sheet)?;
    let words = segment_page(sheet, &mask, config)?;
    let mut lines: Vec<Vec<crate::imgcore::BinaryImage>> = Vec::new();
    for w in &words {
        let region = w.word.bbox.expand(WORD_MARGIN, mask.width(), mask.height());
        let crop = mask.crop(region)?;
        while lines.len() <= w.word.line {
            lines.push(Vec::new());
        }
        for g in &w.glyphs {
            lines[w.word.line].push(normalize_glyph(&crop, g)?);
        }
    }
    // lines beyond the labeled rows are as wrong as missing ones
    if let Some((row, found)) = lines.iter().enumerate().nth(rows.len()) {
        return Err(CoreError::Ingest {
            row,
            expected: 0,
            found: found.len(),
        });
    }
    let mut out = Vec::new();
    for (row, labels) in rows.iter().enumerate() {
        let found = lines.get_mut(row).map(std::mem::take).unwrap_or_default();
        if found.len() != labels.len() {
            return Err(CoreError::Ingest {
                row,
                expected: labels.len(),
                found: found.len(),
            });
        }
        for (patch, &label) in found.into_iter().zip(labels) {
            out.push(GlyphSample {
                patch,
                label,
                provenance: Provenance {
                    font: font.into(),
                    size_pt,
                    augmentation: Vec::new(),
                    seed: 0,
                },
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeskSetConfig {
    pub styles: Vec<String>,
    pub sizes: Vec<u32>,
    /// Augmented samples per label, drawn from `plan`'s variants of random
    /// clean instances.
    pub augmented_per_label: usize,
    pub plan: AugmentPlan,
    /// Labels per sheet row and rows per sheet.
    pub row_len: usize,
    pub rows_per_sheet: usize,
    pub fractions: (f64, f64, f64),
    pub seed: u64,
}

impl Default for DeskSetConfig {
    fn default() -> Self {
        Self {
            styles: vec!["light".into(), "bold".into()],
            // 15 pt leaves the dot marks below the detector's minimum area
            sizes: vec![20, 25, 30],
            augmented_per_label: 4,
            plan: AugmentPlan::default(),
            row_len: 21,
            rows_per_sheet: 4,
            fractions: DEFAULT_FRACTIONS,
            seed: 0,
        }
    }
}

/// Clean sheet samples of every label in every training style and size,
/// plus augmented variants, split and manifested.
#[derive(Debug, Clone)]
pub struct DeskSet {
    pub samples: Vec<GlyphSample>,
    pub manifest: DatasetManifest,
}

impl DeskSet {
    pub fn build(taxonomy: &Taxonomy, config: &DeskSetConfig) -> Result<Self> {
        Self::build_for(taxonomy, &taxonomy.all_labels(), config)
    }

    pub fn build_for(taxonomy: &Taxonomy, labels: &[CompositeLabel], config: &DeskSetConfig) -> Result<Self> {
        if config.row_len == 0 || config.rows_per_sheet == 0 {
            return Err(CoreError::Param("sheet rows must be non-empty".into()));
        }
        let seg = SegmentConfig::default();
        let mut clean = Vec::new();
        let mut page = 0u64;
        for name in &config.styles {
            let style = FontStyle::by_name(name)
                .ok_or_else(|| CoreError::Param(format!("unknown font style {name:?}")))?;
            for &size in &config.sizes {
                for chunk in labels.chunks(config.row_len * config.rows_per_sheet) {
                    let rows: Vec<Vec<CompositeLabel>> =
                        chunk.chunks(config.row_len).map(<[_]>::to_vec).collect();
                    let sheet = render_sheet(taxonomy, &rows, &style, size, derive_seed(config.seed, page))?;
                    page += 1;
                    clean.extend(ingest_glyph_sheet(&sheet, &rows, name, size, &seg)?);
                }
            }
        }
        log::info!("desk set: {} clean samples from {page} sheets", clean.len());

        let mut by_label: std::collections::BTreeMap<CompositeLabel, Vec<usize>> = Default::default();
        for (i, s) in clean.iter().enumerate() {
            by_label.entry(s.label).or_default().push(i);
        }
        let mut samples = clean.clone();
        let variants = config.plan.variant_count();
        if config.augmented_per_label > 0 && variants > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, u64::MAX));
            for (k, idx) in by_label.values().enumerate() {
                for j in 0..config.augmented_per_label {
                    let source = &clean[idx[rng.gen_range(0..idx.len())]];
                    let pick = rng.gen_range(0..variants);
                    let seed = derive_seed(config.seed, (k * config.augmented_per_label + j) as u64);
                    samples.push(augment(source, &config.plan, seed)?.swap_remove(pick));
                }
            }
        }
        let manifest = split_dataset(&samples, config.fractions, config.seed)?;
        Ok(Self { samples, manifest })
    }

    pub fn samples_in(&self, split: Split) -> impl Iterator<Item = &GlyphSample> {
        self.samples
            .iter()
            .zip(&self.manifest.records)
            .filter(move |(_, r)| r.split == split)
            .map(|(s, _)| s)
    }

    pub fn labeled(&self, split: Split, target: Target) -> LabeledSet {
        to_labeled(self.samples_in(split), target)
    }
}
