use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{GlyphSample, Provenance};
use crate::imgcore::{BinaryImage, RasterImage};
use crate::segment::GLYPH_SIDE;
use crate::taxonomy::CompositeLabel;
use crate::{CoreError, Result};

/// Train / val / test, as in the original corpus (≈ 0.70 / 0.10 / 0.20).
pub const DEFAULT_FRACTIONS: (f64, f64, f64) = (0.7, 0.1, 0.2);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    /// Relative to the manifest's directory.
    pub path: String,
    pub main_id: usize,
    pub modifier_id: usize,
    pub split: Split,
    pub provenance: Provenance,
}

impl ManifestRecord {
    pub fn label(&self) -> CompositeLabel {
        CompositeLabel::new(self.main_id, self.modifier_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    /// Taxonomy file the ids refer to, or `"desk"` for the built-in one.
    pub taxonomy: String,
    pub counts: SplitCounts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub taxonomy: String,
    /// In the order of the samples that were split.
    pub records: Vec<ManifestRecord>,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: ManifestHeader,
}

impl DatasetManifest {
    pub fn counts(&self) -> SplitCounts {
        let mut c = SplitCounts::default();
        for r in &self.records {
            match r.split {
                Split::Train => c.train += 1,
                Split::Val => c.val += 1,
                Split::Test => c.test += 1,
            }
        }
        c
    }

    pub fn header(&self) -> ManifestHeader {
        ManifestHeader {
            taxonomy: self.taxonomy.clone(),
            counts: self.counts(),
        }
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    /// JSON lines: the header, then one record per sample.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(&mut out, &HeaderLine { header: self.header() })?;
        out.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    /// Loads the patches of `split` (all when `None`) relative to `root`.
    pub fn load_samples(&self, root: impl AsRef<Path>, split: Option<Split>) -> Result<Vec<GlyphSample>> {
        let root = root.as_ref();
        self.records
            .iter()
            .filter(|r| split.is_none_or(|s| r.split == s))
            .map(|r| {
                let img = RasterImage::load(root.join(&r.path))?;
                if (img.width(), img.height()) != (GLYPH_SIDE, GLYPH_SIDE) {
                    return Err(CoreError::Manifest(format!(
                        "{}: expected a {GLYPH_SIDE}x{GLYPH_SIDE} patch, got {}x{}",
                        r.path,
                        img.width(),
                        img.height()
                    )));
                }
                let patch = BinaryImage::new(
                    GLYPH_SIDE,
                    GLYPH_SIDE,
                    img.data().iter().map(|&v| (v < 128) as u8).collect(),
                )?;
                Ok(GlyphSample {
                    patch,
                    label: r.label(),
                    provenance: r.provenance.clone(),
                })
            })
            .collect()
    }
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines();
    let first = lines
        .next()
        .ok_or_else(|| CoreError::Manifest(format!("{}: empty manifest", path.display())))??;
    let header: HeaderLine = serde_json::from_str(&first)
        .map_err(|e| CoreError::Manifest(format!("{}: bad header: {e}", path.display())))?;
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| {
            CoreError::Manifest(format!("{}:{}: {e}", path.display(), i + 2))
        })?);
    }
    let m = DatasetManifest {
        taxonomy: header.header.taxonomy,
        records,
    };
    if m.counts() != header.header.counts {
        return Err(CoreError::Manifest(format!(
            "{}: header counts {:?} do not match records {:?}",
            path.display(),
            header.header.counts,
            m.counts()
        )));
    }
    Ok(m)
}

fn png_of(patch: &BinaryImage) -> Vec<u8> {
    patch.to_raster().encode_png()
}

/// `ab/abcdef0123456789.png`, from the SHA-256 of the PNG bytes.
pub fn content_path(patch: &BinaryImage) -> String {
    let digest = hex::encode(Sha256::digest(png_of(patch)));
    format!("{}/{}.png", &digest[..2], &digest[..16])
}

/// Stratified by label: each class is shuffled with `seed` and cut at
/// rounded fractions. Classes with fewer than 3 samples go to train.
pub fn split_dataset(
    samples: &[GlyphSample],
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetManifest> {
    let (ft, fv, fs) = fractions;
    if [ft, fv, fs].iter().any(|f| !(0.0..=1.0).contains(f)) || (ft + fv + fs - 1.0).abs() > 1e-9 {
        return Err(CoreError::Param(format!(
            "split fractions must be in [0, 1] and sum to 1, got {fractions:?}"
        )));
    }
    let mut by_class: BTreeMap<CompositeLabel, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        by_class.entry(s.label).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = vec![Split::Train; samples.len()];
    for (label, mut idx) in by_class {
        let n = idx.len();
        if n < 3 {
            log::warn!("class {label:?} has {n} samples; all go to train");
            continue;
        }
        idx.shuffle(&mut rng);
        let n_train = ((ft * n as f64).round() as usize).min(n);
        let n_val = ((fv * n as f64).round() as usize).min(n - n_train);
        for &i in &idx[n_train..n_train + n_val] {
            split[i] = Split::Val;
        }
        for &i in &idx[n_train + n_val..] {
            split[i] = Split::Test;
        }
    }
    let records = samples
        .iter()
        .zip(split)
        .map(|(s, split)| ManifestRecord {
            path: content_path(&s.patch),
            main_id: s.label.main_id,
            modifier_id: s.label.modifier_id,
            split,
            provenance: s.provenance.clone(),
        })
        .collect();
    Ok(DatasetManifest {
        taxonomy: "desk".into(),
        records,
    })
}

/// Writes every sample's PNG under `dir` and the manifest as
/// `dir/manifest.jsonl`. Identical patches share a file.
pub fn write_dataset(dir: impl AsRef<Path>, samples: &[GlyphSample], manifest: &DatasetManifest) -> Result<()> {
    let dir = dir.as_ref();
    if samples.len() != manifest.records.len() {
        return Err(CoreError::Manifest(format!(
            "{} samples for {} records",
            samples.len(),
            manifest.records.len()
        )));
    }
    for (s, r) in samples.iter().zip(&manifest.records) {
        let path = dir.join(&r.path);
        if path.exists() {
            continue;
        }
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, png_of(&s.patch))?;
    }
    manifest.write(dir.join("manifest.jsonl"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(label: CompositeLabel, k: usize) -> GlyphSample {
        let patch = BinaryImage::from_fn(GLYPH_SIDE, GLYPH_SIDE, |r, c| (r * 32 + c) % (k + 2) == 0).unwrap();
        GlyphSample {
            patch,
            label,
            provenance: Provenance {
                font: "light".into(),
                size_pt: 20,
                augmentation: vec![],
                seed: k as u64,
            },
        }
    }

    #[test]
    fn hundred_per_class_splits_exactly() {
        let samples: Vec<GlyphSample> = (0..300)
            .map(|i| sample(CompositeLabel::new(i % 3, 0), i))
            .collect();
        let m = split_dataset(&samples, DEFAULT_FRACTIONS, 1).unwrap();
        for class in 0..3 {
            let mut c = SplitCounts::default();
            for (s, r) in samples.iter().zip(&m.records) {
                if s.label.main_id == class {
                    match r.split {
                        Split::Train => c.train += 1,
                        Split::Val => c.val += 1,
                        Split::Test => c.test += 1,
                    }
                }
            }
            assert_eq!(c, SplitCounts { train: 70, val: 10, test: 20 });
        }
        assert_eq!(m, split_dataset(&samples, DEFAULT_FRACTIONS, 1).unwrap());
        assert_ne!(m, split_dataset(&samples, DEFAULT_FRACTIONS, 2).unwrap());
    }

    #[test]
    fn tiny_classes_go_to_train() {
        let samples: Vec<GlyphSample> = (0..2).map(|i| sample(CompositeLabel::new(0, 0), i)).collect();
        let m = split_dataset(&samples, DEFAULT_FRACTIONS, 0).unwrap();
        assert!(m.records.iter().all(|r| r.split == Split::Train));
    }

    #[test]
    fn fractions_must_sum_to_one() {
        assert!(split_dataset(&[], (0.7, 0.2, 0.2), 0).is_err());
        assert!(split_dataset(&[], (1.2, -0.1, -0.1), 0).is_err());
    }

    #[test]
    fn paths_are_content_addressed() {
        let a = sample(CompositeLabel::new(0, 0), 3);
        let mut b = sample(CompositeLabel::new(1, 0), 3);
        assert_eq!(content_path(&a.patch), content_path(&b.patch));
        b.patch.set(0, 1, !b.patch.get(0, 1));
        assert_ne!(content_path(&a.patch), content_path(&b.patch));
        let p = content_path(&a.patch);
        assert_eq!(p.len(), 2 + 1 + 16 + 4);
        assert_eq!(&p[..2], &p[3..5]);
    }
}
