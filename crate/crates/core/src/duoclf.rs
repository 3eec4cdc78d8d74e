//! Two networks over the same glyph patch: one names the main character,
//! the other the attached modifier. Their argmaxes fuse into a
//! [`CompositeLabel`].

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::GlyphSample;
use crate::imgcore::BinaryImage;
use crate::nn::{argmax, load_model, save_model, Model, Predictor, Tensor};
use crate::segment::GLYPH_SIDE;
use crate::taxonomy::{CompositeLabel, Taxonomy};
use crate::{CoreError, Result};

pub type SharedPredictor = Arc<dyn Predictor + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlyphPrediction {
    pub label: CompositeLabel,
    pub main_confidence: f32,
    pub modifier_confidence: f32,
    /// False when the script does not form this pair; it is passed through.
    pub valid: bool,
    /// Set only when a reject threshold is configured and either
    /// confidence falls below it.
    pub rejected: bool,
}

/// Main and modifier networks with the taxonomy they were trained on.
/// Immutable once built; share it across threads freely.
#[derive(Clone)]
pub struct DualModel {
    main: SharedPredictor,
    modifier: SharedPredictor,
    taxonomy: Taxonomy,
    reject_below: Option<f32>,
}

impl std::fmt::Debug for DualModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DualModel")
            .field("main_classes", &self.main.classes())
            .field("modifier_classes", &self.modifier.classes())
            .field("reject_below", &self.reject_below)
            .finish()
    }
}

impl DualModel {
    pub fn new(main: SharedPredictor, modifier: SharedPredictor, taxonomy: Taxonomy) -> Result<Self> {
        if main.classes() != taxonomy.n_main() {
            return Err(CoreError::Config(format!(
                "main network has {} classes, taxonomy has {} mains",
                main.classes(),
                taxonomy.n_main()
            )));
        }
        if modifier.classes() != taxonomy.n_modifier() {
            return Err(CoreError::Config(format!(
                "modifier network has {} classes, taxonomy has {} modifiers",
                modifier.classes(),
                taxonomy.n_modifier()
            )));
        }
        Ok(Self {
            main,
            modifier,
            taxonomy,
            reject_below: None,
        })
    }

    pub fn from_models(main: Model, modifier: Model, taxonomy: Taxonomy) -> Result<Self> {
        Self::new(Arc::new(main), Arc::new(modifier), taxonomy)
    }

    /// Flags predictions whose confidence falls below `tau`. Off by default.
    pub fn with_reject_threshold(mut self, tau: Option<f32>) -> Self {
        self.reject_below = tau;
        self
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    pub fn classify_glyph(&self, patch: &BinaryImage) -> Result<GlyphPrediction> {
        Ok(self.classify_batch(std::slice::from_ref(patch))?.remove(0))
    }

    /// Both networks in eval mode on the same patches.
    pub fn classify_batch(&self, patches: &[BinaryImage]) -> Result<Vec<GlyphPrediction>> {
        if patches.is_empty() {
            return Ok(Vec::new());
        }
        let n = GLYPH_SIDE * GLYPH_SIDE;
        let mut data = Vec::with_capacity(patches.len() * n);
        for p in patches {
            if (p.width(), p.height()) != (GLYPH_SIDE, GLYPH_SIDE) {
                return Err(CoreError::Dimension(format!(
                    "glyph patch must be {GLYPH_SIDE}x{GLYPH_SIDE}, got {}x{}",
                    p.width(),
                    p.height()
                )));
            }
            data.extend(p.to_f32());
        }
        let batch = Tensor::from_vec(&[patches.len(), n], data)?;
        let main = self.main.predict_proba(&batch)?;
        let modifier = self.modifier.predict_proba(&batch)?;
        let rows = main
            .data()
            .chunks(self.main.classes())
            .zip(modifier.data().chunks(self.modifier.classes()));
        rows.map(|(pm, pv)| {
            let (m, v) = (argmax(pm), argmax(pv));
            let label = CompositeLabel::new(m, v);
            let (cm, cv) = (pm[m].clamp(0.0, 1.0), pv[v].clamp(0.0, 1.0));
            Ok(GlyphPrediction {
                label,
                main_confidence: cm,
                modifier_confidence: cv,
                valid: self.taxonomy.is_valid(label)?,
                rejected: self.reject_below.is_some_and(|t| cm.min(cv) < t),
            })
        })
        .collect()
    }
}

/// The label's text per the taxonomy's composition rules.
pub fn compose_unicode(label: CompositeLabel, taxonomy: &Taxonomy) -> Result<String> {
    taxonomy.compose(label)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualAccuracy {
    pub main: f64,
    pub modifier: f64,
    /// Both networks right.
    pub joint: f64,
}

pub fn evaluate_dual(model: &DualModel, samples: &[GlyphSample]) -> Result<DualAccuracy> {
    if samples.is_empty() {
        return Err(CoreError::NoContent("cannot evaluate an empty dataset".into()));
    }
    let (mut main, mut modifier, mut joint) = (0usize, 0usize, 0usize);
    for chunk in samples.chunks(256) {
        let patches: Vec<BinaryImage> = chunk.iter().map(|s| s.patch.clone()).collect();
        for (p, s) in model.classify_batch(&patches)?.iter().zip(chunk) {
            let m = p.label.main_id == s.label.main_id;
            let v = p.label.modifier_id == s.label.modifier_id;
            main += m as usize;
            modifier += v as usize;
            joint += (m && v) as usize;
        }
    }
    let n = samples.len() as f64;
    Ok(DualAccuracy {
        main: main as f64 / n,
        modifier: modifier as f64 / n,
        joint: joint as f64 / n,
    })
}

/// `bundle.json`: where the two model files and the taxonomy live,
/// relative to the bundle file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub main_model: PathBuf,
    pub modifier_model: PathBuf,
    /// A taxonomy JSON file, or `"desk"` for the built-in one.
    pub taxonomy: PathBuf,
}

pub const BUNDLE_FILE: &str = "bundle.json";

/// Writes both models, the taxonomy and `bundle.json` into `dir`.
pub fn save_bundle(dir: impl AsRef<Path>, main: &Model, modifier: &Model, taxonomy: &Taxonomy) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    save_model(&main.spec, &main.params, dir.join("main.tocr"))?;
    save_model(&modifier.spec, &modifier.params, dir.join("modifier.tocr"))?;
    std::fs::write(dir.join("taxonomy.json"), taxonomy.to_json())?;
    let manifest = BundleManifest {
        main_model: "main.tocr".into(),
        modifier_model: "modifier.tocr".into(),
        taxonomy: "taxonomy.json".into(),
    };
    let path = dir.join(BUNDLE_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

/// Loads a bundle from its manifest file or the directory holding it.
pub fn load_bundle(path: impl AsRef<Path>) -> Result<DualModel> {
    let mut path = path.as_ref().to_path_buf();
    if path.is_dir() {
        path.push(BUNDLE_FILE);
    }
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CoreError::Config(format!("{}: {e}", path.display())))?;
    let manifest: BundleManifest = serde_json::from_str(&text)
        .map_err(|e| CoreError::Config(format!("{}: {e}", path.display())))?;
    let root = path.parent().unwrap_or(Path::new("."));
    let taxonomy = if manifest.taxonomy.as_os_str() == "desk" {
        Taxonomy::desk()
    } else {
        Taxonomy::load(root.join(&manifest.taxonomy))?
    };
    let main = load_model(root.join(&manifest.main_model))?;
    let modifier = load_model(root.join(&manifest.modifier_model))?;
    DualModel::from_models(main, modifier, taxonomy)
}
