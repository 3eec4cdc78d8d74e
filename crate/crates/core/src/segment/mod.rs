//! Page → words → glyphs.
//!
//! Words come from MSER regions merged by horizontal dilation; glyphs are
//! connected components of a binarized word, with specks removed and
//! detached modifiers grouped onto their base.

mod glyphs;
mod mser;
mod words;

use serde::{Deserialize, Serialize};

pub use glyphs::{group_modifiers, normalize_glyph, segment_characters, GlyphBox, GLYPH_SIDE};
pub use mser::{mser_regions, MserParams, MserRegion};
pub use words::{detect_words, detect_words_with, merge_bar_radius, WordBox};

use crate::imgcore::{BBox, BinaryImage, RasterImage};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentConfig {
    pub mser_delta: u8,
    pub mser_min_area: usize,
    /// Fraction of the page area.
    pub mser_max_area_fraction: f64,
    /// Lower bound on the area cap, so a small page still admits a glyph.
    pub mser_max_area_floor: usize,
    pub mser_max_variation: f64,
    pub mser_min_diversity: f64,
    pub blob_min_area: usize,
    pub blob_min_side: usize,
    pub overlap_ratio: f64,
    pub gap_max: usize,
    /// Words whose boxes overlap vertically by this fraction of the shorter
    /// one share a line.
    pub line_overlap: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            mser_delta: 5,
            mser_min_area: 30,
            mser_max_area_fraction: 0.01,
            mser_max_area_floor: 4096,
            mser_max_variation: 0.5,
            mser_min_diversity: 0.2,
            blob_min_area: 8,
            blob_min_side: 3,
            overlap_ratio: 0.3,
            gap_max: 4,
            line_overlap: 0.5,
        }
    }
}

impl SegmentConfig {
    pub fn mser_params(&self, width: usize, height: usize) -> MserParams {
        MserParams {
            delta: self.mser_delta,
            min_area: self.mser_min_area,
            max_area: (((width * height) as f64 * self.mser_max_area_fraction).floor() as usize)
                .max(self.mser_max_area_floor)
                .max(self.mser_min_area + 1),
            max_variation: self.mser_max_variation,
            min_diversity: self.mser_min_diversity,
        }
    }
}

/// One word with its glyphs, glyph boxes in page coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentedWord {
    pub word: WordBox,
    pub glyphs: Vec<GlyphBox>,
    /// Glyph boxes translated to the page.
    pub page_boxes: Vec<BBox>,
}

/// Margin around a word box when cropping the binarized page.
pub const WORD_MARGIN: usize = 2;

/// Words from the grayscale `page`, glyphs from the matching crop of the
/// binarized `mask`.
pub fn segment_page(
    page: &RasterImage,
    mask: &BinaryImage,
    config: &SegmentConfig,
) -> Result<Vec<SegmentedWord>> {
    let words = detect_words_with(page, config)?;
    words
        .into_iter()
        .map(|word| {
            // binarization can reach a pixel past the MSER boundary
            let region = word.bbox.expand(WORD_MARGIN, mask.width(), mask.height());
            let crop = mask.crop(region)?;
            let glyphs = segment_characters(&crop, config);
            let page_boxes = glyphs
                .iter()
                .map(|g| g.bbox.translate(region.top, region.left))
                .collect();
            Ok(SegmentedWord {
                word,
                glyphs,
                page_boxes,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpGlyph {
    pub bbox: BBox,
    pub components: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpWord {
    pub bbox: BBox,
    pub glyphs: Vec<DumpGlyph>,
}

/// `{words: [{bbox, glyphs: [{bbox, components}]}]}`, page coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationDump {
    pub words: Vec<DumpWord>,
}

impl SegmentationDump {
    pub fn from_words(words: &[SegmentedWord]) -> Self {
        Self {
            words: words
                .iter()
                .map(|w| DumpWord {
                    bbox: w.word.bbox,
                    glyphs: w
                        .glyphs
                        .iter()
                        .zip(&w.page_boxes)
                        .map(|(g, &bbox)| DumpGlyph {
                            bbox,
                            components: g.members.clone(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

fn draw_rect(img: &mut RasterImage, b: BBox, value: u8) {
    for c in b.left..=b.right.min(img.width() - 1) {
        img.set(b.top, c, value);
        img.set(b.bottom.min(img.height() - 1), c, value);
    }
    for r in b.top..=b.bottom.min(img.height() - 1) {
        img.set(r, b.left, value);
        img.set(r, b.right.min(img.width() - 1), value);
    }
}

/// Page with word boxes drawn black and glyph boxes mid-gray, the page
/// itself lightened so the boxes stand out.
pub fn debug_overlay(page: &RasterImage, dump: &SegmentationDump) -> RasterImage {
    let mut out = page.clone();
    for v in out.data_mut() {
        *v = 96 + (*v as u16 * 159 / 255) as u8;
    }
    for w in &dump.words {
        for g in &w.glyphs {
            draw_rect(&mut out, g.bbox, 128);
        }
        draw_rect(&mut out, w.bbox.expand(1, page.width(), page.height()), 0);
    }
    out
}

/// Writes `overlay.png` and `segments.json` into `dir`.
pub fn write_debug_dump(
    dir: impl AsRef<std::path::Path>,
    page: &RasterImage,
    words: &[SegmentedWord],
) -> Result<SegmentationDump> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let dump = SegmentationDump::from_words(words);
    debug_overlay(page, &dump).save(dir.join("overlay.png"))?;
    std::fs::write(dir.join("segments.json"), serde_json::to_string_pretty(&dump)?)?;
    Ok(dump)
}
