//! Page in, text out: deskew, binarize, words, glyphs, dual classification.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::duoclf::{DualModel, GlyphPrediction};
use crate::imgcore::{
    binarize, connected_components, dilate_disk, erode, hough_skew_angle_with, rotate, BBox,
    BinaryImage, Connectivity, HoughConfig, RasterImage, StructuringElement,
};
use crate::segment::{merge_bar_radius, normalize_glyph, segment_page, SegmentConfig, WORD_MARGIN};
use crate::{CoreError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OcrConfig {
    pub deskew: bool,
    /// Estimates of smaller magnitude leave the page untouched.
    pub min_skew: f64,
    /// Estimates beyond this are treated as vertical strokes, not lines.
    pub max_skew: f64,
    pub angle_step: f64,
    pub segment: SegmentConfig,
}

impl Default for OcrConfig {
    fn default() -> Self {
        Self {
            deskew: true,
            min_skew: 0.75,
            max_skew: 45.0,
            angle_step: 0.5,
            segment: SegmentConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrGlyph {
    pub prediction: GlyphPrediction,
    pub text: String,
    /// In the deskewed page's coordinates.
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrWord {
    pub bbox: BBox,
    pub glyphs: Vec<OcrGlyph>,
}

impl OcrWord {
    pub fn text(&self) -> String {
        self.glyphs.iter().map(|g| g.text.as_str()).collect()
    }

    /// The weakest glyph speaks for the word.
    pub fn main_confidence(&self) -> f32 {
        self.glyphs.iter().map(|g| g.prediction.main_confidence).fold(1.0, f32::min)
    }

    pub fn modifier_confidence(&self) -> f32 {
        self.glyphs
            .iter()
            .map(|g| g.prediction.modifier_confidence)
            .fold(1.0, f32::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrLine {
    pub words: Vec<OcrWord>,
}

impl OcrLine {
    pub fn text(&self) -> String {
        self.words.iter().map(OcrWord::text).collect::<Vec<_>>().join(" ")
    }
}

/// Wall-clock milliseconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub deskew: f64,
    pub binarize: f64,
    pub segment: f64,
    pub classify: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrResult {
    /// Estimated skew in degrees; the page was rotated by its negation.
    pub skew: f64,
    pub lines: Vec<OcrLine>,
    pub timing: Timing,
}

impl OcrResult {
    /// Lines joined by newlines, words by spaces.
    pub fn text(&self) -> String {
        self.lines.iter().map(OcrLine::text).collect::<Vec<_>>().join("\n")
    }

    pub fn glyphs(&self) -> impl Iterator<Item = &OcrGlyph> {
        self.lines.iter().flat_map(|l| &l.words).flat_map(|w| &w.glyphs)
    }

    /// The published JSON shape (see `schema/ocr_result.schema.json`).
    pub fn to_json(&self) -> serde_json::Value {
        let lines: Vec<serde_json::Value> = self
            .lines
            .iter()
            .map(|l| {
                let words: Vec<serde_json::Value> = l
                    .words
                    .iter()
                    .map(|w| {
                        let glyphs: Vec<serde_json::Value> = w
                            .glyphs
                            .iter()
                            .map(|g| {
                                serde_json::json!({
                                    "text": g.text,
                                    "bbox": g.bbox,
                                    "main_id": g.prediction.label.main_id,
                                    "modifier_id": g.prediction.label.modifier_id,
                                    "main_conf": g.prediction.main_confidence,
                                    "mod_conf": g.prediction.modifier_confidence,
                                    "valid": g.prediction.valid,
                                })
                            })
                            .collect();
                        serde_json::json!({
                            "text": w.text(),
                            "bbox": w.bbox,
                            "main_conf": w.main_confidence(),
                            "mod_conf": w.modifier_confidence(),
                            "glyphs": glyphs,
                        })
                    })
                    .collect();
                serde_json::json!({ "words": words })
            })
            .collect();
        serde_json::json!({
            "skew": self.skew,
            "lines": lines,
            "timing_ms": self.timing,
        })
    }
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Ink smeared into blobs, reduced to the blob outlines. Text lines become
/// long parallel edges, so the accumulator peak follows the lines even on
/// pages with only a few glyphs, where raw strokes can outvote them. The
/// smear is a disk: an axis-aligned bar would flatten tilted outlines into
/// horizontal steps and pull the estimate towards zero.
pub fn skew_evidence(mask: &BinaryImage) -> Result<BinaryImage> {
    let comps = connected_components(mask, Connectivity::Eight);
    let mut widths: Vec<(usize, usize)> = comps.iter().map(|c| (c.bbox.width(), c.area)).collect();
    let smeared = dilate_disk(mask, 3 * merge_bar_radius(&mut widths))?;
    let inner = erode(&smeared, &StructuringElement::box3())?;
    BinaryImage::from_fn(mask.width(), mask.height(), |r, c| smeared.get(r, c) && !inner.get(r, c))
}

/// Skew estimate of the raw page, `None` for a page without ink.
pub fn estimate_skew(page: &RasterImage, config: &OcrConfig) -> Result<Option<f64>> {
    let mask = binarize(page)?;
    if mask.is_empty() {
        return Ok(None);
    }
    let hough = HoughConfig {
        angle_step: config.angle_step,
        ..HoughConfig::default()
    };
    match hough_skew_angle_with(&skew_evidence(&mask)?, &hough) {
        Ok(s) if s.abs() <= config.max_skew => Ok(Some(s)),
        Ok(_) => Ok(Some(0.0)),
        Err(CoreError::NoContent(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// The full pipeline on a decoded page. A page without text gives an
/// empty result.
pub fn ocr_page(page: &RasterImage, model: &DualModel, config: &OcrConfig) -> Result<OcrResult> {
    let start = Instant::now();
    let mut timing = Timing::default();

    let t = Instant::now();
    let mut skew = 0.0;
    let mut rotated = None;
    if config.deskew {
        if let Some(s) = estimate_skew(page, config)? {
            skew = s;
            if s.abs() >= config.min_skew {
                rotated = Some(rotate(page, -s));
            }
        }
    }
    let page = rotated.as_ref().unwrap_or(page);
    timing.deskew = ms_since(t);

    let t = Instant::now();
    let mask = binarize(page)?;
    timing.binarize = ms_since(t);

    let t = Instant::now();
    let words = segment_page(page, &mask, &config.segment)?;
    let mut patches = Vec::new();
    for w in &words {
        let region = w.word.bbox.expand(WORD_MARGIN, mask.width(), mask.height());
        let crop = mask.crop(region)?;
        for g in &w.glyphs {
            patches.push(normalize_glyph(&crop, g)?);
        }
    }
    timing.segment = ms_since(t);

    let t = Instant::now();
    let mut predictions = model.classify_batch(&patches)?.into_iter();
    let taxonomy = model.taxonomy();
    let mut lines: Vec<OcrLine> = Vec::new();
    for w in &words {
        let mut glyphs = Vec::with_capacity(w.glyphs.len());
        for bbox in &w.page_boxes {
            let prediction = predictions.next().expect("one prediction per glyph");
            glyphs.push(OcrGlyph {
                text: taxonomy.compose(prediction.label)?,
                prediction,
                bbox: *bbox,
            });
        }
        if glyphs.is_empty() {
            continue;
        }
        while lines.len() <= w.word.line {
            lines.push(OcrLine { words: Vec::new() });
        }
        lines[w.word.line].words.push(OcrWord {
            bbox: w.word.bbox,
            glyphs,
        });
    }
    lines.retain(|l| !l.words.is_empty());
    timing.classify = ms_since(t);
    timing.total = ms_since(start);
    Ok(OcrResult {
        skew,
        lines,
        timing,
    })
}

/// Decodes PNG/PNM bytes and runs [`ocr_page`].
pub fn ocr_bytes(bytes: &[u8], model: &DualModel, config: &OcrConfig) -> Result<OcrResult> {
    ocr_page(&RasterImage::decode(bytes)?, model, config)
}

fn escape(s: &str, out: &mut String) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
}

/// One `<p>` per line, one `<span class="word">` per word holding a
/// `<span class="glyph">` per glyph with its confidences as `data-`
/// attributes. Nothing but the recognized text sits between tags, so
/// stripping the tags and unescaping gives [`OcrResult::text`].
pub fn render_html(result: &OcrResult) -> String {
    let mut out = String::from(
        "<!DOCTYPE html><html lang=\"te\"><head><meta charset=\"utf-8\"></head><body>",
    );
    for (li, line) in result.lines.iter().enumerate() {
        if li > 0 {
            out.push('\n');
        }
        let _ = write!(out, "<p data-line=\"{li}\">");
        for (wi, word) in line.words.iter().enumerate() {
            if wi > 0 {
                out.push(' ');
            }
            let _ = write!(
                out,
                "<span class=\"word\" data-main-conf=\"{:.4}\" data-mod-conf=\"{:.4}\">",
                word.main_confidence(),
                word.modifier_confidence()
            );
            for g in &word.glyphs {
                let _ = write!(
                    out,
                    "<span class=\"glyph\" data-main=\"{}\" data-modifier=\"{}\" data-main-conf=\"{:.4}\" data-mod-conf=\"{:.4}\"{}>",
                    g.prediction.label.main_id,
                    g.prediction.label.modifier_id,
                    g.prediction.main_confidence,
                    g.prediction.modifier_confidence,
                    if g.prediction.valid { "" } else { " data-invalid=\"true\"" }
                );
                escape(&g.text, &mut out);
                out.push_str("</span>");
            }
            out.push_str("</span>");
        }
        out.push_str("</p>");
    }
    out.push_str("</body></html>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::CompositeLabel;

    fn strip_tags(html: &str) -> String {
        let mut out = String::new();
        let mut in_tag = false;
        for c in html.chars() {
            match c {
                '<' => in_tag = true,
                '>' => in_tag = false,
                _ if !in_tag => out.push(c),
                _ => {}
            }
        }
        out.trim_end_matches('\n')
            .replace("&lt;", "<")
            .replace("&gt;", ">")
            .replace("&quot;", "\"")
            .replace("&amp;", "&")
    }

    fn glyph(text: &str, conf: f32) -> OcrGlyph {
        OcrGlyph {
            prediction: GlyphPrediction {
                label: CompositeLabel::new(1, 0),
                main_confidence: conf,
                modifier_confidence: 1.0,
                valid: true,
                rejected: false,
            },
            text: text.into(),
            bbox: BBox::point(0, 0),
        }
    }

    fn result(lines: Vec<Vec<Vec<OcrGlyph>>>) -> OcrResult {
        OcrResult {
            skew: 0.0,
            lines: lines
                .into_iter()
                .map(|words| OcrLine {
                    words: words
                        .into_iter()
                        .map(|glyphs| OcrWord {
                            bbox: BBox::point(0, 0),
                            glyphs,
                        })
                        .collect(),
                })
                .collect(),
            timing: Timing::default(),
        }
    }

    #[test]
    fn empty_result_is_an_empty_body() {
        let html = render_html(&result(vec![]));
        assert!(html.contains("<body></body>"));
        assert_eq!(strip_tags(&html), "");
    }

    #[test]
    fn one_word_body_is_the_word() {
        let r = result(vec![vec![vec![glyph("క", 0.9), glyph("ా", 0.8)]]]);
        assert_eq!(strip_tags(&render_html(&r)), "కా");
        assert_eq!(r.lines[0].words[0].main_confidence(), 0.8);
    }

    #[test]
    fn stripped_html_is_the_text() {
        let r = result(vec![
            vec![vec![glyph("అ", 1.0)], vec![glyph("<&>", 0.5), glyph("\"", 0.5)]],
            vec![vec![glyph("మ", 0.7)]],
        ]);
        assert_eq!(r.text(), "అ <&>\"\nమ");
        assert_eq!(strip_tags(&render_html(&r)), r.text());
    }

    #[test]
    fn json_shape() {
        let r = result(vec![vec![vec![glyph("క", 0.5)]]]);
        let j = r.to_json();
        assert_eq!(j["lines"][0]["words"][0]["text"], "క");
        assert_eq!(j["lines"][0]["words"][0]["main_conf"], 0.5);
        assert!(j["timing_ms"]["total"].is_number());
    }
}
