use serde::{Deserialize, Serialize};

use super::mser::mser_regions;
use super::SegmentConfig;
use crate::imgcore::{
    connected_components, dilate, BBox, BinaryImage, Connectivity, RasterImage,
    StructuringElement,
};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordBox {
    pub bbox: BBox,
    /// Position in reading order over the whole page.
    pub order: usize,
    pub line: usize,
}

/// Half-width of the merge bar: median component width / 6, clamped to
/// `[3, 15]`. The median is weighted by component area so that dots and
/// small marks do not drag it below the glyph bodies. No components gives
/// the lower bound.
pub fn merge_bar_radius(width_area: &mut [(usize, usize)]) -> usize {
    if width_area.is_empty() {
        return 3;
    }
    width_area.sort_unstable();
    let total: usize = width_area.iter().map(|&(_, a)| a).sum();
    let mut acc = 0;
    let mut median = width_area[width_area.len() - 1].0;
    for &(w, a) in width_area.iter() {
        acc += a;
        if 2 * acc >= total {
            median = w;
            break;
        }
    }
    ((median as f64 / 6.0).round() as usize).clamp(3, 15)
}

/// Word boxes with the default configuration.
pub fn detect_words(page: &RasterImage) -> Result<Vec<WordBox>> {
    detect_words_with(page, &SegmentConfig::default())
}

pub fn detect_words_with(page: &RasterImage, config: &SegmentConfig) -> Result<Vec<WordBox>> {
    let (w, h) = (page.width(), page.height());
    let regions = mser_regions(page, &config.mser_params(w, h))?;
    if regions.is_empty() {
        return Ok(Vec::new());
    }
    let mut mask = BinaryImage::zeros(w, h)?;
    for r in &regions {
        for &(y, x) in &r.pixels {
            mask.set(y, x, true);
        }
    }
    let parts = connected_components(&mask, Connectivity::Eight);
    let mut widths: Vec<(usize, usize)> = parts.iter().map(|c| (c.bbox.width(), c.area)).collect();
    let s = merge_bar_radius(&mut widths);
    let merged = dilate(&mask, &StructuringElement::horizontal(2 * s + 1)?)?;

    // tight boxes of the original mask pixels, one per dilated component
    let mut label = vec![usize::MAX; w * h];
    let blobs = connected_components(&merged, Connectivity::Eight);
    for b in &blobs {
        for &(y, x) in &b.pixels {
            label[y * w + x] = b.id;
        }
    }
    let mut boxes: Vec<Option<BBox>> = vec![None; blobs.len()];
    for c in &parts {
        let id = label[c.pixels[0].0 * w + c.pixels[0].1];
        boxes[id] = Some(match boxes[id] {
            Some(b) => b.union(&c.bbox),
            None => c.bbox,
        });
    }
    let mut boxes: Vec<BBox> = boxes.into_iter().flatten().collect();

    // a detached mark above or below its base stays in the word: merge
    // boxes stacked within twice the bar radius, and any that intersect
    let stack_gap = 2 * s as i64;
    loop {
        let mut changed = false;
        'scan: for i in 0..boxes.len() {
            for j in i + 1..boxes.len() {
                let (a, b) = (boxes[i], boxes[j]);
                let stacked = a.horizontal_overlap(&b) > 0 && a.vertical_gap(&b) <= stack_gap;
                if stacked || a.intersects(&b) {
                    boxes[i] = a.union(&b);
                    boxes.swap_remove(j);
                    changed = true;
                    break 'scan;
                }
            }
        }
        if !changed {
            break;
        }
    }
    Ok(reading_order(boxes, config.line_overlap))
}

/// Lines by vertical overlap, top to bottom; words left to right.
fn reading_order(mut boxes: Vec<BBox>, line_overlap: f64) -> Vec<WordBox> {
    boxes.sort_by_key(|b| (b.top, b.left));
    let mut lines: Vec<(BBox, Vec<BBox>)> = Vec::new();
    for b in boxes {
        let hit = lines.iter().position(|(extent, _)| {
            let shorter = extent.height().min(b.height()) as f64;
            extent.vertical_overlap(&b) as f64 >= line_overlap * shorter
        });
        match hit {
            Some(i) => {
                lines[i].0 = lines[i].0.union(&b);
                lines[i].1.push(b);
            }
            None => lines.push((b, vec![b])),
        }
    }
    lines.sort_by_key(|(extent, _)| (extent.top, extent.left));
    let mut out = Vec::new();
    for (line, (_, mut words)) in lines.into_iter().enumerate() {
        words.sort_by_key(|b| (b.left, b.top));
        for bbox in words {
            out.push(WordBox {
                bbox,
                order: out.len(),
                line,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bar_radius_clamps() {
        assert_eq!(merge_bar_radius(&mut []), 3);
        assert_eq!(merge_bar_radius(&mut [(6, 1), (6, 1), (600, 1)]), 3);
        assert_eq!(merge_bar_radius(&mut [(60, 1), (54, 1), (48, 1)]), 9);
        assert_eq!(merge_bar_radius(&mut [(600, 1), (600, 1)]), 15);
        // four dots outweighed by one body
        assert_eq!(
            merge_bar_radius(&mut [(8, 50), (8, 50), (8, 50), (8, 50), (48, 800)]),
            8
        );
    }

    fn b(top: usize, left: usize, bottom: usize, right: usize) -> BBox {
        BBox {
            top,
            left,
            bottom,
            right,
        }
    }

    #[test]
    fn reading_order_lines_then_columns() {
        let boxes = vec![
            b(50, 10, 70, 40),
            b(0, 60, 22, 90),
            b(52, 60, 68, 95),
            // taller word on the first line, starting slightly higher
            b(2, 5, 20, 30),
        ];
        let out = reading_order(boxes, 0.5);
        let got: Vec<(usize, usize, usize)> =
            out.iter().map(|w| (w.line, w.bbox.left, w.order)).collect();
        assert_eq!(got, vec![(0, 5, 0), (0, 60, 1), (1, 10, 2), (1, 60, 3)]);
    }
}
