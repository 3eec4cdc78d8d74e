use serde::{Deserialize, Serialize};

use super::SegmentConfig;
use crate::imgcore::{connected_components, BBox, BinaryImage, Component, Connectivity};
use crate::{CoreError, Result};

/// Side of a normalized glyph patch.
pub const GLYPH_SIDE: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlyphBox {
    /// Word coordinates.
    pub bbox: BBox,
    /// Component ids, ascending.
    pub members: Vec<usize>,
    /// Largest member.
    pub base: usize,
    /// Member pixels in raster order, word coordinates.
    pub pixels: Vec<(usize, usize)>,
    pub order: usize,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn same_glyph(a: &BBox, b: &BBox, config: &SegmentConfig) -> bool {
    let overlap = a.horizontal_overlap(b);
    if overlap <= 0 {
        return false;
    }
    let narrow = a.width().min(b.width()) as f64;
    overlap as f64 >= config.overlap_ratio * narrow || a.vertical_gap(b) <= config.gap_max as i64
}

/// Transitive closure of the overlap rule; glyphs ordered by left edge, then
/// top edge.
pub fn group_modifiers(components: &[Component], config: &SegmentConfig) -> Vec<GlyphBox> {
    let n = components.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if same_glyph(&components[i].bbox, &components[j].bbox, config) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<&Component>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(&components[i]);
    }
    let mut glyphs: Vec<GlyphBox> = groups
        .into_iter()
        .map(|mut members| {
            members.sort_by_key(|c| c.id);
            let base = members
                .iter()
                .copied()
                .max_by(|a, b| a.area.cmp(&b.area).then(b.id.cmp(&a.id)))
                .expect("non-empty group");
            let mut bbox = members[0].bbox;
            let mut pixels = Vec::new();
            for c in &members {
                bbox = bbox.union(&c.bbox);
                pixels.extend_from_slice(&c.pixels);
            }
            pixels.sort_unstable();
            GlyphBox {
                bbox,
                members: members.iter().map(|c| c.id).collect(),
                base: base.id,
                pixels,
                order: 0,
            }
        })
        .collect();
    glyphs.sort_by(|a, b| {
        (a.bbox.left, a.bbox.top, &a.members).cmp(&(b.bbox.left, b.bbox.top, &b.members))
    });
    for (i, g) in glyphs.iter_mut().enumerate() {
        g.order = i;
    }
    glyphs
}

/// Components minus specks, grouped into glyphs.
pub fn segment_characters(word: &BinaryImage, config: &SegmentConfig) -> Vec<GlyphBox> {
    let kept: Vec<Component> = connected_components(word, Connectivity::Eight)
        .into_iter()
        .filter(|c| {
            c.area >= config.blob_min_area
                && c.bbox.width().max(c.bbox.height()) >= config.blob_min_side
        })
        .collect();
    group_modifiers(&kept, config)
}

/// Member pixels of `glyph`, padded to a centered square and resampled
/// bilinearly to 32×32, thresholded at 0.5.
pub fn normalize_glyph(word: &BinaryImage, glyph: &GlyphBox) -> Result<BinaryImage> {
    if glyph.pixels.is_empty() {
        return Err(CoreError::NoContent("glyph has no pixels".into()));
    }
    let b = glyph.bbox;
    if b.bottom >= word.height() || b.right >= word.width() {
        return Err(CoreError::Dimension(format!(
            "glyph box {b:?} outside {}x{} word",
            word.width(),
            word.height()
        )));
    }
    let side = b.width().max(b.height());
    let (oy, ox) = ((side - b.height()) / 2, (side - b.width()) / 2);
    let mut canvas = vec![0f32; side * side];
    for &(r, c) in &glyph.pixels {
        canvas[(r - b.top + oy) * side + (c - b.left + ox)] = 1.0;
    }
    let at = |y: isize, x: isize| -> f32 {
        if y < 0 || x < 0 || y >= side as isize || x >= side as isize {
            0.0
        } else {
            canvas[y as usize * side + x as usize]
        }
    };
    let scale = side as f64 / GLYPH_SIDE as f64;
    let mut out = vec![0f32; GLYPH_SIDE * GLYPH_SIDE];
    for dy in 0..GLYPH_SIDE {
        let sy = (dy as f64 + 0.5) * scale - 0.5;
        let (y0, fy) = (sy.floor() as isize, (sy - sy.floor()) as f32);
        for dx in 0..GLYPH_SIDE {
            let sx = (dx as f64 + 0.5) * scale - 0.5;
            let (x0, fx) = (sx.floor() as isize, (sx - sx.floor()) as f32);
            let top = at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1) * fx;
            let bottom = at(y0 + 1, x0) * (1.0 - fx) + at(y0 + 1, x0 + 1) * fx;
            out[dy * GLYPH_SIDE + dx] = top * (1.0 - fy) + bottom * fy;
        }
    }
    BinaryImage::from_f32(GLYPH_SIDE, GLYPH_SIDE, &out)
}
