//! Procedural glyph renderer used to author glyph sheets and test pages.
//!
//! No font files are available to the engine, so each main character and
//! modifier of the taxonomy is drawn from stroke primitives: a main is one of
//! four ring-like base forms plus a combination of stroke features, and a
//! modifier is a small mark joined on the right, or detached above or below
//! the base. A [`FontStyle`] varies stroke weight, width, slant and a smooth
//! per-instance warp, standing in for typeface variation.
//!
//! Geometry is authored in em units with y growing downward; the main body
//! occupies `[0, width] × [0, 1]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::imgcore::{BBox, RasterImage};
use crate::taxonomy::{CompositeLabel, Placement, Taxonomy};
use crate::Result;

/// Pixels per em at a given point size.
pub const PX_PER_PT: f64 = 2.0;

/// Number of distinct base forms and feature codes per form.
const FORMS: usize = 4;
const FEATURE_CODES: usize = 13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FontStyle {
    pub name: String,
    /// Stroke width in em.
    pub weight: f64,
    /// Horizontal stretch of the base body.
    pub aspect: f64,
    /// Horizontal shear per em of height.
    pub slant: f64,
    /// Amplitude of the smooth per-instance warp, in em.
    pub jitter: f64,
}

impl FontStyle {
    fn new(name: &str, weight: f64, aspect: f64, slant: f64, jitter: f64) -> Self {
        Self {
            name: name.into(),
            weight,
            aspect,
            slant,
            jitter,
        }
    }

    /// The three built-in styles; the first two are the training styles.
    pub fn builtin() -> Vec<FontStyle> {
        vec![
            Self::new("light", 0.075, 0.92, 0.0, 0.015),
            Self::new("bold", 0.115, 1.08, 0.0, 0.015),
            Self::new("medium-oblique", 0.095, 1.0, 0.035, 0.02),
        ]
    }

    pub fn by_name(name: &str) -> Option<FontStyle> {
        Self::builtin().into_iter().find(|f| f.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Pt {
    x: f64,
    y: f64,
}

fn pt(x: f64, y: f64) -> Pt {
    Pt { x, y }
}

#[derive(Debug, Clone, PartialEq)]
enum Prim {
    /// Open polyline of the style's stroke width.
    Stroke(Vec<Pt>),
    /// Filled disk.
    Dot(Pt, f64),
}

/// Elliptical arc, angles in degrees (0 = +x, 90 = +y i.e. downward).
fn arc(c: Pt, rx: f64, ry: f64, a0: f64, a1: f64) -> Vec<Pt> {
    let n = (((a1 - a0).abs() / 10.0).ceil() as usize).max(2);
    (0..=n)
        .map(|i| {
            let a = (a0 + (a1 - a0) * i as f64 / n as f64).to_radians();
            pt(c.x + rx * a.cos(), c.y + ry * a.sin())
        })
        .collect()
}

fn join(parts: &[Vec<Pt>]) -> Vec<Pt> {
    let mut out: Vec<Pt> = Vec::new();
    for p in parts {
        out.extend_from_slice(p);
    }
    out
}

/// Geometry of a base form for anchoring features and marks.
struct Body {
    prims: Vec<Prim>,
    width: f64,
    /// Where the top flag attaches.
    top: Pt,
    /// Interior chord endpoints at the chord height.
    chord: (Pt, Pt),
    /// Leftmost point of the stroke path.
    left: Pt,
    /// Rightmost point at half height, where right-hand marks join.
    right: Pt,
}

fn body(form: usize, style: &FontStyle) -> Body {
    let sw = style.weight;
    let w = 0.8 * style.aspect;
    let (cx, hw) = (w / 2.0, w / 2.0 - sw / 2.0);
    let (top, bottom) = (sw / 2.0, 1.0 - sw / 2.0);
    let chord_y = 0.74;
    let ry = 0.5 - sw / 2.0;
    let ellipse_x = |y: f64| hw * (1.0 - ((y - 0.5) / ry).powi(2)).max(0.0).sqrt();
    match form {
        0 => {
            let dx = ellipse_x(chord_y);
            Body {
                prims: vec![Prim::Stroke(arc(pt(cx, 0.5), hw, ry, 0.0, 360.0))],
                width: w,
                top: pt(cx, top),
                chord: (pt(cx - dx, chord_y), pt(cx + dx, chord_y)),
                left: pt(sw / 2.0, 0.5),
                right: pt(w - sw / 2.0, 0.5),
            }
        }
        1 => {
            let r = 0.13;
            let (l, rgt) = (sw / 2.0, w - sw / 2.0);
            let path = join(&[
                arc(pt(l + r, top + r), r, r, 180.0, 270.0),
                arc(pt(rgt - r, top + r), r, r, 270.0, 360.0),
                arc(pt(rgt - r, bottom - r), r, r, 0.0, 90.0),
                arc(pt(l + r, bottom - r), r, r, 90.0, 180.0),
                vec![pt(l, top + r)],
            ]);
            Body {
                prims: vec![Prim::Stroke(path)],
                width: w,
                top: pt(cx, top),
                chord: (pt(l, chord_y), pt(rgt, chord_y)),
                left: pt(l, 0.5),
                right: pt(rgt, 0.5),
            }
        }
        2 => {
            // cup, open at the top
            let dx = ellipse_x(chord_y);
            let (l, rgt) = (sw / 2.0, w - sw / 2.0);
            let path = join(&[
                vec![pt(l, top + 0.08)],
                arc(pt(cx, 0.5), hw, ry, 180.0, 0.0),
                vec![pt(rgt, top + 0.08)],
            ]);
            Body {
                prims: vec![Prim::Stroke(path)],
                width: w,
                top: pt(l, top + 0.08),
                chord: (pt(cx - dx, chord_y), pt(cx + dx, chord_y)),
                left: pt(l, 0.5),
                right: pt(rgt, 0.5),
            }
        }
        _ => {
            // arch, open at the bottom
            let (l, rgt) = (sw / 2.0, w - sw / 2.0);
            let path = join(&[
                vec![pt(l, bottom)],
                arc(pt(cx, 0.5), hw, ry, 180.0, 360.0),
                vec![pt(rgt, bottom)],
            ]);
            Body {
                prims: vec![Prim::Stroke(path)],
                width: w,
                top: pt(cx, top),
                chord: (pt(l, chord_y), pt(rgt, chord_y)),
                left: pt(l, 0.6),
                right: pt(rgt, 0.5),
            }
        }
    }
}

fn main_prims(main_id: usize, style: &FontStyle) -> Body {
    let form = (main_id / FEATURE_CODES) % FORMS;
    let code = main_id % FEATURE_CODES;
    let mut b = body(form, style);
    if code & 1 != 0 {
        b.prims.push(Prim::Dot(pt(b.width / 2.0, 0.42), 0.075));
    }
    if code & 2 != 0 {
        let l = b.left;
        b.prims.push(Prim::Stroke(vec![l, pt(l.x - 0.2, l.y + 0.22), pt(l.x - 0.12, 0.98)]));
    }
    if code & 4 != 0 {
        let t = b.top;
        b.prims.push(Prim::Stroke(vec![
            t,
            pt(t.x - 0.08, t.y - 0.12),
            pt(t.x + 0.13, t.y - 0.24),
        ]));
    }
    if code & 8 != 0 {
        let (a, c) = b.chord;
        b.prims.push(Prim::Stroke(vec![a, c]));
    }
    b
}

/// Right-hand marks start at the body's right anchor so they stay joined.
fn right_mark(index: usize, a: Pt) -> Vec<Prim> {
    let x = a.x;
    let s = |pts: Vec<Pt>| Prim::Stroke(pts);
    match index % 7 {
        0 => vec![s(vec![a, pt(x + 0.3, a.y), pt(x + 0.3, 0.12)])],
        1 => vec![s(vec![a, pt(x + 0.3, a.y), pt(x + 0.3, 0.95)])],
        2 => vec![
            s(vec![a, pt(x + 0.3, a.y)]),
            s(vec![pt(x + 0.3, 0.12), pt(x + 0.3, 0.95)]),
        ],
        3 => vec![s(join(&[
            vec![a],
            arc(pt(x + 0.28, a.y), 0.14, 0.3, 180.0, 0.0),
        ]))],
        4 => vec![s(join(&[
            vec![a],
            arc(pt(x + 0.28, a.y), 0.14, 0.3, 180.0, 0.0),
            vec![pt(x + 0.42, 0.05)],
        ]))],
        5 => vec![s(vec![
            a,
            pt(x + 0.14, 0.25),
            pt(x + 0.28, 0.75),
            pt(x + 0.42, 0.25),
        ])],
        _ => vec![
            s(vec![a, pt(x + 0.2, a.y)]),
            s(arc(pt(x + 0.33, a.y), 0.13, 0.13, 0.0, 360.0)),
        ],
    }
}

/// Detached mark above; `base` is the bottom center of the mark's box.
fn above_mark(index: usize, base: Pt) -> Vec<Prim> {
    let p = |dx: f64, dy: f64| pt(base.x + dx, base.y + dy);
    let s = |pts: Vec<Pt>| Prim::Stroke(pts);
    match index % 9 {
        0 => vec![s(vec![p(-0.2, -0.13), p(-0.06, 0.0), p(0.22, -0.28)])],
        1 => vec![s(vec![p(-0.27, -0.06), p(0.27, -0.06)])],
        2 => vec![
            s(vec![p(-0.27, 0.0), p(0.27, 0.0)]),
            s(vec![p(-0.27, -0.2), p(0.27, -0.2)]),
        ],
        3 => vec![s(arc(p(0.0, -0.14), 0.14, 0.14, 0.0, 360.0))],
        4 => vec![s(join(&[
            arc(p(-0.08, -0.12), 0.12, 0.12, 0.0, 360.0),
            vec![p(0.04, -0.12), p(0.28, -0.3)],
        ]))],
        5 => {
            let wave: Vec<Pt> = (0..=12)
                .map(|i| {
                    let t = i as f64 / 12.0;
                    p(-0.28 + 0.56 * t, -0.1 - 0.09 * (t * std::f64::consts::TAU).sin())
                })
                .collect();
            vec![s(wave)]
        }
        6 => vec![Prim::Dot(p(0.0, -0.1), 0.1)],
        7 => vec![Prim::Dot(p(-0.15, -0.09), 0.09), Prim::Dot(p(0.15, -0.09), 0.09)],
        _ => vec![s(vec![p(-0.16, 0.0), p(0.16, -0.3)])],
    }
}

/// Detached mark below; `top` is the top center of the mark's box.
fn below_mark(index: usize, top: Pt) -> Vec<Prim> {
    let p = |dx: f64, dy: f64| pt(top.x + dx, top.y + dy);
    let s = |pts: Vec<Pt>| Prim::Stroke(pts);
    match index % 4 {
        0 => vec![s(vec![p(-0.22, 0.0), p(-0.22, 0.26), p(0.26, 0.26)])],
        1 => vec![s(arc(p(0.0, 0.02), 0.24, 0.24, 0.0, 180.0))],
        2 => vec![s(vec![p(-0.26, 0.0), p(0.26, 0.28)])],
        _ => vec![s(vec![p(-0.26, 0.02), p(0.2, 0.02), p(0.2, 0.28), p(-0.12, 0.28)])],
    }
}

/// Vector outline of one glyph cluster in em units.
#[derive(Debug, Clone)]
pub struct GlyphShape {
    prims: Vec<Prim>,
    stroke: f64,
}

impl GlyphShape {
    /// `(min_x, min_y, max_x, max_y)` of the inked area in em.
    pub fn extent(&self) -> (f64, f64, f64, f64) {
        let half = self.stroke / 2.0;
        let mut e = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        let mut grow = |p: &Pt, r: f64| {
            e.0 = e.0.min(p.x - r);
            e.1 = e.1.min(p.y - r);
            e.2 = e.2.max(p.x + r);
            e.3 = e.3.max(p.y + r);
        };
        for prim in &self.prims {
            match prim {
                Prim::Stroke(pts) => pts.iter().for_each(|p| grow(p, half)),
                Prim::Dot(c, r) => grow(c, *r),
            }
        }
        e
    }
}

/// Index of a modifier among those sharing its placement, which selects
/// the mark drawn for it.
fn placement_index(taxonomy: &Taxonomy, modifier_id: usize) -> usize {
    let placement = taxonomy.modifiers[modifier_id].placement;
    taxonomy.modifiers[..modifier_id]
        .iter()
        .filter(|m| m.placement == placement)
        .count()
}

/// Outline of `label` in `style`. `variant` seeds the smooth warp, so
/// distinct variants are distinct glyph instances of the same style.
pub fn glyph_shape(
    taxonomy: &Taxonomy,
    label: CompositeLabel,
    style: &FontStyle,
    variant: u64,
) -> Result<GlyphShape> {
    taxonomy.check(label)?;
    let b = main_prims(label.main_id, style);
    let mut shape = GlyphShape {
        prims: b.prims.clone(),
        stroke: style.weight,
    };
    let m = &taxonomy.modifiers[label.modifier_id];
    let idx = placement_index(taxonomy, label.modifier_id);
    let gap = 0.12;
    match m.placement {
        Placement::None => {}
        Placement::Right => shape.prims.extend(right_mark(idx, b.right)),
        Placement::Above => {
            let top = shape.extent().1;
            let base = pt(b.width / 2.0, top - gap - style.weight / 2.0);
            shape.prims.extend(above_mark(idx, base));
        }
        Placement::Below => {
            let bottom = shape.extent().3;
            let top = pt(b.width / 2.0, bottom + gap + style.weight / 2.0);
            shape.prims.extend(below_mark(idx, top));
        }
    }

    // smooth warp plus slant; coincident points move together, so joins
    // stay joined and gaps stay open
    let mut rng = ChaCha8Rng::seed_from_u64(variant ^ 0x5EED_61F0);
    let waves: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.gen_range(2.0..5.0),
                rng.gen_range(2.0..5.0),
                rng.gen_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let j = style.jitter;
    let warp = |p: Pt| -> Pt {
        let dx = j * (waves[0].0 * p.x + waves[0].1 * p.y + waves[0].2).sin()
            + 0.5 * j * (waves[1].0 * p.y + waves[1].2).sin();
        let dy = j * (waves[2].0 * p.x + waves[2].1 * p.y + waves[2].2).sin()
            + 0.5 * j * (waves[3].0 * p.x + waves[3].2).sin();
        pt(p.x + dx + style.slant * (1.0 - p.y), p.y + dy)
    };
    for prim in &mut shape.prims {
        match prim {
            Prim::Stroke(pts) => pts.iter_mut().for_each(|p| *p = warp(*p)),
            Prim::Dot(c, _) => *c = warp(*c),
        }
    }
    Ok(shape)
}

/// Antialiased ink coverage in `[0, 1]` on a float canvas.
struct Canvas {
    width: usize,
    height: usize,
    ink: Vec<f32>,
}

impl Canvas {
    fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            ink: vec![0.0; width * height],
        }
    }

    /// Coverage of a pixel at distance `d` from a shape edge of radius `r`.
    fn splat(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, dist: impl Fn(f64, f64) -> f64, r: f64) {
        let c0 = (x0 - r - 1.0).floor().max(0.0) as usize;
        let r0 = (y0 - r - 1.0).floor().max(0.0) as usize;
        let c1 = ((x1 + r + 1.0).ceil().max(0.0) as usize).min(self.width);
        let r1 = ((y1 + r + 1.0).ceil().max(0.0) as usize).min(self.height);
        for row in r0..r1 {
            for col in c0..c1 {
                let d = dist(col as f64 + 0.5, row as f64 + 0.5);
                let cov = (r - d + 0.5).clamp(0.0, 1.0) as f32;
                let cell = &mut self.ink[row * self.width + col];
                if cov > *cell {
                    *cell = cov;
                }
            }
        }
    }

    fn segment(&mut self, a: (f64, f64), b: (f64, f64), r: f64) {
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let len2 = dx * dx + dy * dy;
        let dist = move |x: f64, y: f64| {
            let t = if len2 > 0.0 {
                (((x - a.0) * dx + (y - a.1) * dy) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let (px, py) = (a.0 + t * dx - x, a.1 + t * dy - y);
            (px * px + py * py).sqrt()
        };
        self.splat(a.0.min(b.0), a.1.min(b.1), a.0.max(b.0), a.1.max(b.1), dist, r);
    }

    fn disk(&mut self, c: (f64, f64), r: f64) {
        let dist = move |x: f64, y: f64| ((x - c.0).powi(2) + (y - c.1).powi(2)).sqrt();
        self.splat(c.0, c.1, c.0, c.1, dist, r);
    }
}

/// Draws `shape` with its em origin at pixel `(ox, oy)`.
fn draw(canvas: &mut Canvas, shape: &GlyphShape, em: f64, ox: f64, oy: f64) {
    let to_px = |p: &Pt| (ox + p.x * em, oy + p.y * em);
    let r = shape.stroke * em / 2.0;
    for prim in &shape.prims {
        match prim {
            Prim::Stroke(pts) => {
                for w in pts.windows(2) {
                    canvas.segment(to_px(&w[0]), to_px(&w[1]), r);
                }
            }
            Prim::Dot(c, rad) => canvas.disk(to_px(c), rad * em),
        }
    }
}

fn em_px(size_pt: u32) -> f64 {
    size_pt as f64 * PX_PER_PT
}

/// Rendered text geometry: glyph boxes in page pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedGlyph {
    pub label: CompositeLabel,
    pub bbox: BBox,
}

/// `lines[i][j]` is word `j` of line `i`.
pub type PageLayout = Vec<Vec<Vec<RenderedGlyph>>>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayoutConfig {
    /// Space between glyph clusters inside a word, in em.
    pub glyph_gap: f64,
    /// Space between words, in em.
    pub word_gap: f64,
    /// Distance between consecutive body tops, in em.
    pub line_pitch: f64,
    /// Blank border, in em.
    pub margin: f64,
    /// Paper and ink gray levels.
    pub paper: u8,
    pub ink: u8,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            glyph_gap: 0.16,
            word_gap: 0.8,
            line_pitch: 3.0,
            margin: 1.2,
            paper: 255,
            ink: 0,
        }
    }
}

/// Renders lines of words of glyph clusters in one style and size.
///
/// Every glyph instance gets its own warp drawn from `seed`.
pub fn render_page(
    taxonomy: &Taxonomy,
    lines: &[Vec<Vec<CompositeLabel>>],
    style: &FontStyle,
    size_pt: u32,
    seed: u64,
    layout: &LayoutConfig,
) -> Result<(RasterImage, PageLayout)> {
    let em = em_px(size_pt);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // shapes and their horizontal placement in em
    let mut placed: Vec<Vec<Vec<(CompositeLabel, GlyphShape, f64)>>> = Vec::new();
    let mut max_width: f64 = 0.0;
    // marks reach above and below the [0, 1] body
    let (mut y_min, mut y_max) = (0.0f64, 1.0f64);
    for line in lines {
        let mut x = 0.0;
        let mut words = Vec::new();
        for (wi, word) in line.iter().enumerate() {
            if wi > 0 {
                x += layout.word_gap;
            }
            let mut glyphs = Vec::new();
            for (gi, &label) in word.iter().enumerate() {
                if gi > 0 {
                    x += layout.glyph_gap;
                }
                let shape = glyph_shape(taxonomy, label, style, rng.gen())?;
                let (x0, y0, x1, y1) = shape.extent();
                y_min = y_min.min(y0);
                y_max = y_max.max(y1);
                glyphs.push((label, shape, x - x0));
                x += x1 - x0;
            }
            words.push(glyphs);
        }
        max_width = max_width.max(x);
        placed.push(words);
    }
    let width = ((max_width + 2.0 * layout.margin) * em).ceil() as usize;
    let n_lines = lines.len().max(1) as f64;
    let height = (((n_lines - 1.0) * layout.line_pitch + y_max - y_min + 2.0 * layout.margin)
        * em)
        .ceil() as usize;
    let mut canvas = Canvas::new(width.max(1), height.max(1));
    let mut out_layout = Vec::new();
    for (li, words) in placed.iter().enumerate() {
        let oy = (layout.margin - y_min + li as f64 * layout.line_pitch) * em;
        let mut line_out = Vec::new();
        for glyphs in words {
            let mut word_out = Vec::new();
            for (label, shape, x) in glyphs {
                let ox = (layout.margin + x) * em;
                draw(&mut canvas, shape, em, ox, oy);
                let (x0, y0, x1, y1) = shape.extent();
                let clamp = |v: f64, hi: usize| (v.max(0.0) as usize).min(hi - 1);
                word_out.push(RenderedGlyph {
                    label: *label,
                    bbox: BBox {
                        top: clamp((oy + y0 * em).floor(), canvas.height),
                        left: clamp((ox + x0 * em).floor(), canvas.width),
                        bottom: clamp((oy + y1 * em).ceil() - 1.0, canvas.height),
                        right: clamp((ox + x1 * em).ceil() - 1.0, canvas.width),
                    },
                });
            }
            line_out.push(word_out);
        }
        out_layout.push(line_out);
    }
    let (paper, ink) = (layout.paper as f32, layout.ink as f32);
    let data = canvas
        .ink
        .iter()
        .map(|&c| (paper + (ink - paper) * c).round().clamp(0.0, 255.0) as u8)
        .collect();
    Ok((RasterImage::new(canvas.width, canvas.height, data)?, out_layout))
}

/// Glyph sheet: one row per label sequence, every glyph spaced as its own
/// word so that word detection isolates it.
pub fn render_sheet(
    taxonomy: &Taxonomy,
    rows: &[Vec<CompositeLabel>],
    style: &FontStyle,
    size_pt: u32,
    seed: u64,
) -> Result<RasterImage> {
    let lines: Vec<Vec<Vec<CompositeLabel>>> = rows
        .iter()
        .map(|row| row.iter().map(|&l| vec![l]).collect())
        .collect();
    Ok(render_page(taxonomy, &lines, style, size_pt, seed, &LayoutConfig::default())?.0)
}

/// A single glyph cluster on a small page.
pub fn render_glyph(
    taxonomy: &Taxonomy,
    label: CompositeLabel,
    style: &FontStyle,
    size_pt: u32,
    seed: u64,
) -> Result<RasterImage> {
    let layout = LayoutConfig {
        margin: 0.4,
        ..LayoutConfig::default()
    };
    Ok(render_page(taxonomy, &[vec![vec![label]]], style, size_pt, seed, &layout)?.0)
}
