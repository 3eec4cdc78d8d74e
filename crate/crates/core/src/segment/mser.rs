//! Maximally stable extremal regions of the dark-first threshold sweep.
//!
//! Pixels are inserted in increasing intensity into a union–find forest;
//! every change of a component creates a node of the component tree. A
//! node's variation is `(|R(level + delta)| - |R|) / |R|`, where
//! `R(level + delta)` is its largest ancestor not above `level + delta`.

use serde::{Deserialize, Serialize};

use crate::imgcore::{BBox, RasterImage};
use crate::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MserParams {
    pub delta: u8,
    pub min_area: usize,
    pub max_area: usize,
    pub max_variation: f64,
    /// Nested regions whose areas differ by less than this fraction are
    /// duplicates; the less stable one is dropped.
    pub min_diversity: f64,
}

impl MserParams {
    /// Defaults with `max_area` at 1% of a `width`×`height` page.
    pub fn for_page(width: usize, height: usize) -> Self {
        Self::with_max_fraction(width, height, 0.01)
    }

    pub fn with_max_fraction(width: usize, height: usize, fraction: f64) -> Self {
        Self {
            delta: 5,
            min_area: 30,
            max_area: ((width * height) as f64 * fraction).floor().max(31.0) as usize,
            max_variation: 0.5,
            min_diversity: 0.2,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.delta == 0 {
            return Err(CoreError::Param("MSER delta must be positive".into()));
        }
        if self.min_area >= self.max_area {
            return Err(CoreError::Param(format!(
                "MSER min_area {} must be below max_area {}",
                self.min_area, self.max_area
            )));
        }
        if !(self.max_variation >= 0.0) || !(self.min_diversity >= 0.0) {
            return Err(CoreError::Param("MSER ratios must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MserRegion {
    /// `(row, col)` in raster order.
    pub pixels: Vec<(usize, usize)>,
    /// Area variation over `delta` levels; lower is more stable.
    pub variation: f64,
    pub bbox: BBox,
    /// Intensity level at which the region is taken.
    pub level: u8,
}

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct Node {
    level: u8,
    area: u32,
    parent: u32,
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let p = parent[x as usize];
        parent[x as usize] = parent[p as usize];
        x = p;
    }
    x
}

struct Tree {
    nodes: Vec<Node>,
    /// Node a pixel first joined.
    pixel_node: Vec<u32>,
}

fn build_tree(img: &RasterImage) -> Tree {
    let (w, h) = (img.width(), img.height());
    let n = w * h;
    let data = img.data();
    // counting sort, raster order within a level
    let mut starts = [0usize; 257];
    for &v in data {
        starts[v as usize + 1] += 1;
    }
    for i in 0..256 {
        starts[i + 1] += starts[i];
    }
    let mut order = vec![0u32; n];
    let mut fill = starts;
    for (i, &v) in data.iter().enumerate() {
        order[fill[v as usize]] = i as u32;
        fill[v as usize] += 1;
    }

    let mut uf = vec![NONE; n];
    let mut size = vec![0u32; n];
    let mut node_of = vec![NONE; n];
    let mut nodes: Vec<Node> = Vec::new();
    let mut pixel_node = vec![NONE; n];
    let mut orphans: Vec<(u32, u32)> = Vec::new();
    let mut touched: Vec<u32> = Vec::new();

    for g in 0..256usize {
        let level = &order[starts[g]..starts[g + 1]];
        if level.is_empty() {
            continue;
        }
        touched.clear();
        orphans.clear();
        for &p in level {
            uf[p as usize] = p;
            size[p as usize] = 1;
            touched.push(p);
            let (y, x) = (p as usize / w, p as usize % w);
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if dy == 0 && dx == 0 {
                        continue;
                    }
                    let (yy, xx) = (y as isize + dy, x as isize + dx);
                    if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                        continue;
                    }
                    let q = (yy as usize * w + xx as usize) as u32;
                    if uf[q as usize] == NONE {
                        continue;
                    }
                    let (rp, rq) = (find(&mut uf, p), find(&mut uf, q));
                    if rp == rq {
                        continue;
                    }
                    for r in [rp, rq] {
                        let nd = node_of[r as usize];
                        if nd != NONE {
                            orphans.push((r, nd));
                            node_of[r as usize] = NONE;
                        }
                    }
                    let (big, small) = if size[rp as usize] >= size[rq as usize] {
                        (rp, rq)
                    } else {
                        (rq, rp)
                    };
                    uf[small as usize] = big;
                    size[big as usize] += size[small as usize];
                }
            }
        }
        // a root that only gained pixels also changed
        for &p in &touched {
            let r = find(&mut uf, p);
            let nd = node_of[r as usize];
            if nd != NONE && (nodes[nd as usize].level as usize) < g {
                orphans.push((r, nd));
                node_of[r as usize] = NONE;
            }
            if node_of[r as usize] == NONE {
                node_of[r as usize] = nodes.len() as u32;
                nodes.push(Node {
                    level: g as u8,
                    area: size[r as usize],
                    parent: NONE,
                });
            }
            pixel_node[p as usize] = node_of[r as usize];
        }
        for &(r, child) in &orphans {
            let root = find(&mut uf, r);
            nodes[child as usize].parent = node_of[root as usize];
        }
    }
    Tree { nodes, pixel_node }
}

/// Dark-on-light MSERs filtered by area and variation, in raster order of
/// their bounding boxes.
pub fn mser_regions(img: &RasterImage, params: &MserParams) -> Result<Vec<MserRegion>> {
    params.validate()?;
    let tree = build_tree(img);
    let nodes = &tree.nodes;
    let n_nodes = nodes.len();

    let variation: Vec<f64> = (0..n_nodes)
        .map(|i| {
            let target = nodes[i].level as usize + params.delta as usize;
            let mut j = i;
            while nodes[j].parent != NONE && nodes[nodes[j].parent as usize].level as usize <= target
            {
                j = nodes[j].parent as usize;
            }
            (nodes[j].area - nodes[i].area) as f64 / nodes[i].area as f64
        })
        .collect();

    // children in CSR form
    let mut child_start = vec![0usize; n_nodes + 1];
    for nd in nodes {
        if nd.parent != NONE {
            child_start[nd.parent as usize + 1] += 1;
        }
    }
    for i in 0..n_nodes {
        child_start[i + 1] += child_start[i];
    }
    let mut children = vec![0u32; child_start[n_nodes]];
    let mut cursor = child_start.clone();
    for (i, nd) in nodes.iter().enumerate() {
        if nd.parent != NONE {
            children[cursor[nd.parent as usize]] = i as u32;
            cursor[nd.parent as usize] += 1;
        }
    }
    let kids = |i: usize| &children[child_start[i]..child_start[i + 1]];

    let total = img.width() * img.height();
    let mut kept: Vec<usize> = (0..n_nodes)
        .filter(|&i| {
            let a = nodes[i].area as usize;
            let v = variation[i];
            // the whole image is darker than nothing
            a < total
                && a >= params.min_area
                && a <= params.max_area
                && v <= params.max_variation
                && (nodes[i].parent == NONE || v <= variation[nodes[i].parent as usize])
                && kids(i).iter().all(|&c| v <= variation[c as usize])
        })
        .collect();

    // duplicate suppression along ancestor chains
    let mut alive = vec![false; n_nodes];
    for &i in &kept {
        alive[i] = true;
    }
    kept.sort_by_key(|&i| (nodes[i].area, i));
    for &i in &kept {
        // compare against each surviving ancestor until one differs enough
        let mut j = nodes[i].parent;
        while alive[i] && j != NONE {
            if !alive[j as usize] {
                j = nodes[j as usize].parent;
                continue;
            }
            let (ai, aj) = (nodes[i].area as f64, nodes[j as usize].area as f64);
            if (aj - ai) / ai >= params.min_diversity {
                break;
            }
            // lower variation survives; ties keep the larger region
            if variation[i] < variation[j as usize] {
                alive[j as usize] = false;
                j = nodes[j as usize].parent;
            } else {
                alive[i] = false;
            }
        }
    }

    // pixels bucketed by the node they joined
    let mut pix_start = vec![0usize; n_nodes + 1];
    for &nd in &tree.pixel_node {
        pix_start[nd as usize + 1] += 1;
    }
    for i in 0..n_nodes {
        pix_start[i + 1] += pix_start[i];
    }
    let mut pix = vec![0u32; pix_start[n_nodes]];
    let mut cursor = pix_start.clone();
    for (p, &nd) in tree.pixel_node.iter().enumerate() {
        pix[cursor[nd as usize]] = p as u32;
        cursor[nd as usize] += 1;
    }

    let w = img.width();
    let mut regions = Vec::new();
    let mut stack = Vec::new();
    for i in (0..n_nodes).filter(|&i| alive[i]) {
        let mut flat: Vec<u32> = Vec::with_capacity(nodes[i].area as usize);
        stack.clear();
        stack.push(i as u32);
        while let Some(k) = stack.pop() {
            let k = k as usize;
            flat.extend_from_slice(&pix[pix_start[k]..pix_start[k + 1]]);
            stack.extend_from_slice(kids(k));
        }
        flat.sort_unstable();
        let pixels: Vec<(usize, usize)> = flat
            .iter()
            .map(|&p| (p as usize / w, p as usize % w))
            .collect();
        let mut bbox = BBox::point(pixels[0].0, pixels[0].1);
        for &(r, c) in &pixels {
            bbox.include(r, c);
        }
        regions.push(MserRegion {
            pixels,
            variation: variation[i],
            bbox,
            level: nodes[i].level,
        });
    }
    regions.sort_by(|a, b| {
        (a.bbox.top, a.bbox.left, a.pixels.len(), a.level)
            .cmp(&(b.bbox.top, b.bbox.left, b.pixels.len(), b.level))
    });
    Ok(regions)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn page_with_squares(squares: &[(usize, usize, usize)]) -> RasterImage {
        let mut img = RasterImage::filled(120, 80, 255).unwrap();
        for &(top, left, side) in squares {
            for r in top..top + side {
                for c in left..left + side {
                    img.set(r, c, 0);
                }
            }
        }
        img
    }

    #[test]
    fn single_square_is_one_region() {
        let img = page_with_squares(&[(20, 30, 20)]);
        let params = MserParams::with_max_fraction(120, 80, 0.2);
        let regions = mser_regions(&img, &params).unwrap();
        assert_eq!(regions.len(), 1);
        let r = &regions[0];
        assert_eq!(r.pixels.len(), 400);
        assert_eq!(
            r.bbox,
            BBox {
                top: 20,
                left: 30,
                bottom: 39,
                right: 49
            }
        );
        assert!(r.variation >= 0.0);
    }

    #[test]
    fn blank_page_has_no_regions() {
        let img = RasterImage::filled(64, 48, 255).unwrap();
        assert!(mser_regions(&img, &MserParams::for_page(64, 48)).unwrap().is_empty());
        let everything = MserParams { max_area: 64 * 48, ..MserParams::for_page(64, 48) };
        assert!(mser_regions(&img, &everything).unwrap().is_empty());
    }

    #[test]
    fn two_squares_two_regions() {
        let img = page_with_squares(&[(10, 10, 12), (40, 70, 15)]);
        let params = MserParams::with_max_fraction(120, 80, 0.2);
        let regions = mser_regions(&img, &params).unwrap();
        assert_eq!(regions.len(), 2);
        assert_eq!(regions[0].bbox, BBox { top: 10, left: 10, bottom: 21, right: 21 });
        assert_eq!(regions[1].bbox, BBox { top: 40, left: 70, bottom: 54, right: 84 });
    }

    #[test]
    fn graded_edges_keep_one_region_per_blob() {
        // a dark core with a soft ramp should not yield stacked duplicates
        let mut img = RasterImage::filled(60, 60, 255).unwrap();
        for r in 0..60 {
            for c in 0..60 {
                let d = ((r as f64 - 30.0).powi(2) + (c as f64 - 30.0).powi(2)).sqrt();
                let v = ((d - 8.0) * 60.0).clamp(0.0, 255.0);
                img.set(r, c, v as u8);
            }
        }
        let params = MserParams::with_max_fraction(60, 60, 0.3);
        let regions = mser_regions(&img, &params).unwrap();
        assert_eq!(regions.len(), 1, "{:?}", regions.iter().map(|r| r.pixels.len()).collect::<Vec<_>>());
    }

    #[test]
    fn parameter_errors() {
        let img = RasterImage::filled(10, 10, 0).unwrap();
        let mut p = MserParams::for_page(10, 10);
        p.min_area = p.max_area;
        assert!(mser_regions(&img, &p).is_err());
        let mut p = MserParams::for_page(10, 10);
        p.delta = 0;
        assert!(mser_regions(&img, &p).is_err());
    }
}
