use super::{BinaryImage, Component};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl Connectivity {
    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            4 => Some(Self::Four),
            8 => Some(Self::Eight),
            _ => None,
        }
    }
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let p = parent[x as usize];
        parent[x as usize] = parent[p as usize];
        x = p;
    }
    x
}

fn union(parent: &mut [u32], a: u32, b: u32) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    // keep the smaller provisional label as root
    if ra < rb {
        parent[rb as usize] = ra;
    } else if rb < ra {
        parent[ra as usize] = rb;
    }
}

/// Two-pass union–find labeling. Components are numbered in raster order of
/// their first pixel and list their pixels in raster order.
pub fn connected_components(img: &BinaryImage, connectivity: Connectivity) -> Vec<Component> {
    let (w, h) = (img.width(), img.height());
    let data = img.data();
    const NONE: u32 = u32::MAX;
    let mut labels = vec![NONE; w * h];
    let mut parent: Vec<u32> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if data[i] == 0 {
                continue;
            }
            let mut neigh = [NONE; 4];
            if x > 0 {
                neigh[0] = labels[i - 1];
            }
            if y > 0 {
                neigh[1] = labels[i - w];
                if connectivity == Connectivity::Eight {
                    if x > 0 {
                        neigh[2] = labels[i - w - 1];
                    }
                    if x + 1 < w {
                        neigh[3] = labels[i - w + 1];
                    }
                }
            }
            let mut label = NONE;
            for &n in &neigh {
                if n == NONE {
                    continue;
                }
                if label == NONE {
                    label = n;
                } else {
                    union(&mut parent, label, n);
                }
            }
            if label == NONE {
                label = parent.len() as u32;
                parent.push(label);
            }
            labels[i] = label;
        }
    }

    let mut root_to_id = vec![NONE; parent.len()];
    let mut comps: Vec<Vec<(usize, usize)>> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let l = labels[y * w + x];
            if l == NONE {
                continue;
            }
            let root = find(&mut parent, l) as usize;
            if root_to_id[root] == NONE {
                root_to_id[root] = comps.len() as u32;
                comps.push(Vec::new());
            }
            comps[root_to_id[root] as usize].push((y, x));
        }
    }
    comps
        .into_iter()
        .enumerate()
        .map(|(id, pixels)| Component::from_pixels(id, pixels))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::BBox;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_blocks() {
        let img = BinaryImage::from_fn(8, 6, |r, c| {
            ((1..3).contains(&r) && (1..3).contains(&c)) || ((3..5).contains(&r) && (5..7).contains(&c))
        })
        .unwrap();
        let comps = connected_components(&img, Connectivity::Eight);
        assert_eq!(comps.len(), 2);
        assert_eq!(
            comps[0].bbox,
            BBox {
                top: 1,
                left: 1,
                bottom: 2,
                right: 2
            }
        );
        assert_eq!(
            comps[1].bbox,
            BBox {
                top: 3,
                left: 5,
                bottom: 4,
                right: 6
            }
        );
        assert!(comps.iter().all(|c| c.area == 4));
    }

    #[test]
    fn diagonal_pair() {
        let img = BinaryImage::from_fn(3, 3, |r, c| (r, c) == (0, 0) || (r, c) == (1, 1)).unwrap();
        assert_eq!(connected_components(&img, Connectivity::Eight).len(), 1);
        assert_eq!(connected_components(&img, Connectivity::Four).len(), 2);
    }

    #[test]
    fn labels_follow_first_pixel_order() {
        // a U whose right arm starts the scan before the second blob
        let img = BinaryImage::from_fn(7, 4, |r, c| {
            (c == 0 || c == 2 || (r == 3 && c <= 2)) || (r == 1 && c == 5)
        })
        .unwrap();
        let comps = connected_components(&img, Connectivity::Four);
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0].pixels[0], (0, 0));
        assert_eq!(comps[1].pixels[0], (1, 5));
        assert_eq!(comps[0].area, 9);
    }

    #[test]
    fn random_image_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = BinaryImage::from_fn(40, 30, |_, _| rng.gen_bool(0.45)).unwrap();
        let comps = connected_components(&img, Connectivity::Eight);
        let mut rebuilt = BinaryImage::zeros(40, 30).unwrap();
        for c in &comps {
            for &(r, col) in &c.pixels {
                assert!(!rebuilt.get(r, col));
                rebuilt.set(r, col, true);
            }
        }
        assert_eq!(rebuilt, img);
    }
}
