//! Thinning of a binary vessel mask to a one-pixel-wide skeleton.
//!
//! The deletion rules are Zhang–Suen's two sub-iterations, evaluated on an
//! immutable snapshot with the image padded by a background ring. Two extra
//! rules keep the result usable for graph extraction:
//!
//! * a sub-iteration never removes every pixel of an 8-connected component
//!   (plain Zhang–Suen erases 2×2 blocks); the first pixel in row-major order
//!   of such a component is kept;
//! * after the parallel passes settle, L-shaped staircase corners (a pixel with
//!   two orthogonal 4-neighbours whose foreground neighbours stay 8-connected
//!   without it) are removed sequentially in row-major order.
//!
//! Both are repeated until nothing changes, so `thin` is idempotent.

use thiserror::Error;

use crate::raster::BinaryImage;

#[derive(Debug, Error, PartialEq)]
pub enum SkeletonError {
    #[error("pixel ({0}, {1}) is not on the skeleton")]
    NotOnSkeleton(usize, usize),
}

/// One-pixel-wide skeleton.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkeletonImage(BinaryImage);

impl SkeletonImage {
    /// Wrap a mask that is already thin. No check is made.
    pub fn from_thin_mask(mask: BinaryImage) -> Self {
        SkeletonImage(mask)
    }

    pub fn as_mask(&self) -> &BinaryImage {
        &self.0
    }

    pub fn into_mask(self) -> BinaryImage {
        self.0
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.0.get(x, y)
    }

    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        self.0.get_signed(x, y)
    }
}

/// Neighbour offsets P2..P9: N, NE, E, SE, S, SW, W, NW.
pub const RING: [(i64, i64); 8] = [(0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1)];

fn ring(img: &BinaryImage, x: i64, y: i64) -> [bool; 8] {
    let mut p = [false; 8];
    for (k, (dx, dy)) in RING.iter().enumerate() {
        p[k] = img.get_signed(x + dx, y + dy);
    }
    p
}

fn zs_deletable(p: &[bool; 8], first: bool) -> bool {
    let b = p.iter().filter(|&&v| v).count();
    if !(2..=6).contains(&b) {
        return false;
    }
    let a = (0..8).filter(|&k| !p[k] && p[(k + 1) % 8]).count();
    if a != 1 {
        return false;
    }
    let [p2, _, p4, _, p6, _, p8, _] = *p;
    if first {
        !(p2 && p4 && p6) && !(p4 && p6 && p8)
    } else {
        !(p2 && p4 && p8) && !(p2 && p6 && p8)
    }
}

/// Number of 8-connected groups among the foreground ring pixels.
fn ring_groups(p: &[bool; 8]) -> usize {
    let mut label = [usize::MAX; 8];
    let mut groups = 0;
    for start in 0..8 {
        if !p[start] || label[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        label[start] = groups;
        while let Some(k) = stack.pop() {
            // ring neighbours are adjacent; 4-neighbours (even k) also touch the next 4-neighbour
            let mut adj = vec![(k + 1) % 8, (k + 7) % 8];
            if k % 2 == 0 {
                adj.push((k + 2) % 8);
                adj.push((k + 6) % 8);
            }
            for j in adj {
                if p[j] && label[j] == usize::MAX {
                    label[j] = groups;
                    stack.push(j);
                }
            }
        }
        groups += 1;
    }
    groups
}

fn is_staircase_corner(p: &[bool; 8]) -> bool {
    let b = p.iter().filter(|&&v| v).count();
    let [n, _, e, _, s, _, w, _] = *p;
    let corner = (n && e) || (e && s) || (s && w) || (w && n);
    corner && b >= 2 && ring_groups(p) == 1
}

/// Label 8-connected components; returns labels (usize::MAX for background).
fn components(img: &BinaryImage) -> Vec<usize> {
    let (w, h) = (img.width(), img.height());
    let mut label = vec![usize::MAX; w * h];
    let mut next = 0;
    let mut stack = Vec::new();
    for i in 0..w * h {
        if !img.data()[i] || label[i] != usize::MAX {
            continue;
        }
        label[i] = next;
        stack.push(i);
        while let Some(j) = stack.pop() {
            let (x, y) = ((j % w) as i64, (j / w) as i64);
            for (dx, dy) in RING {
                if img.get_signed(x + dx, y + dy) {
                    let k = (y + dy) as usize * w + (x + dx) as usize;
                    if label[k] == usize::MAX {
                        label[k] = next;
                        stack.push(k);
                    }
                }
            }
        }
        next += 1;
    }
    label
}

fn zs_subiteration(img: &mut BinaryImage, first: bool) -> bool {
    let (w, h) = (img.width(), img.height());
    let mut doomed = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if img.get(x, y) && zs_deletable(&ring(img, x as i64, y as i64), first) {
                doomed.push(y * w + x);
            }
        }
    }
    if doomed.is_empty() {
        return false;
    }
    let labels = components(img);
    let n_comp = labels.iter().filter(|&&l| l != usize::MAX).max().map_or(0, |m| m + 1);
    let mut size = vec![0usize; n_comp];
    let mut doomed_count = vec![0usize; n_comp];
    let mut first_px = vec![usize::MAX; n_comp];
    for (i, &l) in labels.iter().enumerate() {
        if l != usize::MAX {
            size[l] += 1;
            first_px[l] = first_px[l].min(i);
        }
    }
    for &i in &doomed {
        doomed_count[labels[i]] += 1;
    }
    let mut changed = false;
    for &i in &doomed {
        let l = labels[i];
        if doomed_count[l] == size[l] && i == first_px[l] {
            continue;
        }
        img.set(i % w, i / w, false);
        changed = true;
    }
    changed
}

fn remove_staircase(img: &mut BinaryImage) -> bool {
    let (w, h) = (img.width(), img.height());
    let mut changed = false;
    for y in 0..h {
        for x in 0..w {
            if img.get(x, y) && is_staircase_corner(&ring(img, x as i64, y as i64)) {
                img.set(x, y, false);
                changed = true;
            }
        }
    }
    changed
}

/// Thin a binary mask to a one-pixel-wide skeleton.
pub fn thin(mask: &BinaryImage) -> SkeletonImage {
    let mut img = mask.clone();
    loop {
        let mut changed = false;
        loop {
            let a = zs_subiteration(&mut img, true);
            let b = zs_subiteration(&mut img, false);
            if !(a || b) {
                break;
            }
            changed = true;
        }
        changed |= remove_staircase(&mut img);
        if !changed {
            break;
        }
    }
    SkeletonImage(img)
}

/// Count of foreground 8-neighbours: 1 endpoint, 2 interior, ≥ 3 junction.
pub fn neighbor_degree(sk: &SkeletonImage, x: usize, y: usize) -> Result<usize, SkeletonError> {
    if x >= sk.width() || y >= sk.height() || !sk.get(x, y) {
        return Err(SkeletonError::NotOnSkeleton(x, y));
    }
    Ok(ring(&sk.0, x as i64, y as i64).iter().filter(|&&v| v).count())
}

/// True when no Zhang–Suen or staircase deletion applies anywhere.
pub fn is_thin(img: &BinaryImage) -> bool {
    thin(img).0 == *img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_single_pixel() {
        let empty = BinaryImage::empty(5, 5).unwrap();
        assert_eq!(thin(&empty).as_mask().count(), 0);
        let mut one = empty.clone();
        one.set(2, 2, true);
        assert_eq!(thin(&one).as_mask(), &one);
    }

    #[test]
    fn two_by_two_block_survives_as_one_pixel() {
        let m = BinaryImage::from_ascii(&["....", ".##.", ".##.", "...."]).unwrap();
        let s = thin(&m);
        assert_eq!(s.as_mask().count(), 1);
        assert!(s.get(1, 1));
    }

    #[test]
    fn horizontal_bar_becomes_centerline() {
        let mut rows = vec![".".repeat(24)];
        for _ in 0..3 {
            rows.push(format!("..{}..", "#".repeat(20)));
        }
        rows.push(".".repeat(24));
        let refs: Vec<&str> = rows.iter().map(|s| s.as_str()).collect();
        let s = thin(&BinaryImage::from_ascii(&refs).unwrap());
        let px: Vec<_> = s.as_mask().foreground().collect();
        assert!(px.iter().all(|&(_, y)| y == 2), "{px:?}");
        // up to two pixels may be eaten at each end
        assert!((16..=20).contains(&px.len()), "{}", px.len());
        let xs: Vec<usize> = px.iter().map(|p| p.0).collect();
        assert!(xs[0] <= 4 && *xs.last().unwrap() >= 19);
    }

    #[test]
    fn staircase_corner_is_removed() {
        let m = BinaryImage::from_ascii(&["##...", ".##..", "..##."]).unwrap();
        let s = thin(&m);
        assert_eq!(s.as_mask().component_count(), 1);
        for (x, y) in s.as_mask().foreground() {
            let d = neighbor_degree(&s, x, y).unwrap();
            assert!(d <= 2, "({x},{y}) has degree {d}");
        }
    }

    #[test]
    fn degrees() {
        let iso = BinaryImage::from_ascii(&["...", ".#.", "..."]).unwrap();
        assert_eq!(neighbor_degree(&SkeletonImage(iso), 1, 1), Ok(0));
        let line = BinaryImage::from_ascii(&["###"]).unwrap();
        assert_eq!(neighbor_degree(&SkeletonImage(line.clone()), 1, 0), Ok(2));
        let plus = BinaryImage::from_ascii(&[".#.", "###", ".#."]).unwrap();
        assert_eq!(neighbor_degree(&SkeletonImage(plus), 1, 1), Ok(4));
        assert_eq!(
            neighbor_degree(&SkeletonImage(BinaryImage::from_ascii(&["#."]).unwrap()), 1, 0),
            Err(SkeletonError::NotOnSkeleton(1, 0))
        );
    }
}
