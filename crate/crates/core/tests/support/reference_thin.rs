//! Second, separately written implementation of the thinning rules, used as
//! an oracle by the test suites.

use vessel_core::raster::BinaryImage;

/// Reference thinner on a padded byte grid.
struct Grid {
    w: usize,
    h: usize,
    // (h + 2) rows of (w + 2) cells, border always 0
    cells: Vec<Vec<u8>>,
}

impl Grid {
    fn from_mask(m: &BinaryImage) -> Self {
        let (w, h) = (m.width(), m.height());
        let mut cells = vec![vec![0u8; w + 2]; h + 2];
        for y in 0..h {
            for x in 0..w {
                cells[y + 1][x + 1] = u8::from(m.get(x, y));
            }
        }
        Grid { w, h, cells }
    }

    fn to_mask(&self) -> BinaryImage {
        let mut m = BinaryImage::empty(self.w, self.h).unwrap();
        for y in 0..self.h {
            for x in 0..self.w {
                if self.cells[y + 1][x + 1] == 1 {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    /// P2..P9 clockwise from north, for padded coordinates.
    fn neighbourhood(&self, r: usize, c: usize) -> [u8; 8] {
        let g = &self.cells;
        [
            g[r - 1][c],
            g[r - 1][c + 1],
            g[r][c + 1],
            g[r + 1][c + 1],
            g[r + 1][c],
            g[r + 1][c - 1],
            g[r][c - 1],
            g[r - 1][c - 1],
        ]
    }

    /// Union-find component label of every foreground cell.
    fn component_roots(&self) -> Vec<Vec<usize>> {
        let stride = self.w + 2;
        let mut parent: Vec<usize> = (0..stride * (self.h + 2)).collect();
        fn root(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for r in 1..=self.h {
            for c in 1..=self.w {
                if self.cells[r][c] == 0 {
                    continue;
                }
                // join with the already visited half of the neighbourhood
                for (dr, dc) in [(-1i64, -1i64), (-1, 0), (-1, 1), (0, -1)] {
                    let (rr, cc) = ((r as i64 + dr) as usize, (c as i64 + dc) as usize);
                    if self.cells[rr][cc] == 1 {
                        let a = root(&mut parent, r * stride + c);
                        let b = root(&mut parent, rr * stride + cc);
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
        let mut out = vec![vec![usize::MAX; stride]; self.h + 2];
        for r in 1..=self.h {
            for c in 1..=self.w {
                if self.cells[r][c] == 1 {
                    out[r][c] = root(&mut parent, r * stride + c);
                }
            }
        }
        out
    }

    fn pass(&mut self, step: u8) -> bool {
        let mut marked = Vec::new();
        for r in 1..=self.h {
            for c in 1..=self.w {
                if self.cells[r][c] == 0 {
                    continue;
                }
                let [p2, p3, p4, p5, p6, p7, p8, p9] = self.neighbourhood(r, c);
                let b = [p2, p3, p4, p5, p6, p7, p8, p9].iter().map(|&v| v as u32).sum::<u32>();
                let seq = [p2, p3, p4, p5, p6, p7, p8, p9, p2];
                let a = seq.windows(2).filter(|w| w[0] == 0 && w[1] == 1).count();
                let (c1, c2) = if step == 1 { (p2 * p4 * p6, p4 * p6 * p8) } else { (p2 * p4 * p8, p2 * p6 * p8) };
                if (2..=6).contains(&b) && a == 1 && c1 == 0 && c2 == 0 {
                    marked.push((r, c));
                }
            }
        }
        if marked.is_empty() {
            return false;
        }
        let roots = self.component_roots();
        let mut keep = Vec::new();
        let mut by_root: std::collections::HashMap<usize, (usize, usize)> = std::collections::HashMap::new();
        for &(r, c) in &marked {
            by_root.entry(roots[r][c]).or_insert((0, 0)).0 += 1;
        }
        for r in 1..=self.h {
            for c in 1..=self.w {
                if self.cells[r][c] == 1 {
                    if let Some(e) = by_root.get_mut(&roots[r][c]) {
                        e.1 += 1;
                    }
                }
            }
        }
        for (&root, &(doomed, size)) in &by_root {
            if doomed == size {
                // first cell of the component in scan order survives
                'scan: for r in 1..=self.h {
                    for c in 1..=self.w {
                        if self.cells[r][c] == 1 && roots[r][c] == root {
                            keep.push((r, c));
                            break 'scan;
                        }
                    }
                }
            }
        }
        let mut changed = false;
        for (r, c) in marked {
            if !keep.contains(&(r, c)) {
                self.cells[r][c] = 0;
                changed = true;
            }
        }
        changed
    }

    fn corner_pass(&mut self) -> bool {
        const OFFS: [(i64, i64); 8] = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)];
        let mut changed = false;
        for r in 1..=self.h {
            for c in 1..=self.w {
                if self.cells[r][c] == 0 {
                    continue;
                }
                let on: Vec<(i64, i64)> = OFFS
                    .iter()
                    .copied()
                    .filter(|&(dr, dc)| self.cells[(r as i64 + dr) as usize][(c as i64 + dc) as usize] == 1)
                    .collect();
                let has = |d: (i64, i64)| on.contains(&d);
                let (n, e, s, w) = (has((-1, 0)), has((0, 1)), has((1, 0)), has((0, -1)));
                if !((n && e) || (e && s) || (s && w) || (w && n)) {
                    continue;
                }
                // neighbours stay one 8-connected group without the centre?
                let mut seen = vec![on[0]];
                let mut frontier = vec![on[0]];
                while let Some(p) = frontier.pop() {
                    for &q in &on {
                        if !seen.contains(&q) && (p.0 - q.0).abs() <= 1 && (p.1 - q.1).abs() <= 1 {
                            seen.push(q);
                            frontier.push(q);
                        }
                    }
                }
                if seen.len() == on.len() {
                    self.cells[r][c] = 0;
                    changed = true;
                }
            }
        }
        changed
    }

    fn thin(mut self) -> BinaryImage {
        loop {
            let mut any = false;
            loop {
                let a = self.pass(1);
                let b = self.pass(2);
                if !a && !b {
                    break;
                }
                any = true;
            }
            if self.corner_pass() {
                any = true;
            }
            if !any {
                return self.to_mask();
            }
        }
    }
}

pub fn reference_thin(m: &BinaryImage) -> BinaryImage {
    Grid::from_mask(m).thin()
}
