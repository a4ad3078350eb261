//! 2D grid containers, supercover traversal and the exact Euclidean
//! distance transform shared by the mapping and planning modules.

use serde::{Deserialize, Serialize};

/// Trinary occupancy used by every 2D map in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellState {
    Occupied,
    Free,
    Unknown,
}

impl CellState {
    /// PGM palette: 0 = occupied, 255 = free, 127 = unknown.
    pub fn to_gray(self) -> u8 {
        match self {
            CellState::Occupied => 0,
            CellState::Free => 255,
            CellState::Unknown => 127,
        }
    }

    pub fn from_gray(v: u8) -> Option<Self> {
        match v {
            0 => Some(CellState::Occupied),
            255 => Some(CellState::Free),
            127 => Some(CellState::Unknown),
            _ => None,
        }
    }
}

/// Placement of a regular grid in the world: lower-left corner, square
/// cell size and dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub origin: [f64; 2],
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
}

impl GridGeometry {
    pub fn new(origin: [f64; 2], resolution: f64, width: usize, height: usize) -> Self {
        Self { origin, resolution, width, height }
    }

    /// Grid covering `[min, max)` with `ceil(extent / r)` cells per axis.
    pub fn covering(min: [f64; 2], max: [f64; 2], resolution: f64) -> Self {
        let w = cells_for(max[0] - min[0], resolution);
        let h = cells_for(max[1] - min[1], resolution);
        Self::new(min, resolution, w, h)
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Signed cell coordinates of a world point (may be outside the grid).
    pub fn cell_of(&self, x: f64, y: f64) -> (i64, i64) {
        (((x - self.origin[0]) / self.resolution).floor() as i64, ((y - self.origin[1]) / self.resolution).floor() as i64)
    }

    pub fn in_grid(&self, cx: i64, cy: i64) -> bool {
        cx >= 0 && cy >= 0 && (cx as usize) < self.width && (cy as usize) < self.height
    }

    pub fn index(&self, cx: usize, cy: usize) -> usize {
        cy * self.width + cx
    }

    pub fn index_of(&self, x: f64, y: f64) -> Option<usize> {
        let (cx, cy) = self.cell_of(x, y);
        self.in_grid(cx, cy).then(|| self.index(cx as usize, cy as usize))
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.width, idx / self.width)
    }

    pub fn center(&self, cx: i64, cy: i64) -> [f64; 2] {
        [self.origin[0] + (cx as f64 + 0.5) * self.resolution, self.origin[1] + (cy as f64 + 0.5) * self.resolution]
    }

    pub fn center_of_index(&self, idx: usize) -> [f64; 2] {
        let (cx, cy) = self.coords(idx);
        self.center(cx as i64, cy as i64)
    }

    pub fn extent(&self) -> [f64; 2] {
        [self.width as f64 * self.resolution, self.height as f64 * self.resolution]
    }
}

/// Number of cells needed to cover `extent` at `resolution`, tolerant to
/// floating point noise in exact multiples.
pub fn cells_for(extent: f64, resolution: f64) -> usize {
    let n = extent / resolution;
    let rounded = n.round();
    if (n - rounded).abs() < 1e-9 {
        rounded.max(0.0) as usize
    } else {
        n.ceil().max(0.0) as usize
    }
}

/// Dense row-major 2D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2<T> {
    pub geometry: GridGeometry,
    pub data: Vec<T>,
}

impl<T: Clone> Grid2<T> {
    pub fn filled(geometry: GridGeometry, value: T) -> Self {
        Self { data: vec![value; geometry.len()], geometry }
    }
}

impl<T> Grid2<T> {
    pub fn width(&self) -> usize {
        self.geometry.width
    }

    pub fn height(&self) -> usize {
        self.geometry.height
    }

    pub fn get(&self, cx: i64, cy: i64) -> Option<&T> {
        self.geometry.in_grid(cx, cy).then(|| &self.data[self.geometry.index(cx as usize, cy as usize)])
    }

    pub fn get_mut(&mut self, cx: i64, cy: i64) -> Option<&mut T> {
        if self.geometry.in_grid(cx, cy) {
            let i = self.geometry.index(cx as usize, cy as usize);
            Some(&mut self.data[i])
        } else {
            None
        }
    }

    pub fn at(&self, x: f64, y: f64) -> Option<&T> {
        let (cx, cy) = self.geometry.cell_of(x, y);
        self.get(cx, cy)
    }
}

const TIE_EPS: f64 = 1e-10;

/// Visits every cell of an N-dimensional grid whose closed box touches the
/// segment `a -> b`, in traversal order. Where the segment passes exactly
/// through a cell edge or corner, every cell sharing it is visited.
///
/// `visit` returns `false` to stop early. Cell indices are
/// `floor((p - origin) / cell)`.
pub fn supercover<const N: usize>(
    origin: [f64; N],
    cell: f64,
    a: [f64; N],
    b: [f64; N],
    mut visit: impl FnMut([i64; N]) -> bool,
) {
    let mut cur = [0i64; N];
    let mut end = [0i64; N];
    let mut step = [0i64; N];
    let mut t_max = [f64::INFINITY; N];
    let mut t_delta = [f64::INFINITY; N];
    for i in 0..N {
        let pa = (a[i] - origin[i]) / cell;
        let pb = (b[i] - origin[i]) / cell;
        cur[i] = pa.floor() as i64;
        end[i] = pb.floor() as i64;
        let d = pb - pa;
        if d > 0.0 {
            step[i] = 1;
            t_max[i] = ((cur[i] + 1) as f64 - pa) / d;
            t_delta[i] = 1.0 / d;
        } else if d < 0.0 {
            step[i] = -1;
            t_max[i] = (cur[i] as f64 - pa) / d;
            t_delta[i] = -1.0 / d;
        }
    }
    if !visit(cur) {
        return;
    }
    let budget: i64 = (0..N).map(|i| (end[i] - cur[i]).abs() + 2).sum::<i64>() * 2 + 4;
    let mut steps = 0i64;
    loop {
        let t = t_max.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(t <= 1.0 + TIE_EPS) || steps > budget {
            return;
        }
        steps += 1;
        let mut tied = [false; N];
        let mut n_tied = 0;
        for i in 0..N {
            if t_max[i] <= t + TIE_EPS {
                tied[i] = true;
                n_tied += 1;
            }
        }
        if n_tied > 1 {
            // corner crossing: visit every partial step through the shared edge/vertex
            let axes: Vec<usize> = (0..N).filter(|&i| tied[i]).collect();
            let full = (1u32 << axes.len()) - 1;
            for mask in 1..full {
                let mut c = cur;
                for (bit, &ax) in axes.iter().enumerate() {
                    if mask & (1 << bit) != 0 {
                        c[ax] += step[ax];
                    }
                }
                if !visit(c) {
                    return;
                }
            }
        }
        for i in 0..N {
            if tied[i] {
                cur[i] += step[i];
                t_max[i] += t_delta[i];
            }
        }
        if !visit(cur) {
            return;
        }
    }
}

/// Result of an exact Euclidean distance transform.
#[derive(Debug, Clone)]
pub struct DistanceField {
    pub geometry: GridGeometry,
    /// Squared distance in cells from each cell center to the nearest site
    /// center; `f64::INFINITY` when there are no sites.
    pub dist_sq: Vec<f64>,
    /// Linear index of the nearest site, `u32::MAX` when there are none.
    pub nearest: Vec<u32>,
}

impl DistanceField {
    /// Distance in meters at a linear index.
    pub fn meters(&self, idx: usize) -> f64 {
        self.dist_sq[idx].sqrt() * self.geometry.resolution
    }

    pub fn cells(&self, idx: usize) -> f64 {
        self.dist_sq[idx].sqrt()
    }

    pub fn nearest_site(&self, idx: usize) -> Option<usize> {
        let n = self.nearest[idx];
        (n != u32::MAX).then_some(n as usize)
    }
}

/// Exact squared Euclidean distance transform (separable lower-envelope
/// method) with nearest-site tracking.
pub fn distance_transform(geometry: GridGeometry, is_site: impl Fn(usize) -> bool) -> DistanceField {
    let (w, h) = (geometry.width, geometry.height);
    let mut dist_sq = vec![f64::INFINITY; w * h];
    let mut nearest = vec![u32::MAX; w * h];

    // rows: 1D distance to nearest site in the same row
    for y in 0..h {
        let row = y * w;
        let mut last: Option<usize> = None;
        for x in 0..w {
            if is_site(row + x) {
                last = Some(x);
            }
            if let Some(lx) = last {
                dist_sq[row + x] = ((x - lx) as f64).powi(2);
                nearest[row + x] = (row + lx) as u32;
            }
        }
        let mut next: Option<usize> = None;
        for x in (0..w).rev() {
            if is_site(row + x) {
                next = Some(x);
            }
            if let Some(nx) = next {
                let d = ((nx - x) as f64).powi(2);
                if d < dist_sq[row + x] {
                    dist_sq[row + x] = d;
                    nearest[row + x] = (row + nx) as u32;
                }
            }
        }
    }

    // columns: lower envelope of parabolas over the row results
    let mut f = vec![0.0; h];
    let mut feat = vec![u32::MAX; h];
    let mut v = vec![0usize; h];
    let mut z = vec![0.0f64; h + 1];
    for x in 0..w {
        for y in 0..h {
            f[y] = dist_sq[y * w + x];
            feat[y] = nearest[y * w + x];
        }
        let mut k: isize = -1;
        for q in 0..h {
            if !f[q].is_finite() {
                continue;
            }
            loop {
                if k < 0 {
                    k = 0;
                    v[0] = q;
                    z[0] = f64::NEG_INFINITY;
                    z[1] = f64::INFINITY;
                    break;
                }
                let p = v[k as usize];
                let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
                if s <= z[k as usize] {
                    k -= 1;
                    continue;
                }
                k += 1;
                v[k as usize] = q;
                z[k as usize] = s;
                z[k as usize + 1] = f64::INFINITY;
                break;
            }
        }
        if k < 0 {
            continue;
        }
        let mut j = 0usize;
        for q in 0..h {
            while z[j + 1] < q as f64 {
                j += 1;
            }
            let p = v[j];
            let i = q * w + x;
            dist_sq[i] = ((q as f64) - (p as f64)).powi(2) + f[p];
            nearest[i] = feat[p];
        }
    }

    DistanceField { geometry, dist_sq, nearest }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg_touches_box<const N: usize>(a: [f64; N], b: [f64; N], lo: [f64; N], hi: [f64; N]) -> bool {
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        for i in 0..N {
            let d = b[i] - a[i];
            if d == 0.0 {
                if a[i] < lo[i] || a[i] > hi[i] {
                    return false;
                }
            } else {
                let (mut ta, mut tb) = ((lo[i] - a[i]) / d, (hi[i] - a[i]) / d);
                if ta > tb {
                    std::mem::swap(&mut ta, &mut tb);
                }
                t0 = t0.max(ta);
                t1 = t1.min(tb);
            }
        }
        t0 <= t1
    }

    #[test]
    fn supercover_matches_brute_force_2d() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..500 {
            let a = [rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)];
            let b = [rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)];
            let mut got = Vec::new();
            supercover([0.0, 0.0], 1.0, a, b, |c| {
                got.push(c);
                true
            });
            let mut want = Vec::new();
            for x in 0..10 {
                for y in 0..10 {
                    let lo = [x as f64, y as f64];
                    if seg_touches_box(a, b, lo, [lo[0] + 1.0, lo[1] + 1.0]) {
                        want.push([x, y]);
                    }
                }
            }
            got.sort();
            got.dedup();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn supercover_diagonal_through_corners_visits_side_cells() {
        let mut got = Vec::new();
        supercover([0.0, 0.0], 1.0, [0.5, 0.5], [2.5, 2.5], |c| {
            got.push(c);
            true
        });
        assert_eq!(got.first(), Some(&[0, 0]));
        assert_eq!(got.last(), Some(&[2, 2]));
        for c in [[1, 0], [0, 1], [1, 1], [2, 1], [1, 2]] {
            assert!(got.contains(&c), "missing {c:?}");
        }
        assert_eq!(got.len(), 7);
    }

    #[test]
    fn supercover_single_point() {
        let mut got = Vec::new();
        supercover([0.0, 0.0, 0.0], 0.5, [0.2, 0.2, 0.2], [0.2, 0.2, 0.2], |c| {
            got.push(c);
            true
        });
        assert_eq!(got, vec![[0, 0, 0]]);
    }

    #[test]
    fn edt_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let geom = GridGeometry::new([0.0, 0.0], 1.0, 23, 17);
        for _ in 0..20 {
            let sites: Vec<bool> = (0..geom.len()).map(|_| rng.random_bool(0.05)).collect();
            let field = distance_transform(geom, |i| sites[i]);
            for i in 0..geom.len() {
                let (x, y) = geom.coords(i);
                let mut best = f64::INFINITY;
                for (j, &s) in sites.iter().enumerate() {
                    if s {
                        let (sx, sy) = geom.coords(j);
                        let d = (x as f64 - sx as f64).powi(2) + (y as f64 - sy as f64).powi(2);
                        best = best.min(d);
                    }
                }
                assert_eq!(field.dist_sq[i], best);
                if let Some(n) = field.nearest_site(i) {
                    let (sx, sy) = geom.coords(n);
                    let d = (x as f64 - sx as f64).powi(2) + (y as f64 - sy as f64).powi(2);
                    assert_eq!(d, best);
                    assert!(sites[n]);
                }
            }
        }
    }

    #[test]
    fn edt_without_sites_is_infinite() {
        let geom = GridGeometry::new([0.0, 0.0], 1.0, 4, 3);
        let field = distance_transform(geom, |_| false);
        assert!(field.dist_sq.iter().all(|d| d.is_infinite()));
        assert!(field.nearest_site(0).is_none());
    }

    #[test]
    fn covering_rounds_exact_multiples() {
        let g = GridGeometry::covering([0.0, 0.0], [13.0, 10.0], 0.05);
        assert_eq!((g.width, g.height), (260, 200));
        let g = GridGeometry::covering([0.0, 0.0], [1.01, 1.0], 0.05);
        assert_eq!(g.width, 21);
    }
}
