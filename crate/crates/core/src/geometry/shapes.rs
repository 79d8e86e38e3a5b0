//! Built-in shapes: boxes (cube, coating) and the comb.

use serde::{Deserialize, Serialize};

use super::{BcAssignment, BoundaryPoint, CollocationSet, Pairing, PointCloud, TimeGrid};
use crate::{Error, Real, Result};

/// Default lattice of the cube: 729 interior and 486 face points.
pub const CUBE_GRID: [usize; 3] = [9, 9, 9];
/// Default lattice of the coating: 324 interior and 306 face points.
pub const COATING_GRID: [usize; 3] = [9, 9, 4];
/// Beyond this ratio the coating thickness is too thin to separate lattice
/// planes from the faces in 64-bit arithmetic relative to the unit extent.
pub const MAX_SIZE_RATIO: f64 = 1e15;

/// Radical inverse of `index` in `base`.
pub fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let b = base as f64;
    while index > 0 {
        f /= b;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxShape {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl BoxShape {
    pub fn new(lo: [f64; 3], hi: [f64; 3]) -> Result<Self> {
        for a in 0..3 {
            if !(hi[a] > lo[a]) || !lo[a].is_finite() || !hi[a].is_finite() {
                return Err(Error::Geometry(format!(
                    "degenerate extent [{}, {}] on axis {}",
                    lo[a],
                    hi[a],
                    a + 1
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    fn span(&self, a: usize) -> f64 {
        self.hi[a] - self.lo[a]
    }

    fn volume(&self) -> f64 {
        self.span(0) * self.span(1) * self.span(2)
    }

    fn contains(&self, x: &[f64; 3], tol: f64) -> bool {
        (0..3).all(|a| x[a] >= self.lo[a] - tol && x[a] <= self.hi[a] + tol)
    }
}

/// Membership test for generated samples.
#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    Box(BoxShape),
    /// Union of boxes that touch along faces.
    Union(Vec<BoxShape>),
}

impl Shape {
    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        match self {
            Shape::Box(b) => (b.lo, b.hi),
            Shape::Union(boxes) => {
                let mut lo = [f64::INFINITY; 3];
                let mut hi = [f64::NEG_INFINITY; 3];
                for b in boxes {
                    for a in 0..3 {
                        lo[a] = lo[a].min(b.lo[a]);
                        hi[a] = hi[a].max(b.hi[a]);
                    }
                }
                (lo, hi)
            }
        }
    }

    /// Inside or on the surface, with tolerance `rel_tol` times the
    /// smallest bounding-box extent.
    pub fn contains(&self, x: &[f64; 3], rel_tol: f64) -> bool {
        let (lo, hi) = self.bounds();
        let scale = (0..3).map(|a| hi[a] - lo[a]).fold(f64::INFINITY, f64::min);
        let tol = rel_tol * scale;
        match self {
            Shape::Box(b) => b.contains(x, tol),
            Shape::Union(boxes) => boxes.iter().any(|b| b.contains(x, tol)),
        }
    }
}

fn lattice(n: usize, k: usize) -> f64 {
    (k + 1) as f64 / (n + 1) as f64
}

/// Interior lattice and per-face lattices of a box, in parametric
/// coordinates mapped through `map`.
fn box_cloud(shape: &BoxShape, grid: [usize; 3], bc: BcAssignment) -> Result<PointCloud<f64>> {
    if grid.contains(&0) {
        return Err(Error::config("grid", "counts must be positive"));
    }
    bc.validate()?;
    let at = |a: usize, u: f64| shape.lo[a] + u * shape.span(a);
    let mut interior = Vec::with_capacity(grid[0] * grid[1] * grid[2]);
    for i in 0..grid[0] {
        for j in 0..grid[1] {
            for k in 0..grid[2] {
                interior.push([
                    at(0, lattice(grid[0], i)),
                    at(1, lattice(grid[1], j)),
                    at(2, lattice(grid[2], k)),
                ]);
            }
        }
    }
    let mut boundary = Vec::new();
    for axis in 0..3 {
        let (a, b) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for side in 0..2 {
            let face = 2 * axis + side;
            let mut normal = [0.0; 3];
            normal[axis] = if side == 0 { -1.0 } else { 1.0 };
            for i in 0..grid[a] {
                for j in 0..grid[b] {
                    let mut x = [0.0; 3];
                    x[axis] = if side == 0 { shape.lo[axis] } else { shape.hi[axis] };
                    x[a] = at(a, lattice(grid[a], i));
                    x[b] = at(b, lattice(grid[b], j));
                    let region = bc.region(Some(face), &x)?;
                    boundary.push(BoundaryPoint { x, normal, region });
                }
            }
        }
    }
    Ok(PointCloud { interior, boundary })
}

fn convert<F: Real>(cloud: PointCloud<f64>) -> PointCloud<F> {
    let c3 = |x: [f64; 3]| x.map(F::lit);
    PointCloud {
        interior: cloud.interior.into_iter().map(c3).collect(),
        boundary: cloud
            .boundary
            .into_iter()
            .map(|b| BoundaryPoint {
                x: c3(b.x),
                normal: c3(b.normal),
                region: b.region,
            })
            .collect(),
    }
}

/// Regular lattice sampling of an axis-aligned box.
pub fn sample_box<F: Real>(
    extents: [[f64; 2]; 3],
    grid: [usize; 3],
    time: TimeGrid<F>,
    bc: BcAssignment,
    pairing: Pairing,
) -> Result<CollocationSet<F>> {
    let shape = BoxShape::new(extents.map(|e| e[0]), extents.map(|e| e[1]))?;
    let cloud = box_cloud(&shape, grid, bc)?;
    CollocationSet::from_cloud(convert(cloud), time, pairing)
}

/// Coating slab `[0,1] × [0,1] × [0, 1/size_ratio]`.
pub fn sample_coating<F: Real>(
    size_ratio: f64,
    grid: [usize; 3],
    time: TimeGrid<F>,
    bc: BcAssignment,
    pairing: Pairing,
) -> Result<CollocationSet<F>> {
    sample_box(coating_extents(size_ratio)?, grid, time, bc, pairing)
}

pub fn coating_extents(size_ratio: f64) -> Result<[[f64; 2]; 3]> {
    if !(size_ratio >= 1.0) {
        return Err(Error::config("size_ratio", "must be at least 1"));
    }
    if !(size_ratio <= MAX_SIZE_RATIO) {
        return Err(Error::Precision(format!(
            "size ratio {size_ratio:e} exceeds {MAX_SIZE_RATIO:e}; coating thickness is not resolvable"
        )));
    }
    Ok([[0.0, 1.0], [0.0, 1.0], [0.0, 1.0 / size_ratio]])
}

/// Comb made of a spine along `x2` with teeth extending in `x1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CombSpec {
    /// Extent along `x1`, spine plus teeth.
    pub length: f64,
    /// Extent along `x2`.
    pub width: f64,
    /// Extent along `x3`.
    pub height: f64,
    /// Spine depth along `x1`.
    pub spine: f64,
    pub teeth: usize,
    /// Tooth width along `x2`; teeth are spaced uniformly from `x2 = 0`
    /// to `x2 = width`.
    pub tooth_width: f64,
    pub interior_points: usize,
    pub boundary_points: usize,
    /// Leading Halton indices to skip.
    pub skip: u64,
}

impl Default for CombSpec {
    fn default() -> Self {
        Self {
            length: 6.44e-3,
            width: 2.32e-3,
            height: 2.0e-4,
            spine: 1.0e-3,
            teeth: 4,
            tooth_width: 0.32e-3,
            interior_points: 2228,
            boundary_points: 4043,
            skip: 0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Rect {
    axis: usize,
    value: f64,
    sign: f64,
    a: (usize, f64, f64),
    b: (usize, f64, f64),
}

impl Rect {
    fn area(&self) -> f64 {
        (self.a.2 - self.a.1) * (self.b.2 - self.b.1)
    }
}

impl CombSpec {
    pub fn validate(&self) -> Result<()> {
        let dims = [self.length, self.width, self.height, self.spine, self.tooth_width];
        if dims.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::Geometry("comb dimensions must be positive".into()));
        }
        if self.teeth == 0 {
            return Err(Error::Geometry("comb needs at least one tooth".into()));
        }
        if self.spine >= self.length {
            return Err(Error::Geometry("spine must be shorter than the comb".into()));
        }
        if self.tooth_width > self.width {
            return Err(Error::Geometry("tooth wider than the comb".into()));
        }
        if self.teeth > 1 && self.pitch() <= self.tooth_width {
            return Err(Error::Geometry(format!(
                "{} teeth of width {:e} overlap within width {:e}",
                self.teeth, self.tooth_width, self.width
            )));
        }
        Ok(())
    }

    fn pitch(&self) -> f64 {
        if self.teeth > 1 {
            (self.width - self.tooth_width) / (self.teeth - 1) as f64
        } else {
            0.0
        }
    }

    /// `x2` range of tooth `k`.
    pub fn tooth(&self, k: usize) -> (f64, f64) {
        let start = k as f64 * self.pitch();
        let end = if k + 1 == self.teeth && self.teeth > 1 {
            self.width
        } else {
            start + self.tooth_width
        };
        (start, end)
    }

    pub fn boxes(&self) -> Vec<BoxShape> {
        let mut out = vec![BoxShape {
            lo: [0.0; 3],
            hi: [self.spine, self.width, self.height],
        }];
        for k in 0..self.teeth {
            let (s, e) = self.tooth(k);
            out.push(BoxShape {
                lo: [self.spine, s, 0.0],
                hi: [self.length, e, self.height],
            });
        }
        out
    }

    pub fn shape(&self) -> Shape {
        Shape::Union(self.boxes())
    }

    fn surfaces(&self) -> Vec<Rect> {
        let (l, w, h, sp) = (self.length, self.width, self.height, self.spine);
        let mut out = Vec::new();
        for b in self.boxes() {
            for (value, sign) in [(0.0, -1.0), (h, 1.0)] {
                out.push(Rect {
                    axis: 2,
                    value,
                    sign,
                    a: (0, b.lo[0], b.hi[0]),
                    b: (1, b.lo[1], b.hi[1]),
                });
            }
        }
        let side = |axis, value, sign, a: (usize, f64, f64)| Rect {
            axis,
            value,
            sign,
            a,
            b: (2, 0.0, h),
        };
        out.push(side(0, 0.0, -1.0, (1, 0.0, w)));
        out.push(side(1, 0.0, -1.0, (0, 0.0, sp)));
        out.push(side(1, w, 1.0, (0, 0.0, sp)));
        let mut covered = 0.0;
        for k in 0..self.teeth {
            let (s, e) = self.tooth(k);
            if s > covered {
                out.push(side(0, sp, 1.0, (1, covered, s)));
            }
            covered = e;
            out.push(side(0, l, 1.0, (1, s, e)));
            out.push(side(1, s, -1.0, (0, sp, l)));
            out.push(side(1, e, 1.0, (0, sp, l)));
        }
        if covered < w {
            out.push(side(0, sp, 1.0, (1, covered, w)));
        }
        out
    }
}

/// Splits `total` proportionally to `weights` (largest remainder, ties to
/// the earlier entry).
fn allocate(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut left = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&i, &j| {
        let (ri, rj) = (exact[i] - exact[i].floor(), exact[j] - exact[j].floor());
        rj.partial_cmp(&ri).expect("finite").then(i.cmp(&j))
    });
    for &i in &order {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

fn comb_cloud(spec: &CombSpec, bc: BcAssignment) -> Result<PointCloud<f64>> {
    spec.validate()?;
    bc.validate()?;
    if matches!(bc, BcAssignment::Faces { .. }) {
        return Err(Error::config("bc", "per-face assignment requires a box shape"));
    }
    let boxes = spec.boxes();
    let vols: Vec<f64> = boxes.iter().map(|b| b.volume()).collect();
    let mut interior = Vec::with_capacity(spec.interior_points);
    for (b, n) in boxes.iter().zip(allocate(spec.interior_points, &vols)) {
        for i in 0..n as u64 {
            let idx = spec.skip + i + 1;
            let u = [halton(idx, 2), halton(idx, 3), halton(idx, 5)];
            interior.push(std::array::from_fn(|a| b.lo[a] + u[a] * b.span(a)));
        }
    }
    let rects = spec.surfaces();
    let areas: Vec<f64> = rects.iter().map(|r| r.area()).collect();
    let mut boundary = Vec::with_capacity(spec.boundary_points);
    for (r, n) in rects.iter().zip(allocate(spec.boundary_points, &areas)) {
        let mut normal = [0.0; 3];
        normal[r.axis] = r.sign;
        for i in 0..n as u64 {
            let idx = spec.skip + i + 1;
            let mut x = [0.0; 3];
            x[r.axis] = r.value;
            x[r.a.0] = r.a.1 + halton(idx, 2) * (r.a.2 - r.a.1);
            x[r.b.0] = r.b.1 + halton(idx, 3) * (r.b.2 - r.b.1);
            let region = bc.region(None, &x)?;
            boundary.push(BoundaryPoint { x, normal, region });
        }
    }
    Ok(PointCloud { interior, boundary })
}

/// Quasi-random (Halton) sampling of the comb.
pub fn sample_comb<F: Real>(
    spec: &CombSpec,
    time: TimeGrid<F>,
    bc: BcAssignment,
    pairing: Pairing,
) -> Result<CollocationSet<F>> {
    CollocationSet::from_cloud(convert(comb_cloud(spec, bc)?), time, pairing)
}

/// Test nodes: the given surface samples plus an `n³` cell-centred grid
/// over the bounding box, restricted to the shape.
pub fn test_grid(shape: &Shape, surface: &[[f64; 3]], n: usize) -> Vec<[f64; 3]> {
    let (lo, hi) = shape.bounds();
    let mut out = surface.to_vec();
    let c = |a: usize, k: usize| lo[a] + (k as f64 + 0.5) / n as f64 * (hi[a] - lo[a]);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let x = [c(0, i), c(1, j), c(2, k)];
                if shape.contains(&x, 0.0) {
                    out.push(x);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Region;

    fn grid() -> TimeGrid<f64> {
        TimeGrid::new(0.0, 1.0, 0.1).unwrap()
    }

    #[test]
    fn halton_values() {
        assert_eq!(halton(1, 2), 0.5);
        assert_eq!(halton(3, 2), 0.75);
        assert!((halton(2, 3) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn cube_counts() {
        let shape = BoxShape::new([0.0; 3], [1.0; 3]).unwrap();
        let cloud = box_cloud(&shape, CUBE_GRID, BcAssignment::AllDirichlet).unwrap();
        assert_eq!(cloud.interior.len(), 729);
        assert_eq!(cloud.boundary.len(), 486);
        assert!(cloud.interior.iter().all(|x| x.iter().all(|v| *v > 0.0 && *v < 1.0)));
    }

    #[test]
    fn coating_counts_and_faces() {
        for ratio in [10.0, 1e9] {
            let set = sample_coating(ratio, COATING_GRID, grid(), BcAssignment::TOP_NEUMANN, Pairing::Tensor).unwrap();
            assert_eq!(set.cloud.interior.len(), 324);
            assert_eq!(set.cloud.boundary.len(), 306);
            assert_eq!(set.cloud.count(Region::Neumann), 81);
            let top = 1.0 / ratio;
            for b in set.cloud.boundary.iter().filter(|b| b.region == Region::Neumann) {
                assert_eq!(b.normal, [0.0, 0.0, 1.0]);
                assert_eq!(b.x[2], top);
            }
        }
    }

    #[test]
    fn coating_parametric_invariance() {
        let a = sample_coating::<f64>(10.0, COATING_GRID, grid(), BcAssignment::TOP_NEUMANN, Pairing::Tensor).unwrap();
        let b = sample_coating::<f64>(1e6, COATING_GRID, grid(), BcAssignment::TOP_NEUMANN, Pairing::Tensor).unwrap();
        for (p, q) in a.cloud.interior.iter().zip(&b.cloud.interior) {
            assert_eq!(p[0], q[0]);
            assert_eq!(p[1], q[1]);
            assert!((p[2] * 10.0 - q[2] * 1e6).abs() < 1e-15);
        }
    }

    #[test]
    fn coating_limits() {
        let err =
            sample_coating::<f64>(1e16, COATING_GRID, grid(), BcAssignment::TOP_NEUMANN, Pairing::Tensor).unwrap_err();
        assert!(matches!(err, Error::Precision(_)));
        assert!(sample_coating::<f64>(0.5, COATING_GRID, grid(), BcAssignment::TOP_NEUMANN, Pairing::Tensor).is_err());
    }

    #[test]
    fn degenerate_box() {
        let r = sample_box::<f64>(
            [[0.0, 1.0], [0.0, 0.0], [0.0, 1.0]],
            CUBE_GRID,
            grid(),
            BcAssignment::AllDirichlet,
            Pairing::Tensor,
        );
        assert!(matches!(r, Err(Error::Geometry(_))));
    }

    #[test]
    fn comb_layout() {
        let spec = CombSpec::default();
        assert!((spec.length / spec.height - 32.2).abs() < 1e-12);
        let (s, e) = spec.tooth(3);
        assert!((e - 2.32e-3).abs() < 1e-18);
        assert!(s > spec.tooth(2).1);
        let bc = BcAssignment::DirichletWhere { axis: 1, min: 1.16e-3 };
        let cloud = comb_cloud(&spec, bc).unwrap();
        assert_eq!(cloud.interior.len(), 2228);
        assert_eq!(cloud.boundary.len(), 4043);
        let shape = spec.shape();
        for x in cloud.interior.iter().chain(cloud.boundary.iter().map(|b| &b.x)) {
            assert!(shape.contains(x, 1e-12));
        }
        for b in &cloud.boundary {
            assert_eq!(b.region == Region::Dirichlet, b.x[1] >= 1.16e-3);
        }
        let total_area: f64 = spec.surfaces().iter().map(|r| r.area()).sum();
        let footprint = spec.spine * spec.width + 4.0 * (spec.length - spec.spine) * spec.tooth_width;
        let perimeter = 2.0 * spec.length + spec.width // x2 = 0, x2 = W sides and spine back
            + 2.0 * 3.0 * (spec.length - spec.spine) // inner tooth sides
            + 4.0 * spec.tooth_width // tips
            + (spec.width - 4.0 * spec.tooth_width); // spine front gaps
        assert!((total_area - (2.0 * footprint + perimeter * spec.height)).abs() < 1e-15);
    }

    #[test]
    fn overlapping_teeth_rejected() {
        let spec = CombSpec {
            teeth: 8,
            ..CombSpec::default()
        };
        assert!(matches!(spec.validate(), Err(Error::Geometry(_))));
    }

    #[test]
    fn allocation_sums() {
        assert_eq!(allocate(10, &[1.0, 1.0, 1.0]), vec![4, 3, 3]);
        assert_eq!(allocate(7, &[2.0, 5.0]).iter().sum::<usize>(), 7);
    }

    #[test]
    fn test_grid_filters_shape() {
        let spec = CombSpec::default();
        let shape = spec.shape();
        let g = test_grid(&shape, &[], 11);
        assert!(!g.is_empty() && g.len() < 1331);
        assert!(g.iter().all(|x| shape.contains(x, 0.0)));
        let cube = Shape::Box(BoxShape::new([0.0; 3], [1.0; 3]).unwrap());
        assert_eq!(test_grid(&cube, &[[0.0; 3]], 11).len(), 1332);
    }
}
