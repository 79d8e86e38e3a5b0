//! Collocation sets: spatial samples of a shape paired with time stations.

mod cloud;
mod shapes;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result};

pub use cloud::{load_point_cloud, read_point_cloud, save_point_cloud, write_point_cloud};
pub use shapes::{
    coating_extents, halton, sample_box, sample_coating, sample_comb, test_grid, BoxShape, CombSpec, Shape,
    COATING_GRID, CUBE_GRID, MAX_SIZE_RATIO,
};

/// Tolerance on unit normals.
pub const NORMAL_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Interior,
    Dirichlet,
    Neumann,
}

impl Region {
    pub fn name(self) -> &'static str {
        match self {
            Region::Interior => "interior",
            Region::Dirichlet => "dirichlet",
            Region::Neumann => "neumann",
        }
    }
}

impl std::str::FromStr for Region {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "interior" => Ok(Region::Interior),
            "dirichlet" => Ok(Region::Dirichlet),
            "neumann" => Ok(Region::Neumann),
            other => Err(format!("unknown region tag `{other}`")),
        }
    }
}

/// A spatial boundary sample. `normal` is the unit outward normal, or zero
/// when unknown (Dirichlet rows of imported clouds).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryPoint<F = f64> {
    pub x: [F; 3],
    pub normal: [F; 3],
    pub region: Region,
}

/// Spatial samples of a shape, before pairing with time.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct PointCloud<F = f64> {
    pub interior: Vec<[F; 3]>,
    pub boundary: Vec<BoundaryPoint<F>>,
}

impl<F: Real> PointCloud<F> {
    pub fn count(&self, region: Region) -> usize {
        match region {
            Region::Interior => self.interior.len(),
            r => self.boundary.iter().filter(|b| b.region == r).count(),
        }
    }

    /// Axis-aligned bounding box of every sample.
    pub fn bounds(&self) -> Option<([F; 3], [F; 3])> {
        let mut it = self.interior.iter().chain(self.boundary.iter().map(|b| &b.x));
        let first = *it.next()?;
        let (mut lo, mut hi) = (first, first);
        for x in it {
            for a in 0..3 {
                lo[a] = lo[a].min(x[a]);
                hi[a] = hi[a].max(x[a]);
            }
        }
        Some((lo, hi))
    }

    pub fn validate(&self) -> Result<()> {
        for b in &self.boundary {
            if b.region == Region::Interior {
                return Err(Error::Geometry("boundary sample tagged interior".into()));
            }
            if b.region == Region::Neumann && !is_unit(&b.normal) {
                return Err(Error::Geometry(format!(
                    "Neumann normal {:?} at {:?} is not unit length",
                    b.normal, b.x
                )));
            }
        }
        let all_finite = self
            .interior
            .iter()
            .chain(self.boundary.iter().map(|b| &b.x))
            .all(|x| x.iter().all(|v| v.is_finite()));
        if !all_finite {
            return Err(Error::Geometry("non-finite coordinate".into()));
        }
        Ok(())
    }
}

pub(crate) fn is_unit<F: Real>(n: &[F; 3]) -> bool {
    let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    (norm - F::one()).abs() <= F::lit(NORMAL_TOL)
}

/// Inclusive time stations `t0, t0 + dt, …, tf`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid<F = f64> {
    pub t0: F,
    pub tf: F,
    pub dt: F,
}

impl<F: Real> TimeGrid<F> {
    pub fn new(t0: F, tf: F, dt: F) -> Result<Self> {
        let g = Self { t0, tf, dt };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > F::zero()) || !self.dt.is_finite() {
            return Err(Error::config("time.dt", "must be positive"));
        }
        if !(self.tf >= self.t0) || !self.t0.is_finite() || !self.tf.is_finite() {
            return Err(Error::config("time", "need finite t0 <= tf"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        let steps = ((self.tf - self.t0) / self.dt).round();
        steps.to_usize().unwrap_or(0) + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Stations computed as `t0 + k·dt`, the last one pinned to `tf`.
    pub fn stations(&self) -> Vec<F> {
        let n = self.len();
        (0..n)
            .map(|k| {
                if k + 1 == n {
                    self.tf
                } else {
                    self.t0 + F::from_usize_lossy(k) * self.dt
                }
            })
            .collect()
    }
}

/// How spatial samples are combined with time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Pairing {
    /// Every spatial point at every station.
    Tensor,
    /// Each spatial point at `per_point` uniform random times.
    Random { seed: u64, per_point: usize },
}

/// Pairs every point with `per_point` times drawn uniformly from
/// `[t0, tf]`, reproducibly from `seed`.
pub fn random_interior_times<F: Real>(
    points: &[[F; 3]],
    time: &TimeGrid<F>,
    seed: u64,
    per_point: usize,
) -> Vec<[F; 4]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (time.t0.to_f64_lossy(), time.tf.to_f64_lossy());
    let dist = Uniform::new_inclusive(lo, hi);
    let mut out = Vec::with_capacity(points.len() * per_point);
    for x in points {
        for _ in 0..per_point {
            let t = F::lit(dist.sample(&mut rng));
            out.push([x[0], x[1], x[2], t]);
        }
    }
    out
}

/// A Neumann sample in space-time with its outward normal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeumannPoint<F = f64> {
    pub x: [F; 4],
    pub normal: [F; 3],
}

/// Point counts per loss family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize)]
pub struct Counts {
    pub pde: usize,
    pub ic: usize,
    pub ic_velocity: usize,
    pub nbc: usize,
    pub dbc: usize,
}

/// Space-time collocation points for every loss family.
#[derive(Clone, Debug, PartialEq)]
pub struct CollocationSet<F = f64> {
    pub interior: Vec<[F; 4]>,
    /// Spatial samples at `t0`, shared by the value and velocity conditions.
    pub initial: Vec<[F; 4]>,
    pub dirichlet: Vec<[F; 4]>,
    pub neumann: Vec<NeumannPoint<F>>,
    pub time: TimeGrid<F>,
    pub cloud: PointCloud<F>,
}

impl<F: Real> CollocationSet<F> {
    /// Pairs a spatial cloud with time. Boundary points follow the same
    /// pairing as interior points; initial points are all spatial samples
    /// at `t0`.
    pub fn from_cloud(cloud: PointCloud<F>, time: TimeGrid<F>, pairing: Pairing) -> Result<Self> {
        cloud.validate()?;
        time.validate()?;
        let stations = time.stations();
        let pair = |pts: &[[F; 3]], salt: u64| -> Vec<[F; 4]> {
            match pairing {
                Pairing::Tensor => pts
                    .iter()
                    .flat_map(|x| stations.iter().map(move |&t| [x[0], x[1], x[2], t]))
                    .collect(),
                Pairing::Random { seed, per_point } => {
                    random_interior_times(pts, &time, seed.wrapping_add(salt), per_point)
                }
            }
        };
        if let Pairing::Random { per_point: 0, .. } = pairing {
            return Err(Error::config("pairing.per_point", "must be at least 1"));
        }
        let dir: Vec<[F; 3]> = cloud
            .boundary
            .iter()
            .filter(|b| b.region == Region::Dirichlet)
            .map(|b| b.x)
            .collect();
        let neu: Vec<&BoundaryPoint<F>> = cloud.boundary.iter().filter(|b| b.region == Region::Neumann).collect();
        let neu_x: Vec<[F; 3]> = neu.iter().map(|b| b.x).collect();
        let per = match pairing {
            Pairing::Tensor => stations.len(),
            Pairing::Random { per_point, .. } => per_point,
        };
        let neumann = pair(&neu_x, 2)
            .into_iter()
            .enumerate()
            .map(|(k, x)| NeumannPoint {
                x,
                normal: neu[k / per].normal,
            })
            .collect();
        let initial = cloud
            .interior
            .iter()
            .chain(cloud.boundary.iter().map(|b| &b.x))
            .map(|x| [x[0], x[1], x[2], time.t0])
            .collect();
        Ok(Self {
            interior: pair(&cloud.interior, 0),
            initial,
            dirichlet: pair(&dir, 1),
            neumann,
            time,
            cloud,
        })
    }

    pub fn counts(&self) -> Counts {
        Counts {
            pde: self.interior.len(),
            ic: self.initial.len(),
            ic_velocity: self.initial.len(),
            nbc: self.neumann.len(),
            dbc: self.dirichlet.len(),
        }
    }

    /// Bounds of all inputs `(x1, x2, x3, t)`.
    pub fn input_bounds(&self) -> Result<([F; 4], [F; 4])> {
        let (lo, hi) = self
            .cloud
            .bounds()
            .ok_or_else(|| Error::Geometry("empty point set".into()))?;
        Ok(([lo[0], lo[1], lo[2], self.time.t0], [hi[0], hi[1], hi[2], self.time.tf]))
    }
}

/// Assignment of boundary samples to Dirichlet or Neumann conditions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BcAssignment {
    AllDirichlet,
    AllNeumann,
    /// Per box face in the order `-x1, +x1, -x2, +x2, -x3, +x3`.
    Faces {
        faces: [Region; 6],
    },
    /// Dirichlet where `x[axis] >= min`, Neumann elsewhere.
    DirichletWhere {
        axis: usize,
        min: f64,
    },
}

impl BcAssignment {
    /// Coating default: Neumann on the top face only.
    pub const TOP_NEUMANN: BcAssignment = BcAssignment::Faces {
        faces: [
            Region::Dirichlet,
            Region::Dirichlet,
            Region::Dirichlet,
            Region::Dirichlet,
            Region::Dirichlet,
            Region::Neumann,
        ],
    };

    pub fn validate(&self) -> Result<()> {
        match self {
            BcAssignment::Faces { faces } if faces.contains(&Region::Interior) => {
                Err(Error::config("bc", "faces must be dirichlet or neumann"))
            }
            BcAssignment::DirichletWhere { axis, min } if *axis > 2 || !min.is_finite() => {
                Err(Error::config("bc", "axis must be 0..=2 and min finite"))
            }
            _ => Ok(()),
        }
    }

    pub(crate) fn region<F: Real>(&self, face: Option<usize>, x: &[F; 3]) -> Result<Region> {
        match *self {
            BcAssignment::AllDirichlet => Ok(Region::Dirichlet),
            BcAssignment::AllNeumann => Ok(Region::Neumann),
            BcAssignment::Faces { faces } => face
                .map(|f| faces[f])
                .ok_or_else(|| Error::config("bc", "per-face assignment requires a box shape")),
            BcAssignment::DirichletWhere { axis, min } => Ok(if x[axis] >= F::lit(min) {
                Region::Dirichlet
            } else {
                Region::Neumann
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_grid_counts() {
        let g = TimeGrid::new(0.0, 1.0, 0.1).unwrap();
        assert_eq!(g.len(), 11);
        let s = g.stations();
        assert_eq!(s[0], 0.0);
        assert_eq!(*s.last().unwrap(), 1.0);
        assert_eq!(TimeGrid::new(0.0, 2.0, 0.2).unwrap().len(), 11);
        assert!(TimeGrid::new(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn random_times_are_seeded_and_in_range() {
        let pts = vec![[0.0; 3]; 4000];
        let g = TimeGrid::new(0.0, 2.0, 0.2).unwrap();
        let a = random_interior_times(&pts, &g, 11, 1);
        let b = random_interior_times(&pts, &g, 11, 1);
        assert_eq!(a, b);
        assert!(a.iter().all(|p| p[3] >= 0.0 && p[3] <= 2.0));
        let n = a.len() as f64;
        let mean = a.iter().map(|p| p[3]).sum::<f64>() / n;
        let sigma = 2.0 / 12f64.sqrt();
        assert!((mean - 1.0).abs() < 3.0 * sigma / n.sqrt());
    }

    #[test]
    fn tensor_pairing_sizes() {
        let set = sample_box::<f64>(
            [[0.0, 1.0]; 3],
            [9, 9, 9],
            TimeGrid::new(0.0, 1.0, 0.1).unwrap(),
            BcAssignment::AllDirichlet,
            Pairing::Tensor,
        )
        .unwrap();
        let c = set.counts();
        assert_eq!(c.pde, 729 * 11);
        assert_eq!(c.dbc, 486 * 11);
        assert_eq!(c.nbc, 0);
        assert_eq!(c.ic, 729 + 486);
        assert!(set.initial.iter().all(|p| p[3] == 0.0));
    }
}
