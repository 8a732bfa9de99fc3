//! Lattice regions: bounded subsets of ℝ^d together with the lattice points
//! they contain, the coupling-dependent three-region split, and the census of
//! nearest-neighbour links that cross a region boundary.
//!
//! Membership is decided by raw floating-point comparison of the defining
//! inequalities, without tolerance.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of ℤ^d.
pub type Site = Vec<i64>;

/// Volume of the unit ball in ℝ^d.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        2 => PI,
        3 => 4.0 * PI / 3.0,
        4 => PI * PI / 2.0,
        _ => unit_ball_volume(d - 2) * 2.0 * PI / d as f64,
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn site_norm(n: &[i64]) -> f64 {
    n.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt()
}

/// Defining inequalities of a region. Every length scales under [`LatticeDomain::scale`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", content = "params", rename_all = "snake_case")]
pub enum Shape {
    /// `|x| < radius`
    Ball { radius: f64 },
    /// `r_inner <= |x| <= r_outer`
    Annulus { r_inner: f64, r_outer: f64 },
    /// `r_inner < |x| < r_outer`
    OpenAnnulus { r_inner: f64, r_outer: f64 },
    /// `|x_a| <= half_widths[a]` on every axis
    Box { half_widths: Vec<f64> },
    /// `corner_a <= x_a < corner_a + side` on every axis
    CubeCell { corner: Vec<f64>, side: f64 },
    /// `|x| > radius`; not bounded, membership only.
    Exterior { radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatticeDomain {
    #[serde(flatten)]
    shape: Shape,
    dimension: usize,
}

#[derive(Deserialize)]
struct RawDomain {
    #[serde(flatten)]
    shape: Shape,
    dimension: usize,
}

impl<'de> Deserialize<'de> for LatticeDomain {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let raw = RawDomain::deserialize(de)?;
        LatticeDomain::new(raw.shape, raw.dimension).map_err(serde::de::Error::custom)
    }
}

impl LatticeDomain {
    pub fn new(shape: Shape, dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::invalid("dimension", "must be positive"));
        }
        let positive = |name: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(
                    name,
                    format!("must be finite and > 0, got {v}"),
                ))
            }
        };
        match &shape {
            Shape::Ball { radius } | Shape::Exterior { radius } => positive("radius", *radius)?,
            Shape::Annulus { r_inner, r_outer } | Shape::OpenAnnulus { r_inner, r_outer } => {
                if !(r_inner.is_finite() && *r_inner >= 0.0) {
                    return Err(Error::invalid("r_inner", "must be finite and >= 0"));
                }
                positive("r_outer", *r_outer)?;
                if r_outer < r_inner {
                    return Err(Error::invalid("r_outer", "must be >= r_inner"));
                }
            }
            Shape::Box { half_widths } => {
                if half_widths.len() != dimension {
                    return Err(Error::DimensionMismatch {
                        expected: dimension,
                        got: half_widths.len(),
                    });
                }
                for &h in half_widths {
                    positive("half_widths", h)?;
                }
            }
            Shape::CubeCell { corner, side } => {
                if corner.len() != dimension {
                    return Err(Error::DimensionMismatch {
                        expected: dimension,
                        got: corner.len(),
                    });
                }
                if corner.iter().any(|c| !c.is_finite()) {
                    return Err(Error::invalid("corner", "must be finite"));
                }
                positive("side", *side)?;
            }
        }
        Ok(LatticeDomain { shape, dimension })
    }

    pub fn ball(radius: f64, dimension: usize) -> Result<Self> {
        Self::new(Shape::Ball { radius }, dimension)
    }

    pub fn annulus(r_inner: f64, r_outer: f64, dimension: usize) -> Result<Self> {
        Self::new(Shape::Annulus { r_inner, r_outer }, dimension)
    }

    pub fn open_annulus(r_inner: f64, r_outer: f64, dimension: usize) -> Result<Self> {
        Self::new(Shape::OpenAnnulus { r_inner, r_outer }, dimension)
    }

    pub fn cube(half_width: f64, dimension: usize) -> Result<Self> {
        Self::new(
            Shape::Box {
                half_widths: vec![half_width; dimension],
            },
            dimension,
        )
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self.shape, Shape::Exterior { .. })
    }

    /// Membership of a real point.
    pub fn contains(&self, x: &[f64]) -> bool {
        debug_assert_eq!(x.len(), self.dimension);
        match &self.shape {
            Shape::Ball { radius } => norm(x) < *radius,
            Shape::Annulus { r_inner, r_outer } => {
                let r = norm(x);
                *r_inner <= r && r <= *r_outer
            }
            Shape::OpenAnnulus { r_inner, r_outer } => {
                let r = norm(x);
                *r_inner < r && r < *r_outer
            }
            Shape::Box { half_widths } => x.iter().zip(half_widths).all(|(v, h)| v.abs() <= *h),
            Shape::CubeCell { corner, side } => x
                .iter()
                .zip(corner)
                .all(|(v, c)| *c <= *v && *v < *c + *side),
            Shape::Exterior { radius } => norm(x) > *radius,
        }
    }

    pub fn contains_site(&self, n: &[i64]) -> bool {
        let x: Vec<f64> = n.iter().map(|&v| v as f64).collect();
        self.contains(&x)
    }

    /// Lebesgue volume of the region.
    pub fn volume(&self) -> Result<f64> {
        let d = self.dimension;
        let w = unit_ball_volume(d);
        Ok(match &self.shape {
            Shape::Ball { radius } => w * radius.powi(d as i32),
            Shape::Annulus { r_inner, r_outer } | Shape::OpenAnnulus { r_inner, r_outer } => {
                w * (r_outer.powi(d as i32) - r_inner.powi(d as i32))
            }
            Shape::Box { half_widths } => half_widths.iter().map(|h| 2.0 * h).product(),
            Shape::CubeCell { side, .. } => side.powi(d as i32),
            Shape::Exterior { .. } => return Err(Error::UnboundedDomain),
        })
    }

    /// Per-axis integer range guaranteed to contain every lattice point of the domain.
    fn bounding_box(&self) -> Result<Vec<(i64, i64)>> {
        let d = self.dimension;
        Ok(match &self.shape {
            Shape::Ball { radius: r }
            | Shape::Annulus { r_outer: r, .. }
            | Shape::OpenAnnulus { r_outer: r, .. } => {
                let m = r.floor() as i64;
                vec![(-m, m); d]
            }
            Shape::Box { half_widths } => half_widths
                .iter()
                .map(|h| {
                    let m = h.floor() as i64;
                    (-m, m)
                })
                .collect(),
            Shape::CubeCell { corner, side } => corner
                .iter()
                .map(|c| (c.ceil() as i64, (c + side).ceil() as i64 - 1))
                .collect(),
            Shape::Exterior { .. } => return Err(Error::UnboundedDomain),
        })
    }

    /// Lattice points of the domain in lexicographic order (axis 0 slowest).
    pub fn enumerate_sites(&self) -> Result<Vec<Site>> {
        let bounds = self.bounding_box()?;
        let mut out = Vec::new();
        if bounds.iter().any(|(lo, hi)| lo > hi) {
            return Ok(out);
        }
        let mut cur: Vec<i64> = bounds.iter().map(|b| b.0).collect();
        loop {
            if self.contains_site(&cur) {
                out.push(cur.clone());
            }
            let mut axis = self.dimension;
            loop {
                if axis == 0 {
                    return Ok(out);
                }
                axis -= 1;
                if cur[axis] < bounds[axis].1 {
                    cur[axis] += 1;
                    break;
                }
                cur[axis] = bounds[axis].0;
            }
        }
    }

    pub fn site_count(&self) -> Result<usize> {
        Ok(self.enumerate_sites()?.len())
    }

    /// The domain `βΩ`: every defining length multiplied by `beta`.
    pub fn scale(&self, beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::invalid("beta", format!("must be > 0, got {beta}")));
        }
        let shape = match &self.shape {
            Shape::Ball { radius } => Shape::Ball {
                radius: radius * beta,
            },
            Shape::Annulus { r_inner, r_outer } => Shape::Annulus {
                r_inner: r_inner * beta,
                r_outer: r_outer * beta,
            },
            Shape::OpenAnnulus { r_inner, r_outer } => Shape::OpenAnnulus {
                r_inner: r_inner * beta,
                r_outer: r_outer * beta,
            },
            Shape::Box { half_widths } => Shape::Box {
                half_widths: half_widths.iter().map(|h| h * beta).collect(),
            },
            Shape::CubeCell { corner, side } => Shape::CubeCell {
                corner: corner.iter().map(|c| c * beta).collect(),
                side: side * beta,
            },
            Shape::Exterior { radius } => Shape::Exterior {
                radius: radius * beta,
            },
        };
        LatticeDomain::new(shape, self.dimension)
    }

    /// Number of nearest-neighbour links with exactly one endpoint in the domain.
    pub fn boundary_links(&self) -> Result<usize> {
        let sites = self.enumerate_sites()?;
        let mut count = 0;
        let mut nb = vec![0i64; self.dimension];
        for n in &sites {
            for axis in 0..self.dimension {
                for step in [-1, 1] {
                    nb.copy_from_slice(n);
                    nb[axis] += step;
                    if !self.contains_site(&nb) {
                        count += 1;
                    }
                }
            }
        }
        Ok(count)
    }
}

/// Which of the three coupling-dependent regions a point belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// `|x| < ε₁ α^{1/p}`
    Inner,
    /// `ε₁ α^{1/p} <= |x| <= ε₂ α^{1/p}`
    Shell,
    /// `|x| > ε₂ α^{1/p}`
    Outer,
}

/// Split of ℝ^d into an open inner ball, a closed shell and an open exterior,
/// with radii `ε₁α^{1/p}` and `ε₂α^{1/p}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionSplit {
    pub eps1: f64,
    pub eps2: f64,
    pub alpha: f64,
    pub p: f64,
}

impl RegionSplit {
    pub fn new(eps1: f64, eps2: f64, alpha: f64, p: f64) -> Result<Self> {
        if !(eps1.is_finite() && eps1 > 0.0) {
            return Err(Error::invalid("eps1", "must be > 0"));
        }
        if !(eps2.is_finite() && eps2 > eps1) {
            return Err(Error::invalid("eps2", "must be > eps1"));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::invalid("alpha", "must be > 0"));
        }
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::invalid("p", "must be > 0"));
        }
        Ok(RegionSplit {
            eps1,
            eps2,
            alpha,
            p,
        })
    }

    /// Length scale `α^{1/p}`.
    pub fn scale(&self) -> f64 {
        self.alpha.powf(1.0 / self.p)
    }

    pub fn inner_radius(&self) -> f64 {
        self.eps1 * self.scale()
    }

    pub fn outer_radius(&self) -> f64 {
        self.eps2 * self.scale()
    }

    pub fn region_of(&self, x: &[f64]) -> Region {
        let r = norm(x);
        if r < self.inner_radius() {
            Region::Inner
        } else if r <= self.outer_radius() {
            Region::Shell
        } else {
            Region::Outer
        }
    }

    pub fn region_of_site(&self, n: &[i64]) -> Region {
        let x: Vec<f64> = n.iter().map(|&v| v as f64).collect();
        self.region_of(&x)
    }

    pub fn inner(&self, d: usize) -> Result<LatticeDomain> {
        LatticeDomain::ball(self.inner_radius(), d)
    }

    pub fn shell(&self, d: usize) -> Result<LatticeDomain> {
        LatticeDomain::annulus(self.inner_radius(), self.outer_radius(), d)
    }

    pub fn outer(&self, d: usize) -> Result<LatticeDomain> {
        LatticeDomain::new(
            Shape::Exterior {
                radius: self.outer_radius(),
            },
            d,
        )
    }

    /// The exterior region cut off at `|x| < truncation_radius`.
    pub fn outer_truncated(&self, d: usize, truncation_radius: f64) -> Result<LatticeDomain> {
        if truncation_radius <= self.outer_radius() {
            return Err(Error::invalid(
                "truncation_radius",
                "must exceed the outer splitting radius",
            ));
        }
        LatticeDomain::open_annulus(self.outer_radius(), truncation_radius, d)
    }

    /// Number of links joining two different regions, i.e. links that cross one
    /// of the two splitting spheres.
    pub fn splitting_links(&self, d: usize) -> Result<usize> {
        let probe = LatticeDomain::ball(self.outer_radius() + 1.5, d)?;
        let mut count = 0;
        for n in probe.enumerate_sites()? {
            let here = self.region_of_site(&n);
            let mut m = n.clone();
            for axis in 0..d {
                m[axis] += 1;
                if self.region_of_site(&m) != here {
                    count += 1;
                }
                m[axis] -= 1;
            }
        }
        Ok(count)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_sites_d1() {
        let sites = LatticeDomain::ball(1.5, 1)
            .unwrap()
            .enumerate_sites()
            .unwrap();
        assert_eq!(sites, vec![vec![-1], vec![0], vec![1]]);
    }

    #[test]
    fn small_ball_d2_is_origin() {
        let sites = LatticeDomain::ball(0.5, 2)
            .unwrap()
            .enumerate_sites()
            .unwrap();
        assert_eq!(sites, vec![vec![0, 0]]);
    }

    #[test]
    fn closed_annulus_d1() {
        let sites = LatticeDomain::annulus(1.0, 2.0, 1)
            .unwrap()
            .enumerate_sites()
            .unwrap();
        // brute force over a wide range
        let oracle: Vec<Site> = (-10i64..=10)
            .filter(|n| (1.0..=2.0).contains(&(n.abs() as f64)))
            .map(|n| vec![n])
            .collect();
        assert_eq!(sites, oracle);
        assert_eq!(sites, vec![vec![-2], vec![-1], vec![1], vec![2]]);
    }

    #[test]
    fn open_annulus_excludes_spheres() {
        let sites = LatticeDomain::open_annulus(1.0, 2.0, 1)
            .unwrap()
            .enumerate_sites()
            .unwrap();
        assert!(sites.is_empty());
    }

    #[test]
    fn cube_cell_is_half_open() {
        let cell = LatticeDomain::new(
            Shape::CubeCell {
                corner: vec![0.0, -1.0],
                side: 2.0,
            },
            2,
        )
        .unwrap();
        let sites = cell.enumerate_sites().unwrap();
        assert_eq!(
            sites,
            vec![vec![0, -1], vec![0, 0], vec![1, -1], vec![1, 0]]
        );
    }

    #[test]
    fn exterior_is_unbounded() {
        let ext = LatticeDomain::new(Shape::Exterior { radius: 2.0 }, 2).unwrap();
        assert!(matches!(ext.enumerate_sites(), Err(Error::UnboundedDomain)));
        assert!(matches!(ext.boundary_links(), Err(Error::UnboundedDomain)));
        assert!(ext.contains_site(&[3, 0]));
    }

    #[test]
    fn scaling() {
        let b = LatticeDomain::ball(1.0, 1).unwrap().scale(3.0).unwrap();
        assert_eq!(b, LatticeDomain::ball(3.0, 1).unwrap());
        assert_eq!(b.enumerate_sites().unwrap().len(), 5);
        let bx = LatticeDomain::cube(1.0, 2).unwrap().scale(2.0).unwrap();
        assert_eq!(bx, LatticeDomain::cube(2.0, 2).unwrap());
        assert!(LatticeDomain::ball(1.0, 1).unwrap().scale(0.0).is_err());
        assert!(LatticeDomain::ball(1.0, 1).unwrap().scale(-1.0).is_err());
    }

    #[test]
    fn scaled_site_density_approaches_unit_ball_volume() {
        let base = LatticeDomain::ball(1.0, 1).unwrap();
        for beta in [10.0, 100.0, 1000.0] {
            let count = base.scale(beta).unwrap().site_count().unwrap() as f64;
            // strict |n| < β over ℤ has 2β − 1 points for integer β
            assert_eq!(count, 2.0 * beta - 1.0);
            assert!((count / beta - 2.0).abs() <= 1.0 / beta + 1e-12);
        }
    }

    #[test]
    fn boundary_links_d1() {
        assert_eq!(
            LatticeDomain::ball(1.5, 1)
                .unwrap()
                .boundary_links()
                .unwrap(),
            2
        );
        for r in [0.3, 2.7, 10.1, 55.9] {
            assert_eq!(
                LatticeDomain::ball(r, 1).unwrap().boundary_links().unwrap(),
                2
            );
        }
    }

    fn brute_force_links(dom: &LatticeDomain, reach: i64) -> usize {
        let mut count = 0;
        for x in -reach..=reach {
            for y in -reach..=reach {
                let inside = dom.contains_site(&[x, y]);
                if inside != dom.contains_site(&[x + 1, y]) {
                    count += 1;
                }
                if inside != dom.contains_site(&[x, y + 1]) {
                    count += 1;
                }
            }
        }
        count
    }

    #[test]
    fn boundary_links_ball_d2_matches_pair_scan() {
        let dom = LatticeDomain::ball(10.5, 2).unwrap();
        let links = dom.boundary_links().unwrap();
        assert_eq!(links, brute_force_links(&dom, 13));
        assert_eq!(links, 84);
    }

    #[test]
    fn unit_ball_volumes() {
        assert_eq!(unit_ball_volume(1), 2.0);
        assert_eq!(unit_ball_volume(2), PI);
        assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-15);
        assert!((unit_ball_volume(5) - 8.0 * PI * PI / 15.0).abs() < 1e-12);
    }

    #[test]
    fn region_boundaries() {
        let split = RegionSplit::new(1.0, 2.0, 1.0, 1.0).unwrap();
        assert_eq!(split.region_of(&[0.999]), Region::Inner);
        assert_eq!(split.region_of(&[1.0]), Region::Shell);
        assert_eq!(split.region_of(&[-2.0]), Region::Shell);
        assert_eq!(split.region_of(&[2.0001]), Region::Outer);
        assert!(RegionSplit::new(2.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn splitting_links_d1_is_four() {
        let split = RegionSplit::new(0.3, 1.4, 1.0e4, 2.0).unwrap();
        assert_eq!(split.splitting_links(1).unwrap(), 4);
    }

    #[test]
    fn json_roundtrip() {
        let dom = LatticeDomain::annulus(1.0, 2.5, 2).unwrap();
        let text = serde_json::to_string(&dom).unwrap();
        assert_eq!(
            text,
            r#"{"shape":"annulus","params":{"r_inner":1.0,"r_outer":2.5},"dimension":2}"#
        );
        let back: LatticeDomain = serde_json::from_str(&text).unwrap();
        assert_eq!(back, dom);
        let bad = r#"{"shape":"ball","params":{"radius":-1.0},"dimension":2}"#;
        assert!(serde_json::from_str::<LatticeDomain>(bad).is_err());
    }
}
