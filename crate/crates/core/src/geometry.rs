//! Bounded domains, distance functions and blow-up boundary sets.
//!
//! Only intervals, axis-aligned boxes and balls are supported. For these the
//! distance to the boundary, the signed distance and the nearest boundary
//! point all have closed forms, so nothing here is approximate apart from the
//! relative tolerance used to classify points on a sphere.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for classifying a point as lying on a sphere.
pub const BALL_BOUNDARY_RTOL: f64 = 1e-12;

/// Absolute tolerance (scaled by `1 + diameter`) used when testing whether a
/// boundary point belongs to a blow-up region.
pub const BLOWUP_MEMBERSHIP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Interval { a: f64, b: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

/// An open bounded region of `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Shape", into = "Shape")]
pub struct Domain {
    shape: Shape,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Interior,
    Boundary,
    Exterior,
}

impl TryFrom<Shape> for Domain {
    type Error = Error;

    fn try_from(shape: Shape) -> Result<Self> {
        Domain::new(shape)
    }
}

impl From<Domain> for Shape {
    fn from(d: Domain) -> Shape {
        d.shape
    }
}

impl Domain {
    pub fn new(shape: Shape) -> Result<Self> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match &shape {
            Shape::Interval { a, b } => {
                if !(a.is_finite() && b.is_finite() && a < b) {
                    return Err(Error::InvalidDomain(format!("interval needs a < b, got ({a}, {b})")));
                }
            }
            Shape::Box { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() {
                    return Err(Error::InvalidDomain(
                        "box corners must be non-empty and of equal length".into(),
                    ));
                }
                if !finite(lo) || !finite(hi) || lo.iter().zip(hi).any(|(l, h)| l >= h) {
                    return Err(Error::InvalidDomain(format!("box needs lo < hi per axis, got {lo:?} {hi:?}")));
                }
            }
            Shape::Ball { center, radius } => {
                if center.is_empty() || !finite(center) {
                    return Err(Error::InvalidDomain("ball center must be a finite point".into()));
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::InvalidDomain(format!("ball radius must be positive, got {radius}")));
                }
            }
        }
        Ok(Domain { shape })
    }

    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Self::new(Shape::Interval { a, b })
    }

    pub fn cuboid(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        Self::new(Shape::Box { lo, hi })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        Self::new(Shape::Ball { center, radius })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dimension(&self) -> usize {
        match &self.shape {
            Shape::Interval { .. } => 1,
            Shape::Box { lo, .. } => lo.len(),
            Shape::Ball { center, .. } => center.len(),
        }
    }

    pub fn diameter(&self) -> f64 {
        match &self.shape {
            Shape::Interval { a, b } => b - a,
            Shape::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(l, h)| (h - l) * (h - l))
                .sum::<f64>()
                .sqrt(),
            Shape::Ball { radius, .. } => 2.0 * radius,
        }
    }

    /// Axis-aligned bounding box of the closure.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.shape {
            Shape::Interval { a, b } => (vec![*a], vec![*b]),
            Shape::Box { lo, hi } => (lo.clone(), hi.clone()),
            Shape::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
        }
    }

    /// Largest value of the distance to the boundary over the domain.
    pub fn inradius(&self) -> f64 {
        match &self.shape {
            Shape::Interval { a, b } => 0.5 * (b - a),
            Shape::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(l, h)| 0.5 * (h - l))
                .fold(f64::INFINITY, f64::min),
            Shape::Ball { radius, .. } => *radius,
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        let d = self.dimension();
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64]) -> Result<Location> {
        self.check_dim(x)?;
        Ok(self.locate(x))
    }

    fn locate(&self, x: &[f64]) -> Location {
        match &self.shape {
            Shape::Interval { a, b } => classify_box(&[*a], &[*b], x),
            Shape::Box { lo, hi } => classify_box(lo, hi, x),
            Shape::Ball { center, radius } => {
                let r = norm_diff(x, center);
                if (r - radius).abs() <= BALL_BOUNDARY_RTOL * radius {
                    Location::Boundary
                } else if r < *radius {
                    Location::Interior
                } else {
                    Location::Exterior
                }
            }
        }
    }

    /// `rho(x)`: distance to the boundary for points of the closure, zero outside.
    pub fn distance_to_boundary(&self, x: &[f64]) -> Result<f64> {
        Ok(self.signed_distance(x)?.max(0.0))
    }

    /// Positive inside, negative outside, zero on the boundary.
    pub fn signed_distance(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.signed_distance_unchecked(x))
    }

    /// Same as [`Domain::signed_distance`] without the dimension check; used in
    /// the simulation hot loop where the state length is fixed by construction.
    pub(crate) fn signed_distance_unchecked(&self, x: &[f64]) -> f64 {
        match &self.shape {
            Shape::Interval { a, b } => box_signed_distance(&[*a], &[*b], x),
            Shape::Box { lo, hi } => box_signed_distance(lo, hi, x),
            Shape::Ball { center, radius } => {
                let r = norm_diff(x, center);
                if (r - radius).abs() <= BALL_BOUNDARY_RTOL * radius {
                    0.0
                } else {
                    radius - r
                }
            }
        }
    }

    /// Nearest boundary point. Box ties go to the lowest axis index, lower face
    /// first. The center of a ball has no unique projection.
    pub fn project_to_boundary(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        match &self.shape {
            Shape::Interval { a, b } => Ok(vec![project_box(&[*a], &[*b], x)[0]]),
            Shape::Box { lo, hi } => Ok(project_box(lo, hi, x)),
            Shape::Ball { center, radius } => {
                let r = norm_diff(x, center);
                if r == 0.0 {
                    return Err(Error::NoUniqueProjection("ball center".into()));
                }
                Ok(x.iter()
                    .zip(center)
                    .map(|(xi, ci)| ci + (xi - ci) * radius / r)
                    .collect())
            }
        }
    }
}

fn norm_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

fn classify_box(lo: &[f64], hi: &[f64], x: &[f64]) -> Location {
    let mut on_face = false;
    for ((&l, &h), &xi) in lo.iter().zip(hi).zip(x) {
        if xi < l || xi > h {
            return Location::Exterior;
        }
        if xi == l || xi == h {
            on_face = true;
        }
    }
    if on_face {
        Location::Boundary
    } else {
        Location::Interior
    }
}

fn box_signed_distance(lo: &[f64], hi: &[f64], x: &[f64]) -> f64 {
    let mut inside = f64::INFINITY;
    let mut outside_sq = 0.0;
    let mut is_outside = false;
    for ((&l, &h), &xi) in lo.iter().zip(hi).zip(x) {
        if xi < l {
            is_outside = true;
            outside_sq += (l - xi) * (l - xi);
        } else if xi > h {
            is_outside = true;
            outside_sq += (xi - h) * (xi - h);
        } else {
            inside = inside.min(xi - l).min(h - xi);
        }
    }
    if is_outside {
        -outside_sq.sqrt()
    } else {
        inside
    }
}

fn project_box(lo: &[f64], hi: &[f64], x: &[f64]) -> Vec<f64> {
    let outside = x.iter().zip(lo.iter().zip(hi)).any(|(&xi, (&l, &h))| xi < l || xi > h);
    if outside {
        return x
            .iter()
            .zip(lo.iter().zip(hi))
            .map(|(&xi, (&l, &h))| xi.clamp(l, h))
            .collect();
    }
    let mut best = (f64::INFINITY, 0usize, 0.0);
    for (axis, ((&l, &h), &xi)) in lo.iter().zip(hi).zip(x).enumerate() {
        let (dl, dh) = (xi - l, h - xi);
        if dl < best.0 {
            best = (dl, axis, l);
        }
        if dh < best.0 {
            best = (dh, axis, h);
        }
    }
    let mut p = x.to_vec();
    p[best.1] = best.2;
    p
}

/// One closed piece of the boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryRegion {
    /// The whole boundary.
    All,
    /// A single boundary point (interval endpoints, box corners).
    Point { at: Vec<f64> },
    /// Closed axis-aligned patch `lo <= x <= hi`, degenerate along the face normal.
    Patch { lo: Vec<f64>, hi: Vec<f64> },
    /// Closed arc of a circle, angles in radians with `from <= to`.
    Arc {
        center: Vec<f64>,
        radius: f64,
        from: f64,
        to: f64,
    },
}

impl BoundaryRegion {
    /// Euclidean distance from `p` to the region.
    pub fn distance(&self, p: &[f64]) -> f64 {
        match self {
            BoundaryRegion::All => 0.0,
            BoundaryRegion::Point { at } => norm_diff(p, at),
            BoundaryRegion::Patch { lo, hi } => p
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(&x, (&l, &h))| {
                    let c = x.clamp(l, h);
                    (x - c) * (x - c)
                })
                .sum::<f64>()
                .sqrt(),
            BoundaryRegion::Arc { center, radius, from, to } => {
                let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
                let r = dx.hypot(dy);
                let angle = normalize_angle(dy.atan2(dx), *from);
                if r > 0.0 && angle <= *to {
                    return (r - radius).abs();
                }
                let end = |t: f64| {
                    let (ex, ey) = (center[0] + radius * t.cos(), center[1] + radius * t.sin());
                    (p[0] - ex).hypot(p[1] - ey)
                };
                end(*from).min(end(*to))
            }
        }
    }

    fn validate_on(&self, domain: &Domain) -> Result<()> {
        let d = domain.dimension();
        let bad = |msg: String| Err(Error::InvalidBoundary(msg));
        match self {
            BoundaryRegion::All => Ok(()),
            BoundaryRegion::Point { at } => {
                if at.len() != d {
                    return bad(format!("point {at:?} has wrong dimension"));
                }
                if domain.locate(at) != Location::Boundary {
                    return bad(format!("point {at:?} is not on the boundary"));
                }
                Ok(())
            }
            BoundaryRegion::Patch { lo, hi } => {
                if lo.len() != d || hi.len() != d || lo.iter().zip(hi).any(|(l, h)| l > h) {
                    return bad(format!("malformed patch {lo:?}..{hi:?}"));
                }
                let (dlo, dhi) = match domain.shape() {
                    Shape::Box { lo, hi } => (lo.clone(), hi.clone()),
                    Shape::Interval { a, b } => (vec![*a], vec![*b]),
                    Shape::Ball { .. } => return bad("patches are only defined on boxes".into()),
                };
                let inside = lo.iter().zip(hi).zip(dlo.iter().zip(&dhi)).all(|((l, h), (dl, dh))| l >= dl && h <= dh);
                let on_face = (0..d).any(|i| lo[i] == hi[i] && (lo[i] == dlo[i] || lo[i] == dhi[i]));
                if !(inside && on_face) {
                    return bad(format!("patch {lo:?}..{hi:?} does not lie on a face"));
                }
                Ok(())
            }
            BoundaryRegion::Arc { center, radius, from, to } => match domain.shape() {
                Shape::Ball { center: c, radius: r } if c.len() == 2 => {
                    if c != center || (radius - r).abs() > BALL_BOUNDARY_RTOL * r || from > to {
                        return bad("arc does not match the ball boundary".into());
                    }
                    Ok(())
                }
                _ => bad("arcs are only defined on two-dimensional balls".into()),
            },
        }
    }
}

fn normalize_angle(theta: f64, from: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let mut t = theta;
    while t < from {
        t += tau;
    }
    while t >= from + tau {
        t -= tau;
    }
    t
}

/// `F_inf`: the closed part of the boundary where the data is infinite.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BlowupSet {
    regions: Vec<BoundaryRegion>,
}

impl BlowupSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(regions: Vec<BoundaryRegion>) -> Self {
        BlowupSet { regions }
    }

    pub fn whole_boundary() -> Self {
        BlowupSet { regions: vec![BoundaryRegion::All] }
    }

    pub fn points(points: &[Vec<f64>]) -> Self {
        BlowupSet {
            regions: points.iter().map(|p| BoundaryRegion::Point { at: p.clone() }).collect(),
        }
    }

    pub fn regions(&self) -> &[BoundaryRegion] {
        &self.regions
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Distance to the set; `+inf` when the set is empty.
    pub fn distance(&self, p: &[f64]) -> f64 {
        self.regions
            .iter()
            .map(|r| r.distance(p))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Finite part of the boundary data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FiniteData {
    Constant { value: f64 },
    /// `g(x) = offset + gradient . x`
    Affine { offset: f64, gradient: Vec<f64> },
}

impl FiniteData {
    pub fn eval(&self, p: &[f64]) -> f64 {
        match self {
            FiniteData::Constant { value } => *value,
            FiniteData::Affine { offset, gradient } => {
                offset + gradient.iter().zip(p).map(|(g, x)| g * x).sum::<f64>()
            }
        }
    }

    /// Supremum and infimum over the boundary of `domain`.
    fn range_on(&self, domain: &Domain) -> (f64, f64) {
        match self {
            FiniteData::Constant { value } => (*value, *value),
            FiniteData::Affine { offset, gradient } => match domain.shape() {
                Shape::Ball { center, radius } => {
                    let mid = self.eval(center);
                    let g = gradient.iter().map(|v| v * v).sum::<f64>().sqrt();
                    (mid - g * radius, mid + g * radius)
                }
                _ => {
                    let (lo, hi) = domain.bounding_box();
                    let (mut min, mut max) = (*offset, *offset);
                    for ((g, l), h) in gradient.iter().zip(&lo).zip(&hi) {
                        min += (g * l).min(g * h);
                        max += (g * l).max(g * h);
                    }
                    (min, max)
                }
            },
        }
    }

    /// Same data plus a constant.
    pub fn shifted(&self, c: f64) -> FiniteData {
        match self {
            FiniteData::Constant { value } => FiniteData::Constant { value: value + c },
            FiniteData::Affine { offset, gradient } => FiniteData::Affine {
                offset: offset + c,
                gradient: gradient.clone(),
            },
        }
    }
}

/// Boundary data `g`: a nonnegative finite part plus the blow-up set where `g = +inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryData {
    pub finite: FiniteData,
    #[serde(default)]
    pub blowup: BlowupSet,
    #[serde(skip)]
    scale: f64,
    #[serde(skip)]
    sup_finite: f64,
    #[serde(skip)]
    inf_finite: f64,
}

impl BoundaryData {
    /// Validates `g >= 0`, dimensions, and that every blow-up region lies on the boundary.
    pub fn new(domain: &Domain, finite: FiniteData, blowup: BlowupSet) -> Result<Self> {
        if let FiniteData::Affine { gradient, .. } = &finite {
            if gradient.len() != domain.dimension() {
                return Err(Error::InvalidBoundary(format!(
                    "affine gradient has length {}, domain dimension is {}",
                    gradient.len(),
                    domain.dimension()
                )));
            }
        }
        let (inf, sup) = finite.range_on(domain);
        if !(inf.is_finite() && sup.is_finite()) {
            return Err(Error::InvalidBoundary("finite part must be finite".into()));
        }
        if inf < 0.0 {
            return Err(Error::InvalidBoundary(format!("g must be nonnegative, infimum is {inf}")));
        }
        for r in blowup.regions() {
            r.validate_on(domain)?;
        }
        Ok(BoundaryData {
            finite,
            blowup,
            scale: 1.0 + domain.diameter(),
            sup_finite: sup,
            inf_finite: inf,
        })
    }

    /// Re-attach the derived fields after deserialisation.
    pub fn bind(self, domain: &Domain) -> Result<Self> {
        BoundaryData::new(domain, self.finite, self.blowup)
    }

    pub fn constant(domain: &Domain, c: f64) -> Result<Self> {
        Self::new(domain, FiniteData::Constant { value: c }, BlowupSet::empty())
    }

    pub fn infinite(domain: &Domain) -> Result<Self> {
        Self::new(domain, FiniteData::Constant { value: 0.0 }, BlowupSet::whole_boundary())
    }

    pub fn sup_finite(&self) -> f64 {
        self.sup_finite
    }

    pub fn inf_finite(&self) -> f64 {
        self.inf_finite
    }

    pub fn has_blowup(&self) -> bool {
        !self.blowup.is_empty()
    }

    pub fn distance_to_blowup(&self, p: &[f64]) -> f64 {
        self.blowup.distance(p)
    }

    pub fn is_blowup_point(&self, p: &[f64]) -> bool {
        self.blowup.distance(p) <= BLOWUP_MEMBERSHIP_TOL * self.scale
    }

    /// `g(p)`, `+inf` on the blow-up set.
    pub fn value(&self, p: &[f64]) -> f64 {
        if self.is_blowup_point(p) {
            f64::INFINITY
        } else {
            self.finite.eval(p)
        }
    }

    /// `g(p) ∧ n`.
    pub fn truncated(&self, p: &[f64], n: f64) -> f64 {
        self.value(p).min(n)
    }

    /// Infimum of `g` over the boundary (blow-up points count as `+inf`).
    pub fn lower_bound(&self) -> f64 {
        if self.blowup.regions().iter().any(|r| matches!(r, BoundaryRegion::All)) {
            f64::INFINITY
        } else {
            self.inf_finite
        }
    }

    /// Same blow-up set, finite part shifted by `c`.
    pub fn shifted(&self, domain: &Domain, c: f64) -> Result<Self> {
        Self::new(domain, self.finite.shifted(c), self.blowup.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Domain {
        Domain::interval(0.0, 1.0).unwrap()
    }

    #[test]
    fn contains_examples() {
        assert_eq!(unit().contains(&[0.5]).unwrap(), Location::Interior);
        assert_eq!(unit().contains(&[0.0]).unwrap(), Location::Boundary);
        let b = Domain::ball(vec![0.0, 0.0], 1.0).unwrap();
        assert_eq!(b.contains(&[2.0, 0.0]).unwrap(), Location::Exterior);
        assert!(matches!(b.contains(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn distance_examples() {
        assert!((unit().distance_to_boundary(&[0.3]).unwrap() - 0.3).abs() < 1e-15);
        let b = Domain::ball(vec![0.0, 0.0], 1.0).unwrap();
        assert!((b.distance_to_boundary(&[0.6, 0.0]).unwrap() - 0.4).abs() < 1e-15);
        let bx = Domain::cuboid(vec![0.0, 0.0], vec![2.0, 1.0]).unwrap();
        assert!((bx.distance_to_boundary(&[1.0, 0.2]).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(unit().distance_to_boundary(&[1.5]).unwrap(), 0.0);
    }

    #[test]
    fn signed_distance_examples() {
        assert!((unit().signed_distance(&[1.2]).unwrap() + 0.2).abs() < 1e-15);
        assert!((unit().signed_distance(&[0.2]).unwrap() - 0.2).abs() < 1e-15);
        let b = Domain::ball(vec![0.0, 0.0], 1.0).unwrap();
        assert_eq!(b.signed_distance(&[1.0, 0.0]).unwrap(), 0.0);
        let bx = Domain::cuboid(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!((bx.signed_distance(&[2.0, 2.0]).unwrap() + 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn projection_examples() {
        assert_eq!(unit().project_to_boundary(&[0.3]).unwrap(), vec![0.0]);
        let b = Domain::ball(vec![0.0, 0.0], 1.0).unwrap();
        assert_eq!(b.project_to_boundary(&[0.5, 0.0]).unwrap(), vec![1.0, 0.0]);
        assert!(matches!(b.project_to_boundary(&[0.0, 0.0]), Err(Error::NoUniqueProjection(_))));
        let bx = Domain::cuboid(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(bx.project_to_boundary(&[0.5, 0.1]).unwrap(), vec![0.5, 0.0]);
        // tie between x=0 and y=0 faces goes to axis 0
        assert_eq!(bx.project_to_boundary(&[0.2, 0.2]).unwrap(), vec![0.0, 0.2]);
    }

    #[test]
    fn invalid_domains() {
        assert!(Domain::interval(1.0, 1.0).is_err());
        assert!(Domain::cuboid(vec![0.0, 1.0], vec![1.0, 0.5]).is_err());
        assert!(Domain::ball(vec![0.0], 0.0).is_err());
    }

    #[test]
    fn blowup_distance_examples() {
        let d = unit();
        let g = BoundaryData::new(&d, FiniteData::Constant { value: 1.0 }, BlowupSet::points(&[vec![0.0]])).unwrap();
        assert_eq!(g.distance_to_blowup(&[1.0]), 1.0);
        assert_eq!(g.distance_to_blowup(&[0.0]), 0.0);
        assert_eq!(g.value(&[0.0]), f64::INFINITY);
        assert_eq!(g.value(&[1.0]), 1.0);
        let none = BoundaryData::constant(&d, 1.0).unwrap();
        assert_eq!(none.distance_to_blowup(&[0.0]), f64::INFINITY);
    }

    #[test]
    fn boundary_data_validation() {
        let d = unit();
        assert!(BoundaryData::constant(&d, -1.0).is_err());
        let aff = FiniteData::Affine { offset: 0.0, gradient: vec![1.0] };
        let g = BoundaryData::new(&d, aff, BlowupSet::empty()).unwrap();
        assert_eq!(g.sup_finite(), 1.0);
        assert!(BoundaryData::new(&d, FiniteData::Constant { value: 1.0 }, BlowupSet::points(&[vec![0.5]])).is_err());
        let bx = Domain::cuboid(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let face = BoundaryRegion::Patch { lo: vec![0.0, 0.0], hi: vec![0.0, 1.0] };
        let g = BoundaryData::new(&bx, FiniteData::Constant { value: 1.0 }, BlowupSet::new(vec![face])).unwrap();
        assert_eq!(g.value(&[0.0, 0.3]), f64::INFINITY);
        assert!((g.distance_to_blowup(&[1.0, 0.5]) - 1.0).abs() < 1e-15);
        let off = BoundaryRegion::Patch { lo: vec![0.5, 0.0], hi: vec![0.5, 1.0] };
        assert!(BoundaryData::new(&bx, FiniteData::Constant { value: 1.0 }, BlowupSet::new(vec![off])).is_err());
    }

    #[test]
    fn arc_distance() {
        let arc = BoundaryRegion::Arc { center: vec![0.0, 0.0], radius: 1.0, from: 0.0, to: std::f64::consts::FRAC_PI_2 };
        assert!(arc.distance(&[0.0, 1.0]) < 1e-15);
        assert!((arc.distance(&[-1.0, 0.0]) - 2f64.sqrt()).abs() < 1e-12);
        assert!((arc.distance(&[0.5f64.sqrt(), 0.5f64.sqrt()])).abs() < 1e-12);
    }
}
