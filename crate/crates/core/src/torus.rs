//! Points, lifts, boxes and arcs on the flat torus with the max-coordinate metric.

use crate::error::{Error, Result};
use crate::real::{frac, Real};
use serde::{Deserialize, Serialize};

/// A point of `T^n`, coordinates in `[0, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<T>", into = "Vec<T>", bound = "T: Real")]
pub struct TorusPoint<T> {
    coords: Vec<T>,
}

impl<T: Real> TorusPoint<T> {
    pub fn new(coords: Vec<T>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidPoint("zero-dimensional point".into()));
        }
        if let Some(c) = coords.iter().find(|c| !(**c >= T::zero() && **c < T::one())) {
            return Err(Error::InvalidPoint(format!("coordinate {c} outside [0,1)")));
        }
        Ok(TorusPoint { coords })
    }

    /// Projects arbitrary real coordinates to the torus.
    pub fn wrap(coords: &[T]) -> Self {
        TorusPoint { coords: coords.iter().map(|&c| frac(c)).collect() }
    }

    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// The lift in the fundamental domain `[0,1)^n`.
    pub fn lift(&self) -> LiftPoint<T> {
        LiftPoint(self.coords.clone())
    }
}

impl<T: Real> TryFrom<Vec<T>> for TorusPoint<T> {
    type Error = Error;
    fn try_from(v: Vec<T>) -> Result<Self> {
        TorusPoint::new(v)
    }
}

impl<T> From<TorusPoint<T>> for Vec<T> {
    fn from(p: TorusPoint<T>) -> Vec<T> {
        p.coords
    }
}

/// A point of the universal cover `R^n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LiftPoint<T>(pub Vec<T>);

impl<T: Real> LiftPoint<T> {
    pub fn project(&self) -> TorusPoint<T> {
        TorusPoint::wrap(&self.0)
    }

    pub fn translate(&self, k: &[i64]) -> LiftPoint<T> {
        LiftPoint(self.0.iter().zip(k).map(|(&x, &k)| x + T::lit(k as f64)).collect())
    }
}

/// Distance between circle coordinates.
#[inline]
pub fn circle_dist<T: Real>(a: T, b: T) -> T {
    // |a - b| first so the result is exactly symmetric
    let d = frac((a - b).abs());
    d.min(T::one() - d)
}

/// Max-metric distance on `T^n`: the minimum over integer translates of the coordinate max.
pub fn torus_dist<T: Real>(x: &TorusPoint<T>, y: &TorusPoint<T>) -> Result<T> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch { expected: x.dim(), got: y.dim() });
    }
    Ok(torus_dist_raw(x.coords(), y.coords()))
}

/// Same as [`torus_dist`] on raw coordinates (any real values, same length).
#[inline]
pub fn torus_dist_raw<T: Real>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).fold(T::zero(), |m, (&a, &b)| m.max(circle_dist(a, b)))
}

/// Max-metric distance in `R^n`, no wraparound.
#[inline]
pub fn lift_dist<T: Real>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
}

/// Axis-aligned box, either a subset of the fundamental domain or of `R^n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BoxRegion<T> {
    lo: Vec<T>,
    hi: Vec<T>,
    #[serde(default)]
    lifted: bool,
}

impl<T: Real> BoxRegion<T> {
    pub fn new(lo: Vec<T>, hi: Vec<T>, lifted: bool) -> Result<Self> {
        if lo.is_empty() {
            return Err(Error::EmptyRegion);
        }
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch { expected: lo.len(), got: hi.len() });
        }
        for i in 0..lo.len() {
            if !(lo[i] <= hi[i]) {
                return Err(Error::InvalidRegion(format!("lo[{i}] > hi[{i}]")));
            }
            if !lifted && hi[i] - lo[i] > T::one() {
                return Err(Error::InvalidRegion(format!("side {i} longer than 1 in a fundamental-domain box")));
            }
        }
        Ok(BoxRegion { lo, hi, lifted })
    }

    /// Max-metric ball (an axis-aligned cube) of radius `r` around `c`.
    pub fn ball(c: &[T], r: T) -> Result<Self> {
        Self::new(c.iter().map(|&x| x - r).collect(), c.iter().map(|&x| x + r).collect(), false)
    }

    pub fn lo(&self) -> &[T] {
        &self.lo
    }

    pub fn hi(&self) -> &[T] {
        &self.hi
    }

    pub fn is_lifted(&self) -> bool {
        self.lifted
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn center(&self) -> Vec<T> {
        self.lo.iter().zip(&self.hi).map(|(&a, &b)| (a + b) / T::lit(2.0)).collect()
    }

    pub fn translate(&self, k: &[i64]) -> BoxRegion<T> {
        let sh = |v: &Vec<T>| v.iter().zip(k).map(|(&x, &k)| x + T::lit(k as f64)).collect();
        BoxRegion { lo: sh(&self.lo), hi: sh(&self.hi), lifted: self.lifted }
    }

    /// Side lengths.
    pub fn sides(&self) -> Vec<T> {
        self.lo.iter().zip(&self.hi).map(|(&a, &b)| b - a).collect()
    }

    /// Max-metric gap between two boxes in `R^n`.
    pub fn gap(&self, other: &BoxRegion<T>) -> T {
        let mut m = T::zero();
        for i in 0..self.dim() {
            let g = (other.lo[i] - self.hi[i]).max(self.lo[i] - other.hi[i]).max(T::zero());
            m = m.max(g);
        }
        m
    }
}

/// Piecewise-linear arc through lifted vertices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<T>>", into = "Vec<Vec<T>>", bound = "T: Real")]
pub struct ArcPolyline<T> {
    vertices: Vec<Vec<T>>,
}

/// Default maximum segment length when densifying arcs.
pub const DEFAULT_MAX_SEGMENT: f64 = 1e-3;

impl<T: Real> ArcPolyline<T> {
    pub fn new(vertices: Vec<Vec<T>>) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(Error::InvalidRegion("an arc needs at least two vertices".into()));
        }
        let n = vertices[0].len();
        if n == 0 {
            return Err(Error::EmptyRegion);
        }
        for (i, v) in vertices.iter().enumerate() {
            if v.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: v.len() });
            }
            if i > 0 && vertices[i - 1] == *v {
                return Err(Error::InvalidRegion(format!("vertices {} and {i} coincide", i - 1)));
            }
        }
        Ok(ArcPolyline { vertices })
    }

    pub fn segment(a: Vec<T>, b: Vec<T>) -> Result<Self> {
        Self::new(vec![a, b])
    }

    pub fn vertices(&self) -> &[Vec<T>] {
        &self.vertices
    }

    pub fn dim(&self) -> usize {
        self.vertices[0].len()
    }

    /// Euclidean arclength.
    pub fn length(&self) -> T {
        self.vertices.windows(2).fold(T::zero(), |s, w| s + euclid(&w[0], &w[1]))
    }

    /// Subdivides segments so that none exceeds `max_seg` in the max-metric.
    pub fn densify(&self, max_seg: T) -> ArcPolyline<T> {
        let mut out = vec![self.vertices[0].clone()];
        for w in self.vertices.windows(2) {
            let d = lift_dist(&w[0], &w[1]);
            let k = (d / max_seg).ceil().to_usize().unwrap_or(1).max(1);
            for s in 1..=k {
                let t = T::lit(s as f64) / T::lit(k as f64);
                out.push(w[0].iter().zip(&w[1]).map(|(&a, &b)| a + (b - a) * t).collect());
            }
        }
        ArcPolyline { vertices: out }
    }

    /// Max-metric distance from `p` (lifted) to the polyline.
    pub fn dist_to(&self, p: &[T]) -> T {
        let mut best = T::infinity();
        for w in self.vertices.windows(2) {
            best = best.min(point_segment_dist(p, &w[0], &w[1]));
        }
        best
    }
}

impl<T: Real> TryFrom<Vec<Vec<T>>> for ArcPolyline<T> {
    type Error = Error;
    fn try_from(v: Vec<Vec<T>>) -> Result<Self> {
        ArcPolyline::new(v)
    }
}

impl<T> From<ArcPolyline<T>> for Vec<Vec<T>> {
    fn from(a: ArcPolyline<T>) -> Self {
        a.vertices
    }
}

pub(crate) fn euclid<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + (x - y) * (x - y)).sqrt()
}

/// Max-metric distance from a point to a segment, minimised over a fine parameter search.
fn point_segment_dist<T: Real>(p: &[T], a: &[T], b: &[T]) -> T {
    // the max-metric distance along the segment is convex in t; ternary search
    let f = |t: T| a.iter().zip(b).zip(p).fold(T::zero(), |m, ((&x, &y), &q)| m.max((x + (y - x) * t - q).abs()));
    let (mut lo, mut hi) = (T::zero(), T::one());
    for _ in 0..80 {
        let m1 = lo + (hi - lo) / T::lit(3.0);
        let m2 = hi - (hi - lo) / T::lit(3.0);
        if f(m1) <= f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    f((lo + hi) / T::lit(2.0)).min(f(T::zero())).min(f(T::one()))
}

/// Anything with a diameter.
#[derive(Clone, Copy, Debug)]
pub enum Shape<'a, T> {
    Box(&'a BoxRegion<T>),
    Arc(&'a ArcPolyline<T>),
}

/// Circular diameter of a connected coordinate range `[a, b]` of the lift.
#[inline]
fn circular_extent<T: Real>(extent: T) -> T {
    if extent >= T::one() {
        T::lit(0.5)
    } else {
        extent.min(T::lit(0.5))
    }
}

/// Diameter under the max-metric. With `lifted`, distances are taken in `R^n`;
/// otherwise on the torus, which caps each coordinate at `1/2`.
pub fn diameter<T: Real>(shape: Shape<'_, T>, lifted: bool) -> Result<T> {
    // the max over pairs of a max over coordinates equals the max over coordinates of
    // the per-coordinate spread; connected sets project to intervals
    let extents: Vec<T> = match shape {
        Shape::Box(b) => b.sides(),
        Shape::Arc(a) => {
            let n = a.dim();
            (0..n)
                .map(|i| {
                    let (mn, mx) = a
                        .vertices()
                        .iter()
                        .fold((T::infinity(), T::neg_infinity()), |(mn, mx), v| (mn.min(v[i]), mx.max(v[i])));
                    mx - mn
                })
                .collect()
        }
    };
    if extents.is_empty() {
        return Err(Error::EmptyRegion);
    }
    Ok(extents
        .into_iter()
        .map(|e| if lifted { e } else { circular_extent(e) })
        .fold(T::zero(), T::max))
}

/// Lifted max-metric diameter of a union of boxes.
pub fn union_diameter<T: Real>(boxes: &[BoxRegion<T>]) -> Result<T> {
    let first = boxes.first().ok_or(Error::EmptyRegion)?;
    let n = first.dim();
    let mut d = T::zero();
    for i in 0..n {
        let mn = boxes.iter().map(|b| b.lo()[i]).fold(T::infinity(), T::min);
        let mx = boxes.iter().map(|b| b.hi()[i]).fold(T::neg_infinity(), T::max);
        d = d.max(mx - mn);
    }
    Ok(d)
}

/// Internal diameter of the complement of `U` (a union of boxes, taken as the lift):
/// `min_{k != 0} dist(U, U + k)` with `k` restricted to `{-1,0,1}^n`.
pub fn internal_diameter<T: Real>(boxes: &[BoxRegion<T>]) -> Result<T> {
    let first = boxes.first().ok_or(Error::EmptyRegion)?;
    let n = first.dim();
    if boxes.iter().any(|b| b.dim() != n) {
        return Err(Error::DimensionMismatch { expected: n, got: boxes.iter().map(|b| b.dim()).find(|&d| d != n).unwrap() });
    }
    let diam = union_diameter(boxes)?;
    if diam >= T::one() {
        return Err(Error::DiameterTooLarge { diam: diam.to_f64_lossy() });
    }
    let mut best = T::infinity();
    for k in neighbor_offsets(n) {
        for a in boxes {
            for b in boxes {
                best = best.min(a.gap(&b.translate(&k)));
            }
        }
    }
    Ok(best)
}

/// All `k` in `{-1,0,1}^n` except the origin.
pub fn neighbor_offsets(n: usize) -> Vec<Vec<i64>> {
    let total = 3usize.pow(n as u32);
    (0..total)
        .map(|mut c| {
            (0..n)
                .map(|_| {
                    let d = (c % 3) as i64 - 1;
                    c /= 3;
                    d
                })
                .collect::<Vec<i64>>()
        })
        .filter(|k| k.iter().any(|&v| v != 0))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: &[f64]) -> TorusPoint<f64> {
        TorusPoint::new(v.to_vec()).unwrap()
    }

    fn bx(lo: &[f64], hi: &[f64]) -> BoxRegion<f64> {
        BoxRegion::new(lo.to_vec(), hi.to_vec(), false).unwrap()
    }

    // brute force over k in {-1,0,1}^n
    fn dist_oracle(x: &[f64], y: &[f64]) -> f64 {
        neighbor_offsets(x.len())
            .into_iter()
            .chain(std::iter::once(vec![0; x.len()]))
            .map(|k| (0..x.len()).map(|i| (x[i] - y[i] - k[i] as f64).abs()).fold(0.0, f64::max))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn distance_examples() {
        assert_eq!(torus_dist(&p(&[0.0, 0.0]), &p(&[0.0, 0.0])).unwrap(), 0.0);
        assert!((torus_dist(&p(&[0.1]), &p(&[0.9])).unwrap() - 0.2).abs() < 1e-15);
        let (a, b) = ([0.2, 0.7], [0.9, 0.1]);
        let oracle = dist_oracle(&a, &b);
        assert!((oracle - 0.4).abs() < 1e-12);
        assert!((torus_dist(&p(&a), &p(&b)).unwrap() - oracle).abs() < 1e-15);
        assert!(matches!(torus_dist(&p(&[0.1]), &p(&[0.1, 0.2])), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn diameter_examples() {
        assert!((diameter(Shape::Box(&bx(&[0.2, 0.2], &[0.5, 0.5])), false).unwrap() - 0.3).abs() < 1e-15);
        let unit = BoxRegion::new(vec![0.0; 3], vec![1.0; 3], true).unwrap();
        assert_eq!(diameter(Shape::Box(&unit), true).unwrap(), 1.0);
        let arc = ArcPolyline::new(vec![vec![0.0, 0.0], vec![2.0, 1.0], vec![2.0, 3.0]]).unwrap();
        // vertex-pair brute force
        let mut oracle: f64 = 0.0;
        for a in arc.vertices() {
            for b in arc.vertices() {
                oracle = oracle.max(lift_dist(a, b));
            }
        }
        assert_eq!(oracle, 3.0);
        assert_eq!(diameter(Shape::Arc(&arc), true).unwrap(), oracle);
        assert_eq!(diameter(Shape::Arc(&arc), false).unwrap(), 0.5);
    }

    #[test]
    fn internal_diameter_examples() {
        let id = |lo: &[f64], hi: &[f64]| internal_diameter(&[bx(lo, hi)]).unwrap();
        assert!((id(&[0.4, 0.4], &[0.6, 0.6]) - 0.8).abs() < 1e-12);
        assert!((id(&[0.0, 0.0], &[0.2, 0.2]) - 0.8).abs() < 1e-12);
        assert!((id(&[0.1, 0.4], &[0.3, 0.9]) - 0.5).abs() < 1e-12);
        let big = bx(&[0.0, 0.0], &[1.0, 0.5]);
        assert!(matches!(internal_diameter(&[big]), Err(Error::DiameterTooLarge { .. })));
    }

    #[test]
    fn arc_densify_keeps_endpoints() {
        let arc = ArcPolyline::new(vec![vec![0.0, 0.0], vec![0.01, 0.0]]).unwrap();
        let d = arc.densify(1e-3);
        assert_eq!(d.vertices().len(), 11);
        assert_eq!(d.vertices().last().unwrap(), &vec![0.01, 0.0]);
        assert!(d.dist_to(&[0.005, 0.002]) - 0.002 < 1e-9);
    }

    #[test]
    fn serde_rejects_out_of_range_points() {
        assert!(serde_json::from_str::<TorusPoint<f64>>("[0.5, 1.0]").is_err());
        let q: TorusPoint<f64> = serde_json::from_str("[0.5, 0.25]").unwrap();
        assert_eq!(q.coords(), &[0.5, 0.25]);
    }
}
