//! Torus endomorphisms in additive normal form `f(x) = A x + sum of terms(x) (mod 1)`.

use crate::error::{Error, Result};
use crate::linalg::{int_det, lattice_residues, Mat};
use crate::real::{frac, wrap_signed, Real};
use crate::torus::{torus_dist_raw, TorusPoint};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// A smooth periodic perturbation term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", bound = "T: Real")]
pub enum Term<T> {
    /// `amp * sin(2 pi <k, x> + phase)` added to coordinate `coord`.
    Trig { k: Vec<i64>, amp: T, phase: T, coord: usize },
    /// `disp * prod_i (1 - s_i^2)^3` with `s_i = (x_i - center_i) / radius`, supported in the max-ball.
    Bump { center: Vec<T>, radius: T, disp: Vec<T> },
    /// A trig term gated by a C2 plateau in the single coordinate `base`:
    /// one on `[lo, hi]`, smootherstep ramps of widths `ramp_lo`, `ramp_hi`, zero elsewhere.
    Fiber {
        base: usize,
        lo: T,
        hi: T,
        ramp_lo: T,
        ramp_hi: T,
        k: Vec<i64>,
        amp: T,
        phase: T,
        coord: usize,
    },
}

/// Largest `|d/ds (1-s^2)^3|`, attained at `s = 1/sqrt(5)`.
pub const BUMP_SLOPE_MAX: f64 = 1.717_300_206_719_839;
const BUMP_CURV_MAX: f64 = 6.0;
const SMOOTHERSTEP_SLOPE_MAX: f64 = 1.875;
const SMOOTHERSTEP_CURV_MAX: f64 = 5.773_502_691_896_258;

#[inline]
fn profile<T: Real>(s: T) -> T {
    let a = s.abs();
    if a >= T::one() {
        T::zero()
    } else {
        let q = T::one() - s * s;
        q * q * q
    }
}

#[inline]
fn profile_d<T: Real>(s: T) -> T {
    if s.abs() >= T::one() {
        T::zero()
    } else {
        let q = T::one() - s * s;
        T::lit(-6.0) * s * q * q
    }
}

#[inline]
fn smootherstep<T: Real>(t: T) -> T {
    let t = t.max(T::zero()).min(T::one());
    t * t * t * (t * (t * T::lit(6.0) - T::lit(15.0)) + T::lit(10.0))
}

#[inline]
fn smootherstep_d<T: Real>(t: T) -> T {
    if t <= T::zero() || t >= T::one() {
        return T::zero();
    }
    let u = t * (T::one() - t);
    T::lit(30.0) * u * u
}

/// Range of `sin` on `[a, b]`.
pub(crate) fn sin_range<T: Real>(a: T, b: T) -> (T, T) {
    let tau = T::tau();
    if b - a >= tau {
        return (-T::one(), T::one());
    }
    let (sa, sb) = (a.sin(), b.sin());
    let mut lo = sa.min(sb);
    let mut hi = sa.max(sb);
    let half_pi = T::FRAC_PI_2();
    let hits = |c: T| {
        let m = ((a - c) / tau).ceil();
        c + m * tau <= b
    };
    if hits(half_pi) {
        hi = T::one();
    }
    if hits(-half_pi) {
        lo = -T::one();
    }
    (lo, hi)
}

fn interval_mul<T: Real>(a: (T, T), b: (T, T)) -> (T, T) {
    let c = [a.0 * b.0, a.0 * b.1, a.1 * b.0, a.1 * b.1];
    (c.iter().copied().fold(T::infinity(), T::min), c.iter().copied().fold(T::neg_infinity(), T::max))
}

impl<T: Real> Term<T> {
    fn validate(&self, n: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidMap(m));
        match self {
            Term::Trig { k, amp, phase, coord } => {
                if k.len() != n {
                    return bad(format!("trig frequency has length {}, expected {n}", k.len()));
                }
                if *coord >= n {
                    return bad(format!("trig coordinate {coord} out of range"));
                }
                if !amp.is_finite() || !phase.is_finite() {
                    return bad("trig amplitude/phase not finite".into());
                }
            }
            Term::Bump { center, radius, disp } => {
                if center.len() != n || disp.len() != n {
                    return bad("bump center/displacement dimension mismatch".into());
                }
                if !(*radius > T::zero() && *radius < T::lit(0.5)) {
                    return bad(format!("bump radius {radius} not in (0, 1/2)"));
                }
                if center.iter().chain(disp).any(|v| !v.is_finite()) {
                    return bad("bump data not finite".into());
                }
            }
            Term::Fiber { base, lo, hi, ramp_lo, ramp_hi, k, amp, phase, coord } => {
                if *base >= n || *coord >= n || k.len() != n {
                    return bad("fiber term index/dimension mismatch".into());
                }
                if !(*lo < *hi) || !(*ramp_lo > T::zero()) || !(*ramp_hi > T::zero()) {
                    return bad("fiber plateau needs lo < hi and positive ramps".into());
                }
                let h = (*hi - *lo) / T::lit(2.0);
                if h + *ramp_lo > T::lit(0.5) || h + *ramp_hi > T::lit(0.5) {
                    return bad("fiber plateau plus ramp exceeds half the circle".into());
                }
                if !amp.is_finite() || !phase.is_finite() {
                    return bad("fiber amplitude/phase not finite".into());
                }
            }
        }
        Ok(())
    }

    fn dot_k(k: &[i64], x: &[T]) -> T {
        k.iter().zip(x).fold(T::zero(), |s, (&k, &x)| s + T::lit(k as f64) * x)
    }

    /// Plateau weight and its derivative at base coordinate `y`.
    fn plateau(y: T, lo: T, hi: T, ramp_lo: T, ramp_hi: T) -> (T, T) {
        let two = T::lit(2.0);
        let c = (lo + hi) / two;
        let h = (hi - lo) / two;
        let u = wrap_signed(y - c);
        if u.abs() <= h {
            (T::one(), T::zero())
        } else if u > h {
            let t = (u - h) / ramp_hi;
            (T::one() - smootherstep(t), -smootherstep_d(t) / ramp_hi)
        } else {
            let t = (-h - u) / ramp_lo;
            (T::one() - smootherstep(t), smootherstep_d(t) / ramp_lo)
        }
    }

    /// Range of the plateau over the base interval `[a, b]`.
    fn plateau_range(a: T, b: T, lo: T, hi: T, ramp_lo: T, ramp_hi: T) -> (T, T) {
        if b - a >= T::one() {
            return (T::zero(), T::one());
        }
        let c = (lo + hi) / T::lit(2.0);
        let ua = wrap_signed(a - c);
        let ub = ua + (b - a);
        let contains = |t: T| {
            let m = (ua - t).ceil();
            t + m <= ub
        };
        let wa = Self::plateau(a, lo, hi, ramp_lo, ramp_hi).0;
        let wb = Self::plateau(b, lo, hi, ramp_lo, ramp_hi).0;
        let mx = if contains(T::zero()) { T::one() } else { wa.max(wb) };
        let mn = if contains(T::lit(0.5)) { T::zero() } else { wa.min(wb) };
        (mn, mx)
    }

    /// Range of one bump factor over `[a, b]` (offsets from center, not yet scaled).
    fn bump_factor_range(a: T, b: T, c: T, rho: T) -> (T, T) {
        if b - a >= T::one() {
            return (T::zero(), T::one());
        }
        let da = wrap_signed(a - c);
        let db = da + (b - a);
        let mut mx = T::zero();
        let mut mn = T::zero();
        for shift in [T::zero(), T::one()] {
            let (l, h) = (da - shift, db - shift);
            if h <= -rho || l >= rho {
                continue;
            }
            let near = if l <= T::zero() && h >= T::zero() { T::zero() } else { l.abs().min(h.abs()) };
            mx = mx.max(profile(near / rho));
            if l > -rho && h < rho {
                mn = profile(l.abs().max(h.abs()) / rho);
            }
        }
        (mn, mx)
    }

    fn add_value(&self, x: &[T], out: &mut [T]) {
        match self {
            Term::Trig { k, amp, phase, coord } => {
                out[*coord] = out[*coord] + *amp * (T::tau() * Self::dot_k(k, x) + *phase).sin();
            }
            Term::Bump { center, radius, disp } => {
                let mut b = T::one();
                for (&xi, &ci) in x.iter().zip(center) {
                    b = b * profile(wrap_signed(xi - ci) / *radius);
                    if b == T::zero() {
                        return;
                    }
                }
                for (o, &d) in out.iter_mut().zip(disp) {
                    *o = *o + d * b;
                }
            }
            Term::Fiber { base, lo, hi, ramp_lo, ramp_hi, k, amp, phase, coord } => {
                let (w, _) = Self::plateau(x[*base], *lo, *hi, *ramp_lo, *ramp_hi);
                if w != T::zero() {
                    out[*coord] = out[*coord] + w * *amp * (T::tau() * Self::dot_k(k, x) + *phase).sin();
                }
            }
        }
    }

    fn add_jacobian(&self, x: &[T], jac: &mut Mat<T>) {
        let n = x.len();
        match self {
            Term::Trig { k, amp, phase, coord } => {
                let c = *amp * T::tau() * (T::tau() * Self::dot_k(k, x) + *phase).cos();
                for j in 0..n {
                    jac[(*coord, j)] = jac[(*coord, j)] + c * T::lit(k[j] as f64);
                }
            }
            Term::Bump { center, radius, disp } => {
                let s: Vec<T> = x.iter().zip(center).map(|(&xi, &ci)| wrap_signed(xi - ci) / *radius).collect();
                if s.iter().any(|v| v.abs() >= T::one()) {
                    return;
                }
                let p: Vec<T> = s.iter().map(|&v| profile(v)).collect();
                for j in 0..n {
                    let mut g = profile_d(s[j]) / *radius;
                    for (m, &pm) in p.iter().enumerate() {
                        if m != j {
                            g = g * pm;
                        }
                    }
                    for i in 0..n {
                        jac[(i, j)] = jac[(i, j)] + disp[i] * g;
                    }
                }
            }
            Term::Fiber { base, lo, hi, ramp_lo, ramp_hi, k, amp, phase, coord } => {
                let (w, dw) = Self::plateau(x[*base], *lo, *hi, *ramp_lo, *ramp_hi);
                if w == T::zero() && dw == T::zero() {
                    return;
                }
                let th = T::tau() * Self::dot_k(k, x) + *phase;
                let c = w * *amp * T::tau() * th.cos();
                for j in 0..n {
                    jac[(*coord, j)] = jac[(*coord, j)] + c * T::lit(k[j] as f64);
                }
                jac[(*coord, *base)] = jac[(*coord, *base)] + dw * *amp * th.sin();
            }
        }
    }

    fn add_range(&self, lo: &[T], hi: &[T], out: &mut [(T, T)]) {
        let trig_range = |k: &[i64], phase: T| {
            let mut a = phase;
            let mut b = phase;
            for ((&ki, &l), &h) in k.iter().zip(lo).zip(hi) {
                let kf = T::tau() * T::lit(ki as f64);
                if ki >= 0 {
                    a = a + kf * l;
                    b = b + kf * h;
                } else {
                    a = a + kf * h;
                    b = b + kf * l;
                }
            }
            sin_range(a, b)
        };
        let acc = |o: &mut (T, T), r: (T, T)| {
            o.0 = o.0 + r.0;
            o.1 = o.1 + r.1;
        };
        match self {
            Term::Trig { k, amp, phase, coord } => {
                let r = interval_mul(trig_range(k, *phase), (*amp, *amp));
                acc(&mut out[*coord], r);
            }
            Term::Bump { center, radius, disp } => {
                let mut r = (T::one(), T::one());
                for i in 0..lo.len() {
                    r = interval_mul(r, Self::bump_factor_range(lo[i], hi[i], center[i], *radius));
                }
                for (o, &d) in out.iter_mut().zip(disp) {
                    acc(o, interval_mul(r, (d, d)));
                }
            }
            Term::Fiber { base, lo: pl, hi: ph, ramp_lo, ramp_hi, k, amp, phase, coord } => {
                let w = Self::plateau_range(lo[*base], hi[*base], *pl, *ph, *ramp_lo, *ramp_hi);
                let s = interval_mul(trig_range(k, *phase), (*amp, *amp));
                acc(&mut out[*coord], interval_mul(w, s));
            }
        }
    }

    /// Whether the term can be non-zero somewhere on the box.
    fn meets_support(&self, lo: &[T], hi: &[T]) -> bool {
        match self {
            Term::Trig { .. } => true,
            Term::Bump { center, radius, .. } => {
                (0..lo.len()).all(|i| Self::bump_factor_range(lo[i], hi[i], center[i], *radius).1 > T::zero())
            }
            Term::Fiber { base, lo: pl, hi: ph, ramp_lo, ramp_hi, .. } => {
                Self::plateau_range(lo[*base], hi[*base], *pl, *ph, *ramp_lo, *ramp_hi).1 > T::zero()
            }
        }
    }

    /// Bound on `sum_k |d_k d_j f_i|` over all `i, j`.
    fn c2(&self, n: usize) -> T {
        let tau = T::tau();
        match self {
            Term::Trig { k, amp, .. } => {
                let k1 = T::lit(k.iter().map(|v| v.unsigned_abs() as f64).sum());
                amp.abs() * tau * tau * k1 * k1
            }
            Term::Bump { radius, disp, .. } => {
                let d = disp.iter().fold(T::zero(), |m, v| m.max(v.abs()));
                let per = T::lit(BUMP_CURV_MAX.max(BUMP_SLOPE_MAX * BUMP_SLOPE_MAX));
                d * per * T::lit(n as f64) / (*radius * *radius)
            }
            Term::Fiber { ramp_lo, ramp_hi, k, amp, .. } => {
                let r = ramp_lo.min(*ramp_hi);
                let w = tau * T::lit(k.iter().map(|v| v.unsigned_abs() as f64).sum());
                amp.abs()
                    * (T::lit(SMOOTHERSTEP_CURV_MAX) / (r * r) + T::lit(2.0 * SMOOTHERSTEP_SLOPE_MAX) / r * w + w * w)
            }
        }
    }

    /// Bound on the sup-norm of the value and of first partials.
    fn c1(&self) -> (T, T) {
        let tau = T::tau();
        match self {
            Term::Trig { k, amp, .. } => {
                let kmax = T::lit(k.iter().map(|v| v.unsigned_abs() as f64).sum());
                (amp.abs(), amp.abs() * tau * kmax)
            }
            Term::Bump { radius, disp, .. } => {
                let d = disp.iter().fold(T::zero(), |m, v| m.max(v.abs()));
                (d, d * T::lit(BUMP_SLOPE_MAX) / *radius)
            }
            Term::Fiber { ramp_lo, ramp_hi, k, amp, .. } => {
                let r = ramp_lo.min(*ramp_hi);
                let w = tau * T::lit(k.iter().map(|v| v.unsigned_abs() as f64).sum());
                (amp.abs(), amp.abs() * (w + T::lit(SMOOTHERSTEP_SLOPE_MAX) / r))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct MapSpecRaw<T> {
    dim: usize,
    linear: Vec<Vec<i64>>,
    #[serde(default)]
    terms: Vec<Term<T>>,
}

/// An endomorphism of `T^n`: integer linear part plus periodic smooth terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MapSpecRaw<T>", into = "MapSpecRaw<T>", bound = "T: Real")]
pub struct MapSpec<T> {
    dim: usize,
    linear: Vec<Vec<i64>>,
    terms: Vec<Term<T>>,
    det: i128,
    residues: Vec<Vec<i64>>,
    a_real: Mat<T>,
    a_inv: Mat<T>,
}

impl<T: Real> TryFrom<MapSpecRaw<T>> for MapSpec<T> {
    type Error = Error;
    fn try_from(r: MapSpecRaw<T>) -> Result<Self> {
        let m = MapSpec::new(r.linear, r.terms)?;
        if m.dim != r.dim {
            return Err(Error::DimensionMismatch { expected: r.dim, got: m.dim });
        }
        Ok(m)
    }
}

impl<T: Real> From<MapSpec<T>> for MapSpecRaw<T> {
    fn from(m: MapSpec<T>) -> Self {
        MapSpecRaw { dim: m.dim, linear: m.linear, terms: m.terms }
    }
}

/// Sheet label of an inverse branch: residue class of `Z^n / A Z^n` and the Newton seed used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BranchId<T> {
    pub residue: Vec<i64>,
    pub seed: Vec<T>,
}

/// `Df(x)` with its determinant and minimum norm.
#[derive(Clone, Debug, PartialEq)]
pub struct JacobianSample<T> {
    pub point: TorusPoint<T>,
    pub matrix: Mat<T>,
    pub det: T,
    pub min_norm: T,
    /// Set when the matrix is numerically singular; `min_norm` is then 0.
    pub degenerate: bool,
}

/// Newton iteration cap for inverse branches.
pub const NEWTON_MAX_ITER: usize = 50;

impl<T: Real> MapSpec<T> {
    pub fn new(linear: Vec<Vec<i64>>, terms: Vec<Term<T>>) -> Result<Self> {
        let n = linear.len();
        if n == 0 {
            return Err(Error::InvalidMap("empty linear part".into()));
        }
        if let Some(row) = linear.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, got: row.len() });
        }
        let det = int_det(&linear);
        if det == 0 {
            return Err(Error::InvalidMap("linear part is singular".into()));
        }
        for t in &terms {
            t.validate(n)?;
        }
        let a_real = Mat::from_int(&linear);
        let a_inv = a_real.inverse().ok_or_else(|| Error::InvalidMap("linear part not invertible".into()))?;
        let residues = lattice_residues(&linear);
        Ok(MapSpec { dim: n, linear, terms, det, residues, a_real, a_inv })
    }

    pub fn linear_only(linear: Vec<Vec<i64>>) -> Result<Self> {
        Self::new(linear, Vec::new())
    }

    pub fn diagonal(d: &[i64]) -> Result<Self> {
        let n = d.len();
        Self::linear_only((0..n).map(|i| (0..n).map(|j| if i == j { d[i] } else { 0 }).collect()).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn linear(&self) -> &[Vec<i64>] {
        &self.linear
    }

    pub fn linear_mat(&self) -> &Mat<T> {
        &self.a_real
    }

    pub fn terms(&self) -> &[Term<T>] {
        &self.terms
    }

    /// Number of preimages of every point, `|det A|`.
    pub fn degree(&self) -> usize {
        self.det.unsigned_abs() as usize
    }

    pub fn residues(&self) -> &[Vec<i64>] {
        &self.residues
    }

    /// Same map with extra terms appended.
    pub fn with_terms(&self, extra: Vec<Term<T>>) -> Result<Self> {
        let mut terms = self.terms.clone();
        terms.extend(extra);
        Self::new(self.linear.clone(), terms)
    }

    /// Sum of the perturbation terms at `x`.
    pub fn perturbation(&self, x: &[T]) -> Vec<T> {
        let xf: Vec<T> = x.iter().map(|&v| frac(v)).collect();
        let mut out = vec![T::zero(); self.dim];
        for t in &self.terms {
            t.add_value(&xf, &mut out);
        }
        out
    }

    /// The lift `F(x) = A x + P(x)` on `R^n`.
    pub fn eval_lift_raw(&self, x: &[T]) -> Vec<T> {
        let mut y = self.a_real.mul_vec(x);
        for (yi, pi) in y.iter_mut().zip(self.perturbation(x)) {
            *yi = *yi + pi;
        }
        y
    }

    pub fn eval_lift(&self, x: &crate::torus::LiftPoint<T>) -> crate::torus::LiftPoint<T> {
        crate::torus::LiftPoint(self.eval_lift_raw(&x.0))
    }

    pub fn eval(&self, x: &TorusPoint<T>) -> TorusPoint<T> {
        TorusPoint::wrap(&self.eval_lift_raw(x.coords()))
    }

    /// `f` on raw coordinates, reduced mod 1.
    pub fn eval_raw(&self, x: &[T]) -> Vec<T> {
        self.eval_lift_raw(x).into_iter().map(frac).collect()
    }

    pub fn jacobian_matrix(&self, x: &[T]) -> Mat<T> {
        let xf: Vec<T> = x.iter().map(|&v| frac(v)).collect();
        let mut m = self.a_real.clone();
        for t in &self.terms {
            t.add_jacobian(&xf, &mut m);
        }
        m
    }

    pub fn jacobian(&self, x: &TorusPoint<T>) -> JacobianSample<T> {
        let matrix = self.jacobian_matrix(x.coords());
        let det = matrix.det();
        let scale = matrix.norm_inf().max(T::one());
        let degenerate = det.abs() <= T::epsilon() * scale.powi(self.dim as i32) * T::lit(16.0);
        let min_norm = if degenerate { T::zero() } else { matrix.min_norm() };
        JacobianSample { point: x.clone(), matrix, det, min_norm, degenerate }
    }

    /// Per-coordinate range of the perturbation over the box `[lo, hi]` (coordinates may be unreduced).
    pub fn perturbation_range(&self, lo: &[T], hi: &[T]) -> Vec<(T, T)> {
        let mut out = vec![(T::zero(), T::zero()); self.dim];
        for t in &self.terms {
            t.add_range(lo, hi, &mut out);
        }
        out
    }

    /// Bound on the Lipschitz constant (max-metric in, entrywise out) of `Df`.
    pub fn c2_bound(&self) -> T {
        self.terms.iter().fold(T::zero(), |s, t| s + t.c2(self.dim))
    }

    /// As [`Self::c2_bound`], counting only terms whose support meets the box.
    pub fn c2_bound_on(&self, lo: &[T], hi: &[T]) -> T {
        self.terms.iter().filter(|t| t.meets_support(lo, hi)).fold(T::zero(), |s, t| s + t.c2(self.dim))
    }

    /// Bounds on the sup-norm of the perturbation and of its first partials.
    pub fn c1_bounds(&self) -> (T, T) {
        self.terms.iter().fold((T::zero(), T::zero()), |(a, b), t| {
            let (c0, c1) = t.c1();
            (a + c0, b + c1)
        })
    }

    /// Solves `F(x) = target` on the lift by damped Newton starting at `seed`.
    pub fn newton_lift(&self, target: &[T], seed: &[T], tol: T) -> std::result::Result<Vec<T>, (usize, T)> {
        let resid = |x: &[T]| -> Vec<T> { self.eval_lift_raw(x).iter().zip(target).map(|(&a, &b)| a - b).collect() };
        let norm = |v: &[T]| v.iter().fold(T::zero(), |m, a| m.max(a.abs()));
        let mut x = seed.to_vec();
        let mut r = resid(&x);
        let mut rn = norm(&r);
        if rn == T::zero() {
            return Ok(x);
        }
        let small = tol / T::lit(10.0);
        for it in 0..NEWTON_MAX_ITER {
            let j = self.jacobian_matrix(&x);
            let step = match j.solve(&r) {
                Some(s) => s,
                None => return Err((it, rn)),
            };
            let sn = norm(&step);
            let mut t = T::one();
            let mut accepted = false;
            for _ in 0..30 {
                let cand: Vec<T> = x.iter().zip(&step).map(|(&a, &s)| a - t * s).collect();
                let cr = resid(&cand);
                let cn = norm(&cr);
                if cn < rn || cn == T::zero() || t * sn < small {
                    x = cand;
                    r = cr;
                    rn = cn;
                    accepted = true;
                    break;
                }
                t = t / T::lit(2.0);
            }
            if !accepted {
                return Err((it + 1, rn));
            }
            if t * sn < small || rn == T::zero() {
                if rn <= tol {
                    return Ok(x);
                }
                return Err((it + 1, rn));
            }
        }
        if rn <= tol {
            Ok(x)
        } else {
            Err((NEWTON_MAX_ITER, rn))
        }
    }

    /// Lifted preimages of the lifted point `y`: one root of `F(x) = y + r` per residue `r`.
    pub fn preimages_lift(&self, y: &[T], tol: T) -> Result<Vec<(Vec<T>, BranchId<T>)>> {
        let mut out = Vec::with_capacity(self.residues.len());
        for r in &self.residues {
            let target: Vec<T> = y.iter().zip(r).map(|(&a, &k)| a + T::lit(k as f64)).collect();
            let seed = self.a_inv.mul_vec(&target);
            let x = self.newton_lift(&target, &seed, tol).map_err(|(iterations, residual)| Error::NewtonFailed {
                branch: r.clone(),
                iterations,
                residual: residual.to_f64_lossy(),
            })?;
            out.push((x, BranchId { residue: r.clone(), seed }));
        }
        for a in 0..out.len() {
            for b in a + 1..out.len() {
                if torus_dist_raw(&out[a].0, &out[b].0) < tol {
                    return Err(Error::DuplicateRoots { a, b });
                }
            }
        }
        Ok(out)
    }

    /// All `|det A|` preimages of `y` on the torus.
    pub fn preimages(&self, y: &TorusPoint<T>, tol: T) -> Result<Vec<(TorusPoint<T>, BranchId<T>)>> {
        if y.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: y.dim() });
        }
        Ok(self
            .preimages_lift(y.coords(), tol)?
            .into_iter()
            .map(|(x, b)| (TorusPoint::wrap(&x), b))
            .collect())
    }
}

/// Points of the uniform grid with spacing at most `step` on `[0,1)^n`.
pub fn grid_points<T: Real>(n: usize, step: T) -> Vec<Vec<T>> {
    let m = (T::one() / step).ceil().to_usize().unwrap_or(1).max(1);
    let total = m.pow(n as u32);
    (0..total)
        .map(|mut c| {
            (0..n)
                .map(|_| {
                    let i = c % m;
                    c /= m;
                    T::lit(i as f64) / T::lit(m as f64)
                })
                .collect()
        })
        .collect()
}

/// Grid-sampled C1 distance: max of the torus C0 distance and the spectral norm of `Df - Dg`.
/// Maps with different linear parts are in different homotopy classes; the distance is infinite.
pub fn c1_distance<T: Real>(f: &MapSpec<T>, g: &MapSpec<T>, grid_step: T) -> Result<T> {
    if f.dim() != g.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), got: g.dim() });
    }
    if f.linear() != g.linear() {
        return Ok(T::infinity());
    }
    let pts = grid_points(f.dim(), grid_step);
    Ok(pts
        .par_iter()
        .map(|x| {
            let c0 = torus_dist_raw(&f.eval_raw(x), &g.eval_raw(x));
            let c1 = f.jacobian_matrix(x).sub(&g.jacobian_matrix(x)).norm2();
            c0.max(c1)
        })
        .reduce(T::zero, T::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doubling_sin(amp: f64) -> MapSpec<f64> {
        MapSpec::new(vec![vec![2]], vec![Term::Trig { k: vec![1], amp, phase: 0.0, coord: 0 }]).unwrap()
    }

    fn tp(v: &[f64]) -> TorusPoint<f64> {
        TorusPoint::new(v.to_vec()).unwrap()
    }

    #[test]
    fn eval_examples() {
        let f = MapSpec::<f64>::diagonal(&[2]).unwrap();
        assert_eq!(f.eval(&tp(&[0.75])).coords(), &[0.5]);
        let g = MapSpec::<f64>::diagonal(&[2, 3]).unwrap();
        assert_eq!(g.eval(&tp(&[0.5, 0.5])).coords(), &[0.0, 0.5]);
        let h = doubling_sin(0.01);
        let oracle = (0.5f64 + 0.01 * (std::f64::consts::PI / 2.0).sin()).fract();
        assert!((h.eval(&tp(&[0.25])).coords()[0] - oracle).abs() < 1e-15);
        assert!((oracle - 0.51).abs() < 1e-15);
    }

    #[test]
    fn jacobian_examples() {
        let g = MapSpec::<f64>::diagonal(&[2, 3]).unwrap();
        let s = g.jacobian(&tp(&[0.3, 0.8]));
        assert!((s.det - 6.0).abs() < 1e-12 && (s.min_norm - 2.0).abs() < 1e-12);
        let id = MapSpec::<f64>::diagonal(&[1, 1]).unwrap();
        let s = id.jacobian(&tp(&[0.1, 0.2]));
        assert!((s.det - 1.0).abs() < 1e-12 && (s.min_norm - 1.0).abs() < 1e-12);
        let sh = MapSpec::<f64>::linear_only(vec![vec![2, 1], vec![0, 2]]).unwrap();
        let s = sh.jacobian(&tp(&[0.4, 0.4]));
        // smallest singular value from the eigenvalues of A^T A = [[4,2],[2,5]]
        let oracle = ((9.0 - 17f64.sqrt()) / 2.0).sqrt();
        assert!((s.det - 4.0).abs() < 1e-12);
        assert!((s.min_norm - oracle).abs() < 1e-12);
        assert!((oracle - 1.5616).abs() < 1e-4);
    }

    #[test]
    fn preimage_examples() {
        let f = MapSpec::<f64>::diagonal(&[2]).unwrap();
        let mut p: Vec<f64> = f.preimages(&tp(&[0.5]), 1e-12).unwrap().into_iter().map(|(x, _)| x.coords()[0]).collect();
        p.sort_by(f64::total_cmp);
        assert_eq!(p, vec![0.25, 0.75]);
        let g = MapSpec::<f64>::diagonal(&[2, 3]).unwrap();
        assert_eq!(g.preimages(&tp(&[0.0, 0.0]), 1e-12).unwrap().len(), 6);

        let h = doubling_sin(0.01);
        let roots = h.preimages(&tp(&[0.0]), 1e-12).unwrap();
        let mut xs: Vec<f64> = roots.iter().map(|(x, _)| x.coords()[0]).collect();
        xs.sort_by(f64::total_cmp);
        assert_eq!(xs[0], 0.0);
        // bisection on 2x + 0.01 sin(2 pi x) = 1 over [0.25, 0.75]
        let g1 = |x: f64| 2.0 * x + 0.01 * (std::f64::consts::TAU * x).sin() - 1.0;
        let (mut a, mut b) = (0.25, 0.75);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if g1(a) * g1(m) <= 0.0 {
                b = m;
            } else {
                a = m;
            }
        }
        assert!((xs[1] - 0.5 * (a + b)).abs() < 1e-12);
    }

    #[test]
    fn c1_distance_examples() {
        let f = MapSpec::<f64>::diagonal(&[2]).unwrap();
        assert_eq!(c1_distance(&f, &f, 1e-2).unwrap(), 0.0);
        let g = doubling_sin(0.01);
        let d = c1_distance(&f, &g, 1e-3).unwrap();
        assert!((d - 0.02 * std::f64::consts::PI).abs() < 1e-6);
        let a = MapSpec::<f64>::diagonal(&[2, 3]).unwrap();
        let b = a
            .with_terms(vec![Term::Bump { center: vec![0.5, 0.5], radius: 0.1, disp: vec![0.0, 0.0] }])
            .unwrap();
        assert_eq!(c1_distance(&a, &b, 1e-2).unwrap(), 0.0);
        let c = MapSpec::<f64>::diagonal(&[3, 3]).unwrap();
        assert!(c1_distance(&a, &c, 1e-1).unwrap().is_infinite());
    }

    #[test]
    fn json_round_trip() {
        let m = MapSpec::new(
            vec![vec![2, 0], vec![0, 3]],
            vec![
                Term::Trig { k: vec![1, 2], amp: 0.0123456789012345, phase: 0.3, coord: 1 },
                Term::Bump { center: vec![0.3, 0.4], radius: 0.1, disp: vec![0.01, -0.02] },
                Term::Fiber {
                    base: 1,
                    lo: 0.1,
                    hi: 0.3,
                    ramp_lo: 0.05,
                    ramp_hi: 0.05,
                    k: vec![1, 0],
                    amp: 0.02,
                    phase: 0.0,
                    coord: 0,
                },
            ],
        )
        .unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.contains("\"kind\":\"trig\""));
        let back: MapSpec<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<MapSpec<f64>>(r#"{"dim":1,"linear":[[0]],"terms":[]}"#).is_err());
    }

    #[test]
    fn ranges_enclose_samples() {
        let m = MapSpec::new(
            vec![vec![2, 0], vec![0, 2]],
            vec![
                Term::Trig { k: vec![1, -2], amp: 0.05, phase: 0.7, coord: 0 },
                Term::Bump { center: vec![0.02, 0.5], radius: 0.1, disp: vec![0.03, -0.02] },
                Term::Fiber {
                    base: 1,
                    lo: 0.9,
                    hi: 1.1,
                    ramp_lo: 0.05,
                    ramp_hi: 0.1,
                    k: vec![1, 0],
                    amp: 0.02,
                    phase: 0.0,
                    coord: 1,
                },
            ],
        )
        .unwrap();
        let boxes = [([0.95, 0.45], [1.05, 0.55]), ([0.0, 0.8], [0.3, 1.2]), ([-0.1, 0.1], [0.0, 0.2])];
        for (lo, hi) in boxes {
            let r = m.perturbation_range(&lo, &hi);
            for a in 0..=20 {
                for b in 0..=20 {
                    let x = [lo[0] + (hi[0] - lo[0]) * a as f64 / 20.0, lo[1] + (hi[1] - lo[1]) * b as f64 / 20.0];
                    let p = m.perturbation(&x);
                    for i in 0..2 {
                        assert!(p[i] >= r[i].0 - 1e-12 && p[i] <= r[i].1 + 1e-12, "{x:?} {i} {p:?} {r:?}");
                    }
                }
            }
        }
    }
}
