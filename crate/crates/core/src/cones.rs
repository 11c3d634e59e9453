//! Unstable cone fields over a constant splitting, domination, and the central-expansion
//! hypothesis on unstable discs.

use crate::arcs::{chase, ChaseConfig, ChaseOutcome};
use crate::certificate::{Certificate, Verdict};
use crate::error::{Error, Result};
use crate::map::{grid_points, MapSpec, Term};
use crate::region::{compute_lambda_cover, enclose_cell, GridCover};
use crate::torus::ArcPolyline;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// `C^u = { v : |v_c| <= kappa |v_u| }` in the coordinates of an orthonormal splitting
/// `E^c + E^u`, the same at every point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConeRaw", into = "ConeRaw")]
pub struct ConeFamily {
    center: Vec<Vec<f64>>,
    unstable: Vec<Vec<f64>>,
    kappa: f64,
}

#[derive(Serialize, Deserialize)]
struct ConeRaw {
    center: Vec<Vec<f64>>,
    unstable: Vec<Vec<f64>>,
    kappa: f64,
}

impl TryFrom<ConeRaw> for ConeFamily {
    type Error = Error;
    fn try_from(r: ConeRaw) -> Result<Self> {
        ConeFamily::new(r.center, r.unstable, r.kappa)
    }
}

impl From<ConeFamily> for ConeRaw {
    fn from(c: ConeFamily) -> Self {
        ConeRaw { center: c.center, unstable: c.unstable, kappa: c.kappa }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

impl ConeFamily {
    /// Rows of `center` span `E^c`, rows of `unstable` its orthogonal complement.
    pub fn new(center: Vec<Vec<f64>>, unstable: Vec<Vec<f64>>, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::Precondition(format!("cone opening {kappa} must be positive")));
        }
        let n = center.len() + unstable.len();
        if unstable.is_empty() {
            return Err(Error::Precondition("unstable direction is empty".into()));
        }
        let rows: Vec<&Vec<f64>> = center.iter().chain(&unstable).collect();
        for (i, a) in rows.iter().enumerate() {
            if a.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: a.len() });
            }
            for (j, b) in rows.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot(a, b) - want).abs() > 1e-9 {
                    return Err(Error::Precondition("splitting basis is not orthonormal".into()));
                }
            }
        }
        Ok(ConeFamily { center, unstable, kappa })
    }

    /// Splitting along coordinate axes: `center_axes` span `E^c`.
    pub fn axes(n: usize, center_axes: &[usize], kappa: f64) -> Result<Self> {
        let e = |i: usize| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect::<Vec<f64>>();
        if center_axes.iter().any(|&i| i >= n) {
            return Err(Error::Precondition("center axis out of range".into()));
        }
        let center = center_axes.iter().map(|&i| e(i)).collect();
        let unstable = (0..n).filter(|i| !center_axes.contains(i)).map(e).collect();
        ConeFamily::new(center, unstable, kappa)
    }

    pub fn dim(&self) -> usize {
        self.center.len() + self.unstable.len()
    }

    pub fn center_dim(&self) -> usize {
        self.center.len()
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn with_kappa(&self, kappa: f64) -> Result<Self> {
        ConeFamily::new(self.center.clone(), self.unstable.clone(), kappa)
    }

    pub fn center_basis(&self) -> &[Vec<f64>] {
        &self.center
    }

    pub fn unstable_basis(&self) -> &[Vec<f64>] {
        &self.unstable
    }

    /// `(|v_c|, |v_u|)`.
    pub fn split(&self, v: &[f64]) -> (f64, f64) {
        let c: f64 = self.center.iter().map(|e| dot(e, v).powi(2)).sum();
        let u: f64 = self.unstable.iter().map(|e| dot(e, v).powi(2)).sum();
        (c.sqrt(), u.sqrt())
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        let (c, u) = self.split(v);
        c <= self.kappa * u
    }

    fn compose(&self, c: &[f64], u: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        for (coef, e) in c.iter().zip(&self.center).chain(u.iter().zip(&self.unstable)) {
            for (vi, ei) in v.iter_mut().zip(e) {
                *vi += coef * ei;
            }
        }
        v
    }

    /// Vectors on the cone boundary: `kappa * c + u` with unit `c`, `u`. Exact (two rays) when
    /// both factors are one-dimensional; otherwise about `count` seeded samples.
    pub fn boundary_rays(&self, count: usize) -> Vec<Vec<f64>> {
        let (dc, du) = (self.center.len(), self.unstable.len());
        if dc == 0 {
            return vec![self.compose(&[], &unit_samples(du, 1, 0)[0])];
        }
        let cs = unit_samples(dc, count.max(2), 1);
        let us = unit_samples(du, if du == 1 { 1 } else { count.max(2) }, 2);
        let mut out = Vec::new();
        for (i, c) in cs.iter().enumerate() {
            let u = &us[i % us.len()];
            let ck: Vec<f64> = c.iter().map(|x| x * self.kappa).collect();
            out.push(self.compose(&ck, u));
        }
        out
    }

    /// Unit vectors filling the cone: boundary rays and rays at fractions of the opening.
    fn filling_rays(&self, count: usize) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for r in self.boundary_rays(count) {
            let (c, u) = self.split(&r);
            for s in [1.0, 0.75, 0.5, 0.25, 0.0] {
                let mut v = r.clone();
                // shrink the center part by s
                let cpart: Vec<f64> = self.compose(&self.center.iter().map(|e| dot(e, &r)).collect::<Vec<_>>(), &vec![0.0; self.unstable.len()]);
                for (vi, ci) in v.iter_mut().zip(&cpart) {
                    *vi -= (1.0 - s) * ci;
                }
                let nv = norm(&v);
                if nv > 0.0 && (c > 0.0 || u > 0.0) {
                    out.push(v.iter().map(|x| x / nv).collect());
                }
            }
        }
        out
    }
}

/// Deterministic unit vectors in `R^d`: both signs for `d = 1`, else seeded Gaussian samples.
fn unit_samples(d: usize, count: usize, stream: u64) -> Vec<Vec<f64>> {
    if d == 1 {
        return if count == 1 { vec![vec![1.0]] } else { vec![vec![1.0], vec![-1.0]] };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed ^ stream);
    (0..count)
        .map(|_| loop {
            let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let nv = norm(&v);
            if nv > 1e-3 && nv <= 1.0 {
                break v.iter().map(|x| x / nv).collect();
            }
        })
        .collect()
}

/// Options shared by the grid sweeps.
#[derive(Clone, Debug)]
pub struct ConeCheckOptions {
    /// Boundary samples when a factor has dimension above one.
    pub rays: usize,
    /// Subtract a curvature inflation term covering points between grid nodes.
    pub rigor: bool,
}

impl Default for ConeCheckOptions {
    fn default() -> Self {
        ConeCheckOptions { rays: 64, rigor: false }
    }
}

/// Pass iff `Df(x) v` lies strictly inside the cone for every grid point and boundary ray.
/// Margin: the least slack `1 - |w_c| / (kappa |w_u|)`.
pub fn check_cone_invariance(map: &MapSpec<f64>, cones: &ConeFamily, grid_step: f64) -> Result<Certificate> {
    check_cone_invariance_with(map, cones, grid_step, &ConeCheckOptions::default())
}

pub fn check_cone_invariance_with(
    map: &MapSpec<f64>,
    cones: &ConeFamily,
    grid_step: f64,
    opts: &ConeCheckOptions,
) -> Result<Certificate> {
    let t0 = Instant::now();
    let n = map.dim();
    if cones.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: cones.dim() });
    }
    let pts = grid_points(n, grid_step);
    let rays = cones.boundary_rays(opts.rays);
    let exact = cones.center_dim() == 1 && n == 2;
    let infl = if opts.rigor { n as f64 * map.c2_bound() * grid_step / 2.0 } else { 0.0 };
    let kappa = cones.kappa;
    let worst = pts
        .par_iter()
        .map(|x| {
            let j = map.jacobian_matrix(x);
            let mut m = f64::INFINITY;
            let mut sign = 0.0;
            for v in &rays {
                let w = j.mul_vec(v);
                let (wc, wu) = cones.split(&w);
                let e = infl * norm(v);
                let s = if wu - e > 0.0 { 1.0 - (wc + e) / (kappa * (wu - e)) } else { f64::NEG_INFINITY };
                m = m.min(s);
                if exact {
                    // both boundary images must land in the same half of the double cone
                    let su = dot(&cones.unstable[0], &w).signum();
                    if sign != 0.0 && su != sign {
                        m = m.min(-1.0);
                    }
                    sign = su;
                }
            }
            m
        })
        .reduce(|| f64::INFINITY, f64::min);
    let mut c = Certificate::from_margin("cone_invariance", worst, pts.len())
        .param("kappa", kappa)
        .param("grid_step", grid_step)
        .param("rays", rays.len())
        .param("inflation", infl)
        .param("rigor", opts.rigor);
    if !exact {
        c = c.note("boundary rays are sampled; exact only for one-dimensional factors in two dimensions");
    }
    if !opts.rigor {
        c = c.note("sampled on the grid without curvature inflation");
    }
    Ok(c.timed(t0))
}

/// Largest `|M v|` over the unit vectors of the cone, for `M` the inverse of `Df`.
fn cone_sup(cones: &ConeFamily, minv: &crate::linalg::Mat<f64>, fill: &[Vec<f64>]) -> f64 {
    let mut best = fill.iter().map(|v| norm(&minv.mul_vec(v))).fold(0.0, f64::max);
    if cones.dim() == 2 && cones.center_dim() == 1 {
        // critical directions of the Rayleigh quotient: eigenvectors of M^T M
        let g = minv.transpose().mul(minv);
        let (a, b, d) = (g[(0, 0)], g[(0, 1)], g[(1, 1)]);
        let tr = a + d;
        let disc = ((a - d) * (a - d) / 4.0 + b * b).sqrt();
        for lam in [tr / 2.0 + disc, tr / 2.0 - disc] {
            let e = if b.abs() > 1e-300 { vec![b, lam - a] } else if (lam - a).abs() <= (lam - d).abs() { vec![1.0, 0.0] } else { vec![0.0, 1.0] };
            let ne = norm(&e);
            if ne == 0.0 {
                continue;
            }
            let e: Vec<f64> = e.iter().map(|x| x / ne).collect();
            if cones.contains(&e) {
                best = best.max(norm(&minv.mul_vec(&e)));
            }
        }
    }
    best
}

/// Operator norm of `Df` restricted to `E^c`.
fn center_norm(cones: &ConeFamily, j: &crate::linalg::Mat<f64>) -> f64 {
    let imgs: Vec<Vec<f64>> = cones.center.iter().map(|e| j.mul_vec(e)).collect();
    let k = imgs.len();
    if k == 0 {
        return 0.0;
    }
    if k == 1 {
        return norm(&imgs[0]);
    }
    let mut g = crate::linalg::Mat::<f64>::zeros(k);
    for a in 0..k {
        for b in 0..k {
            g[(a, b)] = dot(&imgs[a], &imgs[b]);
        }
    }
    crate::linalg::sym_eigenvalues(&g).into_iter().fold(0.0, f64::max).sqrt()
}

/// Smallest expansion of `Df` on `E^c`.
pub fn center_min_norm(cones: &ConeFamily, j: &crate::linalg::Mat<f64>) -> f64 {
    let imgs: Vec<Vec<f64>> = cones.center.iter().map(|e| j.mul_vec(e)).collect();
    let k = imgs.len();
    if k == 1 {
        return norm(&imgs[0]);
    }
    let mut g = crate::linalg::Mat::<f64>::zeros(k);
    for a in 0..k {
        for b in 0..k {
            g[(a, b)] = dot(&imgs[a], &imgs[b]);
        }
    }
    crate::linalg::sym_eigenvalues(&g).into_iter().fold(f64::INFINITY, f64::min).max(0.0).sqrt()
}

/// For every grid point `x'` and inverse branch `phi` with `phi(f(x')) = x'`:
/// (1) `|D phi v| < lambda` and (2) `|Df(x')|_{E^c}| |D phi v| < lambda` for unit `v` in the cone.
pub fn check_domination(map: &MapSpec<f64>, cones: &ConeFamily, lambda: f64, grid_step: f64) -> Result<Certificate> {
    let t0 = Instant::now();
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::Precondition(format!("lambda {lambda} must lie in (0, 1)")));
    }
    let n = map.dim();
    if cones.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: cones.dim() });
    }
    let pts = grid_points(n, grid_step);
    let fill = cones.filling_rays(32);
    let (c1, c2, singular) = pts
        .par_iter()
        .map(|x| {
            let j = map.jacobian_matrix(x);
            match j.inverse() {
                Some(minv) => {
                    let s = cone_sup(cones, &minv, &fill);
                    (s, center_norm(cones, &j) * s, false)
                }
                None => (f64::INFINITY, f64::INFINITY, true),
            }
        })
        .reduce(|| (0.0, 0.0, false), |a, b| (a.0.max(b.0), a.1.max(b.1), a.2 || b.2));
    let achieved = c1.max(c2);
    let mut c = Certificate::from_margin("domination", lambda - achieved, pts.len())
        .param("lambda", lambda)
        .param("lambda_achieved", achieved)
        .param("condition1_max", c1)
        .param("condition2_max", c2)
        .param("kappa", cones.kappa)
        .param("grid_step", grid_step);
    if singular {
        c = c.fail("singular Jacobian on the grid");
    }
    Ok(c.timed(t0))
}

/// Parameters of the unstable-disc hypothesis check.
#[derive(Clone, Debug)]
pub struct DiscOptions {
    pub delta0: f64,
    /// Required central expansion rate, above one.
    pub lambda0: f64,
    /// Steps `k <= k0` are exempt.
    pub k0: usize,
    pub horizon: usize,
    pub samples: usize,
    pub seed: u64,
    /// Resolution and depth of the witness-set cover.
    pub cover_res: usize,
    pub cover_depth: usize,
}

impl Default for DiscOptions {
    fn default() -> Self {
        DiscOptions { delta0: 0.5, lambda0: 1.5, k0: 0, horizon: 30, samples: 32, seed: 11, cover_res: 64, cover_depth: 4 }
    }
}

/// Products of the central expansion along an orbit, transporting an orthonormal frame of
/// `E^c` with a QR step each iterate. Entry `k` is the lower bound `log m{Df|frame_k}`.
pub fn central_log_rates(map: &MapSpec<f64>, cones: &ConeFamily, orbit: &[Vec<f64>]) -> Vec<f64> {
    let mut frame: Vec<Vec<f64>> = cones.center.clone();
    let mut out = Vec::with_capacity(orbit.len());
    for x in orbit {
        let j = map.jacobian_matrix(x);
        let imgs: Vec<Vec<f64>> = frame.iter().map(|e| j.mul_vec(e)).collect();
        // smallest singular value of the image frame
        let k = imgs.len();
        let mut g = crate::linalg::Mat::<f64>::zeros(k.max(1));
        for a in 0..k {
            for b in 0..k {
                g[(a, b)] = dot(&imgs[a], &imgs[b]);
            }
        }
        let m = if k == 1 { norm(&imgs[0]) } else { crate::linalg::sym_eigenvalues(&g).into_iter().fold(f64::INFINITY, f64::min).max(0.0).sqrt() };
        out.push(m.max(1e-300).ln());
        // Gram-Schmidt
        let mut q: Vec<Vec<f64>> = Vec::new();
        for v in imgs {
            let mut w = v.clone();
            for e in &q {
                let p = dot(&w, e);
                for (wi, ei) in w.iter_mut().zip(e) {
                    *wi -= p * ei;
                }
            }
            let nw = norm(&w);
            q.push(w.iter().map(|x| x / nw.max(1e-300)).collect());
        }
        frame = q;
    }
    out
}

/// Whether `m{Df^i|E^c(f^k y)} > lambda0^i` for all `k > k0` and `i >= 1` within the orbit.
pub fn central_condition_holds(rates: &[f64], lambda0: f64, k0: usize) -> bool {
    let l = lambda0.ln();
    for k in (k0 + 1)..rates.len() {
        let mut s = 0.0;
        for (i, r) in rates[k..].iter().enumerate() {
            s += r;
            if s <= (i + 1) as f64 * l {
                return false;
            }
        }
    }
    true
}

/// Random discs tangent to the cone with diameter above `delta0` must each carry a point whose
/// central products exceed `lambda0^i` after step `k0` up to the horizon.
pub fn check_disc_hypothesis(map: &MapSpec<f64>, cones: &ConeFamily, opts: &DiscOptions) -> Result<Certificate> {
    let t0 = Instant::now();
    let n = map.dim();
    if cones.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: cones.dim() });
    }
    if !(opts.lambda0 > 1.0) {
        return Err(Error::Precondition("lambda0 must exceed 1".into()));
    }
    if opts.horizon <= opts.k0 {
        return Ok(Certificate::inconclusive("central_discs", 0.0, opts.cover_res, "horizon does not exceed k0").timed(t0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let discs: Vec<ArcPolyline<f64>> = (0..opts.samples)
        .map(|_| {
            let base: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let u = &unit_samples(cones.unstable.len(), 1, rng.gen())[0];
            let dc = cones.center.len();
            let c: Vec<f64> = if dc == 0 { vec![] } else { unit_samples(dc, 1, rng.gen())[0].iter().map(|x| x * cones.kappa * rng.gen::<f64>() * 0.5).collect() };
            let v = cones.compose(&c, u);
            let vmax = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            let len = 1.05 * opts.delta0 / vmax;
            let end: Vec<f64> = base.iter().zip(&v).map(|(b, d)| b + d * len).collect();
            ArcPolyline::segment(base, end).expect("nondegenerate disc")
        })
        .collect();
    let bad = |x: &[f64], _k: usize| center_min_norm(cones, &map.jacobian_matrix(x)) <= opts.lambda0;
    let cfg = ChaseConfig { horizon: opts.horizon, skip: opts.k0, ..ChaseConfig::default() };
    let results: Vec<(bool, bool)> = discs
        .par_iter()
        .map(|d| match chase(map, d, bad, &cfg) {
            ChaseOutcome::Found(w) => {
                let ok = w.clean && central_condition_holds(&central_log_rates(map, cones, &w.orbit), opts.lambda0, opts.k0);
                (ok, false)
            }
            ChaseOutcome::Budget { .. } => (false, true),
            _ => (false, false),
        })
        .collect();
    let found = results.iter().filter(|r| r.0).count();
    let budget = results.iter().filter(|r| r.1).count();
    let failed = opts.samples - found - budget;
    // witness-set cover: cells with central expansion above lambda0 everywhere sampled
    let res = opts.cover_res;
    let grid = GridCover::empty(n, res)?;
    let good: Vec<bool> = (0..grid.total())
        .into_par_iter()
        .map(|f| {
            let b = grid.cell_box(f);
            corners_and_center(b.lo(), b.hi()).iter().all(|x| center_min_norm(cones, &map.jacobian_matrix(x)) > opts.lambda0)
        })
        .collect();
    let mut u = GridCover::empty(n, res)?;
    for (f, g) in good.iter().enumerate() {
        if !g {
            u.insert_flat(f);
        }
    }
    let cover = compute_lambda_cover(map, &u, opts.cover_depth)?;
    let invariant = cover.cover.iter().all(|f| enclose_cell(map, res, &cover.cover.unflat(f)).meets(&cover.cover));
    let margin = if failed == 0 && budget == 0 { 1.0 } else { -((failed + budget) as f64) / opts.samples as f64 };
    let mut c = Certificate::from_margin("central_discs", margin, res)
        .param("samples", opts.samples)
        .param("witnesses", found)
        .param("budget_exhausted", budget)
        .param("lambda0", opts.lambda0)
        .param("k0", opts.k0)
        .param("horizon", opts.horizon)
        .param("delta0", opts.delta0)
        .param("cover_fraction", cover.fraction())
        .param("cover_depth", opts.cover_depth)
        .param("cover_forward_invariant", invariant)
        .note("disc diameter uses the max-metric extent of the lifted segment");
    if failed == 0 && budget > 0 {
        c.verdict = Verdict::Inconclusive;
        c.notes.push("search budget exhausted on some discs".into());
    }
    Ok(c.timed(t0))
}

pub(crate) fn corners_and_center(lo: &[f64], hi: &[f64]) -> Vec<Vec<f64>> {
    let n = lo.len();
    let mut out: Vec<Vec<f64>> = (0..1usize << n)
        .map(|m| (0..n).map(|i| if m >> i & 1 == 1 { hi[i] } else { lo[i] }).collect())
        .collect();
    out.push(lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect());
    out
}

/// `(x, y) -> (phi_y(x), E(y))` on `T^m x T^n`, fiber coordinates first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkewProductSpec {
    pub fiber_dim: usize,
    pub fiber_linear: Vec<Vec<i64>>,
    pub base_linear: Vec<Vec<i64>>,
    /// Terms added to fiber coordinates; may depend on every coordinate.
    pub fiber_terms: Vec<Term<f64>>,
    /// Terms added to base coordinates; must not depend on the fiber.
    pub base_terms: Vec<Term<f64>>,
}

impl SkewProductSpec {
    pub fn dim(&self) -> usize {
        self.fiber_dim + self.base_linear.len()
    }

    pub fn compile(&self) -> Result<MapSpec<f64>> {
        let m = self.fiber_dim;
        let n = self.dim();
        if self.fiber_linear.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: self.fiber_linear.len() });
        }
        let mut lin = vec![vec![0i64; n]; n];
        for (i, row) in self.fiber_linear.iter().enumerate() {
            if row.len() != m {
                return Err(Error::DimensionMismatch { expected: m, got: row.len() });
            }
            lin[i][..m].copy_from_slice(row);
        }
        for (i, row) in self.base_linear.iter().enumerate() {
            if row.len() != n - m {
                return Err(Error::DimensionMismatch { expected: n - m, got: row.len() });
            }
            lin[m + i][m..].copy_from_slice(row);
        }
        for t in &self.fiber_terms {
            let coord = match t {
                Term::Trig { coord, .. } | Term::Fiber { coord, .. } => Some(*coord),
                Term::Bump { disp, .. } => disp[m.min(disp.len())..].iter().all(|d| *d == 0.0).then_some(0),
            };
            if coord.map_or(true, |c| c >= m) {
                return Err(Error::InvalidMap("fiber term acts on a base coordinate".into()));
            }
        }
        for t in &self.base_terms {
            let ok = match t {
                Term::Trig { k, coord, .. } => *coord >= m && k[..m.min(k.len())].iter().all(|&v| v == 0),
                Term::Fiber { base, k, coord, .. } => *coord >= m && *base >= m && k[..m.min(k.len())].iter().all(|&v| v == 0),
                Term::Bump { .. } => false,
            };
            if !ok {
                return Err(Error::InvalidMap("base term must act on and depend only on base coordinates".into()));
            }
        }
        MapSpec::new(lin, self.fiber_terms.iter().chain(&self.base_terms).cloned().collect())
    }

    /// Fiber map `phi_y(x)` and base image `E(y)`, lifted.
    pub fn eval_parts(&self, x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let f = self.compile()?;
        let mut p = x.to_vec();
        p.extend_from_slice(y);
        let mut out = f.eval_lift_raw(&p);
        let base = out.split_off(self.fiber_dim);
        Ok((out, base))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diag23_invariance() {
        let f = MapSpec::diagonal(&[2, 3]).unwrap();
        for kappa in [1.0, 10.0] {
            let c = check_cone_invariance(&f, &ConeFamily::axes(2, &[0], kappa).unwrap(), 1.0 / 8.0).unwrap();
            assert!(c.passed());
            assert!((c.margin - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn domination_examples() {
        let f = MapSpec::diagonal(&[2, 3]).unwrap();
        // vertical vectors give 1/3 and 2/3; a thin cone keeps both under 0.7
        let thin = ConeFamily::axes(2, &[0], 0.1).unwrap();
        let c = check_domination(&f, &thin, 0.7, 0.25).unwrap();
        assert!(c.passed(), "{c:?}");
        let k0 = ConeFamily::axes(2, &[0], 1e-9).unwrap();
        let c = check_domination(&f, &k0, 0.7, 0.25).unwrap();
        assert!((c.params["condition2_max"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-6);
        // with kappa = 1 the extreme ray (1,1)/sqrt2 gives 2 * sqrt(1/4 + 1/9) / sqrt 2 = 0.85
        let wide = ConeFamily::axes(2, &[0], 1.0).unwrap();
        let c = check_domination(&f, &wide, 0.7, 0.25).unwrap();
        let oracle = 2.0 * (0.25f64 + 1.0 / 9.0).sqrt() / 2f64.sqrt();
        assert!((c.params["condition2_max"].as_f64().unwrap() - oracle).abs() < 1e-9);
        assert!(!c.passed());
        let g = MapSpec::diagonal(&[2, 2]).unwrap();
        assert!(!check_domination(&g, &thin, 0.9, 0.25).unwrap().passed());
    }

    #[test]
    fn central_expansion_everywhere() {
        let f = MapSpec::diagonal(&[2, 3]).unwrap();
        let cones = ConeFamily::axes(2, &[0], 0.1).unwrap();
        let opts = DiscOptions { lambda0: 1.5, samples: 8, horizon: 20, cover_res: 16, ..DiscOptions::default() };
        let c = check_disc_hypothesis(&f, &cones, &opts).unwrap();
        assert!(c.passed(), "{c:?}");
        assert_eq!(c.params["cover_fraction"], 1.0);
        let short = DiscOptions { horizon: 0, ..opts };
        assert_eq!(check_disc_hypothesis(&f, &cones, &short).unwrap().verdict, Verdict::Inconclusive);
    }

    #[test]
    fn qr_rates_and_window_condition() {
        let f = MapSpec::diagonal(&[2, 3]).unwrap();
        let cones = ConeFamily::axes(2, &[0], 0.1).unwrap();
        let r = central_log_rates(&f, &cones, &[vec![0.1, 0.2], vec![0.2, 0.6]]);
        assert!(r.iter().all(|v| (v - 2f64.ln()).abs() < 1e-12));
        assert!(central_condition_holds(&[0.0, 1.0, 1.0], 2.0, 0));
        assert!(!central_condition_holds(&[1.0, 0.0, 1.0], 1.5, 0));
    }

    #[test]
    fn skew_product_compiles() {
        let s = SkewProductSpec {
            fiber_dim: 1,
            fiber_linear: vec![vec![1]],
            base_linear: vec![vec![3]],
            fiber_terms: vec![Term::Trig { k: vec![0, 1], amp: 0.05, phase: 0.0, coord: 0 }],
            base_terms: vec![],
        };
        let f = s.compile().unwrap();
        let (a, b) = s.eval_parts(&[0.2], &[0.1]).unwrap();
        let full = f.eval_lift_raw(&[0.2, 0.1]);
        assert_eq!(vec![a[0], b[0]], full);
        let bad = SkewProductSpec { base_terms: vec![Term::Trig { k: vec![1, 0], amp: 0.1, phase: 0.0, coord: 1 }], ..s };
        assert!(bad.compile().is_err());
    }
}
