//! Builders for the worked examples, the rotation-product counterexample, IFS utilities, and
//! claim verification bound to each instance.

use crate::arcs::{chase, ChaseConfig, ChaseOutcome};
use crate::certificate::{Certificate, Verdict};
use crate::cones::{check_cone_invariance, check_domination, check_disc_hypothesis, ConeFamily, DiscOptions, SkewProductSpec};
use crate::error::{Error, Result};
use crate::map::{MapSpec, Term, BUMP_SLOPE_MAX};
use crate::real::frac;
use crate::region::{
    check_expanding_on, check_h2_arc_property, check_h3_surjectivity_off_u1, check_volume_expanding, compute_lambda_cover,
    default_delta0, max_removed_component, rasterize_box, sample_arc, GridCover, H2Options, LambdaCover,
};
use crate::torus::{ArcPolyline, BoxRegion};
use crate::transit::{build_transition_graph, irg_pipeline, separation_check, strongly_connected, CylinderSpec, IrgOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use std::f64::consts::{PI, TAU};
use std::time::Instant;

/// A named claim with the checker that verifies it and the verdict the construction predicts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub name: String,
    pub check: String,
    pub expect: Verdict,
}

fn claim(name: &str, check: &str) -> Claim {
    Claim { name: name.into(), check: check.into(), expect: Verdict::Pass }
}

/// A built example: the map, its regions and constants, and the claims bound to it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExampleInstance {
    pub name: String,
    pub map: MapSpec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skew: Option<SkewProductSpec>,
    pub u0: GridCover,
    pub u1: GridCover,
    pub u2: GridCover,
    pub delta0: f64,
    pub lambda: f64,
    pub sigma: f64,
    /// Expansion rate used by the ball-growth stage.
    pub lambda_prime: f64,
    pub depth: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cones: Option<ConeFamily>,
    /// Unions of boxes whose maximal invariant sets the claims refer to.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rect_sets: Vec<Vec<BoxRegion<f64>>>,
    pub params: Map<String, Value>,
    pub claims: Vec<Claim>,
    pub notes: Vec<String>,
}

/// Terms of a bump pair at `center +- (rho / sqrt 5) e_axis` adding `contrib` to column `axis`
/// of `Df(center)` without moving `center`.
pub fn bump_pair(center: &[f64], axis: usize, contrib: &[f64], rho: f64) -> Vec<Term<f64>> {
    let h = rho / 5f64.sqrt();
    let d: Vec<f64> = contrib.iter().map(|c| c * rho / (2.0 * BUMP_SLOPE_MAX)).collect();
    let mut cp = center.to_vec();
    let mut cm = center.to_vec();
    cp[axis] += h;
    cm[axis] -= h;
    vec![
        Term::Bump { center: cp, radius: rho, disp: d.clone() },
        Term::Bump { center: cm, radius: rho, disp: d.iter().map(|v| -v).collect() },
    ]
}

/// Max-ball of radius `r` about `c`, rasterized.
pub fn ball_cover(res: usize, c: &[f64], r: f64) -> Result<GridCover> {
    let mut g = GridCover::empty(c.len(), res)?;
    let lo: Vec<f64> = c.iter().map(|v| v - r).collect();
    let hi: Vec<f64> = c.iter().map(|v| v + r).collect();
    rasterize_box(&mut g, &lo, &hi)?;
    Ok(g)
}

fn boxes_cover(res: usize, n: usize, boxes: &[BoxRegion<f64>]) -> Result<GridCover> {
    let mut g = GridCover::empty(n, res)?;
    for b in boxes {
        rasterize_box(&mut g, b.lo(), b.hi())?;
    }
    Ok(g)
}

/// Whether the torus point lies in the closed box (boxes given in lifted coordinates).
pub fn in_box(x: &[f64], b: &BoxRegion<f64>) -> bool {
    x.iter().zip(b.lo().iter().zip(b.hi())).all(|(&v, (&lo, &hi))| frac(v - lo) <= hi - lo || hi - lo >= 1.0)
}

pub fn in_rects(x: &[f64], rects: &[BoxRegion<f64>]) -> bool {
    rects.iter().any(|b| in_box(x, b))
}

/// Example 1 parameters beyond the three named ones.
#[derive(Clone, Debug)]
pub struct Example1Options {
    pub res: usize,
    pub sigma: f64,
    pub lambda: f64,
    pub u0_radius: f64,
    pub pitchfork_radius: f64,
    pub rotation_radius: f64,
    pub depth: usize,
}

impl Default for Example1Options {
    fn default() -> Self {
        Example1Options { res: 64, sigma: 2.0, lambda: 1.5, u0_radius: 0.15, pitchfork_radius: 0.1, rotation_radius: 0.1, depth: 6 }
    }
}

/// `diag(d, d)` with a pitchfork deformation at `p = (1/3, 1/3)` lowering the first eigenvalue
/// by `amplitude`, and a rotation `Df(q1) = d R_theta` at `q1 = (2/3, 2/3)`.
pub fn build_example1(degree: i64, amplitude: f64, rotation_angle: f64) -> Result<ExampleInstance> {
    build_example1_with(degree, amplitude, rotation_angle, &Example1Options::default())
}

pub fn build_example1_with(degree: i64, amplitude: f64, rotation_angle: f64, o: &Example1Options) -> Result<ExampleInstance> {
    let d = degree as f64;
    if degree < 2 {
        return Err(Error::Refused("degree must be at least 2".into()));
    }
    if !(amplitude >= 0.0) {
        return Err(Error::Refused("amplitude must be non-negative".into()));
    }
    // on the pitchfork line Df = diag(d - amplitude, d)
    if d * (d - amplitude) <= o.sigma {
        return Err(Error::Refused(format!(
            "amplitude {amplitude}: det {} at p is not above sigma {}",
            d * (d - amplitude),
            o.sigma
        )));
    }
    let p = [1.0 / 3.0, 1.0 / 3.0];
    let q = [2.0 / 3.0, 2.0 / 3.0];
    let sep = (q[0] - p[0]) - o.u0_radius - o.rotation_radius * (1.0 + 1.0 / 5f64.sqrt());
    if o.pitchfork_radius * (1.0 + 1.0 / 5f64.sqrt()) >= o.u0_radius || sep <= 0.0 {
        return Err(Error::Refused("bump supports do not fit the layout around p and q1".into()));
    }
    let mut terms = Vec::new();
    if amplitude > 0.0 {
        terms.extend(bump_pair(&p, 0, &[-amplitude, 0.0], o.pitchfork_radius));
    }
    if rotation_angle != 0.0 {
        let (c, s) = (rotation_angle.cos(), rotation_angle.sin());
        // columns of d (R - I)
        terms.extend(bump_pair(&q, 0, &[d * (c - 1.0), d * s], o.rotation_radius));
        terms.extend(bump_pair(&q, 1, &[-d * s, d * (c - 1.0)], o.rotation_radius));
    }
    let map = MapSpec::new(vec![vec![degree, 0], vec![0, degree]], terms)?;
    let vol = check_volume_expanding(&map, 1.0 / 128.0, o.sigma, false)?;
    if !vol.passed() {
        return Err(Error::Refused(format!("volume expansion guard failed (margin {})", vol.margin)));
    }
    let u0 = ball_cover(o.res, &p, o.u0_radius)?;
    let u1 = u0.dilate(1);
    let u2 = u0.dilate(2);
    let (delta0, d0) = default_delta0(&map, &u0, o.depth)?;
    let mut claims = vec![claim("volume expansion", "volume"), claim("expanding off U0", "h1"), claim("arc property", "h2"), claim("surjectivity off U1", "h3"), claim("internal radius growth", "irg")];
    if amplitude > 0.0 {
        claims.push(claim("pitchfork weakens an eigenvalue inside U0", "pitchfork"));
    }
    if rotation_angle.sin().abs() > 1e-12 {
        claims.push(claim("complex eigenvalues at q1", "rotation"));
    }
    let mut params = Map::new();
    params.insert("degree".into(), json!(degree));
    params.insert("amplitude".into(), json!(amplitude));
    params.insert("rotation_angle".into(), json!(rotation_angle));
    params.insert("p".into(), json!(p));
    params.insert("q1".into(), json!(q));
    params.insert("center_eigenvalue".into(), json!(d - amplitude));
    params.insert("u0_radius".into(), json!(o.u0_radius));
    params.insert("pitchfork_radius".into(), json!(o.pitchfork_radius));
    params.insert("rotation_radius".into(), json!(o.rotation_radius));
    params.insert("res".into(), json!(o.res));
    params.insert("d0".into(), json!(d0));
    Ok(ExampleInstance {
        name: "example1".into(),
        map,
        skew: None,
        u0,
        u1,
        u2,
        delta0,
        lambda: o.lambda,
        sigma: o.sigma,
        lambda_prime: 2.0,
        depth: o.depth,
        cones: None,
        rect_sets: Vec::new(),
        params,
        claims,
        notes: vec![
            "pitchfork: bump pair along e1 at p; rotation: bump pairs along e1 and e2 at q1".into(),
            "a single rotation point q1 on T^2".into(),
        ],
    })
}

/// Doubling times a rotation by the golden mean: volume expanding, transitive, not expanding.
pub fn build_rotation_product(res: usize) -> Result<ExampleInstance> {
    let alpha = (5f64.sqrt() - 1.0) / 2.0;
    let map = MapSpec::new(vec![vec![2, 0], vec![0, 1]], vec![Term::Trig { k: vec![0, 0], amp: alpha, phase: PI / 2.0, coord: 1 }])?;
    let mut u0 = GridCover::empty(2, res)?;
    rasterize_box(&mut u0, &[-0.05, 0.45], &[0.05, 0.55])?;
    let u1 = u0.dilate(1);
    let u2 = u0.dilate(2);
    let di = u0.internal_diameter()?;
    let delta0 = 0.5 * di;
    let mut params = Map::new();
    params.insert("alpha".into(), json!(alpha));
    params.insert("res".into(), json!(res));
    let fail = |n: &str, c: &str| Claim { name: n.into(), check: c.into(), expect: Verdict::Fail };
    Ok(ExampleInstance {
        name: "rotation_product".into(),
        map,
        skew: None,
        u0,
        u1,
        u2,
        delta0,
        lambda: 1.5,
        sigma: 1.5,
        lambda_prime: 2.0,
        depth: 6,
        cones: None,
        rect_sets: Vec::new(),
        params,
        claims: vec![
            claim("volume expansion", "volume"),
            claim("transition graph strongly connected", "strongly_connected"),
            fail("expanding on the whole torus", "h1_whole"),
            fail("arc property", "h2_long"),
        ],
        notes: vec!["U0 is a box about the column x = 0 that the rotation sweeps".into()],
    })
}

/// `diag(b, b)` with contracting bump pairs strictly inside each removed cell of the `b x b` grid.
/// `contraction` is the eigenvalue of `Df` at the removed cells' centers.
pub fn build_example2(base_degree: i64, removed_cells: &[Vec<usize>], contraction: f64) -> Result<ExampleInstance> {
    build_example2_with(base_degree, removed_cells, contraction, 6)
}

pub fn build_example2_with(base_degree: i64, removed_cells: &[Vec<usize>], contraction: f64, depth: usize) -> Result<ExampleInstance> {
    if base_degree < 3 {
        return Err(Error::Refused("base degree must be at least 3".into()));
    }
    if !(contraction > 0.0 && contraction < base_degree as f64) {
        return Err(Error::Refused("contraction must lie in (0, base degree)".into()));
    }
    let b = base_degree as usize;
    let bf = b as f64;
    for c in removed_cells {
        if c.len() != 2 || c.iter().any(|&v| v >= b) {
            return Err(Error::Refused(format!("removed cell {c:?} is not a cell of the {b} x {b} grid")));
        }
    }
    // closed cells and their first preimages must be pairwise disjoint
    for i in 0..removed_cells.len() {
        for j in i + 1..removed_cells.len() {
            let (p, q) = (&removed_cells[i], &removed_cells[j]);
            let touch = (0..2).all(|k| {
                let d = (p[k] as i64 - q[k] as i64).rem_euclid(b as i64);
                d <= 1 || d == b as i64 - 1
            });
            if touch {
                return Err(Error::Refused(format!("removed cells {p:?} and {q:?} (or their preimages) collide")));
            }
        }
    }
    let res = b.pow(depth as u32);
    let mut u0 = GridCover::empty(2, res)?;
    let mut terms = Vec::new();
    // support radius rho (1 + 1/sqrt 5) stays inside the half-cell
    let rho = 0.3 / bf;
    for c in removed_cells {
        let lo = [c[0] as f64 / bf, c[1] as f64 / bf];
        let hi = [lo[0] + 1.0 / bf, lo[1] + 1.0 / bf];
        rasterize_box(&mut u0, &lo, &hi)?;
        // the center of a removed cell is fixed only when it is a fixed point of the base
        let ctr = [lo[0] + 0.5 / bf, lo[1] + 0.5 / bf];
        let s = contraction - bf;
        terms.extend(bump_pair(&ctr, 0, &[s, 0.0], rho));
        terms.extend(bump_pair(&ctr, 1, &[0.0, s], rho));
    }
    let map = MapSpec::new(vec![vec![base_degree, 0], vec![0, base_degree]], terms)?;
    let g = 512usize;
    let min_det = (0..g * g)
        .into_par_iter()
        .map(|f| map.jacobian_matrix(&[(f % g) as f64 / g as f64, (f / g) as f64 / g as f64]).det())
        .reduce(|| f64::INFINITY, f64::min);
    if !(min_det > 0.0) {
        return Err(Error::Refused(format!("contraction makes the map singular (min det {min_det:.4})")));
    }
    let lam = compute_lambda_cover(&map, &u0, depth)?;
    let d0 = max_removed_component(&lam.cover);
    let di = if u0.is_empty() { 1.0 } else { u0.internal_diameter()? };
    let delta0 = if u0.is_empty() { 0.5 } else { 0.5 * (di + d0) };
    let mut params = Map::new();
    params.insert("base_degree".into(), json!(base_degree));
    params.insert("removed_cells".into(), json!(removed_cells));
    params.insert("contraction".into(), json!(contraction));
    params.insert("res".into(), json!(res));
    params.insert("d0".into(), json!(d0));
    params.insert("bump_radius".into(), json!(rho));
    params.insert("min_det".into(), json!(min_det));
    let mut claims = vec![claim("d0 below one", "d0"), claim("diameter-one arcs meet the cover", "arcs_meet_cover"), claim("cylinders about long arcs are separated", "separation")];
    if !removed_cells.is_empty() {
        claims.push(claim("product Cantor law", "carpet_law"));
    }
    Ok(ExampleInstance {
        name: "example2".into(),
        map,
        skew: None,
        u1: u0.dilate(1),
        u2: u0.dilate(2),
        u0,
        delta0,
        lambda: 1.5,
        sigma: 1.0,
        lambda_prime: bf,
        depth,
        cones: None,
        rect_sets: Vec::new(),
        params,
        claims,
        notes: vec![format!("contraction bumps of radius {rho} stay strictly inside the removed cells")],
    })
}

/// Fiber template `T(u) = u + (A / 2 pi)(1 - cos 2 pi u) + (B / 4 pi) sin 4 pi u` with `T(b) = 3/4`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberTemplate {
    pub a: f64,
    pub b: f64,
}

impl FiberTemplate {
    pub fn solve(b: f64, bcoef: f64) -> Result<Self> {
        if !(b > 0.0 && b < 1.0) {
            return Err(Error::Refused(format!("template endpoint {b} not in (0, 1)")));
        }
        let a = TAU * (0.75 - b - bcoef / (4.0 * PI) * (4.0 * PI * b).sin()) / (1.0 - (TAU * b).cos());
        Ok(FiberTemplate { a, b: bcoef })
    }

    pub fn g(&self, u: f64) -> f64 {
        self.a / TAU * (1.0 - (TAU * u).cos()) + self.b / (4.0 * PI) * (4.0 * PI * u).sin()
    }

    pub fn eval(&self, u: f64) -> f64 {
        u + self.g(u)
    }

    pub fn deriv(&self, u: f64) -> f64 {
        1.0 + self.a * (TAU * u).sin() + self.b * (4.0 * PI * u).cos()
    }

    fn min_deriv(&self, lo: f64, hi: f64) -> f64 {
        (0..=4096).map(|i| self.deriv(lo + (hi - lo) * i as f64 / 4096.0)).fold(f64::INFINITY, f64::min)
    }

    /// Trig terms of `s * g(sigma x + tau)` on coordinate 0 of a two-dimensional map, gated to `[lo, hi]` in `y`.
    fn fiber_terms(&self, sigma: i64, tau: f64, s: f64, lo: f64, hi: f64, ramps: (f64, f64)) -> Vec<Term<f64>> {
        let mk = |k: i64, amp: f64, phase: f64| Term::Fiber { base: 1, lo, hi, ramp_lo: ramps.0, ramp_hi: ramps.1, k: vec![k, 0], amp, phase, coord: 0 };
        vec![
            mk(0, s * self.a / TAU, PI / 2.0),
            mk(sigma, -s * self.a / TAU, TAU * tau + PI / 2.0),
            mk(2 * sigma, s * self.b / (4.0 * PI), 2.0 * TAU * tau),
        ]
    }
}

/// Example 3 parameters beyond the named ones.
#[derive(Clone, Debug)]
pub struct Example3Options {
    /// Coefficient `B` of the fiber template.
    pub template_b: f64,
    /// Base tiles `[j / N, (j + 1) / N]`; defaults spread over the circle.
    pub tiles: Option<[usize; 4]>,
    /// Cover resolution as a multiple of `N`.
    pub res_factor: usize,
    pub depth: usize,
    pub lambda: f64,
    /// Cone opening as a multiple of the critical value.
    pub kappa_factor: f64,
}

impl Default for Example3Options {
    fn default() -> Self {
        Example3Options { template_b: 0.05, tiles: None, res_factor: 4, depth: 8, lambda: 0.9, kappa_factor: 1.25 }
    }
}

/// Skew product `(x, y) -> (phi_y(x), N y)` with fiber maps `f_1..f_4` over four base tiles
/// and identity fibers between them, blended by C2 plateaus. `slopes` is the least
/// expansion required of each `f_i` on `J_i`.
pub fn build_example3(a: f64, b: f64, c: f64, d: f64, n: i64, slopes: f64) -> Result<ExampleInstance> {
    build_example3_with(a, b, c, d, n, slopes, &Example3Options::default())
}

pub fn build_example3_with(a: f64, b: f64, c: f64, d: f64, n: i64, slopes: f64, o: &Example3Options) -> Result<ExampleInstance> {
    if !(0.0 < a && a < b && b < 0.75) {
        return Err(Error::Refused("constraint 0 < a < b < 3/4 violated".into()));
    }
    if !(0.25 < c && c < d && d < 1.0) {
        return Err(Error::Refused("constraint 1/4 < c < d < 1 violated".into()));
    }
    if n < 9 {
        return Err(Error::Refused("N >= 9 is needed for four pairwise disjoint tiles of a linear base avoiding 0".into()));
    }
    if !(slopes >= 1.0) {
        return Err(Error::Refused("slopes must be at least 1".into()));
    }
    let nf = n as f64;
    let nu = n as usize;
    let tiles = o.tiles.unwrap_or_else(|| {
        let mut t = [0usize; 4];
        for (i, f) in [0.1, 0.35, 0.6, 0.85].iter().enumerate() {
            t[i] = (f * nf).round() as usize;
        }
        t
    });
    if tiles[0] < 1 || tiles[3] > nu - 2 || tiles.windows(2).any(|w| w[1] < w[0] + 2) {
        return Err(Error::Refused(format!("tiles {tiles:?} must be non-adjacent and avoid 0 and 1")));
    }
    // f1: T_b, f2: 3/4 - T(3/4 - x), f3: 1/4 + T(x - 1/4), f4: 1 - T(1 - x)
    let ends = [b, 0.75 - a, d - 0.25, 1.0 - c];
    let forms: [(i64, f64, f64); 4] = [(1, 0.0, 1.0), (-1, 0.75, -1.0), (1, -0.25, 1.0), (-1, 1.0, -1.0)];
    let mut temps = Vec::new();
    for (i, &e) in ends.iter().enumerate() {
        let t = FiberTemplate::solve(e, o.template_b)?;
        let global = t.min_deriv(0.0, 1.0);
        if !(global > 0.0) {
            return Err(Error::Refused(format!("f{} is not a diffeomorphism (min slope {global:.4})", i + 1)));
        }
        let on_j = t.min_deriv(0.0, e);
        if !(on_j > slopes && on_j > 1.0) {
            return Err(Error::Refused(format!("f{} expands J{} only by {on_j:.4}, need more than {slopes}", i + 1, i + 1)));
        }
        temps.push(t);
    }
    let bounds: Vec<(f64, f64)> = tiles.iter().map(|&j| (j as f64 / nf, (j + 1) as f64 / nf)).collect();
    let gap = |i: usize| {
        let next = bounds[(i + 1) % 4].0 + if i == 3 { 1.0 } else { 0.0 };
        next - bounds[i].1
    };
    let mut fiber_terms = Vec::new();
    for i in 0..4 {
        let ramps = (0.45 * gap((i + 3) % 4), 0.45 * gap(i));
        let (sg, tau, s) = forms[i];
        fiber_terms.extend(temps[i].fiber_terms(sg, tau, s, bounds[i].0, bounds[i].1, ramps));
    }
    let skew = SkewProductSpec { fiber_dim: 1, fiber_linear: vec![vec![1]], base_linear: vec![vec![n]], fiber_terms, base_terms: vec![] };
    let map = skew.compile()?;
    let js = [(0.0, b), (a, 0.75), (0.25, d), (c, 1.0)];
    let rect = |i: usize| BoxRegion::new(vec![js[i].0, bounds[i].0], vec![js[i].1, bounds[i].1], true);
    let set1 = vec![rect(0)?, rect(1)?];
    let set2 = vec![rect(2)?, rect(3)?];
    let res = nu * o.res_factor;
    // critical cone opening from the off-diagonal entry
    let g = 256usize;
    let crit = (0..g * g)
        .into_par_iter()
        .map(|f| {
            let x = [(f % g) as f64 / g as f64, (f / g) as f64 / g as f64];
            let j = map.jacobian_matrix(&x);
            j[(0, 1)].abs() / (nf - j[(0, 0)].abs())
        })
        .reduce(|| 0.0, f64::max);
    let kappa = (o.kappa_factor * crit).max(1e-6);
    let cones = ConeFamily::axes(2, &[0], kappa)?;
    let fixed: Vec<f64> = tiles.iter().map(|&j| j as f64 / (nf - 1.0)).collect();
    // fixed points of each fiber map, for the record
    let fps: Vec<Vec<f64>> = (0..4)
        .map(|i| {
            let (sg, tau, s) = forms[i];
            let h = |x: f64| s * temps[i].g(sg as f64 * x + tau);
            let m = 20000;
            let mut out = Vec::new();
            for k in 0..m {
                let (x0, x1) = (k as f64 / m as f64, (k + 1) as f64 / m as f64);
                if h(x0) == 0.0 || h(x0).signum() != h(x1).signum() {
                    out.push(x0);
                }
            }
            out
        })
        .collect();
    let u0 = GridCover::empty(2, res)?;
    let mut params = Map::new();
    params.insert("a".into(), json!(a));
    params.insert("b".into(), json!(b));
    params.insert("c".into(), json!(c));
    params.insert("d".into(), json!(d));
    params.insert("N".into(), json!(n));
    params.insert("slopes".into(), json!(slopes));
    params.insert("template_b".into(), json!(o.template_b));
    params.insert("template_a".into(), json!(temps.iter().map(|t| t.a).collect::<Vec<_>>()));
    params.insert("tiles".into(), json!(tiles));
    params.insert("intervals".into(), json!(bounds));
    params.insert("fixed_fibers".into(), json!(fixed));
    params.insert("fiber_fixed_points".into(), json!(fps));
    params.insert("kappa_critical".into(), json!(crit));
    params.insert("res".into(), json!(res));
    let min_slope = temps.iter().zip(ends).map(|(t, e)| t.min_deriv(0.0, e)).fold(f64::INFINITY, f64::min);
    params.insert("min_expansion_on_J".into(), json!(min_slope));
    Ok(ExampleInstance {
        name: "example3".into(),
        map,
        skew: Some(skew),
        u1: u0.clone(),
        u2: u0.clone(),
        u0,
        delta0: 0.5,
        lambda: o.lambda,
        sigma: 2.0,
        lambda_prime: nf,
        depth: o.depth,
        cones: Some(cones),
        rect_sets: vec![set1, set2],
        params,
        claims: vec![
            claim("volume expansion", "volume"),
            claim("invariant horizontal fibers", "fixed_fibers"),
            claim("overlap of R1 and R2 images", "overlap"),
            claim("cone invariance", "cone_invariance"),
            claim("domination", "domination"),
            claim("vertical unit segments meet the covers", "segments"),
            claim("central expansion on unstable discs", "central_discs"),
        ],
        notes: vec![
            "base is linear, E(y) = N y; tiles are preimage intervals of the circle".into(),
            "fibers between tiles blend to the identity through C2 plateaus".into(),
        ],
    })
}

/// A finite family of increasing maps of an interval.
pub type IfsMaps<'a> = [&'a (dyn Fn(f64) -> f64 + Sync)];

/// Whether the images `[g(lo), g(hi)]` cover `[lo, hi]`; otherwise an uncovered point.
pub fn ifs_covering(maps: &IfsMaps, lo: f64, hi: f64) -> std::result::Result<(), f64> {
    let mut ims: Vec<(f64, f64)> = maps.iter().map(|g| (g(lo), g(hi))).collect();
    ims.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut reach = lo;
    for (a, b) in ims {
        if a > reach {
            return Err(0.5 * (reach + a.min(hi)));
        }
        reach = reach.max(b);
        if reach >= hi {
            return Ok(());
        }
    }
    Err(0.5 * (reach + hi))
}

/// Orbit of `x0` under all compositions up to `depth`; pass iff every subinterval of
/// `[lo, hi)` of length `eps` holds an orbit point.
pub fn ifs_orbit_density(maps: &IfsMaps, x0: f64, depth: usize, lo: f64, hi: f64, eps: f64) -> (bool, usize) {
    let m = ((hi - lo) / eps).ceil().max(1.0) as usize;
    let mut occ = vec![false; m];
    let mut level = vec![x0];
    let mut seen = 0;
    for _ in 0..=depth {
        for &x in &level {
            if x >= lo && x < hi {
                let k = (((x - lo) / (hi - lo)) * m as f64) as usize;
                occ[k.min(m - 1)] = true;
            }
        }
        seen += level.len();
        if occ.iter().all(|&v| v) {
            break;
        }
        level = level.iter().flat_map(|&x| maps.iter().map(move |g| g(x))).collect();
        if level.len() > 5_000_000 {
            break;
        }
    }
    (occ.iter().all(|&v| v), seen)
}

/// Example 4 parameters beyond the named ones.
#[derive(Clone, Debug)]
pub struct Example4Options {
    /// `phi_0(x) = x - (c / 2 pi) sin 2 pi x`.
    pub c: f64,
    pub n: i64,
    pub res: usize,
    pub depth: usize,
}

impl Default for Example4Options {
    fn default() -> Self {
        Example4Options { c: 0.5, n: 13, res: 208, depth: 8 }
    }
}

/// Skew product on `T^1 x T^1` whose fibers over base tiles are `x -> p_j + phi_0(x - p_j) + c_i`.
pub fn build_example4(k_offsets: &[f64], r_centers: &[f64], delta: f64) -> Result<ExampleInstance> {
    build_example4_with(k_offsets, r_centers, delta, &Example4Options::default())
}

pub fn build_example4_with(k_offsets: &[f64], r_centers: &[f64], delta: f64, o: &Example4Options) -> Result<ExampleInstance> {
    if !(delta > 0.0 && delta < 0.25) {
        return Err(Error::Refused("delta must lie in (0, 1/4)".into()));
    }
    if !(o.c > 0.0 && o.c < 1.0) {
        return Err(Error::Refused("contraction parameter must lie in (0, 1)".into()));
    }
    let cc = o.c;
    let phi0 = move |x: f64| x - cc / TAU * (TAU * x).sin();
    let mut offsets = vec![0.0];
    offsets.extend_from_slice(k_offsets);
    let maps: Vec<Box<dyn Fn(f64) -> f64 + Sync>> = offsets.iter().map(|&ci| Box::new(move |x: f64| phi0(x) + ci) as Box<dyn Fn(f64) -> f64 + Sync>).collect();
    let refs: Vec<&(dyn Fn(f64) -> f64 + Sync)> = maps.iter().map(|b| b.as_ref()).collect();
    if let Err(x) = ifs_covering(&refs, -delta, delta) {
        return Err(Error::Refused(format!("IFS images do not cover the disc: {x} is uncovered")));
    }
    let nf = o.n as f64;
    let count = offsets.len() * r_centers.len();
    // tiles t = 1, 3, 5, ... hold the fixed points t / (N - 1)
    let tiles: Vec<usize> = (0..count).map(|k| 1 + 2 * k).collect();
    if tiles.last().map_or(true, |&t| t > o.n as usize - 2) {
        return Err(Error::Refused(format!("N = {} has too few disjoint fixed tiles for {count} fibers", o.n)));
    }
    let gap = 1.0 / nf;
    let mut terms = Vec::new();
    let mut rects = Vec::new();
    let mut fibers = Vec::new();
    for (j, &pj) in r_centers.iter().enumerate() {
        for (i, &ci) in offsets.iter().enumerate() {
            let t = tiles[j * offsets.len() + i];
            let (lo, hi) = (t as f64 / nf, (t + 1) as f64 / nf);
            let mk = |k: i64, amp: f64, phase: f64| Term::Fiber { base: 1, lo, hi, ramp_lo: 0.45 * gap, ramp_hi: 0.45 * gap, k: vec![k, 0], amp, phase, coord: 0 };
            terms.push(mk(1, -cc / TAU, -TAU * pj));
            if ci != 0.0 {
                terms.push(mk(0, ci, PI / 2.0));
            }
            rects.push(BoxRegion::new(vec![pj - delta, lo], vec![pj + delta, hi], true)?);
            fibers.push(json!({"offset": ci, "center": pj, "tile": [lo, hi], "fixed_point": t as f64 / (nf - 1.0)}));
        }
    }
    let skew = SkewProductSpec { fiber_dim: 1, fiber_linear: vec![vec![1]], base_linear: vec![vec![o.n]], fiber_terms: terms, base_terms: vec![] };
    let map = skew.compile()?;
    let u0 = GridCover::empty(2, o.res)?;
    let mut params = Map::new();
    params.insert("k_offsets".into(), json!(k_offsets));
    params.insert("r_centers".into(), json!(r_centers));
    params.insert("delta".into(), json!(delta));
    params.insert("c".into(), json!(cc));
    params.insert("N".into(), json!(o.n));
    params.insert("fibers".into(), json!(fibers));
    params.insert("res".into(), json!(o.res));
    Ok(ExampleInstance {
        name: "example4".into(),
        map,
        skew: Some(skew),
        u1: u0.clone(),
        u2: u0.clone(),
        u0,
        delta0: 0.5,
        lambda: 0.9,
        sigma: 2.0,
        lambda_prime: nf,
        depth: o.depth,
        cones: None,
        rect_sets: vec![rects],
        params,
        claims: vec![
            claim("IFS covering", "ifs_covering"),
            claim("IFS orbit of 0 is dense near 0", "ifs_density"),
            claim("invariant fibers over fixed points", "fixed_fibers"),
            claim("vertical unit segments meet the cover", "segments"),
        ],
        notes: vec!["built on T^1 x T^1 with explicit offsets whose covering is checked".into()],
    })
}

/// Sizes of the sampled claim checks.
#[derive(Clone, Debug)]
pub struct ClaimConfig {
    pub samples: usize,
    pub seed: u64,
    pub h2_horizon: usize,
    /// Inflate grid checks by the curvature bound.
    pub rigor: bool,
}

impl Default for ClaimConfig {
    fn default() -> Self {
        ClaimConfig { samples: 24, seed: 2024, h2_horizon: 30, rigor: false }
    }
}

/// Outcome of sampling unit segments or long arcs against a cover.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HitReport {
    pub tried: usize,
    pub hits: usize,
    pub failures: Vec<String>,
}

/// Cover of the maximal invariant set of a union of boxes at the instance resolution.
pub fn rect_cover(inst: &ExampleInstance, map: &MapSpec<f64>, set: usize, depth: usize) -> Result<LambdaCover> {
    let res = inst.u0.res();
    let allowed = boxes_cover(res, 2, &inst.rect_sets[set])?;
    compute_lambda_cover(map, &allowed.complement(), depth)
}

/// Random vertical unit segments: each must carry a point whose first `depth` iterates stay in
/// one of the rasterized box unions and whose cell lies in that union's cover. Segments are drawn through
/// random points of the boxes.
pub fn vertical_segments(inst: &ExampleInstance, map: &MapSpec<f64>, samples: usize, seed: u64, depth: usize) -> Result<HitReport> {
    let res = inst.u0.res();
    let allowed: Vec<GridCover> = inst.rect_sets.iter().map(|r| boxes_cover(res, 2, r)).collect::<Result<_>>()?;
    let covers: Vec<LambdaCover> = allowed.iter().map(|a| compute_lambda_cover(map, &a.complement(), depth)).collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<&BoxRegion<f64>> = inst.rect_sets.iter().flatten().collect();
    let starts: Vec<Vec<f64>> = (0..samples)
        .map(|_| {
            let b = all[rng.gen_range(0..all.len())];
            b.lo().iter().zip(b.hi()).map(|(l, h)| l + (h - l) * rng.gen::<f64>()).collect()
        })
        .collect();
    let cfg = ChaseConfig { horizon: depth, ..ChaseConfig::default() };
    let results: Vec<std::result::Result<(), String>> = starts
        .par_iter()
        .map(|q| {
            let mut why = Vec::new();
            for (s, rects) in allowed.iter().enumerate() {
                let pieces = column_pieces(rects, q[0]);
                if pieces.is_empty() {
                    why.push(format!("set {s}: column misses the boxes"));
                    continue;
                }
                let found = pieces.iter().find_map(|&(a, b)| {
                    let seg = ArcPolyline::segment(vec![q[0], a], vec![q[0], b]).ok()?;
                    match chase(map, &seg, |x, _| !rects.contains_point(x), &cfg) {
                        ChaseOutcome::Found(w) if w.clean => Some(w),
                        _ => None,
                    }
                });
                match found {
                    Some(w) => {
                        if !covers[s].cover.contains_point(&w.orbit[0]) {
                            why.push(format!("set {s}: witness cell outside the cover"));
                            continue;
                        }
                        // direct forward iteration
                        let mut x = w.orbit[0].clone();
                        let mut ok = rects.contains_point(&x);
                        for _ in 0..depth {
                            x = map.eval_raw(&x);
                            ok &= rects.contains_point(&x);
                        }
                        if ok {
                            return Ok(());
                        }
                        why.push(format!("set {s}: direct iteration leaves the boxes"));
                    }
                    None => why.push(format!("set {s}: every point of the {} pieces leaves the boxes", pieces.len())),
                }
            }
            Err(format!("segment at x = {:.6}: {}", q[0], why.join("; ")))
        })
        .collect();
    let failures: Vec<String> = results.iter().filter_map(|r| r.clone().err()).collect();
    Ok(HitReport { tried: samples, hits: samples - failures.len(), failures })
}

/// Maximal runs `[a, b]` of the vertical circle through `x` lying in cells of `g`, pulled in
/// slightly so their ends fall inside the cells.
fn column_pieces(g: &GridCover, x: f64) -> Vec<(f64, f64)> {
    let res = g.res();
    let col = ((frac(x) * res as f64) as usize).min(res - 1);
    let inside: Vec<bool> = (0..res).map(|row| g.contains(&[col, row])).collect();
    let r = res as f64;
    let eps = 1e-9 / r;
    let mut out = Vec::new();
    let mut row = 0;
    while row < res {
        if !inside[row] {
            row += 1;
            continue;
        }
        let start = row;
        while row < res && inside[row] {
            row += 1;
        }
        out.push((start as f64 / r + eps, row as f64 / r - eps));
    }
    out
}

fn outcome_label(o: &ChaseOutcome) -> String {
    match o {
        ChaseOutcome::Found(_) => "witness not clean".into(),
        ChaseOutcome::Exhausted { deepest, .. } => format!("every point leaves by step {}", deepest + 1),
        ChaseOutcome::Budget { deepest, .. } => format!("search budget exhausted at depth {deepest}"),
        ChaseOutcome::PullbackFailed { depth } => format!("pullback failed at depth {depth}"),
    }
}

/// Random straight arcs of diameter above one in `U0^c`: each must hold a point whose first
/// `depth` iterates avoid `U0` (checked by direct iteration) and whose cell is in the cover.
pub fn long_arcs_meet_cover(inst: &ExampleInstance, map: &MapSpec<f64>, samples: usize, seed: u64, depth: usize) -> Result<(HitReport, Vec<ArcPolyline<f64>>)> {
    let lam = compute_lambda_cover(map, &inst.u0, depth)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arcs: Vec<ArcPolyline<f64>> = (0..samples).filter_map(|_| sample_arc(&mut rng, &inst.u0, 1.0, 1e-3)).collect();
    let cfg = ChaseConfig { horizon: depth, ..ChaseConfig::default() };
    let u0 = &inst.u0;
    let failures: Vec<String> = arcs
        .par_iter()
        .enumerate()
        .filter_map(|(k, arc)| match chase(map, arc, |x, _| u0.contains_point(x), &cfg) {
            ChaseOutcome::Found(w) if w.clean => {
                let mut x = w.orbit[0].clone();
                let mut ok = !u0.contains_point(&x);
                for _ in 0..depth {
                    x = map.eval_raw(&x);
                    ok &= !u0.contains_point(&x);
                }
                if !ok {
                    Some(format!("arc {k}: direct iteration enters U0"))
                } else if !lam.cover.contains_point(&w.orbit[0]) {
                    Some(format!("arc {k}: witness cell outside the cover"))
                } else {
                    None
                }
            }
            other => Some(format!("arc {k}: {}", outcome_label(&other))),
        })
        .collect();
    let mut failures = failures;
    if arcs.len() < samples {
        failures.push(format!("only {} of {samples} arcs could be sampled in U0^c", arcs.len()));
    }
    Ok((HitReport { tried: samples, hits: arcs.len().saturating_sub(failures.len()), failures }, arcs))
}

/// Separation checks on cylinders of radius `radius` about sampled long arcs of `U0^c`, against
/// the cover computed on `U0` refined by `refine`. Returns the arcs used, so the same cylinders
/// can be rechecked for another map with [`separation_on`].
pub fn separation_suite(
    inst: &ExampleInstance,
    map: &MapSpec<f64>,
    count: usize,
    seed: u64,
    radius: f64,
    refine: usize,
) -> Result<(Vec<ArcPolyline<f64>>, Vec<Certificate>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arcs: Vec<ArcPolyline<f64>> = (0..count).filter_map(|_| sample_arc(&mut rng, &inst.u0, 1.0, 1e-3)).collect();
    let certs = separation_on(inst, map, &arcs, radius, refine)?;
    Ok((arcs, certs))
}

/// Separation checks of `map`'s cover on cylinders about the given arcs.
pub fn separation_on(inst: &ExampleInstance, map: &MapSpec<f64>, arcs: &[ArcPolyline<f64>], radius: f64, refine: usize) -> Result<Vec<Certificate>> {
    let lam = compute_lambda_cover(map, &inst.u0.refine(refine)?, inst.depth)?;
    check_cylinders(&lam, arcs, radius)
}

fn check_cylinders(lam: &LambdaCover, arcs: &[ArcPolyline<f64>], radius: f64) -> Result<Vec<Certificate>> {
    arcs.par_iter()
        .map(|arc| separation_check(lam, &CylinderSpec { arc: arc.clone(), radius, margin: 0.0 }).map(|r| r.0))
        .collect()
}

fn summary(check: &str, hits: &HitReport, res: usize) -> Certificate {
    let margin = if hits.failures.is_empty() { 1.0 } else { -(hits.failures.len() as f64) / hits.tried.max(1) as f64 };
    let mut c = Certificate::from_margin(check, margin, res).param("tried", hits.tried).param("hits", hits.hits);
    if let Some(f) = hits.failures.first() {
        c = c.note(f.clone());
    }
    c
}

/// Runs the checker bound to `claim` on the instance, or on `map` when given (same regions).
pub fn verify_claim(inst: &ExampleInstance, claim: &Claim, map: Option<&MapSpec<f64>>, cfg: &ClaimConfig) -> Result<Certificate> {
    let t0 = Instant::now();
    let f = map.unwrap_or(&inst.map);
    let res = inst.u0.res();
    let cert = match claim.check.as_str() {
        "volume" => check_volume_expanding(f, 1.0 / 128.0, inst.sigma, cfg.rigor)?,
        "h1" => check_expanding_on(f, &inst.u0, inst.lambda, cfg.rigor)?,
        "h1_whole" => check_expanding_on(f, &GridCover::empty(f.dim(), res)?, inst.lambda, cfg.rigor)?,
        "h2" | "h2_long" => {
            let horizon = if claim.check == "h2_long" { 1000 } else { cfg.h2_horizon };
            let opts = H2Options { horizon, samples: cfg.samples, seed: cfg.seed, ..H2Options::default() };
            check_h2_arc_property(f, &inst.u0, &inst.u1, inst.delta0, &opts)?
        }
        "h3" => check_h3_surjectivity_off_u1(f, &inst.u1)?,
        "strongly_connected" => strongly_connected(&build_transition_graph(f, res)?),
        "irg" => {
            let lam = compute_lambda_cover(f, &inst.u1, inst.depth)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut done = 0;
            let mut first_fail = None;
            let runs = cfg.samples.min(8).max(1);
            for _ in 0..runs {
                let lo: Vec<f64> = (0..2).map(|_| rng.gen::<f64>()).collect();
                let hi: Vec<f64> = lo.iter().map(|v| v + 1.0 / 32.0).collect();
                let rep = irg_pipeline(f, &BoxRegion::new(lo, hi, false)?, &inst.u1, &inst.u2, &lam, inst.delta0, inst.lambda_prime, &IrgOptions::default())?;
                if rep.complete() {
                    done += 1;
                } else if first_fail.is_none() {
                    first_fail = rep.failed_stage.clone();
                }
            }
            let mut c = Certificate::from_margin("irg", if done == runs { 1.0 } else { done as f64 / runs as f64 - 1.0 }, res)
                .param("runs", runs)
                .param("complete", done);
            if let Some(s) = first_fail {
                c = c.note(s);
            }
            c
        }
        "pitchfork" => {
            let p: Vec<f64> = serde_json::from_value(inst.params["p"].clone()).map_err(|e| Error::InvalidMap(e.to_string()))?;
            let j = f.jacobian_matrix(&p);
            let ev = crate::linalg::sym_eigenvalues(&j.transpose().mul(&j)).into_iter().fold(f64::INFINITY, f64::min).sqrt();
            let det = j.det().abs();
            let margin = (1.0 - ev).min(det - inst.sigma);
            Certificate::from_margin("pitchfork", margin, res).param("min_norm_at_p", ev).param("det_at_p", det)
        }
        "rotation" => {
            let q: Vec<f64> = serde_json::from_value(inst.params["q1"].clone()).map_err(|e| Error::InvalidMap(e.to_string()))?;
            let j = f.jacobian_matrix(&q);
            let tr = j[(0, 0)] + j[(1, 1)];
            let disc = tr * tr - 4.0 * j.det();
            Certificate::from_margin("rotation", -disc, res).param("discriminant", disc).param("trace", tr)
        }
        "d0" => {
            let lam = compute_lambda_cover(f, &inst.u0, inst.depth)?;
            let d0 = max_removed_component(&lam.cover);
            Certificate::from_margin("d0", 1.0 - d0, res).param("d0", d0)
        }
        "carpet_law" => {
            let lam = compute_lambda_cover(f, &inst.u0, inst.depth)?;
            let b = inst.params["base_degree"].as_i64().unwrap_or(3) as f64;
            let k = inst.params["removed_cells"].as_array().map_or(0, |v| v.len()) as f64;
            let total = (res * res) as f64;
            // L_i holds the points surviving i steps: (1 - k / b^2)^(i + 1) of the cells while resolvable
            let resolvable = ((res as f64).ln() / b.ln()).round() as usize;
            let worst = lam.levels.iter().take(resolvable).enumerate().map(|(i, &l)| (l as f64 - total * ((b * b - k) / (b * b)).powi(i as i32 + 1)).abs()).fold(0.0, f64::max);
            Certificate::from_margin("carpet_law", 0.5 - worst, res).param("levels", &lam.levels).param("max_deviation_cells", worst)
        }
        "arcs_meet_cover" => summary("arcs_meet_cover", &long_arcs_meet_cover(inst, f, cfg.samples, cfg.seed, inst.depth)?.0, res),
        "separation" => {
            let certs = separation_suite(inst, f, cfg.samples.min(20), cfg.seed, 4.0 / res as f64, 1)?.1;
            let v = Certificate::worst(certs.iter().map(|c| c.verdict));
            let passed = certs.iter().filter(|c| c.passed()).count();
            let mut c = Certificate::from_margin("separation_suite", if v == Verdict::Pass { 1.0 } else { passed as f64 / certs.len().max(1) as f64 - 1.0 }, res)
                .param("cylinders", certs.len())
                .param("passed", passed);
            c.verdict = v;
            c
        }
        "fixed_fibers" => {
            let fixed: Vec<f64> = match inst.params.get("fixed_fibers") {
                Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::InvalidMap(e.to_string()))?,
                None => inst.params["fibers"].as_array().map_or(vec![], |a| a.iter().filter_map(|v| v["fixed_point"].as_f64()).collect()),
            };
            let mut worst: f64 = 0.0;
            for &c in &fixed {
                for i in 0..64 {
                    let y = f.eval_raw(&[i as f64 / 64.0, c]);
                    worst = worst.max(crate::torus::circle_dist(y[1], c));
                }
            }
            Certificate::from_margin("fixed_fibers", 1e-9 - worst, res).param("max_drift", worst).param("fibers", fixed.len())
        }
        "overlap" => {
            // Phi(R1) = Phi(R2) = [0, 3/4] x [0, 1]: endpoints and monotonicity over the tiles
            let iv: Vec<(f64, f64)> = serde_json::from_value(inst.params["intervals"].clone()).map_err(|e| Error::InvalidMap(e.to_string()))?;
            let a = inst.params["a"].as_f64().unwrap_or(0.0);
            let b = inst.params["b"].as_f64().unwrap_or(0.0);
            let mut worst: f64 = 0.0;
            for (i, (jlo, jhi)) in [(0.0, b), (a, 0.75)].into_iter().enumerate() {
                let (ylo, yhi) = iv[i];
                for k in 0..=16 {
                    let y = ylo + (yhi - ylo) * k as f64 / 16.0;
                    let lo = f.eval_lift_raw(&[jlo, y])[0];
                    let hi = f.eval_lift_raw(&[jhi, y])[0];
                    worst = worst.max((lo - 0.0).abs()).max((hi - 0.75).abs());
                }
                let e0 = f.eval_lift_raw(&[jlo, ylo])[1];
                let e1 = f.eval_lift_raw(&[jlo, yhi])[1];
                worst = worst.max(((e1 - e0) - 1.0).abs());
            }
            Certificate::from_margin("overlap", 1e-9 - worst, res).param("max_endpoint_error", worst)
        }
        "cone_invariance" => check_cone_invariance(f, inst.cones.as_ref().ok_or_else(|| Error::Precondition("no cone family".into()))?, 1.0 / 256.0)?,
        "domination" => check_domination(f, inst.cones.as_ref().ok_or_else(|| Error::Precondition("no cone family".into()))?, inst.lambda, 1.0 / 256.0)?,
        "central_discs" => {
            let lambda0 = 1.0 + 0.5 * (inst.params["min_expansion_on_J"].as_f64().unwrap_or(1.02) - 1.0);
            let opts = DiscOptions { delta0: 0.99, lambda0, k0: 0, horizon: inst.depth, samples: cfg.samples, seed: cfg.seed, cover_res: res.min(128), cover_depth: 3 };
            check_disc_hypothesis(f, inst.cones.as_ref().ok_or_else(|| Error::Precondition("no cone family".into()))?, &opts)?
        }
        "segments" => summary("segments", &vertical_segments(inst, f, cfg.samples, cfg.seed, inst.depth)?, res),
        "ifs_covering" | "ifs_density" => {
            let cc = inst.params["c"].as_f64().unwrap_or(0.5);
            let delta = inst.params["delta"].as_f64().unwrap_or(0.05);
            let mut offs = vec![0.0];
            offs.extend(inst.params["k_offsets"].as_array().map_or(vec![], |a| a.iter().filter_map(|v| v.as_f64()).collect()));
            let maps: Vec<Box<dyn Fn(f64) -> f64 + Sync>> = offs.iter().map(|&ci| Box::new(move |x: f64| x - cc / TAU * (TAU * x).sin() + ci) as Box<dyn Fn(f64) -> f64 + Sync>).collect();
            let refs: Vec<&(dyn Fn(f64) -> f64 + Sync)> = maps.iter().map(|b| b.as_ref()).collect();
            if claim.check == "ifs_covering" {
                match ifs_covering(&refs, -delta, delta) {
                    Ok(()) => Certificate::from_margin("ifs_covering", 1.0, res),
                    Err(x) => Certificate::from_margin("ifs_covering", -1.0, res).param("uncovered", x),
                }
            } else {
                let (ok, pts) = ifs_orbit_density(&refs, 0.0, 12, -delta, delta, delta / 20.0);
                Certificate::from_margin("ifs_density", if ok { 1.0 } else { -1.0 }, res).param("orbit_points", pts).param("eps", delta / 20.0)
            }
        }
        other => return Err(Error::Precondition(format!("unknown claim checker '{other}'"))),
    };
    Ok(cert.param("claim", &claim.name).timed(t0))
}

/// Every bound claim with its certificate.
pub fn verify_claims(inst: &ExampleInstance, cfg: &ClaimConfig) -> Result<Vec<(Claim, Certificate)>> {
    inst.claims.iter().map(|c| verify_claim(inst, c, None, cfg).map(|r| (c.clone(), r))).collect()
}

/// Random trig perturbation with C1 size exactly `norm` (sum of term bounds).
pub fn random_perturbation(map: &MapSpec<f64>, norm: f64, seed: u64, terms: usize) -> Result<MapSpec<f64>> {
    let n = map.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<(Vec<i64>, f64, usize, f64)> = (0..terms)
        .map(|_| {
            let k: Vec<i64> = (0..n).map(|_| rng.gen_range(-2..=2)).collect();
            let w: f64 = rng.gen_range(0.2..1.0);
            (k, rng.gen_range(0.0..TAU), rng.gen_range(0..n), w)
        })
        .collect();
    let weight: f64 = raw.iter().map(|(k, _, _, w)| w * (TAU * k.iter().map(|v| v.abs() as f64).sum::<f64>()).max(1.0)).sum();
    let extra = raw.into_iter().map(|(k, phase, coord, w)| Term::Trig { k, amp: norm * w / weight, phase, coord }).collect();
    map.with_terms(extra)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_pair_sets_derivative() {
        let c = [0.3, 0.6];
        let f = MapSpec::new(vec![vec![4, 0], vec![0, 4]], bump_pair(&c, 1, &[0.7, -1.1], 0.1)).unwrap();
        let j = f.jacobian_matrix(&c);
        assert!((j[(0, 1)] - 0.7).abs() < 1e-12 && (j[(1, 1)] - (4.0 - 1.1)).abs() < 1e-12);
        assert!((j[(0, 0)] - 4.0).abs() < 1e-12 && j[(1, 0)].abs() < 1e-12);
        let y = f.eval_lift_raw(&c);
        assert!((y[0] - 1.2).abs() < 1e-12 && (y[1] - 2.4).abs() < 1e-12);
    }

    #[test]
    fn example1_amplitude_zero_is_linear() {
        let e = build_example1(4, 0.0, 0.0).unwrap();
        assert!(e.map.terms().is_empty());
        assert!(build_example1(4, 3.9, 0.0).is_err());
    }

    #[test]
    fn example1_eigen_structure() {
        let e = build_example1(4, 3.2, PI / 4.0).unwrap();
        let j = e.map.jacobian_matrix(&[1.0 / 3.0, 1.0 / 3.0]);
        assert!((j[(0, 0)] - 0.8).abs() < 1e-12 && (j.det() - 3.2).abs() < 1e-12);
        let q = e.map.jacobian_matrix(&[2.0 / 3.0, 2.0 / 3.0]);
        let r = 4.0 / 2f64.sqrt();
        assert!((q[(0, 0)] - r).abs() < 1e-12 && (q[(1, 0)] - r).abs() < 1e-12 && (q[(0, 1)] + r).abs() < 1e-12);
    }

    #[test]
    fn template_endpoints() {
        let t = FiberTemplate::solve(0.5, 0.05).unwrap();
        assert!(t.eval(0.0).abs() < 1e-15 && (t.eval(0.5) - 0.75).abs() < 1e-12 && (t.eval(1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ifs_examples() {
        let h0 = |x: f64| x / 2.0;
        let h1 = |x: f64| x / 2.0 + 0.5;
        let maps: [&(dyn Fn(f64) -> f64 + Sync); 2] = [&h0, &h1];
        assert!(ifs_covering(&maps, 0.0, 1.0).is_ok());
        let (dense, _) = ifs_orbit_density(&maps, 0.0, 10, 0.0, 1.0, 1.0 / 512.0);
        assert!(dense);
        let one: [&(dyn Fn(f64) -> f64 + Sync); 1] = [&h0];
        assert!(ifs_covering(&one, 0.0, 1.0).is_err());
        assert!(build_example4(&[], &[0.25, 0.75], 0.05).is_err());
    }

    #[test]
    fn example2_refuses_collisions() {
        assert!(build_example2_with(3, &[vec![1, 1], vec![1, 2]], 0.5, 2).is_err());
        let e = build_example2_with(3, &[], 0.5, 2).unwrap();
        assert!(e.map.terms().is_empty());
    }
}
