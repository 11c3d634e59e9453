//! Transition graphs, preimage density, the internal-radius-growth pipeline and
//! horizontal separation of cylinders by a cover.

use crate::arcs::{chase, ChaseConfig, ChaseOutcome};
use crate::certificate::{Certificate, Verdict};
use crate::error::{Error, Result};
use crate::map::MapSpec;
use crate::real::frac;
use crate::region::{enclose_cell, GridCover, LambdaCover};
use crate::torus::{diameter, euclid, ArcPolyline, BoxRegion, Shape};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::io::Write;
use std::time::Instant;

/// Cell graph with an edge `c -> c'` whenever the image enclosure of `c` meets `c'`.
#[derive(Clone, Debug)]
pub struct TransitionGraph {
    pub dim: usize,
    pub res: usize,
    pub adjacency: Vec<Vec<u32>>,
}

pub fn build_transition_graph(map: &MapSpec<f64>, res: usize) -> Result<TransitionGraph> {
    if res < 2 {
        return Err(Error::Precondition("resolution must be at least 2".into()));
    }
    let grid = GridCover::empty(map.dim(), res)?;
    let adjacency: Vec<Vec<u32>> = (0..grid.total())
        .into_par_iter()
        .map(|f| {
            let mut v: Vec<u32> = enclose_cell(map, res, &grid.unflat(f)).cells(res).into_iter().map(|c| c as u32).collect();
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect();
    Ok(TransitionGraph { dim: map.dim(), res, adjacency })
}

impl TransitionGraph {
    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(|a| a.len()).sum()
    }

    /// Writes `from,to` lines with a header.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "from,to")?;
        for (i, adj) in self.adjacency.iter().enumerate() {
            for j in adj {
                writeln!(w, "{i},{j}")?;
            }
        }
        Ok(())
    }

    /// Sizes of the strongly connected components, largest first.
    pub fn scc_sizes(&self) -> Vec<usize> {
        let mut g = DiGraph::<(), ()>::with_capacity(self.adjacency.len(), self.edge_count());
        let nodes: Vec<_> = (0..self.adjacency.len()).map(|_| g.add_node(())).collect();
        for (i, adj) in self.adjacency.iter().enumerate() {
            for &j in adj {
                g.add_edge(nodes[i], nodes[j as usize], ());
            }
        }
        let mut sizes: Vec<usize> = tarjan_scc(&g).iter().map(|c| c.len()).collect();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        sizes
    }

    /// Whether some path leads from `a` to `b`.
    pub fn reaches(&self, a: usize, b: usize) -> bool {
        let mut seen = vec![false; self.adjacency.len()];
        let mut q = VecDeque::from([a]);
        seen[a] = true;
        while let Some(c) = q.pop_front() {
            if c == b {
                return true;
            }
            for &j in &self.adjacency[c] {
                if !seen[j as usize] {
                    seen[j as usize] = true;
                    q.push_back(j as usize);
                }
            }
        }
        false
    }
}

/// Strong connectivity of the graph: evidence of transitivity, never proof.
pub fn strongly_connected(graph: &TransitionGraph) -> Certificate {
    let t0 = Instant::now();
    let sizes = graph.scc_sizes();
    let total = graph.adjacency.len();
    let largest = sizes.first().copied().unwrap_or(0);
    let min_out = graph.adjacency.iter().map(|a| a.len()).min().unwrap_or(0);
    let margin = if sizes.len() == 1 { 1.0 } else { largest as f64 / total as f64 - 1.0 };
    let mut c = Certificate::from_margin("strongly_connected", margin, graph.res)
        .param("components", sizes.len())
        .param("largest_component", largest)
        .param("cells", total)
        .param("edges", graph.edge_count())
        .param("min_out_degree", min_out)
        .note("strong connectivity of the outer transition graph is evidence of transitivity, not proof");
    if min_out == 0 {
        c = c.fail("some cell has no image");
    }
    c.timed(t0)
}

/// Guard on the number of preimage nodes explored.
pub const PREORBIT_CAP: f64 = 1e8;

/// Backward orbit of `x` to `depth`; pass iff every cube of side at most `eps` holds a preimage.
pub fn preorbit_density(map: &MapSpec<f64>, x: &[f64], depth: usize, eps: f64) -> Result<Certificate> {
    let t0 = Instant::now();
    if !(eps > 0.0) {
        return Err(Error::Precondition("eps must be positive".into()));
    }
    if x.len() != map.dim() {
        return Err(Error::DimensionMismatch { expected: map.dim(), got: x.len() });
    }
    let d = map.degree() as f64;
    let nodes: f64 = (0..=depth).map(|k| d.powi(k as i32)).sum();
    let m = (1.0 / eps - 1e-9).ceil().max(1.0) as usize;
    let cubes = (m as f64).powi(map.dim() as i32);
    if nodes > PREORBIT_CAP || cubes > PREORBIT_CAP {
        return Ok(Certificate::inconclusive("preorbit_density", 0.0, m, "preimage tree exceeds the node cap")
            .param("depth", depth)
            .param("nodes", nodes)
            .timed(t0));
    }
    let grid = GridCover::empty(map.dim(), m)?;
    let mut occ = vec![false; grid.total()];
    let mut filled = 0usize;
    let mut n0: Option<usize> = None;
    let mut level: Vec<Vec<f64>> = vec![x.iter().map(|&v| frac(v)).collect()];
    for k in 0..=depth {
        for p in &level {
            let c = grid.cell_of(p);
            if !occ[c] {
                occ[c] = true;
                filled += 1;
            }
        }
        if filled == occ.len() && n0.is_none() {
            n0 = Some(k);
        }
        if k == depth {
            break;
        }
        level = level
            .par_iter()
            .map(|p| map.preimages_lift(p, 1e-13).map(|v| v.into_iter().map(|(q, _)| q.into_iter().map(frac).collect()).collect()))
            .collect::<Result<Vec<Vec<Vec<f64>>>>>()?
            .into_iter()
            .flatten()
            .collect();
    }
    let frac_filled = filled as f64 / occ.len() as f64;
    let margin = if filled == occ.len() { 1.0 } else { frac_filled - 1.0 };
    let mut c = Certificate::from_margin("preorbit_density", margin, m)
        .param("depth", depth)
        .param("eps", eps)
        .param("cubes", occ.len())
        .param("cubes_filled", filled)
        .param("nodes", nodes);
    c = match n0 {
        Some(v) => c.param("n0", v),
        None => c.param("n0", serde_json::Value::Null),
    };
    Ok(c.timed(t0))
}

/// Options for the radius-growth pipeline.
#[derive(Clone, Debug)]
pub struct IrgOptions {
    /// Added to `ceil(2 sqrt(n))`.
    pub slack: f64,
    pub max_steps: usize,
    pub max_seg: f64,
    pub horizon: usize,
    /// Ball radius `R` of the growth stage.
    pub radius: f64,
    pub eps: f64,
    /// Boundary samples per face in the ball pullback check.
    pub boundary_samples: usize,
}

impl Default for IrgOptions {
    fn default() -> Self {
        IrgOptions { slack: 0.0, max_steps: 40, max_seg: 1e-3, horizon: 50, radius: 0.25, eps: 0.01, boundary_samples: 16 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IrgReport {
    pub start: BoxRegion<f64>,
    /// Target lifted diameter `m`.
    pub m: f64,
    pub m0: Option<usize>,
    pub diameters: Vec<f64>,
    /// `(coordinate, integer translate)` of the crossed slab.
    pub slab: Option<(usize, i64)>,
    pub arc: Option<ArcPolyline<f64>>,
    pub arc_diameter: Option<f64>,
    pub witness: Option<Vec<f64>>,
    pub witness_in_cover: Option<bool>,
    /// Steps `N` with `lambda'^-N R < eps / 2`.
    pub n_steps: Option<usize>,
    pub radius: f64,
    pub eps: f64,
    pub ball_check: Option<bool>,
    pub stages_completed: usize,
    pub failed_stage: Option<String>,
    pub notes: Vec<String>,
}

impl IrgReport {
    pub fn complete(&self) -> bool {
        self.stages_completed == 5
    }
}

/// Smallest `N` with `lambda^-N * r < eps / 2`.
pub fn ball_growth_steps(lambda: f64, r: f64, eps: f64) -> Result<usize> {
    if !(lambda > 1.0) || !(r > 0.0) || !(eps > 0.0) {
        return Err(Error::Precondition("need lambda > 1, R > 0, eps > 0".into()));
    }
    let mut n = 0usize;
    while lambda.powi(-(n as i32)) * r >= eps / 2.0 {
        n += 1;
    }
    Ok(n)
}

/// Lifted boundary loop of a box: the interval itself in 1D, the rectangle in the first two axes otherwise.
fn boundary_loop(v: &BoxRegion<f64>) -> Vec<Vec<f64>> {
    let (lo, hi) = (v.lo(), v.hi());
    if v.dim() == 1 {
        return vec![vec![lo[0]], vec![hi[0]]];
    }
    let c = v.center();
    let corner = |a: f64, b: f64| {
        let mut p = c.clone();
        p[0] = a;
        p[1] = b;
        p
    };
    vec![corner(lo[0], lo[1]), corner(hi[0], lo[1]), corner(hi[0], hi[1]), corner(lo[0], hi[1]), corner(lo[0], lo[1])]
}

/// Iterates a lifted polyline, refining by recomputing inserted parameters from the start curve.
struct GrowingCurve<'a> {
    map: &'a MapSpec<f64>,
    base: Vec<Vec<f64>>,
    params: Vec<f64>,
    pts: Vec<Vec<f64>>,
    steps: usize,
}

impl<'a> GrowingCurve<'a> {
    fn new(map: &'a MapSpec<f64>, base: Vec<Vec<f64>>, max_seg: f64) -> Self {
        let segs = base.len() - 1;
        let mut params = Vec::new();
        let mut pts = Vec::new();
        for s in 0..segs {
            let d = crate::torus::lift_dist(&base[s], &base[s + 1]);
            let k = ((d / max_seg).ceil() as usize).max(1);
            for i in 0..k {
                params.push(s as f64 + i as f64 / k as f64);
            }
        }
        params.push(segs as f64);
        let mut c = GrowingCurve { map, base, params: Vec::new(), pts: Vec::new(), steps: 0 };
        for &t in &params {
            pts.push(c.point_at(t));
        }
        c.params = params;
        c.pts = pts;
        c
    }

    fn point_at(&self, t: f64) -> Vec<f64> {
        let s = (t.floor() as usize).min(self.base.len() - 2);
        let u = t - s as f64;
        let mut p: Vec<f64> = self.base[s].iter().zip(&self.base[s + 1]).map(|(a, b)| a + (b - a) * u).collect();
        for _ in 0..self.steps {
            p = self.map.eval_lift_raw(&p);
        }
        p
    }

    fn step(&mut self, max_seg: f64) {
        self.steps += 1;
        self.pts = self.pts.par_iter().map(|p| self.map.eval_lift_raw(p)).collect();
        let mut params = vec![self.params[0]];
        let mut pts = vec![self.pts[0].clone()];
        for i in 1..self.params.len() {
            self.refine(self.params[i - 1], self.params[i], &self.pts[i - 1].clone(), &self.pts[i].clone(), max_seg, 0, &mut params, &mut pts);
            params.push(self.params[i]);
            pts.push(self.pts[i].clone());
        }
        self.params = params;
        self.pts = pts;
    }

    #[allow(clippy::too_many_arguments)]
    fn refine(&self, ta: f64, tb: f64, pa: &[f64], pb: &[f64], max_seg: f64, lvl: usize, params: &mut Vec<f64>, pts: &mut Vec<Vec<f64>>) {
        if lvl > 40 || crate::torus::lift_dist(pa, pb) <= max_seg {
            return;
        }
        let tm = 0.5 * (ta + tb);
        let pm = self.point_at(tm);
        self.refine(ta, tm, pa, &pm, max_seg, lvl + 1, params, pts);
        params.push(tm);
        pts.push(pm.clone());
        self.refine(tm, tb, &pm, pb, max_seg, lvl + 1, params, pts);
    }

    fn diameter(&self) -> f64 {
        let n = self.pts[0].len();
        (0..n)
            .map(|i| {
                let (mn, mx) = self.pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p[i]), b.max(p[i])));
                mx - mn
            })
            .fold(0.0, f64::max)
    }
}

/// Slab bounds from the lifted projections of a region: `(k_minus, k_plus)` per axis.
pub fn slab_bounds(region: &GridCover) -> Vec<(f64, f64)> {
    if region.is_empty() {
        return vec![(0.0, 0.0); region.dim()];
    }
    let boxes = region.lifted_boxes();
    (0..region.dim())
        .map(|i| {
            let lo = boxes.iter().map(|b| b.lo()[i]).fold(f64::INFINITY, f64::min);
            let hi = boxes.iter().map(|b| b.hi()[i]).fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        })
        .collect()
}

/// First complete crossing of a slab `[k+ + j, k- + j + 1]` in any coordinate along the polyline.
/// Returns the coordinate, `j` and the cut sub-arc. Ties go to the lowest coordinate.
pub fn extract_slab_crossing(pts: &[Vec<f64>], bounds: &[(f64, f64)]) -> Option<(usize, i64, Vec<Vec<f64>>)> {
    let n = bounds.len();
    // per coordinate: (slab index, entry side, entry segment, entry point)
    let mut state: Vec<Option<(i64, bool, usize, Vec<f64>)>> = vec![None; n];
    for s in 0..pts.len().saturating_sub(1) {
        let (a, b) = (&pts[s], &pts[s + 1]);
        let mut done: Option<(usize, i64, Vec<Vec<f64>>)> = None;
        for i in 0..n {
            let (km, kp) = bounds[i];
            let w = 1.0 - (kp - km);
            if w <= 0.0 {
                continue;
            }
            // slab coordinate: u in [j, j + w] is inside slab j
            let ua = a[i] - kp;
            let ub = b[i] - kp;
            if ua == ub {
                continue;
            }
            // boundary crossings within this segment, in order of the segment parameter
            let (lo, hi) = (ua.min(ub), ua.max(ub));
            let mut events: Vec<(f64, i64, bool)> = Vec::new();
            let j0 = (lo - w).floor() as i64 - 1;
            let j1 = hi.ceil() as i64 + 1;
            for j in j0..=j1 {
                for (edge, is_low) in [(j as f64, true), (j as f64 + w, false)] {
                    if edge >= lo && edge <= hi {
                        events.push(((edge - ua) / (ub - ua), j, is_low));
                    }
                }
            }
            events.sort_by(|x, y| x.0.total_cmp(&y.0));
            for (t, j, is_low) in events {
                let p: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + (y - x) * t).collect();
                let moving_up = ub > ua;
                // entering slab j through its low edge while moving up, or high edge while moving down
                let entering = (is_low && moving_up) || (!is_low && !moving_up);
                if entering {
                    state[i] = Some((j, is_low, s, p));
                } else if let Some((sj, side, seg, entry)) = state[i].take() {
                    if sj == j && side != is_low {
                        let mut arc = vec![entry];
                        for q in pts.iter().take(s + 1).skip(seg + 1) {
                            arc.push(q.clone());
                        }
                        arc.push(p);
                        arc.dedup();
                        if done.as_ref().map_or(true, |d| d.0 > i) {
                            done = Some((i, j, arc));
                        }
                        break;
                    }
                }
            }
        }
        if done.is_some() {
            return done;
        }
    }
    None
}

/// The radius-growth pipeline: (a) grow the boundary of `v` until its lifted diameter exceeds
/// `m`; (b) cut a slab-crossing sub-arc; (c) check it against `delta0` and `U2`; (d) find a
/// point of the arc in the cover; (e) ball growth from that point.
#[allow(clippy::too_many_arguments)]
pub fn irg_pipeline(
    map: &MapSpec<f64>,
    v: &BoxRegion<f64>,
    u1: &GridCover,
    u2: &GridCover,
    cover: &LambdaCover,
    delta0: f64,
    lambda_p: f64,
    opts: &IrgOptions,
) -> Result<IrgReport> {
    let n = map.dim();
    if v.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: v.dim() });
    }
    let m = (2.0 * (n as f64).sqrt()).ceil() + opts.slack;
    let mut rep = IrgReport {
        start: v.clone(),
        m,
        m0: None,
        diameters: Vec::new(),
        slab: None,
        arc: None,
        arc_diameter: None,
        witness: None,
        witness_in_cover: None,
        n_steps: None,
        radius: opts.radius,
        eps: opts.eps,
        ball_check: None,
        stages_completed: 0,
        failed_stage: None,
        notes: vec!["cylinder geometry uses Euclidean orthogonals, diameters use the max-metric".into()],
    };
    // (a)
    let mut curve = GrowingCurve::new(map, boundary_loop(v), opts.max_seg);
    rep.diameters.push(curve.diameter());
    while curve.diameter() <= m {
        if curve.steps >= opts.max_steps {
            rep.failed_stage = Some(format!("a: diameter {} after {} steps", curve.diameter(), curve.steps));
            return Ok(rep);
        }
        curve.step(opts.max_seg);
        rep.diameters.push(curve.diameter());
    }
    rep.m0 = Some(curve.steps);
    rep.stages_completed = 1;
    // (b)
    let bounds = slab_bounds(u2);
    let Some((coord, j, arc_pts)) = extract_slab_crossing(&curve.pts, &bounds) else {
        rep.failed_stage = Some("b: no complete slab crossing".into());
        return Ok(rep);
    };
    rep.slab = Some((coord, j));
    let arc = ArcPolyline::new(arc_pts)?;
    rep.stages_completed = 2;
    // (c)
    let diam = diameter(Shape::Arc(&arc), true)?;
    rep.arc_diameter = Some(diam);
    let step = opts.max_seg.min(0.25 / u2.res() as f64);
    // the cut ends lie on cell faces of U2, which is open
    let dense = arc.densify(step);
    let vs = dense.vertices();
    let in_u2c = vs[1..vs.len() - 1].iter().all(|p| !u2.contains_point(p));
    if !(diam > delta0) || !in_u2c {
        rep.failed_stage = Some(format!("c: diameter {diam} vs delta0 {delta0}, outside U2: {in_u2c}"));
        rep.arc = Some(arc);
        return Ok(rep);
    }
    rep.stages_completed = 3;
    // (d)
    let cfg = ChaseConfig { horizon: opts.horizon, ..ChaseConfig::default() };
    let out = chase(map, &arc, |x, _| u1.contains_point(x), &cfg);
    let w = match out {
        ChaseOutcome::Found(w) if w.clean && w.dist_to_arc < 1e-6 && w.max_defect < 1e-8 => w,
        other => {
            rep.failed_stage = Some(format!("d: no verified witness ({other:?})").chars().take(200).collect());
            rep.arc = Some(arc);
            return Ok(rep);
        }
    };
    let x0 = w.orbit[0].clone();
    let in_cover = cover.cover.contains_point(&x0);
    rep.witness_in_cover = Some(in_cover);
    rep.witness = Some(x0.clone());
    rep.arc = Some(arc);
    if !in_cover {
        rep.failed_stage = Some("d: witness cell is not in the cover".into());
        return Ok(rep);
    }
    rep.stages_completed = 4;
    // (e)
    let nsteps = ball_growth_steps(lambda_p, opts.radius, opts.eps)?;
    rep.n_steps = Some(nsteps);
    let ok = ball_pullback_check(map, &x0, nsteps, opts.radius, opts.eps, opts.boundary_samples);
    rep.ball_check = Some(ok);
    if !ok {
        rep.failed_stage = Some("e: boundary of the grown ball does not pull back into B_eps".into());
        return Ok(rep);
    }
    rep.stages_completed = 5;
    Ok(rep)
}

/// Pulls the boundary of `B_R(f^N(x))` back along the branch of the orbit of `x` and checks that
/// it lands in `B_eps(x)`.
pub fn ball_pullback_check(map: &MapSpec<f64>, x: &[f64], nsteps: usize, r: f64, eps: f64, per_face: usize) -> bool {
    let n = map.dim();
    let mut orbit = vec![x.to_vec()];
    for k in 0..nsteps {
        orbit.push(map.eval_lift_raw(&orbit[k]));
    }
    // boundary samples of the max-ball: faces x_i = c_i +- r
    let mut samples = Vec::new();
    let grid: Vec<f64> = (0..=per_face).map(|s| -r + 2.0 * r * s as f64 / per_face as f64).collect();
    for i in 0..n {
        for sgn in [-1.0, 1.0] {
            let others = n - 1;
            let count = (per_face + 1).pow(others as u32);
            for mut c in 0..count {
                let mut off = vec![0.0; n];
                for (k, o) in off.iter_mut().enumerate() {
                    if k == i {
                        *o = sgn * r;
                    } else {
                        *o = grid[c % (per_face + 1)];
                        c /= per_face + 1;
                    }
                }
                samples.push(off);
            }
        }
    }
    samples.par_iter().all(|off| {
        let mut d = off.clone();
        for k in (0..nsteps).rev() {
            let tgt: Vec<f64> = orbit[k + 1].iter().zip(&d).map(|(a, b)| a + b).collect();
            let jac = map.jacobian_matrix(&orbit[k]);
            let lin = jac.solve(&d).unwrap_or_else(|| d.clone());
            let seed: Vec<f64> = orbit[k].iter().zip(&lin).map(|(a, b)| a + b).collect();
            match map.newton_lift(&tgt, &seed, 1e-12) {
                Ok(z) => d = z.iter().zip(&orbit[k]).map(|(a, b)| a - b).collect(),
                Err(_) => return false,
            }
        }
        d.iter().all(|v| v.abs() <= eps)
    })
}

/// A tube of Euclidean radius `radius` around a lifted arc.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CylinderSpec {
    pub arc: ArcPolyline<f64>,
    pub radius: f64,
    /// Width of the lateral strip removed before the flood fill.
    pub margin: f64,
}

/// Rasterized cylinder on the lifted grid: per cell, 0 outside, 1 free, 2 cover, 3 bottom, 4 top.
#[derive(Clone, Debug)]
pub struct CylinderRaster {
    pub origin: Vec<i64>,
    pub shape: Vec<usize>,
    pub data: Vec<u8>,
}

impl CylinderRaster {
    /// Plain PGM (P2); only meaningful for two-dimensional rasters.
    pub fn to_pgm(&self) -> String {
        let (w, h) = (self.shape[0], self.shape.get(1).copied().unwrap_or(1));
        let mut s = format!("P2\n{w} {h}\n4\n");
        for y in (0..h).rev() {
            let row: Vec<String> = (0..w).map(|x| self.data[y * w + x].to_string()).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }
}

/// Nearest point of the polyline to `c` as `(euclidean distance, arc-length parameter, clamped at an end)`.
fn project_to_arc(arc: &ArcPolyline<f64>, c: &[f64]) -> (f64, f64, bool) {
    let v = arc.vertices();
    let mut best = (f64::INFINITY, 0.0, false);
    let mut acc = 0.0;
    let last = v.len() - 2;
    for s in 0..v.len() - 1 {
        let (a, b) = (&v[s], &v[s + 1]);
        let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
        let len2: f64 = ab.iter().map(|x| x * x).sum();
        let t_raw = a.iter().zip(c).zip(&ab).map(|((x, y), d)| (y - x) * d).sum::<f64>() / len2;
        let t = t_raw.clamp(0.0, 1.0);
        let p: Vec<f64> = a.iter().zip(&ab).map(|(x, d)| x + d * t).collect();
        let d = euclid(&p, c);
        let clamped = (s == 0 && t_raw < 0.0) || (s == last && t_raw > 1.0);
        if d < best.0 {
            best = (d, acc + t * len2.sqrt(), clamped);
        }
        acc += len2.sqrt();
    }
    best
}

/// Horizontal separation: with the cover's cells removed, no face-connected path of free cells
/// joins the bottom slice of the cylinder to the top slice.
pub fn separation_check(cover: &LambdaCover, cyl: &CylinderSpec) -> Result<(Certificate, CylinderRaster)> {
    let t0 = Instant::now();
    let g = &cover.cover;
    let n = g.dim();
    if cyl.arc.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: cyl.arc.dim() });
    }
    let res = g.res();
    let r = res as f64;
    let length = cyl.arc.length();
    let empty_raster = CylinderRaster { origin: vec![0; n], shape: vec![0; n], data: Vec::new() };
    if 2.0 * cyl.radius * r < 3.0 {
        return Ok((
            Certificate::inconclusive("separation", 0.0, res, "cylinder is less than 3 cells across").timed(t0),
            empty_raster,
        ));
    }
    let verts = cyl.arc.vertices();
    let mut origin = vec![0i64; n];
    let mut shape = vec![0usize; n];
    for i in 0..n {
        let lo = verts.iter().map(|p| p[i]).fold(f64::INFINITY, f64::min) - cyl.radius;
        let hi = verts.iter().map(|p| p[i]).fold(f64::NEG_INFINITY, f64::max) + cyl.radius;
        origin[i] = (lo * r).floor() as i64 - 1;
        shape[i] = ((hi * r).ceil() as i64 + 1 - origin[i]) as usize + 1;
    }
    let total: usize = shape.iter().product();
    if total > 1 << 26 {
        return Err(Error::Precondition("cylinder raster too large".into()));
    }
    let slice = 1.0 / r * (n as f64).sqrt();
    let inner = cyl.radius - cyl.margin;
    let unflat = |mut f: usize| -> Vec<i64> {
        shape
            .iter()
            .zip(&origin)
            .map(|(&s, &o)| {
                let i = (f % s) as i64 + o;
                f /= s;
                i
            })
            .collect()
    };
    // (raster code, end slice: 1 bottom, 2 top, 0 neither)
    let tagged: Vec<(u8, u8)> = (0..total)
        .into_par_iter()
        .map(|f| {
            let idx = unflat(f);
            let c: Vec<f64> = idx.iter().map(|&i| (i as f64 + 0.5) / r).collect();
            let (d, s, clamped) = project_to_arc(&cyl.arc, &c);
            if clamped || d > inner {
                return (0, 0);
            }
            let end = if s <= slice {
                1
            } else if s >= length - slice {
                2
            } else {
                0
            };
            let t: Vec<usize> = idx.iter().map(|&i| i.rem_euclid(res as i64) as usize).collect();
            let code = if g.contains(&t) { 2 } else { [1, 3, 4][end as usize] };
            (code, end)
        })
        .collect();
    let slice_cells = |e: u8| tagged.iter().filter(|t| t.1 == e).count();
    let (bottom_all, top_all) = (slice_cells(1), slice_cells(2));
    let data: Vec<u8> = tagged.into_iter().map(|t| t.0).collect();
    // flood from the bottom through free cells
    let mut seen = vec![false; total];
    let mut q: VecDeque<usize> = (0..total).filter(|&f| data[f] == 3).collect();
    for &f in &q {
        seen[f] = true;
    }
    let bottom = q.len();
    let top = data.iter().filter(|&&v| v == 4).count();
    let mut stride = vec![1usize; n];
    for i in 1..n {
        stride[i] = stride[i - 1] * shape[i - 1];
    }
    let mut connected = false;
    while let Some(c) = q.pop_front() {
        if data[c] == 4 {
            connected = true;
            break;
        }
        for i in 0..n {
            let coord = (c / stride[i]) % shape[i];
            for (ok, nb) in [(coord > 0, c.wrapping_sub(stride[i])), (coord + 1 < shape[i], c + stride[i])] {
                if ok && !seen[nb] && matches!(data[nb], 1 | 3 | 4) {
                    seen[nb] = true;
                    q.push_back(nb);
                }
            }
        }
    }
    let covered = data.iter().filter(|&&v| v == 2).count();
    let mut cert = Certificate::from_margin("separation", if connected { -1.0 } else { 1.0 }, res)
        .param("radius", cyl.radius)
        .param("margin_strip", cyl.margin)
        .param("arc_length", length)
        .param("bottom_cells", bottom)
        .param("top_cells", top)
        .param("cover_cells", covered)
        .note("cylinder uses Euclidean orthogonals; the cover lives on the max-metric grid");
    if bottom_all == 0 || top_all == 0 {
        cert = Certificate::inconclusive("separation", 0.0, res, "empty top or bottom slice").param("radius", cyl.radius);
    } else if bottom == 0 || top == 0 {
        cert = cert.note("an end slice lies wholly in the cover");
    }
    if cert.verdict == Verdict::Pass && covered == 0 {
        cert = cert.fail("no cover cells in the cylinder");
    }
    Ok((cert.timed(t0), CylinderRaster { origin, shape, data }))
}

/// Lifted diameter per step of a growing box boundary, for plotting.
pub fn diameter_curve(map: &MapSpec<f64>, v: &BoxRegion<f64>, steps: usize, max_seg: f64) -> Vec<f64> {
    let mut c = GrowingCurve::new(map, boundary_loop(v), max_seg);
    let mut out = vec![c.diameter()];
    for _ in 0..steps {
        c.step(max_seg);
        out.push(c.diameter());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region::compute_lambda_cover;

    #[test]
    fn graph_examples() {
        let g = build_transition_graph(&MapSpec::diagonal(&[3]).unwrap(), 3).unwrap();
        assert!(g.adjacency.iter().all(|a| a.len() == 3));
        assert!(strongly_connected(&g).passed());
        let g = build_transition_graph(&MapSpec::diagonal(&[2, 3]).unwrap(), 32).unwrap();
        assert!(strongly_connected(&g).passed());
        let id = build_transition_graph(&MapSpec::diagonal(&[1]).unwrap(), 8).unwrap();
        assert!(!strongly_connected(&id).passed());
    }

    #[test]
    fn density_examples() {
        let c = preorbit_density(&MapSpec::diagonal(&[2]).unwrap(), &[0.3], 5, 1.0 / 16.0).unwrap();
        assert!(c.passed());
        assert_eq!(c.params["n0"], 4);
        let c = preorbit_density(&MapSpec::diagonal(&[2, 3]).unwrap(), &[0.0, 0.0], 4, 1.0 / 16.0).unwrap();
        assert!(c.passed());
        let c = preorbit_density(&MapSpec::diagonal(&[2]).unwrap(), &[0.3], 2, 1.0 / 16.0).unwrap();
        assert!(!c.passed());
        let c = preorbit_density(&MapSpec::diagonal(&[10, 10]).unwrap(), &[0.3, 0.3], 9, 0.1).unwrap();
        assert_eq!(c.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn ball_steps_example() {
        assert_eq!(ball_growth_steps(2.0, 0.25, 0.01).unwrap(), 6);
    }

    #[test]
    fn doubling_boundary_m0() {
        let f = MapSpec::diagonal(&[2, 2]).unwrap();
        let v = BoxRegion::new(vec![0.3, 0.6], vec![0.3 + 1.0 / 16.0, 0.6 + 1.0 / 16.0], false).unwrap();
        let d = diameter_curve(&f, &v, 6, 1e-3);
        assert!((d[6] - 4.0).abs() < 1e-9 && (d[5] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn slab_crossing_cut() {
        let pts = vec![vec![0.1, 0.0], vec![3.5, 0.2]];
        let (i, j, arc) = extract_slab_crossing(&pts, &[(0.4, 0.6), (0.4, 0.6)]).unwrap();
        assert_eq!((i, j), (0, 0));
        assert!((arc[0][0] - 0.6).abs() < 1e-12 && (arc.last().unwrap()[0] - 1.4).abs() < 1e-12);
    }

    #[test]
    fn separation_examples() {
        let u = GridCover::empty(2, 32).unwrap();
        let mut lam = compute_lambda_cover(&MapSpec::diagonal(&[2, 2]).unwrap(), &u, 0).unwrap();
        let arc = ArcPolyline::new(vec![vec![0.1, 0.5], vec![0.9, 0.5]]).unwrap();
        let cyl = CylinderSpec { arc, radius: 0.2, margin: 0.0 };
        // a vertical band crossing the tube
        let mut band = GridCover::empty(2, 32).unwrap();
        for y in 0..32 {
            band.insert(&[16, y]);
        }
        lam.cover = band;
        assert!(separation_check(&lam, &cyl).unwrap().0.passed());
        lam.cover = GridCover::empty(2, 32).unwrap();
        assert!(!separation_check(&lam, &cyl).unwrap().0.passed());
        let thin = CylinderSpec { radius: 0.01, ..cyl };
        assert_eq!(separation_check(&lam, &thin).unwrap().0.verdict, Verdict::Inconclusive);
    }
}
