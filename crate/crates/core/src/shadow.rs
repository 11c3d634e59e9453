//! Pseudo-orbits, backward-contraction shadowing and the shadowing conjugacy between a
//! perturbed map `g` and a reference map `f`.

use crate::certificate::Certificate;
use crate::error::{Error, Result};
use crate::map::MapSpec;
use crate::region::{GridCover, LambdaCover};
use crate::torus::{torus_dist_raw, TorusPoint};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::time::Instant;

/// Two candidate preimages closer to the pseudo-point than this to each other are a tie.
pub const TIE_TOL: f64 = 1e-9;
const NEWTON_TOL: f64 = 1e-13;

/// A finite window of a `delta`-pseudo-orbit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudoOrbit {
    points: Vec<Vec<f64>>,
    delta: f64,
}

impl PseudoOrbit {
    /// Validates `dist(f(p_k), p_{k+1}) <= delta` for every `k`.
    pub fn new(map: &MapSpec<f64>, points: Vec<Vec<f64>>, delta: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Precondition("empty pseudo-orbit".into()));
        }
        for p in &points {
            TorusPoint::new(p.clone())?;
            if p.len() != map.dim() {
                return Err(Error::DimensionMismatch { expected: map.dim(), got: p.len() });
            }
        }
        for k in 0..points.len() - 1 {
            let d = torus_dist_raw(&map.eval_raw(&points[k]), &points[k + 1]);
            if d > delta {
                return Err(Error::InvalidPseudoOrbit { step: k, dist: d, delta });
            }
        }
        Ok(PseudoOrbit { points, delta })
    }

    /// Uses the smallest admissible `delta`.
    pub fn tight(map: &MapSpec<f64>, points: Vec<Vec<f64>>) -> Result<Self> {
        let delta = Self::defect(map, &points);
        Self::new(map, points, delta)
    }

    pub fn defect(map: &MapSpec<f64>, points: &[Vec<f64>]) -> f64 {
        points.windows(2).map(|w| torus_dist_raw(&map.eval_raw(&w[0]), &w[1])).fold(0.0, f64::max)
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowingResult {
    pub orbit: Vec<Vec<f64>>,
    /// Achieved `max_k dist(orbit[k], pseudo[k])`.
    pub eta: f64,
    /// `delta * lambda / (lambda - 1)` plus the window tail.
    pub bound: f64,
    /// `lambda^-N * diam`, the truncation term included in `bound`.
    pub tail: f64,
    /// `eta < beta / 2` when an expansivity estimate was available.
    pub unique: Option<bool>,
    pub beta: Option<f64>,
}

/// Preimage of `y` nearest to `target`, with the tie check.
fn nearest_preimage(map: &MapSpec<f64>, y: &[f64], target: &[f64], step: usize) -> Result<Vec<f64>> {
    let pre = map.preimages_lift(y, NEWTON_TOL)?;
    let mut cand: Vec<(f64, Vec<f64>)> = pre
        .into_iter()
        .map(|(p, _)| {
            let q: Vec<f64> = p.into_iter().map(crate::real::frac).collect();
            (torus_dist_raw(&q, target), q)
        })
        .collect();
    cand.sort_by(|a, b| a.0.total_cmp(&b.0));
    if cand.len() > 1 && cand[1].0 - cand[0].0 < TIE_TOL {
        return Err(Error::BranchAmbiguity { step, gap: cand[1].0 - cand[0].0 });
    }
    Ok(cand.swap_remove(0).1)
}

/// Backward contraction: the last point is kept, each earlier point is the preimage of its
/// successor nearest to the pseudo-orbit.
pub fn shadow(map: &MapSpec<f64>, pseudo: &PseudoOrbit, region: Option<&LambdaCover>, lambda: f64) -> Result<ShadowingResult> {
    if !(lambda > 1.0) {
        return Err(Error::Precondition(format!("lambda = {lambda} must exceed 1")));
    }
    let pts = pseudo.points();
    if let Some(reg) = region {
        let near = reg.cover.dilate(1);
        if let Some(k) = pts.iter().position(|p| !near.contains_point(p)) {
            return Err(Error::OrbitExit { step: k });
        }
    }
    let n = pts.len();
    let mut orbit = vec![pts[n - 1].clone(); n];
    for k in (0..n - 1).rev() {
        let z = nearest_preimage(map, &orbit[k + 1], &pts[k], k)?;
        let mn = map.jacobian_matrix(&z).min_norm();
        if !(mn > 1.0) {
            return Err(Error::ContractionFailure { step: k, min_norm: mn });
        }
        orbit[k] = z;
    }
    let eta = orbit.iter().zip(pts).map(|(a, b)| torus_dist_raw(a, b)).fold(0.0, f64::max);
    let tail = lambda.powi(-(n as i32)) * 0.5;
    let bound = pseudo.delta() * lambda / (lambda - 1.0) + tail;
    let beta = region.map(|r| estimate_beta(map, r));
    Ok(ShadowingResult { orbit, eta, bound, tail, unique: beta.map(|b| eta < b / 2.0), beta })
}

/// `h_g(x)`: the `f`-shadowing point of the `g`-orbit window of `x`.
/// The window must stay in `region` when one is given.
pub fn conjugacy_point(
    f: &MapSpec<f64>,
    g: &MapSpec<f64>,
    x: &[f64],
    window: usize,
    region: Option<&GridCover>,
) -> Result<Vec<f64>> {
    if f.dim() != g.dim() || x.len() != f.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), got: x.len() });
    }
    let mut orbit = vec![x.to_vec()];
    for k in 0..window {
        if let Some(r) = region {
            if !r.contains_point(&orbit[k]) {
                return Err(Error::OrbitExit { step: k });
            }
        }
        let next = g.eval_raw(&orbit[k]);
        orbit.push(next);
    }
    let mut z = orbit[window].clone();
    for k in (0..window).rev() {
        z = nearest_preimage(f, &z, &orbit[k], k)?;
    }
    Ok(z)
}

/// Sample points of `Lambda_g` paired with their images under `h_g`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConjugacyTable {
    pub pairs: Vec<(Vec<f64>, Vec<f64>)>,
    /// Largest displacement `dist(x, h(x))`.
    pub eta: f64,
    pub window: usize,
}

pub fn build_table(
    f: &MapSpec<f64>,
    g: &MapSpec<f64>,
    points: &[Vec<f64>],
    window: usize,
    region: Option<&GridCover>,
) -> Result<ConjugacyTable> {
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = points
        .par_iter()
        .map(|x| conjugacy_point(f, g, x, window, region).map(|h| (x.clone(), h)))
        .collect::<Result<_>>()?;
    let eta = pairs.iter().map(|(x, h)| torus_dist_raw(x, h)).fold(0.0, f64::max);
    Ok(ConjugacyTable { pairs, eta, window })
}

/// Checks `h(g(x)) = f(h(x))` on the table and empirical injectivity. Refuses tables whose
/// displacement leaves the uniqueness regime `eta < beta`.
pub fn check_conjugacy(
    f: &MapSpec<f64>,
    g: &MapSpec<f64>,
    table: &ConjugacyTable,
    tol: f64,
    beta: f64,
) -> Result<Certificate> {
    let t0 = Instant::now();
    if table.pairs.is_empty() {
        return Err(Error::Precondition("empty conjugacy table".into()));
    }
    if table.eta >= beta {
        return Err(Error::Refused(format!("displacement {} is not below the expansivity estimate {beta}", table.eta)));
    }
    let defects: Vec<f64> = table
        .pairs
        .par_iter()
        .map(|(x, h)| {
            let gx = g.eval_raw(x);
            match conjugacy_point(f, g, &gx, table.window, None) {
                Ok(hg) => torus_dist_raw(&hg, &f.eval_raw(h)),
                Err(_) => f64::INFINITY,
            }
        })
        .collect();
    let max_defect = defects.iter().copied().fold(0.0, f64::max);
    let close = tol / 10.0;
    let collisions: usize = (0..table.pairs.len())
        .into_par_iter()
        .map(|i| {
            let (xi, hi) = &table.pairs[i];
            table.pairs[i + 1..]
                .iter()
                .filter(|(xj, hj)| torus_dist_raw(hi, hj) < close && torus_dist_raw(xi, xj) >= close)
                .count()
        })
        .sum();
    let mut cert = Certificate::from_margin("conjugacy", tol - max_defect, 0)
        .param("tol", tol)
        .param("max_defect", max_defect)
        .param("eta", table.eta)
        .param("beta", beta)
        .param("window", table.window)
        .param("points", table.pairs.len())
        .param("injectivity_collisions", collisions);
    if collisions > 0 {
        cert = cert.fail("distinct points share an image");
    }
    Ok(cert.timed(t0))
}

/// Expansivity estimate: half the smaller of the separation between components of the
/// cover and the least distance between distinct preimages of a point.
pub fn estimate_beta(map: &MapSpec<f64>, cover: &LambdaCover) -> f64 {
    let sep_comp = component_separation(&cover.cover);
    let sep_branch = branch_separation(map, if map.dim() == 1 { 256 } else { 16 });
    sep_comp.min(sep_branch) / 2.0
}

/// Least distance between distinct preimages over a sample grid of targets.
pub fn branch_separation(map: &MapSpec<f64>, per_axis: usize) -> f64 {
    let pts = crate::map::grid_points(map.dim(), 1.0 / per_axis as f64);
    pts.par_iter()
        .map(|y| match map.preimages_lift(y, NEWTON_TOL) {
            Ok(pre) => {
                let mut m = f64::INFINITY;
                for a in 0..pre.len() {
                    for b in a + 1..pre.len() {
                        m = m.min(torus_dist_raw(&pre[a].0, &pre[b].0));
                    }
                }
                m
            }
            Err(_) => 0.0,
        })
        .reduce(|| f64::INFINITY, f64::min)
}

/// Approximate gap between distinct face-connected components of a cover (infinite for one component).
pub fn component_separation(cover: &GridCover) -> f64 {
    let comps = cover.components();
    if comps.len() < 2 {
        return f64::INFINITY;
    }
    let total = cover.total();
    let mut label = vec![usize::MAX; total];
    let mut dist = vec![usize::MAX; total];
    let mut q = VecDeque::new();
    for (l, c) in comps.iter().enumerate() {
        for &f in &c.cells {
            label[f] = l;
            dist[f] = 0;
            q.push_back(f);
        }
    }
    let n = cover.dim();
    let r = cover.res() as i64;
    let offs: Vec<Vec<i64>> = (0..3usize.pow(n as u32))
        .map(|mut c| {
            (0..n)
                .map(|_| {
                    let d = (c % 3) as i64 - 1;
                    c /= 3;
                    d
                })
                .collect::<Vec<_>>()
        })
        .filter(|v| v.iter().any(|&d| d != 0))
        .collect();
    let mut best = usize::MAX;
    while let Some(c) = q.pop_front() {
        if dist[c] * 2 > best {
            break;
        }
        let idx = cover.unflat(c);
        for o in &offs {
            let nb: Vec<usize> = idx.iter().zip(o).map(|(&i, &d)| (i as i64 + d).rem_euclid(r) as usize).collect();
            let nf = cover.flat(&nb);
            if label[nf] == usize::MAX {
                label[nf] = label[c];
                dist[nf] = dist[c] + 1;
                q.push_back(nf);
            } else if label[nf] != label[c] {
                best = best.min(dist[c] + dist[nf]);
            }
        }
    }
    best as f64 / cover.res() as f64
}
