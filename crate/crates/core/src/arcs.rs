//! Depth-first search for points of an arc whose forward orbit avoids a bad set.
//!
//! Each node is a piece of the lifted image `F^k(gamma)`, sampled densely enough that
//! consecutive vertices are at most `max_seg` apart. Good runs are kept, chunked to a
//! bounded diameter and explored largest first. A leaf at the horizon is pulled back
//! along its chain of parents by Newton, which yields an exact orbit starting on `gamma`.

use crate::map::MapSpec;
use crate::real::frac;
use crate::torus::{lift_dist, torus_dist_raw, ArcPolyline};

#[derive(Clone, Debug)]
pub struct ChaseConfig {
    /// Number of forward steps the witness must survive.
    pub horizon: usize,
    /// Steps `k <= skip` are not tested against the bad set.
    pub skip: usize,
    pub max_seg: f64,
    /// Pieces wider than this (max-metric, lifted) are split.
    pub max_diam: f64,
    pub node_budget: usize,
    pub newton_tol: f64,
}

impl Default for ChaseConfig {
    fn default() -> Self {
        ChaseConfig { horizon: 50, skip: 0, max_seg: 1e-3, max_diam: 0.25, node_budget: 20_000, newton_tol: 1e-12 }
    }
}

/// A point of the arc with its verified forward orbit.
#[derive(Clone, Debug)]
pub struct Witness {
    /// Lifted, in the coordinates of the input arc.
    pub point: Vec<f64>,
    /// `orbit[k]` is the torus point at step `k`, `k = 0..=horizon`.
    pub orbit: Vec<Vec<f64>>,
    /// Max-metric distance from `point` to the arc.
    pub dist_to_arc: f64,
    /// Largest `dist(f(orbit[k]), orbit[k+1])`.
    pub max_defect: f64,
    /// True when every tested step of `orbit` is outside the bad set.
    pub clean: bool,
}

#[derive(Clone, Debug)]
pub enum ChaseOutcome {
    Found(Witness),
    /// Every branch died before the horizon.
    Exhausted { nodes: usize, deepest: usize },
    /// The node budget ran out first.
    Budget { nodes: usize, deepest: usize },
    /// Newton pullback failed on a surviving chain.
    PullbackFailed { depth: usize },
}

impl ChaseOutcome {
    pub fn witness(&self) -> Option<&Witness> {
        match self {
            ChaseOutcome::Found(w) => Some(w),
            _ => None,
        }
    }
}

struct Node {
    depth: usize,
    n: usize,
    /// Flat lifted vertices in this node's frame.
    pts: Vec<f64>,
    /// Flat source vertices in the parent frame.
    src: Vec<f64>,
    /// Integer shift subtracted from the image to get this frame.
    shift: Vec<f64>,
}

impl Node {
    fn len(&self) -> usize {
        self.pts.len() / self.n
    }
    fn pt(&self, i: usize) -> &[f64] {
        &self.pts[i * self.n..(i + 1) * self.n]
    }
    fn src_pt(&self, i: usize) -> &[f64] {
        &self.src[i * self.n..(i + 1) * self.n]
    }
    fn diam(&self) -> f64 {
        extent(&self.pts, self.n)
    }
}

fn extent(flat: &[f64], n: usize) -> f64 {
    (0..n)
        .map(|i| {
            let (mn, mx) = flat
                .iter()
                .skip(i)
                .step_by(n)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            mx - mn
        })
        .fold(0.0, f64::max)
}

/// Image of a polyline with adaptive refinement. Returns `(image, source)` flat arrays.
fn refined_image(map: &MapSpec<f64>, pts: &[f64], n: usize, max_seg: f64) -> (Vec<f64>, Vec<f64>) {
    let m = pts.len() / n;
    let mut img = Vec::with_capacity(pts.len() * 2);
    let mut src = Vec::with_capacity(pts.len() * 2);
    let first = map.eval_lift_raw(&pts[..n]);
    img.extend_from_slice(&first);
    src.extend_from_slice(&pts[..n]);
    let mut prev_img = first;
    for j in 1..m {
        let a = &pts[(j - 1) * n..j * n];
        let b = &pts[j * n..(j + 1) * n];
        let fb = map.eval_lift_raw(b);
        subdivide(map, a, b, &prev_img, &fb, max_seg, 0, &mut img, &mut src);
        img.extend_from_slice(&fb);
        src.extend_from_slice(b);
        prev_img = fb;
    }
    (img, src)
}

#[allow(clippy::too_many_arguments)]
fn subdivide(
    map: &MapSpec<f64>,
    a: &[f64],
    b: &[f64],
    fa: &[f64],
    fb: &[f64],
    max_seg: f64,
    level: usize,
    img: &mut Vec<f64>,
    src: &mut Vec<f64>,
) {
    if level >= 30 || lift_dist(fa, fb) <= max_seg {
        return;
    }
    let mid: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
    let fm = map.eval_lift_raw(&mid);
    subdivide(map, a, &mid, fa, &fm, max_seg, level + 1, img, src);
    img.extend_from_slice(&fm);
    src.extend_from_slice(&mid);
    subdivide(map, &mid, b, &fm, fb, max_seg, level + 1, img, src);
}

fn expand<B: Fn(&[f64], usize) -> bool>(map: &MapSpec<f64>, node: &Node, bad: &B, cfg: &ChaseConfig) -> Vec<Node> {
    let n = node.n;
    let step = node.depth + 1;
    let (img, src) = refined_image(map, &node.pts, n, cfg.max_seg);
    let m = img.len() / n;
    let test = step > cfg.skip;
    let mut torus = vec![0.0; n];
    let good: Vec<bool> = (0..m)
        .map(|i| {
            if !test {
                return true;
            }
            for (t, &v) in torus.iter_mut().zip(&img[i * n..(i + 1) * n]) {
                *t = frac(v);
            }
            !bad(&torus, step)
        })
        .collect();
    let mut children = Vec::new();
    let mut i = 0;
    while i < m {
        if !good[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < m && good[i] {
            i += 1;
        }
        // chunk the run [start, i)
        let mut c0 = start;
        while c0 < i {
            let mut lo: Vec<f64> = img[c0 * n..(c0 + 1) * n].to_vec();
            let mut hi = lo.clone();
            let mut c1 = c0 + 1;
            while c1 < i {
                let p = &img[c1 * n..(c1 + 1) * n];
                let mut wide = false;
                for d in 0..n {
                    if p[d].max(hi[d]) - p[d].min(lo[d]) > cfg.max_diam {
                        wide = true;
                    }
                }
                if wide {
                    break;
                }
                for d in 0..n {
                    lo[d] = lo[d].min(p[d]);
                    hi[d] = hi[d].max(p[d]);
                }
                c1 += 1;
            }
            let shift: Vec<f64> = img[c0 * n..(c0 + 1) * n].iter().map(|v| v.floor()).collect();
            let mut pts = Vec::with_capacity((c1 - c0) * n);
            for k in c0..c1 {
                for d in 0..n {
                    pts.push(img[k * n + d] - shift[d]);
                }
            }
            children.push(Node { depth: step, n, pts, src: src[c0 * n..c1 * n].to_vec(), shift });
            // the last vertex of a chunk starts the next one so the run stays connected
            c0 = if c1 < i { (c1 - 1).max(c0 + 1) } else { c1 };
        }
    }
    children.sort_by(|a, b| a.diam().total_cmp(&b.diam()).then(a.len().cmp(&b.len())));
    children
}

/// Searches `arc` for a point whose orbit avoids `bad` at every step in `(skip, horizon]`.
/// `bad(x, k)` receives torus coordinates and the step index.
pub fn chase<B: Fn(&[f64], usize) -> bool>(
    map: &MapSpec<f64>,
    arc: &ArcPolyline<f64>,
    bad: B,
    cfg: &ChaseConfig,
) -> ChaseOutcome {
    let n = arc.dim();
    let dense = arc.densify(cfg.max_seg);
    let root = Node {
        depth: 0,
        n,
        pts: dense.vertices().iter().flatten().copied().collect(),
        src: Vec::new(),
        shift: vec![0.0; n],
    };
    if cfg.horizon == 0 {
        return recover(map, arc, vec![root], &bad, cfg);
    }
    let mut path: Vec<Node> = Vec::new();
    let mut pending: Vec<Vec<Node>> = Vec::new();
    let first = expand(map, &root, &bad, cfg);
    path.push(root);
    pending.push(first);
    let mut nodes = 1usize;
    let mut deepest = 0usize;
    while let Some(top) = pending.last_mut() {
        match top.pop() {
            None => {
                pending.pop();
                path.pop();
            }
            Some(child) => {
                nodes += 1;
                deepest = deepest.max(child.depth);
                if child.depth >= cfg.horizon {
                    path.push(child);
                    return recover(map, arc, path, &bad, cfg);
                }
                if nodes > cfg.node_budget {
                    return ChaseOutcome::Budget { nodes, deepest };
                }
                let kids = expand(map, &child, &bad, cfg);
                path.push(child);
                pending.push(kids);
            }
        }
    }
    ChaseOutcome::Exhausted { nodes, deepest }
}

fn nearest_vertex(node: &Node, z: &[f64]) -> usize {
    (0..node.len())
        .min_by(|&a, &b| lift_dist(node.pt(a), z).total_cmp(&lift_dist(node.pt(b), z)))
        .unwrap_or(0)
}

fn recover<B: Fn(&[f64], usize) -> bool>(
    map: &MapSpec<f64>,
    arc: &ArcPolyline<f64>,
    path: Vec<Node>,
    bad: &B,
    cfg: &ChaseConfig,
) -> ChaseOutcome {
    let leaf = path.last().expect("nonempty path");
    let n = leaf.n;
    let mid = leaf.len() / 2;
    let mut z: Vec<f64> = leaf.pt(mid).to_vec();
    let mut lifted = vec![z.clone()];
    let mut seed_idx = Some(mid);
    for d in (1..path.len()).rev() {
        let node = &path[d];
        let idx = seed_idx.take().unwrap_or_else(|| nearest_vertex(node, &z));
        let target: Vec<f64> = z.iter().zip(&node.shift).map(|(a, s)| a + s).collect();
        let seed = node.src_pt(idx).to_vec();
        match map.newton_lift(&target, &seed, cfg.newton_tol) {
            Ok(x) => z = x,
            Err(_) => return ChaseOutcome::PullbackFailed { depth: d },
        }
        lifted.push(z.clone());
    }
    lifted.reverse();
    let orbit: Vec<Vec<f64>> = lifted.iter().map(|p| p.iter().map(|&v| frac(v)).collect()).collect();
    let mut max_defect: f64 = 0.0;
    for k in 0..orbit.len() - 1 {
        max_defect = max_defect.max(torus_dist_raw(&map.eval_raw(&orbit[k]), &orbit[k + 1]));
    }
    let clean = orbit.iter().enumerate().all(|(k, p)| k <= cfg.skip || !bad(p, k));
    let point = lifted[0].clone();
    let dist_to_arc = arc.dist_to(&point);
    debug_assert_eq!(point.len(), n);
    ChaseOutcome::Found(Witness { point, orbit, dist_to_arc, max_defect, clean })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tripling_cantor_witness() {
        let f = MapSpec::<f64>::diagonal(&[3]).unwrap();
        let arc = ArcPolyline::new(vec![vec![0.02], vec![0.3]]).unwrap();
        let bad = |x: &[f64], _k: usize| x[0] > 1.0 / 3.0 && x[0] < 2.0 / 3.0;
        let cfg = ChaseConfig { horizon: 30, ..Default::default() };
        let w = chase(&f, &arc, bad, &cfg).witness().cloned().expect("witness");
        assert!(w.clean && w.dist_to_arc < 1e-9 && w.max_defect < 1e-9);
        assert_eq!(w.orbit.len(), 31);
    }

    #[test]
    fn arc_inside_gap_dies() {
        let f = MapSpec::<f64>::diagonal(&[3]).unwrap();
        // (0.4, 0.6) maps into the bad set within one step
        let arc = ArcPolyline::new(vec![vec![0.4], vec![0.6]]).unwrap();
        let bad = |x: &[f64], _k: usize| x[0] > 0.1 && x[0] < 0.9;
        let out = chase(&f, &arc, bad, &ChaseConfig::default());
        assert!(matches!(out, ChaseOutcome::Exhausted { .. }));
    }
}
