//! Grid covers, cell-image enclosures, outer covers of the sets avoiding a region, and
//! the hypothesis checks built on them.

use crate::arcs::{chase, ChaseConfig, ChaseOutcome};
use crate::certificate::{Certificate, Verdict};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::map::{grid_points, MapSpec};
use crate::real::frac;
use crate::torus::{internal_diameter, union_diameter, ArcPolyline, BoxRegion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::time::Instant;

const SNAP: f64 = 1e-9;

/// A set of closed grid cells `[i/res, (i+1)/res]^n`, stored densely.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridCover {
    dim: usize,
    res: usize,
    bits: Vec<bool>,
    count: usize,
}

#[derive(Serialize, Deserialize)]
struct GridCoverJson {
    res: usize,
    #[serde(default)]
    dim: Option<usize>,
    cells: Vec<Vec<usize>>,
}

impl Serialize for GridCover {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GridCoverJson { res: self.res, dim: Some(self.dim), cells: self.cells() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for GridCover {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = GridCoverJson::deserialize(d)?;
        let dim = j.dim.or_else(|| j.cells.first().map(|c| c.len())).ok_or_else(|| {
            serde::de::Error::custom("empty cell list needs an explicit dim")
        })?;
        GridCover::from_cells(dim, j.res, &j.cells).map_err(serde::de::Error::custom)
    }
}

impl GridCover {
    pub fn empty(dim: usize, res: usize) -> Result<Self> {
        if dim == 0 || res == 0 {
            return Err(Error::InvalidRegion("dimension and resolution must be positive".into()));
        }
        let total = res.checked_pow(dim as u32).filter(|&t| t <= 1 << 28);
        let total = total.ok_or_else(|| Error::InvalidRegion(format!("resolution {res}^{dim} too large")))?;
        Ok(GridCover { dim, res, bits: vec![false; total], count: 0 })
    }

    pub fn full(dim: usize, res: usize) -> Result<Self> {
        let mut g = Self::empty(dim, res)?;
        g.bits.iter_mut().for_each(|b| *b = true);
        g.count = g.bits.len();
        Ok(g)
    }

    pub fn from_cells(dim: usize, res: usize, cells: &[Vec<usize>]) -> Result<Self> {
        let mut g = Self::empty(dim, res)?;
        for c in cells {
            if c.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: c.len() });
            }
            if let Some(&i) = c.iter().find(|&&i| i >= res) {
                return Err(Error::InvalidRegion(format!("cell index {i} outside [0, {res})")));
            }
            g.insert(c);
        }
        Ok(g)
    }

    pub(crate) fn from_bits(dim: usize, res: usize, bits: Vec<bool>) -> Self {
        let count = bits.iter().filter(|&&b| b).count();
        GridCover { dim, res, bits, count }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn res(&self) -> usize {
        self.res
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn total(&self) -> usize {
        self.bits.len()
    }

    pub fn fraction(&self) -> f64 {
        self.count as f64 / self.bits.len() as f64
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().rev().fold(0, |acc, &i| acc * self.res + i)
    }

    pub fn unflat(&self, mut f: usize) -> Vec<usize> {
        (0..self.dim)
            .map(|_| {
                let i = f % self.res;
                f /= self.res;
                i
            })
            .collect()
    }

    pub fn contains(&self, idx: &[usize]) -> bool {
        self.bits[self.flat(idx)]
    }

    pub fn contains_flat(&self, f: usize) -> bool {
        self.bits[f]
    }

    pub fn insert(&mut self, idx: &[usize]) {
        let f = self.flat(idx);
        self.insert_flat(f);
    }

    pub fn insert_flat(&mut self, f: usize) {
        if !self.bits[f] {
            self.bits[f] = true;
            self.count += 1;
        }
    }

    pub fn remove_flat(&mut self, f: usize) {
        if self.bits[f] {
            self.bits[f] = false;
            self.count -= 1;
        }
    }

    /// Flat index of the cell containing a torus point (half-open convention).
    pub fn cell_of(&self, x: &[f64]) -> usize {
        let r = self.res as f64;
        x.iter().rev().fold(0, |acc, &v| {
            let i = ((frac(v) * r) as usize).min(self.res - 1);
            acc * self.res + i
        })
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        self.bits[self.cell_of(x)]
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    pub fn cells(&self) -> Vec<Vec<usize>> {
        self.iter().map(|f| self.unflat(f)).collect()
    }

    pub fn complement(&self) -> GridCover {
        Self::from_bits(self.dim, self.res, self.bits.iter().map(|b| !b).collect())
    }

    pub fn union(&self, o: &GridCover) -> Result<GridCover> {
        self.same_grid(o)?;
        Ok(Self::from_bits(self.dim, self.res, self.bits.iter().zip(&o.bits).map(|(a, b)| *a || *b).collect()))
    }

    pub fn intersection(&self, o: &GridCover) -> Result<GridCover> {
        self.same_grid(o)?;
        Ok(Self::from_bits(self.dim, self.res, self.bits.iter().zip(&o.bits).map(|(a, b)| *a && *b).collect()))
    }

    pub fn is_subset(&self, o: &GridCover) -> bool {
        self.dim == o.dim && self.res == o.res && self.bits.iter().zip(&o.bits).all(|(a, b)| !*a || *b)
    }

    fn same_grid(&self, o: &GridCover) -> Result<()> {
        if self.dim != o.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: o.dim });
        }
        if self.res != o.res {
            return Err(Error::InvalidRegion(format!("resolution mismatch {} vs {}", self.res, o.res)));
        }
        Ok(())
    }

    /// Neighbour offsets within Chebyshev radius `k`, origin excluded.
    fn offsets(&self, k: i64) -> Vec<Vec<i64>> {
        let side = (2 * k + 1) as usize;
        (0..side.pow(self.dim as u32))
            .map(|mut c| {
                (0..self.dim)
                    .map(|_| {
                        let d = (c % side) as i64 - k;
                        c /= side;
                        d
                    })
                    .collect::<Vec<_>>()
            })
            .filter(|v| v.iter().any(|&d| d != 0))
            .collect()
    }

    fn shifted(&self, f: usize, off: &[i64]) -> usize {
        let idx = self.unflat(f);
        let r = self.res as i64;
        let moved: Vec<usize> = idx.iter().zip(off).map(|(&i, &d)| (i as i64 + d).rem_euclid(r) as usize).collect();
        self.flat(&moved)
    }

    /// Chebyshev dilation by `k` cells, with wraparound.
    pub fn dilate(&self, k: usize) -> GridCover {
        let offs = self.offsets(k as i64);
        let mut out = self.clone();
        for f in self.iter() {
            for o in &offs {
                out.insert_flat(self.shifted(f, o));
            }
        }
        out
    }

    /// Same set at `factor` times the resolution.
    pub fn refine(&self, factor: usize) -> Result<GridCover> {
        let mut out = GridCover::empty(self.dim, self.res * factor)?;
        let sub = factor.pow(self.dim as u32);
        for f in self.iter() {
            let idx = self.unflat(f);
            for mut s in 0..sub {
                let child: Vec<usize> = idx
                    .iter()
                    .map(|&i| {
                        let d = s % factor;
                        s /= factor;
                        i * factor + d
                    })
                    .collect();
                out.insert(&child);
            }
        }
        Ok(out)
    }

    pub fn cell_box(&self, f: usize) -> BoxRegion<f64> {
        let idx = self.unflat(f);
        let r = self.res as f64;
        BoxRegion::new(idx.iter().map(|&i| i as f64 / r).collect(), idx.iter().map(|&i| (i + 1) as f64 / r).collect(), false)
            .expect("cell box")
    }

    /// Per-axis start index for a lift that keeps the largest circular gap of the projection outside.
    fn lift_starts(&self) -> Vec<usize> {
        (0..self.dim)
            .map(|ax| {
                let mut occ = vec![false; self.res];
                for f in self.iter() {
                    occ[self.unflat(f)[ax]] = true;
                }
                if occ.iter().all(|&b| b) {
                    return 0;
                }
                // the longest run of empty indices, circularly; the lift starts right after it
                let (mut best_len, mut best_end) = (0usize, 0usize);
                let mut run = 0usize;
                for t in 0..2 * self.res {
                    let i = t % self.res;
                    if occ[i] {
                        run = 0;
                    } else {
                        run += 1;
                        if run > best_len && run <= self.res {
                            best_len = run;
                            best_end = i;
                        }
                    }
                }
                (best_end + 1) % self.res
            })
            .collect()
    }

    /// The cells as lifted boxes, merged along the first axis, in a lift that avoids wrapping.
    pub fn lifted_boxes(&self) -> Vec<BoxRegion<f64>> {
        let starts = self.lift_starts();
        let r = self.res as f64;
        let lifted = |idx: &[usize]| -> Vec<i64> {
            idx.iter().zip(&starts).map(|(&i, &s)| if i < s { (i + self.res) as i64 } else { i as i64 }).collect()
        };
        let mut cells: Vec<Vec<i64>> = self.iter().map(|f| lifted(&self.unflat(f))).collect();
        // sort by the other axes first, then axis 0
        cells.sort_by(|a, b| a[1..].cmp(&b[1..]).then(a[0].cmp(&b[0])));
        let mut out = Vec::new();
        let mut i = 0;
        while i < cells.len() {
            let mut j = i + 1;
            while j < cells.len() && cells[j][1..] == cells[i][1..] && cells[j][0] == cells[j - 1][0] + 1 {
                j += 1;
            }
            let mut lo: Vec<f64> = cells[i].iter().map(|&v| v as f64 / r).collect();
            let mut hi: Vec<f64> = cells[i].iter().map(|&v| (v + 1) as f64 / r).collect();
            lo[0] = cells[i][0] as f64 / r;
            hi[0] = (cells[j - 1][0] + 1) as f64 / r;
            out.push(BoxRegion::new(lo, hi, true).expect("merged box"));
            i = j;
        }
        out
    }

    /// Lifted max-metric diameter of the cover (0 when empty).
    pub fn diameter(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        union_diameter(&self.lifted_boxes()).unwrap_or(0.0)
    }

    /// Internal diameter of the complement; infinite when the cover is empty.
    pub fn internal_diameter(&self) -> Result<f64> {
        if self.is_empty() {
            return Ok(f64::INFINITY);
        }
        internal_diameter(&self.lifted_boxes())
    }

    /// Face-adjacent connected components, with wraparound.
    pub fn components(&self) -> Vec<Component> {
        let mut seen = vec![false; self.bits.len()];
        let mut out = Vec::new();
        let r = self.res as i64;
        for s in self.iter() {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut lift: std::collections::HashMap<usize, Vec<i64>> = std::collections::HashMap::new();
            let start: Vec<i64> = self.unflat(s).iter().map(|&v| v as i64).collect();
            lift.insert(s, start.clone());
            let mut q = VecDeque::from([s]);
            let mut cells = vec![s];
            let mut wraps = false;
            let (mut lo, mut hi) = (start.clone(), start);
            while let Some(c) = q.pop_front() {
                let lc = lift[&c].clone();
                for ax in 0..self.dim {
                    for d in [-1i64, 1] {
                        let mut nl = lc.clone();
                        nl[ax] += d;
                        let idx: Vec<usize> = nl.iter().map(|&v| v.rem_euclid(r) as usize).collect();
                        let nf = self.flat(&idx);
                        if !self.bits[nf] {
                            continue;
                        }
                        match lift.get(&nf) {
                            Some(prev) => {
                                if *prev != nl {
                                    wraps = true;
                                }
                            }
                            None => {
                                seen[nf] = true;
                                for k in 0..self.dim {
                                    lo[k] = lo[k].min(nl[k]);
                                    hi[k] = hi[k].max(nl[k]);
                                }
                                lift.insert(nf, nl);
                                q.push_back(nf);
                                cells.push(nf);
                            }
                        }
                    }
                }
            }
            let diameter = if wraps {
                f64::INFINITY
            } else {
                lo.iter().zip(&hi).map(|(a, b)| (b - a + 1) as f64 / self.res as f64).fold(0.0, f64::max)
            };
            out.push(Component { cells, diameter });
        }
        out
    }

    /// For each cell, the Chebyshev distance in cells to the nearest cell of the cover, capped at `cap`.
    pub fn distance_transform(&self, cap: usize) -> Vec<usize> {
        let mut dt = vec![cap; self.bits.len()];
        let mut q = VecDeque::new();
        for f in self.iter() {
            dt[f] = 0;
            q.push_back(f);
        }
        let offs = self.offsets(1);
        while let Some(c) = q.pop_front() {
            let d = dt[c] + 1;
            if d >= cap {
                continue;
            }
            for o in &offs {
                let nf = self.shifted(c, o);
                if dt[nf] > d {
                    dt[nf] = d;
                    q.push_back(nf);
                }
            }
        }
        dt
    }
}

#[derive(Clone, Debug)]
pub struct Component {
    pub cells: Vec<usize>,
    /// Lifted max-metric diameter; infinite for components that wrap around the torus.
    pub diameter: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Region input: explicit cells at a resolution, or boxes rasterized on demand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RegionSpec {
    Cells {
        res: usize,
        cells: Vec<Vec<usize>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dim: Option<usize>,
    },
    Boxes {
        boxes: Vec<BoxSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        res: Option<usize>,
    },
}

#[inline]
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP {
        r
    } else {
        v
    }
}

impl RegionSpec {
    pub fn native_res(&self) -> Option<usize> {
        match self {
            RegionSpec::Cells { res, .. } => Some(*res),
            RegionSpec::Boxes { res, .. } => *res,
        }
    }

    /// Rasterizes to `res`: cells whose interior meets the open region.
    pub fn to_cover(&self, dim: usize, res: usize) -> Result<GridCover> {
        match self {
            RegionSpec::Cells { res: r0, cells, dim: d0 } => {
                let d = d0.unwrap_or(dim);
                if d != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: d });
                }
                let base = GridCover::from_cells(dim, *r0, cells)?;
                if res % r0 != 0 {
                    return Err(Error::InvalidRegion(format!("resolution {res} is not a multiple of the region's {r0}")));
                }
                base.refine(res / r0)
            }
            RegionSpec::Boxes { boxes, .. } => {
                let mut g = GridCover::empty(dim, res)?;
                for b in boxes {
                    rasterize_box(&mut g, &b.lo, &b.hi)?;
                }
                Ok(g)
            }
        }
    }
}

/// Adds the cells whose interior meets the open box `(lo, hi)` (wrapping).
pub fn rasterize_box(g: &mut GridCover, lo: &[f64], hi: &[f64]) -> Result<()> {
    let n = g.dim();
    if lo.len() != n || hi.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: lo.len().min(hi.len()) });
    }
    let r = g.res() as f64;
    let mut ranges = Vec::with_capacity(n);
    for i in 0..n {
        if !(lo[i] <= hi[i]) {
            return Err(Error::InvalidRegion(format!("box lo[{i}] > hi[{i}]")));
        }
        let (a, b) = (snap(lo[i] * r), snap(hi[i] * r));
        if b <= a {
            return Ok(());
        }
        if b - a >= r {
            ranges.push((0i64, g.res()));
        } else {
            let s = a.floor() as i64;
            let e = b.ceil() as i64;
            ranges.push((s, (e - s) as usize));
        }
    }
    for_each_in_ranges(g.res(), &ranges, |f| {
        g.insert_flat(f);
        true
    });
    Ok(())
}

/// Visits the flat indices of a product of wrapped index ranges; stops when `visit` returns false.
/// Returns false if stopped early.
fn for_each_in_ranges<F: FnMut(usize) -> bool>(res: usize, ranges: &[(i64, usize)], mut visit: F) -> bool {
    let n = ranges.len();
    let total: usize = ranges.iter().map(|r| r.1).product();
    let r = res as i64;
    let mut ctr = vec![0usize; n];
    for _ in 0..total {
        let f = (0..n).rev().fold(0usize, |acc, k| acc * res + (ranges[k].0 + ctr[k] as i64).rem_euclid(r) as usize);
        if !visit(f) {
            return false;
        }
        for k in 0..n {
            ctr[k] += 1;
            if ctr[k] < ranges[k].1 {
                break;
            }
            ctr[k] = 0;
        }
    }
    true
}

/// Outer enclosure of `f(cell)` as wrapped index ranges `(start, count)` per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct CellImage {
    pub ranges: Vec<(i64, usize)>,
    /// Some axis was covered entirely.
    pub wide: bool,
}

/// Encloses the image of cell `idx` at resolution `res`: exact integer image of the linear part,
/// widened by the perturbation range over the cell.
pub fn enclose_cell(map: &MapSpec<f64>, res: usize, idx: &[usize]) -> CellImage {
    let n = map.dim();
    let r = res as f64;
    let lo: Vec<f64> = idx.iter().map(|&i| i as f64 / r).collect();
    let hi: Vec<f64> = idx.iter().map(|&i| (i + 1) as f64 / r).collect();
    let pr = map.perturbation_range(&lo, &hi);
    let mut ranges = Vec::with_capacity(n);
    let mut wide = false;
    for j in 0..n {
        let (mut llo, mut lhi) = (0i64, 0i64);
        for k in 0..n {
            let a = map.linear()[j][k];
            let (p, q) = (a * idx[k] as i64, a * (idx[k] as i64 + 1));
            llo += p.min(q);
            lhi += p.max(q);
        }
        let (plo, phi) = pr[j];
        let infl = if plo != 0.0 || phi != 0.0 { SNAP } else { 0.0 };
        let l = llo as f64 + r * plo - infl;
        let h = lhi as f64 + r * phi + infl;
        if h - l >= r {
            wide = true;
            ranges.push((0, res));
        } else {
            let s = l.floor() as i64;
            let e = h.ceil() as i64;
            ranges.push((s, ((e - s) as usize).min(res)));
        }
    }
    CellImage { ranges, wide }
}

impl CellImage {
    pub fn meets(&self, g: &GridCover) -> bool {
        !for_each_in_ranges(g.res(), &self.ranges, |f| !g.contains_flat(f))
    }

    pub fn inside(&self, g: &GridCover) -> bool {
        for_each_in_ranges(g.res(), &self.ranges, |f| g.contains_flat(f))
    }

    pub fn cells(&self, res: usize) -> Vec<usize> {
        let mut v = Vec::new();
        for_each_in_ranges(res, &self.ranges, |f| {
            v.push(f);
            true
        });
        v
    }
}

/// Outer approximations `L_0 ⊇ L_1 ⊇ ... ⊇ L_depth` of the points whose first `k` iterates avoid `U`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LambdaCover {
    pub depth: usize,
    pub cover: GridCover,
    /// Per cell: the largest `k` with the cell in `L_k`, or -1 for cells of `U`.
    pub depth_survived: Vec<i32>,
    /// `|L_k|` for `k = 0..=depth`.
    pub levels: Vec<usize>,
    pub map_id: String,
    pub region_id: String,
    /// Cells whose image enclosure spans a whole axis.
    pub wide_images: usize,
}

impl LambdaCover {
    pub fn fraction(&self) -> f64 {
        self.cover.fraction()
    }

    pub fn cover_at(&self, k: usize) -> GridCover {
        let bits = self.depth_survived.iter().map(|&d| d >= k as i32).collect();
        GridCover::from_bits(self.cover.dim(), self.cover.res(), bits)
    }
}

/// Short deterministic fingerprint of a serializable value.
pub fn fingerprint<S: Serialize>(v: &S) -> String {
    use std::hash::{Hash, Hasher};
    let s = serde_json::to_string(v).unwrap_or_default();
    let mut h = std::collections::hash_map::DefaultHasher::new();
    s.hash(&mut h);
    format!("{:016x}", h.finish())
}

/// `L_0` = cells outside `U`; `L_k` = cells of `L_{k-1}` whose image enclosure meets `L_{k-1}`.
pub fn compute_lambda_cover(map: &MapSpec<f64>, u: &GridCover, depth: usize) -> Result<LambdaCover> {
    if u.dim() != map.dim() {
        return Err(Error::DimensionMismatch { expected: map.dim(), got: u.dim() });
    }
    let res = u.res();
    let mut cur = u.complement();
    let mut survived: Vec<i32> = cur.bits().iter().map(|&b| if b { 0 } else { -1 }).collect();
    let cand: Vec<usize> = cur.iter().collect();
    let images: Vec<CellImage> = cand.par_iter().map(|&f| enclose_cell(map, res, &u.unflat(f))).collect();
    let wide_images = images.iter().filter(|i| i.wide).count();
    let mut levels = vec![cur.len()];
    let mut alive: Vec<usize> = (0..cand.len()).collect();
    for k in 1..=depth {
        let keep: Vec<usize> = alive.par_iter().copied().filter(|&j| images[j].meets(&cur)).collect();
        let mut next = GridCover::empty(u.dim(), res)?;
        for &j in &keep {
            next.insert_flat(cand[j]);
            survived[cand[j]] = k as i32;
        }
        alive = keep;
        levels.push(next.len());
        let stable = next.len() == cur.len();
        cur = next;
        if stable {
            // fixed point: every deeper level is the same
            for &j in &alive {
                survived[cand[j]] = depth as i32;
            }
            levels.resize(depth + 1, cur.len());
            break;
        }
    }
    Ok(LambdaCover {
        depth,
        cover: cur,
        depth_survived: survived,
        levels,
        map_id: fingerprint(map),
        region_id: fingerprint(u),
        wide_images,
    })
}

/// Largest diameter among components of the complement of a cover.
pub fn max_removed_component(cover: &GridCover) -> f64 {
    cover.complement().components().iter().map(|c| c.diameter).fold(0.0, f64::max)
}

/// Default `U1`: one-cell dilation of `U0`.
pub fn default_u1(u0: &GridCover) -> GridCover {
    u0.dilate(1)
}

/// Default `delta0 = (diam_int(U0^c) + d0) / 2` with `d0` the largest removed component at `depth`.
pub fn default_delta0(map: &MapSpec<f64>, u0: &GridCover, depth: usize) -> Result<(f64, f64)> {
    let di = u0.internal_diameter()?;
    let lam = compute_lambda_cover(map, u0, depth)?;
    let d0 = max_removed_component(&lam.cover);
    let di = if di.is_finite() { di } else { 1.0 };
    Ok(((di + d0) / 2.0, d0))
}

fn frobenius(m: &crate::linalg::Mat<f64>) -> f64 {
    m.rows().iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

/// `|det Df| > sigma` on a grid, optionally inflated by the C2 bound of the terms.
pub fn check_volume_expanding(map: &MapSpec<f64>, grid_step: f64, sigma: f64, rigor: bool) -> Result<Certificate> {
    let t0 = Instant::now();
    if !(sigma > 1.0) {
        return Err(Error::Precondition(format!("sigma = {sigma} must exceed 1")));
    }
    if !(grid_step > 0.0) {
        return Err(Error::Precondition("grid step must be positive".into()));
    }
    let n = map.dim();
    let m = (1.0 / grid_step).ceil();
    let nf = n as f64;
    let (min_det, infl) = if rigor {
        let det = |j: &Mat<f64>| j.det().abs();
        let infl = |j: &Mat<f64>, e: f64| {
            let f = frobenius(j);
            (f + nf * e).powi(n as i32) - f.powi(n as i32)
        };
        let (lower, at) = certified_min_on_cells(map, m as usize, None, sigma, &det, &infl);
        (lower, at)
    } else {
        let pts = grid_points(n, grid_step);
        let d = pts.par_iter().map(|x| map.jacobian_matrix(x).det().abs()).reduce(|| f64::INFINITY, f64::min);
        (d, 0.0)
    };
    let margin = min_det - sigma;
    Ok(Certificate::from_margin("volume_expanding", margin, m as usize)
        .param("sigma", sigma)
        .param("min_abs_det", min_det + infl)
        .param("grid_step", grid_step)
        .param("rigor", rigor)
        .param("inflation", infl)
        .timed(t0))
}

/// Deepest bisection used by the rigorous cell checks.
const RIGOR_MAX_SPLIT: usize = 6;

/// Certified lower bound of `q(Df)` over the box: `q` at the centre minus `infl(Df, e)`, with
/// `e` bounding every entry of `Df(y) - Df(centre)` through the local C2 bound. Boxes where the
/// inflation exceeds half the margin over `threshold` are bisected up to `RIGOR_MAX_SPLIT` times.
/// Returns the bound and the inflation charged where it was attained.
fn certified_min<Q, I>(map: &MapSpec<f64>, lo: &[f64], hi: &[f64], split: usize, threshold: f64, q: &Q, infl: &I) -> (f64, f64)
where
    Q: Fn(&Mat<f64>) -> f64,
    I: Fn(&Mat<f64>, f64) -> f64,
{
    let n = lo.len();
    let c: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
    let h = lo.iter().zip(hi).map(|(a, b)| 0.5 * (b - a)).fold(0.0, f64::max);
    let j = map.jacobian_matrix(&c);
    let e = map.c2_bound_on(lo, hi) * h;
    let inf = infl(&j, e);
    let val = q(&j);
    let lower = val - inf;
    // stop once the inflation costs at most half the pointwise margin
    if inf <= 0.5 * (val - threshold) || split == 0 || e == 0.0 {
        return (lower, inf);
    }
    let mut best = (f64::INFINITY, 0.0);
    for corner in 0..(1usize << n) {
        let (sl, sh): (Vec<f64>, Vec<f64>) =
            (0..n).map(|k| if (corner >> k) & 1 == 0 { (lo[k], c[k]) } else { (c[k], hi[k]) }).unzip();
        let r = certified_min(map, &sl, &sh, split - 1, threshold, q, infl);
        if r.0 < best.0 {
            best = r;
        }
    }
    best
}

/// [`certified_min`] over every cell of the `res` grid, or only the cells of `only`.
fn certified_min_on_cells<Q, I>(map: &MapSpec<f64>, res: usize, only: Option<&GridCover>, threshold: f64, q: &Q, infl: &I) -> (f64, f64)
where
    Q: Fn(&Mat<f64>) -> f64 + Sync,
    I: Fn(&Mat<f64>, f64) -> f64 + Sync,
{
    let n = map.dim();
    let r = res as f64;
    let total = res.pow(n as u32);
    (0..total)
        .into_par_iter()
        .filter(|&f| only.map_or(true, |g| g.contains_flat(f)))
        .map(|mut f| {
            let mut lo = vec![0.0; n];
            let mut hi = vec![0.0; n];
            for k in 0..n {
                let i = f % res;
                f /= res;
                lo[k] = i as f64 / r;
                hi[k] = (i + 1) as f64 / r;
            }
            certified_min(map, &lo, &hi, RIGOR_MAX_SPLIT, threshold, q, infl)
        })
        .reduce(|| (f64::INFINITY, 0.0), |a, b| if b.0 < a.0 { b } else { a })
}

/// Minimum norm of `Df` over corners and centres of the cells outside `u0`, against `lambda`.
/// Also requires `diam(U0) < 1` and reports the internal diameter of the complement.
pub fn check_expanding_on(map: &MapSpec<f64>, u0: &GridCover, lambda: f64, rigor: bool) -> Result<Certificate> {
    let t0 = Instant::now();
    if !(lambda > 1.0) {
        return Err(Error::Precondition(format!("lambda = {lambda} must exceed 1")));
    }
    if u0.dim() != map.dim() {
        return Err(Error::DimensionMismatch { expected: map.dim(), got: u0.dim() });
    }
    let region = u0.complement();
    if region.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let n = map.dim();
    let r = u0.res() as f64;
    let cells: Vec<usize> = region.iter().collect();
    if rigor {
        let (lower, infl) = certified_min_on_cells(map, u0.res(), Some(&region), lambda, &|j: &Mat<f64>| j.min_norm(), &|_, e| n as f64 * e);
        let cert = Certificate::from_margin("expanding_on", lower - lambda, u0.res())
            .param("lambda", lambda)
            .param("min_norm", lower + infl)
            .param("rigor", rigor)
            .param("inflation", infl)
            .param("diam_u0", u0.diameter())
            .param("region_cells", region.len());
        return Ok(finish_expanding(cert, u0).timed(t0));
    }
    let min_norm = cells
        .par_iter()
        .map(|&f| {
            let idx = u0.unflat(f);
            let mut best = f64::INFINITY;
            for c in 0..(1usize << n) {
                let p: Vec<f64> = (0..n).map(|k| (idx[k] + ((c >> k) & 1)) as f64 / r).collect();
                best = best.min(map.jacobian_matrix(&p).min_norm());
            }
            let centre: Vec<f64> = idx.iter().map(|&i| (i as f64 + 0.5) / r).collect();
            best.min(map.jacobian_matrix(&centre).min_norm())
        })
        .reduce(|| f64::INFINITY, f64::min);
    let cert = Certificate::from_margin("expanding_on", min_norm - lambda, u0.res())
        .param("lambda", lambda)
        .param("min_norm", min_norm)
        .param("rigor", rigor)
        .param("inflation", 0.0)
        .param("diam_u0", u0.diameter())
        .param("region_cells", region.len());
    Ok(finish_expanding(cert, u0).timed(t0))
}

fn finish_expanding(cert: Certificate, u0: &GridCover) -> Certificate {
    let cert = match u0.internal_diameter() {
        Ok(d) if d.is_finite() => cert.param("internal_diameter", d),
        Ok(_) => cert.param("internal_diameter", "unbounded (U0 empty)"),
        Err(e) => cert.param("internal_diameter", e.to_string()),
    };
    if u0.diameter() >= 1.0 {
        cert.fail("diam(U0) is not below 1")
    } else {
        cert
    }
}

/// Options of the arc-property check.
#[derive(Clone, Debug)]
pub struct H2Options {
    pub horizon: usize,
    pub samples: usize,
    pub seed: u64,
    /// Depth of the cover of `U1` used for the consistency check of witnesses.
    pub lambda_depth: usize,
    pub chase: ChaseConfig,
}

impl Default for H2Options {
    fn default() -> Self {
        H2Options { horizon: 30, samples: 64, seed: 7, lambda_depth: 6, chase: ChaseConfig::default() }
    }
}

/// Random straight arc in the complement of `u0` with lifted diameter in `(delta0, 1.5 delta0]`.
pub fn sample_arc(rng: &mut ChaCha8Rng, u0: &GridCover, delta0: f64, max_seg: f64) -> Option<ArcPolyline<f64>> {
    let n = u0.dim();
    for _ in 0..10_000 {
        let x0: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let mut dir: Vec<f64> = if rng.gen_bool(0.5) {
            let ax = rng.gen_range(0..n);
            (0..n).map(|k| if k == ax { 1.0 } else { 0.0 }).collect()
        } else {
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
        };
        let mx = dir.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if mx < 1e-3 {
            continue;
        }
        let len = delta0 * (1.0 + 0.5 * (1.0 - rng.gen::<f64>()));
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        dir.iter_mut().for_each(|v| *v *= sign * len / mx);
        let x1: Vec<f64> = x0.iter().zip(&dir).map(|(a, d)| a + d).collect();
        let arc = ArcPolyline::new(vec![x0, x1]).ok()?;
        let clear = arc.densify(max_seg.min(0.25 / u0.res() as f64)).vertices().iter().all(|p| !u0.contains_point(p));
        if clear {
            return Some(arc);
        }
    }
    None
}

/// The arc property: every arc of `U0^c` with diameter above `delta0` has a point whose
/// forward orbit stays outside `U1`. Sampled mode on random arcs, plus the nested-interval
/// certificate when the torus is one-dimensional.
pub fn check_h2_arc_property(
    map: &MapSpec<f64>,
    u0: &GridCover,
    u1: &GridCover,
    delta0: f64,
    opts: &H2Options,
) -> Result<Certificate> {
    let t0 = Instant::now();
    let di = u0.internal_diameter()?;
    if !(delta0 > 0.0 && delta0 < di) {
        return Err(Error::Precondition(format!("need 0 < delta0 = {delta0} < diam_int(U0^c) = {di}")));
    }
    if opts.horizon == 0 {
        return Err(Error::Precondition("horizon must be at least 1".into()));
    }
    if u1.res() != u0.res() || u1.dim() != map.dim() {
        return Err(Error::InvalidRegion("U0 and U1 must share the map's grid".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let cfg = ChaseConfig { horizon: opts.horizon, skip: 0, ..opts.chase.clone() };
    let arcs: Vec<ArcPolyline<f64>> =
        (0..opts.samples).filter_map(|_| sample_arc(&mut rng, u0, delta0, cfg.max_seg)).collect();
    let lam = compute_lambda_cover(map, u1, opts.lambda_depth.min(opts.horizon.saturating_sub(1)))?;
    let outcomes: Vec<(bool, bool, String)> = arcs
        .par_iter()
        .map(|arc| {
            let out = chase(map, arc, |x, _| u1.contains_point(x), &cfg);
            match out {
                ChaseOutcome::Found(w) => {
                    let ok = w.clean && w.dist_to_arc < 1e-6;
                    let in_lambda = lam.cover.contains_point(&w.orbit[1]);
                    (ok && in_lambda, false, String::new())
                }
                ChaseOutcome::Budget { deepest, .. } => (false, true, format!("budget exhausted at depth {deepest}")),
                ChaseOutcome::Exhausted { deepest, .. } => (false, false, format!("all points enter U1 by step {}", deepest + 1)),
                ChaseOutcome::PullbackFailed { depth } => (false, true, format!("pullback failed at depth {depth}")),
            }
        })
        .collect();
    let found = outcomes.iter().filter(|o| o.0).count();
    let budget = outcomes.iter().filter(|o| !o.0 && o.1).count();
    let failed = outcomes.len() - found - budget;
    let sampled = if arcs.len() < opts.samples {
        Verdict::Inconclusive
    } else if failed > 0 {
        Verdict::Fail
    } else if budget > 0 {
        Verdict::Inconclusive
    } else {
        Verdict::Pass
    };
    let certified = if map.dim() == 1 { Some(h2_certified_1d(map, u0, u1, delta0)) } else { None };
    let mut verdicts = vec![sampled];
    if let Some((v, _)) = &certified {
        verdicts.push(*v);
    }
    let verdict = Certificate::worst(verdicts);
    let denom = outcomes.len().max(1) as f64;
    let margin = match verdict {
        Verdict::Pass => di - delta0,
        _ => -((failed + budget) as f64 / denom).max(f64::MIN_POSITIVE),
    };
    let mut cert = Certificate::from_margin("h2_arc_property", margin, u0.res())
        .param("delta0", delta0)
        .param("internal_diameter", di)
        .param("horizon", opts.horizon)
        .param("samples", opts.samples)
        .param("arcs_sampled", arcs.len())
        .param("witnesses", found)
        .param("failed_arcs", failed)
        .param("budget_exhausted", budget)
        .param("seed", opts.seed)
        .param("sampled_verdict", sampled)
        .note("sampled mode: statistical evidence over random arcs, not proof");
    if let Some(msg) = outcomes.iter().find(|o| !o.0).map(|o| o.2.clone()) {
        cert = cert.note(format!("first failing arc: {msg}"));
    }
    cert = match certified {
        Some((v, detail)) => cert.param("certified_verdict", v).note(detail),
        None => cert.param("certified_verdict", "not applicable").note("certified mode needs a one-dimensional torus"),
    };
    cert.verdict = verdict;
    Ok(cert.timed(t0))
}

/// Greatest fixed point of good `m`-cell intervals of `U1^c` whose exact image contains a good
/// interval; then every window of `m + 2` cells of `U0^c` must hold a good interval.
pub fn h2_certified_1d(map: &MapSpec<f64>, u0: &GridCover, u1: &GridCover, delta0: f64) -> (Verdict, String) {
    let res = u0.res();
    let r = res as f64;
    let m = (delta0 * r).floor() as i64 - 3;
    if m < 1 {
        return (Verdict::Inconclusive, format!("certified mode: resolution {res} too coarse for delta0 {delta0}"));
    }
    let m = m as usize;
    let free = |i: usize| !u1.contains_flat(i % res);
    let mut good: Vec<bool> = (0..res).map(|a| (0..m).all(|k| free(a + k))).collect();
    let sign = map.linear()[0][0].signum() as f64;
    let ranges: Vec<(f64, f64)> = (0..res)
        .map(|a| {
            let p = map.eval_lift_raw(&[a as f64 / r])[0] * r;
            let q = map.eval_lift_raw(&[(a + m) as f64 / r])[0] * r;
            if sign > 0.0 {
                (p, q)
            } else {
                (q, p)
            }
        })
        .collect();
    loop {
        let mut pre = vec![0usize; 2 * res + 1];
        for i in 0..2 * res {
            pre[i + 1] = pre[i] + good[i % res] as usize;
        }
        let any_good = |lo: i64, hi: i64| -> bool {
            if hi < lo {
                return false;
            }
            if hi - lo + 1 >= res as i64 {
                return pre[res] > 0;
            }
            let s = lo.rem_euclid(res as i64) as usize;
            let len = (hi - lo + 1) as usize;
            pre[s + len] > pre[s]
        };
        let mut changed = false;
        for a in 0..res {
            if !good[a] {
                continue;
            }
            let (l, h) = ranges[a];
            let lo = (l + SNAP).ceil() as i64;
            let hi = (h - SNAP).floor() as i64 - m as i64;
            if !any_good(lo, hi) {
                good[a] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut windows = 0usize;
    let mut bad = 0usize;
    for s in 0..res {
        if (0..m + 2).all(|k| !u0.contains_flat((s + k) % res)) {
            windows += 1;
            if !(0..3).any(|k| good[(s + k) % res]) {
                bad += 1;
            }
        }
    }
    let v = if bad == 0 { Verdict::Pass } else { Verdict::Fail };
    (v, format!("certified mode: {bad} of {windows} windows of {} cells lack a surviving interval", m + 2))
}

/// Every cell outside `U1` has an inverse branch whose image of the cell stays outside `U1`.
pub fn check_h3_surjectivity_off_u1(map: &MapSpec<f64>, u1: &GridCover) -> Result<Certificate> {
    let t0 = Instant::now();
    if u1.dim() != map.dim() {
        return Err(Error::DimensionMismatch { expected: map.dim(), got: u1.dim() });
    }
    let res = u1.res();
    let r = res as f64;
    let n = map.dim();
    let cap = res.max(2);
    let dt = u1.distance_transform(cap);
    let safety = 1.25;
    let half = 0.5 / r * (n as f64).sqrt() * safety;
    let cells: Vec<usize> = u1.complement().iter().collect();
    let branch_clearance = |p: &[f64]| -> usize {
        let mn = map.jacobian_matrix(p).min_norm();
        if mn <= 0.0 {
            return 0;
        }
        let rad = half / mn;
        let ranges: Vec<(i64, usize)> = p
            .iter()
            .map(|&x| {
                let a = ((x - rad) * r).floor() as i64;
                let b = ((x + rad) * r).floor() as i64;
                (a, ((b - a + 1) as usize).min(res))
            })
            .collect();
        let mut c = usize::MAX;
        for_each_in_ranges(res, &ranges, |f| {
            c = c.min(dt[f]);
            c > 0
        });
        c
    };
    let results: Vec<std::result::Result<usize, String>> = cells
        .par_iter()
        .map(|&f| {
            let centre: Vec<f64> = u1.unflat(f).iter().map(|&i| (i as f64 + 0.5) / r).collect();
            let pre = map.preimages_lift(&centre, 1e-12).map_err(|e| e.to_string())?;
            Ok(pre.iter().map(|(p, _)| branch_clearance(&p.iter().map(|&v| frac(v)).collect::<Vec<_>>())).max().unwrap_or(0))
        })
        .collect();
    let mut worst = usize::MAX;
    let mut failures = 0usize;
    let mut errors = Vec::new();
    for res_c in &results {
        match res_c {
            Ok(c) => {
                worst = worst.min(*c);
                if *c == 0 {
                    failures += 1;
                }
            }
            Err(e) => {
                failures += 1;
                worst = 0;
                if errors.len() < 3 {
                    errors.push(e.clone());
                }
            }
        }
    }
    let margin = if cells.is_empty() {
        1.0
    } else if failures == 0 {
        (worst as f64 / r).min(1.0)
    } else {
        -(failures as f64) / cells.len() as f64
    };
    let mut cert = Certificate::from_margin("h3_surjectivity", margin, res)
        .param("cells_checked", cells.len())
        .param("cells_without_branch", failures)
        .param("branch_radius_safety", safety);
    for e in errors {
        cert = cert.note(e);
    }
    let paths = inverse_paths(map, u1, &dt, 5, 8);
    cert = cert.param("inverse_paths", paths);
    Ok(cert.timed(t0))
}

/// Spot-check witnesses: sequences `z_0, z_1, ...` with `f(z_{k+1}) = z_k`, all outside `U1`.
pub fn inverse_paths(map: &MapSpec<f64>, u1: &GridCover, dt: &[usize], count: usize, len: usize) -> Vec<Vec<Vec<f64>>> {
    let free: Vec<usize> = u1.complement().iter().collect();
    if free.is_empty() {
        return Vec::new();
    }
    let r = u1.res() as f64;
    (0..count.min(free.len()))
        .map(|j| {
            let f = free[j * free.len() / count.min(free.len())];
            let mut z: Vec<f64> = u1.unflat(f).iter().map(|&i| (i as f64 + 0.5) / r).collect();
            let mut path = vec![z.clone()];
            for _ in 0..len {
                let Ok(pre) = map.preimages_lift(&z, 1e-12) else { break };
                let best = pre
                    .into_iter()
                    .map(|(p, _)| p.into_iter().map(frac).collect::<Vec<_>>())
                    .max_by_key(|p| dt[u1.cell_of(p)]);
                match best {
                    Some(p) if !u1.contains_point(&p) => {
                        z = p;
                        path.push(z.clone());
                    }
                    _ => break,
                }
            }
            path
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tripling() -> MapSpec<f64> {
        MapSpec::diagonal(&[3]).unwrap()
    }

    fn middle_third(res: usize) -> GridCover {
        RegionSpec::Boxes { boxes: vec![BoxSpec { lo: vec![1.0 / 3.0], hi: vec![2.0 / 3.0] }], res: None }
            .to_cover(1, res)
            .unwrap()
    }

    #[test]
    fn rasterize_snaps_to_cells() {
        let u = middle_third(27);
        assert_eq!(u.len(), 9);
        assert!(u.contains(&[9]) && u.contains(&[17]) && !u.contains(&[18]));
        let wrap = RegionSpec::Boxes { boxes: vec![BoxSpec { lo: vec![-0.05], hi: vec![0.05] }], res: None }
            .to_cover(1, 20)
            .unwrap();
        assert_eq!(wrap.cells(), vec![vec![0], vec![19]]);
        assert!((wrap.diameter() - 0.1).abs() < 1e-12);
        assert!((wrap.internal_diameter().unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn cantor_levels() {
        let lam = compute_lambda_cover(&tripling(), &middle_third(27), 3).unwrap();
        assert_eq!(lam.levels, vec![18, 12, 8, 8]);
        assert_eq!(lam.cover.len(), 8);
        let lam0 = compute_lambda_cover(&tripling(), &middle_third(27), 0).unwrap();
        assert_eq!(lam0.cover, middle_third(27).complement());
    }

    #[test]
    fn volume_examples() {
        let c = check_volume_expanding(&MapSpec::diagonal(&[2, 3]).unwrap(), 0.1, 5.0, false).unwrap();
        assert!(c.passed() && (c.margin - 1.0).abs() < 1e-12);
        let c = check_volume_expanding(&MapSpec::diagonal(&[1, 1]).unwrap(), 0.1, 1.01, false).unwrap();
        assert!(!c.passed() && (c.margin + 0.01).abs() < 1e-12);
        assert!(check_volume_expanding(&MapSpec::diagonal(&[2]).unwrap(), 0.1, 1.0, false).is_err());
    }

    #[test]
    fn expanding_on_tripling() {
        let c = check_expanding_on(&tripling(), &middle_third(27), 2.5, false).unwrap();
        assert!(c.passed() && (c.margin - 0.5).abs() < 1e-12);
        assert!(matches!(
            check_expanding_on(&tripling(), &GridCover::full(1, 3).unwrap(), 2.0, false),
            Err(Error::EmptyRegion)
        ));
    }

    #[test]
    fn h3_examples() {
        let f = tripling();
        let res = 243;
        let u1 = RegionSpec::Boxes { boxes: vec![BoxSpec { lo: vec![1.0 / 3.0 - 0.05], hi: vec![2.0 / 3.0 + 0.05] }], res: None }
            .to_cover(1, res)
            .unwrap();
        assert!(check_h3_surjectivity_off_u1(&f, &u1).unwrap().passed());
        let empty = GridCover::empty(1, res).unwrap();
        let c = check_h3_surjectivity_off_u1(&f, &empty).unwrap();
        assert!(c.passed() && c.margin == 1.0);
        let mut all_but_one = GridCover::full(1, res).unwrap();
        all_but_one.remove_flat(100);
        assert!(!check_h3_surjectivity_off_u1(&f, &all_but_one).unwrap().passed());
    }

    #[test]
    fn components_and_dilation() {
        let mut g = GridCover::empty(2, 8).unwrap();
        g.insert(&[0, 0]);
        g.insert(&[7, 0]);
        g.insert(&[4, 4]);
        let comps = g.components();
        assert_eq!(comps.len(), 2);
        assert!(comps.iter().any(|c| (c.diameter - 0.25).abs() < 1e-12));
        assert_eq!(g.dilate(1).len(), 4 * 3 + 9);
        let row = GridCover::from_cells(2, 4, &[vec![0, 1], vec![1, 1], vec![2, 1], vec![3, 1]]).unwrap();
        assert!(row.components()[0].diameter.is_infinite());
    }

    #[test]
    fn region_json_forms() {
        let c: RegionSpec = serde_json::from_str(r#"{"res":3,"cells":[[1]]}"#).unwrap();
        assert_eq!(c.to_cover(1, 9).unwrap().cells(), vec![vec![3], vec![4], vec![5]]);
        let b: RegionSpec = serde_json::from_str(r#"{"boxes":[{"lo":[0.25,0.25],"hi":[0.5,0.5]}]}"#).unwrap();
        assert_eq!(b.to_cover(2, 8).unwrap().len(), 4);
        let g: GridCover = serde_json::from_str(r#"{"res":4,"cells":[[1,2]]}"#).unwrap();
        assert!(g.contains(&[1, 2]));
        let back: GridCover = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
        assert_eq!(back, g);
    }
}
