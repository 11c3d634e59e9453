//! Property tests for the module invariants.

use proptest::prelude::*;
use robust_transit::cones::{check_cone_invariance, check_domination, ConeFamily};
use robust_transit::map::c1_distance;
use robust_transit::region::{compute_lambda_cover, enclose_cell, rasterize_box, GridCover};
use robust_transit::shadow::{conjugacy_point, shadow, PseudoOrbit};
use robust_transit::torus::{diameter, internal_diameter, torus_dist, torus_dist_raw, Shape};
use robust_transit::transit::{build_transition_graph, diameter_curve, extract_slab_crossing, preorbit_density, slab_bounds};
use robust_transit::{BoxRegion, MapSpec, Term, TorusPoint};

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

fn frac(x: f64) -> f64 {
    x - x.floor()
}

fn perturbed_23(amp: f64, phase: f64) -> MapSpec {
    MapSpec::new(
        vec![vec![2, 0], vec![0, 3]],
        vec![
            Term::Trig { k: vec![1, 0], amp, phase, coord: 0 },
            Term::Trig { k: vec![0, 1], amp: 0.5 * amp, phase: 0.3, coord: 1 },
            Term::Trig { k: vec![1, 1], amp: 0.5 * amp, phase: 1.1, coord: 0 },
        ],
    )
    .unwrap()
}

fn doubling() -> MapSpec {
    MapSpec::diagonal(&[2]).unwrap()
}

fn perturbed_doubling() -> MapSpec {
    MapSpec::new(vec![vec![2]], vec![Term::Trig { k: vec![1], amp: 0.01, phase: 0.0, coord: 0 }]).unwrap()
}

fn point2() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, 2)
}

// torus geometry

proptest! {
    #![proptest_config(cfg(256))]

    #[test]
    fn torus_dist_is_a_metric(x in point2(), y in point2(), z in point2()) {
        let (px, py, pz) = (TorusPoint::new(x.clone()).unwrap(), TorusPoint::new(y).unwrap(), TorusPoint::new(z).unwrap());
        let dxy = torus_dist(&px, &py).unwrap();
        prop_assert_eq!(dxy, torus_dist(&py, &px).unwrap());
        prop_assert!(dxy >= 0.0 && dxy <= 0.5);
        prop_assert!(torus_dist(&px, &pz).unwrap() <= dxy + torus_dist(&py, &pz).unwrap() + 1e-15);
        prop_assert_eq!(torus_dist(&px, &px).unwrap(), 0.0);
        if dxy == 0.0 {
            prop_assert_eq!(px.coords(), py.coords());
        }
    }

    #[test]
    fn project_inverts_lift_on_any_sheet(x in point2(), k in prop::collection::vec(-5i64..=5, 2)) {
        let p = TorusPoint::new(x).unwrap();
        let q = p.lift().translate(&k).project();
        prop_assert!(torus_dist(&p, &q).unwrap() < 1e-14);
        prop_assert_eq!(robust_transit::torus::LiftPoint(p.coords().to_vec()).project(), p);
    }

    #[test]
    fn single_box_internal_diameter_complements_diameter(
        lo in point2(),
        side in prop::collection::vec(0.01..0.95f64, 2),
        k in prop::collection::vec(-3i64..=3, 2),
    ) {
        let hi: Vec<f64> = lo.iter().zip(&side).map(|(a, s)| a + s).collect();
        let b = BoxRegion::new(lo, hi, true).unwrap();
        let di = internal_diameter(std::slice::from_ref(&b)).unwrap();
        let d = diameter(Shape::Box(&b), true).unwrap();
        prop_assert!(di + d <= 1.0 + 1e-12);
        let moved = internal_diameter(&[b.translate(&k)]).unwrap();
        prop_assert!((moved - di).abs() < 1e-12);
    }
}

// map model

fn dyadic() -> impl Strategy<Value = f64> {
    (0u32..(1 << 20)).prop_map(|m| m as f64 / (1u32 << 20) as f64)
}

proptest! {
    #![proptest_config(cfg(128))]

    #[test]
    fn lift_is_equivariant(
        x in prop::collection::vec(dyadic(), 2),
        k in prop::collection::vec(-6i64..=6, 2),
        amp in 0.0..0.1f64,
    ) {
        let f = MapSpec::new(
            vec![vec![2, 1], vec![1, 3]],
            vec![Term::Trig { k: vec![1, 2], amp, phase: 0.4, coord: 1 }],
        )
        .unwrap();
        let xk: Vec<f64> = x.iter().zip(&k).map(|(a, b)| a + *b as f64).collect();
        let d: Vec<f64> = f.eval_lift_raw(&xk).iter().zip(f.eval_lift_raw(&x)).map(|(a, b)| a - b).collect();
        let ak = [(2 * k[0] + k[1]) as f64, (k[0] + 3 * k[1]) as f64];
        if amp == 0.0 {
            prop_assert_eq!(d, ak.to_vec());
        } else {
            // the perturbation is evaluated on the same reduced point; only the final sums round
            let scale = f.eval_lift_raw(&xk).iter().chain(&f.eval_lift_raw(&x)).fold(1.0f64, |m, v| m.max(v.abs()));
            for i in 0..2 {
                prop_assert!((d[i] - ak[i]).abs() <= 4.0 * f64::EPSILON * scale, "coordinate {i}: {} vs {}", d[i], ak[i]);
            }
        }
    }

    #[test]
    fn jacobian_matches_central_differences(x in point2(), amp in 0.0..0.05f64, phase in 0.0..6.0f64) {
        let f = perturbed_23(amp, phase);
        let j = f.jacobian_matrix(&x);
        let h = 1e-6;
        for c in 0..2 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += h;
            xm[c] -= h;
            let (fp, fm) = (f.eval_lift_raw(&xp), f.eval_lift_raw(&xm));
            for r in 0..2 {
                let fd = (fp[r] - fm[r]) / (2.0 * h);
                let exact = j[(r, c)];
                prop_assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1.0), "entry ({r},{c}): {fd} vs {exact}");
            }
        }
    }

    #[test]
    fn preimages_round_trip_and_count(x in point2(), amp in 0.0..0.05f64) {
        let f = perturbed_23(amp, 0.7);
        let y = f.eval_raw(&x);
        let pre = f.preimages(&TorusPoint::new(y.clone()).unwrap(), 1e-12).unwrap();
        prop_assert_eq!(pre.len(), 6);
        let best = pre.iter().map(|(p, _)| torus_dist_raw(p.coords(), &x)).fold(f64::INFINITY, f64::min);
        prop_assert!(best < 1e-9, "nearest preimage at {best}");
        for (p, _) in &pre {
            prop_assert!(torus_dist_raw(&f.eval_raw(p.coords()), &y) < 1e-9);
        }
    }

    #[test]
    fn preimage_count_is_the_degree(y in point2(), a in 2i64..4, b in -1i64..=1, d in 2i64..4) {
        let f = MapSpec::new(vec![vec![a, b], vec![0, d]], vec![Term::Trig { k: vec![0, 1], amp: 0.02, phase: 0.0, coord: 0 }]).unwrap();
        let pre = f.preimages(&TorusPoint::new(y).unwrap(), 1e-12).unwrap();
        prop_assert_eq!(pre.len() as i64, a * d);
    }
}

// region analysis

fn u_box(res: usize, lo: &[f64], side: f64) -> GridCover {
    let mut u = GridCover::empty(2, res).unwrap();
    let hi: Vec<f64> = lo.iter().map(|a| a + side).collect();
    rasterize_box(&mut u, lo, &hi).unwrap();
    u
}

proptest! {
    #![proptest_config(cfg(16))]

    #[test]
    fn lambda_cover_is_nested_sound_and_invariant(
        lo in point2(),
        side in 0.1..0.35f64,
        amp in 0.0..0.04f64,
        seeds in prop::collection::vec(point2(), 64),
    ) {
        let f = perturbed_23(amp, 0.2);
        let res = 48;
        let depth = 4;
        let u = u_box(res, &lo, side);
        let lam = compute_lambda_cover(&f, &u, depth).unwrap();
        let levels: Vec<GridCover> = (0..=depth).map(|k| lam.cover_at(k)).collect();
        for k in 0..depth {
            prop_assert!(levels[k + 1].is_subset(&levels[k]), "level {} not inside level {k}", k + 1);
            // every cell of L_{k+1} is hit by the image enclosure of some cell of L_k
            let mut hit = GridCover::empty(2, res).unwrap();
            for c in levels[k].iter() {
                for g in enclose_cell(&f, res, &levels[k].unflat(c)).cells(res) {
                    hit.insert_flat(g);
                }
            }
            prop_assert!(levels[k + 1].is_subset(&hit), "level {} escapes the image of level {k}", k + 1);
        }
        for x in seeds {
            let mut p = x.clone();
            let mut avoid = 0;
            while avoid <= depth && !u.contains_point(&p) {
                avoid += 1;
                p = f.eval_raw(&p);
            }
            // `avoid` iterates x, f x, ... stayed outside U
            if avoid > 0 {
                prop_assert!(levels[avoid - 1].contains_point(&x), "orbit avoids U for {avoid} points but the cell is gone");
            }
        }
    }

    #[test]
    fn cantor_fraction_is_exact(k in 1usize..8) {
        let res = 3usize.pow(k as u32);
        let mut u = GridCover::empty(1, res).unwrap();
        rasterize_box(&mut u, &[1.0 / 3.0], &[2.0 / 3.0]).unwrap();
        let lam = compute_lambda_cover(&MapSpec::diagonal(&[3]).unwrap(), &u, k).unwrap();
        prop_assert_eq!(lam.cover.len(), 2usize.pow(k as u32));
        prop_assert_eq!(lam.cover.len() * 3usize.pow(k as u32), res * 2usize.pow(k as u32));
    }
}

// shadowing and conjugacy

proptest! {
    #![proptest_config(cfg(64))]

    #[test]
    fn shadowing_error_stays_below_the_bound(
        start in 0.0..1.0f64,
        log_delta in -6.0..-3.0f64,
        noise in prop::collection::vec(-1.0..1.0f64, 60),
    ) {
        let f = doubling();
        let delta = 10f64.powf(log_delta);
        let mut pts = vec![vec![start]];
        for e in &noise {
            let last = pts.last().unwrap()[0];
            pts.push(vec![frac(2.0 * last + 0.999 * delta * e)]);
        }
        let po = PseudoOrbit::new(&f, pts, delta).unwrap();
        let r = shadow(&f, &po, None, 2.0).unwrap();
        prop_assert!(r.eta <= 2.0 * delta, "eta {} above {}", r.eta, 2.0 * delta);
        prop_assert!(PseudoOrbit::defect(&f, &r.orbit) < 1e-12);
    }

    #[test]
    fn conjugacy_of_a_map_with_itself_is_the_identity(x in 0.0..1.0f64) {
        let f = perturbed_doubling();
        let h = conjugacy_point(&f, &f, &[x], 40, None).unwrap();
        prop_assert!(torus_dist_raw(&h, &[x]) < 1e-9);
    }

    #[test]
    fn conjugacy_is_equivariant_and_close_to_identity(x in 0.0..1.0f64) {
        let (f, g) = (doubling(), perturbed_doubling());
        let w = 50;
        let hx = conjugacy_point(&f, &g, &[x], w, None).unwrap();
        let hgx = conjugacy_point(&f, &g, &g.eval_raw(&[x]), w, None).unwrap();
        prop_assert!(torus_dist_raw(&hgx, &f.eval_raw(&hx)) < 1e-9);
        let c0 = c1_distance(&f, &g, 1e-3).unwrap();
        prop_assert!(c0 >= 0.01 - 1e-9);
        // the C0 part of the distance is the amplitude 0.01
        prop_assert!(torus_dist_raw(&hx, &[x]) <= 0.01 * 2.0 + 1e-9);
    }
}

// transitivity engine

proptest! {
    #![proptest_config(cfg(24))]

    #[test]
    fn simulated_orbits_follow_graph_paths(
        pts in prop::collection::vec(point2(), 16),
        steps in 1usize..5,
        amp in 0.0..0.04f64,
    ) {
        let f = perturbed_23(amp, 0.9);
        let res = 24;
        let g = build_transition_graph(&f, res).unwrap();
        let grid = GridCover::empty(2, res).unwrap();
        for x in pts {
            let mut y = x.clone();
            for _ in 0..steps {
                y = f.eval_raw(&y);
            }
            let (a, b) = (grid.cell_of(&x), grid.cell_of(&y));
            prop_assert!(g.reaches(a, b), "no path {a} -> {b}");
        }
    }

    #[test]
    fn preorbit_density_is_monotone_in_depth(x in 0.0..1.0f64, y in 0.0..1.0f64, log_eps in -5.0..-1.0f64, d in 1usize..4) {
        let f = perturbed_23(0.02, 0.1);
        let eps = 2f64.powf(log_eps);
        let now = preorbit_density(&f, &[x, y], d, eps).unwrap();
        if now.passed() {
            for deeper in d + 1..=5 {
                prop_assert!(preorbit_density(&f, &[x, y], deeper, eps).unwrap().passed(), "pass at {d}, not at {deeper}");
            }
        }
    }

    #[test]
    fn linear_diameter_grows_at_least_geometrically(
        a in 2i64..4,
        d in 2i64..4,
        sa in prop::bool::ANY,
        swap in prop::bool::ANY,
        lo in point2(),
        side in 0.01..0.1f64,
    ) {
        let a = if sa { -a } else { a };
        let lin = if swap { vec![vec![0, a], vec![d, 0]] } else { vec![vec![a, 0], vec![0, d]] };
        let f = MapSpec::linear_only(lin).unwrap();
        let hi: Vec<f64> = lo.iter().map(|v| v + side).collect();
        let v = BoxRegion::new(lo, hi, true).unwrap();
        let curve = diameter_curve(&f, &v, 4, 0.05);
        let m = a.abs().min(d) as f64;
        for (k, dk) in curve.iter().enumerate() {
            let bound = m.powi(k as i32) * side;
            prop_assert!(*dk >= bound * (1.0 - 1e-12), "step {k}: {dk} < {bound}");
        }
    }

    #[test]
    fn long_polylines_cross_a_slab(
        lo in point2(),
        side in 0.05..0.6f64,
        start in prop::collection::vec(-2.0..2.0f64, 2),
        steps in prop::collection::vec(prop::collection::vec(-1.5..1.5f64, 2), 4..30),
        axis in 0usize..2,
    ) {
        let u = u_box(32, &lo, side);
        let bounds = slab_bounds(&u);
        let mut pts = vec![start];
        for s in &steps {
            let last = pts.last().unwrap().clone();
            pts.push(last.iter().zip(s).map(|(a, b)| a + b).collect());
        }
        // force a lifted spread above m = 3 along one axis
        let last = pts.last().unwrap().clone();
        let mut far = last.clone();
        far[axis] = pts[0][axis] + 3.2;
        pts.push(far);
        prop_assert!(extract_slab_crossing(&pts, &bounds).is_some());
    }
}

// cone fields

proptest! {
    #![proptest_config(cfg(24))]

    #[test]
    fn cone_margin_is_monotone_past_the_critical_opening(a in 1i64..3, gap in 1i64..3, s in -2i64..=2) {
        let b = a + gap;
        let f = MapSpec::linear_only(vec![vec![a, s], vec![0, b]]).unwrap();
        let critical = s.abs() as f64 / gap as f64;
        let mut last = f64::NEG_INFINITY;
        for i in 1..=12 {
            let kappa = critical + 0.25 * i as f64;
            let c = check_cone_invariance(&f, &ConeFamily::axes(2, &[0], kappa).unwrap(), 0.25).unwrap();
            prop_assert!(c.margin >= last - 1e-12, "margin dropped at kappa {kappa}: {} < {last}", c.margin);
            prop_assert!(c.passed());
            last = c.margin;
        }
    }

    #[test]
    fn domination_implies_cone_invariance(a in 1i64..4, b in 1i64..5, s in -1i64..=1, kappa in 0.2..4.0f64, lambda in 0.3..0.99f64) {
        let f = MapSpec::linear_only(vec![vec![a, s], vec![0, b]]).unwrap();
        let cones = ConeFamily::axes(2, &[0], kappa).unwrap();
        let dom = check_domination(&f, &cones, lambda, 0.5).unwrap();
        if dom.passed() {
            // the constant splitting keeps E^c but tilts E^u to (s, b - a); the induced
            // opening must reach that direction
            prop_assert!(b > a);
            let induced = kappa + s.abs() as f64 / (b - a) as f64;
            let inv = check_cone_invariance(&f, &cones.with_kappa(induced).unwrap(), 0.5).unwrap();
            prop_assert!(inv.passed(), "domination margin {} but cone margin {}", dom.margin, inv.margin);
        }
    }
}

