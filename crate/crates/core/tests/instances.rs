//! Instance-level properties of the gallery and worked examples with independent oracles.

use robust_transit::cones::{check_cone_invariance, check_domination, check_disc_hypothesis, ConeFamily, DiscOptions};
use robust_transit::gallery::*;
use robust_transit::region::{check_expanding_on, check_volume_expanding, compute_lambda_cover};
use robust_transit::shadow::conjugacy_point;
use robust_transit::torus::torus_dist_raw;
use robust_transit::{Error, MapSpec, Term};
use std::f64::consts::PI;

fn ex3() -> ExampleInstance {
    build_example3(0.25, 0.5, 0.5, 0.75, 49, 1.0).unwrap()
}

#[test]
fn example1_volume_margin_decreases_with_amplitude() {
    let mut margins = Vec::new();
    let mut amp = 0.0;
    loop {
        match build_example1(4, amp, PI / 4.0) {
            Ok(inst) => {
                let c = check_volume_expanding(&inst.map, 1.0 / 128.0, inst.sigma, false).unwrap();
                margins.push((amp, c.margin));
            }
            Err(Error::Refused(_)) => break,
            Err(e) => panic!("unexpected error {e}"),
        }
        amp += 0.25;
    }
    assert!(margins.len() >= 12, "guard reached after {} steps", margins.len());
    for w in margins.windows(2) {
        assert!(w[1].1 <= w[0].1 + 1e-12, "margin rises from {:?} to {:?}", w[0], w[1]);
    }
    assert!(margins.iter().all(|m| m.1 > 0.0), "{margins:?}");
    // the step size bounds the jump: det is affine in the amplitude on the pitchfork line
    for w in margins.windows(2) {
        assert!(w[0].1 - w[1].1 <= 4.0 * 0.25 + 1e-9, "{:?} -> {:?}", w[0], w[1]);
    }
}

#[test]
fn example1_h1_fails_inside_u0_and_holds_outside() {
    let inst = build_example1(4, 3.2, PI / 4.0).unwrap();
    assert!(check_expanding_on(&inst.map, &inst.u0, inst.lambda, false).unwrap().passed());
    // min over U0 of the smallest singular value: the pitchfork point itself has 4 - 3.2
    let weakest = inst
        .u0
        .iter()
        .map(|f| {
            let b = inst.u0.cell_box(f);
            inst.map.jacobian_matrix(&b.center()).min_norm()
        })
        .fold(f64::INFINITY, f64::min);
    assert!(weakest < inst.lambda, "weakest {weakest}");
    let at_p = inst.map.jacobian_matrix(&[1.0 / 3.0, 1.0 / 3.0]);
    assert!((at_p.min_norm() - 0.8).abs() < 1e-9);
    assert!(at_p.det().abs() > inst.sigma);
}

#[test]
fn example2_without_removed_cells_is_plain() {
    let inst = build_example2(3, &[], 0.5).unwrap();
    assert!(inst.u0.is_empty());
    let lam = compute_lambda_cover(&inst.map, &inst.u0, 6).unwrap();
    assert_eq!(lam.cover.len(), lam.cover.total());
}

#[test]
fn example3_invariant_sets_are_disjoint() {
    let inst = ex3();
    let l1 = rect_cover(&inst, &inst.map, 0, inst.depth).unwrap();
    let l2 = rect_cover(&inst, &inst.map, 1, inst.depth).unwrap();
    assert!(!l1.cover.is_empty() && !l2.cover.is_empty());
    assert!(l1.cover.intersection(&l2.cover).unwrap().is_empty());
}

#[test]
fn example3_vertical_segments_meet_the_invariant_sets() {
    let inst = ex3();
    let report = vertical_segments(&inst, &inst.map, 48, 5, inst.depth).unwrap();
    assert_eq!(report.hits, report.tried, "{:?}", report.failures);
}

#[test]
fn example3_domination_and_cones_agree() {
    let inst = ex3();
    let cones = inst.cones.clone().unwrap();
    let dom = check_domination(&inst.map, &cones, inst.lambda, 1.0 / 64.0).unwrap();
    let inv = check_cone_invariance(&inst.map, &cones, 1.0 / 64.0).unwrap();
    assert!(dom.passed() && inv.passed(), "domination {} cones {}", dom.margin, inv.margin);
}

#[test]
fn example3_witness_cover_is_forward_invariant() {
    let inst = ex3();
    let cones = inst.cones.clone().unwrap();
    let opts = DiscOptions { lambda0: 1.01, samples: 8, cover_res: 64, cover_depth: 3, ..DiscOptions::default() };
    let c = check_disc_hypothesis(&inst.map, &cones, &opts).unwrap();
    assert_eq!(c.params["cover_forward_invariant"], serde_json::json!(true), "{:?}", c.params);
}

#[test]
fn linear_cone_examples() {
    let f = MapSpec::diagonal(&[2, 3]).unwrap();
    for kappa in [1.0, 10.0] {
        let c = check_cone_invariance(&f, &ConeFamily::axes(2, &[0], kappa).unwrap(), 0.25).unwrap();
        assert!(c.passed());
        assert!((c.margin - 1.0 / 3.0).abs() < 1e-9, "kappa {kappa}: {}", c.margin);
    }
    let g = MapSpec::diagonal(&[2, 2]).unwrap();
    assert!(!check_domination(&g, &ConeFamily::axes(2, &[0], 1.0).unwrap(), 0.9, 0.25).unwrap().passed());
}

#[test]
fn example4_degenerate_ifs_is_refused() {
    assert!(matches!(build_example4(&[0.0], &[0.5], 0.05), Err(Error::Refused(_))));
}

#[test]
fn example4_segments_and_covering() {
    let inst = build_example4(&[-0.03, 0.03], &[0.25, 0.75], 0.05).unwrap();
    let report = vertical_segments(&inst, &inst.map, 100, 17, inst.depth).unwrap();
    assert_eq!(report.tried, 100);
    assert_eq!(report.hits, 100, "{:?}", report.failures);
}

/// Root of `G(G(x)) - x - 1` on `[lo, hi]` by bisection, `G` the lift of `g`.
fn bisect(g: &MapSpec, lo: f64, hi: f64) -> f64 {
    let h = |x: f64| {
        let y = g.eval_lift_raw(&[x])[0];
        g.eval_lift_raw(&[y])[0] - x - 1.0
    };
    let (mut a, mut b) = (lo, hi);
    assert!(h(a) * h(b) < 0.0);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if h(a) * h(m) <= 0.0 {
            b = m;
        } else {
            a = m;
        }
    }
    0.5 * (a + b)
}

#[test]
fn conjugacy_maps_period_two_to_period_two() {
    let f = MapSpec::diagonal(&[2]).unwrap();
    let g = MapSpec::new(vec![vec![2]], vec![Term::Trig { k: vec![1], amp: 0.01, phase: 0.0, coord: 0 }]).unwrap();
    let x = bisect(&g, 0.28, 0.38);
    let gx = g.eval_raw(&[x]);
    assert!(torus_dist_raw(&g.eval_raw(&gx), &[x]) < 1e-12);
    let h = conjugacy_point(&f, &g, &[x], 60, None).unwrap();
    assert!(torus_dist_raw(&h, &[1.0 / 3.0]) < 1e-9, "h = {h:?}");
    assert!(torus_dist_raw(&h, &[x]) <= 0.02);
    let h2 = conjugacy_point(&f, &g, &gx, 60, None).unwrap();
    assert!(torus_dist_raw(&h2, &[2.0 / 3.0]) < 1e-9, "h = {h2:?}");
}

#[test]
fn gallery_instances_round_trip_through_json() {
    for inst in [build_example1(4, 3.2, PI / 4.0).unwrap(), build_rotation_product(32).unwrap()] {
        let s = serde_json::to_string(&inst).unwrap();
        let back: ExampleInstance = serde_json::from_str(&s).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), s);
    }
}
