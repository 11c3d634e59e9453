//! Acceptance suite: one line per criterion, `PASS` or `FAIL` with the measured values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robust_transit::certificate::Verdict;
use robust_transit::gallery::{self, ClaimConfig, ExampleInstance};
use robust_transit::region::{
    check_expanding_on, check_h2_arc_property, check_volume_expanding, compute_lambda_cover, GridCover, H2Options,
    RegionSpec,
};
use robust_transit::shadow::{conjugacy_point, shadow, PseudoOrbit};
use robust_transit::torus::{circle_dist, torus_dist_raw};
use robust_transit::transit::{build_transition_graph, irg_pipeline, strongly_connected, IrgOptions};
use robust_transit::{BoxRegion, MapSpec, Term};
use std::f64::consts::PI;
use std::time::Instant;

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: String) -> Outcome {
    Outcome { ok, detail }
}

fn gallery_instances() -> Vec<ExampleInstance> {
    vec![
        gallery::build_example1(4, 3.2, PI / 4.0).unwrap(),
        gallery::build_example2(3, &[vec![1, 1]], 0.5).unwrap(),
        gallery::build_example3(0.25, 0.5, 0.5, 0.75, 49, 1.0).unwrap(),
        gallery::build_example4(&[-0.03, 0.03], &[0.25, 0.75], 0.05).unwrap(),
        gallery::build_rotation_product(64).unwrap(),
    ]
}

fn cantor_exactness() -> Outcome {
    let t0 = Instant::now();
    let map = MapSpec::new(vec![vec![3]], vec![]).unwrap();
    let u0 = RegionSpec::Cells { res: 3, cells: vec![vec![1]], dim: None }.to_cover(1, 729).unwrap();
    let lam = compute_lambda_cover(&map, &u0, 6).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    // oracle: cells whose six ternary digits avoid 1
    let expected: Vec<usize> = (0..729usize)
        .filter(|&i| {
            let mut v = i;
            (0..6).all(|_| {
                let d = v % 3;
                v /= 3;
                d != 1
            })
        })
        .collect();
    let got: Vec<usize> = lam.cover.iter().collect();
    let ok = got == expected && lam.cover.len() * 729 == 64 * 729 && secs < 1.0;
    outcome(ok, format!("{} cells of 729 (oracle {}), fraction {}, {secs:.3}s", got.len(), expected.len(), lam.fraction()))
}

fn shadowing_bound() -> Outcome {
    let t0 = Instant::now();
    let map = MapSpec::new(vec![vec![2]], vec![]).unwrap();
    let delta = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let mut orbit_defect: f64 = 0.0;
    let mut errors = 0;
    for _ in 0..1000 {
        let mut pts = vec![vec![rng.gen::<f64>()]];
        for _ in 1..100 {
            let y = (2.0 * pts.last().unwrap()[0] + rng.gen_range(-delta..delta)).rem_euclid(1.0);
            pts.push(vec![y]);
        }
        let pseudo = PseudoOrbit::new(&map, pts.clone(), delta).unwrap();
        match shadow(&map, &pseudo, None, 2.0) {
            Ok(r) => {
                // independent recomputation of eta and of the orbit property
                let eta = r.orbit.iter().zip(&pts).map(|(a, b)| circle_dist(a[0], b[0])).fold(0.0, f64::max);
                worst = worst.max(eta).max(r.eta);
                for w in r.orbit.windows(2) {
                    orbit_defect = orbit_defect.max(circle_dist((2.0 * w[0][0]).rem_euclid(1.0), w[1][0]));
                }
            }
            Err(_) => errors += 1,
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let ok = errors == 0 && worst <= 2e-4 + 1e-9 && orbit_defect < 1e-12 && secs < 5.0;
    outcome(ok, format!("max eta {worst:.3e} (bound 2e-4), orbit defect {orbit_defect:.1e}, {errors} errors, {secs:.2}s"))
}

fn conjugacy_defect() -> Outcome {
    let t0 = Instant::now();
    let f = MapSpec::new(vec![vec![2]], vec![]).unwrap();
    let g = MapSpec::new(vec![vec![2]], vec![Term::Trig { k: vec![1], amp: 0.01, phase: 0.0, coord: 0 }]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut defect, mut disp): (f64, f64) = (0.0, 0.0);
    let mut errors = 0;
    for _ in 0..1000 {
        let x = vec![rng.gen::<f64>()];
        let gx = g.eval_raw(&x);
        match (conjugacy_point(&f, &g, &x, 60, None), conjugacy_point(&f, &g, &gx, 60, None)) {
            (Ok(hx), Ok(hgx)) => {
                defect = defect.max(torus_dist_raw(&hgx, &f.eval_raw(&hx)));
                disp = disp.max(torus_dist_raw(&hx, &x));
            }
            _ => errors += 1,
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let ok = errors == 0 && defect <= 1e-6 && disp <= 0.02 + 1e-6 && secs < 10.0;
    outcome(ok, format!("defect {defect:.2e}, displacement {disp:.4}, {errors} errors, {secs:.2}s"))
}

fn jacobian_correctness(insts: &[ExampleInstance]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let per = 10_000 / insts.len();
    for inst in insts {
        let n = inst.map.dim();
        for _ in 0..per {
            let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let j = inst.map.jacobian_matrix(&x);
            let scale = (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).map(|(a, b)| j[(a, b)].abs()).fold(1.0, f64::max);
            for col in 0..n {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[col] += h;
                xm[col] -= h;
                let (fp, fm) = (inst.map.eval_lift_raw(&xp), inst.map.eval_lift_raw(&xm));
                for row in 0..n {
                    let fd = (fp[row] - fm[row]) / (2.0 * h);
                    worst = worst.max((fd - j[(row, col)]).abs() / scale);
                }
            }
        }
    }
    outcome(worst <= 1e-5, format!("max relative error {worst:.2e} over {} points", per * insts.len()))
}

fn degree_constancy(insts: &[ExampleInstance]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut bad = Vec::new();
    let mut roundtrip: f64 = 0.0;
    for inst in insts {
        let n = inst.map.dim();
        let det = inst.map.degree();
        for _ in 0..1000 {
            let y: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            match inst.map.preimages_lift(&y, 1e-13) {
                Ok(pre) => {
                    if pre.len() != det {
                        bad.push(format!("{}: {} preimages, |det A| = {det}", inst.name, pre.len()));
                    }
                    for (p, _) in &pre {
                        roundtrip = roundtrip.max(torus_dist_raw(&inst.map.eval_raw(p), &y));
                    }
                }
                Err(e) => bad.push(format!("{}: {e}", inst.name)),
            }
        }
    }
    let ok = bad.is_empty() && roundtrip <= 1e-10;
    outcome(ok, format!("{} mismatches, max round-trip error {roundtrip:.1e}{}", bad.len(), bad.first().map(|s| format!(", first: {s}")).unwrap_or_default()))
}

fn counterexample_discrimination() -> Outcome {
    let inst = gallery::build_rotation_product(64).unwrap();
    let vol = check_volume_expanding(&inst.map, 1.0 / 128.0, 1.5, false).unwrap();
    let scc = strongly_connected(&build_transition_graph(&inst.map, 64).unwrap());
    let h1 = check_expanding_on(&inst.map, &GridCover::empty(2, 64).unwrap(), 1.5, false).unwrap();
    let opts = H2Options { horizon: 1000, samples: 64, seed: 17, ..H2Options::default() };
    let h2 = check_h2_arc_property(&inst.map, &inst.u0, &inst.u1, inst.delta0, &opts).unwrap();
    let ok = vol.verdict == Verdict::Pass
        && vol.margin >= 0.5
        && scc.verdict == Verdict::Pass
        && h1.verdict == Verdict::Fail
        && h2.verdict == Verdict::Fail;
    outcome(
        ok,
        format!(
            "volume {:?} (margin {}), scc {:?}, H1 whole torus {:?}, H2 horizon 1000 {:?}",
            vol.verdict, vol.margin, scc.verdict, h1.verdict, h2.verdict
        ),
    )
}

fn example2_separation() -> Outcome {
    let t0 = Instant::now();
    let inst = gallery::build_example2(3, &[vec![1, 1]], 0.5).unwrap();
    let (rep, arcs) = gallery::long_arcs_meet_cover(&inst, &inst.map, 200, 505, 6).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let ok = arcs.len() == 200 && rep.failures.is_empty() && rep.hits == 200 && secs < 60.0;
    outcome(ok, format!("{}/{} arcs meet the depth-6 cover with verified orbits, {secs:.1}s{}", rep.hits, rep.tried, rep.failures.first().map(|s| format!(", first failure: {s}")).unwrap_or_default()))
}

fn example3_blender() -> Outcome {
    let t0 = Instant::now();
    let inst = gallery::build_example3(0.25, 0.5, 0.5, 0.75, 49, 1.0).unwrap();
    let rep = gallery::vertical_segments(&inst, &inst.map, 200, 606, 8).unwrap();
    let cfg = ClaimConfig::default();
    let cone = inst.claims.iter().find(|c| c.check == "cone_invariance").unwrap();
    let dom = inst.claims.iter().find(|c| c.check == "domination").unwrap();
    let cc = gallery::verify_claim(&inst, cone, None, &cfg).unwrap();
    let dc = gallery::verify_claim(&inst, dom, None, &cfg).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let ok = rep.hits == 200 && cc.passed() && cc.margin > 0.0 && dc.passed() && dc.margin > 0.0 && secs < 120.0;
    outcome(ok, format!("{}/200 segments meet the depth-8 covers, cone margin {:.4}, domination margin {:.4}, {secs:.1}s", rep.hits, cc.margin, dc.margin))
}

fn irg_pipeline_runs() -> Outcome {
    let inst = gallery::build_example1(4, 3.2, PI / 4.0).unwrap();
    let cover = compute_lambda_cover(&inst.map, &inst.u1, inst.depth).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut complete = 0;
    let mut first_fail = None;
    for _ in 0..100 {
        let lo: Vec<f64> = (0..2).map(|_| rng.gen::<f64>()).collect();
        let hi: Vec<f64> = lo.iter().map(|v| v + 1.0 / 32.0).collect();
        let b = BoxRegion::new(lo, hi, false).unwrap();
        let r = irg_pipeline(&inst.map, &b, &inst.u1, &inst.u2, &cover, inst.delta0, inst.lambda_prime, &IrgOptions::default()).unwrap();
        if r.complete() {
            complete += 1;
        } else if first_fail.is_none() {
            first_fail = r.failed_stage.clone();
        }
    }
    // control: diag(2,2) doubles diameters, 1/16 * 2^6 = 4 is the first to exceed ceil(2 sqrt 2) = 3
    let lin = MapSpec::new(vec![vec![2, 0], vec![0, 2]], vec![]).unwrap();
    let empty = GridCover::empty(2, 64).unwrap();
    let full = compute_lambda_cover(&lin, &empty, 2).unwrap();
    let mut m0s = Vec::new();
    for _ in 0..10 {
        let lo: Vec<f64> = (0..2).map(|_| rng.gen::<f64>()).collect();
        let hi: Vec<f64> = lo.iter().map(|v| v + 1.0 / 16.0).collect();
        let r = irg_pipeline(&lin, &BoxRegion::new(lo, hi, false).unwrap(), &empty, &empty, &full, 0.5, 2.0, &IrgOptions::default()).unwrap();
        m0s.push(r.m0);
    }
    let ok = complete == 100 && m0s.iter().all(|m| *m == Some(6));
    outcome(ok, format!("{complete}/100 Example-1 runs complete all stages, control m0 values {:?}{}", m0s.iter().map(|m| m.map_or(-1, |v| v as i64)).collect::<Vec<_>>(), first_fail.map(|s| format!(", first failure {s}")).unwrap_or_default()))
}

fn robustness_harness() -> Outcome {
    let inst = gallery::build_example1(4, 3.2, PI / 4.0).unwrap();
    let cfg = ClaimConfig::default();
    let radius = 4.0 / inst.u0.res() as f64;
    let (arcs, base) = gallery::separation_suite(&inst, &inst.map, 20, 808, radius, 4).unwrap();
    let base_sep: Vec<Verdict> = base.iter().map(|c| c.verdict).collect();
    let mut retained = 0;
    let mut changes = Vec::new();
    for t in 0..20u64 {
        let g = gallery::random_perturbation(&inst.map, 1e-3, 9000 + t, 4).unwrap();
        let mut same = true;
        for c in &inst.claims {
            let v = gallery::verify_claim(&inst, c, Some(&g), &cfg).unwrap().verdict;
            if v != c.expect {
                same = false;
                changes.push(format!("trial {t}: {} became {v:?}", c.check));
            }
        }
        let sep: Vec<Verdict> = gallery::separation_on(&inst, &g, &arcs, radius, 4).unwrap().iter().map(|c| c.verdict).collect();
        if sep != base_sep {
            same = false;
            let diff: Vec<String> = base_sep.iter().zip(&sep).enumerate().filter(|(_, (a, b))| a != b).map(|(i, (a, b))| format!("cylinder {i} {a:?} to {b:?}")).collect();
            changes.push(format!("trial {t}: {}", diff.join(", ")));
        }
        retained += same as usize;
    }
    let passes = base_sep.iter().filter(|v| **v == Verdict::Pass).count();
    outcome(
        retained == 20,
        format!("{retained}/20 perturbations retain all verdicts (separation baseline {passes}/{} pass at res {}){}", base_sep.len(), inst.u0.res() * 4, changes.first().map(|s| format!(", first change: {s}")).unwrap_or_default()),
    )
}

#[test]
fn acceptance() {
    let insts = gallery_instances();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("cantor exactness", Box::new(cantor_exactness)),
        ("shadowing bound", Box::new(shadowing_bound)),
        ("conjugacy defect", Box::new(conjugacy_defect)),
        ("jacobian correctness", Box::new(|| jacobian_correctness(&insts))),
        ("degree constancy", Box::new(|| degree_constancy(&insts))),
        ("counterexample discrimination", Box::new(counterexample_discrimination)),
        ("example 2 separation", Box::new(example2_separation)),
        ("example 3 blender", Box::new(example3_blender)),
        ("irg pipeline", Box::new(irg_pipeline_runs)),
        ("robustness harness", Box::new(robustness_harness)),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        println!("{} {:>2} {name}: {}", if o.ok { "PASS" } else { "FAIL" }, i + 1, o.detail);
        if !o.ok {
            failed.push(*name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
