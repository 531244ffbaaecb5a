//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (visible with `cargo test --test acceptance -- --nocapture`). Criteria are
//! slope- and property-based with the tolerances pinned in the assertions.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ridgevar::general;
use ridgevar::geometry::{atom_l2_norm, l2_error_with_stderr, Atom, Domain, QuadratureSpec, WeightFn};
use ridgevar::grids;
use ridgevar::la;
use ridgevar::mc;
use ridgevar::pipeline::{self, RateGenerator};
use ridgevar::planar;
use ridgevar::sampling::{self, MaureyConfig};
use ridgevar::training::{self, FitOptions, FitProblem, Regularizer};

fn verdict(name: &str, pass: bool, detail: &str, started: Instant) -> bool {
    println!(
        "criterion {name}: {} ({detail}; {:.1}s)",
        if pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    pass
}

/// 1. Norm equivalence: over d in {2,3,4} and 50 offsets in [-0.9, 0.9999],
/// max/min of the normalized atom norm stays at most 10 per dimension.
#[test]
fn criterion_1_norm_equivalence() {
    let started = Instant::now();
    let mut worst_band = 0.0f64;
    for d in [2usize, 3, 4] {
        let dom = Domain::ball(d).unwrap();
        let exponent = 1.5 + (d as f64 - 1.0) / 4.0;
        let mut dir = vec![0.0; d];
        dir[0] = 1.0;
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for i in 0..50 {
            let t = -0.9 + (0.9999 + 0.9) * i as f64 / 49.0;
            let atom = Atom::from_unit(dir.clone(), t);
            let norm = atom_l2_norm(&atom, &dom, &QuadratureSpec::slice(512)).unwrap();
            let ratio = norm / (1.0 - t).powf(exponent);
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        worst_band = worst_band.max(hi / lo);
    }
    let pass = verdict(
        "1 norm-equivalence",
        worst_band <= 10.0,
        &format!("worst max/min {worst_band:.4}"),
        started,
    );
    assert!(pass, "normalized-norm band {worst_band} exceeds 10");
}

/// 2. Three-chord construction suite: 200 random atoms per grid size, all
/// bracketing coefficients at most one, exact agreement outside the strip at
/// ten thousand points per atom, and one constant bounding the weighted
/// error across the corpus.
#[test]
fn criterion_2_planar_construction_suite() {
    let started = Instant::now();
    let wf = WeightFn::ball_power(2);
    let dom = Domain::ball(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC2);
    let mut worst_coeff = 0.0f64;
    let mut worst_gap = 0.0f64;
    let mut worst_ratio = 0.0f64;
    for m in [8usize, 16, 32] {
        let n = (m * (m - 1)) as f64;
        for _ in 0..200 {
            let ang: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let t: f64 = rng.gen_range(-0.9999..0.9999);
            let atom = Atom::new(vec![ang.cos(), ang.sin()], t).unwrap();
            let approx = planar::approximate_atom(&atom, m).unwrap();
            if !approx.degenerate {
                for c in &approx.coefficients {
                    worst_coeff = worst_coeff.max(c.abs());
                }
            }
            // outside-strip agreement at 10^4 uniform points
            let seed: u64 = rng.gen();
            let mut buf = Vec::new();
            let mut inspected = 0usize;
            let mut block = 0u64;
            while inspected < 10_000 {
                mc::fill_domain_block(&dom, seed, block, 8192, &mut buf);
                for x in buf.chunks_exact(2) {
                    if planar::strip_contains(&approx.strip, x) {
                        continue;
                    }
                    inspected += 1;
                    worst_gap = worst_gap.max((atom.eval(x) - approx.eval(x)).abs());
                    if inspected >= 10_000 {
                        break;
                    }
                }
                block += 1;
            }
            let (err, _) = planar::approximation_error(&atom, &approx, 30_000, rng.gen());
            worst_ratio = worst_ratio.max(err / (wf.weight(&atom) * n.powf(-0.75)));
        }
    }
    let pass = worst_coeff <= 1.0 + 1e-9 && worst_gap <= 1e-9 && worst_ratio <= 50.0;
    verdict(
        "2 planar-construction",
        pass,
        &format!(
            "max |c| {worst_coeff:.12}, max outside-strip gap {worst_gap:.2e}, max weighted ratio {worst_ratio:.3}"
        ),
        started,
    );
    assert!(worst_coeff <= 1.0 + 1e-9, "coefficient bound violated: {worst_coeff}");
    assert!(worst_gap <= 1e-9, "outside-strip agreement violated: {worst_gap}");
    assert!(worst_ratio <= 50.0, "weighted error constant blew up: {worst_ratio}");
}

/// 3. Planar single-atom rate: fixed atom at offset one half, slope of log
/// error against log n over m in {8, 16, 32, 64} at most -0.65.
#[test]
fn criterion_3_planar_atom_rate() {
    let started = Instant::now();
    let dom = Domain::ball(2).unwrap();
    let wf = WeightFn::ball_power(2);
    let q = QuadratureSpec::monte_carlo(100_000, 0xACC3);
    let generator = RateGenerator::SingleAtom {
        offset: 0.5,
        direction_seed: 12,
    };
    let n_list: Vec<usize> = [8usize, 16, 32, 64].iter().map(|m| m * (m - 1)).collect();
    let report = pipeline::rate_experiment(&generator, &n_list, &dom, &wf, &q, 1, 0xACC3).unwrap();
    let pass = report.slope <= -0.65;
    verdict(
        "3 planar-atom-rate",
        pass,
        &format!(
            "slope {:.4} (stderr {:.4}), theory -0.75",
            report.slope, report.slope_stderr
        ),
        started,
    );
    assert!(pass, "single-atom slope {} above -0.65", report.slope);
}

/// 4. Planar pipeline rate: random 200-atom input of unit weighted cost,
/// best-of-10 sampling; fitted slope at most -1.0.
#[test]
fn criterion_4_planar_pipeline_rate() {
    let started = Instant::now();
    let dom = Domain::ball(2).unwrap();
    let wf = WeightFn::ball_power(2);
    let q = QuadratureSpec::monte_carlo(100_000, 0xACC4);
    let generator = RateGenerator::RandomCombination {
        count: 200,
        weighted_cost: 1.0,
        seed: 0xACC4,
        offset_range: (-0.99, 0.99),
    };
    let n_list: Vec<usize> = [8usize, 16, 32, 64].iter().map(|m| m * (m - 1)).collect();
    let report = pipeline::rate_experiment(&generator, &n_list, &dom, &wf, &q, 10, 0xACC4).unwrap();
    let pass = report.slope <= -1.0;
    verdict(
        "4 planar-pipeline-rate",
        pass,
        &format!(
            "slope {:.4} (stderr {:.4}), theory -1.25; errors {:?}",
            report.slope,
            report.slope_stderr,
            report
                .entries
                .iter()
                .map(|e| format!("{:.2e}+-{:.1e}", e.error, e.stderr))
                .collect::<Vec<_>>()
        ),
        started,
    );
    assert!(pass, "pipeline slope {} above -1.0", report.slope);
}

/// 5. General-dimension construction suite at d = 3, 500 random valid
/// atoms per grid size in {16, 32}: the offset promotion sandwich with a
/// constant stable between the two sizes, exact direction reconstruction,
/// bounded coefficient mass, and error-region diagnostics in the expected
/// scaling.
#[test]
fn criterion_5_general_construction_suite() {
    let started = Instant::now();
    let a_param = general::DEFAULT_NEIGHBOR_CONSTANT;
    let cutoff = general::offset_cutoff(a_param);
    let q = QuadratureSpec::monte_carlo(30_000, 0xACC5);
    let mut sandwich_consts = Vec::new();
    let mut worst_recon = 0.0f64;
    let mut worst_sum_gap = 0.0f64;
    let mut worst_mass = 0.0f64;
    let mut worst_sup_ratio = 0.0f64;
    let mut worst_measure_ratio = 0.0f64;
    let mut skipped = 0usize;

    for k in [4u32, 5] {
        let m = 1usize << k;
        let dirs = grids::build_direction_grid(3, k).unwrap();
        let offsets = grids::build_offset_grid(m).unwrap();
        let dict = grids::DiscreteDictionary::from_grids(dirs.clone(), offsets.clone());
        let t_max = offsets.point(2 * m - cutoff - 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0x5EED ^ k as u64);
        let mut worst_sandwich = 0.0f64;
        let mut cells = 0usize;
        while cells < 500 {
            let xi = mc::random_unit_vector(3, &mut rng);
            let t: f64 = rng.gen_range(0.5..t_max);
            let dec = match general::decompose_direction(&xi, &dirs, a_param) {
                Ok(d) => d,
                Err(_) => {
                    skipped += 1;
                    continue;
                }
            };
            worst_recon = worst_recon.max(la::dist(&dec.reconstruction(), &xi));
            worst_sum_gap = worst_sum_gap.max((dec.coefficient_sum() - 1.0).abs());
            let mut promote_failed = false;
            for (dir, _) in &dec.pairs {
                match general::promote_offset(dir, &xi, t, &offsets) {
                    Ok((tp, tt)) => {
                        assert!(t <= tp + 1e-12 && tp <= tt + 1e-15, "sandwich ordering broken");
                        worst_sandwich =
                            worst_sandwich.max((tt - t) * m as f64 / (1.0 - t * t).sqrt());
                    }
                    Err(_) => {
                        promote_failed = true;
                        break;
                    }
                }
            }
            if promote_failed {
                skipped += 1;
                continue;
            }
            let atom = Atom::from_unit(xi, t);
            if let Ok(approx) = general::approximate_atom(&atom, &dict, a_param, &q) {
                worst_mass = worst_mass.max(approx.l1_mass);
                if cells % 10 == 0 {
                    let rep = general::error_region_diagnostics(&atom, &approx, &q).unwrap();
                    worst_sup_ratio = worst_sup_ratio.max(rep.sup_ratio);
                    worst_measure_ratio = worst_measure_ratio.max(rep.measure_ratio);
                }
            } else {
                skipped += 1;
                continue;
            }
            cells += 1;
        }
        sandwich_consts.push(worst_sandwich);
    }
    let const_ratio = sandwich_consts[0].max(sandwich_consts[1])
        / sandwich_consts[0].min(sandwich_consts[1]);
    let pass = const_ratio <= 2.0
        && worst_recon <= 1e-10
        && worst_sum_gap <= 1e-12
        && worst_mass <= 20.0
        && worst_sup_ratio.is_finite()
        && worst_measure_ratio.is_finite();
    verdict(
        "5 general-construction",
        pass,
        &format!(
            "sandwich constants {sandwich_consts:?} (ratio {const_ratio:.3}), recon {worst_recon:.2e}, \
             sum gap {worst_sum_gap:.2e}, l1 mass {worst_mass:.3}, sup ratio {worst_sup_ratio:.2}, \
             measure ratio {worst_measure_ratio:.2}, skipped {skipped}"
        ),
        started,
    );
    assert!(const_ratio <= 2.0, "sandwich constant unstable: {sandwich_consts:?}");
    assert!(worst_recon <= 1e-10, "direction reconstruction error {worst_recon}");
    assert!(worst_sum_gap <= 1e-12, "coefficient sum off by {worst_sum_gap}");
    assert!(worst_mass <= 20.0, "coefficient mass {worst_mass}");
}

/// 6. Random compression: synthetic 100-atom target, budgets {4, 16, 64},
/// 20 seeds; the median-error slope sits in -0.5 +- 0.15 and the best of 10
/// draws beats the mass-times-norm bound in at least 95 percent of cells.
#[test]
fn criterion_6_maurey_compression() {
    let started = Instant::now();
    let dom = Domain::ball(2).unwrap();
    let q = QuadratureSpec::monte_carlo(30_000, 0xACC6);
    let mut medians = Vec::new();
    let mut hits = 0usize;
    let mut cells = 0usize;
    for n in [4usize, 16, 64] {
        let mut errs = Vec::new();
        for s in 0..20u64 {
            let h = pipeline::random_combination(2, 100, 9000 + s, (-0.9, 0.9), 1.0, &WeightFn::Unweighted);
            let cfg = MaureyConfig::new(n, 10, 0xACC6 ^ s, WeightFn::Unweighted);
            let out = sampling::maurey_compress_outcome(&h, &cfg, &dom, &q).unwrap();
            let bound = out.total_mass * out.max_element_norm / (n as f64).sqrt();
            cells += 1;
            if out.error <= bound {
                hits += 1;
            }
            errs.push(out.error);
        }
        errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        medians.push((n, errs[errs.len() / 2], 0.0));
    }
    let (slope, _, _) = pipeline::fit_loglog(&medians);
    let hit_rate = hits as f64 / cells as f64;
    let pass = (slope + 0.5).abs() <= 0.15 && hit_rate >= 0.95;
    verdict(
        "6 maurey-compression",
        pass,
        &format!("median slope {slope:.4}, bound hit rate {hit_rate:.3}"),
        started,
    );
    assert!((slope + 0.5).abs() <= 0.15, "median slope {slope} outside -0.5 +- 0.15");
    assert!(hit_rate >= 0.95, "bound hit rate {hit_rate}");
}

/// 7. Training suite: exact rescaling invariance of the network and the
/// weighted penalty, penalty/cost consistency at unit norms, the zero-target
/// problem at machine-zero objective, and a fit within 1e-3 relative of a
/// ten-times-budget reference run.
#[test]
fn criterion_7_training_suite() {
    let started = Instant::now();
    let wf = WeightFn::ball_power(2);
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC7);

    // rescaling invariance to 1e-12
    let mut worst_eval = 0.0f64;
    let mut worst_reg = 0.0f64;
    for _ in 0..50 {
        let neurons: Vec<training::Neuron> = (0..8)
            .map(|_| training::Neuron {
                input_weight: la::scale(&mc::random_unit_vector(2, &mut rng), rng.gen_range(0.2..3.0)),
                bias: rng.gen_range(-1.5..1.5),
                output_weight: rng.gen_range(-2.0..2.0),
            })
            .collect();
        let net = training::ShallowNet { neurons, dim: 2 };
        let base = training::regularizer_value(&net, Regularizer::WeightedVw, &wf).unwrap();
        let c: f64 = rng.gen_range(0.1..10.0);
        let scaled = training::ShallowNet {
            neurons: net
                .neurons
                .iter()
                .map(|n| training::Neuron {
                    input_weight: la::scale(&n.input_weight, c),
                    bias: c * n.bias,
                    output_weight: n.output_weight / c,
                })
                .collect(),
            dim: 2,
        };
        for _ in 0..20 {
            let x = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            worst_eval = worst_eval.max((net.eval(&x) - scaled.eval(&x)).abs());
        }
        let v = training::regularizer_value(&scaled, Regularizer::WeightedVw, &wf).unwrap();
        worst_reg = worst_reg.max((v - base).abs() / base.max(1.0));
    }

    // penalty equals the weighted cost at unit input norms
    let neurons: Vec<training::Neuron> = (0..12)
        .map(|_| training::Neuron {
            input_weight: mc::random_unit_vector(2, &mut rng),
            bias: rng.gen_range(-0.99..0.99),
            output_weight: rng.gen_range(-2.0..2.0),
        })
        .collect();
    let unit_net = training::ShallowNet { neurons, dim: 2 };
    let reg = training::regularizer_value(&unit_net, Regularizer::WeightedVw, &wf).unwrap();
    let cost = unit_net.atom_combination().variation_cost(&wf);
    let consistency_gap = (reg - cost).abs();

    // zero targets reach zero objective
    let sites: Vec<Vec<f64>> = (0..10)
        .map(|_| la::scale(&mc::random_unit_vector(2, &mut rng), rng.gen_range(0.0..0.9)))
        .collect();
    let zero_problem = FitProblem {
        data_sites: sites.clone(),
        targets: vec![0.0; sites.len()],
        lambda: 1e-3,
        n_neurons: 20,
        regularizer: Regularizer::WeightedVw,
    };
    let zero_report = training::fit(&zero_problem, &wf, &FitOptions::new(500, 2, 5)).unwrap();

    // base fit within 1e-3 relative of a ten-times-budget reference
    let targets: Vec<f64> = sites
        .iter()
        .map(|x| (2.0 * x[0] - 0.3 * x[1]).max(0.0) - 0.5 * (x[1] - 0.1).max(0.0))
        .collect();
    let problem = FitProblem {
        data_sites: sites,
        targets,
        lambda: 1e-3,
        n_neurons: 20,
        regularizer: Regularizer::WeightedVw,
    };
    let base = training::fit(&problem, &wf, &FitOptions::new(5_000, 10, 77)).unwrap();
    let reference = training::fit(&problem, &wf, &FitOptions::new(50_000, 10, 77)).unwrap();
    let rel_gap = (base.objective - reference.objective).abs() / reference.objective.max(1e-12);

    let pass = worst_eval <= 1e-12
        && worst_reg <= 1e-12
        && consistency_gap <= 1e-12
        && zero_report.objective <= 1e-8
        && rel_gap <= 1e-3;
    verdict(
        "7 training-suite",
        pass,
        &format!(
            "rescale gaps ({worst_eval:.1e}, {worst_reg:.1e}), consistency {consistency_gap:.1e}, \
             zero objective {:.1e}, budget gap {rel_gap:.2e} (base {:.6e} vs ref {:.6e})",
            zero_report.objective, base.objective, reference.objective
        ),
        started,
    );
    assert!(worst_eval <= 1e-12, "network rescaling gap {worst_eval}");
    assert!(worst_reg <= 1e-12, "penalty rescaling gap {worst_reg}");
    assert!(consistency_gap <= 1e-12, "penalty/cost gap {consistency_gap}");
    assert!(zero_report.objective <= 1e-8, "zero-target objective {}", zero_report.objective);
    assert!(rel_gap <= 1e-3, "budget gap {rel_gap} (base {} vs ref {})", base.objective, reference.objective);
}

/// 8. Weighted-versus-plain budget: two random combinations of equal plain
/// l1 mass, one with offsets near the boundary. The near-boundary one has a
/// strictly smaller pipeline error at every budget.
#[test]
fn criterion_8_boundary_weighted_budget() {
    let started = Instant::now();
    let dom = Domain::ball(2).unwrap();
    let wf = WeightFn::ball_power(2);
    let q = QuadratureSpec::monte_carlo(100_000, 0xACC8);
    let n_list = [56usize, 240, 992, 4032];
    let entries =
        pipeline::boundary_contrast(200, &n_list, &dom, &wf, &q, 10, 0xACC8).unwrap();
    let pass = entries
        .iter()
        .all(|e| e.boundary_error < e.interior_error && e.boundary_error > 0.0);
    let curve: Vec<String> = entries
        .iter()
        .map(|e| format!("n={} ratio={:.4}", e.n, e.ratio))
        .collect();
    verdict(
        "8 boundary-weighted-budget",
        pass,
        &format!("error ratio curve: {}", curve.join(", ")),
        started,
    );
    for e in &entries {
        assert!(
            e.boundary_error < e.interior_error,
            "boundary combination not better at n = {}: {} vs {}",
            e.n,
            e.boundary_error,
            e.interior_error
        );
    }
    // the advantage reflects the weighted budget: interior cost is larger
    let interior = pipeline::random_combination(2, 200, 0xACC8, (-0.5, 0.5), 1.0, &WeightFn::Unweighted);
    let boundary = pipeline::random_combination(
        2,
        200,
        0xACC8 + 1,
        (0.9, 0.999),
        1.0,
        &WeightFn::Unweighted,
    );
    let ci = interior.scaled(1.0 / interior.l1_mass()).variation_cost(&wf);
    let cb = boundary.scaled(1.0 / boundary.l1_mass()).variation_cost(&wf);
    assert!(cb < ci, "weighted costs not ordered: boundary {cb} vs interior {ci}");
    let _ = l2_error_with_stderr; // pulled in for parity with other criteria
}
