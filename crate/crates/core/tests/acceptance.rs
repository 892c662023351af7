//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line
//! straight to stderr so the summary survives output capture.

mod common;

use std::io::Write;
use std::time::Instant;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rglue_core::dp::{dp_displacement, DPParams};
use rglue_core::grid::{DisplacementField, FrameDerivatives};
use rglue_core::metrics::{cnr, cnr_from_stats, cnr_histogram, rmse, snr, HistogramBins, Window, WindowStats};
use rglue_core::phantom::{
    add_gaussian_noise, inject_additive_line_outliers, inject_multiplicative_outlier, synthesize_pair,
    GroundTruth, OutlierRegion, PhantomSpec,
};
use rglue_core::pipeline::{estimate, Estimate, EstimateParams};
use rglue_core::solver::{
    assemble_system, build_regularizer, data_residuals, rglue_refine, solve_dense, solve_sparse,
    update_weight_map, SolverParams, WeightMap,
};
use rglue_core::{Grid, RFFrame};

const TWO_LAYERS: [(f64, f64); 2] = [(0.5, 20.0), (0.5, 40.0)];
const OUTLIER: OutlierRegion = OutlierRegion {
    row_start: 90,
    row_end: 120,
    col_start: 14,
    col_end: 30,
};
const SEEDS: u64 = 5;

struct Report {
    failed: Vec<usize>,
}

impl Report {
    fn record(&mut self, id: usize, pass: bool, detail: String) {
        let verdict = if pass { "PASS" } else { "FAIL" };
        let line = format!("acceptance criterion {id:>2}: {verdict}  {detail}\n");
        std::io::stderr().write_all(line.as_bytes()).unwrap();
        if !pass {
            self.failed.push(id);
        }
    }
}

fn layer_pair(seed: u64) -> (RFFrame, RFFrame, GroundTruth) {
    synthesize_pair(&PhantomSpec::layered(160, 48, 0.04, &TWO_LAYERS, seed)).unwrap()
}

fn run(i1: &RFFrame, i2: &RFFrame, glue: bool) -> Estimate {
    let mut p = EstimateParams::default();
    p.solver.glue_mode = glue;
    estimate(i1, i2, &p).unwrap()
}

fn criterion_1() -> (bool, String) {
    let (m, n) = (8, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let i1 = random_frame(&mut rng, m, n);
        let i2 = random_frame(&mut rng, m, n);
        let d = random_displacement(&mut rng, m, n, 1.5);
        let theta = random_theta(&mut rng, m, n);
        let p = SolverParams::default();
        let reg = build_regularizer(m, n, &p.regularization()).unwrap();
        let w = WeightMap { theta: theta.clone() };
        let sys = assemble_system(&i1, &FrameDerivatives::new(&i2), &d, &w, &p, &reg).unwrap();
        let models = sample_models(&i1, &i2, &d);
        let d0 = d.to_interleaved();
        let (g, h) = fd_gradient_hessian(2 * m * n, 0.5, |s| model_cost(&models, theta.as_slice(), &d0, s, m, n, &p));
        let h: Vec<f64> = h.iter().map(|v| 0.5 * v).collect();
        let g: Vec<f64> = g.iter().map(|v| -0.5 * v).collect();
        worst = worst
            .max(max_abs_diff(&sys.matrix.to_dense(), &h) / max_abs(&h))
            .max(max_abs_diff(&sys.rhs, &g) / max_abs(&g));
    }
    (worst <= 1e-6, format!("20 pairs 8x6, worst rel err {worst:.2e} (<= 1e-6)"))
}

fn criterion_2() -> (bool, String) {
    let (m, n) = (16, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let i1 = random_frame(&mut rng, m, n);
    let i2 = random_frame(&mut rng, m, n);
    let d = random_displacement(&mut rng, m, n, 0.8);
    let w = WeightMap {
        theta: random_theta(&mut rng, m, n),
    };
    let p = SolverParams {
        cg_tolerance: 1e-13,
        ..SolverParams::default()
    };
    let reg = build_regularizer(m, n, &p.regularization()).unwrap();
    let sys = assemble_system(&i1, &FrameDerivatives::new(&i2), &d, &w, &p, &reg).unwrap();
    let cg = solve_sparse(&sys, &p).unwrap();
    let dense = solve_dense(&sys).unwrap();
    let err = max_abs_diff(&cg.solution, &dense) / max_abs(&dense);
    (
        err <= 1e-8,
        format!("16x8, CG {} its, rel inf-norm diff {err:.2e} (<= 1e-8)", cg.iterations),
    )
}

fn criterion_3() -> (bool, String) {
    let (m, n) = (16, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let i1 = random_frame(&mut rng, m, n);
    let i2 = random_frame(&mut rng, m, n);
    let d = random_displacement(&mut rng, m, n, 1.0);
    let der = FrameDerivatives::new(&i2);
    let p = SolverParams::default();
    let reg = build_regularizer(m, n, &p.regularization()).unwrap();
    let glue = WeightMap::glue(m, n);
    let a = assemble_system(&i1, &der, &d, &glue, &p, &reg).unwrap();
    let b = assemble_system(&i1, &der, &d, &glue, &SolverParams { gamma: 0.0, ..p.clone() }, &reg).unwrap();
    let identical = a == b;

    let warped = der.warp(&d).unwrap();
    let res = data_residuals(&i1, &rglue_core::grid::gradients(&i1), &warped, p.gamma).unwrap();
    let half = update_weight_map(&res, 0.0, false).theta.as_slice().iter().all(|&t| t == 0.5);
    (
        identical && half,
        format!("theta=1 system bit-identical to gamma=0: {identical}; lambda=0 gives theta=0.5: {half}"),
    )
}

fn criterion_4() -> (bool, String) {
    let (m, n, pad) = (64usize, 16usize, 4isize);
    let mut mismatches = 0;
    let mut cases = 0;
    for a in -3isize..=3 {
        for l in -1isize..=1 {
            let mut rng = ChaCha8Rng::seed_from_u64((a * 10 + l + 100) as u64);
            let f = Grid::from_fn(m + 8, n + 8, |_, _| rng.gen_range(-1.0..1.0));
            let at = |i: isize, j: isize| f[(i as usize, j as usize)];
            let i1 = RFFrame::new(Grid::from_fn(m, n, |i, j| at(i as isize + pad + a, j as isize + pad + l))).unwrap();
            let i2 = RFFrame::new(Grid::from_fn(m, n, |i, j| at(i as isize + pad, j as isize + pad))).unwrap();
            let params = DPParams::default_for(&i1);

            // Exhaustive search over the same lattice on the samples where
            // every candidate stays inside I₂.
            let (ar, lr) = (params.axial_range as isize, params.lateral_range as isize);
            let mut best = (f64::INFINITY, 0, 0);
            for ca in -ar..=ar {
                for cl in -lr..=lr {
                    let mut e = 0.0;
                    for i in ar..m as isize - ar {
                        for j in lr..n as isize - lr {
                            e += (i1[(i as usize, j as usize)] - i2[((i + ca) as usize, (j + cl) as usize)]).abs();
                        }
                    }
                    if e < best.0 {
                        best = (e, ca, cl);
                    }
                }
            }
            cases += 1;
            if (best.1, best.2) != (a, l) {
                mismatches += 1;
                continue;
            }
            let d = dp_displacement(&i1, &i2, &params).unwrap();
            let ok = (3..m - 3).all(|i| {
                (1..n - 1).all(|j| d.axial[(i, j)] == a as f64 && d.lateral[(i, j)] == l as f64)
            });
            if !ok {
                mismatches += 1;
            }
        }
    }
    (
        mismatches == 0,
        format!("{cases} shifts on 64x16, rows 3..61 x cols 1..15 exact and matching exhaustive search: {mismatches} failures"),
    )
}

fn criterion_5() -> (bool, String) {
    let (i1, i2, _) = synthesize_pair(&PhantomSpec::homogeneous(256, 64, 0.02, 1)).unwrap();
    let est = estimate(&i1, &i2, &EstimateParams::default()).unwrap();
    // The first-order penalty under-estimates strain near the free top and
    // bottom edges, so the statistics use an interior region.
    let mut v = Vec::new();
    for i in 48..256 - 48 {
        for j in 8..64 - 8 {
            v.push(est.strain[(i, j)]);
        }
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
    let med = median(v);
    let bias = (med - 0.02).abs() / 0.02;
    let ratio = std / med;
    (
        bias <= 0.05 && ratio <= 0.10,
        format!("median {med:.5} (rel err {bias:.3} <= 0.05), std/median {ratio:.3} (<= 0.10), rows 48..208 cols 8..56"),
    )
}

fn theta_inside_outside(theta: &Grid, region: &OutlierRegion) -> (f64, f64) {
    let (mut si, mut ni, mut so, mut no) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..theta.rows() {
        for j in 0..theta.cols() {
            if region.contains(i, j) {
                si += theta[(i, j)];
                ni += 1;
            } else {
                so += theta[(i, j)];
                no += 1;
            }
        }
    }
    (si / ni as f64, so / no as f64)
}

fn criteria_6_7() -> ((bool, String), (bool, String)) {
    let mut ratios = Vec::new();
    let mut gaps = Vec::new();
    for seed in 0..SEEDS {
        let (i1, i2, truth) = layer_pair(seed);
        let i2 = inject_multiplicative_outlier(&i2, OUTLIER, 3.0).unwrap();
        let g = run(&i1, &i2, true);
        let r = run(&i1, &i2, false);
        let eg = rmse(&g.strain, &truth.axial_strain).unwrap();
        let er = rmse(&r.strain, &truth.axial_strain).unwrap();
        ratios.push(er / eg);
        let (inside, outside) = theta_inside_outside(&r.refinement.weights.theta, &OUTLIER);
        gaps.push(outside - inside);
    }
    let med = median(ratios.clone());
    let min_gap = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
    (
        (
            med <= 0.9,
            format!("median RMSE rGLUE/GLUE {med:.3} (<= 0.9), per seed {}", fmt(&ratios)),
        ),
        (
            min_gap >= 0.1,
            format!("theta outside - inside, smallest {min_gap:.3} (>= 0.1), per seed {}", fmt(&gaps)),
        ),
    )
}

fn criterion_8() -> (bool, String) {
    let lines: Vec<usize> = (0..10).map(|k| 4 + 4 * k).collect();
    let mut ratios = Vec::new();
    for seed in 0..SEEDS {
        let (i1, i2, truth) = layer_pair(seed);
        let i2 = inject_additive_line_outliers(&i2, &lines, 0.3).unwrap();
        let eg = rmse(&run(&i1, &i2, true).strain, &truth.axial_strain).unwrap();
        let er = rmse(&run(&i1, &i2, false).strain, &truth.axial_strain).unwrap();
        ratios.push(er / eg);
    }
    let worst = ratios.iter().cloned().fold(0.0, f64::max);
    (
        worst <= 1.0,
        format!("10 lines at 30% of peak, RMSE rGLUE/GLUE worst {worst:.3} (<= 1), per seed {}", fmt(&ratios)),
    )
}

fn criterion_9() -> (bool, String) {
    let truth = Grid::from_fn(4, 4, |i, j| 0.01 * (i + 2 * j) as f64);
    let zero = rmse(&truth, &truth).unwrap() == 0.0;
    let offset = (rmse(&truth.map(|v| v + 0.01), &truth).unwrap() - 0.01).abs() < 1e-15;
    let checker = Grid::from_fn(4, 4, |i, j| if (i + j) % 2 == 0 { 0.015 } else { 0.025 });
    let snr_ok = (snr(&checker, &Window::new(0, 3, 0, 3)).unwrap() - 4.0).abs() < 1e-12;
    let five = cnr_from_stats(
        &WindowStats { mean: 0.01, std: 0.002 },
        &WindowStats { mean: 0.02, std: 0.002 },
    )
    .unwrap();
    let five_ok = (five - 5.0).abs() < 1e-12;
    let w = Window::new(0, 1, 0, 1);
    let same = cnr(&checker, &w, &w).unwrap() == 0.0;
    let targets: Vec<Window> = (0..6).map(|k| Window::new(k, k + 1, 0, 1)).collect();
    let backgrounds: Vec<Window> = (0..20).map(|k| Window::new(k % 3, k % 3 + 1, 2, 3)).collect();
    let big = Grid::from_fn(8, 4, |i, j| ((i * 7 + j * 3) % 5) as f64);
    let hist = cnr_histogram(&big, &targets, &backgrounds, HistogramBins { lo: 0.0, hi: 5.0, count: 10 }).unwrap();
    let count_ok = hist.values.len() + hist.excluded == 120;
    let pass = zero && offset && snr_ok && five_ok && same && count_ok;
    (
        pass,
        format!("rmse {zero}/{offset}, snr 4.0 {snr_ok}, cnr 5.0 {five_ok} ({five:.15}), equal windows {same}, 6x20 pairs {count_ok}"),
    )
}

fn criterion_10() -> (bool, String) {
    let (m, n) = (1024, 128);
    let (i1, i2, truth) = synthesize_pair(&PhantomSpec::homogeneous(m, n, 0.02, 10)).unwrap();
    let d0 = DisplacementField::new(truth.displacement.axial.map(f64::round), Grid::zeros(m, n)).unwrap();
    let p = SolverParams {
        outer_iterations: 1,
        ..SolverParams::default()
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let t = Instant::now();
    let r = pool.install(|| rglue_refine(&i1, &i2, &d0, &p));
    let secs = t.elapsed().as_secs_f64();
    let ok = r.is_ok();
    let its = r.map(|r| r.diagnostics[0].cg_iterations).unwrap_or(0);
    (
        ok && secs < 60.0,
        format!("1024x128 ({} unknowns), one iteration on 1 thread in {secs:.2}s (< 60), CG {its} its", 2 * m * n),
    )
}

fn criterion_11() -> (bool, String) {
    let target = Window::new(100, 150, 8, 40);
    let background = Window::new(10, 60, 8, 40);
    let mut pass = true;
    let mut detail = Vec::new();
    for psnr in [20.0, 18.0, 16.0] {
        let (mut g, mut r) = (Vec::new(), Vec::new());
        for seed in 0..SEEDS {
            let (i1, i2, _) = layer_pair(seed);
            let i1 = add_gaussian_noise(&i1, psnr, 1000 + seed).unwrap();
            let i2 = add_gaussian_noise(&i2, psnr, 2000 + seed).unwrap();
            g.push(cnr(&run(&i1, &i2, true).strain, &target, &background).unwrap());
            r.push(cnr(&run(&i1, &i2, false).strain, &target, &background).unwrap());
        }
        let (mg, mr) = (median(g), median(r));
        pass &= mr >= mg;
        detail.push(format!("{psnr} dB rGLUE {mr:.3} vs GLUE {mg:.3}"));
    }
    (pass, format!("median CNR {}", detail.join(", ")))
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", parts.join(" "))
}

#[test]
fn acceptance_criteria() {
    let mut report = Report { failed: Vec::new() };
    let (c6, c7) = criteria_6_7();
    let results = [
        criterion_1(),
        criterion_2(),
        criterion_3(),
        criterion_4(),
        criterion_5(),
        c6,
        c7,
        criterion_8(),
        criterion_9(),
        criterion_10(),
        criterion_11(),
    ];
    for (k, (pass, detail)) in results.into_iter().enumerate() {
        report.record(k + 1, pass, detail);
    }
    assert!(report.failed.is_empty(), "failed criteria: {:?}", report.failed);
}
