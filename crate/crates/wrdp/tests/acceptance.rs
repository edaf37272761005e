//! Acceptance gate: one test per shipped claim, each printing a single
//! `[acceptance] <name>: PASS` line (failures panic with the measured
//! numbers, which the harness prints). Tolerances are pinned here and
//! nowhere else.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use wrdp::scalar::{
    bracket_term, distortion_rate, optimal_distortion, optimal_distortion_c0, rate_threshold,
    Threshold,
};
use wrdp::sim::{
    run_trials, soft_covering_gap, CodebookConfig, EstimatorConfig, SoftCoveringConfig,
};
use wrdp::transport::{dp_tradeoff_point, gaussian_dp_reference, interpolate_reconstruction};
use wrdp::types::{DiagGaussianSource, GaussianScalarSource, RateAllocation, TradeoffQuery};
use wrdp::vector::{
    brute_force_oracle, grid_gap_bound, objective, perception_waterfill, reverse_waterfill,
    solve_allocation, universality_gap,
};

const THRESHOLD_TOL: f64 = 0.005;
const INTERCEPT_TOL: f64 = 0.005;
const MERGE_TOL: f64 = 1e-6;
const REL_IDENTITY_TOL: f64 = 1e-12;
const SCALAR_MATCH_TOL: f64 = 1e-6;
const SOLVER_TOL: f64 = 1e-9;
const PROPERTY_TOL: f64 = 1e-9;
const ORACLE_GRID_STEP: f64 = 0.02;
const UNIVERSALITY_GAP_MIN: f64 = 0.01;
const SIM_REFERENCE: f64 = 0.32294;
const SIM_REL_TOL: f64 = 0.25;
const SIM_TRIALS: u64 = 20_000;
const SIM_BUDGET: u64 = 1 << 25;
const ACCEPT_SEED: u64 = 20_240_814;

fn dstar(gamma: f64, r: f64, c: f64, p: f64) -> f64 {
    let src = GaussianScalarSource::new(gamma).expect("valid variance");
    let q = TradeoffQuery::new(r, c, p).expect("valid query");
    optimal_distortion(&src, &q).expect("valid point").distortion
}

fn rel_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn finite_threshold(t: Threshold) -> f64 {
    t.value().expect("expected a finite threshold")
}

#[test]
fn criterion_01_headline_rate_thresholds() {
    let src = GaussianScalarSource::new(1.0).unwrap();
    let cases = [(f64::INFINITY, 0.4546), (1.0, 0.8107), (0.0, 1.661)];
    for (c, want) in cases {
        let got = finite_threshold(rate_threshold(&src, c, 0.1).unwrap());
        assert!(
            (got - want).abs() <= THRESHOLD_TOL,
            "rate threshold at C={c}: got {got}, want {want} +/- {THRESHOLD_TOL}"
        );
    }
    println!("[acceptance] headline rate thresholds (C=inf, 1, 0) within +/-0.005: PASS");
}

#[test]
fn criterion_02_zero_rate_intercepts() {
    let d0 = dstar(1.0, 0.0, 1.0, 0.0);
    let d01 = dstar(1.0, 0.0, 1.0, 0.1);
    let d1 = dstar(1.0, 0.0, 1.0, 1.0);
    assert!((d0 - 2.0).abs() <= 1e-12, "D(0, 1, 0) = {d0}, want 2 exactly");
    assert!(
        (d01 - 1.4675).abs() <= INTERCEPT_TOL,
        "D(0, 1, 0.1) = {d01}, want 1.4675 +/- {INTERCEPT_TOL}"
    );
    assert!((d1 - 1.0).abs() <= 1e-12, "D(0, 1, 1) = {d1}, want 1 exactly");
    println!("[acceptance] zero-rate intercepts (2, 1.4675, 1): PASS");
}

#[test]
fn criterion_03_curve_merge_on_grid() {
    let src = GaussianScalarSource::new(1.0).unwrap();
    let thr_c1 = finite_threshold(rate_threshold(&src, 1.0, 0.1).unwrap());
    let thr_c0 = finite_threshold(rate_threshold(&src, 0.0, 0.1).unwrap());
    for i in 0..=200 {
        let r = i as f64 / 100.0;
        let d_inf = dstar(1.0, r, f64::INFINITY, 0.1);
        let d_c1 = dstar(1.0, r, 1.0, 0.1);
        let d_c0 = dstar(1.0, r, 0.0, 0.1);
        if r >= 0.82 {
            assert!(
                (d_c1 - d_inf).abs() < MERGE_TOL,
                "C=1 curve fails to merge at R={r}: |delta| = {}",
                (d_c1 - d_inf).abs()
            );
        }
        if r >= 1.67 {
            assert!(
                (d_c0 - d_inf).abs() < MERGE_TOL,
                "C=0 curve fails to merge at R={r}: |delta| = {}",
                (d_c0 - d_inf).abs()
            );
        }
        // All curves share the R=0 intercept (the common-randomness rate is
        // worthless without coding rate), so strict separation starts just
        // above zero.
        if i > 0 && r <= thr_c1 - 0.01 {
            assert!(
                d_c1 - d_inf > 0.0,
                "C=1 curve should sit strictly above C=inf at R={r}"
            );
        }
        if i > 0 && r <= thr_c0 - 0.01 {
            assert!(
                d_c0 - d_inf > 0.0,
                "C=0 curve should sit strictly above C=inf at R={r}"
            );
        }
        if i == 0 {
            assert!(
                (d_c1 - d_inf).abs() <= 1e-12 && (d_c0 - d_inf).abs() <= 1e-12,
                "curves must share the R=0 intercept"
            );
        }
    }
    println!("[acceptance] curve merge beyond thresholds, separation below: PASS");
}

#[test]
fn criterion_04_limit_case_identities() {
    let mut rng = ChaCha12Rng::seed_from_u64(ACCEPT_SEED);
    // C = 0 collapses to the zero-seed closed form.
    for _ in 0..200 {
        let gamma = rng.random_range(0.1..4.0);
        let r = rng.random_range(0.0..3.0);
        let p = [0.0, 0.05, 0.3, 1.0, f64::INFINITY][rng.random_range(0..5)];
        let src = GaussianScalarSource::new(gamma).unwrap();
        let full = dstar(gamma, r, 0.0, p);
        let c0 = optimal_distortion_c0(&src, r, p).unwrap();
        assert!(
            rel_gap(full, c0) <= REL_IDENTITY_TOL,
            "C=0 identity: {full} vs {c0} at (gamma={gamma}, R={r}, P={p})"
        );
        // P = inf drops the perception term.
        let unconstrained = dstar(gamma, r, 0.0, f64::INFINITY);
        let shannon = distortion_rate(gamma, r).unwrap();
        assert!(
            rel_gap(unconstrained, shannon) <= REL_IDENTITY_TOL,
            "P=inf identity: {unconstrained} vs {shannon}"
        );
    }
    // L = 1 allocation reduces to the scalar answer.
    for _ in 0..40 {
        let gamma = rng.random_range(0.1..4.0);
        let r = rng.random_range(0.0..3.0);
        let c = [0.0, 0.5, 1.0, f64::INFINITY][rng.random_range(0..4)];
        let p = [0.0, 0.1, 0.5, f64::INFINITY][rng.random_range(0..4)];
        let src = DiagGaussianSource::new(vec![gamma]).unwrap();
        let q = TradeoffQuery::new(r, c, p).unwrap();
        let solved = solve_allocation(&src, &q).unwrap().objective;
        let scalar = dstar(gamma, r, c, p);
        assert!(
            (solved - scalar).abs() <= SCALAR_MATCH_TOL,
            "L=1 reduction: solver {solved} vs scalar {scalar} at \
             (gamma={gamma}, R={r}, C={c}, P={p})"
        );
    }
    println!("[acceptance] limit-case identities (C=0 form, P=inf, L=1): PASS");
}

#[test]
fn criterion_05_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(ACCEPT_SEED ^ 5);
    for trial in 0..50 {
        let gammas = vec![rng.random_range(0.1..4.0), rng.random_range(0.1..4.0)];
        let r = rng.random_range(0.0..3.0);
        let c = [0.0, 0.5, 1.0, f64::INFINITY][rng.random_range(0..4)];
        let p = [0.0, 0.1, 0.5, f64::INFINITY][rng.random_range(0..4)];
        let src = DiagGaussianSource::new(gammas.clone()).unwrap();
        let q = TradeoffQuery::new(r, c, p).unwrap();
        let solved = solve_allocation(&src, &q).unwrap().objective;
        let oracle = brute_force_oracle(&src, &q, ORACLE_GRID_STEP).unwrap().objective;
        let bound = grid_gap_bound(&src, ORACLE_GRID_STEP);
        assert!(
            solved <= oracle + SOLVER_TOL,
            "instance {trial} (gammas={gammas:?}, R={r}, C={c}, P={p}): \
             solver {solved} worse than oracle {oracle}"
        );
        assert!(
            solved >= oracle - bound,
            "instance {trial} (gammas={gammas:?}, R={r}, C={c}, P={p}): \
             solver {solved} suspiciously below oracle {oracle} - bound {bound}"
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 300.0, "oracle sweep took {elapsed:.1}s, budget 300s");
    println!("[acceptance] solver within 1e-9 of 50 grid oracles ({elapsed:.1}s): PASS");
}

#[test]
fn criterion_06_waterfilling_limits() {
    let mut rng = ChaCha12Rng::seed_from_u64(ACCEPT_SEED ^ 6);
    for _ in 0..20 {
        let l = rng.random_range(1..5usize);
        let gammas: Vec<f64> = (0..l).map(|_| rng.random_range(0.1..4.0)).collect();
        let r = rng.random_range(0.0..3.0);
        let src = DiagGaussianSource::new(gammas.clone()).unwrap();

        // P = inf: the solver must match classical reverse waterfilling.
        let q = TradeoffQuery::new(r, f64::INFINITY, f64::INFINITY).unwrap();
        let solved = solve_allocation(&src, &q).unwrap().objective;
        let (_, r_wf) = reverse_waterfill(&src, r).unwrap();
        let alloc = RateAllocation::new(r_wf, vec![f64::INFINITY; l]).unwrap();
        let wf_obj = objective(&src, &alloc, f64::INFINITY).unwrap();
        assert!(
            (solved - wf_obj).abs() <= SOLVER_TOL,
            "distortion-only limit: solver {solved} vs waterfilling {wf_obj} \
             (gammas={gammas:?}, R={r})"
        );

        // P = 0, C = inf: the perfect-realism waterfilling is optimal.
        let q = TradeoffQuery::new(r, f64::INFINITY, 0.0).unwrap();
        let solved = solve_allocation(&src, &q).unwrap().objective;
        let (_, r_pf) = perception_waterfill(&src, r).unwrap();
        let alloc = RateAllocation::new(r_pf, vec![f64::INFINITY; l]).unwrap();
        let pf_obj = objective(&src, &alloc, 0.0).unwrap();
        assert!(
            (solved - pf_obj).abs() <= SOLVER_TOL,
            "perfect-realism limit: solver {solved} vs waterfilling {pf_obj} \
             (gammas={gammas:?}, R={r})"
        );
    }
    let skew = DiagGaussianSource::new(vec![4.0, 1.0]).unwrap();
    let gap = universality_gap(&skew, 1.0, f64::INFINITY).unwrap();
    assert!(
        gap.max_abs_gap > UNIVERSALITY_GAP_MIN,
        "universality gap {} should exceed {UNIVERSALITY_GAP_MIN} for spectrum (4, 1)",
        gap.max_abs_gap
    );
    println!(
        "[acceptance] waterfilling limits to 1e-9, universality gap {:.4} > 0.01: PASS",
        gap.max_abs_gap
    );
}

#[test]
fn criterion_07_property_suites() {
    let mut rng = ChaCha12Rng::seed_from_u64(ACCEPT_SEED ^ 7);
    // Monotonicity (in R, C, P) and midpoint convexity in R along 10^3
    // random segments.
    for _ in 0..1_000 {
        let gamma = rng.random_range(0.1..4.0);
        let c = [0.0, 0.3, 1.0, f64::INFINITY][rng.random_range(0..4)];
        let p = [0.0, 0.05, 0.5, f64::INFINITY][rng.random_range(0..4)];
        let mut r1 = rng.random_range(0.0..3.0);
        let mut r2 = rng.random_range(0.0..3.0);
        if r1 > r2 {
            std::mem::swap(&mut r1, &mut r2);
        }
        let (d1, d2) = (dstar(gamma, r1, c, p), dstar(gamma, r2, c, p));
        assert!(d1 >= d2 - PROPERTY_TOL, "not decreasing in R: D({r1})={d1} < D({r2})={d2}");
        let mid = dstar(gamma, 0.5 * (r1 + r2), c, p);
        assert!(
            mid <= 0.5 * (d1 + d2) + PROPERTY_TOL,
            "not midpoint-convex in R at (gamma={gamma}, C={c}, P={p}, R in [{r1}, {r2}])"
        );

        let r = rng.random_range(0.0..3.0);
        let (mut c1, mut c2) = (rng.random_range(0.0..3.0), rng.random_range(0.0..3.0));
        if c1 > c2 {
            std::mem::swap(&mut c1, &mut c2);
        }
        assert!(
            dstar(gamma, r, c1, p) >= dstar(gamma, r, c2, p) - PROPERTY_TOL,
            "not decreasing in C at (gamma={gamma}, R={r}, P={p})"
        );
        let (mut p1, mut p2) = (rng.random_range(0.0..2.0), rng.random_range(0.0..2.0));
        if p1 > p2 {
            std::mem::swap(&mut p1, &mut p2);
        }
        assert!(
            dstar(gamma, r, c, p1) >= dstar(gamma, r, c, p2) - PROPERTY_TOL,
            "not decreasing in P at (gamma={gamma}, R={r}, C={c})"
        );
    }
    // Joint midpoint convexity of the clipped-root penalty on 10^4 pairs.
    for _ in 0..10_000 {
        let a = (rng.random_range(0.0..5.0), rng.random_range(0.0..5.0));
        let b = (rng.random_range(0.0..5.0), rng.random_range(0.0..5.0));
        let mid = (0.5 * (a.0 + b.0), 0.5 * (a.1 + b.1));
        let f = |(x, y): (f64, f64)| bracket_term(x, y);
        assert!(
            f(mid) <= 0.5 * (f(a) + f(b)) + PROPERTY_TOL,
            "penalty not midpoint-convex at {a:?}, {b:?}"
        );
    }
    println!("[acceptance] scalar monotonicity/convexity property suites: PASS");
}

#[test]
fn criterion_08_interpolation_identities() {
    let start = Instant::now();
    // The tradeoff point must reproduce the closed forms bit-for-bit.
    for &mmse in &[0.0, 0.1, 0.25, 1.0, 3.0] {
        for &w2 in &[0.0, 0.05, 0.25, 1.0, 2.0] {
            for &p in &[0.0, 0.01, 0.25, 1.0, f64::INFINITY] {
                let pt = dp_tradeoff_point(mmse, w2, p).unwrap();
                let penalty = {
                    let d = w2.sqrt() - p.sqrt();
                    if d > 0.0 {
                        d * d
                    } else {
                        0.0
                    }
                };
                assert!(
                    pt.distortion == mmse + penalty,
                    "distortion branch mismatch at (mmse={mmse}, w2={w2}, P={p})"
                );
                assert!(
                    pt.perception == w2.min(p),
                    "perception branch mismatch at (mmse={mmse}, w2={w2}, P={p})"
                );
            }
        }
    }
    let reference = gaussian_dp_reference(1.0, 0.0, 0.1).unwrap();
    assert!(
        (reference.distortion - 1.467_544_467_966_324_1).abs() <= 1e-12,
        "zero-rate Gaussian reference distortion {}",
        reference.distortion
    );

    // Monte-Carlo: blended reconstructions of a jointly Gaussian pair match
    // the predicted distortion within 3 standard errors.
    let mut rng = ChaCha12Rng::seed_from_u64(ACCEPT_SEED ^ 8);
    let (gamma, gamma_tilde): (f64, f64) = (1.0, 0.75);
    let noise_sd = (gamma - gamma_tilde).sqrt();
    let scale = (gamma / gamma_tilde).sqrt();
    let samples = 100_000usize;
    let mut s = Vec::with_capacity(samples);
    let mut s_tilde = Vec::with_capacity(samples);
    let mut s_prime = Vec::with_capacity(samples);
    for _ in 0..samples {
        let st = gamma_tilde.sqrt() * rng.sample::<f64, _>(StandardNormal);
        s.push(st + noise_sd * rng.sample::<f64, _>(StandardNormal));
        s_tilde.push(st);
        s_prime.push(scale * st);
    }
    let mmse = gamma - gamma_tilde;
    let w2_full = (gamma.sqrt() - gamma_tilde.sqrt()).powi(2);
    for &p in &[0.0, w2_full / 4.0, w2_full / 2.0, 2.0 * w2_full] {
        let s_hat = interpolate_reconstruction(&s_tilde, &s_prime, w2_full, p).unwrap();
        let d_emp: f64 = s
            .iter()
            .zip(&s_hat)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / samples as f64;
        let predicted = dp_tradeoff_point(mmse, w2_full, p).unwrap().distortion;
        let se = {
            let mean = d_emp;
            let var = s
                .iter()
                .zip(&s_hat)
                .map(|(a, b)| ((a - b) * (a - b) - mean).powi(2))
                .sum::<f64>()
                / (samples as f64 - 1.0);
            (var / samples as f64).sqrt()
        };
        assert!(
            (d_emp - predicted).abs() <= 3.0 * se,
            "Monte-Carlo distortion {d_emp} vs predicted {predicted} at P={p} (3 SE = {})",
            3.0 * se
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "interpolation checks took {elapsed:.1}s, budget 10s");
    println!("[acceptance] interpolation identities + Monte-Carlo ({elapsed:.1}s): PASS");
}

#[test]
fn criterion_09_simulation_trends() {
    let start = Instant::now();
    let est = EstimatorConfig::default();
    let ns = [4usize, 8, 12];
    let mut results = Vec::new();
    for &n in &ns {
        let cfg = CodebookConfig {
            n,
            rate: 1.0,
            common_randomness: 1.0,
            gamma: 1.0,
            seed: ACCEPT_SEED,
            codeword_budget: SIM_BUDGET,
        };
        results.push(run_trials(&cfg, 0.0, SIM_TRIALS, &est).unwrap());
    }

    let mut all_ok = true;
    let mut check = |label: &str, ok: bool, detail: String| {
        println!(
            "[acceptance]   simulation {}: {} ({detail})",
            label,
            if ok { "PASS" } else { "FAIL" }
        );
        all_ok &= ok;
    };

    // (i) The converse reference is never undercut by more than 3 SE.
    let undercut_ok = results.iter().all(|res| {
        res.empirical_distortion >= SIM_REFERENCE - 3.0 * res.empirical_distortion_se
    });
    check(
        "converse respected",
        undercut_ok,
        results
            .iter()
            .map(|r| format!("n={}: {:.4}+/-{:.4}", r.n, r.empirical_distortion, r.empirical_distortion_se))
            .collect::<Vec<_>>()
            .join(", "),
    );

    // (ii) Distortion is non-increasing in blocklength up to 2 combined SE.
    let mut trend_ok = true;
    for w in results.windows(2) {
        let [a, b] = w else { unreachable!() };
        let comb = (a.empirical_distortion_se.powi(2) + b.empirical_distortion_se.powi(2)).sqrt();
        trend_ok &= b.empirical_distortion <= a.empirical_distortion + 2.0 * comb;
    }
    check(
        "distortion non-increasing in n",
        trend_ok,
        format!(
            "{:.4} -> {:.4} -> {:.4}",
            results[0].empirical_distortion,
            results[1].empirical_distortion,
            results[2].empirical_distortion
        ),
    );

    // (iii) Relative agreement with the asymptotic reference at n = 12.
    let last = &results[2];
    let rel = (last.empirical_distortion - last.reference).abs() / last.reference;
    check(
        "within 25% of reference at n=12",
        rel <= SIM_REL_TOL,
        format!(
            "empirical {:.4}, reference {:.5}, relative {:.3}",
            last.empirical_distortion, last.reference, rel
        ),
    );

    // Soft covering: a 0.25-bit oversizing margin must drive the gap down
    // with n; the undersized control (margin -0.25) must not reach the
    // oversized curve's endpoint.
    let sweep = |margin: f64| {
        soft_covering_gap(&SoftCoveringConfig {
            gamma: 1.0,
            rate: 1.0,
            margin,
            ns: ns.to_vec(),
            draws: 100_000,
            seed: ACCEPT_SEED,
            replicates: 6,
            codeword_budget: SIM_BUDGET,
        })
        .unwrap()
    };
    let faithful = sweep(0.25);
    let control = sweep(-0.25);
    let mut soft_ok = true;
    for w in faithful.windows(2) {
        let comb = (w[0].gap_se.powi(2) + w[1].gap_se.powi(2)).sqrt();
        soft_ok &= w[1].gap < w[0].gap - 2.0 * comb;
    }
    check(
        "soft-covering gap strictly decreasing",
        soft_ok,
        faithful
            .iter()
            .map(|p| format!("n={}: {:.2e}", p.n, p.gap))
            .collect::<Vec<_>>()
            .join(", "),
    );
    let control_ok = control[2].gap > faithful[2].gap;
    check(
        "undersized control stays above the oversized curve at n=12",
        control_ok,
        format!("control {:.2e} vs faithful {:.2e}", control[2].gap, faithful[2].gap),
    );

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 600.0, "simulation suite took {elapsed:.1}s, budget 600s");
    assert!(
        all_ok,
        "one or more simulation sub-criteria failed; see the lines above"
    );
    println!("[acceptance] finite-blocklength simulation trends ({elapsed:.1}s): PASS");
}

#[test]
fn criterion_10_simulate_determinism() {
    let dir = tempfile::tempdir().expect("tempdir");
    let out = dir.path().join("sim.json");
    let run = || {
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_wrdp"))
            .args([
                "simulate", "--n", "4", "--R", "1", "--C", "1", "--P", "0", "--gamma", "1",
                "--seed", "11", "--trials", "500",
            ])
            .arg("--out")
            .arg(&out)
            .output()
            .expect("binary runs");
        assert!(status.status.success(), "simulate failed: {status:?}");
        std::fs::read(&out).expect("output written")
    };
    let first = run();
    let second = run();
    assert!(!first.is_empty(), "simulate produced an empty report");
    assert_eq!(first, second, "same seed must produce byte-identical JSON");
    println!("[acceptance] simulate reruns are byte-identical: PASS");
}
