//! Rate allocation across independent Gaussian components.
//!
//! For a diagonal source with variances `gammas`, the minimal distortion at
//! `(R, C, P)` is the value of
//!
//! ```text
//! minimize   sum_l g_l 2^(-2 r_l)
//!          + [( sqrt( sum_l g_l (2 - 2^(-2 r_l) - 2 psi(r_l, r'_l)) ) - sqrt(P) )+]^2
//! subject to sum_l r_l <= R,   sum_l r'_l <= R + C,   r, r' >= 0.
//! ```
//!
//! `solve_allocation` runs an alternating block descent: with `r'` fixed the
//! rate split moves by projected gradient steps with backtracking on the
//! simplex `{sum r <= R}`; with `r` fixed the `r'` split is solved exactly by
//! per-coordinate bisection of the KKT condition under a shared multiplier.
//! Five deterministic restarts (uniform, reverse-waterfilling, perception-
//! waterfilling, greedy-largest-variance, zero) guard against flat regions,
//! and the best result wins. `brute_force_oracle` checks the whole pipeline
//! by exhaustive grid search and shares nothing with the solver path.
//!
//! `r'` values are optimized up to a cap of [`RATE_PRIME_CAP`] bits and
//! reported as `+inf` when they sit at the cap with slack left in the sum
//! constraint.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{bracket_term, corr_gain, pow2_neg2};
use crate::threads::thread_pool;
use crate::types::{ext_f64, DiagGaussianSource, RateAllocation, TradeoffQuery};

/// Cap on individual `r'` entries during optimization (bits). Entries at the
/// cap with budget slack are reported as `+inf`.
pub const RATE_PRIME_CAP: f64 = 30.0;

const LN_4: f64 = 2.0 * std::f64::consts::LN_2;

// ---------------------------------------------------------------------------
// Result types
// ---------------------------------------------------------------------------

/// Water level from one of the two limit waterfillings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaterLevel {
    pub level: f64,
    pub kind: WaterKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaterKind {
    /// Classical reverse waterfilling (distortion-only limit, `P = inf`).
    ReverseWaterfill,
    /// Perfect-realism waterfilling (`P = 0`, `C = inf`).
    PerceptionWaterfill,
}

/// Decomposition of the solved objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerTerms {
    pub rate_sum: f64,
    #[serde(with = "ext_f64")]
    pub prime_sum: f64,
    pub bracket: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverMeta {
    /// Alternation rounds used by the winning restart.
    pub iterations: usize,
    /// Whether the winning restart met the round tolerance before the cap.
    pub converged: bool,
    /// Final objective of every restart, in fixed seed order.
    pub restart_objectives: Vec<f64>,
    /// Objective after each round of the winning restart (non-increasing).
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationSolution {
    pub allocation: RateAllocation,
    #[serde(rename = "D")]
    pub objective: f64,
    pub inner: InnerTerms,
    pub solver_meta: SolverMeta,
}

/// The two limit allocations for the same `(R, C)` and how far they disagree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniversalityGap {
    /// Optimal rate split with the perception constraint dropped (`P = inf`).
    pub r_distortion_only: Vec<f64>,
    /// Optimal rate split under exact realism (`P = 0`).
    pub r_perfect_realism: Vec<f64>,
    pub max_abs_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub max_rounds: usize,
    pub round_tol: f64,
    pub gradient_steps_per_round: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_rounds: 500,
            round_tol: 1e-10,
            gradient_steps_per_round: 25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleOptions {
    pub cell_budget: u64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            cell_budget: 10_000_000,
        }
    }
}

// ---------------------------------------------------------------------------
// Objective
// ---------------------------------------------------------------------------

fn check_source(src: &DiagGaussianSource) -> Result<()> {
    if src.gammas.is_empty() {
        return Err(Error::EmptyInput { name: "gammas" });
    }
    for &g in &src.gammas {
        if !g.is_finite() {
            return Err(Error::NonFiniteInput {
                name: "gammas[..]",
                value: g,
            });
        }
        if g < 0.0 {
            return Err(Error::NegativeVariance {
                name: "gammas[..]",
                value: g,
            });
        }
    }
    Ok(())
}

fn check_perception(p: f64) -> Result<()> {
    if p.is_nan() || p == f64::NEG_INFINITY {
        return Err(Error::NonFiniteInput { name: "P", value: p });
    }
    if p < 0.0 {
        return Err(Error::NegativeBudget { name: "P", value: p });
    }
    Ok(())
}

/// Per-coordinate realism mismatch `(s(r) - s(r'))^2 + 2^(-2 r')`, the stable
/// form of `2 - 2^(-2r) - 2 psi(r, r')`; always >= 0 in floating point.
#[inline]
fn coord_mismatch(r: f64, y: f64) -> f64 {
    let d = corr_gain(r) - corr_gain(y);
    let m = d * d + pow2_neg2(y);
    debug_assert!(m >= 0.0);
    m
}

fn objective_terms(gammas: &[f64], r: &[f64], y: &[f64], p: f64) -> (f64, f64, f64) {
    let mut mse = 0.0;
    let mut mismatch = 0.0;
    for ((&g, &ri), &yi) in gammas.iter().zip(r).zip(y) {
        mse += g * pow2_neg2(ri);
        mismatch += g * coord_mismatch(ri, yi);
    }
    let bracket = if p.is_infinite() {
        0.0
    } else {
        bracket_term(mismatch, p)
    };
    (mse, mismatch, bracket)
}

/// Objective value of an explicit allocation at perception budget `p`.
pub fn objective(src: &DiagGaussianSource, alloc: &RateAllocation, p: f64) -> Result<f64> {
    check_source(src)?;
    alloc.validate()?;
    check_perception(p)?;
    if alloc.len() != src.len() {
        return Err(Error::DimensionMismatch {
            expected: src.len(),
            got: alloc.len(),
        });
    }
    let (mse, _, bracket) = objective_terms(&src.gammas, &alloc.r, &alloc.r_prime, p);
    Ok(mse + bracket)
}

// ---------------------------------------------------------------------------
// Waterfillings (limit cases)
// ---------------------------------------------------------------------------

fn check_budget_rate(name: &'static str, rate: f64) -> Result<()> {
    if !rate.is_finite() {
        return Err(Error::NonFiniteInput { name, value: rate });
    }
    if rate < 0.0 {
        return Err(Error::NegativeRate { name, value: rate });
    }
    Ok(())
}

/// Reverse waterfilling: rates `max(0, (1/2) log2(g_l / alpha))` with the
/// unique level `alpha` in `(0, max g]` making the rates sum to `rate`.
pub fn reverse_waterfill(src: &DiagGaussianSource, rate: f64) -> Result<(WaterLevel, Vec<f64>)> {
    check_source(src)?;
    check_budget_rate("R", rate)?;
    let g_max = src.gammas.iter().cloned().fold(0.0, f64::max);
    if g_max == 0.0 {
        return Err(Error::AllZeroSpectrum);
    }
    let rates_at = |alpha: f64| -> Vec<f64> {
        src.gammas
            .iter()
            .map(|&g| {
                if g > alpha {
                    0.5 * (g / alpha).log2()
                } else {
                    0.0
                }
            })
            .collect()
    };
    let sum_at = |alpha: f64| -> f64 { rates_at(alpha).iter().sum() };
    if rate == 0.0 {
        return Ok((
            WaterLevel {
                level: g_max,
                kind: WaterKind::ReverseWaterfill,
            },
            vec![0.0; src.len()],
        ));
    }
    // The largest component alone reaches `rate` at alpha = g_max 2^(-2R).
    let mut lo = g_max * pow2_neg2(rate);
    let mut hi = g_max;
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if sum_at(mid) >= rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // The high side keeps the rate sum at or below the budget.
    let alpha = hi;
    Ok((
        WaterLevel {
            level: alpha,
            kind: WaterKind::ReverseWaterfill,
        },
        rates_at(alpha),
    ))
}

/// Perfect-realism waterfilling: rates `(1/2) log2((1 + sqrt(1 + beta g_l^2))/2)`
/// with the unique `beta >= 0` making the rates sum to `rate`. This is the
/// optimal split of the `P = 0, C = inf` objective `sum 2 g_l (1 - s(r_l))`.
pub fn perception_waterfill(src: &DiagGaussianSource, rate: f64) -> Result<(WaterLevel, Vec<f64>)> {
    check_source(src)?;
    check_budget_rate("R", rate)?;
    if src.gammas.iter().all(|&g| g == 0.0) {
        return Err(Error::AllZeroSpectrum);
    }
    let rates_at = |beta: f64| -> Vec<f64> {
        src.gammas
            .iter()
            .map(|&g| {
                if g == 0.0 {
                    0.0
                } else {
                    0.5 * (0.5 * (1.0 + (1.0 + beta * g * g).sqrt())).log2()
                }
            })
            .collect()
    };
    let sum_at = |beta: f64| -> f64 { rates_at(beta).iter().sum() };
    if rate == 0.0 {
        return Ok((
            WaterLevel {
                level: 0.0,
                kind: WaterKind::PerceptionWaterfill,
            },
            vec![0.0; src.len()],
        ));
    }
    let mut hi = 1.0f64;
    let mut guard = 0;
    while sum_at(hi) < rate {
        hi *= 2.0;
        guard += 1;
        if guard > 4000 {
            return Err(Error::ConvergenceFailure {
                what: format!("perception waterfill bracket for rate {rate}"),
            });
        }
    }
    let mut lo = 0.0f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sum_at(mid) >= rate {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // The low side keeps the rate sum at or below the budget.
    let beta = lo;
    Ok((
        WaterLevel {
            level: beta,
            kind: WaterKind::PerceptionWaterfill,
        },
        rates_at(beta),
    ))
}

// ---------------------------------------------------------------------------
// Solver
// ---------------------------------------------------------------------------

/// `d s / d x` where `s(x) = sqrt(1 - 2^(-2x))`; unbounded at 0, so callers
/// clamp the resulting gradients.
#[inline]
fn corr_gain_slope(x: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    let s = corr_gain(x);
    if s == 0.0 {
        f64::INFINITY
    } else {
        LN_4 * pow2_neg2(x) / (2.0 * s)
    }
}

/// Euclidean projection onto `{x >= 0, sum x <= budget}`.
fn project_capped_simplex(v: &[f64], budget: f64) -> Vec<f64> {
    let clipped: Vec<f64> = v.iter().map(|&x| x.max(0.0)).collect();
    if clipped.iter().sum::<f64>() <= budget {
        return clipped;
    }
    if budget <= 0.0 {
        return vec![0.0; v.len()];
    }
    // Project onto the face {x >= 0, sum x = budget}.
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &m) in sorted.iter().enumerate() {
        cumsum += m;
        let candidate = (cumsum - budget) / (j + 1) as f64;
        if m - candidate > 0.0 {
            tau = candidate;
        }
    }
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}

/// Exact block solve for `r'` given `r`: maximizes `sum w_l s(y_l)` over
/// `{0 <= y <= CAP, sum y <= budget}` with `w_l = g_l s(r_l)`, via bisection
/// on the shared KKT multiplier and per-coordinate bisection inside.
fn solve_prime_block(gammas: &[f64], r: &[f64], budget: f64) -> Vec<f64> {
    let l = gammas.len();
    let w: Vec<f64> = gammas
        .iter()
        .zip(r)
        .map(|(&g, &ri)| g * corr_gain(ri))
        .collect();
    let active: Vec<usize> = (0..l).filter(|&i| w[i] > 0.0).collect();
    let mut y = vec![0.0; l];
    if active.is_empty() {
        return y;
    }
    let full = active.len() as f64 * RATE_PRIME_CAP;
    if budget >= full {
        for &i in &active {
            y[i] = RATE_PRIME_CAP;
        }
        return y;
    }
    // y_i(lambda): the cap-clamped solution of w_i s'(y) = lambda.
    let coord = |wi: f64, lambda: f64| -> f64 {
        if wi * corr_gain_slope(RATE_PRIME_CAP) >= lambda {
            return RATE_PRIME_CAP;
        }
        let mut lo = 0.0;
        let mut hi = RATE_PRIME_CAP;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if wi * corr_gain_slope(mid) >= lambda {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let sum_at = |lambda: f64| -> f64 { active.iter().map(|&i| coord(w[i], lambda)).sum() };
    let mut lam_lo = active
        .iter()
        .map(|&i| w[i] * corr_gain_slope(RATE_PRIME_CAP))
        .fold(f64::INFINITY, f64::min)
        .max(1e-300);
    let mut lam_hi = 1.0;
    let mut guard = 0;
    while sum_at(lam_hi) > budget {
        lam_hi *= 4.0;
        guard += 1;
        if guard > 600 {
            break;
        }
    }
    while sum_at(lam_lo) < budget && lam_lo > 1e-290 {
        lam_lo *= 0.25;
    }
    for _ in 0..120 {
        let mid = (lam_lo * lam_hi).sqrt();
        if sum_at(mid) > budget {
            lam_lo = mid;
        } else {
            lam_hi = mid;
        }
    }
    // The high side keeps the r' sum at or below the budget.
    let lambda = lam_hi;
    for &i in &active {
        y[i] = coord(w[i], lambda);
    }
    y
}

struct Run {
    r: Vec<f64>,
    y: Vec<f64>,
    objective: f64,
    rounds: usize,
    converged: bool,
    trace: Vec<f64>,
}

fn eval(gammas: &[f64], r: &[f64], y: &[f64], p: f64) -> f64 {
    let (mse, _, bracket) = objective_terms(gammas, r, y, p);
    mse + bracket
}

fn gradient_r(gammas: &[f64], r: &[f64], y: &[f64], p: f64) -> Vec<f64> {
    let (_, mismatch, _) = objective_terms(gammas, r, y, p);
    // Slope of the bracket wrt the mismatch sum; 0 at and below the kink.
    let kappa = if p.is_infinite() || mismatch <= p {
        0.0
    } else {
        1.0 - (p / mismatch).sqrt()
    };
    gammas
        .iter()
        .zip(r)
        .zip(y)
        .map(|((&g, &ri), &yi)| {
            let u = pow2_neg2(ri);
            let mut grad = -LN_4 * g * u;
            if kappa > 0.0 {
                let sy = corr_gain(yi);
                let cross = if sy == 0.0 {
                    0.0
                } else {
                    2.0 * sy * corr_gain_slope(ri)
                };
                grad += kappa * g * (LN_4 * u - cross);
            }
            grad.clamp(-1e8, 1e8)
        })
        .collect()
}

/// Projected gradient steps on `r` with backtracking; monotone by design.
fn rate_block(
    gammas: &[f64],
    r: &mut Vec<f64>,
    y: &[f64],
    p: f64,
    r_budget: f64,
    f_cur: &mut f64,
    max_steps: usize,
) {
    let mut step = 1.0;
    for _ in 0..max_steps {
        let g = gradient_r(gammas, r, y, p);
        let mut improved = false;
        while step > 1e-18 {
            let trial: Vec<f64> = r.iter().zip(&g).map(|(&ri, &gi)| ri - step * gi).collect();
            let projected = project_capped_simplex(&trial, r_budget);
            let moved: f64 = projected
                .iter()
                .zip(r.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if moved == 0.0 {
                return; // stationary under projection
            }
            let decrease: f64 = g
                .iter()
                .zip(r.iter().zip(&projected))
                .map(|(&gi, (&ri, &pi))| gi * (ri - pi))
                .sum();
            let f_new = eval(gammas, &projected, y, p);
            if f_new <= *f_cur - 1e-4 * decrease.max(0.0) && f_new < *f_cur {
                *r = projected;
                let gain = *f_cur - f_new;
                *f_cur = f_new;
                step *= 1.5;
                improved = true;
                if gain < 1e-13 * f_cur.abs().max(1.0) {
                    return;
                }
                break;
            }
            step *= 0.5;
        }
        if !improved {
            return;
        }
    }
}

fn alternate(
    gammas: &[f64],
    seed_r: Vec<f64>,
    p: f64,
    r_budget: f64,
    prime_budget: f64,
    opts: &SolverOptions,
) -> Run {
    let l = gammas.len();
    let mut r = project_capped_simplex(&seed_r, r_budget);
    let mut y = if p.is_infinite() {
        vec![0.0; l]
    } else {
        solve_prime_block(gammas, &r, prime_budget)
    };
    let mut f = eval(gammas, &r, &y, p);
    let mut trace = vec![f];
    let mut converged = false;
    let mut rounds = 0;
    for round in 0..opts.max_rounds {
        rounds = round + 1;
        let f_before = f;
        rate_block(
            gammas,
            &mut r,
            &y,
            p,
            r_budget,
            &mut f,
            opts.gradient_steps_per_round,
        );
        if !p.is_infinite() {
            let y_new = solve_prime_block(gammas, &r, prime_budget);
            let f_new = eval(gammas, &r, &y_new, p);
            if f_new <= f {
                y = y_new;
                f = f_new;
            }
        }
        trace.push(f);
        if f_before - f < opts.round_tol {
            converged = true;
            break;
        }
    }
    Run {
        r,
        y,
        objective: f,
        rounds,
        converged,
        trace,
    }
}

/// Orders candidate solutions: smaller objective wins; exact ties break to
/// the lexicographically smaller allocation so merges are schedule-free.
fn better(a_obj: f64, a_r: &[f64], a_y: &[f64], b_obj: f64, b_r: &[f64], b_y: &[f64]) -> bool {
    if a_obj != b_obj {
        return a_obj < b_obj;
    }
    for (x, y) in a_r.iter().zip(b_r) {
        if x != y {
            return x < y;
        }
    }
    for (x, y) in a_y.iter().zip(b_y) {
        if x != y {
            return x < y;
        }
    }
    false
}

/// Maps internal capped `r'` values to the reported form: entries at the cap
/// are `+inf` when the sum constraint has slack (always, for infinite `C`).
fn report_prime(y: &[f64], prime_budget: f64) -> Vec<f64> {
    let sum: f64 = y.iter().sum();
    let slack = if prime_budget.is_infinite() {
        true
    } else {
        prime_budget - sum > 1e-6
    };
    y.iter()
        .map(|&v| {
            if slack && v >= RATE_PRIME_CAP - 1e-6 {
                f64::INFINITY
            } else {
                v
            }
        })
        .collect()
}

fn finish_solution(
    src: &DiagGaussianSource,
    p: f64,
    prime_budget: f64,
    run: Run,
    restart_objectives: Vec<f64>,
) -> Result<AllocationSolution> {
    let reported = report_prime(&run.y, prime_budget);
    let allocation = RateAllocation::new(run.r, reported)?;
    let (mse, _, bracket) = objective_terms(&src.gammas, &allocation.r, &allocation.r_prime, p);
    let objective = mse + bracket;
    let inner = InnerTerms {
        rate_sum: allocation.rate_sum(),
        prime_sum: allocation.r_prime.iter().sum(),
        bracket,
    };
    Ok(AllocationSolution {
        allocation,
        objective,
        inner,
        solver_meta: SolverMeta {
            iterations: run.rounds,
            converged: run.converged,
            restart_objectives,
            objective_trace: run.trace,
        },
    })
}

pub fn solve_allocation(src: &DiagGaussianSource, q: &TradeoffQuery) -> Result<AllocationSolution> {
    solve_allocation_with(src, q, &SolverOptions::default())
}

pub fn solve_allocation_with(
    src: &DiagGaussianSource,
    q: &TradeoffQuery,
    opts: &SolverOptions,
) -> Result<AllocationSolution> {
    check_source(src)?;
    q.validate()?;
    let l = src.len();
    let gammas = &src.gammas;
    let r_budget = q.rate;
    let prime_budget = if q.common_randomness.is_infinite() {
        f64::INFINITY
    } else {
        q.rate + q.common_randomness
    };
    let p = q.perception;

    if gammas.iter().all(|&g| g == 0.0) {
        let run = Run {
            r: vec![0.0; l],
            y: vec![0.0; l],
            objective: 0.0,
            rounds: 0,
            converged: true,
            trace: vec![0.0],
        };
        return finish_solution(src, p, prime_budget, run, vec![0.0]);
    }

    let uniform = vec![r_budget / l as f64; l];
    let alpha_seed = reverse_waterfill(src, r_budget)?.1;
    let beta_seed = perception_waterfill(src, r_budget)?.1;
    let greedy = {
        let mut v = vec![0.0; l];
        let argmax = gammas
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        v[argmax] = r_budget;
        v
    };
    let zero = vec![0.0; l];
    let seeds = vec![uniform, alpha_seed, beta_seed, greedy, zero];

    let runs: Vec<Run> = seeds
        .into_iter()
        .map(|s| alternate(gammas, s, p, r_budget, prime_budget, opts))
        .collect();
    let restart_objectives: Vec<f64> = runs.iter().map(|r| r.objective).collect();
    let best = runs
        .into_iter()
        .reduce(|a, b| {
            if better(b.objective, &b.r, &b.y, a.objective, &a.r, &a.y) {
                b
            } else {
                a
            }
        })
        .expect("at least one restart");
    finish_solution(src, p, prime_budget, best, restart_objectives)
}

// ---------------------------------------------------------------------------
// Brute-force oracle
// ---------------------------------------------------------------------------

/// All length-`l` compositions of at most (`exact` = false) or exactly
/// (`exact` = true) `total` units, each coordinate capped at `cap`.
fn compositions(l: usize, total: u64, cap: u64, exact: bool) -> Vec<Vec<u64>> {
    let mut out = Vec::new();
    let mut cur = vec![0u64; l];
    fn rec(
        cur: &mut Vec<u64>,
        idx: usize,
        remaining: u64,
        cap: u64,
        exact: bool,
        out: &mut Vec<Vec<u64>>,
    ) {
        if idx == cur.len() - 1 {
            let hi = remaining.min(cap);
            if exact {
                if remaining <= cap {
                    cur[idx] = remaining;
                    out.push(cur.clone());
                }
            } else {
                for v in 0..=hi {
                    cur[idx] = v;
                    out.push(cur.clone());
                }
            }
            return;
        }
        for v in 0..=remaining.min(cap) {
            cur[idx] = v;
            rec(cur, idx + 1, remaining - v, cap, exact, out);
        }
    }
    rec(&mut cur, 0, total, cap, exact, &mut out);
    out
}

fn count_compositions(l: usize, total: u64, cap: u64, exact: bool) -> u128 {
    // Cheap DP so the cell-budget check never allocates the grid.
    let mut counts = vec![0u128; total as usize + 1];
    counts[0] = 1;
    for _ in 0..l {
        let mut next = vec![0u128; total as usize + 1];
        for (t, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let hi = (total as usize - t).min(cap as usize);
            for v in 0..=hi {
                next[t + v] += c;
            }
        }
        counts = next;
    }
    if exact {
        counts[total as usize]
    } else {
        counts.iter().sum()
    }
}

pub fn brute_force_oracle(
    src: &DiagGaussianSource,
    q: &TradeoffQuery,
    grid_step: f64,
) -> Result<AllocationSolution> {
    brute_force_oracle_with(src, q, grid_step, &OracleOptions::default())
}

/// Exhaustive grid reference for `solve_allocation`, `L <= 3`.
///
/// Enumerates `r` on the step grid over `{sum r <= R}`. Because the objective
/// never increases when any `r'` grows (the correlation factor is
/// nondecreasing in `r'`), the grid optimum over `r'` lies on the face where
/// the `r'` units sum to the full budget (or every coordinate sits at the
/// cap, reported `+inf`); that face is enumerated exhaustively. For infinite
/// `C` the single `r' = +inf` probe is optimal for the same reason.
pub fn brute_force_oracle_with(
    src: &DiagGaussianSource,
    q: &TradeoffQuery,
    grid_step: f64,
    opts: &OracleOptions,
) -> Result<AllocationSolution> {
    check_source(src)?;
    q.validate()?;
    let l = src.len();
    if l > 3 {
        return Err(Error::Domain {
            what: format!("brute-force oracle supports L <= 3, got {l}"),
        });
    }
    if !(grid_step.is_finite() && grid_step > 0.0) {
        return Err(Error::Domain {
            what: format!("grid_step must be finite and positive, got {grid_step}"),
        });
    }
    let gammas = &src.gammas;
    let p = q.perception;
    let units_r = (q.rate / grid_step + 1e-9).floor() as u64;
    let cap_units = (RATE_PRIME_CAP / grid_step).floor() as u64;

    // Candidate r' splits (in units); `None` marks the all-infinite probe.
    let prime_candidates: Vec<Option<Vec<u64>>> = if q.common_randomness.is_infinite() {
        vec![None]
    } else {
        let units_y = ((q.rate + q.common_randomness) / grid_step + 1e-9).floor() as u64;
        if units_y >= cap_units * l as u64 {
            vec![None]
        } else {
            compositions(l, units_y, cap_units, true)
                .into_iter()
                .map(Some)
                .collect()
        }
    };

    let r_count = count_compositions(l, units_r, units_r, false);
    let cells = r_count * prime_candidates.len() as u128;
    if cells > opts.cell_budget as u128 {
        return Err(Error::TooManyCells {
            cells,
            budget: opts.cell_budget,
        });
    }

    let r_points = compositions(l, units_r, units_r, false);
    let prime_floats: Vec<Vec<f64>> = prime_candidates
        .iter()
        .map(|c| match c {
            None => vec![f64::INFINITY; l],
            Some(units) => units.iter().map(|&u| u as f64 * grid_step).collect(),
        })
        .collect();

    let pool = thread_pool();
    let best = pool.install(|| {
        r_points
            .par_chunks(1024.max(r_points.len() / 256).max(1))
            .map(|chunk| {
                let mut local: Option<(f64, Vec<f64>, Vec<f64>)> = None;
                for r_units in chunk {
                    let r: Vec<f64> = r_units.iter().map(|&u| u as f64 * grid_step).collect();
                    for y in &prime_floats {
                        let f = eval(gammas, &r, y, p);
                        let take = match &local {
                            None => true,
                            Some((bf, br, by)) => better(f, &r, y, *bf, br, by),
                        };
                        if take {
                            local = Some((f, r.clone(), y.clone()));
                        }
                    }
                }
                local
            })
            .reduce(
                || None,
                |a, b| match (a, b) {
                    (None, x) => x,
                    (x, None) => x,
                    (Some(a), Some(b)) => {
                        if better(b.0, &b.1, &b.2, a.0, &a.1, &a.2) {
                            Some(b)
                        } else {
                            Some(a)
                        }
                    }
                },
            )
    });
    let (_, r, y) = best.expect("grid has at least the origin");

    let allocation = RateAllocation::new(r, y)?;
    let (mse, _, bracket) = objective_terms(gammas, &allocation.r, &allocation.r_prime, p);
    let inner = InnerTerms {
        rate_sum: allocation.rate_sum(),
        prime_sum: allocation.r_prime.iter().sum(),
        bracket,
    };
    Ok(AllocationSolution {
        objective: mse + bracket,
        inner,
        allocation,
        solver_meta: SolverMeta {
            iterations: cells as usize,
            converged: true,
            restart_objectives: Vec::new(),
            objective_trace: Vec::new(),
        },
    })
}

/// Rigorous bound on how far the step-`grid_step` oracle optimum can sit
/// above the continuous optimum: rounding every coordinate down one step
/// changes the objective by at most
/// `sum g * (2 (4^step - 1) + 4 sqrt(1 - 4^(-step)))`.
pub fn grid_gap_bound(src: &DiagGaussianSource, grid_step: f64) -> f64 {
    let total: f64 = src.gammas.iter().sum();
    let growth = (2.0 * grid_step).exp2() - 1.0;
    total * (2.0 * growth + 4.0 * corr_gain(grid_step))
}

// ---------------------------------------------------------------------------
// Universality gap
// ---------------------------------------------------------------------------

/// Compares the distortion-only optimal split (`P = inf`, reverse
/// waterfilling) with the perfect-realism split (`P = 0`) at the same
/// `(R, C)`. A nonzero gap means no single representation is optimal for
/// both ends of the perception axis.
pub fn universality_gap(src: &DiagGaussianSource, rate: f64, c: f64) -> Result<UniversalityGap> {
    check_source(src)?;
    check_budget_rate("R", rate)?;
    if c.is_nan() || c == f64::NEG_INFINITY {
        return Err(Error::NonFiniteInput { name: "C", value: c });
    }
    if c < 0.0 {
        return Err(Error::NegativeRate { name: "C", value: c });
    }
    let (_, r_hat) = reverse_waterfill(src, rate)?;
    let q = TradeoffQuery::new(rate, c, 0.0)?;
    let solved = solve_allocation(src, &q)?;
    let max_abs_gap = r_hat
        .iter()
        .zip(&solved.allocation.r)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(UniversalityGap {
        r_distortion_only: r_hat,
        r_perfect_realism: solved.allocation.r.clone(),
        max_abs_gap,
    })
}

// ---------------------------------------------------------------------------
