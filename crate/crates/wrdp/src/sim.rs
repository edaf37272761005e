//! Finite-blocklength Monte Carlo testbed for the coding theorem.
//!
//! One trial runs the full achievability pipeline: draw a source block
//! `X^n ~ N(0, gamma I)`, pick a shared-seed index `K` uniformly, select a
//! codeword inside subcodebook `K` with the likelihood encoder, then decode
//! by blending the codeword with a conditionally drawn perceptual sample
//! (`transport::interpolate_reconstruction`). Aggregates report empirical
//! distortion, a per-symbol squared-W2 estimate of the reconstruction law,
//! and a soft-covering gap for the pure perceptual draw.
//!
//! Everything is deterministic given the config seed: per-subject RNG
//! streams are derived by a fixed splitmix64 rule, parallel trial results
//! are collected in index order, and all reductions are sequential.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{optimal_distortion, pow2_neg2, psi};
use crate::threads::thread_pool;
use crate::transport::{interpolate_reconstruction, w2_gaussian, GaussianMoments};
use crate::types::{ext_f64, GaussianCoupling, GaussianScalarSource, TradeoffQuery};

// ---------------------------------------------------------------------------
// Deterministic stream derivation
// ---------------------------------------------------------------------------

// Stream tags: every independent consumer of randomness gets its own tag so
// adding consumers never perturbs existing streams.
const STREAM_REPLICATE: u64 = 1;
const STREAM_CODEBOOK: u64 = 2;
const STREAM_TRIAL: u64 = 3;
const STREAM_POSTERIOR: u64 = 4;
const STREAM_SOFT: u64 = 5;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One 64-bit child seed for `(root, stream, index)`.
fn child_seed(root: u64, stream: u64, index: u64) -> u64 {
    let mut state = root;
    let a = splitmix64(&mut state);
    state ^= stream.wrapping_mul(0xA24B_AED4_963E_E407);
    let b = splitmix64(&mut state);
    state ^= index.wrapping_mul(0x9FB2_1C65_1E98_DF25);
    a ^ b ^ splitmix64(&mut state)
}

/// Independent ChaCha stream for `(root, stream, index)`.
fn derive_rng(root: u64, stream: u64, index: u64) -> ChaCha12Rng {
    let mut state = child_seed(root, stream, index);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha12Rng::from_seed(seed)
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

pub const DEFAULT_CODEWORD_BUDGET: u64 = 1 << 22;

fn default_codeword_budget() -> u64 {
    DEFAULT_CODEWORD_BUDGET
}

/// Random-code parameters: blocklength, rates, source variance, seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodebookConfig {
    pub n: usize,
    #[serde(rename = "R")]
    pub rate: f64,
    #[serde(rename = "C")]
    pub common_randomness: f64,
    pub gamma: f64,
    pub seed: u64,
    /// Cap on the total codeword count `2^ceil(nR) * 2^ceil(nC)`.
    #[serde(default = "default_codeword_budget")]
    pub codeword_budget: u64,
}

impl CodebookConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig {
                what: "blocklength n must be at least 1".into(),
            });
        }
        for (name, v) in [("R", self.rate), ("C", self.common_randomness)] {
            if !v.is_finite() {
                return Err(Error::NonFiniteInput { name, value: v });
            }
            if v < 0.0 {
                return Err(Error::NegativeRate { name, value: v });
            }
        }
        if !self.gamma.is_finite() {
            return Err(Error::NonFiniteInput {
                name: "gamma",
                value: self.gamma,
            });
        }
        if self.gamma <= 0.0 {
            return Err(Error::InvalidConfig {
                what: format!("gamma must be positive for simulation, got {}", self.gamma),
            });
        }
        if self.codeword_budget == 0 {
            return Err(Error::InvalidConfig {
                what: "codeword_budget must be at least 1".into(),
            });
        }
        let bits_j = (self.n as f64 * self.rate).ceil();
        let bits_k = (self.n as f64 * self.common_randomness).ceil();
        let total_bits = bits_j + bits_k;
        let codewords: u128 = if total_bits >= 127.0 {
            u128::MAX
        } else {
            1u128 << total_bits as u32
        };
        if codewords > self.codeword_budget as u128 {
            let limiting = if bits_j >= bits_k { "R" } else { "C" };
            return Err(Error::BudgetExceeded {
                limiting,
                codewords,
                budget: self.codeword_budget,
            });
        }
        Ok(())
    }

    /// Codeword counts `(per subcodebook, subcodebooks)`: floors of `2^{nR}`
    /// and `2^{nC}`, at least 1 each.
    pub fn counts(&self) -> (u64, u64) {
        let m_j = (self.n as f64 * self.rate).exp2().floor().max(1.0) as u64;
        let m_k = (self.n as f64 * self.common_randomness)
            .exp2()
            .floor()
            .max(1.0) as u64;
        (m_j, m_k)
    }
}

/// Estimator knobs independent of the coding scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    /// Fraction of each replicate's trials used to estimate the blend
    /// weight's W2 denominator before freezing it.
    pub pilot_fraction: f64,
    /// Independent codebook draws the trials are split across.
    pub replicates: u64,
    /// Also estimate the exact posterior-mean decoder (importance sampling);
    /// only allowed for n <= 4 and rates <= 1.
    pub posterior_mean_check: bool,
    /// Importance samples per trial for the posterior-mean estimate.
    pub posterior_samples: u32,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            pilot_fraction: 0.1,
            replicates: 5,
            posterior_mean_check: false,
            posterior_samples: 200,
        }
    }
}

impl EstimatorConfig {
    fn validate(&self) -> Result<()> {
        if !(self.pilot_fraction > 0.0 && self.pilot_fraction <= 1.0) {
            return Err(Error::InvalidConfig {
                what: format!(
                    "pilot_fraction must lie in (0, 1], got {}",
                    self.pilot_fraction
                ),
            });
        }
        if self.replicates == 0 {
            return Err(Error::InvalidConfig {
                what: "replicates must be at least 1".into(),
            });
        }
        if self.posterior_mean_check && self.posterior_samples == 0 {
            return Err(Error::InvalidConfig {
                what: "posterior_samples must be at least 1".into(),
            });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Test channels
// ---------------------------------------------------------------------------

/// The two jointly Gaussian channels of the achievability construction:
/// `mu` is MMSE-consistent (codewords are conditional means), `nu` matches
/// the realism-optimal correlation at rates `(R, R + C)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestChannels {
    pub mu: GaussianCoupling,
    pub nu: GaussianCoupling,
}

pub fn test_channels(gamma: f64, rate: f64, c: f64) -> Result<TestChannels> {
    let gamma_tilde = gamma * (1.0 - pow2_neg2(rate));
    let mu = GaussianCoupling::new(gamma, gamma_tilde, gamma_tilde)?;
    let rc = if c.is_infinite() {
        f64::INFINITY
    } else {
        rate + c
    };
    let mut theta_nu = gamma * psi(rate, rc)?;
    // psi rounding can land a hair above the PSD boundary; step down by ulps.
    let bound = gamma * gamma_tilde;
    while theta_nu * theta_nu > bound {
        theta_nu = f64::from_bits(theta_nu.to_bits() - 1);
    }
    let nu = GaussianCoupling::new(gamma, gamma_tilde, theta_nu)?;
    Ok(TestChannels { mu, nu })
}

// ---------------------------------------------------------------------------
// Codebook
// ---------------------------------------------------------------------------

/// Random codebook of `m_j x m_k` length-`n` codewords, i.i.d.
/// `N(0, gamma_tilde)`. Codewords are regenerated on demand from
/// per-codeword derived streams rather than stored, so the structure stays
/// O(1) in memory while the budget invariant bounds the index space.
#[derive(Debug, Clone)]
pub struct Codebook {
    n: usize,
    m_j: u64,
    m_k: u64,
    gamma_tilde: f64,
    root: u64,
}

impl Codebook {
    /// Standard construction: codeword variance from the config's rate.
    pub fn build(cfg: &CodebookConfig) -> Result<Self> {
        let gamma_tilde = cfg.gamma * (1.0 - pow2_neg2(cfg.rate));
        Self::build_with_variance(cfg, gamma_tilde)
    }

    /// Off-rate construction: codeword count from `cfg`, codeword variance
    /// prescribed (soft-covering experiments design the channel at a rate
    /// offset from the codebook rate).
    pub fn build_with_variance(cfg: &CodebookConfig, gamma_tilde: f64) -> Result<Self> {
        cfg.validate()?;
        if !(gamma_tilde.is_finite() && gamma_tilde >= 0.0) {
            return Err(Error::NegativeVariance {
                name: "gamma_tilde",
                value: gamma_tilde,
            });
        }
        let (m_j, m_k) = cfg.counts();
        Ok(Self {
            n: cfg.n,
            m_j,
            m_k,
            gamma_tilde,
            root: cfg.seed,
        })
    }

    pub fn counts(&self) -> (u64, u64) {
        (self.m_j, self.m_k)
    }

    pub fn blocklength(&self) -> usize {
        self.n
    }

    pub fn gamma_tilde(&self) -> f64 {
        self.gamma_tilde
    }

    /// Writes codeword `(j, k)` into `out`.
    pub fn codeword_into(&self, j: u64, k: u64, out: &mut [f64]) {
        debug_assert!(j < self.m_j && k < self.m_k && out.len() == self.n);
        let mut rng = derive_rng(self.root, STREAM_CODEBOOK, k * self.m_j + j);
        let sd = self.gamma_tilde.sqrt();
        for slot in out.iter_mut() {
            *slot = sd * rng.sample::<f64, _>(StandardNormal);
        }
    }

    pub fn codeword(&self, j: u64, k: u64) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.codeword_into(j, k, &mut out);
        out
    }

    /// Materializes subcodebook `k` (bounded by the budget invariant).
    pub fn subcodebook(&self, k: u64) -> Vec<Vec<f64>> {
        (0..self.m_j).map(|j| self.codeword(j, k)).collect()
    }
}

// ---------------------------------------------------------------------------
// Likelihood encoder
// ---------------------------------------------------------------------------

/// Log density of `x` under the channel output `N(slope * w, var)` applied
/// per symbol, up to an additive constant shared by all codewords.
fn log_weight(x: &[f64], codeword: &[f64], slope: f64, inv_two_var: f64) -> f64 {
    let mut acc = 0.0;
    for (&xt, &wt) in x.iter().zip(codeword) {
        let d = xt - slope * wt;
        acc -= d * d;
    }
    acc * inv_two_var
}

/// Samples an index proportional to `exp(log_weights)` (max-shifted).
fn sample_log_index(log_weights: &[f64], rng: &mut ChaCha12Rng) -> usize {
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_weights.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut target = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        target -= w;
        if target < 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

fn encoder_params(mu: &GaussianCoupling) -> Result<(f64, f64)> {
    let var = mu.conditional_var();
    if var <= 0.0 {
        return Err(Error::Domain {
            what: format!("encoder channel variance must be positive, got {var}"),
        });
    }
    Ok((mu.mean_slope(), 1.0 / (2.0 * var)))
}

/// Samples a codeword index within subcodebook `k` from the exact posterior
/// of the likelihood encoder.
pub fn likelihood_encode(
    x: &[f64],
    k: u64,
    book: &Codebook,
    mu: &GaussianCoupling,
    rng: &mut ChaCha12Rng,
) -> Result<u64> {
    if x.len() != book.n {
        return Err(Error::DimensionMismatch {
            expected: book.n,
            got: x.len(),
        });
    }
    if k >= book.m_k {
        return Err(Error::Domain {
            what: format!("subcodebook index {k} out of range (m_k = {})", book.m_k),
        });
    }
    if book.m_j == 1 {
        return Ok(0);
    }
    let (slope, inv_two_var) = encoder_params(mu)?;
    let mut buf = vec![0.0; book.n];
    let mut log_weights = Vec::with_capacity(book.m_j as usize);
    for j in 0..book.m_j {
        book.codeword_into(j, k, &mut buf);
        log_weights.push(log_weight(x, &buf, slope, inv_two_var));
    }
    Ok(sample_log_index(&log_weights, rng) as u64)
}

/// Same encoder over explicit codewords (test and diagnostic path).
pub fn likelihood_encode_slices(
    x: &[f64],
    codewords: &[Vec<f64>],
    mu: &GaussianCoupling,
    rng: &mut ChaCha12Rng,
) -> Result<usize> {
    if codewords.is_empty() {
        return Err(Error::EmptyInput { name: "codewords" });
    }
    for w in codewords {
        if w.len() != x.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: w.len(),
            });
        }
    }
    if codewords.len() == 1 {
        return Ok(0);
    }
    let (slope, inv_two_var) = encoder_params(mu)?;
    let log_weights: Vec<f64> = codewords
        .iter()
        .map(|w| log_weight(x, w, slope, inv_two_var))
        .collect();
    Ok(sample_log_index(&log_weights, rng))
}

// ---------------------------------------------------------------------------
// Decoder
// ---------------------------------------------------------------------------

/// Draws the perceptual sample `X'` through the `nu` conditional and blends
/// it with the codeword. `p_block` is the whole-block realism budget; the
/// blend uses the frozen per-symbol estimate `w2_hat` scaled by `n`.
pub fn reconstruct(
    x_tilde: &[f64],
    nu: &GaussianCoupling,
    p_block: f64,
    w2_hat: f64,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<f64>> {
    let x_prime = draw_perceptual(x_tilde, nu, rng);
    interpolate_reconstruction(x_tilde, &x_prime, x_tilde.len() as f64 * w2_hat, p_block)
}

fn draw_perceptual(x_tilde: &[f64], nu: &GaussianCoupling, rng: &mut ChaCha12Rng) -> Vec<f64> {
    let slope = nu.mean_slope();
    let sd = nu.conditional_var().sqrt();
    x_tilde
        .iter()
        .map(|&t| slope * t + sd * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

// ---------------------------------------------------------------------------
// Trials
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub n: usize,
    pub trials: u64,
    pub empirical_distortion: f64,
    pub empirical_distortion_se: f64,
    pub empirical_w2_per_symbol: f64,
    pub soft_covering_gap: f64,
    pub reference: f64,
    pub r_eff: f64,
    pub c_eff: f64,
    #[serde(rename = "P", with = "ext_f64")]
    pub p: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub posterior_mean_distortion: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub posterior_mean_distortion_se: Option<f64>,
}

struct TrialRecord {
    x: Vec<f64>,
    x_tilde: Vec<f64>,
    x_prime: Vec<f64>,
    j: u64,
    k: u64,
}

fn run_one_trial(
    cfg: &CodebookConfig,
    book: &Codebook,
    channels: &TestChannels,
    root: u64,
    trial: u64,
) -> TrialRecord {
    let mut rng = derive_rng(root, STREAM_TRIAL, trial);
    let sd = cfg.gamma.sqrt();
    let x: Vec<f64> = (0..cfg.n)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let (_, m_k) = book.counts();
    let k = rng.random_range(0..m_k);
    let j = likelihood_encode(&x, k, book, &channels.mu, &mut rng)
        .expect("encoder inputs validated before the trial loop");
    let x_tilde = book.codeword(j, k);
    let x_prime = draw_perceptual(&x_tilde, &channels.nu, &mut rng);
    TrialRecord {
        x,
        x_tilde,
        x_prime,
        j,
        k,
    }
}

/// Per-position diagonal Gaussian fit (population variance).
fn fit_diagonal_moments(blocks: &[&[f64]], n: usize) -> Result<GaussianMoments> {
    let t = blocks.len() as f64;
    let mut means = vec![0.0; n];
    for b in blocks {
        for (m, &v) in means.iter_mut().zip(*b) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= t;
    }
    let mut vars = vec![0.0; n];
    for b in blocks {
        for ((v, &m), &x) in vars.iter_mut().zip(&means).zip(*b) {
            *v += (x - m) * (x - m);
        }
    }
    for v in &mut vars {
        *v /= t;
    }
    GaussianMoments::diagonal(means, vars)
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let t = values.len() as f64;
    let mean = values.iter().sum::<f64>() / t;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (t - 1.0);
    (mean, (var / t).sqrt())
}

/// Runs the full pipeline for `trials` source blocks at per-symbol realism
/// budget `p`, splitting trials across independent codebook replicates.
///
/// The blend weight's W2 denominator is estimated on the first
/// `pilot_fraction` of each replicate's trials (representation law vs source
/// law, diagonal moment fit), then frozen and applied to every trial.
pub fn run_trials(
    cfg: &CodebookConfig,
    p: f64,
    trials: u64,
    est: &EstimatorConfig,
) -> Result<SimulationResult> {
    cfg.validate()?;
    est.validate()?;
    if p.is_nan() || p < 0.0 {
        return Err(Error::NegativeBudget { name: "P", value: p });
    }
    if trials == 0 {
        return Err(Error::InvalidConfig {
            what: "trials must be at least 1".into(),
        });
    }
    let channels = test_channels(cfg.gamma, cfg.rate, cfg.common_randomness)?;
    let (m_j, m_k) = cfg.counts();
    if m_j > 1 {
        encoder_params(&channels.mu)?;
    }
    if est.posterior_mean_check && (cfg.n > 4 || cfg.rate > 1.0 || cfg.common_randomness > 1.0) {
        return Err(Error::InvalidConfig {
            what: "posterior_mean_check is limited to n <= 4 and rates <= 1".into(),
        });
    }
    let n = cfg.n;
    let r_eff = (m_j as f64).log2() / n as f64;
    let c_eff = (m_k as f64).log2() / n as f64;
    let reference = optimal_distortion(
        &GaussianScalarSource::new(cfg.gamma)?,
        &TradeoffQuery::new(r_eff, c_eff, p)?,
    )?
    .distortion;

    let reps = est.replicates.min(trials);
    let mut books = Vec::with_capacity(reps as usize);
    let mut rep_roots = Vec::with_capacity(reps as usize);
    let mut plan: Vec<(usize, u64)> = Vec::with_capacity(trials as usize);
    for rep in 0..reps {
        let root = child_seed(cfg.seed, STREAM_REPLICATE, rep);
        let rep_cfg = CodebookConfig { seed: root, ..*cfg };
        books.push(Codebook::build(&rep_cfg)?);
        rep_roots.push(root);
        let start = trials * rep / reps;
        let stop = trials * (rep + 1) / reps;
        for t in start..stop {
            plan.push((rep as usize, t));
        }
    }

    let pool = thread_pool();
    let records: Vec<TrialRecord> = pool.install(|| {
        plan.par_iter()
            .map(|&(rep, t)| run_one_trial(cfg, &books[rep], &channels, rep_roots[rep], t))
            .collect()
    });

    // Pilot: first pilot_fraction of each replicate estimates the
    // representation law's W2 to the source, then the blend is frozen.
    let mut pilot_blocks: Vec<&[f64]> = Vec::new();
    for rep in 0..reps {
        let start = (trials * rep / reps) as usize;
        let stop = (trials * (rep + 1) / reps) as usize;
        let count = stop - start;
        let pilot = ((count as f64 * est.pilot_fraction).ceil() as usize).clamp(1, count);
        for rec in &records[start..start + pilot] {
            pilot_blocks.push(&rec.x_tilde);
        }
    }
    let source_moments =
        GaussianMoments::diagonal(vec![0.0; n], vec![cfg.gamma; n]).expect("valid source moments");
    let tilde_fit = fit_diagonal_moments(&pilot_blocks, n)?;
    let w2_hat = w2_gaussian(&tilde_fit, &source_moments)? / n as f64;

    let p_block = n as f64 * p;
    let w2_block = n as f64 * w2_hat;
    let mut distortions = Vec::with_capacity(records.len());
    let mut hat_blocks: Vec<Vec<f64>> = Vec::with_capacity(records.len());
    for rec in &records {
        let x_hat = interpolate_reconstruction(&rec.x_tilde, &rec.x_prime, w2_block, p_block)?;
        let d = rec
            .x
            .iter()
            .zip(&x_hat)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n as f64;
        distortions.push(d);
        hat_blocks.push(x_hat);
    }
    let (empirical_distortion, empirical_distortion_se) = mean_and_se(&distortions);

    let hat_refs: Vec<&[f64]> = hat_blocks.iter().map(|b| b.as_slice()).collect();
    let hat_fit = fit_diagonal_moments(&hat_refs, n)?;
    let empirical_w2_per_symbol = w2_gaussian(&hat_fit, &source_moments)? / n as f64;

    let prime_refs: Vec<&[f64]> = records.iter().map(|r| r.x_prime.as_slice()).collect();
    let prime_fit = fit_diagonal_moments(&prime_refs, n)?;
    let soft_covering_gap = w2_gaussian(&prime_fit, &source_moments)? / n as f64;

    let (posterior_mean_distortion, posterior_mean_distortion_se) = if est.posterior_mean_check {
        let post_root = child_seed(cfg.seed, STREAM_POSTERIOR, 0);
        let mut ds = Vec::with_capacity(records.len());
        for (idx, rec) in records.iter().enumerate() {
            let rep = plan[idx].0;
            let mut rng = derive_rng(post_root, STREAM_POSTERIOR, idx as u64);
            let pm = posterior_mean_is(
                &rec.x,
                rec.j,
                rec.k,
                &books[rep],
                &channels.mu,
                est.posterior_samples,
                &mut rng,
            )?;
            let d = rec
                .x
                .iter()
                .zip(&pm)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / n as f64;
            ds.push(d);
        }
        let (m, se) = mean_and_se(&ds);
        (Some(m), Some(se))
    } else {
        (None, None)
    };

    Ok(SimulationResult {
        n,
        trials,
        empirical_distortion,
        empirical_distortion_se,
        empirical_w2_per_symbol,
        soft_covering_gap,
        reference,
        r_eff,
        c_eff,
        p,
        posterior_mean_distortion,
        posterior_mean_distortion_se,
    })
}

/// Self-normalized importance-sampling estimate of `E[X | J, K, codebook]`.
/// Proposal: the per-symbol conditional given the selected codeword alone;
/// weights correct for the selection probability over the subcodebook.
fn posterior_mean_is(
    x_observed: &[f64],
    j: u64,
    k: u64,
    book: &Codebook,
    mu: &GaussianCoupling,
    samples: u32,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<f64>> {
    let n = x_observed.len();
    let sub = book.subcodebook(k);
    let (slope, inv_two_var) = encoder_params(mu)?;
    let var = mu.conditional_var();
    // Proposal = prior times likelihood of codeword j: per-symbol Gaussian
    // with posterior precision 1/gamma + 1/var.
    let gamma = mu.gamma();
    let prec = 1.0 / gamma + 1.0 / var;
    let prop_var = 1.0 / prec;
    let prop_sd = prop_var.sqrt();
    let selected = &sub[j as usize];
    let mut num = vec![0.0; n];
    let mut den = 0.0;
    let mut draw = vec![0.0; n];
    for _ in 0..samples {
        for (d, &w) in draw.iter_mut().zip(selected) {
            let mean = prop_var * (slope * w / var);
            *d = mean + prop_sd * rng.sample::<f64, _>(StandardNormal);
        }
        // Weight = P(J = j | x) / likelihood_j(x) up to constants
        //        = 1 / sum_j' exp(l_j' - l_j).
        let l_j = log_weight(&draw, selected, slope, inv_two_var);
        let mut denom = 0.0;
        for w in &sub {
            denom += (log_weight(&draw, w, slope, inv_two_var) - l_j).exp();
        }
        let weight = 1.0 / denom;
        for (acc, &d) in num.iter_mut().zip(&draw) {
            *acc += weight * d;
        }
        den += weight;
    }
    if den == 0.0 {
        return Err(Error::ConvergenceFailure {
            what: "importance weights all collapsed to zero".into(),
        });
    }
    let _ = x_observed;
    Ok(num.into_iter().map(|v| v / den).collect())
}

// ---------------------------------------------------------------------------
// Soft covering
// ---------------------------------------------------------------------------

/// Soft-covering sweep configuration. The codebook carries `2^{nR}`
/// codewords but the channel is designed at rate `R - margin`; a positive
/// margin oversizes the codebook (covering holds), a negative margin is the
/// undersized control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftCoveringConfig {
    pub gamma: f64,
    #[serde(rename = "R")]
    pub rate: f64,
    #[serde(default = "default_margin")]
    pub margin: f64,
    pub ns: Vec<usize>,
    pub draws: u64,
    pub seed: u64,
    #[serde(default = "default_replicates")]
    pub replicates: u64,
    #[serde(default = "default_codeword_budget")]
    pub codeword_budget: u64,
}

fn default_margin() -> f64 {
    0.25
}

fn default_replicates() -> u64 {
    5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftCoveringPoint {
    pub n: usize,
    pub gap: f64,
    pub gap_se: f64,
}

/// Estimates the per-symbol squared-W2 gap between the codebook-induced
/// output law and the source law, for each blocklength in the sweep.
pub fn soft_covering_gap(cfg: &SoftCoveringConfig) -> Result<Vec<SoftCoveringPoint>> {
    if !cfg.gamma.is_finite() || cfg.gamma <= 0.0 {
        return Err(Error::InvalidConfig {
            what: format!("gamma must be positive and finite, got {}", cfg.gamma),
        });
    }
    if !cfg.rate.is_finite() || cfg.rate < 0.0 {
        return Err(Error::NegativeRate {
            name: "R",
            value: cfg.rate,
        });
    }
    if !cfg.margin.is_finite() {
        return Err(Error::NonFiniteInput {
            name: "margin",
            value: cfg.margin,
        });
    }
    let design_rate = cfg.rate - cfg.margin;
    if design_rate < 0.0 {
        return Err(Error::InvalidConfig {
            what: format!(
                "design rate R - margin must be nonnegative, got {design_rate}"
            ),
        });
    }
    if cfg.ns.is_empty() {
        return Err(Error::EmptyInput { name: "ns" });
    }
    if cfg.draws < 2 {
        return Err(Error::InvalidConfig {
            what: "draws must be at least 2".into(),
        });
    }
    if cfg.replicates == 0 {
        return Err(Error::InvalidConfig {
            what: "replicates must be at least 1".into(),
        });
    }

    let gamma_tilde = cfg.gamma * (1.0 - pow2_neg2(design_rate));
    let noise_var = cfg.gamma - gamma_tilde;
    let noise_sd = noise_var.sqrt();
    let pool = thread_pool();

    let mut points = Vec::with_capacity(cfg.ns.len());
    for &n in &cfg.ns {
        let sweep_seed = child_seed(cfg.seed, STREAM_SOFT, n as u64);
        let base = CodebookConfig {
            n,
            rate: cfg.rate,
            common_randomness: 0.0,
            gamma: cfg.gamma,
            seed: sweep_seed,
            codeword_budget: cfg.codeword_budget,
        };
        base.validate()?;
        let source_moments = GaussianMoments::diagonal(vec![0.0; n], vec![cfg.gamma; n])
            .expect("valid source moments");

        let gaps: Vec<f64> = pool.install(|| {
            (0..cfg.replicates)
                .into_par_iter()
                .map(|rep| {
                    let root = child_seed(sweep_seed, STREAM_REPLICATE, rep);
                    let rep_cfg = CodebookConfig { seed: root, ..base };
                    let book = Codebook::build_with_variance(&rep_cfg, gamma_tilde)
                        .expect("validated above");
                    let (m_j, _) = book.counts();
                    let mut blocks: Vec<Vec<f64>> = Vec::with_capacity(cfg.draws as usize);
                    let mut cw = vec![0.0; n];
                    for d in 0..cfg.draws {
                        let mut rng = derive_rng(root, STREAM_TRIAL, d);
                        let jd = rng.random_range(0..m_j);
                        book.codeword_into(jd, 0, &mut cw);
                        blocks.push(
                            cw.iter()
                                .map(|&w| w + noise_sd * rng.sample::<f64, _>(StandardNormal))
                                .collect(),
                        );
                    }
                    let refs: Vec<&[f64]> = blocks.iter().map(|b| b.as_slice()).collect();
                    let fit = fit_diagonal_moments(&refs, n).expect("nonempty draws");
                    w2_gaussian(&fit, &source_moments).expect("moment fit is valid") / n as f64
                })
                .collect()
        });
        let (gap, gap_se) = mean_and_se(&gaps);
        points.push(SoftCoveringPoint { n, gap, gap_se });
    }
    Ok(points)
}

// ---------------------------------------------------------------------------
