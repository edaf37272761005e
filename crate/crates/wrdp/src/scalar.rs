//! Closed forms for the scalar Gaussian source: the optimal distortion under
//! an encoding-rate budget `R`, a common-randomness budget `C`, and a squared
//! Wasserstein-2 perception budget `P`, plus the threshold curves where each
//! constraint stops binding.
//!
//! The central quantity is the correlation factor
//!
//! `psi(a, b) = sqrt((1 - 2^(-2a)) * (1 - 2^(-2b)))`
//!
//! and the optimal distortion
//!
//! `D(R, C, P) = gamma*2^(-2R) + [(sqrt(gamma*(2 - 2^(-2R) - 2*psi(R, R+C))) - sqrt(P))+]^2`.
//!
//! Infinite `C` or `P` are explicit sentinels (`f64::INFINITY`) and every
//! formula branches on them analytically: `2^(-2a)` is exactly 0 at `a = inf`,
//! never the result of floating-point exponentiation.
//!
//! ## Example
//!
//! ```
//! use wrdp::types::{GaussianScalarSource, TradeoffQuery};
//! use wrdp::scalar::optimal_distortion;
//!
//! let src = GaussianScalarSource::new(1.0).unwrap();
//! // No rate, no common randomness, perfect realism: distortion 2.
//! let q = TradeoffQuery::new(0.0, 0.0, 0.0).unwrap();
//! let d = optimal_distortion(&src, &q).unwrap().distortion;
//! assert!((d - 2.0).abs() < 1e-12);
//! ```

use serde::de::{self, Unexpected};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::types::{GaussianScalarSource, TradeoffPoint, TradeoffQuery};

// ---------------------------------------------------------------------------
// Elementary pieces
// ---------------------------------------------------------------------------

/// `2^(-2a)`; exactly 0 for `a = +inf` via the sentinel branch.
pub(crate) fn pow2_neg2(a: f64) -> f64 {
    debug_assert!(!a.is_nan() && a >= 0.0);
    if a.is_infinite() {
        0.0
    } else {
        (-2.0 * a).exp2()
    }
}

/// `sqrt(1 - 2^(-2a))`: the maximal normalized correlation a rate-`a`
/// description supports. Exactly 1 for `a = +inf`.
pub(crate) fn corr_gain(a: f64) -> f64 {
    if a.is_infinite() {
        1.0
    } else {
        (1.0 - pow2_neg2(a)).sqrt()
    }
}

fn check_rate(name: &'static str, a: f64) -> Result<()> {
    if a.is_nan() || a == f64::NEG_INFINITY {
        return Err(Error::NonFiniteInput { name, value: a });
    }
    if a < 0.0 {
        return Err(Error::NegativeRate { name, value: a });
    }
    Ok(())
}

/// Correlation factor `psi(a, b) = sqrt((1 - 2^(-2a)) (1 - 2^(-2b)))`.
///
/// Symmetric, nondecreasing in each argument, with range [0, 1];
/// `psi(inf, inf) = 1` exactly.
pub fn psi(a: f64, b: f64) -> Result<f64> {
    check_rate("a", a)?;
    check_rate("b", b)?;
    Ok(corr_gain(a) * corr_gain(b))
}

/// Classical Gaussian distortion-rate function `gamma * 2^(-2R)`.
pub fn distortion_rate(gamma: f64, rate: f64) -> Result<f64> {
    if !gamma.is_finite() {
        return Err(Error::NonFiniteInput {
            name: "gamma",
            value: gamma,
        });
    }
    if gamma < 0.0 {
        return Err(Error::NegativeVariance {
            name: "gamma",
            value: gamma,
        });
    }
    check_rate("R", rate)?;
    Ok(gamma * pow2_neg2(rate))
}

/// `[(sqrt(x) - sqrt(budget))+]^2`: the part of a squared-W2 mismatch `x`
/// that survives after spending `budget` of allowed mismatch. Jointly convex
/// in `(x, budget)`; exactly 0 whenever `budget >= x` (including `+inf`).
pub fn bracket_term(x: f64, budget: f64) -> f64 {
    debug_assert!(x >= 0.0 && budget >= 0.0);
    let d = x.sqrt() - budget.sqrt();
    if d > 0.0 {
        d * d
    } else {
        0.0
    }
}

/// Mean squared mismatch of the realism-matched channel at rates
/// `(r, r + c)`: `gamma * (2 - 2^(-2r) - 2*psi(r, r+c))`.
///
/// Computed as `gamma * ((s_u - s_v)^2 + v)` with `u = 2^(-2r)`,
/// `v = 2^(-2(r+c))`, `s_x = sqrt(1-x)`, which is algebraically identical,
/// never negative in floating point, and collapses exactly to
/// `gamma * 2^(-2r)` at `c = 0`.
pub(crate) fn perception_mismatch(gamma: f64, r: f64, c: f64) -> f64 {
    let rc = if c.is_infinite() { f64::INFINITY } else { r + c };
    let v = pow2_neg2(rc);
    let su = corr_gain(r);
    let sv = corr_gain(rc);
    let d = su - sv;
    gamma * (d * d + v)
}

// ---------------------------------------------------------------------------
// Optimal distortion
// ---------------------------------------------------------------------------

/// Minimal mean squared error at the query's `(R, C, P)` operating point.
///
/// `P = +inf` drops the perception term; a zero-variance source yields 0.
pub fn optimal_distortion(
    src: &GaussianScalarSource,
    q: &TradeoffQuery,
) -> Result<TradeoffPoint> {
    q.validate()?;
    let gamma = GaussianScalarSource::new(src.gamma)?.gamma;
    if gamma == 0.0 {
        return TradeoffPoint::new(*q, 0.0);
    }
    let base = gamma * pow2_neg2(q.rate);
    let d = if q.perception.is_infinite() {
        base
    } else {
        let mismatch = perception_mismatch(gamma, q.rate, q.common_randomness);
        base + bracket_term(mismatch, q.perception)
    };
    TradeoffPoint::new(*q, d)
}

/// Zero-common-randomness special form:
/// `D(R) + [(sqrt(D(R)) - sqrt(P))+]^2` with `D(R) = gamma * 2^(-2R)`.
pub fn optimal_distortion_c0(src: &GaussianScalarSource, rate: f64, perception: f64) -> Result<f64> {
    let gamma = GaussianScalarSource::new(src.gamma)?.gamma;
    check_rate("R", rate)?;
    if rate.is_infinite() {
        return Err(Error::NonFiniteInput {
            name: "R",
            value: rate,
        });
    }
    if perception.is_nan() || perception == f64::NEG_INFINITY {
        return Err(Error::NonFiniteInput {
            name: "P",
            value: perception,
        });
    }
    if perception < 0.0 {
        return Err(Error::NegativeBudget {
            name: "P",
            value: perception,
        });
    }
    if gamma == 0.0 {
        return Ok(0.0);
    }
    let base = gamma * pow2_neg2(rate);
    if perception.is_infinite() {
        return Ok(base);
    }
    Ok(base + bracket_term(base, perception))
}

// ---------------------------------------------------------------------------
// Threshold curves
// ---------------------------------------------------------------------------

/// Where a constraint stops binding: already inactive (`Zero`), inactive past
/// a finite value (`Finite`), or active for every finite value (`Infinite`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Zero,
    Finite(f64),
    Infinite,
}

impl Threshold {
    /// Numeric value, `None` when no finite threshold exists.
    pub fn value(&self) -> Option<f64> {
        match self {
            Threshold::Zero => Some(0.0),
            Threshold::Finite(v) => Some(*v),
            Threshold::Infinite => None,
        }
    }
}

impl std::fmt::Display for Threshold {
    fn fmt(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
        match self {
            Threshold::Zero => write!(f, "0"),
            Threshold::Finite(v) => write!(f, "{v}"),
            Threshold::Infinite => write!(f, "none"),
        }
    }
}

impl Serialize for Threshold {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Threshold::Zero => ser.serialize_f64(0.0),
            Threshold::Finite(v) => ser.serialize_f64(*v),
            Threshold::Infinite => ser.serialize_str("none"),
        }
    }
}

impl<'de> Deserialize<'de> for Threshold {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> de::Visitor<'de> for V {
            type Value = Threshold;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a nonnegative number or the string \"none\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Threshold, E> {
                if v == 0.0 {
                    Ok(Threshold::Zero)
                } else if v > 0.0 {
                    Ok(Threshold::Finite(v))
                } else {
                    Err(E::invalid_value(Unexpected::Float(v), &self))
                }
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Threshold, E> {
                self.visit_f64(v as f64)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Threshold, E> {
                self.visit_f64(v as f64)
            }

            fn visit_str<E: de::Error>(self, s: &str) -> std::result::Result<Threshold, E> {
                match s {
                    "none" => Ok(Threshold::Infinite),
                    _ => Err(E::invalid_value(Unexpected::Str(s), &self)),
                }
            }
        }
        de.deserialize_any(V)
    }
}

/// Perception budget above which the perception constraint is inactive:
/// `gamma * (2 - 2^(-2R) - 2*psi(R, R+C))`. For `P` at or above this value
/// the optimal distortion equals `distortion_rate(gamma, R)` exactly.
pub fn perception_threshold(src: &GaussianScalarSource, rate: f64, c: f64) -> Result<f64> {
    let gamma = GaussianScalarSource::new(src.gamma)?.gamma;
    check_rate("R", rate)?;
    if rate.is_infinite() {
        return Err(Error::NonFiniteInput {
            name: "R",
            value: rate,
        });
    }
    check_rate("C", c)?;
    Ok(perception_mismatch(gamma, rate, c))
}

/// Smallest common-randomness rate at which the distortion matches its
/// `C = inf` value, for fixed `(R, P)`:
///
/// `C* = (1/2) log2( 4(2^(-2R) - 2^(-4R)) /
///                   (2(2 - 2^(-2R))(P/gamma) - (P/gamma)^2 - 2^(-4R)) )`
///
/// on the open interval `P in (gamma*(2 - 2^(-2R) - 2*sqrt(1-2^(-2R))),
/// gamma*2^(-2R))`; `Zero` for `P >= gamma*2^(-2R)` or `R = 0`; `Infinite`
/// at or below the left endpoint, where perception stays active for every
/// finite `C`.
pub fn common_randomness_threshold(
    src: &GaussianScalarSource,
    rate: f64,
    perception: f64,
) -> Result<Threshold> {
    let gamma = GaussianScalarSource::new(src.gamma)?.gamma;
    check_rate("R", rate)?;
    if rate.is_infinite() {
        return Err(Error::NonFiniteInput {
            name: "R",
            value: rate,
        });
    }
    if perception.is_nan() || perception == f64::NEG_INFINITY {
        return Err(Error::NonFiniteInput {
            name: "P",
            value: perception,
        });
    }
    if perception < 0.0 {
        return Err(Error::NegativeBudget {
            name: "P",
            value: perception,
        });
    }
    if gamma == 0.0 || rate == 0.0 {
        return Ok(Threshold::Zero);
    }
    let u = pow2_neg2(rate);
    if perception >= gamma * u {
        return Ok(Threshold::Zero);
    }
    let left = perception_mismatch(gamma, rate, f64::INFINITY);
    if perception <= left {
        return Ok(Threshold::Infinite);
    }
    let w = perception / gamma;
    let numer = 4.0 * (u - u * u);
    let denom = 2.0 * (2.0 - u) * w - w * w - u * u;
    debug_assert!(denom > 0.0);
    Ok(Threshold::Finite(0.5 * (numer / denom).log2()))
}

/// Smallest encoding rate at which the distortion matches its unconstrained
/// (`P = inf`) value, for fixed `(C, P)`:
///
/// `R* = (1/2) log2( (2P/g + 2^(-2(C-1))
///        + sqrt((2P/g + 2^(-2(C-1)))^2 + 4(1 - 2^(-2(C-1)))(4P/g - P^2/g^2)))
///        / (2 (4P/g - P^2/g^2)) )`
///
/// with `g = gamma`, for `P in (0, gamma)`; `Zero` for `P >= gamma`;
/// `Infinite` at `P = 0`, where realism binds at every finite rate.
pub fn rate_threshold(src: &GaussianScalarSource, c: f64, perception: f64) -> Result<Threshold> {
    let gamma = GaussianScalarSource::new(src.gamma)?.gamma;
    check_rate("C", c)?;
    if perception.is_nan() || perception == f64::NEG_INFINITY {
        return Err(Error::NonFiniteInput {
            name: "P",
            value: perception,
        });
    }
    if perception < 0.0 {
        return Err(Error::NegativeBudget {
            name: "P",
            value: perception,
        });
    }
    if gamma == 0.0 || perception >= gamma {
        return Ok(Threshold::Zero);
    }
    if perception == 0.0 {
        return Ok(Threshold::Infinite);
    }
    let w = perception / gamma;
    // 2^(-2(C-1)) = 4 * 2^(-2C); exactly 0 at C = inf.
    let t = 4.0 * pow2_neg2(c);
    let q = 2.0 * w;
    let base = 4.0 * w - w * w;
    let disc = (q + t) * (q + t) + 4.0 * (1.0 - t) * base;
    debug_assert!(disc >= 0.0);
    Ok(Threshold::Finite(
        0.5 * ((q + t + disc.sqrt()) / (2.0 * base)).log2(),
    ))
}

// ---------------------------------------------------------------------------
