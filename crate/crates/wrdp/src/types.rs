//! Domain types shared by every module.
//!
//! Conventions: all rates are in bits (base-2 logarithms). Rate budgets for
//! common randomness and perception budgets may be `+inf`; the JSON form
//! writes those as the string `"inf"` so documents stay valid JSON. The
//! encoding rate `R` is always finite.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance for feasibility and consistency checks.
pub const DEFAULT_TOL: f64 = 1e-9;

// ---------------------------------------------------------------------------
// JSON helpers: `f64` fields that admit +inf, written as the string "inf".
// ---------------------------------------------------------------------------

/// Serde adapter for a single `f64` that may be `+inf` (`"inf"` in JSON).
pub mod ext_f64 {
    use serde::de::{self, Unexpected};
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, ser: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            ser.serialize_str("inf")
        } else {
            ser.serialize_f64(*v)
        }
    }

    struct ExtVisitor;

    impl<'de> de::Visitor<'de> for ExtVisitor {
        type Value = f64;

        fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
            f.write_str("a number or the string \"inf\"")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_str<E: de::Error>(self, s: &str) -> Result<f64, E> {
            match s {
                "inf" => Ok(f64::INFINITY),
                _ => Err(E::invalid_value(Unexpected::Str(s), &self)),
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<f64, D::Error> {
        de.deserialize_any(ExtVisitor)
    }
}

/// Serde adapter for `Vec<f64>` whose entries may be `+inf`.
pub mod ext_vec_f64 {
    use serde::ser::SerializeSeq;
    use serde::{de, Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    struct Entry(#[serde(with = "super::ext_f64")] f64);

    pub fn serialize<S: Serializer>(v: &[f64], ser: S) -> Result<S::Ok, S::Error> {
        struct One(f64);
        impl serde::Serialize for One {
            fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
                super::ext_f64::serialize(&self.0, ser)
            }
        }
        let mut seq = ser.serialize_seq(Some(v.len()))?;
        for &x in v {
            seq.serialize_element(&One(x))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<f64>, D::Error> {
        let entries = Vec::<Entry>::deserialize(de).map_err(de::Error::custom)?;
        Ok(entries.into_iter().map(|e| e.0).collect())
    }
}

fn require_finite(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteInput { name, value: v })
    }
}

/// Finite and nonnegative, for plain rate/variance inputs.
fn require_finite_nonneg(name: &'static str, v: f64, as_rate: bool) -> Result<()> {
    require_finite(name, v)?;
    if v < 0.0 {
        return Err(if as_rate {
            Error::NegativeRate { name, value: v }
        } else {
            Error::NegativeVariance { name, value: v }
        });
    }
    Ok(())
}

/// Nonnegative, +inf allowed, NaN rejected.
fn require_ext_nonneg(name: &'static str, v: f64, as_rate: bool) -> Result<()> {
    if v.is_nan() || v == f64::NEG_INFINITY {
        return Err(Error::NonFiniteInput { name, value: v });
    }
    if v < 0.0 {
        return Err(if as_rate {
            Error::NegativeRate { name, value: v }
        } else {
            Error::NegativeBudget { name, value: v }
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Sources
// ---------------------------------------------------------------------------

/// Zero-mean scalar Gaussian source with variance `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianScalarSource {
    pub gamma: f64,
}

impl GaussianScalarSource {
    pub fn new(gamma: f64) -> Result<Self> {
        require_finite_nonneg("gamma", gamma, false)?;
        Ok(Self { gamma })
    }
}

/// Independent Gaussian components with per-component variances `gammas`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagGaussianSource {
    pub gammas: Vec<f64>,
}

impl DiagGaussianSource {
    pub fn new(gammas: Vec<f64>) -> Result<Self> {
        if gammas.is_empty() {
            return Err(Error::EmptyInput { name: "gammas" });
        }
        for &g in &gammas {
            require_finite_nonneg("gammas[..]", g, false)?;
        }
        Ok(Self { gammas })
    }

    pub fn len(&self) -> usize {
        self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gammas.is_empty()
    }

    pub fn total_variance(&self) -> f64 {
        self.gammas.iter().sum()
    }
}

// ---------------------------------------------------------------------------
// Queries and answers
// ---------------------------------------------------------------------------

/// One operating point of the tradeoff: encoding rate `R` (finite), common
/// randomness rate `C` (may be `+inf`), perception budget `P` (may be `+inf`,
/// meaning the perception constraint is dropped).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffQuery {
    #[serde(rename = "R")]
    pub rate: f64,
    #[serde(rename = "C", with = "ext_f64")]
    pub common_randomness: f64,
    #[serde(rename = "P", with = "ext_f64")]
    pub perception: f64,
}

impl TradeoffQuery {
    pub fn new(rate: f64, common_randomness: f64, perception: f64) -> Result<Self> {
        let q = Self {
            rate,
            common_randomness,
            perception,
        };
        validate_query(&q)?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        validate_query(self)
    }
}

/// Checks a query's ranges; errors name the offending field.
pub fn validate_query(q: &TradeoffQuery) -> Result<()> {
    if !q.rate.is_finite() {
        return Err(Error::NonFiniteInput {
            name: "R",
            value: q.rate,
        });
    }
    if q.rate < 0.0 {
        return Err(Error::NegativeRate {
            name: "R",
            value: q.rate,
        });
    }
    require_ext_nonneg("C", q.common_randomness, true)?;
    require_ext_nonneg("P", q.perception, false)?;
    Ok(())
}

/// A solved operating point: the query plus the minimal distortion `D`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    #[serde(flatten)]
    pub query: TradeoffQuery,
    #[serde(rename = "D")]
    pub distortion: f64,
}

impl TradeoffPoint {
    pub fn new(query: TradeoffQuery, distortion: f64) -> Result<Self> {
        if !distortion.is_finite() || distortion < 0.0 {
            return Err(Error::Domain {
                what: format!("distortion must be finite and >= 0, got {distortion}"),
            });
        }
        Ok(Self { query, distortion })
    }
}

// ---------------------------------------------------------------------------
// Couplings
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct CouplingRepr {
    gamma: f64,
    gamma_tilde: f64,
    theta: f64,
}

/// A jointly Gaussian pair (source, representation) with covariance
/// `[[gamma, theta], [theta, gamma_tilde]]`. Construction enforces
/// `theta^2 <= gamma * gamma_tilde` so the pair is a valid distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CouplingRepr", into = "CouplingRepr")]
pub struct GaussianCoupling {
    gamma: f64,
    gamma_tilde: f64,
    theta: f64,
}

impl GaussianCoupling {
    pub fn new(gamma: f64, gamma_tilde: f64, theta: f64) -> Result<Self> {
        require_finite_nonneg("gamma", gamma, false)?;
        require_finite_nonneg("gamma_tilde", gamma_tilde, false)?;
        require_finite("theta", theta)?;
        let bound = gamma * gamma_tilde;
        if theta * theta > bound {
            return Err(Error::CouplingNotPsd {
                theta_sq: theta * theta,
                bound,
            });
        }
        Ok(Self {
            gamma,
            gamma_tilde,
            theta,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn gamma_tilde(&self) -> f64 {
        self.gamma_tilde
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Slope of `E[source | representation = x]`, i.e. `theta / gamma_tilde`
    /// (0 for a degenerate representation).
    pub fn mean_slope(&self) -> f64 {
        if self.gamma_tilde == 0.0 {
            0.0
        } else {
            self.theta / self.gamma_tilde
        }
    }

    /// Conditional variance of the source given the representation.
    pub fn conditional_var(&self) -> f64 {
        if self.gamma_tilde == 0.0 {
            self.gamma
        } else {
            (self.gamma - self.theta * self.theta / self.gamma_tilde).max(0.0)
        }
    }

    /// Mean squared difference `E[(source - representation)^2]` under the
    /// coupling: `gamma + gamma_tilde - 2 theta`.
    pub fn mean_square_gap(&self) -> f64 {
        self.gamma + self.gamma_tilde - 2.0 * self.theta
    }
}

impl TryFrom<CouplingRepr> for GaussianCoupling {
    type Error = Error;

    fn try_from(r: CouplingRepr) -> Result<Self> {
        GaussianCoupling::new(r.gamma, r.gamma_tilde, r.theta)
    }
}

impl From<GaussianCoupling> for CouplingRepr {
    fn from(c: GaussianCoupling) -> Self {
        CouplingRepr {
            gamma: c.gamma,
            gamma_tilde: c.gamma_tilde,
            theta: c.theta,
        }
    }
}

// ---------------------------------------------------------------------------
// Rate allocations
// ---------------------------------------------------------------------------

/// Per-component rate pair for the vector problem: `r` is the encoding-rate
/// split, `r_prime` the split of the joint (encoding + common randomness)
/// budget. `r` entries are finite; `r_prime` entries may be `+inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateAllocation {
    pub r: Vec<f64>,
    #[serde(with = "ext_vec_f64")]
    pub r_prime: Vec<f64>,
}

impl RateAllocation {
    pub fn new(r: Vec<f64>, r_prime: Vec<f64>) -> Result<Self> {
        let a = Self { r, r_prime };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        if self.r.len() != self.r_prime.len() {
            return Err(Error::DimensionMismatch {
                expected: self.r.len(),
                got: self.r_prime.len(),
            });
        }
        for &x in &self.r {
            if !x.is_finite() {
                return Err(Error::NonFiniteInput {
                    name: "r[..]",
                    value: x,
                });
            }
            if x < 0.0 {
                return Err(Error::NegativeRate {
                    name: "r[..]",
                    value: x,
                });
            }
        }
        for &x in &self.r_prime {
            require_ext_nonneg("r_prime[..]", x, true)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn rate_sum(&self) -> f64 {
        self.r.iter().sum()
    }

    /// Sum of `min(r_prime, cap)`; finite even when entries are `+inf`.
    pub fn capped_prime_sum(&self, cap: f64) -> f64 {
        self.r_prime.iter().map(|&x| x.min(cap)).sum()
    }

    /// Budget feasibility within `tol`: `sum r <= rate_budget` and
    /// `sum min(r_prime, cap) <= joint_budget` (the latter trivially holds
    /// for an infinite budget).
    pub fn check_budgets(
        &self,
        rate_budget: f64,
        joint_budget: f64,
        cap: f64,
        tol: f64,
    ) -> Result<()> {
        let s = self.rate_sum();
        if s > rate_budget + tol {
            return Err(Error::Domain {
                what: format!("rate sum {s} exceeds budget {rate_budget}"),
            });
        }
        if joint_budget.is_finite() {
            let sp = self.capped_prime_sum(cap);
            if sp > joint_budget + tol {
                return Err(Error::Domain {
                    what: format!("r_prime sum {sp} exceeds budget {joint_budget}"),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_source_rejects_bad_variance() {
        assert!(matches!(
            GaussianScalarSource::new(-1.0),
            Err(Error::NegativeVariance { name: "gamma", .. })
        ));
        assert!(matches!(
            GaussianScalarSource::new(f64::NAN),
            Err(Error::NonFiniteInput { name: "gamma", .. })
        ));
        assert!(GaussianScalarSource::new(0.0).is_ok());
    }

    #[test]
    fn query_validation_names_offending_field() {
        assert!(matches!(
            TradeoffQuery::new(-0.5, 0.0, 0.0),
            Err(Error::NegativeRate { name: "R", .. })
        ));
        assert!(matches!(
            TradeoffQuery::new(f64::INFINITY, 0.0, 0.0),
            Err(Error::NonFiniteInput { name: "R", .. })
        ));
        assert!(matches!(
            TradeoffQuery::new(1.0, -1.0, 0.0),
            Err(Error::NegativeRate { name: "C", .. })
        ));
        assert!(matches!(
            TradeoffQuery::new(1.0, 0.0, -0.2),
            Err(Error::NegativeBudget { name: "P", .. })
        ));
        assert!(matches!(
            TradeoffQuery::new(1.0, 0.0, f64::NAN),
            Err(Error::NonFiniteInput { name: "P", .. })
        ));
        // +inf is legal for C and P.
        assert!(TradeoffQuery::new(1.0, f64::INFINITY, f64::INFINITY).is_ok());
    }

    #[test]
    fn query_json_uses_inf_sentinel() {
        let q = TradeoffQuery::new(1.0, f64::INFINITY, 0.1).unwrap();
        let s = serde_json::to_string(&q).unwrap();
        assert_eq!(s, r#"{"R":1.0,"C":"inf","P":0.1}"#);
        let back: TradeoffQuery = serde_json::from_str(&s).unwrap();
        assert_eq!(back, q);
    }

    #[test]
    fn coupling_enforces_psd() {
        assert!(GaussianCoupling::new(1.0, 0.75, 0.9).is_err());
        let c = GaussianCoupling::new(1.0, 0.75, 0.75).unwrap();
        assert_eq!(c.mean_slope(), 1.0);
        assert!((c.conditional_var() - 0.25).abs() < 1e-15);
        // Degenerate representation: conditional falls back to the prior.
        let d = GaussianCoupling::new(1.0, 0.0, 0.0).unwrap();
        assert_eq!(d.mean_slope(), 0.0);
        assert_eq!(d.conditional_var(), 1.0);
    }

    #[test]
    fn allocation_round_trip_with_infinite_entries() {
        let a = RateAllocation::new(vec![0.5, 0.5], vec![f64::INFINITY, 1.0]).unwrap();
        let s = serde_json::to_string(&a).unwrap();
        assert_eq!(s, r#"{"r":[0.5,0.5],"r_prime":["inf",1.0]}"#);
        let back: RateAllocation = serde_json::from_str(&s).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn allocation_budget_checks() {
        let a = RateAllocation::new(vec![0.6, 0.5], vec![1.0, 1.0]).unwrap();
        assert!(a.check_budgets(1.0, 2.0, 30.0, 1e-9).is_err());
        assert!(a.check_budgets(1.1, 2.0, 30.0, 1e-9).is_ok());
        let b = RateAllocation::new(vec![0.5], vec![f64::INFINITY]).unwrap();
        // An infinite entry only counts up to the cap against a finite budget.
        assert!(b.check_budgets(0.5, 31.0, 30.0, 1e-9).is_ok());
        assert!(b.check_budgets(0.5, 1.0, 30.0, 1e-9).is_err());
        assert!(b.check_budgets(0.5, f64::INFINITY, 30.0, 1e-9).is_ok());
    }

    #[test]
    fn tradeoff_point_serializes_flat() {
        let p = TradeoffPoint::new(TradeoffQuery::new(1.0, 0.0, 0.0).unwrap(), 0.5).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"R":1.0,"C":0.0,"P":0.0,"D":0.5}"#);
        let back: TradeoffPoint = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }
}
