//! The contaminated-restart probability model.
//!
//! An attempt runs `T` tool calls in order and succeeds only if every call
//! succeeds. The first attempt runs in a clean context with per-step error
//! rate `eps0`; every attempt that follows a failure runs in a contaminated
//! context with per-step error rate `eps1 >= eps0`. The number of attempts to
//! first success is therefore a modified geometric variable: the first trial
//! succeeds with `p0 = (1 - eps0)^T`, all later ones with `p1 = (1 - eps1)^T`.
//!
//! All powers are evaluated in the log domain (`exp(n * ln_1p(-p))`) so that
//! deep pipelines and large attempt counts neither underflow prematurely nor
//! lose the small-probability digits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest attempt count accepted by [`enumeration_oracle`].
pub const ORACLE_MAX_ATTEMPTS: u64 = 20;

/// The model triple: base step error, contaminated step error, pipeline depth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    eps0: f64,
    eps1: f64,
    depth: u32,
}

impl ModelParams {
    /// Requires `0 < eps0 <= eps1 < 1` and `depth >= 1`.
    ///
    /// `eps0 == eps1` is accepted and describes the independent-retry model.
    pub fn new(eps0: f64, eps1: f64, depth: u32) -> Result<Self> {
        if !(eps0 > 0.0 && eps0 < 1.0) {
            return Err(Error::domain(format!("eps0 must lie in (0,1), got {eps0}")));
        }
        if !(eps1 > 0.0 && eps1 < 1.0) {
            return Err(Error::domain(format!("eps1 must lie in (0,1), got {eps1}")));
        }
        if eps1 < eps0 {
            return Err(Error::domain(format!(
                "eps1 ({eps1}) must not be smaller than eps0 ({eps0})"
            )));
        }
        if depth == 0 {
            return Err(Error::domain("pipeline depth must be at least 1"));
        }
        Ok(Self { eps0, eps1, depth })
    }

    /// Like [`ModelParams::new`] but accepts the closed interval `[0, 1]` for
    /// both error rates. Only the simulator is defined on the endpoints; the
    /// analytic operations reject such parameters with a domain error.
    pub fn new_closed(eps0: f64, eps1: f64, depth: u32) -> Result<Self> {
        if !(0.0..=1.0).contains(&eps0) || !(0.0..=1.0).contains(&eps1) {
            return Err(Error::domain(format!(
                "error rates must lie in [0,1], got eps0={eps0}, eps1={eps1}"
            )));
        }
        if eps1 < eps0 {
            return Err(Error::domain(format!(
                "eps1 ({eps1}) must not be smaller than eps0 ({eps0})"
            )));
        }
        if depth == 0 {
            return Err(Error::domain("pipeline depth must be at least 1"));
        }
        Ok(Self { eps0, eps1, depth })
    }

    pub fn eps0(&self) -> f64 {
        self.eps0
    }

    pub fn eps1(&self) -> f64 {
        self.eps1
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// `eps1 / eps0`.
    pub fn cascade_ratio(&self) -> f64 {
        self.eps1 / self.eps0
    }

    /// Shorthand for [`derive_rates`].
    pub fn rates(&self) -> Result<DerivedRates> {
        derive_rates(self)
    }
}

/// Attempt-level quantities derived from a model.
///
/// `a_att = ln(1/(1-p0))` and `b_att = ln(1/(1-p1))` are the attempt-level
/// log-rates; `a_step`, `b_step` are the per-step analogues and exist only
/// when the rates were derived from step error rates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedRates {
    p0: f64,
    p1: f64,
    ln_p1: f64,
    a_att: f64,
    b_att: f64,
    a_step: Option<f64>,
    b_step: Option<f64>,
}

impl DerivedRates {
    /// Builds rates directly from attempt success probabilities.
    ///
    /// Requires `0 < p0 < 1` and `0 <= p1 <= p0`.
    pub fn from_attempt_probs(p0: f64, p1: f64) -> Result<Self> {
        if !(p0 > 0.0 && p0 < 1.0) {
            return Err(Error::domain(format!("p0 must lie in (0,1), got {p0}")));
        }
        if !(p1 >= 0.0 && p1 <= p0) {
            return Err(Error::domain(format!(
                "p1 must lie in [0, p0={p0}], got {p1}"
            )));
        }
        Ok(Self {
            p0,
            p1,
            ln_p1: p1.ln(),
            a_att: -(-p0).ln_1p(),
            b_att: -(-p1).ln_1p(),
            a_step: None,
            b_step: None,
        })
    }

    /// Clean-context attempt success probability.
    pub fn p0(&self) -> f64 {
        self.p0
    }

    /// Contaminated-context attempt success probability. May be exactly zero
    /// when `(1 - eps1)^T` underflows; [`DerivedRates::ln_p1`] keeps the value.
    pub fn p1(&self) -> f64 {
        self.p1
    }

    pub fn ln_p1(&self) -> f64 {
        self.ln_p1
    }

    pub fn a_att(&self) -> f64 {
        self.a_att
    }

    pub fn b_att(&self) -> f64 {
        self.b_att
    }

    pub fn a_step(&self) -> Option<f64> {
        self.a_step
    }

    pub fn b_step(&self) -> Option<f64> {
        self.b_step
    }

    /// True when contaminated success underflowed to zero.
    pub fn p1_underflowed(&self) -> bool {
        self.p1 == 0.0 && self.ln_p1.is_finite()
    }
}

/// Which retry dynamics govern attempts after the first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RetryPolicy {
    /// A failed attempt contaminates the next one.
    Contaminated,
    /// Context is cleared before each retry.
    CleanRestart,
    /// Independent attempts; same probabilities as `CleanRestart`.
    Iid,
}

impl RetryPolicy {
    /// Probability of success within `k` attempts under this policy.
    pub fn success(self, rates: &DerivedRates, k: u64) -> Result<f64> {
        match self {
            RetryPolicy::Contaminated => success_within(rates, k),
            RetryPolicy::CleanRestart => success_clean(rates.p0(), k),
            RetryPolicy::Iid => success_iid(rates.p0(), k),
        }
    }

    /// Whether a failed attempt elevates the error rate of the next one.
    pub fn contaminates(self) -> bool {
        matches!(self, RetryPolicy::Contaminated)
    }
}

/// `(1 - p)^n` via `exp(n * ln_1p(-p))`.
pub(crate) fn pow_complement(p: f64, n: u64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    (n as f64 * (-p).ln_1p()).exp()
}

/// Computes `p_i = (1 - eps_i)^T` and the log-rates for a model.
pub fn derive_rates(params: &ModelParams) -> Result<DerivedRates> {
    let (eps0, eps1) = (params.eps0, params.eps1);
    if !(eps0 > 0.0 && eps0 <= eps1 && eps1 < 1.0) {
        return Err(Error::domain(format!(
            "rates require 0 < eps0 <= eps1 < 1, got eps0={eps0}, eps1={eps1}"
        )));
    }
    let depth = f64::from(params.depth);
    let a_step = -(-eps0).ln_1p();
    let b_step = -(-eps1).ln_1p();
    let ln_p0 = -depth * a_step;
    let ln_p1 = -depth * b_step;
    let p0 = ln_p0.exp();
    let p1 = ln_p1.exp();
    Ok(DerivedRates {
        p0,
        p1,
        ln_p1,
        a_att: -(-p0).ln_1p(),
        b_att: -(-p1).ln_1p(),
        a_step: Some(a_step),
        b_step: Some(b_step),
    })
}

fn check_attempts(k: u64) -> Result<()> {
    if k == 0 {
        return Err(Error::domain("attempt count K must be at least 1"));
    }
    Ok(())
}

fn check_open_prob(name: &str, p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("{name} must lie in (0,1), got {p}")));
    }
    Ok(())
}

/// Probability that all of the first `k` contaminated-restart attempts fail:
/// `(1 - p0)(1 - p1)^(k-1)`.
pub fn failure_within(rates: &DerivedRates, k: u64) -> Result<f64> {
    check_attempts(k)?;
    Ok((1.0 - rates.p0) * pow_complement(rates.p1, k - 1))
}

/// Probability of at least one success within `k` contaminated-restart
/// attempts: `p0 + (1 - p0)[1 - (1 - p1)^(k-1)]`.
///
/// When `p1` underflowed to zero this is `p0` for every `k`.
pub fn success_within(rates: &DerivedRates, k: u64) -> Result<f64> {
    let fail = failure_within(rates, k)?;
    if k == 1 {
        return Ok(rates.p0);
    }
    Ok((1.0 - fail).clamp(0.0, 1.0))
}

/// `(1 - p0)^k`, the all-fail probability of `k` independent attempts.
pub fn failure_iid(p0: f64, k: u64) -> Result<f64> {
    check_open_prob("p0", p0)?;
    check_attempts(k)?;
    Ok(pow_complement(p0, k))
}

/// `1 - (1 - p0)^k`.
pub fn success_iid(p0: f64, k: u64) -> Result<f64> {
    check_open_prob("p0", p0)?;
    check_attempts(k)?;
    if k == 1 {
        return Ok(p0);
    }
    Ok((-(k as f64 * (-p0).ln_1p()).exp_m1()).clamp(0.0, 1.0))
}

/// Success within `k` attempts when context is cleared before every retry.
/// Numerically identical to [`success_iid`].
pub fn success_clean(p0: f64, k: u64) -> Result<f64> {
    success_iid(p0, k)
}

/// All-fail probability under clean restarts; identical to [`failure_iid`].
pub fn failure_clean(p0: f64, k: u64) -> Result<f64> {
    failure_iid(p0, k)
}

/// Brute-force success probability by summing over all `2^k` outcome
/// sequences of the contamination chain.
///
/// Every sequence `(S_1..S_k)` is weighted by the chain's transition rule
/// (`Z_1 = 0`, `Z_{j+1} = !S_j`), and the weights of sequences with at least
/// one success are accumulated with Neumaier compensation. This does not use
/// the closed form and serves as its test oracle.
pub fn enumeration_oracle(rates: &DerivedRates, k: u64) -> Result<f64> {
    check_attempts(k)?;
    if k > ORACLE_MAX_ATTEMPTS {
        return Err(Error::domain(format!(
            "enumeration is limited to K <= {ORACLE_MAX_ATTEMPTS}, got {k}"
        )));
    }
    let (p0, p1) = (rates.p0, rates.p1);
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for mask in 1u64..(1u64 << k) {
        // bit j of mask is S_{j+1}
        let mut weight = 1.0;
        let mut contaminated = false;
        for j in 0..k {
            let p = if contaminated { p1 } else { p0 };
            let success = mask >> j & 1 == 1;
            weight *= if success { p } else { 1.0 - p };
            contaminated = !success;
        }
        let t = sum + weight;
        if sum.abs() >= weight.abs() {
            comp += (sum - t) + weight;
        } else {
            comp += (weight - t) + sum;
        }
        sum = t;
    }
    Ok(sum + comp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// `(num/den)^n` by exact integer arithmetic, rounded once or twice.
    fn exact_pow(num: u128, den: u128, n: u32) -> f64 {
        num.pow(n) as f64 / den.pow(n) as f64
    }

    #[test]
    fn derive_rates_verdent_parameters() {
        // the published step rates are rounded to three decimals, which moves p0 by ~0.003
        let r = ModelParams::new(0.034, 0.239, 8).unwrap().rates().unwrap();
        assert_abs_diff_eq!(r.p0(), 0.761, epsilon = 0.003);
        assert_abs_diff_eq!(r.p1(), 0.113, epsilon = 0.001);
    }

    #[test]
    fn derive_rates_single_symmetric_step() {
        let r = ModelParams::new(0.5, 0.5, 1).unwrap().rates().unwrap();
        assert_abs_diff_eq!(r.p0(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r.p1(), 0.5, epsilon = 1e-15);
        assert_eq!(r.a_att(), r.b_att());
    }

    #[test]
    fn derive_rates_matches_exact_rational_power() {
        let r = ModelParams::new(0.12, 0.24, 10).unwrap().rates().unwrap();
        let p0 = exact_pow(88, 100, 10);
        let p1 = exact_pow(76, 100, 10);
        assert!((r.p0() - p0).abs() / p0 < 1e-13, "{} vs {}", r.p0(), p0);
        assert!((r.p1() - p1).abs() / p1 < 1e-13, "{} vs {}", r.p1(), p1);
        // log-rate definitions
        assert_abs_diff_eq!(r.a_step().unwrap(), -(0.88_f64.ln()), epsilon = 1e-15);
        assert_abs_diff_eq!(r.b_step().unwrap(), -(0.76_f64.ln()), epsilon = 1e-15);
        assert_abs_diff_eq!(r.a_att(), -(1.0 - p0).ln(), epsilon = 1e-13);
        assert!(r.a_att() > r.b_att());
    }

    #[test]
    fn params_reject_invalid_ranges() {
        assert!(ModelParams::new(0.0, 0.1, 3).is_err());
        assert!(ModelParams::new(0.2, 0.1, 3).is_err());
        assert!(ModelParams::new(0.1, 1.0, 3).is_err());
        assert!(ModelParams::new(0.1, 0.2, 0).is_err());
        assert!(ModelParams::new(f64::NAN, 0.2, 1).is_err());
        let closed = ModelParams::new_closed(0.0, 1.0, 3).unwrap();
        assert!(matches!(closed.rates(), Err(Error::Domain(_))));
    }

    #[test]
    fn deep_pipeline_underflow_keeps_log_value() {
        let r = ModelParams::new(0.01, 0.999, 200).unwrap().rates().unwrap();
        assert_eq!(r.p1(), 0.0);
        assert!(r.p1_underflowed());
        assert_abs_diff_eq!(r.ln_p1(), 200.0 * 0.001_f64.ln(), epsilon = 1e-9);
        for k in [1, 2, 10, 1_000_000] {
            assert_eq!(success_within(&r, k).unwrap(), r.p0());
        }
    }

    #[test]
    fn success_within_published_fit() {
        let r = DerivedRates::from_attempt_probs(0.761, 0.113).unwrap();
        assert_abs_diff_eq!(success_within(&r, 3).unwrap(), 0.812, epsilon = 0.001);
        assert_eq!(success_within(&r, 1).unwrap(), 0.761);
    }

    #[test]
    fn success_within_frozen_value() {
        // 0.4 + 0.6 * 0.1 * (1 + 0.9 + 0.81 + 0.729)
        let r = DerivedRates::from_attempt_probs(0.4, 0.1).unwrap();
        assert_abs_diff_eq!(success_within(&r, 5).unwrap(), 0.60634, epsilon = 1e-14);
        assert_abs_diff_eq!(enumeration_oracle(&r, 5).unwrap(), 0.60634, epsilon = 1e-14);
    }

    #[test]
    fn iid_and_clean_values() {
        assert_abs_diff_eq!(success_iid(0.761, 3).unwrap(), 0.986, epsilon = 0.001);
        assert_abs_diff_eq!(success_iid(0.332, 5).unwrap(), 0.867, epsilon = 0.001);
        assert_eq!(success_iid(0.37, 1).unwrap(), 0.37);
        assert_abs_diff_eq!(success_clean(0.761, 3).unwrap(), 0.986, epsilon = 0.001);
        assert_eq!(success_clean(0.5, 2).unwrap(), 0.75);
        assert_eq!(success_clean(0.2, 1).unwrap(), 0.2);
    }

    #[test]
    fn zero_attempts_rejected() {
        let r = DerivedRates::from_attempt_probs(0.5, 0.2).unwrap();
        assert!(success_within(&r, 0).is_err());
        assert!(success_iid(0.5, 0).is_err());
        assert!(success_iid(0.0, 3).is_err());
        assert!(success_iid(1.0, 3).is_err());
        assert!(enumeration_oracle(&r, 0).is_err());
    }

    #[test]
    fn oracle_bounds_and_identities() {
        let r = DerivedRates::from_attempt_probs(0.761, 0.113).unwrap();
        let closed = success_within(&r, 3).unwrap();
        assert!((enumeration_oracle(&r, 3).unwrap() - closed).abs() <= 1e-12);
        assert_abs_diff_eq!(enumeration_oracle(&r, 1).unwrap(), 0.761, epsilon = 1e-15);
        assert!(matches!(enumeration_oracle(&r, 21), Err(Error::Domain(_))));
        let iid = DerivedRates::from_attempt_probs(0.3, 0.3).unwrap();
        for k in 1..=12 {
            let diff = enumeration_oracle(&iid, k).unwrap() - success_iid(0.3, k).unwrap();
            assert!(diff.abs() <= 1e-12);
        }
    }

    #[test]
    fn policy_dispatch() {
        let r = DerivedRates::from_attempt_probs(0.6, 0.2).unwrap();
        let clean = RetryPolicy::CleanRestart.success(&r, 4).unwrap();
        let iid = RetryPolicy::Iid.success(&r, 4).unwrap();
        let ccrm = RetryPolicy::Contaminated.success(&r, 4).unwrap();
        assert_eq!(clean, iid);
        assert!(clean > ccrm);
        assert!(RetryPolicy::Contaminated.contaminates());
        assert!(!RetryPolicy::Iid.contaminates());
    }

    #[test]
    fn attempt_prob_constructor_validates() {
        assert!(DerivedRates::from_attempt_probs(0.5, 0.6).is_err());
        assert!(DerivedRates::from_attempt_probs(1.0, 0.5).is_err());
        assert!(DerivedRates::from_attempt_probs(0.5, -0.1).is_err());
        let r = DerivedRates::from_attempt_probs(0.5, 0.0).unwrap();
        assert_eq!(r.b_att(), 0.0);
        assert!(r.a_step().is_none());
    }
}
