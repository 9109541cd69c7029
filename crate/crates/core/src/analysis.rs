//! Closed-form decision quantities on top of the model: attempt thresholds,
//! cascade overhead and its phase transition, budget allocation between
//! depth and retries, the two-point lower bound, and clean-restart gains.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{pow_complement, success_iid, success_within, DerivedRates, ModelParams};

/// Largest attempt count the threshold search will report. Beyond 2^53 the
/// ceiling can no longer be represented exactly in binary64.
pub const MAX_REPORTABLE_ATTEMPTS: f64 = 9_007_199_254_740_992.0;

/// Largest budget accepted by [`optimal_depth_exact`].
pub const MAX_EXACT_BUDGET: f64 = 1.0e6;

/// Failure tolerance `delta`: the target is success with probability `>= 1 - delta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityTarget {
    delta: f64,
}

impl ReliabilityTarget {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::domain(format!(
                "delta must lie in (0,1), got {delta}"
            )));
        }
        Ok(Self { delta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// Contaminated success above the critical level; overhead stays bounded.
    SubCritical,
    /// Contaminated success below the critical level; overhead diverges as `p1 -> 0`.
    SuperCritical,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverheadReport {
    pub k_ccrm: u64,
    pub k_iid: u64,
    /// `k_ccrm - k_iid`.
    pub delta_k: i64,
    /// `1 + ln(1 - p0) / b_att`.
    pub lower_bound_dk: f64,
    /// `a_att / b_att`, the large-`k` limit of `k_ccrm / k_iid`.
    pub asymptotic_ratio: f64,
    /// Critical contamination level, absent when one attempt already meets the target.
    pub critical_p1: Option<f64>,
    pub regime: Regime,
    /// `delta >= 1 - p0`: the first (clean) attempt alone meets the target.
    pub boundary: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetPlan {
    pub budget: f64,
    /// Continuous-relaxation depth from the closed form.
    pub t_star: f64,
    /// `budget / t_star`.
    pub k_star: f64,
    /// Integer depth maximising success with `K = floor(budget / T)`.
    pub t_exact: u64,
    pub k_exact: u64,
    pub p_success_exact: f64,
}

impl BudgetPlan {
    /// True when the closed-form depth is more than one step away from the
    /// exact integer optimum.
    pub fn disagrees(&self) -> bool {
        (self.t_star - self.t_exact as f64).abs() > 1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeCamBound {
    pub hellinger_sq: f64,
    pub k_ccrm: u64,
    /// `k_ccrm - 1 / (2 H^2)`; may be negative, in which case the bound is vacuous.
    pub k_lower: f64,
}

fn meets_ccrm(rates: &DerivedRates, k: u64, delta: f64) -> bool {
    // k >= 1 is guaranteed by the callers
    success_within(rates, k).is_ok_and(|p| p >= 1.0 - delta)
}

fn meets_iid(p0: f64, k: u64, delta: f64) -> bool {
    success_iid(p0, k).is_ok_and(|p| p >= 1.0 - delta)
}

/// Moves `k` to the smallest attempt count satisfying `meets`, starting from
/// the closed-form estimate.
fn settle(mut k: u64, meets: impl Fn(u64) -> bool) -> u64 {
    k = k.max(1);
    while k > 1 && meets(k - 1) {
        k -= 1;
    }
    while !meets(k) {
        k += 1;
    }
    k
}

/// Minimum number of contaminated-restart attempts reaching success
/// probability `1 - delta`: `1 + ceil(ln((1 - p0)/delta) / b_att)`, checked
/// against the success formula and corrected when rounding puts the ceiling
/// on the wrong side.
///
/// When `delta > 1 - p0` one attempt suffices and 1 is returned; exactly at
/// `delta == 1 - p0` the answer is 2.
pub fn attempts_required_ccrm(rates: &DerivedRates, target: &ReliabilityTarget) -> Result<u64> {
    let delta = target.delta();
    let q0 = 1.0 - rates.p0();
    if delta > q0 {
        return Ok(1);
    }
    if delta == q0 {
        return Ok(2);
    }
    if rates.p1() == 0.0 || rates.b_att() == 0.0 {
        return Err(Error::Unbounded(format!(
            "contaminated attempt success is zero (ln p1 = {}); no finite K reaches 1 - delta = {}",
            rates.ln_p1(),
            1.0 - delta
        )));
    }
    let estimate = 1.0 + ((q0 / delta).ln() / rates.b_att()).ceil();
    if !estimate.is_finite() || estimate > MAX_REPORTABLE_ATTEMPTS {
        return Err(Error::Unbounded(format!(
            "required attempts ({estimate:e}) exceed the representable range"
        )));
    }
    Ok(settle(estimate as u64, |k| meets_ccrm(rates, k, delta)))
}

/// Minimum number of independent attempts: `ceil(ln(1/delta) / a_att)`.
pub fn attempts_required_iid(p0: f64, target: &ReliabilityTarget) -> Result<u64> {
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(Error::domain(format!("p0 must lie in (0,1), got {p0}")));
    }
    let delta = target.delta();
    if delta >= 1.0 - p0 {
        return Ok(1);
    }
    let a = -(-p0).ln_1p();
    let estimate = ((1.0 / delta).ln() / a).ceil();
    if !estimate.is_finite() || estimate > MAX_REPORTABLE_ATTEMPTS {
        return Err(Error::Unbounded(format!(
            "required attempts ({estimate:e}) exceed the representable range"
        )));
    }
    Ok(settle(estimate as u64, |k| meets_iid(p0, k, delta)))
}

/// Critical contamination level `p1* = (delta / (1 - p0))^(1 / (K_iid - 1))`.
///
/// Below `p1*` the overhead of contamination over independent retries grows
/// without bound as `p1 -> 0`; above it the overhead stays bounded.
pub fn critical_contamination(p0: f64, target: &ReliabilityTarget) -> Result<f64> {
    let k_iid = attempts_required_iid(p0, target)?;
    if k_iid == 1 {
        return Err(Error::Undefined(format!(
            "a single attempt meets delta = {} at p0 = {p0}, so p1* has a zero exponent denominator",
            target.delta()
        )));
    }
    let base = target.delta() / (1.0 - p0);
    Ok(base.powf(1.0 / (k_iid - 1) as f64))
}

/// Extra attempts contamination costs relative to independent retries.
pub fn cascade_overhead(
    rates: &DerivedRates,
    target: &ReliabilityTarget,
) -> Result<OverheadReport> {
    let k_ccrm = attempts_required_ccrm(rates, target)?;
    let k_iid = attempts_required_iid(rates.p0(), target)?;
    let critical_p1 = match critical_contamination(rates.p0(), target) {
        Ok(p) => Some(p),
        Err(Error::Undefined(_)) => None,
        Err(e) => return Err(e),
    };
    let regime = match critical_p1 {
        Some(p_star) if rates.p1() < p_star => Regime::SuperCritical,
        _ => Regime::SubCritical,
    };
    Ok(OverheadReport {
        k_ccrm,
        k_iid,
        delta_k: k_ccrm as i64 - k_iid as i64,
        lower_bound_dk: 1.0 + (-rates.p0()).ln_1p() / rates.b_att(),
        asymptotic_ratio: rates.a_att() / rates.b_att(),
        critical_p1,
        regime,
        boundary: target.delta() >= 1.0 - rates.p0(),
    })
}

/// Cascade ratio `r*` at which contamination costs `m` times the independent
/// attempt count, i.e. the solution of `(1 - eps0 r*)^T = 1 - (1 - p0)^(1/(m+1))`:
///
/// `r* = (1 - (1 - (1 - p0)^(1/(m+1)))^(1/T)) / eps0`.
pub fn critical_cascade_ratio(params: &ModelParams, m: f64) -> Result<f64> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::domain(format!(
            "overhead multiple M must be positive, got {m}"
        )));
    }
    let rates = params.rates()?;
    let eps0 = params.eps0();
    let depth = f64::from(params.depth());
    // (1 - p0)^(1/(m+1)) in the log domain
    let tail = ((-rates.p0()).ln_1p() / (m + 1.0)).exp();
    let rhs = 1.0 - tail;
    if !(rhs > 0.0 && rhs < 1.0) {
        return Err(Error::domain(format!(
            "right-hand side {rhs} must lie in (0,1)"
        )));
    }
    let ratio = -(rhs.ln() / depth).exp_m1() / eps0;
    // r* -> 1 as m -> 0; allow the last few ulps of that limit
    if ratio < 1.0 - 1e-12 {
        return Err(Error::domain(format!(
            "critical ratio {ratio} is below 1 (no cascade)"
        )));
    }
    if eps0 * ratio >= 1.0 {
        return Err(Error::domain(format!(
            "critical ratio {ratio} implies eps1 = {} >= 1",
            eps0 * ratio
        )));
    }
    Ok(ratio)
}

fn check_step_rates(eps0: f64, eps1: f64) -> Result<(f64, f64)> {
    if !(eps0 > 0.0 && eps0 <= eps1 && eps1 < 1.0) {
        return Err(Error::domain(format!(
            "rates require 0 < eps0 <= eps1 < 1, got eps0={eps0}, eps1={eps1}"
        )));
    }
    Ok((-(-eps0).ln_1p(), -(-eps1).ln_1p()))
}

/// Continuous-relaxation optimum for a budget of `budget` tool calls:
/// `T* = sqrt(B * ln(1/(1-eps1)) / ln(1/(1-eps0)))` and `K* = B / T*`.
pub fn optimal_depth_closed(eps0: f64, eps1: f64, budget: f64) -> Result<(f64, f64)> {
    let (a_step, b_step) = check_step_rates(eps0, eps1)?;
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(Error::domain(format!(
            "budget must be positive, got {budget}"
        )));
    }
    let t_star = (budget * (b_step / a_step)).sqrt();
    let k_star = budget / t_star;
    Ok((t_star, k_star))
}

/// Exhaustive search over integer depths `T in [1, floor(B)]` with
/// `K = floor(B / T)`, maximising the contaminated success probability.
/// Ties go to the smaller depth. The closed-form relaxation is reported
/// alongside.
pub fn optimal_depth_exact(eps0: f64, eps1: f64, budget: f64) -> Result<BudgetPlan> {
    check_step_rates(eps0, eps1)?;
    if !(1.0..=MAX_EXACT_BUDGET).contains(&budget) {
        return Err(Error::domain(format!(
            "budget must lie in [1, {MAX_EXACT_BUDGET}], got {budget}"
        )));
    }
    let (t_star, k_star) = optimal_depth_closed(eps0, eps1, budget)?;
    let max_depth = budget.floor() as u64;
    let mut best: Option<(u64, u64, f64)> = None;
    for depth in 1..=max_depth {
        let k = (budget / depth as f64).floor() as u64;
        let rates = ModelParams::new(eps0, eps1, depth as u32)?.rates()?;
        let p = success_within(&rates, k)?;
        if best.is_none_or(|(_, _, b)| p > b) {
            best = Some((depth, k, p));
        }
    }
    let (t_exact, k_exact, p_success_exact) = best.expect("budget >= 1 gives at least one depth");
    Ok(BudgetPlan {
        budget,
        t_star,
        k_star,
        t_exact,
        k_exact,
        p_success_exact,
    })
}

/// `H^2(p0, p1) = (sqrt p0 - sqrt p1)^2 + (sqrt(1-p0) - sqrt(1-p1))^2`,
/// without the conventional factor 1/2, so it ranges over `[0, 2]`.
pub fn hellinger_sq(p0: f64, p1: f64) -> Result<f64> {
    for (name, p) in [("p0", p0), ("p1", p1)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(format!("{name} must lie in [0,1], got {p}")));
        }
    }
    let d_hit = p0.sqrt() - p1.sqrt();
    let d_miss = (1.0 - p0).sqrt() - (1.0 - p1).sqrt();
    Ok(d_hit * d_hit + d_miss * d_miss)
}

/// Two-point lower bound: any retry policy reaching `1 - delta` needs at
/// least `K_ccrm(delta) - 1 / (2 H^2(p0, p1))` attempts. Requires
/// `delta in (0, 1/4)` and `p0 != p1`.
pub fn lecam_lower_bound(rates: &DerivedRates, target: &ReliabilityTarget) -> Result<LeCamBound> {
    let delta = target.delta();
    if !(delta > 0.0 && delta < 0.25) {
        return Err(Error::domain(format!(
            "delta must lie in (0, 1/4), got {delta}"
        )));
    }
    let h2 = hellinger_sq(rates.p0(), rates.p1())?;
    if h2 == 0.0 {
        return Err(Error::Degenerate(
            "p0 == p1: the contaminated and independent models coincide".into(),
        ));
    }
    let k_ccrm = attempts_required_ccrm(rates, target)?;
    Ok(LeCamBound {
        hellinger_sq: h2,
        k_ccrm,
        k_lower: k_ccrm as f64 - 1.0 / (2.0 * h2),
    })
}

/// Clean-restart success over contaminated success at `k` attempts:
/// `[1 - (1-p0)^k] / [1 - (1-p0)(1-p1)^(k-1)]`.
pub fn improvement_ratio(rates: &DerivedRates, k: u64) -> Result<f64> {
    if k == 0 {
        return Err(Error::domain("attempt count K must be at least 1"));
    }
    if k == 1 {
        // both policies run the same clean first attempt
        return Ok(1.0);
    }
    let q0 = 1.0 - rates.p0();
    let clean = 1.0 - pow_complement(rates.p0(), k);
    let ccrm = 1.0 - q0 * pow_complement(rates.p1(), k - 1);
    Ok(clean / ccrm)
}

/// Approximate extra attempts contamination needs over clean restarts:
/// `k_clean * (a_att / b_att - 1)`. This is a first-order estimate, not an
/// exact attempt count.
pub fn savings_approx(rates: &DerivedRates, k_clean: u64) -> Result<f64> {
    if k_clean == 0 {
        return Err(Error::domain("k_clean must be at least 1"));
    }
    if rates.b_att() == 0.0 {
        return Err(Error::Unbounded(
            "p1 is zero; contaminated retries never succeed".into(),
        ));
    }
    Ok(k_clean as f64 * (rates.a_att() / rates.b_att() - 1.0))
}
