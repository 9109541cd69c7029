//! Seeded Monte Carlo simulation of the restart chain.
//!
//! Each trial draws from its own ChaCha8 stream: the generator is seeded
//! from the master seed and the stream index is the trial index. A trial's
//! outcome therefore depends only on `(master_seed, trial_index)`, and any
//! number of rayon workers produce identical estimates and tables.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{attempts_required_ccrm, attempts_required_iid, ReliabilityTarget};
use crate::error::{Error, Result};
use crate::model::{pow_complement, ModelParams, RetryPolicy};

/// Monte Carlo sample count used by the synthetic validation protocol.
pub const DEFAULT_TRIALS: u64 = 30_000;

/// Default attempt cap for the empirical threshold scan.
pub const DEFAULT_SCAN_CAP: u64 = 100_000;

const Z95: f64 = 1.959_963_984_540_054;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Granularity {
    /// One Bernoulli draw per attempt with the attempt success probability.
    #[default]
    AttemptLevel,
    /// One draw per tool call; an attempt stops at its first failing step.
    StepLevel,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: ModelParams,
    pub policy: RetryPolicy,
    pub max_attempts: u64,
    pub trials: u64,
    pub master_seed: u64,
    pub granularity: Granularity,
}

impl SimConfig {
    pub fn new(
        params: ModelParams,
        policy: RetryPolicy,
        max_attempts: u64,
        trials: u64,
        master_seed: u64,
    ) -> Result<Self> {
        let cfg = Self {
            params,
            policy,
            max_attempts,
            trials,
            master_seed,
            granularity: Granularity::AttemptLevel,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_granularity(mut self, granularity: Granularity) -> Self {
        self.granularity = granularity;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::domain("trial count must be at least 1"));
        }
        if self.max_attempts == 0 {
            return Err(Error::domain("max_attempts must be at least 1"));
        }
        Ok(())
    }

    fn attempt_probs(&self) -> (f64, f64) {
        let depth = u64::from(self.params.depth());
        (
            pow_complement(self.params.eps0(), depth),
            pow_complement(self.params.eps1(), depth),
        )
    }
}

/// Everything that happened in one simulated task.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    /// `S_k` for each attempt that ran.
    pub outcomes: Vec<bool>,
    /// `Z_k` for each attempt that ran.
    pub contamination: Vec<bool>,
    /// 1-based index of the first successful attempt.
    pub succeeded_at: Option<u64>,
    /// Tool calls actually executed (partial attempts count their executed steps).
    pub steps_consumed: u64,
    /// Tool calls charged when every attempt is billed its full depth.
    pub steps_charged: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    pub p_hat: f64,
    pub stderr: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    pub trials: u64,
}

impl SimEstimate {
    /// Binomial estimate with a normal-approximation 95% interval.
    pub fn from_counts(successes: u64, trials: u64) -> Self {
        assert!(trials > 0 && successes <= trials);
        let n = trials as f64;
        let p_hat = successes as f64 / n;
        let stderr = (p_hat * (1.0 - p_hat) / n).sqrt();
        Self {
            p_hat,
            stderr,
            ci95_low: (p_hat - Z95 * stderr).max(0.0),
            ci95_high: (p_hat + Z95 * stderr).min(1.0),
            trials,
        }
    }
}

fn trial_rng(master_seed: u64, trial_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial_index);
    rng
}

/// SplitMix64 finaliser; decorrelates per-cell seeds in sweeps.
pub fn derive_seed(master_seed: u64, cell: u64) -> u64 {
    let mut z = master_seed ^ cell.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Attempt {
    success: bool,
    steps: u64,
}

fn run_attempt(
    rng: &mut ChaCha8Rng,
    cfg: &SimConfig,
    contaminated: bool,
    probs: (f64, f64),
) -> Attempt {
    let depth = u64::from(cfg.params.depth());
    match cfg.granularity {
        Granularity::AttemptLevel => {
            let p = if contaminated { probs.1 } else { probs.0 };
            Attempt {
                success: rng.random::<f64>() < p,
                steps: depth,
            }
        }
        Granularity::StepLevel => {
            let eps = if contaminated {
                cfg.params.eps1()
            } else {
                cfg.params.eps0()
            };
            for step in 1..=depth {
                if rng.random::<f64>() < eps {
                    return Attempt {
                        success: false,
                        steps: step,
                    };
                }
            }
            Attempt {
                success: true,
                steps: depth,
            }
        }
    }
}

/// Simulates one task: attempts run until the first success or until
/// `max_attempts` are spent.
pub fn run_trial(config: &SimConfig, trial_index: u64) -> Result<TrialRecord> {
    config.validate()?;
    if trial_index >= config.trials {
        return Err(Error::domain(format!(
            "trial index {trial_index} out of range for {} trials",
            config.trials
        )));
    }
    let probs = config.attempt_probs();
    let mut rng = trial_rng(config.master_seed, trial_index);
    let mut record = TrialRecord {
        outcomes: Vec::new(),
        contamination: Vec::new(),
        succeeded_at: None,
        steps_consumed: 0,
        steps_charged: 0,
    };
    let mut contaminated = false;
    for k in 1..=config.max_attempts {
        let attempt = run_attempt(&mut rng, config, contaminated, probs);
        record.outcomes.push(attempt.success);
        record.contamination.push(contaminated);
        record.steps_consumed += attempt.steps;
        record.steps_charged += u64::from(config.params.depth());
        if attempt.success {
            record.succeeded_at = Some(k);
            break;
        }
        contaminated = config.policy.contaminates();
    }
    Ok(record)
}

/// Same draws as [`run_trial`] without building the record.
fn first_success(config: &SimConfig, probs: (f64, f64), trial_index: u64) -> Option<u64> {
    let mut rng = trial_rng(config.master_seed, trial_index);
    let mut contaminated = false;
    for k in 1..=config.max_attempts {
        if run_attempt(&mut rng, config, contaminated, probs).success {
            return Some(k);
        }
        contaminated = config.policy.contaminates();
    }
    None
}

/// First-success index for threshold scans, capped at `cap`. At attempt
/// granularity the run of failed retries is drawn in one geometric sample,
/// which keeps long contaminated tails cheap; step granularity is simulated
/// call by call.
fn pooled_first_success(
    config: &SimConfig,
    probs: (f64, f64),
    trial_index: u64,
    cap: u64,
) -> Option<u64> {
    match config.granularity {
        Granularity::StepLevel => {
            let capped = SimConfig {
                max_attempts: cap,
                ..*config
            };
            first_success(&capped, probs, trial_index)
        }
        Granularity::AttemptLevel => {
            let mut rng = trial_rng(config.master_seed, trial_index);
            if rng.random::<f64>() < probs.0 {
                return Some(1);
            }
            let retry_p = if config.policy.contaminates() {
                probs.1
            } else {
                probs.0
            };
            if retry_p <= 0.0 {
                return None;
            }
            let failures = Geometric::new(retry_p)
                .expect("retry probability lies in (0,1]")
                .sample(&mut rng);
            let k = failures.saturating_add(2);
            (k <= cap).then_some(k)
        }
    }
}

/// First-success indices of every trial, in trial order.
fn first_success_pool(config: &SimConfig) -> Vec<Option<u64>> {
    let probs = config.attempt_probs();
    (0..config.trials)
        .into_par_iter()
        .map(|i| first_success(config, probs, i))
        .collect()
}

/// Success-within-K estimate for `K = max_attempts`.
pub fn estimate_success(config: &SimConfig) -> Result<SimEstimate> {
    config.validate()?;
    let successes = first_success_pool(config).iter().flatten().count() as u64;
    Ok(SimEstimate::from_counts(successes, config.trials))
}

/// Estimates for every `K` in `1..=max_attempts` from one pool of trials.
pub fn success_curve(config: &SimConfig) -> Result<Vec<SimEstimate>> {
    config.validate()?;
    let mut hist = vec![0u64; config.max_attempts as usize + 1];
    for k in first_success_pool(config).into_iter().flatten() {
        hist[k as usize] += 1;
    }
    let mut cumulative = 0;
    Ok(hist[1..]
        .iter()
        .map(|&c| {
            cumulative += c;
            SimEstimate::from_counts(cumulative, config.trials)
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeRow {
    pub ratio: f64,
    pub eps1: f64,
    pub k: u64,
    pub p_formula: f64,
    pub p_hat: f64,
    pub stderr: f64,
    pub abs_error: f64,
}

/// Formula against simulation for each cascade ratio `r` (with
/// `eps1 = r * eps0`) and every `K` up to `base.max_attempts`.
pub fn sweep_cascade(base: &SimConfig, ratios: &[f64]) -> Result<Vec<CascadeRow>> {
    base.validate()?;
    let eps0 = base.params.eps0();
    let depth = base.params.depth();
    let mut rows = Vec::with_capacity(ratios.len() * base.max_attempts as usize);
    for (cell, &ratio) in ratios.iter().enumerate() {
        let eps1 = ratio * eps0;
        if !(eps1 < 1.0) {
            return Err(Error::domain(format!(
                "ratio {ratio} gives eps1 = {eps1} >= 1"
            )));
        }
        let params = ModelParams::new(eps0, eps1, depth)?;
        let rates = params.rates()?;
        let cfg = SimConfig {
            params,
            master_seed: derive_seed(base.master_seed, cell as u64),
            ..*base
        };
        for (i, est) in success_curve(&cfg)?.into_iter().enumerate() {
            let k = i as u64 + 1;
            let p_formula = base.policy.success(&rates, k)?;
            rows.push(CascadeRow {
                ratio,
                eps1,
                k,
                p_formula,
                p_hat: est.p_hat,
                stderr: est.stderr,
                abs_error: (est.p_hat - p_formula).abs(),
            });
        }
    }
    Ok(rows)
}

/// Grid for the overhead/phase-transition sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverheadGrid {
    pub eps0: f64,
    pub ratios: Vec<f64>,
    pub depths: Vec<u32>,
    pub trials: u64,
    pub master_seed: u64,
    /// Largest attempt count the empirical scan will examine.
    pub scan_cap: u64,
    pub granularity: Granularity,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverheadRow {
    pub ratio: f64,
    pub depth: u32,
    pub k_iid: u64,
    /// `None` when the analytic threshold is unbounded.
    pub k_ccrm_analytic: Option<u64>,
    /// `None` when the empirical scan exceeded the cap.
    pub k_ccrm_empirical: Option<u64>,
}

impl OverheadRow {
    pub fn exceeded_cap(&self) -> bool {
        self.k_ccrm_empirical.is_none()
    }
}

/// Smallest `K <= cap` whose pooled success fraction reaches `1 - delta`.
fn empirical_threshold(mut hits: Vec<u64>, trials: u64, delta: f64) -> Option<u64> {
    hits.sort_unstable();
    let n = trials as f64;
    let mut i = 0;
    while i < hits.len() {
        let k = hits[i];
        while i < hits.len() && hits[i] == k {
            i += 1;
        }
        if i as f64 / n >= 1.0 - delta {
            return Some(k);
        }
    }
    None
}

/// Analytic and empirical contaminated thresholds over a (depth, ratio) grid.
/// Rows are ordered by depth, then ratio, as given.
pub fn sweep_overhead(grid: &OverheadGrid, target: &ReliabilityTarget) -> Result<Vec<OverheadRow>> {
    if grid.trials == 0 || grid.scan_cap == 0 {
        return Err(Error::domain("trials and scan_cap must be at least 1"));
    }
    let mut rows = Vec::with_capacity(grid.depths.len() * grid.ratios.len());
    let mut cell = 0u64;
    for &depth in &grid.depths {
        for &ratio in &grid.ratios {
            let eps1 = ratio * grid.eps0;
            if !(eps1 < 1.0) {
                return Err(Error::domain(format!(
                    "ratio {ratio} gives eps1 = {eps1} >= 1"
                )));
            }
            let params = ModelParams::new(grid.eps0, eps1, depth)?;
            let rates = params.rates()?;
            let k_iid = attempts_required_iid(rates.p0(), target)?;
            let k_ccrm_analytic = match attempts_required_ccrm(&rates, target) {
                Ok(k) => Some(k),
                Err(Error::Unbounded(_)) => None,
                Err(e) => return Err(e),
            };
            let cfg = SimConfig {
                params,
                policy: RetryPolicy::Contaminated,
                max_attempts: grid.scan_cap,
                trials: grid.trials,
                master_seed: derive_seed(grid.master_seed, cell),
                granularity: grid.granularity,
            };
            let probs = cfg.attempt_probs();
            let hits: Vec<u64> = (0..cfg.trials)
                .into_par_iter()
                .filter_map(|i| pooled_first_success(&cfg, probs, i, grid.scan_cap))
                .collect();
            rows.push(OverheadRow {
                ratio,
                depth,
                k_iid,
                k_ccrm_analytic,
                k_ccrm_empirical: empirical_threshold(hits, grid.trials, target.delta()),
            });
            cell += 1;
        }
    }
    Ok(rows)
}

/// Parameters for the depth-versus-retries sweep under a fixed budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthSweep {
    pub eps0: f64,
    pub eps1: f64,
    pub budget: f64,
    pub depths: Vec<u32>,
    pub trials: u64,
    pub master_seed: u64,
    pub granularity: Granularity,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthRow {
    pub depth: u32,
    pub k: u64,
    pub p_formula: f64,
    pub p_hat: f64,
    pub stderr: f64,
}

/// Formula and simulated success for each depth with `K = floor(B / T)`.
pub fn sweep_depth(spec: &DepthSweep) -> Result<Vec<DepthRow>> {
    if !(spec.budget >= 1.0 && spec.budget.is_finite()) {
        return Err(Error::domain(format!(
            "budget must be at least 1, got {}",
            spec.budget
        )));
    }
    let max_depth = spec.budget.floor();
    let mut rows = Vec::with_capacity(spec.depths.len());
    for (cell, &depth) in spec.depths.iter().enumerate() {
        if depth == 0 || f64::from(depth) > max_depth {
            return Err(Error::domain(format!(
                "depth {depth} outside [1, {max_depth}]"
            )));
        }
        let k = (spec.budget / f64::from(depth)).floor() as u64;
        let params = ModelParams::new(spec.eps0, spec.eps1, depth)?;
        let p_formula = crate::model::success_within(&params.rates()?, k)?;
        let cfg = SimConfig::new(
            params,
            RetryPolicy::Contaminated,
            k,
            spec.trials,
            derive_seed(spec.master_seed, cell as u64),
        )?
        .with_granularity(spec.granularity);
        let est = estimate_success(&cfg)?;
        rows.push(DepthRow {
            depth,
            k,
            p_formula,
            p_hat: est.p_hat,
            stderr: est.stderr,
        });
    }
    Ok(rows)
}

fn argmax_by(rows: &[DepthRow], value: impl Fn(&DepthRow) -> f64) -> Option<u32> {
    let mut best: Option<(u32, f64)> = None;
    for row in rows {
        let v = value(row);
        let better = match best {
            None => true,
            Some((d, b)) => v > b || (v == b && row.depth < d),
        };
        if better {
            best = Some((row.depth, v));
        }
    }
    best.map(|(d, _)| d)
}

/// Depth with the highest formula value; ties go to the smaller depth.
pub fn formula_argmax(rows: &[DepthRow]) -> Option<u32> {
    argmax_by(rows, |r| r.p_formula)
}

/// Depth with the highest simulated success ("simulated optimum").
pub fn simulated_argmax(rows: &[DepthRow]) -> Option<u32> {
    argmax_by(rows, |r| r.p_hat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{success_clean, success_within};

    fn cfg(eps0: f64, eps1: f64, t: u32, k: u64, n: u64) -> SimConfig {
        SimConfig::new(
            ModelParams::new_closed(eps0, eps1, t).unwrap(),
            RetryPolicy::Contaminated,
            k,
            n,
            7,
        )
        .unwrap()
    }

    #[test]
    fn zero_base_error_always_succeeds_first() {
        let c = cfg(0.0, 0.5, 5, 4, 200);
        for i in 0..200 {
            let r = run_trial(&c, i).unwrap();
            assert_eq!(r.succeeded_at, Some(1));
            assert_eq!(r.outcomes, vec![true]);
        }
        let step = c.with_granularity(Granularity::StepLevel);
        assert_eq!(estimate_success(&step).unwrap().p_hat, 1.0);
    }

    #[test]
    fn certain_contaminated_failure() {
        let c = cfg(0.3, 1.0, 3, 6, 2_000);
        for i in 0..2_000 {
            let r = run_trial(&c, i).unwrap();
            if r.outcomes[0] {
                assert_eq!(r.succeeded_at, Some(1));
            } else {
                assert_eq!(r.succeeded_at, None);
                assert_eq!(r.outcomes.len(), 6);
            }
        }
    }

    #[test]
    fn repeated_runs_are_identical() {
        let c = cfg(0.12, 0.36, 10, 5, 100).with_granularity(Granularity::StepLevel);
        for i in 0..100 {
            assert_eq!(run_trial(&c, i).unwrap(), run_trial(&c, i).unwrap());
        }
        assert!(run_trial(&c, 100).is_err());
    }

    #[test]
    fn record_invariants() {
        for policy in [RetryPolicy::Contaminated, RetryPolicy::CleanRestart] {
            for gran in [Granularity::AttemptLevel, Granularity::StepLevel] {
                let mut c = cfg(0.2, 0.5, 4, 6, 500).with_granularity(gran);
                c.policy = policy;
                let probs = c.attempt_probs();
                for i in 0..500 {
                    let r = run_trial(&c, i).unwrap();
                    assert!(!r.contamination[0]);
                    assert!(r.outcomes.len() as u64 <= c.max_attempts);
                    for k in 1..r.outcomes.len() {
                        let expect = policy.contaminates() && !r.outcomes[k - 1];
                        assert_eq!(r.contamination[k], expect);
                    }
                    assert_eq!(
                        r.succeeded_at,
                        r.outcomes.iter().position(|&s| s).map(|p| p as u64 + 1)
                    );
                    assert_eq!(first_success(&c, probs, i), r.succeeded_at);
                    assert!(r.steps_consumed <= r.steps_charged);
                    if gran == Granularity::AttemptLevel {
                        assert_eq!(r.steps_consumed, r.steps_charged);
                    }
                }
            }
        }
    }

    #[test]
    fn single_trial_estimate_is_binary() {
        let est = estimate_success(&cfg(0.2, 0.4, 3, 2, 1)).unwrap();
        assert!(est.p_hat == 0.0 || est.p_hat == 1.0);
    }

    #[test]
    fn estimate_bounds() {
        for (s, n) in [(0, 10), (10, 10), (3, 7), (15_000, 30_000)] {
            let e = SimEstimate::from_counts(s, n);
            assert!(e.ci95_low <= e.p_hat && e.p_hat <= e.ci95_high);
            assert!(e.stderr <= 0.5 / (n as f64).sqrt() + 1e-15);
            assert!((0.0..=1.0).contains(&e.ci95_low) && (0.0..=1.0).contains(&e.ci95_high));
        }
    }

    #[test]
    fn curve_matches_formula() {
        let c = cfg(0.12, 0.36, 10, 5, 30_000);
        let rates = c.params.rates().unwrap();
        let curve = success_curve(&c).unwrap();
        assert_eq!(curve.len(), 5);
        for (i, est) in curve.iter().enumerate() {
            let p = success_within(&rates, i as u64 + 1).unwrap();
            assert!(
                (est.p_hat - p).abs() <= 0.01,
                "K={} {} vs {}",
                i + 1,
                est.p_hat,
                p
            );
        }
        assert_eq!(curve[4], estimate_success(&c).unwrap());
    }

    #[test]
    fn clean_policy_matches_clean_formula() {
        let mut c = cfg(0.12, 0.36, 10, 5, 30_000);
        c.policy = RetryPolicy::CleanRestart;
        let p0 = c.params.rates().unwrap().p0();
        let est = estimate_success(&c).unwrap();
        assert!((est.p_hat - success_clean(p0, 5).unwrap()).abs() <= 0.01);
    }

    #[test]
    fn empirical_threshold_scan() {
        // 10 trials: successes at 1,1,2,3,3,3,5 and three capped
        let hits = vec![3, 1, 5, 3, 2, 1, 3];
        assert_eq!(empirical_threshold(hits.clone(), 10, 0.5), Some(3));
        assert_eq!(empirical_threshold(hits.clone(), 10, 0.3), Some(5));
        assert_eq!(empirical_threshold(hits, 10, 0.2), None);
    }

    #[test]
    fn sweeps_reject_bad_grids() {
        let base = cfg(0.12, 0.12, 10, 3, 10);
        assert!(sweep_cascade(&base, &[9.0]).is_err());
        assert!(sweep_cascade(&base, &[0.5]).is_err());
        let spec = DepthSweep {
            eps0: 0.1,
            eps1: 0.2,
            budget: 10.0,
            depths: vec![11],
            trials: 10,
            master_seed: 1,
            granularity: Granularity::AttemptLevel,
        };
        assert!(sweep_depth(&spec).is_err());
    }

    #[test]
    fn seeds_differ_per_cell() {
        let seeds: Vec<u64> = (0..100).map(|c| derive_seed(20260101, c)).collect();
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), seeds.len());
    }
}
