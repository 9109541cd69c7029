//! One function per subcommand; each returns its output table.

use std::path::Path;

use ccrm_core::analysis::{
    cascade_overhead, improvement_ratio, lecam_lower_bound, optimal_depth_exact, Regime,
    ReliabilityTarget,
};
use ccrm_core::calibration::{self, assess, PassAtKObservation};
use ccrm_core::model::{success_clean, success_within, ModelParams, RetryPolicy};
use ccrm_core::simulator::{
    formula_argmax, simulated_argmax, sweep_cascade, sweep_depth, sweep_overhead, DepthSweep,
    Granularity, OverheadGrid, SimConfig,
};

use crate::table::{Cell, Table};
use crate::{
    AnalyzeArgs, CliError, Experiment, GranularityArg, LowerboundArgs, OptimizeArgs, PolicyArg,
    SimulateArgs,
};

pub const ANALYZE_K_COLUMNS: &[&str] = &[
    "eps0",
    "eps1",
    "T",
    "p0",
    "p1",
    "K",
    "success_within",
    "success_clean",
    "improvement_ratio",
];

pub const ANALYZE_DELTA_COLUMNS: &[&str] = &[
    "eps0",
    "eps1",
    "T",
    "p0",
    "p1",
    "delta",
    "k_ccrm",
    "k_iid",
    "delta_k",
    "lower_bound_dk",
    "asymptotic_ratio",
    "critical_p1",
    "regime",
];

pub const OPTIMIZE_COLUMNS: &[&str] = &[
    "eps0",
    "eps1",
    "B",
    "t_star",
    "k_star",
    "t_exact",
    "k_exact",
    "p_success_exact",
    "disagree",
];

pub const LOWERBOUND_COLUMNS: &[&str] = &[
    "eps0",
    "eps1",
    "T",
    "delta",
    "p0",
    "p1",
    "hellinger_sq",
    "k_ccrm",
    "k_lower",
];

pub const CASCADE_COLUMNS: &[&str] = &[
    "ratio",
    "eps1",
    "K",
    "p_formula",
    "p_hat",
    "stderr",
    "abs_error",
];

pub const OVERHEAD_COLUMNS: &[&str] = &[
    "ratio",
    "T",
    "k_iid",
    "k_ccrm_analytic",
    "k_ccrm_empirical",
    "exceeded_cap",
];

pub const DEPTH_COLUMNS: &[&str] = &[
    "T",
    "K",
    "p_formula",
    "p_hat",
    "stderr",
    "formula_argmax",
    "simulated_argmax",
];

pub const FIT_COLUMNS: &[&str] = &[
    "name",
    "retry_mode",
    "k",
    "pass_at_1",
    "pass_at_k",
    "p0",
    "p1",
    "eps0",
    "eps1",
    "cascade_ratio",
    "fit_error",
    "fit_error_printed",
    "iid_prediction",
    "iid_gap",
    "note",
];

fn regime_label(r: Regime) -> &'static str {
    match r {
        Regime::SubCritical => "sub-critical",
        Regime::SuperCritical => "super-critical",
    }
}

pub fn analyze(args: &AnalyzeArgs) -> Result<Table, CliError> {
    let params = ModelParams::new(args.eps0, args.eps1, args.depth)?;
    let rates = params.rates()?;
    let head: Vec<Cell> = vec![
        args.eps0.into(),
        args.eps1.into(),
        args.depth.into(),
        rates.p0().into(),
        rates.p1().into(),
    ];
    match (args.k, args.delta) {
        (Some(k), None) => {
            let mut table = Table::new(ANALYZE_K_COLUMNS);
            let mut row = head;
            row.extend([
                k.into(),
                success_within(&rates, k)?.into(),
                success_clean(rates.p0(), k)?.into(),
                improvement_ratio(&rates, k)?.into(),
            ]);
            table.push(row);
            Ok(table)
        }
        (None, Some(delta)) => {
            let target = ReliabilityTarget::new(delta)?;
            let rep = cascade_overhead(&rates, &target)?;
            let mut table = Table::new(ANALYZE_DELTA_COLUMNS);
            let mut row = head;
            row.extend([
                delta.into(),
                rep.k_ccrm.into(),
                rep.k_iid.into(),
                rep.delta_k.into(),
                rep.lower_bound_dk.into(),
                rep.asymptotic_ratio.into(),
                rep.critical_p1.into(),
                regime_label(rep.regime).into(),
            ]);
            table.push(row);
            Ok(table)
        }
        _ => Err(CliError::Usage(
            "exactly one of --K or --delta is required".into(),
        )),
    }
}

pub fn optimize(args: &OptimizeArgs) -> Result<Table, CliError> {
    let plan = optimal_depth_exact(args.eps0, args.eps1, args.budget)?;
    let mut table = Table::new(OPTIMIZE_COLUMNS);
    table.push(vec![
        args.eps0.into(),
        args.eps1.into(),
        args.budget.into(),
        plan.t_star.into(),
        plan.k_star.into(),
        plan.t_exact.into(),
        plan.k_exact.into(),
        plan.p_success_exact.into(),
        plan.disagrees().into(),
    ]);
    Ok(table)
}

pub fn lowerbound(args: &LowerboundArgs) -> Result<Table, CliError> {
    let params = ModelParams::new(args.eps0, args.eps1, args.depth)?;
    let rates = params.rates()?;
    let target = ReliabilityTarget::new(args.delta)?;
    let bound = lecam_lower_bound(&rates, &target)?;
    let mut table = Table::new(LOWERBOUND_COLUMNS);
    table.push(vec![
        args.eps0.into(),
        args.eps1.into(),
        args.depth.into(),
        args.delta.into(),
        rates.p0().into(),
        rates.p1().into(),
        bound.hellinger_sq.into(),
        bound.k_ccrm.into(),
        bound.k_lower.into(),
    ]);
    Ok(table)
}

fn granularity(g: GranularityArg) -> Granularity {
    match g {
        GranularityArg::Attempt => Granularity::AttemptLevel,
        GranularityArg::Step => Granularity::StepLevel,
    }
}

/// Ratios 1, 1.5, ..., 8.
fn default_overhead_ratios() -> Vec<f64> {
    (0..15).map(|i| 1.0 + 0.5 * f64::from(i)).collect()
}

pub fn simulate(args: &SimulateArgs) -> Result<Table, CliError> {
    match args.workers {
        Some(0) => Err(CliError::Usage("--workers must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {n} workers: {e}")))?
            .install(|| run_experiment(args)),
        None => run_experiment(args),
    }
}

fn run_experiment(args: &SimulateArgs) -> Result<Table, CliError> {
    match args.experiment {
        Experiment::CascadeValidation => cascade_validation(args),
        Experiment::OverheadPhase => overhead_phase(args),
        Experiment::DepthOptimum => depth_optimum(args),
        Experiment::RealDataFit => {
            let rows = match &args.input {
                Some(path) => calibration::ingest(path)?,
                None => calibration::swebench_fixture(),
            };
            fit_table(rows, args.fit_depth)
        }
    }
}

fn cascade_validation(args: &SimulateArgs) -> Result<Table, CliError> {
    let ratios = args
        .ratios
        .clone()
        .unwrap_or_else(|| vec![1.0, 2.0, 3.0, 4.0]);
    let policy = match args.policy {
        PolicyArg::Contaminated => RetryPolicy::Contaminated,
        PolicyArg::Clean => RetryPolicy::CleanRestart,
    };
    let base = SimConfig::new(
        ModelParams::new(args.eps0, args.eps0, args.depth)?,
        policy,
        args.k,
        args.trials,
        args.seed,
    )?
    .with_granularity(granularity(args.granularity));
    let mut table = Table::new(CASCADE_COLUMNS);
    for r in sweep_cascade(&base, &ratios)? {
        table.push(vec![
            r.ratio.into(),
            r.eps1.into(),
            r.k.into(),
            r.p_formula.into(),
            r.p_hat.into(),
            r.stderr.into(),
            r.abs_error.into(),
        ]);
    }
    Ok(table)
}

fn overhead_phase(args: &SimulateArgs) -> Result<Table, CliError> {
    let grid = OverheadGrid {
        eps0: args.eps0,
        ratios: args.ratios.clone().unwrap_or_else(default_overhead_ratios),
        depths: args.depths.clone().unwrap_or_else(|| vec![5, 10, 20]),
        trials: args.trials,
        master_seed: args.seed,
        scan_cap: args.cap,
        granularity: granularity(args.granularity),
    };
    let target = ReliabilityTarget::new(args.delta)?;
    let mut table = Table::new(OVERHEAD_COLUMNS);
    for r in sweep_overhead(&grid, &target)? {
        table.push(vec![
            r.ratio.into(),
            r.depth.into(),
            r.k_iid.into(),
            r.k_ccrm_analytic.into(),
            r.k_ccrm_empirical.into(),
            r.exceeded_cap().into(),
        ]);
    }
    Ok(table)
}

fn depth_optimum(args: &SimulateArgs) -> Result<Table, CliError> {
    if !(1.0..=ccrm_core::analysis::MAX_EXACT_BUDGET).contains(&args.budget) {
        return Err(ccrm_core::Error::Domain(format!(
            "budget must lie in [1, 1e6], got {}",
            args.budget
        ))
        .into());
    }
    let depths = args
        .depths
        .clone()
        .unwrap_or_else(|| (1..=args.budget.floor() as u32).collect());
    let spec = DepthSweep {
        eps0: args.eps0,
        eps1: args.eps1,
        budget: args.budget,
        depths,
        trials: args.trials,
        master_seed: args.seed,
        granularity: granularity(args.granularity),
    };
    let rows = sweep_depth(&spec)?;
    let plan = optimal_depth_exact(args.eps0, args.eps1, args.budget)?;
    let best_formula = formula_argmax(&rows);
    let best_sim = simulated_argmax(&rows);
    eprintln!(
        "closed-form T*={:.4} K*={:.4}; exact t={} (K={}); simulated argmax t={}",
        plan.t_star,
        plan.k_star,
        plan.t_exact,
        plan.k_exact,
        best_sim.map_or("-".to_string(), |t| t.to_string())
    );
    let mut table = Table::new(DEPTH_COLUMNS);
    for r in rows {
        table.push(vec![
            r.depth.into(),
            r.k.into(),
            r.p_formula.into(),
            r.p_hat.into(),
            r.stderr.into(),
            (best_formula == Some(r.depth)).into(),
            (best_sim == Some(r.depth)).into(),
        ]);
    }
    Ok(table)
}

fn fit_table(rows: Vec<PassAtKObservation>, depth: Option<u32>) -> Result<Table, CliError> {
    let mut table = Table::new(FIT_COLUMNS);
    for (i, mut obs) in rows.into_iter().enumerate() {
        if depth.is_some() {
            obs.assumed_depth = depth;
        }
        let a = assess(&obs).map_err(|e| match e {
            ccrm_core::Error::Validation { message, .. } => ccrm_core::Error::Validation {
                row: i + 1,
                message,
            },
            other => other,
        })?;
        let fit = a.fit.as_ref();
        table.push(vec![
            obs.name.as_str().into(),
            obs.retry_mode.as_str().into(),
            obs.k.into(),
            obs.pass_at_1.into(),
            obs.pass_at_k.into(),
            fit.map(|f| f.p0).into(),
            fit.map(|f| f.p1).into(),
            fit.and_then(|f| f.eps0).into(),
            fit.and_then(|f| f.eps1).into(),
            fit.and_then(|f| f.cascade_ratio).into(),
            fit.map(|f| f.fit_error).into(),
            fit.map(|f| f.fit_error_printed).into(),
            a.iid_prediction.into(),
            a.iid_gap.into(),
            a.note.clone().into(),
        ]);
    }
    Ok(table)
}

pub fn fit(path: &Path, depth: Option<u32>) -> Result<Table, CliError> {
    if depth == Some(0) {
        return Err(CliError::Usage("--depth must be at least 1".into()));
    }
    fit_table(calibration::ingest(path)?, depth)
}
