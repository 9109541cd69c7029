//! Python module `ccrm`: model parameters, closed-form analysis, calibration
//! and seeded Monte Carlo estimates backed by `ccrm-core`.

use ccrm_core::analysis::{self, ReliabilityTarget};
use ccrm_core::calibration::{self, PassAtKObservation, RetryMode};
use ccrm_core::model;
use ccrm_core::simulator::{self, Granularity, SimConfig};
use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

create_exception!(
    ccrm,
    CcrmError,
    PyValueError,
    "Invalid input or undefined result."
);

fn py_err(e: ccrm_core::Error) -> PyErr {
    match e {
        ccrm_core::Error::Io { .. } => PyOSError::new_err(e.to_string()),
        other => CcrmError::new_err(other.to_string()),
    }
}

fn target(delta: f64) -> PyResult<ReliabilityTarget> {
    ReliabilityTarget::new(delta).map_err(py_err)
}

#[pyclass(name = "ModelParams", frozen)]
pub struct PyModelParams {
    inner: model::ModelParams,
}

#[pymethods]
impl PyModelParams {
    #[new]
    fn new(eps0: f64, eps1: f64, depth: u32) -> PyResult<Self> {
        model::ModelParams::new(eps0, eps1, depth)
            .map(|inner| Self { inner })
            .map_err(py_err)
    }

    #[getter]
    fn eps0(&self) -> f64 {
        self.inner.eps0()
    }

    #[getter]
    fn eps1(&self) -> f64 {
        self.inner.eps1()
    }

    #[getter]
    fn depth(&self) -> u32 {
        self.inner.depth()
    }

    #[getter]
    fn cascade_ratio(&self) -> f64 {
        self.inner.cascade_ratio()
    }

    fn rates(&self) -> PyResult<PyDerivedRates> {
        self.inner
            .rates()
            .map(|inner| PyDerivedRates { inner })
            .map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "ModelParams(eps0={}, eps1={}, depth={})",
            self.inner.eps0(),
            self.inner.eps1(),
            self.inner.depth()
        )
    }
}

#[pyclass(name = "DerivedRates", frozen)]
pub struct PyDerivedRates {
    inner: model::DerivedRates,
}

#[pymethods]
impl PyDerivedRates {
    /// Rates from per-attempt success probabilities directly.
    #[staticmethod]
    fn from_attempt_probs(p0: f64, p1: f64) -> PyResult<Self> {
        model::DerivedRates::from_attempt_probs(p0, p1)
            .map(|inner| Self { inner })
            .map_err(py_err)
    }

    #[getter]
    fn p0(&self) -> f64 {
        self.inner.p0()
    }

    #[getter]
    fn p1(&self) -> f64 {
        self.inner.p1()
    }

    fn success_within(&self, k: u64) -> PyResult<f64> {
        model::success_within(&self.inner, k).map_err(py_err)
    }

    fn success_clean(&self, k: u64) -> PyResult<f64> {
        model::success_clean(self.inner.p0(), k).map_err(py_err)
    }

    fn improvement_ratio(&self, k: u64) -> PyResult<f64> {
        analysis::improvement_ratio(&self.inner, k).map_err(py_err)
    }

    fn attempts_required(&self, delta: f64) -> PyResult<u64> {
        analysis::attempts_required_ccrm(&self.inner, &target(delta)?).map_err(py_err)
    }

    fn cascade_overhead(&self, delta: f64) -> PyResult<OverheadReport> {
        let r = analysis::cascade_overhead(&self.inner, &target(delta)?).map_err(py_err)?;
        Ok(OverheadReport {
            k_ccrm: r.k_ccrm,
            k_iid: r.k_iid,
            delta_k: r.delta_k,
            lower_bound_dk: r.lower_bound_dk,
            asymptotic_ratio: r.asymptotic_ratio,
            critical_p1: r.critical_p1,
            super_critical: r.regime == analysis::Regime::SuperCritical,
            boundary: r.boundary,
        })
    }

    fn lecam_lower_bound(&self, delta: f64) -> PyResult<LeCamBound> {
        let b = analysis::lecam_lower_bound(&self.inner, &target(delta)?).map_err(py_err)?;
        Ok(LeCamBound {
            hellinger_sq: b.hellinger_sq,
            k_ccrm: b.k_ccrm,
            k_lower: b.k_lower,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "DerivedRates(p0={}, p1={})",
            self.inner.p0(),
            self.inner.p1()
        )
    }
}

#[pyclass(frozen, get_all)]
pub struct OverheadReport {
    k_ccrm: u64,
    k_iid: u64,
    delta_k: i64,
    lower_bound_dk: f64,
    asymptotic_ratio: f64,
    critical_p1: Option<f64>,
    super_critical: bool,
    boundary: bool,
}

#[pyclass(frozen, get_all)]
pub struct LeCamBound {
    hellinger_sq: f64,
    k_ccrm: u64,
    k_lower: f64,
}

#[pyclass(frozen, get_all)]
pub struct BudgetPlan {
    budget: f64,
    t_star: f64,
    k_star: f64,
    t_exact: u64,
    k_exact: u64,
    p_success_exact: f64,
    disagrees: bool,
}

#[pyclass(frozen, get_all)]
pub struct FitResult {
    p0: f64,
    p1: f64,
    eps0: Option<f64>,
    eps1: Option<f64>,
    cascade_ratio: Option<f64>,
    fit_error: f64,
    iid_prediction: f64,
    iid_gap: f64,
}

#[pyclass(frozen, get_all)]
pub struct SimEstimate {
    p_hat: f64,
    stderr: f64,
    ci95_low: f64,
    ci95_high: f64,
    trials: u64,
}

#[pyfunction]
fn success_iid(p0: f64, k: u64) -> PyResult<f64> {
    model::success_iid(p0, k).map_err(py_err)
}

#[pyfunction]
fn attempts_required_iid(p0: f64, delta: f64) -> PyResult<u64> {
    analysis::attempts_required_iid(p0, &target(delta)?).map_err(py_err)
}

#[pyfunction]
fn hellinger_sq(p0: f64, p1: f64) -> PyResult<f64> {
    analysis::hellinger_sq(p0, p1).map_err(py_err)
}

/// Closed-form and exact depth/retry split for a tool-call budget.
#[pyfunction]
fn optimal_depth(eps0: f64, eps1: f64, budget: f64) -> PyResult<BudgetPlan> {
    let p = analysis::optimal_depth_exact(eps0, eps1, budget).map_err(py_err)?;
    Ok(BudgetPlan {
        budget: p.budget,
        t_star: p.t_star,
        k_star: p.k_star,
        t_exact: p.t_exact,
        k_exact: p.k_exact,
        p_success_exact: p.p_success_exact,
        disagrees: p.disagrees(),
    })
}

/// Two-point fit from pass@1 and pass@k under contaminated retries.
#[pyfunction]
#[pyo3(signature = (pass_at_1, pass_at_k, k, depth=None))]
fn fit_ccrm(pass_at_1: f64, pass_at_k: f64, k: u32, depth: Option<u32>) -> PyResult<FitResult> {
    let obs = PassAtKObservation {
        name: String::new(),
        pass_at_1,
        pass_at_k,
        k,
        retry_mode: RetryMode::Contaminated,
        assumed_depth: depth,
    };
    obs.validate().map_err(py_err)?;
    let f = calibration::fit_ccrm(&obs).map_err(py_err)?;
    Ok(FitResult {
        p0: f.p0,
        p1: f.p1,
        eps0: f.eps0,
        eps1: f.eps1,
        cascade_ratio: f.cascade_ratio,
        fit_error: f.fit_error,
        iid_prediction: f.iid_prediction,
        iid_gap: f.iid_gap,
    })
}

/// Independent-retry pass@k prediction and its gap to the observation.
#[pyfunction]
fn iid_prediction(pass_at_1: f64, pass_at_k: f64, k: u32) -> PyResult<(f64, f64)> {
    let obs = PassAtKObservation {
        name: String::new(),
        pass_at_1,
        pass_at_k,
        k,
        retry_mode: RetryMode::Fresh,
        assumed_depth: None,
    };
    obs.validate().map_err(py_err)?;
    calibration::iid_prediction(&obs).map_err(py_err)
}

/// Seeded Monte Carlo estimate of success within `k` attempts.
#[pyfunction]
#[pyo3(signature = (params, k, trials=simulator::DEFAULT_TRIALS, seed=20260101, clean_restart=false, step_level=false))]
fn estimate_success(
    py: Python<'_>,
    params: &PyModelParams,
    k: u64,
    trials: u64,
    seed: u64,
    clean_restart: bool,
    step_level: bool,
) -> PyResult<SimEstimate> {
    let policy = if clean_restart {
        model::RetryPolicy::CleanRestart
    } else {
        model::RetryPolicy::Contaminated
    };
    let granularity = if step_level {
        Granularity::StepLevel
    } else {
        Granularity::AttemptLevel
    };
    let config = SimConfig::new(params.inner, policy, k, trials, seed)
        .map_err(py_err)?
        .with_granularity(granularity);
    let e = py
        .detach(|| simulator::estimate_success(&config))
        .map_err(py_err)?;
    Ok(SimEstimate {
        p_hat: e.p_hat,
        stderr: e.stderr,
        ci95_low: e.ci95_low,
        ci95_high: e.ci95_high,
        trials: e.trials,
    })
}

#[pymodule]
fn ccrm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("CcrmError", m.py().get_type::<CcrmError>())?;
    m.add_class::<PyModelParams>()?;
    m.add_class::<PyDerivedRates>()?;
    m.add_class::<OverheadReport>()?;
    m.add_class::<LeCamBound>()?;
    m.add_class::<BudgetPlan>()?;
    m.add_class::<FitResult>()?;
    m.add_class::<SimEstimate>()?;
    m.add_function(wrap_pyfunction!(success_iid, m)?)?;
    m.add_function(wrap_pyfunction!(attempts_required_iid, m)?)?;
    m.add_function(wrap_pyfunction!(hellinger_sq, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_depth, m)?)?;
    m.add_function(wrap_pyfunction!(fit_ccrm, m)?)?;
    m.add_function(wrap_pyfunction!(iid_prediction, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_success, m)?)?;
    Ok(())
}
