//! Python bindings for the torsion and linking library.
//!
//! Build and import:
//!
//! ```text
//! cargo build --release -p torlink-py
//! cp target/release/libtorlink_py.so torlink_py.so
//! python3 -c "import torlink_py; print(torlink_py.builtin_systems())"
//! ```
//!
//! Points and tangent vectors cross the boundary as `(x, y)` tuples; every
//! angle-valued result is in radians, averaged per unit of time.

use std::collections::HashMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use torlink::error::Error;
use torlink::geometry::{RefinementPolicy, Vec2};
use torlink::linking::{linking_asymptotic, linking_finite};
use torlink::measures::torus_null_torsion_search;
use torlink::systems::{register_builtins, IsotopySystem, Surface, SystemSpec};
use torlink::theorems::{locate_torsion_point, snapshot_equivalence_gap, twist_bound_sweep};
use torlink::torsion::{torsion_asymptotic, torsion_finite, AveragedSeries};

type Pair = (f64, f64);

const X_REF: Vec2 = Vec2 { x: 1.0, y: 0.0 };

fn v(p: Pair) -> Vec2 {
    Vec2::new(p.0, p.1)
}

fn pair(w: Vec2) -> Pair {
    (w.x, w.y)
}

fn policy(steps_per_unit: u32) -> RefinementPolicy {
    RefinementPolicy {
        steps_per_unit,
        ..RefinementPolicy::default()
    }
}

fn err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A named isotopy from the built-in registry.
#[pyclass(frozen)]
struct System {
    inner: IsotopySystem,
}

#[pymethods]
impl System {
    #[new]
    #[pyo3(signature = (name, params = None, variant = None))]
    fn new(
        name: &str,
        params: Option<HashMap<String, f64>>,
        variant: Option<&str>,
    ) -> PyResult<Self> {
        let mut spec = SystemSpec::new(name);
        for (key, value) in params.unwrap_or_default() {
            spec = spec.with_param(&key, value);
        }
        if let Some(variant) = variant {
            spec = spec.with_variant(variant);
        }
        let inner = register_builtins().build(&spec).map_err(err)?;
        Ok(System { inner })
    }

    /// Image of `z` under the time-`t` map.
    fn image(&self, z: Pair, t: f64) -> PyResult<Pair> {
        let (w, _) = self.inner.evaluate(v(z), t).map_err(err)?;
        Ok(pair(w))
    }

    #[getter]
    fn name(&self) -> &str {
        self.inner.name()
    }

    #[getter]
    fn variant(&self) -> &str {
        self.inner.variant()
    }

    #[getter]
    fn params(&self) -> HashMap<String, f64> {
        self.inner
            .params()
            .iter()
            .map(|(k, val)| (k.clone(), *val))
            .collect()
    }

    #[getter]
    fn surface(&self) -> &'static str {
        match self.inner.surface() {
            Surface::Plane => "plane",
            Surface::AnnulusLift => "annulus_lift",
            Surface::TorusLift => "torus_lift",
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "System(name={:?}, variant={:?})",
            self.inner.name(),
            self.inner.variant()
        )
    }
}

/// Horizon-by-horizon averages with a tail Cauchy diagnostic.
#[pyclass(frozen, get_all)]
struct Series {
    values: Vec<(u32, f64)>,
    final_value: f64,
    cauchy_diagnostic: f64,
}

#[pymethods]
impl Series {
    fn __repr__(&self) -> String {
        format!(
            "Series(final_value={}, cauchy_diagnostic={}, len={})",
            self.final_value,
            self.cauchy_diagnostic,
            self.values.len()
        )
    }
}

impl From<AveragedSeries> for Series {
    fn from(s: AveragedSeries) -> Series {
        Series {
            values: s.values,
            final_value: s.final_value,
            cauchy_diagnostic: s.cauchy_diagnostic,
        }
    }
}

/// Outcome of a segment scan for a point whose torsion equals a target.
#[pyclass(frozen, get_all)]
struct Locate {
    located_s: Option<f64>,
    located_point: Option<Pair>,
    residual: f64,
    target: f64,
}

#[pymethods]
impl Locate {
    fn __repr__(&self) -> String {
        format!(
            "Locate(located_s={:?}, residual={})",
            self.located_s, self.residual
        )
    }
}

/// Snapshot angle sum against the rescaled torsion on a twist family.
#[pyclass(frozen, get_all)]
struct Snapshot {
    theta_n: f64,
    scaled_torsion: f64,
    gap: f64,
    min_twist_coefficient: f64,
}

#[pymethods]
impl Snapshot {
    fn __repr__(&self) -> String {
        format!("Snapshot(theta_n={}, gap={})", self.theta_n, self.gap)
    }
}

/// Torsion-band sweep over points and horizons on a positive twist family.
#[pyclass(frozen, get_all)]
struct TwistSweep {
    passed: bool,
    min_twist_coefficient: f64,
    min_value: f64,
    max_value: f64,
}

#[pymethods]
impl TwistSweep {
    fn __repr__(&self) -> String {
        format!(
            "TwistSweep(passed={}, values in [{}, {}])",
            self.passed, self.min_value, self.max_value
        )
    }
}

/// Search result for a torsion-free point of a doubly periodic lift.
#[pyclass(frozen, get_all)]
struct TorusNull {
    located_s: Option<f64>,
    located_point: Option<Pair>,
    residual: f64,
    translate_linking: f64,
    periodicity_deviation: f64,
}

#[pymethods]
impl TorusNull {
    fn __repr__(&self) -> String {
        format!(
            "TorusNull(located_s={:?}, residual={})",
            self.located_s, self.residual
        )
    }
}

/// Names accepted by `System(name, ...)`.
#[pyfunction]
fn builtin_systems() -> Vec<String> {
    register_builtins()
        .names()
        .into_iter()
        .map(str::to_string)
        .collect()
}

/// Average winding of the pushed seed vector `xi` at `z` over `n` time units.
#[pyfunction]
#[pyo3(signature = (system, z, xi, n, steps_per_unit = 64))]
fn torsion(system: &System, z: Pair, xi: Pair, n: u32, steps_per_unit: u32) -> PyResult<f64> {
    Ok(
        torsion_finite(&system.inner, v(z), v(xi), n, X_REF, &policy(steps_per_unit))
            .map_err(err)?
            .value,
    )
}

/// Torsion at every horizon up to `n_max`.
#[pyfunction]
#[pyo3(signature = (system, z, xi, n_max, steps_per_unit = 64))]
fn torsion_series(
    system: &System,
    z: Pair,
    xi: Pair,
    n_max: u32,
    steps_per_unit: u32,
) -> PyResult<Series> {
    Ok(
        torsion_asymptotic(&system.inner, v(z), v(xi), n_max, X_REF, &policy(steps_per_unit))
            .map_err(err)?
            .into(),
    )
}

/// Average winding of the difference of two orbits over `n` time units.
#[pyfunction]
#[pyo3(signature = (system, x, y, n, steps_per_unit = 64))]
fn linking(system: &System, x: Pair, y: Pair, n: u32, steps_per_unit: u32) -> PyResult<f64> {
    Ok(
        linking_finite(&system.inner, v(x), v(y), n, X_REF, &policy(steps_per_unit))
            .map_err(err)?
            .value,
    )
}

/// Linking at every horizon up to `n_max`.
#[pyfunction]
#[pyo3(signature = (system, x, y, n_max, steps_per_unit = 64))]
fn linking_series(
    system: &System,
    x: Pair,
    y: Pair,
    n_max: u32,
    steps_per_unit: u32,
) -> PyResult<Series> {
    Ok(
        linking_asymptotic(&system.inner, v(x), v(y), n_max, X_REF, &policy(steps_per_unit))
            .map_err(err)?
            .into(),
    )
}

/// Scan the segment [x, y] for a point whose torsion equals the pair's
/// linking number.
#[pyfunction]
#[pyo3(signature = (system, x, y, n, scan = 64, tol = 1e-8, steps_per_unit = 64))]
fn locate(
    system: &System,
    x: Pair,
    y: Pair,
    n: u32,
    scan: u32,
    tol: f64,
    steps_per_unit: u32,
) -> PyResult<Locate> {
    let out = locate_torsion_point(&system.inner, v(x), v(y), n, scan, tol, &policy(steps_per_unit))
        .map_err(err)?;
    Ok(Locate {
        located_s: out.located_s,
        located_point: out.located_point.map(pair),
        residual: out.residual,
        target: out.target_linking,
    })
}

/// Compare the snapshot angle sum with `n` times the torsion at `p`.
#[pyfunction]
#[pyo3(signature = (system, p, eta, n, steps_per_unit = 64))]
fn snapshot_gap(
    system: &System,
    p: Pair,
    eta: Pair,
    n: u32,
    steps_per_unit: u32,
) -> PyResult<Snapshot> {
    let eq = snapshot_equivalence_gap(&system.inner, v(p), v(eta), n, &policy(steps_per_unit))
        .map_err(err)?;
    Ok(Snapshot {
        theta_n: eq.theta_n,
        scaled_torsion: eq.scaled_torsion,
        gap: eq.gap,
        min_twist_coefficient: eq.twist.min_coefficient,
    })
}

/// Check vertical-seed torsion stays in (-pi, 0) over points and horizons.
#[pyfunction]
#[pyo3(signature = (system, points, horizons, steps_per_unit = 64))]
fn twist_sweep(
    system: &System,
    points: Vec<Pair>,
    horizons: Vec<u32>,
    steps_per_unit: u32,
) -> PyResult<TwistSweep> {
    let pts: Vec<Vec2> = points.into_iter().map(v).collect();
    let report = twist_bound_sweep(&system.inner, &pts, &horizons, &policy(steps_per_unit))
        .map_err(err)?;
    let (min_value, max_value) = report
        .evaluations
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |acc, e| {
            (acc.0.min(e.value), acc.1.max(e.value))
        });
    Ok(TwistSweep {
        passed: report.pass,
        min_twist_coefficient: report.twist.min_coefficient,
        min_value,
        max_value,
    })
}

/// Search a fundamental segment of a doubly periodic lift for a point with
/// zero torsion.
#[pyfunction]
#[pyo3(signature = (system, n, scan = 64, tol = 1e-8, steps_per_unit = 64))]
fn torus_null(system: &System, n: u32, scan: u32, tol: f64, steps_per_unit: u32) -> PyResult<TorusNull> {
    let search = torus_null_torsion_search(&system.inner, n, scan, tol, &policy(steps_per_unit))
        .map_err(err)?;
    Ok(TorusNull {
        located_s: search.scan.located_s,
        located_point: search.scan.located_point.map(pair),
        residual: search.scan.residual,
        translate_linking: search.translate_linking,
        periodicity_deviation: search.periodicity_deviation,
    })
}

#[pymodule]
fn torlink_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<System>()?;
    m.add_class::<Series>()?;
    m.add_class::<Locate>()?;
    m.add_class::<Snapshot>()?;
    m.add_class::<TwistSweep>()?;
    m.add_class::<TorusNull>()?;
    m.add_function(wrap_pyfunction!(builtin_systems, m)?)?;
    m.add_function(wrap_pyfunction!(torsion, m)?)?;
    m.add_function(wrap_pyfunction!(torsion_series, m)?)?;
    m.add_function(wrap_pyfunction!(linking, m)?)?;
    m.add_function(wrap_pyfunction!(linking_series, m)?)?;
    m.add_function(wrap_pyfunction!(locate, m)?)?;
    m.add_function(wrap_pyfunction!(snapshot_gap, m)?)?;
    m.add_function(wrap_pyfunction!(twist_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(torus_null, m)?)?;
    Ok(())
}
