//! Python module `chondrosim`.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use chondrosim::diagnostics::DiagnosticsRecord;
use chondrosim::oracle::{rk4_sampled, HomogeneousState};
use chondrosim::output::{diagnostics_row, DIAGNOSTICS_HEADER};
use chondrosim::stepper::FIELD_NAMES;
use chondrosim::sweep::{run_sweep, SweepConfig};
use chondrosim::weakform::{residual_table, test_family, Trajectory};
use chondrosim::{parse_config, Error, RunConfig, SimState};

/// `(t, c1, c2, chi, tau)`
type OracleRow = (f64, f64, f64, f64, f64);
/// `(equation, kx, ky, m, residual)`
type ResidualEntry = (String, usize, usize, u32, f64);

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyOSError::new_err(io.to_string()),
        e if e.is_numerical() => PyRuntimeError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

/// Diagnostics as named columns, booleans as 0/1.
fn columns(records: &[DiagnosticsRecord]) -> BTreeMap<String, Vec<f64>> {
    let mut out: BTreeMap<String, Vec<f64>> = DIAGNOSTICS_HEADER
        .iter()
        .map(|h| (h.to_string(), Vec::new()))
        .collect();
    for rec in records {
        for (h, v) in DIAGNOSTICS_HEADER.iter().zip(diagnostics_row(rec)) {
            out.get_mut(*h)
                .expect("header column")
                .push(v.parse().unwrap_or(f64::NAN));
        }
    }
    out
}

fn fields(state: &SimState) -> BTreeMap<String, Vec<f64>> {
    FIELD_NAMES
        .iter()
        .zip(state.fields())
        .map(|(n, f)| (n.to_string(), f.values().to_vec()))
        .collect()
}

/// A validated run configuration.
#[pyclass(name = "Config", module = "chondrosim", skip_from_py_object)]
#[derive(Clone)]
pub struct PyConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        let inner = parse_config(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PyOSError::new_err(e.to_string()))?;
        Self::new(&text)
    }

    /// Every key with its effective value.
    fn echo(&self) -> String {
        self.inner.echo()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.grid.dim
    }

    #[getter]
    fn cells(&self) -> usize {
        self.inner.grid.nx * self.inner.grid.ny
    }

    #[getter]
    fn t_end(&self) -> f64 {
        self.inner.control.t_end
    }

    /// Copy with `params.eps` replaced.
    fn with_eps(&self, eps: f64) -> PyResult<Self> {
        let mut c = self.clone();
        c.inner.params.eps = eps;
        c.inner.params.validate(c.inner.grid.dim).map_err(py_err)?;
        Ok(c)
    }

    /// Runs the simulation; releases the GIL while stepping.
    fn run(&self, py: Python<'_>) -> PyResult<RunResult> {
        let cfg = self.inner.clone();
        let collected = py
            .detach(move || cfg.scenario()?.simulate())
            .map_err(py_err)?;
        Ok(RunResult {
            steps: collected.outcome.steps,
            m1: collected.outcome.bounds.m1,
            tau_star: collected.outcome.bounds.tau_star,
            certificates_ok: collected.records.iter().all(|r| r.certificates.all()),
            records: collected.records,
            snapshots: collected.snapshots,
        })
    }

    /// Homogeneous RK4 reference at the save times: rows `(t, c1, c2, chi, tau)`.
    fn oracle(&self) -> PyResult<Vec<OracleRow>> {
        let cfg = &self.inner;
        let [c1, c2, chi, tau] = cfg
            .uniform_initial()
            .ok_or_else(|| PyValueError::new_err("oracle needs uniform initial data"))?;
        let y0 = HomogeneousState::new(0.0, c1, c2, chi, tau).map_err(py_err)?;
        let measure = cfg.grid().map_err(py_err)?.measure();
        let states = rk4_sampled(
            &y0,
            &cfg.model(),
            measure,
            cfg.oracle_dt,
            cfg.control.t_end,
            cfg.control.save_every,
        )
        .map_err(py_err)?;
        Ok(states
            .iter()
            .map(|s| (s.t, s.c1, s.c2, s.chi, s.tau))
            .collect())
    }

    /// Pairwise trajectory distances for a vanishing-damping sweep.
    fn sweep(&self, py: Python<'_>, eps_list: Vec<f64>) -> PyResult<Vec<[f64; 4]>> {
        let base = self.inner.scenario().map_err(py_err)?;
        let cfg = SweepConfig::new(eps_list, base).map_err(py_err)?;
        let report = py.detach(|| run_sweep(&cfg)).map_err(py_err)?;
        Ok(report.pair_distances)
    }
}

/// Output of [`PyConfig::run`].
#[pyclass(module = "chondrosim")]
pub struct RunResult {
    records: Vec<DiagnosticsRecord>,
    snapshots: Vec<SimState>,
    #[pyo3(get)]
    steps: usize,
    #[pyo3(get)]
    m1: f64,
    #[pyo3(get)]
    tau_star: f64,
    #[pyo3(get)]
    certificates_ok: bool,
}

#[pymethods]
impl RunResult {
    /// Diagnostics columns keyed by CSV header name.
    fn diagnostics(&self) -> BTreeMap<String, Vec<f64>> {
        columns(&self.records)
    }

    fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    /// Cell values of every field at snapshot `index` (negative counts from the end).
    #[pyo3(signature = (index = -1))]
    fn snapshot(&self, index: isize) -> PyResult<BTreeMap<String, Vec<f64>>> {
        let n = self.snapshots.len() as isize;
        let i = if index < 0 { n + index } else { index };
        if !(0..n).contains(&i) {
            return Err(PyValueError::new_err(format!(
                "snapshot index {index} out of range for {n}"
            )));
        }
        Ok(fields(&self.snapshots[i as usize]))
    }

    /// Weak-form residuals `(equation, kx, ky, m, residual)` of the stored trajectory.
    #[pyo3(signature = (config, kmax = 2, m = vec![2]))]
    fn weak_residuals(
        &self,
        config: &PyConfig,
        kmax: usize,
        m: Vec<u32>,
    ) -> PyResult<Vec<ResidualEntry>> {
        let traj = Trajectory::new(self.snapshots.clone(), config.inner.model()).map_err(py_err)?;
        let family =
            test_family(config.inner.grid.dim, kmax, &m, traj.horizon()).map_err(py_err)?;
        let rows = residual_table(&traj, &family, 0).map_err(py_err)?;
        Ok(rows
            .into_iter()
            .map(|r| (r.equation.to_string(), r.k[0], r.k[1], r.m, r.residual))
            .collect())
    }
}

#[pymodule]
#[pyo3(name = "chondrosim")]
fn chondrosim_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<RunResult>()?;
    m.add("DIAGNOSTICS_HEADER", DIAGNOSTICS_HEADER.to_vec())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const CFG: &str = "grid.nx = 8\ncontrol.t_end = 0.5\ncontrol.dt_max = 1e-3\n\
c10.uniform = 0.4\nc20.uniform = 0.1\nchi0.uniform = 1\ntau0.uniform = 0.5\n";

    #[test]
    fn columns_follow_header() {
        let cfg = parse_config(CFG).unwrap();
        let (_, records) = cfg.scenario().unwrap().diagnostics().unwrap();
        let cols = columns(&records);
        assert_eq!(cols.len(), DIAGNOSTICS_HEADER.len());
        assert_eq!(cols["t"].len(), 11);
        assert!(cols["cert_nonneg"].iter().all(|&v| v == 1.0));
    }

    #[test]
    fn module_round_trip_through_python() {
        Python::attach(|py| {
            let cfg = Bound::new(py, PyConfig::new(CFG).unwrap()).unwrap();
            let result = cfg.call_method1("run", ()).unwrap();
            let steps: usize = result.getattr("steps").unwrap().extract().unwrap();
            assert!(steps >= 500);
            let oracle: Vec<(f64, f64, f64, f64, f64)> =
                cfg.call_method0("oracle").unwrap().extract().unwrap();
            let last: BTreeMap<String, Vec<f64>> =
                result.call_method0("snapshot").unwrap().extract().unwrap();
            let rel = (last["c1"][0] - oracle.last().unwrap().1).abs() / oracle.last().unwrap().1;
            assert!(rel < 1e-3, "{rel}");
            let err = PyConfig::new("grid.nx = 8").err().unwrap();
            assert!(err.is_instance_of::<PyValueError>(py));
        });
    }
}
