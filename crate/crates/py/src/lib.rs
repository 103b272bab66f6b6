use pyo3::prelude::*;

#[pymodule]
mod inrlab {
    use std::path::PathBuf;

    use inrlab_core::harmonics::{harmonic_support as support, SupportBudget, DEFAULT_DEDUP_TOL};
    use inrlab_core::lab::commands::{run_command as run_cmd, run_expt, Command};
    use inrlab_core::lab::experiments::{Summary, EXPERIMENT_NAMES};
    use inrlab_core::lab::synth;
    use inrlab_core::model::{load_model, Coords};
    use inrlab_core::ntk::{gram_matrix, ntk_eigs};
    use inrlab_core::numkit::{self, Matrix};
    use inrlab_core::{train, Error};
    use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
    use pyo3::prelude::*;

    fn to_py(e: Error) -> PyErr {
        match e.root() {
            Error::Io(_) => PyIOError::new_err(e.to_string()),
            _ if e.exit_code() == 3 => PyRuntimeError::new_err(e.to_string()),
            _ => PyValueError::new_err(e.to_string()),
        }
    }

    fn unpack(result: Result<(PathBuf, Summary), Error>) -> PyResult<(String, Vec<(String, f64)>)> {
        let (dir, summary) = result.map_err(to_py)?;
        Ok((dir.display().to_string(), summary.metrics))
    }

    #[pymodule_init]
    fn init(m: &Bound<'_, PyModule>) -> PyResult<()> {
        m.add("__version__", env!("CARGO_PKG_VERSION"))?;
        m.add("EXPERIMENTS", EXPERIMENT_NAMES.to_vec())
    }

    /// Runs a CLI subcommand from a JSON config; returns the run directory
    /// and its summary metrics.
    #[pyfunction]
    #[pyo3(signature = (command, config, out, seed=None))]
    fn run_command(command: &str, config: &str, out: PathBuf, seed: Option<u64>) -> PyResult<(String, Vec<(String, f64)>)> {
        let cmd: Command = command.parse().map_err(to_py)?;
        unpack(run_cmd(cmd, config, "<python>", &out, seed))
    }

    /// Runs a named experiment, with defaults unless a JSON config is given.
    #[pyfunction]
    #[pyo3(signature = (name, out, config=None, seed=None))]
    fn run_experiment(name: &str, out: PathBuf, config: Option<&str>, seed: Option<u64>) -> PyResult<(String, Vec<(String, f64)>)> {
        unpack(run_expt(name, config.map(|c| (c, "<python>")), &out, seed))
    }

    /// Harmonic support of the frequency rows `omega` for degree `k` and depth `l`.
    #[pyfunction]
    #[pyo3(signature = (omega, k, l, dedup_tol=DEFAULT_DEDUP_TOL))]
    fn harmonic_support(omega: Vec<Vec<f64>>, k: u32, l: u32, dedup_tol: f64) -> PyResult<Vec<Vec<f64>>> {
        let omega = Matrix::from_rows(&omega).map_err(to_py)?;
        support(&omega, SupportBudget::new(k, l).map_err(to_py)?, dedup_tol).map_err(to_py)
    }

    #[pyfunction]
    fn bessel_j(order: i32, x: f64) -> PyResult<f64> {
        numkit::bessel_j(order, x).map_err(to_py)
    }

    #[pyfunction]
    #[pyo3(signature = (pred, target, peak=1.0))]
    fn psnr(pred: Vec<f64>, target: Vec<f64>, peak: f64) -> PyResult<f64> {
        train::psnr(&pred, &target, peak).map_err(to_py)
    }

    /// Row-major pixels of the synthetic test image.
    #[pyfunction]
    fn test_image(size: usize, seed: u64) -> PyResult<Vec<f64>> {
        Ok(synth::gen_test_image(size, seed).map_err(to_py)?.targets)
    }

    /// Descending empirical NTK eigenvalues of a saved model on a
    /// `rows × cols` grid over [−1, 1)².
    #[pyfunction]
    #[pyo3(signature = (model_path, rows, cols, batch_size=64))]
    fn ntk_eigenvalues(py: Python<'_>, model_path: PathBuf, rows: usize, cols: usize, batch_size: usize) -> PyResult<Vec<f64>> {
        let model = load_model(&model_path).map_err(to_py)?;
        py.detach(|| {
            let gram = gram_matrix(&model, &Coords::grid_2d(rows, cols), batch_size)?;
            Ok(ntk_eigs(&gram)?.eigenvalues().to_vec())
        })
        .map_err(to_py)
    }
}
