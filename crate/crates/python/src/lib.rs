use pyo3::prelude::*;

#[pymodule]
fn sbm_spectral_py(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
