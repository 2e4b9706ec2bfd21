use pyo3::prelude::*;
#[pymodule]
fn tomacvf_py(_m: &Bound<'_, PyModule>) -> PyResult<()> { Ok(()) }
