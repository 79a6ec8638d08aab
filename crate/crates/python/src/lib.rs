//! Python bindings for the aerovox pipeline.

use std::path::PathBuf;

use aerovox::io::{read_point_cloud, read_sample, PipelineConfig};
use aerovox::taxonomy::Taxonomy;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

fn py_err(e: aerovox::error::Error) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Runs the command line with `args` (without the program name) and returns the exit code.
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> i32 {
    let argv: Vec<String> = std::iter::once("aerovox".to_string()).chain(args).collect();
    py.detach(|| aerovox::cli::run(argv))
}

/// Built-in class table as `(id, name, group, frequency_pct)` tuples.
#[pyfunction]
fn taxonomy() -> Vec<(u16, String, Option<String>, f64)> {
    Taxonomy::aerial()
        .classes()
        .iter()
        .map(|c| (c.id, c.name.clone(), c.group.map(|g| g.name().to_string()), c.frequency))
        .collect()
}

/// Reads a PLY cloud as `(xyz, labels)`.
#[pyfunction]
fn load_point_cloud(py: Python<'_>, path: PathBuf) -> PyResult<(Vec<[f64; 3]>, Vec<u16>)> {
    let cloud = py.detach(|| read_point_cloud(&path)).map_err(py_err)?;
    let xyz = cloud.positions.iter().map(|p| [p.x, p.y, p.z]).collect();
    Ok((xyz, cloud.labels))
}

/// Reads one sample. Volumes are flat in (depth, right, down) order; masks
/// hold one byte per voxel.
#[pyfunction]
#[pyo3(signature = (dir, frame_id, config=None))]
fn load_sample<'py>(py: Python<'py>, dir: PathBuf, frame_id: u32, config: Option<PathBuf>) -> PyResult<Bound<'py, PyDict>> {
    let cfg = match config {
        Some(p) => PipelineConfig::load(&p).map_err(py_err)?,
        None => PipelineConfig::default(),
    };
    let spec = cfg.frame_spec().map_err(|e| PyValueError::new_err(e.to_string()))?;
    let s = py.detach(|| read_sample(&dir, frame_id, &spec)).map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("frame_id", s.grid.frame_id)?;
    out.set_item("dims", spec.dims)?;
    out.set_item("voxel_size", spec.voxel_size)?;
    out.set_item("labels", s.grid.labels)?;
    for (name, vol) in [("invalid", &s.masks.invalid), ("surface", &s.masks.surface), ("occluded", &s.masks.occluded)] {
        let bytes: Vec<u8> = vol.bits.iter().map(|&b| b as u8).collect();
        out.set_item(name, PyBytes::new(py, &bytes))?;
    }
    match s.depth {
        Some(d) => out.set_item("depth", (d.width(), d.height(), d.into_vec()))?,
        None => out.set_item("depth", py.None())?,
    }
    Ok(out)
}

#[pymodule]
fn aerovox_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    m.add_function(wrap_pyfunction!(taxonomy, m)?)?;
    m.add_function(wrap_pyfunction!(load_point_cloud, m)?)?;
    m.add_function(wrap_pyfunction!(load_sample, m)?)?;
    Ok(())
}
