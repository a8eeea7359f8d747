//! Discrete fields attached to a mesh, either per node or per element.

use crate::error::{Error, Result};
use crate::hooke::KelvinVec;
use crate::mesh::Mesh2D;

/// Where a field's values live.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Association {
    PerNode,
    PerElement,
}

fn check_len(mesh: &Mesh2D, assoc: Association, len: usize) -> Result<()> {
    let want = match assoc {
        Association::PerNode => mesh.num_nodes(),
        Association::PerElement => mesh.num_elements(),
    };
    if len != want {
        return Err(Error::InvalidArgument(format!(
            "field length {len} does not match {assoc:?} count {want}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub association: Association,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(mesh: &Mesh2D, association: Association, values: Vec<f64>) -> Result<Self> {
        check_len(mesh, association, values.len())?;
        Ok(Self { association, values })
    }

    pub fn constant(mesh: &Mesh2D, association: Association, value: f64) -> Self {
        let n = match association {
            Association::PerNode => mesh.num_nodes(),
            Association::PerElement => mesh.num_elements(),
        };
        Self { association, values: vec![value; n] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub association: Association,
    pub values: Vec<[f64; 2]>,
}

impl VectorField {
    pub fn new(mesh: &Mesh2D, association: Association, values: Vec<[f64; 2]>) -> Result<Self> {
        check_len(mesh, association, values.len())?;
        Ok(Self { association, values })
    }
}

/// Symmetric 2x2 tensors stored as Kelvin 3-vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField2 {
    pub association: Association,
    pub values: Vec<KelvinVec>,
}

impl TensorField2 {
    pub fn new(mesh: &Mesh2D, association: Association, values: Vec<KelvinVec>) -> Result<Self> {
        check_len(mesh, association, values.len())?;
        Ok(Self { association, values })
    }
}
