//! JSON interchange format for complexes: the dimension, the simplices of
//! every degree as sorted vertex lists, and optional vertex coordinates.

use serde::{Deserialize, Serialize};

use crate::complex::SimplicialComplex;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshFile {
    pub dimension: usize,
    pub simplices: Vec<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertices: Option<Vec<Vec<f64>>>,
}

impl MeshFile {
    pub fn new(complex: &SimplicialComplex, vertices: Option<Vec<Vec<f64>>>) -> Self {
        let n = complex.dimension();
        Self { dimension: n, simplices: (0..=n).map(|p| complex.simplices(p).to_vec()).collect(), vertices }
    }

    /// Rebuilds the complex, rejecting files that fail validation.
    pub fn complex(&self) -> Result<SimplicialComplex> {
        if self.simplices.len() != self.dimension + 1 {
            return Err(Error::Format(format!(
                "dimension {} needs {} simplex lists, found {}",
                self.dimension,
                self.dimension + 1,
                self.simplices.len()
            )));
        }
        let k = SimplicialComplex::from_simplex_lists(self.simplices.clone());
        let report = k.validate();
        if !report.is_empty() {
            return Err(Error::Format(format!("invalid complex: {report:?}")));
        }
        if let Some(v) = &self.vertices {
            if v.len() != k.count(0) {
                return Err(Error::Format(format!("{} coordinates for {} vertices", v.len(), k.count(0))));
            }
        }
        Ok(k)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders::build_icosphere;

    #[test]
    fn icosphere_round_trip_is_exact() {
        let (k, g, _) = build_icosphere(1).unwrap();
        let file = MeshFile::new(&k, Some(g.vertices().to_vec()));
        let back = MeshFile::from_json(&file.to_json().unwrap()).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.complex().unwrap(), *k);
    }

    #[test]
    fn missing_face_rejected() {
        let file = MeshFile { dimension: 1, simplices: vec![vec![vec![0], vec![1]], vec![vec![0, 2]]], vertices: None };
        assert!(matches!(file.complex(), Err(Error::Format(_))));
    }
}
