//! Oriented simplicial complexes and exact integer chain algebra.
//!
//! Simplices are stored as strictly increasing vertex tuples. The orientation of
//! a simplex is the one induced by that vertex order, so the face obtained by
//! dropping the vertex in position `k` enters the boundary with sign `(-1)^k`.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use nalgebra::DMatrix;
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use serde::Serialize;

use crate::error::{Error, Result};

/// Integer matrix in triplet form. Entries are unique per `(row, col)` and
/// stored in row-major order; explicit zeros are dropped on assembly.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntegerSparseMatrix {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, i64)>,
}

impl IntegerSparseMatrix {
    /// Assembles a matrix from triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: impl IntoIterator<Item = (usize, usize, i64)>) -> Self {
        let mut acc: BTreeMap<(usize, usize), i64> = BTreeMap::new();
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) outside {nrows}x{ncols}");
            *acc.entry((r, c)).or_insert(0) += v;
        }
        let entries = acc.into_iter().filter(|&(_, v)| v != 0).map(|((r, c), v)| (r, c, v)).collect();
        Self { nrows, ncols, entries }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, entries: Vec::new() }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn entries(&self) -> &[(usize, usize, i64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, row: usize, col: usize) -> i64 {
        self.entries
            .binary_search_by(|&(r, c, _)| (r, c).cmp(&(row, col)))
            .map(|i| self.entries[i].2)
            .unwrap_or(0)
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.ncols, self.nrows, self.entries.iter().map(|&(r, c, v)| (c, r, v)))
    }

    /// Exact integer product `self * rhs`.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.ncols != rhs.nrows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.nrows, self.ncols, rhs.nrows, rhs.ncols
            )));
        }
        let mut rhs_rows: Vec<Vec<(usize, i64)>> = vec![Vec::new(); rhs.nrows];
        for &(r, c, v) in &rhs.entries {
            rhs_rows[r].push((c, v));
        }
        let mut triplets = Vec::new();
        for &(r, k, a) in &self.entries {
            for &(c, b) in &rhs_rows[k] {
                triplets.push((r, c, a * b));
            }
        }
        Ok(Self::from_triplets(self.nrows, rhs.ncols, triplets))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for &(r, c, v) in &self.entries {
            m[(r, c)] = v as f64;
        }
        m
    }

    pub fn to_csr(&self) -> CsrMatrix<f64> {
        let mut coo = CooMatrix::new(self.nrows, self.ncols);
        for &(r, c, v) in &self.entries {
            coo.push(r, c, v as f64);
        }
        CsrMatrix::from(&coo)
    }
}

/// A finite oriented simplicial complex of dimension `n`.
///
/// `simplices[p]` lists the p-simplices; a simplex's position in that list is
/// its index for every matrix assembled over the complex.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimplicialComplex {
    simplices: Vec<Vec<Vec<usize>>>,
    lookup: Vec<HashMap<Vec<usize>, usize>>,
}

impl SimplicialComplex {
    /// Builds the closure of the given top-dimensional simplices. Each degree is
    /// listed in lexicographic order.
    pub fn from_top_simplices(dimension: usize, tops: &[Vec<usize>]) -> Result<Self> {
        let mut per_degree: Vec<BTreeSet<Vec<usize>>> = vec![BTreeSet::new(); dimension + 1];
        for top in tops {
            let mut s = top.clone();
            s.sort_unstable();
            if s.len() != dimension + 1 || s.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidParameter(format!(
                    "top simplex {top:?} is not a {dimension}-simplex"
                )));
            }
            insert_with_faces(&mut per_degree, s);
        }
        Ok(Self::from_simplex_lists(
            per_degree.into_iter().map(|set| set.into_iter().collect()).collect(),
        ))
    }

    /// Takes simplex lists verbatim, without closing under faces or removing
    /// duplicates. Use [`SimplicialComplex::validate`] to check the result.
    pub fn from_simplex_lists(simplices: Vec<Vec<Vec<usize>>>) -> Self {
        let lookup = simplices
            .iter()
            .map(|list| {
                let mut map = HashMap::with_capacity(list.len());
                for (i, s) in list.iter().enumerate() {
                    map.entry(s.clone()).or_insert(i);
                }
                map
            })
            .collect();
        Self { simplices, lookup }
    }

    /// The complex with a single vertex.
    pub fn point() -> Self {
        Self::from_simplex_lists(vec![vec![vec![0]]])
    }

    pub fn dimension(&self) -> usize {
        self.simplices.len().saturating_sub(1)
    }

    pub fn count(&self, p: usize) -> usize {
        self.simplices.get(p).map_or(0, Vec::len)
    }

    pub fn counts(&self) -> Vec<usize> {
        self.simplices.iter().map(Vec::len).collect()
    }

    pub fn simplices(&self, p: usize) -> &[Vec<usize>] {
        self.simplices.get(p).map_or(&[], Vec::as_slice)
    }

    pub fn vertex_count(&self) -> usize {
        self.count(0)
    }

    /// Index of a simplex given as a sorted vertex tuple.
    pub fn index_of(&self, simplex: &[usize]) -> Option<usize> {
        let p = simplex.len().checked_sub(1)?;
        self.lookup.get(p)?.get(simplex).copied()
    }

    /// Boundary operator `∂_p : C_p → C_{p-1}` for `1 ≤ p ≤ n`.
    ///
    /// Faces missing from the complex are skipped, which only happens for
    /// complexes that fail validation.
    pub fn boundary_matrix(&self, p: usize) -> Result<IntegerSparseMatrix> {
        let n = self.dimension();
        if p == 0 || p > n {
            return Err(Error::DegreeOutOfRange { degree: p, max: n });
        }
        let mut triplets = Vec::with_capacity(self.count(p) * (p + 1));
        for (col, s) in self.simplices[p].iter().enumerate() {
            for k in 0..s.len() {
                let face = omit(s, k);
                if let Some(row) = self.index_of(&face) {
                    triplets.push((row, col, if k % 2 == 0 { 1 } else { -1 }));
                }
            }
        }
        Ok(IntegerSparseMatrix::from_triplets(self.count(p - 1), self.count(p), triplets))
    }

    /// Coboundary `d_p : C^p → C^{p+1}`, i.e. `∂_{p+1}ᵀ`. For `p = n` this is the
    /// zero map into the trivial space.
    pub fn coboundary_matrix(&self, p: usize) -> Result<IntegerSparseMatrix> {
        let n = self.dimension();
        if p > n {
            return Err(Error::DegreeOutOfRange { degree: p, max: n });
        }
        if p == n {
            return Ok(IntegerSparseMatrix::zeros(0, self.count(n)));
        }
        Ok(self.boundary_matrix(p + 1)?.transpose())
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.simplices
            .iter()
            .enumerate()
            .map(|(p, list)| if p % 2 == 0 { list.len() as i64 } else { -(list.len() as i64) })
            .sum()
    }

    /// Checks closure under faces, duplicates, malformed tuples and `∂∂ = 0`.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        for (p, list) in self.simplices.iter().enumerate() {
            let mut seen = HashMap::new();
            for (i, s) in list.iter().enumerate() {
                if s.len() != p + 1 || s.windows(2).any(|w| w[0] >= w[1]) {
                    report.malformed.push(MalformedSimplex { degree: p, index: i, vertices: s.clone() });
                    continue;
                }
                if let Some(&first) = seen.get(s) {
                    report.duplicates.push(DuplicateSimplex { degree: p, first, duplicate: i, vertices: s.clone() });
                } else {
                    seen.insert(s.clone(), i);
                }
                if p > 0 {
                    for k in 0..s.len() {
                        let face = omit(s, k);
                        if self.index_of(&face).is_none() {
                            report.closure_violations.push(ClosureViolation { simplex: s.clone(), missing_face: face });
                        }
                    }
                }
            }
        }
        let n = self.dimension();
        for p in 1..n {
            if let (Ok(lower), Ok(upper)) = (self.boundary_matrix(p), self.boundary_matrix(p + 1)) {
                if let Ok(prod) = lower.matmul(&upper) {
                    if !prod.is_zero() {
                        report.boundary_defects.push(BoundaryDefect { degree: p, nonzeros: prod.entries().to_vec() });
                    }
                }
            }
        }
        report
    }
}

fn omit(s: &[usize], k: usize) -> Vec<usize> {
    s.iter().enumerate().filter(|&(i, _)| i != k).map(|(_, &v)| v).collect()
}

fn insert_with_faces(per_degree: &mut [BTreeSet<Vec<usize>>], s: Vec<usize>) {
    let p = s.len() - 1;
    if per_degree[p].contains(&s) {
        return;
    }
    if p > 0 {
        for k in 0..s.len() {
            insert_with_faces(per_degree, omit(&s, k));
        }
    }
    per_degree[p].insert(s);
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ClosureViolation {
    pub simplex: Vec<usize>,
    pub missing_face: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DuplicateSimplex {
    pub degree: usize,
    pub first: usize,
    pub duplicate: usize,
    pub vertices: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MalformedSimplex {
    pub degree: usize,
    pub index: usize,
    pub vertices: Vec<usize>,
}

/// Nonzero entries of `∂_p ∂_{p+1}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BoundaryDefect {
    pub degree: usize,
    pub nonzeros: Vec<(usize, usize, i64)>,
}

/// Diagnostics from [`SimplicialComplex::validate`]; empty iff the complex is valid.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub closure_violations: Vec<ClosureViolation>,
    pub duplicates: Vec<DuplicateSimplex>,
    pub malformed: Vec<MalformedSimplex>,
    pub boundary_defects: Vec<BoundaryDefect>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.closure_violations.is_empty()
            && self.duplicates.is_empty()
            && self.malformed.is_empty()
            && self.boundary_defects.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> SimplicialComplex {
        SimplicialComplex::from_top_simplices(2, &[vec![0, 1, 2]]).unwrap()
    }

    fn cycle(n: usize) -> SimplicialComplex {
        let edges: Vec<_> = (0..n).map(|i| vec![i, (i + 1) % n]).collect();
        SimplicialComplex::from_top_simplices(1, &edges).unwrap()
    }

    #[test]
    fn triangle_boundary_signs() {
        let k = triangle();
        assert_eq!(k.simplices(1), &[vec![0, 1], vec![0, 2], vec![1, 2]]);
        let b = k.boundary_matrix(2).unwrap();
        assert_eq!((b.nrows(), b.ncols()), (3, 1));
        assert_eq!(b.get(k.index_of(&[1, 2]).unwrap(), 0), 1);
        assert_eq!(b.get(k.index_of(&[0, 2]).unwrap(), 0), -1);
        assert_eq!(b.get(k.index_of(&[0, 1]).unwrap(), 0), 1);
    }

    #[test]
    fn cycle_edge_boundary() {
        let k = cycle(4);
        let b = k.boundary_matrix(1).unwrap();
        assert_eq!((b.nrows(), b.ncols()), (4, 4));
        for col in 0..4 {
            let column: Vec<i64> = (0..4).map(|r| b.get(r, col)).filter(|&v| v != 0).collect();
            assert_eq!(column.len(), 2);
            assert_eq!(column.iter().sum::<i64>(), 0);
        }
    }

    #[test]
    fn each_column_has_p_plus_one_unit_entries() {
        let k = SimplicialComplex::from_top_simplices(3, &[vec![0, 1, 2, 3], vec![1, 2, 3, 4]]).unwrap();
        for p in 1..=3 {
            let b = k.boundary_matrix(p).unwrap();
            let mut per_col = vec![0; b.ncols()];
            for &(_, c, v) in b.entries() {
                assert!(v == 1 || v == -1);
                per_col[c] += 1;
            }
            assert!(per_col.iter().all(|&n| n == p + 1));
        }
    }

    #[test]
    fn degree_out_of_range() {
        let k = triangle();
        assert!(matches!(k.boundary_matrix(0), Err(Error::DegreeOutOfRange { .. })));
        assert!(matches!(k.boundary_matrix(3), Err(Error::DegreeOutOfRange { .. })));
        assert!(matches!(k.coboundary_matrix(3), Err(Error::DegreeOutOfRange { .. })));
        assert_eq!(k.coboundary_matrix(2).unwrap().nrows(), 0);
    }

    #[test]
    fn boundary_squares_to_zero() {
        let k = SimplicialComplex::from_top_simplices(3, &[vec![0, 1, 2, 3], vec![0, 1, 2, 4], vec![2, 3, 4, 5]]).unwrap();
        for p in 1..3 {
            let prod = k.boundary_matrix(p).unwrap().matmul(&k.boundary_matrix(p + 1).unwrap()).unwrap();
            assert!(prod.is_zero());
        }
        assert!(k.validate().is_empty());
    }

    #[test]
    fn missing_edge_is_reported() {
        let k = SimplicialComplex::from_simplex_lists(vec![
            vec![vec![0], vec![1], vec![2]],
            vec![vec![0, 1], vec![1, 2]],
            vec![vec![0, 1, 2]],
        ]);
        let report = k.validate();
        assert_eq!(report.closure_violations.len(), 1);
        assert_eq!(report.closure_violations[0].missing_face, vec![0, 2]);
        assert!(report.duplicates.is_empty());
    }

    #[test]
    fn duplicate_edge_is_reported() {
        let k = SimplicialComplex::from_simplex_lists(vec![
            vec![vec![0], vec![1]],
            vec![vec![0, 1], vec![0, 1]],
        ]);
        let report = k.validate();
        assert_eq!(report.duplicates.len(), 1);
        assert_eq!(report.duplicates[0].vertices, vec![0, 1]);
        assert_eq!(report.duplicates[0].duplicate, 1);
        // validation is a pure query
        assert_eq!(k.validate(), report);
    }

    #[test]
    fn euler_characteristics() {
        assert_eq!(cycle(7).euler_characteristic(), 0);
        assert_eq!(triangle().euler_characteristic(), 1);
        assert_eq!(SimplicialComplex::point().euler_characteristic(), 1);
    }

    #[test]
    fn integer_matmul_dimension_check() {
        let a = IntegerSparseMatrix::zeros(2, 3);
        let b = IntegerSparseMatrix::zeros(2, 3);
        assert!(a.matmul(&b).is_err());
        let t = IntegerSparseMatrix::from_triplets(2, 2, [(0, 1, 2), (0, 1, -2), (1, 0, 3)]);
        assert_eq!(t.nnz(), 1);
        assert_eq!(t.transpose().get(0, 1), 3);
    }
}
