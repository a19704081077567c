//! Piecewise-flat metrics, quadrature, and isometric group actions.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::complex::SimplicialComplex;
use crate::error::{Error, Result};

/// Quadrature on the reference simplex. Nodes are barycentric coordinates and
/// the weights sum to the reference volume `1/n!`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// Interior-node rule exact for polynomials of degree 2, for `n ≤ 3`.
    pub fn degree_two(n: usize) -> Result<Self> {
        let rule = match n {
            0 => Self { nodes: vec![vec![1.0]], weights: vec![1.0] },
            1 => {
                let h = 0.5 / 3f64.sqrt();
                Self { nodes: vec![vec![0.5 + h, 0.5 - h], vec![0.5 - h, 0.5 + h]], weights: vec![0.5, 0.5] }
            }
            2 => {
                let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
                Self {
                    nodes: vec![vec![a, b, b], vec![b, a, b], vec![b, b, a]],
                    weights: vec![1.0 / 6.0; 3],
                }
            }
            3 => {
                let a = (5.0 + 3.0 * 5f64.sqrt()) / 20.0;
                let b = (5.0 - 5f64.sqrt()) / 20.0;
                Self {
                    nodes: vec![vec![a, b, b, b], vec![b, a, b, b], vec![b, b, a, b], vec![b, b, b, a]],
                    weights: vec![1.0 / 24.0; 4],
                }
            }
            _ => return Err(Error::InvalidParameter(format!("no quadrature rule for dimension {n}"))),
        };
        Ok(rule)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// How a point of an affine simplex is carried onto the smooth manifold the
/// mesh approximates, for evaluating Killing fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Projection {
    Identity,
    UnitSphere,
}

impl Projection {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Projection::Identity => x.to_vec(),
            Projection::UnitSphere => {
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                x.iter().map(|v| v / r).collect()
            }
        }
    }
}

/// One top simplex with its constant metric.
#[derive(Clone, Debug)]
pub struct Cell {
    /// Ambient coordinates of the local vertices, in the simplex's vertex order.
    pub points: Vec<DVector<f64>>,
    /// Columns are the edge vectors `v_a - v_0`, `a = 1..n`.
    pub edges: DMatrix<f64>,
    pub gram: DMatrix<f64>,
    pub gram_inv: DMatrix<f64>,
    /// `sqrt(det gram)`, the Jacobian of the reference map.
    pub jacobian: f64,
}

impl Cell {
    fn new(index: usize, points: Vec<DVector<f64>>) -> Result<Self> {
        let n = points.len() - 1;
        let ambient = points[0].len();
        let mut edges = DMatrix::zeros(ambient, n);
        for a in 0..n {
            edges.set_column(a, &(&points[a + 1] - &points[0]));
        }
        let gram = edges.transpose() * &edges;
        let chol = gram.clone().cholesky().ok_or(Error::DegenerateSimplex { index })?;
        let det: f64 = chol.l().diagonal().iter().map(|d| d * d).product();
        if !(det > 0.0) || !det.is_finite() {
            return Err(Error::DegenerateSimplex { index });
        }
        let gram_inv = chol.inverse();
        Ok(Self { points, edges, gram, gram_inv, jacobian: det.sqrt() })
    }

    pub fn dimension(&self) -> usize {
        self.points.len() - 1
    }

    pub fn volume(&self) -> f64 {
        self.jacobian / factorial(self.dimension())
    }

    /// Ambient point with the given barycentric coordinates.
    pub fn point_at(&self, bary: &[f64]) -> DVector<f64> {
        let mut x = DVector::zeros(self.points[0].len());
        for (p, &w) in self.points.iter().zip(bary) {
            x.axpy(w, p, 1.0);
        }
        x
    }

    /// Components `c_a = dλ_a(X)` of the orthogonal projection of an ambient
    /// vector onto the simplex's tangent plane, in the edge basis.
    pub fn tangent_components(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.gram_inv * (self.edges.transpose() * v)
    }
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Vertex embedding plus per-top-simplex flat metrics and a quadrature rule.
#[derive(Clone, Debug)]
pub struct GeometryData {
    complex: Arc<SimplicialComplex>,
    vertices: Vec<Vec<f64>>,
    cells: Vec<Cell>,
    quadrature: QuadratureRule,
    projection: Projection,
}

impl GeometryData {
    /// Geometry induced by a global vertex embedding.
    pub fn from_vertices(complex: Arc<SimplicialComplex>, vertices: Vec<Vec<f64>>, projection: Projection) -> Result<Self> {
        if vertices.len() != complex.vertex_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} coordinates for {} vertices",
                vertices.len(),
                complex.vertex_count()
            )));
        }
        let n = complex.dimension();
        let cell_points = complex
            .simplices(n)
            .iter()
            .map(|s| s.iter().map(|&v| vertices[v].clone()).collect())
            .collect();
        Self::from_cell_points(complex, vertices, cell_points, projection)
    }

    /// Geometry from explicit local coordinates per top simplex, for meshes
    /// whose cells do not embed globally (periodic domains).
    pub fn from_cell_points(
        complex: Arc<SimplicialComplex>,
        vertices: Vec<Vec<f64>>,
        cell_points: Vec<Vec<Vec<f64>>>,
        projection: Projection,
    ) -> Result<Self> {
        let n = complex.dimension();
        if cell_points.len() != complex.count(n) {
            return Err(Error::DimensionMismatch("one point list per top simplex required".into()));
        }
        let cells = cell_points
            .into_iter()
            .enumerate()
            .map(|(i, pts)| {
                if pts.len() != n + 1 {
                    return Err(Error::DimensionMismatch(format!("cell {i} has {} points", pts.len())));
                }
                Cell::new(i, pts.into_iter().map(DVector::from_vec).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        let quadrature = QuadratureRule::degree_two(n)?;
        Ok(Self { complex, vertices, cells, quadrature, projection })
    }

    pub fn complex(&self) -> &SimplicialComplex {
        &self.complex
    }

    pub fn complex_arc(&self) -> Arc<SimplicialComplex> {
        Arc::clone(&self.complex)
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub fn ambient_dimension(&self) -> usize {
        self.cells.first().map_or(0, |c| c.points[0].len())
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn quadrature(&self) -> &QuadratureRule {
        &self.quadrature
    }

    pub fn projection(&self) -> Projection {
        self.projection
    }

    pub fn volume(&self) -> f64 {
        self.cells.iter().map(Cell::volume).sum()
    }

    /// Uniform scaling of every cell by `factor` (metric scales by `factor²`).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        self.rescale_cells(|_| factor)
    }

    /// Multiplies the metric of cell `i` by `exp(u[i])`, realized by scaling
    /// the cell about its centroid by `exp(u[i] / 2)`. The result is a
    /// piecewise-flat metric that need not agree across shared faces.
    pub fn conformally_perturbed(&self, u: &[f64]) -> Result<Self> {
        if u.len() != self.cells.len() {
            return Err(Error::DimensionMismatch("one conformal factor per top simplex required".into()));
        }
        self.rescale_cells(|i| (0.5 * u[i]).exp())
    }

    fn rescale_cells(&self, factor: impl Fn(usize) -> f64) -> Result<Self> {
        let cell_points = self
            .cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let f = factor(i);
                let centroid = c.points.iter().fold(DVector::zeros(c.points[0].len()), |acc, p| acc + p)
                    / c.points.len() as f64;
                c.points.iter().map(|p| (&centroid + (p - &centroid) * f).as_slice().to_vec()).collect()
            })
            .collect();
        Self::from_cell_points(self.complex_arc(), self.vertices.clone(), cell_points, self.projection)
    }

    /// Integrates a function of the manifold point over the mesh with the
    /// cell quadrature.
    pub fn integrate(&self, f: impl Fn(usize, &[f64]) -> f64) -> f64 {
        let mut total = 0.0;
        for (i, cell) in self.cells.iter().enumerate() {
            for (node, &w) in self.quadrature.nodes.iter().zip(&self.quadrature.weights) {
                let x = self.projection.apply(cell.point_at(node).as_slice());
                total += w * cell.jacobian * f(i, &x);
            }
        }
        total
    }
}

pub type KillingField = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// An isometric action of a compact group, given by the Killing fields of an
/// orthonormal basis of its Lie algebra.
#[derive(Clone)]
pub struct ActionData {
    fields: Vec<KillingField>,
    stabilizer_dim: usize,
    tag: String,
}

impl fmt::Debug for ActionData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ActionData")
            .field("group_dim", &self.fields.len())
            .field("stabilizer_dim", &self.stabilizer_dim)
            .field("tag", &self.tag)
            .finish()
    }
}

impl ActionData {
    pub fn new(fields: Vec<KillingField>, stabilizer_dim: usize, tag: impl Into<String>) -> Result<Self> {
        if fields.is_empty() {
            return Err(Error::InvalidParameter("an action needs at least one Killing field".into()));
        }
        if stabilizer_dim > fields.len() {
            return Err(Error::InvalidParameter("stabilizer larger than the group".into()));
        }
        Ok(Self { fields, stabilizer_dim, tag: tag.into() })
    }

    /// Rotation of R³ about the z-axis.
    pub fn z_rotation() -> Self {
        Self::new(vec![Arc::new(|x: &[f64]| vec![-x[1], x[0], 0.0])], 0, "rotation").expect("one field")
    }

    /// Hopf circle action on S³ ⊂ R⁴.
    pub fn hopf() -> Self {
        Self::new(vec![Arc::new(|x: &[f64]| vec![-x[1], x[0], -x[3], x[2]])], 0, "hopf").expect("one field")
    }

    /// Unit translation along the first coordinate axis of R^dim.
    pub fn translation(dim: usize) -> Self {
        Self::new(
            vec![Arc::new(move |_: &[f64]| {
                let mut v = vec![0.0; dim];
                v[0] = 1.0;
                v
            })],
            0,
            "translation",
        )
        .expect("one field")
    }

    pub fn group_dim(&self) -> usize {
        self.fields.len()
    }

    pub fn stabilizer_dim(&self) -> usize {
        self.stabilizer_dim
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn fields(&self) -> &[KillingField] {
        &self.fields
    }

    /// Evaluates all fields at a manifold point.
    pub fn evaluate(&self, x: &[f64]) -> Vec<DVector<f64>> {
        self.fields.iter().map(|f| DVector::from_vec(f(x))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_weights_sum_to_reference_volume() {
        for n in 0..=3 {
            let q = QuadratureRule::degree_two(n).unwrap();
            let total: f64 = q.weights.iter().sum();
            assert!((total - 1.0 / factorial(n)).abs() < 1e-15);
            assert!(q.weights.iter().all(|&w| w > 0.0));
            for node in &q.nodes {
                assert!((node.iter().sum::<f64>() - 1.0).abs() < 1e-15);
                assert!(node.iter().all(|&b| b > 0.0));
            }
        }
        assert!(QuadratureRule::degree_two(4).is_err());
    }

    #[test]
    fn quadrature_is_exact_for_quadratics() {
        // ∫_ref λ_i λ_j = (1 + δ_ij) / (n + 2)!
        for n in 1..=3 {
            let q = QuadratureRule::degree_two(n).unwrap();
            for i in 0..=n {
                for j in 0..=n {
                    let approx: f64 = q.nodes.iter().zip(&q.weights).map(|(b, w)| w * b[i] * b[j]).sum();
                    let exact = if i == j { 2.0 } else { 1.0 } / factorial(n + 2);
                    assert!((approx - exact).abs() < 1e-15, "n={n} i={i} j={j}");
                }
            }
        }
    }

    #[test]
    fn degenerate_cell_rejected() {
        let k = Arc::new(SimplicialComplex::from_top_simplices(2, &[vec![0, 1, 2]]).unwrap());
        let verts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0]];
        assert!(matches!(
            GeometryData::from_vertices(k, verts, Projection::Identity),
            Err(Error::DegenerateSimplex { index: 0 })
        ));
    }

    #[test]
    fn tangent_projection_in_a_plane() {
        let pts = vec![
            DVector::from_vec(vec![0.0, 0.0, 0.0]),
            DVector::from_vec(vec![2.0, 0.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0, 0.0]),
        ];
        let cell = Cell::new(0, pts).unwrap();
        let c = cell.tangent_components(&DVector::from_vec(vec![1.0, 1.0, 5.0]));
        assert!((c[0] - 0.5).abs() < 1e-15 && (c[1] - 1.0).abs() < 1e-15);
        assert!((cell.volume() - 1.0).abs() < 1e-15);
    }
}
