//! Whitney-form Galerkin assembly of L² mass matrices and of the collapsed
//! inner products.
//!
//! For an isometric action with orthonormal Killing fields `X_1..X_m`, the
//! metric on forms of the collapsed manifold pulls back to the fixed mesh as
//!
//! ```text
//! ‖ω‖²_ε = ∫ ρ_ε⁻¹ ( |ω|² + Σ_k ε^{-2k} Σ_{j1<..<jk} |i_{X_j1} .. i_{X_jk} ω|² ) dvol
//! ρ_ε    = det^{1/2}( ε² Id + αᵀα )
//! ```
//!
//! where `α` maps the Lie algebra to the tangent space by evaluating the
//! fields. The overall ε-dependent constant is dropped: it cancels in every
//! pencil assembled here. Interior products are taken pointwise at the
//! quadrature nodes, after projecting each field onto the cell's tangent plane.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use rayon::prelude::*;

use crate::cohomology::coboundary_rank;
use crate::complex::SimplicialComplex;
use crate::error::{Error, Result};
use crate::geometry::{factorial, ActionData, Cell, GeometryData};

pub const MAX_GROUP_DIM: usize = 2;

/// Sorted `size`-subsets of `0..n`, in lexicographic order.
pub(crate) fn subsets(n: usize, size: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, size: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, size, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, size, &mut Vec::new(), &mut out);
    out
}

fn subset_index(sets: &[Vec<usize>], s: &[usize]) -> usize {
    sets.binary_search_by(|x| x.as_slice().cmp(s)).expect("subset present")
}

/// Pointwise algebra of p-covectors on an n-simplex, in the basis
/// `dλ_I = dλ_{i1} ∧ .. ∧ dλ_{ip}`, `I ⊂ {1..n}` (stored 0-based).
struct LocalForms {
    n: usize,
    bases: Vec<Vec<Vec<usize>>>,
}

impl LocalForms {
    fn new(n: usize) -> Self {
        Self { n, bases: (0..=n).map(|p| subsets(n, p)).collect() }
    }

    fn dim(&self, p: usize) -> usize {
        self.bases[p].len()
    }

    /// `dλ_v` as a covector over `dλ_1..dλ_n`; `dλ_0 = -Σ dλ_a`.
    fn dlambda(&self, v: usize) -> Vec<f64> {
        if v == 0 {
            vec![-1.0; self.n]
        } else {
            let mut c = vec![0.0; self.n];
            c[v - 1] = 1.0;
            c
        }
    }

    /// Wedge of 1-forms: the coefficient on `dλ_I` is the minor on columns `I`.
    fn wedge(&self, one_forms: &[Vec<f64>]) -> DVector<f64> {
        let p = one_forms.len();
        DVector::from_iterator(
            self.dim(p),
            self.bases[p].iter().map(|cols| {
                DMatrix::from_fn(p, p, |r, c| one_forms[r][cols[c]]).determinant()
            }),
        )
    }

    /// Constant parts of the Whitney form of local face `face`:
    /// `W(λ) = p! Σ_k (-1)^k λ_{face[k]} terms[k]`.
    fn whitney_terms(&self, face: &[usize]) -> Vec<DVector<f64>> {
        (0..face.len())
            .map(|k| {
                let others: Vec<Vec<f64>> =
                    face.iter().enumerate().filter(|&(i, _)| i != k).map(|(_, &v)| self.dlambda(v)).collect();
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                self.wedge(&others) * sign
            })
            .collect()
    }

    /// Pointwise inner product on p-covectors: minors of the inverse metric.
    fn inner_product(&self, p: usize, gram_inv: &DMatrix<f64>) -> DMatrix<f64> {
        let basis = &self.bases[p];
        DMatrix::from_fn(basis.len(), basis.len(), |a, b| {
            let (ia, ib) = (&basis[a], &basis[b]);
            DMatrix::from_fn(p, p, |r, c| gram_inv[(ia[r], ib[c])]).determinant()
        })
    }

    /// Matrix of `i_X : Λ^p → Λ^{p-1}` for a vector with `dλ_a(X) = c[a]`.
    fn interior(&self, p: usize, c: &DVector<f64>) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim(p - 1), self.dim(p));
        for (col, set) in self.bases[p].iter().enumerate() {
            for l in 0..p {
                let mut rest = set.clone();
                rest.remove(l);
                let row = subset_index(&self.bases[p - 1], &rest);
                let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
                m[(row, col)] += sign * c[set[l]];
            }
        }
        m
    }
}

/// Gram matrix `αᵀα` of the projected fields, in the cell metric.
fn orbit_gram(components: &[DVector<f64>], gram: &DMatrix<f64>) -> DMatrix<f64> {
    let m = components.len();
    DMatrix::from_fn(m, m, |i, j| components[i].dot(&(gram * &components[j])))
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveEpsilon(eps))
    }
}

/// `det^{1/2}(ε² Id + G)` for the orbit Gram matrix `G` of the full Lie algebra.
pub fn rho_from_orbit_gram(orbit_gram: &DMatrix<f64>, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    let m = orbit_gram.nrows();
    let shifted = orbit_gram + DMatrix::identity(m, m) * (eps * eps);
    Ok(shifted.determinant().sqrt())
}

/// The same density computed on the complement of the stabilizer algebra:
/// `ρ_ε = Π sqrt(ε² + μ_i)` over the `dim G - dim H` largest eigenvalues of
/// the orbit Gram matrix. Related to the full-algebra value by
/// `rho_from_orbit_gram = ε^{dim H} · rho_on_quotient_algebra`.
pub fn rho_on_quotient_algebra(orbit_gram: &DMatrix<f64>, stabilizer_dim: usize, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    let mut mu: Vec<f64> = orbit_gram.clone().symmetric_eigenvalues().iter().copied().collect();
    mu.sort_by(|a, b| b.total_cmp(a));
    let keep = mu.len().saturating_sub(stabilizer_dim);
    Ok(mu[..keep].iter().map(|&m| (eps * eps + m.max(0.0)).sqrt()).product())
}

/// `ρ_ε` from ambient field values, using the Euclidean inner product.
pub fn rho_from_fields(fields: &[DVector<f64>], eps: f64) -> Result<f64> {
    let m = fields.len();
    let g = DMatrix::from_fn(m, m, |i, j| fields[i].dot(&fields[j]));
    rho_from_orbit_gram(&g, eps)
}

/// Projected Killing-field components at a point of a cell.
pub fn projected_fields(action: &ActionData, geometry: &GeometryData, cell: &Cell, bary: &[f64]) -> Vec<DVector<f64>> {
    let x = geometry.projection().apply(cell.point_at(bary).as_slice());
    action.evaluate(&x).iter().map(|v| cell.tangent_components(v)).collect()
}

/// Orbit-volume density at a point of cell `cell` given by barycentric coordinates.
pub fn rho(action: &ActionData, geometry: &GeometryData, cell: usize, bary: &[f64], eps: f64) -> Result<f64> {
    let c = &geometry.cells()[cell];
    let comps = projected_fields(action, geometry, c, bary);
    rho_from_orbit_gram(&orbit_gram(&comps, &c.gram), eps)
}

/// `∫ ρ_ε⁻¹ dvol` by cell quadrature. Finite as ε → 0 whenever the orbits
/// are principal almost everywhere.
pub fn integrate_inverse_rho(action: &ActionData, geometry: &GeometryData, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    let q = geometry.quadrature();
    let mut total = 0.0;
    for (i, cell) in geometry.cells().iter().enumerate() {
        for (node, &w) in q.nodes.iter().zip(&q.weights) {
            total += w * cell.jacobian / rho(action, geometry, i, node, eps)?;
        }
    }
    Ok(total)
}

/// Local data at one quadrature node.
#[derive(Clone, Debug)]
struct NodeTerms {
    /// Quadrature weight times Jacobian.
    weight: f64,
    orbit_gram: DMatrix<f64>,
    /// `(k, L)`: for each set of `k` fields, `L = (P W)ᵀ Q (P W)` with `P` the
    /// iterated contraction and `W` the Whitney values.
    terms: Vec<(usize, DMatrix<f64>)>,
}

#[derive(Clone, Debug)]
struct CellTerms {
    faces: Vec<usize>,
    nodes: Vec<NodeTerms>,
}

#[derive(Clone, Debug)]
struct DegreeTerms {
    cells: Vec<CellTerms>,
    plain: CsrMatrix<f64>,
}

/// The ε-family of weighted mass matrices of a mesh with an optional action.
#[derive(Clone, Debug)]
pub struct MassFamily {
    geometry: Arc<GeometryData>,
    action: Option<ActionData>,
    degrees: Vec<DegreeTerms>,
    coboundaries: Vec<CsrMatrix<f64>>,
    ranks: Vec<OnceLock<usize>>,
}

impl MassFamily {
    pub fn new(geometry: Arc<GeometryData>, action: Option<ActionData>) -> Result<Self> {
        if let Some(a) = &action {
            if a.group_dim() > MAX_GROUP_DIM {
                return Err(Error::UnsupportedGroupDimension(a.group_dim()));
            }
        }
        let complex = geometry.complex_arc();
        let n = complex.dimension();
        let local = LocalForms::new(n);
        let local_faces: Vec<Vec<Vec<usize>>> = (0..=n).map(|p| subsets(n + 1, p + 1)).collect();
        let q = geometry.quadrature();
        let tops = complex.simplices(n);

        // per cell, per node: projected field components and orbit Gram
        let fields_per_cell: Vec<Vec<(Vec<DVector<f64>>, DMatrix<f64>)>> = geometry
            .cells()
            .iter()
            .map(|cell| {
                q.nodes
                    .iter()
                    .map(|node| match &action {
                        Some(a) => {
                            let comps = projected_fields(a, &geometry, cell, node);
                            let g = orbit_gram(&comps, &cell.gram);
                            (comps, g)
                        }
                        None => (Vec::new(), DMatrix::zeros(0, 0)),
                    })
                    .collect()
            })
            .collect();

        let mut degrees = Vec::with_capacity(n + 1);
        for p in 0..=n {
            let faces = &local_faces[p];
            let whitney: Vec<Vec<DVector<f64>>> = faces.iter().map(|f| local.whitney_terms(f)).collect();
            let cells: Vec<CellTerms> = tops
                .par_iter()
                .zip(geometry.cells().par_iter())
                .zip(fields_per_cell.par_iter())
                .map(|((top, cell), node_fields)| {
                    let global: Vec<usize> = faces
                        .iter()
                        .map(|f| {
                            let verts: Vec<usize> = f.iter().map(|&i| top[i]).collect();
                            complex.index_of(&verts).expect("face of a top simplex")
                        })
                        .collect();
                    let nodes = q
                        .nodes
                        .iter()
                        .zip(&q.weights)
                        .zip(node_fields)
                        .map(|((bary, &w), (comps, og))| {
                            node_terms(&local, p, cell, bary, w, faces, &whitney, comps, og)
                        })
                        .collect();
                    CellTerms { faces: global, nodes }
                })
                .collect();
            let plain = assemble(complex.count(p), &cells, |node| {
                node.terms.iter().filter(|(k, _)| *k == 0).map(|(_, l)| l * node.weight).sum()
            });
            degrees.push(DegreeTerms { cells, plain });
        }
        let coboundaries = (0..n).map(|p| complex.coboundary_matrix(p).map(|d| d.to_csr())).collect::<Result<_>>()?;
        let ranks = (0..=n).map(|_| OnceLock::new()).collect();
        Ok(Self { geometry, action, degrees, coboundaries, ranks })
    }

    pub fn geometry(&self) -> &GeometryData {
        &self.geometry
    }

    pub fn complex(&self) -> &SimplicialComplex {
        self.geometry.complex()
    }

    pub fn action(&self) -> Option<&ActionData> {
        self.action.as_ref()
    }

    pub fn dimension(&self) -> usize {
        self.complex().dimension()
    }

    /// Real rank of `d_q`, computed once per degree.
    pub fn coboundary_rank(&self, q: usize) -> Result<usize> {
        self.check_degree(q)?;
        if let Some(&r) = self.ranks[q].get() {
            return Ok(r);
        }
        let (r, _) = coboundary_rank(self.complex(), q)?;
        Ok(*self.ranks[q].get_or_init(|| r))
    }

    /// `dim Ker d_q`.
    pub fn cocycle_dim(&self, q: usize) -> Result<usize> {
        Ok(self.complex().count(q) - self.coboundary_rank(q)?)
    }

    /// `b_q = dim Ker d_q - rank d_{q-1}`.
    pub fn betti_number(&self, q: usize) -> Result<usize> {
        let exact = if q == 0 { 0 } else { self.coboundary_rank(q - 1)? };
        Ok(self.cocycle_dim(q)? - exact)
    }

    fn check_degree(&self, p: usize) -> Result<()> {
        let n = self.dimension();
        if p > n {
            Err(Error::DegreeOutOfRange { degree: p, max: n })
        } else {
            Ok(())
        }
    }

    /// L² mass matrix of the plain (uncollapsed) metric.
    pub fn plain_mass(&self, p: usize) -> Result<&CsrMatrix<f64>> {
        self.check_degree(p)?;
        Ok(&self.degrees[p].plain)
    }

    /// Coboundary `d_p` as a floating-point matrix.
    pub fn coboundary(&self, p: usize) -> Result<&CsrMatrix<f64>> {
        if p >= self.dimension() {
            return Err(Error::DegreeOutOfRange { degree: p, max: self.dimension().saturating_sub(1) });
        }
        Ok(&self.coboundaries[p])
    }

    /// Weighted mass matrix of the collapsed inner product at `eps`.
    pub fn weighted_mass_matrix(&self, eps: f64, p: usize) -> Result<CsrMatrix<f64>> {
        check_eps(eps)?;
        self.check_degree(p)?;
        if self.action.is_none() {
            return Ok(self.degrees[p].plain.clone());
        }
        let degree = &self.degrees[p];
        let inv_eps2 = 1.0 / (eps * eps);
        // ρ_ε evaluation cannot fail once eps is checked
        Ok(assemble(self.complex().count(p), &degree.cells, |node| {
            let rho = rho_from_orbit_gram(&node.orbit_gram, eps).expect("eps checked");
            let mut local = DMatrix::zeros(node.terms[0].1.nrows(), node.terms[0].1.ncols());
            for (k, l) in &node.terms {
                local += l * inv_eps2.powi(*k as i32);
            }
            local * (node.weight / rho)
        }))
    }

    /// `D_{p-1}ᵀ M_ε^{(p)} D_{p-1}`: the form `θ ↦ ‖dθ‖²_ε` on (p-1)-cochains.
    pub fn coboundary_stiffness(&self, eps: f64, p: usize) -> Result<CsrMatrix<f64>> {
        let n = self.dimension();
        if p == 0 || p > n {
            return Err(Error::DegreeOutOfRange { degree: p, max: n });
        }
        let m = self.weighted_mass_matrix(eps, p)?;
        let d = self.coboundary(p - 1)?;
        let dt = d.transpose();
        Ok(&dt * &(&m * d))
    }
}

#[allow(clippy::too_many_arguments)]
fn node_terms(
    local: &LocalForms,
    p: usize,
    cell: &Cell,
    bary: &[f64],
    weight: f64,
    faces: &[Vec<usize>],
    whitney: &[Vec<DVector<f64>>],
    comps: &[DVector<f64>],
    orbit_gram: &DMatrix<f64>,
) -> NodeTerms {
    let scale = factorial(p);
    let mut values = DMatrix::zeros(local.dim(p), faces.len());
    for (j, (face, terms)) in faces.iter().zip(whitney).enumerate() {
        let mut v = DVector::zeros(local.dim(p));
        for (&vertex, t) in face.iter().zip(terms) {
            v.axpy(scale * bary[vertex], t, 1.0);
        }
        values.set_column(j, &v);
    }
    let mut terms = Vec::new();
    for k in 0..=comps.len().min(p) {
        let q = local.inner_product(p - k, &cell.gram_inv);
        for set in subsets(comps.len(), k) {
            // i_{X_j1} .. i_{X_jk}: apply the last field first
            let mut contracted = values.clone();
            let mut degree = p;
            for &j in set.iter().rev() {
                contracted = local.interior(degree, &comps[j]) * contracted;
                degree -= 1;
            }
            let l = contracted.transpose() * &q * &contracted;
            terms.push((k, (&l + l.transpose()) * 0.5));
        }
    }
    NodeTerms { weight: weight * cell.jacobian, orbit_gram: orbit_gram.clone(), terms }
}

/// Sums per-node local matrices into a global matrix. Local contributions are
/// computed in parallel and accumulated in cell order, so the result does not
/// depend on the number of worker threads.
fn assemble(size: usize, cells: &[CellTerms], local: impl Fn(&NodeTerms) -> DMatrix<f64> + Sync) -> CsrMatrix<f64> {
    let locals: Vec<DMatrix<f64>> = cells
        .par_iter()
        .map(|c| {
            let nf = c.faces.len();
            c.nodes.iter().fold(DMatrix::zeros(nf, nf), |acc, node| acc + local(node))
        })
        .collect();
    let mut coo = CooMatrix::new(size, size);
    for (c, m) in cells.iter().zip(&locals) {
        for (a, &ga) in c.faces.iter().enumerate() {
            for (b, &gb) in c.faces.iter().enumerate() {
                coo.push(ga, gb, m[(a, b)]);
            }
        }
    }
    CsrMatrix::from(&coo)
}
