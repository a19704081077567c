//! Generalized symmetric eigenproblems `A v = λ B v` with `B` positive-definite.
//!
//! Two routes are available: a dense direct solve (Cholesky reduction to a
//! standard symmetric problem) and a blocked LOBPCG iteration with
//! B-inner products, a shift-invert preconditioner, and optional deflation of
//! a known subspace. Small pencils use the dense route by default; the dense
//! route also serves as the oracle for the iterative one.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix, CsrMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feec::MassFamily;
use crate::sparse::{csr_to_dense, permute_symmetric, reverse_cuthill_mckee};

/// Eigenvalues below this fraction of the largest in the computed window are zero modes.
pub const ZERO_MODE_TOLERANCE: f64 = 1e-8;
/// Relative gap under which neighboring eigenvalues are reported as one multiple eigenvalue.
pub const MULTIPLICITY_GAP: f64 = 1e-6;
/// Bound on `‖Av − λBv‖ / (‖Bv‖ max(1, λ))` for every reported pair.
pub const RESIDUAL_BOUND: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverMethod {
    /// Dense below `dense_limit`, iterative above.
    Auto,
    Dense,
    Iterative,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    pub method: SolverMethod,
    /// Relative residual tolerance of the iterative solver.
    pub tol: f64,
    pub max_iterations: usize,
    pub seed: u64,
    pub dense_limit: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { method: SolverMethod::Auto, tol: 1e-10, max_iterations: 500, seed: 0x5eed, dense_limit: 2000 }
    }
}

impl SolverOptions {
    fn resolve(&self, size: usize) -> SolverMethod {
        match self.method {
            SolverMethod::Auto if size <= self.dense_limit => SolverMethod::Dense,
            SolverMethod::Auto => SolverMethod::Iterative,
            m => m,
        }
    }
}

/// Eigenvalue window of one pencil.
///
/// For raw pencil solves `eigenvalues` is the full window of smallest
/// eigenvalues, zero modes included. For the Laplacian spectra
/// ([`spectrum_im_d`], [`hodge_spectrum`]) it holds only the positive
/// eigenvalues `λ_1 ≤ λ_2 ≤ …`, and `zero_modes` counts the kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub degree: usize,
    /// Collapse parameter; 0 for raw pencil solves.
    pub eps: f64,
    pub eigenvalues: Vec<f64>,
    pub zero_modes: usize,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub method: SolverMethod,
    /// `(value, multiplicity)` groups of `eigenvalues`.
    pub multiplicities: Vec<(f64, usize)>,
}

/// Groups ascending eigenvalues whose relative gaps are below [`MULTIPLICITY_GAP`].
pub fn group_multiplicities(values: &[f64]) -> Vec<(f64, usize)> {
    let mut groups: Vec<(f64, usize)> = Vec::new();
    let mut last = f64::NAN;
    for &v in values {
        match groups.last_mut() {
            Some(g) if (v - last).abs() <= MULTIPLICITY_GAP * v.abs().max(last.abs()) => {
                g.0 = (g.0 * g.1 as f64 + v) / (g.1 + 1) as f64;
                g.1 += 1;
            }
            _ => groups.push((v, 1)),
        }
        last = v;
    }
    groups
}

/// Symmetric linear operator acting on blocks of column vectors.
pub trait SymmetricOperator: Sync {
    fn size(&self) -> usize;
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64>;
}

impl SymmetricOperator for CsrMatrix<f64> {
    fn size(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self * x
    }
}

impl SymmetricOperator for DMatrix<f64> {
    fn size(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self * x
    }
}

/// Approximate inverse applied to residual blocks.
pub enum Preconditioner {
    Identity,
    Dense(Cholesky<f64, Dyn>),
    /// Sparse Cholesky factor of a reverse Cuthill–McKee permuted matrix.
    Sparse { factor: CscCholesky<f64>, perm: Vec<usize> },
}

impl Preconditioner {
    /// Factorization of the SPD matrix `m`.
    pub fn sparse_cholesky(m: &CsrMatrix<f64>) -> Result<Self> {
        let perm = reverse_cuthill_mckee(m);
        let permuted = permute_symmetric(m, &perm);
        let factor = CscCholesky::factor(&CscMatrix::from(&permuted))
            .map_err(|e| Error::NotPositiveDefinite(format!("sparse Cholesky failed: {e:?}")))?;
        Ok(Self::Sparse { factor, perm })
    }

    pub fn apply(&self, r: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Preconditioner::Identity => r.clone(),
            Preconditioner::Dense(chol) => chol.solve(r),
            Preconditioner::Sparse { factor, perm } => {
                let permuted = DMatrix::from_fn(r.nrows(), r.ncols(), |i, j| r[(perm[i], j)]);
                let sol = factor.solve(&permuted);
                let mut out = DMatrix::zeros(r.nrows(), r.ncols());
                for (new, &old) in perm.iter().enumerate() {
                    out.row_mut(old).copy_from(&sol.row(new));
                }
                out
            }
        }
    }
}

/// All eigenpairs of a dense pencil, ascending, with B-orthonormal vectors.
pub fn dense_generalized_eigen(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if a.shape() != b.shape() || a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!("pencil shapes {:?} and {:?}", a.shape(), b.shape())));
    }
    let chol = b.clone().cholesky().ok_or_else(|| Error::NotPositiveDefinite("B in dense solve".into()))?;
    let l = chol.l();
    let linv_a = l.solve_lower_triangular(a).expect("nonsingular factor");
    let c = l.solve_lower_triangular(&linv_a.transpose()).expect("nonsingular factor");
    let c = (&c + c.transpose()) * 0.5;
    let eig = c.symmetric_eigen();
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let u = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    let vectors = l.transpose().solve_upper_triangular(&u).expect("nonsingular factor");
    Ok((values, vectors))
}

/// Residual norms `‖A v − λ B v‖` and the normalizers `‖B v‖ max(1, |λ|)`.
fn residuals(av: &DMatrix<f64>, bv: &DMatrix<f64>, values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    values
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let r = (av.column(i) - bv.column(i) * l).norm();
            (r, bv.column(i).norm() * l.abs().max(1.0))
        })
        .unzip()
}

fn check_residuals(res: &[f64], scale: &[f64], iterations: usize) -> Result<Vec<f64>> {
    let relative: Vec<f64> = res.iter().zip(scale).map(|(r, s)| r / s).collect();
    let worst = relative.iter().fold(0.0f64, |a, &r| a.max(r));
    if worst > RESIDUAL_BOUND || worst.is_nan() {
        return Err(Error::NotConverged { iterations, max_residual: worst, residuals: relative });
    }
    Ok(relative)
}

/// Raw output of an eigensolver run.
#[derive(Clone, Debug)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
    /// Relative residuals `‖Av − λBv‖ / (‖Bv‖ max(1, λ))`.
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

/// Rayleigh–Ritz on the span of `s`, B-orthonormalizing the basis through
/// the eigendecomposition of its scaled Gram matrix so that nearly dependent
/// directions are dropped. Returns Ritz values and coefficient vectors.
fn rayleigh_ritz(s: &DMatrix<f64>, a_s: &DMatrix<f64>, b_s: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let gram = s.transpose() * b_s;
    let gram = (&gram + gram.transpose()) * 0.5;
    let cols = gram.ncols();
    let d: Vec<f64> = (0..cols).map(|i| if gram[(i, i)] > 0.0 { 1.0 / gram[(i, i)].sqrt() } else { 0.0 }).collect();
    let scaled = DMatrix::from_fn(cols, cols, |i, j| gram[(i, j)] * d[i] * d[j]);
    let eig = scaled.symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v));
    let keep: Vec<usize> = (0..cols).filter(|&i| eig.eigenvalues[i] > 1e-12 * top).collect();
    let t = DMatrix::from_fn(cols, keep.len(), |i, c| {
        d[i] * eig.eigenvectors[(i, keep[c])] / eig.eigenvalues[keep[c]].sqrt()
    });
    let h = t.transpose() * (s.transpose() * a_s) * &t;
    let h = (&h + h.transpose()) * 0.5;
    let small = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..keep.len()).collect();
    order.sort_by(|&i, &j| small.eigenvalues[i].total_cmp(&small.eigenvalues[j]));
    let values = order.iter().map(|&i| small.eigenvalues[i]).collect();
    let z = DMatrix::from_fn(keep.len(), keep.len(), |r, c| small.eigenvectors[(r, order[c])]);
    (values, t * z)
}

fn hcat(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks[0].nrows();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.columns_mut(at, b.ncols()).copy_from(b);
        at += b.ncols();
    }
    out
}

/// Removes the B-components along the B-orthonormal columns of `y`.
struct Deflation<'a> {
    y: &'a DMatrix<f64>,
    by: DMatrix<f64>,
}

impl Deflation<'_> {
    fn project(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        if self.y.ncols() == 0 {
            return w.clone();
        }
        w - self.y * (self.by.transpose() * w)
    }
}

/// B-orthonormalizes the columns of `v` (SVQB), dropping directions whose
/// scaled Gram eigenvalue falls below `drop` relative to the largest.
fn svqb(v: &DMatrix<f64>, b: &dyn SymmetricOperator, drop: f64) -> DMatrix<f64> {
    if v.ncols() == 0 {
        return v.clone();
    }
    let gram = v.transpose() * b.apply(v);
    let gram = (&gram + gram.transpose()) * 0.5;
    let cols = gram.ncols();
    let d: Vec<f64> = (0..cols).map(|i| if gram[(i, i)] > 0.0 { 1.0 / gram[(i, i)].sqrt() } else { 0.0 }).collect();
    let scaled = DMatrix::from_fn(cols, cols, |i, j| gram[(i, j)] * d[i] * d[j]);
    let eig = scaled.symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v));
    let keep: Vec<usize> = (0..cols).filter(|&i| eig.eigenvalues[i] > drop * top).collect();
    let t = DMatrix::from_fn(cols, keep.len(), |i, c| d[i] * eig.eigenvectors[(i, keep[c])] / eig.eigenvalues[keep[c]].sqrt());
    v * t
}

/// Projects `v` off the B-orthonormal `basis` (twice) and B-orthonormalizes
/// what is left.
fn orthogonal_complement(v: &DMatrix<f64>, basis: &DMatrix<f64>, b_basis: &DMatrix<f64>, b: &dyn SymmetricOperator) -> DMatrix<f64> {
    let project = |v: &DMatrix<f64>| {
        let mut v = v - basis * (b_basis.transpose() * v);
        v -= basis * (b_basis.transpose() * &v);
        v
    };
    let v = svqb(&project(v), b, 1e-10);
    svqb(&project(&v), b, 1e-10)
}

/// LOBPCG for the `k` smallest eigenpairs of `(A, B)` in the B-orthogonal
/// complement of `constraints` (whose columns must be B-orthonormal).
/// Converged columns stay in the Ritz basis but stop contributing search
/// directions; the W and P blocks are explicitly B-orthogonalized against
/// the current iterate so that the Rayleigh–Ritz basis stays well conditioned.
pub fn lobpcg(
    a: &dyn SymmetricOperator,
    b: &dyn SymmetricOperator,
    precond: &Preconditioner,
    constraints: Option<&DMatrix<f64>>,
    k: usize,
    opts: &SolverOptions,
) -> Result<Eigenpairs> {
    let n = a.size();
    let empty = DMatrix::zeros(n, 0);
    let y = constraints.unwrap_or(&empty);
    let free = n - y.ncols();
    if k > free {
        return Err(Error::DimensionMismatch(format!("{k} eigenpairs requested from a {free}-dimensional space")));
    }
    if k == 0 {
        return Ok(Eigenpairs { values: vec![], vectors: DMatrix::zeros(n, 0), residuals: vec![], iterations: 0 });
    }
    let deflation = Deflation { y, by: b.apply(y) };
    let m = (k + (k / 2).max(5)).min(free);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let x0 = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
    let x0 = svqb(&deflation.project(&deflation.project(&x0)), b, 1e-10);
    let (theta0, c0) = rayleigh_ritz(&x0, &a.apply(&x0), &b.apply(&x0));
    let m = m.min(theta0.len());
    let mut x = &x0 * c0.columns(0, m);
    let mut p: Option<DMatrix<f64>> = None;
    let mut last = Vec::new();

    for iteration in 1..=opts.max_iterations {
        let (ax, bx) = (a.apply(&x), b.apply(&x));
        // Ritz values of the current (B-orthonormal) block
        let theta: Vec<f64> = (0..m).map(|i| x.column(i).dot(&ax.column(i))).collect();
        let r = &ax - &bx * DMatrix::from_diagonal(&DVector::from_column_slice(&theta));
        let (res, scale) = residuals(&ax, &bx, &theta);
        let converged: Vec<bool> = res.iter().zip(&scale).map(|(r, s)| *r <= opts.tol * s).collect();
        last = res.iter().zip(&scale).map(|(r, s)| r / s).take(k).collect();
        if converged[..k].iter().all(|&c| c) {
            let relative = check_residuals(&res[..k], &scale[..k], iteration)?;
            return Ok(Eigenpairs {
                values: theta[..k].to_vec(),
                vectors: x.columns(0, k).into_owned(),
                residuals: relative,
                iterations: iteration,
            });
        }
        let active: Vec<usize> = (0..m).filter(|&i| !converged[i]).collect();
        let r_active = DMatrix::from_fn(n, active.len(), |i, c| r[(i, active[c])]);
        let w = deflation.project(&precond.apply(&r_active));
        let w = orthogonal_complement(&w, &x, &bx, b);

        let mut blocks = vec![x.clone(), w];
        if let Some(pp) = &p {
            let xw = hcat(&[&blocks[0], &blocks[1]]);
            let bxw = b.apply(&xw);
            let pp = orthogonal_complement(pp, &xw, &bxw, b);
            if pp.ncols() > 0 {
                blocks.push(pp);
            }
        }
        let refs: Vec<&DMatrix<f64>> = blocks.iter().collect();
        let s = hcat(&refs);
        let (values, coeffs) = rayleigh_ritz(&s, &a.apply(&s), &b.apply(&s));
        if values.len() < m {
            return Err(Error::NotConverged {
                iterations: iteration,
                max_residual: last.iter().fold(0.0f64, |a, &r| a.max(r)),
                residuals: last,
            });
        }
        let c = coeffs.columns(0, m);
        let rest = s.ncols() - m;
        p = (rest > 0).then(|| s.columns(m, rest) * c.rows(m, rest));
        x = &s * c;
    }
    Err(Error::NotConverged {
        iterations: opts.max_iterations,
        max_residual: last.iter().fold(0.0f64, |a, &r| a.max(r)),
        residuals: last,
    })
}

fn trace(m: &CsrMatrix<f64>) -> f64 {
    m.diagonal_as_csr().values().iter().sum()
}

/// Shift for the `(A + σB)⁻¹` preconditioner: a small fraction of the mean
/// Rayleigh quotient.
fn preconditioner_shift(a: &CsrMatrix<f64>, b: &CsrMatrix<f64>) -> f64 {
    let ratio = trace(a) / trace(b);
    if ratio > 0.0 {
        1e-3 * ratio
    } else {
        1.0
    }
}

fn zero_threshold(window: &[f64]) -> f64 {
    ZERO_MODE_TOLERANCE * window.iter().fold(0.0f64, |a, &v| a.max(v))
}

/// Dense solve of a sparse pencil, returning the `count` smallest pairs.
fn dense_window(a: &CsrMatrix<f64>, b: &CsrMatrix<f64>, count: usize) -> Result<Eigenpairs> {
    let (ad, bd) = (csr_to_dense(a), csr_to_dense(b));
    let (values, vectors) = dense_generalized_eigen(&ad, &bd)?;
    let count = count.min(values.len());
    let v = vectors.columns(0, count).into_owned();
    let vals: Vec<f64> = values.iter().take(count).copied().collect();
    let (res, scale) = residuals(&(a * &v), &(b * &v), &vals);
    let relative = check_residuals(&res, &scale, 1)?;
    Ok(Eigenpairs { values: vals, vectors: v, residuals: relative, iterations: 1 })
}

/// The `k` smallest eigenvalues of `A v = λ B v` (`A` symmetric PSD, `B` SPD),
/// with zero modes classified relative to the largest value in the window.
pub fn smallest_generalized_eigenpairs(
    a: &CsrMatrix<f64>,
    b: &CsrMatrix<f64>,
    k: usize,
    opts: &SolverOptions,
) -> Result<(SpectrumResult, Eigenpairs)> {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() || a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch("A and B must be square and of equal size".into()));
    }
    if k > a.nrows() {
        return Err(Error::DimensionMismatch(format!("k = {k} exceeds pencil size {}", a.nrows())));
    }
    let method = opts.resolve(a.nrows());
    let pairs = match method {
        SolverMethod::Dense => dense_window(a, b, k)?,
        _ => {
            let sigma = preconditioner_shift(a, b);
            let shifted = a + &(b * sigma);
            let precond = Preconditioner::sparse_cholesky(&shifted)?;
            lobpcg(a, b, &precond, None, k, opts)?
        }
    };
    let cut = zero_threshold(&pairs.values);
    let zero_modes = pairs.values.iter().filter(|&&v| v < cut).count();
    let result = SpectrumResult {
        degree: 0,
        eps: 0.0,
        eigenvalues: pairs.values.clone(),
        zero_modes,
        residuals: pairs.residuals.clone(),
        iterations: pairs.iterations,
        method,
        multiplicities: group_multiplicities(&pairs.values),
    };
    Ok((result, pairs))
}

/// B-orthonormal basis of the column span of `c`, dropping dependent columns.
fn b_orthonormal_span(c: &DMatrix<f64>, b: &CsrMatrix<f64>) -> DMatrix<f64> {
    if c.ncols() == 0 {
        return c.clone();
    }
    let gram = c.transpose() * (b * c);
    let gram = (&gram + gram.transpose()) * 0.5;
    let eig = gram.symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v));
    let keep: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&i| eig.eigenvalues[i] > 1e-10 * top).collect();
    let t = DMatrix::from_fn(c.ncols(), keep.len(), |i, j| eig.eigenvectors[(i, keep[j])] / eig.eigenvalues[keep[j]].sqrt());
    c * t
}

fn finish(
    degree: usize,
    eps: f64,
    pairs: &Eigenpairs,
    known_zeros: usize,
    expected_zeros: usize,
    k: usize,
    method: SolverMethod,
) -> Result<SpectrumResult> {
    let cut = zero_threshold(&pairs.values);
    let computed_zeros = pairs.values.iter().take_while(|&&v| v < cut).count();
    let zero_modes = known_zeros + computed_zeros;
    if zero_modes != expected_zeros {
        return Err(Error::ZeroModeMismatch { degree, found: zero_modes, expected: expected_zeros });
    }
    let positive: Vec<f64> = pairs.values[computed_zeros..].iter().take(k).copied().collect();
    let residuals = pairs.residuals[computed_zeros..].iter().take(k).copied().collect();
    Ok(SpectrumResult {
        degree,
        eps,
        multiplicities: group_multiplicities(&positive),
        eigenvalues: positive,
        zero_modes,
        residuals,
        iterations: pairs.iterations,
        method,
    })
}

/// Eigenvalues of the Laplacian on the closure of `Im(d) ⊂ Ω^p` in the
/// collapsed metric at `eps`: the positive spectrum of the pencil
/// `(D_{p-1}ᵀ M_ε^{(p)} D_{p-1}, M_ε^{(p-1)})`. Its kernel is `Ker d_{p-1}`,
/// whose dimension `b_{p-1} + rank d_{p-2}` must match the zero count.
pub fn spectrum_im_d(family: &MassFamily, eps: f64, p: usize, k: usize, opts: &SolverOptions) -> Result<SpectrumResult> {
    let n = family.dimension();
    if p == 0 || p > n {
        return Err(Error::DegreeOutOfRange { degree: p, max: n });
    }
    let a = family.coboundary_stiffness(eps, p)?;
    let b = family.weighted_mass_matrix(eps, p - 1)?;
    let expected_zeros = family.cocycle_dim(p - 1)?;
    let size = a.nrows();
    if expected_zeros + k > size {
        return Err(Error::DimensionMismatch(format!(
            "only {} positive eigenvalues exist in degree {p}",
            size - expected_zeros
        )));
    }
    let method = opts.resolve(size);
    match method {
        SolverMethod::Dense => {
            let pairs = dense_window(&a, &b, expected_zeros + k)?;
            finish(p, eps, &pairs, 0, expected_zeros, k, method)
        }
        _ => {
            // deflate the exact part Im d_{p-2} of the kernel; harmonic modes
            // must show up as computed zeros
            let exact = if p >= 2 {
                b_orthonormal_span(&csr_to_dense(family.coboundary(p - 2)?), &b)
            } else {
                DMatrix::zeros(size, 0)
            };
            let harmonic = family.betti_number(p - 1)?;
            let sigma = preconditioner_shift(&a, &b);
            let precond = Preconditioner::sparse_cholesky(&(&a + &(&b * sigma)))?;
            let pairs = lobpcg(&a, &b, &precond, Some(&exact), harmonic + k, opts)?;
            finish(p, eps, &pairs, exact.ncols(), expected_zeros, k, method)
        }
    }
}

/// The Hodge operator `d*d + dd*` in the collapsed inner products, applied
/// matrix-free through a factorization of `M_{p-1}`.
struct HodgeOperator {
    up: Option<CsrMatrix<f64>>,
    down: Option<(CsrMatrix<f64>, CsrMatrix<f64>, Preconditioner)>,
}

impl SymmetricOperator for HodgeOperator {
    fn size(&self) -> usize {
        match (&self.up, &self.down) {
            (Some(u), _) => u.nrows(),
            (None, Some((m, _, _))) => m.nrows(),
            _ => 0,
        }
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = match &self.up {
            Some(u) => u * x,
            None => DMatrix::zeros(x.nrows(), x.ncols()),
        };
        if let Some((mp, d, lower)) = &self.down {
            let t = &d.transpose() * &(mp * x);
            let s = lower.apply(&t);
            out += mp * &(d * &s);
        }
        out
    }
}

/// Spectrum of the full discrete Hodge Laplacian on p-cochains in the
/// collapsed inner products: the pencil
/// `(D_pᵀ M_{p+1} D_p + M_p D_{p-1} M_{p-1}⁻¹ D_{p-1}ᵀ M_p, M_p)`.
/// Its zero count must equal `b_p`.
pub fn hodge_spectrum(family: &MassFamily, eps: f64, p: usize, k: usize, opts: &SolverOptions) -> Result<SpectrumResult> {
    let n = family.dimension();
    if p > n {
        return Err(Error::DegreeOutOfRange { degree: p, max: n });
    }
    let mp = family.weighted_mass_matrix(eps, p)?;
    let up = if p < n {
        let d = family.coboundary(p)?;
        Some(&d.transpose() * &(&family.weighted_mass_matrix(eps, p + 1)? * d))
    } else {
        None
    };
    let expected_zeros = family.betti_number(p)?;
    let size = mp.nrows();
    if expected_zeros + k > size {
        return Err(Error::DimensionMismatch(format!("only {} positive eigenvalues exist", size - expected_zeros)));
    }
    let method = opts.resolve(size);
    let pairs = match method {
        SolverMethod::Dense => {
            let mut a = up.as_ref().map_or_else(|| DMatrix::zeros(size, size), csr_to_dense);
            if p > 0 {
                let d = csr_to_dense(family.coboundary(p - 1)?);
                let lower = csr_to_dense(&family.weighted_mass_matrix(eps, p - 1)?);
                let chol = lower.cholesky().ok_or_else(|| Error::NotPositiveDefinite(format!("M_{}", p - 1)))?;
                let mpd = csr_to_dense(&mp);
                let t = d.transpose() * &mpd;
                a += t.transpose() * chol.solve(&t);
            }
            let a = (&a + a.transpose()) * 0.5;
            let (values, vectors) = dense_generalized_eigen(&a, &csr_to_dense(&mp))?;
            let count = expected_zeros + k;
            let v = vectors.columns(0, count).into_owned();
            let vals: Vec<f64> = values.iter().take(count).copied().collect();
            let (res, scale) = residuals(&(&a * &v), &(&mp * &v), &vals);
            let relative = check_residuals(&res, &scale, 1)?;
            Eigenpairs { values: vals, vectors: v, residuals: relative, iterations: 1 }
        }
        _ => {
            let down = if p > 0 {
                let d = family.coboundary(p - 1)?.clone();
                let lower = family.weighted_mass_matrix(eps, p - 1)?;
                // lumped inverse of M_{p-1} for the preconditioner
                let diag_inv: Vec<f64> = (0..lower.nrows())
                    .map(|i| 1.0 / lower.get_entry(i, i).map_or(1.0, |e| e.into_value()))
                    .collect();
                Some((d, lower, diag_inv))
            } else {
                None
            };
            let mut approx = up.clone().unwrap_or_else(|| CsrMatrix::zeros(size, size));
            if let Some((d, _, diag_inv)) = &down {
                let lumped = CsrMatrix::from(&CooMatrix::try_from_triplets(
                    diag_inv.len(),
                    diag_inv.len(),
                    (0..diag_inv.len()).collect(),
                    (0..diag_inv.len()).collect(),
                    diag_inv.clone(),
                )
                .expect("diagonal triplets"));
                let md = &mp * d;
                approx = &approx + &(&(&md * &lumped) * &md.transpose());
            }
            let trace_a = trace(&approx);
            let sigma = if trace_a > 0.0 { 1e-3 * trace_a / trace(&mp) } else { 1.0 };
            let precond = Preconditioner::sparse_cholesky(&(&approx + &(&mp * sigma)))?;
            let op = HodgeOperator {
                up,
                down: match down {
                    Some((d, lower, _)) => {
                        let chol = Preconditioner::sparse_cholesky(&lower)?;
                        Some((mp.clone(), d, chol))
                    }
                    None => None,
                },
            };
            lobpcg(&op, &mp, &precond, None, expected_zeros + k, opts)?
        }
    };
    finish(p, eps, &pairs, 0, expected_zeros, k, method)
}

/// Condition number of an SPD matrix: exact (dense) up to `dense_limit`,
/// otherwise a power-iteration estimate of both extreme eigenvalues.
pub fn condition_estimate(b: &CsrMatrix<f64>, dense_limit: usize) -> Result<f64> {
    let n = b.nrows();
    if n == 0 {
        return Ok(1.0);
    }
    if n <= dense_limit {
        let ev = csr_to_dense(b).symmetric_eigenvalues();
        let (lo, hi) = ev.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if lo <= 0.0 {
            return Err(Error::NotPositiveDefinite("mass matrix has a nonpositive eigenvalue".into()));
        }
        return Ok(hi / lo);
    }
    let chol = Preconditioner::sparse_cholesky(b)?;
    let power = |apply: &dyn Fn(&DMatrix<f64>) -> DMatrix<f64>| {
        let mut v = DMatrix::from_element(n, 1, 1.0 / (n as f64).sqrt());
        let mut lambda = 0.0;
        for _ in 0..200 {
            let w = apply(&v);
            lambda = w.norm();
            v = w / lambda;
        }
        lambda
    };
    let hi = power(&|v| b * v);
    let inv_lo = power(&|v| chol.apply(v));
    Ok(hi * inv_lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::dense_to_csr;

    fn random_spd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &g * g.transpose() + DMatrix::identity(n, n) * n as f64 * 0.1
    }

    #[test]
    fn diagonal_pencil() {
        let a = dense_to_csr(&DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0, 4.0])));
        let b = dense_to_csr(&DMatrix::identity(3, 3));
        for method in [SolverMethod::Dense, SolverMethod::Iterative] {
            let opts = SolverOptions { method, ..Default::default() };
            let (r, _) = smallest_generalized_eigenpairs(&a, &b, 3, &opts).unwrap();
            assert!(r.eigenvalues[0].abs() < 1e-12);
            assert!((r.eigenvalues[1] - 1.0).abs() < 1e-12);
            assert!((r.eigenvalues[2] - 4.0).abs() < 1e-12);
            assert_eq!(r.zero_modes, 1);
        }
    }

    #[test]
    fn pencil_scaling_halves_eigenvalues() {
        // path-graph Laplacian
        let l = DMatrix::from_fn(6, 6, |i, j| {
            if i == j {
                if i == 0 || i == 5 {
                    1.0
                } else {
                    2.0
                }
            } else if i.abs_diff(j) == 1 {
                -1.0
            } else {
                0.0
            }
        });
        let plain = l.clone().symmetric_eigenvalues();
        let mut plain: Vec<f64> = plain.iter().copied().collect();
        plain.sort_by(f64::total_cmp);
        let (r, _) = smallest_generalized_eigenpairs(
            &dense_to_csr(&l),
            &dense_to_csr(&(DMatrix::identity(6, 6) * 2.0)),
            6,
            &SolverOptions { method: SolverMethod::Iterative, ..Default::default() },
        )
        .unwrap();
        for (got, want) in r.eigenvalues.iter().zip(&plain) {
            assert!((got - want / 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn random_pencil_matches_dense() {
        let a = random_spd(50, 1);
        let b = random_spd(50, 2);
        let (values, _) = dense_generalized_eigen(&a, &b).unwrap();
        let opts = SolverOptions { method: SolverMethod::Iterative, ..Default::default() };
        let (r, pairs) = smallest_generalized_eigenpairs(&dense_to_csr(&a), &dense_to_csr(&b), 8, &opts).unwrap();
        for (i, got) in r.eigenvalues.iter().enumerate() {
            assert!((got - values[i]).abs() <= 1e-9 * values[i].abs(), "{got} vs {}", values[i]);
        }
        // B-orthonormal vectors
        let gram = pairs.vectors.transpose() * &b * &pairs.vectors;
        assert!((gram - DMatrix::identity(8, 8)).abs().max() < 1e-8);
        assert!(r.residuals.iter().all(|&x| x <= RESIDUAL_BOUND));
    }

    #[test]
    fn deterministic_given_seed() {
        let a = dense_to_csr(&random_spd(40, 3));
        let b = dense_to_csr(&random_spd(40, 4));
        let opts = SolverOptions { method: SolverMethod::Iterative, ..Default::default() };
        let (r1, _) = smallest_generalized_eigenpairs(&a, &b, 5, &opts).unwrap();
        let (r2, _) = smallest_generalized_eigenpairs(&a, &b, 5, &opts).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn indefinite_b_rejected() {
        let a = dense_to_csr(&DMatrix::identity(3, 3));
        let b = dense_to_csr(&DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0, 1.0])));
        let opts = SolverOptions { method: SolverMethod::Dense, ..Default::default() };
        assert!(matches!(smallest_generalized_eigenpairs(&a, &b, 2, &opts), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn multiplicity_grouping() {
        let g = group_multiplicities(&[1.0, 1.0 + 1e-9, 2.0, 2.0, 2.0, 3.5]);
        assert_eq!(g.iter().map(|x| x.1).collect::<Vec<_>>(), vec![2, 3, 1]);
    }

    #[test]
    fn min_max_monotonicity_under_larger_mass() {
        let a = random_spd(30, 5);
        let b = random_spd(30, 6);
        let bigger = &b + random_spd(30, 7) * 0.1;
        let (lo, _) = dense_generalized_eigen(&a, &bigger).unwrap();
        let (hi, _) = dense_generalized_eigen(&a, &b).unwrap();
        for i in 0..30 {
            assert!(lo[i] <= hi[i] * (1.0 + 1e-12));
        }
    }

    proptest::proptest! {
        #[test]
        fn iterative_diagonal_pencil_gives_sorted_ratios(
            pairs in proptest::collection::vec((0.0f64..10.0, 0.5f64..2.0), 12..30),
        ) {
            let (num, den): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let a = dense_to_csr(&DMatrix::from_diagonal(&DVector::from_vec(num.clone())));
            let b = dense_to_csr(&DMatrix::from_diagonal(&DVector::from_vec(den.clone())));
            let mut expected: Vec<f64> = num.iter().zip(&den).map(|(x, y)| x / y).collect();
            expected.sort_by(f64::total_cmp);
            let opts = SolverOptions { method: SolverMethod::Iterative, ..Default::default() };
            let (r, _) = smallest_generalized_eigenpairs(&a, &b, 3, &opts).unwrap();
            for (got, want) in r.eigenvalues.iter().zip(&expected) {
                proptest::prop_assert!((got - want).abs() <= 1e-9 * want.max(1.0));
            }
        }
    }
}
