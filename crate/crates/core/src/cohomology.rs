//! Real cohomology of simplicial complexes: Betti numbers, harmonic
//! representatives, and induced maps.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::complex::SimplicialComplex;
use crate::error::{Error, Result};

/// Singular values below this fraction of the largest count as zero.
pub const RANK_THRESHOLD: f64 = 1e-9;

/// Numerical rank with the relative threshold, plus a flag set when some
/// singular value lies within a factor 10 of the threshold.
pub fn numerical_rank(m: &DMatrix<f64>) -> (usize, bool) {
    if m.nrows() == 0 || m.ncols() == 0 {
        return (0, false);
    }
    let sv = m.clone().svd(false, false).singular_values;
    let largest = sv.iter().fold(0.0f64, |a, &s| a.max(s));
    if largest == 0.0 {
        return (0, false);
    }
    let cut = RANK_THRESHOLD * largest;
    let rank = sv.iter().filter(|&&s| s > cut).count();
    let ambiguous = sv.iter().any(|&s| s > cut / 10.0 && s < cut * 10.0);
    (rank, ambiguous)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BettiNumbers {
    pub values: Vec<usize>,
    /// `rank d_p` for `p = 0..n` (the last entry is always 0).
    pub coboundary_ranks: Vec<usize>,
    pub warnings: Vec<String>,
}

impl BettiNumbers {
    /// `dim Ker d_p = b_p + rank d_{p-1}`.
    pub fn cocycle_dim(&self, p: usize) -> usize {
        self.values[p] + if p == 0 { 0 } else { self.coboundary_ranks[p - 1] }
    }

    /// Alternating sum of the Betti numbers.
    pub fn euler_characteristic(&self) -> i64 {
        self.values.iter().enumerate().map(|(p, &b)| if p % 2 == 0 { b as i64 } else { -(b as i64) }).sum()
    }

    /// Reduced Betti numbers (`b̃_0 = b_0 - 1`).
    pub fn reduced(&self) -> Vec<i64> {
        self.values.iter().enumerate().map(|(p, &b)| b as i64 - i64::from(p == 0)).collect()
    }
}

/// Numerical rank of the coboundary `d_p`, with the ambiguity flag.
pub fn coboundary_rank(k: &SimplicialComplex, p: usize) -> Result<(usize, bool)> {
    let d = k.coboundary_matrix(p)?.to_dense();
    let (rank, ambiguous) = numerical_rank(&d);
    if ambiguous {
        log::warn!("rank of d_{p} is ambiguous near the threshold {RANK_THRESHOLD:e}");
    }
    Ok((rank, ambiguous))
}

/// `b_p = dim Ker d_p - rank d_{p-1}` over the reals.
pub fn betti_numbers(k: &SimplicialComplex) -> Result<BettiNumbers> {
    let n = k.dimension();
    let mut ranks = Vec::with_capacity(n + 1);
    let mut warnings = Vec::new();
    for p in 0..=n {
        let (rank, ambiguous) = coboundary_rank(k, p)?;
        if ambiguous {
            warnings.push(format!("rank of d_{p} is ambiguous near the threshold {RANK_THRESHOLD:e}"));
        }
        ranks.push(rank);
    }
    let values = (0..=n).map(|p| k.count(p) - ranks[p] - if p == 0 { 0 } else { ranks[p - 1] }).collect();
    Ok(BettiNumbers { values, coboundary_ranks: ranks, warnings })
}

/// Orthonormal real cocycles representing `H^p`: the kernel of the
/// combinatorial Laplacian `d_pᵀ d_p + d_{p-1} d_{p-1}ᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct CohomologyBasis {
    pub degree: usize,
    pub basis: DMatrix<f64>,
}

impl CohomologyBasis {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

pub fn cohomology_basis(k: &SimplicialComplex, p: usize) -> Result<CohomologyBasis> {
    let n = k.dimension();
    if p > n {
        return Err(Error::DegreeOutOfRange { degree: p, max: n });
    }
    let size = k.count(p);
    let up = k.coboundary_matrix(p)?.to_dense();
    let mut lap = up.transpose() * &up;
    if p > 0 {
        let down = k.coboundary_matrix(p - 1)?.to_dense();
        lap += &down * down.transpose();
    }
    let eig = lap.symmetric_eigen();
    let mut order: Vec<usize> = (0..size).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let scale = eig.eigenvalues.iter().fold(1.0f64, |a, &v| a.max(v.abs()));
    let cut = RANK_THRESHOLD * scale;
    let kernel: Vec<usize> = order.iter().copied().filter(|&i| eig.eigenvalues[i] < cut).collect();
    if let Some(&first_positive) = order.get(kernel.len()) {
        let gap = eig.eigenvalues[first_positive] / scale;
        if gap < 1e3 * RANK_THRESHOLD {
            return Err(Error::KernelNotSeparated { gap });
        }
    }
    let basis = DMatrix::from_fn(size, kernel.len(), |r, c| eig.eigenvectors[(r, kernel[c])]);
    Ok(CohomologyBasis { degree: p, basis })
}

/// A cochain map `C^*(source) → C^*(target)`: one matrix per degree, of shape
/// `count_target(q) × count_source(q)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CochainMap {
    pub maps: Vec<DMatrix<f64>>,
}

impl CochainMap {
    pub fn identity(k: &SimplicialComplex) -> Self {
        Self { maps: (0..=k.dimension()).map(|q| DMatrix::identity(k.count(q), k.count(q))).collect() }
    }
}

/// Pullback along the simplicial map `domain → codomain` given on vertices.
/// The result maps `C^*(codomain) → C^*(domain)`; simplices collapsing to
/// lower dimension pull back to zero.
pub fn simplicial_pullback(
    domain: &SimplicialComplex,
    codomain: &SimplicialComplex,
    vertex_map: &[usize],
) -> Result<CochainMap> {
    if vertex_map.len() != domain.vertex_count() {
        return Err(Error::DimensionMismatch("vertex map must cover every domain vertex".into()));
    }
    let mut maps = Vec::with_capacity(domain.dimension() + 1);
    for q in 0..=domain.dimension() {
        let mut m = DMatrix::zeros(domain.count(q), codomain.count(q));
        for (row, s) in domain.simplices(q).iter().enumerate() {
            let image: Vec<usize> = s.iter().map(|&v| vertex_map[v]).collect();
            let mut sorted = image.clone();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                continue;
            }
            let col = codomain.index_of(&sorted).ok_or_else(|| {
                Error::InvalidParameter(format!("image {sorted:?} of {s:?} is not a simplex of the codomain"))
            })?;
            m[(row, col)] = permutation_sign(&image);
        }
        maps.push(m);
    }
    Ok(CochainMap { maps })
}

fn permutation_sign(v: &[usize]) -> f64 {
    let mut inversions = 0;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            if v[i] > v[j] {
                inversions += 1;
            }
        }
    }
    if inversions % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `dim Ker (f^* : H^p(source) → H^p(target))`.
pub fn induced_map_kernel_dim(
    f: &CochainMap,
    source: &SimplicialComplex,
    target: &SimplicialComplex,
    p: usize,
) -> Result<usize> {
    let top = target.dimension();
    if f.maps.len() <= top {
        return Err(Error::DimensionMismatch(format!("need cochain maps in degrees 0..={top}")));
    }
    for (q, m) in f.maps.iter().enumerate() {
        if m.shape() != (target.count(q), source.count(q)) {
            return Err(Error::DimensionMismatch(format!(
                "degree {q} map is {:?}, expected {:?}",
                m.shape(),
                (target.count(q), source.count(q))
            )));
        }
    }
    for q in 0..top {
        let dt = target.coboundary_matrix(q)?.to_dense();
        let ds = if q < source.dimension() {
            source.coboundary_matrix(q)?.to_dense()
        } else {
            DMatrix::zeros(source.count(q + 1), source.count(q))
        };
        let defect = (&dt * &f.maps[q] - &f.maps[q + 1] * &ds).abs().max();
        if defect > 1e-10 {
            return Err(Error::NotChainMap { degree: q, defect });
        }
    }
    if p > source.dimension() {
        return Ok(0);
    }
    let hs = cohomology_basis(source, p)?;
    if p > top {
        return Ok(hs.dim());
    }
    let ht = cohomology_basis(target, p)?;
    let coords = ht.basis.transpose() * &f.maps[p] * &hs.basis;
    let rank = if coords.nrows() == 0 || coords.ncols() == 0 {
        0
    } else {
        let sv = coords.svd(false, false).singular_values;
        let largest = sv.iter().fold(1.0f64, |a, &s| a.max(s));
        sv.iter().filter(|&&s| s > 1e-8 * largest).count()
    };
    Ok(hs.dim() - rank)
}

/// Lower bound `max(0, b_p(quotient) - b_p(M))` on the kernel of
/// `H^p(G\M) → H^p(M)`; exact when `b_p(M) = 0`, where the map is zero.
pub fn kernel_dim_lower_bound(betti_quotient: &[usize], betti_manifold: &[usize], p: usize) -> (usize, bool) {
    let bq = betti_quotient.get(p).copied().unwrap_or(0);
    let bm = betti_manifold.get(p).copied().unwrap_or(0);
    (bq.saturating_sub(bm), bm == 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders::{build_flat_torus, build_icosphere, cycle_complex, suspension, torus_projection, torus_vertex};

    #[test]
    fn circle_and_torus_betti() {
        assert_eq!(betti_numbers(&cycle_complex(12).unwrap()).unwrap().values, vec![1, 1]);
        let (t, _, _) = build_flat_torus(4, 4).unwrap();
        let b = betti_numbers(&t).unwrap();
        assert_eq!(b.values, vec![1, 2, 1]);
        assert!(b.warnings.is_empty());
        assert_eq!(b.euler_characteristic(), t.euler_characteristic());
    }

    #[test]
    fn point_and_interval() {
        assert_eq!(betti_numbers(&SimplicialComplex::point()).unwrap().values, vec![1]);
        assert_eq!(betti_numbers(&suspension(&SimplicialComplex::point())).unwrap().values, vec![1, 0]);
    }

    #[test]
    fn circle_harmonic_is_uniform() {
        let c = cycle_complex(12).unwrap();
        let h = cohomology_basis(&c, 1).unwrap();
        assert_eq!(h.dim(), 1);
        // edges (i, i+1) are oriented along the cycle except (0, 11)
        let closing = c.index_of(&[0, 11]).unwrap();
        let reference = h.basis[(0, 0)];
        for (i, s) in c.simplices(1).iter().enumerate() {
            let expected = if i == closing { -reference } else { reference };
            assert!((h.basis[(i, 0)] - expected).abs() < 1e-12, "edge {s:?}");
        }
    }

    #[test]
    fn icosphere_has_no_one_cohomology() {
        let (k, _, _) = build_icosphere(1).unwrap();
        assert_eq!(cohomology_basis(&k, 1).unwrap().dim(), 0);
        assert_eq!(cohomology_basis(&k, 2).unwrap().dim(), 1);
    }

    #[test]
    fn torus_representatives_pair_with_axis_cycles() {
        let (t, _, _) = build_flat_torus(4, 4).unwrap();
        let h = cohomology_basis(&t, 1).unwrap();
        assert_eq!(h.dim(), 2);
        // horizontal cycle along row 0 and vertical cycle along column 0
        let cycle_chain = |steps: Vec<(usize, usize)>| {
            let mut chain = DMatrix::zeros(1, t.count(1));
            for (a, b) in steps {
                let col = t.index_of(&[a.min(b), a.max(b)]).unwrap();
                chain[(0, col)] += if a < b { 1.0 } else { -1.0 };
            }
            chain
        };
        let horizontal = cycle_chain((0..4).map(|i| (torus_vertex(4, i, 0), torus_vertex(4, (i + 1) % 4, 0))).collect());
        let vertical = cycle_chain((0..4).map(|j| (torus_vertex(4, 0, j), torus_vertex(4, 0, (j + 1) % 4))).collect());
        let mut pairing = DMatrix::zeros(2, 2);
        pairing.row_mut(0).copy_from(&(horizontal * &h.basis));
        pairing.row_mut(1).copy_from(&(vertical * &h.basis));
        assert!(pairing.determinant().abs() > 0.1);
    }

    #[test]
    fn identity_map_has_trivial_kernel() {
        let (t, _, _) = build_flat_torus(3, 4).unwrap();
        let id = CochainMap::identity(&t);
        for p in 0..=2 {
            assert_eq!(induced_map_kernel_dim(&id, &t, &t, p).unwrap(), 0);
        }
    }

    #[test]
    fn torus_to_circle_pullback_is_injective() {
        let (t, _, _) = build_flat_torus(4, 4).unwrap();
        let c = cycle_complex(4).unwrap();
        let f = simplicial_pullback(&t, &c, &torus_projection(4, 4, true)).unwrap();
        assert_eq!(induced_map_kernel_dim(&f, &c, &t, 1).unwrap(), 0);
        assert_eq!(induced_map_kernel_dim(&f, &c, &t, 0).unwrap(), 0);
        let f = simplicial_pullback(&t, &c, &torus_projection(4, 4, false)).unwrap();
        assert_eq!(induced_map_kernel_dim(&f, &c, &t, 1).unwrap(), 0);
    }

    #[test]
    fn map_to_point() {
        let (k, _, _) = build_icosphere(0).unwrap();
        let pt = SimplicialComplex::point();
        let f = simplicial_pullback(&k, &pt, &vec![0; k.vertex_count()]).unwrap();
        assert_eq!(induced_map_kernel_dim(&f, &pt, &k, 0).unwrap(), 0);
    }

    #[test]
    fn zero_map_kills_everything() {
        let c = cycle_complex(5).unwrap();
        let zero = CochainMap { maps: vec![DMatrix::zeros(5, 5), DMatrix::zeros(5, 5)] };
        assert_eq!(induced_map_kernel_dim(&zero, &c, &c, 1).unwrap(), 1);
        assert_eq!(induced_map_kernel_dim(&zero, &c, &c, 0).unwrap(), 1);
    }

    #[test]
    fn non_chain_map_rejected() {
        let c = cycle_complex(5).unwrap();
        let mut bad = CochainMap::identity(&c);
        bad.maps[1][(0, 0)] = 2.0;
        assert!(matches!(induced_map_kernel_dim(&bad, &c, &c, 1), Err(Error::NotChainMap { .. })));
    }

    #[test]
    fn lower_bound_examples() {
        assert_eq!(kernel_dim_lower_bound(&[1, 0, 1], &[1, 0, 0, 1], 2), (1, true));
        assert_eq!(kernel_dim_lower_bound(&[1, 1], &[1, 2, 1], 1), (0, false));
        // suspension of CP¹ (a 3-sphere up to homotopy) under S⁴
        assert_eq!(kernel_dim_lower_bound(&[1, 0, 0, 1], &[1, 0, 0, 0, 1], 3), (1, true));
    }

    proptest::proptest! {
        #[test]
        fn rank_of_a_product_of_generic_factors(r in 0usize..6, seed in 0u64..500) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let left = DMatrix::from_fn(8, r, |_, _| rng.random_range(-1.0..1.0));
            let right = DMatrix::from_fn(r, 7, |_, _| rng.random_range(-1.0..1.0));
            proptest::prop_assert_eq!(numerical_rank(&(left * right)).0, r);
        }

        #[test]
        fn every_cycle_is_a_circle(n in 3usize..40) {
            proptest::prop_assert_eq!(betti_numbers(&cycle_complex(n).unwrap()).unwrap().values, vec![1, 1]);
        }
    }
}
