//! Small helpers around `nalgebra_sparse` matrices.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use nalgebra_sparse::convert::serial::convert_csr_dense;
use nalgebra_sparse::{CooMatrix, CsrMatrix};

pub fn csr_to_dense(m: &CsrMatrix<f64>) -> DMatrix<f64> {
    convert_csr_dense(m)
}

/// Dense to CSR, keeping only nonzero entries.
pub fn dense_to_csr(m: &DMatrix<f64>) -> CsrMatrix<f64> {
    let mut coo = CooMatrix::new(m.nrows(), m.ncols());
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if v != 0.0 {
                coo.push(i, j, v);
            }
        }
    }
    CsrMatrix::from(&coo)
}

pub fn max_abs(m: &CsrMatrix<f64>) -> f64 {
    m.values().iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// `max |A - Aᵀ|`.
pub fn asymmetry(m: &CsrMatrix<f64>) -> f64 {
    let t = m.transpose();
    let diff = m - &t;
    max_abs(&diff)
}

/// Triplet text: a `rows cols nnz` header followed by one `row col value` line
/// per stored entry, values in shortest round-trip form.
pub fn to_triplet_text(m: &CsrMatrix<f64>) -> String {
    let mut out = format!("{} {} {}\n", m.nrows(), m.ncols(), m.nnz());
    for (i, j, v) in m.triplet_iter() {
        out.push_str(&format!("{i} {j} {v:?}\n"));
    }
    out
}

/// Reverse Cuthill–McKee ordering of a structurally symmetric matrix.
/// Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(m: &CsrMatrix<f64>) -> Vec<usize> {
    let n = m.nrows();
    let degree: Vec<usize> = (0..n).map(|i| m.row(i).nnz()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut starts: Vec<usize> = (0..n).collect();
    starts.sort_by_key(|&i| (degree[i], i));
    for &s in &starts {
        if visited[s] {
            continue;
        }
        visited[s] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = m.row(v).col_indices().iter().copied().filter(|&u| !visited[u]).collect();
            next.sort_by_key(|&u| (degree[u], u));
            for u in next {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

/// `P A Pᵀ` for the permutation `perm[new] = old`.
pub fn permute_symmetric(m: &CsrMatrix<f64>, perm: &[usize]) -> CsrMatrix<f64> {
    let mut inverse = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inverse[old] = new;
    }
    let mut coo = CooMatrix::new(m.nrows(), m.ncols());
    for (i, j, &v) in m.triplet_iter() {
        coo.push(inverse[i], inverse[j], v);
    }
    CsrMatrix::from(&coo)
}
