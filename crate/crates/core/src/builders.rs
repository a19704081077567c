//! Desk-scale meshes of the model manifolds and their quotients.
//!
//! Curved manifolds are approximated by affine simplices on chord geometry:
//! vertices lie on the unit sphere and each cell carries the Euclidean metric
//! of its embedded simplex.

use std::collections::{BTreeSet, HashMap};
use std::f64::consts::PI;
use std::sync::Arc;

use crate::complex::SimplicialComplex;
use crate::error::{Error, Result};
use crate::geometry::{ActionData, GeometryData, Projection};

pub const MAX_ICOSPHERE_LEVEL: usize = 6;
pub const MAX_S3_LEVEL: usize = 2;

const GOLDEN: f64 = 1.618_033_988_749_895;

/// Inscribed regular polygon on the unit circle.
pub fn build_circle(segments: usize) -> Result<(Arc<SimplicialComplex>, GeometryData)> {
    if segments < 3 {
        return Err(Error::InvalidParameter(format!("circle needs at least 3 segments, got {segments}")));
    }
    let edges: Vec<Vec<usize>> = (0..segments).map(|i| vec![i, (i + 1) % segments]).collect();
    let complex = Arc::new(SimplicialComplex::from_top_simplices(1, &edges)?);
    let vertices = (0..segments)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / segments as f64;
            vec![t.cos(), t.sin()]
        })
        .collect();
    let geometry = GeometryData::from_vertices(Arc::clone(&complex), vertices, Projection::UnitSphere)?;
    Ok((complex, geometry))
}

/// The segment `[0, length]` split into `segments` equal pieces.
pub fn build_interval(segments: usize, length: f64) -> Result<(Arc<SimplicialComplex>, GeometryData)> {
    if segments == 0 || !(length > 0.0) {
        return Err(Error::InvalidParameter("interval needs a segment and positive length".into()));
    }
    let edges: Vec<Vec<usize>> = (0..segments).map(|i| vec![i, i + 1]).collect();
    let complex = Arc::new(SimplicialComplex::from_top_simplices(1, &edges)?);
    let vertices = (0..=segments).map(|i| vec![length * i as f64 / segments as f64]).collect();
    let geometry = GeometryData::from_vertices(Arc::clone(&complex), vertices, Projection::Identity)?;
    Ok((complex, geometry))
}

/// Global index of grid vertex `(i, j)` on an `nx × ny` periodic grid.
pub fn torus_vertex(nx: usize, i: usize, j: usize) -> usize {
    i + nx * j
}

/// Unit-square flat torus, every grid cell split along its main diagonal.
/// The action is the unit translation in the x-direction.
pub fn build_flat_torus(nx: usize, ny: usize) -> Result<(Arc<SimplicialComplex>, GeometryData, ActionData)> {
    if nx < 3 || ny < 3 {
        return Err(Error::InvalidParameter(format!("torus grid must be at least 3x3, got {nx}x{ny}")));
    }
    let (hx, hy) = (1.0 / nx as f64, 1.0 / ny as f64);
    let mut cells: HashMap<Vec<usize>, Vec<Vec<f64>>> = HashMap::new();
    let mut tops = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            // (global index, unwrapped position) of the four corners
            let corner = |di: usize, dj: usize| {
                let v = torus_vertex(nx, (i + di) % nx, (j + dj) % ny);
                (v, vec![(i + di) as f64 * hx, (j + dj) as f64 * hy])
            };
            let (c00, c10, c01, c11) = (corner(0, 0), corner(1, 0), corner(0, 1), corner(1, 1));
            for tri in [[&c00, &c10, &c11], [&c00, &c11, &c01]] {
                let mut sorted: Vec<_> = tri.iter().map(|(v, x)| (*v, x.clone())).collect();
                sorted.sort_by_key(|(v, _)| *v);
                let key: Vec<usize> = sorted.iter().map(|(v, _)| *v).collect();
                tops.push(key.clone());
                cells.insert(key, sorted.into_iter().map(|(_, x)| x).collect());
            }
        }
    }
    let complex = Arc::new(SimplicialComplex::from_top_simplices(2, &tops)?);
    let vertices = (0..nx * ny).map(|v| vec![(v % nx) as f64 * hx, (v / nx) as f64 * hy]).collect();
    let cell_points = complex.simplices(2).iter().map(|s| cells[s].clone()).collect();
    let geometry = GeometryData::from_cell_points(Arc::clone(&complex), vertices, cell_points, Projection::Identity)?;
    Ok((complex, geometry, ActionData::translation(2)))
}

/// Vertex map of the simplicial projection of the `nx × ny` torus onto a
/// cycle complex, collapsing one grid direction. With `keep_x` the image of
/// `(i, j)` is `i` (a cycle with `nx` vertices), otherwise `j`.
pub fn torus_projection(nx: usize, ny: usize, keep_x: bool) -> Vec<usize> {
    (0..nx * ny).map(|v| if keep_x { v % nx } else { v / nx }).collect()
}

/// Combinatorial circle with `n` vertices (`n ≥ 3`), no geometry.
pub fn cycle_complex(n: usize) -> Result<SimplicialComplex> {
    if n < 3 {
        return Err(Error::InvalidParameter(format!("cycle needs at least 3 vertices, got {n}")));
    }
    let edges: Vec<Vec<usize>> = (0..n).map(|i| vec![i, (i + 1) % n]).collect();
    SimplicialComplex::from_top_simplices(1, &edges)
}

fn icosahedron_vertices() -> Vec<Vec<f64>> {
    let mut v = Vec::with_capacity(12);
    for &s1 in &[-1.0, 1.0] {
        for &s2 in &[-1.0, 1.0] {
            v.push(vec![0.0, s1, s2 * GOLDEN]);
            v.push(vec![s1, s2 * GOLDEN, 0.0]);
            v.push(vec![s2 * GOLDEN, 0.0, s1]);
        }
    }
    v.into_iter().map(|x| Projection::UnitSphere.apply(&x)).collect()
}

fn distance2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Cliques of size `size` in the graph joining vertices closer than `threshold`.
fn cliques(vertices: &[Vec<f64>], threshold2: f64, size: usize) -> Vec<Vec<usize>> {
    let nv = vertices.len();
    let adjacent: Vec<BTreeSet<usize>> = (0..nv)
        .map(|a| (0..nv).filter(|&b| b != a && distance2(&vertices[a], &vertices[b]) < threshold2).collect())
        .collect();
    let mut out = Vec::new();
    let mut stack = Vec::new();
    fn extend(adjacent: &[BTreeSet<usize>], stack: &mut Vec<usize>, size: usize, out: &mut Vec<Vec<usize>>) {
        if stack.len() == size {
            out.push(stack.clone());
            return;
        }
        let last = *stack.last().unwrap();
        for &c in adjacent[last].range(last + 1..) {
            if stack.iter().all(|&s| adjacent[s].contains(&c)) {
                stack.push(c);
                extend(adjacent, stack, size, out);
                stack.pop();
            }
        }
    }
    for v in 0..nv {
        stack.push(v);
        extend(&adjacent, &mut stack, size, &mut out);
        stack.pop();
    }
    out
}

/// One round of midpoint subdivision for complexes of dimension 1, 2 or 3.
/// New vertices are appended in edge order and carried onto the manifold by
/// `projection`. Tetrahedra are split into eight, cutting the inner
/// octahedron along its shortest diagonal.
pub fn subdivide(
    complex: &SimplicialComplex,
    vertices: &[Vec<f64>],
    projection: Projection,
) -> Result<(SimplicialComplex, Vec<Vec<f64>>)> {
    let n = complex.dimension();
    if !(1..=3).contains(&n) {
        return Err(Error::InvalidParameter(format!("cannot subdivide a {n}-dimensional complex")));
    }
    let nv = vertices.len();
    let mut new_vertices = vertices.to_vec();
    for e in complex.simplices(1) {
        let mid: Vec<f64> = vertices[e[0]].iter().zip(&vertices[e[1]]).map(|(a, b)| 0.5 * (a + b)).collect();
        new_vertices.push(projection.apply(&mid));
    }
    let mid = |a: usize, b: usize| nv + complex.index_of(&[a.min(b), a.max(b)]).expect("edge present");
    let mut tops = Vec::new();
    for s in complex.simplices(n) {
        match n {
            1 => {
                let m = mid(s[0], s[1]);
                tops.push(vec![s[0], m]);
                tops.push(vec![m, s[1]]);
            }
            2 => {
                let (a, b, c) = (s[0], s[1], s[2]);
                let (ab, ac, bc) = (mid(a, b), mid(a, c), mid(b, c));
                tops.extend([vec![a, ab, ac], vec![b, ab, bc], vec![c, ac, bc], vec![ab, bc, ac]]);
            }
            _ => {
                let (a, b, c, d) = (s[0], s[1], s[2], s[3]);
                let (ab, ac, ad, bc, bd, cd) = (mid(a, b), mid(a, c), mid(a, d), mid(b, c), mid(b, d), mid(c, d));
                tops.extend([vec![a, ab, ac, ad], vec![b, ab, bc, bd], vec![c, ac, bc, cd], vec![d, ad, bd, cd]]);
                // diagonal endpoints followed by the 4-cycle around it
                let choices = [(ab, cd, [ac, ad, bd, bc]), (ac, bd, [ab, ad, cd, bc]), (ad, bc, [ab, ac, cd, bd])];
                let (p, q, ring) = choices
                    .iter()
                    .min_by(|x, y| {
                        let dx = distance2(&new_vertices[x.0], &new_vertices[x.1]);
                        let dy = distance2(&new_vertices[y.0], &new_vertices[y.1]);
                        dx.total_cmp(&dy)
                    })
                    .copied()
                    .unwrap();
                for k in 0..4 {
                    tops.push(vec![p, q, ring[k], ring[(k + 1) % 4]]);
                }
            }
        }
    }
    Ok((SimplicialComplex::from_top_simplices(n, &tops)?, new_vertices))
}

/// Icosahedron subdivided `level` times with vertices on the unit sphere; the
/// action is rotation about the z-axis.
pub fn build_icosphere(level: usize) -> Result<(Arc<SimplicialComplex>, GeometryData, ActionData)> {
    if level > MAX_ICOSPHERE_LEVEL {
        return Err(Error::InvalidParameter(format!("icosphere level {level} exceeds {MAX_ICOSPHERE_LEVEL}")));
    }
    let mut vertices = icosahedron_vertices();
    // edge length of the unit icosahedron is about 1.05; next distance is 1.70
    let faces = cliques(&vertices, 1.5, 3);
    let mut complex = SimplicialComplex::from_top_simplices(2, &faces)?;
    for _ in 0..level {
        (complex, vertices) = subdivide(&complex, &vertices, Projection::UnitSphere)?;
    }
    let complex = Arc::new(complex);
    let geometry = GeometryData::from_vertices(Arc::clone(&complex), vertices, Projection::UnitSphere)?;
    Ok((complex, geometry, ActionData::z_rotation()))
}

/// The 120 unit quaternions forming the vertices of the 600-cell.
pub fn six_hundred_cell_vertices() -> Vec<Vec<f64>> {
    let mut v = Vec::with_capacity(120);
    for axis in 0..4 {
        for s in [1.0, -1.0] {
            let mut x = vec![0.0; 4];
            x[axis] = s;
            v.push(x);
        }
    }
    for bits in 0..16u32 {
        v.push((0..4).map(|k| if bits >> k & 1 == 1 { -0.5 } else { 0.5 }).collect());
    }
    let base = [0.5 * GOLDEN, 0.5, 0.5 / GOLDEN, 0.0];
    let even_perms: Vec<[usize; 4]> = permutations4().into_iter().filter(|p| parity(p) == 0).collect();
    for perm in even_perms {
        for bits in 0..8u32 {
            let signed: Vec<f64> =
                (0..3).map(|k| if bits >> k & 1 == 1 { -base[k] } else { base[k] }).chain([0.0]).collect();
            let mut x = vec![0.0; 4];
            for (k, &slot) in perm.iter().enumerate() {
                x[slot] = signed[k];
            }
            v.push(x);
        }
    }
    v
}

fn permutations4() -> Vec<[usize; 4]> {
    let mut out = Vec::with_capacity(24);
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let p = [a, b, c, d];
                    if (0..4).all(|i| p.contains(&i)) {
                        out.push(p);
                    }
                }
            }
        }
    }
    out
}

fn parity(p: &[usize; 4]) -> usize {
    let mut inversions = 0;
    for i in 0..4 {
        for j in i + 1..4 {
            if p[i] > p[j] {
                inversions += 1;
            }
        }
    }
    inversions % 2
}

/// Boundary of the 600-cell on the unit 3-sphere, subdivided `level` times;
/// the action is the Hopf circle action.
pub fn build_s3_600cell(level: usize) -> Result<(Arc<SimplicialComplex>, GeometryData, ActionData)> {
    if level > MAX_S3_LEVEL {
        return Err(Error::InvalidParameter(format!("600-cell level {level} exceeds {MAX_S3_LEVEL}")));
    }
    let mut vertices = six_hundred_cell_vertices();
    // edge length is 1/φ ≈ 0.618 (squared 0.382); the next distance is 1
    let tets = cliques(&vertices, 0.5, 4);
    let mut complex = SimplicialComplex::from_top_simplices(3, &tets)?;
    for _ in 0..level {
        (complex, vertices) = subdivide(&complex, &vertices, Projection::UnitSphere)?;
    }
    let complex = Arc::new(complex);
    let geometry = GeometryData::from_vertices(Arc::clone(&complex), vertices, Projection::UnitSphere)?;
    Ok((complex, geometry, ActionData::hopf()))
}

/// Suspension: the join of `k` with two new apex vertices. Apexes get the two
/// labels following the largest vertex label of `k`.
pub fn suspension(k: &SimplicialComplex) -> SimplicialComplex {
    let next = k.simplices(0).iter().map(|s| s[0] + 1).max().unwrap_or(0);
    let apexes = [next, next + 1];
    let n = k.dimension();
    let mut per_degree: Vec<BTreeSet<Vec<usize>>> = vec![BTreeSet::new(); n + 2];
    per_degree[0].extend(apexes.iter().map(|&a| vec![a]));
    for p in 0..=n {
        for s in k.simplices(p) {
            per_degree[p].insert(s.clone());
            for &a in &apexes {
                let mut cone = s.clone();
                cone.push(a);
                per_degree[p + 1].insert(cone);
            }
        }
    }
    SimplicialComplex::from_simplex_lists(per_degree.into_iter().map(|s| s.into_iter().collect()).collect())
}
