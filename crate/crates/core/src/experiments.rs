//! Collapse sweeps, biLipschitz comparisons, Hodge duality tables, and the
//! built-in mesh catalogue used by the command line.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::builders::{
    build_circle, build_flat_torus, build_icosphere, build_s3_600cell, cycle_complex, suspension, torus_projection,
};
use crate::cohomology::{betti_numbers, induced_map_kernel_dim, kernel_dim_lower_bound, simplicial_pullback};
use crate::complex::SimplicialComplex;
use crate::eigen::{condition_estimate, spectrum_im_d, SolverOptions, SpectrumResult};
use crate::error::{Error, Result};
use crate::feec::MassFamily;
use crate::geometry::{ActionData, GeometryData};

/// A built-in mesh, written `circle:N`, `torus:NxM`, `icosphere:L` or
/// `s3:600cell[:L]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshSpec {
    Circle(usize),
    Torus(usize, usize),
    Icosphere(usize),
    S3(usize),
}

impl fmt::Display for MeshSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeshSpec::Circle(n) => write!(f, "circle:{n}"),
            MeshSpec::Torus(nx, ny) => write!(f, "torus:{nx}x{ny}"),
            MeshSpec::Icosphere(l) => write!(f, "icosphere:{l}"),
            MeshSpec::S3(0) => write!(f, "s3:600cell"),
            MeshSpec::S3(l) => write!(f, "s3:600cell:{l}"),
        }
    }
}

impl FromStr for MeshSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("unknown mesh `{s}`"));
        let num = |t: &str| t.parse::<usize>().map_err(|_| bad());
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["circle", n] => Ok(MeshSpec::Circle(num(n)?)),
            ["torus", dims] => {
                let (a, b) = dims.split_once('x').ok_or_else(bad)?;
                Ok(MeshSpec::Torus(num(a)?, num(b)?))
            }
            ["icosphere", l] => Ok(MeshSpec::Icosphere(num(l)?)),
            ["s3", "600cell"] => Ok(MeshSpec::S3(0)),
            ["s3", "600cell", l] => Ok(MeshSpec::S3(num(l)?)),
            _ => Err(bad()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    None,
    Rotation,
    Hopf,
    Translation,
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActionKind::None => "none",
            ActionKind::Rotation => "rotation",
            ActionKind::Hopf => "hopf",
            ActionKind::Translation => "translation",
        })
    }
}

impl FromStr for ActionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ActionKind::None),
            "rotation" => Ok(ActionKind::Rotation),
            "hopf" => Ok(ActionKind::Hopf),
            "translation" => Ok(ActionKind::Translation),
            _ => Err(Error::InvalidParameter(format!("unknown action `{s}`"))),
        }
    }
}

/// Quotient data for the kernel dimension `j`.
#[derive(Clone, Debug)]
pub enum QuotientModel {
    /// Only the quotient Betti numbers: `j` is the lower bound `b_p(G\M) - b_p(M)`.
    Betti(Vec<usize>),
    /// A complex with the quotient's homotopy type; treated like `Betti`.
    Complex(SimplicialComplex),
    /// A simplicial projection `M → G\M` given on vertices: `j` is exact.
    SimplicialMap { quotient: SimplicialComplex, vertex_map: Vec<usize> },
}

impl QuotientModel {
    pub fn betti(&self) -> Result<Vec<usize>> {
        match self {
            QuotientModel::Betti(b) => Ok(b.clone()),
            QuotientModel::Complex(k) | QuotientModel::SimplicialMap { quotient: k, .. } => {
                Ok(betti_numbers(k)?.values)
            }
        }
    }

    /// `dim Ker(H^p(G\M) → H^p(M))` and whether the value is exact.
    pub fn kernel_dimension(&self, manifold: &SimplicialComplex, betti_manifold: &[usize], p: usize) -> Result<(usize, bool)> {
        match self {
            QuotientModel::SimplicialMap { quotient, vertex_map } => {
                let pullback = simplicial_pullback(manifold, quotient, vertex_map)?;
                Ok((induced_map_kernel_dim(&pullback, quotient, manifold, p)?, true))
            }
            _ => {
                let bq = self.betti()?;
                let (j, exact) = kernel_dim_lower_bound(&bq, betti_manifold, p);
                Ok((j, exact || bq.get(p).copied().unwrap_or(0) == 0))
            }
        }
    }
}

/// A built-in mesh with its geometry.
#[derive(Clone, Debug)]
pub struct Mesh {
    pub spec: MeshSpec,
    pub complex: Arc<SimplicialComplex>,
    pub geometry: Arc<GeometryData>,
}

pub fn build_mesh(spec: MeshSpec) -> Result<Mesh> {
    let (complex, geometry) = match spec {
        MeshSpec::Circle(n) => build_circle(n)?,
        MeshSpec::Torus(nx, ny) => {
            let (k, g, _) = build_flat_torus(nx, ny)?;
            (k, g)
        }
        MeshSpec::Icosphere(l) => {
            let (k, g, _) = build_icosphere(l)?;
            (k, g)
        }
        MeshSpec::S3(l) => {
            let (k, g, _) = build_s3_600cell(l)?;
            (k, g)
        }
    };
    Ok(Mesh { spec, complex, geometry: Arc::new(geometry) })
}

impl Mesh {
    /// The requested action, if it acts on this mesh.
    pub fn action(&self, kind: ActionKind) -> Result<Option<ActionData>> {
        let unsupported = || Error::InvalidParameter(format!("action `{kind}` does not act on `{}`", self.spec));
        match (kind, self.spec) {
            (ActionKind::None, _) => Ok(None),
            (ActionKind::Rotation, MeshSpec::Icosphere(_)) => Ok(Some(ActionData::z_rotation())),
            (ActionKind::Hopf, MeshSpec::S3(_)) => Ok(Some(ActionData::hopf())),
            (ActionKind::Translation, MeshSpec::Torus(..)) => Ok(Some(ActionData::translation(2))),
            _ => Err(unsupported()),
        }
    }

    pub fn family(&self, kind: ActionKind) -> Result<MassFamily> {
        MassFamily::new(Arc::clone(&self.geometry), self.action(kind)?)
    }

    /// Built-in quotient data: the rotating sphere collapses to an interval,
    /// the Hopf 3-sphere to a 2-sphere, and the x-translated torus onto the
    /// y-circle through the simplicial projection.
    pub fn quotient(&self, kind: ActionKind) -> Result<QuotientModel> {
        match (kind, self.spec) {
            (ActionKind::Rotation, MeshSpec::Icosphere(_)) => {
                Ok(QuotientModel::Complex(suspension(&SimplicialComplex::point())))
            }
            (ActionKind::Hopf, MeshSpec::S3(_)) => {
                let (sphere, _, _) = build_icosphere(0)?;
                Ok(QuotientModel::Complex((*sphere).clone()))
            }
            (ActionKind::Translation, MeshSpec::Torus(nx, ny)) => Ok(QuotientModel::SimplicialMap {
                quotient: cycle_complex(ny)?,
                vertex_map: torus_projection(nx, ny, false),
            }),
            _ => Err(Error::MissingQuotient(format!("no built-in quotient for `{kind}` on `{}`", self.spec))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "consistent")]
    Consistent,
    #[serde(rename = "inconsistent")]
    Inconsistent,
    #[serde(rename = "no prediction")]
    NoPrediction,
    /// The sweep stopped at an ill-conditioned ε; the report is partial.
    #[serde(rename = "aborted")]
    Aborted,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOptions {
    /// Required decay of the first `j` eigenvalues across the grid.
    pub decay_factor: f64,
    /// Allowed variation of `λ_{j+1}` across the grid.
    pub stability_factor: f64,
    /// Mass-matrix condition numbers above this abort the sweep.
    pub cond_limit: f64,
    pub solver: SolverOptions,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { decay_factor: 10.0, stability_factor: 3.0, cond_limit: 1e12, solver: SolverOptions::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub mesh: String,
    pub action: String,
    pub degree: usize,
    pub eps_grid: Vec<f64>,
    pub k: usize,
    /// `eigenvalues[i][j-1] = λ_{p,j}(eps_grid[i])`.
    pub eigenvalues: Vec<Vec<f64>>,
    pub zero_modes: Vec<usize>,
    pub cond_estimates: Vec<f64>,
    pub betti_manifold: Vec<usize>,
    pub betti_quotient: Vec<usize>,
    pub j_theorem: usize,
    pub j_exact: bool,
    /// `λ_j(min ε) / λ_j(max ε)` for `j ≤ j_theorem`.
    pub decay_ratios: Vec<f64>,
    /// `max / min` of `λ_{j_theorem+1}` over the grid.
    pub stability_ratio: Option<f64>,
    /// Indices `j` whose curve increases somewhere as ε decreases.
    pub nonmonotone: Vec<usize>,
    pub verdict: Verdict,
    pub abort_reason: Option<String>,
}

impl SweepReport {
    /// One row per `(ε, j)`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("mesh,action,p,eps,j,lambda,zero_modes,cond_estimate\n");
        for (i, row) in self.eigenvalues.iter().enumerate() {
            for (j, l) in row.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{:?},{},{:?},{},{:?}\n",
                    self.mesh,
                    self.action,
                    self.degree,
                    self.eps_grid[i],
                    j + 1,
                    l,
                    self.zero_modes[i],
                    self.cond_estimates[i]
                ));
            }
        }
        out
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty ε grid".into()));
    }
    if grid.iter().any(|&e| !(0.05..=1.0).contains(&e)) {
        return Err(Error::InvalidParameter("ε grid must lie in [0.05, 1]".into()));
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("ε grid must be strictly decreasing".into()));
    }
    Ok(())
}

fn mass_condition(family: &MassFamily, eps: f64, p: usize, dense_limit: usize) -> Result<f64> {
    let lo = condition_estimate(&family.weighted_mass_matrix(eps, p - 1)?, dense_limit)?;
    let hi = condition_estimate(&family.weighted_mass_matrix(eps, p)?, dense_limit)?;
    Ok(lo.max(hi))
}

/// Runs the Im(d) spectrum of degree `p` along a decreasing ε grid and
/// compares the first `j_theorem` eigenvalues against the rest.
pub fn collapse_sweep(
    mesh: &str,
    family: &MassFamily,
    quotient: &QuotientModel,
    p: usize,
    grid: &[f64],
    k: usize,
    opts: &SweepOptions,
) -> Result<SweepReport> {
    let action = family
        .action()
        .ok_or_else(|| Error::InvalidParameter("a collapse sweep needs an action".into()))?;
    check_grid(grid)?;
    let n = family.dimension();
    if p == 0 || p > n {
        return Err(Error::DegreeOutOfRange { degree: p, max: n });
    }
    let betti_manifold = (0..=n).map(|q| family.betti_number(q)).collect::<Result<Vec<_>>>()?;
    let betti_quotient = quotient.betti()?;
    let (j_theorem, j_exact) = quotient.kernel_dimension(family.complex(), &betti_manifold, p)?;
    if j_theorem > 0 && k <= j_theorem {
        return Err(Error::InvalidParameter(format!("k = {k} must exceed j = {j_theorem}")));
    }

    let points: Vec<Result<(f64, Option<SpectrumResult>)>> = grid
        .par_iter()
        .map(|&eps| {
            let cond = mass_condition(family, eps, p, opts.solver.dense_limit)?;
            if cond > opts.cond_limit {
                return Ok((cond, None));
            }
            Ok((cond, Some(spectrum_im_d(family, eps, p, k, &opts.solver)?)))
        })
        .collect();

    let mut report = SweepReport {
        mesh: mesh.to_string(),
        action: action.tag().to_string(),
        degree: p,
        eps_grid: Vec::new(),
        k,
        eigenvalues: Vec::new(),
        zero_modes: Vec::new(),
        cond_estimates: Vec::new(),
        betti_manifold,
        betti_quotient,
        j_theorem,
        j_exact,
        decay_ratios: Vec::new(),
        stability_ratio: None,
        nonmonotone: Vec::new(),
        verdict: Verdict::NoPrediction,
        abort_reason: None,
    };
    for (point, &eps) in points.into_iter().zip(grid) {
        let (cond, spectrum) = point?;
        match spectrum {
            Some(s) => {
                report.eps_grid.push(eps);
                report.eigenvalues.push(s.eigenvalues);
                report.zero_modes.push(s.zero_modes);
                report.cond_estimates.push(cond);
            }
            None => {
                report.abort_reason = Some(format!("mass condition estimate {cond:e} at ε = {eps} exceeds the limit"));
                break;
            }
        }
    }
    report.nonmonotone = (0..k)
        .filter(|&j| report.eigenvalues.windows(2).any(|w| w[1][j] > w[0][j] * (1.0 + 1e-12)))
        .map(|j| j + 1)
        .collect();
    if report.abort_reason.is_some() {
        report.verdict = Verdict::Aborted;
        return Ok(report);
    }
    if j_theorem == 0 {
        return Ok(report);
    }
    let (first, last) = (&report.eigenvalues[0], &report.eigenvalues[report.eigenvalues.len() - 1]);
    report.decay_ratios = (0..j_theorem).map(|j| last[j] / first[j]).collect();
    let next: Vec<f64> = report.eigenvalues.iter().map(|row| row[j_theorem]).collect();
    let (lo, hi) = next.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let stability = hi / lo;
    report.stability_ratio = Some(stability);
    let decays = report.decay_ratios.iter().all(|&r| r <= 1.0 / opts.decay_factor);
    report.verdict = if decays && stability < opts.stability_factor {
        Verdict::Consistent
    } else {
        Verdict::Inconsistent
    };
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub geometry_a: String,
    pub geometry_b: String,
    pub degree: usize,
    /// Largest `½|log μ|` over top simplices, `μ` the eigenvalues of the Gram pair.
    pub distortion: f64,
    /// Exponent `J = 2p + n` of the bound.
    pub exponent: usize,
    pub bound: f64,
    pub eigenvalues_a: Vec<f64>,
    pub eigenvalues_b: Vec<f64>,
    /// `λ^B_j / λ^A_j`.
    pub ratios: Vec<f64>,
    pub within_bound: Vec<bool>,
    pub pass: bool,
}

/// Largest half log-eigenvalue of the per-cell Gram pairs of two geometries
/// on the same complex.
pub fn metric_distortion(a: &GeometryData, b: &GeometryData) -> Result<f64> {
    if a.complex() != b.complex() {
        return Err(Error::MismatchedComplexes("geometries live on different complexes".into()));
    }
    let mut s = 0.0f64;
    for (ca, cb) in a.cells().iter().zip(b.cells()) {
        if ca.gram == cb.gram {
            continue;
        }
        let chol = ca.gram.clone().cholesky().ok_or_else(|| Error::NotPositiveDefinite("cell Gram".into()))?;
        let l = chol.l();
        let x = l.solve_lower_triangular(&cb.gram).expect("nonsingular factor");
        let c = l.solve_lower_triangular(&x.transpose()).expect("nonsingular factor");
        for mu in ((&c + c.transpose()) * 0.5).symmetric_eigenvalues().iter() {
            s = s.max(0.5 * mu.ln().abs());
        }
    }
    Ok(s)
}

/// Compares the Im(d) spectra of two geometries of one complex against the
/// `e^{±Js}` envelope.
pub fn bilipschitz_compare(
    labels: (&str, &str),
    a: Arc<GeometryData>,
    b: Arc<GeometryData>,
    p: usize,
    k: usize,
    solver: &SolverOptions,
) -> Result<CompareReport> {
    let distortion = metric_distortion(&a, &b)?;
    let n = a.complex().dimension();
    let exponent = 2 * p + n;
    let bound = (exponent as f64 * distortion).exp();
    let fa = MassFamily::new(a, None)?;
    let fb = MassFamily::new(b, None)?;
    let sa = spectrum_im_d(&fa, 1.0, p, k, solver)?;
    let sb = spectrum_im_d(&fb, 1.0, p, k, solver)?;
    let ratios: Vec<f64> = sb.eigenvalues.iter().zip(&sa.eigenvalues).map(|(b, a)| b / a).collect();
    let slack = 1.0 + 1e-12;
    let within_bound: Vec<bool> = ratios.iter().map(|&r| r <= bound * slack && r * bound * slack >= 1.0).collect();
    Ok(CompareReport {
        geometry_a: labels.0.to_string(),
        geometry_b: labels.1.to_string(),
        degree: p,
        distortion,
        exponent,
        bound,
        eigenvalues_a: sa.eigenvalues,
        eigenvalues_b: sb.eigenvalues,
        pass: within_bound.iter().all(|&w| w),
        ratios,
        within_bound,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualityRow {
    /// Degree of the exact side, Im(d) ⊂ Ω^p.
    pub degree: usize,
    /// Degree `n - p` of the coexact side Im(d*) ⊂ Ω^{n-p}.
    pub dual_degree: usize,
    pub exact: Vec<f64>,
    pub coexact: Vec<f64>,
    /// `|a - b| / max(a, b)` per index.
    pub relative_gaps: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub mesh: String,
    pub action: String,
    pub eps: f64,
    pub rows: Vec<DualityRow>,
}

/// Pairs the positive spectrum on Im(d) ⊂ Ω^p with that on Im(d*) ⊂ Ω^{n-p}
/// for every `p = 1..n`. The coexact spectrum in degree `n - p` is the exact
/// spectrum in degree `n - p + 1`.
pub fn hodge_duality_report(mesh: &str, family: &MassFamily, eps: f64, k: usize, solver: &SolverOptions) -> Result<DualityReport> {
    let n = family.dimension();
    let spectra = (1..=n)
        .into_par_iter()
        .map(|p| spectrum_im_d(family, eps, p, k, solver))
        .collect::<Result<Vec<_>>>()?;
    let rows = (1..=n)
        .map(|p| {
            let exact = spectra[p - 1].eigenvalues.clone();
            let coexact = spectra[n - p].eigenvalues.clone();
            let relative_gaps = exact.iter().zip(&coexact).map(|(a, b)| (a - b).abs() / a.max(*b)).collect();
            DualityRow { degree: p, dual_degree: n - p, exact, coexact, relative_gaps }
        })
        .collect();
    Ok(DualityReport {
        mesh: mesh.to_string(),
        action: family.action().map_or("none", |a| a.tag()).to_string(),
        eps,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mesh_specs_round_trip() {
        for s in ["circle:48", "torus:4x4", "icosphere:2", "s3:600cell", "s3:600cell:1"] {
            assert_eq!(s.parse::<MeshSpec>().unwrap().to_string(), s);
        }
        assert!("torus:4".parse::<MeshSpec>().is_err());
        assert!("cube:3".parse::<MeshSpec>().is_err());
    }

    #[test]
    fn grid_must_decrease_within_range() {
        assert!(check_grid(&[1.0, 0.5, 0.1]).is_ok());
        assert!(check_grid(&[0.5, 1.0]).is_err());
        assert!(check_grid(&[1.0, 0.01]).is_err());
        assert!(check_grid(&[]).is_err());
    }

    #[test]
    fn action_compatibility() {
        let torus = build_mesh(MeshSpec::Torus(4, 4)).unwrap();
        assert!(torus.action(ActionKind::Hopf).is_err());
        assert!(torus.action(ActionKind::Translation).unwrap().is_some());
        assert!(matches!(torus.quotient(ActionKind::None), Err(Error::MissingQuotient(_))));
    }

    #[test]
    fn torus_translation_kernel_is_exactly_zero() {
        let torus = build_mesh(MeshSpec::Torus(4, 4)).unwrap();
        let q = torus.quotient(ActionKind::Translation).unwrap();
        assert_eq!(q.kernel_dimension(&torus.complex, &[1, 2, 1], 1).unwrap(), (0, true));
    }

    #[test]
    fn identical_geometries_have_zero_distortion() {
        let m = build_mesh(MeshSpec::Icosphere(1)).unwrap();
        assert_eq!(metric_distortion(&m.geometry, &m.geometry).unwrap(), 0.0);
        let doubled = m.geometry.scaled(2.0).unwrap();
        assert!((metric_distortion(&m.geometry, &doubled).unwrap() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn csv_has_one_row_per_eigenvalue() {
        let report = SweepReport {
            mesh: "m".into(),
            action: "a".into(),
            degree: 2,
            eps_grid: vec![1.0, 0.5],
            k: 2,
            eigenvalues: vec![vec![1.0, 2.0], vec![0.5, 2.0]],
            zero_modes: vec![3, 3],
            cond_estimates: vec![10.0, 20.0],
            betti_manifold: vec![1, 0, 0, 1],
            betti_quotient: vec![1, 0, 1],
            j_theorem: 1,
            j_exact: true,
            decay_ratios: vec![0.5],
            stability_ratio: Some(1.0),
            nonmonotone: vec![],
            verdict: Verdict::Inconsistent,
            abort_reason: None,
        };
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.contains("m,a,2,0.5,1,0.5,3,20.0"));
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"inconsistent\""));
        assert_eq!(serde_json::from_str::<SweepReport>(&json).unwrap(), report);
    }
}
