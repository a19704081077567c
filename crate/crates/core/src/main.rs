use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use spectral_collapse::cohomology::betti_numbers;
use spectral_collapse::eigen::{hodge_spectrum, spectrum_im_d, SolverMethod, SolverOptions, SpectrumResult};
use spectral_collapse::experiments::{
    bilipschitz_compare, build_mesh, collapse_sweep, hodge_duality_report, ActionKind, MeshSpec, SweepOptions, Verdict,
};
use spectral_collapse::meshio::MeshFile;
use spectral_collapse::sparse::to_triplet_text;
use spectral_collapse::{Error, Result};

#[derive(Parser)]
#[command(name = "spectral-collapse", version, about = "Hodge Laplacian spectra under collapsing group actions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a built-in mesh in the JSON interchange format.
    Mesh(MeshArgs),
    /// Betti numbers and Euler characteristic.
    Betti(BettiArgs),
    /// Spectrum of the Im(d) pencil or of the full Hodge Laplacian.
    Spectrum(SpectrumArgs),
    /// Collapse sweep over a decreasing ε grid.
    Collapse(CollapseArgs),
    /// Spectral comparison of a mesh with a rescaled or perturbed copy.
    Compare(CompareArgs),
    /// Exact versus coexact spectra in complementary degrees.
    Duality(DualityArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Auto,
    Dense,
    Iterative,
}

#[derive(Args)]
struct SolverArgs {
    /// Relative residual tolerance of the iterative solver.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, value_enum, default_value = "auto")]
    method: Method,
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
}

impl SolverArgs {
    fn options(&self) -> SolverOptions {
        let method = match self.method {
            Method::Auto => SolverMethod::Auto,
            Method::Dense => SolverMethod::Dense,
            Method::Iterative => SolverMethod::Iterative,
        };
        SolverOptions { method, tol: self.tol, seed: self.seed, ..Default::default() }
    }
}

#[derive(Args)]
struct MeshArgs {
    #[arg(long)]
    mesh: MeshSpec,
    /// Write every mass and coboundary matrix as triplet text into this directory.
    #[arg(long)]
    export_matrices: Option<PathBuf>,
    #[arg(long, default_value = "none")]
    action: ActionKind,
    #[arg(long, default_value_t = 1.0)]
    eps: f64,
}

#[derive(Args)]
struct BettiArgs {
    #[arg(long, required_unless_present = "mesh_file")]
    mesh: Option<MeshSpec>,
    /// A mesh in the JSON interchange format.
    #[arg(long, conflicts_with = "mesh")]
    mesh_file: Option<PathBuf>,
}

#[derive(Args)]
struct SpectrumArgs {
    #[arg(long)]
    mesh: MeshSpec,
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = 1.0)]
    eps: f64,
    #[arg(long, default_value_t = 6)]
    k: usize,
    #[arg(long, default_value = "none")]
    action: ActionKind,
    /// Full Hodge Laplacian instead of the Im(d) pencil.
    #[arg(long)]
    hodge: bool,
    #[arg(long, value_enum, default_value = "json")]
    out: OutputFormat,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct CollapseArgs {
    #[arg(long)]
    mesh: MeshSpec,
    #[arg(long)]
    action: ActionKind,
    #[arg(long)]
    p: usize,
    /// Strictly decreasing grid within [0.05, 1].
    #[arg(long, value_delimiter = ',', default_value = "1,0.5,0.25,0.1")]
    eps: Vec<f64>,
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 10.0)]
    decay_factor: f64,
    /// Exit with status 1 unless the verdict is `consistent` or `no prediction`.
    #[arg(long)]
    strict: bool,
    #[arg(long, value_enum, default_value = "json")]
    out: OutputFormat,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    mesh: MeshSpec,
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = 6)]
    k: usize,
    /// Uniform scale factor applied to the second geometry.
    #[arg(long, conflicts_with = "conformal")]
    scale: Option<f64>,
    /// Bound on a random per-cell conformal factor `u`, metric `e^u g`.
    #[arg(long)]
    conformal: Option<f64>,
    /// Seed of the conformal factor.
    #[arg(long, default_value_t = 7)]
    perturbation_seed: u64,
    #[arg(long)]
    strict: bool,
    #[arg(long, value_enum, default_value = "json")]
    out: OutputFormat,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct DualityArgs {
    #[arg(long)]
    mesh: MeshSpec,
    #[arg(long, default_value_t = 1.0)]
    eps: f64,
    #[arg(long, default_value_t = 6)]
    k: usize,
    #[arg(long, default_value = "none")]
    action: ActionKind,
    #[arg(long, value_enum, default_value = "json")]
    out: OutputFormat,
    #[command(flatten)]
    solver: SolverArgs,
}

enum Outcome {
    Ok,
    Failed,
    Aborted,
}

fn json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    writeln!(out, "{}", serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn spectrum_csv(mesh: &str, action: ActionKind, r: &SpectrumResult) -> String {
    let mut out = String::from("mesh,action,p,eps,j,lambda,zero_modes,residual\n");
    for (j, (l, res)) in r.eigenvalues.iter().zip(&r.residuals).enumerate() {
        out.push_str(&format!("{mesh},{action},{},{:?},{},{l:?},{},{res:?}\n", r.degree, r.eps, j + 1, r.zero_modes));
    }
    out
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Mesh(a) => {
            let mesh = build_mesh(a.mesh)?;
            if let Some(dir) = &a.export_matrices {
                fs::create_dir_all(dir)?;
                let family = mesh.family(a.action)?;
                for p in 0..=family.dimension() {
                    fs::write(dir.join(format!("mass_{p}.txt")), to_triplet_text(&family.weighted_mass_matrix(a.eps, p)?))?;
                    if p < family.dimension() {
                        fs::write(dir.join(format!("coboundary_{p}.txt")), to_triplet_text(family.coboundary(p)?))?;
                    }
                }
            }
            println!("{}", MeshFile::new(&mesh.complex, Some(mesh.geometry.vertices().to_vec())).to_json()?);
            Ok(Outcome::Ok)
        }
        Command::Betti(a) => {
            let complex = match (&a.mesh, &a.mesh_file) {
                (Some(spec), _) => (*build_mesh(*spec)?.complex).clone(),
                (None, Some(path)) => MeshFile::from_json(&fs::read_to_string(path)?)?.complex()?,
                (None, None) => unreachable!("clap requires one source"),
            };
            let b = betti_numbers(&complex)?;
            for w in &b.warnings {
                log::warn!("{w}");
            }
            #[derive(Serialize)]
            struct Out {
                betti: Vec<usize>,
                euler_characteristic: i64,
            }
            json(&Out { euler_characteristic: b.euler_characteristic(), betti: b.values })?;
            Ok(Outcome::Ok)
        }
        Command::Spectrum(a) => {
            let family = build_mesh(a.mesh)?.family(a.action)?;
            let opts = a.solver.options();
            let r = if a.hodge {
                hodge_spectrum(&family, a.eps, a.p, a.k, &opts)?
            } else {
                spectrum_im_d(&family, a.eps, a.p, a.k, &opts)?
            };
            match a.out {
                OutputFormat::Json => json(&r)?,
                OutputFormat::Csv => print!("{}", spectrum_csv(&a.mesh.to_string(), a.action, &r)),
            }
            Ok(Outcome::Ok)
        }
        Command::Collapse(a) => {
            let mesh = build_mesh(a.mesh)?;
            let family = mesh.family(a.action)?;
            let quotient = mesh.quotient(a.action)?;
            let opts = SweepOptions { decay_factor: a.decay_factor, solver: a.solver.options(), ..Default::default() };
            let report = collapse_sweep(&a.mesh.to_string(), &family, &quotient, a.p, &a.eps, a.k, &opts)?;
            match a.out {
                OutputFormat::Json => json(&report)?,
                OutputFormat::Csv => print!("{}", report.to_csv()),
            }
            Ok(match report.verdict {
                Verdict::Aborted => Outcome::Aborted,
                Verdict::Inconsistent if a.strict => Outcome::Failed,
                _ => Outcome::Ok,
            })
        }
        Command::Compare(a) => {
            let mesh = build_mesh(a.mesh)?;
            let (label, other) = match (a.scale, a.conformal) {
                (Some(c), _) => (format!("{} scaled by {c}", a.mesh), mesh.geometry.scaled(c)?),
                (None, Some(amp)) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(a.perturbation_seed);
                    let u: Vec<f64> = mesh.geometry.cells().iter().map(|_| rng.random_range(-amp..=amp)).collect();
                    (format!("{} conformal |u| <= {amp}", a.mesh), mesh.geometry.conformally_perturbed(&u)?)
                }
                (None, None) => (a.mesh.to_string(), (*mesh.geometry).clone()),
            };
            let report = bilipschitz_compare(
                (&a.mesh.to_string(), &label),
                Arc::clone(&mesh.geometry),
                Arc::new(other),
                a.p,
                a.k,
                &a.solver.options(),
            )?;
            match a.out {
                OutputFormat::Json => json(&report)?,
                OutputFormat::Csv => {
                    println!("j,lambda_a,lambda_b,ratio,within_bound");
                    for j in 0..report.ratios.len() {
                        println!(
                            "{},{:?},{:?},{:?},{}",
                            j + 1,
                            report.eigenvalues_a[j],
                            report.eigenvalues_b[j],
                            report.ratios[j],
                            report.within_bound[j]
                        );
                    }
                }
            }
            Ok(if a.strict && !report.pass { Outcome::Failed } else { Outcome::Ok })
        }
        Command::Duality(a) => {
            let family = build_mesh(a.mesh)?.family(a.action)?;
            let report = hodge_duality_report(&a.mesh.to_string(), &family, a.eps, a.k, &a.solver.options())?;
            match a.out {
                OutputFormat::Json => json(&report)?,
                OutputFormat::Csv => {
                    println!("p,dual_p,j,exact,coexact,relative_gap");
                    for row in &report.rows {
                        for j in 0..row.relative_gaps.len() {
                            println!(
                                "{},{},{},{:?},{:?},{:?}",
                                row.degree,
                                row.dual_degree,
                                j + 1,
                                row.exact[j],
                                row.coexact[j],
                                row.relative_gaps[j]
                            );
                        }
                    }
                }
            }
            Ok(Outcome::Ok)
        }
    }
}

fn is_usage_error(e: &Error) -> bool {
    matches!(
        e,
        Error::InvalidParameter(_)
            | Error::DegreeOutOfRange { .. }
            | Error::NonPositiveEpsilon(_)
            | Error::MissingQuotient(_)
            | Error::MismatchedComplexes(_)
            | Error::UnsupportedGroupDimension(_)
            | Error::DimensionMismatch(_)
            | Error::Format(_)
            | Error::Io(_)
            | Error::Json(_)
    )
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Failed) => ExitCode::from(1),
        Ok(Outcome::Aborted) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_usage_error(&e) { 2 } else { 3 })
        }
    }
}
