//! `crqopt` command-line frontend.
//!
//! Exit status: 0 on success, 2 when the Lanczos iteration stops at `maxit`
//! without meeting the tolerance, 3 for an infeasible problem, 1 for usage,
//! I/O and validation errors.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crqopt::analysis::{bound_table, error_history, write_bounds_csv, Reference};
use crqopt::clustering::{segment, GraphParams};
use crqopt::driver::write_history_csv;
use crqopt::instances::{generate, G0Kind, InstanceSpec, SpectrumKind};
use crqopt::io::{self, labels, manifest, matrix_market, pgm};
use crqopt::problem::{classify, Feasibility, ProjectedOperator};
use crqopt::reference::{build_reduction, direct_solve, dual_check, equivalence_maps, DENSE_CAP};
use crqopt::{CrqProblem, CrqSolution, Error, Method, SolveOptions, SymOperator};

#[derive(Parser)]
#[command(name = "crqopt", version, about = "Constrained Rayleigh quotient minimization by Lanczos projection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the problem named by a manifest and write the solution and history.
    Solve {
        /// Manifest with `A=`, `C=` and `b=` lines.
        #[arg(long)]
        problem: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Generate a synthetic problem with known reduced data.
    Gen {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Solve generated problems and write error and bound histories.
    Bench {
        /// Spec files, or directories written by `gen`.
        #[arg(required = true)]
        specs: Vec<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Segment a grayscale image from seed labels.
    Segment {
        /// PGM image (P2 or P5).
        #[arg(long)]
        image: PathBuf,
        /// Label file with `row col +|-` lines.
        #[arg(long)]
        labels: PathBuf,
        /// Affinity scale as a fraction of the squared intensity range.
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        /// Neighbourhood radius in pixels.
        #[arg(long, default_value_t = 5)]
        radius: usize,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Cross-check a small problem against the dense reference solvers.
    Validate {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        tolerance: f64,
    },
}

/// Overrides for the solver settings. Unset flags keep the defaults of the
/// subcommand.
#[derive(Args, Clone, Default)]
struct SolverArgs {
    /// `lgopt` or `qepmin`.
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    maxit: Option<usize>,
    #[arg(long)]
    minit: Option<usize>,
    #[arg(long)]
    checkstep: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Skip the hard-case test after the main loop.
    #[arg(long)]
    no_hard_check: bool,
}

impl SolverArgs {
    fn apply(&self, mut opts: SolveOptions) -> SolveOptions {
        if let Some(m) = self.method {
            opts.method = m;
        }
        if let Some(t) = self.tol {
            opts.tol = t;
        }
        if let Some(m) = self.maxit {
            opts.maxit = m;
        }
        if let Some(m) = self.minit {
            opts.minit = m;
        }
        if let Some(c) = self.checkstep {
            opts.checkstep = c;
        }
        if let Some(s) = self.seed {
            opts.rng_seed = s;
        }
        if self.no_hard_check {
            opts.detect_hard = false;
        }
        opts
    }
}

#[derive(Args)]
struct SpecArgs {
    /// Read the spec from a file instead of flags.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 1100)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    m: usize,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 100.0)]
    beta: f64,
    #[arg(long, default_value_t = 0.9)]
    zeta: f64,
    /// Use `g0ᵢ = e^{iη}` with this η instead of all ones.
    #[arg(long, allow_hyphen_values = true)]
    geometric: Option<f64>,
    /// Append this isolated eigenvalue below the Chebyshev nodes.
    #[arg(long, allow_hyphen_values = true)]
    isolated: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SpecArgs {
    fn to_spec(&self) -> anyhow::Result<InstanceSpec> {
        if let Some(path) = &self.spec {
            return read_spec(path);
        }
        let spec = InstanceSpec {
            n: self.n,
            m: self.m,
            alpha: self.alpha,
            beta: self.beta,
            zeta: self.zeta,
            g0_kind: self.geometric.map_or(G0Kind::Ones, G0Kind::Geometric),
            spectrum_kind: self
                .isolated
                .map_or(SpectrumKind::ChebyshevExtreme, SpectrumKind::ChebyshevPlusIsolated),
            rng_seed: self.seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn read_spec(path: &Path) -> anyhow::Result<InstanceSpec> {
    let file = if path.is_dir() { path.join("spec.txt") } else { path.to_path_buf() };
    let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
    Ok(InstanceSpec::parse(&text, &file.display().to_string())?)
}

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_solution(dir: &Path, problem: &CrqProblem, sol: &CrqSolution) -> anyhow::Result<()> {
    io::write_vector(&sol.v, create(dir, "solution.txt")?)?;
    write_history_csv(&sol.history, create(dir, "history.csv")?)?;
    let mut s = create(dir, "summary.txt")?;
    writeln!(s, "mu={:.17e}", sol.mu)?;
    writeln!(s, "objective={:.17e}", sol.objective)?;
    writeln!(s, "steps={}", sol.k)?;
    writeln!(s, "case={}", sol.case)?;
    writeln!(s, "converged={}", sol.converged)?;
    writeln!(s, "constraint_residual={:.6e}", problem.constraint_residual(&sol.v))?;
    writeln!(s, "norm_error={:.6e}", (sol.v.norm() - 1.0).abs())?;
    if let Some(gap) = sol.hard_gap() {
        writeln!(s, "hard_gap={gap:.6e}")?;
    }
    s.flush()?;
    Ok(())
}

fn cmd_solve(problem: &Path, solver: &SolverArgs, out: &Path) -> anyhow::Result<()> {
    let p = manifest::load_problem(problem).with_context(|| format!("loading {}", problem.display()))?;
    let opts = solver.apply(SolveOptions::default());
    std::fs::create_dir_all(out)?;
    match crqopt::solve(&p, &opts) {
        Ok(sol) => {
            write_solution(out, &p, &sol)?;
            println!("mu = {:.12e}, objective = {:.12e}, steps = {}, case = {}", sol.mu, sol.objective, sol.k, sol.case);
            Ok(())
        }
        Err(Error::NotConverged(sol)) => {
            write_solution(out, &p, &sol)?;
            Err(Error::NotConverged(sol).into())
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_gen(spec: &SpecArgs, out: &Path) -> anyhow::Result<()> {
    let spec = spec.to_spec()?;
    let (problem, truth) = generate(&spec)?;
    std::fs::create_dir_all(out)?;
    write!(create(out, "spec.txt")?, "{spec}")?;
    matrix_market::write_symmetric(&truth.op.to_dense(), create(out, "A.mtx")?)?;
    matrix_market::write_array(problem.c(), create(out, "C.mtx")?)?;
    io::write_vector(problem.b(), create(out, "b.txt")?)?;
    write!(create(out, "problem.txt")?, "{}", manifest::Manifest::render("A.mtx", "C.mtx", "b.txt"))?;
    io::write_vector(&truth.v_star, create(out, "v_star.txt")?)?;
    let mut t = create(out, "truth.txt")?;
    writeln!(t, "lambda_star={:.17e}", truth.lambda_star)?;
    writeln!(t, "objective_star={:.17e}", truth.objective_star)?;
    writeln!(t, "gamma={:.17e}", truth.gamma)?;
    writeln!(t, "kappa={:.17e}", truth.kappa)?;
    writeln!(t, "kappa_plus={:.17e}", truth.kappa_plus)?;
    writeln!(t, "theta_min={:.17e}", truth.theta_min)?;
    writeln!(t, "theta_2={:.17e}", truth.theta_2)?;
    writeln!(t, "theta_max={:.17e}", truth.theta_max)?;
    t.flush()?;
    println!(
        "lambda_star = {:.6}, kappa = {:.6}, kappa_plus = {:.6}",
        truth.lambda_star, truth.kappa, truth.kappa_plus
    );
    Ok(())
}

struct BenchRow {
    name: String,
    steps: usize,
    mu: f64,
    lambda_star: f64,
    final_err1: f64,
    converged: bool,
}

/// Output prefix for a bench input: the directory name for `gen` output
/// directories (or their `spec.txt`), otherwise the file stem.
fn output_stem(path: &Path) -> String {
    let named = if path.is_dir() || path.file_name().is_some_and(|f| f == "spec.txt") {
        let dir = if path.is_dir() { Some(path) } else { path.parent() };
        dir.and_then(|d| d.file_name())
    } else {
        path.file_stem()
    };
    named.map_or_else(|| "bench".to_string(), |s| s.to_string_lossy().into_owned())
}

fn bench_one(path: &Path, solver: &SolverArgs, out: &Path) -> anyhow::Result<BenchRow> {
    let spec = read_spec(path)?;
    let (problem, truth) = generate(&spec)?;
    let opts = SolveOptions {
        record_iterates: true,
        ..solver.apply(SolveOptions::default())
    };
    let sol = match crqopt::solve(&problem, &opts) {
        Ok(s) => s,
        Err(Error::NotConverged(s)) => *s,
        Err(e) => return Err(e.into()),
    };
    let reference = Reference {
        v: &truth.v_star,
        objective: truth.objective_star,
        lambda: truth.lambda_star,
        a: problem.a().as_ref(),
    };
    let errors = error_history(&sol.history, &reference);
    let rows = bound_table(&errors, &truth.bound_inputs());
    let stem = output_stem(path);
    write_bounds_csv(&rows, truth.objective_star, truth.lambda_star, create(out, &format!("{stem}_bounds.csv"))?)?;
    write_history_csv(&sol.history, create(out, &format!("{stem}_history.csv"))?)?;
    Ok(BenchRow {
        name: stem,
        steps: sol.k,
        mu: sol.mu,
        lambda_star: truth.lambda_star,
        final_err1: errors.last().map_or(f64::NAN, |e| e.err1),
        converged: sol.converged,
    })
}

fn cmd_bench(specs: &[PathBuf], solver: &SolverArgs, out: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(out)?;
    let results: Vec<anyhow::Result<BenchRow>> = specs.par_iter().map(|p| bench_one(p, solver, out)).collect();
    let mut failed = false;
    for (path, r) in specs.iter().zip(results) {
        match r {
            Ok(row) => println!(
                "{}: steps = {}, mu = {:.10}, lambda_star = {:.10}, final err1 = {:.3e}{}",
                row.name,
                row.steps,
                row.mu,
                row.lambda_star,
                row.final_err1,
                if row.converged { "" } else { " (not converged)" }
            ),
            Err(e) => {
                eprintln!("{}: {e:#}", path.display());
                failed = true;
            }
        }
    }
    if failed {
        bail!("some benchmarks failed");
    }
    Ok(())
}

fn cmd_segment(
    image: &Path,
    label_path: &Path,
    params: GraphParams,
    solver: &SolverArgs,
    out: &Path,
) -> anyhow::Result<()> {
    let img = pgm::read_file(image)?;
    let text = std::fs::read_to_string(label_path).with_context(|| format!("reading {}", label_path.display()))?;
    let seeds = labels::read(&text, &label_path.display().to_string())?;
    let opts = solver.apply(SolveOptions::clustering());
    let seg = segment(img.width, img.height, &img.to_unit(), &seeds, params, &opts)?;
    std::fs::create_dir_all(out)?;
    pgm::write_p5(&pgm::Pgm::from_unit(img.width, img.height, &seg.heat, 65535), create(out, "heat.pgm")?)?;
    let mask: Vec<f64> = seg.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    pgm::write_p5(&pgm::Pgm::from_unit(img.width, img.height, &mask, 255), create(out, "mask.pgm")?)?;
    create(out, "stats.txt")?.write_all(seg.stats.to_kv().as_bytes())?;
    print!("{}", seg.stats.to_kv());
    if !seg.stats.converged {
        bail!(Error::MaxIter {
            what: "segmentation solve",
            iterations: seg.stats.lanczos_steps
        });
    }
    Ok(())
}

fn cmd_validate(problem: &Path, tolerance: f64) -> anyhow::Result<()> {
    let p = manifest::load_problem(problem).with_context(|| format!("loading {}", problem.display()))?;
    if p.n() > DENSE_CAP {
        bail!(Error::TooLarge { n: p.n(), cap: DENSE_CAP });
    }
    let mut failures = Vec::new();
    let mut check = |name: &str, value: f64, limit: f64| {
        let ok = value <= limit;
        println!("{:<28} {value:>12.3e}  (limit {limit:.1e})  {}", name, if ok { "ok" } else { "FAILED" });
        if !ok {
            failures.push(name.to_string());
        }
    };

    let direct = direct_solve(&p)?;
    println!("direct: mu = {:.12e}, objective = {:.12e}, case = {}", direct.mu, direct.objective, direct.case);
    let proj = ProjectedOperator::new(&p)?;
    if let Feasibility::Interior(setup) = classify(&p, &proj)? {
        let red = build_reduction(&p, &setup, DENSE_CAP)?;
        let eq = equivalence_maps(&red, setup.gamma, Some(&p))?;
        check("multiplier gap LG/QEP", eq.value_gap, tolerance * (1.0 + eq.lambda_lg.abs()));
        check("equivalence map residual", eq.max_residual(), tolerance * (1.0 + p.norm_a()));
        match dual_check(&p) {
            Ok(d) => check("dual gap", d.gap, 1e-6 * (1.0 + d.primal_value.abs())),
            Err(Error::NotPositiveDefinite(what)) => println!("dual check skipped: {what}"),
            Err(e) => return Err(e.into()),
        }
    }
    for method in [Method::LGopt, Method::QEPmin] {
        let opts = SolveOptions { method, ..SolveOptions::default() };
        let sol = match crqopt::solve(&p, &opts) {
            Ok(s) => s,
            Err(Error::NotConverged(s)) => *s,
            Err(e) => return Err(e.into()),
        };
        let tag = format!("{method:?}");
        check(&format!("{tag} objective gap"), (sol.objective - direct.objective).abs(), tolerance * (1.0 + direct.objective.abs()));
        check(&format!("{tag} constraint residual"), p.constraint_residual(&sol.v), tolerance);
    }
    if !failures.is_empty() {
        bail!(Error::VerificationFailed(failures.join(", ")));
    }
    println!("all checks passed");
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::NotConverged(_)) | Some(Error::MaxIter { .. }) => 2,
        Some(Error::Infeasible { .. }) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let threads = crqopt::init_threads_from_env();
    log::debug!("using {threads} worker threads");
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Solve { problem, solver, out } => cmd_solve(problem, solver, out),
        Command::Gen { spec, out } => cmd_gen(spec, out),
        Command::Bench { specs, solver, out } => cmd_bench(specs, solver, out),
        Command::Segment {
            image,
            labels,
            delta,
            radius,
            solver,
            out,
        } => cmd_segment(image, labels, GraphParams { delta: *delta, r: *radius }, solver, out),
        Command::Validate { problem, tolerance } => cmd_validate(problem, *tolerance),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
