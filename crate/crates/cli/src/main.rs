use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use pxlap_core::harness::{self, fit_all, DOMAIN_SIDE};
use pxlap_core::{
    make_benchmark, DcSolver, GridConvention, Interval, Mesh, QuadChoice, QuadratureRule, RadialCase, RadialFn,
    StudyConfig,
};

/// Finite-element solver for the p(x)-Laplacian.
#[derive(Parser, Debug)]
#[command(name = "pxlap", version)]
struct Cli {
    /// Quadrature rule: 5 (7 points) or 12 (12 points).
    #[arg(long, global = true)]
    quad_degree: Option<QuadChoice>,
    /// Key-value config file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convergence study over b values and grid sides.
    Study(StudyArgs),
    /// Solve one benchmark problem on a given mesh.
    Solve(SolveArgs),
    /// Sample the radial reference solution.
    Radial(RadialArgs),
    /// Write a uniform triangulation of [-1,1]^2.
    Mesh(MeshArgs),
}

#[derive(Args, Debug)]
struct StudyArgs {
    /// Comma-separated b values.
    #[arg(long)]
    b: Option<String>,
    /// Comma-separated grid sides.
    #[arg(long)]
    grids: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    plot: bool,
    /// Write solution coefficients next to the records.
    #[arg(long)]
    dump_solutions: bool,
    /// Write 0 in the seconds column.
    #[arg(long)]
    no_timing: bool,
    #[arg(long)]
    serial: bool,
    /// interior, vertices or squares per side.
    #[arg(long)]
    grid_convention: Option<GridConvention>,
    /// Smallest grid side used in the rate fits.
    #[arg(long, default_value_t = 0)]
    fit_min_grid: usize,
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// Mesh file as written by `pxlap mesh`.
    #[arg(long, conflicts_with = "grid")]
    mesh: Option<PathBuf>,
    /// Uniform mesh of [-1,1]^2 with this many squares per side.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    b: f64,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    dump_solution: Option<PathBuf>,
    /// Per-iteration log as CSV.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RadialArgs {
    /// Exponent profile, e.g. const:1.5 or linear:1.5,0.2.
    #[arg(long = "P")]
    p: RadialFn,
    /// Source profile, e.g. const:-1.
    #[arg(long = "F")]
    f: RadialFn,
    /// Boundary value U(1).
    #[arg(long, default_value_t = 0.0)]
    g: f64,
    /// Number of sample radii in (0, 1].
    #[arg(long, default_value_t = 10)]
    samples: usize,
}

#[derive(Args, Debug)]
struct MeshArgs {
    /// Squares per side.
    #[arg(long)]
    m: usize,
    #[arg(long)]
    out: PathBuf,
}

fn load_config(cli: &Cli) -> Result<StudyConfig> {
    let mut config = StudyConfig::default();
    if let Some(path) = &cli.config {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        config.apply_key_values(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
    }
    if let Some(q) = cli.quad_degree {
        config.quadrature = q;
    }
    Ok(config)
}

fn study(mut config: StudyConfig, args: &StudyArgs) -> Result<bool> {
    if let Some(b) = &args.b {
        config.set("b", b)?;
    }
    if let Some(g) = &args.grids {
        config.set("grids", g)?;
    }
    if let Some(t) = args.tol {
        config.dc.tol = t;
    }
    if let Some(n) = args.max_iter {
        config.dc.max_iter = n;
    }
    if let Some(o) = &args.out {
        config.out_dir = Some(o.clone());
    }
    if let Some(c) = args.grid_convention {
        config.grid_convention = c;
    }
    config.plot |= args.plot;
    config.dump_solutions |= args.dump_solutions;
    config.record_timing &= !args.no_timing;
    config.parallel &= !args.serial;
    config.validate()?;

    let records = harness::run_study(&config)?;
    let mut flagged = records.iter().any(|r| r.is_flagged());
    let mut fits = Vec::new();
    for fit in fit_all(&records, DOMAIN_SIDE, args.fit_min_grid) {
        match fit {
            Ok(f) => fits.push(f),
            Err(e) => {
                log::warn!("rate fit skipped: {e}");
                flagged = true;
            }
        }
    }

    let stdout = io::stdout();
    let mut out = stdout.lock();
    harness::write_records_csv(&records, &mut out)?;
    if !fits.is_empty() {
        writeln!(out)?;
        harness::write_fits_csv(&fits, &mut out)?;
    }
    for r in records.iter().filter(|r| r.is_flagged()) {
        eprintln!("flagged: b={} grid={} {}", r.b, r.grid_side, r.failure.as_deref().unwrap_or("did not converge"));
    }
    if let Some(dir) = &config.out_dir {
        let files = harness::emit(&records, &fits, &config, dir)?;
        log::info!("wrote {}", files.records.display());
    }
    Ok(!flagged)
}

fn solve(config: StudyConfig, args: &SolveArgs) -> Result<bool> {
    let mesh = match (&args.mesh, args.grid) {
        (Some(path), _) => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            Mesh::read_text(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?
        }
        (None, Some(m)) => Mesh::uniform_rect(Interval::new(-1.0, 1.0), Interval::new(-1.0, 1.0), m)?,
        (None, None) => bail!("one of --mesh or --grid is required"),
    };
    let mut dc = config.dc;
    if let Some(t) = args.tol {
        dc.tol = t;
    }
    if let Some(n) = args.max_iter {
        dc.max_iter = n;
    }
    let case = make_benchmark(args.b)?;
    let rule = QuadratureRule::from_choice(config.quadrature);
    let g = pxlap_core::mesh::interpolate(|x| case.exact_u(x), &mesh);
    let solver = DcSolver::new(&mesh, case.exponent.clone(), |_| 0.0, rule, dc)?;
    let outcome = solver.run(&g)?;
    let error = harness::benchmark_error(&outcome.state.u, args.b, config.quadrature)?;

    if let Some(path) = &args.dump_solution {
        harness::write_solution(&outcome.state.u, BufWriter::new(File::create(path)?))?;
    }
    if let Some(path) = &args.log {
        outcome.log.write_csv(BufWriter::new(File::create(path)?))?;
    }
    println!("vertices,cells,iters,residual,error,converged");
    println!(
        "{},{},{},{:e},{:e},{}",
        mesh.num_vertices(),
        mesh.num_cells(),
        outcome.state.n,
        outcome.state.residual,
        error,
        outcome.converged
    );
    Ok(outcome.converged)
}

fn radial(args: &RadialArgs) -> Result<bool> {
    if args.samples == 0 {
        bail!("--samples must be positive");
    }
    let case = RadialCase::new(args.p.clone(), args.f.clone(), args.g)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "r,Z,U,U2")?;
    for i in 1..=args.samples {
        let r = i as f64 / args.samples as f64;
        writeln!(out, "{r},{:e},{:e},{:e}", case.z(r)?, case.u(r)?, case.u_second(r)?)?;
    }
    writeln!(out, "regularity_integral,{:e}", case.regularity_integral()?)?;
    Ok(true)
}

fn write_mesh(args: &MeshArgs) -> Result<bool> {
    let mesh = Mesh::uniform_rect(Interval::new(-1.0, 1.0), Interval::new(-1.0, 1.0), args.m)?;
    let mut w = BufWriter::new(File::create(&args.out)?);
    mesh.write_text(&mut w)?;
    w.flush()?;
    Ok(true)
}

fn run(cli: &Cli) -> Result<bool> {
    let config = load_config(cli)?;
    match &cli.command {
        Command::Study(a) => study(config, a),
        Command::Solve(a) => solve(config, a),
        Command::Radial(a) => radial(a),
        Command::Mesh(a) => write_mesh(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
