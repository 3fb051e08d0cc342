//! Convergence studies on the exponential benchmark family.
//!
//! `N` is the dimension of the discrete space, i.e. the number of interior
//! vertices. By default a grid side `N^{1/2}` therefore maps to a uniform mesh
//! with `N^{1/2} + 1` squares per side; see [`GridConvention`] for the others.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::dc::{DcConfig, DcSolver};
use crate::error::{Error, Result};
use crate::exact::make_benchmark;
use crate::exponent::w1p_error_norm;
use crate::mesh::{interpolate, Interval, Mesh, NodalField};
use crate::quadrature::{QuadChoice, QuadratureRule};

/// Side length of the benchmark square `[−1, 1]²`.
pub const DOMAIN_SIDE: f64 = 2.0;

/// How a grid side is turned into a mesh resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GridConvention {
    /// `grid_side` interior vertices per side.
    #[default]
    InteriorPerSide,
    /// `grid_side` vertices per side, boundary included.
    VerticesPerSide,
    /// `grid_side` squares per side.
    SquaresPerSide,
}

impl GridConvention {
    pub fn squares(self, grid_side: usize) -> usize {
        match self {
            Self::VerticesPerSide => grid_side.saturating_sub(1),
            Self::SquaresPerSide => grid_side,
            Self::InteriorPerSide => grid_side + 1,
        }
    }
}

impl std::str::FromStr for GridConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "vertices" => Ok(Self::VerticesPerSide),
            "squares" => Ok(Self::SquaresPerSide),
            "interior" => Ok(Self::InteriorPerSide),
            other => Err(Error::InvalidArgument(format!(
                "grid convention must be 'vertices', 'squares' or 'interior', got '{other}'"
            ))),
        }
    }
}

impl std::fmt::Display for GridConvention {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::VerticesPerSide => "vertices",
            Self::SquaresPerSide => "squares",
            Self::InteriorPerSide => "interior",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub b_values: Vec<f64>,
    pub grid_sides: Vec<usize>,
    pub dc: DcConfig,
    pub quadrature: QuadChoice,
    pub grid_convention: GridConvention,
    pub out_dir: Option<PathBuf>,
    pub plot: bool,
    /// Writes per-record solution coefficients into `out_dir` when set.
    pub dump_solutions: bool,
    /// Wall-clock timing in the records; off gives reproducible output files.
    pub record_timing: bool,
    pub parallel: bool,
    /// Only used by randomized property suites.
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            b_values: vec![0.1, 0.5, 1.0, 2.0, 2.5, 3.0],
            grid_sides: vec![20, 40, 60, 80, 100, 120, 140],
            dc: DcConfig::default(),
            quadrature: QuadChoice::Degree5,
            grid_convention: GridConvention::InteriorPerSide,
            out_dir: None,
            plot: false,
            dump_solutions: false,
            record_timing: true,
            parallel: true,
            seed: 0,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.b_values.is_empty() || self.grid_sides.is_empty() {
            return Err(Error::InvalidArgument("study needs at least one b value and one grid".into()));
        }
        if let Some(b) = self.b_values.iter().find(|b| !(**b >= 0.0 && b.is_finite())) {
            return Err(Error::InvalidArgument(format!("b values must be >= 0, got {b}")));
        }
        if self.grid_sides.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("grid sides must be strictly increasing".into()));
        }
        if self.grid_sides[0] < 2 {
            return Err(Error::InvalidArgument("grid sides must be at least 2".into()));
        }
        self.dc.validate()
    }

    /// Applies `key = value` lines (`#` starts a comment). Known keys:
    /// `b`, `grids`, `tol`, `max_iter`, `rho`, `r`, `cg_tol`, `scalar_tol`,
    /// `quad_degree`, `grid_convention`, `out`, `plot`, `dump_solutions`, `timing`, `parallel`, `seed`.
    pub fn apply_key_values<R: BufRead>(&mut self, input: R) -> Result<()> {
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: n + 1, msg: format!("expected key = value, got '{line}'") })?;
            self.set(key.trim(), value.trim()).map_err(|e| Error::Parse { line: n + 1, msg: e.to_string() })?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::InvalidArgument(format!("bad value '{v}' for {key}")))
        }
        fn flag(key: &str, v: &str) -> Result<bool> {
            match v {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(Error::InvalidArgument(format!("bad boolean '{v}' for {key}"))),
            }
        }
        match key {
            "b" => self.b_values = parse_list(value)?,
            "grids" => self.grid_sides = parse_list(value)?,
            "tol" => self.dc.tol = num(key, value)?,
            "max_iter" => self.dc.max_iter = num(key, value)?,
            "rho" => self.dc.rho = num(key, value)?,
            "r" => self.dc.r = num(key, value)?,
            "cg_tol" => self.dc.cg_tol = num(key, value)?,
            "scalar_tol" => self.dc.scalar_tol = num(key, value)?,
            "quad_degree" => self.quadrature = value.parse()?,
            "grid_convention" => self.grid_convention = value.parse()?,
            "out" => self.out_dir = Some(PathBuf::from(value)),
            "plot" => self.plot = flag(key, value)?,
            "dump_solutions" => self.dump_solutions = flag(key, value)?,
            "timing" => self.record_timing = flag(key, value)?,
            "parallel" => self.parallel = flag(key, value)?,
            "seed" => self.seed = num(key, value)?,
            other => return Err(Error::InvalidArgument(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }
}

/// Comma-separated list of numbers.
pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().map_err(|_| Error::InvalidArgument(format!("bad list entry '{p}'"))))
        .collect()
}

/// One cell of a convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRecord {
    pub b: f64,
    pub grid_side: usize,
    pub dof: usize,
    /// `‖u − u_h‖_{1,p(·)}`; NaN when the run failed.
    pub error: f64,
    pub iterations: usize,
    pub seconds: f64,
    pub converged: bool,
    pub failure: Option<String>,
}

impl StudyRecord {
    pub fn is_flagged(&self) -> bool {
        self.failure.is_some() || !self.converged
    }
}

/// Least-squares fit of `error ≈ C (N^{1/2} / L)^{−α}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub b: f64,
    pub alpha: f64,
    pub c: f64,
    /// Sum of squared residuals in log space.
    pub ssr: f64,
}

/// Maps a grid side onto the mesh of `[−1, 1]²` used for it.
pub fn study_mesh(grid_side: usize, convention: GridConvention) -> Result<Mesh> {
    if grid_side < 2 {
        return Err(Error::InvalidArgument(format!("grid side must be at least 2, got {grid_side}")));
    }
    let i = Interval::new(-1.0, 1.0);
    Mesh::uniform_rect(i, i, convention.squares(grid_side))
}

/// Result of solving one benchmark on one mesh.
#[derive(Debug, Clone)]
pub struct BenchmarkSolve<'m> {
    pub solution: NodalField<'m>,
    pub error: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Runs the solver for benchmark `b` on `mesh` with `g_h = π_h u` and
/// measures the error against the exact solution.
pub fn solve_benchmark<'m>(
    mesh: &'m Mesh,
    b: f64,
    dc: &DcConfig,
    quadrature: QuadChoice,
) -> Result<BenchmarkSolve<'m>> {
    let case = make_benchmark(b)?;
    let rule = QuadratureRule::from_choice(quadrature);
    let g = interpolate(|x| case.exact_u(x), mesh);
    let solver = DcSolver::new(mesh, case.exponent.clone(), |_| 0.0, rule.clone(), *dc)?;
    let out = solver.run(&g)?;
    let error = benchmark_error(&out.state.u, b, quadrature)?;
    Ok(BenchmarkSolve { solution: out.state.u, error, iterations: out.state.n, converged: out.converged })
}

/// `‖u − u_h‖_{1,p(·)}` for benchmark `b`, exact `u` and `∇u` sampled at the quadrature points.
pub fn benchmark_error(u_h: &NodalField<'_>, b: f64, quadrature: QuadChoice) -> Result<f64> {
    let case = make_benchmark(b)?;
    let rule = QuadratureRule::from_choice(quadrature);
    w1p_error_norm(u_h, |x| case.exact_u(x), |x| case.exact_gradient(x), &case.exponent, &rule)
}

fn solution_file(dir: &Path, b: f64, grid_side: usize) -> PathBuf {
    dir.join(format!("solution_b{b}_n{grid_side}.txt"))
}

fn run_cell(config: &StudyConfig, b: f64, grid_side: usize) -> StudyRecord {
    let start = Instant::now();
    let dof = config.grid_convention.squares(grid_side).saturating_sub(1).pow(2);
    let mut record = StudyRecord {
        b,
        grid_side,
        dof,
        error: f64::NAN,
        iterations: 0,
        seconds: 0.0,
        converged: false,
        failure: None,
    };
    let result = study_mesh(grid_side, config.grid_convention).and_then(|mesh| {
        let s = solve_benchmark(&mesh, b, &config.dc, config.quadrature)?;
        if config.dump_solutions {
            if let Some(dir) = &config.out_dir {
                let file = fs::File::create(solution_file(dir, b, grid_side))?;
                write_solution(&s.solution, std::io::BufWriter::new(file))?;
            }
        }
        Ok((s.error, s.iterations, s.converged))
    });
    match result {
        Ok((error, iterations, converged)) => {
            record.error = error;
            record.iterations = iterations;
            record.converged = converged;
        }
        Err(e) => {
            log::error!("b = {b}, grid {grid_side}: {e}");
            record.failure = Some(e.to_string());
        }
    }
    if config.record_timing {
        record.seconds = start.elapsed().as_secs_f64();
    }
    record
}

/// Runs every `(b, grid_side)` pair; results are sorted by `(b, grid_side)`.
pub fn run_study(config: &StudyConfig) -> Result<Vec<StudyRecord>> {
    config.validate()?;
    if config.dump_solutions {
        if let Some(dir) = &config.out_dir {
            fs::create_dir_all(dir)?;
        }
    }
    let cells: Vec<(f64, usize)> =
        config.b_values.iter().flat_map(|&b| config.grid_sides.iter().map(move |&n| (b, n))).collect();
    let mut records: Vec<StudyRecord> = if config.parallel {
        // largest meshes first keeps the pool busy
        let mut order: Vec<usize> = (0..cells.len()).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(cells[i].1));
        order.into_par_iter().map(|i| run_cell(config, cells[i].0, cells[i].1)).collect()
    } else {
        cells.iter().map(|&(b, n)| run_cell(config, b, n)).collect()
    };
    records.sort_by(|a, b| a.b.total_cmp(&b.b).then(a.grid_side.cmp(&b.grid_side)));
    Ok(records)
}

/// Fits `log e = log C − α log(N^{1/2} / length_scale)` by least squares.
/// `length_scale = DOMAIN_SIDE` makes `C` the constant in `e ≈ C h^α` with `h = L / N^{1/2}`.
pub fn fit_rate_scaled(records: &[StudyRecord], length_scale: f64) -> Result<RateFit> {
    if records.len() < 3 {
        return Err(Error::InvalidArgument(format!("rate fit needs at least 3 points, got {}", records.len())));
    }
    if length_scale.is_nan() || length_scale <= 0.0 {
        return Err(Error::InvalidArgument("length scale must be positive".into()));
    }
    let b = records[0].b;
    if records.iter().any(|r| r.b != b) {
        return Err(Error::InvalidArgument("records mix several b values".into()));
    }
    if let Some(r) = records.iter().find(|r| !(r.error > 0.0 && r.error.is_finite())) {
        return Err(Error::InvalidArgument(format!("error {} at grid {} has no logarithm", r.error, r.grid_side)));
    }
    let xs: Vec<f64> = records.iter().map(|r| (r.grid_side as f64 / length_scale).ln()).collect();
    let ys: Vec<f64> = records.iter().map(|r| r.error.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("rate fit needs distinct grid sides".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Ok(RateFit { b, alpha: -slope, c: intercept.exp(), ssr })
}

/// Fits `error ≈ C (N^{1/2})^{−α}`.
pub fn fit_rate(records: &[StudyRecord]) -> Result<RateFit> {
    fit_rate_scaled(records, 1.0)
}

/// Groups records by `b` and fits each group, skipping grids below `min_grid`.
pub fn fit_all(records: &[StudyRecord], length_scale: f64, min_grid: usize) -> Vec<Result<RateFit>> {
    let mut groups: BTreeMap<u64, Vec<StudyRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.grid_side >= min_grid) {
        groups.entry(r.b.to_bits()).or_default().push(r.clone());
    }
    let mut groups: Vec<Vec<StudyRecord>> = groups.into_values().collect();
    groups.sort_by(|a, b| a[0].b.total_cmp(&b[0].b));
    groups.iter().map(|g| fit_rate_scaled(g, length_scale)).collect()
}

pub const RECORDS_HEADER: &str = "b,grid_side,dof,error,iters,seconds";
pub const FITS_HEADER: &str = "b,alpha,C,ssr";

pub fn write_records_csv<W: Write>(records: &[StudyRecord], mut out: W) -> Result<()> {
    writeln!(out, "{RECORDS_HEADER}")?;
    for r in records {
        writeln!(out, "{},{},{},{:e},{},{}", r.b, r.grid_side, r.dof, r.error, r.iterations, r.seconds)?;
    }
    Ok(())
}

pub fn write_fits_csv<W: Write>(fits: &[RateFit], mut out: W) -> Result<()> {
    writeln!(out, "{FITS_HEADER}")?;
    for f in fits {
        writeln!(out, "{},{:e},{:e},{:e}", f.b, f.alpha, f.c, f.ssr)?;
    }
    Ok(())
}

/// Parses the records CSV. Convergence flags are not persisted; a record
/// read back is marked converged iff its error is finite.
pub fn read_records_csv<R: BufRead>(input: R) -> Result<Vec<StudyRecord>> {
    let mut lines = input.lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h.trim() == RECORDS_HEADER => {}
        Some((_, Ok(h))) => return Err(Error::Parse { line: 1, msg: format!("unexpected header '{h}'") }),
        Some((_, Err(e))) => return Err(e.into()),
        None => return Err(Error::Parse { line: 1, msg: "empty file".into() }),
    }
    let mut out = Vec::new();
    for (n, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: Vec<&str> = line.split(',').collect();
        let bad = |what: &str| Error::Parse { line: n + 1, msg: format!("bad {what} in '{line}'") };
        if p.len() != 6 {
            return Err(bad("column count"));
        }
        let error: f64 = p[3].parse().map_err(|_| bad("error"))?;
        out.push(StudyRecord {
            b: p[0].parse().map_err(|_| bad("b"))?,
            grid_side: p[1].parse().map_err(|_| bad("grid_side"))?,
            dof: p[2].parse().map_err(|_| bad("dof"))?,
            error,
            iterations: p[4].parse().map_err(|_| bad("iters"))?,
            seconds: p[5].parse().map_err(|_| bad("seconds"))?,
            converged: error.is_finite(),
            failure: None,
        });
    }
    Ok(out)
}

/// Writes `nv` followed by one coefficient per line.
pub fn write_solution<W: Write>(u: &NodalField<'_>, mut out: W) -> Result<()> {
    writeln!(out, "{}", u.coefficients().len())?;
    for c in u.coefficients() {
        writeln!(out, "{c:e}")?;
    }
    Ok(())
}

pub fn read_solution<'m, R: BufRead>(mesh: &'m Mesh, input: R) -> Result<NodalField<'m>> {
    let mut values = Vec::new();
    let mut expected = None;
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let bad = || Error::Parse { line: n + 1, msg: format!("bad entry '{t}'") };
        if expected.is_none() {
            expected = Some(t.parse::<usize>().map_err(|_| bad())?);
        } else {
            values.push(t.parse::<f64>().map_err(|_| bad())?);
        }
    }
    if expected != Some(values.len()) {
        return Err(Error::Parse { line: 0, msg: format!("declared {expected:?} values, found {}", values.len()) });
    }
    NodalField::new(mesh, values)
}

/// Log-log plot of error against `N^{1/2}`, one polyline per `b`.
pub fn write_svg_plot<W: Write>(records: &[StudyRecord], mut out: W) -> Result<()> {
    let pts: Vec<&StudyRecord> = records.iter().filter(|r| r.error > 0.0 && r.error.is_finite()).collect();
    let (w, h, pad) = (640.0, 480.0, 60.0);
    writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#)?;
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#)?;
    if pts.is_empty() {
        writeln!(out, "</svg>")?;
        return Ok(());
    }
    let lx = |r: &StudyRecord| (r.grid_side as f64).log10();
    let ly = |r: &StudyRecord| r.error.log10();
    let (x0, x1) = pts.iter().map(|r| lx(r)).fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(v), b.max(v)));
    let (y0, y1) = pts.iter().map(|r| ly(r)).fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(v), b.max(v)));
    let (x0, x1) = (x0.floor().min(x1 - 0.1), x1.ceil().max(x0 + 0.1));
    let (y0, y1) = (y0.floor(), y1.ceil().max(y0.floor() + 1.0));
    let sx = |v: f64| pad + (v - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |v: f64| h - pad - (v - y0) / (y1 - y0) * (h - 2.0 * pad);
    writeln!(
        out,
        r#"<path d="M{a} {b} L{c} {b} M{a} {b} L{a} {d}" stroke="black" fill="none"/>"#,
        a = sx(x0),
        b = sy(y0),
        c = sx(x1),
        d = sy(y1)
    )?;
    for e in (y0 as i32)..=(y1 as i32) {
        writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="11" text-anchor="end">1e{e}</text>"#,
            pad - 6.0,
            sy(e as f64) + 4.0
        )?;
    }
    writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">log10 N^(1/2)</text>"#,
        w / 2.0,
        h - 15.0
    )?;
    let palette = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2"];
    let mut bs: Vec<f64> = pts.iter().map(|r| r.b).collect();
    bs.dedup();
    for (k, b) in bs.iter().enumerate() {
        let color = palette[k % palette.len()];
        let line: Vec<String> =
            pts.iter().filter(|r| r.b == *b).map(|r| format!("{:.2},{:.2}", sx(lx(r)), sy(ly(r)))).collect();
        writeln!(out, r#"<polyline points="{}" stroke="{color}" fill="none" stroke-width="2"/>"#, line.join(" "))?;
        writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="12" fill="{color}">b = {b}</text>"#,
            w - pad - 60.0,
            pad + 16.0 * k as f64
        )?;
    }
    writeln!(out, "</svg>")?;
    Ok(())
}

/// Files written by [`emit`].
#[derive(Debug, Clone)]
pub struct EmittedFiles {
    pub records: PathBuf,
    pub fits: Option<PathBuf>,
    pub metadata: PathBuf,
    pub plot: Option<PathBuf>,
}

/// Writes `records.csv`, `fits.csv` (when fits are given), `metadata.txt`
/// and optionally `error_plot.svg` into `dir`.
pub fn emit(records: &[StudyRecord], fits: &[RateFit], config: &StudyConfig, dir: &Path) -> Result<EmittedFiles> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("nothing to emit".into()));
    }
    fs::create_dir_all(dir)?;
    let records_path = dir.join("records.csv");
    write_records_csv(records, std::io::BufWriter::new(fs::File::create(&records_path)?))?;
    let fits_path = if fits.is_empty() {
        None
    } else {
        let p = dir.join("fits.csv");
        write_fits_csv(fits, std::io::BufWriter::new(fs::File::create(&p)?))?;
        Some(p)
    };
    let meta_path = dir.join("metadata.txt");
    let rule = QuadratureRule::from_choice(config.quadrature);
    let mut meta = std::io::BufWriter::new(fs::File::create(&meta_path)?);
    writeln!(meta, "domain = [-1,1]x[-1,1]")?;
    let squares = match config.grid_convention {
        GridConvention::VerticesPerSide => "grid_side - 1",
        GridConvention::SquaresPerSide => "grid_side",
        GridConvention::InteriorPerSide => "grid_side + 1",
    };
    writeln!(meta, "grid_convention = {}", config.grid_convention)?;
    writeln!(meta, "mesh = uniform, squares per side = {squares}, diagonal lower-left to upper-right")?;
    writeln!(meta, "dof = interior vertices")?;
    writeln!(meta, "error = luxemburg(|u - u_h|) + luxemburg(|grad u - grad u_h|), exact u at quadrature points")?;
    writeln!(meta, "quadrature_points = {}", rule.len())?;
    writeln!(meta, "quadrature_degree = {}", rule.degree())?;
    writeln!(meta, "fit_model = error ~ C (grid_side / {DOMAIN_SIDE})^(-alpha)")?;
    writeln!(meta, "tol = {:e}", config.dc.tol)?;
    writeln!(meta, "max_iter = {}", config.dc.max_iter)?;
    writeln!(meta, "rho = {}", config.dc.rho)?;
    writeln!(meta, "r = {}", config.dc.r)?;
    writeln!(meta, "cg_tol = {:e}", config.dc.cg_tol)?;
    writeln!(meta, "scalar_tol = {:e}", config.dc.scalar_tol)?;
    let flagged: Vec<String> =
        records.iter().filter(|r| r.is_flagged()).map(|r| format!("b={} grid={}", r.b, r.grid_side)).collect();
    writeln!(meta, "flagged = {}", flagged.join("; "))?;
    meta.flush()?;
    let plot = if config.plot {
        let p = dir.join("error_plot.svg");
        write_svg_plot(records, std::io::BufWriter::new(fs::File::create(&p)?))?;
        Some(p)
    } else {
        None
    };
    Ok(EmittedFiles { records: records_path, fits: fits_path, metadata: meta_path, plot })
}
