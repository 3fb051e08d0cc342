//! P1 stiffness assembly and the Dirichlet-constrained conjugate gradient solve.

use crate::error::{Error, Result};
use crate::mesh::{same_mesh, CellVectorField, Mesh, NodalField, Point};
use crate::quadrature::QuadratureRule;

/// Symmetric sparse matrix in CSR form. Both triangles are stored so a row
/// product never needs a transpose lookup.
#[derive(Debug, Clone)]
pub struct SparseSymmetricMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymmetricMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        match row.binary_search(&j) {
            Ok(pos) => self.values[self.row_ptr[i] + pos],
            Err(_) => 0.0,
        }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn scaled(mut self, s: f64) -> Self {
        self.values.iter_mut().for_each(|v| *v *= s);
        self
    }

    /// Largest `|M_ij − M_ji|` over stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// `M_ij = ∫ ∇φ_i · ∇φ_j` for the P1 basis of `mesh`.
pub fn assemble_stiffness(mesh: &Mesh) -> SparseSymmetricMatrix {
    let n = mesh.num_vertices();
    let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n];
    for t in mesh.triangles() {
        for &a in t {
            for &b in t {
                cols[a].push(b);
            }
        }
    }
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::new();
    row_ptr.push(0);
    for c in &mut cols {
        c.sort_unstable();
        c.dedup();
        col_idx.extend_from_slice(c);
        row_ptr.push(col_idx.len());
    }
    let mut values = vec![0.0; col_idx.len()];
    // fixed cell order keeps the accumulation deterministic
    for (t, geo) in mesh.triangles().iter().zip(mesh.cells()) {
        for (la, &a) in t.iter().enumerate() {
            for (lb, &b) in t.iter().enumerate() {
                let ga = geo.basis_gradients[la];
                let gb = geo.basis_gradients[lb];
                let v = geo.area * (ga[0] * gb[0] + ga[1] * gb[1]);
                let row = &col_idx[row_ptr[a]..row_ptr[a + 1]];
                let pos = row_ptr[a] + row.binary_search(&b).expect("pattern covers cell pairs");
                values[pos] += v;
            }
        }
    }
    // exact symmetry: average mirrored entries (they differ only in summation rounding, if at all)
    for i in 0..n {
        for p in row_ptr[i]..row_ptr[i + 1] {
            let j = col_idx[p];
            if j > i {
                let row_j = &col_idx[row_ptr[j]..row_ptr[j + 1]];
                let q = row_ptr[j] + row_j.binary_search(&i).unwrap();
                let avg = 0.5 * (values[p] + values[q]);
                values[p] = avg;
                values[q] = avg;
            }
        }
    }
    SparseSymmetricMatrix { n, row_ptr, col_idx, values }
}

/// `∫ f φ_j` for every vertex `j`.
pub fn assemble_load<F: Fn(Point) -> f64>(f: F, mesh: &Mesh, rule: &QuadratureRule) -> Vec<f64> {
    let mut load = vec![0.0; mesh.num_vertices()];
    for (k, (t, geo)) in mesh.triangles().iter().zip(mesh.cells()).enumerate() {
        let mut local = [0.0; 3];
        for (b, &w) in rule.points().iter().zip(rule.weights()) {
            let fx = f(mesh.map_point(k, *b));
            for l in 0..3 {
                local[l] += geo.area * w * fx * b[l];
            }
        }
        for l in 0..3 {
            load[t[l]] += local[l];
        }
    }
    load
}

/// Adds `∫ v · ∇φ_j` for a piecewise-constant `v` to `out`.
pub fn add_cell_divergence_term(out: &mut [f64], v: &[Point], mesh: &Mesh) {
    for ((t, geo), vk) in mesh.triangles().iter().zip(mesh.cells()).zip(v) {
        for l in 0..3 {
            let g = geo.basis_gradients[l];
            out[t[l]] += geo.area * (vk[0] * g[0] + vk[1] * g[1]);
        }
    }
}

/// `F_j = ∫ f φ_j + ∫ (η_prev − λ) · ∇φ_j`.
pub fn assemble_rhs<F: Fn(Point) -> f64>(
    f: F,
    eta_prev: &CellVectorField<'_>,
    lambda_cur: &CellVectorField<'_>,
    mesh: &Mesh,
    rule: &QuadratureRule,
) -> Result<Vec<f64>> {
    if !same_mesh(eta_prev.mesh(), mesh) || !same_mesh(lambda_cur.mesh(), mesh) {
        return Err(Error::MeshMismatch);
    }
    let mut rhs = assemble_load(f, mesh, rule);
    let diff: Vec<Point> =
        eta_prev.values().iter().zip(lambda_cur.values()).map(|(e, l)| [e[0] - l[0], e[1] - l[1]]).collect();
    add_cell_divergence_term(&mut rhs, &diff, mesh);
    Ok(rhs)
}

/// Which vertices carry prescribed values, and those values.
#[derive(Debug, Clone)]
pub struct DirichletConstraint {
    fixed: Vec<bool>,
    values: Vec<f64>,
}

impl DirichletConstraint {
    /// Fixes every boundary vertex of the mesh to the coefficient of `g` there.
    pub fn from_boundary(g: &NodalField<'_>) -> Self {
        let mesh = g.mesh();
        let fixed = mesh.boundary_flags().to_vec();
        let values = g.coefficients().iter().zip(&fixed).map(|(&v, &f)| if f { v } else { 0.0 }).collect();
        Self { fixed, values }
    }

    pub fn new(fixed: Vec<bool>, values: Vec<f64>) -> Result<Self> {
        if fixed.len() != values.len() {
            return Err(Error::InvalidArgument("constraint mask and values differ in length".into()));
        }
        Ok(Self { fixed, values })
    }

    pub fn is_fixed(&self, i: usize) -> bool {
        self.fixed[i]
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn num_free(&self) -> usize {
        self.fixed.iter().filter(|f| !**f).count()
    }

    pub fn len(&self) -> usize {
        self.fixed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixed.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    /// Relative residual target on the free vertices.
    pub tol: f64,
    /// Iteration cap; `None` means `10 * n_free`.
    pub max_iter: Option<usize>,
    pub jacobi: bool,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: None, jacobi: false }
    }
}

#[derive(Debug, Clone)]
pub struct CgReport {
    pub iterations: usize,
    pub relative_residual: f64,
    /// Residual 2-norms, starting with the initial residual.
    pub residual_history: Vec<f64>,
    /// Values of `½ xᵀAx − bᵀx` on the free block after each iterate.
    pub energy_history: Vec<f64>,
}

/// Scratch storage reused across repeated solves with the same matrix.
#[derive(Debug, Clone, Default)]
pub struct LinearSystemWorkspace {
    free: Vec<usize>,
    b: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    p: Vec<f64>,
    ap: Vec<f64>,
    full: Vec<f64>,
    full_out: Vec<f64>,
    inv_diag: Vec<f64>,
    track_energy: bool,
}

impl LinearSystemWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records the CG energy functional per iteration (costs one extra product).
    pub fn with_energy_tracking(mut self) -> Self {
        self.track_energy = true;
        self
    }

    /// Solves `M x = rhs` on the free vertices with fixed values prescribed
    /// by `constraint`. `x` holds the initial guess on entry and the solution
    /// on exit; its fixed entries are overwritten with the prescribed values.
    pub fn solve(
        &mut self,
        m: &SparseSymmetricMatrix,
        rhs: &[f64],
        constraint: &DirichletConstraint,
        opts: &CgOptions,
        x: &mut [f64],
    ) -> Result<CgReport> {
        let n = m.dim();
        if rhs.len() != n || x.len() != n || constraint.len() != n {
            return Err(Error::InvalidArgument(format!(
                "dimension mismatch: matrix {n}, rhs {}, x {}, constraint {}",
                rhs.len(),
                x.len(),
                constraint.len()
            )));
        }
        if opts.tol.is_nan() || opts.tol <= 0.0 {
            return Err(Error::InvalidArgument("CG tolerance must be positive".into()));
        }
        for (i, xi) in x.iter_mut().enumerate() {
            if constraint.is_fixed(i) {
                *xi = constraint.value(i);
            }
        }
        self.free.clear();
        self.free.extend((0..n).filter(|&i| !constraint.is_fixed(i)));
        let nf = self.free.len();
        let max_iter = opts.max_iter.unwrap_or(10 * nf.max(1));

        // reduced rhs: b_f = rhs_f − M_fb g_b
        self.b.clear();
        for &i in &self.free {
            let mut s = rhs[i];
            for (j, v) in m.row(i) {
                if constraint.is_fixed(j) {
                    s -= v * constraint.value(j);
                }
            }
            self.b.push(s);
        }
        self.inv_diag.clear();
        if opts.jacobi {
            self.inv_diag.extend(self.free.iter().map(|&i| 1.0 / m.get(i, i)));
        }
        self.full.clear();
        self.full.resize(n, 0.0);
        self.full_out.clear();
        self.full_out.resize(n, 0.0);

        let b_norm = norm(&self.b);
        let mut xf: Vec<f64> = self.free.iter().map(|&i| x[i]).collect();
        if nf == 0 || b_norm == 0.0 {
            if nf > 0 {
                xf.iter_mut().for_each(|v| *v = 0.0);
            }
            for (k, &i) in self.free.iter().enumerate() {
                x[i] = xf[k];
            }
            return Ok(CgReport {
                iterations: 0,
                relative_residual: 0.0,
                residual_history: vec![0.0],
                energy_history: Vec::new(),
            });
        }

        self.reduced_matvec(m, &xf);
        self.r.clear();
        self.r.extend(self.b.iter().zip(&self.ap).map(|(b, a)| b - a));
        self.apply_precond();
        self.p.clear();
        self.p.extend_from_slice(&self.z);
        let mut rz = dot(&self.r, &self.z);
        let mut res = norm(&self.r);
        let mut report = CgReport {
            iterations: 0,
            relative_residual: res / b_norm,
            residual_history: vec![res],
            energy_history: Vec::new(),
        };
        if self.track_energy {
            let e = self.energy(m, &xf);
            report.energy_history.push(e);
        }
        while report.relative_residual > opts.tol {
            if report.iterations >= max_iter {
                return Err(Error::CgNotConverged {
                    iterations: report.iterations,
                    residual: report.relative_residual,
                });
            }
            let p = std::mem::take(&mut self.p);
            self.reduced_matvec(m, &p);
            self.p = p;
            let curvature = dot(&self.p, &self.ap);
            if curvature.is_nan() || curvature <= 0.0 {
                return Err(Error::NotPositiveDefinite { curvature });
            }
            let alpha = rz / curvature;
            for ((x, r), (p, ap)) in xf.iter_mut().zip(&mut self.r).zip(self.p.iter().zip(&self.ap)) {
                *x += alpha * p;
                *r -= alpha * ap;
            }
            self.apply_precond();
            let rz_new = dot(&self.r, &self.z);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..nf {
                self.p[k] = self.z[k] + beta * self.p[k];
            }
            res = norm(&self.r);
            report.iterations += 1;
            report.relative_residual = res / b_norm;
            report.residual_history.push(res);
            if self.track_energy {
                let e = self.energy(m, &xf);
                report.energy_history.push(e);
            }
        }
        for (k, &i) in self.free.iter().enumerate() {
            x[i] = xf[k];
        }
        Ok(report)
    }

    fn apply_precond(&mut self) {
        self.z.clear();
        if self.inv_diag.is_empty() {
            self.z.extend_from_slice(&self.r);
        } else {
            self.z.extend(self.r.iter().zip(&self.inv_diag).map(|(r, d)| r * d));
        }
    }

    /// `ap = M_ff v`.
    fn reduced_matvec(&mut self, m: &SparseSymmetricMatrix, v: &[f64]) {
        for (k, &i) in self.free.iter().enumerate() {
            self.full[i] = v[k];
        }
        self.ap.clear();
        for &i in &self.free {
            let mut s = 0.0;
            for (j, a) in m.row(i) {
                s += a * self.full[j];
            }
            self.ap.push(s);
        }
    }

    fn energy(&mut self, m: &SparseSymmetricMatrix, xf: &[f64]) -> f64 {
        let saved = std::mem::take(&mut self.ap);
        self.reduced_matvec(m, xf);
        let e = 0.5 * dot(xf, &self.ap) - dot(&self.b, xf);
        self.ap = saved;
        e
    }
}

/// One-shot Dirichlet solve starting from the prescribed boundary values and zero inside.
pub fn solve_dirichlet(
    m: &SparseSymmetricMatrix,
    rhs: &[f64],
    constraint: &DirichletConstraint,
    tol: f64,
) -> Result<(Vec<f64>, CgReport)> {
    let mut x = vec![0.0; m.dim()];
    let opts = CgOptions { tol, ..CgOptions::default() };
    let report = LinearSystemWorkspace::new().solve(m, rhs, constraint, &opts, &mut x)?;
    Ok((x, report))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `‖M x − rhs‖` over the free vertices; used by tests and diagnostics.
pub fn free_residual(m: &SparseSymmetricMatrix, rhs: &[f64], constraint: &DirichletConstraint, x: &[f64]) -> Vec<f64> {
    let mut mx = vec![0.0; m.dim()];
    m.matvec(x, &mut mx);
    (0..m.dim()).filter(|&i| !constraint.is_fixed(i)).map(|i| mx[i] - rhs[i]).collect()
}

#[cfg(test)]
fn l2(v: &[f64]) -> f64 {
    let sq: Vec<f64> = v.iter().map(|x| x * x).collect();
    crate::quadrature::pairwise_sum(&sq).sqrt()
}
