//! Homogeneous self-dual interior-point method with Nesterov-Todd scaling and
//! Mehrotra predictor-corrector steps.
//!
//! Internally the program is rewritten in the standard form
//!
//! ```text
//! minimize c^T x   subject to   G x + s = h,   s in K
//! ```
//!
//! with `K` a product of nonnegative orthants and second-order cones
//! (rotated cones are mapped onto ordinary ones). Newton systems are reduced
//! to the dense normal equations `G^T W^-2 G` and factorized by Cholesky.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::program::{ConeKind, ConicProgram};
use super::SocpError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Feasibility and relative gap tolerance.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

/// Scaled residuals at the returned point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Primal point. For infeasible/unbounded programs this is the last iterate.
    pub primal: DVector<f64>,
    /// Objective of the (maximization) program at `primal`.
    pub objective_value: f64,
    pub residuals: Residuals,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BlockKind {
    Orthant,
    Soc,
}

#[derive(Debug, Clone, Copy)]
struct Block {
    start: usize,
    dim: usize,
    kind: BlockKind,
}

impl Block {
    fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.dim
    }

    fn degree(&self) -> usize {
        match self.kind {
            BlockKind::Orthant => self.dim,
            BlockKind::Soc => 1,
        }
    }
}

struct StandardForm {
    g: DMatrix<f64>,
    h: DVector<f64>,
    c: DVector<f64>,
    blocks: Vec<Block>,
    degree: usize,
}

fn standardize(p: &ConicProgram) -> StandardForm {
    let n = p.num_vars;
    let m: usize = p.constraints.iter().map(|c| c.dim()).sum();
    let mut g = DMatrix::zeros(m, n);
    let mut h = DVector::zeros(m);
    let mut blocks = Vec::with_capacity(p.constraints.len());
    let mut row = 0;
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for con in &p.constraints {
        let d = con.dim();
        let mut a = con.matrix.clone();
        let mut b = con.offset.clone();
        if con.kind == ConeKind::RotatedSecondOrder {
            // (u, v, y) -> ((u+v)/sqrt2, (u-v)/sqrt2, y)
            let (a0, a1) = (a.row(0).into_owned(), a.row(1).into_owned());
            a.set_row(0, &((&a0 + &a1) * r));
            a.set_row(1, &((&a0 - &a1) * r));
            let (b0, b1) = (b[0], b[1]);
            b[0] = (b0 + b1) * r;
            b[1] = (b0 - b1) * r;
        }
        // Positive scaling of a whole block leaves cone membership unchanged.
        let scale = (0..d)
            .map(|i| (a.row(i).norm_squared() + b[i] * b[i]).sqrt())
            .fold(0.0, f64::max);
        let inv = if scale > 0.0 { 1.0 / scale } else { 1.0 };
        for i in 0..d {
            for j in 0..n {
                g[(row + i, j)] = -a[(i, j)] * inv;
            }
            h[row + i] = b[i] * inv;
        }
        let kind = match con.kind {
            ConeKind::NonNegative => BlockKind::Orthant,
            _ => BlockKind::Soc,
        };
        blocks.push(Block { start: row, dim: d, kind });
        row += d;
    }
    let degree = blocks.iter().map(Block::degree).sum();
    StandardForm {
        g,
        h,
        c: -&p.objective,
        blocks,
        degree,
    }
}

/// Nesterov-Todd scaling of one block.
#[derive(Debug, Clone)]
enum Scaling {
    Orthant(Vec<f64>),
    Soc { eta: f64, a: f64, q: Vec<f64> },
}

impl Scaling {
    fn new(kind: BlockKind, s: &[f64], z: &[f64]) -> Scaling {
        match kind {
            BlockKind::Orthant => Scaling::Orthant(s.iter().zip(z).map(|(si, zi)| (si / zi).sqrt()).collect()),
            BlockKind::Soc => {
                let s_res = soc_residual(s);
                let z_res = soc_residual(z);
                let (sn, zn) = (s_res.sqrt(), z_res.sqrt());
                let dot: f64 = s.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() / (sn * zn);
                let gamma = ((1.0 + dot) / 2.0).sqrt();
                let a = (s[0] / sn + z[0] / zn) / (2.0 * gamma);
                let q = (1..s.len())
                    .map(|i| (s[i] / sn - z[i] / zn) / (2.0 * gamma))
                    .collect();
                Scaling::Soc {
                    eta: (s_res / z_res).sqrt().sqrt(),
                    a,
                    q,
                }
            }
        }
    }

    /// `out = W x` (or `W^-1 x` when `inverse`).
    fn apply(&self, x: &[f64], out: &mut [f64], inverse: bool) {
        match self {
            Scaling::Orthant(w) => {
                for i in 0..x.len() {
                    out[i] = if inverse { x[i] / w[i] } else { x[i] * w[i] };
                }
            }
            Scaling::Soc { eta, a, q } => {
                let sign = if inverse { -1.0 } else { 1.0 };
                let f = if inverse { 1.0 / eta } else { *eta };
                let qx: f64 = q.iter().zip(&x[1..]).map(|(a, b)| a * b).sum();
                out[0] = f * (a * x[0] + sign * qx);
                let coef = sign * x[0] + qx / (1.0 + a);
                for i in 1..x.len() {
                    out[i] = f * (x[i] + coef * q[i - 1]);
                }
            }
        }
    }
}

/// `x0^2 - ||x1||^2`, factored for accuracy near the boundary.
fn soc_residual(x: &[f64]) -> f64 {
    let tail = x[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
    (x[0] - tail) * (x[0] + tail)
}

fn jordan_product(kind: BlockKind, x: &[f64], y: &[f64], out: &mut [f64]) {
    match kind {
        BlockKind::Orthant => {
            for i in 0..x.len() {
                out[i] = x[i] * y[i];
            }
        }
        BlockKind::Soc => {
            out[0] = x.iter().zip(y).map(|(a, b)| a * b).sum();
            for i in 1..x.len() {
                out[i] = x[0] * y[i] + y[0] * x[i];
            }
        }
    }
}

/// Solves `lambda o u = v` for `u`.
fn jordan_divide(kind: BlockKind, lambda: &[f64], v: &[f64], out: &mut [f64]) {
    match kind {
        BlockKind::Orthant => {
            for i in 0..v.len() {
                out[i] = v[i] / lambda[i];
            }
        }
        BlockKind::Soc => {
            let l1v1: f64 = lambda[1..].iter().zip(&v[1..]).map(|(a, b)| a * b).sum();
            let u0 = (lambda[0] * v[0] - l1v1) / soc_residual(lambda);
            out[0] = u0;
            for i in 1..v.len() {
                out[i] = (v[i] - u0 * lambda[i]) / lambda[0];
            }
        }
    }
}

/// Smallest "eigenvalue" of `x` in the cone's Jordan algebra.
fn min_eigenvalue(kind: BlockKind, x: &[f64]) -> f64 {
    match kind {
        BlockKind::Orthant => x.iter().copied().fold(f64::INFINITY, f64::min),
        BlockKind::Soc => x[0] - x[1..].iter().map(|v| v * v).sum::<f64>().sqrt(),
    }
}

/// Largest `alpha >= 0` with `x + alpha dx` in the cone (may be infinite).
fn max_step(kind: BlockKind, x: &[f64], dx: &[f64]) -> f64 {
    match kind {
        BlockKind::Orthant => x
            .iter()
            .zip(dx)
            .filter(|(_, d)| **d < 0.0)
            .map(|(xi, d)| -xi / d)
            .fold(f64::INFINITY, f64::min),
        BlockKind::Soc => {
            let jdot = |u: &[f64], v: &[f64]| u[0] * v[0] - u[1..].iter().zip(&v[1..]).map(|(a, b)| a * b).sum::<f64>();
            let a = jdot(dx, dx);
            let b = jdot(x, dx);
            let c = soc_residual(x).max(0.0);
            if a.abs() <= 1e-300 {
                return if b < 0.0 { -c / (2.0 * b) } else { f64::INFINITY };
            }
            let disc = b * b - a * c;
            if disc < 0.0 {
                return f64::INFINITY;
            }
            let root = disc.sqrt();
            let qq = -(b + b.signum() * root);
            let roots = [qq / a, if qq != 0.0 { c / qq } else { f64::INFINITY }];
            let step = roots
                .into_iter()
                .filter(|r| *r >= 0.0)
                .fold(f64::INFINITY, f64::min);
            // The direction may also leave through the apex region.
            if dx[0] < 0.0 {
                step.min(-x[0] / dx[0])
            } else {
                step
            }
        }
    }
}

fn unit_shift(blocks: &[Block], v: &mut DVector<f64>, amount: f64) {
    for b in blocks {
        match b.kind {
            BlockKind::Orthant => {
                for i in b.range() {
                    v[i] += amount;
                }
            }
            BlockKind::Soc => v[b.start] += amount,
        }
    }
}

fn push_to_interior(blocks: &[Block], v: &mut DVector<f64>) {
    let min_eig = blocks
        .iter()
        .map(|b| min_eigenvalue(b.kind, &v.as_slice()[b.range()]))
        .fold(f64::INFINITY, f64::min);
    let scale = v.norm().max(1.0);
    if min_eig <= 1e-8 * scale {
        unit_shift(blocks, v, 1.0 - min_eig);
    }
}

fn block_step(blocks: &[Block], x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    blocks
        .iter()
        .map(|b| max_step(b.kind, &x.as_slice()[b.range()], &dx.as_slice()[b.range()]))
        .fold(f64::INFINITY, f64::min)
}

/// Factorization of the reduced Newton system at one iterate.
struct Kkt<'a> {
    form: &'a StandardForm,
    scalings: Vec<Scaling>,
    /// `W^-1 G`.
    g_scaled: DMatrix<f64>,
    d_inv: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl<'a> Kkt<'a> {
    fn new(form: &'a StandardForm, scalings: Vec<Scaling>, iteration: usize) -> Result<Self, SocpError> {
        let (m, n) = form.g.shape();
        let mut g_scaled = DMatrix::zeros(m, n);
        for j in 0..n {
            let col = form.g.column(j);
            let mut out = g_scaled.column_mut(j);
            for (b, w) in form.blocks.iter().zip(&scalings) {
                w.apply(&col.as_slice()[b.range()], &mut out.as_mut_slice()[b.range()], true);
            }
        }
        // Jacobi-equilibrated normal matrix, so the regularization is
        // relative to each variable's own curvature.
        let normal = g_scaled.tr_mul(&g_scaled);
        let max_diag = normal.diagonal().iter().copied().fold(0.0, f64::max);
        let floor = max_diag * 1e-30 + f64::MIN_POSITIVE;
        let d_inv = normal.diagonal().map(|v| 1.0 / v.max(floor).sqrt());
        let mut equilibrated = normal;
        for j in 0..n {
            for i in 0..n {
                equilibrated[(i, j)] *= d_inv[i] * d_inv[j];
            }
        }
        let mut reg = 0.0;
        loop {
            let mut regularized = equilibrated.clone();
            for i in 0..n {
                regularized[(i, i)] += reg;
            }
            if let Some(chol) = regularized.cholesky() {
                return Ok(Self {
                    form,
                    scalings,
                    g_scaled,
                    d_inv,
                    chol,
                });
            }
            reg = if reg == 0.0 { 1e-14 } else { reg * 100.0 };
            if reg > 1e-4 {
                return Err(SocpError::Numerical(iteration));
            }
        }
    }

    fn apply_w(&self, x: &DVector<f64>, inverse: bool) -> DVector<f64> {
        let mut out = DVector::zeros(x.len());
        for (b, w) in self.form.blocks.iter().zip(&self.scalings) {
            w.apply(&x.as_slice()[b.range()], &mut out.as_mut_slice()[b.range()], inverse);
        }
        out
    }

    fn reduced_solve(&self, r1: &DVector<f64>, r2: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let winv_r2 = self.apply_w(r2, true);
        let rhs = r1 + self.g_scaled.tr_mul(&winv_r2);
        let x = self.chol.solve(&rhs.component_mul(&self.d_inv)).component_mul(&self.d_inv);
        let z = self.apply_w(&(&self.g_scaled * &x - winv_r2), true);
        (x, z)
    }

    /// Solves `[0 G^T; G -W^2] [x; z] = [r1; r2]`, refining against the
    /// unreduced system.
    fn solve(&self, r1: &DVector<f64>, r2: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let (mut x, mut z) = self.reduced_solve(r1, r2);
        let scale = r1.amax().max(r2.amax()).max(f64::MIN_POSITIVE);
        let mut best = f64::INFINITY;
        for _ in 0..8 {
            let e1 = r1 - self.form.g.tr_mul(&z);
            let w2z = self.apply_w(&self.apply_w(&z, false), false);
            let e2 = r2 - &self.form.g * &x + w2z;
            let err = e1.amax().max(e2.amax());
            if err <= 1e-15 * scale || err >= 0.5 * best {
                break;
            }
            best = err;
            let (dx, dz) = self.reduced_solve(&e1, &e2);
            x += dx;
            z += dz;
        }
        (x, z)
    }
}

struct Direction {
    x: DVector<f64>,
    z: DVector<f64>,
    s: DVector<f64>,
    tau: f64,
    kappa: f64,
}

struct Iterate {
    x: DVector<f64>,
    s: DVector<f64>,
    z: DVector<f64>,
    tau: f64,
    kappa: f64,
}

pub fn solve(program: &ConicProgram, settings: &SolverSettings) -> Result<SolveResult, SocpError> {
    program.validate()?;
    let form = standardize(program);
    let (m, n) = form.g.shape();
    let tol = settings.tolerance;

    if m == 0 {
        let status = if program.objective.iter().all(|&v| v == 0.0) {
            SolveStatus::Optimal
        } else {
            SolveStatus::Unbounded
        };
        return Ok(SolveResult {
            status,
            primal: DVector::zeros(n),
            objective_value: 0.0,
            residuals: Residuals::default(),
            iterations: 0,
        });
    }

    let identity_scalings: Vec<Scaling> = form
        .blocks
        .iter()
        .map(|b| match b.kind {
            BlockKind::Orthant => Scaling::Orthant(vec![1.0; b.dim]),
            BlockKind::Soc => Scaling::Soc {
                eta: 1.0,
                a: 1.0,
                q: vec![0.0; b.dim - 1],
            },
        })
        .collect();
    let init = Kkt::new(&form, identity_scalings, 0)?;
    let (x0, neg_s) = init.solve(&DVector::zeros(n), &form.h);
    let mut s0 = -neg_s;
    let (_, mut z0) = init.solve(&-&form.c, &DVector::zeros(m));
    push_to_interior(&form.blocks, &mut s0);
    push_to_interior(&form.blocks, &mut z0);
    let mut it = Iterate {
        x: x0,
        s: s0,
        z: z0,
        tau: 1.0,
        kappa: 1.0,
    };

    let h_norm = form.h.norm().max(1.0);
    let c_norm = form.c.norm().max(1.0);
    let mut status = SolveStatus::IterationLimit;
    let mut residuals = Residuals::default();
    let mut iterations = 0;
    let mut stalled = 0;

    for iter in 0..=settings.max_iterations {
        iterations = iter;
        let r_x = form.g.tr_mul(&it.z) + &form.c * it.tau;
        let r_z = &it.s + &form.g * &it.x - &form.h * it.tau;
        let cx = form.c.dot(&it.x);
        let hz = form.h.dot(&it.z);
        let r_tau = it.kappa + cx + hz;
        let sz = it.s.dot(&it.z);
        let mu = (sz + it.tau * it.kappa) / (form.degree as f64 + 1.0);

        let pcost = cx / it.tau;
        let dcost = -hz / it.tau;
        residuals = Residuals {
            primal: r_z.norm() / (it.tau * h_norm),
            dual: r_x.norm() / (it.tau * c_norm),
            gap: (sz / (it.tau * it.tau)).abs() / pcost.abs().min(dcost.abs()).max(1.0),
        };
        if residuals.primal <= tol && residuals.dual <= tol && residuals.gap <= tol {
            status = SolveStatus::Optimal;
            break;
        }
        if it.kappa > it.tau {
            if hz < 0.0 && form.g.tr_mul(&it.z).norm() / -hz <= tol {
                status = SolveStatus::Infeasible;
                break;
            }
            if cx < 0.0 && (&form.g * &it.x + &it.s).norm() / -cx <= tol {
                status = SolveStatus::Unbounded;
                break;
            }
        }
        if iter == settings.max_iterations || stalled >= 5 {
            break;
        }

        let scalings: Vec<Scaling> = form
            .blocks
            .iter()
            .map(|b| Scaling::new(b.kind, &it.s.as_slice()[b.range()], &it.z.as_slice()[b.range()]))
            .collect();
        let kkt = Kkt::new(&form, scalings, iter)?;
        let lambda = kkt.apply_w(&it.z, false);
        let (x1, z1) = kkt.solve(&-&form.c, &form.h);
        let denom = form.c.dot(&x1) + form.h.dot(&z1) - it.kappa / it.tau;

        let direction = |eta: f64, ds_target: &DVector<f64>, dk_target: f64| -> Direction {
            let mut u = DVector::zeros(m);
            for b in &form.blocks {
                jordan_divide(
                    b.kind,
                    &lambda.as_slice()[b.range()],
                    &ds_target.as_slice()[b.range()],
                    &mut u.as_mut_slice()[b.range()],
                );
            }
            let rhs2 = -&r_z * eta - kkt.apply_w(&u, false);
            let (x2, z2) = kkt.solve(&(-&r_x * eta), &rhs2);
            let dtau = (-eta * r_tau - dk_target / it.tau - form.c.dot(&x2) - form.h.dot(&z2)) / denom;
            let dx = x2 + &x1 * dtau;
            let dz = z2 + &z1 * dtau;
            // ds from the linearized primal equation.
            let ds = -&r_z * eta - &form.g * &dx + &form.h * dtau;
            let dkappa = (dk_target - it.kappa * dtau) / it.tau;
            Direction {
                x: dx,
                z: dz,
                s: ds,
                tau: dtau,
                kappa: dkappa,
            }
        };
        let step_length = |d: &Direction| -> f64 {
            let mut a = block_step(&form.blocks, &it.s, &d.s).min(block_step(&form.blocks, &it.z, &d.z));
            if d.tau < 0.0 {
                a = a.min(-it.tau / d.tau);
            }
            if d.kappa < 0.0 {
                a = a.min(-it.kappa / d.kappa);
            }
            a
        };

        let mut lambda_sq = DVector::zeros(m);
        for b in &form.blocks {
            let l = &lambda.as_slice()[b.range()];
            jordan_product(b.kind, l, l, &mut lambda_sq.as_mut_slice()[b.range()]);
        }

        // Predictor.
        let affine = direction(1.0, &-&lambda_sq, -it.tau * it.kappa);
        let alpha_aff = step_length(&affine).min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 1.0);

        // Corrector.
        let ds_scaled = kkt.apply_w(&affine.s, true);
        let dz_scaled = kkt.apply_w(&affine.z, false);
        let mut target = -lambda_sq;
        let mut cross = DVector::zeros(m);
        for b in &form.blocks {
            jordan_product(
                b.kind,
                &ds_scaled.as_slice()[b.range()],
                &dz_scaled.as_slice()[b.range()],
                &mut cross.as_mut_slice()[b.range()],
            );
        }
        target -= cross;
        unit_shift(&form.blocks, &mut target, sigma * mu);
        let dk = -it.tau * it.kappa - affine.tau * affine.kappa + sigma * mu;
        let combined = direction(1.0 - sigma, &target, dk);
        let alpha = (0.99 * step_length(&combined)).min(1.0);
        if alpha < 1e-10 {
            stalled += 1;
        } else {
            stalled = 0;
        }

        it.x += &combined.x * alpha;
        it.s += &combined.s * alpha;
        it.z += &combined.z * alpha;
        it.tau += alpha * combined.tau;
        it.kappa += alpha * combined.kappa;
    }

    let primal = match status {
        SolveStatus::Unbounded => {
            let cx = form.c.dot(&it.x);
            &it.x / -cx
        }
        _ => &it.x / it.tau,
    };
    Ok(SolveResult {
        status,
        objective_value: program.objective_value(&primal),
        primal,
        residuals,
        iterations,
    })
}
