//! Dense ADMM solver for the per-iteration convex subproblem:
//!
//! ```text
//! minimize    1/2 x' P x + q' x
//! subject to  A x + s = b,    s in K
//! ```
//!
//! where `K` is a product of a zero cone (equalities), a nonnegative
//! orthant (inequalities), and small PSD cones stored in scaled `svec`
//! form. The variable `x` stacks the spectral coefficients and the Gram
//! blocks, so the PSD constraints are plain selector rows.
//!
//! The iteration is the standard quasi-definite splitting: one KKT solve
//! with a cached LU factorization, a Euclidean projection onto `K` (dense
//! symmetric eigendecomposition per PSD block, sizes stay below ~10), and
//! a scaled dual update with over-relaxation. Data is Ruiz-equilibrated up
//! front and all stopping tests run on unscaled residuals. Primal
//! infeasibility is declared only on a verified Farkas certificate built
//! from the dual increments; residual stagnation surfaces as
//! `IterationLimit`, never as `Optimal`.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

/// Length of the scaled upper-triangle vectorization of a `d x d` matrix.
pub fn svec_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Pack a symmetric matrix into svec order (column-major upper triangle,
/// off-diagonals scaled by sqrt 2 so inner products are preserved).
pub fn mat_to_svec(m: &DMatrix<f64>) -> DVector<f64> {
    let d = m.nrows();
    debug_assert_eq!(d, m.ncols());
    let mut out = DVector::zeros(svec_len(d));
    let mut idx = 0;
    for j in 0..d {
        for i in 0..=j {
            out[idx] = if i == j {
                m[(i, j)]
            } else {
                m[(i, j)] * std::f64::consts::SQRT_2
            };
            idx += 1;
        }
    }
    out
}

/// Inverse of [`mat_to_svec`].
pub fn svec_to_mat(s: &[f64], d: usize) -> DMatrix<f64> {
    debug_assert_eq!(s.len(), svec_len(d));
    let mut out = DMatrix::zeros(d, d);
    let mut idx = 0;
    for j in 0..d {
        for i in 0..=j {
            if i == j {
                out[(i, j)] = s[idx];
            } else {
                let v = s[idx] / std::f64::consts::SQRT_2;
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
            idx += 1;
        }
    }
    out
}

/// svec index of entry `(i, j)`, `i <= j`.
pub fn svec_index(i: usize, j: usize) -> usize {
    debug_assert!(i <= j);
    j * (j + 1) / 2 + i
}

/// Cone layout of the slack vector: `zero` equality rows, then `nonneg`
/// inequality rows, then one svec block per PSD dimension.
#[derive(Debug, Clone, Default)]
pub struct ConeSpec {
    pub zero: usize,
    pub nonneg: usize,
    pub psd: Vec<usize>,
}

impl ConeSpec {
    pub fn rows(&self) -> usize {
        self.zero + self.nonneg + self.psd.iter().map(|&d| svec_len(d)).sum::<usize>()
    }
}

/// How the stacked variable splits into coefficients and Gram blocks.
#[derive(Debug, Clone, Default)]
pub struct VariableLayout {
    pub n_coeff: usize,
    pub gram_dims: Vec<usize>,
}

impl VariableLayout {
    pub fn total(&self) -> usize {
        self.n_coeff + self.gram_dims.iter().map(|&d| svec_len(d)).sum::<usize>()
    }

    /// Offset of Gram block `idx` within the variable vector.
    pub fn gram_offset(&self, idx: usize) -> usize {
        self.n_coeff
            + self.gram_dims[..idx]
                .iter()
                .map(|&d| svec_len(d))
                .sum::<usize>()
    }
}

/// Assembled convex subproblem data.
#[derive(Debug, Clone)]
pub struct ConicSubproblem {
    /// Quadratic objective matrix (PSD).
    pub quad: DMatrix<f64>,
    /// Linear objective.
    pub lin: DVector<f64>,
    /// Constraint matrix of `A x + s = b`.
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub cones: ConeSpec,
    pub layout: VariableLayout,
}

impl ConicSubproblem {
    /// Rescale every equality and inequality row to unit inf-norm.
    ///
    /// Zero-cone and nonnegative rows are invariant under positive row
    /// scaling, while the raw coefficient rows here span many orders of
    /// magnitude (monomial conversions grow like 2^k). Normalizing keeps
    /// the solver's absolute residual tolerances meaningful: a residual of
    /// 1e-9 then reads as 1e-9 relative to the row's data norm.
    pub fn normalize_rows(&mut self) {
        let n = self.a.ncols();
        for i in 0..self.cones.zero + self.cones.nonneg {
            let mut scale: f64 = 0.0;
            for j in 0..n {
                scale = scale.max(self.a[(i, j)].abs());
            }
            if scale > 0.0 {
                for j in 0..n {
                    self.a[(i, j)] /= scale;
                }
                self.b[i] /= scale;
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverSettings {
    /// Absolute primal/dual residual tolerance.
    pub eps_abs: f64,
    /// Relative residual tolerance (0 disables).
    pub eps_rel: f64,
    pub max_iter: usize,
    /// Initial ADMM penalty.
    pub rho: f64,
    /// Proximal regularization on the x-block.
    pub sigma: f64,
    /// Over-relaxation in (0, 2).
    pub alpha: f64,
    /// Tolerance for the Farkas infeasibility certificate.
    pub eps_infeas: f64,
    /// Residuals are checked every this many iterations.
    pub check_interval: usize,
    /// Window for the stagnation rule.
    pub stall_iters: usize,
    /// Primal residual level above which stagnation aborts the solve.
    pub stall_threshold: f64,
    /// Residual level from which an active-set polish is attempted.
    pub polish_trigger: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            eps_abs: 1e-9,
            eps_rel: 0.0,
            max_iter: 50_000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            eps_infeas: 1e-9,
            check_interval: 25,
            stall_iters: 5_000,
            stall_threshold: 1e-4,
            polish_trigger: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    IterationLimit,
    NumericalFailure,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::Optimal => "optimal",
            Self::Infeasible => "infeasible",
            Self::IterationLimit => "iteration-limit",
            Self::NumericalFailure => "numerical-failure",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Coefficient part of the solution (layout prefix).
    pub coeffs: DVector<f64>,
    /// Gram blocks recovered from the solution.
    pub grams: Vec<DMatrix<f64>>,
    /// Full primal solution.
    pub x: DVector<f64>,
    /// Slack vector `s` (always inside the cone).
    pub slack: DVector<f64>,
    /// Dual vector `y` with `P x + q + A' y = 0` at optimality.
    pub dual: DVector<f64>,
    /// `1/2 x' P x + q' x` at the returned point.
    pub objective: f64,
    /// Max absolute violation over the equality rows.
    pub eq_residual: f64,
    /// Smallest eigenvalue over all Gram blocks (0 when there are none).
    pub min_psd_eig: f64,
    /// Smallest inequality slack `b - A x` (infinity when there are none).
    pub ineq_slack: f64,
    /// Unscaled primal/dual residual inf-norms at exit.
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub wall_time: Duration,
}

/// Euclidean projection onto the product cone, in place.
fn project_cone(w: &mut DVector<f64>, cones: &ConeSpec) {
    for i in 0..cones.zero {
        w[i] = 0.0;
    }
    let mut off = cones.zero;
    for i in 0..cones.nonneg {
        if w[off + i] < 0.0 {
            w[off + i] = 0.0;
        }
    }
    off += cones.nonneg;
    for &d in &cones.psd {
        let len = svec_len(d);
        if d == 0 {
            continue;
        }
        if d == 1 {
            if w[off] < 0.0 {
                w[off] = 0.0;
            }
        } else {
            let mat = svec_to_mat(&w.as_slice()[off..off + len], d);
            let eig = mat.symmetric_eigen();
            let mut rebuilt = DMatrix::zeros(d, d);
            for (k, &lam) in eig.eigenvalues.iter().enumerate() {
                if lam > 0.0 {
                    let v = eig.eigenvectors.column(k);
                    rebuilt += lam * &v * v.transpose();
                }
            }
            let sv = mat_to_svec(&rebuilt);
            w.as_mut_slice()[off..off + len].copy_from_slice(sv.as_slice());
        }
        off += len;
    }
}

/// Smallest eigenvalue of the svec block `s` (d x d).
fn min_eig_svec(s: &[f64], d: usize) -> f64 {
    if d == 0 {
        return 0.0;
    }
    if d == 1 {
        return s[0];
    }
    let mat = svec_to_mat(s, d);
    mat.symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

struct Scaling {
    /// Column scaling of the variable: `x = d .* x_scaled`.
    d: DVector<f64>,
    /// Row scaling of the constraints.
    e: DVector<f64>,
    /// Cost scaling factor.
    cost: f64,
}

/// Modified Ruiz equilibration; row scalings are kept uniform inside each
/// PSD block so the scaled slack stays in the same cone.
fn equilibrate(sub: &ConicSubproblem, iters: usize) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>, Scaling) {
    let n = sub.quad.nrows();
    let m = sub.a.nrows();
    let mut ps = sub.quad.clone();
    let mut qs = sub.lin.clone();
    let mut a = sub.a.clone();
    let mut bs = sub.b.clone();
    let mut d = DVector::from_element(n, 1.0);
    let mut e = DVector::from_element(m, 1.0);

    for _ in 0..iters {
        // column norms over the stacked [P; A]
        let mut delta = vec![1.0; n];
        for j in 0..n {
            let mut mx: f64 = 0.0;
            for i in 0..n {
                mx = mx.max(ps[(i, j)].abs());
            }
            for i in 0..m {
                mx = mx.max(a[(i, j)].abs());
            }
            delta[j] = if mx > 1e-300 { 1.0 / mx.sqrt() } else { 1.0 };
        }
        let mut eps_r = vec![1.0; m];
        for i in 0..m {
            let mut mx: f64 = 0.0;
            for j in 0..n {
                mx = mx.max(a[(i, j)].abs());
            }
            eps_r[i] = if mx > 1e-300 { 1.0 / mx.sqrt() } else { 1.0 };
        }
        // geometric mean within each PSD block keeps the cone invariant
        let mut off = sub.cones.zero + sub.cones.nonneg;
        for &dim in &sub.cones.psd {
            let len = svec_len(dim);
            if len > 0 {
                let g = eps_r[off..off + len]
                    .iter()
                    .map(|x| x.ln())
                    .sum::<f64>()
                    / len as f64;
                let g = g.exp();
                for r in eps_r[off..off + len].iter_mut() {
                    *r = g;
                }
            }
            off += len;
        }

        for j in 0..n {
            for i in 0..n {
                ps[(i, j)] *= delta[i] * delta[j];
            }
            qs[j] *= delta[j];
            d[j] *= delta[j];
        }
        for i in 0..m {
            for j in 0..n {
                a[(i, j)] *= eps_r[i] * delta[j];
            }
            bs[i] *= eps_r[i];
            e[i] *= eps_r[i];
        }
    }

    // single cost normalization pass
    let mut col_mean = 0.0;
    for j in 0..n {
        let mut mx: f64 = 0.0;
        for i in 0..n {
            mx = mx.max(ps[(i, j)].abs());
        }
        col_mean += mx;
    }
    col_mean /= n.max(1) as f64;
    let qinf = qs.amax();
    let denom = col_mean.max(qinf);
    let cost = if denom > 1e-300 { 1.0 / denom } else { 1.0 };
    ps *= cost;
    qs *= cost;

    (ps, qs, a, bs, Scaling { d, e, cost })
}

fn rho_for_rows(cones: &ConeSpec, rho: f64, boosted: &[bool]) -> DVector<f64> {
    let m = cones.rows();
    let mut v = DVector::from_element(m, rho);
    // stiffer penalty on equality rows and on inequalities detected active
    for i in 0..cones.zero {
        v[i] = rho * 1e3;
    }
    for (i, &on) in boosted.iter().take(cones.nonneg).enumerate() {
        if on {
            v[cones.zero + i] = rho * 1e3;
        }
    }
    v
}

fn factor_kkt(
    ps: &DMatrix<f64>,
    a: &DMatrix<f64>,
    sigma: f64,
    rho_vec: &DVector<f64>,
) -> nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn> {
    let n = ps.nrows();
    let m = a.nrows();
    let mut kkt = DMatrix::zeros(n + m, n + m);
    kkt.view_mut((0, 0), (n, n)).copy_from(ps);
    for i in 0..n {
        kkt[(i, i)] += sigma;
    }
    kkt.view_mut((0, n), (n, m)).copy_from(&a.transpose());
    kkt.view_mut((n, 0), (m, n)).copy_from(a);
    for i in 0..m {
        kkt[(n + i, n + i)] = -1.0 / rho_vec[i];
    }
    kkt.lu()
}

/// Exact solution recovered by an active-set polish.
struct Polished {
    x: DVector<f64>,
    s: DVector<f64>,
    y: DVector<f64>,
    rp: f64,
    rd: f64,
}

/// Active-set polish: from a moderately converged iterate, identify the
/// active face (equalities, tight inequalities, and the span of each
/// PSD block's positive eigenspace), then solve the problem restricted to
/// that face by one dense KKT factorization. The candidate is accepted
/// only if it beats the tolerance on the original data and keeps every
/// cone and dual-sign condition; otherwise the caller keeps iterating.
fn try_polish(
    sub: &ConicSubproblem,
    xu: &DVector<f64>,
    su: &DVector<f64>,
    act_thr: f64,
    eps: f64,
) -> Option<Polished> {
    let n = sub.quad.nrows();

    // active inequality rows, judged at the accuracy of the iterate
    let mut active_rows: Vec<usize> = (0..sub.cones.zero).collect();
    for i in 0..sub.cones.nonneg {
        let idx = sub.cones.zero + i;
        if su[idx] <= act_thr * (1.0 + sub.b[idx].abs()) {
            active_rows.push(idx);
        }
    }

    // face basis per PSD block from the primal eigenstructure
    let mut bases: Vec<DMatrix<f64>> = Vec::with_capacity(sub.layout.gram_dims.len());
    for (bi, &d) in sub.layout.gram_dims.iter().enumerate() {
        if d == 0 {
            bases.push(DMatrix::zeros(0, 0));
            continue;
        }
        let off = sub.layout.gram_offset(bi);
        let mat = svec_to_mat(&xu.as_slice()[off..off + svec_len(d)], d);
        let eig = mat.symmetric_eigen();
        let lmax = eig
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
            .max(1e-12);
        let keep: Vec<usize> = (0..d)
            .filter(|&i| eig.eigenvalues[i] > act_thr * lmax)
            .collect();
        let mut v = DMatrix::zeros(d, keep.len());
        for (col, &i) in keep.iter().enumerate() {
            v.column_mut(col).copy_from(&eig.eigenvectors.column(i));
        }
        bases.push(v);
    }

    // reduced variable map x = T z: coefficients pass through, each PSD
    // block is V W V' with W a free symmetric matrix on the face
    let n_red: usize = sub.layout.n_coeff
        + bases.iter().map(|v| svec_len(v.ncols())).sum::<usize>();
    if n_red == 0 {
        return None;
    }
    let mut t = DMatrix::zeros(n, n_red);
    for i in 0..sub.layout.n_coeff {
        t[(i, i)] = 1.0;
    }
    let mut col = sub.layout.n_coeff;
    for (bi, v) in bases.iter().enumerate() {
        let r = v.ncols();
        let off = sub.layout.gram_offset(bi);
        for k in 0..svec_len(r) {
            let mut unit = DVector::zeros(svec_len(r));
            unit[k] = 1.0;
            let w = svec_to_mat(unit.as_slice(), r);
            let lifted = mat_to_svec(&(v * w * v.transpose()));
            t.view_mut((off, col), (svec_len(v.nrows()), 1))
                .copy_from(&lifted);
            col += 1;
        }
    }

    let m_act = active_rows.len();
    let mut a_act = DMatrix::zeros(m_act, n);
    let mut b_act = DVector::zeros(m_act);
    for (r, &row) in active_rows.iter().enumerate() {
        a_act.row_mut(r).copy_from(&sub.a.row(row));
        b_act[r] = sub.b[row];
    }
    let a_red = &a_act * &t;
    let p_red = t.transpose() * &sub.quad * &t;
    let q_red = t.transpose() * &sub.lin;

    // Null-space solve. The reduced QP is degenerate by construction (the
    // Gram directions are objective-free), so a saddle KKT would be
    // singular; instead take the min-norm particular solution of the
    // active equalities and optimize only over their null space.
    let gram = &a_red * a_red.transpose();
    let gram_eig = gram.clone().symmetric_eigen();
    let gmax = gram_eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(0.0f64, f64::max)
        .max(1e-300);
    let pinv_apply = |rhs: &DVector<f64>| -> DVector<f64> {
        // (A A')^+ rhs via the spectral decomposition
        let proj = gram_eig.eigenvectors.transpose() * rhs;
        let scaled = DVector::from_fn(proj.len(), |i, _| {
            if gram_eig.eigenvalues[i] > 1e-12 * gmax {
                proj[i] / gram_eig.eigenvalues[i]
            } else {
                0.0
            }
        });
        &gram_eig.eigenvectors * scaled
    };
    // anchor: the current iterate expressed in face coordinates; ties are
    // broken toward it so objective-free Gram directions stay close to
    // the (nearly PSD) iterate blocks
    let mut z_anchor = DVector::zeros(n_red);
    for i in 0..sub.layout.n_coeff {
        z_anchor[i] = xu[i];
    }
    let mut col_off = sub.layout.n_coeff;
    for (bi, v) in bases.iter().enumerate() {
        let r = v.ncols();
        if r > 0 {
            let d = v.nrows();
            let off = sub.layout.gram_offset(bi);
            let xb = svec_to_mat(&xu.as_slice()[off..off + svec_len(d)], d);
            let w = v.transpose() * xb * v;
            let sv = mat_to_svec(&w);
            z_anchor.rows_mut(col_off, svec_len(r)).copy_from(&sv);
        }
        col_off += svec_len(r);
    }
    // nearest-to-anchor particular solution of the active equalities
    let z0 = &z_anchor + a_red.transpose() * pinv_apply(&(&b_act - &a_red * &z_anchor));

    // null basis of the active rows from A'A
    let ata = a_red.transpose() * &a_red;
    let ata_eig = ata.symmetric_eigen();
    let amax_eig = ata_eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(0.0f64, f64::max)
        .max(1e-300);
    let null_cols: Vec<usize> = (0..n_red)
        .filter(|&i| ata_eig.eigenvalues[i] <= 1e-12 * amax_eig)
        .collect();
    let mut nullb = DMatrix::zeros(n_red, null_cols.len());
    for (c, &i) in null_cols.iter().enumerate() {
        nullb.column_mut(c).copy_from(&ata_eig.eigenvectors.column(i));
    }

    let z = if nullb.ncols() > 0 {
        // proximal tie-break: directions the objective ignores stay at
        // the anchor, others move freely (the ridge is negligible there)
        let h = nullb.transpose() * &p_red * &nullb;
        let ridge = 1e-10 * (1.0 + h.trace().abs());
        let g = nullb.transpose()
            * (&p_red * &z0 + &q_red + ridge * (&z0 - &z_anchor));
        let mut h_reg = h;
        for i in 0..h_reg.nrows() {
            h_reg[(i, i)] += ridge;
        }
        match h_reg.lu().solve(&(-g)) {
            Some(w) => &z0 + &nullb * w,
            None => z0,
        }
    } else {
        z0
    };

    // active-row multipliers from the stationarity least-squares problem
    let grad_red = &p_red * &z + &q_red;
    let nu = -pinv_apply(&(&a_red * &grad_red));
    if z.amax() > 1e12 || z.iter().any(|v| !v.is_finite()) || nu.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let x = &t * &z;

    // rebuild slacks inside the cone: zero rows stay zero, inequality
    // slacks clamp at the bound, PSD slack blocks mirror the x blocks
    // projected onto the cone (any face mismatch then shows up in rp)
    let m = sub.a.nrows();
    let ax = &sub.a * &x;
    let mut s = DVector::zeros(m);
    for i in 0..sub.cones.nonneg {
        let idx = sub.cones.zero + i;
        s[idx] = (sub.b[idx] - ax[idx]).max(0.0);
    }
    let mut off = sub.cones.zero + sub.cones.nonneg;
    let mut var_off = sub.layout.n_coeff;
    for &d in &sub.cones.psd {
        let len = svec_len(d);
        let mut block = x.rows(var_off, len).into_owned();
        let cone_one = ConeSpec {
            zero: 0,
            nonneg: 0,
            psd: vec![d],
        };
        project_cone(&mut block, &cone_one);
        s.rows_mut(off, len).copy_from(&block);
        off += len;
        var_off += len;
    }

    let mut y = DVector::zeros(m);
    for (r, &row) in active_rows.iter().enumerate() {
        y[row] = nu[r];
    }
    // stationarity defines the PSD-row duals: y_B = (P x + q + A_act' nu)_B
    let grad = &sub.quad * &x + &sub.lin + a_act.transpose() * &nu;
    let mut off = sub.cones.zero + sub.cones.nonneg;
    let mut var_off = sub.layout.n_coeff;
    for &d in &sub.cones.psd {
        let len = svec_len(d);
        for k in 0..len {
            y[off + k] = grad[var_off + k];
        }
        off += len;
        var_off += len;
    }

    // validate against the original data
    let rp = (&ax + &s - &sub.b).amax();
    let rd = (&sub.quad * &x + &sub.lin + sub.a.transpose() * &y).amax();
    if std::env::var("MASENSE_DEBUG_POLISH").is_ok() {
        eprintln!("polish: act rows {} faces {:?} rp {rp:.2e} rd {rd:.2e} eps {eps:.1e}",
            active_rows.len(), bases.iter().map(|v| (v.nrows(), v.ncols())).collect::<Vec<_>>());
    }
    if rp > eps || rd > eps {
        return None;
    }
    // dual signs: active inequalities nonnegative, PSD duals in the cone
    for i in 0..sub.cones.nonneg {
        let idx = sub.cones.zero + i;
        if y[idx] < -1e-8 * (1.0 + y.amax()) {
            if std::env::var("MASENSE_DEBUG_POLISH").is_ok() { eprintln!("polish: dual sign reject row {idx} y {}", y[idx]); }
            return None;
        }
    }
    let mut off = sub.cones.zero + sub.cones.nonneg;
    for &d in &sub.cones.psd {
        let len = svec_len(d);
        if d > 0 {
            let block = y.rows(off, len).into_owned();
            let scale = block.amax().max(1.0);
            let me = min_eig_svec(block.as_slice(), d);
            if me < -1e-7 * scale {
                if std::env::var("MASENSE_DEBUG_POLISH").is_ok() { eprintln!("polish: dual psd reject dim {d} mineig {me:.2e}"); }
                return None;
            }
        }
        off += len;
    }

    Some(Polished { x, s, y, rp, rd })
}

/// Verify a Farkas certificate of primal infeasibility: `v in K*`,
/// `A' v ~ 0`, `b' v < 0`, with `v` normalized to unit inf-norm.
fn certifies_infeasibility(
    v: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    cones: &ConeSpec,
    eps: f64,
) -> bool {
    let norm = v.amax();
    if !(norm > 1e-13) {
        return false;
    }
    let vn = v / norm;
    // dual-cone membership: equality rows free, inequality rows >= 0,
    // PSD blocks PSD
    let mut off = cones.zero;
    for i in 0..cones.nonneg {
        if vn[off + i] < -eps {
            return false;
        }
    }
    off += cones.nonneg;
    for &dim in &cones.psd {
        let len = svec_len(dim);
        if dim > 0 && min_eig_svec(&vn.as_slice()[off..off + len], dim) < -eps {
            return false;
        }
        off += len;
    }
    if (a.transpose() * &vn).amax() > eps {
        return false;
    }
    b.dot(&vn) <= -eps
}

/// Solve the subproblem. `warm_coeffs` seeds the coefficient prefix of the
/// primal iterate; slacks and duals always start cold.
pub fn solve(
    sub: &ConicSubproblem,
    settings: &SolverSettings,
    warm_coeffs: Option<&DVector<f64>>,
) -> SolveResult {
    let start = Instant::now();
    let n = sub.quad.nrows();
    let m = sub.a.nrows();
    debug_assert_eq!(sub.layout.total(), n);
    debug_assert_eq!(sub.cones.rows(), m);

    let (ps, qs, a_s, bs, scaling) = equilibrate(sub, 10);

    let mut rho = settings.rho;
    let mut boosted = vec![false; sub.cones.nonneg];
    let mut rho_vec = rho_for_rows(&sub.cones, rho, &boosted);
    let mut lu = factor_kkt(&ps, &a_s, settings.sigma, &rho_vec);

    // scaled iterates
    let mut x = DVector::zeros(n);
    if let Some(w) = warm_coeffs {
        for i in 0..w.len().min(sub.layout.n_coeff) {
            x[i] = w[i] / scaling.d[i];
        }
    }
    let mut s = &bs - &a_s * &x;
    project_cone(&mut s, &sub.cones);
    let mut mu = DVector::zeros(m);

    let mut rhs = DVector::zeros(n + m);
    let mut status = SolveStatus::IterationLimit;
    let mut iterations = settings.max_iter;
    let mut y_prev: Option<DVector<f64>> = None;
    let mut rp_history: Vec<(usize, f64)> = Vec::new();
    let mut final_rp = f64::INFINITY;
    let mut final_rd = f64::INFINITY;
    let mut polished: Option<Polished> = None;
    let mut next_polish_iter = 0usize;
    let mut rho_change_iter = 0usize;

    for iter in 1..=settings.max_iter {
        rhs.rows_mut(0, n).copy_from(&(settings.sigma * &x - &qs));
        for i in 0..m {
            rhs[n + i] = bs[i] - s[i] + mu[i] / rho_vec[i];
        }
        let sol = match lu.solve(&rhs) {
            Some(sol) => sol,
            None => {
                status = SolveStatus::NumericalFailure;
                iterations = iter;
                break;
            }
        };
        let xt = sol.rows(0, n).into_owned();
        let nu = sol.rows(n, m).into_owned();

        let mut w = DVector::zeros(m);
        for i in 0..m {
            let st = s[i] - (mu[i] + nu[i]) / rho_vec[i];
            w[i] = settings.alpha * st + (1.0 - settings.alpha) * s[i] + mu[i] / rho_vec[i];
        }
        x = settings.alpha * xt + (1.0 - settings.alpha) * &x;
        let mut s_new = w.clone();
        project_cone(&mut s_new, &sub.cones);
        for i in 0..m {
            mu[i] = rho_vec[i] * (w[i] - s_new[i]);
        }
        s = s_new;

        let checking = iter % settings.check_interval == 0 || iter == settings.max_iter;
        if !checking {
            continue;
        }

        // unscaled quantities
        let xu = x.component_mul(&scaling.d);
        let su = s.component_div(&scaling.e);
        let yu = -mu.component_mul(&scaling.e) / scaling.cost;
        if xu.iter().any(|v| !v.is_finite()) || yu.iter().any(|v| !v.is_finite()) {
            status = SolveStatus::NumericalFailure;
            iterations = iter;
            break;
        }

        let ax = &sub.a * &xu;
        let rp_vec = &ax + &su - &sub.b;
        let px = &sub.quad * &xu;
        let aty = sub.a.transpose() * &yu;
        let rd_vec = &px + &sub.lin + &aty;
        let rp = rp_vec.amax();
        let rd = rd_vec.amax();
        final_rp = rp;
        final_rd = rd;

        let tol_p = settings.eps_abs
            + settings.eps_rel * ax.amax().max(su.amax()).max(sub.b.amax());
        let tol_d = settings.eps_abs
            + settings.eps_rel * px.amax().max(sub.lin.amax()).max(aty.amax());
        if rp <= tol_p && rd <= tol_d {
            status = SolveStatus::Optimal;
            iterations = iter;
            break;
        }

        // near the solution, one exact solve on the active face usually
        // finishes the job orders of magnitude sooner than the splitting
        // tail would
        if rp <= settings.polish_trigger && iter >= next_polish_iter {
            let act_thr = (10.0 * rp.max(rd)).max(1e-7);
            if let Some(pol) = try_polish(sub, &xu, &su, act_thr, tol_p.min(tol_d)) {
                final_rp = pol.rp;
                final_rd = pol.rd;
                polished = Some(pol);
                status = SolveStatus::Optimal;
                iterations = iter;
                break;
            }
            next_polish_iter = iter + 20 * settings.check_interval;
        }

        // Farkas certificate from the dual increment
        if let Some(prev) = &y_prev {
            let dy = &yu - prev;
            if certifies_infeasibility(&dy, &sub.a, &sub.b, &sub.cones, settings.eps_infeas)
                || certifies_infeasibility(&(-&dy), &sub.a, &sub.b, &sub.cones, settings.eps_infeas)
            {
                status = SolveStatus::Infeasible;
                iterations = iter;
                break;
            }
        }
        y_prev = Some(yu);

        // stagnation: no meaningful primal progress at a coarse residual
        // for a full window under an unchanged penalty
        rp_history.push((iter, rp));
        if rp > settings.stall_threshold
            && iter >= rho_change_iter + settings.stall_iters
        {
            if let Some(&(_, old)) = rp_history
                .iter()
                .rev()
                .find(|(it, _)| iter - it >= settings.stall_iters)
            {
                if rp > 0.99 * old {
                    status = SolveStatus::IterationLimit;
                    iterations = iter;
                    break;
                }
            }
        }

        // adaptive penalty, OSQP style, diagnosed on the scaled iterates
        // (the raw row scales are too heterogeneous to compare residuals)
        if iter % (settings.check_interval * 5) == 0 {
            let ax_s = &a_s * &x;
            let rp_s = (&ax_s + &s - &bs).amax();
            let px_s = &ps * &x;
            let aty_s = a_s.transpose() * &mu;
            let rd_s = (&px_s + &qs - &aty_s).amax();
            let denom_p = ax_s.amax().max(s.amax()).max(bs.amax()).max(1e-12);
            let denom_d = px_s.amax().max(qs.amax()).max(aty_s.amax()).max(1e-12);
            let ratio = ((rp_s / denom_p) / (rd_s / denom_d).max(1e-300)).sqrt();

            // tag near-active inequalities and boundary PSD blocks: their
            // residuals behave like equalities', so give them the equality
            // penalty (hysteresis keeps borderline rows from flapping)
            let mut changed = false;
            for i in 0..sub.cones.nonneg {
                let idx = sub.cones.zero + i;
                let scale = 1.0 + bs[idx].abs();
                let want = if boosted[i] {
                    s[idx] <= 1e-4 * scale
                } else {
                    s[idx] <= 1e-6 * scale
                };
                if want != boosted[i] {
                    boosted[i] = want;
                    changed = true;
                }
            }

            if ratio > 5.0 || ratio < 0.2 {
                rho = (rho * ratio).clamp(1e-6, 1e6);
                changed = true;
            }
            if changed {
                rho_vec = rho_for_rows(&sub.cones, rho, &boosted);
                lu = factor_kkt(&ps, &a_s, settings.sigma, &rho_vec);
                rho_change_iter = iter;
            }
        }
    }

    // final polish attempt when the loop ran out without converging
    if status == SolveStatus::IterationLimit && polished.is_none() {
        let xu = x.component_mul(&scaling.d);
        let su = s.component_div(&scaling.e);
        if xu.iter().all(|v| v.is_finite()) {
            let act_thr = (10.0 * final_rp.max(final_rd)).max(1e-7).min(1e-2);
            if let Some(pol) = try_polish(sub, &xu, &su, act_thr, settings.eps_abs) {
                final_rp = pol.rp;
                final_rd = pol.rd;
                polished = Some(pol);
                status = SolveStatus::Optimal;
            }
        }
    }

    // unscale and package
    let (xu, su, yu) = match polished {
        Some(pol) => (pol.x, pol.s, pol.y),
        None => (
            x.component_mul(&scaling.d),
            s.component_div(&scaling.e),
            -mu.component_mul(&scaling.e) / scaling.cost,
        ),
    };
    let coeffs = xu.rows(0, sub.layout.n_coeff).into_owned();
    let mut grams = Vec::with_capacity(sub.layout.gram_dims.len());
    let mut min_eig = f64::INFINITY;
    for (idx, &dim) in sub.layout.gram_dims.iter().enumerate() {
        let off = sub.layout.gram_offset(idx);
        let mat = svec_to_mat(&xu.as_slice()[off..off + svec_len(dim)], dim);
        if dim > 0 {
            min_eig = min_eig.min(min_eig_svec(&xu.as_slice()[off..off + svec_len(dim)], dim));
        }
        grams.push(mat);
    }
    if !min_eig.is_finite() {
        min_eig = 0.0;
    }

    let resid = &sub.a * &xu + &su - &sub.b;
    let mut eq_residual: f64 = 0.0;
    for i in 0..sub.cones.zero {
        eq_residual = eq_residual.max(resid[i].abs());
    }
    let mut ineq_slack = f64::INFINITY;
    let ax = &sub.a * &xu;
    for i in 0..sub.cones.nonneg {
        ineq_slack = ineq_slack.min(sub.b[sub.cones.zero + i] - ax[sub.cones.zero + i]);
    }
    let objective = 0.5 * xu.dot(&(&sub.quad * &xu)) + sub.lin.dot(&xu);

    SolveResult {
        status,
        coeffs,
        grams,
        x: xu,
        slack: su,
        dual: yu,
        objective,
        eq_residual,
        min_psd_eig: min_eig,
        ineq_slack,
        primal_residual: final_rp,
        dual_residual: final_rd,
        iterations,
        wall_time: start.elapsed(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn settings() -> SolverSettings {
        SolverSettings::default()
    }

    #[test]
    fn svec_round_trip_preserves_inner_products() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.5, 1.0, 3.0, -1.0, 0.5, -1.0, 4.0]);
        let b = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 2.0, 0.0, 5.0, 1.5, 2.0, 1.5, -2.0]);
        let sa = mat_to_svec(&a);
        let sb = mat_to_svec(&b);
        assert_abs_diff_eq!(sa.dot(&sb), (&a * &b).trace(), epsilon = 1e-12);
        let back = svec_to_mat(mat_to_svec(&b).as_slice(), 3);
        assert_abs_diff_eq!((back - b).abs().max(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn projection_clamps_negative_eigenvalues() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let mut w = mat_to_svec(&m);
        let cones = ConeSpec {
            zero: 0,
            nonneg: 0,
            psd: vec![2],
        };
        project_cone(&mut w, &cones);
        let proj = svec_to_mat(w.as_slice(), 2);
        // eigenvalues of [[0,1],[1,0]] are +-1; projection keeps the +1 part
        let expect = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        assert_abs_diff_eq!((proj - expect).abs().max(), 0.0, epsilon = 1e-12);
    }

    /// Strictly convex objective, unused PSD block, no coupling: x = 0.
    #[test]
    fn unconstrained_minimum_at_origin() {
        let n_c = 2;
        let layout = VariableLayout {
            n_coeff: n_c,
            gram_dims: vec![2],
        };
        let n = layout.total();
        let mut quad = DMatrix::zeros(n, n);
        quad[(0, 0)] = 2.0;
        quad[(1, 1)] = 0.5;
        let cones = ConeSpec {
            zero: 0,
            nonneg: 0,
            psd: vec![2],
        };
        let m = cones.rows();
        let mut a = DMatrix::zeros(m, n);
        for i in 0..svec_len(2) {
            a[(i, n_c + i)] = -1.0;
        }
        let sub = ConicSubproblem {
            quad,
            lin: DVector::zeros(n),
            a,
            b: DVector::zeros(m),
            cones,
            layout,
        };
        let res = solve(&sub, &settings(), None);
        assert_eq!(res.status, SolveStatus::Optimal);
        assert!(res.coeffs.amax() <= 1e-8, "coeffs {:?}", res.coeffs);
        assert!(res.objective.abs() <= 1e-12);
        assert!(res.min_psd_eig >= -1e-8);
    }

    /// min 1/2 ||x||^2 s.t. x1 + x2 = 2 has solution (1, 1).
    #[test]
    fn equality_constrained_qp() {
        let layout = VariableLayout {
            n_coeff: 2,
            gram_dims: vec![],
        };
        let cones = ConeSpec {
            zero: 1,
            nonneg: 0,
            psd: vec![],
        };
        let sub = ConicSubproblem {
            quad: DMatrix::identity(2, 2),
            lin: DVector::zeros(2),
            a: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            b: DVector::from_vec(vec![2.0]),
            cones,
            layout,
        };
        let res = solve(&sub, &settings(), None);
        assert_eq!(res.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(res.coeffs[0], 1.0, epsilon = 1e-7);
        assert_abs_diff_eq!(res.coeffs[1], 1.0, epsilon = 1e-7);
        assert!(res.eq_residual <= 1e-8);
        // KKT stationarity with the returned dual
        let grad = &sub.quad * &res.x + &sub.lin + sub.a.transpose() * &res.dual;
        assert!(grad.amax() <= 1e-6 * (1.0 + (&sub.quad * &res.x + &sub.lin).amax()));
    }

    /// min 1/2 (x - 3)^2 s.t. x <= 1 lands on the bound.
    #[test]
    fn active_inequality() {
        let layout = VariableLayout {
            n_coeff: 1,
            gram_dims: vec![],
        };
        let cones = ConeSpec {
            zero: 0,
            nonneg: 1,
            psd: vec![],
        };
        let sub = ConicSubproblem {
            quad: DMatrix::identity(1, 1),
            lin: DVector::from_vec(vec![-3.0]),
            a: DMatrix::from_row_slice(1, 1, &[1.0]),
            b: DVector::from_vec(vec![1.0]),
            cones,
            layout,
        };
        let res = solve(&sub, &settings(), None);
        assert_eq!(res.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(res.coeffs[0], 1.0, epsilon = 1e-7);
        assert!(res.ineq_slack >= -1e-8);
        // dual of the active row is positive
        assert!(res.dual[0] > 1.0);
    }

    /// min t s.t. [[t, 1], [1, t]] psd has optimum t = 1.
    #[test]
    fn small_sdp() {
        let layout = VariableLayout {
            n_coeff: 1,
            gram_dims: vec![2],
        };
        let n = layout.total();
        let cones = ConeSpec {
            zero: 3,
            nonneg: 0,
            psd: vec![2],
        };
        let m = cones.rows();
        let mut a = DMatrix::zeros(m, n);
        let mut b = DVector::zeros(m);
        // svec order: (0,0), (0,1), (1,1) at offsets 1, 2, 3
        a[(0, 1)] = 1.0;
        a[(0, 0)] = -1.0; // Q11 - t = 0
        a[(1, 2)] = 1.0;
        b[1] = std::f64::consts::SQRT_2; // sqrt2 * Q12 = sqrt2
        a[(2, 3)] = 1.0;
        a[(2, 0)] = -1.0; // Q22 - t = 0
        for i in 0..svec_len(2) {
            a[(3 + i, 1 + i)] = -1.0;
        }
        let mut lin = DVector::zeros(n);
        lin[0] = 1.0;
        let sub = ConicSubproblem {
            quad: DMatrix::zeros(n, n),
            lin,
            a,
            b,
            cones,
            layout,
        };
        let res = solve(&sub, &settings(), None);
        assert_eq!(res.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(res.coeffs[0], 1.0, epsilon = 1e-6);
        assert!(res.min_psd_eig >= -1e-8);
    }

    /// x <= -1 and -x <= -1 cannot both hold.
    #[test]
    fn detects_infeasible_inequalities() {
        let layout = VariableLayout {
            n_coeff: 1,
            gram_dims: vec![],
        };
        let cones = ConeSpec {
            zero: 0,
            nonneg: 2,
            psd: vec![],
        };
        let sub = ConicSubproblem {
            quad: DMatrix::identity(1, 1),
            lin: DVector::zeros(1),
            a: DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            b: DVector::from_vec(vec![-1.0, -1.0]),
            cones,
            layout,
        };
        let res = solve(&sub, &settings(), None);
        assert_eq!(res.status, SolveStatus::Infeasible);
    }

    /// Contradictory equalities are also certified.
    #[test]
    fn detects_infeasible_equalities() {
        let layout = VariableLayout {
            n_coeff: 1,
            gram_dims: vec![],
        };
        let cones = ConeSpec {
            zero: 2,
            nonneg: 0,
            psd: vec![],
        };
        let sub = ConicSubproblem {
            quad: DMatrix::zeros(1, 1),
            lin: DVector::zeros(1),
            a: DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            b: DVector::from_vec(vec![0.0, 1.0]),
            cones,
            layout,
        };
        let res = solve(&sub, &settings(), None);
        assert_eq!(res.status, SolveStatus::Infeasible);
    }

    #[test]
    fn determinism_and_idempotent_resolve() {
        let layout = VariableLayout {
            n_coeff: 2,
            gram_dims: vec![],
        };
        let cones = ConeSpec {
            zero: 1,
            nonneg: 1,
            psd: vec![],
        };
        let sub = ConicSubproblem {
            quad: DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
            lin: DVector::from_vec(vec![-1.0, 0.7]),
            a: DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 0.5, 1.0]),
            b: DVector::from_vec(vec![0.25, 2.0]),
            cones,
            layout,
        };
        let r1 = solve(&sub, &settings(), None);
        let r2 = solve(&sub, &settings(), None);
        assert_eq!(r1.status, SolveStatus::Optimal);
        assert_eq!(r1.x, r2.x);
        assert_eq!(r1.iterations, r2.iterations);
        // warm resolve from the optimum reproduces the objective
        let r3 = solve(&sub, &settings(), Some(&r1.coeffs));
        assert!((r3.objective - r1.objective).abs() <= 1e-9);
    }

    /// Same QP at wildly different data scales still converges tightly.
    #[test]
    fn scaling_invariance() {
        let layout = VariableLayout {
            n_coeff: 2,
            gram_dims: vec![],
        };
        let cones = ConeSpec {
            zero: 1,
            nonneg: 0,
            psd: vec![],
        };
        let sub = ConicSubproblem {
            quad: DMatrix::from_diagonal(&DVector::from_vec(vec![4e6, 2e-3])),
            lin: DVector::from_vec(vec![-4e6, 0.0]),
            a: DMatrix::from_row_slice(1, 2, &[1e4, 1e-2]),
            b: DVector::from_vec(vec![1e4]),
            cones,
            layout,
        };
        let res = solve(&sub, &settings(), None);
        assert_eq!(res.status, SolveStatus::Optimal);
        // solution: minimize (x1-1)^2 * 2e6 + 1e-3 x2^2 over 1e4 x1 + 1e-2 x2 = 1e4
        // x1 ~ 1, x2 ~ 0
        assert_abs_diff_eq!(res.coeffs[0], 1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(res.coeffs[1], 0.0, epsilon = 1e-2);
    }
}
