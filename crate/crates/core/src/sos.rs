//! Exact algebraic encoding of the velocity bounds `0 <= v(t) <= V_max`.
//!
//! With `x = cos(pi t / T)` the trial profile factors as
//! `v(x) = sqrt(2/T) sqrt(1-x^2) P(x)` where `P` collects Chebyshev-U
//! terms, `P(x) = sum_n c_n U_{n-1}(x)`. Nonnegativity of `v` is exactly
//! nonnegativity of `P` on `[-1, 1]`, which the Markov-Lukacs theorem
//! characterizes through a pair of sum-of-squares multipliers, i.e. a pair
//! of PSD Gram matrices tied to the polynomial coefficients by linear
//! equalities. The speed limit uses the same machinery on
//! `G(x) = sqrt(T/2) V_max - (1 - x^2/2) P(x)`, a polynomial sufficient
//! condition obtained from `sqrt(1-x^2) <= 1 - x^2/2`.
//!
//! The monomial coefficient extracted from a Gram quadratic form weights
//! diagonal entries once and off-diagonal pairs twice, so that
//! [`gram_coefficient`] agrees exactly with expanding `z(x)' Q z(x)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::config::ProblemConfig;
use crate::conic::{
    self, svec_len, ConeSpec, ConicSubproblem, SolveResult, SolveStatus, VariableLayout,
};
use crate::error::Error;
use crate::spectral::SpectralBasis;
use crate::util::{binomial, fmt_sig};

/// Coefficients `p_0 .. p_D` of a univariate polynomial in the monomial
/// basis on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyCoeffs(pub DVector<f64>);

impl PolyCoeffs {
    pub fn degree(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    /// Horner evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }
}

/// Linear maps from spectral coefficients to polynomial coefficients:
/// `p = M c` and `g = F M c + b`.
#[derive(Debug, Clone)]
pub struct ChebyshevMap {
    pub n_modes: usize,
    pub interval: f64,
    pub v_max: f64,
    /// Chebyshev-U to monomial conversion, `N x N`.
    pub m: DMatrix<f64>,
    /// Degree-raising map for `G`, `(N+2) x N`.
    pub f: DMatrix<f64>,
    /// Bias of `g`; only the constant entry is nonzero.
    pub bias: DVector<f64>,
    /// Cached product `F * M`.
    pub fm: DMatrix<f64>,
}

/// Build the conversion maps for `n_modes` modes on `[0, interval]` with
/// speed limit `v_max`.
pub fn build_chebyshev_map(n_modes: usize, interval: f64, v_max: f64) -> ChebyshevMap {
    assert!(n_modes >= 1);
    let mut m = DMatrix::zeros(n_modes, n_modes);
    for n in 1..=n_modes {
        // U_{n-1}(x) = sum_j (-1)^j C(n-1-j, j) (2x)^{n-1-2j}
        for k in (0..n).rev() {
            if (n - 1 - k) % 2 != 0 {
                continue;
            }
            let j = (n - 1 - k) / 2;
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            m[(k, n - 1)] = sign * binomial((n - 1 + k) / 2, (n - 1 - k) / 2) * 2f64.powi(k as i32);
        }
    }
    let mut f = DMatrix::zeros(n_modes + 2, n_modes);
    for j in 0..n_modes {
        f[(j + 2, j)] += 0.5;
        f[(j, j)] -= 1.0;
    }
    let mut bias = DVector::zeros(n_modes + 2);
    bias[0] = (interval / 2.0).sqrt() * v_max;
    let fm = &f * &m;
    ChebyshevMap {
        n_modes,
        interval,
        v_max,
        m,
        f,
        bias,
        fm,
    }
}

/// Coefficient of `x^k` in `z(x)' Q z(x)` with `z = (1, x, .., x^{d-1})`:
/// diagonal entries weighted once, off-diagonal pairs twice. Negative `k`
/// returns 0 (convenience for the shifted matchings); `k` beyond the
/// polynomial degree is an error.
pub fn gram_coefficient(q: &DMatrix<f64>, k: i64) -> Result<f64, Error> {
    let d = q.nrows();
    if k < 0 {
        return Ok(0.0);
    }
    let k = k as usize;
    if d == 0 || k > 2 * (d - 1) {
        return Err(Error::GramIndex {
            power: k as i64,
            dim: d,
        });
    }
    let mut acc = 0.0;
    for i in 0..d {
        for j in i..d {
            if i + j == k {
                acc += if i == j { q[(i, j)] } else { 2.0 * q[(i, j)] };
            }
        }
    }
    Ok(acc)
}

/// Which Markov-Lukacs decomposition applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LukacsBranch {
    /// Even degree: `P = s1 + (1 - x^2) s2`.
    EvenDegree,
    /// Odd degree: `P = (1 + x) s1 + (1 - x) s2`.
    OddDegree,
}

/// The linear functionals tying a polynomial's monomial coefficients to a
/// pair of Gram matrices: `poly_k = e1[k] . svec(Q1) + e2[k] . svec(Q2)`.
#[derive(Debug, Clone)]
pub struct GramMatching {
    pub degree: usize,
    pub branch: LukacsBranch,
    pub dim1: usize,
    pub dim2: usize,
    pub e1: DMatrix<f64>,
    pub e2: DMatrix<f64>,
}

/// Extraction rows in svec coordinates: `H[k] . svec(Q)` is the `x^k`
/// coefficient of `z' Q z`.
fn h_rows(dim: usize) -> DMatrix<f64> {
    if dim == 0 {
        return DMatrix::zeros(0, 0);
    }
    let rows = 2 * (dim - 1) + 1;
    let mut h = DMatrix::zeros(rows, svec_len(dim));
    for j in 0..dim {
        for i in 0..=j {
            let k = i + j;
            let w = if i == j { 1.0 } else { std::f64::consts::SQRT_2 };
            h[(k, conic::svec_index(i, j))] = w;
        }
    }
    h
}

/// Build the Markov-Lukacs matching for a polynomial of the given degree.
pub fn lukacs_matching(degree: usize) -> GramMatching {
    if degree % 2 == 0 {
        // P = s1 + (1-x^2) s2, deg s1 <= D, deg s2 <= D-2
        let dim1 = degree / 2 + 1;
        let dim2 = if degree >= 2 { degree / 2 } else { 0 };
        let h1 = h_rows(dim1);
        let h2 = h_rows(dim2);
        let mut e1 = DMatrix::zeros(degree + 1, svec_len(dim1));
        let mut e2 = DMatrix::zeros(degree + 1, svec_len(dim2));
        for k in 0..=degree {
            if k < h1.nrows() {
                e1.row_mut(k).copy_from(&h1.row(k));
            }
            if dim2 > 0 {
                if k < h2.nrows() {
                    e2.row_mut(k).copy_from(&h2.row(k));
                }
                if k >= 2 && k - 2 < h2.nrows() {
                    let shifted = e2.row(k).clone_owned() - h2.row(k - 2);
                    e2.row_mut(k).copy_from(&shifted);
                }
            }
        }
        GramMatching {
            degree,
            branch: LukacsBranch::EvenDegree,
            dim1,
            dim2,
            e1,
            e2,
        }
    } else {
        // P = (1+x) s1 + (1-x) s2, deg s_i <= D-1
        let dim = (degree + 1) / 2;
        let h = h_rows(dim);
        let mut e1 = DMatrix::zeros(degree + 1, svec_len(dim));
        let mut e2 = DMatrix::zeros(degree + 1, svec_len(dim));
        for k in 0..=degree {
            if k < h.nrows() {
                e1.row_mut(k).copy_from(&h.row(k));
                e2.row_mut(k).copy_from(&h.row(k));
            }
            if k >= 1 && k - 1 < h.nrows() {
                let plus = e1.row(k).clone_owned() + h.row(k - 1);
                e1.row_mut(k).copy_from(&plus);
                let minus = e2.row(k).clone_owned() - h.row(k - 1);
                e2.row_mut(k).copy_from(&minus);
            }
        }
        GramMatching {
            degree,
            branch: LukacsBranch::OddDegree,
            dim1: dim,
            dim2: dim,
            e1,
            e2,
        }
    }
}

impl GramMatching {
    /// Reassemble the polynomial coefficients from a Gram pair.
    pub fn reconstruct(&self, q1: &DMatrix<f64>, q2: &DMatrix<f64>) -> DVector<f64> {
        let s1 = if self.dim1 > 0 {
            conic::mat_to_svec(q1)
        } else {
            DVector::zeros(0)
        };
        let s2 = if self.dim2 > 0 {
            conic::mat_to_svec(q2)
        } else {
            DVector::zeros(0)
        };
        &self.e1 * s1 + &self.e2 * s2
    }
}

/// Constraint set tying the spectral coefficients to a Gram pair:
/// `coeff_map * c + bias = e1 . svec(Q1) + e2 . svec(Q2)` row by row.
#[derive(Debug, Clone)]
pub struct SosConstraintSet {
    pub matching: GramMatching,
    pub coeff_map: DMatrix<f64>,
    pub bias: DVector<f64>,
}

/// Lower-bound constraints: `P >= 0` on `[-1,1]` with `p = M c`.
pub fn assemble_lower_constraints(map: &ChebyshevMap) -> SosConstraintSet {
    SosConstraintSet {
        matching: lukacs_matching(map.n_modes - 1),
        coeff_map: map.m.clone(),
        bias: DVector::zeros(map.n_modes),
    }
}

/// Upper-bound constraints: `G >= 0` on `[-1,1]` with `g = F M c + b`.
pub fn assemble_upper_constraints(map: &ChebyshevMap) -> SosConstraintSet {
    SosConstraintSet {
        matching: lukacs_matching(map.n_modes + 1),
        coeff_map: map.fm.clone(),
        bias: map.bias.clone(),
    }
}

/// Pure feasibility problem: find PSD Gram pairs reproducing the fixed
/// target polynomials. One `(matching, target)` entry per polynomial.
pub fn feasibility_subproblem(parts: &[(&GramMatching, DVector<f64>)]) -> ConicSubproblem {
    let mut gram_dims = Vec::new();
    for (mt, _) in parts {
        gram_dims.push(mt.dim1);
        gram_dims.push(mt.dim2);
    }
    let layout = VariableLayout {
        n_coeff: 0,
        gram_dims: gram_dims.clone(),
    };
    let n = layout.total();
    let zero: usize = parts.iter().map(|(mt, _)| mt.degree + 1).sum();
    let cones = ConeSpec {
        zero,
        nonneg: 0,
        psd: gram_dims,
    };
    let rows = cones.rows();
    let mut a = DMatrix::zeros(rows, n);
    let mut b = DVector::zeros(rows);
    let mut row = 0;
    for (pi, (mt, target)) in parts.iter().enumerate() {
        debug_assert_eq!(target.len(), mt.degree + 1);
        let off1 = layout.gram_offset(2 * pi);
        let off2 = layout.gram_offset(2 * pi + 1);
        for k in 0..=mt.degree {
            for c in 0..svec_len(mt.dim1) {
                a[(row, off1 + c)] = mt.e1[(k, c)];
            }
            for c in 0..svec_len(mt.dim2) {
                a[(row, off2 + c)] = mt.e2[(k, c)];
            }
            b[row] = target[k];
            row += 1;
        }
    }
    let mut prow = zero;
    for (bi, &dim) in layout.gram_dims.iter().enumerate() {
        let off = layout.gram_offset(bi);
        for c in 0..svec_len(dim) {
            a[(prow + c, off + c)] = -1.0;
        }
        prow += svec_len(dim);
    }
    let mut sub = ConicSubproblem {
        quad: DMatrix::zeros(n, n),
        lin: DVector::zeros(n),
        a,
        b,
        cones,
        layout,
    };
    sub.normalize_rows();
    sub
}

/// Gram matrices certifying `0 <= v(t) <= V_max`.
#[derive(Debug, Clone)]
pub struct SosCertificate {
    pub q1: DMatrix<f64>,
    pub q2: DMatrix<f64>,
    pub y1: DMatrix<f64>,
    pub y2: DMatrix<f64>,
    pub lower_branch: LukacsBranch,
    pub upper_branch: LukacsBranch,
}

/// Where the velocity bounds are (most) violated on a dense sample.
#[derive(Debug, Clone)]
pub struct InfeasibilityReport {
    /// Time of the most violated sample.
    pub time: f64,
    /// Velocity there.
    pub velocity: f64,
    /// Positive violation magnitude; zero when sampling shows no violation
    /// (the upper-bound relaxation is sufficient, not necessary).
    pub violation: f64,
}

#[derive(Debug, Clone)]
pub enum CertifyOutcome {
    Certified(Box<SosCertificate>),
    Infeasible(InfeasibilityReport),
    SolverFailure(Box<SolveResult>),
}

/// Try to certify `0 <= v(t) <= V_max` for the profile with coefficients
/// `c` via one combined PSD feasibility solve.
pub fn certify_profile(
    c: &DVector<f64>,
    basis: &SpectralBasis,
    cfg: &ProblemConfig,
) -> CertifyOutcome {
    assert_eq!(c.len(), basis.n_modes, "coefficients must match the basis");
    let map = build_chebyshev_map(basis.n_modes, basis.interval, cfg.v_max);
    let lower = assemble_lower_constraints(&map);
    let upper = assemble_upper_constraints(&map);
    let p = &lower.coeff_map * c + &lower.bias;
    let g = &upper.coeff_map * c + &upper.bias;
    let sub = feasibility_subproblem(&[(&lower.matching, p), (&upper.matching, g)]);
    let res = conic::solve(&sub, &cfg.solver, None);
    match res.status {
        SolveStatus::Optimal => CertifyOutcome::Certified(Box::new(SosCertificate {
            q1: res.grams[0].clone(),
            q2: res.grams[1].clone(),
            y1: res.grams[2].clone(),
            y2: res.grams[3].clone(),
            lower_branch: lower.matching.branch,
            upper_branch: upper.matching.branch,
        })),
        SolveStatus::Infeasible => {
            CertifyOutcome::Infeasible(worst_violation(c, basis, cfg.v_max, 4001))
        }
        _ => CertifyOutcome::SolverFailure(Box::new(res)),
    }
}

/// Scan a dense sample of the profile for the worst bound violation.
fn worst_violation(
    c: &DVector<f64>,
    basis: &SpectralBasis,
    v_max: f64,
    samples: usize,
) -> InfeasibilityReport {
    let mut worst = InfeasibilityReport {
        time: 0.0,
        velocity: 0.0,
        violation: f64::NEG_INFINITY,
    };
    for i in 0..samples {
        let t = basis.interval * i as f64 / (samples - 1) as f64;
        let v: f64 = (0..basis.n_modes).map(|n| c[n] * basis.phi(n, t)).sum();
        // violation of v >= 0 is -v; of v <= v_max is v - v_max
        let viol = (-v).max(v - v_max);
        if viol > worst.violation {
            worst = InfeasibilityReport {
                time: t,
                velocity: v,
                violation: viol,
            };
        }
    }
    worst.violation = worst.violation.max(0.0);
    worst
}

/// Conservative norm-ball sufficient conditions for `|v| <= V_max`:
/// `||c||_1 <= sqrt(T/2) V_max` and `||c||_2 <= sqrt(T/(2N)) V_max`.
pub fn norm_ball_memberships(c: &DVector<f64>, cfg: &ProblemConfig) -> (bool, bool) {
    let n = c.len().max(1) as f64;
    let l1: f64 = c.iter().map(|x| x.abs()).sum();
    let l2 = c.norm();
    (
        l1 <= (cfg.interval / 2.0).sqrt() * cfg.v_max,
        l2 <= (cfg.interval / (2.0 * n)).sqrt() * cfg.v_max,
    )
}

/// Grid window for the two-mode feasible-region scan.
#[derive(Debug, Clone, Copy)]
pub struct RegionSpec {
    pub c_min: f64,
    pub c_max: f64,
    pub resolution: usize,
    /// Dense-sampling points for the ground-truth membership.
    pub truth_samples: usize,
}

impl Default for RegionSpec {
    fn default() -> Self {
        Self {
            c_min: -1.0,
            c_max: 1.0,
            resolution: 201,
            truth_samples: 2001,
        }
    }
}

/// One grid point of the feasible-region comparison.
#[derive(Debug, Clone, Copy)]
pub struct RegionRecord {
    pub c1: f64,
    pub c2: f64,
    /// SOS certificate exists for `|v| <= V_max` (relaxation on both signs).
    pub sos: bool,
    pub l1: bool,
    pub l2: bool,
    /// Dense sampling says `max |v| <= V_max`.
    pub truth: bool,
}

/// Rasterize the `N = 2` feasible region of `|v(t)| <= V_max` under four
/// different memberships: the SOS encoding applied to both `+v` and `-v`,
/// the two norm balls, and dense-sampling ground truth.
///
/// Grid points are independent feasibility solves and run in parallel.
pub fn rasterize_feasible_region(
    spec: &RegionSpec,
    cfg: &ProblemConfig,
) -> Result<Vec<RegionRecord>, Error> {
    if cfg.modes != 2 {
        return Err(Error::Config(format!(
            "feasible-region scan requires N = 2, got {}",
            cfg.modes
        )));
    }
    let map = build_chebyshev_map(2, cfg.interval, cfg.v_max);
    let upper = assemble_upper_constraints(&map);
    let res = spec.resolution;
    let step = (spec.c_max - spec.c_min) / (res - 1) as f64;
    let basis = SpectralBasis::build(2, cfg.interval);

    let records: Vec<RegionRecord> = (0..res * res)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / res, idx % res);
            let c1 = spec.c_min + step * i as f64;
            let c2 = spec.c_min + step * j as f64;
            let c = DVector::from_vec(vec![c1, c2]);

            let feas = |cv: &DVector<f64>| -> bool {
                let g = &upper.coeff_map * cv + &upper.bias;
                let sub = feasibility_subproblem(&[(&upper.matching, g)]);
                conic::solve(&sub, &cfg.solver, None).status == SolveStatus::Optimal
            };
            let sos = feas(&c) && feas(&(-&c));

            let (l1, l2) = norm_ball_memberships(&c, cfg);

            let mut peak: f64 = 0.0;
            for s in 0..spec.truth_samples {
                let t = cfg.interval * s as f64 / (spec.truth_samples - 1) as f64;
                let v = c1 * basis.phi(0, t) + c2 * basis.phi(1, t);
                peak = peak.max(v.abs());
            }
            let truth = peak <= cfg.v_max * (1.0 + 1e-12);

            RegionRecord {
                c1,
                c2,
                sos,
                l1,
                l2,
                truth,
            }
        })
        .collect();
    Ok(records)
}

/// CSV serialization of the region scan: floats at 6 significant digits,
/// booleans as 0/1.
pub fn region_csv(records: &[RegionRecord]) -> String {
    let mut out = String::from("c1,c2,sos,l1,l2,truth\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_sig(r.c1, 6),
            fmt_sig(r.c2, 6),
            r.sos as u8,
            r.l1 as u8,
            r.l2 as u8,
            r.truth as u8
        ));
    }
    out
}
