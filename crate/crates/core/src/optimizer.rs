//! The two-layer optimization loop.
//!
//! Outer layer: Dinkelbach's method for the fractional objective
//! `variance / energy`. Given the current efficiency parameter `xi`, the
//! inner layer seeks spectral coefficients minimizing the Galerkin
//! residual norm `||f(c)||` subject to the kinematic constraints, by
//! successive convex approximation: at each iterate the residual is
//! linearized (Gauss-Newton) and the variance floor gets its affine
//! minorant, producing a convex conic subproblem. After the inner loop
//! converges, `xi` is refreshed as the quadrature variance/energy ratio of
//! the reconstructed profile and the outer loop repeats until `xi`
//! stabilizes.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::config::ProblemConfig;
use crate::conic::{self, ConeSpec, ConicSubproblem, SolveStatus, VariableLayout};
use crate::functionals;
use crate::sos::{self, ChebyshevMap, SosConstraintSet};
use crate::spectral::{self, ResidualContext, SpectralBasis, SpectralProfile};
use crate::util::fmt_sig;

/// One outer (Dinkelbach) iteration of the trace.
#[derive(Debug, Clone)]
pub struct OuterRecord {
    /// Parameter value used by this iteration's subproblems.
    pub xi: f64,
    /// Quadrature variance of the profile produced by the inner loop.
    pub variance: f64,
    /// Quadrature energy of that profile.
    pub energy: f64,
    pub inner_iters: usize,
    pub inner_step_norm: f64,
    pub statuses: Vec<SolveStatus>,
}

/// Full record of the outer loop.
#[derive(Debug, Clone, Default)]
pub struct DinkelbachTrace {
    pub outer: Vec<OuterRecord>,
}

impl DinkelbachTrace {
    /// The converged efficiency: variance/energy of the last iterate.
    pub fn final_ee(&self) -> Option<f64> {
        self.outer.last().map(|r| r.variance / r.energy)
    }

    /// CSV serialization: `iter,xi,variance,energy,inner_iters,inner_step_norm`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,xi,variance,energy,inner_iters,inner_step_norm\n");
        for (i, r) in self.outer.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                i,
                fmt_sig(r.xi, 9),
                fmt_sig(r.variance, 9),
                fmt_sig(r.energy, 9),
                r.inner_iters,
                fmt_sig(r.inner_step_norm, 9)
            ));
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error("infeasible subproblem: {detail}")]
    Infeasible {
        detail: String,
        trace: DinkelbachTrace,
    },
    #[error("conic solver failed: {detail}")]
    SolverStall {
        detail: String,
        trace: DinkelbachTrace,
    },
    #[error("Dinkelbach loop did not converge within {max_outer} iterations")]
    NonConvergence {
        max_outer: usize,
        trace: DinkelbachTrace,
    },
    #[error(transparent)]
    Invalid(#[from] crate::error::Error),
}

/// Result of a converged optimization run.
#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    pub profile: SpectralProfile,
    pub trace: DinkelbachTrace,
    /// Final sensing EE (the converged `xi`).
    pub ee: f64,
}

/// Initialization: a pure fundamental mode filling the track at the
/// allowed speed, `c1 = min(V_max, L/T) sqrt(T/2)`, with `xi` seeded from
/// that profile's closed-form variance/energy ratio.
pub fn initialize(cfg: &ProblemConfig, basis: &SpectralBasis) -> (DVector<f64>, f64) {
    let c1 = cfg.v_max.min(cfg.track_length / cfg.interval) * (cfg.interval / 2.0).sqrt();
    let mut c = DVector::zeros(cfg.modes);
    c[0] = c1;
    let variance = basis.lambda[0] * c1 * c1;
    let energy = cfg.alpha1 * c1 * c1 + cfg.alpha2 * c1 * c1 * c1 * basis.tensor_at(0, 0, 0);
    (c, variance / energy)
}

/// Precomputed constraint structure shared by every SCA subproblem.
pub struct ScaAssembler {
    basis: Arc<SpectralBasis>,
    lower: SosConstraintSet,
    upper: SosConstraintSet,
    layout: VariableLayout,
    cones: ConeSpec,
    /// Constraint rows that do not depend on the linearization point.
    a_template: DMatrix<f64>,
    b_template: DVector<f64>,
    qos_row: usize,
    qos_floor: f64,
}

impl ScaAssembler {
    pub fn new(cfg: &ProblemConfig, basis: Arc<SpectralBasis>, map: &ChebyshevMap) -> Self {
        let n = cfg.modes;
        let lower = sos::assemble_lower_constraints(map);
        let upper = sos::assemble_upper_constraints(map);
        let gram_dims = vec![
            lower.matching.dim1,
            lower.matching.dim2,
            upper.matching.dim1,
            upper.matching.dim2,
        ];
        let layout = VariableLayout {
            n_coeff: n,
            gram_dims: gram_dims.clone(),
        };
        let zero = (lower.matching.degree + 1) + (upper.matching.degree + 1);
        let cones = ConeSpec {
            zero,
            nonneg: 2,
            psd: gram_dims,
        };
        let nvars = layout.total();
        let rows = cones.rows();
        let mut a = DMatrix::zeros(rows, nvars);
        let mut b = DVector::zeros(rows);

        // coefficient-map rows tying c to the Gram pairs
        let mut row = 0;
        for (set, blocks) in [(&lower, (0usize, 1usize)), (&upper, (2, 3))] {
            let off1 = layout.gram_offset(blocks.0);
            let off2 = layout.gram_offset(blocks.1);
            for k in 0..=set.matching.degree {
                for j in 0..n {
                    a[(row, j)] = set.coeff_map[(k, j)];
                }
                for cc in 0..conic::svec_len(set.matching.dim1) {
                    a[(row, off1 + cc)] = -set.matching.e1[(k, cc)];
                }
                for cc in 0..conic::svec_len(set.matching.dim2) {
                    a[(row, off2 + cc)] = -set.matching.e2[(k, cc)];
                }
                b[row] = -set.bias[k];
                row += 1;
            }
        }
        debug_assert_eq!(row, zero);

        // distance: beta' c <= L
        for j in 0..n {
            a[(row, j)] = basis.beta[j];
        }
        b[row] = cfg.track_length;
        row += 1;

        // QoS minorant row is rewritten at every linearization point
        let qos_row = row;
        row += 1;

        // PSD selector rows
        for (bi, &dim) in layout.gram_dims.iter().enumerate() {
            let off = layout.gram_offset(bi);
            for cc in 0..conic::svec_len(dim) {
                a[(row + cc, off + cc)] = -1.0;
            }
            row += conic::svec_len(dim);
        }
        debug_assert_eq!(row, rows);

        Self {
            basis,
            lower,
            upper,
            layout,
            cones,
            a_template: a,
            b_template: b,
            qos_row,
            qos_floor: cfg.qos_floor(),
        }
    }

    /// Assemble the Gauss-Newton subproblem at linearization point `ck`.
    pub fn subproblem(
        &self,
        ck: &DVector<f64>,
        ctx: &ResidualContext,
    ) -> Result<ConicSubproblem, crate::error::Error> {
        let n = self.layout.n_coeff;
        let f = spectral::residual(ck, ctx)?;
        let jac = spectral::jacobian(ck, ctx)?;

        let nvars = self.layout.total();
        let mut quad = DMatrix::zeros(nvars, nvars);
        quad.view_mut((0, 0), (n, n))
            .copy_from(&(jac.transpose() * &jac));
        let r0 = &f - &jac * ck;
        let mut lin = DVector::zeros(nvars);
        lin.rows_mut(0, n).copy_from(&(jac.transpose() * r0));

        let mut a = self.a_template.clone();
        let mut b = self.b_template.clone();
        // affine minorant of c' Lambda c >= floor at ck:
        // 2 (Lambda ck)' c - ck' Lambda ck >= floor
        let lam_ck = DVector::from_fn(n, |i, _| self.basis.lambda[i] * ck[i]);
        for j in 0..n {
            a[(self.qos_row, j)] = -2.0 * lam_ck[j];
        }
        b[self.qos_row] = -(self.qos_floor + ck.dot(&lam_ck));

        let mut sub = ConicSubproblem {
            quad,
            lin,
            a,
            b,
            cones: self.cones.clone(),
            layout: self.layout.clone(),
        };
        sub.normalize_rows();
        Ok(sub)
    }

    pub fn lower_set(&self) -> &SosConstraintSet {
        &self.lower
    }

    pub fn upper_set(&self) -> &SosConstraintSet {
        &self.upper
    }
}

/// Outcome of one inner SCA loop.
#[derive(Debug, Clone)]
pub struct InnerOutcome {
    pub coeffs: DVector<f64>,
    pub iterations: usize,
    pub last_step_norm: f64,
    pub statuses: Vec<SolveStatus>,
}

enum InnerError {
    Infeasible(String),
    Stall(String),
}

fn sca_inner_impl(
    c_start: &DVector<f64>,
    xi: f64,
    cfg: &ProblemConfig,
    assembler: &ScaAssembler,
) -> Result<InnerOutcome, InnerError> {
    let ctx = ResidualContext::new(assembler.basis.clone(), xi, cfg.alpha1, cfg.alpha2);
    let mut c = c_start.clone();
    let mut statuses = Vec::new();
    let mut step = f64::INFINITY;
    let mut iters = 0;
    for _ in 0..cfg.max_inner {
        let sub = assembler
            .subproblem(&c, &ctx)
            .map_err(|e| InnerError::Stall(e.to_string()))?;
        let res = conic::solve(&sub, &cfg.solver, Some(&c));
        statuses.push(res.status);
        match res.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible => {
                return Err(InnerError::Infeasible(format!(
                    "subproblem at xi = {xi:.6e} (variance floor {} vs kinematic limits)",
                    assembler.qos_floor
                )));
            }
            SolveStatus::IterationLimit | SolveStatus::NumericalFailure => {
                return Err(InnerError::Stall(format!(
                    "subproblem at xi = {xi:.6e} returned {} (primal residual {:.2e})",
                    res.status, res.primal_residual
                )));
            }
        }
        step = (&res.coeffs - &c).norm();
        c = res.coeffs;
        iters += 1;
        if step <= cfg.eps_in {
            break;
        }
    }
    Ok(InnerOutcome {
        coeffs: c,
        iterations: iters,
        last_step_norm: step,
        statuses,
    })
}

/// Run the inner SCA loop at a fixed `xi`, starting from `c_start`.
pub fn sca_inner(
    c_start: &DVector<f64>,
    xi: f64,
    cfg: &ProblemConfig,
    assembler: &ScaAssembler,
) -> Result<InnerOutcome, OptimizeError> {
    sca_inner_impl(c_start, xi, cfg, assembler).map_err(|e| match e {
        InnerError::Infeasible(detail) => OptimizeError::Infeasible {
            detail,
            trace: DinkelbachTrace::default(),
        },
        InnerError::Stall(detail) => OptimizeError::SolverStall {
            detail,
            trace: DinkelbachTrace::default(),
        },
    })
}

/// Full two-layer optimization at the given configuration.
pub fn optimize(cfg: &ProblemConfig) -> Result<OptimizeOutcome, OptimizeError> {
    cfg.validate()?;
    let basis = Arc::new(SpectralBasis::build(cfg.modes, cfg.interval));
    let map = sos::build_chebyshev_map(cfg.modes, cfg.interval, cfg.v_max);
    let assembler = ScaAssembler::new(cfg, basis.clone(), &map);
    let grid = functionals::uniform_grid(cfg.interval, cfg.quad_points);

    let (mut c_hat, mut xi) = initialize(cfg, &basis);
    let mut trace = DinkelbachTrace::default();

    for _ in 0..cfg.max_outer {
        let inner = match sca_inner_impl(&c_hat, xi, cfg, &assembler) {
            Ok(out) => out,
            Err(InnerError::Infeasible(detail)) => {
                return Err(OptimizeError::Infeasible { detail, trace });
            }
            Err(InnerError::Stall(detail)) => {
                return Err(OptimizeError::SolverStall { detail, trace });
            }
        };
        c_hat = inner.coeffs.clone();

        // refresh xi from the reconstructed profile by quadrature
        let profile = SpectralProfile::new(c_hat.clone(), basis.clone())
            .expect("assembler preserves dimensions");
        let sampled = profile.evaluate(&grid);
        let traj = functionals::integrate_trajectory(&sampled).expect("uniform grid");
        let variance = functionals::variance_direct(&traj);
        let energy = functionals::energy(&sampled, cfg, true);
        trace.outer.push(OuterRecord {
            xi,
            variance,
            energy,
            inner_iters: inner.iterations,
            inner_step_norm: inner.last_step_norm,
            statuses: inner.statuses,
        });
        if !(energy > 0.0) {
            return Err(OptimizeError::SolverStall {
                detail: "inner loop collapsed to the zero profile".into(),
                trace,
            });
        }
        let xi_next = variance / energy;
        let done = (xi_next - xi).abs() <= cfg.eps_out;
        xi = xi_next;
        if done {
            return Ok(OptimizeOutcome {
                profile,
                trace,
                ee: xi,
            });
        }
    }
    Err(OptimizeError::NonConvergence {
        max_outer: cfg.max_outer,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use std::f64::consts::PI;

    fn small_cfg() -> ProblemConfig {
        let mut cfg = ProblemConfig::default();
        cfg.modes = 5;
        cfg
    }

    fn assembler_for(cfg: &ProblemConfig) -> (Arc<SpectralBasis>, ScaAssembler) {
        let basis = Arc::new(SpectralBasis::build(cfg.modes, cfg.interval));
        let map = sos::build_chebyshev_map(cfg.modes, cfg.interval, cfg.v_max);
        let asm = ScaAssembler::new(cfg, basis.clone(), &map);
        (basis, asm)
    }

    #[test]
    fn initialization_examples() {
        let cfg = ProblemConfig::default();
        let basis = SpectralBasis::build(cfg.modes, cfg.interval);
        let (c0, xi0) = initialize(&cfg, &basis);
        assert_abs_diff_eq!(c0[0], 4.0 * (0.5f64).sqrt(), epsilon = 1e-12);
        assert!(c0.rows(1, cfg.modes - 1).amax() == 0.0);
        // variance of the init vector
        assert_abs_diff_eq!(basis.lambda[0] * c0[0] * c0[0], 8.0 / (PI * PI), epsilon = 1e-9);
        assert!(xi0 > 0.0);

        let mut slow = cfg.clone();
        slow.v_max = 2.0;
        let (c0, _) = initialize(&slow, &basis);
        assert_abs_diff_eq!(c0[0], 2.0 * (0.5f64).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn inner_loop_single_solve_when_tolerance_infinite() {
        let mut cfg = small_cfg();
        cfg.eps_in = f64::INFINITY;
        let (basis, asm) = assembler_for(&cfg);
        let (c0, xi0) = initialize(&cfg, &basis);
        let out = sca_inner(&c0, xi0, &cfg, &asm).unwrap();
        assert_eq!(out.iterations, 1);
        assert_eq!(out.statuses.len(), 1);
    }

    #[test]
    fn linear_regime_keeps_only_the_fundamental() {
        // alpha2 = 0 and xi = lambda1/alpha1: residual minimization leaves
        // higher modes at zero
        let mut cfg = small_cfg();
        cfg.alpha2 = 0.0;
        let (basis, asm) = assembler_for(&cfg);
        let (c0, _) = initialize(&cfg, &basis);
        let xi = basis.lambda[0] / cfg.alpha1;
        let out = sca_inner(&c0, xi, &cfg, &asm).unwrap();
        let c = out.coeffs;
        assert!(c[0] > 0.1);
        for i in 1..cfg.modes {
            assert!(
                c[i].abs() <= 1e-6 * c[0].abs(),
                "mode {i} leaked: {} vs c1 {}",
                c[i],
                c[0]
            );
        }
    }

    #[test]
    fn optimize_small_converges_to_variance_floor() {
        let mut cfg = small_cfg();
        cfg.quad_points = 2001;
        let out = optimize(&cfg).unwrap();
        // the efficiency-optimal profile rides the variance floor
        let var = out.profile.variance();
        assert_relative_eq!(var, cfg.qos_floor(), max_relative = 1e-4);
        // self-consistency of the returned EE with the last trace row
        let last = out.trace.outer.last().unwrap();
        assert_relative_eq!(out.ee, last.variance / last.energy, max_relative = 1e-12);
        // xi steps met the tolerance
        let n = out.trace.outer.len();
        assert!(n >= 1);
        if n >= 2 {
            let prev = &out.trace.outer[n - 1];
            assert!((prev.variance / prev.energy - prev.xi).abs() <= cfg.eps_out);
        }
        // trace serialization
        let csv = out.trace.to_csv();
        assert!(csv.starts_with("iter,xi,variance,energy,inner_iters,inner_step_norm\n"));
        assert_eq!(csv.lines().count(), n + 1);
    }

    #[test]
    fn every_outer_iterate_is_kinematically_feasible() {
        let mut cfg = small_cfg();
        cfg.quad_points = 2001;
        let out = optimize(&cfg).unwrap();
        let grid = functionals::uniform_grid(cfg.interval, 4001);
        let sampled = out.profile.evaluate(&grid);
        for &v in &sampled.v {
            assert!(v >= -1e-6 && v <= cfg.v_max + 1e-6);
        }
        let traj = functionals::integrate_trajectory(&sampled).unwrap();
        assert!(traj.x.last().unwrap() <= &(cfg.track_length + 1e-6));
        assert!(out.profile.variance() >= cfg.qos_floor() - 1e-6);
    }

    #[test]
    fn impossible_variance_floor_reports_infeasible() {
        // eta = 1 demands the theoretical variance maximum L^2/4, which the
        // distance limit makes unreachable
        let mut cfg = small_cfg();
        cfg.eta = 1.0;
        match optimize(&cfg) {
            Err(OptimizeError::Infeasible { .. }) => {}
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn deterministic_traces() {
        let mut cfg = small_cfg();
        cfg.quad_points = 1001;
        let a = optimize(&cfg).unwrap();
        let b = optimize(&cfg).unwrap();
        assert_eq!(a.trace.to_csv(), b.trace.to_csv());
        assert_eq!(a.profile.coeffs, b.profile.coeffs);
    }
}
