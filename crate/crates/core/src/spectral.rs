//! The sinusoidal eigensystem of the Brownian-bridge variance kernel and
//! the Galerkin residual system built on it.
//!
//! The kernel `K(t,s) = (T min(t,s) - t s)/T^2` has the Mercer expansion
//! `sum_n lambda_n phi_n(t) phi_n(s)` with
//!
//! ```text
//! lambda_n = T / (n pi)^2,   phi_n(t) = sqrt(2/T) sin(n pi t / T).
//! ```
//!
//! Expanding the velocity as `v_N(t) = sum c_n phi_n(t)` turns the
//! stationarity condition of `variance - xi * energy` into an algebraic
//! residual `f(c) = 2(Lambda - xi alpha1 I) c - 3 xi alpha2 q(c)` with the
//! mode-coupling `q_k(c) = c' T_k c` over the triple-product tensor
//! `T_nmk = int phi_n phi_m phi_k dt`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::config::ProblemConfig;
use crate::error::Error;
use crate::functionals::SampledProfile;

/// Precomputed eigenvalues, triple-product tensor, and distance vector for
/// a given truncation order and interval length.
///
/// Immutable after construction; share across threads via `Arc`.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    /// Truncation order N.
    pub n_modes: usize,
    /// Interval length T (s).
    pub interval: f64,
    /// Eigenvalues `lambda_n = T/(n pi)^2`, strictly decreasing.
    pub lambda: DVector<f64>,
    /// Dense triple-product tensor, row-major `[n][m][k]`, all 0-based.
    tensor: Vec<f64>,
    /// Distance coefficients `beta_n = int phi_n dt`; zero for even modes.
    pub beta: DVector<f64>,
}

/// `(1 - (-1)^j)/j` with the removable `j = 0` case defined as 0.
///
/// The vanishing denominators in the tensor closed form only occur at even
/// parity where the numerator also vanishes.
fn parity_quotient(j: i64) -> f64 {
    if j == 0 || j.rem_euclid(2) == 0 {
        0.0
    } else {
        2.0 / j as f64
    }
}

impl SpectralBasis {
    /// Build the basis data for `n_modes >= 1` on `[0, interval]`.
    pub fn build(n_modes: usize, interval: f64) -> Self {
        assert!(n_modes >= 1 && interval > 0.0);
        let lambda = DVector::from_fn(n_modes, |i, _| {
            interval / ((i as f64 + 1.0) * PI).powi(2)
        });
        let beta = DVector::from_fn(n_modes, |i, _| {
            let n = i as i64 + 1;
            (2.0 * interval).sqrt() * parity_quotient(n) / PI
        });

        // Product-to-sum closed form of int phi_n phi_m phi_k dt, evaluated
        // once per sorted triple so permutation symmetry holds exactly.
        let pref = 1.0 / (PI * (2.0 * interval).sqrt());
        let mut tensor = vec![0.0; n_modes * n_modes * n_modes];
        let at = |n: usize, m: usize, k: usize| (n * n_modes + m) * n_modes + k;
        for n in 1..=n_modes as i64 {
            for m in n..=n_modes as i64 {
                for k in m..=n_modes as i64 {
                    let val = pref
                        * (parity_quotient(n - m + k)
                            + parity_quotient(m - n + k)
                            + parity_quotient(n + m - k)
                            - parity_quotient(n + m + k));
                    let (i, j, l) = (n as usize - 1, m as usize - 1, k as usize - 1);
                    for (a, b, c) in [
                        (i, j, l),
                        (i, l, j),
                        (j, i, l),
                        (j, l, i),
                        (l, i, j),
                        (l, j, i),
                    ] {
                        tensor[at(a, b, c)] = val;
                    }
                }
            }
        }

        Self {
            n_modes,
            interval,
            lambda,
            tensor,
            beta,
        }
    }

    /// Eigenfunction `phi_{i+1}(t)` (0-based mode index).
    pub fn phi(&self, mode: usize, t: f64) -> f64 {
        let n = mode as f64 + 1.0;
        (2.0 / self.interval).sqrt() * (n * PI * t / self.interval).sin()
    }

    /// Tensor entry, 0-based indices.
    pub fn tensor_at(&self, n: usize, m: usize, k: usize) -> f64 {
        self.tensor[(n * self.n_modes + m) * self.n_modes + k]
    }

    /// Frontal slice `T_k` as a matrix (0-based `k`).
    pub fn tensor_slice(&self, k: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_modes, self.n_modes, |n, m| self.tensor_at(n, m, k))
    }
}

/// A velocity profile expressed by its spectral coefficients.
#[derive(Debug, Clone)]
pub struct SpectralProfile {
    pub coeffs: DVector<f64>,
    pub basis: Arc<SpectralBasis>,
}

impl SpectralProfile {
    pub fn new(coeffs: DVector<f64>, basis: Arc<SpectralBasis>) -> Result<Self, Error> {
        if coeffs.len() != basis.n_modes {
            return Err(Error::Dimension(format!(
                "{} coefficients for a basis of {} modes",
                coeffs.len(),
                basis.n_modes
            )));
        }
        Ok(Self { coeffs, basis })
    }

    /// Pointwise reconstruction `v_N(t)`; exactly zero at `t = 0` and `t = T`.
    pub fn evaluate_at(&self, t: f64) -> f64 {
        let mut v = 0.0;
        for (i, &c) in self.coeffs.iter().enumerate() {
            v += c * self.basis.phi(i, t);
        }
        v
    }

    /// Sample the reconstruction on a time grid.
    pub fn evaluate(&self, grid: &[f64]) -> SampledProfile {
        SampledProfile {
            t: grid.to_vec(),
            v: grid.iter().map(|&t| self.evaluate_at(t)).collect(),
        }
    }

    /// Spatial variance in closed form: `c' Lambda c`.
    pub fn variance(&self) -> f64 {
        self.coeffs
            .iter()
            .zip(self.basis.lambda.iter())
            .map(|(&c, &l)| c * c * l)
            .sum()
    }

    /// Mechanical energy in closed form:
    /// `alpha1 ||c||^2 + alpha2 sum c_n c_m c_k T_nmk`.
    ///
    /// The terminal kinetic term vanishes identically since `v_N(T) = 0`.
    pub fn energy(&self, cfg: &ProblemConfig) -> f64 {
        let b = &self.basis;
        let c = &self.coeffs;
        let quad: f64 = c.iter().map(|&ci| ci * ci).sum();
        let mut cubic = 0.0;
        for n in 0..b.n_modes {
            for m in 0..b.n_modes {
                for k in 0..b.n_modes {
                    cubic += c[n] * c[m] * c[k] * b.tensor_at(n, m, k);
                }
            }
        }
        cfg.alpha1 * quad + cfg.alpha2 * cubic
    }
}

/// Per-`xi` data for residual and Jacobian evaluation: the diagonal linear
/// operator `A = 2(Lambda - xi alpha1 I)` plus the drag weight.
#[derive(Debug, Clone)]
pub struct ResidualContext {
    pub xi: f64,
    pub alpha2: f64,
    /// Diagonal of `A`.
    pub a_diag: DVector<f64>,
    pub basis: Arc<SpectralBasis>,
}

impl ResidualContext {
    pub fn new(basis: Arc<SpectralBasis>, xi: f64, alpha1: f64, alpha2: f64) -> Self {
        let a_diag = basis.lambda.map(|l| 2.0 * (l - xi * alpha1));
        Self {
            xi,
            alpha2,
            a_diag,
            basis,
        }
    }
}

/// Galerkin residual `f(c) = A c - 3 xi alpha2 q(c)`, `q_k = c' T_k c`.
pub fn residual(c: &DVector<f64>, ctx: &ResidualContext) -> Result<DVector<f64>, Error> {
    let n = ctx.basis.n_modes;
    if c.len() != n {
        return Err(Error::Dimension(format!(
            "coefficient vector has {} entries, basis has {n} modes",
            c.len()
        )));
    }
    let mut f = DVector::zeros(n);
    for k in 0..n {
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                q += c[i] * c[j] * ctx.basis.tensor_at(i, j, k);
            }
        }
        f[k] = ctx.a_diag[k] * c[k] - 3.0 * ctx.xi * ctx.alpha2 * q;
    }
    Ok(f)
}

/// Analytic Jacobian `J(c) = A - 6 xi alpha2 K(c)` with
/// `K_kj = sum_n c_n T_njk`. Symmetric by the tensor's permutation symmetry.
pub fn jacobian(c: &DVector<f64>, ctx: &ResidualContext) -> Result<DMatrix<f64>, Error> {
    let n = ctx.basis.n_modes;
    if c.len() != n {
        return Err(Error::Dimension(format!(
            "coefficient vector has {} entries, basis has {n} modes",
            c.len()
        )));
    }
    let mut j = DMatrix::zeros(n, n);
    for k in 0..n {
        for jj in 0..n {
            let mut coupling = 0.0;
            for i in 0..n {
                coupling += c[i] * ctx.basis.tensor_at(i, jj, k);
            }
            j[(k, jj)] = -6.0 * ctx.xi * ctx.alpha2 * coupling;
        }
        j[(k, k)] += ctx.a_diag[k];
    }
    Ok(j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{self, uniform_grid};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn basis(n: usize) -> Arc<SpectralBasis> {
        Arc::new(SpectralBasis::build(n, 1.0))
    }

    /// Trapezoid quadrature of `int phi_n phi_m phi_k dt` on a fine grid.
    fn tensor_quadrature(b: &SpectralBasis, n: usize, m: usize, k: usize, points: usize) -> f64 {
        let grid = uniform_grid(b.interval, points);
        let y: Vec<f64> = grid
            .iter()
            .map(|&t| b.phi(n, t) * b.phi(m, t) * b.phi(k, t))
            .collect();
        functionals::trapezoid(&grid, &y)
    }

    #[test]
    fn eigenvalues_match_closed_form() {
        let b = basis(4);
        assert_abs_diff_eq!(b.lambda[0], 1.0 / (PI * PI), epsilon = 1e-15);
        assert_abs_diff_eq!(b.lambda[3], 1.0 / (16.0 * PI * PI), epsilon = 1e-15);
        for i in 1..4 {
            assert!(b.lambda[i] < b.lambda[i - 1]);
        }
    }

    #[test]
    fn tensor_reference_values() {
        let b = basis(3);
        // 2^{3/2} int_0^1 sin^3(pi t) dt = 2 sqrt(2) * 4/(3 pi)
        let expect = 16.0 / (3.0 * std::f64::consts::SQRT_2 * PI);
        assert_abs_diff_eq!(b.tensor_at(0, 0, 0), expect, epsilon = 1e-9);
        assert_abs_diff_eq!(b.tensor_at(0, 0, 0), 1.20042, epsilon = 1e-5);
        // even total parity vanishes exactly
        assert_eq!(b.tensor_at(0, 0, 1), 0.0);
        assert_eq!(b.tensor_at(1, 1, 1), 0.0);
    }

    #[test]
    fn tensor_closed_form_vs_quadrature_and_symmetry() {
        let b = basis(8);
        for n in 0..8 {
            for m in 0..8 {
                for k in 0..8 {
                    let q = tensor_quadrature(&b, n, m, k, 4001);
                    assert_abs_diff_eq!(b.tensor_at(n, m, k), q, epsilon = 1e-10);
                    // permutation symmetry
                    assert_eq!(b.tensor_at(n, m, k), b.tensor_at(m, n, k));
                    assert_eq!(b.tensor_at(n, m, k), b.tensor_at(k, m, n));
                    assert_eq!(b.tensor_at(n, m, k), b.tensor_at(n, k, m));
                    if (n + m + k) % 2 == 1 {
                        // 0-based: odd index sum means even mode sum
                        assert_eq!(b.tensor_at(n, m, k), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn beta_values() {
        let b = basis(4);
        assert_abs_diff_eq!(b.beta[0], 2.0 * std::f64::consts::SQRT_2 / PI, epsilon = 1e-15);
        assert_eq!(b.beta[1], 0.0);
        assert_eq!(b.beta[3], 0.0);
        // quadrature cross-check (odd sines carry an O(h^2) endpoint term)
        let grid = uniform_grid(1.0, 4001);
        for i in 0..4 {
            let y: Vec<f64> = grid.iter().map(|&t| b.phi(i, t)).collect();
            assert_abs_diff_eq!(b.beta[i], functionals::trapezoid(&grid, &y), epsilon = 1e-6);
        }
    }

    #[test]
    fn orthonormality_by_quadrature() {
        let b = basis(15);
        let grid = uniform_grid(1.0, 4001);
        for n in 0..15 {
            for m in 0..15 {
                let y: Vec<f64> = grid.iter().map(|&t| b.phi(n, t) * b.phi(m, t)).collect();
                let ip = functionals::trapezoid(&grid, &y);
                let expect = if n == m { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(ip, expect, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn eigenrelation_by_quadrature() {
        // int K(t,s) phi_n(s) ds = lambda_n phi_n(t), integral split at the
        // kernel kink s = t
        let b = basis(8);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for mode in 0..8 {
            for _ in 0..20 {
                let t: f64 = rng.random_range(0.01..0.99);
                let mut acc = 0.0;
                for (lo, hi) in [(0.0, t), (t, 1.0)] {
                    let pts = 2001;
                    let seg: Vec<f64> =
                        (0..pts).map(|i| lo + (hi - lo) * i as f64 / (pts - 1) as f64).collect();
                    let y: Vec<f64> = seg
                        .iter()
                        .map(|&s| functionals::bridge_kernel(t, s, 1.0) * b.phi(mode, s))
                        .collect();
                    acc += functionals::trapezoid(&seg, &y);
                }
                assert_abs_diff_eq!(acc, b.lambda[mode] * b.phi(mode, t), epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn mercer_reconstruction_sup_norm() {
        let b = SpectralBasis::build(200, 1.0);
        let grid = uniform_grid(1.0, 101);
        let mut worst: f64 = 0.0;
        for &t in &grid {
            for &s in &grid {
                let mut rec = 0.0;
                for n in 0..200 {
                    rec += b.lambda[n] * b.phi(n, t) * b.phi(n, s);
                }
                worst = worst.max((functionals::bridge_kernel(t, s, 1.0) - rec).abs());
            }
        }
        assert!(worst <= 1e-3, "sup error {worst}");
    }

    #[test]
    fn profile_evaluation_examples() {
        let b = basis(3);
        let amp = 2.0 * PI * (0.5f64).sqrt();
        let p = SpectralProfile::new(DVector::from_vec(vec![amp, 0.0, 0.0]), b.clone()).unwrap();
        assert_abs_diff_eq!(p.evaluate_at(0.5), 2.0 * PI, epsilon = 1e-12);
        assert_eq!(p.evaluate_at(0.0), 0.0);
        let e2 = SpectralProfile::new(DVector::from_vec(vec![0.0, 1.0, 0.0]), b).unwrap();
        assert_abs_diff_eq!(e2.evaluate_at(0.5), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn spectral_variance_examples() {
        let b = basis(3);
        let zero = SpectralProfile::new(DVector::zeros(3), b.clone()).unwrap();
        assert_eq!(zero.variance(), 0.0);
        let amp = 2.0 * PI * (0.5f64).sqrt();
        let p = SpectralProfile::new(DVector::from_vec(vec![amp, 0.0, 0.0]), b).unwrap();
        assert_abs_diff_eq!(p.variance(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn spectral_forms_match_quadrature_on_random_profiles() {
        let cfg = ProblemConfig::default();
        let b = basis(9);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        // the 1e-8 variance agreement needs a fine oracle grid: the
        // trapezoid/cumtrapz error is O(h^2), about 6e-6 at 4001 points
        let fine = uniform_grid(1.0, 200_001);
        let grid = uniform_grid(1.0, 4001);
        for _ in 0..8 {
            let c = DVector::from_fn(9, |_, _| rng.random_range(-1.0..1.0));
            let p = SpectralProfile::new(c, b.clone()).unwrap();
            let sampled_fine = p.evaluate(&fine);
            let traj = functionals::integrate_trajectory(&sampled_fine).unwrap();
            let vq = functionals::variance_direct(&traj);
            assert_relative_eq!(p.variance(), vq, max_relative = 1e-8);
            let vk = functionals::variance_via_kernel(&sampled_fine);
            assert_relative_eq!(p.variance(), vk, max_relative = 1e-8);
            // energy quadrature is full-period exact already at 4001
            let sampled = p.evaluate(&grid);
            let eq = functionals::energy(&sampled, &cfg, true);
            assert_relative_eq!(p.energy(&cfg), eq, max_relative = 1e-6);
        }
    }

    #[test]
    fn energy_reduces_to_norm_when_undamped() {
        let mut cfg = ProblemConfig::default();
        cfg.alpha2 = 0.0;
        let b = basis(5);
        let c = DVector::from_vec(vec![1.0, -0.5, 0.25, 0.0, 2.0]);
        let p = SpectralProfile::new(c.clone(), b).unwrap();
        assert_relative_eq!(p.energy(&cfg), cfg.alpha1 * c.norm_squared(), max_relative = 1e-14);
    }

    #[test]
    fn residual_trivial_roots() {
        let b = basis(6);
        let ctx = ResidualContext::new(b.clone(), 0.4, 0.2, 0.1);
        let f = residual(&DVector::zeros(6), &ctx).unwrap();
        assert_eq!(f.norm(), 0.0);

        // alpha2 = 0 and xi = lambda1/alpha1 kills the fundamental row
        let xi = b.lambda[0] / 0.2;
        let ctx = ResidualContext::new(b.clone(), xi, 0.2, 0.0);
        let mut e1 = DVector::zeros(6);
        e1[0] = 3.7;
        let f = residual(&e1, &ctx).unwrap();
        assert_abs_diff_eq!(f.norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn residual_matches_naive_tensor_sum() {
        let b = basis(7);
        let ctx = ResidualContext::new(b.clone(), 0.3, 0.2, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let c = DVector::from_fn(7, |_, _| rng.random_range(-1.0..1.0));
            let f = residual(&c, &ctx).unwrap();
            for k in 0..7 {
                let mut q = 0.0;
                for n in 0..7 {
                    for m in 0..7 {
                        q += c[n] * c[m] * b.tensor_at(n, m, k);
                    }
                }
                let expect = ctx.a_diag[k] * c[k] - 3.0 * ctx.xi * ctx.alpha2 * q;
                assert_abs_diff_eq!(f[k], expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let b = basis(7);
        let ctx = ResidualContext::new(b.clone(), 0.27, 0.2, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-6;
        for _ in 0..10 {
            let c = DVector::from_fn(7, |_, _| rng.random_range(-1.0..1.0));
            let j = jacobian(&c, &ctx).unwrap();
            assert_relative_eq!(j.clone(), j.transpose(), max_relative = 1e-12);
            let mut worst: f64 = 0.0;
            for col in 0..7 {
                let mut cp = c.clone();
                let mut cm = c.clone();
                cp[col] += h;
                cm[col] -= h;
                let fp = residual(&cp, &ctx).unwrap();
                let fm = residual(&cm, &ctx).unwrap();
                for row in 0..7 {
                    let fd = (fp[row] - fm[row]) / (2.0 * h);
                    worst = worst.max((fd - j[(row, col)]).abs());
                }
            }
            let scale = j.amax().max(1.0);
            assert!(worst / scale <= 1e-6, "fd mismatch {worst}");
        }
    }

    #[test]
    fn jacobian_diagonal_cases() {
        let b = basis(5);
        // alpha2 = 0: J = A for any c
        let ctx = ResidualContext::new(b.clone(), 0.9, 0.2, 0.0);
        let c = DVector::from_vec(vec![1.0, 2.0, -3.0, 0.5, 0.0]);
        let j = jacobian(&c, &ctx).unwrap();
        assert_eq!(j, DMatrix::from_diagonal(&ctx.a_diag));
        // c = 0: J = A even with drag
        let ctx = ResidualContext::new(b, 0.9, 0.2, 0.7);
        let j = jacobian(&DVector::zeros(5), &ctx).unwrap();
        assert_eq!(j, DMatrix::from_diagonal(&ctx.a_diag));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let b = basis(4);
        let ctx = ResidualContext::new(b.clone(), 0.2, 0.2, 0.1);
        let c = DVector::zeros(3);
        assert!(residual(&c, &ctx).is_err());
        assert!(jacobian(&c, &ctx).is_err());
        assert!(SpectralProfile::new(DVector::zeros(5), b).is_err());
    }
}
