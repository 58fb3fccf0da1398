//! Continuous-time trajectory, variance, and mechanical-energy functionals.
//!
//! Everything here evaluates on sampled profiles with composite-trapezoid
//! quadrature on a uniform grid (4001 points by default). The variance has
//! two independent evaluation routes: the direct moment form
//! `mean(x^2) - mean(x)^2` of the integrated trajectory, and the kernel
//! quadratic form `iint v(u) K(u,s) v(s) du ds` with the Brownian-bridge
//! kernel `K(u,s) = (T min(u,s) - u s) / T^2`. The two routes cross-check
//! each other in the test suites.

use crate::config::ProblemConfig;
use crate::error::Error;

/// Velocity samples on a strictly increasing time grid starting at 0.
#[derive(Debug, Clone)]
pub struct SampledProfile {
    /// Time grid (s); `t[0] = 0`, strictly increasing, last entry is T.
    pub t: Vec<f64>,
    /// Velocity samples (m/s), same length as `t`.
    pub v: Vec<f64>,
}

impl SampledProfile {
    pub fn new(t: Vec<f64>, v: Vec<f64>) -> Result<Self, Error> {
        if t.len() != v.len() {
            return Err(Error::Grid(format!(
                "time grid has {} points but velocity has {}",
                t.len(),
                v.len()
            )));
        }
        if t.len() < 2 {
            return Err(Error::Grid("need at least two samples".into()));
        }
        if t[0] != 0.0 {
            return Err(Error::Grid(format!("grid must start at 0, got {}", t[0])));
        }
        validate_monotone(&t)?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Grid("non-finite velocity sample".into()));
        }
        Ok(Self { t, v })
    }

    /// Sample `f` on a uniform `points`-point grid over `[0, t_end]`.
    pub fn from_fn(t_end: f64, points: usize, mut f: impl FnMut(f64) -> f64) -> Self {
        let t = uniform_grid(t_end, points);
        let v = t.iter().map(|&ti| f(ti)).collect();
        Self { t, v }
    }

    /// Interval length T.
    pub fn interval(&self) -> f64 {
        *self.t.last().unwrap()
    }

    /// Terminal velocity v(T).
    pub fn terminal_velocity(&self) -> f64 {
        *self.v.last().unwrap()
    }
}

/// Integrated positions on the same grid as the profile they came from.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
}

impl Trajectory {
    pub fn interval(&self) -> f64 {
        *self.t.last().unwrap()
    }
}

fn validate_monotone(t: &[f64]) -> Result<(), Error> {
    for i in 1..t.len() {
        if !(t[i] > t[i - 1]) {
            return Err(Error::Grid(format!(
                "grid not strictly increasing at index {i}: {} -> {}",
                t[i - 1],
                t[i]
            )));
        }
    }
    Ok(())
}

/// Uniform grid over `[0, t_end]` including both endpoints.
pub fn uniform_grid(t_end: f64, points: usize) -> Vec<f64> {
    assert!(points >= 2);
    let h = t_end / (points - 1) as f64;
    let mut t: Vec<f64> = (0..points).map(|i| i as f64 * h).collect();
    t[points - 1] = t_end;
    t
}

/// Cell-midpoint grid over `[0, t_end]`: `t_m = (m + 1/2) t_end / points`.
pub fn midpoint_grid(t_end: f64, points: usize) -> Vec<f64> {
    assert!(points >= 1);
    (0..points)
        .map(|i| (i as f64 + 0.5) * t_end / points as f64)
        .collect()
}

/// Composite trapezoid `int y dt` on a (possibly nonuniform) grid.
pub fn trapezoid(t: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(t.len(), y.len());
    let mut acc = 0.0;
    for i in 1..t.len() {
        acc += 0.5 * (y[i] + y[i - 1]) * (t[i] - t[i - 1]);
    }
    acc
}

/// Position trajectory as the cumulative trapezoidal integral of velocity.
///
/// `x[0] = 0`; nondecreasing whenever `v >= 0`.
pub fn integrate_trajectory(profile: &SampledProfile) -> Result<Trajectory, Error> {
    validate_monotone(&profile.t)?;
    let n = profile.t.len();
    let mut x = vec![0.0; n];
    for i in 1..n {
        x[i] = x[i - 1]
            + 0.5 * (profile.v[i] + profile.v[i - 1]) * (profile.t[i] - profile.t[i - 1]);
    }
    Ok(Trajectory {
        t: profile.t.clone(),
        x,
    })
}

/// Spatial variance of a trajectory: `mean(x^2) - mean(x)^2`, means taken
/// as `(1/T) int . dt` by quadrature.
pub fn variance_direct(traj: &Trajectory) -> f64 {
    let t_total = traj.interval();
    let sq: Vec<f64> = traj.x.iter().map(|&x| x * x).collect();
    let mean_sq = trapezoid(&traj.t, &sq) / t_total;
    let mean = trapezoid(&traj.t, &traj.x) / t_total;
    mean_sq - mean * mean
}

/// The Brownian-bridge variance kernel `K(u,s) = (T min(u,s) - u s) / T^2`.
pub fn bridge_kernel(u: f64, s: f64, t_total: f64) -> f64 {
    (t_total * u.min(s) - u * s) / (t_total * t_total)
}

/// Variance as the kernel quadratic form `iint v(u) K(u,s) v(s) du ds`,
/// tensorized composite trapezoid on the profile's own grid.
///
/// Because the grid is sorted, the inner sums over `min(u,s)` and `u*s`
/// split at the diagonal into running prefix sums; this evaluates the exact
/// same weighted double sum as the dense loop in O(n) (the dense reference
/// lives in the tests).
pub fn variance_via_kernel(profile: &SampledProfile) -> f64 {
    let t = &profile.t;
    let n = t.len();
    let t_total = profile.interval();

    // trapezoid weights times samples
    let mut wv = vec![0.0; n];
    for i in 0..n {
        let left = if i > 0 { t[i] - t[i - 1] } else { 0.0 };
        let right = if i + 1 < n { t[i + 1] - t[i] } else { 0.0 };
        wv[i] = 0.5 * (left + right) * profile.v[i];
    }

    // prefix_u[j] = sum_{i<=j} wv_i t_i, prefix[j] = sum_{i<=j} wv_i
    let mut prefix_u = vec![0.0; n];
    let mut prefix = vec![0.0; n];
    let mut pu = 0.0;
    let mut p = 0.0;
    for i in 0..n {
        pu += wv[i] * t[i];
        p += wv[i];
        prefix_u[i] = pu;
        prefix[i] = p;
    }
    let total = prefix[n - 1];
    let total_u = prefix_u[n - 1];

    let mut acc = 0.0;
    for j in 0..n {
        // sum_i wv_i (T min(t_i, t_j) - t_i t_j)
        let inner = t_total * (prefix_u[j] + t[j] * (total - prefix[j])) - total_u * t[j];
        acc += wv[j] * inner;
    }
    acc / (t_total * t_total)
}

/// Total mechanical energy: `1/2 m_a v(T)^2` (optional) plus
/// `int alpha1 v^2 + alpha2 v^3 dt`.
///
/// The terminal kinetic term is a flag because one of the reference
/// benchmark figures is consistent with dropping it for the constant-speed
/// baseline; the faithful default is to include it.
pub fn energy(profile: &SampledProfile, cfg: &ProblemConfig, include_terminal_kinetic: bool) -> f64 {
    let integrand: Vec<f64> = profile
        .v
        .iter()
        .map(|&v| cfg.alpha1 * v * v + cfg.alpha2 * v * v * v)
        .collect();
    let mut e = trapezoid(&profile.t, &integrand);
    if include_terminal_kinetic {
        let vt = profile.terminal_velocity();
        e += 0.5 * cfg.mass * vt * vt;
    }
    e
}

/// Sensing energy efficiency: variance / energy.
///
/// Refuses the zero-energy cases instead of returning NaN or infinity.
pub fn sensing_ee(variance: f64, energy: f64) -> Result<f64, Error> {
    if energy > 0.0 {
        Ok(variance / energy)
    } else if variance > 0.0 {
        Err(Error::UnboundedEe)
    } else {
        Err(Error::DegenerateProfile)
    }
}
