//! The four comparison motion profiles, all sampled on the standard
//! quadrature grid.
//!
//! * sinusoidal — the closed-form optimum of the linear-damping regime,
//!   `v(t) = min(V_max, pi L / (2T)) sin(pi t / T)`;
//! * uniform — maximum allowable constant speed (deliberately violates
//!   `v(0) = 0`, as the benchmark is defined);
//! * binary — symmetric dwell/sprint/dwell at `v in {0, V_max}`, which
//!   maximizes spatial variance among unidirectional binary profiles with
//!   bounded travel;
//! * trapezoidal — accelerate/cruise/decelerate with symmetric ramps, ramp
//!   duration picked by a 1-D grid search maximizing the sensing EE.

use crate::config::ProblemConfig;
use crate::error::Error;
use crate::functionals::{self, SampledProfile};

/// Variance, energy (terminal kinetic term included), and their ratio.
#[derive(Debug, Clone, Copy)]
pub struct ProfileMetrics {
    pub variance: f64,
    pub energy: f64,
    pub ee: f64,
}

/// Evaluate a profile's sensing EE by quadrature.
pub fn evaluate(profile: &SampledProfile, cfg: &ProblemConfig) -> Result<ProfileMetrics, Error> {
    let traj = functionals::integrate_trajectory(profile)?;
    let variance = functionals::variance_direct(&traj);
    let energy = functionals::energy(profile, cfg, true);
    let ee = functionals::sensing_ee(variance, energy)?;
    Ok(ProfileMetrics {
        variance,
        energy,
        ee,
    })
}

/// Amplitude of the closed-form sinusoid: `min(V_max, pi L / (2T))`.
pub fn sinusoidal_amplitude(cfg: &ProblemConfig) -> f64 {
    cfg.v_max
        .min(std::f64::consts::PI * cfg.track_length / (2.0 * cfg.interval))
}

/// `v(t) = min(V_max, pi L / (2T)) sin(pi t / T)`.
pub fn sinusoidal(cfg: &ProblemConfig) -> SampledProfile {
    let amp = sinusoidal_amplitude(cfg);
    let t_total = cfg.interval;
    SampledProfile::from_fn(t_total, cfg.quad_points, move |t| {
        amp * (std::f64::consts::PI * t / t_total).sin()
    })
}

/// Constant `v = min(V_max, L/T)`. Note `v(0) != 0` by construction.
pub fn uniform(cfg: &ProblemConfig) -> SampledProfile {
    let speed = cfg.v_max.min(cfg.track_length / cfg.interval);
    SampledProfile::from_fn(cfg.interval, cfg.quad_points, move |_| speed)
}

/// Symmetric dwell/sprint/dwell at the speed limit. The sprint window is
/// `tau = min(T, L / V_max)`, centered in the interval.
pub fn binary(cfg: &ProblemConfig) -> SampledProfile {
    let tau = cfg.interval.min(cfg.track_length / cfg.v_max);
    let lo = (cfg.interval - tau) / 2.0;
    let hi = lo + tau;
    let v_max = cfg.v_max;
    SampledProfile::from_fn(cfg.interval, cfg.quad_points, move |t| {
        if t >= lo && t <= hi {
            v_max
        } else {
            0.0
        }
    })
}

/// Trapezoid with ramp time `t_ramp` and cruise speed `L / (T - t_ramp)`,
/// so the travelled distance is exactly `L`.
pub fn trapezoid_profile(cfg: &ProblemConfig, t_ramp: f64) -> SampledProfile {
    let t_total = cfg.interval;
    let cruise = cfg.track_length / (t_total - t_ramp);
    SampledProfile::from_fn(t_total, cfg.quad_points, move |t| {
        if t < t_ramp {
            cruise * t / t_ramp
        } else if t > t_total - t_ramp {
            cruise * (t_total - t) / t_ramp
        } else {
            cruise
        }
    })
}

/// Result of the trapezoid ramp-time search.
#[derive(Debug, Clone)]
pub struct TrapezoidSearch {
    pub profile: SampledProfile,
    pub t_ramp: f64,
    pub metrics: ProfileMetrics,
}

/// 1-D grid search (default 2000 candidates over `(0, T/2)`) for the ramp
/// duration maximizing sensing EE, subject to the cruise speed limit.
pub fn trapezoidal(cfg: &ProblemConfig) -> Result<TrapezoidSearch, Error> {
    trapezoidal_with_candidates(cfg, 2000)
}

pub fn trapezoidal_with_candidates(
    cfg: &ProblemConfig,
    candidates: usize,
) -> Result<TrapezoidSearch, Error> {
    let mut best: Option<TrapezoidSearch> = None;
    for i in 0..candidates {
        // open interval (0, T/2)
        let t_ramp = cfg.interval / 2.0 * (i as f64 + 0.5) / candidates as f64;
        let cruise = cfg.track_length / (cfg.interval - t_ramp);
        if cruise > cfg.v_max {
            continue;
        }
        let profile = trapezoid_profile(cfg, t_ramp);
        let metrics = evaluate(&profile, cfg)?;
        if best.as_ref().map_or(true, |b| metrics.ee > b.metrics.ee) {
            best = Some(TrapezoidSearch {
                profile,
                t_ramp,
                metrics,
            });
        }
    }
    best.ok_or_else(|| {
        Error::Infeasible(format!(
            "no trapezoid ramp satisfies the speed limit: L/T = {} > v_max = {}",
            cfg.track_length / cfg.interval,
            cfg.v_max
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use std::f64::consts::PI;

    fn cfg() -> ProblemConfig {
        ProblemConfig::default()
    }

    #[test]
    fn sinusoid_amplitude_and_distance() {
        let p = sinusoidal(&cfg());
        let peak = p.v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_abs_diff_eq!(peak, 2.0 * PI, epsilon = 1e-6);
        let traj = functionals::integrate_trajectory(&p).unwrap();
        assert_abs_diff_eq!(traj.x[traj.x.len() - 1], 4.0, epsilon = 1e-6);
    }

    #[test]
    fn sinusoid_ee_matches_reference() {
        let m = evaluate(&sinusoidal(&cfg()), &cfg()).unwrap();
        assert_abs_diff_eq!(m.variance, 2.0, epsilon = 1e-5);
        assert_abs_diff_eq!(m.ee, 0.1382, epsilon = 1e-3);
    }

    #[test]
    fn uniform_metrics() {
        let c = cfg();
        let p = uniform(&c);
        assert!(p.v.iter().all(|&v| v == 4.0));
        let m = evaluate(&p, &c).unwrap();
        assert_relative_eq!(m.variance, 4.0 / 3.0, max_relative = 1e-6);
        assert_abs_diff_eq!(m.ee, 0.1282, epsilon = 1e-4);
        // terminal kinetic term excluded
        let traj = functionals::integrate_trajectory(&p).unwrap();
        let var = functionals::variance_direct(&traj);
        let e = functionals::energy(&p, &c, false);
        assert_abs_diff_eq!(var / e, 0.1389, epsilon = 1e-4);
    }

    #[test]
    fn uniform_min_branch() {
        let mut c = cfg();
        c.v_max = 2.0;
        let p = uniform(&c);
        assert!(p.v.iter().all(|&v| v == 2.0));
        let traj = functionals::integrate_trajectory(&p).unwrap();
        assert_abs_diff_eq!(traj.x[traj.x.len() - 1], 2.0, epsilon = 1e-9);
    }

    #[test]
    fn binary_metrics_at_defaults() {
        let c = cfg();
        let m = evaluate(&binary(&c), &c).unwrap();
        assert_abs_diff_eq!(m.variance, 2.9333, epsilon = 1e-3);
        assert_abs_diff_eq!(m.energy, 48.0, epsilon = 1e-2);
        assert_abs_diff_eq!(m.ee, 0.0611, epsilon = 1e-3);
    }

    #[test]
    fn binary_variance_saturates_at_large_speed() {
        let mut c = cfg();
        c.v_max = 1e4;
        c.quad_points = 400_001; // resolve the very short sprint
        let m = evaluate(&binary(&c), &c).unwrap();
        assert_abs_diff_eq!(m.variance, 4.0, epsilon = 2e-2);
    }

    #[test]
    fn binary_beats_sinusoid_on_variance_not_ee() {
        let c = cfg();
        let b = evaluate(&binary(&c), &c).unwrap();
        let s = evaluate(&sinusoidal(&c), &c).unwrap();
        assert!(b.variance > s.variance);
        assert!(b.ee < s.ee);
    }

    #[test]
    fn trapezoid_distance_identity() {
        let c = cfg();
        for t_ramp in [0.05, 0.2, 0.4] {
            let p = trapezoid_profile(&c, t_ramp);
            let traj = functionals::integrate_trajectory(&p).unwrap();
            assert_abs_diff_eq!(traj.x[traj.x.len() - 1], 4.0, epsilon = 1e-6);
            assert_eq!(p.v[0], 0.0);
            assert_eq!(*p.v.last().unwrap(), 0.0);
        }
    }

    #[test]
    fn trapezoid_search_ee() {
        let c = cfg();
        let best = trapezoidal(&c).unwrap();
        assert_abs_diff_eq!(best.metrics.ee, 0.15, epsilon = 0.01);
        // optimum beats the quarter-interval ramp
        let quarter = evaluate(&trapezoid_profile(&c, 0.25), &c).unwrap();
        assert!(best.metrics.ee >= quarter.ee);
        // degenerate limit recovers the uniform profile's drag energy
        let tiny = evaluate(&trapezoid_profile(&c, 1e-4), &c).unwrap();
        let uni = uniform(&c);
        let drag_only = functionals::energy(&uni, &c, false);
        assert_relative_eq!(tiny.energy, drag_only, max_relative = 1e-2);
    }

    #[test]
    fn trapezoid_infeasible_when_track_unreachable() {
        let mut c = cfg();
        c.v_max = 3.0; // L/T = 4 > 3
        assert!(matches!(trapezoidal(&c), Err(Error::Infeasible(_))));
    }

    #[test]
    fn all_baselines_respect_kinematics() {
        let c = cfg();
        let profiles = [
            sinusoidal(&c),
            binary(&c),
            trapezoidal(&c).unwrap().profile,
            uniform(&c),
        ];
        for p in &profiles {
            let traj = functionals::integrate_trajectory(p).unwrap();
            assert!(traj.x[traj.x.len() - 1] <= c.track_length + 1e-9);
            for &v in &p.v {
                assert!(v >= 0.0 && v <= c.v_max + 1e-12);
            }
        }
    }
}
