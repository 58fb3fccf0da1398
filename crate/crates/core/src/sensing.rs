//! DoA signal model, Cramer-Rao bound, and a Monte-Carlo check that a
//! grid maximum-likelihood estimator respects the bound.
//!
//! The received snapshot at position `x` is `alpha * exp(-j 2 pi x theta /
//! lambda) * s + n` with directional cosine `theta` and complex white
//! noise. The CRB is evaluated verbatim as
//!
//! ```text
//! CRB = sigma^2 lambda^2 / (8 pi^2 T P_s M |alpha|^2 var(x))
//! ```
//!
//! with `var(x)` the sample variance of the antenna positions: spreading
//! the positions is what buys angular accuracy.

use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::config::ProblemConfig;
use crate::error::Error;
use crate::util::fmt_sig;

/// Signal-model constants plus the snapshot times.
///
/// The defaults are validation constants (the efficiency objective drops
/// them): unit pilot power, gain, and noise, a 1 cm carrier wavelength,
/// and 256 cell-midpoint snapshots over `[0, 1]`. The short wavelength
/// keeps the angle grid resolution a visible fraction of the correlation
/// peak, so the Monte-Carlo check exercises the estimator rather than
/// only the noise floor.
#[derive(Debug, Clone)]
pub struct SensingModel {
    /// Directional cosine in [-1, 1].
    pub theta: f64,
    /// Carrier wavelength (m).
    pub wavelength: f64,
    /// Complex channel gain.
    pub gain: Complex64,
    pub pilot_power: f64,
    pub noise_power: f64,
    /// Snapshot times in [0, T].
    pub snapshots: Vec<f64>,
}

impl Default for SensingModel {
    fn default() -> Self {
        Self {
            theta: 0.0,
            wavelength: 0.01,
            gain: Complex64::new(1.0, 0.0),
            pilot_power: 1.0,
            noise_power: 1.0,
            snapshots: crate::functionals::midpoint_grid(1.0, 256),
        }
    }
}

/// Steering vector `exp(-j 2 pi x_m theta / lambda)`, unit modulus.
pub fn steering_vector(positions: &[f64], model: &SensingModel) -> Vec<Complex64> {
    let k = -2.0 * std::f64::consts::PI * model.theta / model.wavelength;
    positions
        .iter()
        .map(|&x| Complex64::from_polar(1.0, k * x))
        .collect()
}

/// Sample variance `(1/M) sum (x_m - mean)^2`.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / m
}

/// CRB on the directional cosine for the given antenna positions.
pub fn crb(positions: &[f64], model: &SensingModel, t_total: f64) -> Result<f64, Error> {
    if positions.len() < 2 {
        return Err(Error::InfiniteCrb);
    }
    let var = sample_variance(positions);
    if !(var > 0.0) {
        return Err(Error::InfiniteCrb);
    }
    let m = positions.len() as f64;
    let gain2 = model.gain.norm_sqr();
    Ok(model.noise_power * model.wavelength * model.wavelength
        / (8.0
            * std::f64::consts::PI
            * std::f64::consts::PI
            * t_total
            * model.pilot_power
            * m
            * gain2
            * var))
}

/// Maximum-likelihood grid estimate: argmax of `|b(theta)^H y|^2` over a
/// uniform grid on [-1, 1], refined by one parabolic interpolation step.
pub fn ml_grid_estimate(
    received: &[Complex64],
    positions: &[f64],
    model: &SensingModel,
    grid_points: usize,
) -> f64 {
    assert_eq!(received.len(), positions.len());
    assert!(grid_points >= 3);
    let step = 2.0 / (grid_points - 1) as f64;
    let two_pi_over_lambda = 2.0 * std::f64::consts::PI / model.wavelength;

    let mut best_k = 0;
    let mut best = f64::NEG_INFINITY;
    let mut power = vec![0.0; grid_points];
    for (k, p) in power.iter_mut().enumerate() {
        let theta = -1.0 + step * k as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, &x) in positions.iter().enumerate() {
            // conj(b_i) y_i with b_i = exp(-j 2 pi x theta / lambda)
            let phase = two_pi_over_lambda * x * theta;
            acc += Complex64::from_polar(1.0, phase) * received[i];
        }
        *p = acc.norm_sqr();
        if *p > best {
            best = *p;
            best_k = k;
        }
    }

    let mut theta = -1.0 + step * best_k as f64;
    if best_k > 0 && best_k + 1 < grid_points {
        let (l, c, r) = (power[best_k - 1], power[best_k], power[best_k + 1]);
        let denom = l - 2.0 * c + r;
        if denom.abs() > 0.0 {
            let delta = 0.5 * (l - r) / denom;
            theta += delta.clamp(-0.5, 0.5) * step;
        }
    }
    theta.clamp(-1.0, 1.0)
}

/// Result of a Monte-Carlo MSE-vs-CRB comparison.
#[derive(Debug, Clone, Copy)]
pub struct MonteCarloReport {
    pub snr_db: f64,
    pub trials: usize,
    pub mse: f64,
    pub crb: f64,
    pub ratio: f64,
}

/// CSV serialization: `snr_db,trials,mse,crb,ratio`.
pub fn mc_report_csv(r: &MonteCarloReport) -> String {
    format!(
        "snr_db,trials,mse,crb,ratio\n{},{},{},{},{}\n",
        fmt_sig(r.snr_db, 9),
        r.trials,
        fmt_sig(r.mse, 9),
        fmt_sig(r.crb, 9),
        fmt_sig(r.ratio, 9)
    )
}

/// Positions of the sinusoidal baseline trajectory at the given times:
/// the exact integral of `A sin(pi t / T)`.
pub fn sinusoidal_positions(cfg: &ProblemConfig, times: &[f64]) -> Vec<f64> {
    let amp = crate::baselines::sinusoidal_amplitude(cfg);
    let t_total = cfg.interval;
    times
        .iter()
        .map(|&t| amp * t_total / std::f64::consts::PI * (1.0 - (std::f64::consts::PI * t / t_total).cos()))
        .collect()
}

/// Run `trials` independent estimation experiments at the given SNR
/// (`P_s |alpha|^2 / sigma^2` in dB) and compare the empirical MSE with
/// the CRB. The true angle is drawn uniformly from [-0.9, 0.9]; the edges
/// are excluded because the estimator is only near-unbiased away from
/// them. Trials run in parallel on per-trial seeds.
pub fn monte_carlo_mse(
    positions: &[f64],
    t_total: f64,
    snr_db: f64,
    trials: usize,
    grid_points: usize,
    seed: u64,
) -> Result<MonteCarloReport, Error> {
    let mut model = SensingModel::default();
    model.noise_power = model.pilot_power * model.gain.norm_sqr() / 10f64.powf(snr_db / 10.0);
    let bound = crb(positions, &model, t_total)?;
    let pilot = model.pilot_power.sqrt();
    let noise_scale = (model.noise_power / 2.0).sqrt();

    let errors: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (trial as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let theta0 = rng.random_range(-0.9..0.9);
            let mut m = model.clone();
            m.theta = theta0;
            let b = steering_vector(positions, &m);
            let y: Vec<Complex64> = b
                .iter()
                .map(|&bi| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    m.gain * bi * pilot + Complex64::new(re, im) * noise_scale
                })
                .collect();
            let theta_hat = ml_grid_estimate(&y, positions, &m, grid_points);
            (theta_hat - theta0) * (theta_hat - theta0)
        })
        .collect();

    let mse = errors.iter().sum::<f64>() / trials as f64;
    Ok(MonteCarloReport {
        snr_db,
        trials,
        mse,
        crb: bound,
        ratio: mse / bound,
    })
}
