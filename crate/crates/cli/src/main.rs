//! `masense` — experiment driver for energy-efficient movable-antenna
//! velocity profiles.
//!
//! Subcommands: `optimize`, `baseline`, `sweep`, `region`, `validate`,
//! `trace`. Configuration comes from an optional flat `key=value` file
//! plus repeatable `--set key=value` overrides. Exit codes: 0 success,
//! 1 generic failure (including failed validation), 2 infeasible,
//! 3 non-convergence, 4 configuration error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use masense_core::baselines::{self, ProfileMetrics};
use masense_core::functionals::{self, uniform_grid, SampledProfile};
use masense_core::optimizer::{self, OptimizeError};
use masense_core::sensing::{self, SensingModel};
use masense_core::sos::{self, CertifyOutcome, RegionSpec};
use masense_core::spectral::{self, ResidualContext, SpectralBasis, SpectralProfile};
use masense_core::util::fmt_sig;
use masense_core::{Error as CoreError, ProblemConfig};

#[derive(Parser)]
#[command(name = "masense", about, version)]
struct Cli {
    /// Flat key=value config file (defaults used when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. --set alpha2=0.5 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct OutputArgs {
    /// Directory for the produced CSV files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKind {
    Sinusoidal,
    Uniform,
    Binary,
    Trapezoidal,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepParam {
    Alpha2,
    T,
    L,
    N,
}

impl SweepParam {
    fn key(self) -> &'static str {
        match self {
            Self::Alpha2 => "alpha2",
            Self::T => "T",
            Self::L => "L",
            Self::N => "N",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the two-layer optimizer and write profile, coefficients, and
    /// trace CSVs.
    Optimize(OutputArgs),
    /// Evaluate one of the four benchmark profiles.
    Baseline {
        #[arg(long = "type", value_enum)]
        kind: BaselineKind,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Sweep one parameter and tabulate every scheme at each value.
    Sweep {
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated list of parameter values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Rasterize the two-mode feasible-region comparison.
    Region {
        #[arg(long, default_value_t = -1.0)]
        min: f64,
        #[arg(long, default_value_t = 1.0)]
        max: f64,
        #[arg(long, default_value_t = 201)]
        resolution: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run the oracle properties and print pass/fail per property.
    Validate {
        #[arg(long, default_value_t = 2026)]
        seed: u64,
        /// Monte-Carlo trials for the CRB property.
        #[arg(long, default_value_t = 2000)]
        trials: usize,
        #[arg(long, default_value_t = 20.0)]
        snr_db: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run the optimizer and print the Dinkelbach trace CSV to stdout.
    Trace,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: kind=config detail=\"{e}\"");
            return ExitCode::from(4);
        }
    };
    let code = match cli.command {
        Command::Optimize(out) => cmd_optimize(&cfg, &out),
        Command::Baseline { kind, output } => cmd_baseline(&cfg, kind, &output),
        Command::Sweep {
            param,
            values,
            output,
        } => cmd_sweep(&cfg, param, &values, &output),
        Command::Region {
            min,
            max,
            resolution,
            output,
        } => cmd_region(&cfg, min, max, resolution, &output),
        Command::Validate {
            seed,
            trials,
            snr_db,
            output,
        } => cmd_validate(&cfg, seed, trials, snr_db, &output),
        Command::Trace => cmd_trace(&cfg),
    };
    match code {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => e.report(),
    }
}

enum CmdError {
    Config(String),
    Infeasible(String),
    NonConvergence(String),
    Other(String),
    ValidationFailed,
}

impl CmdError {
    fn report(self) -> ExitCode {
        match self {
            Self::Config(d) => {
                eprintln!("error: kind=config detail=\"{d}\"");
                ExitCode::from(4)
            }
            Self::Infeasible(d) => {
                eprintln!("error: kind=infeasible detail=\"{d}\"");
                ExitCode::from(2)
            }
            Self::NonConvergence(d) => {
                eprintln!("error: kind=nonconvergence detail=\"{d}\"");
                ExitCode::from(3)
            }
            Self::Other(d) => {
                eprintln!("error: kind=other detail=\"{d}\"");
                ExitCode::FAILURE
            }
            Self::ValidationFailed => ExitCode::FAILURE,
        }
    }
}

impl From<OptimizeError> for CmdError {
    fn from(e: OptimizeError) -> Self {
        match e {
            OptimizeError::Infeasible { .. } => Self::Infeasible(e.to_string()),
            OptimizeError::NonConvergence { .. } => Self::NonConvergence(e.to_string()),
            OptimizeError::SolverStall { .. } => Self::NonConvergence(e.to_string()),
            OptimizeError::Invalid(inner) => Self::Config(inner.to_string()),
        }
    }
}

impl From<CoreError> for CmdError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Config(_) => Self::Config(e.to_string()),
            CoreError::Infeasible(_) => Self::Infeasible(e.to_string()),
            other => Self::Other(other.to_string()),
        }
    }
}

fn load_config(cli: &Cli) -> Result<ProblemConfig, CoreError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let body = fs::read_to_string(path)
                .map_err(|e| CoreError::Config(format!("{}: {e}", path.display())))?;
            ProblemConfig::from_key_values(&body)?
        }
        None => ProblemConfig::default(),
    };
    for ov in &cli.overrides {
        let (k, v) = ov
            .split_once('=')
            .ok_or_else(|| CoreError::Config(format!("override '{ov}' is not KEY=VALUE")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Write via a temp file and rename so readers never see partial output.
fn write_atomic(path: &Path, content: &str, force: bool) -> Result<(), CmdError> {
    if path.exists() && !force {
        return Err(CmdError::Other(format!(
            "{} exists; pass --force to overwrite",
            path.display()
        )));
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, content).map_err(|e| CmdError::Other(format!("{}: {e}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(|e| CmdError::Other(format!("{}: {e}", path.display())))?;
    Ok(())
}

fn out_dir(output: &OutputArgs) -> Result<PathBuf, CmdError> {
    let dir = output.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| CmdError::Other(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn profile_csv(sampled: &SampledProfile) -> Result<String, CmdError> {
    let traj = functionals::integrate_trajectory(sampled)
        .map_err(|e| CmdError::Other(e.to_string()))?;
    let mut out = String::from("t,v,x\n");
    for i in 0..sampled.t.len() {
        out.push_str(&format!(
            "{},{},{}\n",
            fmt_sig(sampled.t[i], 9),
            fmt_sig(sampled.v[i], 9),
            fmt_sig(traj.x[i], 9)
        ));
    }
    Ok(out)
}

fn summary_line(metrics: &ProfileMetrics, extra: &str) {
    println!(
        "ee={} variance={} energy={}{extra}",
        fmt_sig(metrics.ee, 9),
        fmt_sig(metrics.variance, 9),
        fmt_sig(metrics.energy, 9)
    );
}

fn cmd_optimize(cfg: &ProblemConfig, output: &OutputArgs) -> Result<(), CmdError> {
    let dir = out_dir(output)?;
    let out = optimizer::optimize(cfg)?;
    let grid = uniform_grid(cfg.interval, cfg.quad_points);
    let sampled = out.profile.evaluate(&grid);
    write_atomic(&dir.join("profile.csv"), &profile_csv(&sampled)?, output.force)?;

    let mut coeffs = String::from("n,c_n\n");
    for (i, &c) in out.profile.coeffs.iter().enumerate() {
        coeffs.push_str(&format!("{},{}\n", i + 1, fmt_sig(c, 9)));
    }
    write_atomic(&dir.join("coefficients.csv"), &coeffs, output.force)?;
    write_atomic(&dir.join("trace.csv"), &out.trace.to_csv(), output.force)?;

    let metrics = baselines::evaluate(&sampled, cfg).map_err(CmdError::from)?;
    summary_line(
        &metrics,
        &format!(" outer_iters={}", out.trace.outer.len()),
    );
    Ok(())
}

fn baseline_profile(cfg: &ProblemConfig, kind: BaselineKind) -> Result<(SampledProfile, String), CmdError> {
    Ok(match kind {
        BaselineKind::Sinusoidal => (baselines::sinusoidal(cfg), String::new()),
        BaselineKind::Uniform => (baselines::uniform(cfg), String::new()),
        BaselineKind::Binary => (baselines::binary(cfg), String::new()),
        BaselineKind::Trapezoidal => {
            let search = baselines::trapezoidal(cfg).map_err(CmdError::from)?;
            let extra = format!(" t_ramp={}", fmt_sig(search.t_ramp, 9));
            (search.profile, extra)
        }
    })
}

fn cmd_baseline(cfg: &ProblemConfig, kind: BaselineKind, output: &OutputArgs) -> Result<(), CmdError> {
    let dir = out_dir(output)?;
    let (profile, extra) = baseline_profile(cfg, kind)?;
    write_atomic(&dir.join("profile.csv"), &profile_csv(&profile)?, output.force)?;
    let metrics = baselines::evaluate(&profile, cfg).map_err(CmdError::from)?;
    summary_line(&metrics, &extra);
    Ok(())
}

fn apply_sweep_value(cfg: &ProblemConfig, param: SweepParam, value: f64) -> Result<ProblemConfig, CmdError> {
    let mut c = cfg.clone();
    match param {
        SweepParam::Alpha2 => c.alpha2 = value,
        SweepParam::T => c.interval = value,
        SweepParam::L => c.track_length = value,
        SweepParam::N => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(CmdError::Config(format!("N sweep value {value} is not a positive integer")));
            }
            c.modes = value as usize;
        }
    }
    c.validate().map_err(CmdError::from)?;
    Ok(c)
}

fn sweep_row(param: &str, value: f64, scheme: &str, m: Option<ProfileMetrics>, status: &str) -> String {
    match m {
        Some(m) => format!(
            "{param},{},{scheme},{},{},{},{status}\n",
            fmt_sig(value, 9),
            fmt_sig(m.variance, 9),
            fmt_sig(m.energy, 9),
            fmt_sig(m.ee, 9)
        ),
        None => format!("{param},{},{scheme},,,,{status}\n", fmt_sig(value, 9)),
    }
}

fn cmd_sweep(
    cfg: &ProblemConfig,
    param: SweepParam,
    values: &[f64],
    output: &OutputArgs,
) -> Result<(), CmdError> {
    if values.is_empty() {
        return Err(CmdError::Config("sweep needs at least one value".into()));
    }
    for &v in values {
        if !(v > 0.0) {
            return Err(CmdError::Config(format!("sweep values must be positive, got {v}")));
        }
    }
    let dir = out_dir(output)?;

    // each sweep point is independent; evaluate them in parallel and merge
    // in parameter order
    let chunks: Vec<Result<String, CmdError>> = values
        .par_iter()
        .map(|&value| {
            let cfg = apply_sweep_value(cfg, param, value)?;
            let key = param.key();
            let mut rows = String::new();
            match optimizer::optimize(&cfg) {
                Ok(out) => {
                    let grid = uniform_grid(cfg.interval, cfg.quad_points);
                    let sampled = out.profile.evaluate(&grid);
                    let m = baselines::evaluate(&sampled, &cfg).map_err(CmdError::from)?;
                    rows.push_str(&sweep_row(key, value, "proposed", Some(m), "ok"));
                }
                Err(OptimizeError::Infeasible { .. }) => {
                    rows.push_str(&sweep_row(key, value, "proposed", None, "infeasible"));
                }
                Err(OptimizeError::NonConvergence { .. } | OptimizeError::SolverStall { .. }) => {
                    rows.push_str(&sweep_row(key, value, "proposed", None, "nonconverged"));
                }
                Err(OptimizeError::Invalid(e)) => return Err(CmdError::Config(e.to_string())),
            }
            for (scheme, profile) in [
                ("sinusoidal", baselines::sinusoidal(&cfg)),
                ("uniform", baselines::uniform(&cfg)),
                ("binary", baselines::binary(&cfg)),
            ] {
                let m = baselines::evaluate(&profile, &cfg).map_err(CmdError::from)?;
                rows.push_str(&sweep_row(key, value, scheme, Some(m), "ok"));
            }
            match baselines::trapezoidal(&cfg) {
                Ok(search) => {
                    rows.push_str(&sweep_row(key, value, "trapezoidal", Some(search.metrics), "ok"));
                }
                Err(CoreError::Infeasible(_)) => {
                    rows.push_str(&sweep_row(key, value, "trapezoidal", None, "infeasible"));
                }
                Err(e) => return Err(CmdError::Other(e.to_string())),
            }
            Ok(rows)
        })
        .collect();

    let mut csv = String::from("param,value,scheme,variance,energy,ee,status\n");
    for chunk in chunks {
        csv.push_str(&chunk?);
    }
    write_atomic(&dir.join("sweep.csv"), &csv, output.force)?;
    println!("sweep complete: {} values x 5 schemes", values.len());
    Ok(())
}

fn cmd_region(
    cfg: &ProblemConfig,
    min: f64,
    max: f64,
    resolution: usize,
    output: &OutputArgs,
) -> Result<(), CmdError> {
    if !(min < max) || resolution < 2 {
        return Err(CmdError::Config("region needs min < max and resolution >= 2".into()));
    }
    let dir = out_dir(output)?;
    let mut cfg = cfg.clone();
    cfg.modes = 2;
    let spec = RegionSpec {
        c_min: min,
        c_max: max,
        resolution,
        truth_samples: 2001,
    };
    let records = sos::rasterize_feasible_region(&spec, &cfg).map_err(CmdError::from)?;
    write_atomic(&dir.join("region.csv"), &sos::region_csv(&records), output.force)?;
    let sos_area = records.iter().filter(|r| r.sos).count();
    println!("region complete: {} points, {} sos-feasible", records.len(), sos_area);
    Ok(())
}

fn cmd_trace(cfg: &ProblemConfig) -> Result<(), CmdError> {
    let out = optimizer::optimize(cfg)?;
    print!("{}", out.trace.to_csv());
    Ok(())
}

fn cmd_validate(
    cfg: &ProblemConfig,
    seed: u64,
    trials: usize,
    snr_db: f64,
    output: &OutputArgs,
) -> Result<(), CmdError> {
    let mut all_ok = true;
    let mut check = |name: &str, ok: bool, detail: String| {
        println!("{} {name} ({detail})", if ok { "PASS" } else { "FAIL" });
        all_ok &= ok;
    };

    // kernel vs direct variance on random spectral profiles
    {
        let basis = Arc::new(SpectralBasis::build(15, cfg.interval));
        let grid = uniform_grid(cfg.interval, 16_001);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..40 {
            let c = DVector::from_fn(15, |_, _| rng.random_range(-1.0..1.0));
            let p = SpectralProfile::new(c, basis.clone()).unwrap();
            let sampled = p.evaluate(&grid);
            let direct = functionals::variance_direct(
                &functionals::integrate_trajectory(&sampled).unwrap(),
            );
            let kernel = functionals::variance_via_kernel(&sampled);
            worst = worst.max((direct - kernel).abs() / direct.max(1e-12));
        }
        check("variance-kernel-equivalence", worst <= 1e-6, format!("max rel gap {worst:.2e}"));
    }

    // tensor closed form vs quadrature
    {
        let basis = SpectralBasis::build(8, cfg.interval);
        let grid = uniform_grid(cfg.interval, 4001);
        let mut worst: f64 = 0.0;
        for n in 0..8 {
            for m in 0..8 {
                for k in 0..8 {
                    let y: Vec<f64> = grid
                        .iter()
                        .map(|&t| basis.phi(n, t) * basis.phi(m, t) * basis.phi(k, t))
                        .collect();
                    worst = worst
                        .max((basis.tensor_at(n, m, k) - functionals::trapezoid(&grid, &y)).abs());
                }
            }
        }
        check("tensor-closed-form", worst <= 1e-10, format!("max deviation {worst:.2e}"));
    }

    // Jacobian vs finite differences
    {
        let basis = Arc::new(SpectralBasis::build(cfg.modes, cfg.interval));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4a);
        let mut worst: f64 = 0.0;
        for _ in 0..10 {
            let xi = rng.random_range(0.01..1.0);
            let ctx = ResidualContext::new(basis.clone(), xi, cfg.alpha1, cfg.alpha2);
            let c = DVector::from_fn(cfg.modes, |_, _| rng.random_range(-1.0..1.0));
            let jac = spectral::jacobian(&c, &ctx).unwrap();
            let scale = jac.amax().max(1.0);
            for col in 0..cfg.modes {
                let h = 1e-6;
                let mut cp = c.clone();
                let mut cm = c.clone();
                cp[col] += h;
                cm[col] -= h;
                let fp = spectral::residual(&cp, &ctx).unwrap();
                let fm = spectral::residual(&cm, &ctx).unwrap();
                for row in 0..cfg.modes {
                    worst = worst
                        .max(((fp[row] - fm[row]) / (2.0 * h) - jac[(row, col)]).abs() / scale);
                }
            }
        }
        check("jacobian-finite-difference", worst <= 1e-6, format!("max rel mismatch {worst:.2e}"));
    }

    // Mercer reconstruction
    {
        let basis = SpectralBasis::build(200, cfg.interval);
        let grid = uniform_grid(cfg.interval, 101);
        let mut worst: f64 = 0.0;
        for &t in &grid {
            for &s in &grid {
                let mut rec = 0.0;
                for n in 0..200 {
                    rec += basis.lambda[n] * basis.phi(n, t) * basis.phi(n, s);
                }
                worst = worst.max((functionals::bridge_kernel(t, s, cfg.interval) - rec).abs());
            }
        }
        check("mercer-reconstruction", worst <= 1e-3 * cfg.interval, format!("sup error {worst:.2e}"));
    }

    // SOS certificate soundness on a few reference profiles
    {
        let basis = SpectralBasis::build(cfg.modes, cfg.interval);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x505);
        let mut ok = true;
        let mut certified = 0;
        for _ in 0..10 {
            let mut c = DVector::from_fn(cfg.modes, |_, _| rng.random_range(-0.2..0.2));
            c[0] = rng.random_range(0.5..2.0);
            if let CertifyOutcome::Certified(_) = sos::certify_profile(&c, &basis, cfg) {
                certified += 1;
                for i in 0..4001 {
                    let t = cfg.interval * i as f64 / 4000.0;
                    let v: f64 = (0..cfg.modes).map(|n| c[n] * basis.phi(n, t)).sum();
                    ok &= v >= -1e-7 && v <= cfg.v_max * (1.0 + 1e-7);
                }
            }
        }
        check("sos-certificate-soundness", ok && certified > 0, format!("{certified} certificates checked"));
    }

    // baseline oracle EE values (at the reference defaults)
    {
        let refc = ProblemConfig::default();
        let sin = baselines::evaluate(&baselines::sinusoidal(&refc), &refc).unwrap();
        let bin = baselines::evaluate(&baselines::binary(&refc), &refc).unwrap();
        let uni = baselines::evaluate(&baselines::uniform(&refc), &refc).unwrap();
        let trap = baselines::trapezoidal(&refc).unwrap();
        let ok = (sin.ee - 0.1382).abs() <= 1e-3
            && (bin.ee - 0.0611).abs() <= 1e-3
            && (uni.ee - 0.1282).abs() <= 1e-4
            && (trap.metrics.ee - 0.15).abs() <= 0.01;
        check(
            "baseline-ee-values",
            ok,
            format!(
                "sin {:.4}, bin {:.4}, uni {:.4}, trap {:.4}",
                sin.ee, bin.ee, uni.ee, trap.metrics.ee
            ),
        );
    }

    // Monte-Carlo MSE vs CRB
    {
        let model = SensingModel::default();
        let positions = sensing::sinusoidal_positions(cfg, &model.snapshots);
        match sensing::monte_carlo_mse(&positions, cfg.interval, snr_db, trials, 4096, seed) {
            Ok(report) => {
                let ok = report.ratio >= 1.0 && report.ratio <= 3.0;
                check("mc-mse-vs-crb", ok, format!("ratio {:.3}", report.ratio));
                if let Some(dir) = &output.out {
                    fs::create_dir_all(dir).map_err(|e| CmdError::Other(e.to_string()))?;
                    write_atomic(&dir.join("mc.csv"), &sensing::mc_report_csv(&report), output.force)?;
                }
            }
            Err(e) => check("mc-mse-vs-crb", false, e.to_string()),
        }
    }

    if all_ok {
        Ok(())
    } else {
        Err(CmdError::ValidationFailed)
    }
}
