use masense_core::conic::{self, SolveStatus};
use masense_core::sos;
use masense_core::ProblemConfig;
use nalgebra::DVector;

fn main() {
    let mut cfg = ProblemConfig::default();
    cfg.modes = 2;
    cfg.interval = 1.0;
    cfg.v_max = 1.0;
    let map = sos::build_chebyshev_map(2, 1.0, 1.0);
    let upper = sos::assemble_upper_constraints(&map);

    for (c1, c2) in [(0.0, 0.0), (0.5, 0.25), (0.3, -0.3), (0.7, 0.0), (1.2, 0.0), (0.9, 0.9), (0.69, 0.05), (0.0, 0.7071)] {
        let c = DVector::from_vec(vec![c1, c2]);
        let g = &upper.coeff_map * &c + &upper.bias;
        let sub = sos::feasibility_subproblem(&[(&upper.matching, g)]);
        let t0 = std::time::Instant::now();
        let res = conic::solve(&sub, &cfg.solver, None);
        println!(
            "({c1:5.2},{c2:5.2}): {:<15} iters={:6} rp={:9.2e} rd={:9.2e} {:?}",
            res.status.to_string(),
            res.iterations,
            res.primal_residual,
            res.dual_residual,
            t0.elapsed()
        );
    }

    // certify case N=3 sinusoid
    let basis = masense_core::spectral::SpectralBasis::build(3, 1.0);
    let cfg3 = ProblemConfig::default();
    let amp = 2.0 * std::f64::consts::PI * (0.5f64).sqrt();
    let c = DVector::from_vec(vec![amp, 0.0, 0.0]);
    let t0 = std::time::Instant::now();
    let out = sos::certify_profile(&c, &basis, &cfg3);
    println!("certify sinusoid: {:?} in {:?}", matches!(out, sos::CertifyOutcome::Certified(_)), t0.elapsed());

    // small sdp probe
    let t0 = std::time::Instant::now();
    let lower = sos::lukacs_matching(2);
    let sub = sos::feasibility_subproblem(&[(&lower, DVector::from_vec(vec![0.0, 1.0, 0.0]))]);
    let res = conic::solve(&sub, &Default::default(), None);
    assert_eq!(res.status, SolveStatus::Infeasible);
    println!("infeasible P=x detect: iters={} in {:?}", res.iterations, t0.elapsed());
}
