use masense_core::conic;
use masense_core::optimizer::{initialize, ScaAssembler};
use masense_core::sos;
use masense_core::spectral::{ResidualContext, SpectralBasis};
use masense_core::ProblemConfig;
use std::sync::Arc;

fn main() {
    let mut cfg = ProblemConfig::default();
    cfg.modes = 13;
    cfg.solver.max_iter = 300_000;
    cfg.solver.rho = 1.0;
    cfg.solver.polish_trigger = 0.0; // disable polish
    let basis = Arc::new(SpectralBasis::build(cfg.modes, cfg.interval));
    let map = sos::build_chebyshev_map(cfg.modes, cfg.interval, cfg.v_max);
    let asm = ScaAssembler::new(&cfg, basis.clone(), &map);
    let (c0, xi0) = initialize(&cfg, &basis);
    let ctx = ResidualContext::new(basis.clone(), xi0, cfg.alpha1, cfg.alpha2);
    let sub = asm.subproblem(&c0, &ctx).unwrap();
    let res = conic::solve(&sub, &cfg.solver, Some(&c0));
    println!("status {} iters {} rp {:.1e} rd {:.1e}", res.status, res.iterations, res.primal_residual, res.dual_residual);
    for (i, g) in res.grams.iter().enumerate() {
        let eig = g.clone().symmetric_eigen();
        let mut ev: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
        ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
        println!("block {i} dim {}: {:?}", g.nrows(), ev.iter().map(|v| format!("{v:.1e}")).collect::<Vec<_>>());
    }
    // dual block eigenvalues (complementarity partners) from selector rows
    let mut off = sub.cones.zero + sub.cones.nonneg;
    for (i, &d) in sub.layout.gram_dims.iter().enumerate() {
        let len = d * (d + 1) / 2;
        let block = res.dual.rows(off, len).into_owned();
        let m = conic::svec_to_mat(block.as_slice(), d);
        let eig = m.symmetric_eigen();
        let mut ev: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
        ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
        println!("dual  {i} dim {d}: {:?}", ev.iter().map(|v| format!("{v:.1e}")).collect::<Vec<_>>());
        off += len;
    }
}
