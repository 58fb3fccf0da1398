use masense_core::{optimizer, ProblemConfig};

fn main() {
    let t0 = std::time::Instant::now();
    let cfg = ProblemConfig::default();
    let out = optimizer::optimize(&cfg).unwrap();
    println!("defaults N=11: EE = {:.6} in {:?}, outers = {}", out.ee, t0.elapsed(), out.trace.outer.len());
    println!("coeffs: {:?}", out.profile.coeffs.as_slice().iter().map(|c| (c * 1e5).round() / 1e5).collect::<Vec<_>>());

    for a2 in [1e-3, 1e-2, 1.0] {
        let mut cfg = ProblemConfig::default();
        cfg.alpha2 = a2;
        let t0 = std::time::Instant::now();
        let out = optimizer::optimize(&cfg).unwrap();
        let c = &out.profile.coeffs;
        let higher: f64 = (1..c.len()).map(|i| c[i] * c[i]).sum();
        println!(
            "alpha2={a2:6.0e}: EE = {:.6} higher/c1^2 = {:.3e} in {:?}",
            out.ee,
            higher / (c[0] * c[0]),
            t0.elapsed()
        );
    }
}
