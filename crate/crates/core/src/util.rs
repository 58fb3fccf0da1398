//! Small shared helpers.

/// Format `x` in scientific notation with `sig` significant digits.
///
/// CSV outputs use this so files round-trip losslessly at a fixed width.
pub fn fmt_sig(x: f64, sig: usize) -> String {
    format!("{:.*e}", sig.saturating_sub(1), x)
}

/// Binomial coefficient as f64. Exact for the small arguments used here.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}
