/// Normalized Hermite function `φ_n(y) = (2ⁿ n! √π)^{-1/2} H_n(y) e^{-y²/2}`.
///
/// Three-term recurrence carried with a running exponent so that neither the
/// Gaussian factor nor the polynomial growth leaves the floating-point range.
pub fn hermite_function(n: usize, y: f64) -> f64 {
    let mut log_scale = -0.5 * y * y - 0.25 * std::f64::consts::PI.ln();
    let mut prev = 0.0;
    let mut cur = 1.0;
    for k in 0..n {
        let next = (2.0 / (k as f64 + 1.0)).sqrt() * y * cur - (k as f64 / (k as f64 + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
        let size = cur.abs().max(prev.abs());
        if size > 1e150 {
            cur /= size;
            prev /= size;
            log_scale += size.ln();
        }
    }
    if cur == 0.0 {
        return 0.0;
    }
    cur.signum() * (cur.abs().ln() + log_scale).exp()
}
