//! Deterministic reference values.

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// `Σ c_i (σ − shift)^i` as a polynomial in `σ`.
fn shifted(coeffs: &[f64], shift: f64) -> Vec<f64> {
    let mut out = vec![0.0; coeffs.len()];
    for (i, c) in coeffs.iter().enumerate() {
        let mut binom = 1.0;
        for j in 0..=i {
            out[j] += c * binom * (-shift).powi((i - j) as i32);
            binom = binom * (i - j) as f64 / (j + 1) as f64;
        }
    }
    out
}

/// Method of steps for `y'(t) = a·y(t − r)`, `t ≥ 0`, with polynomial history
/// `y(θ) = Σ c_i θ^i` on `[−r, 0]`: each interval `[jr, (j+1)r]` is integrated
/// exactly from the previous one.
pub fn method_of_steps(a: f64, r: f64, history: &[f64], t: f64) -> f64 {
    if t <= 0.0 {
        return horner(history, t);
    }
    // piece on the current interval in the local variable τ = t − jr
    let mut piece = shifted(history, r);
    let mut start = 0.0;
    loop {
        let mut next = vec![horner(&piece, r)];
        next.extend(
            piece
                .iter()
                .enumerate()
                .map(|(i, c)| a * c / (i + 1) as f64),
        );
        piece = next;
        if t <= start + r {
            return horner(&piece, t - start);
        }
        start += r;
    }
}
