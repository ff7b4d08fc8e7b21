//! Small dense solves on top of nalgebra.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

/// Solves `(G + λI) β = b` for a symmetric positive semidefinite `G`
/// (row-major, `p × p`) by Cholesky; `None` if the factorisation fails.
pub(crate) fn ridge_solve(
    gram: &[f64],
    p: usize,
    lambda: f64,
    rhs: &[&[f64]],
) -> Option<Vec<Vec<f64>>> {
    let mut g = DMatrix::from_row_slice(p, p, gram);
    for i in 0..p {
        g[(i, i)] += lambda;
    }
    let chol = g.cholesky()?;
    let out: Vec<Vec<f64>> = rhs
        .iter()
        .map(|b| {
            chol.solve(&DVector::from_column_slice(b))
                .iter()
                .copied()
                .collect()
        })
        .collect();
    out.iter()
        .all(|v| v.iter().all(|x| x.is_finite()))
        .then_some(out)
}

/// `(G + λI)⁻¹` (row-major), or `None` if `G + λI` is not positive definite.
pub(crate) fn ridge_inverse(gram: &[f64], p: usize, lambda: f64) -> Option<Vec<f64>> {
    let mut g = DMatrix::from_row_slice(p, p, gram);
    for i in 0..p {
        g[(i, i)] += lambda;
    }
    let inv = g.cholesky()?.inverse();
    Some(inv.transpose().iter().copied().collect())
}

/// Minimum-norm `g ∈ Rⁿ` with `g σ = z` for `σ ∈ Rⁿˣᵈ` of full row rank
/// (`g = z σᵀ (σσᵀ)⁻¹`); `None` when `σσᵀ` is numerically singular.
pub(crate) fn right_pseudo_solve(z: &[f64], sigma: &[f64], n: usize, d: usize) -> Option<Vec<f64>> {
    let s = DMatrix::from_row_slice(n, d, sigma);
    let sst = &s * s.transpose();
    let scale = sst.trace().abs();
    if !(scale > 0.0) || !scale.is_finite() {
        return None;
    }
    let chol = sst.clone().cholesky()?;
    let l = chol.l();
    if (0..n).any(|i| l[(i, i)] * l[(i, i)] <= 1e-12 * scale) {
        return None;
    }
    // gᵀ = (σσᵀ)⁻¹ σ zᵀ
    let rhs = &s * DVector::from_column_slice(z);
    let g = chol.solve(&rhs);
    Some(g.iter().copied().collect())
}

/// `A = σᵀ(σσᵀ)⁻¹` (row-major `d × n`), the map `z ↦ g` of [`right_pseudo_solve`].
pub(crate) fn right_pseudo_inverse(sigma: &[f64], n: usize, d: usize) -> Option<Vec<f64>> {
    let mut out = alloc::vec![0.0; d * n];
    let mut e = alloc::vec![0.0; d];
    for l in 0..d {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[l] = 1.0;
        let g = right_pseudo_solve(&e, sigma, n, d)?;
        out[l * n..(l + 1) * n].copy_from_slice(&g);
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ridge_solve_recovers_exact_solution() {
        let g = [4.0, 1.0, 1.0, 3.0];
        let b = [1.0, 2.0];
        let x = ridge_solve(&g, 2, 0.0, &[&b]).unwrap();
        assert!((4.0 * x[0][0] + x[0][1] - 1.0).abs() < 1e-14);
        assert!((x[0][0] + 3.0 * x[0][1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn pseudo_inverse_of_wide_sigma() {
        // n = 1, d = 2: σ = (3, 4); z = gσ with g = 2.
        let g = right_pseudo_solve(&[6.0, 8.0], &[3.0, 4.0], 1, 2).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-14);
        assert!(right_pseudo_solve(&[1.0], &[0.0], 1, 1).is_none());
        assert!(right_pseudo_solve(&[1.0, 1.0, 1.0, 1.0], &[1.0, 2.0, 2.0, 4.0], 2, 2).is_none());
    }
}
