//! Interest extraction and factorization-machine style interest composition.
//!
//! For one aspect with interest vector `e` (length d) and factor matrix `V`
//! (d × K, rows `v_m`), write `s = Σ_m e_m v_m` and `q = Σ_m (e_m v_m)²`
//! (elementwise squares). Then
//!
//! ```text
//! intra = Σ_{m<n} (e_m v_m) ⊙ (e_n v_n)        = ½ (s² − q)
//! inter = Σ_{p<q} s_p ⊙ s_q                     = ½ ((Σ_p s_p)² − Σ_p s_p²)
//! IC    = inter + Σ_p intra_p                  = ½ ((Σ_p s_p)² − Σ_p q_p)
//! ```

use crate::nnmath::DenseMatrix;

/// `e^u ⊙ e^i`
pub fn extract_interest(user: &[f64], item: &[f64]) -> Vec<f64> {
    user.iter().zip(item).map(|(a, b)| a * b).collect()
}

/// Accumulates `s += Σ_m e_m v_m` and `q += Σ_m (e_m v_m)²`.
pub fn fm_terms(e: &[f64], factors: &DenseMatrix, s: &mut [f64], q: &mut [f64]) {
    debug_assert_eq!(e.len(), factors.rows());
    for (m, &em) in e.iter().enumerate() {
        if em == 0.0 {
            continue;
        }
        for ((sk, qk), &v) in s.iter_mut().zip(q.iter_mut()).zip(factors.row(m)) {
            let t = em * v;
            *sk += t;
            *qk += t * t;
        }
    }
}

/// Pairwise crossing of the elements of one interest vector.
pub fn intra_composition(e: &[f64], factors: &DenseMatrix) -> Vec<f64> {
    let k = factors.cols();
    let mut s = vec![0.0; k];
    let mut q = vec![0.0; k];
    fm_terms(e, factors, &mut s, &mut q);
    s.iter().zip(&q).map(|(s, q)| 0.5 * (s * s - q)).collect()
}

/// Pairwise crossing of elements across the interest vectors of different
/// aspects.
pub fn inter_composition(interests: &[Vec<f64>], factors: &[&DenseMatrix]) -> Vec<f64> {
    assert_eq!(interests.len(), factors.len(), "one factor matrix per aspect");
    let k = factors.first().map_or(0, |v| v.cols());
    let mut total = vec![0.0; k];
    let mut sum_sq = vec![0.0; k];
    let mut q = vec![0.0; k];
    for (e, v) in interests.iter().zip(factors) {
        let mut s = vec![0.0; k];
        fm_terms(e, v, &mut s, &mut q);
        for ((t, sq), sp) in total.iter_mut().zip(sum_sq.iter_mut()).zip(&s) {
            *t += sp;
            *sq += sp * sp;
        }
    }
    total
        .iter()
        .zip(&sum_sq)
        .map(|(t, sq)| 0.5 * (t * t - sq))
        .collect()
}
