use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dense::DenseMatrix;

/// Derives an independent stream seed from a base seed and a stream index
/// (SplitMix64 finalizer).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Half-width of the Glorot/Xavier uniform interval.
pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Uniform Xavier initialization of a `rows x cols` matrix with
/// `fan_in = rows`, `fan_out = cols`.
pub fn xavier_init(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    xavier_with_fans(rows, cols, rows, cols, seed)
}

/// Xavier initialization with explicit fans, used for bias rows where the
/// matrix shape (`1 x d`) does not describe the layer.
pub fn xavier_with_fans(
    rows: usize,
    cols: usize,
    fan_in: usize,
    fan_out: usize,
    seed: u64,
) -> DenseMatrix {
    assert!(rows > 0 && cols > 0, "xavier_init needs a positive shape");
    let bound = xavier_bound(fan_in, fan_out);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-bound..=bound))
        .collect();
    DenseMatrix::from_vec(rows, cols, data).expect("shape computed above")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_respect_bound() {
        let m = xavier_init(4, 4, 1);
        let bound = (6.0f64 / 8.0).sqrt();
        assert!((bound - 0.866).abs() < 1e-3);
        assert!(m.as_slice().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn seeded_determinism() {
        assert_eq!(xavier_init(5, 3, 42), xavier_init(5, 3, 42));
        assert_ne!(xavier_init(5, 3, 42), xavier_init(5, 3, 43));
    }

    #[test]
    fn empirical_mean_is_centered() {
        // 10^6 samples, uniform on ±0.866: sd of the mean ≈ 0.5/1000, so 0.01 is ~20σ.
        let m = xavier_init(1000, 1000, 9);
        let mean = m.as_slice().iter().sum::<f64>() / m.len() as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
    }
}
