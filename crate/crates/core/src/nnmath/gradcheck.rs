//! Central-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::ParamStore;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tolerance: f64,
    /// Elements checked per run; above this a seeded random subset is used.
    pub max_elements: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            max_elements: 10_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ElementCheck {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Elements whose one-sided differences disagree (a ReLU kink inside
    /// `[θ-h, θ+h]`) and whose analytic value matches one side.
    pub excluded_kinks: Vec<ElementCheck>,
    pub failures: Vec<ElementCheck>,
    pub max_rel_error: f64,
    pub worst: Option<ElementCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compares the gradients currently stored in `store` against central
/// differences of `loss`. The store's values are restored before returning.
///
/// An element is treated as a kink (and excluded) when the central difference
/// disagrees with the analytic gradient, the forward and backward one-sided
/// differences disagree with each other, and the analytic gradient agrees
/// with one of them. That is the signature of a ReLU argument crossing zero
/// under the perturbation, where the analytic value follows the subgradient
/// convention.
pub fn finite_difference_check<F>(
    store: &mut ParamStore,
    mut loss: F,
    cfg: &GradCheckConfig,
) -> GradCheckReport
where
    F: FnMut(&ParamStore) -> f64,
{
    let total: usize = store.parameter_count();
    let mut flat: Vec<(String, usize)> = Vec::with_capacity(total.min(cfg.max_elements));
    if total <= cfg.max_elements {
        for (name, t) in store.iter() {
            flat.extend((0..t.value.len()).map(|i| (name.to_string(), i)));
        }
    } else {
        let mut offsets = Vec::new();
        let mut acc = 0;
        for (name, t) in store.iter() {
            offsets.push((name.to_string(), acc, t.value.len()));
            acc += t.value.len();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut picks = sample(&mut rng, total, cfg.max_elements).into_vec();
        picks.sort_unstable();
        for p in picks {
            let (name, start, _) = offsets
                .iter()
                .find(|(_, s, len)| p >= *s && p < s + len)
                .expect("pick within total");
            flat.push((name.clone(), p - start));
        }
    }

    let base = loss(store);
    let h = cfg.step;
    let mut report = GradCheckReport::default();
    for (name, idx) in flat {
        let analytic = store.get(&name).expect("listed above").grad.as_slice()[idx];
        let orig = store.value(&name).as_slice()[idx];

        store.value_mut(&name).as_mut_slice()[idx] = orig + h;
        let plus = loss(store);
        store.value_mut(&name).as_mut_slice()[idx] = orig - h;
        let minus = loss(store);
        store.value_mut(&name).as_mut_slice()[idx] = orig;

        let numeric = (plus - minus) / (2.0 * h);
        let err = rel_error(analytic, numeric);
        let check = ElementCheck {
            param: name,
            index: idx,
            analytic,
            numeric,
            rel_error: err,
        };
        report.checked += 1;
        if err < cfg.tolerance {
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some(check);
            }
            continue;
        }
        let forward = (plus - base) / h;
        let backward = (base - minus) / h;
        let one_sided_tol = cfg.tolerance.sqrt();
        let kink = rel_error(forward, backward) > 10.0 * cfg.tolerance
            && (rel_error(analytic, forward) < one_sided_tol
                || rel_error(analytic, backward) < one_sided_tol);
        if kink {
            report.excluded_kinks.push(check);
        } else {
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some(check.clone());
            }
            report.failures.push(check);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnmath::dense::{relu, DenseMatrix};

    #[test]
    fn quadratic_loss_matches() {
        let mut s = ParamStore::new();
        s.insert("w", DenseMatrix::from_rows(&[&[0.3, -1.2, 2.0]])).unwrap();
        s.insert("b", DenseMatrix::from_rows(&[&[0.7]])).unwrap();
        let vals: Vec<(String, DenseMatrix)> = s
            .iter()
            .map(|(n, t)| (n.to_string(), t.value.clone()))
            .collect();
        for (n, v) in vals {
            *s.grad_mut(&n) = v;
        }
        let report = finite_difference_check(
            &mut s,
            |p| 0.5 * p.squared_norm(),
            &GradCheckConfig::default(),
        );
        assert!(report.passed());
        assert_eq!(report.checked, 4);
        assert!(report.max_rel_error < 1e-9, "{}", report.max_rel_error);
    }

    #[test]
    fn relu_kink_is_excluded() {
        let mut s = ParamStore::new();
        s.insert("x", DenseMatrix::from_rows(&[&[0.0]])).unwrap();
        // relu'(0) := 0
        let report = finite_difference_check(
            &mut s,
            |p| relu(p.value("x").get(0, 0)),
            &GradCheckConfig::default(),
        );
        assert!(report.passed());
        assert_eq!(report.excluded_kinks.len(), 1);
    }

    #[test]
    fn wrong_gradient_is_reported() {
        let mut s = ParamStore::new();
        s.insert("x", DenseMatrix::from_rows(&[&[1.5]])).unwrap();
        s.grad_mut("x").set(0, 0, 1.0);
        let report = finite_difference_check(
            &mut s,
            |p| p.value("x").get(0, 0).powi(2),
            &GradCheckConfig::default(),
        );
        assert!(!report.passed());
        assert_eq!(s.value("x").get(0, 0), 1.5);
    }

    #[test]
    fn large_stores_are_subsampled() {
        let mut s = ParamStore::new();
        s.insert("w", DenseMatrix::zeros(200, 100)).unwrap();
        let cfg = GradCheckConfig {
            max_elements: 50,
            ..GradCheckConfig::default()
        };
        let report = finite_difference_check(&mut s, |p| 0.5 * p.squared_norm(), &cfg);
        assert_eq!(report.checked, 50);
        assert!(report.passed());
    }
}
