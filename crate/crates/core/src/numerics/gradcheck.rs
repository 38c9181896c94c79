use crate::error::{Error, Result};
use crate::numerics::ParamStore;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Outcome of a finite-difference check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// max over checked coordinates of |analytic - fd| / max(|analytic|, |fd|, 1e-8)
    pub max_rel_error: f64,
    /// (parameter name, flat index) where the max occurred
    pub worst: Option<(String, usize)>,
    /// number of coordinates actually checked
    pub checked: usize,
}

/// Compare the gradients currently stored in `store` against central finite
/// differences of `loss_fn`.
///
/// The caller runs its forward/backward pass first so that `store` holds the
/// analytic gradients; `loss_fn` must recompute the same loss from parameter
/// values alone. At most `max_coords_per_param` coordinates per parameter are
/// sampled (deterministically from `seed`); 0 means check every coordinate.
pub fn grad_check<F>(
    store: &mut ParamStore,
    mut loss_fn: F,
    eps: f64,
    max_coords_per_param: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    for name in store.names() {
        let n = store.get(&name).value.len();
        let mut coords: Vec<usize> = (0..n).collect();
        if max_coords_per_param > 0 && n > max_coords_per_param {
            coords.shuffle(&mut rng);
            coords.truncate(max_coords_per_param);
            coords.sort_unstable();
        }
        for &i in &coords {
            let orig = store.get(&name).value[i];
            let analytic = store.get(&name).grad[i];

            store.get_mut(&name).value[i] = orig + eps;
            let up = loss_fn(store);
            store.get_mut(&name).value[i] = orig - eps;
            let down = loss_fn(store);
            store.get_mut(&name).value[i] = orig;

            if !up.is_finite() || !down.is_finite() {
                return Err(Error::numeric(format!(
                    "non-finite loss while perturbing {name}[{i}]"
                )));
            }
            let fd = (up - down) / (2.0 * eps);
            let denom = analytic.abs().max(fd.abs()).max(1e-8);
            let rel = (analytic - fd).abs() / denom;
            report.checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((name.clone(), i));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_passes() {
        // f(x) = x^2 at x = 3, analytic gradient 6
        let mut store = ParamStore::new();
        store.insert("x", vec![1], vec![3.0]).unwrap();
        store.add_grad("x", &[6.0]);
        let report = grad_check(
            &mut store,
            |s| s.value("x")[0] * s.value("x")[0],
            1e-5,
            0,
            0,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-8, "{}", report.max_rel_error);
    }

    #[test]
    fn abs_kink_is_reported_not_hidden() {
        // |x| at 0 is not differentiable; claiming the subgradient 1 must be
        // surfaced as a large error, not hidden
        let mut store = ParamStore::new();
        store.insert("x", vec![1], vec![0.0]).unwrap();
        store.add_grad("x", &[1.0]);
        let report = grad_check(&mut store, |s| s.value("x")[0].abs(), 1e-5, 0, 0).unwrap();
        assert!(report.max_rel_error > 1e-2);
        assert_eq!(report.worst, Some(("x".to_string(), 0)));
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let mut store = ParamStore::new();
        store.insert("x", vec![1], vec![0.0]).unwrap();
        let res = grad_check(&mut store, |_| f64::NAN, 1e-5, 0, 0);
        assert!(res.is_err());
    }
}
