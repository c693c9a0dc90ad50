use crate::error::{invalid_arg, Result};

/// `KL(N(p_mean, p_var) || N(q_mean, q_var))` for scalar Gaussians.
pub fn kl_gaussian(p_mean: f64, p_var: f64, q_mean: f64, q_var: f64) -> Result<f64> {
    if !(p_var > 0.0 && q_var > 0.0) {
        return invalid_arg(format!("variances must be positive, got {p_var} and {q_var}"));
    }
    Ok(kl_unchecked(p_mean, p_var, q_mean, q_var))
}

#[inline]
pub(crate) fn kl_unchecked(p_mean: f64, p_var: f64, q_mean: f64, q_var: f64) -> f64 {
    let d = p_mean - q_mean;
    let ratio = p_var / q_var;
    // ratio - ln(ratio) - 1 >= 0; clamp the rounding error near ratio = 1.
    0.5 * (d * d / q_var + (ratio - ratio.ln() - 1.0).max(0.0))
}

/// `0.5 * (KL(p || q) + KL(q || p))`.
pub fn symmetric_kl(p_mean: f64, p_var: f64, q_mean: f64, q_var: f64) -> Result<f64> {
    Ok(0.5 * (kl_gaussian(p_mean, p_var, q_mean, q_var)? + kl_gaussian(q_mean, q_var, p_mean, p_var)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closed_form_values() {
        assert_eq!(kl_gaussian(0.0, 1.0, 0.0, 1.0).unwrap(), 0.0);
        assert!((kl_gaussian(1.0, 1.0, 0.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        let expected = 0.5 * (2.0 - 2f64.ln() - 1.0);
        assert!((kl_gaussian(0.0, 2.0, 0.0, 1.0).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.153_426_409_720_027_35).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_positive_variance() {
        assert!(kl_gaussian(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(kl_gaussian(0.0, 1.0, 0.0, -1.0).is_err());
    }

    proptest! {
        #[test]
        fn kl_is_non_negative(pm in -10.0f64..10.0, qm in -10.0f64..10.0, pv in 1e-6f64..100.0, qv in 1e-6f64..100.0) {
            prop_assert!(kl_gaussian(pm, pv, qm, qv).unwrap() >= 0.0);
        }

        #[test]
        fn symmetric_kl_is_symmetric(pm in -5.0f64..5.0, qm in -5.0f64..5.0, pv in 1e-3f64..10.0, qv in 1e-3f64..10.0) {
            let a = symmetric_kl(pm, pv, qm, qv).unwrap();
            let b = symmetric_kl(qm, qv, pm, pv).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}
