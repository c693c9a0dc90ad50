use crate::error::{invalid_arg, Result};

/// Discounted reward-to-go `R_t = c_t + gamma R_{t+1}`.
pub fn mc_returns(costs: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; costs.len()];
    let mut acc = 0.0;
    for t in (0..costs.len()).rev() {
        acc = costs[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// Generalised advantage estimates with a zero value after the last step,
/// so `lambda = 1` gives exactly `R_t - V(x_t)`.
pub fn gae(costs: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Result<Vec<f64>> {
    if costs.len() != values.len() {
        return invalid_arg(format!("{} costs but {} values", costs.len(), values.len()));
    }
    let n = costs.len();
    let mut out = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let next_v = if t + 1 < n { values[t + 1] } else { 0.0 };
        let delta = costs[t] + gamma * next_v - values[t];
        acc = delta + gamma * lambda * acc;
        out[t] = acc;
    }
    Ok(out)
}

/// Shifts to zero mean and scales to unit (population) standard deviation.
/// A constant batch is only centred.
pub fn normalize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let scale = if std > 1e-8 { 1.0 / std } else { 1.0 };
    xs.iter_mut().for_each(|x| *x = (*x - mean) * scale);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gamma_zero_gives_costs() {
        assert_eq!(mc_returns(&[1.0, 2.0, 3.0], 0.0), vec![1.0, 2.0, 3.0]);
    }

    proptest! {
        #[test]
        fn recursion_matches_double_loop(costs in prop::collection::vec(-5.0f64..5.0, 5), gamma in 0.0f64..1.0) {
            let r = mc_returns(&costs, gamma);
            for t in 0..5 {
                let direct: f64 = (t..5).map(|k| gamma.powi((k - t) as i32) * costs[k]).sum();
                prop_assert!((r[t] - direct).abs() < 1e-12);
            }
        }

        #[test]
        fn gae_matches_double_loop(
            costs in prop::collection::vec(-5.0f64..5.0, 5),
            values in prop::collection::vec(-5.0f64..5.0, 5),
            gamma in 0.0f64..1.0,
            lambda in 0.0f64..1.0,
        ) {
            let a = gae(&costs, &values, gamma, lambda).unwrap();
            let v = |k: usize| if k < 5 { values[k] } else { 0.0 };
            for t in 0..5 {
                let direct: f64 = (t..5)
                    .map(|k| (gamma * lambda).powi((k - t) as i32) * (costs[k] + gamma * v(k + 1) - values[k]))
                    .sum();
                prop_assert!((a[t] - direct).abs() < 1e-12);
            }
        }

        #[test]
        fn gae_lambda_one_is_return_minus_value(
            costs in prop::collection::vec(-5.0f64..5.0, 1..8),
            gamma in 0.0f64..1.0,
        ) {
            let values: Vec<f64> = costs.iter().map(|c| 0.3 * c + 0.1).collect();
            let a = gae(&costs, &values, gamma, 1.0).unwrap();
            let r = mc_returns(&costs, gamma);
            for t in 0..costs.len() {
                prop_assert!((a[t] - (r[t] - values[t])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normalized_moments() {
        let mut x = vec![1.0, 2.0, 3.0, 10.0];
        normalize(&mut x);
        let mean: f64 = x.iter().sum::<f64>() / 4.0;
        let var: f64 = x.iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-15 && (var - 1.0).abs() < 1e-12);
        let mut c = vec![2.0, 2.0];
        normalize(&mut c);
        assert_eq!(c, vec![0.0, 0.0]);
    }

    #[test]
    fn gae_length_mismatch() {
        assert!(gae(&[1.0], &[1.0, 2.0], 0.9, 0.9).is_err());
    }
}
