use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Discretized noise ladder. `sigmas` holds `n_steps + 1` values: the
/// interpolated levels from `sigma_max` down to `sigma_min`, then a trailing
/// zero meaning "return the final denoised estimate".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub rho: f64,
    pub n_steps: usize,
    sigmas: Vec<f64>,
}

impl NoiseSchedule {
    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    /// Number of transitions an integrator performs (one per adjacent pair).
    pub fn transitions(&self) -> usize {
        self.sigmas.len() - 1
    }
}

/// Builds the ρ-interpolated ladder
/// `σ_i = (σ_max^(1/ρ) + i/(n−1) · (σ_min^(1/ρ) − σ_max^(1/ρ)))^ρ`
/// for `i in 0..n`, followed by 0. With ρ = 1 the spacing is linear.
pub fn build_sigma_schedule(
    sigma_min: f64,
    sigma_max: f64,
    rho: f64,
    n_steps: usize,
) -> Result<NoiseSchedule> {
    if !(sigma_min > 0.0 && sigma_min < sigma_max && sigma_max.is_finite()) {
        return Err(Error::config(format!(
            "need 0 < sigma_min < sigma_max, got sigma_min={sigma_min}, sigma_max={sigma_max}"
        )));
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::config(format!("rho must be positive, got {rho}")));
    }
    if n_steps < 2 {
        return Err(Error::config(format!("n_steps must be >= 2, got {n_steps}")));
    }
    let hi = sigma_max.powf(1.0 / rho);
    let lo = sigma_min.powf(1.0 / rho);
    let last = (n_steps - 1) as f64;
    let mut sigmas: Vec<f64> = (0..n_steps)
        .map(|i| (hi + (i as f64 / last) * (lo - hi)).powf(rho))
        .collect();
    // pin the endpoints against powf round-off
    sigmas[0] = sigma_max;
    sigmas[n_steps - 1] = sigma_min;
    sigmas.push(0.0);
    if sigmas.windows(2).take(n_steps - 1).any(|w| w[1] >= w[0]) {
        return Err(Error::Schedule(
            "interpolated ladder is not strictly decreasing".into(),
        ));
    }
    Ok(NoiseSchedule {
        sigma_min,
        sigma_max,
        rho,
        n_steps,
        sigmas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_three_steps() {
        let s = build_sigma_schedule(0.1, 10.0, 1.0, 3).unwrap();
        assert_eq!(s.sigmas().len(), 4);
        assert_eq!(s.sigmas()[0], 10.0);
        assert!((s.sigmas()[1] - 5.05).abs() < 1e-12);
        assert_eq!(s.sigmas()[2], 0.1);
        assert_eq!(s.sigmas()[3], 0.0);
    }

    #[test]
    fn endpoints_only() {
        let s = build_sigma_schedule(0.1, 10.0, 7.0, 2).unwrap();
        assert_eq!(s.sigmas(), &[10.0, 0.1, 0.0]);
    }

    #[test]
    fn rho_seven_matches_high_precision_reference() {
        // 40-digit evaluation of the interpolation formula
        let expected = [
            10.0,
            4.070104040863517,
            1.4507321135661915,
            0.43245280305410405,
            0.1,
            0.0,
        ];
        let s = build_sigma_schedule(0.1, 10.0, 7.0, 5).unwrap();
        for (a, b) in s.sigmas().iter().zip(expected) {
            assert!((a - b).abs() <= 1e-12 * b.max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn rho_one_is_uniform() {
        let s = build_sigma_schedule(1e-4, 1.0, 1.0, 600).unwrap();
        let step = (1.0 - 1e-4) / 599.0;
        for w in s.sigmas()[..600].windows(2) {
            assert!(((w[0] - w[1]) - step).abs() / step < 1e-12 * 600.0);
        }
        for (i, v) in s.sigmas()[..600].iter().enumerate() {
            let expect = 1.0 - i as f64 * step;
            assert!((v - expect).abs() <= 1e-12 * expect);
        }
    }

    #[test]
    fn rejects_bad_configuration() {
        assert!(build_sigma_schedule(0.0, 1.0, 1.0, 3).is_err());
        assert!(build_sigma_schedule(2.0, 1.0, 1.0, 3).is_err());
        assert!(build_sigma_schedule(0.1, 1.0, 1.0, 1).is_err());
        assert!(build_sigma_schedule(0.1, 1.0, 0.0, 3).is_err());
    }
}
