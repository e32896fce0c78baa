use crate::audio::AudioTensor;
use crate::error::{Error, Result};

/// Ceiling (and, for a silent estimate, negated floor) of reported SI-SDR.
pub const SI_SDR_CAP_DB: f64 = 100.0;

/// Scale-invariant SDR in dB. The reference is rescaled by
/// `α = ⟨ŝ, s⟩ / ‖s‖²`; the value is `10 log10(‖αs‖² / ‖αs − ŝ‖²)`.
pub fn si_sdr(estimate: &AudioTensor, reference: &AudioTensor) -> Result<f64> {
    estimate.ensure_same_shape(reference)?;
    let ref_energy = reference.norm_sq();
    if !(ref_energy > f64::MIN_POSITIVE) {
        return Err(Error::UndefinedMetric("reference is silent".into()));
    }
    let alpha = estimate.dot(reference)? / ref_energy;
    let mut target = 0.0;
    let mut error = 0.0;
    for (e, r) in estimate.samples().iter().zip(reference.samples()) {
        let t = alpha * r;
        target += t * t;
        error += (t - e) * (t - e);
    }
    if !(target.is_finite() && error.is_finite()) {
        return Err(Error::UndefinedMetric("estimate energy overflows".into()));
    }
    if target == 0.0 {
        // silent or orthogonal estimate
        return Ok(-SI_SDR_CAP_DB);
    }
    if error == 0.0 {
        return Ok(SI_SDR_CAP_DB);
    }
    Ok((10.0 * (target / error).log10()).clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB))
}

/// SI-SDR gain over using the mixture itself as the estimate.
pub fn si_sdr_improvement(
    estimate: &AudioTensor,
    reference: &AudioTensor,
    mixture: &AudioTensor,
) -> Result<f64> {
    Ok(si_sdr(estimate, reference)? - si_sdr(mixture, reference)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(v: Vec<f64>) -> AudioTensor {
        AudioTensor::mono(v, 8000).unwrap()
    }

    #[test]
    fn perfect_and_scaled_estimates_hit_the_cap() {
        let r = t(vec![0.5, -0.25, 0.125, 1.0]);
        assert_eq!(si_sdr(&r, &r).unwrap(), SI_SDR_CAP_DB);
        assert_eq!(si_sdr(&r.scale(2.0), &r).unwrap(), SI_SDR_CAP_DB);
    }

    #[test]
    fn orthogonal_noise_at_tenth_energy_is_ten_db() {
        let r = t(vec![1.0, 1.0, 0.0, 0.0]);
        // ‖n‖² = 0.2 = ‖r‖²/10, ⟨n, r⟩ = 0
        let a = 0.1f64.sqrt();
        let est = t(vec![1.0 + a, 1.0 - a, 0.0, 0.0]);
        assert!((si_sdr(&est, &r).unwrap() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn improvement_of_mixture_is_zero() {
        let r = t(vec![0.3, 0.1, -0.2, 0.4]);
        let m = t(vec![0.5, -0.1, 0.0, 0.2]);
        assert_eq!(si_sdr_improvement(&m, &r, &m).unwrap(), 0.0);
        assert!(si_sdr_improvement(&r, &r, &m).unwrap() > 0.0);
    }

    #[test]
    fn silent_reference_is_undefined() {
        let z = t(vec![0.0; 4]);
        assert!(matches!(si_sdr(&t(vec![1.0; 4]), &z), Err(Error::UndefinedMetric(_))));
        assert_eq!(si_sdr(&z, &t(vec![1.0; 4])).unwrap(), -SI_SDR_CAP_DB);
    }

    proptest! {
        #[test]
        fn scale_invariant(
            r in prop::collection::vec(-1.0f64..1.0, 16),
            n in prop::collection::vec(-0.3f64..0.3, 16),
            k in 0.01f64..100.0,
        ) {
            prop_assume!(r.iter().map(|v| v * v).sum::<f64>() > 1e-3);
            let reference = t(r.clone());
            let est = t(r.iter().zip(&n).map(|(a, b)| a + b).collect());
            let base = si_sdr(&est, &reference).unwrap();
            let scaled = si_sdr(&est.scale(k), &reference).unwrap();
            prop_assert!((base - scaled).abs() < 1e-6);
        }

        #[test]
        fn permutation_invariant(
            r in prop::collection::vec(-1.0f64..1.0, 12),
            n in prop::collection::vec(-0.3f64..0.3, 12),
            rot in 0usize..12,
        ) {
            prop_assume!(r.iter().map(|v| v * v).sum::<f64>() > 1e-3);
            let est: Vec<f64> = r.iter().zip(&n).map(|(a, b)| a + b).collect();
            let base = si_sdr(&t(est.clone()), &t(r.clone())).unwrap();
            let mut perm: Vec<usize> = (0..12).collect();
            perm.rotate_left(rot);
            perm.swap(0, 5);
            let pr: Vec<f64> = perm.iter().map(|&i| r[i]).collect();
            let pe: Vec<f64> = perm.iter().map(|&i| est[i]).collect();
            let shuffled = si_sdr(&t(pe), &t(pr)).unwrap();
            prop_assert!((base - shuffled).abs() < 1e-9);
        }
    }
}
