//! FFT helpers shared by the denoiser, the synthetic dataset and the
//! evaluation features.

use std::cell::RefCell;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub type Spectrum = Vec<Complex<f64>>;

/// Unnormalized forward DFT of a real signal.
pub fn fft(x: &[f64]) -> Spectrum {
    let mut buf: Spectrum = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()).process(&mut buf));
    buf
}

/// Inverse of [`fft`], keeping the real part.
pub fn ifft_real(mut spec: Spectrum) -> Vec<f64> {
    let n = spec.len();
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n).process(&mut spec));
    let inv = 1.0 / n as f64;
    spec.into_iter().map(|c| c.re * inv).collect()
}

/// Frequency in Hz represented by DFT bin `k` of an `n`-point transform
/// (negative-frequency bins fold onto their positive twin).
pub fn bin_frequency(k: usize, n: usize, sample_rate: u32) -> f64 {
    let folded = k.min(n - k);
    folded as f64 * sample_rate as f64 / n as f64
}

/// Band index of each DFT bin when `0..nyquist` is cut into `n_bands`
/// equal-width bands.
pub fn linear_band_map(n: usize, sample_rate: u32, n_bands: usize) -> Vec<usize> {
    let nyquist = sample_rate as f64 / 2.0;
    (0..n)
        .map(|k| {
            let f = bin_frequency(k, n, sample_rate);
            ((f / nyquist * n_bands as f64) as usize).min(n_bands - 1)
        })
        .collect()
}

/// Zero-phase brick-wall band-pass keeping `lo_hz <= f < hi_hz`.
pub fn band_pass(x: &[f64], sample_rate: u32, lo_hz: f64, hi_hz: f64) -> Vec<f64> {
    let n = x.len();
    let mut spec = fft(x);
    for (k, c) in spec.iter_mut().enumerate() {
        let f = bin_frequency(k, n, sample_rate);
        if f < lo_hz || f >= hi_hz {
            *c = Complex::new(0.0, 0.0);
        }
    }
    ifft_real(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let x: Vec<f64> = (0..64).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let y = ifft_real(fft(&x));
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn band_map_is_symmetric() {
        let m = linear_band_map(16, 8000, 4);
        assert_eq!(m[0], 0);
        assert_eq!(m[8], 3);
        for k in 1..16 {
            assert_eq!(m[k], m[16 - k]);
        }
    }

    #[test]
    fn band_pass_keeps_in_band_tone() {
        let sr = 8000;
        let n = 800;
        let tone: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 100.0 * i as f64 / sr as f64).sin())
            .collect();
        let kept = band_pass(&tone, sr, 50.0, 200.0);
        let dropped = band_pass(&tone, sr, 200.0, 400.0);
        for (a, b) in tone.iter().zip(&kept) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(dropped.iter().all(|v| v.abs() < 1e-9));
    }
}
