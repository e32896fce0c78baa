use std::collections::BTreeMap;

use gmsdi_core::data::{oracle_band_separate, synth_clips, Instrument, SynthConfig};
use gmsdi_core::eval::{grid_search_w, si_sdr, si_sdr_improvement, spectral_frechet, FeatureConfig, GridContext, Variant};
use gmsdi_core::gmsdi::{Gmsdi, SeparationTask};
use gmsdi_core::rng::derive_seed;
use gmsdi_core::samplers::{IntegratorConfig, SamplerKind};
use gmsdi_core::score::{CfgConfig, LabelEncoder, OracleField, ScalarPrior, SourceSpec, UNCONDITIONAL_KEY};
use gmsdi_core::{build_sigma_schedule, AudioTensor};
use proptest::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};

fn power_spectrum(x: &[f64]) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf.iter().map(|c| c.norm_sqr()).collect()
}

#[test]
fn stems_stay_inside_their_regions() {
    let clips = synth_clips(&SynthConfig { n_clips: 40, clip_length: 4096, seed: 12, ..Default::default() }).unwrap();
    for clip in &clips {
        for (label, stem) in clip.labels.iter().zip(&clip.stems) {
            let p = power_spectrum(stem.samples());
            let n = p.len();
            let (lo, hi) = label.oracle_region();
            let (mut inside, mut total) = (0.0, 0.0);
            // positive frequencies only; the spectrum is Hermitian
            for (k, e) in p.iter().enumerate().take(n / 2 + 1) {
                let f = k as f64 * 8000.0 / n as f64;
                total += e;
                if f >= lo && f < hi {
                    inside += e;
                }
            }
            let leak = 1.0 - inside / total;
            assert!(leak < 0.01, "{} {:?} leaks {:.4}", clip.id, label, leak);
        }
    }
}

fn single_label_set(label: Instrument, seed: u64, n: usize) -> Vec<AudioTensor> {
    synth_clips(&SynthConfig {
        vocabulary: vec![label],
        n_clips: n,
        clip_length: 4096,
        seed,
        sources_per_clip: Some(1),
        ..Default::default()
    })
    .unwrap()
    .into_iter()
    .map(|c| c.mixture)
    .collect()
}

#[test]
fn frechet_separates_disjoint_bands() {
    let cfg = FeatureConfig::default();
    for trial in 0..20 {
        let a = single_label_set(Instrument::Piano, 100 + trial, 6);
        let b = single_label_set(Instrument::Piano, 200 + trial, 6);
        let c = single_label_set(Instrument::Guitar, 300 + trial, 6);
        let same = spectral_frechet(&a, &b, &cfg).unwrap();
        let other = spectral_frechet(&a, &c, &cfg).unwrap();
        assert!(same < other, "trial {trial}: {same} !< {other}");
    }
    let a = single_label_set(Instrument::Bass, 1, 4);
    let d = spectral_frechet(&a, &a, &cfg).unwrap();
    assert!(d < 1e-6, "{d}");
}

/// SI-SDR from the correlation form `ρ² / (1 − ρ²)`.
fn si_sdr_by_correlation(est: &[f64], reference: &[f64]) -> f64 {
    let dot: f64 = est.iter().zip(reference).map(|(a, b)| a * b).sum();
    let ee: f64 = est.iter().map(|a| a * a).sum();
    let rr: f64 = reference.iter().map(|b| b * b).sum();
    let rho2 = dot * dot / (ee * rr);
    10.0 * (rho2 / (1.0 - rho2)).log10()
}

#[test]
fn improvement_matches_an_independent_formula_on_toy_clips() {
    let clips = synth_clips(&SynthConfig {
        n_clips: 8,
        clip_length: 4096,
        seed: 3,
        sources_per_clip: Some(2),
        ..Default::default()
    })
    .unwrap();
    for clip in &clips {
        let est = oracle_band_separate(&clip.mixture, &clip.labels).unwrap();
        for (e, s) in est.iter().zip(&clip.stems) {
            let want = si_sdr_by_correlation(e.samples(), s.samples())
                - si_sdr_by_correlation(clip.mixture.samples(), s.samples());
            let got = si_sdr_improvement(e, s, &clip.mixture).unwrap();
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
            assert!(got > 10.0);
        }
    }
}

#[test]
fn one_task_one_w_gives_one_cell_with_that_task_score() {
    let labels = ["bass", "drums"];
    let enc = LabelEncoder::new(&labels, 8, 0).unwrap();
    let mut field = OracleField::new();
    field.insert("bass", ScalarPrior::Gaussian { mean: 0.0, var: 0.02 });
    field.insert("drums", ScalarPrior::Gaussian { mean: 0.0, var: 0.01 });
    field.insert(UNCONDITIONAL_KEY, ScalarPrior::Gaussian { mean: 0.0, var: 0.03 });
    let clip = synth_clips(&SynthConfig {
        vocabulary: vec![Instrument::Bass, Instrument::Drums],
        n_clips: 1,
        clip_length: 2048,
        seed: 4,
        sources_per_clip: Some(2),
        ..Default::default()
    })
    .unwrap()
    .remove(0);
    let task = clip.to_task();
    let schedule = build_sigma_schedule(1e-3, 1.0, 7.0, 40).unwrap();
    let sampler = IntegratorConfig::new(SamplerKind::EulerAncestral, 40, 20.0, 6);
    let cfg = CfgConfig::new(0.0, enc.unconditional()).unwrap();
    let ctx = GridContext {
        model: &field,
        encoder: &enc,
        schedule: &schedule,
        sampler: sampler.clone(),
        separator_cfg: cfg.clone(),
        extractor_cfg: cfg.clone(),
    };
    let variant = Variant::Separator { constrained: "drums".into() };
    let report = grid_search_w(&ctx, std::slice::from_ref(&task), &[3.0], &[variant]).unwrap();
    assert_eq!(report.rows.len(), 1);
    assert_eq!(report.rows[0].cells.len(), 1);
    let cell = &report.rows[0].cells[0];

    let seeded = IntegratorConfig { rng_seed: derive_seed(6, 0), ..sampler };
    let cfg3 = cfg.with_w(3.0);
    let g = Gmsdi { model: &field, encoder: &enc, schedule: &schedule, sampler: &seeded, cfg: &cfg3 };
    let specs: Vec<SourceSpec> = task.labels().iter().map(|l| SourceSpec::new(&enc, &[*l]).unwrap()).collect();
    let constrained_index = task.labels().iter().position(|l| *l == "drums").unwrap();
    let est = g
        .separate(&SeparationTask { mixture: task.mixture.clone(), sources: specs, constrained_index })
        .unwrap();
    let mut want = BTreeMap::new();
    for ((label, stem), e) in task.sources.iter().zip(&est) {
        want.insert(label.clone(), si_sdr_improvement(e, stem, &task.mixture).unwrap());
    }
    assert_eq!(cell.per_source, want);
    let mean = want.values().sum::<f64>() / want.len() as f64;
    assert_eq!(cell.mean, Some(mean));
}

proptest! {
    #[test]
    fn si_sdr_ignores_positive_gain(
        reference in prop::collection::vec(-1.0f64..1.0, 8..64),
        noise in prop::collection::vec(-0.3f64..0.3, 64),
        gain in 0.01f64..100.0,
    ) {
        let n = reference.len();
        prop_assume!(reference.iter().map(|v| v * v).sum::<f64>() > 1e-3);
        let r = AudioTensor::mono(reference.clone(), 8000).unwrap();
        let e = AudioTensor::mono(reference.iter().zip(&noise[..n]).map(|(a, b)| a + b).collect(), 8000).unwrap();
        let base = si_sdr(&e, &r).unwrap();
        prop_assert!((si_sdr(&e.scale(gain), &r).unwrap() - base).abs() < 1e-6);
    }
}
