mod common;

use common::*;
use gmsdi_core::gmsdi::{
    rejection_by_norm, Gamma, GammaConfig, Gmsdi, PartialGenConfig, SeparationTask, MIXTURE_ID,
};
use gmsdi_core::rng::stream;
use gmsdi_core::rng::standard_normals;
use gmsdi_core::score::SourceSpec;
use gmsdi_core::{AudioTensor, Partition};
use proptest::prelude::*;

const RUNS: usize = 2000;

fn spec(enc: &gmsdi_core::score::LabelEncoder, prompt: &str) -> SourceSpec {
    SourceSpec::new(enc, &prompt.split(',').collect::<Vec<_>>()).unwrap()
}

#[test]
fn one_source_without_coupling_is_plain_sampling() {
    let (enc, field) = gaussian_oracle(&["a"], &[("a", 0.3, 0.2)]);
    let (schedule, sampler) = (ladder(60), ancestral(60, 5));
    let cfg = no_guidance(&enc);
    let g = Gmsdi { model: &field, encoder: &enc, schedule: &schedule, sampler: &sampler, cfg: &cfg };
    let template = constant(0.0, 64);
    let a = spec(&enc, "a");
    let (sources, y) = g.total_generate(&[a.clone()], &GammaConfig::infinite(), &template).unwrap();
    assert_eq!(sources[0], g.sample(&a.embedding, &template, 1).unwrap());
    // the one-source mixture prompt is the source prompt itself
    assert_eq!(y, g.sample(&a.embedding, &template, MIXTURE_ID).unwrap());
}

#[test]
fn singleton_partition_equals_total_generation() {
    let (enc, field) = gaussian_oracle(&["a", "b"], &[("a", 1.0, 0.25), ("b", -1.0, 0.25), ("a,b", 0.0, 0.5)]);
    let (schedule, sampler) = (ladder(80), ancestral(80, 2));
    let cfg = no_guidance(&enc);
    let g = Gmsdi { model: &field, encoder: &enc, schedule: &schedule, sampler: &sampler, cfg: &cfg };
    let specs = [spec(&enc, "a"), spec(&enc, "b")];
    let template = constant(0.0, 100);
    let gamma = GammaConfig::default();
    let total = g.total_generate(&specs, &gamma, &template).unwrap();
    let part = g
        .total_generate_partition(&Partition::singletons(2), &specs, &gamma, &template)
        .unwrap();
    assert_eq!(total, part);
}

#[test]
fn two_subset_partition_follows_the_coupled_mean_flow() {
    let (mu1, v1, mu2, v2, muy, vy) = (1.0, 0.25, -0.5, 0.5, 1.0, 0.75);
    let (enc, field) = gaussian_oracle(
        &["a", "b", "c"],
        &[("a", mu1, v1), ("b,c", mu2, v2), ("a,b,c", muy, vy)],
    );
    let (schedule, sampler) = (ladder(300), ancestral(300, 11));
    let cfg = no_guidance(&enc);
    let g = Gmsdi { model: &field, encoder: &enc, schedule: &schedule, sampler: &sampler, cfg: &cfg };
    let specs = [spec(&enc, "a"), spec(&enc, "b"), spec(&enc, "c")];
    let partition = Partition::new(vec![vec![0], vec![1, 2]], 3).unwrap();
    let (subs, y) = g
        .total_generate_partition(&partition, &specs, &GammaConfig::default(), &constant(0.0, RUNS))
        .unwrap();
    let expect = mean_flow(
        |s, m| {
            let r = (m[2] - m[0] - m[1]) / (s * s);
            vec![gauss(mu1, v1, s, m[0]) + r, gauss(mu2, v2, s, m[1]) + r, gauss(muy, vy, s, m[2])]
        },
        &[0.0, 0.0, 0.0],
        SIGMA_MAX,
        SIGMA_MIN,
        20_000,
    );
    for (got, want) in [mean(&subs[0]), mean(&subs[1]), mean(&y)].iter().zip(&expect) {
        assert!((got - want).abs() < 0.05, "{got} vs {want}");
    }
}

#[test]
fn accompaniment_of_a_constant_follows_the_coupled_mean_flow() {
    let (c, muw, vw, muy, vy) = (1.0, 0.0, 0.25, 0.5, 0.34);
    let (enc, field) = gaussian_oracle(&["g", "w"], &[("w", muw, vw), ("g,w", muy, vy)]);
    let (schedule, sampler) = (ladder(300), ancestral(300, 4));
    let cfg = no_guidance(&enc);
    let g = Gmsdi { model: &field, encoder: &enc, schedule: &schedule, sampler: &sampler, cfg: &cfg };
    let given = constant(c, RUNS);
    let gamma = GammaConfig::uniform(Gamma::Scaled(1.0), Gamma::Scaled(1.0));
    let out = g
        .partial_generate(
            &[(given.clone(), spec(&enc, "g"))],
            &[spec(&enc, "w")],
            PartialGenConfig::default(),
            &gamma,
            &given,
        )
        .unwrap();
    assert_eq!(out.given, vec![given]);
    let expect = mean_flow(
        |s, m| {
            let r = (m[0] - c - m[1]) / (s * s);
            vec![gauss(muy, vy, s, m[0]) - r, gauss(muw, vw, s, m[1]) + r]
        },
        &[0.0, 0.0],
        SIGMA_MAX,
        SIGMA_MIN,
        20_000,
    );
    let got = mean(&out.wanted[0]);
    assert!((got - expect[1]).abs() < 0.05, "{got} vs {}", expect[1]);
    // the wanted source is pulled away from its own prior mean
    assert!(expect[1] < -0.1);
}

fn separation_setup() -> (gmsdi_core::score::LabelEncoder, gmsdi_core::score::OracleField) {
    gaussian_oracle(&["a", "b"], &[("a", 0.0, 1.0), ("b", 0.0, 1.0)])
}

#[test]
fn symmetric_separation_of_silence_is_centered() {
    let (enc, field) = separation_setup();
    let (schedule, sampler) = (ladder(200), ancestral(200, 8));
    let cfg = no_guidance(&enc);
    let g = Gmsdi { model: &field, encoder: &enc, schedule: &schedule, sampler: &sampler, cfg: &cfg };
    let task = SeparationTask {
        mixture: constant(0.0, RUNS),
        sources: vec![spec(&enc, "a"), spec(&enc, "b")],
        constrained_index: 1,
    };
    let out = g.separate(&task).unwrap();
    assert!(mean(&out[0]).abs() < 0.05);
    assert!(mean(&out[1]).abs() < 0.05);
}

#[test]
fn extraction_recovers_the_posterior_mean() {
    let (enc, field) = separation_setup();
    let (schedule, sampler) = (ladder(200), ancestral(200, 9));
    let cfg = no_guidance(&enc);
    let g = Gmsdi { model: &field, encoder: &enc, schedule: &schedule, sampler: &sampler, cfg: &cfg };
    let x = g.extract(&constant(2.0, RUNS), &spec(&enc, "a"), &["b"]).unwrap();
    assert!((mean(&x) - 1.0).abs() < 0.05, "{}", mean(&x));
}

#[test]
fn rejection_picks_the_loudest_of_a_random_batch() {
    let mut rng = stream(42, 0, 0);
    let batch: Vec<AudioTensor> = (0..100)
        .map(|i| {
            let scale = 0.5 + (i % 17) as f64 / 10.0;
            let v = standard_normals(&mut rng, 32).into_iter().map(|x| scale * x).collect();
            AudioTensor::mono(v, 8000).unwrap()
        })
        .collect();
    let mut best = 0;
    let mut best_energy = -1.0;
    for (i, c) in batch.iter().enumerate() {
        let e: f64 = c.samples().iter().map(|v| v * v).sum();
        if e > best_energy {
            best_energy = e;
            best = i;
        }
    }
    let (i, picked) = rejection_by_norm(&batch).unwrap();
    assert_eq!(i, best);
    assert_eq!(picked, &batch[best]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn separated_stems_rebuild_the_mixture(
        // mixtures carry at most float-32 precision, as when read from WAV
        y in prop::collection::vec(-3.0f32..3.0, 1..40),
        seed in 0u64..1000,
        constrained in 0usize..3,
    ) {
        let (enc, field) = gaussian_oracle(
            &["a", "b", "c"],
            &[("a", 0.5, 1.0), ("b", -0.2, 0.5), ("c", 0.0, 2.0)],
        );
        let (schedule, sampler) = (ladder(10), ancestral(10, seed));
        let cfg = no_guidance(&enc);
        let g = Gmsdi { model: &field, encoder: &enc, schedule: &schedule, sampler: &sampler, cfg: &cfg };
        let mixture = AudioTensor::mono(y.into_iter().map(f64::from).collect(), 8000).unwrap();
        let task = SeparationTask {
            mixture: mixture.clone(),
            sources: vec![spec(&enc, "a"), spec(&enc, "b"), spec(&enc, "c")],
            constrained_index: constrained,
        };
        let out = g.separate(&task).unwrap();
        prop_assert_eq!(out.len(), 3);
        prop_assert_eq!(gmsdi_core::mix(&out).unwrap(), mixture);
    }

    #[test]
    fn rejection_choice_has_maximal_norm(
        norms in prop::collection::vec(0.0f64..5.0, 1..30),
    ) {
        let batch: Vec<AudioTensor> = norms
            .iter()
            .map(|&n| AudioTensor::mono(vec![n, 0.0], 8000).unwrap())
            .collect();
        let (i, _) = rejection_by_norm(&batch).unwrap();
        prop_assert!(norms.iter().all(|&n| n <= norms[i]));
        prop_assert!(norms[..i].iter().all(|&n| n < norms[i]));
    }
}
