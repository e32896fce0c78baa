use gmsdi_demo::{gaussian_generation, ladder, ToyModel};

#[test]
fn coupled_generation_keeps_the_mixture_consistent() {
    let g = gaussian_generation([(1.0, 0.25), (-1.0, 0.25)], 1.0, 200, 4000, 3).unwrap();
    assert_eq!(g.sources.len(), 2);
    assert!((g.sources[0].mean - 1.0).abs() < 0.05, "{}", g.sources[0].mean);
    assert!((g.sources[1].mean + 1.0).abs() < 0.05, "{}", g.sources[1].mean);
    assert!(g.residual < 0.05, "{}", g.residual);
    assert_eq!(g.mixture.counts.iter().sum::<usize>(), 4000);

    // without coupling the sum of sources ignores the mixture
    let free = gaussian_generation([(1.0, 0.25), (-1.0, 0.25)], 0.0, 200, 4000, 3).unwrap();
    assert!(free.residual > 0.5, "{}", free.residual);
}

#[test]
fn ladder_splits_every_transition() {
    let l = ladder(1e-3, 10.0, 7.0, 30).unwrap();
    assert_eq!(l.sigmas.len(), 31);
    assert_eq!(*l.sigmas.last().unwrap(), 0.0);
    for ((w, d), u) in l.sigmas.windows(2).zip(&l.down).zip(&l.up) {
        assert!((d * d + u * u - w[1] * w[1]).abs() < 1e-12);
    }
}

#[test]
fn toy_model_separates_a_clip() {
    let model = ToyModel::train(48, 4, 1).unwrap();
    let s = model.separate(["bass", "piano"], 5, 120, 3.0).unwrap();
    assert_eq!(s.labels.len(), 2);
    assert_eq!(s.estimates.len(), 2);
    assert!(s.si_sdri.iter().all(|v| v.is_finite()));
    assert!(s.oracle_si_sdri.iter().all(|v| *v > 10.0));
    assert!(model.separate(["bass", "bass"], 5, 10, 3.0).is_err());
}
