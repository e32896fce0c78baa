use std::path::{Path, PathBuf};

use gmsdi_core::data::{DatasetManifest, SynthConfig};
use gmsdi_core::denoiser::TrainConfig;
use gmsdi_core::jobs::{
    execute, replay, AccompanyJob, EvalJob, ExtractJob, GenerateJob, GivenSource, GridSearchJob, JobConfig,
    ModelParams, RunManifest, SamplingParams, SeparateJob, SynthDataJob, TrainJob, RUN_MANIFEST_FILE,
};
use gmsdi_core::Error;

fn quick(mut s: SamplingParams, steps: usize) -> SamplingParams {
    s.steps = steps;
    s
}

fn synth(root: &Path) -> DatasetManifest {
    let job = JobConfig::SynthData(SynthDataJob {
        dataset: SynthConfig { n_clips: 6, clip_length: 1024, seed: 1, sources_per_clip: Some(2), ..Default::default() },
        encoding: Default::default(),
    });
    let m = execute(&job, &root.join("data")).unwrap();
    assert_eq!(m.command, "synth-data");
    DatasetManifest::read(&root.join("data/manifest.txt")).unwrap()
}

fn train(root: &Path) -> PathBuf {
    let job = JobConfig::Train(TrainJob {
        manifest: root.join("data/manifest.txt"),
        vocabulary: Vec::new(),
        model: ModelParams { hidden: 16, ..Default::default() },
        train: TrainConfig { epochs: 2, ..Default::default() },
    });
    let m = execute(&job, &root.join("model")).unwrap();
    assert!(m.outputs.contains_key("model.json"));
    assert!(m.checkpoint_sha256.is_some());
    root.join("model/model.json")
}

#[test]
fn every_command_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let data = synth(root);
    let ckpt = train(root);

    let mut generate = GenerateJob::new(ckpt.clone(), vec!["bass".into(), "drums,guitar".into()]);
    generate.length = 512;
    generate.candidates = 2;
    generate.sampling = quick(generate.sampling, 12);
    let m = execute(&JobConfig::Generate(generate), &root.join("gen")).unwrap();
    for f in ["source0_bass.wav", "source1_drums+guitar.wav", "mixture.wav", "sum.wav"] {
        assert!(m.outputs.contains_key(f), "{f} missing from {:?}", m.outputs.keys());
    }
    assert!(root.join("gen").join(RUN_MANIFEST_FILE).exists());

    let given = GivenSource { path: root.join("gen/source0_bass.wav"), labels: "bass".into() };
    let mut accompany = AccompanyJob::new(ckpt.clone(), vec![given], vec!["piano".into()]);
    accompany.sampling = quick(accompany.sampling, 12);
    let m = execute(&JobConfig::Accompany(accompany), &root.join("acc")).unwrap();
    assert!(m.outputs.contains_key("wanted0_piano.wav"));

    let clip = &data.clips[0];
    let mixture = data.resolve(&clip.mixture);
    let mut separate = SeparateJob::new(ckpt.clone(), mixture.clone(), clip.labels.clone());
    separate.sampling = quick(separate.sampling, 12);
    let m = execute(&JobConfig::Separate(separate), &root.join("sep")).unwrap();
    for l in &clip.labels {
        assert!(m.outputs.contains_key(&format!("{l}.wav")));
    }

    let mut extract = ExtractJob::new(ckpt.clone(), mixture, clip.labels[0].clone(), vec![clip.labels[1].clone()]);
    extract.sampling = quick(extract.sampling, 12);
    let m = execute(&JobConfig::Extract(extract), &root.join("ext")).unwrap();
    assert!(m.outputs.contains_key(&format!("{}.wav", clip.labels[0])));

    let mut grid = GridSearchJob::new(ckpt, root.join("data/manifest.txt"));
    grid.w_grid = vec![3.0];
    grid.max_tasks = Some(2);
    grid.sampling = quick(grid.sampling, 8);
    let m = execute(&JobConfig::Gridsearch(grid), &root.join("grid")).unwrap();
    assert!(m.outputs.contains_key("grid.json") && m.outputs.contains_key("grid.txt"));

    let eval = EvalJob {
        manifest: root.join("data/manifest.txt"),
        estimates: root.join("data/stems"),
        method: "stems".into(),
    };
    let m = execute(&JobConfig::Eval(eval), &root.join("eval")).unwrap();
    assert!(m.outputs.contains_key("eval.json"));
    let text = std::fs::read_to_string(root.join("eval/eval.txt")).unwrap();
    assert!(text.contains("stems"), "{text}");
}

#[test]
fn replay_reproduces_and_detects_a_changed_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let data = synth(root);
    let ckpt = train(root);
    let clip = &data.clips[1];
    let mut job = SeparateJob::new(ckpt.clone(), data.resolve(&clip.mixture), clip.labels.clone());
    job.sampling = quick(job.sampling, 16);
    execute(&JobConfig::Separate(job), &root.join("run")).unwrap();

    let report = replay(&root.join("run").join(RUN_MANIFEST_FILE), &root.join("again")).unwrap();
    assert!(report.identical(), "{:?}", report.mismatches);
    assert_eq!(report.original.outputs, report.replayed.outputs);
    let reread = RunManifest::read(&root.join("again").join(RUN_MANIFEST_FILE)).unwrap();
    assert_eq!(reread.config, report.original.config);

    let mut bytes = std::fs::read(&ckpt).unwrap();
    bytes.push(b'\n');
    std::fs::write(&ckpt, bytes).unwrap();
    let err = replay(&root.join("run").join(RUN_MANIFEST_FILE), &root.join("third")).unwrap_err();
    assert!(matches!(err, Error::Format { .. }), "{err}");
}

#[test]
fn missing_inputs_fail_before_any_output() {
    let dir = tempfile::tempdir().unwrap();
    let job = JobConfig::Separate(SeparateJob::new(
        dir.path().join("nope.json"),
        dir.path().join("nope.wav"),
        vec!["bass".into(), "drums".into()],
    ));
    let out = dir.path().join("out");
    assert!(matches!(execute(&job, &out), Err(Error::Io { .. })));
    assert!(!out.exists());
}
