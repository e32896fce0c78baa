//! Line-oriented dataset manifest and the loaders built on it.
//!
//! ```text
//! gmsdi-dataset	1
//! sample_rate	8000
//! clip_length	16384
//! seed	7
//! clip	mixtures/clip00000.wav	bass,drums	stems/clip00000/bass.wav,stems/clip00000/drums.wav
//! clip	mixtures/clip00001.wav	piano	-
//! ```
//!
//! Paths are relative to the manifest's directory.

use std::path::{Path, PathBuf};

use super::synth::{synth_clip, SynthConfig};
use super::wav::{read_wav, write_wav, WavEncoding};
use crate::audio::AudioTensor;
use crate::denoiser::TrainingExample;
use crate::error::{Error, Result};
use crate::eval::BenchmarkTask;
use crate::score::LabelEncoder;

pub const MANIFEST_HEADER: &str = "gmsdi-dataset";
pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct ClipEntry {
    pub mixture: PathBuf,
    pub labels: Vec<String>,
    /// Evaluation-only ground truth, one path per label.
    pub stems: Option<Vec<PathBuf>>,
}

impl ClipEntry {
    /// File stem of the mixture path.
    pub fn id(&self) -> String {
        self.mixture
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    /// Directory that relative clip paths resolve against.
    pub root: PathBuf,
    pub sample_rate: u32,
    pub clip_length: usize,
    pub seed: u64,
    pub clips: Vec<ClipEntry>,
}

fn field_err(line: usize, message: impl Into<String>) -> Error {
    Error::format(format!("manifest line {line}"), message)
}

impl DatasetManifest {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{MANIFEST_HEADER}\t{MANIFEST_VERSION}\nsample_rate\t{}\nclip_length\t{}\nseed\t{}\n",
            self.sample_rate, self.clip_length, self.seed
        );
        let path = |p: &PathBuf| p.to_string_lossy().replace('\\', "/");
        for c in &self.clips {
            let stems = match &c.stems {
                Some(s) => s.iter().map(path).collect::<Vec<_>>().join(","),
                None => "-".to_string(),
            };
            out.push_str(&format!(
                "clip\t{}\t{}\t{}\n",
                path(&c.mixture),
                c.labels.join(","),
                stems
            ));
        }
        out
    }

    pub fn parse(text: &str, root: &Path) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
            .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
        let (n, header) = lines
            .next()
            .ok_or_else(|| Error::format("manifest header", "empty manifest"))?;
        let mut parts = header.split('\t');
        if parts.next() != Some(MANIFEST_HEADER) {
            return Err(field_err(n, format!("expected '{MANIFEST_HEADER}' header")));
        }
        let version: u32 = parts
            .next()
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| field_err(n, "missing version"))?;
        if version != MANIFEST_VERSION {
            return Err(Error::format(
                "manifest version",
                format!("unsupported version {version}"),
            ));
        }
        let mut sample_rate = None;
        let mut clip_length = None;
        let mut seed = None;
        let mut clips = Vec::new();
        for (n, line) in lines {
            let cols: Vec<&str> = line.split('\t').collect();
            let num = |v: Option<&&str>| -> Result<u64> {
                v.and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| field_err(n, format!("bad value for '{}'", cols[0])))
            };
            match cols[0] {
                "sample_rate" => sample_rate = Some(num(cols.get(1))? as u32),
                "clip_length" => clip_length = Some(num(cols.get(1))? as usize),
                "seed" => seed = Some(num(cols.get(1))?),
                "clip" => {
                    if cols.len() != 4 {
                        return Err(field_err(n, format!("clip line has {} columns, expected 4", cols.len())));
                    }
                    let labels: Vec<String> = cols[2]
                        .split(',')
                        .map(|l| l.trim().to_lowercase())
                        .filter(|l| !l.is_empty())
                        .collect();
                    if labels.is_empty() {
                        return Err(field_err(n, "clip without labels"));
                    }
                    let stems = match cols[3].trim() {
                        "-" => None,
                        s => {
                            let v: Vec<PathBuf> = s.split(',').map(PathBuf::from).collect();
                            if v.len() != labels.len() {
                                return Err(field_err(n, "stem count differs from label count"));
                            }
                            Some(v)
                        }
                    };
                    clips.push(ClipEntry {
                        mixture: PathBuf::from(cols[1]),
                        labels,
                        stems,
                    });
                }
                other => return Err(field_err(n, format!("unknown key '{other}'"))),
            }
        }
        Ok(Self {
            root: root.to_path_buf(),
            sample_rate: sample_rate.ok_or_else(|| Error::format("sample_rate", "missing"))?,
            clip_length: clip_length.ok_or_else(|| Error::format("clip_length", "missing"))?,
            seed: seed.ok_or_else(|| Error::format("seed", "missing"))?,
            clips,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.root.join(p)
    }

    fn load(&self, p: &Path) -> Result<AudioTensor> {
        let audio = read_wav(&self.resolve(p))?;
        if audio.sample_rate() != self.sample_rate {
            return Err(Error::format(
                "sample_rate",
                format!("{} is at {} Hz, manifest says {}", p.display(), audio.sample_rate(), self.sample_rate),
            ));
        }
        Ok(audio)
    }

    /// Checks that every file parses, labels belong to `vocabulary`, and
    /// stems (when present) sum to their mixture within `1e-6` relative.
    pub fn validate<S: AsRef<str>>(&self, vocabulary: &[S]) -> Result<()> {
        for clip in &self.clips {
            for l in &clip.labels {
                if !vocabulary.iter().any(|v| v.as_ref().eq_ignore_ascii_case(l)) {
                    return Err(Error::Vocabulary {
                        label: l.clone(),
                        known: vocabulary.iter().map(|v| v.as_ref().to_string()).collect(),
                    });
                }
            }
            let mixture = self.load(&clip.mixture)?;
            if let Some(stems) = &clip.stems {
                let mut sum = mixture.zeros_like();
                for s in stems {
                    sum.add_scaled(1.0, &self.load(s)?)?;
                }
                let rel = sum.sub(&mixture)?.norm() / mixture.norm().max(f64::MIN_POSITIVE);
                if rel > 1e-6 {
                    return Err(Error::format(
                        "stems",
                        format!("{}: stems differ from mixture by {rel:.2e} relative", clip.id()),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Training view: mixtures and labels only.
    pub fn mixtures(&self) -> MixtureLoader<'_> {
        MixtureLoader { manifest: self }
    }

    /// Evaluation view: clips with stems, as separation tasks.
    pub fn benchmark_tasks(&self) -> Result<Vec<BenchmarkTask>> {
        self.clips
            .iter()
            .filter_map(|c| c.stems.as_ref().map(|s| (c, s)))
            .map(|(clip, stems)| {
                Ok(BenchmarkTask {
                    id: clip.id(),
                    mixture: self.load(&clip.mixture)?,
                    sources: clip
                        .labels
                        .iter()
                        .cloned()
                        .zip(stems.iter().map(|s| self.load(s)).collect::<Result<Vec<_>>>()?)
                        .collect(),
                })
            })
            .collect()
    }
}

/// Yields `(mixture, labels)` pairs. It never opens stem files.
pub struct MixtureLoader<'a> {
    manifest: &'a DatasetManifest,
}

impl MixtureLoader<'_> {
    pub fn iter(&self) -> impl Iterator<Item = Result<(AudioTensor, Vec<String>)>> + '_ {
        self.manifest
            .clips
            .iter()
            .map(|c| Ok((self.manifest.load(&c.mixture)?, c.labels.clone())))
    }

    pub fn len(&self) -> usize {
        self.manifest.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.clips.is_empty()
    }

    pub fn training_examples(&self, encoder: &LabelEncoder) -> Result<Vec<TrainingExample>> {
        self.iter()
            .map(|item| {
                let (mixture, labels) = item?;
                Ok(TrainingExample {
                    mixture,
                    embedding: encoder.encode(&labels)?,
                })
            })
            .collect()
    }
}

/// Synthesizes a dataset into `out_dir`: float-32 mixtures under
/// `mixtures/`, stems under `stems/<clip>/`, and `manifest.txt`.
pub fn synth_dataset(config: &SynthConfig, out_dir: &Path, encoding: WavEncoding) -> Result<DatasetManifest> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .clamp(1, config.n_clips.max(1));
    let make = |i: usize| -> Result<ClipEntry> {
        let clip = synth_clip(config, i)?;
        let mixture = PathBuf::from(format!("mixtures/{}.wav", clip.id));
        write_wav(&out_dir.join(&mixture), &clip.mixture, encoding)?;
        let mut stems = Vec::new();
        for (label, stem) in clip.labels.iter().zip(&clip.stems) {
            let p = PathBuf::from(format!("stems/{}/{}.wav", clip.id, label));
            write_wav(&out_dir.join(&p), stem, encoding)?;
            stems.push(p);
        }
        Ok(ClipEntry {
            mixture,
            labels: clip.labels.iter().map(|l| l.label().to_string()).collect(),
            stems: Some(stems),
        })
    };
    let clips: Vec<ClipEntry> = if workers <= 1 {
        (0..config.n_clips).map(make).collect::<Result<_>>()?
    } else {
        let idx: Vec<usize> = (0..config.n_clips).collect();
        let chunk = idx.len().div_ceil(workers);
        std::thread::scope(|s| {
            let handles: Vec<_> = idx
                .chunks(chunk)
                .map(|c| s.spawn(move || c.iter().map(|&i| make(i)).collect::<Result<Vec<_>>>()))
                .collect();
            let mut all = Vec::new();
            for h in handles {
                all.extend(h.join().expect("synthesis worker panicked")?);
            }
            Ok::<_, Error>(all)
        })?
    };
    let manifest = DatasetManifest {
        root: out_dir.to_path_buf(),
        sample_rate: config.sample_rate,
        clip_length: config.clip_length,
        seed: config.seed,
        clips,
    };
    manifest.write(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::Instrument;

    fn cfg(n: usize) -> SynthConfig {
        SynthConfig {
            n_clips: n,
            clip_length: 2048,
            seed: 11,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn text_roundtrip() {
        let m = DatasetManifest {
            root: PathBuf::from("/data"),
            sample_rate: 8000,
            clip_length: 16,
            seed: 3,
            clips: vec![
                ClipEntry {
                    mixture: "mixtures/a.wav".into(),
                    labels: vec!["bass".into(), "drums".into()],
                    stems: Some(vec!["stems/a/bass.wav".into(), "stems/a/drums.wav".into()]),
                },
                ClipEntry {
                    mixture: "mixtures/b.wav".into(),
                    labels: vec!["piano".into()],
                    stems: None,
                },
            ],
        };
        assert_eq!(DatasetManifest::parse(&m.to_text(), Path::new("/data")).unwrap(), m);
    }

    #[test]
    fn malformed_manifests() {
        let root = Path::new(".");
        assert!(DatasetManifest::parse("", root).is_err());
        assert!(DatasetManifest::parse("gmsdi-dataset\t2\n", root).is_err());
        let e = DatasetManifest::parse(
            "gmsdi-dataset\t1\nsample_rate\t8000\nclip_length\t4\nseed\t0\nclip\ta.wav\n",
            root,
        )
        .unwrap_err();
        assert!(matches!(e, Error::Format { .. }));
        assert!(DatasetManifest::parse("gmsdi-dataset\t1\nclip_length\t4\nseed\t0\n", root).is_err());
    }

    #[test]
    fn written_dataset_validates_and_is_byte_identical_across_runs() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ma = synth_dataset(&cfg(5), a.path(), WavEncoding::Float32).unwrap();
        synth_dataset(&cfg(5), b.path(), WavEncoding::Float32).unwrap();
        ma.validate(&["bass", "drums", "guitar", "piano"]).unwrap();
        let read = DatasetManifest::read(&a.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(read, ma);
        for clip in &ma.clips {
            let mut files = vec![clip.mixture.clone()];
            files.extend(clip.stems.clone().unwrap());
            for f in files {
                assert_eq!(
                    std::fs::read(a.path().join(&f)).unwrap(),
                    std::fs::read(b.path().join(&f)).unwrap()
                );
            }
        }
        assert_eq!(
            std::fs::read(a.path().join(MANIFEST_FILE)).unwrap(),
            std::fs::read(b.path().join(MANIFEST_FILE)).unwrap()
        );
        let err = ma.validate(&["bass"]);
        assert!(err.is_err() || ma.clips.iter().all(|c| c.labels == ["bass"]));
    }

    #[test]
    fn loader_never_touches_stems() {
        let dir = tempfile::tempdir().unwrap();
        let m = synth_dataset(&cfg(4), dir.path(), WavEncoding::Float32).unwrap();
        for clip in &m.clips {
            for s in clip.stems.as_ref().unwrap() {
                std::fs::remove_file(dir.path().join(s)).unwrap();
            }
        }
        let enc = LabelEncoder::new(&Instrument::ALL.map(|i| i.label()), 16, 0).unwrap();
        let ex = m.mixtures().training_examples(&enc).unwrap();
        assert_eq!(ex.len(), 4);
        assert!(m.benchmark_tasks().is_err());
    }

    #[test]
    fn empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let m = synth_dataset(&cfg(0), dir.path(), WavEncoding::Float32).unwrap();
        assert!(m.clips.is_empty());
        assert!(DatasetManifest::read(&dir.path().join(MANIFEST_FILE)).unwrap().clips.is_empty());
    }
}
