//! Synthetic multi-source data and audio file I/O.

mod manifest;
mod synth;
mod wav;

pub use manifest::{
    synth_dataset, ClipEntry, DatasetManifest, MixtureLoader, MANIFEST_FILE, MANIFEST_HEADER,
    MANIFEST_VERSION,
};
pub use synth::{
    oracle_band_separate, synth_clip, synth_clips, Instrument, SynthClip, SynthConfig,
    DEFAULT_CLIP_LENGTH, MIN_SAMPLE_RATE,
};
pub use wav::{decode_wav, encode_wav, read_wav, write_wav, WavEncoding};
