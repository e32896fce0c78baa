//! RIFF/WAVE reading and writing: PCM-16 and IEEE float-32, any channel
//! count, including the WAVE_FORMAT_EXTENSIBLE header variant.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audio::AudioTensor;
use crate::error::{Error, Result};

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WavEncoding {
    Pcm16,
    #[default]
    Float32,
}

impl std::str::FromStr for WavEncoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pcm16" | "pcm_16" | "pcm-16" => Ok(WavEncoding::Pcm16),
            "float32" | "f32" | "float" => Ok(WavEncoding::Float32),
            other => Err(Error::config(format!("unknown wav encoding '{other}'"))),
        }
    }
}

pub fn encode_wav(audio: &AudioTensor, encoding: WavEncoding) -> Vec<u8> {
    let channels = audio.channels() as u16;
    let (tag, bits) = match encoding {
        WavEncoding::Pcm16 => (FORMAT_PCM, 16u16),
        WavEncoding::Float32 => (FORMAT_FLOAT, 32u16),
    };
    let block_align = channels * bits / 8;
    let data_len = (audio.samples().len() * (bits as usize / 8)) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&channels.to_le_bytes());
    out.extend_from_slice(&audio.sample_rate().to_le_bytes());
    out.extend_from_slice(&(audio.sample_rate() * block_align as u32).to_le_bytes());
    out.extend_from_slice(&block_align.to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &x in audio.samples() {
        match encoding {
            WavEncoding::Pcm16 => {
                let q = (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                out.extend_from_slice(&q.to_le_bytes());
            }
            WavEncoding::Float32 => out.extend_from_slice(&(x as f32).to_le_bytes()),
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(field, "file truncated"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, field: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, field)?.try_into().unwrap()))
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }
}

struct Format {
    tag: u16,
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

fn parse_fmt(chunk: &[u8]) -> Result<Format> {
    let mut r = Reader { bytes: chunk, pos: 0 };
    let mut tag = r.u16("fmt.audio_format")?;
    let channels = r.u16("fmt.channels")?;
    let sample_rate = r.u32("fmt.sample_rate")?;
    let _byte_rate = r.u32("fmt.byte_rate")?;
    let block_align = r.u16("fmt.block_align")?;
    let bits = r.u16("fmt.bits_per_sample")?;
    if tag == FORMAT_EXTENSIBLE {
        let _cb_size = r.u16("fmt.cb_size")?;
        let _valid_bits = r.u16("fmt.valid_bits")?;
        let _mask = r.u32("fmt.channel_mask")?;
        let guid = r.take(16, "fmt.sub_format")?;
        tag = u16::from_le_bytes([guid[0], guid[1]]);
    }
    if channels == 0 {
        return Err(Error::format("fmt.channels", "zero channels"));
    }
    if sample_rate == 0 {
        return Err(Error::format("fmt.sample_rate", "zero sample rate"));
    }
    match (tag, bits) {
        (FORMAT_PCM, 16) | (FORMAT_FLOAT, 32) => {}
        (FORMAT_PCM | FORMAT_FLOAT, b) => {
            return Err(Error::format(
                "fmt.bits_per_sample",
                format!("unsupported bit depth {b} for format {tag}"),
            ))
        }
        (t, _) => return Err(Error::format("fmt.audio_format", format!("unsupported codec {t}"))),
    }
    if block_align != channels * bits / 8 {
        return Err(Error::format(
            "fmt.block_align",
            format!("expected {}, found {block_align}", channels * bits / 8),
        ));
    }
    Ok(Format {
        tag,
        channels,
        sample_rate,
        bits,
    })
}

pub fn decode_wav(bytes: &[u8]) -> Result<AudioTensor> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "riff.id")? != b"RIFF" {
        return Err(Error::format("riff.id", "missing RIFF tag"));
    }
    let riff_len = r.u32("riff.size")? as usize;
    if r.take(4, "riff.wave")? != b"WAVE" {
        return Err(Error::format("riff.wave", "missing WAVE tag"));
    }
    if riff_len + 8 > bytes.len() {
        return Err(Error::format("riff.size", "file truncated"));
    }
    let mut format = None;
    let mut data = None;
    while r.pos + 8 <= bytes.len() && data.is_none() {
        let id: [u8; 4] = r.take(4, "chunk.id")?.try_into().unwrap();
        let len = r.u32("chunk.size")? as usize;
        let field = match &id {
            b"fmt " => "fmt",
            b"data" => "data",
            _ => "chunk",
        };
        let body = r.take(len, field)?;
        if len % 2 == 1 && r.pos < bytes.len() {
            r.pos += 1;
        }
        match &id {
            b"fmt " => format = Some(parse_fmt(body)?),
            b"data" => data = Some(body),
            _ => {}
        }
    }
    let format = format.ok_or_else(|| Error::format("fmt", "missing fmt chunk"))?;
    let data = data.ok_or_else(|| Error::format("data", "missing data chunk"))?;
    let width = format.bits as usize / 8;
    let frame = width * format.channels as usize;
    if data.len() % frame != 0 {
        return Err(Error::format("data", "length is not a whole number of frames"));
    }
    let samples: Vec<f64> = match format.tag {
        FORMAT_PCM => data
            .chunks_exact(2)
            .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0)
            .collect(),
        _ => data
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect(),
    };
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::format("data", "non-finite float sample"));
    }
    AudioTensor::new(samples, format.channels as usize, format.sample_rate)
        .map_err(|e| Error::format("data", e.to_string()))
}

pub fn read_wav(path: &Path) -> Result<AudioTensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes).map_err(|e| match e {
        Error::Format { field, message } => {
            Error::format(field, format!("{}: {message}", path.display()))
        }
        other => other,
    })
}

pub fn write_wav(path: &Path, audio: &AudioTensor, encoding: WavEncoding) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, encode_wav(audio, encoding)).map_err(|e| Error::io(path, e))
}
