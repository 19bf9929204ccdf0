//! WAV input (any integer or float format, channels averaged) and 32-bit float output.

use std::path::Path;

use sed_forge_core::features::AudioClip;

use crate::error::{FormatError, Result};

pub fn read_wav(path: &Path) -> Result<AudioClip> {
    let wav = |source| FormatError::Wav {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = hound::WavReader::open(path).map_err(wav)?;
    let spec = reader.spec();
    let interleaved: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Float => reader.samples::<f32>().collect::<std::result::Result<_, _>>().map_err(wav)?,
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(wav)?
        }
    };
    let ch = spec.channels.max(1) as usize;
    let samples = interleaved
        .chunks(ch)
        .map(|frame| frame.iter().sum::<f32>() / ch as f32)
        .collect();
    Ok(AudioClip::new(samples, spec.sample_rate)?)
}

pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    let wav = |source| FormatError::Wav {
        path: path.to_path_buf(),
        source,
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(wav)?;
    for &s in &clip.samples {
        w.write_sample(s).map_err(wav)?;
    }
    w.finalize().map_err(wav)
}
