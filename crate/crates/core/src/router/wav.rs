//! 16-bit PCM mono WAV I/O, backed by `hound`.
//!
//! Samples scale by 32767 in both directions, so a write/read round trip
//! is off by at most half a quantization step.

use std::path::Path;

use hound::{SampleFormat, WavSpec};

use crate::domain::AudioWindow;
use crate::error::{Error, Result};

const FULL_SCALE: f64 = 32767.0;

/// Audio split into consecutive windows. The last window is zero-padded
/// when the file length is not a multiple of the window size; `tail_padding`
/// counts the padded samples.
#[derive(Debug, Clone, PartialEq)]
pub struct WavData {
    pub sample_rate: u32,
    pub windows: Vec<AudioWindow>,
    pub tail_padding: usize,
    pub total_samples: usize,
}

pub fn read_samples(path: impl AsRef<Path>) -> Result<(Vec<f64>, u32)> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| hound_error(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::AudioFormat {
            path: path.into(),
            detail: format!("expected mono, found {} channels", spec.channels),
        });
    }
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::AudioFormat {
            path: path.into(),
            detail: format!(
                "expected 16-bit integer PCM, found {}-bit {:?}",
                spec.bits_per_sample, spec.sample_format
            ),
        });
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| {
            s.map(|v| (f64::from(v) / FULL_SCALE).clamp(-1.0, 1.0))
                .map_err(|e| hound_error(path, e))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((samples, spec.sample_rate))
}

pub fn wav_read(path: impl AsRef<Path>, window_size: usize) -> Result<WavData> {
    if window_size == 0 {
        return Err(Error::config("window size must be > 0"));
    }
    let (samples, sample_rate) = read_samples(path)?;
    let total_samples = samples.len();
    let mut tail_padding = 0;
    let windows = samples
        .chunks(window_size)
        .enumerate()
        .map(|(i, chunk)| {
            let mut buf = chunk.to_vec();
            if buf.len() < window_size {
                tail_padding = window_size - buf.len();
                buf.resize(window_size, 0.0);
            }
            AudioWindow::new(buf, sample_rate, i as u64)
        })
        .collect();
    Ok(WavData {
        sample_rate,
        windows,
        tail_padding,
        total_samples,
    })
}

pub fn write_samples(path: impl AsRef<Path>, samples: &[f64], sample_rate: u32) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| hound_error(path, e))?;
    for s in samples {
        let v = (s.clamp(-1.0, 1.0) * FULL_SCALE).round() as i16;
        writer.write_sample(v).map_err(|e| hound_error(path, e))?;
    }
    writer.finalize().map_err(|e| hound_error(path, e))
}

pub fn wav_write(path: impl AsRef<Path>, windows: &[AudioWindow], sample_rate: u32) -> Result<()> {
    let samples: Vec<f64> = windows.iter().flat_map(|w| w.samples.iter().copied()).collect();
    write_samples(path, &samples, sample_rate)
}

fn hound_error(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::AudioFormat {
            path: path.into(),
            detail: other.to_string(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn partial_tail_is_padded_and_flagged() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let samples: Vec<f64> = (0..10).map(|i| i as f64 / 20.0).collect();
        write_samples(&p, &samples, 8000).unwrap();
        let data = wav_read(&p, 4).unwrap();
        assert_eq!(data.windows.len(), 3);
        assert_eq!(data.tail_padding, 2);
        assert_eq!(data.total_samples, 10);
        assert_eq!(&data.windows[2].samples[2..], &[0.0, 0.0]);
        assert_eq!(data.windows[2].index, 2);
        let exact = wav_read(&p, 5).unwrap();
        assert_eq!(exact.tail_padding, 0);
    }

    #[test]
    fn rejects_stereo_and_float() {
        let dir = tempfile::tempdir().unwrap();
        let stereo = dir.path().join("s.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&stereo, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        assert!(matches!(read_samples(&stereo), Err(Error::AudioFormat { .. })));

        let float = dir.path().join("f.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        };
        let mut w = hound::WavWriter::create(&float, spec).unwrap();
        w.write_sample(0.5f32).unwrap();
        w.finalize().unwrap();
        let err = read_samples(&float).unwrap_err();
        assert!(err.to_string().contains("16-bit"), "{err}");

        let junk = dir.path().join("j.wav");
        std::fs::write(&junk, b"not a wav file at all").unwrap();
        assert!(matches!(read_samples(&junk), Err(Error::AudioFormat { .. })));
        assert!(matches!(
            read_samples(dir.path().join("missing.wav")),
            Err(Error::Io { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn round_trip_within_one_step(samples in proptest::collection::vec(-1.0f64..=1.0, 1..400)) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("r.wav");
            write_samples(&p, &samples, 16_000).unwrap();
            let (back, sr) = read_samples(&p).unwrap();
            prop_assert_eq!(sr, 16_000);
            prop_assert_eq!(back.len(), samples.len());
            for (a, b) in samples.iter().zip(&back) {
                prop_assert!((a - b).abs() <= 1.0 / 32768.0);
            }
        }
    }
}
