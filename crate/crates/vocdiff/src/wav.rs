//! Minimal mono WAV reader/writer: 16-bit PCM and 32-bit IEEE float.

use std::fs;
use std::io::Write;
use std::path::Path;

use vocdiff_core::AudioBuffer;

use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavFormat {
    Pcm16,
    Float32,
}

pub fn write_wav(path: &Path, buf: &AudioBuffer, format: WavFormat) -> AppResult<()> {
    let num_frames = buf.len() as u32;
    let (fmt_code, bits): (u16, u16) = match format {
        WavFormat::Pcm16 => (1, 16),
        WavFormat::Float32 => (3, 32),
    };
    let bytes_per_sample = (bits / 8) as u32;
    let data_size = num_frames * bytes_per_sample;
    let byte_rate = buf.sample_rate * bytes_per_sample;

    let mut out = Vec::with_capacity(44 + data_size as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_size).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&fmt_code.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&buf.sample_rate.to_le_bytes());
    out.extend_from_slice(&byte_rate.to_le_bytes());
    out.extend_from_slice(&(bytes_per_sample as u16).to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_size.to_le_bytes());
    match format {
        WavFormat::Pcm16 => {
            for &s in &buf.samples {
                // Symmetric 32768 scaling keeps the round trip within one
                // LSB; +1.0 saturates at 32767.
                let v = (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        WavFormat::Float32 => {
            for &s in &buf.samples {
                out.extend_from_slice(&(s as f32).to_le_bytes());
            }
        }
    }
    let mut file = fs::File::create(path)
        .map_err(|e| AppError::Io(format!("create {}: {e}", path.display())))?;
    file.write_all(&out)?;
    Ok(())
}

pub fn read_wav(path: &Path) -> AppResult<AudioBuffer> {
    let bytes =
        fs::read(path).map_err(|e| AppError::Io(format!("read {}: {e}", path.display())))?;
    parse_wav(&bytes).map_err(|m| AppError::Config(format!("{}: {m}", path.display())))
}

fn parse_wav(bytes: &[u8]) -> Result<AudioBuffer, String> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err("not a RIFF/WAVE file".into());
    }
    let mut pos = 12usize;
    let mut fmt: Option<(u16, u16, u32)> = None; // (code, bits, rate)
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        if body_start + size > bytes.len() {
            return Err(format!(
                "chunk {:?} of {size} bytes runs past end of file (truncated?)",
                String::from_utf8_lossy(id)
            ));
        }
        let body = &bytes[body_start..body_start + size];
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err("fmt chunk too small".into());
                }
                let code = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                if channels != 1 {
                    return Err(format!("only mono supported, file has {channels} channels"));
                }
                fmt = Some((code, bits, rate));
            }
            b"data" => data = Some(body),
            _ => {} // skip unrecognized chunks
        }
        pos = body_start + size + (size & 1); // chunks are word-aligned
    }
    let (code, bits, rate) = fmt.ok_or("missing fmt chunk")?;
    let data = data.ok_or("missing data chunk")?;
    let samples: Vec<f64> = match (code, bits) {
        (1, 16) => {
            if data.len() % 2 != 0 {
                return Err("pcm16 data size not a multiple of 2".into());
            }
            data.chunks_exact(2)
                .map(|c| i16::from_le_bytes(c.try_into().unwrap()) as f64 / 32768.0)
                .collect()
        }
        (3, 32) => {
            if data.len() % 4 != 0 {
                return Err("float32 data size not a multiple of 4".into());
            }
            data.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect()
        }
        _ => {
            return Err(format!(
                "unsupported codec: format {code}, {bits} bits (want pcm16 or float32)"
            ))
        }
    };
    if samples.iter().any(|s| !s.is_finite()) {
        return Err("non-finite samples".into());
    }
    let mut buf = AudioBuffer::new(samples, rate);
    // Keep |samples| <= 1 on load.
    if buf.peak() > 1.0 {
        let peak = buf.peak();
        buf.samples.iter_mut().for_each(|s| *s /= peak);
    }
    Ok(buf)
}
