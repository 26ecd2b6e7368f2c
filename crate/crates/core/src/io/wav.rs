//! 16-bit PCM WAV reading (downmixed to mono) and mono writing.

use crate::error::{Error, Result};
use crate::frontend::Audio;

const FORMAT_PCM: u16 = 1;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

fn u16_at(b: &[u8], at: usize) -> Result<u16> {
    b.get(at..at + 2)
        .map(|s| u16::from_le_bytes([s[0], s[1]]))
        .ok_or_else(|| Error::parse(at, "unexpected end of file"))
}

fn u32_at(b: &[u8], at: usize) -> Result<u32> {
    b.get(at..at + 4)
        .map(|s| u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
        .ok_or_else(|| Error::parse(at, "unexpected end of file"))
}

pub fn decode_wav(bytes: &[u8]) -> Result<Audio> {
    if bytes.get(0..4) != Some(b"RIFF".as_slice()) {
        return Err(Error::parse(0, "not a RIFF file"));
    }
    if bytes.get(8..12) != Some(b"WAVE".as_slice()) {
        return Err(Error::parse(8, "RIFF file is not WAVE"));
    }
    let mut pos = 12;
    let mut format: Option<(u16, u32, usize)> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let len = u32_at(bytes, pos + 4)? as usize;
        let body = pos + 8;
        match id {
            b"fmt " => {
                if len < 16 {
                    return Err(Error::parse(pos + 4, format!("fmt chunk of {len} bytes is too short")));
                }
                let mut tag = u16_at(bytes, body)?;
                let channels = u16_at(bytes, body + 2)?;
                let rate = u32_at(bytes, body + 4)?;
                let bits = u16_at(bytes, body + 14)?;
                if tag == FORMAT_EXTENSIBLE && len >= 26 {
                    tag = u16_at(bytes, body + 24)?;
                }
                if tag != FORMAT_PCM {
                    return Err(Error::parse(body, format!("unsupported WAV format tag {tag:#x}; need PCM")));
                }
                if bits != 16 {
                    return Err(Error::parse(body + 14, format!("{bits}-bit samples unsupported; need 16-bit PCM")));
                }
                if channels == 0 {
                    return Err(Error::parse(body + 2, "zero channels"));
                }
                format = Some((channels, rate, usize::from(channels) * 2));
            }
            b"data" => {
                let (channels, rate, frame_bytes) =
                    format.ok_or_else(|| Error::parse(pos, "data chunk before fmt chunk"))?;
                let end = body
                    .checked_add(len)
                    .filter(|&e| e <= bytes.len())
                    .ok_or_else(|| Error::parse(pos + 4, format!("data chunk of {len} bytes runs past end of file")))?;
                let data = &bytes[body..end];
                let channels = usize::from(channels);
                let samples = data
                    .chunks_exact(frame_bytes)
                    .map(|frame| {
                        let sum: i32 = frame
                            .chunks_exact(2)
                            .map(|s| i32::from(i16::from_le_bytes([s[0], s[1]])))
                            .sum();
                        sum as f32 / (channels as f32 * 32768.0)
                    })
                    .collect();
                return Ok(Audio {
                    samples,
                    sample_rate: rate,
                });
            }
            _ => {}
        }
        pos = body + len + (len & 1);
    }
    Err(Error::parse(pos.min(bytes.len()), "no data chunk found"))
}

/// Mono 16-bit PCM; samples outside the representable range are clipped.
pub fn encode_wav(audio: &Audio) -> Vec<u8> {
    let data_len = (audio.samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&audio.sample_rate.to_le_bytes());
    out.extend_from_slice(&(audio.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &audio.samples {
        let q = (f64::from(s) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

/// Rounds samples to the 16-bit grid that [`encode_wav`] stores.
pub fn quantize(audio: &Audio) -> Audio {
    decode_wav(&encode_wav(audio)).expect("encoded WAV is well formed")
}
