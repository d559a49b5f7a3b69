//! DTMF keypad input: synthesis, Goertzel detection and key segmentation.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use thiserror::Error;

pub const ROW_FREQS: [f64; 4] = [697.0, 770.0, 852.0, 941.0];
pub const COL_FREQS: [f64; 4] = [1209.0, 1336.0, 1477.0, 1633.0];

pub const KEYPAD: [[char; 4]; 4] = [
    ['1', '2', '3', 'A'],
    ['4', '5', '6', 'B'],
    ['7', '8', '9', 'C'],
    ['*', '0', '#', 'D'],
];

/// Lowest sample rate that keeps the 1633 Hz column tone below Nyquist.
pub const MIN_SAMPLE_RATE: u32 = 2 * 1633;

pub const DEFAULT_SAMPLE_RATE: u32 = 8000;
pub const DEFAULT_BLOCK_SIZE: usize = 205;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DtmfError {
    #[error("InvalidKey: {0:?} is not a DTMF key")]
    InvalidKey(char),
    #[error("SampleRateTooLow: {0} Hz is below {MIN_SAMPLE_RATE} Hz")]
    SampleRateTooLow(u32),
    #[error("InvalidAmplitude: per-tone amplitude {0} outside (0, 0.5]")]
    InvalidAmplitude(f64),
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error("UnsupportedFormat: {0}")]
    UnsupportedFormat(String),
    #[error("IoError: {0}")]
    Io(String),
}

impl DtmfError {
    pub fn name(&self) -> &'static str {
        match self {
            DtmfError::InvalidKey(_) => "InvalidKey",
            DtmfError::SampleRateTooLow(_) => "SampleRateTooLow",
            DtmfError::InvalidAmplitude(_) => "InvalidAmplitude",
            DtmfError::InvalidConfig(_) => "InvalidConfig",
            DtmfError::UnsupportedFormat(_) => "UnsupportedFormat",
            DtmfError::Io(_) => "IoError",
        }
    }
}

/// Row/column index of a key on the 4×4 keypad.
pub fn key_position(key: char) -> Result<(usize, usize), DtmfError> {
    let key = key.to_ascii_uppercase();
    KEYPAD
        .iter()
        .enumerate()
        .find_map(|(r, row)| row.iter().position(|&k| k == key).map(|c| (r, c)))
        .ok_or(DtmfError::InvalidKey(key))
}

pub fn key_frequencies(key: char) -> Result<(f64, f64), DtmfError> {
    let (r, c) = key_position(key)?;
    Ok((ROW_FREQS[r], COL_FREQS[c]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToneBlock {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KeyEvent {
    pub key: char,
    pub start_sample: usize,
    /// Exclusive.
    pub end_sample: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub block_size: usize,
    /// Required margin of each selected bin over the mean of the other six.
    pub power_ratio_db: f64,
    pub max_twist_db: f64,
    pub min_key_blocks: usize,
    pub min_gap_blocks: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            block_size: DEFAULT_BLOCK_SIZE,
            power_ratio_db: 10.0,
            max_twist_db: 8.0,
            min_key_blocks: 2,
            min_gap_blocks: 1,
        }
    }
}

impl DetectorConfig {
    /// Defaults with the block length scaled to keep ~25.6 ms blocks.
    pub fn for_sample_rate(sample_rate: u32) -> Self {
        let block = (DEFAULT_BLOCK_SIZE as u64 * sample_rate as u64 + 4000) / 8000;
        Self {
            block_size: (block as usize).max(64),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DtmfError> {
        if self.block_size < 64 {
            return Err(DtmfError::InvalidConfig(format!(
                "block_size {} < 64",
                self.block_size
            )));
        }
        if !(self.power_ratio_db > 0.0 && self.max_twist_db > 0.0) {
            return Err(DtmfError::InvalidConfig("thresholds must be positive".into()));
        }
        if self.min_key_blocks == 0 || self.min_gap_blocks == 0 {
            return Err(DtmfError::InvalidConfig("block counts must be positive".into()));
        }
        Ok(())
    }
}

fn check_rate(sample_rate: u32) -> Result<(), DtmfError> {
    if sample_rate < MIN_SAMPLE_RATE {
        Err(DtmfError::SampleRateTooLow(sample_rate))
    } else {
        Ok(())
    }
}

/// Two-tone key signal plus white Gaussian noise, clamped to `[-1, 1]`.
pub fn synthesize_key<R: Rng + ?Sized>(
    key: char,
    duration_ms: u32,
    sample_rate: u32,
    amplitude: f64,
    noise_std: f64,
    rng: &mut R,
) -> Result<ToneBlock, DtmfError> {
    let (f_row, f_col) = key_frequencies(key)?;
    check_rate(sample_rate)?;
    if !(amplitude > 0.0 && amplitude <= 0.5) {
        return Err(DtmfError::InvalidAmplitude(amplitude));
    }
    let n = (duration_ms as u64 * sample_rate as u64 / 1000) as usize;
    let sr = sample_rate as f64;
    let mut samples: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            amplitude * (2.0 * PI * f_row * t).sin() + amplitude * (2.0 * PI * f_col * t).sin()
        })
        .collect();
    add_noise(&mut samples, noise_std, rng);
    Ok(ToneBlock { samples, sample_rate })
}

fn add_noise<R: Rng + ?Sized>(samples: &mut [f64], noise_std: f64, rng: &mut R) {
    if noise_std > 0.0 {
        let normal = Normal::new(0.0, noise_std).expect("finite positive std");
        for s in samples.iter_mut() {
            *s = (*s + normal.sample(rng)).clamp(-1.0, 1.0);
        }
    }
}

/// Audio for a key string: each key for `tone_ms`, separated by `gap_ms` of
/// silence (noise only, when `noise_std` > 0).
pub fn synthesize_sequence<R: Rng + ?Sized>(
    keys: &str,
    tone_ms: u32,
    gap_ms: u32,
    sample_rate: u32,
    amplitude: f64,
    noise_std: f64,
    rng: &mut R,
) -> Result<Vec<f64>, DtmfError> {
    let gap = (gap_ms as u64 * sample_rate as u64 / 1000) as usize;
    let mut out = Vec::new();
    for (i, k) in keys.chars().enumerate() {
        if i > 0 {
            out.extend(std::iter::repeat(0.0).take(gap));
        }
        out.extend(synthesize_key(k, tone_ms, sample_rate, amplitude, 0.0, rng)?.samples);
    }
    add_noise(&mut out, noise_std, rng);
    Ok(out)
}

/// Squared magnitude of the DTFT of `samples` at `target_freq`.
pub fn goertzel_power(samples: &[f64], sample_rate: u32, target_freq: f64) -> f64 {
    let coeff = 2.0 * (2.0 * PI * target_freq / sample_rate as f64).cos();
    let (mut s1, mut s2) = (0.0f64, 0.0f64);
    for &x in samples {
        let s0 = x + coeff * s1 - s2;
        s2 = s1;
        s1 = s0;
    }
    (s1 * s1 + s2 * s2 - coeff * s1 * s2).max(0.0)
}

/// Powers of the four row bins followed by the four column bins.
pub fn bin_powers(samples: &[f64], sample_rate: u32) -> [f64; 8] {
    let mut out = [0.0; 8];
    for (i, f) in ROW_FREQS.iter().chain(COL_FREQS.iter()).enumerate() {
        out[i] = goertzel_power(samples, sample_rate, *f);
    }
    out
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold(0, |best, (i, x)| if *x > v[best] { i } else { best })
}

/// Key decision for one block; `None` when no valid tone pair is present.
pub fn detect_key_block(block: &ToneBlock, cfg: &DetectorConfig) -> Option<char> {
    detect_samples(&block.samples, block.sample_rate, cfg)
}

fn detect_samples(samples: &[f64], sample_rate: u32, cfg: &DetectorConfig) -> Option<char> {
    let p = bin_powers(samples, sample_rate);
    let r = argmax(&p[..4]);
    let c = argmax(&p[4..]);
    let (pr, pc) = (p[r], p[4 + c]);
    let others: f64 = p.iter().sum::<f64>() - pr - pc;
    let floor = others / 6.0 * 10f64.powf(cfg.power_ratio_db / 10.0);
    if !(pr > floor && pc > floor) {
        return None;
    }
    let twist_db = 10.0 * (pr / pc).log10();
    if twist_db.abs() > cfg.max_twist_db {
        return None;
    }
    Some(KEYPAD[r][c])
}

/// Segments a sample stream into key presses using non-overlapping blocks.
pub fn decode_key_sequence(
    samples: &[f64],
    sample_rate: u32,
    cfg: &DetectorConfig,
) -> Result<Vec<KeyEvent>, DtmfError> {
    check_rate(sample_rate)?;
    cfg.validate()?;
    let bs = cfg.block_size;
    let mut events = Vec::new();
    // Unconfirmed run of identical detections: (key, first block, length).
    let mut run: Option<(char, usize, usize)> = None;
    let mut active: Option<KeyEvent> = None;
    let mut gap = 0usize;

    for (i, block) in samples.chunks_exact(bs).enumerate() {
        match detect_samples(block, sample_rate, cfg) {
            Some(k) => {
                match active.as_mut() {
                    Some(a) if a.key == k => {
                        a.end_sample = (i + 1) * bs;
                        gap = 0;
                        continue;
                    }
                    Some(_) => events.extend(active.take()),
                    None => {}
                }
                run = match run {
                    Some((rk, first, n)) if rk == k && gap == 0 => Some((k, first, n + 1)),
                    _ => Some((k, i, 1)),
                };
                gap = 0;
                if let Some((k, first, n)) = run {
                    if n >= cfg.min_key_blocks {
                        active = Some(KeyEvent {
                            key: k,
                            start_sample: first * bs,
                            end_sample: (i + 1) * bs,
                        });
                        run = None;
                    }
                }
            }
            None => {
                gap += 1;
                run = None;
                if gap >= cfg.min_gap_blocks {
                    events.extend(active.take());
                }
            }
        }
    }
    events.extend(active);
    Ok(events)
}

pub fn keys_to_string(events: &[KeyEvent]) -> String {
    events.iter().map(|e| e.key).collect()
}

/// Reads a mono 16-bit PCM WAV file into samples scaled to `[-1, 1)`.
pub fn read_wav(path: &Path) -> Result<(Vec<f64>, u32), DtmfError> {
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => DtmfError::Io(io.to_string()),
        other => DtmfError::UnsupportedFormat(other.to_string()),
    })?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(DtmfError::UnsupportedFormat(format!(
            "{} channels, expected mono",
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(DtmfError::UnsupportedFormat(format!(
            "{}-bit {:?}, expected 16-bit PCM",
            spec.bits_per_sample, spec.sample_format
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(pcm16_to_f64))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| DtmfError::UnsupportedFormat(e.to_string()))?;
    Ok((samples, spec.sample_rate))
}

/// Writes samples as mono 16-bit PCM.
pub fn write_wav(path: &Path, samples: &[f64], sample_rate: u32) -> Result<(), DtmfError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let io = |e: hound::Error| DtmfError::Io(e.to_string());
    let mut w = hound::WavWriter::create(path, spec).map_err(io)?;
    for &s in samples {
        w.write_sample(f64_to_pcm16(s)).map_err(io)?;
    }
    w.finalize().map_err(io)
}

pub fn pcm16_to_f64(s: i16) -> f64 {
    s as f64 / 32768.0
}

pub fn f64_to_pcm16(s: f64) -> i16 {
    (s * 32767.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Decodes little-endian 16-bit PCM octets.
pub fn pcm16_le_to_samples(bytes: &[u8]) -> Result<Vec<f64>, DtmfError> {
    if bytes.len() % 2 != 0 {
        return Err(DtmfError::UnsupportedFormat("odd number of PCM16 octets".into()));
    }
    Ok(bytes
        .chunks_exact(2)
        .map(|b| pcm16_to_f64(i16::from_le_bytes([b[0], b[1]])))
        .collect())
}

pub fn samples_to_pcm16_le(samples: &[f64]) -> Vec<u8> {
    samples
        .iter()
        .flat_map(|s| f64_to_pcm16(*s).to_le_bytes())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;

    const ALL_KEYS: &str = "123A456B789C*0#D";

    /// Direct-summation DTFT at `f`: |Σ x[n] e^{-jωn}|².
    fn dft_power(samples: &[f64], sr: u32, f: f64) -> f64 {
        let w = 2.0 * PI * f / sr as f64;
        let (re, im) = samples.iter().enumerate().fold((0.0, 0.0), |(re, im), (n, x)| {
            (re + x * (w * n as f64).cos(), im - x * (w * n as f64).sin())
        });
        re * re + im * im
    }

    /// Full N-point DFT magnitudes.
    fn dft_spectrum(samples: &[f64]) -> Vec<f64> {
        let n = samples.len();
        (0..n / 2)
            .map(|k| {
                let w = 2.0 * PI * k as f64 / n as f64;
                let (re, im) = samples.iter().enumerate().fold((0.0, 0.0), |(re, im), (i, x)| {
                    (re + x * (w * i as f64).cos(), im - x * (w * i as f64).sin())
                });
                (re * re + im * im).sqrt()
            })
            .collect()
    }

    fn rng(seed: u64) -> StreamRng {
        StreamRng::new(seed, 0xD7F)
    }

    #[test]
    fn synth_shape() {
        let b = synthesize_key('5', 100, 8000, 0.4, 0.0, &mut rng(0)).unwrap();
        assert_eq!(b.samples.len(), 800);
        assert!(b.samples.iter().all(|s| s.abs() <= 0.8 + 1e-12));
        assert_eq!(key_frequencies('5').unwrap(), (770.0, 1336.0));
        assert_eq!(
            synthesize_key('x', 10, 8000, 0.4, 0.0, &mut rng(0)),
            Err(DtmfError::InvalidKey('X'))
        );
        assert!(synthesize_key('1', 10, 8000, 0.6, 0.0, &mut rng(0)).is_err());
    }

    #[test]
    fn synth_d_peaks_at_941_and_1633() {
        // 1000 samples at 8 kHz: 8 Hz bins, both tones sit exactly on a bin.
        let b = synthesize_key('D', 125, 8000, 0.4, 0.0, &mut rng(0)).unwrap();
        let spec = dft_spectrum(&b.samples);
        let bin_hz = 8000.0 / b.samples.len() as f64;
        let mut idx: Vec<usize> = (0..spec.len()).collect();
        idx.sort_by(|a, b| spec[*b].partial_cmp(&spec[*a]).unwrap());
        let mut top: Vec<f64> = idx[..2].iter().map(|k| *k as f64 * bin_hz).collect();
        top.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((top[0] - 941.0).abs() <= bin_hz / 2.0, "{top:?}");
        assert!((top[1] - 1633.0).abs() <= bin_hz / 2.0, "{top:?}");
    }

    #[test]
    fn goertzel_zero_block() {
        assert_eq!(goertzel_power(&[0.0; 205], 8000, 770.0), 0.0);
    }

    #[test]
    fn goertzel_matches_direct_dft_on_all_bins() {
        for &f in ROW_FREQS.iter().chain(COL_FREQS.iter()) {
            let tone: Vec<f64> = (0..205)
                .map(|n| 0.5 * (2.0 * PI * f * n as f64 / 8000.0).sin())
                .collect();
            for &probe in ROW_FREQS.iter().chain(COL_FREQS.iter()) {
                let g = goertzel_power(&tone, 8000, probe);
                let d = dft_power(&tone, 8000, probe);
                if probe == f {
                    assert!(((g - d) / d).abs() <= 1e-9, "f={f} g={g} d={d}");
                } else {
                    assert!((g - d).abs() <= 1e-9 * dft_power(&tone, 8000, f));
                }
            }
        }
    }

    #[test]
    fn goertzel_selects_its_tone() {
        let tone: Vec<f64> = (0..205)
            .map(|n| 0.5 * (2.0 * PI * 770.0 * n as f64 / 8000.0).sin())
            .collect();
        assert!(goertzel_power(&tone, 8000, 770.0) >= 100.0 * goertzel_power(&tone, 8000, 1209.0));
    }

    #[test]
    fn every_key_round_trips_through_one_block() {
        let cfg = DetectorConfig::default();
        for k in ALL_KEYS.chars() {
            let mut b = synthesize_key(k, 100, 8000, 0.4, 0.0, &mut rng(1)).unwrap();
            b.samples.truncate(cfg.block_size);
            assert_eq!(detect_key_block(&b, &cfg), Some(k));
        }
    }

    #[test]
    fn silence_and_single_tone_are_rejected() {
        let cfg = DetectorConfig::default();
        let silence = ToneBlock {
            samples: vec![0.0; 205],
            sample_rate: 8000,
        };
        assert_eq!(detect_key_block(&silence, &cfg), None);
        let row_only = ToneBlock {
            samples: (0..205)
                .map(|n| 0.4 * (2.0 * PI * 697.0 * n as f64 / 8000.0).sin())
                .collect(),
            sample_rate: 8000,
        };
        assert_eq!(detect_key_block(&row_only, &cfg), None);
    }

    #[test]
    fn excessive_twist_is_rejected() {
        let cfg = DetectorConfig::default();
        // Column 12 dB below the row.
        let samples: Vec<f64> = (0..205)
            .map(|n| {
                let t = n as f64 / 8000.0;
                0.4 * (2.0 * PI * 697.0 * t).sin() + 0.1 * (2.0 * PI * 1209.0 * t).sin()
            })
            .collect();
        assert_eq!(detect_samples(&samples, 8000, &cfg), None);
    }

    #[test]
    fn twenty_db_snr_detects_every_key() {
        let cfg = DetectorConfig::default();
        for k in ALL_KEYS.chars() {
            for seed in 0..100 {
                // Signal power A² (two tones of amplitude A); noise σ = A/10.
                let mut b = synthesize_key(k, 26, 8000, 0.4, 0.04, &mut rng(seed)).unwrap();
                b.samples.truncate(cfg.block_size);
                assert_eq!(detect_key_block(&b, &cfg), Some(k), "key {k} seed {seed}");
            }
        }
    }

    #[test]
    fn sequence_round_trip() {
        let cfg = DetectorConfig::default();
        let audio = synthesize_sequence("*2*1*1#", 60, 40, 8000, 0.4, 0.0, &mut rng(2)).unwrap();
        let ev = decode_key_sequence(&audio, 8000, &cfg).unwrap();
        assert_eq!(keys_to_string(&ev), "*2*1*1#");
        for e in &ev {
            assert!(e.end_sample > e.start_sample);
        }
    }

    #[test]
    fn all_keys_sequence_with_noise() {
        let cfg = DetectorConfig::default();
        for seed in 0..20 {
            let audio = synthesize_sequence(ALL_KEYS, 60, 40, 8000, 0.4, 0.04, &mut rng(seed)).unwrap();
            let ev = decode_key_sequence(&audio, 8000, &cfg).unwrap();
            assert_eq!(keys_to_string(&ev), ALL_KEYS, "seed {seed}");
        }
    }

    #[test]
    fn continuous_tone_is_one_event() {
        let cfg = DetectorConfig::default();
        let b = synthesize_key('9', 1000, 8000, 0.4, 0.0, &mut rng(3)).unwrap();
        let ev = decode_key_sequence(&b.samples, 8000, &cfg).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].key, '9');
    }

    #[test]
    fn repeated_key_needs_gap() {
        let cfg = DetectorConfig::default();
        let audio = synthesize_sequence("11", 80, 60, 8000, 0.4, 0.0, &mut rng(4)).unwrap();
        assert_eq!(
            keys_to_string(&decode_key_sequence(&audio, 8000, &cfg).unwrap()),
            "11"
        );
    }

    #[test]
    fn pure_noise_yields_no_keys() {
        let cfg = DetectorConfig::default();
        for seed in 0..100 {
            let mut r = rng(seed);
            let normal = Normal::new(0.0f64, 0.3).unwrap();
            let noise: Vec<f64> = (0..8000)
                .map(|_| normal.sample(&mut r).clamp(-1.0, 1.0))
                .collect();
            assert!(
                decode_key_sequence(&noise, 8000, &cfg).unwrap().is_empty(),
                "seed {seed}"
            );
        }
    }

    #[test]
    fn leading_silence_does_not_change_keys() {
        let cfg = DetectorConfig::default();
        let audio = synthesize_sequence("*1*1*1#", 60, 40, 8000, 0.4, 0.0, &mut rng(5)).unwrap();
        let reference = keys_to_string(&decode_key_sequence(&audio, 8000, &cfg).unwrap());
        for pad in (0..=cfg.block_size).step_by(7) {
            let mut shifted = vec![0.0; pad];
            shifted.extend_from_slice(&audio);
            let got = keys_to_string(&decode_key_sequence(&shifted, 8000, &cfg).unwrap());
            assert_eq!(got, reference, "pad {pad}");
        }
    }

    #[test]
    fn more_noise_never_helps() {
        let cfg = DetectorConfig::default();
        let keys = "159D*#";
        let correct = |noise: f64, seed: u64| {
            let audio = synthesize_sequence(keys, 60, 40, 8000, 0.25, noise, &mut rng(seed)).unwrap();
            let got = keys_to_string(&decode_key_sequence(&audio, 8000, &cfg).unwrap());
            got.chars().zip(keys.chars()).filter(|(a, b)| a == b).count()
        };
        let mut ok = 0;
        let total = 40;
        for seed in 0..total {
            if correct(0.35, seed) <= correct(0.1, seed) {
                ok += 1;
            }
        }
        assert!(ok * 100 >= total * 95, "{ok}/{total}");
    }

    #[test]
    fn low_sample_rate_rejected() {
        let cfg = DetectorConfig::default();
        assert_eq!(
            decode_key_sequence(&[0.0; 700], 1000, &cfg),
            Err(DtmfError::SampleRateTooLow(1000))
        );
    }

    #[test]
    fn other_sample_rates() {
        let cfg = DetectorConfig::for_sample_rate(16_000);
        assert_eq!(cfg.block_size, 410);
        let audio = synthesize_sequence("42#", 60, 40, 16_000, 0.4, 0.0, &mut rng(6)).unwrap();
        assert_eq!(
            keys_to_string(&decode_key_sequence(&audio, 16_000, &cfg).unwrap()),
            "42#"
        );
    }

    #[test]
    fn wav_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.wav");
        let audio = synthesize_sequence("*1*1*1#", 60, 40, 8000, 0.4, 0.0, &mut rng(7)).unwrap();
        write_wav(&path, &audio, 8000).unwrap();
        let (back, sr) = read_wav(&path).unwrap();
        assert_eq!(sr, 8000);
        assert_eq!(back.len(), audio.len());
        let ev = decode_key_sequence(&back, sr, &DetectorConfig::default()).unwrap();
        assert_eq!(keys_to_string(&ev), "*1*1*1#");
    }

    #[test]
    fn stereo_wav_is_unsupported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for _ in 0..100 {
            w.write_sample(0i16).unwrap();
        }
        w.finalize().unwrap();
        assert!(matches!(read_wav(&path), Err(DtmfError::UnsupportedFormat(_))));
    }

    #[test]
    fn pcm_bytes_round_trip() {
        let s = vec![0.0, 0.5, -0.5, 0.999];
        let back = pcm16_le_to_samples(&samples_to_pcm16_le(&s)).unwrap();
        for (a, b) in s.iter().zip(back) {
            assert!((a - b).abs() < 1e-4);
        }
        assert!(pcm16_le_to_samples(&[1, 2, 3]).is_err());
    }
}
