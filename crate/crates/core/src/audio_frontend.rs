//! Mono PCM → log-mel spectrogram windows.
//!
//! Magnitude STFT (periodic Hann window, no centering or padding), a
//! triangular HTK-spaced mel filterbank from 0 Hz to Nyquist with
//! area-normalized filters, then `log(1 + x)` compression.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rustfft::{num_complex::Complex, Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndiff::DenseArray;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DspConfig {
    pub sample_rate: u32,
    pub fft_size: usize,
    pub hop: usize,
    pub mel_bins: usize,
    pub context_seconds: f64,
    /// Normalize each mel bin separately instead of with one global mean/std.
    pub per_bin_normalization: bool,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self {
            sample_rate: 22050,
            fft_size: 1024,
            hop: 512,
            mel_bins: 128,
            context_seconds: 3.0,
            per_bin_normalization: false,
        }
    }
}

impl DspConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.hop > self.fft_size {
            return Err(Error::Config(format!(
                "hop {} must be in 1..={}",
                self.hop, self.fft_size
            )));
        }
        if self.mel_bins == 0 || self.fft_size < 2 || self.sample_rate == 0 {
            return Err(Error::Config("mel_bins, fft_size and sample_rate must be positive".into()));
        }
        if self.context_samples() < self.fft_size {
            return Err(Error::Config("context shorter than one FFT frame".into()));
        }
        Ok(())
    }

    /// Frames produced from `n` samples (`n >= fft_size`).
    pub fn frames_for(&self, n: usize) -> usize {
        1 + (n - self.fft_size) / self.hop
    }

    pub fn context_samples(&self) -> usize {
        (self.context_seconds * f64::from(self.sample_rate)).round() as usize
    }

    /// Frames in one model input window (128 under defaults).
    pub fn context_frames(&self) -> usize {
        self.frames_for(self.context_samples())
    }
}

/// Log-mel spectrogram, `[mel_bins, frames]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpec {
    pub values: DenseArray,
    pub source: String,
}

impl MelSpec {
    pub fn mel_bins(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn frames(&self) -> usize {
        self.values.shape()[1]
    }

    /// Window of `frames` frames starting at `offset`.
    pub fn window(&self, offset: usize, frames: usize) -> Result<MelSpec> {
        if offset + frames > self.frames() || frames == 0 {
            return Err(Error::Length {
                needed: offset + frames,
                got: self.frames(),
                unit: "frames",
            });
        }
        let bins = self.mel_bins();
        let mut data = Vec::with_capacity(bins * frames);
        for b in 0..bins {
            data.extend_from_slice(&self.values.row(b)[offset..offset + frames]);
        }
        Ok(MelSpec {
            values: DenseArray::from_parts_unchecked(vec![bins, frames], data),
            source: self.source.clone(),
        })
    }

    /// Non-overlapping windows of `frames` frames starting at 0; a trailing
    /// partial window is dropped.
    pub fn grid_windows(&self, frames: usize) -> Result<Vec<MelSpec>> {
        if self.frames() < frames {
            return Err(Error::Length {
                needed: frames,
                got: self.frames(),
                unit: "frames",
            });
        }
        (0..self.frames() / frames)
            .map(|w| self.window(w * frames, frames))
            .collect()
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filters over `0..=fft_size/2` FFT bins.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// Edge frequencies, `mel_bins + 2` of them; filter `m` peaks at `edges[m+1]`.
    edges: Vec<f64>,
    /// `[mel_bins, fft_size/2 + 1]`
    weights: Vec<Vec<f64>>,
}

impl MelFilterbank {
    pub fn new(cfg: &DspConfig) -> Self {
        let nyquist = f64::from(cfg.sample_rate) / 2.0;
        let top = hz_to_mel(nyquist);
        let edges: Vec<f64> = (0..cfg.mel_bins + 2)
            .map(|k| mel_to_hz(top * k as f64 / (cfg.mel_bins + 1) as f64))
            .collect();
        let n_freqs = cfg.fft_size / 2 + 1;
        let bin_hz = f64::from(cfg.sample_rate) / cfg.fft_size as f64;
        let weights = (0..cfg.mel_bins)
            .map(|m| {
                let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                let area = 2.0 / (hi - lo);
                (0..n_freqs)
                    .map(|k| {
                        let f = k as f64 * bin_hz;
                        let w = if f > lo && f <= mid {
                            (f - lo) / (mid - lo)
                        } else if f > mid && f < hi {
                            (hi - f) / (hi - mid)
                        } else {
                            0.0
                        };
                        w * area
                    })
                    .collect()
            })
            .collect();
        Self { edges, weights }
    }

    pub fn center_hz(&self, m: usize) -> f64 {
        self.edges[m + 1]
    }

    pub fn num_bins(&self) -> usize {
        self.weights.len()
    }

    pub fn apply(&self, magnitudes: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| w.iter().zip(magnitudes).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Reusable STFT + filterbank.
pub struct MelExtractor {
    cfg: DspConfig,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    bank: MelFilterbank,
}

impl MelExtractor {
    pub fn new(cfg: &DspConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.fft_size;
        // periodic Hann
        let window = (0..n)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(n);
        Ok(Self {
            cfg: cfg.clone(),
            window,
            fft,
            bank: MelFilterbank::new(cfg),
        })
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.bank
    }

    /// Mel energies before log compression, `[mel_bins, frames]`.
    pub fn mel_energies(&self, pcm: &[f64]) -> Result<DenseArray> {
        let n = self.cfg.fft_size;
        if pcm.len() < n {
            return Err(Error::Length {
                needed: n,
                got: pcm.len(),
                unit: "samples",
            });
        }
        if pcm.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("pcm input".into()));
        }
        let frames = self.cfg.frames_for(pcm.len());
        let bins = self.cfg.mel_bins;
        let mut out = vec![0.0; bins * frames];
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        let mut mags = vec![0.0; n / 2 + 1];
        for f in 0..frames {
            let start = f * self.cfg.hop;
            for (i, c) in buf.iter_mut().enumerate() {
                *c = Complex::new(pcm[start + i] * self.window[i], 0.0);
            }
            self.fft.process(&mut buf);
            for (m, c) in mags.iter_mut().zip(&buf) {
                *m = c.norm();
            }
            for (b, e) in self.bank.apply(&mags).into_iter().enumerate() {
                out[b * frames + f] = e;
            }
        }
        Ok(DenseArray::from_parts_unchecked(vec![bins, frames], out))
    }

    pub fn melspectrogram(&self, pcm: &[f64], source: &str) -> Result<MelSpec> {
        let mut values = self.mel_energies(pcm)?;
        for v in values.data_mut() {
            *v = v.ln_1p();
        }
        Ok(MelSpec {
            values,
            source: source.to_string(),
        })
    }
}

pub fn melspectrogram(pcm: &[f64], cfg: &DspConfig) -> Result<MelSpec> {
    MelExtractor::new(cfg)?.melspectrogram(pcm, "")
}

/// Global (or per-bin) standardization statistics, fit on training items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: f64,
    pub std: f64,
    /// Per-bin (mean, std) when per-bin normalization is enabled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_bin: Option<Vec<(f64, f64)>>,
}

impl Normalizer {
    pub fn identity() -> Self {
        Self {
            mean: 0.0,
            std: 1.0,
            per_bin: None,
        }
    }
}

fn mean_std<'a>(values: impl Iterator<Item = &'a f64> + Clone) -> Option<(f64, f64)> {
    let (mut n, mut sum) = (0usize, 0.0);
    for v in values.clone() {
        sum += v;
        n += 1;
    }
    if n == 0 {
        return None;
    }
    let mean = sum / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    Some((mean, var.sqrt()))
}

/// Scalar population mean/std over every cell of every training spectrogram.
pub fn fit_normalizer(train: &[&MelSpec]) -> Result<Normalizer> {
    let (mean, std) = mean_std(train.iter().flat_map(|m| m.values.data()))
        .ok_or_else(|| Error::DegenerateStatistics("empty training set".into()))?;
    if std <= 0.0 || !std.is_finite() {
        return Err(Error::DegenerateStatistics(format!(
            "training spectrograms have std {std}"
        )));
    }
    Ok(Normalizer {
        mean,
        std,
        per_bin: None,
    })
}

/// Global statistics plus per-bin (mean, std) pairs.
pub fn fit_normalizer_per_bin(train: &[&MelSpec]) -> Result<Normalizer> {
    let mut norm = fit_normalizer(train)?;
    let bins = train[0].mel_bins();
    let stats = (0..bins)
        .map(|b| {
            let (m, s) = mean_std(train.iter().flat_map(|x| x.values.row(b))).unwrap();
            // flat bins fall back to the global scale
            (m, if s > 0.0 { s } else { norm.std })
        })
        .collect();
    norm.per_bin = Some(stats);
    Ok(norm)
}

pub fn apply_normalizer(m: &MelSpec, n: &Normalizer) -> MelSpec {
    let mut out = m.clone();
    let frames = m.frames();
    match &n.per_bin {
        None => {
            for v in out.values.data_mut() {
                *v = (*v - n.mean) / n.std;
            }
        }
        Some(stats) => {
            for (b, chunk) in out.values.data_mut().chunks_mut(frames).enumerate() {
                let (mean, std) = stats[b];
                for v in chunk {
                    *v = (*v - mean) / std;
                }
            }
        }
    }
    out
}

/// Uniformly placed contiguous window of exactly `frames` frames.
pub fn random_crop<R: Rng + ?Sized>(m: &MelSpec, frames: usize, rng: &mut R) -> Result<MelSpec> {
    let offset = random_offset(m.frames(), frames, rng)?;
    m.window(offset, frames)
}

pub fn random_offset<R: Rng + ?Sized>(total: usize, frames: usize, rng: &mut R) -> Result<usize> {
    if total < frames {
        return Err(Error::Length {
            needed: frames,
            got: total,
            unit: "frames",
        });
    }
    Ok(if total == frames {
        0
    } else {
        rng.gen_range(0..=total - frames)
    })
}

/// Reads a 16-bit PCM mono WAV at the configured rate as samples in [-1, 1).
pub fn read_wav(path: impl AsRef<Path>, sample_rate: u32) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let wav_err = |msg: String| Error::Wav {
        path: path.to_path_buf(),
        msg,
    };
    let reader = hound::WavReader::open(path).map_err(|e| wav_err(e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 1
        || spec.bits_per_sample != 16
        || spec.sample_format != hound::SampleFormat::Int
        || spec.sample_rate != sample_rate
    {
        return Err(wav_err(format!(
            "need 16-bit PCM mono at {sample_rate} Hz, got {} ch / {} bit / {} Hz",
            spec.channels, spec.bits_per_sample, spec.sample_rate
        )));
    }
    reader
        .into_samples::<i16>()
        .map(|s| {
            s.map(|v| f64::from(v) / 32768.0)
                .map_err(|e| wav_err(e.to_string()))
        })
        .collect()
}

/// Writes samples (clipped to [-1, 1]) as 16-bit PCM mono.
pub fn write_wav(path: impl AsRef<Path>, samples: &[f64], sample_rate: u32) -> Result<()> {
    let path = path.as_ref();
    let wav_err = |e: hound::Error| Error::Wav {
        path: path.to_path_buf(),
        msg: e.to_string(),
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        w.write_sample(v).map_err(wav_err)?;
    }
    w.finalize().map_err(wav_err)
}

const MEL_MAGIC: &[u8; 4] = b"MEL1";

/// Precomputed spectrogram cache: `MEL1`, u32 LE bins, u32 LE frames, then
/// f32 LE row-major values.
pub fn write_mel_cache<W: Write>(m: &MelSpec, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    let io = |e| Error::io("<mel cache>", e);
    w.write_all(MEL_MAGIC).map_err(io)?;
    w.write_all(&(m.mel_bins() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&(m.frames() as u32).to_le_bytes()).map_err(io)?;
    for &v in m.values.data() {
        w.write_all(&(v as f32).to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_mel_cache<R: Read>(reader: R, source: &str) -> Result<MelSpec> {
    let mut r = BufReader::new(reader);
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::io("<mel cache>", e))?;
    if bytes.len() < 12 || &bytes[..4] != MEL_MAGIC {
        return Err(Error::Validation("mel cache: bad magic or header".into()));
    }
    let bins = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let frames = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload = &bytes[12..];
    if payload.len() != bins * frames * 4 {
        return Err(Error::Validation(format!(
            "mel cache: expected {} payload bytes, got {}",
            bins * frames * 4,
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    Ok(MelSpec {
        values: DenseArray::new(vec![bins, frames], data)?,
        source: source.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn sine(freq: f64, amp: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / 22050.0).sin())
            .collect()
    }

    #[test]
    fn three_seconds_gives_128_square() {
        let cfg = DspConfig::default();
        assert_eq!(cfg.context_samples(), 66150);
        assert_eq!(cfg.context_frames(), 128);
        let m = melspectrogram(&vec![0.0; 66150], &cfg).unwrap();
        assert_eq!(m.values.shape(), &[128, 128]);
    }

    #[test]
    fn frame_formula_exact() {
        let cfg = DspConfig::default();
        let ex = MelExtractor::new(&cfg).unwrap();
        for n in [1024, 1025, 1535, 1536, 1537, 4000, 22050] {
            let m = ex.melspectrogram(&vec![0.1; n], "").unwrap();
            assert_eq!(m.frames(), 1 + (n - 1024) / 512, "n={n}");
        }
    }

    #[test]
    fn silence_is_zero() {
        let m = melspectrogram(&vec![0.0; 4096], &DspConfig::default()).unwrap();
        assert!(m.values.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn short_input_is_length_error() {
        assert!(matches!(
            melspectrogram(&[0.0; 1023], &DspConfig::default()),
            Err(Error::Length { needed: 1024, .. })
        ));
    }

    #[test]
    fn sine_at_center_peaks_its_bin() {
        let cfg = DspConfig::default();
        let ex = MelExtractor::new(&cfg).unwrap();
        for m in [30, 60, 90, 120] {
            let f = ex.filterbank().center_hz(m);
            let spec = ex.melspectrogram(&sine(f, 0.5, 8192), "").unwrap();
            for t in 0..spec.frames() {
                let col: Vec<f64> = (0..cfg.mel_bins).map(|b| spec.values.get2(b, t)).collect();
                let best = col
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .unwrap()
                    .0;
                assert_eq!(best, m, "filter {m} frame {t}");
            }
        }
    }

    #[test]
    fn doubling_amplitude_never_lowers_energy() {
        let ex = MelExtractor::new(&DspConfig::default()).unwrap();
        let x: Vec<f64> = sine(440.0, 0.2, 5000)
            .iter()
            .zip(sine(3000.0, 0.1, 5000))
            .map(|(a, b)| a + b)
            .collect();
        let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let a = ex.mel_energies(&x).unwrap();
        let b = ex.mel_energies(&x2).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(p, q)| q >= p));
    }

    fn spec(rows: &[Vec<f64>]) -> MelSpec {
        MelSpec {
            values: DenseArray::from_rows(rows).unwrap(),
            source: String::new(),
        }
    }

    #[test]
    fn normalizer_hand_case() {
        let a = spec(&[vec![0.0, 2.0]]);
        let b = spec(&[vec![2.0, 4.0]]);
        let n = fit_normalizer(&[&a, &b]).unwrap();
        assert!((n.mean - 2.0).abs() < 1e-15);
        assert!((n.std - 2f64.sqrt()).abs() < 1e-15);
        let na = apply_normalizer(&a, &n);
        let nb = apply_normalizer(&b, &n);
        let all: Vec<f64> = na.values.data().iter().chain(nb.values.data()).copied().collect();
        let mean = all.iter().sum::<f64>() / 4.0;
        let var = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-15 && (var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_data_is_degenerate() {
        let a = spec(&[vec![3.0, 3.0]]);
        assert!(matches!(
            fit_normalizer(&[&a]),
            Err(Error::DegenerateStatistics(_))
        ));
        assert!(fit_normalizer(&[]).is_err());
    }

    #[test]
    fn identity_normalizer_is_noop() {
        let a = spec(&[vec![0.5, -1.0], vec![2.0, 7.0]]);
        assert_eq!(apply_normalizer(&a, &Normalizer::identity()), a);
    }

    #[test]
    fn per_bin_normalizer_standardizes_rows() {
        let a = spec(&[vec![0.0, 2.0], vec![10.0, 30.0]]);
        let n = fit_normalizer_per_bin(&[&a]).unwrap();
        let out = apply_normalizer(&a, &n);
        assert_eq!(out.values.data(), &[-1.0, 1.0, -1.0, 1.0]);
    }

    #[test]
    fn crop_edge_cases() {
        let m = spec(&[vec![1.0, 2.0, 3.0]]);
        let mut rng = substream(0, "t");
        assert_eq!(random_crop(&m, 3, &mut rng).unwrap(), m);
        assert!(matches!(
            random_crop(&m, 4, &mut rng),
            Err(Error::Length { .. })
        ));
        let a = random_offset(256, 128, &mut substream(5, "c")).unwrap();
        let b = random_offset(256, 128, &mut substream(5, "c")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn grid_windows_drop_partial() {
        let m = spec(&[vec![1.0, 2.0, 3.0, 4.0, 5.0]]);
        let w = m.grid_windows(2).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[1].values.data(), &[3.0, 4.0]);
        assert!(m.grid_windows(6).is_err());
    }

    #[test]
    fn mel_cache_roundtrip() {
        let m = spec(&[vec![0.25, -1.5], vec![3.0, 8.0]]);
        let mut buf = Vec::new();
        write_mel_cache(&m, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"MEL1");
        assert_eq!(buf.len(), 12 + 16);
        assert_eq!(read_mel_cache(&buf[..], "").unwrap(), m);
        assert!(read_mel_cache(&buf[..10], "").is_err());
    }

    #[test]
    fn wav_roundtrip_and_format_checks() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let x = sine(440.0, 0.5, 2000);
        write_wav(&p, &x, 22050).unwrap();
        let y = read_wav(&p, 22050).unwrap();
        assert_eq!(y.len(), x.len());
        assert!(x.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-4));
        assert!(matches!(read_wav(&p, 44100), Err(Error::Wav { .. })));
    }
}
