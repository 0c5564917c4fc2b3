//! Synthetic datasets with planted user/item factors and audio whose
//! spectrum encodes the item factors.
//!
//! `p(u listens to i) = σ(s·u*ᵀv* − τ)` with `τ` set by bisection so the
//! expected density hits the target. Item `i`'s clip is a sum of `D*`
//! sinusoids at mel-filter centers with amplitudes `softplus(v*_i)`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng as _;
use rand_distr::{Distribution, Geometric, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::audio_frontend::{write_wav, DspConfig, MelFilterbank};
use crate::error::{Error, Result};
use crate::interactions::{InteractionSet, Triple};
use crate::ndiff::dot;
use crate::rng::{self, streams, Rng};

pub const TRIPLETS_FILE: &str = "triplets.tsv";
pub const TAGS_FILE: &str = "tags.tsv";
pub const AUDIO_DIR: &str = "audio";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

const MIN_TONE_HZ: f64 = 200.0;
const MAX_TONE_HZ: f64 = 8000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_users: usize,
    pub num_items: usize,
    pub rank: usize,
    pub density: f64,
    pub clip_seconds: f64,
    pub num_tags: usize,
    /// Fraction of items carrying each tag.
    pub tag_rate: f64,
    /// Multiplies `u*ᵀv*` inside the sigmoid.
    pub sharpness: f64,
    /// Standard deviation of additive white noise, relative to full scale.
    pub noise: f64,
    pub sample_rate: u32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_users: 500,
            num_items: 300,
            rank: 8,
            density: 0.05,
            clip_seconds: 6.0,
            num_tags: 10,
            tag_rate: 0.3,
            sharpness: 2.0,
            noise: 1e-3,
            sample_rate: 22050,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_users == 0 || self.num_items == 0 || self.rank == 0 || self.num_tags == 0 {
            return Err(Error::Config("synth sizes must all be >= 1".into()));
        }
        if !(self.density > 0.0 && self.density < 1.0) {
            return Err(Error::Config(format!("density {} not in (0, 1)", self.density)));
        }
        if !(self.tag_rate > 0.0 && self.tag_rate < 1.0) {
            return Err(Error::Config(format!("tag_rate {} not in (0, 1)", self.tag_rate)));
        }
        if !(self.clip_seconds > 0.0 && self.sharpness > 0.0 && self.noise >= 0.0) {
            return Err(Error::Config(
                "clip_seconds and sharpness must be > 0, noise >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn user_id(u: usize) -> String {
        format!("user{u:05}")
    }

    pub fn item_id(i: usize) -> String {
        format!("item{i:05}")
    }
}

/// Planted factors and everything needed to regenerate scores and tags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SynthConfig,
    pub tau: f64,
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
    pub user_factors: Vec<Vec<f64>>,
    pub item_factors: Vec<Vec<f64>>,
    pub frequencies_hz: Vec<f64>,
    pub gain: f64,
    pub tag_names: Vec<String>,
    pub tag_weights: Vec<Vec<f64>>,
    pub tag_thresholds: Vec<f64>,
}

impl GroundTruth {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Item `i`'s tag vector: tag `t` is on when `w_tᵀv*_i > threshold_t`.
    pub fn item_tags(&self, i: usize) -> Vec<bool> {
        self.tag_weights
            .iter()
            .zip(&self.tag_thresholds)
            .map(|(w, &th)| dot(w, &self.item_factors[i]) > th)
            .collect()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn gaussian_rows(rng: &mut Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

/// `τ` with `mean σ(logit − τ) = density`, by bisection.
pub fn calibrate_tau(logits: &[f64], density: f64) -> Result<f64> {
    let mean_p = |tau: f64| logits.iter().map(|&z| sigmoid(z - tau)).sum::<f64>() / logits.len() as f64;
    let span = logits.iter().fold(0.0f64, |m, z| m.max(z.abs())) + 50.0;
    let (mut lo, mut hi) = (-span, span);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_p(mid) > density {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    if (mean_p(tau) - density).abs() > 1e-6 * density {
        return Err(Error::Config(format!("density {density} unreachable")));
    }
    Ok(tau)
}

/// `count` distinct filter centers in [200, 8000] Hz, evenly spread over
/// the eligible filters.
pub fn tone_frequencies(dsp: &DspConfig, count: usize) -> Result<Vec<f64>> {
    let fb = MelFilterbank::new(dsp);
    let eligible: Vec<f64> = (0..fb.num_bins())
        .map(|m| fb.center_hz(m))
        .filter(|&f| (MIN_TONE_HZ..=MAX_TONE_HZ).contains(&f))
        .collect();
    if eligible.len() < count {
        return Err(Error::Config(format!(
            "only {} mel centers in {MIN_TONE_HZ}-{MAX_TONE_HZ} Hz, need {count}",
            eligible.len()
        )));
    }
    Ok((0..count)
        .map(|d| {
            let pos = if count == 1 {
                eligible.len() / 2
            } else {
                d * (eligible.len() - 1) / (count - 1)
            };
            eligible[pos]
        })
        .collect())
}

/// One clip: `gain · Σ_d softplus(v_d) sin(2π f_d t + φ_d)` plus noise.
pub fn synth_clip(
    v: &[f64],
    freqs: &[f64],
    phases: &[f64],
    gain: f64,
    noise: f64,
    samples: usize,
    sample_rate: u32,
    rng: &mut Rng,
) -> Vec<f64> {
    let amps: Vec<f64> = v.iter().map(|&x| gain * softplus(x)).collect();
    let sr = sample_rate as f64;
    (0..samples)
        .map(|n| {
            let t = n as f64 / sr;
            let tone: f64 = amps
                .iter()
                .zip(freqs)
                .zip(phases)
                .map(|((a, f), p)| a * (2.0 * std::f64::consts::PI * f * t + p).sin())
                .sum();
            let z: f64 = rng.sample(StandardNormal);
            (tone + noise * z).clamp(-1.0, 1.0)
        })
        .collect()
}

/// Positive lists per user, with counts.
fn draw_interactions(
    cfg: &SynthConfig,
    probs: &[Vec<f64>],
    rng: &mut Rng,
) -> Vec<Vec<(usize, u64)>> {
    let geom = Geometric::new(0.5).expect("valid probability");
    let mut lists: Vec<Vec<usize>> = Vec::with_capacity(cfg.num_users);
    for row in probs {
        let mut items = Vec::new();
        for _ in 0..100 {
            items = (0..cfg.num_items).filter(|&i| rng.gen::<f64>() < row[i]).collect();
            if !items.is_empty() {
                break;
            }
        }
        if items.is_empty() {
            let best = (0..cfg.num_items).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            items.push(best);
        }
        lists.push(items);
    }
    let mut covered = vec![false; cfg.num_items];
    for l in &lists {
        for &i in l {
            covered[i] = true;
        }
    }
    for i in (0..cfg.num_items).filter(|&i| !covered[i]) {
        let u = (0..cfg.num_users).max_by(|&a, &b| probs[a][i].total_cmp(&probs[b][i])).unwrap();
        let pos = lists[u].binary_search(&i).unwrap_err();
        lists[u].insert(pos, i);
    }
    lists
        .into_iter()
        .map(|items| items.into_iter().map(|i| (i, 1 + geom.sample(rng))).collect())
        .collect()
}

/// What `generate` wrote.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dir: PathBuf,
    pub interactions: InteractionSet,
    pub truth: GroundTruth,
    pub realized_density: f64,
}

/// Writes `triplets.tsv`, `tags.tsv`, `audio/<item>.wav` and
/// `ground_truth.json` under `out_dir`.
pub fn generate(cfg: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<SynthOutput> {
    cfg.validate()?;
    let out_dir = out_dir.as_ref();
    let audio_dir = out_dir.join(AUDIO_DIR);
    fs::create_dir_all(&audio_dir).map_err(|e| Error::io(&audio_dir, e))?;
    let sub = |part: &str| rng::substream(cfg.seed, &format!("{}/{part}", streams::SYNTH));

    let mut frng = sub("factors");
    let users = gaussian_rows(&mut frng, cfg.num_users, cfg.rank);
    let items = gaussian_rows(&mut frng, cfg.num_items, cfg.rank);

    let logits: Vec<f64> = users
        .iter()
        .flat_map(|u| items.iter().map(|v| cfg.sharpness * dot(u, v)))
        .collect();
    let tau = calibrate_tau(&logits, cfg.density)?;
    let probs: Vec<Vec<f64>> = logits
        .chunks(cfg.num_items)
        .map(|row| row.iter().map(|&z| sigmoid(z - tau)).collect())
        .collect();
    let lists = draw_interactions(cfg, &probs, &mut sub("interactions"));

    let user_ids: Vec<String> = (0..cfg.num_users).map(SynthConfig::user_id).collect();
    let item_ids: Vec<String> = (0..cfg.num_items).map(SynthConfig::item_id).collect();
    let mut triples = Vec::new();
    let mut seen = vec![None; cfg.num_items];
    let mut item_vocab = Vec::new();
    for (u, l) in lists.iter().enumerate() {
        for &(i, count) in l {
            let idx = *seen[i].get_or_insert_with(|| {
                item_vocab.push(item_ids[i].clone());
                item_vocab.len() - 1
            });
            triples.push(Triple {
                user: u,
                item: idx,
                count,
            });
        }
    }
    let interactions = InteractionSet {
        user_vocab: user_ids.clone(),
        item_vocab,
        triples,
    };
    let path = out_dir.join(TRIPLETS_FILE);
    let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    interactions.write(BufWriter::new(f))?;
    let realized_density =
        interactions.triples.len() as f64 / (cfg.num_users * cfg.num_items) as f64;

    // tags: top `tag_rate` fraction of each random projection
    let mut trng = sub("tags");
    let tag_weights = gaussian_rows(&mut trng, cfg.num_tags, cfg.rank);
    let tag_thresholds: Vec<f64> = tag_weights
        .iter()
        .map(|w| {
            let mut s: Vec<f64> = items.iter().map(|v| dot(w, v)).collect();
            s.sort_by(f64::total_cmp);
            let k = ((1.0 - cfg.tag_rate) * cfg.num_items as f64).floor() as usize;
            s[k.min(cfg.num_items - 1).saturating_sub(1)]
        })
        .collect();
    let tag_names: Vec<String> = (0..cfg.num_tags).map(|t| format!("tag{t:02}")).collect();

    let dsp = DspConfig {
        sample_rate: cfg.sample_rate,
        ..DspConfig::default()
    };
    let frequencies_hz = tone_frequencies(&dsp, cfg.rank)?;
    let peak = items
        .iter()
        .map(|v| v.iter().map(|&x| softplus(x)).sum::<f64>())
        .fold(0.0f64, f64::max);
    let gain = 0.9 / peak;

    let truth = GroundTruth {
        config: cfg.clone(),
        tau,
        user_ids,
        item_ids,
        user_factors: users,
        item_factors: items,
        frequencies_hz,
        gain,
        tag_names,
        tag_weights,
        tag_thresholds,
    };

    let path = out_dir.join(TAGS_FILE);
    let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(f);
    for i in 0..cfg.num_items {
        let on: Vec<&str> = truth
            .item_tags(i)
            .iter()
            .zip(&truth.tag_names)
            .filter(|(b, _)| **b)
            .map(|(_, n)| n.as_str())
            .collect();
        if !on.is_empty() {
            writeln!(w, "{}\t{}", truth.item_ids[i], on.join(",")).map_err(|e| Error::io(&path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let samples = (cfg.clip_seconds * cfg.sample_rate as f64).round() as usize;
    let mut arng = sub("audio");
    for (i, v) in truth.item_factors.iter().enumerate() {
        let phases: Vec<f64> = (0..cfg.rank)
            .map(|_| arng.gen_range(0.0..std::f64::consts::TAU))
            .collect();
        let pcm = synth_clip(
            v,
            &truth.frequencies_hz,
            &phases,
            gain,
            cfg.noise,
            samples,
            cfg.sample_rate,
            &mut arng,
        );
        write_wav(
            audio_dir.join(format!("{}.wav", truth.item_ids[i])),
            &pcm,
            cfg.sample_rate,
        )?;
    }

    let path = out_dir.join(GROUND_TRUTH_FILE);
    let json = serde_json::to_string(&truth)?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;

    Ok(SynthOutput {
        dir: out_dir.to_path_buf(),
        interactions,
        truth,
        realized_density,
    })
}
