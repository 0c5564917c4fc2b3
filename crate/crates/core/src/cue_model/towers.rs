//! The two tower architectures: an index-embedding tower (users, and items
//! in the index-index variant) and the 1-D convolutional audio tower.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndiff::{ops, DenseArray, GradTape, NodeId, Padding, Parameterized};

/// Weight initialization for the dense and convolution layers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightInit {
    /// Uniform with limit √(6 / fan_in).
    #[default]
    He,
    /// Uniform with limit √(6 / (fan_in + fan_out)).
    Glorot,
}

fn dense(
    rng: &mut impl Rng,
    init: WeightInit,
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
) -> DenseArray {
    let limit = match init {
        WeightInit::He => (6.0 / fan_in as f64).sqrt(),
        WeightInit::Glorot => (6.0 / (fan_in + fan_out) as f64).sqrt(),
    };
    let dist = Uniform::new_inclusive(-limit, limit);
    let n = shape.iter().product();
    DenseArray::from_parts_unchecked(shape.to_vec(), (0..n).map(|_| dist.sample(rng)).collect())
}

fn uniform(rng: &mut impl Rng, shape: &[usize], limit: f64) -> DenseArray {
    let dist = Uniform::new_inclusive(-limit, limit);
    let n = shape.iter().product();
    DenseArray::from_parts_unchecked(shape.to_vec(), (0..n).map(|_| dist.sample(rng)).collect())
}

/// Lookup table → affine(E→E) → ReLU → affine(E→D).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTower {
    pub table: DenseArray,
    pub hidden_w: DenseArray,
    pub hidden_b: DenseArray,
    pub out_w: DenseArray,
    pub out_b: DenseArray,
}

/// Tape handles for an [`EmbeddingTower`], in `named_arrays` order.
#[derive(Debug, Clone, Copy)]
pub struct EmbeddingHandles {
    table: NodeId,
    hidden_w: NodeId,
    hidden_b: NodeId,
    out_w: NodeId,
    out_b: NodeId,
}

impl EmbeddingHandles {
    pub fn ids(&self) -> Vec<NodeId> {
        vec![self.table, self.hidden_w, self.hidden_b, self.out_w, self.out_b]
    }
}

impl EmbeddingTower {
    pub fn init(
        rng: &mut impl Rng,
        rows: usize,
        embed_dim: usize,
        out_dim: usize,
        init: WeightInit,
    ) -> Self {
        Self {
            table: uniform(rng, &[rows, embed_dim], 0.05),
            hidden_w: dense(rng, init, &[embed_dim, embed_dim], embed_dim, embed_dim),
            hidden_b: DenseArray::zeros(&[embed_dim]),
            out_w: dense(rng, init, &[out_dim, embed_dim], embed_dim, out_dim),
            out_b: DenseArray::zeros(&[out_dim]),
        }
    }

    pub fn rows(&self) -> usize {
        self.table.rows()
    }

    pub fn embed_dim(&self) -> usize {
        self.table.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.out_b.len()
    }

    pub fn forward(&self, idx: usize) -> Result<DenseArray> {
        let e = ops::embedding_lookup(&self.table, idx)?;
        let h = ops::relu(&ops::affine(&e, &self.hidden_w, &self.hidden_b)?);
        ops::affine(&h, &self.out_w, &self.out_b)
    }

    pub fn register<'a>(&'a self, tape: &mut GradTape<'a>) -> EmbeddingHandles {
        EmbeddingHandles {
            table: tape.param(&self.table),
            hidden_w: tape.param(&self.hidden_w),
            hidden_b: tape.param(&self.hidden_b),
            out_w: tape.param(&self.out_w),
            out_b: tape.param(&self.out_b),
        }
    }

    pub fn forward_tape(
        &self,
        tape: &mut GradTape<'_>,
        h: &EmbeddingHandles,
        idx: usize,
    ) -> Result<NodeId> {
        let e = tape.embedding(h.table, idx)?;
        let z = tape.affine(e, h.hidden_w, h.hidden_b)?;
        let a = tape.relu(z);
        tape.affine(a, h.out_w, h.out_b)
    }
}

impl Parameterized for EmbeddingTower {
    fn named_arrays(&self) -> Vec<(String, &DenseArray)> {
        vec![
            ("table".into(), &self.table),
            ("hidden_w".into(), &self.hidden_w),
            ("hidden_b".into(), &self.hidden_b),
            ("out_w".into(), &self.out_w),
            ("out_b".into(), &self.out_b),
        ]
    }

    fn arrays_mut(&mut self) -> Vec<&mut DenseArray> {
        vec![
            &mut self.table,
            &mut self.hidden_w,
            &mut self.hidden_b,
            &mut self.out_w,
            &mut self.out_b,
        ]
    }
}

pub const CONV_BLOCKS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioTowerConfig {
    pub mel_bins: usize,
    pub context_frames: usize,
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub pools: Vec<usize>,
    pub out_dim: usize,
    #[serde(default)]
    pub init: WeightInit,
}

impl AudioTowerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels.len() != CONV_BLOCKS || self.pools.len() != CONV_BLOCKS {
            return Err(Error::Config(format!(
                "audio tower needs exactly {CONV_BLOCKS} conv/pool blocks, got {} channels and {} pools",
                self.channels.len(),
                self.pools.len()
            )));
        }
        if self.channels.contains(&0) || self.pools.contains(&0) || self.kernel == 0 {
            return Err(Error::Config("channels, pools and kernel must be >= 1".into()));
        }
        if self.out_dim == 0 || self.mel_bins == 0 {
            return Err(Error::Config("out_dim and mel_bins must be >= 1".into()));
        }
        if self.frames_after_pooling() == 0 {
            return Err(Error::Config(format!(
                "{} frames vanish under pools {:?}",
                self.context_frames, self.pools
            )));
        }
        Ok(())
    }

    pub fn frames_after_pooling(&self) -> usize {
        self.pools.iter().fold(self.context_frames, |t, &p| t / p)
    }
}

/// Five `conv1d(same) → ReLU → maxpool` blocks over time, a global max over
/// the remaining frames, then an affine map to the feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioTower {
    pub config: AudioTowerConfig,
    pub conv_k: Vec<DenseArray>,
    pub conv_b: Vec<DenseArray>,
    pub out_w: DenseArray,
    pub out_b: DenseArray,
}

#[derive(Debug, Clone)]
pub struct AudioHandles {
    conv_k: Vec<NodeId>,
    conv_b: Vec<NodeId>,
    out_w: NodeId,
    out_b: NodeId,
}

impl AudioHandles {
    pub fn ids(&self) -> Vec<NodeId> {
        let mut v = Vec::new();
        for (k, b) in self.conv_k.iter().zip(&self.conv_b) {
            v.push(*k);
            v.push(*b);
        }
        v.push(self.out_w);
        v.push(self.out_b);
        v
    }
}

impl AudioTower {
    pub fn init(rng: &mut impl Rng, config: &AudioTowerConfig) -> Result<Self> {
        config.validate()?;
        let mut conv_k = Vec::new();
        let mut conv_b = Vec::new();
        let mut c_in = config.mel_bins;
        for &c_out in &config.channels {
            conv_k.push(dense(
                rng,
                config.init,
                &[c_out, c_in, config.kernel],
                c_in * config.kernel,
                c_out * config.kernel,
            ));
            conv_b.push(DenseArray::zeros(&[c_out]));
            c_in = c_out;
        }
        Ok(Self {
            config: config.clone(),
            conv_k,
            conv_b,
            out_w: dense(rng, config.init, &[config.out_dim, c_in], c_in, config.out_dim),
            out_b: DenseArray::zeros(&[config.out_dim]),
        })
    }

    pub fn out_dim(&self) -> usize {
        self.out_b.len()
    }

    fn check_window(&self, x: &DenseArray) -> Result<()> {
        let want = [self.config.mel_bins, self.config.context_frames];
        if x.shape() != want {
            return Err(Error::Dimension(format!(
                "audio tower expects a {want:?} window, got {:?}",
                x.shape()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &DenseArray) -> Result<DenseArray> {
        self.check_window(x)?;
        let mut h = x.clone();
        for ((k, b), &p) in self.conv_k.iter().zip(&self.conv_b).zip(&self.config.pools) {
            let z = ops::relu(&ops::conv1d(&h, k, b, Padding::Same)?);
            h = ops::maxpool1d(&z, p)?.0;
        }
        let t = h.shape()[1];
        let (g, _) = ops::maxpool1d(&h, t)?;
        let c = g.len();
        ops::affine(&g.reshape(vec![c])?, &self.out_w, &self.out_b)
    }

    pub fn register<'a>(&'a self, tape: &mut GradTape<'a>) -> AudioHandles {
        let mut conv_k = Vec::new();
        let mut conv_b = Vec::new();
        for (k, b) in self.conv_k.iter().zip(&self.conv_b) {
            conv_k.push(tape.param(k));
            conv_b.push(tape.param(b));
        }
        AudioHandles {
            conv_k,
            conv_b,
            out_w: tape.param(&self.out_w),
            out_b: tape.param(&self.out_b),
        }
    }

    pub fn forward_tape(
        &self,
        tape: &mut GradTape<'_>,
        h: &AudioHandles,
        x: NodeId,
    ) -> Result<NodeId> {
        self.check_window(tape.value(x))?;
        let mut cur = x;
        for ((k, b), &p) in h.conv_k.iter().zip(&h.conv_b).zip(&self.config.pools) {
            let z = tape.conv1d(cur, *k, *b, Padding::Same)?;
            let a = tape.relu(z);
            cur = tape.maxpool1d(a, p)?;
        }
        let g = tape.time_max(cur)?;
        tape.affine(g, h.out_w, h.out_b)
    }
}

impl Parameterized for AudioTower {
    fn named_arrays(&self) -> Vec<(String, &DenseArray)> {
        let mut v = Vec::new();
        for (i, (k, b)) in self.conv_k.iter().zip(&self.conv_b).enumerate() {
            v.push((format!("conv{i}_k"), k));
            v.push((format!("conv{i}_b"), b));
        }
        v.push(("out_w".into(), &self.out_w));
        v.push(("out_b".into(), &self.out_b));
        v
    }

    fn arrays_mut(&mut self) -> Vec<&mut DenseArray> {
        let mut v: Vec<&mut DenseArray> = Vec::new();
        for (k, b) in self.conv_k.iter_mut().zip(self.conv_b.iter_mut()) {
            v.push(k);
            v.push(b);
        }
        v.push(&mut self.out_w);
        v.push(&mut self.out_b);
        v
    }
}
