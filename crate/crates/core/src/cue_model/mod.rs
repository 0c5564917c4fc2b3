//! Deep content-user embedding model.
//!
//! A user tower maps a user index to `y_U`, an audio tower maps a log-mel
//! window to `y_I`, and relevance is `cos(y_U, y_I)`. Training draws, for
//! each listened (user, song) pair, `k` songs the user has not listened to
//! and minimizes `Σ max(0, Δ − R(U, I⁺) + R(U, I⁻))`.
//!
//! The index-index variant swaps the audio tower for a second embedding
//! tower over item indices; it can only score items it was trained on.

mod sampling;
pub mod towers;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use sampling::sample_negatives;
pub use towers::{AudioTower, AudioTowerConfig, EmbeddingTower, WeightInit, CONV_BLOCKS};

use crate::audio_frontend::{random_offset, MelSpec};
use crate::error::{Error, Result};
use crate::interactions::BinaryInteractions;
use crate::ndiff::{cosine, DenseArray, GradTape, NodeId, OptimizerState, Parameterized, SgdConfig};
use crate::rng::{self, streams, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CueConfig {
    pub embed_dim: usize,
    pub feature_dim: usize,
    pub negatives: usize,
    pub margin: f64,
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub pools: Vec<usize>,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub base_lr: f64,
    pub momentum: f64,
    pub lr_decay: f64,
    pub seed: u64,
    /// Crop each distinct item once per batch and reuse that window for all
    /// of its slots in the batch, instead of a fresh crop per slot.
    pub share_batch_windows: bool,
    pub weight_init: WeightInit,
}

impl Default for CueConfig {
    fn default() -> Self {
        Self {
            embed_dim: 128,
            feature_dim: 50,
            negatives: 20,
            margin: 0.2,
            channels: vec![128; CONV_BLOCKS],
            kernel: 3,
            pools: vec![2; CONV_BLOCKS],
            batch_size: 32,
            max_epochs: 100,
            patience: 5,
            base_lr: 0.01,
            momentum: 0.9,
            lr_decay: 1e-6,
            seed: 0,
            share_batch_windows: false,
            weight_init: WeightInit::He,
        }
    }
}

impl CueConfig {
    pub fn sgd(&self) -> SgdConfig {
        SgdConfig {
            base_lr: self.base_lr,
            momentum: self.momentum,
            lr_decay: self.lr_decay,
        }
    }

    pub fn audio_config(&self, mel_bins: usize, context_frames: usize) -> AudioTowerConfig {
        AudioTowerConfig {
            mel_bins,
            context_frames,
            channels: self.channels.clone(),
            kernel: self.kernel,
            pools: self.pools.clone(),
            out_dim: self.feature_dim,
            init: self.weight_init,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.negatives == 0 {
            return Err(Error::Config("negatives per positive must be >= 1".into()));
        }
        if !(self.margin > 0.0 && self.margin < 2.0) {
            return Err(Error::Config(format!("margin {} must lie in (0, 2)", self.margin)));
        }
        if self.feature_dim == 0 || self.embed_dim == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "feature_dim, embed_dim and batch_size must be >= 1".into(),
            ));
        }
        if self.channels.len() != CONV_BLOCKS || self.pools.len() != CONV_BLOCKS {
            return Err(Error::Config(format!(
                "exactly {CONV_BLOCKS} conv/pool blocks required"
            )));
        }
        self.sgd().validate()
    }
}

/// Item side of the two-tower model.
#[derive(Debug, Clone, PartialEq)]
pub enum ItemTower {
    Audio(AudioTower),
    /// Index-index ablation; `trained[i]` marks items seen in training.
    Index {
        tower: EmbeddingTower,
        trained: Vec<bool>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TowerParams {
    pub user: EmbeddingTower,
    pub item: ItemTower,
}

impl Parameterized for TowerParams {
    fn named_arrays(&self) -> Vec<(String, &DenseArray)> {
        let mut v: Vec<(String, &DenseArray)> = self
            .user
            .named_arrays()
            .into_iter()
            .map(|(n, a)| (format!("user.{n}"), a))
            .collect();
        match &self.item {
            ItemTower::Audio(t) => {
                v.extend(t.named_arrays().into_iter().map(|(n, a)| (format!("audio.{n}"), a)))
            }
            ItemTower::Index { tower, .. } => {
                v.extend(tower.named_arrays().into_iter().map(|(n, a)| (format!("item.{n}"), a)))
            }
        }
        v
    }

    fn arrays_mut(&mut self) -> Vec<&mut DenseArray> {
        let mut v = self.user.arrays_mut();
        match &mut self.item {
            ItemTower::Audio(t) => v.extend(t.arrays_mut()),
            ItemTower::Index { tower, .. } => v.extend(tower.arrays_mut()),
        }
        v
    }
}

impl TowerParams {
    /// Fresh user + audio towers.
    pub fn init_audio(
        cfg: &CueConfig,
        num_users: usize,
        mel_bins: usize,
        context_frames: usize,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut rng = rng::substream(cfg.seed, streams::INIT);
        let user = EmbeddingTower::init(&mut rng, num_users, cfg.embed_dim, cfg.feature_dim, cfg.weight_init);
        let audio = AudioTower::init(&mut rng, &cfg.audio_config(mel_bins, context_frames))?;
        Ok(Self {
            user,
            item: ItemTower::Audio(audio),
        })
    }

    pub fn num_users(&self) -> usize {
        self.user.rows()
    }

    pub fn audio(&self) -> Option<&AudioTower> {
        match &self.item {
            ItemTower::Audio(a) => Some(a),
            ItemTower::Index { .. } => None,
        }
    }

    pub fn is_index_variant(&self) -> bool {
        matches!(self.item, ItemTower::Index { .. })
    }
}

/// Index-index variant: the item side mirrors the user side's layer shapes.
pub fn build_index_item_variant(
    cfg: &CueConfig,
    num_users: usize,
    num_items: usize,
    trained_items: &[usize],
) -> Result<TowerParams> {
    cfg.validate()?;
    let mut rng = rng::substream(cfg.seed, streams::INIT);
    let user = EmbeddingTower::init(&mut rng, num_users, cfg.embed_dim, cfg.feature_dim, cfg.weight_init);
    let tower = EmbeddingTower::init(&mut rng, num_items, cfg.embed_dim, cfg.feature_dim, cfg.weight_init);
    let mut trained = vec![false; num_items];
    for &i in trained_items {
        if i >= num_items {
            return Err(Error::Index {
                index: i,
                len: num_items,
            });
        }
        trained[i] = true;
    }
    Ok(TowerParams {
        user,
        item: ItemTower::Index { tower, trained },
    })
}

/// `y_U` for user `u`.
pub fn user_embed(p: &TowerParams, u: usize) -> Result<DenseArray> {
    p.user.forward(u)
}

/// `y_I` for one `[mel_bins, context_frames]` window.
pub fn item_embed(p: &TowerParams, window: &DenseArray) -> Result<DenseArray> {
    match &p.item {
        ItemTower::Audio(a) => a.forward(window),
        ItemTower::Index { .. } => Err(Error::Contract(
            "index-item variant has no audio tower".into(),
        )),
    }
}

/// `y_I` looked up by index in the index-item variant.
pub fn item_index_embed(p: &TowerParams, item: usize) -> Result<DenseArray> {
    match &p.item {
        ItemTower::Index { tower, trained } => {
            if !trained.get(item).copied().unwrap_or(false) {
                return Err(Error::ColdStart(item));
            }
            tower.forward(item)
        }
        ItemTower::Audio(_) => Err(Error::Contract(
            "audio variant embeds windows, not indices".into(),
        )),
    }
}

/// Mean of window embeddings over the non-overlapping window grid.
pub fn clip_embed(p: &TowerParams, mel: &MelSpec) -> Result<DenseArray> {
    let audio = p
        .audio()
        .ok_or_else(|| Error::Contract("clip embedding needs the audio tower".into()))?;
    mean_over_grid(mel, audio.config.context_frames, |w| audio.forward(w))
}

pub(crate) fn mean_over_grid(
    mel: &MelSpec,
    frames: usize,
    f: impl Fn(&DenseArray) -> Result<DenseArray>,
) -> Result<DenseArray> {
    let windows = mel.grid_windows(frames)?;
    let mut acc: Option<DenseArray> = None;
    for w in &windows {
        let y = f(&w.values)?;
        match &mut acc {
            Some(a) => a.axpy(1.0, &y),
            None => acc = Some(y),
        }
    }
    let mut acc = acc.expect("grid has at least one window");
    acc.scale(1.0 / windows.len() as f64);
    Ok(acc)
}

/// `R(U, I) = cos(y_U, y_I)`.
pub fn relevance(y_user: &DenseArray, y_item: &DenseArray) -> Result<f64> {
    cosine(y_user, y_item)
}

/// `Σ_neg max(0, Δ − r_pos + r_neg)`.
pub fn hinge_loss(r_pos: f64, r_negs: &[f64], margin: f64) -> f64 {
    r_negs
        .iter()
        .map(|&r| (margin - r_pos + r).max(0.0))
        .sum()
}

/// Relevance of user `u` to each clip.
pub fn score_user_items(p: &TowerParams, u: usize, items: &[&MelSpec]) -> Result<Vec<f64>> {
    let yu = user_embed(p, u)?;
    items
        .iter()
        .map(|m| relevance(&yu, &clip_embed(p, m)?))
        .collect()
}

/// One item slot in a training batch.
#[derive(Debug, Clone, PartialEq)]
pub enum ItemInput {
    Window { item: usize, window: DenseArray },
    Index(usize),
}

/// A user, one positive and `k` negatives, as slots into [`Batch::items`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainTuple {
    pub user: usize,
    pub positive: usize,
    pub negatives: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Batch {
    pub items: Vec<ItemInput>,
    pub tuples: Vec<TrainTuple>,
}

enum ItemHandles {
    Audio(towers::AudioHandles),
    Index(towers::EmbeddingHandles),
}

/// Records the mean tuple loss of `batch` on a fresh tape. Returns the tape,
/// the loss node and the parameter handles in `named_arrays` order.
pub fn batch_tape<'a>(
    p: &'a TowerParams,
    batch: &'a Batch,
    margin: f64,
) -> Result<(GradTape<'a>, NodeId, Vec<NodeId>)> {
    if batch.tuples.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let mut tape = GradTape::new();
    let uh = p.user.register(&mut tape);
    let ih = match &p.item {
        ItemTower::Audio(a) => ItemHandles::Audio(a.register(&mut tape)),
        ItemTower::Index { tower, .. } => ItemHandles::Index(tower.register(&mut tape)),
    };
    let mut handles = uh.ids();
    match &ih {
        ItemHandles::Audio(h) => handles.extend(h.ids()),
        ItemHandles::Index(h) => handles.extend(h.ids()),
    }

    let mut item_nodes: Vec<Option<NodeId>> = vec![None; batch.items.len()];
    let mut user_nodes: BTreeMap<usize, NodeId> = BTreeMap::new();
    let mut hinge_terms = Vec::new();
    for t in &batch.tuples {
        let yu = match user_nodes.get(&t.user) {
            Some(&n) => n,
            None => {
                let n = p.user.forward_tape(&mut tape, &uh, t.user)?;
                user_nodes.insert(t.user, n);
                n
            }
        };
        let mut embed = |tape: &mut GradTape<'a>, slot: usize| -> Result<NodeId> {
            if let Some(n) = item_nodes[slot] {
                return Ok(n);
            }
            let n = match (&p.item, &ih, &batch.items[slot]) {
                (ItemTower::Audio(a), ItemHandles::Audio(h), ItemInput::Window { window, .. }) => {
                    let x = tape.input(window);
                    a.forward_tape(tape, h, x)?
                }
                (ItemTower::Index { tower, .. }, ItemHandles::Index(h), ItemInput::Index(i)) => {
                    tower.forward_tape(tape, h, *i)?
                }
                _ => return Err(Error::Contract("batch item kind does not match model".into())),
            };
            item_nodes[slot] = Some(n);
            Ok(n)
        };
        let ypos = embed(&mut tape, t.positive)?;
        let rpos = tape.cosine(yu, ypos)?;
        for &s in &t.negatives {
            let yneg = embed(&mut tape, s)?;
            let rneg = tape.cosine(yu, yneg)?;
            let d = tape.sub(rneg, rpos)?;
            let shifted = tape.add_const(d, margin);
            hinge_terms.push(tape.relu(shifted));
        }
    }
    let total = tape.sum_all(&hinge_terms);
    let loss = tape.scale(total, 1.0 / batch.tuples.len() as f64);
    Ok((tape, loss, handles))
}

/// Mean tuple loss of `batch` and its gradient for every parameter array.
pub fn batch_loss_and_grads(
    p: &TowerParams,
    batch: &Batch,
    margin: f64,
) -> Result<(f64, Vec<DenseArray>)> {
    let (tape, loss, handles) = batch_tape(p, batch, margin)?;
    let value = tape.scalar(loss);
    let mut g = tape.backward(loss)?;
    let grads = handles
        .iter()
        .map(|&h| {
            let shape = tape.value(h).shape().to_vec();
            g.take_or_zeros(h, &shape)
        })
        .collect();
    Ok((value, grads))
}

/// Interaction data for one training run.
pub struct TrainingData<'d> {
    /// Positive pairs to train on.
    pub train: &'d BinaryInteractions,
    /// Items negatives are drawn from (sorted).
    pub train_pool: &'d [usize],
    /// Held-out positive pairs for the validation loss.
    pub valid: Option<&'d BinaryInteractions>,
    /// Items validation negatives are drawn from (sorted).
    pub valid_pool: &'d [usize],
    /// Every known positive; validation negatives avoid all of them.
    pub all_positives: &'d BinaryInteractions,
    /// Normalized spectrograms by item index (audio variant only).
    pub mels: Option<&'d [Option<MelSpec>]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
    pub lr: f64,
}

impl EpochLog {
    pub const TSV_HEADER: &'static str = "epoch\ttrain_loss\tvalid_loss\tlr";

    pub fn to_tsv(&self) -> String {
        let valid = self
            .valid_loss
            .map_or_else(|| "nan".to_string(), |v| format!("{v:.6}"));
        format!("{}\t{:.6}\t{}\t{:e}", self.epoch, self.train_loss, valid, self.lr)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: TowerParams,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

fn mel_for<'d>(data: &TrainingData<'d>, item: usize) -> Result<&'d MelSpec> {
    data.mels
        .and_then(|m| m.get(item))
        .and_then(Option::as_ref)
        .ok_or_else(|| Error::MissingAudio(format!("item index {item}")))
}

struct BatchBuilder<'a, 'd> {
    p: &'a TowerParams,
    data: &'a TrainingData<'d>,
    frames: usize,
    share: bool,
    shared: BTreeMap<usize, usize>,
    batch: Batch,
}

impl<'a, 'd> BatchBuilder<'a, 'd> {
    fn new(p: &'a TowerParams, data: &'a TrainingData<'d>, share: bool) -> Self {
        let frames = p.audio().map_or(0, |a| a.config.context_frames);
        Self {
            p,
            data,
            frames,
            share,
            shared: BTreeMap::new(),
            batch: Batch::default(),
        }
    }

    fn slot(&mut self, item: usize, crops: &mut Rng) -> Result<usize> {
        if let Some(&s) = self.shared.get(&item) {
            return Ok(s);
        }
        let input = match self.p.item {
            ItemTower::Index { .. } => ItemInput::Index(item),
            ItemTower::Audio(_) => {
                let mel = mel_for(self.data, item)?;
                let off = random_offset(mel.frames(), self.frames, crops)?;
                ItemInput::Window {
                    item,
                    window: mel.window(off, self.frames)?.values,
                }
            }
        };
        self.batch.items.push(input);
        let s = self.batch.items.len() - 1;
        if self.share || matches!(self.p.item, ItemTower::Index { .. }) {
            self.shared.insert(item, s);
        }
        Ok(s)
    }
}

/// Builds one batch from `(user, positive)` pairs.
fn build_batch(
    p: &TowerParams,
    data: &TrainingData<'_>,
    cfg: &CueConfig,
    pairs: &[(usize, usize)],
    sampling: &mut Rng,
    crops: &mut Rng,
) -> Result<Batch> {
    let mut b = BatchBuilder::new(p, data, cfg.share_batch_windows);
    for &(u, i) in pairs {
        let negs = sample_negatives(u, data.train, data.train_pool, cfg.negatives, sampling)?;
        let positive = b.slot(i, crops)?;
        let negatives = negs
            .into_iter()
            .map(|n| b.slot(n, crops))
            .collect::<Result<Vec<_>>>()?;
        b.batch.tuples.push(TrainTuple {
            user: u,
            positive,
            negatives,
        });
    }
    Ok(b.batch)
}

/// Fixed validation tuples: negatives drawn once, windows at offset 0.
struct Validation {
    tuples: Vec<(usize, usize, Vec<usize>)>,
}

impl Validation {
    fn build(data: &TrainingData<'_>, cfg: &CueConfig) -> Result<Option<Self>> {
        let Some(valid) = data.valid else {
            return Ok(None);
        };
        let mut rng = rng::substream(cfg.seed, "validation");
        let mut tuples = Vec::new();
        for (u, i) in valid.pairs() {
            let excluded = data.all_positives.positives(u);
            let available = data
                .valid_pool
                .iter()
                .filter(|&&j| excluded.binary_search(&j).is_err())
                .count();
            let k = cfg.negatives.min(available);
            if k == 0 {
                continue;
            }
            let negs = sample_negatives(u, data.all_positives, data.valid_pool, k, &mut rng)?;
            tuples.push((u, i, negs));
        }
        Ok((!tuples.is_empty()).then_some(Self { tuples }))
    }

    fn loss(&self, p: &TowerParams, data: &TrainingData<'_>, margin: f64) -> Result<f64> {
        let mut users: BTreeMap<usize, DenseArray> = BTreeMap::new();
        let mut items: BTreeMap<usize, DenseArray> = BTreeMap::new();
        let mut embed_item = |i: usize| -> Result<DenseArray> {
            if let Some(y) = items.get(&i) {
                return Ok(y.clone());
            }
            let y = match &p.item {
                ItemTower::Audio(a) => {
                    let mel = mel_for(data, i)?;
                    a.forward(&mel.window(0, a.config.context_frames)?.values)?
                }
                ItemTower::Index { tower, .. } => tower.forward(i)?,
            };
            items.insert(i, y.clone());
            Ok(y)
        };
        let mut total = 0.0;
        for (u, i, negs) in &self.tuples {
            if !users.contains_key(u) {
                users.insert(*u, user_embed(p, *u)?);
            }
            let yu = &users[u];
            let rpos = relevance(yu, &embed_item(*i)?)?;
            let rnegs = negs
                .iter()
                .map(|&n| relevance(yu, &embed_item(n)?))
                .collect::<Result<Vec<_>>>()?;
            total += hinge_loss(rpos, &rnegs, margin);
        }
        Ok(total / self.tuples.len() as f64)
    }
}

/// Trains both towers end to end. Each epoch visits every training pair once
/// in a seeded random order; every tuple gets fresh negatives and crops.
/// Early stopping keeps the parameters with the lowest validation loss.
pub fn train(
    init: TowerParams,
    data: &TrainingData<'_>,
    cfg: &CueConfig,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut pairs: Vec<(usize, usize)> = data.train.pairs().collect();
    if pairs.is_empty() {
        return Err(Error::Config("no training pairs".into()));
    }
    if init.num_users() < data.train.num_users() {
        return Err(Error::Config(format!(
            "user tower has {} rows, data has {} users",
            init.num_users(),
            data.train.num_users()
        )));
    }
    if let ItemTower::Audio(_) = init.item {
        for &(_, i) in &pairs {
            mel_for(data, i)?;
        }
        for &i in data.train_pool {
            mel_for(data, i)?;
        }
    }
    let validation = Validation::build(data, cfg)?;

    let mut params = init;
    let mut opt = OptimizerState::new(params.arrays(), cfg.sgd());
    let mut sampling = rng::substream(cfg.seed, streams::SAMPLING);
    let mut crops = rng::substream(cfg.seed, streams::CROPS);

    let mut log = Vec::new();
    let mut best: Option<(f64, TowerParams, usize)> = None;
    let mut since_best = 0;
    for epoch in 1..=cfg.max_epochs {
        pairs.shuffle(&mut sampling);
        let mut loss_sum = 0.0;
        for chunk in pairs.chunks(cfg.batch_size) {
            let batch = build_batch(&params, data, cfg, chunk, &mut sampling, &mut crops)?;
            let (loss, grads) = batch_loss_and_grads(&params, &batch, cfg.margin)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
            }
            loss_sum += loss * chunk.len() as f64;
            opt.step(&mut params.arrays_mut(), &grads)?;
        }
        let valid_loss = validation
            .as_ref()
            .map(|v| v.loss(&params, data, cfg.margin))
            .transpose()?;
        let entry = EpochLog {
            epoch,
            train_loss: loss_sum / pairs.len() as f64,
            valid_loss,
            lr: opt.effective_lr(),
        };
        on_epoch(&entry);
        log.push(entry);

        if let Some(v) = valid_loss {
            if best.as_ref().map_or(true, |(b, _, _)| v < *b) {
                best = Some((v, params.clone(), epoch));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    break;
                }
            }
        }
    }
    let (params, best_epoch) = match best {
        Some((_, p, e)) => (p, e),
        None => {
            let e = log.len();
            (params, e)
        }
    };
    Ok(TrainOutcome {
        params,
        log,
        best_epoch,
    })
}

/// Mean tuple loss over a fixed list of batches (no parameter update).
pub fn mean_batch_loss(p: &TowerParams, batches: &[Batch], margin: f64) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for b in batches {
        let (tape, loss, _) = batch_tape(p, b, margin)?;
        total += tape.scalar(loss) * b.tuples.len() as f64;
        n += b.tuples.len();
    }
    Ok(total / n as f64)
}

/// Precomputed user and item feature vectors for fast ranking.
#[derive(Debug, Clone)]
pub struct CueScorer {
    pub users: Vec<DenseArray>,
    /// `None` for items without a feature vector (missing audio or untrained).
    pub items: Vec<Option<DenseArray>>,
}

impl CueScorer {
    /// Audio variant: clip-level features for every item with a spectrogram.
    pub fn from_audio(p: &TowerParams, mels: &[Option<MelSpec>]) -> Result<Self> {
        let users = (0..p.num_users())
            .map(|u| user_embed(p, u))
            .collect::<Result<_>>()?;
        let items = mels
            .iter()
            .map(|m| m.as_ref().map(|m| clip_embed(p, m)).transpose())
            .collect::<Result<_>>()?;
        Ok(Self { users, items })
    }

    /// Index variant: features only for trained items.
    pub fn from_index(p: &TowerParams) -> Result<Self> {
        let ItemTower::Index { trained, .. } = &p.item else {
            return Err(Error::Contract("not an index-item model".into()));
        };
        let users = (0..p.num_users())
            .map(|u| user_embed(p, u))
            .collect::<Result<_>>()?;
        let items = (0..trained.len())
            .map(|i| trained[i].then(|| item_index_embed(p, i)).transpose())
            .collect::<Result<_>>()?;
        Ok(Self { users, items })
    }

    pub fn score(&self, u: usize, items: &[usize]) -> Result<Vec<f64>> {
        let yu = self.users.get(u).ok_or(Error::Index {
            index: u,
            len: self.users.len(),
        })?;
        items
            .iter()
            .map(|&i| {
                let yi = self
                    .items
                    .get(i)
                    .and_then(Option::as_ref)
                    .ok_or(Error::ColdStart(i))?;
                relevance(yu, yi)
            })
            .collect()
    }
}
