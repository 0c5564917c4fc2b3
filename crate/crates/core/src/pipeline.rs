//! Experiment plumbing shared by the command-line tool and the acceptance
//! suite: run configuration, dataset loading, evaluation protocols, and
//! training and scoring of every system.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::audio_frontend::{
    apply_normalizer, fit_normalizer, fit_normalizer_per_bin, read_wav, DspConfig, MelExtractor,
    MelSpec, Normalizer,
};
use crate::checkpoint::Checkpoint;
use crate::content_regression::{
    predict_clip_factor, train_regression, RegressionExample, RegressionModel,
};
use crate::cue_model::{WeightInit, 
    build_index_item_variant, train, CueConfig, CueScorer, EpochLog, ItemTower, TowerParams,
    TrainingData,
};
use crate::error::{Error, Result};
use crate::eval::{
    eval_recommendation, extract_item_features, tag_transfer, EvalReport, FactorScorer,
    FeatureSource, PopularityScorer, Scorer, TagMlpConfig,
};
use crate::interactions::{
    binarize, filter_topk, load_tags, load_triplets, split_items, BinaryInteractions,
    InteractionSet, ItemSplit, SplitRatios,
};
use crate::ndiff::{DenseArray, Parameterized};
use crate::rng::{self, streams};
use crate::synthgen::{self, GroundTruth, SynthConfig};
use crate::wmf::{fit_wmf, Factors, WmfConfig};

/// Which interactions are held out for evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Items are split; test items are unseen in training.
    Cold,
    /// Every item is seen; a fraction of each user's pairs is held out.
    Warm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    Wmf,
    Regression,
    Cue,
    CueIndex,
}

impl SystemKind {
    pub fn name(self) -> &'static str {
        match self {
            SystemKind::Wmf => "wmf",
            SystemKind::Regression => "regression",
            SystemKind::Cue => "cue",
            SystemKind::CueIndex => "cue-index",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "wmf" => Ok(SystemKind::Wmf),
            "regression" => Ok(SystemKind::Regression),
            "cue" => Ok(SystemKind::Cue),
            "cue-index" => Ok(SystemKind::CueIndex),
            _ => Err(Error::Config(format!(
                "unknown system {s:?} (wmf, regression, cue, cue-index)"
            ))),
        }
    }

    pub fn needs_audio(self) -> bool {
        matches!(self, SystemKind::Regression | SystemKind::Cue)
    }
}

/// Optimization settings of the regression baseline; its tower shape is
/// taken from the CUE config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionTraining {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub base_lr: f64,
    pub momentum: f64,
    pub lr_decay: f64,
    pub weight_init: WeightInit,
}

impl Default for RegressionTraining {
    fn default() -> Self {
        Self {
            batch_size: 32,
            max_epochs: 100,
            patience: 5,
            base_lr: 0.01,
            momentum: 0.9,
            lr_decay: 1e-6,
            weight_init: WeightInit::Glorot,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopK {
    pub items: usize,
    pub users: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every component seed is overwritten with it.
    pub seed: u64,
    /// Dataset directory; `synth` writes here and unset paths resolve here.
    pub data_dir: PathBuf,
    pub triplets: Option<PathBuf>,
    pub audio_dir: Option<PathBuf>,
    pub tags: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub filter: Option<TopK>,
    pub max_tags: usize,
    pub protocol: Protocol,
    pub split: SplitRatios,
    pub dsp: DspConfig,
    pub wmf: WmfConfig,
    pub cue: CueConfig,
    pub regression: RegressionTraining,
    pub tag_mlp: TagMlpConfig,
    pub synth: SynthConfig,
    pub deterministic: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data_dir: PathBuf::from("data"),
            triplets: None,
            audio_dir: None,
            tags: None,
            ground_truth: None,
            output_dir: PathBuf::from("runs"),
            filter: None,
            max_tags: 50,
            protocol: Protocol::Cold,
            split: SplitRatios::default(),
            dsp: DspConfig::default(),
            wmf: WmfConfig::default(),
            cue: CueConfig::default(),
            regression: RegressionTraining::default(),
            tag_mlp: TagMlpConfig::default(),
            synth: SynthConfig::default(),
            deterministic: false,
        }
    }
}

impl RunConfig {
    /// Propagates the master seed into every component.
    pub fn resolved(mut self) -> Self {
        self.wmf.seed = self.seed;
        self.cue.seed = self.seed;
        self.tag_mlp.seed = self.seed;
        self.synth.seed = self.seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.dsp.validate()?;
        self.wmf.validate()?;
        self.cue.validate()?;
        self.regression_cue().validate()?;
        self.tag_mlp.validate()?;
        self.synth.validate()?;
        let s = self.split;
        if (s.train + s.valid + s.test - 1.0).abs() > 1e-9 || s.train <= 0.0 || s.test <= 0.0 {
            return Err(Error::Config(format!("split ratios {s:?} must be positive and sum to 1")));
        }
        Ok(())
    }

    pub fn triplets_path(&self) -> PathBuf {
        self.triplets
            .clone()
            .unwrap_or_else(|| self.data_dir.join(synthgen::TRIPLETS_FILE))
    }

    pub fn audio_path(&self) -> PathBuf {
        self.audio_dir
            .clone()
            .unwrap_or_else(|| self.data_dir.join(synthgen::AUDIO_DIR))
    }

    pub fn tags_path(&self) -> PathBuf {
        self.tags
            .clone()
            .unwrap_or_else(|| self.data_dir.join(synthgen::TAGS_FILE))
    }

    pub fn ground_truth_path(&self) -> PathBuf {
        self.ground_truth
            .clone()
            .unwrap_or_else(|| self.data_dir.join(synthgen::GROUND_TRUTH_FILE))
    }

    /// CUE config carrying the regression optimizer settings.
    pub fn regression_cue(&self) -> CueConfig {
        let r = &self.regression;
        CueConfig {
            batch_size: r.batch_size,
            max_epochs: r.max_epochs,
            patience: r.patience,
            base_lr: r.base_lr,
            momentum: r.momentum,
            lr_decay: r.lr_decay,
            weight_init: r.weight_init,
            ..self.cue.clone()
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// Interactions, spectrograms and tags, indexed by vocabulary position.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub interactions: InteractionSet,
    pub binary: BinaryInteractions,
    /// Un-normalized log-mel spectrograms; empty when audio was not loaded.
    pub mels: Vec<Option<MelSpec>>,
    pub tag_names: Vec<String>,
    /// Binary tag vectors per item (`None` for untagged items).
    pub tags: Option<Vec<Option<Vec<f64>>>>,
}

impl Dataset {
    pub fn num_users(&self) -> usize {
        self.binary.num_users()
    }

    pub fn num_items(&self) -> usize {
        self.binary.num_items
    }

    pub fn has_audio(&self) -> bool {
        !self.mels.is_empty()
    }
}

/// Loads triplets (optionally top-k filtered), tags when present, and
/// spectrograms of `<audio_dir>/<item>.wav` when `with_audio`.
pub fn load_dataset(cfg: &RunConfig, with_audio: bool) -> Result<Dataset> {
    let mut interactions = load_triplets(cfg.triplets_path())?;
    if let Some(k) = cfg.filter {
        interactions = filter_topk(&interactions, k.items, k.users);
    }
    if interactions.triples.is_empty() {
        return Err(Error::Validation("no interactions".into()));
    }
    let binary = binarize(&interactions);
    let tags_path = cfg.tags_path();
    let (tag_names, tags) = if tags_path.exists() {
        let t = load_tags(&tags_path, cfg.max_tags)?;
        let aligned = t.align(&interactions.item_vocab);
        (t.tag_vocab, Some(aligned))
    } else {
        (Vec::new(), None)
    };
    let mels = if with_audio {
        load_mels(&interactions.item_vocab, &cfg.audio_path(), &cfg.dsp)?
    } else {
        Vec::new()
    };
    Ok(Dataset {
        interactions,
        binary,
        mels,
        tag_names,
        tags,
    })
}

fn load_mels(item_ids: &[String], dir: &Path, dsp: &DspConfig) -> Result<Vec<Option<MelSpec>>> {
    let ex = MelExtractor::new(dsp)?;
    item_ids
        .iter()
        .map(|id| {
            let path = dir.join(format!("{id}.wav"));
            if !path.exists() {
                return Ok(None);
            }
            let pcm = read_wav(&path, dsp.sample_rate)?;
            ex.melspectrogram(&pcm, &path.display().to_string()).map(Some)
        })
        .collect()
}

/// Train/valid/test interactions and the item sets each stage uses.
#[derive(Debug, Clone)]
pub struct Splits {
    pub protocol: Protocol,
    /// Item split; also defines the tag-transfer split in both protocols.
    pub items: ItemSplit,
    pub train: BinaryInteractions,
    pub valid: BinaryInteractions,
    pub test: BinaryInteractions,
    /// Items negatives are drawn from during training (sorted).
    pub train_pool: Vec<usize>,
    pub valid_pool: Vec<usize>,
    /// Items ranked at evaluation.
    pub eval_items: Vec<usize>,
    /// Per-user positives removed from the candidates at evaluation.
    pub exclude: Option<BinaryInteractions>,
}

pub fn make_splits(ds: &Dataset, cfg: &RunConfig) -> Result<Splits> {
    let all: Vec<usize> = (0..ds.num_items()).collect();
    let items = split_items(&all, cfg.split, cfg.seed)?;
    match cfg.protocol {
        Protocol::Cold => {
            let member = items.membership(ds.num_items());
            let part = |p| {
                let m = &member;
                ds.binary.restrict_items(move |i| m[i] == Some(p))
            };
            use crate::interactions::Part;
            Ok(Splits {
                protocol: Protocol::Cold,
                train: part(Part::Train),
                valid: part(Part::Valid),
                test: part(Part::Test),
                train_pool: items.train.clone(),
                valid_pool: items.valid.clone(),
                eval_items: items.test.clone(),
                exclude: None,
                items,
            })
        }
        Protocol::Warm => {
            let mut r = rng::substream(cfg.seed, &format!("{}/warm", streams::SPLIT));
            let (mut tr, mut va, mut te) = (Vec::new(), Vec::new(), Vec::new());
            for u in 0..ds.num_users() {
                let mut pos = ds.binary.positives(u).to_vec();
                pos.shuffle(&mut r);
                let n = pos.len();
                let (n_test, n_valid) = if n >= 3 {
                    let t = ((n as f64 * cfg.split.test).round() as usize).max(1);
                    let v = (n as f64 * cfg.split.valid).round() as usize;
                    (t.min(n - 1), v.min(n - 1 - t.min(n - 1)))
                } else {
                    (0, 0)
                };
                te.push(pos[..n_test].to_vec());
                va.push(pos[n_test..n_test + n_valid].to_vec());
                tr.push(pos[n_test + n_valid..].to_vec());
            }
            let seen: Vec<Vec<usize>> = tr.iter().zip(&va).map(|(a, b)| [a.as_slice(), b].concat()).collect();
            let n = ds.num_items();
            Ok(Splits {
                protocol: Protocol::Warm,
                train: BinaryInteractions::from_positive_lists(n, tr)?,
                valid: BinaryInteractions::from_positive_lists(n, va)?,
                test: BinaryInteractions::from_positive_lists(n, te)?,
                train_pool: all.clone(),
                valid_pool: all.clone(),
                eval_items: all,
                exclude: Some(BinaryInteractions::from_positive_lists(n, seen)?),
                items,
            })
        }
    }
}

/// Fits the normalizer on training-pool spectrograms and applies it to all.
pub fn normalize_mels(
    ds: &Dataset,
    splits: &Splits,
    dsp: &DspConfig,
) -> Result<(Normalizer, Vec<Option<MelSpec>>)> {
    let train: Vec<&MelSpec> = splits
        .train_pool
        .iter()
        .map(|&i| {
            ds.mels
                .get(i)
                .and_then(Option::as_ref)
                .ok_or_else(|| Error::MissingAudio(ds.interactions.item_vocab[i].clone()))
        })
        .collect::<Result<_>>()?;
    let n = if dsp.per_bin_normalization {
        fit_normalizer_per_bin(&train)?
    } else {
        fit_normalizer(&train)?
    };
    let mels = ds
        .mels
        .iter()
        .map(|m| m.as_ref().map(|m| apply_normalizer(m, &n)))
        .collect();
    Ok((n, mels))
}

/// A trained system plus what it needs to score items.
#[derive(Debug, Clone)]
pub enum TrainedSystem {
    Wmf(Factors),
    Regression {
        model: RegressionModel,
        /// User factors of the WMF fit that produced the regression targets.
        users: DenseArray,
    },
    Cue(TowerParams),
    CueIndex(TowerParams),
}

struct RegressionArrays<'a> {
    model: &'a RegressionModel,
    users: &'a DenseArray,
}

impl Parameterized for RegressionArrays<'_> {
    fn named_arrays(&self) -> Vec<(String, &DenseArray)> {
        let mut v = self.model.named_arrays();
        v.push(("wmf_users".into(), self.users));
        v
    }

    fn arrays_mut(&mut self) -> Vec<&mut DenseArray> {
        unreachable!("read-only view")
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct CheckpointMeta {
    #[serde(skip_serializing_if = "Option::is_none")]
    normalizer: Option<Normalizer>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trained_items: Option<Vec<usize>>,
    num_users: usize,
    num_items: usize,
}

impl TrainedSystem {
    pub fn kind(&self) -> SystemKind {
        match self {
            TrainedSystem::Wmf(_) => SystemKind::Wmf,
            TrainedSystem::Regression { .. } => SystemKind::Regression,
            TrainedSystem::Cue(_) => SystemKind::Cue,
            TrainedSystem::CueIndex(_) => SystemKind::CueIndex,
        }
    }

    /// Scorer over normalized `mels` (ignored by index-based systems).
    pub fn scorer(&self, mels: &[Option<MelSpec>]) -> Result<Box<dyn Scorer>> {
        Ok(match self {
            TrainedSystem::Wmf(f) => Box::new(FactorScorer::from(f)),
            TrainedSystem::Regression { model, users } => {
                let rows = mels
                    .iter()
                    .enumerate()
                    .map(|(i, m)| {
                        let m = m
                            .as_ref()
                            .ok_or_else(|| Error::MissingAudio(format!("item index {i}")))?;
                        Ok(predict_clip_factor(model, m)?.into_data())
                    })
                    .collect::<Result<Vec<_>>>()?;
                Box::new(FactorScorer::new(users.clone(), DenseArray::from_rows(&rows)?)?)
            }
            TrainedSystem::Cue(p) => Box::new(CueScorer::from_audio(p, mels)?),
            TrainedSystem::CueIndex(p) => Box::new(CueScorer::from_index(p)?),
        })
    }

    /// Per-item feature matrix `[items.len() × D]`.
    pub fn item_features(&self, mels: &[Option<MelSpec>], items: &[usize]) -> Result<DenseArray> {
        match self {
            TrainedSystem::Wmf(f) => extract_item_features(&FeatureSource::Wmf(f), items),
            TrainedSystem::Regression { model, .. } => {
                extract_item_features(&FeatureSource::Regression(model, mels), items)
            }
            TrainedSystem::Cue(p) => extract_item_features(&FeatureSource::Cue(p, mels), items),
            TrainedSystem::CueIndex(p) => {
                let rows = items
                    .iter()
                    .map(|&i| crate::cue_model::item_index_embed(p, i).map(DenseArray::into_data))
                    .collect::<Result<Vec<_>>>()?;
                DenseArray::from_rows(&rows)
            }
        }
    }

    pub fn to_checkpoint(
        &self,
        cfg: &RunConfig,
        normalizer: Option<&Normalizer>,
        num_items: usize,
    ) -> Checkpoint {
        let mut meta = CheckpointMeta {
            normalizer: normalizer.cloned(),
            num_items,
            ..CheckpointMeta::default()
        };
        let config = cfg.to_json();
        let kind = self.kind().name();
        match self {
            TrainedSystem::Wmf(f) => {
                meta.num_users = f.users.rows();
                Checkpoint::from_model(kind, config, meta_json(&meta), f)
            }
            TrainedSystem::Regression { model, users } => {
                meta.num_users = users.rows();
                Checkpoint::from_model(kind, config, meta_json(&meta), &RegressionArrays { model, users })
            }
            TrainedSystem::Cue(p) | TrainedSystem::CueIndex(p) => {
                meta.num_users = p.num_users();
                if let ItemTower::Index { trained, .. } = &p.item {
                    meta.trained_items = Some((0..trained.len()).filter(|&i| trained[i]).collect());
                }
                Checkpoint::from_model(kind, config, meta_json(&meta), p)
            }
        }
    }

    /// Rebuilds a system; returns it with the normalizer it was trained with.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Self, Option<Normalizer>)> {
        let kind = SystemKind::parse(&ck.model_kind)
            .map_err(|_| Error::Validation(format!("unknown model kind {:?}", ck.model_kind)))?;
        let cfg: RunConfig = serde_json::from_value(ck.config.clone())
            .map_err(|e| Error::Checkpoint(format!("config echo: {e}")))?;
        let meta: CheckpointMeta = serde_json::from_value(ck.meta.clone())
            .map_err(|e| Error::Checkpoint(format!("meta: {e}")))?;
        let frames = cfg.dsp.context_frames();
        let bins = cfg.dsp.mel_bins;
        let system = match kind {
            SystemKind::Wmf => {
                let mut f = Factors {
                    users: ck.get("users")?.clone(),
                    items: ck.get("items")?.clone(),
                };
                ck.load_into(&mut f)?;
                TrainedSystem::Wmf(f)
            }
            SystemKind::Regression => {
                let mut model = RegressionModel::init(&cfg.regression_cue(), bins, frames)?;
                let users = ck.get("wmf_users")?.clone();
                let tower_arrays = Checkpoint {
                    arrays: ck.arrays[..ck.arrays.len() - 1].to_vec(),
                    ..ck.clone()
                };
                tower_arrays.load_into(&mut model)?;
                TrainedSystem::Regression { model, users }
            }
            SystemKind::Cue => {
                let mut p = TowerParams::init_audio(&cfg.cue, meta.num_users, bins, frames)?;
                ck.load_into(&mut p)?;
                TrainedSystem::Cue(p)
            }
            SystemKind::CueIndex => {
                let trained = meta.trained_items.clone().unwrap_or_default();
                let mut p = build_index_item_variant(&cfg.cue, meta.num_users, meta.num_items, &trained)?;
                ck.load_into(&mut p)?;
                TrainedSystem::CueIndex(p)
            }
        };
        Ok((system, meta.normalizer))
    }
}

fn meta_json(m: &CheckpointMeta) -> serde_json::Value {
    serde_json::to_value(m).expect("meta serializes")
}

/// Interactions WMF is fit on: everything under the cold protocol (the
/// warm upper bound), training pairs under the warm protocol.
pub fn wmf_training_set<'a>(ds: &'a Dataset, splits: &'a Splits) -> &'a BinaryInteractions {
    match splits.protocol {
        Protocol::Cold => &ds.binary,
        Protocol::Warm => &splits.train,
    }
}

pub fn train_wmf_system(ds: &Dataset, splits: &Splits, cfg: &RunConfig) -> Result<TrainedSystem> {
    Ok(TrainedSystem::Wmf(fit_wmf(wmf_training_set(ds, splits), &cfg.wmf)?))
}

fn audio_dims(cfg: &RunConfig) -> (usize, usize) {
    (cfg.dsp.mel_bins, cfg.dsp.context_frames())
}

/// WMF on training interactions, then the audio tower regressed onto the
/// item factors of training-pool items (valid-pool items for early stopping).
pub fn train_regression_system(
    mels: &[Option<MelSpec>],
    splits: &Splits,
    cfg: &RunConfig,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainedSystem> {
    let wmf_cfg = WmfConfig {
        rank: cfg.cue.feature_dim,
        ..cfg.wmf.clone()
    };
    // Validation items need real targets for early stopping, so the target
    // fit sees validation interactions too. Test interactions stay unseen.
    let seen = BinaryInteractions::from_positive_lists(
        splits.train.num_items,
        (0..splits.train.num_users())
            .map(|u| {
                let mut l = splits.train.positives(u).to_vec();
                l.extend_from_slice(splits.valid.positives(u));
                l
            })
            .collect(),
    )?;
    let mut factors = fit_wmf(&seen, &wmf_cfg)?;
    // u·v is unchanged by v/s, u·s; unit-scale targets keep the tower from
    // collapsing to a constant while it shrinks its initial output.
    let s = rms_of_rows(&factors.items, &splits.train_pool);
    if s > 0.0 {
        factors.items.scale(1.0 / s);
        factors.users.scale(s);
    }
    let targets: Vec<DenseArray> = (0..factors.items.rows())
        .map(|i| DenseArray::from_parts_unchecked(vec![factors.rank()], factors.items.row(i).to_vec()))
        .collect();
    let examples = |pool: &[usize]| -> Result<Vec<RegressionExample<'_>>> {
        pool.iter()
            .map(|&i| {
                let mel = mels
                    .get(i)
                    .and_then(Option::as_ref)
                    .ok_or_else(|| Error::MissingAudio(format!("item index {i}")))?;
                Ok(RegressionExample {
                    mel,
                    target: &targets[i],
                })
            })
            .collect()
    };
    let train_ex = examples(&splits.train_pool)?;
    let valid_ex = match splits.protocol {
        Protocol::Cold => examples(&splits.valid_pool)?,
        Protocol::Warm => Vec::new(),
    };
    let rcfg = cfg.regression_cue();
    let (bins, frames) = audio_dims(cfg);
    let init = RegressionModel::init(&rcfg, bins, frames)?;
    let out = train_regression(init, &train_ex, &valid_ex, &rcfg, on_epoch)?;
    Ok(TrainedSystem::Regression {
        model: out.model,
        users: factors.users,
    })
}

fn rms_of_rows(m: &DenseArray, rows: &[usize]) -> f64 {
    let n = rows.len() * m.cols();
    if n == 0 {
        return 0.0;
    }
    let sq: f64 = rows.iter().flat_map(|&r| m.row(r)).map(|v| v * v).sum();
    (sq / n as f64).sqrt()
}

fn training_data<'d>(
    ds: &'d Dataset,
    splits: &'d Splits,
    mels: Option<&'d [Option<MelSpec>]>,
) -> TrainingData<'d> {
    let has_valid = splits.valid.num_positives() > 0;
    TrainingData {
        train: &splits.train,
        train_pool: &splits.train_pool,
        valid: has_valid.then_some(&splits.valid),
        valid_pool: &splits.valid_pool,
        all_positives: &ds.binary,
        mels,
    }
}

pub fn train_cue_system(
    ds: &Dataset,
    mels: &[Option<MelSpec>],
    splits: &Splits,
    cfg: &RunConfig,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainedSystem> {
    let (bins, frames) = audio_dims(cfg);
    let init = TowerParams::init_audio(&cfg.cue, ds.num_users(), bins, frames)?;
    let out = train(init, &training_data(ds, splits, Some(mels)), &cfg.cue, on_epoch)?;
    Ok(TrainedSystem::Cue(out.params))
}

/// Index-index variant; only meaningful under the warm protocol.
pub fn train_cue_index_system(
    ds: &Dataset,
    splits: &Splits,
    cfg: &RunConfig,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainedSystem> {
    if splits.protocol != Protocol::Warm {
        return Err(Error::Config(
            "cue-index cannot embed unseen items; use protocol \"warm\"".into(),
        ));
    }
    let init = build_index_item_variant(&cfg.cue, ds.num_users(), ds.num_items(), &splits.train_pool)?;
    let out = train(init, &training_data(ds, splits, None), &cfg.cue, on_epoch)?;
    Ok(TrainedSystem::CueIndex(out.params))
}

/// Listener counts over the data a popularity ranking may legitimately
/// see: all interactions (cold) or the training pairs (warm).
pub fn popularity(ds: &Dataset, splits: &Splits) -> PopularityScorer {
    PopularityScorer::from_interactions(wmf_training_set(ds, splits))
}

/// Ground-truth factor scorer aligned to the dataset vocabularies.
pub fn oracle_scorer(truth: &GroundTruth, ds: &Dataset) -> Result<FactorScorer> {
    let pick = |ids: &[String], truth_ids: &[String], rows: &[Vec<f64>]| -> Result<DenseArray> {
        let index: std::collections::HashMap<&str, usize> =
            truth_ids.iter().enumerate().map(|(k, s)| (s.as_str(), k)).collect();
        let out = ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .map(|&k| rows[k].clone())
                    .ok_or_else(|| Error::Validation(format!("{id} missing from ground truth")))
            })
            .collect::<Result<Vec<_>>>()?;
        DenseArray::from_rows(&out)
    };
    FactorScorer::new(
        pick(&ds.interactions.user_vocab, &truth.user_ids, &truth.user_factors)?,
        pick(&ds.interactions.item_vocab, &truth.item_ids, &truth.item_factors)?,
    )
}

/// Recommendation AUC of one scorer under the protocol of `splits`.
pub fn evaluate_rec(
    name: &str,
    scorer: &dyn Scorer,
    splits: &Splits,
    config: serde_json::Value,
) -> Result<EvalReport> {
    eval_recommendation(
        name,
        scorer,
        &splits.test,
        &splits.eval_items,
        splits.exclude.as_ref(),
        config,
    )
}

/// Tag-transfer AUC from per-item features over the item split.
pub fn evaluate_tags(
    name: &str,
    ds: &Dataset,
    splits: &Splits,
    features: &DenseArray,
    cfg: &TagMlpConfig,
) -> Result<EvalReport> {
    let tags = ds
        .tags
        .as_ref()
        .ok_or_else(|| Error::Validation("dataset has no tags".into()))?;
    tag_transfer(name, features, tags, &splits.items, cfg)
}

/// Items that carry tags and appear in the item split.
pub fn tagged_items(ds: &Dataset, splits: &Splits) -> Vec<usize> {
    let Some(tags) = &ds.tags else {
        return Vec::new();
    };
    let mut v: Vec<usize> = splits
        .items
        .train
        .iter()
        .chain(&splits.items.valid)
        .chain(&splits.items.test)
        .copied()
        .filter(|&i| tags[i].is_some())
        .collect();
    v.sort_unstable();
    v
}

/// Scatters `features` rows for `items` into a `[num_items × D]` matrix.
pub fn scatter_rows(features: &DenseArray, items: &[usize], num_items: usize) -> DenseArray {
    let d = features.cols();
    let mut out = DenseArray::zeros(&[num_items, d]);
    for (r, &i) in items.iter().enumerate() {
        out.row_mut(i).copy_from_slice(features.row(r));
    }
    out
}

/// Writes a synthetic dataset to `cfg.data_dir`.
pub fn synthesize(cfg: &RunConfig) -> Result<synthgen::SynthOutput> {
    synthgen::generate(&cfg.synth, &cfg.data_dir)
}
