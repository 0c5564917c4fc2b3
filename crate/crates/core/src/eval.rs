//! Recommendation AUC per user and tag-transfer AUC per tag.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::audio_frontend::MelSpec;
use crate::content_regression::{predict_clip_factor, RegressionModel};
use crate::cue_model::{clip_embed, CueScorer, TowerParams};
use crate::error::{Error, Result};
use crate::interactions::{BinaryInteractions, ItemSplit};
use crate::ndiff::{dot, DenseArray, GradTape, OptimizerState, Parameterized, SgdConfig};
use crate::rng::{self, streams};
use crate::wmf::Factors;

/// Mann-Whitney AUC with ties counted one half. `None` when every item is
/// positive or every item is negative.
pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "one label per score");
    let p = labels.iter().filter(|&&l| l).count() as u64;
    let n = labels.len() as u64 - p;
    if p == 0 || n == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // 2·(#wins) + #ties, accumulated over groups of equal score
    let (mut twice, mut negs_below) = (0u64, 0u64);
    let mut g = 0;
    while g < idx.len() {
        let mut end = g;
        while end < idx.len() && scores[idx[end]] == scores[idx[g]] {
            end += 1;
        }
        let gp = idx[g..end].iter().filter(|&&i| labels[i]).count() as u64;
        let gn = (end - g) as u64 - gp;
        twice += 2 * gp * negs_below + gp * gn;
        negs_below += gn;
        g = end;
    }
    Some(twice as f64 / (2 * p * n) as f64)
}

/// Scores items for one user.
pub trait Scorer {
    fn score(&self, user: usize, items: &[usize]) -> Result<Vec<f64>>;
}

/// One global score per item, shared by every user.
#[derive(Debug, Clone)]
pub struct PopularityScorer {
    pub scores: Vec<f64>,
}

impl PopularityScorer {
    /// Distinct-listener counts over `b`, for every item.
    pub fn from_interactions(b: &BinaryInteractions) -> Self {
        let all: Vec<usize> = (0..b.num_items).collect();
        Self {
            scores: crate::interactions::popularity_scores(b, &all),
        }
    }
}

impl Scorer for PopularityScorer {
    fn score(&self, _user: usize, items: &[usize]) -> Result<Vec<f64>> {
        items
            .iter()
            .map(|&i| {
                self.scores.get(i).copied().ok_or(Error::Index {
                    index: i,
                    len: self.scores.len(),
                })
            })
            .collect()
    }
}

/// Dot products of user rows with item rows: WMF, WMF+Regression and the
/// ground-truth oracle.
#[derive(Debug, Clone)]
pub struct FactorScorer {
    pub users: DenseArray,
    pub items: DenseArray,
}

impl FactorScorer {
    pub fn new(users: DenseArray, items: DenseArray) -> Result<Self> {
        if users.ndim() != 2 || items.ndim() != 2 || users.cols() != items.cols() {
            return Err(Error::Dimension(format!(
                "factor scorer: users {:?}, items {:?}",
                users.shape(),
                items.shape()
            )));
        }
        Ok(Self { users, items })
    }
}

impl From<&Factors> for FactorScorer {
    fn from(f: &Factors) -> Self {
        Self {
            users: f.users.clone(),
            items: f.items.clone(),
        }
    }
}

impl Scorer for FactorScorer {
    fn score(&self, user: usize, items: &[usize]) -> Result<Vec<f64>> {
        if user >= self.users.rows() {
            return Err(Error::Index {
                index: user,
                len: self.users.rows(),
            });
        }
        let u = self.users.row(user);
        items
            .iter()
            .map(|&i| {
                if i >= self.items.rows() {
                    return Err(Error::Index {
                        index: i,
                        len: self.items.rows(),
                    });
                }
                Ok(dot(u, self.items.row(i)))
            })
            .collect()
    }
}

impl Scorer for CueScorer {
    fn score(&self, user: usize, items: &[usize]) -> Result<Vec<f64>> {
        CueScorer::score(self, user, items)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitAuc {
    pub id: String,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub system: String,
    pub mean_auc: f64,
    pub n_evaluated: usize,
    pub n_skipped: usize,
    pub per_unit: Vec<UnitAuc>,
    pub config: serde_json::Value,
}

impl EvalReport {
    fn from_units(
        task: &str,
        system: &str,
        per_unit: Vec<UnitAuc>,
        n_skipped: usize,
        config: serde_json::Value,
    ) -> Result<Self> {
        if per_unit.is_empty() {
            return Err(Error::Evaluation(format!(
                "{task}/{system}: nothing to evaluate ({n_skipped} skipped)"
            )));
        }
        let mean_auc = per_unit.iter().map(|u| u.auc).sum::<f64>() / per_unit.len() as f64;
        Ok(Self {
            task: task.into(),
            system: system.into(),
            mean_auc,
            n_evaluated: per_unit.len(),
            n_skipped,
            per_unit,
            config,
        })
    }
}

/// Per-user AUC over `eval_items` against the positives in `b_test`,
/// averaged over users with at least one positive and one negative.
/// Items in a user's `exclude` row (known training positives) are dropped
/// from that user's candidate list.
pub fn eval_recommendation(
    system: &str,
    scorer: &dyn Scorer,
    b_test: &BinaryInteractions,
    eval_items: &[usize],
    exclude: Option<&BinaryInteractions>,
    config: serde_json::Value,
) -> Result<EvalReport> {
    let mut units = Vec::new();
    let mut skipped = 0;
    let mut candidates = Vec::with_capacity(eval_items.len());
    for u in 0..b_test.num_users() {
        candidates.clear();
        candidates.extend(
            eval_items
                .iter()
                .copied()
                .filter(|&i| exclude.map_or(true, |x| !x.contains(u, i))),
        );
        let labels: Vec<bool> = candidates.iter().map(|&i| b_test.contains(u, i)).collect();
        let n_pos = labels.iter().filter(|&&l| l).count();
        if n_pos == 0 || n_pos == labels.len() {
            skipped += 1;
            continue;
        }
        let scores = scorer.score(u, &candidates)?;
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("{system} scores for user {u}")));
        }
        let a = auc(&scores, &labels).expect("user has positives and negatives");
        units.push(UnitAuc {
            id: u.to_string(),
            auc: a,
        });
    }
    EvalReport::from_units("rec", system, units, skipped, config)
}

/// Where item features come from.
pub enum FeatureSource<'a> {
    Wmf(&'a Factors),
    Regression(&'a RegressionModel, &'a [Option<MelSpec>]),
    Cue(&'a TowerParams, &'a [Option<MelSpec>]),
}

/// Feature matrix `[items.len() × D]`, rows in `items` order.
pub fn extract_item_features(src: &FeatureSource<'_>, items: &[usize]) -> Result<DenseArray> {
    let mel = |mels: &[Option<MelSpec>], i: usize| -> Result<MelSpec> {
        mels.get(i)
            .and_then(Option::clone)
            .ok_or_else(|| Error::MissingAudio(format!("item index {i}")))
    };
    let rows = items
        .iter()
        .map(|&i| match src {
            FeatureSource::Wmf(f) => {
                if i >= f.items.rows() {
                    return Err(Error::Index {
                        index: i,
                        len: f.items.rows(),
                    });
                }
                Ok(f.items.row(i).to_vec())
            }
            FeatureSource::Regression(m, mels) => {
                Ok(predict_clip_factor(m, &mel(mels, i)?)?.into_data())
            }
            FeatureSource::Cue(p, mels) => Ok(clip_embed(p, &mel(mels, i)?)?.into_data()),
        })
        .collect::<Result<Vec<_>>>()?;
    DenseArray::from_rows(&rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TagMlpConfig {
    pub hidden: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TagMlpConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            max_epochs: 500,
            patience: 10,
            batch_size: 32,
            base_lr: 0.05,
            momentum: 0.9,
            seed: 0,
        }
    }
}

impl TagMlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.batch_size == 0 {
            return Err(Error::Config("tag MLP hidden width and batch size must be >= 1".into()));
        }
        self.sgd().validate()
    }

    fn sgd(&self) -> SgdConfig {
        SgdConfig {
            base_lr: self.base_lr,
            momentum: self.momentum,
            lr_decay: 0.0,
        }
    }
}

/// affine(D→H) → ReLU → affine(H→T), logistic outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct TagMlp {
    pub w1: DenseArray,
    pub b1: DenseArray,
    pub w2: DenseArray,
    pub b2: DenseArray,
}

impl Parameterized for TagMlp {
    fn named_arrays(&self) -> Vec<(String, &DenseArray)> {
        vec![
            ("w1".into(), &self.w1),
            ("b1".into(), &self.b1),
            ("w2".into(), &self.w2),
            ("b2".into(), &self.b2),
        ]
    }

    fn arrays_mut(&mut self) -> Vec<&mut DenseArray> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}

impl TagMlp {
    pub fn init(d: usize, hidden: usize, tags: usize, seed: u64) -> Self {
        use rand_distr::{Distribution, Uniform};
        let mut r = rng::substream(seed, streams::INIT);
        let mut glorot = |rows: usize, cols: usize| {
            let lim = (6.0 / (rows + cols) as f64).sqrt();
            let dist = Uniform::new_inclusive(-lim, lim);
            let data = (0..rows * cols).map(|_| dist.sample(&mut r)).collect();
            DenseArray::from_parts_unchecked(vec![rows, cols], data)
        };
        Self {
            w1: glorot(hidden, d),
            b1: DenseArray::zeros(&[hidden]),
            w2: glorot(tags, hidden),
            b2: DenseArray::zeros(&[tags]),
        }
    }

    pub fn logits(&self, x: &DenseArray) -> Result<DenseArray> {
        let h = crate::ndiff::relu(&crate::ndiff::affine(x, &self.w1, &self.b1)?);
        crate::ndiff::affine(&h, &self.w2, &self.b2)
    }

    /// Mean over rows of the per-row mean BCE, with gradients.
    fn loss_and_grads(&self, rows: &[(&DenseArray, &[f64])]) -> Result<(f64, Vec<DenseArray>)> {
        let mut tape = GradTape::new();
        let ids = [
            tape.param(&self.w1),
            tape.param(&self.b1),
            tape.param(&self.w2),
            tape.param(&self.b2),
        ];
        let mut terms = Vec::with_capacity(rows.len());
        for (x, y) in rows {
            let xi = tape.input(x);
            let z = tape.affine(xi, ids[0], ids[1])?;
            let h = tape.relu(z);
            let o = tape.affine(h, ids[2], ids[3])?;
            terms.push(tape.sigmoid_bce(o, y)?);
        }
        let total = tape.sum_all(&terms);
        let loss = tape.scale(total, 1.0 / rows.len() as f64);
        let mut g = tape.backward(loss)?;
        let value = tape.scalar(loss);
        let grads = ids
            .iter()
            .map(|&id| {
                let shape = tape.value(id).shape().to_vec();
                g.take_or_zeros(id, &shape)
            })
            .collect();
        Ok((value, grads))
    }
}

/// Per-column mean and std of the given rows; zero std becomes 1.
fn standardizer(rows: &[&[f64]]) -> (Vec<f64>, Vec<f64>) {
    let d = rows[0].len();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(*r) {
            *m += v / n;
        }
    }
    let mut std = vec![0.0; d];
    for r in rows {
        for ((s, v), m) in std.iter_mut().zip(*r).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    for s in &mut std {
        *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
    }
    (mean, std)
}

/// Trains a 2-layer MLP from item features to tags on the train split
/// (early stopping on valid BCE) and reports per-tag test AUC.
///
/// `features` has one row per item index; `tags[i]` is item `i`'s 0/1 tag
/// vector or `None` when untagged. Features are standardized with
/// train-split statistics.
pub fn tag_transfer(
    system: &str,
    features: &DenseArray,
    tags: &[Option<Vec<f64>>],
    split: &ItemSplit,
    cfg: &TagMlpConfig,
) -> Result<EvalReport> {
    let (test, logits) = fit_tag_mlp(features, tags, split, cfg)?;
    let n_tags = logits.first().map_or(0, DenseArray::len);
    let mut units = Vec::new();
    let mut skipped = 0;
    for t in 0..n_tags {
        let scores: Vec<f64> = logits.iter().map(|l| l.data()[t]).collect();
        let labels: Vec<bool> = test.iter().map(|&i| tags[i].as_ref().unwrap()[t] > 0.5).collect();
        match auc(&scores, &labels) {
            Some(a) => units.push(UnitAuc {
                id: t.to_string(),
                auc: a,
            }),
            None => skipped += 1,
        }
    }
    let config = serde_json::to_value(cfg)?;
    EvalReport::from_units("tags", system, units, skipped, config)
}

/// Tagged test items and their tag logits.
fn fit_tag_mlp(
    features: &DenseArray,
    tags: &[Option<Vec<f64>>],
    split: &ItemSplit,
    cfg: &TagMlpConfig,
) -> Result<(Vec<usize>, Vec<DenseArray>)> {
    cfg.validate()?;
    let tagged = |items: &[usize]| -> Vec<usize> {
        items
            .iter()
            .copied()
            .filter(|&i| tags.get(i).is_some_and(Option::is_some))
            .collect()
    };
    let (train, valid, test) = (tagged(&split.train), tagged(&split.valid), tagged(&split.test));
    if train.is_empty() || test.is_empty() {
        return Err(Error::Evaluation("tag transfer needs tagged train and test items".into()));
    }
    if let Some(&bad) = train.iter().chain(&valid).chain(&test).find(|&&i| i >= features.rows()) {
        return Err(Error::Index {
            index: bad,
            len: features.rows(),
        });
    }
    let n_tags = tags[train[0]].as_ref().map_or(0, Vec::len);
    let train_rows: Vec<&[f64]> = train.iter().map(|&i| features.row(i)).collect();
    let (mean, std) = standardizer(&train_rows);
    let standardized = |i: usize| -> DenseArray {
        let v = features
            .row(i)
            .iter()
            .zip(mean.iter().zip(&std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect();
        DenseArray::from_parts_unchecked(vec![features.cols()], v)
    };
    let xs: Vec<Option<DenseArray>> = (0..features.rows())
        .map(|i| tags.get(i).and_then(Option::as_ref).map(|_| standardized(i)))
        .collect();
    let example = |i: usize| -> (&DenseArray, &[f64]) {
        (xs[i].as_ref().unwrap(), tags[i].as_deref().unwrap())
    };

    let mut mlp = TagMlp::init(features.cols(), cfg.hidden, n_tags, cfg.seed);
    let mut opt = OptimizerState::new(mlp.arrays(), cfg.sgd());
    let mut order = train.clone();
    let mut shuffle = rng::substream(cfg.seed, streams::SAMPLING);
    let valid_rows: Vec<_> = valid.iter().map(|&i| example(i)).collect();
    let mut best: Option<(f64, TagMlp)> = None;
    let mut since_best = 0;
    for _ in 0..cfg.max_epochs {
        order.shuffle(&mut shuffle);
        for chunk in order.chunks(cfg.batch_size) {
            let rows: Vec<_> = chunk.iter().map(|&i| example(i)).collect();
            let (loss, grads) = mlp.loss_and_grads(&rows)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite("tag MLP loss".into()));
            }
            opt.step(&mut mlp.arrays_mut(), &grads)?;
        }
        if valid_rows.is_empty() {
            continue;
        }
        let (v, _) = mlp.loss_and_grads(&valid_rows)?;
        if best.as_ref().map_or(true, |(b, _)| v < *b) {
            best = Some((v, mlp.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    if let Some((_, m)) = best {
        mlp = m;
    }

    let logits = test
        .iter()
        .map(|&i| mlp.logits(xs[i].as_ref().unwrap()))
        .collect::<Result<Vec<_>>>()?;
    Ok((test, logits))
}
