//! Play-count ingestion, top-K filtering, binarization, item-wise splits,
//! popularity scores and tag sets.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, streams};

/// One (user, item, play count) record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub user: usize,
    pub item: usize,
    pub count: u64,
}

/// Sparse user×item play counts with their id vocabularies.
///
/// Vocabularies keep first-appearance order; no (user, item) pair repeats.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InteractionSet {
    pub user_vocab: Vec<String>,
    pub item_vocab: Vec<String>,
    pub triples: Vec<Triple>,
}

fn intern(vocab: &mut Vec<String>, index: &mut HashMap<String, usize>, id: &str) -> usize {
    if let Some(&i) = index.get(id) {
        return i;
    }
    vocab.push(id.to_string());
    index.insert(id.to_string(), vocab.len() - 1);
    vocab.len() - 1
}

impl InteractionSet {
    pub fn num_users(&self) -> usize {
        self.user_vocab.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_vocab.len()
    }

    /// Parses `user<TAB>item<TAB>count` lines, summing duplicate pairs.
    pub fn parse<R: Read>(reader: R) -> Result<Self> {
        let mut set = InteractionSet::default();
        let mut users = HashMap::new();
        let mut items = HashMap::new();
        let mut pairs: HashMap<(usize, usize), usize> = HashMap::new();
        for (lineno, line) in BufReader::new(reader).lines().enumerate() {
            let lineno = lineno + 1;
            let line = line.map_err(|e| Error::Parse {
                line: lineno,
                msg: e.to_string(),
            })?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 || fields[0].is_empty() || fields[1].is_empty() {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected 3 tab-separated fields, got {:?}", line),
                });
            }
            let count: i64 = fields[2].trim().parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad play count {:?}", fields[2]),
            })?;
            if count < 1 {
                return Err(Error::Validation(format!(
                    "line {lineno}: play count {count} < 1"
                )));
            }
            let u = intern(&mut set.user_vocab, &mut users, fields[0]);
            let i = intern(&mut set.item_vocab, &mut items, fields[1]);
            match pairs.get(&(u, i)) {
                Some(&pos) => set.triples[pos].count += count as u64,
                None => {
                    pairs.insert((u, i), set.triples.len());
                    set.triples.push(Triple {
                        user: u,
                        item: i,
                        count: count as u64,
                    });
                }
            }
        }
        Ok(set)
    }

    pub fn write<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        for t in &self.triples {
            writeln!(
                w,
                "{}\t{}\t{}",
                self.user_vocab[t.user], self.item_vocab[t.item], t.count
            )
            .map_err(|e| Error::io("<triplets>", e))?;
        }
        w.flush().map_err(|e| Error::io("<triplets>", e))
    }
}

pub fn load_triplets(path: impl AsRef<Path>) -> Result<InteractionSet> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    InteractionSet::parse(f)
}

/// Indices of the `n` largest `keys`, ties broken by lower index, returned
/// in ascending index order.
fn top_n_preserving_order(keys: &[u64], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[b].cmp(&keys[a]).then(a.cmp(&b)));
    order.truncate(n);
    order.sort_unstable();
    order
}

/// Keeps the `n_items` most played items, then the `n_users` users with the
/// most interactions on those items. Vocabularies are re-indexed with
/// survivors in their original relative order.
pub fn filter_topk(s: &InteractionSet, n_items: usize, n_users: usize) -> InteractionSet {
    let mut item_totals = vec![0u64; s.num_items()];
    for t in &s.triples {
        item_totals[t.item] += t.count;
    }
    let kept_items = top_n_preserving_order(&item_totals, n_items);
    let mut item_map = vec![None; s.num_items()];
    for (new, &old) in kept_items.iter().enumerate() {
        item_map[old] = Some(new);
    }

    let mut user_counts = vec![0u64; s.num_users()];
    for t in &s.triples {
        if item_map[t.item].is_some() {
            user_counts[t.user] += 1;
        }
    }
    let kept_users = top_n_preserving_order(&user_counts, n_users);
    let mut user_map = vec![None; s.num_users()];
    for (new, &old) in kept_users.iter().enumerate() {
        user_map[old] = Some(new);
    }

    let triples = s
        .triples
        .iter()
        .filter_map(|t| {
            Some(Triple {
                user: user_map[t.user]?,
                item: item_map[t.item]?,
                count: t.count,
            })
        })
        .collect();
    InteractionSet {
        user_vocab: kept_users.iter().map(|&u| s.user_vocab[u].clone()).collect(),
        item_vocab: kept_items.iter().map(|&i| s.item_vocab[i].clone()).collect(),
        triples,
    }
}

/// Per-user sorted positive item sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryInteractions {
    pub num_items: usize,
    positives: Vec<Vec<usize>>,
}

impl BinaryInteractions {
    pub fn from_positive_lists(num_items: usize, mut lists: Vec<Vec<usize>>) -> Result<Self> {
        for l in &mut lists {
            l.sort_unstable();
            l.dedup();
            if let Some(&last) = l.last() {
                if last >= num_items {
                    return Err(Error::Index {
                        index: last,
                        len: num_items,
                    });
                }
            }
        }
        Ok(Self {
            num_items,
            positives: lists,
        })
    }

    pub fn num_users(&self) -> usize {
        self.positives.len()
    }

    pub fn positives(&self, user: usize) -> &[usize] {
        &self.positives[user]
    }

    pub fn contains(&self, user: usize, item: usize) -> bool {
        self.positives[user].binary_search(&item).is_ok()
    }

    pub fn num_positives(&self) -> usize {
        self.positives.iter().map(Vec::len).sum()
    }

    /// All (user, item) positives in user-major order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.positives
            .iter()
            .enumerate()
            .flat_map(|(u, items)| items.iter().map(move |&i| (u, i)))
    }

    /// Keeps only positives whose item passes `keep`.
    pub fn restrict_items(&self, keep: impl Fn(usize) -> bool) -> Self {
        Self {
            num_items: self.num_items,
            positives: self
                .positives
                .iter()
                .map(|l| l.iter().copied().filter(|&i| keep(i)).collect())
                .collect(),
        }
    }

    /// Per-item lists of users, sorted.
    pub fn item_users(&self) -> Vec<Vec<usize>> {
        let mut cols = vec![Vec::new(); self.num_items];
        for (u, i) in self.pairs() {
            cols[i].push(u);
        }
        cols
    }
}

/// (u, i) is positive iff it was played at least once.
pub fn binarize(s: &InteractionSet) -> BinaryInteractions {
    let mut lists = vec![Vec::new(); s.num_users()];
    for t in &s.triples {
        if t.count >= 1 {
            lists[t.user].push(t.item);
        }
    }
    for l in &mut lists {
        l.sort_unstable();
        l.dedup();
    }
    BinaryInteractions {
        num_items: s.num_items(),
        positives: lists,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemSplit {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Train,
    Valid,
    Test,
}

impl ItemSplit {
    /// Per-item membership lookup over `0..num_items`.
    pub fn membership(&self, num_items: usize) -> Vec<Option<Part>> {
        let mut m = vec![None; num_items];
        for (part, items) in [
            (Part::Train, &self.train),
            (Part::Valid, &self.valid),
            (Part::Test, &self.test),
        ] {
            for &i in items {
                m[i] = Some(part);
            }
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.7,
            valid: 0.1,
            test: 0.2,
        }
    }
}

/// Seeded shuffle followed by contiguous train/valid/test assignment. Each
/// part is returned sorted.
pub fn split_items(items: &[usize], ratios: SplitRatios, seed: u64) -> Result<ItemSplit> {
    let sum = ratios.train + ratios.valid + ratios.test;
    if (sum - 1.0).abs() > 1e-9 || [ratios.train, ratios.valid, ratios.test].iter().any(|&r| r < 0.0) {
        return Err(Error::Split(format!("ratios must be >= 0 and sum to 1, got {sum}")));
    }
    if items.len() < 3 {
        return Err(Error::Split(format!(
            "need at least 3 items, got {}",
            items.len()
        )));
    }
    let n = items.len();
    let n_train = (ratios.train * n as f64).round() as usize;
    let n_valid = ((ratios.valid * n as f64).round() as usize).min(n - n_train);
    let mut shuffled = items.to_vec();
    shuffled.shuffle(&mut rng::substream(seed, streams::SPLIT));
    let part = |range: std::ops::Range<usize>| {
        let mut v = shuffled[range].to_vec();
        v.sort_unstable();
        v
    };
    Ok(ItemSplit {
        train: part(0..n_train),
        valid: part(n_train..n_train + n_valid),
        test: part(n_train + n_valid..n),
        seed,
    })
}

/// Number of distinct listeners of each of `items`, aligned with `items`.
pub fn popularity_scores(b: &BinaryInteractions, items: &[usize]) -> Vec<f64> {
    let mut counts = vec![0usize; b.num_items];
    for (_, i) in b.pairs() {
        counts[i] += 1;
    }
    items.iter().map(|&i| counts[i] as f64).collect()
}

/// Items with their retained tags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagSet {
    pub tag_vocab: Vec<String>,
    pub item_ids: Vec<String>,
    /// Sorted tag indices per item; never empty.
    pub item_tags: Vec<Vec<usize>>,
}

impl TagSet {
    pub fn num_tags(&self) -> usize {
        self.tag_vocab.len()
    }

    /// Parses `item<TAB>tag1,tag2,...` lines and keeps the `n_tags` most
    /// frequent tags (frequency = number of items carrying the tag; ties by
    /// first appearance). Items left without a retained tag are dropped.
    pub fn parse<R: Read>(reader: R, n_tags: usize) -> Result<Self> {
        let mut item_ids: Vec<String> = Vec::new();
        let mut item_index = HashMap::new();
        let mut raw: Vec<Vec<usize>> = Vec::new();
        let mut tag_vocab: Vec<String> = Vec::new();
        let mut tag_index = HashMap::new();
        for (lineno, line) in BufReader::new(reader).lines().enumerate() {
            let lineno = lineno + 1;
            let line = line.map_err(|e| Error::Parse {
                line: lineno,
                msg: e.to_string(),
            })?;
            if line.is_empty() {
                continue;
            }
            let Some((item, tags)) = line.split_once('\t') else {
                return Err(Error::Parse {
                    line: lineno,
                    msg: "expected item<TAB>tags".into(),
                });
            };
            if item.is_empty() || tags.contains('\t') {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("malformed tag line {line:?}"),
                });
            }
            let idx = intern(&mut item_ids, &mut item_index, item);
            if idx == raw.len() {
                raw.push(Vec::new());
            }
            for tag in tags.split(',').map(str::trim).filter(|t| !t.is_empty()) {
                let t = intern(&mut tag_vocab, &mut tag_index, tag);
                raw[idx].push(t);
            }
        }
        for tags in &mut raw {
            tags.sort_unstable();
            tags.dedup();
        }
        let mut freq = vec![0u64; tag_vocab.len()];
        for tags in &raw {
            for &t in tags {
                freq[t] += 1;
            }
        }
        let kept = top_n_preserving_order(&freq, n_tags);
        let mut tag_map = vec![None; tag_vocab.len()];
        for (new, &old) in kept.iter().enumerate() {
            tag_map[old] = Some(new);
        }
        let mut out = TagSet {
            tag_vocab: kept.iter().map(|&t| tag_vocab[t].clone()).collect(),
            item_ids: Vec::new(),
            item_tags: Vec::new(),
        };
        for (id, tags) in item_ids.into_iter().zip(raw) {
            let mut mapped: Vec<usize> = tags.iter().filter_map(|&t| tag_map[t]).collect();
            if mapped.is_empty() {
                continue;
            }
            mapped.sort_unstable();
            out.item_ids.push(id);
            out.item_tags.push(mapped);
        }
        Ok(out)
    }

    /// Binary tag vectors indexed by position in `item_vocab`; `None` where
    /// the item carries no retained tag.
    pub fn align(&self, item_vocab: &[String]) -> Vec<Option<Vec<f64>>> {
        let by_id: HashMap<&str, &Vec<usize>> = self
            .item_ids
            .iter()
            .map(String::as_str)
            .zip(&self.item_tags)
            .collect();
        item_vocab
            .iter()
            .map(|id| {
                by_id.get(id.as_str()).map(|tags| {
                    let mut v = vec![0.0; self.num_tags()];
                    for &t in *tags {
                        v[t] = 1.0;
                    }
                    v
                })
            })
            .collect()
    }
}

pub fn load_tags(path: impl AsRef<Path>, n_tags: usize) -> Result<TagSet> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    TagSet::parse(f, n_tags)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> InteractionSet {
        InteractionSet::parse(s.as_bytes()).unwrap()
    }

    #[test]
    fn load_small_file() {
        let s = parse("u1\ts1\t3\nu2\ts1\t1\nu1\ts2\t7\n");
        assert_eq!(s.user_vocab, ["u1", "u2"]);
        assert_eq!(s.item_vocab, ["s1", "s2"]);
        assert_eq!(s.triples.len(), 3);
    }

    #[test]
    fn duplicates_are_summed() {
        let s = parse("u\ts\t2\nu\ts\t3\n");
        assert_eq!(
            s.triples,
            vec![Triple {
                user: 0,
                item: 0,
                count: 5
            }]
        );
    }

    #[test]
    fn empty_file_is_empty_set() {
        let s = parse("");
        assert_eq!(s, InteractionSet::default());
    }

    #[test]
    fn malformed_lines_report_line_number() {
        let e = InteractionSet::parse("u\ts\t1\nu\ts\n".as_bytes()).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        let e = InteractionSet::parse("u\ts\tabc\n".as_bytes()).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
        let e = InteractionSet::parse("u\ts\t0\n".as_bytes()).unwrap_err();
        assert!(matches!(e, Error::Validation(_)));
    }

    #[test]
    fn filter_keeps_highest_totals() {
        // item totals: a=1, b=10, c=4, d=10, e=2
        let s = parse("u1\ta\t1\nu1\tb\t10\nu2\tc\t4\nu2\td\t6\nu3\td\t4\nu3\te\t2\n");
        // brute-force oracle: sort by (-total, index)
        let mut totals = vec![0u64; 5];
        for t in &s.triples {
            totals[t.item] += t.count;
        }
        let mut order: Vec<usize> = (0..5).collect();
        order.sort_by_key(|&i| (std::cmp::Reverse(totals[i]), i));
        let mut expected: Vec<String> = order[..2].iter().map(|&i| s.item_vocab[i].clone()).collect();
        expected.sort_by_key(|id| s.item_vocab.iter().position(|v| v == id));

        let f = filter_topk(&s, 2, 10);
        assert_eq!(f.item_vocab, expected);
        assert_eq!(f.item_vocab, ["b", "d"]);
        assert!(f.triples.iter().all(|t| t.item < 2 && t.user < f.num_users()));
    }

    #[test]
    fn filter_tie_prefers_earlier_item() {
        let s = parse("u\tx\t3\nu\ty\t3\n");
        assert_eq!(filter_topk(&s, 1, 1).item_vocab, ["x"]);
    }

    #[test]
    fn filter_users_after_items() {
        // u1 only listens to the dropped item
        let s = parse("u1\tz\t1\nu2\ta\t5\nu3\ta\t5\nu3\tb\t5\n");
        let f = filter_topk(&s, 2, 1);
        assert_eq!(f.item_vocab, ["a", "b"]);
        assert_eq!(f.user_vocab, ["u3"]);
    }

    #[test]
    fn filter_identity_when_large() {
        let s = parse("u1\ta\t1\nu2\tb\t2\nu1\tb\t3\n");
        assert_eq!(filter_topk(&s, 10, 10), s);
    }

    #[test]
    fn binarize_counts() {
        let s = parse("u\ta\t1\nu\tb\t37\nu\tc\t2\n");
        let b = binarize(&s);
        assert_eq!(b.positives(0), &[0, 1, 2]);
        assert_eq!(binarize(&InteractionSet::default()).num_positives(), 0);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let items: Vec<usize> = (0..10).collect();
        let s = split_items(&items, SplitRatios::default(), 3).unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (7, 1, 2));
        assert_eq!(s, split_items(&items, SplitRatios::default(), 3).unwrap());
        let many: Vec<usize> = (0..100).collect();
        assert_ne!(
            split_items(&many, SplitRatios::default(), 1).unwrap(),
            split_items(&many, SplitRatios::default(), 2).unwrap()
        );
        assert!(matches!(
            split_items(&[0, 1], SplitRatios::default(), 0),
            Err(Error::Split(_))
        ));
        let bad = SplitRatios {
            train: 0.5,
            valid: 0.1,
            test: 0.1,
        };
        assert!(split_items(&items, bad, 0).is_err());
    }

    #[test]
    fn popularity_counts_listeners() {
        let b = BinaryInteractions::from_positive_lists(
            3,
            vec![vec![0, 1], vec![0], vec![0]],
        )
        .unwrap();
        assert_eq!(popularity_scores(&b, &[0, 1, 2]), vec![3.0, 1.0, 0.0]);
    }

    #[test]
    fn tags_keep_most_frequent() {
        let text = "s1\trock,pop,jazz\ns2\trock,pop\ns3\trock,pop\ns4\trock\ns5\trock\n";
        // frequencies: rock 5, pop 3, jazz 1
        let t = TagSet::parse(text.as_bytes(), 2).unwrap();
        assert_eq!(t.tag_vocab, ["rock", "pop"]);
        assert_eq!(t.item_ids.len(), 5);
        let all = TagSet::parse(text.as_bytes(), 50).unwrap();
        assert_eq!(all.num_tags(), 3);
    }

    #[test]
    fn items_with_only_dropped_tags_removed() {
        let text = "s1\ta\ns2\ta\ns3\tb\n";
        let t = TagSet::parse(text.as_bytes(), 1).unwrap();
        assert_eq!(t.item_ids, ["s1", "s2"]);
        let aligned = t.align(&["s3".into(), "s1".into()]);
        assert_eq!(aligned, vec![None, Some(vec![1.0])]);
    }

    #[test]
    fn malformed_tag_line() {
        assert!(matches!(
            TagSet::parse("no-tab-here\n".as_bytes(), 5),
            Err(Error::Parse { line: 1, .. })
        ));
    }
}
