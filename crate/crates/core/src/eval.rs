//! Sampled leave-one-out ranking evaluation.
//!
//! Each test user's held-out item is ranked against 99 sampled items the user
//! never interacted with. Ranks are 1-based; ties are broken by ascending item
//! id. HR@N counts ranks ≤ N and NDCG@N averages `1/log2(p+1)` over hits, with
//! misses contributing 0.

use std::fmt::Write as _;
use std::sync::Arc;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Prepared;
use crate::error::{Error, Result};
use crate::hin::InteractionSplit;
use crate::metapath::Aspect;
use crate::model::{Embeddings, Model, ModelConfig, ModelKind};
use crate::nnmath::{derive_seed, ParamStore};
use crate::training::{fit, TrainConfig};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalProtocol {
    pub negatives: usize,
    pub top_n: Vec<usize>,
    pub seed: u64,
    /// Users with at most this many training interactions form the cold bucket.
    pub cold_threshold: usize,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        Self {
            negatives: 99,
            top_n: vec![5, 10, 15, 20],
            seed: 0,
            cold_threshold: 5,
        }
    }
}

impl EvalProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.negatives == 0 {
            return Err(Error::InvalidArgument("need at least one negative".into()));
        }
        if self.top_n.is_empty() || self.top_n.contains(&0) {
            return Err(Error::InvalidArgument("top_n must be non-empty and ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Candidates {
    /// The positive first, then the sampled negatives in draw order.
    pub items: Vec<usize>,
    /// Fewer eligible negatives than requested.
    pub shortfall: bool,
}

/// Positive plus up to `protocol.negatives` distinct items outside the user's
/// train and test interactions. Deterministic in `(protocol.seed, user)`.
pub fn sample_candidates(user: usize, split: &InteractionSplit, protocol: &EvalProtocol) -> Result<Candidates> {
    let positive = split
        .test_item
        .get(user)
        .copied()
        .flatten()
        .ok_or_else(|| Error::InvalidArgument(format!("user {user} has no test item")))?;
    let known = &split.user_train[user];
    let excluded = known.len() + usize::from(known.binary_search(&positive).is_err());
    let eligible = split.n_items - excluded;
    let want = protocol.negatives.min(eligible);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(protocol.seed, user as u64));
    let mut items = Vec::with_capacity(want + 1);
    items.push(positive);
    let is_excluded = |j: usize| j == positive || known.binary_search(&j).is_ok();
    if eligible <= 2 * protocol.negatives {
        let mut pool: Vec<usize> = (0..split.n_items).filter(|&j| !is_excluded(j)).collect();
        for k in 0..want {
            let pick = rng.gen_range(k..pool.len());
            pool.swap(k, pick);
            items.push(pool[k]);
        }
    } else {
        while items.len() <= want {
            let j = rng.gen_range(0..split.n_items);
            if !is_excluded(j) && !items[1..].contains(&j) {
                items.push(j);
            }
        }
    }
    Ok(Candidates {
        items,
        shortfall: want < protocol.negatives,
    })
}

/// 1-based rank of `candidates[pos]` under descending score, ties by
/// ascending item id.
pub fn rank(scores: &[f64], candidates: &[usize], pos: usize) -> usize {
    debug_assert_eq!(scores.len(), candidates.len());
    let (sp, ip) = (scores[pos], candidates[pos]);
    1 + scores
        .iter()
        .zip(candidates)
        .filter(|&(&s, &i)| s > sp || (s == sp && i < ip))
        .count()
}

pub fn hit_ratio(ranks: &[usize], n: usize) -> Result<f64> {
    if ranks.is_empty() {
        return Err(Error::InvalidArgument("hit ratio over no users".into()));
    }
    Ok(ranks.iter().filter(|&&p| p <= n).count() as f64 / ranks.len() as f64)
}

pub fn ndcg(ranks: &[usize], n: usize) -> Result<f64> {
    if ranks.is_empty() {
        return Err(Error::InvalidArgument("NDCG over no users".into()));
    }
    let sum: f64 = ranks
        .iter()
        .filter(|&&p| p <= n)
        .map(|&p| 1.0 / ((p + 1) as f64).log2())
        .sum();
    Ok(sum / ranks.len() as f64)
}

/// Read-only scoring of (user, item) pairs.
pub trait Scorer: Sync {
    fn score(&self, user: usize, item: usize) -> f64;
}

/// A trained (or untrained) model with its embeddings computed once.
pub struct ModelScorer<'a> {
    model: &'a Model,
    store: &'a ParamStore,
    emb: Embeddings,
}

impl<'a> ModelScorer<'a> {
    pub fn new(model: &'a Model, store: &'a ParamStore) -> Result<Self> {
        Ok(Self {
            model,
            store,
            emb: model.embed(store)?,
        })
    }
}

impl Scorer for ModelScorer<'_> {
    fn score(&self, user: usize, item: usize) -> f64 {
        self.model.score(user, item, &self.emb, self.store)
    }
}

/// Uniform scores in `[0, 1)` from a hash of `(seed, user, item)`.
pub struct RandomScorer {
    pub seed: u64,
}

impl Scorer for RandomScorer {
    fn score(&self, user: usize, item: usize) -> f64 {
        let h = derive_seed(derive_seed(self.seed, user as u64), item as u64);
        (h >> 11) as f64 / (1u64 << 53) as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub n: usize,
    pub hr: f64,
    pub ndcg: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BucketReport {
    pub name: String,
    pub users: usize,
    /// One row per N; all zero when the bucket is empty.
    pub rows: Vec<MetricRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankingReport {
    /// `all` then `cold`.
    pub buckets: Vec<BucketReport>,
    /// Users whose candidate set was shrunk for lack of negatives.
    pub shortfall_users: usize,
}

impl RankingReport {
    pub fn bucket(&self, name: &str) -> Option<&BucketReport> {
        self.buckets.iter().find(|b| b.name == name)
    }

    /// A metric row of the `all` bucket.
    pub fn at(&self, n: usize) -> Option<&MetricRow> {
        self.bucket("all")?.rows.iter().find(|r| r.n == n)
    }

    pub fn hr_at(&self, n: usize) -> f64 {
        self.at(n).map_or(0.0, |r| r.hr)
    }

    pub fn ndcg_at(&self, n: usize) -> f64 {
        self.at(n).map_or(0.0, |r| r.ndcg)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bucket,N,HR,NDCG,users\n");
        for b in &self.buckets {
            for r in &b.rows {
                let _ = writeln!(out, "{},{},{:.6},{:.6},{}", b.name, r.n, r.hr, r.ndcg, b.users);
            }
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<8} {:>4} {:>8} {:>8} {:>7}", "bucket", "N", "HR", "NDCG", "users");
        for b in &self.buckets {
            for r in &b.rows {
                let _ = writeln!(out, "{:<8} {:>4} {:>8.4} {:>8.4} {:>7}", b.name, r.n, r.hr, r.ndcg, b.users);
            }
        }
        if self.shortfall_users > 0 {
            let _ = writeln!(out, "{} users had fewer candidates than requested", self.shortfall_users);
        }
        out
    }
}

fn bucket(name: &str, ranks: &[usize], top_n: &[usize]) -> Result<BucketReport> {
    let rows = top_n
        .iter()
        .map(|&n| {
            Ok(if ranks.is_empty() {
                MetricRow { n, hr: 0.0, ndcg: 0.0 }
            } else {
                MetricRow {
                    n,
                    hr: hit_ratio(ranks, n)?,
                    ndcg: ndcg(ranks, n)?,
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BucketReport {
        name: name.to_string(),
        users: ranks.len(),
        rows,
    })
}

struct UserResult {
    user: usize,
    rank: usize,
    shortfall: bool,
}

fn rank_user(scorer: &dyn Scorer, split: &InteractionSplit, protocol: &EvalProtocol, user: usize) -> Result<UserResult> {
    let cand = sample_candidates(user, split, protocol)?;
    for &j in &cand.items[1..] {
        if split.is_known(user, j) {
            return Err(Error::Sampling(format!("negative {j} of user {user} is a known interaction")));
        }
    }
    let scores: Vec<f64> = cand.items.iter().map(|&i| scorer.score(user, i)).collect();
    if let Some(k) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite {
            epoch: 0,
            batch: 0,
            diagnostic: format!("score of user {user}, item {} is {}", cand.items[k], scores[k]),
        });
    }
    Ok(UserResult {
        user,
        rank: rank(&scores, &cand.items, 0),
        shortfall: cand.shortfall,
    })
}

/// Ranks every user with a test item. `threads` workers each take a
/// contiguous block of users; results are reduced in user-id order.
pub fn evaluate(
    scorer: &dyn Scorer,
    split: &InteractionSplit,
    protocol: &EvalProtocol,
    threads: usize,
) -> Result<RankingReport> {
    protocol.validate()?;
    let users: Vec<usize> = (0..split.n_users).filter(|&u| split.test_item[u].is_some()).collect();
    if users.is_empty() {
        return Err(Error::InvalidArgument("no users with a test item".into()));
    }
    let threads = threads.clamp(1, users.len());
    let results: Vec<UserResult> = if threads == 1 {
        users
            .iter()
            .map(|&u| rank_user(scorer, split, protocol, u))
            .collect::<Result<_>>()?
    } else {
        let chunk = users.len().div_ceil(threads);
        let parts: Vec<Result<Vec<UserResult>>> = std::thread::scope(|s| {
            let handles: Vec<_> = users
                .chunks(chunk)
                .map(|block| {
                    s.spawn(move || {
                        block
                            .iter()
                            .map(|&u| rank_user(scorer, split, protocol, u))
                            .collect::<Result<Vec<_>>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("evaluation worker panicked"))
                .collect()
        });
        let mut all = Vec::with_capacity(users.len());
        for p in parts {
            all.extend(p?);
        }
        all
    };

    let all: Vec<usize> = results.iter().map(|r| r.rank).collect();
    let cold: Vec<usize> = results
        .iter()
        .filter(|r| split.train_count(r.user) <= protocol.cold_threshold)
        .map(|r| r.rank)
        .collect();
    let shortfall_users = results.iter().filter(|r| r.shortfall).count();
    if shortfall_users > 0 {
        warn!("{shortfall_users} users have fewer than {} eligible negatives", protocol.negatives);
    }
    Ok(RankingReport {
        buckets: vec![bucket("all", &all, &protocol.top_n)?, bucket("cold", &cold, &protocol.top_n)?],
        shortfall_users,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepKind {
    Aspects,
    Dimension,
}

impl std::str::FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aspects" => Ok(SweepKind::Aspects),
            "dimension" => Ok(SweepKind::Dimension),
            _ => Err(Error::InvalidArgument(format!("unknown sweep kind {s:?}"))),
        }
    }
}

/// `{2, 4, …, 256}`
pub fn default_dimension_grid() -> Vec<usize> {
    (1..=8).map(|k| 1usize << k).collect()
}

/// Every subset of `names` that contains `base`, by size then index order.
pub fn aspect_subsets(names: &[String], base: &str) -> Result<Vec<Vec<String>>> {
    let b = names
        .iter()
        .position(|n| n == base)
        .ok_or_else(|| Error::InvalidArgument(format!("base aspect {base} not defined")))?;
    let others: Vec<usize> = (0..names.len()).filter(|&k| k != b).collect();
    let mut subsets: Vec<Vec<usize>> = (0..1usize << others.len())
        .map(|mask| {
            let mut s = vec![b];
            s.extend(others.iter().enumerate().filter(|(bit, _)| mask >> bit & 1 == 1).map(|(_, &k)| k));
            s.sort_unstable();
            s
        })
        .collect();
    subsets.sort_by(|x, y| x.len().cmp(&y.len()).then_with(|| x.cmp(y)));
    Ok(subsets
        .into_iter()
        .map(|s| s.into_iter().map(|k| names[k].clone()).collect())
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    /// Aspect names joined by `+`, or the dimension.
    pub point: String,
    pub report: RankingReport,
}

pub struct SweepSpec<'a> {
    pub kind: SweepKind,
    pub model_kind: ModelKind,
    pub model: ModelConfig,
    pub train: &'a TrainConfig,
    pub protocol: &'a EvalProtocol,
    pub threads: usize,
    /// Aspect grid base (aspect sweeps).
    pub base_aspect: &'a str,
    /// Aspects used by dimension sweeps; empty means all.
    pub aspects: &'a [String],
    pub dimensions: &'a [usize],
}

/// Retrains and evaluates once per grid point with the shared seed.
pub fn sweep(data: &Prepared, spec: &SweepSpec<'_>) -> Result<Vec<SweepRow>> {
    let run = |aspects: Vec<Arc<Aspect>>, cfg: ModelConfig| -> Result<RankingReport> {
        let model = Model::new(spec.model_kind, cfg, aspects, data.split.n_users, data.split.n_items)?;
        let fitted = fit(&model, &data.split, spec.train, spec.protocol, None)?;
        evaluate(&ModelScorer::new(&model, &fitted.params)?, &data.split, spec.protocol, spec.threads)
    };
    let mut rows = Vec::new();
    match spec.kind {
        SweepKind::Aspects => {
            let names: Vec<String> = data.aspects.iter().map(|a| a.name.clone()).collect();
            for subset in aspect_subsets(&names, spec.base_aspect)? {
                let report = run(data.select_aspects(&subset)?, spec.model)?;
                rows.push(SweepRow {
                    point: subset.join("+"),
                    report,
                });
            }
        }
        SweepKind::Dimension => {
            let aspects = if spec.aspects.is_empty() {
                data.aspects.clone()
            } else {
                data.select_aspects(spec.aspects)?
            };
            for &d in spec.dimensions {
                let cfg = ModelConfig { dim: d, ..spec.model };
                rows.push(SweepRow {
                    point: d.to_string(),
                    report: run(aspects.clone(), cfg)?,
                });
            }
        }
    }
    Ok(rows)
}

/// One row per grid point with HR and NDCG of the `all` bucket for each N.
pub fn sweep_csv(kind: SweepKind, rows: &[SweepRow], top_n: &[usize]) -> String {
    let mut out = String::from(match kind {
        SweepKind::Aspects => "aspects",
        SweepKind::Dimension => "dim",
    });
    for n in top_n {
        let _ = write!(out, ",HR@{n},NDCG@{n}");
    }
    out.push_str(",users\n");
    for r in rows {
        out.push_str(&r.point);
        for &n in top_n {
            let _ = write!(out, ",{:.6},{:.6}", r.report.hr_at(n), r.report.ndcg_at(n));
        }
        let users = r.report.bucket("all").map_or(0, |b| b.users);
        let _ = writeln!(out, ",{users}");
    }
    out
}
