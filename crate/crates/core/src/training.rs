//! Mini-batch BPR training with Adam, validation-based early stopping and
//! checkpointing.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use log::{debug, info};
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalProtocol, ModelScorer};
use crate::hin::{sample_bpr_triples, BprTriple, InteractionSplit};
use crate::model::Model;
use crate::nnmath::{adam_step, derive_seed, save_checkpoint, AdamConfig, ParamStore};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// L2 weight on every parameter.
    pub lambda: f64,
    pub seed: u64,
    /// Epochs between validation evaluations; 0 disables validation.
    pub eval_every: usize,
    /// Evaluations without improvement before stopping; `None` never stops.
    pub patience: Option<usize>,
    /// Share of eligible users whose last train item is held out for
    /// validation.
    pub validation_fraction: f64,
    /// Epochs between `ckpt-epoch-<n>.bin` files; 0 writes only the last.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 4096,
            lr: 0.001,
            lambda: 1e-4,
            seed: 0,
            eval_every: 5,
            patience: None,
            validation_fraction: 0.1,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be ≥ 1");
        }
        // lr = 0 is allowed for smoke runs
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr must be finite and ≥ 0");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and ≥ 0");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must lie in [0, 1)");
        }
        if self.patience == Some(0) {
            return bad("patience must be ≥ 1");
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub loss: f64,
    pub hr10: Option<f64>,
    pub ndcg10: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    /// Equality of everything except wall-clock time.
    pub fn same_trajectory(&self, other: &TrainLog) -> bool {
        self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.loss.to_bits() == b.loss.to_bits()
                    && a.hr10.map(f64::to_bits) == b.hr10.map(f64::to_bits)
                    && a.ndcg10.map(f64::to_bits) == b.ndcg10.map(f64::to_bits)
            })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,hr10,ndcg10,seconds\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{:.8},{},{},{:.3}",
                r.epoch,
                r.loss,
                opt(r.hr10),
                opt(r.ndcg10),
                r.seconds
            );
        }
        out
    }
}

/// Adam step counter carried across epochs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TrainState {
    pub step: u64,
}

fn non_finite(epoch: usize, batch: usize, triples: &[BprTriple], loss: f64, store: &ParamStore) -> Error {
    let mut diagnostic = format!("batch loss {loss}; {} triples, first:", triples.len());
    for t in triples.iter().take(5) {
        let _ = write!(diagnostic, " ({},{},{})", t.user, t.pos_item, t.neg_item);
    }
    let bad: Vec<&str> = store
        .iter()
        .filter(|(_, p)| !(p.value.is_finite() && p.grad.is_finite()))
        .map(|(n, _)| n)
        .collect();
    if !bad.is_empty() {
        let _ = write!(diagnostic, "; non-finite tensors: {}", bad.join(", "));
    }
    Error::NonFinite {
        epoch,
        batch,
        diagnostic,
    }
}

/// One pass over freshly sampled triples, shuffled with `seed ^ epoch`.
/// Returns the triple-weighted mean batch loss.
pub fn train_epoch(
    model: &Model,
    split: &InteractionSplit,
    store: &mut ParamStore,
    cfg: &TrainConfig,
    epoch: usize,
    state: &mut TrainState,
) -> Result<f64> {
    let mut triples = sample_bpr_triples(split, derive_seed(cfg.seed, epoch as u64))?;
    if triples.is_empty() {
        return Err(Error::InvalidArgument("no training pairs".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ epoch as u64);
    triples.shuffle(&mut rng);
    let adam = cfg.adam();
    let mut total = 0.0;
    for (b, batch) in triples.chunks(cfg.batch_size).enumerate() {
        let loss = model.loss_and_grad(batch, store, cfg.lambda)?;
        if !loss.is_finite() || !store.all_finite() {
            return Err(non_finite(epoch, b, batch, loss, store));
        }
        state.step += 1;
        adam_step(store, &adam, state.step)?;
        total += loss * batch.len() as f64;
    }
    Ok(total / triples.len() as f64)
}

/// Training pairs for BPR and the matching validation split.
#[derive(Clone, Debug)]
pub struct ValidationSlice {
    pub train: InteractionSplit,
    /// Held-out item as `test_item`; train lists also contain the real test
    /// item so it is never drawn as a validation negative.
    pub eval: InteractionSplit,
}

/// Holds out the chronologically last train item of a seeded subset of the
/// users with at least two train items.
pub fn validation_slice(split: &InteractionSplit, fraction: f64, seed: u64) -> Result<Option<ValidationSlice>> {
    let mut chrono: Vec<Vec<usize>> = vec![Vec::new(); split.n_users];
    for &(u, i) in &split.train_pairs {
        chrono[u].push(i);
    }
    let eligible: Vec<usize> = (0..split.n_users).filter(|&u| chrono[u].len() >= 2).collect();
    let n = (fraction * eligible.len() as f64).round() as usize;
    if n == 0 {
        return Ok(None);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX));
    let mut chosen: Vec<usize> = sample(&mut rng, eligible.len(), n).into_iter().map(|k| eligible[k]).collect();
    chosen.sort_unstable();

    let mut held = vec![None; split.n_users];
    for &u in &chosen {
        held[u] = chrono[u].pop();
    }
    let mut eval_train = chrono.clone();
    for (u, t) in split.test_item.iter().enumerate() {
        if let (Some(t), Some(_)) = (t, held[u]) {
            eval_train[u].push(*t);
        }
    }
    Ok(Some(ValidationSlice {
        train: InteractionSplit::from_parts(split.n_users, split.n_items, chrono, vec![None; split.n_users])?,
        eval: InteractionSplit::from_parts(split.n_users, split.n_items, eval_train, held)?,
    }))
}

#[derive(Clone, Debug)]
pub struct FitResult {
    /// Best validation parameters, or the final ones without validation.
    pub params: ParamStore,
    pub final_params: ParamStore,
    pub log: TrainLog,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Initializes parameters from `cfg.seed` and trains. With `out_dir`, writes
/// `ckpt-epoch-<n>.bin` files and `ckpt-best.bin`.
pub fn fit(
    model: &Model,
    split: &InteractionSplit,
    cfg: &TrainConfig,
    protocol: &EvalProtocol,
    out_dir: Option<&Path>,
) -> Result<FitResult> {
    cfg.validate()?;
    let mut store = model.init_params(cfg.seed)?;
    let validation = if cfg.eval_every > 0 {
        validation_slice(split, cfg.validation_fraction, cfg.seed)?
    } else {
        None
    };
    let bpr_split = validation.as_ref().map_or(split, |v| &v.train);
    let val_protocol = EvalProtocol {
        top_n: vec![10],
        ..protocol.clone()
    };

    let mut state = TrainState::default();
    let mut log = TrainLog::default();
    let mut best: Option<(f64, usize, ParamStore)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let loss = train_epoch(model, bpr_split, &mut store, cfg, epoch, &mut state)?;
        let mut record = EpochRecord {
            epoch,
            loss,
            hr10: None,
            ndcg10: None,
            seconds: 0.0,
        };
        if let Some(v) = &validation {
            if epoch % cfg.eval_every == 0 || epoch == cfg.epochs {
                let report = evaluate(&ModelScorer::new(model, &store)?, &v.eval, &val_protocol, 1)?;
                let (hr, ndcg) = (report.hr_at(10), report.ndcg_at(10));
                record.hr10 = Some(hr);
                record.ndcg10 = Some(ndcg);
                if best.as_ref().is_none_or(|(b, _, _)| hr > *b) {
                    best = Some((hr, epoch, store.clone()));
                    since_best = 0;
                    if let Some(dir) = out_dir {
                        save_checkpoint(&dir.join("ckpt-best.bin"), &store)?;
                    }
                } else {
                    since_best += 1;
                }
                info!("epoch {epoch}: loss {loss:.6}, validation HR@10 {hr:.4}");
            }
        }
        debug!("epoch {epoch}: loss {loss:.6}");
        if let Some(dir) = out_dir {
            if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 {
                save_checkpoint(&dir.join(format!("ckpt-epoch-{epoch}.bin")), &store)?;
            }
        }
        record.seconds = start.elapsed().as_secs_f64();
        log.records.push(record);
        if cfg.patience.is_some_and(|p| since_best >= p) {
            stopped_early = true;
            break;
        }
    }

    let last = log.records.last().map_or(0, |r| r.epoch);
    if let Some(dir) = out_dir {
        save_checkpoint(&dir.join(format!("ckpt-epoch-{last}.bin")), &store)?;
    }
    let (params, best_epoch) = match best {
        Some((_, e, p)) => (p, e),
        None => {
            if let Some(dir) = out_dir {
                save_checkpoint(&dir.join("ckpt-best.bin"), &store)?;
            }
            (store.clone(), last)
        }
    };
    Ok(FitResult {
        params,
        final_params: store,
        log,
        best_epoch,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{prepare_synthetic, Prepared};
    use crate::metapath::AspectOptions;
    use crate::model::{ModelConfig, ModelKind};
    use crate::nnmath::load_checkpoint;
    use crate::synthetic::SyntheticConfig;

    fn toy() -> Prepared {
        prepare_synthetic(&SyntheticConfig::toy(), &AspectOptions::default()).unwrap()
    }

    fn toy_model(kind: ModelKind, data: &Prepared) -> Model {
        let cfg = ModelConfig {
            dim: 8,
            factors: 8,
            ..ModelConfig::default()
        };
        Model::new(kind, cfg, data.aspects.clone(), data.split.n_users, data.split.n_items).unwrap()
    }

    fn quick(epochs: usize, lr: f64) -> TrainConfig {
        TrainConfig {
            epochs,
            lr,
            eval_every: 0,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_lr_keeps_parameters() {
        let data = toy();
        let m = toy_model(ModelKind::HicRec, &data);
        let r = fit(&m, &data.split, &quick(5, 0.0), &EvalProtocol::default(), None).unwrap();
        let init = m.init_params(3).unwrap();
        for ((_, a), (_, b)) in r.final_params.iter().zip(init.iter()) {
            assert_eq!(a.value, b.value);
        }
        assert!(r.log.losses().iter().all(|l| l.is_finite()));
    }

    #[test]
    fn toy_loss_goes_down() {
        let data = toy();
        let m = toy_model(ModelKind::HicRec, &data);
        let r = fit(&m, &data.split, &quick(200, 0.01), &EvalProtocol::default(), None).unwrap();
        let losses = r.log.losses();
        assert!(losses[199] < 0.1, "{:?}", &losses[190..]);
    }

    #[test]
    fn fixed_triples_loss_falls_every_step() {
        let data = toy();
        let m = Model::new(
            ModelKind::HicRec,
            ModelConfig::default(),
            data.aspects.clone(),
            data.split.n_users,
            data.split.n_items,
        )
        .unwrap();
        let triples = sample_bpr_triples(&data.split, 3).unwrap();
        let mut store = m.init_params(3).unwrap();
        let adam = TrainConfig::default().adam();
        let mut prev = f64::INFINITY;
        for t in 1..=60 {
            let loss = m.loss_and_grad(&triples, &mut store, 1e-4).unwrap();
            assert!(loss < prev, "step {t}: {loss} ≥ {prev}");
            prev = loss;
            adam_step(&mut store, &adam, t).unwrap();
        }
    }

    #[test]
    fn identical_runs_match() {
        let data = toy();
        let m = toy_model(ModelKind::HicRec, &data);
        let cfg = TrainConfig {
            eval_every: 2,
            validation_fraction: 0.5,
            ..quick(10, 0.01)
        };
        let a = fit(&m, &data.split, &cfg, &EvalProtocol::default(), None).unwrap();
        let b = fit(&m, &data.split, &cfg, &EvalProtocol::default(), None).unwrap();
        assert!(a.log.same_trajectory(&b.log));
        for ((_, x), (_, y)) in a.params.iter().zip(b.params.iter()) {
            assert_eq!(x.value, y.value);
        }
    }

    #[test]
    fn validation_slice_is_disjoint() {
        let data = prepare_synthetic(&SyntheticConfig::desk(), &AspectOptions::default()).unwrap();
        let v = validation_slice(&data.split, 0.1, 5).unwrap().unwrap();
        let mut held = 0;
        for u in 0..data.split.n_users {
            if let Some(i) = v.eval.test_item[u] {
                held += 1;
                assert!(data.split.is_train_pair(u, i));
                assert!(!v.train.is_train_pair(u, i));
                if let Some(t) = data.split.test_item[u] {
                    assert!(v.eval.is_known(u, t));
                }
            }
        }
        assert!(held > 50);
        assert_eq!(v.train.train_pairs.len() + held, data.split.train_pairs.len());
    }

    #[test]
    fn patience_stops_and_writes_checkpoints() {
        let data = toy();
        let m = toy_model(ModelKind::MfBpr, &data);
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            eval_every: 1,
            patience: Some(2),
            validation_fraction: 0.5,
            ..quick(50, 0.0)
        };
        let r = fit(&m, &data.split, &cfg, &EvalProtocol::default(), Some(dir.path())).unwrap();
        // lr = 0: the first evaluation is never beaten
        assert!(r.stopped_early);
        assert_eq!(r.log.records.len(), 3);
        assert_eq!(r.best_epoch, 1);
        assert!(dir.path().join("ckpt-epoch-3.bin").exists());
        let best = load_checkpoint(&dir.path().join("ckpt-best.bin")).unwrap();
        assert_eq!(best.value("mf.user"), r.params.value("mf.user"));
    }

    #[test]
    fn no_patience_runs_all_epochs() {
        let data = toy();
        let m = toy_model(ModelKind::MfBpr, &data);
        let cfg = TrainConfig {
            eval_every: 1,
            validation_fraction: 0.5,
            ..quick(12, 0.0)
        };
        let r = fit(&m, &data.split, &cfg, &EvalProtocol::default(), None).unwrap();
        assert!(!r.stopped_early);
        assert_eq!(r.log.records.len(), 12);
    }

    #[test]
    fn nan_aborts_with_diagnostic() {
        let data = toy();
        let m = toy_model(ModelKind::MfBpr, &data);
        let mut store = m.init_params(1).unwrap();
        store.value_mut("mf.user").set(0, 0, f64::NAN);
        let err = train_epoch(&m, &data.split, &mut store, &quick(1, 0.01), 1, &mut TrainState::default());
        match err {
            Err(Error::NonFinite { epoch, diagnostic, .. }) => {
                assert_eq!(epoch, 1);
                assert!(diagnostic.contains("mf.user"), "{diagnostic}");
            }
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn log_csv_format() {
        let log = TrainLog {
            records: vec![
                EpochRecord { epoch: 1, loss: 0.5, hr10: None, ndcg10: None, seconds: 0.25 },
                EpochRecord { epoch: 2, loss: 0.25, hr10: Some(0.5), ndcg10: Some(0.125), seconds: 1.0 },
            ],
        };
        assert_eq!(
            log.to_csv(),
            "epoch,loss,hr10,ndcg10,seconds\n1,0.50000000,,,0.250\n2,0.25000000,0.500000,0.125000,1.000\n"
        );
    }

    #[test]
    fn rejects_bad_config() {
        assert!(TrainConfig { batch_size: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { lr: -1.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { lambda: f64::NAN, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
