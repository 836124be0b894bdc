use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use hicrec_core::eval::{evaluate as run_eval, sweep as run_sweep, sweep_csv, ModelScorer, RankingReport, SweepKind, SweepSpec};
use hicrec_core::model::{Model, ModelKind};
use hicrec_core::nnmath::load_checkpoint;
use hicrec_core::synthetic::{generate, write_dataset};
use hicrec_core::training::{fit, FitResult};

use crate::cache::{prepare as load_or_build, PrepareOutcome};
use crate::config::RunConfig;
use crate::error::{CliError, Context};

/// Evaluation worker count from `HICREC_THREADS`, default 1.
pub fn eval_threads() -> Result<usize, CliError> {
    match std::env::var("HICREC_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| CliError::Usage(format!("HICREC_THREADS must be a positive integer, got {v:?}"))),
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

pub fn prepare(cfg: &RunConfig) -> Result<PrepareOutcome, CliError> {
    let out = load_or_build(cfg, true)?;
    let p = &out.prepared;
    println!(
        "{} users, {} items, {} train pairs, {} test users",
        p.split.n_users,
        p.split.n_items,
        p.split.train_pairs.len(),
        p.split.test_pairs.len()
    );
    for (a, hit) in p.aspects.iter().zip(&out.aspect_hits) {
        println!(
            "aspect {:<12} {} / {}  nnz {} / {}{}",
            a.name,
            a.user_path,
            a.item_path,
            a.user_commuting.nnz(),
            a.item_commuting.nnz(),
            if *hit { "  (cached)" } else { "" }
        );
    }
    Ok(out)
}

pub fn run_dir(cfg: &RunConfig, kind: ModelKind) -> PathBuf {
    cfg.output_dir.join("runs").join(kind.as_str())
}

fn build_model(cfg: &RunConfig, kind: ModelKind, out: &PrepareOutcome) -> Result<Model, CliError> {
    let p = &out.prepared;
    Model::new(kind, cfg.model_config(), p.aspects.clone(), p.split.n_users, p.split.n_items).context("model")
}

/// Written next to the checkpoints of every training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub model: String,
    pub seed: u64,
    pub parameter_count: usize,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub config: RunConfig,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}

pub struct TrainOutcome {
    pub run_dir: PathBuf,
    pub fit: FitResult,
}

pub fn train(cfg: &RunConfig, kind: ModelKind) -> Result<TrainOutcome, CliError> {
    let data = load_or_build(cfg, false)?;
    let model = build_model(cfg, kind, &data)?;
    let dir = run_dir(cfg, kind);
    fs::create_dir_all(&dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    let fitted = fit(&model, &data.prepared.split, &cfg.train_config(), &cfg.protocol(), Some(&dir)).context("train")?;
    write_file(&dir.join("train_log.csv"), fitted.log.to_csv().as_bytes())?;
    let manifest = Manifest {
        model: kind.as_str().to_string(),
        seed: cfg.seed,
        parameter_count: fitted.params.parameter_count(),
        best_epoch: fitted.best_epoch,
        epochs_run: fitted.log.records.len(),
        config: cfg.clone(),
    };
    let text = toml::to_string(&manifest).map_err(|e| CliError::Config(format!("cannot serialize manifest: {e}")))?;
    write_file(&dir.join("manifest.toml"), text.as_bytes())?;
    if let Some(last) = fitted.log.records.last() {
        println!(
            "{kind}: {} epochs, final loss {:.6}, best epoch {}, {} parameters",
            fitted.log.records.len(),
            last.loss,
            fitted.best_epoch,
            manifest.parameter_count
        );
    }
    info!("run written to {}", dir.display());
    Ok(TrainOutcome { run_dir: dir, fit: fitted })
}

pub struct EvalOutcome {
    pub report: RankingReport,
    pub report_path: PathBuf,
}

/// Evaluates a checkpoint (default: the best checkpoint of `kind`'s run).
/// The model kind comes from `kind`, else the run manifest beside the
/// checkpoint, else `model.kind`.
pub fn evaluate(cfg: &RunConfig, kind: Option<ModelKind>, checkpoint: Option<&Path>) -> Result<EvalOutcome, CliError> {
    let kind = match (kind, checkpoint) {
        (Some(k), _) => k,
        (None, Some(ckpt)) => {
            let manifest = ckpt.parent().map(|d| d.join("manifest.toml"));
            match manifest.filter(|m| m.exists()) {
                Some(m) => Manifest::load(&m)?.model.parse().context("manifest.model")?,
                None => cfg.model_kind()?,
            }
        }
        (None, None) => cfg.model_kind()?,
    };
    let ckpt = checkpoint.map_or_else(|| run_dir(cfg, kind).join("ckpt-best.bin"), Path::to_path_buf);
    if !ckpt.exists() {
        return Err(CliError::Usage(format!(
            "checkpoint {} not found; run `hicrec train` first",
            ckpt.display()
        )));
    }
    let data = load_or_build(cfg, false)?;
    let model = build_model(cfg, kind, &data)?;
    let mut store = model.init_params(cfg.seed).context("model")?;
    let loaded = load_checkpoint(&ckpt).context(&ckpt.display().to_string())?;
    store.load_values_from(&loaded).context(&ckpt.display().to_string())?;
    let scorer = ModelScorer::new(&model, &store).context("evaluate")?;
    let report = run_eval(&scorer, &data.prepared.split, &cfg.protocol(), eval_threads()?).context("evaluate")?;
    let stem = ckpt.file_stem().map_or_else(|| "ckpt".into(), |s| s.to_string_lossy().into_owned());
    let report_path = cfg.output_dir.join("reports").join(format!("{kind}-{stem}.csv"));
    write_file(&report_path, report.to_csv().as_bytes())?;
    print!("{}", report.to_table());
    Ok(EvalOutcome { report, report_path })
}

pub fn sweep(cfg: &RunConfig, sweep_kind: SweepKind, kind: Option<ModelKind>) -> Result<PathBuf, CliError> {
    let kind = match kind {
        Some(k) => k,
        None => cfg.model_kind()?,
    };
    let data = load_or_build(cfg, false)?;
    let train = cfg.train_config();
    let protocol = cfg.protocol();
    let spec = SweepSpec {
        kind: sweep_kind,
        model_kind: kind,
        model: cfg.model_config(),
        train: &train,
        protocol: &protocol,
        threads: eval_threads()?,
        base_aspect: &cfg.sweep.base_aspect,
        aspects: &cfg.sweep.aspects,
        dimensions: &cfg.sweep.dimensions,
    };
    let rows = run_sweep(&data.prepared, &spec).context("sweep")?;
    let csv = sweep_csv(sweep_kind, &rows, &protocol.top_n);
    let name = match sweep_kind {
        SweepKind::Aspects => "aspects",
        SweepKind::Dimension => "dimension",
    };
    let path = cfg.output_dir.join(format!("sweep-{name}-{kind}.csv"));
    write_file(&path, csv.as_bytes())?;
    print!("{csv}");
    Ok(path)
}

pub fn gen_synthetic(cfg: &RunConfig) -> Result<(), CliError> {
    let syn = cfg
        .synthetic()
        .ok_or_else(|| CliError::Config("synthetic: section required".into()))?;
    let need = |p: &Option<PathBuf>, key: &str| {
        p.clone().ok_or_else(|| CliError::Config(format!("{key}: output path required")))
    };
    let edges = need(&cfg.data.edges, "data.edges")?;
    let inter = need(&cfg.data.interactions, "data.interactions")?;
    for p in [&edges, &inter] {
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
        }
    }
    let data = generate(&syn).context("synthetic")?;
    write_dataset(&data, &edges, &inter).context("synthetic")?;
    println!(
        "wrote {} interactions to {} and {} attribute edges to {}",
        data.interactions.len(),
        inter.display(),
        data.item_attributes.len(),
        edges.display()
    );
    Ok(())
}
