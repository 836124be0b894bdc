//! The TOML run configuration shared by every command.

use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use hicrec_core::dataset::AspectDef;
use hicrec_core::eval::{default_dimension_grid, EvalProtocol};
use hicrec_core::hin::{HinGraph, NodeTypeDecl, Schema};
use hicrec_core::metapath::{parse_aspect_paths, AspectOptions, Normalization, DENSE_FEATURE_LIMIT};
use hicrec_core::model::{ModelConfig, ModelKind};
use hicrec_core::synthetic::{AttributeSpec, SyntheticConfig};
use hicrec_core::training::TrainConfig;

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<SchemaSection>,
    #[serde(default)]
    pub aspect: IndexMap<String, AspectSection>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub gcn: GcnSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSection>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edges: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interactions: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaSection {
    pub user_type: String,
    pub item_type: String,
    pub relations: Vec<(String, String)>,
    pub node_types: Vec<NodeTypeSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeTypeSection {
    pub symbol: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AspectSection {
    pub user_path: String,
    pub item_path: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Model trained when `--model` is not given.
    pub kind: String,
    pub dim: usize,
    pub factors: usize,
    pub layers: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            kind: ModelKind::HicRec.as_str().to_string(),
            dim: m.dim,
            factors: m.factors,
            layers: m.layers,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GcnSection {
    /// `symmetric` or `none`.
    pub normalize: String,
    pub share_across_aspects: bool,
}

impl Default for GcnSection {
    fn default() -> Self {
        Self {
            normalize: "symmetric".into(),
            share_across_aspects: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lambda: f64,
    pub eval_every: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patience: Option<usize>,
    pub validation_fraction: f64,
    pub checkpoint_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            lambda: t.lambda,
            eval_every: t.eval_every,
            patience: t.patience,
            validation_fraction: t.validation_fraction,
            checkpoint_every: t.checkpoint_every,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub negatives: usize,
    pub top_n: Vec<usize>,
    pub cold_threshold: usize,
    /// Candidate sampling seed; the run seed when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        let p = EvalProtocol::default();
        Self {
            negatives: p.negatives,
            top_n: p.top_n,
            cold_threshold: p.cold_threshold,
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub base_aspect: String,
    pub dimensions: Vec<usize>,
    /// Aspects used by dimension sweeps; empty means all.
    pub aspects: Vec<String>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            base_aspect: "History".into(),
            dimensions: default_dimension_grid(),
            aspects: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    pub users: usize,
    pub items: usize,
    pub groups: usize,
    pub interactions_per_user: usize,
    pub alignment: f64,
    pub attributes: Vec<AttributeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeSection {
    pub symbol: String,
    pub values: usize,
}

fn config_err(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {msg}"))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads, resolves relative paths against the file's directory and
    /// validates.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let base = if base.as_os_str().is_empty() {
            std::env::current_dir().map_err(|e| CliError::Config(e.to_string()))?
        } else if base.is_relative() {
            std::env::current_dir().map_err(|e| CliError::Config(e.to_string()))?.join(base)
        } else {
            base.to_path_buf()
        };
        cfg.resolve_paths(&base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        if let Some(p) = self.data.edges.as_mut() {
            fix(p);
        }
        if let Some(p) = self.data.interactions.as_mut() {
            fix(p);
        }
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model_kind()?;
        if self.model.dim == 0 {
            return Err(config_err("model.dim", "must be ≥ 1"));
        }
        if self.model.factors == 0 {
            return Err(config_err("model.factors", "must be ≥ 1"));
        }
        self.aspect_options()?;
        self.train_config().validate().map_err(|e| config_err("train", e))?;
        self.protocol().validate().map_err(|e| config_err("eval", e))?;
        if let Some(s) = &self.synthetic {
            self.synthetic_config(s).validate().map_err(|e| config_err("synthetic", e))?;
        }
        let Some(schema) = self.schema()? else {
            if !self.aspect.is_empty() {
                return Err(config_err("schema", "aspects need a schema (or a [synthetic] section)"));
            }
            return Ok(());
        };
        let skeleton = HinGraph::skeleton(&schema).map_err(|e| config_err("schema", e))?;
        for d in self.aspect_defs() {
            parse_aspect_paths(&d.user_path, &d.item_path, &skeleton)
                .map_err(|e| config_err(&format!("aspect.{}", d.name), e))?;
        }
        Ok(())
    }

    pub fn model_kind(&self) -> Result<ModelKind, CliError> {
        self.model.kind.parse().map_err(|e| config_err("model.kind", e))
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            dim: self.model.dim,
            factors: self.model.factors,
            layers: self.model.layers,
            share_across_aspects: self.gcn.share_across_aspects,
        }
    }

    pub fn aspect_options(&self) -> Result<AspectOptions, CliError> {
        let normalization = match self.gcn.normalize.as_str() {
            "symmetric" => Normalization::Symmetric,
            "none" => Normalization::None,
            other => return Err(config_err("gcn.normalize", format!("expected symmetric or none, got {other:?}"))),
        };
        Ok(AspectOptions {
            normalization,
            dense_feature_limit: DENSE_FEATURE_LIMIT,
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            lambda: t.lambda,
            seed: self.seed,
            eval_every: t.eval_every,
            patience: t.patience,
            validation_fraction: t.validation_fraction,
            checkpoint_every: t.checkpoint_every,
        }
    }

    pub fn protocol(&self) -> EvalProtocol {
        EvalProtocol {
            negatives: self.eval.negatives,
            top_n: self.eval.top_n.clone(),
            seed: self.eval.seed.unwrap_or(self.seed),
            cold_threshold: self.eval.cold_threshold,
        }
    }

    fn synthetic_config(&self, s: &SyntheticSection) -> SyntheticConfig {
        SyntheticConfig {
            users: s.users,
            items: s.items,
            attributes: s
                .attributes
                .iter()
                .map(|a| AttributeSpec {
                    symbol: a.symbol.clone(),
                    values: a.values,
                })
                .collect(),
            groups: s.groups,
            interactions_per_user: s.interactions_per_user,
            alignment: s.alignment,
            seed: s.seed.unwrap_or(self.seed),
        }
    }

    pub fn synthetic(&self) -> Option<SyntheticConfig> {
        self.synthetic.as_ref().map(|s| self.synthetic_config(s))
    }

    /// The declared schema, or the generator's schema for synthetic runs.
    pub fn schema(&self) -> Result<Option<Schema>, CliError> {
        if let Some(s) = &self.schema {
            let schema = Schema {
                node_types: s
                    .node_types
                    .iter()
                    .map(|n| NodeTypeDecl {
                        symbol: n.symbol.clone(),
                        count: n.count,
                    })
                    .collect(),
                relations: s.relations.clone(),
                user_type: s.user_type.clone(),
                item_type: s.item_type.clone(),
            };
            schema.validate().map_err(|e| config_err("schema", e))?;
            return Ok(Some(schema));
        }
        Ok(self.synthetic().map(|s| s.schema()))
    }

    /// Declared aspects in file order, or the generator's aspects for
    /// synthetic runs without an aspect table.
    pub fn aspect_defs(&self) -> Vec<AspectDef> {
        if self.aspect.is_empty() {
            if let Some(s) = self.synthetic() {
                return s.aspect_defs();
            }
        }
        self.aspect
            .iter()
            .map(|(name, a)| AspectDef {
                name: name.clone(),
                user_path: a.user_path.clone(),
                item_path: a.item_path.clone(),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const AMAZON: &str = r#"
seed = 7
output_dir = "runs"

[data]
edges = "edges.tsv"
interactions = "interactions.tsv"

[schema]
user_type = "U"
item_type = "I"
relations = [["U", "I"], ["I", "B"], ["I", "C"]]
node_types = [{ symbol = "U" }, { symbol = "I" }, { symbol = "B" }, { symbol = "C", count = 4 }]

[aspect.History]
user_path = "UIU"
item_path = "IUI"

[aspect.Brand]
user_path = "UIBIU"
item_path = "IBI"

[aspect.Category]
user_path = "UICIU"
item_path = "ICI"

[train]
epochs = 3
patience = 2
"#;

    #[test]
    fn parses_and_keeps_aspect_order() {
        let cfg = RunConfig::parse(AMAZON).unwrap();
        cfg.validate().unwrap();
        let names: Vec<_> = cfg.aspect_defs().into_iter().map(|d| d.name).collect();
        assert_eq!(names, ["History", "Brand", "Category"]);
        assert_eq!(cfg.model_config(), ModelConfig::default());
        assert_eq!(cfg.train.batch_size, 4096);
        assert_eq!(cfg.train.lambda, 1e-4);
        assert_eq!(cfg.protocol().seed, 7);
    }

    #[test]
    fn roundtrips_through_toml() {
        let mut cfg = RunConfig::parse(AMAZON).unwrap();
        cfg.resolve_paths(Path::new("/data/amazon"));
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
        assert_eq!(cfg.data.edges.as_deref(), Some(Path::new("/data/amazon/edges.tsv")));
    }

    #[test]
    fn bad_metapath_names_its_key() {
        let text = AMAZON.replace("UIBIU", "UIXIU");
        let err = RunConfig::parse(&text).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("aspect.Brand"), "{err}");
        assert_eq!(err.exit_code(), 1);
        let text = AMAZON.replace("item_path = \"IBI\"", "item_path = \"UIU\"");
        assert!(RunConfig::parse(&text).unwrap().validate().is_err());
    }

    #[test]
    fn rejects_bad_values() {
        for (from, to) in [
            ("epochs = 3", "epochs = 3\nbatch_size = 0"),
            ("[train]", "[model]\ndim = 0\n[train]"),
            ("[train]", "[gcn]\nnormalize = \"rw\"\n[train]"),
            ("[train]", "[model]\nkind = \"ncf\"\n[train]"),
            ("seed = 7", "seed = 7\nunknown_key = 1"),
        ] {
            let text = AMAZON.replace(from, to);
            let r = RunConfig::parse(&text).and_then(|c| c.validate());
            assert!(r.is_err(), "{to}");
        }
    }

    #[test]
    fn synthetic_only_config_is_complete() {
        let cfg = RunConfig::parse(
            r#"
[synthetic]
users = 50
items = 40
groups = 3
interactions_per_user = 4
alignment = 0.5
attributes = [{ symbol = "B", values = 4 }]
"#,
        )
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.aspect_defs().len(), 2);
        assert!(cfg.schema().unwrap().is_some());
    }
}
