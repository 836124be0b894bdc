//! Synthetic heterogeneous datasets with planted structure.
//!
//! Users belong to taste groups and items carry one value per attribute type.
//! Every group prefers one value of each attribute. Each interaction is, with
//! probability `alignment`, drawn from the items carrying the group's preferred
//! value of a randomly chosen attribute, and otherwise uniformly. With
//! `alignment = 0` interactions are uniform random.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::AspectDef;
use crate::error::{Error, Result};
use crate::hin::{Interaction, NodeTypeDecl, Schema};

#[derive(Clone, Debug, PartialEq)]
pub struct AttributeSpec {
    pub symbol: String,
    pub values: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub users: usize,
    pub items: usize,
    pub attributes: Vec<AttributeSpec>,
    pub groups: usize,
    /// Mean interactions per user; counts are uniform on `[2, 2·mean − 2]`.
    pub interactions_per_user: usize,
    pub alignment: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    /// 5 users, 6 items, one two-valued brand attribute.
    pub fn toy() -> Self {
        Self {
            users: 5,
            items: 6,
            attributes: vec![AttributeSpec {
                symbol: "B".into(),
                values: 2,
            }],
            groups: 2,
            interactions_per_user: 3,
            alignment: 0.9,
            seed: 7,
        }
    }

    /// 1000 users, 300 items, brand and category attributes.
    pub fn desk() -> Self {
        Self {
            users: 1000,
            items: 300,
            attributes: vec![
                AttributeSpec {
                    symbol: "B".into(),
                    values: 20,
                },
                AttributeSpec {
                    symbol: "C".into(),
                    values: 6,
                },
            ],
            groups: 10,
            interactions_per_user: 12,
            alignment: 0.8,
            seed: 2024,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("synthetic config: {m}")));
        if self.users == 0 || self.items < 3 {
            return bad("need ≥ 1 user and ≥ 3 items");
        }
        if self.groups == 0 {
            return bad("need ≥ 1 taste group");
        }
        if self.interactions_per_user < 2 {
            return bad("interactions_per_user must be ≥ 2");
        }
        if 2 * self.interactions_per_user - 2 >= self.items {
            return bad("users could interact with every item");
        }
        if !(0.0..=1.0).contains(&self.alignment) {
            return bad("alignment must lie in [0, 1]");
        }
        for a in &self.attributes {
            if a.values == 0 || a.symbol == "U" || a.symbol == "I" {
                return bad("attribute types need ≥ 1 value and a symbol other than U/I");
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> Schema {
        let mut node_types = vec![
            NodeTypeDecl {
                symbol: "U".into(),
                count: Some(self.users),
            },
            NodeTypeDecl {
                symbol: "I".into(),
                count: Some(self.items),
            },
        ];
        let mut relations = vec![("U".to_string(), "I".to_string())];
        for a in &self.attributes {
            node_types.push(NodeTypeDecl {
                symbol: a.symbol.clone(),
                count: Some(a.values),
            });
            relations.push(("I".to_string(), a.symbol.clone()));
        }
        Schema {
            node_types,
            relations,
            user_type: "U".into(),
            item_type: "I".into(),
        }
    }

    /// History plus one aspect per attribute (`UIXIU`, `IXI`).
    pub fn aspect_defs(&self) -> Vec<AspectDef> {
        let mut defs = vec![AspectDef {
            name: "History".into(),
            user_path: "UIU".into(),
            item_path: "IUI".into(),
        }];
        for a in &self.attributes {
            defs.push(AspectDef {
                name: a.symbol.clone(),
                user_path: format!("U.I.{}.I.U", a.symbol),
                item_path: format!("I.{}.I", a.symbol),
            });
        }
        defs
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub schema: Schema,
    /// `(item, attribute symbol, value)` rows.
    pub item_attributes: Vec<(usize, String, usize)>,
    /// Chronological; `timestamp` is the sampling step.
    pub interactions: Vec<Interaction>,
    pub user_group: Vec<usize>,
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // item attribute values, and the item pools per (attribute, value)
    let mut item_attributes = Vec::new();
    let mut pools: Vec<Vec<Vec<usize>>> = cfg.attributes.iter().map(|a| vec![Vec::new(); a.values]).collect();
    for item in 0..cfg.items {
        for (a, spec) in cfg.attributes.iter().enumerate() {
            let v = rng.gen_range(0..spec.values);
            item_attributes.push((item, spec.symbol.clone(), v));
            pools[a][v].push(item);
        }
    }
    let prefs: Vec<Vec<usize>> = (0..cfg.groups)
        .map(|_| cfg.attributes.iter().map(|a| rng.gen_range(0..a.values)).collect())
        .collect();
    let user_group: Vec<usize> = (0..cfg.users).map(|_| rng.gen_range(0..cfg.groups)).collect();

    let hi = 2 * cfg.interactions_per_user - 2;
    let mut chosen = vec![false; cfg.items];
    let mut per_user: Vec<Vec<usize>> = Vec::with_capacity(cfg.users);
    for &g in &user_group {
        let n = rng.gen_range(2..=hi.max(2));
        let mut picked = Vec::with_capacity(n);
        while picked.len() < n {
            let mut item = None;
            if !cfg.attributes.is_empty() && rng.gen_bool(cfg.alignment) {
                let a = rng.gen_range(0..cfg.attributes.len());
                let pool: Vec<usize> = pools[a][prefs[g][a]].iter().copied().filter(|&i| !chosen[i]).collect();
                item = pool.choose(&mut rng).copied();
            }
            let item = match item {
                Some(i) => i,
                None => loop {
                    let i = rng.gen_range(0..cfg.items);
                    if !chosen[i] {
                        break i;
                    }
                },
            };
            chosen[item] = true;
            picked.push(item);
        }
        for &i in &picked {
            chosen[i] = false;
        }
        per_user.push(picked);
    }

    // interleave users round-robin so file order is not grouped by user
    let mut interactions = Vec::new();
    let longest = per_user.iter().map(Vec::len).max().unwrap_or(0);
    let mut step = 0i64;
    for k in 0..longest {
        for (u, items) in per_user.iter().enumerate() {
            if let Some(&i) = items.get(k) {
                interactions.push(Interaction {
                    user: u,
                    item: i,
                    timestamp: Some(step),
                });
                step += 1;
            }
        }
    }
    Ok(SyntheticData {
        schema: cfg.schema(),
        item_attributes,
        interactions,
        user_group,
    })
}

/// Writes the edge list (item–attribute rows) and the interaction file
/// (user→item rows with a timestamp column).
pub fn write_dataset(data: &SyntheticData, edges: &Path, interactions: &Path) -> Result<()> {
    write_edges(data, edges).map_err(|e| Error::io(edges, e))?;
    write_interactions(data, interactions).map_err(|e| Error::io(interactions, e))
}

fn write_edges(data: &SyntheticData, path: &Path) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# src_type\tsrc_id\tdst_type\tdst_id")?;
    for (item, sym, v) in &data.item_attributes {
        writeln!(w, "I\t{item}\t{sym}\t{v}")?;
    }
    w.flush()
}

fn write_interactions(data: &SyntheticData, path: &Path) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# user\tid\titem\tid\ttimestamp")?;
    for r in &data.interactions {
        writeln!(w, "U\t{}\tI\t{}\t{}", r.user, r.item, r.timestamp.unwrap_or(0))?;
    }
    w.flush()
}
