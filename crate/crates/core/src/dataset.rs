//! Assembly of a ready-to-train dataset: graph, leave-one-out split and
//! aspects. The user–item relation of the graph is rebuilt from the training
//! pairs only, so held-out interactions never reach the meta-path graphs.

use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::hin::{leave_one_out_split, load_interactions, HinBuilder, HinGraph, Interaction, InteractionSplit, Schema};
use crate::metapath::{build_aspect, parse_aspect_paths, Aspect, AspectOptions};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AspectDef {
    pub name: String,
    pub user_path: String,
    pub item_path: String,
}

#[derive(Clone, Debug)]
pub struct Prepared {
    pub graph: HinGraph,
    pub split: InteractionSplit,
    pub aspects: Vec<Arc<Aspect>>,
}

impl Prepared {
    /// Aspects whose names are in `names`, in the order given.
    pub fn select_aspects(&self, names: &[String]) -> Result<Vec<Arc<Aspect>>> {
        names
            .iter()
            .map(|n| {
                self.aspects
                    .iter()
                    .find(|a| &a.name == n)
                    .cloned()
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown aspect {n}")))
            })
            .collect()
    }
}

/// Builds the graph with the train pairs as the user–item relation and splits
/// the interactions. `builder` must already hold the non-interaction edges.
pub fn assemble(mut builder: HinBuilder, interactions: &[Interaction]) -> Result<(HinGraph, InteractionSplit)> {
    let schema = builder.schema().clone();
    if builder.relation_has_edges(&schema.user_type, &schema.item_type) {
        return Err(Error::Schema(format!(
            "{}-{} edges must come from the interaction file",
            schema.user_type, schema.item_type
        )));
    }
    if !schema.relations.iter().any(|(a, b)| {
        (a == &schema.user_type && b == &schema.item_type) || (a == &schema.item_type && b == &schema.user_type)
    }) {
        return Err(Error::Schema(format!(
            "schema must declare the {}-{} relation",
            schema.user_type, schema.item_type
        )));
    }
    for r in interactions {
        builder.observe(&schema.user_type, r.user)?;
        builder.observe(&schema.item_type, r.item)?;
    }
    let n_users = builder.node_count(&schema.user_type)?;
    let n_items = builder.node_count(&schema.item_type)?;
    let split = leave_one_out_split(interactions, n_users, n_items)?;
    for &(u, i) in &split.train_pairs {
        builder.add_edge(&schema.user_type, u, &schema.item_type, i, 1.0)?;
    }
    Ok((builder.build()?, split))
}

pub fn build_aspects(graph: &HinGraph, defs: &[AspectDef], opts: &AspectOptions) -> Result<Vec<Arc<Aspect>>> {
    defs.iter()
        .map(|d| {
            let (up, ip) = parse_aspect_paths(&d.user_path, &d.item_path, graph)?;
            build_aspect(&d.name, &up, &ip, graph, opts).map(Arc::new)
        })
        .collect()
}

pub fn prepare(
    schema: &Schema,
    edges: &[(String, usize, String, usize, f64)],
    interactions: &[Interaction],
    defs: &[AspectDef],
    opts: &AspectOptions,
) -> Result<Prepared> {
    let mut b = HinBuilder::new(schema)?;
    for (s, si, d, di, w) in edges {
        b.add_edge(s, *si, d, *di, *w)?;
    }
    let (graph, split) = assemble(b, interactions)?;
    let aspects = build_aspects(&graph, defs, opts)?;
    Ok(Prepared { graph, split, aspects })
}

pub fn prepare_files(
    schema: &Schema,
    edges: Option<&Path>,
    interactions: &Path,
    defs: &[AspectDef],
    opts: &AspectOptions,
) -> Result<Prepared> {
    let mut b = HinBuilder::new(schema)?;
    if let Some(p) = edges {
        b.add_edge_file(p)?;
    }
    let rows = load_interactions(interactions, schema)?;
    let (graph, split) = assemble(b, &rows)?;
    let aspects = build_aspects(&graph, defs, opts)?;
    Ok(Prepared { graph, split, aspects })
}

/// Prepares a generated dataset in memory.
pub fn prepare_synthetic(cfg: &crate::synthetic::SyntheticConfig, opts: &AspectOptions) -> Result<Prepared> {
    let data = crate::synthetic::generate(cfg)?;
    let edges: Vec<_> = data
        .item_attributes
        .iter()
        .map(|(i, s, v)| ("I".to_string(), *i, s.clone(), *v, 1.0))
        .collect();
    prepare(&data.schema, &edges, &data.interactions, &cfg.aspect_defs(), opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::SyntheticConfig;

    #[test]
    fn test_pairs_stay_out_of_the_graph() {
        let p = prepare_synthetic(&SyntheticConfig::toy(), &AspectOptions::default()).unwrap();
        let ui = &p.graph.relations[0].adjacency;
        for &(u, i) in &p.split.test_pairs {
            assert_eq!(ui.get(u, i), 0.0);
        }
        assert_eq!(ui.nnz(), p.split.train_pairs.len());
        assert_eq!(p.aspects.len(), 2);
        assert_eq!(p.split.test_pairs.len(), 5);
    }

    #[test]
    fn interaction_edges_in_edge_file_are_rejected() {
        let cfg = SyntheticConfig::toy();
        let schema = cfg.schema();
        let edges = vec![("U".to_string(), 0, "I".to_string(), 1, 1.0)];
        assert!(matches!(
            prepare(&schema, &edges, &[], &[], &AspectOptions::default()),
            Err(Error::Schema(_))
        ));
    }
}
