//! Heterogeneous graph storage, edge-list loading, leave-one-out splitting and
//! BPR triple sampling.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nnmath::CsrMatrix;

/// A node type as declared in a schema. `count` pins the number of nodes;
/// when absent it is inferred from the data.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeTypeDecl {
    pub symbol: String,
    pub count: Option<usize>,
}

/// The skeleton a graph is loaded against.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schema {
    pub node_types: Vec<NodeTypeDecl>,
    /// Declared relations as `(src_symbol, dst_symbol)`.
    pub relations: Vec<(String, String)>,
    pub user_type: String,
    pub item_type: String,
}

impl Schema {
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashMap::new();
        for (k, t) in self.node_types.iter().enumerate() {
            if t.symbol.is_empty() || t.symbol.contains(['.', '\t', ' ']) {
                return Err(Error::Schema(format!("invalid type symbol {:?}", t.symbol)));
            }
            if seen.insert(t.symbol.as_str(), k).is_some() {
                return Err(Error::Schema(format!("duplicate type symbol {}", t.symbol)));
            }
            if t.count == Some(0) {
                return Err(Error::Schema(format!("type {} pinned to 0 nodes", t.symbol)));
            }
        }
        for (a, b) in &self.relations {
            for s in [a, b] {
                if !seen.contains_key(s.as_str()) {
                    return Err(Error::Schema(format!(
                        "relation {a}-{b} references undeclared type {s}"
                    )));
                }
            }
        }
        for (i, r) in self.relations.iter().enumerate() {
            if self.relations[..i].iter().any(|q| q == r) {
                return Err(Error::Schema(format!("duplicate relation {}-{}", r.0, r.1)));
            }
        }
        for s in [&self.user_type, &self.item_type] {
            if !seen.contains_key(s.as_str()) {
                return Err(Error::Schema(format!("designated type {s} is not declared")));
            }
        }
        if self.user_type == self.item_type {
            return Err(Error::Schema("user and item types must differ".to_string()));
        }
        if self.node_types.len() + self.relations.len() <= 2 {
            return Err(Error::Schema(
                "a heterogeneous graph needs |types| + |relations| > 2".to_string(),
            ));
        }
        Ok(())
    }

    pub fn type_index(&self, symbol: &str) -> Option<usize> {
        self.node_types.iter().position(|t| t.symbol == symbol)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeType {
    pub symbol: String,
    pub count: usize,
}

/// A typed relation; `adjacency` has shape `count(src) x count(dst)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Relation {
    pub src: usize,
    pub dst: usize,
    pub adjacency: CsrMatrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HinGraph {
    pub node_types: Vec<NodeType>,
    pub relations: Vec<Relation>,
    pub user_type: usize,
    pub item_type: usize,
}

/// How a hop between two types maps onto a stored relation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Hop {
    Forward(usize),
    Reverse(usize),
}

impl HinGraph {
    /// One node per type and no edges; enough to type-check meta-paths
    /// against a schema.
    pub fn skeleton(schema: &Schema) -> Result<HinGraph> {
        schema.validate()?;
        let idx = |s: &str| schema.type_index(s).expect("validated");
        Ok(HinGraph {
            node_types: schema
                .node_types
                .iter()
                .map(|d| NodeType {
                    symbol: d.symbol.clone(),
                    count: 1,
                })
                .collect(),
            relations: schema
                .relations
                .iter()
                .map(|(a, b)| Relation {
                    src: idx(a),
                    dst: idx(b),
                    adjacency: CsrMatrix::zeros(1, 1),
                })
                .collect(),
            user_type: idx(&schema.user_type),
            item_type: idx(&schema.item_type),
        })
    }

    pub fn type_index(&self, symbol: &str) -> Option<usize> {
        self.node_types.iter().position(|t| t.symbol == symbol)
    }

    pub fn symbol(&self, t: usize) -> &str {
        &self.node_types[t].symbol
    }

    pub fn count(&self, t: usize) -> usize {
        self.node_types[t].count
    }

    pub fn n_users(&self) -> usize {
        self.count(self.user_type)
    }

    pub fn n_items(&self) -> usize {
        self.count(self.item_type)
    }

    /// Finds the relation realizing a hop `a -> b`, preferring a forward
    /// declaration over the transpose of `b -> a`.
    pub fn hop(&self, a: usize, b: usize) -> Option<Hop> {
        if let Some(k) = self.relations.iter().position(|r| r.src == a && r.dst == b) {
            return Some(Hop::Forward(k));
        }
        self.relations
            .iter()
            .position(|r| r.src == b && r.dst == a)
            .map(Hop::Reverse)
    }

    /// Adjacency of a hop, transposed when the relation is walked backwards.
    pub fn hop_matrix(&self, hop: Hop) -> CsrMatrix {
        match hop {
            Hop::Forward(k) => self.relations[k].adjacency.clone(),
            Hop::Reverse(k) => self.relations[k].adjacency.transpose(),
        }
    }

    /// Checks adjacency shapes against node counts and weight signs.
    pub fn validate(&self) -> Result<()> {
        if self.node_types.len() + self.relations.len() <= 2 {
            return Err(Error::Schema(
                "a heterogeneous graph needs |types| + |relations| > 2".to_string(),
            ));
        }
        for r in &self.relations {
            let want = (self.count(r.src), self.count(r.dst));
            if r.adjacency.shape() != want {
                return Err(Error::shape(
                    "HinGraph::validate",
                    format!(
                        "relation {}-{} has shape {:?}, expected {:?}",
                        self.symbol(r.src),
                        self.symbol(r.dst),
                        r.adjacency.shape(),
                        want
                    ),
                ));
            }
            if r.adjacency.values().iter().any(|&v| v < 0.0) {
                return Err(Error::Schema(format!(
                    "relation {}-{} has negative weights",
                    self.symbol(r.src),
                    self.symbol(r.dst)
                )));
            }
        }
        Ok(())
    }
}

/// One parsed edge-list row.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeRow {
    pub src_type: String,
    pub src_id: usize,
    pub dst_type: String,
    pub dst_id: usize,
    /// Columns after the fourth, unparsed.
    pub extra: Vec<String>,
}

fn parse_row(path: &Path, line_no: usize, line: &str) -> Result<EdgeRow> {
    let err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        line: line_no,
        message,
    };
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() < 4 {
        return Err(err(format!("expected at least 4 tab-separated columns, got {}", cols.len())));
    }
    let id = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| err(format!("invalid node id {s:?}")))
    };
    Ok(EdgeRow {
        src_type: cols[0].trim().to_string(),
        src_id: id(cols[1])?,
        dst_type: cols[2].trim().to_string(),
        dst_id: id(cols[3])?,
        extra: cols[4..].iter().map(|s| s.trim().to_string()).collect(),
    })
}

/// Reads an edge-list file into `(line_number, row)` pairs, skipping blank
/// and `#` comment lines.
pub fn read_edge_rows(path: &Path) -> Result<Vec<(usize, EdgeRow)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        rows.push((k + 1, parse_row(path, k + 1, line)?));
    }
    Ok(rows)
}

/// Accumulates edges against a schema and produces a [`HinGraph`].
#[derive(Clone, Debug)]
pub struct HinBuilder {
    schema: Schema,
    max_seen: Vec<Option<usize>>,
    triplets: Vec<Vec<(usize, usize, f64)>>,
}

impl HinBuilder {
    pub fn new(schema: &Schema) -> Result<Self> {
        schema.validate()?;
        Ok(Self {
            schema: schema.clone(),
            max_seen: vec![None; schema.node_types.len()],
            triplets: vec![Vec::new(); schema.relations.len()],
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    fn type_of(&self, symbol: &str) -> Result<usize> {
        self.schema
            .type_index(symbol)
            .ok_or_else(|| Error::Schema(format!("unknown node type {symbol:?}")))
    }

    /// Records that node `id` of type `symbol` exists.
    pub fn observe(&mut self, symbol: &str, id: usize) -> Result<()> {
        let t = self.type_of(symbol)?;
        if let Some(count) = self.schema.node_types[t].count {
            if id >= count {
                return Err(Error::Range {
                    symbol: symbol.to_string(),
                    id,
                    count,
                });
            }
        }
        let slot = &mut self.max_seen[t];
        *slot = Some(slot.map_or(id, |m| m.max(id)));
        Ok(())
    }

    /// Index of the declared relation joining the two types, and whether the
    /// given orientation is the declared one.
    fn relation_of(&self, src: &str, dst: &str) -> Result<(usize, bool)> {
        let rels = &self.schema.relations;
        if let Some(k) = rels.iter().position(|(a, b)| a == src && b == dst) {
            return Ok((k, true));
        }
        if let Some(k) = rels.iter().position(|(a, b)| a == dst && b == src) {
            return Ok((k, false));
        }
        Err(Error::Schema(format!("no relation declared between {src} and {dst}")))
    }

    pub fn add_edge(
        &mut self,
        src: &str,
        src_id: usize,
        dst: &str,
        dst_id: usize,
        weight: f64,
    ) -> Result<()> {
        self.type_of(src)?;
        self.type_of(dst)?;
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::Schema(format!("edge weight {weight} must be finite and ≥ 0")));
        }
        let (k, forward) = self.relation_of(src, dst)?;
        self.observe(src, src_id)?;
        self.observe(dst, dst_id)?;
        let entry = if forward {
            (src_id, dst_id, weight)
        } else {
            (dst_id, src_id, weight)
        };
        self.triplets[k].push(entry);
        Ok(())
    }

    /// Adds every row of an edge-list file. A fifth column, if present, is the
    /// edge weight.
    pub fn add_edge_file(&mut self, path: &Path) -> Result<()> {
        for (line, row) in read_edge_rows(path)? {
            let weight = match row.extra.first() {
                None => 1.0,
                Some(w) => w.parse::<f64>().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("invalid weight {w:?}"),
                })?,
            };
            if row.extra.len() > 1 {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: "too many columns for an edge row".to_string(),
                });
            }
            self.add_edge(&row.src_type, row.src_id, &row.dst_type, row.dst_id, weight)
                .map_err(|e| match e {
                    Error::Schema(m) => Error::Schema(format!("{}:{line}: {m}", path.display())),
                    other => other,
                })?;
        }
        Ok(())
    }

    /// Whether any edge has been added to the relation joining `a` and `b`.
    pub fn relation_has_edges(&self, a: &str, b: &str) -> bool {
        self.relation_of(a, b)
            .map(|(k, _)| !self.triplets[k].is_empty())
            .unwrap_or(false)
    }

    /// Current node count of a type: the pinned count, or max observed id + 1.
    pub fn node_count(&self, symbol: &str) -> Result<usize> {
        let t = self.type_of(symbol)?;
        let inferred = self.max_seen[t].map_or(0, |m| m + 1);
        Ok(self.schema.node_types[t].count.unwrap_or(0).max(inferred))
    }

    pub fn build(self) -> Result<HinGraph> {
        let mut node_types = Vec::with_capacity(self.schema.node_types.len());
        for decl in &self.schema.node_types {
            let count = self.node_count(&decl.symbol)?;
            if count == 0 {
                return Err(Error::Schema(format!(
                    "type {} has no nodes; pin a count or add edges",
                    decl.symbol
                )));
            }
            node_types.push(NodeType {
                symbol: decl.symbol.clone(),
                count,
            });
        }
        let idx = |s: &str| self.schema.type_index(s).expect("validated");
        let mut relations = Vec::with_capacity(self.schema.relations.len());
        for ((a, b), trip) in self.schema.relations.iter().zip(self.triplets) {
            let (src, dst) = (idx(a), idx(b));
            let adjacency =
                CsrMatrix::from_triplets(node_types[src].count, node_types[dst].count, trip)?;
            relations.push(Relation {
                src,
                dst,
                adjacency,
            });
        }
        let graph = HinGraph {
            node_types,
            relations,
            user_type: idx(&self.schema.user_type),
            item_type: idx(&self.schema.item_type),
        };
        graph.validate()?;
        Ok(graph)
    }
}

/// Loads a tab-separated edge list against `schema`. Duplicate edges sum.
pub fn load_edge_list(path: &Path, schema: &Schema) -> Result<HinGraph> {
    let mut b = HinBuilder::new(schema)?;
    b.add_edge_file(path)?;
    b.build()
}

/// A user→item interaction in file order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Interaction {
    pub user: usize,
    pub item: usize,
    pub timestamp: Option<i64>,
}

/// Reads an interaction file: user→item rows with optional trailing columns.
/// Five columns: the fifth is a timestamp. Six columns: weight (ignored, all
/// interactions are implicit positives) then timestamp.
pub fn load_interactions(path: &Path, schema: &Schema) -> Result<Vec<Interaction>> {
    schema.validate()?;
    let mut out = Vec::new();
    let mut with_ts = None;
    for (line, row) in read_edge_rows(path)? {
        let perr = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        if row.src_type != schema.user_type || row.dst_type != schema.item_type {
            if schema.type_index(&row.src_type).is_none() || schema.type_index(&row.dst_type).is_none() {
                return Err(Error::Schema(format!(
                    "{}:{line}: unknown node type in {}-{}",
                    path.display(),
                    row.src_type,
                    row.dst_type
                )));
            }
            return Err(perr(format!(
                "interaction rows must be {}→{}, got {}→{}",
                schema.user_type, schema.item_type, row.src_type, row.dst_type
            )));
        }
        let timestamp = match row.extra.len() {
            0 => None,
            1 | 2 => {
                let raw = row.extra.last().expect("non-empty");
                if row.extra.len() == 2 {
                    row.extra[0]
                        .parse::<f64>()
                        .map_err(|_| perr(format!("invalid weight {:?}", row.extra[0])))?;
                }
                Some(
                    raw.parse::<i64>()
                        .map_err(|_| perr(format!("invalid timestamp {raw:?}")))?,
                )
            }
            n => return Err(perr(format!("too many columns ({})", n + 4))),
        };
        match with_ts {
            None => with_ts = Some(timestamp.is_some()),
            Some(w) if w != timestamp.is_some() => {
                return Err(perr("timestamps must be present on all rows or none".to_string()))
            }
            _ => {}
        }
        for (sym, id) in [(&schema.user_type, row.src_id), (&schema.item_type, row.dst_id)] {
            let t = schema.type_index(sym).expect("validated");
            if let Some(count) = schema.node_types[t].count {
                if id >= count {
                    return Err(Error::Range {
                        symbol: sym.clone(),
                        id,
                        count,
                    });
                }
            }
        }
        out.push(Interaction {
            user: row.src_id,
            item: row.dst_id,
            timestamp,
        });
    }
    Ok(out)
}

/// Leave-one-out train/test partition of implicit feedback.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InteractionSplit {
    pub n_users: usize,
    pub n_items: usize,
    /// Grouped by user (ascending), chronological within a user.
    pub train_pairs: Vec<(usize, usize)>,
    /// One pair per eligible user, ascending by user.
    pub test_pairs: Vec<(usize, usize)>,
    /// Sorted, deduplicated train items per user.
    pub user_train: Vec<Vec<usize>>,
    pub test_item: Vec<Option<usize>>,
    /// Users in `[0, n_users)` without any interaction.
    pub skipped_users: usize,
}

impl InteractionSplit {
    pub fn is_train_pair(&self, user: usize, item: usize) -> bool {
        self.user_train[user].binary_search(&item).is_ok()
    }

    /// Whether the user has interacted with the item in train or test.
    pub fn is_known(&self, user: usize, item: usize) -> bool {
        self.is_train_pair(user, item) || self.test_item[user] == Some(item)
    }

    /// Builds a split from explicit per-user train lists and test items.
    pub fn from_parts(
        n_users: usize,
        n_items: usize,
        train: Vec<Vec<usize>>,
        test_item: Vec<Option<usize>>,
    ) -> Result<Self> {
        if train.len() != n_users || test_item.len() != n_users {
            return Err(Error::InvalidArgument("per-user tables must have n_users rows".into()));
        }
        let mut train_pairs = Vec::new();
        let mut test_pairs = Vec::new();
        let mut user_train = Vec::with_capacity(n_users);
        let mut skipped = 0;
        for (u, items) in train.into_iter().enumerate() {
            if items.iter().any(|&i| i >= n_items) {
                return Err(Error::Range {
                    symbol: "item".into(),
                    id: *items.iter().max().unwrap(),
                    count: n_items,
                });
            }
            train_pairs.extend(items.iter().map(|&i| (u, i)));
            let mut sorted = items;
            sorted.sort_unstable();
            sorted.dedup();
            if let Some(t) = test_item[u] {
                if t >= n_items || sorted.binary_search(&t).is_ok() || sorted.is_empty() {
                    return Err(Error::InvalidArgument(format!(
                        "user {u}: test item {t} invalid or not held out"
                    )));
                }
                test_pairs.push((u, t));
            }
            if sorted.is_empty() && test_item[u].is_none() {
                skipped += 1;
            }
            user_train.push(sorted);
        }
        Ok(Self {
            n_users,
            n_items,
            train_pairs,
            test_pairs,
            user_train,
            test_item,
            skipped_users: skipped,
        })
    }

    /// Number of train interactions of a user.
    pub fn train_count(&self, user: usize) -> usize {
        self.user_train[user].len()
    }
}

/// Holds out each user's last distinct item. Order is by timestamp when the
/// interactions carry one (ties by file order), else file order. Repeated
/// interactions with the same item collapse to the most recent one.
pub fn leave_one_out_split(
    interactions: &[Interaction],
    n_users: usize,
    n_items: usize,
) -> Result<InteractionSplit> {
    let mut order: Vec<usize> = (0..interactions.len()).collect();
    order.sort_by_key(|&k| (interactions[k].timestamp.unwrap_or(0), k));

    let mut per_user: Vec<Vec<usize>> = vec![Vec::new(); n_users];
    for &k in &order {
        let Interaction { user, item, .. } = interactions[k];
        if user >= n_users {
            return Err(Error::Range {
                symbol: "user".into(),
                id: user,
                count: n_users,
            });
        }
        if item >= n_items {
            return Err(Error::Range {
                symbol: "item".into(),
                id: item,
                count: n_items,
            });
        }
        per_user[user].push(item);
    }

    let mut train = Vec::with_capacity(n_users);
    let mut test = Vec::with_capacity(n_users);
    let mut skipped = 0;
    for items in per_user {
        // keep the latest occurrence of each item
        let mut last_pos: HashMap<usize, usize> = HashMap::new();
        for (pos, &i) in items.iter().enumerate() {
            last_pos.insert(i, pos);
        }
        let mut distinct: Vec<usize> = items
            .iter()
            .enumerate()
            .filter(|(pos, i)| last_pos[i] == *pos)
            .map(|(_, &i)| i)
            .collect();
        match distinct.len() {
            0 => {
                skipped += 1;
                train.push(Vec::new());
                test.push(None);
            }
            1 => {
                train.push(distinct);
                test.push(None);
            }
            _ => {
                let held = distinct.pop();
                train.push(distinct);
                test.push(held);
            }
        }
    }
    if skipped > 0 {
        log::warn!("{skipped} users have no interactions and were skipped");
    }
    let mut split = InteractionSplit::from_parts(n_users, n_items, train, test)?;
    split.skipped_users = skipped;
    Ok(split)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BprTriple {
    pub user: usize,
    pub pos_item: usize,
    pub neg_item: usize,
}

/// Draws a uniform item outside `exclude` (sorted). Rejection sampling when the
/// excluded set is small, direct indexing into the complement otherwise.
pub(crate) fn sample_outside<R: Rng>(rng: &mut R, n_items: usize, exclude: &[usize]) -> Option<usize> {
    if exclude.len() >= n_items {
        return None;
    }
    if exclude.len() * 2 <= n_items {
        loop {
            let j = rng.gen_range(0..n_items);
            if exclude.binary_search(&j).is_err() {
                return Some(j);
            }
        }
    }
    // k-th element of the complement
    let mut k = rng.gen_range(0..n_items - exclude.len());
    let mut prev = 0;
    for &e in exclude {
        let gap = e - prev;
        if k < gap {
            return Some(prev + k);
        }
        k -= gap;
        prev = e + 1;
    }
    Some(prev + k)
}

/// One triple per train pair, with a negative drawn uniformly from the items
/// outside the user's train set.
pub fn sample_bpr_triples(split: &InteractionSplit, seed: u64) -> Result<Vec<BprTriple>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(split.train_pairs.len());
    for &(user, pos_item) in &split.train_pairs {
        let neg_item = sample_outside(&mut rng, split.n_items, &split.user_train[user])
            .ok_or_else(|| {
                Error::Sampling(format!("user {user} has interacted with every item"))
            })?;
        out.push(BprTriple {
            user,
            pos_item,
            neg_item,
        });
    }
    Ok(out)
}
