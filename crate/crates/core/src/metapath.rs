//! Meta-paths, commuting matrices and the per-aspect user/item graphs derived
//! from them.

use std::fmt;

use crate::error::{Error, Result};
use crate::hin::{HinGraph, Hop};
use crate::nnmath::{spgemm, CsrMatrix, DenseMatrix};

/// A validated sequence of node types (as indices into the graph's type list)
/// together with the relation used for each hop.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetaPath {
    types: Vec<usize>,
    symbols: Vec<String>,
    hops: Vec<Hop>,
}

impl MetaPath {
    pub fn types(&self) -> &[usize] {
        &self.types
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn hops(&self) -> &[Hop] {
        &self.hops
    }

    pub fn first(&self) -> usize {
        self.types[0]
    }

    pub fn last(&self) -> usize {
        *self.types.last().expect("length ≥ 2")
    }

    /// Reads the same forwards and backwards.
    pub fn is_symmetric(&self) -> bool {
        self.types.iter().eq(self.types.iter().rev())
    }
}

impl fmt::Display for MetaPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.symbols.iter().all(|s| s.chars().count() == 1) {
            write!(f, "{}", self.symbols.concat())
        } else {
            write!(f, "{}", self.symbols.join("."))
        }
    }
}

/// Splits meta-path text into type tokens. Dot-separated text is split on
/// dots; otherwise tokens are matched greedily, longest declared symbol first,
/// so `UICaIU` resolves against `{U, I, Ca, Ci}`.
fn tokenize(text: &str, graph: &HinGraph) -> Result<Vec<String>> {
    let text = text.trim();
    if text.contains('.') {
        return Ok(text.split('.').map(|t| t.trim().to_string()).collect());
    }
    let mut symbols: Vec<&str> = graph.node_types.iter().map(|t| t.symbol.as_str()).collect();
    symbols.sort_by_key(|s| std::cmp::Reverse(s.len()));
    let mut out = Vec::new();
    let mut rest = text;
    while !rest.is_empty() {
        let tok = symbols
            .iter()
            .find(|s| rest.starts_with(**s))
            .ok_or_else(|| Error::MetaPath(format!("unknown type token at {rest:?} in {text:?}")))?;
        out.push(tok.to_string());
        rest = &rest[tok.len()..];
    }
    Ok(out)
}

pub fn parse_metapath(text: &str, graph: &HinGraph) -> Result<MetaPath> {
    let symbols = tokenize(text, graph)?;
    if symbols.len() < 2 {
        return Err(Error::MetaPath(format!("{text:?}: a meta-path needs at least two types")));
    }
    let mut types = Vec::with_capacity(symbols.len());
    for s in &symbols {
        types.push(
            graph
                .type_index(s)
                .ok_or_else(|| Error::MetaPath(format!("unknown type token {s:?} in {text:?}")))?,
        );
    }
    let mut hops = Vec::with_capacity(types.len() - 1);
    for w in types.windows(2) {
        hops.push(graph.hop(w[0], w[1]).ok_or_else(|| {
            Error::MetaPath(format!(
                "no relation between {} and {} in {text:?}",
                graph.symbol(w[0]),
                graph.symbol(w[1])
            ))
        })?);
    }
    Ok(MetaPath {
        types,
        symbols,
        hops,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CommutingMatrix {
    pub path: MetaPath,
    pub matrix: CsrMatrix,
}

/// Left-to-right chained product of the hop adjacencies along `path`.
pub fn commuting_matrix(path: &MetaPath, graph: &HinGraph) -> Result<CommutingMatrix> {
    let mut hops = path.hops.iter();
    let first = hops.next().expect("length ≥ 2");
    let mut acc = graph.hop_matrix(*first);
    for hop in hops {
        let next = graph.hop_matrix(*hop);
        acc = spgemm(&acc, &next).map_err(|e| {
            Error::shape("commuting_matrix", format!("corrupt schema along {path}: {e}"))
        })?;
    }
    let want = (graph.count(path.first()), graph.count(path.last()));
    if acc.shape() != want {
        return Err(Error::shape(
            "commuting_matrix",
            format!("{path}: got {:?}, expected {want:?}", acc.shape()),
        ));
    }
    Ok(CommutingMatrix {
        path: path.clone(),
        matrix: acc,
    })
}

/// `s(i,j) = 2·C_ij / (C_ii + C_jj)`, zero when the denominator vanishes.
pub fn pathsim(c: &CsrMatrix) -> Result<CsrMatrix> {
    if c.rows() != c.cols() {
        return Err(Error::shape(
            "pathsim",
            format!("commuting matrix must be square, got {:?}", c.shape()),
        ));
    }
    let diag = c.diagonal();
    Ok(c.map_values(|i, j, v| {
        let den = diag[i] + diag[j];
        if den == 0.0 {
            0.0
        } else {
            2.0 * v / den
        }
    }))
}

/// How commuting matrices become GCN propagation matrices.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Normalization {
    /// `D^{-1/2} (C + I) D^{-1/2}` with `D` the row sums of `C + I`.
    #[default]
    Symmetric,
    /// The raw commuting matrix.
    None,
}

pub fn normalize_adjacency(c: &CsrMatrix) -> Result<CsrMatrix> {
    if c.rows() != c.cols() {
        return Err(Error::shape(
            "normalize_adjacency",
            format!("adjacency must be square, got {:?}", c.shape()),
        ));
    }
    let n = c.rows();
    let mut trip: Vec<(usize, usize, f64)> = Vec::with_capacity(c.nnz() + n);
    for r in 0..n {
        let (cols, vals) = c.row(r);
        trip.extend(cols.iter().zip(vals).map(|(&col, &v)| (r, col, v)));
        trip.push((r, r, 1.0));
    }
    let a = CsrMatrix::from_triplets(n, n, trip)?;
    let inv_sqrt: Vec<f64> = a
        .row_sums()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    Ok(a.map_values(|i, j, v| v * inv_sqrt[i] * inv_sqrt[j]))
}

/// Node features derived from a PathSim matrix. Small graphs are stored dense.
#[derive(Clone, Debug, PartialEq)]
pub enum FeatureMatrix {
    Dense(DenseMatrix),
    Sparse(CsrMatrix),
}

/// Node counts at or below this are materialized dense.
pub const DENSE_FEATURE_LIMIT: usize = 50_000;

impl FeatureMatrix {
    pub fn from_pathsim(s: CsrMatrix, dense_limit: usize) -> Self {
        if s.rows() <= dense_limit {
            FeatureMatrix::Dense(s.to_dense())
        } else {
            FeatureMatrix::Sparse(s)
        }
    }

    pub fn rows(&self) -> usize {
        match self {
            FeatureMatrix::Dense(d) => d.rows(),
            FeatureMatrix::Sparse(s) => s.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            FeatureMatrix::Dense(d) => d.cols(),
            FeatureMatrix::Sparse(s) => s.cols(),
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        match self {
            FeatureMatrix::Dense(d) => d.get(r, c),
            FeatureMatrix::Sparse(s) => s.get(r, c),
        }
    }

    pub fn to_sparse(&self) -> CsrMatrix {
        match self {
            FeatureMatrix::Dense(d) => CsrMatrix::from_dense(d),
            FeatureMatrix::Sparse(s) => s.clone(),
        }
    }
}

/// One user meta-path and one item meta-path about the same topic, with the
/// graphs and features derived from them.
#[derive(Clone, Debug, PartialEq)]
pub struct Aspect {
    pub name: String,
    pub user_path: MetaPath,
    pub item_path: MetaPath,
    pub user_commuting: CsrMatrix,
    pub item_commuting: CsrMatrix,
    pub user_adj: CsrMatrix,
    pub item_adj: CsrMatrix,
    pub user_feat: FeatureMatrix,
    pub item_feat: FeatureMatrix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AspectOptions {
    pub normalization: Normalization,
    pub dense_feature_limit: usize,
}

impl Default for AspectOptions {
    fn default() -> Self {
        Self {
            normalization: Normalization::Symmetric,
            dense_feature_limit: DENSE_FEATURE_LIMIT,
        }
    }
}

impl Aspect {
    /// Derives adjacencies and features from precomputed commuting matrices.
    pub fn from_commuting(
        name: &str,
        user: CommutingMatrix,
        item: CommutingMatrix,
        opts: &AspectOptions,
    ) -> Result<Aspect> {
        let adj = |c: &CsrMatrix| match opts.normalization {
            Normalization::Symmetric => normalize_adjacency(c),
            Normalization::None => Ok(c.clone()),
        };
        let user_adj = adj(&user.matrix)?;
        let item_adj = adj(&item.matrix)?;
        let user_feat = FeatureMatrix::from_pathsim(pathsim(&user.matrix)?, opts.dense_feature_limit);
        let item_feat = FeatureMatrix::from_pathsim(pathsim(&item.matrix)?, opts.dense_feature_limit);
        Ok(Aspect {
            name: name.to_string(),
            user_path: user.path,
            item_path: item.path,
            user_commuting: user.matrix,
            item_commuting: item.matrix,
            user_adj,
            item_adj,
            user_feat,
            item_feat,
        })
    }

    pub fn n_users(&self) -> usize {
        self.user_adj.rows()
    }

    pub fn n_items(&self) -> usize {
        self.item_adj.rows()
    }
}

fn check_endpoints(path: &MetaPath, t: usize, role: &str, graph: &HinGraph) -> Result<()> {
    if path.first() != t || path.last() != t {
        return Err(Error::MetaPath(format!(
            "{role} meta-path {path} must start and end at {}",
            graph.symbol(t)
        )));
    }
    Ok(())
}

/// Parses an aspect's two meta-paths and checks their endpoints.
pub fn parse_aspect_paths(user: &str, item: &str, graph: &HinGraph) -> Result<(MetaPath, MetaPath)> {
    let up = parse_metapath(user, graph)?;
    check_endpoints(&up, graph.user_type, "user", graph)?;
    let ip = parse_metapath(item, graph)?;
    check_endpoints(&ip, graph.item_type, "item", graph)?;
    Ok((up, ip))
}

pub fn build_aspect(
    name: &str,
    user_path: &MetaPath,
    item_path: &MetaPath,
    graph: &HinGraph,
    opts: &AspectOptions,
) -> Result<Aspect> {
    check_endpoints(user_path, graph.user_type, "user", graph)?;
    check_endpoints(item_path, graph.item_type, "item", graph)?;
    let uc = commuting_matrix(user_path, graph)?;
    let ic = commuting_matrix(item_path, graph)?;
    Aspect::from_commuting(name, uc, ic, opts)
}
