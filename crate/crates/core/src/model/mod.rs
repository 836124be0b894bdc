//! The recommender: per-aspect encoders, interest extraction and composition,
//! scoring, the BPR objective and its hand-derived gradients.
//!
//! Parameter names:
//!
//! | name                               | shape      |
//! |------------------------------------|------------|
//! | `aspect.<p>.proj_user.{W,b}`       | \|U\|×d, 1×d |
//! | `aspect.<p>.proj_item.{W,b}`       | \|I\|×d, 1×d |
//! | `aspect.<p>.gcn.<l>.{W,b}`         | d×d, 1×d   |
//! | `aspect.<p>.mlp.<l>.{W,b}`         | d×d, 1×d   |
//! | `aspect.<p>.V`                     | d×K        |
//! | `rec.W`                            | 1×K        |
//! | `mf.user`, `mf.item`               | \|U\|×d, \|I\|×d |
//!
//! With cross-aspect sharing the layer weights are named `gcn.<l>.{W,b}`.

pub mod compose;
pub mod encoder;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::hin::BprTriple;
use crate::metapath::Aspect;
use crate::nnmath::dense::{dot, sigmoid, softplus};
use crate::nnmath::{derive_seed, xavier_init, xavier_with_fans, DenseMatrix, ParamStore};

pub use compose::{extract_interest, fm_terms, inter_composition, intra_composition};
pub use encoder::{encode, encode_backward, EncoderGrads, EncoderParams, EncoderTrace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// GCN encoders with intra- and inter-aspect interest composition.
    HicRec,
    /// GCN encoders, linear inner-product score only.
    HicRecLinear,
    /// MLP encoders (no graph propagation) with interest composition.
    HicRecMlp,
    /// Free user/item embeddings scored by inner product.
    MfBpr,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::HicRec,
        ModelKind::HicRecLinear,
        ModelKind::HicRecMlp,
        ModelKind::MfBpr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::HicRec => "hicrec",
            ModelKind::HicRecLinear => "hicrec-linear",
            ModelKind::HicRecMlp => "hicrec-mlp",
            ModelKind::MfBpr => "mf-bpr",
        }
    }

    pub fn composes(self) -> bool {
        matches!(self, ModelKind::HicRec | ModelKind::HicRecMlp)
    }

    pub fn uses_aspects(self) -> bool {
        !matches!(self, ModelKind::MfBpr)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model kind {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    /// Embedding dimension `d`.
    pub dim: usize,
    /// Factor dimension `K`.
    pub factors: usize,
    /// Number of propagation layers `L`.
    pub layers: usize,
    pub share_across_aspects: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            factors: 32,
            layers: 2,
            share_across_aspects: false,
        }
    }
}

/// Per-aspect final embeddings with the traces needed for backward.
#[derive(Clone, Debug)]
pub struct AspectEmbeddings {
    pub users: DenseMatrix,
    pub items: DenseMatrix,
    user_trace: Option<EncoderTrace>,
    item_trace: Option<EncoderTrace>,
}

impl AspectEmbeddings {
    pub fn user(&self, u: usize) -> &[f64] {
        self.users.row(u)
    }

    pub fn item(&self, i: usize) -> &[f64] {
        self.items.row(i)
    }

    pub fn has_trace(&self) -> bool {
        self.user_trace.is_some()
    }
}

#[derive(Clone, Debug)]
pub struct Embeddings {
    pub aspects: Vec<AspectEmbeddings>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreBreakdown {
    /// `Σ_p ⟨e^u_p, e^i_p⟩`
    pub linear: f64,
    pub intra: Vec<Vec<f64>>,
    pub inter: Vec<f64>,
    pub ic: Vec<f64>,
    pub total: f64,
}

/// `-ln σ(pos - neg)` in the stable softplus form.
pub fn bpr_loss(pos: f64, neg: f64) -> f64 {
    softplus(neg - pos)
}

#[derive(Clone, Debug)]
pub struct Model {
    kind: ModelKind,
    cfg: ModelConfig,
    aspects: Vec<Arc<Aspect>>,
    n_users: usize,
    n_items: usize,
}

enum Side {
    User,
    Item,
}

impl Model {
    pub fn new(
        kind: ModelKind,
        cfg: ModelConfig,
        aspects: Vec<Arc<Aspect>>,
        n_users: usize,
        n_items: usize,
    ) -> Result<Self> {
        if cfg.dim == 0 || cfg.factors == 0 {
            return Err(Error::InvalidArgument("d and K must be ≥ 1".into()));
        }
        if kind.uses_aspects() {
            if aspects.is_empty() {
                return Err(Error::InvalidArgument(format!("{kind} needs at least one aspect")));
            }
            if kind != ModelKind::HicRecMlp && cfg.layers == 0 {
                return Err(Error::InvalidArgument("GCN depth must be ≥ 1".into()));
            }
            for a in &aspects {
                if a.n_users() != n_users || a.n_items() != n_items {
                    return Err(Error::shape(
                        "Model::new",
                        format!(
                            "aspect {} covers {}x{} nodes, model has {n_users}x{n_items}",
                            a.name,
                            a.n_users(),
                            a.n_items()
                        ),
                    ));
                }
                if a.user_feat.cols() != n_users || a.item_feat.cols() != n_items {
                    return Err(Error::shape("Model::new", format!("aspect {} features", a.name)));
                }
            }
            for (k, a) in aspects.iter().enumerate() {
                if aspects[..k].iter().any(|b| b.name == a.name) {
                    return Err(Error::InvalidArgument(format!("duplicate aspect {}", a.name)));
                }
            }
        }
        Ok(Self {
            kind,
            cfg,
            aspects,
            n_users,
            n_items,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn aspects(&self) -> &[Arc<Aspect>] {
        &self.aspects
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    fn layer_prefix(&self, aspect: &str, layer: usize) -> String {
        let block = if self.kind == ModelKind::HicRecMlp { "mlp" } else { "gcn" };
        if self.cfg.share_across_aspects {
            format!("{block}.{layer}")
        } else {
            format!("aspect.{aspect}.{block}.{layer}")
        }
    }

    fn proj_prefix(aspect: &str, side: &Side) -> String {
        match side {
            Side::User => format!("aspect.{aspect}.proj_user"),
            Side::Item => format!("aspect.{aspect}.proj_item"),
        }
    }

    fn factor_name(aspect: &str) -> String {
        format!("aspect.{aspect}.V")
    }

    /// Xavier-initialized parameters. Tensor `k` (in creation order) draws from
    /// its own stream derived from `seed`.
    pub fn init_params(&self, seed: u64) -> Result<ParamStore> {
        let d = self.cfg.dim;
        let mut store = ParamStore::new();
        let mut stream = 0u64;
        let mut next_seed = || {
            stream += 1;
            derive_seed(seed, stream)
        };
        if self.kind == ModelKind::MfBpr {
            store.insert("mf.user", xavier_init(self.n_users, d, next_seed()))?;
            store.insert("mf.item", xavier_init(self.n_items, d, next_seed()))?;
            return Ok(store);
        }
        for a in &self.aspects {
            for side in [Side::User, Side::Item] {
                let n_in = match side {
                    Side::User => self.n_users,
                    Side::Item => self.n_items,
                };
                let p = Self::proj_prefix(&a.name, &side);
                store.insert(format!("{p}.W"), xavier_init(n_in, d, next_seed()))?;
                store.insert(format!("{p}.b"), xavier_with_fans(1, d, d, d, next_seed()))?;
            }
            for l in 0..self.cfg.layers {
                let p = self.layer_prefix(&a.name, l);
                let (w_seed, b_seed) = (next_seed(), next_seed());
                if store.contains(&format!("{p}.W")) {
                    continue;
                }
                store.insert(format!("{p}.W"), xavier_init(d, d, w_seed))?;
                store.insert(format!("{p}.b"), xavier_with_fans(1, d, d, d, b_seed))?;
            }
            if self.kind.composes() {
                store.insert(Self::factor_name(&a.name), xavier_init(d, self.cfg.factors, next_seed()))?;
            }
        }
        if self.kind.composes() {
            store.insert("rec.W", xavier_with_fans(1, self.cfg.factors, self.cfg.factors, 1, next_seed()))?;
        }
        Ok(store)
    }

    fn encoder_params<'a>(&self, store: &'a ParamStore, aspect: &str, side: &Side) -> EncoderParams<'a> {
        let p = Self::proj_prefix(aspect, side);
        EncoderParams {
            proj_w: store.value(&format!("{p}.W")),
            proj_b: store.value(&format!("{p}.b")),
            layers: (0..self.cfg.layers)
                .map(|l| {
                    let p = self.layer_prefix(aspect, l);
                    (store.value(&format!("{p}.W")), store.value(&format!("{p}.b")))
                })
                .collect(),
        }
    }

    /// Encodes one aspect: projection + `L` layers on the user graph and on
    /// the item graph, with the same layer weights on both sides.
    pub fn encode_aspect(&self, aspect: &Aspect, store: &ParamStore) -> Result<AspectEmbeddings> {
        let gcn = self.kind != ModelKind::HicRecMlp;
        let up = self.encoder_params(store, &aspect.name, &Side::User);
        let ip = self.encoder_params(store, &aspect.name, &Side::Item);
        let ut = encode(&aspect.user_feat, gcn.then_some(&aspect.user_adj), &up)?;
        let it = encode(&aspect.item_feat, gcn.then_some(&aspect.item_adj), &ip)?;
        Ok(AspectEmbeddings {
            users: ut.output.clone(),
            items: it.output.clone(),
            user_trace: Some(ut),
            item_trace: Some(it),
        })
    }

    /// Full forward pass over every user and item.
    pub fn embed(&self, store: &ParamStore) -> Result<Embeddings> {
        if self.kind == ModelKind::MfBpr {
            return Ok(Embeddings {
                aspects: vec![AspectEmbeddings {
                    users: store.value("mf.user").clone(),
                    items: store.value("mf.item").clone(),
                    user_trace: None,
                    item_trace: None,
                }],
            });
        }
        let aspects = self
            .aspects
            .iter()
            .map(|a| self.encode_aspect(a, store))
            .collect::<Result<Vec<_>>>()?;
        Ok(Embeddings { aspects })
    }

    fn factor_refs<'a>(&self, store: &'a ParamStore) -> Vec<&'a DenseMatrix> {
        self.aspects
            .iter()
            .map(|a| store.value(&Self::factor_name(&a.name)))
            .collect()
    }

    /// Score with every intermediate exposed.
    pub fn predict(&self, user: usize, item: usize, emb: &Embeddings, store: &ParamStore) -> ScoreBreakdown {
        let linear: f64 = emb
            .aspects
            .iter()
            .map(|a| dot(a.user(user), a.item(item)))
            .sum();
        if !self.kind.composes() {
            return ScoreBreakdown {
                linear,
                intra: Vec::new(),
                inter: Vec::new(),
                ic: Vec::new(),
                total: linear,
            };
        }
        let interests: Vec<Vec<f64>> = emb
            .aspects
            .iter()
            .map(|a| extract_interest(a.user(user), a.item(item)))
            .collect();
        let factors = self.factor_refs(store);
        let intra: Vec<Vec<f64>> = interests
            .iter()
            .zip(&factors)
            .map(|(e, v)| intra_composition(e, v))
            .collect();
        let inter = inter_composition(&interests, &factors);
        let mut ic = inter.clone();
        for part in &intra {
            for (c, v) in ic.iter_mut().zip(part) {
                *c += v;
            }
        }
        let w_rec = store.value("rec.W").as_slice();
        let total = linear + dot(w_rec, &ic);
        ScoreBreakdown {
            linear,
            intra,
            inter,
            ic,
            total,
        }
    }

    /// The predicted score `r̂(u, i)` without allocating a breakdown.
    pub fn score(&self, user: usize, item: usize, emb: &Embeddings, store: &ParamStore) -> f64 {
        let mut linear = 0.0;
        for a in &emb.aspects {
            linear += dot(a.user(user), a.item(item));
        }
        if !self.kind.composes() {
            return linear;
        }
        let k = self.cfg.factors;
        let mut total = vec![0.0; k];
        let mut q = vec![0.0; k];
        let mut s = vec![0.0; k];
        let mut e = vec![0.0; self.cfg.dim];
        for (a, aspect) in emb.aspects.iter().zip(&self.aspects) {
            for ((em, u), i) in e.iter_mut().zip(a.user(user)).zip(a.item(item)) {
                *em = u * i;
            }
            s.fill(0.0);
            fm_terms(&e, store.value(&Self::factor_name(&aspect.name)), &mut s, &mut q);
            for (t, sp) in total.iter_mut().zip(&s) {
                *t += sp;
            }
        }
        let w_rec = store.value("rec.W").as_slice();
        let mut ic_dot = 0.0;
        for kk in 0..k {
            ic_dot += w_rec[kk] * 0.5 * (total[kk] * total[kk] - q[kk]);
        }
        linear + ic_dot
    }

    /// Mean BPR loss over `triples` plus `λ Σ θ²`.
    pub fn total_loss(&self, triples: &[BprTriple], store: &ParamStore, lambda: f64) -> Result<f64> {
        if triples.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let emb = self.embed(store)?;
        Ok(self.batch_bpr(triples, &emb, store) + lambda * store.squared_norm())
    }

    fn batch_bpr(&self, triples: &[BprTriple], emb: &Embeddings, store: &ParamStore) -> f64 {
        let sum: f64 = triples
            .iter()
            .map(|t| {
                bpr_loss(
                    self.score(t.user, t.pos_item, emb, store),
                    self.score(t.user, t.neg_item, emb, store),
                )
            })
            .sum();
        sum / triples.len() as f64
    }

    /// Forward + backward over a batch. Overwrites every gradient buffer in
    /// `store` with the gradient of [`Model::total_loss`] and returns the loss.
    pub fn loss_and_grad(&self, triples: &[BprTriple], store: &mut ParamStore, lambda: f64) -> Result<f64> {
        if triples.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let emb = self.embed(store)?;
        let n_aspects = emb.aspects.len();
        let d = self.cfg.dim;
        let k = self.cfg.factors;
        let mut d_users: Vec<DenseMatrix> = (0..n_aspects).map(|_| DenseMatrix::zeros(self.n_users, d)).collect();
        let mut d_items: Vec<DenseMatrix> = (0..n_aspects).map(|_| DenseMatrix::zeros(self.n_items, d)).collect();
        let mut d_factors: Vec<DenseMatrix> = if self.kind.composes() {
            (0..n_aspects).map(|_| DenseMatrix::zeros(d, k)).collect()
        } else {
            Vec::new()
        };
        let mut d_rec = vec![0.0; k];
        let scale = 1.0 / triples.len() as f64;
        let mut loss = 0.0;
        {
            let mut acc = ScoreGradAccumulator {
                model: self,
                emb: &emb,
                store,
                d_users: &mut d_users,
                d_items: &mut d_items,
                d_factors: &mut d_factors,
                d_rec: &mut d_rec,
            };
            for t in triples {
                let pos = self.score(t.user, t.pos_item, &emb, store);
                let neg = self.score(t.user, t.neg_item, &emb, store);
                let margin = pos - neg;
                loss += softplus(-margin);
                // d softplus(-m)/dm = -σ(-m)
                let g = -sigmoid(-margin) * scale;
                acc.add(t.user, t.pos_item, g);
                acc.add(t.user, t.neg_item, -g);
            }
        }
        loss *= scale;

        store.zero_grads();
        if self.kind == ModelKind::MfBpr {
            store.grad_mut("mf.user").add_scaled(&d_users[0], 1.0)?;
            store.grad_mut("mf.item").add_scaled(&d_items[0], 1.0)?;
        } else {
            let gcn = self.kind != ModelKind::HicRecMlp;
            let mut updates: Vec<(String, DenseMatrix)> = Vec::new();
            for (p, aspect) in self.aspects.iter().enumerate() {
                let traces = &emb.aspects[p];
                for (side, grad, feat, adj, trace) in [
                    (Side::User, &d_users[p], &aspect.user_feat, &aspect.user_adj, &traces.user_trace),
                    (Side::Item, &d_items[p], &aspect.item_feat, &aspect.item_adj, &traces.item_trace),
                ] {
                    let trace = trace.as_ref().ok_or_else(|| {
                        Error::InvalidArgument("backward needs forward traces".into())
                    })?;
                    let params = self.encoder_params(store, &aspect.name, &side);
                    let g = encode_backward(feat, gcn.then_some(adj), &params, trace, grad)?;
                    let pp = Self::proj_prefix(&aspect.name, &side);
                    updates.push((format!("{pp}.W"), g.proj_w));
                    updates.push((format!("{pp}.b"), g.proj_b));
                    for (l, (gw, gb)) in g.layers.into_iter().enumerate() {
                        let lp = self.layer_prefix(&aspect.name, l);
                        updates.push((format!("{lp}.W"), gw));
                        updates.push((format!("{lp}.b"), gb));
                    }
                }
                if self.kind.composes() {
                    updates.push((Self::factor_name(&aspect.name), d_factors[p].clone()));
                }
            }
            for (name, g) in updates {
                store.grad_mut(&name).add_scaled(&g, 1.0)?;
            }
            if self.kind.composes() {
                let g = DenseMatrix::from_vec(1, k, d_rec)?;
                store.grad_mut("rec.W").add_scaled(&g, 1.0)?;
            }
        }
        store.add_l2_grad(lambda);
        Ok(loss + lambda * store.squared_norm())
    }
}

/// Accumulates `c · ∂r̂(u,i)/∂·` into embedding, factor and output-weight
/// gradients.
struct ScoreGradAccumulator<'a> {
    model: &'a Model,
    emb: &'a Embeddings,
    store: &'a ParamStore,
    d_users: &'a mut [DenseMatrix],
    d_items: &'a mut [DenseMatrix],
    d_factors: &'a mut [DenseMatrix],
    d_rec: &'a mut [f64],
}

impl ScoreGradAccumulator<'_> {
    fn add(&mut self, user: usize, item: usize, c: f64) {
        let model = self.model;
        let d = model.cfg.dim;
        let composes = model.kind.composes();
        let interests: Vec<Vec<f64>> = self
            .emb
            .aspects
            .iter()
            .map(|a| extract_interest(a.user(user), a.item(item)))
            .collect();

        // ∂r̂/∂s_p = w ⊙ S and ∂r̂/∂q_p = -w/2, with S = Σ_p s_p.
        let mut w_s = Vec::new();
        if composes {
            let k = model.cfg.factors;
            let w_rec = self.store.value("rec.W").as_slice();
            let factors = model.factor_refs(self.store);
            let mut total = vec![0.0; k];
            let mut q = vec![0.0; k];
            for (e, v) in interests.iter().zip(&factors) {
                let mut s = vec![0.0; k];
                fm_terms(e, v, &mut s, &mut q);
                for (t, sp) in total.iter_mut().zip(&s) {
                    *t += sp;
                }
            }
            for kk in 0..k {
                self.d_rec[kk] += c * 0.5 * (total[kk] * total[kk] - q[kk]);
            }
            w_s = w_rec.iter().zip(&total).map(|(w, s)| w * s).collect();
        }

        for (p, a) in self.emb.aspects.iter().enumerate() {
            let e = &interests[p];
            let mut d_e = vec![1.0; d];
            if composes {
                let w_rec = self.store.value("rec.W").as_slice();
                let v = self.store.value(&Model::factor_name(&model.aspects[p].name));
                let dv = &mut self.d_factors[p];
                for m in 0..d {
                    let em = e[m];
                    let v_row = v.row(m);
                    let mut acc = 0.0;
                    for kk in 0..v_row.len() {
                        let vmk = v_row[kk];
                        acc += vmk * w_s[kk] - w_rec[kk] * vmk * vmk * em;
                        let upd = c * (em * w_s[kk] - w_rec[kk] * vmk * em * em);
                        dv.as_mut_slice()[m * v_row.len() + kk] += upd;
                    }
                    d_e[m] += acc;
                }
            }
            let eu = a.user(user);
            let ei = a.item(item);
            let du = self.d_users[p].row_mut(user);
            for m in 0..d {
                du[m] += c * d_e[m] * ei[m];
            }
            let di = self.d_items[p].row_mut(item);
            for m in 0..d {
                di[m] += c * d_e[m] * eu[m];
            }
        }
    }
}
