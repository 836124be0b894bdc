//! On-disk cache of prepared datasets.
//!
//! `cache/base-<key>.bin` holds the graph and the split; one
//! `cache/aspect-<name>-<key>.bin` per aspect holds its two commuting
//! matrices. Keys are SHA-256 digests of the inputs (file bytes, schema,
//! aspect paths). Each file is `magic | sha256(payload) | payload`; a file
//! whose digest does not match is rebuilt.
//!
//! Adjacencies and PathSim features are recomputed from the cached commuting
//! matrices on load.

use std::fs;
use std::io::{self, Cursor, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use sha2::{Digest, Sha256};

use hicrec_core::binio::{read_f64s, read_str, read_u64, read_usizes, write_f64s, write_str, write_u64, write_usizes};
use hicrec_core::dataset::{assemble, AspectDef, Prepared};
use hicrec_core::hin::{load_interactions, HinBuilder, HinGraph, InteractionSplit, NodeType, Relation, Schema};
use hicrec_core::metapath::{commuting_matrix, parse_aspect_paths, Aspect, CommutingMatrix};
use hicrec_core::nnmath::CsrMatrix;

use crate::config::RunConfig;
use crate::error::{CliError, Context};

const BASE_MAGIC: &[u8; 8] = b"HICBASE1";
const ASPECT_MAGIC: &[u8; 8] = b"HICASPT1";
const MAX_STR: usize = 1 << 16;

#[derive(Debug)]
pub struct PrepareOutcome {
    pub prepared: Prepared,
    pub base_hit: bool,
    /// One flag per aspect, in config order.
    pub aspect_hits: Vec<bool>,
}

pub fn cache_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join("cache")
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn hash_field(h: &mut Sha256, bytes: &[u8]) {
    h.update((bytes.len() as u64).to_le_bytes());
    h.update(bytes);
}

fn schema_fingerprint(s: &Schema) -> String {
    let mut out = format!("user={};item={};", s.user_type, s.item_type);
    for t in &s.node_types {
        out.push_str(&format!("type={}:{:?};", t.symbol, t.count));
    }
    for (a, b) in &s.relations {
        out.push_str(&format!("rel={a}-{b};"));
    }
    out
}

fn read_input(key: &str, path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Data(format!("{key}: cannot read {}: {e}", path.display())))
}

fn base_key(cfg: &RunConfig, schema: &Schema) -> Result<String, CliError> {
    let mut h = Sha256::new();
    hash_field(&mut h, b"base-v1");
    match &cfg.data.edges {
        Some(p) => hash_field(&mut h, &read_input("data.edges", p)?),
        None => hash_field(&mut h, b""),
    }
    let inter = cfg
        .data
        .interactions
        .as_ref()
        .ok_or_else(|| CliError::Config("data.interactions: required".into()))?;
    hash_field(&mut h, &read_input("data.interactions", inter)?);
    hash_field(&mut h, schema_fingerprint(schema).as_bytes());
    Ok(hex(&h.finalize()[..12]))
}

fn aspect_key(base: &str, def: &AspectDef) -> String {
    let mut h = Sha256::new();
    for part in [base, &def.name, &def.user_path, &def.item_path] {
        hash_field(&mut h, part.as_bytes());
    }
    hex(&h.finalize()[..12])
}

fn invalid(msg: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.to_string())
}

fn write_csr<W: Write>(w: &mut W, m: &CsrMatrix) -> io::Result<()> {
    write_u64(w, m.rows() as u64)?;
    write_u64(w, m.cols() as u64)?;
    write_usizes(w, m.indptr())?;
    write_usizes(w, m.indices())?;
    write_u64(w, m.values().len() as u64)?;
    write_f64s(w, m.values())
}

fn read_csr<R: Read>(r: &mut R) -> io::Result<CsrMatrix> {
    let rows = read_u64(r)? as usize;
    let cols = read_u64(r)? as usize;
    let indptr = read_usizes(r)?;
    let indices = read_usizes(r)?;
    let n = read_u64(r)? as usize;
    let values = read_f64s(r, n)?;
    CsrMatrix::from_raw(rows, cols, indptr, indices, values).map_err(|e| invalid(&e.to_string()))
}

fn write_base<W: Write>(w: &mut W, graph: &HinGraph, split: &InteractionSplit) -> io::Result<()> {
    write_u64(w, graph.node_types.len() as u64)?;
    for t in &graph.node_types {
        write_str(w, &t.symbol)?;
        write_u64(w, t.count as u64)?;
    }
    write_u64(w, graph.relations.len() as u64)?;
    for r in &graph.relations {
        write_u64(w, r.src as u64)?;
        write_u64(w, r.dst as u64)?;
        write_csr(w, &r.adjacency)?;
    }
    write_u64(w, graph.user_type as u64)?;
    write_u64(w, graph.item_type as u64)?;

    write_u64(w, split.n_users as u64)?;
    write_u64(w, split.n_items as u64)?;
    let mut chrono: Vec<Vec<usize>> = vec![Vec::new(); split.n_users];
    for &(u, i) in &split.train_pairs {
        chrono[u].push(i);
    }
    for (items, test) in chrono.iter().zip(&split.test_item) {
        write_usizes(w, items)?;
        write_u64(w, test.map_or(u64::MAX, |t| t as u64))?;
    }
    write_u64(w, split.skipped_users as u64)
}

fn read_base<R: Read>(r: &mut R) -> io::Result<(HinGraph, InteractionSplit)> {
    let n_types = read_u64(r)? as usize;
    let mut node_types = Vec::new();
    for _ in 0..n_types {
        let symbol = read_str(r, MAX_STR)?;
        let count = read_u64(r)? as usize;
        node_types.push(NodeType { symbol, count });
    }
    let n_rel = read_u64(r)? as usize;
    let mut relations = Vec::new();
    for _ in 0..n_rel {
        let src = read_u64(r)? as usize;
        let dst = read_u64(r)? as usize;
        relations.push(Relation {
            src,
            dst,
            adjacency: read_csr(r)?,
        });
    }
    let graph = HinGraph {
        node_types,
        relations,
        user_type: read_u64(r)? as usize,
        item_type: read_u64(r)? as usize,
    };
    graph.validate().map_err(|e| invalid(&e.to_string()))?;

    let n_users = read_u64(r)? as usize;
    let n_items = read_u64(r)? as usize;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for _ in 0..n_users {
        train.push(read_usizes(r)?);
        let t = read_u64(r)?;
        test.push((t != u64::MAX).then_some(t as usize));
    }
    let mut split =
        InteractionSplit::from_parts(n_users, n_items, train, test).map_err(|e| invalid(&e.to_string()))?;
    split.skipped_users = read_u64(r)? as usize;
    Ok((graph, split))
}

fn write_aspect<W: Write>(w: &mut W, def: &AspectDef, user: &CsrMatrix, item: &CsrMatrix) -> io::Result<()> {
    write_str(w, &def.name)?;
    write_str(w, &def.user_path)?;
    write_str(w, &def.item_path)?;
    write_csr(w, user)?;
    write_csr(w, item)
}

fn read_aspect<R: Read>(r: &mut R, def: &AspectDef) -> io::Result<(CsrMatrix, CsrMatrix)> {
    for want in [&def.name, &def.user_path, &def.item_path] {
        if &read_str(r, MAX_STR)? != want {
            return Err(invalid("aspect definition mismatch"));
        }
    }
    Ok((read_csr(r)?, read_csr(r)?))
}

fn store(path: &Path, magic: &[u8; 8], payload: &[u8]) -> Result<(), CliError> {
    let mut bytes = Vec::with_capacity(payload.len() + 40);
    bytes.extend_from_slice(magic);
    bytes.extend_from_slice(&Sha256::digest(payload));
    bytes.extend_from_slice(payload);
    fs::write(path, bytes).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

enum Lookup {
    Missing,
    Corrupt(String),
    Hit(Vec<u8>),
}

fn lookup(path: &Path, magic: &[u8; 8]) -> Lookup {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Lookup::Missing,
        Err(e) => return Lookup::Corrupt(e.to_string()),
    };
    if bytes.len() < 40 || &bytes[..8] != magic {
        return Lookup::Corrupt("bad header".into());
    }
    let payload = &bytes[40..];
    if Sha256::digest(payload).as_slice() != &bytes[8..40] {
        return Lookup::Corrupt("content hash mismatch".into());
    }
    Lookup::Hit(payload.to_vec())
}

fn missing_cache() -> CliError {
    CliError::Usage("no prepared data for this config; run `hicrec prepare --config <path>` first".into())
}

/// Loads the prepared dataset, building and caching whatever is missing or
/// corrupt. With `build = false` a missing cache is an error.
pub fn prepare(cfg: &RunConfig, build: bool) -> Result<PrepareOutcome, CliError> {
    let schema = cfg
        .schema()?
        .ok_or_else(|| CliError::Config("schema: required (or a [synthetic] section)".into()))?;
    let defs = cfg.aspect_defs();
    let opts = cfg.aspect_options()?;
    let dir = cache_dir(cfg);
    fs::create_dir_all(&dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;

    let key = base_key(cfg, &schema)?;
    let base_path = dir.join(format!("base-{key}.bin"));
    let mut base_hit = false;
    let cached = match lookup(&base_path, BASE_MAGIC) {
        Lookup::Hit(bytes) => match read_base(&mut Cursor::new(bytes)) {
            Ok(v) => {
                base_hit = true;
                Some(v)
            }
            Err(e) => {
                warn!("cache {} unreadable ({e}); rebuilding", base_path.display());
                None
            }
        },
        Lookup::Corrupt(why) => {
            warn!("cache {} is corrupt ({why}); rebuilding", base_path.display());
            None
        }
        Lookup::Missing if !build => return Err(missing_cache()),
        Lookup::Missing => None,
    };
    let (graph, split) = match cached {
        Some(v) => v,
        None => {
            let mut b = HinBuilder::new(&schema).context("schema")?;
            if let Some(p) = &cfg.data.edges {
                b.add_edge_file(p).context("data.edges")?;
            }
            let path = cfg
                .data
                .interactions
                .as_ref()
                .ok_or_else(|| CliError::Config("data.interactions: required".into()))?;
            let rows = load_interactions(path, &schema).context("data.interactions")?;
            let (graph, split) = assemble(b, &rows).context("data")?;
            let mut payload = Vec::new();
            write_base(&mut payload, &graph, &split).map_err(|e| CliError::Data(e.to_string()))?;
            store(&base_path, BASE_MAGIC, &payload)?;
            info!("cached graph and split at {}", base_path.display());
            (graph, split)
        }
    };

    let mut aspects = Vec::with_capacity(defs.len());
    let mut aspect_hits = Vec::with_capacity(defs.len());
    for def in &defs {
        let ctx = format!("aspect.{}", def.name);
        let (up, ip) = parse_aspect_paths(&def.user_path, &def.item_path, &graph).context(&ctx)?;
        let path = dir.join(format!("aspect-{}-{}.bin", def.name, aspect_key(&key, def)));
        let mut matrices = None;
        match lookup(&path, ASPECT_MAGIC) {
            Lookup::Hit(bytes) => match read_aspect(&mut Cursor::new(bytes), def) {
                Ok(m) => matrices = Some(m),
                Err(e) => warn!("cache {} unreadable ({e}); rebuilding", path.display()),
            },
            Lookup::Corrupt(why) => warn!("cache {} is corrupt ({why}); rebuilding", path.display()),
            Lookup::Missing if !build => return Err(missing_cache()),
            Lookup::Missing => {}
        }
        aspect_hits.push(matrices.is_some());
        let (uc, ic) = match matrices {
            Some((u, i)) => (CommutingMatrix { path: up, matrix: u }, CommutingMatrix { path: ip, matrix: i }),
            None => {
                let uc = commuting_matrix(&up, &graph).context(&ctx)?;
                let ic = commuting_matrix(&ip, &graph).context(&ctx)?;
                let mut payload = Vec::new();
                write_aspect(&mut payload, def, &uc.matrix, &ic.matrix).map_err(|e| CliError::Data(e.to_string()))?;
                store(&path, ASPECT_MAGIC, &payload)?;
                info!("cached aspect {} at {}", def.name, path.display());
                (uc, ic)
            }
        };
        aspects.push(Arc::new(Aspect::from_commuting(&def.name, uc, ic, &opts).context(&ctx)?));
    }
    Ok(PrepareOutcome {
        prepared: Prepared { graph, split, aspects },
        base_hit,
        aspect_hits,
    })
}
