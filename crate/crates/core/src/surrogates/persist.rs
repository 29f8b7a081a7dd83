//! Model files: `QMODEL01`, a kind tag, a format version, then a parameter
//! blob. A JSON sidecar next to the file carries the human-readable story
//! (hyperparameters, standardization, metrics, seed, dataset hash).

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dnn::Mlp;
use super::forest::Forest;
use super::svr::SvrModel;
use super::tree::{Node, Tree};
use super::{FitInfo, Fitted, Hyper, ModelKind, Standardizer, SurrogateError, Table, TrainedModel};
use crate::binio::{expect_magic, read_f64, read_f64s, read_u32, read_u64, write_f64, write_f64s, write_u32, write_u64};
use crate::sha256_hex;

pub const MODEL_MAGIC: &[u8; 8] = b"QMODEL01";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    hyper: Hyper,
    info: FitInfo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSidecar {
    pub kind: ModelKind,
    pub format_version: u32,
    pub hyperparameters: Hyper,
    pub x_standardization: Standardizer,
    pub y_standardization: Standardizer,
    pub train_metrics: serde_json::Value,
    pub seed: u64,
    pub dataset_hash: Option<String>,
    pub fit_info: FitInfo,
    /// How the SVR regularization constant is to be read.
    pub svr_regularization: Option<String>,
    pub model_sha256: String,
}

fn bad(msg: &str) -> SurrogateError {
    SurrogateError::Malformed(msg.to_string())
}

fn write_std<W: Write>(w: &mut W, s: &Standardizer) -> std::io::Result<()> {
    write_u32(w, s.dim() as u32)?;
    write_f64s(w, &s.mean)?;
    write_f64s(w, &s.std)
}

fn read_std<R: Read>(r: &mut R) -> Result<Standardizer, SurrogateError> {
    let d = read_u32(r)? as usize;
    Ok(Standardizer {
        mean: read_f64s(r, d)?,
        std: read_f64s(r, d)?,
    })
}

fn write_tree<W: Write>(w: &mut W, t: &Tree) -> std::io::Result<()> {
    write_u32(w, t.nodes.len() as u32)?;
    for n in &t.nodes {
        write_u32(w, n.feature)?;
        write_f64(w, n.threshold)?;
        write_u32(w, n.left)?;
        write_u32(w, n.right)?;
        write_f64(w, n.value)?;
    }
    Ok(())
}

fn read_tree<R: Read>(r: &mut R) -> Result<Tree, SurrogateError> {
    let n = read_u32(r)? as usize;
    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        nodes.push(Node {
            feature: read_u32(r)?,
            threshold: read_f64(r)?,
            left: read_u32(r)?,
            right: read_u32(r)?,
            value: read_f64(r)?,
        });
    }
    for node in &nodes {
        if !node.is_leaf() && (node.left as usize >= n || node.right as usize >= n) {
            return Err(bad("tree child index out of range"));
        }
    }
    if nodes.is_empty() {
        return Err(bad("empty tree"));
    }
    Ok(Tree::from_nodes(nodes))
}

pub fn write_model<W: Write>(m: &TrainedModel, mut w: W) -> Result<(), SurrogateError> {
    w.write_all(MODEL_MAGIC)?;
    write_u32(&mut w, m.kind().tag())?;
    write_u32(&mut w, FORMAT_VERSION)?;
    let header = serde_json::to_vec(&Header {
        hyper: m.hyper.clone(),
        info: m.info.clone(),
    })?;
    write_u32(&mut w, header.len() as u32)?;
    w.write_all(&header)?;
    write_u64(&mut w, m.seed)?;
    write_std(&mut w, &m.x_std)?;
    write_std(&mut w, &m.y_std)?;
    match &m.fitted {
        Fitted::Dt(trees) => {
            write_u32(&mut w, trees.len() as u32)?;
            for t in trees {
                write_tree(&mut w, t)?;
            }
        }
        Fitted::Rf(forests) => {
            write_u32(&mut w, forests.len() as u32)?;
            for f in forests {
                write_u32(&mut w, f.trees.len() as u32)?;
                for t in &f.trees {
                    write_tree(&mut w, t)?;
                }
            }
        }
        Fitted::Svr(models) => {
            write_u32(&mut w, models.len() as u32)?;
            for s in models {
                write_u32(&mut w, s.coef.len() as u32)?;
                write_u32(&mut w, s.support.cols as u32)?;
                write_f64(&mut w, s.gamma)?;
                write_f64(&mut w, s.rho)?;
                write_f64s(&mut w, &s.coef)?;
                write_f64s(&mut w, &s.support.data)?;
            }
        }
        Fitted::Dnn(net) => {
            write_u32(&mut w, net.sizes.len() as u32)?;
            for s in &net.sizes {
                write_u32(&mut w, *s as u32)?;
            }
            write_f64s(&mut w, &net.params)?;
        }
    }
    Ok(())
}

pub fn model_to_bytes(m: &TrainedModel) -> Vec<u8> {
    let mut v = Vec::new();
    write_model(m, &mut v).expect("writing to memory");
    v
}

pub fn read_model<R: Read>(mut r: R) -> Result<TrainedModel, SurrogateError> {
    if !expect_magic(&mut r, MODEL_MAGIC)? {
        return Err(bad("not a model file (bad magic)"));
    }
    let kind = ModelKind::from_tag(read_u32(&mut r)?).ok_or_else(|| bad("unknown model kind tag"))?;
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(SurrogateError::Malformed(format!("unsupported model format version {version}")));
    }
    let hlen = read_u32(&mut r)? as usize;
    let mut hbytes = vec![0u8; hlen];
    r.read_exact(&mut hbytes)?;
    let header: Header = serde_json::from_slice(&hbytes)?;
    if header.hyper.kind() != kind {
        return Err(bad("kind tag disagrees with hyperparameters"));
    }
    let seed = read_u64(&mut r)?;
    let x_std = read_std(&mut r)?;
    let y_std = read_std(&mut r)?;
    let fitted = match kind {
        ModelKind::Dt => {
            let k = read_u32(&mut r)? as usize;
            Fitted::Dt((0..k).map(|_| read_tree(&mut r)).collect::<Result<_, _>>()?)
        }
        ModelKind::Rf => {
            let k = read_u32(&mut r)? as usize;
            let mut forests = Vec::with_capacity(k);
            for _ in 0..k {
                let nt = read_u32(&mut r)? as usize;
                forests.push(Forest {
                    trees: (0..nt).map(|_| read_tree(&mut r)).collect::<Result<_, _>>()?,
                });
            }
            Fitted::Rf(forests)
        }
        ModelKind::Svr => {
            let k = read_u32(&mut r)? as usize;
            let mut models = Vec::with_capacity(k);
            for _ in 0..k {
                let nsv = read_u32(&mut r)? as usize;
                let d = read_u32(&mut r)? as usize;
                let gamma = read_f64(&mut r)?;
                let rho = read_f64(&mut r)?;
                let coef = read_f64s(&mut r, nsv)?;
                let support = Table::new(nsv, d, read_f64s(&mut r, nsv * d)?);
                models.push(SvrModel { gamma, rho, coef, support });
            }
            Fitted::Svr(models)
        }
        ModelKind::Dnn => {
            let nl = read_u32(&mut r)? as usize;
            let sizes: Vec<usize> = (0..nl).map(|_| read_u32(&mut r).map(|v| v as usize)).collect::<Result<_, _>>()?;
            if sizes.len() < 2 {
                return Err(bad("network needs at least two layer sizes"));
            }
            let params = read_f64s(&mut r, Mlp::n_params_for(&sizes))?;
            Fitted::Dnn(Mlp { sizes, params })
        }
    };
    let model = TrainedModel {
        hyper: header.hyper,
        seed,
        x_std,
        y_std,
        fitted,
        info: header.info,
    };
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(bad("trailing bytes after model blob"));
    }
    Ok(model)
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn sidecar(m: &TrainedModel, train_metrics: serde_json::Value, dataset_hash: Option<String>) -> ModelSidecar {
    ModelSidecar {
        kind: m.kind(),
        format_version: FORMAT_VERSION,
        hyperparameters: m.hyper.clone(),
        x_standardization: m.x_std.clone(),
        y_standardization: m.y_std.clone(),
        train_metrics,
        seed: m.seed,
        dataset_hash,
        fit_info: m.info.clone(),
        svr_regularization: matches!(m.kind(), ModelKind::Svr)
            .then(|| "c is the dual box constraint 0 <= alpha <= C (the tabulated lambda read as C)".to_string()),
        model_sha256: sha256_hex(&model_to_bytes(m)),
    }
}

/// Writes `path` and `path.json`; returns the sidecar.
pub fn save_model(
    m: &TrainedModel,
    path: &Path,
    train_metrics: serde_json::Value,
    dataset_hash: Option<String>,
) -> Result<ModelSidecar, SurrogateError> {
    std::fs::write(path, model_to_bytes(m))?;
    let sc = sidecar(m, train_metrics, dataset_hash);
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&sc)? + "\n")?;
    Ok(sc)
}

pub fn load_model(path: &Path) -> Result<TrainedModel, SurrogateError> {
    read_model(&std::fs::read(path)?[..])
}
