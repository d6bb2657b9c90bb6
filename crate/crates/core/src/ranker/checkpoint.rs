//! JSON checkpoints:
//! `{"version": 1, "config": {...}, "relations": {name: {...}}}`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{EncoderLayer, Ranker, RankerConfig, RankerParams};

const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Document {
    version: u32,
    config: RankerConfig,
    relations: BTreeMap<String, RelationDoc>,
}

#[derive(Serialize, Deserialize)]
struct RelationDoc {
    embeddings: Vec<Vec<f64>>,
    encoder: EncoderDoc,
    /// attention weights followed by the bias
    nn_a: Vec<f64>,
    /// head weights followed by the bias
    nn_p: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct EncoderDoc {
    layers: Vec<LayerDoc>,
}

#[derive(Serialize, Deserialize)]
struct LayerDoc {
    wq: Vec<Vec<f64>>,
    wk: Vec<Vec<f64>>,
    wv: Vec<Vec<f64>>,
    w1: Vec<Vec<f64>>,
    b1: Vec<f64>,
    w2: Vec<Vec<f64>>,
    b2: Vec<f64>,
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn matrix(rows: Vec<Vec<f64>>, shape: (usize, usize), what: &str) -> Result<Array2<f64>> {
    let bad = || {
        Error::Invalid(format!(
            "checkpoint: {what} must be {}x{}",
            shape.0, shape.1
        ))
    };
    if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
        return Err(bad());
    }
    Array2::from_shape_vec(shape, rows.into_iter().flatten().collect()).map_err(|_| bad())
}

fn vector(v: Vec<f64>, len: usize, what: &str) -> Result<Array1<f64>> {
    if v.len() != len {
        return Err(Error::Invalid(format!(
            "checkpoint: {what} must have {len} entries"
        )));
    }
    Ok(Array1::from(v))
}

impl RelationDoc {
    fn from_params(p: &RankerParams) -> Self {
        let mut nn_a = p.attn_w.to_vec();
        nn_a.push(p.attn_b);
        let mut nn_p = p.head_w.to_vec();
        nn_p.push(p.head_b);
        RelationDoc {
            embeddings: rows(&p.embeddings),
            encoder: EncoderDoc {
                layers: p
                    .layers
                    .iter()
                    .map(|l| LayerDoc {
                        wq: rows(&l.wq),
                        wk: rows(&l.wk),
                        wv: rows(&l.wv),
                        w1: rows(&l.w1),
                        b1: l.b1.to_vec(),
                        w2: rows(&l.w2),
                        b2: l.b2.to_vec(),
                    })
                    .collect(),
            },
            nn_a,
            nn_p,
        }
    }

    fn into_params(self, config: &RankerConfig) -> Result<RankerParams> {
        let d = config.embed_dim;
        if self.encoder.layers.len() != config.encoder_layers {
            return Err(Error::Invalid(
                "checkpoint: encoder layer count disagrees with config".into(),
            ));
        }
        let layers = self
            .encoder
            .layers
            .into_iter()
            .map(|l| {
                Ok(EncoderLayer {
                    wq: matrix(l.wq, (d, d), "wq")?,
                    wk: matrix(l.wk, (d, d), "wk")?,
                    wv: matrix(l.wv, (d, d), "wv")?,
                    w1: matrix(l.w1, (d, d), "w1")?,
                    b1: vector(l.b1, d, "b1")?,
                    w2: matrix(l.w2, (d, d), "w2")?,
                    b2: vector(l.b2, d, "b2")?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut nn_a = self.nn_a;
        let mut nn_p = self.nn_p;
        let attn_b = nn_a.pop().unwrap_or(f64::NAN);
        let head_b = nn_p.pop().unwrap_or(f64::NAN);
        let params = RankerParams {
            embeddings: matrix(self.embeddings, (config.vocab.len(), d), "embeddings")?,
            layers,
            attn_w: vector(nn_a, 2 * d, "nn_a")?,
            attn_b,
            head_w: vector(nn_p, 4 * d + 2, "nn_p")?,
            head_b,
        };
        if !params.is_finite() {
            return Err(Error::Invalid("checkpoint: non-finite parameter".into()));
        }
        Ok(params)
    }
}

impl Ranker {
    pub fn to_json(&self) -> String {
        let doc = Document {
            version: VERSION,
            config: self.config.clone(),
            relations: self
                .relations
                .iter()
                .map(|(r, p)| (r.clone(), RelationDoc::from_params(p)))
                .collect(),
        };
        let mut out = serde_json::to_string(&doc).expect("checkpoint serializes");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Document =
            serde_json::from_str(text).map_err(|e| Error::Invalid(format!("checkpoint: {e}")))?;
        if doc.version != VERSION {
            return Err(Error::Invalid(format!(
                "checkpoint: unsupported version {}",
                doc.version
            )));
        }
        doc.config.validate()?;
        let relations = doc
            .relations
            .into_iter()
            .map(|(r, rd)| Ok((r, rd.into_params(&doc.config)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(Ranker {
            config: doc.config,
            relations,
        })
    }
}

pub fn save_checkpoint(ranker: &Ranker, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, ranker.to_json()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Ranker> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ranker::from_json(&text)
}
