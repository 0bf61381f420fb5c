//! Binary model container and its JSON mirror.
//!
//! ```text
//! "STIP" | version u16 | config | epoch u64 | tensor count u32 | tensors...
//! config  = n_layers u32, d_model u32, d_ff u32, vocab_size u32,
//!           attn_scale f32, norm_kind u8, norm_placement u8, ffn_kind u8,
//!           n_experts u32, top_k u32, mask_kind u8, norm_eps f32
//! tensor  = name_len u16 | name | rank u8 | dims u32 × rank | f32 × prod(dims)
//! ```
//!
//! All integers and floats are little-endian; tensors are row-major.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use stip_core::model::FfnBlock;
use stip_core::{
    EmbeddingTable, FfnKind, FfnWeights, LayerWeights, MaskKind, Matrix, ModelConfig, ModelParams,
    NormKind, NormPlacement, NormWeights, TransformedModel, Vector,
};

use crate::bytes::{Reader, Writer};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"STIP";
pub const MODEL_VERSION: u16 = 1;

/// A named tensor view: `(name, dims, row-major data)`.
pub type TensorRef<'a> = (String, Vec<usize>, &'a [f32]);

fn push_norm<'a>(out: &mut Vec<TensorRef<'a>>, prefix: &str, n: &'a NormWeights) {
    out.push((format!("{prefix}.gamma"), vec![n.gamma.dim()], n.gamma.data()));
    if let Some(b) = &n.beta {
        out.push((format!("{prefix}.beta"), vec![b.dim()], b.data()));
    }
}

fn push_mat<'a>(out: &mut Vec<TensorRef<'a>>, name: String, m: &'a Matrix) {
    out.push((name, vec![m.rows(), m.cols()], m.data()));
}

fn push_ffn<'a>(out: &mut Vec<TensorRef<'a>>, prefix: &str, f: &'a FfnWeights) {
    push_mat(out, format!("{prefix}.w_1"), &f.w1);
    push_mat(out, format!("{prefix}.w_2"), &f.w2);
    if let Some(w3) = &f.w3 {
        push_mat(out, format!("{prefix}.w_3"), w3);
    }
}

/// Every tensor of `params` in container order.
pub fn tensor_list(params: &ModelParams) -> Vec<TensorRef<'_>> {
    let mut out = Vec::new();
    push_mat(&mut out, "embedding".into(), params.embedding.table());
    for (i, l) in params.layers.iter().enumerate() {
        let p = format!("layers.{i}");
        push_mat(&mut out, format!("{p}.w_q"), &l.w_q);
        push_mat(&mut out, format!("{p}.w_k"), &l.w_k);
        push_mat(&mut out, format!("{p}.w_v"), &l.w_v);
        push_mat(&mut out, format!("{p}.w_o"), &l.w_o);
        push_norm(&mut out, &format!("{p}.norm1"), &l.norm1);
        push_norm(&mut out, &format!("{p}.norm2"), &l.norm2);
        match &l.ffn {
            FfnBlock::Dense(f) => push_ffn(&mut out, &p, f),
            FfnBlock::Moe { router, experts } => {
                push_mat(&mut out, format!("{p}.router"), router);
                for (j, e) in experts.iter().enumerate() {
                    push_ffn(&mut out, &format!("{p}.experts.{j}"), e);
                }
            }
        }
    }
    push_mat(&mut out, "classifier".into(), &params.classifier);
    out
}

fn write_config(w: &mut Writer, c: &ModelConfig) -> Result<()> {
    w.dim("n_layers", c.n_layers)?;
    w.dim("d_model", c.d_model)?;
    w.dim("d_ff", c.d_ff)?;
    w.dim("vocab_size", c.vocab_size)?;
    w.f32(c.attn_scale);
    w.u8(c.norm_kind.code());
    w.u8(c.norm_placement.code());
    w.u8(c.ffn_kind.code());
    w.dim("n_experts", c.n_experts)?;
    w.dim("top_k", c.top_k)?;
    w.u8(c.mask_kind.code());
    w.f32(c.norm_eps);
    Ok(())
}

fn read_config(r: &mut Reader) -> Result<ModelConfig> {
    let n_layers = r.u32()? as usize;
    let d_model = r.u32()? as usize;
    let d_ff = r.u32()? as usize;
    let vocab_size = r.u32()? as usize;
    let attn_scale = r.f32()?;
    let code = |r: &mut Reader, what: &str| -> Result<u8> {
        r.u8().map_err(|_| r.err(format!("missing {what}")))
    };
    let nk = code(r, "norm_kind")?;
    let np = code(r, "norm_placement")?;
    let fk = code(r, "ffn_kind")?;
    let n_experts = r.u32()? as usize;
    let top_k = r.u32()? as usize;
    let mk = code(r, "mask_kind")?;
    let norm_eps = r.f32()?;
    let bad = |what: &str, c: u8| r.err(format!("unknown {what} code {c}"));
    let cfg = ModelConfig {
        n_layers,
        d_model,
        d_ff,
        vocab_size,
        attn_scale,
        norm_kind: NormKind::from_code(nk).ok_or_else(|| bad("norm_kind", nk))?,
        norm_placement: NormPlacement::from_code(np).ok_or_else(|| bad("norm_placement", np))?,
        ffn_kind: FfnKind::from_code(fk).ok_or_else(|| bad("ffn_kind", fk))?,
        n_experts,
        top_k,
        mask_kind: MaskKind::from_code(mk).ok_or_else(|| bad("mask_kind", mk))?,
        norm_eps,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn encode_model(params: &ModelParams, epoch: u64) -> Result<Vec<u8>> {
    params.validate()?;
    let mut w = Writer::default();
    w.bytes(MODEL_MAGIC);
    w.u16(MODEL_VERSION);
    write_config(&mut w, &params.config)?;
    w.u64(epoch);
    let tensors = tensor_list(params);
    w.dim("tensor count", tensors.len())?;
    for (name, dims, data) in tensors {
        w.u16(name.len() as u16);
        w.bytes(name.as_bytes());
        w.u8(dims.len() as u8);
        for d in dims {
            w.dim("tensor dim", d)?;
        }
        w.f32s(data);
    }
    Ok(w.buf)
}

pub fn encode_transformed(t: &TransformedModel) -> Result<Vec<u8>> {
    encode_model(&t.params, t.epoch)
}

/// Tensors pulled out of a container by name, consumed while assembling.
struct TensorBag {
    map: BTreeMap<String, (Vec<usize>, Vec<f32>)>,
}

impl TensorBag {
    fn take(&mut self, name: &str, dims: &[usize]) -> Result<Vec<f32>> {
        let (d, data) = self
            .map
            .remove(name)
            .ok_or_else(|| Error::format("model container", format!("missing tensor {name}")))?;
        if d != dims {
            return Err(Error::format(
                "model container",
                format!("tensor {name} has dims {d:?}, expected {dims:?}"),
            ));
        }
        Ok(data)
    }

    fn mat(&mut self, name: &str, rows: usize, cols: usize) -> Result<Matrix> {
        Ok(Matrix::new(rows, cols, self.take(name, &[rows, cols])?)?)
    }

    fn vec(&mut self, name: &str, n: usize) -> Result<Vector> {
        Ok(Vector::new(self.take(name, &[n])?)?)
    }

    fn norm(&mut self, prefix: &str, cfg: &ModelConfig) -> Result<NormWeights> {
        let d = cfg.d_model;
        Ok(NormWeights {
            gamma: self.vec(&format!("{prefix}.gamma"), d)?,
            beta: match cfg.norm_kind {
                NormKind::LayerNorm => Some(self.vec(&format!("{prefix}.beta"), d)?),
                NormKind::RmsNorm => None,
            },
        })
    }

    fn ffn(&mut self, prefix: &str, cfg: &ModelConfig) -> Result<FfnWeights> {
        let (d, m) = (cfg.d_model, cfg.d_ff);
        Ok(FfnWeights {
            w1: self.mat(&format!("{prefix}.w_1"), d, m)?,
            w2: self.mat(&format!("{prefix}.w_2"), m, d)?,
            w3: match cfg.ffn_kind {
                FfnKind::Swiglu => Some(self.mat(&format!("{prefix}.w_3"), d, m)?),
                _ => None,
            },
        })
    }

    fn assemble(mut self, cfg: ModelConfig) -> Result<ModelParams> {
        let (d, s) = (cfg.d_model, cfg.vocab_size);
        let embedding = EmbeddingTable::new(self.mat("embedding", s, d)?);
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for i in 0..cfg.n_layers {
            let p = format!("layers.{i}");
            let w_q = self.mat(&format!("{p}.w_q"), d, d)?;
            let w_k = self.mat(&format!("{p}.w_k"), d, d)?;
            let w_v = self.mat(&format!("{p}.w_v"), d, d)?;
            let w_o = self.mat(&format!("{p}.w_o"), d, d)?;
            let norm1 = self.norm(&format!("{p}.norm1"), &cfg)?;
            let norm2 = self.norm(&format!("{p}.norm2"), &cfg)?;
            let ffn = if cfg.is_moe() {
                FfnBlock::Moe {
                    router: self.mat(&format!("{p}.router"), d, cfg.n_experts)?,
                    experts: (0..cfg.n_experts)
                        .map(|j| self.ffn(&format!("{p}.experts.{j}"), &cfg))
                        .collect::<Result<_>>()?,
                }
            } else {
                FfnBlock::Dense(self.ffn(&p, &cfg)?)
            };
            layers.push(LayerWeights { w_q, w_k, w_v, w_o, norm1, norm2, ffn });
        }
        let classifier = self.mat("classifier", d, s)?;
        if let Some(extra) = self.map.keys().next() {
            return Err(Error::format("model container", format!("unexpected tensor {extra}")));
        }
        let params = ModelParams { config: cfg, embedding, layers, classifier };
        params.validate()?;
        Ok(params)
    }
}

/// Parses a container; returns the parameters and the key epoch stored
/// with them (0 for untransformed models).
pub fn decode_model(bytes: &[u8]) -> Result<(ModelParams, u64)> {
    let mut r = Reader::new(bytes, "model container");
    r.expect_magic(MODEL_MAGIC)?;
    let version = r.u16()?;
    if version != MODEL_VERSION {
        return Err(r.err(format!("unsupported version {version}")));
    }
    let cfg = read_config(&mut r)?;
    let epoch = r.u64()?;
    let count = r.u32()? as usize;
    let mut map = BTreeMap::new();
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| r.err("tensor name is not utf-8"))?
            .to_owned();
        let rank = r.u8()? as usize;
        let dims = (0..rank).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let n = dims.iter().try_fold(1usize, |a, &b| a.checked_mul(b)).ok_or_else(|| r.err("tensor too large"))?;
        let data = r.f32s(n)?;
        if map.insert(name.clone(), (dims, data)).is_some() {
            return Err(r.err(format!("duplicate tensor {name}")));
        }
    }
    r.finish()?;
    Ok((TensorBag { map }.assemble(cfg)?, epoch))
}

pub fn decode_transformed(bytes: &[u8]) -> Result<TransformedModel> {
    let (params, epoch) = decode_model(bytes)?;
    Ok(TransformedModel { params, epoch })
}

#[derive(Serialize, Deserialize)]
struct JsonTensor {
    name: String,
    dims: Vec<usize>,
    data: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
struct JsonModel {
    version: u16,
    config: ModelConfig,
    epoch: u64,
    tensors: Vec<JsonTensor>,
}

/// Debug mirror of the binary container with the same field and tensor names.
pub fn model_to_json(params: &ModelParams, epoch: u64) -> Result<String> {
    let doc = JsonModel {
        version: MODEL_VERSION,
        config: params.config.clone(),
        epoch,
        tensors: tensor_list(params)
            .into_iter()
            .map(|(name, dims, data)| JsonTensor { name, dims, data: data.to_vec() })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).map_err(|e| Error::format("model json", e.to_string()))
}

pub fn model_from_json(s: &str) -> Result<(ModelParams, u64)> {
    let doc: JsonModel = serde_json::from_str(s).map_err(|e| Error::format("model json", e.to_string()))?;
    if doc.version != MODEL_VERSION {
        return Err(Error::format("model json", format!("unsupported version {}", doc.version)));
    }
    doc.config.validate()?;
    let mut map = BTreeMap::new();
    for t in doc.tensors {
        map.insert(t.name, (t.dims, t.data));
    }
    Ok((TensorBag { map }.assemble(doc.config)?, doc.epoch))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn variants() -> Vec<ModelConfig> {
        vec![
            ModelConfig::new(2, 8, 16, 10),
            ModelConfig::new(1, 8, 12, 10).with_norm(NormKind::RmsNorm, NormPlacement::Pre).with_ffn(FfnKind::Swiglu),
            ModelConfig::new(2, 4, 8, 6).with_experts(3, 2).with_mask(MaskKind::Custom),
        ]
    }

    #[test]
    fn binary_round_trip_is_exact() {
        for (i, cfg) in variants().into_iter().enumerate() {
            let p = ModelParams::random(&cfg, i as u64).unwrap();
            let bytes = encode_model(&p, 7).unwrap();
            let (q, epoch) = decode_model(&bytes).unwrap();
            assert_eq!((q, epoch), (p.clone(), 7));
            assert_eq!(encode_model(&decode_model(&bytes).unwrap().0, 7).unwrap(), bytes);
        }
    }

    #[test]
    fn json_mirror_round_trip() {
        for cfg in variants() {
            let p = ModelParams::random(&cfg, 3).unwrap();
            let s = model_to_json(&p, 2).unwrap();
            assert!(s.contains("\"layers.0.w_q\""));
            assert_eq!(model_from_json(&s).unwrap(), (p, 2));
        }
    }

    #[test]
    fn header_layout() {
        let p = ModelParams::random(&ModelConfig::new(1, 4, 8, 5), 0).unwrap();
        let b = encode_model(&p, 0).unwrap();
        assert_eq!(&b[..4], b"STIP");
        assert_eq!(u16::from_le_bytes([b[4], b[5]]), MODEL_VERSION);
        assert_eq!(u32::from_le_bytes(b[6..10].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[10..14].try_into().unwrap()), 4);
        // embedding is the first tensor
        let first = 6 + 36 + 8 + 4;
        assert_eq!(u16::from_le_bytes([b[first], b[first + 1]]), 9);
        assert_eq!(&b[first + 2..first + 11], b"embedding");
    }

    #[test]
    fn rejects_corruption() {
        let p = ModelParams::random(&ModelConfig::new(1, 4, 8, 5), 0).unwrap();
        let b = encode_model(&p, 0).unwrap();
        assert!(decode_model(&b[..b.len() - 1]).is_err());
        let mut extra = b.clone();
        extra.push(0);
        assert!(decode_model(&extra).is_err());
        let mut magic = b.clone();
        magic[0] = b'X';
        assert!(decode_model(&magic).is_err());
        let mut code = b;
        code[6 + 20] = 9;
        assert!(decode_model(&code).is_err());
    }
}
