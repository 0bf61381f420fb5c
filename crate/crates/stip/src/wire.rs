//! Framed messages exchanged between the three parties.
//!
//! ```text
//! header (31 bytes) = "STIP" | version u16 | msg_type u8 | epoch u64
//!                     | session_id u64 | payload_len u64
//! ```
//!
//! Matrix payloads are `rows u32 | cols u32 | f32 × rows·cols`, row-major.

use std::fmt;

use stip_core::{Matrix, SharedKeys, TransformedModel};

use crate::bytes::{Reader, Writer};
use crate::error::{Error, Result};
use crate::format::{decode_transformed, encode_transformed, KeyFile};

pub const WIRE_MAGIC: &[u8; 4] = b"STIP";
pub const WIRE_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 31;
/// `rows u32 | cols u32` in front of matrix payloads.
pub const MATRIX_PREFIX_LEN: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MsgType {
    DeployModel = 1,
    DeployKeys = 2,
    InferRequest = 3,
    InferResponse = 4,
    ReKey = 5,
    Error = 6,
}

impl MsgType {
    pub fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            1 => MsgType::DeployModel,
            2 => MsgType::DeployKeys,
            3 => MsgType::InferRequest,
            4 => MsgType::InferResponse,
            5 => MsgType::ReKey,
            6 => MsgType::Error,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            MsgType::DeployModel => "deploy_model",
            MsgType::DeployKeys => "deploy_keys",
            MsgType::InferRequest => "infer_request",
            MsgType::InferResponse => "infer_response",
            MsgType::ReKey => "rekey",
            MsgType::Error => "error",
        }
    }
}

impl fmt::Display for MsgType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Codes carried by [`Body::Error`].
pub mod codes {
    pub const STALE_EPOCH: u16 = 1;
    pub const MALFORMED: u16 = 2;
    pub const NOT_INITIALIZED: u16 = 3;
    pub const INFERENCE_FAILED: u16 = 4;
    pub const UNEXPECTED: u16 = 5;
}

#[derive(Clone, Debug, PartialEq)]
pub enum Body {
    DeployModel(Box<TransformedModel>),
    /// `{π, π_c}` only.
    DeployKeys(SharedKeys),
    InferRequest(Matrix),
    InferResponse(Matrix),
    /// The sender's keys moved from `previous_epoch` to the header epoch.
    ReKey { previous_epoch: u64 },
    Error { code: u16, detail: String },
}

impl Body {
    pub fn msg_type(&self) -> MsgType {
        match self {
            Body::DeployModel(_) => MsgType::DeployModel,
            Body::DeployKeys(_) => MsgType::DeployKeys,
            Body::InferRequest(_) => MsgType::InferRequest,
            Body::InferResponse(_) => MsgType::InferResponse,
            Body::ReKey { .. } => MsgType::ReKey,
            Body::Error { .. } => MsgType::Error,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WireMessage {
    pub epoch: u64,
    pub session_id: u64,
    pub body: Body,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Header {
    pub msg_type: MsgType,
    pub epoch: u64,
    pub session_id: u64,
    pub payload_len: u64,
}

impl Header {
    pub fn decode(b: &[u8]) -> Result<Self> {
        let mut r = Reader::new(b, "frame header");
        r.expect_magic(WIRE_MAGIC)?;
        let version = r.u16()?;
        if version != WIRE_VERSION {
            return Err(r.err(format!("unsupported version {version}")));
        }
        let code = r.u8()?;
        let msg_type = MsgType::from_code(code).ok_or_else(|| r.err(format!("unknown msg_type {code}")))?;
        Ok(Self { msg_type, epoch: r.u64()?, session_id: r.u64()?, payload_len: r.u64()? })
    }
}

fn write_matrix(w: &mut Writer, m: &Matrix) -> Result<()> {
    w.dim("rows", m.rows())?;
    w.dim("cols", m.cols())?;
    w.f32s(m.data());
    Ok(())
}

fn read_matrix(r: &mut Reader) -> Result<Matrix> {
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let n = rows.checked_mul(cols).ok_or_else(|| r.err("matrix too large"))?;
    Ok(Matrix::new(rows, cols, r.f32s(n)?)?)
}

impl WireMessage {
    pub fn new(epoch: u64, session_id: u64, body: Body) -> Self {
        Self { epoch, session_id, body }
    }

    pub fn msg_type(&self) -> MsgType {
        self.body.msg_type()
    }

    /// Rows and columns of a matrix payload.
    pub fn payload_dims(&self) -> Option<(usize, usize)> {
        match &self.body {
            Body::InferRequest(m) | Body::InferResponse(m) => Some(m.shape()),
            _ => None,
        }
    }

    fn encode_payload(&self) -> Result<Vec<u8>> {
        let mut w = Writer::default();
        match &self.body {
            Body::DeployModel(t) => w.bytes(&encode_transformed(t)?),
            Body::DeployKeys(k) => w.bytes(&KeyFile::from_shared(k).encode()?),
            Body::InferRequest(m) | Body::InferResponse(m) => write_matrix(&mut w, m)?,
            Body::ReKey { previous_epoch } => w.u64(*previous_epoch),
            Body::Error { code, detail } => {
                w.u16(*code);
                w.bytes(detail.as_bytes());
            }
        }
        Ok(w.buf)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let payload = self.encode_payload()?;
        let mut w = Writer::default();
        w.buf.reserve(HEADER_LEN + payload.len());
        w.bytes(WIRE_MAGIC);
        w.u16(WIRE_VERSION);
        w.u8(self.msg_type() as u8);
        w.u64(self.epoch);
        w.u64(self.session_id);
        w.u64(payload.len() as u64);
        w.bytes(&payload);
        Ok(w.buf)
    }

    pub fn decode_payload(h: &Header, payload: &[u8]) -> Result<Self> {
        if payload.len() as u64 != h.payload_len {
            return Err(Error::format(
                "frame",
                format!("payload_len {} but {} bytes follow", h.payload_len, payload.len()),
            ));
        }
        let body = match h.msg_type {
            MsgType::DeployModel => Body::DeployModel(Box::new(decode_transformed(payload)?)),
            MsgType::DeployKeys => {
                let f = KeyFile::decode(payload)?;
                if f.has_private() || f.entries.len() != 2 {
                    return Err(Error::format("frame", "key deployment must carry exactly pi and pi_c"));
                }
                Body::DeployKeys(f.shared()?)
            }
            MsgType::InferRequest | MsgType::InferResponse => {
                let mut r = Reader::new(payload, "frame");
                let m = read_matrix(&mut r)?;
                r.finish()?;
                if h.msg_type == MsgType::InferRequest {
                    Body::InferRequest(m)
                } else {
                    Body::InferResponse(m)
                }
            }
            MsgType::ReKey => {
                let mut r = Reader::new(payload, "frame");
                let previous_epoch = r.u64()?;
                r.finish()?;
                Body::ReKey { previous_epoch }
            }
            MsgType::Error => {
                let mut r = Reader::new(payload, "frame");
                let code = r.u16()?;
                let detail = std::str::from_utf8(r.take(payload.len() - 2)?)
                    .map_err(|_| r.err("error detail is not utf-8"))?
                    .to_owned();
                Body::Error { code, detail }
            }
        };
        Ok(Self { epoch: h.epoch, session_id: h.session_id, body })
    }

    pub fn decode(frame: &[u8]) -> Result<Self> {
        if frame.len() < HEADER_LEN {
            return Err(Error::format("frame", format!("{} bytes is shorter than a header", frame.len())));
        }
        let h = Header::decode(&frame[..HEADER_LEN])?;
        Self::decode_payload(&h, &frame[HEADER_LEN..])
    }
}

/// Frame size of an inference message carrying an `n × d` matrix.
pub fn matrix_frame_len(n: usize, d: usize) -> usize {
    HEADER_LEN + MATRIX_PREFIX_LEN + 4 * n * d
}

#[cfg(test)]
mod tests {
    use super::*;
    use stip_core::{ModelConfig, PermutationSet};

    #[test]
    fn header_is_31_bytes() {
        let m = WireMessage::new(3, 9, Body::ReKey { previous_epoch: 2 });
        let b = m.encode().unwrap();
        assert_eq!(b.len(), HEADER_LEN + 8);
        assert_eq!(&b[..4], b"STIP");
        assert_eq!(b[6], MsgType::ReKey as u8);
        assert_eq!(u64::from_le_bytes(b[7..15].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(b[15..23].try_into().unwrap()), 9);
        assert_eq!(u64::from_le_bytes(b[23..31].try_into().unwrap()), 8);
    }

    #[test]
    fn request_size_is_header_plus_4nd() {
        let m = WireMessage::new(0, 0, Body::InferRequest(Matrix::zeros(5, 7)));
        assert_eq!(m.encode().unwrap().len(), matrix_frame_len(5, 7));
        assert_eq!(matrix_frame_len(5, 7), 31 + 8 + 4 * 35);
    }

    #[test]
    fn every_type_round_trips() {
        let cfg = ModelConfig::new(1, 4, 8, 5);
        let set = PermutationSet::generate(&cfg, 1).unwrap();
        let t = stip_core::transform::para_trans(&stip_core::ModelParams::random(&cfg, 2).unwrap(), &set).unwrap();
        let bodies = vec![
            Body::DeployModel(Box::new(t)),
            Body::DeployKeys(set.shared_part()),
            Body::InferRequest(Matrix::identity(3)),
            Body::InferResponse(Matrix::zeros(2, 5)),
            Body::ReKey { previous_epoch: 4 },
            Body::Error { code: codes::STALE_EPOCH, detail: "old π".into() },
        ];
        for body in bodies {
            let m = WireMessage::new(1, 77, body);
            let b = m.encode().unwrap();
            let back = WireMessage::decode(&b).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.encode().unwrap(), b);
        }
    }

    #[test]
    fn rejects_bad_frames() {
        let b = WireMessage::new(0, 0, Body::InferRequest(Matrix::identity(2))).encode().unwrap();
        assert!(WireMessage::decode(&b[..b.len() - 1]).is_err());
        let mut t = b.clone();
        t[6] = 42;
        assert!(WireMessage::decode(&t).is_err());
        let mut l = b.clone();
        l[23] ^= 1;
        assert!(WireMessage::decode(&l).is_err());
        assert!(WireMessage::decode(&b[..10]).is_err());
    }
}
