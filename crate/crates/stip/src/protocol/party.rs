//! The three parties as single-threaded state machines.
//!
//! - P1 (developer) owns `θ` and the full key set `Π`.
//! - P2 (server) holds only the transformed model `θ'`.
//! - P3 (data owner) holds `{π, π_c}` and the embedding table.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use stip_core::model::{greedy_decode_step, model_forward};
use stip_core::numerics::rng::derive_seed;
use stip_core::numerics::apply_col_perm;
use stip_core::transform::{para_trans, recover_output};
use stip_core::{EmbeddingTable, Mask, Matrix, ModelParams, PermutationSet, SharedKeys, TransformedModel};

use crate::error::{Error, Result};
use crate::format::{encode_model, encode_transformed, KeyFile};
use crate::wire::{codes, Body, WireMessage};

use super::transport::Transport;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum PartyRole {
    Developer,
    Server,
    DataOwner,
}

/// What a party has in memory, for checking the knowledge split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Knowledge {
    OriginalParams,
    TransformedParams,
    Pi,
    PiC,
    LayerKeys,
    EmbeddingTable,
}

pub trait Party {
    fn role(&self) -> PartyRole;
    fn knowledge(&self) -> BTreeSet<Knowledge>;
    /// Everything the party holds, serialized.
    fn state_bytes(&self) -> Result<Vec<u8>>;
}

fn expect_epoch(msg: &WireMessage, current: u64) -> Result<()> {
    if msg.epoch != current {
        return Err(Error::StaleEpoch { got: msg.epoch, current });
    }
    Ok(())
}

fn remote(body: &Body) -> Error {
    match body {
        Body::Error { code, detail } => Error::Remote { code: *code, detail: detail.clone() },
        other => Error::Protocol(format!("unexpected {}", other.msg_type())),
    }
}

pub struct Developer {
    params: ModelParams,
    set: PermutationSet,
    session_id: u64,
}

impl Developer {
    /// Generates `Π`, transforms the model and returns the two deployment
    /// messages: `θ'` for P2 and `{π, π_c}` for P3.
    pub fn p1_initialize(params: ModelParams, seed: u64) -> Result<(Self, WireMessage, WireMessage)> {
        let set = PermutationSet::generate(&params.config, seed)?.with_epoch(1);
        let session_id = derive_seed(seed, u64::MAX);
        Self::initialize_with(params, set, session_id)
    }

    /// Initialization with a caller-chosen key set (identity sets in tests).
    pub fn initialize_with(
        params: ModelParams,
        set: PermutationSet,
        session_id: u64,
    ) -> Result<(Self, WireMessage, WireMessage)> {
        params.validate()?;
        set.validate_for(&params.config)?;
        let dev = Self { params, set, session_id };
        let (a, b) = dev.deploy()?;
        Ok((dev, a, b))
    }

    fn deploy(&self) -> Result<(WireMessage, WireMessage)> {
        let t = para_trans(&self.params, &self.set)?;
        let e = self.set.epoch;
        Ok((
            WireMessage::new(e, self.session_id, Body::DeployModel(Box::new(t))),
            WireMessage::new(e, self.session_id, Body::DeployKeys(self.set.shared_part())),
        ))
    }

    /// Fresh `Π` at `epoch + 1` and the matching redeployment.
    pub fn p1_rekey(&mut self, seed: u64) -> Result<(WireMessage, WireMessage)> {
        let epoch = self.set.epoch + 1;
        self.set = PermutationSet::generate(&self.params.config, seed)?.with_epoch(epoch);
        self.deploy()
    }

    /// `ReKey` notice announcing the current epoch.
    pub fn rekey_notice(&self) -> WireMessage {
        WireMessage::new(
            self.set.epoch,
            self.session_id,
            Body::ReKey { previous_epoch: self.set.epoch.saturating_sub(1) },
        )
    }

    /// P1 only ever sends; inference traffic must never reach it.
    pub fn handle(&mut self, msg: &WireMessage) -> Result<()> {
        Err(Error::Protocol(format!("developer does not accept {}", msg.msg_type())))
    }

    pub fn epoch(&self) -> u64 {
        self.set.epoch
    }

    pub fn session_id(&self) -> u64 {
        self.session_id
    }

    pub fn keys(&self) -> &PermutationSet {
        &self.set
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }
}

impl Party for Developer {
    fn role(&self) -> PartyRole {
        PartyRole::Developer
    }

    fn knowledge(&self) -> BTreeSet<Knowledge> {
        use Knowledge::*;
        [OriginalParams, Pi, PiC, LayerKeys, EmbeddingTable].into()
    }

    fn state_bytes(&self) -> Result<Vec<u8>> {
        let mut out = encode_model(&self.params, self.set.epoch)?;
        out.extend(KeyFile::from_set(&self.set)?.encode()?);
        Ok(out)
    }
}

#[derive(Default)]
pub struct Server {
    model: Option<TransformedModel>,
    epoch: u64,
    busy: Duration,
}

impl Server {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Time spent in the forward pass so far.
    pub fn compute_time(&self) -> Duration {
        self.busy
    }

    pub fn model(&self) -> Option<&TransformedModel> {
        self.model.as_ref()
    }

    /// Runs `θ'` unchanged on the permuted input.
    pub fn p2_serve(&mut self, req: &WireMessage) -> Result<WireMessage> {
        let model = self.model.as_ref().ok_or(Error::NotInitialized("server model"))?;
        expect_epoch(req, self.epoch)?;
        let Body::InferRequest(x) = &req.body else {
            return Err(Error::Protocol(format!("server cannot serve {}", req.msg_type())));
        };
        let t = Instant::now();
        let mask = Mask::for_kind(model.params.config.mask_kind, x.rows(), 0);
        let o = model_forward(x, &model.params, &mask)?;
        self.busy += t.elapsed();
        Ok(WireMessage::new(self.epoch, req.session_id, Body::InferResponse(o)))
    }

    /// Applies a message; returns the reply, if any. Failures become
    /// `Error` frames so the session survives them.
    pub fn handle(&mut self, msg: &WireMessage) -> Option<WireMessage> {
        let fail = |code, e: Error| Some(WireMessage::new(msg.epoch, msg.session_id, Body::Error { code, detail: e.to_string() }));
        match &msg.body {
            Body::DeployModel(t) => {
                if msg.epoch <= self.epoch && self.model.is_some() || t.epoch != msg.epoch {
                    return fail(codes::STALE_EPOCH, Error::StaleEpoch { got: msg.epoch, current: self.epoch });
                }
                self.model = Some((**t).clone());
                self.epoch = msg.epoch;
                None
            }
            Body::ReKey { .. } => {
                if msg.epoch > self.epoch {
                    self.model = None;
                    self.epoch = msg.epoch;
                }
                None
            }
            Body::InferRequest(_) => match self.p2_serve(msg) {
                Ok(r) => Some(r),
                Err(e @ Error::StaleEpoch { .. }) => fail(codes::STALE_EPOCH, e),
                Err(e @ Error::NotInitialized(_)) => fail(codes::NOT_INITIALIZED, e),
                Err(e) => fail(codes::INFERENCE_FAILED, e),
            },
            _ => fail(codes::UNEXPECTED, Error::Protocol(format!("server does not accept {}", msg.msg_type()))),
        }
    }
}

impl Party for Server {
    fn role(&self) -> PartyRole {
        PartyRole::Server
    }

    fn knowledge(&self) -> BTreeSet<Knowledge> {
        match self.model {
            Some(_) => [Knowledge::TransformedParams, Knowledge::EmbeddingTable].into(),
            None => BTreeSet::new(),
        }
    }

    fn state_bytes(&self) -> Result<Vec<u8>> {
        match &self.model {
            Some(t) => encode_transformed(t),
            None => Ok(Vec::new()),
        }
    }
}

/// Timings of one generation run on the data-owner side.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GenerationTrace {
    pub tokens: Vec<usize>,
    /// Embedding, `xπ`, `o'π_cᵀ` and decoding.
    pub device: Duration,
    /// Wall time of each request/response round.
    pub rounds: Vec<Duration>,
}

pub struct DataOwner {
    keys: Option<SharedKeys>,
    table: EmbeddingTable,
    session_id: u64,
}

impl DataOwner {
    /// The embedding table is provisioned out of band.
    pub fn new(table: EmbeddingTable) -> Self {
        Self { keys: None, table, session_id: 0 }
    }

    pub fn handle(&mut self, msg: &WireMessage) -> Result<()> {
        match &msg.body {
            Body::DeployKeys(k) => {
                if k.pi.dim() != self.table.d_model() {
                    return Err(Error::Protocol(format!(
                        "pi has dim {}, embeddings have {}",
                        k.pi.dim(),
                        self.table.d_model()
                    )));
                }
                if let Some(old) = &self.keys {
                    if msg.epoch <= old.epoch {
                        return Err(Error::StaleEpoch { got: msg.epoch, current: old.epoch });
                    }
                }
                self.keys = Some(SharedKeys { epoch: msg.epoch, ..k.clone() });
                self.session_id = msg.session_id;
                Ok(())
            }
            Body::ReKey { .. } => {
                if self.keys.as_ref().is_some_and(|k| msg.epoch > k.epoch) {
                    self.keys = None;
                }
                Ok(())
            }
            other => Err(remote(other)),
        }
    }

    fn keys(&self) -> Result<&SharedKeys> {
        self.keys.as_ref().ok_or(Error::NotInitialized("data owner keys"))
    }

    pub fn epoch(&self) -> Option<u64> {
        self.keys.as_ref().map(|k| k.epoch)
    }

    /// Embeds on-device and sends `xπ`.
    pub fn p3_infer_request(&self, token_ids: &[usize]) -> Result<WireMessage> {
        let k = self.keys()?;
        let x = apply_col_perm(&self.table.embed(token_ids)?, &k.pi)?;
        Ok(WireMessage::new(k.epoch, self.session_id, Body::InferRequest(x)))
    }

    /// `o = o' π_cᵀ`.
    pub fn p3_recover(&self, resp: &WireMessage) -> Result<Matrix> {
        let k = self.keys()?;
        let Body::InferResponse(o) = &resp.body else {
            return Err(remote(&resp.body));
        };
        expect_epoch(resp, k.epoch)?;
        Ok(recover_output(o, &k.pi_c)?)
    }

    /// Greedy autoregressive generation: one request/response round per
    /// token, re-sending the whole sequence each time.
    pub fn p3_generate(
        &self,
        prompt: &[usize],
        max_tokens: usize,
        transport: &mut dyn Transport,
    ) -> Result<Vec<usize>> {
        self.generate_traced(prompt, max_tokens, transport).map(|t| t.tokens)
    }

    pub fn generate_traced(
        &self,
        prompt: &[usize],
        max_tokens: usize,
        transport: &mut dyn Transport,
    ) -> Result<GenerationTrace> {
        let mut trace = GenerationTrace::default();
        let mut seq = prompt.to_vec();
        for _ in 0..max_tokens {
            let round = Instant::now();
            let step = (|| {
                let t = Instant::now();
                let req = self.p3_infer_request(&seq)?;
                let mut device = t.elapsed();
                transport.send(&req)?;
                let resp = transport.recv()?;
                let t = Instant::now();
                let tok = greedy_decode_step(&self.p3_recover(&resp)?);
                device += t.elapsed();
                Ok::<_, Error>((tok, device))
            })();
            match step {
                Ok((tok, device)) => {
                    trace.device += device;
                    trace.rounds.push(round.elapsed());
                    trace.tokens.push(tok);
                    seq.push(tok);
                }
                Err(e) => return Err(Error::Aborted { tokens: trace.tokens, source: Box::new(e) }),
            }
        }
        Ok(trace)
    }
}

impl Party for DataOwner {
    fn role(&self) -> PartyRole {
        PartyRole::DataOwner
    }

    fn knowledge(&self) -> BTreeSet<Knowledge> {
        let mut k = BTreeSet::from([Knowledge::EmbeddingTable]);
        if self.keys.is_some() {
            k.extend([Knowledge::Pi, Knowledge::PiC]);
        }
        k
    }

    fn state_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        if let Some(k) = &self.keys {
            out.extend(KeyFile::from_shared(k).encode()?);
        }
        out.extend(self.table.table().data().iter().flat_map(|v| v.to_le_bytes()));
        Ok(out)
    }
}
