//! Three-party simulation: each party on its own thread, talking only
//! through transports.

use std::thread;
use std::time::{Duration, Instant};

use stip_core::model::generate_local;
use stip_core::ModelParams;

use crate::error::{Error, Result};

use super::party::{DataOwner, Developer, Server};
use super::transcript::Transcript;
use super::transport::{inproc_pair, tcp_pair, Delayed, Logged, Transport};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TransportKind {
    InProc,
    /// Loopback socket pairs bound at this address (`host:port`, port 0 for
    /// any free port).
    Tcp(String),
}

impl TransportKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "inproc" => Ok(TransportKind::InProc),
            "tcp" | "socket" => Ok(TransportKind::Tcp("127.0.0.1:0".into())),
            addr if addr.contains(':') => Ok(TransportKind::Tcp(addr.trim_start_matches("socket:").into())),
            other => Err(Error::Config(format!("unknown transport {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TransportKind::InProc => "inproc",
            TransportKind::Tcp(_) => "tcp",
        }
    }
}

type Endpoint = Box<dyn Transport>;

pub fn connect(kind: &TransportKind) -> Result<(Endpoint, Endpoint)> {
    Ok(match kind {
        TransportKind::InProc => {
            let (a, b) = inproc_pair();
            (Box::new(a), Box::new(b))
        }
        TransportKind::Tcp(addr) => {
            let (a, b) = tcp_pair(addr)?;
            (Box::new(a), Box::new(b))
        }
    })
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub transport: TransportKind,
    /// Injected one-way delay per message.
    pub latency: Duration,
    pub prompts: Vec<Vec<usize>>,
    pub max_tokens: usize,
    pub key_seed: u64,
}

#[derive(Clone, Debug)]
pub struct SimOutcome {
    pub streams: Vec<Vec<usize>>,
    /// Unprotected greedy generation on the original model.
    pub local: Vec<Vec<usize>>,
    pub transcript: Transcript,
    pub epoch: u64,
    pub total: Duration,
    pub device: Duration,
    pub cloud: Duration,
    /// Wall time of each request/response round, all prompts in order.
    pub rounds: Vec<Duration>,
}

impl SimOutcome {
    pub fn matches_local(&self) -> bool {
        self.streams == self.local
    }

    pub fn tokens(&self) -> usize {
        self.streams.iter().map(Vec::len).sum()
    }

    pub fn inference_messages(&self) -> usize {
        self.transcript.count("infer_request") + self.transcript.count("infer_response")
    }

    /// Whatever of the wall time is neither device nor cloud compute.
    pub fn communication(&self) -> Duration {
        self.total.saturating_sub(self.device + self.cloud)
    }
}

fn join<T>(h: thread::JoinHandle<Result<T>>, who: &str) -> Result<T> {
    h.join().map_err(|_| Error::Protocol(format!("{who} thread panicked")))?
        .map_err(|e| match e {
            Error::Protocol(m) => Error::Protocol(format!("{who}: {m}")),
            other => other,
        })
}

/// Runs initialization and autoregressive generation for every prompt.
pub fn simulate(params: &ModelParams, cfg: &SimConfig) -> Result<SimOutcome> {
    let transcript = Transcript::new();
    let wrap = |e: Endpoint, dir: &'static str| -> Endpoint {
        Box::new(Logged::new(Delayed::new(e, cfg.latency), dir, transcript.clone()))
    };
    let (p1_to_p2, p2_from_p1) = connect(&cfg.transport)?;
    let (p1_to_p3, p3_from_p1) = connect(&cfg.transport)?;
    let (p3_to_p2, p2_from_p3) = connect(&cfg.transport)?;
    let (mut p1_to_p2, mut p1_to_p3) = (wrap(p1_to_p2, "P1->P2"), wrap(p1_to_p3, "P1->P3"));
    let (mut p2_from_p1, mut p2_from_p3) = (p2_from_p1, wrap(p2_from_p3, "P2->P3"));
    let (mut p3_from_p1, mut p3_to_p2) = (p3_from_p1, wrap(p3_to_p2, "P3->P2"));

    let start = Instant::now();
    let server = thread::spawn(move || -> Result<Duration> {
        let mut srv = Server::new();
        let deploy = p2_from_p1.recv()?;
        if let Some(reply) = srv.handle(&deploy) {
            return Err(Error::Protocol(format!("deployment refused: {:?}", reply.body)));
        }
        loop {
            let msg = match p2_from_p3.recv() {
                Ok(m) => m,
                Err(Error::Closed) => return Ok(srv.compute_time()),
                Err(e) => return Err(e),
            };
            if let Some(reply) = srv.handle(&msg) {
                p2_from_p3.send(&reply)?;
            }
        }
    });
    let table = params.embedding.clone();
    let prompts = cfg.prompts.clone();
    let max_tokens = cfg.max_tokens;
    let owner = thread::spawn(move || -> Result<(Vec<Vec<usize>>, Duration, Vec<Duration>)> {
        let mut own = DataOwner::new(table);
        own.handle(&p3_from_p1.recv()?)?;
        let (mut streams, mut device, mut rounds) = (Vec::new(), Duration::ZERO, Vec::new());
        for p in &prompts {
            let t = own.generate_traced(p, max_tokens, &mut p3_to_p2)?;
            device += t.device;
            rounds.extend(t.rounds);
            streams.push(t.tokens);
        }
        Ok((streams, device, rounds))
    });

    let (dev, to_p2, to_p3) = Developer::p1_initialize(params.clone(), cfg.key_seed)?;
    p1_to_p2.send(&to_p2)?;
    p1_to_p3.send(&to_p3)?;
    let (streams, device, rounds) = join(owner, "data owner")?;
    let total = start.elapsed();
    let cloud = join(server, "server")?;

    let local = cfg
        .prompts
        .iter()
        .map(|p| generate_local(params, p, cfg.max_tokens, 0))
        .collect::<stip_core::Result<_>>()?;
    Ok(SimOutcome { streams, local, transcript, epoch: dev.epoch(), total, device, cloud, rounds })
}
