//! Message transports: an in-process channel, a length-prefixed TCP stream,
//! and wrappers for latency injection and transcript logging.

use std::io::{ErrorKind, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::thread;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::wire::{Header, WireMessage, HEADER_LEN};

use super::transcript::Transcript;

pub trait Transport: Send {
    /// Sends one frame; returns its size in bytes.
    fn send(&mut self, msg: &WireMessage) -> Result<usize>;
    fn recv(&mut self) -> Result<WireMessage>;
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn send(&mut self, msg: &WireMessage) -> Result<usize> {
        (**self).send(msg)
    }
    fn recv(&mut self) -> Result<WireMessage> {
        (**self).recv()
    }
}

pub struct InProcTransport {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

/// Two connected in-process endpoints.
pub fn inproc_pair() -> (InProcTransport, InProcTransport) {
    let (a_tx, b_rx) = channel();
    let (b_tx, a_rx) = channel();
    (InProcTransport { tx: a_tx, rx: a_rx }, InProcTransport { tx: b_tx, rx: b_rx })
}

impl Transport for InProcTransport {
    fn send(&mut self, msg: &WireMessage) -> Result<usize> {
        let frame = msg.encode()?;
        let n = frame.len();
        self.tx.send(frame).map_err(|_| Error::Closed)?;
        Ok(n)
    }

    fn recv(&mut self) -> Result<WireMessage> {
        let frame = self.rx.recv().map_err(|_| Error::Closed)?;
        WireMessage::decode(&frame)
    }
}

pub struct TcpTransport {
    stream: TcpStream,
}

impl TcpTransport {
    pub fn new(stream: TcpStream) -> Result<Self> {
        stream.set_nodelay(true)?;
        Ok(Self { stream })
    }

    pub fn connect(addr: &str) -> Result<Self> {
        Self::new(TcpStream::connect(addr)?)
    }
}

/// Binds `bind` (e.g. `127.0.0.1:0`), connects to it and returns both ends.
pub fn tcp_pair(bind: &str) -> Result<(TcpTransport, TcpTransport)> {
    let listener = TcpListener::bind(bind)?;
    let addr = listener.local_addr()?;
    let accept = thread::spawn(move || listener.accept().map(|(s, _)| s));
    let client = TcpStream::connect(addr)?;
    let server = accept.join().map_err(|_| Error::Protocol("accept thread panicked".into()))??;
    Ok((TcpTransport::new(client)?, TcpTransport::new(server)?))
}

fn eof_is_closed(e: std::io::Error) -> Error {
    match e.kind() {
        ErrorKind::UnexpectedEof | ErrorKind::ConnectionReset | ErrorKind::BrokenPipe => Error::Closed,
        _ => Error::Io(e),
    }
}

impl Transport for TcpTransport {
    fn send(&mut self, msg: &WireMessage) -> Result<usize> {
        let frame = msg.encode()?;
        self.stream.write_all(&frame).map_err(eof_is_closed)?;
        self.stream.flush()?;
        Ok(frame.len())
    }

    fn recv(&mut self) -> Result<WireMessage> {
        let mut head = [0u8; HEADER_LEN];
        self.stream.read_exact(&mut head).map_err(eof_is_closed)?;
        let h = Header::decode(&head)?;
        let len = usize::try_from(h.payload_len)
            .map_err(|_| Error::format("frame", "payload_len exceeds address space"))?;
        let mut payload = vec![0u8; len];
        self.stream.read_exact(&mut payload).map_err(eof_is_closed)?;
        WireMessage::decode_payload(&h, &payload)
    }
}

/// Sleeps for a fixed delay before every send.
pub struct Delayed<T> {
    inner: T,
    delay: Duration,
}

impl<T> Delayed<T> {
    pub fn new(inner: T, delay: Duration) -> Self {
        Self { inner, delay }
    }
}

impl<T: Transport> Transport for Delayed<T> {
    fn send(&mut self, msg: &WireMessage) -> Result<usize> {
        if !self.delay.is_zero() {
            thread::sleep(self.delay);
        }
        self.inner.send(msg)
    }
    fn recv(&mut self) -> Result<WireMessage> {
        self.inner.recv()
    }
}

/// Appends every outgoing message to a shared transcript.
pub struct Logged<T> {
    inner: T,
    direction: &'static str,
    transcript: Transcript,
}

impl<T> Logged<T> {
    pub fn new(inner: T, direction: &'static str, transcript: Transcript) -> Self {
        Self { inner, direction, transcript }
    }
}

impl<T: Transport> Transport for Logged<T> {
    fn send(&mut self, msg: &WireMessage) -> Result<usize> {
        let n = self.inner.send(msg)?;
        self.transcript.record(self.direction, msg, n);
        Ok(n)
    }
    fn recv(&mut self) -> Result<WireMessage> {
        self.inner.recv()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::Body;
    use stip_core::Matrix;

    fn exchange(a: &mut dyn Transport, b: &mut dyn Transport) {
        let m = WireMessage::new(2, 5, Body::InferRequest(Matrix::identity(3)));
        let n = a.send(&m).unwrap();
        assert_eq!(n, crate::wire::matrix_frame_len(3, 3));
        assert_eq!(b.recv().unwrap(), m);
        let r = WireMessage::new(2, 5, Body::Error { code: 1, detail: "x".into() });
        b.send(&r).unwrap();
        assert_eq!(a.recv().unwrap(), r);
    }

    #[test]
    fn inproc_exchange_and_close() {
        let (mut a, mut b) = inproc_pair();
        exchange(&mut a, &mut b);
        drop(a);
        assert!(matches!(b.recv(), Err(Error::Closed)));
    }

    #[test]
    fn tcp_exchange_and_close() {
        let (mut a, mut b) = tcp_pair("127.0.0.1:0").unwrap();
        exchange(&mut a, &mut b);
        drop(a);
        assert!(matches!(b.recv(), Err(Error::Closed)));
    }

    #[test]
    fn delay_applies_per_send() {
        let (a, mut b) = inproc_pair();
        let mut a = Delayed::new(a, Duration::from_millis(15));
        let t = std::time::Instant::now();
        a.send(&WireMessage::new(0, 0, Body::ReKey { previous_epoch: 0 })).unwrap();
        b.recv().unwrap();
        assert!(t.elapsed() >= Duration::from_millis(15));
    }
}
