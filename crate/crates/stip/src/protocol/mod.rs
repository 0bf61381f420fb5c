//! Developer / server / data-owner state machines and their transports.

mod party;
mod sim;
mod transcript;
mod transport;

pub use party::{DataOwner, Developer, GenerationTrace, Knowledge, Party, PartyRole, Server};
pub use sim::{connect, simulate, SimConfig, SimOutcome, TransportKind};
pub use transcript::{Transcript, TranscriptEntry};
pub use transport::{inproc_pair, tcp_pair, Delayed, InProcTransport, Logged, TcpTransport, Transport};
