//! Point-to-point links between the federator and each hospital.

use std::io::{BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc::{channel, Receiver, Sender};

use serde::{Deserialize, Serialize};

use super::message::ProtocolMessage;
use super::wire::{read_frame, write_frame};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportKind {
    /// In-process queues.
    #[default]
    Bus,
    /// Framed messages over loopback TCP.
    Tcp,
}

impl std::str::FromStr for TransportKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bus" => Ok(TransportKind::Bus),
            "tcp" => Ok(TransportKind::Tcp),
            _ => Err(Error::InvalidSpec(format!("unknown transport {s:?}, expected bus or tcp"))),
        }
    }
}

/// Blocking, ordered, reliable message link.
pub trait Link: Send {
    fn send(&mut self, msg: &ProtocolMessage) -> Result<()>;
    fn recv(&mut self) -> Result<ProtocolMessage>;
}

pub struct BusLink {
    tx: Sender<ProtocolMessage>,
    rx: Receiver<ProtocolMessage>,
}

/// Two connected ends of an in-process link.
pub fn bus_pair() -> (BusLink, BusLink) {
    let (atx, brx) = channel();
    let (btx, arx) = channel();
    (BusLink { tx: atx, rx: arx }, BusLink { tx: btx, rx: brx })
}

impl Link for BusLink {
    fn send(&mut self, msg: &ProtocolMessage) -> Result<()> {
        self.tx.send(msg.clone()).map_err(|_| Error::Transport("peer hung up".into()))
    }

    fn recv(&mut self) -> Result<ProtocolMessage> {
        self.rx.recv().map_err(|_| Error::Transport("peer hung up".into()))
    }
}

pub struct TcpLink {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl TcpLink {
    pub fn from_stream(stream: TcpStream) -> Result<Self> {
        stream.set_nodelay(true)?;
        let reader = BufReader::new(stream.try_clone()?);
        Ok(Self { reader, writer: BufWriter::new(stream) })
    }

    pub fn connect(addr: SocketAddr) -> Result<Self> {
        Self::from_stream(TcpStream::connect(addr)?)
    }
}

impl Link for TcpLink {
    fn send(&mut self, msg: &ProtocolMessage) -> Result<()> {
        write_frame(&mut self.writer, msg)
    }

    fn recv(&mut self) -> Result<ProtocolMessage> {
        read_frame(&mut self.reader)
    }
}

/// Loopback listener for the federator.
pub fn listen_local() -> Result<TcpListener> {
    Ok(TcpListener::bind(("127.0.0.1", 0))?)
}
