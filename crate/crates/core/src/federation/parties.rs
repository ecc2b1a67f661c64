//! Spawning hospital actors and wiring them to the federator.

use std::collections::BTreeMap;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use super::message::{MessageKind, ProtocolMessage};
use super::transcript::{Direction, Transcript};
use super::transport::{bus_pair, listen_local, Link, TcpLink, TransportKind};
use crate::{Error, Result};

const ACCEPT_TIMEOUT: Duration = Duration::from_secs(60);

pub(crate) type Job<R> = Box<dyn FnOnce(Box<dyn Link>) -> Result<R> + Send>;

/// Federator's view of the running hospital actors.
pub(crate) struct Parties<R> {
    pub ids: Vec<u32>,
    links: BTreeMap<u32, Box<dyn Link>>,
    /// First frames read while identifying TCP peers.
    pending: BTreeMap<u32, ProtocolMessage>,
    handles: Vec<(u32, JoinHandle<Result<R>>)>,
    pub transcript: Transcript,
    pub federator: u32,
}

impl<R: Send + 'static> Parties<R> {
    /// Starts one thread per job. Every job must open with a `LandmarkSeed`
    /// message so that TCP peers can be identified.
    pub fn spawn(federator: u32, jobs: Vec<(u32, Job<R>)>, transport: TransportKind) -> Result<Self> {
        let ids: Vec<u32> = jobs.iter().map(|(id, _)| *id).collect();
        let mut links: BTreeMap<u32, Box<dyn Link>> = BTreeMap::new();
        let mut pending = BTreeMap::new();
        let mut handles = Vec::new();
        match transport {
            TransportKind::Bus => {
                for (id, job) in jobs {
                    let (server, client) = bus_pair();
                    handles.push((id, std::thread::spawn(move || job(Box::new(client)))));
                    links.insert(id, Box::new(server));
                }
            }
            TransportKind::Tcp => {
                let listener = listen_local()?;
                let addr = listener.local_addr()?;
                for (id, job) in jobs {
                    handles.push((
                        id,
                        std::thread::spawn(move || {
                            let link = TcpLink::connect(addr)?;
                            job(Box::new(link))
                        }),
                    ));
                }
                listener.set_nonblocking(true)?;
                let deadline = Instant::now() + ACCEPT_TIMEOUT;
                while links.len() < ids.len() {
                    match listener.accept() {
                        Ok((stream, _)) => {
                            stream.set_nonblocking(false)?;
                            let mut link = TcpLink::from_stream(stream)?;
                            let first = link.recv()?;
                            if first.kind != MessageKind::LandmarkSeed || !ids.contains(&first.sender) || links.contains_key(&first.sender) {
                                return Err(Error::Protocol(format!("unexpected opening {} from {}", first.kind, first.sender)));
                            }
                            links.insert(first.sender, Box::new(link));
                            pending.insert(first.sender, first);
                        }
                        Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                            if let Some((id, _)) = handles.iter().find(|(id, h)| h.is_finished() && !links.contains_key(id)) {
                                return Err(Error::Transport(format!("hospital {id} exited before connecting")));
                            }
                            if Instant::now() > deadline {
                                return Err(Error::Transport("timed out waiting for hospitals".into()));
                            }
                            std::thread::sleep(Duration::from_millis(1));
                        }
                        Err(e) => return Err(e.into()),
                    }
                }
            }
        }
        let mut ids = ids;
        ids.sort_unstable();
        Ok(Self { ids, links, pending, handles, transcript: Transcript::default(), federator })
    }

    pub fn recv(&mut self, id: u32) -> Result<ProtocolMessage> {
        let msg = match self.pending.remove(&id) {
            Some(m) => m,
            None => self.links.get_mut(&id).ok_or_else(|| Error::Protocol(format!("no link to {id}")))?.recv()?,
        };
        self.transcript.record(Direction::In, id, &msg);
        Ok(msg)
    }

    pub fn send(&mut self, id: u32, msg: &ProtocolMessage) -> Result<()> {
        self.transcript.record(Direction::Out, id, msg);
        self.links.get_mut(&id).ok_or_else(|| Error::Protocol(format!("no link to {id}")))?.send(msg)
    }

    pub fn broadcast(&mut self, msg: &ProtocolMessage) -> Result<()> {
        for id in self.ids.clone() {
            self.send(id, msg)?;
        }
        Ok(())
    }

    /// Tells everybody to stop without waiting for them.
    pub fn abort(&mut self, epoch: u64) {
        let stop = ProtocolMessage::stop(self.federator, epoch, true);
        for id in self.ids.clone() {
            let _ = self.send(id, &stop);
        }
        self.links.clear();
        for (_, h) in self.handles.drain(..) {
            let _ = h.join();
        }
    }

    /// Waits for every actor and returns their results in id order.
    pub fn join(&mut self) -> Result<Vec<(u32, R)>> {
        let mut out = Vec::new();
        let mut first_err = None;
        for (id, h) in self.handles.drain(..) {
            match h.join() {
                Ok(Ok(r)) => out.push((id, r)),
                Ok(Err(e)) => {
                    first_err.get_or_insert(e);
                }
                Err(_) => {
                    first_err.get_or_insert(Error::Protocol(format!("hospital {id} panicked")));
                }
            }
        }
        self.links.clear();
        if let Some(e) = first_err {
            return Err(e);
        }
        out.sort_by_key(|(id, _)| *id);
        Ok(out)
    }
}
