use std::io::{BufReader, BufWriter};
use std::net::{IpAddr, Ipv4Addr, Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::frame::{read_frame, write_frame, Frame};
use super::{CommError, Transport};

const TAG_HELLO: u32 = 0xFFFF_0001;
const TAG_TABLE: u32 = 0xFFFF_0002;
const TAG_PEER: u32 = 0xFFFF_0003;

#[derive(Debug, Clone)]
pub struct TcpOptions {
    /// Address peers use to reach this rank.
    pub bind_host: IpAddr,
    pub recv_timeout: Duration,
    pub connect_timeout: Duration,
}

impl Default for TcpOptions {
    fn default() -> Self {
        Self {
            bind_host: IpAddr::V4(Ipv4Addr::LOCALHOST),
            recv_timeout: Duration::from_secs(30),
            connect_timeout: Duration::from_secs(30),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Hello {
    rank: usize,
    size: usize,
    addr: String,
}

/// Rendezvous point: collects every rank's listening address and hands the
/// full table back, after which ranks connect to each other directly.
pub struct Coordinator {
    listener: TcpListener,
}

impl Coordinator {
    pub fn bind(addr: impl std::net::ToSocketAddrs) -> Result<Self, CommError> {
        Ok(Self {
            listener: TcpListener::bind(addr)?,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener
            .local_addr()
            .expect("bound listener has an address")
    }

    /// Serves one rendezvous of `size` ranks, then returns.
    pub fn run(self, size: usize, timeout: Duration) -> Result<(), CommError> {
        let deadline = Instant::now() + timeout;
        let mut joined: Vec<Option<(TcpStream, String)>> = (0..size).map(|_| None).collect();
        let mut count = 0;
        while count < size {
            let mut stream = accept_until(&self.listener, deadline)?;
            stream.set_read_timeout(Some(remaining(deadline)?))?;
            let frame = read_frame(&mut stream)?.ok_or_else(|| {
                CommError::Rendezvous("worker hung up before saying hello".into())
            })?;
            if frame.tag != TAG_HELLO {
                return Err(CommError::Rendezvous(format!(
                    "unexpected tag {:#x} during rendezvous",
                    frame.tag
                )));
            }
            let hello: Hello = serde_json::from_slice(&frame.payload)
                .map_err(|e| CommError::Rendezvous(format!("bad hello: {e}")))?;
            if hello.size != size || hello.rank >= size {
                return Err(CommError::Rendezvous(format!(
                    "rank {} of {} does not fit a group of {size}",
                    hello.rank, hello.size
                )));
            }
            if joined[hello.rank].is_some() {
                return Err(CommError::Rendezvous(format!(
                    "rank {} joined twice",
                    hello.rank
                )));
            }
            joined[hello.rank] = Some((stream, hello.addr));
            count += 1;
        }
        let table: Vec<String> = joined
            .iter()
            .map(|j| j.as_ref().expect("all joined").1.clone())
            .collect();
        let payload = serde_json::to_vec(&table).expect("table serializes");
        for (stream, _) in joined.iter_mut().flatten() {
            write_frame(stream, TAG_TABLE, &payload)?;
        }
        Ok(())
    }

    pub fn spawn(self, size: usize, timeout: Duration) -> JoinHandle<Result<(), CommError>> {
        thread::spawn(move || self.run(size, timeout))
    }
}

type Inbox = Receiver<Result<Frame, CommError>>;

/// Fully connected group of TCP links, one per peer.
///
/// A reader thread per link drains incoming frames into a queue, so a rank
/// can send a large buffer to a peer that is itself busy sending.
pub struct TcpTransport {
    rank: usize,
    size: usize,
    writers: Vec<Option<BufWriter<TcpStream>>>,
    inboxes: Vec<Option<Inbox>>,
    dead: Vec<bool>,
    recv_timeout: Duration,
}

impl TcpTransport {
    /// Joins the group through the coordinator at `coordinator`.
    pub fn join(
        coordinator: SocketAddr,
        rank: usize,
        size: usize,
        opts: &TcpOptions,
    ) -> Result<Self, CommError> {
        if rank >= size {
            return Err(CommError::Rendezvous(format!(
                "rank {rank} outside group of {size}"
            )));
        }
        let deadline = Instant::now() + opts.connect_timeout;
        let listener = TcpListener::bind((opts.bind_host, 0))?;
        let my_addr = listener.local_addr()?;

        let mut coord = connect_until(coordinator, deadline)?;
        let hello = Hello {
            rank,
            size,
            addr: my_addr.to_string(),
        };
        write_frame(
            &mut coord,
            TAG_HELLO,
            &serde_json::to_vec(&hello).expect("hello serializes"),
        )?;
        coord.set_read_timeout(Some(remaining(deadline)?))?;
        let frame = read_frame(&mut coord)
            .map_err(|e| CommError::Rendezvous(format!("waiting for address table: {e}")))?
            .ok_or_else(|| {
                CommError::Rendezvous("coordinator closed before sending the table".into())
            })?;
        if frame.tag != TAG_TABLE {
            return Err(CommError::Rendezvous(format!(
                "unexpected tag {:#x} from coordinator",
                frame.tag
            )));
        }
        let table: Vec<String> = serde_json::from_slice(&frame.payload)
            .map_err(|e| CommError::Rendezvous(format!("bad address table: {e}")))?;
        if table.len() != size {
            return Err(CommError::Rendezvous(format!(
                "table has {} entries, expected {size}",
                table.len()
            )));
        }

        let mut streams: Vec<Option<TcpStream>> = (0..size).map(|_| None).collect();
        for (peer, addr) in table.iter().enumerate().take(rank) {
            let addr: SocketAddr = addr
                .parse()
                .map_err(|e| CommError::Rendezvous(format!("bad peer address {addr}: {e}")))?;
            let mut s = connect_until(addr, deadline)?;
            write_frame(&mut s, TAG_PEER, &(rank as u32).to_be_bytes())?;
            streams[peer] = Some(s);
        }
        for _ in rank + 1..size {
            let mut s = accept_until(&listener, deadline)?;
            s.set_read_timeout(Some(remaining(deadline)?))?;
            let frame = read_frame(&mut s)?.ok_or_else(|| {
                CommError::Rendezvous("peer hung up before identifying itself".into())
            })?;
            let peer = match (frame.tag, frame.payload.as_slice()) {
                (TAG_PEER, &[a, b, c, d]) => u32::from_be_bytes([a, b, c, d]) as usize,
                _ => return Err(CommError::Rendezvous("malformed peer hello".into())),
            };
            if peer <= rank || peer >= size || streams[peer].is_some() {
                return Err(CommError::Rendezvous(format!(
                    "unexpected connection from rank {peer}"
                )));
            }
            s.set_read_timeout(None)?;
            streams[peer] = Some(s);
        }
        Self::from_streams(rank, size, streams, opts.recv_timeout)
    }

    /// Builds a transport from already-connected streams (`streams[rank]` is `None`).
    pub fn from_streams(
        rank: usize,
        size: usize,
        streams: Vec<Option<TcpStream>>,
        recv_timeout: Duration,
    ) -> Result<Self, CommError> {
        assert_eq!(streams.len(), size, "one stream slot per rank");
        let mut writers = Vec::with_capacity(size);
        let mut inboxes = Vec::with_capacity(size);
        for (peer, stream) in streams.into_iter().enumerate() {
            match stream {
                Some(s) => {
                    s.set_nodelay(true)?;
                    s.set_read_timeout(None)?;
                    let reader = s.try_clone()?;
                    let (tx, rx) = mpsc::channel();
                    thread::Builder::new()
                        .name(format!("rank{rank}-from{peer}"))
                        .spawn(move || {
                            let mut reader = BufReader::with_capacity(1 << 16, reader);
                            loop {
                                let item = match read_frame(&mut reader) {
                                    Ok(Some(f)) => Ok(f),
                                    Ok(None) => Err(CommError::PeerClosed { peer }),
                                    Err(e) => Err(e),
                                };
                                let stop = item.is_err();
                                if tx.send(item).is_err() || stop {
                                    break;
                                }
                            }
                        })?;
                    writers.push(Some(BufWriter::with_capacity(1 << 16, s)));
                    inboxes.push(Some(rx));
                }
                None => {
                    writers.push(None);
                    inboxes.push(None);
                }
            }
        }
        Ok(Self {
            rank,
            size,
            writers,
            inboxes,
            dead: vec![false; size],
            recv_timeout,
        })
    }

    /// Rendezvous of `size` in-process ranks over loopback.
    pub fn local_group(size: usize, opts: &TcpOptions) -> Result<Vec<Self>, CommError> {
        let coord = Coordinator::bind((opts.bind_host, 0))?;
        let addr = coord.local_addr();
        let server = coord.spawn(size, opts.connect_timeout);
        let joins: Vec<_> = (0..size)
            .map(|rank| {
                let opts = opts.clone();
                thread::spawn(move || TcpTransport::join(addr, rank, size, &opts))
            })
            .collect();
        let mut out = Vec::with_capacity(size);
        for j in joins {
            out.push(
                j.join()
                    .map_err(|_| CommError::Rendezvous("join thread panicked".into()))??,
            );
        }
        server
            .join()
            .map_err(|_| CommError::Rendezvous("coordinator panicked".into()))??;
        Ok(out)
    }

    pub fn is_dead(&self, peer: usize) -> bool {
        self.dead.get(peer).copied().unwrap_or(true)
    }

    fn check_peer(&self, peer: usize) -> Result<(), CommError> {
        if peer >= self.size || peer == self.rank {
            return Err(CommError::InvalidPeer(peer));
        }
        if self.dead[peer] {
            return Err(CommError::PeerClosed { peer });
        }
        Ok(())
    }
}

impl Transport for TcpTransport {
    fn rank(&self) -> usize {
        self.rank
    }

    fn size(&self) -> usize {
        self.size
    }

    fn send(&mut self, peer: usize, tag: u32, payload: &[u8]) -> Result<(), CommError> {
        self.check_peer(peer)?;
        let w = self.writers[peer].as_mut().expect("peer link exists");
        if let Err(e) = write_frame(w, tag, payload) {
            self.dead[peer] = true;
            return Err(match e.kind() {
                std::io::ErrorKind::BrokenPipe | std::io::ErrorKind::ConnectionReset => {
                    CommError::PeerClosed { peer }
                }
                _ => e.into(),
            });
        }
        Ok(())
    }

    fn recv(&mut self, peer: usize, tag: u32) -> Result<Vec<u8>, CommError> {
        self.check_peer(peer)?;
        let rx = self.inboxes[peer].as_ref().expect("peer link exists");
        match rx.recv_timeout(self.recv_timeout) {
            Ok(Ok(frame)) if frame.tag == tag => Ok(frame.payload),
            Ok(Ok(frame)) => Err(CommError::TagMismatch {
                peer,
                expected: tag,
                got: frame.tag,
            }),
            Ok(Err(e)) => {
                self.dead[peer] = true;
                Err(e)
            }
            Err(RecvTimeoutError::Timeout) => Err(CommError::Timeout {
                peer,
                after_s: self.recv_timeout.as_secs_f64(),
            }),
            Err(RecvTimeoutError::Disconnected) => {
                self.dead[peer] = true;
                Err(CommError::PeerClosed { peer })
            }
        }
    }
}

impl Drop for TcpTransport {
    fn drop(&mut self) {
        for w in self.writers.iter_mut().flatten() {
            let _ = std::io::Write::flush(w);
            let _ = w.get_ref().shutdown(Shutdown::Both);
        }
    }
}

fn remaining(deadline: Instant) -> Result<Duration, CommError> {
    deadline
        .checked_duration_since(Instant::now())
        .filter(|d| !d.is_zero())
        .ok_or_else(|| CommError::Rendezvous("rendezvous deadline passed".into()))
}

fn connect_until(addr: SocketAddr, deadline: Instant) -> Result<TcpStream, CommError> {
    loop {
        let left = remaining(deadline)?;
        match TcpStream::connect_timeout(&addr, left.min(Duration::from_secs(2))) {
            Ok(s) => return Ok(s),
            Err(_) => thread::sleep(Duration::from_millis(20).min(left)),
        }
    }
}

fn accept_until(listener: &TcpListener, deadline: Instant) -> Result<TcpStream, CommError> {
    listener.set_nonblocking(true)?;
    let result: Result<TcpStream, CommError> = loop {
        match listener.accept() {
            Ok((s, _)) => break Ok(s),
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                let left = remaining(deadline)?;
                thread::sleep(Duration::from_millis(5).min(left));
            }
            Err(e) => break Err(e.into()),
        }
    };
    listener.set_nonblocking(false)?;
    let s = result?;
    s.set_nonblocking(false)?;
    Ok(s)
}
