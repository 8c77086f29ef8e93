//! Vision packages: one snapshot of the six opponent robot positions.
//!
//! Both the log format (`.vpl`) and the UDP wire format carry one JSON object
//! per package:
//!
//! ```text
//! {"seq":0,"t":0.0,"robots":[{"id":1,"x":1500.0,"y":2100.0}, ...]}
//! ```
//!
//! Log files hold one object per line. A blank line marks the end of a
//! simulator draw; plain readers skip it, episodic trainers use it to reset.

use std::io::{self, BufRead, ErrorKind, Write};
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ROBOTS;

/// Upper bound on one encoded datagram.
pub const MAX_DATAGRAM: usize = 1400;

pub const DEFAULT_UDP_PORT: u16 = 10020;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotObservation {
    pub id: u8,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VisionPackage {
    pub seq: u64,
    #[serde(rename = "t")]
    pub timestamp: f64,
    pub robots: Vec<RobotObservation>,
}

impl VisionPackage {
    /// Builds a package from positions listed in robot-id order (ids 1..=6).
    pub fn from_positions(seq: u64, timestamp: f64, positions: &[(f64, f64)]) -> Result<Self> {
        let robots = positions
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| RobotObservation {
                id: i as u8 + 1,
                x,
                y,
            })
            .collect();
        let pkg = VisionPackage {
            seq,
            timestamp,
            robots,
        };
        pkg.validate()?;
        Ok(pkg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.timestamp >= 0.0 && self.timestamp.is_finite()) {
            return Err(Error::validation(format!(
                "timestamp must be finite and non-negative, got {}",
                self.timestamp
            )));
        }
        if self.robots.len() != ROBOTS {
            return Err(Error::validation(format!(
                "package {} has {} robots, expected {ROBOTS}",
                self.seq,
                self.robots.len()
            )));
        }
        let mut seen = [false; ROBOTS];
        for r in &self.robots {
            let slot = (r.id as usize)
                .checked_sub(1)
                .filter(|&s| s < ROBOTS)
                .ok_or_else(|| Error::validation(format!("robot id {} not in 1..=6", r.id)))?;
            if std::mem::replace(&mut seen[slot], true) {
                return Err(Error::validation(format!("duplicate robot id {}", r.id)));
            }
            if !r.x.is_finite() || !r.y.is_finite() {
                return Err(Error::validation(format!(
                    "robot {} has non-finite coordinates",
                    r.id
                )));
            }
        }
        Ok(())
    }

    /// Raw positions ordered by robot id. Assumes a validated package.
    pub fn positions(&self) -> [(f64, f64); ROBOTS] {
        let mut out = [(0.0, 0.0); ROBOTS];
        for r in &self.robots {
            out[r.id as usize - 1] = (r.x, r.y);
        }
        out
    }

    /// Single-line JSON encoding without the trailing newline.
    pub fn encode(&self) -> Result<String> {
        self.validate()?;
        Ok(serde_json::to_string(self).expect("package serialization is infallible"))
    }

    /// Parses one encoded package; `line` is only used in error messages.
    pub fn decode(bytes: &[u8], line: usize) -> Result<Self> {
        let parse_err = |message: String| Error::Parse { line, message };
        let text = std::str::from_utf8(bytes).map_err(|e| parse_err(e.to_string()))?;
        let pkg: VisionPackage =
            serde_json::from_str(text.trim_end()).map_err(|e| parse_err(e.to_string()))?;
        pkg.validate().map_err(|e| match e {
            Error::Validation(m) => parse_err(m),
            other => other,
        })?;
        Ok(pkg)
    }
}

/// Appends one package as a single log line.
pub fn write_package<W: Write>(pkg: &VisionPackage, sink: &mut W) -> Result<()> {
    let mut line = pkg.encode()?;
    line.push('\n');
    sink.write_all(line.as_bytes())?;
    Ok(())
}

/// Writes the blank separator line that closes a simulator draw.
pub fn write_break<W: Write>(sink: &mut W) -> Result<()> {
    sink.write_all(b"\n")?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    Package(VisionPackage),
    /// Blank line between simulator draws.
    Break,
    End,
}

/// Line-oriented reader over a `.vpl` stream.
pub struct PackageReader<R> {
    source: R,
    line: usize,
    buf: Vec<u8>,
}

impl<R: BufRead> PackageReader<R> {
    pub fn new(source: R) -> Self {
        PackageReader {
            source,
            line: 0,
            buf: Vec::new(),
        }
    }

    /// Number of lines consumed so far.
    pub fn line(&self) -> usize {
        self.line
    }

    pub fn next_record(&mut self) -> Result<Record> {
        self.buf.clear();
        if self.source.read_until(b'\n', &mut self.buf)? == 0 {
            return Ok(Record::End);
        }
        self.line += 1;
        let body = trim_line(&self.buf);
        if body.iter().all(u8::is_ascii_whitespace) {
            return Ok(Record::Break);
        }
        VisionPackage::decode(body, self.line).map(Record::Package)
    }

    /// Next package, skipping draw separators; `None` at end of stream.
    pub fn read_package(&mut self) -> Result<Option<VisionPackage>> {
        loop {
            match self.next_record()? {
                Record::Package(p) => return Ok(Some(p)),
                Record::Break => continue,
                Record::End => return Ok(None),
            }
        }
    }
}

impl<R: BufRead> Iterator for PackageReader<R> {
    type Item = Result<VisionPackage>;

    fn next(&mut self) -> Option<Self::Item> {
        self.read_package().transpose()
    }
}

fn trim_line(buf: &[u8]) -> &[u8] {
    let buf = buf.strip_suffix(b"\n").unwrap_or(buf);
    buf.strip_suffix(b"\r").unwrap_or(buf)
}

/// Convenience wrapper around [`PackageReader::read_package`].
pub fn read_package<R: BufRead>(source: &mut PackageReader<R>) -> Result<Option<VisionPackage>> {
    source.read_package()
}

pub struct DatagramSender {
    socket: UdpSocket,
    target: SocketAddr,
}

impl DatagramSender {
    pub fn connect(endpoint: impl ToSocketAddrs) -> Result<Self> {
        let target = endpoint.to_socket_addrs()?.next().ok_or_else(|| {
            Error::Io(io::Error::new(
                ErrorKind::AddrNotAvailable,
                "endpoint resolved to no address",
            ))
        })?;
        let bind: SocketAddr = if target.is_ipv4() {
            "0.0.0.0:0".parse().unwrap()
        } else {
            "[::]:0".parse().unwrap()
        };
        let socket = UdpSocket::bind(bind)?;
        Ok(DatagramSender { socket, target })
    }

    pub fn send(&self, pkg: &VisionPackage) -> Result<()> {
        let body = pkg.encode()?;
        if body.len() > MAX_DATAGRAM {
            return Err(Error::DatagramTooLarge {
                size: body.len(),
                limit: MAX_DATAGRAM,
            });
        }
        self.socket.send_to(body.as_bytes(), self.target)?;
        Ok(())
    }
}

/// Sends one package as a single datagram from an ephemeral socket.
pub fn send_datagram(pkg: &VisionPackage, endpoint: impl ToSocketAddrs) -> Result<()> {
    DatagramSender::connect(endpoint)?.send(pkg)
}

/// Receiving end of the live feed. Garbage datagrams and stale sequence
/// numbers are dropped; a read timeout ends the stream.
pub struct DatagramReceiver {
    socket: UdpSocket,
    last_seq: Option<u64>,
    received: usize,
    malformed: u64,
    stale: u64,
}

impl DatagramReceiver {
    pub fn new(socket: UdpSocket) -> Self {
        DatagramReceiver {
            socket,
            last_seq: None,
            received: 0,
            malformed: 0,
            stale: 0,
        }
    }

    pub fn bind(addr: impl ToSocketAddrs) -> Result<Self> {
        Ok(Self::new(UdpSocket::bind(addr)?))
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.socket.local_addr()?)
    }

    pub fn socket(&self) -> &UdpSocket {
        &self.socket
    }

    pub fn malformed(&self) -> u64 {
        self.malformed
    }

    pub fn stale(&self) -> u64 {
        self.stale
    }

    /// Blocks for the next acceptable package. `None` once the socket times
    /// out or is shut down.
    pub fn recv(&mut self) -> Result<Option<VisionPackage>> {
        let mut buf = [0u8; 2048];
        loop {
            let n = match self.socket.recv(&mut buf) {
                Ok(n) => n,
                Err(e)
                    if matches!(
                        e.kind(),
                        ErrorKind::WouldBlock | ErrorKind::TimedOut | ErrorKind::NotConnected
                    ) =>
                {
                    return Ok(None)
                }
                Err(e) => return Err(e.into()),
            };
            self.received += 1;
            let pkg = match VisionPackage::decode(&buf[..n], self.received) {
                Ok(p) => p,
                Err(e) => {
                    self.malformed += 1;
                    log::warn!("dropping malformed datagram: {e}");
                    continue;
                }
            };
            if self.last_seq.is_some_and(|last| pkg.seq <= last) {
                self.stale += 1;
                log::warn!(
                    "dropping stale package seq {} (last {})",
                    pkg.seq,
                    self.last_seq.unwrap()
                );
                continue;
            }
            self.last_seq = Some(pkg.seq);
            return Ok(Some(pkg));
        }
    }
}

/// Receives one package from a bound socket, without ordering state.
pub fn recv_datagram(socket: &UdpSocket) -> Result<Option<VisionPackage>> {
    let socket = socket.try_clone()?;
    DatagramReceiver::new(socket).recv()
}
