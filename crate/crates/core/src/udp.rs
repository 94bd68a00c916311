//! Live datagram transport: an echo server and a paced sender that drives the
//! same [`SenderSession`] as the simulator.

use std::collections::HashSet;
use std::io;
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::session::{EpochRecord, SenderSession, SessionConfig, SessionCounters, SessionError};
use crate::time::{Timestamp, NANOS_PER_MS};

pub const MAGIC: [u8; 4] = *b"ACP1";
pub const VERSION: u8 = 1;
pub const WIRE_LEN: usize = 21;

const POLL_INTERVAL: Duration = Duration::from_millis(50);

#[derive(Debug, Error)]
pub enum UdpError {
    #[error("socket error: {0}")]
    Io(#[from] io::Error),
    #[error("cannot resolve peer address {0}")]
    Resolve(String),
    #[error(transparent)]
    Session(#[from] SessionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("datagram is {0} bytes, expected 21")]
    Length(usize),
    #[error("bad magic")]
    Magic,
    #[error("unsupported version {0}")]
    Version(u8),
}

/// `magic | version | seq (BE u32) | gen_time ns (BE u64) | payload`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WirePacket {
    pub seq: u32,
    pub gen_time_ns: u64,
    pub payload: [u8; 4],
}

impl WirePacket {
    pub fn encode(&self) -> [u8; WIRE_LEN] {
        let mut buf = [0u8; WIRE_LEN];
        buf[0..4].copy_from_slice(&MAGIC);
        buf[4] = VERSION;
        buf[5..9].copy_from_slice(&self.seq.to_be_bytes());
        buf[9..17].copy_from_slice(&self.gen_time_ns.to_be_bytes());
        buf[17..21].copy_from_slice(&self.payload);
        buf
    }

    pub fn decode(buf: &[u8]) -> Result<Self, WireError> {
        if buf.len() != WIRE_LEN {
            return Err(WireError::Length(buf.len()));
        }
        if buf[0..4] != MAGIC {
            return Err(WireError::Magic);
        }
        if buf[4] != VERSION {
            return Err(WireError::Version(buf[4]));
        }
        Ok(WirePacket {
            seq: u32::from_be_bytes(buf[5..9].try_into().expect("4 bytes")),
            gen_time_ns: u64::from_be_bytes(buf[9..17].try_into().expect("8 bytes")),
            payload: buf[17..21].try_into().expect("4 bytes"),
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EchoStats {
    pub received: u64,
    pub replied: u64,
    pub malformed: u64,
}

/// Reflects every valid packet to its source until `stop` is set.
pub fn run_echo(socket: &UdpSocket, stop: &AtomicBool) -> io::Result<EchoStats> {
    socket.set_read_timeout(Some(POLL_INTERVAL))?;
    let mut stats = EchoStats::default();
    let mut buf = [0u8; 1500];
    while !stop.load(Ordering::Relaxed) {
        let (n, from) = match socket.recv_from(&mut buf) {
            Ok(r) => r,
            Err(e) if is_transient(&e) => continue,
            Err(e) => return Err(e),
        };
        stats.received += 1;
        if WirePacket::decode(&buf[..n]).is_err() {
            stats.malformed += 1;
            continue;
        }
        match socket.send_to(&buf[..n], from) {
            Ok(_) => stats.replied += 1,
            Err(e) if is_transient(&e) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(stats)
}

fn is_transient(e: &io::Error) -> bool {
    matches!(
        e.kind(),
        io::ErrorKind::WouldBlock
            | io::ErrorKind::TimedOut
            | io::ErrorKind::Interrupted
            | io::ErrorKind::ConnectionRefused
            | io::ErrorKind::ConnectionReset
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SenderOptions {
    pub session: SessionConfig,
    /// How long to keep collecting late ACKs after the last epoch.
    pub drain: Duration,
}

impl SenderOptions {
    pub fn new(session: SessionConfig) -> Self {
        SenderOptions { session, drain: Duration::from_millis(500) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UdpRunResult {
    pub rows: Vec<EpochRecord>,
    pub counters: SessionCounters,
    /// RTT of every fresh ACK, in arrival order.
    pub rtt_samples_ns: Vec<u64>,
    pub sent: u64,
    pub acked: u64,
    /// Unacknowledged and older than the backlog expiry at the end of the run.
    pub lost: u64,
    pub in_flight: u64,
    pub malformed_acks: u64,
}

struct Ack {
    at: Instant,
    packet: WirePacket,
}

/// Runs a full session against the echo server at `peer`.
pub fn run_sender(peer: &str, opts: &SenderOptions) -> Result<UdpRunResult, UdpError> {
    let peer: SocketAddr =
        peer.to_socket_addrs()?.next().ok_or_else(|| UdpError::Resolve(peer.to_string()))?;
    let bind: SocketAddr = if peer.is_ipv4() { "0.0.0.0:0" } else { "[::]:0" }.parse().expect("literal");
    let socket = UdpSocket::bind(bind)?;
    socket.connect(peer)?;

    let epoch = Instant::now();
    let clock = move |at: Instant| Timestamp::from_nanos(at.saturating_duration_since(epoch).as_nanos() as u64);
    let mut session = SenderSession::new(opts.session.clone(), clock(epoch))?;
    if session.is_done() {
        return Ok(UdpRunResult {
            rows: Vec::new(),
            counters: session.counters(),
            rtt_samples_ns: Vec::new(),
            sent: 0,
            acked: 0,
            lost: 0,
            in_flight: 0,
            malformed_acks: 0,
        });
    }

    let stop = Arc::new(AtomicBool::new(false));
    let (tx, rx) = mpsc::channel::<Ack>();
    let rx_socket = socket.try_clone()?;
    rx_socket.set_read_timeout(Some(POLL_INTERVAL))?;
    let rx_stop = Arc::clone(&stop);
    let receiver = thread::spawn(move || -> io::Result<u64> {
        let mut malformed = 0;
        let mut buf = [0u8; 1500];
        while !rx_stop.load(Ordering::Relaxed) {
            let n = match rx_socket.recv(&mut buf) {
                Ok(n) => n,
                Err(e) if is_transient(&e) => continue,
                Err(e) => return Err(e),
            };
            let at = Instant::now();
            match WirePacket::decode(&buf[..n]) {
                Ok(packet) => {
                    if tx.send(Ack { at, packet }).is_err() {
                        break;
                    }
                }
                Err(_) => malformed += 1,
            }
        }
        Ok(malformed)
    });

    let mut rows = Vec::new();
    let mut rtts = Vec::new();
    let mut acked_seqs = HashSet::new();
    let mut send_log: Vec<Timestamp> = Vec::new();
    // Session calls must see non-decreasing time even if an ACK was stamped
    // before the timer that was handled ahead of it.
    let mut last = Timestamp::ZERO;
    let mut on_ack = |session: &mut SenderSession, ack: Ack, last: &mut Timestamp| -> Result<(), UdpError> {
        let now = clock(ack.at).max(*last);
        *last = now;
        let gen = Timestamp::from_nanos(ack.packet.gen_time_ns);
        if let Some(rtt) = session.on_ack(now, ack.packet.seq, gen)? {
            rtts.push(rtt);
            acked_seqs.insert(ack.packet.seq);
        }
        Ok(())
    };

    let outcome: Result<(), UdpError> = (|| {
        while !session.is_done() {
            while let Ok(ack) = rx.try_recv() {
                on_ack(&mut session, ack, &mut last)?;
            }
            let now = clock(Instant::now()).max(last);
            let timer = session.next_timer();
            let send = session.next_send_time();
            let due = [timer, send].into_iter().flatten().min();
            match due {
                Some(t) if t <= now => {
                    last = now;
                    if timer.is_some_and(|x| x <= now) {
                        if let Some(row) = session.on_timer(now)? {
                            rows.push(row);
                        }
                    } else {
                        let u = session.on_send(now);
                        send_log.push(now);
                        let wire = WirePacket { seq: u.seq, gen_time_ns: u.gen_time.as_nanos(), payload: [0; 4] };
                        match socket.send(&wire.encode()) {
                            Ok(_) => {}
                            Err(e) if is_transient(&e) => {}
                            Err(e) => return Err(e.into()),
                        }
                    }
                }
                Some(t) => {
                    let wait = Duration::from_nanos(t.saturating_since(now)).min(POLL_INTERVAL);
                    match rx.recv_timeout(wait) {
                        Ok(ack) => on_ack(&mut session, ack, &mut last)?,
                        Err(RecvTimeoutError::Timeout) => {}
                        Err(RecvTimeoutError::Disconnected) => break,
                    }
                }
                None => break,
            }
        }
        let drain_until = Instant::now() + opts.drain;
        loop {
            let left = drain_until.saturating_duration_since(Instant::now());
            if left.is_zero() {
                break;
            }
            match rx.recv_timeout(left) {
                Ok(ack) => on_ack(&mut session, ack, &mut last)?,
                Err(_) => break,
            }
        }
        Ok(())
    })();

    stop.store(true, Ordering::Relaxed);
    drop(rx);
    let malformed_acks = receiver.join().unwrap_or(Ok(0))?;
    outcome?;

    let end = clock(Instant::now());
    let expiry = opts.session.backlog_expiry_ns;
    let (mut lost, mut in_flight) = (0, 0);
    for (seq, &sent_at) in send_log.iter().enumerate() {
        if acked_seqs.contains(&(seq as u32)) {
            continue;
        }
        if end.saturating_since(sent_at) > expiry {
            lost += 1;
        } else {
            in_flight += 1;
        }
    }
    Ok(UdpRunResult {
        rows,
        counters: session.counters(),
        rtt_samples_ns: rtts,
        sent: send_log.len() as u64,
        acked: acked_seqs.len() as u64,
        lost,
        in_flight,
        malformed_acks,
    })
}

/// Session defaults suited to a live link: abort after 5 s without ACKs.
pub fn live_session_config(session: SessionConfig) -> SessionConfig {
    SessionConfig { max_silence_ns: session.max_silence_ns.or(Some(5_000 * NANOS_PER_MS)), ..session }
}
