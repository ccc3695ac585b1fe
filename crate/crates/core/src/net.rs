//! Line-oriented TCP transport for the private search.
//!
//! The aggregator only ever sees randomized-response bits: a client keeps its
//! value in process and answers each `QUERY` with a sanitized `RESP`.
//! Messages are UTF-8 lines, space-separated, first token the message name:
//!
//! ```text
//! HELLO <client_id>
//! START <session_id> <depth> <epsilon_round>
//! QUERY <round> <tau>
//! RESP <round> <1|-1>
//! RESULT <estimate>
//! ABORT <reason...>
//! ```
//!
//! Each round is a barrier: no `QUERY` for round t+1 goes out until every
//! client has answered round t. A client that times out, disconnects, answers
//! twice, or sends garbage aborts the whole session, since the estimator
//! assumes the same N users in every round. `QUERY` carries only the current
//! τ; clients never need earlier reports.

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::ldp::{unbiased_phi, Bit, RoundBudget};
use crate::protocol::{user_respond, Branch, Interval, ProtocolConfig, RoundRecord, Transcript};
use crate::rng::{RandomStream, SeededStream};

pub const DEFAULT_ROUND_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq)]
pub enum WireMessage {
    Hello { client_id: String },
    Start { session_id: String, depth: usize, epsilon_round: f64 },
    Query { round: usize, tau: f64 },
    Resp { round: usize, bit: Bit },
    Result { estimate: f64 },
    Abort { reason: String },
}

fn is_token(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(char::is_whitespace)
}

impl WireMessage {
    /// Encoded line without the trailing newline.
    pub fn encode(&self) -> String {
        match self {
            WireMessage::Hello { client_id } => format!("HELLO {client_id}"),
            WireMessage::Start {
                session_id,
                depth,
                epsilon_round,
            } => format!("START {session_id} {depth} {epsilon_round}"),
            WireMessage::Query { round, tau } => format!("QUERY {round} {tau}"),
            WireMessage::Resp { round, bit } => format!("RESP {round} {}", bit.value()),
            WireMessage::Result { estimate } => format!("RESULT {estimate}"),
            WireMessage::Abort { reason } => format!("ABORT {reason}"),
        }
    }

    pub fn parse(line: &str) -> Result<Self> {
        let line = line.trim_end_matches(['\r', '\n']);
        let bad = |why: &str| Error::Wire(format!("{why}: {line:?}"));
        let (name, rest) = line.split_once(' ').unwrap_or((line, ""));
        let fields: Vec<&str> = rest.split(' ').filter(|f| !f.is_empty()).collect();
        let want = |k: usize| {
            if fields.len() == k {
                Ok(())
            } else {
                Err(bad("wrong field count"))
            }
        };
        let round = |s: &str| -> Result<usize> {
            match s.parse::<usize>() {
                Ok(r) if r >= 1 => Ok(r),
                _ => Err(bad("bad round")),
            }
        };
        match name {
            "HELLO" => {
                want(1)?;
                Ok(WireMessage::Hello {
                    client_id: fields[0].to_string(),
                })
            }
            "START" => {
                want(3)?;
                let depth = fields[1].parse().map_err(|_| bad("bad depth"))?;
                let epsilon_round: f64 = fields[2].parse().map_err(|_| bad("bad epsilon"))?;
                if !(epsilon_round > 0.0) {
                    return Err(bad("bad epsilon"));
                }
                Ok(WireMessage::Start {
                    session_id: fields[0].to_string(),
                    depth,
                    epsilon_round,
                })
            }
            "QUERY" => {
                want(2)?;
                let tau: f64 = fields[1].parse().map_err(|_| bad("bad tau"))?;
                if !(-1.0..=1.0).contains(&tau) {
                    return Err(bad("tau outside [-1, 1]"));
                }
                Ok(WireMessage::Query {
                    round: round(fields[0])?,
                    tau,
                })
            }
            "RESP" => {
                want(2)?;
                let bit = fields[1]
                    .parse::<i64>()
                    .ok()
                    .and_then(Bit::from_value)
                    .ok_or_else(|| bad("bit must be 1 or -1"))?;
                Ok(WireMessage::Resp {
                    round: round(fields[0])?,
                    bit,
                })
            }
            "RESULT" => {
                want(1)?;
                Ok(WireMessage::Result {
                    estimate: fields[0].parse().map_err(|_| bad("bad estimate"))?,
                })
            }
            "ABORT" => Ok(WireMessage::Abort {
                reason: rest.to_string(),
            }),
            _ => Err(bad("unknown message")),
        }
    }
}

fn send(stream: &mut TcpStream, msg: &WireMessage) -> std::io::Result<()> {
    let mut line = msg.encode();
    line.push('\n');
    stream.write_all(line.as_bytes())
}

#[derive(Debug, Clone)]
pub struct ServerOptions {
    /// Applies to the handshake and to every round.
    pub round_timeout: Duration,
    pub session_id: String,
}

impl Default for ServerOptions {
    fn default() -> Self {
        Self {
            round_timeout: DEFAULT_ROUND_TIMEOUT,
            session_id: "s1".into(),
        }
    }
}

/// A line received by the server.
#[derive(Debug, Clone, PartialEq)]
pub struct InboundLine {
    /// Connection index in accept order.
    pub connection: usize,
    pub line: String,
}

#[derive(Debug, Clone)]
pub struct ServeOutcome {
    pub transcript: Transcript,
    pub client_ids: Vec<String>,
    /// Every line clients sent, in arrival order.
    pub inbound: Vec<InboundLine>,
}

enum Event {
    Line(usize, String),
    Closed(usize),
}

struct Conn {
    stream: TcpStream,
    client_id: Option<String>,
}

pub struct Server {
    listener: TcpListener,
    config: ProtocolConfig,
    options: ServerOptions,
}

impl Server {
    /// Binds and validates; `config.n` is the number of clients to wait for.
    pub fn bind<A: ToSocketAddrs>(addr: A, config: ProtocolConfig, options: ServerOptions) -> Result<Self> {
        config.validate()?;
        if !is_token(&options.session_id) {
            return Err(Error::InvalidArgument("session id must be a single token".into()));
        }
        let listener = TcpListener::bind(addr)?;
        Ok(Self {
            listener,
            config,
            options,
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Runs one session to completion.
    pub fn run(self) -> Result<ServeOutcome> {
        Session::new(self)?.run()
    }
}

/// Runs a session on `bind_address`; see [`Server`].
pub fn serve<A: ToSocketAddrs>(
    bind_address: A,
    config: ProtocolConfig,
    options: ServerOptions,
) -> Result<ServeOutcome> {
    Server::bind(bind_address, config, options)?.run()
}

struct Session {
    server: Server,
    conns: Vec<Conn>,
    tx: Sender<Event>,
    rx: Receiver<Event>,
    inbound: Vec<InboundLine>,
}

impl Session {
    fn new(server: Server) -> Result<Self> {
        server.listener.set_nonblocking(true)?;
        let (tx, rx) = mpsc::channel();
        Ok(Self {
            server,
            conns: Vec::new(),
            tx,
            rx,
            inbound: Vec::new(),
        })
    }

    fn n(&self) -> usize {
        self.server.config.n
    }

    fn broadcast(&mut self, msg: &WireMessage) {
        for c in &mut self.conns {
            let _ = send(&mut c.stream, msg);
        }
    }

    fn abort_all(&mut self, reason: &str) -> Error {
        self.broadcast(&WireMessage::Abort {
            reason: reason.to_string(),
        });
        self.shutdown();
        Error::Aborted(reason.to_string())
    }

    /// Tells the offending client why, then takes the session down.
    fn abort_client(&mut self, idx: usize, reason: &str) -> Error {
        let _ = send(
            &mut self.conns[idx].stream,
            &WireMessage::Abort {
                reason: reason.to_string(),
            },
        );
        let who = self.conns[idx]
            .client_id
            .clone()
            .unwrap_or_else(|| format!("connection {idx}"));
        let msg = format!("{reason} from {who}");
        for (i, c) in self.conns.iter_mut().enumerate() {
            if i != idx {
                let _ = send(
                    &mut c.stream,
                    &WireMessage::Abort {
                        reason: format!("client dropped: {reason}"),
                    },
                );
            }
        }
        self.shutdown();
        Error::Aborted(msg)
    }

    fn shutdown(&mut self) {
        for c in &self.conns {
            let _ = c.stream.shutdown(std::net::Shutdown::Both);
        }
    }

    fn accept_one(&mut self, stream: TcpStream) -> Result<()> {
        stream.set_nonblocking(false)?;
        let _ = stream.set_nodelay(true);
        let idx = self.conns.len();
        let reader = stream.try_clone()?;
        let tx = self.tx.clone();
        thread::spawn(move || {
            let mut reader = BufReader::new(reader);
            let mut line = String::new();
            loop {
                line.clear();
                match reader.read_line(&mut line) {
                    Ok(0) | Err(_) => {
                        let _ = tx.send(Event::Closed(idx));
                        return;
                    }
                    Ok(_) => {
                        if tx.send(Event::Line(idx, line.trim_end().to_string())).is_err() {
                            return;
                        }
                    }
                }
            }
        });
        self.conns.push(Conn {
            stream,
            client_id: None,
        });
        Ok(())
    }

    fn handshake(&mut self) -> Result<()> {
        let deadline = Instant::now() + self.server.options.round_timeout;
        let mut hellos = 0;
        while hellos < self.n() {
            if self.conns.len() < self.n() {
                match self.server.listener.accept() {
                    Ok((stream, _)) => {
                        self.accept_one(stream)?;
                        continue;
                    }
                    Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {}
                    Err(e) => return Err(e.into()),
                }
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(self.abort_all("timeout"));
            }
            let wait = (deadline - now).min(Duration::from_millis(5));
            match self.rx.recv_timeout(wait) {
                Ok(Event::Line(idx, line)) => {
                    self.inbound.push(InboundLine {
                        connection: idx,
                        line: line.clone(),
                    });
                    match WireMessage::parse(&line) {
                        Ok(WireMessage::Hello { client_id }) if self.conns[idx].client_id.is_none() => {
                            self.conns[idx].client_id = Some(client_id);
                            hellos += 1;
                        }
                        _ => return Err(self.abort_client(idx, "malformed message")),
                    }
                }
                Ok(Event::Closed(idx)) => return Err(self.abort_client(idx, "disconnected")),
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => unreachable!("session holds a sender"),
            }
        }
        Ok(())
    }

    fn collect_round(&mut self, round: usize) -> Result<i64> {
        let deadline = Instant::now() + self.server.options.round_timeout;
        let mut answered = vec![false; self.n()];
        let mut remaining = self.n();
        let mut sum_z = 0i64;
        while remaining > 0 {
            let now = Instant::now();
            if now >= deadline {
                return Err(self.abort_all("timeout"));
            }
            match self.rx.recv_timeout(deadline - now) {
                Ok(Event::Line(idx, line)) => {
                    self.inbound.push(InboundLine {
                        connection: idx,
                        line: line.clone(),
                    });
                    match WireMessage::parse(&line) {
                        Ok(WireMessage::Resp { round: r, bit }) if r == round && !answered[idx] => {
                            answered[idx] = true;
                            remaining -= 1;
                            sum_z += bit.value();
                        }
                        Ok(WireMessage::Resp { .. }) => {
                            return Err(self.abort_client(idx, "duplicate response"))
                        }
                        _ => return Err(self.abort_client(idx, "malformed message")),
                    }
                }
                Ok(Event::Closed(idx)) => return Err(self.abort_client(idx, "disconnected")),
                Err(RecvTimeoutError::Timeout) => return Err(self.abort_all("timeout")),
                Err(RecvTimeoutError::Disconnected) => unreachable!("session holds a sender"),
            }
        }
        Ok(sum_z)
    }

    fn run(mut self) -> Result<ServeOutcome> {
        self.handshake()?;
        let config = self.server.config;
        let budget = config.round_budget();
        self.broadcast(&WireMessage::Start {
            session_id: self.server.options.session_id.clone(),
            depth: config.depth,
            epsilon_round: budget.epsilon(),
        });
        let mut interval = Interval::full();
        let mut rounds = Vec::with_capacity(config.depth);
        for t in 1..=config.depth {
            let tau = interval.midpoint();
            self.broadcast(&WireMessage::Query { round: t, tau });
            let sum_z = self.collect_round(t)?;
            let phi = unbiased_phi(sum_z, config.n, budget)?;
            let branch = if phi >= config.gamma {
                Branch::Left
            } else {
                Branch::Right
            };
            rounds.push(RoundRecord {
                round: t,
                tau,
                sum_z,
                phi,
                branch,
            });
            interval = interval.step(branch);
        }
        let estimate = interval.midpoint();
        self.broadcast(&WireMessage::Result { estimate });
        self.shutdown();
        Ok(ServeOutcome {
            transcript: Transcript {
                config: Some(config),
                depth: config.depth,
                n: config.n,
                rounds,
                estimate,
                degenerate: config.is_degenerate(),
                reflected: false,
            },
            client_ids: self.conns.iter().filter_map(|c| c.client_id.clone()).collect(),
            inbound: self.inbound,
        })
    }
}

/// Client side of a session with a seeded stream. Returns the broadcast
/// estimate.
pub fn client<A: ToSocketAddrs>(connect_address: A, x: f64, seed: u64, client_id: &str) -> Result<f64> {
    client_with_stream(connect_address, x, client_id, SeededStream::new(seed))
}

/// Client side of a session. `x` is validated before connecting and never
/// leaves this function; the only value-dependent payload is the
/// randomized-response bit.
pub fn client_with_stream<A: ToSocketAddrs, R: RandomStream>(
    connect_address: A,
    x: f64,
    client_id: &str,
    mut rng: R,
) -> Result<f64> {
    if !(-1.0..=1.0).contains(&x) {
        return Err(Error::OutOfDomain {
            value: x,
            lo: -1.0,
            hi: 1.0,
        });
    }
    if !is_token(client_id) {
        return Err(Error::InvalidArgument("client id must be a single token".into()));
    }
    let mut stream = TcpStream::connect(connect_address)?;
    let _ = stream.set_nodelay(true);
    let mut reader = BufReader::new(stream.try_clone()?);
    send(
        &mut stream,
        &WireMessage::Hello {
            client_id: client_id.to_string(),
        },
    )?;
    let mut session: Option<(usize, RoundBudget)> = None;
    let mut next_round = 1;
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Err(Error::Wire("connection closed by server".into()));
        }
        match WireMessage::parse(&line)? {
            WireMessage::Start {
                depth,
                epsilon_round,
                ..
            } => {
                session = Some((depth, RoundBudget::new(epsilon_round)?));
            }
            WireMessage::Query { round, tau } => {
                let (depth, budget) =
                    session.ok_or_else(|| Error::Wire("QUERY before START".into()))?;
                if round != next_round || round > depth {
                    return Err(Error::Wire(format!("unexpected round {round}")));
                }
                next_round += 1;
                let bit = user_respond(x, tau, budget, &mut rng);
                send(&mut stream, &WireMessage::Resp { round, bit })?;
            }
            WireMessage::Result { estimate } => return Ok(estimate),
            WireMessage::Abort { reason } => return Err(Error::Aborted(reason)),
            other => return Err(Error::Wire(format!("unexpected message {}", other.encode()))),
        }
    }
}
