//! The single task that owns the engine.
//!
//! Every mutation arrives as a [`Envelope`] on one queue, so requests are
//! totally ordered. Records are persisted, then published to the shared
//! history, before the request that produced them is answered.

use std::sync::{Arc, RwLock};
use std::time::{Duration, Instant};

use axum::http::StatusCode;
use monitomation_core::engine::SubmissionStatus;
use monitomation_core::{Engine, LogRecord, Micros, Receipt, SubmitError};
use serde_json::{json, Map, Value};
use tokio::sync::{mpsc, oneshot, watch};

use crate::error::ApiError;
use crate::sink::LogSink;

const TICK: Duration = Duration::from_millis(2);

pub(crate) enum Request {
    Message { to: Option<u16>, text: String },
    Command { input: String },
    Dtmf { samples: Vec<f64>, sample_rate: u32 },
    Nodes,
    Node(u16),
    Submission(u64),
    Status,
    Pause,
    Resume,
    Step,
}

pub(crate) type Reply = Result<(StatusCode, Value), ApiError>;

pub(crate) struct Envelope {
    pub request: Request,
    pub reply: oneshot::Sender<Reply>,
}

/// Read-only view for the HTTP handlers.
pub(crate) struct Shared {
    pub history: RwLock<Vec<LogRecord>>,
    /// Highest offset published so far.
    pub latest: watch::Receiver<u64>,
}

impl Shared {
    /// Records with offsets in `(after, after + limit]`.
    pub fn page(&self, after: u64, limit: usize) -> Vec<LogRecord> {
        let h = self.history.read().expect("history lock");
        h.iter().skip(after as usize).take(limit).cloned().collect()
    }

    pub fn len(&self) -> u64 {
        self.history.read().expect("history lock").len() as u64
    }
}

struct Waiter {
    submission: u64,
    body: Map<String, Value>,
    reply: oneshot::Sender<Reply>,
}

pub(crate) struct Owner {
    engine: Engine,
    sink: LogSink,
    shared: Arc<Shared>,
    latest: watch::Sender<u64>,
    /// Offset of the last record written before this session.
    base: u64,
    paused: bool,
    speed: f64,
    wall0: Instant,
    virt0: Micros,
    waiters: Vec<Waiter>,
    sink_ok: bool,
}

impl Owner {
    pub fn new(
        engine: Engine,
        sink: LogSink,
        history: Vec<LogRecord>,
        speed: f64,
        paused: bool,
    ) -> (Self, Arc<Shared>) {
        let base = history.len() as u64;
        let (latest, latest_rx) = watch::channel(base);
        let shared = Arc::new(Shared {
            history: RwLock::new(history),
            latest: latest_rx,
        });
        let virt0 = engine.now();
        let mut owner = Self {
            engine,
            sink,
            shared: shared.clone(),
            latest,
            base,
            paused,
            speed,
            wall0: Instant::now(),
            virt0,
            waiters: Vec::new(),
            sink_ok: true,
        };
        owner.flush();
        (owner, shared)
    }

    pub async fn run(mut self, mut rx: mpsc::Receiver<Envelope>, mut shutdown: watch::Receiver<bool>) {
        let mut tick = tokio::time::interval(TICK);
        tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
        loop {
            tokio::select! {
                biased;
                _ = shutdown.changed() => break,
                env = rx.recv() => match env {
                    Some(env) => self.handle(env),
                    None => break,
                },
                _ = tick.tick(), if !self.paused => self.advance(),
            }
        }
        self.flush();
        for w in self.waiters.drain(..) {
            let _ = w.reply.send(Err(ApiError::unavailable(
                "ShuttingDown",
                "gateway is shutting down",
            )));
        }
    }

    fn virtual_now(&self) -> Micros {
        let wall = self.wall0.elapsed().as_secs_f64() * 1e6;
        self.virt0 + (wall * self.speed) as Micros
    }

    /// Brings the engine up to the paced virtual time.
    fn advance(&mut self) {
        if self.paused {
            return;
        }
        let target = self.virtual_now();
        self.engine.run_until(target);
        self.flush();
        self.resolve_waiters();
    }

    /// Moves new engine records to the sink and the shared history.
    fn flush(&mut self) -> bool {
        let mut recs = self.engine.drain();
        for r in &mut recs {
            r.index += self.base;
        }
        let res = self.sink.append(&recs);
        if let Err(e) = &res {
            tracing::warn!("log append failed: {e}");
        }
        self.sink_ok = res.is_ok();
        if !recs.is_empty() {
            let len = {
                let mut h = self.shared.history.write().expect("history lock");
                h.extend(recs);
                h.len() as u64
            };
            self.latest.send_replace(len);
        }
        self.sink_ok
    }

    fn persist_error(&self) -> ApiError {
        let path = self
            .sink
            .path()
            .map(|p| p.display().to_string())
            .unwrap_or_default();
        ApiError::unavailable("IoError", format!("could not append to {path}"))
    }

    fn resolve_waiters(&mut self) {
        let finished = self.engine.next_event_at().is_none();
        let mut i = 0;
        while i < self.waiters.len() {
            let status = self.engine.submission(self.waiters[i].submission);
            let done = match status {
                Some(SubmissionStatus::Done {
                    delivery,
                    attempts,
                    at,
                    ..
                }) => Some((delivery, attempts, at)),
                _ => None,
            };
            if done.is_none() && !finished && !self.paused {
                i += 1;
                continue;
            }
            let mut w = self.waiters.swap_remove(i);
            let reply = match done {
                Some(_) if !self.sink_ok => Err(self.persist_error()),
                Some((delivery, attempts, at)) => {
                    w.body.insert("delivery".into(), json!(delivery));
                    w.body.insert("attempts".into(), json!(attempts));
                    w.body.insert("done_at".into(), json!(at));
                    Ok((StatusCode::OK, Value::Object(w.body)))
                }
                None => {
                    w.body.insert("delivery".into(), json!("PENDING"));
                    Ok((StatusCode::ACCEPTED, Value::Object(w.body)))
                }
            };
            let _ = w.reply.send(reply);
        }
    }

    fn handle(&mut self, env: Envelope) {
        let Envelope { request, reply } = env;
        self.advance();
        let answer = match request {
            Request::Message { to, text } => {
                let r = self.engine.submit_message(to, &text);
                return self.after_submit(r.map(|rc| (Map::new(), Some(rc))), reply);
            }
            Request::Command { input } => {
                let r = self.engine.submit_input(&input).map(|(instr, rc)| {
                    let mut body = Map::new();
                    body.insert("instruction".into(), json!(instr));
                    (body, Some(rc))
                });
                return self.after_submit(r, reply);
            }
            Request::Dtmf { samples, sample_rate } => {
                let r = self.engine.submit_dtmf(&samples, sample_rate).map(|out| {
                    let mut body = Map::new();
                    body.insert("keys".into(), json!(out.keys));
                    if let Some(i) = out.instruction {
                        body.insert("instruction".into(), json!(i));
                    }
                    (body, out.receipt)
                });
                return self.after_submit(r, reply);
            }
            Request::Nodes => Ok((StatusCode::OK, json!(self.engine.nodes()))),
            Request::Node(addr) => match self.engine.node(addr) {
                Some(n) => Ok((StatusCode::OK, json!(n))),
                None => Err(ApiError::not_found(
                    "UnknownNode",
                    format!("no node with address {addr}"),
                )),
            },
            Request::Submission(id) => match self.engine.submission(id) {
                Some(s) => Ok((StatusCode::OK, json!(s))),
                None => Err(ApiError::not_found(
                    "UnknownSubmission",
                    format!("no submission {id}"),
                )),
            },
            Request::Status => Ok((StatusCode::OK, self.status())),
            Request::Pause => {
                self.paused = true;
                self.resolve_waiters();
                Ok((StatusCode::OK, self.status()))
            }
            Request::Resume => {
                self.paused = false;
                self.wall0 = Instant::now();
                self.virt0 = self.engine.now();
                Ok((StatusCode::OK, self.status()))
            }
            Request::Step => self.step(),
        };
        let _ = reply.send(answer);
    }

    fn status(&self) -> Value {
        json!({
            "paused": self.paused,
            "now": self.engine.now(),
            "speed": self.speed,
            "offset": self.shared.len(),
            "next_event_at": self.engine.next_event_at(),
        })
    }

    fn step(&mut self) -> Reply {
        if !self.paused {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "NotPaused",
                "pause the simulation before stepping",
            ));
        }
        let from = self.shared.len();
        let stepped = self.engine.step_event();
        if !self.flush() {
            return Err(self.persist_error());
        }
        let records = self.shared.page(from, usize::MAX);
        Ok((
            StatusCode::OK,
            json!({"stepped": stepped, "now": self.engine.now(), "records": records}),
        ))
    }

    fn after_submit(
        &mut self,
        result: Result<(Map<String, Value>, Option<Receipt>), SubmitError>,
        reply: oneshot::Sender<Reply>,
    ) {
        let persisted = self.flush();
        let (mut body, receipt) = match result {
            Err(e) => {
                let _ = reply.send(Err(ApiError::from(e)));
                return;
            }
            Ok(ok) => ok,
        };
        if !persisted {
            let _ = reply.send(Err(self.persist_error()));
            return;
        }
        let Some(rc) = receipt else {
            let _ = reply.send(Ok((StatusCode::OK, Value::Object(body))));
            return;
        };
        body.insert("submission".into(), json!(rc.submission));
        body.insert("seq".into(), json!(rc.seq));
        body.insert("mac_at".into(), json!(rc.mac_at));
        self.waiters.push(Waiter {
            submission: rc.submission,
            body,
            reply,
        });
        self.resolve_waiters();
    }
}
