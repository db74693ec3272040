//! Collaboration relay: one actor task per session owns the [`Session`] and
//! processes its mailbox strictly in order. Sockets only forward frames.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::extract::ws::{Message as WsMessage, WebSocket};
use fmkit_core::collab::{Envelope, Message, ParticipantId, RejectReason, Session};
use futures::{SinkExt, StreamExt};
use tokio::sync::{mpsc, oneshot};

/// Frames queued for one connection, already serialized.
type Outbox = mpsc::UnboundedSender<String>;

enum Command {
    Connect {
        name: String,
        host_token: Option<String>,
        outbox: Outbox,
        reply: oneshot::Sender<Result<(ParticipantId, u64), Envelope>>,
    },
    Inbound {
        from: ParticipantId,
        text: String,
    },
    Disconnect {
        from: ParticipantId,
        conn: u64,
    },
}

#[derive(Clone, Default)]
pub struct Registry {
    sessions: Arc<Mutex<HashMap<String, mpsc::UnboundedSender<Command>>>>,
}

impl Registry {
    /// Starts the actor for a freshly hosted session.
    pub fn open(&self, session: Session, host_token: String) {
        let id = session.session_id().to_string();
        let (tx, rx) = mpsc::unbounded_channel();
        self.sessions
            .lock()
            .expect("registry poisoned")
            .insert(id.clone(), tx);
        let registry = self.clone();
        tokio::spawn(async move {
            Actor {
                session,
                host_token,
                conns: HashMap::new(),
                next_conn: 0,
                ever_connected: false,
            }
            .run(rx)
            .await;
            registry
                .sessions
                .lock()
                .expect("registry poisoned")
                .remove(&id);
        });
    }

    pub fn contains(&self, id: &str) -> bool {
        self.sessions
            .lock()
            .expect("registry poisoned")
            .contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().expect("registry poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn mailbox(&self, id: &str) -> Option<mpsc::UnboundedSender<Command>> {
        self.sessions
            .lock()
            .expect("registry poisoned")
            .get(id)
            .cloned()
    }
}

struct Actor {
    session: Session,
    host_token: String,
    /// Live connection per participant, tagged so a stale socket's
    /// disconnect cannot evict a reconnected seat.
    conns: HashMap<ParticipantId, (u64, Outbox)>,
    next_conn: u64,
    /// The session closes once this is set and no connection remains.
    ever_connected: bool,
}

impl Actor {
    async fn run(mut self, mut rx: mpsc::UnboundedReceiver<Command>) {
        while let Some(cmd) = rx.recv().await {
            match cmd {
                Command::Connect {
                    name,
                    host_token,
                    outbox,
                    reply,
                } => self.connect(name, host_token, outbox, reply),
                Command::Inbound { from, text } => self.inbound(from, &text),
                Command::Disconnect { from, conn } => {
                    if self.conns.get(&from).is_some_and(|(c, _)| *c == conn) {
                        self.conns.remove(&from);
                        let out = self.session.leave(from);
                        self.dispatch(out);
                    }
                }
            }
            if self.conns.is_empty() && self.ever_connected {
                break;
            }
        }
    }

    fn connect(
        &mut self,
        name: String,
        host_token: Option<String>,
        outbox: Outbox,
        reply: oneshot::Sender<Result<(ParticipantId, u64), Envelope>>,
    ) {
        let sid = self.session.session_id().to_string();
        let conn = self.next_conn;
        self.next_conn += 1;
        let host = ParticipantId(1);
        let (id, out) = match host_token {
            Some(t) if t != self.host_token => {
                let _ = reply.send(Err(Envelope::reject(
                    sid,
                    RejectReason::Unauthorized,
                    self.session.seq(),
                    "wrong host token",
                )));
                return;
            }
            // The reserved host seat, or a reconnect to it.
            Some(_) if self.session.is_participant(host) => (host, Vec::new()),
            _ => self.session.join(&name),
        };
        if reply.send(Ok((id, conn))).is_err() {
            return;
        }
        self.conns.insert(id, (conn, outbox));
        self.ever_connected = true;
        if out.is_empty() {
            let welcome = self.session.welcome(id);
            self.send(id, &welcome);
        }
        self.dispatch(out);
    }

    fn inbound(&mut self, from: ParticipantId, text: &str) {
        let sid = self.session.session_id().to_string();
        let reject = |reason, detail: String| Envelope::reject(sid.clone(), reason, 0, detail);
        let env: Envelope = match serde_json::from_str(text) {
            Ok(e) => e,
            Err(e) => {
                let r = reject(RejectReason::Malformed, e.to_string());
                return self.send_reject(from, r);
            }
        };
        if env.session_id != sid {
            let r = reject(
                RejectReason::UnknownSession,
                format!("this socket is {sid}"),
            );
            return self.send_reject(from, r);
        }
        if matches!(env.message, Message::Join { .. }) {
            let r = reject(RejectReason::Malformed, "already joined".into());
            return self.send_reject(from, r);
        }
        let out = self.session.handle(from, env.seq, env.message);
        self.dispatch(out);
        if !self.session.is_participant(from) {
            // Leave: closing the outbox ends the socket writer.
            self.conns.remove(&from);
        }
    }

    fn send_reject(&self, to: ParticipantId, mut env: Envelope) {
        if let Message::Reject { ref_seq, .. } = &mut env.message {
            *ref_seq = self.session.seq();
        }
        self.send(to, &env);
    }

    fn send(&self, to: ParticipantId, env: &Envelope) {
        if let Some((_, outbox)) = self.conns.get(&to) {
            let _ = outbox.send(serde_json::to_string(env).expect("envelope serializes"));
        }
    }

    fn dispatch(&self, out: Vec<fmkit_core::collab::Outgoing>) {
        for o in out {
            let text = serde_json::to_string(&o.envelope).expect("envelope serializes");
            for to in o.to {
                if let Some((_, outbox)) = self.conns.get(&to) {
                    let _ = outbox.send(text.clone());
                }
            }
        }
    }
}

fn frame(env: &Envelope) -> WsMessage {
    WsMessage::Text(
        serde_json::to_string(env)
            .expect("envelope serializes")
            .into(),
    )
}

/// Drives one socket: the first frame must be `Join`, after which frames
/// are relayed both ways until either side closes.
pub async fn serve_socket(registry: Registry, session_id: String, socket: WebSocket) {
    let (mut sink, mut stream) = socket.split();
    let reject = |reason, detail: &str| Envelope::reject(session_id.clone(), reason, 0, detail);

    let first = loop {
        match stream.next().await {
            Some(Ok(WsMessage::Text(t))) => break t.to_string(),
            Some(Ok(WsMessage::Ping(_) | WsMessage::Pong(_))) => continue,
            _ => return,
        }
    };
    let (name, host_token) = match serde_json::from_str::<Envelope>(&first) {
        Ok(Envelope {
            session_id: sid,
            message: Message::Join { name, host_token },
            ..
        }) if sid == session_id => (name, host_token),
        Ok(Envelope {
            session_id: sid, ..
        }) if sid != session_id => {
            let _ = sink
                .send(frame(&reject(
                    RejectReason::UnknownSession,
                    "session id mismatch",
                )))
                .await;
            return;
        }
        _ => {
            let _ = sink
                .send(frame(&reject(RejectReason::Malformed, "expected Join")))
                .await;
            return;
        }
    };

    let Some(mailbox) = registry.mailbox(&session_id) else {
        let _ = sink
            .send(frame(&reject(
                RejectReason::UnknownSession,
                "session closed",
            )))
            .await;
        return;
    };
    let (outbox, mut inbox) = mpsc::unbounded_channel::<String>();
    let (reply_tx, reply_rx) = oneshot::channel();
    let connect = Command::Connect {
        name,
        host_token,
        outbox,
        reply: reply_tx,
    };
    if mailbox.send(connect).is_err() {
        let _ = sink
            .send(frame(&reject(
                RejectReason::UnknownSession,
                "session closed",
            )))
            .await;
        return;
    }
    let (me, conn) = match reply_rx.await {
        Ok(Ok(pair)) => pair,
        Ok(Err(env)) => {
            let _ = sink.send(frame(&env)).await;
            return;
        }
        Err(_) => return,
    };

    // The writer ends when the relay drops this connection's outbox.
    let mut writer = tokio::spawn(async move {
        while let Some(text) = inbox.recv().await {
            if sink.send(WsMessage::Text(text.into())).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });
    let reader = async {
        while let Some(Ok(msg)) = stream.next().await {
            let text = match msg {
                WsMessage::Text(t) => t.to_string(),
                WsMessage::Close(_) => break,
                _ => continue,
            };
            if mailbox.send(Command::Inbound { from: me, text }).is_err() {
                break;
            }
        }
    };
    let writer_done = tokio::select! {
        _ = reader => false,
        _ = &mut writer => true,
    };
    let _ = mailbox.send(Command::Disconnect { from: me, conn });
    if !writer_done {
        let _ = writer.await;
    }
}
