//! Single-writer collaboration protocol.
//!
//! [`Session`] is the relay: it owns the authoritative model and history,
//! serializes every client message, and produces addressed envelopes.
//! [`Replica`] is the client side: it rebuilds the model from a `Welcome`
//! and replays seq-ordered broadcasts. Both are transport-free.
//!
//! Invariants kept by `Session`:
//! - exactly one editor, and editor and host are participants;
//! - `seq` grows by one per accepted `ApplyOp`, `Undo` or `Redo`;
//! - only the editor's ops change the model.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::editing::{EditError, EditHistory, EditOp, Editor, MoveMode};
use crate::model::{validate, FeatureModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParticipantId(pub u32);

impl fmt::Display for ParticipantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Participant {
    pub id: ParticipantId,
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    NotEditor,
    Unauthorized,
    Stale,
    ApplicationError,
    EmptyHistory,
    UnknownParticipant,
    UnknownSession,
    Malformed,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = serde_json::to_value(self).expect("unit variant");
        f.write_str(v.as_str().unwrap_or("?"))
    }
}

/// Protocol messages. Every payload is a JSON object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all_fields = "camelCase")]
pub enum Message {
    /// Client handshake. `hostToken` claims the host seat reserved at creation.
    Join {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        host_token: Option<String>,
    },
    Welcome {
        participant_id: ParticipantId,
        model: FeatureModel,
        history: EditHistory,
        participants: Vec<Participant>,
        host: ParticipantId,
        editor: ParticipantId,
        move_mode: MoveMode,
    },
    /// From a client: no fields. Routed to host and editor with `from` set.
    RequestEdit {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        from: Option<ParticipantId>,
    },
    GrantEdit {
        to: ParticipantId,
    },
    RevokeEdit {},
    ApplyOp {
        op: EditOp,
    },
    Undo {},
    Redo {},
    ParticipantUpdate {
        participants: Vec<Participant>,
        host: ParticipantId,
        editor: ParticipantId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        joined: Option<ParticipantId>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        left: Option<ParticipantId>,
    },
    Reject {
        reason: RejectReason,
        ref_seq: u64,
        detail: String,
    },
    Leave {},
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Join { .. } => "Join",
            Message::Welcome { .. } => "Welcome",
            Message::RequestEdit { .. } => "RequestEdit",
            Message::GrantEdit { .. } => "GrantEdit",
            Message::RevokeEdit {} => "RevokeEdit",
            Message::ApplyOp { .. } => "ApplyOp",
            Message::Undo {} => "Undo",
            Message::Redo {} => "Redo",
            Message::ParticipantUpdate { .. } => "ParticipantUpdate",
            Message::Reject { .. } => "Reject",
            Message::Leave {} => "Leave",
        }
    }
}

/// Wire envelope `{"type", "sessionId", "seq"?, "payload"}`.
///
/// On client `ApplyOp`/`Undo`/`Redo`, `seq` is the last seq the client has
/// seen; on relay broadcasts of those, it is the newly assigned seq.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Envelope {
    pub session_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
    #[serde(flatten)]
    pub message: Message,
}

impl Envelope {
    pub fn new(session_id: impl Into<String>, seq: Option<u64>, message: Message) -> Self {
        Envelope {
            session_id: session_id.into(),
            seq,
            message,
        }
    }

    pub fn reject(
        session_id: impl Into<String>,
        reason: RejectReason,
        ref_seq: u64,
        detail: impl Into<String>,
    ) -> Self {
        Envelope::new(
            session_id,
            None,
            Message::Reject {
                reason,
                ref_seq,
                detail: detail.into(),
            },
        )
    }
}

/// An envelope addressed to specific participants.
#[derive(Debug, Clone, PartialEq)]
pub struct Outgoing {
    pub to: Vec<ParticipantId>,
    pub envelope: Envelope,
}

pub fn new_session_id() -> String {
    uuid::Uuid::new_v4().simple().to_string()
}

/// `{base}/join/{sessionId}`.
pub fn share_link(base: &str, session_id: &str) -> String {
    format!("{}/join/{session_id}", base.trim_end_matches('/'))
}

pub fn parse_share_link(link: &str) -> Option<&str> {
    let (_, id) = link.rsplit_once("/join/")?;
    (!id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-')).then_some(id)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SessionError {
    #[error("model is not well-formed: {0}")]
    InvalidModel(String),
}

/// Relay-side session state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Session {
    session_id: String,
    host: ParticipantId,
    /// Ordered by join time (ids increase).
    participants: BTreeMap<ParticipantId, String>,
    editor: ParticipantId,
    state: Editor,
    seq: u64,
    next_participant: u32,
    move_mode: MoveMode,
}

impl Session {
    /// Creates a session whose host (participant 1) is sole participant and editor.
    pub fn host(
        session_id: impl Into<String>,
        model: FeatureModel,
        host_name: &str,
        move_mode: MoveMode,
    ) -> Result<Self, SessionError> {
        let violations = validate(&model);
        if let Some(v) = violations.first() {
            return Err(SessionError::InvalidModel(v.to_string()));
        }
        let host = ParticipantId(1);
        Ok(Session {
            session_id: session_id.into(),
            host,
            participants: BTreeMap::from([(host, host_name.to_string())]),
            editor: host,
            state: Editor::new(model),
            seq: 0,
            next_participant: 2,
            move_mode,
        })
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn host_id(&self) -> ParticipantId {
        self.host
    }

    pub fn editor(&self) -> ParticipantId {
        self.editor
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn model(&self) -> &FeatureModel {
        &self.state.model
    }

    pub fn history(&self) -> &EditHistory {
        &self.state.history
    }

    pub fn move_mode(&self) -> MoveMode {
        self.move_mode
    }

    pub fn is_empty(&self) -> bool {
        self.participants.is_empty()
    }

    pub fn is_participant(&self, id: ParticipantId) -> bool {
        self.participants.contains_key(&id)
    }

    pub fn participants(&self) -> Vec<Participant> {
        self.participants
            .iter()
            .map(|(&id, n)| Participant {
                id,
                name: n.clone(),
            })
            .collect()
    }

    fn ids(&self) -> Vec<ParticipantId> {
        self.participants.keys().copied().collect()
    }

    fn env(&self, seq: Option<u64>, message: Message) -> Envelope {
        Envelope::new(self.session_id.clone(), seq, message)
    }

    fn reject(
        &self,
        to: ParticipantId,
        reason: RejectReason,
        detail: impl Into<String>,
    ) -> Vec<Outgoing> {
        vec![Outgoing {
            to: vec![to],
            envelope: Envelope::reject(self.session_id.clone(), reason, self.seq, detail),
        }]
    }

    fn roster(&self, joined: Option<ParticipantId>, left: Option<ParticipantId>) -> Message {
        Message::ParticipantUpdate {
            participants: self.participants(),
            host: self.host,
            editor: self.editor,
            joined,
            left,
        }
    }

    fn unique_name(&self, name: &str) -> String {
        let taken = |n: &str| self.participants.values().any(|v| v == n);
        if !taken(name) {
            return name.to_string();
        }
        (2..)
            .map(|k| format!("{name} ({k})"))
            .find(|n| !taken(n))
            .expect("unbounded")
    }

    pub fn welcome(&self, to: ParticipantId) -> Envelope {
        self.env(
            Some(self.seq),
            Message::Welcome {
                participant_id: to,
                model: self.state.model.clone(),
                history: self.state.history.clone(),
                participants: self.participants(),
                host: self.host,
                editor: self.editor,
                move_mode: self.move_mode,
            },
        )
    }

    /// Adds a participant. The joiner gets `Welcome`, everyone else a roster update.
    pub fn join(&mut self, name: &str) -> (ParticipantId, Vec<Outgoing>) {
        let id = ParticipantId(self.next_participant);
        self.next_participant += 1;
        let name = self.unique_name(name.trim());
        self.participants.insert(id, name);
        if self.participants.len() == 1 {
            self.host = id;
            self.editor = id;
        }
        let others: Vec<ParticipantId> = self.ids().into_iter().filter(|&p| p != id).collect();
        let mut out = vec![Outgoing {
            to: vec![id],
            envelope: self.welcome(id),
        }];
        if !others.is_empty() {
            out.push(Outgoing {
                to: others,
                envelope: self.env(None, self.roster(Some(id), None)),
            });
        }
        (id, out)
    }

    /// Removes a participant, handing host and editor roles to the earliest
    /// remaining participant when needed.
    pub fn leave(&mut self, id: ParticipantId) -> Vec<Outgoing> {
        if self.participants.remove(&id).is_none() {
            return Vec::new();
        }
        let Some(&first) = self.participants.keys().next() else {
            return Vec::new();
        };
        if self.host == id {
            self.host = first;
        }
        if self.editor == id {
            self.editor = self.host;
        }
        vec![Outgoing {
            to: self.ids(),
            envelope: self.env(None, self.roster(None, Some(id))),
        }]
    }

    /// Processes one client message. `seq` is the envelope's seq field.
    pub fn handle(
        &mut self,
        from: ParticipantId,
        seq: Option<u64>,
        message: Message,
    ) -> Vec<Outgoing> {
        if !self.is_participant(from) {
            return vec![Outgoing {
                to: vec![from],
                envelope: Envelope::reject(
                    self.session_id.clone(),
                    RejectReason::UnknownParticipant,
                    self.seq,
                    "not joined",
                ),
            }];
        }
        match message {
            Message::RequestEdit { .. } => {
                let mut to = vec![self.host];
                if self.editor != self.host {
                    to.push(self.editor);
                }
                vec![Outgoing {
                    to,
                    envelope: self.env(None, Message::RequestEdit { from: Some(from) }),
                }]
            }
            Message::GrantEdit { to } => {
                if from != self.host && from != self.editor {
                    return self.reject(
                        from,
                        RejectReason::Unauthorized,
                        "only the host or the editor can grant",
                    );
                }
                if !self.is_participant(to) {
                    return self.reject(
                        from,
                        RejectReason::UnknownParticipant,
                        format!("no participant {to}"),
                    );
                }
                self.editor = to;
                vec![Outgoing {
                    to: self.ids(),
                    envelope: self.env(None, self.roster(None, None)),
                }]
            }
            Message::RevokeEdit {} => {
                if from != self.host {
                    return self.reject(
                        from,
                        RejectReason::Unauthorized,
                        "only the host can revoke",
                    );
                }
                self.editor = self.host;
                vec![Outgoing {
                    to: self.ids(),
                    envelope: self.env(None, self.roster(None, None)),
                }]
            }
            Message::ApplyOp { op } => {
                if from != self.editor {
                    return self.reject(from, RejectReason::NotEditor, "edit rights required");
                }
                if seq != Some(self.seq) {
                    return self.reject(from, RejectReason::Stale, format!("based on {seq:?}"));
                }
                if let Err(e) = self.state.apply(op.clone(), self.move_mode) {
                    return self.reject(from, RejectReason::ApplicationError, e.to_string());
                }
                self.broadcast_seq(Message::ApplyOp { op })
            }
            Message::Undo {} | Message::Redo {} => {
                if seq != Some(self.seq) {
                    return self.reject(from, RejectReason::Stale, format!("based on {seq:?}"));
                }
                let undo = matches!(message, Message::Undo {});
                let res = if undo {
                    self.state.undo()
                } else {
                    self.state.redo()
                };
                match res {
                    Ok(_) => self.broadcast_seq(message),
                    Err(e @ (EditError::NothingToUndo | EditError::NothingToRedo)) => {
                        self.reject(from, RejectReason::EmptyHistory, e.to_string())
                    }
                    Err(e) => self.reject(from, RejectReason::ApplicationError, e.to_string()),
                }
            }
            Message::Leave {} => self.leave(from),
            other => self.reject(
                from,
                RejectReason::Malformed,
                format!("{} is not a client message", other.kind()),
            ),
        }
    }

    fn broadcast_seq(&mut self, message: Message) -> Vec<Outgoing> {
        self.seq += 1;
        vec![Outgoing {
            to: self.ids(),
            envelope: self.env(Some(self.seq), message),
        }]
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReplicaError {
    #[error("expected a Welcome first")]
    NotWelcomed,
    #[error("expected seq {expected}, got {got:?}")]
    OutOfOrder { expected: u64, got: Option<u64> },
    #[error("replay failed: {0}")]
    Replay(EditError),
}

/// Client-side mirror of a session.
#[derive(Debug, Clone, PartialEq)]
pub struct Replica {
    pub me: ParticipantId,
    pub state: Editor,
    pub seq: u64,
    pub host: ParticipantId,
    pub editor: ParticipantId,
    pub participants: Vec<Participant>,
    /// Rejects received, newest last.
    pub rejects: Vec<(RejectReason, u64)>,
    pub pending_requests: Vec<ParticipantId>,
}

impl Replica {
    pub fn from_welcome(env: &Envelope) -> Result<Self, ReplicaError> {
        match &env.message {
            Message::Welcome {
                participant_id,
                model,
                history,
                participants,
                host,
                editor,
                ..
            } => Ok(Replica {
                me: *participant_id,
                state: Editor {
                    model: model.clone(),
                    history: history.clone(),
                },
                seq: env.seq.unwrap_or(0),
                host: *host,
                editor: *editor,
                participants: participants.clone(),
                rejects: Vec::new(),
                pending_requests: Vec::new(),
            }),
            _ => Err(ReplicaError::NotWelcomed),
        }
    }

    pub fn model(&self) -> &FeatureModel {
        &self.state.model
    }

    pub fn is_editor(&self) -> bool {
        self.editor == self.me
    }

    /// Applies one relay envelope.
    pub fn receive(&mut self, env: &Envelope) -> Result<(), ReplicaError> {
        match &env.message {
            Message::ApplyOp { .. } | Message::Undo {} | Message::Redo {} => {
                if env.seq != Some(self.seq + 1) {
                    return Err(ReplicaError::OutOfOrder {
                        expected: self.seq + 1,
                        got: env.seq,
                    });
                }
                let res = match &env.message {
                    // the relay already enforced the move mode
                    Message::ApplyOp { op } => self.state.apply(op.clone(), MoveMode::Arbitrary),
                    Message::Undo {} => self.state.undo().map(drop),
                    _ => self.state.redo().map(drop),
                };
                res.map_err(ReplicaError::Replay)?;
                self.seq += 1;
            }
            Message::ParticipantUpdate {
                participants,
                host,
                editor,
                ..
            } => {
                self.participants = participants.clone();
                self.host = *host;
                self.editor = *editor;
            }
            Message::Reject {
                reason, ref_seq, ..
            } => self.rejects.push((*reason, *ref_seq)),
            Message::RequestEdit { from: Some(p) } => self.pending_requests.push(*p),
            _ => {}
        }
        Ok(())
    }

    /// Envelope for a seq-checked client request based on the local seq.
    pub fn request(&self, session_id: &str, message: Message) -> Envelope {
        let seq = matches!(
            message,
            Message::ApplyOp { .. } | Message::Undo {} | Message::Redo {}
        )
        .then_some(self.seq);
        Envelope::new(session_id, seq, message)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::{parse_uvl, serialize_uvl, CAR_MODEL_UVL};

    fn car_session() -> Session {
        Session::host(
            "s1",
            parse_uvl(CAR_MODEL_UVL).unwrap(),
            "Alice",
            MoveMode::LateralOnly,
        )
        .unwrap()
    }

    fn create(name: &str) -> Message {
        Message::ApplyOp {
            op: EditOp::CreateFeature {
                name: name.into(),
                parent: "Car".into(),
                index: 0,
            },
        }
    }

    fn reason(out: &[Outgoing]) -> Option<RejectReason> {
        match &out[0].envelope.message {
            Message::Reject { reason, .. } => Some(*reason),
            _ => None,
        }
    }

    #[test]
    fn host_starts_alone() {
        let s = car_session();
        assert_eq!(s.editor(), s.host_id());
        assert_eq!(s.participants().len(), 1);
        assert_eq!(s.seq(), 0);
        assert_ne!(new_session_id(), new_session_id());
        let link = share_link("http://localhost:8080/", "abc123");
        assert_eq!(parse_share_link(&link), Some("abc123"));
    }

    #[test]
    fn join_welcomes_and_notifies() {
        let mut s = car_session();
        let (bob, out) = s.join("Bob");
        assert_eq!(out[0].to, vec![bob]);
        let replica = Replica::from_welcome(&out[0].envelope).unwrap();
        assert_eq!(serialize_uvl(replica.model()), serialize_uvl(s.model()));
        assert_eq!(replica.editor, s.host_id());
        assert_eq!(out[1].to, vec![s.host_id()]);
        let (_, out) = s.join("Bob");
        let names: Vec<String> = s.participants().into_iter().map(|p| p.name).collect();
        assert_eq!(names, ["Alice", "Bob", "Bob (2)"]);
        assert!(matches!(
            out[1].envelope.message,
            Message::ParticipantUpdate { .. }
        ));
    }

    #[test]
    fn request_grant_revoke() {
        let mut s = car_session();
        let alice = s.host_id();
        let (bob, _) = s.join("Bob");
        let out = s.handle(bob, None, Message::RequestEdit { from: None });
        assert_eq!(out[0].to, vec![alice]);
        assert_eq!(
            out[0].envelope.message,
            Message::RequestEdit { from: Some(bob) }
        );
        s.handle(alice, None, Message::GrantEdit { to: bob });
        assert_eq!(s.editor(), bob);
        assert_eq!(
            reason(&s.handle(bob, None, Message::RevokeEdit {})),
            Some(RejectReason::Unauthorized)
        );
        s.handle(alice, None, Message::RevokeEdit {});
        assert_eq!(s.editor(), alice);
        assert_eq!(
            reason(&s.handle(bob, Some(0), create("X"))),
            Some(RejectReason::NotEditor)
        );
        assert_eq!(s.seq(), 0);
    }

    #[test]
    fn ops_and_shared_undo() {
        let mut s = car_session();
        let alice = s.host_id();
        let (bob, out) = s.join("Bob");
        let mut rb = Replica::from_welcome(&out[0].envelope).unwrap();
        let out = s.handle(alice, Some(0), create("X"));
        assert_eq!(out[0].envelope.seq, Some(1));
        rb.receive(&out[0].envelope).unwrap();
        let out = s.handle(bob, Some(1), Message::Undo {});
        rb.receive(&out[0].envelope).unwrap();
        assert_eq!(s.seq(), 2);
        assert_eq!(
            serialize_uvl(rb.model()),
            serialize_uvl(&parse_uvl(CAR_MODEL_UVL).unwrap())
        );
        assert_eq!(serialize_uvl(rb.model()), serialize_uvl(s.model()));
        assert_eq!(
            reason(&s.handle(bob, Some(1), Message::Redo {})),
            Some(RejectReason::Stale)
        );
        let root_delete = Message::ApplyOp {
            op: EditOp::DeleteFeature {
                feature: "Car".into(),
            },
        };
        assert_eq!(
            reason(&s.handle(alice, Some(2), root_delete)),
            Some(RejectReason::ApplicationError)
        );
        assert_eq!(s.seq(), 2);
    }

    #[test]
    fn undo_on_fresh_session_rejected() {
        let mut s = car_session();
        let out = s.handle(s.host_id(), Some(0), Message::Undo {});
        assert_eq!(reason(&out), Some(RejectReason::EmptyHistory));
    }

    #[test]
    fn host_leaving_hands_over() {
        let mut s = car_session();
        let alice = s.host_id();
        let (bob, _) = s.join("Bob");
        let (carol, _) = s.join("Carol");
        s.handle(alice, None, Message::GrantEdit { to: carol });
        s.leave(alice);
        assert_eq!(s.host_id(), bob);
        assert_eq!(s.editor(), carol);
        s.leave(carol);
        assert_eq!(s.editor(), bob);
        s.leave(bob);
        assert!(s.is_empty());
    }

    #[test]
    fn envelope_wire_form() {
        let env = Envelope::new("s1", Some(3), Message::Undo {});
        assert_eq!(
            serde_json::to_value(&env).unwrap(),
            serde_json::json!({"sessionId": "s1", "seq": 3, "type": "Undo", "payload": {}})
        );
        let join: Envelope =
            serde_json::from_str(r#"{"type":"Join","sessionId":"s1","payload":{"name":"Bob"}}"#)
                .unwrap();
        assert_eq!(
            join.message,
            Message::Join {
                name: "Bob".into(),
                host_token: None
            }
        );
        let rej = Envelope::reject("s1", RejectReason::NotEditor, 4, "x");
        assert_eq!(
            serde_json::to_value(&rej).unwrap()["payload"]["reason"],
            "not-editor"
        );
        assert_eq!(serde_json::to_value(&rej).unwrap()["payload"]["refSeq"], 4);
    }
}
