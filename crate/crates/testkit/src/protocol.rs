//! Simulation of the collaboration relay with per-participant FIFO channels.
//!
//! [`run_trace`] drives one seeded random trace: clients act on their local
//! view, and the scheduler picks which channel head is delivered next, which
//! models arbitrary per-channel delays. [`explore`] enumerates every
//! relay-level trace up to a depth, deduplicating states.

use std::collections::{HashSet, VecDeque};

use fmkit_core::collab::{
    Envelope, Message, Outgoing, ParticipantId, RejectReason, Replica, Session,
};
use fmkit_core::editing::{EditOp, MoveMode};
use fmkit_core::formats::serialize_uvl;
use fmkit_core::model::{FeatureModel, GroupKind};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::gen::{random_model, random_op, rng, ModelShape};

const SESSION: &str = "sim";

struct Client {
    id: Option<ParticipantId>,
    replica: Option<Replica>,
    /// Relay to client.
    inbox: VecDeque<Envelope>,
    /// Client to relay.
    outbox: VecDeque<Envelope>,
    gone: bool,
    fresh: usize,
}

impl Client {
    fn new(id: Option<ParticipantId>) -> Self {
        Client {
            id,
            replica: None,
            inbox: VecDeque::new(),
            outbox: VecDeque::new(),
            gone: false,
            fresh: 0,
        }
    }
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct TraceReport {
    pub messages: usize,
    pub accepted: Vec<u64>,
    pub rejects: usize,
    pub violations: Vec<String>,
}

impl TraceReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Relay-side invariants: one editor who is a participant, host is a participant.
pub fn check_session(s: &Session) -> Result<(), String> {
    if s.is_empty() {
        return Ok(());
    }
    if !s.is_participant(s.editor()) {
        return Err(format!("editor {} is not a participant", s.editor()));
    }
    if !s.is_participant(s.host_id()) {
        return Err(format!("host {} is not a participant", s.host_id()));
    }
    Ok(())
}

struct Sim {
    relay: Session,
    clients: Vec<Client>,
    report: TraceReport,
}

impl Sim {
    fn route(&mut self, out: Vec<Outgoing>) {
        for o in out {
            for to in o.to {
                if let Some(c) = self
                    .clients
                    .iter_mut()
                    .find(|c| c.id == Some(to) && !c.gone)
                {
                    c.inbox.push_back(o.envelope.clone());
                }
            }
        }
    }

    fn relay_step(&mut self, k: usize) {
        let Some(env) = self.clients[k].outbox.pop_front() else {
            return;
        };
        let editor_before = self.relay.editor();
        let model_before = serialize_uvl(self.relay.model());
        let seq_before = self.relay.seq();
        let out = match (&env.message, self.clients[k].id) {
            (Message::Join { name, .. }, None) => {
                let (id, out) = self.relay.join(name);
                self.clients[k].id = Some(id);
                out
            }
            (_, Some(id)) => {
                if matches!(env.message, Message::Leave {}) {
                    self.clients[k].gone = true;
                }
                self.relay.handle(id, env.seq, env.message.clone())
            }
            (_, None) => return,
        };
        let from = self.clients[k].id;
        let applied = out
            .iter()
            .any(|o| matches!(o.envelope.message, Message::ApplyOp { .. }));
        if matches!(env.message, Message::ApplyOp { .. })
            && from != Some(editor_before)
            && (applied || serialize_uvl(self.relay.model()) != model_before)
        {
            self.report
                .violations
                .push(format!("non-editor {from:?} mutated the model"));
        }
        let seq_msgs: Vec<u64> = out
            .iter()
            .filter(|o| {
                matches!(
                    o.envelope.message,
                    Message::ApplyOp { .. } | Message::Undo {} | Message::Redo {}
                )
            })
            .filter_map(|o| o.envelope.seq)
            .collect();
        match seq_msgs.as_slice() {
            [] if self.relay.seq() != seq_before => self
                .report
                .violations
                .push("seq moved without broadcast".into()),
            [] => {}
            [s] if *s == seq_before + 1 && self.relay.seq() == *s => self.report.accepted.push(*s),
            other => self
                .report
                .violations
                .push(format!("bad seq broadcast {other:?} after {seq_before}")),
        }
        self.report.rejects += out
            .iter()
            .filter(|o| matches!(o.envelope.message, Message::Reject { .. }))
            .count();
        if let Err(e) = check_session(&self.relay) {
            self.report.violations.push(e);
        }
        self.route(out);
    }

    fn client_step(&mut self, k: usize) {
        let c = &mut self.clients[k];
        let Some(env) = c.inbox.pop_front() else {
            return;
        };
        match &mut c.replica {
            None => match Replica::from_welcome(&env) {
                Ok(r) => c.replica = Some(r),
                Err(_) => self.report.violations.push(format!(
                    "client {k} got {} before Welcome",
                    env.message.kind()
                )),
            },
            Some(r) => {
                if let Err(e) = r.receive(&env) {
                    self.report.violations.push(format!("client {k}: {e}"));
                }
            }
        }
    }

    /// Client `k` sends something based on its current local view.
    fn act(&mut self, k: usize, rng: &mut ChaCha8Rng) {
        let active: Vec<ParticipantId> = self
            .clients
            .iter()
            .filter(|c| !c.gone)
            .filter_map(|c| c.id)
            .collect();
        let c = &mut self.clients[k];
        let Some(r) = &c.replica else { return };
        let roll = rng.random_range(0..100);
        let msg = if roll < 45 || (r.is_editor() && roll < 60) {
            Message::ApplyOp {
                op: random_op(rng, r.model(), &mut c.fresh),
            }
        } else if roll < 65 {
            Message::Undo {}
        } else if roll < 75 {
            Message::Redo {}
        } else if roll < 82 {
            Message::RequestEdit { from: None }
        } else if roll < 92 {
            let to = active[rng.random_range(0..active.len())];
            Message::GrantEdit { to }
        } else if roll < 98 {
            Message::RevokeEdit {}
        } else {
            if active.len() <= 1 {
                return;
            }
            Message::Leave {}
        };
        let env = r.request(SESSION, msg);
        c.outbox.push_back(env);
        self.report.messages += 1;
    }

    fn pending(&self) -> Vec<(usize, bool)> {
        let mut v = Vec::new();
        for (k, c) in self.clients.iter().enumerate() {
            if !c.outbox.is_empty() {
                v.push((k, true));
            }
            if !c.inbox.is_empty() && !c.gone {
                v.push((k, false));
            }
        }
        v
    }
}

/// One randomized trace with up to `participants` clients and at most
/// `max_messages` client messages, followed by delivery to quiescence.
pub fn run_trace(seed: u64, participants: usize, max_messages: usize) -> TraceReport {
    let mut rng = rng(seed);
    let model = random_model(&mut rng, ModelShape::small(8, 2));
    let relay = Session::host(SESSION, model, "host", MoveMode::Arbitrary).expect("valid model");
    let host = relay.host_id();
    let mut sim = Sim {
        clients: vec![Client::new(Some(host))],
        relay,
        report: TraceReport::default(),
    };
    sim.clients[0].inbox.push_back(sim.relay.welcome(host));
    for k in 1..participants.max(1) {
        let mut c = Client::new(None);
        c.outbox.push_back(Envelope::new(
            SESSION,
            None,
            Message::Join {
                name: format!("guest{k}"),
                host_token: None,
            },
        ));
        sim.clients.push(c);
        sim.report.messages += 1;
    }
    while sim.report.messages < max_messages || !sim.pending().is_empty() {
        let pending = sim.pending();
        let can_act = sim.report.messages < max_messages;
        if pending.is_empty() || (can_act && rng.random_bool(0.4)) {
            if !can_act {
                break;
            }
            // favour whoever believes they hold the edit token
            let editor = sim
                .clients
                .iter()
                .position(|c| !c.gone && c.replica.as_ref().is_some_and(Replica::is_editor));
            let k = match editor {
                Some(e) if rng.random_bool(0.5) => e,
                _ => rng.random_range(0..sim.clients.len()),
            };
            if sim.clients[k].gone || sim.clients[k].replica.is_none() {
                // not yet welcomed; let deliveries catch up
                if pending.is_empty() {
                    sim.report.messages += 1;
                }
                continue;
            }
            sim.act(k, &mut rng);
        } else {
            let (k, to_relay) = pending[rng.random_range(0..pending.len())];
            if to_relay {
                sim.relay_step(k);
            } else {
                sim.client_step(k);
            }
        }
    }
    let reference = serialize_uvl(sim.relay.model());
    for (k, c) in sim.clients.iter().enumerate() {
        if c.gone {
            continue;
        }
        match &c.replica {
            Some(r) if serialize_uvl(r.model()) != reference => sim
                .report
                .violations
                .push(format!("client {k} diverged at quiescence")),
            Some(r) if r.seq != sim.relay.seq() => sim.report.violations.push(format!(
                "client {k} seq {} != {}",
                r.seq,
                sim.relay.seq()
            )),
            Some(r) if r.editor != sim.relay.editor() => sim
                .report
                .violations
                .push(format!("client {k} has stale editor")),
            None => sim
                .report
                .violations
                .push(format!("client {k} never welcomed")),
            _ => {}
        }
    }
    let expected: Vec<u64> = (1..=sim.report.accepted.len() as u64).collect();
    if sim.report.accepted != expected {
        sim.report.violations.push(format!(
            "accepted seqs {:?} are not 1..n",
            sim.report.accepted
        ));
    }
    sim.report
}

/// Abstract client action for exhaustive exploration.
#[derive(Debug, Clone, PartialEq)]
enum Action {
    Join,
    Op(usize, bool),
    Undo,
    Redo,
    Request,
    Grant(usize),
    Revoke,
    Leave,
}

fn op_alphabet(root: &str) -> Vec<EditOp> {
    vec![
        EditOp::CreateFeature {
            name: "X".into(),
            parent: root.into(),
            index: 0,
        },
        EditOp::DeleteFeature {
            feature: "X".into(),
        },
        EditOp::SetAbstract {
            feature: root.into(),
            value: true,
        },
        EditOp::SetGroup {
            parent: root.into(),
            group: GroupKind::Or,
        },
    ]
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct Exploration {
    pub states: usize,
    pub transitions: usize,
    pub violations: Vec<String>,
}

/// Breadth-first enumeration of relay states reachable in `depth` client
/// messages from up to `slots` participants (the host plus joiners). Each
/// seq-bearing message is tried with the current seq and with a stale one.
pub fn explore(model: FeatureModel, slots: usize, depth: usize) -> Exploration {
    let root = model.root_feature().name.clone();
    let ops = op_alphabet(&root);
    let start = Session::host(SESSION, model, "host", MoveMode::Arbitrary).expect("valid model");
    // slot k holds the participant id if joined, and whether it has left
    type Slots = Vec<(Option<ParticipantId>, bool)>;
    let mut initial: Slots = vec![(None, false); slots];
    initial[0] = (Some(start.host_id()), false);
    let key = |s: &Session, sl: &Slots| {
        format!("{}|{sl:?}", serde_json::to_string(s).expect("serializable"))
    };
    let mut seen: HashSet<String> = HashSet::new();
    seen.insert(key(&start, &initial));
    let mut frontier = vec![(start, initial)];
    let mut ex = Exploration {
        states: 1,
        ..Exploration::default()
    };
    if let Err(e) = check_session(&frontier[0].0) {
        ex.violations.push(e);
    }
    for _ in 0..depth {
        let mut next = Vec::new();
        for (state, sl) in &frontier {
            let joined: Vec<usize> = (0..slots)
                .filter(|&k| sl[k].0.is_some() && !sl[k].1)
                .collect();
            for k in 0..slots {
                let mut actions = Vec::new();
                match sl[k] {
                    (None, _) => actions.push(Action::Join),
                    (Some(_), true) => {}
                    (Some(_), false) => {
                        for i in 0..ops.len() {
                            actions.push(Action::Op(i, false));
                        }
                        actions.push(Action::Op(0, true));
                        actions.extend([
                            Action::Undo,
                            Action::Redo,
                            Action::Request,
                            Action::Revoke,
                        ]);
                        actions.extend(
                            joined
                                .iter()
                                .filter(|&&j| j != k)
                                .map(|&j| Action::Grant(j)),
                        );
                        if joined.len() > 1 {
                            actions.push(Action::Leave);
                        }
                    }
                }
                for a in actions {
                    let mut s = state.clone();
                    let mut slots2 = sl.clone();
                    let editor_before = s.editor();
                    let model_before = s.model().clone();
                    let seq_before = s.seq();
                    let me = sl[k].0;
                    let out = match &a {
                        Action::Join => {
                            let (id, out) = s.join(&format!("guest{k}"));
                            slots2[k].0 = Some(id);
                            out
                        }
                        Action::Leave => {
                            slots2[k].1 = true;
                            s.handle(me.expect("joined"), None, Message::Leave {})
                        }
                        other => {
                            let me = me.expect("joined");
                            let fresh = Some(seq_before);
                            let stale = Some(seq_before.wrapping_sub(1));
                            let (seq, msg) = match other {
                                Action::Op(i, st) => (
                                    if *st { stale } else { fresh },
                                    Message::ApplyOp {
                                        op: ops[*i].clone(),
                                    },
                                ),
                                Action::Undo => (fresh, Message::Undo {}),
                                Action::Redo => (fresh, Message::Redo {}),
                                Action::Request => (None, Message::RequestEdit { from: None }),
                                Action::Revoke => (None, Message::RevokeEdit {}),
                                Action::Grant(j) => (
                                    None,
                                    Message::GrantEdit {
                                        to: sl[*j].0.expect("joined"),
                                    },
                                ),
                                _ => unreachable!(),
                            };
                            s.handle(me, seq, msg)
                        }
                    };
                    ex.transitions += 1;
                    if let Err(e) = check_session(&s) {
                        ex.violations.push(format!("{a:?}: {e}"));
                    }
                    if matches!(a, Action::Op(..))
                        && me != Some(editor_before)
                        && *s.model() != model_before
                    {
                        ex.violations
                            .push(format!("{a:?} by non-editor changed the model"));
                    }
                    let accepted = out.iter().any(|o| {
                        matches!(
                            o.envelope.message,
                            Message::ApplyOp { .. } | Message::Undo {} | Message::Redo {}
                        )
                    });
                    let expected_seq = seq_before + u64::from(accepted);
                    if s.seq() != expected_seq {
                        ex.violations
                            .push(format!("{a:?}: seq {} expected {expected_seq}", s.seq()));
                    }
                    if let Some(Message::Reject {
                        reason: RejectReason::Stale,
                        ..
                    }) = out.first().map(|o| &o.envelope.message)
                    {
                        if *s.model() != model_before {
                            ex.violations.push("stale op mutated the model".into());
                        }
                    }
                    if seen.insert(key(&s, &slots2)) {
                        next.push((s, slots2));
                    }
                }
            }
        }
        ex.states += next.len();
        frontier = next;
    }
    ex
}
