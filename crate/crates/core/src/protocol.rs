//! Group-sequential aggregation state machines.
//!
//! Users are partitioned into `Γ` groups of `ν = T + D + 1`. Inside a group
//! every user Shamir-shares its model at the points `α_1..α_ν` and sums what
//! it receives into `Q`. Users with equal position `t` then form a chain
//! across groups, each adding its `Q` to the running partial `S` and handing
//! it on. The last group uploads `S` to the server, which interpolates the
//! constant term from any `T + 1` uploads.
//!
//! A user that never receives its upstream partial stays silent for the rest
//! of the run, so each dropout kills at most one chain.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::{EvalPoint, FieldSpec, ModelVector};
use crate::sharing::{
    build_polynomial, reconstruct_aggregate, user_rng, NoiseSet, SharePolynomial,
};

/// Protocol parameters. User ids are 1-based throughout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ProtocolParams {
    pub users: usize,
    pub threshold: usize,
    pub max_dropouts: usize,
    pub model_len: usize,
    pub field: FieldSpec,
}

impl ProtocolParams {
    pub fn new(
        users: usize,
        threshold: usize,
        max_dropouts: usize,
        model_len: usize,
        field: FieldSpec,
    ) -> Result<Self> {
        let params = Self {
            users,
            threshold,
            max_dropouts,
            model_len,
            field,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.users == 0 {
            return Err(Error::InvalidParams("N must be >= 1".into()));
        }
        if self.threshold == 0 {
            return Err(Error::InvalidParams("T must be >= 1".into()));
        }
        if self.model_len == 0 {
            return Err(Error::InvalidParams("L must be >= 1".into()));
        }
        let nu = self.nu();
        if !self.users.is_multiple_of(nu) {
            return Err(Error::IndivisibleN { n: self.users, nu });
        }
        if self.threshold + self.max_dropouts >= self.users {
            return Err(Error::InvalidParams(format!(
                "T+D={} must be < N={}",
                self.threshold + self.max_dropouts,
                self.users
            )));
        }
        if self.field.modulus() <= nu as u64 {
            return Err(Error::InvalidParams(format!(
                "p={} must exceed nu={nu}",
                self.field.modulus()
            )));
        }
        Ok(())
    }

    /// Group size `ν = T + D + 1`.
    pub fn nu(&self) -> usize {
        self.threshold + self.max_dropouts + 1
    }

    /// Number of groups `Γ = N / ν`.
    pub fn groups(&self) -> usize {
        self.users / self.nu()
    }

    /// Collusion bounds below 2 work but sit outside the analysed range.
    pub fn has_nontrivial_threshold(&self) -> bool {
        self.threshold >= 2
    }

    pub fn eval_point(&self, t: usize) -> EvalPoint {
        EvalPoint::for_index(self.field, t).expect("p > nu keeps alpha_t nonzero")
    }
}

/// `(γ, t)` coordinate of a user, both 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct GroupPosition {
    pub gamma: usize,
    pub t: usize,
}

impl fmt::Display for GroupPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.gamma, self.t)
    }
}

/// Bijection between user ids and group positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupLayout {
    positions: Vec<GroupPosition>,
    members: Vec<Vec<usize>>,
}

impl GroupLayout {
    fn from_order(order: &[usize], nu: usize) -> Self {
        let mut positions = vec![GroupPosition { gamma: 0, t: 0 }; order.len()];
        let members: Vec<Vec<usize>> = order.chunks(nu).map(|c| c.to_vec()).collect();
        for (g, group) in members.iter().enumerate() {
            for (i, &user) in group.iter().enumerate() {
                positions[user - 1] = GroupPosition {
                    gamma: g + 1,
                    t: i + 1,
                };
            }
        }
        Self { positions, members }
    }

    pub fn position(&self, user: usize) -> GroupPosition {
        self.positions[user - 1]
    }

    pub fn user_at(&self, pos: GroupPosition) -> usize {
        self.members[pos.gamma - 1][pos.t - 1]
    }

    pub fn group(&self, gamma: usize) -> &[usize] {
        &self.members[gamma - 1]
    }

    pub fn groups(&self) -> usize {
        self.members.len()
    }

    pub fn users(&self) -> usize {
        self.positions.len()
    }
}

/// Canonical contiguous layout: user `n = (γ-1)ν + t`.
pub fn assign_groups(params: &ProtocolParams) -> Result<GroupLayout> {
    let nu = params.nu();
    if !params.users.is_multiple_of(nu) {
        return Err(Error::IndivisibleN {
            n: params.users,
            nu,
        });
    }
    let order: Vec<usize> = (1..=params.users).collect();
    Ok(GroupLayout::from_order(&order, nu))
}

/// Layout from a seeded permutation of the users.
pub fn assign_groups_shuffled(params: &ProtocolParams, seed: u64) -> Result<GroupLayout> {
    let nu = params.nu();
    if !params.users.is_multiple_of(nu) {
        return Err(Error::IndivisibleN {
            n: params.users,
            nu,
        });
    }
    let mut order: Vec<usize> = (1..=params.users).collect();
    order.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    Ok(GroupLayout::from_order(&order, nu))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProtocolMessage {
    /// `F_from(α_{to.t})`, exchanged inside one group.
    IntraShare {
        from: GroupPosition,
        to: GroupPosition,
        payload: ModelVector,
    },
    /// `S_(γ,t)`, sent from `(γ,t)` to `(γ+1,t)`.
    SequencePartial {
        gamma: usize,
        t: usize,
        payload: ModelVector,
    },
    /// `S_(Γ,t)` sent to the server.
    ServerUpload { t: usize, payload: ModelVector },
    /// No message.
    Null,
}

impl ProtocolMessage {
    pub fn payload(&self) -> Option<&ModelVector> {
        match self {
            Self::IntraShare { payload, .. }
            | Self::SequencePartial { payload, .. }
            | Self::ServerUpload { payload, .. } => Some(payload),
            Self::Null => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Self::Null)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Intra,
    Sequence,
    Upload,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Intra => "intra",
            Phase::Sequence => "sequence",
            Phase::Upload => "upload",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Recipient {
    User(usize),
    Server,
}

impl fmt::Display for Recipient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Recipient::User(u) => write!(f, "{u}"),
            Recipient::Server => f.write_str("server"),
        }
    }
}

/// One delivered message with its routing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub phase: Phase,
    pub from: usize,
    pub to: Recipient,
    /// Evaluation index for intra shares, chain index otherwise.
    pub t: usize,
    pub message: ProtocolMessage,
}

impl Envelope {
    pub fn to_line(&self) -> String {
        let digest = match self.message.payload() {
            Some(p) => payload_digest(p),
            None => "null".to_string(),
        };
        format!(
            "{} {} {} {} {}",
            self.phase, self.from, self.to, self.t, digest
        )
    }
}

/// First 8 bytes of SHA-256 over the modulus and entries (little endian), hex.
pub fn payload_digest(v: &ModelVector) -> String {
    let mut h = Sha256::new();
    h.update(v.spec().modulus().to_le_bytes());
    for x in v.values() {
        h.update(x.to_le_bytes());
    }
    h.finalize()[..8]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Every message of a run, in delivery order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MessageLog {
    records: Vec<Envelope>,
}

impl MessageLog {
    pub fn push(&mut self, e: Envelope) {
        self.records.push(e);
    }

    pub fn records(&self) -> &[Envelope] {
        &self.records
    }

    pub fn iter(&self) -> impl Iterator<Item = &Envelope> {
        self.records.iter()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Line format: `phase from to t digest`, one message per line.
    pub fn write_lines<W: Write>(&self, mut out: W) -> io::Result<()> {
        for r in &self.records {
            writeln!(out, "{}", r.to_line())?;
        }
        Ok(())
    }

    pub fn to_lines(&self) -> String {
        let mut buf = Vec::new();
        self.write_lines(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("log lines are ASCII")
    }
}

/// When a dropped user goes silent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DropoutTiming {
    /// Sends no shares; its model is excluded from the aggregate.
    BeforeSharing,
    /// Shares delivered, then gone before the chain phase.
    AfterSharing,
    /// Computes `Q` and receives its upstream partial but never forwards.
    MidSequence,
}

impl DropoutTiming {
    pub fn shares_distributed(self) -> bool {
        !matches!(self, DropoutTiming::BeforeSharing)
    }
}

pub type DropoutSchedule = BTreeMap<usize, DropoutTiming>;

/// Local state of user `(γ, t)`.
#[derive(Debug, Clone)]
pub struct UserState {
    pub user: usize,
    pub position: GroupPosition,
    pub poly: SharePolynomial,
    /// Slot per sender position `t'`; `None` marks a Null (treated as zero).
    pub received_shares: BTreeMap<usize, Option<ModelVector>>,
    pub q: Option<ModelVector>,
    pub upstream: Option<ModelVector>,
    pub alive: bool,
    pub silenced: bool,
    dropout: Option<DropoutTiming>,
}

impl UserState {
    pub fn new(user: usize, position: GroupPosition, poly: SharePolynomial) -> Self {
        Self {
            user,
            position,
            poly,
            received_shares: BTreeMap::new(),
            q: None,
            upstream: None,
            alive: true,
            silenced: false,
            dropout: None,
        }
    }

    pub fn with_dropout(mut self, timing: Option<DropoutTiming>) -> Self {
        self.dropout = timing;
        if timing == Some(DropoutTiming::BeforeSharing) {
            self.alive = false;
        }
        self
    }

    pub fn dropout(&self) -> Option<DropoutTiming> {
        self.dropout
    }

    /// `F_self(α_{t'})` for every `t'` in the group, self included.
    pub fn shares(&self, params: &ProtocolParams) -> Result<Vec<(usize, ModelVector)>> {
        (1..=params.nu())
            .map(|t| Ok((t, self.poly.eval(params.eval_point(t).alpha())?)))
            .collect()
    }

    pub fn receive_share(&mut self, from_t: usize, share: Option<ModelVector>) {
        self.received_shares.insert(from_t, share);
    }

    /// `Q_(γ,t) = sum_{t'} F_(γ,t')(α_t)`, Null slots counting as zero.
    pub fn compute_q(&mut self, params: &ProtocolParams) -> Result<&ModelVector> {
        let nu = params.nu();
        if let Some(missing) = (1..=nu).find(|t| !self.received_shares.contains_key(t)) {
            return Err(Error::PhaseViolation(format!(
                "user {} computing Q before the share from t'={missing} resolved",
                self.user
            )));
        }
        let mut q = ModelVector::zeros(params.field, params.model_len)?;
        for share in self.received_shares.values().flatten() {
            q.add_assign(share)?;
        }
        Ok(self.q.insert(q))
    }

    /// Advances the chain. `incoming` must be `None` in group 1 and the
    /// upstream message otherwise. Returns the outgoing `S_(γ,t)` as a
    /// `SequencePartial`, or a `ServerUpload` in the last group, or `Null`
    /// if this user or its upstream is silent.
    pub fn step_sequence(
        &mut self,
        incoming: Option<&ProtocolMessage>,
        groups: usize,
    ) -> Result<ProtocolMessage> {
        let GroupPosition { gamma, t } = self.position;
        let upstream = match (gamma, incoming) {
            (1, None) => None,
            (1, Some(_)) => {
                return Err(Error::PhaseViolation(format!(
                    "user {} in group 1 received an upstream partial",
                    self.user
                )))
            }
            (_, None) => {
                return Err(Error::PhaseViolation(format!(
                    "user {} stepped without its upstream message",
                    self.user
                )))
            }
            (_, Some(ProtocolMessage::Null)) => {
                self.silenced = true;
                return Ok(ProtocolMessage::Null);
            }
            (
                _,
                Some(ProtocolMessage::SequencePartial {
                    gamma: g,
                    t: from_t,
                    payload,
                }),
            ) => {
                if *from_t != t {
                    return Err(Error::WrongSequence {
                        expected: t,
                        got: *from_t,
                    });
                }
                if *g + 1 != gamma {
                    return Err(Error::PhaseViolation(format!(
                        "user {} in group {gamma} received a partial from group {g}",
                        self.user
                    )));
                }
                Some(payload.clone())
            }
            (_, Some(other)) => {
                return Err(Error::PhaseViolation(format!(
                    "user {} received {other:?} in the chain phase",
                    self.user
                )))
            }
        };
        self.upstream = upstream;
        if self.dropout.is_some() {
            self.alive = false;
        }
        if !self.alive || self.silenced {
            self.silenced = true;
            return Ok(ProtocolMessage::Null);
        }
        let q = self.q.as_ref().ok_or_else(|| {
            Error::PhaseViolation(format!("user {} stepped before computing Q", self.user))
        })?;
        let s = match &self.upstream {
            Some(u) => u.add(q)?,
            None => q.clone(),
        };
        Ok(if gamma == groups {
            ProtocolMessage::ServerUpload { t, payload: s }
        } else {
            ProtocolMessage::SequencePartial {
                gamma,
                t,
                payload: s,
            }
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct ServerState {
    pub uploads: BTreeMap<usize, ModelVector>,
    pub recovered: Option<ModelVector>,
}

impl ServerState {
    pub fn receive(&mut self, msg: &ProtocolMessage) -> Result<()> {
        match msg {
            ProtocolMessage::ServerUpload { t, payload } => {
                self.uploads.insert(*t, payload.clone());
                Ok(())
            }
            ProtocolMessage::Null => Ok(()),
            other => Err(Error::PhaseViolation(format!(
                "server received a user-to-user message {other:?}"
            ))),
        }
    }

    /// Interpolates the aggregate from all uploads (surplus ones checked).
    pub fn recover(&mut self, params: &ProtocolParams) -> Result<ModelVector> {
        let needed = params.threshold + 1;
        if self.uploads.len() < needed {
            return Err(Error::TooManyDropouts {
                needed,
                got: self.uploads.len(),
            });
        }
        let points: Vec<_> = self
            .uploads
            .iter()
            .map(|(&t, v)| (params.eval_point(t), v.clone()))
            .collect();
        let w = reconstruct_aggregate(&points, params.threshold)?;
        self.recovered = Some(w.clone());
        Ok(w)
    }
}

/// Result of one protocol execution.
#[derive(Debug, Clone)]
pub struct Execution {
    pub recovered: ModelVector,
    pub log: MessageLog,
    /// Users whose shares were delivered (and hence are in the aggregate).
    pub contributors: BTreeSet<usize>,
    pub server: ServerState,
    pub users: Vec<UserState>,
}

/// Noise for every user from per-user streams of `seed`.
pub fn sample_noise(params: &ProtocolParams, seed: u64) -> Result<Vec<NoiseSet>> {
    (1..=params.users)
        .map(|u| {
            NoiseSet::sample(
                params.field,
                params.threshold,
                params.model_len,
                &mut user_rng(seed, u),
            )
        })
        .collect()
}

fn check_inputs(params: &ProtocolParams, models: &[ModelVector], noise: &[NoiseSet]) -> Result<()> {
    params.validate()?;
    if models.len() != params.users {
        return Err(Error::InvalidParams(format!(
            "expected {} models, got {}",
            params.users,
            models.len()
        )));
    }
    if noise.len() != params.users {
        return Err(Error::InvalidParams(format!(
            "expected {} noise sets, got {}",
            params.users,
            noise.len()
        )));
    }
    for m in models {
        if m.spec() != params.field {
            return Err(Error::MixedField(
                params.field.modulus(),
                m.spec().modulus(),
            ));
        }
        if m.len() != params.model_len {
            return Err(Error::LengthMismatch(params.model_len, m.len()));
        }
    }
    Ok(())
}

/// Runs all phases with explicit noise. Does not bound the number of
/// dropouts, so callers can observe `TooManyDropouts`.
pub fn execute(
    params: &ProtocolParams,
    layout: &GroupLayout,
    models: &[ModelVector],
    noise: &[NoiseSet],
    schedule: &DropoutSchedule,
) -> Result<Execution> {
    check_inputs(params, models, noise)?;
    if layout.users() != params.users || layout.groups() != params.groups() {
        return Err(Error::InvalidParams(
            "layout does not match parameters".into(),
        ));
    }
    if let Some(&u) = schedule.keys().find(|&&u| u == 0 || u > params.users) {
        return Err(Error::InvalidDropoutPlan(format!("user {u} out of range")));
    }
    let nu = params.nu();
    let groups = params.groups();
    let mut users = Vec::with_capacity(params.users);
    for (i, (w, z)) in models.iter().zip(noise).enumerate() {
        let id = i + 1;
        let poly = build_polynomial(w.clone(), z, params.threshold)?;
        users.push(
            UserState::new(id, layout.position(id), poly).with_dropout(schedule.get(&id).copied()),
        );
    }
    let mut log = MessageLog::default();

    // intra-group sharing, by sender id then recipient position
    for sender in 1..=params.users {
        let pos = users[sender - 1].position;
        let distributes = users[sender - 1]
            .dropout()
            .is_none_or(DropoutTiming::shares_distributed);
        let shares = if distributes {
            Some(users[sender - 1].shares(params)?)
        } else {
            None
        };
        for to_t in 1..=nu {
            let to_pos = GroupPosition {
                gamma: pos.gamma,
                t: to_t,
            };
            let recipient = layout.user_at(to_pos);
            let share = shares.as_ref().map(|s| s[to_t - 1].1.clone());
            if to_t != pos.t {
                let message = match &share {
                    Some(payload) => ProtocolMessage::IntraShare {
                        from: pos,
                        to: to_pos,
                        payload: payload.clone(),
                    },
                    None => ProtocolMessage::Null,
                };
                log.push(Envelope {
                    phase: Phase::Intra,
                    from: sender,
                    to: Recipient::User(recipient),
                    t: to_t,
                    message,
                });
            }
            users[recipient - 1].receive_share(pos.t, share);
        }
    }

    for u in users.iter_mut() {
        let computes = matches!(u.dropout(), None | Some(DropoutTiming::MidSequence));
        if computes {
            u.compute_q(params)?;
        } else {
            u.alive = false;
        }
    }

    // chains, group by group
    let mut server = ServerState::default();
    let mut pending: Vec<Option<ProtocolMessage>> = vec![None; nu + 1];
    for gamma in 1..=groups {
        #[allow(clippy::needless_range_loop)]
        for t in 1..=nu {
            let id = layout.user_at(GroupPosition { gamma, t });
            let incoming = pending[t].take();
            let out = users[id - 1].step_sequence(incoming.as_ref(), groups)?;
            if gamma < groups {
                let next = layout.user_at(GroupPosition {
                    gamma: gamma + 1,
                    t,
                });
                log.push(Envelope {
                    phase: Phase::Sequence,
                    from: id,
                    to: Recipient::User(next),
                    t,
                    message: out.clone(),
                });
                pending[t] = Some(out);
            } else {
                server.receive(&out)?;
                log.push(Envelope {
                    phase: Phase::Upload,
                    from: id,
                    to: Recipient::Server,
                    t,
                    message: out,
                });
            }
        }
    }

    let recovered = server.recover(params)?;
    let contributors = users
        .iter()
        .filter(|u| u.dropout().is_none_or(DropoutTiming::shares_distributed))
        .map(|u| u.user)
        .collect();
    Ok(Execution {
        recovered,
        log,
        contributors,
        server,
        users,
    })
}

/// Canonical layout, seeded noise, every listed user dropping before sharing.
pub fn run_protocol(
    params: &ProtocolParams,
    models: &[ModelVector],
    dropouts: &BTreeSet<usize>,
    seed: u64,
) -> Result<(ModelVector, MessageLog)> {
    if dropouts.len() > params.max_dropouts {
        return Err(Error::InvalidDropoutPlan(format!(
            "{} dropouts exceed D={}",
            dropouts.len(),
            params.max_dropouts
        )));
    }
    let layout = assign_groups(params)?;
    let noise = sample_noise(params, seed)?;
    let schedule = dropouts
        .iter()
        .map(|&u| (u, DropoutTiming::BeforeSharing))
        .collect();
    let exec = execute(params, &layout, models, &noise, &schedule)?;
    Ok((exec.recovered, exec.log))
}
