//! Append-only record of every message exchanged in a run, and the audit
//! that checks what the server could have learned from it.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::field::{FieldElement, ELEMENT_BYTES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Party {
    Server,
    User(usize),
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Party::Server => write!(f, "server"),
            Party::User(i) => write!(f, "user:{i}"),
        }
    }
}

impl FromStr for Party {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "server" {
            return Ok(Party::Server);
        }
        s.strip_prefix("user:")
            .and_then(|i| i.parse().ok())
            .map(Party::User)
            .ok_or_else(|| format!("unknown party {s:?}"))
    }
}

impl Serialize for Party {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Party {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MessageKind {
    PromptShare,
    GradientShare,
    DistanceShare,
    CenterGapShare,
    AggregateShare,
    Assignment,
    AssignmentAck,
    GlobalUpdate,
    PlainPrompt,
    PlainGradient,
}

impl MessageKind {
    pub const SERVER_ALLOWED: [MessageKind; 4] = [
        MessageKind::DistanceShare,
        MessageKind::CenterGapShare,
        MessageKind::AggregateShare,
        MessageKind::AssignmentAck,
    ];

    pub fn is_plain_payload(self) -> bool {
        matches!(self, MessageKind::PlainPrompt | MessageKind::PlainGradient)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MessageRecord {
    pub round: usize,
    pub sender: Party,
    pub receiver: Party,
    pub kind: MessageKind,
    /// Payload size in bytes.
    pub size: usize,
    /// Hex SHA-256 of the little-endian payload.
    pub digest: String,
}

/// One decoding step performed by the server.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructionRecord {
    pub round: usize,
    pub what: String,
    pub degree: usize,
    pub holders: Vec<usize>,
}

/// Decoding rules the audit enforces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconPolicy {
    /// `ell + t - 1`.
    pub code_degree: usize,
    pub n: usize,
}

impl ReconPolicy {
    pub fn expected_degree(&self, what: &str) -> Option<usize> {
        match what {
            "distance" | "center-gap" => Some(2 * self.code_degree),
            "aggregate" => Some(self.code_degree),
            _ => None,
        }
    }
}

pub fn digest(payload: &[FieldElement]) -> String {
    let mut h = Sha256::new();
    for e in payload {
        h.update(e.to_le_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub policy: ReconPolicy,
    pub messages: Vec<MessageRecord>,
    pub reconstructions: Vec<ReconstructionRecord>,
    /// Digests of plaintext quantized prompts and gradients. A message whose
    /// digest appears here carried a secret in the clear.
    #[serde(skip)]
    pub secret_digests: BTreeSet<String>,
}

impl Transcript {
    pub fn new(policy: ReconPolicy) -> Self {
        Self { policy, messages: Vec::new(), reconstructions: Vec::new(), secret_digests: BTreeSet::new() }
    }

    pub fn record(&mut self, round: usize, sender: Party, receiver: Party, kind: MessageKind, payload: &[FieldElement]) {
        self.messages.push(MessageRecord {
            round,
            sender,
            receiver,
            kind,
            size: payload.len() * ELEMENT_BYTES,
            digest: digest(payload),
        });
    }

    pub fn register_secret(&mut self, payload: &[FieldElement]) {
        self.secret_digests.insert(digest(payload));
    }

    pub fn record_reconstruction(&mut self, round: usize, what: &str, degree: usize, holders: Vec<usize>) {
        self.reconstructions.push(ReconstructionRecord { round, what: what.into(), degree, holders });
    }

    /// Bytes sent by `user` in `round`, restricted to the given kinds.
    pub fn bytes_sent(&self, round: usize, user: usize, kinds: &[MessageKind]) -> usize {
        self.messages
            .iter()
            .filter(|m| m.round == round && m.sender == Party::User(user) && kinds.contains(&m.kind))
            .map(|m| m.size)
            .sum()
    }

    pub fn write_messages<W: Write>(&self, mut w: W) -> io::Result<()> {
        for m in &self.messages {
            serde_json::to_writer(&mut w, m)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn write_reconstructions<W: Write>(&self, mut w: W) -> io::Result<()> {
        for r in &self.reconstructions {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Rebuilds a transcript from its line-delimited files.
    pub fn read<R1: BufRead, R2: BufRead>(policy: ReconPolicy, messages: R1, recons: R2) -> io::Result<Self> {
        let mut t = Self::new(policy);
        for (no, line) in messages.lines().enumerate() {
            let line = line?;
            if !line.trim().is_empty() {
                t.messages.push(parse(&line, no + 1)?);
            }
        }
        for (no, line) in recons.lines().enumerate() {
            let line = line?;
            if !line.trim().is_empty() {
                t.reconstructions.push(parse(&line, no + 1)?);
            }
        }
        Ok(t)
    }
}

fn parse<T: serde::de::DeserializeOwned>(line: &str, no: usize) -> io::Result<T> {
    serde_json::from_str(line)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {no}: {e}")))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub check: String,
    /// Index into the message or reconstruction list.
    pub index: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub passed: bool,
    pub messages_checked: usize,
    pub reconstructions_checked: usize,
    pub violations: Vec<Violation>,
}

/// Checks that the server only received coded distances, coded gaps, coded
/// aggregates and acknowledgements; that no user sent a plaintext prompt or
/// gradient; and that every reconstruction used the policy degree with
/// enough distinct holders.
pub fn audit_transcript(t: &Transcript) -> AuditReport {
    let mut violations = Vec::new();
    for (index, m) in t.messages.iter().enumerate() {
        if m.receiver == Party::Server && !MessageKind::SERVER_ALLOWED.contains(&m.kind) {
            violations.push(Violation {
                check: "server-view".into(),
                index,
                detail: format!("round {}: server received {:?} from {}", m.round, m.kind, m.sender),
            });
        }
        if let Party::User(_) = m.sender {
            if m.kind.is_plain_payload() || t.secret_digests.contains(&m.digest) {
                violations.push(Violation {
                    check: "plain-payload".into(),
                    index,
                    detail: format!("round {}: {} sent an unshared payload to {}", m.round, m.sender, m.receiver),
                });
            }
        }
    }
    for (index, r) in t.reconstructions.iter().enumerate() {
        let distinct: BTreeSet<usize> = r.holders.iter().copied().collect();
        let problem = match t.policy.expected_degree(&r.what) {
            None => Some(format!("unknown reconstruction {:?}", r.what)),
            Some(d) if d != r.degree => Some(format!("{} decoded at degree {} instead of {d}", r.what, r.degree)),
            Some(_) if distinct.len() != r.holders.len() => Some("duplicate holders".into()),
            Some(_) if r.holders.iter().any(|&h| h >= t.policy.n) => Some("unknown holder".into()),
            Some(d) if r.holders.len() < d + 1 => {
                Some(format!("{} shares for degree {d}", r.holders.len()))
            }
            Some(_) => None,
        };
        if let Some(detail) = problem {
            violations.push(Violation {
                check: "reconstruction-policy".into(),
                index,
                detail: format!("round {}: {detail}", r.round),
            });
        }
    }
    AuditReport {
        passed: violations.is_empty(),
        messages_checked: t.messages.len(),
        reconstructions_checked: t.reconstructions.len(),
        violations,
    }
}
