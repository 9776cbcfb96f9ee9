//! Append-only ledger with a fixed block cadence and one-round voting.
//!
//! Six transaction kinds flow through it: publishers commit envelope hashes,
//! the key service announces rounds, managers log allocations, computers
//! commit result hashes, and managers log verification verdicts and
//! decryptions. A block closes every period and contains the transactions
//! that arrived strictly before it closed, so a transaction submitted exactly
//! on a boundary rides the next block. The proposer rotates by height; a
//! block commits only when strictly more than two-thirds of validators
//! approve it, otherwise its transactions stay queued for the next proposer.
//!
//! Transaction identity covers submitter and content but deliberately not
//! the submission timestamp: a retried submission must deduplicate, and two
//! runs of one deterministic pipeline must produce identical ids.

use crate::digest::Digest;
use crate::TimeMs;
use std::collections::BTreeSet;

/// Commit gate: strictly more than two-thirds of the validator set.
pub fn quorum_commits(yes: usize, validators: usize) -> bool {
    3 * yes > 2 * validators
}

/// Outcome of replicated-result verification, as logged on the ledger.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Verified(Digest),
    Rejected,
}

impl Verdict {
    pub fn is_verified(&self) -> bool {
        matches!(self, Verdict::Verified(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TxKind {
    /// A publisher pins the canonical hash of an outbound envelope.
    MessageCommit {
        envelope_hash: Digest,
        function_tag: u8,
    },
    /// A finished key ceremony announces the round.
    KeyRoundCommit {
        round_id: u64,
        public_key: Vec<u8>,
        commitment: Digest,
        expires_at: TimeMs,
    },
    /// A manager assigned a task replica to a computer.
    AllocationLog { task_id: Digest, computer: u32 },
    /// A computer pins the hash of a computed result.
    ResultCommit { task_id: Digest, result_hash: Digest },
    /// A manager's verdict over the replicated result hashes.
    VerificationLog {
        task_id: Digest,
        replicas: u32,
        verdict: Verdict,
    },
    /// A quorum decrypted a verified result. Carries no plaintext.
    DecryptionLog { task_id: Digest, quorum: Vec<u32> },
}

impl TxKind {
    pub fn name(&self) -> &'static str {
        match self {
            TxKind::MessageCommit { .. } => "msg",
            TxKind::KeyRoundCommit { .. } => "keyround",
            TxKind::AllocationLog { .. } => "alloc",
            TxKind::ResultCommit { .. } => "result",
            TxKind::VerificationLog { .. } => "verify",
            TxKind::DecryptionLog { .. } => "decrypt",
        }
    }

    /// Canonical payload serialization: tag byte, then fields in declared
    /// order, integers little-endian, variable-length parts length-prefixed.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64);
        match self {
            TxKind::MessageCommit {
                envelope_hash,
                function_tag,
            } => {
                out.push(1);
                out.extend_from_slice(envelope_hash.as_bytes());
                out.push(*function_tag);
            }
            TxKind::KeyRoundCommit {
                round_id,
                public_key,
                commitment,
                expires_at,
            } => {
                out.push(2);
                out.extend_from_slice(&round_id.to_le_bytes());
                out.extend_from_slice(&(public_key.len() as u32).to_le_bytes());
                out.extend_from_slice(public_key);
                out.extend_from_slice(commitment.as_bytes());
                out.extend_from_slice(&expires_at.to_le_bytes());
            }
            TxKind::AllocationLog { task_id, computer } => {
                out.push(3);
                out.extend_from_slice(task_id.as_bytes());
                out.extend_from_slice(&computer.to_le_bytes());
            }
            TxKind::ResultCommit {
                task_id,
                result_hash,
            } => {
                out.push(4);
                out.extend_from_slice(task_id.as_bytes());
                out.extend_from_slice(result_hash.as_bytes());
            }
            TxKind::VerificationLog {
                task_id,
                replicas,
                verdict,
            } => {
                out.push(5);
                out.extend_from_slice(task_id.as_bytes());
                out.extend_from_slice(&replicas.to_le_bytes());
                match verdict {
                    Verdict::Verified(d) => {
                        out.push(1);
                        out.extend_from_slice(d.as_bytes());
                    }
                    Verdict::Rejected => out.push(0),
                }
            }
            TxKind::DecryptionLog { task_id, quorum } => {
                out.push(6);
                out.extend_from_slice(task_id.as_bytes());
                out.extend_from_slice(&(quorum.len() as u32).to_le_bytes());
                for m in quorum {
                    out.extend_from_slice(&m.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn payload_hash(&self) -> Digest {
        Digest::of(&self.canonical_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub submitter: u32,
    pub kind: TxKind,
}

impl Transaction {
    /// Identity: submitter plus canonical payload. Submission time excluded;
    /// see the module note.
    pub fn id(&self) -> Digest {
        Digest::of_parts(&[&self.submitter.to_le_bytes(), &self.kind.canonical_bytes()])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingTx {
    pub tx: Transaction,
    pub submitted_at: TimeMs,
}

#[derive(Debug, Clone)]
pub struct Block {
    pub height: u64,
    pub parent: Digest,
    pub committed_at: TimeMs,
    pub proposer: u32,
    pub approvals: Vec<u32>,
    pub txs: Vec<PendingTx>,
}

impl Block {
    pub fn hash(&self) -> Digest {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&self.height.to_le_bytes());
        bytes.extend_from_slice(self.parent.as_bytes());
        bytes.extend_from_slice(&self.committed_at.to_le_bytes());
        bytes.extend_from_slice(&self.proposer.to_le_bytes());
        bytes.extend_from_slice(&(self.approvals.len() as u32).to_le_bytes());
        for a in &self.approvals {
            bytes.extend_from_slice(&a.to_le_bytes());
        }
        bytes.extend_from_slice(&(self.txs.len() as u32).to_le_bytes());
        for p in &self.txs {
            bytes.extend_from_slice(p.tx.id().as_bytes());
            bytes.extend_from_slice(&p.submitted_at.to_le_bytes());
        }
        Digest::of(&bytes)
    }
}

/// How a validator votes on every proposal it sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoteBehavior {
    Approve,
    Oppose,
    Silent,
}

#[derive(Debug, Clone)]
pub struct LedgerConfig {
    pub validators: usize,
    pub block_period_ms: u64,
}

impl Default for LedgerConfig {
    fn default() -> Self {
        LedgerConfig {
            validators: 5,
            block_period_ms: 1000,
        }
    }
}

#[derive(Debug)]
pub struct Ledger {
    config: LedgerConfig,
    behaviors: Vec<VoteBehavior>,
    mempool: Vec<PendingTx>,
    mempool_ids: BTreeSet<Digest>,
    committed_ids: BTreeSet<Digest>,
    blocks: Vec<Block>,
}

impl Ledger {
    pub fn new(config: LedgerConfig) -> Self {
        let behaviors = vec![VoteBehavior::Approve; config.validators];
        Ledger {
            config,
            behaviors,
            mempool: Vec::new(),
            mempool_ids: BTreeSet::new(),
            committed_ids: BTreeSet::new(),
            blocks: Vec::new(),
        }
    }

    pub fn config(&self) -> &LedgerConfig {
        &self.config
    }

    /// Overrides one validator's voting behavior (validators are 0-based,
    /// matching proposer rotation).
    pub fn set_behavior(&mut self, validator: usize, behavior: VoteBehavior) {
        self.behaviors[validator] = behavior;
    }

    /// Queues a transaction. Re-submitting an already pending or committed
    /// transaction is a no-op; both calls get the same id back.
    pub fn submit(&mut self, tx: Transaction, now: TimeMs) -> Digest {
        let id = tx.id();
        if self.committed_ids.contains(&id) || !self.mempool_ids.insert(id) {
            return id;
        }
        self.mempool.push(PendingTx {
            tx,
            submitted_at: now,
        });
        id
    }

    pub fn mempool_len(&self) -> usize {
        self.mempool.len()
    }

    /// Closes a block at `now` over every transaction submitted strictly
    /// before `now`. Returns the block if the vote passed, None when there
    /// was nothing to commit or the vote failed (either way the remaining
    /// transactions wait for the next period).
    pub fn commit_block(&mut self, now: TimeMs) -> Option<&Block> {
        let ready: Vec<PendingTx> = {
            let (take, keep): (Vec<_>, Vec<_>) =
                self.mempool.drain(..).partition(|p| p.submitted_at < now);
            self.mempool = keep;
            take
        };
        if ready.is_empty() {
            return None;
        }

        let height = self.blocks.len() as u64 + 1;
        let proposer = ((height - 1) % self.config.validators as u64) as u32;
        let approvals: Vec<u32> = self
            .behaviors
            .iter()
            .enumerate()
            .filter(|(_, b)| **b == VoteBehavior::Approve)
            .map(|(i, _)| i as u32)
            .collect();
        if !quorum_commits(approvals.len(), self.config.validators) {
            // vote failed: requeue in arrival order ahead of later arrivals
            let mut requeued = ready;
            requeued.extend(self.mempool.drain(..));
            self.mempool = requeued;
            return None;
        }

        let parent = self
            .blocks
            .last()
            .map(|b| b.hash())
            .unwrap_or(Digest([0; 32]));
        for p in &ready {
            let id = p.tx.id();
            self.mempool_ids.remove(&id);
            self.committed_ids.insert(id);
        }
        self.blocks.push(Block {
            height,
            parent,
            committed_at: now,
            proposer,
            approvals,
            txs: ready,
        });
        self.blocks.last()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn is_committed(&self, id: &Digest) -> bool {
        self.committed_ids.contains(id)
    }

    /// Hash of the newest block; the all-zero digest before the first block.
    pub fn latest_block_hash(&self) -> Digest {
        self.blocks
            .last()
            .map(|b| b.hash())
            .unwrap_or(Digest([0; 32]))
    }

    /// Commit time of the MessageCommit pinning `envelope_hash`, if any.
    pub fn message_committed_at(&self, envelope_hash: &Digest) -> Option<TimeMs> {
        self.blocks.iter().find_map(|b| {
            b.txs
                .iter()
                .any(|p| {
                    matches!(
                        &p.tx.kind,
                        TxKind::MessageCommit { envelope_hash: h, .. } if h == envelope_hash
                    )
                })
                .then_some(b.committed_at)
        })
    }

    /// All committed result hashes for a task: (computer, hash, committed
    /// at), in block order.
    pub fn result_commits(&self, task_id: &Digest) -> Vec<(u32, Digest, TimeMs)> {
        let mut out = Vec::new();
        for b in &self.blocks {
            for p in &b.txs {
                if let TxKind::ResultCommit {
                    task_id: t,
                    result_hash,
                } = &p.tx.kind
                {
                    if t == task_id {
                        out.push((p.tx.submitter, *result_hash, b.committed_at));
                    }
                }
            }
        }
        out
    }

    /// Committed transactions of a given kind name, for audits.
    pub fn committed_kind_count(&self, kind_name: &str) -> usize {
        self.blocks
            .iter()
            .flat_map(|b| &b.txs)
            .filter(|p| p.tx.kind.name() == kind_name)
            .count()
    }

    /// Stable text rendering of the whole chain, suitable for byte-for-byte
    /// comparison across runs.
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        for b in &self.blocks {
            writeln!(
                out,
                "block {} at={} proposer={} approvals={:?} parent={} hash={}",
                b.height,
                b.committed_at,
                b.proposer,
                b.approvals,
                b.parent,
                b.hash()
            )
            .unwrap();
            for p in &b.txs {
                let kind = &p.tx.kind;
                write!(
                    out,
                    "  {} from={} submitted={} payload={}",
                    kind.name(),
                    p.tx.submitter,
                    p.submitted_at,
                    kind.payload_hash()
                )
                .unwrap();
                match kind {
                    TxKind::MessageCommit {
                        envelope_hash,
                        function_tag,
                    } => writeln!(out, " envelope={} tag={}", envelope_hash, function_tag),
                    TxKind::KeyRoundCommit {
                        round_id,
                        expires_at,
                        ..
                    } => writeln!(out, " round={} expires={}", round_id, expires_at),
                    TxKind::AllocationLog { task_id, computer } => {
                        writeln!(out, " task={} computer={}", task_id, computer)
                    }
                    TxKind::ResultCommit {
                        task_id,
                        result_hash,
                    } => writeln!(out, " task={} hash={}", task_id, result_hash),
                    TxKind::VerificationLog {
                        task_id,
                        replicas,
                        verdict,
                    } => match verdict {
                        Verdict::Verified(d) => {
                            writeln!(out, " task={} replicas={} verdict=verified:{}", task_id, replicas, d)
                        }
                        Verdict::Rejected => {
                            writeln!(out, " task={} replicas={} verdict=rejected", task_id, replicas)
                        }
                    },
                    TxKind::DecryptionLog { task_id, quorum } => {
                        writeln!(out, " task={} quorum={:?}", task_id, quorum)
                    }
                }
                .unwrap();
            }
        }
        out
    }
}
