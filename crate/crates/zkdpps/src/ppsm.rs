//! Processing-layer managers.
//!
//! A manager buffers incoming envelopes until their declared hashes commit
//! on the ledger, forms tasks, allocates replicas to workers through a
//! seeded selection everyone can replay, tallies committed result hashes
//! under the strict two-thirds rule, and, for verified results, assembles a
//! share quorum to reconstruct the round key and decrypt. Plaintext exists
//! only inside [`collaborative_decrypt`] and the delivery that follows it.
//!
//! Replication comes from symmetry: every manager allocates the same logical
//! task, and the seeded permutation hands each manager's replica to a
//! different worker whenever the pool is large enough.

use crate::bus::Envelope;
use crate::digest::Digest;
use crate::field_math::GroupParams;
use crate::he::{self, Ciphertext, HeParams};
use crate::ledger::{Ledger, Verdict};
use crate::threshold::{self, KeyRound, ThresholdError};
use crate::TimeMs;
use crate::dkg::KeyShare;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PpsmError {
    #[error("no registered computers to allocate to")]
    EmptyComputerPool,
    #[error("only {live} managers live, quorum needs {threshold}")]
    InsufficientQuorum { live: usize, threshold: usize },
    #[error("key round {round_id} is no longer current")]
    ExpiredRound { round_id: u64 },
    #[error("share contributed by manager {member} failed verification")]
    ShareVerificationFailed { member: u32 },
    #[error(transparent)]
    Reconstruction(ThresholdError),
    #[error(transparent)]
    Encryption(#[from] he::HeError),
}

/// Allocation seed: latest committed block hash bound to the task identity,
/// so the selection is unpredictable before commitment and replayable after.
pub fn allocation_seed(block_hash: &Digest, task_id: &Digest) -> Digest {
    Digest::of_parts(&[b"zkdpps/alloc/v1", block_hash.as_bytes(), task_id.as_bytes()])
}

/// Deterministic replica placement: the seed shuffles the pool and replica
/// `j` runs on `perm[j mod pool]`. With pool >= replicas every replica lands
/// on a distinct worker; smaller pools wrap as evenly as possible.
pub fn allocate_computers(
    seed: &Digest,
    pool: &[u32],
    replicas: usize,
) -> Result<Vec<u32>, PpsmError> {
    if pool.is_empty() {
        return Err(PpsmError::EmptyComputerPool);
    }
    let perm = shuffled(pool, *seed.as_bytes());
    Ok((0..replicas).map(|j| perm[j % perm.len()]).collect())
}

/// The t managers who reconstruct this round's key for one decryption,
/// seeded by the committed block hash so every honest node derives the same
/// set. Returned sorted.
pub fn select_reconstruction_quorum(
    round_id: u64,
    block_hash: &Digest,
    managers: &[u32],
    threshold: usize,
) -> Result<Vec<u32>, PpsmError> {
    if managers.len() < threshold {
        return Err(PpsmError::InsufficientQuorum {
            live: managers.len(),
            threshold,
        });
    }
    let seed = Digest::of_parts(&[
        b"zkdpps/quorum/v1",
        &round_id.to_le_bytes(),
        block_hash.as_bytes(),
    ]);
    let mut quorum = shuffled(managers, *seed.as_bytes());
    quorum.truncate(threshold);
    quorum.sort_unstable();
    Ok(quorum)
}

fn shuffled(items: &[u32], seed: [u8; 32]) -> Vec<u32> {
    let mut out = items.to_vec();
    let mut rng = ChaCha20Rng::from_seed(seed);
    for i in (1..out.len()).rev() {
        let j = rng.gen_range(0..=i);
        out.swap(i, j);
    }
    out
}

/// Outcome of tallying one task's committed result hashes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerificationRecord {
    pub task_id: Digest,
    /// Expected replica count r; the strict majority rule divides by this,
    /// not by how many commits actually arrived.
    pub replicas: u32,
    pub tally: BTreeMap<Digest, u32>,
    pub verdict: Verdict,
}

/// Tallies committed hashes for a task: Verified(d) iff strictly more than
/// two-thirds of the expected replicas committed digest d. Missing commits
/// (silent workers) count against every digest.
pub fn verify_results(
    task_id: Digest,
    expected_replicas: usize,
    committed_hashes: &[Digest],
) -> VerificationRecord {
    let mut tally: BTreeMap<Digest, u32> = BTreeMap::new();
    for h in committed_hashes {
        *tally.entry(*h).or_insert(0) += 1;
    }
    let best = tally.iter().max_by_key(|(_, &count)| count);
    let verdict = match best {
        Some((digest, &count)) if 3 * count as usize > 2 * expected_replicas => {
            Verdict::Verified(*digest)
        }
        _ => Verdict::Rejected,
    };
    VerificationRecord {
        task_id,
        replicas: expected_replicas as u32,
        tally,
        verdict,
    }
}

/// Quorum decryption: verify every contributed share, reconstruct the master
/// secret, re-derive the round's encryption key, decrypt, erase. The
/// reconstruction lives only inside this call.
pub fn collaborative_decrypt(
    group: &GroupParams,
    he_params: &HeParams,
    round: &KeyRound,
    contributed: &[KeyShare],
    result: &Ciphertext,
    now: TimeMs,
) -> Result<u64, PpsmError> {
    if round.needs_refresh(now) {
        return Err(PpsmError::ExpiredRound {
            round_id: round.round_id,
        });
    }
    if result.round_id() != round.round_id {
        return Err(PpsmError::ExpiredRound {
            round_id: result.round_id(),
        });
    }
    let mut master = threshold::reconstruct_master(
        group,
        &round.group_commitments,
        round.threshold,
        contributed,
    )
    .map_err(|e| match e {
        ThresholdError::ShareRejected { index } => {
            PpsmError::ShareVerificationFailed { member: index }
        }
        other => PpsmError::Reconstruction(other),
    })?;
    let he_keys = threshold::derive_he_keys(
        he_params,
        round.round_id,
        master.expose().map_err(PpsmError::Reconstruction)?,
    )
    .map_err(PpsmError::Reconstruction)?;
    master.erase();
    Ok(he::decrypt(he_params, &he_keys.secret, result)?)
}

/// An envelope parked until its declared hash commits.
#[derive(Debug, Clone)]
struct BufferedEnvelope {
    envelope: Envelope,
    hash: Digest,
    buffered_at: TimeMs,
}

/// One manager's mutable state: the commitment buffer and a line-delimited
/// event log the metrics harness consumes.
#[derive(Debug)]
pub struct Manager {
    pub id: u32,
    buffered: Vec<BufferedEnvelope>,
    log: Vec<String>,
}

impl Manager {
    pub fn new(id: u32) -> Self {
        Manager {
            id,
            buffered: Vec::new(),
            log: Vec::new(),
        }
    }

    /// Accepts an envelope into the commitment buffer. An envelope whose
    /// declared hash does not match its bytes is refused on the spot.
    pub fn buffer(&mut self, envelope: Envelope, now: TimeMs) -> bool {
        if !envelope.integrity_ok() {
            self.log_event(now, "integrity-failure", &format!("declared={}", envelope.declared_hash));
            return false;
        }
        let hash = envelope.declared_hash;
        self.log_event(now, "buffered", &format!("envelope={}", hash));
        self.buffered.push(BufferedEnvelope {
            envelope,
            hash,
            buffered_at: now,
        });
        true
    }

    /// Releases every buffered envelope whose hash has committed, in buffer
    /// order, with the commit time.
    pub fn take_committed(&mut self, ledger: &Ledger, now: TimeMs) -> Vec<(Envelope, TimeMs)> {
        let mut released = Vec::new();
        let mut keep = Vec::new();
        for item in self.buffered.drain(..) {
            match ledger.message_committed_at(&item.hash) {
                Some(at) => {
                    released.push((item.envelope, at));
                }
                None => keep.push(item),
            }
        }
        self.buffered = keep;
        for (envelope, _) in &released {
            self.log_event(now, "advanced", &format!("envelope={}", envelope.declared_hash));
        }
        released
    }

    /// Drops envelopes that have waited longer than `timeout_ms` without a
    /// commit, logging an integrity failure for each. Returns their hashes.
    pub fn expire_stale(&mut self, now: TimeMs, timeout_ms: u64) -> Vec<Digest> {
        let mut expired = Vec::new();
        self.buffered.retain(|item| {
            if now.saturating_sub(item.buffered_at) >= timeout_ms {
                expired.push(item.hash);
                false
            } else {
                true
            }
        });
        for hash in &expired {
            self.log_event(now, "integrity-failure", &format!("uncommitted envelope={}", hash));
        }
        expired
    }

    pub fn buffered_len(&self) -> usize {
        self.buffered.len()
    }

    pub fn log_event(&mut self, now: TimeMs, kind: &str, detail: &str) {
        self.log.push(format!("t={now} ppsm={} {kind} {detail}", self.id));
    }

    pub fn log_lines(&self) -> &[String] {
        &self.log
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bus::{compute_envelope_hash, PayloadBody, Topic};
    use crate::ledger::{LedgerConfig, Transaction, TxKind};
    use crate::threshold::{KeyService, RefreshPolicy};

    #[test]
    fn allocation_is_deterministic_and_distinct_when_pool_suffices() {
        let pool = [1u32, 2, 3, 4, 5];
        let seed = allocation_seed(&Digest::of(b"block"), &Digest::of(b"task"));
        let a1 = allocate_computers(&seed, &pool, 5).unwrap();
        let a2 = allocate_computers(&seed, &pool, 5).unwrap();
        assert_eq!(a1, a2);
        let mut sorted = a1.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, pool, "five replicas over five workers is a permutation");

        // a different task re-rolls the placement somewhere within 20 tasks
        let mut any_different = false;
        for i in 0..20u8 {
            let s = allocation_seed(&Digest::of(b"block"), &Digest::of(&[i]));
            if allocate_computers(&s, &pool, 5).unwrap() != a1 {
                any_different = true;
                break;
            }
        }
        assert!(any_different);
    }

    #[test]
    fn small_pools_wrap_evenly() {
        let pool = [10u32, 20, 30];
        let seed = allocation_seed(&Digest::of(b"b"), &Digest::of(b"t"));
        let picks = allocate_computers(&seed, &pool, 5).unwrap();
        assert_eq!(picks.len(), 5);
        let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
        for p in &picks {
            *counts.entry(*p).or_insert(0) += 1;
        }
        assert!(counts.values().all(|&c| c == 1 || c == 2));
        assert_eq!(counts.values().sum::<usize>(), 5);

        assert_eq!(
            allocate_computers(&seed, &[], 3).unwrap_err(),
            PpsmError::EmptyComputerPool
        );
    }

    #[test]
    fn quorum_selection_shape_and_determinism() {
        let managers = [1u32, 2, 3, 4, 5];
        let hash = Digest::of(b"committed block");
        let q1 = select_reconstruction_quorum(7, &hash, &managers, 3).unwrap();
        let q2 = select_reconstruction_quorum(7, &hash, &managers, 3).unwrap();
        assert_eq!(q1, q2);
        assert_eq!(q1.len(), 3);
        assert!(q1.windows(2).all(|w| w[0] < w[1]), "sorted, distinct");
        assert!(q1.iter().all(|m| managers.contains(m)));

        // round id separates otherwise identical selections somewhere
        let mut differs = false;
        for round in 0..20 {
            if select_reconstruction_quorum(round, &hash, &managers, 3).unwrap() != q1 {
                differs = true;
                break;
            }
        }
        assert!(differs);

        assert_eq!(
            select_reconstruction_quorum(0, &hash, &[1, 2], 3).unwrap_err(),
            PpsmError::InsufficientQuorum {
                live: 2,
                threshold: 3
            }
        );
    }

    #[test]
    fn quorum_membership_frequency_is_unbiased() {
        let managers = [1u32, 2, 3, 4, 5];
        let mut appearances: BTreeMap<u32, u32> = BTreeMap::new();
        let rounds = 10_000u32;
        for i in 0..rounds {
            let hash = Digest::of(&i.to_le_bytes());
            let q = select_reconstruction_quorum(0, &hash, &managers, 3).unwrap();
            for m in q {
                *appearances.entry(m).or_insert(0) += 1;
            }
        }
        for (m, count) in appearances {
            let freq = f64::from(count) / f64::from(rounds);
            assert!(
                (freq - 0.6).abs() <= 0.02,
                "manager {m} frequency {freq} outside 0.6 +/- 0.02"
            );
        }
    }

    #[test]
    fn tally_verdicts_match_strict_two_thirds() {
        let task = Digest::of(b"task");
        let h = Digest::of(b"honest");
        let h2 = Digest::of(b"tampered");
        let h3 = Digest::of(b"other");

        // 4 of 5 expected: 12 > 10
        let rec = verify_results(task, 5, &[h, h, h, h, h2]);
        assert_eq!(rec.verdict, Verdict::Verified(h));
        assert_eq!(rec.tally[&h], 4);
        assert_eq!(rec.replicas, 5);

        // 3 of 5: 9 > 10 is false
        let rec = verify_results(task, 5, &[h, h, h, h2, h3]);
        assert_eq!(rec.verdict, Verdict::Rejected);

        // unanimity at r=3
        let rec = verify_results(task, 3, &[h, h, h]);
        assert_eq!(rec.verdict, Verdict::Verified(h));

        // a silent worker leaves 4 commits against r=5: still verified
        let rec = verify_results(task, 5, &[h, h, h, h]);
        assert_eq!(rec.verdict, Verdict::Verified(h));

        // two silents leave 3 commits: rejected
        let rec = verify_results(task, 5, &[h, h, h]);
        assert_eq!(rec.verdict, Verdict::Rejected);

        // nothing committed at all
        let rec = verify_results(task, 5, &[]);
        assert_eq!(rec.verdict, Verdict::Rejected);
        assert!(rec.tally.is_empty());
    }

    fn round_fixture() -> (GroupParams, HeParams, KeyRound) {
        let group = GroupParams::desk_default();
        let he_params = HeParams::desk_default();
        let mut svc = KeyService::new(
            group.clone(),
            he_params.clone(),
            5,
            3,
            RefreshPolicy::default(),
            77,
        )
        .unwrap();
        let round = svc.rotate(0).unwrap().clone();
        (group, he_params, round)
    }

    #[test]
    fn quorum_decrypts_verified_result() {
        let (group, he_params, round) = round_fixture();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let ct = he::encrypt(&he_params, &round.he_public, round.round_id, 12, &mut rng).unwrap();

        let quorum = select_reconstruction_quorum(
            round.round_id,
            &Digest::of(b"block"),
            &[1, 2, 3, 4, 5],
            round.threshold,
        )
        .unwrap();
        let contributed: Vec<KeyShare> = quorum
            .iter()
            .map(|m| round.share_for(*m).unwrap().clone())
            .collect();
        let value =
            collaborative_decrypt(&group, &he_params, &round, &contributed, &ct, 1000).unwrap();
        assert_eq!(value, 12);
    }

    #[test]
    fn tampered_contribution_names_the_member() {
        let (group, he_params, round) = round_fixture();
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let ct = he::encrypt(&he_params, &round.he_public, round.round_id, 3, &mut rng).unwrap();
        let field = group.field();
        let mut contributed: Vec<KeyShare> = [1u32, 2, 3]
            .iter()
            .map(|m| round.share_for(*m).unwrap().clone())
            .collect();
        contributed[1].value = field.add(&contributed[1].value, &field.one());
        assert_eq!(
            collaborative_decrypt(&group, &he_params, &round, &contributed, &ct, 0).unwrap_err(),
            PpsmError::ShareVerificationFailed { member: 2 }
        );
    }

    #[test]
    fn expired_rounds_and_stale_ciphertexts_refuse() {
        let (group, he_params, round) = round_fixture();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let ct = he::encrypt(&he_params, &round.he_public, round.round_id, 3, &mut rng).unwrap();
        let contributed: Vec<KeyShare> = round.shares()[..3].to_vec();

        // past the refresh deadline
        assert_eq!(
            collaborative_decrypt(&group, &he_params, &round, &contributed, &ct, 300_000)
                .unwrap_err(),
            PpsmError::ExpiredRound { round_id: 0 }
        );

        // a ciphertext from another round cannot ride this quorum
        let stale = he::trivial(&he_params, 42, 9).unwrap();
        assert_eq!(
            collaborative_decrypt(&group, &he_params, &round, &contributed, &stale, 0)
                .unwrap_err(),
            PpsmError::ExpiredRound { round_id: 42 }
        );
    }

    fn test_envelope(value: u8) -> Envelope {
        let mut e = Envelope {
            topic: Topic::ToPpsm,
            timestamp: 5,
            publisher: 1,
            seq: 0,
            function_tag: 1,
            declared_hash: Digest([0; 32]),
            payload: PayloadBody::Cipher(vec![value]),
        };
        e.declared_hash = compute_envelope_hash(&e);
        e
    }

    #[test]
    fn buffered_envelopes_advance_only_on_commit() {
        let mut ledger = Ledger::new(LedgerConfig::default());
        let mut mgr = Manager::new(1);
        let e1 = test_envelope(1);
        let e2 = test_envelope(2);
        assert!(mgr.buffer(e1.clone(), 5));
        assert!(mgr.buffer(e2.clone(), 5));
        assert_eq!(mgr.buffered_len(), 2);

        // nothing committed yet
        assert!(mgr.take_committed(&ledger, 500).is_empty());

        // commit only the first envelope's hash
        ledger.submit(
            Transaction {
                submitter: 1,
                kind: TxKind::MessageCommit {
                    envelope_hash: e1.declared_hash,
                    function_tag: 1,
                },
            },
            5,
        );
        ledger.commit_block(1000);
        let released = mgr.take_committed(&ledger, 1000);
        assert_eq!(released.len(), 1);
        assert_eq!(released[0].0.declared_hash, e1.declared_hash);
        assert_eq!(released[0].1, 1000);
        assert_eq!(mgr.buffered_len(), 1);

        // a late commit still advances the second one
        ledger.submit(
            Transaction {
                submitter: 1,
                kind: TxKind::MessageCommit {
                    envelope_hash: e2.declared_hash,
                    function_tag: 1,
                },
            },
            2500,
        );
        ledger.commit_block(3000);
        assert_eq!(mgr.take_committed(&ledger, 3000).len(), 1);
        assert_eq!(mgr.buffered_len(), 0);
    }

    #[test]
    fn tampered_or_uncommitted_envelopes_fail_integrity() {
        let mut mgr = Manager::new(2);
        let mut tampered = test_envelope(3);
        tampered.payload = PayloadBody::Cipher(vec![9, 9]);
        assert!(!mgr.buffer(tampered, 10));
        assert_eq!(mgr.buffered_len(), 0);

        // an honest envelope whose commit never lands expires after the
        // timeout window
        let orphan = test_envelope(4);
        let hash = orphan.declared_hash;
        assert!(mgr.buffer(orphan, 100));
        assert!(mgr.expire_stale(2000, 3000).is_empty());
        assert_eq!(mgr.expire_stale(3100, 3000), vec![hash]);
        assert_eq!(mgr.buffered_len(), 0);

        let log = mgr.log_lines().join("\n");
        assert!(log.contains("integrity-failure"));
        assert!(log.contains("ppsm=2"));
    }
}
