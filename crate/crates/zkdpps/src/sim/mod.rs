//! Discrete-event simulation of the whole pipeline.
//!
//! Two modes run the same workload. The fortified mode encrypts at the
//! publisher, commits envelope hashes, replicates each task across workers,
//! tallies committed result hashes, and quorum-decrypts only at delivery; a
//! task therefore crosses two ledger commits (its message commit and its
//! result commit) before the subscriber sees a value. The baseline mode
//! publishes plaintext, runs one worker, and delivers straight from the
//! compute finish after a single commit.
//!
//! The engine is a single event heap ordered by (time, schedule order), all
//! randomness flows from one seeded stream, and every container iterates in
//! sorted order, so a (config, seed, run) triple reproduces its CSV and
//! ledger dump byte for byte.

pub mod metrics;
pub mod scenario;

use crate::bus::{
    compute_envelope_hash, Bus, BusError, CreditPolicy, Envelope, PayloadBody, PlainOrigin, Topic,
};
use crate::compute::{
    self, evaluate_plain, ComputeError, ComputeNode, ComputerPool, FaultMode, Function, Task,
};
use crate::digest::Digest;
use crate::dkg::KeyShare;
use crate::field_math::GroupParams;
use crate::he::{self, Ciphertext, HeError, HeParams};
use crate::ledger::{Ledger, LedgerConfig, Transaction, TxKind, Verdict};
use crate::ppsm::{
    allocate_computers, allocation_seed, select_reconstruction_quorum, verify_results,
    collaborative_decrypt, Manager, PpsmError,
};
use crate::threshold::{KeyRound, KeyService, RefreshPolicy, ThresholdError};
use crate::TimeMs;
use metrics::{RunReport, TaskOutcome, TaskRecord};
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use scenario::Scenario;
use std::collections::{BTreeMap, BinaryHeap};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown scenario {0}")]
    UnknownScenario(u8),
    #[error("invalid config field {field}: {message}")]
    Config {
        field: &'static str,
        message: String,
    },
    #[error(transparent)]
    Threshold(#[from] ThresholdError),
    #[error(transparent)]
    Encryption(#[from] HeError),
    #[error(transparent)]
    Managers(#[from] PpsmError),
    #[error(transparent)]
    Compute(#[from] ComputeError),
}

/// Pipeline variant under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Encrypted end to end with replication, tally, and quorum decryption.
    Zk,
    /// Plaintext single-worker baseline.
    Plain,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Zk => "zk",
            Mode::Plain => "plain",
        }
    }

    fn byte(&self) -> u8 {
        match self {
            Mode::Zk => 0,
            Mode::Plain => 1,
        }
    }
}

/// Service times for the non-ledger stages, in milliseconds. The ledger
/// block cadence dominates end-to-end delay; these model everything else.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProcessingProfile {
    /// One replica's encrypted evaluation plus proof generation.
    pub zk_compute_ms: u64,
    /// The baseline's plaintext evaluation.
    pub plain_compute_ms: u64,
    /// Proof/tally checking after the verdict's block closes.
    pub verify_ms: u64,
    /// Share collection and quorum decryption.
    pub decrypt_ms: u64,
}

impl ProcessingProfile {
    /// All stages instantaneous: end-to-end delay is then exactly the
    /// commit count times the block period for boundary-aligned arrivals.
    pub fn zero() -> Self {
        ProcessingProfile {
            zk_compute_ms: 0,
            plain_compute_ms: 0,
            verify_ms: 0,
            decrypt_ms: 0,
        }
    }
}

impl Default for ProcessingProfile {
    fn default() -> Self {
        ProcessingProfile {
            zk_compute_ms: 700,
            plain_compute_ms: 20,
            verify_ms: 60,
            decrypt_ms: 90,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub scenario: u8,
    pub mode: Mode,
    pub validators: usize,
    pub threshold: usize,
    pub computers: usize,
    pub replication: usize,
    pub block_period_ms: u64,
    pub inter_task_ms: u64,
    /// How many times the scenario's task set arrives.
    pub instances: u32,
    pub byzantine_computers: usize,
    pub silent_computers: usize,
    pub key_refresh_ms: u64,
    pub seed: u64,
    pub profile: ProcessingProfile,
    pub edge_credits: CreditPolicy,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            scenario: 1,
            mode: Mode::Zk,
            validators: 5,
            threshold: 3,
            computers: 5,
            replication: 5,
            block_period_ms: 1000,
            inter_task_ms: 1000,
            instances: 1,
            byzantine_computers: 0,
            silent_computers: 0,
            key_refresh_ms: 300_000,
            seed: 7,
            profile: ProcessingProfile::default(),
            edge_credits: CreditPolicy::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |field, message: String| Err(SimError::Config { field, message });
        if Scenario::by_id(self.scenario).is_none() {
            return fail("scenario", format!("{} is not one of 1, 2, 3", self.scenario));
        }
        if self.validators == 0 {
            return fail("validators", "at least one validator required".into());
        }
        if self.threshold == 0 || self.threshold > self.validators {
            return fail(
                "threshold",
                format!(
                    "{} must lie in 1..={} (validators)",
                    self.threshold, self.validators
                ),
            );
        }
        if self.computers == 0 {
            return fail("computers", "at least one computer required".into());
        }
        if self.replication == 0 {
            return fail("replication", "at least one replica required".into());
        }
        if self.byzantine_computers + self.silent_computers > self.computers {
            return fail(
                "byzantine-computers",
                format!(
                    "{} byzantine + {} silent exceed the pool of {}",
                    self.byzantine_computers, self.silent_computers, self.computers
                ),
            );
        }
        if self.block_period_ms == 0 {
            return fail("block-period-ms", "block period must be positive".into());
        }
        if self.key_refresh_ms == 0 {
            return fail("key-refresh-ms", "refresh interval must be positive".into());
        }
        Ok(())
    }
}

/// Credit tier for pipeline infrastructure (managers, computers): generous
/// enough that control traffic never queues behind edge publishers.
pub fn infra_credits() -> CreditPolicy {
    CreditPolicy {
        capacity: 64,
        refill_per_sec: Ratio::from_integer(16),
    }
}

/// Edge-publisher tier for high-cadence studies: sized so a 0.5s task period
/// is admission-limited by design choices, not by the default trickle.
pub fn provisioned_edge_credits() -> CreditPolicy {
    CreditPolicy {
        capacity: 10,
        refill_per_sec: Ratio::from_integer(4),
    }
}

pub const DEFAULT_SWEEP_PERIODS: [u64; 4] = [500, 1000, 5000, 10_000];

const FIRST_PUBLISHER_ID: u32 = 101;
const FIRST_COMPUTER_ID: u32 = 201;

fn publisher_id(source: usize) -> u32 {
    FIRST_PUBLISHER_ID + source as u32
}

#[derive(Debug)]
enum EventKind {
    Arrival { instance: u32 },
    PublishSource { task: usize, env: Box<Envelope> },
    BlockClose,
    ComputeFinish { task: usize, computer: u32 },
    Deliver { task: usize, value: u64, via: u32 },
}

struct Ev {
    at: TimeMs,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Ev {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.seq == other.seq
    }
}
impl Eq for Ev {}
impl PartialOrd for Ev {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ev {
    // reversed so the max-heap pops the earliest (time, schedule order)
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other.at.cmp(&self.at).then(other.seq.cmp(&self.seq))
    }
}

struct TaskState {
    label: &'static str,
    function: Function,
    round_id: u64,
    id: Digest,
    source_hashes: Vec<Digest>,
    envelopes: Vec<Envelope>,
    plain_values: Vec<u64>,
    expected: u64,
    publish_pending: usize,
    publish_done_at: TimeMs,
    dispatched: bool,
    operands: Vec<Ciphertext>,
    replicas: Vec<u32>,
    pending_replicas: usize,
    /// Ledger tx ids of every result this task's replicas committed.
    result_txs: Vec<Digest>,
    result_bytes: BTreeMap<Digest, Vec<u8>>,
    tallied: bool,
    outcome: Option<TaskOutcome>,
    deliver: Option<(TimeMs, u64)>,
    done: bool,
}

struct Engine<'a> {
    cfg: &'a SimConfig,
    scenario: Scenario,
    mode: Mode,
    now: TimeMs,
    next_seq: u64,
    heap: BinaryHeap<Ev>,
    bus: Bus,
    ledger: Ledger,
    svc: KeyService,
    rounds: BTreeMap<u64, KeyRound>,
    group: GroupParams,
    he_params: HeParams,
    managers: Vec<Manager>,
    manager_ids: Vec<u32>,
    pool: ComputerPool,
    busy_until: BTreeMap<u32, TimeMs>,
    tasks: Vec<TaskState>,
    rng: ChaCha20Rng,
    violations: u64,
    exposures: u64,
    credit_rejections: u64,
    encryptions: u64,
    counters: BTreeMap<String, u64>,
}

enum AuditMark {
    Violation,
    Exposure,
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a SimConfig, scenario: Scenario, run: u32) -> Result<Self, SimError> {
        let seed = Digest::of_parts(&[
            b"zkdpps/sim/v1",
            &cfg.seed.to_le_bytes(),
            &[cfg.scenario],
            &[cfg.mode.byte()],
            &run.to_le_bytes(),
        ]);
        let mut rng = ChaCha20Rng::from_seed(*seed.as_bytes());

        let group = GroupParams::desk_default();
        let he_params = HeParams {
            plaintext_modulus: scenario.plaintext_modulus,
            ..HeParams::desk_default()
        };
        let svc = KeyService::new(
            group.clone(),
            he_params.clone(),
            cfg.validators,
            cfg.threshold,
            RefreshPolicy {
                interval_ms: cfg.key_refresh_ms,
            },
            rng.gen(),
        )?;

        let mut bus = Bus::new();
        for source in 0..scenario.publisher_values.len() {
            bus.register_publisher(publisher_id(source), cfg.edge_credits);
        }
        let manager_ids: Vec<u32> = (1..=cfg.validators as u32).collect();
        let mut managers = Vec::new();
        for &mid in &manager_ids {
            bus.register_publisher(mid, infra_credits());
            bus.subscribe(mid, Topic::ToPpsm);
            managers.push(Manager::new(mid));
        }
        let mut pool = ComputerPool::new();
        for k in 0..cfg.computers {
            let id = FIRST_COMPUTER_ID + k as u32;
            let fault = if k < cfg.byzantine_computers {
                FaultMode::ByzantineFlip
            } else if k < cfg.byzantine_computers + cfg.silent_computers {
                FaultMode::Silent
            } else {
                FaultMode::Honest
            };
            pool.register(ComputeNode::new(id, fault))?;
            bus.register_publisher(id, infra_credits());
        }

        Ok(Engine {
            cfg,
            scenario,
            mode: cfg.mode,
            now: 0,
            next_seq: 0,
            heap: BinaryHeap::new(),
            bus,
            ledger: Ledger::new(LedgerConfig {
                validators: cfg.validators,
                block_period_ms: cfg.block_period_ms,
            }),
            svc,
            rounds: BTreeMap::new(),
            group,
            he_params,
            managers,
            manager_ids,
            pool,
            busy_until: BTreeMap::new(),
            tasks: Vec::new(),
            rng,
            violations: 0,
            exposures: 0,
            credit_rejections: 0,
            encryptions: 0,
            counters: BTreeMap::new(),
        })
    }

    fn schedule(&mut self, at: TimeMs, kind: EventKind) {
        self.next_seq += 1;
        self.heap.push(Ev {
            at,
            seq: self.next_seq,
            kind,
        });
    }

    fn bump(&mut self, key: String) {
        *self.counters.entry(key).or_insert(0) += 1;
    }

    /// Publishes through the leak monitor. In the fortified mode any
    /// plaintext outside the final subscriber hop is a taint violation; in
    /// the baseline mode plaintext is legal and merely counted.
    fn try_publish(&mut self, env: Envelope, now: TimeMs) -> Result<(), TimeMs> {
        let mark = match (&env.payload, self.mode) {
            (PayloadBody::Plain { origin, .. }, Mode::Zk) => {
                let legal =
                    *origin == PlainOrigin::QuorumDecrypted && env.topic == Topic::ToSubscriber;
                (!legal).then_some(AuditMark::Violation)
            }
            (PayloadBody::Plain { .. }, Mode::Plain) => Some(AuditMark::Exposure),
            (PayloadBody::Cipher(_), _) => None,
        };
        match self.bus.publish(env, now) {
            Ok(_) => {
                match mark {
                    Some(AuditMark::Violation) => self.violations += 1,
                    Some(AuditMark::Exposure) => self.exposures += 1,
                    None => {}
                }
                Ok(())
            }
            Err(BusError::OutOfCredits { retry_at, .. }) => {
                self.credit_rejections += 1;
                Err(retry_at)
            }
            Err(e) => unreachable!("static registration covers every actor: {e}"),
        }
    }

    /// Control-plane publish: no retry loop, a (never expected) credit miss
    /// drops the envelope and is counted.
    fn publish_infra(&mut self, mut env: Envelope, now: TimeMs) {
        env.declared_hash = compute_envelope_hash(&env);
        if self.try_publish(env, now).is_err() {
            self.bump("infra.publish_dropped".into());
        }
    }

    fn handle(&mut self, ev: Ev) -> Result<(), SimError> {
        self.now = ev.at;
        match ev.kind {
            EventKind::Arrival { instance } => self.on_arrival(instance, ev.at),
            EventKind::PublishSource { task, env } => {
                self.on_publish_source(task, *env, ev.at);
                Ok(())
            }
            EventKind::BlockClose => self.on_block_close(ev.at),
            EventKind::ComputeFinish { task, computer } => {
                self.on_compute_finish(task, computer, ev.at);
                Ok(())
            }
            EventKind::Deliver { task, value, via } => {
                self.on_deliver(task, value, via, ev.at);
                Ok(())
            }
        }
    }

    fn on_arrival(&mut self, instance: u32, now: TimeMs) -> Result<(), SimError> {
        let round_info = match self.mode {
            Mode::Zk => {
                let round = self.svc.ensure_fresh(now)?.clone();
                if !self.rounds.contains_key(&round.round_id) {
                    let commitment = Digest::of_parts(
                        &round
                            .group_commitments
                            .iter()
                            .map(|c| c.to_bytes_be())
                            .collect::<Vec<_>>()
                            .iter()
                            .map(|b| b.as_slice())
                            .collect::<Vec<_>>(),
                    );
                    self.ledger.submit(
                        Transaction {
                            submitter: self.manager_ids[0],
                            kind: TxKind::KeyRoundCommit {
                                round_id: round.round_id,
                                public_key: round.public_key.to_bytes_be(),
                                commitment,
                                expires_at: round.expires_at,
                            },
                        },
                        now,
                    );
                    self.bump("keyround.rotations".into());
                    self.rounds.insert(round.round_id, round.clone());
                }
                Some((round.round_id, round.he_public))
            }
            Mode::Plain => None,
        };

        for spec_idx in 0..self.scenario.tasks.len() {
            let spec = self.scenario.tasks[spec_idx].clone();
            let values = self.scenario.operand_values(&spec);
            let expected = self.scenario.expected(&spec);
            let mut envelopes = Vec::with_capacity(spec.sources.len());
            for (k, &source) in spec.sources.iter().enumerate() {
                let publisher = publisher_id(source);
                let payload = match &round_info {
                    Some((round_id, pk)) => {
                        let ct =
                            he::encrypt(&self.he_params, pk, *round_id, values[k], &mut self.rng)?;
                        self.encryptions += 1;
                        self.bump(format!("publisher.{publisher}.encrypt"));
                        PayloadBody::Cipher(ct.to_bytes())
                    }
                    None => PayloadBody::Plain {
                        value: values[k],
                        origin: PlainOrigin::PublisherLocal,
                    },
                };
                let mut env = Envelope {
                    topic: Topic::ToPpsm,
                    timestamp: now,
                    publisher,
                    seq: 0,
                    function_tag: spec.function.tag(),
                    declared_hash: Digest([0; 32]),
                    payload,
                };
                env.declared_hash = compute_envelope_hash(&env);
                envelopes.push(env);
            }
            let source_hashes: Vec<Digest> = envelopes.iter().map(|e| e.declared_hash).collect();
            let id = compute::task_id(&source_hashes, &spec.function);
            let task_idx = self.tasks.len();
            self.tasks.push(TaskState {
                label: spec.label,
                function: spec.function,
                round_id: round_info.as_ref().map(|r| r.0).unwrap_or(0),
                id,
                source_hashes,
                envelopes: envelopes.clone(),
                plain_values: values,
                expected,
                publish_pending: envelopes.len(),
                publish_done_at: 0,
                dispatched: false,
                operands: Vec::new(),
                replicas: Vec::new(),
                pending_replicas: 0,
                result_txs: Vec::new(),
                result_bytes: BTreeMap::new(),
                tallied: false,
                outcome: None,
                deliver: None,
                done: false,
            });
            for env in envelopes {
                self.schedule(
                    now,
                    EventKind::PublishSource {
                        task: task_idx,
                        env: Box::new(env),
                    },
                );
            }
        }

        if instance + 1 < self.cfg.instances {
            self.schedule(
                now + self.cfg.inter_task_ms,
                EventKind::Arrival {
                    instance: instance + 1,
                },
            );
        }
        Ok(())
    }

    fn on_publish_source(&mut self, task: usize, env: Envelope, now: TimeMs) {
        match self.try_publish(env.clone(), now) {
            Ok(()) => {
                self.ledger.submit(
                    Transaction {
                        submitter: env.publisher,
                        kind: TxKind::MessageCommit {
                            envelope_hash: env.declared_hash,
                            function_tag: env.function_tag,
                        },
                    },
                    now,
                );
                let t = &mut self.tasks[task];
                t.publish_pending -= 1;
                t.publish_done_at = t.publish_done_at.max(now);
            }
            Err(retry_at) => {
                self.schedule(
                    retry_at,
                    EventKind::PublishSource {
                        task,
                        env: Box::new(env),
                    },
                );
            }
        }
    }

    fn on_block_close(&mut self, now: TimeMs) -> Result<(), SimError> {
        self.ledger.commit_block(now);

        // managers drain the bus and hold envelopes against their commits
        for mi in 0..self.managers.len() {
            let mid = self.managers[mi].id;
            while let Ok(Some(env)) = self.bus.poll(mid, Topic::ToPpsm) {
                self.managers[mi].buffer(env, now);
            }
            let _ = self.managers[mi].take_committed(&self.ledger, now);
            let _ = self.managers[mi].expire_stale(now, 3 * self.cfg.block_period_ms);
        }

        self.dispatch_ready(now)?;

        if self.mode == Mode::Zk {
            for i in 0..self.tasks.len() {
                // a replica finishing exactly on a block boundary commits its
                // result in the NEXT block, so wait for every produced commit
                let ready = self.tasks[i].dispatched
                    && !self.tasks[i].done
                    && !self.tasks[i].tallied
                    && self.tasks[i].pending_replicas == 0
                    && self.tasks[i]
                        .result_txs
                        .iter()
                        .all(|tx| self.ledger.is_committed(tx));
                if ready {
                    self.tally(i, now)?;
                }
            }
        }

        let work_left = self.tasks.iter().any(|t| !t.done)
            || self.ledger.mempool_len() > 0
            || !self.heap.is_empty();
        if work_left {
            self.schedule(now + self.cfg.block_period_ms, EventKind::BlockClose);
        }
        Ok(())
    }

    fn dispatch_ready(&mut self, now: TimeMs) -> Result<(), SimError> {
        for i in 0..self.tasks.len() {
            if self.tasks[i].dispatched || self.tasks[i].done || self.tasks[i].publish_pending > 0
            {
                continue;
            }
            let all_committed = self.tasks[i]
                .source_hashes
                .iter()
                .all(|h| self.ledger.message_committed_at(h).is_some());
            if all_committed {
                self.dispatch(i, now)?;
            }
        }
        Ok(())
    }

    fn dispatch(&mut self, i: usize, now: TimeMs) -> Result<(), SimError> {
        let id = self.tasks[i].id;
        let tag = self.tasks[i].function.tag();
        let seed = allocation_seed(&self.ledger.latest_block_hash(), &id);
        let wanted = match self.mode {
            Mode::Zk => self.cfg.replication,
            Mode::Plain => 1,
        };
        let replicas = allocate_computers(&seed, &self.pool.ids(), wanted)?;

        for (j, comp) in replicas.iter().enumerate() {
            let mgr = self.manager_ids[j % self.manager_ids.len()];
            self.ledger.submit(
                Transaction {
                    submitter: mgr,
                    kind: TxKind::AllocationLog {
                        task_id: id,
                        computer: *comp,
                    },
                },
                now,
            );
            self.bump(format!("ppsm.{mgr}.alloc"));
        }

        let lead = self.manager_ids[0];
        self.publish_infra(
            Envelope {
                topic: Topic::ToAllocate,
                timestamp: now,
                publisher: lead,
                seq: 0,
                function_tag: tag,
                declared_hash: Digest([0; 32]),
                payload: PayloadBody::Cipher(id.as_bytes().to_vec()),
            },
            now,
        );

        match self.mode {
            Mode::Zk => {
                let envelopes = std::mem::take(&mut self.tasks[i].envelopes);
                let mut operands = Vec::with_capacity(envelopes.len());
                for env in &envelopes {
                    if let PayloadBody::Cipher(bytes) = &env.payload {
                        operands.push(Ciphertext::from_bytes(&self.he_params, bytes)?);
                    }
                }
                self.publish_infra(
                    Envelope {
                        topic: Topic::ToCompute,
                        timestamp: now,
                        publisher: lead,
                        seq: 0,
                        function_tag: tag,
                        declared_hash: Digest([0; 32]),
                        payload: PayloadBody::Cipher(compute::encode_operands(&operands)),
                    },
                    now,
                );
                self.tasks[i].operands = operands;
            }
            Mode::Plain => {
                let values = self.tasks[i].plain_values.clone();
                for value in values {
                    self.publish_infra(
                        Envelope {
                            topic: Topic::ToCompute,
                            timestamp: now,
                            publisher: lead,
                            seq: 0,
                            function_tag: tag,
                            declared_hash: Digest([0; 32]),
                            payload: PayloadBody::Plain {
                                value,
                                origin: PlainOrigin::PublisherLocal,
                            },
                        },
                        now,
                    );
                }
            }
        }

        let service = match self.mode {
            Mode::Zk => self.cfg.profile.zk_compute_ms,
            Mode::Plain => self.cfg.profile.plain_compute_ms,
        };
        for comp in &replicas {
            let start = self.busy_until.get(comp).copied().unwrap_or(0).max(now);
            let finish = start + service;
            self.busy_until.insert(*comp, finish);
            self.schedule(
                finish,
                EventKind::ComputeFinish {
                    task: i,
                    computer: *comp,
                },
            );
        }

        let t = &mut self.tasks[i];
        t.dispatched = true;
        t.pending_replicas = replicas.len();
        t.replicas = replicas;
        Ok(())
    }

    fn on_compute_finish(&mut self, i: usize, computer: u32, now: TimeMs) {
        self.bump(format!("computer.{computer}.runs"));
        self.tasks[i].pending_replicas -= 1;
        match self.mode {
            Mode::Plain => {
                let value = evaluate_plain(
                    &self.tasks[i].function,
                    &self.tasks[i].plain_values,
                    self.scenario.plaintext_modulus,
                )
                .expect("built-in scenarios are well formed");
                self.schedule(
                    now,
                    EventKind::Deliver {
                        task: i,
                        value,
                        via: computer,
                    },
                );
            }
            Mode::Zk => {
                let task = Task {
                    id: self.tasks[i].id,
                    function: self.tasks[i].function.clone(),
                    operands: self.tasks[i].operands.clone(),
                };
                let out = self
                    .pool
                    .get_mut(computer)
                    .expect("allocation stays inside the pool")
                    .run_task(&self.he_params, &task);
                match out {
                    None => self.bump("compute.silent".into()),
                    Some(Err(_)) => self.bump("compute.errors".into()),
                    Some(Ok(bytes)) => {
                        let hash = Digest::of(&bytes);
                        self.publish_infra(
                            Envelope {
                                topic: Topic::Results,
                                timestamp: now,
                                publisher: computer,
                                seq: 0,
                                function_tag: self.tasks[i].function.tag(),
                                declared_hash: Digest([0; 32]),
                                payload: PayloadBody::Cipher(bytes.clone()),
                            },
                            now,
                        );
                        self.tasks[i].result_bytes.entry(hash).or_insert(bytes);
                        let tx = self.ledger.submit(
                            Transaction {
                                submitter: computer,
                                kind: TxKind::ResultCommit {
                                    task_id: self.tasks[i].id,
                                    result_hash: hash,
                                },
                            },
                            now,
                        );
                        self.tasks[i].result_txs.push(tx);
                    }
                }
            }
        }
    }

    fn tally(&mut self, i: usize, now: TimeMs) -> Result<(), SimError> {
        let id = self.tasks[i].id;
        let round_id = self.tasks[i].round_id;
        let committed = self.ledger.result_commits(&id);
        let hashes: Vec<Digest> = committed.iter().map(|(_, h, _)| *h).collect();
        let record = verify_results(id, self.cfg.replication, &hashes);
        self.tasks[i].tallied = true;

        for mi in 0..self.managers.len() {
            let mid = self.managers[mi].id;
            self.managers[mi].log_event(
                now,
                "tally",
                &format!("task={} commits={}", id, hashes.len()),
            );
            self.bump(format!("ppsm.{mid}.tally"));
        }
        let lead = self.manager_ids[0];
        self.ledger.submit(
            Transaction {
                submitter: lead,
                kind: TxKind::VerificationLog {
                    task_id: id,
                    replicas: self.cfg.replication as u32,
                    verdict: record.verdict.clone(),
                },
            },
            now,
        );

        match record.verdict {
            Verdict::Verified(digest) => {
                let quorum = select_reconstruction_quorum(
                    round_id,
                    &self.ledger.latest_block_hash(),
                    &self.manager_ids,
                    self.cfg.threshold,
                )?;
                self.publish_infra(
                    Envelope {
                        topic: Topic::ToDecrypt,
                        timestamp: now,
                        publisher: lead,
                        seq: 0,
                        function_tag: self.tasks[i].function.tag(),
                        declared_hash: Digest([0; 32]),
                        payload: PayloadBody::Cipher(id.as_bytes().to_vec()),
                    },
                    now,
                );
                self.ledger.submit(
                    Transaction {
                        submitter: lead,
                        kind: TxKind::DecryptionLog {
                            task_id: id,
                            quorum: quorum.clone(),
                        },
                    },
                    now,
                );

                let bytes = self.tasks[i]
                    .result_bytes
                    .get(&digest)
                    .expect("verified digest came from a stored result")
                    .clone();
                let decrypted = {
                    let round = self.rounds.get(&round_id).expect("rounds are retained");
                    let contributed: Vec<KeyShare> = quorum
                        .iter()
                        .map(|m| {
                            round
                                .share_for(*m)
                                .expect("quorum members hold shares")
                                .clone()
                        })
                        .collect();
                    Ciphertext::from_bytes(&self.he_params, &bytes)
                        .map_err(PpsmError::from)
                        .and_then(|ct| {
                            collaborative_decrypt(
                                &self.group,
                                &self.he_params,
                                round,
                                &contributed,
                                &ct,
                                now,
                            )
                        })
                };
                for m in &quorum {
                    self.bump(format!("ppsm.{m}.decrypt_share"));
                }
                match decrypted {
                    Ok(value) => {
                        let at = now + self.cfg.profile.verify_ms + self.cfg.profile.decrypt_ms;
                        self.schedule(
                            at,
                            EventKind::Deliver {
                                task: i,
                                value,
                                via: quorum[0],
                            },
                        );
                    }
                    Err(e) => {
                        self.bump("decrypt.failures".into());
                        self.managers[0].log_event(
                            now,
                            "decrypt-failure",
                            &format!("task={id} error={e}"),
                        );
                        let t = &mut self.tasks[i];
                        t.outcome = Some(TaskOutcome::Rejected);
                        t.done = true;
                    }
                }
            }
            Verdict::Rejected => {
                for mi in 0..self.managers.len() {
                    self.managers[mi].log_event(now, "rejection-notice", &format!("task={id}"));
                }
                let t = &mut self.tasks[i];
                t.outcome = Some(TaskOutcome::Rejected);
                t.done = true;
            }
        }
        Ok(())
    }

    fn on_deliver(&mut self, i: usize, value: u64, via: u32, now: TimeMs) {
        let origin = match self.mode {
            Mode::Zk => PlainOrigin::QuorumDecrypted,
            Mode::Plain => PlainOrigin::PublisherLocal,
        };
        self.publish_infra(
            Envelope {
                topic: Topic::ToSubscriber,
                timestamp: now,
                publisher: via,
                seq: 0,
                function_tag: self.tasks[i].function.tag(),
                declared_hash: Digest([0; 32]),
                payload: PayloadBody::Plain { value, origin },
            },
            now,
        );
        let t = &mut self.tasks[i];
        t.deliver = Some((now, value));
        t.outcome = Some(TaskOutcome::Delivered);
        t.done = true;
    }

    fn into_report(self, run: u32) -> RunReport {
        let records = self
            .tasks
            .iter()
            .map(|t| TaskRecord {
                task_id: t.id,
                label: t.label,
                publish_t: t.publish_done_at,
                deliver_t: t.deliver.map(|d| d.0),
                outcome: t.outcome.unwrap_or(TaskOutcome::Rejected),
                expected: t.expected,
                delivered_value: t.deliver.map(|d| d.1),
            })
            .collect();
        let mut ppsm_logs = Vec::new();
        for mgr in &self.managers {
            ppsm_logs.extend(mgr.log_lines().iter().cloned());
        }
        RunReport {
            scenario: self.scenario.id,
            mode_name: self.mode.name(),
            period_ms: self.cfg.inter_task_ms,
            run,
            records,
            taint_violations: self.violations,
            plain_exposures: self.exposures,
            credit_rejections: self.credit_rejections,
            encryptions: self.encryptions,
            counters: self.counters,
            blocks: self.ledger.blocks().len() as u64,
            ledger_dump: self.ledger.dump(),
            ppsm_logs,
        }
    }
}

/// Runs one simulation to completion.
pub fn run_once(cfg: &SimConfig, run: u32) -> Result<RunReport, SimError> {
    cfg.validate()?;
    let scenario =
        Scenario::by_id(cfg.scenario).ok_or(SimError::UnknownScenario(cfg.scenario))?;
    let mut engine = Engine::new(cfg, scenario, run)?;
    if cfg.instances > 0 {
        engine.schedule(0, EventKind::Arrival { instance: 0 });
    }
    engine.schedule(cfg.block_period_ms, EventKind::BlockClose);
    while let Some(ev) = engine.heap.pop() {
        engine.handle(ev)?;
    }
    debug_assert!(engine.tasks.iter().all(|t| t.done), "no task left in flight");
    Ok(engine.into_report(run))
}

/// Repeats the run with reseeded randomness per run index.
pub fn run_many(cfg: &SimConfig, runs: u32) -> Result<Vec<RunReport>, SimError> {
    (0..runs).map(|run| run_once(cfg, run)).collect()
}

/// Sweeps the task arrival period across both modes and reports the
/// end-to-end overhead ratio per period. Edge publishers get the provisioned
/// credit tier so the densest cadence is not admission-throttled.
pub fn sweep(
    base: &SimConfig,
    periods: &[u64],
    instances: u32,
) -> Result<metrics::SweepReport, SimError> {
    let mut points = Vec::new();
    let mut reports = Vec::new();
    for &period in periods {
        let mut means = [0.0f64; 2];
        for (slot, mode) in [Mode::Zk, Mode::Plain].into_iter().enumerate() {
            let cfg = SimConfig {
                mode,
                inter_task_ms: period,
                instances,
                edge_credits: provisioned_edge_credits(),
                ..base.clone()
            };
            let report = run_once(&cfg, 0)?;
            means[slot] = report.mean_e2e_ms().unwrap_or(f64::NAN);
            reports.push(report);
        }
        points.push(metrics::SweepPoint {
            period_ms: period,
            fortified_mean_ms: means[0],
            baseline_mean_ms: means[1],
        });
    }
    Ok(metrics::SweepReport {
        scenario: base.scenario,
        points,
        reports,
    })
}
