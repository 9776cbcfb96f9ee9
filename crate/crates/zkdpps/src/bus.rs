//! In-process publish-subscribe bus with per-client rate credits.
//!
//! Topics form a closed set; every pipeline stage listens on exactly one.
//! Publishing spends one credit from a token bucket that refills at an exact
//! rational rate, so admission decisions are integer-precise and identical
//! across runs. Delivery is pull-based: each subscriber owns a cursor per
//! topic and drains envelopes in publish order, which preserves per-publisher
//! FIFO without any cross-publisher ordering promises beyond call order.

use crate::digest::Digest;
use crate::TimeMs;
use num_rational::Ratio;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Topic {
    ToPpsm,
    ToAllocate,
    ToCompute,
    Results,
    ToDecrypt,
    ToSubscriber,
}

impl Topic {
    pub const ALL: [Topic; 6] = [
        Topic::ToPpsm,
        Topic::ToAllocate,
        Topic::ToCompute,
        Topic::Results,
        Topic::ToDecrypt,
        Topic::ToSubscriber,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Topic::ToPpsm => "To-PPSM",
            Topic::ToAllocate => "To-Allocate",
            Topic::ToCompute => "To-Compute",
            Topic::Results => "Results",
            Topic::ToDecrypt => "To-Decrypt",
            Topic::ToSubscriber => "To-Subscriber",
        }
    }
}

/// Where a plaintext value came from. Decides which publish sites may
/// legally carry it; the audit lives with the simulation monitor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlainOrigin {
    PublisherLocal,
    QuorumDecrypted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PayloadBody {
    Cipher(Vec<u8>),
    Plain { value: u64, origin: PlainOrigin },
}

impl PayloadBody {
    pub fn canonical_bytes(&self) -> Vec<u8> {
        match self {
            PayloadBody::Cipher(bytes) => bytes.clone(),
            PayloadBody::Plain { value, origin } => {
                let mut out = Vec::with_capacity(9);
                out.extend_from_slice(&value.to_le_bytes());
                out.push(match origin {
                    PlainOrigin::PublisherLocal => 0,
                    PlainOrigin::QuorumDecrypted => 1,
                });
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub topic: Topic,
    pub timestamp: TimeMs,
    pub publisher: u32,
    pub seq: u64,
    pub function_tag: u8,
    /// Hash the publisher claims for this envelope's canonical bytes. The
    /// same value goes into the ledger MessageCommit; receivers recompute
    /// and compare, so in-flight tampering surfaces as a mismatch.
    pub declared_hash: Digest,
    pub payload: PayloadBody,
}

impl Envelope {
    /// Transport identity: topic name, timestamp, publisher, length-prefixed
    /// payload, function tag. The bus-assigned seq and the declared hash are
    /// bookkeeping and stay out of it.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let payload = self.payload.canonical_bytes();
        let mut out = Vec::with_capacity(payload.len() + 32);
        out.extend_from_slice(self.topic.name().as_bytes());
        out.extend_from_slice(&self.timestamp.to_le_bytes());
        out.extend_from_slice(&self.publisher.to_le_bytes());
        out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&payload);
        out.push(self.function_tag);
        out
    }

    /// True when the declared hash matches the canonical bytes.
    pub fn integrity_ok(&self) -> bool {
        self.declared_hash == compute_envelope_hash(self)
    }
}

/// Digest of the envelope's canonical bytes: the value publishers declare,
/// ledger commits pin, and receivers recompute.
pub fn compute_envelope_hash(envelope: &Envelope) -> Digest {
    Digest::of(&envelope.canonical_bytes())
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BusError {
    #[error("publisher {0} is not registered")]
    UnknownPublisher(u32),
    #[error("subscriber {0} is not registered for {1}")]
    NotSubscribed(u32, &'static str),
    #[error("publisher {publisher} out of credits until {retry_at}")]
    OutOfCredits { publisher: u32, retry_at: TimeMs },
}

/// Credit policy: bucket capacity and refill rate per second, both exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CreditPolicy {
    pub capacity: u32,
    pub refill_per_sec: Ratio<u64>,
}

impl Default for CreditPolicy {
    fn default() -> Self {
        CreditPolicy {
            capacity: 5,
            refill_per_sec: Ratio::from_integer(1),
        }
    }
}

#[derive(Debug, Clone)]
struct Bucket {
    policy: CreditPolicy,
    tokens: Ratio<u64>,
    last_refill: TimeMs,
    next_seq: u64,
}

impl Bucket {
    fn new(policy: CreditPolicy) -> Self {
        Bucket {
            policy,
            tokens: Ratio::from_integer(u64::from(policy.capacity)),
            last_refill: 0,
            next_seq: 0,
        }
    }

    fn refill(&mut self, now: TimeMs) {
        debug_assert!(now >= self.last_refill, "bus clock went backwards");
        let elapsed = now - self.last_refill;
        let gained = self.policy.refill_per_sec * Ratio::new(elapsed, 1000);
        let cap = Ratio::from_integer(u64::from(self.policy.capacity));
        self.tokens = (self.tokens + gained).min(cap);
        self.last_refill = now;
    }

    fn try_spend(&mut self, now: TimeMs) -> Result<(), TimeMs> {
        self.refill(now);
        let one = Ratio::from_integer(1u64);
        if self.tokens >= one {
            self.tokens -= one;
            Ok(())
        } else {
            Err(self.earliest_credit(now))
        }
    }

    /// First instant at or after `now` when a full credit is available.
    fn earliest_credit(&self, now: TimeMs) -> TimeMs {
        let one = Ratio::from_integer(1u64);
        if self.tokens >= one {
            return now;
        }
        let deficit = one - self.tokens;
        // ceil(deficit / rate in ms)
        let ms = (deficit * Ratio::new(1000u64, 1) / self.policy.refill_per_sec).ceil();
        now + ms.to_integer()
    }
}

#[derive(Debug, Default)]
pub struct Bus {
    buckets: BTreeMap<u32, Bucket>,
    queues: BTreeMap<Topic, Vec<Envelope>>,
    cursors: BTreeMap<(u32, Topic), usize>,
    published_total: u64,
}

impl Bus {
    pub fn new() -> Self {
        Bus::default()
    }

    pub fn register_publisher(&mut self, publisher: u32, policy: CreditPolicy) {
        self.buckets.insert(publisher, Bucket::new(policy));
    }

    pub fn subscribe(&mut self, subscriber: u32, topic: Topic) {
        self.cursors.entry((subscriber, topic)).or_insert(0);
    }

    /// Admits one envelope, spending a credit. The envelope's seq field is
    /// assigned here; pass 0.
    pub fn publish(&mut self, mut envelope: Envelope, now: TimeMs) -> Result<u64, BusError> {
        let bucket = self
            .buckets
            .get_mut(&envelope.publisher)
            .ok_or(BusError::UnknownPublisher(envelope.publisher))?;
        bucket.try_spend(now).map_err(|retry_at| BusError::OutOfCredits {
            publisher: envelope.publisher,
            retry_at,
        })?;
        let seq = bucket.next_seq;
        bucket.next_seq += 1;
        envelope.seq = seq;
        self.queues.entry(envelope.topic).or_default().push(envelope);
        self.published_total += 1;
        Ok(seq)
    }

    /// Next undelivered envelope on `topic` for this subscriber, advancing
    /// its cursor.
    pub fn poll(&mut self, subscriber: u32, topic: Topic) -> Result<Option<Envelope>, BusError> {
        let cursor = self
            .cursors
            .get_mut(&(subscriber, topic))
            .ok_or(BusError::NotSubscribed(subscriber, topic.name()))?;
        let queue = self.queues.entry(topic).or_default();
        if *cursor < queue.len() {
            let envelope = queue[*cursor].clone();
            *cursor += 1;
            Ok(Some(envelope))
        } else {
            Ok(None)
        }
    }

    /// When the given publisher can next afford one publish.
    pub fn next_credit_at(&self, publisher: u32, now: TimeMs) -> Result<TimeMs, BusError> {
        let bucket = self
            .buckets
            .get(&publisher)
            .ok_or(BusError::UnknownPublisher(publisher))?;
        let mut probe = bucket.clone();
        probe.refill(now);
        Ok(probe.earliest_credit(now))
    }

    pub fn published_total(&self) -> u64 {
        self.published_total
    }
}
