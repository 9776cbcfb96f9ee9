//! Threshold key rounds: periodic ceremonies, quorum reconstruction, and the
//! bridge from a shared master secret to the encryption keypair.
//!
//! Each round runs a fresh ceremony, derives the round's encryption keypair
//! deterministically from the master secret, publishes the public half, and
//! forgets both the master and the secret half. A decrypting quorum later
//! reassembles the master from verified shares, re-derives the secret key,
//! and erases the reconstruction when done. Erasure here is a state-machine
//! contract (an erased secret can never be exposed again), not a guarantee
//! about memory contents.

use crate::dkg::{self, CeremonyOutput, DkgError, KeyShare};
use crate::field_math::{FieldElement, FieldError, GroupParams};
use crate::he::{self, HeError, HeKeyPair, HeParams, HePublicKey};
use crate::digest::Digest;
use crate::TimeMs;
use num_bigint::BigUint;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ThresholdError {
    #[error("got {have} shares, reconstruction needs {need}")]
    NotEnoughShares { have: usize, need: usize },
    #[error("share {index} failed commitment verification")]
    ShareRejected { index: u32 },
    #[error("shares carry duplicate index {0}")]
    DuplicateShare(u32),
    #[error("reconstructed secret disagrees with the round public key")]
    InconsistentReconstruction,
    #[error("secret already erased")]
    Erased,
    #[error(transparent)]
    Ceremony(#[from] DkgError),
    #[error(transparent)]
    Encryption(#[from] HeError),
}

/// How long a key round stays valid. Five minutes by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefreshPolicy {
    pub interval_ms: u64,
}

impl Default for RefreshPolicy {
    fn default() -> Self {
        RefreshPolicy {
            interval_ms: 300_000,
        }
    }
}

/// One completed ceremony: group-side outputs plus the derived encryption
/// public key. Shares stay here in custody; validators fetch their own by
/// index. The master secret and the encryption secret key are not stored.
#[derive(Debug, Clone)]
pub struct KeyRound {
    pub round_id: u64,
    pub created_at: TimeMs,
    pub expires_at: TimeMs,
    pub validators: usize,
    pub threshold: usize,
    pub public_key: BigUint,
    pub group_commitments: Vec<BigUint>,
    pub he_public: HePublicKey,
    shares: Vec<KeyShare>,
}

impl KeyRound {
    pub fn needs_refresh(&self, now: TimeMs) -> bool {
        now >= self.expires_at
    }

    pub fn share_for(&self, index: u32) -> Option<&KeyShare> {
        self.shares.iter().find(|s| s.index == index)
    }

    pub fn shares(&self) -> &[KeyShare] {
        &self.shares
    }
}

/// Drives ceremonies on the refresh schedule.
pub struct KeyService {
    group: GroupParams,
    he_params: HeParams,
    validators: usize,
    threshold: usize,
    policy: RefreshPolicy,
    rng: ChaCha20Rng,
    next_round: u64,
    current: Option<KeyRound>,
}

impl KeyService {
    pub fn new(
        group: GroupParams,
        he_params: HeParams,
        validators: usize,
        threshold: usize,
        policy: RefreshPolicy,
        seed: u64,
    ) -> Result<Self, ThresholdError> {
        he_params.validate()?;
        Ok(KeyService {
            group,
            he_params,
            validators,
            threshold,
            policy,
            rng: ChaCha20Rng::seed_from_u64(seed),
            next_round: 0,
            current: None,
        })
    }

    pub fn group(&self) -> &GroupParams {
        &self.group
    }

    pub fn he_params(&self) -> &HeParams {
        &self.he_params
    }

    pub fn current(&self) -> Option<&KeyRound> {
        self.current.as_ref()
    }

    /// Runs a ceremony now, replacing any current round.
    pub fn rotate(&mut self, now: TimeMs) -> Result<&KeyRound, ThresholdError> {
        let ceremony = dkg::run_ceremony(
            &self.group,
            self.validators,
            self.threshold,
            &mut self.rng,
        )?;
        let round_id = self.next_round;
        let round = finalize_round(
            &self.group,
            &self.he_params,
            round_id,
            now,
            now + self.policy.interval_ms,
            ceremony,
        )?;
        self.next_round += 1;
        self.current = Some(round);
        Ok(self.current.as_ref().unwrap())
    }

    /// Rotates only if there is no current round or it has expired.
    pub fn ensure_fresh(&mut self, now: TimeMs) -> Result<&KeyRound, ThresholdError> {
        let stale = match &self.current {
            Some(round) => round.needs_refresh(now),
            None => true,
        };
        if stale {
            self.rotate(now)?;
        }
        Ok(self.current.as_ref().unwrap())
    }
}

/// Derives the round keypair and drops every copy of the master secret
/// before returning.
fn finalize_round(
    group: &GroupParams,
    he_params: &HeParams,
    round_id: u64,
    created_at: TimeMs,
    expires_at: TimeMs,
    ceremony: CeremonyOutput,
) -> Result<KeyRound, ThresholdError> {
    let threshold = ceremony.group_commitments.len();
    let mut master = reconstruct_master(
        group,
        &ceremony.group_commitments,
        threshold,
        &ceremony.shares[..threshold],
    )?;
    let he_keys = derive_he_keys(he_params, round_id, master.expose()?)?;
    master.erase();
    Ok(KeyRound {
        round_id,
        created_at,
        expires_at,
        validators: ceremony.shares.len(),
        threshold,
        public_key: ceremony.public_key,
        group_commitments: ceremony.group_commitments,
        he_public: he_keys.public,
        shares: ceremony.shares,
    })
}

/// The encryption keypair is a pure function of (round, master secret):
/// a domain-separated hash seeds the keypair sampler. Any quorum that
/// reassembles the master re-derives the identical keypair.
pub fn derive_he_keys(
    he_params: &HeParams,
    round_id: u64,
    master: &FieldElement,
) -> Result<HeKeyPair, ThresholdError> {
    let seed = Digest::of_parts(&[
        b"zkdpps/he-key/v1",
        &round_id.to_le_bytes(),
        &master.to_bytes_be(),
    ]);
    let mut rng = ChaCha20Rng::from_seed(*seed.as_bytes());
    Ok(he::keygen(he_params, &mut rng)?)
}

/// A secret that can be exposed until erased, then never again.
#[derive(Debug)]
pub struct ErasableSecret {
    value: Option<FieldElement>,
}

impl ErasableSecret {
    pub fn expose(&self) -> Result<&FieldElement, ThresholdError> {
        self.value.as_ref().ok_or(ThresholdError::Erased)
    }

    pub fn erase(&mut self) {
        self.value = None;
    }

    pub fn is_erased(&self) -> bool {
        self.value.is_none()
    }
}

/// Rebuilds the master secret from at least `threshold` shares.
///
/// Every supplied share must pass the commitment check; one bad share
/// rejects the whole call rather than being quietly dropped, because a bad
/// share at decryption time is evidence of tampering, not noise. The
/// reconstructed value is cross-checked against the committed public key.
pub fn reconstruct_master(
    group: &GroupParams,
    group_commitments: &[BigUint],
    threshold: usize,
    shares: &[KeyShare],
) -> Result<ErasableSecret, ThresholdError> {
    if shares.len() < threshold {
        return Err(ThresholdError::NotEnoughShares {
            have: shares.len(),
            need: threshold,
        });
    }
    for share in shares {
        if !dkg::verify_key_share(group, group_commitments, share) {
            return Err(ThresholdError::ShareRejected { index: share.index });
        }
    }
    let field = group.field();
    let points: Vec<(u32, FieldElement)> = shares
        .iter()
        .map(|s| (s.index, s.value.clone()))
        .collect();
    let master = field.interpolate_at_zero(&points).map_err(|e| match e {
        FieldError::DuplicateIndex(i) => ThresholdError::DuplicateShare(i),
        // zero or empty indices cannot pass the commitment check above
        _ => ThresholdError::ShareRejected { index: 0 },
    })?;
    if group.generator_exp(&master) != group_commitments[0] {
        return Err(ThresholdError::InconsistentReconstruction);
    }
    Ok(ErasableSecret {
        value: Some(master),
    })
}
