//! Leveled homomorphic encryption on constant polynomials, exact by
//! construction.
//!
//! The scheme is BGV-shaped over R_Q = Z_Q[X]/(X^n + 1): a ciphertext is a
//! short vector of ring elements whose phase (evaluation at the secret key)
//! equals the plaintext plus t times a noise term. Payloads are encoded in
//! coefficient zero; coefficients 1..n stay zero and act as a checksum band
//! that flags corrupted ciphertexts at decryption.
//!
//! Exactness is enforced, not hoped for: every ciphertext carries a certified
//! bound on its phase magnitude, every operator recomputes it, and an
//! operation that could push the phase past (Q-1)/2 is refused instead of
//! silently wrapping. With the default `error_bound` of 0 the noise term is
//! identically zero, which makes every homomorphic operator deterministic
//! and replica outputs byte-identical. That default gives no semantic
//! security; this is a correctness testbed, not a vault. A hardened backend
//! must keep the same operator signatures and the same exactness contract.
//!
//! Every ciphertext is tagged with the key round that encrypted it, and
//! operators refuse to mix rounds: after a key rotation, material from the
//! old round cannot silently combine with the new.
//!
//! Supported circuit shape: any number of additions, subtractions, and
//! scalar multiplications, and at most one ciphertext-ciphertext
//! multiplication (there is no relinearization; a product ciphertext has
//! three parts and refuses further multiplication).

pub mod poly;

use crate::he::poly::{RingPoly, SparsePoly};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HeError {
    #[error("parameters rejected: {0}")]
    BadParams(&'static str),
    #[error("plaintext {value} not below modulus {modulus}")]
    PlaintextOutOfRange { value: u64, modulus: u64 },
    #[error("operation would push phase bound to {bound}, limit {limit}")]
    BudgetExceeded { bound: u128, limit: u128 },
    #[error("multiplicative depth 1 already used")]
    DepthExceeded,
    #[error("ciphertext from round {left} mixed with round {right}")]
    RoundMismatch { left: u64, right: u64 },
    #[error("ciphertext failed checksum at decryption")]
    CorruptCiphertext,
    #[error("malformed ciphertext: {0}")]
    MalformedCiphertext(&'static str),
}

/// Scheme parameters. `ciphertext_modulus` must stay at or below 2^61 so the
/// ring arithmetic accumulators cannot overflow.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeParams {
    pub ring_dimension: usize,
    pub plaintext_modulus: u64,
    pub ciphertext_modulus: u64,
    pub secret_weight: usize,
    pub error_bound: u64,
}

impl HeParams {
    /// n=1024, t=65537, Q=2^61-1, sparse ternary weight 64, zero noise.
    pub fn desk_default() -> Self {
        HeParams {
            ring_dimension: 1024,
            plaintext_modulus: 65537,
            ciphertext_modulus: (1 << 61) - 1,
            secret_weight: 64,
            error_bound: 0,
        }
    }

    /// n=8, t=17, Q=8191: small enough to follow a ciphertext by hand.
    pub fn tiny() -> Self {
        HeParams {
            ring_dimension: 8,
            plaintext_modulus: 17,
            ciphertext_modulus: 8191,
            secret_weight: 2,
            error_bound: 0,
        }
    }

    pub fn validate(&self) -> Result<(), HeError> {
        let n = self.ring_dimension;
        if n < 2 || !n.is_power_of_two() {
            return Err(HeError::BadParams("ring dimension must be a power of two"));
        }
        if self.plaintext_modulus < 2 {
            return Err(HeError::BadParams("plaintext modulus too small"));
        }
        if self.ciphertext_modulus > 1 << 61 {
            return Err(HeError::BadParams("ciphertext modulus above 2^61"));
        }
        if u128::from(self.plaintext_modulus) * 2 >= u128::from(self.ciphertext_modulus) {
            return Err(HeError::BadParams("plaintext modulus too close to Q"));
        }
        if self.secret_weight == 0 || self.secret_weight > n {
            return Err(HeError::BadParams("secret weight must be in 1..=n"));
        }
        if self.fresh_bound() > self.phase_limit() {
            return Err(HeError::BadParams("fresh ciphertext exceeds phase limit"));
        }
        Ok(())
    }

    /// Largest phase magnitude that still decodes exactly: (Q-1)/2.
    pub fn phase_limit(&self) -> u128 {
        u128::from(self.ciphertext_modulus - 1) / 2
    }

    /// Certified phase bound of a fresh ciphertext:
    /// (t-1) + t*B*(2h+1) for noise bound B and secret weight h.
    fn fresh_bound(&self) -> u128 {
        let t = u128::from(self.plaintext_modulus);
        let b = u128::from(self.error_bound);
        let h = self.secret_weight as u128;
        (t - 1) + t * b * (2 * h + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HePublicKey {
    b: RingPoly,
    a: RingPoly,
}

#[derive(Debug, Clone)]
pub struct HeSecretKey {
    s: SparsePoly,
}

#[derive(Debug, Clone)]
pub struct HeKeyPair {
    pub public: HePublicKey,
    pub secret: HeSecretKey,
}

/// b = t*e - a*s, so the phase of (b*u + t*e0 + m, a*u + t*e1) telescopes to
/// m + t*(e*u + e0 + e1*s).
pub fn keygen<R: Rng + ?Sized>(params: &HeParams, rng: &mut R) -> Result<HeKeyPair, HeError> {
    params.validate()?;
    let (n, q, t) = (
        params.ring_dimension,
        params.ciphertext_modulus,
        params.plaintext_modulus,
    );
    let s = SparsePoly::random_ternary(n, params.secret_weight, rng);
    let a = RingPoly::random_uniform(n, q, rng);
    let e = RingPoly::random_error(n, params.error_bound, q, rng);
    let b = e.scale(t, q).sub(&a.mul_sparse(&s, q), q);
    Ok(HeKeyPair {
        public: HePublicKey { b, a },
        secret: HeSecretKey { s },
    })
}

/// Serialized ciphertext header:
/// round_id u64 | degree u8 | level u8 | dense u8 | bound u128, all
/// little-endian, followed by each part as a u32 coefficient count and the
/// coefficients as u64 words.
const HEADER_LEN: usize = 8 + 1 + 1 + 1 + 16;

/// A ciphertext of `degree()+1` ring elements, tagged with the key round
/// that produced it. `bound` certifies the phase magnitude; `dense` records
/// whether the phase may have nonconstant coefficients (only when noise is
/// in play), which changes how a product's bound must be computed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext {
    round_id: u64,
    parts: Vec<RingPoly>,
    bound: u128,
    dense: bool,
}

impl Ciphertext {
    pub fn round_id(&self) -> u64 {
        self.round_id
    }

    /// Number of parts minus one: 1 fresh, 2 after a multiplication.
    pub fn degree(&self) -> u8 {
        (self.parts.len() - 1) as u8
    }

    /// Multiplicative level: 0 fresh, 1 after a multiplication.
    pub fn level(&self) -> u8 {
        (self.parts.len() - 2) as u8
    }

    pub fn phase_bound(&self) -> u128 {
        self.bound
    }

    /// Canonical byte encoding; see `HEADER_LEN` for the layout. Replicas
    /// hash these bytes, so the encoding must be a pure function of the
    /// ciphertext.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.parts[0].len();
        let mut out = Vec::with_capacity(HEADER_LEN + self.parts.len() * (4 + n * 8));
        out.extend_from_slice(&self.round_id.to_le_bytes());
        out.push(self.degree());
        out.push(self.level());
        out.push(self.dense as u8);
        out.extend_from_slice(&self.bound.to_le_bytes());
        for part in &self.parts {
            out.extend_from_slice(&(part.len() as u32).to_le_bytes());
            for &c in part.coeffs() {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(params: &HeParams, bytes: &[u8]) -> Result<Self, HeError> {
        let n = params.ring_dimension;
        if bytes.len() < HEADER_LEN {
            return Err(HeError::MalformedCiphertext("truncated header"));
        }
        let round_id = u64::from_le_bytes(bytes[..8].try_into().unwrap());
        let degree = bytes[8];
        let level = bytes[9];
        if !(1..=2).contains(&degree) {
            return Err(HeError::MalformedCiphertext("bad degree"));
        }
        if level != degree - 1 {
            return Err(HeError::MalformedCiphertext("level does not match degree"));
        }
        let dense = match bytes[10] {
            0 => false,
            1 => true,
            _ => return Err(HeError::MalformedCiphertext("bad dense flag")),
        };
        let bound = u128::from_le_bytes(bytes[11..27].try_into().unwrap());
        if bound > params.phase_limit() {
            return Err(HeError::MalformedCiphertext("bound above phase limit"));
        }
        let mut parts = Vec::with_capacity(degree as usize + 1);
        let mut rest = &bytes[HEADER_LEN..];
        for _ in 0..=degree {
            if rest.len() < 4 {
                return Err(HeError::MalformedCiphertext("truncated part header"));
            }
            let count = u32::from_le_bytes(rest[..4].try_into().unwrap()) as usize;
            if count != n {
                return Err(HeError::MalformedCiphertext("ring dimension mismatch"));
            }
            rest = &rest[4..];
            if rest.len() < count * 8 {
                return Err(HeError::MalformedCiphertext("truncated coefficients"));
            }
            let coeffs: Vec<u64> = rest[..count * 8]
                .chunks_exact(8)
                .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            rest = &rest[count * 8..];
            let poly = RingPoly::from_coeffs(coeffs, n, params.ciphertext_modulus)
                .ok_or(HeError::MalformedCiphertext("coefficient out of range"))?;
            parts.push(poly);
        }
        if !rest.is_empty() {
            return Err(HeError::MalformedCiphertext("trailing bytes"));
        }
        Ok(Ciphertext {
            round_id,
            parts,
            bound,
            dense,
        })
    }
}

pub fn encrypt<R: Rng + ?Sized>(
    params: &HeParams,
    pk: &HePublicKey,
    round_id: u64,
    value: u64,
    rng: &mut R,
) -> Result<Ciphertext, HeError> {
    let (n, q, t) = (
        params.ring_dimension,
        params.ciphertext_modulus,
        params.plaintext_modulus,
    );
    if value >= t {
        return Err(HeError::PlaintextOutOfRange { value, modulus: t });
    }
    let u = SparsePoly::random_ternary(n, params.secret_weight, rng);
    let e0 = RingPoly::random_error(n, params.error_bound, q, rng);
    let e1 = RingPoly::random_error(n, params.error_bound, q, rng);
    let m = RingPoly::constant(value, n, q);
    let c0 = pk.b.mul_sparse(&u, q).add(&e0.scale(t, q), q).add(&m, q);
    let c1 = pk.a.mul_sparse(&u, q).add(&e1.scale(t, q), q);
    Ok(Ciphertext {
        round_id,
        parts: vec![c0, c1],
        bound: params.fresh_bound(),
        dense: params.error_bound > 0,
    })
}

/// The trivial encoding (m, 0): decrypts to `value` under any secret key and
/// hides nothing. It exists for fixed placeholder payloads that must parse
/// and decrypt like a real ciphertext.
pub fn trivial(params: &HeParams, round_id: u64, value: u64) -> Result<Ciphertext, HeError> {
    let (n, q, t) = (
        params.ring_dimension,
        params.ciphertext_modulus,
        params.plaintext_modulus,
    );
    if value >= t {
        return Err(HeError::PlaintextOutOfRange { value, modulus: t });
    }
    Ok(Ciphertext {
        round_id,
        parts: vec![RingPoly::constant(value, n, q), RingPoly::zero(n)],
        bound: u128::from(value),
        dense: false,
    })
}

/// Decrypts and checks the checksum band: the phase reduced mod t must be a
/// constant polynomial, anything else means the ciphertext was damaged after
/// encryption.
pub fn decrypt(params: &HeParams, sk: &HeSecretKey, ct: &Ciphertext) -> Result<u64, HeError> {
    let (q, t) = (params.ciphertext_modulus, params.plaintext_modulus);
    check_shape(params, ct)?;
    let mut phase = ct.parts[0].add(&ct.parts[1].mul_sparse(&sk.s, q), q);
    if let Some(c2) = ct.parts.get(2) {
        phase = phase.add(&c2.mul_sparse(&sk.s, q).mul_sparse(&sk.s, q), q);
    }
    let half = q / 2;
    let t_i = t as i128;
    let mut value = 0u64;
    for (i, &c) in phase.coeffs().iter().enumerate() {
        let centered = if c > half {
            c as i128 - q as i128
        } else {
            c as i128
        };
        let residue = centered.rem_euclid(t_i) as u64;
        if i == 0 {
            value = residue;
        } else if residue != 0 {
            return Err(HeError::CorruptCiphertext);
        }
    }
    Ok(value)
}

pub fn add(params: &HeParams, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, HeError> {
    linear_combine(params, a, b, false)
}

pub fn sub(params: &HeParams, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, HeError> {
    linear_combine(params, a, b, true)
}

fn linear_combine(
    params: &HeParams,
    a: &Ciphertext,
    b: &Ciphertext,
    negate: bool,
) -> Result<Ciphertext, HeError> {
    check_shape(params, a)?;
    check_shape(params, b)?;
    check_rounds(a, b)?;
    let q = params.ciphertext_modulus;
    let n = params.ring_dimension;
    let bound = check_budget(params, a.bound.checked_add(b.bound))?;
    let len = a.parts.len().max(b.parts.len());
    let zero = RingPoly::zero(n);
    let parts = (0..len)
        .map(|i| {
            let x = a.parts.get(i).unwrap_or(&zero);
            let y = b.parts.get(i).unwrap_or(&zero);
            if negate {
                x.sub(y, q)
            } else {
                x.add(y, q)
            }
        })
        .collect();
    Ok(Ciphertext {
        round_id: a.round_id,
        parts,
        bound,
        dense: a.dense || b.dense,
    })
}

/// Tensor product: (a0, a1) x (b0, b1) = (a0b0, a0b1 + a1b0, a1b1). The
/// result has three parts and cannot be multiplied again.
pub fn mul(params: &HeParams, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, HeError> {
    check_shape(params, a)?;
    check_shape(params, b)?;
    check_rounds(a, b)?;
    if a.level() != 0 || b.level() != 0 {
        return Err(HeError::DepthExceeded);
    }
    let q = params.ciphertext_modulus;
    let dense = a.dense || b.dense;
    // constant phases multiply to a constant; dense phases can smear one
    // coefficient across all n cross terms
    let raw = a.bound.checked_mul(b.bound);
    let raw = if dense {
        raw.and_then(|v| v.checked_mul(params.ring_dimension as u128))
    } else {
        raw
    };
    let bound = check_budget(params, raw)?;
    let p00 = a.parts[0].mul_dense(&b.parts[0], q);
    let p01 = a.parts[0].mul_dense(&b.parts[1], q);
    let p10 = a.parts[1].mul_dense(&b.parts[0], q);
    let p11 = a.parts[1].mul_dense(&b.parts[1], q);
    Ok(Ciphertext {
        round_id: a.round_id,
        parts: vec![p00, p01.add(&p10, q), p11],
        bound,
        dense,
    })
}

pub fn scalar_mul(params: &HeParams, k: u64, a: &Ciphertext) -> Result<Ciphertext, HeError> {
    check_shape(params, a)?;
    if k >= params.plaintext_modulus {
        return Err(HeError::PlaintextOutOfRange {
            value: k,
            modulus: params.plaintext_modulus,
        });
    }
    let bound = check_budget(params, a.bound.checked_mul(u128::from(k.max(1))))?;
    let q = params.ciphertext_modulus;
    let parts = a.parts.iter().map(|p| p.scale(k, q)).collect();
    Ok(Ciphertext {
        round_id: a.round_id,
        parts,
        bound,
        dense: a.dense,
    })
}

fn check_budget(params: &HeParams, bound: Option<u128>) -> Result<u128, HeError> {
    let limit = params.phase_limit();
    match bound {
        Some(b) if b <= limit => Ok(b),
        Some(b) => Err(HeError::BudgetExceeded { bound: b, limit }),
        None => Err(HeError::BudgetExceeded {
            bound: u128::MAX,
            limit,
        }),
    }
}

fn check_rounds(a: &Ciphertext, b: &Ciphertext) -> Result<(), HeError> {
    if a.round_id != b.round_id {
        return Err(HeError::RoundMismatch {
            left: a.round_id,
            right: b.round_id,
        });
    }
    Ok(())
}

fn check_shape(params: &HeParams, ct: &Ciphertext) -> Result<(), HeError> {
    if !(2..=3).contains(&ct.parts.len()) {
        return Err(HeError::MalformedCiphertext("bad part count"));
    }
    if ct.parts.iter().any(|p| p.len() != params.ring_dimension) {
        return Err(HeError::MalformedCiphertext("ring dimension mismatch"));
    }
    Ok(())
}
