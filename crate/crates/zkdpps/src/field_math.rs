//! Prime-field and multiplicative-group arithmetic underlying key sharing.
//!
//! Secrets, polynomial coefficients, and shares live in Z_q. Commitments live
//! in the order-q subgroup of Z_P^* generated by `g`, with P = 2q + 1, so an
//! exponent is reduced mod q while a group element is reduced mod P. Mixing
//! the two moduli is the classic bug here; every API below is typed so an
//! exponent is a [`FieldElement`] and a group element is a plain `BigUint`.

use num_bigint::{BigUint, RandBigInt};
use num_traits::{One, Zero};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FieldError {
    #[error("share index 0 is reserved for the secret")]
    ZeroIndex,
    #[error("duplicate share index {0}")]
    DuplicateIndex(u32),
    #[error("no shares supplied")]
    Empty,
    #[error("group parameter rejected: {0}")]
    BadGroup(&'static str),
}

/// An element of Z_q, always stored reduced.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FieldElement(BigUint);

impl FieldElement {
    pub fn value(&self) -> &BigUint {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn to_bytes_be(&self) -> Vec<u8> {
        self.0.to_bytes_be()
    }
}

/// The field Z_q for a prime q. All operations reduce into [0, q).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrimeField {
    order: BigUint,
}

impl PrimeField {
    pub fn new(order: BigUint) -> Self {
        assert!(order > BigUint::from(1u8), "field order must exceed 1");
        PrimeField { order }
    }

    pub fn order(&self) -> &BigUint {
        &self.order
    }

    pub fn element(&self, v: BigUint) -> FieldElement {
        FieldElement(v % &self.order)
    }

    pub fn from_u64(&self, v: u64) -> FieldElement {
        self.element(BigUint::from(v))
    }

    pub fn from_bytes_be(&self, bytes: &[u8]) -> FieldElement {
        self.element(BigUint::from_bytes_be(bytes))
    }

    pub fn zero(&self) -> FieldElement {
        FieldElement(BigUint::zero())
    }

    pub fn one(&self) -> FieldElement {
        self.element(BigUint::one())
    }

    pub fn add(&self, a: &FieldElement, b: &FieldElement) -> FieldElement {
        self.element(&a.0 + &b.0)
    }

    pub fn sub(&self, a: &FieldElement, b: &FieldElement) -> FieldElement {
        // add q first so the difference never goes negative
        self.element(&a.0 + &self.order - &b.0)
    }

    pub fn mul(&self, a: &FieldElement, b: &FieldElement) -> FieldElement {
        self.element(&a.0 * &b.0)
    }

    pub fn neg(&self, a: &FieldElement) -> FieldElement {
        self.sub(&self.zero(), a)
    }

    /// Multiplicative inverse via Fermat: a^(q-2) mod q. None for zero.
    pub fn inv(&self, a: &FieldElement) -> Option<FieldElement> {
        if a.0.is_zero() {
            return None;
        }
        let exp = &self.order - BigUint::from(2u8);
        Some(FieldElement(a.0.modpow(&exp, &self.order)))
    }

    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> FieldElement {
        FieldElement(rng.gen_biguint_below(&self.order))
    }

    /// Horner evaluation of `poly` at `x`.
    pub fn poly_eval(&self, poly: &FieldPolynomial, x: &FieldElement) -> FieldElement {
        let mut acc = self.zero();
        for coeff in poly.coefficients.iter().rev() {
            acc = self.add(&self.mul(&acc, x), coeff);
        }
        acc
    }

    /// Lagrange coefficient at zero for index `i` within `index_set`:
    /// prod_{j != i} j * (j - i)^-1 mod q.
    pub fn lagrange_coeff(&self, index_set: &[u32], i: u32) -> Result<FieldElement, FieldError> {
        check_indices(index_set)?;
        debug_assert!(index_set.contains(&i));
        let fi = self.from_u64(u64::from(i));
        let mut num = self.one();
        let mut den = self.one();
        for &j in index_set {
            if j == i {
                continue;
            }
            let fj = self.from_u64(u64::from(j));
            num = self.mul(&num, &fj);
            den = self.mul(&den, &self.sub(&fj, &fi));
        }
        // den is nonzero: indices are distinct and below q
        let den_inv = self.inv(&den).expect("distinct indices");
        Ok(self.mul(&num, &den_inv))
    }

    /// Interpolates the degree-(shares.len()-1) polynomial through the given
    /// (index, value) points and returns its value at zero.
    pub fn interpolate_at_zero(
        &self,
        shares: &[(u32, FieldElement)],
    ) -> Result<FieldElement, FieldError> {
        if shares.is_empty() {
            return Err(FieldError::Empty);
        }
        let indices: Vec<u32> = shares.iter().map(|(i, _)| *i).collect();
        check_indices(&indices)?;
        let mut acc = self.zero();
        for (i, value) in shares {
            let lam = self.lagrange_coeff(&indices, *i)?;
            acc = self.add(&acc, &self.mul(&lam, value));
        }
        Ok(acc)
    }
}

fn check_indices(indices: &[u32]) -> Result<(), FieldError> {
    let mut seen = std::collections::BTreeSet::new();
    for &i in indices {
        if i == 0 {
            return Err(FieldError::ZeroIndex);
        }
        if !seen.insert(i) {
            return Err(FieldError::DuplicateIndex(i));
        }
    }
    Ok(())
}

/// Polynomial over Z_q, constant term first. A sharing polynomial of
/// threshold t has exactly t coefficients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldPolynomial {
    coefficients: Vec<FieldElement>,
}

impl FieldPolynomial {
    pub fn new(coefficients: Vec<FieldElement>) -> Self {
        assert!(!coefficients.is_empty(), "polynomial needs a constant term");
        FieldPolynomial { coefficients }
    }

    /// Samples `threshold` coefficients; the constant term is the secret.
    pub fn random_with_secret<R: Rng + ?Sized>(
        field: &PrimeField,
        secret: FieldElement,
        threshold: usize,
        rng: &mut R,
    ) -> Self {
        assert!(threshold >= 1);
        let mut coefficients = Vec::with_capacity(threshold);
        coefficients.push(secret);
        for _ in 1..threshold {
            coefficients.push(field.random(rng));
        }
        FieldPolynomial { coefficients }
    }

    pub fn coefficients(&self) -> &[FieldElement] {
        &self.coefficients
    }

    pub fn constant_term(&self) -> &FieldElement {
        &self.coefficients[0]
    }

    pub fn threshold(&self) -> usize {
        self.coefficients.len()
    }
}

/// A Schnorr-style group: the order-q subgroup of Z_P^* with P = 2q + 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupParams {
    modulus_p: BigUint,
    order_q: BigUint,
    generator_g: BigUint,
}

impl GroupParams {
    /// Validates the cheap invariants: g in (1, P), g^q = 1 mod P. Primality
    /// of P and q is the caller's responsibility; use the named constructors
    /// for vetted parameters.
    pub fn new(
        modulus_p: BigUint,
        order_q: BigUint,
        generator_g: BigUint,
    ) -> Result<Self, FieldError> {
        if generator_g <= BigUint::one() || generator_g >= modulus_p {
            return Err(FieldError::BadGroup("generator out of range"));
        }
        if generator_g.modpow(&order_q, &modulus_p) != BigUint::one() {
            return Err(FieldError::BadGroup("generator order is not q"));
        }
        Ok(GroupParams {
            modulus_p,
            order_q,
            generator_g,
        })
    }

    /// 128-bit safe-prime group: P = 2q + 1 with q a 127-bit prime, g = 4
    /// (a quadratic residue, hence of order q). Sized for fast tests, not
    /// for security margins.
    pub fn desk_default() -> Self {
        let q: BigUint = "85070591730234615865843651857942057263".parse().unwrap();
        let p: BigUint = "170141183460469231731687303715884114527".parse().unwrap();
        GroupParams::new(p, q, BigUint::from(4u8)).expect("vetted parameters")
    }

    /// P=23, q=11, g=2. Small enough to check every value by hand.
    pub fn tiny() -> Self {
        GroupParams::new(BigUint::from(23u8), BigUint::from(11u8), BigUint::from(2u8))
            .expect("vetted parameters")
    }

    pub fn modulus_p(&self) -> &BigUint {
        &self.modulus_p
    }

    pub fn order_q(&self) -> &BigUint {
        &self.order_q
    }

    pub fn generator_g(&self) -> &BigUint {
        &self.generator_g
    }

    /// The exponent field Z_q.
    pub fn field(&self) -> PrimeField {
        PrimeField::new(self.order_q.clone())
    }

    /// base^exponent mod P. The exponent is a field element, so it is
    /// already reduced mod q.
    pub fn group_exp(&self, base: &BigUint, exponent: &FieldElement) -> BigUint {
        base.modpow(&exponent.0, &self.modulus_p)
    }

    /// g^exponent mod P.
    pub fn generator_exp(&self, exponent: &FieldElement) -> BigUint {
        self.group_exp(&self.generator_g, exponent)
    }

    pub fn group_mul(&self, a: &BigUint, b: &BigUint) -> BigUint {
        (a * b) % &self.modulus_p
    }
}
