//! Distributed key generation with verifiable secret sharing.
//!
//! Every participant acts as a dealer: it samples a threshold-t polynomial,
//! broadcasts generator commitments to each coefficient, and sends f_i(j) to
//! participant j. A recipient checks g^{f_i(j)} against the committed
//! polynomial evaluated in the exponent. Dealers caught with a bad share are
//! excluded; the ceremony aborts unless more than two-thirds of dealers
//! survive. Surviving contributions are summed, so the master secret
//! (never materialized here) is the sum of surviving constant terms and each
//! participant ends up holding one Shamir share of it.

use crate::field_math::{FieldElement, FieldPolynomial, GroupParams};
use num_bigint::BigUint;
use num_traits::One;
use rand::Rng;
use std::collections::BTreeMap;
use thiserror::Error;

/// 1-based participant index; index 0 would address the secret itself.
pub type ParticipantIndex = u32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DkgError {
    #[error("invalid ceremony shape: {0}")]
    BadConfig(&'static str),
    #[error("only {verified} of {total} dealers passed verification, need more than two-thirds")]
    InsufficientDealers { verified: usize, total: usize },
}

/// One dealt share: dealer's polynomial evaluated at the recipient's index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DealtShare {
    pub dealer: ParticipantIndex,
    pub recipient: ParticipantIndex,
    pub value: FieldElement,
}

/// Everything one dealer emits: public commitments plus per-recipient shares.
/// The sampled polynomial itself is dropped before this struct is returned.
#[derive(Debug, Clone)]
pub struct DealerPackage {
    pub dealer: ParticipantIndex,
    pub commitments: Vec<BigUint>,
    pub shares: Vec<DealtShare>,
}

/// An aggregated key share held by one participant after the ceremony.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyShare {
    pub index: ParticipantIndex,
    pub value: FieldElement,
}

/// Ceremony result. `group_commitments` are the coefficient-wise products of
/// the surviving dealers' commitments; they let anyone Feldman-check an
/// aggregated share long after the ceremony, e.g. during decryption.
#[derive(Debug, Clone)]
pub struct CeremonyOutput {
    pub public_key: BigUint,
    pub shares: Vec<KeyShare>,
    pub group_commitments: Vec<BigUint>,
    pub verified_dealers: Vec<ParticipantIndex>,
    pub excluded_dealers: Vec<ParticipantIndex>,
}

/// Deals shares of a fixed polynomial. Exposed so tests and reshare flows can
/// pin the polynomial; normal ceremonies go through [`deal`].
pub fn deal_from_poly(
    params: &GroupParams,
    dealer: ParticipantIndex,
    poly: &FieldPolynomial,
    recipients: &[ParticipantIndex],
) -> DealerPackage {
    let field = params.field();
    let commitments = poly
        .coefficients()
        .iter()
        .map(|c| params.generator_exp(c))
        .collect();
    let shares = recipients
        .iter()
        .map(|&r| DealtShare {
            dealer,
            recipient: r,
            value: field.poly_eval(poly, &field.from_u64(u64::from(r))),
        })
        .collect();
    DealerPackage {
        dealer,
        commitments,
        shares,
    }
}

/// Samples a fresh threshold-t polynomial and deals it.
pub fn deal<R: Rng + ?Sized>(
    params: &GroupParams,
    dealer: ParticipantIndex,
    threshold: usize,
    recipients: &[ParticipantIndex],
    rng: &mut R,
) -> DealerPackage {
    let field = params.field();
    let secret = field.random(rng);
    let poly = FieldPolynomial::random_with_secret(&field, secret, threshold, rng);
    deal_from_poly(params, dealer, &poly, recipients)
}

/// Feldman check: g^value == prod_k commitments[k]^(index^k) mod P.
pub fn feldman_check(
    params: &GroupParams,
    commitments: &[BigUint],
    index: ParticipantIndex,
    value: &FieldElement,
) -> bool {
    if commitments.is_empty() || index == 0 {
        return false;
    }
    let field = params.field();
    let x = field.from_u64(u64::from(index));
    let mut x_pow = field.one();
    let mut expected = BigUint::one();
    for c in commitments {
        expected = params.group_mul(&expected, &params.group_exp(c, &x_pow));
        x_pow = field.mul(&x_pow, &x);
    }
    params.generator_exp(value) == expected
}

/// Checks one dealt share against its dealer's package. Every field of the
/// share is covered: the claimed dealer must match the package, and the
/// (recipient, value) pair must satisfy the Feldman relation.
pub fn verify_dealt_share(params: &GroupParams, pkg: &DealerPackage, share: &DealtShare) -> bool {
    share.dealer == pkg.dealer
        && feldman_check(params, &pkg.commitments, share.recipient, &share.value)
}

pub fn verify_key_share(
    params: &GroupParams,
    group_commitments: &[BigUint],
    share: &KeyShare,
) -> bool {
    feldman_check(params, group_commitments, share.index, &share.value)
}

/// Verifies every dealer package and aggregates the survivors.
///
/// A dealer survives only if its package has exactly `threshold` commitments,
/// exactly one share per recipient 1..=n, and every share passes the Feldman
/// check. The ceremony needs strictly more than two-thirds of the `n`
/// expected dealers to survive.
pub fn aggregate(
    params: &GroupParams,
    n: usize,
    threshold: usize,
    packages: &[DealerPackage],
) -> Result<CeremonyOutput, DkgError> {
    check_shape(params, n, threshold)?;
    let field = params.field();

    let mut verified: Vec<&DealerPackage> = Vec::new();
    let mut verified_dealers = Vec::new();
    let mut excluded_dealers = Vec::new();
    for pkg in packages {
        if dealer_ok(params, n, threshold, pkg) {
            verified.push(pkg);
            verified_dealers.push(pkg.dealer);
        } else {
            excluded_dealers.push(pkg.dealer);
        }
    }

    // strict two-thirds on the expected dealer count, in integers
    if 3 * verified.len() <= 2 * n {
        return Err(DkgError::InsufficientDealers {
            verified: verified.len(),
            total: n,
        });
    }

    let mut share_sums: BTreeMap<ParticipantIndex, FieldElement> = (1..=n as u32)
        .map(|j| (j, field.zero()))
        .collect();
    for pkg in &verified {
        for share in &pkg.shares {
            let slot = share_sums.get_mut(&share.recipient).expect("checked shape");
            *slot = field.add(slot, &share.value);
        }
    }
    let shares = share_sums
        .into_iter()
        .map(|(index, value)| KeyShare { index, value })
        .collect();

    let mut group_commitments = vec![BigUint::one(); threshold];
    for pkg in &verified {
        for (k, c) in pkg.commitments.iter().enumerate() {
            group_commitments[k] = params.group_mul(&group_commitments[k], c);
        }
    }
    let public_key = group_commitments[0].clone();

    Ok(CeremonyOutput {
        public_key,
        shares,
        group_commitments,
        verified_dealers,
        excluded_dealers,
    })
}

/// Full honest ceremony: n participants each deal to all n, then aggregate.
pub fn run_ceremony<R: Rng + ?Sized>(
    params: &GroupParams,
    n: usize,
    threshold: usize,
    rng: &mut R,
) -> Result<CeremonyOutput, DkgError> {
    check_shape(params, n, threshold)?;
    let recipients: Vec<u32> = (1..=n as u32).collect();
    let packages: Vec<DealerPackage> = recipients
        .iter()
        .map(|&d| deal(params, d, threshold, &recipients, rng))
        .collect();
    aggregate(params, n, threshold, &packages)
}

fn check_shape(params: &GroupParams, n: usize, threshold: usize) -> Result<(), DkgError> {
    if n == 0 {
        return Err(DkgError::BadConfig("no participants"));
    }
    if threshold == 0 || threshold > n {
        return Err(DkgError::BadConfig("threshold must be in 1..=n"));
    }
    // indices 1..=n must be distinct and nonzero mod q
    if BigUint::from(n) >= *params.order_q() {
        return Err(DkgError::BadConfig("participant count exceeds field"));
    }
    Ok(())
}

fn dealer_ok(params: &GroupParams, n: usize, threshold: usize, pkg: &DealerPackage) -> bool {
    if pkg.commitments.len() != threshold || pkg.shares.len() != n {
        return false;
    }
    let mut seen = vec![false; n + 1];
    for share in &pkg.shares {
        let r = share.recipient as usize;
        if r == 0 || r > n || seen[r] {
            return false;
        }
        seen[r] = true;
        if !verify_dealt_share(params, pkg, share) {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn tiny_fixture() -> (GroupParams, Vec<DealerPackage>) {
        // dealer 1: f(x) = 4 + 9x, dealer 2: h(x) = 6 + 3x, over q = 11
        let params = GroupParams::tiny();
        let field = params.field();
        let poly1 = FieldPolynomial::new(vec![field.from_u64(4), field.from_u64(9)]);
        let poly2 = FieldPolynomial::new(vec![field.from_u64(6), field.from_u64(3)]);
        let recipients = [1, 2, 3];
        let p1 = deal_from_poly(&params, 1, &poly1, &recipients);
        let p2 = deal_from_poly(&params, 2, &poly2, &recipients);
        (params, vec![p1, p2])
    }

    #[test]
    fn hand_checked_commitments_and_shares() {
        let (_, packages) = tiny_fixture();
        let c1: Vec<u64> = packages[0]
            .commitments
            .iter()
            .map(|c| c.try_into().unwrap())
            .collect();
        let c2: Vec<u64> = packages[1]
            .commitments
            .iter()
            .map(|c| c.try_into().unwrap())
            .collect();
        assert_eq!(c1, [16, 6]);
        assert_eq!(c2, [18, 8]);

        let field = GroupParams::tiny().field();
        let values1: Vec<FieldElement> = packages[0].shares.iter().map(|s| s.value.clone()).collect();
        let values2: Vec<FieldElement> = packages[1].shares.iter().map(|s| s.value.clone()).collect();
        assert_eq!(
            values1,
            vec![field.from_u64(2), field.from_u64(0), field.from_u64(9)]
        );
        assert_eq!(
            values2,
            vec![field.from_u64(9), field.from_u64(1), field.from_u64(4)]
        );
    }

    #[test]
    fn feldman_accepts_honest_rejects_tampered() {
        let (params, packages) = tiny_fixture();
        let field = params.field();
        for pkg in &packages {
            for share in &pkg.shares {
                assert!(verify_dealt_share(&params, pkg, share));
            }
        }
        // flip f(3) = 9 to 8: g^8 = 3 but the commitment expansion gives 6
        let mut bad = packages[0].shares[2].clone();
        bad.value = field.from_u64(8);
        assert!(!verify_dealt_share(&params, &packages[0], &bad));
        // a share relabeled with another dealer's id fails too
        let mut wrong_dealer = packages[0].shares[2].clone();
        wrong_dealer.dealer = 2;
        assert!(!verify_dealt_share(&params, &packages[0], &wrong_dealer));
        // as does presenting f(3) as recipient 2's share
        let mut wrong_recipient = packages[0].shares[2].clone();
        wrong_recipient.recipient = 2;
        assert!(!verify_dealt_share(&params, &packages[0], &wrong_recipient));
    }

    #[test]
    fn two_dealer_aggregation_matches_hand_values() {
        let (params, packages) = tiny_fixture();
        let field = params.field();
        // 2 of n=3 expected dealers: 6 > 6 fails, so this errors
        let out = aggregate(&params, 3, 2, &packages);
        assert_eq!(
            out.unwrap_err(),
            DkgError::InsufficientDealers {
                verified: 2,
                total: 3
            }
        );

        // with n = 2 the same packages aggregate; recipient 3's share is
        // checked separately below via the group commitments
        let recipients = [1, 2];
        let poly1 = FieldPolynomial::new(vec![field.from_u64(4), field.from_u64(9)]);
        let poly2 = FieldPolynomial::new(vec![field.from_u64(6), field.from_u64(3)]);
        let p1 = deal_from_poly(&params, 1, &poly1, &recipients);
        let p2 = deal_from_poly(&params, 2, &poly2, &recipients);
        let out = aggregate(&params, 2, 2, &[p1, p2]).unwrap();

        // master = 4 + 6 = 10, pk = 2^10 mod 23 = 12
        assert_eq!(out.public_key, BigUint::from(12u8));
        assert_eq!(out.shares[0].value, field.from_u64(0));
        assert_eq!(out.shares[1].value, field.from_u64(1));
        // D_0 = 16*18 mod 23 = 12, D_1 = 6*8 mod 23 = 2
        assert_eq!(
            out.group_commitments,
            vec![BigUint::from(12u8), BigUint::from(2u8)]
        );
        // the aggregate polynomial is 10 + x, so participant 3 holds 2
        let s3 = KeyShare {
            index: 3,
            value: field.from_u64(2),
        };
        assert!(verify_key_share(&params, &out.group_commitments, &s3));

        // shares 1 and 3 reconstruct the master secret
        let rec = field
            .interpolate_at_zero(&[(1, field.from_u64(0)), (3, field.from_u64(2))])
            .unwrap();
        assert_eq!(rec, field.from_u64(10));
    }

    #[test]
    fn ceremony_key_is_reconstructible_and_consistent() {
        let params = GroupParams::desk_default();
        let field = params.field();
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let (n, t) = (5, 3);
        let out = run_ceremony(&params, n, t, &mut rng).unwrap();
        assert_eq!(out.verified_dealers.len(), n);
        assert!(out.excluded_dealers.is_empty());

        for share in &out.shares {
            assert!(verify_key_share(&params, &out.group_commitments, share));
        }

        // any t shares reconstruct a secret whose public key matches
        let pts: Vec<(u32, FieldElement)> = out.shares[..t]
            .iter()
            .map(|s| (s.index, s.value.clone()))
            .collect();
        let master = field.interpolate_at_zero(&pts).unwrap();
        assert_eq!(params.generator_exp(&master), out.public_key);

        let pts2: Vec<(u32, FieldElement)> = [&out.shares[1], &out.shares[3], &out.shares[4]]
            .iter()
            .map(|s| (s.index, s.value.clone()))
            .collect();
        assert_eq!(field.interpolate_at_zero(&pts2).unwrap(), master);
    }

    #[test]
    fn one_bad_dealer_is_excluded_two_abort() {
        let params = GroupParams::desk_default();
        let field = params.field();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let (n, t) = (5, 3);
        let recipients: Vec<u32> = (1..=5).collect();
        let mut packages: Vec<DealerPackage> = recipients
            .iter()
            .map(|&d| deal(&params, d, t, &recipients, &mut rng))
            .collect();

        // dealer 2 corrupts the share it sends participant 4
        let old = packages[1].shares[3].value.clone();
        packages[1].shares[3].value = field.add(&old, &field.one());
        let out = aggregate(&params, n, t, &packages).unwrap();
        assert_eq!(out.excluded_dealers, vec![2]);
        assert_eq!(out.verified_dealers, vec![1, 3, 4, 5]);

        // master secret now sums only surviving dealers; pk still matches
        let pts: Vec<(u32, FieldElement)> = out.shares[..t]
            .iter()
            .map(|s| (s.index, s.value.clone()))
            .collect();
        let master = field.interpolate_at_zero(&pts).unwrap();
        assert_eq!(params.generator_exp(&master), out.public_key);

        // a second bad dealer drops survivors to 3 of 5: 9 > 10 is false
        packages[4].shares[0].value = field.one();
        let err = aggregate(&params, n, t, &packages).unwrap_err();
        assert_eq!(
            err,
            DkgError::InsufficientDealers {
                verified: 3,
                total: 5
            }
        );
    }

    #[test]
    fn malformed_packages_are_excluded_not_fatal() {
        let params = GroupParams::desk_default();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let recipients: Vec<u32> = (1..=4).collect();
        let mut packages: Vec<DealerPackage> = recipients
            .iter()
            .map(|&d| deal(&params, d, 2, &recipients, &mut rng))
            .collect();
        // dealer 3 broadcasts one commitment too many
        packages[2].commitments.push(BigUint::one());
        let out = aggregate(&params, 4, 2, &packages).unwrap();
        assert_eq!(out.excluded_dealers, vec![3]);
    }

    #[test]
    fn shape_errors() {
        let params = GroupParams::tiny();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        assert!(matches!(
            run_ceremony(&params, 0, 1, &mut rng),
            Err(DkgError::BadConfig(_))
        ));
        assert!(matches!(
            run_ceremony(&params, 3, 4, &mut rng),
            Err(DkgError::BadConfig(_))
        ));
        // q = 11 cannot index 11 participants
        assert!(matches!(
            run_ceremony(&params, 11, 3, &mut rng),
            Err(DkgError::BadConfig(_))
        ));
    }
}
