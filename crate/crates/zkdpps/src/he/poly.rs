//! Arithmetic in R_Q = Z_Q[X]/(X^n + 1) for power-of-two n.
//!
//! Coefficients are u64 reduced mod Q with Q <= 2^61. Dense products keep
//! per-slot u128 accumulators and fold them back every few rows, so the hot
//! loop is multiply-add only. Secrets and encryption randomness are sparse
//! ternary, which turns their products into shift-and-add passes.

use rand::Rng;

/// Dense polynomial, coefficient i of X^i, always length n, always reduced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingPoly {
    coeffs: Vec<u64>,
}

impl RingPoly {
    pub fn zero(n: usize) -> Self {
        RingPoly {
            coeffs: vec![0; n],
        }
    }

    pub fn constant(value: u64, n: usize, q: u64) -> Self {
        let mut coeffs = vec![0; n];
        coeffs[0] = value % q;
        RingPoly { coeffs }
    }

    /// Accepts already-reduced coefficients; returns None on any coeff >= q
    /// or a length mismatch.
    pub fn from_coeffs(coeffs: Vec<u64>, n: usize, q: u64) -> Option<Self> {
        if coeffs.len() != n || coeffs.iter().any(|&c| c >= q) {
            return None;
        }
        Some(RingPoly { coeffs })
    }

    pub fn coeffs(&self) -> &[u64] {
        &self.coeffs
    }

    pub fn coeff_mut(&mut self, i: usize) -> &mut u64 {
        &mut self.coeffs[i]
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn random_uniform<R: Rng + ?Sized>(n: usize, q: u64, rng: &mut R) -> Self {
        RingPoly {
            coeffs: (0..n).map(|_| rng.gen_range(0..q)).collect(),
        }
    }

    /// Uniform coefficients in [-bound, bound], stored mod q. `bound` 0 gives
    /// the zero polynomial without consuming randomness.
    pub fn random_error<R: Rng + ?Sized>(n: usize, bound: u64, q: u64, rng: &mut R) -> Self {
        if bound == 0 {
            return RingPoly::zero(n);
        }
        let coeffs = (0..n)
            .map(|_| {
                let v = rng.gen_range(-(bound as i64)..=bound as i64);
                v.rem_euclid(q as i64) as u64
            })
            .collect();
        RingPoly { coeffs }
    }

    pub fn add(&self, other: &RingPoly, q: u64) -> RingPoly {
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(&a, &b)| {
                let s = a + b;
                if s >= q {
                    s - q
                } else {
                    s
                }
            })
            .collect();
        RingPoly { coeffs }
    }

    pub fn sub(&self, other: &RingPoly, q: u64) -> RingPoly {
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(&a, &b)| if a >= b { a - b } else { a + q - b })
            .collect();
        RingPoly { coeffs }
    }

    pub fn neg(&self, q: u64) -> RingPoly {
        let coeffs = self
            .coeffs
            .iter()
            .map(|&a| if a == 0 { 0 } else { q - a })
            .collect();
        RingPoly { coeffs }
    }

    pub fn scale(&self, k: u64, q: u64) -> RingPoly {
        let k = u128::from(k % q);
        let coeffs = self
            .coeffs
            .iter()
            .map(|&a| ((u128::from(a) * k) % u128::from(q)) as u64)
            .collect();
        RingPoly { coeffs }
    }

    /// Negacyclic schoolbook product. Per-slot u128 accumulators hold at
    /// most FOLD_EVERY products before folding; with q <= 2^61 each product
    /// is < 2^122 and 63 * 2^122 plus a folded residue stays below 2^128.
    pub fn mul_dense(&self, other: &RingPoly, q: u64) -> RingPoly {
        const FOLD_EVERY: usize = 63;
        debug_assert!(q <= 1 << 61);
        let n = self.coeffs.len();
        let q128 = u128::from(q);
        let mut pos = vec![0u128; n];
        let mut neg = vec![0u128; n];
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a == 0 {
                continue;
            }
            let a = u128::from(a);
            let split = n - i;
            for (j, &b) in other.coeffs[..split].iter().enumerate() {
                pos[i + j] += a * u128::from(b);
            }
            for (j, &b) in other.coeffs[split..].iter().enumerate() {
                neg[j] += a * u128::from(b);
            }
            if i % FOLD_EVERY == FOLD_EVERY - 1 {
                for slot in pos.iter_mut().chain(neg.iter_mut()) {
                    *slot %= q128;
                }
            }
        }
        let coeffs = pos
            .iter()
            .zip(&neg)
            .map(|(&p, &m)| {
                let p = p % q128;
                let m = m % q128;
                (if p >= m { p - m } else { p + q128 - m }) as u64
            })
            .collect();
        RingPoly { coeffs }
    }

    /// Product with a sparse ternary polynomial: one shifted add or subtract
    /// pass per nonzero term.
    pub fn mul_sparse(&self, sparse: &SparsePoly, q: u64) -> RingPoly {
        let n = self.coeffs.len();
        let mut acc = vec![0i128; n];
        for &(pos, negative) in &sparse.terms {
            for (j, &c) in self.coeffs.iter().enumerate() {
                let k = pos + j;
                // X^n = -1, so wrapping past n flips the sign
                let (slot, wrap) = if k < n { (k, false) } else { (k - n, true) };
                let signed = if negative != wrap {
                    -(c as i128)
                } else {
                    c as i128
                };
                acc[slot] += signed;
            }
        }
        let q128 = q as i128;
        RingPoly {
            coeffs: acc.iter().map(|&v| v.rem_euclid(q128) as u64).collect(),
        }
    }
}

/// Ternary polynomial with `terms.len()` nonzero coefficients of value
/// +1 or -1 (the bool marks -1). Positions are strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsePoly {
    terms: Vec<(usize, bool)>,
}

impl SparsePoly {
    pub fn new(mut terms: Vec<(usize, bool)>) -> Self {
        terms.sort_unstable();
        SparsePoly { terms }
    }

    /// Samples `weight` distinct positions with random signs.
    pub fn random_ternary<R: Rng + ?Sized>(n: usize, weight: usize, rng: &mut R) -> Self {
        assert!(weight <= n);
        let mut positions: Vec<usize> = (0..n).collect();
        for i in 0..weight {
            let j = rng.gen_range(i..n);
            positions.swap(i, j);
        }
        let mut terms: Vec<(usize, bool)> = positions[..weight]
            .iter()
            .map(|&p| (p, rng.gen::<bool>()))
            .collect();
        terms.sort_unstable();
        SparsePoly { terms }
    }

    pub fn terms(&self) -> &[(usize, bool)] {
        &self.terms
    }

    pub fn to_ring(&self, n: usize, q: u64) -> RingPoly {
        let mut poly = RingPoly::zero(n);
        for &(pos, negative) in &self.terms {
            *poly.coeff_mut(pos) = if negative { q - 1 } else { 1 };
        }
        poly
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    const Q: u64 = 8191;

    fn poly(coeffs: &[u64]) -> RingPoly {
        RingPoly::from_coeffs(coeffs.to_vec(), coeffs.len(), Q).unwrap()
    }

    #[test]
    fn negacyclic_wraparound_flips_sign() {
        // (x^3)*(x^3) = x^6 and (x^5)*(x^5) = x^10 = -x^2 in degree 8
        let x3 = poly(&[0, 0, 0, 1, 0, 0, 0, 0]);
        assert_eq!(x3.mul_dense(&x3, Q), poly(&[0, 0, 0, 0, 0, 0, 1, 0]));
        let x5 = poly(&[0, 0, 0, 0, 0, 1, 0, 0]);
        assert_eq!(x5.mul_dense(&x5, Q), poly(&[0, 0, Q - 1, 0, 0, 0, 0, 0]));
    }

    #[test]
    fn dense_product_matches_hand_example() {
        // (1 + 2x)(3 + x) = 3 + 7x + 2x^2
        let a = poly(&[1, 2, 0, 0, 0, 0, 0, 0]);
        let b = poly(&[3, 1, 0, 0, 0, 0, 0, 0]);
        assert_eq!(a.mul_dense(&b, Q), poly(&[3, 7, 2, 0, 0, 0, 0, 0]));
    }

    #[test]
    fn sparse_product_agrees_with_dense() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a = RingPoly::random_uniform(64, Q, &mut rng);
            let s = SparsePoly::random_ternary(64, 6, &mut rng);
            let via_sparse = a.mul_sparse(&s, Q);
            let via_dense = a.mul_dense(&s.to_ring(64, Q), Q);
            assert_eq!(via_sparse, via_dense);
        }
    }

    #[test]
    fn accumulator_fold_handles_max_coefficients() {
        // worst case for overflow: every coefficient at its maximum
        let n = 64;
        let big = 1u64 << 61;
        let a = RingPoly::from_coeffs(vec![big - 2; n], n, big - 1).unwrap();
        let out = a.mul_dense(&a, big - 1);
        // (-1)^2 * (sum over diagonal) per slot: slot k gets (k+1) positive
        // and (n-1-k) negative contributions, each equal to 1 mod Q
        for (k, &c) in out.coeffs().iter().enumerate() {
            let expect = (k as i128 + 1) - (n as i128 - 1 - k as i128);
            assert_eq!(c, expect.rem_euclid((big - 1) as i128) as u64);
        }
    }

    #[test]
    fn add_sub_scale_roundtrip() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let a = RingPoly::random_uniform(32, Q, &mut rng);
        let b = RingPoly::random_uniform(32, Q, &mut rng);
        assert_eq!(a.add(&b, Q).sub(&b, Q), a);
        assert_eq!(a.sub(&a, Q), RingPoly::zero(32));
        assert_eq!(a.add(&a.neg(Q), Q), RingPoly::zero(32));
        assert_eq!(a.scale(1, Q), a);
        assert_eq!(a.scale(0, Q), RingPoly::zero(32));
        assert_eq!(a.scale(2, Q), a.add(&a, Q));
    }

    #[test]
    fn ternary_sampling_shape() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let s = SparsePoly::random_ternary(1024, 64, &mut rng);
        assert_eq!(s.terms().len(), 64);
        let mut seen = std::collections::BTreeSet::new();
        for &(p, _) in s.terms() {
            assert!(p < 1024);
            assert!(seen.insert(p));
        }
    }

    #[test]
    fn error_poly_zero_bound_is_zero() {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        assert_eq!(RingPoly::random_error(16, 0, Q, &mut rng), RingPoly::zero(16));
        let e = RingPoly::random_error(256, 3, Q, &mut rng);
        for &c in e.coeffs() {
            assert!(c <= 3 || c >= Q - 3);
        }
    }

    #[test]
    fn coefficient_validation() {
        assert!(RingPoly::from_coeffs(vec![0, Q], 2, Q).is_none());
        assert!(RingPoly::from_coeffs(vec![0, 1, 2], 2, Q).is_none());
        assert!(RingPoly::from_coeffs(vec![Q - 1, 0], 2, Q).is_some());
    }
}
