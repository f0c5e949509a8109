//! Two-share decryption.
//!
//! The dealer splits the private exponent so that share_1 + share_2 is
//! simultaneously 0 mod 2*alpha and 1 mod N: share_1 is a random sigma-bit
//! integer and share_2 = (2*alpha)^-1 mod N * 2*alpha - share_1, optionally
//! lifted by eta * 2*alpha * N. Each holder raises a ciphertext to its own
//! share; multiplying the two partial results and applying L recovers the
//! plaintext without ever reassembling alpha.

use crate::fastpai::{Ciphertext, CryptoError, PrivateKey};
use crate::modmath::{self, RandomSource};
use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShareIndex {
    First = 1,
    Second = 2,
}

impl ShareIndex {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn from_u8(v: u8) -> Result<Self, CryptoError> {
        match v {
            1 => Ok(ShareIndex::First),
            2 => Ok(ShareIndex::Second),
            other => Err(CryptoError::Params(format!(
                "share index must be 1 or 2, got {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialKey {
    pub index: ShareIndex,
    pub share: BigUint,
    pub n: BigUint,
}

/// One holder's contribution c^share mod N^2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialDecryption {
    pub index: ShareIndex,
    pub value: BigUint,
    pub n: BigUint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitParams {
    /// Bit width of share_1.
    pub sigma: u32,
    /// Extra multiples of 2*alpha*N folded into share_2.
    pub eta: u32,
}

impl Default for SplitParams {
    fn default() -> Self {
        SplitParams { sigma: 128, eta: 0 }
    }
}

/// Splits the private key into the sigma-bit share_1 and its complement
/// share_2. Requires sigma >= 2 and sigma well below bitlen(2*alpha*N).
pub fn split_key(
    sk: &PrivateKey,
    sp: &SplitParams,
    rs: &mut RandomSource,
) -> Result<(PartialKey, PartialKey), CryptoError> {
    assert!(sp.sigma >= 2, "share width must be positive");
    let two_alpha: BigUint = &sk.alpha << 1;
    let t = modmath::mod_inv(&two_alpha, &sk.n)?;
    let anchor = &t * &two_alpha;
    let lift = &two_alpha * &sk.n * BigUint::from(sp.eta);
    let share_1 = loop {
        let mut s = rs.sample_bits(sp.sigma);
        s.set_bit(u64::from(sp.sigma) - 1, true);
        if s < anchor {
            break s;
        }
    };
    let share_2 = &anchor + &lift - &share_1;
    debug_assert!(((&share_1 + &share_2) % &two_alpha).is_zero());
    debug_assert!(((&share_1 + &share_2) % &sk.n).is_one());
    Ok((
        PartialKey {
            index: ShareIndex::First,
            share: share_1,
            n: sk.n.clone(),
        },
        PartialKey {
            index: ShareIndex::Second,
            share: share_2,
            n: sk.n.clone(),
        },
    ))
}

/// c^share mod N^2.
pub fn pdec(key: &PartialKey, c: &Ciphertext) -> PartialDecryption {
    let n_squared = &key.n * &key.n;
    PartialDecryption {
        index: key.index,
        value: c.as_nat().modpow(&key.share, &n_squared),
        n: key.n.clone(),
    }
}

/// Combines two partial decryptions of one ciphertext:
/// m = L(M_1 * M_2 mod N^2) mod N. Order of arguments does not matter.
pub fn tdec(m1: &PartialDecryption, m2: &PartialDecryption) -> Result<BigUint, CryptoError> {
    if m1.index == m2.index {
        return Err(CryptoError::SameShare);
    }
    if m1.n != m2.n {
        return Err(CryptoError::ModulusMismatch);
    }
    let n_squared = &m1.n * &m1.n;
    let w = &m1.value * &m2.value % n_squared;
    if w.is_zero() {
        return Err(CryptoError::RecombineFailed);
    }
    let (ell, rem) = (w - 1u32).div_rem(&m1.n);
    if !rem.is_zero() {
        return Err(CryptoError::RecombineFailed);
    }
    Ok(ell % &m1.n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fastpai::{dec, enc};
    use crate::testkit;

    fn big(n: u64) -> BigUint {
        BigUint::from(n)
    }

    fn toy_split(eta: u32, seed: u64) -> (PartialKey, PartialKey) {
        let (_, sk) = testkit::toy_keys();
        let sp = SplitParams { sigma: 8, eta };
        split_key(&sk, &sp, &mut RandomSource::seeded(seed)).unwrap()
    }

    #[test]
    fn toy_shares_hit_both_congruences() {
        for eta in [0u32, 1, 2] {
            let (k1, k2) = toy_split(eta, 31);
            let sum = &k1.share + &k2.share;
            assert!((&sum % big(30)).is_zero());
            assert!((&sum % big(5633)).is_one());
            // share_2 = 2441*30 - share_1 + eta*30*5633, with t = 2441 the
            // inverse of 30 mod 5633.
            let expect = big(2441) * big(30) + big(30) * big(5633) * big(u64::from(eta))
                - &k1.share;
            assert_eq!(k2.share, expect);
        }
    }

    #[test]
    fn share_one_has_exact_width() {
        let (_, _, sk) = testkit::fixture_1024();
        let sp = SplitParams::default();
        let mut rs = RandomSource::seeded(32);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..20 {
            let (k1, k2) = split_key(sk, &sp, &mut rs).unwrap();
            assert_eq!(k1.share.bits(), 128);
            assert!(seen.insert(k1.share.clone()), "share_1 repeated");
            let sum = &k1.share + &k2.share;
            let two_alpha: BigUint = &sk.alpha << 1;
            assert!((&sum % &two_alpha).is_zero());
            assert!((&sum % &sk.n).is_one());
        }
    }

    #[test]
    fn two_share_decryption_matches_private_decryption() {
        let (_, pk, sk) = testkit::fixture_1024();
        let mut rs = RandomSource::seeded(33);
        for eta in [0u32, 1] {
            let sp = SplitParams { sigma: 128, eta };
            let (k1, k2) = split_key(sk, &sp, &mut rs).unwrap();
            for _ in 0..15 {
                let m = rs.sample_below(&pk.n);
                let c = enc(pk, &m, &mut rs).unwrap();
                let m1 = pdec(&k1, &c);
                let m2 = pdec(&k2, &c);
                let got = tdec(&m1, &m2).unwrap();
                assert_eq!(got, m);
                assert_eq!(got, dec(sk, &c).unwrap());
                // Recombination is symmetric in its arguments.
                assert_eq!(tdec(&m2, &m1).unwrap(), m);
            }
            // Edges of the plaintext space.
            for m in [BigUint::zero(), &pk.n - 1u32] {
                let c = enc(pk, &m, &mut rs).unwrap();
                assert_eq!(tdec(&pdec(&k1, &c), &pdec(&k2, &c)).unwrap(), m);
            }
        }
    }

    #[test]
    fn toy_two_share_roundtrip() {
        let (pk, _) = testkit::toy_keys();
        let (k1, k2) = toy_split(0, 34);
        let mut rs = RandomSource::seeded(35);
        for m in [0u64, 1, 7, 2816, 2817, 5632] {
            let c = enc(&pk, &big(m), &mut rs).unwrap();
            assert_eq!(tdec(&pdec(&k1, &c), &pdec(&k2, &c)).unwrap(), big(m));
        }
    }

    #[test]
    fn pdec_is_plain_share_exponentiation() {
        let (pk, _) = testkit::toy_keys();
        let mut rs = RandomSource::seeded(36);
        let c = enc(&pk, &big(42), &mut rs).unwrap();
        let key = PartialKey {
            index: ShareIndex::First,
            share: big(3),
            n: pk.n.clone(),
        };
        let mut oracle = BigUint::one();
        for _ in 0..3 {
            oracle = oracle * c.as_nat() % &pk.n_squared;
        }
        assert_eq!(pdec(&key, &c).value, oracle);
        // Zero share fixes the value at 1.
        let zero_key = PartialKey {
            index: ShareIndex::Second,
            share: BigUint::zero(),
            n: pk.n.clone(),
        };
        assert!(pdec(&zero_key, &c).value.is_one());
    }

    #[test]
    fn tdec_rejects_bad_pairs() {
        let (pk, _) = testkit::toy_keys();
        let (k1, k2) = toy_split(0, 37);
        let mut rs = RandomSource::seeded(38);
        let c = enc(&pk, &big(9), &mut rs).unwrap();
        let m1 = pdec(&k1, &c);
        let m2 = pdec(&k2, &c);
        assert!(matches!(tdec(&m1, &m1), Err(CryptoError::SameShare)));

        let mut foreign = m2.clone();
        foreign.n = big(43 * 127);
        assert!(matches!(
            tdec(&m1, &foreign),
            Err(CryptoError::ModulusMismatch)
        ));
    }

    #[test]
    fn tdec_detects_corrupted_share() {
        let (pk, _) = testkit::toy_keys();
        let (k1, mut k2) = toy_split(0, 39);
        k2.share += 1u32;
        let mut rs = RandomSource::seeded(40);
        let c = enc(&pk, &big(123), &mut rs).unwrap();
        let got = tdec(&pdec(&k1, &c), &pdec(&k2, &c));
        assert!(matches!(got, Err(CryptoError::RecombineFailed)));
    }

    #[test]
    fn share_index_codes() {
        assert_eq!(ShareIndex::First.as_u8(), 1);
        assert_eq!(ShareIndex::Second.as_u8(), 2);
        assert_eq!(ShareIndex::from_u8(2).unwrap(), ShareIndex::Second);
        assert!(ShareIndex::from_u8(0).is_err());
        assert!(ShareIndex::from_u8(3).is_err());
    }
}
