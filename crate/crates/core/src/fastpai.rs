//! Additively homomorphic encryption over Z_N with a short decryption
//! exponent.
//!
//! The modulus is N = P*Q where P = 2*p*p' + 1 and Q = 2*q*q' + 1 are safe
//! against factoring at the chosen security level, p and q are short primes
//! whose product alpha serves as the private key, and p', q' are large
//! padding primes. The public key is (N, h) with h = -y^(2*beta) mod N for a
//! random unit y and beta = p'*q'. A ciphertext of m under nonce r is
//!
//! ```text
//! c = (1+N)^m * (h^r mod N)^N mod N^2
//! ```
//!
//! and decryption computes m = L(c^(2*alpha) mod N^2) * (2*alpha)^-1 mod N
//! with L(u) = (u-1)/N. Signed inputs live in [-2^l, 2^l] and are folded
//! into Z_N by encoding negatives as N - |x|.

use crate::modmath::{self, ModMathError, RandomSource, MR_ROUNDS};
use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Zero};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CryptoError {
    #[error("parameter error: {0}")]
    Params(String),
    #[error("key generation gave up after {0} candidate attempts")]
    KeyGenExhausted(u64),
    #[error("plaintext out of range")]
    PlainRange,
    #[error("ciphertext out of range")]
    CiphertextRange,
    #[error("malformed ciphertext")]
    MalformedCiphertext,
    #[error("partial decryptions must come from two distinct key shares")]
    SameShare,
    #[error("partial decryptions disagree about the modulus")]
    ModulusMismatch,
    #[error("share recombination failed for this ciphertext")]
    RecombineFailed,
    #[error("exponent is {bits} bits, table covers only {len}")]
    ExponentWidth { bits: u64, len: u32 },
    #[error(transparent)]
    Math(#[from] ModMathError),
}

/// Width profile for one key. Only the listed modulus sizes are supported;
/// the nonce width l_len is 4*kappa and sigma is the mask width used by the
/// interactive protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SecurityParams {
    pub kappa: u32,
    pub n_len: u32,
    pub l_len: u32,
    pub sigma: u32,
    pub table_block: u32,
    pub table_len: u32,
}

impl SecurityParams {
    /// Default profile: 112-bit security, 2048-bit modulus, 448-bit nonces.
    pub fn kappa_112() -> Self {
        SecurityParams {
            kappa: 112,
            n_len: 2048,
            l_len: 448,
            sigma: 128,
            table_block: 5,
            table_len: 448,
        }
    }

    pub fn for_modulus_bits(n_len: u32) -> Result<Self, CryptoError> {
        let kappa = match n_len {
            1024 => 80,
            2048 => 112,
            3072 => 128,
            other => {
                return Err(CryptoError::Params(format!(
                    "unsupported modulus width {other}, expected 1024, 2048 or 3072"
                )))
            }
        };
        let p = SecurityParams {
            kappa,
            n_len,
            l_len: 4 * kappa,
            sigma: 128,
            table_block: 5,
            table_len: 4 * kappa,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), CryptoError> {
        let fail = |m: &str| Err(CryptoError::Params(m.to_string()));
        if self.n_len % 2 != 0 || self.l_len % 2 != 0 {
            return fail("n_len and l_len must be even");
        }
        if self.l_len >= self.n_len {
            return fail("l_len must be smaller than n_len");
        }
        if self.l_len / 2 < 8 {
            return fail("l_len too small to sample key primes");
        }
        if (self.n_len - self.l_len) / 2 < 9 {
            return fail("n_len - l_len leaves no room for padding primes");
        }
        if self.sigma < 128 {
            return fail("sigma below 128 is not acceptable");
        }
        if self.table_block < 1 || self.table_block > 16 {
            return fail("table_block must lie in 1..=16");
        }
        if self.table_len < 1 {
            return fail("table_len must be positive");
        }
        Ok(())
    }
}

/// Factorization underlying one modulus: P = 2*p*p' + 1, Q = 2*q*q' + 1,
/// all six values prime, N = P*Q.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorWitness {
    pub big_p: BigUint,
    pub big_q: BigUint,
    pub p: BigUint,
    pub q: BigUint,
    pub p_dash: BigUint,
    pub q_dash: BigUint,
}

impl FactorWitness {
    /// Validates the structural equations and primality of every component.
    pub fn try_new(
        p: BigUint,
        q: BigUint,
        p_dash: BigUint,
        q_dash: BigUint,
    ) -> Result<Self, CryptoError> {
        let parts = [&p, &q, &p_dash, &q_dash];
        for (i, a) in parts.iter().enumerate() {
            if !modmath::is_probable_prime(a, MR_ROUNDS)? {
                return Err(CryptoError::Params(format!("component {i} is composite")));
            }
            for b in parts.iter().skip(i + 1) {
                if a == b {
                    return Err(CryptoError::Params("repeated prime component".into()));
                }
            }
        }
        let big_p = ((&p * &p_dash) << 1) + 1u32;
        let big_q = ((&q * &q_dash) << 1) + 1u32;
        if !modmath::is_probable_prime(&big_p, MR_ROUNDS)? {
            return Err(CryptoError::Params("2*p*p' + 1 is composite".into()));
        }
        if !modmath::is_probable_prime(&big_q, MR_ROUNDS)? {
            return Err(CryptoError::Params("2*q*q' + 1 is composite".into()));
        }
        Ok(FactorWitness {
            big_p,
            big_q,
            p,
            q,
            p_dash,
            q_dash,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKey {
    pub n: BigUint,
    pub h: BigUint,
    /// Cached h^N mod N^2, the fixed base of every encryption.
    pub h_pow_n: BigUint,
    pub n_squared: BigUint,
    /// floor(N/2), the signed/unsigned decode threshold.
    pub half_n: BigUint,
    /// Encryption nonce width in bits (l_len of the generating profile).
    pub r_bits: u32,
}

impl PublicKey {
    pub fn new(n: BigUint, h: BigUint, r_bits: u32) -> Self {
        let n_squared = &n * &n;
        let h_pow_n = h.modpow(&n, &n_squared);
        let half_n = &n >> 1;
        PublicKey {
            n,
            h,
            h_pow_n,
            n_squared,
            half_n,
            r_bits,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrivateKey {
    pub alpha: BigUint,
    pub n: BigUint,
}

/// An element of Z_{N^2} produced by encryption or homomorphic evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext(BigUint);

impl Ciphertext {
    /// Admits an externally supplied value after a range check.
    pub fn from_nat(pk: &PublicKey, value: BigUint) -> Result<Self, CryptoError> {
        if value.is_zero() || value >= pk.n_squared {
            return Err(CryptoError::CiphertextRange);
        }
        Ok(Ciphertext(value))
    }

    pub(crate) fn raw(value: BigUint) -> Self {
        Ciphertext(value)
    }

    pub fn as_nat(&self) -> &BigUint {
        &self.0
    }

    pub fn into_nat(self) -> BigUint {
        self.0
    }
}

const SEARCH_CAP: u64 = 500_000;

fn ceil_div(a: &BigUint, b: &BigUint) -> BigUint {
    (a + b - 1u32) / b
}

/// Searches a prime d in [lo, hi) with 2*base*d + 1 prime. The caller sizes
/// the interval so every candidate already has the right widths.
fn search_dash(
    rs: &mut RandomSource,
    base: &BigUint,
    lo: &BigUint,
    hi: &BigUint,
    avoid: Option<&BigUint>,
) -> Result<BigUint, CryptoError> {
    let span = hi - lo;
    let two_base: BigUint = base << 1;
    let mut attempts = 0u64;
    loop {
        attempts += 1;
        if attempts > SEARCH_CAP {
            return Err(CryptoError::KeyGenExhausted(attempts));
        }
        let mut d = lo + rs.sample_below(&span);
        if d.is_even() {
            d += 1u32;
            if d >= *hi {
                continue;
            }
        }
        if avoid == Some(&d) {
            continue;
        }
        if !modmath::is_probable_prime(&d, MR_ROUNDS)? {
            continue;
        }
        let cand: BigUint = &two_base * &d + 1u32;
        if modmath::is_probable_prime(&cand, MR_ROUNDS)? {
            return Ok(d);
        }
    }
}

/// Samples the modulus factorization for the given widths: p, q of l_len/2
/// bits with bitlen(p*q) = l_len, p', q' of (n_len - l_len)/2 - 1 bits,
/// P, Q of n_len/2 bits and bitlen(P*Q) = n_len. A failed candidate only
/// resamples the component that failed.
pub fn ngen(params: &SecurityParams, rs: &mut RandomSource) -> Result<FactorWitness, CryptoError> {
    params.validate()?;
    let one = BigUint::one();
    let half_l = params.l_len / 2;
    let dash_bits = (params.n_len - params.l_len) / 2 - 1;
    let half = params.n_len / 2;

    // alpha = p*q needs its top bit set, with a little slack so the padding
    // searches below keep nonempty intervals.
    let margin = params.l_len.saturating_sub(17);
    let alpha_floor: BigUint = (&one << (params.l_len - 1)) + (&one << margin);
    let p = rs.sample_prime(half_l);
    let q = loop {
        let c = rs.sample_prime(half_l);
        if c != p && &p * &c >= alpha_floor {
            break c;
        }
    };

    let dash_lo: BigUint = &one << (dash_bits - 1);
    let dash_hi: BigUint = &one << dash_bits;
    let two_p: BigUint = &p << 1;
    let two_q: BigUint = &q << 1;
    let n_floor: BigUint = &one << (params.n_len - 1);
    let half_floor: BigUint = &one << (half - 1);
    let half_ceil: BigUint = &one << half;
    // Largest padding value keeping 2*base*d + 1 below 2^half.
    let d_cap = |two_base: &BigUint| (&half_ceil - 2u32) / two_base + &one;

    // P must be large enough that some in-range Q still lifts N to n_len
    // bits: Q can reach at most 2q(2^dash - 1) + 1.
    let q_reach: BigUint = &two_q * (&dash_hi - &one) + &one;
    let p_min = half_floor.clone().max(ceil_div(&n_floor, &q_reach));
    let lo = dash_lo.clone().max(ceil_div(&(&p_min - &one), &two_p));
    let hi = dash_hi.clone().min(d_cap(&two_p));
    if lo >= hi {
        return Err(CryptoError::Params("no room for the p' search".into()));
    }
    let p_dash = search_dash(rs, &p, &lo, &hi, None)?;
    let big_p: BigUint = &two_p * &p_dash + &one;

    let q_min = half_floor.max(ceil_div(&n_floor, &big_p));
    let lo = dash_lo.max(ceil_div(&(&q_min - &one), &two_q));
    let hi = dash_hi.min(d_cap(&two_q));
    if lo >= hi {
        return Err(CryptoError::Params("no room for the q' search".into()));
    }
    let q_dash = search_dash(rs, &q, &lo, &hi, Some(&p_dash))?;

    let w = FactorWitness::try_new(p, q, p_dash, q_dash)?;
    debug_assert_eq!(w.big_p, big_p);
    debug_assert_eq!((&w.big_p * &w.big_q).bits(), u64::from(params.n_len));
    Ok(w)
}

/// Derives the key pair from a factorization witness:
/// alpha = p*q, beta = (P-1)(Q-1)/(4*alpha) = p'*q', h = -y^(2*beta) mod N
/// for a fresh unit y.
pub fn keygen_from_witness(
    params: &SecurityParams,
    w: &FactorWitness,
    rs: &mut RandomSource,
) -> Result<(PublicKey, PrivateKey), CryptoError> {
    let n = &w.big_p * &w.big_q;
    let alpha = &w.p * &w.q;
    let phi = (&w.big_p - 1u32) * (&w.big_q - 1u32);
    let four_alpha = &alpha << 2;
    let (beta, rem) = phi.div_rem(&four_alpha);
    if !rem.is_zero() {
        return Err(CryptoError::Params(
            "group order is not divisible by 4*alpha".into(),
        ));
    }
    debug_assert_eq!(beta, &w.p_dash * &w.q_dash);
    let two_alpha: BigUint = &alpha << 1;
    debug_assert!(two_alpha.gcd(&n).is_one());

    let y = rs.sample_coprime(&n);
    let two_beta = &beta << 1;
    let h = &n - y.modpow(&two_beta, &n);
    let pk = PublicKey::new(n.clone(), h, params.l_len);
    let sk = PrivateKey { alpha, n };
    Ok((pk, sk))
}

pub fn keygen(
    params: &SecurityParams,
    rs: &mut RandomSource,
) -> Result<(PublicKey, PrivateKey), CryptoError> {
    let w = ngen(params, rs)?;
    keygen_from_witness(params, &w, rs)
}

/// Encrypts m in [0, N) under a fresh r_bits nonce. Deliberately evaluates
/// both modular exponentiations of the defining formula; the table-driven
/// path in `offline` must beat this baseline.
pub fn enc(pk: &PublicKey, m: &BigUint, rs: &mut RandomSource) -> Result<Ciphertext, CryptoError> {
    if *m >= pk.n {
        return Err(CryptoError::PlainRange);
    }
    let r = rs.sample_bits(pk.r_bits);
    let a = (&pk.n + 1u32).modpow(m, &pk.n_squared);
    let b = pk.h.modpow(&r, &pk.n).modpow(&pk.n, &pk.n_squared);
    Ok(Ciphertext(a * b % &pk.n_squared))
}

/// Deterministic encryption with a caller-chosen nonce, in the compact form
/// (1 + m*N) * (h^N)^r mod N^2. Produces bit-identical ciphertexts to `enc`
/// for equal nonces.
pub fn enc_with_r(pk: &PublicKey, m: &BigUint, r: &BigUint) -> Result<Ciphertext, CryptoError> {
    if *m >= pk.n {
        return Err(CryptoError::PlainRange);
    }
    let a = (m * &pk.n + 1u32) % &pk.n_squared;
    let b = pk.h_pow_n.modpow(r, &pk.n_squared);
    Ok(Ciphertext(a * b % &pk.n_squared))
}

pub fn dec(sk: &PrivateKey, c: &Ciphertext) -> Result<BigUint, CryptoError> {
    let n_squared = &sk.n * &sk.n;
    let two_alpha = &sk.alpha << 1;
    let u = c.0.modpow(&two_alpha, &n_squared);
    if u.is_zero() {
        return Err(CryptoError::MalformedCiphertext);
    }
    let (ell, rem) = (u - 1u32).div_rem(&sk.n);
    if !rem.is_zero() {
        return Err(CryptoError::MalformedCiphertext);
    }
    let t = modmath::mod_inv(&two_alpha, &sk.n)?;
    Ok(ell % &sk.n * t % &sk.n)
}

/// Enc(m1) * Enc(m2) = Enc(m1 + m2 mod N).
pub fn hom_add(pk: &PublicKey, c1: &Ciphertext, c2: &Ciphertext) -> Ciphertext {
    Ciphertext(&c1.0 * &c2.0 % &pk.n_squared)
}

/// Enc(m)^k = Enc(k*m mod N). Requires k < N.
pub fn hom_scal(pk: &PublicKey, c: &Ciphertext, k: &BigUint) -> Ciphertext {
    debug_assert!(*k < pk.n, "scalar must be reduced mod N");
    Ciphertext(c.0.modpow(k, &pk.n_squared))
}

/// Enc(m1 - m2 mod N), realized as hom_add(c1, hom_scal(c2, N-1)).
pub fn hom_sub(pk: &PublicKey, c1: &Ciphertext, c2: &Ciphertext) -> Ciphertext {
    let neg = hom_scal(pk, c2, &(&pk.n - 1u32));
    hom_add(pk, c1, &neg)
}

/// Folds a signed integer with |x| <= 2^l into Z_N. Requires 2^l < N/4 so
/// that sums and products of encoded values stay on their half of Z_N.
pub fn encode(n: &BigUint, x: &BigInt, l: u32) -> Result<BigUint, CryptoError> {
    let bound = BigUint::one() << l;
    if (&bound << 2) >= *n {
        return Err(CryptoError::Params(
            "2^l must be below N/4 for signed encoding".into(),
        ));
    }
    if x.magnitude() > &bound {
        return Err(CryptoError::PlainRange);
    }
    match x.sign() {
        Sign::Minus => Ok(n - x.magnitude()),
        _ => Ok(x.magnitude().clone()),
    }
}

/// Inverse of `encode`: residues at or below floor(N/2) are nonnegative,
/// the rest represent m - N.
pub fn decode(n: &BigUint, m: &BigUint) -> BigInt {
    debug_assert!(m < n, "decode expects a reduced residue");
    if (m << 1) < *n {
        BigInt::from_biguint(Sign::Plus, m.clone())
    } else {
        BigInt::from_biguint(Sign::Plus, m.clone()) - BigInt::from_biguint(Sign::Plus, n.clone())
    }
}
