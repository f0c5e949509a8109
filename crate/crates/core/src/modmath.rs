//! Modular big-integer arithmetic, probabilistic primality, and the random
//! source every sampling routine draws from.
//!
//! All values are nonnegative; callers work in residue classes mod an odd
//! modulus that is at least 2. Randomness comes from [`RandomSource`], which
//! is OS-backed by default and seedable for reproducible tests.

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Zero};
use once_cell::sync::Lazy;
use rand::rngs::OsRng;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

/// Miller-Rabin round count used for key material.
pub const MR_ROUNDS: u32 = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModMathError {
    #[error("modulus must be greater than 1")]
    BadModulus,
    #[error("value is not invertible, gcd with modulus is {gcd}")]
    NotInvertible { gcd: BigUint },
    #[error("primality is defined for n >= 2")]
    PrimalityRange,
}

/// base^exp mod modulus. Requires modulus > 1.
pub fn mod_pow(base: &BigUint, exp: &BigUint, modulus: &BigUint) -> Result<BigUint, ModMathError> {
    if *modulus <= BigUint::one() {
        return Err(ModMathError::BadModulus);
    }
    Ok(base.modpow(exp, modulus))
}

/// Multiplicative inverse of a mod modulus, in [1, modulus).
/// Fails with the offending gcd when a and modulus share a factor.
pub fn mod_inv(a: &BigUint, modulus: &BigUint) -> Result<BigUint, ModMathError> {
    if *modulus <= BigUint::one() {
        return Err(ModMathError::BadModulus);
    }
    let a = BigInt::from_biguint(Sign::Plus, a.clone());
    let m = BigInt::from_biguint(Sign::Plus, modulus.clone());
    let ext = a.extended_gcd(&m);
    if !ext.gcd.is_one() {
        return Err(ModMathError::NotInvertible {
            gcd: ext.gcd.to_biguint().expect("gcd of nonnegative inputs"),
        });
    }
    let inv = ext.x.mod_floor(&m);
    Ok(inv.to_biguint().expect("mod_floor result is nonnegative"))
}

static SMALL_PRIMES: Lazy<Vec<u64>> = Lazy::new(|| {
    let bound = 2048usize;
    let mut composite = vec![false; bound];
    let mut primes = Vec::new();
    for i in 2..bound {
        if !composite[i] {
            primes.push(i as u64);
            let mut j = i * i;
            while j < bound {
                composite[j] = true;
                j += i;
            }
        }
    }
    primes
});

// Small primes grouped so each group product fits a u64: one scalar
// reduction per group replaces one big-integer division per prime.
static PRIME_CHUNKS: Lazy<Vec<(u64, Vec<u64>)>> = Lazy::new(|| {
    let mut chunks = Vec::new();
    let mut product = 1u64;
    let mut members = Vec::new();
    for &p in SMALL_PRIMES.iter() {
        if let Some(next) = product.checked_mul(p) {
            product = next;
            members.push(p);
        } else {
            chunks.push((product, std::mem::take(&mut members)));
            product = p;
            members.push(p);
        }
    }
    chunks.push((product, members));
    chunks
});

fn rem_u64(n: &BigUint, m: u64) -> u64 {
    let mut r = 0u64;
    for limb in n.to_u64_digits().into_iter().rev() {
        r = ((u128::from(r) << 64 | u128::from(limb)) % u128::from(m)) as u64;
    }
    r
}

/// Miller-Rabin with `rounds` uniformly drawn witnesses, preceded by trial
/// division against all primes below 2048. Composite answers are exact for
/// the witnesses tested; "true" is wrong with probability at most 4^-rounds.
pub fn is_probable_prime(n: &BigUint, rounds: u32) -> Result<bool, ModMathError> {
    assert!(rounds >= 1, "at least one witness round");
    let two = BigUint::from(2u32);
    if *n < two {
        return Err(ModMathError::PrimalityRange);
    }
    if n.bits() <= 11 {
        // Below 2048 the sieve is authoritative.
        let v = n.to_u64_digits()[0];
        return Ok(SMALL_PRIMES.binary_search(&v).is_ok());
    }
    for (product, primes) in PRIME_CHUNKS.iter() {
        let r = rem_u64(n, *product);
        if primes.iter().any(|&p| r % p == 0) {
            return Ok(false);
        }
    }

    // n - 1 = 2^s * d with d odd
    let n_minus_1 = n - BigUint::one();
    let s = n_minus_1.trailing_zeros().expect("n - 1 > 0");
    let d = &n_minus_1 >> s;

    let mut rng = RandomSource::os();
    let span = n - BigUint::from(3u32); // witnesses in [2, n-2]
    'witness: for _ in 0..rounds {
        let a = rng.sample_below(&span) + &two;
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return Ok(false);
    }
    Ok(true)
}

#[allow(clippy::large_enum_variant)]
enum Inner {
    Os(OsRng),
    Seeded(ChaCha20Rng),
}

/// Source of all sampled randomness. `os()` is the default for key material;
/// `seeded()` is deterministic and intended for tests only.
pub struct RandomSource(Inner);

impl RandomSource {
    pub fn os() -> Self {
        RandomSource(Inner::Os(OsRng))
    }

    /// Deterministic stream for reproducible tests. Never use for real keys.
    pub fn seeded(seed: u64) -> Self {
        RandomSource(Inner::Seeded(ChaCha20Rng::seed_from_u64(seed)))
    }

    pub fn fill_bytes(&mut self, buf: &mut [u8]) {
        match &mut self.0 {
            Inner::Os(r) => r.fill_bytes(buf),
            Inner::Seeded(r) => r.fill_bytes(buf),
        }
    }

    /// Uniform value in [0, 2^k). Requires k >= 1.
    pub fn sample_bits(&mut self, k: u32) -> BigUint {
        assert!(k >= 1, "bit count must be positive");
        let mut buf = vec![0u8; k.div_ceil(8) as usize];
        self.fill_bytes(&mut buf);
        if k % 8 != 0 {
            buf[0] &= (1u8 << (k % 8)) - 1;
        }
        BigUint::from_bytes_be(&buf)
    }

    /// Uniform odd value of exactly k bits (top and bottom bits set).
    /// Requires k >= 2.
    pub fn sample_odd(&mut self, k: u32) -> BigUint {
        assert!(k >= 2, "need room for top and bottom bits");
        let mut v = self.sample_bits(k);
        v.set_bit(u64::from(k) - 1, true);
        v.set_bit(0, true);
        v
    }

    /// Probable prime of exactly k bits (64 Miller-Rabin rounds).
    /// Requires k >= 8.
    pub fn sample_prime(&mut self, k: u32) -> BigUint {
        assert!(k >= 8, "prime sampling below 8 bits is not supported");
        loop {
            let c = self.sample_odd(k);
            if is_probable_prime(&c, MR_ROUNDS).expect("candidate >= 2") {
                return c;
            }
        }
    }

    /// Uniform value in [0, n) by rejection. Requires n > 0.
    pub fn sample_below(&mut self, n: &BigUint) -> BigUint {
        assert!(!n.is_zero(), "empty range");
        let k = n.bits() as u32;
        loop {
            let v = self.sample_bits(k);
            if v < *n {
                return v;
            }
        }
    }

    /// Uniform value in [1, n) coprime to n. Requires n > 1.
    pub fn sample_coprime(&mut self, n: &BigUint) -> BigUint {
        assert!(*n > BigUint::one(), "no units mod 0 or 1");
        loop {
            let v = self.sample_below(n);
            if !v.is_zero() && v.gcd(n).is_one() {
                return v;
            }
        }
    }

    /// Fair coin.
    pub fn coin(&mut self) -> bool {
        let mut b = [0u8; 1];
        self.fill_bytes(&mut b);
        b[0] & 1 == 1
    }
}
