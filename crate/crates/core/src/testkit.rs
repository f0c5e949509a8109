//! Shared test fixtures: a 16-bit toy key whose arithmetic fits by hand, and
//! a lazily generated 1024-bit key pair reused across module tests.

use crate::fastpai::{
    keygen_from_witness, ngen, FactorWitness, PrivateKey, PublicKey, SecurityParams,
};
use crate::modmath::RandomSource;
use crate::offline::{build_table, build_tuple_s0, build_tuple_s1, PrecompTable};
use crate::protocols::PartyContext;
use crate::threshold::{split_key, SplitParams};
use num_bigint::{BigInt, BigUint, Sign};
use once_cell::sync::Lazy;

/// Toy widths matching the p=3, q=5, p'=7, q'=13 witness. Not a valid
/// profile (sigma far below the floor); bypasses validate() on purpose.
pub(crate) fn toy_params() -> SecurityParams {
    SecurityParams {
        kappa: 8,
        n_len: 16,
        l_len: 8,
        sigma: 8,
        table_block: 3,
        table_len: 8,
    }
}

pub(crate) fn toy_witness() -> FactorWitness {
    FactorWitness::try_new(
        BigUint::from(3u32),
        BigUint::from(5u32),
        BigUint::from(7u32),
        BigUint::from(13u32),
    )
    .expect("toy witness is structurally valid")
}

/// N = 43*131 = 5633, alpha = 15, h = -2^(2*91) mod N = 859, nonces 8 bits.
pub(crate) fn toy_keys() -> (PublicKey, PrivateKey) {
    let n = BigUint::from(5633u32);
    let pk = PublicKey::new(n.clone(), BigUint::from(859u32), 8);
    let sk = PrivateKey {
        alpha: BigUint::from(15u32),
        n,
    };
    (pk, sk)
}

static FIX_1024: Lazy<(SecurityParams, FactorWitness, PublicKey, PrivateKey)> = Lazy::new(|| {
    let params = SecurityParams::for_modulus_bits(1024).expect("1024 is a supported width");
    let mut rs = RandomSource::seeded(0x0F12_1024);
    let w = ngen(&params, &mut rs).expect("seeded generation succeeds");
    let (pk, sk) = keygen_from_witness(&params, &w, &mut rs).expect("witness is valid");
    (params, w, pk, sk)
});

pub(crate) fn fixture_1024() -> (&'static SecurityParams, &'static PublicKey, &'static PrivateKey)
{
    let (params, _, pk, sk) = &*FIX_1024;
    (params, pk, sk)
}

pub(crate) fn fixture_1024_witness() -> (&'static SecurityParams, &'static FactorWitness) {
    let (params, w, _, _) = &*FIX_1024;
    (params, w)
}

static TABLE_1024: Lazy<PrecompTable> = Lazy::new(|| {
    let (params, pk, _) = fixture_1024();
    build_table(pk, params.table_block, params.table_len)
});

/// Ready-to-run requester/responder contexts over the 1024-bit fixture:
/// key split, tuples, and power table all derived from the seed.
pub(crate) fn fixture_pair(range_l: u32, seed: u64) -> (PartyContext, PartyContext) {
    let (params, pk, sk) = fixture_1024();
    let mut rs = RandomSource::seeded(seed);
    let sp = SplitParams {
        sigma: params.sigma,
        eta: 0,
    };
    let (k1, k2) = split_key(sk, &sp, &mut rs).expect("fixture key splits");
    let t0 = build_tuple_s0(pk, params.sigma, &mut rs).expect("tuple builds");
    let t1 = build_tuple_s1(pk, &mut rs).expect("tuple builds");
    let ctx0 = PartyContext::s0(
        pk.clone(),
        k1,
        t0,
        params.sigma,
        range_l,
        RandomSource::seeded(seed.wrapping_mul(2) + 1),
    )
    .expect("requester context is valid");
    let ctx1 = PartyContext::s1(
        pk.clone(),
        k2,
        t1,
        TABLE_1024.clone(),
        params.sigma,
        range_l,
        RandomSource::seeded(seed.wrapping_mul(2) + 2),
    )
    .expect("responder context is valid");
    (ctx0, ctx1)
}

/// Uniform signed integer with |x| <= 2^l.
pub(crate) fn signed_sample(rs: &mut RandomSource, l: u32) -> BigInt {
    let magnitude = rs.sample_below(&((BigUint::from(1u32) << l) + 1u32));
    let sign = if rs.coin() { Sign::Minus } else { Sign::Plus };
    if magnitude == BigUint::from(0u32) {
        return BigInt::from(0);
    }
    BigInt::from_biguint(sign, magnitude)
}
