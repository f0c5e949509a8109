//! Built-in health checks: each check exercises one documented invariant
//! end to end and reports pass/fail with a reason. The CLI prints one line
//! per check and exits nonzero if any fails.

use crate::fastpai::{
    dec, decode, enc, enc_with_r, encode, hom_add, hom_scal, hom_sub, keygen, PrivateKey,
    PublicKey, SecurityParams,
};
use crate::keyfile;
use crate::modmath::RandomSource;
use crate::offline::{build_table, build_tuple_s0, enc_fast_with_r, refresh};
use crate::protocols::{
    make_requester, make_responder, oracle_cmp, oracle_divmod, oracle_mul, scmp, sdiv, serve,
    smul, ssba,
};
use crate::threshold::{pdec, split_key, tdec, SplitParams};
use crate::transport::{pair_inmemory, Channel};
use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, Zero};
use std::path::Path;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn pass(name: &'static str) -> Self {
        CheckResult {
            name,
            passed: true,
            detail: "ok".into(),
        }
    }

    fn fail(name: &'static str, detail: String) -> Self {
        CheckResult {
            name,
            passed: false,
            detail,
        }
    }
}

fn check(name: &'static str, body: impl FnOnce() -> Result<(), String>) -> CheckResult {
    match body() {
        Ok(()) => CheckResult::pass(name),
        Err(detail) => CheckResult::fail(name, detail),
    }
}

fn signed(rs: &mut RandomSource, l: u32) -> BigInt {
    let m = BigInt::from(rs.sample_below(&((BigUint::one() << l) + 1u32)));
    if rs.coin() {
        -m
    } else {
        m
    }
}

/// Generates a fresh key pair for the profile and runs every invariant
/// check against it.
pub fn run_all(params: &SecurityParams, rs: &mut RandomSource) -> Vec<CheckResult> {
    let mut out = Vec::new();

    let keys = match keygen(params, rs) {
        Ok(kp) => {
            out.push(CheckResult::pass("key-generation"));
            Some(kp)
        }
        Err(e) => {
            out.push(CheckResult::fail("key-generation", e.to_string()));
            None
        }
    };
    let Some((pk, sk)) = keys else {
        return out;
    };

    out.push(check("modulus-width", || {
        let bits = pk.n.bits();
        if bits == u64::from(params.n_len) || bits == u64::from(params.n_len) - 1 {
            Ok(())
        } else {
            Err(format!("modulus is {bits} bits, want {}", params.n_len))
        }
    }));

    out.push(check("encrypt-roundtrip", || {
        let mut rs = RandomSource::os();
        for _ in 0..20 {
            let x = signed(&mut rs, 32);
            let m = encode(&pk.n, &x, 32).map_err(|e| e.to_string())?;
            let c = enc(&pk, &m, &mut rs).map_err(|e| e.to_string())?;
            let back = decode(&pk.n, &dec(&sk, &c).map_err(|e| e.to_string())?);
            if back != x {
                return Err(format!("{x} came back as {back}"));
            }
        }
        Ok(())
    }));

    out.push(check("homomorphic-ops", || {
        let mut rs = RandomSource::os();
        for _ in 0..10 {
            let x = signed(&mut rs, 30);
            let y = signed(&mut rs, 30);
            let cx = enc(&pk, &encode(&pk.n, &x, 30).unwrap(), &mut rs).unwrap();
            let cy = enc(&pk, &encode(&pk.n, &y, 30).unwrap(), &mut rs).unwrap();
            let sum = decode(&pk.n, &dec(&sk, &hom_add(&pk, &cx, &cy)).unwrap());
            let diff = decode(&pk.n, &dec(&sk, &hom_sub(&pk, &cx, &cy)).unwrap());
            let tripled = decode(
                &pk.n,
                &dec(&sk, &hom_scal(&pk, &cx, &BigUint::from(3u32))).unwrap(),
            );
            if sum != &x + &y || diff != &x - &y || tripled != &x * 3 {
                return Err(format!("homomorphism broke at x={x}, y={y}"));
            }
        }
        Ok(())
    }));

    out.push(check("threshold-recombine", || {
        let mut rs = RandomSource::os();
        let sp = SplitParams {
            sigma: params.sigma,
            eta: 0,
        };
        let (k1, k2) = split_key(&sk, &sp, &mut rs).map_err(|e| e.to_string())?;
        share_congruences(&sk.alpha, &pk.n, &k1.share, &k2.share)?;
        for _ in 0..10 {
            let m = rs.sample_below(&pk.n);
            let c = enc(&pk, &m, &mut rs).unwrap();
            let joint = tdec(&pdec(&k1, &c), &pdec(&k2, &c)).map_err(|e| e.to_string())?;
            if joint != dec(&sk, &c).unwrap() || joint != m {
                return Err("joint decryption disagrees with direct decryption".into());
            }
        }
        Ok(())
    }));

    out.push(check("fast-encrypt-identity", || {
        let mut rs = RandomSource::os();
        let table = build_table(&pk, params.table_block, params.table_len);
        for _ in 0..10 {
            let m = rs.sample_below(&pk.n);
            let r = rs.sample_bits(pk.r_bits);
            let fast = enc_fast_with_r(&pk, &table, &m, &r).map_err(|e| e.to_string())?;
            let slow = enc_with_r(&pk, &m, &r).unwrap();
            if fast != slow {
                return Err("table encryption diverged from the direct form".into());
            }
        }
        Ok(())
    }));

    out.push(check("ciphertext-refresh", || {
        let mut rs = RandomSource::os();
        let tuple = build_tuple_s0(&pk, params.sigma, &mut rs).map_err(|e| e.to_string())?;
        for _ in 0..10 {
            let m = rs.sample_below(&pk.n);
            let c = enc(&pk, &m, &mut rs).unwrap();
            let r = refresh(&pk, &c, &tuple.enc_zero);
            if r == c {
                return Err("refresh left the ciphertext bytes unchanged".into());
            }
            if dec(&sk, &r).unwrap() != m {
                return Err("refresh changed the plaintext".into());
            }
        }
        Ok(())
    }));

    out.extend(protocol_checks(params, &pk, &sk));
    out
}

fn share_congruences(
    alpha: &BigUint,
    n: &BigUint,
    share_1: &BigUint,
    share_2: &BigUint,
) -> Result<(), String> {
    let two_alpha: BigUint = alpha << 1;
    let sum = share_1 + share_2;
    if !(&sum % two_alpha).is_zero() {
        return Err("share sum is not a multiple of 2*alpha".into());
    }
    if !(&sum % n).is_one() {
        return Err("share sum is not 1 modulo N".into());
    }
    Ok(())
}

fn protocol_checks(
    params: &SecurityParams,
    pk: &PublicKey,
    sk: &PrivateKey,
) -> Vec<CheckResult> {
    let mut rs = RandomSource::os();
    let sp = SplitParams {
        sigma: params.sigma,
        eta: 0,
    };
    let setup: Result<_, String> = (|| {
        let (k1, k2) = split_key(sk, &sp, &mut rs).map_err(|e| e.to_string())?;
        let ctx0 = make_requester(pk, k1, params.sigma, 32, &mut rs, RandomSource::os())
            .map_err(|e| e.to_string())?;
        let table = build_table(pk, params.table_block, params.table_len);
        let ctx1 = make_responder(pk, k2, table, params.sigma, 32, &mut rs, RandomSource::os())
            .map_err(|e| e.to_string())?;
        Ok((ctx0, ctx1))
    })();
    let (mut ctx0, ctx1) = match setup {
        Ok(pair) => pair,
        Err(e) => return vec![CheckResult::fail("protocol-setup", e)],
    };

    let (a, b) = pair_inmemory();
    let server = std::thread::spawn(move || {
        let mut ctx = ctx1;
        serve(&mut ctx, &b)
    });

    let dec_signed = |c: &crate::fastpai::Ciphertext| -> Result<BigInt, String> {
        Ok(decode(&sk.n, &dec(sk, c).map_err(|e| e.to_string())?))
    };
    let enc_signed = |x: &BigInt, rs: &mut RandomSource| -> Result<crate::fastpai::Ciphertext, String> {
        enc(pk, &encode(&pk.n, x, 32).map_err(|e| e.to_string())?, rs).map_err(|e| e.to_string())
    };

    let mut out = Vec::new();
    out.push(check("protocol-multiply", || {
        for _ in 0..5 {
            let x = signed(&mut rs, 32);
            let y = signed(&mut rs, 32);
            let cx = enc_signed(&x, &mut rs)?;
            let cy = enc_signed(&y, &mut rs)?;
            let (got, _) = smul(&mut ctx0, &a, &cx, &cy).map_err(|e| e.to_string())?;
            let want = oracle_mul(
                i128::try_from(&x).unwrap(),
                i128::try_from(&y).unwrap(),
            );
            if dec_signed(&got)? != BigInt::from(want) {
                return Err(format!("{x}*{y} != {want}"));
            }
        }
        Ok(())
    }));

    out.push(check("protocol-compare", || {
        for _ in 0..5 {
            let x = signed(&mut rs, 32);
            let y = signed(&mut rs, 32);
            let cx = enc_signed(&x, &mut rs)?;
            let cy = enc_signed(&y, &mut rs)?;
            let (got, _) = scmp(&mut ctx0, &a, &cx, &cy).map_err(|e| e.to_string())?;
            let want = oracle_cmp(
                i128::try_from(&x).unwrap(),
                i128::try_from(&y).unwrap(),
            );
            if dec_signed(&got)? != BigInt::from(want) {
                return Err(format!("cmp({x},{y}) != {want}"));
            }
        }
        Ok(())
    }));

    out.push(check("protocol-sign-bit", || {
        for _ in 0..3 {
            let x = signed(&mut rs, 32);
            let cx = enc_signed(&x, &mut rs)?;
            let ((s, mag), _) = ssba(&mut ctx0, &a, &cx).map_err(|e| e.to_string())?;
            let s = dec_signed(&s)?;
            let mag = dec_signed(&mag)?;
            if !(s.is_zero() || s.is_one()) || mag != x.abs() {
                return Err(format!("sign split of {x} gave s={s}, |x|={mag}"));
            }
        }
        Ok(())
    }));

    out.push(check("protocol-divide", || {
        for _ in 0..2 {
            let x = BigInt::from(rs.sample_below(&BigUint::from(1u32 << 10)));
            let y = BigInt::from(rs.sample_below(&BigUint::from((1u32 << 10) - 1)) + 1u32);
            let cx = enc_signed(&x, &mut rs)?;
            let cy = enc_signed(&y, &mut rs)?;
            let ((q, e), _) = sdiv(&mut ctx0, &a, &cx, &cy, 10).map_err(|e| e.to_string())?;
            let q = dec_signed(&q)?;
            let e = dec_signed(&e)?;
            let (wq, we) = oracle_divmod(
                i128::try_from(&x).unwrap(),
                i128::try_from(&y).unwrap(),
            )
            .map_err(|err| err.to_string())?;
            if q != BigInt::from(wq) || e != BigInt::from(we) {
                return Err(format!("{x}/{y} gave ({q},{e}), want ({wq},{we})"));
            }
            if &q * &y + &e != x {
                return Err("division identity violated".into());
            }
        }
        Ok(())
    }));

    a.close();
    if let Err(e) = server.join().expect("responder thread") {
        out.push(CheckResult::fail("protocol-responder", e.to_string()));
    }
    out
}

/// Validates a key directory produced by key generation: files load, agree
/// on the public key, satisfy the share congruences, and decrypt.
pub fn check_key_dir(dir: &Path) -> Vec<CheckResult> {
    let mut out = Vec::new();

    let loaded: Result<_, String> = (|| {
        let (params, pk) =
            keyfile::load_public_key(&dir.join("public.key")).map_err(|e| e.to_string())?;
        let (_, pk_m, sk) =
            keyfile::load_master_key(&dir.join("master.key")).map_err(|e| e.to_string())?;
        let (_, pk_0, k1) =
            keyfile::load_share_key(&dir.join("s0.key")).map_err(|e| e.to_string())?;
        let (_, pk_1, k2) =
            keyfile::load_share_key(&dir.join("s1.key")).map_err(|e| e.to_string())?;
        Ok((params, pk, pk_m, sk, pk_0, k1, pk_1, k2))
    })();
    let (params, pk, pk_m, sk, pk_0, k1, pk_1, k2) = match loaded {
        Ok(v) => {
            out.push(CheckResult::pass("key-files-load"));
            v
        }
        Err(e) => {
            out.push(CheckResult::fail("key-files-load", e));
            return out;
        }
    };

    out.push(check("key-files-agree", || {
        if pk_m != pk || pk_0 != pk || pk_1 != pk {
            return Err("files disagree on the public key".into());
        }
        if k1.index == k2.index {
            return Err("share files carry the same index".into());
        }
        Ok(())
    }));

    out.push(check("share-congruence", || {
        let (s1, s2) = if k1.index == crate::threshold::ShareIndex::First {
            (&k1.share, &k2.share)
        } else {
            (&k2.share, &k1.share)
        };
        share_congruences(&sk.alpha, &pk.n, s1, s2)
    }));

    out.push(check("key-pair-roundtrip", || {
        let mut rs = RandomSource::os();
        for _ in 0..3 {
            let m = rs.sample_below(&pk.n);
            let c = enc(&pk, &m, &mut rs).map_err(|e| e.to_string())?;
            if dec(&sk, &c).map_err(|e| e.to_string())? != m {
                return Err("loaded keys do not round-trip".into());
            }
            let joint = tdec(&pdec(&k1, &c), &pdec(&k2, &c)).map_err(|e| e.to_string())?;
            if joint != m {
                return Err("loaded shares do not recombine".into());
            }
        }
        Ok(())
    }));

    out.push(check("profile-sanity", || {
        params.validate().map_err(|e| e.to_string())
    }));

    out
}
