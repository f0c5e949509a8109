//! Protocol benchmarking over an in-process channel pair, so the numbers
//! measure computation, not the network. An optional bandwidth figure adds
//! a modeled transfer time on top (payload bits over the given link rate).

use crate::fastpai::{enc, encode, PrivateKey, PublicKey, SecurityParams};
use crate::modmath::RandomSource;
use crate::offline::build_table;
use crate::protocols::{
    make_requester, make_responder, scmp, sdiv, serve, smul, ssba, PartyContext, ProtocolError,
    ProtocolTranscript,
};
use crate::threshold::{split_key, SplitParams};
use crate::transport::{pair_inmemory, Channel};
use num_bigint::BigUint;
use num_traits::One;
use serde::Serialize;
use std::thread;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    Smul,
    Scmp,
    Ssba,
    Sdiv,
}

impl Protocol {
    pub fn parse(name: &str) -> Result<Self, ProtocolError> {
        match name {
            "smul" => Ok(Protocol::Smul),
            "scmp" => Ok(Protocol::Scmp),
            "ssba" => Ok(Protocol::Ssba),
            "sdiv" => Ok(Protocol::Sdiv),
            other => Err(ProtocolError::Input(format!(
                "unknown protocol {other:?}, expected smul, scmp, ssba or sdiv"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Smul => "smul",
            Protocol::Scmp => "scmp",
            Protocol::Ssba => "ssba",
            Protocol::Sdiv => "sdiv",
        }
    }

    /// Wire ciphertexts one run moves, as a function of the bit range.
    pub fn expected_ciphertexts(self, l: u32) -> u64 {
        match self {
            Protocol::Smul | Protocol::Scmp => 3,
            Protocol::Ssba => 6,
            Protocol::Sdiv => 6 * (u64::from(l) + 1),
        }
    }
}

/// One benchmark result. Field names are stable; bump `schema_version` on
/// any change.
#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub protocol: String,
    pub iterations: u32,
    pub n_len: u32,
    pub l: u32,
    pub median_ms: f64,
    pub mean_ms: f64,
    /// Wire ciphertexts per run (constant for a given protocol and l).
    pub ciphertext_count: u64,
    /// Mean ciphertext payload per run: magnitude bytes only, no framing.
    pub payload_bytes: u64,
    /// Mean full wire traffic per run, frames included.
    pub frame_bytes: u64,
    /// Modeled one-way transfer time for the payload, when a bandwidth was
    /// given.
    pub modeled_transfer_ms: Option<f64>,
    pub bandwidth_mbps: Option<f64>,
}

pub struct BenchConfig {
    pub protocol: Protocol,
    pub iterations: u32,
    pub l: u32,
    pub bandwidth_mbps: Option<f64>,
}

fn signed_operand(rs: &mut RandomSource, l: u32) -> num_bigint::BigInt {
    let magnitude = rs.sample_below(&((BigUint::one() << l) + 1u32));
    let v = num_bigint::BigInt::from(magnitude);
    if rs.coin() {
        -v
    } else {
        v
    }
}

fn sample_operands(
    proto: Protocol,
    pk: &PublicKey,
    l: u32,
    rs: &mut RandomSource,
) -> (BigUint, BigUint) {
    match proto {
        Protocol::Sdiv => {
            let x = rs.sample_below(&((BigUint::one() << l) + 1u32));
            let y = rs.sample_below(&(BigUint::one() << l)) + 1u32;
            (x, y)
        }
        _ => {
            let x = encode(&pk.n, &signed_operand(rs, l), l).expect("in range");
            let y = encode(&pk.n, &signed_operand(rs, l), l).expect("in range");
            (x, y)
        }
    }
}

fn run_once(
    proto: Protocol,
    ctx0: &mut PartyContext,
    ch: &dyn crate::transport::Channel,
    cx: &crate::fastpai::Ciphertext,
    cy: &crate::fastpai::Ciphertext,
    l: u32,
) -> Result<ProtocolTranscript, ProtocolError> {
    Ok(match proto {
        Protocol::Smul => smul(ctx0, ch, cx, cy)?.1,
        Protocol::Scmp => scmp(ctx0, ch, cx, cy)?.1,
        Protocol::Ssba => ssba(ctx0, ch, cx)?.1,
        Protocol::Sdiv => sdiv(ctx0, ch, cx, cy, l)?.1,
    })
}

/// Benchmarks one protocol over fresh key shares for the given profile.
pub fn bench_protocol(
    params: &SecurityParams,
    pk: &PublicKey,
    sk: &PrivateKey,
    cfg: &BenchConfig,
    rs: &mut RandomSource,
) -> Result<BenchReport, ProtocolError> {
    if cfg.iterations == 0 {
        return Err(ProtocolError::Input("iterations must be positive".into()));
    }
    let sp = SplitParams {
        sigma: params.sigma,
        eta: 0,
    };
    let (k1, k2) = split_key(sk, &sp, rs)?;
    let range_l = cfg.l.max(1);
    let mut ctx0 = make_requester(pk, k1, params.sigma, range_l, rs, RandomSource::os())?;
    let table = build_table(pk, params.table_block, params.table_len);
    let ctx1 = make_responder(
        pk,
        k2,
        table,
        params.sigma,
        range_l,
        rs,
        RandomSource::os(),
    )?;

    let (a, b) = pair_inmemory();
    let server = thread::spawn(move || {
        let mut ctx = ctx1;
        serve(&mut ctx, &b)
    });

    let mut times_ms = Vec::with_capacity(cfg.iterations as usize);
    let mut payload_total = 0u64;
    let mut frame_total = 0u64;
    let mut count = None;
    for _ in 0..cfg.iterations {
        let (mx, my) = sample_operands(cfg.protocol, pk, cfg.l, rs);
        let cx = enc(pk, &mx, rs)?;
        let cy = enc(pk, &my, rs)?;
        let start = Instant::now();
        let tr = run_once(cfg.protocol, &mut ctx0, &a, &cx, &cy, cfg.l)?;
        times_ms.push(start.elapsed().as_secs_f64() * 1e3);
        payload_total += tr.ciphertext_bytes();
        frame_total += tr.frame_bytes();
        let c = tr.ciphertext_count();
        assert_eq!(*count.get_or_insert(c), c, "run-to-run count drift");
    }
    a.close();
    server.join().expect("responder thread")?;

    times_ms.sort_by(|p, q| p.total_cmp(q));
    let median_ms = times_ms[times_ms.len() / 2];
    let mean_ms = times_ms.iter().sum::<f64>() / times_ms.len() as f64;
    let payload_bytes = payload_total / u64::from(cfg.iterations);
    let modeled_transfer_ms = cfg
        .bandwidth_mbps
        .map(|mbps| (payload_bytes as f64 * 8.0) / (mbps * 1e6) * 1e3);

    Ok(BenchReport {
        schema_version: 1,
        protocol: cfg.protocol.name().to_string(),
        iterations: cfg.iterations,
        n_len: params.n_len,
        l: cfg.l,
        median_ms,
        mean_ms,
        ciphertext_count: count.unwrap_or(0),
        payload_bytes,
        frame_bytes: frame_total / u64::from(cfg.iterations),
        modeled_transfer_ms,
        bandwidth_mbps: cfg.bandwidth_mbps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit;

    #[test]
    fn bench_reports_counts_and_timings() {
        let (params, pk, sk) = testkit::fixture_1024();
        let mut rs = RandomSource::seeded(100);
        let cfg = BenchConfig {
            protocol: Protocol::Smul,
            iterations: 3,
            l: 32,
            bandwidth_mbps: Some(100.0),
        };
        let r = bench_protocol(params, pk, sk, &cfg, &mut rs).unwrap();
        assert_eq!(r.protocol, "smul");
        assert_eq!(r.iterations, 3);
        assert_eq!(r.ciphertext_count, 3);
        assert_eq!(r.n_len, 1024);
        assert!(r.median_ms > 0.0 && r.mean_ms > 0.0);
        // Three 2048-bit residues, give or take leading-zero slack.
        assert!(r.payload_bytes <= 3 * 256 && r.payload_bytes > 3 * 248);
        assert!(r.frame_bytes > r.payload_bytes);
        let t = r.modeled_transfer_ms.unwrap();
        assert!(t > 0.0 && t < 1.0, "{t}");

        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["schema_version"], 1);
        assert_eq!(json["ciphertext_count"], 3);
    }

    #[test]
    fn bench_division_counts_scale_with_range() {
        let (params, pk, sk) = testkit::fixture_1024();
        let mut rs = RandomSource::seeded(101);
        let cfg = BenchConfig {
            protocol: Protocol::Sdiv,
            iterations: 2,
            l: 4,
            bandwidth_mbps: None,
        };
        let r = bench_protocol(params, pk, sk, &cfg, &mut rs).unwrap();
        assert_eq!(r.ciphertext_count, 30);
        assert_eq!(r.ciphertext_count, Protocol::Sdiv.expected_ciphertexts(4));
        assert!(r.modeled_transfer_ms.is_none());
    }

    #[test]
    fn protocol_names_parse() {
        assert_eq!(Protocol::parse("smul").unwrap(), Protocol::Smul);
        assert_eq!(Protocol::parse("sdiv").unwrap(), Protocol::Sdiv);
        assert!(Protocol::parse("nope").is_err());
        assert_eq!(Protocol::Ssba.expected_ciphertexts(10), 6);
    }
}
