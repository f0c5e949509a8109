//! `soci`: operator front end for the two-server computation toolkit.
//!
//! Every subcommand is a thin shell over the library: `keygen` writes key
//! material, `serve` runs the computation server, `run` plays the requester
//! against a local or remote server, `bench` times the protocols, and
//! `selftest` runs the named invariant checks.
//!
//! Exit codes: 0 success, 1 usage, 2 crypto or protocol failure,
//! 3 transport failure.

use clap::{Args, Parser, Subcommand};
use num_bigint::{BigInt, BigUint};
use num_traits::One;
use soci_core::bench::{bench_protocol, BenchConfig, BenchReport, Protocol};
use soci_core::fastpai::{dec, decode, enc, encode, keygen, Ciphertext};
use soci_core::keyfile::{
    load_master_key, load_public_key, load_share_key, load_table_cache, write_master_key,
    write_public_key, write_share_key, write_table_cache, KeyFileError,
};
use soci_core::offline::{build_table, build_tuple_s1, PrecompTable};
use soci_core::protocols::{
    make_requester, scmp, sdiv, serve, smul, ssba, ProtocolTranscript,
};
use soci_core::selftest::{check_key_dir, run_all, CheckResult};
use soci_core::threshold::split_key;
use soci_core::transport::{connect_tcp, listen_tcp, pair_inmemory, server_hello};
use soci_core::{
    Channel, CryptoError, PartyContext, ProtocolError, PublicKey, RandomSource, SecurityParams,
    ShareIndex, SplitParams, TransportError,
};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "soci", version, about = "Secure computation over encrypted integers")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a key pair, split the private key, and write the key files.
    Keygen(KeygenArgs),
    /// Run the computation server (role S1) until interrupted.
    Serve(ServeArgs),
    /// Encrypt operands, run one protocol, and print the result.
    Run(RunArgs),
    /// Time a protocol over in-memory channels and report traffic.
    Bench(BenchArgs),
    /// Run the named invariant checks; nonzero exit if any fails.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct KeygenArgs {
    /// Modulus width in bits.
    #[arg(long, default_value_t = 2048)]
    bits: u32,
    /// Statistical masking width; defaults to the profile value.
    #[arg(long)]
    sigma: Option<u32>,
    /// Extra multiples of 2*alpha*N folded into the second share.
    #[arg(long, default_value_t = 0)]
    eta: u32,
    /// Output directory for the key files.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    /// Server role; only s1 is served over the network.
    #[arg(long, default_value = "s1")]
    role: String,
    /// Directory holding public.key and s1.key.
    #[arg(long)]
    keys: PathBuf,
    /// Listen address.
    #[arg(long, env = "SOCI_ADDR", default_value = "127.0.0.1:7421")]
    listen: String,
    /// Serve a single connection, then exit.
    #[arg(long)]
    once: bool,
}

#[derive(Args)]
struct RunArgs {
    /// Protocol to run: smul, scmp, ssba or sdiv.
    #[arg(long)]
    op: String,
    /// First operand.
    #[arg(long, allow_hyphen_values = true)]
    x: i64,
    /// Second operand (unused by ssba).
    #[arg(long, allow_hyphen_values = true)]
    y: Option<i64>,
    /// Operand bit width; inputs must lie in [-2^l, 2^l].
    #[arg(long, default_value_t = 32)]
    l: u32,
    /// Connect to a remote server at this address.
    #[arg(long, conflicts_with = "local")]
    connect: Option<String>,
    /// Run both parties in this process over an in-memory channel.
    #[arg(long)]
    local: bool,
    /// Decrypt the result with master.key (testing only).
    #[arg(long)]
    reveal: bool,
    /// Directory holding the key files.
    #[arg(long)]
    keys: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Protocol to time: smul, scmp, ssba or sdiv.
    #[arg(long)]
    protocol: String,
    /// Number of timed runs.
    #[arg(long, default_value_t = 20)]
    iters: u32,
    /// Modulus width when generating fresh keys.
    #[arg(long, default_value_t = 2048)]
    bits: u32,
    /// Operand bit width.
    #[arg(long, default_value_t = 32)]
    l: u32,
    /// Model transfer time at this bandwidth in Mbps.
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reuse keys from this directory instead of generating.
    #[arg(long)]
    keys: Option<PathBuf>,
}

#[derive(Args)]
struct SelftestArgs {
    /// Modulus width for the generated-key suite.
    #[arg(long, default_value_t = 1024)]
    bits: u32,
    /// Check the key files in this directory instead.
    #[arg(long)]
    keys: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Crypto(String),
    Transport(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Crypto(_) => 2,
            CliError::Transport(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Crypto(m) | CliError::Transport(m) => m,
        }
    }
}

impl From<CryptoError> for CliError {
    fn from(e: CryptoError) -> Self {
        CliError::Crypto(e.to_string())
    }
}

impl From<KeyFileError> for CliError {
    fn from(e: KeyFileError) -> Self {
        CliError::Crypto(e.to_string())
    }
}

impl From<TransportError> for CliError {
    fn from(e: TransportError) -> Self {
        CliError::Transport(e.to_string())
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::Transport(t) => CliError::Transport(t.to_string()),
            other => CliError::Crypto(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Crypto(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are not usage errors.
            let ok = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return ExitCode::from(if ok { 0 } else { 1 });
        }
    };
    let result = match cli.cmd {
        Cmd::Keygen(a) => cmd_keygen(&a),
        Cmd::Serve(a) => cmd_serve(&a),
        Cmd::Run(a) => cmd_run(&a),
        Cmd::Bench(a) => cmd_bench(&a),
        Cmd::Selftest(a) => cmd_selftest(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn profile_for(bits: u32, sigma: Option<u32>) -> Result<SecurityParams, CliError> {
    let mut params = SecurityParams::for_modulus_bits(bits)?;
    if let Some(s) = sigma {
        params.sigma = s;
        params.validate()?;
    }
    Ok(params)
}

fn cmd_keygen(a: &KeygenArgs) -> Result<(), CliError> {
    let params = profile_for(a.bits, a.sigma)?;
    if a.eta > 16 {
        return Err(CliError::Usage("eta must be at most 16".into()));
    }
    std::fs::create_dir_all(&a.out)?;
    let mut rs = RandomSource::os();
    let (pk, sk) = keygen(&params, &mut rs)?;
    let sp = SplitParams {
        sigma: params.sigma,
        eta: a.eta,
    };
    let (k1, k2) = split_key(&sk, &sp, &mut rs)?;
    write_public_key(&a.out.join("public.key"), &params, &pk)?;
    write_master_key(&a.out.join("master.key"), &params, &pk, &sk)?;
    write_share_key(&a.out.join("s0.key"), &params, &pk, &k1)?;
    write_share_key(&a.out.join("s1.key"), &params, &pk, &k2)?;
    let table = build_table(&pk, params.table_block, params.table_len);
    write_table_cache(&a.out.join("table.spct"), &table)?;
    println!(
        "wrote public.key, master.key, s0.key, s1.key, table.spct to {} (modulus {} bits)",
        a.out.display(),
        pk.n.bits()
    );
    Ok(())
}

/// Loads the fixed-base table from the cache next to the key files,
/// rebuilding (and re-caching, best effort) when missing or stale.
fn load_or_build_table(
    dir: &Path,
    params: &SecurityParams,
    pk: &PublicKey,
) -> Result<PrecompTable, CliError> {
    let path = dir.join("table.spct");
    if path.exists() {
        if let Ok(table) = load_table_cache(&path, pk) {
            return Ok(table);
        }
    }
    let table = build_table(pk, params.table_block, params.table_len);
    let _ = write_table_cache(&path, &table);
    Ok(table)
}

fn cmd_serve(a: &ServeArgs) -> Result<(), CliError> {
    if a.role != "s1" {
        return Err(CliError::Usage(format!(
            "only role s1 is served over the network, got {:?}",
            a.role
        )));
    }
    let (params, pk) = load_public_key(&a.keys.join("public.key"))?;
    let (_, pk_share, share) = load_share_key(&a.keys.join("s1.key"))?;
    if pk_share != pk {
        return Err(CliError::Crypto(
            "s1.key does not match public.key".into(),
        ));
    }
    if share.index != ShareIndex::Second {
        return Err(CliError::Crypto(
            "s1.key holds the first share, expected the second".into(),
        ));
    }
    let table = load_or_build_table(&a.keys, &params, &pk)?;
    let mut rs = RandomSource::os();
    let tuple = build_tuple_s1(&pk, &mut rs)?;

    let acceptor = listen_tcp(a.listen.as_str())?;
    println!("listening on {}", acceptor.local_addr()?);
    loop {
        let ch = acceptor.accept()?;
        if let Err(e) = server_hello(&ch, &pk) {
            eprintln!("handshake failed: {e}");
            continue;
        }
        let mut ctx = PartyContext::s1(
            pk.clone(),
            share.clone(),
            tuple.clone(),
            table.clone(),
            params.sigma,
            32,
            RandomSource::os(),
        )?;
        if let Err(e) = serve(&mut ctx, &ch) {
            eprintln!("session error: {e}");
        }
        let st = ch.stats();
        println!(
            "session closed: frames {}/{} bytes {}/{} ciphertexts {}/{} (in/out)",
            st.frames_received,
            st.frames_sent,
            st.bytes_received,
            st.bytes_sent,
            st.ciphertexts_received,
            st.ciphertexts_sent
        );
        if a.once {
            return Ok(());
        }
    }
}

fn parse_operand(value: i64, l: u32, name: &str) -> Result<BigInt, CliError> {
    let x = BigInt::from(value);
    let bound = BigInt::from(BigUint::one() << l);
    if x < -&bound || x > bound {
        return Err(CliError::Usage(format!(
            "{name}={value} is outside [-2^{l}, 2^{l}]"
        )));
    }
    Ok(x)
}

fn cmd_run(a: &RunArgs) -> Result<(), CliError> {
    if !["smul", "scmp", "ssba", "sdiv"].contains(&a.op.as_str()) {
        return Err(CliError::Usage(format!(
            "unknown op {:?}, expected smul, scmp, ssba or sdiv",
            a.op
        )));
    }
    if a.local == a.connect.is_some() {
        return Err(CliError::Usage(
            "pass exactly one of --local or --connect".into(),
        ));
    }
    if !(1..=62).contains(&a.l) {
        return Err(CliError::Usage("l must be between 1 and 62".into()));
    }
    let x = parse_operand(a.x, a.l, "x")?;
    let needs_y = a.op != "ssba";
    let y = match (a.y, needs_y) {
        (Some(v), true) => Some(parse_operand(v, a.l, "y")?),
        (None, true) => return Err(CliError::Usage(format!("--op {} requires --y", a.op))),
        (_, false) => None,
    };
    if a.op == "sdiv" {
        let y = y.as_ref().unwrap();
        if x < BigInt::from(0) || *y <= BigInt::from(0) {
            return Err(CliError::Usage(
                "sdiv requires x >= 0 and y > 0".into(),
            ));
        }
    }

    let (params, pk) = load_public_key(&a.keys.join("public.key"))?;
    let (_, pk_share, k1) = load_share_key(&a.keys.join("s0.key"))?;
    if pk_share != pk {
        return Err(CliError::Crypto("s0.key does not match public.key".into()));
    }
    let mut rs = RandomSource::os();
    let mut ctx = make_requester(&pk, k1, params.sigma, a.l, &mut rs, RandomSource::os())?;

    let cx = enc(&pk, &encode(&pk.n, &x, a.l)?, &mut rs)?;
    let cy = match &y {
        Some(v) => Some(enc(&pk, &encode(&pk.n, v, a.l)?, &mut rs)?),
        None => None,
    };

    // Local mode runs the responder on a thread over an in-memory pair;
    // otherwise connect out and handshake.
    let mut responder = None;
    let channel: Box<dyn Channel> = if a.local {
        let (_, pk_share, k2) = load_share_key(&a.keys.join("s1.key"))?;
        if pk_share != pk {
            return Err(CliError::Crypto("s1.key does not match public.key".into()));
        }
        let table = load_or_build_table(&a.keys, &params, &pk)?;
        let tuple = build_tuple_s1(&pk, &mut rs)?;
        let mut srv = PartyContext::s1(
            pk.clone(),
            k2,
            tuple,
            table,
            params.sigma,
            32,
            RandomSource::os(),
        )?;
        let (mine, theirs) = pair_inmemory();
        responder = Some(std::thread::spawn(move || serve(&mut srv, &theirs)));
        Box::new(mine)
    } else {
        Box::new(connect_tcp(a.connect.as_deref().unwrap(), &pk)?)
    };

    let outcome = run_op(&a.op, &mut ctx, channel.as_ref(), &cx, cy.as_ref());
    channel.close();
    if let Some(handle) = responder {
        if let Err(e) = handle.join().expect("responder thread") {
            eprintln!("responder error: {e}");
        }
    }
    let (outputs, tr) = outcome?;

    if a.reveal {
        let (_, _, sk) = load_master_key(&a.keys.join("master.key"))?;
        let mut shown = Vec::new();
        for (name, c) in &outputs {
            let v = decode(&sk.n, &dec(&sk, c)?);
            shown.push(format!("{name}={v}"));
        }
        println!("{}", shown.join(" "));
    } else {
        for (name, c) in &outputs {
            let bytes = c.as_nat().to_bytes_be();
            let head: String = bytes.iter().take(8).map(|b| format!("{b:02x}")).collect();
            println!("{name}=ciphertext {head}.. ({} bytes)", bytes.len());
        }
    }
    println!(
        "stats: {} ciphertexts, {} ciphertext bytes across {} frames ({} bytes framed)",
        tr.ciphertext_count(),
        tr.ciphertext_bytes(),
        tr.messages.len(),
        tr.frame_bytes()
    );
    let st = channel.stats();
    println!(
        "channel: sent {} frames / {} bytes, received {} frames / {} bytes",
        st.frames_sent, st.bytes_sent, st.frames_received, st.bytes_received
    );
    Ok(())
}

type Outputs = Vec<(&'static str, Ciphertext)>;

fn run_op(
    op: &str,
    ctx: &mut PartyContext,
    ch: &dyn Channel,
    cx: &Ciphertext,
    cy: Option<&Ciphertext>,
) -> Result<(Outputs, ProtocolTranscript), CliError> {
    match op {
        "smul" => {
            let (c, tr) = smul(ctx, ch, cx, cy.unwrap())?;
            Ok((vec![("product", c)], tr))
        }
        "scmp" => {
            let (c, tr) = scmp(ctx, ch, cx, cy.unwrap())?;
            Ok((vec![("mu", c)], tr))
        }
        "ssba" => {
            let ((s, m), tr) = ssba(ctx, ch, cx)?;
            Ok((vec![("s", s), ("m", m)], tr))
        }
        "sdiv" => {
            let ((q, e), tr) = sdiv(ctx, ch, cx, cy.unwrap(), ctx.range_l)?;
            Ok((vec![("q", q), ("e", e)], tr))
        }
        other => Err(CliError::Usage(format!(
            "unknown op {other:?}, expected smul, scmp, ssba or sdiv"
        ))),
    }
}

fn cmd_bench(a: &BenchArgs) -> Result<(), CliError> {
    let protocol =
        Protocol::parse(&a.protocol).map_err(|e| CliError::Usage(e.to_string()))?;
    if a.iters == 0 {
        return Err(CliError::Usage("iters must be positive".into()));
    }
    let mut rs = RandomSource::os();
    let (params, pk, sk) = match &a.keys {
        Some(dir) => {
            let (params, pk, sk) = load_master_key(&dir.join("master.key"))?;
            (params, pk, sk)
        }
        None => {
            let params = profile_for(a.bits, None)?;
            let (pk, sk) = keygen(&params, &mut rs)?;
            (params, pk, sk)
        }
    };
    let cfg = BenchConfig {
        protocol,
        iterations: a.iters,
        l: a.l,
        bandwidth_mbps: a.bandwidth,
    };
    let report = bench_protocol(&params, &pk, &sk, &cfg, &mut rs)?;
    print_report(&report);
    if let Some(path) = &a.out {
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| CliError::Crypto(e.to_string()))?;
        std::fs::write(path, json + "\n")?;
        println!("report written to {}", path.display());
    }
    Ok(())
}

fn print_report(r: &BenchReport) {
    println!("protocol      {}", r.protocol);
    println!("iterations    {}", r.iterations);
    println!("modulus bits  {}", r.n_len);
    println!("operand bits  {}", r.l);
    println!("median        {:.3} ms", r.median_ms);
    println!("mean          {:.3} ms", r.mean_ms);
    println!("ciphertexts   {}", r.ciphertext_count);
    println!(
        "payload       {} bytes ({:.3} KB)",
        r.payload_bytes,
        r.payload_bytes as f64 / 1024.0
    );
    println!("framed        {} bytes", r.frame_bytes);
    if let (Some(ms), Some(mbps)) = (r.modeled_transfer_ms, r.bandwidth_mbps) {
        println!("transfer      {ms:.3} ms modeled at {mbps} Mbps");
    }
}

fn cmd_selftest(a: &SelftestArgs) -> Result<(), CliError> {
    let results: Vec<CheckResult> = match &a.keys {
        Some(dir) => check_key_dir(dir),
        None => {
            let params = profile_for(a.bits, None)?;
            run_all(&params, &mut RandomSource::os())
        }
    };
    let mut failed = 0;
    for r in &results {
        if r.passed {
            println!("[ok]   {}", r.name);
        } else {
            failed += 1;
            println!("[FAIL] {}: {}", r.name, r.detail);
        }
    }
    if failed == 0 {
        println!("{} checks passed", results.len());
        Ok(())
    } else {
        Err(CliError::Crypto(format!(
            "{failed} of {} checks failed",
            results.len()
        )))
    }
}
