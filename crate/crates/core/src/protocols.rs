//! Two-party protocols between the requesting server S0 (key share 1, mask
//! tuple) and the responding server S1 (key share 2, zero/one tuple, power
//! table). Inputs and outputs are ciphertexts of signed values in
//! [-2^l, 2^l]; neither server alone can decrypt anything.
//!
//! Every protocol is request/response over one channel:
//!
//! ```text
//! multiply   S0 -> S1: C = ([x][r1])^L * [y][r2], C1 = pdec(C)
//!            S1 -> S0: [(x+r1)(y+r2)]        (S0 strips the cross terms)
//! compare    S0 -> S1: D = ([x]/[y])^r3 * [r3+r4] (or the mirrored form), D1
//!            S1 -> S0: [0] if the blinded difference tops N/2, else [1]
//! ```
//!
//! Sign-bit extraction composes one comparison against [0] with one
//! multiplication; division runs one comparison plus one multiplication per
//! quotient bit. The blinding constant L = 2^(sigma+2) separates the two
//! masked operands inside a single plaintext.

use crate::fastpai::{
    hom_add, hom_scal, hom_sub, Ciphertext, CryptoError, PublicKey,
};
use crate::modmath::RandomSource;
use crate::offline::{enc_fast, PrecompTable, TupleS0, TupleS1};
use crate::threshold::{pdec, tdec, PartialDecryption, PartialKey, ShareIndex};
use crate::transport::{
    decode_nat, encode_nat, msg, nat_wire_len, Channel, Frame, TransportError,
};
use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::One;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("peer reported an error: {0}")]
    Remote(String),
    #[error("unexpected reply type {found:#04x} in session {session}")]
    UnexpectedReply { session: u64, found: u8 },
    #[error("reply for session {found}, expected {expected}")]
    SessionMismatch { expected: u64, found: u64 },
    #[error("{0}")]
    Input(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    S0,
    S1,
}

/// Everything one server needs to run its side of the protocols.
pub struct PartyContext {
    pub role: Role,
    pub pk: PublicKey,
    pub partial: PartialKey,
    pub tuple_s0: Option<TupleS0>,
    pub tuple_s1: Option<TupleS1>,
    pub table: Option<PrecompTable>,
    /// Declared operand range: inputs live in [-2^range_l, 2^range_l].
    pub range_l: u32,
    /// Mask width sigma; operands must leave 40 bits of headroom below it.
    pub sigma: u32,
    /// L = 2^(sigma+2), the operand separator in the multiply protocol.
    pub l_const: BigUint,
    rng: RandomSource,
    next_session: u64,
}

impl PartyContext {
    fn validate_common(
        pk: &PublicKey,
        partial: &PartialKey,
        sigma: u32,
        range_l: u32,
    ) -> Result<(), ProtocolError> {
        if partial.n != pk.n {
            return Err(ProtocolError::Input(
                "key share belongs to a different modulus".into(),
            ));
        }
        if range_l == 0 || range_l + 40 > sigma {
            return Err(ProtocolError::Input(format!(
                "operand range {range_l} must be in [1, {}] for {sigma}-bit masks",
                sigma.saturating_sub(40)
            )));
        }
        Ok(())
    }

    /// Requester context: key share 1 plus the mask tuple.
    pub fn s0(
        pk: PublicKey,
        partial: PartialKey,
        tuple: TupleS0,
        sigma: u32,
        range_l: u32,
        rng: RandomSource,
    ) -> Result<Self, ProtocolError> {
        Self::validate_common(&pk, &partial, sigma, range_l)?;
        if partial.index != ShareIndex::First {
            return Err(ProtocolError::Input(
                "requester role needs key share 1".into(),
            ));
        }
        Ok(PartyContext {
            role: Role::S0,
            l_const: BigUint::one() << (sigma + 2),
            pk,
            partial,
            tuple_s0: Some(tuple),
            tuple_s1: None,
            table: None,
            range_l,
            sigma,
            rng,
            next_session: 0,
        })
    }

    /// Responder context: key share 2, the zero/one tuple, and the power
    /// table for fast reply encryption.
    pub fn s1(
        pk: PublicKey,
        partial: PartialKey,
        tuple: TupleS1,
        table: PrecompTable,
        sigma: u32,
        range_l: u32,
        rng: RandomSource,
    ) -> Result<Self, ProtocolError> {
        Self::validate_common(&pk, &partial, sigma, range_l)?;
        if partial.index != ShareIndex::Second {
            return Err(ProtocolError::Input(
                "responder role needs key share 2".into(),
            ));
        }
        if table.n_squared != pk.n_squared {
            return Err(ProtocolError::Input(
                "power table was built for a different key".into(),
            ));
        }
        Ok(PartyContext {
            role: Role::S1,
            l_const: BigUint::one() << (sigma + 2),
            pk,
            partial,
            tuple_s0: None,
            tuple_s1: Some(tuple),
            table: Some(table),
            range_l,
            sigma,
            rng,
            next_session: 0,
        })
    }

    fn require_role(&self, want: Role) -> Result<(), ProtocolError> {
        if self.role != want {
            return Err(ProtocolError::Input(format!(
                "operation requires role {want:?}, context is {:?}",
                self.role
            )));
        }
        Ok(())
    }

    fn next_session(&mut self) -> u64 {
        self.next_session += 1;
        self.next_session
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Sent,
    Received,
}

/// One wire message as the requester saw it.
#[derive(Debug, Clone)]
pub struct MessageRecord {
    pub direction: Direction,
    pub msg_type: u8,
    pub ciphertexts: u32,
    /// Minimal big-endian magnitude bytes of the carried values, excluding
    /// all framing. This is the number Table-style cost formulas predict.
    pub ciphertext_bytes: u64,
    pub frame_bytes: u64,
}

/// Requester-side wire log of one protocol run.
#[derive(Debug, Clone)]
pub struct ProtocolTranscript {
    pub protocol: &'static str,
    pub messages: Vec<MessageRecord>,
}

impl ProtocolTranscript {
    fn new(protocol: &'static str) -> Self {
        ProtocolTranscript {
            protocol,
            messages: Vec::new(),
        }
    }

    fn absorb(&mut self, other: ProtocolTranscript) {
        self.messages.extend(other.messages);
    }

    pub fn ciphertext_count(&self) -> u64 {
        self.messages.iter().map(|m| u64::from(m.ciphertexts)).sum()
    }

    pub fn ciphertext_bytes(&self) -> u64 {
        self.messages.iter().map(|m| m.ciphertext_bytes).sum()
    }

    pub fn frame_bytes(&self) -> u64 {
        self.messages.iter().map(|m| m.frame_bytes).sum()
    }
}

/// Sends a two-value request and awaits the single-value reply for the same
/// session, logging both directions.
fn exchange(
    ch: &dyn Channel,
    tr: &mut ProtocolTranscript,
    session: u64,
    req_type: u8,
    resp_type: u8,
    values: [&BigUint; 2],
) -> Result<BigUint, ProtocolError> {
    let mut payload = Vec::new();
    let mut ct_bytes = 0u64;
    for v in values {
        ct_bytes += (nat_wire_len(v) - 4) as u64;
        encode_nat(&mut payload, v);
    }
    let frame = Frame::new(req_type, session, payload);
    tr.messages.push(MessageRecord {
        direction: Direction::Sent,
        msg_type: req_type,
        ciphertexts: values.len() as u32,
        ciphertext_bytes: ct_bytes,
        frame_bytes: frame.encoded_len() as u64,
    });
    ch.send(&frame)?;

    let reply = ch.recv()?;
    if reply.session_id != session {
        return Err(ProtocolError::SessionMismatch {
            expected: session,
            found: reply.session_id,
        });
    }
    match reply.msg_type {
        t if t == resp_type => {
            let mut pos = 0;
            let v = decode_nat(&reply.payload, &mut pos)?;
            if pos != reply.payload.len() {
                return Err(ProtocolError::Input(
                    "reply carries unexpected trailing bytes".into(),
                ));
            }
            tr.messages.push(MessageRecord {
                direction: Direction::Received,
                msg_type: t,
                ciphertexts: 1,
                ciphertext_bytes: (nat_wire_len(&v) - 4) as u64,
                frame_bytes: reply.encoded_len() as u64,
            });
            Ok(v)
        }
        msg::ERROR => Err(ProtocolError::Remote(
            String::from_utf8_lossy(&reply.payload).into_owned(),
        )),
        other => Err(ProtocolError::UnexpectedReply {
            session,
            found: other,
        }),
    }
}

/// Encrypted product: returns a ciphertext of x*y given ciphertexts of x
/// and y, with S1 serving on the other end of the channel.
pub fn smul(
    ctx: &mut PartyContext,
    ch: &dyn Channel,
    cx: &Ciphertext,
    cy: &Ciphertext,
) -> Result<(Ciphertext, ProtocolTranscript), ProtocolError> {
    ctx.require_role(Role::S0)?;
    let session = ctx.next_session();
    let mut tr = ProtocolTranscript::new("smul");

    let tuple = ctx
        .tuple_s0
        .as_mut()
        .expect("S0 context always holds a tuple");
    let (r1, r2, enc_r1, enc_r2, enc_neg_r1r2) = tuple.draw_mul_masks(&ctx.pk);
    let pk = &ctx.pk;

    // C = ([x][r1])^L * [y][r2] packs both masked operands into one value:
    // L*(x+r1) + (y+r2), recoverable by S1 as quotient and remainder.
    let x_masked = hom_add(pk, cx, &enc_r1);
    let y_masked = hom_add(pk, cy, &enc_r2);
    let c = hom_add(pk, &hom_scal(pk, &x_masked, &ctx.l_const), &y_masked);
    let c1 = pdec(&ctx.partial, &c);

    let ab = exchange(
        ch,
        &mut tr,
        session,
        msg::SMUL_REQ,
        msg::SMUL_RESP,
        [c.as_nat(), &c1.value],
    )?;
    let ab = Ciphertext::from_nat(pk, ab)?;

    // (x+r1)(y+r2) - r2*x - r1*y - r1*r2 = x*y.
    let neg_r2 = (&pk.n - &r2) % &pk.n;
    let neg_r1 = (&pk.n - &r1) % &pk.n;
    let mut out = hom_add(pk, &ab, &hom_scal(pk, cx, &neg_r2));
    out = hom_add(pk, &out, &hom_scal(pk, cy, &neg_r1));
    out = hom_add(pk, &out, &enc_neg_r1r2);
    Ok((out, tr))
}

/// S1's half of the multiply: recover the two masked operands from the
/// jointly decrypted value and return their product, freshly encrypted.
pub fn smul_serve_step(
    ctx: &mut PartyContext,
    c: &Ciphertext,
    c1: &PartialDecryption,
) -> Result<Ciphertext, ProtocolError> {
    ctx.require_role(Role::S1)?;
    let c2 = pdec(&ctx.partial, c);
    let t = tdec(c1, &c2)?;
    let (a, b) = t.div_rem(&ctx.l_const);
    let prod = a * b % &ctx.pk.n;
    let table = ctx.table.as_ref().expect("S1 context always holds a table");
    Ok(enc_fast(&ctx.pk, table, &prod, &mut ctx.rng)?)
}

/// Encrypted comparison: returns a ciphertext of 0 when x >= y, of 1
/// otherwise. The coin decides which operand order is blinded, hiding the
/// outcome's orientation from S1.
pub fn scmp(
    ctx: &mut PartyContext,
    ch: &dyn Channel,
    cx: &Ciphertext,
    cy: &Ciphertext,
) -> Result<(Ciphertext, ProtocolTranscript), ProtocolError> {
    let flip = ctx.rng.coin();
    scmp_with_flip(ctx, ch, cx, cy, flip)
}

/// Comparison with the orientation coin pinned; tests drive both branches.
pub fn scmp_with_flip(
    ctx: &mut PartyContext,
    ch: &dyn Channel,
    cx: &Ciphertext,
    cy: &Ciphertext,
    flip: bool,
) -> Result<(Ciphertext, ProtocolTranscript), ProtocolError> {
    ctx.require_role(Role::S0)?;
    let session = ctx.next_session();
    let mut tr = ProtocolTranscript::new("scmp");

    let tuple = ctx
        .tuple_s0
        .as_mut()
        .expect("S0 context always holds a tuple");
    let (r3, _r4, enc_r3_plus_r4, enc_r4) = tuple.draw_cmp_masks(&ctx.pk);
    let pk = &ctx.pk;

    // d = r3*(x-y) + r3 + r4 exceeds N/2 exactly when x >= y; the flipped
    // form d = r3*(y-x) + r4 exceeds it exactly when y > x.
    let d = if flip {
        hom_add(pk, &hom_scal(pk, &hom_sub(pk, cy, cx), &r3), &enc_r4)
    } else {
        hom_add(pk, &hom_scal(pk, &hom_sub(pk, cx, cy), &r3), &enc_r3_plus_r4)
    };
    let d1 = pdec(&ctx.partial, &d);

    let mu0 = exchange(
        ch,
        &mut tr,
        session,
        msg::SCMP_REQ,
        msg::SCMP_RESP,
        [d.as_nat(), &d1.value],
    )?;
    let mu0 = Ciphertext::from_nat(pk, mu0)?;

    let mu = if flip {
        // Undo the orientation flip: mu = 1 - mu0.
        let one = ctx
            .tuple_s0
            .as_mut()
            .expect("S0 context always holds a tuple")
            .draw_one(&ctx.pk);
        hom_sub(&ctx.pk, &one, &mu0)
    } else {
        mu0
    };
    Ok((mu, tr))
}

/// S1's half of the comparison: decide which half of [0, N) the blinded
/// difference landed in and answer with a refreshed [0] or [1].
pub fn scmp_serve_step(
    ctx: &mut PartyContext,
    d: &Ciphertext,
    d1: &PartialDecryption,
) -> Result<Ciphertext, ProtocolError> {
    ctx.require_role(Role::S1)?;
    let d2 = pdec(&ctx.partial, d);
    let t = tdec(d1, &d2)?;
    let tuple = ctx
        .tuple_s1
        .as_mut()
        .expect("S1 context always holds a tuple");
    let (zero, one) = tuple.draw_zero_one(&ctx.pk);
    let above_half: BigUint = &t << 1;
    Ok(if above_half > ctx.pk.n { zero } else { one })
}

/// Sign-bit extraction: returns ([s], [|x|]) with s = 0 for x >= 0 and
/// s = 1 for x < 0.
pub fn ssba(
    ctx: &mut PartyContext,
    ch: &dyn Channel,
    cx: &Ciphertext,
) -> Result<((Ciphertext, Ciphertext), ProtocolTranscript), ProtocolError> {
    ctx.require_role(Role::S0)?;
    let mut tr = ProtocolTranscript::new("ssba");

    let zero = ctx
        .tuple_s0
        .as_mut()
        .expect("S0 context always holds a tuple")
        .draw_zero_one(&ctx.pk)
        .0;
    let (s, t_cmp) = scmp(ctx, ch, cx, &zero)?;
    tr.absorb(t_cmp);

    // 1 - 2s maps the sign bit to the sign factor {1, -1}.
    let one = ctx
        .tuple_s0
        .as_mut()
        .expect("S0 context always holds a tuple")
        .draw_one(&ctx.pk);
    let n_minus_2 = &ctx.pk.n - 2u32;
    let sign_factor = hom_add(&ctx.pk, &one, &hom_scal(&ctx.pk, &s, &n_minus_2));

    let (magnitude, t_mul) = smul(ctx, ch, &sign_factor, cx)?;
    tr.absorb(t_mul);
    Ok(((s, magnitude), tr))
}

/// Encrypted long division of x in [0, 2^l] by y in (0, 2^l]: returns
/// ([quotient], [remainder]). Schoolbook binary long division: one
/// comparison plus one multiplication per quotient bit. A zero divisor is
/// undetectable under encryption and yields garbage; that precondition is
/// the caller's.
pub fn sdiv(
    ctx: &mut PartyContext,
    ch: &dyn Channel,
    cx: &Ciphertext,
    cy: &Ciphertext,
    l: u32,
) -> Result<((Ciphertext, Ciphertext), ProtocolTranscript), ProtocolError> {
    ctx.require_role(Role::S0)?;
    if l > ctx.range_l {
        return Err(ProtocolError::Input(format!(
            "division range {l} exceeds the context range {}",
            ctx.range_l
        )));
    }
    // The shifted divisor reaches 2^(2l); the comparison masks need that to
    // stay far below their own width.
    if 2 * l + 2 > ctx.sigma {
        return Err(ProtocolError::Input(format!(
            "division range {l} is too wide for {}-bit masks",
            ctx.sigma
        )));
    }
    let mut tr = ProtocolTranscript::new("sdiv");

    let mut quotient = ctx
        .tuple_s0
        .as_mut()
        .expect("S0 context always holds a tuple")
        .draw_zero_one(&ctx.pk)
        .0;
    let mut rem = cx.clone();

    for i in (0..=l).rev() {
        let two_i = BigUint::one() << i;
        let shifted = hom_scal(&ctx.pk, cy, &two_i);
        let (mu, t_cmp) = scmp(ctx, ch, &rem, &shifted)?;
        tr.absorb(t_cmp);

        // bit = 1 - mu = [rem >= y*2^i].
        let one = ctx
            .tuple_s0
            .as_mut()
            .expect("S0 context always holds a tuple")
            .draw_one(&ctx.pk);
        let bit = hom_sub(&ctx.pk, &one, &mu);
        quotient = hom_add(&ctx.pk, &quotient, &hom_scal(&ctx.pk, &bit, &two_i));

        let (taken, t_mul) = smul(ctx, ch, &bit, &shifted)?;
        tr.absorb(t_mul);
        rem = hom_sub(&ctx.pk, &rem, &taken);
    }
    Ok(((quotient, rem), tr))
}

fn parse_request(
    pk: &PublicKey,
    payload: &[u8],
) -> Result<(Ciphertext, PartialDecryption), String> {
    let mut pos = 0;
    let c = decode_nat(payload, &mut pos).map_err(|e| e.to_string())?;
    let d = decode_nat(payload, &mut pos).map_err(|e| e.to_string())?;
    if pos != payload.len() {
        return Err(format!(
            "request carries {} unexpected trailing bytes",
            payload.len() - pos
        ));
    }
    let c = Ciphertext::from_nat(pk, c).map_err(|e| e.to_string())?;
    // The partial decryption is an N^2 residue with the same bounds.
    let d = Ciphertext::from_nat(pk, d)
        .map_err(|_| "partial decryption out of range".to_string())?;
    Ok((
        c,
        PartialDecryption {
            index: ShareIndex::First,
            value: d.into_nat(),
            n: pk.n.clone(),
        },
    ))
}

fn handle_request(ctx: &mut PartyContext, frame: &Frame) -> Result<Frame, String> {
    let (c, c1) = parse_request(&ctx.pk, &frame.payload)?;
    let (resp_type, out) = match frame.msg_type {
        msg::SMUL_REQ => (
            msg::SMUL_RESP,
            smul_serve_step(ctx, &c, &c1).map_err(|e| e.to_string())?,
        ),
        msg::SCMP_REQ => (
            msg::SCMP_RESP,
            scmp_serve_step(ctx, &c, &c1).map_err(|e| e.to_string())?,
        ),
        other => return Err(format!("unsupported message type {other:#04x}")),
    };
    let mut payload = Vec::new();
    encode_nat(&mut payload, out.as_nat());
    Ok(Frame::new(resp_type, frame.session_id, payload))
}

/// Responder event loop: answers multiply and compare requests until the
/// peer closes the channel. A bad request aborts only its own session; the
/// loop keeps serving.
pub fn serve(ctx: &mut PartyContext, ch: &dyn Channel) -> Result<(), ProtocolError> {
    ctx.require_role(Role::S1)?;
    loop {
        let frame = match ch.recv() {
            Ok(f) => f,
            Err(TransportError::Closed) => return Ok(()),
            Err(e) => return Err(e.into()),
        };
        if frame.msg_type == msg::ERROR {
            // Peer aborted one of its sessions; nothing to answer.
            continue;
        }
        let reply = match handle_request(ctx, &frame) {
            Ok(f) => f,
            Err(reason) => Frame::error(frame.session_id, &reason),
        };
        match ch.send(&reply) {
            Ok(()) => {}
            Err(TransportError::Closed) => return Ok(()),
            Err(e) => return Err(e.into()),
        }
    }
}

/// Builds a requester context, sampling fresh masks with `setup_rng` and
/// handing `run_rng` to the context for its protocol coins.
pub fn make_requester(
    pk: &PublicKey,
    share: PartialKey,
    sigma: u32,
    range_l: u32,
    setup_rng: &mut RandomSource,
    run_rng: RandomSource,
) -> Result<PartyContext, ProtocolError> {
    let tuple = crate::offline::build_tuple_s0(pk, sigma, setup_rng)?;
    PartyContext::s0(pk.clone(), share, tuple, sigma, range_l, run_rng)
}

/// Builds a responder context around an existing power table.
pub fn make_responder(
    pk: &PublicKey,
    share: PartialKey,
    table: PrecompTable,
    sigma: u32,
    range_l: u32,
    setup_rng: &mut RandomSource,
    run_rng: RandomSource,
) -> Result<PartyContext, ProtocolError> {
    let tuple = crate::offline::build_tuple_s1(pk, setup_rng)?;
    PartyContext::s1(pk.clone(), share, tuple, table, sigma, range_l, run_rng)
}

/// Ground truth for the multiply protocol.
pub fn oracle_mul(x: i128, y: i128) -> i128 {
    x * y
}

/// Ground truth for the compare protocol: 0 when x >= y, 1 otherwise.
pub fn oracle_cmp(x: i128, y: i128) -> u8 {
    u8::from(x < y)
}

/// Ground truth for sign-bit extraction: (sign bit, magnitude).
pub fn oracle_ssba(x: i128) -> (u8, i128) {
    if x >= 0 {
        (0, x)
    } else {
        (1, -x)
    }
}

/// Ground truth for division: (quotient, remainder) over non-negative x
/// and positive y.
pub fn oracle_divmod(x: i128, y: i128) -> Result<(i128, i128), ProtocolError> {
    if y == 0 {
        return Err(ProtocolError::Input("division by zero".into()));
    }
    if x < 0 || y < 0 {
        return Err(ProtocolError::Input(
            "division oracle expects non-negative operands".into(),
        ));
    }
    Ok((x / y, x % y))
}
