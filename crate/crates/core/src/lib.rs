//! Secure outsourced computation on encrypted integers.
//!
//! A data owner encrypts signed integers under an additively homomorphic
//! Paillier variant with a fast decryption exponent, splits the private key
//! into two shares, and hands one share to each of two non-colluding servers.
//! The servers then evaluate multiplication, comparison, sign extraction and
//! division over ciphertexts by exchanging a handful of masked messages;
//! neither server alone learns the operands or the result.
//!
//! Module map:
//!
//! * [`modmath`]: big-integer modular arithmetic, primality, randomness.
//! * [`fastpai`]: key generation, encryption, decryption, homomorphic ops.
//! * [`threshold`]: private-key splitting and two-share decryption.
//! * [`offline`]: precomputed mask tuples and the fixed-base power table.
//! * [`protocols`]: the four interactive protocols plus plaintext oracles.
//! * [`transport`]: framed twin-server channel (in-memory and TCP).
//! * [`keyfile`]: key material on disk.
//! * [`bench`]: timing/traffic reports for the protocol suite.
//! * [`selftest`]: named end-to-end health checks.

pub mod bench;
pub mod fastpai;
pub mod keyfile;
pub mod modmath;
pub mod offline;
pub mod protocols;
pub mod selftest;
pub mod threshold;
pub mod transport;

#[cfg(test)]
pub(crate) mod testkit;

pub use fastpai::{Ciphertext, CryptoError, PrivateKey, PublicKey, SecurityParams};
pub use modmath::RandomSource;
pub use protocols::{PartyContext, ProtocolError, Role};
pub use threshold::{PartialDecryption, PartialKey, ShareIndex, SplitParams};
pub use transport::{Channel, TransportError};
