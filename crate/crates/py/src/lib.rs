//! Python bindings: key generation, encryption, the homomorphic operations,
//! threshold decryption, and a self-contained two-server rig for running the
//! interactive protocols in one process.
//!
//! ```python
//! import soci_py
//! pk, sk = soci_py.setup(1024)
//! c = pk.encrypt(-42)
//! assert sk.decrypt(c) == -42
//! ```

use num_bigint::{BigInt, BigUint};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use soci_core::fastpai::{self, SecurityParams};
use soci_core::offline::build_table;
use soci_core::protocols::{
    make_requester, make_responder, scmp, sdiv, serve, smul, ssba, ProtocolError,
};
use soci_core::threshold::{pdec, split_key, tdec, SplitParams};
use soci_core::transport::{pair_inmemory, InMemoryChannel};
use soci_core::{Channel, PartyContext, RandomSource};
use std::sync::Mutex;
use std::thread::JoinHandle;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Public key; encrypts and evaluates the additive homomorphism.
#[pyclass(name = "PublicKey", frozen)]
struct PyPublicKey {
    inner: fastpai::PublicKey,
}

#[pymethods]
impl PyPublicKey {
    /// Encrypt a signed integer; |x| must be at most 2^l.
    #[pyo3(signature = (x, l = 64))]
    fn encrypt(&self, x: BigInt, l: u32) -> PyResult<PyCiphertext> {
        let m = fastpai::encode(&self.inner.n, &x, l).map_err(value_err)?;
        let c = fastpai::enc(&self.inner, &m, &mut RandomSource::os()).map_err(value_err)?;
        Ok(PyCiphertext { inner: c })
    }

    fn add(&self, a: &PyCiphertext, b: &PyCiphertext) -> PyCiphertext {
        PyCiphertext {
            inner: fastpai::hom_add(&self.inner, &a.inner, &b.inner),
        }
    }

    fn sub(&self, a: &PyCiphertext, b: &PyCiphertext) -> PyCiphertext {
        PyCiphertext {
            inner: fastpai::hom_sub(&self.inner, &a.inner, &b.inner),
        }
    }

    fn scale(&self, a: &PyCiphertext, k: BigUint) -> PyCiphertext {
        PyCiphertext {
            inner: fastpai::hom_scal(&self.inner, &a.inner, &k),
        }
    }

    #[getter]
    fn n(&self) -> BigUint {
        self.inner.n.clone()
    }

    fn __repr__(&self) -> String {
        format!("PublicKey(n_bits={})", self.inner.n.bits())
    }
}

/// Master private key; only the data owner holds it.
#[pyclass(name = "PrivateKey", frozen)]
struct PyPrivateKey {
    inner: fastpai::PrivateKey,
}

#[pymethods]
impl PyPrivateKey {
    fn decrypt(&self, c: &PyCiphertext) -> PyResult<BigInt> {
        let m = fastpai::dec(&self.inner, &c.inner).map_err(value_err)?;
        Ok(fastpai::decode(&self.inner.n, &m))
    }

    fn __repr__(&self) -> String {
        format!("PrivateKey(n_bits={})", self.inner.n.bits())
    }
}

/// One of the two partial private keys.
#[pyclass(name = "KeyShare", frozen)]
struct PyKeyShare {
    inner: soci_core::PartialKey,
}

#[pymethods]
impl PyKeyShare {
    fn part_dec(&self, c: &PyCiphertext) -> PyPartial {
        PyPartial {
            inner: pdec(&self.inner, &c.inner),
        }
    }

    #[getter]
    fn index(&self) -> u8 {
        self.inner.index.as_u8()
    }

    fn __repr__(&self) -> String {
        format!("KeyShare(index={})", self.inner.index.as_u8())
    }
}

/// A partially decrypted ciphertext.
#[pyclass(name = "PartialDecryption", frozen)]
struct PyPartial {
    inner: soci_core::PartialDecryption,
}

/// Opaque ciphertext.
#[pyclass(name = "Ciphertext", frozen)]
struct PyCiphertext {
    inner: fastpai::Ciphertext,
}

#[pymethods]
impl PyCiphertext {
    fn __repr__(&self) -> String {
        format!("Ciphertext({} bits)", self.inner.as_nat().bits())
    }
}

/// Generate a key pair at the given modulus width (1024, 2048 or 3072).
#[pyfunction]
#[pyo3(signature = (bits = 1024))]
fn setup(py: Python<'_>, bits: u32) -> PyResult<(PyPublicKey, PyPrivateKey)> {
    let params = SecurityParams::for_modulus_bits(bits).map_err(value_err)?;
    let (pk, sk) = py
        .detach(|| fastpai::keygen(&params, &mut RandomSource::os()))
        .map_err(value_err)?;
    Ok((PyPublicKey { inner: pk }, PyPrivateKey { inner: sk }))
}

/// Split a private key into the two server shares.
#[pyfunction]
#[pyo3(signature = (sk, sigma = 128, eta = 0))]
fn split(sk: &PyPrivateKey, sigma: u32, eta: u32) -> PyResult<(PyKeyShare, PyKeyShare)> {
    let (k1, k2) = split_key(&sk.inner, &SplitParams { sigma, eta }, &mut RandomSource::os())
        .map_err(value_err)?;
    Ok((PyKeyShare { inner: k1 }, PyKeyShare { inner: k2 }))
}

/// Combine the two partial decryptions into the signed plaintext.
#[pyfunction]
fn combine(pk: &PyPublicKey, m1: &PyPartial, m2: &PyPartial) -> PyResult<BigInt> {
    let m = tdec(&m1.inner, &m2.inner).map_err(value_err)?;
    Ok(fastpai::decode(&pk.inner.n, &m))
}

/// Both servers in one process, talking over an in-memory channel: a test
/// and demo rig for the interactive protocols.
#[pyclass(name = "System")]
struct PySystem {
    pk: fastpai::PublicKey,
    sk: fastpai::PrivateKey,
    l: u32,
    ctx: Mutex<PartyContext>,
    chan: InMemoryChannel,
    server: Mutex<Option<JoinHandle<Result<(), ProtocolError>>>>,
}

impl PySystem {
    fn shut_down(&self) -> PyResult<()> {
        self.chan.close();
        if let Some(handle) = self.server.lock().unwrap().take() {
            handle
                .join()
                .map_err(|_| runtime_err("server thread panicked"))?
                .map_err(runtime_err)?;
        }
        Ok(())
    }

    fn run<T>(
        &self,
        py: Python<'_>,
        f: impl FnOnce(&mut PartyContext, &dyn Channel) -> Result<T, ProtocolError> + Send,
    ) -> PyResult<T>
    where
        T: Send,
    {
        py.detach(|| {
            let mut ctx = self.ctx.lock().unwrap();
            f(&mut ctx, &self.chan).map_err(runtime_err)
        })
    }
}

#[pymethods]
impl PySystem {
    #[new]
    #[pyo3(signature = (bits = 1024, l = 32))]
    fn new(py: Python<'_>, bits: u32, l: u32) -> PyResult<Self> {
        py.detach(|| {
            let params = SecurityParams::for_modulus_bits(bits).map_err(value_err)?;
            let mut rs = RandomSource::os();
            let (pk, sk) = fastpai::keygen(&params, &mut rs).map_err(value_err)?;
            let sp = SplitParams {
                sigma: params.sigma,
                eta: 0,
            };
            let (k1, k2) = split_key(&sk, &sp, &mut rs).map_err(value_err)?;
            let ctx0 = make_requester(&pk, k1, params.sigma, l, &mut rs, RandomSource::os())
                .map_err(value_err)?;
            let table = build_table(&pk, params.table_block, params.table_len);
            let mut ctx1 =
                make_responder(&pk, k2, table, params.sigma, l, &mut rs, RandomSource::os())
                    .map_err(value_err)?;
            let (chan, peer) = pair_inmemory();
            let server = std::thread::spawn(move || serve(&mut ctx1, &peer));
            Ok(PySystem {
                pk,
                sk,
                l,
                ctx: Mutex::new(ctx0),
                chan,
                server: Mutex::new(Some(server)),
            })
        })
    }

    #[pyo3(signature = (x, l = None))]
    fn encrypt(&self, x: BigInt, l: Option<u32>) -> PyResult<PyCiphertext> {
        let l = l.unwrap_or(self.l);
        let m = fastpai::encode(&self.pk.n, &x, l).map_err(value_err)?;
        let c = fastpai::enc(&self.pk, &m, &mut RandomSource::os()).map_err(value_err)?;
        Ok(PyCiphertext { inner: c })
    }

    fn decrypt(&self, c: &PyCiphertext) -> PyResult<BigInt> {
        let m = fastpai::dec(&self.sk, &c.inner).map_err(value_err)?;
        Ok(fastpai::decode(&self.sk.n, &m))
    }

    /// Encrypted product of two encrypted values.
    fn mul(&self, py: Python<'_>, a: &PyCiphertext, b: &PyCiphertext) -> PyResult<PyCiphertext> {
        let (c, _) = self.run(py, |ctx, ch| smul(ctx, ch, &a.inner, &b.inner))?;
        Ok(PyCiphertext { inner: c })
    }

    /// Encrypted comparison bit: 0 when a >= b, 1 otherwise.
    fn cmp(&self, py: Python<'_>, a: &PyCiphertext, b: &PyCiphertext) -> PyResult<PyCiphertext> {
        let (c, _) = self.run(py, |ctx, ch| scmp(ctx, ch, &a.inner, &b.inner))?;
        Ok(PyCiphertext { inner: c })
    }

    /// Encrypted (sign bit, magnitude) of an encrypted value.
    fn sign_split(
        &self,
        py: Python<'_>,
        a: &PyCiphertext,
    ) -> PyResult<(PyCiphertext, PyCiphertext)> {
        let ((s, m), _) = self.run(py, |ctx, ch| ssba(ctx, ch, &a.inner))?;
        Ok((PyCiphertext { inner: s }, PyCiphertext { inner: m }))
    }

    /// Encrypted (quotient, remainder); operands must lie in [0, 2^l].
    #[pyo3(signature = (a, b, l = 10))]
    fn div(
        &self,
        py: Python<'_>,
        a: &PyCiphertext,
        b: &PyCiphertext,
        l: u32,
    ) -> PyResult<(PyCiphertext, PyCiphertext)> {
        let ((q, e), _) = self.run(py, |ctx, ch| sdiv(ctx, ch, &a.inner, &b.inner, l))?;
        Ok((PyCiphertext { inner: q }, PyCiphertext { inner: e }))
    }

    /// Stop the server thread. Called automatically on drop; calling it
    /// twice is fine.
    fn close(&self) -> PyResult<()> {
        self.shut_down()
    }

    #[getter]
    fn public_key(&self) -> PyPublicKey {
        PyPublicKey {
            inner: self.pk.clone(),
        }
    }

    fn __repr__(&self) -> String {
        format!("System(n_bits={}, l={})", self.pk.n.bits(), self.l)
    }
}

impl Drop for PySystem {
    fn drop(&mut self) {
        let _ = self.shut_down();
    }
}

#[pymodule]
fn soci_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPublicKey>()?;
    m.add_class::<PyPrivateKey>()?;
    m.add_class::<PyKeyShare>()?;
    m.add_class::<PyPartial>()?;
    m.add_class::<PyCiphertext>()?;
    m.add_class::<PySystem>()?;
    m.add_function(wrap_pyfunction!(setup, m)?)?;
    m.add_function(wrap_pyfunction!(split, m)?)?;
    m.add_function(wrap_pyfunction!(combine, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    // One embedded interpreter per process; both checks live in one test.
    #[test]
    fn module_works_under_an_embedded_interpreter() {
        pyo3::append_to_inittab!(soci_py);
        Python::initialize();
        Python::attach(|py| {
            let code = c"
import soci_py

pk, sk = soci_py.setup(1024)
c = pk.encrypt(-1234)
assert sk.decrypt(c) == -1234, 'roundtrip'

s1, s2 = soci_py.split(sk)
assert soci_py.combine(pk, s1.part_dec(c), s2.part_dec(c)) == -1234, 'threshold'

total = pk.add(pk.encrypt(20), pk.encrypt(22))
assert sk.decrypt(total) == 42, 'addition'

rig = soci_py.System(1024)
a, b = rig.encrypt(17), rig.encrypt(5)
q, r = rig.div(a, b, 10)
assert (rig.decrypt(q), rig.decrypt(r)) == (3, 2), 'division'
assert rig.decrypt(rig.mul(a, b)) == 85, 'multiplication'
assert rig.decrypt(rig.cmp(a, b)) == 0, 'comparison'
s, m = rig.sign_split(rig.encrypt(-9))
assert (rig.decrypt(s), rig.decrypt(m)) == (1, 9), 'sign split'
rig.close()
";
            py.run(code, None, None).map_err(|e| {
                e.print(py);
                e
            })
        })
        .expect("python smoke code runs");
    }
}
