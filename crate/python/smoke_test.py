#!/usr/bin/env python3
"""Smoke test for the soci_py extension module.

Build the module first, then run this script:

    cargo build -p soci-py
    python3 python/smoke_test.py

The script loads the shared library straight out of target/, so no install
step is needed.
"""

import importlib.machinery
import importlib.util
import pathlib
import sys


def load_module():
    root = pathlib.Path(__file__).resolve().parents[1]
    candidates = [
        root / "target" / "release" / "libsoci_py.so",
        root / "target" / "debug" / "libsoci_py.so",
        pathlib.Path(__file__).resolve().parent / "soci_py.so",
    ]
    for path in candidates:
        if path.exists():
            loader = importlib.machinery.ExtensionFileLoader("soci_py", str(path))
            spec = importlib.util.spec_from_loader("soci_py", loader)
            module = importlib.util.module_from_spec(spec)
            loader.exec_module(module)
            sys.modules["soci_py"] = module
            return module
    sys.exit("soci_py not built; run: cargo build -p soci-py")


def main():
    soci = load_module()

    print("generating keys ...")
    pk, sk = soci.setup(1024)

    c = pk.encrypt(-1234)
    assert sk.decrypt(c) == -1234
    print("encrypt/decrypt roundtrip ok")

    total = pk.add(pk.encrypt(20), pk.encrypt(22))
    assert sk.decrypt(total) == 42
    diff = pk.sub(pk.encrypt(5), pk.encrypt(8))
    assert sk.decrypt(diff) == -3
    tripled = pk.scale(pk.encrypt(-7), 3)
    assert sk.decrypt(tripled) == -21
    print("homomorphic add/sub/scale ok")

    s1, s2 = soci.split(sk)
    assert {s1.index, s2.index} == {1, 2}
    assert soci.combine(pk, s1.part_dec(c), s2.part_dec(c)) == -1234
    print("threshold decryption ok")

    print("starting the two-server rig ...")
    rig = soci.System(1024)
    a, b = rig.encrypt(17), rig.encrypt(5)

    assert rig.decrypt(rig.mul(a, b)) == 85
    assert rig.decrypt(rig.mul(rig.encrypt(-6), rig.encrypt(7))) == -42
    print("secure multiplication ok")

    assert rig.decrypt(rig.cmp(a, b)) == 0  # 17 >= 5
    assert rig.decrypt(rig.cmp(b, a)) == 1  # 5 < 17
    assert rig.decrypt(rig.cmp(a, a)) == 0  # ties count as >=
    print("secure comparison ok")

    s, m = rig.sign_split(rig.encrypt(-9))
    assert (rig.decrypt(s), rig.decrypt(m)) == (1, 9)
    s, m = rig.sign_split(rig.encrypt(9))
    assert (rig.decrypt(s), rig.decrypt(m)) == (0, 9)
    print("sign-bit extraction ok")

    q, r = rig.div(a, b, 10)
    assert (rig.decrypt(q), rig.decrypt(r)) == (3, 2)
    q, r = rig.div(rig.encrypt(100), rig.encrypt(7), 10)
    assert (rig.decrypt(q), rig.decrypt(r)) == (14, 2)
    print("secure division ok")

    rig.close()
    print("smoke test passed")


if __name__ == "__main__":
    main()
