"""Shared generators for the test modules."""

import numpy as np

from quditghz.fock import make_registry
from quditghz.gates import Circuit, GateSpec, gate_rewire


def random_unitary(n, rng):
    """Haar-distributed unitary via QR with the phase fix on R's diagonal."""
    z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_circuit(rng):
    reg = make_registry(1, 3, int(rng.integers(0, 4)))
    n = len(reg)
    sinks = reg.ids_of_kind("sink")
    ops = []
    for _ in range(int(rng.integers(2, 8))):
        kind = rng.choice(["CN_d", "CN_d_inverse", "F_d", "X_d", "BS", "Rewire"])
        if kind in ("CN_d", "CN_d_inverse"):
            ops.append(GateSpec(str(kind), 3, tuple(range(9))))
        elif kind in ("F_d", "X_d"):
            ops.append(GateSpec(str(kind), 3, tuple(rng.permutation(n)[:3].tolist())))
        elif kind == "BS" and sinks:
            a = int(rng.integers(9))
            ops.append(GateSpec("BS", 3, (a, int(rng.choice(sinks))), {"t": float(rng.random())}))
        elif kind == "Rewire":
            src = rng.permutation(n)[: int(rng.integers(2, 5))].tolist()
            ops.append(gate_rewire(dict(zip(src, rng.permutation(src).tolist())), 3))
    return Circuit(reg, ops)
