"""Builder for the heralded N-party qudit GHZ circuit and its closed-form predictions."""

from __future__ import annotations

import cmath
import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import ParameterDomainError
from .fock import FockState, create, annihilate, make_registry, vacuum
from .gates import Circuit, DetectorGroup, GateSpec, gate_rewire

BS_PLACEMENTS = ("middle_wires", "first_subsystem")


@dataclass(frozen=True)
class GhzCircuitPlan:
    N: int
    d: int
    t: float
    circuit: Circuit
    output_wires: tuple[tuple[int, ...], ...]
    middle_wires: tuple[tuple[int, ...], ...]
    bs_placement: str = "middle_wires"

    @property
    def photon_count(self) -> int:
        return self.N * self.d


def _check_params(N: int, d: int, t: float | None = None, min_N: int = 2) -> None:
    if not isinstance(N, (int, np.integer)) or N < min_N:
        raise ParameterDomainError(f"N must be an integer >= {min_N}, got {N!r}")
    if not isinstance(d, (int, np.integer)) or d < 2:
        raise ParameterDomainError(f"d must be an integer >= 2, got {d!r}")
    if t is not None and not (0.0 <= t <= 1.0):
        raise ParameterDomainError(f"t must lie in [0, 1], got {t!r}")


def build_ghz_circuit(N: int, d: int, t: float | None = None, bs_placement: str = "middle_wires") -> GhzCircuitPlan:
    """Assemble the six-stage circuit.

    Mode (j, r, s) is subsystem j, rail r, internal state s.  Subsystem j keeps
    its surviving photon on rail 0, with the logical value equal to the
    internal state.  Rails 1..d-1 of every subsystem are Fourier-basis
    detectors.  ``t`` defaults to 1/sqrt(d).

    ``bs_placement="middle_wires"`` puts one BS on each wire (j, k, k) for
    k = 1..d-2 right after the rewiring; ``"first_subsystem"`` instead puts
    them on subsystem 0's output modes k = 1..d-2 at the very end.
    """
    _check_params(N, d, t)
    if t is None:
        t = 1 / math.sqrt(d)
    if bs_placement not in BS_PLACEMENTS:
        raise ParameterDomainError(f"bs_placement must be one of {BS_PLACEMENTS}")
    middle = range(1, d - 1)
    n_sinks = (d - 2) * N if bs_placement == "middle_wires" else d - 2
    reg = make_registry(N, d, n_sinks)
    idx = reg.index

    def internal(j: int, r: int) -> tuple[int, ...]:
        return tuple(idx(j, r, s) for s in range(d))

    def block(j: int) -> tuple[int, ...]:
        return tuple(idx(j, r, s) for r in range(d) for s in range(d))

    sinks = iter(reg.ids_of_kind("sink"))
    ops: list[GateSpec] = []
    # stage 1: Fourier preparation of the d input photons
    ops += [GateSpec("F_d", d, internal(j, 0)) for j in range(N)]
    # stage 2: split by internal state onto rails
    ops += [GateSpec("CN_d", d, block(j)) for j in range(N)]
    # stage 3: rail d-1 of subsystem j is handed to subsystem j+1
    ops.append(
        gate_rewire(
            {idx(j, d - 1, s): idx((j + 1) % N, d - 1, s) for j in range(N) for s in range(d)}, d
        )
    )
    if bs_placement == "middle_wires":
        for j in range(N):
            for k in middle:
                ops.append(GateSpec("BS", d, (idx(j, k, k), next(sinks)), {"t": t}))
    # stage 4
    for j in range(N):
        ops.append(GateSpec("X_d", d, internal(j, d - 1)))
        ops.append(GateSpec("F_d", d, internal(j, d - 1)))
        ops.append(GateSpec("F_d", d, internal(j, 0)))
    # stage 5: recombine rails; the middle photon on (k, k) lands on (0, k)
    ops += [GateSpec("CN_d_inverse", d, block(j)) for j in range(N)]
    # stage 6: Fourier-basis detection on rails 1..d-1
    ops += [GateSpec("F_d", d, internal(j, r)) for j in range(N) for r in range(1, d)]
    if bs_placement == "first_subsystem":
        for k in middle:
            ops.append(GateSpec("BS", d, (idx(0, 0, k), next(sinks)), {"t": t}))

    groups = tuple(DetectorGroup(internal(j, r)) for j in range(N) for r in range(1, d))
    output_wires = tuple(internal(j, 0) for j in range(N))
    circuit = Circuit(
        registry=reg,
        ops=tuple(ops),
        detector_groups=groups,
        sinks=frozenset(reg.ids_of_kind("sink")),
        N=N,
        d=d,
        input_modes=tuple(m for j in range(N) for m in internal(j, 0)),
        output_wires=output_wires,
    )
    middle_wires = tuple(tuple(idx(j, k, k) for k in middle) for j in range(N))
    return GhzCircuitPlan(N, d, float(t), circuit, output_wires, middle_wires, bs_placement)


def initial_state(N: int, d: int, registry=None) -> FockState:
    """d photons per subsystem on rail 0, one in each internal state (before the Fourier layer)."""
    _check_params(N, d, min_N=1)
    reg = registry if registry is not None else make_registry(N, d)
    state = vacuum(reg)
    for j in range(N):
        for s in range(d):
            state = create(state, {reg.index(j, 0, s): 1.0})
    return state


def circuit_input_state(circuit: Circuit) -> FockState:
    state = vacuum(circuit.registry)
    for m in circuit.input_modes:
        state = create(state, {m: 1.0})
    return state


def ghz_target(plan_or_circuit, x: Sequence[complex] | None = None) -> FockState:
    """Normalized generalized GHZ sum_k x_k |k,...,k> on the output wires (uniform x by default)."""
    circuit = getattr(plan_or_circuit, "circuit", plan_or_circuit)
    d = circuit.d
    x = np.ones(d) if x is None else np.asarray(x, dtype=complex)
    x = x / np.linalg.norm(x)
    terms = {}
    for k in range(d):
        occ = tuple(sorted((w[k], 1) for w in circuit.output_wires))
        terms[occ] = complex(x[k])
    return FockState(circuit.registry, terms, len(circuit.output_wires))


def psuc_exact(N: int, d: int) -> Fraction:
    """d * (d!/d^d)^(2N) as an exact rational."""
    _check_params(N, d)
    return d * Fraction(math.factorial(d), d**d) ** (2 * N)


def psuc_formula(N: int, d: int) -> float:
    return float(psuc_exact(N, d))


def log10_psuc(N: int, d: int) -> float:
    _check_params(N, d)
    return math.log10(d) + 2 * N * (math.lgamma(d + 1) - d * math.log(d)) / math.log(10)


def final_amplitudes(N: int, d: int, t: float | None = None) -> list[complex]:
    """Closed-form unnormalized amplitudes of |k,...,k>, k = 0..d-1.

    Outer values get (d!)^N / d^(Nd), middle ones (d! sqrt(d) t)^N / d^(Nd).
    The term k carries the sign (-1)^(kN) produced by the circuit, which for
    N = d = 3 gives the pattern (+, -, +).
    """
    _check_params(N, d, t)
    if t is None:
        t = 1 / math.sqrt(d)
    fact = Fraction(math.factorial(d) ** N, d ** (N * d))
    out = []
    for k in range(d):
        sign = -1 if (k * N) % 2 else 1
        mag = float(fact) if k in (0, d - 1) else float(fact) * (math.sqrt(d) * t) ** N
        out.append(complex(sign * mag))
    return out


def ztl_bell_psuc(d: int) -> float:
    """d (2d-1)! / (2d+1)^(2d-1), the N = 2 comparison value."""
    _check_params(2, d)
    return float(Fraction(d * math.factorial(2 * d - 1), (2 * d + 1) ** (2 * d - 1)))


# Published brute-force comparison point for N = d = 3.
ZTL_CITED_N3D3 = {"photons": 25, "psuc": 1e-10, "psuc_multiplexed": 0.8e-4}


def _fourier_weights(d: int, j: int, dagger: bool) -> dict[int, complex]:
    sign = 1 if dagger else -1
    return {s: cmath.exp(sign * 2j * math.pi * ((j * s) % d) / d) / math.sqrt(d) for s in range(d)}


def _identity_lhs(d: int, n0: int, n_last: int) -> FockState:
    reg = make_registry(1, d)
    state = vacuum(reg)
    for s in range(d):
        state = create(state, {s: 1.0})
    for _ in range(n0):
        state = annihilate(state, _fourier_weights(d, 0, dagger=False))
    for _ in range(n_last):
        state = annihilate(state, _fourier_weights(d, d - 1, dagger=False))
    return state


def identity1_check(d: int, l: int) -> float:
    """Max amplitude deviation between the two sides of the one-photon-survivor identity.

    Left: (a_0~)^l (a_(d-1)~)^(d-1-l) prod_s a_s^dag |vac>.
    Right: (-1)^(d-1-l) l! (d-1-l)! / sqrt(d)^(d-2) a_(d-1-l)~^dag |vac>.
    """
    if not (2 <= d <= 8 and 0 <= l <= d - 1):
        raise ParameterDomainError(f"need 2 <= d <= 8 and 0 <= l < d, got d={d}, l={l}")
    lhs = _identity_lhs(d, l, d - 1 - l)
    coeff = (-1) ** (d - 1 - l) * math.factorial(l) * math.factorial(d - 1 - l) / math.sqrt(d) ** (d - 2)
    rhs = create(vacuum(lhs.registry), _fourier_weights(d, d - 1 - l, dagger=True)) * coeff
    return lhs.max_abs_diff(rhs)


def identity2_check(d: int, m: int) -> float:
    """Norm of (a_0~)^m (a_(d-1)~)^(d-m) prod_s a_s^dag |vac>, which should vanish."""
    if not (2 <= d <= 8 and 1 <= m <= d - 1):
        raise ParameterDomainError(f"need 2 <= d <= 8 and 1 <= m < d, got d={d}, m={m}")
    return math.sqrt(_identity_lhs(d, m, d - m).norm2())


def psuc_table(N_values: Iterable[int], d_values: Iterable[int]) -> list[dict]:
    rows = []
    for d in d_values:
        for N in N_values:
            rows.append(
                {
                    "N": N,
                    "d": d,
                    "photons": d * N,
                    "p_suc": psuc_formula(N, d),
                    "log10_p_suc": log10_psuc(N, d),
                }
            )
    return rows


def format_csv(rows: Sequence[dict], columns: Sequence[str] | None = None) -> str:
    """CSV with floats at 12 significant digits."""
    if not rows:
        return ""
    columns = list(columns or rows[0].keys())
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow(
            [f"{v:.12g}" if isinstance(v, float) else ("" if v is None else v) for v in (row[c] for c in columns)]
        )
    return buf.getvalue()
