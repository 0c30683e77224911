"""Matrix permanents and boson transition amplitudes built on them.

This is an independent route to the amplitudes produced by the expansion
engine in :mod:`quditghz.fock`: it only uses the flattened single-photon
unitary of a circuit.
"""

from __future__ import annotations

import itertools
import math
from typing import Sequence

import numba
import numpy as np

from .errors import CapacityError, ContractViolationError
from .fock import LinearMap, Occupation, occupation, total
from .gates import Circuit, flatten

MAX_PERMANENT_DIM = 24


@numba.njit(cache=True)
def _ryser_gray(a):
    n = a.shape[0]
    if n == 0:
        return 1.0 + 0.0j
    rowsum = np.zeros(n, dtype=np.complex128)
    acc = 0.0 + 0.0j
    sign = -1.0  # (-1)^|S| for the current subset; starts at |S| = 1
    gray = 0
    for k in range(1, 1 << n):
        # the Gray code flips the bit at the position of k's lowest set bit
        j = 0
        while not (k >> j) & 1:
            j += 1
        gray ^= 1 << j
        if (gray >> j) & 1:
            for i in range(n):
                rowsum[i] += a[i, j]
        else:
            for i in range(n):
                rowsum[i] -= a[i, j]
        prod = 1.0 + 0.0j
        for i in range(n):
            prod *= rowsum[i]
        acc += sign * prod
        sign = -sign
    if n % 2:
        return -acc
    return acc


def permanent(matrix) -> complex:
    """Permanent via Ryser's formula with Gray-code subset iteration, O(2^n n)."""
    a = np.ascontiguousarray(np.asarray(matrix, dtype=np.complex128))
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractViolationError(f"permanent needs a square matrix, got shape {a.shape}")
    if a.shape[0] > MAX_PERMANENT_DIM:
        raise CapacityError(f"permanent of a {a.shape[0]}x{a.shape[0]} matrix exceeds the limit {MAX_PERMANENT_DIM}")
    return complex(_ryser_gray(a))


def naive_permanent(matrix) -> complex:
    """Sum over all permutations; only for small reference checks."""
    a = np.asarray(matrix, dtype=complex)
    n = a.shape[0]
    return complex(sum(math.prod(a[i, s[i]] for i in range(n)) for s in itertools.permutations(range(n))))


def _repeat(occ: Occupation, positions: dict[int, int], what: str) -> list[int]:
    out = []
    for mode, count in occ:
        if mode not in positions:
            raise ContractViolationError(f"{what} mode {mode} is not covered by the map")
        out.extend([positions[mode]] * count)
    return out


def submatrix(U: LinearMap, in_occ: Occupation, out_occ: Occupation) -> np.ndarray:
    """Rows repeated by output occupation, columns by input occupation, both in mode order."""
    cols = _repeat(occupation(in_occ), {m: i for i, m in enumerate(U.input_modes)}, "input")
    rows = _repeat(occupation(out_occ), {m: i for i, m in enumerate(U.output_modes)}, "output")
    return U.matrix[np.ix_(rows, cols)]


def amplitude_via_permanent(U: LinearMap, in_occ: Occupation, out_occ: Occupation) -> complex:
    """<out| U |in> = Per(U_sub) / sqrt(prod in! prod out!)."""
    in_occ, out_occ = occupation(in_occ), occupation(out_occ)
    if total(in_occ) != total(out_occ):
        raise ContractViolationError("input and output photon numbers differ")
    norm = math.sqrt(math.prod(math.factorial(c) for _, c in in_occ + out_occ))
    return permanent(submatrix(U, in_occ, out_occ)) / norm


def _input_occ(circuit: Circuit) -> Occupation:
    return occupation((m, 1) for m in circuit.input_modes)


def herald_probability_via_permanent(
    circuit: Circuit, pattern: Sequence[int], output_occ: Occupation, U: LinearMap | None = None
) -> float:
    """|amplitude|^2 for the given outputs plus one photon per group at its pattern position.

    ``output_occ`` may include sink or other non-group modes; occupations that
    do not conserve the photon number give 0.
    """
    U = flatten(circuit) if U is None else U
    in_occ = _input_occ(circuit)
    herald = [(g.modes[p], 1) for g, p in zip(circuit.detector_groups, pattern)]
    full = occupation(list(occupation(output_occ)) + herald)
    if total(full) != total(in_occ):
        return 0.0
    if total(full) > MAX_PERMANENT_DIM:
        raise CapacityError(f"{total(full)} photons exceed the permanent limit {MAX_PERMANENT_DIM}")
    return abs(amplitude_via_permanent(U, in_occ, full)) ** 2


def output_occupations(modes: Sequence[int], photons: int) -> list[Occupation]:
    """All ways to place ``photons`` bosons on ``modes``, in canonical order."""
    return sorted(
        occupation((m, 1) for m in combo)
        for combo in itertools.combinations_with_replacement(sorted(modes), photons)
    )


def pattern_conditional_via_permanent(
    circuit: Circuit, pattern: Sequence[int], U: LinearMap | None = None
) -> dict[Occupation, complex]:
    """Unnormalized conditional amplitudes over output occupations for one herald pattern.

    Sinks must stay empty, so only non-group, non-sink modes receive the
    remaining photons.
    """
    U = flatten(circuit) if U is None else U
    in_occ = _input_occ(circuit)
    n_left = total(in_occ) - len(circuit.detector_groups)
    if total(in_occ) > MAX_PERMANENT_DIM:
        raise CapacityError(f"{total(in_occ)} photons exceed the permanent limit {MAX_PERMANENT_DIM}")
    excluded = circuit.detector_modes | circuit.sinks
    free = [m for m in range(len(circuit.registry)) if m not in excluded]
    herald = [(g.modes[p], 1) for g, p in zip(circuit.detector_groups, pattern)]
    out = {}
    for o in output_occupations(free, n_left):
        amp = amplitude_via_permanent(U, in_occ, occupation(list(o) + herald))
        if abs(amp) > 1e-15:
            out[o] = amp
    return out
