"""Herald outcome enumeration, feed-forward correction and success probabilities.

A herald pattern assigns to every detector group the position (Fourier
index) of its single photon.  Patterns are enumerated in lexicographic
order over the groups as declared by the circuit.

Two routes produce the per-pattern conditional amplitudes:

* :func:`enumerate_outcomes` reads them off a fully evolved state.
* :func:`herald_report` runs a pruned simulation: constraints ("exactly one
  photon in this group", "no photon in this sink") are imposed as soon as the
  last gate touching the constrained modes has been applied, and group-local
  gates at the tail of the circuit (the detection Fourier layer) are folded
  into a small per-group unitary applied to a dense pattern tensor at the
  end.  This avoids materializing the full output state.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .fock import FockState, LinearMap, Occupation, apply_linear
from .gates import Circuit, GateSpec
from .scheme import circuit_input_state, psuc_formula

FID_EPS = 1e-9
PROB_FLOOR = 1e-24
CLOSED_FORM_RTOL = 1e-9


@dataclass(frozen=True)
class Correction:
    """Local feed-forward: X_d^shifts[j] then diag(phases[j]) on subsystem j."""

    phases: tuple[tuple[complex, ...], ...]
    shifts: tuple[int, ...]

    @classmethod
    def identity(cls, N: int, d: int) -> "Correction":
        return cls(tuple((1 + 0j,) * d for _ in range(N)), (0,) * N)

    def to_json(self) -> dict:
        return {
            "shifts": list(self.shifts),
            "phases": [[[p.real, p.imag] for p in row] for row in self.phases],
        }


def correction_map(correction: Correction, output_wires: Sequence[Sequence[int]]) -> LinearMap:
    """The correction as a linear map on the output wires."""
    modes = tuple(m for w in output_wires for m in w)
    n = len(modes)
    mat = np.zeros((n, n), dtype=complex)
    base = 0
    for j, wires in enumerate(output_wires):
        d = len(wires)
        for b in range(d):
            a = (b + correction.shifts[j]) % d
            mat[base + a, base + b] = correction.phases[j][a]
        base += d
    return LinearMap(modes, modes, mat)


@dataclass
class HeraldOutcome:
    pattern: tuple[int, ...]
    probability: float
    corrected_fidelity: float = 0.0
    correction: Correction | None = None
    conditional: FockState | None = None

    def to_json(self) -> dict:
        return {
            "pattern": list(self.pattern),
            "probability": self.probability,
            "corrected_fidelity": self.corrected_fidelity,
            "correction": self.correction.to_json() if self.correction else None,
        }


@dataclass
class HeraldReport:
    N: int
    d: int
    p_single: float
    p_aggregate: float
    eq7_value: float | None
    eq7_match: str
    outcomes: list[HeraldOutcome]
    reference: HeraldOutcome
    failure_probability: float
    t: float | None = None
    target: tuple[complex, ...] = ()

    @property
    def total_probability(self) -> float:
        return math.fsum(o.probability for o in self.outcomes) + self.failure_probability

    def outcome(self, pattern: Sequence[int]) -> HeraldOutcome | None:
        pattern = tuple(pattern)
        for o in self.outcomes:
            if o.pattern == pattern:
                return o
        return None

    def to_json(self) -> dict:
        return {
            "N": self.N,
            "d": self.d,
            "t": self.t,
            "p_single": self.p_single,
            "p_aggregate": self.p_aggregate,
            "eq7_value": self.eq7_value,
            "eq7_match": self.eq7_match,
            "failure_probability": self.failure_probability,
            "reference_fidelity": self.reference.corrected_fidelity,
            "outcomes": [o.to_json() for o in self.outcomes],
        }


# ---------------------------------------------------------------- corrections


def _logical_occ(output_wires, values) -> Occupation:
    return tuple(sorted((w[v], 1) for w, v in zip(output_wires, values)))


def _target_vector(target, output_wires, d) -> np.ndarray:
    if isinstance(target, FockState):
        return np.array([target.amplitude(_logical_occ(output_wires, (k,) * len(output_wires))) for k in range(d)])
    x = np.ones(d, dtype=complex) if target is None else np.asarray(target, dtype=complex)
    if x.shape != (d,):
        raise ValueError(f"target vector must have length {d}")
    return x


def _shift_table(N: int, d: int) -> list[tuple[tuple[int, ...], np.ndarray]]:
    """For each shift vector p, the flat logical indices (k - p_1, ..., k - p_N) for k = 0..d-1."""
    out = []
    for p in itertools.product(range(d), repeat=N):
        idx = np.array(
            [np.ravel_multi_index(tuple((k - pj) % d for pj in p), (d,) * N) for k in range(d)]
        )
        out.append((p, idx))
    return out


def _best_shifts(babs: np.ndarray, xabs: np.ndarray, table) -> tuple[np.ndarray, np.ndarray]:
    """Per row of ``babs`` (patterns x d^N logical amplitudes), the best phase-only overlap.

    Ties keep the lexicographically smallest shift vector.
    """
    best = np.full(babs.shape[0], -1.0)
    which = np.zeros(babs.shape[0], dtype=np.int64)
    for i, (_, idx) in enumerate(table):
        score = babs[:, idx] @ xabs
        better = score > best * (1 + 1e-12) + 1e-300
        best = np.where(better, score, best)
        which = np.where(better, i, which)
    return best, which


def _phases_for(x: np.ndarray, c: np.ndarray, N: int, d: int, shifts: tuple[int, ...]) -> Correction:
    phases0 = []
    for k in range(d):
        if abs(x[k]) > 0 and abs(c[k]) > 0:
            phases0.append(complex((x[k] / abs(x[k])) * np.conj(c[k] / abs(c[k]))))
        else:
            phases0.append(1 + 0j)
    rows = [tuple(phases0)] + [(1 + 0j,) * d for _ in range(N - 1)]
    return Correction(tuple(rows), tuple(int(s) for s in shifts))


def solve_correction(
    conditional: FockState, target: FockState | Sequence[complex] | None, output_wires
) -> tuple[Correction, float]:
    """Best local phase (plus per-subsystem cyclic shift) correction and its fidelity.

    Only terms with one photon per subsystem on its output wires can overlap the
    GHZ-type target; everything else only enters through the norm.  All
    relative phase goes onto subsystem 0.
    """
    output_wires = tuple(tuple(w) for w in output_wires)
    N, d = len(output_wires), len(output_wires[0])
    x = _target_vector(target, output_wires, d)
    norm2 = conditional.norm2()
    if norm2 == 0 or not np.any(x):
        return Correction.identity(N, d), 0.0
    logical = np.array(
        [conditional.amplitude(_logical_occ(output_wires, a)) for a in itertools.product(range(d), repeat=N)]
    )
    table = _shift_table(N, d)
    best, which = _best_shifts(np.abs(logical)[None, :], np.abs(x), table)
    shifts, idx = table[int(which[0])]
    correction = _phases_for(x, logical[idx], N, d, shifts)
    fidelity = float(best[0] ** 2 / (np.vdot(x, x).real * norm2))
    return correction, min(fidelity, 1.0)


# ------------------------------------------------------------ pattern tables


@dataclass
class _PatternTable:
    """Conditional amplitudes A[o][pattern] for every output occupation o."""

    group_sizes: tuple[int, ...]
    occs: list[Occupation]
    amps: list[np.ndarray]
    failure: float

    @property
    def n_patterns(self) -> int:
        return int(np.prod(self.group_sizes))


def _group_index(circuit: Circuit) -> dict[int, tuple[int, int]]:
    return {m: (g, i) for g, grp in enumerate(circuit.detector_groups) for i, m in enumerate(grp.modes)}


def _table_from_state(state: FockState, circuit: Circuit, fold: Sequence[np.ndarray] | None = None) -> _PatternTable:
    """Bucket the terms of ``state`` by output occupation and herald pattern.

    Terms with the wrong photon count in a group or any photon in a sink are
    counted as failure.  ``fold`` optionally supplies per-group unitaries that
    still have to act on the detector photons.
    """
    gpos = _group_index(circuit)
    sizes = tuple(len(g.modes) for g in circuit.detector_groups)
    n_groups = len(sizes)
    sinks = circuit.sinks
    buckets: dict[Occupation, tuple[list[int], list[complex]]] = {}
    failure = 0.0
    strides = [int(np.prod(sizes[g + 1 :])) for g in range(n_groups)]
    for occ, amp in state.terms.items():
        seen = [0] * n_groups
        flat = 0
        ok = True
        out = []
        for m, c in occ:
            if m in sinks:
                ok = False
                break
            hit = gpos.get(m)
            if hit is None:
                out.append((m, c))
                continue
            g, i = hit
            seen[g] += c
            if seen[g] > 1:
                ok = False
                break
            flat += i * strides[g]
        if not ok or (n_groups and min(seen) != 1):
            failure += abs(amp) ** 2
            continue
        bucket = buckets.setdefault(tuple(out), ([], []))
        bucket[0].append(flat)
        bucket[1].append(amp)
    occs = sorted(buckets)
    amps = []
    n_pat = int(np.prod(sizes))
    for o in occs:
        flat_idx, vals = buckets[o]
        vec = np.zeros(n_pat, dtype=complex)
        np.add.at(vec, np.asarray(flat_idx, dtype=np.int64), np.asarray(vals))
        if fold is not None:
            tensor = vec.reshape(sizes)
            for g, V in enumerate(fold):
                tensor = np.moveaxis(np.tensordot(V, tensor, axes=([1], [g])), 0, g)
            vec = tensor.reshape(-1)
        amps.append(vec)
    return _PatternTable(sizes, occs, amps, failure)


# ---------------------------------------------------------- pruned simulation


def _fold_plan(circuit: Circuit) -> tuple[list[GateSpec], list[np.ndarray]]:
    """Split off trailing group-local ops into per-group unitaries."""
    ops = list(circuit.ops)
    folded_idx: set[int] = set()
    fold = []
    for grp in circuit.detector_groups:
        gmodes = set(grp.modes)
        pos = {m: i for i, m in enumerate(grp.modes)}
        mine = []
        for i in range(len(ops) - 1, -1, -1):
            binding = set(ops[i].binding)
            if not binding & gmodes:
                continue
            if not binding <= gmodes:
                break
            mine.append(i)
        V = np.eye(len(grp.modes), dtype=complex)
        for i in reversed(mine):
            lmap = ops[i].to_linear_map()
            local = [pos[m] for m in lmap.input_modes]
            V[local, :] = lmap.matrix @ V[local, :]
        folded_idx.update(mine)
        fold.append(V)
    return [op for i, op in enumerate(ops) if i not in folded_idx], fold


def _prune(state: FockState, modes: frozenset[int], count: int) -> tuple[FockState, float]:
    kept = {}
    lost = 0.0
    for occ, amp in state.terms.items():
        n = 0
        for m, c in occ:
            if m in modes:
                n += c
        if n == count:
            kept[occ] = amp
        else:
            lost += abs(amp) ** 2
    return FockState(state.registry, kept, state.photon_count, _trusted=True), lost


def simulate_heralded(circuit: Circuit, state: FockState | None = None) -> tuple[FockState, list[np.ndarray], float]:
    """Pruned simulation; returns the surviving state, the folded group unitaries and the pruned mass."""
    if state is None:
        state = circuit_input_state(circuit)
    ops, fold = _fold_plan(circuit)
    constraints = [(frozenset(g.modes), 1) for g in circuit.detector_groups]
    constraints += [(frozenset([m]), 0) for m in sorted(circuit.sinks)]

    def closing(modes):
        last = -1
        for i, op in enumerate(ops):
            if modes.intersection(op.binding):
                last = i
        return last

    order = sorted(((closing(m), k) for k, (m, _) in enumerate(constraints)))
    emitted = [False] * len(ops)
    lost = 0.0
    for close, k in order:
        live = set(constraints[k][0])
        needed = []
        for i in range(close, -1, -1):
            if not emitted[i] and live.intersection(ops[i].binding):
                needed.append(i)
                live.update(ops[i].binding)
        for i in reversed(needed):
            state = apply_linear(state, ops[i].to_linear_map())
            emitted[i] = True
        state, dropped = _prune(state, *constraints[k])
        lost += dropped
    for i, op in enumerate(ops):
        if not emitted[i]:
            state = apply_linear(state, op.to_linear_map())
    return state, fold, lost


# -------------------------------------------------------------- assembling


def _closed_form_match(p_single: float, p_aggregate: float, closed: float | None) -> str:
    if closed is None or closed == 0:
        return "neither"
    if abs(p_single - closed) <= CLOSED_FORM_RTOL * closed:
        return "single"
    if abs(p_aggregate - closed) <= CLOSED_FORM_RTOL * closed:
        return "aggregate"
    return "neither"


def _conditional(circuit: Circuit, table: _PatternTable, flat: int, prob: float) -> FockState:
    n_out = len(circuit.output_wires)
    terms = {o: complex(a[flat]) / math.sqrt(prob) for o, a in zip(table.occs, table.amps) if abs(a[flat]) > 0}
    photons = sum(c for _, c in table.occs[0]) if table.occs else n_out
    return FockState(circuit.registry, terms, photons)


def _assemble(circuit: Circuit, table: _PatternTable, target, t, keep_conditionals: bool) -> HeraldReport:
    N, d = len(circuit.output_wires), circuit.d
    wires = circuit.output_wires
    n_pat = table.n_patterns
    probs = np.zeros(n_pat)
    for a in table.amps:
        probs += a.real**2 + a.imag**2
    logical_cols = {
        _logical_occ(wires, a): i for i, a in enumerate(itertools.product(range(d), repeat=N))
    }
    logical = np.zeros((n_pat, d**N), dtype=complex)
    for o, a in zip(table.occs, table.amps):
        col = logical_cols.get(o)
        if col is not None:
            logical[:, col] = a
    x = _target_vector(target, wires, d)
    xnorm2 = float(np.vdot(x, x).real)
    shift_table = _shift_table(N, d)
    best, which = _best_shifts(np.abs(logical), np.abs(x), shift_table)
    with np.errstate(divide="ignore", invalid="ignore"):
        fid = np.where(probs > 0, best**2 / (xnorm2 * probs), 0.0)
    fid = np.minimum(fid, 1.0)

    idx_all = np.array([idx for _, idx in shift_table])
    live = np.flatnonzero(probs > PROB_FLOOR)
    chosen = np.take_along_axis(logical[live], idx_all[which[live]], axis=1)
    mag = np.abs(chosen)
    xph = np.where(np.abs(x) > 0, x / np.where(np.abs(x) > 0, np.abs(x), 1), 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ph = np.where((mag > 0) & (np.abs(x) > 0), xph * np.conj(chosen / mag), 1.0 + 0j)
    ones = ((1 + 0j,) * d,) * (N - 1)
    outcomes = []
    reference = None
    for row, flat in enumerate(live):
        pattern = tuple(int(v) for v in np.unravel_index(flat, table.group_sizes))
        corr = Correction((tuple(ph[row].tolist()),) + ones, shift_table[int(which[flat])][0])
        cond = _conditional(circuit, table, flat, probs[flat]) if keep_conditionals or flat == 0 else None
        outcome = HeraldOutcome(pattern, float(probs[flat]), float(fid[flat]), corr, cond)
        outcomes.append(outcome)
        if flat == 0:
            reference = outcome
    if reference is None:
        reference = HeraldOutcome((0,) * len(table.group_sizes), 0.0, 0.0, Correction.identity(N, d))
    p_single = reference.probability
    p_aggregate = math.fsum(o.probability for o in outcomes if o.corrected_fidelity >= 1 - FID_EPS)
    try:
        closed = psuc_formula(circuit.N, circuit.d)
    except ValueError:
        closed = None
    return HeraldReport(
        N=circuit.N,
        d=d,
        p_single=p_single,
        p_aggregate=p_aggregate,
        eq7_value=closed,
        eq7_match=_closed_form_match(p_single, p_aggregate, closed),
        outcomes=outcomes,
        reference=reference,
        failure_probability=table.failure,
        t=t,
        target=tuple(complex(v) for v in x),
    )


def enumerate_outcomes(state: FockState, circuit: Circuit) -> list[HeraldOutcome]:
    """Outcomes of a fully evolved state, with normalized conditionals (no corrections attached)."""
    table = _table_from_state(state, circuit)
    outcomes = []
    for flat in range(table.n_patterns):
        prob = math.fsum(abs(a[flat]) ** 2 for a in table.amps)
        if prob > PROB_FLOOR:
            pattern = tuple(int(v) for v in np.unravel_index(flat, table.group_sizes))
            outcomes.append(HeraldOutcome(pattern, prob, conditional=_conditional(circuit, table, flat, prob)))
    return outcomes


def failure_probability(state: FockState, circuit: Circuit) -> float:
    """Mass of events with a group not holding exactly one photon or a sink holding any."""
    return _table_from_state(state, circuit).failure


def herald_report(
    circuit,
    t: float | None = None,
    target: FockState | Sequence[complex] | None = None,
    *,
    state: FockState | None = None,
    keep_conditionals: bool = False,
) -> HeraldReport:
    """Full pipeline: simulate, enumerate patterns, correct, and sum success probabilities.

    ``circuit`` may be a plan from :func:`build_ghz_circuit`.  ``target`` is a
    generalized GHZ amplitude vector (or state) on the output wires, uniform by
    default.  Passing ``state`` skips simulation and reads outcomes off that
    fully evolved state instead.
    """
    if hasattr(circuit, "circuit"):
        t = circuit.t if t is None else t
        circuit = circuit.circuit
    if state is not None:
        table = _table_from_state(state, circuit)
    else:
        survived, fold, lost = simulate_heralded(circuit)
        table = _table_from_state(survived, circuit, fold)
        table.failure += lost
    return _assemble(circuit, table, target, t, keep_conditionals)
