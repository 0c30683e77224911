"""Sparse bosonic Fock states and their linear-optical evolution.

States are stored as maps from canonical occupations to complex amplitudes.
Amplitudes are coefficients of *normalized* Fock kets |n1, n2, ...>, so the
squared norm is a plain sum of |amp|^2 and no factorial bookkeeping leaks
out of this module.

An occupation is a tuple of ``(mode, count)`` pairs sorted by mode with no
zero counts, e.g. ``((0, 2), (5, 1))`` for |2 photons in mode 0, 1 in mode 5>.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import ContractViolationError, ParameterDomainError, RegistryMismatchError

PRUNE_EPS = 1e-14
ISOMETRY_TOL = 1e-12

Occupation = tuple[tuple[int, int], ...]

MODE_KINDS = ("system", "detector", "sink")


def occupation(counts: Mapping[int, int] | Iterable[tuple[int, int]] = ()) -> Occupation:
    """Canonicalize a mode->count mapping (or pair iterable) into an Occupation."""
    merged: dict[int, int] = defaultdict(int)
    items = counts.items() if isinstance(counts, Mapping) else counts
    for mode, count in items:
        if count < 0:
            raise ParameterDomainError(f"negative photon count {count} on mode {mode}")
        merged[int(mode)] += int(count)
    return tuple(sorted((m, c) for m, c in merged.items() if c))


def total(occ: Occupation) -> int:
    return sum(c for _, c in occ)


def _sqrt_factorial_product(occ: Iterable[tuple[int, int]]) -> float:
    return math.sqrt(math.prod(math.factorial(c) for _, c in occ))


@dataclass(frozen=True)
class ModeDescriptor:
    id: int
    kind: str
    subsystem: int | None = None
    rail: int | None = None
    internal: int | None = None
    label: str = ""

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "subsystem": self.subsystem,
            "rail": self.rail,
            "internal": self.internal,
            "label": self.label,
        }


@dataclass(frozen=True)
class ModeRegistry:
    """Flat, densely indexed set of optical modes."""

    modes: tuple[ModeDescriptor, ...]
    _lookup: Mapping[tuple[int, int, int], int] = field(
        init=False, repr=False, compare=False, hash=False
    )

    def __post_init__(self):
        lookup = {}
        for i, mode in enumerate(self.modes):
            if mode.id != i:
                raise ContractViolationError(f"mode ids must be 0..M-1 in order; got {mode.id} at {i}")
            if mode.kind not in MODE_KINDS:
                raise ContractViolationError(f"unknown mode kind {mode.kind!r}")
            if mode.kind == "system":
                if None in (mode.subsystem, mode.rail, mode.internal):
                    raise ContractViolationError(f"system mode {i} needs subsystem, rail and internal")
                key = (mode.subsystem, mode.rail, mode.internal)
                if key in lookup:
                    raise ContractViolationError(f"duplicate system mode {key}")
                lookup[key] = i
        object.__setattr__(self, "_lookup", MappingProxyType(lookup))

    def __len__(self) -> int:
        return len(self.modes)

    def __iter__(self) -> Iterator[ModeDescriptor]:
        return iter(self.modes)

    def __getitem__(self, mode_id: int) -> ModeDescriptor:
        return self.modes[mode_id]

    def index(self, subsystem: int, rail: int, internal: int) -> int:
        try:
            return self._lookup[(subsystem, rail, internal)]
        except KeyError:
            raise RegistryMismatchError(
                f"no system mode (subsystem={subsystem}, rail={rail}, internal={internal})"
            ) from None

    def ids_of_kind(self, kind: str) -> tuple[int, ...]:
        return tuple(m.id for m in self.modes if m.kind == kind)

    def check_mode(self, mode_id: int) -> None:
        if not (isinstance(mode_id, (int, np.integer)) and 0 <= mode_id < len(self.modes)):
            raise RegistryMismatchError(f"mode {mode_id} is not in a registry of {len(self.modes)} modes")

    def extended(self, kind: str, count: int, label: str = "") -> "ModeRegistry":
        """Return a copy with ``count`` extra modes of ``kind`` appended."""
        start = len(self.modes)
        extra = tuple(
            ModeDescriptor(start + i, kind, label=f"{label or kind}{i}") for i in range(count)
        )
        return ModeRegistry(self.modes + extra)

    def to_json(self) -> list[dict]:
        return [m.to_json() for m in self.modes]

    @classmethod
    def from_json(cls, data: Sequence[Mapping]) -> "ModeRegistry":
        return cls(
            tuple(
                ModeDescriptor(
                    int(m["id"]),
                    m["kind"],
                    m.get("subsystem"),
                    m.get("rail"),
                    m.get("internal"),
                    m.get("label", ""),
                )
                for m in data
            )
        )


def make_registry(N: int, d: int, extra_sinks: int = 0) -> ModeRegistry:
    """Registry of N*d*d system modes, row-major in (subsystem, rail, internal), plus sinks."""
    if N < 1:
        raise ParameterDomainError(f"N must be >= 1, got {N}")
    if d < 2:
        raise ParameterDomainError(f"d must be >= 2, got {d}")
    if extra_sinks < 0:
        raise ParameterDomainError(f"extra_sinks must be >= 0, got {extra_sinks}")
    modes = []
    for j in range(N):
        for r in range(d):
            for s in range(d):
                modes.append(ModeDescriptor(len(modes), "system", j, r, s, f"a{j}[{r},{s}]"))
    for i in range(extra_sinks):
        modes.append(ModeDescriptor(len(modes), "sink", label=f"sink{i}"))
    return ModeRegistry(tuple(modes))


class FockState:
    """Fixed-photon-number pure state as a sparse map occupation -> amplitude.

    Instances are treated as immutable; every operation returns a new state.
    Terms are kept in ascending canonical order so iteration (and therefore
    every downstream floating-point reduction) is deterministic.
    """

    __slots__ = ("registry", "photon_count", "_terms")

    def __init__(
        self,
        registry: ModeRegistry,
        terms: Mapping[Occupation, complex] | Iterable[tuple[Occupation, complex]],
        photon_count: int | None = None,
        *,
        _trusted: bool = False,
    ):
        self.registry = registry
        items = terms.items() if isinstance(terms, Mapping) else terms
        if _trusted:
            self._terms = dict(items)
            self.photon_count = photon_count
            return
        cleaned: dict[Occupation, complex] = defaultdict(complex)
        n_modes = len(registry)
        for occ, amp in items:
            occ = occupation(occ)
            for m, _ in occ:
                if not 0 <= m < n_modes:
                    raise RegistryMismatchError(f"mode {m} outside registry of {n_modes} modes")
            cleaned[occ] += complex(amp)
        counts = {total(o) for o in cleaned}
        if photon_count is None:
            if len(counts) > 1:
                raise ContractViolationError(f"mixed photon numbers {sorted(counts)} in one state")
            photon_count = counts.pop() if counts else 0
        elif counts - {photon_count}:
            raise ContractViolationError(
                f"terms with photon numbers {sorted(counts)} in a {photon_count}-photon state"
            )
        for amp in cleaned.values():
            if not (math.isfinite(amp.real) and math.isfinite(amp.imag)):
                raise ContractViolationError("non-finite amplitude")
        self._terms = {o: a for o, a in sorted(cleaned.items()) if abs(a) >= PRUNE_EPS}
        self.photon_count = photon_count

    @property
    def terms(self) -> Mapping[Occupation, complex]:
        return MappingProxyType(self._terms)

    def __len__(self) -> int:
        return len(self._terms)

    def __repr__(self) -> str:
        head = ", ".join(f"{o}: {a:.4g}" for o, a in list(self._terms.items())[:4])
        more = ", ..." if len(self._terms) > 4 else ""
        return f"FockState(n={self.photon_count}, {{{head}{more}}})"

    def amplitude(self, occ: Occupation) -> complex:
        return self._terms.get(occupation(occ), 0j)

    def norm2(self) -> float:
        return math.fsum(abs(a) ** 2 for a in self._terms.values())

    def normalized(self) -> "FockState":
        n = math.sqrt(self.norm2())
        if n == 0:
            raise ContractViolationError("cannot normalize the zero state")
        return self * (1 / n)

    def _combine(self, other: "FockState", sign: float) -> "FockState":
        if other.registry is not self.registry and other.registry != self.registry:
            raise RegistryMismatchError("states live on different registries")
        if self._terms and other._terms and other.photon_count != self.photon_count:
            raise ContractViolationError("cannot add states with different photon numbers")
        acc = dict(self._terms)
        for occ, amp in other._terms.items():
            acc[occ] = acc.get(occ, 0j) + sign * amp
        n = self.photon_count if self._terms else other.photon_count
        return FockState(self.registry, acc, n)

    def __add__(self, other: "FockState") -> "FockState":
        return self._combine(other, 1.0)

    def __sub__(self, other: "FockState") -> "FockState":
        return self._combine(other, -1.0)

    def __mul__(self, scalar: complex) -> "FockState":
        scalar = complex(scalar)
        return FockState(
            self.registry,
            {o: a * scalar for o, a in self._terms.items() if abs(a * scalar) >= PRUNE_EPS},
            self.photon_count,
            _trusted=True,
        )

    __rmul__ = __mul__

    def __neg__(self) -> "FockState":
        return self * -1

    def max_abs_diff(self, other: "FockState") -> float:
        keys = set(self._terms) | set(other._terms)
        return max((abs(self.amplitude(k) - other.amplitude(k)) for k in keys), default=0.0)

    def allclose(self, other: "FockState", atol: float = 1e-12) -> bool:
        return self.max_abs_diff(other) <= atol

    def to_json(self) -> dict:
        return {
            "photon_count": self.photon_count,
            "terms": [
                {"occ": [list(p) for p in occ], "re": amp.real, "im": amp.imag}
                for occ, amp in self._terms.items()
            ],
        }

    @classmethod
    def from_json(cls, data: Mapping, registry: ModeRegistry) -> "FockState":
        terms = [
            (tuple(tuple(p) for p in t["occ"]), complex(t["re"], t["im"])) for t in data["terms"]
        ]
        return cls(registry, terms, data["photon_count"])


def vacuum(registry: ModeRegistry) -> FockState:
    return FockState(registry, {(): 1 + 0j}, 0, _trusted=True)


def create(state: FockState, weights: Mapping[int, complex]) -> FockState:
    """Apply the creation operator sum_m w_m a_m^dagger."""
    acc: dict[Occupation, complex] = defaultdict(complex)
    for mode in weights:
        state.registry.check_mode(mode)
    for occ, amp in state._terms.items():
        counts = dict(occ)
        for mode, w in weights.items():
            n = counts.get(mode, 0)
            counts[mode] = n + 1
            acc[tuple(sorted(counts.items()))] += amp * w * math.sqrt(n + 1)
            if n:
                counts[mode] = n
            else:
                del counts[mode]
    return FockState(state.registry, acc, state.photon_count + 1)


def create_photon(state: FockState, mode: int) -> FockState:
    """Apply a single creation operator a_mode^dagger (normalization folded in)."""
    return create(state, {mode: 1.0})


def annihilate(state: FockState, weights: Mapping[int, complex]) -> FockState:
    """Apply the annihilation operator sum_m w_m a_m."""
    acc: dict[Occupation, complex] = defaultdict(complex)
    for mode in weights:
        state.registry.check_mode(mode)
    for occ, amp in state._terms.items():
        counts = dict(occ)
        for mode, w in weights.items():
            n = counts.get(mode, 0)
            if not n:
                continue
            if n == 1:
                del counts[mode]
            else:
                counts[mode] = n - 1
            acc[tuple(sorted(counts.items()))] += amp * w * math.sqrt(n)
            counts[mode] = n
    return FockState(state.registry, acc, max(state.photon_count - 1, 0))


@dataclass(frozen=True, eq=False)
class LinearMap:
    """Single-photon transfer matrix a_p^dagger -> sum_q matrix[q, p] a_q^dagger.

    Columns are indexed by ``input_modes``, rows by ``output_modes``. Modes not
    listed as inputs are left untouched. The matrix must be an isometry.
    """

    input_modes: tuple[int, ...]
    output_modes: tuple[int, ...]
    matrix: np.ndarray

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=complex)
        ins, outs = tuple(int(m) for m in self.input_modes), tuple(int(m) for m in self.output_modes)
        if mat.shape != (len(outs), len(ins)):
            raise ContractViolationError(
                f"matrix shape {mat.shape} does not match {len(outs)} outputs x {len(ins)} inputs"
            )
        if len(set(ins)) != len(ins) or len(set(outs)) != len(outs):
            raise ContractViolationError("repeated mode in a LinearMap binding")
        err = np.max(np.abs(mat.conj().T @ mat - np.eye(len(ins)))) if ins else 0.0
        if err > ISOMETRY_TOL:
            raise ContractViolationError(f"map is not an isometry (max deviation {err:.3g})")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "input_modes", ins)
        object.__setattr__(self, "output_modes", outs)

    @classmethod
    def identity(cls, modes: Sequence[int]) -> "LinearMap":
        return cls(tuple(modes), tuple(modes), np.eye(len(modes)))

    def embedded(self, n_modes: int) -> np.ndarray:
        """Full n_modes x n_modes matrix with identity on untouched modes."""
        full = np.eye(n_modes, dtype=complex)
        for i, p in enumerate(self.input_modes):
            full[:, p] = 0
            for j, q in enumerate(self.output_modes):
                full[q, p] = self.matrix[j, i]
        return full


def _expand(
    moving: Occupation, lmap: LinearMap, in_pos: Mapping[int, int], columns: Sequence[list]
) -> list[tuple[Occupation, complex]]:
    """Normalized transition amplitudes <out|U|moving> for photons on input modes only."""
    n_out = len(lmap.output_modes)
    poly: dict[tuple[int, ...], complex] = {(0,) * n_out: 1 + 0j}
    for mode, count in moving:
        p = in_pos[mode]
        for _ in range(count):
            nxt: dict[tuple[int, ...], complex] = defaultdict(complex)
            for mono, coeff in poly.items():
                for q, u in columns[p]:
                    key = list(mono)
                    key[q] += 1
                    nxt[tuple(key)] += coeff * u
            poly = nxt
    inv_norm = 1.0 / _sqrt_factorial_product(moving)
    out_modes = lmap.output_modes
    result = []
    for mono, coeff in poly.items():
        if coeff == 0:
            continue
        pairs = tuple(sorted((out_modes[q], c) for q, c in enumerate(mono) if c))
        result.append((pairs, coeff * inv_norm * _sqrt_factorial_product(pairs)))
    return result


def apply_linear(state: FockState, lmap: LinearMap) -> FockState:
    """Evolve ``state`` under the linear map, merging and pruning the result.

    Expansion is photon-by-photon with merging after each photon, and the
    expansion of each distinct input sub-occupation is computed once.
    """
    n_modes = len(state.registry)
    for m in lmap.input_modes + lmap.output_modes:
        if not 0 <= m < n_modes:
            raise RegistryMismatchError(f"map touches mode {m} outside registry of {n_modes}")
    in_pos = {m: i for i, m in enumerate(lmap.input_modes)}
    columns = [
        [(int(q), complex(lmap.matrix[q, p])) for q in np.flatnonzero(lmap.matrix[:, p])]
        for p in range(len(lmap.input_modes))
    ]
    passive_outputs = set(lmap.output_modes) - set(lmap.input_modes)
    cache: dict[Occupation, list[tuple[Occupation, complex]]] = {}
    acc: dict[Occupation, complex] = defaultdict(complex)
    for occ, amp in state._terms.items():
        moving = tuple(p for p in occ if p[0] in in_pos)
        if not moving:
            acc[occ] += amp
            continue
        rest = tuple(p for p in occ if p[0] not in in_pos)
        expansion = cache.get(moving)
        if expansion is None:
            expansion = cache[moving] = _expand(moving, lmap, in_pos, columns)
        clash = passive_outputs and any(m in passive_outputs for m, _ in rest)
        for out, t_amp in expansion:
            if not clash:
                acc[tuple(sorted(rest + out))] += amp * t_amp
                continue
            # output-only modes already holding photons: merge counts and fix normalization
            counts = dict(rest)
            factor = 1.0
            for m, c in out:
                n = counts.get(m, 0)
                factor *= math.sqrt(math.comb(n + c, c))
                counts[m] = n + c
            acc[tuple(sorted(counts.items()))] += amp * t_amp * factor
    pruned = {o: a for o, a in sorted(acc.items()) if abs(a) >= PRUNE_EPS}
    return FockState(state.registry, pruned, state.photon_count, _trusted=True)


def inner_product(a: FockState, b: FockState) -> complex:
    """<a|b> over the Fock basis."""
    if a.registry is not b.registry and a.registry != b.registry:
        raise RegistryMismatchError("inner product of states on different registries")
    if a.photon_count != b.photon_count:
        return 0j
    small, large = (a._terms, b._terms) if len(a) <= len(b) else (b._terms, a._terms)
    acc = 0j
    for occ in small:
        if occ in large:
            acc += a._terms[occ].conjugate() * b._terms[occ]
    return acc


def marginal_project(
    state: FockState, fixed: Occupation, over: Iterable[int]
) -> tuple[FockState, float]:
    """Project the modes in ``over`` onto occupation ``fixed``.

    Returns the unnormalized conditional state on the remaining modes and its
    squared norm (the outcome probability when ``state`` is normalized).
    """
    over = frozenset(over)
    fixed = occupation(fixed)
    for m in over:
        state.registry.check_mode(m)
    if any(m not in over for m, _ in fixed):
        raise ContractViolationError("fixed occupation has support outside the projected modes")
    kept: dict[Occupation, complex] = {}
    for occ, amp in state._terms.items():
        if tuple(p for p in occ if p[0] in over) == fixed:
            kept[tuple(p for p in occ if p[0] not in over)] = amp
    cond = FockState(state.registry, kept, state.photon_count - total(fixed), _trusted=True)
    return cond, cond.norm2()
