"""Gate constructors and a small circuit IR binding gates to registry modes.

Every gate is a :class:`~quditghz.fock.LinearMap` on an explicit list of mode
ids.  Block gates (CN_d and its inverse) take their binding in rail-major
order, ``binding[r * d + s]`` being rail ``r``, internal state ``s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ContractViolationError, ParameterDomainError, RegistryMismatchError
from .fock import FockState, LinearMap, ModeRegistry, apply_linear

GATE_KINDS = ("CN_d", "CN_d_inverse", "F_d", "X_d", "BS", "Rewire", "FourierPort")


def _check_binding(binding: Sequence[int], size: int, what: str) -> tuple[int, ...]:
    binding = tuple(int(m) for m in binding)
    if len(binding) != size:
        raise ContractViolationError(f"{what} needs {size} modes, got {len(binding)}")
    if len(set(binding)) != size:
        raise ContractViolationError(f"{what} binding repeats a mode: {binding}")
    return binding


def _check_d(d: int) -> None:
    if not isinstance(d, (int, np.integer)) or d < 2:
        raise ParameterDomainError(f"d must be an integer >= 2, got {d!r}")


def fourier_matrix(d: int) -> np.ndarray:
    """Unitary with column s equal to (1/sqrt d) * (w^(s r))_r, w = exp(2 pi i / d)."""
    r = np.arange(d)
    # reduce the exponent mod d before exponentiating to keep the phases exact
    return np.exp(2j * np.pi * (np.outer(r, r) % d) / d) / math.sqrt(d)


def _block_permutation(d: int, shift: int) -> np.ndarray:
    perm = np.zeros((d * d, d * d))
    for r in range(d):
        for s in range(d):
            perm[((r + shift * s) % d) * d + s, r * d + s] = 1.0
    return perm


def gate_cn_d(d: int, binding: Sequence[int]) -> LinearMap:
    """Rail r, internal s -> rail (r + s) mod d, same internal s."""
    _check_d(d)
    binding = _check_binding(binding, d * d, "CN_d")
    return LinearMap(binding, binding, _block_permutation(d, 1))


def gate_cn_d_inverse(d: int, binding: Sequence[int]) -> LinearMap:
    """Rail r, internal s -> rail (r - s) mod d."""
    _check_d(d)
    binding = _check_binding(binding, d * d, "CN_d_inverse")
    return LinearMap(binding, binding, _block_permutation(d, -1))


def gate_fourier(d: int, binding: Sequence[int]) -> LinearMap:
    _check_d(d)
    binding = _check_binding(binding, d, "F_d")
    return LinearMap(binding, binding, fourier_matrix(d))


def gate_x_d(d: int, binding: Sequence[int]) -> LinearMap:
    """Cyclic shift |k> -> |k+1 mod d> on an internal block."""
    _check_d(d)
    binding = _check_binding(binding, d, "X_d")
    return LinearMap(binding, binding, np.roll(np.eye(d), 1, axis=0))


def bs_matrix(t: float) -> np.ndarray:
    if not 0.0 <= t <= 1.0 or math.isnan(t):
        raise ParameterDomainError(f"transmissivity t must lie in [0, 1], got {t}")
    r = math.sqrt(max(0.0, 1.0 - t * t))
    return np.array([[t, -r], [r, t]], dtype=float)


def gate_bs(t: float, mode: int, sink: int) -> LinearMap:
    """a_mode^dag -> t a_mode^dag + sqrt(1 - t^2) a_sink^dag, completed to a 2x2 unitary."""
    binding = _check_binding((mode, sink), 2, "BS")
    return LinearMap(binding, binding, bs_matrix(t))


def _check_permutation(source: Sequence[int], target: Sequence[int]) -> tuple[tuple[int, ...], tuple[int, ...]]:
    source = tuple(int(m) for m in source)
    target = tuple(int(m) for m in target)
    if len(source) != len(target) or len(set(source)) != len(source) or set(source) != set(target):
        raise ContractViolationError("rewire permutation must be a bijection on its mode subset")
    return source, target


@dataclass(frozen=True)
class GateSpec:
    """One gate application.  ``params`` holds ``t`` for BS and ``permutation`` for Rewire.

    For a Rewire, ``params["permutation"][i]`` is the image of ``binding[i]``.
    """

    kind: str
    d: int
    binding: tuple[int, ...]
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ContractViolationError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "binding", tuple(int(m) for m in self.binding))
        # build once to validate binding sizes and parameters early
        self.to_linear_map()

    def to_linear_map(self) -> LinearMap:
        return self._linear_map

    @cached_property
    def _linear_map(self) -> LinearMap:
        kind = self.kind
        if kind == "CN_d":
            return gate_cn_d(self.d, self.binding)
        if kind == "CN_d_inverse":
            return gate_cn_d_inverse(self.d, self.binding)
        if kind in ("F_d", "FourierPort"):
            return gate_fourier(self.d, self.binding)
        if kind == "X_d":
            return gate_x_d(self.d, self.binding)
        if kind == "BS":
            if len(self.binding) != 2:
                raise ContractViolationError("BS binding is (mode, sink)")
            return gate_bs(float(self.params["t"]), *self.binding)
        source, target = _check_permutation(self.binding, self.params["permutation"])
        pos = {m: i for i, m in enumerate(source)}
        perm = np.zeros((len(source), len(source)))
        for i, dst in enumerate(target):
            perm[pos[dst], i] = 1.0
        return LinearMap(source, source, perm)

    def to_json(self) -> dict:
        out: dict = {"kind": self.kind, "d": self.d, "binding": list(self.binding)}
        if self.kind == "BS":
            out["t"] = float(self.params["t"])
        if self.kind == "Rewire":
            out["permutation"] = [int(m) for m in self.params["permutation"]]
        return out

    @classmethod
    def from_json(cls, data: Mapping) -> "GateSpec":
        params: dict = {}
        if "t" in data:
            params["t"] = float(data["t"])
        if "permutation" in data:
            params["permutation"] = tuple(int(m) for m in data["permutation"])
        return cls(data["kind"], int(data["d"]), tuple(data["binding"]), params)


def gate_rewire(permutation: Mapping[int, int] | Iterable[tuple[int, int]], d: int = 0) -> GateSpec:
    """Rewire gate sending each source mode to its image; must be a bijection on its support."""
    items = list(permutation.items() if isinstance(permutation, Mapping) else permutation)
    source, target = _check_permutation([a for a, _ in items], [b for _, b in items])
    return GateSpec("Rewire", d, source, {"permutation": target})


@dataclass(frozen=True)
class DetectorGroup:
    """Modes of one Fourier-basis detector; a valid herald puts exactly one photon here."""

    modes: tuple[int, ...]
    basis: str = "fourier"
    required_count: int = 1

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(int(m) for m in self.modes))
        if self.required_count != 1:
            raise ContractViolationError("detector groups require exactly one photon")
        if len(set(self.modes)) != len(self.modes) or not self.modes:
            raise ContractViolationError("detector group modes must be distinct and non-empty")

    def to_json(self) -> dict:
        return {"modes": list(self.modes), "basis": self.basis, "required_count": self.required_count}


@dataclass(frozen=True)
class Circuit:
    """Ordered gate list plus the herald declaration.

    ``input_modes`` carry one photon each at the start; ``output_wires[j][k]``
    is the mode holding subsystem j's photon when its logical value is k.
    """

    registry: ModeRegistry
    ops: tuple[GateSpec, ...] = ()
    detector_groups: tuple[DetectorGroup, ...] = ()
    sinks: frozenset[int] = frozenset()
    N: int = 0
    d: int = 0
    input_modes: tuple[int, ...] = ()
    output_wires: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))
        object.__setattr__(self, "detector_groups", tuple(self.detector_groups))
        object.__setattr__(self, "sinks", frozenset(int(m) for m in self.sinks))
        object.__setattr__(self, "input_modes", tuple(int(m) for m in self.input_modes))
        object.__setattr__(self, "output_wires", tuple(tuple(int(m) for m in w) for w in self.output_wires))
        n = len(self.registry)
        touched = [m for op in self.ops for m in op.binding]
        touched += [m for g in self.detector_groups for m in g.modes]
        touched += list(self.sinks) + list(self.input_modes)
        touched += [m for w in self.output_wires for m in w]
        for m in touched:
            if not 0 <= m < n:
                raise RegistryMismatchError(f"circuit references mode {m} outside the registry")
        seen: set[int] = set()
        for g in self.detector_groups:
            if seen & set(g.modes):
                raise ContractViolationError("detector groups overlap")
            seen |= set(g.modes)
        outputs = {m for w in self.output_wires for m in w}
        if seen & outputs or seen & self.sinks or outputs & self.sinks:
            raise ContractViolationError("detector, sink and output modes must be disjoint")

    @property
    def detector_modes(self) -> frozenset[int]:
        return frozenset(m for g in self.detector_groups for m in g.modes)

    def to_json(self) -> dict:
        return {
            "N": self.N,
            "d": self.d,
            "registry": self.registry.to_json(),
            "ops": [op.to_json() for op in self.ops],
            "detector_groups": [g.to_json() for g in self.detector_groups],
            "sinks": sorted(self.sinks),
            "input_modes": list(self.input_modes),
            "output_wires": [list(w) for w in self.output_wires],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "Circuit":
        return cls(
            registry=ModeRegistry.from_json(data["registry"]),
            ops=tuple(GateSpec.from_json(op) for op in data["ops"]),
            detector_groups=tuple(
                DetectorGroup(tuple(g["modes"]), g.get("basis", "fourier"), g.get("required_count", 1))
                for g in data["detector_groups"]
            ),
            sinks=frozenset(data.get("sinks", ())),
            N=int(data.get("N", 0)),
            d=int(data.get("d", 0)),
            input_modes=tuple(data.get("input_modes", ())),
            output_wires=tuple(tuple(w) for w in data.get("output_wires", ())),
        )


def flatten(circuit: Circuit) -> LinearMap:
    """Product of all gate maps embedded in the full mode space (later gates on the left)."""
    n = len(circuit.registry)
    total = np.eye(n, dtype=complex)
    for op in circuit.ops:
        lmap = op.to_linear_map()
        ins = list(lmap.input_modes)
        if lmap.output_modes != lmap.input_modes:
            raise ContractViolationError(f"{op.kind} maps onto modes outside its binding")
        # only the touched rows change: total[ins] <- U_block @ total[ins]
        total[ins, :] = lmap.matrix @ total[ins, :]
    modes = tuple(range(n))
    return LinearMap(modes, modes, total)


def run_circuit(state: FockState, circuit: Circuit) -> FockState:
    """Apply every op of ``circuit`` in order."""
    if state.registry != circuit.registry:
        raise RegistryMismatchError("state and circuit use different registries")
    for op in circuit.ops:
        state = apply_linear(state, op.to_linear_map())
    return state
