"""Compile a dual (path x internal state) circuit to a purely path-encoded one.

Every (subsystem, rail, internal) mode gets its own path.  Paths are numbered
internal-major inside a subsystem (``j*d*d + s*d + r``) so the relabeling is
a genuine permutation rather than the identity.  Internal-state gates then
become either path permutations (CN_d, its inverse, X_d) or a d-port Fourier
splitter (F_d); beamsplitters and rewirings carry over unchanged apart from
the relabeling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import ContractViolationError
from .fock import LinearMap, ModeDescriptor, ModeRegistry
from .gates import Circuit, DetectorGroup, GateSpec, gate_rewire
from .scheme import GhzCircuitPlan

PATH_KINDS = ("Rewire", "FourierPort", "BS")


@dataclass(frozen=True)
class MultirailCircuit:
    circuit: Circuit
    path_of: Mapping[int, int]

    @property
    def registry(self) -> ModeRegistry:
        return self.circuit.registry

    @property
    def ops(self) -> tuple[GateSpec, ...]:
        return self.circuit.ops

    @property
    def gate_count(self) -> int:
        return len(self.circuit.ops)

    @property
    def mode_count(self) -> int:
        return len(self.circuit.registry)


def _path_registry(registry: ModeRegistry, d: int) -> tuple[ModeRegistry, dict[int, int]]:
    path_of: dict[int, int] = {}
    system = [m for m in registry if m.kind == "system"]
    for m in system:
        path_of[m.id] = m.subsystem * d * d + m.internal * d + m.rail
    if sorted(path_of.values()) != list(range(len(system))):
        raise ContractViolationError("system modes do not form complete d x d blocks")
    modes: list[ModeDescriptor | None] = [None] * len(registry)
    for m in system:
        p = path_of[m.id]
        modes[p] = ModeDescriptor(p, "system", m.subsystem, m.rail, m.internal, f"path{p}")
    for m in registry:
        if m.kind != "system":
            path_of[m.id] = m.id
            modes[m.id] = ModeDescriptor(m.id, m.kind, m.subsystem, m.rail, m.internal, m.label)
    return ModeRegistry(tuple(modes)), path_of


def _compile_op(op: GateSpec, path_of: Mapping[int, int]) -> GateSpec:
    paths = tuple(path_of[m] for m in op.binding)
    if op.kind in ("F_d", "FourierPort"):
        return GateSpec("FourierPort", op.d, paths)
    if op.kind == "BS":
        return GateSpec("BS", op.d, paths, {"t": op.params["t"]})
    if op.kind in ("CN_d", "CN_d_inverse", "X_d", "Rewire"):
        lmap = op.to_linear_map()
        mat = lmap.matrix
        # every column holds a single 1: column i is sent to row dst(i)
        images = {}
        for i, m in enumerate(lmap.input_modes):
            rows = np.flatnonzero(mat[:, i])
            if len(rows) != 1 or mat[rows[0], i] != 1:
                raise ContractViolationError(f"{op.kind} is not a permutation")
            images[path_of[m]] = path_of[lmap.output_modes[rows[0]]]
        return gate_rewire(images, op.d)
    raise ContractViolationError(f"cannot compile gate kind {op.kind!r}")


def compile_multirail(plan: GhzCircuitPlan | Circuit) -> MultirailCircuit:
    circuit = getattr(plan, "circuit", plan)
    reg, path_of = _path_registry(circuit.registry, circuit.d)
    ops = tuple(_compile_op(op, path_of) for op in circuit.ops)
    compiled = Circuit(
        registry=reg,
        ops=ops,
        detector_groups=tuple(DetectorGroup(tuple(path_of[m] for m in g.modes)) for g in circuit.detector_groups),
        sinks=frozenset(path_of[m] for m in circuit.sinks),
        N=circuit.N,
        d=circuit.d,
        input_modes=tuple(path_of[m] for m in circuit.input_modes),
        output_wires=tuple(tuple(path_of[m] for m in w) for w in circuit.output_wires),
    )
    return MultirailCircuit(compiled, dict(path_of))


def relabel_isometry(plan: GhzCircuitPlan | Circuit, compiled: MultirailCircuit) -> LinearMap:
    """Permutation sending original mode m to its path; U_compiled = P U_original P^T."""
    circuit = getattr(plan, "circuit", plan)
    n = len(circuit.registry)
    if n != compiled.mode_count or sorted(compiled.path_of) != list(range(n)):
        raise ContractViolationError(f"registry sizes differ: {n} vs {compiled.mode_count}")
    mat = np.zeros((n, n))
    for m, p in compiled.path_of.items():
        mat[p, m] = 1.0
    modes = tuple(range(n))
    return LinearMap(modes, modes, mat)


def is_path_pure(compiled: MultirailCircuit) -> bool:
    """Only permutations, Fourier splitters and BSs; rewires must be exact 0/1 permutations."""
    for op in compiled.ops:
        if op.kind not in PATH_KINDS:
            return False
        if op.kind == "Rewire":
            mat = op.to_linear_map().matrix
            if not (np.all((mat == 0) | (mat == 1)) and np.all(mat.sum(axis=0) == 1) and np.all(mat.sum(axis=1) == 1)):
                return False
    return True


def to_netlist(compiled: MultirailCircuit) -> str:
    """One element per line: ``ELEMENT paths... [t=...]``; detectors are single-path."""
    c = compiled.circuit
    lines = [f"# N={c.N} d={c.d} paths={compiled.mode_count} elements={compiled.gate_count}"]
    lines.append("INPUT " + " ".join(f"p{m}" for m in c.input_modes))
    for op in c.ops:
        if op.kind == "FourierPort":
            lines.append("FOURIER " + " ".join(f"p{m}" for m in op.binding))
        elif op.kind == "BS":
            a, b = op.binding
            lines.append(f"BS p{a} p{b} t={float(op.params['t']):.12g}")
        else:
            moves = [f"p{a}>p{b}" for a, b in zip(op.binding, op.params["permutation"]) if a != b]
            if moves:
                lines.append("PERM " + " ".join(moves))
    for g in c.detector_groups:
        for m in g.modes:
            lines.append(f"DET p{m}")
    for m in sorted(c.sinks):
        lines.append(f"SINK p{m}")
    for j, w in enumerate(c.output_wires):
        lines.append(f"OUTPUT {j} " + " ".join(f"p{m}" for m in w))
    return "\n".join(lines) + "\n"
