"""Restriction system for M-photon heralded GHZ networks and a numerical search probe.

Network model: M input modes carry one photon each.  A single-photon isometry
V (rows = output modes, columns = the M inputs) sends them to

* N target spatial modes with d internal states each (rows ``j*d + s``),
* M - N detector spatial modes with d internal states each
  (rows ``N*d + i*d + s``),
* optionally some extra loss modes after that.

A herald fires when detector i holds exactly one photon, in internal state
``herald[i]`` (0 by default).  Restricted to a target row and an input
column, V gives the coefficients alpha[j, s, p]; the detector rows give the
contracted herald tensor X[p_1..p_N] (a permanent over the inputs not
claimed by the targets).  The herald amplitude of |s_1..s_N> with one photon
per target mode is then sum_p X[p] prod_a alpha[j_a, s_a, p_a].
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CapacityError, ContractViolationError, ParameterDomainError
from .gates import flatten
from .permanent import permanent
from .scheme import GhzCircuitPlan

MAX_PROBE_PHOTONS = 8


@dataclass(frozen=True)
class CandidateNetwork:
    N: int
    d: int
    M: int
    V: np.ndarray
    herald: tuple[int, ...] = ()

    def __post_init__(self):
        V = np.asarray(self.V, dtype=complex)
        n_rows = self.M * self.d
        if self.M <= self.N:
            raise ParameterDomainError(f"need more photons than parties, got M={self.M}, N={self.N}")
        if V.ndim != 2 or V.shape[1] != self.M or V.shape[0] < n_rows:
            raise ContractViolationError(f"V must be (>= {n_rows}) x {self.M}, got {V.shape}")
        herald = tuple(self.herald) or (0,) * (self.M - self.N)
        if len(herald) != self.M - self.N or not all(0 <= h < self.d for h in herald):
            raise ContractViolationError(f"herald must give one internal state per detector, got {herald}")
        V = V.copy()
        V.setflags(write=False)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "herald", herald)

    @property
    def alpha(self) -> np.ndarray:
        """alpha[j, s, p]: amplitude of input p reaching target j in internal state s."""
        return self.V[: self.N * self.d].reshape(self.N, self.d, self.M)

    @property
    def detector_rows(self) -> list[int]:
        return [self.N * self.d + i * self.d + h for i, h in enumerate(self.herald)]

    def isometry_error(self) -> float:
        return float(np.max(np.abs(self.V.conj().T @ self.V - np.eye(self.M))))

    def x_tilde(self) -> np.ndarray:
        """Dense herald tensor over ordered N-tuples of inputs; zero unless the inputs are distinct."""
        M, N = self.M, self.N
        det = self.V[self.detector_rows]
        out = np.zeros((M,) * N, dtype=complex)
        for p in itertools.permutations(range(M), N):
            rest = [q for q in range(M) if q not in p]
            out[p] = permanent(det[:, rest])
        return out


def restriction_tensor(candidate: CandidateNetwork) -> np.ndarray:
    """E[j1, s1, ..., jN, sN] = sum_p X[p] prod_a alpha[j_a, s_a, p_a]."""
    N, d = candidate.N, candidate.d
    alpha = candidate.alpha.reshape(N * d, candidate.M)
    tensor = candidate.x_tilde()
    for _ in range(N):
        # contract the leading input axis; the new (j, s) axis goes to the back
        tensor = np.tensordot(tensor, alpha, axes=([0], [1]))
    return tensor.reshape((N, d) * N)


def restriction_residual(candidate: CandidateNetwork) -> tuple[float, list[complex]]:
    """(largest entry that has to vanish, the d entries that have to equal x_s)."""
    N, d = candidate.N, candidate.d
    E = restriction_tensor(candidate)
    on = [complex(E[tuple(v for j in range(N) for v in (j, s))]) for s in range(d)]
    off = 0.0
    for js in itertools.product(range(N), repeat=N):
        is_perm = sorted(js) == list(range(N))
        for ss in itertools.product(range(d), repeat=N):
            if is_perm and len(set(ss)) == 1:
                continue
            off = max(off, abs(E[tuple(v for pair in zip(js, ss) for v in pair)]))
    return off, on


# ---------------------------------------------------------------- fidelity


def _target_occupations(N: int, d: int) -> list[tuple[int, ...]]:
    """All placements of N photons on the N*d target rows, as sorted row tuples."""
    return list(itertools.combinations_with_replacement(range(N * d), N))


def _logical_index(N: int, d: int, occs) -> dict[tuple[int, ...], int]:
    pos = {occ: i for i, occ in enumerate(occs)}
    return {a: pos[tuple(j * d + s for j, s in enumerate(a))] for a in itertools.product(range(d), repeat=N)}


def _shift_indices(N: int, d: int) -> list[list[tuple[int, ...]]]:
    return [
        [tuple((k - pj) % d for pj in p) for k in range(d)] for p in itertools.product(range(d), repeat=N)
    ]


def heralded_amplitudes(candidate: CandidateNetwork) -> dict[tuple[int, ...], complex]:
    """Unnormalized conditional amplitudes over target occupations (sorted row tuples)."""
    N, d = candidate.N, candidate.d
    det = candidate.detector_rows
    out = {}
    for occ in _target_occupations(N, d):
        norm = math.sqrt(math.prod(math.factorial(occ.count(r)) for r in set(occ)))
        out[occ] = permanent(candidate.V[list(occ) + det]) / norm
    return out


def heralded_fidelity(candidate: CandidateNetwork, target: Sequence[complex] | None = None) -> tuple[float, float]:
    """(phase/shift-corrected fidelity with the GHZ target, herald probability)."""
    N, d = candidate.N, candidate.d
    x = np.ones(d) if target is None else np.asarray(target, dtype=complex)
    amps = heralded_amplitudes(candidate)
    prob = math.fsum(abs(a) ** 2 for a in amps.values())
    if prob == 0:
        return 0.0, 0.0
    best = 0.0
    for idx in _shift_indices(N, d):
        score = sum(abs(x[k]) * abs(amps[tuple(j * d + a_j for j, a_j in enumerate(a))]) for k, a in enumerate(idx))
        best = max(best, score)
    return min(best**2 / (float(np.vdot(x, x).real) * prob), 1.0), prob


def witness_network(plan: GhzCircuitPlan) -> CandidateNetwork:
    """The scheme's own network in this parameterization (detector i = i-th detector group)."""
    c = plan.circuit
    U = flatten(c).matrix
    rows = [m for w in c.output_wires for m in w]
    rows += [m for g in c.detector_groups for m in g.modes]
    rows += sorted(c.sinks)
    V = U[np.ix_(rows, list(c.input_modes))]
    return CandidateNetwork(c.N, c.d, len(c.input_modes), V)


# ------------------------------------------------------------------ probe


@dataclass
class ProbeResult:
    N: int
    d: int
    M: int
    restarts: int
    seed: int
    best_fidelity: float
    best_probability: float
    best_params: np.ndarray
    history: list[float]
    partial: bool = False
    elapsed: float = 0.0
    herald: tuple[int, ...] = ()
    loss_modes: int = 0

    def to_json(self) -> dict:
        return {
            "N": self.N,
            "d": self.d,
            "M": self.M,
            "restarts": self.restarts,
            "seed": self.seed,
            "best_fidelity": self.best_fidelity,
            "best_probability": self.best_probability,
            "partial": self.partial,
            "elapsed_s": self.elapsed,
            "herald": list(self.herald),
            "loss_modes": self.loss_modes,
            "history": self.history,
        }


class _BatchedObjective:
    """Torch evaluation of corrected fidelity for a batch of Hermitian generators."""

    def __init__(self, N, d, M, herald, loss_modes, target):
        import torch

        self.torch = torch
        self.N, self.d, self.M = N, d, M
        self.K = M * d + loss_modes
        det = [N * d + i * d + h for i, h in enumerate(herald)]
        occs = _target_occupations(N, d)
        self.rows = torch.tensor([list(o) + det for o in occs])
        self.inv_norm = torch.tensor(
            [1 / math.sqrt(math.prod(math.factorial(o.count(r)) for r in set(o))) for o in occs], dtype=torch.float64
        )
        logical = _logical_index(N, d, occs)
        self.shift_cols = torch.tensor([[logical[a] for a in idx] for idx in _shift_indices(N, d)])
        subsets = np.array([[(k >> i) & 1 for i in range(M)] for k in range(1 << M)], dtype=float)
        self.subsets = torch.tensor(subsets, dtype=torch.complex128)
        signs = (-1.0) ** (M - subsets.sum(axis=1))
        self.signs = torch.tensor(signs, dtype=torch.complex128)
        x = np.ones(d) if target is None else np.abs(np.asarray(target, dtype=complex))
        self.xabs = torch.tensor(x, dtype=torch.float64)
        self.xnorm2 = float(np.sum(x**2))

    def unitary(self, params):
        torch = self.torch
        P = params.reshape(-1, self.K, self.K)
        H = (P + P.transpose(1, 2)) / 2 + 1j * (P - P.transpose(1, 2)) / 2
        return torch.linalg.matrix_exp(1j * H.to(torch.complex128))

    def __call__(self, params):
        """Return (fidelity, probability), each of shape (batch,)."""
        torch = self.torch
        V = self.unitary(params)[:, :, : self.M]
        A = V[:, self.rows, :]  # (B, n_occ, M, M)
        rowsums = A @ self.subsets.T  # (B, n_occ, M, 2^M)
        per = torch.prod(rowsums, dim=2) @ self.signs  # (B, n_occ)
        amps = per * self.inv_norm
        mag2 = amps.real**2 + amps.imag**2
        prob = mag2.sum(dim=1)
        mag = torch.sqrt(mag2 + 1e-300)
        scores = mag[:, self.shift_cols] @ self.xabs  # (B, n_shift)
        best = scores.max(dim=1).values
        fid = best**2 / (self.xnorm2 * prob + 1e-300)
        return fid, prob


def probe(
    N: int,
    d: int,
    M: int,
    restarts: int = 100,
    seed: int = 0,
    *,
    steps: int = 300,
    lr: float = 0.05,
    polish: int = 10,
    polish_iters: int = 300,
    batch: int = 250,
    budget_s: float | None = None,
    herald: Sequence[int] | None = None,
    loss_modes: int = 0,
    target: Sequence[complex] | None = None,
) -> ProbeResult:
    """Multistart search for the largest corrected herald fidelity over M-photon networks.

    Every restart draws a random Hermitian generator (numpy Generator seeded
    with ``seed``) and runs ``steps`` Adam iterations on the fidelity; the
    ``polish`` best restarts are then refined with L-BFGS-B.  A found value
    close to 1 is evidence of a network, a value bounded away from 1 is only
    evidence (not proof) that none exists.  When ``budget_s`` runs out the
    remaining batches are skipped and the result is flagged ``partial``.
    """
    import torch
    from scipy.optimize import minimize

    if N < 1 or d < 2 or M <= N:
        raise ParameterDomainError(f"invalid probe instance N={N}, d={d}, M={M}")
    if M > MAX_PROBE_PHOTONS:
        raise CapacityError(f"probe supports at most {MAX_PROBE_PHOTONS} photons, got M={M}")
    if restarts < 1:
        raise ParameterDomainError("restarts must be >= 1")
    herald = tuple(herald) if herald is not None else (0,) * (M - N)
    CandidateNetwork(N, d, M, np.eye(M * d + loss_modes)[:, :M], herald)  # validates herald
    torch.manual_seed(seed)
    objective = _BatchedObjective(N, d, M, herald, loss_modes, target)
    K = objective.K
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    inits = rng.normal(size=(restarts, K * K))

    finals = np.full(restarts, np.nan)
    params_out = np.zeros_like(inits)
    partial = False
    for lo in range(0, restarts, batch):
        if budget_s is not None and time.perf_counter() - start > budget_s:
            partial = True
            break
        p = torch.tensor(inits[lo : lo + batch], dtype=torch.float64, requires_grad=True)
        opt = torch.optim.Adam([p], lr=lr)
        for _ in range(steps):
            opt.zero_grad()
            fid, _ = objective(p)
            (-fid.sum()).backward()
            opt.step()
        with torch.no_grad():
            fid, _ = objective(p)
        finals[lo : lo + len(fid)] = fid.numpy()
        params_out[lo : lo + len(fid)] = p.detach().numpy()

    done = np.flatnonzero(~np.isnan(finals))

    def fun(v):
        t = torch.tensor(v, dtype=torch.float64, requires_grad=True)
        fid, _ = objective(t[None, :])
        loss = 1.0 - fid[0]
        loss.backward()
        return float(loss.detach()), t.grad.numpy().copy()

    order = done[np.argsort(-finals[done], kind="stable")]
    for i in order[:polish]:
        if budget_s is not None and time.perf_counter() - start > budget_s:
            partial = True
            break
        res = minimize(fun, params_out[i], jac=True, method="L-BFGS-B", options={"maxiter": polish_iters})
        if 1.0 - res.fun > finals[i]:
            finals[i] = 1.0 - res.fun
            params_out[i] = res.x

    best_i = int(done[np.argmax(finals[done])]) if len(done) else 0
    with torch.no_grad():
        fid, prob = objective(torch.tensor(params_out[best_i][None, :], dtype=torch.float64))
    return ProbeResult(
        N=N,
        d=d,
        M=M,
        restarts=int(len(done)),
        seed=seed,
        best_fidelity=float(np.nanmax(finals)) if len(done) else 0.0,
        best_probability=float(prob[0]),
        best_params=params_out[best_i],
        history=[float(v) for v in finals[done]],
        partial=partial,
        elapsed=time.perf_counter() - start,
        herald=herald,
        loss_modes=loss_modes,
    )


def candidate_from_params(N: int, d: int, M: int, params: np.ndarray, herald=None, loss_modes: int = 0) -> CandidateNetwork:
    """Rebuild the network a probe parameter vector stands for (numpy route)."""
    from scipy.linalg import expm

    K = M * d + loss_modes
    P = np.asarray(params, dtype=float).reshape(K, K)
    H = (P + P.T) / 2 + 1j * (P - P.T) / 2
    U = expm(1j * H)
    return CandidateNetwork(N, d, M, U[:, :M], tuple(herald) if herald is not None else ())
