import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quditghz.errors import CapacityError, ContractViolationError
from quditghz.fock import FockState, LinearMap, occupation
from quditghz.gates import flatten, run_circuit
from quditghz.herald import herald_report
from quditghz.permanent import (
    MAX_PERMANENT_DIM,
    amplitude_via_permanent,
    herald_probability_via_permanent,
    naive_permanent,
    output_occupations,
    pattern_conditional_via_permanent,
    permanent,
)
from quditghz.scheme import build_ghz_circuit, circuit_input_state

from helpers import random_circuit, random_unitary


def test_small_permanents():
    assert permanent([[2.5]]) == 2.5
    assert permanent(np.zeros((0, 0))) == 1
    a, b, c, d = 1 + 2j, -0.5, 3j, 0.25
    assert permanent([[a, b], [c, d]]) == pytest.approx(a * d + b * c, abs=1e-15)


@pytest.mark.parametrize("n", range(1, 8))
def test_all_ones(n):
    assert permanent(np.ones((n, n))) == pytest.approx(math.factorial(n), rel=1e-12)
    assert naive_permanent(np.ones((n, n))) == math.factorial(n)


@pytest.mark.property
@pytest.mark.parametrize("n", range(1, 8))
def test_ryser_matches_naive(n):
    rng = np.random.default_rng(n)
    for _ in range(5):
        # submatrices of unitaries are what the amplitude code actually feeds in
        m = random_unitary(n + 2, rng)[: n, 1 : n + 1]
        assert abs(permanent(m) - naive_permanent(m)) <= 1e-12
        g = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        ref = naive_permanent(g)
        assert abs(permanent(g) - ref) <= 1e-12 * max(1.0, abs(ref))


@pytest.mark.property
@settings(max_examples=100, deadline=None)
@given(st.integers(1, 7), st.integers(0, 2**32 - 1), st.complex_numbers(max_magnitude=3))
def test_row_multilinearity(n, seed, lam):
    rng = np.random.default_rng(seed)
    m = random_unitary(n, rng)
    row = int(rng.integers(n))
    scaled = m.copy()
    scaled[row] *= lam
    assert abs(permanent(scaled) - lam * permanent(m)) <= 1e-12 * max(1.0, abs(lam))
    other = m.copy()
    other[row] = rng.normal(size=n)
    summed = m.copy()
    summed[row] = m[row] + other[row]
    assert abs(permanent(summed) - permanent(m) - permanent(other)) <= 1e-12 * 4


@pytest.mark.property
@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_permutation_invariance(n, seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    p, q = rng.permutation(n), rng.permutation(n)
    assert abs(permanent(m[p][:, q]) - permanent(m)) <= 1e-11 * max(1.0, abs(permanent(m)))


def test_guards():
    with pytest.raises(CapacityError):
        permanent(np.eye(MAX_PERMANENT_DIM + 1))
    with pytest.raises(ContractViolationError):
        permanent(np.ones((2, 3)))
    U = LinearMap.identity(range(3))
    with pytest.raises(ContractViolationError):
        amplitude_via_permanent(U, ((0, 1),), ((0, 1), (1, 1)))


def test_identity_and_single_photon_amplitudes():
    U = LinearMap.identity(range(4))
    assert amplitude_via_permanent(U, ((0, 1), (2, 1)), ((0, 1), (2, 1))) == 1
    assert amplitude_via_permanent(U, ((0, 1), (2, 1)), ((1, 1), (2, 1))) == 0
    assert amplitude_via_permanent(U, ((3, 2),), ((3, 2),)) == pytest.approx(1)
    V = LinearMap(tuple(range(4)), tuple(range(4)), random_unitary(4, np.random.default_rng(0)))
    for i, o in itertools.product(range(4), repeat=2):
        assert amplitude_via_permanent(V, ((i, 1),), ((o, 1),)) == pytest.approx(V.matrix[o, i], abs=1e-15)


def test_cross_engine_random_circuits():
    rng = np.random.default_rng(2024)
    checked = 0
    for _ in range(50):
        circuit = random_circuit(rng)
        n = len(circuit.registry)
        photons = int(rng.integers(1, 7))
        in_occ = occupation((int(m), 1) for m in rng.integers(0, n, size=photons))
        start = FockState(circuit.registry, {in_occ: 1.0}, photons)
        expanded = run_circuit(start, circuit)
        U = flatten(circuit)
        for out in output_occupations(range(n), photons):
            diff = abs(expanded.amplitude(out) - amplitude_via_permanent(U, in_occ, out))
            assert diff <= 1e-10, (in_occ, out)
            checked += 1
    assert checked > 1000


def test_worked_example_terms_agree():
    plan = build_ghz_circuit(3, 3)
    rep = herald_report(plan)
    cond = rep.reference.conditional
    perm = pattern_conditional_via_permanent(plan.circuit, (0,) * 6)
    scale = math.sqrt(rep.p_single)
    assert set(perm) == set(cond.terms)
    for occ, amp in perm.items():
        assert abs(amp - cond.amplitude(occ) * scale) <= 1e-10


def test_bell_case_probabilities():
    plan = build_ghz_circuit(2, 2)
    c = plan.circuit
    full = run_circuit(circuit_input_state(c), c)
    U = flatten(c)
    for pattern in itertools.product(range(2), repeat=2):
        herald = [(g.modes[p], 1) for g, p in zip(c.detector_groups, pattern)]
        for k in range(2):
            out = tuple(sorted((w[k], 1) for w in plan.output_wires))
            ref = abs(full.amplitude(occupation(list(out) + herald))) ** 2
            assert herald_probability_via_permanent(c, pattern, out, U) == pytest.approx(ref, abs=1e-10)
    # wrong photon number: zero by conservation
    assert herald_probability_via_permanent(c, (0, 0), ((0, 1),), U) == 0.0


def test_sink_occupations_agree():
    plan = build_ghz_circuit(2, 3)
    c = plan.circuit
    full = run_circuit(circuit_input_state(c), c)
    U = flatten(c)
    sink = min(c.sinks)
    herald = [(g.modes[0], 1) for g in c.detector_groups]
    out = occupation([(plan.output_wires[0][0], 1), (sink, 1)])
    ref = abs(full.amplitude(occupation(list(out) + herald))) ** 2
    assert herald_probability_via_permanent(c, (0,) * 4, out, U) == pytest.approx(ref, abs=1e-10)


def test_sum_over_outputs_reproduces_pattern_probabilities():
    plan = build_ghz_circuit(2, 3)
    rep = herald_report(plan)
    U = flatten(plan.circuit)
    for o in rep.outcomes[:6]:
        amps = pattern_conditional_via_permanent(plan.circuit, o.pattern, U)
        assert math.fsum(abs(a) ** 2 for a in amps.values()) == pytest.approx(o.probability, rel=1e-9)
