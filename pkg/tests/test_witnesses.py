import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qwitness.classical import RateMatrix, classical_evolve, random_distribution, random_rate_matrix
from qwitness.models import cooper_pair_box
from qwitness.quantum import (DensityMatrix, evolve, population, propagator_markov,
                              two_time_correlator)
from qwitness.witnesses import (PopulationRecord, TimeDomainSet, UndeterminedPropagator,
                                solve_propagator_vector, witness_womega, witness_wq,
                                witness_wq_partial, witness_wqq)


def markov_records(K, p0, tset, m):
    return [PopulationRecord(a, b, classical_evolve(K, p0, a), classical_evolve(K, p0, b)[m])
            for a, b in tset.pairs]


def test_wq_rejects_mismatched_shapes():
    with pytest.raises(ValueError):
        witness_wq(0.5, [0.5, 0.5], [1.0, 0.0, 0.0])


def test_wq_detection_flag_follows_threshold():
    r = witness_wq(1.0, [0.5, 0.5], [0.5, 0.5], threshold=1e-6)
    assert r.value > 0 and r.detected
    r = witness_wq(0.5, [1.0, 0.0], [0.5, 0.2])
    assert r.value == 0 and not r.detected


def test_result_record_is_json():
    r = witness_wqq(0.3 + 0.1j, 0.5, 0.4, m=2, n=1, t0=1.0, tau=0.5)
    rec = r.to_record()
    json.dumps(rec)
    assert set(rec) == {"witness", "m", "n", "t0", "tau", "value", "detected", "status", "components", "threshold"}


def test_partial_sum_early_exit():
    part = witness_wq_partial(0.4, [0.5, 0.3, 0.2])
    assert part.detected and part.terms_consumed == 1


@given(st.lists(st.floats(0, 1), min_size=1, max_size=6), st.floats(0, 2))
def test_partial_sum_is_monotone(terms, expectation):
    part = witness_wq_partial(expectation, terms)
    assert all(b >= a for a, b in zip(part.partial_sums, part.partial_sums[1:]))
    if not part.detected:
        assert part.terms_consumed == len(terms)
        assert math.isclose(part.running_sum, sum(terms), rel_tol=1e-12, abs_tol=1e-15)


def test_partial_sum_rejects_negative_terms():
    with pytest.raises(ValueError):
        witness_wq_partial(0.5, [0.1, -0.2])


def test_time_domain_set_invariants():
    with pytest.raises(ValueError):
        TimeDomainSet(1, ((0.0, 1.0), (1.0, 1.5)))
    with pytest.raises(ValueError):
        TimeDomainSet(1, ((0.0, 1.0), (0.0, 1.0)))
    t = TimeDomainSet.regular(2, 0.5, 1.0, 3, 1)
    assert t.t0s == [1.0, 1.5, 2.0] and math.isclose(t.tau, 1.0)


def test_population_record_validation():
    with pytest.raises(ValueError):
        PopulationRecord(0, 1, (0.5, 0.6), 0.1)


def test_solve_identity_and_known_system():
    sol = solve_propagator_vector(np.eye(3), np.array([0.1, 0.2, 0.7]))
    assert np.allclose(sol.omega, [0.1, 0.2, 0.7])
    P = np.array([[0.9, 0.1], [0.3, 0.7]])
    omega = np.array([0.25, 0.6])
    sol = solve_propagator_vector(P, P @ omega)
    assert np.abs(sol.omega - omega).max() < 1e-10


def test_stationary_rows_are_singular():
    P = np.tile([0.2, 0.3, 0.5], (3, 1))
    with pytest.raises(UndeterminedPropagator) as info:
        solve_propagator_vector(P, np.ones(3) * 0.2)
    assert info.value.det < 1e-12


def test_womega_both_singular_is_inconclusive():
    recs = [PopulationRecord(k, k + 1, (0.5, 0.5), 0.5) for k in (1, 2)]
    r = witness_womega(recs, recs, 0)
    assert r.status == "inconclusive" and not r.detected


def test_womega_needs_common_tau():
    a = [PopulationRecord(k, k + 1, (0.5 + 0.1 * k, 0.5 - 0.1 * k), 0.5) for k in (1, 2)]
    b = [PopulationRecord(k, k + 2, (0.5 + 0.1 * k, 0.5 - 0.1 * k), 0.5) for k in (1, 2)]
    with pytest.raises(ValueError):
        witness_womega(a, b, 0)


@given(st.integers(2, 4), st.integers(0, 100_000), st.floats(0.05, 1.0), st.floats(0.1, 2.0))
def test_womega_vanishes_for_markov_chains(d, seed, base, tau):
    K = random_rate_matrix(d, seed)
    p0 = np.eye(d)[0]
    m = seed % d
    r = witness_womega(markov_records(K, p0, TimeDomainSet.regular(1, base, tau, d, 0), m),
                       markov_records(K, p0, TimeDomainSet.regular(2, base, tau, d, 1), m), seed % d)
    if r.status != "inconclusive":
        assert r.components["normalized"] < 1e-8 or r.value < 1e-12


def test_wq_two_level_closed_form():
    model = cooper_pair_box()
    ej = model.meta["E_J"]
    rho0 = DensityMatrix.basis(model.space, "1")
    for t0 in np.linspace(0, 100, 7):
        for tau in np.linspace(0, 100, 7):
            rho_t0 = evolve(model, rho0, t0)
            r = witness_wq(population(evolve(model, rho0, t0 + tau), "1"), rho_t0.populations(),
                           propagator_markov(model, tau).matrix[0])
            assert abs(r.value - 0.5 * abs(math.sin(ej * t0) * math.sin(ej * tau))) < 1e-9


def test_wqq_equal_times_vanishes_and_rabi_is_nonzero():
    model = cooper_pair_box()
    ej = model.meta["E_J"]
    rho0 = DensityMatrix.basis(model.space, "1")
    t0 = math.pi / 2 / ej
    p = evolve(model, rho0, t0).populations()
    same = witness_wqq(two_time_correlator(model, rho0, "1", "1", t0, t0), p[0], 1.0)
    assert same.value < 1e-12
    tau = 0.3 * math.pi / ej
    corr = two_time_correlator(model, rho0, "2", "1", t0, t0 + tau)
    r = witness_wqq(corr, p[0], propagator_markov(model, tau).matrix[1, 0])
    assert r.value > 1e-3 and r.note == "not directly measurable"


def test_wqq_vanishes_for_classical_rates():
    from qwitness.classical import rate_matrix_to_lindblad

    K = random_rate_matrix(3, 7)
    model = rate_matrix_to_lindblad(K)
    rho0 = DensityMatrix.from_populations(model.space, random_distribution(3, 1))
    corr = two_time_correlator(model, rho0, "3", "2", 0.6, 1.5)
    p = evolve(model, rho0, 0.6).populations()
    assert witness_wqq(corr, p[1], propagator_markov(model, 0.9).matrix[2, 1]).value < 1e-8


def test_womega_cooper_pair_box_has_quantum_areas():
    model = cooper_pair_box()
    rho0 = DensityMatrix.basis(model.space, "1")

    def recs(tset):
        return [PopulationRecord(a, b, evolve(model, rho0, a).populations(),
                                 population(evolve(model, rho0, b), "2")) for a, b in tset.pairs]

    values = []
    for base in np.linspace(3, 37, 6):
        for tau in np.linspace(5, 75, 6):
            r = witness_womega(recs(TimeDomainSet.regular(1, base, tau, 2, 0)),
                               recs(TimeDomainSet.regular(2, base, tau, 2, 1)), 0)
            values.append(r.value)
    assert max(values) > 1e-2
