import json
import math

import numpy as np
import pytest

from qcap.capacity import SolverConfig, holevo_capacity
from qcap.codes import ClassicalQuantumCode, evaluate_code, make_code, random_codebook, stochastic_code
from qcap.converse import (
    BoundReport,
    SemigroupMap,
    chain_parameters,
    exhaustive_tiny_sweep,
    lemma5_check,
    min_valid_t,
    optimal_t,
    proof_chain_verify,
    psi_identity_closed_form,
    regularize_povm,
    reports_to_csv,
    second_order_converse_check,
    second_order_rhs,
    semigroup_apply,
    semigroup_product_apply,
    t_grid_bound,
    theorem1_check,
)
from qcap.errors import NotBlockCode, ParameterOutOfRange
from qcap.experiment import basis_code, random_chain_instance
from qcap.linalg import loewner_leq, min_eigenvalue, tensor_all
from qcap.states import Povm, basis_state, depolarizing, identity_channel, random_density, random_povm

E0, E1 = basis_state(2, 0), basis_state(2, 1)
LN2 = math.log(2)
FAST = SolverConfig(probes=2000)


@pytest.fixture(scope="module")
def noiseless():
    ch = identity_channel(2)
    return ch, holevo_capacity(ch, FAST)


def orthogonal_pair():
    return ClassicalQuantumCode(1, ((E0,), (E1,)), Povm((E0, E1)))


# --- semigroup maps -------------------------------------------------------


def test_semigroup_small_time_limit(rng):
    x = random_density(3, rng)
    for m in (SemigroupMap.psi(1e-8), SemigroupMap.phi(1e-8, random_density(3, rng))):
        assert np.max(np.abs(semigroup_apply(m, x) - x)) < 1e-7


def test_psi_on_identity():
    for d in (2, 3):
        for t in (0.1, 1.0, 3.0):
            out = semigroup_apply(SemigroupMap.psi(t), np.eye(d))
            assert np.allclose(out, (math.exp(-t) + (1 - math.exp(-t)) * d) * np.eye(d))


def test_phi_output_positive_definite(rng):
    for _ in range(50):
        x = random_density(3, rng, rank=1)
        sigma = random_density(3, rng)
        out = semigroup_apply(SemigroupMap.phi(float(rng.uniform(0.01, 2)), sigma), x)
        assert min_eigenvalue(out) > 0


def test_semigroup_rejects_bad_time():
    with pytest.raises(ValueError):
        SemigroupMap.psi(0.0)


def test_product_psi_on_identity():
    for n in (1, 2, 3):
        out = semigroup_product_apply([SemigroupMap.psi(0.4)] * n, np.eye(2**n))
        assert np.max(np.abs(out - psi_identity_closed_form(2, n, 0.4) * np.eye(2**n))) < 1e-10


def test_product_base_case_is_exact(rng):
    x = random_density(3, rng)
    m = SemigroupMap.phi(0.7, random_density(3, rng))
    assert np.array_equal(semigroup_product_apply([m], x), semigroup_apply(m, x))


def test_product_on_product_input(rng):
    xs = [random_density(2, rng) for _ in range(3)]
    maps = [SemigroupMap.phi(0.3, random_density(2, rng)), SemigroupMap.psi(0.9), SemigroupMap.phi(1.2, E0)]
    want = tensor_all([semigroup_apply(m, x) for m, x in zip(maps, xs)])
    assert np.allclose(semigroup_product_apply(maps, tensor_all(xs)), want, atol=1e-14)


def test_loewner_dominance_psi_over_phi(rng):
    for _ in range(200):
        d = int(rng.integers(2, 4))
        e = random_povm(d, 2, rng).elements[0]
        sigma = random_density(d, rng)
        t = float(rng.uniform(0.01, 3))
        psi = semigroup_apply(SemigroupMap.psi(t), e)
        phi = semigroup_apply(SemigroupMap.phi(t, sigma), e)
        assert min_eigenvalue(psi - phi) >= -1e-10


def test_convexity_and_exponential_bounds():
    for d in (2, 3, 4):
        for n in range(1, 9):
            for t in np.linspace(0.01, 5, 60):
                assert psi_identity_closed_form(d, n, t) <= math.exp((d - 1) * t * n) * (1 + 1e-12)
    for t in np.linspace(1e-3, 10, 500):
        assert 1 / (1 - math.exp(-t)) <= 1 + 1 / t


# --- theorem-level checks ---------------------------------------------------


def test_theorem1_noiseless_basis_code(noiseless):
    ch, cap = noiseless
    code = basis_code(ch, 3)
    rep = theorem1_check(code, ch, cap)
    assert code.M == 8
    assert rep.lhs == pytest.approx(0.0, abs=1e-9)
    assert rep.slack == pytest.approx(LN2, abs=1e-8)
    assert rep.holds


def test_theorem1_single_message(noiseless, rng):
    ch = depolarizing(2, 0.3)
    cap = holevo_capacity(ch, FAST)
    code = make_code([(random_density(2, rng), random_density(2, rng))], ch)
    rep = theorem1_check(code, ch, cap)
    assert rep.lhs <= 2 * cap.chi + 1e-6
    assert rep.rhs == pytest.approx(2 * cap.chi + LN2)
    assert rep.holds


def test_theorem1_random_pgm_codes_and_golden_identity():
    ch = depolarizing(2, 0.1)
    cap = holevo_capacity(ch, FAST)
    for seed in range(12):
        n = 1 + seed % 4
        M = max(1, round(math.exp(0.7 * n * cap.chi)))
        code = make_code(random_codebook(ch, cap.ensemble, n, M, seed), ch)
        rep = theorem1_check(code, ch, cap)
        assert rep.holds
        assert abs(rep.components["golden_residual"]) < 1e-8


def test_theorem2_examples(noiseless, rng):
    ch, _ = noiseless
    rep = second_order_converse_check(orthogonal_pair(), ch)
    assert rep.lhs == pytest.approx(LN2)
    assert rep.rhs == pytest.approx(LN2)
    assert rep.slack == pytest.approx(0.0, abs=1e-12) and rep.holds
    single = make_code([(random_density(2, rng),)], ch)
    rep = second_order_converse_check(single, ch)
    assert rep.lhs == 0 and rep.holds


def test_theorem2_mutual_information_forms_agree(rng):
    ch = depolarizing(2, 0.2)
    code = make_code([tuple(random_density(2, rng) for _ in range(2)) for _ in range(3)], ch)
    c = second_order_converse_check(code, ch).components
    assert c["mutual_information"] == pytest.approx(c["mutual_information_divergence_form"], abs=1e-10)


def test_theorem2_vacuous_flag():
    ch = identity_channel(2)
    bad = ClassicalQuantumCode(1, ((E0,), (E1,)), Povm((E1, E0)))
    rep = second_order_converse_check(bad, ch)
    assert rep.components["vacuous"] and rep.holds and math.isinf(rep.rhs)


def test_block_code_required():
    code = stochastic_code([[(0.5, E0), (0.5, E1)], [(1.0, E0)]], Povm((E0, E1)), 1)
    with pytest.raises(NotBlockCode):
        second_order_converse_check(code, identity_channel(2))


def test_second_order_rhs_and_t_star():
    eps, n, d = 0.2, 3, 2
    L = -math.log(0.8)
    assert second_order_rhs(0.5, eps, n, d) == pytest.approx(0.5 + 2 * math.sqrt(n * (d - 1) * L) + L)
    assert optimal_t(eps, n, d) == pytest.approx(math.sqrt(L / (n * (d - 1))))


def test_lemma5_examples(noiseless, rng):
    ch, cap = noiseless
    rep = lemma5_check(orthogonal_pair(), ch, cap)
    assert rep.lhs == pytest.approx(0.0, abs=1e-12)
    assert rep.rhs == pytest.approx(0.0, abs=1e-7)
    assert rep.holds
    single = make_code([(random_density(2, rng),)], ch)
    assert lemma5_check(single, ch, cap).holds


def test_lemma5_printed_variant_is_reported_not_asserted(noiseless):
    ch, cap = noiseless
    th = math.acos(0.5)
    v = np.array([math.cos(th), math.sin(th)])
    code = make_code([(E0,), (np.outer(v, v),)], ch)
    rep = lemma5_check(code, ch, cap)
    assert rep.holds
    assert not rep.components["printed_holds"]
    assert rep.components["printed_rhs"] < rep.rhs


def test_exhaustive_sweep_small(noiseless):
    ch, cap = noiseless
    th = math.acos(0.5)
    v = np.array([math.cos(th), math.sin(th)])
    summary = exhaustive_tiny_sweep([E0, np.outer(v, v)], ch, cap, n_max=2, M_max=3)
    assert summary.instances > 0
    assert summary.theorem2_violations == 0 and summary.lemma5_violations == 0
    assert summary.printed_failures > 0


# --- proof chain ------------------------------------------------------------


def test_chain_parameters():
    a_hat, q = chain_parameters(0.25, 0.5)
    assert a_hat == pytest.approx(-1 / 3)
    assert q == pytest.approx(1 - (4 / 3) * math.exp(-0.5))
    for alpha in (0.0, 0.5, 0.7):
        with pytest.raises(ParameterOutOfRange):
            chain_parameters(alpha, 1.0)
    with pytest.raises(ParameterOutOfRange):
        chain_parameters(0.4, 0.1)
    assert min_valid_t(0.25) == pytest.approx(math.log(4 / 3))


def test_regularized_povm_is_definite(rng):
    povm = regularize_povm(Povm((E0, E1)), 1e-9)
    assert np.allclose(sum(povm.elements), np.eye(2))
    assert all(min_eigenvalue(e) > 0 for e in povm.elements)


def test_chain_noiseless_orthogonal_pair(noiseless):
    ch, _ = noiseless
    reports = proof_chain_verify(orthogonal_pair(), ch, 0.25, 0.5)
    assert len(reports) == 8
    for r in reports:
        assert r.slack >= -1e-8, r.name
    last = reports[-1]
    assert last.components["ordering_slack"] >= -1e-8


def test_chain_commuting_instances_hold(rng):
    # diagonal codewords through the identity channel with basis decoders:
    # every operator in the chain commutes with every reference state
    ch = identity_channel(2)
    for _ in range(15):
        n = int(rng.integers(1, 4))
        M = int(rng.integers(1, 5))
        words = [tuple(np.diag(rng.dirichlet(np.ones(2))) for _ in range(n)) for _ in range(M)]
        labels = rng.integers(0, M, size=2**n)
        elems = tuple(np.diag((labels == m).astype(float)) for m in range(M))
        code = ClassicalQuantumCode(n, tuple(words), Povm(elems))
        alpha, t = [(0.1, 0.5), (0.25, 0.5), (0.25, 1.0), (0.4, 1.0)][int(rng.integers(4))]
        for r in proof_chain_verify(code, ch, alpha, t):
            assert r.holds, (r.name, r.slack)


def test_chain_steps_other_than_hypercontractivity_hold_on_random_instances():
    spec = {"family": "random", "d": 2, "kraus_range": [1, 3]}
    pairs = [(0.1, 0.5), (0.25, 0.5), (0.25, 1.0), (0.4, 1.0)]
    for seed in range(8):
        rng = np.random.default_rng(seed)
        ch, code = random_chain_instance(rng, spec, None, None, "mixed", 2, 3)
        alpha, t = pairs[seed % 4]
        for r in proof_chain_verify(code, ch, alpha, t):
            if r.name != "step4_hypercontractivity":
                assert r.holds, (seed, r.name, r.slack)


def test_hypercontractivity_step_fails_for_some_noncommuting_instances():
    """Documents an observed counterexample family for the step-4 inequality.

    With a decoder element that does not commute with the reference output
    states, ``||Phi_t(E)||_{alpha_hat} >= ||E||_q`` can fail at
    ``q = 1 + (alpha_hat - 1) e^-t``. The failures persist at 80 digits, so
    they are not round-off.
    """
    spec = {"family": "random", "d": 2, "kraus_range": [1, 3]}
    failures = 0
    for seed in range(40):
        rng = np.random.default_rng(1000 + seed)
        ch, code = random_chain_instance(rng, spec, 1, 2, "mixed", 1, 2)
        step4 = proof_chain_verify(code, ch, 0.25, 0.5)[3]
        failures += not step4.holds
    assert failures > 0


def test_t_grid_peak_near_t_star():
    grid = np.round(np.arange(0.05, 2.0001, 0.05), 10)
    for eps, n in [(0.1, 1), (0.3, 2), (0.5, 3), (0.05, 3)]:
        res = t_grid_bound(math.log(4), eps, n, 2, grid)
        assert abs(res["argmax_relaxed"] - res["t_star"]) <= 0.05 + 1e-12


# --- reports ------------------------------------------------------------------


def test_report_serialization():
    rep = BoundReport.compare("demo", 1.0, math.inf, extra=np.float64(2.0))
    assert rep.holds and math.isinf(rep.slack)
    obj = rep.to_json()
    assert obj["rhs"] == "inf" and obj["components"]["tol"] == 1e-8
    json.dumps(obj)
    csv_text = reports_to_csv([rep, BoundReport.compare("neg", 2.0, 1.0)])
    lines = csv_text.strip().splitlines()
    assert lines[0] == "name,lhs,rhs,slack,holds" and lines[2].endswith(",0")
