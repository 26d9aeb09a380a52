import math

import numpy as np
import pytest

from qcap.codes import (
    ClassicalQuantumCode,
    basis_projective_decoders,
    code_from_json,
    code_to_json,
    enumerate_tiny_codes,
    evaluate_code,
    good_code_surrogate,
    induced_output_state,
    make_code,
    output_states,
    pgm_decoder,
    projective_decoder_errors,
    random_codebook,
    stochastic_code,
)
from qcap.errors import BadParameter, DimensionMismatch, DimensionOverflow, EnumerationTooLarge
from qcap.states import (
    Ensemble,
    Povm,
    apply_channel,
    basis_state,
    complete_povm,
    constant_channel,
    depolarizing,
    identity_channel,
    random_channel,
    random_density,
    random_povm,
)

from conftest import ket

E0, E1 = basis_state(2, 0), basis_state(2, 1)
BASIS_DECODER = Povm((E0, E1))


def pure(v):
    return np.outer(v, v.conj())


def test_single_message_code_has_zero_error(rng):
    ens = Ensemble((0.5, 0.5), (E0, E1))
    words = random_codebook(identity_channel(2), ens, 2, 1, seed=1)
    code = ClassicalQuantumCode(2, tuple(words), Povm((np.eye(4),)))
    assert evaluate_code(code, identity_channel(2)).max_error == pytest.approx(0.0, abs=1e-15)


def test_single_atom_codebook_is_constant():
    words = random_codebook(identity_channel(2), Ensemble((1.0,), (E0,)), 3, 5, seed=2)
    assert all(all(np.array_equal(s, E0) for s in w) for w in words)


def test_codebook_symbol_frequencies():
    probs = (0.2, 0.5, 0.3)
    ens = Ensemble(probs, (basis_state(3, 0), basis_state(3, 1), basis_state(3, 2)))
    words = random_codebook(identity_channel(3), ens, 1, 10_000, seed=3)
    counts = np.zeros(3)
    for w in words:
        for s in w:
            counts[int(np.argmax(np.real(np.diag(s))))] += 1
    total = counts.sum()
    for c, p in zip(counts, probs):
        assert abs(c - total * p) <= 3 * math.sqrt(total * p * (1 - p))


def test_codebook_is_deterministic_given_seed():
    ens = Ensemble((0.5, 0.5), (E0, E1))
    a = random_codebook(identity_channel(2), ens, 3, 4, seed=9)
    b = random_codebook(identity_channel(2), ens, 3, 4, seed=9)
    assert all(all(np.array_equal(x, y) for x, y in zip(u, v)) for u, v in zip(a, b))


def test_codebook_dimension_cap():
    with pytest.raises(DimensionOverflow):
        random_codebook(identity_channel(2), Ensemble((1.0,), (E0,)), 13, 2)


def test_pgm_orthogonal_states():
    povm = pgm_decoder([E0, E1])
    assert np.allclose(povm.elements[0], E0) and np.allclose(povm.elements[1], E1)


def test_pgm_identical_states(rng):
    rho = random_density(2, rng)
    povm = pgm_decoder([rho, rho])
    code = ClassicalQuantumCode(1, ((rho,), (rho,)), povm)
    perf = evaluate_code(code, identity_channel(2))
    assert perf.avg_error == pytest.approx(0.5, abs=1e-12)


def test_pgm_single_message_projects_on_support():
    rho = np.diag([0.6, 0.4, 0.0])
    povm = pgm_decoder([rho])
    assert np.allclose(povm.elements[0], np.diag([1, 1, 0]))
    assert np.allclose(povm.elements[-1], np.diag([0, 0, 1]))


@pytest.mark.parametrize("overlap", [0.0, 0.3, 0.5, 0.9])
def test_pgm_matches_helstrom_for_symmetric_pure_pair(overlap):
    th = math.acos(overlap)
    v0 = np.array([math.cos(th / 2), math.sin(th / 2)])
    v1 = np.array([math.cos(th / 2), -math.sin(th / 2)])
    povm = pgm_decoder([pure(v0), pure(v1)])
    code = ClassicalQuantumCode(1, ((pure(v0),), (pure(v1),)), povm)
    err = evaluate_code(code, identity_channel(2)).avg_error
    assert err == pytest.approx((1 - math.sqrt(1 - overlap**2)) / 2, abs=1e-8)


def test_evaluate_examples():
    perfect = ClassicalQuantumCode(1, ((E0,), (E1,)), BASIS_DECODER)
    perf = evaluate_code(perfect, identity_channel(2))
    assert perf.max_error == 0 and perf.avg_error == 0
    sigma = np.diag([0.5, 0.5])
    e = np.diag([1.0, 0.0])
    const = ClassicalQuantumCode(1, ((E0,), (E1,)), Povm((e, np.eye(2) - e)))
    assert evaluate_code(const, constant_channel(sigma, 2)).avg_error == pytest.approx(0.5)
    for p in (0.1, 0.4):
        perf = evaluate_code(perfect, depolarizing(2, p))
        assert np.allclose(perf.per_message, [p / 2, p / 2])


def test_evaluate_dimension_mismatch():
    code = ClassicalQuantumCode(1, ((E0,), (E1,)), BASIS_DECODER)
    with pytest.raises(DimensionMismatch):
        evaluate_code(code, identity_channel(3))


def test_performance_invariants_and_relabeling(rng):
    ch = random_channel(2, 2, 2, rng)
    for _ in range(30):
        n, M = int(rng.integers(1, 3)), int(rng.integers(1, 5))
        words = [tuple(random_density(2, rng) for _ in range(n)) for _ in range(M)]
        povm = random_povm(2**n, M + 1, rng)
        code = ClassicalQuantumCode(n, tuple(words), povm)
        perf = evaluate_code(code, ch)
        assert perf.avg_error <= perf.max_error + 1e-12
        assert all(-1e-12 <= e <= 1 + 1e-12 for e in perf.per_message)
        assert np.allclose(sum(povm.elements), np.eye(2**n), atol=1e-9)
        perm = rng.permutation(M)
        elems = [povm.elements[k] for k in perm] + list(povm.elements[M:])
        shuffled = ClassicalQuantumCode(n, tuple(words[k] for k in perm), Povm(tuple(elems)))
        perf2 = evaluate_code(shuffled, ch)
        assert np.allclose(sorted(perf.per_message), sorted(perf2.per_message))
        assert perf.max_error == pytest.approx(perf2.max_error)


def test_induced_output_examples(rng):
    rho = random_density(2, rng)
    ch = depolarizing(2, 0.2)
    single = ClassicalQuantumCode(1, ((rho,),), Povm((np.eye(2),)))
    assert np.allclose(induced_output_state(single, ch), apply_channel(ch, rho))
    basis = ClassicalQuantumCode(1, ((E0,), (E1,)), BASIS_DECODER)
    assert np.allclose(induced_output_state(basis, identity_channel(2)), np.eye(2) / 2)
    words = [tuple(random_density(2, rng) for _ in range(2)) for _ in range(3)]
    code = make_code(words, ch)
    direct = sum(np.kron(apply_channel(ch, a), apply_channel(ch, b)) for a, b in words) / 3
    assert np.allclose(induced_output_state(code, ch), direct)


def test_general_and_stochastic_codes(rng):
    ch = depolarizing(2, 0.1)
    bell = ket(1, 0, 0, 1)
    general = make_code([pure(bell), np.eye(4) / 4], ch, encoder_kind="deterministic-general")
    assert general.n == 2 and not general.is_block
    assert len(output_states(general, ch)) == 2
    code = stochastic_code([[(0.5, E0), (0.5, E1)], [(1.0, E0)]], BASIS_DECODER, 1)
    assert np.allclose(code.codewords[0], np.eye(2) / 2)
    assert code.encoder_kind == "stochastic-averaged"
    with pytest.raises(BadParameter):
        stochastic_code([[(0.7, E0)]], BASIS_DECODER, 1)


def test_code_validation():
    with pytest.raises(BadParameter):
        ClassicalQuantumCode(1, ((E0,), (E1,)), Povm((np.eye(2),)))
    with pytest.raises(BadParameter):
        ClassicalQuantumCode(2, ((E0,),), Povm((np.eye(4),)))
    with pytest.raises(BadParameter):
        ClassicalQuantumCode(1, ((E0,),), Povm((np.eye(2),)), encoder_kind="magic")


def test_enumeration_counts():
    symbols = [E0, pure(ket(1, 1))]
    assert sum(1 for _ in enumerate_tiny_codes(symbols, 1, 2)) == 4
    assert sum(1 for _ in enumerate_tiny_codes(symbols, 2, 2)) == 16
    projective = list(enumerate_tiny_codes(symbols, 1, 2, "all-projective-from-basis"))
    assert len(projective) == 4 * 4
    for code in projective:
        assert code.is_block and code.M == 2
    with pytest.raises(EnumerationTooLarge):
        next(enumerate_tiny_codes(symbols, 3, 4, "all-projective-from-basis"))


def test_vectorized_projective_errors_match_direct(rng):
    ch = random_channel(2, 2, 2, rng)
    words = [tuple(random_density(2, rng) for _ in range(2)) for _ in range(3)]
    code = make_code(words, ch)
    outs = output_states(code, ch)
    fast = projective_decoder_errors(outs)
    for row, povm in zip(fast, basis_projective_decoders(4, 3)):
        direct = evaluate_code(ClassicalQuantumCode(2, code.codewords, povm), ch)
        assert np.allclose(row, direct.per_message, atol=1e-12)


def test_good_code_surrogate_rate():
    ens = Ensemble((0.5, 0.5), (E0, E1))
    code = good_code_surrogate(depolarizing(2, 0.1), ens, 0.5, 4, 0.7, seed=0)
    assert code.M == round(math.exp(0.7 * 4 * 0.5))


def test_code_json_round_trip(rng):
    code = make_code([(random_density(2, rng), E0), (E1, E1)], depolarizing(2, 0.3))
    back = code_from_json(code_to_json(code))
    assert back.n == code.n and back.M == code.M
    for u, v in zip(code.decoder.elements, back.decoder.elements):
        assert np.allclose(u, v)


def test_complete_pgm_sums_to_identity(rng):
    for _ in range(20):
        outs = [random_density(3, rng, rank=1) for _ in range(int(rng.integers(1, 5)))]
        povm = pgm_decoder(outs)
        assert np.allclose(sum(povm.elements), np.eye(3), atol=1e-9)
        assert isinstance(complete_povm(povm.elements[:-1]), Povm)
