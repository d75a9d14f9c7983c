import itertools
import json

import numpy as np
import pytest

from qmemc import families as fam
from qmemc.errors import (
    DuplicateEdge,
    NegativeProbability,
    NotIrreducible,
    NotPredictive,
    RowSumMismatch,
    UnknownLabel,
    ValidationError,
)
from qmemc.generator import (
    Generator,
    joint_distribution,
    load_machine,
    minimize,
    sample_symbols,
    sample_words,
    save_machine,
    stationary,
    validate,
    word_probability,
)

from conftest import make_alternator, make_coin


def _raw(edges, states=("A", "B"), alphabet=("0", "1")):
    return {
        "states": list(states),
        "alphabet": list(alphabet),
        "transitions": [{"from": a, "symbol": x, "to": b, "p": p} for a, x, b, p in edges],
    }


# -- validation ------------------------------------------------------------------


def test_coin_is_valid_and_predictive(coin):
    assert coin.predictive
    assert coin.n_states == 1 and coin.n_symbols == 2


def test_row_sum_mismatch_reports_state_and_deficit():
    raw = _raw([("A", "0", "B", 0.5), ("A", "1", "A", 0.4), ("B", "0", "A", 1.0)])
    with pytest.raises(RowSumMismatch) as err:
        validate(raw)
    assert err.value.details["state"] == "A"
    assert err.value.details["deficit"] == pytest.approx(0.1)


def test_negative_probability():
    with pytest.raises(NegativeProbability):
        validate(_raw([("A", "0", "B", 1.2), ("A", "1", "A", -0.2), ("B", "0", "A", 1.0)]))


def test_not_irreducible_reports_component():
    raw = _raw([("A", "0", "A", 0.5), ("A", "1", "B", 0.5), ("B", "0", "B", 1.0)])
    with pytest.raises(NotIrreducible) as err:
        validate(raw)
    assert err.value.details["unreachable"] == ["B"]


def test_duplicate_edge():
    with pytest.raises(DuplicateEdge):
        validate(_raw([("A", "0", "B", 0.5), ("A", "0", "B", 0.5), ("B", "0", "A", 1.0)]))


def test_unknown_label():
    with pytest.raises(UnknownLabel):
        validate(_raw([("A", "2", "B", 1.0), ("B", "0", "A", 1.0)]))


def test_missing_field_is_validation_error():
    with pytest.raises(ValidationError):
        validate({"states": ["A"]})


def test_nonpredictive_flag():
    G = Generator.from_edges(["A", "B"], ["0"], [("A", "0", "A", 0.5), ("A", "0", "B", 0.5), ("B", "0", "A", 1.0)])
    assert not G.predictive
    with pytest.raises(NotPredictive):
        minimize(G)


def test_golden_mean_3_2_has_five_states():
    G = fam.golden_mean(3, 2, 0.5)
    assert G.n_states == 5 and G.predictive


def test_json_roundtrip(tmp_path):
    G = fam.nemo(0.3)
    path = tmp_path / "m.json"
    save_machine(G, path)
    H = load_machine(path)
    assert H.states == G.states and H.alphabet == G.alphabet
    np.testing.assert_array_equal(H.tensor, G.tensor)
    assert json.loads(path.read_text())["transitions"][0].keys() == {"from", "symbol", "to", "p"}


# -- stationary ---------------------------------------------------------------------


def test_stationary_coin(coin):
    assert stationary(coin).as_dict() == {"s0": 1.0}


def test_stationary_golden_mean_matches_eigenvector_oracle():
    G = fam.golden_mean(1, 1, 0.5)
    pi = stationary(G).probs
    np.testing.assert_allclose(pi, [2 / 3, 1 / 3], atol=1e-12)
    # independent oracle: left Perron eigenvector of the state matrix
    w, v = np.linalg.eig(np.asarray(G.state_matrix).T)
    ref = np.real(v[:, np.argmin(np.abs(w - 1))])
    np.testing.assert_allclose(pi, ref / ref.sum(), atol=1e-12)


def test_stationary_nemo():
    np.testing.assert_allclose(stationary(fam.nemo(0.5)).probs, [0.5, 0.25, 0.25], atol=1e-12)


def test_stationary_residual_random(rng):
    for _ in range(50):
        G = fam.random_predictive(int(rng.integers(1, 7)), int(rng.integers(1, 4)), rng)
        pi = stationary(G).probs
        assert np.abs(pi @ G.state_matrix - pi).max() <= 1e-10
        assert abs(pi.sum() - 1) <= 1e-12


# -- minimization ----------------------------------------------------------------------


def _word_dist(G, L):
    pi = stationary(G)
    return np.array([word_probability(G, pi, w) for w in itertools.product(G.alphabet, repeat=L)])


def test_minimize_epsilon_machine_unchanged():
    G = fam.golden_mean(2, 1, 0.3)
    assert minimize(G) is G


def test_minimize_duplicated_coin():
    G = Generator.from_edges(
        ["s0", "s1"], ["0", "1"], [("s0", "0", "s1", 0.5), ("s0", "1", "s1", 0.5), ("s1", "0", "s0", 0.5), ("s1", "1", "s0", 0.5)]
    )
    M = minimize(G)
    assert M.n_states == 1
    np.testing.assert_allclose(M.symbol_probs[:, 0], [0.5, 0.5])


def test_minimize_distinct_two_state_brute_force():
    G = Generator.from_edges(
        ["A", "B"], ["0", "1"], [("A", "0", "A", 0.3), ("A", "1", "B", 0.7), ("B", "0", "A", 0.6), ("B", "1", "B", 0.4)]
    )
    assert minimize(G).n_states == 2
    # brute force: the two states' future word distributions differ at some length <= 8
    def from_state(s, w):
        v = np.zeros(2)
        v[s] = 1.0
        for x in w:
            v = v @ G.tensor[G.symbol_index[x]]
        return v.sum()

    assert any(
        abs(from_state(0, w) - from_state(1, w)) > 1e-9 for L in range(1, 9) for w in itertools.product("01", repeat=L)
    )


def test_minimize_idempotent_and_preserves_words(rng):
    for _ in range(200):
        G = fam.random_predictive(int(rng.integers(1, 7)), int(rng.integers(1, 4)), rng)
        M = minimize(G)
        assert minimize(M) is M
        if M is not G and G.n_symbols ** 5 <= 300:
            np.testing.assert_allclose(_word_dist(M, 5), _word_dist(G, 5), atol=1e-12)


def test_minimize_merges_constructed_duplicates():
    # B and B2 both emit 1 and return to A
    edges = [("A", "1", "A", 0.5), ("A", "0", "B", 0.25), ("A", "2", "B2", 0.25), ("B", "1", "A", 1.0), ("B2", "1", "A", 1.0)]
    G = Generator.from_edges(["A", "B", "B2"], ["0", "1", "2"], edges)
    M = minimize(G)
    assert M.n_states == 2
    np.testing.assert_allclose(_word_dist(M, 4), _word_dist(G, 4), atol=1e-12)


# -- joint distribution ------------------------------------------------------------------


def test_joint_coin(coin):
    J = joint_distribution(coin, stationary(coin))
    np.testing.assert_allclose(J.table[0, :, 0], [0.5, 0.5])


def test_joint_alternator(alternator):
    J = joint_distribution(alternator, stationary(alternator)).table
    assert np.count_nonzero(J) == 2
    np.testing.assert_allclose(J[J > 0], [0.5, 0.5])


def test_joint_golden_mean_table():
    G = fam.golden_mean(1, 1, 0.5)
    J = joint_distribution(G, stationary(G)).table  # [s', x, s]
    expected = np.zeros((2, 2, 2))
    expected[0, 1, 0] = 0.5 * 2 / 3  # A -1-> A
    expected[1, 0, 0] = 0.5 * 2 / 3  # A -0-> B1
    expected[0, 1, 1] = 1 / 3  # B1 -1-> A
    np.testing.assert_allclose(J, expected, atol=1e-12)
    np.testing.assert_allclose(J.sum(axis=(0, 1)), stationary(G).probs, atol=1e-12)


# -- sampling ------------------------------------------------------------------------------


def test_sampling_deterministic(coin):
    pi = stationary(coin)
    assert sample_words(coin, pi, 4, 10, 7) == sample_words(coin, pi, 4, 10, 7)
    assert all(len(w) == 4 for w in sample_words(coin, pi, 4, 10, 7))


def test_coin_frequency(coin):
    words = sample_symbols(coin, stationary(coin), 4, 100_000, 7)
    assert abs(words.mean() - 0.5) < 0.01


def test_alternator_alternates(alternator):
    for w in sample_words(alternator, stationary(alternator), 10, 50, 3):
        assert all(a != b for a, b in zip(w, w[1:]))


def test_golden_mean_forbids_00():
    G = fam.golden_mean(1, 1, 0.5)
    for w in sample_words(G, stationary(G), 20, 2000, 11):
        assert "00" not in "".join(w)


def test_block_distribution_total_variation(rng):
    G = fam.nemo(0.4)
    pi = stationary(G)
    words = sample_symbols(G, pi, 3, 100_000, 5)
    codes = words @ np.array([4, 2, 1])
    emp = np.bincount(codes, minlength=8) / len(codes)
    exact = _word_dist(G, 3)
    assert 0.5 * np.abs(emp - exact).sum() <= 0.01
    # every sampled word is allowed
    assert np.all(exact[np.unique(codes)] > 0)
