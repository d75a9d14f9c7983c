"""Example generator families, their closed forms, and random machines for property tests."""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from .classical import _entropy
from .errors import NotIrreducible, NotMinimal, ParameterOutOfRange
from .generator import ROW_SUM_TOL, Generator, minimize
from .quantum import OverlapMatrix, gram_spectrum

FAMILIES = ("golden-mean", "nemo", "two-step-erase", "markov-chain")


def _check_prob(**params: float) -> None:
    for name, v in params.items():
        if not 0.0 < v < 1.0:
            raise ParameterOutOfRange(f"{name} must lie in (0, 1), got {v!r}", parameter=name, value=v)


def _check_int(**params: int) -> None:
    for name, v in params.items():
        if int(v) != v or v < 1:
            raise ParameterOutOfRange(f"{name} must be an integer >= 1, got {v!r}", parameter=name, value=v)


# -- R,k-Golden Mean -----------------------------------------------------------


def golden_mean_states(R: int, k: int) -> list[str]:
    return ["A"] + [f"B{i}" for i in range(1, R + k)]


def golden_mean(R: int, k: int, p: float) -> Generator:
    """``R + k`` states: ``A`` plus ``B1..B_{R+k-1}``; Markov order ``R``, cryptic order ``k``.

    ``A`` emits 1 (prob ``p``, stays) or 0 (to ``B1``).  ``B1..B_{R-1}`` emit 0
    and advance; ``B_R..B_{R+k-2}`` emit 1 and advance; ``B_{R+k-1}`` emits 1
    and returns to ``A``.
    """
    _check_int(R=R, k=k)
    _check_prob(p=p)
    B = [f"B{i}" for i in range(1, R + k)]
    edges = [("A", "1", "A", p), ("A", "0", "B1", 1.0 - p)]
    for r in range(1, R):
        edges.append((f"B{r}", "0", f"B{r + 1}", 1.0))
    for r in range(R, R + k - 1):
        edges.append((f"B{r}", "1", f"B{r + 1}", 1.0))
    edges.append((f"B{R + k - 1}", "1", "A", 1.0))
    return Generator.from_edges(["A"] + B, ["0", "1"], edges, name=f"golden-mean(R={R},k={k},p={p})")


def golden_mean_stationary(R: int, k: int, p: float) -> np.ndarray:
    Z = 1.0 + (R + k - 1) * (1.0 - p)
    return np.array([1.0 / Z] + [(1.0 - p) / Z] * (R + k - 1))


def golden_mean_overlaps(R: int, k: int, p: float) -> OverlapMatrix:
    """Real gauge of the overlap matrix: nontrivial only on ``A`` and the cryptic block ``B_R..B_{R+k-1}``."""
    _check_int(R=R, k=k)
    _check_prob(p=p)
    n = R + k
    M = np.eye(n, dtype=complex)
    cryptic = [R + m for m in range(k)]  # index of B_{R+m} is R+m
    for m, i in enumerate(cryptic):
        M[0, i] = M[i, 0] = np.sqrt(p ** (k - m))
        for nn, j in enumerate(cryptic[:m]):
            M[i, j] = M[j, i] = np.sqrt(p ** (m - nn))
    M.setflags(write=False)
    return OverlapMatrix(tuple(golden_mean_states(R, k)), M, method="closed-form")


def _cryptic_block(k: int, p: float) -> np.ndarray:
    # overlaps among A, B_R, ..., B_{R+k-1} (R-independent)
    return np.asarray(golden_mean_overlaps(1, k, p).matrix)


def golden_mean_advantages(R: int, k: int, p: float) -> tuple[float, float, float]:
    """Closed-form ``(Delta_C, Delta_W, e_q)`` assembled from the ``k+1``-state cryptic block.

    ``Z * Delta_C = C_mu^K - C_q^K`` and ``Z * Delta_N = (k(1-p) + p)(H[S'|1] - H_q[S'|1])``,
    so the efficiency is ``1 - Z Delta_N / (Z Delta_C)`` and no ``R`` survives in it.
    """
    _check_int(R=R, k=k)
    _check_prob(p=p)
    Z = 1.0 + (R + k - 1) * (1.0 - p)
    K = _cryptic_block(k, p)

    w = np.array([1.0] + [1.0 - p] * k)  # unnormalized weights of A and the cryptic block
    mu = np.clip(gram_spectrum(w, K), 0.0, None)
    C_mu_K = -k * (1.0 - p) * np.log2(1.0 - p)
    C_q_K = -float(np.sum(mu[mu > 0] * np.log2(mu[mu > 0])))

    # given X = 1 the next state is A (weight 1) or one of B_{R+1..R+k-1} (weight 1-p each)
    mass1 = k * (1.0 - p) + p
    w1 = np.array([1.0] + [1.0 - p] * (k - 1)) / mass1
    H1 = _entropy(w1)
    sub = np.ix_([0] + list(range(2, k + 1)), [0] + list(range(2, k + 1)))
    Hq1 = _entropy(np.clip(gram_spectrum(w1, K[sub]), 0.0, None))

    dC = (C_mu_K - C_q_K) / Z
    dN = mass1 * (H1 - Hq1) / Z
    dW = dC - dN
    return dC, dW, dW / dC


# -- Nemo ------------------------------------------------------------------------------------

# Coefficients, over the edge phases (symbol, state), of the single combination
# arg(Omega_AB Omega_BC Omega_CA) that the Nemo overlap matrix depends on.
NEMO_PHASE_COEFFS = {("0", "A"): 3, ("0", "C"): -3, ("1", "C"): 2, ("1", "A"): -1, ("1", "B"): -1}


def nemo(p: float) -> Generator:
    _check_prob(p=p)
    edges = [
        ("A", "0", "A", p),
        ("A", "1", "B", 1.0 - p),
        ("B", "1", "C", 1.0),
        ("C", "0", "A", 0.5),
        ("C", "1", "A", 0.5),
    ]
    return Generator.from_edges(["A", "B", "C"], ["0", "1"], edges, name=f"nemo(p={p})")


def nemo_stationary(p: float) -> np.ndarray:
    return np.array([1.0, 1.0 - p, 1.0 - p]) / (3.0 - 2.0 * p)


def nemo_combined_phase(phases) -> float:
    """The gauge-invariant phase sum ``3 phi_0A - 3 phi_0C + 2 phi_1C - phi_1A - phi_1B``."""
    d = phases.as_dict() if hasattr(phases, "as_dict") else dict(phases)
    return float(np.mod(sum(c * d.get(e, 0.0) for e, c in NEMO_PHASE_COEFFS.items()), 2 * np.pi))


def nemo_overlaps(p: float, phase: float = 0.0) -> OverlapMatrix:
    """Gauge with ``Omega_AB``, ``Omega_BC`` real positive; ``Omega_CA`` carries ``exp(i phase)``."""
    _check_prob(p=p)
    M = np.eye(3, dtype=complex)
    M[0, 1] = np.sqrt(p * (1.0 - p)) / (1.0 + p)
    M[1, 2] = np.sqrt(p) / (1.0 + p)
    M[2, 0] = np.sqrt(2.0 * p) / (1.0 + p) * np.exp(1j * phase)
    M[1, 0], M[2, 1], M[0, 2] = np.conj(M[0, 1]), np.conj(M[1, 2]), np.conj(M[2, 0])
    M.setflags(write=False)
    return OverlapMatrix(("A", "B", "C"), M, method="closed-form")


# -- Two-Step Erase ----------------------------------------------------------------------------

TWO_STEP_ERASE_DEFAULTS = (0.5, 0.2, 0.4)


def two_step_erase(p: float = 0.5, q: float = 0.2, r: float = 0.4) -> Generator:
    """A 0 resets to ``A``; a 1 moves ``A -> B -> C -> B``.  ``Pr(1|A,B,C) = p, q, r``."""
    _check_prob(p=p, q=q, r=r)
    edges = [
        ("A", "0", "A", 1.0 - p),
        ("A", "1", "B", p),
        ("B", "0", "A", 1.0 - q),
        ("B", "1", "C", q),
        ("C", "0", "A", 1.0 - r),
        ("C", "1", "B", r),
    ]
    G = Generator.from_edges(["A", "B", "C"], ["0", "1"], edges, name=f"two-step-erase(p={p},q={q},r={r})")
    if minimize(G).n_states != G.n_states:
        raise NotMinimal("parameters make two states predictively equivalent", p=p, q=q, r=r)
    return G


# -- Markov chains -------------------------------------------------------------------------


def markov_chain(P, symbols: Sequence[str] | None = None) -> Generator:
    """The chain as its own generator: states are symbols, ``s -x-> x`` with probability ``P[s, x]``."""
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ParameterOutOfRange("transition matrix must be square", shape=list(P.shape))
    if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > ROW_SUM_TOL):
        raise ParameterOutOfRange("transition matrix must be row-stochastic")
    n = P.shape[0]
    symbols = [str(i) for i in range(n)] if symbols is None else [str(s) for s in symbols]
    if len(symbols) != n:
        raise ParameterOutOfRange("need one symbol per row")
    edges = [(symbols[i], symbols[j], symbols[j], float(P[i, j])) for i in range(n) for j in range(n) if P[i, j] > 0]
    return Generator.from_edges(symbols, symbols, edges, name="markov-chain")


# -- random machines ---------------------------------------------------------------------------


def random_markov_chain(n: int, rng: np.random.Generator) -> np.ndarray:
    """Dense (hence irreducible) random row-stochastic matrix."""
    P = rng.dirichlet(np.ones(n), size=n)
    P /= P.sum(axis=1, keepdims=True)
    return P


def random_predictive(
    n_states: int,
    n_symbols: int,
    rng: np.random.Generator,
    *,
    max_tries: int = 1000,
) -> Generator:
    """Random irreducible predictive generator; each state emits a random nonempty subset of symbols."""
    states = [f"s{i}" for i in range(n_states)]
    alphabet = [str(x) for x in range(n_symbols)]
    for _ in range(max_tries):
        edges = []
        for i, s in enumerate(states):
            k = int(rng.integers(1, n_symbols + 1))
            syms = rng.choice(n_symbols, size=k, replace=False)
            probs = rng.dirichlet(np.ones(k))
            probs[-1] = 1.0 - probs[:-1].sum()
            for x, px in zip(sorted(syms), probs):
                edges.append((s, alphabet[x], states[int(rng.integers(n_states))], float(px)))
        try:
            return Generator.from_edges(states, alphabet, edges, name="random")
        except NotIrreducible:
            continue
    raise RuntimeError("could not draw an irreducible machine")
