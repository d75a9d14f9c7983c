"""Shannon quantities of a predictive generator and its Markov / cryptic orders."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Union

import numpy as np

from .errors import HorizonInconclusive, InvariantViolation, NotNormalized
from .generator import (
    Generator,
    StationaryDistribution,
    _probs,
    joint_distribution,
    stationary,
)

EXCEEDS_CAP = "exceeds-cap"
Order = Union[int, str]

IDENTITY_TOL = 1e-10
NORM_TOL = 1e-12


def shannon(dist) -> float:
    """Shannon entropy in bits, with ``0 log 0 = 0``."""
    p = np.asarray(dist, dtype=float).ravel()
    if p.size == 0 or np.any(p < -NORM_TOL) or abs(p.sum() - 1.0) > NORM_TOL:
        raise NotNormalized(f"not a probability vector (sum={p.sum()!r})")
    p = p[p > 0.0]
    return float(-(p * np.log2(p)).sum())


def _entropy(p: np.ndarray) -> float:
    # unchecked variant for internal marginals that are normalized by construction
    p = p[p > 0.0]
    return float(-(p * np.log2(p)).sum())


@dataclass(frozen=True)
class ClassicalReport:
    C_mu: float
    N_mu: float
    H_X: float
    h_mu: float
    W_mu: float
    markov_order: Order
    cryptic_order: Order

    def to_dict(self) -> dict:
        return asdict(self)


def classical_report(
    G: Generator,
    pi: StationaryDistribution | np.ndarray | None = None,
    *,
    order_cap: int = 64,
    horizon: int | None = None,
    orders: bool = True,
) -> ClassicalReport:
    """Memory, non-Markovity, entropy rate and classical work rate (bits).

    ``W_mu = C_mu - N_mu - H_X``; the identity ``W_mu = -H[X|S']`` and the
    bounds ``-h_mu <= W_mu <= 0`` are checked before returning.
    """
    G.require_predictive()
    if pi is None:
        pi = stationary(G)
    p = _probs(pi, G)
    joint = joint_distribution(G, p).table  # [s', x, s]

    C_mu = _entropy(p)
    sx = joint.sum(axis=2)  # P(s', x)
    px = sx.sum(axis=0)
    H_X = _entropy(px)
    N_mu = _entropy(sx.ravel()) - H_X
    h_mu = float(sum(p[s] * _entropy(G.symbol_probs[:, s]) for s in range(G.n_states)))
    W_mu = C_mu - N_mu - H_X

    # W_mu = -H[X|S'] with H[S'] = C_mu under stationarity
    H_X_given_next = _entropy(sx.ravel()) - _entropy(sx.sum(axis=1))
    if abs(W_mu + H_X_given_next) > IDENTITY_TOL:
        raise InvariantViolation("W_mu != -H[X|S']", W_mu=W_mu, H_X_given_next=H_X_given_next)
    if W_mu > IDENTITY_TOL or W_mu < -h_mu - IDENTITY_TOL:
        raise InvariantViolation("classical work outside [-h_mu, 0]", W_mu=W_mu, h_mu=h_mu)

    if not orders:
        return ClassicalReport(C_mu, N_mu, H_X, h_mu, W_mu, "not-computed", "not-computed")
    cap = order_cap
    if horizon is None:
        horizon = max(4 * cap, 256)
    R = markov_order(G, cap)
    try:
        k: Order = cryptic_order(G, cap, horizon)
    except HorizonInconclusive:
        k = "inconclusive"
    return ClassicalReport(C_mu, N_mu, H_X, h_mu, W_mu, R, k)


# -- synchronization orders via the pair automaton ----------------------------
#
# A word of length L leaves the machine in an ambiguous state iff some pair of
# distinct states is reachable, reading that word in lockstep, from some pair of
# distinct starting states.  Iterating the set of reachable distinct pairs is a
# subset construction on the pair graph; a repeated set certifies the sequence
# never empties.


def _pair_graph(G: Generator) -> tuple[list[tuple[int, int]], list[list[int]]]:
    G.require_predictive()
    F = np.asarray(G.successor)
    n = G.n_states
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    index = {pr: t for t, pr in enumerate(pairs)}
    succ: list[list[int]] = []
    for i, j in pairs:
        out: list[int] = []
        for x in range(G.n_symbols):
            a, b = F[x, i], F[x, j]
            if a < 0 or b < 0:
                continue
            if a == b:
                out.append(-1)  # merged: the pair synchronizes on this symbol
            else:
                out.append(index[(min(a, b), max(a, b))])
        succ.append(out)
    return pairs, succ


def _step(current: frozenset[int], succ: list[list[int]]) -> frozenset[int]:
    return frozenset(t for c in current for t in succ[c] if t >= 0)


def markov_order(G: Generator, cap: int = 64) -> Order:
    """Smallest ``R >= 1`` such that every allowed length-``R`` word synchronizes.

    Returns ``"exceeds-cap"`` when no such ``R <= cap`` exists (including the
    certified-infinite case).
    """
    pairs, succ = _pair_graph(G)
    current = frozenset(range(len(pairs)))
    seen = {current}
    for L in range(1, cap + 1):
        current = _step(current, succ)
        if not current:
            return L
        if current in seen:
            return EXCEEDS_CAP
        seen.add(current)
    return EXCEEDS_CAP


def _live_pairs(succ: list[list[int]]) -> frozenset[int]:
    """Distinct pairs that can jointly emit some infinite word."""
    live = set(range(len(succ)))
    changed = True
    while changed:
        changed = False
        for t in list(live):
            if not any(u < 0 or u in live for u in succ[t]):
                live.discard(t)
                changed = True
    return frozenset(live)


def cryptic_order(G: Generator, cap: int = 64, horizon: int | None = None) -> Order:
    """Smallest ``k >= 1`` such that the state after ``k`` symbols is fixed by the whole future.

    Raises :class:`HorizonInconclusive` if neither synchronization nor a
    recurrence of the ambiguous-pair set is found within ``horizon`` steps.
    """
    horizon = cap if horizon is None else horizon
    if horizon < cap:
        raise ValueError("horizon must be >= cap")
    pairs, succ = _pair_graph(G)
    live = _live_pairs(succ)
    current = frozenset(range(len(pairs)))
    seen = {current}
    for k in range(1, horizon + 1):
        current = _step(current, succ)
        if not (current & live):
            return k if k <= cap else EXCEEDS_CAP
        if current in seen:
            return EXCEEDS_CAP
        seen.add(current)
    raise HorizonInconclusive(
        f"ambiguous-pair set did not stabilize within horizon {horizon}", horizon=horizon
    )


def block_entropy_rate(words: np.ndarray, n_symbols: int) -> float:
    """Estimate ``H(L) - H(L-1)`` from an int array of sampled words of length ``L``."""
    L = words.shape[1]

    def block_h(w: np.ndarray) -> float:
        codes = np.zeros(w.shape[0], dtype=np.int64)
        for col in w.T:
            codes = codes * n_symbols + col
        _, counts = np.unique(codes, return_counts=True)
        return _entropy(counts / counts.sum())

    return block_h(words) - block_h(words[:, : L - 1])
