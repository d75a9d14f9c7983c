"""Finite hidden Markov generators: validation, stationary law, minimization, sampling."""

from __future__ import annotations

import json
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import (
    DimensionMismatch,
    DuplicateEdge,
    NegativeProbability,
    NoConvergence,
    NotIrreducible,
    NotPredictive,
    RowSumMismatch,
    UnknownLabel,
    ValidationError,
)

# probabilities at or below this are treated as structural zeros
PROB_EPS = 1e-12
ROW_SUM_TOL = 1e-12
STATIONARY_RESIDUAL_TOL = 1e-10
MERGE_TOL = 1e-9


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Transition:
    source: str
    symbol: str
    target: str
    p: float


@dataclass(frozen=True)
class Generator:
    """A validated finite generator ``Pr(s', x | s)``.

    States and symbols keep their declaration order; that order is the
    canonical index order for every array exposed here.  Construction
    raises a :class:`~qmemc.errors.ValidationError` subclass if the machine
    is not a proper irreducible HMM.
    """

    states: tuple[str, ...]
    alphabet: tuple[str, ...]
    transitions: tuple[Transition, ...]
    name: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "states", tuple(str(s) for s in self.states))
        object.__setattr__(self, "alphabet", tuple(str(x) for x in self.alphabet))
        object.__setattr__(self, "transitions", tuple(self.transitions))
        self._check()

    # -- construction helpers -------------------------------------------------

    @classmethod
    def from_edges(
        cls,
        states: Sequence[str],
        alphabet: Sequence[str],
        edges: Sequence[tuple[str, str, str, float]],
        name: str = "",
    ) -> Generator:
        return cls(
            tuple(states),
            tuple(alphabet),
            tuple(Transition(str(a), str(x), str(b), float(p)) for a, x, b, p in edges),
            name=name,
        )

    def _check(self) -> None:
        if not self.states:
            raise ValidationError("machine has no states")
        if not self.alphabet:
            raise ValidationError("machine has no symbols")
        for labels, kind in ((self.states, "state"), (self.alphabet, "symbol")):
            if len(set(labels)) != len(labels):
                raise ValidationError(f"duplicate {kind} label", labels=list(labels))

        sidx = {s: i for i, s in enumerate(self.states)}
        xidx = {x: i for i, x in enumerate(self.alphabet)}
        seen: set[tuple[str, str, str]] = set()
        rows = np.zeros(len(self.states))
        for t in self.transitions:
            if not np.isfinite(t.p) or t.p < 0.0:
                raise NegativeProbability(
                    f"negative probability {t.p!r} on {t.source} -{t.symbol}-> {t.target}",
                    edge=[t.source, t.symbol, t.target],
                    p=t.p,
                )
        for t in self.transitions:
            if t.source not in sidx or t.target not in sidx:
                raise UnknownLabel("transition references an undeclared state", edge=[t.source, t.symbol, t.target])
            if t.symbol not in xidx:
                raise UnknownLabel("transition references an undeclared symbol", edge=[t.source, t.symbol, t.target])
            if t.p > 1.0 + ROW_SUM_TOL:
                raise RowSumMismatch(f"probability {t.p!r} exceeds 1", state=t.source, deficit=1.0 - t.p)
            key = (t.source, t.symbol, t.target)
            if key in seen:
                raise DuplicateEdge(f"edge {t.source} -{t.symbol}-> {t.target} listed twice", edge=list(key))
            seen.add(key)
            rows[sidx[t.source]] += t.p
        for s, total in zip(self.states, rows):
            if abs(total - 1.0) > ROW_SUM_TOL:
                raise RowSumMismatch(
                    f"outgoing probabilities of state {s!r} sum to {total!r}",
                    state=s,
                    deficit=float(1.0 - total),
                )

        n = len(self.states)
        if n > 1:
            adj = (self.state_matrix > PROB_EPS).astype(np.int8)
            ncomp, labels = connected_components(adj, directed=True, connection="strong")
            if ncomp > 1:
                # report the states outside the component containing the first state
                outside = [s for s, lab in zip(self.states, labels) if lab != labels[0]]
                raise NotIrreducible(
                    f"machine is not strongly connected; {len(outside)} state(s) not mutually reachable with {self.states[0]!r}",
                    unreachable=outside,
                )

    # -- derived arrays -------------------------------------------------------

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_symbols(self) -> int:
        return len(self.alphabet)

    @cached_property
    def state_index(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.states)}

    @cached_property
    def symbol_index(self) -> dict[str, int]:
        return {x: i for i, x in enumerate(self.alphabet)}

    @cached_property
    def tensor(self) -> np.ndarray:
        """``T[x, s, s'] = Pr(s', x | s)``."""
        T = np.zeros((self.n_symbols, self.n_states, self.n_states))
        si, xi = self.state_index, self.symbol_index
        for t in self.transitions:
            T[xi[t.symbol], si[t.source], si[t.target]] += t.p
        return _frozen(T)

    @cached_property
    def state_matrix(self) -> np.ndarray:
        """Row-stochastic ``Pr(s' | s)``."""
        return _frozen(self.tensor.sum(axis=0))

    @cached_property
    def symbol_probs(self) -> np.ndarray:
        """``P[x, s] = Pr(x | s)``."""
        return _frozen(self.tensor.sum(axis=2))

    @cached_property
    def predictive(self) -> bool:
        support = self.tensor > PROB_EPS
        return bool((support.sum(axis=2) <= 1).all())

    @cached_property
    def successor(self) -> np.ndarray:
        """``F[x, s] = f(x, s)``, or -1 where ``Pr(x|s) = 0``.  Predictive machines only."""
        if not self.predictive:
            raise NotPredictive("machine is not predictive (unifilar)")
        support = self.tensor > PROB_EPS
        F = np.where(support.any(axis=2), support.argmax(axis=2), -1)
        return _frozen(F.astype(np.int64))

    @cached_property
    def edges(self) -> tuple[tuple[int, int], ...]:
        """Supported ``(symbol, state)`` index pairs, ordered by state then symbol."""
        P = self.symbol_probs
        return tuple((x, s) for s in range(self.n_states) for x in range(self.n_symbols) if P[x, s] > PROB_EPS)

    def edge_labels(self) -> list[tuple[str, str]]:
        return [(self.alphabet[x], self.states[s]) for x, s in self.edges]

    def require_predictive(self) -> None:
        if not self.predictive:
            raise NotPredictive("operation requires a predictive (unifilar) generator")

    # -- serialization --------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {
            "states": list(self.states),
            "alphabet": list(self.alphabet),
            "transitions": [
                {"from": t.source, "symbol": t.symbol, "to": t.target, "p": t.p} for t in self.transitions
            ],
        }


def validate(raw: Mapping[str, Any]) -> Generator:
    """Build a :class:`Generator` from a parsed machine description."""
    try:
        states = raw["states"]
        alphabet = raw["alphabet"]
        transitions = raw["transitions"]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"machine description is missing field {exc}") from None
    edges = []
    for i, t in enumerate(transitions):
        try:
            edges.append((t["from"], t["symbol"], t["to"], float(t["p"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"transition #{i} is malformed: {exc}", index=i) from None
    return Generator.from_edges(states, alphabet, edges, name=str(raw.get("name", "")))


def load_machine(path: str | Path) -> Generator:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"{path}: cannot read machine file ({exc.strerror})", path=str(path)) from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})", path=str(path)) from None
    return validate(raw)


def save_machine(G: Generator, path: str | Path) -> None:
    Path(path).write_text(json.dumps(G.to_dict(), indent=2) + "\n", encoding="utf-8")


# -- stationary distribution --------------------------------------------------


@dataclass(frozen=True)
class StationaryDistribution:
    states: tuple[str, ...]
    probs: np.ndarray

    def __getitem__(self, state: str) -> float:
        return float(self.probs[self.states.index(state)])

    def as_dict(self) -> dict[str, float]:
        return {s: float(p) for s, p in zip(self.states, self.probs)}


def _residual(T: np.ndarray, pi: np.ndarray) -> float:
    return float(np.abs(pi @ T - pi).max())


def stationary(G: Generator, *, power_tol: float = 1e-14, max_iter: int = 1_000_000) -> StationaryDistribution:
    """Unique stationary distribution of an irreducible generator.

    Dense solve of ``(T^T - I) pi = 0`` with the last equation replaced by
    normalization; lazy power iteration is the fallback.
    """
    T = np.asarray(G.state_matrix)
    n = T.shape[0]
    pi = None
    if n == 1:
        pi = np.ones(1)
    else:
        A = T.T - np.eye(n)
        A[-1, :] = 1.0
        b = np.zeros(n)
        b[-1] = 1.0
        try:
            cand = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            cand = None
        if cand is not None and np.all(np.isfinite(cand)):
            cand = np.clip(cand, 0.0, None)
            cand /= cand.sum()
            if _residual(T, cand) <= STATIONARY_RESIDUAL_TOL:
                pi = cand
    if pi is None:
        lazy = 0.5 * (T + np.eye(n))
        v = np.full(n, 1.0 / n)
        for _ in range(max_iter):
            w = v @ lazy
            if np.abs(w - v).max() <= power_tol:
                v = w
                break
            v = w
        else:
            raise NoConvergence("power iteration for the stationary distribution hit its cap", residual=_residual(T, v))
        pi = v / v.sum()
        if _residual(T, pi) > STATIONARY_RESIDUAL_TOL:
            raise NoConvergence("stationary residual above tolerance", residual=_residual(T, pi))
    return StationaryDistribution(G.states, _frozen(pi))


def _probs(pi: StationaryDistribution | np.ndarray, G: Generator) -> np.ndarray:
    p = pi.probs if isinstance(pi, StationaryDistribution) else np.asarray(pi, dtype=float)
    if p.shape != (G.n_states,):
        raise DimensionMismatch(f"distribution has shape {p.shape}, expected ({G.n_states},)")
    return p


# -- minimization ---------------------------------------------------------------------------


def minimize(G: Generator) -> Generator:
    """Merge predictively equivalent states (Moore partition refinement).

    Each merged block is represented by its first member in declaration order.
    """
    G.require_predictive()
    P = np.asarray(G.symbol_probs)
    F = np.asarray(G.successor)
    n = G.n_states
    block = np.zeros(n, dtype=int)
    nblocks = 1
    while True:
        reps: list[int] = []
        new_block = np.empty(n, dtype=int)
        for s in range(n):
            succ = tuple(int(block[f]) if f >= 0 else -1 for f in F[:, s])
            for b, r in enumerate(reps):
                if block[r] != block[s]:
                    continue
                r_succ = tuple(int(block[f]) if f >= 0 else -1 for f in F[:, r])
                if r_succ == succ and np.all(np.abs(P[:, r] - P[:, s]) <= MERGE_TOL):
                    new_block[s] = b
                    break
            else:
                new_block[s] = len(reps)
                reps.append(s)
        block = new_block
        if len(reps) == nblocks:
            break
        nblocks = len(reps)

    if nblocks == n:
        return G
    edges = []
    for b, r in enumerate(reps):
        for x in range(G.n_symbols):
            if F[x, r] >= 0:
                target = reps[block[F[x, r]]]
                edges.append((G.states[r], G.alphabet[x], G.states[target], float(P[x, r])))
    return Generator.from_edges([G.states[r] for r in reps], G.alphabet, edges, name=G.name)


# -- joint distribution & sampling -----------------------------------------------------------


@dataclass(frozen=True)
class JointTable:
    """Dense ``P(s', x, s) = Pr(s', x | s) pi(s)`` indexed ``[s', x, s]``."""

    states: tuple[str, ...]
    alphabet: tuple[str, ...]
    table: np.ndarray

    def symbol_marginal(self) -> np.ndarray:
        return self.table.sum(axis=(0, 2))

    def next_state_symbol(self) -> np.ndarray:
        """Marginal ``P(s', x)`` indexed ``[s', x]``."""
        return self.table.sum(axis=2)


def joint_distribution(G: Generator, pi: StationaryDistribution | np.ndarray) -> JointTable:
    p = _probs(pi, G)
    table = np.einsum("xst,s->txs", G.tensor, p)
    return JointTable(G.states, G.alphabet, _frozen(np.ascontiguousarray(table)))


def sample_symbols(
    G: Generator, pi: StationaryDistribution | np.ndarray, length: int, count: int, seed: int
) -> np.ndarray:
    """Sample ``count`` words of ``length`` symbols as an int array of symbol indices."""
    p = _probs(pi, G)
    rng = np.random.default_rng(seed)
    n, m = G.n_states, G.n_symbols
    # one row per state: cumulative weights over flattened (symbol, target) outcomes
    flat = np.transpose(G.tensor, (1, 0, 2)).reshape(n, m * n)
    cum = np.cumsum(flat, axis=1)
    cum[:, -1] = np.inf
    state = rng.choice(n, size=count, p=p / p.sum())
    out = np.empty((count, length), dtype=np.int64)
    for t in range(length):
        u = rng.random(count)
        outcome = (u[:, None] >= cum[state]).sum(axis=1)
        # guard against round-off landing on a zero-probability outcome
        outcome = np.minimum(outcome, m * n - 1)
        bad = flat[state, outcome] <= PROB_EPS
        if bad.any():
            for i in np.flatnonzero(bad):
                row = flat[state[i]]
                outcome[i] = int(np.flatnonzero(row > PROB_EPS)[-1])
        out[:, t] = outcome // n
        state = outcome % n
    return out


def sample_words(
    G: Generator, pi: StationaryDistribution | np.ndarray, length: int, count: int, seed: int
) -> list[tuple[str, ...]]:
    """Sample words; initial state from ``pi``.  Deterministic for a fixed seed."""
    idx = sample_symbols(G, pi, length, count, seed)
    labels = np.array(G.alphabet, dtype=object)
    return [tuple(row) for row in labels[idx]]


def word_probability(G: Generator, pi: StationaryDistribution | np.ndarray, word: Sequence[str]) -> float:
    """Exact stationary probability of a word."""
    v = _probs(pi, G).copy()
    for x in word:
        v = v @ G.tensor[G.symbol_index[x]]
    return float(v.sum())
