"""Quantum implementations of predictive generators.

Everything here derives from the overlap (Gram) matrix of the signal states,
``Omega[r, s] = <psi_r|psi_s>``; no state vectors or unitaries are built.
"""

from __future__ import annotations

import csv
import io
from collections import deque
from collections.abc import Mapping, Sequence
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .classical import ClassicalReport, _entropy, classical_report
from .errors import DimensionMismatch, InvariantViolation, NoConvergence, ValidationError
from .generator import PROB_EPS, Generator, StationaryDistribution, _probs, stationary

TWO_PI = 2.0 * np.pi
EIG_CLIP = 1e-9
REPORT_TOL = 1e-10
CHAIN_TOL = 1e-9
COMPRESSION_TOL = 1e-9


# -- phase assignments ---------------------------------------------------------


@dataclass(frozen=True)
class PhaseAssignment:
    """Edge phases ``phi[(symbol, state)]`` on the supported edges of a generator.

    ``values`` follows ``Generator.edges`` order (by state, then symbol) and is
    reduced to ``[0, 2 pi)``.
    """

    edges: tuple[tuple[str, str], ...]
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.edges) != len(self.values):
            raise DimensionMismatch("phase count does not match edge count")
        object.__setattr__(self, "values", tuple(float(np.mod(v, TWO_PI)) for v in self.values))

    @classmethod
    def zeros(cls, G: Generator) -> PhaseAssignment:
        return cls(tuple(G.edge_labels()), (0.0,) * len(G.edges))

    @classmethod
    def from_vector(cls, G: Generator, values: Sequence[float]) -> PhaseAssignment:
        return cls(tuple(G.edge_labels()), tuple(values))

    @classmethod
    def from_mapping(cls, G: Generator, phases: Mapping[tuple[str, str], float]) -> PhaseAssignment:
        """Build from ``{(symbol, state): radians}``; missing supported edges default to 0."""
        labels = G.edge_labels()
        known = set(labels)
        extra = [key for key in phases if tuple(key) not in known]
        if extra:
            raise ValidationError("phases given for unsupported (symbol, state) pairs", pairs=[list(e) for e in extra])
        return cls(tuple(labels), tuple(float(phases.get(e, 0.0)) for e in labels))

    def as_dict(self) -> dict[tuple[str, str], float]:
        return dict(zip(self.edges, self.values))

    def as_array(self, G: Generator) -> np.ndarray:
        """Dense ``phi[x, s]`` with zeros on unsupported pairs."""
        if self.edges != tuple(G.edge_labels()):
            raise DimensionMismatch("phase assignment does not match the generator's edges")
        phi = np.zeros((G.n_symbols, G.n_states))
        for (x, s), v in zip(G.edges, self.values):
            phi[x, s] = v
        return phi


def _phase_array(G: Generator, phases) -> np.ndarray:
    if phases is None:
        return np.zeros((G.n_symbols, G.n_states))
    if isinstance(phases, PhaseAssignment):
        return phases.as_array(G)
    if isinstance(phases, Mapping):
        return PhaseAssignment.from_mapping(G, phases).as_array(G)
    arr = np.asarray(phases, dtype=float)
    if arr.shape == (G.n_symbols, G.n_states):
        return arr
    return PhaseAssignment.from_vector(G, arr).as_array(G)


# -- overlap fixed point -------------------------------------------------------


@dataclass(frozen=True)
class OverlapMatrix:
    states: tuple[str, ...]
    matrix: np.ndarray
    residual: float = 0.0
    iterations: int = 0
    method: str = "iteration"

    def __getitem__(self, key: tuple[str, str]) -> complex:
        r, s = key
        return complex(self.matrix[self.states.index(r), self.states.index(s)])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row", "col", "re", "im"])
        for i, r in enumerate(self.states):
            for j, s in enumerate(self.states):
                z = self.matrix[i, j]
                w.writerow([r, s, repr(float(z.real)), repr(float(z.imag))])
        return buf.getvalue()


def _edge_amplitudes(G: Generator, phi: np.ndarray) -> np.ndarray:
    """``a[x, s] = sqrt(Pr(x|s)) exp(i phi[x, s])``."""
    return np.sqrt(np.asarray(G.symbol_probs)) * np.exp(1j * phi)


def overlap_map(G: Generator, amp: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """One application of ``Omega_rs <- sum_x conj(a_xr) a_xs Omega_{f(x,r) f(x,s)}``."""
    F = np.asarray(G.successor)
    out = np.zeros_like(omega)
    for x in range(G.n_symbols):
        f = np.where(F[x] >= 0, F[x], 0)
        a = amp[x]
        out += np.conj(a)[:, None] * a[None, :] * omega[np.ix_(f, f)]
    return out


def recursion_residual(G: Generator, phases, omega: np.ndarray) -> float:
    amp = _edge_amplitudes(G, _phase_array(G, phases))
    return float(np.abs(overlap_map(G, amp, np.asarray(omega)) - omega).max())


def _linear_solve(G: Generator, amp: np.ndarray) -> np.ndarray:
    # vectorized off-diagonal system (I - M) w = b; diagonal pinned to 1
    F = np.asarray(G.successor)
    n = G.n_states
    off = [(r, s) for r in range(n) for s in range(n) if r != s]
    index = {rs: t for t, rs in enumerate(off)}
    rows, cols, vals = [], [], []
    b = np.zeros(len(off), dtype=complex)
    for t, (r, s) in enumerate(off):
        rows.append(t)
        cols.append(t)
        vals.append(1.0)
        for x in range(G.n_symbols):
            fr, fs = F[x, r], F[x, s]
            if fr < 0 or fs < 0:
                continue
            c = np.conj(amp[x, r]) * amp[x, s]
            if fr == fs:
                b[t] += c
            else:
                rows.append(t)
                cols.append(index[(fr, fs)])
                vals.append(-c)
    A = sp.csc_matrix((vals, (rows, cols)), shape=(len(off), len(off)), dtype=complex)
    w = spla.spsolve(A, b)
    omega = np.eye(n, dtype=complex)
    for t, (r, s) in enumerate(off):
        omega[r, s] = w[t]
    return omega


def solve_overlaps(
    G: Generator,
    phases=None,
    tol: float = 1e-12,
    max_iter: int = 100_000,
    *,
    stall_window: int = 2_000,
) -> OverlapMatrix:
    """Fixed point of the overlap recursion by iteration from the identity.

    If the residual has not reached ``tol`` after ``stall_window`` sweeps the
    vectorized linear system is solved directly instead.
    """
    G.require_predictive()
    phi = _phase_array(G, phases)
    amp = _edge_amplitudes(G, phi)
    n = G.n_states
    omega = np.eye(n, dtype=complex)
    residual = np.inf
    it = 0
    method = "iteration"
    while it < max_iter:
        new = overlap_map(G, amp, omega)
        np.fill_diagonal(new, 1.0)
        residual = float(np.abs(new - omega).max())
        omega = new
        it += 1
        if residual <= tol:
            break
        if it >= stall_window and n > 1:
            try:
                cand = _linear_solve(G, amp)
            except (RuntimeError, ValueError):
                cand = None
            if cand is not None and np.all(np.isfinite(cand)):
                res = recursion_residual(G, phi, cand)
                if res <= tol:
                    omega, residual, method = cand, res, "linear-solve"
                    break
            stall_window = max_iter  # only try the direct solve once
    if residual > tol:
        raise NoConvergence(
            f"overlap recursion did not reach tolerance {tol:g} (residual {residual:.3e})",
            residual=residual,
            iterate=omega,
        )
    omega = 0.5 * (omega + omega.conj().T)
    np.fill_diagonal(omega, 1.0)
    _check_overlap(omega)
    omega.setflags(write=False)
    return OverlapMatrix(G.states, omega, residual=recursion_residual(G, phi, omega), iterations=it, method=method)


def _check_overlap(omega: np.ndarray) -> None:
    if np.abs(omega - omega.conj().T).max() > 1e-10:
        raise InvariantViolation("overlap matrix is not Hermitian")
    lo = float(np.linalg.eigvalsh(omega).min())
    if lo < -1e-9:
        raise InvariantViolation("overlap matrix is not positive semidefinite", min_eigenvalue=lo)


def _as_matrix(omega) -> np.ndarray:
    return np.asarray(omega.matrix if isinstance(omega, OverlapMatrix) else omega)


# -- spectra -------------------------------------------------------------------


def gram_spectrum(weights: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Eigenvalues of ``sum_s w_s |psi_s><psi_s|`` from ``W^1/2 Omega W^1/2``."""
    d = np.sqrt(np.asarray(weights, dtype=float))
    lam = np.linalg.eigvalsh(d[:, None] * omega * d[None, :])
    return lam


def memory_spectrum(omega, pi) -> np.ndarray:
    """Spectrum of the stationary memory state ``rho_S``, sorted descending."""
    M = _as_matrix(omega)
    p = pi.probs if isinstance(pi, StationaryDistribution) else np.asarray(pi, dtype=float)
    if M.shape != (p.size, p.size):
        raise DimensionMismatch(f"overlap matrix {M.shape} does not match distribution of size {p.size}")
    return gram_spectrum(p, M)[::-1]


def von_neumann(spectrum) -> float:
    """Entropy in bits of an eigenvalue list; values in ``[-1e-9, 0)`` are clipped to 0."""
    lam = np.asarray(spectrum, dtype=float)
    if lam.min(initial=0.0) < -EIG_CLIP:
        raise InvariantViolation("spectrum has a significantly negative eigenvalue", min_eigenvalue=float(lam.min()))
    return _entropy(np.clip(lam, 0.0, None))


@dataclass(frozen=True)
class CqState:
    """Classical-quantum state ``sum_x p(x) rho_x (x) |x><x|``.

    ``conditionals[x]`` is any PSD unit-trace matrix with the spectrum of
    ``rho_x``: either the density matrix itself or a weighted Gram matrix.
    """

    px: np.ndarray
    conditionals: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        px = np.asarray(self.px, dtype=float)
        if len(self.conditionals) != px.size:
            raise DimensionMismatch("one conditional operator per symbol is required")
        if abs(px.sum() - 1.0) > 1e-10 or px.min() < 0:
            raise ValidationError("symbol distribution is not normalized")
        for rho in self.conditionals:
            if abs(np.trace(rho).real - 1.0) > 1e-10:
                raise ValidationError("conditional operator does not have unit trace")
        object.__setattr__(self, "px", px)

    def spectra(self) -> list[np.ndarray]:
        return [np.linalg.eigvalsh(np.asarray(rho))[::-1] for rho in self.conditionals]

    def joint_spectrum(self) -> np.ndarray:
        return np.concatenate([p * lam for p, lam in zip(self.px, self.spectra())])

    def marginal_spectrum(self) -> np.ndarray:
        """Spectrum of ``rho_A = sum_x p(x) rho_x`` (requires same-dimension conditionals)."""
        rho = sum(p * np.asarray(r) for p, r in zip(self.px, self.conditionals))
        return np.linalg.eigvalsh(rho)[::-1]


def cq_state(G: Generator, pi, omega) -> CqState:
    """Post-evolution state ``rho'_{S'X}``: ``rho'_{S|x}`` mixes ``|psi_f(x,s)>`` with weights ``Pr(x|s) pi(s) / p(x)``."""
    p = _probs(pi, G)
    M = _as_matrix(omega)
    F = np.asarray(G.successor)
    P = np.asarray(G.symbol_probs)
    px = P @ p
    conds = []
    keep = []
    for x in range(G.n_symbols):
        if px[x] <= PROB_EPS:
            continue
        w = np.zeros(G.n_states)
        for s in range(G.n_states):
            if F[x, s] >= 0:
                w[F[x, s]] += P[x, s] * p[s]
        w /= px[x]
        d = np.sqrt(w)
        conds.append(d[:, None] * M * d[None, :])
        keep.append(px[x])
    keep_arr = np.asarray(keep)
    return CqState(keep_arr / keep_arr.sum(), tuple(conds))


def conditional_spectra(G: Generator, pi, omega) -> list[np.ndarray]:
    return cq_state(G, pi, omega).spectra()


# -- reports -------------------------------------------------------------------


@dataclass(frozen=True)
class QuantumReport:
    C_q: float
    N_q: float
    W_q: float
    Delta_C: float
    Delta_W: float
    e_q: Optional[float]

    def to_dict(self) -> dict:
        return asdict(self)


def quantum_report(
    G: Generator,
    pi=None,
    omega=None,
    *,
    classical: ClassicalReport | None = None,
    phases=None,
) -> QuantumReport:
    """Quantum memory ``C_q``, non-Markovity ``N_q``, work rate and advantages.

    ``omega`` defaults to the fixed point for ``phases`` (all-zero if omitted).
    The chain ``-h_mu <= W_q <= W_mu`` and ``C_q <= C_mu`` are checked.
    """
    if pi is None:
        pi = stationary(G)
    if omega is None:
        omega = solve_overlaps(G, phases)
    if classical is None:
        classical = classical_report(G, pi, orders=False)
    p = _probs(pi, G)
    cq = cq_state(G, p, omega)
    C_q = von_neumann(memory_spectrum(omega, p))
    N_q = float(sum(px * von_neumann(lam) for px, lam in zip(cq.px, cq.spectra())))
    W_q = C_q - N_q - classical.H_X
    dC = classical.C_mu - C_q
    dW = classical.W_mu - W_q
    e_q = dW / dC if dC > COMPRESSION_TOL else None

    if C_q > classical.C_mu + CHAIN_TOL:
        raise InvariantViolation("C_q exceeds C_mu", C_q=C_q, C_mu=classical.C_mu)
    if W_q > classical.W_mu + CHAIN_TOL or W_q < -classical.h_mu - CHAIN_TOL:
        raise InvariantViolation("W_q outside [-h_mu, W_mu]", W_q=W_q, W_mu=classical.W_mu, h_mu=classical.h_mu)
    return QuantumReport(C_q, N_q, W_q, dC, dW, e_q)


@dataclass(frozen=True)
class DataProcessingCheck:
    I_q: float
    I_classical: float
    holds: bool


def data_processing_check(G: Generator, pi, omega) -> DataProcessingCheck:
    """Compare ``I_q[S':X] = C_q - N_q`` with the classical ``I[S':X]``."""
    p = _probs(pi, G)
    cq = cq_state(G, p, omega)
    C_q = von_neumann(memory_spectrum(omega, p))
    N_q = float(sum(px * von_neumann(lam) for px, lam in zip(cq.px, cq.spectra())))
    I_q = C_q - N_q

    sx = np.einsum("xst,s->tx", G.tensor, p)
    I_c = _entropy(sx.sum(axis=1)) + _entropy(sx.sum(axis=0)) - _entropy(sx.ravel())
    return DataProcessingCheck(I_q, I_c, bool(I_q <= I_c + CHAIN_TOL))


# -- gauge structure -----------------------------------------------------------


def gauge_transform(G: Generator, phases: PhaseAssignment, psi) -> PhaseAssignment:
    """Induced phases ``phi'_xs = phi_xs - Psi_s + Psi_f(x,s)`` for state phases ``Psi``."""
    if isinstance(psi, Mapping):
        psi = np.array([float(psi[s]) for s in G.states])
    psi = np.asarray(psi, dtype=float)
    if psi.shape != (G.n_states,):
        raise DimensionMismatch("one gauge phase per state is required")
    F = np.asarray(G.successor)
    vals = [v - psi[s] + psi[F[x, s]] for (x, s), v in zip(G.edges, phases.values)]
    return PhaseAssignment(phases.edges, tuple(vals))


@dataclass(frozen=True)
class LoopInvariant:
    """Signed loop sum; ``edges`` holds ``(symbol, state, sign)`` triples."""

    edges: tuple[tuple[str, str, int], ...]
    value: float

    def coefficients(self, G: Generator) -> np.ndarray:
        """Integer coefficient vector over ``G.edges``."""
        pos = {lab: i for i, lab in enumerate(G.edge_labels())}
        c = np.zeros(len(G.edges), dtype=int)
        for x, s, sign in self.edges:
            c[pos[(x, s)]] += sign
        return c


def _incidence(G: Generator) -> list[list[tuple[int, int, int]]]:
    # undirected view of the transition multigraph: (edge, neighbour, orientation)
    F = np.asarray(G.successor)
    incident: list[list[tuple[int, int, int]]] = [[] for _ in range(G.n_states)]
    for e, (x, s) in enumerate(G.edges):
        t = int(F[x, s])
        incident[s].append((e, t, +1))
        if t != s:
            incident[t].append((e, s, -1))
    return incident


def _spanning_tree(incident, start: int) -> tuple[dict[int, tuple[int, int, int]], set[int]]:
    parent_edge: dict[int, tuple[int, int, int]] = {}  # node -> (edge, parent, sign from parent)
    visited = {start}
    tree: set[int] = set()
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for e, v, sign in incident[u]:
            if v not in visited:
                visited.add(v)
                parent_edge[v] = (e, u, sign)
                tree.add(e)
                queue.append(v)
    return parent_edge, tree


def cotree_edges(G: Generator, root: str | None = None) -> list[int]:
    """Indices (into ``G.edges``) of the edges outside the BFS spanning tree; one per loop invariant."""
    G.require_predictive()
    start = G.state_index[root] if root is not None else 0
    _, tree = _spanning_tree(_incidence(G), start)
    return [e for e in range(len(G.edges)) if e not in tree]


def loop_invariants(G: Generator, phases: PhaseAssignment | None = None, root: str | None = None) -> list[LoopInvariant]:
    """Gauge invariants: one signed loop sum per non-tree edge of a BFS spanning tree.

    The transition multigraph has an edge ``s -> f(x, s)`` per supported pair;
    ``root`` selects the tree (and hence the cycle basis).
    """
    G.require_predictive()
    if phases is None:
        phases = PhaseAssignment.zeros(G)
    F = np.asarray(G.successor)
    phi = dict(zip(G.edges, phases.values))
    incident = _incidence(G)
    start = G.state_index[root] if root is not None else 0
    parent_edge, tree = _spanning_tree(incident, start)

    def path_to_root(v: int) -> list[tuple[int, int]]:
        # signed edges along the tree path from the root down to v
        out = []
        while v != start:
            e, u, sign = parent_edge[v]
            out.append((e, sign))
            v = u
        return out[::-1]

    labels = G.edge_labels()
    result = []
    for e, (x, s) in enumerate(G.edges):
        if e in tree:
            continue
        t = int(F[x, s])
        # cycle: root -> s (tree), s -> t (edge e), t -> root (tree, reversed)
        coeff: dict[int, int] = {}
        for edge, sign in path_to_root(s):
            coeff[edge] = coeff.get(edge, 0) + sign
        coeff[e] = coeff.get(e, 0) + 1
        for edge, sign in path_to_root(t):
            coeff[edge] = coeff.get(edge, 0) - sign
        terms = tuple((labels[k][0], labels[k][1], c) for k, c in sorted(coeff.items()) if c != 0)
        value = float(np.mod(sum(c * phi[G.edges[k]] for k, c in coeff.items()), TWO_PI))
        result.append(LoopInvariant(terms, value))
    return result


def gauge_fix(omega, root: int = 0, atol: float = 1e-12, path: Sequence[int] | None = None) -> np.ndarray:
    """Rephase signal states so chosen overlaps become real and nonnegative.

    By default the overlaps along a BFS tree of nonzero entries from ``root``
    are fixed; with ``path`` the chain ``Omega[path[i], path[i+1]]`` is fixed instead.
    """
    M = np.array(_as_matrix(omega), dtype=complex)
    n = M.shape[0]
    psi = np.zeros(n)
    # Omega'_uv = exp(i(Psi_v - Psi_u)) Omega_uv
    if path is not None:
        for u, v in zip(path[:-1], path[1:]):
            psi[v] = psi[u] - np.angle(M[u, v])
    else:
        visited = {root}
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for v in range(n):
                if v not in visited and abs(M[u, v]) > atol:
                    psi[v] = psi[u] - np.angle(M[u, v])
                    visited.add(v)
                    queue.append(v)
    phase = np.exp(1j * psi)
    return np.conj(phase)[:, None] * M * phase[None, :]


def bargmann_phase(omega, cycle: Sequence[int]) -> float:
    """Gauge-invariant ``arg(Omega_{c0 c1} Omega_{c1 c2} ... Omega_{cN c0})`` in ``[0, 2 pi)``."""
    M = _as_matrix(omega)
    prod = 1.0 + 0.0j
    for a, b in zip(cycle, list(cycle[1:]) + [cycle[0]]):
        prod *= M[a, b]
    return float(np.mod(np.angle(prod), TWO_PI))
