"""One-shot entropies, spectrum smoothing, single-shot work bound and AEP rates.

Smoothing is restricted to perturbations diagonal in the eigenbasis, so every
smoothed value is attained by an explicit state inside the ball
``sqrt(1 - F) < eps`` with ``F = Tr sqrt(sqrt(rho) sigma sqrt(rho))``.  A
smoothed max-entropy is therefore an upper bound on the true smooth
max-entropy and a smoothed min-entropy a lower bound on the true one.

Spectra are handled as groups of equal eigenvalues ``(log value, log
multiplicity)`` so that the i.i.d. spectra of many copies can be treated by
type class without listing ``d**N`` eigenvalues.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from .classical import _entropy
from .errors import AlphabetTooLarge, EpsilonOutOfRange, InputError, NotNormalized
from .generator import Generator, _probs
from .quantum import CqState, cq_state, memory_spectrum, von_neumann

LN2 = np.log(2.0)
NORM_TOL = 1e-10
# infidelity budgets below this are not resolvable in double precision
MIN_BUDGET = 1e-14
# keep a relative margin so the ball membership is strict
BUDGET_MARGIN = 1e-9
MAX_TYPE_CLASSES = 5_000_000


def _check_spectrum(spectrum) -> np.ndarray:
    lam = np.asarray(spectrum, dtype=float).ravel()
    if lam.size == 0 or lam.min() < -1e-9 or abs(lam.sum() - 1.0) > NORM_TOL:
        raise NotNormalized(f"not a normalized spectrum (sum={lam.sum()!r})")
    return np.clip(lam, 0.0, None)


def _check_eps(eps: float) -> float:
    eps = float(eps)
    if not 0.0 < eps < 1.0:
        raise EpsilonOutOfRange(f"epsilon must lie in (0, 1), got {eps!r}", epsilon=eps)
    return eps


# -- unsmoothed entropies ----------------------------------------------------------


def h_min_max_unconditional(spectrum) -> tuple[float, float]:
    """``(H_min, H_max) = (-log2 max lambda, 2 log2 sum sqrt lambda)``."""
    lam = _check_spectrum(spectrum)
    return float(-np.log2(lam.max())), float(2.0 * np.log2(np.sqrt(lam).sum()))


def h_min_max_conditional_cq(cq: CqState) -> tuple[float, float]:
    """Conditional min/max entropy of ``A`` given a classical ``X``.

    ``H_min = -log2 sum_x p(x) lambda_max(rho_x)`` and
    ``H_max = log2 sum_x p(x) 2**H_max(rho_x)``.
    """
    spectra = [np.clip(s, 0.0, None) for s in cq.spectra()]
    guess = float(np.dot(cq.px, [s.max() for s in spectra]))
    hmax = float(np.dot(cq.px, [np.sqrt(s).sum() ** 2 for s in spectra]))
    return float(-np.log2(guess)), float(np.log2(hmax))


# -- grouped spectra ------------------------------------------------------------


@dataclass(frozen=True)
class GroupedSpectrum:
    """Eigenvalues ``exp(logv[i])`` each repeated ``exp(logc[i])`` times."""

    logv: np.ndarray
    logc: np.ndarray

    @classmethod
    def from_spectrum(cls, spectrum) -> GroupedSpectrum:
        lam = np.asarray(spectrum, dtype=float)
        lam = lam[lam > 0.0]
        return cls(np.log(lam), np.zeros(lam.size))

    @property
    def log_dim(self) -> float:
        return float(logsumexp(self.logc))

    def mass(self) -> np.ndarray:
        return np.exp(self.logc + self.logv)


def _budget(eps: float) -> float:
    # sqrt(1 - F) < eps  <=>  1 - F < eps**2
    return eps * eps * (1.0 - BUDGET_MARGIN)


def _cut_infidelity(delta: np.ndarray) -> np.ndarray:
    # zeroing mass delta and renormalizing leaves F = sqrt(1 - delta)
    with np.errstate(divide="ignore"):
        return -np.expm1(0.5 * np.log1p(-np.minimum(delta, 1.0)))


def _hmax_cut(g: GroupedSpectrum, eps: float) -> tuple[float, int, float, float]:
    """Best feasible tail cut: (H_max bits, whole groups cut, log items cut from the next group, infidelity)."""
    order = np.argsort(g.logv, kind="stable")
    logv, logc = g.logv[order], g.logc[order]
    half = logc + 0.5 * logv
    K = logv.size
    unsmoothed = float(2.0 * logsumexp(half) / LN2)
    budget = _budget(eps)
    if budget < MIN_BUDGET or K <= 1:
        return unsmoothed, 0, -np.inf, 0.0

    mass = np.exp(logc + logv)
    cum = np.concatenate([[0.0], np.cumsum(mass)])  # mass removed by cutting the first j groups
    infid = _cut_infidelity(cum)
    # suffix log-sums of sqrt weights: lse[j] = log sum_{i >= j} c_i sqrt(v_i)
    lse = np.concatenate([np.logaddexp.accumulate(half[::-1])[::-1], [-np.inf]])
    feasible = np.flatnonzero((infid < budget) & (np.arange(K + 1) < K))
    j_max = int(feasible.max())
    values = 2.0 * lse[feasible] / LN2 - np.log2(1.0 - cum[feasible])
    best = int(np.argmin(values))
    best_val, best_j, best_n, best_inf = float(values[best]), int(feasible[best]), -np.inf, float(infid[feasible[best]])

    # partial cut of group j_max: n items of value v
    if j_max < K - 1 or logc[j_max] > 0.0:
        # largest delta with infidelity < budget: 1 - sqrt(1 - delta) < budget
        delta_max = -np.expm1(2.0 * np.log1p(-budget))
        room = delta_max - cum[j_max]
        if room > 0:
            log_n = np.log(room) - logv[j_max] + np.log1p(-1e-9)
            if log_n < 40.0:
                # whole items only
                n = np.floor(np.exp(log_n))
                log_n = np.log(n) if n >= 1 else -np.inf
            if np.isfinite(log_n) and log_n >= 0.0 and log_n < logc[j_max]:
                delta = cum[j_max] + np.exp(log_n + logv[j_max])
                kept = logc[j_max] + np.log1p(-np.exp(log_n - logc[j_max])) + 0.5 * logv[j_max]
                log_rest = np.logaddexp(kept, lse[j_max + 1])
                val = float(2.0 * log_rest / LN2 - np.log2(1.0 - delta))
                inf = float(_cut_infidelity(np.array([delta]))[0])
                if inf < budget and val < best_val:
                    best_val, best_j, best_n, best_inf = val, j_max, float(log_n), inf
    return min(best_val, unsmoothed), best_j, best_n, best_inf


def _log_abs_expm1(d: np.ndarray) -> np.ndarray:
    out = np.empty_like(d)
    big = d > 30.0
    out[big] = d[big]
    with np.errstate(divide="ignore"):
        out[~big] = np.log(np.abs(np.expm1(d[~big])))
    return out


def _water_level(logv: np.ndarray, logc: np.ndarray, logt: float) -> tuple[float, float]:
    """Normalized ``q = min(c v, t)``; returns ``(log c, infidelity 1 - F(p, q))``."""
    order = np.argsort(-logv, kind="stable")
    lv, lc = logv[order], logc[order]
    K = lv.size
    logC = np.concatenate([[-np.inf], np.logaddexp.accumulate(lc)])  # counts of the top j groups
    logM = np.concatenate([np.logaddexp.accumulate((lc + lv)[::-1])[::-1], [-np.inf]])  # mass of groups j..
    # total mass when c just brings group j to the cap (groups 0..j capped)
    logS = np.logaddexp(logt + logC[1:], logt - lv + logM[1:])
    hit = np.flatnonzero(logS >= 0.0)
    if hit.size == 0:  # only at t = 1/d within rounding: q uniform
        logc_j = float(logt - lv[-1])
    else:
        j = int(hit[0])  # groups 0..j-1 capped, the rest scaled
        capped = float(np.exp(logt + logC[j]))
        logc_j = float(np.log1p(-min(capped, 1.0)) - logM[j]) if capped < 1.0 else float(logt - lv[j])
        logc_j = max(logc_j, 0.0)
    logq = np.minimum(logc_j + logv, logt)
    # 1 - F = 0.5 * sum c_i (sqrt v_i - sqrt q_i)^2, evaluated without cancellation
    terms = logc + logv + 2.0 * _log_abs_expm1(0.5 * (logq - logv))
    infid = 0.5 * float(np.exp(logsumexp(terms))) if np.isfinite(terms).any() else 0.0
    return logc_j, infid


def _cap_search(groups: list[GroupedSpectrum], weights: np.ndarray, eps: float) -> tuple[float, list[float]]:
    """Smallest common cap ``tau`` on the conditional spectra within the ball.

    Each block ``x`` is capped at ``max(tau, 1/d_x)`` with its weight held fixed;
    returns ``(log tau, per-block log caps)``.
    """
    tops = [float(g.logv.max()) for g in groups]
    floors = [-g.log_dim for g in groups]
    budget = _budget(eps)
    hi = max(tops)
    if budget < MIN_BUDGET:
        return hi, tops

    def infidelity(logtau: float) -> tuple[float, list[float]]:
        total, caps = 0.0, []
        for g, w, top, floor in zip(groups, weights, tops, floors):
            cap = max(logtau, floor)
            if cap >= top:
                caps.append(top)
                continue
            caps.append(cap)
            total += w * _water_level(g.logv, g.logc, cap)[1]
        return total, caps

    lo = max(floors) if len(groups) == 1 else min(floors)
    inf_lo, _ = infidelity(lo)
    if inf_lo < budget:
        return lo, infidelity(lo)[1]
    a, b = lo, hi  # infidelity(a) >= budget > infidelity(b)
    for _ in range(200):
        mid = 0.5 * (a + b)
        if infidelity(mid)[0] < budget:
            b = mid
        else:
            a = mid
        if b - a < 1e-13 * max(1.0, abs(b)):
            break
    return b, infidelity(b)[1]


# -- public smoothing ------------------------------------------------------------


@dataclass(frozen=True)
class SpectrumSmoothing:
    original: np.ndarray
    smoothed: np.ndarray
    distance: float
    epsilon: float
    direction: str
    value: float
    certifies: str

    def to_dict(self) -> dict:
        out = asdict(self)
        out["original"] = self.original.tolist()
        out["smoothed"] = self.smoothed.tolist()
        return out


def smooth_spectrum(spectrum, eps: float, direction: str = "max") -> SpectrumSmoothing:
    """Diagonal smoothing of a spectrum inside the ``eps`` ball.

    ``direction="max"`` zeroes the smallest eigenvalues (upper bound on the
    smooth max-entropy); ``direction="min"`` caps the largest ones and
    redistributes the excess (lower bound on the smooth min-entropy).
    """
    eps = _check_eps(eps)
    lam = _check_spectrum(spectrum)
    if direction == "max":
        g = GroupedSpectrum.from_spectrum(lam)
        _, j, _, _ = _hmax_cut(g, eps)
        pos = np.flatnonzero(lam > 0.0)
        order = pos[np.argsort(np.log(lam[pos]), kind="stable")]
        q = lam.copy()
        q[order[:j]] = 0.0
        q /= q.sum()
        value = float(2.0 * np.log2(np.sqrt(q).sum()))
        certifies = "upper bound on smooth H_max"
    elif direction == "min":
        g = GroupedSpectrum.from_spectrum(lam)
        logt, _ = _cap_search([g], np.ones(1), eps)
        q = lam.copy()
        if logt < float(g.logv.max()):
            logc, _ = _water_level(g.logv, g.logc, logt)
            pos = lam > 0.0
            q[pos] = np.minimum(np.exp(logc) * lam[pos], np.exp(logt))
            q /= q.sum()
        value = float(-np.log2(q.max()))
        certifies = "lower bound on smooth H_min"
    else:
        raise InputError(f"direction must be 'max' or 'min', got {direction!r}")
    dist = float(np.sqrt(0.5 * np.sum((np.sqrt(lam) - np.sqrt(q)) ** 2)))
    return SpectrumSmoothing(lam, q, dist, eps, direction, value, certifies)


def smooth_h_max(spectrum, eps: float | None) -> float:
    if eps is None:
        return h_min_max_unconditional(spectrum)[1]
    return smooth_spectrum(spectrum, eps, "max").value


def smooth_h_min(spectrum, eps: float | None) -> float:
    if eps is None:
        return h_min_max_unconditional(spectrum)[0]
    return smooth_spectrum(spectrum, eps, "min").value


def smooth_h_min_conditional(cq: CqState, eps: float | None) -> float:
    """Lower bound on the smooth ``H_min[A|X]`` from a common cap on the conditional spectra."""
    base = h_min_max_conditional_cq(cq)[0]
    if eps is None:
        return base
    eps = _check_eps(eps)
    groups = [GroupedSpectrum.from_spectrum(np.clip(s, 0.0, None)) for s in cq.spectra()]
    _, caps = _cap_search(groups, cq.px, eps)
    guess = float(np.dot(cq.px, np.exp(caps)))
    return max(base, float(-np.log2(guess)))


def smooth_h_max_conditional(cq: CqState, eps: float | None) -> float:
    """Upper bound on the smooth ``H_max[A|X]`` by cutting the smallest joint eigenvalues."""
    base = h_min_max_conditional_cq(cq)[1]
    if eps is None:
        return base
    eps = _check_eps(eps)
    budget = _budget(eps)
    blocks, values = [], []
    for x, (p, lam) in enumerate(zip(cq.px, cq.spectra())):
        for v in np.clip(lam, 0.0, None):
            if p * v > 0:
                blocks.append(x)
                values.append(p * v)
    values_arr = np.asarray(values)
    order = np.argsort(values_arr, kind="stable")
    sums = np.zeros(len(cq.px))
    for b, v in zip(blocks, values_arr):
        sums[b] += np.sqrt(v)
    best = base
    delta = 0.0
    for i in order[:-1]:
        delta += values_arr[i]
        if _cut_infidelity(np.array([delta]))[0] >= budget:
            break
        sums[blocks[i]] -= np.sqrt(values_arr[i])
        best = min(best, float(np.log2(np.sum(np.clip(sums, 0.0, None) ** 2) / (1.0 - delta))))
    return best


# -- single-shot bound -------------------------------------------------------------


@dataclass(frozen=True)
class OneShotReport:
    epsilon: float
    H_max_S_smooth: float
    H_min_cond: float
    H_min_X: float
    bound_bits: float
    o_term_omitted: bool = True
    smoothing: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


def single_shot_bound(G: Generator, pi, omega, eps: float, *, smoothing: bool = True) -> OneShotReport:
    """``H_max^{eps^2/4}[S] - H_min^{eps^2/64}[S'|X] - H_min^{eps^2/64}[X]`` without the ``O(log 1/eps)`` term."""
    eps = _check_eps(eps)
    p = _probs(pi, G)
    rho_s = np.clip(memory_spectrum(omega, p), 0.0, None)
    rho_s /= rho_s.sum()
    cq = cq_state(G, p, omega)
    e_s = eps * eps / 4.0 if smoothing else None
    e_c = eps * eps / 64.0 if smoothing else None
    h_s = smooth_h_max(rho_s, e_s)
    h_c = smooth_h_min_conditional(cq, e_c)
    h_x = smooth_h_min(cq.px, e_c)
    return OneShotReport(eps, h_s, h_c, h_x, h_s - h_c - h_x, True, smoothing)


# -- asymptotic equipartition ------------------------------------------------------


def type_classes(p, N: int) -> GroupedSpectrum:
    """Spectrum of ``p^{(x) N}`` grouped by type class."""
    p = np.asarray(p, dtype=float)
    m = p.size
    if m > 6:
        raise AlphabetTooLarge(f"type-class enumeration supports at most 6 symbols, got {m}", size=m)
    p = p[p > 0]
    m = p.size
    n_classes = float(np.exp(gammaln(N + m) - gammaln(N + 1) - gammaln(m)))
    if n_classes > MAX_TYPE_CLASSES:
        raise AlphabetTooLarge(f"{n_classes:.3g} type classes exceed the limit {MAX_TYPE_CLASSES}", classes=n_classes)
    logp = np.log(p)
    if m == 1:
        return GroupedSpectrum(np.array([0.0]), np.array([0.0]))
    if m == 2:
        j = np.arange(N + 1, dtype=float)
        counts = np.stack([N - j, j], axis=1)
    else:
        rows = [c for c in itertools.product(range(N + 1), repeat=m - 1) if sum(c) <= N]
        head = np.array(rows, dtype=float)
        counts = np.concatenate([N - head.sum(axis=1, keepdims=True), head], axis=1)
    logc = gammaln(N + 1) - gammaln(counts + 1).sum(axis=1)
    logv = counts @ logp
    return GroupedSpectrum(logv, logc)


@dataclass(frozen=True)
class AEPRow:
    N: int
    epsilon: float
    hmax_rate: float
    hmin_rate: float
    shannon: float
    gap: float


def aep_check(p, N: int, eps: float) -> AEPRow:
    """Per-copy smoothed max/min entropies of ``p^{(x) N}``; ``gap = |hmax_rate - H(p)|``."""
    eps = _check_eps(eps)
    p = _check_spectrum(p)
    if N < 1 or N > 100_000:
        raise AlphabetTooLarge("N must lie in [1, 1e5]", N=N)
    g = type_classes(p, int(N))
    hmax = _hmax_cut(g, eps)[0]
    logt, _ = _cap_search([g], np.ones(1), eps)
    hmin = float(-logt / LN2)
    H = _entropy(p)
    return AEPRow(int(N), eps, hmax / N, hmin / N, H, abs(hmax / N - H))


def aep_csv(rows: list[AEPRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["N", "epsilon", "hmax_rate", "hmin_rate", "shannon", "gap"])
    for r in rows:
        w.writerow([r.N, repr(r.epsilon), repr(r.hmax_rate), repr(r.hmin_rate), repr(r.shannon), repr(r.gap)])
    return buf.getvalue()


# -- chain-rule diagnostic ------------------------------------------------------------


@dataclass(frozen=True)
class ChainRuleProbe:
    lhs: tuple[float, float]
    rhs: tuple[float, float]
    satisfied: bool
    meaningful: bool = True
    status: str = "ok"


def chain_rule_probe(cq: CqState, delta: float, slack: float) -> ChainRuleProbe:
    """Evaluate both smooth chain rules for ``A`` = the quantum part, conditioning on ``X``.

    ``H_max^d[A|X] <= H_max^{4d}[AX] - H_min^d[X] + slack`` and
    ``H_min^d[A|X] <= H_min^{4d}[AX] - H_min^d[X] + slack``.  Diagnostic only.
    """
    if not 0.0 < delta or 4.0 * delta >= 1.0:
        nan = float("nan")
        return ChainRuleProbe((nan, nan), (nan, nan), False, False, "NotMeaningful")
    joint = np.clip(cq.joint_spectrum(), 0.0, None)
    joint /= joint.sum()
    hmin_x = smooth_h_min(cq.px, delta)
    lhs1 = smooth_h_max_conditional(cq, delta)
    rhs1 = smooth_h_max(joint, 4.0 * delta) - hmin_x + slack
    lhs2 = smooth_h_min_conditional(cq, delta)
    rhs2 = smooth_h_min(joint, 4.0 * delta) - hmin_x + slack
    tol = 1e-10
    ok = bool(lhs1 <= rhs1 + tol and lhs2 <= rhs2 + tol)
    return ChainRuleProbe((lhs1, lhs2), (rhs1, rhs2), ok)


def entropy_ordering(spectrum) -> tuple[float, float, float]:
    """``(H_min, H_vN, H_max)`` of a spectrum."""
    hmin, hmax = h_min_max_unconditional(spectrum)
    return hmin, von_neumann(spectrum), hmax
