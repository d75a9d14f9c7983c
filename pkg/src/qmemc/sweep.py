"""Seeded phase sweeps, W/C charts and extremal-efficiency search.

Phase samples are derived per sample index from ``SeedSequence(seed,
spawn_key=(i,))``, so the sequence does not depend on how the work is split
across processes.  Evaluation is an ordered map over pre-generated samples.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .classical import ClassicalReport, classical_report
from .errors import NoCompressiveImplementation, NoSuccessfulRecords, QmemcError
from .generator import Generator, _probs, stationary
from .quantum import (
    CHAIN_TOL,
    TWO_PI,
    PhaseAssignment,
    cotree_edges,
    data_processing_check,
    quantum_report,
    solve_overlaps,
)

COMPRESSIVE_DC = 1e-6


def sample_phases(G: Generator, n: int, seed: int, *, gauge_reduced: bool = False) -> list[PhaseAssignment]:
    """``n`` phase assignments, iid uniform on ``[0, 2 pi)`` per supported edge.

    With ``gauge_reduced`` only the edges outside a spanning tree are drawn
    (tree edges stay at zero), i.e. the loop invariants are sampled uniformly.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    m = len(G.edges)
    free = cotree_edges(G) if gauge_reduced else list(range(m))
    out = []
    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(i,)))
        vals = np.zeros(m)
        vals[free] = rng.uniform(0.0, TWO_PI, len(free))
        out.append(PhaseAssignment.from_vector(G, vals))
    return out


@dataclass(frozen=True)
class SweepRecord:
    sample: int
    phases: tuple[float, ...]
    delta_c: Optional[float]
    delta_w: Optional[float]
    e_q: Optional[float]
    c_q: Optional[float]
    n_q: Optional[float]
    w_q: Optional[float]
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def _evaluate(G: Generator, pi: np.ndarray, classical: ClassicalReport, sample: int, values) -> SweepRecord:
    phases = PhaseAssignment.from_vector(G, values)
    try:
        omega = solve_overlaps(G, phases)
        rep = quantum_report(G, pi, omega, classical=classical)
        if not data_processing_check(G, pi, omega).holds:
            return SweepRecord(sample, phases.values, *[None] * 6, status="DataProcessingViolation")
    except QmemcError as exc:
        return SweepRecord(sample, phases.values, *[None] * 6, status=type(exc).__name__)
    return SweepRecord(sample, phases.values, rep.Delta_C, rep.Delta_W, rep.e_q, rep.C_q, rep.N_q, rep.W_q)


# per-process context for the pool workers
_CTX: dict = {}


def _init_worker(G: Generator, pi: np.ndarray, classical: ClassicalReport) -> None:
    _CTX.update(G=G, pi=pi, classical=classical)


def _evaluate_chunk(chunk: list[tuple[int, tuple[float, ...]]]) -> list[SweepRecord]:
    return [_evaluate(_CTX["G"], _CTX["pi"], _CTX["classical"], i, v) for i, v in chunk]


def evaluate_phases(G: Generator, samples: list[PhaseAssignment], *, workers: int = 1, offset: int = 0) -> list[SweepRecord]:
    pi = _probs(stationary(G), G)
    classical = classical_report(G, pi, orders=False)
    items = [(offset + i, ph.values) for i, ph in enumerate(samples)]
    if workers <= 1 or len(items) < 2:
        return [_evaluate(G, pi, classical, i, v) for i, v in items]
    size = max(1, math.ceil(len(items) / (4 * workers)))
    chunks = [items[k : k + size] for k in range(0, len(items), size)]
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(G, pi, classical)) as pool:
        return [rec for part in pool.map(_evaluate_chunk, chunks) for rec in part]


def sweep(G: Generator, n: int, seed: int, workers: int = 1, *, gauge_reduced: bool = False) -> list[SweepRecord]:
    """Evaluate ``n`` sampled implementations; failed solves are kept with their error tag."""
    G.require_predictive()
    return evaluate_phases(G, sample_phases(G, n, seed, gauge_reduced=gauge_reduced), workers=workers)


def failure_rate(records: list[SweepRecord]) -> float:
    return sum(not r.ok for r in records) / len(records) if records else 0.0


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def records_csv(records: list[SweepRecord]) -> str:
    m = len(records[0].phases) if records else 0
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample"] + [f"phi_{j}" for j in range(m)] + ["delta_c", "delta_w", "e_q", "c_q", "n_q", "w_q", "status"])
    for r in records:
        w.writerow(
            [r.sample]
            + [repr(float(v)) for v in r.phases]
            + [_fmt(r.delta_c), _fmt(r.delta_w), _fmt(r.e_q), _fmt(r.c_q), _fmt(r.n_q), _fmt(r.w_q), r.status]
        )
    return buf.getvalue()


def read_records_csv(text: str) -> list[SweepRecord]:
    rows = list(csv.DictReader(io.StringIO(text)))
    out = []
    for row in rows:
        phis = tuple(float(row[k]) for k in row if k.startswith("phi_"))

        def num(key: str) -> Optional[float]:
            return float(row[key]) if row[key] != "" else None

        out.append(
            SweepRecord(
                int(row["sample"]), phis, num("delta_c"), num("delta_w"), num("e_q"),
                num("c_q"), num("n_q"), num("w_q"), row["status"],
            )
        )
    return out


# -- charts -------------------------------------------------------------------------


@dataclass(frozen=True)
class ChartHistogram:
    x_edges: np.ndarray  # Delta_C
    y_edges: np.ndarray  # Delta_W
    counts: np.ndarray  # [ix, iy]
    n_records: int
    peak_advantage_bin: tuple[int, int]

    @property
    def mode_bin(self) -> tuple[int, int]:
        ix, iy = np.unravel_index(int(np.argmax(self.counts)), self.counts.shape)
        return int(ix), int(iy)

    def bin_of(self, dc: float, dw: float) -> tuple[int, int]:
        ix = int(np.clip(np.searchsorted(self.x_edges, dc, side="right") - 1, 0, len(self.x_edges) - 2))
        iy = int(np.clip(np.searchsorted(self.y_edges, dw, side="right") - 1, 0, len(self.y_edges) - 2))
        return ix, iy

    def n_modes(self) -> int:
        """Number of connected groups of nonempty bins (8-neighbourhood)."""
        from scipy.ndimage import label

        _, k = label(self.counts > 0, structure=np.ones((3, 3)))
        return int(k)


def _edges(values: np.ndarray, bins: int) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    span = hi - lo
    pad = 0.01 * span if span > 0 else max(0.01 * abs(lo), 1e-9)
    return np.linspace(lo - pad, hi + pad, bins + 1)


def chart(records: list[SweepRecord], bins: int = 40) -> ChartHistogram:
    """Equal-width 2D histogram of ``(Delta_C, Delta_W)`` over the successful records."""
    good = [r for r in records if r.ok]
    if not good:
        raise NoSuccessfulRecords("no successful records to chart", n_records=len(records))
    dc = np.array([r.delta_c for r in good])
    dw = np.array([r.delta_w for r in good])
    xe, ye = _edges(dc, bins), _edges(dw, bins)
    counts, _, _ = np.histogram2d(dc, dw, bins=[xe, ye])
    counts = counts.astype(np.int64)
    best = int(np.argmax(dc + dw))
    hist = ChartHistogram(xe, ye, counts, len(good), (0, 0))
    return replace(hist, peak_advantage_bin=hist.bin_of(dc[best], dw[best]))


def histogram_csv(hist: ChartHistogram) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bin_x_lo", "bin_x_hi", "bin_y_lo", "bin_y_hi", "count"])
    for i in range(len(hist.x_edges) - 1):
        for j in range(len(hist.y_edges) - 1):
            w.writerow([repr(float(hist.x_edges[i])), repr(float(hist.x_edges[i + 1])),
                        repr(float(hist.y_edges[j])), repr(float(hist.y_edges[j + 1])), int(hist.counts[i, j])])
    return buf.getvalue()


def _color(t: float) -> str:
    # low density blue -> high density yellow
    lo, hi = np.array([48, 18, 160]), np.array([250, 230, 30])
    r, g, b = (lo + (hi - lo) * t).round().astype(int)
    return f"#{r:02x}{g:02x}{b:02x}"


def chart_svg(hist: ChartHistogram, title: str = "") -> str:
    """Standalone SVG heat map of the histogram with axis ticks."""
    W, H, m = 520, 440, 60
    nx, ny = hist.counts.shape
    cw, ch = (W - 2 * m) / nx, (H - 2 * m) / ny
    top = max(int(hist.counts.max()), 1)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
    ]
    for i in range(nx):
        for j in range(ny):
            c = int(hist.counts[i, j])
            if c == 0:
                continue
            x = m + i * cw
            y = H - m - (j + 1) * ch
            parts.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{cw:.2f}" height="{ch:.2f}" fill="{_color(c / top)}"/>')
    parts.append(f'<rect x="{m}" y="{m}" width="{W - 2 * m}" height="{H - 2 * m}" fill="none" stroke="black"/>')
    for t in range(5):
        fx = hist.x_edges[0] + (hist.x_edges[-1] - hist.x_edges[0]) * t / 4
        fy = hist.y_edges[0] + (hist.y_edges[-1] - hist.y_edges[0]) * t / 4
        px = m + (W - 2 * m) * t / 4
        py = H - m - (H - 2 * m) * t / 4
        parts.append(f'<line x1="{px:.2f}" y1="{H - m}" x2="{px:.2f}" y2="{H - m + 5}" stroke="black"/>')
        parts.append(f'<text x="{px:.2f}" y="{H - m + 18}" font-size="10" text-anchor="middle">{fx:.4g}</text>')
        parts.append(f'<line x1="{m - 5}" y1="{py:.2f}" x2="{m}" y2="{py:.2f}" stroke="black"/>')
        parts.append(f'<text x="{m - 8}" y="{py + 3:.2f}" font-size="10" text-anchor="end">{fy:.4g}</text>')
    parts.append(f'<text x="{W / 2}" y="{H - 15}" font-size="12" text-anchor="middle">Delta_C (bits)</text>')
    parts.append(
        f'<text x="15" y="{H / 2}" font-size="12" text-anchor="middle" transform="rotate(-90 15 {H / 2})">'
        "Delta_W (k_B T ln 2)</text>"
    )
    if title:
        parts.append(f'<text x="{W / 2}" y="30" font-size="13" text-anchor="middle">{title}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# -- optimizer ------------------------------------------------------------------------


def _score(rec: SweepRecord) -> float:
    if not rec.ok or rec.e_q is None or rec.delta_c is None or rec.delta_c <= COMPRESSIVE_DC:
        return -math.inf
    return rec.e_q


def optimize_efficiency(G: Generator, budget: int, seed: int, *, workers: int = 1, passes: int = 2) -> SweepRecord:
    """Random search over ``budget`` samples, then per-phase bounded refinement of the best one."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    records = sweep(G, budget, seed, workers)
    best = max(records, key=_score)
    if _score(best) == -math.inf:
        raise NoCompressiveImplementation("no sampled implementation compresses memory", budget=budget)

    pi = _probs(stationary(G), G)
    classical = classical_report(G, pi, orders=False)
    current = np.array(best.phases)
    for _ in range(passes):
        for j in range(current.size):

            def loss(t: float, j: int = j) -> float:
                trial = current.copy()
                trial[j] = t
                s = _score(_evaluate(G, pi, classical, best.sample, trial))
                return 1e3 if s == -math.inf else -s

            res = minimize_scalar(loss, bounds=(current[j] - np.pi, current[j] + np.pi), method="bounded",
                                  options={"xatol": 1e-7})
            trial = current.copy()
            trial[j] = float(res.x)
            rec = _evaluate(G, pi, classical, best.sample, trial)
            if _score(rec) > _score(best):
                best, current = rec, np.array(rec.phases)
    return best


def chain_holds(rec: SweepRecord, classical: ClassicalReport, tol: float = CHAIN_TOL) -> bool:
    """``-h_mu <= W_q <= W_mu <= 0`` and ``C_q <= C_mu`` for one record."""
    return bool(
        rec.ok
        and -classical.h_mu - tol <= rec.w_q <= classical.W_mu + tol
        and classical.W_mu <= tol
        and rec.c_q <= classical.C_mu + tol
    )
