"""Command-line interface.

Exit codes: 0 success, 2 input error (JSON diagnostic on stderr), 3 numerical
failure.  Every command writes a ``manifest.json`` next to its outputs with the
tool version, seed and parameters; there are no timestamps, so reruns are
byte-identical.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import families as fam
from .classical import classical_report
from .errors import InputError, NumericalError, ParameterOutOfRange, QmemcError, ValidationError
from .generator import Generator, _probs, load_machine, stationary
from .oneshot import _check_eps, aep_check, aep_csv, single_shot_bound
from .quantum import PhaseAssignment, quantum_report, solve_overlaps
from .sweep import (
    chart,
    chart_svg,
    failure_rate,
    histogram_csv,
    optimize_efficiency,
    read_records_csv,
    records_csv,
    sweep,
)

K_B = 1.380649e-23  # J/K
EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
MAX_FAILURE_RATE = 0.5


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # emit the same JSON diagnostic as other input errors
        _diagnose({"error": "UsageError", "message": message})
        raise SystemExit(EXIT_INPUT)


def _diagnose(payload: dict) -> None:
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")


# -- machine sources -------------------------------------------------------------------


def _add_machine_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("machine", nargs="?", help="machine JSON file")
    p.add_argument("--family", choices=["golden-mean", "nemo", "two-step-erase", "markov"])
    p.add_argument("--R", type=int, default=1, help="Golden Mean Markov order")
    p.add_argument("--k", type=int, default=1, help="Golden Mean cryptic order")
    p.add_argument("--p", type=float, default=None)
    p.add_argument("--q", type=float, default=None)
    p.add_argument("--r", type=float, default=None)
    p.add_argument("--matrix", help="JSON file with a row-stochastic matrix (markov family)")


def _machine(args) -> tuple[Generator, dict]:
    if (args.machine is None) == (args.family is None):
        raise InputError("give exactly one machine source: a JSON file or --family")
    if args.machine is not None:
        return load_machine(args.machine), {"file": str(args.machine)}
    if args.family == "golden-mean":
        p = 0.5 if args.p is None else args.p
        return fam.golden_mean(args.R, args.k, p), {"family": "golden-mean", "R": args.R, "k": args.k, "p": p}
    if args.family == "nemo":
        p = 0.5 if args.p is None else args.p
        return fam.nemo(p), {"family": "nemo", "p": p}
    if args.family == "two-step-erase":
        d = fam.TWO_STEP_ERASE_DEFAULTS
        p, q, r = (d[0] if args.p is None else args.p), (d[1] if args.q is None else args.q), (d[2] if args.r is None else args.r)
        return fam.two_step_erase(p, q, r), {"family": "two-step-erase", "p": p, "q": q, "r": r}
    if args.matrix is None:
        raise InputError("--family markov requires --matrix")
    try:
        raw = json.loads(Path(args.matrix).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read matrix file: {exc}") from None
    symbols = None
    if isinstance(raw, dict):
        symbols = raw.get("symbols")
        raw = raw.get("matrix")
    return fam.markov_chain(raw, symbols), {"family": "markov", "matrix": raw}


def _load_phases(G: Generator, path: str | None) -> PhaseAssignment:
    if path is None:
        return PhaseAssignment.zeros(G)
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read phases file: {exc}") from None
    if isinstance(raw, dict):
        raw = raw.get("phases", raw)
    if isinstance(raw, list) and all(isinstance(v, (int, float)) for v in raw):
        if len(raw) != len(G.edges):
            raise ValidationError("phase vector length does not match the number of edges", expected=len(G.edges))
        return PhaseAssignment.from_vector(G, raw)
    try:
        mapping = {(str(e["symbol"]), str(e["state"])): float(e["phase"]) for e in raw}
    except (KeyError, TypeError, ValueError):
        raise ValidationError("phases must be a list of numbers or of {symbol, state, phase} objects") from None
    return PhaseAssignment.from_mapping(G, mapping)


def _phases_json(ph: PhaseAssignment) -> list[dict]:
    return [{"symbol": x, "state": s, "phase": v} for (x, s), v in zip(ph.edges, ph.values)]


# -- output ------------------------------------------------------------------------------


def _workers(args) -> int:
    env = os.environ.get("QMEMC_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InputError("QMEMC_WORKERS must be an integer", value=env) from None
    return max(1, int(getattr(args, "workers", 1) or 1))


def _write(out: Path, files: dict[str, str], command: str, params: dict, seed=None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    digests = {}
    for name, text in files.items():
        (out / name).write_text(text, encoding="utf-8")
        digests[name] = hashlib.sha256(text.encode("utf-8")).hexdigest()
    manifest = {
        "tool": "qmemc",
        "version": __version__,
        "command": command,
        "seed": seed,
        "parameters": params,
        "files": digests,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _table(rows: list[tuple[str, object]]) -> str:
    width = max(len(k) for k, _ in rows)
    lines = []
    for k, v in rows:
        if isinstance(v, float):
            v = f"{v:.10g}"
        lines.append(f"{k:<{width}}  {v}")
    return "\n".join(lines) + "\n"


# -- commands -----------------------------------------------------------------------------


def cmd_analyze(args) -> int:
    G, source = _machine(args)
    phases = _load_phases(G, args.phases)
    pi = stationary(G)
    cl = classical_report(G, pi)
    omega = solve_overlaps(G, phases)
    qr = quantum_report(G, pi, omega, classical=cl)
    report = {
        "machine": G.name,
        "stationary": pi.as_dict(),
        "phases": _phases_json(phases),
        "classical": cl.to_dict(),
        "quantum": qr.to_dict(),
        "overlap_solver": {"method": omega.method, "iterations": omega.iterations, "residual": omega.residual},
    }
    rows: list[tuple[str, object]] = [(k, v) for k, v in cl.to_dict().items()] + [(k, v) for k, v in qr.to_dict().items()]
    if args.temperature is not None:
        if not args.temperature > 0:
            raise ParameterOutOfRange("temperature must be positive (kelvin)", temperature=args.temperature)
        scale = K_B * args.temperature * np.log(2.0)
        joules = {"temperature_K": args.temperature, "W_mu_J": cl.W_mu * scale, "W_q_J": qr.W_q * scale,
                  "Delta_W_J": qr.Delta_W * scale}
        report["joules"] = joules
        rows += list(joules.items())
    table = _table(rows)
    params = {"source": source, "phases_file": args.phases, "temperature": args.temperature}
    _write(Path(args.out), {"report.json": _dump(report), "report.txt": table}, "analyze", params)
    sys.stdout.write(table)
    return EXIT_OK


def _sweep_status(records) -> int:
    rate = failure_rate(records)
    if rate > MAX_FAILURE_RATE:
        _diagnose({"error": "SolverFailureRate", "message": f"{rate:.1%} of samples failed", "failure_rate": rate})
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_sweep(args) -> int:
    G, source = _machine(args)
    records = sweep(G, args.n, args.seed, _workers(args), gauge_reduced=args.gauge_reduced)
    params = {"source": source, "n": args.n, "gauge_reduced": args.gauge_reduced, "edges": [list(e) for e in G.edge_labels()]}
    _write(Path(args.out), {"sweep.csv": records_csv(records)}, "sweep", params, seed=args.seed)
    return _sweep_status(records)


def cmd_chart(args) -> int:
    if args.input is not None:
        if args.machine is not None or args.family is not None:
            raise InputError("give either --input or a machine source, not both")
        try:
            records = read_records_csv(Path(args.input).read_text(encoding="utf-8"))
        except (OSError, KeyError, ValueError) as exc:
            raise ValidationError(f"cannot read sweep CSV: {exc}") from None
        params: dict = {"input": str(args.input), "bins": args.bins}
        seed = None
        title = Path(args.input).name
    else:
        if args.seed is None:
            raise InputError("--seed is required when charting a fresh sweep")
        G, source = _machine(args)
        records = sweep(G, args.n, args.seed, _workers(args), gauge_reduced=args.gauge_reduced)
        params = {"source": source, "n": args.n, "bins": args.bins, "gauge_reduced": args.gauge_reduced}
        seed = args.seed
        title = G.name
    hist = chart(records, args.bins)
    files = {"histogram.csv": histogram_csv(hist), "chart.svg": chart_svg(hist, title)}
    if args.input is None:
        files["sweep.csv"] = records_csv(records)
    params["mode_bin"] = list(hist.mode_bin)
    params["peak_advantage_bin"] = list(hist.peak_advantage_bin)
    _write(Path(args.out), files, "chart", params, seed=seed)
    return _sweep_status(records)


def cmd_optimize(args) -> int:
    G, source = _machine(args)
    best = optimize_efficiency(G, args.budget, args.seed, workers=_workers(args))
    out = {
        "sample": best.sample,
        "phases": _phases_json(PhaseAssignment.from_vector(G, best.phases)),
        "Delta_C": best.delta_c,
        "Delta_W": best.delta_w,
        "e_q": best.e_q,
        "C_q": best.c_q,
        "N_q": best.n_q,
        "W_q": best.w_q,
    }
    _write(Path(args.out), {"best.json": _dump(out)}, "optimize", {"source": source, "budget": args.budget}, seed=args.seed)
    sys.stdout.write(_table([(k, v) for k, v in out.items() if k != "phases"]))
    return EXIT_OK


def _floats(text: str, name: str) -> list[float]:
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise InputError(f"{name} must be a comma-separated list of numbers", value=text) from None


def cmd_oneshot(args) -> int:
    grid = _floats(args.epsilon, "--epsilon")
    for e in grid:
        _check_eps(e)
    G, source = _machine(args)
    phases = _load_phases(G, args.phases)
    pi = _probs(stationary(G), G)
    omega = solve_overlaps(G, phases)
    reports = [single_shot_bound(G, pi, omega, e, smoothing=not args.no_smoothing).to_dict() for e in grid]
    body = reports[0] if len(reports) == 1 else reports
    params = {"source": source, "epsilon": grid, "smoothing": not args.no_smoothing, "phases_file": args.phases}
    _write(Path(args.out), {"oneshot.json": _dump(body)}, "oneshot", params)
    sys.stdout.write(_dump(body))
    return EXIT_OK


def cmd_aep(args) -> int:
    grid = _floats(args.epsilon, "--epsilon")
    for e in grid:
        _check_eps(e)
    if args.dist is not None:
        dist = _floats(args.dist, "--dist")
    else:
        p = 0.3 if args.p is None else args.p
        if not 0.0 <= p <= 1.0:
            raise ParameterOutOfRange("--p must lie in [0, 1]", p=p)
        dist = [1.0 - p, p]
    try:
        Ns = [int(v) for v in args.N.split(",") if v.strip()]
    except ValueError:
        raise InputError("--N must be a comma-separated list of integers", value=args.N) from None
    rows = [aep_check(dist, N, e) for e in grid for N in Ns]
    text = aep_csv(rows)
    _write(Path(args.out), {"aep.csv": text}, "aep", {"dist": dist, "N": Ns, "epsilon": grid})
    sys.stdout.write(text)
    return EXIT_OK


def cmd_family(args) -> int:
    G, source = _machine(args)
    _write(Path(args.out), {"machine.json": _dump(G.to_dict())}, "family", {"source": source})
    return EXIT_OK


# -- entry point --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qmemc", description="Memory and work costs of classical and quantum process generators.")
    parser.add_argument("--version", action="version", version=f"qmemc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(name: str, help: str, out: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help)
        p.add_argument("--out", default=out, help=f"output directory (default: {out})")
        return p

    p = common("analyze", "classical and quantum report for one implementation", "qmemc-analyze")
    _add_machine_args(p)
    p.add_argument("--phases", help="JSON file of edge phases (default: all zero)")
    p.add_argument("--temperature", type=float, help="kelvin; adds work values in joules")
    p.set_defaults(func=cmd_analyze)

    for name, func, out in (("sweep", cmd_sweep, "qmemc-sweep"), ("chart", cmd_chart, "qmemc-chart")):
        p = common(name, f"{name} over uniformly random phase assignments", out)
        _add_machine_args(p)
        p.add_argument("--n", type=int, default=100_000, help="number of samples")
        p.add_argument("--seed", type=int, required=name == "sweep")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--gauge-reduced", action="store_true", help="sample loop invariants only")
        if name == "chart":
            p.add_argument("--input", help="existing sweep CSV to chart")
            p.add_argument("--bins", type=int, default=40)
        p.set_defaults(func=func)

    p = common("optimize", "search for the implementation with the largest efficiency", "qmemc-optimize")
    _add_machine_args(p)
    p.add_argument("--budget", type=int, default=200)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_optimize)

    p = common("oneshot", "single-shot work bound", "qmemc-oneshot")
    _add_machine_args(p)
    p.add_argument("--epsilon", required=True, help="smoothing parameter(s), comma-separated")
    p.add_argument("--phases", help="JSON file of edge phases (default: all zero)")
    p.add_argument("--no-smoothing", action="store_true")
    p.set_defaults(func=cmd_oneshot)

    p = common("aep", "per-copy smooth entropies of i.i.d. copies", "qmemc-aep")
    p.add_argument("--p", type=float, help="Bernoulli parameter Pr(1) (default 0.3)")
    p.add_argument("--dist", help="full distribution, comma-separated (overrides --p)")
    p.add_argument("--N", default="100,1000,10000", help="copy counts, comma-separated")
    p.add_argument("--epsilon", default="0.001", help="smoothing parameter(s), comma-separated")
    p.set_defaults(func=cmd_aep)

    p = common("family", "write a family member as machine JSON", "qmemc-family")
    _add_machine_args(p)
    p.set_defaults(func=cmd_family)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "n", 1) is not None and getattr(args, "n", 1) < 1:
            raise InputError("--n must be >= 1")
        if getattr(args, "budget", 1) < 1:
            raise InputError("--budget must be >= 1")
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except InputError as exc:
        _diagnose(exc.to_dict())
        return EXIT_INPUT
    except NumericalError as exc:
        _diagnose(exc.to_dict())
        return EXIT_NUMERIC
    except QmemcError as exc:  # pragma: no cover - every error is one of the two kinds
        _diagnose(exc.to_dict())
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
