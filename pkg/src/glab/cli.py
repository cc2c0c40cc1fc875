"""Command line runner: ``glab <experiment> --config PATH`` and ``glab describe``.

Each run writes ``result.json`` (headline numbers, diagnostics, the canonical
config) and ``series.csv``; ``variational`` also writes ``trace.csv``.  Floats
in CSV files use 17 significant digits.  Failures produce a JSON error record
and the exit code of the matching exception class.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from fractions import Fraction
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__, _kernels
from .config import EXPERIMENTS, ExperimentConfig, load
from .errors import GlabError, InvalidArgument
from .extension import (
    DEFAULT_BUDGET,
    entropy_gap_experiment,
    gurevich_estimate,
    gurevich_series,
    predict_states,
    state_weights,
)
from .groups import folner_defect, kesten_ladder, kesten_spectral_radius
from .potential import NodeGraph
from .transfer import (
    ExtensionOperator,
    fiber_ruelle,
    markov_average_and_Tn,
    normalize_potential,
    spectral_radius_H,
)
from .varprin import TiltedPressureProblem, minimize_pressure

SERIES_VERSION = 1
BASE_COLUMNS = ("state", "n", "log_Z", "log_Z_ab_constrained", "log_Z_constrained", "overflow_flag")
OPERATOR_COLUMNS = ("n", "log_norm_H1", "log_norm_Hinf", "A_n", "leakage", "T_norm", "L_norm", "C_phi")


# -- output helpers -----------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def _jsonable(x):
    """Plain JSON types; non-finite floats become ``null``."""
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, Fraction):
        return f"{x.numerator}/{x.denominator}"
    return x


def write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n")


def write_csv(path: str, experiment: str, columns: Sequence[str], rows: Sequence[Sequence], kind: str = "series") -> None:
    buf = io.StringIO()
    buf.write(f"# glab {kind} v{SERIES_VERSION} experiment={experiment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(buf.getvalue())


# -- parameter helpers --------------------------------------------------------


def _symbol(cfg: ExperimentConfig) -> int:
    return int(cfg.params.get("symbol", 0))


def _window(cfg: ExperimentConfig, default=(8, 14)) -> tuple[int, int]:
    w = cfg.params.get("window", list(default))
    return int(w[0]), int(w[1])


def _horizon(cfg: ExperimentConfig, default_window=(8, 14)) -> tuple[tuple[int, int], int]:
    win = _window(cfg, default_window)
    n_max = int(cfg.params.get("n_max", win[1]))
    if win[1] > n_max:
        raise InvalidArgument(f"window {win} extends past n_max={n_max}")
    return win, n_max


def _budget(cfg: ExperimentConfig) -> int:
    return int(cfg.params.get("budget", DEFAULT_BUDGET))


def _need_labeling(cfg: ExperimentConfig, what: str):
    if cfg.labeling is None:
        raise InvalidArgument(f"experiment {what!r} needs a group and a labeling")
    return cfg.labeling


def _need_group(cfg: ExperimentConfig, what: str):
    if cfg.group is None:
        raise InvalidArgument(f"experiment {what!r} needs a group")
    return cfg.group


def _estimate_dict(est) -> dict:
    return {
        "value": est.value,
        "stderr": est.stderr,
        "window": list(est.window),
        "correction": est.correction,
        "fits": [
            {"state": f.state, "slope": f.slope, "stderr": f.stderr, "points": f.points, "skipped": list(f.skipped)}
            for f in est.fits
        ],
    }


def _base_rows(base, s_ab=None, s_T=None, of_ab=None, of_T=None) -> list[list]:
    rows = []
    for k in sorted(base):
        flagged = set((of_ab or {}).get(k, [])) | set((of_T or {}).get(k, []))
        for n in sorted(base[k]):
            rows.append([
                k,
                n,
                base[k][n],
                s_ab[k][n] if s_ab is not None else math.nan,
                s_T[k][n] if s_T is not None else math.nan,
                int(n in flagged),
            ])
    return rows


# -- experiments --------------------------------------------------------------
# each returns (result dict, {filename: (columns, rows)})

Outputs = dict[str, tuple[Sequence[str], list[list]]]


def run_entropy(cfg: ExperimentConfig) -> tuple[dict, Outputs]:
    a = _symbol(cfg)
    win, n_max = _horizon(cfg)
    c = cfg.params.get("correction") or 0.0
    series = gurevich_series(cfg.sft, cfg.potential, a, n_max)
    est = gurevich_estimate(series, win, c, state_weights(cfg.sft, a))
    eig = fiber_ruelle(cfg.sft, cfg.potential, gibbs_n=None)
    result = {
        "h": est.value,
        "h_stderr": est.stderr,
        "estimate": _estimate_dict(est),
        "pressure_eigen": eig.pressure,
        "lambda": eig.lam,
    }
    return result, {"series.csv": (BASE_COLUMNS, _base_rows(series))}


def run_gap(cfg: ExperimentConfig) -> tuple[dict, Outputs]:
    lab = _need_labeling(cfg, "gap")
    a = _symbol(cfg)
    win, n_max = _horizon(cfg)
    p = cfg.params
    res = entropy_gap_experiment(
        cfg.sft, lab, cfg.potential, a, win, p.get("truncation"), p.get("correction"), p.get("correction_ab"),
        p.get("certify_n"), _budget(cfg),
    )
    base = gurevich_series(cfg.sft, cfg.potential, a, n_max)
    d = res.diagnostics
    result = {
        "h_T": res.h_T.value,
        "h_T_stderr": res.h_T.stderr,
        "h_Tab": res.h_Tab.value,
        "h_Tab_stderr": res.h_Tab.stderr,
        "gap": res.gap,
        "gap_stderr": res.stderr,
        "estimate_T": _estimate_dict(res.h_T),
        "estimate_Tab": _estimate_dict(res.h_Tab),
        "mixing": d["mixing"],
        "overflow_T": d["overflow_T"],
        "overflow_Tab": d["overflow_ab"],
    }
    rows = _base_rows(base, d["series_ab"], d["series_T"], d["overflow_ab"], d["overflow_T"])
    return result, {"series.csv": (BASE_COLUMNS, rows)}


def _steps(cfg: ExperimentConfig, G) -> dict:
    sd = cfg.params.get("step_distribution")
    if sd is None:
        gens = G.generators()
        return {g: 1.0 / len(gens) for g in gens}
    return {G.parse(k): float(v) for k, v in sd.items()}


def run_kesten(cfg: ExperimentConfig) -> tuple[dict, Outputs]:
    G = _need_group(cfg, "kesten")
    steps = _steps(cfg, G)
    p = cfg.params
    if "truncations" in p:
        lad = kesten_ladder(G, steps, p["truncations"])
        result = {
            "value": lad.extrapolated,
            "raw": lad.raw,
            "extrapolation": lad.method,
            "truncations": list(lad.truncations),
            "estimates": list(lad.estimates),
        }
        rows = [[L, v] for L, v in zip(lad.truncations, lad.estimates)]
    else:
        L = int(p.get("truncation", 100))
        r = kesten_spectral_radius(G, steps, L)
        result = {
            "value": r.value,
            "raw": r.value,
            "rayleigh": r.rayleigh,
            "iterations": r.iterations,
            "converged": r.converged,
            "method": r.method,
            "truncations": [L],
            "estimates": [r.value],
        }
        rows = [[L, r.value]]
    result["steps"] = {G.serialize(g): w for g, w in steps.items()}
    return result, {"series.csv": (("truncation", "estimate"), rows)}


def run_folner(cfg: ExperimentConfig) -> tuple[dict, Outputs]:
    G = _need_group(cfg, "folner")
    p = cfg.params
    K = [G.parse(x) for x in p["folner_test"]] if "folner_test" in p else G.generators()
    candidates: list[tuple[str, list]] = []
    if "folner_set" in p:
        candidates.append(("set", [G.parse(x) for x in p["folner_set"]]))
    for R in p.get("folner_radii", [] if "folner_set" in p else [1, 2, 3, 4]):
        candidates.append((f"ball({R})", G.ball(R)))
    rows, out = [], []
    for label, A in candidates:
        dfc = folner_defect(G, A, K)
        rows.append([label, len(set(A)), dfc.numerator, dfc.denominator, float(dfc)])
        out.append({"candidate": label, "size": len(set(A)), "defect": dfc, "defect_float": float(dfc)})
    result = {
        "test_set": [G.serialize(h) for h in K],
        "candidates": out,
        "min_defect": min(r[4] for r in rows),
    }
    return result, {"series.csv": (("candidate", "size", "defect_num", "defect_den", "defect"), rows)}


def run_variational(cfg: ExperimentConfig) -> tuple[dict, Outputs]:
    lab = _need_labeling(cfg, "variational")
    p = cfg.params
    problem = TiltedPressureProblem(cfg.sft, lab, cfg.potential)
    tol = float(p.get("tolerance", 0.05))
    sol = minimize_pressure(problem, p.get("xi0"))
    trace_rows = [[it, *xi, P, gn] for it, xi, P, gn in sol.trace]
    trace_cols = ("iter", *(f"xi_{i}" for i in range(problem.dimension)), "P", "grad_norm")
    result = {
        "xi": sol.xi,
        "pressure": sol.pressure,
        "drift": sol.drift,
        "drift_norm": sol.drift_norm,
        "iterations": sol.iterations,
        "converged": sol.converged,
    }
    outputs: Outputs = {"trace.csv": (trace_cols, trace_rows)}
    if "window" in p:
        a = _symbol(cfg)
        win, n_max = _horizon(cfg)
        ab = problem.labeling
        c = ab.group.counting_exponent if p.get("correction") is None else p["correction"]
        of: dict[int, list[int]] = {}
        s_T = gurevich_series(cfg.sft, cfg.potential, a, n_max, ab, p.get("truncation"), _budget(cfg), of)
        est = gurevich_estimate(s_T, win, c, state_weights(cfg.sft, a))
        diff = abs(sol.pressure - est.value)
        result.update({
            "counting_estimate": _estimate_dict(est),
            "difference": diff,
            "tolerance": tol,
            "agrees": diff <= tol,
        })
        base = gurevich_series(cfg.sft, cfg.potential, a, n_max)
        outputs["series.csv"] = (BASE_COLUMNS, _base_rows(base, s_T, s_T, of, of))
    else:
        outputs["series.csv"] = (BASE_COLUMNS, [])
    return result, outputs


def run_gibbs(cfg: ExperimentConfig) -> tuple[dict, Outputs]:
    n = int(cfg.params.get("gibbs_length", 8))
    eig = fiber_ruelle(cfg.sft, cfg.potential, gibbs_n=n)
    env = cfg.sft.env
    # independent check: top eigenvalue of the cycle product
    prod = np.eye(eig.graph.size(0))
    for k in env.orbit(0, env.size):
        prod = prod @ eig.graph.linear[k]
    direct = float(np.max(np.abs(np.linalg.eigvals(prod))))
    iterated = float(np.prod(eig.lam))
    rows = []
    for k in range(env.size):
        lo, hi = eig.gibbs_extremes[k]
        rows.append([k, eig.lam[k], math.log(eig.lam[k]), lo, hi, eig.gibbs_constants[k]])
    lows = [r[3] for r in rows]
    highs = [r[4] for r in rows]
    result = {
        "pressure": eig.pressure,
        "lambda": eig.lam,
        "cycle_eigenvalue_iterated": iterated,
        "cycle_eigenvalue_direct": direct,
        "eigen_relative_error": abs(iterated - direct) / direct,
        "gibbs_length": n,
        "gibbs_constant": float(max(eig.gibbs_constants)),
        "ratio_min": min(lows),
        "ratio_max": max(highs),
        "max_over_min": max(highs) / min(lows),
        "cycles": eig.cycles,
    }
    cols = ("state", "lambda", "log_lambda", "ratio_min", "ratio_max", "C_phi")
    return result, {"series.csv": (cols, rows)}


def run_operator_radius(cfg: ExperimentConfig) -> tuple[dict, Outputs]:
    lab = _need_labeling(cfg, "operator-radius")
    p = cfg.params
    n_max = int(p.get("n_max", 14))
    L = int(p.get("truncation", n_max * lab.max_length))
    a = _symbol(cfg)
    k = cfg.env.state_index(p["state"]) if "state" in p else 0
    win = tuple(p["window"]) if "window" in p else None
    rec = spectral_radius_H(cfg.sft, lab, cfg.potential, n_max, L, k=k, a=a, window=win,
                            correction=p.get("correction"))
    result: dict[str, Any] = {
        "rho_H": rec.estimate,
        "rho_H_stderr": rec.slope_stderr,
        "window": list(rec.window),
        "correction": rec.correction,
        "max_leakage": max(rec.leakage),
    }
    A = [math.nan] * n_max
    Tn = [math.nan] * n_max
    Ln = [math.nan] * n_max
    C = [math.nan] * n_max
    if "markov_truncation" in p:
        eig = fiber_ruelle(cfg.sft, cfg.potential, gibbs_n=None)
        phi0 = normalize_potential(cfg.potential, eig)
        eig0 = fiber_ruelle(cfg.sft, phi0)
        Lm = int(p["markov_truncation"])
        op = ExtensionOperator(cfg.sft, lab, phi0, Lm)
        ordering = True
        for n in range(1, n_max + 1):
            m = markov_average_and_Tn(cfg.sft, lab, phi0, k, n, Lm, p.get("seed_radius"), eig0, op=op)
            A[n - 1], Tn[n - 1], Ln[n - 1], C[n - 1] = m.A_n, m.T_norm, m.L_norm, m.C_phi
            ordering = ordering and m.ordering_ok
        result.update({
            "markov_truncation": Lm,
            "A_n_root": A[-1] ** (1.0 / n_max),
            "ordering_ok": ordering,
        })
    rows = [
        [n, rec.log_norm_1[n - 1], rec.log_norm_inf[n - 1], A[n - 1], rec.leakage[n - 1], Tn[n - 1], Ln[n - 1], C[n - 1]]
        for n in rec.ns
    ]
    return result, {"series.csv": (OPERATOR_COLUMNS, rows)}


RUNNERS: dict[str, Callable[[ExperimentConfig], tuple[dict, Outputs]]] = {
    "entropy": run_entropy,
    "gap": run_gap,
    "kesten": run_kesten,
    "folner": run_folner,
    "variational": run_variational,
    "gibbs-check": run_gibbs,
    "operator-radius": run_operator_radius,
}


# -- describe -----------------------------------------------------------------


def describe(cfg: ExperimentConfig) -> str:
    """Dry-run plan: systems, ball sizes and predicted DP state counts."""
    out = []
    env, sft = cfg.env, cfg.sft
    out.append(f"experiment: {cfg.experiment or '(none)'}")
    out.append(f"environment: {env.size} state(s) {list(env.states)} weights {[round(float(w), 6) for w in env.weights]}")
    out.append(f"alphabet sizes: {list(sft.alphabet_sizes)}")
    graph = NodeGraph(sft, cfg.potential)
    out.append(f"potential range: {cfg.potential.range}  (node depth {graph.depth}, nodes per state {[graph.size(k) for k in range(env.size)]})")
    if cfg.group is None:
        return "\n".join(out) + "\n"
    G = cfg.group
    out.append(f"group: {G.spec()}")
    win, n_max = _window(cfg), int(cfg.params.get("n_max", _window(cfg)[1]))
    if cfg.labeling is None:
        return "\n".join(out) + "\n"
    lab = cfg.labeling
    budget = _budget(cfg)
    L = int(cfg.params.get("truncation", n_max * lab.max_length))
    radius = min(L, n_max * lab.max_length)
    out.append(f"n_max: {n_max}  truncation L: {L}  effective radius: {radius}")
    out.append(f"|ball({radius})| = {G.ball_size(radius)}")
    refused = []
    for name, lb in (("extension", lab), ("abelianized", lab.abelianized())):
        pred = predict_states(sft, lb, cfg.potential, n_max, L)
        rad = min(L, n_max * lb.max_length)
        out.append(f"{name}: group {lb.group.spec()}  |ball({rad})| = {lb.group.ball_size(rad)}  predicted DP states per layer <= {pred}")
        if pred > budget:
            refused.append((name, pred))
    out.append(f"budget: {budget} states")
    for name, pred in refused:
        out.append(f"REFUSE {name}: predicted {pred} states exceeds budget {budget} (would exit with code 4)")
    if not refused:
        out.append("within budget")
    return "\n".join(out) + "\n"


# -- entry point --------------------------------------------------------------


def _parse_window(text: str) -> tuple[int, int]:
    try:
        a, b = (int(x) for x in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"window must be A,B with integers, got {text!r}") from exc
    return a, b


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="glab", description="Entropy, pressure and spectral experiments for group extensions of random SFTs.")
    ap.add_argument("--version", action="version", version=f"glab {__version__} ({_kernels.BACKEND})")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in (*EXPERIMENTS, "describe"):
        sp = sub.add_parser(name, help="dry-run plan" if name == "describe" else f"run the {name} experiment")
        sp.add_argument("--config", required=True, help="JSON config file")
        sp.add_argument("--n-max", type=int, dest="n_max")
        sp.add_argument("--truncation", type=int)
        sp.add_argument("--window", type=_parse_window)
        sp.add_argument("--seed", type=int)
        if name != "describe":
            sp.add_argument("--out", default=".", help="output directory (default: current)")
    return ap


def _error_record(exc: BaseException) -> dict:
    rec = {
        "kind": getattr(exc, "kind", "internal-error"),
        "exit_code": getattr(exc, "exit_code", 1),
        "type": type(exc).__name__,
        "message": str(exc),
    }
    if hasattr(exc, "predicted_states"):
        rec["predicted_states"] = exc.predicted_states
        rec["budget"] = exc.budget
    return rec


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"n_max": args.n_max, "truncation": args.truncation, "window": args.window, "seed": args.seed}
    if args.command == "describe":
        try:
            cfg = load(args.config).with_overrides(**overrides)
            sys.stdout.write(describe(cfg))
            return 0
        except GlabError as exc:
            sys.stderr.write(json.dumps(_error_record(exc), sort_keys=True) + "\n")
            return exc.exit_code
    os.makedirs(args.out, exist_ok=True)
    record: dict[str, Any] = {"experiment": args.command, "glab_version": __version__}
    try:
        cfg = load(args.config).with_overrides(experiment=args.command, **overrides)
        record["config"] = cfg.data
        result, outputs = RUNNERS[args.command](cfg)
    except GlabError as exc:
        record.update(status="error", error=_error_record(exc))
        write_json(os.path.join(args.out, "result.json"), record)
        sys.stderr.write(f"glab: {exc.kind}: {exc}\n")
        return exc.exit_code
    record.update(status="ok", result=result)
    for fname, (cols, rows) in outputs.items():
        kind = "trace" if fname == "trace.csv" else "series"
        write_csv(os.path.join(args.out, fname), args.command, cols, rows, kind)
    write_json(os.path.join(args.out, "result.json"), record)
    return 0


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
