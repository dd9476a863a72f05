"""Command-line front end.

Exit codes: 0 success, 2 bad input or precondition, 3 property failure,
4 convergence failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .branched import (compute_dalpha, dalpha_lower_bound, dyadic_rhs_bound, dyadic_truncated_cost,
                       dyadic_upper_bound, log2_slope, sandwich_report, write_graph_csv)
from .dynamical_paths import (TimeSlice, momentum_mass, plan_to_path, reparametrize, slice_F, total_F,
                              velocity_norm)
from .errors import BranchTransError, ConvergenceError, PropertyFailure, PreconditionError, ThresholdError
from .exact_ot import assert_acyclic_support, solve_kantorovich
from .geometry import CellWeights, DomainBox, instance_from_dict, instance_to_dict, load_json, save_json
from .sampling import random_instance, random_lattice_plan, random_measure, random_slice, trial_rng
from .traffic_plans import energy_C, energy_E, plan_from_dict, plan_to_dict

THREADS_ENV = "BRANCHTRANS_THREADS"
EXIT_OK, EXIT_INPUT, EXIT_PROPERTY, EXIT_CONVERGENCE = 0, 2, 3, 4


@dataclass
class ExperimentConfig:
    command: str
    input: str | None = None
    alpha: float = 0.5
    alphas: tuple[float, ...] = ()
    p: float | None = None
    j_min: int = 0
    j_max: int = 5
    grid: int = 256
    mode: str = "enumerate"
    seed: int = 0
    trials: int = 100
    out: str | None = None
    dim: int = 2
    probe: bool = False
    inject_broken_slice: bool = False

    def __post_init__(self):
        for a in self.alphas or (self.alpha,):
            if not 0 < a <= 1:
                raise PreconditionError(f"alpha must lie in (0, 1], got {a}")
        if self.j_min < 0 or self.j_max < self.j_min:
            raise PreconditionError("need 0 <= j-min <= j-max")
        if self.grid < 1:
            raise PreconditionError("grid size must be >= 1")


def _threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def ordered_map(fn: Callable, items: Sequence) -> list:
    """Map preserving input order, optionally threaded."""
    n = _threads()
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _num(x: float):
    return x if math.isfinite(x) else repr(x)


def _emit(report: dict, out: str | None, name: str) -> None:
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / name).write_text(text + "\n")


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def _write_csv(body: str, out: str | None, name: str) -> None:
    """CSV bodies are deterministic; the timestamp lives in one comment line."""
    if not out:
        return
    Path(out).mkdir(parents=True, exist_ok=True)
    stamp = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    (Path(out) / name).write_text(f"# generated {stamp}\n" + body)


def read_csv_report(path: str | Path) -> list[dict]:
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _load_instance(path: str | None):
    if not path:
        raise PreconditionError("--input is required")
    return instance_from_dict(load_json(path))


# -- commands -------------------------------------------------------------------

def run_distance(cfg: ExperimentConfig) -> dict:
    mu0, mu1 = _load_instance(cfg.input)
    res = compute_dalpha(mu0, mu1, cfg.alpha, cfg.mode)
    lower = dalpha_lower_bound(mu0, mu1, cfg.alpha)
    path_F = total_F(plan_to_path(res.plan(), cfg.grid), cfg.alpha)
    g = res.graph
    report = {
        "alpha": cfg.alpha,
        "mode": cfg.mode,
        "dalpha": res.value,
        "exact": res.exact,
        "w_lower": lower,
        "w_exponent": 1.0 / cfg.alpha,
        "path_F": path_F,
        "edges": [{"tail": g.vertices[a].tolist(), "head": g.vertices[b].tolist(), "flux": float(f),
                   "length": float(ell)} for (a, b), f, ell in zip(g.edges.tolist(), g.flux, g.lengths())],
    }
    if res.exact and abs(path_F - res.value) > 1e-6 * max(1.0, res.value):
        raise PropertyFailure(f"path energy {path_F!r} disagrees with d_alpha {res.value!r}")
    if cfg.out:
        Path(cfg.out).mkdir(parents=True, exist_ok=True)
        write_graph_csv(g, Path(cfg.out) / "graph.csv")
    _emit(report, cfg.out, "distance.json")
    return report


def run_bounds(cfg: ExperimentConfig) -> dict:
    mu0, mu1 = _load_instance(cfg.input)
    p = cfg.p if cfg.p is not None else 1.0 / cfg.alpha
    rep = sandwich_report(mu0, mu1, cfg.alpha, p, (cfg.j_min, cfg.j_max))
    report = rep.to_dict()
    rows = [[r.j, r.upper_mu0, r.upper_mu1, r.middle, r.route, r.rhs] for r in rep.records]
    _write_csv(_csv_text(["j", "upper_mu0", "upper_mu1", "middle", "route", "rhs"], rows), cfg.out, "bounds.csv")
    _emit(report, cfg.out, "bounds.json")
    return report


def _dyadic_measure(cfg: ExperimentConfig):
    if cfg.input:
        mu0, _ = _load_instance(cfg.input)
        return mu0
    return CellWeights.lebesgue(DomainBox(cfg.dim))


def run_dyadic(cfg: ExperimentConfig) -> dict:
    mu = _dyadic_measure(cfg)
    d, L = mu.box.dim, mu.box.edge
    alphas = cfg.alphas or (cfg.alpha,)
    levels = list(range(cfg.j_min, cfg.j_max + 1))
    rows, slopes = [], {}
    for a in alphas:
        costs = []
        for j in levels:
            try:
                rhs = dyadic_rhs_bound(d, a, L, j)
            except ThresholdError:
                if not cfg.probe:
                    raise
                rhs = math.nan
            if cfg.probe:
                cost = dyadic_truncated_cost(mu, j, a, 0)
            else:
                cost = dyadic_upper_bound(mu, j, a)
            costs.append(cost)
            rows.append([a, j, cost, rhs, cost / rhs if rhs == rhs else math.nan,
                         "below_threshold" if rhs != rhs else "ok"])
        usable = [(j, c) for j, c in zip(levels, costs) if c > 0]
        if len(usable) >= 2:
            slopes[repr(a)] = log2_slope(*zip(*usable))
    body = _csv_text(["alpha", "j", "cost", "rhs", "ratio", "status"], rows)
    _write_csv(body, cfg.out, "dyadic.csv")
    report = {"mode": "probe" if cfg.probe else "bound", "dim": d, "L": L,
              "rows": [dict(zip(["alpha", "j", "cost", "rhs", "ratio", "status"], [_num(v) if isinstance(v, float)
                                                                                    else v for v in r]))
                       for r in rows],
              "log2_slopes": slopes,
              "all_within_bound": bool(all(r[4] <= 1.0 + 1e-12 for r in rows if r[4] == r[4]))}
    _emit(report, cfg.out, "dyadic.json")
    return report


def run_energies(cfg: ExperimentConfig) -> dict:
    if not cfg.input:
        raise PreconditionError("--input is required")
    data = load_json(cfg.input)
    if "curves" in data:
        Q = plan_from_dict(data)
    else:
        mu0, mu1 = instance_from_dict(data)
        Q = compute_dalpha(mu0, mu1, cfg.alpha, cfg.mode).plan()
    path = plan_to_path(Q, cfg.grid)
    report = {"alpha": cfg.alpha, "E": energy_E(Q, cfg.alpha), "C": energy_C(Q, cfg.alpha),
              "path_F": _num(total_F(path, cfg.alpha)), "grid_nodes": len(path.times)}
    _emit(report, cfg.out, "energies.json")
    return report


def _broken_slice() -> TimeSlice:
    return TimeSlice(0.5, np.array([[0.0, 0.0], [1.0, 0.0]]), np.array([1.0, 0.0]),
                     np.array([[0.0, 0.0], [1.0, 0.0]]))


def _verify_trial(cfg: ExperimentConfig, trial: int) -> dict[str, tuple[bool, dict | None]]:
    rng = trial_rng(cfg.seed, trial)
    a = cfg.alpha
    out: dict[str, tuple[bool, dict | None]] = {}

    s = _broken_slice() if (cfg.inject_broken_slice and trial == 0) else random_slice(rng)
    f, vn, qm = slice_F(s, a), velocity_norm(s, 1.0 / a), momentum_mass(s)
    ok = math.isfinite(f) and f >= vn * (1 - 1e-12) and vn >= qm * (1 - 1e-12)
    out["slice_inequalities"] = (ok, {"slice": {"x": s.positions.tolist(), "m": s.masses.tolist(),
                                                "v": s.velocities.tolist()}, "F": _num(f)})

    Q = random_lattice_plan(rng)
    e, c = energy_E(Q, a), energy_C(Q, a)
    out["E_le_C"] = (e <= c + 1e-9, {"plan": plan_to_dict(Q), "E": e, "C": c})

    path = plan_to_path(Q, 16)
    f0 = total_F(path, a)
    f1 = total_F(reparametrize(path, lambda t: t * t), a)
    out["reparametrization"] = (abs(f1 - f0) <= 1e-9, {"plan": plan_to_dict(Q), "F": f0, "F_reparam": f1})

    n = int(rng.choice([4, 16]))
    m0, m1 = random_measure(rng, n), random_measure(rng, n)
    sol = solve_kantorovich(m0, m1, 1.0 / a)
    out["acyclic_support"] = (assert_acyclic_support(sol), {"instance": instance_to_dict(m0, m1)})

    i0, i1 = random_instance(rng, 3)
    lo = dalpha_lower_bound(i0, i1, a)
    up = compute_dalpha(i0, i1, a).value
    out["sandwich"] = (lo <= up + 1e-9, {"instance": instance_to_dict(i0, i1), "lower": lo, "dalpha": up})
    return out


def run_verify(cfg: ExperimentConfig) -> dict:
    if cfg.trials <= 0:
        raise PreconditionError("verify needs at least one trial")
    results = ordered_map(lambda t: _verify_trial(cfg, t), list(range(cfg.trials)))
    names = list(results[0])
    summary = {}
    failures = []
    for name in names:
        passed = sum(1 for r in results if r[name][0])
        summary[name] = {"passed": passed, "trials": cfg.trials}
        for t, r in enumerate(results):
            if not r[name][0]:
                failures.append({"property": name, "trial": t, "data": r[name][1]})
    report = {"seed": cfg.seed, "trials": cfg.trials, "alpha": cfg.alpha, "properties": summary,
              "all_passed": not failures, "failures": [{"property": f["property"], "trial": f["trial"]}
                                                       for f in failures]}
    if failures and cfg.out:
        Path(cfg.out).mkdir(parents=True, exist_ok=True)
        for f in failures:
            save_json(f, Path(cfg.out) / f"failure_{f['property']}_{f['trial']}.json")
    _emit(report, cfg.out, "verify.json")
    if failures:
        raise PropertyFailure(f"{len(failures)} property check(s) failed")
    return report


COMMANDS = {"distance": run_distance, "bounds": run_bounds, "dyadic": run_dyadic, "energies": run_energies,
            "verify": run_verify}


def _alpha_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad alpha list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="branchtrans", description="Branched transport experiments.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--input")
    ap.add_argument("--alpha", type=_alpha_list, default=(0.5,),
                    help="exponent in (0, 1]; dyadic accepts a comma-separated list")
    ap.add_argument("--p", type=float)
    ap.add_argument("--j-min", type=int, default=0)
    ap.add_argument("--j-max", type=int, default=5)
    ap.add_argument("--grid", type=int, default=256, help="time grid size K")
    ap.add_argument("--mode", choices=["enumerate", "heuristic"], default="enumerate")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--out")
    ap.add_argument("--dim", type=int, default=2, help="dimension of the Lebesgue measure for dyadic runs")
    ap.add_argument("--probe", action="store_true", help="dyadic divergence probe (truncated costs)")
    ap.add_argument("--inject-broken-slice", action="store_true", help=argparse.SUPPRESS)
    return ap


def config_from_args(argv: Sequence[str] | None = None) -> ExperimentConfig:
    ns = build_parser().parse_args(argv)
    alphas = ns.alpha
    if not alphas:
        raise PreconditionError("--alpha needs at least one value")
    return ExperimentConfig(command=ns.command, input=ns.input, alpha=alphas[0],
                            alphas=alphas if len(alphas) > 1 else (), p=ns.p, j_min=ns.j_min, j_max=ns.j_max,
                            grid=ns.grid, mode=ns.mode, seed=ns.seed, trials=ns.trials, out=ns.out, dim=ns.dim,
                            probe=ns.probe, inject_broken_slice=ns.inject_broken_slice)


def main(argv: Sequence[str] | None = None) -> int:
    try:
        cfg = config_from_args(argv)
        COMMANDS[cfg.command](cfg)
    except PropertyFailure as exc:
        print(f"property failure: {exc}", file=sys.stderr)
        return EXIT_PROPERTY
    except ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (PreconditionError, BranchTransError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
