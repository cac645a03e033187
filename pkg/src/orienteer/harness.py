"""Solver dispatch, run reports, re-simulation, benchmark tables and calibration."""
from __future__ import annotations

import json
import math
import os
import random
import statistics
import time
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Optional

from .deadline import (DeadlineInputError, bicriteria_round, solve_deadline_dbl, solve_deadline_tw)
from .decomposition import (build_gamma_split_tree, check_tree, fit_separation_constant, make_params,
                            separation_frequencies, binomial_margin)
from .doubling import DoublingSolver, SolverConfig
from .generators import generate
from .instance import Instance, num_in, num_out
from .metric import MetricError, MetricInstance, build_metric, diameter
from .oracle import exact_deadline, exact_kstroll, exact_p2p, on_time_count, start_counts
from .paths import Walk, jump_size_for, mu_excess
from .treewidth import TwSolver, heuristic_tree_decomposition, validate_tree_decomposition

SEED_ENV = "ORIENTEER_SEED"
COMMANDS = ("kstroll", "p2p", "deadline", "exact-kstroll", "exact-p2p", "exact-deadline")


class InputError(ValueError):
    pass


class Infeasible(ValueError):
    pass


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV, "0")
    try:
        return int(raw)
    except ValueError:
        raise InputError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _node(inst: Instance, raw) -> Any:
    if raw is None:
        return None
    for v in inst.nodes:
        if v == raw or str(v) == str(raw):
            return v
    raise InputError(f"unknown node {raw!r}")


def _walk_json(m: MetricInstance, w: Walk, count_start: Optional[bool] = None) -> Dict[str, Any]:
    ids = m.node_ids
    out = {"walk": [ids[v] for v in w.vertices], "length": num_out(m.to_raw(w.length)),
           "distinct": w.distinct_count}
    if m.deadlines is not None:
        arr = w.arrival_times()
        out["arrivals"] = {str(ids[v]): num_out(m.to_raw(a)) for v, a in sorted(arr.items())}
        out["on_time"] = on_time_count(w, count_start)
    return out


def _load_path(inst: Instance, path) -> List[Any]:
    """A path given inline as node ids, or a JSON file holding a list or a report."""
    if isinstance(path, (list, tuple)):
        return [_node(inst, v) for v in path]
    data = json.loads(Path(path).read_text())
    if isinstance(data, dict):
        data = data.get("result", data).get("walk")
    if not isinstance(data, list):
        raise InputError(f"{path}: expected a list of node ids or a report with a walk")
    return [_node(inst, v) for v in data]


def solve(inst: Instance, command: str, k: Optional[int] = None, budget=None, budget_factor=None,
          start=None, end=None, eps: Fraction = Fraction(1, 2), solver: Optional[str] = None,
          mode: str = "exact-deadlines", gamma: Optional[int] = None, m_max: int = 4,
          seed: Optional[int] = None, oracle: bool = False, oracle_guess=None,
          kappa_prime: Optional[Fraction] = None, small_group_exhaustive: bool = True,
          exclude_endpoints: bool = False, timing: bool = False) -> Dict[str, Any]:
    """Run one command and return its report; raises Infeasible or InputError."""
    if command not in COMMANDS:
        raise InputError(f"unknown command {command!r}; choose from {', '.join(COMMANDS)}")
    seed = default_seed() if seed is None else seed
    eps = Fraction(eps)
    if not 0 < eps < 1:
        raise InputError("epsilon must lie in (0, 1)")
    if solver is None:
        solver = "tw" if inst.kind == "graph" and not command.startswith("exact") else "dbl"
    if command.startswith("exact"):
        solver = "oracle"
    if solver == "tw" and inst.kind != "graph":
        raise InputError("the treewidth solver needs an instance with an edge list")
    s = _node(inst, start if start is not None else inst.start) if (start is not None or inst.start is not None) \
        else inst.nodes[0]
    t = _node(inst, end if end is not None else inst.end) if (end is not None or inst.end is not None) else s
    need_dl = command in ("deadline", "exact-deadline")
    if need_dl and inst.deadlines is None:
        raise InputError(f"{command} needs deadlines in the instance")
    m = inst.metric(with_deadlines=need_dl)
    si, ti = m.index(s), m.index(t)
    config: Dict[str, Any] = {"epsilon": num_out(eps), "start": s, "seed": seed}
    report: Dict[str, Any] = {"instance": inst.id, "command": command, "solver": solver, "config": config,
                              "seed": seed, "oracle": None, "ratio": None}
    t0 = time.perf_counter()

    if command in ("kstroll", "exact-kstroll"):
        if k is None:
            raise InputError(f"{command} needs --k")
        config.update(k=k, end=t)
        if k > m.n:
            raise Infeasible(f"k={k} exceeds the {m.n} nodes of the instance")
        if command == "exact-kstroll":
            res = exact_kstroll(m, si, ti, k)
            w, certified = res.walk, True
        elif solver == "tw":
            r = TwSolver(inst.graph(), inst.tree_decomposition()).kstroll(s, t, k)
            w, certified = r.walk, r.certified
            config["width"] = r.info["width"]
        else:
            cfg = SolverConfig(eps=eps, gamma=gamma, seed=seed, kappa_prime=kappa_prime)
            r = DoublingSolver(m, cfg).kstroll(si, ti, k)
            w, certified = r.walk, r.certified
            config.update(gamma=r.info["gamma"], mu=r.info["mu"], tree=r.info["tree_stats"])
        if w is None:
            raise Infeasible("no walk meets the request")
        body = _walk_json(m, w)
        body.update(value=num_out(m.to_raw(w.length)), certified=certified)
        report["result"] = body
        if oracle and command != "exact-kstroll":
            o = exact_kstroll(m, si, ti, k)
            report["oracle"] = num_out(m.to_raw(o.value))
            report["ratio"] = num_out(w.length / o.value) if o.value else num_out(1)
            mu = jump_size_for(eps, "ceil")
            report["oracle_excess"] = num_out(m.to_raw(mu_excess(o.walk, min(mu, len(o.walk)))))
    elif command in ("p2p", "exact-p2p"):
        if budget is None and budget_factor is None:
            raise InputError(f"{command} needs --budget or --budget-factor")
        raw_b = num_in(budget) if budget is not None else m.to_raw(m.d(si, ti)) * num_in(budget_factor)
        config.update(budget=num_out(raw_b), end=t)
        B = m.from_raw(raw_b)
        if m.d(si, ti) > B:
            raise Infeasible("infeasible: budget is below the distance between the endpoints")
        if command == "exact-p2p":
            res = exact_p2p(m, si, ti, B, exclude_endpoints)
            w, prize, certified = res.walk, res.value, True
        elif solver == "tw":
            r = TwSolver(inst.graph(), inst.tree_decomposition()).p2p(s, t, B, exclude_endpoints)
            w, prize, certified = r.walk, r.prize, r.certified
            config["width"] = r.info["width"]
        else:
            cfg = SolverConfig(eps=eps, gamma=gamma, seed=seed, kappa_prime=kappa_prime,
                               exclude_endpoints=exclude_endpoints)
            r = DoublingSolver(m, cfg).p2p(si, ti, B)
            w, prize, certified = r.walk, r.prize, r.certified
            config.update(gamma=r.info["gamma"], mu=r.info["mu"], tree=r.info["tree_stats"])
        body = _walk_json(m, w)
        body.update(value=prize, prize=prize, certified=certified)
        report["result"] = body
        if oracle and command != "exact-p2p":
            o = exact_p2p(m, si, ti, B, exclude_endpoints)
            report["oracle"] = o.value
            report["ratio"] = num_out(Fraction(prize, o.value)) if o.value else num_out(1)
    else:
        count_start = start_counts(m, si)
        config.update(mode=mode, m_max=m_max, count_start=count_start)
        if command == "exact-deadline":
            res = exact_deadline(m, si, count_start)
            body = _walk_json(m, res.walk, count_start)
            body.update(value=res.value, count=res.value, certified=True)
            report["result"] = body
        else:
            known = _load_path(inst, oracle_guess) if oracle_guess is not None else None
            config["exact_small_groups"] = small_group_exhaustive
            if known is not None:
                config["oracle_guess"] = list(known)
            body, om = _deadline(inst, m, s, si, eps, solver, mode, gamma, m_max, seed, known,
                                 small_group_exhaustive, count_start, config)
            report["result"] = body
            if oracle:
                o = exact_deadline(om, si, count_start)
                report["oracle"] = o.value
                report["ratio"] = num_out(Fraction(body["count"], o.value)) if o.value else num_out(1)
    if timing:
        report["wall_time"] = round(time.perf_counter() - t0, 6)
    return report


def _deadline(inst, m, s, si, eps, solver, mode, gamma, m_max, seed, known, small, count_start, config):
    """Returns the result body and the metric the oracle should be compared on."""
    kp = None if known is None else [m.index(v) for v in known]
    if mode == "bicriteria":
        if solver == "tw":
            raise InputError("bicriteria mode runs on the doubling solver")
        rnd = bicriteria_round(m, eps)
        cfg = SolverConfig(eps=eps, gamma=gamma or 16, seed=seed)
        r = solve_deadline_dbl(rnd.metric, si, eps, cfg, m_max, kp, small, count_start, require_integral=False)
        body = _walk_json(m, Walk(m, r.walk.vertices), count_start)
        body.update(value=r.count, count=r.count, certified=r.certified,
                    violation=num_out(rnd.violation(r.walk)), lam=num_out(rnd.lam))
        config.update(gamma=r.info.get("gamma"), mu=r.info.get("mu"))
        return body, rnd.metric
    if mode != "exact-deadlines":
        raise InputError(f"unknown deadline mode {mode!r}")
    try:
        if solver == "tw":
            r = solve_deadline_tw(inst.graph(), inst.tree_decomposition(), s, inst.deadlines, eps, m_max,
                                  known, small, count_start)
        else:
            cfg = SolverConfig(eps=eps, gamma=gamma or 16, seed=seed)
            r = solve_deadline_dbl(m, si, eps, cfg, m_max, kp, small, count_start)
    except DeadlineInputError as exc:
        raise InputError(str(exc)) from None
    body = _walk_json(m, Walk(m, r.walk.vertices), count_start)
    body.update(value=r.count, count=r.count, certified=r.certified, claimed=r.claimed)
    config.update(mu=r.info.get("mu"), gamma=r.info.get("gamma"))
    return body, m


# ------------------------------------------------------------------ verify

def verify(report: Dict[str, Any], inst: Instance) -> List[str]:
    """Independent re-simulation of a report; returns the list of mismatches."""
    problems: List[str] = []
    res = report.get("result")
    if not res or "walk" not in res:
        return ["report carries no walk"]
    cmd = report.get("command", "")
    need_dl = "deadline" in cmd
    m = inst.metric(with_deadlines=need_dl)
    try:
        w = Walk(m, [m.index(_node(inst, v)) for v in res["walk"]])
    except (InputError, MetricError) as exc:
        return [str(exc)]
    cfg = report.get("config", {})
    if cfg.get("start") is not None and m.node_ids[w.first] != _node(inst, cfg["start"]):
        problems.append("walk does not start at the configured start")
    if cmd.endswith("kstroll") or cmd.endswith("p2p"):
        if cfg.get("end") is not None and m.node_ids[w.last] != _node(inst, cfg["end"]):
            problems.append("walk does not end at the configured end")
    length = m.to_raw(w.length)
    if num_in(res["length"]) != length:
        problems.append(f"length {res['length']} != recomputed {num_out(length)}")
    if res.get("distinct") != w.distinct_count:
        problems.append(f"distinct count {res.get('distinct')} != {w.distinct_count}")
    if cmd.endswith("kstroll") and w.distinct_count < int(cfg.get("k", 0)):
        problems.append("walk visits fewer than k distinct nodes")
    if cmd.endswith("p2p") and length > num_in(cfg["budget"]):
        problems.append("walk exceeds the budget")
    if need_dl and "violation" not in res:
        cs = cfg.get("count_start")
        cnt = on_time_count(w, cs)
        if res.get("count") != cnt:
            problems.append(f"on-time count {res.get('count')} != recomputed {cnt}")
    return problems


# ------------------------------------------------------------------ bench

def _success(report: Dict[str, Any], eps: Fraction) -> bool:
    cmd, res, o = report["command"], report["result"], report["oracle"]
    if o is None:
        return True
    if report["solver"] == "tw":
        return num_in(report["ratio"]) == 1
    if cmd == "kstroll":
        return num_in(res["length"]) <= num_in(o) + eps * num_in(report["oracle_excess"])
    if cmd == "p2p":
        return res["prize"] >= (1 - eps) * o and num_in(res["length"]) <= num_in(report["config"]["budget"])
    if cmd == "deadline":
        ok = res["count"] >= (1 - eps) * o
        if "violation" in res:
            ok = ok and num_in(res["violation"]) <= 1 + eps
        return ok
    return True


def _bench_cell(job) -> Dict[str, Any]:
    idx, cell, timing = job
    gen = dict(cell.get("params", {}))
    kind = cell["generator"]
    command = cell.get("command", "kstroll")
    query = dict(cell.get("query", {}))
    eps = num_in(query.pop("epsilon", "1/2"))
    seeds = cell.get("seeds", 10)
    seeds = list(range(seeds)) if isinstance(seeds, int) else list(seeds)
    ratios, times, wins = [], [], 0
    for sd in seeds:
        inst = generate(kind, sd, deadlines=command == "deadline", **gen)
        q = dict(query)
        lo = int(q.pop("k_min", 4))
        if q.get("k") == "random":
            n = len(inst.nodes)
            q["k"] = random.Random(f"bench-k|{inst.id}|{sd}").randint(min(lo, n), n)
        elif q.get("k") == "n":
            q["k"] = len(inst.nodes)
        t0 = time.perf_counter()
        rep = solve(inst, command, eps=eps, solver=cell.get("solver"), seed=sd, oracle=True, **q)
        times.append(time.perf_counter() - t0)
        ratios.append(num_in(rep["ratio"]))
        wins += _success(rep, eps)
    row = {"cell": idx, "generator": kind, "command": command, "solver": cell.get("solver") or "auto",
           "runs": len(seeds),
           "success_rate": round(wins / len(seeds), 6) if seeds else None,
           "mean_ratio": round(float(sum(ratios) / len(ratios)), 6) if ratios else None}
    if timing:
        row["mean_time"] = round(statistics.fmean(times), 4) if times else None
    return row


def bench(suite: Dict[str, Any], timing: bool = True, workers: int = 1) -> List[Dict[str, Any]]:
    """One row per suite cell: success rate, mean ratio and mean time across seeds.

    Cells may run in worker processes; rows come back in cell order either way.
    """
    jobs = [(i, cell, timing) for i, cell in enumerate(suite.get("cells", []))]
    if workers > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_bench_cell, jobs))
    return [_bench_cell(j) for j in jobs]


def rows_to_csv(rows: List[Dict[str, Any]]) -> str:
    import csv
    import io
    if not rows:
        return ""
    buf = io.StringIO()
    wr = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    wr.writeheader()
    wr.writerows(rows)
    return buf.getvalue()


# ------------------------------------------------------------------ calibrate

def family_metric(family: str, n: int, seed: int) -> MetricInstance:
    if family == "1d":
        return build_metric(coords=[[i] for i in range(n)])
    if family == "euclidean":
        rng = random.Random(f"calib|{n}|{seed}")
        pts = set()
        while len(pts) < n:
            pts.add((rng.randint(0, 20), rng.randint(0, 20)))
        return build_metric(coords=sorted(pts))
    if family == "uniform":
        return build_metric(matrix=[[0 if i == j else 1 for j in range(n)] for i in range(n)])
    raise InputError(f"unknown metric family {family!r}; choose 1d, euclidean or uniform")


def calibrate(family: str, n: int = 8, trials: int = 2000, seed: int = 0,
              metric: Optional[MetricInstance] = None) -> Dict[str, Any]:
    """Fit the separation constant on the whole vertex set with per-pair 3-sigma bands."""
    if trials < 100:
        raise InputError("calibration needs at least 100 trials")
    m = metric if metric is not None else family_metric(family, n, seed)
    verts = list(range(m.n))
    if m.n < 2:
        raise InputError("calibration needs at least two nodes")
    freqs = separation_frequencies(m, verts, trials, seed)
    diam = float(diameter(m, verts))
    fit = fit_separation_constant(m, verts, freqs)
    lo = hi = 0.0
    for (u, v), f in freqs.items():
        scale = diam / float(m.d(u, v))
        lo = max(lo, max(f - binomial_margin(f, trials), 0.0) * scale)
        hi = max(hi, min(f + binomial_margin(f, trials), 1.0) * scale)
    # a fresh batch must stay under the fitted bound up to sampling noise
    fresh = separation_frequencies(m, verts, trials, f"{seed}|holdout")
    worst = 0.0
    for (u, v), f in fresh.items():
        bound = min(fit * float(m.d(u, v)) / diam, 1.0)
        worst = max(worst, f - bound - binomial_margin(bound, trials))
    return {"family": family, "n": m.n, "trials": trials, "seed": seed, "pairs": len(freqs),
            "kappa_fit": round(fit, 6), "ci": [round(lo, 6), round(hi, 6)],
            "holdout_ok": worst <= 1e-12, "holdout_excess": round(max(worst, 0.0), 6),
            "kappa_prime": num_out(Fraction(math.ceil(hi * 1000), 1000))}


def load_kappa_prime(path) -> Optional[Fraction]:
    if path is None:
        return None
    data = json.loads(Path(path).read_text())
    if "kappa_prime" not in data:
        raise InputError(f"{path}: no kappa_prime entry")
    return num_in(data["kappa_prime"])


# ------------------------------------------------------------------ decompose

def decompose(inst: Instance, kind: str = "auto", gamma: Optional[int] = None, eps: Fraction = Fraction(1, 2),
              seed: int = 0, leaf_size: int = 3) -> Dict[str, Any]:
    if kind == "auto":
        kind = "td" if inst.kind == "graph" else "split-tree"
    if kind == "td":
        g = inst.graph()
        td = inst.tree_decomposition() or heuristic_tree_decomposition(g)
        problem = validate_tree_decomposition(g, td)
        return {"kind": "td", "width": td.width, "valid": problem is None, "violation": problem,
                **td.to_json()}
    if kind != "split-tree":
        raise InputError(f"unknown decomposition kind {kind!r}")
    m = inst.metric(with_deadlines=False)
    logn = max(1, math.ceil(math.log2(max(m.n, 2))))
    params = make_params(m, gamma or 3 * logn, leaf_size, eps, seed=seed)
    tree = build_gamma_split_tree(m, params)
    out = tree.to_json()
    out.update(kind="split-tree", stats=tree.stats(), violations=check_tree(tree))
    return out


__all__ = ["solve", "verify", "bench", "calibrate", "decompose", "Infeasible", "InputError", "COMMANDS",
           "default_seed", "rows_to_csv", "load_kappa_prime", "family_metric"]
